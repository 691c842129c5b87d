use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use netcausal::autodiff::Matrix;
use netcausal::estimator::{estimate, EstimatorConfig, NuisanceModel};
use netcausal::gnn::GnnConfig;
use netcausal::graph::{hac_bandwidth, read_edge_list, Graph};
use netcausal::harness::{
    emit_table, run_experiment_with_progress, write_records_csv, ExperimentConfig, GraphModel, TableFormat,
};
use netcausal::oracle::{
    exact_tau, random_instance, verify_neighborhood_decomposition, verify_remainder_decomposition, InstanceKind,
};
use netcausal::rng::stream;
use netcausal::wl::{iterations_to_convergence, labels_from_covariates, wl_refine};

#[derive(Parser)]
#[command(
    name = "netcausal",
    version,
    about = "Network causal inference with GNN nuisance models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Markdown => TableFormat::Markdown,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Gnn,
    Glm,
}

#[derive(Clone, Copy, ValueEnum)]
enum RandomGraph {
    Er,
    Rgg,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and print the summary table.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the configured replication count.
        #[arg(long)]
        replications: Option<usize>,
        /// Per-replication CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
    },
    /// Estimate τ(t, t') on one dataset.
    Estimate {
        /// Edge list, one `i j` pair per line.
        #[arg(long)]
        edges: PathBuf,
        /// CSV with columns `x`, `d`, `y`, one row per unit in label order.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "gnn")]
        model: ModelKind,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long)]
        epochs: Option<usize>,
        /// Fixed HAC bandwidth instead of the default rule.
        #[arg(long)]
        bandwidth: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-unit contributions CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the identification decompositions on random enumerable models.
    Oracle {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        units: usize,
    },
    /// 1-WL refinement report.
    Wl {
        #[arg(long)]
        edges: PathBuf,
        /// Optional CSV with an `x` column giving initial labels.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Degree, path-length and bandwidth statistics.
    GraphStats {
        #[arg(long, conflicts_with = "random")]
        edges: Option<PathBuf>,
        /// Draw a graph instead of reading one.
        #[arg(long, value_enum)]
        random: Option<RandomGraph>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 5.0)]
        kappa: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the default experiment configuration.
    PrintConfig,
}

fn read_graph(path: &Path, n: Option<usize>) -> Result<Graph> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_edge_list(BufReader::new(f), n)?)
}

#[derive(serde::Deserialize)]
struct UnitRow {
    x: f64,
    #[serde(default)]
    d: Option<u8>,
    #[serde(default)]
    y: Option<f64>,
}

fn read_units(path: &Path) -> Result<Vec<UnitRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<UnitRow>, _>>()
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(rows)
}

fn simulate(
    config: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    replications: Option<usize>,
    out: Option<PathBuf>,
    format: Format,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::from_toml(
            &std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.design.seed = s;
    }
    if let Some(w) = workers {
        cfg.design.workers = w;
    }
    if let Some(r) = replications {
        cfg.design.replications = r;
    }
    let step = (cfg.design.replications / 20).max(1);
    let result = run_experiment_with_progress(&cfg, &|done, total| {
        if done % step == 0 || done == total {
            eprintln!("{done}/{total} replications");
        }
    })?;
    for f in &result.failures {
        eprintln!("replication {} failed: {}", f.replication, f.message);
    }
    if let Some(p) = out {
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        write_records_csv(&result.records, BufWriter::new(f))?;
    }
    let fractions = &result.treated_fractions;
    eprintln!(
        "mean treated fraction {:.4}; {} failed; {} without a selection fixed point",
        fractions.iter().sum::<f64>() / fractions.len().max(1) as f64,
        result.failures.len(),
        result.selection_nonconverged
    );
    print!("{}", emit_table(&result.rows, format.into()));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn estimate_cmd(
    edges: PathBuf,
    data: PathBuf,
    model: ModelKind,
    depth: usize,
    order: usize,
    epochs: Option<usize>,
    bandwidth: Option<usize>,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let units = read_units(&data)?;
    let g = read_graph(&edges, Some(units.len()))?;
    let x: Vec<f64> = units.iter().map(|u| u.x).collect();
    let d: Vec<u8> = units
        .iter()
        .enumerate()
        .map(|(i, u)| u.d.with_context(|| format!("row {i}: missing d")))
        .collect::<Result<_>>()?;
    let y: Vec<f64> = units
        .iter()
        .enumerate()
        .map(|(i, u)| u.y.with_context(|| format!("row {i}: missing y")))
        .collect::<Result<_>>()?;
    let nuisance = match model {
        ModelKind::Gnn => {
            let mut c = GnnConfig {
                depth,
                ..GnnConfig::default()
            };
            if let Some(e) = epochs {
                c.train.epochs = e;
            }
            NuisanceModel::Gnn(c)
        }
        ModelKind::Glm => NuisanceModel::Glm { order },
    };
    let mut cfg = EstimatorConfig::own_treatment(nuisance);
    cfg.bandwidth = bandwidth;
    let r = estimate(&g, &Matrix::column(&x), &d, &y, &cfg, seed, 0, 0)?;
    println!("tau_hat          {:.6}", r.tau_hat);
    println!("hac_se           {:.6}", r.hac_se);
    println!("iid_se           {:.6}", r.iid_se);
    println!("bandwidth        {}", r.bandwidth);
    println!("ci_hac           [{:.6}, {:.6}]", r.ci_lo, r.ci_hi);
    println!("ci_iid           [{:.6}, {:.6}]", r.iid_ci_lo, r.iid_ci_hi);
    println!("treated          {}", r.treated_count);
    println!("exposure_counts  {} / {}", r.exposure_counts.0, r.exposure_counts.1);
    println!("trimmed          {}", r.trimmed);
    println!("overlap          {:?}", r.overlap_histogram);
    for w in &r.warnings {
        println!("warning          {w}");
    }
    if let Some(p) = out {
        let mut w = BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?);
        writeln!(w, "unit,contribution")?;
        for (i, c) in r.contributions.iter().enumerate() {
            writeln!(w, "{i},{c}")?;
        }
    }
    Ok(())
}

fn oracle_cmd(instances: usize, seed: u64, units: usize) -> Result<()> {
    let mut worst = [0.0f64; 2];
    println!("instance kind               n  tau            residual");
    for k in 0..instances {
        let kind = if k % 2 == 0 {
            InstanceKind::ExactInterference { k: (k / 2) % 2 }
        } else {
            InstanceKind::IndependentTreatments
        };
        let mut rng = stream(seed, k as u64);
        let inst = random_instance(kind, units, &mut rng)?;
        let (t, tp) = (&inst.treatment, &inst.control);
        let tau = match exact_tau(&inst.dgp, t, tp) {
            Ok(r) => r.tau,
            Err(e) => {
                println!("{k:<8} {kind:<18?} skipped: {e}");
                continue;
            }
        };
        let (slot, dec) = match kind {
            InstanceKind::ExactInterference { .. } => (0, verify_neighborhood_decomposition(&inst.dgp, t, tp, inst.k)?),
            InstanceKind::IndependentTreatments => (1, verify_remainder_decomposition(&inst.dgp, t, tp, inst.k)?),
        };
        worst[slot] = worst[slot].max(dec.residual.abs());
        println!(
            "{k:<8} {:<18} {units:>2}  {tau:>13.6e}  {:>10.3e}",
            format!("{kind:?}"),
            dec.residual
        );
    }
    println!(
        "max |residual|: neighborhood {:.3e}, remainder {:.3e}",
        worst[0], worst[1]
    );
    Ok(())
}

fn wl_cmd(edges: PathBuf, data: Option<PathBuf>, rounds: Option<usize>) -> Result<()> {
    let labels = match &data {
        Some(p) => {
            let x: Vec<f64> = read_units(p)?.iter().map(|u| u.x).collect();
            labels_from_covariates(&x)
        }
        None => Vec::new(),
    };
    let g = read_graph(&edges, (!labels.is_empty()).then_some(labels.len()))?;
    let labels = if labels.is_empty() { vec![0; g.n()] } else { labels };
    let max = rounds.unwrap_or(g.n().max(1));
    let c = wl_refine(&g, &labels, max)?;
    println!("units        {}", g.n());
    println!("rounds       {}", c.iterations);
    println!("stable       {}", c.stable);
    println!("converged_at {}", iterations_to_convergence(&g, &labels)?);
    println!("classes      {}", c.classes());
    let mut sizes = c.histogram();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    println!("class sizes  {sizes:?}");
    Ok(())
}

fn graph_stats_cmd(edges: Option<PathBuf>, random: Option<RandomGraph>, n: usize, kappa: f64, seed: u64) -> Result<()> {
    let g = match (edges, random) {
        (Some(p), _) => read_graph(&p, None)?,
        (None, Some(kind)) => {
            let model = match kind {
                RandomGraph::Er => GraphModel::Er,
                RandomGraph::Rgg => GraphModel::Rgg,
            };
            model.generate(n, kappa, &mut stream(seed, 0))?
        }
        (None, None) => bail!("pass --edges or --random"),
    };
    let s = g.stats();
    println!("n                 {}", s.n);
    println!("edges             {}", s.edges);
    println!("avg_degree        {:.6}", s.avg_degree);
    println!("components        {}", s.components);
    println!("largest_component {}", s.largest_component.len());
    println!("diameter          {}", s.diameter);
    match s.avg_path_length {
        Some(l) => println!("avg_path_length   {l:.6}"),
        None => println!("avg_path_length   undefined"),
    }
    println!("threshold         {:.6}", s.bandwidth_threshold());
    match hac_bandwidth(&g) {
        Ok(b) => println!("bandwidth         {b}"),
        Err(e) => println!("bandwidth         undefined ({e})"),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            config,
            seed,
            workers,
            replications,
            out,
            format,
        } => simulate(config, seed, workers, replications, out, format),
        Command::Estimate {
            edges,
            data,
            model,
            depth,
            order,
            epochs,
            bandwidth,
            seed,
            out,
        } => estimate_cmd(edges, data, model, depth, order, epochs, bandwidth, seed, out),
        Command::Oracle { instances, seed, units } => oracle_cmd(instances, seed, units),
        Command::Wl { edges, data, rounds } => wl_cmd(edges, data, rounds),
        Command::GraphStats {
            edges,
            random,
            n,
            kappa,
            seed,
        } => graph_stats_cmd(edges, random, n, kappa, seed),
        Command::PrintConfig => {
            io::stdout().write_all(ExperimentConfig::default().to_toml().as_bytes())?;
            Ok(())
        }
    }
}
