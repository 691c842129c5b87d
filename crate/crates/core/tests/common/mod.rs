//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use netcausal::autodiff::{Matrix, Tape, Var};
use netcausal::dgp::{simulate_outcomes, simulate_selection};
use netcausal::exposure::ExposureSpec;
use netcausal::oracle::{DiscreteDgp, OutcomeRule, SelectionRule};
use netcausal::rng::StreamRng;
use netcausal::Graph;
use rand::Rng;

pub const INF: u32 = u32::MAX;

/// All-pairs path distances by Floyd–Warshall on the dense adjacency matrix.
pub fn floyd_warshall(g: &Graph) -> Vec<Vec<u32>> {
    let n = g.n();
    let mut d = vec![vec![INF; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for &j in g.neighbors(i) {
            d[i][j] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == INF {
                continue;
            }
            for j in 0..n {
                if d[k][j] != INF && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// `(1/n) Σ_i Σ_j (c_i − c̄)(c_j − c̄) 1{ℓ(i,j) ≤ b}` over all `n²` pairs.
pub fn dense_hac(c: &[f64], g: &Graph, b: usize) -> f64 {
    let n = c.len();
    let mean = c.iter().sum::<f64>() / n as f64;
    let dist = floyd_warshall(g);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if dist[i][j] != INF && dist[i][j] as usize <= b {
                total += (c[i] - mean) * (c[j] - mean);
            }
        }
    }
    total / n as f64
}

/// Graph with each pair linked with probability `p`, drawn pair by pair.
pub fn bernoulli_graph(n: usize, p: f64, rng: &mut StreamRng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut StreamRng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
}

/// Worst relative disagreement between reverse-mode gradients and central
/// differences with step `h` for the scalar `Σ W ⊙ op(inputs)`, with `W`
/// drawn once from `rng`. Entries where both gradients are below `1e-10`
/// in magnitude count as agreeing.
pub fn gradient_check<F>(inputs: &[Matrix], h: f64, rng: &mut StreamRng, op: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let record = |vals: &[Matrix], w: Option<&Matrix>| -> (Tape, Vec<Var>, Var, Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|m| tape.param(m.clone())).collect();
        let out = op(&mut tape, &vars);
        let (r, c) = tape.shape(out);
        let wv = tape.constant(w.cloned().unwrap_or_else(|| Matrix::zeros(r, c)));
        let prod = tape.mul(out, wv);
        let loss = tape.sum(prod);
        (tape, vars, out, loss)
    };
    let shape = {
        let (t, _, out, _) = record(inputs, None);
        t.shape(out)
    };
    let w = random_matrix(shape.0, shape.1, -1.0, 1.0, rng);
    let value = |vals: &[Matrix]| {
        let (t, _, _, loss) = record(vals, Some(&w));
        t.value(loss).item()
    };

    let (tape, vars, _, loss) = record(inputs, Some(&w));
    let grads = tape.backward(loss);
    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v);
        for e in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data[e] += h;
            let mut minus = inputs.to_vec();
            minus[k].data[e] -= h;
            let numeric = (value(&plus) - value(&minus)) / (2.0 * h);
            let a = analytic.data[e];
            let scale = a.abs().max(numeric.abs());
            if scale < 1e-10 {
                continue;
            }
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}

/// `τ(t, t')` by a second enumerator: the outer loop runs over `ν` atoms in
/// reverse lexicographic order (first coordinate fastest), the inner loop
/// over `ε` atoms likewise, and potential outcomes come from the model's
/// simulators (best-response iteration, fixed-point outcome solve) rather
/// than the enumerator's direct linear solve.
pub fn dual_exact_tau(dgp: &DiscreteDgp, t: &ExposureSpec, tp: &ExposureSpec) -> Option<f64> {
    fn atoms(supports: &[netcausal::oracle::Support]) -> Vec<(f64, Vec<f64>)> {
        let mut out = vec![(1.0, Vec::new())];
        for s in supports {
            let mut next = Vec::new();
            for (v, p) in s.values().iter().zip(s.probs()) {
                for (q, prefix) in &out {
                    let mut vals = prefix.clone();
                    vals.push(*v);
                    next.push((q * p, vals));
                }
            }
            out = next;
        }
        out
    }
    let g = dgp.graph();
    let n = g.n();
    let nu = atoms(dgp.nu_supports());
    let eps = atoms(dgp.eps_supports());
    let mut cache: HashMap<Vec<u8>, Vec<f64>> = HashMap::new();
    let (mut pt, mut yt, mut ptp, mut ytp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for (pn, nu_v) in &nu {
        let d = match dgp.selection() {
            SelectionRule::Game { params, max_iter } => {
                simulate_selection(g, dgp.x(), nu_v, params, *max_iter).unwrap().d
            }
            SelectionRule::Custom(_) => dgp.treatments(nu_v).unwrap(),
        };
        let ey = cache
            .entry(d.clone())
            .or_insert_with(|| {
                let mut acc = vec![0.0; n];
                for (pe, e) in &eps {
                    let y = match dgp.outcome() {
                        OutcomeRule::LinearInMeans(p) => simulate_outcomes(g, dgp.x(), &d, e, p, 1e-14).unwrap(),
                        OutcomeRule::Custom(_) => dgp.outcomes(&d, e).unwrap(),
                    };
                    for (a, y) in acc.iter_mut().zip(y) {
                        *a += pe * y;
                    }
                }
                acc
            })
            .clone();
        for i in 0..n {
            let deg = g.degree(i);
            let treated = g.neighbors(i).iter().filter(|&&j| d[j] == 1).count();
            let hit = |s: &ExposureSpec| {
                d[i] == s.d
                    && s.gamma_lo <= deg as f64
                    && deg as f64 <= s.gamma_hi
                    && s.delta_lo <= treated as f64
                    && treated as f64 <= s.delta_hi
            };
            if hit(t) {
                pt[i] += pn;
                yt[i] += pn * ey[i];
            }
            if hit(tp) {
                ptp[i] += pn;
                ytp[i] += pn * ey[i];
            }
        }
    }
    let per: Vec<f64> = (0..n)
        .filter(|&i| pt[i] > 0.0 && ptp[i] > 0.0)
        .map(|i| yt[i] / pt[i] - ytp[i] / ptp[i])
        .collect();
    (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64)
}

/// Random permutation of `0..n`.
pub fn permutation(n: usize, rng: &mut StreamRng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Worst deviations found on one random (graph, X, model) triple.
#[derive(Debug, Clone, Copy)]
pub struct InvarianceReport {
    /// `max_i |f(π g, π X)_{π(i)} − f(g, X)_i|`.
    pub permutation: f64,
    /// `max_i |f(g, X)_i − f(g[N(i, L)], X[N(i, L)])_i|`.
    pub locality: f64,
    /// `max |f_i − f_j|` over pairs sharing a color after `L` WL rounds.
    pub wl: f64,
    /// Number of WL-equivalent pairs compared.
    pub wl_pairs: usize,
}

/// Draws a sparse random graph, discrete covariates and a randomly
/// initialized model of random architecture and depth, then measures the
/// three structural invariances of the network's output.
pub fn gnn_invariances(seed: u64) -> InvarianceReport {
    use netcausal::gnn::{AggregatorSet, Architecture, GnnConfig, GnnModel};
    use netcausal::wl::{labels_from_covariates, wl_refine};

    let mut rng = netcausal::rng::stream(seed, 0x6e6e);
    let n = rng.random_range(8..40);
    let g = bernoulli_graph(n, rng.random_range(1.5..4.0) / n as f64, &mut rng);
    let x: Vec<f64> = (0..n).map(|_| [0.0, 0.5, 1.0][rng.random_range(0..3)]).collect();
    let xm = Matrix::column(&x);
    let architecture = [Architecture::Gcn, Architecture::SumMlp, Architecture::Pna][rng.random_range(0..3)];
    let aggregators = [AggregatorSet::Basic, AggregatorSet::Scaled][rng.random_range(0..2)];
    let depth = rng.random_range(1..=3);
    let cfg = GnnConfig {
        depth,
        architecture,
        aggregators,
        first_width: rng.random_range(1..=8),
        hidden_width: rng.random_range(1..=3),
        ..GnnConfig::default()
    };
    let model = GnnModel::for_graph(cfg, &g, 1, &mut rng).unwrap();
    let out = model.raw_outputs(&g, &xm).unwrap();

    let perm = permutation(n, &mut rng);
    let gp = g.permute(&perm).unwrap();
    let mut xp = vec![0.0; n];
    for i in 0..n {
        xp[perm[i]] = x[i];
    }
    let outp = model.raw_outputs(&gp, &Matrix::column(&xp)).unwrap();
    let permutation_err = (0..n).map(|i| (outp[perm[i]] - out[i]).abs()).fold(0.0, f64::max);

    let mut locality = 0.0f64;
    for i in 0..n {
        let sub = g.induced_subgraph(&g.k_neighborhood(i, depth)).unwrap();
        let xs: Vec<f64> = sub.original.iter().map(|&u| x[u]).collect();
        let local = model.raw_outputs(&sub.graph, &Matrix::column(&xs)).unwrap();
        locality = locality.max((local[sub.local(i).unwrap()] - out[i]).abs());
    }

    let colors = wl_refine(&g, &labels_from_covariates(&x), depth).unwrap().colors;
    let (mut wl, mut wl_pairs) = (0.0f64, 0);
    for i in 0..n {
        for j in 0..i {
            if colors[i] == colors[j] {
                wl = wl.max((out[i] - out[j]).abs());
                wl_pairs += 1;
            }
        }
    }
    InvarianceReport {
        permutation: permutation_err,
        locality,
        wl,
        wl_pairs,
    }
}
