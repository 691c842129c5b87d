use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{EstimatorId, ReplicationRecord};
use crate::error::{Error, Result};
use crate::estimator::confidence_interval;

/// Summary of one estimator across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub estimator: String,
    pub n: usize,
    /// GNN depth; `None` for GLMs.
    pub depth: Option<usize>,
    pub replications: usize,
    /// Mean of `τ̂ − τ`.
    pub bias: f64,
    pub coverage_hac: f64,
    pub coverage_oracle: f64,
    pub coverage_iid: f64,
    pub mean_se_hac: f64,
    /// Standard deviation of `τ̂` across replications.
    pub se_oracle: f64,
    pub mean_se_iid: f64,
    pub mean_treated: f64,
}

fn covers(tau_hat: f64, se: f64, level: f64, truth: f64) -> bool {
    let (lo, hi) = confidence_interval(tau_hat, se, level);
    lo <= truth && truth <= hi
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        0.0
    } else {
        s / k as f64
    }
}

/// Rows in order of first appearance of each estimator label.
pub fn aggregate(records: &[ReplicationRecord], n: usize, true_tau: f64, level: f64) -> Vec<TableRow> {
    let mut labels: Vec<&str> = Vec::new();
    for r in records {
        if !labels.contains(&r.estimator.as_str()) {
            labels.push(&r.estimator);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let rs: Vec<&ReplicationRecord> = records.iter().filter(|r| r.estimator == label).collect();
            let k = rs.len();
            let m = mean(rs.iter().map(|r| r.tau_hat));
            let se_oracle = if k < 2 {
                0.0
            } else {
                (rs.iter().map(|r| (r.tau_hat - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
            };
            let share = |f: &dyn Fn(&ReplicationRecord) -> bool| rs.iter().filter(|r| f(r)).count() as f64 / k as f64;
            TableRow {
                estimator: label.to_string(),
                n,
                depth: EstimatorId::parse(label).and_then(|id| id.depth()),
                replications: k,
                bias: m - true_tau,
                coverage_hac: share(&|r| covers(r.tau_hat, r.hac_se, level, true_tau)),
                coverage_oracle: share(&|r| covers(r.tau_hat, se_oracle, level, true_tau)),
                coverage_iid: share(&|r| covers(r.tau_hat, r.iid_se, level, true_tau)),
                mean_se_hac: mean(rs.iter().map(|r| r.hac_se)),
                se_oracle,
                mean_se_iid: mean(rs.iter().map(|r| r.iid_se)),
                mean_treated: mean(rs.iter().map(|r| r.treated_count as f64)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    Markdown,
}

const COLUMNS: [&str; 12] = [
    "estimator",
    "n",
    "L",
    "replications",
    "bias",
    "coverage_hac",
    "coverage_oracle",
    "coverage_iid",
    "se_hac",
    "se_oracle",
    "se_iid",
    "treated_mean",
];

fn cells(row: &TableRow, digits: Option<usize>) -> Vec<String> {
    let num = |v: f64| match digits {
        Some(d) => format!("{v:.d$}"),
        None => v.to_string(),
    };
    vec![
        row.estimator.clone(),
        row.n.to_string(),
        row.depth.map(|d| d.to_string()).unwrap_or_default(),
        row.replications.to_string(),
        num(row.bias),
        num(row.coverage_hac),
        num(row.coverage_oracle),
        num(row.coverage_iid),
        num(row.mean_se_hac),
        num(row.se_oracle),
        num(row.mean_se_iid),
        num(row.mean_treated),
    ]
}

/// Renders rows as CSV (full precision) or as an aligned Markdown table
/// (four decimals). Empty input yields the header alone.
pub fn emit_table(rows: &[TableRow], format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COLUMNS).expect("in-memory write");
            for r in rows {
                w.write_record(cells(r, None)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
        }
        TableFormat::Markdown => {
            let body: Vec<Vec<String>> = rows.iter().map(|r| cells(r, Some(4))).collect();
            let widths: Vec<usize> = (0..COLUMNS.len())
                .map(|c| {
                    body.iter()
                        .map(|r| r[c].len())
                        .chain([COLUMNS[c].len(), 3])
                        .max()
                        .unwrap_or(3)
                })
                .collect();
            let line = |vals: Vec<String>| {
                let padded: Vec<String> = vals
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(c, (v, &w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                    .collect();
                format!("| {} |\n", padded.join(" | "))
            };
            let mut out = line(COLUMNS.iter().map(|s| s.to_string()).collect());
            let rule: Vec<String> = widths
                .iter()
                .enumerate()
                .map(|(c, &w)| {
                    if c == 0 {
                        "-".repeat(w)
                    } else {
                        format!("{}:", "-".repeat(w - 1))
                    }
                })
                .collect();
            out.push_str(&format!("| {} |\n", rule.join(" | ")));
            for r in body {
                out.push_str(&line(r));
            }
            out
        }
    }
}

pub fn write_records_csv<W: Write>(records: &[ReplicationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record([
            "seed",
            "replication",
            "estimator",
            "tau_hat",
            "hac_se",
            "iid_se",
            "b_n",
            "treated_count",
            "trained_epochs",
            "warnings",
        ])
        .map_err(csv_error)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ReplicationRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rep: usize, est: &str, tau: f64, hac: f64, iid: f64) -> ReplicationRecord {
        ReplicationRecord {
            seed: 1,
            replication: rep,
            estimator: est.into(),
            tau_hat: tau,
            hac_se: hac,
            iid_se: iid,
            b_n: 2,
            treated_count: 10 + rep,
            trained_epochs: 200,
            warnings: String::new(),
        }
    }

    #[test]
    fn hand_aggregate() {
        let recs = vec![
            record(0, "gnn_l2", 0.1, 0.2, 0.01),
            record(0, "glm_order_1", 1.0, 0.1, 0.1),
            record(1, "gnn_l2", -0.3, 0.1, 0.5),
        ];
        let rows = aggregate(&recs, 50, 0.0, 0.95);
        assert_eq!(rows.len(), 2);
        let g = &rows[0];
        assert_eq!((g.estimator.as_str(), g.depth, g.replications), ("gnn_l2", Some(2), 2));
        assert!((g.bias + 0.1).abs() < 1e-15);
        // sd of {0.1, -0.3} with k − 1 = 1
        assert!((g.se_oracle - 0.08f64.sqrt()).abs() < 1e-15);
        // rep 0 covered by HAC (0.1 ± 0.39), rep 1 not (−0.3 ± 0.196)
        assert_eq!(g.coverage_hac, 0.5);
        assert_eq!(g.coverage_iid, 0.5);
        assert_eq!(g.mean_treated, 10.5);
        assert_eq!(rows[1].depth, None);
        assert_eq!(rows[1].se_oracle, 0.0);
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(emit_table(&[], TableFormat::Csv).lines().count(), 1);
        assert_eq!(emit_table(&[], TableFormat::Markdown).lines().count(), 2);
    }

    #[test]
    fn markdown_columns_line_up() {
        let rows = aggregate(&[record(0, "gnn_l1", 0.25, 0.1, 0.1)], 10, 0.0, 0.95);
        let md = emit_table(&rows, TableFormat::Markdown);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 3);
        for l in &lines {
            assert_eq!(l.matches('|').count(), COLUMNS.len() + 1);
            assert_eq!(l.len(), lines[0].len());
        }
    }

    #[test]
    fn records_round_trip() {
        let mut recs = vec![record(0, "gnn_l2", 0.1 + 0.2, 1.0 / 3.0, 2e-17)];
        recs[0].warnings = "a, \"b\"; c".into();
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        assert_eq!(read_records_csv(buf.as_slice()).unwrap(), recs);
        let mut buf = Vec::new();
        write_records_csv(&[], &mut buf).unwrap();
        assert!(read_records_csv(buf.as_slice()).unwrap().is_empty());
    }
}
