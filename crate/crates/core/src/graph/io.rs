//! Edge-list text format: one `i j` pair per line, 0-indexed, undirected,
//! each link listed once. Blank lines and lines starting with `#` are skipped.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use super::Graph;
use crate::error::{Error, Result};

/// Parses an edge list. `n` defaults to one past the largest label seen.
pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<Graph> {
    read_edge_list(text.as_bytes(), n)
}

pub fn read_edge_list<R: BufRead>(reader: R, n: Option<usize>) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    let mut max_label = None::<usize>;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let mut next = || -> Result<usize> {
            parts
                .next()
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: "expected two labels".into(),
                })?
                .parse()
                .map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("{e}"),
                })
        };
        let (i, j) = (next()?, next()?);
        if parts.next().is_some() {
            return Err(Error::Parse {
                line: line_no,
                msg: "trailing tokens".into(),
            });
        }
        if i == j {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("self-link {i}"),
            });
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate edge {i} {j}"),
            });
        }
        max_label = Some(max_label.map_or(i.max(j), |m| m.max(i).max(j)));
        edges.push((i, j));
    }
    let implied = max_label.map_or(0, |m| m + 1);
    let n = match n {
        Some(n) if n < implied => {
            return Err(Error::Parse {
                line: 0,
                msg: format!("label {} exceeds n = {n}", implied - 1),
            })
        }
        Some(n) => n,
        None => implied,
    };
    Graph::from_edges(n, &edges)
}

pub fn write_edge_list<W: Write>(g: &Graph, mut out: W) -> Result<()> {
    for (i, j) in g.edges() {
        writeln!(out, "{i} {j}")?;
    }
    Ok(())
}
