use serde::Serialize;

use super::{Graph, UNREACHABLE};
use crate::error::{Error, Result};

/// Degree and path-length summaries of a graph.
#[derive(Debug, Clone, Serialize)]
pub struct GraphStats {
    pub n: usize,
    pub edges: usize,
    /// `δ(A)`: mean degree.
    pub avg_degree: f64,
    /// `L(A)`: mean path distance over ordered pairs of distinct units in the
    /// largest component. `None` when that component is a single unit.
    pub avg_path_length: Option<f64>,
    /// Sum of path distances over ordered pairs in the largest component.
    pub path_length_sum: u64,
    /// Sorted units of the largest component. Equal sizes resolve to the
    /// component holding the smallest label.
    pub largest_component: Vec<usize>,
    pub components: usize,
    pub diameter: u32,
    /// `degree_histogram[k]` counts units of degree `k`.
    pub degree_histogram: Vec<usize>,
}

impl GraphStats {
    pub(super) fn compute(g: &Graph) -> Self {
        let n = g.n();
        let mut label = vec![usize::MAX; n];
        let mut components = 0;
        let mut best: Vec<usize> = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut members = vec![start];
            label[start] = components;
            let mut head = 0;
            while head < members.len() {
                let u = members[head];
                head += 1;
                for &v in g.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = components;
                        members.push(v);
                    }
                }
            }
            components += 1;
            // strict comparison keeps the earliest (smallest-label) component on ties
            if members.len() > best.len() {
                best = members;
            }
        }
        best.sort_unstable();

        let mut path_length_sum = 0u64;
        let mut diameter = 0u32;
        for &i in &best {
            for d in g.bfs_distances(i) {
                if d != UNREACHABLE {
                    path_length_sum += d as u64;
                    diameter = diameter.max(d);
                }
            }
        }
        let m = best.len();
        let avg_path_length = (m >= 2).then(|| path_length_sum as f64 / (m as f64 * (m as f64 - 1.0)));

        let max_degree = (0..n).map(|i| g.degree(i)).max().unwrap_or(0);
        let mut degree_histogram = vec![0; max_degree + 1];
        for i in 0..n {
            degree_histogram[g.degree(i)] += 1;
        }

        Self {
            n,
            edges: g.edge_count(),
            avg_degree: if n == 0 {
                0.0
            } else {
                2.0 * g.edge_count() as f64 / n as f64
            },
            avg_path_length,
            path_length_sum,
            largest_component: best,
            components,
            diameter,
            degree_histogram,
        }
    }

    /// `2 log n / log δ(A)`, the path-length cutoff separating the two
    /// bandwidth regimes. Infinite when `δ(A) ≤ 1`.
    pub fn bandwidth_threshold(&self) -> f64 {
        if self.avg_degree <= 1.0 {
            f64::INFINITY
        } else {
            2.0 * (self.n as f64).ln() / self.avg_degree.ln()
        }
    }

    /// Whether the `L(A)^{1/4}` branch of the bandwidth rule applies.
    pub fn polynomial_growth_regime(&self) -> Option<bool> {
        self.avg_path_length.map(|l| l >= self.bandwidth_threshold())
    }
}

/// HAC bandwidth `b_n = ⌈b̃⌉` with `b̃ = L(A)/4` when
/// `L(A) < 2 log n / log δ(A)` and `b̃ = L(A)^{1/4}` otherwise.
pub fn hac_bandwidth(g: &Graph) -> Result<usize> {
    let stats = g.stats();
    if stats.avg_degree <= 1.0 {
        return Err(Error::BandwidthUndefined {
            avg_degree: stats.avg_degree,
        });
    }
    let l = stats.avg_path_length.ok_or(Error::BandwidthUndefined {
        avg_degree: stats.avg_degree,
    })?;
    let raw = if l < stats.bandwidth_threshold() {
        l / 4.0
    } else {
        l.powf(0.25)
    };
    Ok(raw.ceil() as usize)
}
