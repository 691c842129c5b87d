//! 1-WL color refinement.
//!
//! Round `t` recolors unit `i` by the pair (own color, sorted multiset of
//! neighbor colors). Colors are canonical: the distinct signatures are sorted
//! and numbered densely in that order, so ids never depend on hashing.

use std::collections::BTreeMap;

use crate::error::{invalid, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    /// Dense color ids in `0..classes`.
    pub colors: Vec<usize>,
    /// Refinement rounds performed.
    pub iterations: usize,
    /// Whether the last round left the partition unchanged.
    pub stable: bool,
}

impl Coloring {
    pub fn classes(&self) -> usize {
        self.colors.iter().max().map_or(0, |m| m + 1)
    }

    /// Units per color id.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes()];
        for &c in &self.colors {
            h[c] += 1;
        }
        h
    }
}

/// Renumbers arbitrary ordered labels densely in sorted order.
pub fn canonical_labels<T: Ord + Clone>(labels: &[T]) -> Vec<usize> {
    let mut ids: BTreeMap<T, usize> = labels.iter().map(|l| (l.clone(), 0)).collect();
    for (k, v) in ids.values_mut().enumerate() {
        *v = k;
    }
    labels.iter().map(|l| ids[l]).collect()
}

/// Initial colors from scalar covariates: equal values share a color.
pub fn labels_from_covariates(x: &[f64]) -> Vec<usize> {
    let keys: Vec<u64> = x.iter().map(|v| (v + 0.0).to_bits()).collect();
    canonical_labels(&keys)
}

/// One refinement round.
pub fn wl_round(g: &Graph, colors: &[usize]) -> Vec<usize> {
    let signatures: Vec<(usize, Vec<usize>)> = (0..g.n())
        .map(|i| {
            let mut nbr: Vec<usize> = g.neighbors(i).iter().map(|&j| colors[j]).collect();
            nbr.sort_unstable();
            (colors[i], nbr)
        })
        .collect();
    canonical_labels(&signatures)
}

fn class_count(colors: &[usize]) -> usize {
    colors.iter().max().map_or(0, |m| m + 1)
}

/// Refines until a round leaves the partition unchanged or `max_iters`
/// rounds have run. A round can only split classes, so an unchanged class
/// count means an unchanged partition.
pub fn wl_refine(g: &Graph, initial_labels: &[usize], max_iters: usize) -> Result<Coloring> {
    if initial_labels.len() != g.n() {
        return Err(invalid("one initial label per unit required"));
    }
    let mut colors = canonical_labels(initial_labels);
    let mut iterations = 0;
    let mut stable = false;
    while iterations < max_iters {
        let next = wl_round(g, &colors);
        iterations += 1;
        stable = class_count(&next) == class_count(&colors);
        colors = next;
        if stable {
            break;
        }
    }
    Ok(Coloring {
        colors,
        iterations,
        stable,
    })
}

/// Rounds until the first round that leaves the partition unchanged.
pub fn iterations_to_convergence(g: &Graph, labels: &[usize]) -> Result<usize> {
    Ok(wl_refine(g, labels, g.n().max(1))?.iterations)
}

/// Whether `L` parallel rounds give the two labeled graphs different color
/// histograms. Both graphs are refined together so that ids are comparable.
pub fn wl_distinguish(g1: &Graph, labels1: &[usize], g2: &Graph, labels2: &[usize], rounds: usize) -> Result<bool> {
    if labels1.len() != g1.n() || labels2.len() != g2.n() {
        return Err(invalid("one initial label per unit required"));
    }
    let n1 = g1.n();
    let mut lists: Vec<Vec<usize>> = (0..n1).map(|i| g1.neighbors(i).to_vec()).collect();
    lists.extend((0..g2.n()).map(|i| g2.neighbors(i).iter().map(|&j| j + n1).collect()));
    let union = Graph::from_adjacency_lists(lists)?;
    let labels: Vec<usize> = labels1.iter().chain(labels2).copied().collect();
    let mut colors = canonical_labels(&labels);
    for _ in 0..rounds {
        colors = wl_round(&union, &colors);
    }
    let hist = |part: &[usize]| {
        let mut h = vec![0usize; class_count(&colors)];
        for &c in part {
            h[c] += 1;
        }
        h
    };
    Ok(hist(&colors[..n1]) != hist(&colors[n1..]))
}
