//! Random enumerable models for property checks.

use rand::Rng;

use super::{DiscreteDgp, OutcomeRule, SelectionRule, Support};
use crate::dgp::{OutcomeParams, SelectionParams, COVARIATE_SUPPORT};
use crate::error::{invalid, Result};
use crate::exposure::ExposureSpec;
use crate::graph::Graph;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    /// Outcomes depend on treatments within radius `k` (0 or 1) only;
    /// selection is the full game with endogenous peer effects.
    ExactInterference { k: usize },
    /// Each `D_i` depends on `ν_i` alone; outcomes have unrestricted
    /// linear-in-means interference.
    IndependentTreatments,
}

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub dgp: DiscreteDgp,
    pub treatment: ExposureSpec,
    pub control: ExposureSpec,
    /// Radius the control exposure pins down.
    pub k: usize,
}

/// Connected graph: a random recursive tree plus independent extra edges.
fn connected_graph(n: usize, rng: &mut StreamRng) -> Result<Graph> {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.25) && !edges.contains(&(a, b)) {
                edges.push((a, b));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

fn two_point(rng: &mut StreamRng, spread: f64) -> Result<Support> {
    let lo = -rng.random_range(0.2..spread);
    let hi = rng.random_range(0.2..spread);
    let p = rng.random_range(0.2..0.8);
    Support::new(vec![lo, hi], vec![p, 1.0 - p])
}

fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Draws a model on `n` units (2..=6) together with a treatment/control
/// exposure pair suited to `kind`.
pub fn random_instance(kind: InstanceKind, n: usize, rng: &mut StreamRng) -> Result<RandomInstance> {
    if !(2..=6).contains(&n) {
        return Err(invalid("random instances use 2..=6 units"));
    }
    let graph = connected_graph(n, rng)?;
    let x = (0..n)
        .map(|_| COVARIATE_SUPPORT[rng.random_range(0..COVARIATE_SUPPORT.len())])
        .collect();
    let eps = (0..n).map(|_| two_point(rng, 2.0)).collect::<Result<Vec<_>>>()?;
    let nu = (0..n).map(|_| two_point(rng, 3.0)).collect::<Result<Vec<_>>>()?;

    let mut sel = SelectionParams {
        alpha: uniform(rng, -0.5, 0.5),
        beta: uniform(rng, -2.0, 2.0),
        delta: uniform(rng, -1.0, 1.0),
        gamma: uniform(rng, -1.0, 1.0),
        shock_spillover: uniform(rng, 0.0, 1.0),
    };
    let mut out = OutcomeParams {
        alpha: uniform(rng, -1.0, 1.0),
        beta: 0.0,
        delta: uniform(rng, -2.0, 2.0),
        gamma: uniform(rng, -2.0, 2.0),
        shock_spillover: uniform(rng, 0.0, 1.0),
        direct: uniform(rng, -2.0, 2.0),
        spillover: uniform(rng, -2.0, 2.0),
    };
    let untreated_nbrs = |d| ExposureSpec::new(d, (0.0, 0.0), (1.0, f64::INFINITY));
    let k = match kind {
        InstanceKind::ExactInterference { k } if k <= 1 => k,
        InstanceKind::ExactInterference { .. } => return Err(invalid("exact interference radius must be 0 or 1")),
        InstanceKind::IndependentTreatments => 1,
    };
    let (treatment, control) = if k == 0 {
        (ExposureSpec::own_treatment(1), ExposureSpec::own_treatment(0))
    } else if rng.random_bool(0.5) {
        (untreated_nbrs(1)?, untreated_nbrs(0)?)
    } else {
        (
            ExposureSpec::new(0, (1.0, f64::INFINITY), (1.0, f64::INFINITY))?,
            untreated_nbrs(0)?,
        )
    };
    match kind {
        InstanceKind::ExactInterference { k } => {
            if k == 0 {
                out.spillover = 0.0;
            }
        }
        InstanceKind::IndependentTreatments => {
            sel.beta = 0.0;
            sel.shock_spillover = 0.0;
            out.beta = uniform(rng, -0.9, 0.9);
        }
    }
    let dgp = DiscreteDgp::new(
        graph,
        x,
        eps,
        nu,
        SelectionRule::Game {
            params: sel,
            max_iter: 100,
        },
        OutcomeRule::LinearInMeans(out),
    )?;
    Ok(RandomInstance {
        dgp,
        treatment,
        control,
        k,
    })
}
