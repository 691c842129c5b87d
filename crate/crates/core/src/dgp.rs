//! Simulation of covariates, treatment selection and outcomes.
//!
//! Selection follows a binary game: unit `i` takes treatment when
//! `α + β·mean_nbr(D) + δ·mean_nbr(X) + γ·X_i + ν_i + mean_nbr(ν) > 0`,
//! equilibrium chosen by synchronous myopic best responses started from the
//! `β = 0` profile. Outcomes solve the linear-in-means system
//! `Y_i = α + β·mean_nbr(Y) + δ·mean_nbr(X) + γ·X_i + ε_i + mean_nbr(ε)`.
//! Neighbor means over an empty neighborhood are zero.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::rng::StreamRng;

/// Support of the covariate `X_i`, drawn uniformly.
pub const COVARIATE_SUPPORT: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionParams {
    pub alpha: f64,
    /// Endogenous peer effect of neighbors' treatments.
    pub beta: f64,
    /// Exogenous peer effect of neighbors' covariates.
    pub delta: f64,
    pub gamma: f64,
    /// Weight on the neighbors' mean shock. 1 in the simulation design; 0
    /// makes each `D_i` depend on `ν_i` alone.
    #[serde(default = "one")]
    pub shock_spillover: f64,
}

impl SelectionParams {
    pub const SIMULATION: Self = Self {
        alpha: -0.5,
        beta: 1.5,
        delta: 1.0,
        gamma: -1.0,
        shock_spillover: 1.0,
    };
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self::SIMULATION
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeParams {
    pub alpha: f64,
    /// Endogenous peer effect; `|beta| < 1` is required.
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub shock_spillover: f64,
    /// Coefficient on own treatment. Zero in the simulation design.
    #[serde(default)]
    pub direct: f64,
    /// Coefficient on the neighbors' mean treatment. Zero in the simulation design.
    #[serde(default)]
    pub spillover: f64,
}

impl OutcomeParams {
    pub const SIMULATION: Self = Self {
        alpha: 0.5,
        beta: 0.8,
        delta: 10.0,
        gamma: -1.0,
        shock_spillover: 1.0,
        direct: 0.0,
        spillover: 0.0,
    };
}

impl Default for OutcomeParams {
    fn default() -> Self {
        Self::SIMULATION
    }
}

/// Unit-level primitives `(X, ε, ν)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitives {
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    pub nu: Vec<f64>,
}

/// Draws `X` (all units), then `ε`, then `ν`, from one stream.
pub fn draw_primitives(n: usize, rng: &mut StreamRng) -> Result<Primitives> {
    if n == 0 {
        return Err(invalid("draw_primitives needs n >= 1"));
    }
    let x = (0..n)
        .map(|_| COVARIATE_SUPPORT[rng.random_range(0..COVARIATE_SUPPORT.len())])
        .collect();
    let eps = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let nu = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Primitives { x, eps, nu })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub d: Vec<u8>,
    /// Best-response rounds performed after the initial profile.
    pub iterations: usize,
    /// False when `max_iter` rounds passed without reaching a fixed point;
    /// `d` is then the last iterate.
    pub converged: bool,
}

/// Part of the selection index not involving other units' treatments.
pub fn selection_base_index(g: &Graph, x: &[f64], nu: &[f64], p: &SelectionParams) -> Vec<f64> {
    (0..g.n())
        .map(|i| {
            p.alpha
                + p.delta * g.neighbor_mean(x, i)
                + p.gamma * x[i]
                + nu[i]
                + p.shock_spillover * g.neighbor_mean(nu, i)
        })
        .collect()
}

/// Best response of unit `i` to the treatment profile `d`.
pub fn best_response(g: &Graph, base: &[f64], beta: f64, d: &[u8], i: usize) -> u8 {
    let nbrs = g.neighbors(i);
    let peer = if nbrs.is_empty() {
        0.0
    } else {
        nbrs.iter().map(|&j| d[j] as f64).sum::<f64>() / nbrs.len() as f64
    };
    u8::from(base[i] + beta * peer > 0.0)
}

pub fn simulate_selection(g: &Graph, x: &[f64], nu: &[f64], p: &SelectionParams, max_iter: usize) -> Result<Selection> {
    let n = g.n();
    if x.len() != n || nu.len() != n {
        return Err(invalid("covariate/shock length differs from n"));
    }
    if max_iter == 0 {
        return Err(invalid("max_iter must be at least 1"));
    }
    let base = selection_base_index(g, x, nu, p);
    let mut d: Vec<u8> = base.iter().map(|&b| u8::from(b > 0.0)).collect();
    let mut next = vec![0u8; n];
    for iter in 1..=max_iter {
        for (i, slot) in next.iter_mut().enumerate() {
            *slot = best_response(g, &base, p.beta, &d, i);
        }
        if next == d {
            return Ok(Selection {
                d,
                iterations: iter,
                converged: true,
            });
        }
        std::mem::swap(&mut d, &mut next);
    }
    Ok(Selection {
        d,
        iterations: max_iter,
        converged: false,
    })
}

/// Whether every unit already plays its best response in `d`.
pub fn is_stable_profile(g: &Graph, x: &[f64], nu: &[f64], p: &SelectionParams, d: &[u8]) -> bool {
    let base = selection_base_index(g, x, nu, p);
    (0..g.n()).all(|i| best_response(g, &base, p.beta, d, i) == d[i])
}

/// Right-hand side of the outcome equation without the `β·mean_nbr(Y)` term.
pub fn outcome_intercepts(g: &Graph, x: &[f64], d: &[u8], eps: &[f64], p: &OutcomeParams) -> Vec<f64> {
    let df: Vec<f64> = d.iter().map(|&v| v as f64).collect();
    (0..g.n())
        .map(|i| {
            p.alpha
                + p.delta * g.neighbor_mean(x, i)
                + p.gamma * x[i]
                + eps[i]
                + p.shock_spillover * g.neighbor_mean(eps, i)
                + p.direct * df[i]
                + p.spillover * g.neighbor_mean(&df, i)
        })
        .collect()
}

/// Solves the linear-in-means system by fixed-point iteration from zero,
/// stopping once the sup-norm change drops below `tol`.
pub fn simulate_outcomes(g: &Graph, x: &[f64], d: &[u8], eps: &[f64], p: &OutcomeParams, tol: f64) -> Result<Vec<f64>> {
    let n = g.n();
    if x.len() != n || d.len() != n || eps.len() != n {
        return Err(invalid("input length differs from n"));
    }
    if !(p.beta.abs() < 1.0) {
        return Err(invalid(format!(
            "outcome peer effect |beta| = {} must be < 1",
            p.beta.abs()
        )));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let c = outcome_intercepts(g, x, d, eps, p);
    let mut y = vec![0.0; n];
    let mut next = vec![0.0; n];
    loop {
        let mut change = 0.0f64;
        for i in 0..n {
            next[i] = c[i] + p.beta * g.neighbor_mean(&y, i);
            change = change.max((next[i] - y[i]).abs());
        }
        std::mem::swap(&mut y, &mut next);
        if change < tol {
            return Ok(y);
        }
    }
}

pub fn treated_fraction(d: &[u8]) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    d.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64
}

/// One realized dataset.
#[derive(Debug, Clone)]
pub struct SimDraw {
    pub graph: Graph,
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    pub nu: Vec<f64>,
    pub d: Vec<u8>,
    pub y: Vec<f64>,
    pub selection_iterations: usize,
    pub selection_converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpParams {
    pub selection: SelectionParams,
    pub outcome: OutcomeParams,
    pub max_selection_iter: usize,
    pub outcome_tol: f64,
}

impl Default for DgpParams {
    fn default() -> Self {
        Self {
            selection: SelectionParams::SIMULATION,
            outcome: OutcomeParams::SIMULATION,
            max_selection_iter: 100,
            outcome_tol: 1e-10,
        }
    }
}

/// Draws primitives on `graph` and simulates treatments and outcomes.
pub fn simulate_draw(graph: Graph, params: &DgpParams, rng: &mut StreamRng) -> Result<SimDraw> {
    let prim = draw_primitives(graph.n(), rng)?;
    let sel = simulate_selection(&graph, &prim.x, &prim.nu, &params.selection, params.max_selection_iter)?;
    let y = simulate_outcomes(&graph, &prim.x, &sel.d, &prim.eps, &params.outcome, params.outcome_tol)?;
    Ok(SimDraw {
        graph,
        x: prim.x,
        eps: prim.eps,
        nu: prim.nu,
        d: sel.d,
        y,
        selection_iterations: sel.iterations,
        selection_converged: sel.converged,
    })
}
