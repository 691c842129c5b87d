use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{invalid, Error, Result};
use crate::exposure::{gamma_population, indicators, ExposureSpec};
use crate::glm::{build_controls, linear_fit, logistic_fit, polynomial_features};
use crate::gnn::{forward_gnn, predict_probability, train_gnn, GnnConfig, LossKind};
use crate::graph::Graph;
use crate::rng::StreamRng;

/// Learner used for both nuisance functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceModel {
    Gnn(GnnConfig),
    /// GLM on the controls `(X_i, mean_nbr X, degree)` with a polynomial sieve.
    Glm {
        order: usize,
    },
}

impl NuisanceModel {
    /// Training epochs reported per fit (0 for GLMs).
    pub fn epochs(&self) -> usize {
        match self {
            NuisanceModel::Gnn(c) => c.train.epochs,
            NuisanceModel::Glm { .. } => 0,
        }
    }
}

fn glm_design(g: &Graph, x: &Matrix, order: usize) -> Result<Matrix> {
    if x.cols != 1 {
        return Err(invalid("GLM controls need a single covariate column"));
    }
    polynomial_features(&build_controls(g, &x.data)?, order)
}

/// Generalized propensity `P(T_i = t | X, A)` for every unit, fitted on the
/// units whose degree lies in `Γ` with labels `1_i(t)`. Untrimmed.
pub fn fit_propensity(
    g: &Graph,
    x: &Matrix,
    d: &[u8],
    spec: &ExposureSpec,
    model: &NuisanceModel,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let population = gamma_population(g, spec);
    if population.is_empty() {
        return Err(Error::InsufficientPopulation { found: 0, required: 1 });
    }
    let labels: Vec<f64> = indicators(g, d, spec)
        .into_iter()
        .map(|b| f64::from(u8::from(b)))
        .collect();
    match model {
        NuisanceModel::Gnn(cfg) => {
            let cfg = cfg.with_loss(LossKind::Logistic);
            let m = train_gnn(g, x, &labels, &population, &cfg, rng)?;
            predict_probability(&m, g, x)
        }
        NuisanceModel::Glm { order } => {
            let f = glm_design(g, x, *order)?;
            Ok(logistic_fit(&f, &labels, &population)?.fitted)
        }
    }
}

/// Outcome regression `E[Y_i | T_i = t, X, A]` fitted on units with
/// `indicator[i]` and predicted for every unit.
pub fn fit_outcome(
    g: &Graph,
    x: &Matrix,
    y: &[f64],
    indicator: &[bool],
    model: &NuisanceModel,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let mask: Vec<usize> = (0..indicator.len()).filter(|&i| indicator[i]).collect();
    if mask.len() < 2 {
        return Err(Error::InsufficientPopulation {
            found: mask.len(),
            required: 2,
        });
    }
    match model {
        NuisanceModel::Gnn(cfg) => {
            let cfg = cfg.with_loss(LossKind::LeastSquares);
            let m = train_gnn(g, x, y, &mask, &cfg, rng)?;
            forward_gnn(&m, g, x)
        }
        NuisanceModel::Glm { order } => {
            let f = glm_design(g, x, *order)?;
            Ok(linear_fit(&f, y, &mask)?.fitted)
        }
    }
}
