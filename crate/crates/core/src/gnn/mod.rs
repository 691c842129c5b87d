//! Message-passing graph neural networks.
//!
//! Layer `l` maps embeddings `h^(l-1)` to
//! `h_i^(l) = φ_0l(h_i^(l-1), AGG{ φ_1l(h_i^(l-1), h_j^(l-1)) : j ∈ nbr(i) })`,
//! starting from `h^(0) = X`. The last layer is scalar and linear; its output
//! is a regression value or a log-odds.

mod aggregate;
mod io;
mod model;
mod train;

pub use aggregate::{degree_scalers, pna_aggregate, scaler_normalizer};
pub use io::{load_model, read_model, save_model, write_model, MODEL_FORMAT_TAG};
pub use model::{gcn_layer, GnnModel, GraphPlan, Layer};
pub use train::{forward_gnn, predict_probability, train_gnn, TrainHistory};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Mean of neighbor embeddings followed by a dense layer.
    Gcn,
    /// `φ_0(h_i, Σ_j φ_1(h_j))`.
    SumMlp,
    /// Principal neighborhood aggregation over messages `φ_1(h_i, h_j)`.
    Pna,
}

/// Aggregator set for PNA layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorSet {
    /// mean, std, sum, min, max.
    Basic,
    /// The basic set under the identity, amplification and attenuation scalers.
    Scaled,
}

impl AggregatorSet {
    /// Output channels per message channel.
    pub fn channels(self) -> usize {
        match self {
            AggregatorSet::Basic => 5,
            AggregatorSet::Scaled => 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    LeastSquares,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Full-batch Adam steps.
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Fit least-squares targets after centering and scaling them on the
    /// fitting population; predictions are mapped back.
    pub standardize_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            adam: AdamConfig::default(),
            standardize_targets: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnConfig {
    /// Number of message-passing layers `L`.
    pub depth: usize,
    pub architecture: Architecture,
    /// Width of the first layer's messages and embeddings (when `L > 1`).
    pub first_width: usize,
    /// Width of messages and embeddings in layers `2..L`.
    pub hidden_width: usize,
    pub aggregators: AggregatorSet,
    pub loss: LossKind,
    pub train: TrainConfig,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            architecture: Architecture::Pna,
            first_width: 8,
            hidden_width: 1,
            aggregators: AggregatorSet::Scaled,
            loss: LossKind::LeastSquares,
            train: TrainConfig::default(),
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(invalid("GNN depth must be at least 1"));
        }
        if self.first_width == 0 || self.hidden_width == 0 {
            return Err(invalid("GNN widths must be at least 1"));
        }
        Ok(())
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    /// `(message width, output width)` of layer `l` (1-based).
    pub(crate) fn layer_widths(&self, l: usize) -> (usize, usize) {
        let message = if l == 1 { self.first_width } else { self.hidden_width };
        let output = if l == self.depth {
            1
        } else if l == 1 {
            self.first_width
        } else {
            self.hidden_width
        };
        (message, output)
    }
}
