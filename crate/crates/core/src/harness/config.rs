use serde::{Deserialize, Serialize};

use crate::dgp::DgpParams;
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, NuisanceModel, TrimBounds};
use crate::exposure::ExposureSpec;
use crate::gnn::{AggregatorSet, Architecture, GnnConfig, TrainConfig};
use crate::graph::{generate_er, generate_rgg, Graph};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphModel {
    /// Random geometric graph on the unit square.
    Rgg,
    /// Erdős–Rényi graph.
    Er,
}

impl GraphModel {
    pub fn generate(self, n: usize, kappa: f64, rng: &mut StreamRng) -> Result<Graph> {
        match self {
            GraphModel::Rgg => generate_rgg(n, kappa, rng),
            GraphModel::Er => generate_er(n, kappa, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub graph_model: GraphModel,
    pub n: usize,
    /// Expected degree.
    pub kappa: f64,
    pub replications: usize,
    pub seed: u64,
    /// Concurrent replications; 0 uses every available core.
    pub workers: usize,
    /// Largest tolerated share of failed replications.
    pub max_failure_rate: f64,
    /// Value of `τ(t, t')` used for bias and coverage.
    pub true_tau: f64,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            graph_model: GraphModel::Er,
            n: 1000,
            kappa: 5.0,
            replications: 500,
            seed: 20_240_601,
            workers: 0,
            max_failure_rate: 0.01,
            true_tau: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorsSection {
    /// One GNN estimator per depth.
    pub gnn_depths: Vec<usize>,
    /// One GLM estimator per polynomial order.
    pub glm_orders: Vec<usize>,
    pub architecture: Architecture,
    pub aggregators: AggregatorSet,
    pub first_width: usize,
    pub hidden_width: usize,
}

impl Default for EstimatorsSection {
    fn default() -> Self {
        let gnn = GnnConfig::default();
        Self {
            gnn_depths: vec![1, 2, 3],
            glm_orders: vec![1, 2, 3],
            architecture: gnn.architecture,
            aggregators: gnn.aggregators,
            first_width: gnn.first_width,
            hidden_width: gnn.hidden_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExposureSection {
    pub treatment: ExposureSpec,
    pub control: ExposureSpec,
}

impl Default for ExposureSection {
    fn default() -> Self {
        Self {
            treatment: ExposureSpec::own_treatment(1),
            control: ExposureSpec::own_treatment(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub trim: TrimBounds,
    pub level: f64,
    /// Fixed HAC bandwidth; absent applies the default rule per graph.
    pub bandwidth: Option<usize>,
}

impl Default for InferenceSection {
    fn default() -> Self {
        Self {
            trim: TrimBounds::default(),
            level: 0.95,
            bandwidth: None,
        }
    }
}

/// Everything a Monte Carlo run needs. Serialized as TOML with one table
/// per section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: DesignSection,
    pub estimators: EstimatorsSection,
    pub exposure: ExposureSection,
    pub inference: InferenceSection,
    pub train: TrainConfig,
    pub dgp: DgpParams,
}

/// One estimator in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorId {
    Gnn { depth: usize },
    Glm { order: usize },
}

impl EstimatorId {
    pub fn label(&self) -> String {
        match self {
            EstimatorId::Gnn { depth } => format!("gnn_l{depth}"),
            EstimatorId::Glm { order } => format!("glm_order_{order}"),
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        if let Some(d) = label.strip_prefix("gnn_l") {
            return d.parse().ok().map(|depth| EstimatorId::Gnn { depth });
        }
        label
            .strip_prefix("glm_order_")
            .and_then(|o| o.parse().ok())
            .map(|order| EstimatorId::Glm { order })
    }

    /// GNN depth, if any.
    pub fn depth(&self) -> Option<usize> {
        match self {
            EstimatorId::Gnn { depth } => Some(*depth),
            EstimatorId::Glm { .. } => None,
        }
    }

    /// Key separating the random streams of estimators within a replication.
    pub fn variant(&self) -> u64 {
        match self {
            EstimatorId::Gnn { depth } => *depth as u64,
            EstimatorId::Glm { order } => 100 + *order as u64,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let d = &self.design;
        if d.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if d.n == 0 || !(d.kappa > 0.0) {
            return bad("n and kappa must be positive".into());
        }
        if !(0.0..=1.0).contains(&d.max_failure_rate) {
            return bad("max_failure_rate must lie in [0, 1]".into());
        }
        let e = &self.estimators;
        if e.gnn_depths.is_empty() && e.glm_orders.is_empty() {
            return bad("no estimators requested".into());
        }
        if e.gnn_depths.contains(&0) {
            return bad("GNN depths must be at least 1".into());
        }
        if let Some(o) = e.glm_orders.iter().find(|o| !(1..=3).contains(*o)) {
            return bad(format!("GLM order {o} not in 1..=3"));
        }
        if e.first_width == 0 || e.hidden_width == 0 {
            return bad("GNN widths must be at least 1".into());
        }
        self.exposure.treatment.validate()?;
        self.exposure.control.validate()?;
        self.inference.trim.validate()?;
        if !(self.inference.level > 0.0 && self.inference.level < 1.0) {
            return bad("confidence level must lie in (0, 1)".into());
        }
        if !(self.dgp.outcome.beta.abs() < 1.0) {
            return bad("outcome peer effect must satisfy |beta| < 1".into());
        }
        Ok(())
    }

    /// Estimators in reporting order: GNNs by depth, then GLMs by order.
    pub fn estimator_ids(&self) -> Vec<EstimatorId> {
        let gnn = self
            .estimators
            .gnn_depths
            .iter()
            .map(|&depth| EstimatorId::Gnn { depth });
        let glm = self
            .estimators
            .glm_orders
            .iter()
            .map(|&order| EstimatorId::Glm { order });
        gnn.chain(glm).collect()
    }

    pub fn estimator_config(&self, id: EstimatorId) -> EstimatorConfig {
        let model = match id {
            EstimatorId::Gnn { depth } => NuisanceModel::Gnn(GnnConfig {
                depth,
                architecture: self.estimators.architecture,
                first_width: self.estimators.first_width,
                hidden_width: self.estimators.hidden_width,
                aggregators: self.estimators.aggregators,
                train: self.train,
                ..GnnConfig::default()
            }),
            EstimatorId::Glm { order } => NuisanceModel::Glm { order },
        };
        EstimatorConfig {
            model,
            treatment: self.exposure.treatment,
            control: self.exposure.control,
            trim: self.inference.trim,
            bandwidth: self.inference.bandwidth,
            level: self.inference.level,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert!(text.contains("[design]"));
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = ExperimentConfig::from_toml("[design]\nn = 50\ngraph_model = \"rgg\"\n").unwrap();
        assert_eq!(cfg.design.n, 50);
        assert_eq!(cfg.design.graph_model, GraphModel::Rgg);
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn invalid_documents() {
        assert!(ExperimentConfig::from_toml("[design]\nreplications = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[estimators]\nglm_orders = [4]\n").is_err());
        assert!(ExperimentConfig::from_toml("[estimators]\ngnn_depths = []\nglm_orders = []\n").is_err());
        assert!(ExperimentConfig::from_toml("[design]\nn = \"x\"\n").is_err());
        assert!(ExperimentConfig::from_toml("[design]\nreplicatons = 5\n").is_err());
    }

    #[test]
    fn estimator_labels() {
        for id in [EstimatorId::Gnn { depth: 2 }, EstimatorId::Glm { order: 3 }] {
            assert_eq!(EstimatorId::parse(&id.label()), Some(id));
        }
        assert_eq!(EstimatorId::parse("ols"), None);
    }
}
