use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::aggregate::{degree_scalers, scaler_normalizer};
use super::{AggregatorSet, Architecture, GnnConfig, TrainHistory};
use crate::autodiff::{init_uniform, Activation, Binder, Dense, Matrix, SegmentReduce, Segments, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::StreamRng;

/// One message-passing layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Gcn {
        update: Dense,
    },
    SumMlp {
        message: Dense,
        update: Dense,
    },
    /// Message `σ(h_i W_self + h_j W_nbr + b)`, i.e. a single sigmoid layer on
    /// the concatenation `(h_i, h_j)`.
    Pna {
        msg_self: Matrix,
        msg_nbr: Matrix,
        msg_bias: Matrix,
        update: Dense,
    },
}

impl Layer {
    fn new(cfg: &GnnConfig, l: usize, input: usize, rng: &mut StreamRng) -> Self {
        let (message, output) = cfg.layer_widths(l);
        let act = if l == cfg.depth {
            Activation::Identity
        } else {
            Activation::Sigmoid
        };
        match cfg.architecture {
            Architecture::Gcn => Layer::Gcn {
                update: Dense::new(input, output, act, rng),
            },
            Architecture::SumMlp => Layer::SumMlp {
                message: Dense::new(input, message, Activation::Sigmoid, rng),
                update: Dense::new(input + message, output, act, rng),
            },
            Architecture::Pna => {
                let fan_in = 2 * input;
                Layer::Pna {
                    msg_self: init_uniform(input, message, fan_in, rng),
                    msg_nbr: init_uniform(input, message, fan_in, rng),
                    msg_bias: init_uniform(1, message, fan_in, rng),
                    update: Dense::new(input + cfg.aggregators.channels() * message, output, act, rng),
                }
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Layer::Gcn { update } => update.params_mut(),
            Layer::SumMlp { message, update } => {
                let mut p = message.params_mut();
                p.extend(update.params_mut());
                p
            }
            Layer::Pna {
                msg_self,
                msg_nbr,
                msg_bias,
                update,
            } => {
                let mut p = vec![msg_self, msg_nbr, msg_bias];
                p.extend(update.params_mut());
                p
            }
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Layer::Gcn { update } | Layer::SumMlp { update, .. } | Layer::Pna { update, .. } => update.outputs(),
        }
    }

    fn forward(&self, tape: &mut Tape, plan: &GraphPlan, h: Var, set: AggregatorSet, binder: &mut Binder) -> Var {
        match self {
            Layer::Gcn { update } => {
                let nbr = tape.gather(h, plan.sources.clone());
                let mean = tape.segment(nbr, plan.segments.clone(), SegmentReduce::Mean);
                update.forward(tape, mean, binder)
            }
            Layer::SumMlp { message, update } => {
                let m = message.forward(tape, h, binder);
                let nbr = tape.gather(m, plan.sources.clone());
                let sum = tape.segment(nbr, plan.segments.clone(), SegmentReduce::Sum);
                let joined = tape.concat(&[h, sum]);
                update.forward(tape, joined, binder)
            }
            Layer::Pna {
                msg_self,
                msg_nbr,
                msg_bias,
                update,
            } => {
                let ws = binder.bind(tape, msg_self);
                let wn = binder.bind(tape, msg_nbr);
                let b = binder.bind(tape, msg_bias);
                let own = tape.matmul(h, ws);
                let other = tape.matmul(h, wn);
                let msg = tape.edge_sigmoid(own, other, b, plan.targets.clone(), plan.sources.clone());
                let scalers = match set {
                    AggregatorSet::Basic => None,
                    AggregatorSet::Scaled => Some((plan.amplify.clone(), plan.attenuate.clone())),
                };
                let agg = tape.multi_aggregate(msg, plan.segments.clone(), scalers);
                let parts = [h, agg];
                let joined = tape.concat(&parts);
                update.forward(tape, joined, binder)
            }
        }
    }
}

/// Index structures for running a model on one graph. Edge slot `e` of the
/// CSR layout carries a message to `targets[e]` from `sources[e]`.
#[derive(Debug, Clone)]
pub struct GraphPlan {
    pub n: usize,
    pub targets: Arc<[usize]>,
    pub sources: Arc<[usize]>,
    pub segments: Arc<Segments>,
    pub amplify: Arc<[f64]>,
    pub attenuate: Arc<[f64]>,
}

impl GraphPlan {
    pub fn new(g: &Graph, delta: f64) -> Self {
        let n = g.n();
        let targets: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, g.degree(i))).collect();
        let (amplify, attenuate): (Vec<f64>, Vec<f64>) = (0..n).map(|i| degree_scalers(g.degree(i), delta)).unzip();
        Self {
            n,
            targets: targets.into(),
            sources: g.adjacency().to_vec().into(),
            segments: Arc::new(Segments::new(g.offsets().to_vec())),
            amplify: amplify.into(),
            attenuate: attenuate.into(),
        }
    }
}

/// A GNN with its parameters. Predictions are `shift + scale · h^(L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub input_width: usize,
    pub layers: Vec<Layer>,
    /// Scaler normalizer `δ` of the training graph.
    pub delta: f64,
    pub output_shift: f64,
    pub output_scale: f64,
    #[serde(skip)]
    pub history: Option<TrainHistory>,
}

impl GnnModel {
    /// Randomly initialized model for covariates of width `input_width`.
    /// `delta` is usually [`scaler_normalizer`] of the training graph.
    pub fn new(config: GnnConfig, input_width: usize, delta: f64, rng: &mut StreamRng) -> Result<Self> {
        config.validate()?;
        if input_width == 0 {
            return Err(Error::InvalidArgument("covariate width must be at least 1".into()));
        }
        let mut layers = Vec::with_capacity(config.depth);
        let mut width = input_width;
        for l in 1..=config.depth {
            let layer = Layer::new(&config, l, width, rng);
            width = layer.output_width();
            layers.push(layer);
        }
        Ok(Self {
            config,
            input_width,
            layers,
            delta,
            output_shift: 0.0,
            output_scale: 1.0,
            history: None,
        })
    }

    /// Model initialized for `g`, with `δ` taken from it.
    pub fn for_graph(config: GnnConfig, g: &Graph, input_width: usize, rng: &mut StreamRng) -> Result<Self> {
        Self::new(config, input_width, scaler_normalizer(g), rng)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|m| m.len()).sum()
    }

    pub fn plan(&self, g: &Graph) -> GraphPlan {
        GraphPlan::new(g, self.delta)
    }

    /// Records the network on `tape`; returns the raw `n × 1` output `h^(L)`
    /// before the output affine map.
    pub fn forward_tape(&self, tape: &mut Tape, plan: &GraphPlan, x: Var, binder: &mut Binder) -> Var {
        self.layers.iter().fold(x, |h, layer| {
            layer.forward(tape, plan, h, self.config.aggregators, binder)
        })
    }

    pub(crate) fn check_input(&self, g: &Graph, x: &Matrix) -> Result<()> {
        if x.rows != g.n() || x.cols != self.input_width {
            return Err(Error::Shape(format!(
                "covariates are {}x{}, model expects {}x{}",
                x.rows,
                x.cols,
                g.n(),
                self.input_width
            )));
        }
        Ok(())
    }

    /// Raw outputs `h^(L)` (no output affine map).
    pub fn raw_outputs(&self, g: &Graph, x: &Matrix) -> Result<Vec<f64>> {
        self.check_input(g, x)?;
        let plan = self.plan(g);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = self.forward_tape(&mut tape, &plan, xv, &mut Binder::frozen());
        Ok(tape.value(out).data.clone())
    }
}

/// `σ(mean_{j ∈ nbr(i)} h_j · W + b)` for every unit; isolated units
/// aggregate to zero.
pub fn gcn_layer(h: &Matrix, g: &Graph, layer: &Dense) -> Result<Matrix> {
    if h.rows != g.n() || h.cols != layer.inputs() {
        return Err(Error::Shape(format!(
            "embedding {}x{} vs layer input {}",
            h.rows,
            h.cols,
            layer.inputs()
        )));
    }
    let plan = GraphPlan::new(g, 0.0);
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let out =
        Layer::Gcn { update: layer.clone() }.forward(&mut tape, &plan, hv, AggregatorSet::Basic, &mut Binder::frozen());
    Ok(tape.value(out).clone())
}
