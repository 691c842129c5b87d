use std::sync::Arc;

use super::model::GnnModel;
use super::{GnnConfig, LossKind};
use crate::autodiff::{least_squares_loss, logistic_loss, sigmoid, AdamState, Binder, Matrix, Tape};
use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::rng::StreamRng;

/// Loss trajectory of one training run (losses on the training scale).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: usize,
}

/// Fits a fresh model by full-batch Adam on `Σ_{i ∈ mask} ℓ(target_i, f(i))`.
///
/// For the least-squares loss with `standardize_targets`, the network fits
/// `(target − mean) / sd` over the mask and the model maps outputs back.
pub fn train_gnn(
    g: &Graph,
    x: &Matrix,
    targets: &[f64],
    mask: &[usize],
    config: &GnnConfig,
    rng: &mut StreamRng,
) -> Result<GnnModel> {
    if mask.is_empty() {
        return Err(invalid("training mask is empty"));
    }
    if targets.len() != g.n() {
        return Err(invalid("target length differs from n"));
    }
    if mask.iter().any(|&i| i >= g.n()) {
        return Err(invalid("mask unit out of range"));
    }
    let mut model = GnnModel::for_graph(*config, g, x.cols, rng)?;
    model.check_input(g, x)?;

    let (shift, scale) = match config.loss {
        LossKind::LeastSquares if config.train.standardize_targets => {
            let k = mask.len() as f64;
            let mean = mask.iter().map(|&i| targets[i]).sum::<f64>() / k;
            let var = mask.iter().map(|&i| (targets[i] - mean).powi(2)).sum::<f64>() / k;
            let sd = var.sqrt();
            (mean, if sd > 1e-12 { sd } else { 1.0 })
        }
        _ => (0.0, 1.0),
    };
    let fit_targets: Vec<f64> = targets.iter().map(|&t| (t - shift) / scale).collect();
    let rows: Arc<[usize]> = mask.to_vec().into();
    let plan = model.plan(g);

    let shapes: Vec<_> = model.params_mut().iter().map(|m| m.shape()).collect();
    let mut adam = AdamState::new(config.train.adam, &shapes);

    let loss_at = |tape: &mut Tape, model: &GnnModel, binder: &mut Binder| {
        tape.clear();
        let xv = tape.leaf_copy(x, false);
        let out = model.forward_tape(tape, &plan, xv, binder);
        match config.loss {
            LossKind::LeastSquares => least_squares_loss(tape, out, &fit_targets, rows.clone()),
            LossKind::Logistic => logistic_loss(tape, out, &fit_targets, rows.clone()),
        }
    };

    let mut tape = Tape::new();
    let mut initial_loss = None;
    for _ in 0..config.train.epochs {
        let mut binder = Binder::trainable();
        let loss = loss_at(&mut tape, &model, &mut binder);
        initial_loss.get_or_insert(tape.value(loss).item());
        let mut grads = tape.backward(loss);
        let step: Vec<Matrix> = binder.vars().iter().map(|&v| grads.take(v)).collect();
        tape.recycle(grads);
        adam.step(&mut model.params_mut(), &step);
    }
    let loss = loss_at(&mut tape, &model, &mut Binder::frozen());
    let final_loss = tape.value(loss).item();

    model.output_shift = shift;
    model.output_scale = scale;
    model.history = Some(TrainHistory {
        initial_loss: initial_loss.unwrap_or(final_loss),
        final_loss,
        epochs: config.train.epochs,
    });
    Ok(model)
}

/// Per-unit predictions `f(i, X, A)` on graph `g`.
pub fn forward_gnn(model: &GnnModel, g: &Graph, x: &Matrix) -> Result<Vec<f64>> {
    Ok(model
        .raw_outputs(g, x)?
        .into_iter()
        .map(|v| model.output_shift + model.output_scale * v)
        .collect())
}

/// `exp(f) / (1 + exp(f))` of the model outputs.
pub fn predict_probability(model: &GnnModel, g: &Graph, x: &Matrix) -> Result<Vec<f64>> {
    Ok(forward_gnn(model, g, x)?.into_iter().map(sigmoid).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::Architecture;
    use crate::rng::stream;

    fn column(n: usize, f: impl Fn(usize) -> f64) -> Matrix {
        Matrix::column(&(0..n).map(f).collect::<Vec<_>>())
    }

    #[test]
    fn constant_targets_on_edgeless_graph() {
        let g = Graph::empty(40);
        let x = column(40, |i| (i % 5) as f64 * 0.25);
        let y = vec![3.7; 40];
        let mask: Vec<usize> = (0..40).collect();
        let cfg = GnnConfig {
            depth: 1,
            ..GnnConfig::default()
        };
        let model = train_gnn(&g, &x, &y, &mask, &cfg, &mut stream(1, 0)).unwrap();
        for p in forward_gnn(&model, &g, &x).unwrap() {
            assert!((p - 3.7).abs() < 0.05, "prediction {p}");
        }
    }

    #[test]
    fn null_signal_logistic_fit() {
        let g = Graph::empty(200);
        let x = column(200, |i| (i % 5) as f64 * 0.25);
        // labels balanced within every covariate value
        let y: Vec<f64> = (0..200).map(|i| ((i / 5) % 2) as f64).collect();
        let mask: Vec<usize> = (0..200).collect();
        let cfg = GnnConfig {
            depth: 1,
            loss: LossKind::Logistic,
            ..GnnConfig::default()
        };
        let model = train_gnn(&g, &x, &y, &mask, &cfg, &mut stream(2, 0)).unwrap();
        for p in predict_probability(&model, &g, &x).unwrap() {
            assert!((p - 0.5).abs() < 0.05, "probability {p}");
        }
        let h = model.history.as_ref().unwrap();
        assert!(h.final_loss <= h.initial_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let g = Graph::cycle(12);
        let x = column(12, |i| i as f64 / 12.0);
        let y: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let mask: Vec<usize> = (0..12).collect();
        let cfg = GnnConfig {
            train: super::super::TrainConfig {
                epochs: 20,
                ..Default::default()
            },
            ..GnnConfig::default()
        };
        let a = train_gnn(&g, &x, &y, &mask, &cfg, &mut stream(5, 5)).unwrap();
        let b = train_gnn(&g, &x, &y, &mask, &cfg, &mut stream(5, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let g = Graph::empty(3);
        let x = column(3, |_| 0.0);
        assert!(train_gnn(&g, &x, &[0.0; 3], &[], &GnnConfig::default(), &mut stream(0, 0)).is_err());
    }

    #[test]
    fn every_architecture_trains() {
        let g = Graph::path(10);
        let x = column(10, |i| (i % 3) as f64);
        let y: Vec<f64> = (0..10).map(|i| 2.0 * (i % 3) as f64 + 1.0).collect();
        let mask: Vec<usize> = (0..10).collect();
        for arch in [Architecture::Gcn, Architecture::SumMlp, Architecture::Pna] {
            let cfg = GnnConfig {
                architecture: arch,
                depth: 2,
                ..GnnConfig::default()
            };
            let m = train_gnn(&g, &x, &y, &mask, &cfg, &mut stream(3, 0)).unwrap();
            let h = m.history.as_ref().unwrap();
            assert!(h.final_loss <= h.initial_loss, "{arch:?}");
        }
    }
}
