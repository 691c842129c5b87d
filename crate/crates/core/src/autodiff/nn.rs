use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Identity => v,
            Activation::Sigmoid => tape.sigmoid(v),
        }
    }
}

/// Uniform `[-a, a]` initialization with `a = 1 / sqrt(fan_in)`.
pub fn init_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut StreamRng) -> Matrix {
    let a = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Registers parameter matrices on a tape, either as differentiable leaves
/// (training) or as constants (inference), remembering the order.
pub struct Binder {
    trainable: bool,
    vars: Vec<Var>,
}

impl Binder {
    pub fn trainable() -> Self {
        Self {
            trainable: true,
            vars: Vec::new(),
        }
    }

    pub fn frozen() -> Self {
        Self {
            trainable: false,
            vars: Vec::new(),
        }
    }

    pub fn bind(&mut self, tape: &mut Tape, m: &Matrix) -> Var {
        let v = tape.leaf_copy(m, self.trainable);
        self.vars.push(v);
        v
    }

    /// Bound parameters in binding order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Fully connected layer `act(x W + b)`, `W` of shape `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut StreamRng) -> Self {
        Self {
            weight: init_uniform(inputs, outputs, inputs, rng),
            bias: init_uniform(1, outputs, inputs, rng),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, binder: &mut Binder) -> Var {
        let w = binder.bind(tape, &self.weight);
        let b = binder.bind(tape, &self.bias);
        let xw = tape.matmul(x, w);
        let z = tape.add_row(xw, b);
        self.activation.apply(tape, z)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Stack of dense layers with conforming widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `widths[0]` inputs, then one layer per subsequent width. Hidden layers
    /// use `hidden`, the last layer `output`.
    pub fn new(widths: &[usize], hidden: Activation, output: Activation, rng: &mut StreamRng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| Dense::new(w[0], w[1], if k == last { output } else { hidden }, rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, binder: &mut Binder) -> Var {
        self.layers.iter().fold(x, |h, layer| layer.forward(tape, h, binder))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// Plain evaluation without recording gradients.
    pub fn predict(&self, x: &Matrix) -> Matrix {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, xv, &mut Binder::frozen());
        tape.value(out).clone()
    }
}

/// `0.5 · mean_{i ∈ rows} (pred_i − target_i)²` over the selected rows of a
/// single-column prediction.
pub fn least_squares_loss(tape: &mut Tape, pred: Var, target: &[f64], rows: Arc<[usize]>) -> Var {
    let picked = tape.gather(pred, rows.clone());
    let y: Vec<f64> = rows.iter().map(|&r| target[r]).collect();
    let y = tape.constant(Matrix::column(&y));
    let resid = tape.sub(picked, y);
    let sq = tape.mul(resid, resid);
    let m = tape.mean(sq);
    tape.scale(m, 0.5)
}

/// `mean_{i ∈ rows} (−y_i f_i + log(1 + exp f_i))` for logits `f` and labels `y`.
pub fn logistic_loss(tape: &mut Tape, logit: Var, label: &[f64], rows: Arc<[usize]>) -> Var {
    let picked = tape.gather(logit, rows.clone());
    let y: Vec<f64> = rows.iter().map(|&r| label[r]).collect();
    let y = tape.constant(Matrix::column(&y));
    let sp = tape.softplus(picked);
    let yf = tape.mul(y, picked);
    let per = tape.sub(sp, yf);
    tape.mean(per)
}

/// Scalar least-squares loss `0.5 (y − f)²`.
pub fn least_squares(pred: f64, target: f64) -> f64 {
    0.5 * (target - pred).powi(2)
}

/// Scalar logistic loss `−y f + log(1 + exp f)`.
pub fn logistic(logit: f64, label: f64) -> f64 {
    -label * logit + super::tape::softplus(logit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn scalar_losses() {
        assert_eq!(least_squares(1.0, 1.0), 0.0);
        assert_eq!(least_squares(1.0, 0.0), 0.5);
        assert!((logistic(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!((logistic(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        let direct = -2.0 + (1.0 + 2f64.exp()).ln();
        assert!((logistic(2.0, 1.0) - direct).abs() < 1e-14);
    }

    #[test]
    fn batch_losses_match_hand_sums() {
        let pred = [1.0, 2.0, 4.0];
        let target = [0.0, 2.5, 1.0];
        let mut t = Tape::new();
        let p = t.param(Matrix::column(&pred));
        let rows: Arc<[usize]> = Arc::from(vec![0, 1, 2]);
        let l = least_squares_loss(&mut t, p, &target, rows.clone());
        // 0.5 * (1 + 0.25 + 9) / 3
        assert!((t.value(l).item() - 0.5 * 10.25 / 3.0).abs() < 1e-15);

        let labels = [1.0, 0.0, 1.0];
        let l = logistic_loss(&mut t, p, &labels, rows);
        let hand: f64 = (0..3).map(|i| logistic(pred[i], labels[i])).sum::<f64>() / 3.0;
        assert!((t.value(l).item() - hand).abs() < 1e-14);
    }

    #[test]
    fn loss_gradients() {
        let mut t = Tape::new();
        let p = t.param(Matrix::column(&[0.3, -1.0]));
        let l = logistic_loss(&mut t, p, &[1.0, 0.0], Arc::from(vec![0]));
        let g = t.backward(l).get(p);
        assert!((g.data[0] - (crate::autodiff::sigmoid(0.3) - 1.0)).abs() < 1e-15);
        assert_eq!(g.data[1], 0.0);
    }

    #[test]
    fn mlp_shapes() {
        let mlp = Mlp::new(&[3, 4, 1], Activation::Sigmoid, Activation::Identity, &mut stream(0, 0));
        let out = mlp.predict(&Matrix::zeros(5, 3));
        assert_eq!(out.shape(), (5, 1));
    }
}
