use super::AggregatorSet;
use crate::graph::Graph;

/// `δ = (1/n) Σ_i log(degree(i) + 1)`.
pub fn scaler_normalizer(g: &Graph) -> f64 {
    if g.n() == 0 {
        return 0.0;
    }
    (0..g.n()).map(|i| (g.degree(i) as f64 + 1.0).ln()).sum::<f64>() / g.n() as f64
}

/// Amplification `S(·, 1)` and attenuation `S(·, −1)` factors for a
/// neighborhood of `degree` units, `S(·, α) = (log(degree + 1) / δ)^α`.
///
/// Empty neighborhoods get 0 for both (their aggregates vanish anyway). With
/// `δ = 0` the scalers are disabled and return 1.
pub fn degree_scalers(degree: usize, delta: f64) -> (f64, f64) {
    if delta <= 0.0 {
        return (1.0, 1.0);
    }
    if degree == 0 {
        return (0.0, 0.0);
    }
    let s = (degree as f64 + 1.0).ln() / delta;
    (s, 1.0 / s)
}

/// Aggregates a multiset of `m`-vectors into `[mean, std, sum, min, max]`
/// (each block of width `m`), followed for [`AggregatorSet::Scaled`] by the
/// same block times `S(·, 1)` and times `S(·, −1)`.
pub fn pna_aggregate(messages: &[Vec<f64>], width: usize, delta: f64, set: AggregatorSet) -> Vec<f64> {
    let k = messages.len();
    let mut basic = vec![0.0; 5 * width];
    if k > 0 {
        for c in 0..width {
            let col = || messages.iter().map(|m| m[c]);
            let sum: f64 = col().sum();
            let mean = sum / k as f64;
            let var = col().map(|x| (x - mean) * (x - mean)).sum::<f64>() / k as f64;
            basic[c] = mean;
            basic[width + c] = var.max(0.0).sqrt();
            basic[2 * width + c] = sum;
            basic[3 * width + c] = col().fold(f64::INFINITY, f64::min);
            basic[4 * width + c] = col().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    match set {
        AggregatorSet::Basic => basic,
        AggregatorSet::Scaled => {
            let (amp, att) = degree_scalers(k, delta);
            let mut out = basic.clone();
            out.extend(basic.iter().map(|v| v * amp));
            out.extend(basic.iter().map(|v| v * att));
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_aggregates_of_one_two_three() {
        let ms = vec![vec![1.0], vec![2.0], vec![3.0]];
        let out = pna_aggregate(&ms, 1, 1.0, AggregatorSet::Basic);
        let expected = [2.0, (2.0f64 / 3.0).sqrt(), 6.0, 1.0, 3.0];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((out[1] - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn empty_multiset_is_zero() {
        assert_eq!(pna_aggregate(&[], 2, 1.3, AggregatorSet::Scaled), vec![0.0; 30]);
    }

    #[test]
    fn amplification_is_identity_at_normalizer() {
        let ms = vec![vec![1.0], vec![2.0], vec![3.0]];
        let out = pna_aggregate(&ms, 1, 4f64.ln(), AggregatorSet::Scaled);
        for c in 0..5 {
            assert!((out[5 + c] - out[c]).abs() < 1e-15);
            assert!((out[10 + c] - out[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn normalizer_and_scalers() {
        assert_eq!(scaler_normalizer(&Graph::empty(4)), 0.0);
        assert_eq!(degree_scalers(3, 0.0), (1.0, 1.0));
        assert_eq!(degree_scalers(0, 1.0), (0.0, 0.0));
        let d = scaler_normalizer(&Graph::star(3));
        assert!((d - (4f64.ln() + 3.0 * 2f64.ln()) / 4.0).abs() < 1e-15);
    }
}
