//! Doubly robust estimation of exposure contrasts with network HAC inference.
//!
//! For exposure values `t, t'` the per-unit contribution is
//! `τ̂_i = 1_i(t)(Y_i − μ̂_t(i))/p̂_t(i) + μ̂_t(i) − 1_i(t')(Y_i − μ̂_t'(i))/p̂_t'(i) − μ̂_t'(i)`
//! and `τ̂` is their mean.

mod hac;
mod nuisance;

pub use hac::{hac_variance, iid_variance, standard_error};
pub use nuisance::{fit_outcome, fit_propensity, NuisanceModel};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::autodiff::Matrix;
use crate::error::{invalid, Error, Result};
use crate::exposure::{are_complementary, indicators, ExposureSpec};
use crate::graph::{hac_bandwidth, Graph};
use crate::rng::{variant_stream, Purpose};

/// Two-sided 95% normal critical value.
pub const Z_95: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrimBounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for TrimBounds {
    fn default() -> Self {
        Self { lo: 0.01, hi: 0.99 }
    }
}

impl TrimBounds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.lo && self.lo <= self.hi && self.hi < 1.0) {
            return Err(invalid(format!(
                "trim bounds [{}, {}] must satisfy 0 < lo <= hi < 1",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Clamps every probability into `[lo, hi]`.
pub fn trim(p: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    p.iter().map(|v| v.clamp(lo, hi)).collect()
}

/// `(τ̂ − z·se, τ̂ + z·se)` for a two-sided normal interval at `level`.
pub fn confidence_interval(tau_hat: f64, se: f64, level: f64) -> (f64, f64) {
    let z = if (level - 0.95).abs() < 1e-12 {
        Z_95
    } else {
        Normal::standard().inverse_cdf(0.5 + level / 2.0)
    };
    (tau_hat - z * se, tau_hat + z * se)
}

/// Nuisance estimates for one exposure value.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceArm {
    /// Trimmed propensities `p̂_t(i)`.
    pub propensity: Vec<f64>,
    /// Outcome regression `μ̂_t(i)`.
    pub outcome: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFits {
    pub treatment: NuisanceArm,
    pub control: NuisanceArm,
    pub trim: TrimBounds,
    /// Propensities moved by trimming (both arms).
    pub trimmed: usize,
}

impl NuisanceFits {
    /// Builds fits from untrimmed propensities, trimming them.
    pub fn new(p_t: Vec<f64>, mu_t: Vec<f64>, p_tp: Vec<f64>, mu_tp: Vec<f64>, trim_bounds: TrimBounds) -> Self {
        let moved = |p: &[f64]| {
            p.iter()
                .filter(|v| !(trim_bounds.lo..=trim_bounds.hi).contains(*v))
                .count()
        };
        let trimmed = moved(&p_t) + moved(&p_tp);
        Self {
            treatment: NuisanceArm {
                propensity: trim(&p_t, trim_bounds.lo, trim_bounds.hi),
                outcome: mu_t,
            },
            control: NuisanceArm {
                propensity: trim(&p_tp, trim_bounds.lo, trim_bounds.hi),
                outcome: mu_tp,
            },
            trim: trim_bounds,
            trimmed,
        }
    }
}

/// Per-unit contributions `τ̂_i` and their mean.
pub fn doubly_robust(y: &[f64], ind_t: &[bool], ind_tp: &[bool], fits: &NuisanceFits) -> Result<(f64, Vec<f64>)> {
    let n = y.len();
    let arms = [&fits.treatment, &fits.control];
    if ind_t.len() != n || ind_tp.len() != n || arms.iter().any(|a| a.propensity.len() != n || a.outcome.len() != n) {
        return Err(Error::Shape("doubly robust inputs must all have length n".into()));
    }
    if n == 0 {
        return Err(invalid("no units"));
    }
    if arms.iter().any(|a| a.propensity.iter().any(|&p| !(p > 0.0 && p < 1.0))) {
        return Err(Error::Precondition("propensity outside (0, 1) after trimming".into()));
    }
    let (t, c) = (&fits.treatment, &fits.control);
    let contributions: Vec<f64> = (0..n)
        .map(|i| {
            let a = if ind_t[i] {
                (y[i] - t.outcome[i]) / t.propensity[i]
            } else {
                0.0
            };
            let b = if ind_tp[i] {
                (y[i] - c.outcome[i]) / c.propensity[i]
            } else {
                0.0
            };
            a + t.outcome[i] - b - c.outcome[i]
        })
        .collect();
    let tau = contributions.iter().sum::<f64>() / n as f64;
    Ok((tau, contributions))
}

/// What to estimate and how.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub model: NuisanceModel,
    /// Exposure value `t`.
    pub treatment: ExposureSpec,
    /// Exposure value `t'`.
    pub control: ExposureSpec,
    pub trim: TrimBounds,
    /// HAC bandwidth; `None` applies the default rule to the graph.
    pub bandwidth: Option<usize>,
    pub level: f64,
}

impl EstimatorConfig {
    /// `τ(1, 0)` with own-treatment exposures.
    pub fn own_treatment(model: NuisanceModel) -> Self {
        Self {
            model,
            treatment: ExposureSpec::own_treatment(1),
            control: ExposureSpec::own_treatment(0),
            trim: TrimBounds::default(),
            bandwidth: None,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub tau_hat: f64,
    pub contributions: Vec<f64>,
    pub hac_variance: f64,
    pub hac_se: f64,
    pub iid_se: f64,
    pub bandwidth: usize,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub iid_ci_lo: f64,
    pub iid_ci_hi: f64,
    /// Units with `D_i = 1`.
    pub treated_count: usize,
    /// Units with `T_i = t` and with `T_i = t'`.
    pub exposure_counts: (usize, usize),
    /// Counts of trimmed `p̂_t` in ten equal bins on `[0, 1]`.
    pub overlap_histogram: [usize; 10],
    pub trimmed: usize,
    pub trained_epochs: usize,
    pub warnings: Vec<String>,
}

/// Fits `p̂_t, p̂_t', μ̂_t, μ̂_t'`. Randomness comes from per-purpose streams
/// of `(seed, replication)` keyed by `variant`, so different estimators of
/// the same replication draw independently.
#[allow(clippy::too_many_arguments)]
pub fn fit_nuisances(
    g: &Graph,
    x: &Matrix,
    d: &[u8],
    y: &[f64],
    config: &EstimatorConfig,
    seed: u64,
    replication: u64,
    variant: u64,
) -> Result<NuisanceFits> {
    config.trim.validate()?;
    let ind_t = indicators(g, d, &config.treatment);
    let ind_tp = indicators(g, d, &config.control);
    let rng = |p| variant_stream(seed, replication, p, variant);
    let model = &config.model;

    let propensities = || -> Result<(Vec<f64>, Vec<f64>)> {
        let p_t = fit_propensity(g, x, d, &config.treatment, model, &mut rng(Purpose::Propensity))?;
        let p_tp = if are_complementary(&config.treatment, &config.control) {
            p_t.iter().map(|p| 1.0 - p).collect()
        } else {
            fit_propensity(g, x, d, &config.control, model, &mut rng(Purpose::Misc))?
        };
        Ok((p_t, p_tp))
    };
    let outcomes = || -> Result<(Vec<f64>, Vec<f64>)> {
        let (a, b) = rayon::join(
            || fit_outcome(g, x, y, &ind_t, model, &mut rng(Purpose::OutcomeTreated)),
            || fit_outcome(g, x, y, &ind_tp, model, &mut rng(Purpose::OutcomeControl)),
        );
        Ok((a?, b?))
    };
    let (p, mu) = rayon::join(propensities, outcomes);
    let ((p_t, p_tp), (mu_t, mu_tp)) = (p?, mu?);
    Ok(NuisanceFits::new(p_t, mu_t, p_tp, mu_tp, config.trim))
}

/// Point estimate and inference from fitted nuisances.
pub fn report_from_fits(
    g: &Graph,
    d: &[u8],
    y: &[f64],
    config: &EstimatorConfig,
    fits: &NuisanceFits,
) -> Result<EstimateReport> {
    let ind_t = indicators(g, d, &config.treatment);
    let ind_tp = indicators(g, d, &config.control);
    let (tau_hat, contributions) = doubly_robust(y, &ind_t, &ind_tp, fits)?;
    let bandwidth = match config.bandwidth {
        Some(b) => b,
        None => hac_bandwidth(g)?,
    };
    let n = y.len();
    let mut warnings = Vec::new();
    let sigma2 = hac_variance(&contributions, g, bandwidth);
    let (hac_se, clamped) = standard_error(sigma2, n);
    if clamped {
        warnings.push(format!("negative HAC variance {sigma2:.3e} clamped to 0"));
    }
    let (iid_se, _) = standard_error(iid_variance(&contributions), n);
    let (ci_lo, ci_hi) = confidence_interval(tau_hat, hac_se, config.level);
    let (iid_ci_lo, iid_ci_hi) = confidence_interval(tau_hat, iid_se, config.level);
    let mut overlap_histogram = [0usize; 10];
    for &p in &fits.treatment.propensity {
        overlap_histogram[((p * 10.0) as usize).min(9)] += 1;
    }
    Ok(EstimateReport {
        tau_hat,
        contributions,
        hac_variance: sigma2,
        hac_se,
        iid_se,
        bandwidth,
        ci_lo,
        ci_hi,
        iid_ci_lo,
        iid_ci_hi,
        treated_count: d.iter().filter(|&&v| v == 1).count(),
        exposure_counts: (
            ind_t.iter().filter(|&&b| b).count(),
            ind_tp.iter().filter(|&&b| b).count(),
        ),
        overlap_histogram,
        trimmed: fits.trimmed,
        trained_epochs: config.model.epochs(),
        warnings,
    })
}

/// Fits nuisances and produces the full report for one dataset.
#[allow(clippy::too_many_arguments)]
pub fn estimate(
    g: &Graph,
    x: &Matrix,
    d: &[u8],
    y: &[f64],
    config: &EstimatorConfig,
    seed: u64,
    replication: u64,
    variant: u64,
) -> Result<EstimateReport> {
    if d.len() != g.n() || y.len() != g.n() {
        return Err(Error::Shape("treatments and outcomes need one entry per unit".into()));
    }
    let fits = fit_nuisances(g, x, d, y, config, seed, replication, variant)?;
    report_from_fits(g, d, y, config, &fits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fits(p_t: &[f64], mu_t: &[f64], p_tp: &[f64], mu_tp: &[f64]) -> NuisanceFits {
        NuisanceFits::new(
            p_t.to_vec(),
            mu_t.to_vec(),
            p_tp.to_vec(),
            mu_tp.to_vec(),
            TrimBounds::default(),
        )
    }

    #[test]
    fn trimming() {
        assert_eq!(trim(&[0.5, 0.0, 1.0], 0.01, 0.99), vec![0.5, 0.01, 0.99]);
        let f = fits(&[0.0, 0.5], &[0.0; 2], &[1.0, 0.5], &[0.0; 2]);
        assert_eq!(f.trimmed, 2);
        assert!(TrimBounds { lo: 0.0, hi: 0.5 }.validate().is_err());
    }

    #[test]
    fn intervals() {
        assert_eq!(confidence_interval(0.3, 0.0, 0.95), (0.3, 0.3));
        let (lo, hi) = confidence_interval(0.0, 1.0, 0.95);
        assert!((lo + 1.96).abs() < 1e-4 && (hi - 1.96).abs() < 1e-4);
        let (_, hi90) = confidence_interval(0.0, 1.0, 0.90);
        assert!((hi90 - 1.644854).abs() < 1e-6);
    }

    #[test]
    fn three_unit_hand_example() {
        let y = [2.0, 1.0, 4.0];
        let ind_t = [true, false, true];
        let ind_tp = [false, true, false];
        let f = fits(&[0.5, 0.25, 0.8], &[1.0, 2.0, 3.0], &[0.5, 0.75, 0.2], &[0.0, 1.5, 1.0]);
        let (tau, c) = doubly_robust(&y, &ind_t, &ind_tp, &f).unwrap();
        // unit 0: (2-1)/.5 + 1 - 0 = 3; unit 1: 2 - (1-1.5)/.75 - 1.5 = 0.5 + 2/3;
        // unit 2: (4-3)/.8 + 3 - 1 = 3.25
        let want = [3.0, 0.5 + 2.0 / 3.0, 3.25];
        for (a, b) in c.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((tau - want.iter().sum::<f64>() / 3.0).abs() < 1e-14);
    }

    #[test]
    fn exact_outcome_model_gives_mean_difference() {
        let mu_t = [1.0, 2.0, 0.5, 4.0];
        let mu_tp = [0.0, 1.0, 1.0, 2.5];
        let ind_t = [true, false, true, false];
        let ind_tp = [false, true, false, true];
        let y: Vec<f64> = (0..4).map(|i| if ind_t[i] { mu_t[i] } else { mu_tp[i] }).collect();
        let f = fits(&[0.3, 0.6, 0.9, 0.2], &mu_t, &[0.7, 0.4, 0.1, 0.8], &mu_tp);
        let (tau, _) = doubly_robust(&y, &ind_t, &ind_tp, &f).unwrap();
        let want = (0..4).map(|i| mu_t[i] - mu_tp[i]).sum::<f64>() / 4.0;
        assert!((tau - want).abs() < 1e-14);
    }

    #[test]
    fn zero_outcome_model_is_horvitz_thompson() {
        let y = [1.3, -0.2, 2.0, 0.7, 1.1];
        let d = [1u8, 0, 1, 1, 0];
        let q = [0.4, 0.5, 0.6, 0.7, 0.3];
        let ind_t: Vec<bool> = d.iter().map(|&v| v == 1).collect();
        let ind_tp: Vec<bool> = d.iter().map(|&v| v == 0).collect();
        let q_c: Vec<f64> = q.iter().map(|v| 1.0 - v).collect();
        let f = fits(&q, &[0.0; 5], &q_c, &[0.0; 5]);
        let (tau, _) = doubly_robust(&y, &ind_t, &ind_tp, &f).unwrap();
        let ht: f64 = (0..5)
            .map(|i| d[i] as f64 * y[i] / q[i] - (1.0 - d[i] as f64) * y[i] / (1.0 - q[i]))
            .sum::<f64>()
            / 5.0;
        assert!((tau - ht).abs() < 1e-12);
    }

    #[test]
    fn guard_against_bad_propensities() {
        let mut f = fits(&[0.5; 2], &[0.0; 2], &[0.5; 2], &[0.0; 2]);
        f.treatment.propensity[0] = 1.0;
        assert!(doubly_robust(&[0.0; 2], &[true; 2], &[false; 2], &f).is_err());
    }

    #[test]
    fn glm_pipeline_end_to_end() {
        let mut rng = crate::rng::stream(11, 0);
        let draw = crate::dgp::simulate_draw(
            crate::graph::generate_er(300, 5.0, &mut rng).unwrap(),
            &crate::dgp::DgpParams::default(),
            &mut rng,
        )
        .unwrap();
        let cfg = EstimatorConfig::own_treatment(NuisanceModel::Glm { order: 2 });
        let x = Matrix::column(&draw.x);
        let r = estimate(&draw.graph, &x, &draw.d, &draw.y, &cfg, 11, 0, 0).unwrap();
        assert!(r.tau_hat.is_finite() && r.hac_se >= 0.0 && r.ci_lo <= r.ci_hi);
        assert_eq!(r.treated_count, r.exposure_counts.0);
        assert_eq!(r.overlap_histogram.iter().sum::<usize>(), 300);
    }
}
