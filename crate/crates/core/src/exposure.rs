//! Interval exposure mappings.
//!
//! An exposure value `t` is described by a treatment level `d` and two
//! intervals: `1{T_i = t} = 1{D_i = d, Σ_j A_ij D_j ∈ Δ, Σ_j A_ij ∈ Γ}`.
//! Endpoints are closed; unbounded sides use `f64::INFINITY`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureSpec {
    pub d: u8,
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

impl ExposureSpec {
    pub fn new(d: u8, delta: (f64, f64), gamma: (f64, f64)) -> Result<Self> {
        let spec = Self {
            d,
            delta_lo: delta.0,
            delta_hi: delta.1,
            gamma_lo: gamma.0,
            gamma_hi: gamma.1,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `T_i = D_i`: the exposure is own treatment only.
    pub fn own_treatment(d: u8) -> Self {
        Self {
            d,
            delta_lo: 0.0,
            delta_hi: f64::INFINITY,
            gamma_lo: 0.0,
            gamma_hi: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d > 1 {
            return Err(invalid(format!("treatment level must be 0 or 1, got {}", self.d)));
        }
        let ok = |lo: f64, hi: f64| !lo.is_nan() && !hi.is_nan() && lo <= hi && hi >= 0.0;
        if !ok(self.delta_lo, self.delta_hi) {
            return Err(invalid(format!(
                "bad treated-neighbor interval [{}, {}]",
                self.delta_lo, self.delta_hi
            )));
        }
        if !ok(self.gamma_lo, self.gamma_hi) {
            return Err(invalid(format!(
                "bad degree interval [{}, {}]",
                self.gamma_lo, self.gamma_hi
            )));
        }
        Ok(())
    }

    pub fn degree_in_range(&self, degree: usize) -> bool {
        let k = degree as f64;
        self.gamma_lo <= k && k <= self.gamma_hi
    }

    pub fn treated_count_in_range(&self, count: usize) -> bool {
        let k = count as f64;
        self.delta_lo <= k && k <= self.delta_hi
    }

    /// Whether the mapping ignores the neighbors' treatments and the degree
    /// entirely for units of degree at most `max_degree`.
    pub fn is_own_treatment_only(&self, max_degree: usize) -> bool {
        self.delta_lo <= 0.0
            && self.delta_hi >= max_degree as f64
            && self.gamma_lo <= 0.0
            && self.gamma_hi >= max_degree as f64
    }
}

/// `1{T_i = t}` for a single unit.
pub fn indicator(g: &Graph, d: &[u8], spec: &ExposureSpec, i: usize) -> bool {
    if d[i] != spec.d || !spec.degree_in_range(g.degree(i)) {
        return false;
    }
    let treated = g.neighbors(i).iter().filter(|&&j| d[j] == 1).count();
    spec.treated_count_in_range(treated)
}

pub fn indicators(g: &Graph, d: &[u8], spec: &ExposureSpec) -> Vec<bool> {
    (0..g.n()).map(|i| indicator(g, d, spec, i)).collect()
}

/// Units whose degree lies in `Γ`: the propensity-score fitting population.
pub fn gamma_population(g: &Graph, spec: &ExposureSpec) -> Vec<usize> {
    (0..g.n()).filter(|&i| spec.degree_in_range(g.degree(i))).collect()
}

/// Whether `spec_b` is the complement of `spec_a` within the `Γ` population
/// (opposite `d`, common `Γ`, both `Δ` unrestricted), in which case
/// `p_b = 1 - p_a` on that population.
pub fn are_complementary(a: &ExposureSpec, b: &ExposureSpec) -> bool {
    let unrestricted = |s: &ExposureSpec| s.delta_lo <= 0.0 && s.delta_hi == f64::INFINITY;
    a.d != b.d && a.gamma_lo == b.gamma_lo && a.gamma_hi == b.gamma_hi && unrestricted(a) && unrestricted(b)
}
