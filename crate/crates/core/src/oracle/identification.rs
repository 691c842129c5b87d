//! Identification decompositions and propensity truncation, computed exactly.
//!
//! Both decompositions rewrite `τ(t, t')` as an average of potential-outcome
//! contrasts against a baseline profile `δ` on the radius-`K` neighborhood.
//! They need the control exposure to pin that profile down: whenever
//! `T_i = t'`, `D_{N(i,K)}` must equal one fixed `δ`.

use std::collections::BTreeMap;

use super::{exact_tau, DiscreteDgp, OutcomeRule, MAX_ATOMS};
use crate::error::{Error, Result};
use crate::exposure::{indicator, ExposureSpec};
use crate::graph::Graph;

/// What `T_i = t` says about the treatments on `N(i, K)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pinning {
    /// Every treatment profile with `T_i = t` restricts to this vector on the
    /// sorted unit list of `N(i, K)`.
    Pinned(Vec<u8>),
    /// No profile has `T_i = t`.
    Impossible,
    /// At least two restrictions are possible.
    Free,
}

/// Structural check over every treatment profile of `N(i, max(K, 1))`, the
/// region the exposure and the neighborhood both live in.
pub fn pinned_profile(g: &Graph, spec: &ExposureSpec, i: usize, k: usize) -> Pinning {
    let hood = g.k_neighborhood(i, k);
    let region = g.k_neighborhood(i, k.max(1));
    let mut d = vec![0u8; g.n()];
    let mut found: Option<Vec<u8>> = None;
    for bits in 0u64..(1u64 << region.len()) {
        for (b, &u) in region.iter().enumerate() {
            d[u] = ((bits >> b) & 1) as u8;
        }
        if !indicator(g, &d, spec, i) {
            continue;
        }
        let restricted: Vec<u8> = hood.iter().map(|&u| d[u]).collect();
        match &found {
            None => found = Some(restricted),
            Some(prev) if *prev != restricted => return Pinning::Free,
            Some(_) => {}
        }
    }
    found.map_or(Pinning::Impossible, Pinning::Pinned)
}

/// Whether every unit's potential outcome depends on treatments only through
/// `N(i, K)`. Analytic for the linear-in-means rule, by enumeration over all
/// treatment vectors and `ε` atoms otherwise.
pub fn has_exact_interference(dgp: &DiscreteDgp, k: usize) -> Result<bool> {
    if let OutcomeRule::LinearInMeans(p) = dgp.outcome() {
        return Ok(p.beta == 0.0 && (k >= 1 || p.spillover == 0.0));
    }
    let n = dgp.n();
    let eps = dgp.eps_atoms();
    if (1usize << n).saturating_mul(eps.len()).saturating_mul(n + 1) > 8 * MAX_ATOMS {
        return Err(Error::Precondition(
            "model too large to check interference by enumeration".into(),
        ));
    }
    let g = dgp.graph();
    let hoods: Vec<Vec<usize>> = (0..n).map(|i| g.k_neighborhood(i, k)).collect();
    for bits in 0u64..(1u64 << n) {
        let d: Vec<u8> = (0..n).map(|u| ((bits >> u) & 1) as u8).collect();
        for (_, e) in &eps {
            let y = dgp.outcomes(&d, e)?;
            for i in 0..n {
                let mut local = vec![0u8; n];
                for &u in &hoods[i] {
                    local[u] = d[u];
                }
                let yl = dgp.outcomes(&local, e)?[i];
                if (yl - y[i]).abs() > 1e-12 * (1.0 + y[i].abs()) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// `lhs = τ(t, t')` from direct enumeration, `rhs` the decomposition, and
/// `residual = lhs − rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Units entering both averages.
    pub units: usize,
}

/// Baseline profile `δ_i` for every unit, refusing when `t'` leaves some
/// unit's neighborhood free.
fn baselines(g: &Graph, tp: &ExposureSpec, k: usize) -> Result<Vec<Option<Vec<u8>>>> {
    (0..g.n())
        .map(|i| match pinned_profile(g, tp, i, k) {
            Pinning::Pinned(v) => Ok(Some(v)),
            Pinning::Impossible => Ok(None),
            Pinning::Free => Err(Error::Precondition(format!(
                "control exposure does not pin the radius-{k} treatment profile of unit {i}"
            ))),
        })
        .collect()
}

/// Memoized `E[Y(d) | X, A]`.
struct MeanOutcomes<'a> {
    dgp: &'a DiscreteDgp,
    cache: BTreeMap<Vec<u8>, Vec<f64>>,
}

impl<'a> MeanOutcomes<'a> {
    fn new(dgp: &'a DiscreteDgp) -> Self {
        Self {
            dgp,
            cache: BTreeMap::new(),
        }
    }

    fn unit(&mut self, d: &[u8], i: usize) -> Result<f64> {
        if let Some(v) = self.cache.get(d) {
            return Ok(v[i]);
        }
        let v = self.dgp.mean_outcomes(d)?;
        let out = v[i];
        self.cache.insert(d.to_vec(), v);
        Ok(out)
    }
}

/// Decomposition under exact radius-`K` interference in outcomes:
/// `τ = mean_i Σ_d (E[Ỹ_i(d)] − E[Ỹ_i(δ)]) P(D_{N(i,K)} = d | T_i = t)`,
/// where `Ỹ_i` takes the treatments on `N(i, K)` only (others set to 0).
pub fn verify_neighborhood_decomposition(
    dgp: &DiscreteDgp,
    t: &ExposureSpec,
    tp: &ExposureSpec,
    k: usize,
) -> Result<Decomposition> {
    if !has_exact_interference(dgp, k)? {
        return Err(Error::Precondition(format!(
            "outcomes are not restricted to radius-{k} interference"
        )));
    }
    let g = dgp.graph();
    let deltas = baselines(g, tp, k)?;
    let lhs = exact_tau(dgp, t, tp)?;
    let dist = dgp.treatment_distribution()?;
    let mut means = MeanOutcomes::new(dgp);
    let n = dgp.n();
    let mut total = 0.0;
    for i in 0..n {
        if lhs.per_unit[i].is_none() {
            continue;
        }
        let delta = deltas[i]
            .as_ref()
            .expect("included units have a reachable control exposure");
        let hood = g.k_neighborhood(i, k);
        let embed = |local: &[u8]| {
            let mut full = vec![0u8; n];
            for (&u, &v) in hood.iter().zip(local) {
                full[u] = v;
            }
            full
        };
        let mut cond: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        let mut p_t = 0.0;
        for (d, p) in &dist {
            if indicator(g, d, t, i) {
                p_t += p;
                *cond.entry(hood.iter().map(|&u| d[u]).collect()).or_insert(0.0) += p;
            }
        }
        let base = means.unit(&embed(delta), i)?;
        let mut unit = 0.0;
        for (local, p) in cond {
            unit += (means.unit(&embed(&local), i)? - base) * p / p_t;
        }
        total += unit;
    }
    let rhs = total / lhs.included() as f64;
    Ok(Decomposition {
        lhs: lhs.tau,
        rhs,
        residual: lhs.tau - rhs,
        units: lhs.included(),
    })
}

/// Whether `1{T_i = t}` is a function of the treatments on `N(i, K)`. Always
/// true for `K ≥ 1`; for `K = 0` the treated-neighbor condition must not bind.
fn exposure_is_local(g: &Graph, spec: &ExposureSpec, k: usize) -> bool {
    k >= 1
        || (0..g.n()).all(|i| {
            let first = spec.treated_count_in_range(0);
            (1..=g.degree(i)).all(|c| spec.treated_count_in_range(c) == first)
        })
}

/// Decomposition allowing interference at any range:
/// `τ = mean_i Σ_d E[Y_i(d) − Y_i(δ, d_{−N(i,K)})] P(D = d | T_i = t) + R_n`.
/// `residual` is `R_n`, which vanishes when treatments are independent.
pub fn verify_remainder_decomposition(
    dgp: &DiscreteDgp,
    t: &ExposureSpec,
    tp: &ExposureSpec,
    k: usize,
) -> Result<Decomposition> {
    let g = dgp.graph();
    if !exposure_is_local(g, t, k) || !exposure_is_local(g, tp, k) {
        return Err(Error::Precondition(format!(
            "exposure depends on units beyond radius {k}"
        )));
    }
    let deltas = baselines(g, tp, k)?;
    let lhs = exact_tau(dgp, t, tp)?;
    let dist = dgp.treatment_distribution()?;
    let mut means = MeanOutcomes::new(dgp);
    let mut total = 0.0;
    for i in 0..dgp.n() {
        if lhs.per_unit[i].is_none() {
            continue;
        }
        let delta = deltas[i]
            .as_ref()
            .expect("included units have a reachable control exposure");
        let hood = g.k_neighborhood(i, k);
        let mut p_t = 0.0;
        let mut acc = 0.0;
        for (d, p) in &dist {
            if !indicator(g, d, t, i) {
                continue;
            }
            let mut swapped = d.clone();
            for (&u, &v) in hood.iter().zip(delta) {
                swapped[u] = v;
            }
            p_t += p;
            acc += p * (means.unit(d, i)? - means.unit(&swapped, i)?);
        }
        total += acc / p_t;
    }
    let rhs = total / lhs.included() as f64;
    Ok(Decomposition {
        lhs: lhs.tau,
        rhs,
        residual: lhs.tau - rhs,
        units: lhs.included(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PscoreTruncation {
    /// `P(T_i = t | X, A)`.
    pub full: f64,
    /// The same probability when selection is re-run on the subgraph induced
    /// by `N(i, L)` alone.
    pub truncated: f64,
    pub gap: f64,
}

/// Propensity of unit `i` on the whole graph versus on its radius-`L` ball.
/// The ball is relabeled in increasing order of the original labels and
/// keeps only the shocks and covariates of its own units.
pub fn truncated_pscore(dgp: &DiscreteDgp, i: usize, t: &ExposureSpec, l: usize) -> Result<PscoreTruncation> {
    t.validate()?;
    if i >= dgp.n() {
        return Err(crate::error::invalid("unit out of range"));
    }
    let g = dgp.graph();
    let full: f64 = dgp
        .treatment_distribution()?
        .iter()
        .filter(|(d, _)| indicator(g, d, t, i))
        .map(|(_, p)| p)
        .sum();

    let sub = g.induced_subgraph(&g.k_neighborhood(i, l))?;
    let li = sub.local(i).expect("ball contains its center");
    let x: Vec<f64> = sub.original.iter().map(|&u| dgp.x()[u]).collect();
    let supports: Vec<_> = sub.original.iter().map(|&u| dgp.nu_supports()[u].clone()).collect();
    let mut truncated = 0.0;
    for (p, nu) in super::product_atoms(&supports) {
        let d = dgp.select_on(&sub.graph, &x, &nu)?;
        if indicator(&sub.graph, &d, t, li) {
            truncated += p;
        }
    }
    Ok(PscoreTruncation {
        full,
        truncated,
        gap: (full - truncated).abs(),
    })
}
