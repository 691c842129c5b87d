//! Exact ground truth on tiny discrete models.
//!
//! Every shock has a finite support, so conditional expectations given the
//! exposure are finite sums. Joint atoms are ordered lexicographically over
//! the coordinates `(ε_0, …, ε_{n-1}, ν_0, …, ν_{n-1})`, each coordinate
//! running through its support in the listed order and the last coordinate
//! moving fastest. `ε` and `ν` are independent, and so are the coordinates
//! within each.

mod identification;
mod random;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::autodiff::Matrix;
use crate::dgp::{outcome_intercepts, simulate_selection, OutcomeParams, SelectionParams};
use crate::error::{invalid, Error, Result};
use crate::exposure::{indicator, ExposureSpec};
use crate::graph::Graph;
use crate::linalg::gauss_solve;

pub use identification::{
    has_exact_interference, pinned_profile, truncated_pscore, verify_neighborhood_decomposition,
    verify_remainder_decomposition, Decomposition, Pinning, PscoreTruncation,
};
pub use random::{random_instance, InstanceKind, RandomInstance};

/// Largest number of units a model may have.
pub const MAX_UNITS: usize = 10;
/// Largest joint support the enumerators accept.
pub const MAX_ATOMS: usize = 1 << 20;

/// Finite distribution of one scalar shock.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl Support {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(invalid("support needs matching, non-empty value and probability lists"));
        }
        if values.iter().any(|v| !v.is_finite()) || probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(invalid("support values must be finite and probabilities non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("support probabilities sum to {total}")));
        }
        Ok(Self { values, probs })
    }

    pub fn point(v: f64) -> Self {
        Self {
            values: vec![v],
            probs: vec![1.0],
        }
    }

    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let p = 1.0 / values.len().max(1) as f64;
        let probs = vec![p; values.len()];
        Self::new(values, probs)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `D = h(A, X, ν)` for a user-supplied selection map.
pub type SelectionFn = dyn Fn(&Graph, &[f64], &[f64]) -> Vec<u8> + Send + Sync;
/// `Y = g(A, X, D, ε)` for a user-supplied outcome map.
pub type OutcomeFn = dyn Fn(&Graph, &[f64], &[u8], &[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
pub enum SelectionRule {
    /// The binary game solved by best responses, as in [`crate::dgp`].
    Game {
        params: SelectionParams,
        max_iter: usize,
    },
    Custom(Arc<SelectionFn>),
}

#[derive(Clone)]
pub enum OutcomeRule {
    /// The linear-in-means system, solved exactly.
    LinearInMeans(OutcomeParams),
    Custom(Arc<OutcomeFn>),
}

impl fmt::Debug for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Game { params, max_iter } => f
                .debug_struct("Game")
                .field("params", params)
                .field("max_iter", max_iter)
                .finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl fmt::Debug for OutcomeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LinearInMeans(p) => f.debug_tuple("LinearInMeans").field(p).finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A network model whose shocks all have finite support.
#[derive(Debug, Clone)]
pub struct DiscreteDgp {
    graph: Graph,
    x: Vec<f64>,
    eps: Vec<Support>,
    nu: Vec<Support>,
    selection: SelectionRule,
    outcome: OutcomeRule,
}

/// All atoms of a product of supports in lexicographic order (last fastest):
/// `(probability, values)`.
fn product_atoms(supports: &[Support]) -> Vec<(f64, Vec<f64>)> {
    let total: usize = supports.iter().map(Support::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; supports.len()];
    for _ in 0..total {
        let mut p = 1.0;
        let mut v = Vec::with_capacity(supports.len());
        for (s, &k) in supports.iter().zip(&idx) {
            p *= s.probs[k];
            v.push(s.values[k]);
        }
        out.push((p, v));
        for c in (0..supports.len()).rev() {
            idx[c] += 1;
            if idx[c] < supports[c].len() {
                break;
            }
            idx[c] = 0;
        }
    }
    out
}

fn atom_count(supports: &[Support]) -> Option<usize> {
    supports.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.len()))
}

impl DiscreteDgp {
    pub fn new(
        graph: Graph,
        x: Vec<f64>,
        eps: Vec<Support>,
        nu: Vec<Support>,
        selection: SelectionRule,
        outcome: OutcomeRule,
    ) -> Result<Self> {
        let n = graph.n();
        if n == 0 || n > MAX_UNITS {
            return Err(invalid(format!(
                "enumerable models need 1..={MAX_UNITS} units, got {n}"
            )));
        }
        if x.len() != n || eps.len() != n || nu.len() != n {
            return Err(invalid("one covariate and one support per shock per unit required"));
        }
        if let SelectionRule::Game { max_iter: 0, .. } = selection {
            return Err(invalid("max_iter must be at least 1"));
        }
        if let OutcomeRule::LinearInMeans(p) = &outcome {
            if !(p.beta.abs() < 1.0) {
                return Err(invalid(format!(
                    "outcome peer effect |beta| = {} must be < 1",
                    p.beta.abs()
                )));
            }
        }
        let dgp = Self {
            graph,
            x,
            eps,
            nu,
            selection,
            outcome,
        };
        match dgp.joint_atom_count() {
            Some(c) if c <= MAX_ATOMS => Ok(dgp),
            _ => Err(invalid(format!("joint support exceeds {MAX_ATOMS} atoms"))),
        }
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn eps_supports(&self) -> &[Support] {
        &self.eps
    }

    pub fn nu_supports(&self) -> &[Support] {
        &self.nu
    }

    pub fn selection(&self) -> &SelectionRule {
        &self.selection
    }

    pub fn outcome(&self) -> &OutcomeRule {
        &self.outcome
    }

    pub fn joint_atom_count(&self) -> Option<usize> {
        atom_count(&self.eps)?.checked_mul(atom_count(&self.nu)?)
    }

    /// `ε` atoms in order, `(probability, ε)`.
    pub fn eps_atoms(&self) -> Vec<(f64, Vec<f64>)> {
        product_atoms(&self.eps)
    }

    /// `ν` atoms in order, `(probability, ν)`.
    pub fn nu_atoms(&self) -> Vec<(f64, Vec<f64>)> {
        product_atoms(&self.nu)
    }

    /// Runs the selection rule on an arbitrary graph (used for induced subgraphs).
    pub(crate) fn select_on(&self, g: &Graph, x: &[f64], nu: &[f64]) -> Result<Vec<u8>> {
        let d = match &self.selection {
            SelectionRule::Game { params, max_iter } => simulate_selection(g, x, nu, params, *max_iter)?.d,
            SelectionRule::Custom(f) => f(g, x, nu),
        };
        if d.len() != g.n() || d.iter().any(|&v| v > 1) {
            return Err(invalid("selection rule must return one 0/1 treatment per unit"));
        }
        Ok(d)
    }

    /// Realized treatments for shock vector `nu`.
    pub fn treatments(&self, nu: &[f64]) -> Result<Vec<u8>> {
        self.select_on(&self.graph, &self.x, nu)
    }

    /// Potential outcomes `Y(d)` at shock vector `eps`.
    pub fn outcomes(&self, d: &[u8], eps: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if d.len() != n || eps.len() != n {
            return Err(invalid("treatment and shock vectors need one entry per unit"));
        }
        let y = match &self.outcome {
            OutcomeRule::LinearInMeans(p) => {
                let c = outcome_intercepts(&self.graph, &self.x, d, eps, p);
                if p.beta == 0.0 {
                    c
                } else {
                    // (I − β Ã) y = c with Ã row-normalized; isolated rows stay identity
                    let mut m = Matrix::identity(n);
                    for i in 0..n {
                        let nbrs = self.graph.neighbors(i);
                        for &j in nbrs {
                            m.data[i * n + j] -= p.beta / nbrs.len() as f64;
                        }
                    }
                    gauss_solve(&m, &c)?
                }
            }
            OutcomeRule::Custom(f) => f(&self.graph, &self.x, d, eps),
        };
        if y.len() != n {
            return Err(invalid("outcome rule must return one outcome per unit"));
        }
        Ok(y)
    }

    /// `E[Y(d) | X, A]`, averaging over the `ε` atoms.
    pub fn mean_outcomes(&self, d: &[u8]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.n()];
        for (p, eps) in self.eps_atoms() {
            for (a, y) in acc.iter_mut().zip(self.outcomes(d, &eps)?) {
                *a += p * y;
            }
        }
        Ok(acc)
    }

    /// Distribution of the realized treatment vector, sorted by the vector.
    pub fn treatment_distribution(&self) -> Result<Vec<(Vec<u8>, f64)>> {
        let mut dist: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for (p, nu) in self.nu_atoms() {
            *dist.entry(self.treatments(&nu)?).or_insert(0.0) += p;
        }
        Ok(dist.into_iter().collect())
    }

    /// Sum of all joint atom probabilities, accumulated in atom order.
    pub fn total_probability(&self) -> f64 {
        let nu: Vec<f64> = self.nu_atoms().into_iter().map(|(p, _)| p).collect();
        let mut total = 0.0;
        for (pe, _) in self.eps_atoms() {
            for pn in &nu {
                total += pe * pn;
            }
        }
        total
    }

    /// `E[f(D, Y)]` over the joint atoms. Parallel over `ε` atoms; the partial
    /// sums are added in atom order, so the result does not depend on the
    /// thread count.
    pub fn expectation<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[u8], &[f64]) -> f64 + Sync,
    {
        let nu = self.nu_table()?;
        let eps = self.eps_atoms();
        let partial: Vec<f64> = eps
            .par_iter()
            .map(|(pe, e)| {
                let mut s = 0.0;
                for (pn, d) in &nu {
                    let y = self.outcomes(d, e)?;
                    s += pe * pn * f(d, &y);
                }
                Ok(s)
            })
            .collect::<Result<_>>()?;
        Ok(partial.iter().sum())
    }

    fn nu_table(&self) -> Result<Vec<(f64, Vec<u8>)>> {
        self.nu_atoms()
            .into_iter()
            .map(|(p, nu)| Ok((p, self.treatments(&nu)?)))
            .collect()
    }

    /// Relabels units so that unit `i` becomes `perm[i]`. Only the built-in
    /// rules are known to be equivariant, so custom rules are refused.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if matches!(self.selection, SelectionRule::Custom(_)) || matches!(self.outcome, OutcomeRule::Custom(_)) {
            return Err(invalid("custom rules cannot be relabeled"));
        }
        let graph = self.graph.permute(perm)?;
        let n = self.n();
        let mut x = vec![0.0; n];
        let mut eps = self.eps.clone();
        let mut nu = self.nu.clone();
        for i in 0..n {
            x[perm[i]] = self.x[i];
            eps[perm[i]] = self.eps[i].clone();
            nu[perm[i]] = self.nu[i].clone();
        }
        Self::new(graph, x, eps, nu, self.selection.clone(), self.outcome.clone())
    }
}

/// Exact estimand with its per-unit ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct TauReport {
    /// Average of the per-unit contrasts over the included units.
    pub tau: f64,
    /// `E[Y_i | T_i = t] − E[Y_i | T_i = t']`, `None` for excluded units.
    pub per_unit: Vec<Option<f64>>,
    /// `P(T_i = t | X, A)`.
    pub prob_t: Vec<f64>,
    pub prob_tp: Vec<f64>,
    /// `E[Y_i | T_i = t, X, A]` where defined.
    pub mean_t: Vec<Option<f64>>,
    pub mean_tp: Vec<Option<f64>>,
    /// Units with a zero-probability conditioning event.
    pub excluded: Vec<usize>,
    pub warnings: Vec<String>,
}

impl TauReport {
    pub fn included(&self) -> usize {
        self.per_unit.iter().filter(|v| v.is_some()).count()
    }
}

/// `τ(t, t') = mean_i (E[Y_i | T_i = t, X, A] − E[Y_i | T_i = t', X, A])`
/// by summing over every joint atom. Units where either event has
/// probability zero are left out of the average with a warning.
pub fn exact_tau(dgp: &DiscreteDgp, t: &ExposureSpec, tp: &ExposureSpec) -> Result<TauReport> {
    t.validate()?;
    tp.validate()?;
    let n = dgp.n();
    let g = dgp.graph();
    let nu = dgp.nu_table()?;
    let ind: Vec<(Vec<bool>, Vec<bool>)> = nu
        .iter()
        .map(|(_, d)| {
            (
                (0..n).map(|i| indicator(g, d, t, i)).collect(),
                (0..n).map(|i| indicator(g, d, tp, i)).collect(),
            )
        })
        .collect();

    // per ε atom: [P(t), E[Y 1(t)], P(t'), E[Y 1(t')]] per unit
    let eps = dgp.eps_atoms();
    let partial: Vec<Vec<[f64; 4]>> = eps
        .par_iter()
        .map(|(pe, e)| {
            let mut acc = vec![[0.0; 4]; n];
            for ((pn, d), (it, itp)) in nu.iter().zip(&ind) {
                let p = pe * pn;
                let y = dgp.outcomes(d, e)?;
                for i in 0..n {
                    if it[i] {
                        acc[i][0] += p;
                        acc[i][1] += p * y[i];
                    }
                    if itp[i] {
                        acc[i][2] += p;
                        acc[i][3] += p * y[i];
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut sums = vec![[0.0; 4]; n];
    for block in &partial {
        for (s, b) in sums.iter_mut().zip(block) {
            for k in 0..4 {
                s[k] += b[k];
            }
        }
    }

    let mut report = TauReport {
        tau: 0.0,
        per_unit: vec![None; n],
        prob_t: sums.iter().map(|s| s[0]).collect(),
        prob_tp: sums.iter().map(|s| s[2]).collect(),
        mean_t: sums.iter().map(|s| (s[0] > 0.0).then(|| s[1] / s[0])).collect(),
        mean_tp: sums.iter().map(|s| (s[2] > 0.0).then(|| s[3] / s[2])).collect(),
        excluded: Vec::new(),
        warnings: Vec::new(),
    };
    let mut total = 0.0;
    for i in 0..n {
        match (report.mean_t[i], report.mean_tp[i]) {
            (Some(a), Some(b)) => {
                report.per_unit[i] = Some(a - b);
                total += a - b;
            }
            _ => report.excluded.push(i),
        }
    }
    let included = report.included();
    if included == 0 {
        return Err(Error::Precondition(
            "conditioning event has probability zero at every unit".into(),
        ));
    }
    if !report.excluded.is_empty() {
        report.warnings.push(format!(
            "{} unit(s) excluded for zero-probability exposure: {:?}",
            report.excluded.len(),
            report.excluded
        ));
    }
    report.tau = total / included as f64;
    Ok(report)
}
