mod common;

use common::{dual_exact_tau, permutation};
use netcausal::estimator::{doubly_robust, NuisanceFits, TrimBounds};
use netcausal::exposure::indicators;
use netcausal::oracle::{
    exact_tau, random_instance, verify_neighborhood_decomposition, verify_remainder_decomposition, InstanceKind,
    RandomInstance,
};
use netcausal::rng::stream;
use netcausal::Error;
use proptest::prelude::*;

fn instance(seed: u64, kind: InstanceKind, n: usize) -> RandomInstance {
    random_instance(kind, n, &mut stream(seed, 30)).unwrap()
}

fn kind_of(k: u8) -> InstanceKind {
    match k {
        0 => InstanceKind::ExactInterference { k: 0 },
        1 => InstanceKind::ExactInterference { k: 1 },
        _ => InstanceKind::IndependentTreatments,
    }
}

/// Instances whose exposures leave every unit without support are skipped.
fn tau_or_skip(inst: &RandomInstance) -> Option<netcausal::oracle::TauReport> {
    match exact_tau(&inst.dgp, &inst.treatment, &inst.control) {
        Ok(r) => Some(r),
        Err(Error::Precondition(_)) => None,
        Err(e) => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn probabilities_sum_to_one(seed in 0u64..100_000, k in 0u8..3, n in 2usize..=6) {
        let inst = instance(seed, kind_of(k), n);
        prop_assert!((inst.dgp.total_probability() - 1.0).abs() < 1e-12);
        let dist = inst.dgp.treatment_distribution().unwrap();
        prop_assert!((dist.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    /// The enumerator agrees with an independently coded second enumerator
    /// that reruns the simulators on every atom.
    #[test]
    fn enumerators_agree(seed in 0u64..100_000, k in 0u8..3, n in 2usize..=5) {
        let inst = instance(seed, kind_of(k), n);
        let dual = dual_exact_tau(&inst.dgp, &inst.treatment, &inst.control);
        match tau_or_skip(&inst) {
            Some(r) => {
                let d = dual.expect("both enumerators see the same support");
                prop_assert!((r.tau - d).abs() < 1e-9, "{} vs {d}", r.tau);
            }
            None => prop_assert!(dual.is_none()),
        }
    }

    /// Relabeling the units of the model leaves `τ` unchanged.
    #[test]
    fn relabeling_invariance(seed in 0u64..100_000, k in 0u8..3, n in 2usize..=6) {
        let inst = instance(seed, kind_of(k), n);
        let perm = permutation(n, &mut stream(seed, 31));
        let moved = inst.dgp.permute(&perm).unwrap();
        let a = exact_tau(&inst.dgp, &inst.treatment, &inst.control);
        let b = exact_tau(&moved, &inst.treatment, &inst.control);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.tau - b.tau).abs() < 1e-10);
                for i in 0..n {
                    prop_assert_eq!(a.per_unit[i].is_some(), b.per_unit[perm[i]].is_some());
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} / {b:?}"),
        }
    }
}

/// The doubly robust moment with exact nuisances is unbiased:
/// `E[τ̂] = τ` computed over the full joint distribution.
#[test]
fn exact_nuisances_make_dr_unbiased() {
    let mut checked = 0;
    for seed in 0..90u64 {
        let inst = instance(seed, kind_of((seed % 3) as u8), 2 + (seed as usize % 4));
        let Some(report) = tau_or_skip(&inst) else { continue };
        // every unit must enter τ for the full-sample average to match
        if !report.excluded.is_empty() {
            continue;
        }
        let mu_t: Vec<f64> = report.mean_t.iter().map(|m| m.unwrap()).collect();
        let mu_tp: Vec<f64> = report.mean_tp.iter().map(|m| m.unwrap()).collect();
        let trim = TrimBounds {
            lo: 1e-15,
            hi: 1.0 - 1e-15,
        };
        let fits = NuisanceFits::new(report.prob_t.clone(), mu_t, report.prob_tp.clone(), mu_tp, trim);
        let g = inst.dgp.graph();
        let mean = inst
            .dgp
            .expectation(|d, y| {
                let it = indicators(g, d, &inst.treatment);
                let itp = indicators(g, d, &inst.control);
                doubly_robust(y, &it, &itp, &fits).unwrap().0
            })
            .unwrap();
        assert!(
            (mean - report.tau).abs() < 1e-10,
            "seed {seed}: {mean} vs {}",
            report.tau
        );
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} instances had full support");
}

#[test]
fn decompositions_hold_on_random_instances() {
    let mut checked = [0usize; 3];
    for seed in 0..60 {
        for (slot, k) in [0u8, 1, 2].into_iter().enumerate() {
            let inst = instance(seed, kind_of(k), 2 + (seed as usize % 5));
            let res = if slot < 2 {
                verify_neighborhood_decomposition(&inst.dgp, &inst.treatment, &inst.control, inst.k)
            } else {
                verify_remainder_decomposition(&inst.dgp, &inst.treatment, &inst.control, inst.k)
            };
            match res {
                Ok(dec) => {
                    assert!(dec.residual.abs() < 1e-10, "kind {k} seed {seed}: {dec:?}");
                    let dual = dual_exact_tau(&inst.dgp, &inst.treatment, &inst.control).unwrap();
                    assert!((dec.lhs - dual).abs() < 1e-9);
                    checked[slot] += 1;
                }
                Err(Error::Precondition(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
    assert!(checked.iter().all(|&c| c >= 20), "{checked:?}");
}
