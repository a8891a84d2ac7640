mod common;

use common::{all_candidates, close, cross_suite};
use hlctdp::analysis::validate_with;
use hlctdp::formulations::{build, encode_solution, model_size, BuildOptions, Formulation};
use hlctdp::oracle::{brute_force, OracleLimits};
use hlctdp::preprocess::preprocess;

const BOTH: [Formulation; 2] = [Formulation::F1, Formulation::F2];

#[test]
fn model_feasibility_matches_validation_on_every_candidate() {
    for (s, inst) in cross_suite().iter().enumerate() {
        let models: Vec<_> = BOTH
            .iter()
            .map(|&w| build(inst, w, &BuildOptions::default()).unwrap())
            .collect();
        let mut best = [f64::NEG_INFINITY; 2];
        for cand in all_candidates(inst) {
            let ok = validate_with(inst, &cand, true).ok;
            for (f, (model, index)) in models.iter().enumerate() {
                let x = encode_solution(inst, &cand, index, model.variables().len()).unwrap();
                let e = model.evaluate(&x).unwrap();
                assert_eq!(ok, e.is_feasible(), "instance {s} {}: {:?}", BOTH[f], e.violations);
                assert!(close(e.objective, cand.objective, 1e-9), "instance {s} {}", BOTH[f]);
                if ok {
                    best[f] = best[f].max(e.objective);
                }
            }
        }
        let oracle = brute_force(inst, &OracleLimits::default()).unwrap();
        for f in 0..2 {
            let model_best = best[f].max(0.0);
            assert!(
                close(model_best, oracle.objective, 1e-9),
                "instance {s} {}: {model_best} vs {}",
                BOTH[f],
                oracle.objective
            );
        }
    }
}

#[test]
fn dropping_consistency_only_relaxes() {
    let relaxed = BuildOptions {
        include_consistency: false,
        ..BuildOptions::default()
    };
    for inst in cross_suite() {
        let (full, ix) = build(&inst, Formulation::F2, &BuildOptions::default()).unwrap();
        let (loose, lix) = build(&inst, Formulation::F2, &relaxed).unwrap();
        for cand in all_candidates(&inst) {
            let a = full
                .evaluate(&encode_solution(&inst, &cand, &ix, full.variables().len()).unwrap())
                .unwrap();
            let b = loose
                .evaluate(&encode_solution(&inst, &cand, &lix, loose.variables().len()).unwrap())
                .unwrap();
            if a.is_feasible() {
                assert!(b.is_feasible());
            }
            assert_eq!(b.is_feasible(), validate_with(&inst, &cand, false).ok);
        }
    }
}

#[test]
fn valid_inequality_keeps_every_feasible_candidate() {
    let opts = BuildOptions {
        include_valid_inequality: true,
        ..BuildOptions::default()
    };
    for inst in cross_suite() {
        let (m, ix) = build(&inst, Formulation::F2, &opts).unwrap();
        for cand in all_candidates(&inst) {
            let e = m
                .evaluate(&encode_solution(&inst, &cand, &ix, m.variables().len()).unwrap())
                .unwrap();
            assert_eq!(e.is_feasible(), validate_with(&inst, &cand, true).ok);
        }
    }
}

#[test]
fn masked_models_keep_the_optimum() {
    for inst in cross_suite() {
        let oracle = brute_force(&inst, &OracleLimits::default()).unwrap();
        let (mask, _) = preprocess(&inst);
        for which in BOTH {
            let opts = BuildOptions {
                fix_mask: Some(mask.clone()),
                ..BuildOptions::default()
            };
            let (m, ix) = build(&inst, which, &opts).unwrap();
            // The oracle optimum may use a fixed route; some optimum must not.
            let best = all_candidates(&inst)
                .into_iter()
                .filter_map(|c| {
                    let x = encode_solution(&inst, &c, &ix, m.variables().len()).ok()?;
                    let e = m.evaluate(&x).ok()?;
                    e.is_feasible().then_some(e.objective)
                })
                .fold(0.0, f64::max);
            assert!(
                close(best, oracle.objective, 1e-9),
                "{which}: {best} vs {}",
                oracle.objective
            );
        }
    }
}

#[test]
fn built_sizes_follow_closed_forms() {
    for inst in cross_suite() {
        for which in BOTH {
            let (m, _) = build(&inst, which, &BuildOptions::default()).unwrap();
            let size = model_size(&inst, which);
            assert_eq!(m.binary_count(), size.binaries);
            assert_eq!(m.continuous_count(), size.continuous);
            assert_eq!(m.logical_constraint_count(), size.constraints);
        }
    }
}
