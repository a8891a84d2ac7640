use hlctdp::generator::random_tiny;
use hlctdp::oracle::{brute_force, OracleLimits};
use hlctdp::preprocess::preprocess;
use hlctdp::solver::lower_bound_greedy;
use hlctdp::{solve_exact, validate, FixMask, SolverConfig};

fn exact() -> SolverConfig {
    SolverConfig {
        gap_tol: 0.0,
        ..SolverConfig::default()
    }
}

fn suite() -> Vec<hlctdp::Instance> {
    let mut out = Vec::new();
    for seed in 0..36u64 {
        let n = 3 + (seed % 3) as usize;
        let l = 1 + (seed / 3 % 2) as usize;
        let r = 1 + (seed / 6 % 2) as usize;
        let coms = match n {
            3 => 4,
            4 => 4,
            _ => 3,
        };
        out.push(random_tiny(seed, n, l, r, coms));
    }
    out
}

#[test]
fn solver_matches_oracle() {
    for (s, inst) in suite().iter().enumerate() {
        let oracle = brute_force(inst, &OracleLimits::default()).unwrap();
        let sol = solve_exact(inst, &FixMask::empty(inst), &exact()).unwrap();
        assert!(validate(inst, &sol).ok, "seed {s}: {}", validate(inst, &sol));
        assert!(
            (sol.objective - oracle.objective).abs() <= 1e-9 * oracle.objective.abs().max(1.0),
            "seed {s}: solver {} oracle {}",
            sol.objective,
            oracle.objective
        );
        let (mask, _) = preprocess(inst);
        let masked = solve_exact(inst, &mask, &exact()).unwrap();
        assert!(
            (masked.objective - oracle.objective).abs() <= 1e-9 * oracle.objective.abs().max(1.0),
            "seed {s}: masked {} oracle {}",
            masked.objective,
            oracle.objective
        );
    }
}

#[test]
fn greedy_never_beats_oracle() {
    for inst in suite() {
        let oracle = brute_force(&inst, &OracleLimits::default()).unwrap();
        for cfg in hlctdp::oracle::configurations(&inst).step_by(7) {
            let g = lower_bound_greedy(&inst, &cfg);
            assert!(validate(&inst, &g).ok);
            assert!(g.objective <= oracle.objective + 1e-9);
        }
    }
}

#[test]
fn solver_is_deterministic() {
    let inst = random_tiny(99, 5, 2, 2, 6);
    let a = solve_exact(&inst, &FixMask::empty(&inst), &SolverConfig::default()).unwrap();
    let b = solve_exact(&inst, &FixMask::empty(&inst), &SolverConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn solver_matches_oracle_on_busier_instances() {
    let mut checked = 0;
    for seed in 100..160u64 {
        let n = 4 + (seed % 2) as usize;
        let l = 1 + (seed / 2 % 2) as usize;
        let r = 1 + (seed / 4 % 2) as usize;
        let inst = random_tiny(seed, n, l, r, 6);
        let Ok(oracle) = brute_force(&inst, &OracleLimits::default()) else {
            continue;
        };
        let sol = solve_exact(&inst, &FixMask::empty(&inst), &exact()).unwrap();
        assert!(validate(&inst, &sol).ok, "seed {seed}");
        assert!(
            (sol.objective - oracle.objective).abs() <= 1e-9 * oracle.objective.abs().max(1.0),
            "seed {seed}: solver {} oracle {}",
            sol.objective,
            oracle.objective
        );
        checked += 1;
    }
    assert!(checked >= 40, "only {checked} instances within oracle limits");
}
