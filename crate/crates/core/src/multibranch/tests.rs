use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::primal::{pareto_dp, quantized_dp};
use super::*;
use crate::stats::spearman;

fn toy_data(n: usize, seed: u64) -> Dataset {
    let mut r = crate::rng::seeded(seed);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![StandardNormal.sample(&mut r), StandardNormal.sample(&mut r)])
        .collect();
    let ys = xs
        .iter()
        .map(|x: &Vec<f64>| {
            let noise: f64 = StandardNormal.sample(&mut r);
            if x[0] - 0.5 * x[1] + 0.3 * noise >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Dataset::empirical(xs, ys).unwrap()
}

fn sq(scale: f64) -> Regularizer {
    Regularizer::SquaredNorm { scale }
}

fn sinusoid(per_axis: usize) -> BranchSpec {
    let pi = std::f64::consts::PI;
    BranchSpec::uniform(FeatureKind::Sinusoid { freq: 3.0 }, sq(1.0), vec![(-pi, pi)], per_axis).unwrap()
}

fn affine(per_axis: usize) -> BranchSpec {
    BranchSpec::uniform(FeatureKind::Affine, sq(1.0), vec![(-1.0, 1.0), (-1.0, 1.0)], per_axis).unwrap()
}

/// Every grid assignment, as index vectors.
fn assignments(branches: &[BranchSpec]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for b in branches {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..b.grid().len()).map(move |g| {
                    let mut q = p.clone();
                    q.push(g);
                    q
                })
            })
            .collect();
    }
    out
}

fn params_of(branches: &[BranchSpec], pick: &[usize]) -> Vec<Vec<f64>> {
    branches.iter().zip(pick).map(|(b, &g)| b.grid()[g].clone()).collect()
}

fn avg_h(branches: &[BranchSpec], pick: &[usize]) -> f64 {
    branches.iter().zip(pick).map(|(b, &g)| b.regularize(&b.grid()[g])).sum::<f64>() / branches.len() as f64
}

/// Exhaustive primal with the hinge evaluated from scratch.
fn brute_primal(branches: &[BranchSpec], data: &Dataset, tau: f64, k: f64) -> Option<f64> {
    assignments(branches)
        .iter()
        .filter(|p| avg_h(branches, p) <= k + BUDGET_RTOL * (1.0 + k.abs()))
        .map(|p| tau_hinge_risk(&params_of(branches, p), branches, data, tau).unwrap())
        .min_by(f64::total_cmp)
}

fn brute_q(branches: &[BranchSpec], data: &Dataset, tau: f64, lambda: f64) -> f64 {
    assignments(branches)
        .iter()
        .map(|p| tau_hinge_risk(&params_of(branches, p), branches, data, tau).unwrap() + lambda * avg_h(branches, p))
        .fold(f64::INFINITY, f64::min)
}

/// Dense scan followed by ternary refinement of the concave `Q(λ) − λK`.
fn dense_dual(q: impl Fn(f64) -> f64, k: f64, hi: f64) -> f64 {
    let g = |l: f64| q(l) - l * k;
    let n = 2000;
    let step = hi / n as f64;
    let best = (0..=n).max_by(|&a, &b| g(a as f64 * step).total_cmp(&g(b as f64 * step))).unwrap();
    let (mut lo, mut up) = (((best as f64) - 1.0).max(0.0) * step, (best as f64 + 1.0) * step);
    for _ in 0..200 {
        let m1 = lo + (up - lo) / 3.0;
        let m2 = up - (up - lo) / 3.0;
        if g(m1) < g(m2) {
            lo = m1;
        } else {
            up = m2;
        }
    }
    g(0.5 * (lo + up)).max(g(best as f64 * step))
}

#[test]
fn zero_features_give_unit_risk() {
    let b = BranchSpec::new(FeatureKind::Affine, sq(1.0), vec![(-1.0, 1.0)], vec![vec![0.0]]).unwrap();
    let d = toy_data(7, 1);
    assert_eq!(tau_hinge_risk(&[vec![0.0]], &[b], &d, 0.7).unwrap(), 1.0);
}

#[test]
fn margin_at_tau_gives_zero_risk() {
    let b = BranchSpec::new(FeatureKind::Affine, sq(1.0), vec![(0.0, 4.0)], vec![vec![2.0]]).unwrap();
    let d = Dataset::new(vec![Sample { x: vec![1.5], y: 1.0, weight: 1.0 }]).unwrap();
    assert_eq!(tau_hinge_risk(&[vec![2.0]], &[b], &d, 3.0).unwrap(), 0.0);
}

#[test]
fn weighted_affine_risk_matches_hand_sum() {
    let d = Dataset::new(vec![
        Sample { x: vec![1.0, 2.0], y: 1.0, weight: 0.5 },
        Sample { x: vec![-1.0, 0.5], y: -1.0, weight: 0.3 },
        Sample { x: vec![0.2, -3.0], y: 1.0, weight: 0.2 },
    ])
    .unwrap();
    let b = affine(3);
    let w = vec![0.5, -0.25];
    let branches = vec![b.clone(), b];
    let params = vec![w.clone(), vec![1.0, 1.0]];
    let tau = 0.8;
    // f = ½(0.5x₀ − 0.25x₁ + x₀ + x₁) = 0.75x₀ + 0.375x₁.
    let f: [f64; 3] = [0.75 + 0.75, -0.75 + 0.1875, 0.15 - 1.125];
    let y: [f64; 3] = [1.0, -1.0, 1.0];
    let wt = [0.5, 0.3, 0.2];
    let expect: f64 = (0..3).map(|s| wt[s] * (1.0 - y[s] * f[s] / tau).max(0.0)).sum();
    let got = tau_hinge_risk(&params, &branches, &d, tau).unwrap();
    assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
}

#[test]
fn dataset_validation() {
    assert!(Dataset::new(vec![Sample { x: vec![0.0], y: 0.5, weight: 1.0 }]).is_err());
    assert!(Dataset::new(vec![Sample { x: vec![0.0], y: 1.0, weight: 0.9 }]).is_err());
    assert!(Dataset::new(vec![
        Sample { x: vec![0.0], y: 1.0, weight: 0.5 },
        Sample { x: vec![0.0, 1.0], y: 1.0, weight: 0.5 },
    ])
    .is_err());
    assert!(Dataset::new(vec![]).is_err());
}

#[test]
fn default_tau_satisfies_margin_condition() {
    let d = toy_data(12, 2);
    let branches = vec![sinusoid(9), affine(4)];
    let tau = default_tau(&branches, &d).unwrap();
    assert!(check_assumption_tau(&branches, &d, tau).unwrap().ok);
}

#[test]
fn small_tau_fails_with_enumerated_witness() {
    let d = toy_data(6, 3);
    let branches = vec![affine(3), sinusoid(5)];
    let chk = check_assumption_tau(&branches, &d, 0.05).unwrap();
    assert!(!chk.ok);
    let mut best = f64::NEG_INFINITY;
    for p in assignments(&branches) {
        for s in d.samples() {
            let f: f64 = branches.iter().zip(&p).map(|(b, &g)| b.feature(&b.grid()[g], &s.x)).sum::<f64>() / 2.0;
            best = best.max(s.y * f);
        }
    }
    assert!((chk.max_margin - best).abs() < 1e-14);
    let s = &d.samples()[chk.witness_sample];
    let f: f64 =
        branches.iter().zip(&chk.witness).map(|(b, &g)| b.feature(&b.grid()[g], &s.x)).sum::<f64>() / 2.0;
    assert!((s.y * f - chk.max_margin).abs() < 1e-14);
}

#[test]
fn zero_features_satisfy_any_tau() {
    let b = BranchSpec::new(FeatureKind::Affine, sq(1.0), vec![(-1.0, 1.0)], vec![vec![0.0]]).unwrap();
    assert!(check_assumption_tau(&[b], &toy_data(5, 4), 0.1).unwrap().ok);
}

#[test]
fn loose_budget_separates() {
    let d = toy_data(10, 5);
    let branches = vec![sinusoid(11), affine(5), sinusoid(7)];
    let tau = default_tau(&branches, &d).unwrap();
    let t = tables(&branches, &d, tau).unwrap();
    let sol = primal_inf(&branches, &d, tau, 1e6).unwrap();
    let separate: f64 = t.iter().map(|b| b.c.iter().copied().fold(f64::INFINITY, f64::min)).sum::<f64>() / 3.0;
    assert!((sol.value - separate).abs() < 1e-14);
    assert_eq!(sol.method, PrimalMethod::Pareto);
}

#[test]
fn primal_matches_enumeration_two_by_three() {
    let d = toy_data(4, 6);
    let branches = vec![sinusoid(3), BranchSpec::new(FeatureKind::Affine, sq(0.5), vec![(-1.0, 1.0)], vec![vec![-1.0], vec![0.2], vec![0.9]]).unwrap()];
    let tau = default_tau(&branches, &d).unwrap();
    for &k in &[0.05, 0.5, 1.0, 3.0, 10.0] {
        let sol = primal_inf(&branches, &d, tau, k);
        match brute_primal(&branches, &d, tau, k) {
            Some(v) => assert!((sol.unwrap().value - v).abs() < 1e-14, "K = {k}"),
            None => assert!(matches!(sol, Err(crate::Error::Infeasible(_)))),
        }
    }
}

#[test]
fn single_branch_is_constrained_grid_min() {
    let d = toy_data(9, 7);
    let b = sinusoid(21);
    let tau = default_tau(std::slice::from_ref(&b), &d).unwrap();
    let k = 2.0;
    let sol = primal_inf(std::slice::from_ref(&b), &d, tau, k).unwrap();
    let oracle = b
        .grid()
        .iter()
        .filter(|w| b.regularize(w) <= k)
        .map(|w| tau_hinge_risk(std::slice::from_ref(w), std::slice::from_ref(&b), &d, tau).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!((sol.value - oracle).abs() < 1e-14);
}

#[test]
fn infeasible_budget_errors() {
    let d = toy_data(5, 8);
    let b = BranchSpec::new(FeatureKind::Affine, sq(1.0), vec![(0.5, 1.0)], vec![vec![0.5], vec![1.0]]).unwrap();
    let tau = 10.0;
    assert!(matches!(primal_inf(std::slice::from_ref(&b), &d, tau, 0.1), Err(crate::Error::Infeasible(_))));
    assert!(matches!(dual_sup(&[b], &d, tau, 0.1, None), Err(crate::Error::Infeasible(_))));
}

#[test]
fn q_at_zero_is_unconstrained_min() {
    let d = toy_data(8, 9);
    let branches = vec![sinusoid(9), affine(3)];
    let tau = default_tau(&branches, &d).unwrap();
    let q0 = dual_q(0.0, &branches, &d, tau).unwrap();
    assert!((q0 - primal_inf(&branches, &d, tau, 1e9).unwrap().value).abs() < 1e-14);
}

#[test]
fn q_at_large_lambda_uses_min_regularizer_points() {
    let d = toy_data(8, 10);
    let branches = vec![sinusoid(9), affine(3)];
    let tau = default_tau(&branches, &d).unwrap();
    // Both grids contain the origin, where h = 0; all other points have h ≥ 0.5.
    let lam = 1e6;
    let q = dual_q(lam, &branches, &d, tau).unwrap();
    let at_zero: Vec<Vec<f64>> = branches.iter().map(|b| vec![0.0; b.param_dim()]).collect();
    let risk = tau_hinge_risk(&at_zero, &branches, &d, tau).unwrap();
    assert!((q - risk).abs() < 1e-12);
}

#[test]
fn q_matches_joint_minimization() {
    let d = toy_data(6, 11);
    let branches = vec![sinusoid(7), affine(3)];
    let tau = default_tau(&branches, &d).unwrap();
    for &lam in &[0.0, 0.01, 0.1, 0.37, 2.0, 50.0] {
        let q = dual_q(lam, &branches, &d, tau).unwrap();
        assert!((q - brute_q(&branches, &d, tau, lam)).abs() < 1e-14, "λ = {lam}");
    }
}

#[test]
fn negative_lambda_rejected() {
    let d = toy_data(3, 12);
    assert!(dual_q(-1e-3, &[sinusoid(3)], &d, 5.0).is_err());
}

#[test]
fn slack_budget_gives_zero_multiplier() {
    let d = toy_data(8, 13);
    let branches = vec![sinusoid(9), affine(3)];
    let tau = default_tau(&branches, &d).unwrap();
    let sol = dual_sup(&branches, &d, tau, 100.0, None).unwrap();
    assert_eq!(sol.lambda_star, 0.0);
    assert_eq!(sol.value, dual_q(0.0, &branches, &d, tau).unwrap());
}

#[test]
fn dual_sup_matches_dense_search() {
    let d = toy_data(10, 14);
    let b = sinusoid(25);
    let tau = default_tau(std::slice::from_ref(&b), &d).unwrap();
    for &k in &[0.5, 2.0, 5.0] {
        let sol = dual_sup(std::slice::from_ref(&b), &d, tau, k, None).unwrap();
        let oracle = dense_dual(|l| brute_q(std::slice::from_ref(&b), &d, tau, l), k, sol.lambda_max);
        assert!((sol.value - oracle).abs() < 1e-8, "K = {k}: {} vs {oracle}", sol.value);
        assert!(sol.value >= oracle - 1e-14);
        assert!(!sol.at_boundary);
    }
}

#[test]
fn boundary_flag_when_range_too_small() {
    let d = toy_data(10, 14);
    let b = sinusoid(25);
    let tau = default_tau(std::slice::from_ref(&b), &d).unwrap();
    let free = dual_sup(std::slice::from_ref(&b), &d, tau, 0.05, None).unwrap();
    assert!(free.lambda_star > 0.0);
    let capped = dual_sup(std::slice::from_ref(&b), &d, tau, 0.05, Some(free.lambda_star * 0.5)).unwrap();
    assert!(capped.at_boundary);
}

#[test]
fn convex_branches_close_the_gap() {
    let d = toy_data(12, 15);
    let branches = replicate(&[affine(7)], 3);
    let tau = default_tau(&branches, &d).unwrap();
    let k = default_k(&branches, 1).unwrap();
    let r = verify_theorem1(&branches, &d, tau, k, &VerifyOptions::default()).unwrap();
    assert!(r.delta_worst < 1e-10);
    assert!(r.gap <= r.eps_grid, "{r:?}");
    assert!(r.gap >= -r.eps_grid);
    assert!(r.holds());
}

#[test]
fn affine_branch_has_zero_delta() {
    let d = toy_data(12, 16);
    for b in [affine(7), BranchSpec::uniform(FeatureKind::Affine, Regularizer::Norm { scale: 2.0 }, vec![(-2.0, 1.0)], 31).unwrap()] {
        let tau = default_tau(std::slice::from_ref(&b), &d).unwrap();
        assert!(compute_delta(&b, &d, tau).unwrap().delta < 1e-10);
    }
}

#[test]
fn sinusoid_delta_positive_and_stable_under_refinement() {
    let d = toy_data(10, 17);
    let coarse = sinusoid(41);
    let fine = sinusoid(401);
    let tau = default_tau(std::slice::from_ref(&coarse), &d).unwrap();
    let dc = compute_delta(&coarse, &d, tau).unwrap().delta;
    let df = compute_delta(&fine, &d, tau).unwrap().delta;
    assert!(dc > 0.0);
    // |c'(w)| ≤ 3·E|x₀|/τ; both f̂ and f̃ move by at most that times the spacing.
    let lip = 3.0 * d.samples().iter().map(|s| s.weight * s.x[0].abs()).sum::<f64>() / tau;
    let spacing = 2.0 * std::f64::consts::PI / 40.0;
    assert!((dc - df).abs() <= 2.0 * lip * spacing, "{dc} vs {df}");
}

#[test]
fn single_point_grid_has_zero_delta() {
    let b = BranchSpec::new(FeatureKind::Sinusoid { freq: 3.0 }, sq(1.0), vec![(-1.0, 1.0)], vec![vec![0.4]]).unwrap();
    let r = compute_delta(&b, &toy_data(5, 18), 4.0).unwrap();
    assert_eq!(r.delta, 0.0);
    assert_eq!(r.rho, 0.0);
}

#[test]
fn branch_construction_rules() {
    assert!(BranchSpec::uniform(FeatureKind::Affine, sq(1.0), vec![(-1.0, 1.0); 3], 2).is_err());
    assert!(BranchSpec::uniform(FeatureKind::Affine, sq(-1.0), vec![(-1.0, 1.0)], 5).is_err());
    assert!(BranchSpec::new(FeatureKind::Affine, sq(1.0), vec![(-1.0, 1.0)], vec![vec![2.0]]).is_err());
    assert!(BranchSpec::new(FeatureKind::Affine, sq(1.0), vec![(-1.0, 1.0)], vec![]).is_err());
    let relu = Activation::Relu;
    assert!(BranchSpec::uniform(FeatureKind::Stack2 { activation: relu }, sq(1.0), vec![(-1.0, 1.0)], 5).is_err());
}

#[test]
fn sinusoid_pair_passes_bound() {
    let d = toy_data(12, 19);
    let branches = vec![sinusoid(31), sinusoid(17)];
    let tau = default_tau(&branches, &d).unwrap();
    let k = default_k(&branches, 2).unwrap();
    let r = verify_theorem1(&branches, &d, tau, k, &VerifyOptions::default()).unwrap();
    assert!(r.holds(), "{r:?}");
    assert_eq!(r.enumerated_inf_p, Some(r.inf_p));
    let oracle = brute_primal(&branches, &d, tau, k).unwrap();
    assert!((r.inf_p - oracle).abs() < 1e-14);
    let cert = r.certificate.unwrap();
    assert!(cert.convexified.len() <= 2);
    assert!(cert.reconstruction_error <= 1e-9);
}

#[test]
fn replicated_sweep_respects_bound_and_trend() {
    let d = toy_data(12, 20);
    let template = [sinusoid(21)];
    let tau = default_tau(&template, &d).unwrap();
    let k = default_k(&template, 3).unwrap();
    let counts = [2usize, 4, 8, 16, 32];
    let reps = gap_sweep(&template, &d, tau, k, &counts, &VerifyOptions::default()).unwrap();
    for r in &reps {
        assert!(r.holds(), "{r:?}");
        if let Some(ng) = r.normalized_gap() {
            assert!(ng <= 2.0 / r.branches as f64 + r.eps_grid / r.delta_worst + 1e-12);
        }
    }
    let gaps: Vec<f64> = reps.iter().map(|r| r.gap).collect();
    let is: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    if let Some(rho) = spearman(&is, &gaps).unwrap() {
        assert!(rho <= 0.0, "{gaps:?}");
    }
}

#[test]
fn quantized_dp_brackets_the_exact_optimum() {
    let d = toy_data(10, 21);
    let branches = replicate(&[sinusoid(15), affine(4)], 6);
    let tau = default_tau(&branches, &d).unwrap();
    let k = default_k(&branches, 4).unwrap();
    let t = tables(&branches, &d, tau).unwrap();
    let exact = pareto_dp(&t, k, usize::MAX).unwrap().unwrap();
    assert!(pareto_dp(&t, k, 1).unwrap().is_none());
    let q = quantized_dp(&t, k).unwrap();
    assert!(q.lower <= exact.value + 1e-15 && exact.value <= q.value + 1e-15, "{q:?} vs {}", exact.value);
    assert!(avg_h(&branches, &q.argmin) <= k);
}

#[test]
fn violated_margin_keeps_weak_duality() {
    let d = toy_data(8, 22);
    let branches = vec![sinusoid(9), affine(3)];
    let tau = 0.05;
    let k = default_k(&branches, 5).unwrap();
    let r = verify_theorem1(&branches, &d, tau, k, &VerifyOptions::default()).unwrap();
    assert!(!r.assumption_tau_ok);
    assert!(r.gap >= -r.eps_grid);
    assert_eq!(r.primal_method, PrimalMethod::Enumeration);
    assert!((r.inf_p - brute_primal(&branches, &d, tau, k).unwrap()).abs() < 1e-14);
    assert!(r.holds());
}

#[test]
fn instance_files_round_trip() {
    let inst = GapInstance {
        branches: vec![sinusoid(5), affine(3)],
        dataset: toy_data(4, 23),
        tau: None,
        k: Some(0.7),
        count: Some(4),
    };
    let s = serde_json::to_string(&inst).unwrap();
    let back: GapInstance = serde_json::from_str(&s).unwrap();
    assert_eq!(back.branches, inst.branches);
    assert_eq!(back.dataset, inst.dataset);
    assert_eq!(back.family().len(), 4);
    let bad = s.replacen("\"K\"", "\"budget\"", 1);
    assert!(serde_json::from_str::<GapInstance>(&bad).is_err());
    let doc = r#"{"feature":{"type":"unit","activation":"tanh"},"regularizer":{"type":"norm","scale":1.0},"bounds":[[-1,1]],"per_axis":4}"#;
    let b: BranchSpec = serde_json::from_str(doc).unwrap();
    assert_eq!(b.grid().len(), 4);
}

#[test]
fn csv_rows_have_header() {
    let d = toy_data(6, 24);
    let branches = vec![sinusoid(7)];
    let r = verify_theorem1(&branches, &d, 5.0, 1.0, &VerifyOptions::default()).unwrap();
    let mut buf = Vec::new();
    GapReport::write_csv_rows(&[r.clone(), r], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("branches,tau,k,inf_p"));
}

fn small_family(r: &mut impl Rng) -> Vec<BranchSpec> {
    let kinds = [
        FeatureKind::Sinusoid { freq: 2.5 },
        FeatureKind::Unit { activation: Activation::Relu },
        FeatureKind::Unit { activation: Activation::Sigmoid },
        FeatureKind::Affine,
    ];
    let count = r.random_range(1..=2);
    (0..count)
        .map(|_| {
            let kind = kinds[r.random_range(0..kinds.len())].clone();
            let n = r.random_range(2..=6);
            BranchSpec::uniform(kind, sq(r.random_range(0.2..2.0)), vec![(-1.5, 1.5)], n).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weak_duality_for_any_tau(seed in 0u64..10_000, tau in 0.05f64..3.0) {
        let mut r = crate::rng::seeded(seed);
        let branches = small_family(&mut r);
        let d = toy_data(5, seed);
        let k = default_k(&branches, seed).unwrap();
        let p = primal_inf(&branches, &d, tau, k).unwrap();
        let q = dual_sup(&branches, &d, tau, k, None).unwrap();
        prop_assert!(q.value <= p.value + 1e-12);
        prop_assert!((p.value - brute_primal(&branches, &d, tau, k).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn rescaling_the_budget(seed in 0u64..10_000, c in 0.1f64..10.0) {
        let mut r = crate::rng::seeded(seed);
        let branches = small_family(&mut r);
        let d = toy_data(6, seed);
        let tau = default_tau(&branches, &d).unwrap();
        let k = default_k(&branches, seed).unwrap();
        let scaled: Vec<BranchSpec> = branches.iter().map(|b| b.with_regularizer_scaled(c).unwrap()).collect();
        let opts = VerifyOptions { certificate: false, ..Default::default() };
        let a = verify_theorem1(&branches, &d, tau, k, &opts).unwrap();
        let b = verify_theorem1(&scaled, &d, tau, c * k, &opts).unwrap();
        prop_assert!((a.inf_p - b.inf_p).abs() < 1e-10);
        // Maximizers need not be unique; the rescaled multiplier must still be optimal.
        let l = a.lambda_star / c;
        let at = dual_q(l, &scaled, &d, tau).unwrap() - l * c * k;
        prop_assert!((at - b.sup_d).abs() < 1e-10);
        prop_assert!((a.gap - b.gap).abs() < 1e-10);
    }

    #[test]
    fn duplicated_samples_equal_doubled_weights(seed in 0u64..10_000) {
        let base = toy_data(4, seed);
        let s = base.samples();
        // Empirical over [s0, s0, s1, s2, s3] versus weights (2, 1, 1, 1)/5.
        let xs: Vec<Vec<f64>> = std::iter::once(s[0].x.clone()).chain(s.iter().map(|t| t.x.clone())).collect();
        let ys: Vec<f64> = std::iter::once(s[0].y).chain(s.iter().map(|t| t.y)).collect();
        let emp = Dataset::empirical(xs, ys).unwrap();
        let pop = Dataset::new(s.iter().enumerate().map(|(i, t)| Sample {
            x: t.x.clone(), y: t.y, weight: if i == 0 { 0.4 } else { 0.2 },
        }).collect()).unwrap();
        let mut r = crate::rng::seeded(seed);
        let branches = small_family(&mut r);
        let tau = default_tau(&branches, &emp).unwrap();
        let k = default_k(&branches, seed).unwrap();
        let opts = VerifyOptions::default();
        let a = verify_theorem1(&branches, &emp, tau, k, &opts).unwrap();
        let b = verify_theorem1(&branches, &pop, tau, k, &opts).unwrap();
        prop_assert!((a.inf_p - b.inf_p).abs() < 1e-12);
        prop_assert!((a.sup_d - b.sup_d).abs() < 1e-12);
        prop_assert!((a.delta_worst - b.delta_worst).abs() < 1e-12);
    }

    #[test]
    fn bound_holds_under_margin_assumption(seed in 0u64..10_000, copies in 1usize..=6) {
        let mut r = crate::rng::seeded(seed);
        let template = small_family(&mut r);
        let d = toy_data(6, seed);
        let tau = default_tau(&template, &d).unwrap();
        let k = default_k(&template, seed).unwrap();
        let rep = verify_theorem1(&replicate(&template, copies * template.len()), &d, tau, k, &VerifyOptions::default()).unwrap();
        prop_assert!(rep.holds(), "{:?}", rep);
    }
}

