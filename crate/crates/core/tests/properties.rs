use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rotsolve::classifiers::{
    rotate_and_solve, train_linear, Classifier, LinearRule, Method, RoadProblem, SolverConfig, TrainedRule,
};
use rotsolve::estimation::{
    estimate_moments, rotation_economy, rotation_full, sample_total_covariance, total_covariance, Class,
    LabeledDataset,
};
use rotsolve::harness::{mix_seed, summarize, TAG_TEST, TAG_TRAIN};
use rotsolve::linalg::{check_weyl, max_abs_diff, pseudo_inverse, sym_eig_desc, SymMatrix, PINV_REL_TOL};
use rotsolve::population::profile_vector;
use rotsolve::selection::{linspace, logspace, make_folds};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
}

fn random_sym(p: usize, rank: usize, seed: u64) -> SymMatrix {
    let b = gaussian(p, rank, seed);
    SymMatrix::from_symmetrized(b.dot(&b.t())).unwrap()
}

fn dataset(n1: usize, n2: usize, p: usize, shift: f64, seed: u64) -> LabeledDataset {
    let mut x = gaussian(n1 + n2, p, seed);
    for i in 0..n1 {
        x[[i, 0]] += shift;
    }
    let mut y = vec![Class::One; n1];
    y.extend(vec![Class::Two; n2]);
    LabeledDataset::new(x, y).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigendecomposition_is_orthonormal_sorted_and_exact(p in 1usize..12, seed in any::<u64>()) {
        let s = random_sym(p, p, seed);
        let e = sym_eig_desc(&s).unwrap();
        let scale = 1.0 + e.values[0].abs();
        prop_assert!(max_abs_diff(e.reconstruct().view(), s.view()) <= 1e-10 * scale);
        let gram = e.vectors.t().dot(&e.vectors);
        prop_assert!(max_abs_diff(gram.view(), Array2::eye(p).view()) <= 1e-10);
        for w in e.values.as_slice().unwrap().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn pseudo_inverse_satisfies_penrose_identities(p in 2usize..10, rank_cut in 0usize..3, seed in any::<u64>()) {
        let rank = (p - rank_cut.min(p - 1)).max(1);
        let a = random_sym(p, rank, seed);
        let g = pseudo_inverse(&a, PINV_REL_TOL).unwrap();
        let (a, g) = (a.as_array(), g.as_array());
        let scale = 1.0 + a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        prop_assert!(max_abs_diff(a.dot(g).dot(a).view(), a.view()) <= 1e-8 * scale);
        let gs = 1.0 + g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        prop_assert!(max_abs_diff(g.dot(a).dot(g).view(), g.view()) <= 1e-8 * gs * gs * scale);
    }

    #[test]
    fn rank_one_updates_interlace(p in 1usize..10, rho in 0.01f64..100.0, seed in any::<u64>()) {
        let a = random_sym(p, p, seed);
        let v = gaussian(p, 1, seed ^ 0xabc).column(0).to_owned();
        prop_assert!(check_weyl(&a, v.view(), rho).unwrap());
    }

    #[test]
    fn total_covariance_decomposes_into_within_and_between(
        n1 in 1usize..8, n2 in 1usize..8, p in 1usize..6, seed in any::<u64>()
    ) {
        let data = dataset(n1, n2, p, 1.5, seed);
        let m = estimate_moments(&data).unwrap();
        let n = (n1 + n2) as f64;
        let weight = (n1 * n2) as f64 / (n * n);
        let identity = total_covariance(&m, weight).unwrap();
        let direct = sample_total_covariance(&data).unwrap();
        prop_assert!(max_abs_diff(identity.view(), direct.view()) <= 1e-10);
    }

    #[test]
    fn economy_basis_spans_the_full_nonzero_spectrum(n in 2usize..8, p in 8usize..16, seed in any::<u64>()) {
        let data = dataset(n, n, p, 1.0, seed);
        let econ = rotation_economy(&data, 0.5, None).unwrap();
        let full = rotation_full(&estimate_moments(&data).unwrap(), 0.5).unwrap();
        let r = econ.basis.rank();
        prop_assert!(r <= 2 * n);
        for j in 0..r {
            let (a, b) = (econ.basis.eigenvalues[j], full.eigenvalues[j]);
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
        }
        let gram = econ.basis.columns.t().dot(&econ.basis.columns);
        prop_assert!(max_abs_diff(gram.view(), Array2::eye(r).view()) <= 1e-9);
    }

    #[test]
    fn cumulative_energy_is_monotone_and_ends_at_one(v in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let prof = profile_vector(Array1::from(v));
        let c = &prof.cumulative_energy;
        prop_assert_eq!(*c.last().unwrap(), 1.0);
        for w in c.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10);
        }
        prop_assert!(prof.l1_l2_ratio <= (c.len() as f64).sqrt() + 1e-12);
    }

    #[test]
    fn folds_partition_rows_and_stay_stratified(
        n1 in 2usize..15, n2 in 2usize..15, k in 2usize..6, seed in any::<u64>()
    ) {
        let data = dataset(n1, n2, 3, 0.0, seed);
        let k = k.min(n1).min(n2);
        let plan = make_folds(&data, k, seed, true).unwrap();
        let mut seen = vec![0usize; n1 + n2];
        for (train, val) in &plan.folds {
            prop_assert_eq!(train.len() + val.len(), n1 + n2);
            for &i in val {
                seen[i] += 1;
                prop_assert!(!train.contains(&i));
            }
            let ones = val.iter().filter(|&&i| data.labels()[i] == Class::One).count();
            prop_assert!(ones * plan.len() <= n1 + plan.len());
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let again = make_folds(&data, k, seed, true).unwrap();
        prop_assert_eq!(plan.folds, again.folds);
    }

    #[test]
    fn road_solutions_meet_optimality_conditions(p in 1usize..8, lam_frac in 0.01f64..1.2, seed in any::<u64>()) {
        let sigma = random_sym(p, p + 2, seed);
        let delta = gaussian(p, 1, seed ^ 7).column(0).to_owned();
        let prob = RoadProblem::from_parts(&sigma, delta.clone(), None).unwrap();
        let dmax = delta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let lambda = lam_frac * dmax * prob.kappa();
        let sol = prob.solve(lambda, None, 10_000).unwrap();
        prop_assert!(sol.kkt_residual <= 1e-6 * (1.0 + lambda));
        prop_assert!((prob.kkt_residual(sol.w.view(), lambda) - sol.kkt_residual).abs() <= 1e-9 * (1.0 + lambda));
    }

    #[test]
    fn seed_streams_are_distinct_and_stable(master in any::<u64>(), rep in 0u64..1000) {
        prop_assert_ne!(mix_seed(master, rep, TAG_TRAIN), mix_seed(master, rep, TAG_TEST));
        prop_assert_ne!(mix_seed(master, rep, TAG_TRAIN), mix_seed(master, rep + 1, TAG_TRAIN));
        prop_assert_eq!(mix_seed(master, rep, TAG_TRAIN), mix_seed(master, rep, TAG_TRAIN));
    }

    #[test]
    fn rule_json_round_trip_preserves_predictions(p in 1usize..6, seed in any::<u64>()) {
        let train = dataset(6, 6, p, 2.0, seed);
        let test = dataset(10, 10, p, 2.0, seed ^ 1);
        let cfg = SolverConfig::new(Method::Ir).with_seed(seed);
        let rs = rotate_and_solve(&train, 0.5, &cfg, false).unwrap();
        let rule = TrainedRule::Rs(rs.rule.clone());
        let back = TrainedRule::from_json(&rule.to_json().unwrap()).unwrap();
        prop_assert_eq!(rs.rule.classify_rows(test.x()).unwrap(), back.classify_rows(test.x()).unwrap());
    }

    #[test]
    fn grids_hit_their_endpoints(lo in 1e-6f64..1.0, span in 1.5f64..1e4, n in 2usize..30) {
        let hi = lo * span;
        let g = logspace(lo, hi, n);
        prop_assert_eq!(g.len(), n);
        prop_assert_eq!(g[0], lo);
        prop_assert_eq!(g[n - 1], hi);
        let l = linspace(lo, hi, n);
        prop_assert_eq!(l[0], lo);
        prop_assert_eq!(l[n - 1], hi);
        for w in g.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
    }
}

#[test]
fn summaries_are_recomputable_from_replicates() {
    let values = vec![Some(0.1), None, Some(0.3), Some(0.2)];
    let (mean, std) = summarize(&values);
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    let m = ok.iter().sum::<f64>() / ok.len() as f64;
    let var = ok.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (ok.len() - 1) as f64;
    assert_eq!(mean, Some(m));
    assert!((std.unwrap() - var.sqrt()).abs() < 1e-15);
}

#[test]
fn linear_rule_boundary_goes_to_class_one() {
    let rule = LinearRule::new(Array1::from(vec![1.0, -1.0]), Array1::zeros(2)).unwrap();
    let x = Array2::from_shape_vec((3, 2), vec![1.0, 1.0, 2.0, 0.0, 0.0, 2.0]).unwrap();
    assert_eq!(rule.classify_rows(x.view()).unwrap(), vec![Class::One, Class::One, Class::Two]);
}

#[test]
fn every_base_method_trains_on_a_small_problem() {
    let train = dataset(15, 15, 8, 2.5, 11);
    let test = dataset(100, 100, 8, 2.5, 12);
    for method in [Method::Lda, Method::Ir, Method::Nsc, Method::Road] {
        let fit = train_linear(&train, &SolverConfig::new(method).with_seed(3)).unwrap();
        let err = fit.rule.error_rate(&test).unwrap();
        assert!(err < 0.25, "{} error {err}", method.name());
    }
    let means = train.x().mean_axis(Axis(0)).unwrap();
    assert!(means.iter().all(|v| v.is_finite()));
}
