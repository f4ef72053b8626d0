use nalgebra::SymmetricEigen;
use proptest::prelude::*;

use sde_ident::estimate::{nll_additive, nll_multiplicative_em};
use sde_ident::identifiability::{check_additive, check_controllability, CheckOptions, Verdict};
use sde_ident::intervention::{post_moments_additive, InterventionSpec};
use sde_ident::linalg::{expm, kron_sum, unvec, vec, Mat, Vector};
use sde_ident::models::{model_from_json, model_to_json, AdditiveSde, MultiplicativeSde, SdeModel};
use sde_ident::moments::{covariance_additive, second_moment_multiplicative, transition_moments_additive};
use sde_ident::ode::uniform_grid;
use sde_ident::simulate::{simulate_em, SimConfig, TrajectorySet};

fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5..1.5f64, n)
}

fn mat(r: usize, c: usize) -> impl Strategy<Value = Mat> {
    entries(r * c).prop_map(move |v| Mat::from_row_slice(r, c, &v))
}

fn vector(n: usize) -> impl Strategy<Value = Vector> {
    entries(n).prop_map(Vector::from_vec)
}

fn additive() -> impl Strategy<Value = AdditiveSde> {
    (2..=4usize, 1..=3usize)
        .prop_flat_map(|(d, m)| (mat(d, d), mat(d, m), vector(d)))
        .prop_map(|(a, g, x0)| AdditiveSde::new(a, g, x0).unwrap())
}

fn multiplicative() -> impl Strategy<Value = MultiplicativeSde> {
    (2..=3usize, 1..=2usize)
        .prop_flat_map(|(d, m)| (mat(d, d), prop::collection::vec(mat(d, d), m), vector(d)))
        .prop_map(|(a, gs, x0)| MultiplicativeSde::new(a, gs, x0).unwrap())
}

fn min_eig(m: &Mat) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn orthogonal(seed: &Mat) -> Mat {
    seed.clone().qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kron_sum_acts_as_sylvester(a in mat(3, 3), x in mat(3, 3)) {
        let lhs = kron_sum(&a, &a).unwrap() * vec(&x);
        let rhs = vec(&(&a * &x + &x * a.transpose()));
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn vec_round_trips(x in mat(3, 2)) {
        prop_assert_eq!(unvec(&vec(&x), 3, 2).unwrap(), x);
    }

    #[test]
    fn expm_semigroup(a in mat(3, 3), s in 0.0..1.0f64, t in 0.0..1.0f64) {
        let lhs = expm(&a, s + t).unwrap();
        let rhs = expm(&a, s).unwrap() * expm(&a, t).unwrap();
        prop_assert!((&lhs - &rhs).amax() <= 1e-12 * lhs.amax().max(1.0));
    }

    #[test]
    fn covariance_is_symmetric_psd(m in additive()) {
        for v in covariance_additive(&m, &[0.3, 1.0]).unwrap() {
            prop_assert!((&v - v.transpose()).amax() < 1e-12);
            prop_assert!(min_eig(&v) > -1e-10 * v.amax().max(1.0));
        }
    }

    #[test]
    fn second_moment_dominates_mean_outer_product(m in multiplicative()) {
        let p = &second_moment_multiplicative(&m, &[0.7]).unwrap()[0];
        let mean = expm(m.a(), 0.7).unwrap() * m.x0();
        let cov = p - &mean * mean.transpose();
        prop_assert!(min_eig(&cov) > -1e-8 * p.amax().max(1.0));
    }

    #[test]
    fn controllable_implies_rank_condition(m in additive()) {
        let ctrb = check_controllability(&m, &CheckOptions::default()).unwrap();
        if ctrb.verdict == Verdict::Identifiable {
            prop_assert_eq!(check_additive(&m, &CheckOptions::default()).unwrap().verdict, Verdict::Identifiable);
        }
        prop_assert!(ctrb.cross_checks.iter().all(|c| c.passed));
    }

    #[test]
    fn verdict_ignores_noise_rotation(m in additive(), q in mat(3, 3)) {
        let k = m.noise_dim();
        let r = orthogonal(&q.view((0, 0), (k, k)).into_owned());
        let rotated = m.with_g(m.g() * r).unwrap();
        let o = CheckOptions::default();
        prop_assert_eq!(check_additive(&m, &o).unwrap().verdict, check_additive(&rotated, &o).unwrap().verdict);
    }

    #[test]
    fn intervened_coordinate_stays_clamped(m in additive(), xi in -2.0..2.0f64, l in 1..=4usize) {
        let l = 1 + (l - 1) % m.dim();
        let spec = InterventionSpec::new(l, xi);
        let post = post_moments_additive(&m, spec, &uniform_grid(1.0, 5)).unwrap();
        for (mean, cov) in post.full_curve().means.iter().zip(&post.full_curve().seconds) {
            prop_assert_eq!(mean[l - 1], xi);
            prop_assert!(cov.row(l - 1).iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn model_json_round_trips(a in additive(), m in multiplicative()) {
        for model in [SdeModel::from(a), SdeModel::from(m)] {
            let back = model_from_json(&model_to_json(&model)).unwrap();
            prop_assert_eq!(back, model);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trajectory_csv_round_trips(m in multiplicative(), seed in any::<u64>()) {
        let cfg = SimConfig { t_end: 0.5, n_obs: 4, n_sub: 2, n_paths: 3, seed, replication: 0 };
        let set = simulate_em(&m, &cfg).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = TrajectorySet::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.times, set.times);
        prop_assert_eq!(back.paths, set.paths);
    }

    #[test]
    fn likelihoods_depend_on_noise_only_through_its_square(m in additive(), q in mat(3, 3), seed in any::<u64>()) {
        let cfg = SimConfig { t_end: 1.0, n_obs: 6, n_sub: 2, n_paths: 4, seed, replication: 0 };
        let data = simulate_em(&m, &cfg).unwrap();
        let k = m.noise_dim();
        let r = orthogonal(&q.view((0, 0), (k, k)).into_owned());
        let a = nll_additive(m.a(), m.g(), &data).unwrap();
        let b = nll_additive(m.a(), &(m.g() * r), &data).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn additive_nll_equals_transition_sum(m in additive(), seed in any::<u64>()) {
        let cfg = SimConfig { t_end: 1.0, n_obs: 5, n_sub: 2, n_paths: 3, seed, replication: 0 };
        let data = simulate_em(&m, &cfg).unwrap();
        let tm = transition_moments_additive(&m, cfg.delta()).unwrap();
        let eig = SymmetricEigen::new(tm.sigma.clone()).eigenvalues;
        prop_assume!(eig.min() > 1e-10);
        let chol = tm.sigma.clone().cholesky().unwrap();
        let d = m.dim() as f64;
        let mut brute = 0.0;
        for path in &data.paths {
            for i in 0..cfg.n_obs - 1 {
                let r = path.column(i + 1) - &tm.phi * path.column(i);
                let q = r.dot(&chol.solve(&r));
                brute += 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + eig.iter().map(|v| v.ln()).sum::<f64>() + q);
            }
        }
        let fast = nll_additive(m.a(), m.g(), &data).unwrap();
        prop_assert!((fast - brute).abs() <= 1e-9 * brute.abs().max(1.0), "{fast} vs {brute}");
    }

    #[test]
    fn em_likelihood_is_sign_invariant(m in multiplicative(), seed in any::<u64>()) {
        let cfg = SimConfig { t_end: 1.0, n_obs: 6, n_sub: 2, n_paths: 3, seed, replication: 0 };
        let data = simulate_em(&m, &cfg).unwrap();
        let flipped: Vec<Mat> = m.gs().iter().map(|g| -g).collect();
        let a = nll_multiplicative_em(m.a(), m.gs(), &data).unwrap();
        let b = nll_multiplicative_em(m.a(), &flipped, &data).unwrap();
        prop_assert_eq!(a, b);
    }
}
