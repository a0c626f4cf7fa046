mod common;

use common::*;
use muf::distributions::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn draw_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    assert_eq!(draw(&MDistr::Delta(Concrete::Real(3.0)), &mut rng), Concrete::Real(3.0));
    assert_eq!(draw(&MDistr::bernoulli(1.0).unwrap(), &mut rng), Concrete::Bool(true));
    let g = MDistr::gaussian(0.0, 1.0).unwrap();
    let n = 100_000;
    let mean: f64 = (0..n).map(|_| draw(&g, &mut rng).as_real().unwrap()).sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.02, "{mean}");
}

#[test]
fn draw_is_deterministic() {
    let d = MDistr::beta(2.0, 3.0).unwrap();
    let a: Vec<_> = {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..50).map(|_| draw(&d, &mut rng)).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let b: Vec<_> = (0..50).map(|_| draw(&d, &mut rng)).collect();
    assert_eq!(a, b);
}

#[test]
fn pdf_examples() {
    let g = MDistr::gaussian(0.0, 1.0).unwrap();
    assert!(close(pdf(&g, &Concrete::Real(0.0)), 1.0 / (2.0 * std::f64::consts::PI).sqrt(), 1e-15));
    assert!(close(pdf(&MDistr::bernoulli(0.3).unwrap(), &Concrete::Bool(true)), 0.3, 1e-15));
    assert_eq!(pdf(&MDistr::uniform(0.0, 2.0).unwrap(), &Concrete::Real(3.0)), 0.0);
}

#[test]
fn pdf_normalizes() {
    let g = MDistr::gaussian(1.5, 0.7).unwrap();
    let sd = 0.7f64.sqrt();
    let z = trapz(|x| pdf(&g, &Concrete::Real(x)), 1.5 - 10.0 * sd, 1.5 + 10.0 * sd);
    assert!(close(z, 1.0, 1e-4), "{z}");
    let b = MDistr::beta(2.5, 4.0).unwrap();
    let z = trapz(|x| pdf(&b, &Concrete::Real(x)), 0.0, 1.0);
    assert!(close(z, 1.0, 1e-4), "{z}");
    let u = MDistr::uniform(-1.0, 3.0).unwrap();
    let z = trapz(|x| pdf(&u, &Concrete::Real(x)), -1.0, 3.0);
    assert!(close(z, 1.0, 1e-4), "{z}");
    let bern = MDistr::bernoulli(0.2).unwrap();
    let z = pdf(&bern, &Concrete::Bool(true)) + pdf(&bern, &Concrete::Bool(false));
    assert!(close(z, 1.0, 1e-12));
    let p = MDistr::poisson(3.0).unwrap();
    let z: f64 = (0..100).map(|k| pdf(&p, &Concrete::Int(k))).sum();
    assert!(close(z, 1.0, 1e-12), "{z}");
}

#[test]
fn parameter_ranges_are_enforced() {
    assert!(MDistr::gaussian(0.0, 0.0).is_err());
    assert!(MDistr::gaussian(0.0, -1.0).is_err());
    assert!(MDistr::beta(0.0, 1.0).is_err());
    assert!(MDistr::bernoulli(1.5).is_err());
    assert!(MDistr::poisson(0.0).is_err());
    assert!(MDistr::uniform(1.0, 1.0).is_err());
    assert!(MDistr::categorical(vec![(Concrete::Int(0), -1.0)]).is_err());
    let c = MDistr::categorical(vec![(Concrete::Int(0), 1.0), (Concrete::Int(1), 3.0)]).unwrap();
    match c {
        MDistr::Categorical(atoms) => {
            let total: f64 = atoms.iter().map(|(_, w)| w).sum();
            assert!(close(total, 1.0, 1e-12));
        }
        _ => unreachable!(),
    }
}

#[test]
fn cdistr_to_mdistr_examples() {
    assert_eq!(cdistr_to_mdistr(&CDistr::Bernoulli, &Concrete::Real(0.3)).unwrap(), MDistr::Bernoulli { p: 0.3 });
    let cd = CDistr::GaussianMean { var: 1.0, scale: 1.0, shift: 0.0 };
    assert_eq!(cdistr_to_mdistr(&cd, &Concrete::Real(2.0)).unwrap(), MDistr::Gaussian { mean: 2.0, var: 1.0 });
    let cd = CDistr::GaussianMean { var: 0.5, scale: 2.0, shift: 1.0 };
    assert_eq!(cdistr_to_mdistr(&cd, &Concrete::Real(1.0)).unwrap(), MDistr::Gaussian { mean: 3.0, var: 0.5 });
}

#[test]
fn make_marginal_examples() {
    let cd = CDistr::GaussianMean { var: 0.3, scale: 1.0, shift: 0.0 };
    let (m, v) = gaussian_params(&make_marginal(&MDistr::gaussian(1.0, 2.0).unwrap(), &cd).unwrap());
    let (om, ov) = gaussian_marginal_oracle(1.0, 2.0, 0.3, 1.0, 0.0);
    assert!(close(m, om, 1e-6) && close(v, ov, 1e-6));
    let cd = CDistr::GaussianMean { var: 0.3, scale: -2.0, shift: 0.5 };
    let (m, v) = gaussian_params(&make_marginal(&MDistr::gaussian(1.0, 2.0).unwrap(), &cd).unwrap());
    let (om, ov) = gaussian_marginal_oracle(1.0, 2.0, 0.3, -2.0, 0.5);
    assert!(close(m, om, 1e-6) && close(v, ov, 1e-6));
    match make_marginal(&MDistr::beta(2.0, 5.0).unwrap(), &CDistr::Bernoulli).unwrap() {
        MDistr::Bernoulli { p } => assert!(close(p, beta_bernoulli_marginal_oracle(2.0, 5.0), 1e-6)),
        other => panic!("{other}"),
    }
}

#[test]
fn make_conditional_examples() {
    let cd = CDistr::GaussianMean { var: 1.0, scale: 1.0, shift: 0.0 };
    let post = make_conditional(&MDistr::gaussian(0.0, 1.0).unwrap(), &cd, &Concrete::Real(2.0)).unwrap();
    let (m, v) = gaussian_params(&post);
    assert!(close(m, 1.0, 1e-12) && close(v, 0.5, 1e-12));
    let (om, ov) = gaussian_posterior_oracle(0.0, 1.0, 1.0, 1.0, 0.0, 2.0);
    assert!(close(m, om, 1e-6) && close(v, ov, 1e-6));

    let post = make_conditional(&MDistr::beta(1.0, 1.0).unwrap(), &CDistr::Bernoulli, &Concrete::Bool(true)).unwrap();
    assert_eq!(beta_params(&post), (2.0, 1.0));
    let (om, ov) = beta_posterior_oracle(1.0, 1.0, true);
    let (m, v) = stats(&post).unwrap();
    assert!(close(m, om, 1e-6) && close(v, ov, 1e-6));

    let post = make_conditional(&MDistr::beta(3.0, 4.0).unwrap(), &CDistr::Bernoulli, &Concrete::Bool(false)).unwrap();
    assert_eq!(beta_params(&post), (3.0, 5.0));
}

#[test]
fn non_conjugate_pairs_are_rejected() {
    let g = MDistr::gaussian(0.0, 1.0).unwrap();
    assert!(make_marginal(&g, &CDistr::Bernoulli).is_err());
    let b = MDistr::beta(1.0, 1.0).unwrap();
    assert!(make_marginal(&b, &CDistr::GaussianMean { var: 1.0, scale: 1.0, shift: 0.0 }).is_err());
    assert!(make_conditional(&MDistr::poisson(2.0).unwrap(), &CDistr::Bernoulli, &Concrete::Bool(true)).is_err());
}

#[test]
fn stats_examples() {
    assert_eq!(stats(&MDistr::gaussian(3.0, 2.0).unwrap()).unwrap(), (3.0, 2.0));
    let (m, v) = stats(&MDistr::beta(2.0, 2.0).unwrap()).unwrap();
    assert!(close(m, 0.5, 1e-15) && close(v, 0.05, 1e-15));
    let (om, ov) = moments_of(|x| x * (1.0 - x), 0.0, 1.0);
    assert!(close(m, om, 1e-8) && close(v, ov, 1e-8));
    let (m, v) = stats(&MDistr::bernoulli(0.25).unwrap()).unwrap();
    assert!(close(m, 0.25, 1e-15) && close(v, 0.1875, 1e-15));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_conditional_matches_oracle(
        m0 in -5.0..5.0f64, v0 in 0.1..5.0f64, v in 0.1..5.0f64,
        s in -3.0..3.0f64, t in -3.0..3.0f64, z in -2.0..2.0f64,
    ) {
        let y = s * m0 + t + z * (s * s * v0 + v).sqrt();
        let cd = CDistr::GaussianMean { var: v, scale: s, shift: t };
        let (m, var) = gaussian_params(&make_conditional(&MDistr::gaussian(m0, v0).unwrap(), &cd, &Concrete::Real(y)).unwrap());
        let (om, ov) = gaussian_posterior_oracle(m0, v0, v, s, t, y);
        prop_assert!(close(m, om, 1e-6), "mean {} vs {}", m, om);
        prop_assert!(close(var, ov, 1e-6), "var {} vs {}", var, ov);
    }

    #[test]
    fn gaussian_marginal_matches_oracle(
        m0 in -5.0..5.0f64, v0 in 0.1..5.0f64, v in 0.1..5.0f64, s in -3.0..3.0f64, t in -3.0..3.0f64,
    ) {
        let cd = CDistr::GaussianMean { var: v, scale: s, shift: t };
        let (m, var) = gaussian_params(&make_marginal(&MDistr::gaussian(m0, v0).unwrap(), &cd).unwrap());
        let (om, ov) = gaussian_marginal_oracle(m0, v0, v, s, t);
        prop_assert!(close(m, om, 1e-6));
        prop_assert!(close(var, ov, 1e-6));
    }

    #[test]
    fn beta_bernoulli_matches_oracle(a in 2.0..20.0f64, b in 2.0..20.0f64, obs: bool) {
        let post = make_conditional(&MDistr::beta(a, b).unwrap(), &CDistr::Bernoulli, &Concrete::Bool(obs)).unwrap();
        let (m, v) = stats(&post).unwrap();
        let (om, ov) = beta_posterior_oracle(a, b, obs);
        prop_assert!(close(m, om, 1e-6));
        prop_assert!(close(v, ov, 1e-6));
        match make_marginal(&MDistr::beta(a, b).unwrap(), &CDistr::Bernoulli).unwrap() {
            MDistr::Bernoulli { p } => prop_assert!(close(p, beta_bernoulli_marginal_oracle(a, b), 1e-6)),
            other => prop_assert!(false, "{}", other),
        }
    }
}
