use splitforge::design::{presets, Design};
use splitforge::linalg::{self, Mat};
use splitforge::pep::{self, OperatorClass, PepForm};
use splitforge::runtime::{self, InstanceClass, InstanceSpec, Placement};

fn uniform(n: usize) -> OperatorClass {
    OperatorClass::uniform(n, 1.0, 2.0)
}

fn bound(d: &Design, form: PepForm, gamma: f64, class: &OperatorClass) -> f64 {
    pep::certify(d, form, class, Some(gamma)).unwrap().tau
}

fn duality_cases() -> Vec<Design> {
    vec![presets::dr(), presets::ryu(), presets::mt(3).unwrap(), presets::fully_connected(4).unwrap()]
}

#[test]
fn strong_duality_in_both_forms() {
    for d in duality_cases() {
        let class = uniform(d.n);
        for form in [PepForm::Lifted, PepForm::Node] {
            let dual = bound(&d, form, 0.5, &class);
            let primal = pep::pep_primal(form, &d, 0.5, &class).unwrap();
            assert!((primal - dual).abs() <= 1e-5, "n={} {form:?}: {primal} vs {dual}", d.n);
            assert!(primal >= -1e-9);
        }
    }
}

#[test]
fn dr_contracts_at_half_step() {
    let tau = bound(&presets::dr(), PepForm::Lifted, 0.5, &uniform(2));
    assert!(tau < 1.0 && tau > 0.0);
}

#[test]
fn near_unrestricted_class_is_nonexpansive() {
    for d in [presets::dr(), presets::ryu(), presets::mt(4).unwrap()] {
        let class = OperatorClass::uniform(d.n, 0.0, 1e6);
        assert!(bound(&d, PepForm::Lifted, 0.5, &class) <= 1.0 + 1e-6);
    }
}

#[test]
fn sparse_mt_is_no_better_than_ryu() {
    let class = uniform(3);
    let mt = bound(&presets::mt(3).unwrap(), PepForm::Lifted, 0.5, &class);
    let ryu = bound(&presets::ryu(), PepForm::Lifted, 0.5, &class);
    assert!(mt >= ryu - 1e-7);
}

#[test]
fn forms_agree_when_w_has_one_nonzero_eigenvalue() {
    for d in [presets::dr(), presets::fully_connected(3).unwrap(), presets::fully_connected(5).unwrap()] {
        let class = uniform(d.n);
        for gamma in [0.5, 1.0] {
            let a = bound(&d, PepForm::Lifted, gamma, &class);
            let b = bound(&d, PepForm::Node, gamma, &class);
            assert!((a - b).abs() <= 1e-5, "n={} gamma={gamma}: {a} vs {b}", d.n);
        }
    }
}

#[test]
fn forms_are_within_the_condition_number() {
    for d in [presets::ryu(), presets::mt(4).unwrap(), presets::two_block_fiedler(4).unwrap()] {
        let class = uniform(d.n);
        let ev = linalg::sym_eigenvalues(&d.w);
        let kappa = ev[d.n - 1] / ev[1];
        let a = bound(&d, PepForm::Lifted, 0.5, &class);
        let b = bound(&d, PepForm::Node, 0.5, &class);
        assert!(a <= kappa * b + 1e-6 && b <= kappa * a + 1e-6, "{a} {b} {kappa}");
    }
}

#[test]
fn optimal_step_beats_the_grid() {
    let d = presets::dr();
    let class = uniform(2);
    let m = pep::minimal_factor(&d).unwrap();
    let best = pep::pep_optimal_gamma_d(&m, &d.l, &class, pep::GAMMA_MIN).unwrap();
    assert!(best.gamma > 1.0);
    let grid =
        (1..=19).map(|k| pep::pep_bound_d(&m, &d.l, 0.1 * k as f64, &class).unwrap().tau).fold(f64::INFINITY, f64::min);
    assert!(best.tau <= grid + 1e-6);
    let node = pep::pep_optimal_gamma_n(&d.w, &d.l, &class, pep::GAMMA_MIN).unwrap();
    assert!((node.gamma - best.gamma).abs() <= 1e-4);
}

#[test]
fn step_lower_bound_activates() {
    let d = presets::dr();
    let class = uniform(2);
    let m = pep::minimal_factor(&d).unwrap();
    let free = pep::pep_optimal_gamma_d(&m, &d.l, &class, pep::GAMMA_MIN).unwrap();
    let floor = free.gamma + 0.3;
    let forced = pep::pep_optimal_gamma_d(&m, &d.l, &class, floor).unwrap();
    assert!((forced.gamma - floor).abs() <= 1e-5);
    assert!(forced.tau >= free.tau - 1e-7);
    let forced_n = pep::pep_optimal_gamma_n(&d.w, &d.l, &class, floor).unwrap();
    assert!((forced_n.gamma - floor).abs() <= 1e-5);
    assert!(pep::pep_optimal_gamma_d(&m, &d.l, &class, 0.0).is_err());
}

#[test]
fn tuned_step_helps_with_an_unrestricted_operator() {
    let d = presets::fully_connected(4).unwrap();
    let class = OperatorClass::with_unrestricted(4, 1.0, 2.0, Placement::Last);
    let fixed = bound(&d, PepForm::Node, 0.5, &class);
    let tuned = pep::pep_optimal_gamma_n(&d.w, &d.l, &class, pep::GAMMA_MIN).unwrap();
    assert!(tuned.tau < fixed - 1e-4);
}

#[test]
fn unrestricted_operator_has_no_lipschitz_multiplier() {
    let d = presets::mt(3).unwrap();
    let class = OperatorClass::with_unrestricted(3, 1.0, 2.0, Placement::First);
    let cert = pep::certify(&d, PepForm::Lifted, &class, Some(0.5)).unwrap();
    assert_eq!(cert.lambda[0], 0.0);
    assert!(cert.phi.iter().chain(&cert.lambda).all(|v| *v >= -1e-9));
}

/// Golden-section minimization on `[lo, hi]`.
fn golden(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn optimal_w_for_two_operators_matches_a_scalar_scan() {
    let d = presets::dr();
    let class = uniform(2);
    let cert = pep::pep_optimal_w(&d.l, &class, 1e-3).unwrap();
    let wt = cert.w_tilde.clone().unwrap();
    assert!((wt[(0, 0)] + wt[(0, 1)]).abs() <= 1e-8);
    assert!((wt[(0, 1)] - wt[(1, 0)]).abs() <= 1e-8);
    let unit = Mat::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    let scan = |w: f64| pep::pep_bound_n(&unit, &d.l, w, &class).unwrap().tau;
    let w_star = golden(0.05, 4.0, scan);
    assert!((scan(w_star) - cert.tau).abs() <= 1e-4);
    assert!((wt[(0, 0)] - w_star).abs() <= 1e-2);
}

#[test]
fn optimal_w_dominates_tuned_step_and_recertifies() {
    for d in [presets::ryu(), presets::mt(4).unwrap()] {
        let class = uniform(d.n);
        let cw = pep::pep_optimal_w(&d.l, &class, 1e-3).unwrap();
        let cg = pep::pep_optimal_gamma_n(&d.w, &d.l, &class, pep::GAMMA_MIN).unwrap();
        assert!(cw.tau <= cg.tau + 1e-6);
        let wt = cw.w_tilde.unwrap();
        assert!((&wt * linalg::ones(d.n)).amax() <= 1e-8);
        assert!(linalg::min_eigenvalue(&wt) >= -1e-7);
        let again = pep::pep_bound_n(&wt, &d.l, 1.0, &class).unwrap();
        assert!((again.tau - cw.tau).abs() <= 1e-6);
    }
}

#[test]
fn larger_class_never_certifies_less() {
    let d = presets::mt(4).unwrap();
    let tau = |mu: f64, lip: f64| bound(&d, PepForm::Node, 0.5, &OperatorClass::uniform(4, mu, lip));
    let base = tau(1.0, 2.0);
    let weaker_mu = tau(0.5, 2.0);
    let larger_l = tau(0.5, 3.0);
    assert!(base <= weaker_mu + 1e-7);
    assert!(weaker_mu <= larger_l + 1e-7);
}

#[test]
fn only_the_product_of_step_and_w_matters() {
    for d in [presets::ryu(), presets::fully_connected(4).unwrap()] {
        let class = uniform(d.n);
        let base = pep::pep_bound_n(&d.w, &d.l, 0.5, &class).unwrap().tau;
        for alpha in [0.5, 2.0] {
            let scaled = pep::pep_bound_n(&(&d.w * alpha), &d.l, 0.5 / alpha, &class).unwrap().tau;
            assert!((scaled - base).abs() <= 1e-6);
        }
    }
}

#[test]
fn empty_class_is_rejected() {
    let d = presets::dr();
    let class = OperatorClass::uniform(2, 1.0, 1.0);
    assert!(pep::certify(&d, PepForm::Lifted, &class, Some(0.5)).is_err());
    assert!(pep::certify(&d, PepForm::Lifted, &uniform(3), Some(0.5)).is_err());
}

#[test]
fn certificate_json_keys() {
    let cert = pep::pep_optimal_w(&presets::dr().l, &uniform(2), 1e-3).unwrap();
    let v: serde_json::Value = serde_json::from_str(&cert.to_json().unwrap()).unwrap();
    for key in ["tau", "gamma", "wTilde", "phi", "lambda"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

/// `‖Δz⁺‖² / ‖Δz‖²` for one lifted step from two random starts.
fn one_step_ratio(d: &Design, m: &Mat, ops: &runtime::Operators, dim: usize, seed: u64) -> f64 {
    let z1 = runtime::random_point(m.nrows(), dim, seed);
    let z2 = runtime::random_point(m.nrows(), dim, seed + 7919);
    let (a, _) = runtime::d_step(d, m, ops, &z1).unwrap();
    let (b, _) = runtime::d_step(d, m, ops, &z2).unwrap();
    (a - b).norm_squared() / (z1 - z2).norm_squared()
}

#[test]
fn sampled_instances_respect_the_certificate() {
    for d in [presets::dr(), presets::ryu(), presets::mt(4).unwrap()] {
        let class = uniform(d.n);
        let m = pep::minimal_factor(&d).unwrap();
        let tau = pep::pep_bound_d(&m, &d.l, d.gamma, &class).unwrap().tau;
        let dim = 2 * d.n;
        for seed in 0..30 {
            let ops = runtime::make_instance(&InstanceSpec {
                class: InstanceClass::StronglyMonotoneLipschitz,
                n: d.n,
                mu: 1.0,
                lip: 2.0,
                dim,
                seed,
                placement: Placement::Last,
            })
            .unwrap();
            let ratio = one_step_ratio(&d, &m, &ops, dim, 1000 + seed);
            assert!(ratio <= tau + 1e-6, "n={} seed={seed}: {ratio} > {tau}", d.n);
        }
    }
}

#[test]
fn factor_choice_does_not_change_the_lifted_bound() {
    let d = presets::ryu();
    let class = uniform(3);
    let own = pep::pep_bound_d(d.m.as_ref().unwrap(), &d.l, 0.5, &class).unwrap().tau;
    let eig = pep::pep_bound_d(&splitforge::factor::factor_eigen(&d.w).unwrap(), &d.l, 0.5, &class).unwrap().tau;
    assert!((own - eig).abs() <= 1e-6);
}
