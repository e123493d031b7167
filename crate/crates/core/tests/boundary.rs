use excon::boundary::*;
use excon::dpp::Verdict;
use excon::model::{ControlSet, Domain, ProblemSpec};
use proptest::prelude::*;

fn interval(lo: f64, hi: f64, n: usize) -> ControlSet {
    ControlSet::interval(lo, hi, n).unwrap()
}

fn half_line(spec: ProblemSpec) -> ProblemSpec {
    spec.with_domain(Domain::HalfSpace {
        normal: vec![1.0],
        offset: 0.0,
    })
    .unwrap()
}

/// O = (0, 1) with δ = x(1 − x), μ = ½ − x, σ = |u − x|, ǔ = x.
fn unit_interval(sigma: &str, delta: &str) -> ProblemSpec {
    ProblemSpec::new(1, 1.0, &["0.5 - x1"], &[sigma], "0", "0", interval(-1.0, 2.0, 31))
        .unwrap()
        .with_level_domain(delta)
        .unwrap()
        .with_feedback_check(&["x1"])
        .unwrap()
}

fn class_r(spec: &ProblemSpec, tol: f64) -> excon::dpp::VerificationReport {
    let cfg = ClassRConfig {
        tol,
        ..ClassRConfig::new(vec![-0.2], vec![1.2])
    };
    check_class_r_sufficient(spec, &cfg).unwrap()
}

const EPS: [f64; 5] = [0.005, 0.01, 0.02, 0.05, 0.1];

#[test]
fn probe_requires_boundary_point() {
    let spec = unit_interval("0", "x1*(1 - x1)");
    let p = BoundaryProbe::new(&spec, vec![0.0], 0.05, 1e-9).unwrap();
    assert!((p.normal[0] - 1.0).abs() < 1e-9);
    let p = BoundaryProbe::new(&spec, vec![1.0], 0.05, 1e-9).unwrap();
    assert!((p.normal[0] + 1.0).abs() < 1e-9);
    assert!(matches!(
        BoundaryProbe::new(&spec, vec![0.5], 0.05, 1e-9),
        Err(BoundaryError::NotOnBoundary(_))
    ));
}

#[test]
fn constant_field_curve_is_linear() {
    let spec = half_line(ProblemSpec::new(1, 1.0, &["2"], &["0"], "0", "0", interval(0.0, 1.0, 2)).unwrap())
        .with_feedback_check(&["0"])
        .unwrap();
    let probe = BoundaryProbe::new(&spec, vec![0.0], 0.05, 1e-12).unwrap();
    let curve = build_inward_curve(&spec, &probe, &EPS).unwrap();
    for (e, l) in curve.eps.iter().zip(&curve.offsets) {
        assert!((l[0] - 2.0 * e).abs() < 1e-12, "{e}: {l:?}");
    }
    assert_eq!(curve.lambda, EPS.to_vec());
}

#[test]
fn unit_interval_curve_enters_the_domain() {
    let spec = unit_interval("abs(u1 - x1)", "x1*(1 - x1)");
    let probe = BoundaryProbe::new(&spec, vec![0.0], 0.05, 1e-12).unwrap();
    let curve = build_inward_curve(&spec, &probe, &EPS).unwrap();
    assert_eq!(curve.lambda, curve.eps);
    for (e, l) in curve.eps.iter().zip(&curve.offsets) {
        // x' = ½ − x from 0 solves to ½(1 − e^{−ε}).
        let exact = 0.5 * (1.0 - (-e).exp());
        assert!((l[0] - exact).abs() < 1e-10, "{e}: {} vs {exact}", l[0]);
        let x = l[0];
        assert!(x * (1.0 - x) >= 0.4 * e, "{e}");
    }
    // |μ(x0, ǔ(x0))| = ½.
    assert!(curve.ratio_bound() <= 2.0 * 0.5);
}

#[test]
fn inward_curve_rejects_bad_input() {
    let spec = unit_interval("0", "x1*(1 - x1)");
    let probe = BoundaryProbe::new(&spec, vec![0.0], 0.05, 1e-12).unwrap();
    assert!(matches!(build_inward_curve(&spec, &probe, &[]), Err(BoundaryError::Input(_))));
    assert!(matches!(build_inward_curve(&spec, &probe, &[0.1, 0.05]), Err(BoundaryError::Input(_))));
    let mut bare = spec.clone();
    bare.feedback_check = None;
    assert!(build_inward_curve(&bare, &probe, &EPS).is_err());
}

#[test]
fn inward_curve_blow_up() {
    let spec = half_line(ProblemSpec::new(1, 1.0, &["exp(exp(exp(x1)))"], &["0"], "0", "0", interval(0.0, 1.0, 2)).unwrap())
        .with_feedback_check(&["0"])
        .unwrap();
    let probe = BoundaryProbe::new(&spec, vec![0.0], 0.05, 1e-12).unwrap();
    let err = build_inward_curve(&spec, &probe, &[0.01, 0.1, 1.0]).unwrap_err();
    assert!(matches!(err, BoundaryError::BlowUp(_) | BoundaryError::Model(_)), "{err:?}");
}

#[test]
fn class_r_unit_interval_passes() {
    let r = class_r(&unit_interval("abs(u1 - x1)", "x1*(1 - x1)"), 1e-9);
    let (iota, sigma) = (r.values[0], r.values[1]);
    assert!(iota >= 0.45, "ι̂ = {iota}");
    assert_eq!(sigma, 0.0);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn class_r_flipped_sign_fails() {
    let r = class_r(&unit_interval("abs(u1 - x1)", "x1*(x1 - 1)"), 1e-9);
    assert!(r.values[0] < 0.0);
    assert_eq!(r.verdict, Verdict::Fail);
}

#[test]
fn class_r_diffusion_on_boundary_fails_with_witness() {
    let r = class_r(&unit_interval("abs(u1 - x1) + 0.1", "x1*(1 - x1)"), 1e-9);
    assert_eq!(r.verdict, Verdict::Fail);
    assert!(r.values[1] >= 0.1);
    assert!(r.notes.iter().any(|n| n.starts_with("σ̂")), "{:?}", r.notes);
}

#[test]
fn class_r_without_boundary_points() {
    let spec = unit_interval("0", "x1*(1 - x1)");
    let cfg = ClassRConfig::new(vec![0.3], vec![0.7]);
    assert_eq!(check_class_r_sufficient(&spec, &cfg).unwrap_err(), BoundaryError::NoBoundaryPoints);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn class_r_monotone_in_tol(a in 1e-4f64..0.1, b in 1e-4f64..0.1) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let spec = unit_interval("0.01*(1 + x1) + abs(u1 - x1)", "x1*(1 - x1)");
        if class_r(&spec, lo).verdict == Verdict::Pass {
            prop_assert_eq!(class_r(&spec, hi).verdict, Verdict::Pass);
        }
    }
}

#[test]
fn invariance_vacuous_without_domain() {
    let spec = ProblemSpec::new(1, 1.0, &["u1"], &["1"], "0", "0", interval(-1.0, 1.0, 3)).unwrap();
    let r = check_feedback_invariance(&spec, &[vec![0.0]], &InvarianceSettings::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn invariance_geometric_never_touches_zero() {
    let spec = half_line(ProblemSpec::new(1, 1.0, &["u1*x1"], &["x1"], "0", "0", interval(0.0, 1.0, 11)).unwrap())
        .with_feedback_hat(&["0"])
        .unwrap()
        .with_log_stepping(true);
    let r = check_feedback_invariance(&spec, &[vec![1.0], vec![0.1]], &InvarianceSettings::default()).unwrap();
    assert_eq!(r.values[0], 0.0);
    assert_eq!(r.estimate, 0.0);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn invariance_outward_drift_fails() {
    let spec = half_line(ProblemSpec::new(1, 1.0, &["-1"], &["0"], "0", "0", interval(0.0, 1.0, 2)).unwrap())
        .with_feedback_hat(&["0.5"])
        .unwrap();
    let settings = InvarianceSettings {
        n_paths: 100,
        ..InvarianceSettings::default()
    };
    let r = check_feedback_invariance(&spec, &[vec![0.05]], &settings).unwrap();
    assert!(r.values[0] > 0.0);
    assert_eq!(r.verdict, Verdict::Fail);
}

#[test]
fn invariance_needs_feedback() {
    let spec = half_line(ProblemSpec::new(1, 1.0, &["0"], &["0"], "0", "0", interval(0.0, 1.0, 2)).unwrap());
    assert!(check_feedback_invariance(&spec, &[vec![1.0]], &InvarianceSettings::default()).is_err());
}

fn regularity(spec: &ProblemSpec, budget: usize, seed: u64) -> excon::dpp::VerificationReport {
    check_hamiltonian_regularity(spec, &RegularityConfig::new(vec![-10.0], vec![10.0], budget, seed)).unwrap()
}

#[test]
fn regularity_linear_is_stable() {
    let spec = ProblemSpec::new(1, 1.0, &["u1"], &["1"], "0", "0", interval(-1.0, 1.0, 21)).unwrap();
    let a = regularity(&spec, 1000, 3);
    let b = regularity(&spec, 2000, 3);
    assert_eq!(a.verdict, Verdict::Pass);
    assert_eq!(b.verdict, Verdict::Pass);
    let ratio = b.estimate / a.estimate;
    assert!((1.0 / 1.2..=1.2).contains(&ratio), "{} vs {}", a.estimate, b.estimate);
}

#[test]
fn regularity_quadratic_diffusion_fails() {
    let spec = ProblemSpec::new(1, 1.0, &["u1"], &["x1*x1"], "0", "0", interval(-1.0, 1.0, 21)).unwrap();
    let r = regularity(&spec, 2000, 3);
    assert!(r.values[1] >= 2.0 * r.values[0], "{:?}", r.values);
    assert_eq!(r.verdict, Verdict::Fail);
}

#[test]
fn regularity_identical_arguments_bound() {
    // Constant μ and σ leave only the Q term, ½(1, 1)Q(1, 1)ᵀ.
    let spec = ProblemSpec::new(1, 1.0, &["0"], &["1"], "0", "0", ControlSet::singleton(vec![0.0]).unwrap()).unwrap();
    let r = regularity(&spec, 1000, 0);
    assert!(r.estimate.is_finite() && r.estimate >= 0.0);
    assert!(r.estimate <= 1.0 + 1e-12);
}
