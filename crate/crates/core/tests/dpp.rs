use std::sync::OnceLock;

use excon::dpp::*;
use excon::hjb::{Grid, HamiltonianParams};
use excon::model::{ControlSet, Domain, Expr, ProblemSpec};
use excon::sde::{ControlProgram, MartingaleProgram, Region, StoppingRule};

fn interval(lo: f64, hi: f64, n: usize) -> ControlSet {
    ControlSet::interval(lo, hi, n).unwrap()
}

/// μ = u ∈ [−1, 1], f = g = x, noise level `sigma`.
fn linear(sigma: &str) -> ProblemSpec {
    ProblemSpec::new(1, 1.0, &["u1"], &[sigma], "x1", "x1", interval(-1.0, 1.0, 21)).unwrap()
}

fn probability() -> ProblemSpec {
    ProblemSpec::new(1, 1.0, &["u1"], &["1"], "-x1", "indicator_leq0(x1)", interval(-1.0, 1.0, 21)).unwrap()
}

fn deterministic() -> &'static TestFixture<f64> {
    static F: OnceLock<TestFixture<f64>> = OnceLock::new();
    F.get_or_init(|| {
        let grid = Grid::line(0.0, 1.0, 60, -1.5, 1.5, 61).unwrap().with_m(-0.5, 1.5, 41).unwrap();
        TestFixture::expectation("deterministic", linear("0"), &grid, HamiltonianParams::default())
            .unwrap()
            .with_steps(50)
    })
}

fn noisy() -> &'static TestFixture<f64> {
    static F: OnceLock<TestFixture<f64>> = OnceLock::new();
    F.get_or_init(|| {
        let grid = Grid::line(0.0, 1.0, 60, -2.0, 2.0, 81).unwrap().with_m(-0.5, 1.5, 41).unwrap();
        TestFixture::expectation("noisy", linear("0.2"), &grid, HamiltonianParams::default())
            .unwrap()
            .with_steps(50)
    })
}

fn prob() -> &'static TestFixture<f64> {
    static F: OnceLock<TestFixture<f64>> = OnceLock::new();
    F.get_or_init(|| {
        let grid = Grid::line(0.0, 1.0, 100, -5.0, 5.0, 101).unwrap().with_m(0.0, 1.0, 41).unwrap();
        TestFixture::expectation("probability", probability(), &grid, HamiltonianParams::default())
            .unwrap()
            .with_steps(50)
    })
}

fn settings(n: usize, seed: u64) -> DppSettings {
    DppSettings {
        n_paths: n,
        seed,
        ..DppSettings::default()
    }
}

fn constant(u: f64) -> ControlProgram<f64> {
    ControlProgram::Constant(vec![u])
}

fn alpha(a: f64) -> MartingaleProgram<f64> {
    MartingaleProgram::constant(vec![a], 2.0)
}

fn exit_band(r: f64) -> StoppingRule<f64> {
    StoppingRule::FirstExit(Region::x_interval(-r, r))
}

#[test]
fn upper_with_immediate_stop() {
    let fx = noisy();
    let p = Point::new(0.0, vec![0.0], 0.5);
    let r = check_dpp_upper(fx, &p, &constant(0.3), &alpha(0.2), &StoppingRule::Immediate, &settings(20_000, 1)).unwrap();
    assert!(r.slack >= -2.0 * r.se, "{r:?}");
    assert_eq!(r.verdict, Verdict::Pass);
    // φ(t, x, m) is the grid value: min(m, x + T − t) = 0.5 up to grid error.
    assert!((r.estimate - 0.5).abs() < 0.1, "{}", r.estimate);
}

#[test]
fn upper_with_terminal_stop_is_exact() {
    let fx = noisy();
    let p = Point::new(0.0, vec![0.1], 0.9);
    let r = check_dpp_upper(fx, &p, &constant(0.5), &alpha(0.2), &StoppingRule::Terminal, &settings(5_000, 2)).unwrap();
    assert_eq!(r.slack, 0.0);
    assert_eq!(r.se, 0.0);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn upper_exit_example() {
    let fx = noisy();
    let p = Point::new(0.0, vec![0.0], 0.5);
    let r = check_dpp_upper(fx, &p, &constant(0.3), &alpha(0.2), &exit_band(0.4), &settings(20_000, 3)).unwrap();
    assert!(r.slack >= -3.0 * r.se, "{r:?}");
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn upper_flags_inadmissible_input() {
    let fx = noisy();
    // ν ≡ 1 from x = 0 gives E[X_T] = 1 > m = 0.5.
    let p = Point::new(0.0, vec![0.0], 0.5);
    let r = check_dpp_upper(fx, &p, &constant(1.0), &alpha(0.2), &StoppingRule::Immediate, &settings(2_000, 4)).unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert!(r.notes.iter().any(|n| n.starts_with("inadmissible input")));
}

#[test]
fn lower_with_immediate_stop_is_monotonicity() {
    let fx = noisy();
    let p = Point::new(0.0, vec![0.0], 0.4);
    let r = check_dpp_lower(fx, &p, 0.05, &constant(0.0), &alpha(0.0), &StoppingRule::Immediate, &settings(1_000, 5)).unwrap();
    assert!(r.slack >= 0.0, "{r:?}");
    assert_eq!(r.se, 0.0);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn lower_deterministic_half_time() {
    let fx = deterministic();
    let h = fx.grid_h();
    let tau = StoppingRule::AtTime(0.5);
    for (m, u) in [(0.5, 0.3), (0.25, -0.5), (0.9, 1.0), (1.2, 0.0)] {
        let p = Point::new(0.0, vec![0.0], m);
        let r = check_dpp_lower(fx, &p, 0.05, &constant(u), &alpha(0.0), &tau, &settings(200, 6)).unwrap();
        assert!(r.slack >= -h, "m {m}, u {u}: {r:?}");
        assert_eq!(r.se, 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
    }
    let p = Point::new(0.0, vec![0.0], 0.5);
    let r = check_dpp_lower(fx, &p, 0.0, &constant(0.3), &alpha(0.0), &tau, &settings(200, 6)).unwrap();
    assert!(r.slack >= -h, "{r:?}");
    assert!(r.notes.iter().any(|n| n.contains("stronger-than-theorem")));
}

#[test]
fn deterministic_estimates_have_zero_variance() {
    let fx = deterministic();
    let p = Point::new(0.0, vec![0.2], 0.8);
    let r = check_dpp_upper(fx, &p, &constant(0.5), &alpha(0.0), &exit_band(0.5), &settings(300, 7)).unwrap();
    assert_eq!(r.se, 0.0);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn lower_slack_nondecreasing_in_delta() {
    let fx = noisy();
    let p = Point::new(0.0, vec![0.0], 0.3);
    let tau = exit_band(0.3);
    let mut last = f64::NEG_INFINITY;
    for delta in [0.0, 0.02, 0.05, 0.1, 0.2] {
        let r = check_dpp_lower(fx, &p, delta, &constant(0.2), &alpha(0.2), &tau, &settings(5_000, 8)).unwrap();
        assert!(r.slack >= last, "δ {delta}: {} < {last}", r.slack);
        last = r.slack;
    }
}

#[test]
fn lower_rejects_masked_point() {
    let fx = deterministic();
    // Floor at (0, 0) is −1; m = −0.5 − cells is below it only off the axis,
    // so probe a state whose floor exceeds the level.
    let p = Point::new(0.0, vec![1.4], -0.5);
    let r = check_dpp_lower(fx, &p, 0.0, &constant(0.0), &alpha(0.0), &StoppingRule::Immediate, &settings(10, 0));
    assert!(matches!(r, Err(DppError::MaskedPoint(_))), "{r:?}");
}

#[test]
fn probability_fixture_combinations() {
    let fx = prob();
    let a = MartingaleProgram {
        program: ControlProgram::law(&[Expr::parse("m - 1").unwrap()]),
        bound: 2.0,
    };
    let cases: [(f64, f64, _, _); 3] = [
        (0.0, 1.3, constant(1.0), exit_band(1.0)),
        (0.0, 1.0, constant(-0.5), StoppingRule::AtTime(0.5)),
        (0.2, 1.2, constant(0.5), StoppingRule::YLevel(-1.0)),
    ];
    for (x, m, nu, tau) in cases {
        let p = Point::new(0.0, vec![x], m);
        let alpha = if m > 1.0 { a.clone() } else { MartingaleProgram::zero(1) };
        let up = check_dpp_upper(fx, &p, &nu, &alpha, &tau, &settings(10_000, 9)).unwrap();
        assert_eq!(up.verdict, Verdict::Pass, "{up:?}");
        let lo = check_dpp_lower(fx, &p, 0.05, &nu, &alpha, &tau, &settings(10_000, 9)).unwrap();
        assert_ne!(lo.verdict, Verdict::Fail, "{lo:?}");
    }
}

#[test]
fn right_continuity_slack_row() {
    let fx = noisy();
    let top = Point::new(0.0, vec![0.0], 1.5);
    let r = check_right_continuity(fx, &top, &RightContinuity::default()).unwrap();
    assert!(r.values.iter().all(|g| *g == 0.0), "{:?}", r.values);
    assert_eq!(r.verdict, Verdict::Pass);
    // Above the unconstrained value the constraint is slack: V(0, 0, m) = 1.
    let slack = Point::new(0.0, vec![0.0], 1.2);
    let r = check_right_continuity(fx, &slack, &RightContinuity::default()).unwrap();
    assert!(r.values.iter().all(|g| g.abs() <= fx.grid_h()), "{:?}", r.values);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn right_continuity_probability_fixture() {
    let fx = prob();
    let p = Point::new(0.0, vec![0.5], 0.3);
    let r = check_right_continuity(fx, &p, &RightContinuity::default()).unwrap();
    // V is Lipschitz in m here (slope about 2.6), so the gaps halve with δ.
    assert!(r.values.windows(2).all(|w| w[1] <= 0.6 * w[0]), "{:?}", r.values);
    let finer = RightContinuity {
        deltas: vec![0.05, 0.025, 0.0125, 0.00625],
        tol: 0.05,
    };
    let r = check_right_continuity(fx, &p, &finer).unwrap();
    assert!(*r.values.last().unwrap() <= 0.05, "{:?}", r.values);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn right_continuity_gates_on_assumptions() {
    let spec = ProblemSpec::new(1, 1.0, &["u1"], &["x1^2"], "x1^3", "0", interval(0.0, 1.0, 3)).unwrap();
    let grid = Grid::line(0.0, 1.0, 20, -4.0, 4.0, 11).unwrap().with_m(0.0, 1.0, 6).unwrap();
    let fx = TestFixture::expectation("superlinear", spec, &grid, HamiltonianParams::default()).unwrap();
    let r = check_right_continuity(&fx, &Point::new(0.0, vec![0.0], 0.5), &RightContinuity::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert!(r.notes[0].contains("assumptions unmet"));
}

#[test]
fn checks_reject_wrong_field_kind() {
    let spec = linear("0.2");
    let grid = Grid::line(0.0, 1.0, 20, -1.0, 1.0, 11).unwrap();
    let fx = TestFixture::state("open", spec, &grid, HamiltonianParams::default()).unwrap();
    let p = Point::new(0.0, vec![0.0], 0.5);
    assert!(matches!(
        check_dpp_upper(&fx, &p, &constant(0.0), &alpha(0.0), &StoppingRule::Immediate, &settings(10, 0)),
        Err(DppError::WrongField { .. })
    ));
}

#[test]
fn open_closed_without_domain() {
    let spec = ProblemSpec::new(1, 1.0, &["u1"], &["1"], "x1", "0", interval(0.0, 1.0, 11)).unwrap();
    let grid = Grid::line(0.0, 1.0, 100, -6.0, 6.0, 121).unwrap();
    let fx = TestFixture::state("whole-space", spec, &grid, HamiltonianParams::default()).unwrap().with_steps(50);
    let r = check_open_closed(&fx, &[Point::state(0.0, vec![0.0])], None, &settings(20_000, 10)).unwrap();
    // Both equal x + (T − t) = 1; the grid is within its own error.
    assert!(r.values[0] <= 3.0 * r.se + 0.02, "{r:?}");
    assert_eq!(r.verdict, Verdict::Pass);
}

fn geometric() -> ProblemSpec {
    ProblemSpec::new(1, 1.0, &["u1*x1"], &["x1"], "x1", "0", interval(0.0, 1.0, 11))
        .unwrap()
        .with_domain(Domain::HalfSpace {
            normal: vec![1.0],
            offset: 0.0,
        })
        .unwrap()
        .with_feedback_hat(&["0"])
        .unwrap()
        .with_log_stepping(true)
}

#[test]
fn open_closed_geometric() {
    let grid = Grid::line(0.0, 1.0, 100, 0.0, 30.0, 301).unwrap();
    let fx = TestFixture::state("geometric", geometric(), &grid, HamiltonianParams::default()).unwrap();
    let probes = [Point::state(0.0, vec![1.0]), Point::state(0.0, vec![0.0])];
    let r = check_open_closed(&fx, &probes, None, &settings(20_000, 11)).unwrap();
    assert!((r.estimate - std::f64::consts::E).abs() <= 0.1, "{r:?}");
    assert!(r.values.iter().all(|g| *g <= 0.1), "{r:?}");
    assert_eq!(r.verdict, Verdict::Pass);
    let failed = check_open_closed(&fx, &probes, Some(false), &settings(10, 0)).unwrap();
    assert_eq!(failed.verdict, Verdict::Inconclusive);
}

#[test]
fn reports_are_reproducible() {
    let fx = noisy();
    let p = Point::new(0.0, vec![0.0], 0.5);
    let run = || check_dpp_upper(fx, &p, &constant(0.3), &alpha(0.2), &exit_band(0.4), &settings(2_000, 12)).unwrap().to_json();
    assert_eq!(run(), run());
}
