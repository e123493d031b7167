use excon::model::{ControlSet, Domain, ProblemSpec};
use excon::sde::*;
use proptest::prelude::*;

fn interval(lo: f64, hi: f64, n: usize) -> ControlSet {
    ControlSet::interval(lo, hi, n).unwrap()
}

fn drift(sigma: &str) -> ProblemSpec {
    ProblemSpec::new(1, 1.0, &["u1"], &[sigma], "x1", "0", interval(-1.0, 1.0, 21)).unwrap()
}

fn geometric() -> ProblemSpec {
    ProblemSpec::new(1, 1.0, &["u1*x1"], &["x1"], "x1", "0", interval(0.0, 1.0, 11)).unwrap()
}

fn positive_geometric() -> ProblemSpec {
    geometric()
        .with_domain(Domain::HalfSpace {
            normal: vec![1.0],
            offset: 0.0,
        })
        .unwrap()
        .with_feedback_hat(&["0"])
        .unwrap()
        .with_log_stepping(true)
}

fn grid(n: usize) -> TimeGrid<f64> {
    TimeGrid::new(0.0, 1.0, n).unwrap()
}

fn constant(u: f64) -> ControlProgram<f64> {
    ControlProgram::Constant(vec![u])
}

fn start(x: f64, m: f64) -> SimStart<f64> {
    SimStart::new(0.0, vec![x], m)
}

fn no_mart() -> MartingaleProgram<f64> {
    MartingaleProgram::zero(1)
}

#[test]
fn constant_drift_reaches_one() {
    for n in [1, 7, 100] {
        let p = simulate(&drift("0"), &start(0.0, 0.0), &constant(1.0), &no_mart(), &grid(n), 3, 0).unwrap();
        assert_eq!(p.terminal_x()[0], 1.0);
    }
}

#[test]
fn frozen_dynamics() {
    let spec = ProblemSpec::new(1, 1.0, &["0"], &["0"], "x1", "0", interval(-1.0, 1.0, 3)).unwrap();
    let p = simulate(&spec, &start(0.3, 0.7), &constant(1.0), &no_mart(), &grid(50), 11, 4).unwrap();
    assert!(p.x.iter().all(|&v| v == 0.3));
    assert!(p.m.iter().all(|&v| v == 0.7));
}

#[test]
fn geometric_mean_matches_closed_form() {
    let n = 100_000;
    let xs = simulate_batch(&geometric(), &start(1.0, 0.0), &constant(1.0), &no_mart(), &grid(100), 2024, n, |p| {
        p.terminal_x()[0]
    })
    .unwrap();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    // Euler on a grid of 100 steps has mean (1 + 1/100)^100 rather than e.
    let e = std::f64::consts::E;
    assert!((mean - e).abs() <= 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn start_must_match_grid() {
    let s = SimStart::new(0.5, vec![0.0], 0.0);
    assert!(matches!(
        simulate(&drift("1"), &s, &constant(0.0), &no_mart(), &grid(10), 0, 0),
        Err(SimError::Start(_))
    ));
    assert!(matches!(
        simulate(&drift("1"), &start(f64::NAN, 0.0), &constant(0.0), &no_mart(), &grid(10), 0, 0),
        Err(SimError::Start(_))
    ));
    assert!(matches!(
        simulate(&drift("1"), &start(0.0, 0.0), &ControlProgram::Constant(vec![0.0, 1.0]), &no_mart(), &grid(10), 0, 0),
        Err(SimError::Arity { expected: 1, found: 2 })
    ));
}

#[test]
fn overflow_is_flagged_divergent() {
    let spec = ProblemSpec::new(1, 1.0, &["x1^2"], &["0"], "x1", "0", interval(0.0, 1.0, 2)).unwrap();
    let p = simulate(&spec, &start(1e80, 0.0), &constant(0.0), &no_mart(), &grid(20), 0, 0).unwrap();
    assert!(p.divergent);
    assert_eq!(p.x.len(), 21);
    assert!(p.terminal_x()[0].is_nan());
}

#[test]
fn domain_errors_surface() {
    let spec = ProblemSpec::new(1, 1.0, &["log(x1)"], &["0"], "x1", "0", interval(0.0, 1.0, 2)).unwrap();
    let r = simulate(&spec, &start(-1.0, 0.0), &constant(0.0), &no_mart(), &grid(5), 0, 0);
    assert!(matches!(r, Err(SimError::Eval(_))));
}

fn drift_paths_equal(a: &ControlProgram<f64>, b: &ControlProgram<f64>, seed: u64) {
    let spec = drift("1");
    let g = grid(40);
    for i in 0..5 {
        let pa = simulate(&spec, &start(0.0, 0.0), a, &no_mart(), &g, seed, i).unwrap();
        let pb = simulate(&spec, &start(0.0, 0.0), b, &no_mart(), &g, seed, i).unwrap();
        assert_eq!(pa, pb);
    }
}

#[test]
fn concatenation_on_empty_event_is_base() {
    let base = ControlProgram::TimeTable {
        breaks: vec![0.3, 0.6],
        values: vec![vec![-1.0], vec![0.5], vec![1.0]],
    };
    let tau = StoppingRule::FirstExit(Region::x_interval(-0.2, 0.2));
    let cat = concatenate(base.clone(), constant(0.0), tau, Event::Never);
    for seed in [1, 2, 3] {
        drift_paths_equal(&base, &cat, seed);
    }
}

#[test]
fn immediate_switch_on_full_event_is_continuation_after_start() {
    let spec = drift("1");
    let g = grid(40);
    let cont = ControlProgram::TimeTable {
        breaks: vec![0.5],
        values: vec![vec![1.0], vec![-1.0]],
    };
    let cat = concatenate(constant(0.25), cont.clone(), StoppingRule::Immediate, Event::Always);
    for seed in [5, 6] {
        let pa = simulate(&spec, &start(0.0, 0.0), &cat, &no_mart(), &g, seed, 0).unwrap();
        let pb = simulate(&spec, &start(0.0, 0.0), &cont, &no_mart(), &g, seed, 0).unwrap();
        assert_eq!(pa.u[0], 0.25);
        assert_eq!(&pa.u[1..], &pb.u[1..]);
    }
}

#[test]
fn two_phase_deterministic_path() {
    // x' = 0.8 while x < 0.5 (u = base), then x' = 1: with h = 0.01 the base
    // runs until node 63 (x = 0.504), the continuation from there on.
    let spec = ProblemSpec::new(1, 1.0, &["0.8 + 0.2*u1"], &["0"], "x1", "0", interval(0.0, 1.0, 2)).unwrap();
    let tau = StoppingRule::FirstExit(Region::x_interval(f64::NEG_INFINITY, 0.5 - 1e-12));
    let prog = concatenate(constant(0.0), constant(1.0), tau, Event::Always);
    let p = simulate(&spec, &start(0.0, 0.0), &prog, &no_mart(), &grid(100), 0, 0).unwrap();
    let h = 0.01;
    let mut x = 0.0;
    let mut switched_at = None;
    for i in 0..100 {
        if switched_at.is_none() && x >= 0.5 - 1e-12 {
            switched_at = Some(i);
        }
        let after = matches!(switched_at, Some(s) if i > s);
        x += if after { h } else { 0.8 * h };
        assert!((p.x[i + 1] - x).abs() < 1e-12, "node {}: {} vs {x}", i + 1, p.x[i + 1]);
    }
    // The closed form, up to node detection: 0.8·s until s* = 0.63, then
    // 0.504 + 0.01·0.8 + (1 − 0.64).
    assert_eq!(switched_at, Some(63));
    assert!((p.terminal_x()[0] - (0.504 + 0.008 + 0.36)).abs() < 1e-9);
}

#[test]
fn first_exit_examples() {
    let spec = drift("0");
    let g = grid(100);
    let still = simulate(&spec, &start(0.1, 0.0), &constant(0.0), &no_mart(), &g, 0, 0).unwrap();
    assert_eq!(first_exit(&still, &Region::x_interval(-1.0, 1.0)), 100);
    assert_eq!(first_exit(&still, &Region::x_interval(0.5, 1.0)), 0);
    let ramp = simulate(&spec, &start(0.0, 0.0), &constant(1.0), &no_mart(), &g, 0, 0).unwrap();
    assert_eq!(first_exit(&ramp, &Region::x_interval(f64::NEG_INFINITY, 0.5)), 51);
    assert_eq!(first_exit(&ramp, &Region::everything(1).with_t(0.0, 0.25)), 26);
    assert_eq!(first_exit(&ramp, &Region::everything(1).with_m(0.5, 1.0)), 0);
}

#[test]
fn switch_never_triggering_keeps_base() {
    let spec = positive_geometric();
    let g = grid(50);
    let base = constant(1.0);
    let sw = switch_to_feedback(&spec, base.clone(), 1e-9).unwrap();
    for i in 0..20 {
        let a = simulate(&spec, &start(1.0, 0.0), &base, &no_mart(), &g, 9, i).unwrap();
        let b = simulate(&spec, &start(1.0, 0.0), &sw, &no_mart(), &g, 9, i).unwrap();
        if a.y.iter().all(|&y| y > 1e-9) {
            assert_eq!(a, b);
        }
    }
}

#[test]
fn switch_triggering_immediately_uses_feedback() {
    let spec = positive_geometric();
    let sw = switch_to_feedback(&spec, constant(1.0), 2.0).unwrap();
    let p = simulate(&spec, &start(1.0, 0.0), &sw, &no_mart(), &grid(50), 1, 0).unwrap();
    assert!(p.u.iter().all(|&u| u == 0.0));
}

#[test]
fn switch_requires_domain_and_feedback() {
    assert!(switch_to_feedback(&geometric(), constant(1.0), 0.1).is_err());
    let no_hat = geometric()
        .with_domain(Domain::HalfSpace {
            normal: vec![1.0],
            offset: 0.0,
        })
        .unwrap();
    assert!(switch_to_feedback(&no_hat, constant(1.0), 0.1).is_err());
}

#[test]
fn log_stepping_keeps_geometric_positive() {
    let spec = positive_geometric();
    let sw = switch_to_feedback(&spec, constant(1.0), 0.01).unwrap();
    let crossed = simulate_batch(&spec, &start(1.0, 0.0), &sw, &no_mart(), &grid(100), 77, 10_000, |p| {
        p.x.iter().any(|&v| v <= 0.0)
    })
    .unwrap();
    assert_eq!(crossed.iter().filter(|&&c| c).count(), 0);
}

#[test]
fn bit_identical_on_repeat() {
    let spec = positive_geometric();
    let sw = switch_to_feedback(&spec, constant(1.0), 0.5).unwrap();
    let mart = MartingaleProgram::constant(vec![0.7], 0.5);
    let a = simulate(&spec, &start(1.0, 0.2), &sw, &mart, &grid(64), 123, 17).unwrap();
    let b = simulate(&spec, &start(1.0, 0.2), &sw, &mart, &grid(64), 123, 17).unwrap();
    assert_eq!(a, b);
    assert!(a.a.iter().all(|&v| v == 0.5));
    let c = simulate(&spec, &start(1.0, 0.2), &sw, &mart, &grid(64), 124, 17).unwrap();
    assert_ne!(a.dw, c.dw);
}

#[test]
fn martingale_mean_within_bound() {
    let bound = 2.0;
    let n = 100_000;
    let mart = MartingaleProgram {
        program: ControlProgram::law(&[excon::model::Expr::parse("4*tanh(x1 - m)").unwrap()]),
        bound,
    };
    let ms = simulate_batch(&drift("1"), &start(0.0, 0.3), &constant(0.0), &mart, &grid(50), 8, n, |p| {
        assert!(p.a.iter().all(|a| a.abs() <= bound));
        p.terminal_m()
    })
    .unwrap();
    let mean = ms.iter().sum::<f64>() / n as f64;
    assert!((mean - 0.3).abs() <= 4.0 * bound * (1.0 / n as f64).sqrt(), "{mean}");
}

#[test]
fn strong_order_half() {
    let spec = geometric();
    let fine = 512;
    let n = 4000;
    let errs = simulate_batch(&spec, &start(1.0, 0.0), &constant(1.0), &no_mart(), &grid(fine), 31, n, |p| {
        let reference = p.terminal_x()[0];
        let err = |coarse: usize| {
            let dw = coarsen_increments(&p.dw, 1, fine / coarse);
            let q = simulate_driven(&spec, &start(1.0, 0.0), &constant(1.0), &no_mart(), &grid(coarse), &dw).unwrap();
            (q.terminal_x()[0] - reference).powi(2)
        };
        (err(16), err(32))
    })
    .unwrap();
    let coarse: f64 = errs.iter().map(|e| e.0).sum::<f64>() / n as f64;
    let half: f64 = errs.iter().map(|e| e.1).sum::<f64>() / n as f64;
    let ratio = coarse / half;
    assert!((1.6..=2.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn path_csv_layout() {
    let spec = drift("1");
    let g = grid(3);
    let paths: Vec<_> = (0..2)
        .map(|i| simulate(&spec, &start(0.0, 0.5), &constant(0.0), &no_mart(), &g, 42, i).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_paths_csv(&paths, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,time,x1,M,Y");
    assert_eq!(lines.len(), 1 + 2 * 4);
    assert!(lines[1].starts_with("0,0,0,0.5,"));
    assert!(lines[5].starts_with("0,0,"));
    assert_eq!(path_bundle_filename("paths", 42), "paths_seed42.csv");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn running_minimum_is_nonincreasing(seed in 0u64..1000, x0 in 0.05f64..3.0, y0 in 0.0f64..4.0) {
        let spec = positive_geometric();
        let s = SimStart::new(0.0, vec![x0], 0.0).with_y(y0);
        let p = simulate(&spec, &s, &constant(1.0), &no_mart(), &grid(40), seed, 0).unwrap();
        prop_assert_eq!(p.y[0], x0.min(y0));
        for w in p.y.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn zero_martingale_control_keeps_m(seed in 0u64..1000, m in -2.0f64..2.0) {
        let p = simulate(&drift("1"), &start(0.0, m), &constant(0.5), &no_mart(), &grid(30), seed, 1).unwrap();
        prop_assert!(p.m.iter().all(|&v| v == m));
    }

    #[test]
    fn empty_event_concatenation_is_identity(seed in 0u64..1000, level in -1.0f64..1.0) {
        let base = ControlProgram::TimeTable { breaks: vec![0.5], values: vec![vec![0.3], vec![-0.7]] };
        let cat = concatenate(base.clone(), constant(1.0), StoppingRule::YLevel(level), Event::Never);
        let spec = drift("1");
        let a = simulate(&spec, &start(0.0, 0.0), &base, &no_mart(), &grid(20), seed, 2).unwrap();
        let b = simulate(&spec, &start(0.0, 0.0), &cat, &no_mart(), &grid(20), seed, 2).unwrap();
        prop_assert_eq!(a, b);
    }
}
