use std::io;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use excon::boundary::{
    build_inward_curve, check_class_r_sufficient, check_feedback_invariance, check_hamiltonian_regularity, BoundaryError, BoundaryProbe,
    ClassRConfig, InvarianceSettings, RegularityConfig,
};
use excon::dpp::{
    check_dpp_lower, check_dpp_upper, check_open_closed, check_right_continuity, DppError, DppSettings, Point, RightContinuity,
    TestFixture, VerificationReport, Verdict,
};
use excon::hjb::{
    solve_constraint_floor, solve_expectation_constrained, solve_state_constrained, solve_unconstrained, write_binary, write_csv, Axis,
    Grid, HamiltonianParams, HjbError, PolicyField, PolicyInterp, ValueField,
};
use excon::model::{ModelError, ProblemSpec, SpecFileError};
use excon::sde::{
    path_bundle_filename, simulate_batch, write_paths_csv, ControlProgram, MartingaleProgram, Region, SimError, SimStart, StoppingRule,
    TimeGrid,
};

use crate::args::{AuditArgs, Command, Common, DppArgs, ExportArgs, FieldChoice, OpenClosedArgs, RcArgs};
use crate::output::{resolve_out, sha256_hex, RunDir};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Spec(#[from] SpecFileError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hjb(#[from] HjbError),
    #[error(transparent)]
    Dpp(#[from] DppError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write output: {0}")]
    Io(#[from] io::Error),
    #[error("grid has {nodes} nodes, above the budget of {budget} (raise --max-nodes)")]
    Budget { nodes: usize, budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

struct Run {
    spec: ProblemSpec,
    name: String,
    dir: RunDir,
    config: serde_json::Map<String, Value>,
}

impl Run {
    fn open(cmd: &Command) -> Result<Run, CliError> {
        let c = cmd.common();
        let bytes = std::fs::read(&c.spec).map_err(|source| SpecFileError::Io {
            path: c.spec.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| SpecFileError::Syntax("spec file is not UTF-8".into()))?;
        let spec = ProblemSpec::from_spec_str(&text)?;
        let name = c.spec.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "spec".into());
        let dir = RunDir::create(&resolve_out(c.out.as_deref(), cmd.name(), c.seed))?;
        let mut config = serde_json::Map::new();
        config.insert("subcommand".into(), json!(cmd.name()));
        config.insert("spec".into(), json!(c.spec.display().to_string()));
        config.insert("spec_sha256".into(), json!(sha256_hex(&bytes)));
        config.insert("spec_canonical".into(), json!(spec.to_spec_string()));
        config.insert("seed".into(), json!(c.seed));
        config.insert("truncation".into(), json!(c.truncation));
        config.insert("control_points".into(), json!(c.control_points));
        config.insert("max_nodes".into(), json!(c.max_nodes));
        Ok(Run { spec, name, dir, config })
    }

    fn set(&mut self, key: &str, value: Value) {
        self.config.insert(key.into(), value);
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        Ok(self.dir.write(name, bytes)?)
    }

    fn write_field(&mut self, stem: &str, field: &ValueField<f64>, policy: Option<&PolicyField<f64>>) -> Result<(), CliError> {
        let mut csv = Vec::new();
        write_csv(field, policy, &mut csv)?;
        self.write(&format!("{stem}.csv"), &csv)?;
        let mut bin = Vec::new();
        write_binary(field, policy, &mut bin)?;
        self.write(&format!("{stem}.bin"), &bin)?;
        self.set("field_meta", serde_json::to_value(&field.meta).expect("meta serializes"));
        Ok(())
    }

    fn write_reports(&mut self, reports: &[VerificationReport]) -> Result<Outcome, CliError> {
        let mut json = serde_json::to_string_pretty(reports).expect("reports serialize");
        json.push('\n');
        self.write("reports.json", json.as_bytes())?;
        let mut table = String::from("name,point,estimate,se,slack,verdict,seed\n");
        for r in reports {
            let point: Vec<String> = r.point.iter().map(|v| v.to_string()).collect();
            let verdict = serde_json::to_value(r.verdict).expect("verdict serializes");
            let line = format!(
                "{},{},{},{},{},{},{}\n",
                r.name,
                point.join(" "),
                r.estimate,
                r.se,
                r.slack,
                verdict.as_str().unwrap_or(""),
                r.seed
            );
            print!("{line}");
            table.push_str(&line);
        }
        self.write("summary.csv", table.as_bytes())?;
        Ok(if reports.iter().any(|r| r.verdict == Verdict::Fail) {
            Outcome::Fail
        } else {
            Outcome::Pass
        })
    }

    fn finish(self) -> Result<(), CliError> {
        let path = self.dir.finish(&Value::Object(self.config))?;
        eprintln!("manifest: {}", path.display());
        Ok(())
    }
}

fn broadcast<T: Copy>(v: &[T], d: usize, what: &str) -> Result<Vec<T>, CliError> {
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        n if n == d => Ok(v.to_vec()),
        n => Err(usage(format!("--{what} takes 1 or {d} values, got {n}"))),
    }
}

fn grid(run: &mut Run, c: &Common, with_m: bool) -> Result<Grid<f64>, CliError> {
    let d = run.spec.dim;
    let nx = broadcast(&c.nx, d, "nx")?;
    let lo = broadcast(&c.x_lo, d, "x-lo")?;
    let hi = broadcast(&c.x_hi, d, "x-hi")?;
    if c.nt < 2 || nx.iter().any(|n| *n < 2) || (with_m && c.nm < 2) {
        return Err(usage("grid resolutions must be at least 2"));
    }
    let nodes = nx.iter().product::<usize>() * if with_m { c.nm } else { 1 } * (c.nt + 1);
    if nodes > c.max_nodes {
        return Err(CliError::Budget {
            nodes,
            budget: c.max_nodes,
        });
    }
    let axes = (0..d).map(|i| Axis::new(lo[i], hi[i], nx[i])).collect::<Result<Vec<_>, _>>()?;
    let m = if with_m { Some(Axis::new(c.m_lo, c.m_hi, c.nm)?) } else { None };
    let mut grid_cfg = json!({"t0": 0.0, "t1": run.spec.horizon, "nt": c.nt, "nx": nx, "x_lo": lo, "x_hi": hi});
    if with_m {
        grid_cfg["nm"] = json!(c.nm);
        grid_cfg["m_lo"] = json!(c.m_lo);
        grid_cfg["m_hi"] = json!(c.m_hi);
    }
    run.set("grid", grid_cfg);
    Ok(Grid::new(0.0, run.spec.horizon, c.nt, axes, m)?)
}

fn params(c: &Common) -> HamiltonianParams {
    HamiltonianParams {
        control_points: c.control_points,
        ..HamiltonianParams::default().with_truncation(c.truncation)
    }
}

fn center(c: &Common, d: usize) -> Result<Vec<f64>, CliError> {
    let lo = broadcast(&c.x_lo, d, "x-lo")?;
    let hi = broadcast(&c.x_hi, d, "x-hi")?;
    Ok(lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect())
}

fn numbers(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| usage(format!("{what}: `{p}` is not a number"))))
        .collect()
}

fn numbers_of_len(s: &str, len: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let v = numbers(s, what)?;
    if v.len() != len {
        return Err(usage(format!("{what} `{s}` needs {len} values, got {}", v.len())));
    }
    Ok(v)
}

fn point_txm(s: &str, d: usize) -> Result<Point, CliError> {
    let v = numbers_of_len(s, d + 2, "--point")?;
    Ok(Point::new(v[0], v[1..=d].to_vec(), v[d + 1]))
}

fn point_tx(s: &str, d: usize) -> Result<Point, CliError> {
    let v = numbers_of_len(s, d + 1, "--point")?;
    Ok(Point::state(v[0], v[1..].to_vec()))
}

fn stopping_rule(s: &str, point: &Point, horizon: f64) -> Result<StoppingRule<f64>, CliError> {
    let arg = |rest: &str| rest.parse::<f64>().map_err(|_| usage(format!("--tau `{s}`: bad number")));
    Ok(match s.split_once(':') {
        None if s == "immediate" => StoppingRule::Immediate,
        None if s == "terminal" => StoppingRule::Terminal,
        Some(("at", v)) => {
            let t = arg(v)?;
            if !(t >= point.t && t <= horizon) {
                return Err(usage(format!("--tau `{s}` lies outside [{}, {horizon}]", point.t)));
            }
            StoppingRule::AtTime(t)
        }
        Some(("exit", v)) => {
            let r = arg(v)?;
            let lo: Vec<f64> = point.x.iter().map(|x| x - r).collect();
            let hi: Vec<f64> = point.x.iter().map(|x| x + r).collect();
            StoppingRule::FirstExit(Region::x_box(&lo, &hi))
        }
        Some(("ylevel", v)) => StoppingRule::YLevel(arg(v)?),
        _ => return Err(usage(format!("unknown --tau `{s}`"))),
    })
}

fn projected_zero(spec: &ProblemSpec) -> Vec<f64> {
    let mut u = vec![0.0; spec.control_dim()];
    spec.controls.project(&mut u);
    u
}

pub fn execute(cmd: &Command) -> Result<Outcome, CliError> {
    let mut run = Run::open(cmd)?;
    let outcome = match cmd {
        Command::SolveFloor(a) => {
            let g = grid(&mut run, &a.common, false)?;
            let floor = solve_constraint_floor(&run.spec, &g, &params(&a.common))?;
            report_field(&floor, &a.common, run.spec.dim, None)?;
            run.write_field("floor", &floor, None)?;
            Outcome::Pass
        }
        Command::SolveConstrained(a) => {
            let g = grid(&mut run, &a.common, true)?;
            let (v, p) = solve_expectation_constrained(&run.spec, &g, &params(&a.common))?;
            report_field(&v, &a.common, run.spec.dim, Some(a.common.m_hi))?;
            run.write_field("value", &v, Some(&p))?;
            Outcome::Pass
        }
        Command::SolveState(a) => {
            let g = grid(&mut run, &a.common, false)?;
            let (v, p) = solve_state_constrained(&run.spec, &g, &params(&a.common))?;
            report_field(&v, &a.common, run.spec.dim, None)?;
            run.write_field("value", &v, Some(&p))?;
            Outcome::Pass
        }
        Command::VerifyDpp(a) => verify_dpp(&mut run, a)?,
        Command::VerifyRc(a) => verify_rc(&mut run, a)?,
        Command::VerifyOpenClosed(a) => verify_open_closed(&mut run, a)?,
        Command::AuditBoundary(a) => audit_boundary(&mut run, a)?,
        Command::Export(a) => export(&mut run, a)?,
    };
    run.set("exit", json!(if outcome == Outcome::Pass { 0 } else { 1 }));
    run.finish()?;
    Ok(outcome)
}

fn report_field(field: &ValueField<f64>, c: &Common, d: usize, m: Option<f64>) -> Result<(), CliError> {
    let x = center(c, d)?;
    let v = field.interpolate(0.0, &x, m);
    println!(
        "{:?}: {} nodes, {} masked, value at t=0 x={x:?}{} = {}",
        field.meta.kind,
        field.values.len(),
        field.masked_count(),
        m.map(|m| format!(" m={m}")).unwrap_or_default(),
        v.map(|v| v.to_string()).unwrap_or_else(|| "masked".into())
    );
    Ok(())
}

fn verify_dpp(run: &mut Run, a: &DppArgs) -> Result<Outcome, CliError> {
    if a.n_paths == 0 {
        return Err(usage("--n-paths must be at least 1"));
    }
    let c = &a.common;
    let g = grid(run, c, true)?;
    let d = run.spec.dim;
    let horizon = run.spec.horizon;
    let points = if a.points.is_empty() {
        vec![Point::new(0.0, center(c, d)?, 0.5 * (c.m_lo + c.m_hi))]
    } else {
        a.points.iter().map(|s| point_txm(s, d)).collect::<Result<_, _>>()?
    };
    let alpha = if a.alpha.is_empty() {
        vec![0.0; d]
    } else {
        broadcast(&a.alpha, d, "alpha")?
    };
    let controls: Vec<String> = if a.controls.is_empty() {
        vec![projected_zero(&run.spec).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")]
    } else {
        a.controls.clone()
    };
    let fx = TestFixture::expectation(&run.name, run.spec.clone(), &g, params(c))?.with_steps(a.steps.unwrap_or(c.nt));
    let settings = DppSettings {
        n_paths: a.n_paths,
        seed: c.seed,
        ..DppSettings::default()
    };
    let mut combos = Vec::new();
    for ctl in &controls {
        let (nu, mart) = if ctl == "policy" {
            (
                ControlProgram::feedback(fx.policy.clone(), PolicyInterp::Linear),
                MartingaleProgram::feedback(fx.policy.clone(), PolicyInterp::Linear, c.truncation),
            )
        } else {
            let u = numbers_of_len(ctl, run.spec.control_dim(), "--control")?;
            let bound = alpha.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (ControlProgram::Constant(u), MartingaleProgram::constant(alpha.clone(), bound))
        };
        combos.push((ctl.clone(), nu, mart));
    }
    let mut reports = Vec::new();
    for p in &points {
        let taus: Vec<String> = if a.taus.is_empty() {
            vec![format!("at:{}", 0.5 * (p.t + horizon)), "terminal".into()]
        } else {
            a.taus.clone()
        };
        for tau_text in &taus {
            let tau = stopping_rule(tau_text, p, horizon)?;
            for (label, nu, mart) in &combos {
                let mut up = check_dpp_upper(&fx, p, nu, mart, &tau, &settings)?;
                up.note(format!("control {label}, tau {tau_text}"));
                let mut lo = check_dpp_lower(&fx, p, a.delta, nu, mart, &tau, &settings)?;
                lo.note(format!("control {label}, tau {tau_text}"));
                reports.push(up);
                reports.push(lo);
            }
        }
    }
    run.set(
        "verify_dpp",
        json!({
            "points": points.iter().map(Point::coords).collect::<Vec<_>>(),
            "controls": controls,
            "alpha": alpha,
            "taus": a.taus,
            "delta": a.delta,
            "n_paths": a.n_paths,
            "steps": fx.steps,
            "scale": settings.scale,
            "invariance": settings.invariance,
        }),
    );
    run.write_reports(&reports)
}

fn verify_rc(run: &mut Run, a: &RcArgs) -> Result<Outcome, CliError> {
    let c = &a.common;
    let g = grid(run, c, true)?;
    let d = run.spec.dim;
    let points = if a.points.is_empty() {
        vec![Point::new(0.0, center(c, d)?, c.m_lo)]
    } else {
        a.points.iter().map(|s| point_txm(s, d)).collect::<Result<_, _>>()?
    };
    let cfg = RightContinuity {
        deltas: a.deltas.clone(),
        tol: a.tol,
    };
    let fx = TestFixture::expectation(&run.name, run.spec.clone(), &g, params(c))?;
    let reports = points
        .iter()
        .map(|p| check_right_continuity(&fx, p, &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    run.set(
        "verify_rc",
        json!({"points": points.iter().map(Point::coords).collect::<Vec<_>>(), "deltas": cfg.deltas, "tol": cfg.tol}),
    );
    run.write_reports(&reports)
}

fn verify_open_closed(run: &mut Run, a: &OpenClosedArgs) -> Result<Outcome, CliError> {
    if a.n_paths == 0 {
        return Err(usage("--n-paths must be at least 1"));
    }
    let c = &a.common;
    let g = grid(run, c, false)?;
    let d = run.spec.dim;
    let points = if a.points.is_empty() {
        vec![Point::state(0.0, center(c, d)?)]
    } else {
        a.points.iter().map(|s| point_tx(s, d)).collect::<Result<_, _>>()?
    };
    let fx = TestFixture::state(&run.name, run.spec.clone(), &g, params(c))?.with_steps(a.steps.unwrap_or(c.nt));
    let settings = DppSettings {
        n_paths: a.n_paths,
        seed: c.seed,
        open_closed_tol: a.tol,
        ..DppSettings::default()
    };
    let report = check_open_closed(&fx, &points, a.class_r, &settings)?;
    run.set(
        "verify_open_closed",
        json!({
            "points": points.iter().map(Point::coords).collect::<Vec<_>>(),
            "class_r": a.class_r,
            "n_paths": a.n_paths,
            "steps": fx.steps,
            "tol": a.tol,
        }),
    );
    run.write_reports(&[report])
}

fn audit_boundary(run: &mut Run, a: &AuditArgs) -> Result<Outcome, CliError> {
    let c = &a.common;
    let spec = run.spec.clone();
    let d = spec.dim;
    let lo = broadcast(&c.x_lo, d, "x-lo")?;
    let hi = broadcast(&c.x_hi, d, "x-hi")?;
    let mut reports = Vec::new();
    let mut ran = Vec::new();

    if spec.feedback_hat.is_some() || spec.domain.is_none() {
        let probes = if a.probes.is_empty() {
            vec![center(c, d)?]
        } else {
            a.probes.iter().map(|s| numbers_of_len(s, d, "--probe")).collect::<Result<_, _>>()?
        };
        let settings = InvarianceSettings {
            n_paths: a.n_paths,
            steps: a.steps,
            seed: c.seed,
        };
        reports.push(check_feedback_invariance(&spec, &probes, &settings)?);
        ran.push("feedback_invariance");
    }
    if spec.domain.is_some() && spec.feedback_check.is_some() {
        if let Some(bp) = &a.boundary_point {
            let x0 = numbers_of_len(bp, d, "--boundary-point")?;
            let probe = BoundaryProbe::new(&spec, x0.clone(), a.radius, 1e-6)?;
            let curve = build_inward_curve(&spec, &probe, &a.eps)?;
            let mut csv = String::from("eps,lambda");
            for j in 1..=d {
                csv.push_str(&format!(",l{j}"));
            }
            csv.push('\n');
            for ((e, l), lam) in curve.eps.iter().zip(&curve.offsets).zip(&curve.lambda) {
                let cols: Vec<String> = l.iter().map(|v| v.to_string()).collect();
                csv.push_str(&format!("{e},{lam},{}\n", cols.join(",")));
            }
            run.write("inward_curve.csv", csv.as_bytes())?;
            let mut u = vec![0.0; spec.control_dim()];
            let mut mu = vec![0.0; d];
            spec.feedback_check_at(&x0, &mut u)?;
            spec.drift_at(&x0, &u, &mut mu).map_err(ModelError::from)?;
            let bound = 2.0 * mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ratio = curve.ratio_bound();
            let mut r = VerificationReport::new("inward_curve", x0, curve.eps.len(), 0);
            r.estimate = ratio;
            r.slack = bound - ratio;
            r.values = curve.eps.iter().zip(&curve.offsets).map(|(e, l)| spec.delta_at(&l.iter().zip(&probe.x0).map(|(a, b)| a + b).collect::<Vec<_>>()).map(|v: f64| v / e)).collect::<Result<_, _>>()?;
            r.verdict = if ratio <= bound && r.values.iter().all(|v| *v > 0.0) {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            reports.push(r);
            ran.push("inward_curve");
        }
        let cfg = ClassRConfig {
            samples: a.samples,
            radius: a.radius,
            tol: a.sigma_tol,
            seed: c.seed,
            ..ClassRConfig::new(lo.clone(), hi.clone())
        };
        reports.push(check_class_r_sufficient(&spec, &cfg)?);
        ran.push("class_r_sufficient");
    }
    reports.push(check_hamiltonian_regularity(&spec, &RegularityConfig::new(lo.clone(), hi.clone(), a.budget, c.seed))?);
    ran.push("hamiltonian_regularity");

    run.set(
        "audit_boundary",
        json!({
            "checks": ran,
            "box_lo": lo,
            "box_hi": hi,
            "probes": a.probes,
            "boundary_point": a.boundary_point,
            "eps": a.eps,
            "n_paths": a.n_paths,
            "steps": a.steps,
            "samples": a.samples,
            "radius": a.radius,
            "sigma_tol": a.sigma_tol,
            "budget": a.budget,
        }),
    );
    run.write_reports(&reports)
}

fn export(run: &mut Run, a: &ExportArgs) -> Result<Outcome, CliError> {
    let c = &a.common;
    let d = run.spec.dim;
    let with_m = a.kind == FieldChoice::Constrained;
    let g = grid(run, c, with_m)?;
    let p = params(c);
    let (field, policy) = match a.kind {
        FieldChoice::Floor => (solve_constraint_floor(&run.spec, &g, &p)?, None),
        FieldChoice::Unconstrained => {
            let (v, pol) = solve_unconstrained(&run.spec, &g, &p)?;
            (v, Some(pol))
        }
        FieldChoice::Constrained => {
            let (v, pol) = solve_expectation_constrained(&run.spec, &g, &p)?;
            (v, Some(pol))
        }
        FieldChoice::State => {
            let (v, pol) = solve_state_constrained(&run.spec, &g, &p)?;
            (v, Some(pol))
        }
    };
    run.write_field("field", &field, policy.as_ref())?;

    let start = match &a.point {
        Some(s) => {
            let v = numbers(s, "--point")?;
            match v.len() {
                n if n == d + 1 => SimStart::new(v[0], v[1..].to_vec(), 0.0),
                n if n == d + 2 => SimStart::new(v[0], v[1..=d].to_vec(), v[d + 1]),
                n => return Err(usage(format!("--point needs {} or {} values, got {n}", d + 1, d + 2))),
            }
        }
        None => SimStart::new(0.0, center(c, d)?, if with_m { c.m_hi } else { 0.0 }),
    };
    let (nu, mart) = match policy {
        Some(pol) => {
            let pol = Arc::new(pol);
            let mart = if with_m {
                MartingaleProgram::feedback(pol.clone(), PolicyInterp::Linear, c.truncation)
            } else {
                MartingaleProgram::zero(d)
            };
            (ControlProgram::feedback(pol, PolicyInterp::Linear), mart)
        }
        None => (ControlProgram::Constant(projected_zero(&run.spec)), MartingaleProgram::zero(d)),
    };
    let steps = a.steps.unwrap_or(c.nt);
    let tg = TimeGrid::new(start.t, run.spec.horizon, steps)?;
    let paths = simulate_batch(&run.spec, &start, &nu, &mart, &tg, c.seed, a.paths, |p| p.clone())?;
    let mut csv = Vec::new();
    write_paths_csv(&paths, &mut csv)?;
    run.write(&path_bundle_filename("paths", c.seed), &csv)?;
    let divergent = paths.iter().filter(|p| p.divergent).count();
    println!("{:?} field and {} paths written ({divergent} divergent)", field.meta.kind, paths.len());
    run.set(
        "export",
        json!({
            "kind": format!("{:?}", a.kind).to_lowercase(),
            "start_t": start.t,
            "start_x": start.x,
            "start_m": start.m,
            "paths": a.paths,
            "steps": steps,
        }),
    );
    Ok(if divergent > 0 { Outcome::Fail } else { Outcome::Pass })
}
