use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "excon", version, about = "Constrained stochastic control: grid solvers and Monte Carlo checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the constraint floor v(t, x).
    SolveFloor(SolveArgs),
    /// Solve the expectation-constrained value V(t, x, m) and its policy.
    SolveConstrained(SolveArgs),
    /// Solve the state-constrained value on the domain.
    SolveState(SolveArgs),
    /// Monte Carlo checks of both weak DPP inequalities.
    VerifyDpp(DppArgs),
    /// δ-sweep of V(t, x, m + δ) − V(t, x, m).
    VerifyRc(RcArgs),
    /// Grid value against the closed-constraint Monte Carlo value.
    VerifyOpenClosed(OpenClosedArgs),
    /// Invariance, inward curve, class-R and Hamiltonian regularity checks.
    AuditBoundary(AuditArgs),
    /// Solve, dump the field and simulate paths under its policy.
    Export(ExportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SolveFloor(_) => "solve-floor",
            Command::SolveConstrained(_) => "solve-constrained",
            Command::SolveState(_) => "solve-state",
            Command::VerifyDpp(_) => "verify-dpp",
            Command::VerifyRc(_) => "verify-rc",
            Command::VerifyOpenClosed(_) => "verify-open-closed",
            Command::AuditBoundary(_) => "audit-boundary",
            Command::Export(_) => "export",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::SolveFloor(a) | Command::SolveConstrained(a) | Command::SolveState(a) => &a.common,
            Command::VerifyDpp(a) => &a.common,
            Command::VerifyRc(a) => &a.common,
            Command::VerifyOpenClosed(a) => &a.common,
            Command::AuditBoundary(a) => &a.common,
            Command::Export(a) => &a.common,
        }
    }
}

/// Options shared by every subcommand. Per-axis lists with one entry are
/// broadcast to every state coordinate.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Problem spec file (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    /// Time intervals of the grid.
    #[arg(long, default_value_t = 100)]
    pub nt: usize,
    /// Nodes per state axis.
    #[arg(long, value_delimiter = ',', default_value = "101")]
    pub nx: Vec<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-3")]
    pub x_lo: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "3")]
    pub x_hi: Vec<f64>,
    /// Nodes of the m axis.
    #[arg(long, default_value_t = 41)]
    pub nm: usize,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub m_lo: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    pub m_hi: f64,
    /// Bound A of the martingale control.
    #[arg(long, default_value_t = 2.0)]
    pub truncation: f64,
    /// Grid points per axis of a box control set (default: the spec's).
    #[arg(long)]
    pub control_points: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run directory (default: `$EXCON_OUT_ROOT/<subcommand>_seed<seed>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Refuse grids with more nodes than this.
    #[arg(long, default_value_t = 20_000_000)]
    pub max_nodes: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct DppArgs {
    #[command(flatten)]
    pub common: Common,
    /// Start point `t,x1,..,xd,m`; repeatable.
    #[arg(long = "point", allow_hyphen_values = true)]
    pub points: Vec<String>,
    /// `policy` or a constant control `u1,..,uk`; repeatable.
    #[arg(long = "control", allow_hyphen_values = true)]
    pub controls: Vec<String>,
    /// Constant martingale control used with constant controls.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Vec<f64>,
    /// `immediate`, `terminal`, `at:T`, `exit:R` or `ylevel:E`; repeatable.
    #[arg(long = "tau", allow_hyphen_values = true)]
    pub taus: Vec<String>,
    /// Level relaxation of the lower inequality.
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n_paths: usize,
    /// Simulation steps over the horizon (default: nt).
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RcArgs {
    #[command(flatten)]
    pub common: Common,
    /// Point `t,x1,..,xd,m`; repeatable.
    #[arg(long = "point", allow_hyphen_values = true)]
    pub points: Vec<String>,
    /// Strictly decreasing δ sequence.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OpenClosedArgs {
    #[command(flatten)]
    pub common: Common,
    /// Probe `t,x1,..,xd`; repeatable.
    #[arg(long = "point", allow_hyphen_values = true)]
    pub points: Vec<String>,
    /// Whether the value is known to be of class R (omit when unknown).
    #[arg(long)]
    pub class_r: Option<bool>,
    #[arg(long, default_value_t = 10_000)]
    pub n_paths: usize,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: Common,
    /// Invariance start state `x1,..,xd`; repeatable.
    #[arg(long = "probe", allow_hyphen_values = true)]
    pub probes: Vec<String>,
    /// Boundary point for the inward curve.
    #[arg(long, allow_hyphen_values = true)]
    pub boundary_point: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.005,0.01,0.02,0.05,0.1")]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Boundary samples of the class-R check.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.05)]
    pub radius: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub sigma_tol: f64,
    /// Sample budget of the regularity check.
    #[arg(long, default_value_t = 2000)]
    pub budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldChoice {
    Floor,
    Unconstrained,
    Constrained,
    State,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = FieldChoice::Constrained)]
    pub kind: FieldChoice,
    /// Path start `t,x1,..,xd[,m]` (default: box center at t0, m_hi).
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub paths: usize,
    #[arg(long)]
    pub steps: Option<usize>,
}
