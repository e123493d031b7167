//! Problem specification, the coefficient expression language, and sampled
//! checks of the standing assumptions.

pub mod distance;
pub mod expr;
pub mod problem;
pub mod specfile;
pub mod validate;

pub use distance::{delta_gradient, distance_to_complement, domain_distance, project_to_boundary};
pub use expr::{eval_expression, parse_expression, Bindings, EvalError, Expr, ParseError, Var};
pub use problem::{ControlSet, Domain, ModelError, ProblemSpec};
pub use specfile::SpecFileError;
pub use validate::{validate_problem, CheckStatus, ValidationBox, ValidationCheck, ValidationReport};
