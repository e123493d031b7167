pub mod boundary;
pub mod dpp;
pub mod hjb;
pub mod model;
pub mod scalar;
pub mod sde;

pub use scalar::Real;

pub type Grid64 = hjb::Grid<f64>;
pub type ValueField64 = hjb::ValueField<f64>;
pub type PolicyField64 = hjb::PolicyField<f64>;
pub type AugmentedPath64 = sde::AugmentedPath<f64>;
