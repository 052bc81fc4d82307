use thiserror::Error;

/// Everything that can go wrong across the library.
///
/// The variants are shared by all modules so callers match on one type;
/// each carries just enough context to diagnose the offending call.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum KvhError {
    #[error("energy {energy} is at or below the well minimum {min}")]
    EnergyBelowWell { energy: f64, min: f64 },

    #[error("energy {energy} exceeds the barrier at the domain boundary; orbit not bounded")]
    EnergyAboveWell { energy: f64 },

    #[error("action {action} outside the quantizable range [{lo}, {hi}]")]
    ActionOutOfRange { action: f64, lo: f64, hi: f64 },

    #[error("position {x} lies outside the classically allowed region [{xi_minus}, {xi_plus}]")]
    OutsideAllowedRegion { x: f64, xi_minus: f64, xi_plus: f64 },

    #[error("position {x} lies inside the classically allowed region [{xi_minus}, {xi_plus}]")]
    InsideAllowedRegion { x: f64, xi_minus: f64, xi_plus: f64 },

    #[error("branch {branch} inconsistent with the region at x = {x}")]
    RegionMismatch { x: f64, branch: &'static str },

    #[error("integrator step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("point ({x}, {p}) left the domain during tracing")]
    OutOfDomain { x: f64, p: f64 },

    #[error("caustic crossing at t = {t} could not be classified (|K00| = {k00})")]
    CausticUnresolved { t: f64, k00: f64 },

    #[error("trajectory reached a caustic at t = {t} where the projection factor vanishes")]
    CausticReached { t: f64 },

    #[error("wavefunction magnitude {magnitude} at the momentum boundary exceeds {limit}")]
    BoundaryLeak { magnitude: f64, limit: f64 },

    #[error("grids disagree on the {axis} axis")]
    AxisMismatch { axis: &'static str },

    #[error("delta exponents a = {a}, b = {b} must be positive with a + b = 1")]
    ExponentSumInvalid { a: f64, b: f64 },
}

pub type Result<T> = std::result::Result<T, KvhError>;
