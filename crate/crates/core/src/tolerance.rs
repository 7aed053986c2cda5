//! Numerical thresholds shared across the crate.
//!
//! Everything is double precision. Relative thresholds compare against the
//! larger of the operands' norms, floored by [`NORM_FLOOR`].

/// Absolute threshold on the smallest symbol modulus (or singular value)
/// below which an operator is treated as not right-invertible.
pub const TAU_INV: f64 = 1e-10;

/// Relative threshold for accepting an operator as a scalar multiple of the identity.
pub const TAU_ID: f64 = 1e-8;

/// Keeps relative residuals finite when both operands vanish.
pub const NORM_FLOOR: f64 = 1e-300;

/// Oracle components with modulus at or below this are outside the parameter set.
pub const TAU_ZERO: f64 = 1e-10;

/// Relative tolerance for functional-calculus certification.
pub const TAU_FC: f64 = 1e-10;

/// Homomorphy check threshold (relative operator distance).
pub const TAU_HOMOMORPHY: f64 = 1e-10;

/// Default verification tolerance when every operator uses the symbol backend.
pub const VERIFY_TOL_SYMBOL: f64 = 1e-9;

/// Default verification tolerance once a dense operator is involved.
pub const VERIFY_TOL_DENSE: f64 = 1e-7;

/// Dense operators are O(n^3) to invert; larger grids must stay on symbols.
pub const DENSE_MAX_POINTS: usize = 4096;

/// The brute-force quadratic-form test enumerates all basis pairs.
pub const QFORM_MAX_POINTS: usize = 256;

pub const DEFAULT_VERIFY_SAMPLES: usize = 100;
pub const MIN_VERIFY_SAMPLES: usize = 8;
pub const DEFAULT_CALCULUS_SAMPLES: usize = 64;
pub const DEFAULT_HOMOMORPHY_SAMPLES: usize = 16;

/// Parameter magnitudes are drawn log-uniformly from this range.
pub const PARAM_LOG10_RANGE: (f64, f64) = (-2.0, 2.0);
