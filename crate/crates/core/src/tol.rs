//! Central tolerance ledger.
//!
//! Every threshold used by the numeric surrogates lives here, so that a
//! tolerance change is one edit and the test suite pins each value.

/// Relative singular-value cutoff for rank decisions (kernels, spans, refits).
pub const RANK_REL_CUTOFF: f64 = 1e-8;

/// Entries below this count as an exact zero when partitioning parametric
/// systems by pivot magnitude.
pub const PIVOT_ZERO: f64 = 1e-12;

/// Log-log slope above which a defect ladder counts as "tends to zero" in
/// the Glaeser refinement surrogate.
pub const DECAY_SLOPE_MIN: f64 = 0.25;

/// Absolute floor under which a Whitney defect counts as already vanished,
/// regardless of its fitted slope.
pub const DEFECT_FLOOR: f64 = 1e-5;

/// A pinned (zero-dimensional) fiber is only emptied when its residual
/// defect exceeds this fraction of the jet scale without decaying; smaller
/// plateaus are the pin's own discretization bias.
pub const PINNED_DEFECT_REL_FLOOR: f64 = 1e-2;

/// Margin added to a little-o decay target: a ladder certifies o(scale^t)
/// when its fitted slope exceeds t + this margin.
pub const EXPONENT_MARGIN: f64 = 0.1;

/// Values below this are treated as exactly zero inside log-log fits.
pub const LOG_FLOOR: f64 = 1e-13;

/// Relative residual for solution-set equivalence checks against the dense
/// oracle.
pub const EQUIV_RESIDUAL: f64 = 1e-8;

/// Relative agreement required between supplied partials and central finite
/// differences in interior C^m cross-validation.
pub const FD_REL_TOL: f64 = 1e-4;

/// Finite-difference step as a fraction of the distance from the origin.
pub const FD_STEP_SCALE: f64 = 1e-3;

/// Relative plateau threshold that stops the greedy seminorm selection.
pub const SELECTION_PLATEAU: f64 = 0.01;

/// Padding on the greedily trained domination constant so fresh sphere
/// samples cannot trip the verifier on sampling noise alone.
pub const SELECTION_SAFETY: f64 = 0.05;

/// Relative residual under which a Puiseux model is accepted by the fitter.
pub const PUISEUX_FIT_TOL: f64 = 1e-6;

/// Membership distance for "a section's jets survive refinement" checks.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
