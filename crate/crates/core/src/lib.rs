#![allow(clippy::needless_range_loop)]
#![allow(clippy::type_complexity)]
// `!(x > 0.0)` guards reject NaN as well; `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Computational kernels for semialgebraic Whitney extension over the plane:
//! jet-ring arithmetic, Glaeser refinement of sampled jet bundles, parametric
//! Gaussian elimination, Helly-style seminorm selection, truncated Puiseux
//! series, cusp patching, and an end-to-end wedge-section synthesizer with
//! numerical certification.

// Re-exported so downstream crates build against the same version.
pub use nalgebra;

pub mod error;
pub mod tol;

pub mod scalar;

pub mod bundle;
pub mod elim;
pub mod expr;
pub mod fit;
pub mod helly;
pub mod jet;
pub mod linalg;
pub mod patch;
pub mod pipeline;
pub mod puiseux;

pub use bundle::{AffineFiber, FiberKind, RefinementParams, RefinementReport, SampledBundle};
pub use elim::{EchelonPiece, ParamLinearSystem};
pub use error::{Error, Result};
pub use expr::{Expr, ExprField};
pub use helly::{SelectionResult, SeminormFamily, SeminormMode};
pub use patch::{CuspRegion, CutoffProfile, FieldPiece, WindowProfile};
pub use pipeline::{TraceConstraintSystem, WedgeNormalForm};
pub use jet::{Jet, JetBasis, JetSpace, JetVector, MultiIndex, OneDJet};
pub use puiseux::{CurveLadder, PuiseuxPoly};
