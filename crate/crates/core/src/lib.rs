//! Algebraic space curves in multi-view geometry.
//!
//! The crate is organised bottom-up:
//!
//! * [`dd`] double-double arithmetic for ill-conditioned fits,
//! * [`poly`] dense homogeneous polynomials and nullspace fitting,
//! * [`cameras`] projective cameras, Plücker lines, two-view epipolar algebra,
//! * [`curves`] synthetic rational space curves, their image curves and dual curves,
//! * [`kruppa`] generalized Kruppa constraints and the solution-dimension analysis,
//! * [`reconstruct`] cone intersection, dual-space and Chow-form reconstruction,
//! * [`dynamics`] trajectory classification from unsynchronized optical rays,
//! * [`scene`] scene configuration, experiment commands and reports.

pub mod cameras;
pub mod curves;
pub mod dd;
pub mod dynamics;
mod error;
pub mod kruppa;
pub mod linalg;
pub mod poly;
pub mod reconstruct;
pub mod scene;

pub use error::{Error, Result};

/// Default relative tolerance for floating comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;
