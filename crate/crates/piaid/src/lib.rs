//! Link-level simulator and optimization toolkit for partial interference
//! alignment with interference detection (PIAID) on K-user quasi-static MIMO
//! interference channels.
//!
//! The crate is organized around the processing chain of a PIAID link:
//!
//! * [`netgen`] — random network topologies, path gains, MIMO fading and the
//!   receive Es/N0 normalization.
//! * [`pia`] — interference cost metric and exact alignment-set selection via
//!   min-cost flow on the receiver/transmitter bipartite graph.
//! * [`ia`] — precoders/equalizers satisfying the partial alignment
//!   constraints, via alternating leakage minimization.
//! * [`sdp`] — small dense semidefinite programs of the form
//!   `min tr(WS) s.t. diag(S)=1, S ⪰ 0`, used by the SDR detector.
//! * [`detect`] — two-stage receivers: exhaustive aggregate-interference
//!   detection, minimum-distance symbol detection, and the SDR successive
//!   interference detector.
//! * [`harness`] — seeded, reproducible Monte-Carlo SER experiments for the
//!   PIAID schemes and the one-stage baselines.

pub mod detect;
pub mod harness;
pub mod ia;
pub mod netgen;
pub mod pia;
pub mod sdp;

pub use num_complex::Complex64;

/// Dynamically sized complex matrix used throughout the crate.
pub type CMat = nalgebra::DMatrix<Complex64>;
/// Dynamically sized complex column vector.
pub type CVec = nalgebra::DVector<Complex64>;
/// Dynamically sized real matrix.
pub type RMat = nalgebra::DMatrix<f64>;
/// Dynamically sized real column vector.
pub type RVec = nalgebra::DVector<f64>;
