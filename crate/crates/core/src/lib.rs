//! Numerical laboratory for the curvature of random complex submanifolds of
//! CP^n cut out by Kostlan random polynomial systems.
//!
//! * [`kostlan`]: random systems, unitary frames and physical 2-jets.
//! * [`jetlaw`]: exact Gaussian laws of 2-jets (finite degree and the
//!   Bargmann–Fock limit), sampling and conditioning on F = 0.
//! * [`curvature`]: Gauss–Codazzi curvature of the zero locus from a jet.
//! * [`discriminant`]: minima of Fubini–Study norms, distances to the
//!   discriminants and their tail exponents.
//! * [`estimator`]: Kac–Rice Monte Carlo estimators, decay curves and the
//!   closed-form volume identities.
//! * [`geometry`]: ground truth on actual zero loci (slice sampling and a
//!   finite-difference curvature oracle).

pub mod curvature;
pub mod discriminant;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod jetlaw;
pub mod kostlan;
pub mod linalg;
pub mod rng;
pub mod stats;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};
pub use kostlan::{Convention, Dims, Jet2, JetScale, MetricContext, PolySystem};
