//! Certified invariant sets and bounding regions for switched affine systems.
//!
//! A switched affine system is a family of modes `ẋ = A_i x + b_i` driven by a
//! piecewise-constant switching signal. This crate computes certified outer
//! approximations of the sets such systems converge to:
//!
//! * under **arbitrary switching**: forward invariant ellipsoids (common
//!   quadratic certificates) and sublevel sets of sum-of-squares polynomials;
//! * under **dwell-time switching**: per-mode translated quadratic norms, the
//!   safety sets `X_i`, the bounding region `V`, and a path-following method
//!   that optimizes the ellipsoid centers.
//!
//! Everything a certificate claims can be re-checked here: exact flows via
//! augmented matrix exponentials, Monte-Carlo invariance verification, Nagumo
//! boundary tests and decay-rate estimation.
//!
//! ```
//! use swinv::system::SwitchedAffineSystem;
//! use swinv::arbitrary::{max_quadratic_decay, ellipsoid_invariant};
//!
//! // two coupled stable modes sharing the affine drive b = (-1, -1)
//! let system = SwitchedAffineSystem::from_rows(
//!     &[
//!         (vec![vec![-1.0, -1.0], vec![0.0, -1.0]], vec![-1.0, -1.0]),
//!         (vec![vec![-1.0, 0.0], vec![-1.0, -1.0]], vec![-1.0, -1.0]),
//!     ],
//! ).unwrap();
//!
//! let kappa = max_quadratic_decay(&system, 1e-3).unwrap();
//! assert!(kappa > 0.45);
//! let ell = ellipsoid_invariant(&system, 0.4785).unwrap();
//! assert!((ell.shape.trace() - 1.4240).abs() < 0.08);
//! ```

pub mod arbitrary;
pub mod dwell;
pub mod error;
pub mod io;
pub mod numerics;
pub mod pathfollow;
pub mod poly;
pub mod sdp;
pub mod sim;
pub mod system;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Every code snippet in the guide (`book/`) compiles and runs as a
/// doc-test, so the prose can never drift from the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/arbitrary.md")]
    mod arbitrary {}
    #[doc = include_str!("../../../book/src/dwell.md")]
    mod dwell {}
    #[doc = include_str!("../../../book/src/pathfollow.md")]
    mod pathfollow {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
