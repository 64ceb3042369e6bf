//! Numerical laboratory for holomorphic dynamics on complex projective space.
//!
//! The crate builds endomorphisms of CP^k (k = 1, 2) from a small map catalog
//! and provides the machinery to study their equilibrium measures numerically:
//!
//! - [`projective`]: homogeneous-coordinate arithmetic, the chordal metric,
//!   chart Jacobians and the Jacobian density of the Fubini-Study volume.
//! - [`sampler`]: equilibrium-measure sampling by random inverse iteration
//!   and forward orbits.
//! - [`lyapunov`]: Lyapunov spectra along sampled orbits via QR cocycles.
//! - [`dimension`]: pointwise/correlation dimension and local entropy
//!   estimators, plus the dimension bound formulas they are compared against.
//! - [`growth`]: Green potentials, Fubini-Study volumes of parametrized discs
//!   and the degree growth bound for bounded discs.
//! - [`normal_forms`]: exact algebra of resonant triangular maps and their
//!   cocycles.
//! - [`harness`]: configuration-driven experiment pipeline producing
//!   machine-readable verification reports.

pub mod catalog;
pub mod dimension;
pub mod error;
pub mod growth;
pub mod harness;
pub mod hompoly;
pub mod lyapunov;
pub mod map;
pub mod normal_forms;
pub mod projective;
pub mod roots;
pub mod sampler;

pub use error::{Error, Result};
pub use map::{Family, ProjectiveMap};
pub use projective::HomogeneousPoint;

pub(crate) mod par {
    //! Thin indirection so the hot loops can run on rayon when the
    //! `parallel` feature is on and fall back to plain iteration otherwise
    //! (the wasm build has no threads).

    #[cfg(feature = "parallel")]
    pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
    where
        F: Fn(T) -> U,
    {
        items.into_iter().map(f).collect()
    }
}
