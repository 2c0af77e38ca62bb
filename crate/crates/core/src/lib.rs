//! Characteristic and substructure characteristic modes of lossless
//! scatterers from scattering, transition and impedance matrices.
//!
//! Backends: a coupled-dipole MoM ([`dipole`]), analytic spheres ([`mie`])
//! and their coupling ([`hybrid`]). Mode solvers live in [`modes`] (dense)
//! and [`iterative`] (matrix-free).

pub mod dipole;
pub mod error;
pub mod hybrid;
pub mod iterative;
pub mod linalg;
pub mod mie;
pub mod modes;
pub mod network;
pub mod par;
pub mod scenes;
pub mod solver;
pub mod special;
pub mod swe;

pub use error::{Error, Result};
pub use faer::c64;
