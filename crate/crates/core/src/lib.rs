//! Discrete Witten deformation on flat tori.
//!
//! The crate assembles the deformed de Rham complex `d_t = e^{-tf} d e^{tf}` on
//! a periodic cubical complex, computes low-lying spectra of the Witten
//! Laplacian, and compares them with Betti numbers, Morse counts and the exact
//! harmonic-oscillator model operator.

pub mod eigen;
pub mod error;
pub mod exterior;
pub mod morse;
pub mod oscillator;
pub mod sparse;
pub mod torus;
pub mod tunneling;
pub mod verifier;
pub mod witten;

pub use error::{Result, WittenError};
pub use morse::{CriticalPoint, MorseFunctionSpec, MorseProfile};
pub use sparse::CsrMatrix;
pub use torus::{Cochain, MassMatrix, TorusGrid};
