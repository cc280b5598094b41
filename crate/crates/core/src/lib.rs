//! Spectral analysis of `H = -d²/dx² + p + q` on the half-line with a
//! Dirichlet condition at the origin, where `p` is 1-periodic and `q` is a
//! compactly supported impurity.

pub mod adiabatic;
pub mod asymptotics;
pub mod band;
pub mod cli;
pub mod config;
pub mod contour;
pub mod error;
pub mod fixtures;
pub mod hill;
pub mod jet;
pub mod perturbed;
pub mod potential;
mod quad;
pub mod roots;
pub mod states;

pub use error::{Result, SpectralError};
pub use jet::C64;
