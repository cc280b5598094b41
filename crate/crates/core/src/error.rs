use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Growth exponent `|Im z|·x + ‖V‖_x` exceeded the representable range.
    #[error("exponent {exponent:.1} exceeds the overflow guard at z = {z}")]
    Range { z: num_complex::Complex64, exponent: f64 },

    #[error("could not bracket {what} in window [{lo}, {hi}]")]
    Bracket { what: String, lo: f64, hi: f64 },

    #[error("|φ(1,z)| = {phi1:.3e} at z = {z}: pole of m±, use the entire combination F instead")]
    PoleProximity { z: num_complex::Complex64, phi1: f64 },

    #[error("z = {0} is a branch point of sin k")]
    BranchPoint(num_complex::Complex64),

    #[error("structural failure: {0}")]
    Structural(String),

    #[error("contour integration failed: {0}")]
    Contour(String),
}

pub type Result<T> = std::result::Result<T, SpectralError>;
