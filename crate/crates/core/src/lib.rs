//! Formation-flight toolkit: linearized A320 dynamics, horseshoe-vortex wake
//! modeling, von Kármán turbulence, LQR / LQR+integral / structured PI
//! controllers, frequency-domain string-stability analysis, time-domain
//! cascade simulation, and derivative-free structured H-infinity tuning.

pub mod control;
pub mod formsim;
pub mod freqana;
pub mod hinfsynth;
pub mod linmodel;
pub mod scalar;
pub mod turb;
pub mod wake;

/// Concrete scalar used by the assembled models and analyses.
pub type Scalar = f64;
pub type Vec3 = nalgebra::Vector3<Scalar>;
pub type Vec12 = nalgebra::SVector<Scalar, 12>;
pub type Mat12 = nalgebra::SMatrix<Scalar, 12, 12>;
pub type Mat12x4 = nalgebra::SMatrix<Scalar, 12, 4>;
pub type DMat = nalgebra::DMatrix<Scalar>;
pub type DVec = nalgebra::DVector<Scalar>;
pub type CMat = nalgebra::DMatrix<num_complex::Complex<Scalar>>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("transfer-function conversion ill-conditioned (cond ≈ {cond:.3e})")]
    IllConditioned { cond: Scalar },
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
