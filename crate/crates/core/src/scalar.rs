//! Scalar abstraction for the numeric kernels.
//!
//! Geometry/kernel code (vortex filaments, horseshoe velocity) is generic so
//! it can run in f32 for bulk field dumps or f64 for analysis; the assembled
//! models and frequency-domain machinery are concrete f64 (`crate::Scalar`).

use num_traits::{Float, FromPrimitive};

/// Floating scalar usable by the generic kernels.
pub trait Real:
    nalgebra::RealField + Float + FromPrimitive + Copy + std::fmt::Debug + 'static
{
}

impl<T> Real for T where
    T: nalgebra::RealField + Float + FromPrimitive + Copy + std::fmt::Debug + 'static
{
}

#[cfg(test)]
mod tests {
    use super::Real;

    fn norm<T: Real>(x: T, y: T) -> T {
        num_traits::Float::sqrt(x * x + y * y)
    }

    #[test]
    fn works_for_both_widths() {
        assert_eq!(norm(3.0f64, 4.0f64), 5.0);
        assert_eq!(norm(3.0f32, 4.0f32), 5.0);
    }
}
