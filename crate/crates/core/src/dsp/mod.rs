//! Numerical kernels shared by the feature extractors.

mod fft;
mod svd;

pub use fft::{dft, FftPlan};
pub use svd::{dominant_left_singular_vector, hermitian_eigen, ComplexMatrix, DominantSingular};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scales a real vector to unit Euclidean norm.
pub fn unit_normalize<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot normalize a vector of norm {norm}"
        )));
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

/// In-place variant of [`unit_normalize`]; returns the original norm.
pub fn unit_normalize_in_place<T: Scalar>(v: &mut [T]) -> Result<T> {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot normalize a vector of norm {norm}"
        )));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(norm)
}

/// Scales a complex vector to unit Euclidean norm.
pub fn unit_normalize_complex<T: Scalar>(v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let norm = complex_norm(v);
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot normalize a vector of norm {norm}"
        )));
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

pub fn complex_norm<T: Scalar>(v: &[Complex<T>]) -> T {
    v.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt()
}

/// Hermitian inner product `⟨a, b⟩ = Σ conj(aᵢ)·bᵢ`.
pub fn inner<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_three_four() {
        let v = unit_normalize(&[3.0f64, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_is_idempotent() {
        let v = unit_normalize(&[1.0f64, -2.0, 0.5, 7.0]).unwrap();
        let w = unit_normalize(&v).unwrap();
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).abs() <= 1e-12);
        }
        let n: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(unit_normalize(&[0.0f64; 4]), Err(Error::Degenerate(_))));
        assert!(unit_normalize_complex(&[Complex::new(0.0f32, 0.0)]).is_err());
    }

    #[test]
    fn complex_normalize_f32() {
        let v = unit_normalize_complex(&[Complex::new(3.0f32, 0.0), Complex::new(0.0, 4.0)]).unwrap();
        assert!((complex_norm(&v) - 1.0).abs() < 1e-6);
    }
}
