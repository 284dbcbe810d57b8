//! Small complex matrices for the d×d mass matrices of a matrix-valued
//! spectral measure.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::SymMatrix;

/// A dense complex d×d matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    /// Builds from row-major complex entries.
    pub fn from_rows(dim: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), dim * dim, "entry count must be dim*dim");
        CMatrix { dim, data }
    }

    /// Convenience constructor from row-major real entries.
    pub fn from_real_rows(dim: usize, data: &[f64]) -> Self {
        let entries = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_rows(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.dim + c] = v;
    }

    /// Entrywise complex conjugate (not the adjoint).
    pub fn conj(&self) -> CMatrix {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> CMatrix {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, other.dim);
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// max_{j,j'} |a_{j,j'} - conj(a_{j',j})|.
    pub fn hermitian_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        for r in 0..self.dim {
            for c in 0..self.dim {
                defect = defect.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        defect
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    /// The real 2d×2d matrix `[[Re H, -Im H], [Im H, Re H]]`. For a
    /// Hermitian `H` this is symmetric and carries each eigenvalue of `H`
    /// twice, so spectral questions about `H` reduce to real ones.
    pub fn real_embedding(&self) -> SymMatrix {
        let d = self.dim;
        let mut m = SymMatrix::zeros(2 * d);
        for r in 0..d {
            for c in 0..d {
                let z = self.get(r, c);
                m.set(r, c, z.re);
                m.set(r, c + d, -z.im);
                m.set(r + d, c, z.im);
                m.set(r + d, c + d, z.re);
            }
        }
        m
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        self.real_embedding().min_eigenvalue()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn embedding_doubles_hermitian_spectrum() {
        // [[1, i/2], [-i/2, 1]] has eigenvalues 1/2 and 3/2
        let mut h = CMatrix::zeros(2);
        h.set(0, 0, Complex64::new(1.0, 0.0));
        h.set(0, 1, Complex64::new(0.0, 0.5));
        h.set(1, 0, Complex64::new(0.0, -0.5));
        h.set(1, 1, Complex64::new(1.0, 0.0));
        assert_relative_eq!(h.min_eigenvalue(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(h.hermitian_defect(), 0.0);
    }

    #[test]
    fn hermitian_defect_detects_asymmetry() {
        let m = CMatrix::from_real_rows(2, &[1.0, 2.0, 0.0, 1.0]);
        assert_relative_eq!(m.hermitian_defect(), 2.0);
    }
}
