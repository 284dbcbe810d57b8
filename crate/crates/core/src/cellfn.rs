//! Complex-valued functions on the cells of a regular system.
//!
//! These are the one-variable kernels of one-fold integrals and the
//! factors of tensor kernels. A valid cell function satisfies
//! `φ(Δ_{-k}) = conj(φ(Δ_k))`, which is exactly what makes its integral
//! against a random spectral measure real.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::RegularSystem;
use crate::spectral::lag_phase;

#[derive(Debug, Error)]
pub enum CellFnError {
    #[error("value count {actual} does not match cell count {expected}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("not a real kernel: conjugation defect {defect} exceeds {tolerance}")]
    NotRealKernel { defect: f64, tolerance: f64 },
}

/// Tolerance for the conjugation symmetry of supplied values.
pub const TOL_SYMMETRY: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CellFunction {
    system: Arc<RegularSystem>,
    /// one value per slot (k = 1..N then k = -1..-N)
    values: Vec<Complex64>,
}

impl CellFunction {
    /// Values for the positive cells; negative cells get the conjugates.
    pub fn from_positive(system: Arc<RegularSystem>, positive: Vec<Complex64>) -> Result<Self, CellFnError> {
        if positive.len() != system.half_count() {
            return Err(CellFnError::CountMismatch {
                expected: system.half_count(),
                actual: positive.len(),
            });
        }
        let mut values = positive;
        for i in 0..system.half_count() {
            values.push(values[i].conj());
        }
        Ok(CellFunction { system, values })
    }

    /// Explicit values for every signed cell, checked for conjugation
    /// symmetry.
    pub fn from_values(system: Arc<RegularSystem>, values: Vec<Complex64>) -> Result<Self, CellFnError> {
        if values.len() != system.cell_count() {
            return Err(CellFnError::CountMismatch {
                expected: system.cell_count(),
                actual: values.len(),
            });
        }
        let f = CellFunction { system, values };
        let defect = f.conjugation_defect();
        let scale = f.values.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        if defect > TOL_SYMMETRY * scale {
            return Err(CellFnError::NotRealKernel {
                defect,
                tolerance: TOL_SYMMETRY * scale,
            });
        }
        Ok(f)
    }

    /// Samples a function at the representatives of the positive cells and
    /// conjugates for the negative ones; `f` is assumed to satisfy
    /// `f(-x) = conj(f(x))`.
    pub fn from_fn(system: Arc<RegularSystem>, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let positive: Vec<Complex64> = system
            .positive_indices()
            .map(|k| f(system.representative(k)))
            .collect();
        Self::from_positive(system, positive).expect("length matches by construction")
    }

    /// The character `e^{i⟨p, u_k⟩}` for an integer lag.
    pub fn exp_lag(system: Arc<RegularSystem>, lag: &[i64]) -> Self {
        let positive: Vec<Complex64> = system
            .positive_indices()
            .map(|k| lag_phase(lag, system.representative(k)))
            .collect();
        Self::from_positive(system, positive).expect("length matches by construction")
    }

    /// Constant one on every cell.
    pub fn one(system: Arc<RegularSystem>) -> Self {
        let n = system.half_count();
        Self::from_positive(system, vec![Complex64::new(1.0, 0.0); n])
            .expect("length matches by construction")
    }

    pub fn system(&self) -> &Arc<RegularSystem> {
        &self.system
    }

    #[inline]
    pub fn value(&self, k: i64) -> Complex64 {
        self.values[self.system.slot(k)]
    }

    pub fn conjugation_defect(&self) -> f64 {
        self.system
            .positive_indices()
            .map(|k| (self.value(-k) - self.value(k).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// `Σ_k |φ(k)|² G_{j,j}(Δ_k)`, the squared norm against a diagonal
    /// coordinate of a measure.
    pub fn norm_sqr(&self, measure: &crate::spectral::MatrixSpectralMeasure, j: usize) -> f64 {
        self.system
            .signed_indices()
            .map(|k| self.value(k).norm_sqr() * measure.diagonal(k, j))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_symmetric_grid;
    use std::f64::consts::PI;

    #[test]
    fn exp_lag_is_exactly_symmetric() {
        let sys = Arc::new(build_symmetric_grid(2, vec![PI, PI], vec![4, 2]).unwrap());
        let f = CellFunction::exp_lag(sys.clone(), &[3, -1]);
        assert_eq!(f.conjugation_defect(), 0.0);
        for k in sys.signed_indices() {
            assert_eq!(f.value(-k), f.value(k).conj());
        }
    }

    #[test]
    fn asymmetric_values_are_rejected() {
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![2]).unwrap());
        let err = CellFunction::from_values(
            sys,
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)],
        )
        .unwrap_err();
        assert!(matches!(err, CellFnError::NotRealKernel { .. }));
    }
}
