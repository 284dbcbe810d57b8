//! Discretized matrix-valued spectral measures.
//!
//! A measure assigns to every cell `Δ_k` of a regular system a complex
//! d×d mass matrix `G(Δ_k)`. The canonical constructors store only the
//! masses of the positive cells and derive `G(Δ_{-k}) = conj(G(Δ_k))`, so
//! evenness cannot drift. Raw construction (used by the file loader and
//! the validator) keeps explicit masses for both signs so that violations
//! are representable and reportable.
//!
//! The dominating measure is realized as the per-cell trace, and the
//! Fourier transform of the measure at an integer lag recovers the field
//! cross-correlations.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cmatrix::CMatrix;
use crate::grid::RegularSystem;

/// Absolute tolerance for Hermitian and evenness defects.
pub const TOL_STRUCTURE: f64 = 1e-12;
/// Eigenvalues below this are a hard positive-semidefiniteness failure.
pub const TOL_PSD: f64 = -1e-10;
/// Largest imaginary residue accepted when a quantity must be real.
pub const TOL_REAL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("mass matrix dimension {actual} does not match field dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("missing mass matrix for cell {0}")]
    MissingCell(i64),
    #[error("unknown cell index {0}")]
    UnknownCell(i64),
    #[error("cell {cell}: mass matrix is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPsd { cell: i64, min_eigenvalue: f64 },
    #[error("non-even measure: imaginary residue {residue} exceeds {tolerance}")]
    NonEvenMeasure { residue: f64, tolerance: f64 },
    #[error("scaling parameters must be positive")]
    NonPositiveScaling,
    #[error("decay exponent must be positive")]
    NonPositiveExponent,
    #[error("cell function length {actual} does not match cell count {expected}")]
    CellCountMismatch { expected: usize, actual: usize },
}

/// Per-cell masses of a d×d matrix-valued measure on a regular system.
#[derive(Debug, Clone)]
pub struct MatrixSpectralMeasure {
    system: Arc<RegularSystem>,
    field_dim: usize,
    /// one matrix per slot, positive slots first
    masses: Vec<CMatrix>,
}

impl MatrixSpectralMeasure {
    /// Canonical constructor: masses given for the positive cells
    /// `k = 1..N` in order; negative cells are their conjugates.
    pub fn from_positive_masses(
        system: Arc<RegularSystem>,
        field_dim: usize,
        positive: Vec<CMatrix>,
    ) -> Result<Self, SpectralError> {
        if positive.len() != system.half_count() {
            return Err(SpectralError::CellCountMismatch {
                expected: system.half_count(),
                actual: positive.len(),
            });
        }
        for m in &positive {
            if m.dim() != field_dim {
                return Err(SpectralError::DimensionMismatch {
                    expected: field_dim,
                    actual: m.dim(),
                });
            }
        }
        let mut masses = positive;
        for i in 0..system.half_count() {
            masses.push(masses[i].conj());
        }
        Ok(MatrixSpectralMeasure {
            system,
            field_dim,
            masses,
        })
    }

    /// Raw constructor with explicit masses for every signed cell, in
    /// slot order (k = 1..N then k = -1..-N). Invariants are not
    /// enforced; run [`validate`] to obtain the defects.
    pub fn from_raw_masses(
        system: Arc<RegularSystem>,
        field_dim: usize,
        masses: Vec<CMatrix>,
    ) -> Result<Self, SpectralError> {
        if masses.len() != system.cell_count() {
            return Err(SpectralError::CellCountMismatch {
                expected: system.cell_count(),
                actual: masses.len(),
            });
        }
        for m in &masses {
            if m.dim() != field_dim {
                return Err(SpectralError::DimensionMismatch {
                    expected: field_dim,
                    actual: m.dim(),
                });
            }
        }
        Ok(MatrixSpectralMeasure {
            system,
            field_dim,
            masses,
        })
    }

    pub fn system(&self) -> &Arc<RegularSystem> {
        &self.system
    }

    pub fn field_dim(&self) -> usize {
        self.field_dim
    }

    pub fn mass(&self, k: i64) -> &CMatrix {
        &self.masses[self.system.slot(k)]
    }

    /// Scalar entry `G_{j,j'}(Δ_k)`, zero-based component indices.
    #[inline]
    pub fn entry(&self, k: i64, j: usize, jp: usize) -> Complex64 {
        self.mass(k).get(j, jp)
    }

    /// Diagonal entry `G_{j,j}(Δ_k)` as a real number.
    #[inline]
    pub fn diagonal(&self, k: i64, j: usize) -> f64 {
        self.mass(k).get(j, j).re
    }

    /// Per-cell trace, the operational dominating measure.
    pub fn trace_measure(&self) -> Vec<(i64, f64)> {
        self.system
            .signed_indices()
            .map(|k| (k, self.mass(k).trace().re))
            .collect()
    }

    /// Largest per-cell trace; the resolution scale that drives the
    /// discretization error of the product formula.
    pub fn max_cell_trace(&self) -> f64 {
        self.system
            .signed_indices()
            .map(|k| self.mass(k).trace().re)
            .fold(0.0, f64::max)
    }

    /// Structural and spectral defects, cell by cell.
    pub fn validate(&self) -> ValidationReport {
        let mut cells = Vec::with_capacity(self.system.half_count());
        for k in self.system.positive_indices() {
            let mass = self.mass(k);
            let partner = self.mass(-k);
            let hermitian_defect = mass.hermitian_defect().max(partner.hermitian_defect());
            let mut evenness_defect = 0.0f64;
            for r in 0..self.field_dim {
                for c in 0..self.field_dim {
                    evenness_defect =
                        evenness_defect.max((partner.get(r, c) - mass.get(r, c).conj()).norm());
                }
            }
            let min_eigenvalue = mass.min_eigenvalue().min(partner.min_eigenvalue());
            let mut diagonal_defect = 0.0f64;
            for j in 0..self.field_dim {
                let z = mass.get(j, j);
                diagonal_defect = diagonal_defect.max(z.im.abs()).max((-z.re).max(0.0));
            }
            cells.push(CellValidation {
                cell: k,
                hermitian_defect,
                evenness_defect,
                min_eigenvalue,
                diagonal_defect,
            });
        }
        ValidationReport::new(cells, TOL_STRUCTURE, TOL_PSD)
    }

    /// Fourier transform of the measure at an integer lag:
    /// `r_{j,j'}(p) = Σ_k e^{i⟨p, u_k⟩} G_{j,j'}(Δ_k)`, returned as a real
    /// matrix once the imaginary residue passes the evenness check.
    pub fn correlation(&self, lag: &[i64]) -> Result<CorrelationMatrix, SpectralError> {
        let d = self.field_dim;
        let mut values = vec![0.0; d * d];
        let mut residue = 0.0f64;
        for j in 0..d {
            for jp in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in self.system.positive_indices() {
                    let phase = lag_phase(lag, self.system.representative(k));
                    // pair k with -k: the paired term is the exact conjugate
                    let term = phase * self.entry(k, j, jp);
                    let partner = phase.conj() * self.entry(-k, j, jp);
                    acc += term + partner;
                }
                residue = residue.max(acc.im.abs());
                values[j * d + jp] = acc.re;
            }
        }
        if residue > TOL_REAL {
            return Err(SpectralError::NonEvenMeasure {
                residue,
                tolerance: TOL_REAL,
            });
        }
        Ok(CorrelationMatrix {
            lag: lag.to_vec(),
            field_dim: d,
            values,
        })
    }

    /// `G^{(N)}(A) = N^{2ν/n} A_N^{-2/n} G(A/N)` on the box scaled by `N`:
    /// the same cell layout on `[-Nh, Nh)^ν` with every mass multiplied by
    /// the scalar factor.
    pub fn rescale(
        &self,
        scale: u64,
        norming: f64,
        chaos_order: usize,
    ) -> Result<MatrixSpectralMeasure, SpectralError> {
        if scale == 0 || !(norming > 0.0) || chaos_order == 0 {
            return Err(SpectralError::NonPositiveScaling);
        }
        let n = chaos_order as f64;
        let nu = self.system.dim() as f64;
        let factor = (scale as f64).powf(2.0 * nu / n) * norming.powf(-2.0 / n);
        let system = Arc::new(
            crate::grid::build_symmetric_grid(
                self.system.dim(),
                self.system
                    .torus()
                    .half_extent()
                    .iter()
                    .map(|h| h * scale as f64)
                    .collect(),
                self.system.cells_per_axis().to_vec(),
            )
            .expect("scaling a valid grid stays valid"),
        );
        let masses = self
            .masses
            .iter()
            .map(|m| m.scale(factor))
            .collect::<Vec<_>>();
        MatrixSpectralMeasure::from_raw_masses(system, self.field_dim, masses)
    }

    /// The same measure on the `factor`-refined grid, each cell's mass
    /// split equally among its children. Realizes non-atomicity: every
    /// refinement makes every cell mass strictly smaller.
    pub fn refine_split(&self, factor: usize) -> Result<MatrixSpectralMeasure, SpectralError> {
        let fine = Arc::new(
            self.system
                .refine(factor)
                .map_err(|_| SpectralError::NonPositiveScaling)?,
        );
        let share = (factor as f64).powi(self.system.dim() as i32);
        let mut positive = vec![CMatrix::zeros(self.field_dim); fine.half_count()];
        for k in self.system.positive_indices() {
            let split = self.mass(k).scale(1.0 / share);
            for child in self.system.children_in(k, &fine) {
                // every cell sits on one side of 0 per axis, so children
                // of a positive cell are positive
                debug_assert!(child > 0);
                positive[(child - 1) as usize] = split.clone();
            }
        }
        MatrixSpectralMeasure::from_positive_masses(fine, self.field_dim, positive)
    }

    /// `Σ_k f(u_k) G_{j,j'}(Δ_k)` for a grid-sampled test function.
    pub fn test_integral(
        &self,
        f: &dyn Fn(&[f64]) -> Complex64,
        j: usize,
        jp: usize,
    ) -> Complex64 {
        self.system
            .signed_indices()
            .map(|k| f(self.system.representative(k)) * self.entry(k, j, jp))
            .sum()
    }

    /// `max_j Σ_k (1 + |u_k|)^{-r} G_{j,j}(Δ_k)`, the growth diagnostic
    /// swept over expanding boxes.
    pub fn moderate_increase_check(&self, r: f64) -> Result<f64, SpectralError> {
        if !(r > 0.0) {
            return Err(SpectralError::NonPositiveExponent);
        }
        let mut worst = 0.0f64;
        for j in 0..self.field_dim {
            let mut acc = 0.0;
            for k in self.system.signed_indices() {
                let u = self.system.representative(k);
                let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                acc += (1.0 + norm).powf(-r) * self.diagonal(k, j);
            }
            worst = worst.max(acc);
        }
        Ok(worst)
    }
}

#[inline]
pub(crate) fn lag_phase(lag: &[i64], point: &[f64]) -> Complex64 {
    let theta: f64 = lag
        .iter()
        .zip(point)
        .map(|(&p, &x)| p as f64 * x)
        .sum();
    Complex64::new(theta.cos(), theta.sin())
}

/// The real matrix `r_{j,j'}(p)` at one integer lag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub lag: Vec<i64>,
    pub field_dim: usize,
    /// row-major `d × d`
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, j: usize, jp: usize) -> f64 {
        self.values[j * self.field_dim + jp]
    }
}

/// Defects of one ± cell pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellValidation {
    pub cell: i64,
    pub hermitian_defect: f64,
    pub evenness_defect: f64,
    pub min_eigenvalue: f64,
    /// imaginary part or negativity of diagonal entries
    pub diagonal_defect: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub cells: Vec<CellValidation>,
    pub tol_structure: f64,
    pub tol_psd: f64,
    pub max_hermitian_defect: f64,
    pub max_evenness_defect: f64,
    pub min_eigenvalue: f64,
    pub pass: bool,
    /// first violated invariant, for error records
    pub first_failure: Option<String>,
}

impl ValidationReport {
    fn new(cells: Vec<CellValidation>, tol_structure: f64, tol_psd: f64) -> Self {
        let mut max_h = 0.0f64;
        let mut max_e = 0.0f64;
        let mut min_eig = f64::INFINITY;
        let mut first_failure = None;
        for c in &cells {
            max_h = max_h.max(c.hermitian_defect);
            max_e = max_e.max(c.evenness_defect);
            min_eig = min_eig.min(c.min_eigenvalue);
            if first_failure.is_none() {
                if c.hermitian_defect > tol_structure {
                    first_failure = Some(format!("cell {}: hermitian defect {}", c.cell, c.hermitian_defect));
                } else if c.evenness_defect > tol_structure {
                    first_failure = Some(format!("cell {}: evenness defect {}", c.cell, c.evenness_defect));
                } else if c.min_eigenvalue < tol_psd {
                    first_failure = Some(format!("cell {}: min eigenvalue {}", c.cell, c.min_eigenvalue));
                } else if c.diagonal_defect > tol_structure {
                    first_failure = Some(format!("cell {}: diagonal defect {}", c.cell, c.diagonal_defect));
                }
            }
        }
        if cells.is_empty() {
            min_eig = 0.0;
        }
        let pass = first_failure.is_none();
        ValidationReport {
            cells,
            tol_structure,
            tol_psd,
            max_hermitian_defect: max_h,
            max_evenness_defect: max_e,
            min_eigenvalue: min_eig,
            pass,
            first_failure,
        }
    }
}
