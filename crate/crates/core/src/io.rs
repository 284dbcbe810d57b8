//! JSON schemas for grids, measures, and kernels.
//!
//! Files carry one-based component indices and signed cell indices, the
//! same conventions used in reports. A measure file listing only
//! positive cells gets its negative masses by conjugation; listing any
//! negative cell switches to raw storage so structural violations can be
//! loaded and then reported by the validator.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cellfn::CellFunction;
use crate::chaos::{ChaosError, SimpleKernel};
use crate::cmatrix::CMatrix;
use crate::grid::{build_symmetric_grid, GridError, RegularSystem};
use crate::spectral::{MatrixSpectralMeasure, SpectralError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
    #[error("cell index 0 is not a valid signed index")]
    ZeroCellIndex,
    #[error("cell index {0} outside the grid (|k| ≤ {1})")]
    CellOutOfRange(i64, usize),
    #[error("matrix for cell {0} is not {1}×{1}")]
    BadMatrixShape(i64, usize),
    #[error("component index {0} out of range 1..={1}")]
    ComponentOutOfRange(usize, usize),
    #[error("duplicate cell index {0}")]
    DuplicateCell(i64),
}

/// Grid descriptor: dimension, per-axis half extents, per-axis cell
/// counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFile {
    pub dim: usize,
    pub half_extent: Vec<f64>,
    pub cells_per_axis: Vec<usize>,
}

impl GridFile {
    pub fn from_system(system: &RegularSystem) -> Self {
        GridFile {
            dim: system.dim(),
            half_extent: system.torus().half_extent().to_vec(),
            cells_per_axis: system.cells_per_axis().to_vec(),
        }
    }

    pub fn build(&self) -> Result<Arc<RegularSystem>, IoError> {
        Ok(Arc::new(build_symmetric_grid(
            self.dim,
            self.half_extent.clone(),
            self.cells_per_axis.clone(),
        )?))
    }
}

/// One cell mass: signed index and a d×d matrix of `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassEntry {
    pub cell: i64,
    pub matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFile {
    pub field_dim: usize,
    pub grid: GridFile,
    pub masses: Vec<MassEntry>,
}

impl MeasureFile {
    pub fn from_measure(measure: &MatrixSpectralMeasure) -> Self {
        let d = measure.field_dim();
        let masses = measure
            .system()
            .positive_indices()
            .map(|k| {
                let m = measure.mass(k);
                MassEntry {
                    cell: k,
                    matrix: (0..d)
                        .map(|r| {
                            (0..d)
                                .map(|c| {
                                    let z = m.get(r, c);
                                    [z.re, z.im]
                                })
                                .collect()
                        })
                        .collect(),
                }
            })
            .collect();
        MeasureFile {
            field_dim: d,
            grid: GridFile::from_system(measure.system()),
            masses,
        }
    }

    pub fn build(&self) -> Result<Arc<MatrixSpectralMeasure>, IoError> {
        let system = self.grid.build()?;
        let d = self.field_dim;
        let half = system.half_count();
        let parse = |entry: &MassEntry| -> Result<CMatrix, IoError> {
            if entry.matrix.len() != d || entry.matrix.iter().any(|row| row.len() != d) {
                return Err(IoError::BadMatrixShape(entry.cell, d));
            }
            let mut m = CMatrix::zeros(d);
            for (r, row) in entry.matrix.iter().enumerate() {
                for (c, &[re, im]) in row.iter().enumerate() {
                    m.set(r, c, Complex64::new(re, im));
                }
            }
            Ok(m)
        };
        for e in &self.masses {
            if e.cell == 0 {
                return Err(IoError::ZeroCellIndex);
            }
            if e.cell.unsigned_abs() as usize > half {
                return Err(IoError::CellOutOfRange(e.cell, half));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.masses {
            if !seen.insert(e.cell) {
                return Err(IoError::DuplicateCell(e.cell));
            }
        }
        let has_negative = self.masses.iter().any(|e| e.cell < 0);
        let measure = if has_negative {
            let mut all = vec![CMatrix::zeros(d); 2 * half];
            for e in &self.masses {
                all[system.slot(e.cell)] = parse(e)?;
            }
            MatrixSpectralMeasure::from_raw_masses(system, d, all)?
        } else {
            let mut positive = vec![CMatrix::zeros(d); half];
            for e in &self.masses {
                positive[(e.cell - 1) as usize] = parse(e)?;
            }
            MatrixSpectralMeasure::from_positive_masses(system, d, positive)?
        };
        Ok(Arc::new(measure))
    }
}

/// One kernel entry: a signed-index tuple and a complex value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelEntry {
    pub cells: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

/// Kernel file: order, one-based colour list, sparse entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelFile {
    pub order: usize,
    pub colours: Vec<usize>,
    pub grid: GridFile,
    pub entries: Vec<KernelEntry>,
}

impl KernelFile {
    pub fn from_kernel(kernel: &SimpleKernel) -> Self {
        KernelFile {
            order: kernel.order(),
            colours: kernel.colours().iter().map(|&j| j + 1).collect(),
            grid: GridFile::from_system(kernel.system()),
            entries: kernel
                .entries()
                .map(|(tuple, v)| KernelEntry {
                    cells: tuple.clone(),
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
    }

    /// Builds against the file's own grid, for a field of `field_dim`
    /// components.
    pub fn build(&self, field_dim: usize) -> Result<SimpleKernel, IoError> {
        let system = self.grid.build()?;
        let mut colours = Vec::with_capacity(self.colours.len());
        for &j in &self.colours {
            if j == 0 || j > field_dim {
                return Err(IoError::ComponentOutOfRange(j, field_dim));
            }
            colours.push(j - 1);
        }
        let entries = self
            .entries
            .iter()
            .map(|e| (e.cells.clone(), Complex64::new(e.re, e.im)));
        Ok(SimpleKernel::from_entries(
            system, &colours, field_dim, entries,
        )?)
    }
}

/// A cell function stored as an order-1 kernel table.
pub fn cellfn_from_kernel(kernel: &SimpleKernel) -> Result<CellFunction, IoError> {
    assert_eq!(kernel.order(), 1);
    let system = kernel.system().clone();
    let values: Vec<Complex64> = system
        .signed_indices()
        .map(|k| kernel.value(&[k]))
        .collect();
    Ok(CellFunction::from_values(system, values).map_err(|e| {
        IoError::Chaos(ChaosError::NotHermitian {
            defect: match e {
                crate::cellfn::CellFnError::NotRealKernel { defect, .. } => defect,
                _ => f64::NAN,
            },
            tolerance: 1e-12,
        })
    })?)
}
