//! Symmetric boxes and regular cell systems.
//!
//! Everything downstream is discretized over a finite symmetric partition
//! of a box `[-h, h)^ν`: cells come in pairs `Δ_{-k} = -Δ_k` indexed by
//! signed integers, and each cell carries a representative point at its
//! midpoint. The even per-axis cell count forces the origin onto a cell
//! boundary, which is what makes the signed pairing possible.
//!
//! Corner and midpoint coordinates are computed as `h·(2m - c)/c` and
//! `h·(2m + 1 - c)/c` from the integer lattice index `m`, so negation
//! symmetry holds exactly in floating point: `u_{-k} + u_k = 0` without
//! rounding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("half extent must be positive on every axis, got {0}")]
    NonPositiveExtent(f64),
    #[error("cells per axis must be even and positive for a negation-closed partition, got {0}")]
    SymmetryViolation(usize),
    #[error("refinement factor must be at least 1")]
    ZeroRefinement,
    #[error("axis count {actual} does not match dimension {expected}")]
    AxisMismatch { expected: usize, actual: usize },
}

/// A centered box `[-h_1, h_1) × … × [-h_ν, h_ν)` with torus identification
/// of opposite faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusBox {
    half_extent: Vec<f64>,
}

impl TorusBox {
    pub fn new(half_extent: Vec<f64>) -> Result<Self, GridError> {
        if half_extent.is_empty() {
            return Err(GridError::ZeroDimension);
        }
        for &h in &half_extent {
            if !(h > 0.0) || !h.is_finite() {
                return Err(GridError::NonPositiveExtent(h));
            }
        }
        Ok(TorusBox { half_extent })
    }

    /// The unit torus `[-π, π)^ν`.
    pub fn unit_torus(dim: usize) -> Self {
        TorusBox::new(vec![std::f64::consts::PI; dim]).expect("π > 0")
    }

    pub fn dim(&self) -> usize {
        self.half_extent.len()
    }

    pub fn half_extent(&self) -> &[f64] {
        &self.half_extent
    }

    pub fn volume(&self) -> f64 {
        self.half_extent.iter().map(|h| 2.0 * h).product()
    }

    /// The same box scaled by a positive factor on every axis.
    pub fn scaled(&self, factor: f64) -> Self {
        TorusBox {
            half_extent: self.half_extent.iter().map(|h| h * factor).collect(),
        }
    }
}

/// One half-open axis-aligned cell `[lower, upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub signed_index: i64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Cell {
    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(x)
            .all(|((l, u), v)| *l <= *v && *v < *u)
    }
}

/// A symmetric partition of a box into congruent cells indexed by
/// `k ∈ {±1, …, ±N}` with `Δ_{-k} = -Δ_k` and midpoint representatives.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularSystem {
    torus: TorusBox,
    cells_per_axis: Vec<usize>,
    half_count: usize,
    /// slots 0..N hold k = 1..N, slots N..2N hold k = -1..-N
    cells: Vec<Cell>,
    representatives: Vec<Vec<f64>>,
}

impl RegularSystem {
    pub fn torus(&self) -> &TorusBox {
        &self.torus
    }

    pub fn dim(&self) -> usize {
        self.torus.dim()
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    /// Number of positive indices N; the system has 2N cells.
    pub fn half_count(&self) -> usize {
        self.half_count
    }

    pub fn cell_count(&self) -> usize {
        2 * self.half_count
    }

    /// Internal slot for a signed index: 0..N for k>0, N..2N for k<0.
    #[inline]
    pub fn slot(&self, k: i64) -> usize {
        debug_assert!(k != 0 && k.unsigned_abs() as usize <= self.half_count);
        if k > 0 {
            (k - 1) as usize
        } else {
            self.half_count + (-k - 1) as usize
        }
    }

    /// Signed index stored at a slot.
    #[inline]
    pub fn index_of_slot(&self, slot: usize) -> i64 {
        if slot < self.half_count {
            (slot + 1) as i64
        } else {
            -((slot - self.half_count + 1) as i64)
        }
    }

    pub fn cell(&self, k: i64) -> &Cell {
        &self.cells[self.slot(k)]
    }

    pub fn representative(&self, k: i64) -> &[f64] {
        &self.representatives[self.slot(k)]
    }

    /// All signed indices: 1..N then -1..-N.
    pub fn signed_indices(&self) -> impl Iterator<Item = i64> + '_ {
        let n = self.half_count as i64;
        (1..=n).chain((1..=n).map(|k| -k))
    }

    pub fn positive_indices(&self) -> impl Iterator<Item = i64> {
        1..=(self.half_count as i64)
    }

    /// Splits every cell into `factor^ν` congruent subcells.
    pub fn refine(&self, factor: usize) -> Result<RegularSystem, GridError> {
        if factor == 0 {
            return Err(GridError::ZeroRefinement);
        }
        let counts: Vec<usize> = self.cells_per_axis.iter().map(|c| c * factor).collect();
        build_symmetric_grid(self.dim(), self.torus.half_extent().to_vec(), counts)
    }

    /// Positive signed indices of the cells of `finer` contained in cell
    /// `k` of this system. `finer` must be a refinement of this grid.
    pub fn children_in(&self, k: i64, finer: &RegularSystem) -> Vec<i64> {
        let cell = self.cell(k);
        finer
            .signed_indices()
            .filter(|&j| cell.contains(finer.representative(j)))
            .collect()
    }
}

/// Builds the uniform symmetric partition of `[-h, h)^ν` with the given
/// even per-axis cell counts. Representatives are cell midpoints; the
/// positive indices enumerate the cells with positive first midpoint
/// coordinate in lexicographic lattice order, and `Δ_{-k}` is the exact
/// pointwise negation of `Δ_k`.
pub fn build_symmetric_grid(
    dim: usize,
    half_extent: Vec<f64>,
    cells_per_axis: Vec<usize>,
) -> Result<RegularSystem, GridError> {
    if dim == 0 {
        return Err(GridError::ZeroDimension);
    }
    if half_extent.len() != dim {
        return Err(GridError::AxisMismatch {
            expected: dim,
            actual: half_extent.len(),
        });
    }
    if cells_per_axis.len() != dim {
        return Err(GridError::AxisMismatch {
            expected: dim,
            actual: cells_per_axis.len(),
        });
    }
    let torus = TorusBox::new(half_extent)?;
    for &c in &cells_per_axis {
        if c == 0 || c % 2 != 0 {
            return Err(GridError::SymmetryViolation(c));
        }
    }

    // exact symmetric coordinates from integer lattice indices
    let corner = |axis: usize, m: usize| -> f64 {
        let c = cells_per_axis[axis] as f64;
        torus.half_extent()[axis] * ((2 * m) as f64 - c) / c
    };
    let midpoint = |axis: usize, m: usize| -> f64 {
        let c = cells_per_axis[axis] as f64;
        torus.half_extent()[axis] * ((2 * m + 1) as f64 - c) / c
    };

    let total: usize = cells_per_axis.iter().product();
    let mut positive_lattice: Vec<Vec<usize>> = Vec::with_capacity(total / 2);
    let mut index = vec![0usize; dim];
    loop {
        // positive first midpoint coordinate <=> m_1 >= c_1 / 2
        if index[0] >= cells_per_axis[0] / 2 {
            positive_lattice.push(index.clone());
        }
        // lexicographic advance
        let mut axis = dim;
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < cells_per_axis[axis] {
                break;
            }
            index[axis] = 0;
        }
        if index.iter().all(|&m| m == 0) {
            break;
        }
    }
    positive_lattice.sort();

    let half_count = positive_lattice.len();
    debug_assert_eq!(2 * half_count, total);
    let mut cells = Vec::with_capacity(total);
    let mut representatives = Vec::with_capacity(total);
    for (i, lattice) in positive_lattice.iter().enumerate() {
        let k = (i + 1) as i64;
        let lower: Vec<f64> = (0..dim).map(|a| corner(a, lattice[a])).collect();
        let upper: Vec<f64> = (0..dim).map(|a| corner(a, lattice[a] + 1)).collect();
        let rep: Vec<f64> = (0..dim).map(|a| midpoint(a, lattice[a])).collect();
        cells.push(Cell {
            signed_index: k,
            lower,
            upper,
        });
        representatives.push(rep);
    }
    // negative cells by exact negation of their positive partners
    for i in 0..half_count {
        let pos = &cells[i];
        let lower: Vec<f64> = pos.upper.iter().map(|&u| -u).collect();
        let upper: Vec<f64> = pos.lower.iter().map(|&l| -l).collect();
        let rep: Vec<f64> = representatives[i].iter().map(|&u| -u).collect();
        cells.push(Cell {
            signed_index: -((i + 1) as i64),
            lower,
            upper,
        });
        representatives.push(rep);
    }

    Ok(RegularSystem {
        torus,
        cells_per_axis,
        half_count,
        cells,
        representatives,
    })
}
