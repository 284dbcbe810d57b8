//! Joint sampling of the vector-valued random spectral measure and
//! synthesis of the stationary field as its Fourier transform.
//!
//! For each positive cell the d complex coordinates are drawn jointly as
//! one circularly-symmetric complex Gaussian vector whose Hermitian
//! covariance is the cell mass matrix: the 2d real parts and imaginary
//! parts have covariance `½·[[Re G, -Im G], [Im G, Re G]]`. Negative
//! cells are conjugates by construction, cells are independent, and the
//! cross masses `G_{j,j'}` carry the joint law across components.
//!
//! Randomness comes from one counter-derived stream per (replica, cell)
//! pair, so replicas are reproducible and order-independent.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::cellfn::{CellFnError, CellFunction};
use crate::linalg::{mat_vec, psd_factor, SymMatrix};
use crate::spectral::{lag_phase, MatrixSpectralMeasure, TOL_REAL};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("cell {cell}: covariance not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPsd { cell: i64, min_eigenvalue: f64 },
    #[error("sample and kernel live on different systems")]
    SystemMismatch,
    #[error(transparent)]
    Kernel(#[from] CellFnError),
    #[error("imaginary residue {residue} exceeds {tolerance}; representatives are asymmetric")]
    ResidueExceeded { residue: f64, tolerance: f64 },
}

/// SplitMix64 step, used to derive independent stream keys.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic RNG for one (seed, replica, cell) triple.
pub fn cell_stream(seed: u64, replica: u64, cell_slot: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    let a = splitmix64(&mut state);
    let mut state2 = a ^ replica.wrapping_mul(0xA076_1D64_78BD_642F);
    let b = splitmix64(&mut state2);
    let mut state3 = b ^ cell_slot.wrapping_mul(0xE703_7ED1_A0B4_28DB);
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state3).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Draws samples of the random spectral measure attached to one
/// matrix-valued spectral measure. Covariance factors are prepared once.
pub struct Sampler {
    measure: Arc<MatrixSpectralMeasure>,
    factors: Vec<SymMatrix>,
}

impl Sampler {
    pub fn new(measure: Arc<MatrixSpectralMeasure>) -> Result<Self, SamplerError> {
        let d = measure.field_dim();
        let mut factors = Vec::with_capacity(measure.system().half_count());
        for k in measure.system().positive_indices() {
            let cov = measure.mass(k).real_embedding();
            let mut half = SymMatrix::zeros(2 * d);
            for r in 0..2 * d {
                for c in 0..2 * d {
                    half.set(r, c, 0.5 * cov.get(r, c));
                }
            }
            let factor = psd_factor(&half, 1e-10)
                .map_err(|min| SamplerError::NotPsd {
                    cell: k,
                    min_eigenvalue: min,
                })?;
            factors.push(factor);
        }
        Ok(Sampler { measure, factors })
    }

    pub fn measure(&self) -> &Arc<MatrixSpectralMeasure> {
        &self.measure
    }

    /// One realization `{Z_j(Δ_k)}`. Every (replica, cell) pair consumes
    /// its own stream, so replicas can be drawn in any order.
    pub fn draw(&self, seed: u64, replica: u64) -> SpectralSample {
        let d = self.measure.field_dim();
        let half = self.measure.system().half_count();
        let mut values = vec![Complex64::new(0.0, 0.0); half * d];
        for slot in 0..half {
            let mut rng = cell_stream(seed, replica, slot as u64);
            let gauss: Vec<f64> = (0..2 * d)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let xy = mat_vec(&self.factors[slot], &gauss);
            for j in 0..d {
                values[slot * d + j] = Complex64::new(xy[j], xy[d + j]);
            }
        }
        SpectralSample {
            measure: self.measure.clone(),
            values,
            shift: vec![0; self.measure.system().dim()],
        }
    }
}

/// One realization of the vector-valued random spectral measure.
///
/// Values are stored for positive cells only; `Z_j(Δ_{-k})` is the exact
/// conjugate by construction. A lattice shift is carried symbolically so
/// that composing shifts is exact integer arithmetic.
#[derive(Debug, Clone)]
pub struct SpectralSample {
    measure: Arc<MatrixSpectralMeasure>,
    /// positive slot-major: `values[slot * d + j]`
    values: Vec<Complex64>,
    shift: Vec<i64>,
}

impl SpectralSample {
    /// Builds a sample directly from stored positive-cell values. Used by
    /// couplings that transform an existing realization.
    pub fn from_positive_values(
        measure: Arc<MatrixSpectralMeasure>,
        values: Vec<Complex64>,
    ) -> Self {
        assert_eq!(
            values.len(),
            measure.system().half_count() * measure.field_dim()
        );
        let dim = measure.system().dim();
        SpectralSample {
            measure,
            values,
            shift: vec![0; dim],
        }
    }

    pub fn measure(&self) -> &Arc<MatrixSpectralMeasure> {
        &self.measure
    }

    pub fn system(&self) -> &Arc<crate::grid::RegularSystem> {
        self.measure.system()
    }

    pub fn shift(&self) -> &[i64] {
        &self.shift
    }

    /// Raw stored value for a positive cell, without the shift phase.
    #[inline]
    pub(crate) fn raw_positive(&self, j: usize, k: i64) -> Complex64 {
        debug_assert!(k > 0);
        self.values[(k - 1) as usize * self.measure.field_dim() + j]
    }

    /// Raw positive-cell values, slot-major (`[slot * d + j]`), without
    /// the shift phase.
    pub fn positive_values(&self) -> &[Complex64] {
        &self.values
    }

    /// `Z_j(Δ_k)` including the lattice shift phase. Negative cells are
    /// exact conjugates of their positive partners.
    pub fn value(&self, j: usize, k: i64) -> Complex64 {
        let pos = k.abs();
        let mut z = self.raw_positive(j, pos);
        if self.shift.iter().any(|&u| u != 0) {
            z *= lag_phase(&self.shift, self.system().representative(pos));
        }
        if k < 0 {
            z = z.conj();
        }
        z
    }

    /// The lattice-translated realization: `Z'_j(Δ_k) = e^{i⟨u, u_k⟩} Z_j(Δ_k)`.
    /// Shifts compose by exact integer addition.
    pub fn shifted(&self, u: &[i64]) -> SpectralSample {
        assert_eq!(u.len(), self.shift.len());
        let shift = self
            .shift
            .iter()
            .zip(u)
            .map(|(a, b)| a + b)
            .collect();
        SpectralSample {
            measure: self.measure.clone(),
            values: self.values.clone(),
            shift,
        }
    }

    /// `X_j(p) = Σ_k e^{i⟨p, u_k⟩} Z_j(Δ_k)`, computed by pairing each
    /// cell with its negation so the imaginary part cancels exactly.
    ///
    /// Cross-covariances carry the lag on the first argument:
    /// `E X_j(p) X_j'(q) = correlation(p - q)[j][j']`.
    pub fn field_value(&self, j: usize, lag: &[i64]) -> f64 {
        let total: Vec<i64> = lag.iter().zip(&self.shift).map(|(a, b)| a + b).collect();
        let mut acc = 0.0;
        for k in self.system().positive_indices() {
            let phase = lag_phase(&total, self.system().representative(k));
            acc += 2.0 * (phase * self.raw_positive(j, k)).re;
        }
        acc
    }

    /// `Σ_k φ(k) Z_j(Δ_k)` for a conjugation-symmetric cell function; the
    /// ± pairing keeps the value exactly real.
    pub fn integrate_one_fold(&self, phi: &CellFunction, j: usize) -> Result<f64, SamplerError> {
        if !Arc::ptr_eq(phi.system(), self.system()) && phi.system().as_ref() != self.system().as_ref() {
            return Err(SamplerError::SystemMismatch);
        }
        let defect = phi.conjugation_defect();
        if defect > crate::cellfn::TOL_SYMMETRY {
            return Err(CellFnError::NotRealKernel {
                defect,
                tolerance: crate::cellfn::TOL_SYMMETRY,
            }
            .into());
        }
        let mut acc = 0.0;
        for k in self.system().positive_indices() {
            acc += 2.0 * (phi.value(k) * self.value(j, k)).re;
        }
        Ok(acc)
    }
}

/// Field values over a list of integer lags.
#[derive(Debug, Clone)]
pub struct FieldRealization {
    pub lags: Vec<Vec<i64>>,
    pub field_dim: usize,
    /// `values[lag_index * d + j]`
    pub values: Vec<f64>,
}

impl FieldRealization {
    pub fn get(&self, lag_index: usize, j: usize) -> f64 {
        self.values[lag_index * self.field_dim + j]
    }
}

/// Synthesizes the field at the given lags from one sample.
pub fn synthesize_field(sample: &SpectralSample, lags: &[Vec<i64>]) -> FieldRealization {
    let d = sample.measure().field_dim();
    let mut values = Vec::with_capacity(lags.len() * d);
    for lag in lags {
        for j in 0..d {
            values.push(sample.field_value(j, lag));
        }
    }
    FieldRealization {
        lags: lags.to_vec(),
        field_dim: d,
        values,
    }
}

/// Residue guard shared by paths that compute a complex sum which must be
/// real: errs when `|Im|` exceeds the tolerance against the given scale.
pub fn require_real(z: Complex64, scale: f64) -> Result<f64, SamplerError> {
    let tolerance = TOL_REAL * scale.max(1.0);
    if z.im.abs() > tolerance {
        return Err(SamplerError::ResidueExceeded {
            residue: z.im.abs(),
            tolerance,
        });
    }
    Ok(z.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmatrix::CMatrix;
    use crate::grid::build_symmetric_grid;
    use crate::montecarlo::mc_mean;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn scalar_two_cell(mass: f64) -> Arc<MatrixSpectralMeasure> {
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![2]).unwrap());
        Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys,
                1,
                vec![CMatrix::from_real_rows(1, &[mass])],
            )
            .unwrap(),
        )
    }

    #[test]
    fn single_cell_pair_moments() {
        let g = scalar_two_cell(0.8);
        let sampler = Sampler::new(g).unwrap();
        let n = 100_000;
        let re_var = mc_mean(n, |r| {
            let z = sampler.draw(11, r).value(0, 1);
            z.re * z.re
        });
        let im_var = mc_mean(n, |r| {
            let z = sampler.draw(11, r).value(0, 1);
            z.im * z.im
        });
        let abs2 = mc_mean(n, |r| sampler.draw(11, r).value(0, 1).norm_sqr());
        assert!((re_var.mean - 0.4).abs() < 3.0 * re_var.std_error);
        assert!((im_var.mean - 0.4).abs() < 3.0 * im_var.std_error);
        assert!((abs2.mean - 0.8).abs() < 3.0 * abs2.std_error);
    }

    #[test]
    fn conjugation_symmetry_is_exact() {
        let g = scalar_two_cell(1.0);
        let sampler = Sampler::new(g).unwrap();
        let s = sampler.draw(5, 0);
        let z = s.value(0, 1);
        let w = s.value(0, -1);
        assert_eq!(z.re, w.re);
        assert_eq!(z.im, -w.im);
        assert_eq!((z + w).im, 0.0);
    }

    #[test]
    fn cross_component_covariance_matches_mass() {
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![2]).unwrap());
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys,
                2,
                vec![CMatrix::from_real_rows(2, &[0.5, 0.25, 0.25, 0.5])],
            )
            .unwrap(),
        );
        let sampler = Sampler::new(g).unwrap();
        let est = mc_mean(100_000, |r| {
            let s = sampler.draw(7, r);
            (s.value(0, 1) * s.value(1, 1).conj()).re
        });
        assert!((est.mean - 0.25).abs() < 3.0 * est.std_error);
        // E Z_0 Z_1 (no conjugate) vanishes: l = k, not -k
        let raw = mc_mean(100_000, |r| {
            let s = sampler.draw(7, r);
            (s.value(0, 1) * s.value(1, 1)).re
        });
        assert!(raw.mean.abs() < 3.0 * raw.std_error);
    }

    #[test]
    fn field_variance_and_lag_two_correlation() {
        // two cells of mass 1/2: Var X(0) = 1, E X(0)X(2) = r(2) = -1
        let g = scalar_two_cell(0.5);
        let sampler = Sampler::new(g.clone()).unwrap();
        let var = mc_mean(60_000, |r| {
            let x = sampler.draw(3, r).field_value(0, &[0]);
            x * x
        });
        assert!((var.mean - 1.0).abs() < 3.0 * var.std_error);
        let cross = mc_mean(60_000, |r| {
            let s = sampler.draw(3, r);
            s.field_value(0, &[0]) * s.field_value(0, &[2])
        });
        let r2 = g.correlation(&[2]).unwrap().get(0, 0);
        assert_relative_eq!(r2, -1.0, epsilon = 1e-12);
        assert!((cross.mean - r2).abs() < 3.0 * cross.std_error);
    }

    #[test]
    fn cross_lag_field_covariance_orientation() {
        // complex cross mass makes r_{1,2}(p) ≠ r_{2,1}(p); the lag on
        // the first argument matches correlation(p)[j][j']
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![4]).unwrap());
        let mut m1 = CMatrix::zeros(2);
        m1.set(0, 0, Complex64::new(0.30, 0.0));
        m1.set(0, 1, Complex64::new(0.10, 0.08));
        m1.set(1, 0, Complex64::new(0.10, -0.08));
        m1.set(1, 1, Complex64::new(0.25, 0.0));
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys,
                2,
                vec![m1, CMatrix::identity(2).scale(0.2)],
            )
            .unwrap(),
        );
        let r1 = g.correlation(&[1]).unwrap();
        assert!((r1.get(0, 1) - r1.get(1, 0)).abs() > 0.05, "need asymmetry");
        let sampler = Sampler::new(g).unwrap();
        let est = mc_mean(60_000, |r| {
            let s = sampler.draw(47, r);
            s.field_value(0, &[1]) * s.field_value(1, &[0])
        });
        assert!(
            est.within(r1.get(0, 1), 3.0),
            "E X_1(1) X_2(0) = {} vs r_{{1,2}}(1) = {} ({}σ)",
            est.mean,
            r1.get(0, 1),
            est.sigmas_from(r1.get(0, 1))
        );
        let swapped = mc_mean(60_000, |r| {
            let s = sampler.draw(47, r);
            s.field_value(1, &[1]) * s.field_value(0, &[0])
        });
        assert!(swapped.within(r1.get(1, 0), 3.0));
    }

    #[test]
    fn one_fold_integral_against_characters_is_the_field() {
        let g = scalar_two_cell(0.5);
        let sampler = Sampler::new(g).unwrap();
        let s = sampler.draw(9, 1);
        let one = CellFunction::one(s.system().clone());
        assert_eq!(
            s.integrate_one_fold(&one, 0).unwrap(),
            s.field_value(0, &[0])
        );
        let ch = CellFunction::exp_lag(s.system().clone(), &[3]);
        assert_eq!(
            s.integrate_one_fold(&ch, 0).unwrap(),
            s.field_value(0, &[3])
        );
    }

    #[test]
    fn one_fold_cross_moment_matches_deterministic_sum() {
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![4]).unwrap());
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys.clone(),
                2,
                vec![
                    CMatrix::from_real_rows(2, &[0.4, 0.2, 0.2, 0.3]),
                    CMatrix::from_real_rows(2, &[0.3, -0.1, -0.1, 0.5]),
                ],
            )
            .unwrap(),
        );
        let sampler = Sampler::new(g.clone()).unwrap();
        let phi = CellFunction::exp_lag(sys.clone(), &[1]);
        let psi = CellFunction::exp_lag(sys.clone(), &[2]);
        // E[∫φ dZ_0 ∫ψ dZ_1] = Σ_k φ(k) conj(ψ(k)) G_{0,1}(Δ_k)
        let expected: Complex64 = sys
            .signed_indices()
            .map(|k| phi.value(k) * psi.value(k).conj() * g.entry(k, 0, 1))
            .sum();
        let est = mc_mean(100_000, |r| {
            let s = sampler.draw(21, r);
            s.integrate_one_fold(&phi, 0).unwrap() * s.integrate_one_fold(&psi, 1).unwrap()
        });
        assert!(expected.im.abs() < 1e-12);
        assert!((est.mean - expected.re).abs() < 3.0 * est.std_error);
    }

    #[test]
    fn disjoint_symmetric_blocks_are_independent() {
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![4]).unwrap());
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys,
                1,
                vec![
                    CMatrix::from_real_rows(1, &[0.5]),
                    CMatrix::from_real_rows(1, &[0.5]),
                ],
            )
            .unwrap(),
        );
        let sampler = Sampler::new(g).unwrap();
        for f in [
            |z: Complex64, w: Complex64| z.re * w.re,
            |z: Complex64, w: Complex64| z.re * w.im,
            |z: Complex64, w: Complex64| z.im * w.im,
        ] {
            let est = mc_mean(50_000, |r| {
                let s = sampler.draw(13, r);
                f(s.value(0, 1), s.value(0, 2))
            });
            assert!(est.mean.abs() < 3.0 * est.std_error + 1e-12);
        }
    }

    #[test]
    fn additivity_under_refinement_in_distribution() {
        // summing the children of a refined sample reproduces the coarse
        // second moments
        let g = scalar_two_cell(0.6);
        let fine_sys = Arc::new(g.system().refine(2).unwrap());
        let children = g.system().children_in(1, &fine_sys);
        assert_eq!(children.len(), 2);
        let fine_g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                fine_sys,
                1,
                vec![CMatrix::from_real_rows(1, &[0.3]); 2],
            )
            .unwrap(),
        );
        let sampler = Sampler::new(fine_g).unwrap();
        let est = mc_mean(80_000, |r| {
            let s = sampler.draw(17, r);
            let z: Complex64 = children.iter().map(|&c| s.value(0, c)).sum();
            z.norm_sqr()
        });
        assert!((est.mean - 0.6).abs() < 3.0 * est.std_error);
    }

    #[test]
    fn fourth_moment_is_gaussian() {
        let g = scalar_two_cell(0.5);
        let sampler = Sampler::new(g).unwrap();
        let second = mc_mean(100_000, |r| {
            let x = sampler.draw(29, r).field_value(0, &[0]);
            x * x
        });
        let fourth = mc_mean(100_000, |r| {
            let x = sampler.draw(29, r).field_value(0, &[0]);
            x.powi(4)
        });
        let expected = 3.0 * second.mean * second.mean;
        assert!((fourth.mean - expected).abs() < 4.0 * fourth.std_error);
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![2]).unwrap());
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys,
                2,
                vec![CMatrix::from_real_rows(2, &[1.0, 2.0, 2.0, 1.0])],
            )
            .unwrap(),
        );
        let err = match Sampler::new(g) {
            Err(e) => e,
            Ok(_) => panic!("indefinite mass must not factor"),
        };
        assert!(matches!(err, SamplerError::NotPsd { cell: 1, .. }));
    }

    #[test]
    fn near_boundary_psd_still_samples() {
        // rank-one mass: Cholesky needs the semidefinite fallback
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![2]).unwrap());
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys,
                2,
                vec![CMatrix::from_real_rows(2, &[1.0, 1.0, 1.0, 1.0])],
            )
            .unwrap(),
        );
        let sampler = Sampler::new(g).unwrap();
        let s = sampler.draw(1, 0);
        // perfectly correlated components
        let z0 = s.value(0, 1);
        let z1 = s.value(1, 1);
        assert_relative_eq!(z0.re, z1.re, epsilon = 1e-12);
        assert_relative_eq!(z0.im, z1.im, epsilon = 1e-12);
    }
}
