//! The scaling-limit harness for normalized sums of Wick functionals.
//!
//! A homogeneous Wick polynomial of the field, summed over the lattice
//! block `{0 ≤ p_k < N}^ν` and normalized by `A_N`, has two equivalent
//! representations at grid level:
//!
//! * the **direct** path substitutes the field values into the Wick
//!   polynomial and sums;
//! * the **spectral** path rewrites the sum as a chaos integral against
//!   the rescaled measure `G^{(N)}(A) = N^{2ν/n} A_N^{-2/n} G(A/N)` on
//!   the box scaled by `N`, with the Dirichlet-type kernel
//!   `a · Π_l (e^{i·s_l} - 1) / (N (e^{i·s_l/N} - 1))`, `s_l` the l-th
//!   coordinate sum of the kernel arguments.
//!
//! As `N` grows the kernels converge to `a · Π_l (e^{i·s_l} - 1)/(i·s_l)`
//! and the rescaled measures converge vaguely to a limit measure on all
//! of ℝ^ν; under a uniform-on-compacts kernel check (condition A) and a
//! uniform tail bound (condition B) the normalized sums converge in
//! distribution to the chaos integral of the limit kernel against the
//! limit measure. The harness makes every piece of that statement an
//! executable check at desk scale.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaos::{ChaosError, SimpleKernel};
use crate::cmatrix::CMatrix;
use crate::grid::{build_symmetric_grid, GridError, RegularSystem};
use crate::linalg::SymMatrix;
use crate::montecarlo::mc_samples;
use crate::poly::{GaussianSpace, Polynomial};
use crate::sampler::{Sampler, SamplerError, SpectralSample};
use crate::spectral::{MatrixSpectralMeasure, SpectralError};
use crate::wick::{wick_expand, WickError};

#[derive(Debug, Error)]
pub enum LimitsError {
    #[error("coefficient exponents must sum to the common order {expected}, got {actual}")]
    NotHomogeneous { expected: usize, actual: usize },
    #[error("exponent vector length {actual} does not match field dimension {expected}")]
    ExponentLength { expected: usize, actual: usize },
    #[error("empty coefficient list")]
    EmptySpec,
    #[error("schedule must be nonempty and increasing")]
    BadSchedule,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Wick(#[from] WickError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `A_N = constant · N^exponent`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Norming {
    pub exponent: f64,
    pub constant: f64,
}

impl Norming {
    pub fn a(&self, scale: u64) -> f64 {
        self.constant * (scale as f64).powf(self.exponent)
    }
}

/// A homogeneous Wick polynomial
/// `: Σ a_{k₁…k_d} X₁(0)^{k₁} ⋯ X_d(0)^{k_d} :` given by its coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WickSpec {
    pub field_dim: usize,
    pub order: usize,
    /// (exponent vector of length `field_dim`, coefficient)
    pub coefficients: Vec<(Vec<u32>, f64)>,
}

impl WickSpec {
    pub fn new(
        field_dim: usize,
        coefficients: Vec<(Vec<u32>, f64)>,
    ) -> Result<Self, LimitsError> {
        let Some(first) = coefficients.first() else {
            return Err(LimitsError::EmptySpec);
        };
        if first.0.len() != field_dim {
            return Err(LimitsError::ExponentLength {
                expected: field_dim,
                actual: first.0.len(),
            });
        }
        let order: usize = first.0.iter().map(|&e| e as usize).sum();
        for (expo, _) in &coefficients {
            if expo.len() != field_dim {
                return Err(LimitsError::ExponentLength {
                    expected: field_dim,
                    actual: expo.len(),
                });
            }
            let total: usize = expo.iter().map(|&e| e as usize).sum();
            if total != order {
                return Err(LimitsError::NotHomogeneous {
                    expected: order,
                    actual: total,
                });
            }
        }
        Ok(WickSpec {
            field_dim,
            order,
            coefficients,
        })
    }

    /// The colour multiset of one coefficient: `k_j` copies of colour `j`.
    pub fn colour_list(expo: &[u32]) -> Vec<usize> {
        let mut colours = Vec::new();
        for (j, &e) in expo.iter().enumerate() {
            for _ in 0..e {
                colours.push(j);
            }
        }
        colours
    }

    /// The Wick polynomial as a function of the d field coordinates at
    /// one site; stationarity makes it site-independent.
    pub fn wick_field_polynomial(
        &self,
        measure: &MatrixSpectralMeasure,
    ) -> Result<Polynomial, LimitsError> {
        let d = self.field_dim;
        let r0 = measure.correlation(&vec![0; measure.system().dim()])?;
        let mut cov = SymMatrix::zeros(d);
        for a in 0..d {
            for b in 0..d {
                cov.set(a, b, r0.get(a, b));
            }
        }
        let space = GaussianSpace::new(cov);
        let mut out = Polynomial::zero();
        for (expo, coeff) in &self.coefficients {
            let mut factors = Vec::new();
            for (j, &e) in expo.iter().enumerate() {
                for _ in 0..e {
                    factors.push(Polynomial::variable(j));
                }
            }
            out = out.add(&wick_expand(&space, &factors)?.scale(*coeff));
        }
        Ok(out)
    }
}

/// Finite scaling factor
/// `(e^{is} - 1) / (N (e^{is/N} - 1)) = (1/N) Σ_{p=0}^{N-1} e^{i·p·s/N}`,
/// evaluated through the geometric sum, which is finite and stable at
/// every removable singularity.
pub fn dirichlet_factor_finite(scale: u64, s: f64) -> Complex64 {
    let n = scale as f64;
    let step = s / n;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..scale {
        let theta = p as f64 * step;
        acc += Complex64::new(theta.cos(), theta.sin());
    }
    acc / n
}

/// Limit factor `(e^{is} - 1)/(i s)` with a series branch near zero.
pub fn dirichlet_factor_limit(s: f64) -> Complex64 {
    if s.abs() < 1e-4 {
        // (e^z - 1)/z = Σ z^k/(k+1)!
        let z = Complex64::new(0.0, s);
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(1.0, 0.0);
        for k in 1..=4 {
            term = term * z / (k as f64 + 1.0);
            acc += term;
        }
        acc
    } else {
        let num = Complex64::new(s.cos() - 1.0, s.sin());
        num / Complex64::new(0.0, s)
    }
}

/// Kernel value `a · Π_l factor(s_l)` at the per-axis coordinate sums of
/// an n-tuple of points; `scale = None` selects the limit kernel.
pub fn rescaled_kernel_value(
    scale: Option<u64>,
    coefficient: f64,
    points: &[&[f64]],
) -> Complex64 {
    let dim = points[0].len();
    let mut acc = Complex64::new(coefficient, 0.0);
    for l in 0..dim {
        let s: f64 = points.iter().map(|p| p[l]).sum();
        acc *= match scale {
            Some(n) => dirichlet_factor_finite(n, s),
            None => dirichlet_factor_limit(s),
        };
    }
    acc
}

/// One chaos kernel per coefficient of the spec, on the given system.
pub fn chaos_kernels(
    system: &Arc<RegularSystem>,
    wick: &WickSpec,
    scale: Option<u64>,
) -> Result<Vec<SimpleKernel>, LimitsError> {
    wick.coefficients
        .iter()
        .map(|(expo, coeff)| {
            let colours = WickSpec::colour_list(expo);
            let coeff = *coeff;
            SimpleKernel::from_fn(system.clone(), &colours, wick.field_dim, move |pts| {
                rescaled_kernel_value(scale, coeff, pts)
            })
            .map_err(LimitsError::from)
        })
        .collect()
}

/// The full experiment: base measure, Wick spec, scale schedule, norming
/// rule, the limit measure on its truncation window, and check settings.
pub struct LimitExperiment {
    pub base: Arc<MatrixSpectralMeasure>,
    pub wick: WickSpec,
    pub schedule: Vec<u64>,
    pub norming: Norming,
    /// limit measure on the truncated window grid
    pub limit_measure: Arc<MatrixSpectralMeasure>,
    pub replicas: usize,
    pub z0_replicas: usize,
    pub seed: u64,
    /// half-width of the compact cube for the kernel-convergence check
    pub cond_a_half_width: f64,
    /// lattice points per axis for the sup over that cube
    pub cond_a_lattice: usize,
    /// sup-difference threshold at the largest scale
    pub cond_a_threshold: f64,
    /// candidate truncation radii for the tail check
    pub cond_b_radii: Vec<f64>,
    /// tail budgets to solve for
    pub cond_b_epsilons: Vec<f64>,
    pub cf_points: Vec<f64>,
    pub final_tolerance: f64,
}

impl LimitExperiment {
    pub fn validate(&self) -> Result<(), LimitsError> {
        if self.schedule.is_empty() || self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LimitsError::BadSchedule);
        }
        Ok(())
    }

    pub fn rescaled_measure(&self, scale: u64) -> Result<Arc<MatrixSpectralMeasure>, LimitsError> {
        Ok(Arc::new(self.base.rescale(
            scale,
            self.norming.a(scale),
            self.wick.order,
        )?))
    }
}

/// The spectral representation of one normalized sum: rescaled measure,
/// per-coefficient kernels, and their evaluators.
pub struct SpectralSum {
    pub measure: Arc<MatrixSpectralMeasure>,
    pub kernels: Vec<SimpleKernel>,
    sampler: Sampler,
    evaluators: Vec<crate::chaos::KernelEvaluator>,
}

impl SpectralSum {
    /// Representation at a finite scale from the experiment's base.
    pub fn at_scale(exp: &LimitExperiment, scale: u64) -> Result<Self, LimitsError> {
        let measure = exp.rescaled_measure(scale)?;
        let kernels = chaos_kernels(measure.system(), &exp.wick, Some(scale))?;
        Self::assemble(measure, kernels)
    }

    /// The limit object on the truncation window.
    pub fn limit(exp: &LimitExperiment) -> Result<Self, LimitsError> {
        let measure = exp.limit_measure.clone();
        let kernels = chaos_kernels(measure.system(), &exp.wick, None)?;
        Self::assemble(measure, kernels)
    }

    fn assemble(
        measure: Arc<MatrixSpectralMeasure>,
        kernels: Vec<SimpleKernel>,
    ) -> Result<Self, LimitsError> {
        let sampler = Sampler::new(measure.clone())?;
        let evaluators = kernels.iter().map(|k| k.evaluator()).collect();
        Ok(SpectralSum {
            measure,
            kernels,
            sampler,
            evaluators,
        })
    }

    /// Value of the sum of chaos integrals on one realization.
    pub fn value(&self, sample: &SpectralSample) -> Result<f64, LimitsError> {
        let mut acc = 0.0;
        for e in &self.evaluators {
            acc += e.evaluate(sample)?;
        }
        Ok(acc)
    }

    pub fn draw_value(&self, seed: u64, replica: u64) -> Result<f64, LimitsError> {
        let s = self.sampler.draw(seed, replica);
        self.value(&s)
    }

    /// Monte Carlo replicas, replica-order deterministic.
    pub fn samples(&self, seed: u64, replicas: usize) -> Vec<f64> {
        mc_samples(replicas, |r| {
            self.draw_value(seed, r).expect("valid kernels evaluate")
        })
    }

    /// Deterministic variance of the sum via the covariance calculus.
    pub fn analytic_variance(&self) -> Result<f64, LimitsError> {
        let mut acc = 0.0;
        for a in &self.kernels {
            for b in &self.kernels {
                acc += a.analytic_covariance(b, &self.measure)?;
            }
        }
        Ok(acc)
    }
}

/// Direct-path value `A_N^{-1} Σ_{p ∈ B_N} Y(p)` by substituting the
/// synthesized field into the Wick polynomial of the spec.
pub fn direct_sn_value(
    exp: &LimitExperiment,
    scale: u64,
    sample: &SpectralSample,
) -> Result<f64, LimitsError> {
    let poly = exp.wick.wick_field_polynomial(&exp.base)?;
    direct_sn_value_with(exp, scale, &poly, sample)
}

/// Same as [`direct_sn_value`] with the Wick polynomial precomputed.
pub fn direct_sn_value_with(
    exp: &LimitExperiment,
    scale: u64,
    wick_poly: &Polynomial,
    sample: &SpectralSample,
) -> Result<f64, LimitsError> {
    let d = exp.wick.field_dim;
    let dim = exp.base.system().dim();
    let mut acc = 0.0;
    let mut lattice = vec![0i64; dim];
    loop {
        let x: Vec<f64> = (0..d).map(|j| sample.field_value(j, &lattice)).collect();
        acc += wick_poly.evaluate(&x);
        let mut axis = dim;
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            lattice[axis] += 1;
            if (lattice[axis] as u64) < scale {
                break;
            }
            lattice[axis] = 0;
        }
        if lattice.iter().all(|&v| v == 0) {
            break;
        }
    }
    Ok(acc / exp.norming.a(scale))
}

/// The grid chaos representation of the same sum on the base grid:
/// `A_N^{-1} Σ_p` of the lattice-shifted constant tensor kernels.
pub fn direct_sn_chaos_value(
    exp: &LimitExperiment,
    scale: u64,
    sample: &SpectralSample,
) -> Result<f64, LimitsError> {
    let system = exp.base.system();
    let dim = system.dim();
    let one = crate::cellfn::CellFunction::one(system.clone());
    let mut acc = 0.0;
    for (expo, coeff) in &exp.wick.coefficients {
        let colours = WickSpec::colour_list(expo);
        let factors = vec![one.clone(); colours.len()];
        let kernel = SimpleKernel::tensor(&factors, &colours, exp.wick.field_dim)?;
        let mut lattice = vec![0i64; dim];
        loop {
            acc += coeff * kernel.evaluate(&sample.shifted(&lattice))?;
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break;
                }
                axis -= 1;
                lattice[axis] += 1;
                if (lattice[axis] as u64) < scale {
                    break;
                }
                lattice[axis] = 0;
            }
            if lattice.iter().all(|&v| v == 0) {
                break;
            }
        }
    }
    Ok(acc / exp.norming.a(scale))
}

/// The scale-`N` change of variables applied to an existing base
/// realization: cell-for-cell values multiplied by
/// `N^{ν/n} A_N^{-1/n}`, living on the rescaled measure.
pub fn coupled_rescaled_sample(
    base_sample: &SpectralSample,
    rescaled: &Arc<MatrixSpectralMeasure>,
    scale: u64,
    norming_value: f64,
    chaos_order: usize,
) -> SpectralSample {
    let nu = base_sample.system().dim() as f64;
    let n = chaos_order as f64;
    let factor = (scale as f64).powf(nu / n) * norming_value.powf(-1.0 / n);
    let values = base_sample
        .positive_values()
        .iter()
        .map(|z| z * factor)
        .collect();
    SpectralSample::from_positive_values(rescaled.clone(), values)
}

/// Analytic variance of the order-1 direct sum:
/// `A_N^{-2} Σ_{p,q ∈ B_N} r(p - q)` from the correlation transform.
pub fn direct_variance_order1(
    exp: &LimitExperiment,
    scale: u64,
    colour: usize,
) -> Result<f64, LimitsError> {
    let dim = exp.base.system().dim();
    let n = scale as i64;
    let mut acc = 0.0;
    let mut diff = vec![0i64; dim];
    // iterate over difference vectors with multiplicity Π (N - |δ_l|)
    fn recurse(
        axis: usize,
        n: i64,
        diff: &mut Vec<i64>,
        acc: &mut f64,
        exp: &LimitExperiment,
        colour: usize,
    ) -> Result<(), LimitsError> {
        if axis == diff.len() {
            let mult: f64 = diff.iter().map(|&d| (n - d.abs()) as f64).product();
            let r = exp.base.correlation(diff)?.get(colour, colour);
            *acc += mult * r;
            return Ok(());
        }
        for d in -(n - 1)..=(n - 1) {
            diff[axis] = d;
            recurse(axis + 1, n, diff, acc, exp, colour)?;
        }
        Ok(())
    }
    recurse(0, n, &mut diff, &mut acc, exp, colour)?;
    let a = exp.norming.a(scale);
    Ok(acc / (a * a))
}

// ---------------------------------------------------------------------
// condition checks and the convergence report
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionAReport {
    pub cube_half_width: f64,
    pub threshold: f64,
    /// (scale, sup |h^N - h^0| over the cube lattice)
    pub sup_differences: Vec<(u64, f64)>,
    pub pass: bool,
}

/// Sup-norm kernel convergence on a compact cube. The kernels depend on
/// the arguments only through the per-axis coordinate sums, so the sup is
/// taken over a dense lattice of sums in `[-nT, nT]^ν`.
pub fn check_condition_a(exp: &LimitExperiment) -> ConditionAReport {
    let dim = exp.base.system().dim();
    let n = exp.wick.order as f64;
    let t = exp.cond_a_half_width;
    let points = exp.cond_a_lattice.max(2);
    let max_coeff = exp
        .wick
        .coefficients
        .iter()
        .map(|(_, c)| c.abs())
        .fold(0.0f64, f64::max);
    let mut sup_differences = Vec::new();
    for &scale in &exp.schedule {
        let mut sup = 0.0f64;
        let mut lattice = vec![0usize; dim];
        loop {
            let mut fin = Complex64::new(max_coeff, 0.0);
            let mut lim = Complex64::new(max_coeff, 0.0);
            for l in 0..dim {
                let s = -n * t + 2.0 * n * t * lattice[l] as f64 / (points - 1) as f64;
                fin *= dirichlet_factor_finite(scale, s);
                lim *= dirichlet_factor_limit(s);
            }
            sup = sup.max((fin - lim).norm());
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break;
                }
                axis -= 1;
                lattice[axis] += 1;
                if lattice[axis] < points {
                    break;
                }
                lattice[axis] = 0;
            }
            if lattice.iter().all(|&v| v == 0) {
                break;
            }
        }
        sup_differences.push((scale, sup));
    }
    let monotone = sup_differences.windows(2).all(|w| w[1].1 <= w[0].1);
    let final_ok = sup_differences
        .last()
        .map(|&(_, s)| s <= exp.cond_a_threshold)
        .unwrap_or(false);
    ConditionAReport {
        cube_half_width: t,
        threshold: exp.cond_a_threshold,
        sup_differences,
        pass: monotone && final_ok,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionBReport {
    /// tail mass per (scale, radius): Σ over tuples with any coordinate
    /// beyond the radius of |h^N|² Π G^{(N)}_{jj}
    pub tails: Vec<(u64, Vec<(f64, f64)>)>,
    /// per ε: the smallest tested radius whose tail is ≤ ε² for every
    /// scale, when one exists
    pub required_radius: Vec<(f64, Option<f64>)>,
    pub pass: bool,
}

/// Uniform-in-scale tail bound of the kernel norms.
pub fn check_condition_b(exp: &LimitExperiment) -> Result<ConditionBReport, LimitsError> {
    let mut tails = Vec::new();
    for &scale in &exp.schedule {
        let measure = exp.rescaled_measure(scale)?;
        let mut per_radius: Vec<(f64, f64)> =
            exp.cond_b_radii.iter().map(|&t| (t, 0.0)).collect();
        for (expo, coeff) in &exp.wick.coefficients {
            let colours = WickSpec::colour_list(expo);
            accumulate_tails(
                &measure,
                &colours,
                *coeff,
                Some(scale),
                &mut per_radius,
            );
        }
        tails.push((scale, per_radius));
    }
    let mut required_radius = Vec::new();
    let mut pass = true;
    for &eps in &exp.cond_b_epsilons {
        let budget = eps * eps;
        let mut found = None;
        for (idx, &t) in exp.cond_b_radii.iter().enumerate() {
            let worst = tails
                .iter()
                .map(|(_, row)| row[idx].1)
                .fold(0.0f64, f64::max);
            if worst <= budget {
                found = Some(t);
                break;
            }
        }
        if found.is_none() {
            pass = false;
        }
        required_radius.push((eps, found));
    }
    Ok(ConditionBReport {
        tails,
        required_radius,
        pass,
    })
}

/// Adds `|h|² Π G_jj` of every tuple whose farthest coordinate exceeds
/// each radius.
fn accumulate_tails(
    measure: &MatrixSpectralMeasure,
    colours: &[usize],
    coeff: f64,
    scale: Option<u64>,
    per_radius: &mut [(f64, f64)],
) {
    let system = measure.system().clone();
    let order = colours.len();
    let indices: Vec<i64> = system.signed_indices().collect();
    let mut tuple = vec![0i64; order];
    let mut stack_weight = vec![1.0f64; order + 1];
    let mut stack_reach = vec![0.0f64; order + 1];
    fn recurse(
        depth: usize,
        order: usize,
        indices: &[i64],
        system: &RegularSystem,
        measure: &MatrixSpectralMeasure,
        colours: &[usize],
        coeff: f64,
        scale: Option<u64>,
        tuple: &mut Vec<i64>,
        stack_weight: &mut Vec<f64>,
        stack_reach: &mut Vec<f64>,
        per_radius: &mut [(f64, f64)],
    ) {
        if depth == order {
            let points: Vec<&[f64]> = tuple.iter().map(|&k| system.representative(k)).collect();
            let h = rescaled_kernel_value(scale, coeff, &points);
            let w = h.norm_sqr() * stack_weight[order];
            let reach = stack_reach[order];
            for (radius, tail) in per_radius.iter_mut() {
                if reach > *radius {
                    *tail += w;
                }
            }
            return;
        }
        for &k in indices {
            tuple[depth] = k;
            let g = measure.diagonal(k, colours[depth]);
            if g == 0.0 {
                continue;
            }
            stack_weight[depth + 1] = stack_weight[depth] * g;
            let far = system
                .representative(k)
                .iter()
                .fold(0.0f64, |m, &x| m.max(x.abs()));
            stack_reach[depth + 1] = stack_reach[depth].max(far);
            recurse(
                depth + 1,
                order,
                indices,
                system,
                measure,
                colours,
                coeff,
                scale,
                tuple,
                stack_weight,
                stack_reach,
                per_radius,
            );
        }
    }
    recurse(
        0,
        order,
        &indices,
        &system,
        measure,
        colours,
        coeff,
        scale,
        &mut tuple,
        &mut stack_weight,
        &mut stack_reach,
        per_radius,
    );
}

/// One estimated statistic with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Estimated {
    pub value: f64,
    pub std_error: f64,
}

/// Sample statistics entering the distributional comparison, each with a
/// delta-method standard error so the comparison can separate Monte
/// Carlo noise from discretization error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: Estimated,
    pub variance: Estimated,
    pub third_central: Estimated,
    pub fourth_central: Estimated,
    /// per point: (t, Re φ(t), Im φ(t), combined standard error)
    pub characteristic: Vec<(f64, Estimated, Estimated)>,
    pub replicas: usize,
}

pub fn sample_stats(samples: &[f64], cf_points: &[f64]) -> SampleStats {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mut central = [0.0f64; 8];
    for &x in samples {
        let d = x - mean;
        let mut p = 1.0;
        for m in central.iter_mut() {
            p *= d;
            *m += p;
        }
    }
    for m in central.iter_mut() {
        *m /= n;
    }
    let [_, m2, m3, m4, m5, m6, _, m8] = central;
    // delta-method variances of the central-moment estimators
    let var_mean = m2 / n;
    let var_m2 = (m4 - m2 * m2).max(0.0) / n;
    let var_m3 = (m6 - m3 * m3 - 6.0 * m2 * m4 + 9.0 * m2 * m2 * m2).max(0.0) / n;
    let var_m4 = (m8 - m4 * m4 - 8.0 * m3 * m5 + 16.0 * m2 * m3 * m3).max(0.0) / n;
    let characteristic = cf_points
        .iter()
        .map(|&t| {
            let mut re = 0.0;
            let mut im = 0.0;
            let mut re2 = 0.0;
            let mut im2 = 0.0;
            for &x in samples {
                let (s, c) = (t * x).sin_cos();
                re += c;
                im += s;
                re2 += c * c;
                im2 += s * s;
            }
            let re_mean = re / n;
            let im_mean = im / n;
            (
                t,
                Estimated {
                    value: re_mean,
                    std_error: ((re2 / n - re_mean * re_mean).max(0.0) / n).sqrt(),
                },
                Estimated {
                    value: im_mean,
                    std_error: ((im2 / n - im_mean * im_mean).max(0.0) / n).sqrt(),
                },
            )
        })
        .collect();
    SampleStats {
        mean: Estimated {
            value: mean,
            std_error: var_mean.sqrt(),
        },
        variance: Estimated {
            value: m2,
            std_error: var_m2.sqrt(),
        },
        third_central: Estimated {
            value: m3,
            std_error: var_m3.sqrt(),
        },
        fourth_central: Estimated {
            value: m4,
            std_error: var_m4.sqrt(),
        },
        characteristic,
        replicas: samples.len(),
    }
}

/// One compared statistic: the scaled absolute difference, the scaled
/// 3-standard-error Monte Carlo allowance of that difference, and the
/// excess of the former over the latter. The excess is the part of the
/// discrepancy that Monte Carlo noise cannot explain, which is what the
/// discretization budget applies to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatDiscrepancy {
    pub statistic: String,
    pub difference: f64,
    pub scale: f64,
    pub mc_allowance: f64,
    pub excess: f64,
}

/// All compared statistics for one scale, with the aggregate excess.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleDiscrepancy {
    pub entries: Vec<StatDiscrepancy>,
    /// max over entries of the noise-compensated scaled difference
    pub excess: f64,
}

fn entry(name: &str, a: Estimated, b: Estimated, scale: f64) -> StatDiscrepancy {
    let difference = (a.value - b.value).abs();
    let se = (a.std_error * a.std_error + b.std_error * b.std_error).sqrt();
    let mc_allowance = 3.0 * se / scale;
    let excess = (difference / scale - mc_allowance).max(0.0);
    StatDiscrepancy {
        statistic: name.to_string(),
        difference,
        scale,
        mc_allowance,
        excess,
    }
}

/// Scaled moment and characteristic-function differences between one
/// scale and the limit baseline, each with its Monte Carlo allowance.
pub fn stats_discrepancy(stats: &SampleStats, baseline: &SampleStats) -> ScaleDiscrepancy {
    let sigma = baseline.variance.value.sqrt().max(1e-9);
    let mut entries = vec![
        entry("mean", stats.mean, baseline.mean, sigma),
        entry(
            "variance",
            stats.variance,
            baseline.variance,
            baseline.variance.value.max(1e-9),
        ),
        entry(
            "third_central",
            stats.third_central,
            baseline.third_central,
            sigma.powi(3),
        ),
        entry(
            "fourth_central",
            stats.fourth_central,
            baseline.fourth_central,
            sigma.powi(4),
        ),
    ];
    for ((t, re_a, im_a), (_, re_b, im_b)) in
        stats.characteristic.iter().zip(&baseline.characteristic)
    {
        entries.push(entry(&format!("cf_re({t})"), *re_a, *re_b, 1.0));
        entries.push(entry(&format!("cf_im({t})"), *im_a, *im_b, 1.0));
    }
    let excess = entries.iter().map(|e| e.excess).fold(0.0, f64::max);
    ScaleDiscrepancy { entries, excess }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub per_scale: Vec<(u64, SampleStats)>,
    pub limit_stats: SampleStats,
    pub discrepancies: Vec<(u64, ScaleDiscrepancy)>,
    pub final_tolerance: f64,
    pub nonincreasing: bool,
    pub pass: bool,
}

/// Monte Carlo distributional comparison of the normalized sums against
/// the limit object. Replicas of different scales share their random
/// streams, which realizes the scale coupling and keeps the discrepancy
/// sequence smooth; the limit object is sampled independently. The pass
/// verdict applies the discretization budget to the noise-compensated
/// excess discrepancies.
pub fn convergence_report(exp: &LimitExperiment) -> Result<ConvergenceReport, LimitsError> {
    exp.validate()?;
    let mut per_scale = Vec::new();
    for &scale in &exp.schedule {
        let sum = SpectralSum::at_scale(exp, scale)?;
        let samples = sum.samples(exp.seed, exp.replicas);
        per_scale.push((scale, sample_stats(&samples, &exp.cf_points)));
    }
    let limit = SpectralSum::limit(exp)?;
    let limit_samples = limit.samples(exp.seed ^ 0x9E37_79B9_7F4A_7C15, exp.z0_replicas);
    let limit_stats = sample_stats(&limit_samples, &exp.cf_points);
    let discrepancies: Vec<(u64, ScaleDiscrepancy)> = per_scale
        .iter()
        .map(|(scale, stats)| (*scale, stats_discrepancy(stats, &limit_stats)))
        .collect();
    let nonincreasing = discrepancies
        .windows(2)
        .all(|w| w[1].1.excess <= w[0].1.excess + 1e-9);
    let final_ok = discrepancies
        .last()
        .map(|(_, d)| d.excess <= exp.final_tolerance)
        .unwrap_or(false);
    Ok(ConvergenceReport {
        per_scale,
        limit_stats,
        discrepancies,
        final_tolerance: exp.final_tolerance,
        nonincreasing,
        pass: nonincreasing && final_ok,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdLimitReport {
    /// per scale: sup over cells and entries of |G^{(N)}(Δ) - G^{(0)}(Δ)|
    pub mass_deviation: Vec<(u64, f64)>,
    pub limit_validation_pass: bool,
    pub nonincreasing: bool,
    pub pass: bool,
}

/// Checks cell-mass convergence of a measure sequence on a common grid
/// and that the numeric limit is itself a valid measure.
pub fn psd_limit_check(
    sequence: &[(u64, Arc<MatrixSpectralMeasure>)],
    limit: &Arc<MatrixSpectralMeasure>,
) -> PsdLimitReport {
    let d = limit.field_dim();
    let mut mass_deviation = Vec::new();
    for (scale, g) in sequence {
        assert_eq!(
            g.system().cells_per_axis(),
            limit.system().cells_per_axis(),
            "sequence must live on the common refinement"
        );
        let mut worst = 0.0f64;
        for k in limit.system().signed_indices() {
            for r in 0..d {
                for c in 0..d {
                    worst = worst.max((g.entry(k, r, c) - limit.entry(k, r, c)).norm());
                }
            }
        }
        mass_deviation.push((*scale, worst));
    }
    let nonincreasing = mass_deviation.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-15);
    let limit_validation_pass = limit.validate().pass;
    PsdLimitReport {
        mass_deviation,
        limit_validation_pass,
        nonincreasing,
        pass: nonincreasing && limit_validation_pass,
    }
}

// ---------------------------------------------------------------------
// the shipped long-memory example
// ---------------------------------------------------------------------

/// A two-component field with spectral density `|x|^{-β} · M` near the
/// origin on ν = 1: slow correlation decay, so the normalized sums need
/// the unorthodox norming the calibration routine produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LongMemoryFixture {
    pub beta: f64,
    /// real symmetric psd 2×2 matrix with nonzero off-diagonal
    pub matrix: Vec<f64>,
    pub base_cells: usize,
    /// coefficient of the Wick monomial `:X₁(0) X₂(0):`
    pub coefficient: f64,
}

impl Default for LongMemoryFixture {
    fn default() -> Self {
        LongMemoryFixture {
            // strong long memory: with chaos order 2 the normalized sums
            // leave the central-limit regime and the kernel-norm tails
            // decay fast enough for a desk-scale truncation radius
            beta: 0.9,
            matrix: vec![1.0, 0.5, 0.5, 1.0],
            base_cells: 256,
            coefficient: 1.0,
        }
    }
}

impl LongMemoryFixture {
    fn matrix_cm(&self) -> CMatrix {
        CMatrix::from_real_rows(2, &self.matrix)
    }

    /// `∫_a^b x^{-β} dx` for `0 ≤ a < b`.
    fn radial_mass(&self, a: f64, b: f64) -> f64 {
        let e = 1.0 - self.beta;
        (b.powf(e) - a.powf(e)) / e
    }

    /// Mass of `|x|^{-β}` over an arbitrary interval.
    fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        if lo >= 0.0 {
            self.radial_mass(lo, hi)
        } else if hi <= 0.0 {
            self.radial_mass(-hi, -lo)
        } else {
            self.radial_mass(0.0, -lo) + self.radial_mass(0.0, hi)
        }
    }

    /// Base measure on the unit torus with exact per-cell masses.
    pub fn base_measure(&self) -> Result<Arc<MatrixSpectralMeasure>, LimitsError> {
        let system = Arc::new(build_symmetric_grid(
            1,
            vec![std::f64::consts::PI],
            vec![self.base_cells],
        )?);
        let m = self.matrix_cm();
        let masses: Vec<CMatrix> = system
            .positive_indices()
            .map(|k| {
                let cell = system.cell(k);
                m.scale(self.interval_mass(cell.lower[0], cell.upper[0]))
            })
            .collect();
        Ok(Arc::new(MatrixSpectralMeasure::from_positive_masses(
            system, 2, masses,
        )?))
    }

    /// The Wick spec `coefficient · :X₁(0) X₂(0):`.
    pub fn wick_spec(&self) -> WickSpec {
        WickSpec::new(2, vec![(vec![1, 1], self.coefficient)]).expect("homogeneous by construction")
    }

    /// Truncation-window grid whose cell width matches the rescaled grid
    /// at the largest scale (so the two discretizations cancel at the
    /// endpoint of the schedule).
    pub fn window_system(
        &self,
        largest_scale: u64,
        window_cells: usize,
    ) -> Result<Arc<RegularSystem>, LimitsError> {
        let width = 2.0 * largest_scale as f64 * std::f64::consts::PI / self.base_cells as f64;
        let half = width * window_cells as f64 / 2.0;
        Ok(Arc::new(build_symmetric_grid(1, vec![half], vec![window_cells])?))
    }

    /// The vague-limit measure `(1/constant) |y|^{-β} M dy` on a window
    /// grid, exact per cell.
    pub fn limit_measure(
        &self,
        system: Arc<RegularSystem>,
        norming_constant: f64,
    ) -> Result<Arc<MatrixSpectralMeasure>, LimitsError> {
        let m = self.matrix_cm().scale(1.0 / norming_constant);
        let masses: Vec<CMatrix> = system
            .positive_indices()
            .map(|k| {
                let cell = system.cell(k);
                m.scale(self.interval_mass(cell.lower[0], cell.upper[0]))
            })
            .collect();
        Ok(Arc::new(MatrixSpectralMeasure::from_positive_masses(
            system, 2, masses,
        )?))
    }

    /// The rescaled measure restricted to a window grid, exact per cell;
    /// cells beyond the rescaled torus carry no mass.
    pub fn rescaled_on_window(
        &self,
        system: Arc<RegularSystem>,
        scale: u64,
        norming: &Norming,
        chaos_order: usize,
    ) -> Result<Arc<MatrixSpectralMeasure>, LimitsError> {
        let n = chaos_order as f64;
        let a = norming.a(scale);
        let s = scale as f64;
        let factor = s.powf(2.0 / n) * a.powf(-2.0 / n);
        let torus_edge = s * std::f64::consts::PI;
        let m = self.matrix_cm();
        let masses: Vec<CMatrix> = system
            .positive_indices()
            .map(|k| {
                let cell = system.cell(k);
                let lo = cell.lower[0].min(torus_edge);
                let hi = cell.upper[0].min(torus_edge);
                if hi <= lo {
                    CMatrix::zeros(2)
                } else {
                    m.scale(factor * self.interval_mass(lo / s, hi / s))
                }
            })
            .collect();
        Ok(Arc::new(MatrixSpectralMeasure::from_positive_masses(
            system, 2, masses,
        )?))
    }

    /// Norming exponent from the slope of the shrinking-cell mass, and
    /// the constant that standardizes the limit variance: an empirical
    /// config output, not a hand-picked number.
    pub fn calibrate_norming(
        &self,
        schedule: &[u64],
        chaos_order: usize,
    ) -> Result<Norming, LimitsError> {
        // slope of log mass([w, 2w]/N) against log N
        let w = 0.5;
        let points: Vec<(f64, f64)> = schedule
            .iter()
            .map(|&scale| {
                let s = scale as f64;
                (
                    s.ln(),
                    self.interval_mass(w / s, 2.0 * w / s).ln(),
                )
            })
            .collect();
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let nu = 1.0;
        let exponent = nu + chaos_order as f64 * slope / 2.0;

        // constant: standardize the analytic variance at the largest scale
        let probe = Norming {
            exponent,
            constant: 1.0,
        };
        let base = self.base_measure()?;
        let largest = *schedule.last().expect("schedule nonempty");
        let exp_probe = LimitExperiment {
            base: base.clone(),
            wick: self.wick_spec(),
            schedule: schedule.to_vec(),
            norming: probe,
            limit_measure: base, // unused here
            replicas: 2,
            z0_replicas: 2,
            seed: 0,
            cond_a_half_width: 1.0,
            cond_a_lattice: 2,
            cond_a_threshold: 1.0,
            cond_b_radii: vec![],
            cond_b_epsilons: vec![],
            cf_points: vec![],
            final_tolerance: 1.0,
        };
        let sum = SpectralSum::at_scale(&exp_probe, largest)?;
        let var = sum.analytic_variance()?;
        Ok(Norming {
            exponent,
            constant: var.max(1e-12).sqrt(),
        })
    }

    /// The fully assembled experiment with the calibrated norming. When
    /// `window_cells` is absent, the truncation window is taken from the
    /// tail check: the smallest tested radius whose tail stays within the
    /// tightest budget at every scale.
    pub fn experiment(
        &self,
        schedule: Vec<u64>,
        replicas: usize,
        z0_replicas: usize,
        seed: u64,
        window_cells: Option<usize>,
    ) -> Result<LimitExperiment, LimitsError> {
        let wick = self.wick_spec();
        let norming = self.calibrate_norming(&schedule, wick.order)?;
        let base = self.base_measure()?;
        let largest = *schedule.last().ok_or(LimitsError::BadSchedule)?;
        let cell_width =
            2.0 * largest as f64 * std::f64::consts::PI / self.base_cells as f64;
        let provisional = self.window_system(largest, 2)?;
        let mut exp = LimitExperiment {
            base,
            wick,
            schedule,
            norming,
            limit_measure: self.limit_measure(provisional, norming.constant)?,
            replicas,
            z0_replicas,
            seed,
            cond_a_half_width: 5.0,
            cond_a_lattice: 501,
            cond_a_threshold: 0.1,
            cond_b_radii: vec![5.0, 10.0, 20.0, 40.0, 60.0, 80.0, 95.0],
            cond_b_epsilons: vec![0.2, 0.1, 0.05],
            cf_points: vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0],
            final_tolerance: 0.05,
        };
        let cells = match window_cells {
            Some(c) => c,
            None => {
                let report = check_condition_b(&exp)?;
                let radius = report
                    .required_radius
                    .iter()
                    .filter_map(|&(_, r)| r)
                    .fold(0.0f64, f64::max)
                    .max(2.0 * cell_width);
                (2 * ((radius / cell_width).ceil() as usize)).max(2)
            }
        };
        let window = self.window_system(largest, cells)?;
        exp.limit_measure = self.limit_measure(window, norming.constant)?;
        Ok(exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn wick_spec_rejects_inhomogeneous_coefficients() {
        assert!(WickSpec::new(2, vec![(vec![1, 1], 1.0), (vec![2, 1], 0.5)]).is_err());
        assert!(WickSpec::new(2, vec![]).is_err());
        let spec = WickSpec::new(2, vec![(vec![2, 0], 1.0), (vec![0, 2], 0.5)]).unwrap();
        assert_eq!(spec.order, 2);
        assert_eq!(WickSpec::colour_list(&[2, 1]), vec![0, 0, 1]);
    }

    #[test]
    fn dirichlet_factors_at_the_origin_and_known_points() {
        assert_relative_eq!(dirichlet_factor_finite(8, 0.0).re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(dirichlet_factor_limit(0.0).re, 1.0, epsilon = 1e-15);
        // limit factor at s = π: (e^{iπ}-1)/(iπ) = 2i/π
        let v = dirichlet_factor_limit(PI);
        assert!(v.re.abs() < 1e-12);
        assert_relative_eq!(v.im, 2.0 / PI, epsilon = 1e-12);
        assert_relative_eq!(v.norm(), 2.0 / PI, epsilon = 1e-12);
        // both branches agree with the leading expansion 1 + is/2 near
        // the series boundary
        for s in [9.99e-5f64, 1.01e-4] {
            let f = dirichlet_factor_limit(s);
            let lead = Complex64::new(1.0 - s * s / 6.0, s / 2.0);
            assert!((f - lead).norm() < 1e-12, "s = {s}: {f}");
        }
        // finite factor equals the explicit ratio away from singularities
        let s = 1.3f64;
        let n = 8u64;
        let num = Complex64::new(s.cos() - 1.0, s.sin());
        let den = Complex64::new((s / n as f64).cos() - 1.0, (s / n as f64).sin());
        let ratio = num / (den * n as f64);
        assert!((dirichlet_factor_finite(n, s) - ratio).norm() < 1e-12);
    }

    #[test]
    fn finite_factor_converges_to_limit_uniformly() {
        let sup = |n: u64| {
            let mut worst = 0.0f64;
            for i in 0..400 {
                let s = -10.0 + 20.0 * i as f64 / 399.0;
                worst = worst
                    .max((dirichlet_factor_finite(n, s) - dirichlet_factor_limit(s)).norm());
            }
            worst
        };
        assert!(sup(8) < sup(4));
        assert!(sup(16) < sup(8));
        assert!(sup(32) < 0.06);
    }

    fn small_fixture() -> LongMemoryFixture {
        LongMemoryFixture {
            beta: 0.9,
            matrix: vec![1.0, 0.5, 0.5, 1.0],
            base_cells: 64,
            coefficient: 1.0,
        }
    }

    #[test]
    fn fixture_base_measure_is_valid() {
        let f = small_fixture();
        let g = f.base_measure().unwrap();
        assert!(g.validate().pass);
        // total trace = 2 · tr(M) · ∫_0^π x^{-β} dx
        let total: f64 = g.trace_measure().iter().map(|(_, t)| t).sum();
        let e = 1.0 - f.beta;
        let expected = 2.0 * 2.0 * PI.powf(e) / e;
        assert_relative_eq!(total, expected, max_relative = 1e-10);
    }

    #[test]
    fn calibrated_exponent_matches_power_law() {
        let f = small_fixture();
        // pure power law: slope is exactly -(1 - β), so the exponent is
        // ν - n(ν - β)/2 = β for n = 2, ν = 1
        let norming = f.calibrate_norming(&[4, 8, 16], 2).unwrap();
        assert_relative_eq!(norming.exponent, f.beta, epsilon = 1e-9);
        // ν - n(ν - β)/2 with ν = 1, n = 2 reduces to β
        assert!(norming.constant > 0.0);
    }

    #[test]
    fn rescaled_window_masses_are_scale_free_inside_the_torus() {
        let f = small_fixture();
        let norming = Norming {
            exponent: f.beta,
            constant: 2.0,
        };
        let window = f.window_system(16, 32).unwrap();
        let g8 = f.rescaled_on_window(window.clone(), 8, &norming, 2).unwrap();
        let g16 = f.rescaled_on_window(window.clone(), 16, &norming, 2).unwrap();
        // pure power law + exponent β makes masses N-independent where the
        // window is inside the rescaled torus
        for k in window.positive_indices() {
            if window.cell(k).upper[0] <= 8.0 * PI {
                assert_relative_eq!(
                    g8.entry(k, 0, 1).re,
                    g16.entry(k, 0, 1).re,
                    max_relative = 1e-10
                );
            }
        }
        let limit = f.limit_measure(window, norming.constant).unwrap();
        assert!(limit.validate().pass);
    }

    fn small_experiment(replicas: usize) -> LimitExperiment {
        let f = small_fixture();
        f.experiment(vec![2, 4, 8], replicas, replicas, 71, None).unwrap()
    }

    #[test]
    fn spectral_and_direct_chaos_paths_agree_on_coupled_samples() {
        let exp = small_experiment(4);
        for &scale in &[2u64, 4] {
            let sum = SpectralSum::at_scale(&exp, scale).unwrap();
            let base_sampler = Sampler::new(exp.base.clone()).unwrap();
            for r in 0..3 {
                let base_sample = base_sampler.draw(exp.seed, r);
                let coupled = coupled_rescaled_sample(
                    &base_sample,
                    &sum.measure,
                    scale,
                    exp.norming.a(scale),
                    exp.wick.order,
                );
                let spectral = sum.value(&coupled).unwrap();
                let direct = direct_sn_chaos_value(&exp, scale, &base_sample).unwrap();
                assert_relative_eq!(spectral, direct, max_relative = 1e-9, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn order_one_direct_variance_matches_closed_form_and_spectral() {
        // order-1 spec on component 0
        let f = small_fixture();
        let base = f.base_measure().unwrap();
        let wick = WickSpec::new(2, vec![(vec![1, 0], 1.0)]).unwrap();
        let norming = Norming {
            exponent: 0.7,
            constant: 1.0,
        };
        let window = f.window_system(4, 16).unwrap();
        let exp = LimitExperiment {
            base: base.clone(),
            wick,
            schedule: vec![2, 4],
            norming,
            limit_measure: f.limit_measure(window, 1.0).unwrap(),
            replicas: 2,
            z0_replicas: 2,
            seed: 3,
            cond_a_half_width: 2.0,
            cond_a_lattice: 51,
            cond_a_threshold: 1.0,
            cond_b_radii: vec![2.0],
            cond_b_epsilons: vec![0.5],
            cf_points: vec![1.0],
            final_tolerance: 1.0,
        };
        let analytic = direct_variance_order1(&exp, 4, 0).unwrap();
        let spectral = SpectralSum::at_scale(&exp, 4)
            .unwrap()
            .analytic_variance()
            .unwrap();
        assert_relative_eq!(analytic, spectral, max_relative = 1e-9);
        // Monte Carlo on the direct path
        let sampler = Sampler::new(base).unwrap();
        let poly = exp.wick.wick_field_polynomial(&exp.base).unwrap();
        let est = crate::montecarlo::mc_mean(4000, |r| {
            let s = sampler.draw(11, r);
            let v = direct_sn_value_with(&exp, 4, &poly, &s).unwrap();
            v * v
        });
        assert!(
            (est.mean - analytic).abs() < 3.0 * est.std_error,
            "mc {} vs analytic {} (se {})",
            est.mean,
            analytic,
            est.std_error
        );
    }

    #[test]
    fn direct_wick_polynomial_is_centered_product() {
        // :X1 X2: = X1 X2 - E X1 X2 for the order-(1,1) spec
        let exp = small_experiment(2);
        let poly = exp.wick.wick_field_polynomial(&exp.base).unwrap();
        let r0 = exp.base.correlation(&[0]).unwrap();
        let expected = Polynomial::variable(0)
            .mul(&Polynomial::variable(1))
            .sub(&Polynomial::constant(r0.get(0, 1)));
        assert!(poly.coeff_distance(&expected) < 1e-9);
    }

    #[test]
    fn condition_checks_pass_on_the_small_fixture() {
        let mut exp = small_experiment(2);
        // the short test schedule stops at scale 8; the sup there is
        // around 0.13 and keeps halving along the shipped schedule
        exp.cond_a_threshold = 0.15;
        let a = check_condition_a(&exp);
        assert!(
            a.pass,
            "condition A sups: {:?}",
            a.sup_differences
        );
        let b = check_condition_b(&exp).unwrap();
        assert!(b.pass, "condition B radii: {:?}", b.required_radius);
        // compact-support sanity: tails vanish beyond the largest torus
        for (_, row) in &b.tails {
            let last = row.last().unwrap();
            if last.0 >= 8.0 * PI {
                assert_eq!(last.1, 0.0);
            }
        }
    }

    #[test]
    fn psd_limit_check_accepts_scalar_scaling_sequence() {
        let f = small_fixture();
        let window = f.window_system(8, 16).unwrap();
        let limit = f.limit_measure(window.clone(), 1.0).unwrap();
        let seq: Vec<(u64, Arc<MatrixSpectralMeasure>)> = [2u64, 4, 8]
            .iter()
            .map(|&n| {
                let masses: Vec<CMatrix> = window
                    .positive_indices()
                    .map(|k| limit.mass(k).scale(1.0 + 1.0 / n as f64))
                    .collect();
                (
                    n,
                    Arc::new(
                        MatrixSpectralMeasure::from_positive_masses(window.clone(), 2, masses)
                            .unwrap(),
                    ),
                )
            })
            .collect();
        let report = psd_limit_check(&seq, &limit);
        assert!(report.pass);
        // constant sequence: deviation zero everywhere
        let const_seq: Vec<(u64, Arc<MatrixSpectralMeasure>)> =
            vec![(2, limit.clone()), (4, limit.clone())];
        let report = psd_limit_check(&const_seq, &limit);
        assert!(report.pass);
        assert!(report.mass_deviation.iter().all(|&(_, d)| d == 0.0));
    }

    #[test]
    fn fixture_psd_limit_sequence_converges() {
        let f = small_fixture();
        let norming = Norming {
            exponent: f.beta,
            constant: 1.0,
        };
        let window = f.window_system(8, 24).unwrap();
        let seq: Vec<(u64, Arc<MatrixSpectralMeasure>)> = [2u64, 4, 8]
            .iter()
            .map(|&n| {
                (
                    n,
                    f.rescaled_on_window(window.clone(), n, &norming, 2).unwrap(),
                )
            })
            .collect();
        let limit = f.limit_measure(window, norming.constant).unwrap();
        let report = psd_limit_check(&seq, &limit);
        assert!(
            report.pass,
            "mass deviations: {:?}",
            report.mass_deviation
        );
    }

    #[test]
    fn small_convergence_report_runs_and_improves() {
        let mut exp = small_experiment(3000);
        exp.final_tolerance = 0.25;
        let report = convergence_report(&exp).unwrap();
        let first = &report.discrepancies.first().unwrap().1;
        let last = &report.discrepancies.last().unwrap().1;
        assert!(
            last.excess <= first.excess,
            "discrepancies should shrink: {:?} -> {:?}",
            first.excess,
            last.excess
        );
    }
}
