//! Simple kernels and multiple stochastic integrals against the
//! coordinates of a random spectral measure.
//!
//! A kernel of order n assigns a complex value to n-tuples of signed cell
//! indices and carries a colour list selecting which measure coordinate
//! each variable integrates against. Kernels vanish on diagonal tuples
//! (two indices equal up to sign) and satisfy the conjugation symmetry
//! `f(-k⃗) = conj(f(k⃗))`; both are established at construction since
//! evaluation is the hot loop.
//!
//! The integral is the plain weighted sum
//! `Σ f(k⃗) · Z_{j_1}(Δ_{k_1}) ⋯ Z_{j_n}(Δ_{k_n})` over stored tuples.
//! Its second-order calculus (the permutation-sum covariance, the zero
//! cross-order moments, and the `n!‖f‖²` bound) is implemented
//! deterministically so Monte Carlo estimates can be checked against it.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::cellfn::CellFunction;
use crate::grid::RegularSystem;
use crate::sampler::SpectralSample;
use crate::spectral::MatrixSpectralMeasure;

#[derive(Debug, Error)]
pub enum ChaosError {
    #[error("colour {0} out of range for field dimension {1}")]
    ColourOutOfRange(usize, usize),
    #[error("tuple length {actual} does not match kernel order {expected}")]
    TupleLength { expected: usize, actual: usize },
    #[error("kernel and sample live on different systems")]
    SystemMismatch,
    #[error("conjugation symmetry defect {defect} exceeds {tolerance}")]
    NotHermitian { defect: f64, tolerance: f64 },
    #[error("kernel orders differ: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("not a permutation of 0..{0}")]
    BadPermutation(usize),
    #[error("imaginary residue {residue} exceeds {tolerance} in a real-valued integral")]
    ResidueExceeded { residue: f64, tolerance: f64 },
}

/// Relative imaginary-residue tolerance for kernel integrals.
pub const TOL_EVAL_RESIDUE: f64 = 1e-9;

/// All permutations of `{0, …, n-1}` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // next_permutation
        if n < 2 {
            break;
        }
        let mut i = n - 1;
        while i > 0 && current[i - 1] >= current[i] {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        let mut j = n - 1;
        while current[j] <= current[i - 1] {
            j -= 1;
        }
        current.swap(i - 1, j);
        current[i..].reverse();
    }
    out
}

#[inline]
fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// True when two indices of the tuple agree up to sign.
pub fn is_diagonal(tuple: &[i64]) -> bool {
    for a in 0..tuple.len() {
        for b in (a + 1)..tuple.len() {
            if tuple[a] == tuple[b] || tuple[a] == -tuple[b] {
                return true;
            }
        }
    }
    false
}

/// Phase `e^{i⟨u, u_{k_1} + … + u_{k_n}⟩}` picked up by a kernel under a
/// lattice shift. Shared by kernel shifting and shift-aware evaluation so
/// the two paths perform identical arithmetic.
pub fn tuple_shift_phase(system: &RegularSystem, shift: &[i64], tuple: &[i64]) -> Complex64 {
    let dim = system.dim();
    let mut total = vec![0.0f64; dim];
    for &k in tuple {
        for (t, &x) in total.iter_mut().zip(system.representative(k)) {
            *t += x;
        }
    }
    let theta: f64 = shift
        .iter()
        .zip(&total)
        .map(|(&u, &s)| u as f64 * s)
        .sum();
    Complex64::new(theta.cos(), theta.sin())
}

/// A simple kernel: sparse complex values on nondiagonal n-tuples of
/// cells, plus the colour list of measure coordinates.
#[derive(Debug, Clone)]
pub struct SimpleKernel {
    system: Arc<RegularSystem>,
    colours: Vec<usize>,
    field_dim: usize,
    values: BTreeMap<Vec<i64>, Complex64>,
}

impl SimpleKernel {
    /// Product kernel `f(k⃗) = Π_s φ_s(k_s)` with diagonal tuples zeroed.
    pub fn tensor(
        factors: &[CellFunction],
        colours: &[usize],
        field_dim: usize,
    ) -> Result<Self, ChaosError> {
        assert_eq!(factors.len(), colours.len());
        assert!(!factors.is_empty());
        let system = factors[0].system().clone();
        check_colours(colours, field_dim)?;
        let mut values = BTreeMap::new();
        let mut tuple = vec![0i64; factors.len()];
        fill_tensor(&system, factors, &mut tuple, 0, Complex64::new(1.0, 0.0), &mut values);
        Ok(SimpleKernel {
            system,
            colours: colours.to_vec(),
            field_dim,
            values,
        })
    }

    /// Kernel from explicit entries; diagonal tuples are zeroed and the
    /// conjugation symmetry of what remains is checked.
    pub fn from_entries(
        system: Arc<RegularSystem>,
        colours: &[usize],
        field_dim: usize,
        entries: impl IntoIterator<Item = (Vec<i64>, Complex64)>,
    ) -> Result<Self, ChaosError> {
        check_colours(colours, field_dim)?;
        let order = colours.len();
        let mut values = BTreeMap::new();
        for (tuple, v) in entries {
            if tuple.len() != order {
                return Err(ChaosError::TupleLength {
                    expected: order,
                    actual: tuple.len(),
                });
            }
            if is_diagonal(&tuple) || v == Complex64::new(0.0, 0.0) {
                continue;
            }
            values.insert(tuple, v);
        }
        let kernel = SimpleKernel {
            system,
            colours: colours.to_vec(),
            field_dim,
            values,
        };
        let defect = kernel.conjugation_defect();
        let scale = kernel.max_abs().max(1.0);
        if defect > 1e-10 * scale {
            return Err(ChaosError::NotHermitian {
                defect,
                tolerance: 1e-10 * scale,
            });
        }
        Ok(kernel)
    }

    /// Grid restriction of a function: values at representative tuples,
    /// diagonals zeroed. `f` must satisfy `f(-x⃗) = conj(f(x⃗))`.
    pub fn from_fn(
        system: Arc<RegularSystem>,
        colours: &[usize],
        field_dim: usize,
        f: impl Fn(&[&[f64]]) -> Complex64,
    ) -> Result<Self, ChaosError> {
        check_colours(colours, field_dim)?;
        let order = colours.len();
        let mut values = BTreeMap::new();
        let mut tuple = vec![0i64; order];
        let indices: Vec<i64> = system.signed_indices().collect();
        fill_from_fn(&system, &indices, &f, &mut tuple, 0, &mut values);
        SimpleKernel::from_entries(system, colours, field_dim, values)
    }

    /// Order-0 kernel: a real constant.
    pub fn constant(
        system: Arc<RegularSystem>,
        field_dim: usize,
        value: Complex64,
    ) -> Self {
        let mut values = BTreeMap::new();
        if value != Complex64::new(0.0, 0.0) {
            values.insert(Vec::new(), value);
        }
        SimpleKernel {
            system,
            colours: Vec::new(),
            field_dim,
            values,
        }
    }

    /// Trusted constructor for internally computed tables (contractions,
    /// shifts) whose symmetry holds by construction.
    pub(crate) fn from_raw(
        system: Arc<RegularSystem>,
        colours: Vec<usize>,
        field_dim: usize,
        values: BTreeMap<Vec<i64>, Complex64>,
    ) -> Self {
        SimpleKernel {
            system,
            colours,
            field_dim,
            values,
        }
    }

    pub fn order(&self) -> usize {
        self.colours.len()
    }

    /// Zero-based component index each variable integrates against.
    pub fn colours(&self) -> &[usize] {
        &self.colours
    }

    pub fn field_dim(&self) -> usize {
        self.field_dim
    }

    pub fn system(&self) -> &Arc<RegularSystem> {
        &self.system
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.values.iter()
    }

    pub fn support_len(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, tuple: &[i64]) -> Complex64 {
        self.values
            .get(tuple)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.values().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn conjugation_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        for (tuple, v) in &self.values {
            let neg: Vec<i64> = tuple.iter().map(|k| -k).collect();
            defect = defect.max((self.value(&neg) - v.conj()).norm());
        }
        defect
    }

    /// `‖f‖² = Σ |f(k⃗)|² Π_s G_{j_s,j_s}(Δ_{k_s})`.
    pub fn norm_sqr(&self, measure: &MatrixSpectralMeasure) -> f64 {
        self.values
            .iter()
            .map(|(tuple, v)| {
                let w: f64 = tuple
                    .iter()
                    .zip(&self.colours)
                    .map(|(&k, &j)| measure.diagonal(k, j))
                    .product();
                v.norm_sqr() * w
            })
            .sum()
    }

    /// The n-fold integral of this kernel against one realization.
    pub fn evaluate(&self, sample: &SpectralSample) -> Result<f64, ChaosError> {
        if sample.system().as_ref() != self.system.as_ref() {
            return Err(ChaosError::SystemMismatch);
        }
        let shift_active = sample.shift().iter().any(|&u| u != 0);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut abs_acc = 0.0f64;
        for (tuple, v) in &self.values {
            let mut term = *v;
            if shift_active {
                term *= tuple_shift_phase(&self.system, sample.shift(), tuple);
            }
            for (&k, &j) in tuple.iter().zip(&self.colours) {
                let z = if k > 0 {
                    sample.raw_positive(j, k)
                } else {
                    sample.raw_positive(j, -k).conj()
                };
                term *= z;
            }
            acc += term;
            abs_acc += term.norm();
        }
        let tolerance = TOL_EVAL_RESIDUE * abs_acc + 1e-12;
        if acc.im.abs() > tolerance {
            return Err(ChaosError::ResidueExceeded {
                residue: acc.im.abs(),
                tolerance,
            });
        }
        Ok(acc.re)
    }

    /// Deterministic covariance `E[I_n(f) I_m(h)]`: zero across orders,
    /// and for equal orders the permutation sum
    /// `Σ_π Σ_{k⃗} f(k⃗) conj(h(k_{π(1)},…,k_{π(n)})) Π_s G_{j_s, j'_{π⁻¹(s)}}(Δ_{k_s})`
    /// with permutations taken in lexicographic order.
    pub fn analytic_covariance(
        &self,
        other: &SimpleKernel,
        measure: &MatrixSpectralMeasure,
    ) -> Result<f64, ChaosError> {
        if self.system.as_ref() != other.system.as_ref() {
            return Err(ChaosError::SystemMismatch);
        }
        if self.order() != other.order() {
            return Ok(0.0);
        }
        let n = self.order();
        if n == 0 {
            // order-0 integrals are deterministic constants
            return Ok((self.value(&[]) * other.value(&[]).conj()).re);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let mut permuted = vec![0i64; n];
        for perm in permutations(n) {
            let inv = invert(&perm);
            for (tuple, v) in &self.values {
                for s in 0..n {
                    permuted[s] = tuple[perm[s]];
                }
                let h = other.value(&permuted);
                if h == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mut w = Complex64::new(1.0, 0.0);
                for s in 0..n {
                    w *= measure.entry(tuple[s], self.colours[s], other.colours[inv[s]]);
                }
                acc += v * h.conj() * w;
            }
        }
        // the covariance of two real random variables is real
        let scale = acc.norm().max(1.0);
        if acc.im.abs() > 1e-9 * scale {
            return Err(ChaosError::ResidueExceeded {
                residue: acc.im.abs(),
                tolerance: 1e-9 * scale,
            });
        }
        Ok(acc.re)
    }

    /// `n! ‖f‖²`, the second-moment bound.
    pub fn second_moment_bound(&self, measure: &MatrixSpectralMeasure) -> f64 {
        let fact: f64 = (1..=self.order()).map(|i| i as f64).product();
        fact * self.norm_sqr(measure)
    }

    /// Reindexed kernel `h_π(k⃗) = h(k_{π(1)},…,k_{π(n)})` with colours
    /// permuted the same way; its integral equals the original pathwise.
    pub fn permuted(&self, perm: &[usize]) -> Result<SimpleKernel, ChaosError> {
        let n = self.order();
        if perm.len() != n {
            return Err(ChaosError::BadPermutation(n));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(ChaosError::BadPermutation(n));
            }
            seen[p] = true;
        }
        let mut values = BTreeMap::new();
        // h_π has value h(t∘π) at t; equivalently the entry at s⃗ moves to
        // the tuple r⃗ with r[π(s)] = k[s] ... we enumerate directly.
        for (tuple, v) in &self.values {
            let mut new_tuple = vec![0i64; n];
            for s in 0..n {
                new_tuple[s] = tuple[perm[s]];
            }
            // many tuples map to the same image only if perm is not a
            // bijection, which is excluded above
            values.insert(new_tuple, *v);
        }
        let colours = perm.iter().map(|&s| self.colours[s]).collect();
        Ok(SimpleKernel {
            system: self.system.clone(),
            colours,
            field_dim: self.field_dim,
            values,
        })
    }

    /// Kernel multiplied by the shift phase
    /// `e^{i⟨u, u_{k_1} + … + u_{k_n}⟩}`; integrating it against a sample
    /// equals integrating the original against the shifted sample.
    pub fn shifted(&self, u: &[i64]) -> SimpleKernel {
        let values = self
            .values
            .iter()
            .map(|(tuple, v)| {
                (
                    tuple.clone(),
                    v * tuple_shift_phase(&self.system, u, tuple),
                )
            })
            .collect();
        SimpleKernel {
            system: self.system.clone(),
            colours: self.colours.clone(),
            field_dim: self.field_dim,
            values,
        }
    }

    /// Flattened form for repeated evaluation of one kernel against many
    /// unshifted samples.
    pub fn evaluator(&self) -> KernelEvaluator {
        let d = self.field_dim;
        let order = self.order();
        let mut ops = Vec::with_capacity(self.values.len() * order);
        let mut coeffs = Vec::with_capacity(self.values.len());
        for (tuple, v) in &self.values {
            coeffs.push(*v);
            for (&k, &j) in tuple.iter().zip(&self.colours) {
                let slot = (k.unsigned_abs() as usize - 1) * d + j;
                ops.push((slot as u32, k < 0));
            }
        }
        KernelEvaluator {
            order,
            coeffs,
            ops,
        }
    }

    /// Linear combination `self + scale · other` entrywise.
    pub fn axpy(&self, scale: Complex64, other: &SimpleKernel) -> Result<SimpleKernel, ChaosError> {
        if self.order() != other.order() {
            return Err(ChaosError::OrderMismatch(self.order(), other.order()));
        }
        let mut values = self.values.clone();
        for (tuple, v) in &other.values {
            let entry = values.entry(tuple.clone()).or_insert(Complex64::new(0.0, 0.0));
            *entry += scale * v;
        }
        values.retain(|_, v| *v != Complex64::new(0.0, 0.0));
        Ok(SimpleKernel {
            system: self.system.clone(),
            colours: self.colours.clone(),
            field_dim: self.field_dim,
            values,
        })
    }

    /// max |self - other| over the union of supports; orders must agree.
    pub fn table_distance(&self, other: &SimpleKernel) -> Result<f64, ChaosError> {
        if self.order() != other.order() {
            return Err(ChaosError::OrderMismatch(self.order(), other.order()));
        }
        let mut worst = 0.0f64;
        for (tuple, v) in &self.values {
            worst = worst.max((v - other.value(tuple)).norm());
        }
        for (tuple, v) in &other.values {
            worst = worst.max((v - self.value(tuple)).norm());
        }
        Ok(worst)
    }
}

/// Precompiled kernel table: coefficient list plus flat per-factor
/// (value-slot, conjugate) operations.
pub struct KernelEvaluator {
    order: usize,
    coeffs: Vec<Complex64>,
    ops: Vec<(u32, bool)>,
}

impl KernelEvaluator {
    /// Integral value against an unshifted sample. The residue contract is
    /// the same as [`SimpleKernel::evaluate`].
    pub fn evaluate(&self, sample: &SpectralSample) -> Result<f64, ChaosError> {
        debug_assert!(sample.shift().iter().all(|&u| u == 0));
        let values = sample.positive_values();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut abs_acc = 0.0f64;
        for (i, &c) in self.coeffs.iter().enumerate() {
            let mut term = c;
            for &(slot, conj) in &self.ops[i * self.order..(i + 1) * self.order] {
                let z = values[slot as usize];
                term *= if conj { z.conj() } else { z };
            }
            acc += term;
            abs_acc += term.norm();
        }
        let tolerance = TOL_EVAL_RESIDUE * abs_acc + 1e-12;
        if acc.im.abs() > tolerance {
            return Err(ChaosError::ResidueExceeded {
                residue: acc.im.abs(),
                tolerance,
            });
        }
        Ok(acc.re)
    }
}

fn check_colours(colours: &[usize], field_dim: usize) -> Result<(), ChaosError> {
    for &j in colours {
        if j >= field_dim {
            return Err(ChaosError::ColourOutOfRange(j, field_dim));
        }
    }
    Ok(())
}

fn fill_tensor(
    system: &RegularSystem,
    factors: &[CellFunction],
    tuple: &mut Vec<i64>,
    depth: usize,
    partial: Complex64,
    values: &mut BTreeMap<Vec<i64>, Complex64>,
) {
    if depth == factors.len() {
        if !is_diagonal(tuple) && partial != Complex64::new(0.0, 0.0) {
            values.insert(tuple.clone(), partial);
        }
        return;
    }
    for k in system.signed_indices() {
        tuple[depth] = k;
        let v = factors[depth].value(k);
        if v == Complex64::new(0.0, 0.0) {
            continue;
        }
        fill_tensor(system, factors, tuple, depth + 1, partial * v, values);
    }
}

fn fill_from_fn(
    system: &RegularSystem,
    indices: &[i64],
    f: &impl Fn(&[&[f64]]) -> Complex64,
    tuple: &mut Vec<i64>,
    depth: usize,
    values: &mut BTreeMap<Vec<i64>, Complex64>,
) {
    if depth == tuple.len() {
        if !is_diagonal(tuple) {
            let points: Vec<&[f64]> = tuple.iter().map(|&k| system.representative(k)).collect();
            let v = f(&points);
            if v != Complex64::new(0.0, 0.0) {
                values.insert(tuple.clone(), v);
            }
        }
        return;
    }
    for &k in indices {
        tuple[depth] = k;
        fill_from_fn(system, indices, f, tuple, depth + 1, values);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmatrix::CMatrix;
    use crate::grid::build_symmetric_grid;
    use crate::montecarlo::mc_mean;
    use crate::sampler::Sampler;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn scalar_measure(cells: usize, mass: f64) -> Arc<MatrixSpectralMeasure> {
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![cells]).unwrap());
        let n = sys.half_count();
        Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys,
                1,
                vec![CMatrix::from_real_rows(1, &[mass]); n],
            )
            .unwrap(),
        )
    }

    #[test]
    fn permutations_are_lexicographic() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
    }

    #[test]
    fn tensor_on_two_cells_is_identically_zero_for_n2() {
        let g = scalar_measure(2, 0.5);
        let one = CellFunction::one(g.system().clone());
        let k = SimpleKernel::tensor(&[one.clone(), one], &[0, 0], 1).unwrap();
        assert_eq!(k.support_len(), 0);
    }

    #[test]
    fn tensor_support_counts_nondiagonal_tuples() {
        let g = scalar_measure(4, 0.5);
        let one = CellFunction::one(g.system().clone());
        let k = SimpleKernel::tensor(&[one.clone(), one], &[0, 0], 1).unwrap();
        // 4 cells, second index must avoid ±k₁: 4 · 2 = 8 tuples
        assert_eq!(k.support_len(), 8);
    }

    #[test]
    fn order_one_tensor_is_the_factor() {
        let g = scalar_measure(4, 0.5);
        let phi = CellFunction::exp_lag(g.system().clone(), &[2]);
        let k = SimpleKernel::tensor(&[phi.clone()], &[0], 1).unwrap();
        for idx in g.system().signed_indices() {
            assert_eq!(k.value(&[idx]), phi.value(idx));
        }
    }

    #[test]
    fn evaluate_order_one_indicator_is_real_pair_sum() {
        let g = scalar_measure(4, 0.5);
        let sampler = Sampler::new(g.clone()).unwrap();
        let s = sampler.draw(3, 0);
        let sys = g.system().clone();
        let ind = CellFunction::from_positive(
            sys.clone(),
            (1..=sys.half_count() as i64)
                .map(|k| {
                    if k == 1 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect(),
        )
        .unwrap();
        let kernel = SimpleKernel::tensor(&[ind], &[0], 1).unwrap();
        let v = kernel.evaluate(&s).unwrap();
        let expected = s.value(0, 1) + s.value(0, -1);
        assert_eq!(expected.im, 0.0);
        assert_relative_eq!(v, expected.re, max_relative = 1e-12);
    }

    #[test]
    fn evaluate_matches_hand_expansion_order_two() {
        let g = scalar_measure(4, 0.5);
        let sampler = Sampler::new(g.clone()).unwrap();
        let s = sampler.draw(5, 2);
        // symmetrized indicator of (1,2)
        let mut entries = BTreeMap::new();
        entries.insert(vec![1i64, 2], Complex64::new(1.0, 0.0));
        entries.insert(vec![-1i64, -2], Complex64::new(1.0, 0.0));
        let kernel =
            SimpleKernel::from_entries(g.system().clone(), &[0, 0], 1, entries).unwrap();
        let v = kernel.evaluate(&s).unwrap();
        let z = s.value(0, 1) * s.value(0, 2);
        let hand = z + z.conj();
        assert_relative_eq!(v, hand.re, max_relative = 1e-12);
    }

    #[test]
    fn zero_kernel_evaluates_to_zero() {
        let g = scalar_measure(4, 0.5);
        let sampler = Sampler::new(g.clone()).unwrap();
        let s = sampler.draw(1, 0);
        let kernel = SimpleKernel::constant(g.system().clone(), 1, Complex64::new(0.0, 0.0));
        assert_eq!(kernel.evaluate(&s).unwrap(), 0.0);
    }

    #[test]
    fn analytic_covariance_order_one_matches_cross_moment_formula() {
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![4]).unwrap());
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys.clone(),
                2,
                vec![
                    CMatrix::from_real_rows(2, &[0.4, 0.1, 0.1, 0.3]),
                    CMatrix::from_real_rows(2, &[0.2, -0.05, -0.05, 0.6]),
                ],
            )
            .unwrap(),
        );
        let phi = CellFunction::exp_lag(sys.clone(), &[1]);
        let psi = CellFunction::exp_lag(sys.clone(), &[3]);
        let f = SimpleKernel::tensor(&[phi.clone()], &[0], 2).unwrap();
        let h = SimpleKernel::tensor(&[psi.clone()], &[1], 2).unwrap();
        let cov = f.analytic_covariance(&h, &g).unwrap();
        let direct: Complex64 = sys
            .signed_indices()
            .map(|k| phi.value(k) * psi.value(k).conj() * g.entry(k, 0, 1))
            .sum();
        assert_relative_eq!(cov, direct.re, max_relative = 1e-12);
    }

    #[test]
    fn covariance_monte_carlo_agreement_order_two() {
        let g = scalar_measure(4, 0.4);
        let sampler = Sampler::new(g.clone()).unwrap();
        let phi = CellFunction::exp_lag(g.system().clone(), &[1]);
        let psi = CellFunction::exp_lag(g.system().clone(), &[2]);
        let f = SimpleKernel::tensor(&[phi, psi], &[0, 0], 1).unwrap();
        let analytic = f.analytic_covariance(&f, &g).unwrap();
        let est = mc_mean(100_000, |r| {
            let v = f.evaluate(&sampler.draw(23, r)).unwrap();
            v * v
        });
        assert!(
            (est.mean - analytic).abs() < 3.0 * est.std_error,
            "MC {} vs analytic {} (se {})",
            est.mean,
            analytic,
            est.std_error
        );
        // zero mean
        let mean = mc_mean(100_000, |r| f.evaluate(&sampler.draw(23, r)).unwrap());
        assert!(mean.mean.abs() < 3.0 * mean.std_error);
    }

    #[test]
    fn cross_order_covariance_is_zero() {
        let g = scalar_measure(4, 0.4);
        let sampler = Sampler::new(g.clone()).unwrap();
        let phi = CellFunction::exp_lag(g.system().clone(), &[1]);
        let f1 = SimpleKernel::tensor(&[phi.clone()], &[0], 1).unwrap();
        let f2 = SimpleKernel::tensor(&[phi.clone(), phi], &[0, 0], 1).unwrap();
        assert_eq!(f1.analytic_covariance(&f2, &g).unwrap(), 0.0);
        let est = mc_mean(100_000, |r| {
            let s = sampler.draw(31, r);
            f1.evaluate(&s).unwrap() * f2.evaluate(&s).unwrap()
        });
        assert!(est.mean.abs() < 3.0 * est.std_error);
    }

    #[test]
    fn second_moment_bound_holds_and_is_tight_for_order_one() {
        let g = scalar_measure(4, 0.4);
        let phi = CellFunction::exp_lag(g.system().clone(), &[1]);
        let f = SimpleKernel::tensor(&[phi], &[0], 1).unwrap();
        let cov = f.analytic_covariance(&f, &g).unwrap();
        let bound = f.second_moment_bound(&g);
        assert_relative_eq!(cov, bound, max_relative = 1e-12);
        let psi = CellFunction::exp_lag(g.system().clone(), &[2]);
        let f2 = SimpleKernel::tensor(
            &[
                CellFunction::exp_lag(g.system().clone(), &[1]),
                psi,
            ],
            &[0, 0],
            1,
        )
        .unwrap();
        let cov2 = f2.analytic_covariance(&f2, &g).unwrap();
        assert!(cov2 <= f2.second_moment_bound(&g) + 1e-10);
    }

    #[test]
    fn permuted_kernel_integrates_identically() {
        let g = scalar_measure(4, 0.5);
        let sampler = Sampler::new(g.clone()).unwrap();
        let phi = CellFunction::exp_lag(g.system().clone(), &[1]);
        let psi = CellFunction::exp_lag(g.system().clone(), &[2]);
        let f = SimpleKernel::tensor(&[phi, psi], &[0, 0], 1).unwrap();
        let swapped = f.permuted(&[1, 0]).unwrap();
        for r in 0..10 {
            let s = sampler.draw(41, r);
            let a = f.evaluate(&s).unwrap();
            let b = swapped.evaluate(&s).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        // identity permutation returns an identical table
        let same = f.permuted(&[0, 1]).unwrap();
        assert_eq!(same.table_distance(&f).unwrap(), 0.0);
        assert!(f.permuted(&[0, 0]).is_err());
    }

    #[test]
    fn covariance_is_symmetric() {
        let g = scalar_measure(4, 0.3);
        let a = SimpleKernel::tensor(
            &[
                CellFunction::exp_lag(g.system().clone(), &[1]),
                CellFunction::exp_lag(g.system().clone(), &[2]),
            ],
            &[0, 0],
            1,
        )
        .unwrap();
        let b = SimpleKernel::tensor(
            &[
                CellFunction::exp_lag(g.system().clone(), &[2]),
                CellFunction::exp_lag(g.system().clone(), &[3]),
            ],
            &[0, 0],
            1,
        )
        .unwrap();
        let ab = a.analytic_covariance(&b, &g).unwrap();
        let ba = b.analytic_covariance(&a, &g).unwrap();
        assert_relative_eq!(ab, ba, epsilon = 1e-12);
    }

    #[test]
    fn colour_out_of_range_is_rejected() {
        let g = scalar_measure(2, 0.5);
        let one = CellFunction::one(g.system().clone());
        let err = SimpleKernel::tensor(&[one], &[1], 1).unwrap_err();
        assert!(matches!(err, ChaosError::ColourOutOfRange(1, 1)));
    }
}
