//! Wick products of jointly Gaussian variables and their bridge to
//! multiple stochastic integrals.
//!
//! Two independent routes compute the same object:
//!
//! * [`wick_project`] is the definition made executable: project the
//!   product `U₁⋯U_n` onto the orthogonal complement of all polynomials
//!   of degree < n in the factors, using exact Gaussian moments as the
//!   inner product. Slow, assumption-free; this is the test oracle.
//! * [`wick_expand`] orthonormalizes the factors, rewrites the product
//!   in the orthonormal variables and replaces each power `ξ^l` by the
//!   monic Hermite polynomial `H_l(ξ)`. Fast; this is the path the
//!   scaling-limit harness uses.
//!
//! The product of a Wick product with one more factor satisfies the
//! recursion
//! `:U₁⋯U_n:·U_{n+1} = :U₁⋯U_{n+1}: + Σ_s :Π_{r≠s} U_r:·E[U_s U_{n+1}]`,
//! and a Wick product of one-fold integrals equals the n-fold integral
//! of the tensor product of their kernels, at grid level only up to the
//! zeroed diagonal, so the two sides are exposed as a pair whose
//! mean-square gap must shrink under refinement rather than vanish.

use std::sync::Arc;

use thiserror::Error;

use crate::cellfn::CellFunction;
use crate::chaos::{ChaosError, SimpleKernel};
use crate::linalg::SymMatrix;
use crate::montecarlo::{mc_samples, summarize, McEstimate};
use crate::poly::{GaussianSpace, Polynomial, PolyError};
use crate::sampler::{Sampler, SamplerError, SpectralSample};
use crate::spectral::MatrixSpectralMeasure;

#[derive(Debug, Error)]
pub enum WickError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("wick factors must be linear in the base coordinates")]
    NotLinear,
    #[error("{0} factors exceed the configured degree bound {1}")]
    TooManyFactors(usize, usize),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Tolerance for dropping linearly dependent factors and for the
/// pseudo-inverse cutoff of the projection Gram matrix.
pub const TOL_RANK: f64 = 1e-10;

/// Monic Hermite value by the three-term recursion
/// `H_n(x) = x·H_{n-1}(x) - (n-1)·H_{n-2}(x)`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let mut prev = 0.0; // H_{-1}
    let mut cur = 1.0; // H_0
    for k in 1..=n {
        let next = x * cur - (k as f64 - 1.0) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Coefficients of the monic Hermite polynomial, constant term first.
pub fn hermite_coeffs(n: usize) -> Vec<f64> {
    let mut prev = vec![0.0]; // H_{-1}
    let mut cur = vec![1.0]; // H_0
    for k in 1..=n {
        let mut next = vec![0.0; k + 1];
        for (i, &c) in cur.iter().enumerate() {
            next[i + 1] += c;
        }
        for (i, &c) in prev.iter().enumerate() {
            next[i] -= (k as f64 - 1.0) * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

fn check_factors(space: &GaussianSpace, factors: &[Polynomial]) -> Result<(), WickError> {
    if factors.len() > space.max_degree() {
        return Err(WickError::TooManyFactors(factors.len(), space.max_degree()));
    }
    for f in factors {
        if f.degree() > 1 || f.terms().any(|(m, _)| m.is_empty()) {
            return Err(WickError::NotLinear);
        }
    }
    Ok(())
}

/// Monomial exponent vectors over `vars` variables with total degree at
/// most `max`, in deterministic order.
fn bounded_exponents(vars: usize, max: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; vars];
    fn recurse(pos: usize, left: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == current.len() {
            out.push(current.clone());
            return;
        }
        for e in 0..=left {
            current[pos] = e as u32;
            recurse(pos + 1, left - e, current, out);
        }
        current[pos] = 0;
    }
    recurse(0, max, &mut current, &mut out);
    out
}

/// The projection oracle: `:U₁⋯U_n:` as the component of the product
/// orthogonal to every polynomial of degree ≤ n-1 in the factors,
/// computed with a pseudo-inverse so linearly dependent factors are fine.
pub fn wick_project(space: &GaussianSpace, factors: &[Polynomial]) -> Result<Polynomial, WickError> {
    check_factors(space, factors)?;
    let n = factors.len();
    let mut product = Polynomial::constant(1.0);
    for f in factors {
        product = product.mul(f);
    }
    if n == 0 {
        return Ok(product);
    }

    // basis of the lower-degree subspace: monomials in the factors of
    // total degree <= n-1, expanded into base coordinates
    let mut basis: Vec<Polynomial> = Vec::new();
    for expo in bounded_exponents(n, n - 1) {
        let mut b = Polynomial::constant(1.0);
        for (i, &e) in expo.iter().enumerate() {
            if e > 0 {
                b = b.mul(&factors[i].pow(e));
            }
        }
        basis.push(b);
    }

    // orthonormalize the basis; the raw monomial Gram matrix is badly
    // conditioned, so use modified Gram–Schmidt with a second pass and
    // drop dependent directions
    let mut ortho: Vec<Polynomial> = Vec::new();
    for b in &basis {
        let scale = space.inner(b, b)?.max(0.0).sqrt().max(1.0);
        let mut residual = b.clone();
        for _ in 0..2 {
            for q in &ortho {
                let c = space.inner(&residual, q)?;
                residual = residual.sub(&q.scale(c));
            }
        }
        let norm = space.inner(&residual, &residual)?.max(0.0).sqrt();
        if norm > TOL_RANK * scale {
            ortho.push(residual.scale(1.0 / norm));
        }
    }

    // subtract the projection onto the lower-degree subspace, with a
    // second sweep to clear the rounding left by the first
    let mut result = product;
    for _ in 0..2 {
        for q in &ortho {
            let c = space.inner(&result, q)?;
            result = result.sub(&q.scale(c));
        }
    }
    Ok(result)
}

/// The closed-form path: orthonormalize the span of the factors, rewrite
/// the product in the orthonormal variables, and replace each monomial
/// `Π ξ_p^{l_p}` by `Π H_{l_p}(ξ_p)`.
pub fn wick_expand(space: &GaussianSpace, factors: &[Polynomial]) -> Result<Polynomial, WickError> {
    check_factors(space, factors)?;
    let n = factors.len();
    if n == 0 {
        return Ok(Polynomial::constant(1.0));
    }

    // Gram–Schmidt with dependent directions dropped
    let mut ortho: Vec<Polynomial> = Vec::new();
    for f in factors {
        let mut residual = f.clone();
        for xi in &ortho {
            let c = space.inner(&residual, xi)?;
            residual = residual.sub(&xi.scale(c));
        }
        let norm = space.inner(&residual, &residual)?.max(0.0).sqrt();
        let scale = space.inner(f, f)?.max(0.0).sqrt().max(1.0);
        if norm > TOL_RANK * scale {
            ortho.push(residual.scale(1.0 / norm));
        }
    }
    let rank = ortho.len();

    // coordinates of each factor in the orthonormal frame
    let mut coords = vec![vec![0.0; rank]; n];
    for (s, f) in factors.iter().enumerate() {
        for (p, xi) in ortho.iter().enumerate() {
            coords[s][p] = space.inner(f, xi)?;
        }
    }

    // product in abstract orthonormal variables y_0..y_{rank-1}
    let mut abstract_product = Polynomial::constant(1.0);
    for c in &coords {
        let lin = Polynomial::linear(
            &c.iter()
                .enumerate()
                .map(|(p, &v)| (p, v))
                .collect::<Vec<_>>(),
        );
        abstract_product = abstract_product.mul(&lin);
    }

    // monomial-wise Hermite substitution
    let mut hermitized = Polynomial::zero();
    for (mono, &c) in abstract_product.terms() {
        let mut term = Polynomial::constant(c);
        for &(var, exp) in mono {
            let coeffs = hermite_coeffs(exp as usize);
            let mut h = Polynomial::zero();
            for (e, &hc) in coeffs.iter().enumerate() {
                if hc != 0.0 {
                    h = h.add(&Polynomial::variable(var).pow(e as u32).scale(hc));
                }
            }
            term = term.mul(&h);
        }
        hermitized = hermitized.add(&term);
    }

    // back to base coordinates
    Ok(hermitized.compose(&ortho))
}

/// Sup-norm coefficient defect of the multiplication recursion applied to
/// `n+1` factors: both sides are assembled from [`wick_expand`] and exact
/// moments, so the defect is pure floating-point noise when the algebra
/// is right.
pub fn wick_recursion_defect(
    space: &GaussianSpace,
    factors: &[Polynomial],
) -> Result<f64, WickError> {
    assert!(factors.len() >= 2, "need n + 1 >= 2 factors");
    let n = factors.len() - 1;
    let head = &factors[..n];
    let last = &factors[n];

    let lhs = wick_expand(space, head)?.mul(last);

    let mut rhs = wick_expand(space, factors)?;
    for s in 0..n {
        let mut reduced: Vec<Polynomial> = head.to_vec();
        reduced.remove(s);
        let cov = space.inner(&factors[s], last)?;
        rhs = rhs.add(&wick_expand(space, &reduced)?.scale(cov));
    }
    Ok(lhs.coeff_distance(&rhs))
}

/// The Gaussian base space of a discretized measure: coordinates are
/// `(Re Z_j(Δ_k), Im Z_j(Δ_k))` for positive cells, block-diagonal across
/// cells with per-cell covariance `½·[[Re G, -Im G],[Im G, Re G]]`.
pub fn gaussian_base_space(measure: &MatrixSpectralMeasure) -> GaussianSpace {
    let d = measure.field_dim();
    let half = measure.system().half_count();
    let mut cov = SymMatrix::zeros(half * 2 * d);
    for k in measure.system().positive_indices() {
        let slot = (k - 1) as usize;
        let block = measure.mass(k).real_embedding();
        for a in 0..2 * d {
            for b in 0..2 * d {
                cov.set(slot * 2 * d + a, slot * 2 * d + b, 0.5 * block.get(a, b));
            }
        }
    }
    GaussianSpace::new(cov)
}

/// Base-coordinate index of `Re Z_j(Δ_k)` for positive `k`.
pub fn re_index(d: usize, k: i64, j: usize) -> usize {
    ((k - 1) as usize) * 2 * d + j
}

/// Base-coordinate index of `Im Z_j(Δ_k)` for positive `k`.
pub fn im_index(d: usize, k: i64, j: usize) -> usize {
    ((k - 1) as usize) * 2 * d + d + j
}

/// The one-fold integral `Σ_k φ(k) Z_j(Δ_k)` as a linear polynomial in
/// the base coordinates.
pub fn one_fold_polynomial(
    measure: &MatrixSpectralMeasure,
    phi: &CellFunction,
    colour: usize,
) -> Polynomial {
    let d = measure.field_dim();
    let mut coeffs = Vec::new();
    for k in measure.system().positive_indices() {
        let v = phi.value(k);
        if v.re != 0.0 {
            coeffs.push((re_index(d, k, colour), 2.0 * v.re));
        }
        if v.im != 0.0 {
            coeffs.push((im_index(d, k, colour), -2.0 * v.im));
        }
    }
    Polynomial::linear(&coeffs)
}

/// Realized base-coordinate values of one sample, in the layout of
/// [`gaussian_base_space`].
pub fn base_values(sample: &SpectralSample) -> Vec<f64> {
    let d = sample.measure().field_dim();
    let half = sample.system().half_count();
    let mut values = vec![0.0; half * 2 * d];
    for k in sample.system().positive_indices() {
        for j in 0..d {
            let z = sample.value(j, k);
            values[re_index(d, k, j)] = z.re;
            values[im_index(d, k, j)] = z.im;
        }
    }
    values
}

/// The two sides of the multivariate Itô identity for a fixed grid:
/// the Wick product of the one-fold integrals, and the n-fold integral
/// of the tensor kernel. Equal in the limit only; their mean-square gap
/// carries the mass the zeroed diagonal discards.
pub struct ItoPair {
    lhs_poly: Polynomial,
    rhs_kernel: SimpleKernel,
}

impl ItoPair {
    pub fn new(
        measure: &MatrixSpectralMeasure,
        phis: &[CellFunction],
        colours: &[usize],
    ) -> Result<Self, WickError> {
        assert_eq!(phis.len(), colours.len());
        let space = gaussian_base_space(measure);
        let factors: Vec<Polynomial> = phis
            .iter()
            .zip(colours)
            .map(|(phi, &j)| one_fold_polynomial(measure, phi, j))
            .collect();
        let lhs_poly = wick_expand(&space, &factors)?;
        let rhs_kernel = SimpleKernel::tensor(phis, colours, measure.field_dim())?;
        Ok(ItoPair {
            lhs_poly,
            rhs_kernel,
        })
    }

    pub fn kernel(&self) -> &SimpleKernel {
        &self.rhs_kernel
    }

    pub fn both_sides(&self, sample: &SpectralSample) -> Result<(f64, f64), WickError> {
        let lhs = self.lhs_poly.evaluate(&base_values(sample));
        let rhs = self.rhs_kernel.evaluate(sample)?;
        Ok((lhs, rhs))
    }
}

/// Monte Carlo `E[(lhs - rhs)²]` of the Itô pair on one grid.
pub fn ito_mean_square_gap(
    measure: &Arc<MatrixSpectralMeasure>,
    phis: &[CellFunction],
    colours: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<McEstimate, WickError> {
    let pair = ItoPair::new(measure, phis, colours)?;
    let sampler = Sampler::new(measure.clone())?;
    let rhs_eval = pair.rhs_kernel.evaluator();
    let samples = mc_samples(replicas, |r| {
        let s = sampler.draw(seed, r);
        let lhs = pair.lhs_poly.evaluate(&base_values(&s));
        let rhs = rhs_eval.evaluate(&s).unwrap();
        let d = lhs - rhs;
        d * d
    });
    Ok(summarize(&samples))
}
