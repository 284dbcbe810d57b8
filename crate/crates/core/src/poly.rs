//! Real polynomial algebra over a finite family of centered jointly
//! Gaussian coordinates, with exact moments by pairing sums.
//!
//! Monomials are sorted (variable, exponent) lists; polynomials are
//! coefficient maps. The expectation of a monomial under the Gaussian law
//! is the sum over perfect matchings of the flattened variable multiset
//! of products of covariances, so every inner product used by the Wick
//! machinery is computed exactly (up to rounding), not by quadrature.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::linalg::SymMatrix;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("degree {0} exceeds the configured maximum {1}")]
    DegreeOverflow(usize, usize),
    #[error("variable {0} out of range for {1} base coordinates")]
    VariableOutOfRange(usize, usize),
}

/// Sorted (variable, exponent) pairs with positive exponents.
pub type Monomial = Vec<(usize, u32)>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Polynomial::default();
        if c != 0.0 {
            p.terms.insert(Vec::new(), c);
        }
        p
    }

    pub fn variable(v: usize) -> Self {
        let mut p = Polynomial::default();
        p.terms.insert(vec![(v, 1)], 1.0);
        p
    }

    /// `Σ c_i x_{v_i}`.
    pub fn linear(coeffs: &[(usize, f64)]) -> Self {
        let mut p = Polynomial::default();
        for &(v, c) in coeffs {
            if c != 0.0 {
                let e = p.terms.entry(vec![(v, 1)]).or_insert(0.0);
                *e += c;
            }
        }
        p.prune();
        p
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &f64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|m| m.iter().map(|&(_, e)| e as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn is_linear(&self) -> bool {
        self.degree() <= 1 && self.terms.keys().all(|m| !m.is_empty() || false)
            && !self.terms.contains_key(&Vec::new())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0f64, |m, &c| m.max(c.abs()))
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| *c != 0.0);
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            *out.terms.entry(m.clone()).or_insert(0.0) += c;
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero();
        }
        Polynomial {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::default();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                let m = merge_monomials(m1, m2);
                *out.terms.entry(m).or_insert(0.0) += c1 * c2;
            }
        }
        out.prune();
        out
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut out = Polynomial::constant(1.0);
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Substitutes `vars[v]` for variable `v`.
    pub fn compose(&self, vars: &[Polynomial]) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m, &c) in &self.terms {
            let mut term = Polynomial::constant(c);
            for &(v, e) in m {
                term = term.mul(&vars[v].pow(e));
            }
            out = out.add(&term);
        }
        out
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (m, &c) in &self.terms {
            let mut t = c;
            for &(v, e) in m {
                t *= values[v].powi(e as i32);
            }
            acc += t;
        }
        acc
    }

    /// Sup-norm of the coefficient difference.
    pub fn coeff_distance(&self, other: &Polynomial) -> f64 {
        let mut worst = 0.0f64;
        for (m, c) in &self.terms {
            worst = worst.max((c - other.terms.get(m).copied().unwrap_or(0.0)).abs());
        }
        for (m, c) in &other.terms {
            worst = worst.max((c - self.terms.get(m).copied().unwrap_or(0.0)).abs());
        }
        worst
    }
}

fn merge_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out: Monomial = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j].0 < a[i].0 {
            out.push(b[j]);
            j += 1;
        } else {
            out.push((a[i].0, a[i].1 + b[j].1));
            i += 1;
            j += 1;
        }
    }
    out
}

/// Default bound on expression degree.
pub const DEFAULT_MAX_DEGREE: usize = 8;

/// A finite family of centered jointly Gaussian coordinates with a given
/// covariance, providing exact expectations of polynomials in them.
#[derive(Debug, Clone)]
pub struct GaussianSpace {
    cov: SymMatrix,
    max_degree: usize,
}

impl GaussianSpace {
    pub fn new(cov: SymMatrix) -> Self {
        GaussianSpace {
            cov,
            max_degree: DEFAULT_MAX_DEGREE,
        }
    }

    pub fn with_max_degree(cov: SymMatrix, max_degree: usize) -> Self {
        GaussianSpace { cov, max_degree }
    }

    pub fn base_dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn covariance(&self, a: usize, b: usize) -> f64 {
        self.cov.get(a, b)
    }

    /// Exact expectation of a polynomial in the base coordinates.
    ///
    /// Expressions are bounded by the configured degree; products of two
    /// bounded expressions (as they arise in inner products) are allowed.
    pub fn moment(&self, poly: &Polynomial) -> Result<f64, PolyError> {
        let deg = poly.degree();
        if deg > 2 * self.max_degree {
            return Err(PolyError::DegreeOverflow(deg, 2 * self.max_degree));
        }
        let mut acc = 0.0;
        for (m, &c) in poly.terms() {
            for &(v, _) in m {
                if v >= self.cov.dim() {
                    return Err(PolyError::VariableOutOfRange(v, self.cov.dim()));
                }
            }
            acc += c * self.monomial_moment(m);
        }
        Ok(acc)
    }

    fn monomial_moment(&self, m: &Monomial) -> f64 {
        let mut vars: Vec<usize> = Vec::new();
        for &(v, e) in m {
            for _ in 0..e {
                vars.push(v);
            }
        }
        if vars.len() % 2 != 0 {
            return 0.0;
        }
        pairing_sum(&vars, &self.cov)
    }

    /// `E[a · b]`, the Gaussian inner product.
    pub fn inner(&self, a: &Polynomial, b: &Polynomial) -> Result<f64, PolyError> {
        self.moment(&a.mul(b))
    }
}

fn pairing_sum(vars: &[usize], cov: &SymMatrix) -> f64 {
    if vars.is_empty() {
        return 1.0;
    }
    let first = vars[0];
    let rest = &vars[1..];
    let mut acc = 0.0;
    for (i, &other) in rest.iter().enumerate() {
        let c = cov.get(first, other);
        if c == 0.0 {
            continue;
        }
        let mut remaining = Vec::with_capacity(rest.len() - 1);
        remaining.extend_from_slice(&rest[..i]);
        remaining.extend_from_slice(&rest[i + 1..]);
        acc += c * pairing_sum(&remaining, cov);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn space(cov: Vec<f64>, dim: usize) -> GaussianSpace {
        GaussianSpace::new(SymMatrix::from_rows(dim, cov))
    }

    #[test]
    fn linear_moments_vanish() {
        let s = space(vec![2.0], 1);
        let p = Polynomial::linear(&[(0, 3.0)]);
        assert_eq!(s.moment(&p).unwrap(), 0.0);
    }

    #[test]
    fn fourth_moment_has_three_pairings() {
        let s = space(vec![1.7], 1);
        let p = Polynomial::variable(0).pow(4);
        assert_relative_eq!(s.moment(&p).unwrap(), 3.0 * 1.7 * 1.7, epsilon = 1e-12);
    }

    #[test]
    fn odd_triple_product_vanishes() {
        let s = space(vec![1.0, 0.3, 0.2, 0.3, 1.0, -0.4, 0.2, -0.4, 1.0], 3);
        let p = Polynomial::variable(0)
            .mul(&Polynomial::variable(1))
            .mul(&Polynomial::variable(2));
        assert_eq!(s.moment(&p).unwrap(), 0.0);
    }

    #[test]
    fn isserlis_for_two_pairs() {
        let s = space(vec![1.0, 0.5, 0.5, 1.0], 2);
        // E[x0^2 x1^2] = c00 c11 + 2 c01^2
        let p = Polynomial::variable(0).pow(2).mul(&Polynomial::variable(1).pow(2));
        assert_relative_eq!(s.moment(&p).unwrap(), 1.0 + 2.0 * 0.25, epsilon = 1e-12);
    }

    #[test]
    fn compose_matches_direct_expansion() {
        // (x0 + 2 x1)^2 composed == expanded
        let u = Polynomial::linear(&[(0, 1.0), (1, 2.0)]);
        let sq = u.mul(&u);
        let re = Polynomial::variable(0).pow(2).compose(&[u.clone(), Polynomial::zero()]);
        assert_eq!(sq.coeff_distance(&re), 0.0);
        assert_relative_eq!(sq.evaluate(&[1.0, 0.5]), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn degree_overflow_is_rejected() {
        let s = GaussianSpace::with_max_degree(SymMatrix::from_rows(1, vec![1.0]), 2);
        let p = Polynomial::variable(0).pow(5);
        assert!(matches!(s.moment(&p), Err(PolyError::DegreeOverflow(5, 4))));
    }
}
