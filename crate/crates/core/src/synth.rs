//! Randomized measures, cell functions, and kernels for the verification
//! suites, plus density-defined measures whose discretizations refine
//! consistently.
//!
//! Random mass matrices are built as `B B*` so they are positive
//! semidefinite by construction; cell functions and densities are
//! trigonometric with real coefficients, which is exactly the class with
//! the conjugation symmetry `f(-x) = conj(f(x))`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cellfn::CellFunction;
use crate::chaos::{is_diagonal, SimpleKernel};
use crate::cmatrix::CMatrix;
use crate::grid::RegularSystem;
use crate::spectral::MatrixSpectralMeasure;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random Hermitian positive semidefinite matrix `B B*` with entries of
/// typical size `scale`.
pub fn random_psd_matrix(d: usize, scale: f64, rng: &mut impl Rng) -> CMatrix {
    let mut b = CMatrix::zeros(d);
    for r in 0..d {
        for c in 0..d {
            b.set(
                r,
                c,
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
        }
    }
    let mut out = CMatrix::zeros(d);
    for r in 0..d {
        for c in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..d {
                acc += b.get(r, k) * b.get(c, k).conj();
            }
            out.set(r, c, acc * (scale / d as f64));
        }
    }
    out
}

/// A random valid measure: independent psd masses on the positive cells,
/// scaled so the total trace is `total_mass`.
pub fn random_measure(
    system: Arc<RegularSystem>,
    field_dim: usize,
    total_mass: f64,
    rng: &mut impl Rng,
) -> Arc<MatrixSpectralMeasure> {
    let half = system.half_count();
    let mut masses: Vec<CMatrix> = (0..half)
        .map(|_| random_psd_matrix(field_dim, 1.0, rng))
        .collect();
    let trace: f64 = masses.iter().map(|m| m.trace().re).sum::<f64>() * 2.0;
    let norm = total_mass / trace.max(1e-12);
    for m in &mut masses {
        *m = m.scale(norm);
    }
    Arc::new(
        MatrixSpectralMeasure::from_positive_masses(system, field_dim, masses)
            .expect("constructed masses have the right shape"),
    )
}

/// A trigonometric polynomial `Σ_p a_p e^{i⟨p, x⟩}` with real
/// coefficients, so `f(-x) = conj(f(x))`. Reusable across grids: the
/// same function sampled on a refinement stays the same function.
#[derive(Debug, Clone)]
pub struct TrigFn {
    terms: Vec<(Vec<i64>, f64)>,
}

impl TrigFn {
    pub fn random(dim: usize, max_freq: i64, rng: &mut impl Rng) -> Self {
        let mut terms: Vec<(Vec<i64>, f64)> = Vec::new();
        let mut lattice = vec![-max_freq; dim];
        loop {
            terms.push((lattice.clone(), rng.gen_range(-1.0..1.0)));
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break;
                }
                axis -= 1;
                lattice[axis] += 1;
                if lattice[axis] <= max_freq {
                    break;
                }
                lattice[axis] = -max_freq;
            }
            if lattice.iter().all(|&v| v == -max_freq) {
                break;
            }
        }
        TrigFn { terms }
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, a) in &self.terms {
            let theta: f64 = p.iter().zip(x).map(|(&pi, &xi)| pi as f64 * xi).sum();
            acc += Complex64::new(theta.cos() * a, theta.sin() * a);
        }
        acc
    }

    pub fn cellfn(&self, system: Arc<RegularSystem>) -> CellFunction {
        let f = self.clone();
        CellFunction::from_fn(system, move |x| f.eval(x))
    }
}

/// A random trigonometric cell function on one grid.
pub fn random_trig_cellfn(
    system: Arc<RegularSystem>,
    max_freq: i64,
    rng: &mut impl Rng,
) -> CellFunction {
    TrigFn::random(system.dim(), max_freq, rng).cellfn(system)
}

/// A function constant on the cells of a fixed coarse system, with
/// `f(-x) = conj(f(x))`. Restricting it to any refinement reproduces the
/// same simple function, so refinement sweeps hold the integrand fixed
/// while the partition shrinks.
#[derive(Debug, Clone)]
pub struct PiecewiseFn {
    coarse: Arc<RegularSystem>,
    positive_values: Vec<Complex64>,
}

impl PiecewiseFn {
    pub fn new(coarse: Arc<RegularSystem>, positive_values: Vec<Complex64>) -> Self {
        assert_eq!(positive_values.len(), coarse.half_count());
        PiecewiseFn {
            coarse,
            positive_values,
        }
    }

    /// Random complex values on the positive cells.
    pub fn random(coarse: Arc<RegularSystem>, rng: &mut impl Rng) -> Self {
        let values = (0..coarse.half_count())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        PiecewiseFn::new(coarse, values)
    }

    /// Random values on the positive cells whose first coordinate lies in
    /// `[lo, hi)`, zero elsewhere. Factors on disjoint bands build tensor
    /// kernels that lose nothing to the diagonal rule, so their norms are
    /// exactly refinement-invariant.
    pub fn random_banded(
        coarse: Arc<RegularSystem>,
        lo: f64,
        hi: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let values = coarse
            .positive_indices()
            .map(|k| {
                let u = coarse.representative(k)[0];
                if u >= lo && u < hi {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        PiecewiseFn::new(coarse, values)
    }

    /// Value at a point with positive first coordinate.
    fn positive_value_at(&self, x: &[f64]) -> Complex64 {
        for k in self.coarse.positive_indices() {
            if self.coarse.cell(k).contains(x) {
                return self.positive_values[(k - 1) as usize];
            }
        }
        Complex64::new(0.0, 0.0)
    }

    /// The restriction to a refinement of the coarse system (or the
    /// coarse system itself).
    pub fn cellfn(&self, fine: Arc<RegularSystem>) -> CellFunction {
        let positive: Vec<Complex64> = fine
            .positive_indices()
            .map(|k| self.positive_value_at(fine.representative(k)))
            .collect();
        CellFunction::from_positive(fine, positive).expect("length matches")
    }
}

/// A random real symmetric positive definite matrix `B Bᵀ + 0.1·I`. The
/// ridge bounds the condition number so randomized polynomial-algebra
/// suites stay numerically well posed; exact degeneracies are exercised
/// by dedicated tests instead.
pub fn random_real_psd(dim: usize, rng: &mut impl Rng) -> crate::linalg::SymMatrix {
    let b: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = crate::linalg::SymMatrix::zeros(dim);
    for r in 0..dim {
        for c in 0..dim {
            let mut acc = 0.0;
            for k in 0..dim {
                acc += b[r * dim + k] * b[c * dim + k];
            }
            out.set(r, c, acc + if r == c { 0.1 } else { 0.0 });
        }
    }
    out
}

/// A random simple kernel: values on canonical nondiagonal tuples with
/// the conjugate assigned to the negation.
pub fn random_kernel(
    system: Arc<RegularSystem>,
    colours: &[usize],
    field_dim: usize,
    rng: &mut impl Rng,
) -> SimpleKernel {
    let order = colours.len();
    let indices: Vec<i64> = system.signed_indices().collect();
    let mut entries: Vec<(Vec<i64>, Complex64)> = Vec::new();
    let mut tuple = vec![0i64; order];
    fn recurse(
        indices: &[i64],
        tuple: &mut Vec<i64>,
        depth: usize,
        rng: &mut impl Rng,
        entries: &mut Vec<(Vec<i64>, Complex64)>,
    ) {
        if depth == tuple.len() {
            if is_diagonal(tuple) {
                return;
            }
            let neg: Vec<i64> = tuple.iter().map(|k| -k).collect();
            // canonical representative: lexicographically above its negation
            if *tuple > neg {
                let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                entries.push((tuple.clone(), v));
                entries.push((neg, v.conj()));
            }
            return;
        }
        for &k in indices {
            tuple[depth] = k;
            recurse(indices, tuple, depth + 1, rng, entries);
        }
    }
    recurse(&indices, &mut tuple, 0, rng, &mut entries);
    SimpleKernel::from_entries(system, colours, field_dim, entries)
        .expect("canonical construction is conjugation-symmetric")
}

/// A matrix-valued density `x ↦ g(x)` with `g(-x) = conj(g(x))` and
/// `g(x)` positive semidefinite, together with midpoint discretization.
#[derive(Clone)]
pub struct MatrixDensity {
    field_dim: usize,
    f: Arc<dyn Fn(&[f64]) -> CMatrix + Send + Sync>,
}

impl MatrixDensity {
    pub fn new(field_dim: usize, f: impl Fn(&[f64]) -> CMatrix + Send + Sync + 'static) -> Self {
        MatrixDensity {
            field_dim,
            f: Arc::new(f),
        }
    }

    pub fn field_dim(&self) -> usize {
        self.field_dim
    }

    pub fn value(&self, x: &[f64]) -> CMatrix {
        (self.f)(x)
    }

    /// Midpoint-rule masses `g(u_k)·vol(Δ_k)` on the positive cells,
    /// conjugated onto the negative ones.
    pub fn discretize(&self, system: Arc<RegularSystem>) -> Arc<MatrixSpectralMeasure> {
        let masses: Vec<CMatrix> = system
            .positive_indices()
            .map(|k| {
                let vol = system.cell(k).volume();
                self.value(system.representative(k)).scale(vol)
            })
            .collect();
        Arc::new(
            MatrixSpectralMeasure::from_positive_masses(system, self.field_dim, masses)
                .expect("mass count matches"),
        )
    }

    /// Cell-averaged masses via `refine^ν` midpoint subdivisions; exact
    /// in the limit for integrable densities.
    pub fn discretize_averaged(
        &self,
        system: Arc<RegularSystem>,
        refine: usize,
    ) -> Arc<MatrixSpectralMeasure> {
        let fine = Arc::new(system.refine(refine).expect("factor >= 1"));
        let masses: Vec<CMatrix> = system
            .positive_indices()
            .map(|k| {
                let children = system.children_in(k, &fine);
                let mut acc = CMatrix::zeros(self.field_dim);
                for child in children {
                    let vol = fine.cell(child).volume();
                    acc = acc.add(&self.value(fine.representative(child)).scale(vol));
                }
                acc
            })
            .collect();
        Arc::new(
            MatrixSpectralMeasure::from_positive_masses(system, self.field_dim, masses)
                .expect("mass count matches"),
        )
    }
}

/// A random even psd density `A(x) A(x)* + ridge·I` where the entries of
/// `A` are trigonometric polynomials with real coefficients.
pub fn random_even_density(field_dim: usize, dim: usize, ridge: f64, seed: u64) -> MatrixDensity {
    let mut rng = rng(seed);
    // frequencies in {-1, 0, 1}^dim, one coefficient set per matrix entry
    let mut freqs: Vec<Vec<i64>> = Vec::new();
    let mut lattice = vec![-1i64; dim];
    loop {
        freqs.push(lattice.clone());
        let mut axis = dim;
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            lattice[axis] += 1;
            if lattice[axis] <= 1 {
                break;
            }
            lattice[axis] = -1;
        }
        if lattice.iter().all(|&v| v == -1) {
            break;
        }
    }
    let coeffs: Vec<Vec<Vec<f64>>> = (0..field_dim)
        .map(|_| {
            (0..field_dim)
                .map(|_| freqs.iter().map(|_| rng.gen_range(-0.5..0.5)).collect())
                .collect()
        })
        .collect();
    let freqs = Arc::new(freqs);
    MatrixDensity::new(field_dim, move |x| {
        let mut a = CMatrix::zeros(field_dim);
        for r in 0..field_dim {
            for c in 0..field_dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for (p, &co) in freqs.iter().zip(&coeffs[r][c]) {
                    let theta: f64 = p.iter().zip(x).map(|(&pi, &xi)| pi as f64 * xi).sum();
                    acc += Complex64::new(theta.cos() * co, theta.sin() * co);
                }
                a.set(r, c, acc);
            }
        }
        let mut g = CMatrix::zeros(field_dim);
        for r in 0..field_dim {
            for c in 0..field_dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..field_dim {
                    acc += a.get(r, k) * a.get(c, k).conj();
                }
                if r == c {
                    acc += Complex64::new(ridge, 0.0);
                }
                g.set(r, c, acc);
            }
        }
        g
    })
}
