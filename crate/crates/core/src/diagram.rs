//! Coloured diagrams and the product formula for multiple integrals.
//!
//! A diagram over an n-row and an m-row is a partial matching: edges join
//! row-1 to row-2 vertices, at most one edge per vertex. The product of
//! an n-fold and an m-fold integral expands into one integral per
//! diagram, whose kernel is obtained by contracting the matched variable
//! pairs against the cross measure with a sign flip on the row-2 slot:
//!
//! ```text
//! out(y₁…) = Σ_{c₁…c_g} h₁(…, v_k ↦ c_k, …) · h₂(…, w_k ↦ -c_k, …)
//!                        · Π_k G_{j_{v_k}, j'_{w_k}}(Δ_{c_k})
//! ```
//!
//! with the open row-1 slots taking the leading output variables in
//! ascending order, then the open row-2 slots. The contraction output
//! need not vanish on diagonal tuples, but the systemwide kernel type
//! requires it, so diagonals are zeroed after accumulation; the discarded
//! mass vanishes under grid refinement together with the rest of the
//! discretization error, which is what the defect sweep measures.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cellfn::CellFunction;
use crate::chaos::{is_diagonal, ChaosError, SimpleKernel};
use crate::montecarlo::{mc_samples, summarize, McEstimate};
use crate::sampler::{Sampler, SamplerError};
use crate::spectral::MatrixSpectralMeasure;

#[derive(Debug, Error)]
pub enum DiagramError {
    #[error("vertex out of range: edge ({0}, {1}) for rows of size {2} and {3}")]
    VertexOutOfRange(usize, usize, usize, usize),
    #[error("not a partial matching: repeated vertex in edge list")]
    RepeatedVertex,
    #[error("kernels live on different systems")]
    SystemMismatch,
    #[error("field dimensions differ: {0} vs {1}")]
    FieldDimMismatch(usize, usize),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// A partial matching between an n-row and an m-row, edges sorted by
/// their row-1 endpoint. Vertices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagram {
    n: usize,
    m: usize,
    edges: Vec<(usize, usize)>,
}

impl Diagram {
    pub fn new(n: usize, m: usize, mut edges: Vec<(usize, usize)>) -> Result<Self, DiagramError> {
        for &(v, w) in &edges {
            if v >= n || w >= m {
                return Err(DiagramError::VertexOutOfRange(v, w, n, m));
            }
        }
        edges.sort();
        for pair in edges.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(DiagramError::RepeatedVertex);
            }
        }
        let mut ws: Vec<usize> = edges.iter().map(|e| e.1).collect();
        ws.sort_unstable();
        if ws.windows(2).any(|p| p[0] == p[1]) {
            return Err(DiagramError::RepeatedVertex);
        }
        Ok(Diagram { n, m, edges })
    }

    pub fn rows(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges sorted by row-1 endpoint.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Row-1 slots with no edge, ascending.
    pub fn open_row1(&self) -> Vec<usize> {
        let used: Vec<usize> = self.edges.iter().map(|e| e.0).collect();
        (0..self.n).filter(|s| !used.contains(s)).collect()
    }

    /// Row-2 slots with no edge, ascending.
    pub fn open_row2(&self) -> Vec<usize> {
        let used: Vec<usize> = self.edges.iter().map(|e| e.1).collect();
        (0..self.m).filter(|s| !used.contains(s)).collect()
    }

    /// Order of the integral this diagram contributes: n + m - 2|γ|.
    pub fn output_order(&self) -> usize {
        self.n + self.m - 2 * self.edges.len()
    }
}

/// Every partial matching between rows of size n and m, exactly once, in
/// canonical order (by edge count, then lexicographically by edge list).
pub fn enumerate_diagrams(n: usize, m: usize) -> Vec<Diagram> {
    let mut out = Vec::new();
    let mut used2 = vec![false; m];
    let mut edges = Vec::new();
    fn recurse(
        v: usize,
        n: usize,
        m: usize,
        used2: &mut Vec<bool>,
        edges: &mut Vec<(usize, usize)>,
        out: &mut Vec<Diagram>,
    ) {
        if v == n {
            out.push(Diagram {
                n,
                m,
                edges: edges.clone(),
            });
            return;
        }
        recurse(v + 1, n, m, used2, edges, out);
        for w in 0..m {
            if !used2[w] {
                used2[w] = true;
                edges.push((v, w));
                recurse(v + 1, n, m, used2, edges, out);
                edges.pop();
                used2[w] = false;
            }
        }
    }
    recurse(0, n, m, &mut used2, &mut edges, &mut out);
    out.sort_by_key(|d| (d.edge_count(), d.edges.clone()));
    out
}

/// Closed-form matching count `Σ_r C(n,r) C(m,r) r!`.
pub fn matching_count(n: usize, m: usize) -> u128 {
    let binom = |a: usize, b: usize| -> u128 {
        if b > a {
            return 0;
        }
        let mut num: u128 = 1;
        for i in 0..b {
            num = num * (a - i) as u128 / (i + 1) as u128;
        }
        num
    };
    let mut total = 0u128;
    for r in 0..=n.min(m) {
        let fact: u128 = (1..=r).map(|i| i as u128).product();
        total += binom(n, r) * binom(m, r) * fact;
    }
    total
}

/// One term of the product expansion.
#[derive(Debug, Clone)]
pub struct Contraction {
    pub diagram: Diagram,
    pub kernel: SimpleKernel,
    /// norm of the contraction table with diagonal tuples still present;
    /// this is the quantity bounded by ‖h₁‖·‖h₂‖
    pub norm_before_zeroing: f64,
}

/// Contracts two kernels along one diagram.
pub fn contract(
    h1: &SimpleKernel,
    h2: &SimpleKernel,
    diagram: &Diagram,
    measure: &MatrixSpectralMeasure,
) -> Result<Contraction, DiagramError> {
    if h1.system().as_ref() != h2.system().as_ref() {
        return Err(DiagramError::SystemMismatch);
    }
    if h1.field_dim() != h2.field_dim() {
        return Err(DiagramError::FieldDimMismatch(h1.field_dim(), h2.field_dim()));
    }
    let (n, m) = diagram.rows();
    assert_eq!(n, h1.order(), "diagram row must match kernel order");
    assert_eq!(m, h2.order(), "diagram row must match kernel order");
    let open1 = diagram.open_row1();
    let open2 = diagram.open_row2();
    let edges = diagram.edges();

    // index h2 entries by their values at the matched slots, edge order
    let mut buckets: HashMap<Vec<i64>, Vec<(&Vec<i64>, Complex64)>> = HashMap::new();
    for (tuple, &v) in h2.entries() {
        let key: Vec<i64> = edges.iter().map(|&(_, w)| tuple[w]).collect();
        buckets.entry(key).or_default().push((tuple, v));
    }

    let mut table: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
    for (tuple1, &v1) in h1.entries() {
        let mut weight = Complex64::new(1.0, 0.0);
        for &(v, w) in edges {
            weight *= measure.entry(tuple1[v], h1.colours()[v], h2.colours()[w]);
        }
        if weight == Complex64::new(0.0, 0.0) {
            continue;
        }
        let key: Vec<i64> = edges.iter().map(|&(v, _)| -tuple1[v]).collect();
        let Some(matches) = buckets.get(&key) else {
            continue;
        };
        let mut out = Vec::with_capacity(diagram.output_order());
        out.extend(open1.iter().map(|&s| tuple1[s]));
        let base_len = out.len();
        for &(tuple2, v2) in matches {
            out.truncate(base_len);
            out.extend(open2.iter().map(|&s| tuple2[s]));
            let entry = table.entry(out.clone()).or_insert(Complex64::new(0.0, 0.0));
            *entry += v1 * v2 * weight;
        }
    }

    // colours: open row-1 slots then open row-2 slots
    let mut colours: Vec<usize> = open1.iter().map(|&s| h1.colours()[s]).collect();
    colours.extend(open2.iter().map(|&s| h2.colours()[s]));

    // norm before the diagonal-zeroing step
    let mut norm_sqr = 0.0;
    for (tuple, v) in &table {
        let w: f64 = tuple
            .iter()
            .zip(&colours)
            .map(|(&k, &j)| measure.diagonal(k, j))
            .product();
        norm_sqr += v.norm_sqr() * w;
    }

    table.retain(|tuple, v| !is_diagonal(tuple) && *v != Complex64::new(0.0, 0.0));
    let kernel = SimpleKernel::from_raw(
        h1.system().clone(),
        colours,
        h1.field_dim(),
        table,
    );
    Ok(Contraction {
        diagram: diagram.clone(),
        kernel,
        norm_before_zeroing: norm_sqr.sqrt(),
    })
}

/// The full product expansion: one contraction per diagram, in canonical
/// diagram order.
pub fn product_expansion(
    h1: &SimpleKernel,
    h2: &SimpleKernel,
    measure: &MatrixSpectralMeasure,
) -> Result<Vec<Contraction>, DiagramError> {
    enumerate_diagrams(h1.order(), h2.order())
        .iter()
        .map(|d| contract(h1, h2, d, measure))
        .collect()
}

/// The one-fold special case built independently from its closed form:
/// the tensor term, then for each row-1 slot p the contraction
/// `Σ_c h₁(…, p ↦ c, …) conj(φ(c)) G_{j_p, j'}(Δ_c)` with slot p removed.
pub fn corollary_expansion(
    h1: &SimpleKernel,
    phi: &CellFunction,
    phi_colour: usize,
    measure: &MatrixSpectralMeasure,
) -> Result<Vec<Contraction>, DiagramError> {
    if h1.system().as_ref() != phi.system().as_ref() {
        return Err(DiagramError::SystemMismatch);
    }
    if phi_colour >= h1.field_dim() {
        return Err(DiagramError::Chaos(ChaosError::ColourOutOfRange(
            phi_colour,
            h1.field_dim(),
        )));
    }
    let n = h1.order();
    let mut out = Vec::with_capacity(n + 1);

    // tensor term
    let mut tensor_table: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
    let mut tensor_norm_sqr = 0.0;
    for (tuple, &v) in h1.entries() {
        for k in h1.system().signed_indices() {
            let val = v * phi.value(k);
            if val == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut t = tuple.clone();
            t.push(k);
            let w: f64 = t
                .iter()
                .zip(h1.colours().iter().chain(std::iter::once(&phi_colour)))
                .map(|(&c, &j)| measure.diagonal(c, j))
                .product();
            tensor_norm_sqr += val.norm_sqr() * w;
            if !is_diagonal(&t) {
                tensor_table.insert(t, val);
            }
        }
    }
    let mut tensor_colours = h1.colours().to_vec();
    tensor_colours.push(phi_colour);
    out.push(Contraction {
        diagram: Diagram::new(n, 1, vec![])?,
        kernel: SimpleKernel::from_raw(
            h1.system().clone(),
            tensor_colours,
            h1.field_dim(),
            tensor_table,
        ),
        norm_before_zeroing: tensor_norm_sqr.sqrt(),
    });

    // one contraction per slot
    for p in 0..n {
        let mut table: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (tuple, &v) in h1.entries() {
            let c = tuple[p];
            let g = measure.entry(c, h1.colours()[p], phi_colour);
            let val = v * phi.value(c).conj() * g;
            if val == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut t = tuple.clone();
            t.remove(p);
            let entry = table.entry(t).or_insert(Complex64::new(0.0, 0.0));
            *entry += val;
        }
        let mut norm_sqr = 0.0;
        let mut colours = h1.colours().to_vec();
        colours.remove(p);
        for (tuple, v) in &table {
            let w: f64 = tuple
                .iter()
                .zip(&colours)
                .map(|(&k, &j)| measure.diagonal(k, j))
                .product();
            norm_sqr += v.norm_sqr() * w;
        }
        table.retain(|tuple, v| !is_diagonal(tuple) && *v != Complex64::new(0.0, 0.0));
        out.push(Contraction {
            diagram: Diagram::new(n, 1, vec![(p, 0)])?,
            kernel: SimpleKernel::from_raw(h1.system().clone(), colours, h1.field_dim(), table),
            norm_before_zeroing: norm_sqr.sqrt(),
        });
    }
    Ok(out)
}

/// Monte Carlo mean-square defect between the product of two integrals
/// and its diagram expansion on a fixed grid.
pub fn product_defect(
    h1: &SimpleKernel,
    h2: &SimpleKernel,
    measure: &Arc<MatrixSpectralMeasure>,
    replicas: usize,
    seed: u64,
) -> Result<McEstimate, DiagramError> {
    let terms = product_expansion(h1, h2, measure)?;
    let sampler = Sampler::new(measure.clone())?;
    let e1 = h1.evaluator();
    let e2 = h2.evaluator();
    let term_evals: Vec<_> = terms.iter().map(|c| c.kernel.evaluator()).collect();
    let samples = mc_samples(replicas, |r| {
        let s = sampler.draw(seed, r);
        let lhs = e1.evaluate(&s).unwrap() * e2.evaluate(&s).unwrap();
        let rhs: f64 = term_evals.iter().map(|e| e.evaluate(&s).unwrap()).sum();
        let d = lhs - rhs;
        d * d
    });
    Ok(summarize(&samples))
}

/// Per-level outcome of a refinement sweep of the product formula.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepLevel {
    pub cells_per_axis: Vec<usize>,
    pub max_cell_trace: f64,
    pub mean_square_defect: f64,
    pub defect_std_error: f64,
}

/// Runs `product_defect` on each (measure, h1, h2) level.
pub fn defect_sweep(
    levels: &[(Arc<MatrixSpectralMeasure>, SimpleKernel, SimpleKernel)],
    replicas: usize,
    seed: u64,
) -> Result<Vec<SweepLevel>, DiagramError> {
    levels
        .iter()
        .map(|(g, h1, h2)| {
            let est = product_defect(h1, h2, g, replicas, seed)?;
            Ok(SweepLevel {
                cells_per_axis: g.system().cells_per_axis().to_vec(),
                max_cell_trace: g.max_cell_trace(),
                mean_square_defect: est.mean,
                defect_std_error: est.std_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmatrix::CMatrix;
    use crate::grid::build_symmetric_grid;
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
    fn diagram_counts_match_closed_form() {
        assert_eq!(enumerate_diagrams(1, 1).len(), 2);
        assert_eq!(enumerate_diagrams(2, 1).len(), 3);
        assert_eq!(enumerate_diagrams(2, 2).len(), 7);
        for n in 1..=5 {
            for m in 1..=5 {
                assert_eq!(
                    enumerate_diagrams(n, m).len() as u128,
                    matching_count(n, m),
                    "count mismatch at ({n},{m})"
                );
            }
        }
    }

    #[test]
    fn diagrams_are_unique_and_canonically_ordered() {
        let ds = enumerate_diagrams(3, 2);
        let mut seen = ds.clone();
        seen.dedup();
        assert_eq!(seen.len(), ds.len());
        for pair in ds.windows(2) {
            assert!(
                (pair[0].edge_count(), pair[0].edges())
                    <= (pair[1].edge_count(), pair[1].edges())
            );
        }
        assert_eq!(ds[0].edge_count(), 0);
    }

    #[test]
    fn invalid_diagrams_are_rejected() {
        assert!(Diagram::new(2, 2, vec![(0, 0), (0, 1)]).is_err());
        assert!(Diagram::new(2, 2, vec![(0, 0), (1, 0)]).is_err());
        assert!(Diagram::new(2, 2, vec![(2, 0)]).is_err());
    }

    #[test]
    fn derived_index_sets() {
        // rows of 3 and 4, edges from slots (1, 3) and (2, 0)
        let d = Diagram::new(3, 4, vec![(2, 0), (1, 3)]).unwrap();
        assert_eq!(d.edges(), &[(1, 3), (2, 0)]);
        assert_eq!(d.open_row1(), vec![0]);
        assert_eq!(d.open_row2(), vec![1, 2]);
        assert_eq!(d.output_order(), 3);
    }

    #[test]
    fn empty_diagram_gives_tensor_product() {
        let g = scalar_measure(4, 0.5);
        let phi = CellFunction::exp_lag(g.system().clone(), &[1]);
        let psi = CellFunction::exp_lag(g.system().clone(), &[2]);
        let h1 = SimpleKernel::tensor(&[phi.clone()], &[0], 1).unwrap();
        let h2 = SimpleKernel::tensor(&[psi.clone()], &[0], 1).unwrap();
        let empty = Diagram::new(1, 1, vec![]).unwrap();
        let c = contract(&h1, &h2, &empty, &g).unwrap();
        assert_eq!(c.kernel.order(), 2);
        for k1 in g.system().signed_indices() {
            for k2 in g.system().signed_indices() {
                let expected = if is_diagonal(&[k1, k2]) {
                    Complex64::new(0.0, 0.0)
                } else {
                    phi.value(k1) * psi.value(k2)
                };
                assert!((c.kernel.value(&[k1, k2]) - expected).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn full_edge_contraction_is_the_cross_covariance() {
        let g = scalar_measure(4, 0.5);
        let phi = CellFunction::exp_lag(g.system().clone(), &[1]);
        let psi = CellFunction::exp_lag(g.system().clone(), &[2]);
        let h1 = SimpleKernel::tensor(&[phi], &[0], 1).unwrap();
        let h2 = SimpleKernel::tensor(&[psi], &[0], 1).unwrap();
        let edge = Diagram::new(1, 1, vec![(0, 0)]).unwrap();
        let c = contract(&h1, &h2, &edge, &g).unwrap();
        assert_eq!(c.kernel.order(), 0);
        let cov = h1.analytic_covariance(&h2, &g).unwrap();
        assert!((c.kernel.value(&[]).re - cov).abs() < 1e-12);
        assert!(c.kernel.value(&[]).im.abs() < 1e-12);
    }

    #[test]
    fn worked_example_colours_and_measures() {
        // five components; h1 of order 3 with colours (2,3,5), h2 of
        // order 4 with colours (1,5,4,2); edges (1,2)-(2,4) and
        // (1,3)-(2,1) in one-based labels
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![2]).unwrap());
        let d5 = 5usize;
        let mut masses = vec![CMatrix::identity(d5)];
        // make cross entries distinguishable: G_{j,j'} = 1 + (j+1) + 10(j'+1)
        for m in masses.iter_mut() {
            for r in 0..d5 {
                for c in 0..d5 {
                    let v = 1.0 + (r + 1) as f64 * 0.01 + (c + 1) as f64 * 0.001;
                    m.set(r, c, Complex64::new(if r == c { v + 1.0 } else { 0.0 }, 0.0));
                }
            }
        }
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(sys.clone(), d5, masses).unwrap(),
        );
        let one = CellFunction::one(sys.clone());
        // zero-based colours: (1,2,4) and (0,4,3,1)
        let h1 = SimpleKernel::tensor(&[one.clone(), one.clone(), one.clone()], &[1, 2, 4], d5)
            .unwrap();
        let h2 = SimpleKernel::tensor(
            &[one.clone(), one.clone(), one.clone(), one],
            &[0, 4, 3, 1],
            d5,
        )
        .unwrap();
        let gamma = Diagram::new(3, 4, vec![(1, 3), (2, 0)]).unwrap();
        let c = contract(&h1, &h2, &gamma, &g).unwrap();
        // output colours (2,5,4) one-based = (1,4,3) zero-based
        assert_eq!(c.kernel.colours(), &[1, 4, 3]);
        // contraction measures G_{3,2} and G_{5,1} one-based:
        // edge (v=1,w=3): h1 colour index 2, h2 colour index 1
        assert_eq!(h1.colours()[1], 2);
        assert_eq!(h2.colours()[3], 1);
        assert_eq!(h1.colours()[2], 4);
        assert_eq!(h2.colours()[0], 0);
    }

    #[test]
    fn norm_inequality_on_contractions() {
        let g = scalar_measure(6, 0.3);
        let phi = CellFunction::exp_lag(g.system().clone(), &[1]);
        let psi = CellFunction::exp_lag(g.system().clone(), &[2]);
        let chi = CellFunction::exp_lag(g.system().clone(), &[3]);
        let h1 = SimpleKernel::tensor(&[phi, psi.clone()], &[0, 0], 1).unwrap();
        let h2 = SimpleKernel::tensor(&[chi, psi], &[0, 0], 1).unwrap();
        let bound = h1.norm_sqr(&g).sqrt() * h2.norm_sqr(&g).sqrt();
        for c in product_expansion(&h1, &h2, &g).unwrap() {
            assert!(
                c.norm_before_zeroing <= bound + 1e-10,
                "norm {} > bound {}",
                c.norm_before_zeroing,
                bound
            );
        }
    }

    #[test]
    fn corollary_matches_product_expansion_for_m1() {
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![4]).unwrap());
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys.clone(),
                2,
                vec![
                    CMatrix::from_real_rows(2, &[0.5, 0.2, 0.2, 0.4]),
                    CMatrix::from_real_rows(2, &[0.3, -0.1, -0.1, 0.6]),
                ],
            )
            .unwrap(),
        );
        let a = CellFunction::exp_lag(sys.clone(), &[1]);
        let b = CellFunction::exp_lag(sys.clone(), &[2]);
        let phi = CellFunction::exp_lag(sys.clone(), &[3]);
        let h1 = SimpleKernel::tensor(&[a, b], &[0, 1], 2).unwrap();
        let phi_kernel = SimpleKernel::tensor(&[phi.clone()], &[1], 2).unwrap();
        let via_product = product_expansion(&h1, &phi_kernel, &g).unwrap();
        let via_corollary = corollary_expansion(&h1, &phi, 1, &g).unwrap();
        assert_eq!(via_product.len(), via_corollary.len());
        for (p, c) in via_product.iter().zip(&via_corollary) {
            assert_eq!(p.diagram, c.diagram);
            assert_eq!(p.kernel.colours(), c.kernel.colours());
            let dist = p.kernel.table_distance(&c.kernel).unwrap();
            assert!(dist < 1e-12, "kernel tables differ by {dist}");
        }
    }

    #[test]
    fn corollary_term_of_tensor_kernel_factors_out_the_cross_moment() {
        // for h1 = φ₁⊗φ₂ the slot-p contraction is the remaining factor
        // scaled by Σ_c φ_p(c) conj(φ(c)) G_{j_p,j'}(Δ_c)
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![4]).unwrap());
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys.clone(),
                2,
                vec![
                    CMatrix::from_real_rows(2, &[0.5, 0.2, 0.2, 0.4]),
                    CMatrix::from_real_rows(2, &[0.3, -0.1, -0.1, 0.6]),
                ],
            )
            .unwrap(),
        );
        let phi1 = CellFunction::exp_lag(sys.clone(), &[1]);
        let phi2 = CellFunction::exp_lag(sys.clone(), &[2]);
        let psi = CellFunction::exp_lag(sys.clone(), &[3]);
        let h1 = SimpleKernel::tensor(&[phi1.clone(), phi2.clone()], &[0, 1], 2).unwrap();
        let terms = corollary_expansion(&h1, &psi, 1, &g).unwrap();
        // slot p = 1 (second factor): the remaining factor scaled by the
        // cross moment Σ_c φ₂(c) conj(ψ(c)) G_{1,1}(Δ_c); on the grid the
        // zeroed diagonal of the tensor kernel excludes c = ±k from the
        // contraction, and that gap closes under refinement
        let remaining = SimpleKernel::tensor(&[phi1], &[0], 2).unwrap();
        for k in sys.signed_indices() {
            let cross: Complex64 = sys
                .signed_indices()
                .filter(|&c| c != k && c != -k)
                .map(|c| phi2.value(c) * psi.value(c).conj() * g.entry(c, 1, 1))
                .sum();
            let expected = remaining.value(&[k]) * cross;
            assert!((terms[2].kernel.value(&[k]) - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn corollary_colours_skip_the_contracted_slot() {
        let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![4]).unwrap());
        let g = Arc::new(
            MatrixSpectralMeasure::from_positive_masses(
                sys.clone(),
                3,
                vec![CMatrix::identity(3).scale(0.25); 2],
            )
            .unwrap(),
        );
        let mk = |p: i64| CellFunction::exp_lag(sys.clone(), &[p]);
        let h1 = SimpleKernel::tensor(&[mk(1), mk(2), mk(3)], &[0, 1, 2], 3).unwrap();
        let terms = corollary_expansion(&h1, &mk(1), 0, &g).unwrap();
        assert_eq!(terms[0].kernel.colours(), &[0, 1, 2, 0]);
        assert_eq!(terms[1].kernel.colours(), &[1, 2]); // slot 0 removed
        assert_eq!(terms[2].kernel.colours(), &[0, 2]); // slot 1 removed
        assert_eq!(terms[3].kernel.colours(), &[0, 1]); // slot 2 removed
    }

    #[test]
    fn product_defect_decays_under_refinement() {
        // order-1 × order-1 products: mean-square defect shrinks with the
        // largest cell mass
        let mut levels = Vec::new();
        for cells in [2usize, 4, 8] {
            let g = scalar_measure(cells, 1.0 / cells as f64);
            let phi = CellFunction::exp_lag(g.system().clone(), &[1]);
            let h1 = SimpleKernel::tensor(&[phi.clone()], &[0], 1).unwrap();
            levels.push((g, h1.clone(), h1));
        }
        let sweep = defect_sweep(&levels, 4000, 97).unwrap();
        assert!(sweep[1].mean_square_defect < sweep[0].mean_square_defect);
        assert!(sweep[2].mean_square_defect <= 0.75 * sweep[1].mean_square_defect);
    }

    #[test]
    fn zero_second_factor_collapses_expansion() {
        let g = scalar_measure(4, 0.5);
        let phi = CellFunction::exp_lag(g.system().clone(), &[1]);
        let h1 = SimpleKernel::tensor(&[phi], &[0], 1).unwrap();
        let zero = SimpleKernel::constant(g.system().clone(), 1, Complex64::new(0.0, 0.0));
        // an order-0 "factor" has a single empty-tuple entry; use the
        // order-1 zero kernel instead
        let zero1 = SimpleKernel::from_entries(g.system().clone(), &[0], 1, vec![]).unwrap();
        for c in product_expansion(&h1, &zero1, &g).unwrap() {
            assert_eq!(c.kernel.support_len(), 0);
            assert_eq!(c.norm_before_zeroing, 0.0);
        }
        assert_eq!(zero.support_len(), 0);
    }
}
