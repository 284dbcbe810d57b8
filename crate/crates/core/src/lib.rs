//! Desk-scale calculus of vector-valued Gaussian stationary random
//! fields through their spectral representation.
//!
//! The library discretizes everything over symmetric cell systems on
//! boxes: matrix-valued spectral measures live as per-cell Hermitian
//! mass matrices, their random counterparts are sampled jointly as
//! complex Gaussians, and multiple stochastic integrals of simple
//! kernels are plain weighted sums. On top of that sit the product
//! (diagram) expansion, Wick polynomials with two independent
//! computation paths, lattice shift transforms, and a scaling-limit
//! harness where every hypothesis of the underlying limit theorem is an
//! executable check.

pub mod cellfn;
pub mod chaos;
pub mod cmatrix;
pub mod diagram;
pub mod grid;
pub mod io;
pub mod limits;
pub mod linalg;
pub mod montecarlo;
pub mod poly;
pub mod sampler;
pub mod spectral;
pub mod synth;
pub mod wick;

pub use cellfn::CellFunction;
pub use chaos::SimpleKernel;
pub use cmatrix::CMatrix;
pub use diagram::Diagram;
pub use grid::{build_symmetric_grid, Cell, RegularSystem, TorusBox};
pub use limits::{LimitExperiment, LongMemoryFixture, WickSpec};
pub use montecarlo::McEstimate;
pub use poly::{GaussianSpace, Polynomial};
pub use sampler::{Sampler, SpectralSample};
pub use spectral::{CorrelationMatrix, MatrixSpectralMeasure, ValidationReport};
