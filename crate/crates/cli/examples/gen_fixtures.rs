//! Regenerates the shipped fixture files under `fixtures/`.
//!
//! Run from the workspace root: `cargo run -p specfield-cli --example gen_fixtures`

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use specfield::cellfn::CellFunction;
use specfield::chaos::SimpleKernel;
use specfield::cmatrix::CMatrix;
use specfield::grid::build_symmetric_grid;
use specfield::io::{KernelFile, MeasureFile};
use specfield::spectral::MatrixSpectralMeasure;
use specfield_cli::suites::LimitConfig;

fn write(path: &str, content: String) {
    std::fs::create_dir_all("fixtures").expect("mkdir fixtures");
    std::fs::write(path, content).expect("write fixture");
    println!("wrote {path}");
}

fn main() {
    // scalar measure, four cells, smooth mass profile
    let sys = Arc::new(build_symmetric_grid(1, vec![PI], vec![4]).unwrap());
    let masses = vec![
        CMatrix::from_real_rows(1, &[0.35]),
        CMatrix::from_real_rows(1, &[0.15]),
    ];
    let d1 = MatrixSpectralMeasure::from_positive_masses(sys.clone(), 1, masses).unwrap();
    write(
        "fixtures/measure_d1.json",
        serde_json::to_string_pretty(&MeasureFile::from_measure(&d1)).unwrap() + "\n",
    );

    // two components with complex cross mass
    let sys2 = Arc::new(build_symmetric_grid(1, vec![PI], vec![4]).unwrap());
    let mut m1 = CMatrix::zeros(2);
    m1.set(0, 0, Complex64::new(0.30, 0.0));
    m1.set(0, 1, Complex64::new(0.10, 0.08));
    m1.set(1, 0, Complex64::new(0.10, -0.08));
    m1.set(1, 1, Complex64::new(0.25, 0.0));
    let mut m2 = CMatrix::zeros(2);
    m2.set(0, 0, Complex64::new(0.20, 0.0));
    m2.set(0, 1, Complex64::new(-0.05, 0.02));
    m2.set(1, 0, Complex64::new(-0.05, -0.02));
    m2.set(1, 1, Complex64::new(0.25, 0.0));
    let d2 = MatrixSpectralMeasure::from_positive_masses(sys2, 2, vec![m1, m2]).unwrap();
    assert!(d2.validate().pass);
    write(
        "fixtures/measure_d2.json",
        serde_json::to_string_pretty(&MeasureFile::from_measure(&d2)).unwrap() + "\n",
    );

    // two axes, two components
    let sys22 = Arc::new(build_symmetric_grid(2, vec![PI, PI], vec![2, 2]).unwrap());
    let q1 = CMatrix::from_real_rows(2, &[0.3, 0.12, 0.12, 0.2]);
    let q2 = CMatrix::from_real_rows(2, &[0.2, -0.06, -0.06, 0.3]);
    let d22 = MatrixSpectralMeasure::from_positive_masses(sys22, 2, vec![q1, q2]).unwrap();
    assert!(d22.validate().pass);
    write(
        "fixtures/measure_d2_nu2.json",
        serde_json::to_string_pretty(&MeasureFile::from_measure(&d22)).unwrap() + "\n",
    );

    // order-2 kernel on the scalar grid
    let phi = CellFunction::exp_lag(sys.clone(), &[1]);
    let psi = CellFunction::exp_lag(sys, &[2]);
    let kernel = SimpleKernel::tensor(&[phi, psi], &[0, 0], 1).unwrap();
    write(
        "fixtures/kernel_order2.json",
        serde_json::to_string_pretty(&KernelFile::from_kernel(&kernel)).unwrap() + "\n",
    );

    // long-memory limit experiment
    let config = LimitConfig {
        fixture: specfield::LongMemoryFixture::default(),
        schedule: vec![4, 8, 16, 32],
        replicas: 20000,
        z0_replicas: 60000,
        seed: 20260808,
        window_cells: None,
        final_tolerance: None,
        cond_a_threshold: None,
    };
    write(
        "fixtures/limit_experiment.json",
        serde_json::to_string_pretty(&config).unwrap() + "\n",
    );
}
