mod common;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smpc_core::qp::{solve, QpStatus, QuadraticProgram};

#[test]
fn random_psd_problems_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..300 {
        let qp = common::random_psd_qp(&mut rng, 6, 8);
        let oracle = common::enumeration_oracle(&qp).expect("feasible by construction");
        let s = solve(&qp).unwrap();
        assert_eq!(s.status, QpStatus::Optimal, "case {case}");
        assert!((s.objective - oracle).abs() < 1e-6, "case {case}: {} vs {oracle}", s.objective);
        assert!(s.residuals.max() < 1e-6, "case {case}: {:?}", s.residuals);
    }
}

#[test]
fn equality_and_inequality_mix() {
    // min ½‖z‖² − z0, z0 + z1 + z2 = 1, z0 ≤ 0.5
    let qp = QuadraticProgram::new(DMatrix::identity(3, 3), DVector::from_column_slice(&[-1.0, 0.0, 0.0]))
        .with_equalities(DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]), DVector::from_element(1, 1.0))
        .with_inequalities(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), DVector::from_element(1, 0.5));
    let s = solve(&qp).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    assert!((s.z[0] - 0.5).abs() < 1e-12);
    assert!((s.z[1] - 0.25).abs() < 1e-12 && (s.z[2] - 0.25).abs() < 1e-12);
    assert!(s.residuals.max() < 1e-10);
}

#[test]
fn identical_input_gives_identical_bits() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let qp = common::random_psd_qp(&mut rng, 6, 8);
        let a = solve(&qp).unwrap();
        let b = solve(&qp.clone()).unwrap();
        let bits = |v: &DVector<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.z), bits(&b.z));
    }
}
