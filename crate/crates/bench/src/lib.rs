//! Fixed forms shared by the benchmarks.

use quadform::ReducedForm;

/// Central, positive definite, mixed degrees of freedom.
pub fn central() -> ReducedForm {
    ReducedForm::new(vec![3.0, 1.5, 0.4, 0.1], vec![1, 2, 1, 3], vec![0.0; 4], 0.0, 0.0).unwrap()
}

/// Noncentral and indefinite with a normal component (Davies and saddlepoint only).
pub fn indefinite() -> ReducedForm {
    ReducedForm::new(vec![2.0, 0.7, -1.2], vec![1, 1, 2], vec![0.5, 1.5, 0.2], 0.6, 0.0).unwrap()
}
