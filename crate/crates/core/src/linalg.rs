//! Small dense solvers shared by the exact MDP evaluators and the critic fits.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which a Gram direction counts as null.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Solves `a x = b` by LU with partial pivoting.
pub fn lu_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    a.lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularSystem(format!("{n}x{n} LU factorization is singular")))
}

/// Solution of a symmetric positive semi-definite system `G w = b`.
#[derive(Debug, Clone)]
pub struct GramSolution {
    pub w: DVector<f64>,
    pub rank: usize,
    /// Ratio of largest to smallest eigenvalue of `G`; infinite when rank deficient.
    pub condition_number: f64,
}

impl GramSolution {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.w.len()
    }
}

/// Minimum-norm solution of `G w = b` for a symmetric PSD Gram matrix.
///
/// Eigen-directions with eigenvalue at or below `RANK_TOLERANCE * λ_max` are
/// dropped, which yields the pseudo-inverse solution.
pub fn solve_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> GramSolution {
    let dim = gram.nrows();
    let eig = SymmetricEigen::new(gram.clone());
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = RANK_TOLERANCE * lambda_max;

    let mut w = DVector::zeros(dim);
    let mut rank = 0;
    let mut lambda_min = f64::INFINITY;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        lambda_min = lambda_min.min(lambda);
        if lambda > cutoff && lambda > 0.0 {
            rank += 1;
            let v = eig.eigenvectors.column(i);
            let coef = v.dot(rhs) / lambda;
            w.axpy(coef, &v, 1.0);
        }
    }
    let condition_number = if rank < dim || lambda_min <= 0.0 {
        f64::INFINITY
    } else {
        lambda_max / lambda_min
    };
    GramSolution {
        w,
        rank,
        condition_number,
    }
}
