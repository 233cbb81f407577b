//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Eigenvalues of the Hermitian part that lie closer than this are treated as
/// one block and split by the anti-Hermitian part.
const HERMITIAN_GROUP_TOL: f64 = 1e-6;

/// Eigendecomposition of a normal matrix (`U U† = U† U`).
///
/// The Hermitian part `(U + U†)/2` and the anti-Hermitian part
/// `(U - U†)/2i` commute for normal `U`, so the eigenvectors of the first are
/// refined inside each of its eigenspaces by the second. Returns eigenvalues
/// `v† U v` and orthonormal eigenvectors as matrix columns.
pub fn normal_eigen(u: &DMatrix<C64>) -> (Vec<C64>, DMatrix<C64>) {
    let dim = u.nrows();
    assert_eq!(dim, u.ncols(), "normal_eigen needs a square matrix");
    let adj = u.adjoint();
    let half = C64::new(0.5, 0.0);
    let herm = (u + &adj).map(|z| z * half);
    let anti = (u - &adj).map(|z| z * C64::new(0.0, -0.5));

    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut vectors = DMatrix::<C64>::zeros(dim, dim);
    let mut col = 0;
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim
            && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] < HERMITIAN_GROUP_TOL
        {
            end += 1;
        }
        let size = end - start;
        let mut basis = DMatrix::<C64>::zeros(dim, size);
        for (j, &src) in order[start..end].iter().enumerate() {
            basis.set_column(j, &eig.eigenvectors.column(src));
        }
        if size > 1 {
            let compressed = basis.adjoint() * &anti * &basis;
            // Symmetrize against round-off before the Hermitian solver.
            let compressed = (&compressed + compressed.adjoint()).map(|z| z * half);
            let inner = compressed.symmetric_eigen();
            basis *= inner.eigenvectors;
        }
        for j in 0..size {
            let v = basis.column(j);
            let norm = v.norm();
            vectors.set_column(col, &(v / C64::new(norm, 0.0)));
            col += 1;
        }
        start = end;
    }

    let values = (0..dim)
        .map(|j| {
            let v = vectors.column(j);
            (v.adjoint() * u * v)[(0, 0)]
        })
        .collect();
    (values, vectors)
}

/// Least-squares left inverse `(AᵀA)⁻¹Aᵀ` of a full-column-rank matrix.
pub fn left_pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let at = a.transpose();
    let gram = &at * a;
    let deficient = |rank| Error::RankDeficient {
        rank,
        target: a.ncols(),
    };
    let chol = gram.cholesky().ok_or_else(|| deficient(0))?;
    // A numerically singular Gram matrix can still factor; its smallest
    // pivot then sits at rounding level relative to the largest.
    let pivots = chol.l_dirty().diagonal();
    let tol = pivots.max() * (f64::EPSILON * a.ncols() as f64).sqrt();
    let rank = pivots.iter().filter(|&&v| v > tol).count();
    if rank < a.ncols() {
        return Err(deficient(rank));
    }
    Ok(chol.solve(&at))
}

/// Ratio of the largest to the smallest singular value; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if max == 0.0 || min <= max * f64::EPSILON * m.nrows().max(m.ncols()) as f64 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn outer(v: &DVector<C64>) -> DMatrix<C64> {
    v * v.adjoint()
}
