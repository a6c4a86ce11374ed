//! Thin wrappers around nalgebra for the recurring kernels: min-norm least
//! squares, kernel bases, orthonormal spans, projections.

use nalgebra::{DMatrix, DVector};

use crate::tol::RANK_REL_CUTOFF;

/// Min-norm least-squares solution of A x = b via SVD.
pub fn least_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    least_norm_solve_eps(a, b, RANK_REL_CUTOFF)
}

/// Min-norm least squares with an explicit relative rank cutoff.
pub fn least_norm_solve_eps(a: &DMatrix<f64>, b: &DVector<f64>, rel_eps: f64) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * rel_eps;
    svd.solve(b, eps.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Kernel basis with an explicit relative cutoff.
pub fn kernel_basis_eps(a: &DMatrix<f64>, rel_eps: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let work = if a.nrows() < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let svd = work.svd(false, true);
    let vt = svd.v_t.expect("svd v_t requested");
    let smax = svd.singular_values.max();
    let eps = if smax > 0.0 { smax * rel_eps } else { rel_eps };
    let mut cols = Vec::new();
    for i in 0..n {
        let s = if i < svd.singular_values.len() {
            svd.singular_values[i]
        } else {
            0.0
        };
        if s <= eps {
            cols.push(vt.row(i).transpose());
        }
    }
    from_columns(n, &cols)
}

/// Orthonormal basis (columns) of the null space of A.
pub fn kernel_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    kernel_basis_eps(a, RANK_REL_CUTOFF)
}

/// Orthonormal basis of the column span of A, keeping directions with
/// singular value above `rel_cutoff` times the largest.
pub fn span_basis(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("svd u requested");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let cols: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > smax * rel_cutoff)
        .map(|i| u.column(i).into_owned())
        .collect();
    from_columns(a.nrows(), &cols)
}

pub fn from_columns(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Residual of v after projecting onto the span of the orthonormal columns Q.
pub fn project_out(q: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    if q.ncols() == 0 {
        return v.clone();
    }
    v - q * (q.transpose() * v)
}

/// Distance from v to the affine set {offset + span(Q)}, Q orthonormal.
pub fn affine_distance(offset: &DVector<f64>, q: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    project_out(q, &(v - offset)).norm()
}

/// Largest principal angle (radians) between two orthonormal spans.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let m = a.transpose() * b;
    let svd = m.svd(false, false);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    smin.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_norm_picks_smallest_solution() {
        // x + y = 2 has min-norm solution (1,1)
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let x = least_norm_solve(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_of_rank_one() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let k = kernel_basis(&a);
        assert_eq!(k.ncols(), 1);
        let v = k.column(0);
        assert!((v[0] - v[1]).abs() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn principal_angle_of_rotated_span() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!((max_principal_angle(&a, &a)).abs() < 1e-12);
        assert!((max_principal_angle(&a, &b) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
