//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SdlError};

/// Largest absolute asymmetry `max |A_ij − A_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Replace `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky
/// factor. Fails if the factorization does.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| SdlError::Linalg("matrix is not positive definite".into()))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Ordinary least squares through a thin QR factorization. Requires full
/// column rank.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if n < p {
        return Err(SdlError::Linalg(format!(
            "least squares needs n >= p, got {n} x {p}"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    if (0..p).any(|k| r[(k, k)].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(SdlError::Linalg("design is rank deficient".into()));
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| SdlError::Linalg("triangular solve failed".into()))
}

/// Residual of `v` after projecting out the span of `basis` columns.
///
/// Uses modified Gram–Schmidt with reorthogonalization; a basis column whose
/// remaining norm drops below `1e-10` times its original norm is reported as
/// rank deficient.
pub fn project_out(basis: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let k = basis.ncols();
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let col = basis.column(j).into_owned();
        let norm0 = col.norm();
        let mut u = col;
        for _ in 0..2 {
            for e in &q {
                let c = e.dot(&u);
                u.axpy(-c, e, 1.0);
            }
        }
        let norm = u.norm();
        if norm0 == 0.0 || norm <= 1e-10 * norm0 {
            return Err(SdlError::Linalg(format!(
                "conditioning columns are linearly dependent (column {j})"
            )));
        }
        q.push(u / norm);
    }
    let mut out = v.clone();
    for _ in 0..2 {
        for e in &q {
            let c = e.dot(&out);
            out.axpy(-c, e, 1.0);
        }
    }
    Ok(out)
}

/// Greedy column-pivoted Gram–Schmidt: repeatedly takes the column with the
/// largest norm after removing the span of the columns already taken.
///
/// Returns `(column, pivot_norm)` in pivot order; pivot norms are
/// non-increasing. Stops once the largest remaining norm is at most
/// `rel_tol` times the largest original column norm.
pub fn pivot_order(x: &DMatrix<f64>, rel_tol: f64) -> Vec<(usize, f64)> {
    let p = x.ncols();
    let mut work: Vec<DVector<f64>> = (0..p).map(|j| x.column(j).into_owned()).collect();
    let scale = work.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let (pos, best_norm) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &j)| (pos, work[j].norm()))
            .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best_norm <= rel_tol * scale || best_norm == 0.0 {
            break;
        }
        let j = remaining.swap_remove(pos);
        let e = &work[j] / best_norm;
        for &other in &remaining {
            let c = e.dot(&work[other]);
            work[other].axpy(-c, &e, 1.0);
        }
        order.push((j, best_norm));
    }
    order
}

/// Splits columns into a numerically independent set and the rest, using
/// [`pivot_order`]. Returns `(kept, dropped)` as sorted column indices.
pub fn independent_columns(x: &DMatrix<f64>, rel_tol: f64) -> (Vec<usize>, Vec<usize>) {
    let mut kept: Vec<usize> = pivot_order(x, rel_tol)
        .into_iter()
        .map(|(j, _)| j)
        .collect();
    kept.sort_unstable();
    let dropped = (0..x.ncols())
        .filter(|j| kept.binary_search(j).is_err())
        .collect();
    (kept, dropped)
}
