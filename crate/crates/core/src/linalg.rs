//! Small dense factorizations used by local stencil solves and the dimension analyzer.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff for numerical rank.
pub const RANK_RTOL: f64 = 1e-10;

/// Singular values in descending order (empty for empty matrices).
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn rank_of(sv: &[f64]) -> usize {
    match sv.first() {
        Some(&smax) if smax > 0.0 => sv.iter().filter(|&&s| s > RANK_RTOL * smax).count(),
        _ => 0,
    }
}

/// Numerical rank: singular values below `RANK_RTOL * sigma_max` count as zero.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    rank_of(&singular_values(m))
}

/// Orthonormal basis of the null space of `m`, one column per null direction,
/// together with the numerical rank of `m`.
pub fn null_space(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let ncols = m.ncols();
    if ncols == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    if m.nrows() == 0 {
        return (DMatrix::identity(ncols, ncols), 0);
    }
    // pad to at least ncols rows so that V^T comes back square
    let rows = m.nrows().max(ncols);
    let mut padded = DMatrix::zeros(rows, ncols);
    padded.view_mut((0, 0), (m.nrows(), ncols)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let rank = rank_of(&sorted);
    let mut z = DMatrix::zeros(ncols, ncols - rank);
    for (c, &i) in order[rank..].iter().enumerate() {
        z.set_column(c, &v_t.row(i).transpose());
    }
    (z, rank)
}

/// Minimum-norm least-squares solution of `m x = b` via the SVD pseudo-inverse.
/// Returns the solution and the numerical rank used.
pub fn min_norm_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize) {
    if m.ncols() == 0 {
        return (DVector::zeros(0), 0);
    }
    if m.nrows() == 0 {
        return (DVector::zeros(m.ncols()), 0);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = RANK_RTOL * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff && s > 0.0).count();
    if rank == 0 {
        return (DVector::zeros(m.ncols()), 0);
    }
    let x = svd
        .solve(b, cutoff.max(f64::MIN_POSITIVE))
        .expect("u and v_t were requested");
    (x, rank)
}

/// Solves a square system by LU with partial pivoting; `None` if numerically singular.
pub fn lu_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let x = m.clone().lu().solve(b)?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
