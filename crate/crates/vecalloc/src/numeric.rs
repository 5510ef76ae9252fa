//! Small shared dense-linear-algebra helpers built on one SVD code path.

use nalgebra::{DMatrix, DVector};

/// Minimum-norm least-squares solution of `mat * x = rhs`.
///
/// Singular values below `1e-12 * sigma_max` are treated as zero, matching the
/// rank convention used when assembling mappings.
pub(crate) fn min_norm_solve(mat: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let (rows, cols) = mat.shape();
    // Pad to at least square so the full right singular basis is available.
    let padded_rows = rows.max(cols);
    let mut padded = DMatrix::zeros(padded_rows, cols);
    padded.view_mut((0, 0), (rows, cols)).copy_from(mat);
    let svd = padded.svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = crate::body::RANK_CUTOFF * sigma_max;

    let mut x = DVector::zeros(cols);
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > cutoff {
            let coeff = u.column(i).rows(0, rows).dot(rhs) / sigma;
            x += v_t.row(i).transpose() * coeff;
        }
    }
    x
}

/// Largest singular value.
pub(crate) fn spectral_norm(mat: &DMatrix<f64>) -> f64 {
    if mat.is_empty() {
        return 0.0;
    }
    mat.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}
