//! Small dense helpers: slice arithmetic and an in-place Cholesky solve for
//! the tiny symmetric systems produced by the history updates (m <= 5).

/// Dot product with fixed left-to-right accumulation.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Squared L2 norm.
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// L2 norm.
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// Solve `A x = b` for a symmetric positive definite `A` (row-major n x n)
/// via Cholesky. Returns `None` when a pivot collapses, i.e. the matrix is
/// not numerically positive definite.
pub fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    if n == 0 {
        return Some(Vec::new());
    }

    // Relative pivot floor: anything at or below this is treated as singular.
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0f64, f64::max);
    let floor = max_diag * 1e-14;

    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if diag <= floor || !diag.is_finite() {
            return None;
        }
        let lj = diag.sqrt();
        l[j * n + j] = lj;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / lj;
        }
    }

    // Forward then backward substitution.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * n + k] * y[k];
        }
        y[i] = v / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= l[k * n + i] * x[k];
        }
        x[i] = v / l[i * n + i];
    }
    Some(x)
}
