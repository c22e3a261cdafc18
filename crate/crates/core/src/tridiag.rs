//! Thomas algorithm for tridiagonal systems.

/// Solve `A x = rhs` in place, where row `i` of `A` is
/// `sub[i] * x[i-1] + diag[i] * x[i] + sup[i] * x[i+1]`.
///
/// `sub[0]` and `sup[n-1]` are ignored. `scratch` must have length `n`.
/// No pivoting: callers guarantee diagonal dominance.
pub fn solve_in_place(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = diag.len();
    debug_assert!(sub.len() == n && sup.len() == n && rhs.len() == n && scratch.len() == n);
    if n == 0 {
        return;
    }
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * scratch[i];
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
}
