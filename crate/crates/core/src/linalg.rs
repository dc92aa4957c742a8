//! Dense kernels used on the structured solve path.
//!
//! Every kernel that appears in the factorization schedule takes a `&mut u64`
//! flop tally. One flop is one multiply-add pair, one division, or one square
//! root; additions that are not fused with a multiply are not counted.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// Only the lower triangle of `a` is read.
pub fn cholesky(a: &Mat, flops: &mut u64) -> Result<Mat> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        *flops += j as u64 + 1;
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite("cholesky pivot"));
        }
        let djj = sqrt(d);
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
            *flops += j as u64 + 1;
        }
    }
    Ok(l)
}

/// Cholesky with one retry after adding `eps * (trace / n)` to the diagonal.
///
/// Returns the factor and whether the shift was needed.
pub fn cholesky_regularized(a: &Mat, eps: f64, flops: &mut u64) -> Result<(Mat, bool)> {
    match cholesky(a, flops) {
        Ok(l) => Ok((l, false)),
        Err(_) => {
            let n = a.nrows().max(1);
            let scale = (a.trace().abs() / n as f64).max(1.0);
            let mut shifted = a.clone();
            for i in 0..a.nrows() {
                shifted[(i, i)] += eps * scale;
            }
            cholesky(&shifted, flops).map(|l| (l, true))
        }
    }
}

/// Solves `L X = B` in place for lower-triangular `L`.
pub fn forward_solve(l: &Mat, b: &mut Mat, flops: &mut u64) {
    let n = l.nrows();
    debug_assert_eq!(n, b.nrows());
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
    *flops += (n * (n + 1) / 2 * b.ncols()) as u64;
}

/// Solves `Lᵀ X = B` in place for lower-triangular `L`.
pub fn backward_solve_transposed(l: &Mat, b: &mut Mat, flops: &mut u64) {
    let n = l.nrows();
    debug_assert_eq!(n, b.nrows());
    for c in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = b[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
    *flops += (n * (n + 1) / 2 * b.ncols()) as u64;
}

pub fn forward_solve_vec(l: &Mat, b: &mut Vector, flops: &mut u64) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
    *flops += (n * (n + 1) / 2) as u64;
}

pub fn backward_solve_transposed_vec(l: &Mat, b: &mut Vector, flops: &mut u64) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
    *flops += (n * (n + 1) / 2) as u64;
}

/// `X = B L^{-T}`, i.e. the solution of `L Xᵀ = Bᵀ`.
pub fn right_solve_lower_transposed(b: &Mat, l: &Mat, flops: &mut u64) -> Mat {
    let mut xt = b.transpose();
    forward_solve(l, &mut xt, flops);
    xt.transpose()
}

/// Inverse of a lower-triangular matrix, skipping the structural zeros of the
/// identity right-hand side (about n³/6 multiply-adds).
pub fn lower_inverse(l: &Mat, flops: &mut u64) -> Mat {
    let n = l.nrows();
    let mut inv = Mat::zeros(n, n);
    for c in 0..n {
        inv[(c, c)] = 1.0 / l[(c, c)];
        *flops += 1;
        for i in (c + 1)..n {
            let mut s = 0.0;
            for k in c..i {
                s -= l[(i, k)] * inv[(k, c)];
            }
            inv[(i, c)] = s / l[(i, i)];
            *flops += (i - c) as u64 + 1;
        }
    }
    inv
}

/// `A Bᵀ`.
pub fn mul_abt(a: &Mat, b: &Mat, flops: &mut u64) -> Mat {
    debug_assert_eq!(a.ncols(), b.ncols());
    let mut out = Mat::zeros(a.nrows(), b.nrows());
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            let mut s = 0.0;
            for k in 0..a.ncols() {
                s += a[(i, k)] * b[(j, k)];
            }
            out[(i, j)] = s;
        }
    }
    *flops += (a.nrows() * b.nrows() * a.ncols()) as u64;
    out
}

/// `A Aᵀ`, computing the lower triangle and mirroring it.
pub fn mul_aat(a: &Mat, flops: &mut u64) -> Mat {
    let n = a.nrows();
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..a.ncols() {
                s += a[(i, k)] * a[(j, k)];
            }
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    *flops += (n * (n + 1) / 2 * a.ncols()) as u64;
    out
}

/// `A x`.
pub fn mul_vec(a: &Mat, x: &Vector, flops: &mut u64) -> Vector {
    *flops += (a.nrows() * a.ncols()) as u64;
    a * x
}

/// `Aᵀ x`.
pub fn mul_t_vec(a: &Mat, x: &Vector, flops: &mut u64) -> Vector {
    *flops += (a.nrows() * a.ncols()) as u64;
    a.tr_mul(x)
}

// ---------------------------------------------------------------------------
// Uninstrumented dense helpers (validation, synthesis, oracles).

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn max_eigenvalue(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    symmetrize(a).symmetric_eigenvalues().max()
}

pub fn min_eigenvalue(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(a).symmetric_eigenvalues().min()
}

/// Positive definiteness with the smallest eigenvalue measured relative to the
/// largest.
pub fn is_positive_definite(a: &Mat, rel_tol: f64) -> bool {
    if a.nrows() == 0 {
        return true;
    }
    let ev = symmetrize(a).symmetric_eigenvalues();
    let hi = ev.max();
    let lo = ev.min();
    hi > 0.0 && lo > rel_tol * hi
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|c| libm::hypot(c.re, c.im))
        .fold(0.0, f64::max)
}

/// Symmetric positive semidefinite square root.
pub fn sym_sqrt(a: &Mat) -> Mat {
    let eig = symmetrize(a).symmetric_eigen();
    let d = eig.eigenvalues.map(|v| sqrt(v.max(0.0)));
    &eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose()
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    a.clone()
        .try_inverse()
        .ok_or(Error::Numerical("singular matrix"))
}

/// Numerical rank by column-pivoted elimination.
pub fn rank(a: &Mat, tol: f64) -> usize {
    let mut m = a.clone();
    let (rows, cols) = m.shape();
    let scale = m.amax().max(1e-300);
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let mut piv = r;
        let mut best = 0.0;
        for i in r..rows {
            if m[(i, c)].abs() > best {
                best = m[(i, c)].abs();
                piv = i;
            }
        }
        if best <= tol * scale {
            continue;
        }
        m.swap_rows(r, piv);
        for i in (r + 1)..rows {
            let f = m[(i, c)] / m[(r, c)];
            if f != 0.0 {
                for k in c..cols {
                    let v = m[(r, k)];
                    m[(i, k)] -= f * v;
                }
            }
        }
        r += 1;
    }
    r
}

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, tiny)`.
pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Stack matrices with identical column counts vertically.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Block-diagonal matrix from a list of square or rectangular blocks.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
