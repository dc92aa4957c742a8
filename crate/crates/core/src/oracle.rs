//! Dense reference solvers, independent of the structured path.
//!
//! [`solve_qp`] is the Goldfarb–Idnani dual active-set method for strictly
//! convex QPs; [`solve_equality_qp`] solves the KKT system directly.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::qpstruct::DenseQp;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vector,
    /// `½ zᵀHz + fᵀz`.
    pub value: f64,
    pub iterations: usize,
    /// Indices of active inequality rows.
    pub active: Vec<usize>,
}

/// `min ½ zᵀHz + fᵀz  s.t.  C z = d` via the full KKT matrix. Returns `(z, ν)`
/// with `Hz + f + Cᵀν = 0`.
pub fn solve_equality_qp(h: &Mat, f: &Vector, c: &Mat, d: &Vector) -> Result<(Vector, Vector)> {
    let n = h.nrows();
    let p = c.nrows();
    let mut k = Mat::zeros(n + p, n + p);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    k.view_mut((n, 0), (p, n)).copy_from(c);
    k.view_mut((0, n), (n, p)).copy_from(&c.transpose());
    let mut rhs = Vector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(&(-f));
    rhs.rows_mut(n, p).copy_from(d);
    let sol = k.lu().solve(&rhs).ok_or(Error::Numerical("singular KKT matrix"))?;
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, p).into_owned()))
}

/// Goldfarb–Idnani for `min ½ zᵀHz + fᵀz  s.t.  C z = d,  G z ≤ b` with `H ≻ 0`.
pub fn solve_qp(h: &Mat, f: &Vector, c: &Mat, d: &Vector, g: &Mat, b: &Vector) -> Result<QpSolution> {
    let n = h.nrows();
    let n_eq = c.nrows();
    let n_in = g.nrows();
    // Constraints as nᵀx ≥ β.
    let normal = |k: usize| -> Vector {
        if k < n_eq {
            c.row(k).transpose()
        } else {
            -g.row(k - n_eq).transpose()
        }
    };
    let rhs = |k: usize| -> f64 { if k < n_eq { d[k] } else { -b[k - n_eq] } };

    let chol = h.clone().cholesky().ok_or(Error::NotPositiveDefinite("oracle Hessian"))?;
    let l = chol.l();
    let linv = l
        .solve_lower_triangular(&Mat::identity(n, n))
        .ok_or(Error::Numerical("oracle triangular inverse"))?;
    let mut jm = linv.transpose();
    let mut x = -chol.solve(f);
    let mut r = Mat::zeros(n, n);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let scale = 1.0 + b.amax().max(d.amax());
    let tol = 1e-11 * scale;
    let mut iterations = 0;
    let max_iter = 50 * (n + n_eq + n_in) + 100;

    let mut pending_eq = 0;
    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::NotConverged {
                what: "dual active-set oracle",
                iterations: max_iter,
            });
        }
        // Pick the next constraint to add.
        let (p, np, bp) = if pending_eq < n_eq {
            let k = pending_eq;
            pending_eq += 1;
            let (mut nv, mut bv) = (normal(k), rhs(k));
            if nv.dot(&x) - bv > 0.0 {
                nv = -nv;
                bv = -bv;
            }
            (k, nv, bv)
        } else {
            let mut best = (usize::MAX, -tol);
            for k in n_eq..n_eq + n_in {
                if active.contains(&k) {
                    continue;
                }
                let s = normal(k).dot(&x) - rhs(k);
                if s < best.1 {
                    best = (k, s);
                }
            }
            if best.0 == usize::MAX {
                break;
            }
            (best.0, normal(best.0), rhs(best.0))
        };
        let mut up = 0.0;
        loop {
            let q = active.len();
            let dv = jm.transpose() * &np;
            let mut zdir = Vector::zeros(n);
            for j in q..n {
                zdir += jm.column(j) * dv[j];
            }
            let mut rdir = Vector::zeros(q);
            for j in (0..q).rev() {
                let mut s = dv[j];
                for k in j + 1..q {
                    s -= r[(j, k)] * rdir[k];
                }
                rdir[j] = s / r[(j, j)];
            }
            let mut t1 = f64::INFINITY;
            let mut drop = usize::MAX;
            for j in 0..q {
                if active[j] >= n_eq && rdir[j] > 0.0 {
                    let t = u[j] / rdir[j];
                    if t < t1 {
                        t1 = t;
                        drop = j;
                    }
                }
            }
            let sp = np.dot(&x) - bp;
            let zn = zdir.dot(&np);
            let t2 = if zdir.amax() > 1e-12 * (1.0 + np.amax()) && zn.abs() > 0.0 {
                -sp / zn
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(Error::Infeasible(alloc::string::String::from("oracle QP has no feasible point")));
            }
            if !t2.is_finite() {
                for j in 0..q {
                    u[j] -= t * rdir[j];
                }
                up += t;
                drop_constraint(&mut jm, &mut r, &mut active, &mut u, drop);
                continue;
            }
            x += &zdir * t;
            for j in 0..q {
                u[j] -= t * rdir[j];
            }
            up += t;
            if t2 <= t1 {
                add_constraint(&mut jm, &mut r, q, dv);
                active.push(p);
                u.push(up);
                break;
            }
            drop_constraint(&mut jm, &mut r, &mut active, &mut u, drop);
        }
    }
    let value = 0.5 * x.dot(&(h * &x)) + f.dot(&x);
    let act = active.iter().filter(|&&k| k >= n_eq).map(|&k| k - n_eq).collect();
    Ok(QpSolution {
        z: x,
        value,
        iterations,
        active: act,
    })
}

/// Rotates columns `q..n` of `J` so that `d = Jᵀn` has zeros below entry `q`,
/// then appends `d[0..=q]` as column `q` of `R`.
fn add_constraint(jm: &mut Mat, r: &mut Mat, q: usize, mut dv: Vector) {
    let n = jm.nrows();
    for j in (q + 1..n).rev() {
        let (a, b) = (dv[j - 1], dv[j]);
        if b == 0.0 {
            continue;
        }
        let h = libm::hypot(a, b);
        let (c, s) = (a / h, b / h);
        dv[j - 1] = h;
        dv[j] = 0.0;
        for k in 0..n {
            let (x, y) = (jm[(k, j - 1)], jm[(k, j)]);
            jm[(k, j - 1)] = c * x + s * y;
            jm[(k, j)] = -s * x + c * y;
        }
    }
    for k in 0..=q {
        r[(k, q)] = dv[k];
    }
}

/// Removes active position `l`, restoring the triangular `R` by row rotations
/// mirrored on the columns of `J`.
fn drop_constraint(jm: &mut Mat, r: &mut Mat, active: &mut Vec<usize>, u: &mut Vec<f64>, l: usize) {
    let q = active.len();
    let n = jm.nrows();
    active.remove(l);
    u.remove(l);
    for col in l..q - 1 {
        for k in 0..n {
            r[(k, col)] = r[(k, col + 1)];
        }
    }
    for k in 0..n {
        r[(k, q - 1)] = 0.0;
    }
    for j in l..q - 1 {
        let (a, b) = (r[(j, j)], r[(j + 1, j)]);
        if b == 0.0 {
            continue;
        }
        let h = libm::hypot(a, b);
        let (c, s) = (a / h, b / h);
        for col in j..q - 1 {
            let (x, y) = (r[(j, col)], r[(j + 1, col)]);
            r[(j, col)] = c * x + s * y;
            r[(j + 1, col)] = -s * x + c * y;
        }
        for k in 0..n {
            let (x, y) = (jm[(k, j)], jm[(k, j + 1)]);
            jm[(k, j)] = c * x + s * y;
            jm[(k, j + 1)] = -s * x + c * y;
        }
    }
}

/// Oracle solution of a densified structured QP (no linear term).
pub fn solve_dense_qp(qp: &DenseQp) -> Result<QpSolution> {
    let f = Vector::zeros(qp.h.nrows());
    solve_qp(&qp.h, &f, &qp.c, &qp.c_rhs, &qp.g, &qp.b)
}
