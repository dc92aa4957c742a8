//! Maximal positively invariant and maximal robust positively invariant sets.

use super::{Polytope, SET_TOL};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

pub const MAX_SET_ITERATIONS: usize = 1000;

// Tighter than SET_TOL so that the fixed point certifies at SET_TOL.
const REDUNDANT_TOL: f64 = 1e-11;

fn check_preconditions(a: &Mat, x: &Polytope) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() != x.dim() {
        return Err(Error::Dimension(alloc::format!(
            "closed loop is {}x{} but the set is {}-d",
            a.nrows(),
            a.ncols(),
            x.dim()
        )));
    }
    if linalg::spectral_radius(a) >= 1.0 {
        return Err(Error::Numerical("closed loop is not Schur stable"));
    }
    if !x.origin_interior(SET_TOL) {
        return Err(Error::EmptySet("constraint set does not contain the origin in its interior"));
    }
    Ok(())
}

/// True when every row of `{F x ≤ g}` is implied by `omega`.
fn implied(omega: &Polytope, f: &Mat, g: &Vector) -> Result<bool> {
    for k in 0..f.nrows() {
        let c = f.row(k).transpose();
        let nrm = c.norm();
        if nrm == 0.0 {
            if g[k] < 0.0 {
                return Ok(false);
            }
            continue;
        }
        if omega.support(&c)? > g[k] + REDUNDANT_TOL * nrm {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest `O ⊆ X` with `A O ⊆ O`, by the backward recursion
/// `Ω_{k+1} = Ω_k ∩ {x : F A^{k+1} x ≤ g}` until the new rows are redundant.
pub fn max_positive_invariant(a: &Mat, x: &Polytope) -> Result<Polytope> {
    check_preconditions(a, x)?;
    let mut omega = x.reduce()?;
    let mut power = a.clone();
    for _ in 0..MAX_SET_ITERATIONS {
        let f = x.f() * &power;
        if implied(&omega, &f, x.g())? {
            return Ok(omega);
        }
        omega = omega.with_rows(&f, x.g())?.reduce()?;
        power = &power * a;
    }
    Err(Error::NotConverged {
        what: "maximal positively invariant set",
        iterations: MAX_SET_ITERATIONS,
    })
}

/// Largest `O ⊆ X` with `A O ⊕ W ⊆ O`, by `Ω ← Ω ∩ {x : A x ∈ Ω ⊖ W}`.
///
/// Errors with [`Error::EmptySet`] once the iterate has no interior.
pub fn robust_positive_invariant(a: &Mat, x: &Polytope, w: &Polytope) -> Result<Polytope> {
    check_preconditions(a, x)?;
    if w.dim() != x.dim() {
        return Err(Error::Dimension(alloc::format!(
            "disturbance set is {}-d, state set {}-d",
            w.dim(),
            x.dim()
        )));
    }
    if !w.contains(&Vector::zeros(w.dim()), SET_TOL) {
        return Err(Error::EmptySet("disturbance set does not contain the origin"));
    }
    let mut omega = x.reduce()?;
    for _ in 0..MAX_SET_ITERATIONS {
        let eroded = omega.pontryagin_diff(w)?;
        if eroded.chebyshev_radius() <= SET_TOL {
            return Err(Error::EmptySet("robust invariant set"));
        }
        let f = eroded.f() * a;
        if implied(&omega, &f, eroded.g())? {
            return Ok(omega);
        }
        let next = omega.with_rows(&f, eroded.g())?;
        if next.chebyshev_radius() <= SET_TOL {
            return Err(Error::EmptySet("robust invariant set"));
        }
        omega = next.reduce()?;
    }
    Err(Error::NotConverged {
        what: "maximal robust positively invariant set",
        iterations: MAX_SET_ITERATIONS,
    })
}

/// `A v ∈ O` for every vertex `v` of `O`.
pub fn check_positive_invariance(a: &Mat, o: &Polytope, tol: f64) -> Result<bool> {
    let verts = o.vertices()?;
    Ok(verts.iter().all(|v| o.contains(&(a * v), tol)))
}

/// `A v + w ∈ O` for every vertex `v` of `O` and every `w` in `disturbance_vertices`.
pub fn check_robust_invariance(a: &Mat, o: &Polytope, disturbance_vertices: &[Vector], tol: f64) -> Result<bool> {
    let verts = o.vertices()?;
    for v in &verts {
        let av = a * v;
        for w in disturbance_vertices {
            if !o.contains(&(&av + w), tol) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn interval(r: f64) -> Polytope {
        Polytope::unit_box(1, r)
    }

    #[test]
    fn scalar_mpi_is_constraint_set() {
        let a = Mat::from_element(1, 1, 0.5);
        let o = max_positive_invariant(&a, &interval(1.0)).unwrap();
        assert!(o.set_eq(&interval(1.0), SET_TOL).unwrap());
    }

    #[test]
    fn zero_dynamics_mpi_is_constraint_set() {
        let o = max_positive_invariant(&Mat::zeros(2, 2), &Polytope::unit_box(2, 1.0)).unwrap();
        assert!(o.set_eq(&Polytope::unit_box(2, 1.0), SET_TOL).unwrap());
    }

    #[test]
    fn scalar_rpi_keeps_box_for_small_disturbance() {
        let a = Mat::from_element(1, 1, 0.5);
        let o = robust_positive_invariant(&a, &interval(1.0), &interval(0.25)).unwrap();
        assert!(o.set_eq(&interval(1.0), SET_TOL).unwrap());
        let wv = vec![Vector::from_element(1, 0.25), Vector::from_element(1, -0.25)];
        assert!(check_robust_invariance(&a, &o, &wv, SET_TOL).unwrap());
    }

    #[test]
    fn zero_disturbance_rpi_matches_mpi() {
        let (c, s) = (libm::cos(0.4), libm::sin(0.4));
        let a = Mat::from_row_slice(2, 2, &[c, -s, s, c]) * 0.9;
        let x = Polytope::unit_box(2, 1.0);
        let w = Polytope::singleton(&Vector::zeros(2));
        let r = robust_positive_invariant(&a, &x, &w).unwrap();
        let m = max_positive_invariant(&a, &x).unwrap();
        assert!(r.set_eq(&m, SET_TOL).unwrap());
    }

    #[test]
    fn scalar_rpi_empty_when_disturbance_too_large() {
        let a = Mat::from_element(1, 1, 0.5);
        assert!(matches!(
            robust_positive_invariant(&a, &interval(1.0), &interval(0.6)),
            Err(Error::EmptySet(_))
        ));
    }

    #[test]
    fn rotation_mpi_matches_forward_simulation() {
        let th = core::f64::consts::PI / 6.0;
        let a = Mat::from_row_slice(2, 2, &[libm::cos(th), -libm::sin(th), libm::sin(th), libm::cos(th)]) * 0.9;
        let x = Polytope::unit_box(2, 1.0);
        let o = max_positive_invariant(&a, &x).unwrap();
        assert!(check_positive_invariance(&a, &o, SET_TOL).unwrap());
        let mut strict_subset = false;
        let n = 32;
        for i in 0..n {
            for j in 0..n {
                let p = Vector::from_vec(vec![
                    -1.0 + 2.0 * (i as f64 + 0.5) / n as f64,
                    -1.0 + 2.0 * (j as f64 + 0.5) / n as f64,
                ]);
                let mut z = p.clone();
                let mut margin = f64::INFINITY;
                for _ in 0..400 {
                    margin = margin.min(1.0 - z.amax());
                    z = &a * z;
                }
                let dist = (o.f() * &p - o.g()).max();
                if margin.abs() < 1e-6 || dist.abs() < 1e-6 {
                    continue;
                }
                assert_eq!(margin > 0.0, dist < 0.0, "grid point {p:?}");
                strict_subset |= margin < 0.0;
            }
        }
        assert!(strict_subset);
    }

    #[test]
    fn unstable_loop_rejected() {
        let a = Mat::from_element(1, 1, 1.1);
        assert!(max_positive_invariant(&a, &interval(1.0)).is_err());
    }
}
