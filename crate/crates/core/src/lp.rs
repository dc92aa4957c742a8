//! Small dense LP solver for `max cᵀx s.t. A x ≤ b` with free `x`.
//!
//! The polytope routines need LPs with few variables (the set dimension) and
//! many rows, so the solver works on the dual standard form
//! `min bᵀy s.t. Aᵀy = c, y ≥ 0`, whose tableau has only `dim(x)` rows.
//! The primal point is read off the simplex multipliers.
//!
//! Outcome mapping: an unbounded dual means the primal is infeasible; an
//! infeasible dual means the primal is unbounded *provided it is feasible*.
//! Callers that cannot rule out primal infeasibility check emptiness first
//! (see [`chebyshev`]).

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{Mat, Vector};

const PIVOT_TOL: f64 = 1e-11;
const OPT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vector, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    // (rows + 1) x (cols + 1); last row is the reduced-cost row, last column the rhs.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.t[i * (self.cols + 1) + j] = v;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.at(r, c);
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.at(i, c);
            if f != 0.0 {
                for j in 0..w {
                    let v = self.t[r * w + j];
                    self.t[i * w + j] -= f * v;
                }
                self.set(i, c, 0.0);
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex minimization on the current reduced-cost row using only
    /// columns in `allowed`. Returns `false` on unboundedness.
    fn minimize(&mut self, allowed: usize) -> bool {
        let cap = 200 * (self.rows + self.cols + 10);
        let mut degenerate_run = 0usize;
        for _ in 0..cap {
            let bland = degenerate_run > 30;
            let obj = self.rows;
            let mut enter = None;
            let mut best = -OPT_TOL;
            for j in 0..allowed {
                let d = self.at(obj, j);
                if d < -OPT_TOL {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if d < best {
                        best = d;
                        enter = Some(j);
                    }
                }
            }
            let Some(c) = enter else { return true };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.at(i, self.cols) / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            if ratio < best_ratio - 1e-12 {
                                true
                            } else if ratio <= best_ratio + 1e-12 {
                                if bland {
                                    self.basis[i] < self.basis[l]
                                } else {
                                    a > self.at(l, c)
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        best_ratio = ratio.min(best_ratio);
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else { return false };
            if best_ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
        }
        // Cycling guard tripped; the point is still a basic feasible one.
        true
    }
}

/// Maximizes `cᵀx` subject to `A x ≤ b`.
pub fn maximize(c: &Vector, a: &Mat, b: &Vector) -> LpOutcome {
    let d = c.len();
    let r = a.nrows();
    debug_assert_eq!(a.ncols(), d);
    debug_assert_eq!(b.len(), r);
    if d == 0 {
        return if b.iter().all(|&v| v >= -OPT_TOL) {
            LpOutcome::Optimal { x: Vector::zeros(0), value: 0.0 }
        } else {
            LpOutcome::Infeasible
        };
    }
    // Columns: y_0..y_{r-1}, artificials a_0..a_{d-1}.
    let cols = r + d;
    let mut tab = Tableau {
        rows: d,
        cols,
        t: vec![0.0; (d + 1) * (cols + 1)],
        basis: (r..r + d).collect(),
    };
    let mut sign = vec![1.0; d];
    for i in 0..d {
        if c[i] < 0.0 {
            sign[i] = -1.0;
        }
        for j in 0..r {
            tab.set(i, j, sign[i] * a[(j, i)]);
        }
        tab.set(i, r + i, 1.0);
        tab.set(i, cols, sign[i] * c[i]);
    }
    // Phase 1: minimize the sum of artificials.
    for j in 0..=cols {
        if (r..r + d).contains(&j) {
            continue;
        }
        let mut s = 0.0;
        for i in 0..d {
            s -= tab.at(i, j);
        }
        tab.set(d, j, s);
    }
    if !tab.minimize(r) {
        // cannot happen: phase-1 objective is bounded below by zero
        return LpOutcome::Infeasible;
    }
    let infeas = -tab.at(d, cols);
    let scale = 1.0 + c.amax();
    if infeas > 1e-9 * scale {
        return LpOutcome::Unbounded;
    }
    // Drive remaining artificials out of the basis where possible.
    for i in 0..d {
        if tab.basis[i] >= r {
            let mut best = None;
            let mut mag = 1e-9;
            for j in 0..r {
                if tab.at(i, j).abs() > mag {
                    mag = tab.at(i, j).abs();
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                tab.pivot(i, j);
            }
        }
    }
    // Phase 2 reduced costs for min bᵀy.
    for j in 0..=cols {
        let cost = if j < r { b[j] } else { 0.0 };
        let mut s = if j == cols { 0.0 } else { cost };
        for i in 0..d {
            let bj = tab.basis[i];
            let cb = if bj < r { b[bj] } else { 0.0 };
            s -= cb * tab.at(i, j);
        }
        tab.set(d, j, s);
    }
    if !tab.minimize(r) {
        return LpOutcome::Infeasible;
    }
    let mut x = Vector::zeros(d);
    for i in 0..d {
        x[i] = -sign[i] * tab.at(d, r + i);
    }
    let value = c.dot(&x);
    LpOutcome::Optimal { x, value }
}

/// Chebyshev ball of `{x : F x ≤ g}`: returns `(center, radius)`.
///
/// A negative radius certifies emptiness; `None` means the set is unbounded
/// (arbitrarily large inscribed balls).
pub fn chebyshev(f: &Mat, g: &Vector) -> Option<(Vector, f64)> {
    let (rows, d) = f.shape();
    let mut a = Mat::zeros(rows, d + 1);
    for i in 0..rows {
        let nrm = f.row(i).norm();
        for j in 0..d {
            a[(i, j)] = f[(i, j)];
        }
        a[(i, d)] = nrm;
    }
    let mut c = Vector::zeros(d + 1);
    c[d] = 1.0;
    match maximize(&c, &a, g) {
        LpOutcome::Optimal { x, .. } => Some((x.rows(0, d).into_owned(), x[d])),
        LpOutcome::Infeasible => Some((Vector::zeros(d), f64::NEG_INFINITY)),
        LpOutcome::Unbounded => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(d: usize) -> (Mat, Vector) {
        let mut f = Mat::zeros(2 * d, d);
        for i in 0..d {
            f[(2 * i, i)] = 1.0;
            f[(2 * i + 1, i)] = -1.0;
        }
        (f, Vector::from_element(2 * d, 1.0))
    }

    #[test]
    fn box_support() {
        let (f, g) = unit_box(3);
        let c = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        match maximize(&c, &f, &g) {
            LpOutcome::Optimal { x, value } => {
                assert!((value - 3.5).abs() < 1e-12);
                assert!((x - Vector::from_vec(vec![1.0, -1.0, 1.0])).amax() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn triangle_and_degenerate_vertex() {
        // x >= 0, y >= 0, x + y <= 1, plus a redundant row through the vertex (1, 0).
        let f = Mat::from_row_slice(4, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0, 1.0, 0.0]);
        let g = Vector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
        let v = maximize(&Vector::from_vec(vec![2.0, 1.0]), &f, &g).value().unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let v = maximize(&Vector::from_vec(vec![-1.0, -1.0]), &f, &g).value().unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn unbounded_and_infeasible() {
        let f = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let g = Vector::from_vec(vec![1.0]);
        assert_eq!(maximize(&Vector::from_vec(vec![0.0, 1.0]), &f, &g), LpOutcome::Unbounded);
        let f = Mat::from_row_slice(2, 1, &[1.0, -1.0]);
        let g = Vector::from_vec(vec![-1.0, -1.0]);
        assert_eq!(maximize(&Vector::from_vec(vec![1.0]), &f, &g), LpOutcome::Infeasible);
    }

    #[test]
    fn chebyshev_radius() {
        let (f, g) = unit_box(2);
        let (c, r) = chebyshev(&f, &g).unwrap();
        assert!((r - 1.0).abs() < 1e-12 && c.amax() < 1e-12);
        let f = Mat::from_row_slice(2, 1, &[1.0, -1.0]);
        let g = Vector::from_vec(vec![-1.0, 0.5]);
        assert!(chebyshev(&f, &g).unwrap().1 < 0.0);
        // a slab has a finite inscribed radius, a half-plane does not
        let f = Mat::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let (_, r) = chebyshev(&f, &Vector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let f = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(chebyshev(&f, &Vector::from_vec(vec![1.0])).is_none());
    }

    #[test]
    fn agrees_with_vertex_brute_force_on_random_polygons() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let rows = rng.random_range(3..12);
            let f = Mat::from_fn(rows, 2, |_, _| rng.random_range(-1.0..1.0));
            let g = Vector::from_fn(rows, |_, _| rng.random_range(0.1..1.0));
            let c = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            // brute force: enumerate pairwise intersections
            let mut best = f64::NEG_INFINITY;
            for i in 0..rows {
                for j in (i + 1)..rows {
                    let m = Mat::from_row_slice(2, 2, &[f[(i, 0)], f[(i, 1)], f[(j, 0)], f[(j, 1)]]);
                    if let Some(inv) = m.try_inverse() {
                        let p = inv * Vector::from_vec(vec![g[i], g[j]]);
                        if (&f * &p - &g).max() <= 1e-9 {
                            best = best.max(c.dot(&p));
                        }
                    }
                }
            }
            match maximize(&c, &f, &g) {
                LpOutcome::Optimal { x, value } => {
                    assert!((value - best).abs() < 1e-8, "{value} vs {best}");
                    assert!((&f * &x - &g).max() <= 1e-9);
                }
                LpOutcome::Unbounded => assert!(best == f64::NEG_INFINITY || best.is_finite()),
                LpOutcome::Infeasible => panic!("origin is feasible"),
            }
        }
    }
}
