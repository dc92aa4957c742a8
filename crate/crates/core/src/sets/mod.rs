//! Polytopes in H-representation and the distributed terminal-set construction.

mod invariant;
mod terminal;
mod vertex;

use alloc::vec::Vec;

pub use invariant::{
    check_positive_invariance, check_robust_invariance, max_positive_invariant,
    robust_positive_invariant, MAX_SET_ITERATIONS,
};
pub use terminal::{admissible_set, build_terminal_sets, certify_terminal_sets, TerminalSets, ALPHA_TOL};
pub use vertex::{convex_hull, MAX_DIM, MAX_ROWS};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lp::{self, LpOutcome};

/// Tolerance for containment, equality and redundancy decisions.
pub const SET_TOL: f64 = 1e-9;

/// `{x : F x ≤ g}` with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    f: Mat,
    g: Vector,
}

impl Polytope {
    /// Builds a polytope, normalizing each row of `F` to unit length.
    ///
    /// Zero rows with `g ≥ 0` are dropped; a zero row with `g < 0` is kept
    /// (the set is empty).
    pub fn new(f: Mat, g: Vector) -> Result<Self> {
        if f.nrows() != g.len() {
            return Err(Error::Dimension(alloc::format!(
                "polytope has {} rows but {} offsets",
                f.nrows(),
                g.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) || f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite polytope data"));
        }
        let d = f.ncols();
        let mut rows: Vec<(Vector, f64)> = Vec::with_capacity(f.nrows());
        for k in 0..f.nrows() {
            let row = f.row(k).transpose();
            let nrm = row.norm();
            if nrm <= 1e-13 {
                if g[k] < -1e-13 {
                    rows.push((Vector::zeros(d), g[k]));
                }
                continue;
            }
            rows.push((row / nrm, g[k] / nrm));
        }
        Ok(Self::from_rows(d, rows))
    }

    fn from_rows(d: usize, rows: Vec<(Vector, f64)>) -> Self {
        let mut f = Mat::zeros(rows.len(), d);
        let mut g = Vector::zeros(rows.len());
        for (k, (row, off)) in rows.into_iter().enumerate() {
            f.set_row(k, &row.transpose());
            g[k] = off;
        }
        Polytope { f, g }
    }

    /// Axis-aligned box `|x_j| ≤ radius_j`.
    pub fn centered_box(radii: &[f64]) -> Self {
        let d = radii.len();
        let mut f = Mat::zeros(2 * d, d);
        let mut g = Vector::zeros(2 * d);
        for (j, &r) in radii.iter().enumerate() {
            f[(2 * j, j)] = 1.0;
            f[(2 * j + 1, j)] = -1.0;
            g[2 * j] = r;
            g[2 * j + 1] = r;
        }
        Polytope { f, g }
    }

    pub fn unit_box(d: usize, radius: f64) -> Self {
        Self::centered_box(&alloc::vec![radius; d])
    }

    /// The singleton `{p}` as a degenerate polytope.
    pub fn singleton(p: &Vector) -> Self {
        let d = p.len();
        let mut f = Mat::zeros(2 * d, d);
        let mut g = Vector::zeros(2 * d);
        for j in 0..d {
            f[(2 * j, j)] = 1.0;
            f[(2 * j + 1, j)] = -1.0;
            g[2 * j] = p[j];
            g[2 * j + 1] = -p[j];
        }
        Polytope { f, g }
    }

    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.f.nrows()
    }

    pub fn f(&self) -> &Mat {
        &self.f
    }

    pub fn g(&self) -> &Vector {
        &self.g
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.num_rows() == 0 || (&self.f * x - &self.g).max() <= tol
    }

    /// `α P`.
    pub fn scale(&self, alpha: f64) -> Self {
        Polytope {
            f: self.f.clone(),
            g: &self.g * alpha,
        }
    }

    /// Since rows have unit norm, `g_k` is the distance from the origin to
    /// facet `k`; the origin is interior iff every `g_k > tol`.
    pub fn origin_interior(&self, tol: f64) -> bool {
        self.g.iter().all(|&v| v > tol)
    }

    /// Chebyshev radius; `+∞` for sets containing arbitrarily large balls,
    /// negative for empty sets.
    pub fn chebyshev_radius(&self) -> f64 {
        if self.num_rows() == 0 {
            return f64::INFINITY;
        }
        match lp::chebyshev(&self.f, &self.g) {
            Some((_, r)) => r,
            None => f64::INFINITY,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.chebyshev_radius() < -SET_TOL
    }

    pub fn has_interior(&self) -> bool {
        self.chebyshev_radius() > SET_TOL
    }

    /// Support function `h_P(c) = max_{x ∈ P} cᵀx`.
    pub fn support(&self, c: &Vector) -> Result<f64> {
        match lp::maximize(c, &self.f, &self.g) {
            LpOutcome::Optimal { value, .. } => Ok(value),
            LpOutcome::Infeasible => Err(Error::EmptySet("support of empty polytope")),
            LpOutcome::Unbounded => Err(Error::Unbounded("support function")),
        }
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(alloc::format!(
                "intersection of {}-d and {}-d sets",
                self.dim(),
                other.dim()
            )));
        }
        let f = linalg::vstack(&[&self.f, &other.f]);
        let mut g = Vector::zeros(self.g.len() + other.g.len());
        g.rows_mut(0, self.g.len()).copy_from(&self.g);
        g.rows_mut(self.g.len(), other.g.len()).copy_from(&other.g);
        Ok(Polytope { f, g })
    }

    /// Appends raw halfspaces `F x ≤ g` (normalized on the way in).
    pub fn with_rows(&self, f: &Mat, g: &Vector) -> Result<Polytope> {
        self.intersect(&Polytope::new(f.clone(), g.clone())?)
    }

    /// Removes duplicate and redundant rows.
    ///
    /// Errors with [`Error::EmptySet`] when the set is found to be empty.
    pub fn reduce(&self) -> Result<Polytope> {
        let d = self.dim();
        if self.is_empty() {
            return Err(Error::EmptySet("reduce"));
        }
        // Parallel duplicates: keep the tightest offset.
        let mut rows: Vec<(Vector, f64)> = Vec::new();
        'outer: for k in 0..self.num_rows() {
            let row = self.f.row(k).transpose();
            if row.norm() == 0.0 {
                continue;
            }
            for (r, off) in rows.iter_mut() {
                if (&*r - &row).amax() <= 1e-10 {
                    *off = off.min(self.g[k]);
                    continue 'outer;
                }
            }
            rows.push((row, self.g[k]));
        }
        let mut keep = alloc::vec![true; rows.len()];
        for k in 0..rows.len() {
            let others: Vec<usize> = (0..rows.len()).filter(|&j| j != k && keep[j]).collect();
            let mut f = Mat::zeros(others.len() + 1, d);
            let mut g = Vector::zeros(others.len() + 1);
            for (r, &j) in others.iter().enumerate() {
                f.set_row(r, &rows[j].0.transpose());
                g[r] = rows[j].1;
            }
            f.set_row(others.len(), &rows[k].0.transpose());
            g[others.len()] = rows[k].1 + 1.0;
            match lp::maximize(&rows[k].0, &f, &g) {
                LpOutcome::Optimal { value, .. } => {
                    if value <= rows[k].1 + SET_TOL * 0.1 {
                        keep[k] = false;
                    }
                }
                LpOutcome::Infeasible => return Err(Error::EmptySet("reduce")),
                LpOutcome::Unbounded => {}
            }
        }
        let kept: Vec<(Vector, f64)> = rows
            .into_iter()
            .zip(keep)
            .filter_map(|(r, k)| k.then_some(r))
            .collect();
        Ok(Self::from_rows(d, kept))
    }

    /// `self ⊇ other` up to `tol`.
    pub fn contains_set(&self, other: &Polytope, tol: f64) -> Result<bool> {
        if other.is_empty() {
            return Ok(true);
        }
        for k in 0..self.num_rows() {
            let c = self.f.row(k).transpose();
            match other.support(&c) {
                Ok(h) => {
                    if h > self.g[k] + tol {
                        return Ok(false);
                    }
                }
                Err(Error::Unbounded(_)) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    /// Mutual containment.
    pub fn set_eq(&self, other: &Polytope, tol: f64) -> Result<bool> {
        Ok(self.contains_set(other, tol)? && other.contains_set(self, tol)?)
    }

    /// Vertices of a bounded polytope (empty list for an empty set).
    pub fn vertices(&self) -> Result<Vec<Vector>> {
        vertex::enumerate_vertices(self)
    }

    /// Image `{M x : x ∈ P}`.
    pub fn linear_map(&self, m: &Mat) -> Result<Polytope> {
        if m.ncols() != self.dim() {
            return Err(Error::Dimension(alloc::format!(
                "map with {} columns applied to a {}-d set",
                m.ncols(),
                self.dim()
            )));
        }
        if m.nrows() == m.ncols() && m.nrows() > 0 {
            let svd = m.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smax > 0.0 && smin > 1e-10 * smax {
                let inv = linalg::inverse(m)?;
                return Polytope::new(&self.f * inv, self.g.clone());
            }
        }
        let verts = self.vertices()?;
        if verts.is_empty() {
            return Err(Error::EmptySet("linear_map of empty set"));
        }
        let mapped: Vec<Vector> = verts.iter().map(|v| m * v).collect();
        convex_hull(&mapped, m.nrows())
    }

    /// `P ⊕ Q` via the hull of pairwise vertex sums.
    pub fn minkowski_sum(&self, other: &Polytope) -> Result<Polytope> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(alloc::format!(
                "Minkowski sum of {}-d and {}-d sets",
                self.dim(),
                other.dim()
            )));
        }
        let a = self.vertices()?;
        let b = other.vertices()?;
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptySet("Minkowski sum operand"));
        }
        let mut sums = Vec::with_capacity(a.len() * b.len());
        for p in &a {
            for q in &b {
                sums.push(p + q);
            }
        }
        convex_hull(&sums, self.dim())
    }

    /// `P ⊖ W = {x : x + w ∈ P ∀ w ∈ W}` via `g_k − h_W(F_k)`.
    ///
    /// The result is not reduced and may be empty.
    pub fn pontryagin_diff(&self, w: &Polytope) -> Result<Polytope> {
        if self.dim() != w.dim() {
            return Err(Error::Dimension(alloc::format!(
                "Pontryagin difference of {}-d and {}-d sets",
                self.dim(),
                w.dim()
            )));
        }
        if w.is_empty() {
            return Err(Error::EmptySet("Pontryagin subtrahend"));
        }
        let mut g = self.g.clone();
        for k in 0..self.num_rows() {
            let c = self.f.row(k).transpose();
            g[k] -= w.support(&c)?;
        }
        Ok(Polytope { f: self.f.clone(), g })
    }
}
