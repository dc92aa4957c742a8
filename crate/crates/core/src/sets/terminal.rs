//! Terminal sets built subsystem by subsystem along the chain.

use alloc::vec::Vec;

use super::{check_robust_invariance, max_positive_invariant, robust_positive_invariant, Polytope, SET_TOL};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{ChainSystem, SubsystemModel};
use crate::synthesis::TerminalDesign;

/// Resolution of the scaling bisection.
pub const ALPHA_TOL: f64 = 1e-6;

/// Scaled terminal sets `α X_f^i`, one per subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSets {
    pub sets: Vec<Polytope>,
    pub alpha: f64,
    /// Vertices of `Ā^{i,i-1} α X_f^{i-1}` (empty for the first subsystem).
    pub disturbance_vertices: Vec<Vec<Vector>>,
    /// Invariance and admissibility verified on vertices.
    pub certified: Vec<bool>,
}

impl TerminalSets {
    pub fn all_certified(&self) -> bool {
        self.certified.iter().all(|&c| c)
    }

    pub fn contains(&self, xs: &[Vector], tol: f64) -> bool {
        xs.len() == self.sets.len() && self.sets.iter().zip(xs).all(|(s, x)| s.contains(x, tol))
    }
}

/// `{x : (G_x + G_u K) x ≤ b}`.
pub fn admissible_set(sub: &SubsystemModel, k: &Mat) -> Result<Polytope> {
    if k.nrows() != sub.m() || k.ncols() != sub.n() {
        return Err(Error::Dimension(alloc::format!(
            "gain is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            sub.m(),
            sub.n()
        )));
    }
    let set = Polytope::new(&sub.gx + &sub.gu * k, sub.bound.clone())?;
    if set.chebyshev_radius() <= 0.0 {
        return Err(Error::EmptySet("admissible set has empty interior"));
    }
    Ok(set)
}

fn check_admissible(x: &Polytope, verts: &[Vector]) -> bool {
    verts.iter().all(|v| x.contains(v, SET_TOL))
}

pub fn build_terminal_sets(chain: &ChainSystem, design: &TerminalDesign) -> Result<TerminalSets> {
    let m = chain.len();
    if design.gains.len() != m {
        return Err(Error::Dimension(alloc::format!("{} gains for {} subsystems", design.gains.len(), m)));
    }
    let mut admissible = Vec::with_capacity(m);
    let mut raw: Vec<Polytope> = Vec::with_capacity(m);
    for (i, sub) in chain.subsystems().iter().enumerate() {
        let k = &design.gains[i];
        let x = admissible_set(sub, k)?;
        let a_cl = sub.closed_loop(k);
        let xf = if i == 0 {
            max_positive_invariant(&a_cl, &x)?
        } else {
            let coupling = sub
                .closed_loop_coupling(&design.gains[i - 1])
                .unwrap_or_else(|| Mat::zeros(sub.n(), chain.get(i - 1).n()));
            let w = raw[i - 1].linear_map(&coupling)?;
            robust_positive_invariant(&a_cl, &x, &w)?
        };
        if !xf.has_interior() {
            return Err(Error::EmptySet("terminal set has empty interior"));
        }
        admissible.push(x);
        raw.push(xf);
    }

    let fits = |alpha: f64| -> Result<bool> {
        for (x, xf) in admissible.iter().zip(&raw) {
            if !x.contains_set(&xf.scale(alpha), SET_TOL)? {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let alpha = if fits(1.0)? {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > ALPHA_TOL {
            let mid = 0.5 * (lo + hi);
            if fits(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo <= 0.0 {
            return Err(Error::EmptySet("no positive terminal-set scaling"));
        }
        lo
    };

    let sets: Vec<Polytope> = raw.iter().map(|s| s.scale(alpha)).collect();
    certify_terminal_sets(chain, design, sets, alpha)
}

/// Vertex checks of invariance and admissibility for given sets, e.g. sets
/// read back from a file.
pub fn certify_terminal_sets(
    chain: &ChainSystem,
    design: &TerminalDesign,
    sets: Vec<Polytope>,
    alpha: f64,
) -> Result<TerminalSets> {
    let m = chain.len();
    if design.gains.len() != m || sets.len() != m {
        return Err(Error::Dimension(alloc::format!(
            "{} gains and {} sets for {} subsystems",
            design.gains.len(),
            sets.len(),
            m
        )));
    }
    let mut verts: Vec<Vec<Vector>> = Vec::with_capacity(m);
    for (s, sub) in sets.iter().zip(chain.subsystems()) {
        if s.dim() != sub.n() {
            return Err(Error::Dimension(alloc::format!("set of dimension {} for n = {}", s.dim(), sub.n())));
        }
        verts.push(s.vertices()?);
    }
    let mut disturbance_vertices = Vec::with_capacity(m);
    let mut certified = Vec::with_capacity(m);
    for (i, sub) in chain.subsystems().iter().enumerate() {
        let a_cl = sub.closed_loop(&design.gains[i]);
        let w: Vec<Vector> = if i == 0 {
            alloc::vec![Vector::zeros(sub.n())]
        } else {
            let c = sub
                .closed_loop_coupling(&design.gains[i - 1])
                .unwrap_or_else(|| Mat::zeros(sub.n(), chain.get(i - 1).n()));
            verts[i - 1].iter().map(|v| &c * v).collect()
        };
        let admissible = admissible_set(sub, &design.gains[i])?;
        let ok = check_robust_invariance(&a_cl, &sets[i], &w, SET_TOL)? && check_admissible(&admissible, &verts[i]);
        certified.push(ok);
        disturbance_vertices.push(if i == 0 { Vec::new() } else { w });
    }
    Ok(TerminalSets {
        sets,
        alpha,
        disturbance_vertices,
        certified,
    })
}
