//! Double-description vertex enumeration and convex hulls via polarity.

use alloc::vec::Vec;

use super::Polytope;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lp::{self, LpOutcome};

/// Largest ambient dimension handled by vertex enumeration.
pub const MAX_DIM: usize = 4;
/// Largest irredundant row count handled by vertex enumeration.
pub const MAX_ROWS: usize = 64;
const MAX_VERTICES: usize = 4096;

#[derive(Clone, Copy, PartialEq, Eq, Default)]
struct Bits([u64; 4]);

impl Bits {
    fn set(&mut self, k: usize) {
        self.0[k / 64] |= 1 << (k % 64);
    }
    fn get(&self, k: usize) -> bool {
        self.0[k / 64] >> (k % 64) & 1 == 1
    }
    fn and(&self, o: &Bits) -> Bits {
        Bits([self.0[0] & o.0[0], self.0[1] & o.0[1], self.0[2] & o.0[2], self.0[3] & o.0[3]])
    }
    fn or(&self, o: &Bits) -> Bits {
        Bits([self.0[0] | o.0[0], self.0[1] | o.0[1], self.0[2] | o.0[2], self.0[3] | o.0[3]])
    }
    fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
    fn superset_of(&self, o: &Bits) -> bool {
        self.and(o) == *o
    }
}

struct Vtx {
    p: Vector,
    tight: Bits,
}

pub(super) fn enumerate_vertices(poly: &Polytope) -> Result<Vec<Vector>> {
    let d = poly.dim();
    if d == 0 {
        return Ok(Vec::new());
    }
    if d > MAX_DIM {
        return Err(Error::CapExceeded("vertex enumeration dimension"));
    }
    let reduced;
    let poly = if poly.num_rows() > MAX_ROWS {
        reduced = match poly.reduce() {
            Ok(p) => p,
            Err(Error::EmptySet(_)) => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        if reduced.num_rows() > MAX_ROWS {
            return Err(Error::CapExceeded("vertex enumeration rows"));
        }
        &reduced
    } else {
        poly
    };

    let mut lo = Vector::zeros(d);
    let mut hi = Vector::zeros(d);
    for j in 0..d {
        let mut e = Vector::zeros(d);
        e[j] = 1.0;
        for (sign, slot) in [(1.0, &mut hi), (-1.0, &mut lo)] {
            match lp::maximize(&(&e * sign), poly.f(), poly.g()) {
                LpOutcome::Optimal { value, .. } => slot[j] = sign * value,
                LpOutcome::Infeasible => return Ok(Vec::new()),
                LpOutcome::Unbounded => return Err(Error::Unbounded("vertex enumeration of unbounded set")),
            }
        }
    }
    let scale = (&hi - &lo).amax().max(hi.amax()).max(lo.amax()).max(1.0);
    let margin = 0.5 * scale;
    let eps = 1e-10 * scale;

    // Constraint list: box rows first (2j: x_j ≤ hi, 2j+1: −x_j ≤ −lo).
    let mut rows: Vec<(Vector, f64)> = Vec::with_capacity(2 * d + poly.num_rows());
    for j in 0..d {
        let mut e = Vector::zeros(d);
        e[j] = 1.0;
        rows.push((e.clone(), hi[j] + margin));
        rows.push((-e, -(lo[j] - margin)));
    }
    for k in 0..poly.num_rows() {
        rows.push((poly.f().row(k).transpose(), poly.g()[k]));
    }

    let mut verts: Vec<Vtx> = Vec::with_capacity(1 << d);
    for corner in 0..(1usize << d) {
        let mut p = Vector::zeros(d);
        let mut tight = Bits::default();
        for j in 0..d {
            if corner >> j & 1 == 1 {
                p[j] = hi[j] + margin;
                tight.set(2 * j);
            } else {
                p[j] = lo[j] - margin;
                tight.set(2 * j + 1);
            }
        }
        verts.push(Vtx { p, tight });
    }

    for c in 2 * d..rows.len() {
        let (a, b) = (&rows[c].0, rows[c].1);
        let slack: Vec<f64> = verts.iter().map(|v| a.dot(&v.p) - b).collect();
        let plus: Vec<usize> = (0..verts.len()).filter(|&k| slack[k] > eps).collect();
        if plus.is_empty() {
            for (k, v) in verts.iter_mut().enumerate() {
                if slack[k] >= -eps {
                    v.tight.set(c);
                }
            }
            continue;
        }
        let minus: Vec<usize> = (0..verts.len()).filter(|&k| slack[k] < -eps).collect();
        let mut next: Vec<Vtx> = Vec::new();
        for (k, v) in verts.iter().enumerate() {
            if slack[k] <= eps {
                let mut tight = v.tight;
                if slack[k] >= -eps {
                    tight.set(c);
                }
                next.push(Vtx { p: v.p.clone(), tight });
            }
        }
        for &ip in &plus {
            for &im in &minus {
                let common = verts[ip].tight.and(&verts[im].tight);
                if !adjacent(&verts, ip, im, &common, &rows, d) {
                    continue;
                }
                let t = slack[ip] / (slack[ip] - slack[im]);
                let p = &verts[ip].p + (&verts[im].p - &verts[ip].p) * t;
                let mut tight = common;
                tight.set(c);
                merge_or_push(&mut next, Vtx { p, tight }, eps * 10.0);
            }
        }
        if next.is_empty() {
            return Ok(Vec::new());
        }
        if next.len() > MAX_VERTICES {
            return Err(Error::CapExceeded("vertex count"));
        }
        verts = next;
    }
    Ok(verts.into_iter().map(|v| v.p).collect())
}

fn adjacent(verts: &[Vtx], ip: usize, im: usize, common: &Bits, rows: &[(Vector, f64)], d: usize) -> bool {
    if (common.count() as usize) + 1 < d {
        return false;
    }
    for (k, w) in verts.iter().enumerate() {
        if k != ip && k != im && w.tight.superset_of(common) {
            return false;
        }
    }
    if d <= 1 {
        return true;
    }
    let idx: Vec<usize> = (0..rows.len()).filter(|&k| common.get(k)).collect();
    let mut m = Mat::zeros(idx.len(), d);
    for (r, &k) in idx.iter().enumerate() {
        m.set_row(r, &rows[k].0.transpose());
    }
    linalg::rank(&m, 1e-9) == d - 1
}

fn merge_or_push(list: &mut Vec<Vtx>, v: Vtx, tol: f64) {
    for w in list.iter_mut() {
        if (&w.p - &v.p).amax() <= tol {
            w.tight = w.tight.or(&v.tight);
            return;
        }
    }
    list.push(v);
}

/// H-representation of the convex hull of `points` in `R^d`.
///
/// Handles lower-dimensional hulls by working in the affine hull and
/// adding equality rows for the orthogonal complement.
pub fn convex_hull(points: &[Vector], d: usize) -> Result<Polytope> {
    if points.is_empty() {
        return Err(Error::EmptySet("hull of no points"));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Dimension(alloc::format!("hull points must be {d}-d")));
    }
    let k = points.len();
    let mut centroid = Vector::zeros(d);
    for p in points {
        centroid += p;
    }
    centroid /= k as f64;
    let mut centered = Mat::zeros(d, k);
    for (j, p) in points.iter().enumerate() {
        centered.set_column(j, &(p - &centroid));
    }
    let spread = centered.amax();
    if spread <= 1e-12 * centroid.amax().max(1.0) {
        return Ok(Polytope::singleton(&centroid));
    }
    let svd = centered.clone().svd(true, false);
    let u = svd.u.as_ref().ok_or(Error::Numerical("hull SVD"))?;
    let sv = &svd.singular_values;
    let smax = sv.max();
    // Singular values are not guaranteed sorted; collect basis columns explicitly.
    let mut span: Vec<usize> = Vec::new();
    let mut perp: Vec<usize> = Vec::new();
    for j in 0..sv.len() {
        if sv[j] > 1e-9 * smax {
            span.push(j);
        } else {
            perp.push(j);
        }
    }
    for j in sv.len()..u.ncols() {
        perp.push(j);
    }
    let r = span.len();
    let mut ur = Mat::zeros(d, r);
    for (c, &j) in span.iter().enumerate() {
        ur.set_column(c, &u.column(j));
    }
    let y = ur.transpose() * &centered;

    let mut out_rows: Vec<(Vector, f64)> = Vec::new();
    if r == 1 {
        let lo = y.row(0).min();
        let hi = y.row(0).max();
        let dir = ur.column(0).into_owned();
        out_rows.push((dir.clone(), hi + dir.dot(&centroid)));
        out_rows.push((-&dir, -lo - dir.dot(&centroid)));
    } else {
        // Polar: facets of conv(y) are vertices of {z : y_jᵀ z ≤ 1}.
        let polar = Polytope::new(y.transpose(), Vector::from_element(k, 1.0))?;
        let polar = polar.reduce()?;
        let zs = polar.vertices()?;
        if zs.is_empty() {
            return Err(Error::Numerical("hull polar is empty"));
        }
        for z in zs {
            let row = &ur * z;
            let off = 1.0 + row.dot(&centroid);
            out_rows.push((row, off));
        }
    }
    for &j in &perp {
        let dir = u.column(j).into_owned();
        let off = dir.dot(&centroid);
        out_rows.push((dir.clone(), off));
        out_rows.push((-dir, -off));
    }
    let mut f = Mat::zeros(out_rows.len(), d);
    let mut g = Vector::zeros(out_rows.len());
    for (k, (row, off)) in out_rows.into_iter().enumerate() {
        f.set_row(k, &row.transpose());
        g[k] = off;
    }
    let hull = Polytope::new(f, g)?;
    if r == d {
        hull.reduce()
    } else {
        Ok(hull)
    }
}
