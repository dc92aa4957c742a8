//! Structured factorization of the reduced Newton system.
//!
//! Every function here works on the data of one subsystem (plus payloads
//! received from its predecessor), so the centralized and distributed paths
//! share the same arithmetic.

use alloc::vec::Vec;

use crate::dist::{FlopCounter, FlopRow};
use crate::error::Result;
use crate::linalg::{
    backward_solve_transposed_vec, cholesky_regularized, forward_solve_vec, lower_inverse, mul_aat, mul_abt,
    right_solve_lower_transposed, Mat, Vector,
};
use crate::qpstruct::{LocalQp, StructuredQP};

/// Default diagonal shift for a failing Cholesky block.
pub const REGULARIZATION: f64 = 1e-12;

/// `V^{ii}`: row block `r` holds `diag[r]` at stage block `r` and `upper[r]`
/// at stage block `r + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedV {
    pub diag: Vec<Mat>,
    pub upper: Vec<Mat>,
}

/// Everything one subsystem keeps after factorizing.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemFactor {
    /// `λ/s` on the subsystem's inequality rows.
    pub scaling: Vector,
    pub phi: Vec<Mat>,
    /// Stage-block Cholesky factors of `Φ^i`.
    pub lbold: Vec<Mat>,
    pub v: BandedV,
    /// `W^{i,i−1}` stage blocks; empty for the leader.
    pub w: Vec<Mat>,
    pub y_diag: Mat,
    pub y_off: Option<Mat>,
    pub l_diag: Mat,
    pub l_off: Option<Mat>,
    pub regularized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredFactorization {
    pub subs: Vec<SubsystemFactor>,
}

/// `λ/s` per subsystem.
pub fn split_scaling(qp: &StructuredQP, lambda: &Vector, s: &Vector) -> Vec<Vector> {
    let io = qp.ineq_offsets();
    (0..qp.subs.len())
        .map(|i| {
            let len = io[i + 1] - io[i];
            lambda.rows(io[i], len).component_div(&s.rows(io[i], len))
        })
        .collect()
}

/// Stage blocks of `Φ^i = H^i + 𝐆ᵢᵀ diag(d) 𝐆^i`.
pub fn stage_phi(qp: &LocalQp, d: &Vector) -> Vec<Mat> {
    let sub = qp.sub;
    let horizon = qp.layout.horizon;
    (0..=horizon)
        .map(|j| {
            let (g, r0) = sub.g_block(j, horizon);
            let mut scaled = g.clone();
            for (k, mut row) in scaled.row_iter_mut().enumerate() {
                row *= d[r0 + k];
            }
            &sub.h_blocks[j] + g.transpose() * scaled
        })
        .collect()
}

/// `Φ` blocks for all subsystems.
pub fn assemble_phi(qp: &StructuredQP, lambda: &Vector, s: &Vector) -> Vec<Vec<Mat>> {
    split_scaling(qp, lambda, s)
        .iter()
        .enumerate()
        .map(|(i, d)| stage_phi(&qp.local(i), d))
        .collect()
}

/// `r_d^i = r_z^i + 𝐆ᵢᵀ (d ∘ r_λ^i − r_s^i / s^i)`.
pub fn reduced_rhs(qp: &LocalQp, s_i: &Vector, d: &Vector, rz: &Vector, rl: &Vector, rs: &Vector) -> Vector {
    let y = d.component_mul(rl) - rs.component_div(s_i);
    rz + qp.g_tmul(&y)
}

/// Per-stage Cholesky factors; returns whether any block needed a shift.
pub fn factor_stage_cholesky(phi: &[Mat], eps: f64, flops: &mut u64) -> Result<(Vec<Mat>, bool)> {
    let mut shifted = false;
    let mut out = Vec::with_capacity(phi.len());
    for p in phi {
        let (l, s) = cholesky_regularized(p, eps, flops)?;
        shifted |= s;
        out.push(l);
    }
    Ok((out, shifted))
}

/// `V^{ii} = C^{ii} (𝐋^i)^{-T}` by forward substitution per stage block.
pub fn compute_v(qp: &LocalQp, lbold: &[Mat], counter: &mut FlopCounter) -> BandedV {
    let horizon = qp.layout.horizon;
    let (i, sub) = (qp.index, qp.sub);
    let mut diag = Vec::with_capacity(horizon);
    let mut upper = Vec::with_capacity(horizon);
    for j in 0..=horizon {
        let row = if j == 0 {
            FlopRow::SolveVFirst
        } else if j == horizon {
            FlopRow::SolveVLast
        } else {
            FlopRow::SolveVMiddle
        };
        let f = counter.row_mut(i, row);
        if j == horizon {
            upper.push(lower_inverse(&lbold[j], f).transpose());
            continue;
        }
        for (rb, blk) in sub.c_own_column(j, horizon) {
            let x = right_solve_lower_transposed(&blk, &lbold[j], f);
            if rb == j {
                diag.push(x);
            } else {
                upper.push(x);
            }
        }
    }
    BandedV { diag, upper }
}

/// `W^{i,i−1} = C^{i,i−1} (𝐋^{i−1})^{-T}`; the last stage block is zero and
/// not stored.
pub fn compute_w(qp: &LocalQp, lbold_prev: &[Mat], counter: &mut FlopCounter) -> Vec<Mat> {
    let horizon = qp.layout.horizon;
    let (i, sub) = (qp.index, qp.sub);
    let mut w = Vec::with_capacity(horizon);
    for j in 0..horizon {
        let row = if j == 0 { FlopRow::SolveWFirst } else { FlopRow::SolveWMiddle };
        let c = sub
            .c_cpl_column(j, horizon)
            .unwrap_or_else(|| Mat::zeros(sub.n, lbold_prev[j].nrows()));
        w.push(right_solve_lower_transposed(&c, &lbold_prev[j], counter.row_mut(i, row)));
    }
    w
}

/// `Y^{ii} = W Wᵀ + V Vᵀ` (dense, `N n_i` square).
pub fn y_diag_block(v: &BandedV, w: &[Mat], n: usize, flops: &mut u64) -> Mat {
    let horizon = v.diag.len();
    let mut y = Mat::zeros(horizon * n, horizon * n);
    for r in 0..horizon {
        let mut blk = mul_aat(&v.diag[r], flops) + mul_aat(&v.upper[r], flops);
        if let Some(wr) = w.get(r) {
            blk += mul_aat(wr, flops);
        }
        y.view_mut((r * n, r * n), (n, n)).copy_from(&blk);
        if r + 1 < horizon {
            let off = mul_abt(&v.diag[r + 1], &v.upper[r], flops);
            y.view_mut(((r + 1) * n, r * n), (n, n)).copy_from(&off);
            y.view_mut((r * n, (r + 1) * n), (n, n)).copy_from(&off.transpose());
        }
    }
    y
}

/// `Y^{i,i−1} = W^{i,i−1} (V^{i−1,i−1})ᵀ`.
pub fn y_off_block(w: &[Mat], v_prev: &BandedV, n: usize, n_prev: usize, flops: &mut u64) -> Mat {
    let horizon = w.len();
    let mut y = Mat::zeros(horizon * n, horizon * n_prev);
    for r in 0..horizon {
        let same = mul_abt(&w[r], &v_prev.diag[r], flops);
        y.view_mut((r * n, r * n_prev), (n, n_prev)).copy_from(&same);
        if r > 0 {
            let before = mul_abt(&w[r], &v_prev.upper[r - 1], flops);
            y.view_mut((r * n, (r - 1) * n_prev), (n, n_prev)).copy_from(&before);
        }
    }
    y
}

/// `L^{i,i−1} = Y^{i,i−1} (L^{i−1,i−1})^{-T}`.
pub fn l_off_block(y_off: &Mat, l_prev: &Mat, flops: &mut u64) -> Mat {
    right_solve_lower_transposed(y_off, l_prev, flops)
}

/// `L^{ii} = chol(Y^{ii} − L^{i,i−1} (L^{i,i−1})ᵀ)`.
pub fn l_diag_block(y_diag: &Mat, l_off: Option<&Mat>, eps: f64, flops: &mut u64) -> Result<(Mat, bool)> {
    match l_off {
        Some(l) => {
            let s = y_diag - mul_aat(l, flops);
            cholesky_regularized(&s, eps, flops)
        }
        None => cholesky_regularized(y_diag, eps, flops),
    }
}

/// Factorizes subsystem `i` given its predecessor's data.
pub fn factor_subsystem(
    qp: &LocalQp,
    scaling: Vector,
    prev: Option<(&[Mat], &BandedV, &Mat)>,
    eps: f64,
    counter: &mut FlopCounter,
) -> Result<SubsystemFactor> {
    let i = qp.index;
    let n = qp.layout.n[i];
    let phi = stage_phi(qp, &scaling);
    let (lbold, mut regularized) = factor_stage_cholesky(&phi, eps, counter.row_mut(i, FlopRow::FactorPhi))?;
    let v = compute_v(qp, &lbold, counter);
    let (w, y_off, l_off) = match prev {
        Some((lbold_prev, v_prev, l_prev)) => {
            let w = compute_w(qp, lbold_prev, counter);
            let y_off = y_off_block(&w, v_prev, n, qp.layout.n[i - 1], counter.row_mut(i, FlopRow::YOffDiag));
            let l_off = l_off_block(&y_off, l_prev, counter.row_mut(i, FlopRow::LOffDiag));
            (w, Some(y_off), Some(l_off))
        }
        None => (Vec::new(), None, None),
    };
    let y_diag = y_diag_block(&v, &w, n, counter.row_mut(i, FlopRow::YDiag));
    let (l_diag, shifted) = l_diag_block(&y_diag, l_off.as_ref(), eps, counter.row_mut(i, FlopRow::LDiag))?;
    regularized |= shifted;
    Ok(SubsystemFactor {
        scaling,
        phi,
        lbold,
        v,
        w,
        y_diag,
        y_off,
        l_diag,
        l_off,
        regularized,
    })
}

/// Centralized factorization, sequential along the chain.
pub fn factorize(
    qp: &StructuredQP,
    lambda: &Vector,
    s: &Vector,
    eps: f64,
    counter: &mut FlopCounter,
) -> Result<StructuredFactorization> {
    let scalings = split_scaling(qp, lambda, s);
    let mut subs: Vec<SubsystemFactor> = Vec::with_capacity(scalings.len());
    for (i, d) in scalings.into_iter().enumerate() {
        let f = {
            let prev = subs.last().map(|p| (&p.lbold[..], &p.v, &p.l_diag));
            factor_subsystem(&qp.local(i), d, prev, eps, counter)?
        };
        subs.push(f);
    }
    Ok(StructuredFactorization { subs })
}

/// `x ↦ (𝐋^i)^{-1} x` over the stage blocks of `z^i`.
pub fn lbold_solve(lbold: &[Mat], x: &Vector) -> Vector {
    let mut out = x.clone();
    let mut o = 0;
    let mut f = 0;
    for l in lbold {
        let k = l.nrows();
        let mut seg = out.rows(o, k).into_owned();
        forward_solve_vec(l, &mut seg, &mut f);
        out.rows_mut(o, k).copy_from(&seg);
        o += k;
    }
    out
}

/// `x ↦ (𝐋^i)^{-T} x`.
pub fn lbold_solve_t(lbold: &[Mat], x: &Vector) -> Vector {
    let mut out = x.clone();
    let mut o = 0;
    let mut f = 0;
    for l in lbold {
        let k = l.nrows();
        let mut seg = out.rows(o, k).into_owned();
        backward_solve_transposed_vec(l, &mut seg, &mut f);
        out.rows_mut(o, k).copy_from(&seg);
        o += k;
    }
    out
}

fn stage_offsets(lbold: &[Mat]) -> Vec<usize> {
    crate::model::offsets(lbold.iter().map(|l| l.nrows()))
}

/// `V x` with `x` in the layout of `z^i`.
pub fn v_mul(v: &BandedV, lbold: &[Mat], x: &Vector) -> Vector {
    let so = stage_offsets(lbold);
    let n = v.diag.first().map_or(0, |d| d.nrows());
    let mut out = Vector::zeros(v.diag.len() * n);
    for r in 0..v.diag.len() {
        let a = &v.diag[r] * x.rows(so[r], so[r + 1] - so[r]);
        let b = &v.upper[r] * x.rows(so[r + 1], so[r + 2] - so[r + 1]);
        out.rows_mut(r * n, n).copy_from(&(a + b));
    }
    out
}

/// `W x` with `x` in the layout of `z^{i−1}`.
pub fn w_mul(w: &[Mat], lbold_prev: &[Mat], x: &Vector) -> Vector {
    let so = stage_offsets(lbold_prev);
    let n = w.first().map_or(0, |b| b.nrows());
    let mut out = Vector::zeros(w.len() * n);
    for (r, b) in w.iter().enumerate() {
        out.rows_mut(r * n, n).copy_from(&(b * x.rows(so[r], so[r + 1] - so[r])));
    }
    out
}

/// `τ̃^i = r_ν^i − V^{ii} t^i − W^{i,i−1} t^{i−1}` with `t = 𝐋^{-1} r_d`.
pub fn schur_rhs(r_nu: &Vector, v_term: &Vector, w_term: Option<&Vector>) -> Vector {
    let mut out = r_nu - v_term;
    if let Some(w) = w_term {
        out -= w;
    }
    out
}

/// Forward sweep step: `y^i = (L^{ii})^{-1} (τ̃^i − L^{i,i−1} y^{i−1})`.
pub fn forward_step(l_diag: &Mat, l_off: Option<&Mat>, tau: &Vector, y_prev: Option<&Vector>) -> Vector {
    let mut rhs = tau.clone();
    if let (Some(l), Some(y)) = (l_off, y_prev) {
        rhs -= l * y;
    }
    let mut f = 0;
    forward_solve_vec(l_diag, &mut rhs, &mut f);
    rhs
}

/// Backward sweep step: `Δν^i = (L^{ii})^{-T} (y^i − (L^{i+1,i})ᵀ Δν^{i+1})`.
pub fn backward_step(l_diag: &Mat, y: &Vector, coupling: Option<&Vector>) -> Vector {
    let mut rhs = y.clone();
    if let Some(c) = coupling {
        rhs -= c;
    }
    let mut f = 0;
    backward_solve_transposed_vec(l_diag, &mut rhs, &mut f);
    rhs
}

/// `(L^{i+1,i})ᵀ Δν^{i+1}`, computed by the owner of `L^{i+1,i}`.
pub fn l_off_tmul(l_off: &Mat, dnu: &Vector) -> Vector {
    l_off.tr_mul(dnu)
}

/// `Δz^i = (Φ^i)^{-1} (−r_d^i − (C^{ii})ᵀ Δν^i − (C^{i+1,i})ᵀ Δν^{i+1})`.
pub fn primal_step(qp: &LocalQp, lbold: &[Mat], rd: &Vector, dnu: &Vector, next: Option<&Vector>) -> Vector {
    let mut rhs = -rd - qp.c_own_tmul(dnu);
    if let Some(c) = next {
        rhs -= c;
    }
    lbold_solve_t(lbold, &lbold_solve(lbold, &rhs))
}

/// `(Δλ^i, Δs^i)` from `Δz^i`.
pub fn dual_step(
    qp: &LocalQp,
    lam: &Vector,
    s: &Vector,
    d: &Vector,
    rl: &Vector,
    rs: &Vector,
    dz: &Vector,
) -> (Vector, Vector) {
    let gdz = qp.g_mul(dz);
    let dlam = d.component_mul(&(rl + gdz)) - rs.component_div(s);
    let ds = -(rs + s.component_mul(&dlam)).component_div(lam);
    (dlam, ds)
}

impl StructuredFactorization {
    pub fn any_regularized(&self) -> bool {
        self.subs.iter().any(|s| s.regularized)
    }

    /// Dense `Y` assembled from the blocks.
    pub fn dense_y(&self) -> Mat {
        self.dense_tridiag(|s| &s.y_diag, |s| s.y_off.as_ref(), true)
    }

    /// Dense lower block-bidiagonal `L`.
    pub fn dense_l(&self) -> Mat {
        self.dense_tridiag(|s| &s.l_diag, |s| s.l_off.as_ref(), false)
    }

    fn dense_tridiag<'a>(
        &'a self,
        diag: impl Fn(&'a SubsystemFactor) -> &'a Mat,
        off: impl Fn(&'a SubsystemFactor) -> Option<&'a Mat>,
        mirror: bool,
    ) -> Mat {
        let o = crate::model::offsets(self.subs.iter().map(|s| s.y_diag.nrows()));
        let total = o[self.subs.len()];
        let mut y = Mat::zeros(total, total);
        for (i, s) in self.subs.iter().enumerate() {
            let d = diag(s);
            y.view_mut((o[i], o[i]), d.shape()).copy_from(d);
            if let Some(b) = off(s) {
                y.view_mut((o[i], o[i - 1]), b.shape()).copy_from(b);
                if mirror {
                    y.view_mut((o[i - 1], o[i]), (b.ncols(), b.nrows())).copy_from(&b.transpose());
                }
            }
        }
        y
    }

    /// Dense `V^{ii}` in the stage layout of `z^i` (tests and diagnostics).
    pub fn dense_v(&self, i: usize) -> Mat {
        let s = &self.subs[i];
        let so = stage_offsets(&s.lbold);
        let n = s.l_diag.nrows() / s.v.diag.len();
        let mut out = Mat::zeros(s.l_diag.nrows(), so[s.lbold.len()]);
        for r in 0..s.v.diag.len() {
            out.view_mut((r * n, so[r]), s.v.diag[r].shape()).copy_from(&s.v.diag[r]);
            out.view_mut((r * n, so[r + 1]), s.v.upper[r].shape()).copy_from(&s.v.upper[r]);
        }
        out
    }

    /// Dense `W^{i,i−1}` in the stage layout of `z^{i−1}`.
    pub fn dense_w(&self, i: usize) -> Mat {
        let s = &self.subs[i];
        let p = &self.subs[i - 1];
        let so = stage_offsets(&p.lbold);
        let n = s.l_diag.nrows() / s.w.len();
        let mut out = Mat::zeros(s.l_diag.nrows(), so[p.lbold.len()]);
        for (r, b) in s.w.iter().enumerate() {
            out.view_mut((r * n, so[r]), b.shape()).copy_from(b);
        }
        out
    }
}
