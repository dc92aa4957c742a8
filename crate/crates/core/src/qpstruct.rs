//! Block-structured QP of the finite-horizon problem.
//!
//! Per subsystem the decision vector is ordered by stage:
//! `z^i = (u_0, (x_1, u_1), …, (x_{N−1}, u_{N−1}), x_N)`; the global `z`
//! stacks the `z^i` by subsystem. The problem is
//!
//! ```text
//! min ½ zᵀHz   s.t.   C z = c,   G z ≤ b
//! ```
//!
//! with `H` block-diagonal, `C` block lower-bidiagonal by subsystem and `G`
//! block-diagonal. The initial state enters only through `c` and `b`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{offsets, ChainSystem};
use crate::sets::TerminalSets;
use crate::synthesis::TerminalDesign;

/// Offsets of every stage block of every subsystem in `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLayout {
    pub horizon: usize,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    /// Start of `z^i`, with a trailing total.
    pub seg: Vec<usize>,
}

impl StageLayout {
    pub fn new(n: Vec<usize>, m: Vec<usize>, horizon: usize) -> Self {
        let seg = offsets(n.iter().zip(&m).map(|(a, b)| horizon * (a + b)));
        StageLayout { horizon, n, m, seg }
    }

    pub fn subsystems(&self) -> usize {
        self.n.len()
    }

    /// Length of `z^i`, `N (n_i + m_i)`.
    pub fn seg_len(&self, i: usize) -> usize {
        self.horizon * (self.n[i] + self.m[i])
    }

    pub fn total(&self) -> usize {
        self.seg[self.subsystems()]
    }

    /// Size of stage block `j ∈ 0..=N` of subsystem `i`.
    pub fn block_size(&self, i: usize, j: usize) -> usize {
        if j == 0 {
            self.m[i]
        } else if j == self.horizon {
            self.n[i]
        } else {
            self.n[i] + self.m[i]
        }
    }

    /// Offset of stage block `j` inside `z^i`.
    pub fn block_offset(&self, i: usize, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            self.m[i] + (j - 1) * (self.n[i] + self.m[i])
        }
    }

    pub fn block_sizes(&self, i: usize) -> Vec<usize> {
        (0..=self.horizon).map(|j| self.block_size(i, j)).collect()
    }

    /// Number of equality rows of subsystem `i`, `N n_i`.
    pub fn eq_rows(&self, i: usize) -> usize {
        self.horizon * self.n[i]
    }

    pub fn eq_offsets(&self) -> Vec<usize> {
        offsets((0..self.subsystems()).map(|i| self.eq_rows(i)))
    }

    /// Packs a trajectory `x_1..x_N`, `u_0..u_{N−1}` of subsystem `i` into `z^i`.
    pub fn pack(&self, i: usize, xs: &[Vector], us: &[Vector]) -> Vector {
        let mut z = Vector::zeros(self.seg_len(i));
        let (n, m) = (self.n[i], self.m[i]);
        for (t, u) in us.iter().enumerate().take(self.horizon) {
            let o = self.block_offset(i, t) + if t == 0 { 0 } else { n };
            z.rows_mut(o, m).copy_from(u);
        }
        for (k, x) in xs.iter().enumerate().take(self.horizon) {
            let t = k + 1;
            z.rows_mut(self.block_offset(i, t), n).copy_from(x);
        }
        z
    }

    /// First input `u_0^i` from the global `z`.
    pub fn first_input(&self, z: &Vector, i: usize) -> Vector {
        z.rows(self.seg[i], self.m[i]).into_owned()
    }

    /// State `x_t^i`, `t ∈ 1..=N`, from the global `z`.
    pub fn state(&self, z: &Vector, i: usize, t: usize) -> Vector {
        z.rows(self.seg[i] + self.block_offset(i, t), self.n[i]).into_owned()
    }

    /// Input `u_t^i`, `t ∈ 0..N`, from the global `z`.
    pub fn input(&self, z: &Vector, i: usize, t: usize) -> Vector {
        let o = self.block_offset(i, t) + if t == 0 { 0 } else { self.n[i] };
        z.rows(self.seg[i] + o, self.m[i]).into_owned()
    }
}

/// Blocks owned by one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemQp {
    pub n: usize,
    pub m: usize,
    /// Stage cost blocks: `R`, then `diag(Q, R)` for `N − 1` stages, then `P`.
    pub h_blocks: Vec<Mat>,
    /// `[A B]`.
    pub a_bold: Mat,
    pub b: Mat,
    /// `[A_cpl B_cpl]` and `B_cpl`; `None` for the leader.
    pub a_cpl_bold: Option<Mat>,
    pub b_cpl: Option<Mat>,
    /// Mixed constraint rows `[G_x G_u]`.
    pub g_stage: Mat,
    pub gu: Mat,
    /// Terminal rows `F_f`.
    pub g_term: Mat,
    /// `b − G_x x_0`, `b` repeated, then `f_f`.
    pub b_vec: Vector,
    /// Right-hand side of the dynamics rows.
    pub c_vec: Vector,
}

impl SubsystemQp {
    pub fn q_rows(&self) -> usize {
        self.g_stage.nrows()
    }

    pub fn term_rows(&self) -> usize {
        self.g_term.nrows()
    }

    pub fn ineq_rows(&self) -> usize {
        self.b_vec.len()
    }

    /// Inequality matrix of stage block `j` and its first row.
    pub fn g_block(&self, j: usize, horizon: usize) -> (Mat, usize) {
        let q = self.q_rows();
        if j == 0 {
            (self.gu.clone(), 0)
        } else if j == horizon {
            (self.g_term.clone(), horizon * q)
        } else {
            (self.g_stage.clone(), j * q)
        }
    }

    /// Nonzero blocks `(row block, matrix)` of column block `j` of `C^{ii}`.
    pub fn c_own_column(&self, j: usize, horizon: usize) -> Vec<(usize, Mat)> {
        let n = self.n;
        let mut out = Vec::with_capacity(2);
        if j == 0 {
            out.push((0, -&self.b));
            return out;
        }
        if j == horizon {
            out.push((horizon - 1, Mat::identity(n, n)));
            return out;
        }
        let mut e = Mat::zeros(n, n + self.m);
        e.view_mut((0, 0), (n, n)).fill_with_identity();
        out.push((j - 1, e));
        out.push((j, -&self.a_bold));
        out
    }

    /// Nonzero block of `C^{i,i−1}` in column block `j` of the predecessor:
    /// row block `j`, `−B_cpl` at `j = 0`, `−[A_cpl B_cpl]` for `0 < j < N`.
    pub fn c_cpl_column(&self, j: usize, horizon: usize) -> Option<Mat> {
        if j == horizon {
            return None;
        }
        if j == 0 {
            self.b_cpl.as_ref().map(|b| -b)
        } else {
            self.a_cpl_bold.as_ref().map(|a| -a)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredQP {
    pub layout: StageLayout,
    pub subs: Vec<SubsystemQp>,
    /// `½ Σ x_0ᵀ Q x_0`, the part of the cost not carried by `z`.
    pub const_cost: f64,
}

pub fn build_structured_qp(
    chain: &ChainSystem,
    design: &TerminalDesign,
    terminal: &TerminalSets,
    x0: &[Vector],
    horizon: usize,
) -> Result<StructuredQP> {
    if horizon == 0 {
        return Err(Error::Dimension(alloc::string::String::from("horizon must be at least 1")));
    }
    let mm = chain.len();
    if x0.len() != mm || design.penalties.len() != mm || terminal.sets.len() != mm {
        return Err(Error::Dimension(alloc::format!(
            "{} initial states, {} penalties, {} terminal sets for {} subsystems",
            x0.len(),
            design.penalties.len(),
            terminal.sets.len(),
            mm
        )));
    }
    let layout = StageLayout::new(
        chain.subsystems().iter().map(|s| s.n()).collect(),
        chain.subsystems().iter().map(|s| s.m()).collect(),
        horizon,
    );
    let mut subs = Vec::with_capacity(mm);
    let mut const_cost = 0.0;
    for (i, s) in chain.subsystems().iter().enumerate() {
        let (n, m) = (s.n(), s.m());
        if x0[i].len() != n {
            return Err(Error::Dimension(alloc::format!(
                "x0 of subsystem {} has length {}, expected {}",
                i + 1,
                x0[i].len(),
                n
            )));
        }
        let term = &terminal.sets[i];
        if term.dim() != n || design.penalties[i].shape() != (n, n) {
            return Err(Error::Dimension(alloc::format!("terminal data of subsystem {} has wrong size", i + 1)));
        }
        const_cost += 0.5 * x0[i].dot(&(&s.q * &x0[i]));

        let mut h_blocks = Vec::with_capacity(horizon + 1);
        h_blocks.push(s.r.clone());
        let mut qr = Mat::zeros(n + m, n + m);
        qr.view_mut((0, 0), (n, n)).copy_from(&s.q);
        qr.view_mut((n, n), (m, m)).copy_from(&s.r);
        for _ in 1..horizon {
            h_blocks.push(qr.clone());
        }
        h_blocks.push(design.penalties[i].clone());

        let mut a_bold = Mat::zeros(n, n + m);
        a_bold.view_mut((0, 0), (n, n)).copy_from(&s.a);
        a_bold.view_mut((0, n), (n, m)).copy_from(&s.b);
        let a_cpl_bold = match (&s.a_cpl, &s.b_cpl) {
            (Some(ac), Some(bc)) => {
                let np = ac.ncols();
                let mp = bc.ncols();
                let mut t = Mat::zeros(n, np + mp);
                t.view_mut((0, 0), (n, np)).copy_from(ac);
                t.view_mut((0, np), (n, mp)).copy_from(bc);
                Some(t)
            }
            _ => None,
        };

        let q = s.q_rows();
        let mut g_stage = Mat::zeros(q, n + m);
        g_stage.view_mut((0, 0), (q, n)).copy_from(&s.gx);
        g_stage.view_mut((0, n), (q, m)).copy_from(&s.gu);
        let r = term.num_rows();
        let mut b_vec = Vector::zeros(horizon * q + r);
        b_vec.rows_mut(0, q).copy_from(&(&s.bound - &s.gx * &x0[i]));
        for t in 1..horizon {
            b_vec.rows_mut(t * q, q).copy_from(&s.bound);
        }
        b_vec.rows_mut(horizon * q, r).copy_from(term.g());

        let mut c_vec = Vector::zeros(horizon * n);
        let mut first = &s.a * &x0[i];
        if let Some(ac) = &s.a_cpl {
            first += ac * &x0[i - 1];
        }
        c_vec.rows_mut(0, n).copy_from(&first);

        subs.push(SubsystemQp {
            n,
            m,
            h_blocks,
            a_bold,
            b: s.b.clone(),
            a_cpl_bold,
            b_cpl: s.b_cpl.clone(),
            g_stage,
            gu: s.gu.clone(),
            g_term: term.f().clone(),
            b_vec,
            c_vec,
        });
    }
    Ok(StructuredQP {
        layout,
        subs,
        const_cost,
    })
}

/// The blocks of one subsystem together with the shared dimension table.
#[derive(Debug, Clone, Copy)]
pub struct LocalQp<'a> {
    pub layout: &'a StageLayout,
    pub index: usize,
    pub sub: &'a SubsystemQp,
}

impl LocalQp<'_> {
    /// `(C^{ii})ᵀ ν^i`.
    pub fn c_own_tmul(&self, nu_i: &Vector) -> Vector {
        let lay = self.layout;
        let i = self.index;
        let n = lay.n[i];
        let mut out = Vector::zeros(lay.seg_len(i));
        for j in 0..=lay.horizon {
            let o = lay.block_offset(i, j);
            let sz = lay.block_size(i, j);
            for (rb, blk) in self.sub.c_own_column(j, lay.horizon) {
                let mut seg = out.rows_mut(o, sz);
                seg += blk.transpose() * nu_i.rows(rb * n, n);
            }
        }
        out
    }

    /// `(C^{i,i−1})ᵀ ν^i` in the layout of `z^{i−1}`.
    pub fn c_cpl_tmul(&self, nu_i: &Vector) -> Vector {
        let lay = self.layout;
        let i = self.index;
        let n = lay.n[i];
        let mut out = Vector::zeros(lay.seg_len(i - 1));
        for j in 0..lay.horizon {
            if let Some(blk) = self.sub.c_cpl_column(j, lay.horizon) {
                let o = lay.block_offset(i - 1, j);
                let sz = lay.block_size(i - 1, j);
                out.rows_mut(o, sz).copy_from(&(blk.transpose() * nu_i.rows(j * n, n)));
            }
        }
        out
    }

    /// `𝐆^i z^i`.
    pub fn g_mul(&self, zi: &Vector) -> Vector {
        let lay = self.layout;
        let mut out = Vector::zeros(self.sub.ineq_rows());
        for j in 0..=lay.horizon {
            let (g, r0) = self.sub.g_block(j, lay.horizon);
            let zj = zi.rows(lay.block_offset(self.index, j), lay.block_size(self.index, j));
            out.rows_mut(r0, g.nrows()).copy_from(&(g * zj));
        }
        out
    }

    /// `(𝐆^i)ᵀ y`.
    pub fn g_tmul(&self, y: &Vector) -> Vector {
        let lay = self.layout;
        let i = self.index;
        let mut out = Vector::zeros(lay.seg_len(i));
        for j in 0..=lay.horizon {
            let (g, r0) = self.sub.g_block(j, lay.horizon);
            out.rows_mut(lay.block_offset(i, j), lay.block_size(i, j))
                .copy_from(&(g.transpose() * y.rows(r0, g.nrows())));
        }
        out
    }
}

impl StructuredQP {
    pub fn local(&self, i: usize) -> LocalQp<'_> {
        LocalQp {
            layout: &self.layout,
            index: i,
            sub: &self.subs[i],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.layout.total()
    }

    pub fn num_eq(&self) -> usize {
        self.subs.iter().map(|s| s.c_vec.len()).sum()
    }

    pub fn num_ineq(&self) -> usize {
        self.subs.iter().map(|s| s.ineq_rows()).sum()
    }

    pub fn ineq_offsets(&self) -> Vec<usize> {
        offsets(self.subs.iter().map(|s| s.ineq_rows()))
    }

    pub fn eq_offsets(&self) -> Vec<usize> {
        self.layout.eq_offsets()
    }

    pub fn b(&self) -> Vector {
        let parts: Vec<Vector> = self.subs.iter().map(|s| s.b_vec.clone()).collect();
        crate::model::stack(&parts)
    }

    pub fn c(&self) -> Vector {
        let parts: Vec<Vector> = self.subs.iter().map(|s| s.c_vec.clone()).collect();
        crate::model::stack(&parts)
    }

    /// `H z` restricted to subsystem `i` (input and output are `z^i`).
    pub fn h_mul_local(&self, i: usize, zi: &Vector) -> Vector {
        let lay = &self.layout;
        let mut out = Vector::zeros(zi.len());
        for (j, h) in self.subs[i].h_blocks.iter().enumerate() {
            let o = lay.block_offset(i, j);
            let sz = lay.block_size(i, j);
            out.rows_mut(o, sz).copy_from(&(h * zi.rows(o, sz)));
        }
        out
    }

    pub fn h_mul(&self, z: &Vector) -> Vector {
        let lay = &self.layout;
        let mut out = Vector::zeros(z.len());
        for i in 0..self.subs.len() {
            let zi = z.rows(lay.seg[i], lay.seg_len(i)).into_owned();
            out.rows_mut(lay.seg[i], lay.seg_len(i)).copy_from(&self.h_mul_local(i, &zi));
        }
        out
    }

    /// `½ zᵀHz + const`: the optimal-cost value reported by the solver.
    pub fn cost(&self, z: &Vector) -> f64 {
        0.5 * z.dot(&self.h_mul(z)) + self.const_cost
    }

    /// `C^{ii} z^i` (rows of subsystem `i`, own columns only).
    pub fn c_own_mul(&self, i: usize, zi: &Vector) -> Vector {
        let lay = &self.layout;
        let n = lay.n[i];
        let mut out = Vector::zeros(lay.eq_rows(i));
        for j in 0..=lay.horizon {
            let zj = zi.rows(lay.block_offset(i, j), lay.block_size(i, j)).into_owned();
            for (rb, blk) in self.subs[i].c_own_column(j, lay.horizon) {
                let mut seg = out.rows_mut(rb * n, n);
                seg += blk * &zj;
            }
        }
        out
    }

    /// `C^{i,i−1} z^{i−1}`.
    pub fn c_cpl_mul(&self, i: usize, zp: &Vector) -> Vector {
        let lay = &self.layout;
        let n = lay.n[i];
        let mut out = Vector::zeros(lay.eq_rows(i));
        if i == 0 {
            return out;
        }
        for j in 0..lay.horizon {
            if let Some(blk) = self.subs[i].c_cpl_column(j, lay.horizon) {
                let zj = zp.rows(lay.block_offset(i - 1, j), lay.block_size(i - 1, j)).into_owned();
                out.rows_mut(j * n, n).copy_from(&(blk * zj));
            }
        }
        out
    }

    /// `(C^{ii})ᵀ ν^i`.
    pub fn c_own_tmul(&self, i: usize, nu_i: &Vector) -> Vector {
        self.local(i).c_own_tmul(nu_i)
    }

    /// `(C^{i,i−1})ᵀ ν^i`, a vector in the layout of `z^{i−1}`.
    pub fn c_cpl_tmul(&self, i: usize, nu_i: &Vector) -> Vector {
        self.local(i).c_cpl_tmul(nu_i)
    }

    pub fn c_mul(&self, z: &Vector) -> Vector {
        let lay = &self.layout;
        let eo = self.eq_offsets();
        let mut out = Vector::zeros(self.num_eq());
        for i in 0..self.subs.len() {
            let zi = z.rows(lay.seg[i], lay.seg_len(i)).into_owned();
            let mut r = self.c_own_mul(i, &zi);
            if i > 0 {
                let zp = z.rows(lay.seg[i - 1], lay.seg_len(i - 1)).into_owned();
                r += self.c_cpl_mul(i, &zp);
            }
            out.rows_mut(eo[i], r.len()).copy_from(&r);
        }
        out
    }

    pub fn c_tmul(&self, nu: &Vector) -> Vector {
        let lay = &self.layout;
        let eo = self.eq_offsets();
        let mut out = Vector::zeros(self.num_vars());
        for i in 0..self.subs.len() {
            let nu_i = nu.rows(eo[i], eo[i + 1] - eo[i]).into_owned();
            let mut seg = out.rows_mut(lay.seg[i], lay.seg_len(i));
            seg += self.c_own_tmul(i, &nu_i);
            if i > 0 {
                let mut seg = out.rows_mut(lay.seg[i - 1], lay.seg_len(i - 1));
                seg += self.c_cpl_tmul(i, &nu_i);
            }
        }
        out
    }

    /// `𝐆^i z^i`.
    pub fn g_mul_local(&self, i: usize, zi: &Vector) -> Vector {
        self.local(i).g_mul(zi)
    }

    /// `(𝐆^i)ᵀ y`.
    pub fn g_tmul_local(&self, i: usize, y: &Vector) -> Vector {
        self.local(i).g_tmul(y)
    }

    pub fn g_mul(&self, z: &Vector) -> Vector {
        let lay = &self.layout;
        let io = self.ineq_offsets();
        let mut out = Vector::zeros(self.num_ineq());
        for i in 0..self.subs.len() {
            let zi = z.rows(lay.seg[i], lay.seg_len(i)).into_owned();
            out.rows_mut(io[i], io[i + 1] - io[i]).copy_from(&self.g_mul_local(i, &zi));
        }
        out
    }

    pub fn g_tmul(&self, y: &Vector) -> Vector {
        let lay = &self.layout;
        let io = self.ineq_offsets();
        let mut out = Vector::zeros(self.num_vars());
        for i in 0..self.subs.len() {
            let yi = y.rows(io[i], io[i + 1] - io[i]).into_owned();
            out.rows_mut(lay.seg[i], lay.seg_len(i)).copy_from(&self.g_tmul_local(i, &yi));
        }
        out
    }

    /// Dense `H`, `C`, `G`, `b`, `c`.
    pub fn densify(&self) -> DenseQp {
        let lay = &self.layout;
        let nz = self.num_vars();
        let eo = self.eq_offsets();
        let io = self.ineq_offsets();
        let mut h = Mat::zeros(nz, nz);
        let mut c = Mat::zeros(self.num_eq(), nz);
        let mut g = Mat::zeros(self.num_ineq(), nz);
        for (i, s) in self.subs.iter().enumerate() {
            let n = s.n;
            for j in 0..=lay.horizon {
                let col = lay.seg[i] + lay.block_offset(i, j);
                let blk = &s.h_blocks[j];
                h.view_mut((col, col), blk.shape()).copy_from(blk);
                for (rb, m) in s.c_own_column(j, lay.horizon) {
                    c.view_mut((eo[i] + rb * n, col), m.shape()).copy_from(&m);
                }
                let (gb, r0) = s.g_block(j, lay.horizon);
                g.view_mut((io[i] + r0, col), gb.shape()).copy_from(&gb);
                if i > 0 && j < lay.horizon {
                    if let Some(m) = s.c_cpl_column(j, lay.horizon) {
                        let pcol = lay.seg[i - 1] + lay.block_offset(i - 1, j);
                        c.view_mut((eo[i] + j * n, pcol), m.shape()).copy_from(&m);
                    }
                }
            }
        }
        DenseQp {
            h,
            c,
            g,
            b: self.b(),
            c_rhs: self.c(),
        }
    }
}

/// `min ½ zᵀHz  s.t.  C z = c_rhs,  G z ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub h: Mat,
    pub c: Mat,
    pub g: Mat,
    pub b: Vector,
    pub c_rhs: Vector,
}
