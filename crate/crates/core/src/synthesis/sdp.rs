//! Linearized LMI program for distributed terminal ingredients.
//!
//! Variables: a shared `G`, and per subsystem `S^i`, `Y^i`, `W̃^i`, `μ^i`,
//! plus the objective `τ`. The coupling input `Y^{i,i−1}` is replaced by
//! `Y^{i−1}` everywhere. Recovery: `P^i = (S^i)^{-1}`, `K^i = Y^i G^{-1}`.
//!
//! Solved by a log-det barrier path-following method on `τ`: each centering
//! step is a damped Newton method, and the path is followed until the
//! recovered design passes [`super::check_certificate`].

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{DesignMethod, TerminalDesign};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::ChainSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOptions {
    /// Outer barrier updates.
    pub max_outer: usize,
    /// Newton steps per centering.
    pub max_newton: usize,
    /// Barrier weight growth per outer iteration.
    pub t_factor: f64,
    /// Stop once `(barrier order) / t` drops below this.
    pub gap_tol: f64,
    /// Every scalar variable is kept in `(−bound, bound)`.
    pub box_bound: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            max_outer: 40,
            max_newton: 80,
            t_factor: 8.0,
            gap_tol: 1e-9,
            box_bound: 1e4,
        }
    }
}

/// Decision variables of the LMI program.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpVariables {
    pub g: Mat,
    pub s: Vec<Mat>,
    pub y: Vec<Mat>,
    /// `W̃^1` is `n × n`; `W̃^i` is `2n × 2n`, ordered `(x^i, x^{i−1})`.
    pub w_tilde: Vec<Mat>,
    /// `μ^i`; entry 0 is unused and kept at 1.
    pub mu: Vec<f64>,
    pub tau: f64,
}

struct Layout {
    n: usize,
    m: Vec<usize>,
    g0: usize,
    s0: Vec<usize>,
    y0: Vec<usize>,
    w0: Vec<usize>,
    mu0: Vec<usize>,
    tau: usize,
    total: usize,
}

fn sym_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Index of `(a, b)` in a row-wise packed upper triangle of a `d × d` matrix.
fn sym_idx(d: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * d - a * a.saturating_sub(1) / 2 + (b - a)
}

impl Layout {
    fn new(chain: &ChainSystem) -> Result<Self> {
        let n = chain.get(0).n();
        if chain.subsystems().iter().any(|s| s.n() != n) {
            return Err(Error::Dimension(alloc::string::String::from(
                "the LMI program requires equal state dimensions",
            )));
        }
        let mm = chain.len();
        let mut at = 0;
        let g0 = at;
        at += n * n;
        let mut s0 = Vec::with_capacity(mm);
        let mut y0 = Vec::with_capacity(mm);
        let mut w0 = Vec::with_capacity(mm);
        let mut mu0 = Vec::with_capacity(mm);
        let m: Vec<usize> = chain.subsystems().iter().map(|s| s.m()).collect();
        for i in 0..mm {
            s0.push(at);
            at += sym_len(n);
            y0.push(at);
            at += m[i] * n;
            w0.push(at);
            at += sym_len(if i == 0 { n } else { 2 * n });
            mu0.push(at);
            if i > 0 {
                at += 1;
            }
        }
        let tau = at;
        at += 1;
        Ok(Layout {
            n,
            m,
            g0,
            s0,
            y0,
            w0,
            mu0,
            tau,
            total: at,
        })
    }

    fn g(&self, r: usize, c: usize) -> usize {
        self.g0 + r * self.n + c
    }
    fn s(&self, i: usize, a: usize, b: usize) -> usize {
        self.s0[i] + sym_idx(self.n, a, b)
    }
    fn y(&self, i: usize, r: usize, c: usize) -> usize {
        self.y0[i] + r * self.n + c
    }
    fn w(&self, i: usize, a: usize, b: usize) -> usize {
        let d = if i == 0 { self.n } else { 2 * self.n };
        self.w0[i] + sym_idx(d, a, b)
    }

    fn pack(&self, v: &SdpVariables) -> Vector {
        let n = self.n;
        let mut th = Vector::zeros(self.total);
        for r in 0..n {
            for c in 0..n {
                th[self.g(r, c)] = v.g[(r, c)];
            }
        }
        for i in 0..self.m.len() {
            for a in 0..n {
                for b in a..n {
                    th[self.s(i, a, b)] = v.s[i][(a, b)];
                }
            }
            for r in 0..self.m[i] {
                for c in 0..n {
                    th[self.y(i, r, c)] = v.y[i][(r, c)];
                }
            }
            let d = v.w_tilde[i].nrows();
            for a in 0..d {
                for b in a..d {
                    th[self.w(i, a, b)] = v.w_tilde[i][(a, b)];
                }
            }
            if i > 0 {
                th[self.mu0[i]] = v.mu[i];
            }
        }
        th[self.tau] = v.tau;
        th
    }

    fn unpack(&self, th: &Vector) -> SdpVariables {
        let n = self.n;
        let mm = self.m.len();
        let g = Mat::from_fn(n, n, |r, c| th[self.g(r, c)]);
        let mut s = Vec::with_capacity(mm);
        let mut y = Vec::with_capacity(mm);
        let mut w_tilde = Vec::with_capacity(mm);
        let mut mu = Vec::with_capacity(mm);
        for i in 0..mm {
            s.push(Mat::from_fn(n, n, |a, b| th[self.s(i, a, b)]));
            y.push(Mat::from_fn(self.m[i], n, |r, c| th[self.y(i, r, c)]));
            let d = if i == 0 { n } else { 2 * n };
            w_tilde.push(Mat::from_fn(d, d, |a, b| th[self.w(i, a, b)]));
            mu.push(if i == 0 { 1.0 } else { th[self.mu0[i]] });
        }
        SdpVariables {
            g,
            s,
            y,
            w_tilde,
            mu,
            tau: th[self.tau],
        }
    }
}

/// Symmetric affine matrix function `F(θ) = F_0 + Σ θ_k F_k`.
struct AffineSym {
    constant: Mat,
    /// Full (both triangles) entry lists per variable.
    terms: BTreeMap<usize, Vec<(usize, usize, f64)>>,
}

impl AffineSym {
    fn new(size: usize) -> Self {
        AffineSym {
            constant: Mat::zeros(size, size),
            terms: BTreeMap::new(),
        }
    }

    fn size(&self) -> usize {
        self.constant.nrows()
    }

    /// Adds `v·θ_var` at `(r, c)` and, off the diagonal, at `(c, r)`.
    fn var(&mut self, var: usize, r: usize, c: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let e = self.terms.entry(var).or_default();
        e.push((r, c, v));
        if r != c {
            e.push((c, r, v));
        }
    }

    /// Constant symmetric entry at `(r, c)` and `(c, r)`.
    fn constant(&mut self, r: usize, c: usize, v: f64) {
        self.constant[(r, c)] += v;
        if r != c {
            self.constant[(c, r)] += v;
        }
    }

    fn eval(&self, th: &Vector) -> Mat {
        let mut f = self.constant.clone();
        for (&k, entries) in &self.terms {
            let t = th[k];
            if t == 0.0 {
                continue;
            }
            for &(r, c, v) in entries {
                f[(r, c)] += v * t;
            }
        }
        f
    }
}

/// `G + Gᵀ` at `(r0, r0)`.
fn add_g_sym(f: &mut AffineSym, lay: &Layout, r0: usize, scale: f64) {
    let n = lay.n;
    for a in 0..n {
        for b in 0..n {
            let v = if a == b { 2.0 * scale } else { scale };
            f.var(lay.g(a, b), r0 + a, r0 + b, v);
        }
    }
}

/// `M·G` placed at rows `r0..`, columns `c0..` (below the diagonal).
fn add_left_times_g(f: &mut AffineSym, lay: &Layout, m: &Mat, r0: usize, c0: usize) {
    for r in 0..m.nrows() {
        for c in 0..lay.n {
            for k in 0..lay.n {
                f.var(lay.g(k, c), r0 + r, c0 + c, m[(r, k)]);
            }
        }
    }
}

/// `M·Y^j` placed at rows `r0..`, columns `c0..`.
fn add_left_times_y(f: &mut AffineSym, lay: &Layout, j: usize, m: &Mat, r0: usize, c0: usize) {
    for r in 0..m.nrows() {
        for c in 0..lay.n {
            for k in 0..lay.m[j] {
                f.var(lay.y(j, k, c), r0 + r, c0 + c, m[(r, k)]);
            }
        }
    }
}

fn build_affine(chain: &ChainSystem, lay: &Layout) -> Vec<AffineSym> {
    let n = lay.n;
    let mut out = Vec::with_capacity(chain.len() + 1);
    for (i, sub) in chain.subsystems().iter().enumerate() {
        let mi = lay.m[i];
        let qh = linalg::sym_sqrt(&sub.q);
        let rh = linalg::sym_sqrt(&sub.r);
        let top = if i == 0 { n } else { 2 * n };
        let size = top + n + n + mi + if i == 0 { 0 } else { n };
        let mut f = AffineSym::new(size);
        // G̃ block.
        add_g_sym(&mut f, lay, 0, 1.0);
        for a in 0..n {
            for b in a..n {
                f.var(lay.s(i, a, b), a, b, -1.0);
            }
        }
        for a in 0..top {
            for b in a..top {
                f.var(lay.w(i, a, b), a, b, 1.0);
            }
        }
        if i > 0 {
            add_g_sym(&mut f, lay, n, 1.0);
            for a in 0..n {
                f.var(lay.mu0[i], n + a, n + a, -1.0);
            }
        }
        // B̃ block rows.
        let rs = top;
        add_left_times_g(&mut f, lay, &sub.a, rs, 0);
        add_left_times_y(&mut f, lay, i, &sub.b, rs, 0);
        add_left_times_g(&mut f, lay, &qh, rs + n, 0);
        add_left_times_y(&mut f, lay, i, &rh, rs + 2 * n, 0);
        if i > 0 {
            if let Some(ac) = &sub.a_cpl {
                add_left_times_g(&mut f, lay, ac, rs, n);
            }
            if let Some(bc) = &sub.b_cpl {
                add_left_times_y(&mut f, lay, i - 1, bc, rs, n);
            }
            // Gᵀ in the last block row, second block column.
            let r0 = rs + 2 * n + mi;
            for r in 0..n {
                for c in 0..n {
                    f.var(lay.g(c, r), r0 + r, n + c, 1.0);
                }
            }
        }
        // S̃ block.
        for a in 0..n {
            for b in a..n {
                f.var(lay.s(i, a, b), rs + a, rs + b, 1.0);
            }
        }
        for k in 0..n + mi {
            f.constant(rs + n + k, rs + n + k, 1.0);
        }
        if i > 0 {
            let r0 = rs + 2 * n + mi;
            for a in 0..n {
                f.var(lay.mu0[i], r0 + a, r0 + a, 1.0);
            }
        }
        out.push(f);
    }
    // τI − W̃ with W̃ assembled like W.
    let mm = chain.len();
    let mut f = AffineSym::new(mm * n);
    for k in 0..mm * n {
        f.var(lay.tau, k, k, 1.0);
    }
    for a in 0..n {
        for b in a..n {
            f.var(lay.w(0, a, b), a, b, -1.0);
        }
    }
    for i in 1..mm {
        let gmap = |l: usize| if l < n { i * n + l } else { (i - 1) * n + (l - n) };
        for a in 0..2 * n {
            for b in a..2 * n {
                f.var(lay.w(i, a, b), gmap(a), gmap(b), -1.0);
            }
        }
    }
    out.push(f);
    out
}

/// The per-subsystem block matrices `[[G̃^i, B̃^iᵀ], [B̃^i, S̃^i]]` at `vars`.
pub fn build_lmi_blocks(chain: &ChainSystem, vars: &SdpVariables) -> Result<Vec<Mat>> {
    let lay = Layout::new(chain)?;
    check_var_shapes(&lay, vars)?;
    let th = lay.pack(vars);
    let blocks = build_affine(chain, &lay);
    Ok(blocks[..chain.len()].iter().map(|b| b.eval(&th)).collect())
}

fn check_var_shapes(lay: &Layout, v: &SdpVariables) -> Result<()> {
    let mm = lay.m.len();
    let n = lay.n;
    let ok = v.g.shape() == (n, n)
        && v.s.len() == mm
        && v.y.len() == mm
        && v.w_tilde.len() == mm
        && v.mu.len() == mm
        && (0..mm).all(|i| {
            let d = if i == 0 { n } else { 2 * n };
            v.s[i].shape() == (n, n) && v.y[i].shape() == (lay.m[i], n) && v.w_tilde[i].shape() == (d, d)
        });
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(alloc::string::String::from(
            "LMI variables do not match the chain",
        )))
    }
}

/// Recovers `P^i = (S^i)^{-1}`, `K^i = Y^i G^{-1}` and certifies the result.
pub fn design_from_sdp_variables(chain: &ChainSystem, vars: &SdpVariables) -> Result<TerminalDesign> {
    let lay = Layout::new(chain)?;
    check_var_shapes(&lay, vars)?;
    let ginv = linalg::inverse(&vars.g)?;
    let mut gains = Vec::with_capacity(chain.len());
    let mut penalties = Vec::with_capacity(chain.len());
    for i in 0..chain.len() {
        let s = linalg::symmetrize(&vars.s[i]);
        if !linalg::is_positive_definite(&s, 0.0) {
            return Err(Error::NotPositiveDefinite("S^i"));
        }
        penalties.push(linalg::symmetrize(&linalg::inverse(&s)?));
        gains.push(&vars.y[i] * &ginv);
    }
    let mut d = TerminalDesign::certify(chain, gains, penalties, DesignMethod::Sdp)?;
    d.tau = Some(vars.tau);
    Ok(d)
}

fn log_det_pd(f: &Mat) -> Option<f64> {
    let l = f.clone().cholesky()?;
    let l = l.l();
    let mut s = 0.0;
    for k in 0..l.nrows() {
        let d = l[(k, k)];
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        s += 2.0 * libm::log(d);
    }
    Some(s)
}

struct Barrier {
    blocks: Vec<AffineSym>,
    tau: usize,
    bound: f64,
}

impl Barrier {
    /// `t·τ − Σ log det F_j − Σ log(bound² − θ_k²)`, or `None` outside the domain.
    fn value(&self, th: &Vector, t: f64) -> Option<f64> {
        let mut v = t * th[self.tau];
        for b in &self.blocks {
            v -= log_det_pd(&b.eval(th))?;
        }
        for &x in th.iter() {
            let slack = self.bound * self.bound - x * x;
            if slack <= 0.0 {
                return None;
            }
            v -= libm::log(slack);
        }
        Some(v)
    }

    fn grad_hess(&self, th: &Vector, t: f64) -> Result<(Vector, Mat)> {
        let nv = th.len();
        let mut g = Vector::zeros(nv);
        let mut h = Mat::zeros(nv, nv);
        g[self.tau] = t;
        for b in &self.blocks {
            let f = b.eval(th);
            let z = f
                .cholesky()
                .ok_or(Error::Numerical("barrier left the feasible cone"))?
                .inverse();
            let s = b.size();
            let vars: Vec<usize> = b.terms.keys().copied().collect();
            // M_k = Z F_k and its transpose, as dense matrices.
            let mut mk: Vec<Mat> = Vec::with_capacity(vars.len());
            for k in &vars {
                let mut m = Mat::zeros(s, s);
                for &(r, c, v) in &b.terms[k] {
                    for a in 0..s {
                        m[(a, c)] += v * z[(a, r)];
                    }
                }
                mk.push(m);
            }
            let mkt: Vec<Mat> = mk.iter().map(|m| m.transpose()).collect();
            for (p, &k) in vars.iter().enumerate() {
                g[k] -= mk[p].trace();
                for (q, &l) in vars.iter().enumerate().skip(p) {
                    let v = mk[p].dot(&mkt[q]);
                    h[(k, l)] += v;
                    if k != l {
                        h[(l, k)] += v;
                    }
                }
            }
        }
        let b2 = self.bound * self.bound;
        for k in 0..nv {
            let x = th[k];
            let d = b2 - x * x;
            g[k] += 2.0 * x / d;
            h[(k, k)] += 2.0 / d + 4.0 * x * x / (d * d);
        }
        Ok((g, h))
    }
}

fn initial_point(chain: &ChainSystem, lay: &Layout) -> SdpVariables {
    let n = lay.n;
    let mm = chain.len();
    let mut w = 1.0;
    for s in chain.subsystems() {
        let mut size = s.a.norm_squared() + s.q.norm() + 1.0;
        if let Some(ac) = &s.a_cpl {
            size += ac.norm_squared();
        }
        w = f64::max(w, 2.0 * size);
    }
    SdpVariables {
        g: Mat::identity(n, n),
        s: (0..mm).map(|_| Mat::identity(n, n)).collect(),
        y: (0..mm).map(|i| Mat::zeros(lay.m[i], n)).collect(),
        w_tilde: (0..mm)
            .map(|i| Mat::identity(if i == 0 { n } else { 2 * n }, if i == 0 { n } else { 2 * n }) * w)
            .collect(),
        mu: alloc::vec![1.0; mm],
        tau: 2.0 * w + 1.0,
    }
}

/// Minimizes `τ` until the recovered `(P, K)` certifies.
///
/// Errors with [`Error::Infeasible`] when the path ends with `τ ≥ 0` or with
/// a design the certificate rejects.
pub fn solve_terminal_sdp(chain: &ChainSystem, opts: &SdpOptions) -> Result<TerminalDesign> {
    let lay = Layout::new(chain)?;
    let start = initial_point(chain, &lay);
    let bound = opts.box_bound.max(10.0 * start.tau);
    let barrier = Barrier {
        blocks: build_affine(chain, &lay),
        tau: lay.tau,
        bound,
    };
    let mut th = lay.pack(&start);
    if barrier.value(&th, 1.0).is_none() {
        return Err(Error::Numerical("LMI start point is not strictly feasible"));
    }
    let order: f64 = barrier.blocks.iter().map(|b| b.size() as f64).sum::<f64>() + 2.0 * lay.total as f64;
    let mut t = 1.0;
    let mut last_design: Option<TerminalDesign> = None;
    for _ in 0..opts.max_outer {
        for _ in 0..opts.max_newton {
            let (g, mut h) = barrier.grad_hess(&th, t)?;
            let reg = 1e-12 * (1.0 + h.diagonal().amax());
            for k in 0..h.nrows() {
                h[(k, k)] += reg;
            }
            let step = match h.cholesky() {
                Some(c) => -c.solve(&g),
                None => return Err(Error::Numerical("barrier Hessian not positive definite")),
            };
            let decrement = -g.dot(&step);
            if decrement * 0.5 <= 1e-10 {
                break;
            }
            let phi = barrier.value(&th, t).ok_or(Error::Numerical("barrier value"))?;
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand = &th + &step * alpha;
                if let Some(v) = barrier.value(&cand, t) {
                    if v <= phi - 0.25 * alpha * decrement {
                        th = cand;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if th[lay.tau] < 0.0 {
            let vars = lay.unpack(&th);
            if let Ok(d) = design_from_sdp_variables(chain, &vars) {
                if d.certified {
                    return Ok(d);
                }
                last_design = Some(d);
            }
        }
        if order / t < opts.gap_tol {
            break;
        }
        t *= opts.t_factor;
    }
    let tau = th[lay.tau];
    match last_design {
        Some(d) => Err(Error::Infeasible(alloc::format!(
            "tau = {tau:.3e} but the recovered design has lambda_max(W) = {:.3e}",
            d.lambda_max_w
        ))),
        None => Err(Error::Infeasible(alloc::format!(
            "LMI program ended with tau = {tau:.3e} >= 0"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_constraints, validate_chain, SubsystemModel};
    use alloc::vec;

    fn scalar(index: usize, a: f64, b: f64, cpl: Option<f64>) -> SubsystemModel {
        let (gx, gu, bound) = box_constraints(&[1.0], &[1.0]);
        SubsystemModel {
            index,
            a: Mat::from_element(1, 1, a),
            b: Mat::from_element(1, 1, b),
            a_cpl: cpl.map(|c| Mat::from_element(1, 1, c)),
            b_cpl: cpl.map(|_| Mat::zeros(1, 1)),
            gx,
            gu,
            bound,
            q: Mat::identity(1, 1),
            r: Mat::identity(1, 1),
        }
    }

    #[test]
    fn packed_symmetric_indices_are_dense() {
        for d in 1..6 {
            let mut seen = vec![false; sym_len(d)];
            for a in 0..d {
                for b in a..d {
                    let k = sym_idx(d, a, b);
                    assert!(!seen[k]);
                    seen[k] = true;
                    assert_eq!(k, sym_idx(d, b, a));
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn leader_block_transcription() {
        let chain = validate_chain(vec![scalar(1, 0.7, 1.0, None)]).unwrap();
        let vars = SdpVariables {
            g: Mat::from_element(1, 1, 2.0),
            s: vec![Mat::from_element(1, 1, 3.0)],
            y: vec![Mat::from_element(1, 1, -0.5)],
            w_tilde: vec![Mat::from_element(1, 1, -1.0)],
            mu: vec![1.0],
            tau: 0.0,
        };
        let b = &build_lmi_blocks(&chain, &vars).unwrap()[0];
        // [G+Gᵀ−S+W̃, (AG+BY)ᵀ, (Q½G)ᵀ, (R½Y)ᵀ; AG+BY, S, 0, 0; Q½G, 0, 1, 0; R½Y, 0, 0, 1]
        let expect = Mat::from_row_slice(4, 4, &[
            4.0 - 3.0 - 1.0, 0.9, 2.0, -0.5,
            0.9, 3.0, 0.0, 0.0,
            2.0, 0.0, 1.0, 0.0,
            -0.5, 0.0, 0.0, 1.0,
        ]);
        assert!((b - expect).amax() < 1e-15);
    }

    #[test]
    fn identity_point_is_on_the_boundary() {
        // A = 0, Q = R = I, G = S = I, Y = 0, W̃ = 0, μ = 1.
        let mut f = scalar(2, 0.0, 1.0, Some(0.0));
        f.a_cpl = Some(Mat::zeros(1, 1));
        let chain = validate_chain(vec![scalar(1, 0.0, 1.0, None), f]).unwrap();
        let vars = SdpVariables {
            g: Mat::identity(1, 1),
            s: vec![Mat::identity(1, 1); 2],
            y: vec![Mat::zeros(1, 1); 2],
            w_tilde: vec![Mat::zeros(1, 1), Mat::zeros(2, 2)],
            mu: vec![1.0, 1.0],
            tau: 0.0,
        };
        let blocks = build_lmi_blocks(&chain, &vars).unwrap();
        for (blk, top) in blocks.iter().zip([1usize, 2]) {
            let rest = blk.nrows() - top;
            let g = blk.view((0, 0), (top, top)).into_owned();
            let b = blk.view((top, 0), (rest, top)).into_owned();
            let s = blk.view((top, top), (rest, rest)).into_owned();
            assert_eq!(s, Mat::identity(rest, rest));
            // Q½G and Gᵀ occupy different block columns, so BᵀB = I and the
            // Schur complement vanishes: the point sits on the cone boundary.
            let schur = g - b.transpose() * b;
            assert!(schur.amax() < 1e-15);
            assert!(linalg::min_eigenvalue(blk).abs() < 1e-12);
        }
    }

    #[test]
    fn decoupled_schur_chain_is_certified() {
        let chain = validate_chain(vec![scalar(1, 0.6, 1.0, None), scalar(2, -0.8, 0.5, Some(0.0))]).unwrap();
        let d = solve_terminal_sdp(&chain, &SdpOptions::default()).unwrap();
        assert!(d.certified);
        assert!(d.tau.unwrap() < 0.0);
    }

    #[test]
    fn weakly_coupled_scalars_are_certified() {
        let chain = validate_chain(vec![scalar(1, 1.1, 1.0, None), scalar(2, 0.9, 1.0, Some(0.2))]).unwrap();
        let d = solve_terminal_sdp(&chain, &SdpOptions::default()).unwrap();
        assert!(d.certified, "lambda_max = {}", d.lambda_max_w);
        for (i, s) in chain.subsystems().iter().enumerate() {
            assert!(linalg::spectral_radius(&s.closed_loop(&d.gains[i])) < 1.0);
        }
    }

    #[test]
    fn unstabilizable_chain_is_infeasible() {
        let chain = validate_chain(vec![scalar(1, 2.0, 0.0, None)]).unwrap();
        let opts = SdpOptions {
            max_outer: 12,
            ..SdpOptions::default()
        };
        assert!(matches!(solve_terminal_sdp(&chain, &opts), Err(Error::Infeasible(_))));
    }
}
