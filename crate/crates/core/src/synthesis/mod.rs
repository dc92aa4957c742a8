//! Terminal cost and local controller synthesis.
//!
//! A design is the pair `(K^i, P^i)` per subsystem with terminal cost
//! `ℓ_f^i(x) = ½ xᵀP^i x`. It is certified when the assembled coupling
//! matrix `W` is negative semidefinite, which gives the global decrease
//! `ℓ_f(Ãx) − ℓ_f(x) + ℓ(x, K_d x) ≤ 0` for every `x`.

mod sdp;

use alloc::vec::Vec;

pub use sdp::{
    build_lmi_blocks, design_from_sdp_variables, solve_terminal_sdp, SdpOptions, SdpVariables,
};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{offsets, ChainSystem, SubsystemModel};

/// Absolute threshold on `λ_max(W)`.
pub const CERTIFICATE_TOL: f64 = 1e-8;
pub const RICCATI_TOL: f64 = 1e-15;
pub const RICCATI_STALL_TOL: f64 = 1e-11;
const RICCATI_POLISH_STEPS: usize = 4;
const RICCATI_POLISH_MAX_DIM: usize = 16;
pub const RICCATI_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignMethod {
    /// Per-subsystem Riccati solution, coupling ignored.
    Riccati,
    /// Riccati gains with `P^i` scaled by `γ^{M−i+1}`.
    ScaledRiccati { gamma: f64 },
    /// Recovered from the LMI program.
    Sdp,
    /// Supplied from outside (files, tests).
    Given,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateStatus {
    Certified { lambda_max: f64 },
    Rejected { lambda_max: f64 },
}

impl CertificateStatus {
    pub fn is_certified(&self) -> bool {
        matches!(self, CertificateStatus::Certified { .. })
    }

    pub fn lambda_max(&self) -> f64 {
        match self {
            CertificateStatus::Certified { lambda_max } | CertificateStatus::Rejected { lambda_max } => *lambda_max,
        }
    }
}

/// Local matrices `W^i` and the assembled block-tridiagonal `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// `W^1` is `n_1 × n_1`; `W^i` is `(n_i + n_{i−1})` square, ordered `(x^i, x^{i−1})`.
    pub local: Vec<Mat>,
    pub assembled: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDesign {
    pub gains: Vec<Mat>,
    pub penalties: Vec<Mat>,
    pub certificate: Option<Certificate>,
    /// `λ_max(W)`; NaN until a certificate is built.
    pub lambda_max_w: f64,
    pub certified: bool,
    /// Objective reached by the LMI program, when that path produced the design.
    pub tau: Option<f64>,
    pub method: DesignMethod,
}

impl TerminalDesign {
    /// Uncertified design from raw matrices.
    pub fn from_gains(gains: Vec<Mat>, penalties: Vec<Mat>) -> Self {
        TerminalDesign {
            gains,
            penalties,
            certificate: None,
            lambda_max_w: f64::NAN,
            certified: false,
            tau: None,
            method: DesignMethod::Given,
        }
    }

    /// Builds and checks the certificate for `(gains, penalties)`.
    pub fn certify(chain: &ChainSystem, gains: Vec<Mat>, penalties: Vec<Mat>, method: DesignMethod) -> Result<Self> {
        let cert = build_certificate(chain, &gains, &penalties)?;
        let status = check_certificate(&cert.assembled);
        Ok(TerminalDesign {
            gains,
            penalties,
            certificate: Some(cert),
            lambda_max_w: status.lambda_max(),
            certified: status.is_certified(),
            tau: None,
            method,
        })
    }

    /// `ℓ_f(x) = Σ ½ x^iᵀP^i x^i`.
    pub fn terminal_cost(&self, xs: &[crate::linalg::Vector]) -> f64 {
        self.penalties
            .iter()
            .zip(xs)
            .map(|(p, x)| 0.5 * x.dot(&(p * x)))
            .sum()
    }
}

fn check_design_dims(chain: &ChainSystem, gains: &[Mat], penalties: &[Mat]) -> Result<()> {
    if gains.len() != chain.len() || penalties.len() != chain.len() {
        return Err(Error::Dimension(alloc::format!(
            "{} gains and {} penalties for {} subsystems",
            gains.len(),
            penalties.len(),
            chain.len()
        )));
    }
    for (i, s) in chain.subsystems().iter().enumerate() {
        if gains[i].shape() != (s.m(), s.n()) || penalties[i].shape() != (s.n(), s.n()) {
            return Err(Error::Dimension(alloc::format!(
                "subsystem {}: K is {}x{}, P is {}x{}; expected {}x{} and {}x{}",
                i + 1,
                gains[i].nrows(),
                gains[i].ncols(),
                penalties[i].nrows(),
                penalties[i].ncols(),
                s.m(),
                s.n(),
                s.n(),
                s.n()
            )));
        }
    }
    Ok(())
}

/// `ÃᵀPÃ − P + Q + KᵀRK`.
fn local_decrease(s: &SubsystemModel, k: &Mat, p: &Mat) -> Mat {
    let at = s.closed_loop(k);
    at.transpose() * p * &at - p + &s.q + k.transpose() * &s.r * k
}

pub fn build_certificate(chain: &ChainSystem, gains: &[Mat], penalties: &[Mat]) -> Result<Certificate> {
    check_design_dims(chain, gains, penalties)?;
    let off = offsets(chain.subsystems().iter().map(|s| s.n()));
    let total = off[chain.len()];
    let mut w = Mat::zeros(total, total);
    let mut local = Vec::with_capacity(chain.len());
    for (i, s) in chain.subsystems().iter().enumerate() {
        let w11 = local_decrease(s, &gains[i], &penalties[i]);
        if i == 0 {
            w.view_mut((off[0], off[0]), w11.shape()).copy_from(&w11);
            local.push(w11);
            continue;
        }
        let np = chain.get(i - 1).n();
        let cpl = s
            .closed_loop_coupling(&gains[i - 1])
            .unwrap_or_else(|| Mat::zeros(s.n(), np));
        let at = s.closed_loop(&gains[i]);
        let p = &penalties[i];
        let w12 = at.transpose() * p * &cpl;
        let w22 = cpl.transpose() * p * &cpl;
        let mut wi = Mat::zeros(s.n() + np, s.n() + np);
        wi.view_mut((0, 0), w11.shape()).copy_from(&w11);
        wi.view_mut((0, s.n()), w12.shape()).copy_from(&w12);
        wi.view_mut((s.n(), 0), (np, s.n())).copy_from(&w12.transpose());
        wi.view_mut((s.n(), s.n()), w22.shape()).copy_from(&w22);

        let (ci, cp) = (off[i], off[i - 1]);
        let mut blk = w.view_mut((ci, ci), w11.shape());
        blk += &w11;
        let mut blk = w.view_mut((cp, cp), w22.shape());
        blk += &w22;
        let mut blk = w.view_mut((ci, cp), w12.shape());
        blk += &w12;
        let mut blk = w.view_mut((cp, ci), (np, s.n()));
        blk += &w12.transpose();
        local.push(wi);
    }
    Ok(Certificate {
        local,
        assembled: linalg::symmetrize(&w),
    })
}

pub fn check_certificate(w: &Mat) -> CertificateStatus {
    let lambda_max = if w.nrows() == 0 {
        0.0
    } else {
        linalg::max_eigenvalue(&linalg::symmetrize(w))
    };
    if lambda_max <= CERTIFICATE_TOL {
        CertificateStatus::Certified { lambda_max }
    } else {
        CertificateStatus::Rejected { lambda_max }
    }
}

/// Stabilizing DARE solution and LQR gain `K = −(R + BᵀPB)^{-1}BᵀPA`.
pub fn solve_dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<(Mat, Mat)> {
    let mut p = q.clone();
    let mut prev_diff = f64::INFINITY;
    for _ in 0..RICCATI_MAX_ITER {
        let gain = lqr_gain(a, b, r, &p)?;
        let next = linalg::symmetrize(&(q + a.transpose() * &p * a + a.transpose() * &p * b * &gain));
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        let diff = (&next - &p).amax();
        p = next;
        let scale = p.amax().max(1.0);
        if diff <= RICCATI_TOL * scale || (diff <= RICCATI_STALL_TOL * scale && diff >= prev_diff) {
            return polish_dare(a, b, q, r, p);
        }
        prev_diff = diff;
    }
    Err(Error::NotConverged {
        what: "Riccati iteration",
        iterations: RICCATI_MAX_ITER,
    })
}

fn lqr_gain(a: &Mat, b: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let bt_p = b.transpose() * p;
    Ok(-(r + &bt_p * b)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("R + BᵀPB"))?
        .solve(&(&bt_p * a)))
}

fn dare_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<f64> {
    let k = lqr_gain(a, b, r, p)?;
    Ok((q + a.transpose() * p * a + a.transpose() * p * b * &k - p).amax())
}

/// Newton steps on the converged iterate; each one solves the closed-loop
/// Lyapunov equation exactly, so the slow tail of the fixed point is skipped.
fn polish_dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat, mut p: Mat) -> Result<(Mat, Mat)> {
    let n = a.nrows();
    let mut best = dare_residual(a, b, q, r, &p)?;
    // The Kronecker system is n² square; skip the polish when that is large.
    if n <= RICCATI_POLISH_MAX_DIM {
        for _ in 0..RICCATI_POLISH_STEPS {
            let k = lqr_gain(a, b, r, &p)?;
            let acl = a + b * &k;
            let rhs = q + k.transpose() * r * &k;
            let act = acl.transpose();
            let lhs = Mat::identity(n * n, n * n) - act.kronecker(&act);
            let Some(vec_p) = lhs.lu().solve(&linalg::Vector::from_column_slice(rhs.as_slice())) else {
                break;
            };
            let cand = linalg::symmetrize(&Mat::from_column_slice(n, n, vec_p.as_slice()));
            if cand.iter().any(|v| !v.is_finite()) {
                break;
            }
            let res = dare_residual(a, b, q, r, &cand)?;
            if res >= best {
                break;
            }
            best = res;
            p = cand;
        }
    }
    let k = lqr_gain(a, b, r, &p)?;
    Ok((p, k))
}

/// Coupling-blind candidate from each subsystem's own Riccati equation.
pub fn riccati_candidate(chain: &ChainSystem) -> Result<TerminalDesign> {
    let mut gains = Vec::with_capacity(chain.len());
    let mut penalties = Vec::with_capacity(chain.len());
    for s in chain.subsystems() {
        let (p, k) = solve_dare(&s.a, &s.b, &s.q, &s.r)?;
        gains.push(k);
        penalties.push(p);
    }
    TerminalDesign::certify(chain, gains, penalties, DesignMethod::Riccati)
}

/// Riccati gains with `P^i ← γ^{M−i+1} P^i`, searching `γ = 2, 4, …, 2^20`.
///
/// Scaling `P^i` up turns the local Lyapunov residual into a margin
/// `−(γ^{M−i+1} − 1)(Q^i + K^iᵀR^iK^i)` that can dominate the coupling
/// terms charged to the predecessor.
pub fn scaled_riccati_candidate(chain: &ChainSystem) -> Result<TerminalDesign> {
    let base = riccati_candidate(chain)?;
    if base.certified {
        return Ok(base);
    }
    let m = chain.len();
    let mut last = base.clone();
    for e in 1..=20 {
        let gamma = libm::pow(2.0, e as f64);
        let penalties: Vec<Mat> = base
            .penalties
            .iter()
            .enumerate()
            .map(|(i, p)| p * libm::pow(gamma, (m - i) as f64))
            .collect();
        let d = TerminalDesign::certify(chain, base.gains.clone(), penalties, DesignMethod::ScaledRiccati { gamma })?;
        if d.certified {
            return Ok(d);
        }
        last = d;
    }
    Ok(last)
}

/// Synthesis options for [`synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub sdp: SdpOptions,
    pub try_sdp: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            sdp: SdpOptions::default(),
            try_sdp: true,
        }
    }
}

/// Riccati candidate, then the LMI program when state dimensions agree,
/// then scaled Riccati. Returns the first certified design, or the last
/// candidate (uncertified) when none certifies.
pub fn synthesize(chain: &ChainSystem, opts: &SynthesisOptions) -> Result<TerminalDesign> {
    let riccati = riccati_candidate(chain);
    if let Ok(d) = &riccati {
        if d.certified {
            return riccati;
        }
    }
    let equal_dims = chain.subsystems().iter().all(|s| s.n() == chain.get(0).n());
    let mut last_err = None;
    if opts.try_sdp && equal_dims {
        match solve_terminal_sdp(chain, &opts.sdp) {
            Ok(d) if d.certified => return Ok(d),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match scaled_riccati_candidate(chain) {
        Ok(d) => Ok(d),
        Err(e) => Err(last_err.unwrap_or(e)),
    }
}
