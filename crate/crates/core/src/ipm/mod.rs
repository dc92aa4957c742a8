//! Mehrotra predictor-corrector interior-point method for [`StructuredQP`].
//!
//! KKT residuals: `r_z = Hz + Cᵀν + Gᵀλ`, `r_ν = Cz − c`, `r_λ = Gz − b + s`,
//! `r_s = λ ∘ s` (shifted in the corrector). The Newton system is
//!
//! ```text
//! H Δz + Cᵀ Δν + Gᵀ Δλ = −r_z
//! C Δz                 = −r_ν
//! G Δz + Δs            = −r_λ
//! S Δλ + Λ Δs          = −r_s
//! ```
//!
//! reduced to `Y Δν = r_ν − C Φ^{-1} r_d` with `Y = C Φ^{-1} Cᵀ`.

mod factor;

use alloc::vec::Vec;

pub use factor::*;

use crate::dist::FlopCounter;
use crate::error::Result;
use crate::linalg::Vector;
use crate::qpstruct::StructuredQP;

/// Largest residual of the 4-block Newton system at `step`, scaled by
/// `1 + ‖rhs‖∞`.
pub fn newton_residual(qp: &StructuredQP, lambda: &Vector, s: &Vector, rhs: &NewtonRhs, step: &NewtonStep) -> f64 {
    let r1 = qp.h_mul(&step.dz) + qp.c_tmul(&step.dnu) + qp.g_tmul(&step.dlambda) + &rhs.r_z;
    let r2 = qp.c_mul(&step.dz) + &rhs.r_nu;
    let r3 = qp.g_mul(&step.dz) + &step.ds + &rhs.r_lambda;
    let r4 = s.component_mul(&step.dlambda) + lambda.component_mul(&step.ds) + &rhs.r_s;
    let scale = 1.0 + rhs.r_z.amax().max(rhs.r_nu.amax()).max(rhs.r_lambda.amax()).max(rhs.r_s.amax());
    r1.amax().max(r2.amax()).max(r3.amax()).max(r4.amax()) / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpmIterate {
    pub z: Vector,
    pub nu: Vector,
    pub lambda: Vector,
    pub s: Vector,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub r_z: Vector,
    pub r_nu: Vector,
    pub r_lambda: Vector,
}

/// Right-hand side data of one Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonRhs {
    pub r_z: Vector,
    pub r_nu: Vector,
    pub r_lambda: Vector,
    pub r_s: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub dz: Vector,
    pub dnu: Vector,
    pub dlambda: Vector,
    pub ds: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonPhase {
    Initial,
    Predictor,
    Corrector,
}

/// Passed to the observer after every Newton solve.
#[derive(Debug)]
pub struct NewtonEvent<'a> {
    pub iteration: usize,
    pub phase: NewtonPhase,
    pub lambda: &'a Vector,
    pub s: &'a Vector,
    pub rhs: &'a NewtonRhs,
    pub step: &'a NewtonStep,
}

/// Backend for factorizing and solving the Newton system.
pub trait KktSolver {
    fn factor(&mut self, qp: &StructuredQP, lambda: &Vector, s: &Vector) -> Result<()>;
    fn solve(&mut self, qp: &StructuredQP, lambda: &Vector, s: &Vector, rhs: &NewtonRhs) -> Result<NewtonStep>;
}

/// In-process structured solver.
#[derive(Debug, Clone, Default)]
pub struct CentralizedKkt {
    pub factorization: Option<StructuredFactorization>,
    pub flops: FlopCounter,
    pub regularization: f64,
}

impl CentralizedKkt {
    pub fn new() -> Self {
        CentralizedKkt {
            factorization: None,
            flops: FlopCounter::default(),
            regularization: REGULARIZATION,
        }
    }
}

impl KktSolver for CentralizedKkt {
    fn factor(&mut self, qp: &StructuredQP, lambda: &Vector, s: &Vector) -> Result<()> {
        self.flops.ensure(qp.subs.len());
        self.factorization = Some(factorize(qp, lambda, s, self.regularization, &mut self.flops)?);
        Ok(())
    }

    fn solve(&mut self, qp: &StructuredQP, lambda: &Vector, s: &Vector, rhs: &NewtonRhs) -> Result<NewtonStep> {
        let fact = self
            .factorization
            .as_ref()
            .ok_or(crate::Error::Numerical("solve before factor"))?;
        Ok(solve_newton(qp, fact, lambda, s, rhs))
    }
}

/// Splits a global vector into per-subsystem segments.
pub(crate) fn segments(v: &Vector, offsets: &[usize]) -> Vec<Vector> {
    offsets.windows(2).map(|w| v.rows(w[0], w[1] - w[0]).into_owned()).collect()
}

pub(crate) fn join(parts: &[Vector]) -> Vector {
    crate::model::stack(parts)
}

/// Structured Newton solve using the chain sweeps.
pub fn solve_newton(
    qp: &StructuredQP,
    fact: &StructuredFactorization,
    lambda: &Vector,
    s: &Vector,
    rhs: &NewtonRhs,
) -> NewtonStep {
    let mm = qp.subs.len();
    let zo = &qp.layout.seg;
    let eo = qp.eq_offsets();
    let io = qp.ineq_offsets();
    let rz = segments(&rhs.r_z, zo);
    let rn = segments(&rhs.r_nu, &eo);
    let rl = segments(&rhs.r_lambda, &io);
    let rs = segments(&rhs.r_s, &io);
    let lam = segments(lambda, &io);
    let sv = segments(s, &io);

    let mut rd = Vec::with_capacity(mm);
    let mut t = Vec::with_capacity(mm);
    for i in 0..mm {
        let f = &fact.subs[i];
        let r = reduced_rhs(&qp.local(i), &sv[i], &f.scaling, &rz[i], &rl[i], &rs[i]);
        t.push(lbold_solve(&f.lbold, &r));
        rd.push(r);
    }
    let mut y: Vec<Vector> = Vec::with_capacity(mm);
    for i in 0..mm {
        let f = &fact.subs[i];
        let v_term = v_mul(&f.v, &f.lbold, &t[i]);
        let w_term = (i > 0).then(|| w_mul(&f.w, &fact.subs[i - 1].lbold, &t[i - 1]));
        let tau = schur_rhs(&rn[i], &v_term, w_term.as_ref());
        let yi = forward_step(&f.l_diag, f.l_off.as_ref(), &tau, y.last());
        y.push(yi);
    }
    let mut dnu = alloc::vec![Vector::zeros(0); mm];
    for i in (0..mm).rev() {
        let coupling = (i + 1 < mm).then(|| l_off_tmul(fact.subs[i + 1].l_off.as_ref().unwrap(), &dnu[i + 1]));
        dnu[i] = backward_step(&fact.subs[i].l_diag, &y[i], coupling.as_ref());
    }
    let mut dz = Vec::with_capacity(mm);
    let mut dl = Vec::with_capacity(mm);
    let mut ds = Vec::with_capacity(mm);
    for i in 0..mm {
        let f = &fact.subs[i];
        let next = (i + 1 < mm).then(|| qp.c_cpl_tmul(i + 1, &dnu[i + 1]));
        let dzi = primal_step(&qp.local(i), &f.lbold, &rd[i], &dnu[i], next.as_ref());
        let (a, b) = dual_step(&qp.local(i), &lam[i], &sv[i], &f.scaling, &rl[i], &rs[i], &dzi);
        dz.push(dzi);
        dl.push(a);
        ds.push(b);
    }
    NewtonStep {
        dz: join(&dz),
        dnu: join(&dnu),
        dlambda: join(&dl),
        ds: join(&ds),
    }
}

pub fn residuals(qp: &StructuredQP, it: &IpmIterate) -> Residuals {
    Residuals {
        r_z: qp.h_mul(&it.z) + qp.c_tmul(&it.nu) + qp.g_tmul(&it.lambda),
        r_nu: qp.c_mul(&it.z) - qp.c(),
        r_lambda: qp.g_mul(&it.z) - qp.b() + &it.s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    /// Relative tolerance, scaled by `1 + ‖b‖∞ + ‖c‖∞`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Fraction-to-boundary factor.
    pub step_factor: f64,
    pub regularization: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol: 1e-8,
            max_iterations: 50,
            step_factor: 0.995,
            regularization: REGULARIZATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpmSolution {
    pub iterate: IpmIterate,
    pub iterations: usize,
    pub status: IpmStatus,
    /// `max(‖r_z‖∞, ‖r_ν‖∞, ‖r_λ‖∞, μ)` at the returned iterate.
    pub error: f64,
    /// `μ` after each accepted step.
    pub mu_history: Vec<f64>,
}

impl IpmSolution {
    pub fn converged(&self) -> bool {
        self.status == IpmStatus::Converged
    }
}

/// Centering parameter `(μ_aff / μ)³`.
pub fn centering(mu_aff: f64, mu: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    let r = mu_aff / mu;
    r * r * r
}

/// Largest `α ≥ 0` with `v + α dv ≥ 0` (infinite if `dv ≥ 0`).
pub fn boundary_step(v: &Vector, dv: &Vector) -> f64 {
    let mut a = f64::INFINITY;
    for (x, d) in v.iter().zip(dv.iter()) {
        if *d < 0.0 {
            a = a.min(-x / d);
        }
    }
    a
}

/// `min(1, boundary_step)`.
pub fn max_step(v: &Vector, dv: &Vector) -> f64 {
    boundary_step(v, dv).min(1.0)
}

fn kkt_error(r: &Residuals, mu: f64) -> f64 {
    r.r_z.amax().max(r.r_nu.amax()).max(r.r_lambda.amax()).max(mu)
}

fn mean_complementarity(lambda: &Vector, s: &Vector) -> f64 {
    if lambda.is_empty() {
        0.0
    } else {
        lambda.dot(s) / lambda.len() as f64
    }
}

pub fn mehrotra_solve(qp: &StructuredQP, options: &IpmOptions) -> Result<IpmSolution> {
    let mut kkt = CentralizedKkt::new();
    kkt.regularization = options.regularization;
    mehrotra_solve_with(qp, options, &mut kkt, &mut |_| {})
}

/// Mehrotra's method with a chosen backend and an observer called after
/// every Newton solve.
pub fn mehrotra_solve_with(
    qp: &StructuredQP,
    options: &IpmOptions,
    kkt: &mut dyn KktSolver,
    observer: &mut dyn FnMut(&NewtonEvent),
) -> Result<IpmSolution> {
    let nz = qp.num_vars();
    let ne = qp.num_eq();
    let ni = qp.num_ineq();
    let b = qp.b();
    let c = qp.c();
    let scale = 1.0 + b.amax() + c.amax();
    let target = options.tol * scale;

    // Starting point: one affine step from (0, 0, 1, 1), then λ, s pushed to ≥ 1.
    let mut it = IpmIterate {
        z: Vector::zeros(nz),
        nu: Vector::zeros(ne),
        lambda: Vector::from_element(ni, 1.0),
        s: Vector::from_element(ni, 1.0),
        mu: 1.0,
    };
    {
        let r = residuals(qp, &it);
        let rhs = NewtonRhs {
            r_z: r.r_z,
            r_nu: r.r_nu,
            r_lambda: r.r_lambda,
            r_s: it.lambda.component_mul(&it.s),
        };
        kkt.factor(qp, &it.lambda, &it.s)?;
        let step = kkt.solve(qp, &it.lambda, &it.s, &rhs)?;
        observer(&NewtonEvent {
            iteration: 0,
            phase: NewtonPhase::Initial,
            lambda: &it.lambda,
            s: &it.s,
            rhs: &rhs,
            step: &step,
        });
        it.z += &step.dz;
        it.nu += &step.dnu;
        it.lambda = (&it.lambda + &step.dlambda).map(|v| v.abs().max(1.0));
        it.s = (&it.s + &step.ds).map(|v| v.abs().max(1.0));
        it.mu = mean_complementarity(&it.lambda, &it.s);
    }

    let mut mu_history = Vec::new();
    let mut iterations = 0;
    loop {
        let r = residuals(qp, &it);
        let err = kkt_error(&r, it.mu);
        if err <= target {
            return Ok(IpmSolution {
                iterate: it,
                iterations,
                status: IpmStatus::Converged,
                error: err,
                mu_history,
            });
        }
        if iterations >= options.max_iterations || !err.is_finite() {
            return Ok(IpmSolution {
                iterate: it,
                iterations,
                status: IpmStatus::NotConverged,
                error: err,
                mu_history,
            });
        }
        iterations += 1;
        kkt.factor(qp, &it.lambda, &it.s)?;

        let mut rhs = NewtonRhs {
            r_z: r.r_z,
            r_nu: r.r_nu,
            r_lambda: r.r_lambda,
            r_s: it.lambda.component_mul(&it.s),
        };
        let aff = kkt.solve(qp, &it.lambda, &it.s, &rhs)?;
        observer(&NewtonEvent {
            iteration: iterations,
            phase: NewtonPhase::Predictor,
            lambda: &it.lambda,
            s: &it.s,
            rhs: &rhs,
            step: &aff,
        });
        let a_aff = max_step(&it.lambda, &aff.dlambda).min(max_step(&it.s, &aff.ds));
        let mu_aff = mean_complementarity(&(&it.lambda + &aff.dlambda * a_aff), &(&it.s + &aff.ds * a_aff));
        let sigma = centering(mu_aff, it.mu);

        let shift = aff.dlambda.component_mul(&aff.ds).add_scalar(-sigma * it.mu);
        rhs.r_s += shift;
        let step = kkt.solve(qp, &it.lambda, &it.s, &rhs)?;
        observer(&NewtonEvent {
            iteration: iterations,
            phase: NewtonPhase::Corrector,
            lambda: &it.lambda,
            s: &it.s,
            rhs: &rhs,
            step: &step,
        });
        let a_max = boundary_step(&it.lambda, &step.dlambda).min(boundary_step(&it.s, &step.ds));
        let alpha = (options.step_factor * a_max).min(1.0);
        it.z += &step.dz * alpha;
        it.nu += &step.dnu * alpha;
        it.lambda += &step.dlambda * alpha;
        it.s += &step.ds * alpha;
        it.mu = mean_complementarity(&it.lambda, &it.s);
        mu_history.push(it.mu);
    }
}


#[cfg(test)]
mod tests;
