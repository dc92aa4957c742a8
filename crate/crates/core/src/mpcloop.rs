//! Receding-horizon loop: solve, apply the first inputs, advance the plant.

use alloc::vec::Vec;

use crate::error::Result;
use crate::ipm::{mehrotra_solve_with, CentralizedKkt, IpmOptions, IpmStatus, KktSolver};
use crate::linalg::Vector;
use crate::model::{step_plant, ChainSystem};
use crate::qpstruct::{build_structured_qp, StructuredQP};
use crate::sets::TerminalSets;
use crate::synthesis::TerminalDesign;

/// Everything needed to evaluate the controller at a state.
#[derive(Debug, Clone, Copy)]
pub struct Controller<'a> {
    pub chain: &'a ChainSystem,
    pub design: &'a TerminalDesign,
    pub terminal: &'a TerminalSets,
    pub horizon: usize,
    pub options: IpmOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// First-stage inputs `u_0^i`.
    pub inputs: Vec<Vector>,
    /// Optimal value `V_N(x)` in the ½ convention.
    pub cost: f64,
    pub iterations: usize,
    pub status: IpmStatus,
    pub z: Vector,
}

impl StepOutcome {
    pub fn converged(&self) -> bool {
        self.status == IpmStatus::Converged
    }
}

/// Solves the finite-horizon problem at `x` with the given backend.
pub fn mpc_step_with(ctrl: &Controller, x: &[Vector], kkt: &mut dyn KktSolver) -> Result<StepOutcome> {
    let qp = build_structured_qp(ctrl.chain, ctrl.design, ctrl.terminal, x, ctrl.horizon)?;
    if x.iter().all(|v| v.iter().all(|e| *e == 0.0)) {
        // z = 0 is feasible (b > 0, 0 ∈ X_f) and minimizes a positive definite cost.
        return Ok(origin_outcome(ctrl.chain, &qp));
    }
    let sol = mehrotra_solve_with(&qp, &ctrl.options, kkt, &mut |_| {})?;
    let inputs = (0..ctrl.chain.len()).map(|i| qp.layout.first_input(&sol.iterate.z, i)).collect();
    Ok(StepOutcome {
        inputs,
        cost: qp.cost(&sol.iterate.z),
        iterations: sol.iterations,
        status: sol.status,
        z: sol.iterate.z,
    })
}

fn origin_outcome(chain: &ChainSystem, qp: &StructuredQP) -> StepOutcome {
    StepOutcome {
        inputs: chain.subsystems().iter().map(|s| Vector::zeros(s.m())).collect(),
        cost: 0.0,
        iterations: 0,
        status: IpmStatus::Converged,
        z: Vector::zeros(qp.num_vars()),
    }
}

pub fn mpc_step(ctrl: &Controller, x: &[Vector]) -> Result<StepOutcome> {
    let mut kkt = CentralizedKkt::new();
    kkt.regularization = ctrl.options.regularization;
    mpc_step_with(ctrl, x, &mut kkt)
}

/// Largest violation of the mixed constraints at `(x, u)` (zero if satisfied).
pub fn constraint_violation(chain: &ChainSystem, x: &[Vector], u: &[Vector]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, s) in chain.subsystems().iter().enumerate() {
        let r = &s.gx * &x[i] + &s.gu * &u[i] - &s.bound;
        worst = worst.max(r.max());
    }
    worst.max(0.0)
}

pub fn stage_cost(chain: &ChainSystem, x: &[Vector], u: &[Vector]) -> f64 {
    chain
        .subsystems()
        .iter()
        .enumerate()
        .map(|(i, s)| s.stage_cost(&x[i], &u[i]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStatus {
    Completed,
    /// The solve at this time step did not converge; the run stopped there.
    SolverFailed { step: usize },
}

/// One row per visited state `x_0, …, x_T`. Row `t` holds the controller's
/// decision at `x_t`; the decision of the last row is not applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    pub states: Vec<Vec<Vector>>,
    pub inputs: Vec<Vec<Vector>>,
    pub costs: Vec<f64>,
    pub iterations: Vec<usize>,
    pub max_violation: Vec<f64>,
    pub in_terminal_set: Vec<bool>,
    pub status: TraceStatus,
}

impl ClosedLoopTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `V_N(x_{t+1}) − V_N(x_t)` over consecutive solved rows.
    pub fn lyapunov_differences(&self) -> Vec<f64> {
        let k = self.costs.len();
        (1..k).map(|t| self.costs[t] - self.costs[t - 1]).collect()
    }

    /// `V_N(x_{t+1}) − V_N(x_t) + ℓ(x_t, u_t)` over applied steps; nonpositive
    /// for an exact solver.
    pub fn decrease_margins(&self, chain: &ChainSystem) -> Vec<f64> {
        self.lyapunov_differences()
            .iter()
            .enumerate()
            .map(|(t, d)| d + stage_cost(chain, &self.states[t], &self.inputs[t]))
            .collect()
    }
}

/// `T` solve–apply–advance steps from `x0`, then one final solve at `x_T`.
pub fn simulate_closed_loop(ctrl: &Controller, x0: &[Vector], steps: usize) -> Result<ClosedLoopTrace> {
    let mut kkt = CentralizedKkt::new();
    kkt.regularization = ctrl.options.regularization;
    simulate_closed_loop_with(ctrl, x0, steps, &mut kkt)
}

pub fn simulate_closed_loop_with(
    ctrl: &Controller,
    x0: &[Vector],
    steps: usize,
    kkt: &mut dyn KktSolver,
) -> Result<ClosedLoopTrace> {
    let mut trace = ClosedLoopTrace {
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        costs: Vec::with_capacity(steps + 1),
        iterations: Vec::with_capacity(steps + 1),
        max_violation: Vec::with_capacity(steps + 1),
        in_terminal_set: Vec::with_capacity(steps + 1),
        status: TraceStatus::Completed,
    };
    let mut x: Vec<Vector> = x0.to_vec();
    for t in 0..=steps {
        let out = mpc_step_with(ctrl, &x, kkt)?;
        trace.in_terminal_set.push(ctrl.terminal.contains(&x, 1e-9));
        trace.max_violation.push(constraint_violation(ctrl.chain, &x, &out.inputs));
        trace.iterations.push(out.iterations);
        trace.states.push(x.clone());
        if !out.converged() {
            trace.inputs.push(out.inputs);
            trace.status = TraceStatus::SolverFailed { step: t };
            return Ok(trace);
        }
        trace.costs.push(out.cost);
        if t < steps {
            x = step_plant(ctrl.chain, &x, &out.inputs)?;
        }
        trace.inputs.push(out.inputs);
    }
    Ok(trace)
}
