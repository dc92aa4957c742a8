//! Seeded problem instances for benchmarks and solver checks.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{random_chain, step_plant, ChainSystem, RandomChainParams};
use crate::qpstruct::{build_structured_qp, StructuredQP};
use crate::sets::{Polytope, TerminalSets};
use crate::synthesis::{riccati_candidate, TerminalDesign};

/// Terminal sets equal to each subsystem's pure state constraints. Not
/// certified; used where only the QP structure matters.
pub fn state_box_terminal(chain: &ChainSystem) -> Result<TerminalSets> {
    let mut sets = Vec::with_capacity(chain.len());
    for s in chain.subsystems() {
        let rows: Vec<usize> = (0..s.q_rows())
            .filter(|&r| s.gu.row(r).iter().all(|v| *v == 0.0) && s.gx.row(r).iter().any(|v| *v != 0.0))
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptySet("subsystem has no pure state constraints"));
        }
        let f = Mat::from_fn(rows.len(), s.n(), |k, j| s.gx[(rows[k], j)]);
        let g = Vector::from_fn(rows.len(), |k, _| s.bound[rows[k]]);
        sets.push(Polytope::new(f, g)?);
    }
    Ok(TerminalSets {
        certified: alloc::vec![false; sets.len()],
        disturbance_vertices: alloc::vec![Vec::new(); sets.len()],
        sets,
        alpha: 1.0,
    })
}

/// Largest `s` such that the zero-input rollout from `s·d` satisfies every
/// constraint for `horizon` steps and ends in `terminal`.
pub fn zero_input_scale(chain: &ChainSystem, terminal: &TerminalSets, d: &[Vector], horizon: usize) -> Result<f64> {
    let zeros: Vec<Vector> = chain.subsystems().iter().map(|s| Vector::zeros(s.m())).collect();
    let mut x: Vec<Vector> = d.to_vec();
    let mut scale = f64::INFINITY;
    let mut tighten = |rows: &Mat, bound: &Vector, v: &Vector| {
        let a = rows * v;
        for k in 0..a.len() {
            if a[k] > 0.0 {
                scale = scale.min(bound[k] / a[k]);
            }
        }
    };
    for t in 0..=horizon {
        for (i, s) in chain.subsystems().iter().enumerate() {
            if t < horizon {
                tighten(&s.gx, &s.bound, &x[i]);
            } else {
                tighten(terminal.sets[i].f(), terminal.sets[i].g(), &x[i]);
            }
        }
        if t < horizon {
            x = step_plant(chain, &x, &zeros)?;
        }
    }
    Ok(scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceParams {
    pub chain: RandomChainParams,
    pub horizon: usize,
    /// Fraction of the zero-input feasible scale used for `x0`.
    pub fill: f64,
}

/// A ready-to-solve problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub chain: ChainSystem,
    pub design: TerminalDesign,
    pub terminal: TerminalSets,
    pub x0: Vec<Vector>,
    pub horizon: usize,
}

impl Instance {
    pub fn qp(&self) -> Result<StructuredQP> {
        build_structured_qp(&self.chain, &self.design, &self.terminal, &self.x0, self.horizon)
    }
}

/// Random chain with Riccati terminal weights, state-box terminal sets and
/// an initial state inside the zero-input feasible region.
pub fn random_instance(seed: u64, params: &InstanceParams) -> Result<Instance> {
    let chain = random_chain(seed, &params.chain)?;
    let design = riccati_candidate(&chain)?;
    let terminal = state_box_terminal(&chain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let d: Vec<Vector> = chain
        .subsystems()
        .iter()
        .map(|s| Vector::from_fn(s.n(), |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let scale = zero_input_scale(&chain, &terminal, &d, params.horizon)?;
    let s = params.fill * scale.min(1e6);
    let x0 = d.iter().map(|v| v * s).collect();
    Ok(Instance {
        chain,
        design,
        terminal,
        x0,
        horizon: params.horizon,
    })
}

/// Dimensions drawn like the oracle-equivalence sweep: `M ∈ 1..=8`,
/// `N ∈ 2..=20`, `n_i, m_i ∈ 1..=4`.
pub fn sweep_params(seed: u64) -> InstanceParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(1));
    let mm = rng.random_range(1..=8);
    let dims = (0..mm)
        .map(|_| (rng.random_range(1..=4), rng.random_range(1..=4)))
        .collect();
    InstanceParams {
        chain: RandomChainParams {
            dims,
            margin: rng.random_range(0.6..1.1),
            coupling: rng.random_range(0.0..0.5),
        },
        horizon: rng.random_range(2..=20),
        fill: 0.9,
    }
}
