//! Randomized invariants over seeded chains and sets.

use chainmpc_core::dist::{
    build_agents, gather_factorization, run_distributed_solves, run_factorization_schedule, total_flops,
};
use chainmpc_core::instances::{random_instance, state_box_terminal, zero_input_scale, InstanceParams};
use chainmpc_core::ipm::{factorize, mehrotra_solve, solve_newton, IpmOptions, NewtonRhs, REGULARIZATION};
use chainmpc_core::linalg::{block_diag, spectral_radius, Mat, Vector};
use chainmpc_core::model::{
    assemble_closed_loop, assemble_global, assemble_weights, random_chain, stack, step_plant, validate_chain,
    ChainSystem, RandomChainParams,
};
use chainmpc_core::mpcloop::{simulate_closed_loop, Controller, TraceStatus};
use chainmpc_core::qpstruct::build_structured_qp;
use chainmpc_core::sets::{build_terminal_sets, Polytope};
use chainmpc_core::synthesis::{build_certificate, riccati_candidate, synthesize, SynthesisOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dims(max_len: usize, max_n: usize, max_m: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((1..=max_n, 1..=max_m), 1..=max_len)
}

fn chain_strategy(max_len: usize, max_n: usize, max_m: usize) -> impl Strategy<Value = ChainSystem> {
    (any::<u64>(), dims(max_len, max_n, max_m), 0.5..1.2f64, 0.0..0.5f64).prop_map(|(seed, dims, margin, coupling)| {
        random_chain(seed, &RandomChainParams { dims, margin, coupling }).unwrap()
    })
}

fn random_vecs(rng: &mut ChaCha8Rng, sizes: impl Iterator<Item = usize>, scale: f64) -> Vec<Vector> {
    sizes
        .map(|n| Vector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0)))
        .collect()
}

fn random_polytope(rng: &mut ChaCha8Rng, d: usize, rows: usize) -> Polytope {
    let f = Mat::from_fn(rows, d, |_, _| rng.random_range(-1.0..1.0));
    let g = Vector::from_fn(rows, |_, _| rng.random_range(0.5..2.0));
    let bounded = Polytope::unit_box(d, 3.0);
    Polytope::new(f, g).unwrap().intersect(&bounded).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn generated_chains_validate(chain in chain_strategy(6, 4, 3)) {
        let again = validate_chain(chain.clone().into_subsystems());
        prop_assert_eq!(again.unwrap(), chain);
    }

    #[test]
    fn step_plant_matches_assembled_dynamics(chain in chain_strategy(6, 4, 3), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vecs(&mut rng, chain.subsystems().iter().map(|s| s.n()), 1.0);
        let u = random_vecs(&mut rng, chain.subsystems().iter().map(|s| s.m()), 1.0);
        let (a, b) = assemble_global(&chain);
        let direct = stack(&step_plant(&chain, &x, &u).unwrap());
        prop_assert!((direct - (&a * stack(&x) + &b * stack(&u))).amax() <= 1e-12);
    }

    #[test]
    fn truncation_is_a_leading_block(chain in chain_strategy(6, 3, 2), cut in 1usize..=6) {
        let len = cut.min(chain.len());
        let (a, b) = assemble_global(&chain);
        let (at, bt) = assemble_global(&chain.truncated(len));
        prop_assert_eq!(a.view((0, 0), at.shape()).into_owned(), at);
        prop_assert_eq!(b.view((0, 0), bt.shape()).into_owned(), bt);
    }

    #[test]
    fn riccati_without_coupling_certifies(chain in chain_strategy(4, 3, 2)) {
        let uncoupled: Vec<_> = chain
            .into_subsystems()
            .into_iter()
            .map(|mut s| {
                s.a_cpl = s.a_cpl.map(|m| Mat::zeros(m.nrows(), m.ncols()));
                s.b_cpl = s.b_cpl.map(|m| Mat::zeros(m.nrows(), m.ncols()));
                s
            })
            .collect();
        let chain = validate_chain(uncoupled).unwrap();
        let d = riccati_candidate(&chain).unwrap();
        let cert = build_certificate(&chain, &d.gains, &d.penalties).unwrap();
        let top = chainmpc_core::linalg::max_eigenvalue(&cert.assembled);
        prop_assert!(top <= 1e-10, "{top} {}", d.penalties.iter().map(|p| p.amax()).fold(0.0, f64::max));
    }

    #[test]
    fn erosion_then_dilation_never_grows(seed in any::<u64>(), d in 1usize..=2, rows in 3usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_polytope(&mut rng, d, rows);
        let w = Polytope::unit_box(d, rng.random_range(0.01..0.2));
        let eroded = p.pontryagin_diff(&w).unwrap();
        prop_assume!(eroded.has_interior());
        let back = eroded.minkowski_sum(&w).unwrap();
        prop_assert!(p.contains_set(&back, 1e-9).unwrap());
    }

    #[test]
    fn scaled_vertices_are_scaled(seed in any::<u64>(), d in 1usize..=3, alpha in 0.1..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_polytope(&mut rng, d, 6);
        let mut a: Vec<Vector> = p.scale(alpha).vertices().unwrap();
        let mut b: Vec<Vector> = p.vertices().unwrap().into_iter().map(|v| v * alpha).collect();
        prop_assert_eq!(a.len(), b.len());
        let key = |v: &Vector| v.iter().map(|x| (x * 1e6).round() as i64).collect::<Vec<_>>();
        a.sort_by_key(key);
        b.sort_by_key(key);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).amax() <= 1e-9 * alpha.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn certified_designs_decrease_and_are_schur(chain in chain_strategy(3, 2, 2), seed in any::<u64>()) {
        let d = synthesize(&chain, &SynthesisOptions::default()).unwrap();
        prop_assume!(d.certified);
        for (s, k) in chain.subsystems().iter().zip(&d.gains) {
            prop_assert!(spectral_radius(&s.closed_loop(k)) < 1.0);
        }
        let a = assemble_closed_loop(&chain, &d.gains);
        let (q, r) = assemble_weights(&chain);
        let kd = block_diag(&d.gains.iter().collect::<Vec<_>>());
        let pd = block_diag(&d.penalties.iter().collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let x = Vector::from_fn(a.nrows(), |_, _| rng.random_range(-1.0..1.0));
            let xn = &a * &x;
            let lhs = xn.dot(&(&pd * &xn)) - x.dot(&(&pd * &x)) + x.dot(&(kd.transpose() * &r * &kd * &x)) + x.dot(&(&q * &x));
            prop_assert!(lhs <= 1e-8 * x.norm_squared());
        }
    }

    #[test]
    fn terminal_sets_pass_vertex_checks(chain in chain_strategy(3, 2, 2)) {
        let d = synthesize(&chain, &SynthesisOptions::default()).unwrap();
        prop_assume!(d.certified);
        let Ok(sets) = build_terminal_sets(&chain, &d) else { return Ok(()); };
        for (i, s) in chain.subsystems().iter().enumerate() {
            let k = &d.gains[i];
            let a = s.closed_loop(k);
            let adm = &s.gx + &s.gu * k;
            let verts = sets.sets[i].vertices().unwrap();
            let w: Vec<Vector> = if i == 0 {
                vec![Vector::zeros(s.n())]
            } else {
                let c = s.closed_loop_coupling(&d.gains[i - 1]).unwrap();
                sets.sets[i - 1].vertices().unwrap().iter().map(|v| &c * v).collect()
            };
            for v in &verts {
                prop_assert!((&adm * v - &s.bound).max() <= 1e-9);
                for wv in &w {
                    prop_assert!(sets.sets[i].contains(&(&a * v + wv), 1e-9));
                }
            }
        }
    }

    #[test]
    fn packed_rollouts_satisfy_equalities(chain in chain_strategy(5, 3, 2), horizon in 1usize..=8, seed in any::<u64>()) {
        let d = riccati_candidate(&chain).unwrap();
        let term = state_box_terminal(&chain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random_vecs(&mut rng, chain.subsystems().iter().map(|s| s.n()), 0.5);
        let qp = build_structured_qp(&chain, &d, &term, &x0, horizon).unwrap();
        let mut xs = vec![x0];
        let mut us = Vec::new();
        for _ in 0..horizon {
            let u = random_vecs(&mut rng, chain.subsystems().iter().map(|s| s.m()), 1.0);
            xs.push(step_plant(&chain, xs.last().unwrap(), &u).unwrap());
            us.push(u);
        }
        let parts: Vec<Vector> = (0..chain.len())
            .map(|i| {
                let xi: Vec<Vector> = xs[1..].iter().map(|x| x[i].clone()).collect();
                let ui: Vec<Vector> = us.iter().map(|u| u[i].clone()).collect();
                qp.layout.pack(i, &xi, &ui)
            })
            .collect();
        let z = stack(&parts);
        let scale = 1.0 + qp.c().amax() + z.amax();
        prop_assert!((qp.c_mul(&z) - qp.c()).amax() <= 1e-12 * scale);
        let rows: usize = chain.subsystems().iter().map(|s| horizon * s.q_rows()).sum::<usize>()
            + term.sets.iter().map(|p| p.num_rows()).sum::<usize>();
        prop_assert_eq!(qp.num_ineq(), rows);
    }

    #[test]
    fn ipm_iterates_stay_interior_and_feasible(seed in 0u64..10_000, len in 1usize..=4, horizon in 2usize..=10) {
        let params = InstanceParams {
            chain: RandomChainParams::uniform(len, 2, 1, 0.9, 0.3),
            horizon,
            fill: 0.9,
        };
        let qp = random_instance(seed, &params).unwrap().qp().unwrap();
        let sol = mehrotra_solve(&qp, &IpmOptions::default()).unwrap();
        prop_assert!(sol.converged());
        prop_assert!(sol.iterate.lambda.min() > 0.0 && sol.iterate.s.min() > 0.0);
        prop_assert!(sol.mu_history.windows(2).all(|w| w[1] < w[0]));
        prop_assert!((qp.g_mul(&sol.iterate.z) - qp.b()).max() <= 1e-7);
        prop_assert!((qp.c_mul(&sol.iterate.z) - qp.c()).amax() <= 1e-7);
    }

    #[test]
    fn distributed_runs_are_local_deterministic_and_exact(seed in 0u64..10_000, len in 1usize..=6) {
        let params = InstanceParams {
            chain: RandomChainParams::uniform(len, 2, 2, 0.9, 0.4),
            horizon: 4,
            fill: 0.9,
        };
        let qp = random_instance(seed, &params).unwrap().qp().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam = Vector::from_fn(qp.num_ineq(), |_, _| rng.random_range(0.1..3.0));
        let s = Vector::from_fn(qp.num_ineq(), |_, _| rng.random_range(0.1..3.0));
        let rhs = NewtonRhs {
            r_z: Vector::from_fn(qp.num_vars(), |_, _| rng.random_range(-1.0..1.0)),
            r_nu: Vector::from_fn(qp.num_eq(), |_, _| rng.random_range(-1.0..1.0)),
            r_lambda: Vector::from_fn(qp.num_ineq(), |_, _| rng.random_range(-1.0..1.0)),
            r_s: Vector::from_fn(qp.num_ineq(), |_, _| rng.random_range(-1.0..1.0)),
        };
        let run = || {
            let mut agents = build_agents(&qp, REGULARIZATION);
            let f = run_factorization_schedule(&mut agents, &qp, &lam, &s).unwrap();
            let (step, v) = run_distributed_solves(&mut agents, &qp, &lam, &s, &rhs).unwrap();
            (agents, f, v, step)
        };
        let (agents, flog, vlog, step) = run();
        let (_, flog2, vlog2, step2) = run();
        prop_assert_eq!(flog.records(), flog2.records());
        prop_assert_eq!(vlog.records(), vlog2.records());
        prop_assert_eq!(&step, &step2);
        for r in flog.records().iter().chain(vlog.records().iter()) {
            prop_assert_eq!(r.sender.abs_diff(r.receiver), 1);
        }
        let mut counter = Default::default();
        let central = factorize(&qp, &lam, &s, REGULARIZATION, &mut counter).unwrap();
        prop_assert_eq!(&gather_factorization(&agents).unwrap(), &central);
        prop_assert_eq!(total_flops(&agents), counter);
        prop_assert_eq!(step, solve_newton(&qp, &central, &lam, &s, &rhs));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn closed_loop_is_feasible_admissible_and_stays_terminal(seed in 0u64..10_000, n in 1usize..=2) {
        let chain = random_chain(seed, &RandomChainParams::uniform(2, n, 1, 0.9, 0.3)).unwrap();
        let d = synthesize(&chain, &SynthesisOptions::default()).unwrap();
        prop_assume!(d.certified);
        let Ok(term) = build_terminal_sets(&chain, &d) else { return Ok(()); };
        prop_assume!(term.all_certified());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = random_vecs(&mut rng, chain.subsystems().iter().map(|s| s.n()), 1.0);
        let horizon = 6;
        let scale = 0.9 * zero_input_scale(&chain, &term, &dir, horizon).unwrap().min(1e3);
        let x0: Vec<Vector> = dir.iter().map(|v| v * scale).collect();
        let ctrl = Controller { chain: &chain, design: &d, terminal: &term, horizon, options: IpmOptions::default() };
        let trace = simulate_closed_loop(&ctrl, &x0, 25).unwrap();
        // Recursive feasibility: a feasible start never leads to a failed solve.
        prop_assert_eq!(trace.status, TraceStatus::Completed);
        prop_assert!(trace.max_violation.iter().all(|v| *v <= 1e-7));
        if let Some(k) = trace.in_terminal_set.iter().position(|b| *b) {
            prop_assert!(trace.in_terminal_set[k..].iter().all(|b| *b));
        }
        prop_assert!(trace.decrease_margins(&chain).iter().all(|m| *m <= 1e-6));
    }
}
