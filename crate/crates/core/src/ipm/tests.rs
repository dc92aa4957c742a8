use super::*;
use crate::instances::{random_instance, state_box_terminal, InstanceParams};
use crate::linalg::{inverse, rel_diff, Mat};
use crate::model::{box_constraints, validate_chain, RandomChainParams, SubsystemModel};
use crate::oracle::{solve_equality_qp, solve_dense_qp};
use crate::qpstruct::build_structured_qp;
use crate::synthesis::riccati_candidate;
use alloc::vec;
use rand::{Rng, SeedableRng};

fn instance(seed: u64, m: usize, n: usize, mi: usize, horizon: usize, coupling: f64) -> StructuredQP {
    let params = InstanceParams {
        chain: RandomChainParams::uniform(m, n, mi, 0.9, coupling),
        horizon,
        fill: 0.9,
    };
    random_instance(seed, &params).unwrap().qp().unwrap()
}

fn random_positive(len: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vector {
    Vector::from_fn(len, |_, _| rng.random_range(0.1..3.0))
}

/// Dense `Φ` from the densified QP.
fn dense_phi(qp: &StructuredQP, lambda: &Vector, s: &Vector) -> Mat {
    let d = qp.densify();
    let w = lambda.component_div(s);
    let mut gs = d.g.clone();
    for (k, mut row) in gs.row_iter_mut().enumerate() {
        row *= w[k];
    }
    &d.h + d.g.transpose() * gs
}

fn block_diag_phi(qp: &StructuredQP, blocks: &[Vec<Mat>]) -> Mat {
    let nz = qp.num_vars();
    let mut out = Mat::zeros(nz, nz);
    for (i, bl) in blocks.iter().enumerate() {
        for (j, b) in bl.iter().enumerate() {
            let o = qp.layout.seg[i] + qp.layout.block_offset(i, j);
            out.view_mut((o, o), b.shape()).copy_from(b);
        }
    }
    out
}

#[test]
fn phi_with_unit_scaling_is_h_plus_gtg() {
    let qp = instance(3, 2, 2, 1, 4, 0.3);
    let ones = Vector::from_element(qp.num_ineq(), 1.0);
    let phi = block_diag_phi(&qp, &assemble_phi(&qp, &ones, &ones));
    let d = qp.densify();
    let want = &d.h + d.g.transpose() * &d.g;
    assert!(rel_diff(&phi, &want) < 1e-14);
}

#[test]
fn phi_matches_dense_weighted_product_and_sparsity() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let qp = instance(7, 3, 3, 2, 5, 0.3);
    let lam = random_positive(qp.num_ineq(), &mut rng);
    let s = random_positive(qp.num_ineq(), &mut rng);
    let phi = block_diag_phi(&qp, &assemble_phi(&qp, &lam, &s));
    let dense = dense_phi(&qp, &lam, &s);
    assert!(rel_diff(&phi, &dense) < 1e-12);
    // Entries outside the stage blocks are exactly zero in the dense product too.
    for r in 0..dense.nrows() {
        for c in 0..dense.ncols() {
            if phi[(r, c)] == 0.0 {
                assert_eq!(dense[(r, c)], 0.0);
            }
        }
    }
}

#[test]
fn stage_cholesky_by_hand() {
    let mut f = 0;
    let (l, shifted) = factor_stage_cholesky(
        &[Mat::from_element(1, 1, 4.0), Mat::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 5.0])],
        REGULARIZATION,
        &mut f,
    )
    .unwrap();
    assert!(!shifted);
    assert_eq!(l[0][(0, 0)], 2.0);
    assert_eq!(l[1], Mat::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2.0]));
}

#[test]
fn stage_cholesky_reconstructs_random_blocks() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let blocks: Vec<Mat> = (1..6)
        .map(|k| {
            let a = Mat::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            &a * a.transpose() + Mat::identity(k, k) * 0.1
        })
        .collect();
    let mut f = 0;
    let (ls, _) = factor_stage_cholesky(&blocks, REGULARIZATION, &mut f).unwrap();
    for (l, p) in ls.iter().zip(&blocks) {
        assert!(rel_diff(&(l * l.transpose()), p) < 1e-12);
    }
}

fn dense_c_blocks(qp: &StructuredQP, i: usize, k: usize) -> Mat {
    let d = qp.densify();
    let eo = qp.eq_offsets();
    let lay = &qp.layout;
    d.c.view((eo[i], lay.seg[k]), (eo[i + 1] - eo[i], lay.seg_len(k))).into_owned()
}

fn phi_inverse_block(qp: &StructuredQP, lam: &Vector, s: &Vector, k: usize) -> Mat {
    let dense = dense_phi(qp, lam, s);
    let lay = &qp.layout;
    inverse(&dense.view((lay.seg[k], lay.seg[k]), (lay.seg_len(k), lay.seg_len(k))).into_owned()).unwrap()
}

#[test]
fn v_with_identity_factor_is_own_constraint_block() {
    let qp = instance(2, 2, 2, 2, 4, 0.3);
    for i in 0..2 {
        let lb: Vec<Mat> = qp.layout.block_sizes(i).iter().map(|&k| Mat::identity(k, k)).collect();
        let mut c = FlopCounter::default();
        let v = compute_v(&qp.local(i), &lb, &mut c);
        let fact = StructuredFactorization {
            subs: vec![SubsystemFactor {
                scaling: Vector::zeros(0),
                phi: Vec::new(),
                lbold: lb,
                v,
                w: Vec::new(),
                y_diag: Mat::zeros(qp.layout.eq_rows(i), 0),
                y_off: None,
                l_diag: Mat::zeros(qp.layout.eq_rows(i), qp.layout.eq_rows(i)),
                l_off: None,
                regularized: false,
            }],
        };
        assert_eq!(fact.dense_v(0), dense_c_blocks(&qp, i, i));
    }
}

#[test]
fn w_with_doubled_identity_factor_is_half_the_coupling_block() {
    let qp = instance(2, 2, 2, 1, 3, 0.3);
    let lb: Vec<Mat> = qp.layout.block_sizes(0).iter().map(|&k| Mat::identity(k, k) * 2.0).collect();
    let mut c = FlopCounter::default();
    let w = compute_w(&qp.local(1), &lb, &mut c);
    let want = dense_c_blocks(&qp, 1, 0) / 2.0;
    let so = crate::model::offsets(lb.iter().map(|l| l.nrows()));
    let n = qp.layout.n[1];
    for (r, b) in w.iter().enumerate() {
        assert_eq!(*b, want.view((r * n, so[r]), b.shape()).into_owned());
    }
    // The block under the last stage is absent, and the dense coupling block is zero there.
    assert!(want.columns(so[3], so[4] - so[3]).iter().all(|v| *v == 0.0));
}

#[test]
fn v_and_w_reproduce_dense_schur_pieces() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
    let qp = instance(9, 3, 2, 2, 6, 0.4);
    let lam = random_positive(qp.num_ineq(), &mut rng);
    let s = random_positive(qp.num_ineq(), &mut rng);
    let mut c = FlopCounter::default();
    let fact = factorize(&qp, &lam, &s, REGULARIZATION, &mut c).unwrap();
    for i in 0..3 {
        let v = fact.dense_v(i);
        let cii = dense_c_blocks(&qp, i, i);
        let pinv = phi_inverse_block(&qp, &lam, &s, i);
        assert!(rel_diff(&(&v * v.transpose()), &(&cii * &pinv * cii.transpose())) < 1e-10);
        if i > 0 {
            let w = fact.dense_w(i);
            let cp = dense_c_blocks(&qp, i, i - 1);
            let pinv = phi_inverse_block(&qp, &lam, &s, i - 1);
            assert!(rel_diff(&(&w * w.transpose()), &(&cp * &pinv * cp.transpose())) < 1e-10);
        }
    }
}

#[test]
fn y_and_l_match_dense_schur_complement() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    for seed in 0..4 {
        let qp = instance(40 + seed, 6, 2, 2, 5, 0.4);
        let lam = random_positive(qp.num_ineq(), &mut rng);
        let s = random_positive(qp.num_ineq(), &mut rng);
        let mut c = FlopCounter::default();
        let fact = factorize(&qp, &lam, &s, REGULARIZATION, &mut c).unwrap();
        let d = qp.densify();
        let phi = dense_phi(&qp, &lam, &s);
        let want = &d.c * inverse(&phi).unwrap() * d.c.transpose();
        let y = fact.dense_y();
        assert!(rel_diff(&y, &want) < 1e-9);
        assert_eq!(y, y.transpose());
        let l = fact.dense_l();
        assert!(rel_diff(&(&l * l.transpose()), &y) < 1e-10);
    }
}

#[test]
fn leader_only_y_is_dense_schur_complement() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let qp = instance(1, 1, 3, 2, 7, 0.0);
    let lam = random_positive(qp.num_ineq(), &mut rng);
    let s = random_positive(qp.num_ineq(), &mut rng);
    let mut c = FlopCounter::default();
    let fact = factorize(&qp, &lam, &s, REGULARIZATION, &mut c).unwrap();
    let d = qp.densify();
    let want = &d.c * inverse(&dense_phi(&qp, &lam, &s)).unwrap() * d.c.transpose();
    assert!(rel_diff(&fact.dense_y(), &want) < 1e-10);
    assert!(fact.subs[0].l_off.is_none());
}

#[test]
fn decoupled_chain_has_zero_off_diagonal_blocks() {
    let qp = instance(4, 3, 2, 1, 4, 0.0);
    let ones = Vector::from_element(qp.num_ineq(), 1.0);
    let mut c = FlopCounter::default();
    let fact = factorize(&qp, &ones, &ones, REGULARIZATION, &mut c).unwrap();
    for f in &fact.subs[1..] {
        assert!(f.y_off.as_ref().unwrap().iter().all(|v| *v == 0.0));
        assert!(f.l_off.as_ref().unwrap().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn block_cholesky_scalar_chain_by_hand() {
    let mut f = 0;
    let (l11, _) = l_diag_block(&Mat::from_element(1, 1, 4.0), None, REGULARIZATION, &mut f).unwrap();
    let l21 = l_off_block(&Mat::from_element(1, 1, 2.0), &l11, &mut f);
    let (l22, _) = l_diag_block(&Mat::from_element(1, 1, 5.0), Some(&l21), REGULARIZATION, &mut f).unwrap();
    assert_eq!((l11[(0, 0)], l21[(0, 0)], l22[(0, 0)]), (2.0, 1.0, 2.0));
}

/// Dense solve of the full four-block Newton system.
fn dense_newton(qp: &StructuredQP, lam: &Vector, s: &Vector, rhs: &NewtonRhs) -> NewtonStep {
    let d = qp.densify();
    let (nz, ne, ni) = (qp.num_vars(), qp.num_eq(), qp.num_ineq());
    let dim = nz + ne + 2 * ni;
    let mut k = Mat::zeros(dim, dim);
    k.view_mut((0, 0), (nz, nz)).copy_from(&d.h);
    k.view_mut((0, nz), (nz, ne)).copy_from(&d.c.transpose());
    k.view_mut((0, nz + ne), (nz, ni)).copy_from(&d.g.transpose());
    k.view_mut((nz, 0), (ne, nz)).copy_from(&d.c);
    k.view_mut((nz + ne, 0), (ni, nz)).copy_from(&d.g);
    for j in 0..ni {
        k[(nz + ne + j, nz + ne + ni + j)] = 1.0;
        k[(nz + ne + ni + j, nz + ne + j)] = s[j];
        k[(nz + ne + ni + j, nz + ne + ni + j)] = lam[j];
    }
    let mut r = Vector::zeros(dim);
    r.rows_mut(0, nz).copy_from(&-&rhs.r_z);
    r.rows_mut(nz, ne).copy_from(&-&rhs.r_nu);
    r.rows_mut(nz + ne, ni).copy_from(&-&rhs.r_lambda);
    r.rows_mut(nz + ne + ni, ni).copy_from(&-&rhs.r_s);
    let x = k.lu().solve(&r).unwrap();
    NewtonStep {
        dz: x.rows(0, nz).into_owned(),
        dnu: x.rows(nz, ne).into_owned(),
        dlambda: x.rows(nz + ne, ni).into_owned(),
        ds: x.rows(nz + ne + ni, ni).into_owned(),
    }
}

/// Residual of the step in the Newton system, relative to the right-hand side.
fn random_rhs(qp: &StructuredQP, rng: &mut rand_chacha::ChaCha8Rng) -> NewtonRhs {
    let v = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    NewtonRhs {
        r_z: v(qp.num_vars(), rng),
        r_nu: v(qp.num_eq(), rng),
        r_lambda: v(qp.num_ineq(), rng),
        r_s: v(qp.num_ineq(), rng),
    }
}

#[test]
fn zero_residuals_give_zero_step() {
    let qp = instance(6, 3, 2, 2, 4, 0.3);
    let ones = Vector::from_element(qp.num_ineq(), 1.0);
    let mut c = FlopCounter::default();
    let fact = factorize(&qp, &ones, &ones, REGULARIZATION, &mut c).unwrap();
    let rhs = NewtonRhs {
        r_z: Vector::zeros(qp.num_vars()),
        r_nu: Vector::zeros(qp.num_eq()),
        r_lambda: Vector::zeros(qp.num_ineq()),
        r_s: Vector::zeros(qp.num_ineq()),
    };
    let st = solve_newton(&qp, &fact, &ones, &ones, &rhs);
    assert_eq!(st.dz.amax() + st.dnu.amax() + st.dlambda.amax() + st.ds.amax(), 0.0);
}

#[test]
fn structured_step_matches_dense_newton_solve() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    for seed in 0..6 {
        let qp = instance(100 + seed, 1 + seed as usize % 4, 2, 2, 3 + seed as usize, 0.4);
        let lam = random_positive(qp.num_ineq(), &mut rng);
        let s = random_positive(qp.num_ineq(), &mut rng);
        let rhs = random_rhs(&qp, &mut rng);
        let mut c = FlopCounter::default();
        let fact = factorize(&qp, &lam, &s, REGULARIZATION, &mut c).unwrap();
        let st = solve_newton(&qp, &fact, &lam, &s, &rhs);
        let dn = dense_newton(&qp, &lam, &s, &rhs);
        let scale = 1.0 + dn.dz.amax().max(dn.dnu.amax()).max(dn.dlambda.amax()).max(dn.ds.amax());
        for (a, b) in [(&st.dz, &dn.dz), (&st.dnu, &dn.dnu), (&st.dlambda, &dn.dlambda), (&st.ds, &dn.ds)] {
            assert!((a - b).amax() / scale < 1e-8);
        }
        assert!(newton_residual(&qp, &lam, &s, &rhs, &st) < 1e-10);
    }
}

#[test]
fn centering_examples() {
    assert_eq!(centering(0.5, 1.0), 0.125);
    assert_eq!(centering(0.0, 1.0), 0.0);
    assert_eq!(centering(1.0, 0.0), 0.0);
}

#[test]
fn step_lengths() {
    let v = Vector::from_vec(vec![1.0, 2.0]);
    assert_eq!(max_step(&v, &Vector::from_vec(vec![-4.0, 1.0])), 0.25);
    assert_eq!(max_step(&v, &Vector::from_vec(vec![1.0, 1.0])), 1.0);
    assert_eq!(boundary_step(&v, &Vector::from_vec(vec![-0.5, -0.5])), 2.0);
}

fn double_integrator(x_bound: f64, u_bound: f64) -> crate::model::ChainSystem {
    let (gx, gu, bound) = box_constraints(&[x_bound, x_bound], &[u_bound]);
    validate_chain(vec![SubsystemModel {
        index: 1,
        a: Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        b: Mat::from_row_slice(2, 1, &[0.5, 1.0]),
        a_cpl: None,
        b_cpl: None,
        gx,
        gu,
        bound,
        q: Mat::identity(2, 2),
        r: Mat::identity(1, 1),
    }])
    .unwrap()
}

#[test]
fn double_integrator_matches_active_set_oracle() {
    let chain = double_integrator(5.0, 1.0);
    let design = riccati_candidate(&chain).unwrap();
    let terminal = state_box_terminal(&chain).unwrap();
    let x0 = vec![Vector::from_vec(vec![3.0, 1.0])];
    let qp = build_structured_qp(&chain, &design, &terminal, &x0, 5).unwrap();
    let sol = mehrotra_solve(&qp, &IpmOptions::default()).unwrap();
    assert!(sol.converged());
    let oracle = solve_dense_qp(&qp.densify()).unwrap();
    assert!(!oracle.active.is_empty(), "instance should have active constraints");
    assert!((&sol.iterate.z - &oracle.z).amax() <= 1e-6 * (1.0 + oracle.z.amax()));
}

#[test]
fn inactive_constraints_reduce_to_equality_kkt() {
    let chain = double_integrator(1e6, 1e6);
    let design = riccati_candidate(&chain).unwrap();
    let terminal = state_box_terminal(&chain).unwrap();
    let x0 = vec![Vector::from_vec(vec![1.0, -0.5])];
    let qp = build_structured_qp(&chain, &design, &terminal, &x0, 6).unwrap();
    let sol = mehrotra_solve(&qp, &IpmOptions::default()).unwrap();
    assert!(sol.converged());
    let d = qp.densify();
    let (z, _) = solve_equality_qp(&d.h, &Vector::zeros(d.h.nrows()), &d.c, &d.c_rhs).unwrap();
    assert!((&sol.iterate.z - &z).amax() <= 1e-6 * (1.0 + z.amax()));
}

#[test]
fn iterates_stay_interior_and_mu_decreases() {
    for seed in 0..8 {
        let qp = instance(200 + seed, 1 + seed as usize % 3, 2, 1, 6, 0.3);
        let mut ok = true;
        let mut observer = |ev: &NewtonEvent| {
            ok &= ev.lambda.min() > 0.0 && ev.s.min() > 0.0;
        };
        let mut kkt = CentralizedKkt::new();
        let sol = mehrotra_solve_with(&qp, &IpmOptions::default(), &mut kkt, &mut observer).unwrap();
        assert!(ok);
        assert!(sol.converged(), "seed {seed}: error {}", sol.error);
        assert!(sol.iterate.lambda.min() > 0.0 && sol.iterate.s.min() > 0.0);
        for w in sol.mu_history.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!((qp.g_mul(&sol.iterate.z) - qp.b()).max() <= 1e-7);
        assert!((qp.c_mul(&sol.iterate.z) - qp.c()).amax() <= 1e-7);
    }
}

#[test]
fn every_newton_step_solves_its_system() {
    let qp = instance(300, 4, 2, 2, 8, 0.4);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut observer = |ev: &NewtonEvent| {
        worst = worst.max(newton_residual(&qp, ev.lambda, ev.s, ev.rhs, ev.step));
        count += 1;
    };
    let mut kkt = CentralizedKkt::new();
    let sol = mehrotra_solve_with(&qp, &IpmOptions::default(), &mut kkt, &mut observer).unwrap();
    assert!(sol.converged());
    assert_eq!(count, 1 + 2 * sol.iterations);
    assert!(worst < 1e-8, "worst residual {worst}");
}
