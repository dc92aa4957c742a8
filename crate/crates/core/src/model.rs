//! Leader-follower chain plants.
//!
//! Subsystem 1 evolves on its own; subsystem `i ≥ 2` is driven additively by
//! the state and input of subsystem `i − 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Relative threshold for the positive-definiteness test on `Q` and `R`.
pub const PD_REL_TOL: f64 = 1e-10;

/// Local data of one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemModel {
    /// 1-based position in the chain; assigned by [`validate_chain`].
    pub index: usize,
    pub a: Mat,
    pub b: Mat,
    /// Influence of the predecessor state. Absent for the leader.
    pub a_cpl: Option<Mat>,
    /// Influence of the predecessor input. Absent for the leader.
    pub b_cpl: Option<Mat>,
    pub gx: Mat,
    pub gu: Mat,
    pub bound: Vector,
    pub q: Mat,
    pub r: Mat,
}

impl SubsystemModel {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Number of mixed constraint rows.
    pub fn q_rows(&self) -> usize {
        self.gx.nrows()
    }

    /// Closed-loop local matrix `A + B K`.
    pub fn closed_loop(&self, k: &Mat) -> Mat {
        &self.a + &self.b * k
    }

    /// Closed-loop coupling `A_cpl + B_cpl K_prev`; zero-sized for the leader.
    pub fn closed_loop_coupling(&self, k_prev: &Mat) -> Option<Mat> {
        match (&self.a_cpl, &self.b_cpl) {
            (Some(a), Some(b)) => Some(a + b * k_prev),
            _ => None,
        }
    }

    /// `½ (xᵀQx + uᵀRu)`.
    pub fn stage_cost(&self, x: &Vector, u: &Vector) -> f64 {
        0.5 * (x.dot(&(&self.q * x)) + u.dot(&(&self.r * u)))
    }
}

/// A validated chain. Construct through [`validate_chain`] or [`random_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSystem {
    subsystems: Vec<SubsystemModel>,
}

impl ChainSystem {
    pub fn subsystems(&self) -> &[SubsystemModel] {
        &self.subsystems
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn get(&self, i: usize) -> &SubsystemModel {
        &self.subsystems[i]
    }

    /// `(n_i, m_i, q_i)` per subsystem.
    pub fn dims(&self) -> Vec<(usize, usize, usize)> {
        self.subsystems
            .iter()
            .map(|s| (s.n(), s.m(), s.q_rows()))
            .collect()
    }

    pub fn total_states(&self) -> usize {
        self.subsystems.iter().map(|s| s.n()).sum()
    }

    pub fn total_inputs(&self) -> usize {
        self.subsystems.iter().map(|s| s.m()).sum()
    }

    /// Leading sub-chain with the first `len` subsystems.
    pub fn truncated(&self, len: usize) -> ChainSystem {
        ChainSystem {
            subsystems: self.subsystems[..len].to_vec(),
        }
    }

    pub fn into_subsystems(self) -> Vec<SubsystemModel> {
        self.subsystems
    }
}

fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

fn check_shape(errs: &mut Vec<String>, i: usize, name: &str, m: &Mat, rows: usize, cols: usize) -> bool {
    if m.nrows() != rows || m.ncols() != cols {
        errs.push(format!(
            "subsystem {i}: {name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        ));
        false
    } else {
        true
    }
}

fn check_spd(errs: &mut Vec<String>, i: usize, name: &str, m: &Mat) {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * m.amax().max(1.0) {
        errs.push(format!("subsystem {i}: {name} not symmetric"));
    } else if !linalg::is_positive_definite(m, PD_REL_TOL) {
        errs.push(format!("subsystem {i}: {name} not positive definite"));
    }
}

/// Rows of `[Gx Gu]` must be nonzero and pairwise non-duplicated
/// (no two rows pointing in the same direction).
fn check_constraint_rows(errs: &mut Vec<String>, i: usize, gx: &Mat, gu: &Mat) {
    let rows = gx.nrows();
    let mut normed: Vec<Vector> = Vec::with_capacity(rows);
    for k in 0..rows {
        let mut v = Vector::zeros(gx.ncols() + gu.ncols());
        for c in 0..gx.ncols() {
            v[c] = gx[(k, c)];
        }
        for c in 0..gu.ncols() {
            v[gx.ncols() + c] = gu[(k, c)];
        }
        let nrm = v.norm();
        if nrm <= 1e-12 {
            errs.push(format!("subsystem {i}: [Gx Gu] row-rank deficient (row {k} is zero)"));
            return;
        }
        normed.push(v / nrm);
    }
    for a in 0..rows {
        for b in (a + 1)..rows {
            if (&normed[a] - &normed[b]).amax() <= 1e-12 {
                errs.push(format!(
                    "subsystem {i}: [Gx Gu] row-rank deficient (rows {a} and {b} are duplicates)"
                ));
                return;
            }
        }
    }
}

/// Checks every structural invariant and reports all violations at once.
pub fn validate_chain(raw: Vec<SubsystemModel>) -> Result<ChainSystem> {
    let mut errs = Vec::new();
    if raw.is_empty() {
        errs.push(String::from("chain must contain at least one subsystem"));
    }
    let mut subsystems = raw;
    for idx in 0..subsystems.len() {
        let i = idx + 1;
        let prev_dims = if idx > 0 {
            Some((subsystems[idx - 1].n(), subsystems[idx - 1].m()))
        } else {
            None
        };
        let s = &mut subsystems[idx];
        s.index = i;
        let n = s.a.nrows();
        let m = s.b.ncols();
        let q = s.gx.nrows();
        if n == 0 || m == 0 {
            errs.push(format!("subsystem {i}: state and input dimensions must be positive"));
            continue;
        }
        let mut shapes_ok = check_shape(&mut errs, i, "A", &s.a, n, n);
        shapes_ok &= check_shape(&mut errs, i, "B", &s.b, n, m);
        shapes_ok &= check_shape(&mut errs, i, "Gx", &s.gx, q, n);
        shapes_ok &= check_shape(&mut errs, i, "Gu", &s.gu, q, m);
        shapes_ok &= check_shape(&mut errs, i, "Q", &s.q, n, n);
        shapes_ok &= check_shape(&mut errs, i, "R", &s.r, m, m);
        if s.bound.len() != q {
            errs.push(format!("subsystem {i}: b has length {}, expected {q}", s.bound.len()));
            shapes_ok = false;
        }
        if q == 0 {
            errs.push(format!("subsystem {i}: at least one constraint row is required"));
        }
        match prev_dims {
            None => {
                if s.a_cpl.is_some() || s.b_cpl.is_some() {
                    errs.push(String::from("subsystem 1: leader must not carry coupling blocks"));
                }
            }
            Some((np, mp)) => match (&s.a_cpl, &s.b_cpl) {
                (Some(ac), Some(bc)) => {
                    shapes_ok &= check_shape(&mut errs, i, "A_cpl", ac, n, np);
                    shapes_ok &= check_shape(&mut errs, i, "B_cpl", bc, n, mp);
                }
                _ => {
                    errs.push(format!("subsystem {i}: coupling blocks A_cpl and B_cpl are required"));
                    shapes_ok = false;
                }
            },
        }
        let mats: [&Mat; 6] = [&s.a, &s.b, &s.gx, &s.gu, &s.q, &s.r];
        let finite = mats.iter().all(|m| all_finite(m))
            && s.bound.iter().all(|v| v.is_finite())
            && s.a_cpl.as_ref().map_or(true, all_finite)
            && s.b_cpl.as_ref().map_or(true, all_finite);
        if !finite {
            errs.push(format!("subsystem {i}: non-finite entries"));
            continue;
        }
        if !shapes_ok {
            continue;
        }
        check_spd(&mut errs, i, "Q", &s.q);
        check_spd(&mut errs, i, "R", &s.r);
        if s.bound.iter().any(|&v| v <= 0.0) {
            errs.push(format!("subsystem {i}: b has a nonpositive entry"));
        }
        if q > 0 {
            check_constraint_rows(&mut errs, i, &s.gx, &s.gu);
        }
    }
    if errs.is_empty() {
        Ok(ChainSystem { subsystems })
    } else {
        Err(Error::Validation(errs))
    }
}

fn check_vectors(chain: &ChainSystem, xs: &[Vector], us: &[Vector]) -> Result<()> {
    if xs.len() != chain.len() || us.len() != chain.len() {
        return Err(Error::Dimension(format!(
            "expected {} state and input vectors, got {} and {}",
            chain.len(),
            xs.len(),
            us.len()
        )));
    }
    for (k, s) in chain.subsystems().iter().enumerate() {
        if xs[k].len() != s.n() || us[k].len() != s.m() {
            return Err(Error::Dimension(format!(
                "subsystem {}: state/input lengths {}/{} != {}/{}",
                k + 1,
                xs[k].len(),
                us[k].len(),
                s.n(),
                s.m()
            )));
        }
    }
    Ok(())
}

/// One step of the true chain dynamics.
pub fn step_plant(chain: &ChainSystem, xs: &[Vector], us: &[Vector]) -> Result<Vec<Vector>> {
    check_vectors(chain, xs, us)?;
    let mut next = Vec::with_capacity(chain.len());
    for (k, s) in chain.subsystems().iter().enumerate() {
        let mut x = &s.a * &xs[k] + &s.b * &us[k];
        if let (Some(ac), Some(bc)) = (&s.a_cpl, &s.b_cpl) {
            x += ac * &xs[k - 1] + bc * &us[k - 1];
        }
        next.push(x);
    }
    Ok(next)
}

/// Offsets of each subsystem's states (or inputs) in the stacked vector.
pub fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut acc = 0;
    for s in sizes {
        out.push(acc);
        acc += s;
    }
    out.push(acc);
    out
}

/// Block lower-bidiagonal global `(A, B)`.
pub fn assemble_global(chain: &ChainSystem) -> (Mat, Mat) {
    let xo = offsets(chain.subsystems().iter().map(|s| s.n()));
    let uo = offsets(chain.subsystems().iter().map(|s| s.m()));
    let n = xo[chain.len()];
    let m = uo[chain.len()];
    let mut a = Mat::zeros(n, n);
    let mut b = Mat::zeros(n, m);
    for (k, s) in chain.subsystems().iter().enumerate() {
        a.view_mut((xo[k], xo[k]), s.a.shape()).copy_from(&s.a);
        b.view_mut((xo[k], uo[k]), s.b.shape()).copy_from(&s.b);
        if let (Some(ac), Some(bc)) = (&s.a_cpl, &s.b_cpl) {
            a.view_mut((xo[k], xo[k - 1]), ac.shape()).copy_from(ac);
            b.view_mut((xo[k], uo[k - 1]), bc.shape()).copy_from(bc);
        }
    }
    (a, b)
}

/// Closed loop `A + B K_d` for block-diagonal `K_d = diag(K^i)`.
pub fn assemble_closed_loop(chain: &ChainSystem, gains: &[Mat]) -> Mat {
    let (a, b) = assemble_global(chain);
    let refs: Vec<&Mat> = gains.iter().collect();
    a + b * linalg::block_diag(&refs)
}

/// Block-diagonal `Q_d`, `R_d`.
pub fn assemble_weights(chain: &ChainSystem) -> (Mat, Mat) {
    let qs: Vec<&Mat> = chain.subsystems().iter().map(|s| &s.q).collect();
    let rs: Vec<&Mat> = chain.subsystems().iter().map(|s| &s.r).collect();
    (linalg::block_diag(&qs), linalg::block_diag(&rs))
}

pub fn stack(vs: &[Vector]) -> Vector {
    let len = vs.iter().map(|v| v.len()).sum();
    let mut out = Vector::zeros(len);
    let mut o = 0;
    for v in vs {
        out.rows_mut(o, v.len()).copy_from(v);
        o += v.len();
    }
    out
}

pub fn split(v: &Vector, sizes: impl Iterator<Item = usize>) -> Vec<Vector> {
    let mut out = Vec::new();
    let mut o = 0;
    for s in sizes {
        out.push(v.rows(o, s).into_owned());
        o += s;
    }
    out
}

/// Parameters of the synthetic test-plant generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomChainParams {
    /// `(n_i, m_i)` per subsystem; its length is the chain length.
    pub dims: Vec<(usize, usize)>,
    /// Spectral radius of every generated `A^i`.
    pub margin: f64,
    /// Entry scale of the coupling blocks (0 disables coupling).
    pub coupling: f64,
}

impl RandomChainParams {
    pub fn uniform(len: usize, n: usize, m: usize, margin: f64, coupling: f64) -> Self {
        RandomChainParams {
            dims: alloc::vec![(n, m); len],
            margin,
            coupling,
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let l = random_matrix(rng, n, n, 0.5);
    &l * l.transpose() + Mat::identity(n, n) * rng.random_range(0.5..1.5)
}

/// Box constraints `|x_j| ≤ xb_j`, `|u_j| ≤ ub_j` as `[Gx Gu] ≤ b`.
pub fn box_constraints(x_bounds: &[f64], u_bounds: &[f64]) -> (Mat, Mat, Vector) {
    let n = x_bounds.len();
    let m = u_bounds.len();
    let q = 2 * (n + m);
    let mut gx = Mat::zeros(q, n);
    let mut gu = Mat::zeros(q, m);
    let mut b = Vector::zeros(q);
    for j in 0..n {
        gx[(2 * j, j)] = 1.0;
        gx[(2 * j + 1, j)] = -1.0;
        b[2 * j] = x_bounds[j];
        b[2 * j + 1] = x_bounds[j];
    }
    for j in 0..m {
        let r = 2 * n + 2 * j;
        gu[(r, j)] = 1.0;
        gu[(r + 1, j)] = -1.0;
        b[r] = u_bounds[j];
        b[r + 1] = u_bounds[j];
    }
    (gx, gu, b)
}

/// Deterministic synthetic chain: Schur `A^i` at the requested spectral
/// radius, box constraints, random positive definite weights.
pub fn random_chain(seed: u64, params: &RandomChainParams) -> Result<ChainSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(params.dims.len());
    for (k, &(n, m)) in params.dims.iter().enumerate() {
        let mut a = random_matrix(&mut rng, n, n, 1.0);
        let rho = linalg::spectral_radius(&a);
        if rho > 1e-12 {
            a *= params.margin / rho;
        }
        let b = random_matrix(&mut rng, n, m, 1.0);
        let (a_cpl, b_cpl) = if k == 0 {
            (None, None)
        } else {
            let (np, mp) = params.dims[k - 1];
            (
                Some(random_matrix(&mut rng, n, np, params.coupling)),
                Some(random_matrix(&mut rng, n, mp, params.coupling)),
            )
        };
        let xb: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
        let ub: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..1.5)).collect();
        let (gx, gu, bound) = box_constraints(&xb, &ub);
        let q = random_spd(&mut rng, n);
        let r = random_spd(&mut rng, m);
        raw.push(SubsystemModel {
            index: k + 1,
            a,
            b,
            a_cpl,
            b_cpl,
            gx,
            gu,
            bound,
            q,
            r,
        });
    }
    validate_chain(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn leader(a: f64, b: f64) -> SubsystemModel {
        let (gx, gu, bound) = box_constraints(&[1.0], &[1.0]);
        SubsystemModel {
            index: 1,
            a: scalar(a),
            b: scalar(b),
            a_cpl: None,
            b_cpl: None,
            gx,
            gu,
            bound,
            q: scalar(1.0),
            r: scalar(1.0),
        }
    }

    fn follower(a: f64, b: f64, ac: f64, bc: f64) -> SubsystemModel {
        SubsystemModel {
            a_cpl: Some(scalar(ac)),
            b_cpl: Some(scalar(bc)),
            ..leader(a, b)
        }
    }

    #[test]
    fn minimal_leader_chain_is_valid() {
        let c = validate_chain(vec![leader(1.0, 1.0)]).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.get(0).index, 1);
    }

    #[test]
    fn zero_q_is_rejected() {
        let mut s = leader(1.0, 1.0);
        s.q = scalar(0.0);
        match validate_chain(vec![s]) {
            Err(Error::Validation(v)) => {
                assert!(v.iter().any(|m| m.contains("Q not positive definite")), "{v:?}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coupling_dimension_mismatch_is_reported() {
        let (gx, gu, bound) = box_constraints(&[1.0, 1.0], &[1.0]);
        let two = SubsystemModel {
            index: 0,
            a: Mat::identity(2, 2),
            b: Mat::zeros(2, 1),
            a_cpl: None,
            b_cpl: None,
            gx: gx.clone(),
            gu: gu.clone(),
            bound: bound.clone(),
            q: Mat::identity(2, 2),
            r: scalar(1.0),
        };
        let mut second = two.clone();
        second.a_cpl = Some(Mat::zeros(2, 3));
        second.b_cpl = Some(Mat::zeros(2, 1));
        match validate_chain(vec![two, second]) {
            Err(Error::Validation(v)) => assert!(v.iter().any(|m| m.contains("A_cpl is 2x3"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_violation_is_listed() {
        let mut s = leader(1.0, 1.0);
        s.q = scalar(-1.0);
        s.bound[0] = 0.0;
        s.gx[(1, 0)] = 1.0; // duplicates row 0
        match validate_chain(vec![s]) {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn leader_with_coupling_is_rejected() {
        let s = follower(1.0, 1.0, 0.0, 0.0);
        assert!(validate_chain(vec![s]).is_err());
        assert!(validate_chain(vec![leader(1.0, 1.0), leader(1.0, 1.0)]).is_err());
    }

    #[test]
    fn step_plant_examples() {
        let c = validate_chain(vec![leader(1.0, 0.0)]).unwrap();
        let x = step_plant(&c, &[Vector::from_element(1, 3.0)], &[Vector::from_element(1, 5.0)]).unwrap();
        assert_eq!(x[0][0], 3.0);

        let c = validate_chain(vec![leader(0.5, 0.0)]).unwrap();
        let x = step_plant(&c, &[Vector::from_element(1, 2.0)], &[Vector::zeros(1)]).unwrap();
        assert_eq!(x[0][0], 1.0);

        let c = validate_chain(vec![leader(0.5, 1.0), follower(0.0, 0.0, 1.0, 0.0)]).unwrap();
        let xs = [Vector::from_element(1, 3.0), Vector::from_element(1, 7.0)];
        let us = [Vector::from_element(1, 1.0), Vector::from_element(1, 1.0)];
        let x = step_plant(&c, &xs, &us).unwrap();
        assert_eq!(x[1][0], 3.0);
        assert!(step_plant(&c, &xs[..1], &us).is_err());
    }

    #[test]
    fn assemble_global_places_blocks() {
        let c = validate_chain(vec![leader(0.5, 1.0), follower(0.5, 1.0, 0.1, 0.0)]).unwrap();
        let (a, _) = assemble_global(&c);
        assert_eq!(a, Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.1, 0.5]));
        let c1 = c.truncated(1);
        assert_eq!(assemble_global(&c1).0, scalar(0.5));
    }

    #[test]
    fn closed_loop_spectral_radius_is_max_of_diagonal_blocks() {
        let c = random_chain(3, &RandomChainParams::uniform(3, 2, 1, 0.8, 0.5)).unwrap();
        let gains: Vec<Mat> = (0..3).map(|k| Mat::from_fn(1, 2, |_, j| 0.1 * (k + j) as f64)).collect();
        let acl = assemble_closed_loop(&c, &gains);
        let blockwise = c
            .subsystems()
            .iter()
            .zip(&gains)
            .map(|(s, k)| linalg::spectral_radius(&s.closed_loop(k)))
            .fold(0.0, f64::max);
        assert!((linalg::spectral_radius(&acl) - blockwise).abs() < 1e-9);
    }

    #[test]
    fn random_chain_properties() {
        let p = RandomChainParams::uniform(4, 3, 2, 0.9, 0.0);
        let a = random_chain(0, &p).unwrap();
        let b = random_chain(0, &p).unwrap();
        assert_eq!(a, b);
        for s in a.subsystems() {
            assert!(linalg::spectral_radius(&s.a) <= 0.9 + 1e-9);
            if let Some(ac) = &s.a_cpl {
                assert_eq!(ac.amax(), 0.0);
                assert_eq!(s.b_cpl.as_ref().unwrap().amax(), 0.0);
            }
        }
        assert_ne!(a, random_chain(1, &p).unwrap());
    }
}
