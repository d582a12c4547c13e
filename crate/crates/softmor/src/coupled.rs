//! One-way coupled solid/tissue model and its first-order descriptor form.
//!
//! The rigid hand contributes two translational DOFs. Clamped tissue nodes
//! follow the hand rigidly through the lifting map, which turns the
//! boundary columns of the unconstrained assembly into the coupling blocks
//! `M_es`, `K_es`. The solid feels no back-reaction: `M_se`, `K_se`, and
//! `K_ss` are exactly zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::Assembled;
use crate::numerics::{ensure_finite_vec, Factorized};
use crate::partition::StatePartition;

/// Rigid-hand parameters.
#[derive(Debug, Clone)]
pub struct SolidParams {
    /// Mass assigned to each translational DOF.
    pub mass: f64,
    /// Rayleigh damping coefficients (alpha on mass, beta on stiffness)
    /// applied to the elastic rows. Zero by default.
    pub damping: (f64, f64),
}

impl Default for SolidParams {
    fn default() -> Self {
        Self { mass: 100.0, damping: (0.0, 0.0) }
    }
}

/// Block matrices of the one-way coupled second-order model.
pub struct CoupledSecondOrder {
    pub m_ss: DMatrix<f64>,
    pub m_es: DMatrix<f64>,
    pub m_ee: DMatrix<f64>,
    pub k_es: DMatrix<f64>,
    pub k_ee: DMatrix<f64>,
    /// Damping blocks mirroring the stiffness coupling; zero when undamped.
    pub d_es: DMatrix<f64>,
    pub d_ee: DMatrix<f64>,
    pub b_us: DMatrix<f64>,
    /// Constant load on the solid DOFs.
    pub f_s: DVector<f64>,
    /// Constant load on the free elastic DOFs.
    pub f_e: DVector<f64>,
    pub partition: StatePartition,
    /// Free-DOF positions of every (u_x, u_y) pair per free node, for
    /// selecting observation outputs.
    pub lifting: DMatrix<f64>,
    /// Mesh-level bookkeeping retained for observation and export.
    pub assembled: Assembled,
}

impl CoupledSecondOrder {
    pub fn n_s(&self) -> usize {
        self.partition.n_s
    }

    pub fn n_e(&self) -> usize {
        self.partition.n_e
    }
}

/// First-order descriptor system `E x' = A x + B u + F` with outputs
/// `y = C x` and state `x = [q_s, v_s, q_e, v_e]`.
pub struct FirstOrderSystem {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Constant load vector entering the velocity rows.
    pub load: DVector<f64>,
    pub x0: DVector<f64>,
    pub partition: StatePartition,
    /// Node observed by the two output rows.
    pub observation_node: usize,
}

impl FirstOrderSystem {
    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    pub fn num_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// Assemble the one-way coupled blocks from the unconstrained FEM operators
/// and the rigid-hand parameters.
pub fn build_coupled(fem: Assembled, solid: &SolidParams) -> Result<CoupledSecondOrder> {
    if solid.mass <= 0.0 {
        return Err(Error::InvalidSolidMass { mass: solid.mass });
    }
    let dof = &fem.dof_map;
    if dof.num_dirichlet() == 0 {
        return Err(Error::EmptyDirichletSet);
    }
    let n_s = 2;
    let n_e = dof.num_free();
    let free = &dof.free_dofs;
    let bound = &dof.dirichlet_dofs;

    let m_ee = fem.m_full.select_rows(free.iter()).select_columns(free.iter());
    let k_ee = fem.k_full.select_rows(free.iter()).select_columns(free.iter());
    let m_eb = fem.m_full.select_rows(free.iter()).select_columns(bound.iter());
    let k_eb = fem.k_full.select_rows(free.iter()).select_columns(bound.iter());

    // Lifting map: every clamped node follows the solid displacement
    // rigidly, so L stacks a 2x2 identity per Dirichlet node.
    let n_b = bound.len();
    let mut lifting = DMatrix::zeros(n_b, n_s);
    for (row, &dofid) in bound.iter().enumerate() {
        lifting[(row, dofid % 2)] = 1.0;
    }

    let m_es = &m_eb * &lifting;
    let k_es = &k_eb * &lifting;
    let (alpha, beta) = solid.damping;
    let d_es = &m_es * alpha + &k_es * beta;
    let d_ee = &m_ee * alpha + &k_ee * beta;

    Ok(CoupledSecondOrder {
        m_ss: DMatrix::identity(n_s, n_s) * solid.mass,
        m_es,
        m_ee,
        k_es,
        k_ee,
        d_es,
        d_ee,
        b_us: DMatrix::identity(n_s, n_s),
        f_s: DVector::zeros(n_s),
        f_e: DVector::zeros(n_e),
        partition: StatePartition::new(n_s, n_e),
        lifting,
        assembled: fem,
    })
}

/// Free-vector positions of the (u_x, u_y) pair of a mesh node.
pub fn free_positions_of_node(c: &CoupledSecondOrder, node: usize) -> Result<(usize, usize)> {
    let dof = &c.assembled.dof_map;
    let px = dof.free_index[2 * node];
    let py = dof.free_index[2 * node + 1];
    match (px, py) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::ObservationOnDirichlet { node }),
    }
}

/// Convert the coupled blocks to first-order descriptor form, observing the
/// displacement pair of `observation_node`.
pub fn to_first_order(c: &CoupledSecondOrder, observation_node: usize) -> Result<FirstOrderSystem> {
    let p = c.partition;
    let n_s = p.n_s;
    let n_e = p.n_e;
    let dim = p.dim();
    let (ox, oy) = free_positions_of_node(c, observation_node)?;

    let mut e = DMatrix::zeros(dim, dim);
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DMatrix::zeros(dim, c.b_us.ncols());
    let mut load = DVector::zeros(dim);

    let qs = p.q_solid();
    let vs = p.v_solid();
    let qe = p.q_elastic();
    let ve = p.v_elastic();

    // Row block q_s' = v_s.
    e.view_mut((qs.start, qs.start), (n_s, n_s)).fill_with_identity();
    a.view_mut((qs.start, vs.start), (n_s, n_s)).fill_with_identity();
    // Row block M_ss v_s' = f_s + B_us u.
    e.view_mut((vs.start, vs.start), (n_s, n_s)).copy_from(&c.m_ss);
    b.view_mut((vs.start, 0), (n_s, c.b_us.ncols())).copy_from(&c.b_us);
    for i in 0..n_s {
        load[vs.start + i] = c.f_s[i];
    }
    // Row block q_e' = v_e.
    e.view_mut((qe.start, qe.start), (n_e, n_e)).fill_with_identity();
    a.view_mut((qe.start, ve.start), (n_e, n_e)).fill_with_identity();
    // Row block M_es v_s' + M_ee v_e' =
    //   -K_es q_s - D_es v_s - K_ee q_e - D_ee v_e + f_e.
    e.view_mut((ve.start, vs.start), (n_e, n_s)).copy_from(&c.m_es);
    e.view_mut((ve.start, ve.start), (n_e, n_e)).copy_from(&c.m_ee);
    a.view_mut((ve.start, qs.start), (n_e, n_s)).copy_from(&(-&c.k_es));
    a.view_mut((ve.start, qe.start), (n_e, n_e)).copy_from(&(-&c.k_ee));
    if c.d_es.amax() > 0.0 || c.d_ee.amax() > 0.0 {
        a.view_mut((ve.start, vs.start), (n_e, n_s)).copy_from(&(-&c.d_es));
        a.view_mut((ve.start, ve.start), (n_e, n_e)).copy_from(&(-&c.d_ee));
    }
    for i in 0..n_e {
        load[ve.start + i] = c.f_e[i];
    }

    let mut cmat = DMatrix::zeros(2, dim);
    cmat[(0, qe.start + ox)] = 1.0;
    cmat[(1, qe.start + oy)] = 1.0;

    Ok(FirstOrderSystem {
        e,
        a,
        b,
        c: cmat,
        load,
        x0: DVector::zeros(dim),
        partition: p,
        observation_node,
    })
}

/// Target equilibrium and feedforward input for a desired solid
/// displacement.
///
/// The tissue settles at its static response to the held boundary and any
/// constant elastic load; velocities vanish; the feedforward cancels the
/// solid load.
pub fn equilibrium_for_target(
    c: &CoupledSecondOrder,
    sys: &FirstOrderSystem,
    target_solid: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    ensure_finite_vec(target_solid, "target solid displacement")?;
    assert_eq!(target_solid.len(), c.n_s());
    let p = c.partition;

    let k_ee_fact = Factorized::with_context(c.k_ee.clone(), "K_ee")?;
    let rhs = &c.f_e - &c.k_es * target_solid;
    let q_e = k_ee_fact.solve_vec(&rhs)?;

    // B_us u = -f_s; the actuation map is square here, so solve directly.
    let b_fact = Factorized::with_context(c.b_us.clone(), "B_us")
        .map_err(|_| Error::InfeasibleFeedforward)?;
    let u_bar = b_fact.solve_vec(&(-&c.f_s))?;

    let mut x_bar = DVector::zeros(p.dim());
    for i in 0..p.n_s {
        x_bar[p.q_solid().start + i] = target_solid[i];
    }
    for i in 0..p.n_e {
        x_bar[p.q_elastic().start + i] = q_e[i];
    }

    // Equilibrium residual A x + B u + F = 0.
    let residual = (&sys.a * &x_bar + &sys.b * &u_bar + &sys.load).norm();
    let scale = sys.a.norm() * x_bar.norm().max(1.0);
    if residual > 1e-9 * scale.max(1.0) {
        return Err(Error::EquilibriumResidual { residual });
    }
    Ok((x_bar, u_bar))
}

/// Smooth minimum-jerk interpolation s(tau) from 0 to 1 with vanishing
/// first and second derivatives at both ends.
pub fn min_jerk(tau: f64) -> (f64, f64, f64) {
    let t = tau.clamp(0.0, 1.0);
    let s = t.powi(3) * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    let dds = 60.0 * t * (1.0 - 3.0 * t + 2.0 * t * t);
    (s, ds, dds)
}

/// Inverse-dynamics input steering the solid along a minimum-jerk path from
/// rest to `target_solid` over `[0, t_final]`.
///
/// One-way coupling means the solid follows this exactly regardless of the
/// tissue response.
pub fn min_jerk_input(
    c: &CoupledSecondOrder,
    target_solid: DVector<f64>,
    t_final: f64,
) -> impl Fn(f64) -> DVector<f64> {
    let mass = c.m_ss.clone();
    let f_s = c.f_s.clone();
    move |t: f64| {
        let (_, _, dds) = min_jerk(t / t_final);
        let accel = &target_solid * (dds / (t_final * t_final));
        &mass * accel - &f_s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, build_mesh, MaterialParams};
    use crate::numerics::factorize_and_solve;

    fn small_system() -> (CoupledSecondOrder, FirstOrderSystem) {
        let mesh = build_mesh(2, 4).unwrap();
        let mat = MaterialParams::new(10.0, 8.0, 1.0).unwrap();
        let asm = assemble(&mesh, &mat).unwrap();
        let obs = asm.mesh.nearest_free_node(0.5, 0.0);
        let coupled = build_coupled(asm, &SolidParams::default()).unwrap();
        let sys = to_first_order(&coupled, obs).unwrap();
        (coupled, sys)
    }

    #[test]
    fn lifting_moves_clamped_nodes_rigidly() {
        let (c, _) = small_system();
        let qs = DVector::from_vec(vec![1.0, 0.0]);
        let lifted = &c.lifting * &qs;
        let n_b = c.assembled.dof_map.num_dirichlet();
        for pair in 0..n_b / 2 {
            assert_eq!(lifted[2 * pair], 1.0);
            assert_eq!(lifted[2 * pair + 1], 0.0);
        }
    }

    #[test]
    fn static_coupling_matches_constrained_solve() {
        // q_e* = -K_ee^-1 K_es q_s must equal the FEM solution with the
        // boundary held at L q_s and zero load.
        let (c, _) = small_system();
        let qs = DVector::from_vec(vec![0.7, -0.3]);
        let rhs = -(&c.k_es * &qs);
        let qe = factorize_and_solve(&c.k_ee, &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))
            .unwrap();

        // Oracle: raw constrained solve on the unconstrained assembly.
        let asm = &c.assembled;
        let free = &asm.dof_map.free_dofs;
        let bound = &asm.dof_map.dirichlet_dofs;
        let k_ff = asm.k_full.select_rows(free.iter()).select_columns(free.iter());
        let k_fb = asm.k_full.select_rows(free.iter()).select_columns(bound.iter());
        let ub = &c.lifting * &qs;
        let rhs_oracle = -(&k_fb * &ub);
        let qe_oracle = factorize_and_solve(
            &k_ff,
            &DMatrix::from_column_slice(rhs_oracle.len(), 1, rhs_oracle.as_slice()),
        )
        .unwrap();
        assert!((&qe - &qe_oracle).norm() <= 1e-10 * qe_oracle.norm().max(1.0));
    }

    #[test]
    fn desk_scale_dimensions() {
        let mesh = build_mesh(10, 20).unwrap();
        let mat = MaterialParams::new(50.0, 50.0, 1.0).unwrap();
        let asm = assemble(&mesh, &mat).unwrap();
        let obs = asm.mesh.nearest_free_node(0.5, 0.0);
        let c = build_coupled(asm, &SolidParams::default()).unwrap();
        assert_eq!(c.n_e(), 438);
        assert_eq!(c.partition.n(), 440);
        let sys = to_first_order(&c, obs).unwrap();
        assert_eq!(sys.dim(), 880);
    }

    #[test]
    fn first_order_block_pattern() {
        let (c, sys) = small_system();
        let p = sys.partition;
        let n_s = p.n_s;
        let n_e = p.n_e;
        // E: identity / M_ss / identity / [M_es M_ee] rows; all other blocks
        // exactly zero.
        for i in p.q_solid() {
            for j in 0..sys.dim() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(sys.e[(i, j)], expect);
            }
        }
        for (bi, i) in p.v_solid().enumerate() {
            for j in 0..sys.dim() {
                let expect = if j >= p.v_solid().start && j < p.v_solid().end {
                    c.m_ss[(bi, j - p.v_solid().start)]
                } else {
                    0.0
                };
                assert_eq!(sys.e[(i, j)], expect);
            }
        }
        for (bi, i) in p.v_elastic().enumerate() {
            for j in p.q_solid().chain(p.q_elastic()) {
                assert_eq!(sys.e[(i, j)], 0.0, "E[{i},{j}]");
            }
            for (bj, j) in p.v_solid().enumerate() {
                assert_eq!(sys.e[(i, j)], c.m_es[(bi, bj)]);
            }
        }
        // A: the solid acceleration row is exactly zero.
        for i in p.v_solid() {
            for j in 0..sys.dim() {
                assert_eq!(sys.a[(i, j)], 0.0);
            }
        }
        // A: elastic acceleration row couples to q_s via -K_es only.
        for (bi, i) in p.v_elastic().enumerate() {
            for (bj, j) in p.q_solid().enumerate() {
                assert_eq!(sys.a[(i, j)], -c.k_es[(bi, bj)]);
            }
            for j in p.v_elastic() {
                assert_eq!(sys.a[(i, j)], 0.0, "undamped A[{i},{j}]");
            }
        }
        // B feeds only the solid velocity rows.
        for i in 0..sys.dim() {
            for j in 0..n_s {
                let expect = if i >= p.v_solid().start && i < p.v_solid().end {
                    c.b_us[(i - p.v_solid().start, j)]
                } else {
                    0.0
                };
                assert_eq!(sys.b[(i, j)], expect);
            }
        }
        let _ = n_e;
    }

    #[test]
    fn e_matrix_is_invertible() {
        let (_, sys) = small_system();
        let f = Factorized::with_context(sys.e.clone(), "E").unwrap();
        let id = DMatrix::identity(sys.dim(), sys.dim());
        let inv = f.solve_mat(&id).unwrap();
        assert!(((&sys.e * inv) - id).norm() < 1e-9 * sys.dim() as f64);
    }

    #[test]
    fn observation_node_must_be_free() {
        let (c, _) = small_system();
        let clamped = c.assembled.mesh.dirichlet_nodes[0];
        assert!(matches!(
            to_first_order(&c, clamped),
            Err(Error::ObservationOnDirichlet { .. })
        ));
    }

    #[test]
    fn equilibrium_zero_target_zero_load() {
        let (c, sys) = small_system();
        let (x_bar, u_bar) = equilibrium_for_target(&c, &sys, &DVector::zeros(2)).unwrap();
        assert_eq!(x_bar.norm(), 0.0);
        assert_eq!(u_bar.norm(), 0.0);
    }

    #[test]
    fn equilibrium_nonzero_target() {
        let (c, sys) = small_system();
        let target = DVector::from_vec(vec![5.0, 5.0]);
        let (x_bar, u_bar) = equilibrium_for_target(&c, &sys, &target).unwrap();
        assert_eq!(u_bar.norm(), 0.0);
        let resid = (&sys.a * &x_bar + &sys.b * &u_bar + &sys.load).norm();
        assert!(resid <= 1e-9 * sys.a.norm() * x_bar.norm());
        // Velocities are zero.
        let p = sys.partition;
        for i in p.v_solid().chain(p.v_elastic()) {
            assert_eq!(x_bar[i], 0.0);
        }
    }

    #[test]
    fn equilibrium_with_gravity_load() {
        let (mut c, _) = small_system();
        let grav = crate::fem::body_force(&c.assembled.mesh, [0.0, -0.5]).unwrap();
        let free = c.assembled.dof_map.free_dofs.clone();
        c.f_e = DVector::from_fn(free.len(), |i, _| grav[free[i]]);
        let obs = c.assembled.mesh.nearest_free_node(0.5, 0.0);
        let sys = to_first_order(&c, obs).unwrap();
        let (x_bar, _) = equilibrium_for_target(&c, &sys, &DVector::zeros(2)).unwrap();
        // q_e = K_ee^-1 f_e.
        let qe_expect = factorize_and_solve(
            &c.k_ee,
            &DMatrix::from_column_slice(c.n_e(), 1, c.f_e.as_slice()),
        )
        .unwrap();
        let p = sys.partition;
        for (bi, i) in p.q_elastic().enumerate() {
            assert!((x_bar[i] - qe_expect[(bi, 0)]).abs() < 1e-9 * qe_expect.norm().max(1.0));
        }
    }

    #[test]
    fn coupling_is_one_way() {
        use crate::timeint::{implicit_midpoint, TimeGrid};
        let (_, sys) = small_system();
        let p = sys.partition;
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let zero_u = |_: f64| DVector::zeros(2);
        let zero_f = |_: f64| DVector::zeros(sys.dim());

        // Elastic motion never reaches the solid.
        let mut x0 = DVector::zeros(sys.dim());
        for (i, row) in p.q_elastic().enumerate() {
            x0[row] = ((i as f64) * 0.31).sin();
        }
        let traj = implicit_midpoint(&sys.e, &sys.a, &sys.b, zero_u, zero_f, &x0, grid).unwrap();
        for k in 0..=50 {
            let state = traj.state(k);
            for row in p.q_solid().chain(p.v_solid()) {
                assert_eq!(state[row], 0.0, "solid moved at step {k}");
            }
        }

        // Solid motion does excite the tissue.
        let mut x0 = DVector::zeros(sys.dim());
        x0[p.v_solid().start] = 1.0;
        let traj = implicit_midpoint(&sys.e, &sys.a, &sys.b, zero_u, zero_f, &x0, grid).unwrap();
        let last = traj.last();
        let elastic_norm: f64 =
            p.q_elastic().chain(p.v_elastic()).map(|row| last[row] * last[row]).sum::<f64>().sqrt();
        assert!(elastic_norm > 1e-6, "tissue did not respond to solid motion");
    }

    #[test]
    fn decoupled_blocks_evolve_independently() {
        use crate::timeint::{implicit_midpoint, TimeGrid};
        // With the coupling blocks zeroed, the elastic block must evolve
        // exactly as the stand-alone elastic system.
        let (mut c, _) = small_system();
        c.m_es.fill(0.0);
        c.k_es.fill(0.0);
        let obs = c.assembled.mesh.nearest_free_node(0.5, 0.0);
        let sys = to_first_order(&c, obs).unwrap();
        let p = sys.partition;
        let n_e = p.n_e;

        let mut x0 = DVector::zeros(sys.dim());
        for (i, row) in p.q_elastic().enumerate() {
            x0[row] = ((i as f64) * 0.47).cos();
        }
        // Give the solid a motion; it must not leak into the tissue.
        x0[p.q_solid().start] = 2.0;
        x0[p.v_solid().start] = 1.0;
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let traj = implicit_midpoint(
            &sys.e,
            &sys.a,
            &sys.b,
            |_| DVector::zeros(2),
            |_| DVector::zeros(sys.dim()),
            &x0,
            grid,
        )
        .unwrap();

        let mut e_e = DMatrix::zeros(2 * n_e, 2 * n_e);
        e_e.view_mut((0, 0), (n_e, n_e)).fill_with_identity();
        e_e.view_mut((n_e, n_e), (n_e, n_e)).copy_from(&c.m_ee);
        let mut a_e = DMatrix::zeros(2 * n_e, 2 * n_e);
        a_e.view_mut((0, n_e), (n_e, n_e)).fill_with_identity();
        a_e.view_mut((n_e, 0), (n_e, n_e)).copy_from(&(-&c.k_ee));
        let mut x0_e = DVector::zeros(2 * n_e);
        for (i, row) in p.q_elastic().enumerate() {
            x0_e[i] = x0[row];
        }
        let ref_traj = implicit_midpoint(
            &e_e,
            &a_e,
            &DMatrix::zeros(2 * n_e, 1),
            |_| DVector::zeros(1),
            |_| DVector::zeros(2 * n_e),
            &x0_e,
            grid,
        )
        .unwrap();
        for k in 0..=40 {
            let full = traj.state(k);
            let standalone = ref_traj.state(k);
            for (i, row) in p.q_elastic().enumerate() {
                assert!((full[row] - standalone[i]).abs() < 1e-11, "q_e differs at step {k}");
            }
            for (i, row) in p.v_elastic().enumerate() {
                assert!(
                    (full[row] - standalone[n_e + i]).abs() < 1e-11,
                    "v_e differs at step {k}"
                );
            }
        }
    }

    #[test]
    fn min_jerk_endpoints() {
        let (s0, ds0, dds0) = min_jerk(0.0);
        let (s1, ds1, dds1) = min_jerk(1.0);
        assert_eq!((s0, ds0, dds0), (0.0, 0.0, 0.0));
        assert!((s1 - 1.0).abs() < 1e-14);
        assert!(ds1.abs() < 1e-12 && dds1.abs() < 1e-12);
    }

    #[test]
    fn rayleigh_damping_enters_velocity_rows() {
        let mesh = build_mesh(2, 4).unwrap();
        let mat = MaterialParams::new(10.0, 8.0, 1.0).unwrap();
        let asm = assemble(&mesh, &mat).unwrap();
        let obs = asm.mesh.nearest_free_node(0.5, 0.0);
        let solid = SolidParams { mass: 100.0, damping: (0.1, 0.01) };
        let c = build_coupled(asm, &solid).unwrap();
        let sys = to_first_order(&c, obs).unwrap();
        let p = sys.partition;
        let i = p.v_elastic().start;
        let j = p.v_elastic().start;
        let expect = -(0.1 * c.m_ee[(0, 0)] + 0.01 * c.k_ee[(0, 0)]);
        assert!((sys.a[(i, j)] - expect).abs() < 1e-14);
    }
}
