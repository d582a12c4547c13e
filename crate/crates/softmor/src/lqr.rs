//! Dense generalized algebraic Riccati solver, low-rank factorization of
//! its solution, feedback gain, and closed-loop simulation.
//!
//! The generalized Riccati equation
//!
//! ```text
//! E^T P A + A^T P E - E^T P B R^-1 B^T P E + C^T Q C = 0
//! ```
//!
//! is transformed to a standard equation in `X = E^T P E` through
//! `At = E^-1 A`, `Bt = E^-1 B`, solved on the stable invariant subspace of
//! the associated Hamiltonian matrix, and polished by a few Newton steps
//! (each a Lyapunov solve) until the direct residual is at roundoff level.
//! The Schur pass supplies the stabilizing seed the Newton iteration needs,
//! so no externally provided stabilizing gain is required.

use nalgebra::{DMatrix, DVector};

use crate::coupled::FirstOrderSystem;
use crate::error::{Error, Result};
use crate::numerics::{
    ensure_finite, eigenvalues, lyapunov, ordered_schur_stable_subspace, sym_eig, Factorized,
};
use crate::timeint::{MidpointStepper, TimeGrid, Trajectory};

/// LQR weighting matrices.
#[derive(Debug, Clone)]
pub struct CostWeights {
    /// Output weight, symmetric positive semi-definite (p x p).
    pub q: DMatrix<f64>,
    /// Input weight, symmetric positive definite (m x m).
    pub r: DMatrix<f64>,
}

impl CostWeights {
    pub fn identity(p: usize, m: usize) -> Self {
        Self { q: DMatrix::identity(p, p), r: DMatrix::identity(m, m) }
    }

    pub fn scaled(p: usize, m: usize, q_scale: f64, r_scale: f64) -> Self {
        Self {
            q: DMatrix::identity(p, p) * q_scale,
            r: DMatrix::identity(m, m) * r_scale,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure_finite(&self.q, "Q weight")?;
        ensure_finite(&self.r, "R weight")?;
        let q_asym = (&self.q - self.q.transpose()).norm();
        if q_asym > 1e-12 * self.q.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::Asymmetric { rel: q_asym / self.q.norm() });
        }
        let r_asym = (&self.r - self.r.transpose()).norm();
        if r_asym > 1e-12 * self.r.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::Asymmetric { rel: r_asym / self.r.norm() });
        }
        if nalgebra::Cholesky::new(self.r.clone()).is_none() {
            return Err(Error::NotPositiveDefinite { min_eig: f64::NAN });
        }
        Ok(())
    }
}

/// Stabilizing Riccati solution with diagnostics.
pub struct AreSolution {
    /// Symmetric positive semi-definite solution of the generalized ARE.
    pub p: DMatrix<f64>,
    /// Low-rank factor with Z Z^T approximately P.
    pub z: DMatrix<f64>,
    /// Feedback gain `K_f = -R^-1 B^T P E`.
    pub k_f: DMatrix<f64>,
    /// Relative residual of the generalized ARE.
    pub residual: f64,
    /// Largest closed-loop real part (strictly negative on success).
    pub stability_margin: f64,
    /// Newton polish steps taken after the Schur solve.
    pub newton_steps: usize,
}

const GARE_TARGET_RESIDUAL: f64 = 1e-9;
const GARE_MAX_NEWTON: usize = 4;

/// Solve the generalized ARE for the stabilizing solution.
pub fn solve_gare_dense(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    weights: &CostWeights,
) -> Result<AreSolution> {
    weights.validate()?;
    ensure_finite(e, "E")?;
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    ensure_finite(c, "C")?;
    let dim = e.nrows();

    let ef = Factorized::with_context(e.clone(), "E")?;
    let at = ef.solve_mat(a)?;
    let bt = ef.solve_mat(b)?;
    let r_chol = nalgebra::Cholesky::new(weights.r.clone())
        .ok_or(Error::NotPositiveDefinite { min_eig: f64::NAN })?;
    let r_inv = r_chol.inverse();
    let g = &bt * &r_inv * bt.transpose();
    let s = c.transpose() * &weights.q * c;
    let s_norm = s.norm().max(f64::MIN_POSITIVE);

    // Hamiltonian matrix of the standard-form equation in X = E^T P E.
    let mut h = DMatrix::zeros(2 * dim, 2 * dim);
    h.view_mut((0, 0), (dim, dim)).copy_from(&at);
    h.view_mut((0, dim), (dim, dim)).copy_from(&(-&g));
    h.view_mut((dim, 0), (dim, dim)).copy_from(&(-&s));
    h.view_mut((dim, dim), (dim, dim)).copy_from(&(-at.transpose()));

    let subspace = ordered_schur_stable_subspace(&h, dim)?;
    let u = subspace.basis;
    let u1 = u.view((0, 0), (dim, dim)).into_owned();
    let u2 = u.view((dim, 0), (dim, dim)).into_owned();
    let u1t = Factorized::with_context(u1.transpose(), "U1 of the stable subspace")?;
    let x = u1t.solve_mat(&u2.transpose())?.transpose();
    let mut x = (&x + x.transpose()) * 0.5;

    // Newton (Kleinman) polish: each step solves a Lyapunov equation with
    // the current closed-loop matrix and converges quadratically from the
    // Schur seed.
    let care_residual = |x: &DMatrix<f64>| -> f64 {
        (at.transpose() * x + x * &at - x * &g * x + &s).norm() / s_norm
    };
    let mut newton_steps = 0;
    let mut best = care_residual(&x);
    for _ in 0..GARE_MAX_NEWTON {
        if best <= GARE_TARGET_RESIDUAL {
            break;
        }
        let a_cl = &at - &g * &x;
        let w = &s + &x * &g * &x;
        let next = lyapunov(&a_cl, &w)?;
        let next_res = care_residual(&next);
        if !next_res.is_finite() || next_res >= best {
            break;
        }
        x = next;
        best = next_res;
        newton_steps += 1;
    }

    // Map back: P = E^-T X E^-1.
    let etf = Factorized::with_context(e.transpose(), "E^T")?;
    let half = etf.solve_mat(&x)?;
    let p = etf.solve_mat(&half.transpose())?.transpose();
    let p = (&p + p.transpose()) * 0.5;

    // Direct residual of the generalized equation, reusing E^T P.
    let etp = e.transpose() * &p;
    let epa = &etp * a;
    let etpb = &etp * b;
    let quad = &etpb * &r_inv * etpb.transpose();
    let residual = (&epa + epa.transpose() - quad + &s).norm() / s_norm;

    let k_f = -(&r_inv * etpb.transpose());

    // PSD check and low-rank factor share one eigendecomposition.
    let (evals, evecs) = sym_eig(&p)?;
    let lambda_max = evals[0].max(0.0);
    let lambda_min = evals[evals.len() - 1];
    if lambda_min < -1e-9 * lambda_max.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveDefinite { min_eig: lambda_min });
    }
    let z = low_rank_factor_from_eig(&evals, &evecs, 1e-12);

    // The closed-loop spectrum equals the stable Hamiltonian spectrum, so
    // the margin comes with the subspace. `closed_loop_margin` offers the
    // independent check on the assembled gain.
    let margin = subspace.max_real_part;
    if margin >= 0.0 {
        return Err(Error::UnstableClosedLoopSpectrum { margin });
    }

    Ok(AreSolution { p, z, k_f, residual, stability_margin: margin, newton_steps })
}

/// Convenience entry point for a built system.
pub fn solve_for_system(sys: &FirstOrderSystem, weights: &CostWeights) -> Result<AreSolution> {
    solve_gare_dense(&sys.e, &sys.a, &sys.b, &sys.c, weights)
}

/// Largest real part of the generalized closed-loop spectrum of
/// `(A + B K, E)`, computed directly from the assembled gain.
pub fn closed_loop_margin(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
) -> Result<f64> {
    let ef = Factorized::with_context(e.clone(), "E")?;
    let a_cl = ef.solve_mat(&(a + b * k))?;
    Ok(eigenvalues(&a_cl)?
        .into_iter()
        .map(|ev| ev.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Low-rank factor `Z` with `Z Z^T ~ P`, discarding the smallest eigenvalue
/// tail summing to at most `tol` times the trace.
pub fn low_rank_factor(p: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let (evals, evecs) = sym_eig(p)?;
    let lambda_max = evals[0].max(0.0);
    let lambda_min = evals[evals.len() - 1];
    if lambda_min < -1e-6 * lambda_max.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveDefinite { min_eig: lambda_min });
    }
    Ok(low_rank_factor_from_eig(&evals, &evecs, tol))
}

fn low_rank_factor_from_eig(
    evals: &DVector<f64>,
    evecs: &DMatrix<f64>,
    tol: f64,
) -> DMatrix<f64> {
    let clamped: Vec<f64> = evals.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let mut k = clamped.len();
    if total > 0.0 {
        let mut tail = 0.0;
        // Walk the spectrum upward from the smallest eigenvalue.
        while k > 1 {
            let candidate = tail + clamped[k - 1];
            if candidate > tol * total {
                break;
            }
            tail = candidate;
            k -= 1;
        }
    }
    let mut z = DMatrix::zeros(evecs.nrows(), k);
    for j in 0..k {
        let scale = clamped[j].sqrt();
        for i in 0..evecs.nrows() {
            z[(i, j)] = evecs[(i, j)] * scale;
        }
    }
    z
}

/// Closed-loop trajectory and recorded outputs.
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    /// Outputs y = C x, one column per time node.
    pub outputs: DMatrix<f64>,
}

/// Growth factor beyond which the closed loop counts as diverged.
const DIVERGENCE_GROWTH: f64 = 1e6;

/// Simulate `E x' = A x + B (u_bar + K_f (x - x_bar)) + F` with the
/// implicit midpoint rule, recording outputs.
pub fn closed_loop_simulate(
    sys: &FirstOrderSystem,
    k_f: &DMatrix<f64>,
    x_bar: &DVector<f64>,
    u_bar: &DVector<f64>,
    grid: TimeGrid,
) -> Result<ClosedLoopRun> {
    // Equilibrium precondition: the drift at (x_bar, u_bar) must vanish.
    let drift = (&sys.a * x_bar + &sys.b * u_bar + &sys.load).norm();
    let scale = (sys.a.norm() * x_bar.norm()).max(1.0);
    if drift > 1e-8 * scale {
        return Err(Error::EquilibriumResidual { residual: drift });
    }

    let a_cl = &sys.a + &sys.b * k_f;
    let constant = &sys.b * (u_bar - k_f * x_bar) + &sys.load;
    let stepper = MidpointStepper::new(&sys.e, &a_cl, grid.dt())?;

    let dim = sys.dim();
    let mut states = DMatrix::zeros(dim, grid.n_steps + 1);
    states.column_mut(0).copy_from(&sys.x0);
    let mut x = sys.x0.clone();
    let norm_ref = sys.x0.norm().max(x_bar.norm()).max(1.0);
    for k in 0..grid.n_steps {
        x = stepper.step(&x, &constant)?;
        let growth = x.norm() / norm_ref;
        if growth > DIVERGENCE_GROWTH {
            return Err(Error::UnstableClosedLoop { growth, step: k + 1 });
        }
        states.column_mut(k + 1).copy_from(&x);
    }
    let trajectory = Trajectory { grid, states };
    let outputs = &sys.c * &trajectory.states;
    Ok(ClosedLoopRun { trajectory, outputs })
}
