//! Reduced-basis treatment of the Riccati solution: five basis
//! constructions drawn from the dense solution `P` (or its blocks), the
//! reduced Riccati solve on the projected system, reconstruction
//! `P_hat = V P_N V^T`, and the reduced feedback gain.

use nalgebra::DMatrix;

use crate::coupled::FirstOrderSystem;
use crate::error::{Error, Result};
use crate::lqr::{solve_gare_dense, AreSolution, CostWeights};
use crate::numerics::{spd_sqrt_and_inv_sqrt, truncated_svd};
use crate::partition::StatePartition;

/// The five basis constructions for the reduced Riccati equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RbAreMethod {
    PodOfP,
    WeightedPod,
    PodFixedSolidP,
    ComponentwisePodP,
    PodDecomposedP,
}

impl RbAreMethod {
    pub const ALL: [RbAreMethod; 5] = [
        RbAreMethod::PodOfP,
        RbAreMethod::WeightedPod,
        RbAreMethod::PodFixedSolidP,
        RbAreMethod::ComponentwisePodP,
        RbAreMethod::PodDecomposedP,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            RbAreMethod::PodOfP => "pod-of-P",
            RbAreMethod::WeightedPod => "weighted-pod",
            RbAreMethod::PodFixedSolidP => "pod-fixed-solid-P",
            RbAreMethod::ComponentwisePodP => "cw-pod-P",
            RbAreMethod::PodDecomposedP => "pod-decomposed-P",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == tag)
    }

    pub fn is_fixed_solid(&self) -> bool {
        !matches!(self, RbAreMethod::PodOfP | RbAreMethod::WeightedPod)
    }

    /// Build the basis with a total of `n` columns, splitting evenly where
    /// the method reduces blocks separately.
    pub fn basis_with_size(
        &self,
        p_mat: &DMatrix<f64>,
        e: &DMatrix<f64>,
        partition: StatePartition,
        n: usize,
    ) -> Result<RbAreBasis> {
        let ns2 = 2 * partition.n_s;
        match self {
            RbAreMethod::PodOfP => pod_of_p(p_mat, partition, n),
            RbAreMethod::WeightedPod => weighted_pod_of_p(p_mat, e, partition, n),
            RbAreMethod::PodFixedSolidP => {
                if n <= ns2 {
                    return Err(Error::RankOutOfRange { k: n, max: usize::MAX });
                }
                pod_fixed_solid_p(p_mat, partition, n - ns2)
            }
            RbAreMethod::ComponentwisePodP => {
                if n <= ns2 + 1 {
                    return Err(Error::RankOutOfRange { k: n, max: usize::MAX });
                }
                let rest = n - ns2;
                componentwise_pod_p(p_mat, partition, rest.div_ceil(2), rest / 2)
            }
            RbAreMethod::PodDecomposedP => {
                if n <= ns2 || (n - ns2) % 2 != 0 {
                    return Err(Error::OddSymplecticDimension { n });
                }
                pod_decomposed_p(p_mat, partition, (n - ns2) / 2)
            }
        }
    }
}

/// Reduced basis for the Riccati solution with its block layout.
#[derive(Debug, Clone)]
pub struct RbAreBasis {
    pub v: DMatrix<f64>,
    pub method: RbAreMethod,
    pub partition: StatePartition,
    /// Sizes of the column groups after the solid identity (empty for the
    /// dense methods).
    pub elastic_groups: Vec<usize>,
}

impl RbAreBasis {
    pub fn n(&self) -> usize {
        self.v.ncols()
    }

    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.n();
        (self.v.transpose() * &self.v - DMatrix::identity(n, n)).norm()
    }

    /// `V^T W V - I` for the symmetrized descriptor weight; the natural
    /// orthogonality measure for the weighted method.
    pub fn weighted_orthonormality_residual(&self, e: &DMatrix<f64>) -> f64 {
        let w = (e + e.transpose()) * 0.5;
        let n = self.n();
        (self.v.transpose() * w * &self.v - DMatrix::identity(n, n)).norm()
    }
}

fn solid_identity_block(partition: StatePartition, elastic_cols: usize) -> DMatrix<f64> {
    let ns2 = 2 * partition.n_s;
    let mut v = DMatrix::zeros(partition.dim(), ns2 + elastic_cols);
    for i in 0..ns2 {
        v[(i, i)] = 1.0;
    }
    v
}

/// POD of the full Riccati solution.
pub fn pod_of_p(p_mat: &DMatrix<f64>, partition: StatePartition, k: usize) -> Result<RbAreBasis> {
    let svd = truncated_svd(p_mat, k)?;
    Ok(RbAreBasis {
        v: svd.u,
        method: RbAreMethod::PodOfP,
        partition,
        elastic_groups: Vec::new(),
    })
}

/// Weighted POD with `W = (E + E^T)/2`; the result is W-orthonormal.
///
/// W is required to be symmetric positive definite; whether it is for a
/// given coupled model depends on the mass coupling and is checked at
/// runtime.
pub fn weighted_pod_of_p(
    p_mat: &DMatrix<f64>,
    e: &DMatrix<f64>,
    partition: StatePartition,
    k: usize,
) -> Result<RbAreBasis> {
    let w = (e + e.transpose()) * 0.5;
    let (w_half, w_inv_half) = spd_sqrt_and_inv_sqrt(&w)?;
    let weighted = &w_half * p_mat;
    let svd = truncated_svd(&weighted, k)?;
    Ok(RbAreBasis {
        v: w_inv_half * svd.u,
        method: RbAreMethod::WeightedPod,
        partition,
        elastic_groups: Vec::new(),
    })
}

/// POD of the elastic rows `[P_es, P_ee]`, solid DOFs kept unreduced.
pub fn pod_fixed_solid_p(
    p_mat: &DMatrix<f64>,
    partition: StatePartition,
    k: usize,
) -> Result<RbAreBasis> {
    let rows: Vec<usize> = partition.elastic().collect();
    let elastic_rows = p_mat.select_rows(rows.iter());
    let ve = truncated_svd(&elastic_rows, k)?.u;
    let ns2 = 2 * partition.n_s;
    let mut v = solid_identity_block(partition, k);
    for (bi, &row) in rows.iter().enumerate() {
        for c in 0..k {
            v[(row, ns2 + c)] = ve[(bi, c)];
        }
    }
    Ok(RbAreBasis {
        v,
        method: RbAreMethod::PodFixedSolidP,
        partition,
        elastic_groups: vec![k],
    })
}

/// Columns of P used by the blockwise constructions: solid displacement,
/// elastic displacement, elastic velocity.
fn displacement_velocity_columns(
    p_mat: &DMatrix<f64>,
    partition: StatePartition,
    row_range: std::ops::Range<usize>,
) -> DMatrix<f64> {
    let rows: Vec<usize> = row_range.collect();
    let mut cols: Vec<usize> = partition.q_solid().collect();
    cols.extend(partition.q_elastic());
    cols.extend(partition.v_elastic());
    p_mat.select_rows(rows.iter()).select_columns(cols.iter())
}

/// Separate PODs of the elastic displacement and velocity row spaces of P.
pub fn componentwise_pod_p(
    p_mat: &DMatrix<f64>,
    partition: StatePartition,
    k_q: usize,
    k_v: usize,
) -> Result<RbAreBasis> {
    let vq = truncated_svd(&displacement_velocity_columns(p_mat, partition, partition.q_elastic()), k_q)?.u;
    let vv = truncated_svd(&displacement_velocity_columns(p_mat, partition, partition.v_elastic()), k_v)?.u;
    let ns2 = 2 * partition.n_s;
    let mut v = solid_identity_block(partition, k_q + k_v);
    for (bi, row) in partition.q_elastic().enumerate() {
        for c in 0..k_q {
            v[(row, ns2 + c)] = vq[(bi, c)];
        }
    }
    for (bi, row) in partition.v_elastic().enumerate() {
        for c in 0..k_v {
            v[(row, ns2 + k_q + c)] = vv[(bi, c)];
        }
    }
    Ok(RbAreBasis {
        v,
        method: RbAreMethod::ComponentwisePodP,
        partition,
        elastic_groups: vec![k_q, k_v],
    })
}

/// One POD of all four elastic sub-blocks of P, reused for both the
/// displacement and the velocity part.
pub fn pod_decomposed_p(
    p_mat: &DMatrix<f64>,
    partition: StatePartition,
    k: usize,
) -> Result<RbAreBasis> {
    let qe: Vec<usize> = partition.q_elastic().collect();
    let ve: Vec<usize> = partition.v_elastic().collect();
    let mut elastic_cols: Vec<usize> = qe.clone();
    elastic_cols.extend(ve.iter().copied());
    let top = p_mat.select_rows(qe.iter()).select_columns(elastic_cols.iter());
    let bottom = p_mat.select_rows(ve.iter()).select_columns(elastic_cols.iter());
    let n_e = partition.n_e;
    let mut stacked = DMatrix::zeros(n_e, 4 * n_e);
    stacked.view_mut((0, 0), (n_e, 2 * n_e)).copy_from(&top);
    stacked.view_mut((0, 2 * n_e), (n_e, 2 * n_e)).copy_from(&bottom);
    let v1 = truncated_svd(&stacked, k)?.u;
    let ns2 = 2 * partition.n_s;
    let mut v = solid_identity_block(partition, 2 * k);
    for (bi, row) in partition.q_elastic().enumerate() {
        for c in 0..k {
            v[(row, ns2 + c)] = v1[(bi, c)];
        }
    }
    for (bi, row) in partition.v_elastic().enumerate() {
        for c in 0..k {
            v[(row, ns2 + k + c)] = v1[(bi, c)];
        }
    }
    Ok(RbAreBasis {
        v,
        method: RbAreMethod::PodDecomposedP,
        partition,
        elastic_groups: vec![k, k],
    })
}

/// Reduced Riccati solve with reconstruction and reduced gain.
pub struct ReducedAre {
    pub e_n: DMatrix<f64>,
    pub a_n: DMatrix<f64>,
    pub b_n: DMatrix<f64>,
    pub c_n: DMatrix<f64>,
    /// Solution of the reduced equation.
    pub p_n: DMatrix<f64>,
    /// Reconstruction `V P_N V^T`, exactly symmetric.
    pub p_hat: DMatrix<f64>,
    /// Reduced gain `-R^-1 B^T P_hat E` on the full state.
    pub k_f_hat: DMatrix<f64>,
    /// Relative residual of the reduced equation.
    pub reduced_residual: f64,
    /// Dense solve diagnostics of the reduced problem.
    pub reduced_solution: AreSolution,
}

/// Project the system onto the basis and solve the reduced Riccati
/// equation with the dense solver.
pub fn solve_reduced_are(
    sys: &FirstOrderSystem,
    weights: &CostWeights,
    basis: &RbAreBasis,
) -> Result<ReducedAre> {
    let v = &basis.v;
    let e_n = v.transpose() * &sys.e * v;
    let a_n = v.transpose() * &sys.a * v;
    let b_n = v.transpose() * &sys.b;
    let c_n = &sys.c * v;
    let reduced = solve_gare_dense(&e_n, &a_n, &b_n, &c_n, weights)?;
    let p_n = reduced.p.clone();
    let p_hat = v * &p_n * v.transpose();
    let p_hat = (&p_hat + p_hat.transpose()) * 0.5;
    let r_inv = nalgebra::Cholesky::new(weights.r.clone())
        .ok_or(Error::NotPositiveDefinite { min_eig: f64::NAN })?
        .inverse();
    let k_f_hat = -(r_inv * sys.b.transpose() * &p_hat * &sys.e);
    Ok(ReducedAre {
        e_n,
        a_n,
        b_n,
        c_n,
        p_n,
        p_hat,
        k_f_hat,
        reduced_residual: reduced.residual,
        reduced_solution: reduced,
    })
}

/// Relative Frobenius error of the reconstructed Riccati solution.
pub fn rb_are_error(p: &DMatrix<f64>, p_hat: &DMatrix<f64>) -> f64 {
    let denom = p.norm();
    if denom == 0.0 {
        if p_hat.norm() == 0.0 {
            return 0.0;
        }
        return f64::INFINITY;
    }
    (p - p_hat).norm() / denom
}
