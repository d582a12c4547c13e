//! Snapshot-based reduction of the forward problem: global and blockwise
//! POD, their fixed-solid variants, and the symplectic (complex-SVD)
//! constructions, plus Galerkin projection and the reconstruction error.
//!
//! Every basis is assembled directly in the original state ordering
//! `[q_s, v_s, q_e, v_e]`; the block layout (identity solid columns,
//! symplectic column pairing) is carried alongside so structure checks need
//! no external index arithmetic.

use nalgebra::{Complex, DMatrix, DVector};

use crate::coupled::FirstOrderSystem;
use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, truncated_svd, Factorized, RANK_TOL};
use crate::partition::StatePartition;
use crate::timeint::{implicit_midpoint, TimeGrid, Trajectory};

/// Snapshot matrix with the partition metadata needed for block splits.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    /// One state per column (2n x n_sn).
    pub data: DMatrix<f64>,
    pub partition: StatePartition,
}

impl SnapshotSet {
    pub fn new(data: DMatrix<f64>, partition: StatePartition) -> Result<Self> {
        ensure_finite(&data, "snapshot matrix")?;
        assert_eq!(data.nrows(), partition.dim());
        Ok(Self { data, partition })
    }

    /// Snapshots from a trajectory, dropping the initial state so the
    /// column count equals the step count.
    pub fn from_trajectory(traj: &Trajectory, partition: StatePartition) -> Result<Self> {
        let cols = traj.grid.n_steps;
        let data = traj.states.columns(1, cols).into_owned();
        Self::new(data, partition)
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.ncols()
    }

    fn rows(&self, idx: &[usize]) -> DMatrix<f64> {
        self.data.select_rows(idx.iter())
    }

    pub fn displacement_rows(&self) -> DMatrix<f64> {
        self.rows(&self.partition.q_rows())
    }

    pub fn velocity_rows(&self) -> DMatrix<f64> {
        self.rows(&self.partition.v_rows())
    }

    pub fn elastic_rows(&self) -> DMatrix<f64> {
        let r: Vec<usize> = self.partition.elastic().collect();
        self.rows(&r)
    }

    pub fn elastic_displacement_rows(&self) -> DMatrix<f64> {
        let r: Vec<usize> = self.partition.q_elastic().collect();
        self.rows(&r)
    }

    pub fn elastic_velocity_rows(&self) -> DMatrix<f64> {
        let r: Vec<usize> = self.partition.v_elastic().collect();
        self.rows(&r)
    }

    /// Numerical rank of the snapshot matrix under the global tolerance.
    pub fn numerical_rank(&self) -> Result<usize> {
        let sv = crate::numerics::singular_values(&self.data)?;
        Ok(numerical_rank(&sv))
    }
}

pub fn numerical_rank(sigma: &DVector<f64>) -> usize {
    if sigma.is_empty() {
        return 0;
    }
    let cut = RANK_TOL * sigma[0];
    sigma.iter().filter(|&&s| s > cut).count()
}

/// The six forward reduction methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForwardMethod {
    GlobalPod,
    ComponentwisePod,
    PodFixedSolid,
    ComponentwisePodFixedSolid,
    Gpsd,
    PsdFixedSolid,
}

impl ForwardMethod {
    pub const ALL: [ForwardMethod; 6] = [
        ForwardMethod::GlobalPod,
        ForwardMethod::ComponentwisePod,
        ForwardMethod::PodFixedSolid,
        ForwardMethod::ComponentwisePodFixedSolid,
        ForwardMethod::Gpsd,
        ForwardMethod::PsdFixedSolid,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            ForwardMethod::GlobalPod => "global-pod",
            ForwardMethod::ComponentwisePod => "cw-pod",
            ForwardMethod::PodFixedSolid => "pod-fixed-solid",
            ForwardMethod::ComponentwisePodFixedSolid => "cw-pod-fixed-solid",
            ForwardMethod::Gpsd => "gpsd",
            ForwardMethod::PsdFixedSolid => "psd-fixed-solid",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == tag)
    }

    pub fn is_symplectic(&self) -> bool {
        matches!(self, ForwardMethod::Gpsd | ForwardMethod::PsdFixedSolid)
    }

    pub fn is_fixed_solid(&self) -> bool {
        matches!(
            self,
            ForwardMethod::PodFixedSolid
                | ForwardMethod::ComponentwisePodFixedSolid
                | ForwardMethod::PsdFixedSolid
        )
    }

    /// Build the basis with a total size of `n_v` columns (split across
    /// blocks as evenly as the method permits).
    pub fn basis_with_size(&self, x: &SnapshotSet, n_v: usize) -> Result<ReducedBasis> {
        let ns2 = 2 * x.partition.n_s;
        match self {
            ForwardMethod::GlobalPod => global_pod(x, n_v),
            ForwardMethod::ComponentwisePod => {
                if n_v < 2 {
                    return Err(Error::RankOutOfRange { k: n_v, max: usize::MAX });
                }
                componentwise_pod(x, n_v.div_ceil(2), n_v / 2)
            }
            ForwardMethod::PodFixedSolid => {
                if n_v <= ns2 {
                    return Err(Error::RankOutOfRange { k: n_v, max: usize::MAX });
                }
                pod_fixed_solid(x, n_v - ns2)
            }
            ForwardMethod::ComponentwisePodFixedSolid => {
                if n_v <= ns2 + 1 {
                    return Err(Error::RankOutOfRange { k: n_v, max: usize::MAX });
                }
                let rest = n_v - ns2;
                componentwise_pod_fixed_solid(x, rest.div_ceil(2), rest / 2)
            }
            ForwardMethod::Gpsd => {
                if n_v % 2 != 0 || n_v == 0 {
                    return Err(Error::OddSymplecticDimension { n: n_v });
                }
                gpsd(x, n_v / 2)
            }
            ForwardMethod::PsdFixedSolid => {
                if n_v <= ns2 || (n_v - ns2) % 2 != 0 {
                    return Err(Error::OddSymplecticDimension { n: n_v });
                }
                psd_fixed_solid(x, (n_v - ns2) / 2)
            }
        }
    }

    /// Build the basis sized by the POD energy rule applied per block.
    pub fn basis_from_energy(&self, x: &SnapshotSet, fraction: f64) -> Result<ReducedBasis> {
        match self {
            ForwardMethod::GlobalPod => {
                let sv = crate::numerics::singular_values(&x.data)?;
                global_pod(x, pod_energy_rank(&sv, fraction)?)
            }
            ForwardMethod::ComponentwisePod => {
                let kq = energy_rank_of(&x.displacement_rows(), fraction)?;
                let kv = energy_rank_of(&x.velocity_rows(), fraction)?;
                componentwise_pod(x, kq, kv)
            }
            ForwardMethod::PodFixedSolid => {
                let ke = energy_rank_of(&x.elastic_rows(), fraction)?;
                pod_fixed_solid(x, ke)
            }
            ForwardMethod::ComponentwisePodFixedSolid => {
                let keq = energy_rank_of(&x.elastic_displacement_rows(), fraction)?;
                let kev = energy_rank_of(&x.elastic_velocity_rows(), fraction)?;
                componentwise_pod_fixed_solid(x, keq, kev)
            }
            ForwardMethod::Gpsd => {
                let z = complex_snapshots(&x.displacement_rows(), &x.velocity_rows());
                let sv = complex_singular_values(&z);
                gpsd(x, pod_energy_rank(&sv, fraction)?)
            }
            ForwardMethod::PsdFixedSolid => {
                let z = complex_snapshots(
                    &x.elastic_displacement_rows(),
                    &x.elastic_velocity_rows(),
                );
                let sv = complex_singular_values(&z);
                psd_fixed_solid(x, pod_energy_rank(&sv, fraction)?)
            }
        }
    }
}

fn energy_rank_of(block: &DMatrix<f64>, fraction: f64) -> Result<usize> {
    let sv = crate::numerics::singular_values(block)?;
    pod_energy_rank(&sv, fraction)
}

/// Smallest k whose leading singular values carry at least `fraction` of
/// the total squared energy.
pub fn pod_energy_rank(sigma: &DVector<f64>, fraction: f64) -> Result<usize> {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must be in (0, 1]");
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::AllZeroSingularValues);
    }
    let mut acc = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc >= fraction * total {
            return Ok(i + 1);
        }
    }
    Ok(sigma.len())
}

/// Column-group layout of a reduced basis.
#[derive(Debug, Clone)]
pub enum BasisLayout {
    /// No block structure (global POD).
    Dense,
    /// Columns split into displacement-supported and velocity-supported
    /// groups.
    QvBlocks { q_cols: usize, v_cols: usize },
    /// Leading identity columns spanning the solid DOFs, then elastic
    /// column groups (one or two).
    FixedSolid { elastic_groups: Vec<usize> },
    /// Symplectic pairing: column `i` pairs with column `half + i`.
    Symplectic { half: usize },
    /// Symplectic pairing where the first `n_s` columns of each half are
    /// the solid identity.
    SymplecticFixedSolid { half: usize },
}

/// Reduced basis with method tag and block layout.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    pub v: DMatrix<f64>,
    pub method: ForwardMethod,
    pub partition: StatePartition,
    pub layout: BasisLayout,
}

impl ReducedBasis {
    pub fn n_v(&self) -> usize {
        self.v.ncols()
    }

    /// `V^T V - I` in the Frobenius norm.
    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.n_v();
        (self.v.transpose() * &self.v - DMatrix::identity(n, n)).norm()
    }

    /// `V^T J V - J_N` in the Frobenius norm, with `J` the canonical
    /// Poisson matrix in (all-q, all-v) ordering. Only meaningful for
    /// symplectic layouts.
    pub fn symplecticity_residual(&self) -> Option<f64> {
        let half = match self.layout {
            BasisLayout::Symplectic { half } => half,
            BasisLayout::SymplecticFixedSolid { half } => half,
            _ => return None,
        };
        let jv = apply_poisson(&self.v, self.partition);
        let vjv = self.v.transpose() * jv;
        let j_n = poisson_matrix(half);
        Some((vjv - j_n).norm())
    }

    /// Indices of basis columns that carry the unreduced solid identity.
    pub fn solid_identity_cols(&self) -> Option<Vec<usize>> {
        let n_s = self.partition.n_s;
        match &self.layout {
            BasisLayout::FixedSolid { .. } => Some((0..2 * n_s).collect()),
            BasisLayout::SymplecticFixedSolid { half } => {
                let mut cols: Vec<usize> = (0..n_s).collect();
                cols.extend(*half..half + n_s);
                Some(cols)
            }
            _ => None,
        }
    }
}

/// Canonical Poisson matrix of size 2 * half.
pub fn poisson_matrix(half: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * half, 2 * half);
    for i in 0..half {
        j[(i, half + i)] = 1.0;
        j[(half + i, i)] = -1.0;
    }
    j
}

/// Multiply by the canonical Poisson matrix of the full state (all-q,
/// all-v ordering) without forming it: J x = [x_v, -x_q].
fn apply_poisson(m: &DMatrix<f64>, p: StatePartition) -> DMatrix<f64> {
    let q_rows = p.q_rows();
    let v_rows = p.v_rows();
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (qi, &q_row) in q_rows.iter().enumerate() {
        let v_row = v_rows[qi];
        for c in 0..m.ncols() {
            out[(q_row, c)] = m[(v_row, c)];
            out[(v_row, c)] = -m[(q_row, c)];
        }
    }
    out
}

fn scatter_rows(
    out: &mut DMatrix<f64>,
    rows: &[usize],
    col_offset: usize,
    block: &DMatrix<f64>,
) {
    assert_eq!(rows.len(), block.nrows());
    for (bi, &row) in rows.iter().enumerate() {
        for c in 0..block.ncols() {
            out[(row, col_offset + c)] = block[(bi, c)];
        }
    }
}

/// Global POD of the full snapshot matrix.
pub fn global_pod(x: &SnapshotSet, k: usize) -> Result<ReducedBasis> {
    let svd = truncated_svd(&x.data, k)?;
    Ok(ReducedBasis {
        v: svd.u,
        method: ForwardMethod::GlobalPod,
        partition: x.partition,
        layout: BasisLayout::Dense,
    })
}

/// Separate POD of the displacement and velocity snapshot blocks.
pub fn componentwise_pod(x: &SnapshotSet, k_q: usize, k_v: usize) -> Result<ReducedBasis> {
    let p = x.partition;
    let vq = truncated_svd(&x.displacement_rows(), k_q)?.u;
    let vv = truncated_svd(&x.velocity_rows(), k_v)?.u;
    let mut v = DMatrix::zeros(p.dim(), k_q + k_v);
    scatter_rows(&mut v, &p.q_rows(), 0, &vq);
    scatter_rows(&mut v, &p.v_rows(), k_q, &vv);
    Ok(ReducedBasis {
        v,
        method: ForwardMethod::ComponentwisePod,
        partition: p,
        layout: BasisLayout::QvBlocks { q_cols: k_q, v_cols: k_v },
    })
}

/// POD of the elastic block only, solid DOFs kept unreduced.
pub fn pod_fixed_solid(x: &SnapshotSet, k_e: usize) -> Result<ReducedBasis> {
    let p = x.partition;
    let ve = truncated_svd(&x.elastic_rows(), k_e)?.u;
    let ns2 = 2 * p.n_s;
    let mut v = DMatrix::zeros(p.dim(), ns2 + k_e);
    let solid_rows: Vec<usize> = p.solid().collect();
    scatter_rows(&mut v, &solid_rows, 0, &DMatrix::identity(ns2, ns2));
    let elastic_rows: Vec<usize> = p.elastic().collect();
    scatter_rows(&mut v, &elastic_rows, ns2, &ve);
    Ok(ReducedBasis {
        v,
        method: ForwardMethod::PodFixedSolid,
        partition: p,
        layout: BasisLayout::FixedSolid { elastic_groups: vec![k_e] },
    })
}

/// Componentwise POD of the elastic displacement and velocity blocks,
/// solid DOFs kept unreduced.
pub fn componentwise_pod_fixed_solid(
    x: &SnapshotSet,
    k_eq: usize,
    k_ev: usize,
) -> Result<ReducedBasis> {
    let p = x.partition;
    let veq = truncated_svd(&x.elastic_displacement_rows(), k_eq)?.u;
    let vev = truncated_svd(&x.elastic_velocity_rows(), k_ev)?.u;
    let ns2 = 2 * p.n_s;
    let mut v = DMatrix::zeros(p.dim(), ns2 + k_eq + k_ev);
    let solid_rows: Vec<usize> = p.solid().collect();
    scatter_rows(&mut v, &solid_rows, 0, &DMatrix::identity(ns2, ns2));
    let eq_rows: Vec<usize> = p.q_elastic().collect();
    scatter_rows(&mut v, &eq_rows, ns2, &veq);
    let ev_rows: Vec<usize> = p.v_elastic().collect();
    scatter_rows(&mut v, &ev_rows, ns2 + k_eq, &vev);
    Ok(ReducedBasis {
        v,
        method: ForwardMethod::ComponentwisePodFixedSolid,
        partition: p,
        layout: BasisLayout::FixedSolid { elastic_groups: vec![k_eq, k_ev] },
    })
}

fn complex_snapshots(xq: &DMatrix<f64>, xv: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    DMatrix::from_fn(xq.nrows(), xq.ncols(), |i, j| Complex::new(xq[(i, j)], xv[(i, j)]))
}

fn complex_singular_values(z: &DMatrix<Complex<f64>>) -> DVector<f64> {
    let mut sv: Vec<f64> = z.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    DVector::from_vec(sv)
}

/// Leading left singular vectors of the complexified snapshots, split into
/// real and imaginary parts.
fn complex_pod(z: &DMatrix<Complex<f64>>, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let max_rank = z.nrows().min(z.ncols());
    if k == 0 || k > max_rank {
        return Err(Error::RankOutOfRange { k, max: max_rank });
    }
    let svd = z.clone().svd(true, false);
    let u = svd.u.expect("svd requested u");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    let phi = DMatrix::from_fn(u.nrows(), k, |i, j| u[(i, order[j])].re);
    let psi = DMatrix::from_fn(u.nrows(), k, |i, j| u[(i, order[j])].im);
    Ok((phi, psi))
}

/// Global proper symplectic decomposition via the complex SVD of
/// `X_q + i X_v`; the real form `[[phi, -psi], [psi, phi]]` is orthonormal
/// and symplectic.
pub fn gpsd(x: &SnapshotSet, k: usize) -> Result<ReducedBasis> {
    let p = x.partition;
    let z = complex_snapshots(&x.displacement_rows(), &x.velocity_rows());
    let (phi, psi) = complex_pod(&z, k)?;
    let q_rows = p.q_rows();
    let v_rows = p.v_rows();
    let mut v = DMatrix::zeros(p.dim(), 2 * k);
    scatter_rows(&mut v, &q_rows, 0, &phi);
    scatter_rows(&mut v, &v_rows, 0, &psi);
    scatter_rows(&mut v, &q_rows, k, &(-&psi));
    scatter_rows(&mut v, &v_rows, k, &phi);
    Ok(ReducedBasis {
        v,
        method: ForwardMethod::Gpsd,
        partition: p,
        layout: BasisLayout::Symplectic { half: k },
    })
}

/// Symplectic reduction of the elastic pair only; the solid DOFs enter as
/// identity columns placed so the whole basis stays orthosymplectic.
pub fn psd_fixed_solid(x: &SnapshotSet, k_e: usize) -> Result<ReducedBasis> {
    let p = x.partition;
    let n_s = p.n_s;
    let z = complex_snapshots(&x.elastic_displacement_rows(), &x.elastic_velocity_rows());
    let (phi, psi) = complex_pod(&z, k_e)?;
    let half = n_s + k_e;
    let mut v = DMatrix::zeros(p.dim(), 2 * half);
    let qs: Vec<usize> = p.q_solid().collect();
    let vs: Vec<usize> = p.v_solid().collect();
    let qe: Vec<usize> = p.q_elastic().collect();
    let ve: Vec<usize> = p.v_elastic().collect();
    // q-type columns: solid displacement identity, then elastic phi/psi.
    scatter_rows(&mut v, &qs, 0, &DMatrix::identity(n_s, n_s));
    scatter_rows(&mut v, &qe, n_s, &phi);
    scatter_rows(&mut v, &ve, n_s, &psi);
    // v-type columns: solid velocity identity, then elastic -psi/phi.
    scatter_rows(&mut v, &vs, half, &DMatrix::identity(n_s, n_s));
    scatter_rows(&mut v, &qe, half + n_s, &(-&psi));
    scatter_rows(&mut v, &ve, half + n_s, &phi);
    Ok(ReducedBasis {
        v,
        method: ForwardMethod::PsdFixedSolid,
        partition: p,
        layout: BasisLayout::SymplecticFixedSolid { half },
    })
}

/// Galerkin-projected forward model.
pub struct ReducedForwardModel {
    pub e_n: DMatrix<f64>,
    pub a_n: DMatrix<f64>,
    pub b_n: DMatrix<f64>,
    pub load_n: DVector<f64>,
    pub x0_n: DVector<f64>,
    pub method: ForwardMethod,
}

impl ReducedForwardModel {
    pub fn n_v(&self) -> usize {
        self.e_n.nrows()
    }

    /// Integrate the reduced model with the implicit midpoint rule.
    pub fn simulate(&self, u: impl Fn(f64) -> DVector<f64>, grid: TimeGrid) -> Result<Trajectory> {
        let load = self.load_n.clone();
        implicit_midpoint(&self.e_n, &self.a_n, &self.b_n, u, |_| load.clone(), &self.x0_n, grid)
    }
}

/// Project the full system onto the basis.
pub fn galerkin_project(sys: &FirstOrderSystem, basis: &ReducedBasis) -> Result<ReducedForwardModel> {
    let v = &basis.v;
    let e_n = v.transpose() * &sys.e * v;
    // A singular reduced mass can occur for unlucky bases; report it here
    // rather than failing deep inside the integrator.
    Factorized::with_context(e_n.clone(), "reduced E")
        .map_err(|_| Error::SingularReducedSystem { context: "V^T E V" })?;
    Ok(ReducedForwardModel {
        a_n: v.transpose() * &sys.a * v,
        b_n: v.transpose() * &sys.b,
        load_n: v.transpose() * &sys.load,
        x0_n: v.transpose() * &sys.x0,
        e_n,
        method: basis.method,
    })
}

/// Lift a reduced trajectory and measure the relative Frobenius error
/// against the reference snapshots.
pub fn reconstruct_and_error(
    basis: &ReducedBasis,
    reduced_states: &DMatrix<f64>,
    reference: &DMatrix<f64>,
) -> (DMatrix<f64>, f64) {
    let lifted = &basis.v * reduced_states;
    let denom = reference.norm();
    let err = if denom == 0.0 {
        if lifted.norm() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (&lifted - reference).norm() / denom
    };
    (lifted, err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupled::{build_coupled, to_first_order, SolidParams};
    use crate::fem::{assemble, build_mesh, MaterialParams};
    use crate::testing::Rng;

    fn toy_snapshots(n_s: usize, n_e: usize, cols: usize, seed: u64) -> SnapshotSet {
        let p = StatePartition::new(n_s, n_e);
        let mut rng = Rng::new(seed);
        SnapshotSet::new(rng.matrix(p.dim(), cols), p).unwrap()
    }

    fn small_sys() -> (crate::coupled::CoupledSecondOrder, FirstOrderSystem) {
        let mesh = build_mesh(2, 4).unwrap();
        let mat = MaterialParams::new(10.0, 8.0, 1.0).unwrap();
        let asm = assemble(&mesh, &mat).unwrap();
        let obs = asm.mesh.nearest_free_node(0.5, 0.0);
        let c = build_coupled(asm, &SolidParams::default()).unwrap();
        let sys = to_first_order(&c, obs).unwrap();
        (c, sys)
    }

    fn forward_snapshots(sys: &FirstOrderSystem, n_t: usize) -> SnapshotSet {
        let c = sys;
        let target = DVector::from_vec(vec![1.0, 0.5]);
        let grid = TimeGrid::new(3.0, n_t).unwrap();
        let t_final = grid.t_final;
        let u = move |t: f64| {
            let (_, _, dds) = crate::coupled::min_jerk(t / t_final);
            &target * (dds / (t_final * t_final)) * 100.0
        };
        let traj = implicit_midpoint(&c.e, &c.a, &c.b, u, |_| DVector::zeros(c.dim()), &c.x0, grid)
            .unwrap();
        SnapshotSet::from_trajectory(&traj, c.partition).unwrap()
    }

    #[test]
    fn energy_rank_arithmetic() {
        let s = DVector::from_vec(vec![1.0, 0.01]);
        assert_eq!(pod_energy_rank(&s, 0.999).unwrap(), 1);
        let s = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(pod_energy_rank(&s, 0.999).unwrap(), 4);
        let zero = DVector::from_vec(vec![0.0, 0.0]);
        assert!(matches!(pod_energy_rank(&zero, 0.5), Err(Error::AllZeroSingularValues)));
    }

    #[test]
    fn energy_rank_matches_cumulative_oracle() {
        let mut rng = Rng::new(3);
        let x = rng.matrix(30, 20);
        let sv = crate::numerics::singular_values(&x).unwrap();
        let f = 0.999;
        let k = pod_energy_rank(&sv, f).unwrap();
        let total: f64 = sv.iter().map(|s| s * s).sum();
        let head: f64 = sv.iter().take(k).map(|s| s * s).sum();
        assert!(head / total >= f);
        if k > 1 {
            let prev: f64 = sv.iter().take(k - 1).map(|s| s * s).sum();
            assert!(prev / total < f);
        }
    }

    #[test]
    fn global_pod_repeated_column() {
        let p = StatePartition::new(1, 2);
        let c = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5, 3.0, -2.0]);
        let data = DMatrix::from_fn(6, 4, |i, _| c[i]);
        let x = SnapshotSet::new(data, p).unwrap();
        let basis = global_pod(&x, 1).unwrap();
        let unit = &c / c.norm();
        let dot: f64 = basis.v.column(0).dot(&unit);
        assert!((dot.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn global_pod_subspace_matches_full_svd() {
        let x = toy_snapshots(1, 3, 12, 17);
        let basis = global_pod(&x, 3).unwrap();
        let full = truncated_svd(&x.data, 3).unwrap();
        let diff = &basis.v * basis.v.transpose() - &full.u * full.u.transpose();
        assert!(diff.norm() < 1e-10);
    }

    #[test]
    fn pod_optimality_reconstruction_identity() {
        let x = toy_snapshots(1, 4, 15, 23);
        let all = crate::numerics::singular_values(&x.data).unwrap();
        for k in 1..6 {
            let basis = global_pod(&x, k).unwrap();
            let proj = &basis.v * (basis.v.transpose() * &x.data);
            let err2 = (&x.data - proj).norm_squared();
            let tail: f64 = all.iter().skip(k).map(|s| s * s).sum();
            assert!((err2 - tail).abs() <= 1e-9 * x.data.norm_squared());
        }
    }

    #[test]
    fn pod_beats_random_candidates() {
        let x = toy_snapshots(1, 4, 15, 31);
        let k = 3;
        let basis = global_pod(&x, k).unwrap();
        let pod_err = (&x.data - &basis.v * (basis.v.transpose() * &x.data)).norm_squared();
        let mut rng = Rng::new(99);
        for _ in 0..100 {
            let cand = rng.orthonormal(x.data.nrows(), k);
            let cand_err = (&x.data - &cand * (cand.transpose() * &x.data)).norm_squared();
            assert!(pod_err <= cand_err + 1e-12);
        }
    }

    #[test]
    fn componentwise_pod_structure() {
        let x = toy_snapshots(2, 5, 10, 7);
        let basis = componentwise_pod(&x, 3, 2).unwrap();
        assert!(basis.orthonormality_residual() < 1e-10);
        let p = x.partition;
        // Zero off-blocks: velocity rows vanish in the q columns and vice
        // versa.
        for &row in &p.v_rows() {
            for c in 0..3 {
                assert_eq!(basis.v[(row, c)], 0.0);
            }
        }
        for &row in &p.q_rows() {
            for c in 3..5 {
                assert_eq!(basis.v[(row, c)], 0.0);
            }
        }
    }

    #[test]
    fn componentwise_pod_subspace_oracle() {
        let x = toy_snapshots(1, 4, 12, 41);
        let basis = componentwise_pod(&x, 2, 2).unwrap();
        let vq_oracle = truncated_svd(&x.displacement_rows(), 2).unwrap().u;
        let got = basis.v.select_rows(x.partition.q_rows().iter()).columns(0, 2).into_owned();
        let diff = &got * got.transpose() - &vq_oracle * vq_oracle.transpose();
        assert!(diff.norm() < 1e-10);
    }

    #[test]
    fn fixed_solid_identity_block() {
        let x = toy_snapshots(2, 6, 10, 11);
        let basis = pod_fixed_solid(&x, 3).unwrap();
        assert!(basis.orthonormality_residual() < 1e-10);
        let cols = basis.solid_identity_cols().unwrap();
        assert_eq!(cols, vec![0, 1, 2, 3]);
        let solid_rows: Vec<usize> = x.partition.solid().collect();
        for (ri, &row) in solid_rows.iter().enumerate() {
            for (ci, &col) in cols.iter().enumerate() {
                let expect = if ri == ci { 1.0 } else { 0.0 };
                assert_eq!(basis.v[(row, col)], expect);
            }
            // Solid rows vanish outside the identity columns.
            for c in 4..basis.n_v() {
                assert_eq!(basis.v[(row, c)], 0.0);
            }
        }
        // Solid states are reproduced exactly after projection.
        let mut state = DVector::zeros(x.partition.dim());
        state[0] = 0.7;
        state[3] = -0.2;
        let lifted = &basis.v * (basis.v.transpose() * &state);
        for row in x.partition.solid() {
            assert!((lifted[row] - state[row]).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_solid_elastic_subspace_oracle() {
        let x = toy_snapshots(2, 6, 10, 13);
        let basis = pod_fixed_solid(&x, 4).unwrap();
        let oracle = truncated_svd(&x.elastic_rows(), 4).unwrap().u;
        let rows: Vec<usize> = x.partition.elastic().collect();
        let got = basis.v.select_rows(rows.iter()).columns(4, 4).into_owned();
        let diff = &got * got.transpose() - &oracle * oracle.transpose();
        assert!(diff.norm() < 1e-10);
    }

    #[test]
    fn componentwise_fixed_solid_structure() {
        let x = toy_snapshots(2, 6, 10, 19);
        let basis = componentwise_pod_fixed_solid(&x, 2, 3).unwrap();
        assert!(basis.orthonormality_residual() < 1e-10);
        match &basis.layout {
            BasisLayout::FixedSolid { elastic_groups } => {
                assert_eq!(elastic_groups, &vec![2, 3]);
            }
            other => panic!("wrong layout {other:?}"),
        }
        // q_e columns vanish on v_e rows and vice versa.
        let p = x.partition;
        for row in p.v_elastic() {
            for c in 4..6 {
                assert_eq!(basis.v[(row, c)], 0.0);
            }
        }
        for row in p.q_elastic() {
            for c in 6..9 {
                assert_eq!(basis.v[(row, c)], 0.0);
            }
        }
    }

    #[test]
    fn gpsd_canonical_pair_exact() {
        // Snapshots spanning (e1, 0) and (0, e1) in (q, v) coordinates.
        let p = StatePartition::new(0, 2);
        let mut data = DMatrix::zeros(4, 2);
        data[(0, 0)] = 1.0; // q_e1
        data[(2, 1)] = 1.0; // v_e1
        let x = SnapshotSet::new(data.clone(), p).unwrap();
        let basis = gpsd(&x, 1).unwrap();
        assert!(basis.orthonormality_residual() < 1e-12);
        assert!(basis.symplecticity_residual().unwrap() < 1e-12);
        let proj = &basis.v * (basis.v.transpose() * &data);
        assert!((proj - &data).norm() < 1e-12);
    }

    #[test]
    fn gpsd_symplectic_on_seeded_snapshots() {
        let x = toy_snapshots(2, 5, 9, 47);
        let basis = gpsd(&x, 3).unwrap();
        assert_eq!(basis.n_v(), 6);
        assert!(basis.orthonormality_residual() < 1e-10);
        assert!(basis.symplecticity_residual().unwrap() < 1e-10);
    }

    #[test]
    fn gpsd_matches_real_svd_of_augmented_snapshots() {
        // The complex-SVD construction spans the same subspace as the POD
        // of [X JX] when the retained spectrum is separated.
        let x = toy_snapshots(0, 4, 6, 53);
        let k = 2;
        let basis = gpsd(&x, k).unwrap();
        let jx = apply_poisson(&x.data, x.partition);
        let mut aug = DMatrix::zeros(x.data.nrows(), 2 * x.data.ncols());
        aug.view_mut((0, 0), (x.data.nrows(), x.data.ncols())).copy_from(&x.data);
        aug.view_mut((0, x.data.ncols()), (x.data.nrows(), x.data.ncols())).copy_from(&jx);
        let oracle = truncated_svd(&aug, 2 * k).unwrap().u;
        let diff = &basis.v * basis.v.transpose() - &oracle * oracle.transpose();
        assert!(diff.norm() < 1e-8, "subspace mismatch {}", diff.norm());
    }

    #[test]
    fn psd_fixed_solid_structure() {
        let x = toy_snapshots(2, 5, 9, 61);
        let basis = psd_fixed_solid(&x, 2).unwrap();
        assert_eq!(basis.n_v(), 8);
        assert!(basis.orthonormality_residual() < 1e-10);
        assert!(basis.symplecticity_residual().unwrap() < 1e-10);
        let cols = basis.solid_identity_cols().unwrap();
        assert_eq!(cols, vec![0, 1, 4, 5]);
        let solid_rows: Vec<usize> = x.partition.solid().collect();
        for (ri, &row) in solid_rows.iter().enumerate() {
            for (ci, &col) in cols.iter().enumerate() {
                let expect = if ri == ci { 1.0 } else { 0.0 };
                assert_eq!(basis.v[(row, col)], expect);
            }
        }
    }

    #[test]
    fn gpsd_reduced_flow_conserves_energy() {
        // Frozen-solid elastic block in mass-normalized coordinates, where
        // the symplectic projection and the plain Galerkin projection
        // coincide and the midpoint ROM conserves the reduced energy. With
        // the consistent mass kept in E the invariant does not survive the
        // projection.
        let (c, _) = small_sys();
        let ne = c.n_e();
        let (_, m_inv_half) = crate::numerics::spd_sqrt_and_inv_sqrt(&c.m_ee).unwrap();
        let k_tilde = &m_inv_half * &c.k_ee * &m_inv_half;
        let e = DMatrix::<f64>::identity(2 * ne, 2 * ne);
        let mut a = DMatrix::zeros(2 * ne, 2 * ne);
        a.view_mut((0, ne), (ne, ne)).fill_with_identity();
        a.view_mut((ne, 0), (ne, ne)).copy_from(&(-&k_tilde));
        let b = DMatrix::zeros(2 * ne, 1);
        let part = StatePartition::new(0, ne);
        let x0 = DVector::from_fn(2 * ne, |i, _| ((i as f64) * 0.73).sin());
        let grid = TimeGrid::new(3.0, 300).unwrap();
        let traj = implicit_midpoint(&e, &a, &b, |_| DVector::zeros(1), |_| DVector::zeros(2 * ne), &x0, grid)
            .unwrap();
        let x = SnapshotSet::from_trajectory(&traj, part).unwrap();

        let basis = gpsd(&x, 6).unwrap();
        let sys = FirstOrderSystem {
            e,
            a,
            b,
            c: DMatrix::zeros(1, 2 * ne),
            load: DVector::zeros(2 * ne),
            x0: x0.clone(),
            partition: part,
            observation_node: 0,
        };
        let rom = galerkin_project(&sys, &basis).unwrap();
        let red = rom.simulate(|_| DVector::zeros(1), grid).unwrap();
        let mut s_mat = DMatrix::zeros(2 * ne, 2 * ne);
        s_mat.view_mut((0, 0), (ne, ne)).copy_from(&k_tilde);
        s_mat.view_mut((ne, ne), (ne, ne)).fill_with_identity();
        let s_n = basis.v.transpose() * &s_mat * &basis.v;
        let energy = |xr: &DVector<f64>| (xr.transpose() * &s_n * xr)[(0, 0)];
        let e0 = energy(&red.state(0));
        for step in 0..=300 {
            let drift = (energy(&red.state(step)) - e0).abs() / e0.abs();
            assert!(drift <= 1e-10, "step {step}: reduced energy drift {drift:.3e}");
        }
    }

    #[test]
    fn psd_fixed_solid_exact_at_full_rank() {
        let x = toy_snapshots(1, 3, 3, 71);
        let basis = psd_fixed_solid(&x, 3).unwrap();
        let proj = &basis.v * (basis.v.transpose() * &x.data);
        assert!((proj - &x.data).norm() <= 1e-10 * x.data.norm());
    }

    #[test]
    fn galerkin_identity_basis_reproduces_system() {
        let (_, sys) = small_sys();
        let p = sys.partition;
        let basis = ReducedBasis {
            v: DMatrix::identity(p.dim(), p.dim()),
            method: ForwardMethod::GlobalPod,
            partition: p,
            layout: BasisLayout::Dense,
        };
        let rom = galerkin_project(&sys, &basis).unwrap();
        assert!((&rom.e_n - &sys.e).norm() < 1e-12 * sys.e.norm());
        assert!((&rom.a_n - &sys.a).norm() < 1e-12 * sys.a.norm());
        assert!((&rom.b_n - &sys.b).norm() < 1e-12);
    }

    #[test]
    fn galerkin_scalar_basis() {
        let (_, sys) = small_sys();
        let mut v = DMatrix::zeros(sys.dim(), 1);
        v[(0, 0)] = 1.0;
        let basis = ReducedBasis {
            v,
            method: ForwardMethod::GlobalPod,
            partition: sys.partition,
            layout: BasisLayout::Dense,
        };
        let rom = galerkin_project(&sys, &basis).unwrap();
        assert_eq!(rom.e_n[(0, 0)], sys.e[(0, 0)]);
        assert_eq!(rom.a_n[(0, 0)], sys.a[(0, 0)]);
    }

    #[test]
    fn galerkin_invariant_subspace_is_exact() {
        // Block-triangular A keeps span(e1, e2) invariant; starting there,
        // the ROM lifts to the exact full trajectory.
        let n = 6;
        let mut rng = Rng::new(83);
        let mut a = rng.matrix(n, n);
        for i in 2..n {
            a[(i, 0)] = 0.0;
            a[(i, 1)] = 0.0;
        }
        let e = DMatrix::identity(n, n);
        let b = DMatrix::zeros(n, 1);
        let x0 = DVector::from_fn(n, |i, _| if i < 2 { 1.0 } else { 0.0 });
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let full = implicit_midpoint(&e, &a, &b, |_| DVector::zeros(1), |_| DVector::zeros(n), &x0, grid)
            .unwrap();

        let mut v = DMatrix::zeros(n, 2);
        v[(0, 0)] = 1.0;
        v[(1, 1)] = 1.0;
        let basis = ReducedBasis {
            v,
            method: ForwardMethod::GlobalPod,
            partition: StatePartition::new(1, 2),
            layout: BasisLayout::Dense,
        };
        let sys = FirstOrderSystem {
            e,
            a,
            b,
            c: DMatrix::zeros(1, n),
            load: DVector::zeros(n),
            x0,
            partition: StatePartition::new(1, 2),
            observation_node: 0,
        };
        let rom = galerkin_project(&sys, &basis).unwrap();
        let red = rom.simulate(|_| DVector::zeros(1), grid).unwrap();
        let (lifted, err) = reconstruct_and_error(
            &basis,
            &red.states.columns(1, 100).into_owned(),
            &full.states.columns(1, 100).into_owned(),
        );
        let _ = lifted;
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn reconstruction_error_extremes() {
        let x = toy_snapshots(1, 2, 5, 5);
        let basis = global_pod(&x, 2).unwrap();
        let exact_red = basis.v.transpose() * &x.data;
        let (_, err_same) = reconstruct_and_error(
            &basis,
            &exact_red,
            &(&basis.v * &exact_red),
        );
        assert_eq!(err_same, 0.0);
        let zero_red = DMatrix::zeros(2, 5);
        let (_, err_zero) = reconstruct_and_error(&basis, &zero_red, &x.data);
        assert!((err_zero - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_error_matches_norm_oracle() {
        let x = toy_snapshots(1, 3, 7, 67);
        let basis = global_pod(&x, 2).unwrap();
        let red = basis.v.transpose() * &x.data;
        let (lifted, err) = reconstruct_and_error(&basis, &red, &x.data);
        let oracle = (&lifted - &x.data).norm() / x.data.norm();
        assert!((err - oracle).abs() < 1e-15);
    }

    #[test]
    fn rom_error_monotone_in_basis_size() {
        let (_, sys) = small_sys();
        let x = forward_snapshots(&sys, 80);
        let grid = TimeGrid::new(3.0, 80).unwrap();
        let target = DVector::from_vec(vec![1.0, 0.5]);
        let t_final = grid.t_final;
        let u = move |t: f64| {
            let (_, _, dds) = crate::coupled::min_jerk(t / t_final);
            &target * (dds / (t_final * t_final)) * 100.0
        };
        let mut prev_proj = f64::INFINITY;
        let mut prev_rom = f64::INFINITY;
        for n_v in [2, 4, 8, 12] {
            let basis = global_pod(&x, n_v).unwrap();
            let proj =
                (&x.data - &basis.v * (basis.v.transpose() * &x.data)).norm() / x.data.norm();
            assert!(proj <= prev_proj + 1e-12, "projection error grew: {proj} after {prev_proj}");
            prev_proj = proj;
            let rom = galerkin_project(&sys, &basis).unwrap();
            let red = rom.simulate(&u, grid).unwrap();
            let (_, err) = reconstruct_and_error(
                &basis,
                &red.states.columns(1, 80).into_owned(),
                &x.data,
            );
            assert!(err <= prev_rom + 1e-12, "error grew: {err} after {prev_rom}");
            prev_rom = err;
        }
    }

    #[test]
    fn exact_recovery_at_full_rank() {
        let (_, sys) = small_sys();
        let x = forward_snapshots(&sys, 600);
        let rank = x.numerical_rank().unwrap();
        let basis = global_pod(&x, rank).unwrap();
        let rom = galerkin_project(&sys, &basis).unwrap();
        let grid = TimeGrid::new(3.0, 600).unwrap();
        let target = DVector::from_vec(vec![1.0, 0.5]);
        let t_final = grid.t_final;
        let u = move |t: f64| {
            let (_, _, dds) = crate::coupled::min_jerk(t / t_final);
            &target * (dds / (t_final * t_final)) * 100.0
        };
        let red = rom.simulate(&u, grid).unwrap();
        let (_, err) = reconstruct_and_error(
            &basis,
            &red.states.columns(1, 600).into_owned(),
            &x.data,
        );
        assert!(err <= 1e-8, "exact recovery err {err}");
    }

    #[test]
    fn method_size_dispatch() {
        let x = toy_snapshots(2, 6, 12, 29);
        for m in ForwardMethod::ALL {
            let n_v = 8;
            let basis = m.basis_with_size(&x, n_v).unwrap();
            assert_eq!(basis.n_v(), n_v, "{}", m.tag());
            assert!(basis.orthonormality_residual() < 1e-10, "{}", m.tag());
        }
        // Symplectic methods reject odd sizes.
        assert!(ForwardMethod::Gpsd.basis_with_size(&x, 7).is_err());
        assert!(ForwardMethod::PsdFixedSolid.basis_with_size(&x, 7).is_err());
    }

    #[test]
    fn method_tags_round_trip() {
        for m in ForwardMethod::ALL {
            assert_eq!(ForwardMethod::from_tag(m.tag()), Some(m));
        }
        assert_eq!(ForwardMethod::from_tag("nope"), None);
    }
}
