//! Shared fixtures for the criterion benchmarks.

use softmor::coupled::{build_coupled, min_jerk_input, to_first_order, SolidParams};
use softmor::fem::{assemble, build_mesh, MaterialParams};
use softmor::mor_forward::SnapshotSet;
use softmor::timeint::{implicit_midpoint, TimeGrid};
use softmor::{CoupledSecondOrder, DVector, FirstOrderSystem};

pub struct BenchSystem {
    pub coupled: CoupledSecondOrder,
    pub sys: FirstOrderSystem,
}

/// Build a coupled system sized for benchmarking (smaller than the desk
/// configuration so a full criterion run stays in the minutes range).
pub fn bench_system(nx: usize, ny: usize, damping: (f64, f64)) -> BenchSystem {
    let mesh = build_mesh(nx, ny).expect("valid mesh");
    let mat = MaterialParams::new(50.0, 50.0, 1.0).expect("valid material");
    let asm = assemble(&mesh, &mat).expect("assembly");
    let obs = asm.mesh.nearest_free_node(0.5, 0.0);
    let coupled = build_coupled(asm, &SolidParams { mass: 100.0, damping }).expect("coupling");
    let sys = to_first_order(&coupled, obs).expect("first-order form");
    BenchSystem { coupled, sys }
}

/// Forward snapshots from the minimum-jerk pull used by the benchmarks.
pub fn bench_snapshots(b: &BenchSystem, n_t: usize) -> SnapshotSet {
    let grid = TimeGrid::new(3.0, n_t).expect("grid");
    let input = min_jerk_input(&b.coupled, DVector::from_vec(vec![1.0, 0.5]), 3.0);
    let traj = implicit_midpoint(
        &b.sys.e,
        &b.sys.a,
        &b.sys.b,
        input,
        |_| DVector::zeros(b.sys.dim()),
        &b.sys.x0,
        grid,
    )
    .expect("forward run");
    SnapshotSet::from_trajectory(&traj, b.sys.partition).expect("snapshots")
}
