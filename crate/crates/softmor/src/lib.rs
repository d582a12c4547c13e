pub mod coupled;
pub mod error;
pub mod fem;
pub mod lqr;
pub mod mor_forward;
pub mod mor_lqr;
pub mod mtx;
pub mod numerics;
pub mod partition;
pub mod timeint;

pub use coupled::{CoupledSecondOrder, FirstOrderSystem, SolidParams};
pub use error::{Error, Result};
pub use lqr::{AreSolution, ClosedLoopRun, CostWeights};
pub use mor_forward::{ForwardMethod, ReducedBasis, ReducedForwardModel, SnapshotSet};
pub use mor_lqr::{RbAreBasis, RbAreMethod, ReducedAre};
pub use numerics::{Factorized, SvdResult};
pub use partition::StatePartition;
pub use timeint::{TimeGrid, Trajectory};

pub use nalgebra::{DMatrix, DVector};

#[cfg(test)]
pub(crate) mod testing;
