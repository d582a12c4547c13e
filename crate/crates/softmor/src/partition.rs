//! Index bookkeeping for the coupled state vector.
//!
//! The first-order state is ordered `x = [q_s, v_s, q_e, v_e]`. Every
//! reduction method slices this layout differently (solid/elastic,
//! displacement/velocity), so all index arithmetic lives here and the rest
//! of the crate works with named row sets instead of raw offsets.

use std::ops::Range;

/// Sizes of the solid and elastic partitions of the second-order state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatePartition {
    /// Solid (rigid hand) displacement DOF count.
    pub n_s: usize,
    /// Elastic (free tissue) displacement DOF count.
    pub n_e: usize,
}

impl StatePartition {
    pub fn new(n_s: usize, n_e: usize) -> Self {
        Self { n_s, n_e }
    }

    /// Second-order dimension n = n_s + n_e.
    pub fn n(&self) -> usize {
        self.n_s + self.n_e
    }

    /// First-order dimension 2n.
    pub fn dim(&self) -> usize {
        2 * self.n()
    }

    pub fn q_solid(&self) -> Range<usize> {
        0..self.n_s
    }

    pub fn v_solid(&self) -> Range<usize> {
        self.n_s..2 * self.n_s
    }

    pub fn q_elastic(&self) -> Range<usize> {
        2 * self.n_s..2 * self.n_s + self.n_e
    }

    pub fn v_elastic(&self) -> Range<usize> {
        2 * self.n_s + self.n_e..self.dim()
    }

    /// Both solid blocks; contiguous in the state ordering.
    pub fn solid(&self) -> Range<usize> {
        0..2 * self.n_s
    }

    /// Both elastic blocks; contiguous in the state ordering.
    pub fn elastic(&self) -> Range<usize> {
        2 * self.n_s..self.dim()
    }

    /// All displacement rows (solid then elastic), in state order.
    pub fn q_rows(&self) -> Vec<usize> {
        self.q_solid().chain(self.q_elastic()).collect()
    }

    /// All velocity rows (solid then elastic), in state order.
    pub fn v_rows(&self) -> Vec<usize> {
        self.v_solid().chain(self.v_elastic()).collect()
    }

    /// Permutation taking the state ordering to (all-q, all-v) major order.
    ///
    /// `perm[i]` is the original row index that lands at permuted row `i`.
    pub fn qv_permutation(&self) -> Vec<usize> {
        let mut p = self.q_rows();
        p.extend(self.v_rows());
        p
    }
}
