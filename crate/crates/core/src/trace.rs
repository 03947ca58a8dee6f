//! Per-iteration loss records.

use alloc::vec::Vec;

use crate::network::{LossBreakdown, NetworkState};

/// Losses after initialization (iteration 0) and after every outer iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub records: Vec<(usize, LossBreakdown)>,
}

impl LossTrace {
    pub fn push(&mut self, iteration: usize, losses: LossBreakdown) {
        self.records.push((iteration, losses));
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&LossBreakdown> {
        self.records.last().map(|(_, b)| b)
    }

    pub fn first(&self) -> Option<&LossBreakdown> {
        self.records.first().map(|(_, b)| b)
    }

    pub fn totals(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|(_, b)| b.total)
    }

    /// Largest increase of the total loss between consecutive records.
    pub fn max_uptick(&self) -> f64 {
        self.records.windows(2).map(|w| w[1].1.total - w[0].1.total).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the total never rises by more than `slack`.
    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.records.len() < 2 || self.max_uptick() <= slack
    }
}

/// Hook called by the trainers after initialization and after each outer
/// iteration, with the state the recorded losses were computed from.
pub trait TraceObserver {
    fn on_iteration(&mut self, iteration: usize, state: &NetworkState, losses: &LossBreakdown);
}

impl TraceObserver for () {
    fn on_iteration(&mut self, _: usize, _: &NetworkState, _: &LossBreakdown) {}
}

impl<F: FnMut(usize, &NetworkState, &LossBreakdown)> TraceObserver for F {
    fn on_iteration(&mut self, iteration: usize, state: &NetworkState, losses: &LossBreakdown) {
        self(iteration, state, losses)
    }
}
