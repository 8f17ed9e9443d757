//! Operation counters used to measure the work done by each method.

use std::sync::atomic::{AtomicU64, Ordering};

/// Thread-safe tallies. Counts are added in bulk per call, never per cell.
#[derive(Debug, Default)]
pub struct Counters {
    cost_evals: AtomicU64,
    cells: AtomicU64,
    kernel_ops: AtomicU64,
    objective_evals: AtomicU64,
}

/// Plain snapshot of [`Counters`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    /// Evaluations of the sample cost function.
    pub cost_evals: u64,
    /// Accumulated-cost cells filled.
    pub cells: u64,
    /// Floating-point operations spent on kernel distances between embeddings.
    pub kernel_ops: u64,
    /// Black-box objective evaluations in subsequence search.
    pub objective_evals: u64,
}

impl Counters {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add_cost_evals(&self, n: u64) {
        self.cost_evals.fetch_add(n, Ordering::Relaxed);
        self.cells.fetch_add(n, Ordering::Relaxed);
    }

    pub(crate) fn add_kernel_ops(&self, n: u64) {
        self.kernel_ops.fetch_add(n, Ordering::Relaxed);
    }

    pub(crate) fn add_objective_evals(&self, n: u64) {
        self.objective_evals.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            cost_evals: self.cost_evals.load(Ordering::Relaxed),
            cells: self.cells.load(Ordering::Relaxed),
            kernel_ops: self.kernel_ops.load(Ordering::Relaxed),
            objective_evals: self.objective_evals.load(Ordering::Relaxed),
        }
    }
}

impl std::ops::Sub for CounterSnapshot {
    type Output = CounterSnapshot;

    fn sub(self, rhs: Self) -> Self {
        CounterSnapshot {
            cost_evals: self.cost_evals - rhs.cost_evals,
            cells: self.cells - rhs.cells,
            kernel_ops: self.kernel_ops - rhs.kernel_ops,
            objective_evals: self.objective_evals - rhs.objective_evals,
        }
    }
}
