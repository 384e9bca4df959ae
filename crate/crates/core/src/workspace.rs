//! Allocation accounting for the numeric kernels.
//!
//! Kernels register every scratch and output buffer they create through
//! [`Workspace::alloc`]; the returned [`Allocation`] releases its bytes when
//! dropped. `peak_bytes` is what the memory benchmarks report.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Default)]
struct Counters {
    live: AtomicU64,
    peak: AtomicU64,
    ceiling: Option<u64>,
}

/// Shared handle to a set of live/peak byte counters. Cloning shares counters.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    counters: Arc<Counters>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// A workspace that refuses allocations pushing `live_bytes` above `ceiling`.
    pub fn with_ceiling(ceiling: u64) -> Self {
        Self {
            counters: Arc::new(Counters { ceiling: Some(ceiling), ..Default::default() }),
        }
    }

    pub fn ceiling(&self) -> Option<u64> {
        self.counters.ceiling
    }

    pub fn live_bytes(&self) -> u64 {
        self.counters.live.load(Ordering::SeqCst)
    }

    pub fn peak_bytes(&self) -> u64 {
        self.counters.peak.load(Ordering::SeqCst)
    }

    /// Starts a new measurement scope: the peak is lowered to the current live size.
    pub fn reset_peak(&self) {
        let live = self.live_bytes();
        self.counters.peak.store(live, Ordering::SeqCst);
    }

    /// Records `bytes` as live until the returned guard is dropped.
    pub fn alloc(&self, bytes: u64) -> Result<Allocation> {
        let c = &self.counters;
        let mut live = c.live.load(Ordering::SeqCst);
        loop {
            let next = live + bytes;
            if let Some(ceiling) = c.ceiling {
                if next > ceiling {
                    return Err(Error::MemoryCeiling { requested: bytes, live, ceiling });
                }
            }
            match c.live.compare_exchange(live, next, Ordering::SeqCst, Ordering::SeqCst) {
                Ok(_) => {
                    c.peak.fetch_max(next, Ordering::SeqCst);
                    break;
                }
                Err(actual) => live = actual,
            }
        }
        Ok(Allocation { counters: Some(self.counters.clone()), bytes })
    }

    /// Convenience for `count` elements of type `T`.
    pub fn alloc_elems<T>(&self, count: usize) -> Result<Allocation> {
        self.alloc((count * std::mem::size_of::<T>()) as u64)
    }
}

/// Guard for bytes registered with a [`Workspace`].
#[derive(Debug)]
pub struct Allocation {
    counters: Option<Arc<Counters>>,
    bytes: u64,
}

impl Allocation {
    pub fn bytes(&self) -> u64 {
        self.bytes
    }
}

impl Drop for Allocation {
    fn drop(&mut self) {
        if let Some(c) = self.counters.take() {
            c.live.fetch_sub(self.bytes, Ordering::SeqCst);
        }
    }
}
