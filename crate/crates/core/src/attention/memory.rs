//! Predicted workspace peaks for the attention kernels.
//!
//! These replay the exact allocation sequence of the forward and backward
//! passes without touching any data, so a caller can tell ahead of time whether
//! a run fits under a memory ceiling.

use std::mem::size_of;

use super::TopKSelector;

/// Problem size of one attention call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionShape {
    pub n: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub k: usize,
}

#[derive(Default)]
struct Sim {
    live: u64,
    peak: u64,
}

impl Sim {
    fn hold(&mut self, bytes: usize) {
        self.live += bytes as u64;
        self.peak = self.peak.max(self.live);
    }

    fn release(&mut self, bytes: usize) {
        self.live -= bytes as u64;
    }

    fn transient(&mut self, bytes: usize) {
        self.hold(bytes);
        self.release(bytes);
    }
}

impl AttentionShape {
    /// Peak bytes of dense attention; forward only, or forward then backward
    /// while the tape is still alive.
    pub fn full_peak_bytes<T>(&self, with_backward: bool) -> u64 {
        let s = size_of::<T>();
        let Self { n, d_model: d, heads, d_k: dk, d_v: dv, .. } = *self;
        let mut sim = Sim::default();
        sim.hold(n * d * s);
        for _ in 0..heads {
            sim.hold(n * (2 * dk + dv) * s);
            if n > 0 {
                sim.hold(n * dk * s);
                sim.hold(n * n * s);
                sim.release(n * dk * s);
                sim.hold(n * dv * s);
            }
            sim.transient(n * d * s);
        }
        if with_backward {
            sim.hold(n * d * s);
            for _ in 0..heads {
                let kept = (2 * dv + 2 * dk) * n * s;
                sim.hold(n * dv * s);
                sim.hold(n * dv * s);
                sim.hold(n * n * s);
                sim.release(n * dv * s);
                sim.hold(n * dv * s);
                sim.hold(2 * n * dk * s);
                sim.release(n * n * s);
                for _ in 0..3 {
                    sim.transient(n * d * s);
                }
                sim.release(kept);
            }
        }
        sim.peak
    }

    /// Peak bytes of k-MIP attention with the given top-k strategy.
    ///
    /// Exact when the tiled kernel runs on one worker; with `threads > 1` it
    /// assumes every worker holds its scratch block at the same moment.
    pub fn kmip_peak_bytes<T>(&self, selector: TopKSelector, threads: usize, with_backward: bool) -> u64 {
        let s = size_of::<T>();
        let pair = size_of::<(T, usize)>();
        let Self { n, d_model: d, heads, d_k: dk, d_v: dv, .. } = *self;
        let k = self.k.min(n);
        let mut sim = Sim::default();
        sim.hold(n * d * s);
        for _ in 0..heads {
            sim.hold(n * (2 * dk + dv) * s);
            if n == 0 {
                continue;
            }
            let out = n * k * (size_of::<usize>() + s);
            match selector {
                TopKSelector::Tiled(cfg) => {
                    sim.hold(out);
                    sim.hold(n * dk * s);
                    let qt = cfg.query_tile.min(n);
                    let kt = cfg.key_tile.min(n);
                    let per_cand = if k < cfg.key_tile { 1 } else { 2 };
                    let blocks = n.div_ceil(qt);
                    let scratch = qt * kt * s + (qt * k * per_cand + kt) * pair;
                    sim.transient(scratch * threads.max(1).min(blocks));
                    sim.release(n * dk * s);
                }
                TopKSelector::Dense => {
                    sim.hold(n * n * s);
                    sim.hold(n * dk * s);
                    sim.hold(out);
                    sim.transient(n * pair);
                    sim.release(n * n * s + n * dk * s);
                }
            }
            sim.hold(n * k * s);
            sim.hold(n * k * dv * s);
            sim.hold(n * dv * s);
            sim.release(n * k * dv * s);
            sim.transient(n * d * s);
        }
        if with_backward && n > 0 {
            sim.hold(n * d * s);
            for _ in 0..heads {
                let kept = (n * dv + n * k + n * dv + 2 * n * dk) * s;
                sim.hold(n * dv * s);
                sim.hold(n * k * s);
                sim.hold(n * dv * s);
                sim.hold(2 * n * dk * s);
                for _ in 0..3 {
                    sim.transient(n * d * s);
                }
                sim.release(kept);
            }
        }
        sim.peak
    }
}
