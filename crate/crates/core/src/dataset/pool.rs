use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cognitive::Level;

use super::Dataset;

/// A fixed-length window of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub trajectory: usize,
    pub start: usize,
    pub len: usize,
}

/// `pool_size` segments of a single driver.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledBatch {
    pub driver_id: u32,
    pub segments: Vec<Segment>,
    /// Labels revealed by the labeled members of the pool, if any.
    pub trait_label: Option<Level>,
    pub preference_label: Option<Level>,
}

impl PooledBatch {
    pub fn is_labeled(&self) -> bool {
        self.trait_label.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoolReport {
    /// Drivers with fewer eligible segments than the pool size, with their segment count.
    pub skipped: Vec<(u32, usize)>,
}

/// Cuts every trajectory into non-overlapping windows of `window_steps`,
/// shuffles each driver's windows and groups them into pools of
/// `pool_size`. Leftover windows that do not fill a pool are dropped.
pub fn pooled_batches<R: Rng + ?Sized>(
    dataset: &Dataset,
    pool_size: usize,
    window_steps: usize,
    rng: &mut R,
) -> (Vec<PooledBatch>, PoolReport) {
    let mut report = PoolReport::default();
    let mut pools = Vec::new();
    if pool_size == 0 || window_steps == 0 {
        return (pools, report);
    }
    let mut segments: BTreeMap<u32, Vec<Segment>> = BTreeMap::new();
    for (i, t) in dataset.trajectories.iter().enumerate() {
        let entry = segments.entry(t.driver_id).or_default();
        for k in 0..t.len() / window_steps {
            entry.push(Segment { trajectory: i, start: k * window_steps, len: window_steps });
        }
    }
    for (driver_id, mut segs) in segments {
        if segs.len() < pool_size {
            log::warn!("driver {driver_id}: {} segments, fewer than pool size {pool_size}", segs.len());
            report.skipped.push((driver_id, segs.len()));
            continue;
        }
        segs.shuffle(rng);
        for chunk in segs.chunks_exact(pool_size) {
            let labeled = chunk.iter().map(|s| &dataset.trajectories[s.trajectory]).find(|t| t.is_labeled());
            pools.push(PooledBatch {
                driver_id,
                segments: chunk.to_vec(),
                trait_label: labeled.and_then(|t| t.trait_label),
                preference_label: labeled.and_then(|t| t.preference_label),
            });
        }
    }
    (pools, report)
}
