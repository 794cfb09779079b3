//! Integer server-partition arithmetic for the replication policies.
//!
//! Subsystem sizes follow the capacity each batch size needs plus an equal
//! share of the `~n^alpha` spare servers; rounding residue servers belong to
//! no subsystem and never receive replicas.

use crate::model::{OrderStatTable, SystemParams};
use crate::optimizer::ReplicationProfile;
use crate::{Error, Result};
use std::ops::Range;

/// Two-subsystem partition for batch dispatch with early cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrecPartition {
    pub n: u32,
    /// Probability of routing to subsystem 1 (the larger batch).
    pub q: f64,
    /// Batch size of subsystem 1; subsystem 2 uses one fewer.
    pub batch_large: u32,
    pub sub1: Range<u32>,
    pub sub2: Range<u32>,
}

/// Two-subsystem partition with large/small pools.
#[derive(Debug, Clone, PartialEq)]
pub struct DqPartition {
    pub n: u32,
    pub k: u32,
    pub q: f64,
    pub batch_large: u32,
    pub subs: [DqSub; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqSub {
    pub large: Range<u32>,
    pub small: Range<u32>,
    pub batch: u32,
}

/// Per-replica-count partition for the size-based policies.
#[derive(Debug, Clone, PartialEq)]
pub struct SbPartition {
    pub n: u32,
    pub k: u32,
    /// Grid x values, ascending, matching the kernel rows.
    pub grid: Vec<f64>,
    /// Per grid point: `(subsystem index, probability)` routing rows.
    pub kernel: Vec<Vec<(usize, f64)>>,
    pub subs: Vec<SbSubsystem>,
    /// Replica counts whose subsystems were too small and had their routing
    /// mass folded into a neighbor.
    pub folded: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbSubsystem {
    pub r: u32,
    /// All servers of this subsystem.
    pub full: Range<u32>,
    /// Batch-dispatch target pool (equal to `full` without small pools).
    pub large: Range<u32>,
    /// Fallback pool; empty without small pools.
    pub small: Range<u32>,
}

fn subsystem_needs(params: &SystemParams) -> Result<(f64, f64, f64, f64)> {
    if !params.is_stabilizable() {
        return Err(Error::Config(format!(
            "no stable policy exists: lambda={} >= 1/(1+1/mu)={}",
            params.lambda(),
            1.0 / (1.0 + 1.0 / params.mu())
        )));
    }
    let q = params.q_n()?;
    let nf = params.n() as f64;
    let kf = params.k() as f64;
    let big = params.batch_ceil()? as f64;
    let rate = params.lambda() * nf / kf;
    let need1 = rate * q * (big + kf / params.mu());
    let need2 = rate * (1.0 - q) * (big - 1.0 + kf / params.mu());
    let spare = params.lambda() * nf.powf(params.alpha()) / kf;
    Ok((q, need1, need2, spare))
}

fn truncate_to_multiple(v: u32, m: u32) -> u32 {
    v - v % m
}

pub(super) fn frec_partition(params: &SystemParams) -> Result<FrecPartition> {
    let (q, need1, need2, spare) = subsystem_needs(params)?;
    let big = params.batch_ceil()?;
    let small_batch = big - 1;
    // An unused subsystem 1 (q = 0) takes no servers at all.
    let n1 = if q > 0.0 {
        truncate_to_multiple((need1 + spare).floor() as u32, big)
    } else {
        0
    };
    let n2 = truncate_to_multiple((need2 + spare).ceil() as u32, small_batch);
    if q > 0.0 && n1 < big {
        return Err(Error::Config(format!(
            "n too small for batch dispatch at these parameters: subsystem 1 has {n1} servers, batch {big}"
        )));
    }
    if n2 < small_batch {
        return Err(Error::Config(format!(
            "n too small for batch dispatch: subsystem 2 has {n2} servers, batch {small_batch}"
        )));
    }
    if n1 + n2 > params.n() {
        return Err(Error::Config(format!(
            "n too small for batch dispatch: subsystems need {} of {} servers",
            n1 + n2,
            params.n()
        )));
    }
    Ok(FrecPartition {
        n: params.n(),
        q,
        batch_large: big,
        sub1: 0..n1,
        sub2: n1..n1 + n2,
    })
}

pub(super) fn dq_partition(params: &SystemParams) -> Result<DqPartition> {
    let (q, need1, need2, spare) = subsystem_needs(params)?;
    let big = params.batch_ceil()?;
    let k = params.k();
    if big < k + 1 {
        return Err(Error::Config(format!(
            "smaller subsystem would start fewer than k replicas: batch {big}, k {k}"
        )));
    }
    let nf = params.n() as f64;
    let small_size = (params.lambda() * nf.powf(params.alpha()) / (2.0 * k as f64)).floor() as u32;
    let small_size = small_size.max(k);
    let n1 = if q > 0.0 { (need1 + spare).floor() as u32 } else { 0 };
    let n2 = (need2 + spare).ceil() as u32;
    for (idx, (size, batch)) in [(n1, big), (n2, big - 1)].into_iter().enumerate() {
        if idx == 0 && q == 0.0 {
            continue;
        }
        if size <= small_size {
            return Err(Error::Config(format!(
                "subsystem {} has {size} servers, not more than its small pool of {small_size}",
                idx + 1
            )));
        }
        if size - small_size < batch {
            return Err(Error::Config(format!(
                "subsystem {} large pool has {} servers, smaller than batch {batch}",
                idx + 1,
                size - small_size
            )));
        }
    }
    if n1 + n2 > params.n() {
        return Err(Error::Config(format!(
            "n too small: subsystems need {} of {} servers",
            n1 + n2,
            params.n()
        )));
    }
    let sub = |start: u32, size: u32| {
        if size == 0 {
            DqSub { large: start..start, small: start..start, batch: big }
        } else {
            DqSub {
                large: start..start + size - small_size,
                small: start + size - small_size..start + size,
                batch: 0, // set by caller
            }
        }
    };
    let mut s1 = sub(0, n1);
    s1.batch = big;
    let mut s2 = sub(n1, n2);
    s2.batch = big - 1;
    Ok(DqPartition { n: params.n(), k, q, batch_large: big, subs: [s1, s2] })
}

use crate::optimizer::capacity_bracket;

pub(super) fn sb_partition(
    params: &SystemParams,
    profile: &ReplicationProfile,
    table: &OrderStatTable,
    with_small_pools: bool,
) -> Result<SbPartition> {
    profile.validate()?;
    if profile.k != params.k() {
        return Err(Error::Config(format!(
            "profile was solved for k={}, system has k={}",
            profile.k,
            params.k()
        )));
    }
    let k = params.k();
    let n = params.n();
    let nf = n as f64;
    let r_bar = profile.max_support();

    // Routing mass per replica count, folded onto the grid.
    let mut mass: std::collections::BTreeMap<u32, Vec<f64>> = std::collections::BTreeMap::new();
    for (j, row) in profile.rows.iter().enumerate() {
        for &(r, p) in row {
            if p > 0.0 {
                mass.entry(r).or_insert_with(|| vec![0.0; profile.rows.len()])[j] = p;
            }
        }
    }

    let spare_each = nf.powf(params.alpha()) / r_bar as f64;
    let small_target = if with_small_pools {
        (nf.powf(params.alpha()) / (2.0 * r_bar as f64)).floor() as u32
    } else {
        0
    };

    let size_of = |r: u32, row_mass: &[f64]| -> Result<u32> {
        let mut cap = 0.0;
        for (j, &(x, w)) in profile.grid.iter().enumerate() {
            if row_mass[j] > 0.0 {
                cap += w * x * row_mass[j] * capacity_bracket(table, k, r, x)?;
            }
        }
        cap *= params.lambda() / k as f64;
        let raw = (nf * cap + spare_each).floor() as u32;
        Ok(truncate_to_multiple(raw, r))
    };
    let min_size = |r: u32| -> u32 {
        if with_small_pools {
            // both pools must fit a batch of r
            let small = small_target.max(r);
            small + r
        } else {
            r
        }
    };

    // Fold replica counts whose subsystem would be too small into the
    // nearest surviving neighbor.
    let mut folded: Vec<(u32, u32)> = Vec::new();
    loop {
        let mut sizes: Vec<(u32, u32)> = Vec::new();
        for (&r, row_mass) in &mass {
            sizes.push((r, size_of(r, row_mass)?));
        }
        let Some(&(bad, _)) = sizes.iter().find(|&&(r, size)| size < min_size(r)) else {
            break;
        };
        if mass.len() == 1 {
            return Err(Error::Config(format!(
                "n={n} too small for a size-based partition: subsystem r={bad} cannot fit"
            )));
        }
        let target = mass
            .keys()
            .filter(|&&r| r != bad)
            .min_by_key(|&&r| (r.abs_diff(bad), r))
            .copied()
            .unwrap();
        let moved = mass.remove(&bad).unwrap();
        let dst = mass.get_mut(&target).unwrap();
        for (slot, add) in dst.iter_mut().zip(moved) {
            *slot += add;
        }
        folded.push((bad, target));
    }

    let mut subs = Vec::new();
    let mut kernel: Vec<Vec<(usize, f64)>> = vec![Vec::new(); profile.grid.len()];
    let mut start = 0u32;
    for (idx, (&r, row_mass)) in mass.iter().enumerate() {
        let size = size_of(r, row_mass)?;
        if start + size > n {
            return Err(Error::Config(format!(
                "size-based partition needs {} of {n} servers",
                start + size
            )));
        }
        let full = start..start + size;
        let (large, small) = if with_small_pools {
            let small = small_target.max(r);
            (start..start + size - small, start + size - small..start + size)
        } else {
            (full.clone(), start + size..start + size)
        };
        subs.push(SbSubsystem { r, full: full.clone(), large, small });
        for (j, &p) in row_mass.iter().enumerate() {
            if p > 0.0 {
                kernel[j].push((idx, p));
            }
        }
        start += size;
    }

    // Renormalize kernel rows against float drift from folding.
    for row in &mut kernel {
        let total: f64 = row.iter().map(|(_, p)| p).sum();
        debug_assert!((total - 1.0).abs() < 1e-9);
        for (_, p) in row.iter_mut() {
            *p /= total;
        }
    }

    Ok(SbPartition {
        n,
        k,
        grid: profile.grid.iter().map(|&(x, _)| x).collect(),
        kernel,
        subs,
        folded,
    })
}

impl SbPartition {
    /// Kernel row for a task of size `x` (nearest grid point).
    pub fn route_row(&self, x: f64) -> &[(usize, f64)] {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, &gx) in self.grid.iter().enumerate() {
            let d = (gx - x).abs();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        &self.kernel[best]
    }
}
