//! Slice-aware PRB scheduler.
//!
//! Allocation runs in two passes over a cell's slices:
//!
//! 1. every slice gets its dedicated share, raised to its demand-contingent
//!    minimum (`min(min_pct, need)`);
//! 2. what is left goes to slices still short of `min(need, max_pct)`, in
//!    proportion to the shortfall.
//!
//! Dedicated share is reserved even when idle. Within a slice the served
//! rate is split across UEs by max-min fair water-filling.

use thiserror::Error;

use crate::rc::PrbQuota;

/// Tolerance for floating-point comparisons on percentages and rates.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("sum of min_pct is {0}, above 100")]
    MinOverCommitted(u32),
    #[error("sum of dedicated_pct is {0}, above 100")]
    DedicatedOverCommitted(u32),
    #[error("bad quota: {0}")]
    Quota(String),
    #[error("capacity must be positive, got {0}")]
    Capacity(f64),
}

/// One slice as the scheduler sees it for a tick.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceDemand {
    pub quota: PrbQuota,
    /// Per-UE demand in Mbps, in ascending UE-id order.
    pub ue_demand: Vec<f64>,
}

impl SliceDemand {
    pub fn total(&self) -> f64 {
        self.ue_demand.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellAllocation {
    /// Allocated percent of the cell's PRBs, per slice.
    pub slice_pct: Vec<f64>,
    pub slice_served: Vec<f64>,
    pub ue_served: Vec<Vec<f64>>,
}

/// Checks the cell-level quota invariants.
pub fn check_quotas<'a>(quotas: impl IntoIterator<Item = &'a PrbQuota>) -> Result<(), ConfigError> {
    let mut min_sum = 0u32;
    let mut ded_sum = 0u32;
    for q in quotas {
        q.check().map_err(|e| ConfigError::Quota(e.to_string()))?;
        min_sum += q.min_pct as u32;
        ded_sum += q.dedicated_pct as u32;
    }
    if ded_sum > 100 {
        return Err(ConfigError::DedicatedOverCommitted(ded_sum));
    }
    if min_sum > 100 {
        return Err(ConfigError::MinOverCommitted(min_sum));
    }
    Ok(())
}

/// Allocates one tick of a cell with `capacity_mbps` at 100% PRBs.
pub fn schedule_cell(capacity_mbps: f64, slices: &[SliceDemand]) -> Result<CellAllocation, ConfigError> {
    if capacity_mbps.is_nan() || capacity_mbps <= 0.0 {
        return Err(ConfigError::Capacity(capacity_mbps));
    }
    check_quotas(slices.iter().map(|s| &s.quota))?;

    let need: Vec<f64> = slices.iter().map(|s| 100.0 * s.total() / capacity_mbps).collect();
    let mut alloc: Vec<f64> = slices
        .iter()
        .zip(&need)
        .map(|(s, &n)| (s.quota.dedicated_pct as f64).max(n.min(s.quota.min_pct as f64)))
        .collect();

    // Shortfall against each slice's ceiling. A single proportional step
    // reaches the fixed point: every slice receives the same fraction of its
    // shortfall, and none can overshoot its ceiling.
    let remaining = 100.0 - alloc.iter().sum::<f64>();
    let unmet: Vec<f64> = slices
        .iter()
        .zip(&need)
        .zip(&alloc)
        .map(|((s, &n), &a)| (n.min(s.quota.max_pct as f64) - a).max(0.0))
        .collect();
    let total_unmet: f64 = unmet.iter().sum();
    if total_unmet > EPS && remaining > EPS {
        let fraction = (remaining / total_unmet).min(1.0);
        for (a, u) in alloc.iter_mut().zip(&unmet) {
            *a += u * fraction;
        }
    }

    let mut slice_served = Vec::with_capacity(slices.len());
    let mut ue_served = Vec::with_capacity(slices.len());
    for (s, &a) in slices.iter().zip(&alloc) {
        let served = s.total().min(a / 100.0 * capacity_mbps);
        ue_served.push(water_fill(served, &s.ue_demand));
        slice_served.push(served);
    }
    Ok(CellAllocation {
        slice_pct: alloc,
        slice_served,
        ue_served,
    })
}

/// Max-min fair split of `budget` across `demand`; leftovers from small
/// demands are shared equally among the rest. Earlier entries are settled
/// first on ties, which keeps the result order-stable.
pub fn water_fill(budget: f64, demand: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; demand.len()];
    let mut order: Vec<usize> = (0..demand.len()).collect();
    order.sort_by(|&a, &b| demand[a].total_cmp(&demand[b]).then(a.cmp(&b)));
    let mut left = budget.max(0.0);
    for (k, &i) in order.iter().enumerate() {
        let share = left / (order.len() - k) as f64;
        let give = demand[i].max(0.0).min(share);
        out[i] = give;
        left -= give;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slice(d: u8, mn: u8, mx: u8, demand: &[f64]) -> SliceDemand {
        SliceDemand {
            quota: PrbQuota::new(d, mn, mx).unwrap(),
            ue_demand: demand.to_vec(),
        }
    }

    #[test]
    fn single_slice_uncapped() {
        let a = schedule_cell(160.0, &[slice(5, 20, 100, &[100.0])]).unwrap();
        assert!((a.slice_pct[0] - 62.5).abs() < EPS);
        assert!((a.slice_served[0] - 100.0).abs() < EPS);
    }

    #[test]
    fn single_slice_capped_at_forty() {
        let a = schedule_cell(160.0, &[slice(5, 20, 40, &[100.0])]).unwrap();
        assert!((a.slice_pct[0] - 40.0).abs() < EPS);
        assert!((a.slice_served[0] - 64.0).abs() < EPS);
    }

    #[test]
    fn capping_one_slice_frees_the_other() {
        let a = schedule_cell(160.0, &[slice(5, 20, 30, &[100.0]), slice(5, 20, 100, &[100.0])]).unwrap();
        assert!((a.slice_served[0] - 48.0).abs() < EPS);
        assert!((a.slice_served[1] - 100.0).abs() < EPS);
    }

    #[test]
    fn dedicated_share_is_held_when_idle() {
        let a = schedule_cell(100.0, &[slice(30, 30, 100, &[]), slice(0, 0, 100, &[500.0])]).unwrap();
        assert_eq!(a.slice_pct[0], 30.0);
        assert!((a.slice_served[1] - 70.0).abs() < EPS);
    }

    #[test]
    fn overcommitted_minimums_are_rejected() {
        let err = schedule_cell(100.0, &[slice(0, 60, 100, &[]), slice(0, 60, 100, &[])]).unwrap_err();
        assert_eq!(err, ConfigError::MinOverCommitted(120));
    }

    #[test]
    fn contention_splits_by_shortfall() {
        let a = schedule_cell(100.0, &[slice(0, 0, 100, &[100.0]), slice(0, 0, 100, &[50.0])]).unwrap();
        assert!((a.slice_pct[0] - 200.0 / 3.0).abs() < 1e-6);
        assert!((a.slice_pct[1] - 100.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn water_fill_is_max_min_fair() {
        assert_eq!(water_fill(90.0, &[10.0, 100.0, 100.0]), vec![10.0, 40.0, 40.0]);
        assert_eq!(water_fill(200.0, &[10.0, 20.0]), vec![10.0, 20.0]);
        assert!(water_fill(5.0, &[]).is_empty());
    }
}
