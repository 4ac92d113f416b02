//! Brute-force reference for the slice scheduler.
//!
//! Each slice's allocation ranges over a 0.5% grid from its floor
//! (`max(dedicated, min(min, need))`) up to `max_pct`, with the total
//! capped at 100%. The oracle finds the largest total served rate on that
//! grid. How spare PRBs are split between slices that tie on served rate is
//! a scheduler policy, checked separately.

use e2loop::rc::PrbQuota;

pub const STEP: f64 = 0.5;
const EPS: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct OracleSlice {
    pub quota: PrbQuota,
    pub demand: f64,
}

struct Prepared {
    lo: f64,
    hi: f64,
    need: f64,
}

fn prepare(capacity: f64, s: &OracleSlice) -> Prepared {
    let need = 100.0 * s.demand / capacity;
    let lo = (s.quota.dedicated_pct as f64).max(need.min(s.quota.min_pct as f64));
    Prepared {
        lo,
        hi: (s.quota.max_pct as f64).max(lo),
        need,
    }
}

fn grid(p: &Prepared) -> Vec<f64> {
    let steps = ((p.hi - p.lo) / STEP + EPS).floor() as usize;
    (0..=steps).map(|k| p.lo + k as f64 * STEP).collect()
}

fn served(ps: &[Prepared], alloc: &[f64], capacity: f64) -> f64 {
    ps.iter().zip(alloc).map(|(p, &a)| capacity / 100.0 * p.need.min(a)).sum()
}

fn feasible(ps: &[Prepared], alloc: &[f64]) -> bool {
    alloc.iter().sum::<f64>() <= 100.0 + EPS
        && ps.iter().zip(alloc).all(|(p, &a)| a >= p.lo - EPS && a <= p.hi + EPS)
}

/// Largest served total over the grid, for up to three slices. `None` if
/// the floors alone exceed 100%.
pub fn max_served(capacity: f64, slices: &[OracleSlice]) -> Option<f64> {
    let ps: Vec<Prepared> = slices.iter().map(|s| prepare(capacity, s)).collect();
    if ps.iter().map(|p| p.lo).sum::<f64>() > 100.0 + EPS {
        return None;
    }
    let n = ps.len();
    assert!(n <= 3, "oracle handles at most three slices");
    if n == 0 {
        return Some(0.0);
    }
    let grids: Vec<Vec<f64>> = ps.iter().map(grid).collect();
    // Served rate never decreases with allocation, so for fixed leading
    // slices the last one is best at the largest grid point that fits.
    let last = &grids[n - 1];
    let lo_last = ps[n - 1].lo;
    let pick_last = |used: f64| {
        let room = 100.0 - used - lo_last;
        (room >= -EPS).then(|| last[(((room / STEP) + EPS).floor().max(0.0) as usize).min(last.len() - 1)])
    };
    let rate = |p: &Prepared, a: f64| capacity / 100.0 * p.need.min(a);
    let mut best = f64::NEG_INFINITY;
    match n {
        1 => {
            if let Some(a) = pick_last(0.0) {
                best = rate(&ps[0], a);
            }
        }
        2 => {
            for &a in &grids[0] {
                if let Some(b) = pick_last(a) {
                    best = best.max(rate(&ps[0], a) + rate(&ps[1], b));
                }
            }
        }
        _ => {
            for &a in &grids[0] {
                let ra = rate(&ps[0], a);
                for &b in &grids[1] {
                    if a + b > 100.0 + EPS {
                        break;
                    }
                    if let Some(c) = pick_last(a + b) {
                        best = best.max(ra + rate(&ps[1], b) + rate(&ps[2], c));
                    }
                }
            }
        }
    }
    Some(best)
}

/// Checks a continuous allocation against the grid optimum: it must be
/// feasible, serve at least the grid maximum, and lie within one grid step
/// per slice of a feasible grid point whose served total is optimal up to
/// the grid's own resolution.
pub fn agrees(capacity: f64, slices: &[OracleSlice], alloc: &[f64]) -> Result<(), String> {
    let ps: Vec<Prepared> = slices.iter().map(|s| prepare(capacity, s)).collect();
    let best = max_served(capacity, slices).ok_or("oracle: infeasible instance")?;
    if !feasible(&ps, alloc) {
        return Err(format!("allocation {alloc:?} violates the constraints"));
    }
    let got = served(&ps, alloc, capacity);
    if got < best - 1e-6 {
        return Err(format!("serves {got}, grid optimum {best}"));
    }
    let tol = ps.len() as f64 * STEP * capacity / 100.0 + 1e-6;
    let near: Vec<Vec<f64>> = ps
        .iter()
        .zip(alloc)
        .map(|(p, &a)| grid(p).into_iter().filter(|g| (g - a).abs() <= STEP + EPS).collect())
        .collect();
    let mut found = false;
    let mut point = vec![0.0; ps.len()];
    fn walk(i: usize, near: &[Vec<f64>], point: &mut Vec<f64>, f: &mut dyn FnMut(&[f64])) {
        if i == near.len() {
            f(point);
            return;
        }
        for &g in &near[i] {
            point[i] = g;
            walk(i + 1, near, point, f);
        }
    }
    walk(0, &near, &mut point, &mut |p: &[f64]| {
        if feasible(&ps, p) && served(&ps, p, capacity) >= best - tol {
            found = true;
        }
    });
    if found {
        Ok(())
    } else {
        Err(format!("no served-optimal grid point within {STEP}% of {alloc:?}"))
    }
}

/// Checks that `served` is a max-min fair split of `budget` over `demand`:
/// nothing exceeds demand, the budget is used up to total demand, and any
/// UE left short receives at least as much as every other UE.
pub fn is_max_min_fair(budget: f64, demand: &[f64], served: &[f64]) -> Result<(), String> {
    const TOL: f64 = 1e-6;
    let total: f64 = served.iter().sum();
    let want = budget.min(demand.iter().sum());
    if (total - want).abs() > TOL {
        return Err(format!("served {total} but should use {want}"));
    }
    for (i, (&s, &d)) in served.iter().zip(demand).enumerate() {
        if s > d + TOL || s < -TOL {
            return Err(format!("ue {i} served {s} of demand {d}"));
        }
        if s < d - TOL {
            if let Some(j) = served.iter().position(|&o| o > s + TOL) {
                return Err(format!("ue {i} short at {s} while ue {j} gets {}", served[j]));
            }
        }
    }
    Ok(())
}

/// One exhaustive-grid instance: capacity and per-slice (quota, UE demands).
pub type Instance = (f64, Vec<(PrbQuota, Vec<f64>)>);

/// Every combination of 1–3 slices drawn from fixed quota triples (5% steps)
/// and UE demand patterns (0–3 UEs), on two cell capacities. Instances whose
/// minimums exceed 100% are skipped.
pub fn exhaustive_grid() -> Vec<Instance> {
    let quotas: Vec<PrbQuota> = [(0, 0, 100), (5, 20, 100), (5, 20, 40), (10, 30, 60), (0, 15, 30), (25, 50, 50)]
        .into_iter()
        .map(|(d, mn, mx)| PrbQuota::new(d, mn, mx).unwrap())
        .collect();
    let patterns: Vec<Vec<f64>> = vec![vec![], vec![30.0], vec![100.0], vec![10.0, 80.0], vec![40.0, 40.0, 200.0]];
    let kinds: Vec<(PrbQuota, Vec<f64>)> = quotas
        .iter()
        .flat_map(|q| patterns.iter().map(move |p| (*q, p.clone())))
        .collect();
    let mut out = Vec::new();
    for cap in [100.0, 160.0] {
        for a in &kinds {
            out.push((cap, vec![a.clone()]));
            for b in &kinds {
                out.push((cap, vec![a.clone(), b.clone()]));
                for c in &kinds {
                    out.push((cap, vec![a.clone(), b.clone(), c.clone()]));
                }
            }
        }
    }
    out.retain(|(_, s)| s.iter().map(|(q, _)| q.min_pct as u32).sum::<u32>() <= 100);
    out
}
