mod common;

use common::oracle::{agrees, is_max_min_fair, max_served, OracleSlice};
use e2loop::rc::PrbQuota;
use e2loop::sim::{schedule_cell, SliceDemand};
use proptest::prelude::*;

fn quota() -> impl Strategy<Value = PrbQuota> {
    (0u8..=20, 0u8..=20, 0u8..=20).prop_map(|(a, b, c)| {
        let mut v = [a * 5, b * 5, c * 5];
        v.sort();
        PrbQuota::new(v[0], v[1], v[2]).unwrap()
    })
}

fn slices() -> impl Strategy<Value = Vec<SliceDemand>> {
    prop::collection::vec(
        (quota(), prop::collection::vec(0.0f64..300.0, 0..4)).prop_map(|(quota, ue_demand)| SliceDemand { quota, ue_demand }),
        1..4,
    )
    .prop_filter("minimums fit", |s| s.iter().map(|x| x.quota.min_pct as u32).sum::<u32>() <= 100)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn conservation(cap in 10.0f64..400.0, s in slices()) {
        let a = schedule_cell(cap, &s).unwrap();
        prop_assert!(a.slice_pct.iter().sum::<f64>() <= 100.0 + 1e-9);
        let ue_total: f64 = a.ue_served.iter().flatten().sum();
        prop_assert!(ue_total <= cap + 1e-9);
        for (i, sl) in s.iter().enumerate() {
            prop_assert!(a.slice_pct[i] + 1e-9 >= sl.quota.dedicated_pct as f64);
            prop_assert!(a.slice_pct[i] <= (sl.quota.max_pct.max(sl.quota.min_pct)) as f64 + 1e-9);
            prop_assert!(a.slice_served[i] <= sl.total() + 1e-9);
            for (&srv, &d) in a.ue_served[i].iter().zip(&sl.ue_demand) {
                prop_assert!(srv <= d + 1e-9);
            }
        }
    }

    #[test]
    fn lowering_max_never_raises_served(cap in 10.0f64..400.0, s in slices(), idx in 0usize..3, cut in 1u8..=20) {
        let idx = idx % s.len();
        let base = schedule_cell(cap, &s).unwrap();
        let mut lowered = s.clone();
        let q = &mut lowered[idx].quota;
        q.max_pct = q.max_pct.saturating_sub(cut * 5).max(q.min_pct);
        let after = schedule_cell(cap, &lowered).unwrap();
        prop_assert!(after.slice_served[idx] <= base.slice_served[idx] + 1e-9);
    }

    #[test]
    fn ue_split_is_max_min_fair(cap in 10.0f64..400.0, s in slices()) {
        let a = schedule_cell(cap, &s).unwrap();
        for (i, sl) in s.iter().enumerate() {
            if let Err(e) = is_max_min_fair(a.slice_served[i], &sl.ue_demand, &a.ue_served[i]) {
                return Err(TestCaseError::fail(e));
            }
        }
    }

    #[test]
    fn matches_oracle_on_random_instances(cap in 50.0f64..300.0, s in slices()) {
        let a = schedule_cell(cap, &s).unwrap();
        let o: Vec<OracleSlice> = s.iter().map(|x| OracleSlice { quota: x.quota, demand: x.total() }).collect();
        if let Err(e) = agrees(cap, &o, &a.slice_pct) {
            return Err(TestCaseError::fail(e));
        }
    }

    /// Spare PRBs go to contending slices in proportion to their shortfall:
    /// every slice below its ceiling ends at the same fraction of the way
    /// from its floor to its ceiling.
    #[test]
    fn spare_share_is_proportional(cap in 10.0f64..400.0, s in slices()) {
        let a = schedule_cell(cap, &s).unwrap();
        let mut fractions = Vec::new();
        for (sl, &pct) in s.iter().zip(&a.slice_pct) {
            let need = 100.0 * sl.total() / cap;
            let floor = (sl.quota.dedicated_pct as f64).max(need.min(sl.quota.min_pct as f64));
            let ceil = need.min(sl.quota.max_pct as f64);
            if ceil - floor > 1e-6 {
                fractions.push((pct - floor) / (ceil - floor));
            }
        }
        if let (Some(lo), Some(hi)) = (
            fractions.iter().copied().reduce(f64::min),
            fractions.iter().copied().reduce(f64::max),
        ) {
            prop_assert!(hi - lo < 1e-9, "fractions {:?}", fractions);
        }
    }
}

fn one(q: (u8, u8, u8), demand: f64) -> OracleSlice {
    OracleSlice { quota: PrbQuota::new(q.0, q.1, q.2).unwrap(), demand }
}

#[test]
fn oracle_reproduces_hand_examples() {
    assert!((max_served(160.0, &[one((5, 20, 100), 100.0)]).unwrap() - 100.0).abs() < 1e-9);
    assert!((max_served(160.0, &[one((5, 20, 40), 100.0)]).unwrap() - 64.0).abs() < 1e-9);
    let two = [one((5, 20, 30), 100.0), one((5, 20, 100), 100.0)];
    assert!((max_served(160.0, &two).unwrap() - 148.0).abs() < 1e-9);
    agrees(160.0, &two, &[30.0, 62.5]).unwrap();
    assert!(agrees(160.0, &two, &[30.0, 50.0]).is_err());
    assert!(agrees(160.0, &two, &[31.0, 62.5]).is_err());
}

#[test]
fn exhaustive_grid_agrees_with_oracle() {
    let grid = common::oracle::exhaustive_grid();
    let start = std::time::Instant::now();
    for (cap, spec) in &grid {
        let s: Vec<SliceDemand> = spec
            .iter()
            .map(|(q, d)| SliceDemand { quota: *q, ue_demand: d.clone() })
            .collect();
        let a = schedule_cell(*cap, &s).unwrap();
        let o: Vec<OracleSlice> = s.iter().map(|x| OracleSlice { quota: x.quota, demand: x.total() }).collect();
        agrees(*cap, &o, &a.slice_pct).unwrap_or_else(|e| panic!("cap {cap} {spec:?}: {e}"));
        for (i, sl) in s.iter().enumerate() {
            is_max_min_fair(a.slice_served[i], &sl.ue_demand, &a.ue_served[i]).unwrap();
        }
    }
    eprintln!("{} instances in {:?}", grid.len(), start.elapsed());
}
