//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::fixtures::{run, slice, two_cells};
use common::gen;
use common::oracle::{agrees, exhaustive_grid, OracleSlice};
use e2loop::codec::{decode_frame, encode_frame};
use e2loop::e2ap::Cause;
use e2loop::harness::{control_round_trips, execute, load_scenario, run_scenario, RunOptions, RunReport, Scenario};
use e2loop::kpm::{build_kpm_action, build_kpm_report, decode_kpm_action, decode_kpm_report, KPM_RAN_FUNCTION_ID, UE_THP_DL};
use e2loop::rc::{decode_rc_control, encode_rc_control, QosFlowMapParams, RcStyle};
use e2loop::sim::{schedule_cell, NodeProfile, ProfileName, SliceDemand, Support};
use e2loop::types::TimeMs;
use e2loop::xapp::{HandoverXApp, KpmPrbLoopXApp, LoopOutcome, XAppBase, XAppEvent};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn load(name: &str) -> Result<Scenario, String> {
    load_scenario(&scenario_path(name)).map_err(|e| e.to_string())
}

fn run_file(name: &str, ground_truth: bool) -> Result<(RunReport, Duration), String> {
    let mut s = load(name)?;
    s.ground_truth = ground_truth;
    let start = Instant::now();
    let rep = execute(&s, name, &RunOptions::default()).map_err(|e| e.to_string())?;
    Ok((rep, start.elapsed()))
}

/// Served rate of `ue` for every window fully inside `[from, to)`.
fn ue_windows(rep: &RunReport, ue: &str, from: TimeMs, to: TimeMs) -> Vec<(TimeMs, f64)> {
    rep.ue_rows
        .iter()
        .filter(|r| r.ue.as_str() == ue && r.t_ms >= from && r.t_ms + 1000 <= to)
        .map(|r| (r.t_ms, r.served_mbps))
        .collect()
}

fn all_exactly(windows: &[(TimeMs, f64)], expect: f64, what: &str) -> Result<(), String> {
    ensure!(!windows.is_empty(), "{what}: no windows");
    if let Some((t, v)) = windows.iter().find(|(_, v)| *v != expect) {
        return Err(format!("{what}: {v} at {t}, expected exactly {expect}"));
    }
    Ok(())
}

/// Cap/restore: plateaus and enforcement delay on both profiles.
fn fig6a() -> Outcome {
    let mut details = Vec::new();
    // Reaction delays 4.5 ms and 7.0 ms, rounded up to whole ticks.
    for (file, node, delay_ms) in [("fig6a.toml", "gnb-oai", 4.5f64), ("fig6a-srsran.toml", "gnb-srs", 7.0)] {
        let ticks = delay_ms.ceil() as TimeMs;
        let (rep, wall) = run_file(file, true)?;
        ensure!(wall < Duration::from_secs(5), "{file}: took {wall:?}");
        all_exactly(&ue_windows(&rep, "ue1", 0, 20_000), 100.0, "before cap")?;
        all_exactly(&ue_windows(&rep, "ue1", 21_000, 40_000), 64.0, "capped")?;
        all_exactly(&ue_windows(&rep, "ue1", 41_000, 60_000), 100.0, "restored")?;

        let trips = control_round_trips(&rep.log_lines, node);
        let expected = vec![(20_000, Some(20_000 + ticks)), (40_000, Some(40_000 + ticks))];
        let got: Vec<(TimeMs, Option<TimeMs>)> = trips.iter().map(|(_, s, r)| (*s, *r)).collect();
        ensure!(got == expected, "{file}: e2agent.log control/ack times {got:?}, expected {expected:?}");

        // The per-tick ground truth must switch exactly at the ack tick.
        let gt = rep.ground_truth.as_deref().ok_or("no ground truth")?;
        let switch = |from: TimeMs, pred: &dyn Fn(f64) -> bool| {
            gt.lines().skip(1).find_map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                let t: TimeMs = f[0].parse().ok()?;
                let served: f64 = f[5].parse().ok()?;
                (t >= from && pred(served)).then_some(t)
            })
        };
        let capped_at = switch(20_000, &|v| v < 100.0);
        let restored_at = switch(40_000, &|v| v > 64.0);
        ensure!(
            capped_at == Some(20_000 + ticks) && restored_at == Some(40_000 + ticks),
            "{file}: scheduler switched at {capped_at:?}/{restored_at:?}"
        );
        details.push(format!("{node} +{ticks} ms in {:.0?}", wall));
    }
    Ok(format!("plateaus 100/64/100 exact; enforcement {}", details.join(", ")))
}

/// Two slices: capping slice 1 to 30% gives (48, 100).
fn fig6b() -> Outcome {
    let (rep, _) = run_file("fig6b.toml", false)?;
    let served = |sd: u32| -> Vec<(TimeMs, f64)> {
        rep.cell_rows
            .iter()
            .filter(|r| r.slice.sd == sd && r.t_ms >= 11_000)
            .map(|r| (r.t_ms, r.served_mbps))
            .collect()
    };
    all_exactly(&served(1), 48.0, "slice 1-1")?;
    all_exactly(&served(2), 100.0, "slice 1-2")?;
    Ok(format!("(48, 100) over {} windows", served(1).len()))
}

/// Closed loop staircase.
fn fig7() -> Outcome {
    let (rep, _) = run_file("fig7.toml", false)?;
    let x = rep.testbed.xapp::<KpmPrbLoopXApp>("loop").ok_or("loop xApp missing")?;

    // Independent model: 160 Mbps cell, 100 Mbps offered, 5% steps while the
    // capped rate is still above 50 Mbps.
    let served = |cap: u32| (1.6 * cap as f64).min(100.0);
    let mut expected = Vec::new();
    let mut cap = 100;
    while served(cap) > 50.0 {
        cap -= 5;
        expected.push(cap as u8);
    }
    ensure!(x.issued() == expected.as_slice(), "caps {:?}, expected {expected:?}", x.issued());
    ensure!(x.outcome() == Some(LoopOutcome::Converged { max_pct: 30 }), "outcome {:?}", x.outcome());

    let first_high = x.measurements().iter().find(|(_, v)| *v > 50.0).map(|(t, _)| *t);
    let times: Vec<TimeMs> = x.actions().iter().map(|(t, _)| *t).collect();
    ensure!(times.first().copied() == first_high, "first action {:?}, first window above 50 at {first_high:?}", times.first());
    ensure!(times.windows(2).all(|w| w[1] == w[0] + 1000), "actions not one per report window: {times:?}");
    ensure!(times.iter().all(|t| *t > 10_000), "action during the 10 Mbps phase: {times:?}");
    let low_phase: Vec<_> = ue_windows(&rep, "ue1", 0, 10_000);
    all_exactly(&low_phase, 10.0, "10 Mbps phase")?;
    let last = rep.ue_rows.last().ok_or("no ue rows")?;
    ensure!(last.served_mbps == 48.0, "final served {}", last.served_mbps);
    Ok(format!(
        "caps {}..{} ({} steps) from t={} ms, final 48 Mbps",
        expected[0],
        expected[expected.len() - 1],
        expected.len(),
        times[0]
    ))
}

/// Handover between DUs.
fn fig8() -> Outcome {
    let (rep, _) = run_file("fig8.toml", false)?;
    let ho = rep.testbed.xapp::<HandoverXApp>("ho").ok_or("handover xApp missing")?;
    let moves = ho.moves();
    ensure!(moves.len() == 3 && moves.iter().all(|m| m.4 == Some(Ok(()))), "moves {moves:?}");
    let ho_windows: Vec<TimeMs> = moves.iter().map(|m| m.0 / 1000 * 1000).collect();

    let mut by_window: BTreeMap<TimeMs, BTreeMap<String, f64>> = BTreeMap::new();
    for r in &rep.cell_rows {
        *by_window.entry(r.t_ms).or_default().entry(r.du.clone()).or_default() += r.served_mbps;
    }
    let mut off = Vec::new();
    let mut shifts = 0;
    let mut serving: Option<String> = None;
    for (t, dus) in &by_window {
        let total: f64 = dus.values().sum();
        if (total - 50.0).abs() > 1e-9 {
            ensure!(ho_windows.contains(t), "sum {total} at {t}, not a handover window");
            off.push(*t);
        }
        if !ho_windows.contains(t) {
            let active: Vec<&String> = dus.iter().filter(|(_, v)| **v > 0.0).map(|(d, _)| d).collect();
            ensure!(active.len() == 1, "traffic split across {active:?} at {t}");
            if serving.as_ref().is_some_and(|s| s != active[0]) {
                shifts += 1;
            }
            serving = Some(active[0].clone());
        }
    }
    ensure!(shifts == 3, "{shifts} DU shifts");
    for w in &ho_windows {
        ensure!(off.iter().filter(|t| *t == w).count() <= 1, "more than one bad window at {w}");
    }
    Ok(format!(
        "3 full DU shifts, Σ=50 in {}/{} windows",
        by_window.len() - off.len(),
        by_window.len()
    ))
}

/// What a node actually did with one capability probe.
fn observe(profile: ProfileName, probe: usize) -> Result<Support, String> {
    let mut bed = common::fixtures::testbed(vec![two_cells("gnb", profile, 50.0, 10_000)]);
    let mut x = XAppBase::new(&bed.endpoint(), "probe").map_err(|e| e.to_string())?;
    let node = "gnb".into();
    if probe == 0 {
        x.attach_kpm();
        x.kpm().unwrap().subscribe(&node, &[UE_THP_DL], 100, None).map_err(|e| e.to_string())?;
        run(&mut bed, 10);
        return match x.poll().as_slice() {
            [XAppEvent::Subscribed { result: Ok(_), .. }] => Ok(Support::Full),
            [XAppEvent::Subscribed { result: Err(Cause::Unsupported | Cause::UnknownFunction), .. }] => Ok(Support::None),
            other => Err(format!("unexpected {other:?}")),
        };
    }
    let style = [RcStyle::Rbc, RcStyle::Rrac, RcStyle::Cmmc][probe - 1];
    x.attach_rc(style);
    let before = bed.node(0).unwrap().state_hash();
    let mut rc = x.rc().unwrap();
    let sent = match style {
        RcStyle::Rbc => rc.send_qos_flow_map(
            &node,
            &"ue1".into(),
            QosFlowMapParams {
                drb_id: 1,
                five_qi: 9,
                priority: 1,
            },
        ),
        RcStyle::Rrac => rc.send_prb_quota(&node, &"c1".into(), slice(), 5, 20, 40),
        RcStyle::Cmmc => rc.send_handover(&node, &"ue1".into(), &"c2".into()),
    };
    sent.map_err(|e| e.to_string())?;
    run(&mut bed, 20);
    let changed = bed.node(0).unwrap().state_hash() != before;
    match x.poll().as_slice() {
        [XAppEvent::Control { result: Ok(()), .. }] => Ok(if changed { Support::Full } else { Support::AckOnly }),
        [XAppEvent::Control { result: Err(Cause::Unsupported), .. }] if !changed => Ok(Support::None),
        other => Err(format!("unexpected {other:?} (state changed: {changed})")),
    }
}

/// Capability matrix: profiles × {KPM subscribe, RBC, RRAC, CMMC}.
fn table_i() -> Outcome {
    use Support::{AckOnly as P, Full as Y, None as N};
    // Customised OAI, srsRAN and stock OAI stacks.
    let expected_rows = [
        (ProfileName::OaiLike, [Y, P, Y, Y]),
        (ProfileName::SrsranLike, [Y, N, Y, Y]),
        (ProfileName::Custom, [Y, P, N, N]),
    ];
    let sym = |s: Support| match s {
        Support::Full => "Y",
        Support::AckOnly => "P",
        Support::None => "-",
    };
    let mut rows = Vec::new();
    for (name, row) in expected_rows {
        let p = NodeProfile::named(name);
        let encoded = [p.kpm, p.rc[&RcStyle::Rbc], p.rc[&RcStyle::Rrac], p.rc[&RcStyle::Cmmc]];
        ensure!(encoded == row, "{name:?} profile encodes {encoded:?}, table has {row:?}");
        let mut seen = Vec::new();
        for (probe, want) in row.iter().enumerate() {
            let got = observe(name, probe)?;
            ensure!(got == *want, "{name:?} probe {probe}: observed {got:?}, expected {want:?}");
            seen.push(sym(got));
        }
        rows.push(format!("{}[{}]", name.as_str(), seen.join("")));
    }
    Ok(format!("12/12 cells match (KPM,RBC,RRAC,CMMC): {}", rows.join(" ")))
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

/// Codec round trips and decoder totality.
fn codec() -> Outcome {
    const N: u32 = 10_000;
    runner(N)
        .run(&gen::envelope(), |env| {
            prop_assert_eq!(decode_frame(&encode_frame(&env).unwrap()).unwrap(), env);
            Ok(())
        })
        .map_err(|e| format!("{}: {e}", "envelope"))?;
    runner(N)
        .run(&gen::kpm_action(), |def| {
            prop_assert_eq!(decode_kpm_action(&build_kpm_action(&def).unwrap()).unwrap(), def);
            Ok(())
        })
        .map_err(|e| format!("{}: {e}", "KPM action"))?;
    runner(N)
        .run(&gen::kpm_report(), |rep| {
            let (h, m) = build_kpm_report(&rep).unwrap();
            let back = decode_kpm_report(&h, &m).unwrap();
            let bits = |r: &e2loop::kpm::KpmReport| -> Vec<u64> {
                r.records.iter().flat_map(|x| x.values.iter().map(|v| v.to_bits())).collect()
            };
            prop_assert_eq!(bits(&back), bits(&rep));
            prop_assert_eq!(back, rep);
            Ok(())
        })
        .map_err(|e| format!("{}: {e}", "KPM report"))?;
    runner(N)
        .run(&gen::rc_action(), |a| {
            let (h, m) = encode_rc_control(&a).unwrap();
            prop_assert_eq!(decode_rc_control(&h, &m).unwrap(), a);
            Ok(())
        })
        .map_err(|e| format!("{}: {e}", "RC control"))?;
    let fuzzed = 100_000;
    let rejected = common::fuzz::fuzz_decoders(fuzzed, 0xE2);
    Ok(format!(
        "{} generated round trips bit-exact; {fuzzed} fuzzed inputs decoded without panic ({rejected} frames rejected)",
        4 * N
    ))
}

/// Scheduler against the brute-force oracle on the exhaustive grid.
fn scheduler() -> Outcome {
    let start = Instant::now();
    let grid = exhaustive_grid();
    for (cap, spec) in &grid {
        let slices: Vec<SliceDemand> = spec
            .iter()
            .map(|(q, d)| SliceDemand {
                quota: *q,
                ue_demand: d.clone(),
            })
            .collect();
        let alloc = schedule_cell(*cap, &slices).map_err(|e| e.to_string())?;
        let oracle: Vec<OracleSlice> = slices
            .iter()
            .map(|s| OracleSlice {
                quota: s.quota,
                demand: s.total(),
            })
            .collect();
        agrees(*cap, &oracle, &alloc.slice_pct).map_err(|e| format!("cap {cap} {spec:?}: {e}"))?;
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(60), "took {took:?}");
    Ok(format!("{} instances agree within 0.5% in {took:.1?}", grid.len()))
}

/// Exhaustive phase × event legality.
fn state_machine() -> Outcome {
    let bad = common::legality::check_table();
    ensure!(bad.is_empty(), "{}", bad.join("; "));
    let cells = common::legality::TABLE.len() * common::legality::events().len();
    Ok(format!("{cells} (phase, event) cells match the table"))
}

/// Two seeded runs of the closed-loop scenario write identical CSVs.
fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for d in &dirs {
        let opts = RunOptions {
            seed: Some(1),
            out_dir: Some(d.path().to_path_buf()),
            ..RunOptions::default()
        };
        run_scenario(&scenario_path("fig7.toml"), &opts).map_err(|e| e.to_string())?;
    }
    let mut bytes = 0;
    for f in ["cell.csv", "ue.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| e.to_string())?;
        ensure!(a == b, "{f} differs between runs");
        bytes += a.len();
    }
    Ok(format!("cell.csv and ue.csv byte-identical ({bytes} bytes)"))
}

/// RAN function listing of an oai-like node.
fn listing() -> Outcome {
    const EXPECTED: &str = "{0: [], 1: [], 2: [], 3: ['DRB.PdcpSduVolumeDL', 'DRB.PdcpSduVolumeUL', \
                             'DRB.RlcSduDelayDl', 'DRB.UEThpDl', 'DRB.UEThpUl', 'RRU.PrbTotDl', 'RRU.PrbTotUl'], 4: []}";
    let bed = common::fixtures::testbed(vec![common::fixtures::single_cell("gnb", ProfileName::OaiLike, 10.0, 100)]);
    let listing = bed.ric().list_ran_functions(&"gnb".into()).map_err(|e| e.to_string())?;
    let kpm = listing.kpm.get(&KPM_RAN_FUNCTION_ID).ok_or("no KPM function")?.to_string();
    ensure!(kpm == EXPECTED, "rendered {kpm}");
    Ok(format!("rendered verbatim: {kpm}"))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("cap/restore plateaus and enforcement delay", fig6a),
        ("two-slice cap", fig6b),
        ("closed-loop staircase", fig7),
        ("handover between DUs", fig8),
        ("capability matrix", table_i),
        ("codec round trips and fuzzing", codec),
        ("scheduler oracle grid", scheduler),
        ("protocol legality table", state_machine),
        ("seeded determinism", determinism),
        ("RAN function listing", listing),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{took:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
