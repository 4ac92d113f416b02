//! Running scenarios: artifacts, assertion checks and the CI suite runner.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use super::record::{CellRow, Recorder, UeRow};
use super::scenario::{AssertionSpec, Scenario, ScenarioError};
use super::{HarnessError, Testbed, Transport};
use crate::sim::{ground_truth_rows, GROUND_TRUTH_HEADER};
use crate::types::{NodeId, TimeMs, XAppId};
use crate::xapp::{KpmPrbLoopXApp, XAppError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("xApp setup: {0}")]
    XApp(#[from] XAppError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("suite directory {0} does not exist")]
    NoSuite(PathBuf),
    #[error("suite directory {0} holds no .toml scenarios")]
    EmptySuite(PathBuf),
}

impl RunError {
    /// True for problems with the input rather than with the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            RunError::Scenario(_) | RunError::XApp(_) | RunError::NoSuite(_) | RunError::EmptySuite(_)
        )
    }
}

/// Overrides applied on top of the scenario file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub transport: Option<Transport>,
    pub seed: Option<u64>,
    /// Where to write artifacts; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssertionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything a run produced.
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub transport: Transport,
    pub duration_ms: TimeMs,
    pub cell_rows: Vec<CellRow>,
    pub ue_rows: Vec<UeRow>,
    pub cell_csv: String,
    pub ue_csv: String,
    pub log_lines: Vec<String>,
    pub ground_truth: Option<String>,
    /// Extra files from xApps, `(name, content)`.
    pub xapp_files: Vec<(String, String)>,
    pub xapp_summaries: Vec<(XAppId, Vec<String>)>,
    pub assertions: Vec<AssertionResult>,
    pub wall_ms: u128,
    pub testbed: Testbed,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn e2agent_log(&self) -> String {
        let mut s = self.log_lines.join("\n");
        s.push('\n');
        s
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("scenario: {}\n", self.name));
        out.push_str(&format!("seed: {}\n", self.seed));
        out.push_str(&format!(
            "transport: {}\n",
            match self.transport {
                Transport::InProc => "inproc",
                Transport::Stream => "stream",
            }
        ));
        out.push_str(&format!("duration_ms: {}\n", self.duration_ms));
        out.push_str(&format!("e2_messages: {}\n", self.log_lines.len()));
        for (id, lines) in &self.xapp_summaries {
            out.push_str(&format!("xapp {id}:\n"));
            for l in lines {
                out.push_str(&format!("  {l}\n"));
            }
        }
        out.push_str("assertions:\n");
        for a in &self.assertions {
            let verdict = if a.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("  {verdict} {}: {}\n", a.name, a.detail));
        }
        out.push_str(&format!("result: {}\n", if self.passed() { "PASS" } else { "FAIL" }));
        out
    }

    /// Writes cell.csv, ue.csv, e2agent.log, summary.txt and any extras.
    pub fn write_to(&self, dir: &Path) -> Result<(), RunError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| RunError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut files = vec![
            ("cell.csv".to_string(), self.cell_csv.clone()),
            ("ue.csv".to_string(), self.ue_csv.clone()),
            ("e2agent.log".to_string(), self.e2agent_log()),
            ("summary.txt".to_string(), self.summary_text()),
        ];
        if let Some(gt) = &self.ground_truth {
            files.push(("ground_truth.csv".to_string(), gt.clone()));
        }
        files.extend(self.xapp_files.iter().cloned());
        for (name, content) in files {
            let path = dir.join(name);
            fs::write(&path, content).map_err(io(&path))?;
        }
        Ok(())
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let src = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario = Scenario::from_toml(&src).map_err(|diag| ScenarioError::Parse {
        path: path.to_path_buf(),
        diag,
    })?;
    let diags = scenario.validate();
    if !diags.is_empty() {
        return Err(ScenarioError::Invalid {
            path: path.to_path_buf(),
            diags,
        });
    }
    Ok(scenario)
}

/// Loads and runs the scenario at `path`.
pub fn run_scenario(path: &Path, opts: &RunOptions) -> Result<RunReport, RunError> {
    let scenario = load_scenario(path)?;
    let fallback = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    execute(&scenario, &fallback, opts)
}

/// Runs an already validated scenario.
pub fn execute(scenario: &Scenario, fallback_name: &str, opts: &RunOptions) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let transport = opts
        .transport
        .or_else(|| scenario.transport().and_then(|t| t.parse().ok()))
        .unwrap_or_default();
    let seed = opts.seed.unwrap_or(scenario.seed);
    let duration = scenario.duration();
    let mut bed = Testbed::new(transport);
    let configs = scenario.node_configs();
    let node_ids: Vec<NodeId> = configs.iter().map(|c| c.node_id.clone()).collect();
    for (i, cfg) in configs.into_iter().enumerate() {
        bed.add_node(cfg, seed.wrapping_add(i as u64))?;
    }
    for x in scenario.build_xapps(&bed.endpoint())? {
        bed.add_xapp(x);
    }
    let mut rec = Recorder::new(scenario.sample_ms, duration, node_ids);
    let mut truth = scenario.ground_truth.then(|| format!("{GROUND_TRUTH_HEADER}\n"));
    // One tick past the end so reports due exactly at `duration` are delivered.
    bed.run_until(duration + 1, |i, tick| {
        rec.push(i, tick);
        if let Some(gt) = truth.as_mut() {
            if tick.t_ms < duration {
                for row in ground_truth_rows(tick) {
                    gt.push_str(&row);
                    gt.push('\n');
                }
            }
        }
    })?;
    rec.finish();

    let log_lines = bed.ric().log_lines().to_vec();
    let mut report = RunReport {
        name: scenario.name.clone().unwrap_or_else(|| fallback_name.to_string()),
        seed,
        transport,
        duration_ms: duration,
        cell_csv: rec.cell_csv(),
        ue_csv: rec.ue_csv(),
        cell_rows: rec.cell_rows().to_vec(),
        ue_rows: rec.ue_rows().to_vec(),
        log_lines,
        ground_truth: truth,
        xapp_files: bed.xapps().iter().flat_map(|x| x.artifacts()).collect(),
        xapp_summaries: bed.xapps().iter().map(|x| (x.id().clone(), x.summary())).collect(),
        assertions: Vec::new(),
        wall_ms: 0,
        testbed: bed,
    };
    let mut results: Vec<AssertionResult> = scenario
        .assertions
        .iter()
        .map(|a| check(&report, scenario.sample_ms, a.get_ref()))
        .collect();
    if !report.testbed.xapp_errors().is_empty() {
        let errs: Vec<String> = report
            .testbed
            .xapp_errors()
            .iter()
            .map(|(t, id, e)| format!("t={t} {id}: {e}"))
            .collect();
        results.push(AssertionResult {
            name: "xapp_errors".into(),
            passed: false,
            detail: errs.join("; "),
        });
    }
    report.assertions = results;
    report.wall_ms = started.elapsed().as_millis();
    if let Some(dir) = &opts.out_dir {
        report.write_to(dir)?;
    }
    Ok(report)
}

fn check(report: &RunReport, sample_ms: TimeMs, a: &AssertionSpec) -> AssertionResult {
    let name = a.name.clone().unwrap_or_else(|| a.kind.clone());
    let (passed, detail) = match a.kind.as_str() {
        "ue_served" => {
            let series = report
                .ue_rows
                .iter()
                .filter(|r| Some(r.node.as_str()) == a.node.as_deref() && Some(r.ue.as_str()) == a.ue.as_deref())
                .map(|r| (r.t_ms, r.served_mbps));
            plateau(series, sample_ms, report.duration_ms, a)
        }
        "slice_served" => {
            let series = report
                .cell_rows
                .iter()
                .filter(|r| {
                    Some(r.node.as_str()) == a.node.as_deref()
                        && Some(r.cell.as_str()) == a.cell.as_deref()
                        && Some(r.slice.sst) == a.sst
                        && Some(r.slice.sd) == a.sd
                })
                .map(|r| (r.t_ms, r.served_mbps));
            plateau(series, sample_ms, report.duration_ms, a)
        }
        "cell_sum" => {
            let sums = node_windows(report, a.node.as_deref(), |_| true);
            let from = a.from_ms.unwrap_or(0);
            let to = a.to_ms.unwrap_or(report.duration_ms);
            let expect = a.expect.unwrap_or(0.0);
            let tol = a.tol.unwrap_or(0.5);
            let windows: Vec<_> = sums
                .iter()
                .filter(|(t, _)| **t >= from && **t + sample_ms <= to)
                .collect();
            let bad: Vec<String> = windows
                .iter()
                .filter(|(_, v)| (*v - expect).abs() > tol)
                .map(|(t, v)| format!("{t}:{v:.3}"))
                .collect();
            let allowed = a.max_violations.unwrap_or(0);
            (
                !windows.is_empty() && bad.len() <= allowed,
                format!(
                    "{} windows, {} off {expect}±{tol} (allowed {allowed}){}",
                    windows.len(),
                    bad.len(),
                    if bad.is_empty() { String::new() } else { format!(": {}", bad.join(" ")) }
                ),
            )
        }
        "control_latency" => control_latency(&report.log_lines, a.node.as_deref().unwrap_or(""), a.expect_ms.unwrap_or(0)),
        "caps" => {
            let id = a.xapp.as_deref().unwrap_or("");
            match report.testbed.xapp::<KpmPrbLoopXApp>(id) {
                None => (false, format!("no kpm_prb_loop xApp {id:?}")),
                Some(x) => {
                    let expect = a.expect_caps.clone().unwrap_or_default();
                    let quiet = a.quiet_until_ms.unwrap_or(0);
                    let early: Vec<&(TimeMs, u8)> = x.actions().iter().filter(|(t, _)| *t < quiet).collect();
                    let caps: Vec<String> = x.issued().iter().map(u8::to_string).collect();
                    (
                        x.issued() == expect.as_slice() && early.is_empty(),
                        format!(
                            "issued [{}], {} before {quiet} ms, outcome {:?}",
                            caps.join(","),
                            early.len(),
                            x.outcome()
                        ),
                    )
                }
            }
        }
        "du_shifts" => {
            let by_du = du_windows(report, a.node.as_deref());
            let mut shifts = 0;
            let mut last: Option<&str> = None;
            let mut trace = Vec::new();
            for (t, dus) in &by_du {
                let Some((du, _)) = dus
                    .iter()
                    .filter(|(_, v)| **v > 1e-9)
                    .max_by(|x, y| x.1.total_cmp(y.1))
                else {
                    continue;
                };
                if last.is_some_and(|l| l != du) {
                    shifts += 1;
                    trace.push(format!("{t}:{du}"));
                }
                last = Some(du);
            }
            let expect = a.count.unwrap_or(0);
            (shifts == expect, format!("{shifts} shifts (expected {expect}) {}", trace.join(" ")))
        }
        other => (false, format!("unknown assertion kind {other:?}")),
    };
    AssertionResult { name, passed, detail }
}

/// Every window fully inside `[from, to)` is within `tol` of `expect`.
fn plateau(
    series: impl Iterator<Item = (TimeMs, f64)>,
    sample_ms: TimeMs,
    duration: TimeMs,
    a: &AssertionSpec,
) -> (bool, String) {
    let from = a.from_ms.unwrap_or(0);
    let to = a.to_ms.unwrap_or(duration);
    let expect = a.expect.unwrap_or(0.0);
    let tol = a.tol.unwrap_or(0.5);
    let windows: Vec<(TimeMs, f64)> = series.filter(|(t, _)| *t >= from && *t + sample_ms <= to).collect();
    if windows.is_empty() {
        return (false, format!("no windows in [{from}, {to})"));
    }
    let worst = windows
        .iter()
        .max_by(|x, y| (x.1 - expect).abs().total_cmp(&(y.1 - expect).abs()))
        .expect("non-empty");
    let ok = (worst.1 - expect).abs() <= tol;
    (
        ok,
        format!(
            "{} windows in [{from}, {to}), expected {expect}±{tol}, worst {:.3} at {}",
            windows.len(),
            worst.1,
            worst.0
        ),
    )
}

/// Total served per window over a node's cells and slices.
fn node_windows(report: &RunReport, node: Option<&str>, keep: impl Fn(&CellRow) -> bool) -> BTreeMap<TimeMs, f64> {
    let mut out = BTreeMap::new();
    for r in report.cell_rows.iter().filter(|r| Some(r.node.as_str()) == node && keep(r)) {
        *out.entry(r.t_ms).or_insert(0.0) += r.served_mbps;
    }
    out
}

fn du_windows(report: &RunReport, node: Option<&str>) -> BTreeMap<TimeMs, BTreeMap<String, f64>> {
    let mut out: BTreeMap<TimeMs, BTreeMap<String, f64>> = BTreeMap::new();
    for r in report.cell_rows.iter().filter(|r| Some(r.node.as_str()) == node) {
        *out.entry(r.t_ms).or_default().entry(r.du.clone()).or_insert(0.0) += r.served_mbps;
    }
    out
}

/// One parsed e2agent.log line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogLine {
    pub t_ms: TimeMs,
    pub node: String,
    pub event: String,
    pub tid: u32,
    pub rf: u16,
    pub cause: Option<String>,
}

impl LogLine {
    pub fn parse(line: &str) -> Option<LogLine> {
        let mut it = line.split_whitespace();
        let t_ms = it.next()?.parse().ok()?;
        let node = it.next()?.to_string();
        let event = it.next()?.to_string();
        let tid = it.next()?.strip_prefix("tid=")?.parse().ok()?;
        let rf = it.next()?.strip_prefix("rf=")?.parse().ok()?;
        let cause = it.next().and_then(|c| c.strip_prefix("cause=")).map(str::to_string);
        Some(LogLine {
            t_ms,
            node,
            event,
            tid,
            rf,
            cause,
        })
    }
}

/// `(request time, response time)` for every control sent to `node`.
pub fn control_round_trips(lines: &[String], node: &str) -> Vec<(u32, TimeMs, Option<TimeMs>)> {
    let parsed: Vec<LogLine> = lines.iter().filter_map(|l| LogLine::parse(l)).filter(|l| l.node == node).collect();
    parsed
        .iter()
        .filter(|l| l.event == "send:ControlRequest")
        .map(|s| {
            let resp = parsed
                .iter()
                .find(|r| r.tid == s.tid && r.t_ms >= s.t_ms && (r.event == "recv:ControlAck" || r.event == "recv:ControlFailure"))
                .map(|r| r.t_ms);
            (s.tid, s.t_ms, resp)
        })
        .collect()
}

fn control_latency(lines: &[String], node: &str, expect_ms: TimeMs) -> (bool, String) {
    let trips = control_round_trips(lines, node);
    if trips.is_empty() {
        return (false, format!("no controls sent to {node}"));
    }
    let bad: Vec<String> = trips
        .iter()
        .filter(|(_, s, r)| r.map(|r| r - s) != Some(expect_ms))
        .map(|(tid, s, r)| match r {
            Some(r) => format!("tid={tid} {}ms", r - s),
            None => format!("tid={tid} unanswered"),
        })
        .collect();
    (
        bad.is_empty(),
        format!(
            "{} controls, expected {expect_ms} ms{}",
            trips.len(),
            if bad.is_empty() { String::new() } else { format!("; off: {}", bad.join(", ")) }
        ),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct CiEntry {
    pub scenario: String,
    pub path: String,
    pub passed: bool,
    pub failures: Vec<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CiSummary {
    pub suite: String,
    pub passed: usize,
    pub failed: usize,
    pub scenarios: Vec<CiEntry>,
}

impl CiSummary {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// Runs every `*.toml` in `suite` (sorted by name). Per-scenario artifacts go
/// to `<out>/<stem>/` and the aggregate to `<out>/summary.json`.
pub fn ci(suite: &Path, opts: &RunOptions) -> Result<CiSummary, RunError> {
    if !suite.is_dir() {
        return Err(RunError::NoSuite(suite.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(suite)
        .map_err(|source| RunError::Io {
            path: suite.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(RunError::EmptySuite(suite.to_path_buf()));
    }
    let mut entries = Vec::new();
    for path in &paths {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let sub = RunOptions {
            out_dir: opts.out_dir.as_ref().map(|d| d.join(&stem)),
            ..opts.clone()
        };
        let entry = match run_scenario(path, &sub) {
            Ok(rep) => CiEntry {
                scenario: rep.name.clone(),
                path: path.display().to_string(),
                passed: rep.passed(),
                failures: rep
                    .assertions
                    .iter()
                    .filter(|a| !a.passed)
                    .map(|a| format!("{}: {}", a.name, a.detail))
                    .collect(),
                error: None,
            },
            Err(e) => CiEntry {
                scenario: stem,
                path: path.display().to_string(),
                passed: false,
                failures: Vec::new(),
                error: Some(e.to_string()),
            },
        };
        entries.push(entry);
    }
    let passed = entries.iter().filter(|e| e.passed).count();
    let summary = CiSummary {
        suite: suite.display().to_string(),
        passed,
        failed: entries.len() - passed,
        scenarios: entries,
    };
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.clone(),
            source,
        })?;
        let path = dir.join("summary.json");
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(&path, json + "\n").map_err(|source| RunError::Io { path, source })?;
    }
    Ok(summary)
}
