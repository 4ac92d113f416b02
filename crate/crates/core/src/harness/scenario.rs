//! Scenario files: TOML schema, validation with line-numbered diagnostics,
//! and construction of node configs and xApps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::kpm::UE_THP_DL;
use crate::rc::PrbQuota;
use crate::ric::RicEndpoint;
use crate::sim::scheduler::check_quotas;
use crate::sim::{
    CellConfig, Flow, NodeConfig, NodeProfile, ProfileName, SliceConfig, Support, Transport,
    UeConfig,
};
use crate::types::{CellId, NodeId, Snssai, SD_MAX, TimeMs, UeId};
use crate::xapp::{ClosedLoopPolicy, HandoverMode, HandoverXApp, KpmPrbLoopXApp, MonitorXApp, PrbControlXApp, XApp, XAppError};

/// One problem found in a scenario file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{diag}")]
    Parse { path: PathBuf, diag: Diagnostic },
    #[error("{path}: {} problem(s)\n{}", .diags.len(), render(.path, .diags))]
    Invalid { path: PathBuf, diags: Vec<Diagnostic> },
}

fn render(path: &Path, diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("{}:{d}", path.display()))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ScenarioError {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            ScenarioError::Io { .. } => Vec::new(),
            ScenarioError::Parse { diag, .. } => vec![diag.clone()],
            ScenarioError::Invalid { diags, .. } => diags.clone(),
        }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_sample() -> TimeMs {
    1000
}

fn default_udp() -> String {
    "udp".into()
}

/// A whole run described as data.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub duration_ms: Spanned<TimeMs>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Width of the cell.csv/ue.csv averaging window.
    #[serde(default = "default_sample")]
    pub sample_ms: TimeMs,
    #[serde(default)]
    pub transport: Option<Spanned<String>>,
    /// Also write the per-tick ground-truth dump.
    #[serde(default)]
    pub ground_truth: bool,
    pub nodes: Vec<Spanned<NodeSpec>>,
    #[serde(default)]
    pub xapps: Vec<Spanned<XAppSpec>>,
    #[serde(default)]
    pub assertions: Vec<Spanned<AssertionSpec>>,
    #[serde(skip)]
    source: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub profile: Spanned<String>,
    #[serde(default)]
    pub reaction_delay_ms: Option<f64>,
    #[serde(default)]
    pub handover_interruption_ms: TimeMs,
    /// Per-capability overrides: `full`, `ack-only` or `none`.
    #[serde(default)]
    pub capabilities: BTreeMap<String, Spanned<String>>,
    pub cells: Vec<Spanned<CellSpec>>,
    #[serde(default)]
    pub ues: Vec<Spanned<UeSpec>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub id: String,
    #[serde(default)]
    pub du: Option<String>,
    pub capacity_mbps: f64,
    pub slices: Vec<Spanned<SliceSpec>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub sst: u8,
    pub sd: u32,
    /// `[dedicated, min, max]` percent.
    pub quota: [u8; 3],
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeSpec {
    pub id: String,
    pub cell: String,
    pub sst: u8,
    pub sd: u32,
    #[serde(default)]
    pub downlink: Vec<FlowSpec>,
    #[serde(default)]
    pub uplink: Vec<FlowSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    #[serde(default)]
    pub start_ms: TimeMs,
    pub duration_ms: TimeMs,
    pub rate_mbps: f64,
    #[serde(default = "default_udp")]
    pub transport: String,
    #[serde(default)]
    pub jitter_pct: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotaStep {
    pub t_ms: TimeMs,
    pub quota: [u8; 3],
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveSpec {
    pub t_ms: TimeMs,
    pub ue: String,
    pub cell: String,
}

/// One xApp; which fields apply depends on `kind`
/// (`monitor`, `prb_control`, `kpm_prb_loop`, `handover`).
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XAppSpec {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub node: Option<String>,
    /// Monitor: nodes to watch (defaults to `node`, else every node).
    #[serde(default)]
    pub nodes: Option<Vec<String>>,
    #[serde(default)]
    pub cell: Option<String>,
    #[serde(default)]
    pub sst: Option<u8>,
    #[serde(default)]
    pub sd: Option<u32>,
    #[serde(default)]
    pub metrics: Option<Vec<String>>,
    #[serde(default)]
    pub period_ms: Option<u32>,
    /// Monitor: CSV file name (default `kpm.csv`).
    #[serde(default)]
    pub csv: Option<String>,
    /// Monitor: also attach an idle RC frame.
    #[serde(default)]
    pub with_rc: bool,
    #[serde(default)]
    pub schedule: Option<Vec<QuotaStep>>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub step_pct: Option<u8>,
    #[serde(default)]
    pub floor_pct: Option<u8>,
    #[serde(default)]
    pub start_quota: Option<[u8; 3]>,
    #[serde(default)]
    pub watch_metric: Option<String>,
    /// Handover: `scripted` (default) or `round_robin`.
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub moves: Option<Vec<MoveSpec>>,
    #[serde(default)]
    pub start_ms: Option<TimeMs>,
    #[serde(default)]
    pub every_ms: Option<TimeMs>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub cells: Option<Vec<String>>,
}

/// One pass/fail check on a run; which fields apply depends on `kind`
/// (`ue_served`, `slice_served`, `cell_sum`, `control_latency`, `caps`,
/// `du_shifts`).
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertionSpec {
    pub kind: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub node: Option<String>,
    #[serde(default)]
    pub ue: Option<String>,
    #[serde(default)]
    pub cell: Option<String>,
    #[serde(default)]
    pub sst: Option<u8>,
    #[serde(default)]
    pub sd: Option<u32>,
    #[serde(default)]
    pub from_ms: Option<TimeMs>,
    #[serde(default)]
    pub to_ms: Option<TimeMs>,
    #[serde(default)]
    pub expect: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_violations: Option<usize>,
    #[serde(default)]
    pub expect_ms: Option<TimeMs>,
    #[serde(default)]
    pub xapp: Option<String>,
    #[serde(default)]
    pub expect_caps: Option<Vec<u8>>,
    /// `caps`: no control may be issued before this time.
    #[serde(default)]
    pub quiet_until_ms: Option<TimeMs>,
    #[serde(default)]
    pub count: Option<usize>,
}

const XAPP_KINDS: [&str; 4] = ["monitor", "prb_control", "kpm_prb_loop", "handover"];
const ASSERTION_KINDS: [&str; 6] = ["ue_served", "slice_served", "cell_sum", "control_latency", "caps", "du_shifts"];
const CAPABILITIES: [&str; 4] = ["kpm", "rbc", "rrac", "cmmc"];

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

struct Diags<'a> {
    src: &'a str,
    out: Vec<Diagnostic>,
}

impl Diags<'_> {
    fn at(&mut self, span: Range<usize>, message: impl Into<String>) {
        let (line, col) = line_col(self.src, span.start);
        self.out.push(Diagnostic {
            line,
            col,
            message: message.into(),
        });
    }
}

impl Scenario {
    pub fn from_toml(src: &str) -> Result<Scenario, Diagnostic> {
        let mut s: Scenario = toml::from_str(src).map_err(|e| {
            let (line, col) = e.span().map_or((1, 1), |sp| line_col(src, sp.start));
            Diagnostic {
                line,
                col,
                message: e.message().trim().to_string(),
            }
        })?;
        s.source = src.to_string();
        Ok(s)
    }

    pub fn duration(&self) -> TimeMs {
        *self.duration_ms.get_ref()
    }

    pub fn transport(&self) -> Option<&str> {
        self.transport.as_ref().map(|t| t.get_ref().as_str())
    }

    /// Every invariant violation, in file order.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Diags {
            src: &self.source,
            out: Vec::new(),
        };
        let duration = self.duration();
        if duration == 0 {
            d.at(self.duration_ms.span(), "duration_ms must be positive");
        }
        if self.sample_ms == 0 {
            d.at(0..0, "sample_ms must be positive");
        }
        if let Some(t) = &self.transport {
            if t.get_ref().parse::<super::Transport>().is_err() {
                d.at(t.span(), format!("unknown transport {:?} (expected inproc or stream)", t.get_ref()));
            }
        }
        if self.nodes.is_empty() {
            d.at(0..0, "scenario defines no nodes");
        }
        let mut node_ids = BTreeSet::new();
        for n in &self.nodes {
            let span = n.span();
            let n = n.get_ref();
            if !node_ids.insert(n.id.as_str()) {
                d.at(span.clone(), format!("duplicate node id {:?}", n.id));
            }
            if n.id.is_empty() {
                d.at(span.clone(), "node id is empty");
            }
            if n.profile.get_ref().parse::<ProfileName>().is_err() {
                d.at(
                    n.profile.span(),
                    format!("unknown profile {:?} (expected oai-like, srsran-like or custom)", n.profile.get_ref()),
                );
            }
            if let Some(delay) = n.reaction_delay_ms {
                if !(delay.is_finite() && delay >= 0.0) {
                    d.at(span.clone(), "reaction_delay_ms must be finite and non-negative");
                }
            }
            for (k, v) in &n.capabilities {
                if !CAPABILITIES.contains(&k.as_str()) {
                    d.at(v.span(), format!("unknown capability {k:?} (expected kpm, rbc, rrac or cmmc)"));
                }
                if v.get_ref().parse::<Support>().is_err() {
                    d.at(v.span(), format!("bad support level {:?} (expected full, ack-only or none)", v.get_ref()));
                }
            }
            self.validate_cells(&mut d, n, span.clone());
            self.validate_ues(&mut d, n, duration);
        }
        let mut xapp_ids = BTreeSet::new();
        for x in &self.xapps {
            if !xapp_ids.insert(x.get_ref().id.as_str()) {
                d.at(x.span(), format!("duplicate xApp id {:?}", x.get_ref().id));
            }
            self.validate_xapp(&mut d, x);
        }
        for a in &self.assertions {
            self.validate_assertion(&mut d, a);
        }
        d.out.sort_by_key(|x| (x.line, x.col));
        d.out
    }

    fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().map(|n| n.get_ref()).find(|n| n.id == id)
    }

    fn validate_cells(&self, d: &mut Diags<'_>, n: &NodeSpec, node_span: Range<usize>) {
        if n.cells.is_empty() {
            d.at(node_span, format!("node {:?} has no cells", n.id));
        }
        let mut cell_ids = BTreeSet::new();
        for c in &n.cells {
            let span = c.span();
            let c = c.get_ref();
            if !cell_ids.insert(c.id.as_str()) {
                d.at(span.clone(), format!("duplicate cell id {:?} in node {:?}", c.id, n.id));
            }
            if !(c.capacity_mbps > 0.0 && c.capacity_mbps.is_finite()) {
                d.at(span.clone(), format!("cell {:?}: capacity_mbps must be positive", c.id));
            }
            let mut seen = BTreeSet::new();
            let mut quotas = Vec::new();
            for s in &c.slices {
                let sspan = s.span();
                let s = s.get_ref();
                if s.sd > SD_MAX {
                    d.at(sspan.clone(), format!("slice sd {} exceeds 24 bits", s.sd));
                    continue;
                }
                if !seen.insert((s.sst, s.sd)) {
                    d.at(sspan.clone(), format!("cell {:?} lists slice {}-{} twice", c.id, s.sst, s.sd));
                }
                let [ded, min, max] = s.quota;
                match PrbQuota::new(ded, min, max) {
                    Ok(q) => quotas.push(q),
                    Err(_) => d.at(
                        sspan.clone(),
                        format!("quota [{ded}, {min}, {max}] must satisfy dedicated <= min <= max <= 100"),
                    ),
                }
            }
            if let Err(e) = check_quotas(&quotas) {
                d.at(span, format!("cell {:?}: {e}", c.id));
            }
        }
    }

    fn validate_ues(&self, d: &mut Diags<'_>, n: &NodeSpec, duration: TimeMs) {
        let mut ue_ids = BTreeSet::new();
        for u in &n.ues {
            let span = u.span();
            let u = u.get_ref();
            if !ue_ids.insert(u.id.as_str()) {
                d.at(span.clone(), format!("duplicate ue id {:?}", u.id));
            }
            match n.cells.iter().map(|c| c.get_ref()).find(|c| c.id == u.cell) {
                None => d.at(span.clone(), format!("ue {:?} references unknown cell {:?}", u.id, u.cell)),
                Some(c) => {
                    if !c.slices.iter().any(|s| s.get_ref().sst == u.sst && s.get_ref().sd == u.sd) {
                        d.at(
                            span.clone(),
                            format!("ue {:?} references unknown slice {}-{} in cell {:?}", u.id, u.sst, u.sd, c.id),
                        );
                    }
                }
            }
            for f in u.downlink.iter().chain(&u.uplink) {
                if !(f.rate_mbps >= 0.0 && f.rate_mbps.is_finite()) {
                    d.at(span.clone(), format!("ue {:?}: flow rate must be non-negative", u.id));
                }
                if !(0.0..=100.0).contains(&f.jitter_pct) {
                    d.at(span.clone(), format!("ue {:?}: jitter_pct must be within 0..=100", u.id));
                }
                if f.transport != "udp" && f.transport != "tcp" {
                    d.at(span.clone(), format!("ue {:?}: flow transport must be udp or tcp", u.id));
                }
                if f.start_ms + f.duration_ms > duration {
                    d.at(
                        span.clone(),
                        format!(
                            "ue {:?}: flow ends at {} ms, after duration_ms {duration}",
                            u.id,
                            f.start_ms + f.duration_ms
                        ),
                    );
                }
            }
        }
    }

    fn has_cell(&self, node: &str, cell: &str) -> bool {
        self.node(node).is_some_and(|n| n.cells.iter().any(|c| c.get_ref().id == cell))
    }

    fn has_slice(&self, node: &str, cell: &str, sst: u8, sd: u32) -> bool {
        self.node(node).is_some_and(|n| {
            n.cells
                .iter()
                .map(|c| c.get_ref())
                .filter(|c| c.id == cell)
                .flat_map(|c| &c.slices)
                .any(|s| s.get_ref().sst == sst && s.get_ref().sd == sd)
        })
    }

    fn has_ue(&self, node: &str, ue: &str) -> bool {
        self.node(node).is_some_and(|n| n.ues.iter().any(|u| u.get_ref().id == ue))
    }

    /// Checks `node`, and `cell`/slice when given, exist; reports at `span`.
    fn check_target(
        &self,
        d: &mut Diags<'_>,
        span: &Range<usize>,
        who: &str,
        node: Option<&String>,
        cell: Option<&String>,
        slice: Option<(u8, u32)>,
    ) -> bool {
        let Some(node) = node else {
            d.at(span.clone(), format!("{who}: missing `node`"));
            return false;
        };
        if self.node(node).is_none() {
            d.at(span.clone(), format!("{who}: unknown node {node:?}"));
            return false;
        }
        if let Some(cell) = cell {
            if !self.has_cell(node, cell) {
                d.at(span.clone(), format!("{who}: unknown cell {cell:?} in node {node:?}"));
                return false;
            }
            if let Some((sst, sd)) = slice {
                if !self.has_slice(node, cell, sst, sd) {
                    d.at(span.clone(), format!("{who}: unknown slice {sst}-{sd} in cell {cell:?}"));
                    return false;
                }
            }
        }
        true
    }

    fn validate_xapp(&self, d: &mut Diags<'_>, x: &Spanned<XAppSpec>) {
        let span = x.span();
        let x = x.get_ref();
        let who = format!("xApp {:?}", x.id);
        let slice = x.sst.zip(x.sd);
        match x.kind.as_str() {
            "monitor" => {
                for n in x.nodes.iter().flatten().chain(&x.node) {
                    if self.node(n).is_none() {
                        d.at(span.clone(), format!("{who}: unknown node {n:?}"));
                    }
                }
                if x.metrics.as_ref().is_some_and(|m| m.is_empty()) {
                    d.at(span.clone(), format!("{who}: metrics list is empty"));
                }
            }
            "prb_control" | "kpm_prb_loop" => {
                if x.cell.is_none() || slice.is_none() {
                    d.at(span.clone(), format!("{who}: needs `cell`, `sst` and `sd`"));
                } else {
                    self.check_target(d, &span, &who, x.node.as_ref(), x.cell.as_ref(), slice);
                }
                if x.kind == "prb_control" {
                    match &x.schedule {
                        None => d.at(span.clone(), format!("{who}: missing `schedule`")),
                        Some(steps) => {
                            for s in steps {
                                let [a, b, c] = s.quota;
                                if PrbQuota::new(a, b, c).is_err() {
                                    d.at(span.clone(), format!("{who}: bad quota [{a}, {b}, {c}] at t_ms {}", s.t_ms));
                                }
                            }
                        }
                    }
                } else if let Err(e) = self.loop_policy(x).and_then(|p| p.validate().map_err(|e| e.to_string())) {
                    d.at(span.clone(), format!("{who}: {e}"));
                }
            }
            "handover" => {
                if !self.check_target(d, &span, &who, x.node.as_ref(), None, None) {
                    return;
                }
                let node = x.node.as_deref().unwrap_or_default();
                match x.mode.as_deref().unwrap_or("scripted") {
                    "scripted" => {
                        for m in x.moves.iter().flatten() {
                            if !self.has_ue(node, &m.ue) {
                                d.at(span.clone(), format!("{who}: unknown ue {:?}", m.ue));
                            }
                            if !self.has_cell(node, &m.cell) {
                                d.at(span.clone(), format!("{who}: unknown cell {:?}", m.cell));
                            }
                        }
                        if x.moves.as_ref().is_none_or(|m| m.is_empty()) {
                            d.at(span.clone(), format!("{who}: scripted mode needs `moves`"));
                        }
                    }
                    "round_robin" => {
                        let cells = x.cells.clone().unwrap_or_default();
                        if cells.len() < 2 {
                            d.at(span.clone(), format!("{who}: round_robin needs at least two `cells`"));
                        }
                        for c in &cells {
                            if !self.has_cell(node, c) {
                                d.at(span.clone(), format!("{who}: unknown cell {c:?}"));
                            }
                        }
                        if x.every_ms.unwrap_or(0) == 0 || x.count.is_none() {
                            d.at(span.clone(), format!("{who}: round_robin needs positive `every_ms` and a `count`"));
                        }
                    }
                    other => d.at(span.clone(), format!("{who}: unknown handover mode {other:?}")),
                }
            }
            other => d.at(
                span,
                format!("{who}: unknown kind {other:?} (expected one of {})", XAPP_KINDS.join(", ")),
            ),
        }
    }

    fn validate_assertion(&self, d: &mut Diags<'_>, a: &Spanned<AssertionSpec>) {
        let span = a.span();
        let a = a.get_ref();
        let who = format!("assertion {:?}", a.name.as_deref().unwrap_or(&a.kind));
        let need_expect = |d: &mut Diags<'_>| {
            if a.expect.is_none() {
                d.at(span.clone(), format!("{who}: missing `expect`"));
            }
        };
        match a.kind.as_str() {
            "ue_served" => {
                if self.check_target(d, &span, &who, a.node.as_ref(), None, None) {
                    match &a.ue {
                        Some(ue) if !self.has_ue(a.node.as_deref().unwrap_or_default(), ue) => {
                            d.at(span.clone(), format!("{who}: unknown ue {ue:?}"))
                        }
                        None => d.at(span.clone(), format!("{who}: missing `ue`")),
                        _ => {}
                    }
                }
                need_expect(d);
            }
            "slice_served" => {
                if a.cell.is_none() || a.sst.is_none() || a.sd.is_none() {
                    d.at(span.clone(), format!("{who}: needs `cell`, `sst` and `sd`"));
                } else {
                    self.check_target(d, &span, &who, a.node.as_ref(), a.cell.as_ref(), a.sst.zip(a.sd));
                }
                need_expect(d);
            }
            "cell_sum" => {
                self.check_target(d, &span, &who, a.node.as_ref(), None, None);
                need_expect(d);
            }
            "control_latency" => {
                self.check_target(d, &span, &who, a.node.as_ref(), None, None);
                if a.expect_ms.is_none() {
                    d.at(span.clone(), format!("{who}: missing `expect_ms`"));
                }
            }
            "caps" => {
                match a.xapp.as_deref() {
                    None => d.at(span.clone(), format!("{who}: missing `xapp`")),
                    Some(id) => {
                        let found = self.xapps.iter().map(|x| x.get_ref()).find(|x| x.id == id);
                        if found.is_none_or(|x| x.kind != "kpm_prb_loop") {
                            d.at(span.clone(), format!("{who}: {id:?} is not a kpm_prb_loop xApp"));
                        }
                    }
                }
                if a.expect_caps.is_none() {
                    d.at(span.clone(), format!("{who}: missing `expect_caps`"));
                }
            }
            "du_shifts" => {
                self.check_target(d, &span, &who, a.node.as_ref(), None, None);
                if a.count.is_none() {
                    d.at(span.clone(), format!("{who}: missing `count`"));
                }
            }
            other => d.at(
                span,
                format!("{who}: unknown kind {other:?} (expected one of {})", ASSERTION_KINDS.join(", ")),
            ),
        }
    }

    fn loop_policy(&self, x: &XAppSpec) -> Result<ClosedLoopPolicy, String> {
        let (Some(node), Some(cell), Some(sst), Some(sd)) = (&x.node, &x.cell, x.sst, x.sd) else {
            return Err("needs `node`, `cell`, `sst` and `sd`".into());
        };
        let mut p = ClosedLoopPolicy::new(node.as_str(), cell.as_str(), Snssai::new(sst, sd.min(SD_MAX)));
        if let Some(t) = x.threshold {
            p.threshold = t;
        }
        if let Some(s) = x.step_pct {
            p.step_pct = s;
        }
        if let Some(f) = x.floor_pct {
            p.floor_pct = f;
        }
        if let Some(m) = &x.watch_metric {
            p.watch_metric = m.clone();
        }
        if let Some(period) = x.period_ms {
            p.period_ms = period;
        }
        let start = match x.start_quota {
            Some(q) => q,
            None => self
                .node(node)
                .and_then(|n| n.cells.iter().map(|c| c.get_ref()).find(|c| &c.id == cell))
                .and_then(|c| c.slices.iter().map(|s| s.get_ref()).find(|s| s.sst == sst && s.sd == sd))
                .map(|s| s.quota)
                .ok_or("unknown target slice")?,
        };
        p.start = PrbQuota::new(start[0], start[1], start[2]).map_err(|e| e.to_string())?;
        Ok(p)
    }

    /// Simulator configs, one per node. Assumes [`validate`](Self::validate) passed.
    pub fn node_configs(&self) -> Vec<NodeConfig> {
        self.nodes
            .iter()
            .map(|n| {
                let n = n.get_ref();
                let name: ProfileName = n.profile.get_ref().parse().unwrap_or(ProfileName::Custom);
                let mut profile = NodeProfile::named(name);
                if let Some(delay) = n.reaction_delay_ms {
                    profile.reaction_delay_ms = delay;
                }
                for (k, v) in &n.capabilities {
                    let support: Support = v.get_ref().parse().unwrap_or(Support::None);
                    match k.as_str() {
                        "kpm" => profile.kpm = support,
                        "rbc" => {
                            profile.rc.insert(crate::rc::RcStyle::Rbc, support);
                        }
                        "rrac" => {
                            profile.rc.insert(crate::rc::RcStyle::Rrac, support);
                        }
                        "cmmc" => {
                            profile.rc.insert(crate::rc::RcStyle::Cmmc, support);
                        }
                        _ => {}
                    }
                }
                NodeConfig {
                    node_id: NodeId::from(n.id.as_str()),
                    profile,
                    cells: n
                        .cells
                        .iter()
                        .map(|c| {
                            let c = c.get_ref();
                            CellConfig {
                                cell_id: CellId::from(c.id.as_str()),
                                du_id: c.du.clone().unwrap_or_else(|| c.id.clone()),
                                capacity_mbps: c.capacity_mbps,
                                slices: c
                                    .slices
                                    .iter()
                                    .map(|s| {
                                        let s = s.get_ref();
                                        let [a, b, m] = s.quota;
                                        SliceConfig {
                                            snssai: Snssai::new(s.sst, s.sd),
                                            quota: PrbQuota {
                                                dedicated_pct: a,
                                                min_pct: b,
                                                max_pct: m,
                                            },
                                        }
                                    })
                                    .collect(),
                            }
                        })
                        .collect(),
                    ues: n
                        .ues
                        .iter()
                        .map(|u| {
                            let u = u.get_ref();
                            let flows = |fs: &[FlowSpec]| {
                                fs.iter()
                                    .map(|f| {
                                        let transport = if f.transport == "tcp" { Transport::Tcp } else { Transport::Udp };
                                        let mut flow = Flow::new(f.start_ms, f.duration_ms, f.rate_mbps, transport);
                                        flow.jitter_pct = f.jitter_pct;
                                        flow
                                    })
                                    .collect()
                            };
                            UeConfig {
                                ue_id: UeId::from(u.id.as_str()),
                                cell_id: CellId::from(u.cell.as_str()),
                                snssai: Snssai::new(u.sst, u.sd),
                                downlink: flows(&u.downlink),
                                uplink: flows(&u.uplink),
                            }
                        })
                        .collect(),
                    handover_interruption_ms: n.handover_interruption_ms,
                }
            })
            .collect()
    }

    /// Instantiates the scenario's xApps against `endpoint`.
    pub fn build_xapps(&self, endpoint: &RicEndpoint) -> Result<Vec<Box<dyn XApp>>, XAppError> {
        let mut out: Vec<Box<dyn XApp>> = Vec::new();
        for x in &self.xapps {
            let x = x.get_ref();
            let slice = x.sst.zip(x.sd).map(|(a, b)| Snssai::new(a, b));
            let node = || NodeId::from(x.node.clone().unwrap_or_default());
            let cell = || CellId::from(x.cell.clone().unwrap_or_default());
            let app: Box<dyn XApp> = match x.kind.as_str() {
                "monitor" => {
                    let nodes: Vec<NodeId> = match (&x.nodes, &x.node) {
                        (Some(ns), _) => ns.iter().map(|n| NodeId::from(n.as_str())).collect(),
                        (None, Some(n)) => vec![NodeId::from(n.as_str())],
                        (None, None) => self.nodes.iter().map(|n| NodeId::from(n.get_ref().id.as_str())).collect(),
                    };
                    let metrics = x.metrics.clone().unwrap_or_else(|| vec![UE_THP_DL.to_string()]);
                    let mut m = MonitorXApp::new(endpoint, x.id.as_str(), nodes, metrics, x.period_ms.unwrap_or(1000), slice)?;
                    if let Some(name) = &x.csv {
                        m = m.with_csv_name(name.clone());
                    }
                    if x.with_rc {
                        m = m.with_rc_frame();
                    }
                    Box::new(m)
                }
                "prb_control" => {
                    let schedule = x
                        .schedule
                        .iter()
                        .flatten()
                        .map(|s| {
                            let [a, b, c] = s.quota;
                            (
                                s.t_ms,
                                PrbQuota {
                                    dedicated_pct: a,
                                    min_pct: b,
                                    max_pct: c,
                                },
                            )
                        })
                        .collect();
                    let slice = slice.ok_or_else(|| XAppError::Invalid("prb_control needs sst/sd".into()))?;
                    Box::new(PrbControlXApp::new(endpoint, x.id.as_str(), node(), cell(), slice, schedule)?)
                }
                "kpm_prb_loop" => {
                    let policy = self.loop_policy(x).map_err(XAppError::Invalid)?;
                    Box::new(KpmPrbLoopXApp::new(endpoint, x.id.as_str(), policy)?)
                }
                "handover" => {
                    let mode = match x.mode.as_deref().unwrap_or("scripted") {
                        "round_robin" => HandoverMode::RoundRobin {
                            start_ms: x.start_ms.unwrap_or(0),
                            every_ms: x.every_ms.unwrap_or(1000),
                            count: x.count.unwrap_or(0),
                            cells: x.cells.iter().flatten().map(|c| CellId::from(c.as_str())).collect(),
                        },
                        _ => HandoverMode::Scripted(
                            x.moves
                                .iter()
                                .flatten()
                                .map(|m| (m.t_ms, UeId::from(m.ue.as_str()), CellId::from(m.cell.as_str())))
                                .collect(),
                        ),
                    };
                    Box::new(HandoverXApp::new(endpoint, x.id.as_str(), node(), mode)?)
                }
                other => return Err(XAppError::Invalid(format!("unknown xApp kind {other:?}"))),
            };
            out.push(app);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
duration_ms = 2000

[[nodes]]
id = "gnb"
profile = "oai-like"

[[nodes.cells]]
id = "c1"
capacity_mbps = 160.0

[[nodes.cells.slices]]
sst = 1
sd = 1
quota = [5, 20, 100]

[[nodes.ues]]
id = "ue1"
cell = "c1"
sst = 1
sd = 1
downlink = [{ duration_ms = 2000, rate_mbps = 100.0 }]
"#;

    #[test]
    fn clean_config_has_no_diagnostics() {
        let s = Scenario::from_toml(BASE).unwrap();
        assert_eq!(s.validate(), vec![]);
        let cfg = &s.node_configs()[0];
        assert_eq!(cfg.cells[0].du_id, "c1");
        assert_eq!(cfg.profile.reaction_ticks(), 5);
    }

    #[test]
    fn overcommitted_minimums_are_located() {
        let src = BASE.replace(
            "quota = [5, 20, 100]",
            "quota = [5, 60, 100]\n\n[[nodes.cells.slices]]\nsst = 1\nsd = 2\nquota = [0, 60, 100]",
        );
        let diags = Scenario::from_toml(&src).unwrap().validate();
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert!(diags[0].message.contains("120"), "{}", diags[0].message);
        assert!(diags[0].line > 1);
    }

    #[test]
    fn dedicated_above_min_is_reported_on_its_line() {
        let src = BASE.replace("quota = [5, 20, 100]", "quota = [30, 20, 100]");
        let diags = Scenario::from_toml(&src).unwrap().validate();
        assert_eq!(diags.len(), 1);
        let line = src.lines().position(|l| l.contains("[30, 20, 100]")).unwrap() + 1;
        assert!(diags[0].line <= line && diags[0].line >= line - 3, "{:?} vs {line}", diags[0]);
    }

    #[test]
    fn unknown_slice_and_node_references() {
        let src = BASE.replace("sst = 1\nsd = 1\ndownlink", "sst = 1\nsd = 9\ndownlink")
            + "\n[[xapps]]\nid = \"x\"\nkind = \"prb_control\"\nnode = \"nope\"\ncell = \"c1\"\nsst = 1\nsd = 1\nschedule = []\n";
        let diags = Scenario::from_toml(&src).unwrap().validate();
        let msgs: Vec<&str> = diags.iter().map(|d| d.message.as_str()).collect();
        assert!(msgs.iter().any(|m| m.contains("unknown slice 1-9")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("unknown node \"nope\"")), "{msgs:?}");
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = Scenario::from_toml("duration_ms = 10\nnodes = [\n").unwrap_err();
        assert!(err.line >= 2, "{err}");
        let err = Scenario::from_toml("duration_ms = 10\nnodes = []\nbogus = 1\n").unwrap_err();
        assert_eq!(err.line, 3, "{err}");
    }

    #[test]
    fn flows_must_fit_the_duration() {
        let src = BASE.replace("duration_ms = 2000, rate", "duration_ms = 3000, rate");
        let diags = Scenario::from_toml(&src).unwrap().validate();
        assert!(diags[0].message.contains("after duration_ms"), "{diags:?}");
    }
}
