//! The four reference xApps: a KPM monitor, a scripted PRB capper, the
//! KPM→PRB closed loop, and a handover driver.

use std::any::Any;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use super::{ClosedLoop, ClosedLoopPolicy, LoopOutcome, LoopStep, ReqId, XApp, XAppBase, XAppError, XAppEvent};
use crate::e2ap::Cause;
use crate::kpm::KpmReport;
use crate::rc::{PrbQuota, RcStyle};
use crate::ric::RicEndpoint;
use crate::types::{CellId, NodeId, Snssai, TimeMs, UeId, XAppId};

/// How a control request ended; `None` while still in flight.
pub type Outcome = Option<Result<(), Cause>>;

/// Header of the monitor xApp's CSV.
pub const MONITOR_CSV_HEADER: &str = "t_ms,node,cell,snssai,ue,metric,value";

fn outcome_str(result: &Option<Result<(), Cause>>) -> String {
    match result {
        None => "pending".into(),
        Some(Ok(())) => "ack".into(),
        Some(Err(c)) => format!("failure({c})"),
    }
}

/// Streams every report as CSV rows, one per (record, metric).
pub struct MonitorXApp {
    base: XAppBase,
    nodes: Vec<NodeId>,
    metrics: Vec<String>,
    period_ms: u32,
    snssai: Option<Snssai>,
    started: bool,
    rows: Rc<RefCell<Vec<String>>>,
    reports: Rc<RefCell<usize>>,
    csv_name: String,
}

impl MonitorXApp {
    pub fn new(
        endpoint: &RicEndpoint,
        id: impl Into<XAppId>,
        nodes: Vec<NodeId>,
        metrics: Vec<String>,
        period_ms: u32,
        snssai: Option<Snssai>,
    ) -> Result<Self, XAppError> {
        let mut base = XAppBase::new(endpoint, id)?;
        let rows = Rc::new(RefCell::new(Vec::new()));
        let reports = Rc::new(RefCell::new(0));
        let ep = endpoint.clone();
        let (sink, count) = (rows.clone(), reports.clone());
        base.attach_kpm().on_report(move |node, _sub, report| {
            *count.borrow_mut() += 1;
            sink.borrow_mut().extend(csv_rows(&ep, node, report));
        });
        Ok(Self {
            base,
            nodes,
            metrics,
            period_ms,
            snssai,
            started: false,
            rows,
            reports,
            csv_name: "kpm.csv".into(),
        })
    }

    /// Renames the CSV artifact (several monitors in one run).
    pub fn with_csv_name(mut self, name: impl Into<String>) -> Self {
        self.csv_name = name.into();
        self
    }

    /// Also attaches an RC frame; it stays idle.
    pub fn with_rc_frame(mut self) -> Self {
        self.base.attach_rc(RcStyle::Rrac);
        self
    }

    pub fn rows(&self) -> Vec<String> {
        self.rows.borrow().clone()
    }

    pub fn report_count(&self) -> usize {
        *self.reports.borrow()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(MONITOR_CSV_HEADER);
        out.push('\n');
        for r in self.rows.borrow().iter() {
            out.push_str(r);
            out.push('\n');
        }
        out
    }
}

fn csv_rows(ep: &RicEndpoint, node: &NodeId, report: &KpmReport) -> Vec<String> {
    let cells: BTreeMap<UeId, CellId> = ep
        .get_ue_context(node)
        .unwrap_or_default()
        .into_iter()
        .map(|(ue, cell, _)| (ue, cell))
        .collect();
    let t = report.window_end_ms();
    let mut out = Vec::new();
    for rec in &report.records {
        let cell = cells.get(&rec.ue_id).map_or("", |c| c.as_str());
        for (m, v) in report.metrics.iter().zip(&rec.values) {
            out.push(format!("{t},{node},{cell},{},{},{m},{v:.3}", rec.snssai, rec.ue_id));
        }
    }
    out
}

impl XApp for MonitorXApp {
    fn id(&self) -> &XAppId {
        self.base.id()
    }

    fn step(&mut self, _now: TimeMs) -> Result<(), XAppError> {
        if !self.started {
            self.started = true;
            let metrics: Vec<&str> = self.metrics.iter().map(String::as_str).collect();
            for node in &self.nodes {
                self.base.kpm()?.subscribe(node, &metrics, self.period_ms, self.snssai)?;
            }
        }
        for ev in self.base.poll() {
            if let XAppEvent::Subscribed { result: Err(cause), .. } = ev {
                return Err(XAppError::SubscriptionFailed {
                    node: self.nodes.first().cloned().unwrap_or_default(),
                    cause,
                });
            }
        }
        Ok(())
    }

    fn artifacts(&self) -> Vec<(String, String)> {
        vec![(self.csv_name.clone(), self.csv())]
    }

    fn summary(&self) -> Vec<String> {
        vec![format!("reports={} rows={}", self.report_count(), self.rows.borrow().len())]
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Sends a fixed schedule of PRB quotas to one slice.
pub struct PrbControlXApp {
    base: XAppBase,
    node: NodeId,
    cell: CellId,
    snssai: Snssai,
    schedule: Vec<(TimeMs, PrbQuota)>,
    next: usize,
    sent: Vec<(TimeMs, ReqId, PrbQuota, Outcome)>,
}

impl PrbControlXApp {
    pub fn new(
        endpoint: &RicEndpoint,
        id: impl Into<XAppId>,
        node: NodeId,
        cell: CellId,
        snssai: Snssai,
        mut schedule: Vec<(TimeMs, PrbQuota)>,
    ) -> Result<Self, XAppError> {
        let mut base = XAppBase::new(endpoint, id)?;
        base.attach_rc(RcStyle::Rrac);
        schedule.sort_by_key(|(t, _)| *t);
        Ok(Self {
            base,
            node,
            cell,
            snssai,
            schedule,
            next: 0,
            sent: Vec::new(),
        })
    }

    /// `(sent_at, quota, outcome)` per scheduled control.
    pub fn sent(&self) -> Vec<(TimeMs, PrbQuota, Outcome)> {
        self.sent.iter().map(|(t, _, q, r)| (*t, *q, *r)).collect()
    }
}

impl XApp for PrbControlXApp {
    fn id(&self) -> &XAppId {
        self.base.id()
    }

    fn step(&mut self, now: TimeMs) -> Result<(), XAppError> {
        for ev in self.base.poll() {
            if let XAppEvent::Control { req, result } = ev {
                if let Some(s) = self.sent.iter_mut().find(|s| s.1 == req) {
                    s.3 = Some(result);
                }
            }
        }
        while let Some(&(t, q)) = self.schedule.get(self.next) {
            if t > now {
                break;
            }
            let req = self.base.rc()?.send_prb_quota(
                &self.node,
                &self.cell,
                self.snssai,
                q.dedicated_pct,
                q.min_pct,
                q.max_pct,
            )?;
            self.sent.push((now, req, q, None));
            self.next += 1;
        }
        Ok(())
    }

    fn summary(&self) -> Vec<String> {
        self.sent
            .iter()
            .map(|(t, _, q, r)| {
                format!(
                    "t={t} quota=({},{},{}) -> {}",
                    q.dedicated_pct,
                    q.min_pct,
                    q.max_pct,
                    outcome_str(r)
                )
            })
            .collect()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Runs a [`ClosedLoop`] on the slice's KPM reports.
pub struct KpmPrbLoopXApp {
    base: XAppBase,
    lp: ClosedLoop,
    started: bool,
    pending: Option<ReqId>,
    /// `(t_ms, max_pct)` per issued control.
    actions: Vec<(TimeMs, u8)>,
    measurements: Vec<(TimeMs, f64)>,
    finished_at: Option<TimeMs>,
}

impl KpmPrbLoopXApp {
    pub fn new(endpoint: &RicEndpoint, id: impl Into<XAppId>, policy: ClosedLoopPolicy) -> Result<Self, XAppError> {
        let lp = ClosedLoop::new(policy)?;
        let mut base = XAppBase::new(endpoint, id)?;
        base.attach_kpm();
        base.attach_rc(RcStyle::Rrac);
        Ok(Self {
            base,
            lp,
            started: false,
            pending: None,
            actions: Vec::new(),
            measurements: Vec::new(),
            finished_at: None,
        })
    }

    pub fn issued(&self) -> &[u8] {
        self.lp.issued()
    }

    pub fn actions(&self) -> &[(TimeMs, u8)] {
        &self.actions
    }

    pub fn measurements(&self) -> &[(TimeMs, f64)] {
        &self.measurements
    }

    pub fn outcome(&self) -> Option<LoopOutcome> {
        self.lp.outcome()
    }

    fn apply(&mut self, now: TimeMs, step: LoopStep) -> Result<(), XAppError> {
        match step {
            LoopStep::Idle => Ok(()),
            LoopStep::Issue(q) => {
                let p = self.lp.policy();
                let (node, cell, snssai) = (p.node.clone(), p.cell.clone(), p.snssai);
                let req =
                    self.base
                        .rc()?
                        .send_prb_quota(&node, &cell, snssai, q.dedicated_pct, q.min_pct, q.max_pct)?;
                self.pending = Some(req);
                self.actions.push((now, q.max_pct));
                Ok(())
            }
            LoopStep::Done(LoopOutcome::Aborted(cause)) => {
                self.finished_at = Some(now);
                Err(XAppError::ControlFailed {
                    req: self.pending.take().unwrap_or(0),
                    cause,
                })
            }
            LoopStep::Done(_) => {
                self.finished_at = Some(now);
                Ok(())
            }
        }
    }
}

impl XApp for KpmPrbLoopXApp {
    fn id(&self) -> &XAppId {
        self.base.id()
    }

    fn step(&mut self, now: TimeMs) -> Result<(), XAppError> {
        if !self.started {
            self.started = true;
            let p = self.lp.policy().clone();
            self.base
                .kpm()?
                .subscribe(&p.node, &[p.watch_metric.as_str()], p.period_ms, Some(p.snssai))?;
        }
        for ev in self.base.poll() {
            match ev {
                XAppEvent::Subscribed { result: Err(cause), .. } => {
                    return Err(XAppError::SubscriptionFailed {
                        node: self.lp.policy().node.clone(),
                        cause,
                    })
                }
                XAppEvent::Report { report, .. } => {
                    let p = self.lp.policy();
                    let Some(i) = report.metric_index(&p.watch_metric) else {
                        continue;
                    };
                    let value: f64 = report
                        .records
                        .iter()
                        .filter(|r| r.snssai == p.snssai)
                        .map(|r| r.values[i])
                        .sum();
                    self.measurements.push((report.window_end_ms(), value));
                    let step = self.lp.on_measurement(value);
                    self.apply(now, step)?;
                }
                XAppEvent::Control { req, result } if Some(req) == self.pending => {
                    self.pending = None;
                    let step = self.lp.on_control_result(result);
                    self.apply(now, step)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn summary(&self) -> Vec<String> {
        let caps: Vec<String> = self.issued().iter().map(u8::to_string).collect();
        let outcome = match self.outcome() {
            None => "running".to_string(),
            Some(LoopOutcome::Converged { max_pct }) => format!("converged max_pct={max_pct}"),
            Some(LoopOutcome::FloorReached { max_pct }) => format!("floor reached max_pct={max_pct}"),
            Some(LoopOutcome::Aborted(c)) => format!("aborted cause={c}"),
        };
        let mut lines = vec![format!("caps={}", caps.join(",")), format!("outcome={outcome}")];
        if let Some(t) = self.finished_at {
            lines.push(format!("finished_at={t}"));
        }
        lines
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// How the handover xApp picks its moves.
#[derive(Clone, Debug, PartialEq)]
pub enum HandoverMode {
    /// Fixed `(t_ms, ue, target cell)` list.
    Scripted(Vec<(TimeMs, UeId, CellId)>),
    /// Every `every_ms` from `start_ms`, `count` times: the next UE in id
    /// order moves to the cell after its serving cell in `cells`.
    RoundRobin {
        start_ms: TimeMs,
        every_ms: TimeMs,
        count: usize,
        cells: Vec<CellId>,
    },
}

pub struct HandoverXApp {
    base: XAppBase,
    node: NodeId,
    mode: HandoverMode,
    next: usize,
    /// `(t_ms, ue, from, to, outcome)`.
    moves: Vec<(TimeMs, UeId, CellId, CellId, ReqId, Outcome)>,
}

impl HandoverXApp {
    pub fn new(endpoint: &RicEndpoint, id: impl Into<XAppId>, node: NodeId, mode: HandoverMode) -> Result<Self, XAppError> {
        let mut base = XAppBase::new(endpoint, id)?;
        base.attach_rc(RcStyle::Cmmc);
        let mode = match mode {
            HandoverMode::Scripted(mut s) => {
                s.sort_by_key(|(t, ..)| *t);
                HandoverMode::Scripted(s)
            }
            m => m,
        };
        Ok(Self {
            base,
            node,
            mode,
            next: 0,
            moves: Vec::new(),
        })
    }

    pub fn moves(&self) -> Vec<(TimeMs, UeId, CellId, CellId, Outcome)> {
        self.moves
            .iter()
            .map(|(t, u, f, to, _, r)| (*t, u.clone(), f.clone(), to.clone(), *r))
            .collect()
    }

    /// The move due at `now`, if any.
    fn due(&mut self, now: TimeMs) -> Result<Option<(UeId, CellId)>, XAppError> {
        match &self.mode {
            HandoverMode::Scripted(s) => match s.get(self.next) {
                Some((t, ue, cell)) if *t <= now => Ok(Some((ue.clone(), cell.clone()))),
                _ => Ok(None),
            },
            HandoverMode::RoundRobin {
                start_ms,
                every_ms,
                count,
                cells,
            } => {
                if self.next >= *count || now < start_ms + self.next as TimeMs * every_ms || cells.is_empty() {
                    return Ok(None);
                }
                let ctx = self.base.endpoint().get_ue_context(&self.node)?;
                if ctx.is_empty() {
                    return Ok(None);
                }
                let (ue, serving, _) = &ctx[self.next % ctx.len()];
                let pos = cells.iter().position(|c| c == serving).map_or(0, |p| p + 1);
                Ok(Some((ue.clone(), cells[pos % cells.len()].clone())))
            }
        }
    }
}

impl XApp for HandoverXApp {
    fn id(&self) -> &XAppId {
        self.base.id()
    }

    fn step(&mut self, now: TimeMs) -> Result<(), XAppError> {
        for ev in self.base.poll() {
            if let XAppEvent::Control { req, result } = ev {
                if let Some(m) = self.moves.iter_mut().find(|m| m.4 == req) {
                    m.5 = Some(result);
                }
            }
        }
        while let Some((ue, target)) = self.due(now)? {
            let from = self
                .base
                .endpoint()
                .get_ue_context(&self.node)?
                .into_iter()
                .find(|(u, ..)| *u == ue)
                .map(|(_, c, _)| c)
                .unwrap_or_default();
            let node = self.node.clone();
            let req = self.base.rc()?.send_handover(&node, &ue, &target)?;
            self.moves.push((now, ue, from, target, req, None));
            self.next += 1;
        }
        Ok(())
    }

    fn summary(&self) -> Vec<String> {
        self.moves
            .iter()
            .map(|(t, ue, from, to, _, r)| format!("t={t} ue={ue} {from}->{to} -> {}", outcome_str(r)))
            .collect()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
