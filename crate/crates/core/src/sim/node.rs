//! One simulated E2 node (a CU with its DUs' cells) driven in 1 ms ticks.
//!
//! Each tick runs, in order: due enforcement events, due KPM reports, then
//! scheduling of every cell. Control and subscription traffic arrives
//! between ticks through [`SimNode::handle_envelope`]; everything the node
//! sends is queued in an outbox.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::profile::{NodeProfile, Support};
use super::scheduler::{check_quotas, schedule_cell, SliceDemand, EPS};
use crate::codec::Envelope;
use crate::e2ap::{AdmittedSubscription, Cause, ControlCommand, E2apError, NodeEvent, NodeSession, SmKind};
use crate::kpm::{self, build_kpm_report, KpmActionDefinition, KpmRecord, KpmReport, Vocabulary};
use crate::rc::{build_handover, decode_rc_control, PrbQuota, QosFlowMapParams, RcControlAction, RcParams, RcTarget};
use crate::types::{CellId, NodeId, Snssai, TimeMs, UeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transport {
    /// Unserved traffic is dropped.
    Udp,
    /// Unserved traffic queues and drains when allocation allows.
    Tcp,
}

/// A constant-rate traffic source active over `[start_ms, start_ms + duration_ms)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    pub start_ms: TimeMs,
    pub duration_ms: TimeMs,
    pub rate_mbps: f64,
    pub transport: Transport,
    /// Uniform per-tick rate perturbation, in percent of `rate_mbps`.
    pub jitter_pct: f64,
}

impl Flow {
    pub fn new(start_ms: TimeMs, duration_ms: TimeMs, rate_mbps: f64, transport: Transport) -> Self {
        Self {
            start_ms,
            duration_ms,
            rate_mbps,
            transport,
            jitter_pct: 0.0,
        }
    }

    pub fn end_ms(&self) -> TimeMs {
        self.start_ms + self.duration_ms
    }

    fn active(&self, t: TimeMs) -> bool {
        t >= self.start_ms && t < self.end_ms()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceConfig {
    pub snssai: Snssai,
    pub quota: PrbQuota,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellConfig {
    pub cell_id: CellId,
    pub du_id: String,
    /// Served rate at 100% PRBs.
    pub capacity_mbps: f64,
    pub slices: Vec<SliceConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UeConfig {
    pub ue_id: UeId,
    pub cell_id: CellId,
    pub snssai: Snssai,
    pub downlink: Vec<Flow>,
    pub uplink: Vec<Flow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeConfig {
    pub node_id: NodeId,
    pub profile: NodeProfile,
    pub cells: Vec<CellConfig>,
    pub ues: Vec<UeConfig>,
    pub handover_interruption_ms: TimeMs,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("node {node}: {msg}")]
    Config { node: NodeId, msg: String },
    #[error(transparent)]
    E2ap(#[from] E2apError),
}

impl NodeConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |msg: String| SimError::Config {
            node: self.node_id.clone(),
            msg,
        };
        let mut cells = BTreeSet::new();
        for c in &self.cells {
            if !cells.insert(&c.cell_id) {
                return Err(err(format!("duplicate cell {}", c.cell_id)));
            }
            if c.capacity_mbps.is_nan() || c.capacity_mbps <= 0.0 {
                return Err(err(format!("cell {} capacity must be positive", c.cell_id)));
            }
            let mut slices = BTreeSet::new();
            for s in &c.slices {
                if !slices.insert(s.snssai) {
                    return Err(err(format!("cell {} lists slice {} twice", c.cell_id, s.snssai)));
                }
            }
            check_quotas(c.slices.iter().map(|s| &s.quota)).map_err(|e| err(format!("cell {}: {e}", c.cell_id)))?;
        }
        let mut ues = BTreeSet::new();
        for u in &self.ues {
            if !ues.insert(&u.ue_id) {
                return Err(err(format!("duplicate ue {}", u.ue_id)));
            }
            let cell = self
                .cells
                .iter()
                .find(|c| c.cell_id == u.cell_id)
                .ok_or_else(|| err(format!("ue {} attached to unknown cell {}", u.ue_id, u.cell_id)))?;
            if !cell.slices.iter().any(|s| s.snssai == u.snssai) {
                return Err(err(format!("ue {} uses slice {} absent from cell {}", u.ue_id, u.snssai, u.cell_id)));
            }
            for f in u.downlink.iter().chain(&u.uplink) {
                if f.rate_mbps.is_nan() || f.rate_mbps < 0.0 || !(0.0..=100.0).contains(&f.jitter_pct) {
                    return Err(err(format!("ue {} has a flow with a bad rate or jitter", u.ue_id)));
                }
            }
        }
        Ok(())
    }
}

/// Served share of one slice during a tick.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceTick {
    pub snssai: Snssai,
    pub alloc_pct: f64,
    pub served_mbps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellTick {
    pub cell_id: CellId,
    pub du_id: String,
    pub slices: Vec<SliceTick>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UeTick {
    pub ue_id: UeId,
    pub serving_cell: CellId,
    pub snssai: Snssai,
    pub offered_mbps: f64,
    pub served_mbps: f64,
    pub backlog_kbit: f64,
}

/// Downlink state of every cell and UE over one tick.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TickRecord {
    pub t_ms: TimeMs,
    pub cells: Vec<CellTick>,
    pub ues: Vec<UeTick>,
}

/// Something that happened inside the node, for the run log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimEvent {
    pub t_ms: TimeMs,
    pub what: String,
}

/// Outcome of accepting a control action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scheduled {
    pub enforce_at: TimeMs,
    pub support: Support,
}

#[derive(Debug)]
struct Pending {
    action: RcControlAction,
    support: Support,
    cmd: Option<ControlCommand>,
}

#[derive(Debug, Default)]
struct DirState {
    flows: Vec<Flow>,
    offered: f64,
    served: f64,
    backlog_kbit: f64,
}

impl DirState {
    fn offer(&mut self, t: TimeMs, rng: &mut ChaCha8Rng) -> f64 {
        let mut offered = 0.0;
        for f in self.flows.iter().filter(|f| f.active(t)) {
            let mut rate = f.rate_mbps;
            if f.jitter_pct > 0.0 {
                rate *= 1.0 + f.jitter_pct / 100.0 * rng.gen_range(-1.0..=1.0);
            }
            offered += rate;
        }
        self.offered = offered;
        offered
    }

    /// Demand for this tick: offered plus anything queued by TCP flows.
    fn demand(&self) -> f64 {
        self.offered + self.backlog_kbit
    }

    fn settle(&mut self, served: f64, t: TimeMs) {
        self.served = served;
        let tcp = self.flows.iter().any(|f| f.active(t) && f.transport == Transport::Tcp) || self.backlog_kbit > 0.0;
        let left = (self.demand() - served).max(0.0);
        self.backlog_kbit = if tcp && left > EPS { left } else { 0.0 };
    }

    /// Queueing delay in ms, saturating at `cap` when nothing is served.
    fn delay_ms(&self, cap: f64) -> f64 {
        if self.backlog_kbit <= EPS {
            0.0
        } else if self.served <= EPS {
            cap
        } else {
            (self.backlog_kbit / self.served).min(cap)
        }
    }
}

#[derive(Debug)]
struct UeRt {
    snssai: Snssai,
    serving: CellId,
    detached_until: Option<TimeMs>,
    qos: Option<QosFlowMapParams>,
    dl: DirState,
    ul: DirState,
}

#[derive(Debug)]
struct CellRt {
    cell_id: CellId,
    du_id: String,
    capacity_mbps: f64,
    quotas: BTreeMap<Snssai, PrbQuota>,
}

#[derive(Debug, Default, Clone)]
struct UeAcc {
    dl_kbit: f64,
    ul_kbit: f64,
    prb_dl: f64,
    prb_ul: f64,
    delay_dl: f64,
}

#[derive(Debug)]
struct Sampler {
    subscription_id: u32,
    action_id: u16,
    def: KpmActionDefinition,
    period_ms: TimeMs,
    deadline: TimeMs,
    ticks: u64,
    acc: BTreeMap<UeId, UeAcc>,
}

impl Sampler {
    fn window_start(&self) -> TimeMs {
        self.deadline.saturating_sub(self.def.granularity_ms as TimeMs)
    }
}

#[derive(Debug)]
pub struct SimNode {
    node_id: NodeId,
    profile: NodeProfile,
    interruption_ms: TimeMs,
    session: NodeSession,
    cells: Vec<CellRt>,
    ues: BTreeMap<UeId, UeRt>,
    pending: BTreeMap<(TimeMs, u64), Pending>,
    seq: u64,
    samplers: Vec<Sampler>,
    rng: ChaCha8Rng,
    now: TimeMs,
    outbox: Vec<Envelope>,
    local_reports: Vec<(u32, u16, KpmReport)>,
    events: Vec<SimEvent>,
    last_tick: TickRecord,
}

impl SimNode {
    pub fn new(config: NodeConfig, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let desc = config.profile.descriptor(&config.node_id);
        let session = NodeSession::new(desc, &Vocabulary::standard())?;
        let cells = config
            .cells
            .iter()
            .map(|c| CellRt {
                cell_id: c.cell_id.clone(),
                du_id: c.du_id.clone(),
                capacity_mbps: c.capacity_mbps,
                quotas: c.slices.iter().map(|s| (s.snssai, s.quota)).collect(),
            })
            .collect();
        let ues = config
            .ues
            .iter()
            .map(|u| {
                let rt = UeRt {
                    snssai: u.snssai,
                    serving: u.cell_id.clone(),
                    detached_until: None,
                    qos: None,
                    dl: DirState {
                        flows: u.downlink.clone(),
                        ..Default::default()
                    },
                    ul: DirState {
                        flows: u.uplink.clone(),
                        ..Default::default()
                    },
                };
                (u.ue_id.clone(), rt)
            })
            .collect();
        Ok(Self {
            node_id: config.node_id,
            profile: config.profile,
            interruption_ms: config.handover_interruption_ms,
            session,
            cells,
            ues,
            pending: BTreeMap::new(),
            seq: 0,
            samplers: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: 0,
            outbox: Vec::new(),
            local_reports: Vec::new(),
            events: Vec::new(),
            last_tick: TickRecord::default(),
        })
    }

    pub fn node_id(&self) -> &NodeId {
        &self.node_id
    }

    pub fn profile(&self) -> &NodeProfile {
        &self.profile
    }

    /// Next tick to be processed.
    pub fn now(&self) -> TimeMs {
        self.now
    }

    pub fn session(&self) -> &NodeSession {
        &self.session
    }

    pub fn last_tick(&self) -> &TickRecord {
        &self.last_tick
    }

    pub fn quota(&self, cell: &CellId, snssai: Snssai) -> Option<PrbQuota> {
        self.cell(cell).and_then(|c| c.quotas.get(&snssai).copied())
    }

    pub fn qos_mapping(&self, ue: &UeId) -> Option<QosFlowMapParams> {
        self.ues.get(ue).and_then(|u| u.qos)
    }

    /// Current attachment map: `(ue, serving cell, slice)` by UE id.
    pub fn ue_context(&self) -> Vec<(UeId, CellId, Snssai)> {
        self.ues
            .iter()
            .map(|(id, u)| (id.clone(), u.serving.clone(), u.snssai))
            .collect()
    }

    /// Hash of everything that steers the scheduler or bearer mapping.
    pub fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for c in &self.cells {
            c.cell_id.hash(&mut h);
            c.capacity_mbps.to_bits().hash(&mut h);
            for (s, q) in &c.quotas {
                s.hash(&mut h);
                q.hash(&mut h);
            }
        }
        for (id, u) in &self.ues {
            id.hash(&mut h);
            u.serving.hash(&mut h);
            u.detached_until.hash(&mut h);
            u.qos.map(|q| (q.drb_id, q.five_qi, q.priority)).hash(&mut h);
        }
        h.finish()
    }

    pub fn drain_outbox(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.outbox)
    }

    pub fn take_events(&mut self) -> Vec<SimEvent> {
        std::mem::take(&mut self.events)
    }

    /// Reports from subscriptions admitted directly rather than over E2.
    pub fn take_local_reports(&mut self) -> Vec<(u32, u16, KpmReport)> {
        std::mem::take(&mut self.local_reports)
    }

    fn log(&mut self, what: String) {
        self.events.push(SimEvent { t_ms: self.now, what });
    }

    fn cell(&self, id: &CellId) -> Option<&CellRt> {
        self.cells.iter().find(|c| &c.cell_id == id)
    }

    /// Queues the node's setup request.
    pub fn start(&mut self) -> Result<(), SimError> {
        let env = self.session.setup_request()?;
        self.outbox.push(env);
        Ok(())
    }

    /// Drops the association; subscriptions and unsent acks are discarded.
    pub fn disconnect(&mut self) {
        self.session.close();
        self.samplers.clear();
        for p in self.pending.values_mut() {
            p.cmd = None;
        }
    }

    /// Handles one envelope from the RIC.
    pub fn handle_envelope(&mut self, env: &Envelope) -> Result<(), SimError> {
        match self.session.on_envelope(env)? {
            NodeEvent::SetupDone(Ok(())) => self.log("setup accepted".into()),
            NodeEvent::SetupDone(Err(c)) => self.log(format!("setup refused cause={c}")),
            NodeEvent::Subscribed { reply, subscription } => {
                self.outbox.push(reply);
                self.add_samplers(subscription);
            }
            NodeEvent::Unsubscribed { reply, subscription_id } => {
                self.outbox.push(reply);
                self.samplers.retain(|s| s.subscription_id != subscription_id);
                self.log(format!("unsubscribed sub={subscription_id}"));
            }
            NodeEvent::Refused { reply, cause } => {
                self.outbox.push(reply);
                self.log(format!("subscription refused cause={cause}"));
            }
            NodeEvent::Control(cmd) => self.on_control(cmd),
            NodeEvent::Violation(v) => self.log(format!("violation {v}")),
        }
        Ok(())
    }

    fn on_control(&mut self, cmd: ControlCommand) {
        let result = match self.session.descriptor().function(cmd.ran_function_id) {
            None => Err(Cause::UnknownFunction),
            Some(f) if f.sm_kind != SmKind::Rc => Err(Cause::UnsupportedAction),
            Some(_) => decode_rc_control(&cmd.header, &cmd.message).map_err(|_| Cause::Malformed),
        };
        let outcome = result.and_then(|action| self.schedule_action(action, Some(cmd.clone())));
        if let Err(cause) = outcome {
            self.log(format!("control refused tid={} cause={cause}", cmd.transaction_id));
            if let Some(env) = self.session.control_response(&cmd, Err(cause)) {
                self.outbox.push(env);
            }
        }
    }

    /// Accepts a control action for enforcement after the profile's reaction
    /// delay, or refuses it immediately.
    pub fn apply_rc_action(&mut self, action: RcControlAction) -> Result<Scheduled, Cause> {
        self.schedule_action(action, None)
    }

    /// Moves `ue` to `target`, subject to the same delay and checks as an RC
    /// mobility control.
    pub fn execute_handover(&mut self, ue: &UeId, target: &CellId) -> Result<Scheduled, Cause> {
        let action = build_handover(ue.clone(), target.clone()).map_err(|_| Cause::Malformed)?;
        self.apply_rc_action(action)
    }

    fn schedule_action(&mut self, action: RcControlAction, cmd: Option<ControlCommand>) -> Result<Scheduled, Cause> {
        let support = self.profile.rc_support(action.style);
        if support == Support::None {
            return Err(Cause::Unsupported);
        }
        self.check_action(&action)?;
        let enforce_at = self.now.saturating_sub(1) + self.profile.reaction_ticks();
        // Messages arrive after tick `now - 1` ran; nothing lands in the past.
        let enforce_at = enforce_at.max(self.now);
        self.seq += 1;
        self.pending.insert((enforce_at, self.seq), Pending { action, support, cmd });
        Ok(Scheduled { enforce_at, support })
    }

    fn check_action(&self, action: &RcControlAction) -> Result<(), Cause> {
        match (&action.target, &action.params) {
            (RcTarget::Ue(ue), _) => self.ues.get(ue).map(|_| ()).ok_or(Cause::UnknownUe),
            (RcTarget::Slice { cell_id, snssai }, RcParams::PrbQuota(q)) => {
                let cell = self.cell(cell_id).ok_or(Cause::UnknownCell)?;
                if !cell.quotas.contains_key(snssai) {
                    return Err(Cause::UnknownSlice);
                }
                let next = cell.quotas.iter().map(|(s, cur)| if s == snssai { q } else { cur });
                check_quotas(next).map_err(|_| Cause::Malformed)
            }
            (RcTarget::Handover { ue_id, target_cell_id }, _) => {
                let ue = self.ues.get(ue_id).ok_or(Cause::UnknownUe)?;
                let cell = self.cell(target_cell_id).ok_or(Cause::UnknownCell)?;
                if &ue.serving == target_cell_id {
                    return Err(Cause::SameCell);
                }
                if !cell.quotas.contains_key(&ue.snssai) {
                    return Err(Cause::UnknownSlice);
                }
                Ok(())
            }
            _ => Err(Cause::Malformed),
        }
    }

    fn enforce(&mut self, p: Pending) {
        let mut result = self.check_action(&p.action);
        if result.is_ok() && p.support == Support::Full {
            match (&p.action.target, &p.action.params) {
                (RcTarget::Ue(ue), RcParams::QosFlowMap(q)) => {
                    if let Some(u) = self.ues.get_mut(ue) {
                        u.qos = Some(*q);
                    }
                }
                (RcTarget::Slice { cell_id, snssai }, RcParams::PrbQuota(q)) => {
                    if let Some(c) = self.cells.iter_mut().find(|c| &c.cell_id == cell_id) {
                        c.quotas.insert(*snssai, *q);
                    }
                }
                (RcTarget::Handover { ue_id, target_cell_id }, _) => {
                    let until = self.now + self.interruption_ms;
                    if let Some(u) = self.ues.get_mut(ue_id) {
                        u.serving = target_cell_id.clone();
                        u.detached_until = (self.interruption_ms > 0).then_some(until);
                    }
                }
                _ => result = Err(Cause::Malformed),
            }
        }
        let tid = p.cmd.as_ref().map_or(0, |c| c.transaction_id);
        let verb = match (&result, p.support) {
            (Err(_), _) => "failed",
            (Ok(()), Support::Full) => "enforced",
            _ => "acknowledged",
        };
        let detail = describe(&p.action);
        match &result {
            Err(c) => self.log(format!("control {verb} tid={tid} {detail} cause={c}")),
            Ok(()) => self.log(format!("control {verb} tid={tid} {detail}")),
        }
        if let Some(cmd) = p.cmd {
            if let Some(env) = self.session.control_response(&cmd, result) {
                self.outbox.push(env);
            }
        }
    }

    /// Starts sampling for a subscription the node has admitted.
    pub fn add_samplers(&mut self, sub: AdmittedSubscription) {
        let period = sub.period_ms as TimeMs;
        let deadline = (self.now / period + 1) * period;
        for (action_id, def) in sub.actions {
            self.samplers.push(Sampler {
                subscription_id: sub.subscription_id,
                action_id,
                def,
                period_ms: period,
                deadline,
                ticks: 0,
                acc: BTreeMap::new(),
            });
        }
        self.log(format!("subscribed sub={} period={}", sub.subscription_id, period));
    }

    /// Processes ticks `now..until`.
    pub fn advance(&mut self, until: TimeMs) -> Vec<SimEvent> {
        while self.now < until {
            self.tick();
            self.now += 1;
        }
        self.take_events()
    }

    fn tick(&mut self) {
        let t = self.now;
        while let Some(entry) = self.pending.first_entry() {
            if entry.key().0 > t {
                break;
            }
            let p = entry.remove();
            self.enforce(p);
        }
        for u in self.ues.values_mut() {
            if u.detached_until.is_some_and(|d| d <= t) {
                u.detached_until = None;
            }
        }
        self.emit_reports(t);
        self.schedule(t);
        self.sample(t);
    }

    fn emit_reports(&mut self, t: TimeMs) {
        let mut due = Vec::new();
        for s in self.samplers.iter_mut().filter(|s| s.deadline == t) {
            let n = s.ticks.max(1) as f64;
            let g = s.def.granularity_ms as f64;
            let mut records = Vec::new();
            for (ue_id, u) in &self.ues {
                if s.def.snssai.is_some_and(|f| f != u.snssai) {
                    continue;
                }
                let a = s.acc.get(ue_id).cloned().unwrap_or_default();
                let values = s
                    .def
                    .metrics
                    .iter()
                    .map(|m| match m.as_str() {
                        kpm::UE_THP_DL => a.dl_kbit / n,
                        kpm::UE_THP_UL => a.ul_kbit / n,
                        kpm::PDCP_SDU_VOLUME_DL => a.dl_kbit,
                        kpm::PDCP_SDU_VOLUME_UL => a.ul_kbit,
                        kpm::PRB_TOT_DL => a.prb_dl / n,
                        kpm::PRB_TOT_UL => a.prb_ul / n,
                        kpm::RLC_SDU_DELAY_DL => a.delay_dl.min(g),
                        _ => 0.0,
                    })
                    .collect();
                records.push(KpmRecord {
                    ue_id: ue_id.clone(),
                    snssai: u.snssai,
                    values,
                });
            }
            due.push((
                s.subscription_id,
                s.action_id,
                KpmReport {
                    window_start_ms: s.window_start(),
                    granularity_ms: s.def.granularity_ms,
                    metrics: s.def.metrics.clone(),
                    records,
                },
            ));
            s.deadline += s.period_ms;
            s.ticks = 0;
            s.acc.clear();
        }
        for (sub, action, report) in due {
            self.log(format!("report sub={sub} window={}", report.window_start_ms));
            let known = self.session.subscriptions().any(|s| s.subscription_id == sub);
            if !known {
                self.local_reports.push((sub, action, report));
                continue;
            }
            match build_kpm_report(&report) {
                Ok((header, message)) => match self.session.deliver_indication(sub, action, header, message) {
                    Ok(env) => self.outbox.push(env),
                    Err(c) => self.log(format!("indication dropped sub={sub} cause={c}")),
                },
                Err(e) => self.log(format!("report invalid sub={sub}: {e}")),
            }
        }
    }

    fn schedule(&mut self, t: TimeMs) {
        let mut record = TickRecord {
            t_ms: t,
            cells: Vec::with_capacity(self.cells.len()),
            ues: Vec::with_capacity(self.ues.len()),
        };
        for u in self.ues.values_mut() {
            u.dl.offer(t, &mut self.rng);
            u.ul.offer(t, &mut self.rng);
        }
        let mut served_dl: BTreeMap<UeId, f64> = BTreeMap::new();
        let mut served_ul: BTreeMap<UeId, f64> = BTreeMap::new();
        for cell in &self.cells {
            let members: Vec<Vec<&UeId>> = cell
                .quotas
                .keys()
                .map(|s| {
                    self.ues
                        .iter()
                        .filter(|(_, u)| u.serving == cell.cell_id && u.snssai == *s && u.detached_until.is_none())
                        .map(|(id, _)| id)
                        .collect()
                })
                .collect();
            let demands = |pick: fn(&UeRt) -> f64| -> Vec<SliceDemand> {
                cell.quotas
                    .values()
                    .zip(&members)
                    .map(|(q, ids)| SliceDemand {
                        quota: *q,
                        ue_demand: ids.iter().map(|id| pick(&self.ues[*id])).collect(),
                    })
                    .collect()
            };
            let dl = schedule_cell(cell.capacity_mbps, &demands(|u| u.dl.demand()))
                .expect("quotas are checked before they are applied");
            let ul = schedule_cell(cell.capacity_mbps, &demands(|u| u.ul.demand()))
                .expect("quotas are checked before they are applied");
            for (i, ids) in members.iter().enumerate() {
                for (j, id) in ids.iter().enumerate() {
                    served_dl.insert((*id).clone(), dl.ue_served[i][j]);
                    served_ul.insert((*id).clone(), ul.ue_served[i][j]);
                }
            }
            record.cells.push(CellTick {
                cell_id: cell.cell_id.clone(),
                du_id: cell.du_id.clone(),
                slices: cell
                    .quotas
                    .keys()
                    .enumerate()
                    .map(|(i, s)| SliceTick {
                        snssai: *s,
                        alloc_pct: dl.slice_pct[i],
                        served_mbps: dl.slice_served[i],
                    })
                    .collect(),
            });
        }
        for (id, u) in self.ues.iter_mut() {
            u.dl.settle(served_dl.get(id).copied().unwrap_or(0.0), t);
            u.ul.settle(served_ul.get(id).copied().unwrap_or(0.0), t);
            record.ues.push(UeTick {
                ue_id: id.clone(),
                serving_cell: u.serving.clone(),
                snssai: u.snssai,
                offered_mbps: u.dl.offered,
                served_mbps: u.dl.served,
                backlog_kbit: u.dl.backlog_kbit,
            });
        }
        self.last_tick = record;
    }

    fn sample(&mut self, t: TimeMs) {
        for s in &mut self.samplers {
            if t < s.window_start() || t >= s.deadline {
                continue;
            }
            s.ticks += 1;
            let g = s.def.granularity_ms as f64;
            for (id, u) in &self.ues {
                let cap = self
                    .cells
                    .iter()
                    .find(|c| c.cell_id == u.serving)
                    .map_or(1.0, |c| c.capacity_mbps);
                let a = s.acc.entry(id.clone()).or_default();
                // Rates are Mbps over a 1 ms tick, i.e. kbit per tick.
                a.dl_kbit += u.dl.served;
                a.ul_kbit += u.ul.served;
                a.prb_dl += (u.dl.served / cap * 100.0).min(100.0);
                a.prb_ul += (u.ul.served / cap * 100.0).min(100.0);
                a.delay_dl = u.dl.delay_ms(g);
            }
        }
    }
}

fn describe(a: &RcControlAction) -> String {
    match (&a.target, &a.params) {
        (RcTarget::Slice { cell_id, snssai }, RcParams::PrbQuota(q)) => format!(
            "style={} cell={cell_id} slice={snssai} quota={}/{}/{}",
            a.style, q.dedicated_pct, q.min_pct, q.max_pct
        ),
        (RcTarget::Handover { ue_id, target_cell_id }, _) => {
            format!("style={} ue={ue_id} target={target_cell_id}", a.style)
        }
        (RcTarget::Ue(ue), _) => format!("style={} ue={ue}", a.style),
        _ => format!("style={}", a.style),
    }
}
