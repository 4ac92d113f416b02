//! Near-RT RIC runtime: node registry, subscription manager, routing between
//! xApps and E2 nodes, control-conflict policy, SDL and the E2 agent log.
//!
//! The router is one logical event loop driven by its owner: envelopes from
//! nodes go in through [`Ric::handle_envelope`], xApp requests arrive on a
//! channel drained by [`Ric::process_requests`], and everything bound for a
//! node is queued in an outbox keyed by connection.
//!
//! Controls on the same target — a `(node, cell, slice)` for PRB quotas, a
//! `(node, ue)` for UE-level actions — are sent one at a time in arrival
//! order. A quota that arrives while another quota for the same slice is in
//! flight or queued logs a `Conflict`; a queued, unsent quota is replaced by
//! the newer one and its owner told `Superseded`.

mod sdl;

pub use sdl::Sdl;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex, RwLock, Weak};

use thiserror::Error;

use crate::codec::{Envelope, MsgType};
use crate::e2ap::{
    self, control_request, decode_control_failure, decode_setup_request, decode_subscription_failure,
    decode_subscription_response, step_connection, subscription_delete, Cause, ConnEvent, ConnState, Indication,
    NodeDescriptor, SetupError, SetupRegistry, SmKind, SubscriptionRecord, RESPONSE_TIMEOUT_MS,
};
use crate::kpm::{parse_kpm_function_definition, KpmFunctionDefinition, Vocabulary};
use crate::rc::{encode_rc_control, parse_rc_function_definition, RcControlAction, RcFunctionDefinition, RcParams, RcTarget};
use crate::types::{CellId, NodeId, Snssai, TimeMs, UeId, XAppId};

/// Handle for one node connection, assigned by [`Ric::connect`].
pub type ConnId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RicError {
    #[error("unknown E2 node {0}")]
    UnknownNode(NodeId),
    #[error("the RIC is not running")]
    Unreachable,
    #[error("xApp id {0} is already attached")]
    DuplicateXApp(XAppId),
}

/// A request from an xApp to the router.
#[derive(Clone, Debug, PartialEq)]
pub enum XAppRequest {
    Subscribe {
        req_id: u64,
        node: NodeId,
        ran_function_id: u16,
        period_ms: u32,
        actions: Vec<(u16, Vec<u8>)>,
    },
    Unsubscribe {
        req_id: u64,
        subscription_id: u32,
    },
    Control {
        req_id: u64,
        node: NodeId,
        action: RcControlAction,
        ack: bool,
    },
}

/// What the router delivers to an xApp inbox.
#[derive(Clone, Debug, PartialEq)]
pub enum InboxMsg {
    Indication {
        node: NodeId,
        subscription_id: u32,
        action_id: u16,
        header: Vec<u8>,
        message: Vec<u8>,
    },
    Subscribed {
        req_id: u64,
        result: Result<u32, Cause>,
    },
    Unsubscribed {
        req_id: u64,
        result: Result<u32, Cause>,
    },
    /// The subscription ended without the xApp asking.
    SubscriptionEnded {
        subscription_id: u32,
        cause: Cause,
    },
    ControlOutcome {
        req_id: u64,
        result: Result<(), Cause>,
    },
}

/// Registry view of one E2 node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    pub descriptor: NodeDescriptor,
    pub kpm: BTreeMap<u16, KpmFunctionDefinition>,
    pub rc: BTreeMap<u16, RcFunctionDefinition>,
    pub ue_context: BTreeMap<UeId, (CellId, Snssai)>,
}

/// Decoded RAN functions of one node, for display.
#[derive(Clone, Debug, PartialEq)]
pub struct RanFunctionListing {
    pub node_id: NodeId,
    pub profile_name: String,
    pub kpm: BTreeMap<u16, KpmFunctionDefinition>,
    pub rc: BTreeMap<u16, RcFunctionDefinition>,
}

impl fmt::Display for RanFunctionListing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "node {} ({})", self.node_id, self.profile_name)?;
        for (id, def) in &self.kpm {
            writeln!(f, "  KPM rf={id}: {def}")?;
        }
        for (id, def) in &self.rc {
            writeln!(f, "  RC rf={id}: {def}")?;
        }
        Ok(())
    }
}

/// State shared with attached xApps for read-only queries and the SDL.
#[derive(Debug, Default)]
pub struct RicShared {
    registry: RwLock<BTreeMap<NodeId, NodeRecord>>,
    pub sdl: Sdl,
}

impl RicShared {
    pub fn list_ran_functions(&self, node: &NodeId) -> Result<RanFunctionListing, RicError> {
        let reg = self.registry.read().unwrap_or_else(|e| e.into_inner());
        let rec = reg.get(node).ok_or_else(|| RicError::UnknownNode(node.clone()))?;
        Ok(RanFunctionListing {
            node_id: node.clone(),
            profile_name: rec.descriptor.profile_name.clone(),
            kpm: rec.kpm.clone(),
            rc: rec.rc.clone(),
        })
    }

    pub fn get_ue_context(&self, node: &NodeId) -> Result<Vec<(UeId, CellId, Snssai)>, RicError> {
        let reg = self.registry.read().unwrap_or_else(|e| e.into_inner());
        let rec = reg.get(node).ok_or_else(|| RicError::UnknownNode(node.clone()))?;
        Ok(rec
            .ue_context
            .iter()
            .map(|(ue, (cell, s))| (ue.clone(), cell.clone(), *s))
            .collect())
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        self.registry.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, BTreeMap<NodeId, NodeRecord>> {
        self.registry.write().unwrap_or_else(|e| e.into_inner())
    }
}

type Inboxes = Arc<Mutex<BTreeMap<XAppId, Sender<InboxMsg>>>>;

/// How xApps reach the RIC. Holds no strong reference, so a stopped RIC
/// makes every call fail with [`RicError::Unreachable`].
#[derive(Clone, Debug)]
pub struct RicEndpoint {
    shared: Weak<RicShared>,
    inboxes: Weak<Mutex<BTreeMap<XAppId, Sender<InboxMsg>>>>,
    requests: Sender<(XAppId, XAppRequest)>,
}

impl RicEndpoint {
    fn shared(&self) -> Result<Arc<RicShared>, RicError> {
        self.shared.upgrade().ok_or(RicError::Unreachable)
    }

    /// Registers an inbox for `id`.
    pub fn attach(&self, id: XAppId) -> Result<XAppChannel, RicError> {
        let inboxes = self.inboxes.upgrade().ok_or(RicError::Unreachable)?;
        let mut map = inboxes.lock().unwrap_or_else(|e| e.into_inner());
        if map.contains_key(&id) {
            return Err(RicError::DuplicateXApp(id));
        }
        let (tx, rx) = channel();
        map.insert(id.clone(), tx);
        Ok(XAppChannel {
            id,
            endpoint: self.clone(),
            inbox: rx,
        })
    }

    pub fn list_ran_functions(&self, node: &NodeId) -> Result<RanFunctionListing, RicError> {
        self.shared()?.list_ran_functions(node)
    }

    pub fn get_ue_context(&self, node: &NodeId) -> Result<Vec<(UeId, CellId, Snssai)>, RicError> {
        self.shared()?.get_ue_context(node)
    }

    pub fn nodes(&self) -> Result<Vec<NodeId>, RicError> {
        Ok(self.shared()?.nodes())
    }

    pub fn sdl_put(&self, namespace: &str, key: &str, value: impl Into<Vec<u8>>) -> Result<(), RicError> {
        self.shared()?.sdl.put(namespace, key, value);
        Ok(())
    }

    pub fn sdl_get(&self, namespace: &str, key: &str) -> Result<Option<Vec<u8>>, RicError> {
        Ok(self.shared()?.sdl.get(namespace, key))
    }
}

/// One xApp's connection: its identity, request path and inbox.
#[derive(Debug)]
pub struct XAppChannel {
    id: XAppId,
    endpoint: RicEndpoint,
    inbox: Receiver<InboxMsg>,
}

impl XAppChannel {
    pub fn id(&self) -> &XAppId {
        &self.id
    }

    pub fn endpoint(&self) -> &RicEndpoint {
        &self.endpoint
    }

    pub fn send(&self, req: XAppRequest) -> Result<(), RicError> {
        if self.endpoint.shared.strong_count() == 0 {
            return Err(RicError::Unreachable);
        }
        self.endpoint
            .requests
            .send((self.id.clone(), req))
            .map_err(|_| RicError::Unreachable)
    }

    pub fn try_recv(&self) -> Option<InboxMsg> {
        self.inbox.try_recv().ok()
    }

    pub fn recv_timeout(&self, timeout: std::time::Duration) -> Option<InboxMsg> {
        self.inbox.recv_timeout(timeout).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum TargetKey {
    Slice(NodeId, CellId, Snssai),
    Ue(NodeId, UeId),
}

impl TargetKey {
    fn of(node: &NodeId, action: &RcControlAction) -> TargetKey {
        match &action.target {
            RcTarget::Slice { cell_id, snssai } => TargetKey::Slice(node.clone(), cell_id.clone(), *snssai),
            RcTarget::Ue(ue) | RcTarget::Handover { ue_id: ue, .. } => TargetKey::Ue(node.clone(), ue.clone()),
        }
    }
}

#[derive(Clone, Debug)]
struct QueuedControl {
    owner: XAppId,
    req_id: u64,
    action: RcControlAction,
    ack: bool,
}

impl QueuedControl {
    fn is_quota(&self) -> bool {
        matches!(self.action.params, RcParams::PrbQuota(_))
    }
}

#[derive(Debug, Default)]
struct TargetQueue {
    in_flight: Option<(ConnId, u32, bool)>,
    queued: VecDeque<QueuedControl>,
}

#[derive(Debug)]
enum PendingKind {
    Subscribe { subscription_id: u32 },
    Unsubscribe { subscription_id: u32, owner: XAppId, req_id: u64 },
    Control { key: TargetKey, ctl: QueuedControl },
}

#[derive(Debug)]
struct PendingTx {
    deadline: TimeMs,
    kind: PendingKind,
}

#[derive(Debug)]
struct ConnEntry {
    node: Option<NodeId>,
    state: ConnState,
    next_tid: u32,
    pending: BTreeMap<u32, PendingTx>,
}

#[derive(Debug, PartialEq, Eq)]
enum SubState {
    Pending,
    Active,
    Closing,
}

#[derive(Debug)]
struct SubEntry {
    node: NodeId,
    record: SubscriptionRecord,
    state: SubState,
    waiters: Vec<u64>,
}

#[derive(Debug)]
pub struct Ric {
    shared: Arc<RicShared>,
    inboxes: Inboxes,
    req_tx: Sender<(XAppId, XAppRequest)>,
    req_rx: Receiver<(XAppId, XAppRequest)>,
    vocab: Vocabulary,
    now: TimeMs,
    timeout_ms: TimeMs,
    conns: BTreeMap<ConnId, ConnEntry>,
    next_conn: ConnId,
    node_conn: BTreeMap<NodeId, ConnId>,
    subs: BTreeMap<u32, SubEntry>,
    next_sub: u32,
    targets: BTreeMap<TargetKey, TargetQueue>,
    outbox: Vec<(ConnId, Envelope)>,
    log: Vec<String>,
}

impl Default for Ric {
    fn default() -> Self {
        Self::new()
    }
}

/// Adapter so the registry can admit nodes through [`e2ap::handle_e2_setup`].
struct Admit<'a> {
    shared: &'a RicShared,
    vocab: &'a Vocabulary,
}

impl SetupRegistry for Admit<'_> {
    fn register(&mut self, desc: NodeDescriptor) -> Result<(), SetupError> {
        let mut reg = self.shared.write();
        if reg.contains_key(&desc.node_id) {
            return Err(SetupError::Duplicate(desc.node_id));
        }
        let mut kpm = BTreeMap::new();
        let mut rc = BTreeMap::new();
        for f in &desc.ran_functions {
            match f.sm_kind {
                SmKind::Kpm => {
                    if let Ok(def) = parse_kpm_function_definition(&f.definition, self.vocab) {
                        kpm.insert(f.ran_function_id, def);
                    }
                }
                SmKind::Rc => {
                    if let Ok(def) = parse_rc_function_definition(&f.definition) {
                        rc.insert(f.ran_function_id, def);
                    }
                }
            }
        }
        self.shared.sdl.put("e2nodes", desc.node_id.as_str(), desc.profile_name.clone());
        reg.insert(
            desc.node_id.clone(),
            NodeRecord {
                descriptor: desc,
                kpm,
                rc,
                ue_context: BTreeMap::new(),
            },
        );
        Ok(())
    }
}

impl Ric {
    pub fn new() -> Self {
        Self::with_vocabulary(Vocabulary::standard())
    }

    /// A RIC accepting KPM metric names beyond the standard set.
    pub fn with_vocabulary(vocab: Vocabulary) -> Self {
        let (req_tx, req_rx) = channel();
        Self {
            shared: Arc::new(RicShared::default()),
            inboxes: Arc::default(),
            req_tx,
            req_rx,
            vocab,
            now: 0,
            timeout_ms: RESPONSE_TIMEOUT_MS,
            conns: BTreeMap::new(),
            next_conn: 0,
            node_conn: BTreeMap::new(),
            subs: BTreeMap::new(),
            next_sub: 1,
            targets: BTreeMap::new(),
            outbox: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn set_response_timeout(&mut self, ms: TimeMs) {
        self.timeout_ms = ms;
    }

    pub fn endpoint(&self) -> RicEndpoint {
        RicEndpoint {
            shared: Arc::downgrade(&self.shared),
            inboxes: Arc::downgrade(&self.inboxes),
            requests: self.req_tx.clone(),
        }
    }

    pub fn shared(&self) -> &RicShared {
        &self.shared
    }

    pub fn sdl(&self) -> &Sdl {
        &self.shared.sdl
    }

    pub fn list_ran_functions(&self, node: &NodeId) -> Result<RanFunctionListing, RicError> {
        self.shared.list_ran_functions(node)
    }

    pub fn get_ue_context(&self, node: &NodeId) -> Result<Vec<(UeId, CellId, Snssai)>, RicError> {
        self.shared.get_ue_context(node)
    }

    pub fn now(&self) -> TimeMs {
        self.now
    }

    /// E2 agent log lines so far.
    pub fn log_lines(&self) -> &[String] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<String> {
        std::mem::take(&mut self.log)
    }

    pub fn drain_outbox(&mut self) -> Vec<(ConnId, Envelope)> {
        std::mem::take(&mut self.outbox)
    }

    /// Number of subscriptions in any state.
    pub fn subscription_count(&self) -> usize {
        self.subs.len()
    }

    /// Opens a slot for a new node connection.
    pub fn connect(&mut self) -> ConnId {
        let id = self.next_conn;
        self.next_conn += 1;
        self.conns.insert(
            id,
            ConnEntry {
                node: None,
                state: ConnState::default(),
                next_tid: 1,
                pending: BTreeMap::new(),
            },
        );
        id
    }

    pub fn conn_node(&self, conn: ConnId) -> Option<&NodeId> {
        self.conns.get(&conn).and_then(|c| c.node.as_ref())
    }

    /// Seeds a node's UE context (attach-time side channel from the RAN).
    pub fn set_ue_context(&mut self, node: &NodeId, ues: Vec<(UeId, CellId, Snssai)>) -> Result<(), RicError> {
        let mut reg = self.shared.write();
        let rec = reg.get_mut(node).ok_or_else(|| RicError::UnknownNode(node.clone()))?;
        rec.ue_context = ues.into_iter().map(|(u, c, s)| (u, (c, s))).collect();
        Ok(())
    }

    fn record(&mut self, node: &str, event: &str, tid: u32, rf: u16, cause: Option<Cause>) {
        let mut line = format!("{} {} {} tid={} rf={}", self.now, node, event, tid, rf);
        if let Some(c) = cause {
            line.push_str(&format!(" cause={c}"));
        }
        self.log.push(line);
    }

    fn notify(&self, xapp: &XAppId, msg: InboxMsg) {
        let map = self.inboxes.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(tx) = map.get(xapp) {
            // A detached xApp simply stops receiving.
            let _ = tx.send(msg);
        }
    }

    fn send(&mut self, conn: ConnId, env: Envelope) {
        let node = self.node_name(conn);
        self.record(&node, &format!("send:{}", env.msg_type), env.transaction_id, env.ran_function_id, e2ap::cause_of(&env));
        self.outbox.push((conn, env));
    }

    fn node_name(&self, conn: ConnId) -> String {
        self.conn_node(conn).map_or_else(|| "?".to_string(), |n| n.to_string())
    }

    fn step(&mut self, conn: ConnId, event: ConnEvent, env: &Envelope) -> bool {
        let Some(entry) = self.conns.get_mut(&conn) else {
            return false;
        };
        let step = step_connection(std::mem::take(&mut entry.state), event);
        entry.state = step.state;
        if let Some(v) = step.violation {
            let node = self.node_name(conn);
            self.record(&node, &format!("Violation:{:?}", v.kind), env.transaction_id, env.ran_function_id, None);
            return false;
        }
        true
    }

    fn alloc_tid(&mut self, conn: ConnId) -> u32 {
        let entry = self.conns.get_mut(&conn).expect("connection exists");
        let tid = entry.next_tid;
        entry.next_tid = entry.next_tid.wrapping_add(1).max(1);
        tid
    }

    /// Advances the router clock and fires expired transactions.
    pub fn tick(&mut self, now: TimeMs) {
        self.now = now;
        let expired: Vec<(ConnId, u32)> = self
            .conns
            .iter()
            .flat_map(|(c, e)| e.pending.iter().filter(|(_, p)| p.deadline <= now).map(move |(t, _)| (*c, *t)))
            .collect();
        for (conn, tid) in expired {
            let Some(p) = self.conns.get_mut(&conn).and_then(|e| e.pending.remove(&tid)) else {
                continue;
            };
            let rf = match &p.kind {
                PendingKind::Control { .. } => self.rc_function(conn).unwrap_or(0),
                PendingKind::Subscribe { subscription_id } | PendingKind::Unsubscribe { subscription_id, .. } => {
                    self.subs.get(subscription_id).map_or(0, |s| s.record.ran_function_id)
                }
            };
            let env = Envelope::new(MsgType::ControlAck, tid, rf, Vec::new());
            self.step(conn, ConnEvent::Timeout { tid }, &env);
            let node = self.node_name(conn);
            match p.kind {
                PendingKind::Subscribe { subscription_id } => {
                    self.record(&node, "Timeout", tid, rf, Some(Cause::Timeout));
                    if let Some(sub) = self.subs.remove(&subscription_id) {
                        for req_id in sub.waiters {
                            self.notify(&sub.record.requester, InboxMsg::Subscribed {
                                req_id,
                                result: Err(Cause::Timeout),
                            });
                        }
                    }
                }
                PendingKind::Unsubscribe {
                    subscription_id,
                    owner,
                    req_id,
                } => {
                    self.record(&node, "Timeout", tid, rf, Some(Cause::Timeout));
                    self.subs.remove(&subscription_id);
                    self.notify(&owner, InboxMsg::Unsubscribed {
                        req_id,
                        result: Err(Cause::Timeout),
                    });
                }
                PendingKind::Control { key, ctl } => {
                    if ctl.ack {
                        self.record(&node, "Timeout", tid, rf, Some(Cause::Timeout));
                        self.finish_control(conn, tid, key, ctl, Err(Cause::Timeout));
                    } else {
                        // No failure within the window: treated as executed.
                        self.record(&node, "Timeout", tid, rf, None);
                        self.finish_control(conn, tid, key, ctl, Ok(()));
                    }
                }
            }
        }
    }

    /// Drains and handles every queued xApp request.
    pub fn process_requests(&mut self) {
        while let Ok((xapp, req)) = self.req_rx.try_recv() {
            self.handle_request(xapp, req);
        }
    }

    pub fn handle_request(&mut self, xapp: XAppId, req: XAppRequest) {
        match req {
            XAppRequest::Subscribe {
                req_id,
                node,
                ran_function_id,
                period_ms,
                actions,
            } => self.create_subscription(xapp, req_id, node, ran_function_id, period_ms, actions),
            XAppRequest::Unsubscribe { req_id, subscription_id } => self.delete_subscription(xapp, req_id, subscription_id),
            XAppRequest::Control {
                req_id,
                node,
                action,
                ack,
            } => self.submit_control(xapp, req_id, node, action, ack),
        }
    }

    fn create_subscription(
        &mut self,
        xapp: XAppId,
        req_id: u64,
        node: NodeId,
        ran_function_id: u16,
        period_ms: u32,
        actions: Vec<(u16, Vec<u8>)>,
    ) {
        let Some(&conn) = self.node_conn.get(&node) else {
            self.notify(&xapp, InboxMsg::Subscribed {
                req_id,
                result: Err(Cause::UnknownNode),
            });
            return;
        };
        let mut record = SubscriptionRecord {
            subscription_id: 0,
            ran_function_id,
            period_ms,
            action_definitions: actions,
            requester: xapp.clone(),
        };
        if record.is_delete() {
            self.notify(&xapp, InboxMsg::Subscribed {
                req_id,
                result: Err(Cause::UnsupportedAction),
            });
            return;
        }
        let existing = self
            .subs
            .iter_mut()
            .find(|(_, s)| s.node == node && s.state != SubState::Closing && s.record.same_request(&record));
        if let Some((&id, sub)) = existing {
            if sub.state == SubState::Active {
                self.notify(&xapp, InboxMsg::Subscribed { req_id, result: Ok(id) });
            } else {
                sub.waiters.push(req_id);
            }
            return;
        }
        let id = self.next_sub;
        self.next_sub += 1;
        record.subscription_id = id;
        let tid = self.alloc_tid(conn);
        let env = match record.to_envelope(tid) {
            Ok(env) => env,
            Err(_) => {
                self.notify(&xapp, InboxMsg::Subscribed {
                    req_id,
                    result: Err(Cause::Malformed),
                });
                return;
            }
        };
        if !self.step(conn, ConnEvent::SubscriptionRequest { tid }, &env) {
            self.notify(&xapp, InboxMsg::Subscribed {
                req_id,
                result: Err(Cause::Malformed),
            });
            return;
        }
        self.subs.insert(
            id,
            SubEntry {
                node,
                record,
                state: SubState::Pending,
                waiters: vec![req_id],
            },
        );
        self.add_pending(conn, tid, PendingKind::Subscribe { subscription_id: id });
        self.send(conn, env);
    }

    fn delete_subscription(&mut self, xapp: XAppId, req_id: u64, subscription_id: u32) {
        let owned = self
            .subs
            .get(&subscription_id)
            .filter(|s| s.record.requester == xapp && s.state == SubState::Active);
        let Some(sub) = owned else {
            self.notify(&xapp, InboxMsg::Unsubscribed {
                req_id,
                result: Err(Cause::NotEnforced),
            });
            return;
        };
        let rf = sub.record.ran_function_id;
        let Some(&conn) = self.node_conn.get(&sub.node) else {
            return;
        };
        let tid = self.alloc_tid(conn);
        let env = subscription_delete(subscription_id, rf, tid);
        if !self.step(
            conn,
            ConnEvent::SubscriptionDeleteRequest { tid, subscription_id },
            &env,
        ) {
            self.notify(&xapp, InboxMsg::Unsubscribed {
                req_id,
                result: Err(Cause::Malformed),
            });
            return;
        }
        if let Some(s) = self.subs.get_mut(&subscription_id) {
            // Stop routing right away; late indications are dropped.
            s.state = SubState::Closing;
        }
        self.add_pending(
            conn,
            tid,
            PendingKind::Unsubscribe {
                subscription_id,
                owner: xapp,
                req_id,
            },
        );
        self.send(conn, env);
    }

    fn add_pending(&mut self, conn: ConnId, tid: u32, kind: PendingKind) {
        let deadline = self.now + self.timeout_ms;
        if let Some(e) = self.conns.get_mut(&conn) {
            e.pending.insert(tid, PendingTx { deadline, kind });
        }
    }

    fn rc_function(&self, conn: ConnId) -> Option<u16> {
        let node = self.conn_node(conn)?;
        let reg = self.shared.registry.read().unwrap_or_else(|e| e.into_inner());
        reg.get(node)?
            .descriptor
            .ran_functions
            .iter()
            .find(|f| f.sm_kind == SmKind::Rc)
            .map(|f| f.ran_function_id)
    }

    /// Queues or sends a control for `node` on behalf of `xapp`.
    pub fn submit_control(&mut self, xapp: XAppId, req_id: u64, node: NodeId, action: RcControlAction, ack: bool) {
        let Some(&conn) = self.node_conn.get(&node) else {
            self.notify(&xapp, InboxMsg::ControlOutcome {
                req_id,
                result: Err(Cause::UnknownNode),
            });
            return;
        };
        let ctl = QueuedControl {
            owner: xapp,
            req_id,
            action,
            ack,
        };
        let key = TargetKey::of(&node, &ctl.action);
        let queue = self.targets.entry(key.clone()).or_default();
        let busy = queue.in_flight.is_some() || !queue.queued.is_empty();
        if !busy {
            self.dispatch(conn, key, ctl);
            return;
        }
        let mut superseded = None;
        let mut conflict = false;
        if ctl.is_quota() {
            if let Some(pos) = queue.queued.iter().position(QueuedControl::is_quota) {
                superseded = queue.queued.remove(pos);
                conflict = true;
            } else if queue.in_flight.is_some() {
                conflict = true;
            }
        }
        queue.queued.push_back(ctl);
        let rf = self.rc_function(conn).unwrap_or(0);
        let in_flight_tid = self.targets[&key].in_flight.map_or(0, |(_, t, _)| t);
        if conflict {
            self.record(
                node.as_str(),
                "Conflict",
                in_flight_tid,
                rf,
                superseded.as_ref().map(|_| Cause::Superseded),
            );
        }
        if let Some(old) = superseded {
            self.notify(&old.owner, InboxMsg::ControlOutcome {
                req_id: old.req_id,
                result: Err(Cause::Superseded),
            });
        }
    }

    fn dispatch(&mut self, conn: ConnId, key: TargetKey, ctl: QueuedControl) {
        let Some(rf) = self.rc_function(conn) else {
            self.notify(&ctl.owner, InboxMsg::ControlOutcome {
                req_id: ctl.req_id,
                result: Err(Cause::UnknownFunction),
            });
            return self.pump(key);
        };
        let encoded = encode_rc_control(&ctl.action)
            .ok()
            .and_then(|(h, m)| control_request(0, rf, &h, &m, ctl.ack).ok());
        let Some(mut env) = encoded else {
            self.notify(&ctl.owner, InboxMsg::ControlOutcome {
                req_id: ctl.req_id,
                result: Err(Cause::Malformed),
            });
            return self.pump(key);
        };
        let tid = self.alloc_tid(conn);
        env.transaction_id = tid;
        if !self.step(conn, ConnEvent::ControlRequest { tid }, &env) {
            self.notify(&ctl.owner, InboxMsg::ControlOutcome {
                req_id: ctl.req_id,
                result: Err(Cause::Malformed),
            });
            return self.pump(key);
        }
        let ack = ctl.ack;
        self.add_pending(conn, tid, PendingKind::Control { key: key.clone(), ctl });
        self.send(conn, env);
        if ack {
            self.targets.entry(key).or_default().in_flight = Some((conn, tid, true));
        } else {
            // Nothing will confirm it; the target is free once it is on the wire.
            self.pump(key);
        }
    }

    /// Sends the next queued control for `key`, if the target is idle.
    fn pump(&mut self, key: TargetKey) {
        let Some(queue) = self.targets.get_mut(&key) else {
            return;
        };
        if queue.in_flight.is_some() {
            return;
        }
        let Some(next) = queue.queued.pop_front() else {
            self.targets.remove(&key);
            return;
        };
        let node = match &key {
            TargetKey::Slice(n, ..) | TargetKey::Ue(n, _) => n.clone(),
        };
        match self.node_conn.get(&node) {
            Some(&conn) => self.dispatch(conn, key, next),
            None => self.notify(&next.owner, InboxMsg::ControlOutcome {
                req_id: next.req_id,
                result: Err(Cause::NodeDisconnected),
            }),
        }
    }

    fn finish_control(&mut self, conn: ConnId, tid: u32, key: TargetKey, ctl: QueuedControl, result: Result<(), Cause>) {
        if result.is_ok() {
            if let RcTarget::Handover { ue_id, target_cell_id } = &ctl.action.target {
                if let Some(node) = self.conn_node(conn).cloned() {
                    let mut reg = self.shared.write();
                    if let Some(entry) = reg.get_mut(&node).and_then(|r| r.ue_context.get_mut(ue_id)) {
                        entry.0 = target_cell_id.clone();
                    }
                }
            }
        }
        self.notify(&ctl.owner, InboxMsg::ControlOutcome {
            req_id: ctl.req_id,
            result,
        });
        if let Some(q) = self.targets.get_mut(&key) {
            if q.in_flight.is_some_and(|(c, t, _)| c == conn && t == tid) {
                q.in_flight = None;
            }
        }
        self.pump(key);
    }

    /// Handles one envelope received on `conn`.
    pub fn handle_envelope(&mut self, conn: ConnId, env: Envelope) {
        if !self.conns.contains_key(&conn) {
            return;
        }
        let node_label = match (self.conn_node(conn), env.msg_type) {
            (Some(n), _) => n.to_string(),
            (None, MsgType::E2SetupRequest) => {
                decode_setup_request(&env).map_or_else(|_| "?".to_string(), |d| d.node_id.to_string())
            }
            (None, _) => "?".to_string(),
        };
        self.record(
            &node_label,
            &format!("recv:{}", env.msg_type),
            env.transaction_id,
            env.ran_function_id,
            e2ap::cause_of(&env),
        );
        match env.msg_type {
            MsgType::E2SetupRequest => self.on_setup(conn, env),
            MsgType::SubscriptionResponse => self.on_subscription_response(conn, env),
            MsgType::SubscriptionFailure => self.on_subscription_failure(conn, env),
            MsgType::Indication => self.on_indication(conn, env),
            MsgType::ControlAck | MsgType::ControlFailure => self.on_control_response(conn, env),
            _ => {
                self.record(&node_label, "Violation:WrongDirection", env.transaction_id, env.ran_function_id, None);
            }
        }
    }

    fn on_setup(&mut self, conn: ConnId, env: Envelope) {
        if !self.step(conn, ConnEvent::SetupRequest, &env) {
            return;
        }
        let mut admit = Admit {
            shared: &self.shared,
            vocab: &self.vocab,
        };
        let outcome = e2ap::handle_e2_setup(&env, &mut admit);
        let (reply, accepted) = match outcome {
            Ok(reply) => (reply, true),
            Err(e2ap::E2apError::Setup(SetupError::Duplicate(_))) => {
                (e2ap::setup_response(env.transaction_id, Err(Cause::Duplicate)), false)
            }
            Err(_) => (e2ap::setup_response(env.transaction_id, Err(Cause::Malformed)), false),
        };
        if accepted {
            let desc = decode_setup_request(&env).expect("accepted setup decodes");
            self.node_conn.insert(desc.node_id.clone(), conn);
            if let Some(e) = self.conns.get_mut(&conn) {
                e.node = Some(desc.node_id);
            }
        }
        self.step(conn, ConnEvent::SetupResponse { accepted }, &reply);
        self.send(conn, reply);
    }

    fn take_pending(&mut self, conn: ConnId, tid: u32) -> Option<PendingTx> {
        self.conns.get_mut(&conn)?.pending.remove(&tid)
    }

    fn on_subscription_response(&mut self, conn: ConnId, env: Envelope) {
        let Ok((subscription_id, _)) = decode_subscription_response(&env) else {
            return self.malformed(conn, &env);
        };
        let tid = env.transaction_id;
        if !self.step(conn, ConnEvent::SubscriptionResponse { tid, subscription_id }, &env) {
            return;
        }
        match self.take_pending(conn, tid).map(|p| p.kind) {
            Some(PendingKind::Subscribe { .. }) => {
                if let Some(sub) = self.subs.get_mut(&subscription_id) {
                    sub.state = SubState::Active;
                    let waiters = std::mem::take(&mut sub.waiters);
                    let owner = sub.record.requester.clone();
                    for req_id in waiters {
                        self.notify(&owner, InboxMsg::Subscribed {
                            req_id,
                            result: Ok(subscription_id),
                        });
                    }
                }
            }
            Some(PendingKind::Unsubscribe { owner, req_id, .. }) => {
                self.subs.remove(&subscription_id);
                self.notify(&owner, InboxMsg::Unsubscribed {
                    req_id,
                    result: Ok(subscription_id),
                });
            }
            _ => {}
        }
    }

    fn on_subscription_failure(&mut self, conn: ConnId, env: Envelope) {
        let Ok((subscription_id, cause)) = decode_subscription_failure(&env) else {
            return self.malformed(conn, &env);
        };
        let tid = env.transaction_id;
        if !self.step(conn, ConnEvent::SubscriptionFailure { tid }, &env) {
            return;
        }
        match self.take_pending(conn, tid).map(|p| p.kind) {
            Some(PendingKind::Subscribe { .. }) => {
                if let Some(sub) = self.subs.remove(&subscription_id) {
                    for req_id in sub.waiters {
                        self.notify(&sub.record.requester, InboxMsg::Subscribed {
                            req_id,
                            result: Err(cause),
                        });
                    }
                }
            }
            Some(PendingKind::Unsubscribe { owner, req_id, .. }) => {
                self.subs.remove(&subscription_id);
                self.notify(&owner, InboxMsg::Unsubscribed {
                    req_id,
                    result: Err(cause),
                });
            }
            _ => {}
        }
    }

    fn on_indication(&mut self, conn: ConnId, env: Envelope) {
        let Ok(ind) = Indication::from_envelope(&env) else {
            return self.malformed(conn, &env);
        };
        let sid = ind.subscription_id;
        if !self.step(conn, ConnEvent::Indication { subscription_id: sid }, &env) {
            return;
        }
        let Some(node) = self.conn_node(conn).cloned() else {
            return;
        };
        let owner = self
            .subs
            .get(&sid)
            .filter(|s| s.state == SubState::Active && s.node == node)
            .map(|s| s.record.requester.clone());
        match owner {
            Some(owner) => self.notify(&owner, InboxMsg::Indication {
                node,
                subscription_id: sid,
                action_id: ind.action_id,
                header: ind.header,
                message: ind.message,
            }),
            None => self.record(node.as_str(), "Stale", env.transaction_id, env.ran_function_id, None),
        }
    }

    fn on_control_response(&mut self, conn: ConnId, env: Envelope) {
        let tid = env.transaction_id;
        let (event, result) = if env.msg_type == MsgType::ControlAck {
            (ConnEvent::ControlAck { tid }, Ok(()))
        } else {
            match decode_control_failure(&env) {
                Ok(cause) => (ConnEvent::ControlFailure { tid }, Err(cause)),
                Err(_) => return self.malformed(conn, &env),
            }
        };
        if !self.step(conn, event, &env) {
            return;
        }
        if let Some(PendingKind::Control { key, ctl }) = self.take_pending(conn, tid).map(|p| p.kind) {
            self.finish_control(conn, tid, key, ctl, result);
        }
    }

    fn malformed(&mut self, conn: ConnId, env: &Envelope) {
        let node = self.node_name(conn);
        self.record(&node, "Malformed", env.transaction_id, env.ran_function_id, Some(Cause::Malformed));
    }

    /// Tears down everything tied to a lost connection and tells the owners.
    pub fn node_disconnected(&mut self, conn: ConnId) {
        let Some(entry) = self.conns.remove(&conn) else {
            return;
        };
        let Some(node) = entry.node else {
            return;
        };
        self.record(node.as_str(), "Disconnect", 0, 0, Some(Cause::NodeDisconnected));
        self.node_conn.remove(&node);
        self.shared.write().remove(&node);
        self.shared.sdl.delete("e2nodes", node.as_str());
        let ended: Vec<u32> = self.subs.iter().filter(|(_, s)| s.node == node).map(|(id, _)| *id).collect();
        for id in ended {
            let sub = self.subs.remove(&id).expect("listed above");
            let owner = sub.record.requester;
            if sub.state == SubState::Pending {
                for req_id in sub.waiters {
                    self.notify(&owner, InboxMsg::Subscribed {
                        req_id,
                        result: Err(Cause::NodeDisconnected),
                    });
                }
            } else {
                self.notify(&owner, InboxMsg::SubscriptionEnded {
                    subscription_id: id,
                    cause: Cause::NodeDisconnected,
                });
            }
        }
        for (_, p) in entry.pending {
            match p.kind {
                PendingKind::Control { ctl, .. } => self.notify(&ctl.owner, InboxMsg::ControlOutcome {
                    req_id: ctl.req_id,
                    result: Err(Cause::NodeDisconnected),
                }),
                PendingKind::Unsubscribe { owner, req_id, .. } => self.notify(&owner, InboxMsg::Unsubscribed {
                    req_id,
                    result: Err(Cause::NodeDisconnected),
                }),
                PendingKind::Subscribe { .. } => {}
            }
        }
        let keys: Vec<TargetKey> = self
            .targets
            .keys()
            .filter(|k| matches!(k, TargetKey::Slice(n, ..) | TargetKey::Ue(n, _) if *n == node))
            .cloned()
            .collect();
        for k in keys {
            if let Some(q) = self.targets.remove(&k) {
                for ctl in q.queued {
                    self.notify(&ctl.owner, InboxMsg::ControlOutcome {
                        req_id: ctl.req_id,
                        result: Err(Cause::NodeDisconnected),
                    });
                }
            }
        }
    }
}
