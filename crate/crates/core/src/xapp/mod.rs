//! xApp SDK: a base that owns the RIC connection and the single inbox, plus
//! KPM and RC frames that attach to it.
//!
//! Frames are views over the base, so everything an xApp does — reports,
//! subscription results, control outcomes — arrives on one ordered stream.
//! Requests are asynchronous: each returns a request id, and the matching
//! outcome shows up later as an [`XAppEvent`].

mod closed_loop;
mod reference;

pub use closed_loop::{ClosedLoop, ClosedLoopPolicy, LoopOutcome, LoopStep, PolicyError};
pub use reference::{
    HandoverMode, HandoverXApp, KpmPrbLoopXApp, MonitorXApp, PrbControlXApp, Outcome, MONITOR_CSV_HEADER,
};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::e2ap::{Cause, SmKind};
use crate::kpm::{build_kpm_action, decode_kpm_report, KpmActionDefinition, KpmReport, KpmStyle, KPM_RAN_FUNCTION_ID};
use crate::rc::{build_handover, build_prb_quota, build_qos_flow_map, QosFlowMapParams, RcControlAction, RcStyle};
use crate::ric::{InboxMsg, RicEndpoint, RicError, XAppChannel, XAppRequest};
use crate::types::{CellId, NodeId, Snssai, TimeMs, UeId, XAppId};

/// Identifies one asynchronous request.
pub type ReqId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum XAppError {
    #[error(transparent)]
    Ric(#[from] RicError),
    #[error("the {0} frame is not attached")]
    NotAttached(&'static str),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("node {node} advertises no {sm} function")]
    NoFunction { node: NodeId, sm: &'static str },
    #[error("control {req} failed: {cause}")]
    ControlFailed { req: ReqId, cause: Cause },
    #[error("subscription to {node} failed: {cause}")]
    SubscriptionFailed { node: NodeId, cause: Cause },
    #[error("closed loop: {0}")]
    Policy(#[from] PolicyError),
}

/// Something that happened on the xApp's inbox.
#[derive(Clone, Debug, PartialEq)]
pub enum XAppEvent {
    Report {
        node: NodeId,
        subscription_id: u32,
        report: KpmReport,
    },
    /// An indication whose payload did not decode as a KPM report.
    BadReport {
        node: NodeId,
        subscription_id: u32,
        error: String,
    },
    Subscribed {
        req: ReqId,
        result: Result<u32, Cause>,
    },
    Unsubscribed {
        req: ReqId,
        result: Result<u32, Cause>,
    },
    SubscriptionEnded {
        subscription_id: u32,
        cause: Cause,
    },
    Control {
        req: ReqId,
        result: Result<(), Cause>,
    },
}

type ReportHandler = Box<dyn FnMut(&NodeId, u32, &KpmReport)>;

/// The xApp shell: identity, RIC endpoint, inbox and attached frames.
pub struct XAppBase {
    chan: XAppChannel,
    next_req: ReqId,
    kpm: bool,
    rc: BTreeSet<RcStyle>,
    on_report: Option<ReportHandler>,
}

impl std::fmt::Debug for XAppBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("XAppBase")
            .field("id", self.chan.id())
            .field("kpm", &self.kpm)
            .field("rc", &self.rc)
            .finish_non_exhaustive()
    }
}

impl XAppBase {
    /// Connects to the RIC; fails if it is not running or the id is taken.
    pub fn new(endpoint: &RicEndpoint, id: impl Into<XAppId>) -> Result<Self, XAppError> {
        let chan = endpoint.attach(id.into())?;
        Ok(Self {
            chan,
            next_req: 1,
            kpm: false,
            rc: BTreeSet::new(),
            on_report: None,
        })
    }

    pub fn id(&self) -> &XAppId {
        self.chan.id()
    }

    pub fn endpoint(&self) -> &RicEndpoint {
        self.chan.endpoint()
    }

    pub fn attach_kpm(&mut self) -> KpmFrame<'_> {
        self.kpm = true;
        KpmFrame { base: self }
    }

    /// Attaches the RC frame for `style`; styles accumulate.
    pub fn attach_rc(&mut self, style: RcStyle) -> RcFrame<'_> {
        self.rc.insert(style);
        RcFrame { base: self }
    }

    pub fn kpm(&mut self) -> Result<KpmFrame<'_>, XAppError> {
        if !self.kpm {
            return Err(XAppError::NotAttached("KPM"));
        }
        Ok(KpmFrame { base: self })
    }

    pub fn rc(&mut self) -> Result<RcFrame<'_>, XAppError> {
        if self.rc.is_empty() {
            return Err(XAppError::NotAttached("RC"));
        }
        Ok(RcFrame { base: self })
    }

    pub fn has_kpm(&self) -> bool {
        self.kpm
    }

    pub fn rc_styles(&self) -> &BTreeSet<RcStyle> {
        &self.rc
    }

    fn send(&mut self, build: impl FnOnce(ReqId) -> XAppRequest) -> Result<ReqId, XAppError> {
        let req = self.next_req;
        self.next_req += 1;
        self.chan.send(build(req))?;
        Ok(req)
    }

    fn function_id(&self, node: &NodeId, sm: SmKind) -> Result<u16, XAppError> {
        let listing = self.endpoint().list_ran_functions(node)?;
        let (ids, name): (Vec<u16>, _) = match sm {
            SmKind::Kpm => (listing.kpm.keys().copied().collect(), "KPM"),
            SmKind::Rc => (listing.rc.keys().copied().collect(), "RC"),
        };
        ids.first().copied().ok_or(XAppError::NoFunction {
            node: node.clone(),
            sm: name,
        })
    }

    /// Drains the inbox. Reports go to the registered handler if there is
    /// one; every other message, and reports without a handler, are returned.
    pub fn poll(&mut self) -> Vec<XAppEvent> {
        let mut out = Vec::new();
        while let Some(msg) = self.chan.try_recv() {
            let ev = decode_event(msg);
            match (ev, self.on_report.as_mut()) {
                (
                    XAppEvent::Report {
                        node,
                        subscription_id,
                        report,
                    },
                    Some(handler),
                ) => handler(&node, subscription_id, &report),
                (ev, _) => out.push(ev),
            }
        }
        out
    }

    /// Like [`poll`](Self::poll), but waits up to `timeout` for the first message.
    pub fn poll_blocking(&mut self, timeout: std::time::Duration) -> Vec<XAppEvent> {
        match self.chan.recv_timeout(timeout) {
            Some(first) => {
                let mut out = Vec::new();
                match decode_event(first) {
                    XAppEvent::Report {
                        node,
                        subscription_id,
                        report,
                    } if self.on_report.is_some() => {
                        (self.on_report.as_mut().expect("checked"))(&node, subscription_id, &report)
                    }
                    ev => out.push(ev),
                }
                out.extend(self.poll());
                out
            }
            None => Vec::new(),
        }
    }
}

fn decode_event(msg: InboxMsg) -> XAppEvent {
    match msg {
        InboxMsg::Indication {
            node,
            subscription_id,
            header,
            message,
            ..
        } => match decode_kpm_report(&header, &message) {
            Ok(report) => XAppEvent::Report {
                node,
                subscription_id,
                report,
            },
            Err(e) => XAppEvent::BadReport {
                node,
                subscription_id,
                error: e.to_string(),
            },
        },
        InboxMsg::Subscribed { req_id, result } => XAppEvent::Subscribed { req: req_id, result },
        InboxMsg::Unsubscribed { req_id, result } => XAppEvent::Unsubscribed { req: req_id, result },
        InboxMsg::SubscriptionEnded { subscription_id, cause } => {
            XAppEvent::SubscriptionEnded { subscription_id, cause }
        }
        InboxMsg::ControlOutcome { req_id, result } => XAppEvent::Control { req: req_id, result },
    }
}

/// KPM monitoring capability.
pub struct KpmFrame<'a> {
    base: &'a mut XAppBase,
}

impl KpmFrame<'_> {
    /// Subscribes to style-3 measurements of `metrics` every `period_ms`,
    /// optionally restricted to one slice. Metric support is checked by the
    /// node; a refusal comes back as a failed [`XAppEvent::Subscribed`].
    pub fn subscribe(
        &mut self,
        node: &NodeId,
        metrics: &[&str],
        period_ms: u32,
        snssai: Option<Snssai>,
    ) -> Result<ReqId, XAppError> {
        let rf = self.base.function_id(node, SmKind::Kpm).unwrap_or(KPM_RAN_FUNCTION_ID);
        let def = KpmActionDefinition {
            style: KpmStyle::CommonConditionUeMeasurement,
            metrics: metrics.iter().map(|m| m.to_string()).collect(),
            granularity_ms: period_ms,
            snssai,
        };
        let action = build_kpm_action(&def).map_err(|e| XAppError::Invalid(e.to_string()))?;
        let node = node.clone();
        self.base.send(move |req_id| XAppRequest::Subscribe {
            req_id,
            node,
            ran_function_id: rf,
            period_ms,
            actions: vec![(1, action)],
        })
    }

    pub fn unsubscribe(&mut self, subscription_id: u32) -> Result<ReqId, XAppError> {
        self.base.send(move |req_id| XAppRequest::Unsubscribe {
            req_id,
            subscription_id,
        })
    }

    /// Installs the report handler; it runs inside [`XAppBase::poll`].
    pub fn on_report(&mut self, handler: impl FnMut(&NodeId, u32, &KpmReport) + 'static) {
        self.base.on_report = Some(Box::new(handler));
    }
}

/// RC control capability: thin typed wrappers over a control request.
pub struct RcFrame<'a> {
    base: &'a mut XAppBase,
}

impl RcFrame<'_> {
    pub fn send(&mut self, node: &NodeId, action: RcControlAction, ack: bool) -> Result<ReqId, XAppError> {
        if !self.base.rc.contains(&action.style) {
            return Err(XAppError::NotAttached(action.style.name()));
        }
        let node = node.clone();
        self.base.send(move |req_id| XAppRequest::Control {
            req_id,
            node,
            action,
            ack,
        })
    }

    pub fn send_prb_quota(
        &mut self,
        node: &NodeId,
        cell: &CellId,
        snssai: Snssai,
        dedicated_pct: u8,
        min_pct: u8,
        max_pct: u8,
    ) -> Result<ReqId, XAppError> {
        let action = build_prb_quota(cell.clone(), snssai, dedicated_pct, min_pct, max_pct)
            .map_err(|e| XAppError::Invalid(e.to_string()))?;
        self.send(node, action, true)
    }

    pub fn send_handover(&mut self, node: &NodeId, ue: &UeId, target: &CellId) -> Result<ReqId, XAppError> {
        let action = build_handover(ue.clone(), target.clone()).map_err(|e| XAppError::Invalid(e.to_string()))?;
        self.send(node, action, true)
    }

    pub fn send_qos_flow_map(
        &mut self,
        node: &NodeId,
        ue: &UeId,
        params: QosFlowMapParams,
    ) -> Result<ReqId, XAppError> {
        let action = build_qos_flow_map(ue.clone(), params).map_err(|e| XAppError::Invalid(e.to_string()))?;
        self.send(node, action, true)
    }
}

/// An xApp that a driver steps once per millisecond.
pub trait XApp {
    fn id(&self) -> &XAppId;

    /// Handles whatever arrived since the last call; `now` is the tick just processed.
    fn step(&mut self, now: TimeMs) -> Result<(), XAppError>;

    /// Files this xApp wants written next to the run's artifacts.
    fn artifacts(&self) -> Vec<(String, String)> {
        Vec::new()
    }

    /// Lines for the run summary.
    fn summary(&self) -> Vec<String> {
        Vec::new()
    }

    /// For drivers and tests that need the concrete type back.
    fn as_any(&self) -> &dyn std::any::Any;
}
