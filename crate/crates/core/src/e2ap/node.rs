//! E2-node side of the procedures: setup, subscription admission,
//! indication delivery and control responses.

use std::collections::BTreeMap;

use crate::codec::{Envelope, MsgType};
use crate::kpm::{decode_kpm_action, parse_kpm_function_definition, KpmActionDefinition, KpmFunctionDefinition, KpmStyle, Vocabulary};

use super::{
    build_e2_setup, control_ack, control_failure, decode_control_request, decode_setup_response,
    step_connection, subscription_failure, subscription_response, Cause, ConnEvent, ConnState, E2apError,
    Indication, NodeDescriptor, ProtocolViolation, SmKind, SubscriptionRecord, MAX_PERIOD_MS, MIN_PERIOD_MS,
};

/// A KPM subscription the node has accepted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdmittedSubscription {
    pub subscription_id: u32,
    pub ran_function_id: u16,
    pub period_ms: u32,
    pub actions: Vec<(u16, KpmActionDefinition)>,
}

/// A control request awaiting execution by the RAN.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlCommand {
    pub transaction_id: u32,
    pub ran_function_id: u16,
    pub header: Vec<u8>,
    pub message: Vec<u8>,
    pub ack_requested: bool,
}

/// What an incoming envelope means for the node.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeEvent {
    SetupDone(Result<(), Cause>),
    Subscribed { reply: Envelope, subscription: AdmittedSubscription },
    Unsubscribed { reply: Envelope, subscription_id: u32 },
    /// A subscription request was refused; `reply` carries the failure.
    Refused { reply: Envelope, cause: Cause },
    Control(ControlCommand),
    Violation(ProtocolViolation),
}

#[derive(Debug)]
pub struct NodeSession {
    desc: NodeDescriptor,
    kpm: BTreeMap<u16, KpmFunctionDefinition>,
    conn: ConnState,
    subs: BTreeMap<u32, AdmittedSubscription>,
    next_tid: u32,
}

impl NodeSession {
    /// Parses the node's own KPM definitions against `vocab`.
    pub fn new(desc: NodeDescriptor, vocab: &Vocabulary) -> Result<Self, E2apError> {
        let mut kpm = BTreeMap::new();
        for f in desc.ran_functions.iter().filter(|f| f.sm_kind == SmKind::Kpm) {
            let def = parse_kpm_function_definition(&f.definition, vocab)
                .map_err(|_| E2apError::BadField(MsgType::E2SetupRequest))?;
            kpm.insert(f.ran_function_id, def);
        }
        Ok(Self {
            desc,
            kpm,
            conn: ConnState::default(),
            subs: BTreeMap::new(),
            next_tid: 1,
        })
    }

    pub fn descriptor(&self) -> &NodeDescriptor {
        &self.desc
    }

    pub fn conn(&self) -> &ConnState {
        &self.conn
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &AdmittedSubscription> {
        self.subs.values()
    }

    fn tid(&mut self) -> u32 {
        let t = self.next_tid;
        self.next_tid = self.next_tid.wrapping_add(1);
        t
    }

    fn apply(&mut self, event: ConnEvent) -> Option<ProtocolViolation> {
        let step = step_connection(std::mem::take(&mut self.conn), event);
        self.conn = step.state;
        step.violation
    }

    pub fn setup_request(&mut self) -> Result<Envelope, E2apError> {
        let tid = self.tid();
        let env = build_e2_setup(&self.desc, tid)?;
        self.apply(ConnEvent::SetupRequest);
        Ok(env)
    }

    /// Admission checks for a subscription request.
    pub fn subscribe(&self, record: &SubscriptionRecord) -> Result<AdmittedSubscription, Cause> {
        if !self.conn.is_established() {
            return Err(Cause::Malformed);
        }
        let func = self.desc.function(record.ran_function_id).ok_or(Cause::UnknownFunction)?;
        if func.sm_kind != SmKind::Kpm {
            return Err(Cause::UnsupportedAction);
        }
        if !(MIN_PERIOD_MS..=MAX_PERIOD_MS).contains(&record.period_ms) {
            return Err(Cause::BadTrigger);
        }
        if self.subs.contains_key(&record.subscription_id) {
            return Err(Cause::Duplicate);
        }
        let def = &self.kpm[&record.ran_function_id];
        let mut actions = Vec::with_capacity(record.action_definitions.len());
        for (action_id, bytes) in &record.action_definitions {
            let mut action = decode_kpm_action(bytes).map_err(|_| Cause::UnsupportedAction)?;
            if action.style != KpmStyle::CommonConditionUeMeasurement {
                return Err(Cause::UnsupportedAction);
            }
            let advertised = def.metrics(action.style);
            if action.metrics.iter().any(|m| !advertised.contains(m)) {
                return Err(Cause::UnsupportedAction);
            }
            if action.granularity_ms == 0 {
                action.granularity_ms = record.period_ms;
            }
            if action.granularity_ms > record.period_ms {
                return Err(Cause::BadTrigger);
            }
            actions.push((*action_id, action));
        }
        if actions.is_empty() {
            return Err(Cause::UnsupportedAction);
        }
        Ok(AdmittedSubscription {
            subscription_id: record.subscription_id,
            ran_function_id: record.ran_function_id,
            period_ms: record.period_ms,
            actions,
        })
    }

    /// Interprets one envelope from the RIC.
    pub fn on_envelope(&mut self, env: &Envelope) -> Result<NodeEvent, E2apError> {
        match env.msg_type {
            MsgType::E2SetupResponse => {
                let outcome = decode_setup_response(env)?;
                if let Some(v) = self.apply(ConnEvent::SetupResponse {
                    accepted: outcome.is_ok(),
                }) {
                    return Ok(NodeEvent::Violation(v));
                }
                Ok(NodeEvent::SetupDone(outcome))
            }
            MsgType::SubscriptionRequest => {
                let record = SubscriptionRecord::from_envelope(env)?;
                let tid = env.transaction_id;
                let rf = env.ran_function_id;
                let sub_id = record.subscription_id;
                if record.is_delete() {
                    if let Some(v) = self.apply(ConnEvent::SubscriptionDeleteRequest {
                        tid,
                        subscription_id: sub_id,
                    }) {
                        return Ok(NodeEvent::Violation(v));
                    }
                    self.subs.remove(&sub_id);
                    self.apply(ConnEvent::SubscriptionResponse {
                        tid,
                        subscription_id: sub_id,
                    });
                    return Ok(NodeEvent::Unsubscribed {
                        reply: subscription_response(tid, rf, sub_id, &[]),
                        subscription_id: sub_id,
                    });
                }
                if let Some(v) = self.apply(ConnEvent::SubscriptionRequest { tid }) {
                    return Ok(NodeEvent::Violation(v));
                }
                match self.subscribe(&record) {
                    Ok(sub) => {
                        self.apply(ConnEvent::SubscriptionResponse {
                            tid,
                            subscription_id: sub_id,
                        });
                        let ids: Vec<u16> = sub.actions.iter().map(|(id, _)| *id).collect();
                        self.subs.insert(sub_id, sub.clone());
                        Ok(NodeEvent::Subscribed {
                            reply: subscription_response(tid, rf, sub_id, &ids),
                            subscription: sub,
                        })
                    }
                    Err(cause) => {
                        self.apply(ConnEvent::SubscriptionFailure { tid });
                        Ok(NodeEvent::Refused {
                            reply: subscription_failure(tid, rf, sub_id, cause),
                            cause,
                        })
                    }
                }
            }
            MsgType::ControlRequest => {
                let cmd = decode_control_request(env)?;
                if let Some(v) = self.apply(ConnEvent::ControlRequest {
                    tid: cmd.transaction_id,
                }) {
                    return Ok(NodeEvent::Violation(v));
                }
                Ok(NodeEvent::Control(cmd))
            }
            other => Err(E2apError::WrongDirection(other)),
        }
    }

    /// Wraps a report for an active subscription.
    pub fn deliver_indication(
        &mut self,
        subscription_id: u32,
        action_id: u16,
        header: Vec<u8>,
        message: Vec<u8>,
    ) -> Result<Envelope, Cause> {
        let rf = match self.subs.get(&subscription_id) {
            Some(sub) => sub.ran_function_id,
            None => return Err(Cause::NotEnforced),
        };
        if self.apply(ConnEvent::Indication { subscription_id }).is_some() {
            return Err(Cause::NotEnforced);
        }
        let tid = self.tid();
        Indication {
            subscription_id,
            action_id,
            header,
            message,
        }
        .to_envelope(tid, rf)
        .map_err(|_| Cause::Malformed)
    }

    /// Closes out a control request. Returns the envelope to send, if any:
    /// an ack only when one was requested, a failure always.
    pub fn control_response(&mut self, cmd: &ControlCommand, result: Result<(), Cause>) -> Option<Envelope> {
        let tid = cmd.transaction_id;
        let rf = cmd.ran_function_id;
        match result {
            Err(cause) => {
                self.apply(ConnEvent::ControlFailure { tid });
                Some(control_failure(tid, rf, cause))
            }
            Ok(()) if cmd.ack_requested => {
                self.apply(ConnEvent::ControlAck { tid });
                Some(control_ack(tid, rf))
            }
            Ok(()) => {
                // Nothing goes on the wire; retire the transaction locally.
                self.apply(ConnEvent::Timeout { tid });
                None
            }
        }
    }

    pub fn close(&mut self) {
        self.apply(ConnEvent::Close);
        self.subs.clear();
    }
}
