//! Pure transition function for one E2 association.
//!
//! Both ends of a connection run the same machine over the messages they
//! exchange, so a response without a matching request is caught on either
//! side.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Idle,
    SetupSent,
    Established,
    Closed,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Idle, Phase::SetupSent, Phase::Established, Phase::Closed];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PendingKind {
    Subscription,
    /// Deletion of the given subscription id.
    SubscriptionDelete(u32),
    Control,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnState {
    pub phase: Phase,
    pub pending: BTreeMap<u32, PendingKind>,
    pub subscriptions: BTreeSet<u32>,
}

impl Default for ConnState {
    fn default() -> Self {
        Self {
            phase: Phase::Idle,
            pending: BTreeMap::new(),
            subscriptions: BTreeSet::new(),
        }
    }
}

impl ConnState {
    pub fn is_established(&self) -> bool {
        self.phase == Phase::Established
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConnEvent {
    SetupRequest,
    SetupResponse { accepted: bool },
    SubscriptionRequest { tid: u32 },
    /// A subscription request with an empty action list.
    SubscriptionDeleteRequest { tid: u32, subscription_id: u32 },
    SubscriptionResponse { tid: u32, subscription_id: u32 },
    SubscriptionFailure { tid: u32 },
    Indication { subscription_id: u32 },
    ControlRequest { tid: u32 },
    ControlAck { tid: u32 },
    ControlFailure { tid: u32 },
    Timeout { tid: u32 },
    Close,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    WrongPhase,
    DuplicateTransaction,
    UnknownTransaction,
    WrongTransactionKind,
    UnknownSubscription,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolViolation {
    pub phase: Phase,
    pub event: ConnEvent,
    pub kind: ViolationKind,
}

impl fmt::Display for ProtocolViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} in phase {:?}: {:?}", self.kind, self.phase, self.event)
    }
}

/// Result of one transition; on a violation the state is returned unchanged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub state: ConnState,
    pub violation: Option<ProtocolViolation>,
}

pub fn step_connection(mut state: ConnState, event: ConnEvent) -> Step {
    use ConnEvent as E;
    use Phase as P;

    let phase = state.phase;
    let reject = |state: ConnState, kind| Step {
        state,
        violation: Some(ProtocolViolation { phase, event, kind }),
    };
    let ok = |state: ConnState| Step { state, violation: None };

    match (phase, event) {
        (P::Closed, _) => reject(state, ViolationKind::WrongPhase),
        (_, E::Close) => {
            state.phase = P::Closed;
            state.pending.clear();
            state.subscriptions.clear();
            ok(state)
        }
        (P::Idle, E::SetupRequest) => {
            state.phase = P::SetupSent;
            ok(state)
        }
        (P::SetupSent, E::SetupResponse { accepted }) => {
            state.phase = if accepted { P::Established } else { P::Closed };
            ok(state)
        }
        (P::Idle | P::SetupSent, _) | (P::Established, E::SetupRequest | E::SetupResponse { .. }) => {
            reject(state, ViolationKind::WrongPhase)
        }
        (P::Established, E::SubscriptionRequest { tid } | E::ControlRequest { tid }) => {
            if state.pending.contains_key(&tid) {
                return reject(state, ViolationKind::DuplicateTransaction);
            }
            let kind = match event {
                E::ControlRequest { .. } => PendingKind::Control,
                _ => PendingKind::Subscription,
            };
            state.pending.insert(tid, kind);
            ok(state)
        }
        (P::Established, E::SubscriptionDeleteRequest { tid, subscription_id }) => {
            if state.pending.contains_key(&tid) {
                return reject(state, ViolationKind::DuplicateTransaction);
            }
            if !state.subscriptions.contains(&subscription_id) {
                return reject(state, ViolationKind::UnknownSubscription);
            }
            state.pending.insert(tid, PendingKind::SubscriptionDelete(subscription_id));
            ok(state)
        }
        (P::Established, E::SubscriptionResponse { tid, subscription_id }) => match state.pending.get(&tid) {
            None => reject(state, ViolationKind::UnknownTransaction),
            Some(PendingKind::Subscription) => {
                state.pending.remove(&tid);
                state.subscriptions.insert(subscription_id);
                ok(state)
            }
            Some(PendingKind::SubscriptionDelete(id)) if *id == subscription_id => {
                state.pending.remove(&tid);
                state.subscriptions.remove(&subscription_id);
                ok(state)
            }
            Some(_) => reject(state, ViolationKind::WrongTransactionKind),
        },
        (P::Established, E::SubscriptionFailure { tid }) => match state.pending.get(&tid) {
            None => reject(state, ViolationKind::UnknownTransaction),
            Some(PendingKind::Subscription | PendingKind::SubscriptionDelete(_)) => {
                state.pending.remove(&tid);
                ok(state)
            }
            Some(PendingKind::Control) => reject(state, ViolationKind::WrongTransactionKind),
        },
        (P::Established, E::ControlAck { tid } | E::ControlFailure { tid }) => match state.pending.get(&tid) {
            None => reject(state, ViolationKind::UnknownTransaction),
            Some(PendingKind::Control) => {
                state.pending.remove(&tid);
                ok(state)
            }
            Some(_) => reject(state, ViolationKind::WrongTransactionKind),
        },
        (P::Established, E::Indication { subscription_id }) => {
            if state.subscriptions.contains(&subscription_id) {
                ok(state)
            } else {
                reject(state, ViolationKind::UnknownSubscription)
            }
        }
        (P::Established, E::Timeout { tid }) => {
            if state.pending.remove(&tid).is_some() {
                ok(state)
            } else {
                reject(state, ViolationKind::UnknownTransaction)
            }
        }
    }
}
