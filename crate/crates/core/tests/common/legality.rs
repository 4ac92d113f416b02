//! Hand-written legality table for the connection state machine.
//!
//! Each phase is probed from a fixed context. In `Established` the context
//! holds pending tid 1 (subscription), 2 (deletion of subscription 7) and
//! 3 (control), and one live subscription, 7. Tid 9 and subscription 8 are
//! unknown.

use e2loop::e2ap::{step_connection, ConnEvent as E, ConnState, PendingKind, Phase, ViolationKind};

pub fn events() -> Vec<E> {
    vec![
        E::SetupRequest,
        E::SetupResponse { accepted: true },
        E::SetupResponse { accepted: false },
        E::SubscriptionRequest { tid: 1 },
        E::SubscriptionRequest { tid: 9 },
        E::SubscriptionDeleteRequest { tid: 9, subscription_id: 7 },
        E::SubscriptionDeleteRequest { tid: 9, subscription_id: 8 },
        E::SubscriptionDeleteRequest { tid: 1, subscription_id: 7 },
        E::SubscriptionResponse { tid: 1, subscription_id: 5 },
        E::SubscriptionResponse { tid: 2, subscription_id: 7 },
        E::SubscriptionResponse { tid: 2, subscription_id: 8 },
        E::SubscriptionResponse { tid: 3, subscription_id: 5 },
        E::SubscriptionResponse { tid: 9, subscription_id: 5 },
        E::SubscriptionFailure { tid: 1 },
        E::SubscriptionFailure { tid: 2 },
        E::SubscriptionFailure { tid: 3 },
        E::SubscriptionFailure { tid: 9 },
        E::Indication { subscription_id: 7 },
        E::Indication { subscription_id: 8 },
        E::ControlRequest { tid: 9 },
        E::ControlRequest { tid: 3 },
        E::ControlAck { tid: 3 },
        E::ControlAck { tid: 1 },
        E::ControlAck { tid: 9 },
        E::ControlFailure { tid: 3 },
        E::ControlFailure { tid: 9 },
        E::Timeout { tid: 1 },
        E::Timeout { tid: 9 },
        E::Close,
    ]
}

/// One row per phase, one column per entry of [`events`]:
/// `.` legal, `P` wrong phase, `D` duplicate tid, `U` unknown tid,
/// `K` wrong transaction kind, `S` unknown subscription.
pub const TABLE: [(Phase, &str); 4] = [
    (Phase::Idle, ".PPPPPPPPPPPPPPPPPPPPPPPPPPP."),
    (Phase::SetupSent, "P..PPPPPPPPPPPPPPPPPPPPPPPPP."),
    (Phase::Established, "PPPD..SD..KKU..KU.S.D.KU.U.U."),
    (Phase::Closed, "PPPPPPPPPPPPPPPPPPPPPPPPPPPPP"),
];

pub fn context(phase: Phase) -> ConnState {
    let mut s = ConnState {
        phase,
        ..ConnState::default()
    };
    if phase == Phase::Established {
        s.pending.insert(1, PendingKind::Subscription);
        s.pending.insert(2, PendingKind::SubscriptionDelete(7));
        s.pending.insert(3, PendingKind::Control);
        s.subscriptions.insert(7);
    }
    s
}

fn code(kind: Option<ViolationKind>) -> char {
    match kind {
        None => '.',
        Some(ViolationKind::WrongPhase) => 'P',
        Some(ViolationKind::DuplicateTransaction) => 'D',
        Some(ViolationKind::UnknownTransaction) => 'U',
        Some(ViolationKind::WrongTransactionKind) => 'K',
        Some(ViolationKind::UnknownSubscription) => 'S',
    }
}

/// Checks every (phase, event) cell; returns the mismatches.
pub fn check_table() -> Vec<String> {
    let events = events();
    let mut bad = Vec::new();
    for (phase, row) in TABLE {
        assert_eq!(row.len(), events.len(), "row for {phase:?} has the wrong width");
        for (ev, want) in events.iter().zip(row.chars()) {
            let before = context(phase);
            let step = step_connection(before.clone(), *ev);
            let got = code(step.violation.as_ref().map(|v| v.kind));
            if got != want {
                bad.push(format!("{phase:?} × {ev:?}: expected {want}, got {got}"));
            }
            if step.violation.is_some() && step.state != before {
                bad.push(format!("{phase:?} × {ev:?}: rejected event changed the state"));
            }
            if let Some(v) = &step.violation {
                if v.phase != phase || v.event != *ev {
                    bad.push(format!("{phase:?} × {ev:?}: violation misreports its context"));
                }
            }
        }
    }
    for phase in Phase::ALL {
        if !TABLE.iter().any(|(p, _)| *p == phase) {
            bad.push(format!("phase {phase:?} missing from the table"));
        }
    }
    bad
}
