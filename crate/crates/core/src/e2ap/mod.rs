//! E2 Setup, RIC Subscription, RIC Indication and RIC Control procedures.
//!
//! Each procedure body below is carried opaquely by [`Envelope::body`].
//! Subscription deletion is a `SubscriptionRequest` whose action list is
//! empty; this is not a standard E2AP procedure.

mod node;
mod state;

pub use node::{AdmittedSubscription, ControlCommand, NodeEvent, NodeSession};
pub use state::{step_connection, ConnEvent, ConnState, PendingKind, Phase, ProtocolViolation, Step, ViolationKind};

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::codec::{DecodeError, Envelope, MsgType, Reader, WireError, Writer};
use crate::types::{NodeId, XAppId};

/// Default wait for a subscription or control response.
pub const RESPONSE_TIMEOUT_MS: u64 = 500;

/// Allowed event-trigger periods.
pub const MIN_PERIOD_MS: u32 = 10;
pub const MAX_PERIOD_MS: u32 = 60_000;

/// Failure causes carried by `SubscriptionFailure`, `ControlFailure` and setup rejections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cause {
    UnknownFunction,
    UnsupportedAction,
    BadTrigger,
    UnknownUe,
    UnknownSlice,
    UnknownCell,
    SameCell,
    Unsupported,
    NotEnforced,
    Timeout,
    Duplicate,
    Malformed,
    /// Replaced by a later control on the same target before it was sent.
    Superseded,
    NodeDisconnected,
    UnknownNode,
}

impl Cause {
    const ALL: [Cause; 15] = [
        Cause::UnknownFunction,
        Cause::UnsupportedAction,
        Cause::BadTrigger,
        Cause::UnknownUe,
        Cause::UnknownSlice,
        Cause::UnknownCell,
        Cause::SameCell,
        Cause::Unsupported,
        Cause::NotEnforced,
        Cause::Timeout,
        Cause::Duplicate,
        Cause::Malformed,
        Cause::Superseded,
        Cause::NodeDisconnected,
        Cause::UnknownNode,
    ];

    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Cause> {
        code.checked_sub(1).and_then(|i| Self::ALL.get(i as usize).copied())
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// E2 services. Only REPORT and CONTROL have behavior.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RicService {
    Report,
    Insert,
    Control,
    Policy,
    Query,
    Assistance,
}

impl RicService {
    pub fn check_supported(self) -> Result<(), Cause> {
        match self {
            RicService::Report | RicService::Control => Ok(()),
            _ => Err(Cause::Unsupported),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SmKind {
    Kpm,
    Rc,
}

impl SmKind {
    fn tag(self) -> u8 {
        match self {
            SmKind::Kpm => 1,
            SmKind::Rc => 2,
        }
    }

    fn from_tag(t: u8) -> Option<SmKind> {
        match t {
            1 => Some(SmKind::Kpm),
            2 => Some(SmKind::Rc),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RanFunctionItem {
    pub ran_function_id: u16,
    pub sm_kind: SmKind,
    pub definition: Vec<u8>,
}

/// What a node advertises when it connects.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeDescriptor {
    pub node_id: NodeId,
    pub profile_name: String,
    pub ran_functions: Vec<RanFunctionItem>,
}

impl NodeDescriptor {
    pub fn function(&self, id: u16) -> Option<&RanFunctionItem> {
        self.ran_functions.iter().find(|f| f.ran_function_id == id)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SetupError {
    #[error("node advertises no RAN functions")]
    Empty,
    #[error("RAN function id {0} advertised twice")]
    DuplicateFunction(u16),
    #[error("node {0} is already registered")]
    Duplicate(NodeId),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum E2apError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("malformed {0} body: {1}")]
    Body(MsgType, WireError),
    #[error("unknown field value in {0} body")]
    BadField(MsgType),
    #[error("expected {expected}, got {got}")]
    UnexpectedType { expected: MsgType, got: MsgType },
    #[error("{0} is not accepted by this end of the association")]
    WrongDirection(MsgType),
    #[error(transparent)]
    Setup(#[from] SetupError),
}

fn expect(env: &Envelope, expected: MsgType) -> Result<(), E2apError> {
    if env.msg_type == expected {
        Ok(())
    } else {
        Err(E2apError::UnexpectedType {
            expected,
            got: env.msg_type,
        })
    }
}

fn body_err(t: MsgType) -> impl Fn(WireError) -> E2apError {
    move |e| E2apError::Body(t, e)
}

fn wire_err(e: WireError) -> E2apError {
    // Encoding only fails on oversize fields.
    E2apError::Body(MsgType::E2SetupRequest, e)
}

pub fn encode_setup_request(desc: &NodeDescriptor) -> Result<Vec<u8>, E2apError> {
    let mut out = Vec::new();
    let mut w = Writer::new(&mut out);
    w.str8(desc.node_id.as_str()).map_err(wire_err)?;
    w.str8(&desc.profile_name).map_err(wire_err)?;
    w.u8(desc.ran_functions.len() as u8);
    for f in &desc.ran_functions {
        w.u16(f.ran_function_id);
        w.u8(f.sm_kind.tag());
        w.bytes24(&f.definition).map_err(wire_err)?;
    }
    Ok(out)
}

pub fn decode_setup_request(env: &Envelope) -> Result<NodeDescriptor, E2apError> {
    expect(env, MsgType::E2SetupRequest)?;
    let e = body_err(env.msg_type);
    let mut r = Reader::new(&env.body);
    let node_id = NodeId(r.str8().map_err(&e)?);
    let profile_name = r.str8().map_err(&e)?;
    let n = r.u8().map_err(&e)?;
    let mut ran_functions = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let ran_function_id = r.u16().map_err(&e)?;
        let sm_kind = SmKind::from_tag(r.u8().map_err(&e)?).ok_or(E2apError::BadField(env.msg_type))?;
        let definition = r.bytes24().map_err(&e)?;
        ran_functions.push(RanFunctionItem {
            ran_function_id,
            sm_kind,
            definition,
        });
    }
    r.finish().map_err(&e)?;
    Ok(NodeDescriptor {
        node_id,
        profile_name,
        ran_functions,
    })
}

/// Builds the node's `E2SetupRequest`.
pub fn build_e2_setup(desc: &NodeDescriptor, transaction_id: u32) -> Result<Envelope, E2apError> {
    if desc.ran_functions.is_empty() {
        return Err(SetupError::Empty.into());
    }
    let mut ids = BTreeSet::new();
    for f in &desc.ran_functions {
        if !ids.insert(f.ran_function_id) {
            return Err(SetupError::DuplicateFunction(f.ran_function_id).into());
        }
    }
    Ok(Envelope::new(
        MsgType::E2SetupRequest,
        transaction_id,
        0,
        encode_setup_request(desc)?,
    ))
}

/// Anything that can admit a connecting node.
pub trait SetupRegistry {
    fn register(&mut self, desc: NodeDescriptor) -> Result<(), SetupError>;
}

/// Decodes a setup request, registers the node, and returns the accepting response.
/// A rejection is returned as an error; see [`setup_response`] to build its envelope.
pub fn handle_e2_setup(env: &Envelope, registry: &mut impl SetupRegistry) -> Result<Envelope, E2apError> {
    let desc = decode_setup_request(env)?;
    if desc.ran_functions.is_empty() {
        return Err(SetupError::Empty.into());
    }
    registry.register(desc)?;
    Ok(setup_response(env.transaction_id, Ok(())))
}

pub fn setup_response(transaction_id: u32, outcome: Result<(), Cause>) -> Envelope {
    let body = match outcome {
        Ok(()) => vec![0, 0],
        Err(c) => vec![1, c.code()],
    };
    Envelope::new(MsgType::E2SetupResponse, transaction_id, 0, body)
}

pub fn decode_setup_response(env: &Envelope) -> Result<Result<(), Cause>, E2apError> {
    expect(env, MsgType::E2SetupResponse)?;
    let e = body_err(env.msg_type);
    let mut r = Reader::new(&env.body);
    let status = r.u8().map_err(&e)?;
    let code = r.u8().map_err(&e)?;
    r.finish().map_err(&e)?;
    match (status, code) {
        (0, 0) => Ok(Ok(())),
        (1, c) => Cause::from_code(c).map(Err).ok_or(E2apError::BadField(env.msg_type)),
        _ => Err(E2apError::BadField(env.msg_type)),
    }
}

/// RIC-side view of one subscription.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubscriptionRecord {
    pub subscription_id: u32,
    pub ran_function_id: u16,
    /// Event-trigger period.
    pub period_ms: u32,
    pub action_definitions: Vec<(u16, Vec<u8>)>,
    pub requester: XAppId,
}

impl SubscriptionRecord {
    pub fn to_envelope(&self, transaction_id: u32) -> Result<Envelope, E2apError> {
        let mut out = Vec::new();
        let mut w = Writer::new(&mut out);
        w.u32(self.subscription_id);
        w.u32(self.period_ms);
        w.u8(self.action_definitions.len() as u8);
        for (id, def) in &self.action_definitions {
            w.u16(*id);
            w.bytes24(def).map_err(body_err(MsgType::SubscriptionRequest))?;
        }
        Ok(Envelope::new(
            MsgType::SubscriptionRequest,
            transaction_id,
            self.ran_function_id,
            out,
        ))
    }

    /// Decodes a request; the requester is not carried on the wire.
    pub fn from_envelope(env: &Envelope) -> Result<SubscriptionRecord, E2apError> {
        expect(env, MsgType::SubscriptionRequest)?;
        let e = body_err(env.msg_type);
        let mut r = Reader::new(&env.body);
        let subscription_id = r.u32().map_err(&e)?;
        let period_ms = r.u32().map_err(&e)?;
        let n = r.u8().map_err(&e)?;
        let mut action_definitions = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let id = r.u16().map_err(&e)?;
            action_definitions.push((id, r.bytes24().map_err(&e)?));
        }
        r.finish().map_err(&e)?;
        Ok(SubscriptionRecord {
            subscription_id,
            ran_function_id: env.ran_function_id,
            period_ms,
            action_definitions,
            requester: XAppId::default(),
        })
    }

    pub fn is_delete(&self) -> bool {
        self.action_definitions.is_empty()
    }

    /// Same request modulo the id the RIC assigned.
    pub fn same_request(&self, other: &SubscriptionRecord) -> bool {
        self.ran_function_id == other.ran_function_id
            && self.period_ms == other.period_ms
            && self.action_definitions == other.action_definitions
            && self.requester == other.requester
    }
}

pub fn subscription_delete(subscription_id: u32, ran_function_id: u16, transaction_id: u32) -> Envelope {
    let rec = SubscriptionRecord {
        subscription_id,
        ran_function_id,
        period_ms: 0,
        action_definitions: Vec::new(),
        requester: XAppId::default(),
    };
    rec.to_envelope(transaction_id).expect("empty action list always encodes")
}

pub fn subscription_response(transaction_id: u32, ran_function_id: u16, subscription_id: u32, admitted: &[u16]) -> Envelope {
    let mut out = Vec::new();
    let mut w = Writer::new(&mut out);
    w.u32(subscription_id);
    w.u8(admitted.len() as u8);
    for id in admitted {
        w.u16(*id);
    }
    Envelope::new(MsgType::SubscriptionResponse, transaction_id, ran_function_id, out)
}

pub fn decode_subscription_response(env: &Envelope) -> Result<(u32, Vec<u16>), E2apError> {
    expect(env, MsgType::SubscriptionResponse)?;
    let e = body_err(env.msg_type);
    let mut r = Reader::new(&env.body);
    let id = r.u32().map_err(&e)?;
    let n = r.u8().map_err(&e)?;
    let admitted = (0..n).map(|_| r.u16()).collect::<Result<Vec<_>, _>>().map_err(&e)?;
    r.finish().map_err(&e)?;
    Ok((id, admitted))
}

pub fn subscription_failure(transaction_id: u32, ran_function_id: u16, subscription_id: u32, cause: Cause) -> Envelope {
    let mut out = Vec::new();
    let mut w = Writer::new(&mut out);
    w.u32(subscription_id);
    w.u8(cause.code());
    Envelope::new(MsgType::SubscriptionFailure, transaction_id, ran_function_id, out)
}

pub fn decode_subscription_failure(env: &Envelope) -> Result<(u32, Cause), E2apError> {
    expect(env, MsgType::SubscriptionFailure)?;
    let e = body_err(env.msg_type);
    let mut r = Reader::new(&env.body);
    let id = r.u32().map_err(&e)?;
    let cause = Cause::from_code(r.u8().map_err(&e)?).ok_or(E2apError::BadField(env.msg_type))?;
    r.finish().map_err(&e)?;
    Ok((id, cause))
}

/// Decoded `Indication` body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Indication {
    pub subscription_id: u32,
    pub action_id: u16,
    pub header: Vec<u8>,
    pub message: Vec<u8>,
}

impl Indication {
    pub fn to_envelope(&self, transaction_id: u32, ran_function_id: u16) -> Result<Envelope, E2apError> {
        let e = body_err(MsgType::Indication);
        let mut out = Vec::new();
        let mut w = Writer::new(&mut out);
        w.u32(self.subscription_id);
        w.u16(self.action_id);
        w.bytes24(&self.header).map_err(&e)?;
        w.bytes24(&self.message).map_err(&e)?;
        Ok(Envelope::new(MsgType::Indication, transaction_id, ran_function_id, out))
    }

    pub fn from_envelope(env: &Envelope) -> Result<Indication, E2apError> {
        expect(env, MsgType::Indication)?;
        let e = body_err(env.msg_type);
        let mut r = Reader::new(&env.body);
        let subscription_id = r.u32().map_err(&e)?;
        let action_id = r.u16().map_err(&e)?;
        let header = r.bytes24().map_err(&e)?;
        let message = r.bytes24().map_err(&e)?;
        r.finish().map_err(&e)?;
        Ok(Indication {
            subscription_id,
            action_id,
            header,
            message,
        })
    }
}

pub fn control_request(
    transaction_id: u32,
    ran_function_id: u16,
    header: &[u8],
    message: &[u8],
    ack_requested: bool,
) -> Result<Envelope, E2apError> {
    let e = body_err(MsgType::ControlRequest);
    let mut out = Vec::new();
    let mut w = Writer::new(&mut out);
    w.u8(ack_requested as u8);
    w.bytes24(header).map_err(&e)?;
    w.bytes24(message).map_err(&e)?;
    Ok(Envelope::new(MsgType::ControlRequest, transaction_id, ran_function_id, out))
}

pub fn decode_control_request(env: &Envelope) -> Result<ControlCommand, E2apError> {
    expect(env, MsgType::ControlRequest)?;
    let e = body_err(env.msg_type);
    let mut r = Reader::new(&env.body);
    let ack_requested = match r.u8().map_err(&e)? {
        0 => false,
        1 => true,
        _ => return Err(E2apError::BadField(env.msg_type)),
    };
    let header = r.bytes24().map_err(&e)?;
    let message = r.bytes24().map_err(&e)?;
    r.finish().map_err(&e)?;
    Ok(ControlCommand {
        transaction_id: env.transaction_id,
        ran_function_id: env.ran_function_id,
        header,
        message,
        ack_requested,
    })
}

pub fn control_ack(transaction_id: u32, ran_function_id: u16) -> Envelope {
    Envelope::new(MsgType::ControlAck, transaction_id, ran_function_id, Vec::new())
}

pub fn control_failure(transaction_id: u32, ran_function_id: u16, cause: Cause) -> Envelope {
    Envelope::new(MsgType::ControlFailure, transaction_id, ran_function_id, vec![cause.code()])
}

pub fn decode_control_failure(env: &Envelope) -> Result<Cause, E2apError> {
    expect(env, MsgType::ControlFailure)?;
    match env.body.as_slice() {
        [code] => Cause::from_code(*code).ok_or(E2apError::BadField(env.msg_type)),
        _ => Err(E2apError::BadField(env.msg_type)),
    }
}

/// Extracts the failure cause carried by `env`, if it is a cause-bearing message.
pub fn cause_of(env: &Envelope) -> Option<Cause> {
    match env.msg_type {
        MsgType::ControlFailure => decode_control_failure(env).ok(),
        MsgType::SubscriptionFailure => decode_subscription_failure(env).ok().map(|(_, c)| c),
        MsgType::E2SetupResponse => decode_setup_response(env).ok().and_then(Result::err),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpm::{build_kpm_function_definition, KpmFunctionDefinition, Vocabulary};
    use crate::rc::{build_rc_function_definition, RcFunctionDefinition, RcStyle};
    use std::collections::BTreeMap;

    fn desc(id: &str) -> NodeDescriptor {
        NodeDescriptor {
            node_id: id.into(),
            profile_name: "oai-like".into(),
            ran_functions: vec![
                RanFunctionItem {
                    ran_function_id: 2,
                    sm_kind: SmKind::Kpm,
                    definition: build_kpm_function_definition(
                        &KpmFunctionDefinition::standard(),
                        &Vocabulary::standard(),
                    )
                    .unwrap(),
                },
                RanFunctionItem {
                    ran_function_id: 3,
                    sm_kind: SmKind::Rc,
                    definition: build_rc_function_definition(&RcFunctionDefinition::for_styles(RcStyle::ALL)),
                },
            ],
        }
    }

    #[derive(Default)]
    struct MapRegistry(BTreeMap<NodeId, NodeDescriptor>);

    impl SetupRegistry for MapRegistry {
        fn register(&mut self, desc: NodeDescriptor) -> Result<(), SetupError> {
            if self.0.contains_key(&desc.node_id) {
                return Err(SetupError::Duplicate(desc.node_id));
            }
            self.0.insert(desc.node_id.clone(), desc);
            Ok(())
        }
    }

    #[test]
    fn setup_body_lists_both_functions() {
        let env = build_e2_setup(&desc("gnb1"), 1).unwrap();
        let back = decode_setup_request(&env).unwrap();
        assert_eq!(back.ran_functions.len(), 2);
        assert_eq!(back, desc("gnb1"));
    }

    #[test]
    fn setup_without_functions_is_refused() {
        let mut d = desc("gnb1");
        d.ran_functions.clear();
        assert_eq!(build_e2_setup(&d, 1), Err(E2apError::Setup(SetupError::Empty)));
    }

    #[test]
    fn duplicate_node_is_refused() {
        let mut reg = MapRegistry::default();
        let env = build_e2_setup(&desc("gnb1"), 4).unwrap();
        let resp = handle_e2_setup(&env, &mut reg).unwrap();
        assert_eq!(resp.transaction_id, 4);
        assert_eq!(decode_setup_response(&resp).unwrap(), Ok(()));
        assert_eq!(reg.0.len(), 1);
        assert_eq!(
            handle_e2_setup(&env, &mut reg),
            Err(E2apError::Setup(SetupError::Duplicate("gnb1".into())))
        );
        handle_e2_setup(&build_e2_setup(&desc("gnb2"), 5).unwrap(), &mut reg).unwrap();
        assert_eq!(reg.0.len(), 2);
    }

    #[test]
    fn corrupt_setup_body_propagates_decode_error() {
        let mut env = build_e2_setup(&desc("gnb1"), 1).unwrap();
        env.body.truncate(env.body.len() - 3);
        assert!(matches!(
            handle_e2_setup(&env, &mut MapRegistry::default()),
            Err(E2apError::Body(MsgType::E2SetupRequest, _))
        ));
    }

    #[test]
    fn rejection_carries_cause() {
        let env = setup_response(9, Err(Cause::Duplicate));
        assert_eq!(decode_setup_response(&env).unwrap(), Err(Cause::Duplicate));
        assert_eq!(cause_of(&env), Some(Cause::Duplicate));
    }

    #[test]
    fn cause_codes_round_trip() {
        for c in Cause::ALL {
            assert_eq!(Cause::from_code(c.code()), Some(c));
        }
        assert_eq!(Cause::from_code(0), None);
        assert_eq!(Cause::from_code(200), None);
    }

    #[test]
    fn non_report_control_services_are_unsupported() {
        assert!(RicService::Report.check_supported().is_ok());
        assert!(RicService::Control.check_supported().is_ok());
        for s in [RicService::Insert, RicService::Policy, RicService::Query, RicService::Assistance] {
            assert_eq!(s.check_supported(), Err(Cause::Unsupported));
        }
    }

    #[test]
    fn bodies_round_trip() {
        let rec = SubscriptionRecord {
            subscription_id: 11,
            ran_function_id: 2,
            period_ms: 1000,
            action_definitions: vec![(1, vec![1, 2, 3])],
            requester: XAppId::default(),
        };
        assert_eq!(SubscriptionRecord::from_envelope(&rec.to_envelope(3).unwrap()).unwrap(), rec);
        let ind = Indication {
            subscription_id: 11,
            action_id: 1,
            header: vec![1],
            message: vec![2, 3],
        };
        assert_eq!(Indication::from_envelope(&ind.to_envelope(0, 2).unwrap()).unwrap(), ind);
        let ctl = control_request(5, 3, &[1, 2], &[3], true).unwrap();
        let cmd = decode_control_request(&ctl).unwrap();
        assert_eq!((cmd.header, cmd.message, cmd.ack_requested), (vec![1, 2], vec![3], true));
        assert_eq!(decode_control_failure(&control_failure(5, 3, Cause::UnknownUe)).unwrap(), Cause::UnknownUe);
        let resp = subscription_response(3, 2, 11, &[1]);
        assert_eq!(decode_subscription_response(&resp).unwrap(), (11, vec![1]));
        let fail = subscription_failure(3, 2, 11, Cause::BadTrigger);
        assert_eq!(decode_subscription_failure(&fail).unwrap(), (11, Cause::BadTrigger));
    }
}
