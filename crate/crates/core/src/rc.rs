//! RC service-model CONTROL payloads.
//!
//! Three control styles are supported, each with exactly one action:
//!
//! | Style | Wire tag | Action id | Action |
//! |-------|----------|-----------|--------|
//! | RBC   | 1        | 1         | QoS flow mapping configuration |
//! | RRAC  | 2        | 6         | slice-level PRB quota |
//! | CMMC  | 3        | 3         | handover control |
//!
//! Field tables are in `docs/sm-rc.md`.

use std::fmt;

use thiserror::Error;

use crate::codec::{Reader, WireError, Writer};
use crate::types::{CellId, Snssai, UeId, SD_MAX};

/// Conventional RAN function id for RC.
pub const RC_RAN_FUNCTION_ID: u16 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RcStyle {
    /// Radio bearer control.
    Rbc,
    /// Radio resource allocation control.
    Rrac,
    /// Connected-mode mobility control.
    Cmmc,
}

impl RcStyle {
    pub const ALL: [RcStyle; 3] = [RcStyle::Rbc, RcStyle::Rrac, RcStyle::Cmmc];

    pub fn tag(self) -> u8 {
        match self {
            RcStyle::Rbc => 1,
            RcStyle::Rrac => 2,
            RcStyle::Cmmc => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<RcStyle> {
        Self::ALL.into_iter().find(|s| s.tag() == tag)
    }

    /// The single action id this style carries.
    pub fn action_id(self) -> u16 {
        match self {
            RcStyle::Rbc => 1,
            RcStyle::Rrac => 6,
            RcStyle::Cmmc => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RcStyle::Rbc => "RBC",
            RcStyle::Rrac => "RRAC",
            RcStyle::Cmmc => "CMMC",
        }
    }
}

impl fmt::Display for RcStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RcError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("unknown RC style tag {0}")]
    UnknownStyle(u8),
    #[error("action id {action_id} is not defined for style {style}")]
    UnknownAction { style: RcStyle, action_id: u16 },
    #[error("target kind {0} does not fit the style")]
    TargetMismatch(u8),
    #[error(transparent)]
    Wire(#[from] WireError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RcTarget {
    Ue(UeId),
    Slice { cell_id: CellId, snssai: Snssai },
    Handover { ue_id: UeId, target_cell_id: CellId },
}

impl RcTarget {
    fn kind(&self) -> u8 {
        match self {
            RcTarget::Ue(_) => 1,
            RcTarget::Slice { .. } => 2,
            RcTarget::Handover { .. } => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QosFlowMapParams {
    pub drb_id: u8,
    pub five_qi: u8,
    pub priority: u8,
}

/// Slice PRB ratios in whole percent: dedicated <= min <= max <= 100.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrbQuota {
    pub dedicated_pct: u8,
    pub min_pct: u8,
    pub max_pct: u8,
}

impl PrbQuota {
    pub fn new(dedicated_pct: u8, min_pct: u8, max_pct: u8) -> Result<Self, RcError> {
        let q = Self {
            dedicated_pct,
            min_pct,
            max_pct,
        };
        q.check()?;
        Ok(q)
    }

    pub fn check(&self) -> Result<(), RcError> {
        if self.max_pct > 100 {
            return Err(RcError::Param(format!("max_pct {} above 100", self.max_pct)));
        }
        if self.min_pct > self.max_pct {
            return Err(RcError::Param(format!(
                "min_pct {} above max_pct {}",
                self.min_pct, self.max_pct
            )));
        }
        if self.dedicated_pct > self.min_pct {
            return Err(RcError::Param(format!(
                "dedicated_pct {} above min_pct {}",
                self.dedicated_pct, self.min_pct
            )));
        }
        Ok(())
    }
}

impl Default for PrbQuota {
    fn default() -> Self {
        Self {
            dedicated_pct: 5,
            min_pct: 20,
            max_pct: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RcParams {
    QosFlowMap(QosFlowMapParams),
    PrbQuota(PrbQuota),
    Handover,
}

/// A typed control intent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RcControlAction {
    pub style: RcStyle,
    pub action_id: u16,
    pub target: RcTarget,
    pub params: RcParams,
}

impl RcControlAction {
    fn validate(&self) -> Result<(), RcError> {
        if self.action_id != self.style.action_id() {
            return Err(RcError::UnknownAction {
                style: self.style,
                action_id: self.action_id,
            });
        }
        let fits = matches!(
            (self.style, &self.target, &self.params),
            (RcStyle::Rbc, RcTarget::Ue(_), RcParams::QosFlowMap(_))
                | (RcStyle::Rrac, RcTarget::Slice { .. }, RcParams::PrbQuota(_))
                | (RcStyle::Cmmc, RcTarget::Handover { .. }, RcParams::Handover)
        );
        if !fits {
            return Err(RcError::TargetMismatch(self.target.kind()));
        }
        match (&self.target, &self.params) {
            (_, RcParams::PrbQuota(q)) => q.check()?,
            (_, RcParams::QosFlowMap(p)) if p.drb_id == 0 => {
                return Err(RcError::Param("drb_id must be at least 1".into()))
            }
            _ => {}
        }
        match &self.target {
            RcTarget::Ue(ue) if ue.is_empty() => Err(RcError::Param("empty ue_id".into())),
            RcTarget::Handover { ue_id, target_cell_id } if ue_id.is_empty() || target_cell_id.is_empty() => {
                Err(RcError::Param("empty ue_id or target_cell_id".into()))
            }
            RcTarget::Slice { cell_id, snssai } if cell_id.is_empty() || snssai.sd > SD_MAX => {
                Err(RcError::Param("bad slice target".into()))
            }
            _ => Ok(()),
        }
    }

    /// The UE this action is about, if any.
    pub fn ue(&self) -> Option<&UeId> {
        match &self.target {
            RcTarget::Ue(ue) | RcTarget::Handover { ue_id: ue, .. } => Some(ue),
            RcTarget::Slice { .. } => None,
        }
    }
}

pub fn build_prb_quota(
    cell_id: impl Into<CellId>,
    snssai: Snssai,
    dedicated_pct: u8,
    min_pct: u8,
    max_pct: u8,
) -> Result<RcControlAction, RcError> {
    let action = RcControlAction {
        style: RcStyle::Rrac,
        action_id: RcStyle::Rrac.action_id(),
        target: RcTarget::Slice {
            cell_id: cell_id.into(),
            snssai,
        },
        params: RcParams::PrbQuota(PrbQuota {
            dedicated_pct,
            min_pct,
            max_pct,
        }),
    };
    action.validate()?;
    Ok(action)
}

/// Same-cell targets build fine; the serving node rejects them.
pub fn build_handover(
    ue_id: impl Into<UeId>,
    target_cell_id: impl Into<CellId>,
) -> Result<RcControlAction, RcError> {
    let action = RcControlAction {
        style: RcStyle::Cmmc,
        action_id: RcStyle::Cmmc.action_id(),
        target: RcTarget::Handover {
            ue_id: ue_id.into(),
            target_cell_id: target_cell_id.into(),
        },
        params: RcParams::Handover,
    };
    action.validate()?;
    Ok(action)
}

pub fn build_qos_flow_map(
    ue_id: impl Into<UeId>,
    params: QosFlowMapParams,
) -> Result<RcControlAction, RcError> {
    let action = RcControlAction {
        style: RcStyle::Rbc,
        action_id: RcStyle::Rbc.action_id(),
        target: RcTarget::Ue(ue_id.into()),
        params: RcParams::QosFlowMap(params),
    };
    action.validate()?;
    Ok(action)
}

/// Encodes into (control header, control message).
pub fn encode_rc_control(a: &RcControlAction) -> Result<(Vec<u8>, Vec<u8>), RcError> {
    a.validate()?;
    let mut header = Vec::new();
    let mut w = Writer::new(&mut header);
    w.u8(a.style.tag());
    w.u16(a.action_id);
    w.u8(a.target.kind());
    match &a.target {
        RcTarget::Ue(ue) => w.str8(ue.as_str())?,
        RcTarget::Slice { cell_id, snssai } => {
            w.str8(cell_id.as_str())?;
            w.u8(snssai.sst);
            w.u24(snssai.sd);
        }
        RcTarget::Handover { ue_id, target_cell_id } => {
            w.str8(ue_id.as_str())?;
            w.str8(target_cell_id.as_str())?;
        }
    }

    let mut message = Vec::new();
    let mut w = Writer::new(&mut message);
    match &a.params {
        RcParams::QosFlowMap(p) => {
            w.u8(p.drb_id);
            w.u8(p.five_qi);
            w.u8(p.priority);
        }
        RcParams::PrbQuota(q) => {
            w.u8(q.dedicated_pct);
            w.u8(q.min_pct);
            w.u8(q.max_pct);
        }
        RcParams::Handover => {}
    }
    Ok((header, message))
}

pub fn decode_rc_control(header: &[u8], message: &[u8]) -> Result<RcControlAction, RcError> {
    let mut r = Reader::new(header);
    let tag = r.u8()?;
    let style = RcStyle::from_tag(tag).ok_or(RcError::UnknownStyle(tag))?;
    let action_id = r.u16()?;
    if action_id != style.action_id() {
        return Err(RcError::UnknownAction { style, action_id });
    }
    let kind = r.u8()?;
    let target = match kind {
        1 => RcTarget::Ue(UeId(r.str8()?)),
        2 => {
            let cell_id = CellId(r.str8()?);
            let sst = r.u8()?;
            let sd = r.u24()?;
            RcTarget::Slice {
                cell_id,
                snssai: Snssai { sst, sd },
            }
        }
        3 => RcTarget::Handover {
            ue_id: UeId(r.str8()?),
            target_cell_id: CellId(r.str8()?),
        },
        other => return Err(RcError::TargetMismatch(other)),
    };
    r.finish()?;

    let mut r = Reader::new(message);
    let params = match style {
        RcStyle::Rbc => RcParams::QosFlowMap(QosFlowMapParams {
            drb_id: r.u8()?,
            five_qi: r.u8()?,
            priority: r.u8()?,
        }),
        RcStyle::Rrac => RcParams::PrbQuota(PrbQuota {
            dedicated_pct: r.u8()?,
            min_pct: r.u8()?,
            max_pct: r.u8()?,
        }),
        RcStyle::Cmmc => RcParams::Handover,
    };
    r.finish()?;
    let action = RcControlAction {
        style,
        action_id,
        target,
        params,
    };
    action.validate()?;
    Ok(action)
}

/// Control (style, action) pairs a node advertises for its RC function.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RcFunctionDefinition {
    pub controls: Vec<(RcStyle, u16)>,
}

impl RcFunctionDefinition {
    pub fn for_styles(styles: impl IntoIterator<Item = RcStyle>) -> Self {
        Self {
            controls: styles.into_iter().map(|s| (s, s.action_id())).collect(),
        }
    }

    pub fn supports(&self, style: RcStyle) -> bool {
        self.controls.iter().any(|(s, _)| *s == style)
    }
}

/// Renders as `{RBC: [1], RRAC: [6], CMMC: [3]}`.
impl fmt::Display for RcFunctionDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (style, id)) in self.controls.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{style}: [{id}]")?;
        }
        f.write_str("}")
    }
}

pub fn build_rc_function_definition(def: &RcFunctionDefinition) -> Vec<u8> {
    let mut out = Vec::new();
    let mut w = Writer::new(&mut out);
    w.u8(def.controls.len() as u8);
    for (style, id) in &def.controls {
        w.u8(style.tag());
        w.u16(*id);
    }
    out
}

pub fn parse_rc_function_definition(bytes: &[u8]) -> Result<RcFunctionDefinition, RcError> {
    let mut r = Reader::new(bytes);
    let n = r.u8()?;
    let mut controls = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let tag = r.u8()?;
        let style = RcStyle::from_tag(tag).ok_or(RcError::UnknownStyle(tag))?;
        let action_id = r.u16()?;
        if action_id != style.action_id() {
            return Err(RcError::UnknownAction { style, action_id });
        }
        controls.push((style, action_id));
    }
    r.finish()?;
    Ok(RcFunctionDefinition { controls })
}
