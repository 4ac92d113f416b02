//! Per-stack capability profiles.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::e2ap::{NodeDescriptor, RanFunctionItem, SmKind};
use crate::kpm::{build_kpm_function_definition, KpmFunctionDefinition, Vocabulary, KPM_RAN_FUNCTION_ID};
use crate::rc::{build_rc_function_definition, RcFunctionDefinition, RcStyle, RC_RAN_FUNCTION_ID};
use crate::types::{NodeId, TimeMs};

/// How far a stack implements a capability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Support {
    /// Acknowledged and enforced.
    Full,
    /// Acknowledged, never enforced.
    AckOnly,
    /// Refused with `Unsupported`.
    None,
}

impl FromStr for Support {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Support::Full),
            "ack-only" | "ack_only" => Ok(Support::AckOnly),
            "none" => Ok(Support::None),
            _ => Err(format!("unknown support level `{s}` (full, ack-only, none)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProfileName {
    OaiLike,
    SrsranLike,
    Custom,
}

impl ProfileName {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileName::OaiLike => "oai-like",
            ProfileName::SrsranLike => "srsran-like",
            ProfileName::Custom => "custom",
        }
    }
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oai-like" => Ok(ProfileName::OaiLike),
            "srsran-like" => Ok(ProfileName::SrsranLike),
            "custom" => Ok(ProfileName::Custom),
            _ => Err(format!("unknown profile `{s}` (oai-like, srsran-like, custom)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeProfile {
    pub name: ProfileName,
    pub kpm: Support,
    pub rc: BTreeMap<RcStyle, Support>,
    pub reaction_delay_ms: f64,
}

impl NodeProfile {
    pub fn oai_like() -> Self {
        Self {
            name: ProfileName::OaiLike,
            kpm: Support::Full,
            rc: BTreeMap::from([
                (RcStyle::Rbc, Support::AckOnly),
                (RcStyle::Rrac, Support::Full),
                (RcStyle::Cmmc, Support::Full),
            ]),
            reaction_delay_ms: 4.5,
        }
    }

    pub fn srsran_like() -> Self {
        Self {
            name: ProfileName::SrsranLike,
            kpm: Support::Full,
            rc: BTreeMap::from([
                (RcStyle::Rbc, Support::None),
                (RcStyle::Rrac, Support::Full),
                (RcStyle::Cmmc, Support::Full),
            ]),
            reaction_delay_ms: 7.0,
        }
    }

    /// A stock stack that exposes bearer control only: KPM, RBC acknowledged
    /// but not enforced, no RRAC or CMMC. Scenarios override capabilities
    /// per node.
    pub fn custom() -> Self {
        Self {
            name: ProfileName::Custom,
            kpm: Support::Full,
            rc: BTreeMap::from([
                (RcStyle::Rbc, Support::AckOnly),
                (RcStyle::Rrac, Support::None),
                (RcStyle::Cmmc, Support::None),
            ]),
            reaction_delay_ms: 4.5,
        }
    }

    pub fn named(name: ProfileName) -> Self {
        match name {
            ProfileName::OaiLike => Self::oai_like(),
            ProfileName::SrsranLike => Self::srsran_like(),
            ProfileName::Custom => Self::custom(),
        }
    }

    pub fn rc_support(&self, style: RcStyle) -> Support {
        self.rc.get(&style).copied().unwrap_or(Support::None)
    }

    /// Whole-tick delay: the first 1 ms tick at or after `reaction_delay_ms`.
    pub fn reaction_ticks(&self) -> TimeMs {
        (self.reaction_delay_ms - 1e-9).ceil().max(0.0) as TimeMs
    }

    /// RAN functions advertised at setup. Styles with no support are left out
    /// of the RC definition; KPM is left out entirely when unsupported.
    pub fn descriptor(&self, node_id: &NodeId) -> NodeDescriptor {
        let mut ran_functions = Vec::new();
        if self.kpm != Support::None {
            let def = build_kpm_function_definition(&KpmFunctionDefinition::standard(), &Vocabulary::standard())
                .expect("standard definition encodes");
            ran_functions.push(RanFunctionItem {
                ran_function_id: KPM_RAN_FUNCTION_ID,
                sm_kind: SmKind::Kpm,
                definition: def,
            });
        }
        let styles: Vec<RcStyle> = RcStyle::ALL
            .into_iter()
            .filter(|s| self.rc_support(*s) != Support::None)
            .collect();
        if !styles.is_empty() {
            ran_functions.push(RanFunctionItem {
                ran_function_id: RC_RAN_FUNCTION_ID,
                sm_kind: SmKind::Rc,
                definition: build_rc_function_definition(&RcFunctionDefinition::for_styles(styles)),
            });
        }
        NodeDescriptor {
            node_id: node_id.clone(),
            profile_name: self.name.to_string(),
            ran_functions,
        }
    }
}
