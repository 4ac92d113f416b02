//! Identifiers shared by every layer of the kit.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// E2 node identifier (one simulated gNB/CU).
    NodeId
);
string_id!(
    /// Cell identifier, unique within its node.
    CellId
);
string_id!(
    /// UE identifier, unique within its node.
    UeId
);
string_id!(
    /// Identifier of an xApp hosted on the RIC.
    XAppId
);

/// Largest value representable in the 24-bit slice differentiator.
pub const SD_MAX: u32 = 0x00FF_FFFF;

/// Network slice identifier: slice/service type plus 24-bit differentiator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Snssai {
    pub sst: u8,
    pub sd: u32,
}

impl Snssai {
    /// Panics if `sd` does not fit in 24 bits.
    pub fn new(sst: u8, sd: u32) -> Self {
        assert!(sd <= SD_MAX, "slice differentiator {sd:#x} exceeds 24 bits");
        Self { sst, sd }
    }
}

impl fmt::Display for Snssai {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.sst, self.sd)
    }
}

/// Simulation time in whole milliseconds.
pub type TimeMs = u64;
