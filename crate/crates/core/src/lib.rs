//! A small E2-style RAN control loop: envelope codec, E2AP procedures,
//! KPM and RC service models, a near-RT RIC, a RAN simulator and an xApp SDK.

pub mod codec;
pub mod e2ap;
pub mod harness;
pub mod kpm;
pub mod rc;
pub mod ric;
pub mod sim;
pub mod types;
pub mod xapp;

pub use types::{CellId, NodeId, Snssai, TimeMs, UeId, XAppId};
