//! Independent oracles and generators shared by the integration and
//! acceptance targets.
#![allow(dead_code)]

pub mod fixtures;
pub mod fuzz;
pub mod legality;
pub mod gen;
pub mod oracle;
