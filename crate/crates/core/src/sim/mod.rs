//! Deterministic RAN simulator: capability profiles, the PRB scheduler and
//! E2 nodes built from cells, slices and UEs with traffic schedules.

mod node;
mod profile;
pub mod scheduler;

pub use node::{
    CellConfig, CellTick, Flow, NodeConfig, Scheduled, SimError, SimEvent, SimNode, SliceConfig, SliceTick,
    TickRecord, Transport, UeConfig, UeTick,
};
pub use profile::{NodeProfile, ProfileName, Support};
pub use scheduler::{schedule_cell, water_fill, CellAllocation, ConfigError, SliceDemand};

/// Header of the per-tick ground-truth dump.
pub const GROUND_TRUTH_HEADER: &str = "t_ms,cell,slice,ue,alloc_pct,served_mbps,backlog_kbit";

/// Ground-truth rows for one tick, one per UE; `alloc_pct` is the UE's slice allocation.
pub fn ground_truth_rows(tick: &TickRecord) -> Vec<String> {
    tick.ues
        .iter()
        .map(|u| {
            let alloc = tick
                .cells
                .iter()
                .filter(|c| c.cell_id == u.serving_cell)
                .flat_map(|c| &c.slices)
                .find(|s| s.snssai == u.snssai)
                .map_or(0.0, |s| s.alloc_pct);
            format!(
                "{},{},{},{},{:.3},{:.3},{:.3}",
                tick.t_ms, u.serving_cell, u.snssai, u.ue_id, alloc, u.served_mbps, u.backlog_kbit
            )
        })
        .collect()
}
