//! Small node configurations and a helper to drive a testbed by hand.

use e2loop::harness::{Testbed, Transport};
use e2loop::rc::PrbQuota;
use e2loop::sim::{CellConfig, Flow, NodeConfig, NodeProfile, ProfileName, SliceConfig, Transport as FlowTransport, UeConfig};
use e2loop::types::{Snssai, TimeMs};

pub const CAPACITY: f64 = 160.0;

pub fn slice() -> Snssai {
    Snssai::new(1, 1)
}

pub fn profile(name: ProfileName) -> NodeProfile {
    NodeProfile::named(name)
}

/// One 160 Mbps cell `c1` with slice 1-1 and one UE `ue1` offering
/// `rate` Mbps UDP downlink for `duration` ms.
pub fn single_cell(id: &str, name: ProfileName, rate: f64, duration: TimeMs) -> NodeConfig {
    NodeConfig {
        node_id: id.into(),
        profile: profile(name),
        cells: vec![cell("c1", "du1")],
        ues: vec![ue("ue1", "c1", slice(), rate, duration)],
        handover_interruption_ms: 0,
    }
}

/// Two single-slice cells on different DUs; `ue1` starts on `c1`.
pub fn two_cells(id: &str, name: ProfileName, rate: f64, duration: TimeMs) -> NodeConfig {
    NodeConfig {
        node_id: id.into(),
        profile: profile(name),
        cells: vec![cell("c1", "du1"), cell("c2", "du2")],
        ues: vec![ue("ue1", "c1", slice(), rate, duration)],
        handover_interruption_ms: 0,
    }
}

pub fn cell(id: &str, du: &str) -> CellConfig {
    CellConfig {
        cell_id: id.into(),
        du_id: du.into(),
        capacity_mbps: CAPACITY,
        slices: vec![SliceConfig {
            snssai: slice(),
            quota: PrbQuota::default(),
        }],
    }
}

pub fn ue(id: &str, cell: &str, snssai: Snssai, rate: f64, duration: TimeMs) -> UeConfig {
    UeConfig {
        ue_id: id.into(),
        cell_id: cell.into(),
        snssai,
        downlink: vec![Flow::new(0, duration, rate, FlowTransport::Udp)],
        uplink: vec![],
    }
}

/// A testbed with the given nodes, stepped until every setup has completed.
pub fn testbed(nodes: Vec<NodeConfig>) -> Testbed {
    let mut bed = Testbed::new(Transport::InProc);
    for (i, n) in nodes.into_iter().enumerate() {
        bed.add_node(n, 1 + i as u64).unwrap();
    }
    bed.step().unwrap();
    bed
}

pub fn run(bed: &mut Testbed, ticks: TimeMs) {
    let until = bed.now() + ticks;
    bed.run_until(until, |_, _| {}).unwrap();
}
