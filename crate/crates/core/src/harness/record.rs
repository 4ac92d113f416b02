//! Windowed cell and UE telemetry built from per-tick simulator records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::sim::TickRecord;
use crate::types::{CellId, NodeId, Snssai, TimeMs, UeId};

pub const CELL_CSV_HEADER: &str = "t_ms,node,cell,slice,alloc_pct,served_mbps";
pub const UE_CSV_HEADER: &str = "t_ms,node,ue,serving_cell,offered_mbps,served_mbps";

/// Mean slice allocation and throughput over one window.
#[derive(Clone, Debug, PartialEq)]
pub struct CellRow {
    /// Window start.
    pub t_ms: TimeMs,
    pub node: NodeId,
    pub cell: CellId,
    pub du: String,
    pub slice: Snssai,
    pub alloc_pct: f64,
    pub served_mbps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UeRow {
    pub t_ms: TimeMs,
    pub node: NodeId,
    pub ue: UeId,
    /// Serving cell at the end of the window.
    pub serving_cell: CellId,
    pub offered_mbps: f64,
    pub served_mbps: f64,
}

struct CellAcc {
    cell: CellId,
    du: String,
    slice: Snssai,
    alloc: f64,
    served: f64,
    n: u32,
}

#[derive(Default)]
struct UeAcc {
    serving: CellId,
    offered: f64,
    served: f64,
    n: u32,
}

/// Averages ticks over fixed windows of `sample_ms`, ignoring ticks at or
/// after `end_ms`.
pub struct Recorder {
    sample_ms: TimeMs,
    end_ms: TimeMs,
    nodes: Vec<NodeId>,
    window: TimeMs,
    cell_acc: BTreeMap<(usize, usize, usize), CellAcc>,
    ue_acc: BTreeMap<(usize, UeId), UeAcc>,
    cells: Vec<CellRow>,
    ues: Vec<UeRow>,
}

impl Recorder {
    pub fn new(sample_ms: TimeMs, end_ms: TimeMs, nodes: Vec<NodeId>) -> Self {
        assert!(sample_ms > 0, "sample window must be positive");
        Self {
            sample_ms,
            end_ms,
            nodes,
            window: 0,
            cell_acc: BTreeMap::new(),
            ue_acc: BTreeMap::new(),
            cells: Vec::new(),
            ues: Vec::new(),
        }
    }

    pub fn push(&mut self, node: usize, tick: &TickRecord) {
        if tick.t_ms >= self.end_ms {
            return;
        }
        let window = tick.t_ms / self.sample_ms * self.sample_ms;
        if window != self.window {
            self.flush();
            self.window = window;
        }
        for (ci, c) in tick.cells.iter().enumerate() {
            for (si, s) in c.slices.iter().enumerate() {
                let a = self.cell_acc.entry((node, ci, si)).or_insert_with(|| CellAcc {
                    cell: c.cell_id.clone(),
                    du: c.du_id.clone(),
                    slice: s.snssai,
                    alloc: 0.0,
                    served: 0.0,
                    n: 0,
                });
                a.alloc += s.alloc_pct;
                a.served += s.served_mbps;
                a.n += 1;
            }
        }
        for u in &tick.ues {
            let a = self.ue_acc.entry((node, u.ue_id.clone())).or_default();
            a.serving = u.serving_cell.clone();
            a.offered += u.offered_mbps;
            a.served += u.served_mbps;
            a.n += 1;
        }
    }

    fn flush(&mut self) {
        let t = self.window;
        for ((node, ..), a) in std::mem::take(&mut self.cell_acc) {
            let n = a.n.max(1) as f64;
            self.cells.push(CellRow {
                t_ms: t,
                node: self.nodes[node].clone(),
                cell: a.cell,
                du: a.du,
                slice: a.slice,
                alloc_pct: a.alloc / n,
                served_mbps: a.served / n,
            });
        }
        for ((node, ue), a) in std::mem::take(&mut self.ue_acc) {
            let n = a.n.max(1) as f64;
            self.ues.push(UeRow {
                t_ms: t,
                node: self.nodes[node].clone(),
                ue,
                serving_cell: a.serving,
                offered_mbps: a.offered / n,
                served_mbps: a.served / n,
            });
        }
    }

    /// Closes the last, possibly partial, window.
    pub fn finish(&mut self) {
        self.flush();
    }

    pub fn cell_rows(&self) -> &[CellRow] {
        &self.cells
    }

    pub fn ue_rows(&self) -> &[UeRow] {
        &self.ues
    }

    pub fn cell_csv(&self) -> String {
        let mut out = format!("{CELL_CSV_HEADER}\n");
        for r in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3},{:.3}",
                r.t_ms, r.node, r.cell, r.slice, r.alloc_pct, r.served_mbps
            );
        }
        out
    }

    pub fn ue_csv(&self) -> String {
        let mut out = format!("{UE_CSV_HEADER}\n");
        for r in &self.ues {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3},{:.3}",
                r.t_ms, r.node, r.ue, r.serving_cell, r.offered_mbps, r.served_mbps
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{CellTick, SliceTick, UeTick};

    fn tick(t: TimeMs, served: f64) -> TickRecord {
        TickRecord {
            t_ms: t,
            cells: vec![CellTick {
                cell_id: "c".into(),
                du_id: "du".into(),
                slices: vec![SliceTick {
                    snssai: Snssai::new(1, 1),
                    alloc_pct: served / 2.0,
                    served_mbps: served,
                }],
            }],
            ues: vec![UeTick {
                ue_id: "u".into(),
                serving_cell: "c".into(),
                snssai: Snssai::new(1, 1),
                offered_mbps: 100.0,
                served_mbps: served,
                backlog_kbit: 0.0,
            }],
        }
    }

    #[test]
    fn windows_average_their_ticks() {
        let mut r = Recorder::new(4, 10, vec!["n".into()]);
        for t in 0..12 {
            r.push(0, &tick(t, if t < 2 { 10.0 } else { 20.0 }));
        }
        r.finish();
        let served: Vec<(TimeMs, f64)> = r.ue_rows().iter().map(|u| (u.t_ms, u.served_mbps)).collect();
        assert_eq!(served, vec![(0, 15.0), (4, 20.0), (8, 20.0)]);
        assert_eq!(r.cell_rows()[0].alloc_pct, 7.5);
        assert_eq!(r.cell_csv().lines().nth(1).unwrap(), "0,n,c,1-1,7.500,15.000");
        assert_eq!(r.ue_csv().lines().next().unwrap(), UE_CSV_HEADER);
    }
}
