//! Wiring for whole runs: a lockstep testbed joining simulated nodes, the
//! RIC and xApps; scenario files; telemetry; assertions; and the CI runner.
//!
//! Every millisecond the testbed runs one simulator tick on each node, moves
//! node messages to the RIC, fires RIC timeouts, steps the xApps, lets the
//! RIC route their requests, and hands the RIC's output back to the nodes.
//! A control sent during tick `t` is therefore handled by the node after
//! tick `t`, and nothing depends on thread timing.

mod record;
mod run;
mod scenario;

pub use record::{CellRow, Recorder, UeRow, CELL_CSV_HEADER, UE_CSV_HEADER};
pub use run::{
    ci, control_round_trips, execute, load_scenario, run_scenario, AssertionResult, CiEntry, CiSummary, LogLine,
    RunError, RunOptions, RunReport,
};
pub use scenario::{
    AssertionSpec, Diagnostic, FlowSpec, NodeSpec, Scenario, ScenarioError, SliceSpec, UeSpec, XAppSpec,
};

use std::time::Duration;

use thiserror::Error;

use crate::codec::{loopback_pair, Envelope, Link, LinkError, LinkMode};
use crate::ric::{ConnId, Ric, RicEndpoint};
use crate::sim::{NodeConfig, SimError, SimNode, TickRecord};
use crate::types::{TimeMs, XAppId};
use crate::xapp::XApp;

/// How node and RIC exchange envelopes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Transport {
    /// Envelopes are handed over directly.
    #[default]
    InProc,
    /// Envelopes are framed and sent over loopback TCP.
    Stream,
}

impl std::str::FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(Transport::InProc),
            "stream" => Ok(Transport::Stream),
            other => Err(format!("unknown transport {other:?} (expected inproc or stream)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("link: {0}")]
    Link(#[from] LinkError),
    #[error("no node at index {0}")]
    NoNode(usize),
}

/// How long a stream transfer may take before the run is declared broken.
const LINK_TIMEOUT: Duration = Duration::from_secs(10);

struct Slot {
    sim: SimNode,
    conn: ConnId,
    /// `(node side, RIC side)` when running over streams.
    links: Option<(Link, Link)>,
    context_sent: bool,
    connected: bool,
}

/// Nodes, RIC and xApps advanced together one millisecond at a time.
pub struct Testbed {
    ric: Ric,
    slots: Vec<Slot>,
    xapps: Vec<Box<dyn XApp>>,
    transport: Transport,
    now: TimeMs,
    xapp_errors: Vec<(TimeMs, XAppId, String)>,
    node_errors: Vec<(TimeMs, String)>,
}

impl Testbed {
    pub fn new(transport: Transport) -> Self {
        Self {
            ric: Ric::new(),
            slots: Vec::new(),
            xapps: Vec::new(),
            transport,
            now: 0,
            xapp_errors: Vec::new(),
            node_errors: Vec::new(),
        }
    }

    pub fn ric(&self) -> &Ric {
        &self.ric
    }

    pub fn ric_mut(&mut self) -> &mut Ric {
        &mut self.ric
    }

    pub fn endpoint(&self) -> RicEndpoint {
        self.ric.endpoint()
    }

    /// Next tick to run.
    pub fn now(&self) -> TimeMs {
        self.now
    }

    /// Adds a node and queues its setup request; returns its index.
    pub fn add_node(&mut self, config: NodeConfig, seed: u64) -> Result<usize, HarnessError> {
        let mut sim = SimNode::new(config, seed)?;
        sim.advance(self.now);
        sim.start()?;
        let links = match self.transport {
            Transport::InProc => None,
            Transport::Stream => Some(loopback_pair(LinkMode::Stream)?),
        };
        let conn = self.ric.connect();
        self.slots.push(Slot {
            sim,
            conn,
            links,
            context_sent: false,
            connected: true,
        });
        Ok(self.slots.len() - 1)
    }

    pub fn node(&self, i: usize) -> Option<&SimNode> {
        self.slots.get(i).map(|s| &s.sim)
    }

    pub fn node_mut(&mut self, i: usize) -> Option<&mut SimNode> {
        self.slots.get_mut(i).map(|s| &mut s.sim)
    }

    pub fn node_count(&self) -> usize {
        self.slots.len()
    }

    /// Severs node `i` from the RIC; the simulator keeps running.
    pub fn disconnect_node(&mut self, i: usize) -> Result<(), HarnessError> {
        let slot = self.slots.get_mut(i).ok_or(HarnessError::NoNode(i))?;
        slot.sim.disconnect();
        slot.connected = false;
        slot.links = None;
        self.ric.node_disconnected(slot.conn);
        Ok(())
    }

    pub fn add_xapp(&mut self, xapp: Box<dyn XApp>) {
        self.xapps.push(xapp);
    }

    pub fn xapps(&self) -> &[Box<dyn XApp>] {
        &self.xapps
    }

    /// The xApp with `id`, if it has concrete type `T`.
    pub fn xapp<T: 'static>(&self, id: &str) -> Option<&T> {
        self.xapps
            .iter()
            .find(|x| x.id().as_str() == id)
            .and_then(|x| x.as_any().downcast_ref::<T>())
    }

    /// Errors returned by xApp steps, with the tick they happened in.
    pub fn xapp_errors(&self) -> &[(TimeMs, XAppId, String)] {
        &self.xapp_errors
    }

    /// Envelopes a node refused to handle.
    pub fn node_errors(&self) -> &[(TimeMs, String)] {
        &self.node_errors
    }

    /// Runs one tick and returns each node's tick record.
    pub fn step(&mut self) -> Result<Vec<TickRecord>, HarnessError> {
        let t = self.now;
        let mut records = Vec::with_capacity(self.slots.len());
        for slot in &mut self.slots {
            slot.sim.advance(t + 1);
            records.push(slot.sim.last_tick().clone());
        }
        self.ric.tick(t);
        for i in 0..self.slots.len() {
            let out = self.slots[i].sim.drain_outbox();
            if !self.slots[i].connected {
                continue;
            }
            let delivered = transfer(&mut self.slots[i].links, out, false)?;
            let conn = self.slots[i].conn;
            for env in delivered {
                self.ric.handle_envelope(conn, env);
            }
            let slot = &mut self.slots[i];
            if !slot.context_sent && self.ric.conn_node(conn).is_some() {
                slot.context_sent = true;
                let id = slot.sim.node_id().clone();
                // Attach-time UE context, passed alongside E2 setup.
                let _ = self.ric.set_ue_context(&id, slot.sim.ue_context());
            }
        }
        for x in &mut self.xapps {
            if let Err(e) = x.step(t) {
                self.xapp_errors.push((t, x.id().clone(), e.to_string()));
            }
        }
        self.ric.process_requests();
        let mut by_conn: Vec<Vec<Envelope>> = vec![Vec::new(); self.slots.len()];
        for (conn, env) in self.ric.drain_outbox() {
            if let Some(i) = self.slots.iter().position(|s| s.conn == conn) {
                by_conn[i].push(env);
            }
        }
        for (slot, envs) in self.slots.iter_mut().zip(by_conn) {
            if !slot.connected || envs.is_empty() {
                continue;
            }
            for env in transfer(&mut slot.links, envs, true)? {
                if let Err(e) = slot.sim.handle_envelope(&env) {
                    self.node_errors.push((t, format!("{}: {e}", slot.sim.node_id())));
                }
            }
        }
        self.now += 1;
        Ok(records)
    }

    /// Runs ticks until `now == until`, passing each node's record to `sink`.
    pub fn run_until(
        &mut self,
        until: TimeMs,
        mut sink: impl FnMut(usize, &TickRecord),
    ) -> Result<(), HarnessError> {
        while self.now < until {
            for (i, rec) in self.step()?.iter().enumerate() {
                sink(i, rec);
            }
        }
        Ok(())
    }
}

/// Moves envelopes across one connection: directly, or through the stream
/// link pair when there is one (`to_node` picks the direction).
fn transfer(links: &mut Option<(Link, Link)>, envs: Vec<Envelope>, to_node: bool) -> Result<Vec<Envelope>, LinkError> {
    let Some((node_side, ric_side)) = links else {
        return Ok(envs);
    };
    let (tx, rx) = if to_node { (ric_side, node_side) } else { (node_side, ric_side) };
    for env in &envs {
        tx.send(env)?;
    }
    (0..envs.len()).map(|_| rx.recv_timeout(LINK_TIMEOUT)).collect()
}
