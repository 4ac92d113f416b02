//! KPM-driven PRB capping: lower a slice's max ratio by a fixed step after
//! every report that exceeds the threshold, until a report comes in at or
//! below it.

use thiserror::Error;

use crate::e2ap::Cause;
use crate::kpm::UE_THP_DL;
use crate::rc::PrbQuota;
use crate::types::{CellId, NodeId, Snssai};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("step_pct must be at least 1")]
    ZeroStep,
    #[error("floor_pct {floor} is below the slice's dedicated_pct {dedicated}")]
    FloorBelowDedicated { floor: u8, dedicated: u8 },
    #[error("floor_pct {floor} is above the starting max_pct {start}")]
    FloorAboveStart { floor: u8, start: u8 },
    #[error("threshold must be finite and non-negative")]
    Threshold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopPolicy {
    pub node: NodeId,
    pub cell: CellId,
    pub snssai: Snssai,
    pub watch_metric: String,
    /// Mbps; the loop acts on reports strictly above it.
    pub threshold: f64,
    pub step_pct: u8,
    pub floor_pct: u8,
    /// The slice's quota when the loop starts.
    pub start: PrbQuota,
    pub period_ms: u32,
}

impl ClosedLoopPolicy {
    /// Defaults: watch `DRB.UEThpDl`, threshold 50 Mbps, 5% steps down to
    /// 5%, starting from (5, 20, 100), one report per second.
    pub fn new(node: impl Into<NodeId>, cell: impl Into<CellId>, snssai: Snssai) -> Self {
        Self {
            node: node.into(),
            cell: cell.into(),
            snssai,
            watch_metric: UE_THP_DL.to_string(),
            threshold: 50.0,
            step_pct: 5,
            floor_pct: 5,
            start: PrbQuota::default(),
            period_ms: 1000,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.step_pct == 0 {
            return Err(PolicyError::ZeroStep);
        }
        if self.floor_pct < self.start.dedicated_pct {
            return Err(PolicyError::FloorBelowDedicated {
                floor: self.floor_pct,
                dedicated: self.start.dedicated_pct,
            });
        }
        if self.floor_pct > self.start.max_pct {
            return Err(PolicyError::FloorAboveStart {
                floor: self.floor_pct,
                start: self.start.max_pct,
            });
        }
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(PolicyError::Threshold);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoopOutcome {
    /// A report at or below the threshold followed at least one action.
    Converged { max_pct: u8 },
    /// Still above the threshold, and another step would cross the floor.
    FloorReached { max_pct: u8 },
    Aborted(Cause),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoopStep {
    Idle,
    Issue(PrbQuota),
    Done(LoopOutcome),
}

/// The loop's decision logic, independent of any transport.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    policy: ClosedLoopPolicy,
    current_max: u8,
    issued: Vec<u8>,
    awaiting: bool,
    outcome: Option<LoopOutcome>,
}

impl ClosedLoop {
    pub fn new(policy: ClosedLoopPolicy) -> Result<Self, PolicyError> {
        policy.validate()?;
        Ok(Self {
            current_max: policy.start.max_pct,
            policy,
            issued: Vec::new(),
            awaiting: false,
            outcome: None,
        })
    }

    pub fn policy(&self) -> &ClosedLoopPolicy {
        &self.policy
    }

    /// Every max_pct sent so far, in order.
    pub fn issued(&self) -> &[u8] {
        &self.issued
    }

    pub fn outcome(&self) -> Option<LoopOutcome> {
        self.outcome
    }

    /// Feeds one report's value of the watched metric.
    pub fn on_measurement(&mut self, value: f64) -> LoopStep {
        if self.outcome.is_some() || self.awaiting {
            return LoopStep::Idle;
        }
        if value <= self.policy.threshold {
            if self.issued.is_empty() {
                return LoopStep::Idle;
            }
            return self.finish(LoopOutcome::Converged {
                max_pct: self.current_max,
            });
        }
        let next = match self.current_max.checked_sub(self.policy.step_pct) {
            Some(n) if n >= self.policy.floor_pct => n,
            _ => {
                return self.finish(LoopOutcome::FloorReached {
                    max_pct: self.current_max,
                })
            }
        };
        self.current_max = next;
        self.issued.push(next);
        self.awaiting = true;
        let s = self.policy.start;
        LoopStep::Issue(PrbQuota {
            dedicated_pct: s.dedicated_pct,
            min_pct: s.min_pct.min(next),
            max_pct: next,
        })
    }

    /// Feeds the outcome of the last issued control.
    pub fn on_control_result(&mut self, result: Result<(), Cause>) -> LoopStep {
        self.awaiting = false;
        match result {
            Ok(()) => LoopStep::Idle,
            Err(cause) => self.finish(LoopOutcome::Aborted(cause)),
        }
    }

    fn finish(&mut self, outcome: LoopOutcome) -> LoopStep {
        self.outcome = Some(outcome);
        LoopStep::Done(outcome)
    }
}
