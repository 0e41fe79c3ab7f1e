//! Events emitted by every shared-memory access and operation boundary.
//!
//! The explorer's oracles, the CAS ledger and the scenario classifier all
//! consume the same event stream, so a run can be audited after the fact.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::protocol::{ProcessId, ProcessState};
use crate::queue::{Link, NodeRef};

/// A shared cell touched by the protocol.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Owner,
    State(ProcessId),
    QueueHead,
    QueueTail,
    /// The `next` link of the queue node stored in this arena slot.
    QueueLink(u16),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Pid(ProcessId),
    State(ProcessState),
    Node(NodeRef),
    Link(Link),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Pid(p) => write!(f, "{p}"),
            Value::State(s) => write!(f, "{s}"),
            Value::Node(n) => write!(f, "{n}"),
            Value::Link(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    BeginClaim { pid: ProcessId },
    /// Claim returned. `granted: false` means the caller parked.
    EndClaim { pid: ProcessId, granted: bool },
    /// A parked claimant observed SCHEDULED and became ACTIVE again.
    EndYield { pid: ProcessId },
    BeginRelease { pid: ProcessId },
    EndRelease { pid: ProcessId },
    /// Linearization of an enqueue: the successful tail-link CAS.
    EnqueueCommit { pid: ProcessId, value: ProcessId },
    DequeueCommit { pid: ProcessId, value: ProcessId },
    PeekCommit { pid: ProcessId, value: ProcessId },
    Load { pid: ProcessId, cell: Cell, value: Value },
    Store { pid: ProcessId, cell: Cell, value: Value },
    Cas { pid: ProcessId, cell: Cell, expected: Value, new: Value, success: bool },
    /// A releaser moved a WAITING process to SCHEDULED; the host must run it again.
    ScheduleSignal { pid: ProcessId, target: ProcessId },
}

impl TraceEvent {
    /// The process that issued the event.
    pub fn pid(&self) -> ProcessId {
        match *self {
            TraceEvent::BeginClaim { pid }
            | TraceEvent::EndClaim { pid, .. }
            | TraceEvent::EndYield { pid }
            | TraceEvent::BeginRelease { pid }
            | TraceEvent::EndRelease { pid }
            | TraceEvent::EnqueueCommit { pid, .. }
            | TraceEvent::DequeueCommit { pid, .. }
            | TraceEvent::PeekCommit { pid, .. }
            | TraceEvent::Load { pid, .. }
            | TraceEvent::Store { pid, .. }
            | TraceEvent::Cas { pid, .. }
            | TraceEvent::ScheduleSignal { pid, .. } => pid,
        }
    }

    /// The process entering its critical section, if this event marks one:
    /// a granted claim, or a parked claim resuming after its schedule.
    pub fn acquirer(&self) -> Option<ProcessId> {
        match *self {
            TraceEvent::EndClaim { pid, granted: true } | TraceEvent::EndYield { pid } => Some(pid),
            _ => None,
        }
    }

    pub fn is_cas(&self) -> bool {
        matches!(self, TraceEvent::Cas { .. })
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::BeginClaim { pid } => write!(f, "begin_claim.{pid}"),
            TraceEvent::EndClaim { pid, granted: true } => write!(f, "end_claim_granted.{pid}"),
            TraceEvent::EndClaim { pid, granted: false } => write!(f, "end_claim_denied.{pid}"),
            TraceEvent::EndYield { pid } => write!(f, "end_yield.{pid}"),
            TraceEvent::BeginRelease { pid } => write!(f, "begin_release.{pid}"),
            TraceEvent::EndRelease { pid } => write!(f, "end_release.{pid}"),
            TraceEvent::EnqueueCommit { pid, value } => write!(f, "enqueue_commit.{pid}.{value}"),
            TraceEvent::DequeueCommit { pid, value } => write!(f, "dequeue_commit.{pid}.{value}"),
            TraceEvent::PeekCommit { pid, value } => write!(f, "peek_commit.{pid}.{value}"),
            TraceEvent::Load { pid, cell, value } => write!(f, "{pid}: load {cell:?} -> {value}"),
            TraceEvent::Store { pid, cell, value } => write!(f, "{pid}: store {cell:?} <- {value}"),
            TraceEvent::Cas { pid, cell, expected, new, success } => write!(
                f,
                "{pid}: cas {cell:?} {expected} -> {new} {}",
                if *success { "ok" } else { "failed" }
            ),
            TraceEvent::ScheduleSignal { pid, target } => write!(f, "schedule_signal.{pid}.{target}"),
        }
    }
}

/// Consumer of trace events.
pub trait EventSink {
    fn emit(&mut self, event: TraceEvent);

    /// Sinks that discard everything return `false` so producers can skip
    /// building events.
    fn enabled(&self) -> bool {
        true
    }
}

/// Discards all events.
impl EventSink for () {
    fn emit(&mut self, _event: TraceEvent) {}

    fn enabled(&self) -> bool {
        false
    }
}

impl EventSink for Vec<TraceEvent> {
    fn emit(&mut self, event: TraceEvent) {
        self.push(event);
    }
}

impl<S: EventSink + ?Sized> EventSink for &mut S {
    fn emit(&mut self, event: TraceEvent) {
        (**self).emit(event)
    }

    fn enabled(&self) -> bool {
        (**self).enabled()
    }
}

/// Adapts a closure into an [`EventSink`].
pub struct FnSink<F>(pub F);

impl<F: FnMut(TraceEvent)> EventSink for FnSink<F> {
    fn emit(&mut self, event: TraceEvent) {
        (self.0)(event)
    }
}
