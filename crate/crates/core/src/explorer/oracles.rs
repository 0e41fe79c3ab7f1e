//! Properties checked on every explored step and state.
//!
//! Trace-level oracles consume the event stream only, so they also run on
//! hand-written traces; structural ones inspect the model state.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::model::{ModelState, Phase, Transition, MAX_MODEL_PROCESSES};
use crate::instrumentation::LedgerFault;
use crate::protocol::{ProcessId, ProcessState};
use crate::trace::{Cell, TraceEvent, Value};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    MutualExclusion,
    Fifo,
    StateSafety,
    Automaton,
    Invariant,
    Deadlock,
    Divergence,
    ExclusionWindow,
    OwnerLinearity,
    SpuriousSchedule,
    QueueLinearizability,
    OwnerProgress,
    EnqueueRetry,
    ScenarioClassification,
    CasAccounting,
}

impl Property {
    pub const ALL: [Property; 15] = [
        Property::MutualExclusion,
        Property::Fifo,
        Property::StateSafety,
        Property::Automaton,
        Property::Invariant,
        Property::Deadlock,
        Property::Divergence,
        Property::ExclusionWindow,
        Property::OwnerLinearity,
        Property::SpuriousSchedule,
        Property::QueueLinearizability,
        Property::OwnerProgress,
        Property::EnqueueRetry,
        Property::ScenarioClassification,
        Property::CasAccounting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::MutualExclusion => "mutual-exclusion",
            Property::Fifo => "fifo",
            Property::StateSafety => "state-safety",
            Property::Automaton => "automaton",
            Property::Invariant => "invariant",
            Property::Deadlock => "deadlock",
            Property::Divergence => "divergence",
            Property::ExclusionWindow => "exclusion-window",
            Property::OwnerLinearity => "owner-linearity",
            Property::SpuriousSchedule => "spurious-schedule",
            Property::QueueLinearizability => "queue-linearizability",
            Property::OwnerProgress => "owner-progress",
            Property::EnqueueRetry => "enqueue-retry",
            Property::ScenarioClassification => "scenario-classification",
            Property::CasAccounting => "cas-accounting",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Property::MutualExclusion => "at most one granted claim is outstanding; only the holder releases",
            Property::Fifo => "processes enter in the order their enqueues committed",
            Property::StateSafety => "a process is ACTIVE when it enters and when it begins to release",
            Property::Automaton => "every state change is an edge of the process automaton",
            Property::Invariant => "queue structure, ownership case and FIFO promise hold in every state",
            Property::Deadlock => "some process can move until all have finished",
            Property::Divergence => "no cycle of steps exists in the state graph",
            Property::ExclusionWindow => "nobody else enters or releases between an entry and its release",
            Property::OwnerLinearity => "the plain owner store only ever overwrites NULL",
            Property::SpuriousSchedule => "schedule signals only reach parked processes",
            Property::QueueLinearizability => "queue results match a sequential FIFO replaying the commits",
            Property::OwnerProgress => "a holder's release completes running alone",
            Property::EnqueueRetry => "every lost enqueue race is explained by another process's enqueue",
            Property::ScenarioClassification => "every claim resolves through one of the ten scenarios",
            Property::CasAccounting => "every CAS falls inside a claim or release attempt",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Violation {
    pub property: Property,
    pub detail: String,
}

impl Violation {
    fn new(property: Property, detail: impl Into<String>) -> Self {
        Violation { property, detail: detail.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.property, self.detail)
    }
}

/// Verdict of one trace-level oracle.
pub type Verdict = Result<(), Violation>;

/// Fixed-capacity FIFO of process ids.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct PidQueue {
    items: [ProcessId; MAX_MODEL_PROCESSES],
    len: u8,
}

impl PidQueue {
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[ProcessId] {
        &self.items[..self.len()]
    }

    pub fn contains(&self, pid: ProcessId) -> bool {
        self.as_slice().contains(&pid)
    }

    pub fn front(&self) -> ProcessId {
        self.as_slice().first().copied().unwrap_or(ProcessId::NULL)
    }

    pub fn push(&mut self, pid: ProcessId) -> bool {
        if self.len() == MAX_MODEL_PROCESSES {
            return false;
        }
        self.items[self.len()] = pid;
        self.len += 1;
        true
    }

    pub fn pop(&mut self) -> ProcessId {
        if self.is_empty() {
            return ProcessId::NULL;
        }
        let front = self.items[0];
        self.items.copy_within(1.., 0);
        self.len -= 1;
        self.items[self.len()] = ProcessId::NULL;
        front
    }
}

fn bit(pid: ProcessId) -> u8 {
    1 << pid.index()
}

/// Oracle memory carried along each explored path.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct Monitors {
    /// Holder according to the mutex specification.
    spec_owner: ProcessId,
    /// Process between its entry and its release.
    window: ProcessId,
    claims: u8,
    waiting: PidQueue,
    parked: u8,
    /// Sequential model of the wait queue.
    queue: PidQueue,
}

impl Monitors {
    pub fn queue(&self) -> &PidQueue {
        &self.queue
    }
}

/// Per-step oracle driver. Shadows the owner and state cells so it can run
/// over a bare trace as well as inside the explorer.
pub struct Checker<'a> {
    monitors: &'a mut Monitors,
    owner: ProcessId,
    states: [ProcessState; MAX_MODEL_PROCESSES],
}

impl<'a> Checker<'a> {
    pub fn new(monitors: &'a mut Monitors, owner: ProcessId, states: [ProcessState; MAX_MODEL_PROCESSES]) -> Self {
        Checker { monitors, owner, states }
    }

    fn state(&self, pid: ProcessId) -> ProcessState {
        self.states[pid.index()]
    }

    /// Checks one event, in trace order.
    /// One verdict per oracle for this event; every oracle sees every event.
    pub fn observe(&mut self, ev: &TraceEvent) -> [Verdict; 6] {
        [self.mutex(ev), self.window(ev), self.fair(ev), self.queue(ev), self.cells(ev), self.safety(ev)]
    }

    fn mutex(&mut self, ev: &TraceEvent) -> Verdict {
        let m = &mut *self.monitors;
        if let Some(p) = ev.acquirer() {
            if !m.spec_owner.is_null() {
                return Err(Violation::new(
                    Property::MutualExclusion,
                    format!("{p} entered while {} still held the mutex", m.spec_owner),
                ));
            }
            m.spec_owner = p;
        }
        match *ev {
            TraceEvent::BeginRelease { pid } if pid != m.spec_owner => Err(Violation::new(
                Property::MutualExclusion,
                format!("{pid} began a release while the holder is {}", m.spec_owner),
            )),
            // the owner word leaving the holder is the release's commit point
            TraceEvent::Cas { cell: Cell::Owner, expected: Value::Pid(from), success: true, .. }
                if !from.is_null() && from == m.spec_owner =>
            {
                if m.window == from {
                    return Err(Violation::new(
                        Property::MutualExclusion,
                        format!("ownership left {from} before it began to release"),
                    ));
                }
                m.spec_owner = ProcessId::NULL;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn window(&mut self, ev: &TraceEvent) -> Verdict {
        let m = &mut *self.monitors;
        if let Some(p) = ev.acquirer() {
            if !m.window.is_null() {
                return Err(Violation::new(
                    Property::ExclusionWindow,
                    format!("{p} entered inside {}'s critical section", m.window),
                ));
            }
            m.window = p;
        }
        if let TraceEvent::BeginRelease { pid } = *ev {
            if m.window != pid {
                return Err(Violation::new(
                    Property::ExclusionWindow,
                    format!("{pid} released while the critical section belongs to {}", m.window),
                ));
            }
            m.window = ProcessId::NULL;
        }
        Ok(())
    }

    fn fair(&mut self, ev: &TraceEvent) -> Verdict {
        let m = &mut *self.monitors;
        match *ev {
            TraceEvent::BeginClaim { pid } => {
                if m.claims & bit(pid) != 0 {
                    return Err(Violation::new(Property::Fifo, format!("{pid} began a second claim")));
                }
                m.claims |= bit(pid);
            }
            TraceEvent::EnqueueCommit { value, .. } => {
                if m.claims & bit(value) == 0 || m.waiting.contains(value) {
                    return Err(Violation::new(Property::Fifo, format!("{value} enqueued outside a claim")));
                }
                m.waiting.push(value);
            }
            _ => {}
        }
        if let Some(p) = ev.acquirer() {
            if m.waiting.front() != p {
                return Err(Violation::new(
                    Property::Fifo,
                    format!("{p} entered ahead of {} (enqueue order {:?})", m.waiting.front(), m.waiting.as_slice()),
                ));
            }
            m.waiting.pop();
            m.claims &= !bit(p);
        }
        Ok(())
    }

    fn queue(&mut self, ev: &TraceEvent) -> Verdict {
        let q = &mut self.monitors.queue;
        let (op, got, expected) = match *ev {
            TraceEvent::EnqueueCommit { value, .. } => {
                if q.contains(value) || !q.push(value) {
                    return Err(Violation::new(
                        Property::QueueLinearizability,
                        format!("{value} enqueued twice or past capacity"),
                    ));
                }
                return Ok(());
            }
            TraceEvent::DequeueCommit { value, .. } => ("dequeue", value, q.pop()),
            TraceEvent::PeekCommit { value, .. } => ("peek", value, q.front()),
            _ => return Ok(()),
        };
        if got != expected {
            return Err(Violation::new(
                Property::QueueLinearizability,
                format!("{op} returned {got}, sequential queue says {expected}"),
            ));
        }
        Ok(())
    }

    /// Owner linearity and automaton conformance, updating the shadow cells.
    fn cells(&mut self, ev: &TraceEvent) -> Verdict {
        let (cell, value) = match *ev {
            TraceEvent::Store { cell, value, .. } => (cell, value),
            TraceEvent::Cas { cell, new, success: true, .. } => (cell, new),
            _ => return Ok(()),
        };
        match (cell, value) {
            (Cell::Owner, Value::Pid(p)) => {
                if matches!(ev, TraceEvent::Store { .. }) && !self.owner.is_null() {
                    return Err(Violation::new(
                        Property::OwnerLinearity,
                        format!("{} overwrote owner {} with a plain store", ev.pid(), self.owner),
                    ));
                }
                self.owner = p;
            }
            (Cell::State(p), Value::State(to)) => {
                let from = self.state(p);
                if from != to && !from.can_transition(to) {
                    return Err(Violation::new(Property::Automaton, format!("{p} moved {from} -> {to}")));
                }
                self.states[p.index()] = to;
            }
            _ => {}
        }
        Ok(())
    }

    fn safety(&mut self, ev: &TraceEvent) -> Verdict {
        let m = &mut *self.monitors;
        match *ev {
            TraceEvent::EndClaim { pid, granted: false } => m.parked |= bit(pid),
            TraceEvent::EndYield { pid } => m.parked &= !bit(pid),
            TraceEvent::ScheduleSignal { target, .. } if m.parked & bit(target) == 0 => {
                return Err(Violation::new(
                    Property::SpuriousSchedule,
                    format!("{target} was scheduled while running (state {})", self.states[target.index()]),
                ));
            }
            _ => {}
        }
        let (pid, moment) = match (ev.acquirer(), ev) {
            (Some(p), _) => (p, "entering"),
            (None, TraceEvent::BeginRelease { pid }) => (*pid, "releasing"),
            _ => return Ok(()),
        };
        let state = self.state(pid);
        if state != ProcessState::Active {
            return Err(Violation::new(Property::StateSafety, format!("{pid} is {state} when {moment}")));
        }
        Ok(())
    }
}

/// A failed link CAS must have lost to another process's node.
fn check_lost_link(pre: &ModelState, ev: &TraceEvent) -> Verdict {
    let TraceEvent::Cas { pid, cell: Cell::QueueLink(slot), expected, success: false, .. } = *ev else {
        return Ok(());
    };
    let found = pre.shared.links[slot as usize];
    let explained = match found.next {
        Some(node) => Value::Link(found) != expected && node.value() != pid,
        None => false,
    };
    if explained {
        Ok(())
    } else {
        Err(Violation::new(Property::EnqueueRetry, format!("{pid} lost a link CAS on slot {slot} holding {found}")))
    }
}

/// Checks one explored step: every event and the FIFO promises it touches.
/// Every oracle sees every event, so one step can break several properties.
/// The resulting state is checked separately, once per distinct state.
pub fn check_step(pre: &ModelState, post: &mut ModelState, tr: &Transition, found: &mut Vec<Violation>) {
    if let Some(fault) = &tr.ledger_fault {
        let property = match fault {
            LedgerFault::Unclassified { .. } => Property::ScenarioClassification,
            _ => Property::CasAccounting,
        };
        found.push(Violation::new(property, fault.to_string()));
    }
    let mut checker = Checker::new(&mut post.monitors, pre.shared.owner, pre.shared.states);
    for ev in &tr.events {
        found.extend(checker.observe(ev).into_iter().filter_map(Result::err));
        found.extend(check_lost_link(pre, ev).err());
        if let TraceEvent::EnqueueCommit { value, .. } = *ev {
            // (F1): a committed enqueue is the last element
            match post.shared.chain() {
                Err(e) => found.push(Violation::new(Property::Invariant, e)),
                Ok(chain) if chain.last() != Some(&value) => found.push(Violation::new(
                    Property::Invariant,
                    format!("{value}'s enqueue committed but the queue ends {:?}", chain.last()),
                )),
                Ok(_) => {}
            }
        }
    }
    found.extend(check_release_promise(pre, post).err());
}

/// The owner has left the queue but still holds the owner word.
fn releasing(s: &ModelState, queue: &[ProcessId]) -> bool {
    !s.shared.owner.is_null() && !queue.contains(&s.shared.owner)
}

/// (F2): when a release finishes handing over, the owner is NULL or the new head.
fn check_release_promise(pre: &ModelState, post: &ModelState) -> Verdict {
    let before = pre.monitors.queue.as_slice();
    let after = post.monitors.queue.as_slice();
    if releasing(pre, before) && !releasing(post, after) {
        let owner = post.shared.owner;
        let ok = owner.is_null() || (after.first() == Some(&owner) && !before.is_empty());
        if !ok {
            return Err(Violation::new(
                Property::Invariant,
                format!("release of {} handed the mutex to {owner}, queue {after:?}", pre.shared.owner),
            ));
        }
    }
    Ok(())
}

/// Structural checks on one state: queue shape, ownership case, owner progress.
pub fn check_state(s: &ModelState) -> Verdict {
    let inv = |d: String| Violation::new(Property::Invariant, d);
    // (S)
    let chain = s.shared.chain().map_err(inv)?;
    for (i, p) in chain.iter().enumerate() {
        if chain[..i].contains(p) {
            return Err(inv(format!("{p} is queued twice: {chain:?}")));
        }
    }
    if s.shared.tail_lag() > 1 {
        return Err(inv(format!("tail lags {} nodes behind the end", s.shared.tail_lag())));
    }
    if chain.as_slice() != s.monitors.queue.as_slice() {
        return Err(Violation::new(
            Property::QueueLinearizability,
            format!("queue holds {chain:?}, committed operations give {:?}", s.monitors.queue.as_slice()),
        ));
    }
    // (O)
    let owner = s.shared.owner;
    let head = chain.first().copied();
    let cases = [
        owner.is_null() && chain.is_empty(),
        owner.is_null() && head.is_some_and(|h| matches!(s.proc(h).phase, Phase::Claim(_))),
        !owner.is_null() && head == Some(owner),
        !owner.is_null() && !chain.contains(&owner),
    ];
    if cases.iter().filter(|&&c| c).count() != 1 {
        return Err(inv(format!("owner {owner} with queue {chain:?} matches no single ownership case")));
    }
    for i in 0..MAX_MODEL_PROCESSES {
        let pid = ProcessId::from_index(i);
        if matches!(s.procs[i].phase, Phase::Release(_)) && s.solo_release(pid, 64).is_none() {
            return Err(Violation::new(Property::OwnerProgress, format!("{pid}'s release cannot finish alone")));
        }
    }
    Ok(())
}

fn replay_trace(trace: &[TraceEvent], keep: impl Fn(&Violation) -> bool) -> Verdict {
    let mut monitors = Monitors::default();
    let mut checker = Checker::new(&mut monitors, ProcessId::NULL, [ProcessState::Active; MAX_MODEL_PROCESSES]);
    for ev in trace {
        if let Some(v) = checker.observe(ev).into_iter().filter_map(Result::err).find(&keep) {
            return Err(v);
        }
    }
    Ok(())
}

/// The mutex specification alone, over a bare trace.
pub fn mutex_oracle(trace: &[TraceEvent]) -> Verdict {
    replay_trace(trace, |v| v.property == Property::MutualExclusion)
}

/// FIFO fairness alone, over a bare trace.
pub fn fair_oracle(trace: &[TraceEvent]) -> Verdict {
    replay_trace(trace, |v| v.property == Property::Fifo)
}

/// State safety alone, with states reconstructed from the trace's own accesses.
pub fn safety_oracle(trace: &[TraceEvent]) -> Verdict {
    replay_trace(trace, |v| v.property == Property::StateSafety)
}

/// Every trace-level oracle at once.
pub fn trace_oracles(trace: &[TraceEvent]) -> Verdict {
    replay_trace(trace, |_| true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use TraceEvent::*;

    fn p(n: u32) -> ProcessId {
        ProcessId::from_raw(n)
    }

    fn set_state(pid: ProcessId, s: ProcessState) -> TraceEvent {
        Store { pid, cell: Cell::State(pid), value: Value::State(s) }
    }

    #[test]
    fn mutex_accepts_a_plain_cycle() {
        let t = [
            BeginClaim { pid: p(1) },
            EndClaim { pid: p(1), granted: true },
            BeginRelease { pid: p(1) },
            EndRelease { pid: p(1) },
        ];
        assert_eq!(mutex_oracle(&t), Ok(()));
    }

    #[test]
    fn mutex_rejects_two_grants() {
        let t = [
            BeginClaim { pid: p(1) },
            BeginClaim { pid: p(2) },
            EndClaim { pid: p(1), granted: true },
            EndClaim { pid: p(2), granted: true },
        ];
        assert_eq!(mutex_oracle(&t).unwrap_err().property, Property::MutualExclusion);
    }

    #[test]
    fn mutex_rejects_release_by_non_holder() {
        let t = [BeginClaim { pid: p(1) }, EndClaim { pid: p(1), granted: true }, BeginRelease { pid: p(2) }];
        assert!(mutex_oracle(&t).is_err());
    }

    #[test]
    fn fair_follows_enqueue_order() {
        let mut t = vec![
            BeginClaim { pid: p(1) },
            BeginClaim { pid: p(2) },
            EnqueueCommit { pid: p(1), value: p(1) },
            EnqueueCommit { pid: p(2), value: p(2) },
        ];
        let in_order = [t.clone(), vec![EndClaim { pid: p(1), granted: true }, EndClaim { pid: p(2), granted: true }]].concat();
        assert_eq!(fair_oracle(&in_order), Ok(()));
        t.push(EndClaim { pid: p(2), granted: true });
        assert_eq!(fair_oracle(&t).unwrap_err().property, Property::Fifo);
    }

    #[test]
    fn safety_needs_active_at_entry() {
        let ok = [
            BeginClaim { pid: p(1) },
            set_state(p(1), ProcessState::Engaging),
            set_state(p(1), ProcessState::Active),
            EndClaim { pid: p(1), granted: true },
        ];
        assert_eq!(safety_oracle(&ok), Ok(()));
        let waiting = [
            BeginClaim { pid: p(1) },
            set_state(p(1), ProcessState::Engaging),
            Cas {
                pid: p(1),
                cell: Cell::State(p(1)),
                expected: Value::State(ProcessState::Engaging),
                new: Value::State(ProcessState::Waiting),
                success: true,
            },
            EndClaim { pid: p(1), granted: true },
        ];
        assert_eq!(safety_oracle(&waiting).unwrap_err().property, Property::StateSafety);
    }

    #[test]
    fn automaton_rejects_waiting_to_active() {
        let t = [set_state(p(1), ProcessState::Engaging), set_state(p(1), ProcessState::Waiting), set_state(p(1), ProcessState::Active)];
        assert_eq!(trace_oracles(&t).unwrap_err().property, Property::Automaton);
    }

    #[test]
    fn pid_queue_is_fifo() {
        let mut q = PidQueue::default();
        assert_eq!(q.pop(), ProcessId::NULL);
        q.push(p(2));
        q.push(p(1));
        assert_eq!(q.pop(), p(2));
        assert_eq!(q.as_slice(), &[p(1)]);
    }
}
