//! Hashable global state of N processes running claim/release cycles.

use crate::cells::{MutexCells, QueueCells, Step, Tracer};
use crate::instrumentation::{AttemptTracker, ClosedAttempt, LedgerFault};
use crate::protocol::{ClaimOp, ProcessId, ProcessState, ReleaseOp, Variant, YieldOp};
use crate::queue::{Link, NodeRef};
use crate::trace::TraceEvent;

use super::oracles::Monitors;

/// Largest process count the model represents.
pub const MAX_MODEL_PROCESSES: usize = 4;
const SLOTS: usize = 1 + 2 * MAX_MODEL_PROCESSES;

/// Shared memory: the owner word, state cells and the queue's arena.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Shared {
    pub owner: ProcessId,
    pub states: [ProcessState; MAX_MODEL_PROCESSES],
    pub head: NodeRef,
    pub tail: NodeRef,
    pub links: [Link; SLOTS],
}

impl Default for Shared {
    fn default() -> Self {
        Shared {
            owner: ProcessId::NULL,
            states: [ProcessState::Active; MAX_MODEL_PROCESSES],
            head: NodeRef::SENTINEL,
            tail: NodeRef::SENTINEL,
            links: [Link::empty(0); SLOTS],
        }
    }
}

impl Shared {
    pub fn state(&self, pid: ProcessId) -> ProcessState {
        self.states[pid.index()]
    }

    /// Queue contents from front to back, or a description of how the list is broken.
    pub fn chain(&self) -> Result<Vec<ProcessId>, String> {
        let mut out = Vec::new();
        let mut node = self.head;
        let mut tail_seen = node == self.tail;
        loop {
            let link = self.links[node.slot as usize];
            if link.gen != node.gen {
                return Err(format!("node {node} reached from head was recycled (link {link})"));
            }
            let Some(next) = link.next else { break };
            if out.len() >= MAX_MODEL_PROCESSES {
                return Err("queue longer than the number of processes, or cyclic".into());
            }
            out.push(next.value());
            node = next;
            tail_seen |= node == self.tail;
        }
        if !tail_seen {
            return Err(format!("tail {} is not reachable from head {}", self.tail, self.head));
        }
        Ok(out)
    }

    /// Number of nodes after the tail; a well-formed queue lags by at most one.
    pub fn tail_lag(&self) -> usize {
        let mut lag = 0;
        let mut node = self.tail;
        while let Some(next) = self.links[node.slot as usize].next {
            lag += 1;
            node = next;
            if lag > MAX_MODEL_PROCESSES {
                break;
            }
        }
        lag
    }
}

pub(crate) struct ModelCells<'a>(pub &'a mut Shared);

impl QueueCells for ModelCells<'_> {
    fn load_head(&mut self) -> NodeRef {
        self.0.head
    }

    fn load_tail(&mut self) -> NodeRef {
        self.0.tail
    }

    fn load_link(&mut self, slot: u16) -> Link {
        self.0.links[slot as usize]
    }

    fn store_link(&mut self, slot: u16, link: Link) {
        self.0.links[slot as usize] = link;
    }

    fn cas_head(&mut self, current: NodeRef, new: NodeRef) -> bool {
        cas(&mut self.0.head, current, new)
    }

    fn cas_tail(&mut self, current: NodeRef, new: NodeRef) -> bool {
        cas(&mut self.0.tail, current, new)
    }

    fn cas_link(&mut self, slot: u16, current: Link, new: Link) -> bool {
        cas(&mut self.0.links[slot as usize], current, new)
    }
}

impl MutexCells for ModelCells<'_> {
    fn load_owner(&mut self) -> ProcessId {
        self.0.owner
    }

    fn store_owner(&mut self, pid: ProcessId) {
        self.0.owner = pid;
    }

    fn cas_owner(&mut self, current: ProcessId, new: ProcessId) -> bool {
        cas(&mut self.0.owner, current, new)
    }

    fn load_state(&mut self, pid: ProcessId) -> ProcessState {
        self.0.states[pid.index()]
    }

    fn store_state(&mut self, pid: ProcessId, state: ProcessState) {
        self.0.states[pid.index()] = state;
    }

    fn cas_state(&mut self, pid: ProcessId, current: ProcessState, new: ProcessState) -> bool {
        cas(&mut self.0.states[pid.index()], current, new)
    }
}

fn cas<T: PartialEq>(cell: &mut T, current: T, new: T) -> bool {
    if *cell == current {
        *cell = new;
        true
    } else {
        false
    }
}

/// Which operation a process is in.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Phase {
    Claim(ClaimOp),
    /// Denied and parked until scheduled.
    Yield(YieldOp),
    /// Holding the mutex (before the first step) or releasing it.
    Release(ReleaseOp),
    Done,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Proc {
    pub phase: Phase,
    /// Completed claim/release cycles.
    pub cycle: u8,
    pub tracker: AttemptTracker,
}

impl Proc {
    fn idle() -> Self {
        Proc { phase: Phase::Done, cycle: 0, tracker: AttemptTracker::default() }
    }
}

/// Everything one interleaving has produced so far.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct ModelState {
    pub shared: Shared,
    pub procs: [Proc; MAX_MODEL_PROCESSES],
    pub monitors: Monitors,
}

/// Output of one atomic step.
#[derive(Debug, Default)]
pub struct Transition {
    pub events: Vec<TraceEvent>,
    pub closed: Vec<ClosedAttempt>,
    pub ledger_fault: Option<LedgerFault>,
}

/// Parameters fixed for a whole exploration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelParams {
    pub processes: usize,
    pub cycles: u8,
    pub variant: Variant,
}

impl ModelState {
    pub fn initial(params: &ModelParams) -> Self {
        assert!((1..=MAX_MODEL_PROCESSES).contains(&params.processes));
        let mut procs = [Proc::idle(); MAX_MODEL_PROCESSES];
        for (i, p) in procs.iter_mut().enumerate().take(params.processes) {
            p.phase = Phase::Claim(ClaimOp::new(NodeRef::for_process(ProcessId::from_index(i), 0), params.variant));
        }
        ModelState { shared: Shared::default(), procs, monitors: Monitors::default() }
    }

    pub fn proc(&self, pid: ProcessId) -> &Proc {
        &self.procs[pid.index()]
    }

    /// Whether `pid` can take a step. A parked process waits for SCHEDULED.
    pub fn enabled(&self, pid: ProcessId) -> bool {
        match self.proc(pid).phase {
            Phase::Done => false,
            Phase::Yield(op) => !op.awaiting_schedule() || self.shared.state(pid) == ProcessState::Scheduled,
            Phase::Claim(_) | Phase::Release(_) => true,
        }
    }

    pub fn all_done(&self) -> bool {
        self.procs.iter().all(|p| p.phase == Phase::Done)
    }

    /// Performs `pid`'s next atomic step in place. `pid` must be enabled.
    pub fn step(&mut self, pid: ProcessId, params: &ModelParams, out: &mut Transition) {
        out.events.clear();
        out.closed.clear();
        out.ledger_fault = None;
        let proc = &mut self.procs[pid.index()];
        let mut cells = ModelCells(&mut self.shared);
        let mut t = Tracer::new(&mut cells, &mut out.events, pid);
        proc.phase = match proc.phase {
            Phase::Claim(mut op) => match op.step(&mut t) {
                Step::Pending => Phase::Claim(op),
                Step::Done(outcome) if outcome.granted => Phase::Release(ReleaseOp::new(params.variant)),
                Step::Done(_) => Phase::Yield(YieldOp::new()),
                Step::Blocked => unreachable!("claim never blocks"),
            },
            Phase::Yield(mut op) => match op.step(&mut t) {
                Step::Pending => Phase::Yield(op),
                Step::Done(()) => Phase::Release(ReleaseOp::new(params.variant)),
                Step::Blocked => panic!("{pid} stepped while parked"),
            },
            Phase::Release(mut op) => match op.step(&mut t) {
                Step::Pending => Phase::Release(op),
                Step::Done(_) => {
                    proc.cycle += 1;
                    if proc.cycle < params.cycles {
                        let node = NodeRef::for_process(pid, u32::from(proc.cycle));
                        Phase::Claim(ClaimOp::new(node, params.variant))
                    } else {
                        Phase::Done
                    }
                }
                Step::Blocked => unreachable!("release never blocks"),
            },
            Phase::Done => panic!("{pid} stepped after finishing"),
        };
        for ev in &out.events {
            match proc.tracker.observe(pid, ev) {
                Ok(Some(closed)) => out.closed.push(closed),
                Ok(None) => {}
                Err(fault) => {
                    out.ledger_fault.get_or_insert(fault);
                }
            }
        }
    }

    /// Runs `pid` alone until its release finishes. `None` if it stalls or
    /// exceeds `budget` steps.
    pub fn solo_release(&self, pid: ProcessId, budget: usize) -> Option<usize> {
        let mut op = match self.proc(pid).phase {
            Phase::Release(op) => op,
            _ => return None,
        };
        let mut shared = self.shared.clone();
        let mut cells = ModelCells(&mut shared);
        let mut sink = ();
        let mut t = Tracer::new(&mut cells, &mut sink, pid);
        for steps in 1..=budget {
            match op.step(&mut t) {
                Step::Pending => {}
                Step::Done(_) => return Some(steps),
                Step::Blocked => return None,
            }
        }
        None
    }
}
