use std::sync::atomic::{AtomicU32, AtomicU8, Ordering::SeqCst};

use super::machine::{ClaimOp, ReleaseOp, Variant, YieldOp};
use super::types::{ClaimOutcome, ProcessId, ProcessState};
use crate::cells::{MutexCells, QueueCells, Step, Tracer};
use crate::error::{Error, Result};
use crate::queue::{AtomicQueueCells, Link, LockFreeQueue, NodeRef};
use crate::trace::EventSink;

/// How the protocol talks to the host runtime.
pub trait RuntimeHooks {
    /// `pid` could not enter yet and is giving up its runner.
    fn on_wait(&self, pid: ProcessId);
    /// `pid` was parked and is now SCHEDULED; put it back on a run queue.
    fn on_schedule(&self, pid: ProcessId);
}

/// Hooks for callers that poll instead of parking.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoHooks;

impl RuntimeHooks for NoHooks {
    fn on_wait(&self, _pid: ProcessId) {}
    fn on_schedule(&self, _pid: ProcessId) {}
}

impl<H: RuntimeHooks + ?Sized> RuntimeHooks for &H {
    fn on_wait(&self, pid: ProcessId) {
        (**self).on_wait(pid)
    }

    fn on_schedule(&self, pid: ProcessId) {
        (**self).on_schedule(pid)
    }
}

/// Result of [`ClaimMutex::yield_until_scheduled`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum YieldStatus {
    /// The process was scheduled and is ACTIVE owner of the mutex.
    Resumed,
    /// Not scheduled yet. `on_wait` was called; call again once `on_schedule` fires.
    Parked,
}

/// The claim/release mutex over real atomics.
///
/// Process ids `1..=capacity` may use it. Each id must be driven by one
/// runner at a time, as in any cooperative runtime.
pub struct ClaimMutex {
    owner: AtomicU32,
    states: Box<[AtomicU8]>,
    queue: LockFreeQueue,
    variant: Variant,
}

impl ClaimMutex {
    pub fn new(capacity: u32) -> Result<Self> {
        Self::with_variant(capacity, Variant::Faithful)
    }

    /// A mutex running a possibly mutated protocol. Only useful for testing harnesses.
    pub fn with_variant(capacity: u32, variant: Variant) -> Result<Self> {
        Ok(ClaimMutex {
            owner: AtomicU32::new(ProcessId::NULL.raw()),
            states: (0..capacity).map(|_| AtomicU8::new(ProcessState::Active as u8)).collect(),
            queue: LockFreeQueue::with_capacity(capacity)?,
            variant,
        })
    }

    pub fn capacity(&self) -> u32 {
        self.queue.capacity()
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn owner(&self) -> ProcessId {
        ProcessId::from_raw(self.owner.load(SeqCst))
    }

    pub fn state(&self, pid: ProcessId) -> Result<ProcessState> {
        self.queue.check_pid(pid)?;
        Ok(ProcessState::from_u8(self.states[pid.index()].load(SeqCst)))
    }

    /// Waiting processes from front to back. Only exact while nothing is in flight.
    pub fn queue_snapshot(&self) -> Vec<ProcessId> {
        self.queue.snapshot()
    }

    pub fn cells(&self) -> AtomicMutexCells<'_> {
        AtomicMutexCells { mutex: self, queue: self.queue.cells() }
    }

    pub fn claim<H: RuntimeHooks + ?Sized>(&self, pid: ProcessId, hooks: &H) -> Result<ClaimOutcome> {
        self.claim_traced(pid, hooks, &mut ())
    }

    /// Claims the mutex. On `granted: false` the caller is WAITING and must
    /// call [`ClaimMutex::yield_until_scheduled`] before entering.
    pub fn claim_traced<H, S>(&self, pid: ProcessId, _hooks: &H, sink: &mut S) -> Result<ClaimOutcome>
    where
        H: RuntimeHooks + ?Sized,
        S: EventSink + ?Sized,
    {
        let state = self.state(pid)?;
        if state != ProcessState::Active {
            return Err(Error::NotActive { pid, op: "claim", state });
        }
        if self.owner() == pid {
            return Err(Error::Reentrant { pid });
        }
        let mut op = ClaimOp::new(self.queue.next_node(pid), self.variant);
        Ok(self.run(pid, sink, |t| op.step(t)).expect("claim never blocks"))
    }

    pub fn release<H: RuntimeHooks + ?Sized>(&self, pid: ProcessId, hooks: &H) -> Result<()> {
        self.release_traced(pid, hooks, &mut ())
    }

    /// Releases the mutex, handing it to the next waiter if there is one.
    pub fn release_traced<H, S>(&self, pid: ProcessId, hooks: &H, sink: &mut S) -> Result<()>
    where
        H: RuntimeHooks + ?Sized,
        S: EventSink + ?Sized,
    {
        let state = self.state(pid)?;
        let owner = self.owner();
        if owner != pid {
            return Err(Error::NotOwner { pid, owner });
        }
        if state != ProcessState::Active {
            return Err(Error::NotActive { pid, op: "release", state });
        }
        let mut op = ReleaseOp::new(self.variant);
        let outcome = self.run(pid, sink, |t| op.step(t)).expect("release never blocks");
        if let Some(woken) = outcome.woken {
            hooks.on_schedule(woken);
        }
        Ok(())
    }

    pub fn yield_until_scheduled<H: RuntimeHooks + ?Sized>(&self, pid: ProcessId, hooks: &H) -> Result<YieldStatus> {
        self.yield_traced(pid, hooks, &mut ())
    }

    /// Completes a denied claim. Never spins: if the schedule has not
    /// arrived yet, calls `on_wait` and returns [`YieldStatus::Parked`].
    pub fn yield_traced<H, S>(&self, pid: ProcessId, hooks: &H, sink: &mut S) -> Result<YieldStatus>
    where
        H: RuntimeHooks + ?Sized,
        S: EventSink + ?Sized,
    {
        let state = self.state(pid)?;
        if !matches!(state, ProcessState::Waiting | ProcessState::Scheduled) {
            return Err(Error::NotParked { pid, state });
        }
        let mut op = YieldOp::new();
        match self.run(pid, sink, |t| op.step(t)) {
            Some(()) => Ok(YieldStatus::Resumed),
            None => {
                hooks.on_wait(pid);
                Ok(YieldStatus::Parked)
            }
        }
    }

    /// Steps a machine to completion; `None` if it blocked.
    fn run<T, S: EventSink + ?Sized>(
        &self,
        pid: ProcessId,
        sink: &mut S,
        mut step: impl FnMut(&mut Tracer<'_, AtomicMutexCells<'_>, S>) -> Step<T>,
    ) -> Option<T> {
        let mut cells = self.cells();
        let mut t = Tracer::new(&mut cells, sink, pid);
        loop {
            match step(&mut t) {
                Step::Pending => {}
                Step::Blocked => return None,
                Step::Done(v) => return Some(v),
            }
        }
    }
}

impl std::fmt::Debug for ClaimMutex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClaimMutex")
            .field("owner", &self.owner())
            .field("variant", &self.variant)
            .field("queue", &self.queue)
            .finish()
    }
}

/// [`MutexCells`] view over a [`ClaimMutex`]'s atomics.
pub struct AtomicMutexCells<'a> {
    mutex: &'a ClaimMutex,
    queue: AtomicQueueCells<'a>,
}

impl QueueCells for AtomicMutexCells<'_> {
    fn load_head(&mut self) -> NodeRef {
        self.queue.load_head()
    }

    fn load_tail(&mut self) -> NodeRef {
        self.queue.load_tail()
    }

    fn load_link(&mut self, slot: u16) -> Link {
        self.queue.load_link(slot)
    }

    fn store_link(&mut self, slot: u16, link: Link) {
        self.queue.store_link(slot, link)
    }

    fn cas_head(&mut self, current: NodeRef, new: NodeRef) -> bool {
        self.queue.cas_head(current, new)
    }

    fn cas_tail(&mut self, current: NodeRef, new: NodeRef) -> bool {
        self.queue.cas_tail(current, new)
    }

    fn cas_link(&mut self, slot: u16, current: Link, new: Link) -> bool {
        self.queue.cas_link(slot, current, new)
    }
}

impl MutexCells for AtomicMutexCells<'_> {
    fn load_owner(&mut self) -> ProcessId {
        self.mutex.owner()
    }

    fn store_owner(&mut self, pid: ProcessId) {
        self.mutex.owner.store(pid.raw(), SeqCst)
    }

    fn cas_owner(&mut self, current: ProcessId, new: ProcessId) -> bool {
        self.mutex.owner.compare_exchange(current.raw(), new.raw(), SeqCst, SeqCst).is_ok()
    }

    fn load_state(&mut self, pid: ProcessId) -> ProcessState {
        ProcessState::from_u8(self.mutex.states[pid.index()].load(SeqCst))
    }

    fn store_state(&mut self, pid: ProcessId, state: ProcessState) {
        self.mutex.states[pid.index()].store(state as u8, SeqCst)
    }

    fn cas_state(&mut self, pid: ProcessId, current: ProcessState, new: ProcessState) -> bool {
        self.mutex.states[pid.index()]
            .compare_exchange(current as u8, new as u8, SeqCst, SeqCst)
            .is_ok()
    }
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use super::*;
    use crate::protocol::ScheduleOp;
    use crate::trace::TraceEvent;

    use ProcessState::*;

    fn pid(n: u32) -> ProcessId {
        ProcessId::from_raw(n)
    }

    #[derive(Default)]
    struct Recorder {
        waits: RefCell<Vec<ProcessId>>,
        schedules: RefCell<Vec<ProcessId>>,
    }

    impl RuntimeHooks for Recorder {
        fn on_wait(&self, pid: ProcessId) {
            self.waits.borrow_mut().push(pid);
        }

        fn on_schedule(&self, pid: ProcessId) {
            self.schedules.borrow_mut().push(pid);
        }
    }

    #[test]
    fn uncontended_claim_costs_three_cas() {
        let m = ClaimMutex::new(2).unwrap();
        let mut events = Vec::new();
        let out = m.claim_traced(pid(1), &NoHooks, &mut events).unwrap();
        assert!(out.granted);
        assert_eq!(events.iter().filter(|e| e.is_cas()).count(), 3);
        assert_eq!(m.owner(), pid(1));
        assert_eq!(m.state(pid(1)).unwrap(), Active);
    }

    #[test]
    fn claim_while_held_parks_then_handover_wakes() {
        let m = ClaimMutex::new(2).unwrap();
        let hooks = Recorder::default();
        assert!(m.claim(pid(1), &hooks).unwrap().granted);
        assert!(!m.claim(pid(2), &hooks).unwrap().granted);
        assert_eq!(m.state(pid(2)).unwrap(), Waiting);
        assert_eq!(m.queue_snapshot(), vec![pid(1), pid(2)]);

        assert_eq!(m.yield_until_scheduled(pid(2), &hooks).unwrap(), YieldStatus::Parked);
        assert_eq!(*hooks.waits.borrow(), vec![pid(2)]);

        m.release(pid(1), &hooks).unwrap();
        assert_eq!(m.owner(), pid(2));
        assert_eq!(m.state(pid(2)).unwrap(), Scheduled);
        assert_eq!(*hooks.schedules.borrow(), vec![pid(2)]);

        assert_eq!(m.yield_until_scheduled(pid(2), &hooks).unwrap(), YieldStatus::Resumed);
        assert_eq!(m.state(pid(2)).unwrap(), Active);
        m.release(pid(2), &hooks).unwrap();
        assert_eq!(m.owner(), ProcessId::NULL);
        assert!(m.queue_snapshot().is_empty());
    }

    #[test]
    fn release_without_waiters_frees_without_signal() {
        let m = ClaimMutex::new(1).unwrap();
        let mut events = Vec::new();
        m.claim(pid(1), &NoHooks).unwrap();
        m.release_traced(pid(1), &NoHooks, &mut events).unwrap();
        assert_eq!(m.owner(), ProcessId::NULL);
        assert!(!events.iter().any(|e| matches!(e, TraceEvent::ScheduleSignal { .. })));
    }

    #[test]
    fn contract_violations_fail_fast() {
        let m = ClaimMutex::new(2).unwrap();
        assert_eq!(m.claim(ProcessId::NULL, &NoHooks), Err(Error::NullPid));
        assert!(matches!(m.claim(pid(3), &NoHooks), Err(Error::OutOfCapacity { .. })));
        assert!(matches!(m.release(pid(1), &NoHooks), Err(Error::NotOwner { .. })));
        assert!(matches!(m.yield_until_scheduled(pid(1), &NoHooks), Err(Error::NotParked { .. })));
        m.claim(pid(1), &NoHooks).unwrap();
        assert_eq!(m.claim(pid(1), &NoHooks), Err(Error::Reentrant { pid: pid(1) }));
        assert!(!m.claim(pid(2), &NoHooks).unwrap().granted);
        assert!(matches!(m.claim(pid(2), &NoHooks), Err(Error::NotActive { .. })));
    }

    #[test]
    fn schedule_from_every_starting_state() {
        for start in ProcessState::ALL {
            let m = ClaimMutex::new(1).unwrap();
            let mut cells = m.cells();
            cells.store_state(pid(1), start);
            let mut events = Vec::new();
            let mut t = Tracer::new(&mut cells, &mut events, pid(1));
            let mut op = ScheduleOp::new(pid(1), Variant::Faithful);
            let woken = loop {
                if let Step::Done(w) = op.step(&mut t) {
                    break w;
                }
            };
            let cas = events.iter().filter(|e| e.is_cas()).count();
            let end = m.state(pid(1)).unwrap();
            match start {
                Engaging => assert_eq!((end, woken, cas), (Scheduled, None, 1)),
                Waiting => assert_eq!((end, woken, cas), (Scheduled, Some(pid(1)), 2)),
                Active | Scheduled => assert_eq!((end, woken, cas), (start, None, 2)),
            }
        }
    }
}
