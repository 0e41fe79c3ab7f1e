//! Abstract shared memory the protocol runs over.
//!
//! Every operation in [`crate::protocol`] and [`crate::queue`] is written as a
//! step machine that performs exactly one access through these traits per
//! step. Real atomics implement them for production use; the explorer
//! implements them over a plain, hashable model state.

use crate::protocol::{ProcessId, ProcessState};
use crate::queue::{Link, NodeRef};
use crate::trace::{Cell, EventSink, TraceEvent, Value};

/// Cells backing the lock-free wait queue.
pub trait QueueCells {
    fn load_head(&mut self) -> NodeRef;
    fn load_tail(&mut self) -> NodeRef;
    fn load_link(&mut self, slot: u16) -> Link;
    fn store_link(&mut self, slot: u16, link: Link);
    fn cas_head(&mut self, current: NodeRef, new: NodeRef) -> bool;
    fn cas_tail(&mut self, current: NodeRef, new: NodeRef) -> bool;
    fn cas_link(&mut self, slot: u16, current: Link, new: Link) -> bool;
}

/// Cells backing the mutex: the owner word, per-process states and the queue.
pub trait MutexCells: QueueCells {
    fn load_owner(&mut self) -> ProcessId;
    fn store_owner(&mut self, pid: ProcessId);
    fn cas_owner(&mut self, current: ProcessId, new: ProcessId) -> bool;
    fn load_state(&mut self, pid: ProcessId) -> ProcessState;
    fn store_state(&mut self, pid: ProcessId, state: ProcessState);
    fn cas_state(&mut self, pid: ProcessId, current: ProcessState, new: ProcessState) -> bool;
}

/// Progress of a step machine after one step.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Step<T> {
    /// One access was performed; call `step` again.
    Pending,
    /// No access was performed: the machine waits on another process.
    Blocked,
    Done(T),
}

/// Cells plus an event sink, bound to the process issuing the accesses.
pub struct Tracer<'a, C: ?Sized, S: ?Sized> {
    cells: &'a mut C,
    sink: &'a mut S,
    pid: ProcessId,
}

impl<'a, C: ?Sized, S: EventSink + ?Sized> Tracer<'a, C, S> {
    pub fn new(cells: &'a mut C, sink: &'a mut S, pid: ProcessId) -> Self {
        Tracer { cells, sink, pid }
    }

    pub fn pid(&self) -> ProcessId {
        self.pid
    }

    pub fn emit(&mut self, event: impl FnOnce(ProcessId) -> TraceEvent) {
        if self.sink.enabled() {
            let ev = event(self.pid);
            self.sink.emit(ev);
        }
    }

    fn load_event(&mut self, cell: Cell, value: Value) {
        self.emit(|pid| TraceEvent::Load { pid, cell, value });
    }

    fn store_event(&mut self, cell: Cell, value: Value) {
        self.emit(|pid| TraceEvent::Store { pid, cell, value });
    }

    fn cas_event(&mut self, cell: Cell, expected: Value, new: Value, success: bool) {
        self.emit(|pid| TraceEvent::Cas { pid, cell, expected, new, success });
    }
}

impl<C: QueueCells + ?Sized, S: EventSink + ?Sized> Tracer<'_, C, S> {
    pub fn load_head(&mut self) -> NodeRef {
        let v = self.cells.load_head();
        self.load_event(Cell::QueueHead, Value::Node(v));
        v
    }

    pub fn load_tail(&mut self) -> NodeRef {
        let v = self.cells.load_tail();
        self.load_event(Cell::QueueTail, Value::Node(v));
        v
    }

    pub fn load_link(&mut self, slot: u16) -> Link {
        let v = self.cells.load_link(slot);
        self.load_event(Cell::QueueLink(slot), Value::Link(v));
        v
    }

    pub fn store_link(&mut self, slot: u16, link: Link) {
        self.cells.store_link(slot, link);
        self.store_event(Cell::QueueLink(slot), Value::Link(link));
    }

    pub fn cas_head(&mut self, current: NodeRef, new: NodeRef) -> bool {
        let ok = self.cells.cas_head(current, new);
        self.cas_event(Cell::QueueHead, Value::Node(current), Value::Node(new), ok);
        ok
    }

    pub fn cas_tail(&mut self, current: NodeRef, new: NodeRef) -> bool {
        let ok = self.cells.cas_tail(current, new);
        self.cas_event(Cell::QueueTail, Value::Node(current), Value::Node(new), ok);
        ok
    }

    pub fn cas_link(&mut self, slot: u16, current: Link, new: Link) -> bool {
        let ok = self.cells.cas_link(slot, current, new);
        self.cas_event(Cell::QueueLink(slot), Value::Link(current), Value::Link(new), ok);
        ok
    }
}

impl<C: MutexCells + ?Sized, S: EventSink + ?Sized> Tracer<'_, C, S> {
    pub fn load_owner(&mut self) -> ProcessId {
        let v = self.cells.load_owner();
        self.load_event(Cell::Owner, Value::Pid(v));
        v
    }

    pub fn store_owner(&mut self, pid: ProcessId) {
        self.cells.store_owner(pid);
        self.store_event(Cell::Owner, Value::Pid(pid));
    }

    pub fn cas_owner(&mut self, current: ProcessId, new: ProcessId) -> bool {
        let ok = self.cells.cas_owner(current, new);
        self.cas_event(Cell::Owner, Value::Pid(current), Value::Pid(new), ok);
        ok
    }

    pub fn load_state(&mut self, pid: ProcessId) -> ProcessState {
        let v = self.cells.load_state(pid);
        self.load_event(Cell::State(pid), Value::State(v));
        v
    }

    pub fn store_state(&mut self, pid: ProcessId, state: ProcessState) {
        self.cells.store_state(pid, state);
        self.store_event(Cell::State(pid), Value::State(state));
    }

    pub fn cas_state(&mut self, pid: ProcessId, current: ProcessState, new: ProcessState) -> bool {
        let ok = self.cells.cas_state(pid, current, new);
        self.cas_event(Cell::State(pid), Value::State(current), Value::State(new), ok);
        ok
    }
}
