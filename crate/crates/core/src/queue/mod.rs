//! Michael–Scott lock-free FIFO of process ids.
//!
//! Nodes live in a fixed arena with two slots per process. A process is in
//! the queue at most once, and the slot it used two enqueues ago is no longer
//! reachable from `head` or `tail` by the time it is reused, so alternating
//! between its two slots needs no allocator. Every reference carries the
//! slot's generation and every link carries the generation of the node that
//! owns it, so a CAS against a recycled node fails instead of suffering ABA.
//!
//! The operations are step machines over [`QueueCells`]; [`LockFreeQueue`]
//! drives them over real atomics.

mod arena;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cells::{QueueCells, Step, Tracer};
use crate::protocol::ProcessId;
use crate::trace::{EventSink, TraceEvent};

pub use arena::{AtomicQueueCells, LockFreeQueue};

pub(crate) const GEN_BITS: u32 = 24;
pub(crate) const GEN_MASK: u32 = (1 << GEN_BITS) - 1;
/// Slot index reserved to encode a missing successor.
pub(crate) const NO_SLOT: u16 = u16::MAX;
/// Largest process id a queue can hold.
pub const MAX_PROCESSES: u32 = (NO_SLOT as u32 - 1) / 2;

/// Generation-tagged reference to an arena slot.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct NodeRef {
    pub slot: u16,
    pub gen: u32,
}

impl NodeRef {
    /// The initial sentinel node.
    pub const SENTINEL: NodeRef = NodeRef { slot: 0, gen: 0 };

    /// The node a process uses for its `enqueue_index`-th enqueue.
    pub fn for_process(pid: ProcessId, enqueue_index: u32) -> NodeRef {
        assert!(!pid.is_null() && pid.raw() <= MAX_PROCESSES, "no queue slot for {pid}");
        NodeRef {
            slot: (1 + 2 * pid.index() + (enqueue_index & 1) as usize) as u16,
            gen: ((enqueue_index >> 1) + 1) & GEN_MASK,
        }
    }

    /// The process id stored in this node; NULL for the initial sentinel.
    pub fn value(self) -> ProcessId {
        if self.slot == 0 {
            ProcessId::NULL
        } else {
            ProcessId::from_index((self.slot as usize - 1) / 2)
        }
    }

    pub(crate) fn pack(self) -> u64 {
        (self.slot as u64) << 32 | self.gen as u64
    }

    pub(crate) fn unpack(raw: u64) -> NodeRef {
        NodeRef { slot: (raw >> 32) as u16, gen: raw as u32 }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}#{}", self.slot, self.gen)
    }
}

/// Contents of a node's `next` cell: the owning node's generation and the successor.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Link {
    pub gen: u32,
    pub next: Option<NodeRef>,
}

impl Link {
    pub const fn empty(gen: u32) -> Link {
        Link { gen, next: None }
    }

    pub(crate) fn pack(self) -> u64 {
        let (slot, next_gen) = match self.next {
            Some(n) => (n.slot, n.gen & GEN_MASK),
            None => (NO_SLOT, 0),
        };
        ((self.gen & GEN_MASK) as u64) << 40 | (slot as u64) << 24 | next_gen as u64
    }

    pub(crate) fn unpack(raw: u64) -> Link {
        let slot = (raw >> 24) as u16;
        let next = (slot != NO_SLOT).then_some(NodeRef { slot, gen: raw as u32 & GEN_MASK });
        Link { gen: (raw >> 40) as u32 & GEN_MASK, next }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.next {
            Some(n) => write!(f, "#{}->{n}", self.gen),
            None => write!(f, "#{}->nil", self.gen),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum EnqueuePc {
    Init,
    LoadTail,
    LoadLink { tail: NodeRef },
    HelpTail { tail: NodeRef, next: NodeRef },
    Link { tail: NodeRef },
    SwingTail { tail: NodeRef },
}

/// Appends a node. Linearizes at the successful link CAS.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct EnqueueOp {
    node: NodeRef,
    pc: EnqueuePc,
}

impl EnqueueOp {
    pub fn new(node: NodeRef) -> Self {
        EnqueueOp { node, pc: EnqueuePc::Init }
    }

    pub fn node(&self) -> NodeRef {
        self.node
    }

    pub fn step<C, S>(&mut self, t: &mut Tracer<'_, C, S>) -> Step<()>
    where
        C: QueueCells + ?Sized,
        S: EventSink + ?Sized,
    {
        match self.pc {
            EnqueuePc::Init => {
                t.store_link(self.node.slot, Link::empty(self.node.gen));
                self.pc = EnqueuePc::LoadTail;
            }
            EnqueuePc::LoadTail => {
                let tail = t.load_tail();
                self.pc = EnqueuePc::LoadLink { tail };
            }
            EnqueuePc::LoadLink { tail } => {
                let link = t.load_link(tail.slot);
                self.pc = if link.gen != tail.gen {
                    // tail node was recycled under us
                    EnqueuePc::LoadTail
                } else if let Some(next) = link.next {
                    EnqueuePc::HelpTail { tail, next }
                } else {
                    EnqueuePc::Link { tail }
                };
            }
            EnqueuePc::HelpTail { tail, next } => {
                t.cas_tail(tail, next);
                self.pc = EnqueuePc::LoadTail;
            }
            EnqueuePc::Link { tail } => {
                let linked = Link { gen: tail.gen, next: Some(self.node) };
                if t.cas_link(tail.slot, Link::empty(tail.gen), linked) {
                    let value = self.node.value();
                    t.emit(|pid| TraceEvent::EnqueueCommit { pid, value });
                    self.pc = EnqueuePc::SwingTail { tail };
                } else {
                    self.pc = EnqueuePc::LoadTail;
                }
            }
            EnqueuePc::SwingTail { tail } => {
                t.cas_tail(tail, self.node);
                return Step::Done(());
            }
        }
        Step::Pending
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum DequeuePc {
    LoadHead,
    LoadTail { head: NodeRef },
    LoadLink { head: NodeRef, tail: NodeRef },
    HelpTail { tail: NodeRef, next: NodeRef },
    SwingHead { head: NodeRef, next: NodeRef },
}

/// Removes the front value, or returns NULL when empty.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct DequeueOp {
    pc: DequeuePc,
}

impl Default for DequeueOp {
    fn default() -> Self {
        DequeueOp { pc: DequeuePc::LoadHead }
    }
}

impl DequeueOp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step<C, S>(&mut self, t: &mut Tracer<'_, C, S>) -> Step<ProcessId>
    where
        C: QueueCells + ?Sized,
        S: EventSink + ?Sized,
    {
        match self.pc {
            DequeuePc::LoadHead => {
                let head = t.load_head();
                self.pc = DequeuePc::LoadTail { head };
            }
            DequeuePc::LoadTail { head } => {
                let tail = t.load_tail();
                self.pc = DequeuePc::LoadLink { head, tail };
            }
            DequeuePc::LoadLink { head, tail } => {
                let link = t.load_link(head.slot);
                if link.gen != head.gen {
                    self.pc = DequeuePc::LoadHead;
                    return Step::Pending;
                }
                match link.next {
                    // head cannot move while its link is empty, so the queue was empty here
                    None => {
                        t.emit(|pid| TraceEvent::DequeueCommit { pid, value: ProcessId::NULL });
                        return Step::Done(ProcessId::NULL);
                    }
                    Some(next) if head == tail => self.pc = DequeuePc::HelpTail { tail, next },
                    Some(next) => self.pc = DequeuePc::SwingHead { head, next },
                }
            }
            DequeuePc::HelpTail { tail, next } => {
                t.cas_tail(tail, next);
                self.pc = DequeuePc::LoadHead;
            }
            DequeuePc::SwingHead { head, next } => {
                if t.cas_head(head, next) {
                    let value = next.value();
                    t.emit(|pid| TraceEvent::DequeueCommit { pid, value });
                    return Step::Done(value);
                }
                self.pc = DequeuePc::LoadHead;
            }
        }
        Step::Pending
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum PeekPc {
    LoadHead,
    LoadLink { head: NodeRef },
    Recheck { head: NodeRef, next: NodeRef },
}

/// Reads the front value without removing it, or NULL when empty.
///
/// An empty result linearizes at the link read. A non-empty result is
/// confirmed by re-reading `head`: if it is unchanged the front was stable
/// between the two reads and the peek linearizes at the re-read.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct PeekOp {
    pc: PeekPc,
}

impl Default for PeekOp {
    fn default() -> Self {
        PeekOp { pc: PeekPc::LoadHead }
    }
}

impl PeekOp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step<C, S>(&mut self, t: &mut Tracer<'_, C, S>) -> Step<ProcessId>
    where
        C: QueueCells + ?Sized,
        S: EventSink + ?Sized,
    {
        match self.pc {
            PeekPc::LoadHead => {
                let head = t.load_head();
                self.pc = PeekPc::LoadLink { head };
            }
            PeekPc::LoadLink { head } => {
                let link = t.load_link(head.slot);
                if link.gen != head.gen {
                    self.pc = PeekPc::LoadHead;
                    return Step::Pending;
                }
                match link.next {
                    None => {
                        t.emit(|pid| TraceEvent::PeekCommit { pid, value: ProcessId::NULL });
                        return Step::Done(ProcessId::NULL);
                    }
                    Some(next) => self.pc = PeekPc::Recheck { head, next },
                }
            }
            PeekPc::Recheck { head, next } => {
                if t.load_head() == head {
                    let value = next.value();
                    t.emit(|pid| TraceEvent::PeekCommit { pid, value });
                    return Step::Done(value);
                }
                self.pc = PeekPc::LoadHead;
            }
        }
        Step::Pending
    }
}

/// Runs a step machine to completion. Only valid for machines that never block.
pub(crate) fn run_to_end<T>(mut step: impl FnMut() -> Step<T>) -> T {
    loop {
        match step() {
            Step::Pending => continue,
            Step::Done(v) => return v,
            Step::Blocked => unreachable!("queue operations never block"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn process_nodes_alternate_slots() {
        let p = ProcessId::from_raw(2);
        let a = NodeRef::for_process(p, 0);
        let b = NodeRef::for_process(p, 1);
        let c = NodeRef::for_process(p, 2);
        assert_eq!((a.slot, a.gen), (3, 1));
        assert_eq!((b.slot, b.gen), (4, 1));
        assert_eq!((c.slot, c.gen), (3, 2));
        assert!([a, b, c].iter().all(|n| n.value() == p));
        assert_eq!(NodeRef::SENTINEL.value(), ProcessId::NULL);
    }

    proptest! {
        #[test]
        fn link_and_ref_packing_roundtrip(gen in 0u32..=GEN_MASK, slot in 0u16..NO_SLOT,
                                          next_gen in 0u32..=GEN_MASK, has_next: bool) {
            let next = has_next.then_some(NodeRef { slot, gen: next_gen });
            let link = Link { gen, next };
            prop_assert_eq!(Link::unpack(link.pack()), link);
            let node = NodeRef { slot, gen };
            prop_assert_eq!(NodeRef::unpack(node.pack()), node);
        }
    }
}
