use std::sync::atomic::{AtomicU32, AtomicU64, Ordering::SeqCst};

use super::{run_to_end, DequeueOp, EnqueueOp, Link, NodeRef, PeekOp, MAX_PROCESSES};
use crate::cells::{QueueCells, Tracer};
use crate::error::{Error, Result};
use crate::protocol::ProcessId;
use crate::trace::EventSink;

/// Lock-free FIFO of process ids over real atomics.
///
/// Each process may be in the queue at most once at a time.
pub struct LockFreeQueue {
    head: AtomicU64,
    tail: AtomicU64,
    links: Box<[AtomicU64]>,
    enqueues: Box<[AtomicU32]>,
}

impl LockFreeQueue {
    /// A queue for process ids `1..=max_processes`.
    pub fn with_capacity(max_processes: u32) -> Result<Self> {
        if max_processes > MAX_PROCESSES {
            return Err(Error::CapacityTooLarge { requested: max_processes, max: MAX_PROCESSES });
        }
        let slots = 1 + 2 * max_processes as usize;
        Ok(LockFreeQueue {
            head: AtomicU64::new(NodeRef::SENTINEL.pack()),
            tail: AtomicU64::new(NodeRef::SENTINEL.pack()),
            links: (0..slots).map(|_| AtomicU64::new(Link::empty(0).pack())).collect(),
            enqueues: (0..max_processes).map(|_| AtomicU32::new(0)).collect(),
        })
    }

    pub fn capacity(&self) -> u32 {
        self.enqueues.len() as u32
    }

    pub fn cells(&self) -> AtomicQueueCells<'_> {
        AtomicQueueCells { queue: self }
    }

    pub(crate) fn check_pid(&self, pid: ProcessId) -> Result<()> {
        if pid.is_null() {
            Err(Error::NullPid)
        } else if pid.raw() > self.capacity() {
            Err(Error::OutOfCapacity { pid, capacity: self.capacity() })
        } else {
            Ok(())
        }
    }

    /// Node for `pid`'s next enqueue. Only `pid`'s own runner calls this.
    pub(crate) fn next_node(&self, pid: ProcessId) -> NodeRef {
        let index = self.enqueues[pid.index()].fetch_add(1, SeqCst);
        NodeRef::for_process(pid, index)
    }

    pub fn enqueue(&self, value: ProcessId) -> Result<()> {
        self.enqueue_traced(value, &mut ())
    }

    pub fn enqueue_traced<S: EventSink + ?Sized>(&self, value: ProcessId, sink: &mut S) -> Result<()> {
        self.check_pid(value)?;
        let mut op = EnqueueOp::new(self.next_node(value));
        let mut cells = self.cells();
        let mut t = Tracer::new(&mut cells, sink, value);
        run_to_end(|| op.step(&mut t));
        Ok(())
    }

    pub fn dequeue(&self) -> ProcessId {
        self.dequeue_traced(ProcessId::NULL, &mut ())
    }

    /// `caller` only labels the emitted events.
    pub fn dequeue_traced<S: EventSink + ?Sized>(&self, caller: ProcessId, sink: &mut S) -> ProcessId {
        let mut op = DequeueOp::new();
        let mut cells = self.cells();
        let mut t = Tracer::new(&mut cells, sink, caller);
        run_to_end(|| op.step(&mut t))
    }

    pub fn peek(&self) -> ProcessId {
        self.peek_traced(ProcessId::NULL, &mut ())
    }

    pub fn peek_traced<S: EventSink + ?Sized>(&self, caller: ProcessId, sink: &mut S) -> ProcessId {
        let mut op = PeekOp::new();
        let mut cells = self.cells();
        let mut t = Tracer::new(&mut cells, sink, caller);
        run_to_end(|| op.step(&mut t))
    }

    /// Values from front to back. Only meaningful while no operation is in flight.
    pub fn snapshot(&self) -> Vec<ProcessId> {
        let mut out = Vec::new();
        let mut node = NodeRef::unpack(self.head.load(SeqCst));
        while let Some(next) = Link::unpack(self.links[node.slot as usize].load(SeqCst)).next {
            out.push(next.value());
            node = next;
        }
        out
    }
}

impl std::fmt::Debug for LockFreeQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LockFreeQueue")
            .field("capacity", &self.capacity())
            .field("head", &NodeRef::unpack(self.head.load(SeqCst)))
            .field("tail", &NodeRef::unpack(self.tail.load(SeqCst)))
            .finish()
    }
}

/// [`QueueCells`] view over a [`LockFreeQueue`]'s atomics.
pub struct AtomicQueueCells<'a> {
    queue: &'a LockFreeQueue,
}

fn cas(cell: &AtomicU64, current: u64, new: u64) -> bool {
    cell.compare_exchange(current, new, SeqCst, SeqCst).is_ok()
}

impl QueueCells for AtomicQueueCells<'_> {
    fn load_head(&mut self) -> NodeRef {
        NodeRef::unpack(self.queue.head.load(SeqCst))
    }

    fn load_tail(&mut self) -> NodeRef {
        NodeRef::unpack(self.queue.tail.load(SeqCst))
    }

    fn load_link(&mut self, slot: u16) -> Link {
        Link::unpack(self.queue.links[slot as usize].load(SeqCst))
    }

    fn store_link(&mut self, slot: u16, link: Link) {
        self.queue.links[slot as usize].store(link.pack(), SeqCst)
    }

    fn cas_head(&mut self, current: NodeRef, new: NodeRef) -> bool {
        cas(&self.queue.head, current.pack(), new.pack())
    }

    fn cas_tail(&mut self, current: NodeRef, new: NodeRef) -> bool {
        cas(&self.queue.tail, current.pack(), new.pack())
    }

    fn cas_link(&mut self, slot: u16, current: Link, new: Link) -> bool {
        cas(&self.queue.links[slot as usize], current.pack(), new.pack())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceEvent;

    fn pid(n: u32) -> ProcessId {
        ProcessId::from_raw(n)
    }

    #[test]
    fn fifo_order_and_empty_results() {
        let q = LockFreeQueue::with_capacity(3).unwrap();
        assert_eq!(q.peek(), ProcessId::NULL);
        assert_eq!(q.dequeue(), ProcessId::NULL);
        q.enqueue(pid(1)).unwrap();
        q.enqueue(pid(2)).unwrap();
        assert_eq!(q.snapshot(), vec![pid(1), pid(2)]);
        assert_eq!(q.dequeue(), pid(1));
        assert_eq!(q.peek(), pid(2));
        assert_eq!(q.snapshot(), vec![pid(2)]);
        assert_eq!(q.dequeue(), pid(2));
        assert_eq!(q.dequeue(), ProcessId::NULL);
    }

    #[test]
    fn uncontended_enqueue_costs_two_cas() {
        let q = LockFreeQueue::with_capacity(2).unwrap();
        let mut events = Vec::new();
        q.enqueue_traced(pid(1), &mut events).unwrap();
        let cas = events.iter().filter(|e| e.is_cas()).count();
        assert_eq!(cas, 2);
        assert!(events.contains(&TraceEvent::EnqueueCommit { pid: pid(1), value: pid(1) }));
    }

    #[test]
    fn slots_are_reused_across_many_cycles() {
        let q = LockFreeQueue::with_capacity(2).unwrap();
        for _ in 0..50 {
            q.enqueue(pid(1)).unwrap();
            q.enqueue(pid(2)).unwrap();
            let first = q.dequeue();
            q.enqueue(first).unwrap();
            assert_eq!(q.snapshot(), vec![pid(2), pid(1)]);
            assert_eq!(q.dequeue(), pid(2));
            assert_eq!(q.dequeue(), pid(1));
        }
    }

    #[test]
    fn rejects_null_and_out_of_range() {
        let q = LockFreeQueue::with_capacity(1).unwrap();
        assert_eq!(q.enqueue(ProcessId::NULL), Err(Error::NullPid));
        assert!(matches!(q.enqueue(pid(2)), Err(Error::OutOfCapacity { .. })));
        assert!(LockFreeQueue::with_capacity(MAX_PROCESSES + 1).is_err());
    }
}
