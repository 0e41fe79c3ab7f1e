//! A small cooperative runtime: a FIFO run queue drained by `k` runner threads.
//!
//! Processes are resumable state machines. A runner pops a ready process,
//! calls [`ProcessBody::run`] once and acts on the returned [`Yield`]. Parked
//! processes only come back through [`Runtime::wake`], which the mutex reaches
//! via [`RuntimeHooks::on_schedule`].

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard, TryLockError};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::protocol::{ProcessId, RuntimeHooks};

/// What a process asks the runner to do after one slice.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Yield {
    /// Still runnable; go to the back of the run queue.
    Again,
    /// Wait off the run queue until woken.
    Park,
    Done,
}

/// Per-slice view a process gets of its runtime.
pub struct Context<'r> {
    pid: ProcessId,
    hooks: Hooks<'r>,
}

impl<'r> Context<'r> {
    pub fn pid(&self) -> ProcessId {
        self.pid
    }

    /// Hooks to pass to the mutex.
    pub fn hooks(&self) -> &Hooks<'r> {
        &self.hooks
    }
}

pub trait ProcessBody: Send {
    /// Runs until the process yields, parks or finishes.
    fn run(&mut self, cx: &Context<'_>) -> crate::Result<Yield>;
}

impl<F: FnMut(&Context<'_>) -> crate::Result<Yield> + Send> ProcessBody for F {
    fn run(&mut self, cx: &Context<'_>) -> crate::Result<Yield> {
        self(cx)
    }
}

const QUEUED: u8 = 0;
const RUNNING: u8 = 1;
/// Woken while still running; parks turn into a requeue.
const RUNNING_WOKEN: u8 = 2;
const PARKED: u8 = 3;
const DONE: u8 = 4;

fn sched_name(s: u8) -> &'static str {
    match s {
        QUEUED => "queued",
        RUNNING => "running",
        RUNNING_WOKEN => "running (woken)",
        PARKED => "parked",
        _ => "done",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerFault {
    #[error("deadlock: no runnable process but {live} not finished\n{dump}")]
    Deadlock { live: usize, dump: String },
    #[error("timed out after {after:?} with {live} processes not finished\n{dump}")]
    Timeout { after: Duration, live: usize, dump: String },
    #[error("{pid} was dispatched while {state}")]
    DoubleRun { pid: ProcessId, state: &'static str },
    #[error("{pid} failed: {error}")]
    Process { pid: ProcessId, error: crate::Error },
}

/// Counters gathered over one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub slices: u64,
    pub parks: u64,
    pub wakes: u64,
    /// Parks cancelled because the wake arrived first.
    pub early_wakes: u64,
    /// Wakes aimed at a process that was already queued, woken or done.
    pub redundant_wakes: u64,
}

type Body<'env> = Mutex<Option<Box<dyn ProcessBody + 'env>>>;

struct RunQueue {
    ready: VecDeque<ProcessId>,
    running: usize,
    live: usize,
    fault: Option<SchedulerFault>,
}

type Diagnostics<'env> = Box<dyn Fn() -> String + Sync + 'env>;

/// Everything a wake touches, kept apart from the process bodies.
struct Core {
    sched: Vec<AtomicU8>,
    queue: Mutex<RunQueue>,
    ready: Condvar,
    slices: AtomicU64,
    parks: AtomicU64,
    wakes: AtomicU64,
    early_wakes: AtomicU64,
    redundant_wakes: AtomicU64,
}

impl Core {
    fn lock(&self) -> MutexGuard<'_, RunQueue> {
        self.queue.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn wake(&self, pid: ProcessId) {
        self.wakes.fetch_add(1, Ordering::Relaxed);
        let Some(sched) = self.sched.get(pid.index()) else { return };
        let mut cur = sched.load(Ordering::SeqCst);
        loop {
            let next = match cur {
                PARKED => QUEUED,
                RUNNING => RUNNING_WOKEN,
                _ => {
                    self.redundant_wakes.fetch_add(1, Ordering::Relaxed);
                    return;
                }
            };
            match sched.compare_exchange(cur, next, Ordering::SeqCst, Ordering::SeqCst) {
                Ok(_) if next == QUEUED => {
                    self.lock().ready.push_back(pid);
                    self.ready.notify_one();
                    return;
                }
                Ok(_) => return,
                Err(seen) => cur = seen,
            }
        }
    }
}

pub struct Runtime<'env> {
    core: Core,
    bodies: Vec<Body<'env>>,
    diagnostics: Option<Diagnostics<'env>>,
    deadline: Option<Duration>,
}

impl Default for Runtime<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'env> Runtime<'env> {
    pub fn new() -> Self {
        Runtime {
            core: Core {
                sched: Vec::new(),
                queue: Mutex::new(RunQueue { ready: VecDeque::new(), running: 0, live: 0, fault: None }),
                ready: Condvar::new(),
                slices: AtomicU64::new(0),
                parks: AtomicU64::new(0),
                wakes: AtomicU64::new(0),
                early_wakes: AtomicU64::new(0),
                redundant_wakes: AtomicU64::new(0),
            },
            bodies: Vec::new(),
            diagnostics: None,
            deadline: None,
        }
    }

    /// Extra text appended to deadlock and timeout dumps.
    pub fn with_diagnostics(mut self, f: impl Fn() -> String + Sync + 'env) -> Self {
        self.diagnostics = Some(Box::new(f));
        self
    }

    /// Gives up with [`SchedulerFault::Timeout`] after this long.
    pub fn with_deadline(mut self, limit: Duration) -> Self {
        self.deadline = Some(limit);
        self
    }

    /// Adds a ready process; ids count up from 1.
    pub fn spawn(&mut self, body: impl ProcessBody + 'env) -> ProcessId {
        self.bodies.push(Mutex::new(Some(Box::new(body))));
        self.core.sched.push(AtomicU8::new(QUEUED));
        let pid = ProcessId::from_index(self.bodies.len() - 1);
        let q = self.core.queue.get_mut().unwrap_or_else(|e| e.into_inner());
        q.ready.push_back(pid);
        q.live += 1;
        pid
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    pub fn run_queue(&self) -> Vec<ProcessId> {
        self.lock().ready.iter().copied().collect()
    }

    pub fn hooks(&self) -> Hooks<'_> {
        Hooks { core: &self.core }
    }

    pub fn stats(&self) -> RunStats {
        let c = &self.core;
        RunStats {
            slices: c.slices.load(Ordering::Relaxed),
            parks: c.parks.load(Ordering::Relaxed),
            wakes: c.wakes.load(Ordering::Relaxed),
            early_wakes: c.early_wakes.load(Ordering::Relaxed),
            redundant_wakes: c.redundant_wakes.load(Ordering::Relaxed),
        }
    }

    /// Makes a parked process runnable. A process that is still running keeps
    /// a note so its next park becomes a requeue.
    pub fn wake(&self, pid: ProcessId) {
        self.core.wake(pid);
    }

    /// Runs every process to completion on `runners` threads.
    pub fn run_to_completion(&self, runners: usize) -> Result<RunStats, SchedulerFault> {
        let started = Instant::now();
        std::thread::scope(|s| {
            for _ in 0..runners.max(1) {
                s.spawn(|| self.runner(started));
            }
        });
        match self.lock().fault.take() {
            Some(f) => Err(f),
            None => Ok(self.stats()),
        }
    }

    fn lock(&self) -> MutexGuard<'_, RunQueue> {
        self.core.lock()
    }

    fn runner(&self, started: Instant) {
        while let Some(pid) = self.next_ready(started) {
            let verdict = self.run_slice(pid);
            let mut q = self.lock();
            q.running -= 1;
            match verdict {
                Ok(Yield::Again) => q.ready.push_back(pid),
                Ok(Yield::Park) => {}
                Ok(Yield::Done) => q.live -= 1,
                Err(fault) => {
                    q.fault.get_or_insert(fault);
                }
            }
            drop(q);
            self.core.ready.notify_all();
        }
    }

    /// Blocks until a process is ready. `None` once everything finished or a fault was raised.
    fn next_ready(&self, started: Instant) -> Option<ProcessId> {
        let mut q = self.lock();
        loop {
            if q.fault.is_some() || q.live == 0 {
                return None;
            }
            if let Some(pid) = q.ready.pop_front() {
                q.running += 1;
                return Some(pid);
            }
            if q.running == 0 {
                let live = q.live;
                q.fault = Some(SchedulerFault::Deadlock { live, dump: self.dump() });
                self.core.ready.notify_all();
                return None;
            }
            if let Some(limit) = self.deadline {
                if started.elapsed() >= limit {
                    let live = q.live;
                    q.fault = Some(SchedulerFault::Timeout { after: limit, live, dump: self.dump() });
                    self.core.ready.notify_all();
                    return None;
                }
            }
            q = self.core.ready.wait_timeout(q, Duration::from_millis(50)).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    /// One slice of `pid`. Parking is settled here; requeues and completion by the caller.
    fn run_slice(&self, pid: ProcessId) -> Result<Yield, SchedulerFault> {
        let sched = &self.core.sched[pid.index()];
        if let Err(state) = sched.compare_exchange(QUEUED, RUNNING, Ordering::SeqCst, Ordering::SeqCst) {
            return Err(SchedulerFault::DoubleRun { pid, state: sched_name(state) });
        }
        let mut body = match self.bodies[pid.index()].try_lock() {
            Ok(b) => b,
            Err(TryLockError::Poisoned(e)) => e.into_inner(),
            Err(TryLockError::WouldBlock) => return Err(SchedulerFault::DoubleRun { pid, state: "locked" }),
        };
        let Some(process) = body.as_mut() else {
            return Err(SchedulerFault::DoubleRun { pid, state: "done" });
        };
        self.core.slices.fetch_add(1, Ordering::Relaxed);
        let cx = Context { pid, hooks: self.hooks() };
        let outcome = process.run(&cx).map_err(|error| SchedulerFault::Process { pid, error })?;
        match outcome {
            Yield::Done => {
                *body = None;
                sched.store(DONE, Ordering::SeqCst);
            }
            Yield::Again => sched.store(QUEUED, Ordering::SeqCst),
            Yield::Park => {
                drop(body);
                self.core.parks.fetch_add(1, Ordering::Relaxed);
                if sched.compare_exchange(RUNNING, PARKED, Ordering::SeqCst, Ordering::SeqCst).is_err() {
                    // woken before we got here
                    self.core.early_wakes.fetch_add(1, Ordering::Relaxed);
                    sched.store(QUEUED, Ordering::SeqCst);
                    return Ok(Yield::Again);
                }
            }
        }
        Ok(outcome)
    }

    fn dump(&self) -> String {
        let mut out = String::new();
        for (i, sched) in self.core.sched.iter().enumerate() {
            let state = sched.load(Ordering::SeqCst);
            if state != DONE {
                let _ = writeln!(out, "  {}: {}", ProcessId::from_index(i), sched_name(state));
            }
        }
        if let Some(extra) = &self.diagnostics {
            out.push_str(&extra());
        }
        out
    }
}

/// Adapts a runtime to the mutex's wait/schedule contract.
#[derive(Clone, Copy)]
pub struct Hooks<'r> {
    core: &'r Core,
}

impl RuntimeHooks for Hooks<'_> {
    /// The process parks when its slice returns [`Yield::Park`].
    fn on_wait(&self, _pid: ProcessId) {}

    fn on_schedule(&self, pid: ProcessId) {
        self.core.wake(pid);
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::AtomicUsize;

    use super::*;
    use crate::instrumentation::{CasLedger, Scenario};
    use crate::protocol::{ClaimMutex, YieldStatus};

    #[test]
    fn spawn_queues_new_processes_in_order() {
        let mut rt = Runtime::new();
        let a = rt.spawn(|_: &Context<'_>| Ok(Yield::Done));
        assert_eq!(a, ProcessId::from_raw(1));
        assert_eq!(rt.run_queue(), vec![a]);
        let b = rt.spawn(|_: &Context<'_>| Ok(Yield::Done));
        assert_ne!(a, b);
        assert_eq!(rt.run_queue(), vec![a, b]);
    }

    #[test]
    fn empty_runtime_returns_at_once() {
        let rt = Runtime::new();
        assert_eq!(rt.run_to_completion(2).unwrap().slices, 0);
    }

    #[test]
    fn lone_claim_and_release_cost_three_cas() {
        let m = ClaimMutex::new(1).unwrap();
        let ledger = Mutex::new(CasLedger::new());
        let mut rt = Runtime::new();
        rt.spawn(|cx: &Context<'_>| {
            let mut l = ledger.lock().unwrap();
            assert!(m.claim_traced(cx.pid(), cx.hooks(), &mut *l)?.granted);
            m.release(cx.pid(), cx.hooks())?;
            Ok(Yield::Done)
        });
        rt.run_to_completion(1).unwrap();
        let stats = ledger.lock().unwrap().scenarios[&Scenario::Unclaimed];
        assert_eq!((stats.total.count, stats.total.max), (1, 3));
    }

    #[test]
    fn parked_process_resumes_after_release() {
        let mutex = ClaimMutex::new(2).unwrap();
        let m = &mutex;
        let counter = AtomicUsize::new(0);
        let resumed = &counter;
        let mut rt = Runtime::new();
        let holder = ProcessId::from_raw(1);
        assert!(m.claim(holder, &crate::protocol::NoHooks).unwrap().granted);
        // p1 holds the mutex until p2 has parked
        let mut released = false;
        rt.spawn(move |cx: &Context<'_>| {
            if released {
                return Ok(Yield::Done);
            }
            if m.state(ProcessId::from_raw(2))? != crate::protocol::ProcessState::Waiting {
                return Ok(Yield::Again);
            }
            m.release(cx.pid(), cx.hooks())?;
            released = true;
            Ok(Yield::Again)
        });
        let mut claimed = false;
        rt.spawn(move |cx: &Context<'_>| {
            if !claimed {
                claimed = true;
                if !m.claim(cx.pid(), cx.hooks())?.granted {
                    return Ok(Yield::Park);
                }
            }
            assert_eq!(m.yield_until_scheduled(cx.pid(), cx.hooks())?, YieldStatus::Resumed);
            resumed.fetch_add(1, Ordering::SeqCst);
            m.release(cx.pid(), cx.hooks())?;
            Ok(Yield::Done)
        });
        let stats = rt.run_to_completion(2).unwrap();
        assert_eq!(resumed.load(Ordering::SeqCst), 1);
        assert_eq!(stats.redundant_wakes, 0);
    }

    #[test]
    fn wake_queues_a_parked_process_once() {
        let mut rt = Runtime::new();
        let pid = rt.spawn(|_: &Context<'_>| Ok(Yield::Done));
        rt.core.queue.get_mut().unwrap().ready.clear();
        rt.core.sched[0].store(PARKED, Ordering::SeqCst);
        rt.wake(pid);
        rt.wake(pid);
        assert_eq!(rt.run_queue(), vec![pid]);
        assert_eq!(rt.stats().redundant_wakes, 1);
    }

    #[test]
    fn nobody_left_to_wake_is_a_deadlock() {
        let mut rt = Runtime::new().with_diagnostics(|| "  extra\n".to_string());
        rt.spawn(|_: &Context<'_>| Ok(Yield::Park));
        match rt.run_to_completion(2) {
            Err(SchedulerFault::Deadlock { live: 1, dump }) => {
                assert!(dump.contains("p1: parked") && dump.contains("extra"), "{dump}")
            }
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn process_errors_stop_the_run() {
        let m = ClaimMutex::new(1).unwrap();
        let mut rt = Runtime::new();
        rt.spawn(|cx: &Context<'_>| {
            m.release(cx.pid(), cx.hooks())?;
            Ok(Yield::Done)
        });
        assert!(matches!(rt.run_to_completion(1), Err(SchedulerFault::Process { .. })));
    }
}
