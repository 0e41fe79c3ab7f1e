//! Claim, release, schedule and yield as step machines.
//!
//! Each call to `step` performs exactly one shared-memory access (or none, when
//! blocked). Line numbers in comments refer to the claim and release pseudocode
//! the protocol is specified by.

use serde::{Deserialize, Serialize};

use super::types::{ClaimOutcome, ProcessId, ProcessState};
use crate::cells::{MutexCells, Step, Tracer};
use crate::queue::{DequeueOp, EnqueueOp, NodeRef, PeekOp};
use crate::trace::{EventSink, TraceEvent};

use ProcessState::{Active, Engaging, Scheduled, Waiting};

/// Protocol variant. Everything but [`Variant::Faithful`] is a deliberately
/// broken mutant used to check that the explorer's oracles have teeth.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Faithful,
    /// The head claimant's first `CAS(owner, null, pid)` becomes a blind store.
    BlindOwnerStore,
    /// SCHEDULE gives up after its ENGAGING→SCHEDULED attempt.
    SingleScheduleCas,
    /// A claimant that finds itself owner and parks WAITING returns granted anyway.
    GrantWhileUnscheduled,
}

impl Variant {
    pub const MUTANTS: [Variant; 3] =
        [Variant::BlindOwnerStore, Variant::SingleScheduleCas, Variant::GrantWhileUnscheduled];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Faithful => "faithful",
            Variant::BlindOwnerStore => "blind-owner-store",
            Variant::SingleScheduleCas => "single-schedule-cas",
            Variant::GrantWhileUnscheduled => "grant-while-unscheduled",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum ClaimPc {
    Engage,
    Enqueue(EnqueueOp),
    Peek(PeekOp),
    CasOwnerFromNull,
    LoadOwner,
    StoreOwner,
    ParkAsOwner,
    Steal { local_owner: ProcessId },
    CasOwnerFromNullAgain,
    ParkAfterRelease,
    ParkBehindHead,
    Activate,
}

/// One claim attempt by `pid`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ClaimOp {
    pc: ClaimPc,
    node: NodeRef,
    variant: Variant,
}

impl ClaimOp {
    /// `node` is the queue node this claim enqueues.
    pub fn new(node: NodeRef, variant: Variant) -> Self {
        ClaimOp { pc: ClaimPc::Engage, node, variant }
    }

    pub fn step<C, S>(&mut self, t: &mut Tracer<'_, C, S>) -> Step<ClaimOutcome>
    where
        C: MutexCells + ?Sized,
        S: EventSink + ?Sized,
    {
        let pid = t.pid();
        match self.pc {
            // 1
            ClaimPc::Engage => {
                t.emit(|pid| TraceEvent::BeginClaim { pid });
                t.store_state(pid, Engaging);
                self.pc = ClaimPc::Enqueue(EnqueueOp::new(self.node));
            }
            // 2
            ClaimPc::Enqueue(mut op) => {
                if let Step::Done(()) = op.step(t) {
                    self.pc = ClaimPc::Peek(PeekOp::new());
                } else {
                    self.pc = ClaimPc::Enqueue(op);
                }
            }
            // 3, 4
            ClaimPc::Peek(mut op) => match op.step(t) {
                Step::Done(head) if head == pid => self.pc = ClaimPc::CasOwnerFromNull,
                Step::Done(_) => self.pc = ClaimPc::ParkBehindHead,
                _ => self.pc = ClaimPc::Peek(op),
            },
            // 5
            ClaimPc::CasOwnerFromNull => {
                let claimed = if self.variant == Variant::BlindOwnerStore {
                    t.store_owner(pid);
                    true
                } else {
                    t.cas_owner(ProcessId::NULL, pid)
                };
                // 6-7 on success, 9 otherwise
                self.pc = if claimed { ClaimPc::Activate } else { ClaimPc::LoadOwner };
            }
            // 9, 10
            ClaimPc::LoadOwner => {
                let local_owner = t.load_owner();
                self.pc = if local_owner.is_null() {
                    ClaimPc::StoreOwner
                } else if local_owner == pid {
                    // 14 and 16 share one test of local_owner
                    ClaimPc::ParkAsOwner
                } else {
                    ClaimPc::Steal { local_owner }
                };
            }
            // 11
            ClaimPc::StoreOwner => {
                t.store_owner(pid);
                self.pc = ClaimPc::Activate;
            }
            // 14-15, else 16-18
            ClaimPc::ParkAsOwner => {
                if t.cas_state(pid, Engaging, Waiting) {
                    if self.variant == Variant::GrantWhileUnscheduled {
                        return self.finish(t, true);
                    }
                    return self.finish(t, false);
                }
                self.pc = ClaimPc::Activate;
            }
            // 19-21
            ClaimPc::Steal { local_owner } => {
                self.pc = if t.cas_owner(local_owner, pid) {
                    ClaimPc::Activate
                } else {
                    ClaimPc::CasOwnerFromNullAgain
                };
            }
            // 22-24
            ClaimPc::CasOwnerFromNullAgain => {
                self.pc = if t.cas_owner(ProcessId::NULL, pid) {
                    ClaimPc::Activate
                } else {
                    ClaimPc::ParkAfterRelease
                };
            }
            // 25-26, else 27-29
            ClaimPc::ParkAfterRelease => {
                if t.cas_state(pid, Engaging, Waiting) {
                    return self.finish(t, false);
                }
                self.pc = ClaimPc::Activate;
            }
            // 32-33, else 34-36
            ClaimPc::ParkBehindHead => {
                if t.cas_state(pid, Engaging, Waiting) {
                    return self.finish(t, false);
                }
                self.pc = ClaimPc::Activate;
            }
            // 6, 12, 17, 20, 23, 28, 35
            ClaimPc::Activate => {
                t.store_state(pid, Active);
                return self.finish(t, true);
            }
        }
        Step::Pending
    }

    fn finish<C, S>(&mut self, t: &mut Tracer<'_, C, S>, granted: bool) -> Step<ClaimOutcome>
    where
        C: ?Sized,
        S: EventSink + ?Sized,
    {
        t.emit(|pid| TraceEvent::EndClaim { pid, granted });
        Step::Done(ClaimOutcome { granted })
    }
}

/// What a completed release asks of the host runtime.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ReleaseOutcome {
    /// A WAITING process moved to SCHEDULED; the host must run it again.
    pub woken: Option<ProcessId>,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum ReleasePc {
    Begin,
    Dequeue(DequeueOp),
    Peek(PeekOp),
    CasOwnerToNull,
    CasOwnerToHead { head: ProcessId },
    Schedule(ScheduleOp),
}

/// One release by the current owner.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ReleaseOp {
    pc: ReleasePc,
    variant: Variant,
}

impl ReleaseOp {
    pub fn new(variant: Variant) -> Self {
        ReleaseOp { pc: ReleasePc::Begin, variant }
    }

    pub fn step<C, S>(&mut self, t: &mut Tracer<'_, C, S>) -> Step<ReleaseOutcome>
    where
        C: MutexCells + ?Sized,
        S: EventSink + ?Sized,
    {
        let pid = t.pid();
        match self.pc {
            ReleasePc::Begin => {
                t.emit(|pid| TraceEvent::BeginRelease { pid });
                let mut op = DequeueOp::new();
                self.pc = match op.step(t) {
                    Step::Pending => ReleasePc::Dequeue(op),
                    _ => unreachable!("dequeue takes more than one step"),
                };
            }
            // 1: the head is always the caller, so the value is not needed
            ReleasePc::Dequeue(mut op) => {
                self.pc = match op.step(t) {
                    Step::Done(_) => ReleasePc::Peek(PeekOp::new()),
                    _ => ReleasePc::Dequeue(op),
                };
            }
            // 2, 3
            ReleasePc::Peek(mut op) => {
                self.pc = match op.step(t) {
                    Step::Done(head) if head.is_null() => ReleasePc::CasOwnerToNull,
                    Step::Done(head) => ReleasePc::CasOwnerToHead { head },
                    _ => ReleasePc::Peek(op),
                };
            }
            // 4: failure means a claimant already resolved ownership
            ReleasePc::CasOwnerToNull => {
                t.cas_owner(pid, ProcessId::NULL);
                return Self::finish(t, None);
            }
            // 5-6
            ReleasePc::CasOwnerToHead { head } => {
                if !t.cas_owner(pid, head) {
                    return Self::finish(t, None);
                }
                self.pc = ReleasePc::Schedule(ScheduleOp::new(head, self.variant));
            }
            ReleasePc::Schedule(mut op) => match op.step(t) {
                Step::Done(woken) => return Self::finish(t, woken),
                _ => self.pc = ReleasePc::Schedule(op),
            },
        }
        Step::Pending
    }

    fn finish<C, S>(t: &mut Tracer<'_, C, S>, woken: Option<ProcessId>) -> Step<ReleaseOutcome>
    where
        C: ?Sized,
        S: EventSink + ?Sized,
    {
        t.emit(|pid| TraceEvent::EndRelease { pid });
        Step::Done(ReleaseOutcome { woken })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum SchedulePc {
    FromEngaging,
    FromWaiting,
}

/// Marks `target` SCHEDULED: first assuming it is still ENGAGING, then
/// assuming it has parked WAITING. Both attempts may legitimately fail.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ScheduleOp {
    target: ProcessId,
    pc: SchedulePc,
    variant: Variant,
}

impl ScheduleOp {
    pub fn new(target: ProcessId, variant: Variant) -> Self {
        ScheduleOp { target, pc: SchedulePc::FromEngaging, variant }
    }

    /// Finishes with the target when it has to be put back on a run queue.
    /// An ENGAGING target is still running and picks the schedule up itself
    /// through its failing state CAS.
    pub fn step<C, S>(&mut self, t: &mut Tracer<'_, C, S>) -> Step<Option<ProcessId>>
    where
        C: MutexCells + ?Sized,
        S: EventSink + ?Sized,
    {
        match self.pc {
            SchedulePc::FromEngaging => {
                if t.cas_state(self.target, Engaging, Scheduled) {
                    return Step::Done(None);
                }
                if self.variant == Variant::SingleScheduleCas {
                    return Step::Done(None);
                }
                self.pc = SchedulePc::FromWaiting;
                Step::Pending
            }
            SchedulePc::FromWaiting => {
                if t.cas_state(self.target, Waiting, Scheduled) {
                    let target = self.target;
                    t.emit(|pid| TraceEvent::ScheduleSignal { pid, target });
                    return Step::Done(Some(target));
                }
                Step::Done(None)
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum YieldPc {
    AwaitSchedule,
    Activate,
}

/// The wait after a denied claim: observe SCHEDULED, then become ACTIVE.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct YieldOp {
    pc: YieldPc,
}

impl Default for YieldOp {
    fn default() -> Self {
        YieldOp { pc: YieldPc::AwaitSchedule }
    }
}

impl YieldOp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Whether the next step has to wait for a schedule.
    pub fn awaiting_schedule(&self) -> bool {
        self.pc == YieldPc::AwaitSchedule
    }

    /// Returns [`Step::Blocked`] while the state is not yet SCHEDULED. The
    /// state read that finds it not SCHEDULED is still an access; callers that
    /// model blocking as disabled should not step a blocked yield.
    pub fn step<C, S>(&mut self, t: &mut Tracer<'_, C, S>) -> Step<()>
    where
        C: MutexCells + ?Sized,
        S: EventSink + ?Sized,
    {
        let pid = t.pid();
        match self.pc {
            YieldPc::AwaitSchedule => {
                if t.load_state(pid) != Scheduled {
                    return Step::Blocked;
                }
                self.pc = YieldPc::Activate;
                Step::Pending
            }
            YieldPc::Activate => {
                t.store_state(pid, Active);
                t.emit(|pid| TraceEvent::EndYield { pid });
                Step::Done(())
            }
        }
    }
}
