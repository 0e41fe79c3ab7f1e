//! CAS accounting per claim and release attempt, and the scenario a claim resolved through.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{ProcessId, ProcessState};
use crate::trace::{Cell, EventSink, TraceEvent, Value};

/// The ten ways a claim can resolve, numbered as in the cost table.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Unclaimed = 1,
    Claimed = 2,
    ReleasedInTime = 3,
    OwnerNull = 4,
    UnscheduledOwnerTransfer = 5,
    ScheduledOwnerTransfer = 6,
    OwnershipStolen = 7,
    ReleasedOwnerNull = 8,
    ReleasedUnscheduled = 9,
    ReleasedScheduled = 10,
}

/// An inclusive CAS range; `max: None` is unbounded.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct CasRange {
    pub min: u32,
    pub max: Option<u32>,
}

impl CasRange {
    pub fn contains(&self, lo: u32, hi: u32) -> bool {
        lo >= self.min && self.max.map_or(true, |m| hi <= m)
    }
}

impl fmt::Display for CasRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.max {
            Some(m) => write!(f, "{}..{}", self.min, m),
            None => write!(f, "{}..unknown", self.min),
        }
    }
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::Unclaimed,
        Scenario::Claimed,
        Scenario::ReleasedInTime,
        Scenario::OwnerNull,
        Scenario::UnscheduledOwnerTransfer,
        Scenario::ScheduledOwnerTransfer,
        Scenario::OwnershipStolen,
        Scenario::ReleasedOwnerNull,
        Scenario::ReleasedUnscheduled,
        Scenario::ReleasedScheduled,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Scenario> {
        Scenario::ALL.get(usize::from(id).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Unclaimed => "Unclaimed",
            Scenario::Claimed => "Claimed resource",
            Scenario::ReleasedInTime => "Released-in-time",
            Scenario::OwnerNull => "Owner null",
            Scenario::UnscheduledOwnerTransfer => "Unscheduled owner transfer",
            Scenario::ScheduledOwnerTransfer => "Scheduled owner transfer",
            Scenario::OwnershipStolen => "Ownership stolen",
            Scenario::ReleasedOwnerNull => "Released, owner null",
            Scenario::ReleasedUnscheduled => "Released, unscheduled",
            Scenario::ReleasedScheduled => "Released, scheduled",
        }
    }

    /// Published CAS cost of resolving through this scenario.
    pub fn reference_range(self) -> CasRange {
        let (min, max) = match self {
            Scenario::Unclaimed | Scenario::OwnerNull => (3, Some(4)),
            Scenario::Claimed => (3, None),
            Scenario::ReleasedInTime => (3, Some(3)),
            Scenario::UnscheduledOwnerTransfer
            | Scenario::ScheduledOwnerTransfer
            | Scenario::OwnershipStolen => (4, Some(5)),
            Scenario::ReleasedOwnerNull => (5, Some(6)),
            Scenario::ReleasedUnscheduled | Scenario::ReleasedScheduled => (6, Some(7)),
        };
        CasRange { min, max }
    }

    /// CAS count of the scenario's path with no contention on the queue:
    /// two for the enqueue plus the owner and state CASes on the path.
    pub fn uncontended_cas(self) -> u32 {
        match self {
            Scenario::Unclaimed | Scenario::Claimed | Scenario::ReleasedInTime | Scenario::OwnerNull => 3,
            Scenario::UnscheduledOwnerTransfer
            | Scenario::ScheduledOwnerTransfer
            | Scenario::OwnershipStolen => 4,
            Scenario::ReleasedOwnerNull => 5,
            Scenario::ReleasedUnscheduled | Scenario::ReleasedScheduled => 6,
        }
    }

    /// Whether the claim returns not-granted and must wait for a schedule.
    pub fn parks(self) -> bool {
        matches!(
            self,
            Scenario::Claimed | Scenario::UnscheduledOwnerTransfer | Scenario::ReleasedUnscheduled
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {}", self.id(), self.name())
    }
}

/// Where a claim is in its branch structure, as seen from its own events.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub enum Classifier {
    #[default]
    Start,
    Engaged,
    Head,
    NotHead,
    OwnerContended,
    OwnerWasNull,
    OwnerWasSelf,
    OwnerWasOther,
    OwnerFromNullAgain,
    ParkAfterRelease,
    /// Branch resolved; only the final ACTIVE store may follow.
    Resolved(Scenario),
    Unclassified,
}

impl Classifier {
    /// Feeds one event issued by the claimant itself.
    pub fn observe(&mut self, pid: ProcessId, event: &TraceEvent) {
        use Classifier::*;
        use ProcessState::{Active, Engaging, Waiting};
        let owner_cas = |expected: &Value| match *event {
            TraceEvent::Cas { cell: Cell::Owner, expected: e, new: Value::Pid(n), success, .. }
                if e == *expected && n == pid =>
            {
                Some(success)
            }
            _ => None,
        };
        let state_cas = match *event {
            TraceEvent::Cas {
                cell: Cell::State(p),
                expected: Value::State(Engaging),
                new: Value::State(Waiting),
                success,
                ..
            } if p == pid => Some(success),
            _ => None,
        };
        let relevant = match event {
            TraceEvent::PeekCommit { .. } => true,
            TraceEvent::Load { cell, .. } | TraceEvent::Store { cell, .. } | TraceEvent::Cas { cell, .. } => {
                matches!(cell, Cell::Owner | Cell::State(_))
            }
            _ => false,
        };
        if !relevant {
            return;
        }
        let null = Value::Pid(ProcessId::NULL);
        *self = match (*self, event) {
            (Start, TraceEvent::Store { cell: Cell::State(p), value: Value::State(Engaging), .. }) if *p == pid => {
                Engaged
            }
            (Engaged, TraceEvent::PeekCommit { value, .. }) => {
                if *value == pid {
                    Head
                } else {
                    NotHead
                }
            }
            (NotHead, _) => match state_cas {
                Some(true) => Resolved(Scenario::Claimed),
                Some(false) => Resolved(Scenario::ReleasedInTime),
                None => Unclassified,
            },
            // a blind store in place of the first owner CAS resolves the same way
            (Head, TraceEvent::Store { cell: Cell::Owner, value, .. }) if *value == Value::Pid(pid) => {
                Resolved(Scenario::Unclaimed)
            }
            (Head, _) => match owner_cas(&null) {
                Some(true) => Resolved(Scenario::Unclaimed),
                Some(false) => OwnerContended,
                None => Unclassified,
            },
            (OwnerContended, TraceEvent::Load { cell: Cell::Owner, value: Value::Pid(v), .. }) => {
                if v.is_null() {
                    OwnerWasNull
                } else if *v == pid {
                    OwnerWasSelf
                } else {
                    OwnerWasOther
                }
            }
            (OwnerWasNull, TraceEvent::Store { cell: Cell::Owner, value, .. }) if *value == Value::Pid(pid) => {
                Resolved(Scenario::OwnerNull)
            }
            (OwnerWasSelf, _) => match state_cas {
                Some(true) => Resolved(Scenario::UnscheduledOwnerTransfer),
                Some(false) => Resolved(Scenario::ScheduledOwnerTransfer),
                None => Unclassified,
            },
            (OwnerWasOther, TraceEvent::Cas { cell: Cell::Owner, expected, .. }) if *expected != null => {
                match owner_cas(expected) {
                    Some(true) => Resolved(Scenario::OwnershipStolen),
                    Some(false) => OwnerFromNullAgain,
                    None => Unclassified,
                }
            }
            (OwnerFromNullAgain, _) => match owner_cas(&null) {
                Some(true) => Resolved(Scenario::ReleasedOwnerNull),
                Some(false) => ParkAfterRelease,
                None => Unclassified,
            },
            (ParkAfterRelease, _) => match state_cas {
                Some(true) => Resolved(Scenario::ReleasedUnscheduled),
                Some(false) => Resolved(Scenario::ReleasedScheduled),
                None => Unclassified,
            },
            (Resolved(s), TraceEvent::Store { cell: Cell::State(p), value: Value::State(Active), .. })
                if *p == pid && !s.parks() =>
            {
                Resolved(s)
            }
            _ => Unclassified,
        };
    }

    pub fn scenario(&self) -> Option<Scenario> {
        match *self {
            Classifier::Resolved(s) => Some(s),
            _ => None,
        }
    }
}

/// CAS counts of one attempt, split by what they were for.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
pub struct CasTally {
    pub owner: u8,
    pub state: u8,
    /// Successful CASes appending a node to the queue.
    pub link: u8,
    /// Link CASes lost to a concurrent enqueue.
    pub link_failed: u8,
    /// CASes swinging the tail to the node this attempt appended.
    pub tail_own: u8,
    /// CASes advancing a tail left behind by another process.
    pub tail_help: u8,
    pub head: u8,
}

impl CasTally {
    fn add(&mut self, pid: ProcessId, cell: Cell, new: &Value, success: bool) {
        let slot = match cell {
            Cell::Owner => &mut self.owner,
            Cell::State(_) => &mut self.state,
            Cell::QueueLink(_) if success => &mut self.link,
            Cell::QueueLink(_) => &mut self.link_failed,
            Cell::QueueTail => match new {
                Value::Node(n) if n.value() == pid => &mut self.tail_own,
                _ => &mut self.tail_help,
            },
            Cell::QueueHead => &mut self.head,
        };
        *slot = slot.saturating_add(1);
    }

    pub fn total(&self) -> u32 {
        [self.owner, self.state, self.link, self.link_failed, self.tail_own, self.tail_help, self.head]
            .iter()
            .map(|&c| u32::from(c))
            .sum()
    }

    /// The count the cost table describes: owner and state CASes plus the
    /// enqueue's own two, its successful link and its tail swing.
    pub fn counted(&self) -> u32 {
        [self.owner, self.state, self.link, self.tail_own].iter().map(|&c| u32::from(c)).sum()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptKind {
    Claim,
    Release,
}

/// One finished claim or release.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ClosedAttempt {
    pub pid: ProcessId,
    pub kind: AttemptKind,
    /// Claims only; `None` if the branch path matched no scenario.
    pub scenario: Option<Scenario>,
    pub granted: bool,
    pub tally: CasTally,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LedgerFault {
    #[error("{pid} issued a CAS outside any claim or release")]
    CasOutsideAttempt { pid: ProcessId },
    #[error("{pid} began an attempt while another was open")]
    Overlapping { pid: ProcessId },
    #[error("{pid} ended an attempt it never began")]
    Unopened { pid: ProcessId },
    #[error("{pid}'s claim took a branch path no scenario describes")]
    Unclassified { pid: ProcessId },
}

/// The open attempt of one process. Small and hashable so the explorer can
/// keep it in its model state.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct AttemptTracker {
    open: Option<AttemptKind>,
    tally: CasTally,
    classifier: Classifier,
}

impl AttemptTracker {
    /// Feeds an event issued by `pid`, returning the attempt it closes, if any.
    pub fn observe(&mut self, pid: ProcessId, event: &TraceEvent) -> Result<Option<ClosedAttempt>, LedgerFault> {
        match *event {
            TraceEvent::BeginClaim { .. } | TraceEvent::BeginRelease { .. } => {
                if self.open.is_some() {
                    return Err(LedgerFault::Overlapping { pid });
                }
                let kind = if matches!(event, TraceEvent::BeginClaim { .. }) {
                    AttemptKind::Claim
                } else {
                    AttemptKind::Release
                };
                *self = AttemptTracker { open: Some(kind), ..Default::default() };
            }
            TraceEvent::EndClaim { granted, .. } => {
                if self.open != Some(AttemptKind::Claim) {
                    return Err(LedgerFault::Unopened { pid });
                }
                let scenario = self.classifier.scenario();
                let closed = ClosedAttempt { pid, kind: AttemptKind::Claim, scenario, granted, tally: self.tally };
                *self = AttemptTracker::default();
                return Ok(Some(closed));
            }
            TraceEvent::EndRelease { .. } => {
                if self.open != Some(AttemptKind::Release) {
                    return Err(LedgerFault::Unopened { pid });
                }
                let closed =
                    ClosedAttempt { pid, kind: AttemptKind::Release, scenario: None, granted: false, tally: self.tally };
                *self = AttemptTracker::default();
                return Ok(Some(closed));
            }
            TraceEvent::Cas { cell, new, success, .. } => match self.open {
                None => return Err(LedgerFault::CasOutsideAttempt { pid }),
                Some(kind) => {
                    self.tally.add(pid, cell, &new, success);
                    if kind == AttemptKind::Claim {
                        self.classifier.observe(pid, event);
                    }
                }
            },
            _ => {
                if self.open == Some(AttemptKind::Claim) {
                    self.classifier.observe(pid, event);
                }
            }
        }
        Ok(None)
    }

    pub fn tally(&self) -> CasTally {
        self.tally
    }
}

/// Running min/max/mean of one count.
#[derive(Clone, Copy, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct Spread {
    pub count: u64,
    pub min: u32,
    pub max: u32,
    pub sum: u64,
}

impl Spread {
    pub fn add(&mut self, v: u32) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
        self.sum += u64::from(v);
    }

    pub fn merge(&mut self, other: &Spread) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.count += other.count;
        self.sum += other.sum;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum as f64 / self.count as f64
        }
    }
}

/// Aggregates for one scenario.
#[derive(Clone, Copy, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct ScenarioStats {
    /// CASes counted the way the cost table counts them.
    pub counted: Spread,
    /// The counted CASes plus lost link CASes.
    pub with_retries: Spread,
    /// Every CAS, including enqueue retries.
    pub total: Spread,
    /// Link CASes lost to concurrent enqueues.
    pub link_failed: Spread,
}

/// Per-scenario CAS aggregates plus release costs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CasLedger {
    trackers: BTreeMap<ProcessId, AttemptTracker>,
    pub scenarios: BTreeMap<Scenario, ScenarioStats>,
    pub releases: Spread,
    pub unclassified: u64,
    pub faults: Vec<LedgerFault>,
}

impl CasLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Attributes `event` to its issuer's open attempt.
    pub fn record(&mut self, event: &TraceEvent) -> Result<(), LedgerFault> {
        let pid = event.pid();
        let closed = self.trackers.entry(pid).or_default().observe(pid, event)?;
        if let Some(closed) = closed {
            self.close(&closed)?;
        }
        Ok(())
    }

    /// Adds an attempt closed elsewhere, e.g. by a tracker inside a model state.
    pub fn close(&mut self, attempt: &ClosedAttempt) -> Result<(), LedgerFault> {
        match attempt.kind {
            AttemptKind::Release => self.releases.add(attempt.tally.total()),
            AttemptKind::Claim => match attempt.scenario {
                Some(s) => {
                    let stats = self.scenarios.entry(s).or_default();
                    stats.counted.add(attempt.tally.counted());
                    stats.with_retries.add(attempt.tally.counted() + u32::from(attempt.tally.link_failed));
                    stats.total.add(attempt.tally.total());
                    stats.link_failed.add(u32::from(attempt.tally.link_failed));
                }
                None => {
                    self.unclassified += 1;
                    return Err(LedgerFault::Unclassified { pid: attempt.pid });
                }
            },
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &CasLedger) {
        for (s, stats) in &other.scenarios {
            let mine = self.scenarios.entry(*s).or_default();
            mine.counted.merge(&stats.counted);
            mine.with_retries.merge(&stats.with_retries);
            mine.total.merge(&stats.total);
            mine.link_failed.merge(&stats.link_failed);
        }
        self.releases.merge(&other.releases);
        self.unclassified += other.unclassified;
        self.faults.extend(other.faults.iter().cloned());
    }

    pub fn claims(&self) -> u64 {
        self.scenarios.values().map(|s| s.total.count).sum::<u64>() + self.unclassified
    }

    pub fn report(&self, processes: u32) -> Vec<ScenarioRow> {
        Scenario::ALL
            .iter()
            .map(|&s| ScenarioRow::new(s, self.scenarios.get(&s).copied().unwrap_or_default(), processes))
            .collect()
    }
}

/// Keeps the first fault; use [`CasLedger::record`] directly to handle each one.
impl EventSink for CasLedger {
    fn emit(&mut self, event: TraceEvent) {
        if let Err(fault) = self.record(&event) {
            self.faults.push(fault);
        }
    }
}

/// One line of the CAS report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub id: u8,
    pub name: String,
    pub hits: u64,
    pub min: Option<u32>,
    pub max: Option<u32>,
    pub mean: Option<f64>,
    pub reference: CasRange,
    /// Bound applied to an open-ended reference maximum, checked against
    /// `max_with_retries`.
    pub bound: CasRange,
    pub max_with_retries: Option<u32>,
    pub max_link_retries: Option<u32>,
    /// Every CAS issued, including tail helps and lost races.
    pub total: Option<Spread>,
    /// `None` if the scenario was never hit.
    pub within: Option<bool>,
}

impl ScenarioRow {
    fn new(scenario: Scenario, stats: ScenarioStats, processes: u32) -> Self {
        let reference = scenario.reference_range();
        // an unknown maximum comes from lost link CASes, at most one per other claimant
        let bound = match reference.max {
            Some(_) => reference,
            None => CasRange { min: reference.min, max: Some(reference.min + processes.saturating_sub(1)) },
        };
        let hit = stats.total.count > 0;
        let (min, max) = (stats.counted.min, stats.counted.max);
        let within = match reference.max {
            Some(_) => reference.contains(min, max),
            None => bound.contains(min, stats.with_retries.max),
        };
        ScenarioRow {
            id: scenario.id(),
            name: scenario.name().to_string(),
            hits: stats.total.count,
            min: hit.then_some(min),
            max: hit.then_some(max),
            mean: hit.then(|| stats.counted.mean()),
            reference,
            bound,
            max_with_retries: hit.then_some(stats.with_retries.max),
            max_link_retries: hit.then_some(stats.link_failed.max),
            total: hit.then_some(stats.total),
            within: hit.then_some(within),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{ClaimMutex, NoHooks};

    fn pid(n: u32) -> ProcessId {
        ProcessId::from_raw(n)
    }

    #[test]
    fn scenario_ids_roundtrip() {
        for s in Scenario::ALL {
            assert_eq!(Scenario::from_id(s.id()), Some(s));
            assert!(s.reference_range().min == s.uncontended_cas());
        }
        assert_eq!(Scenario::from_id(0), None);
        assert_eq!(Scenario::from_id(11), None);
    }

    #[test]
    fn fast_claim_is_unclaimed_with_three_cas() {
        let m = ClaimMutex::new(2).unwrap();
        let mut ledger = CasLedger::new();
        m.claim_traced(pid(1), &NoHooks, &mut ledger).unwrap();
        assert!(ledger.faults.is_empty());
        let stats = ledger.scenarios[&Scenario::Unclaimed];
        assert_eq!((stats.total.min, stats.total.max, stats.total.count), (3, 3, 1));
    }

    #[test]
    fn queued_claim_is_claimed_and_release_tallies_its_cas() {
        let m = ClaimMutex::new(2).unwrap();
        let mut ledger = CasLedger::new();
        m.claim_traced(pid(1), &NoHooks, &mut ledger).unwrap();
        m.claim_traced(pid(2), &NoHooks, &mut ledger).unwrap();
        m.release_traced(pid(1), &NoHooks, &mut ledger).unwrap();
        assert!(ledger.faults.is_empty(), "{:?}", ledger.faults);
        assert_eq!(ledger.scenarios[&Scenario::Claimed].counted.max, 3);
        // dequeue head swing, owner handover, then SCHEDULE's two state CASes
        assert_eq!(ledger.releases.max, 4);
    }

    #[test]
    fn cas_outside_an_attempt_is_a_fault() {
        let mut ledger = CasLedger::new();
        let ev = TraceEvent::Cas {
            pid: pid(1),
            cell: Cell::Owner,
            expected: Value::Pid(ProcessId::NULL),
            new: Value::Pid(pid(1)),
            success: true,
        };
        assert_eq!(ledger.record(&ev), Err(LedgerFault::CasOutsideAttempt { pid: pid(1) }));
    }

    #[test]
    fn open_ended_row_is_bounded_by_retries() {
        let row = ScenarioRow::new(Scenario::Claimed, ScenarioStats::default(), 3);
        assert_eq!(row.bound.max, Some(5));
        assert_eq!(row.within, None);
        assert_eq!(Scenario::Claimed.reference_range().to_string(), "3..unknown");
    }
}
