use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a cooperatively scheduled process.
///
/// Zero is reserved for [`ProcessId::NULL`], which is what the owner cell holds
/// while the mutex is free and what queue peeks return when the queue is empty.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(u32);

impl ProcessId {
    pub const NULL: ProcessId = ProcessId(0);

    /// Returns `None` for the reserved NULL value.
    pub const fn new(raw: u32) -> Option<ProcessId> {
        if raw == 0 {
            None
        } else {
            Some(ProcessId(raw))
        }
    }

    pub const fn from_raw(raw: u32) -> ProcessId {
        ProcessId(raw)
    }

    pub const fn raw(self) -> u32 {
        self.0
    }

    pub const fn is_null(self) -> bool {
        self.0 == 0
    }

    /// Zero-based dense index for non-NULL ids.
    pub(crate) fn index(self) -> usize {
        debug_assert!(!self.is_null());
        self.0 as usize - 1
    }

    pub(crate) fn from_index(index: usize) -> ProcessId {
        ProcessId(index as u32 + 1)
    }
}

impl fmt::Debug for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_null() {
            f.write_str("null")
        } else {
            write!(f, "p{}", self.0)
        }
    }
}

/// Scheduling state of a process, stored in one atomic cell per process.
///
/// ```text
///   ACTIVE --claim--> ENGAGING --claimed--> ACTIVE
///                     ENGAGING --not claimed--> WAITING
///                     ENGAGING --schedule--> SCHEDULED
///                     WAITING  --schedule--> SCHEDULED
///                     SCHEDULED --run--> ACTIVE
/// ```
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum ProcessState {
    #[default]
    Active = 0,
    Engaging = 1,
    Waiting = 2,
    Scheduled = 3,
}

impl ProcessState {
    pub const ALL: [ProcessState; 4] = [
        ProcessState::Active,
        ProcessState::Engaging,
        ProcessState::Waiting,
        ProcessState::Scheduled,
    ];

    pub(crate) fn from_u8(raw: u8) -> ProcessState {
        match raw {
            0 => ProcessState::Active,
            1 => ProcessState::Engaging,
            2 => ProcessState::Waiting,
            3 => ProcessState::Scheduled,
            _ => unreachable!("corrupt process state {raw}"),
        }
    }

    /// Whether `self -> to` is an edge of the process state automaton.
    pub fn can_transition(self, to: ProcessState) -> bool {
        use ProcessState::*;
        matches!(
            (self, to),
            (Active, Engaging)
                | (Engaging, Active)
                | (Engaging, Waiting)
                | (Engaging, Scheduled)
                | (Waiting, Scheduled)
                | (Scheduled, Active)
        )
    }
}

impl fmt::Display for ProcessState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProcessState::Active => "ACTIVE",
            ProcessState::Engaging => "ENGAGING",
            ProcessState::Waiting => "WAITING",
            ProcessState::Scheduled => "SCHEDULED",
        };
        f.write_str(s)
    }
}

/// Result of a claim.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ClaimOutcome {
    /// `true`: the caller owns the mutex and is ACTIVE. `false`: the caller
    /// committed to WAITING and must yield before entering the critical section.
    pub granted: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_is_reserved() {
        assert!(ProcessId::new(0).is_none());
        assert_eq!(ProcessId::new(3).unwrap().raw(), 3);
        assert_eq!(ProcessId::NULL.to_string(), "null");
        assert_eq!(ProcessId::from_raw(2).to_string(), "p2");
    }

    #[test]
    fn automaton_has_exactly_six_edges() {
        let edges = ProcessState::ALL
            .iter()
            .flat_map(|&a| ProcessState::ALL.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a.can_transition(b))
            .count();
        assert_eq!(edges, 6);
        assert!(!ProcessState::Waiting.can_transition(ProcessState::Active));
        assert!(!ProcessState::Scheduled.can_transition(ProcessState::Engaging));
    }
}
