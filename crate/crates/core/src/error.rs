use thiserror::Error;

use crate::protocol::{ProcessId, ProcessState};

/// Caller contract violations. These are bugs in the calling process, never
/// protocol outcomes, so they are reported instead of tolerated.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("process id must not be NULL")]
    NullPid,
    #[error("{pid} is outside the capacity of {capacity} processes")]
    OutOfCapacity { pid: ProcessId, capacity: u32 },
    #[error("capacity {requested} exceeds the supported maximum of {max} processes")]
    CapacityTooLarge { requested: u32, max: u32 },
    #[error("{pid} must be ACTIVE to {op}, but is {state}")]
    NotActive { pid: ProcessId, op: &'static str, state: ProcessState },
    #[error("{pid} has no denied claim to wait on: state is {state}")]
    NotParked { pid: ProcessId, state: ProcessState },
    #[error("{pid} already owns the mutex")]
    Reentrant { pid: ProcessId },
    #[error("{pid} cannot release: owner is {owner}")]
    NotOwner { pid: ProcessId, owner: ProcessId },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
