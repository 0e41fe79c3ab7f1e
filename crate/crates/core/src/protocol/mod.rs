//! The claim/release mutex protocol.

mod machine;
mod mutex;
mod types;

pub use machine::{ClaimOp, ReleaseOp, ReleaseOutcome, ScheduleOp, Variant, YieldOp};
pub use mutex::{AtomicMutexCells, ClaimMutex, NoHooks, RuntimeHooks, YieldStatus};
pub use types::{ClaimOutcome, ProcessId, ProcessState};
