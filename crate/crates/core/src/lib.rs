//! A spin-free, FIFO-fair claim/release mutex for cooperatively scheduled
//! runtimes, with an exhaustive interleaving explorer that checks it.
//!
//! ```
//! use claimlock::{ClaimMutex, NoHooks, ProcessId, YieldStatus};
//!
//! let m = ClaimMutex::new(2)?;
//! let (a, b) = (ProcessId::from_raw(1), ProcessId::from_raw(2));
//! assert!(m.claim(a, &NoHooks)?.granted);
//! assert!(!m.claim(b, &NoHooks)?.granted);
//! assert_eq!(m.yield_until_scheduled(b, &NoHooks)?, YieldStatus::Parked);
//! m.release(a, &NoHooks)?;
//! assert_eq!(m.yield_until_scheduled(b, &NoHooks)?, YieldStatus::Resumed);
//! # Ok::<(), claimlock::Error>(())
//! ```

pub mod cells;
pub mod cli;
pub mod error;
pub mod explorer;
pub mod instrumentation;
pub mod protocol;
pub mod queue;
pub mod scheduler;
pub mod stress;
pub mod trace;

pub use error::{Error, Result};
pub use protocol::{ClaimMutex, ClaimOutcome, NoHooks, ProcessId, ProcessState, RuntimeHooks, YieldStatus};
