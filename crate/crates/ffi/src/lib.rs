//! C ABI over the claim/release mutex and the explorer.
//!
//! Handles are opaque and owned by the caller between `new` and `free`.
//! Every call returns a [`ClaimlockStatus`]; outputs go through pointers.
//! Panics never cross the boundary.

use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use claimlock::explorer::{self, ExploreConfig};
use claimlock::protocol::Variant;
use claimlock::{ClaimMutex, Error, ProcessId, RuntimeHooks, YieldStatus};

/// Opaque mutex handle.
pub struct ClaimlockMutex {
    inner: ClaimMutex,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClaimlockStatus {
    Ok = 0,
    NullArgument = 1,
    NullPid = 2,
    OutOfCapacity = 3,
    CapacityTooLarge = 4,
    NotActive = 5,
    NotParked = 6,
    Reentrant = 7,
    NotOwner = 8,
    InvalidConfig = 9,
    Internal = 10,
}

impl From<&Error> for ClaimlockStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::NullPid => ClaimlockStatus::NullPid,
            Error::OutOfCapacity { .. } => ClaimlockStatus::OutOfCapacity,
            Error::CapacityTooLarge { .. } => ClaimlockStatus::CapacityTooLarge,
            Error::NotActive { .. } => ClaimlockStatus::NotActive,
            Error::NotParked { .. } => ClaimlockStatus::NotParked,
            Error::Reentrant { .. } => ClaimlockStatus::Reentrant,
            Error::NotOwner { .. } => ClaimlockStatus::NotOwner,
        }
    }
}

/// Protocol variant for exploration; anything but `Faithful` is a deliberate bug.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClaimlockVariant {
    Faithful = 0,
    BlindOwnerStore = 1,
    SingleScheduleCas = 2,
    GrantWhileUnscheduled = 3,
}

impl From<ClaimlockVariant> for Variant {
    fn from(v: ClaimlockVariant) -> Variant {
        match v {
            ClaimlockVariant::Faithful => Variant::Faithful,
            ClaimlockVariant::BlindOwnerStore => Variant::BlindOwnerStore,
            ClaimlockVariant::SingleScheduleCas => Variant::SingleScheduleCas,
            ClaimlockVariant::GrantWhileUnscheduled => Variant::GrantWhileUnscheduled,
        }
    }
}

/// Runtime callbacks. Either may be NULL. `user_data` is passed back untouched.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct ClaimlockHooks {
    pub on_wait: Option<extern "C" fn(user_data: *mut c_void, pid: u32)>,
    pub on_schedule: Option<extern "C" fn(user_data: *mut c_void, pid: u32)>,
    pub user_data: *mut c_void,
}

struct CHooks(Option<ClaimlockHooks>);

impl RuntimeHooks for CHooks {
    fn on_wait(&self, pid: ProcessId) {
        if let Some(h) = self.0 {
            if let Some(f) = h.on_wait {
                f(h.user_data, pid.raw());
            }
        }
    }

    fn on_schedule(&self, pid: ProcessId) {
        if let Some(h) = self.0 {
            if let Some(f) = h.on_schedule {
                f(h.user_data, pid.raw());
            }
        }
    }
}

fn guard(f: impl FnOnce() -> ClaimlockStatus) -> ClaimlockStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(ClaimlockStatus::Internal)
}

fn status<T>(r: &claimlock::Result<T>) -> ClaimlockStatus {
    match r {
        Ok(_) => ClaimlockStatus::Ok,
        Err(e) => e.into(),
    }
}

/// # Safety
/// `hooks` is NULL or points to a valid `ClaimlockHooks`.
unsafe fn read_hooks(hooks: *const ClaimlockHooks) -> CHooks {
    CHooks(hooks.as_ref().copied())
}

/// Creates a mutex for process ids `1..=capacity`.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn claimlock_mutex_new(capacity: u32, out: *mut *mut ClaimlockMutex) -> ClaimlockStatus {
    guard(|| {
        if out.is_null() {
            return ClaimlockStatus::NullArgument;
        }
        match ClaimMutex::new(capacity) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(ClaimlockMutex { inner }));
                ClaimlockStatus::Ok
            }
            Err(e) => {
                *out = ptr::null_mut();
                (&e).into()
            }
        }
    })
}

/// Destroys a handle. NULL is ignored.
///
/// # Safety
/// `m` is NULL or came from `claimlock_mutex_new` and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn claimlock_mutex_free(m: *mut ClaimlockMutex) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Attempts to take the mutex. On `*granted == false` the caller must park
/// and later call `claimlock_yield`.
///
/// # Safety
/// `m` is a live handle, `granted` is writable, `hooks` is NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn claimlock_claim(
    m: *const ClaimlockMutex,
    pid: u32,
    hooks: *const ClaimlockHooks,
    granted: *mut bool,
) -> ClaimlockStatus {
    guard(|| {
        let (Some(m), false) = (m.as_ref(), granted.is_null()) else {
            return ClaimlockStatus::NullArgument;
        };
        let r = m.inner.claim(ProcessId::from_raw(pid), &read_hooks(hooks));
        if let Ok(outcome) = &r {
            *granted = outcome.granted;
        }
        status(&r)
    })
}

/// Gives up the mutex, scheduling the next waiter through `on_schedule`.
///
/// # Safety
/// `m` is a live handle, `hooks` is NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn claimlock_release(
    m: *const ClaimlockMutex,
    pid: u32,
    hooks: *const ClaimlockHooks,
) -> ClaimlockStatus {
    guard(|| {
        let Some(m) = m.as_ref() else { return ClaimlockStatus::NullArgument };
        status(&m.inner.release(ProcessId::from_raw(pid), &read_hooks(hooks)))
    })
}

/// Continues a denied claim. `*resumed` is true once the caller holds the
/// mutex; false means `on_wait` was called and the caller should park.
///
/// # Safety
/// `m` is a live handle, `resumed` is writable, `hooks` is NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn claimlock_yield(
    m: *const ClaimlockMutex,
    pid: u32,
    hooks: *const ClaimlockHooks,
    resumed: *mut bool,
) -> ClaimlockStatus {
    guard(|| {
        let (Some(m), false) = (m.as_ref(), resumed.is_null()) else {
            return ClaimlockStatus::NullArgument;
        };
        let r = m.inner.yield_until_scheduled(ProcessId::from_raw(pid), &read_hooks(hooks));
        if let Ok(s) = &r {
            *resumed = *s == YieldStatus::Resumed;
        }
        status(&r)
    })
}

/// Writes the process state: 0 ACTIVE, 1 ENGAGING, 2 WAITING, 3 SCHEDULED.
///
/// # Safety
/// `m` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn claimlock_state(m: *const ClaimlockMutex, pid: u32, out: *mut u8) -> ClaimlockStatus {
    guard(|| {
        let (Some(m), false) = (m.as_ref(), out.is_null()) else {
            return ClaimlockStatus::NullArgument;
        };
        let r = m.inner.state(ProcessId::from_raw(pid));
        if let Ok(s) = &r {
            *out = *s as u8;
        }
        status(&r)
    })
}

/// Writes the current owner, 0 for none.
///
/// # Safety
/// `m` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn claimlock_owner(m: *const ClaimlockMutex, out: *mut u32) -> ClaimlockStatus {
    guard(|| {
        let (Some(m), false) = (m.as_ref(), out.is_null()) else {
            return ClaimlockStatus::NullArgument;
        };
        *out = m.inner.owner().raw();
        ClaimlockStatus::Ok
    })
}

/// Runs an exhaustive exploration and returns its JSON report in `*json`,
/// to be released with `claimlock_string_free`. `max_states` 0 means no budget.
/// `*exit_code` gets 0 clean, 1 violation, 2 budget exhausted.
///
/// # Safety
/// `json` and `exit_code` are writable.
#[no_mangle]
pub unsafe extern "C" fn claimlock_explore_json(
    processes: u32,
    cycles: u32,
    variant: ClaimlockVariant,
    max_states: u64,
    json: *mut *mut c_char,
    exit_code: *mut i32,
) -> ClaimlockStatus {
    guard(|| {
        if json.is_null() || exit_code.is_null() {
            return ClaimlockStatus::NullArgument;
        }
        *json = ptr::null_mut();
        let mut config = ExploreConfig::new(processes, cycles).with_variant(variant.into());
        if max_states > 0 {
            config = config.with_max_states(max_states);
        }
        let Ok(report) = explorer::explore(&config) else {
            return ClaimlockStatus::InvalidConfig;
        };
        let Ok(text) = CString::new(report.to_json()) else {
            return ClaimlockStatus::Internal;
        };
        *exit_code = report.exit_code();
        *json = text.into_raw();
        ClaimlockStatus::Ok
    })
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` is NULL or came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn claimlock_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Static, NUL-terminated description of a status.
#[no_mangle]
pub extern "C" fn claimlock_status_message(status: ClaimlockStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        ClaimlockStatus::Ok => b"ok\0",
        ClaimlockStatus::NullArgument => b"a required pointer argument was NULL\0",
        ClaimlockStatus::NullPid => b"process id must not be 0\0",
        ClaimlockStatus::OutOfCapacity => b"process id is outside the mutex capacity\0",
        ClaimlockStatus::CapacityTooLarge => b"capacity exceeds the supported maximum\0",
        ClaimlockStatus::NotActive => b"process must be ACTIVE for this call\0",
        ClaimlockStatus::NotParked => b"process has no denied claim to wait on\0",
        ClaimlockStatus::Reentrant => b"process already owns the mutex\0",
        ClaimlockStatus::NotOwner => b"only the owner may release\0",
        ClaimlockStatus::InvalidConfig => b"exploration parameters out of range\0",
        ClaimlockStatus::Internal => b"internal error\0",
    };
    msg.as_ptr().cast()
}
