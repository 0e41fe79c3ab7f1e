use std::ffi::{c_void, CStr};
use std::ptr;

use claimlock_ffi::*;

extern "C" fn count_schedule(user_data: *mut c_void, pid: u32) {
    let log = unsafe { &mut *(user_data as *mut Vec<u32>) };
    log.push(pid);
}

fn new_mutex(capacity: u32) -> *mut ClaimlockMutex {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { claimlock_mutex_new(capacity, &mut m) }, ClaimlockStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn handover_through_callbacks() {
    let m = new_mutex(2);
    let mut woken: Vec<u32> = Vec::new();
    let hooks = ClaimlockHooks {
        on_wait: None,
        on_schedule: Some(count_schedule),
        user_data: &mut woken as *mut Vec<u32> as *mut c_void,
    };
    let mut granted = false;
    unsafe {
        assert_eq!(claimlock_claim(m, 1, &hooks, &mut granted), ClaimlockStatus::Ok);
        assert!(granted);
        assert_eq!(claimlock_claim(m, 2, &hooks, &mut granted), ClaimlockStatus::Ok);
        assert!(!granted);
        let mut resumed = true;
        assert_eq!(claimlock_yield(m, 2, &hooks, &mut resumed), ClaimlockStatus::Ok);
        assert!(!resumed);
        assert_eq!(claimlock_release(m, 1, &hooks), ClaimlockStatus::Ok);
        let mut owner = 0;
        assert_eq!(claimlock_owner(m, &mut owner), ClaimlockStatus::Ok);
        assert_eq!(owner, 2);
        assert_eq!(claimlock_yield(m, 2, &hooks, &mut resumed), ClaimlockStatus::Ok);
        assert!(resumed);
        let mut state = 9;
        assert_eq!(claimlock_state(m, 2, &mut state), ClaimlockStatus::Ok);
        assert_eq!(state, 0);
        assert_eq!(claimlock_release(m, 2, ptr::null()), ClaimlockStatus::Ok);
        claimlock_mutex_free(m);
    }
    assert_eq!(woken, vec![2]);
}

#[test]
fn contract_errors_map_to_status_codes() {
    let m = new_mutex(2);
    let mut granted = false;
    unsafe {
        assert_eq!(claimlock_release(m, 1, ptr::null()), ClaimlockStatus::NotOwner);
        assert_eq!(claimlock_claim(m, 0, ptr::null(), &mut granted), ClaimlockStatus::NullPid);
        assert_eq!(claimlock_claim(m, 3, ptr::null(), &mut granted), ClaimlockStatus::OutOfCapacity);
        assert_eq!(claimlock_claim(m, 1, ptr::null(), ptr::null_mut()), ClaimlockStatus::NullArgument);
        assert_eq!(claimlock_claim(ptr::null(), 1, ptr::null(), &mut granted), ClaimlockStatus::NullArgument);
        let mut resumed = false;
        assert_eq!(claimlock_yield(m, 1, ptr::null(), &mut resumed), ClaimlockStatus::NotParked);
        claimlock_mutex_free(m);
        claimlock_mutex_free(ptr::null_mut());
        let mut out = ptr::null_mut();
        assert_eq!(claimlock_mutex_new(u32::MAX, &mut out), ClaimlockStatus::CapacityTooLarge);
        assert!(out.is_null());
    }
}

#[test]
fn explore_returns_a_json_report() {
    let mut json = ptr::null_mut();
    let mut code = -1;
    unsafe {
        let s = claimlock_explore_json(2, 1, ClaimlockVariant::Faithful, 0, &mut json, &mut code);
        assert_eq!(s, ClaimlockStatus::Ok);
        assert_eq!(code, 0);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        claimlock_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema"], "claimlock.report/v1");
        assert_eq!(v["complete"], true);

        let s = claimlock_explore_json(2, 1, ClaimlockVariant::SingleScheduleCas, 0, &mut json, &mut code);
        assert_eq!(s, ClaimlockStatus::Ok);
        assert_eq!(code, 1);
        claimlock_string_free(json);

        let s = claimlock_explore_json(9, 1, ClaimlockVariant::Faithful, 0, &mut json, &mut code);
        assert_eq!(s, ClaimlockStatus::InvalidConfig);
        assert!(json.is_null());
    }
}

#[test]
fn every_status_has_a_message() {
    for s in [ClaimlockStatus::Ok, ClaimlockStatus::NotOwner, ClaimlockStatus::Internal] {
        let msg = unsafe { CStr::from_ptr(claimlock_status_message(s)) };
        assert!(!msg.to_bytes().is_empty());
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/claimlock.h");
    for name in [
        "claimlock_mutex_new",
        "claimlock_mutex_free",
        "claimlock_claim",
        "claimlock_release",
        "claimlock_yield",
        "claimlock_state",
        "claimlock_owner",
        "claimlock_explore_json",
        "claimlock_string_free",
        "claimlock_status_message",
        "typedef struct ClaimlockMutex ClaimlockMutex",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
