use std::cell::RefCell;

use claimlock::explorer::{replay, trace_oracles, ExploreConfig, Phase};
use claimlock::instrumentation::CasLedger;
use claimlock::protocol::{ClaimMutex, ProcessId, ProcessState, RuntimeHooks, YieldStatus};
use claimlock::trace::{EventSink, TraceEvent};
use proptest::prelude::*;

#[derive(Clone, Copy, PartialEq, Debug)]
enum Local {
    Idle,
    Parked,
    Holding,
}

#[derive(Default)]
struct Wakes(RefCell<Vec<ProcessId>>);

impl RuntimeHooks for Wakes {
    fn on_wait(&self, _pid: ProcessId) {}
    fn on_schedule(&self, pid: ProcessId) {
        self.0.borrow_mut().push(pid);
    }
}

/// Drives whole operations in the order `picks` selects, one process at a time.
fn sequential_run(processes: u32, picks: &[u8]) -> (Vec<TraceEvent>, CasLedger, Vec<ProcessId>, Vec<ProcessId>) {
    let m = ClaimMutex::new(processes).unwrap();
    let hooks = Wakes::default();
    let mut events = Vec::new();
    let mut ledger = CasLedger::new();
    let mut local = vec![Local::Idle; processes as usize];
    let mut denied = Vec::new();
    for &pick in picks {
        let movable: Vec<usize> = (0..processes as usize)
            .filter(|&i| {
                local[i] != Local::Parked || m.state(ProcessId::from_raw(i as u32 + 1)).unwrap() == ProcessState::Scheduled
            })
            .collect();
        let i = movable[pick as usize % movable.len()];
        let pid = ProcessId::from_raw(i as u32 + 1);
        local[i] = match local[i] {
            Local::Idle => {
                if m.claim_traced(pid, &hooks, &mut events).unwrap().granted {
                    Local::Holding
                } else {
                    denied.push(pid);
                    assert_eq!(
                        m.yield_traced(pid, &hooks, &mut events).unwrap(),
                        YieldStatus::Parked
                    );
                    Local::Parked
                }
            }
            Local::Parked => {
                let r = m.yield_traced(pid, &hooks, &mut events).unwrap();
                assert_eq!(r, YieldStatus::Resumed);
                Local::Holding
            }
            Local::Holding => {
                m.release_traced(pid, &hooks, &mut events).unwrap();
                Local::Idle
            }
        };
    }
    for &ev in &events {
        ledger.emit(ev);
    }
    let wakes = hooks.0.into_inner();
    (events, ledger, denied, wakes)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sequential_schedules_satisfy_every_trace_oracle(processes in 1u32..=4, picks in prop::collection::vec(any::<u8>(), 1..120)) {
        let (events, ledger, denied, wakes) = sequential_run(processes, &picks);
        prop_assert_eq!(trace_oracles(&events), Ok(()));
        prop_assert!(ledger.faults.is_empty(), "{:?}", ledger.faults);
        prop_assert_eq!(ledger.unclassified, 0);
        // only denied claims are ever woken, each at most once per denial
        for w in &wakes {
            prop_assert!(denied.contains(w));
        }
        prop_assert!(wakes.len() <= denied.len());
    }

    #[test]
    fn random_interleavings_replay_cleanly(processes in 1u32..=3, cycles in 1u32..=2, picks in prop::collection::vec(any::<u8>(), 200)) {
        let config = ExploreConfig::new(processes, cycles);
        let mut schedule: Vec<ProcessId> = Vec::new();
        let mut picks = picks.into_iter().cycle();
        loop {
            let r = replay(&config, &schedule).unwrap();
            prop_assert!(r.violations.is_empty(), "{:?} after {:?}", r.violations, schedule);
            let enabled: Vec<ProcessId> = (0..processes as usize)
                .map(|i| ProcessId::from_raw(i as u32 + 1))
                .filter(|&p| r.final_state.enabled(p))
                .collect();
            if enabled.is_empty() {
                prop_assert!(r.final_state.all_done());
                prop_assert!((0..processes as usize).all(|i| r.final_state.procs[i].phase == Phase::Done));
                let entries = r.events.iter().filter(|e| e.acquirer().is_some()).count();
                prop_assert_eq!(entries as u32, processes * cycles);
                prop_assert_eq!(trace_oracles(&r.events), Ok(()));
                break;
            }
            let pick = picks.next().unwrap() as usize;
            schedule.push(enabled[pick % enabled.len()]);
        }
    }

    #[test]
    fn trace_events_roundtrip_through_json(processes in 1u32..=3, picks in prop::collection::vec(any::<u8>(), 1..40)) {
        let (events, ..) = sequential_run(processes, &picks);
        let json = serde_json::to_string(&events).unwrap();
        let back: Vec<TraceEvent> = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, events);
    }
}
