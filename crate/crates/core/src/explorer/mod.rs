//! Exhaustive, deterministic exploration of every interleaving of the
//! protocol's atomic steps for a few processes.
//!
//! Each process runs `cycles` claim/release rounds. A step is one shared
//! memory access; a parked process is disabled until it is SCHEDULED, so
//! there is no spinning to explore. States are deduplicated by a 64-bit
//! fingerprint and the search is depth first, which also exposes cycles.

mod model;
mod oracles;
mod report;

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};

use rustc_hash::FxHashMap;

use crate::instrumentation::CasLedger;
use crate::protocol::{ProcessId, Variant};
use crate::trace::TraceEvent;

pub use model::{ModelParams, ModelState, Phase, Shared, MAX_MODEL_PROCESSES};
pub use oracles::{
    check_state, fair_oracle, mutex_oracle, safety_oracle, trace_oracles, Monitors, PidQueue, Property, Verdict,
    Violation,
};
pub use report::{Counterexample, ExplorationReport, OracleRecord, ReportConfig, WitnessTrace, NondeterminismWitness, SCHEMA};

use model::Transition;

/// Cycles supported per process.
pub const MAX_CYCLES: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreConfig {
    pub processes: u32,
    pub cycles: u32,
    pub variant: Variant,
    /// Stop after this many distinct states and flag the report incomplete.
    pub max_states: Option<u64>,
}

impl ExploreConfig {
    pub fn new(processes: u32, cycles: u32) -> Self {
        ExploreConfig { processes, cycles, variant: Variant::Faithful, max_states: None }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_max_states(mut self, max_states: u64) -> Self {
        self.max_states = Some(max_states);
        self
    }

    pub fn validate(&self) -> Result<ModelParams, String> {
        if !(1..=MAX_MODEL_PROCESSES as u32).contains(&self.processes) {
            return Err(format!("processes must be in 1..={MAX_MODEL_PROCESSES}, got {}", self.processes));
        }
        if !(1..=MAX_CYCLES).contains(&self.cycles) {
            return Err(format!("cycles must be in 1..={MAX_CYCLES}, got {}", self.cycles));
        }
        Ok(ModelParams { processes: self.processes as usize, cycles: self.cycles as u8, variant: self.variant })
    }
}

fn fingerprint(s: &ModelState) -> u64 {
    // fixed seeds keep runs reproducible
    ahash::RandomState::with_seeds(0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344).hash_one(s)
}

fn pids(params: &ModelParams) -> impl Iterator<Item = ProcessId> {
    (0..params.processes).map(ProcessId::from_index)
}

/// Path count of a finished state, or `ON_STACK` while it is being expanded.
/// Sixteen bytes per visited state keeps a few tens of millions in memory.
type Visit = f64;
const ON_STACK: Visit = -1.0;

struct Frame {
    state: ModelState,
    fp: u64,
    /// Index of the next process to try.
    next: usize,
    /// Process whose step led here.
    via: ProcessId,
    paths: f64,
    successors: usize,
}

/// Raw results of one search.
struct Search {
    states: u64,
    transitions: u64,
    paths: f64,
    max_depth: usize,
    complete: bool,
    violations: BTreeMap<Property, (Violation, Vec<ProcessId>)>,
    ledger: CasLedger,
    max_link_retries: u32,
}

fn search(params: &ModelParams, max_states: Option<u64>) -> Search {
    let mut out = Search {
        states: 0,
        transitions: 0,
        paths: 0.0,
        max_depth: 0,
        complete: true,
        violations: BTreeMap::new(),
        ledger: CasLedger::new(),
        max_link_retries: 0,
    };
    let record = |out: &mut Search, v: Violation, path: Vec<ProcessId>| {
        out.violations.entry(v.property).or_insert((v, path));
    };
    let root = ModelState::initial(params);
    if let Err(v) = oracles::check_state(&root) {
        record(&mut out, v, Vec::new());
        return out;
    }
    let mut visited: FxHashMap<u64, Visit> = FxHashMap::default();
    let root_fp = fingerprint(&root);
    visited.insert(root_fp, ON_STACK);
    let mut stack = vec![Frame { state: root, fp: root_fp, next: 0, via: ProcessId::NULL, paths: 0.0, successors: 0 }];
    let mut tr = Transition::default();
    let mut found = Vec::new();
    // schedule leading to the top of the stack, then `last`
    let path_to = |stack: &[Frame], last: ProcessId| {
        let mut path: Vec<ProcessId> = stack.iter().skip(1).map(|f| f.via).collect();
        path.push(last);
        path
    };

    while !stack.is_empty() {
        out.max_depth = out.max_depth.max(stack.len() - 1);
        let top = stack.len() - 1;
        let frame = &stack[top];
        let pid = (frame.next..params.processes).map(ProcessId::from_index).find(|&p| frame.state.enabled(p));
        let Some(pid) = pid else {
            let mut frame = stack.pop().expect("stack is non-empty");
            if frame.successors == 0 {
                frame.paths = 1.0;
                if !frame.state.all_done() {
                    let v = Violation { property: Property::Deadlock, detail: describe_stuck(&frame.state, params) };
                    let mut path = path_to(&stack, frame.via);
                    path.retain(|p| !p.is_null());
                    record(&mut out, v, path);
                }
            }
            visited.insert(frame.fp, frame.paths);
            match stack.last_mut() {
                Some(parent) => parent.paths += frame.paths,
                None => out.paths = frame.paths,
            }
            continue;
        };
        stack[top].next = pid.index() + 1;
        stack[top].successors += 1;
        out.transitions += 1;
        let mut next = stack[top].state.clone();
        next.step(pid, params, &mut tr);
        // a violating step is still expanded so later properties get their own witnesses
        found.clear();
        oracles::check_step(&stack[top].state, &mut next, &tr, &mut found);
        for v in found.drain(..) {
            record(&mut out, v, path_to(&stack, pid));
        }
        for closed in &tr.closed {
            out.max_link_retries = out.max_link_retries.max(u32::from(closed.tally.link_failed));
            // unclassified claims were already reported by check_step
            let _ = out.ledger.close(closed);
        }
        let fp = fingerprint(&next);
        match visited.entry(fp) {
            Entry::Occupied(e) => match *e.get() {
                p if p >= 0.0 => stack[top].paths += p,
                _ => {
                    stack[top].paths += 1.0;
                    let v = Violation {
                        property: Property::Divergence,
                        detail: format!("{pid}'s step returns to a state already on the current path"),
                    };
                    record(&mut out, v, path_to(&stack, pid));
                }
            },
            Entry::Vacant(e) => {
                if max_states.is_some_and(|m| out.states + 1 >= m) {
                    out.complete = false;
                    break;
                }
                if let Err(v) = oracles::check_state(&next) {
                    record(&mut out, v, path_to(&stack, pid));
                }
                e.insert(ON_STACK);
                out.states += 1;
                stack.push(Frame { state: next, fp, next: 0, via: pid, paths: 0.0, successors: 0 });
            }
        }
    }
    // count the root
    out.states += 1;
    out
}

fn describe_stuck(s: &ModelState, params: &ModelParams) -> String {
    let parts: Vec<String> = pids(params)
        .map(|p| {
            let phase = match s.proc(p).phase {
                Phase::Claim(_) => "claiming",
                Phase::Yield(_) => "parked",
                Phase::Release(_) => "releasing",
                Phase::Done => "done",
            };
            format!("{p} {phase} {}", s.shared.state(p))
        })
        .collect();
    format!("no process can move: {}; owner {}", parts.join(", "), s.shared.owner)
}

/// Explores every interleaving for `config`.
pub fn explore(config: &ExploreConfig) -> Result<ExplorationReport, String> {
    let params = config.validate()?;
    let s = search(&params, config.max_states);
    let mut oracles = Vec::new();
    for property in Property::ALL {
        let counterexample = s.violations.get(&property).map(|(v, schedule)| {
            let replayed = replay(config, schedule).ok();
            Counterexample {
                detail: v.detail.clone(),
                schedule: schedule.iter().map(|p| p.raw()).collect(),
                trace: replayed.map(|r| r.events).unwrap_or_default(),
            }
        });
        oracles.push(OracleRecord {
            name: property.name().to_string(),
            description: property.describe().to_string(),
            ok: counterexample.is_none(),
            counterexample,
        });
    }
    Ok(ExplorationReport {
        schema: SCHEMA.to_string(),
        config: ReportConfig {
            processes: config.processes,
            cycles: config.cycles,
            variant: config.variant,
            max_states: config.max_states,
        },
        complete: s.complete,
        states: s.states,
        transitions: s.transitions,
        paths: s.paths,
        max_depth: s.max_depth as u64,
        oracles,
        scenarios: s.ledger.report(config.processes),
        unclassified_claims: s.ledger.unclassified,
        release_cas: report::SpreadRecord::from(&s.ledger.releases),
        max_link_retries: s.max_link_retries,
        nondeterminism: if config.processes >= 2 { find_nondeterminism(config)? } else { None },
    })
}

/// Result of replaying a schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replay {
    pub events: Vec<TraceEvent>,
    /// Every violation hit, in order.
    pub violations: Vec<Violation>,
    pub final_state: ModelState,
}

/// Runs the processes in the order given, checking every oracle on the way.
pub fn replay(config: &ExploreConfig, schedule: &[ProcessId]) -> Result<Replay, String> {
    let params = config.validate()?;
    let mut state = ModelState::initial(&params);
    let mut events = Vec::new();
    let mut violations = Vec::new();
    let mut tr = Transition::default();
    for (i, &pid) in schedule.iter().enumerate() {
        if pid.is_null() || pid.index() >= params.processes || !state.enabled(pid) {
            return Err(format!("step {i}: {pid} cannot move"));
        }
        let mut next = state.clone();
        next.step(pid, &params, &mut tr);
        events.extend(tr.events.iter().copied());
        oracles::check_step(&state, &mut next, &tr, &mut violations);
        violations.extend(oracles::check_state(&next).err());
        state = next;
    }
    if !state.all_done() && pids(&params).all(|p| !state.enabled(p)) {
        let detail = describe_stuck(&state, &params);
        violations.push(Violation { property: Property::Deadlock, detail });
    }
    Ok(Replay { events, violations, final_state: state })
}

/// Searches for two complete runs that begin their claims in the same order
/// but enter the critical section in different orders.
pub fn find_nondeterminism(config: &ExploreConfig) -> Result<Option<NondeterminismWitness>, String> {
    let params = config.validate()?;
    type History = (Vec<ProcessId>, Vec<ProcessId>);
    let mut finished: HashMap<Vec<ProcessId>, (Vec<ProcessId>, Vec<ProcessId>)> = HashMap::new();
    let mut visited: std::collections::HashSet<(u64, History)> = std::collections::HashSet::new();
    let mut tr = Transition::default();
    // (state, begin order, entry order, schedule, next pid)
    let mut stack = vec![(ModelState::initial(&params), Vec::new(), Vec::new(), Vec::new(), 0usize)];
    while let Some((state, begins, entries, schedule, next)) = stack.last_mut() {
        let Some(pid) = (*next..params.processes).map(ProcessId::from_index).find(|&p| state.enabled(p)) else {
            let (state, begins, entries, schedule, _) = stack.pop().expect("non-empty");
            if state.all_done() {
                match finished.get(&begins) {
                    Some((other_entries, other_schedule)) if *other_entries != entries => {
                        let trace = |s: &[ProcessId]| -> Result<WitnessTrace, String> {
                            let r = replay(config, s)?;
                            let entry_order = r.events.iter().filter_map(|e| e.acquirer()).map(|p| p.raw()).collect();
                            Ok(WitnessTrace {
                                schedule: s.iter().map(|p| p.raw()).collect(),
                                entry_order,
                                events: r.events,
                            })
                        };
                        return Ok(Some(NondeterminismWitness {
                            begin_order: begins.iter().map(|p| p.raw()).collect(),
                            first: trace(other_schedule)?,
                            second: trace(&schedule)?,
                        }));
                    }
                    Some(_) => {}
                    None => {
                        finished.insert(begins, (entries, schedule));
                    }
                }
            }
            continue;
        };
        *next = pid.index() + 1;
        let mut succ = state.clone();
        succ.step(pid, &params, &mut tr);
        let mut b = begins.clone();
        let mut e = entries.clone();
        for ev in &tr.events {
            if let TraceEvent::BeginClaim { pid } = ev {
                b.push(*pid);
            }
            if let Some(p) = ev.acquirer() {
                e.push(p);
            }
        }
        let key = (fingerprint(&succ), (b.clone(), e.clone()));
        if visited.insert(key) {
            let mut s = schedule.clone();
            s.push(pid);
            stack.push((succ, b, e, s, 0));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrumentation::Scenario;

    fn p(n: u32) -> ProcessId {
        ProcessId::from_raw(n)
    }

    #[test]
    fn single_process_has_one_path_and_three_cas() {
        let r = explore(&ExploreConfig::new(1, 1)).unwrap();
        assert!(r.violations().is_empty(), "{r}");
        assert_eq!(r.paths, 1.0);
        let row = &r.scenarios[Scenario::Unclaimed as usize - 1];
        assert_eq!((row.hits, row.min, row.max), (1, Some(3), Some(3)));
    }

    #[test]
    fn replay_of_a_solo_cycle_is_clean() {
        let r = explore(&ExploreConfig::new(1, 1)).unwrap();
        let steps = r.max_depth as usize;
        let replayed = replay(&ExploreConfig::new(1, 1), &vec![p(1); steps]).unwrap();
        assert!(replayed.violations.is_empty());
        assert!(replayed.final_state.all_done());
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(explore(&ExploreConfig::new(0, 1)).is_err());
        assert!(explore(&ExploreConfig::new(5, 1)).is_err());
        assert!(explore(&ExploreConfig::new(2, 3)).is_err());
    }

    #[test]
    fn budget_marks_report_incomplete() {
        let r = explore(&ExploreConfig::new(2, 1).with_max_states(50)).unwrap();
        assert!(!r.complete);
    }
}
