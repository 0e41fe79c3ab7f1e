//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail
//! the run; any other FAIL, or a known one that starts passing, exits 1.
//! `CLAIMLOCK_LONG_RUN=1` adds the four-process exploration.

use std::time::{Duration, Instant};

use claimlock::explorer::{explore, replay, ExplorationReport, ExploreConfig};
use claimlock::protocol::{ProcessId, Variant};
use claimlock::stress::{self, StressConfig};
use claimlock::trace::TraceEvent;

/// Row 2's retry bound does not hold once processes claim twice.
const KNOWN_FAILURES: &[u8] = &[3];

const SAFETY_ORACLES: &[&str] = &["mutual-exclusion", "fifo", "state-safety", "deadlock", "invariant"];

struct Run {
    processes: u32,
    cycles: u32,
    report: ExplorationReport,
    elapsed: Duration,
}

impl Run {
    fn label(&self) -> String {
        format!("N={}/c={}", self.processes, self.cycles)
    }
}

fn explore_all() -> Vec<Run> {
    let mut configs: Vec<(u32, u32)> = (1..=3).flat_map(|n| [(n, 1), (n, 2)]).collect();
    if std::env::var_os("CLAIMLOCK_LONG_RUN").is_some() {
        configs.push((4, 1));
    }
    configs
        .into_iter()
        .map(|(processes, cycles)| {
            let started = Instant::now();
            let report = explore(&ExploreConfig::new(processes, cycles)).expect("valid config");
            let elapsed = started.elapsed();
            eprintln!("explored N={processes}/c={cycles}: {} states in {:.1?}", report.states, elapsed);
            Run { processes, cycles, report, elapsed }
        })
        .collect()
}

fn criterion_1(runs: &[Run]) -> Result<String, String> {
    let mut problems = Vec::new();
    for run in runs {
        if !run.report.complete {
            problems.push(format!("{} incomplete", run.label()));
        }
        for name in SAFETY_ORACLES {
            match run.report.oracle(name) {
                Some(o) if o.ok => {}
                Some(_) => problems.push(format!("{} {name} violated", run.label())),
                None => problems.push(format!("{} {name} missing", run.label())),
            }
        }
        let limit = if run.processes == 4 { 3600 } else { 300 };
        if run.elapsed > Duration::from_secs(limit) {
            problems.push(format!("{} took {:.0?}", run.label(), run.elapsed));
        }
    }
    let largest = runs.iter().max_by_key(|r| r.report.states).expect("runs");
    let long = if runs.iter().any(|r| r.processes == 4) { "" } else { ", N=4 not run" };
    verdict(problems, format!("{} configurations clean, {} in {:.1?}{long}", runs.len(), largest.label(), largest.elapsed))
}

fn criterion_2() -> Result<String, String> {
    let config = ExploreConfig::new(2, 1);
    let report = explore(&config).map_err(|e| e.to_string())?;
    let w = report.nondeterminism.ok_or("no witness")?;
    let mut orders = Vec::new();
    for run in [&w.first, &w.second] {
        let schedule: Vec<ProcessId> = run.schedule.iter().map(|&p| ProcessId::from_raw(p)).collect();
        let r = replay(&config, &schedule)?;
        if !r.violations.is_empty() {
            return Err(format!("witness replay violates {:?}", r.violations));
        }
        let begins: Vec<u32> = r
            .events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::BeginClaim { pid } => Some(pid.raw()),
                _ => None,
            })
            .collect();
        let entries: Vec<u32> = r.events.iter().filter_map(|e| e.acquirer()).map(|p| p.raw()).collect();
        orders.push((begins, entries));
    }
    let (a, b) = (&orders[0], &orders[1]);
    if a.0 != b.0 || a.0 != w.begin_order {
        return Err(format!("begin orders differ: {:?} vs {:?}", a.0, b.0));
    }
    if a.1 == b.1 {
        return Err(format!("entry orders agree: {:?}", a.1));
    }
    Ok(format!("begin {:?}, entries {:?} vs {:?}", a.0, a.1, b.1))
}

fn criterion_3(runs: &[Run]) -> Result<String, String> {
    let mut problems = Vec::new();
    for run in runs {
        for row in &run.report.scenarios {
            if row.within == Some(false) {
                problems.push(format!(
                    "{} row {} counted {}..{} with retries {} outside {}",
                    run.label(),
                    row.id,
                    row.min.unwrap_or(0),
                    row.max.unwrap_or(0),
                    row.max_with_retries.unwrap_or(0),
                    if row.reference.max.is_some() { row.reference } else { row.bound },
                ));
            }
            if row.id == 1 && row.hits > 0 && row.min != Some(3) {
                problems.push(format!("{} row 1 min {:?}", run.label(), row.min));
            }
        }
    }
    verdict(problems, "all rows within bounds, row 1 min 3".into())
}

fn criterion_4(runs: &[Run]) -> Result<String, String> {
    let run = runs.iter().find(|r| r.processes == 3 && r.cycles == 2).ok_or("N=3/c=2 not run")?;
    let mut problems: Vec<String> =
        run.report.scenarios.iter().filter(|r| r.hits == 0).map(|r| format!("row {} never hit", r.id)).collect();
    if run.report.unclassified_claims > 0 {
        problems.push(format!("{} unclassified claims", run.report.unclassified_claims));
    }
    if run.report.oracle("scenario-classification").map_or(true, |o| !o.ok) {
        problems.push("classification oracle failed".into());
    }
    let least = run.report.scenarios.iter().map(|r| r.hits).min().unwrap_or(0);
    verdict(problems, format!("10 rows hit at {}, fewest hits {least}, 0 unclassified", run.label()))
}

fn criterion_5(runs: &[Run]) -> Result<String, String> {
    let problems: Vec<String> = runs
        .iter()
        .filter(|r| r.processes <= 3)
        .filter(|r| r.report.oracle("queue-linearizability").map_or(true, |o| !o.ok))
        .map(|r| format!("{} queue results diverge", r.label()))
        .collect();
    verdict(problems, "queue commits match a sequential FIFO for N<=3".into())
}

fn criterion_6() -> Result<String, String> {
    let mut caught = Vec::new();
    let mut problems = Vec::new();
    for variant in [Variant::BlindOwnerStore, Variant::SingleScheduleCas, Variant::GrantWhileUnscheduled] {
        let report = explore(&ExploreConfig::new(2, 1).with_variant(variant)).map_err(|e| e.to_string())?;
        let names: Vec<&str> = report.violations().iter().map(|o| o.name.as_str()).collect();
        if names.is_empty() {
            problems.push(format!("{} undetected", variant.name()));
        }
        if variant == Variant::GrantWhileUnscheduled && !names.contains(&"spurious-schedule") {
            problems.push("grant-while-unscheduled not flagged as a spurious schedule".into());
        }
        caught.push(format!("{} by {}", variant.name(), names.join("+")));
    }
    verdict(problems, caught.join("; "))
}

fn criterion_7() -> Result<String, String> {
    let mut problems = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 0..20 {
        let report = stress::run(&StressConfig::new(8, 10_000, 4, seed)).map_err(|e| e.to_string())?;
        let elapsed = Duration::from_millis(report.elapsed_ms);
        slowest = slowest.max(elapsed);
        if !report.passed() || report.counter != 80_000 || elapsed > Duration::from_secs(60) {
            problems.push(format!("seed {seed}: counter {}, faults {:?}, {:.1?}", report.counter, report.faults, elapsed));
        }
    }
    verdict(problems, format!("20 seeds reach 80000, slowest {slowest:.1?}"))
}

fn criterion_8(runs: &[Run]) -> Result<String, String> {
    let substitutes = ["automaton", "deadlock", "divergence", "exclusion-window"];
    let problems: Vec<String> = runs
        .iter()
        .flat_map(|r| {
            substitutes
                .iter()
                .filter(|n| r.report.oracle(n).map_or(true, |o| !o.ok))
                .map(move |n| format!("{} {n} failed", r.label()))
        })
        .collect();
    verdict(problems, "substituted: trace conformance, enabledness and exclusion window hold".into())
}

fn verdict(problems: Vec<String>, ok: String) -> Result<String, String> {
    if problems.is_empty() {
        Ok(ok)
    } else {
        Err(problems.join("; "))
    }
}

fn main() {
    let runs = explore_all();
    let results: Vec<(u8, Result<String, String>)> = vec![
        (1, criterion_1(&runs)),
        (2, criterion_2()),
        (3, criterion_3(&runs)),
        (4, criterion_4(&runs)),
        (5, criterion_5(&runs)),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8(&runs)),
    ];
    let mut unexpected = 0;
    for (id, result) in &results {
        let known = KNOWN_FAILURES.contains(id);
        match result {
            Ok(detail) => {
                println!("criterion {id}: PASS {detail}");
                if known {
                    println!("criterion {id}: listed as a known failure but passed");
                    unexpected += 1;
                }
            }
            Err(detail) => {
                println!("criterion {id}: FAIL{} {detail}", if known { " (known)" } else { "" });
                if !known {
                    unexpected += 1;
                }
            }
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
