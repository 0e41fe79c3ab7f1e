//! Real-thread stress run: N processes take the mutex I times each on `k`
//! runners and bump a counter that only the mutex protects.

use std::fmt;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::instrumentation::{CasLedger, ScenarioRow, Spread};
use crate::protocol::{ClaimMutex, Variant, YieldStatus};
use crate::scheduler::{Context, ProcessBody, RunStats, Runtime, Yield};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StressConfig {
    pub processes: u32,
    pub iterations: u64,
    pub runners: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Chance, in percent, of yielding at each yield point.
    pub yield_percent: u8,
    pub deadline: Duration,
}

impl StressConfig {
    pub fn new(processes: u32, iterations: u64, runners: usize, seed: u64) -> Self {
        StressConfig {
            processes,
            iterations,
            runners,
            seed,
            variant: Variant::Faithful,
            yield_percent: 20,
            deadline: Duration::from_secs(60),
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_deadline(mut self, deadline: Duration) -> Self {
        self.deadline = deadline;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub config: StressConfig,
    pub counter: u64,
    pub expected: u64,
    /// Times a process entered while another was inside.
    pub overlaps: u64,
    /// Contract errors and runtime faults, first one per process.
    pub faults: Vec<String>,
    pub slices: u64,
    pub parks: u64,
    pub early_wakes: u64,
    pub redundant_wakes: u64,
    pub scenarios: Vec<ScenarioRow>,
    pub release_cas: Spread,
    pub unclassified_claims: u64,
    pub elapsed_ms: u64,
}

impl StressReport {
    pub fn passed(&self) -> bool {
        self.counter == self.expected && self.overlaps == 0 && self.faults.is_empty() && self.unclassified_claims == 0
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for StressReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "stress: {} processes x {} iterations on {} runners, seed {}, {} protocol",
            c.processes,
            c.iterations,
            c.runners,
            c.seed,
            c.variant.name()
        )?;
        writeln!(f, "counter {} (expected {}), overlaps {}", self.counter, self.expected, self.overlaps)?;
        writeln!(
            f,
            "slices {}, parks {}, early wakes {}, redundant wakes {}, {} ms",
            self.slices, self.parks, self.early_wakes, self.redundant_wakes, self.elapsed_ms
        )?;
        for row in self.scenarios.iter().filter(|r| r.hits > 0) {
            let t = row.total.unwrap_or_default();
            writeln!(f, "  ({:>2}) {:<28} {:>8} claims, all CAS {}..{}", row.id, row.name, row.hits, t.min, t.max)?;
        }
        for fault in &self.faults {
            writeln!(f, "fault: {fault}")?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

struct Shared {
    counter: AtomicU64,
    inside: AtomicU32,
    overlaps: AtomicU64,
}

enum Phase {
    Claim,
    Wait,
    /// Inside; `read` is set once the counter was loaded.
    Critical { read: Option<u64> },
    Release,
}

struct Worker<'a> {
    mutex: &'a ClaimMutex,
    shared: &'a Shared,
    ledger: &'a Mutex<CasLedger>,
    rng: StdRng,
    yield_percent: u8,
    left: u64,
    phase: Phase,
}

impl Worker<'_> {
    fn coin(&mut self) -> bool {
        self.rng.gen_range(0..100) < self.yield_percent
    }

    fn enter(&self) {
        if self.shared.inside.fetch_add(1, Ordering::SeqCst) != 0 {
            self.shared.overlaps.fetch_add(1, Ordering::SeqCst);
        }
    }
}

impl ProcessBody for Worker<'_> {
    fn run(&mut self, cx: &Context<'_>) -> crate::Result<Yield> {
        let pid = cx.pid();
        let mut ledger = self.ledger.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            match self.phase {
                Phase::Claim => {
                    if self.left == 0 {
                        return Ok(Yield::Done);
                    }
                    let granted = self.mutex.claim_traced(pid, cx.hooks(), &mut *ledger)?.granted;
                    if granted {
                        self.enter();
                        self.phase = Phase::Critical { read: None };
                    } else {
                        self.phase = Phase::Wait;
                    }
                }
                Phase::Wait => match self.mutex.yield_traced(pid, cx.hooks(), &mut *ledger)? {
                    YieldStatus::Resumed => {
                        self.enter();
                        self.phase = Phase::Critical { read: None };
                    }
                    YieldStatus::Parked => return Ok(Yield::Park),
                },
                Phase::Critical { read: None } => {
                    // a plain load and store: lost updates show up if exclusion breaks
                    self.phase = Phase::Critical { read: Some(self.shared.counter.load(Ordering::Relaxed)) };
                    if self.coin() {
                        return Ok(Yield::Again);
                    }
                }
                Phase::Critical { read: Some(v) } => {
                    self.shared.counter.store(v + 1, Ordering::Relaxed);
                    self.shared.inside.fetch_sub(1, Ordering::SeqCst);
                    self.phase = Phase::Release;
                }
                Phase::Release => {
                    self.mutex.release_traced(pid, cx.hooks(), &mut *ledger)?;
                    self.left -= 1;
                    self.phase = Phase::Claim;
                    if self.coin() {
                        return Ok(Yield::Again);
                    }
                }
            }
        }
    }
}

/// Runs one stress round. Faults are reported, not returned.
pub fn run(config: &StressConfig) -> crate::Result<StressReport> {
    let mutex = ClaimMutex::with_variant(config.processes, config.variant)?;
    let shared = Shared { counter: AtomicU64::new(0), inside: AtomicU32::new(0), overlaps: AtomicU64::new(0) };
    let ledgers: Vec<Mutex<CasLedger>> = (0..config.processes).map(|_| Mutex::new(CasLedger::new())).collect();
    let started = Instant::now();
    let mutex_ref = &mutex;
    let mut rt = Runtime::new().with_deadline(config.deadline).with_diagnostics(move || {
        let mut s = format!("  owner {}, wait queue {:?}\n", mutex_ref.owner(), mutex_ref.queue_snapshot());
        for i in 0..mutex_ref.capacity() {
            let pid = crate::protocol::ProcessId::from_index(i as usize);
            if let Ok(state) = mutex_ref.state(pid) {
                s.push_str(&format!("  {pid} state {state}\n"));
            }
        }
        s
    });
    for (i, ledger) in ledgers.iter().enumerate() {
        rt.spawn(Worker {
            mutex: &mutex,
            shared: &shared,
            ledger,
            rng: StdRng::seed_from_u64(config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i as u64),
            yield_percent: config.yield_percent,
            left: config.iterations,
            phase: Phase::Claim,
        });
    }
    let outcome = rt.run_to_completion(config.runners);
    let stats = match &outcome {
        Ok(s) => *s,
        Err(_) => rt.stats(),
    };
    let mut faults = Vec::new();
    if let Err(fault) = outcome {
        faults.push(fault.to_string());
    }
    drop(rt);
    let mut ledger = CasLedger::new();
    for l in &ledgers {
        ledger.merge(&l.lock().unwrap_or_else(|e| e.into_inner()));
    }
    faults.extend(ledger.faults.iter().map(|f| f.to_string()));
    let RunStats { slices, parks, early_wakes, redundant_wakes, .. } = stats;
    Ok(StressReport {
        config: *config,
        counter: shared.counter.load(Ordering::SeqCst),
        expected: u64::from(config.processes) * config.iterations,
        overlaps: shared.overlaps.load(Ordering::SeqCst),
        faults,
        slices,
        parks,
        early_wakes,
        redundant_wakes,
        scenarios: ledger.report(config.processes),
        release_cas: ledger.releases,
        unclassified_claims: ledger.unclassified,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_process_counts_every_iteration() {
        let r = run(&StressConfig::new(1, 500, 1, 7)).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.counter, 500);
        assert_eq!(r.parks, 0);
    }

    #[test]
    fn small_contended_run_is_exact() {
        let r = run(&StressConfig::new(4, 2_000, 3, 11)).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.counter, 8_000);
    }
}
