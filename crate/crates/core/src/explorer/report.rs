use std::fmt;

use serde::{Deserialize, Serialize};

use crate::instrumentation::{ScenarioRow, Spread};
use crate::protocol::Variant;
use crate::trace::TraceEvent;

/// Version tag leading every serialized report.
pub const SCHEMA: &str = "claimlock.report/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub processes: u32,
    pub cycles: u32,
    pub variant: Variant,
    pub max_states: Option<u64>,
}

/// A schedule that drives the model into a violation, with its events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub detail: String,
    /// Process ids in the order they stepped.
    pub schedule: Vec<u32>,
    pub trace: Vec<TraceEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub name: String,
    pub description: String,
    pub ok: bool,
    pub counterexample: Option<Counterexample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadRecord {
    pub count: u64,
    pub min: u32,
    pub max: u32,
    pub mean: f64,
}

impl From<&Spread> for SpreadRecord {
    fn from(s: &Spread) -> Self {
        SpreadRecord { count: s.count, min: s.min, max: s.max, mean: s.mean() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessTrace {
    pub schedule: Vec<u32>,
    /// Order in which processes entered the critical section.
    pub entry_order: Vec<u32>,
    pub events: Vec<TraceEvent>,
}

/// Two runs with the same claim order and different entry orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NondeterminismWitness {
    pub begin_order: Vec<u32>,
    pub first: WitnessTrace,
    pub second: WitnessTrace,
}

/// Machine-readable result of one exploration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub schema: String,
    pub config: ReportConfig,
    /// False if the state budget ran out.
    pub complete: bool,
    pub states: u64,
    pub transitions: u64,
    /// Complete interleavings; exact below 2^53.
    pub paths: f64,
    pub max_depth: u64,
    pub oracles: Vec<OracleRecord>,
    pub scenarios: Vec<ScenarioRow>,
    pub unclassified_claims: u64,
    pub release_cas: SpreadRecord,
    pub max_link_retries: u32,
    pub nondeterminism: Option<NondeterminismWitness>,
}

impl ExplorationReport {
    pub fn violations(&self) -> Vec<&OracleRecord> {
        self.oracles.iter().filter(|o| !o.ok).collect()
    }

    pub fn oracle(&self, name: &str) -> Option<&OracleRecord> {
        self.oracles.iter().find(|o| o.name == name)
    }

    /// 0 clean, 1 violation, 2 budget exhausted.
    pub fn exit_code(&self) -> i32 {
        if !self.violations().is_empty() {
            1
        } else if !self.complete {
            2
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The CAS table with a PASS/FAIL verdict per scenario.
    pub fn cas_table(&self) -> String {
        let mut s = format!(
            "{:<4} {:<28} {:>9} {:>4} {:>4} {:>5} {:>7} {:>9} {:>12}  {}\n",
            "row", "scenario", "hits", "min", "max", "mean", "retries", "all CAS", "reference", "verdict"
        );
        for r in &self.scenarios {
            let num = |v: Option<u32>| v.map_or("-".to_string(), |v| v.to_string());
            let reference = if r.reference.max.is_some() {
                r.reference.to_string()
            } else {
                format!("{}..{}*", r.bound.min, r.bound.max.unwrap_or(0))
            };
            let verdict = match r.within {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "not hit",
            };
            let all = r.total.map_or("-".to_string(), |t| format!("{}..{}", t.min, t.max));
            s.push_str(&format!(
                "({:>2}) {:<28} {:>9} {:>4} {:>4} {:>5} {:>7} {:>9} {:>12}  {}\n",
                r.id,
                r.name,
                r.hits,
                num(r.min),
                num(r.max),
                r.mean.map_or("-".to_string(), |m| format!("{m:.2}")),
                num(r.max_link_retries),
                all,
                reference,
                verdict
            ));
        }
        s.push_str("counted: owner and state CASes plus the enqueue's link and own tail swing\n");
        s.push_str("retries: most link CASes one claim lost; all CAS: every CAS including helps\n");
        s.push_str("* open-ended maximum, checked on counted plus lost link CASes\n");
        s
    }
}

impl fmt::Display for ExplorationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "explore: {} processes, {} cycles, {} protocol", c.processes, c.cycles, c.variant.name())?;
        writeln!(
            f,
            "{} states, {} transitions, {:.4e} paths, depth {}{}",
            self.states,
            self.transitions,
            self.paths,
            self.max_depth,
            if self.complete { "" } else { " (INCOMPLETE: state budget exhausted)" }
        )?;
        for o in &self.oracles {
            writeln!(f, "  {:<4} {:<24} {}", if o.ok { "ok" } else { "FAIL" }, o.name, o.description)?;
            if let Some(cx) = &o.counterexample {
                writeln!(f, "       {}", cx.detail)?;
                let schedule: Vec<String> = cx.schedule.iter().map(|p| format!("p{p}")).collect();
                writeln!(f, "       schedule: {}", schedule.join(" "))?;
                for ev in &cx.trace {
                    writeln!(f, "         {ev}")?;
                }
            }
        }
        writeln!(f, "claims unclassified: {}", self.unclassified_claims)?;
        writeln!(f, "longest enqueue retry chain: {}", self.max_link_retries)?;
        writeln!(
            f,
            "release CAS: min {} max {} mean {:.2}",
            self.release_cas.min, self.release_cas.max, self.release_cas.mean
        )?;
        f.write_str(&self.cas_table())?;
        if let Some(w) = &self.nondeterminism {
            let order = |v: &[u32]| v.iter().map(|p| format!("p{p}")).collect::<Vec<_>>().join(" ");
            writeln!(f, "nondeterminism: claims begun in order {}", order(&w.begin_order))?;
            writeln!(f, "  run A enters {}  (schedule {})", order(&w.first.entry_order), order(&w.first.schedule))?;
            writeln!(f, "  run B enters {}  (schedule {})", order(&w.second.entry_order), order(&w.second.schedule))?;
        }
        Ok(())
    }
}
