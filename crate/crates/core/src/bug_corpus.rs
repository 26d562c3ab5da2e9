//! Vulnerability-class scenarios.
//!
//! Each scenario is a platform description plus a trace that encodes a
//! structural analogue of a known memory-management bug. The monitor must
//! reject it at a given trace line with one of the expected error codes.
//!
//! ```text
//! name: own_page_table
//! class: Partitioning
//! expect: PartitioningViolation
//! line: 9
//! about: a process maps the page table backing its own address space
//! ---
//! module ... { ... }
//! ---
//! init subject app
//! ...
//! ```
//!
//! `expect` may list alternatives separated by `|`. `line` counts lines of
//! the trace section, starting at 1.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::monitor::trace::{FileVerdict, TraceError, TraceFile};
use crate::monitor::MonitorState;
use crate::platform_dsl::{compile_str, DslError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VulnClass {
    PolicyEnforcement,
    Partitioning,
    NameResolution,
}

impl VulnClass {
    pub const ALL: [VulnClass; 3] = [
        VulnClass::PolicyEnforcement,
        VulnClass::Partitioning,
        VulnClass::NameResolution,
    ];
}

impl fmt::Display for VulnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VulnClass::PolicyEnforcement => "PolicyEnforcement",
            VulnClass::Partitioning => "Partitioning",
            VulnClass::NameResolution => "NameResolution",
        })
    }
}

impl FromStr for VulnClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VulnClass::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| format!("unknown class `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{0}: malformed scenario: {1}")]
    Format(String, String),
    #[error("{0}: platform: {1}")]
    Platform(String, DslError),
    #[error("{0}: trace: {1}")]
    Trace(String, TraceError),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub class: VulnClass,
    pub expect: Vec<String>,
    /// Trace line the monitor must reject at.
    pub line: usize,
    pub about: String,
    pub platform: String,
    pub trace: String,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, CorpusError> {
        let mut parts = text.splitn(3, "\n---\n");
        let (Some(header), Some(platform), Some(trace)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(CorpusError::Format(
                "<scenario>".into(),
                "expected header, platform and trace separated by `---` lines".into(),
            ));
        };
        let mut name = None;
        let mut class = None;
        let mut expect = None;
        let mut line = None;
        let mut about = String::new();
        for l in header.lines() {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let Some((k, v)) = l.split_once(':') else {
                return Err(CorpusError::Format(
                    "<scenario>".into(),
                    format!("bad header line `{l}`"),
                ));
            };
            let v = v.trim();
            match k.trim() {
                "name" => name = Some(v.to_owned()),
                "class" => class = Some(v.parse::<VulnClass>()),
                "expect" => expect = Some(v.split('|').map(|c| c.trim().to_owned()).collect::<Vec<_>>()),
                "line" => line = v.parse::<usize>().ok(),
                "about" => about = v.to_owned(),
                other => {
                    return Err(CorpusError::Format(
                        "<scenario>".into(),
                        format!("unknown key `{other}`"),
                    ))
                }
            }
        }
        let name = name.ok_or_else(|| CorpusError::Format("<scenario>".into(), "missing `name`".into()))?;
        let missing = |what: &str| CorpusError::Format(name.clone(), format!("missing or bad `{what}`"));
        let class = class
            .ok_or_else(|| missing("class"))?
            .map_err(|e| CorpusError::Format(name.clone(), e))?;
        Ok(Scenario {
            class,
            expect: expect.filter(|e| !e.is_empty()).ok_or_else(|| missing("expect"))?,
            line: line.ok_or_else(|| missing("line"))?,
            about,
            platform: platform.to_owned(),
            trace: trace.to_owned(),
            name,
        })
    }

    /// Compiles the platform and parses the trace.
    pub fn prepare(&self) -> Result<(MonitorState, TraceFile), CorpusError> {
        let platform = compile_str(&self.platform).map_err(|e| CorpusError::Platform(self.name.clone(), e))?;
        let trace = TraceFile::parse(&self.trace).map_err(|e| CorpusError::Trace(self.name.clone(), e))?;
        Ok((MonitorState::new(Arc::new(platform)), trace))
    }

    fn rejected_as_expected(&self, v: &FileVerdict) -> bool {
        v.rejected_line() == Some(self.line) && v.error().is_some_and(|e| self.expect.iter().any(|c| c == e.code()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioReport {
    pub name: String,
    pub class: VulnClass,
    pub passed: bool,
    /// The verdict line as `addrmon check` prints it.
    pub verdict: String,
    /// What was expected, when the scenario failed.
    pub diff: Option<String>,
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} [{}] {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.class,
            self.verdict
        )?;
        if let Some(d) = &self.diff {
            write!(f, " ({d})")?;
        }
        Ok(())
    }
}

fn report(
    sc: &Scenario,
    verdict: Result<FileVerdict, CorpusError>,
    passed: impl Fn(&FileVerdict) -> bool,
    want: String,
) -> ScenarioReport {
    match verdict {
        Ok(v) => {
            let ok = passed(&v);
            ScenarioReport {
                name: sc.name.clone(),
                class: sc.class,
                passed: ok,
                verdict: v.to_string(),
                diff: (!ok).then_some(want),
            }
        }
        Err(e) => ScenarioReport {
            name: sc.name.clone(),
            class: sc.class,
            passed: false,
            verdict: "ERROR".into(),
            diff: Some(e.to_string()),
        },
    }
}

/// Runs a scenario under the enforcing monitor. Passes iff the trace is
/// rejected at the expected line with an expected code.
pub fn run_scenario(sc: &Scenario) -> ScenarioReport {
    let verdict = sc.prepare().map(|(st, trace)| trace.execute(st));
    report(
        sc,
        verdict,
        |v| sc.rejected_as_expected(v),
        format!("expected REJECTED {} {}", sc.line, sc.expect.join("|")),
    )
}

/// Runs a scenario with the monitor's authority guards switched off.
/// Passes iff the monitor does *not* reject at the guard point, showing
/// that the guard is what stops the scenario.
#[cfg(feature = "unsafe-no-guards")]
pub fn run_scenario_unguarded(sc: &Scenario) -> ScenarioReport {
    let verdict = sc.prepare().map(|(st, trace)| trace.execute(st.with_guards_disabled()));
    report(
        sc,
        verdict,
        |v| !sc.rejected_as_expected(v),
        format!("expected no rejection at line {}", sc.line),
    )
}

pub fn run_corpus(scenarios: &[Scenario]) -> Vec<ScenarioReport> {
    crate::par::map_slice(scenarios, run_scenario)
}

#[cfg(feature = "unsafe-no-guards")]
pub fn run_corpus_unguarded(scenarios: &[Scenario]) -> Vec<ScenarioReport> {
    crate::par::map_slice(scenarios, run_scenario_unguarded)
}

/// Loads every `*.scn` file of `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<Scenario>, CorpusError> {
    let io = |e| CorpusError::Io(dir.display().to_string(), e);
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| CorpusError::Io(p.display().to_string(), e))?;
            Scenario::parse(&text)
        })
        .collect()
}

macro_rules! shipped {
    ($($file:literal),* $(,)?) => {
        &[$(include_str!(concat!("../corpus/", $file))),*]
    };
}

const SHIPPED: &[&str] = shipped!(
    "policy_range_too_large.scn",
    "policy_foreign_frame.scn",
    "policy_driver_without_grant.scn",
    "partition_own_page_table.scn",
    "partition_dma_into_iommu.scn",
    "partition_copy_access.scn",
    "naming_core_local_root.scn",
    "naming_bus_window_root.scn",
    "naming_wrong_context.scn",
);

/// The corpus shipped with the library.
pub fn shipped() -> Vec<Scenario> {
    SHIPPED
        .iter()
        .map(|t| Scenario::parse(t).expect("shipped scenarios are well-formed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_parsing() {
        let sc = Scenario::parse(
            "name: x\nclass: Partitioning\nexpect: A | B\nline: 3\n---\nmodule m {}\n---\ninit subject s\n",
        )
        .unwrap();
        assert_eq!(sc.expect, vec!["A", "B"]);
        assert_eq!(sc.class, VulnClass::Partitioning);
        assert!(Scenario::parse("name: x\n---\nmodule m {}\n").is_err());
        assert!(Scenario::parse("name: x\nclass: Nope\nexpect: A\nline: 1\n---\n\n---\n").is_err());
        assert!(Scenario::parse("name: x\nclass: Partitioning\nline: 1\n---\n\n---\n").is_err());
    }

    #[test]
    fn shipped_corpus_covers_every_class() {
        let corpus = shipped();
        assert!(corpus.len() >= 9);
        for class in VulnClass::ALL {
            assert!(corpus.iter().filter(|s| s.class == class).count() >= 3, "{class}");
        }
    }

    #[test]
    fn validating_scenario_fails() {
        let sc = Scenario::parse(
            "name: benign\nclass: Partitioning\nexpect: PartitioningViolation\nline: 1\n---\nmodule m {}\n---\ninit subject s\n",
        )
        .unwrap();
        let r = run_scenario(&sc);
        assert!(!r.passed);
        assert_eq!(r.verdict, "VALID");
    }
}
