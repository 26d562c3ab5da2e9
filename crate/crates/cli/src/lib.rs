//! The `addrmon` command line.
//!
//! Every subcommand that needs a platform takes the description file as its
//! first positional argument, or `--topology <name>` in its place.
//!
//! Exit codes: 0 on success, 1 when a trace, query or corpus run is
//! rejected, 2 on usage, I/O or parse errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use addrmon::bug_corpus::{self, Scenario, ScenarioReport};
use addrmon::decoding_net::{NodeId, Platform};
use addrmon::monitor::trace::{FileVerdict, TraceFile};
use addrmon::monitor::MonitorState;
use addrmon::platform_dsl::{
    builtin_topology, compile, compile_str, emit_facts, emit_simulator_config, emit_translation_table, Topology,
};
use addrmon::query::{dn_resolve_range, flatten, QueryError};

#[derive(Debug, Parser)]
#[command(
    name = "addrmon",
    version,
    about = "Address-space model, reference monitor and platform compiler"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Facts)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Facts,
    Json,
}

#[derive(Debug, Args)]
pub struct PlatformArgs {
    /// Use a built-in two-core topology instead of a description file.
    #[arg(long, value_parser = parse_topology)]
    pub topology: Option<Topology>,
    /// Shared DRAM size of the built-in topology.
    #[arg(long, value_parser = parse_num, default_value = "0x10000")]
    pub dram_size: u64,
    /// Per-core private memory size of the built-in topology.
    #[arg(long, value_parser = parse_num, default_value = "0x4000")]
    pub private_size: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a trace through the monitor: [PLATFORM] TRACE
    Check {
        #[command(flatten)]
        platform: PlatformArgs,
        #[arg(num_args = 1..=2, required = true)]
        inputs: Vec<PathBuf>,
        /// Disable the monitor's authority guards (testing only).
        #[cfg(feature = "unsafe-no-guards")]
        #[arg(long)]
        unsafe_no_guards: bool,
    },
    /// Resolve a local range to canonical ranges: [PLATFORM] NODE ADDR SIZE
    Resolve {
        #[command(flatten)]
        platform: PlatformArgs,
        #[arg(num_args = 3..=4, required = true)]
        inputs: Vec<String>,
    },
    /// Plan which configurable spaces to program: [PLATFORM] SRC DST
    Query {
        #[command(flatten)]
        platform: PlatformArgs,
        #[arg(num_args = 2..=3, required = true)]
        inputs: Vec<String>,
    },
    /// Generate facts, translation tables or a simulator config: [PLATFORM]
    Gen {
        #[command(flatten)]
        platform: PlatformArgs,
        #[arg(num_args = 0..=1)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = GenKind::Facts)]
        emit: GenKind,
        /// Restrict `--emit tables` to these nodes (default: every node).
        #[arg(long = "node")]
        nodes: Vec<String>,
    },
    /// Run the vulnerability corpus (default: the shipped one).
    Corpus {
        dir: Option<PathBuf>,
        /// Disable the guards and expect no scenario to be stopped.
        #[cfg(feature = "unsafe-no-guards")]
        #[arg(long)]
        unsafe_no_guards: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Facts,
    Tables,
    Simconfig,
}

/// Result of a successfully executed command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Rejected,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Rejected => 1,
        }
    }
}

/// Exit code for errors that prevent a command from running.
pub const EXIT_USAGE: u8 = 2;

fn parse_topology(s: &str) -> Result<Topology, String> {
    s.parse()
}

fn parse_num(s: &str) -> Result<u64, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    r.map_err(|e| format!("bad number `{s}`: {e}"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Splits off the platform positional unless `--topology` stands in for it.
fn load_platform<T: AsRef<str> + Clone>(args: &PlatformArgs, inputs: &[T], rest: usize) -> Result<(Platform, Vec<T>)> {
    match (args.topology, inputs.len() == rest + 1) {
        (Some(_), true) => bail!("give either a platform file or --topology, not both"),
        (Some(t), false) => {
            let ast = builtin_topology(t, args.dram_size, args.private_size)?;
            Ok((compile(&ast)?, inputs.to_vec()))
        }
        (None, true) => {
            let path = Path::new(inputs[0].as_ref());
            let platform = compile_str(&read(path)?).with_context(|| path.display().to_string())?;
            Ok((platform, inputs[1..].to_vec()))
        }
        (None, false) => bail!("missing platform file (or --topology)"),
    }
}

fn path_strings(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.to_string_lossy().into_owned()).collect()
}

/// Runs `cli`, writing the command output to `--out` or `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<Outcome> {
    let (text, outcome) = execute(cli)?;
    match &cli.out {
        Some(p) => fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(outcome)
}

fn execute(cli: &Cli) -> Result<(String, Outcome)> {
    let json = cli.format == Format::Json;
    match &cli.command {
        #[cfg(feature = "unsafe-no-guards")]
        Command::Check {
            platform,
            inputs,
            unsafe_no_guards,
        } => check(platform, inputs, json, *unsafe_no_guards),
        #[cfg(not(feature = "unsafe-no-guards"))]
        Command::Check { platform, inputs } => check(platform, inputs, json, false),
        Command::Resolve { platform, inputs } => resolve(platform, inputs, json),
        Command::Query { platform, inputs } => query(platform, inputs, json),
        Command::Gen {
            platform,
            inputs,
            emit,
            nodes,
        } => gen(platform, inputs, *emit, nodes, json),
        #[cfg(feature = "unsafe-no-guards")]
        Command::Corpus { dir, unsafe_no_guards } => corpus(dir.as_deref(), json, *unsafe_no_guards),
        #[cfg(not(feature = "unsafe-no-guards"))]
        Command::Corpus { dir } => corpus(dir.as_deref(), json, false),
    }
}

fn check(args: &PlatformArgs, inputs: &[PathBuf], json: bool, no_guards: bool) -> Result<(String, Outcome)> {
    let (platform, rest) = load_platform(args, &path_strings(inputs), 1)?;
    let trace_path = Path::new(&rest[0]);
    let trace = TraceFile::parse(&read(trace_path)?).with_context(|| trace_path.display().to_string())?;
    let verdict = trace.execute(initial_state(platform, no_guards));
    let outcome = if verdict.is_valid() {
        Outcome::Success
    } else {
        Outcome::Rejected
    };
    let text = if json {
        let v = match &verdict {
            FileVerdict::Valid(_) => json!({ "verdict": "VALID" }),
            FileVerdict::Rejected { line, error, .. } => json!({
                "verdict": "REJECTED",
                "line": line,
                "code": error.code(),
                "message": error.to_string(),
            }),
        };
        format!("{v}\n")
    } else {
        let mut s = format!("{verdict}\n");
        if let Some(e) = verdict.error() {
            s.push_str(&format!("# {e}\n"));
        }
        s
    };
    Ok((text, outcome))
}

fn initial_state(platform: Platform, no_guards: bool) -> MonitorState {
    let st = MonitorState::new(Arc::new(platform));
    #[cfg(feature = "unsafe-no-guards")]
    if no_guards {
        return st.with_guards_disabled();
    }
    debug_assert!(!no_guards);
    st
}

fn resolve(args: &PlatformArgs, inputs: &[String], json: bool) -> Result<(String, Outcome)> {
    let (platform, rest) = load_platform(args, inputs, 3)?;
    let node = NodeId::new(rest[0].as_str());
    let addr = parse_num(&rest[1]).map_err(|e| anyhow!(e))?;
    let size = parse_num(&rest[2]).map_err(|e| anyhow!(e))?;
    match dn_resolve_range(&platform.net, &node, addr, size, None) {
        Ok(ranges) => {
            let text = if json {
                let v: Vec<Value> = ranges
                    .iter()
                    .map(|c| json!({ "node": c.node.as_str(), "base": c.range.base(), "size": c.range.size() }))
                    .collect();
                format!("{}\n", Value::Array(v))
            } else {
                ranges
                    .iter()
                    .map(|c| format!("canonical({}, {:#x}, {:#x}).\n", c.node, c.range.base(), c.range.size()))
                    .collect()
            };
            Ok((text, Outcome::Success))
        }
        Err(QueryError::Net(e)) => {
            let text = if json {
                format!("{}\n", json!({ "error": e.code(), "message": e.to_string() }))
            } else {
                format!("unresolved({node}, {addr:#x}, {size:#x}, {}).\n# {e}\n", e.code())
            };
            Ok((text, Outcome::Rejected))
        }
        Err(e) => Err(e.into()),
    }
}

fn query(args: &PlatformArgs, inputs: &[String], json: bool) -> Result<(String, Outcome)> {
    let (platform, rest) = load_platform(args, inputs, 2)?;
    let graph = flatten(&platform.net, &platform.conf);
    let (src, dst) = (NodeId::new(rest[0].as_str()), NodeId::new(rest[1].as_str()));
    match graph.config_nodes(&src, &dst) {
        Ok(plan) => {
            let text = if json {
                let steps: Vec<Value> = plan
                    .steps
                    .iter()
                    .map(|s| json!({ "space": s.space.as_str(), "via": s.via.as_str() }))
                    .collect();
                let path: Vec<&str> = plan.path.iter().map(NodeId::as_str).collect();
                format!(
                    "{}\n",
                    json!({ "src": plan.src.as_str(), "dst": plan.dst.as_str(), "steps": steps, "path": path })
                )
            } else {
                format!("{plan}\n")
            };
            Ok((text, Outcome::Success))
        }
        Err(e @ QueryError::Unreachable { .. }) => {
            let text = if json {
                format!("{}\n", json!({ "error": "Unreachable", "message": e.to_string() }))
            } else {
                format!("unreachable({src},{dst}).\n")
            };
            Ok((text, Outcome::Rejected))
        }
        Err(e) => Err(e.into()),
    }
}

fn gen(
    args: &PlatformArgs,
    inputs: &[PathBuf],
    kind: GenKind,
    nodes: &[String],
    json: bool,
) -> Result<(String, Outcome)> {
    if json {
        bail!("`gen` emits line-oriented text only; drop --format json");
    }
    let (platform, _) = load_platform(args, &path_strings(inputs), 0)?;
    let text = match kind {
        GenKind::Facts => emit_facts(&platform.net, &platform.conf),
        GenKind::Simconfig => emit_simulator_config(&platform.net),
        GenKind::Tables => {
            let ids: Vec<NodeId> = if nodes.is_empty() {
                platform.net.nodes().map(|n| n.id.clone()).collect()
            } else {
                nodes.iter().map(|n| NodeId::new(n.as_str())).collect()
            };
            let mut out = String::new();
            for id in &ids {
                out.push_str(&emit_translation_table(&platform.net, id)?.to_string());
            }
            out
        }
    };
    Ok((text, Outcome::Success))
}

fn corpus(dir: Option<&Path>, json: bool, no_guards: bool) -> Result<(String, Outcome)> {
    let scenarios: Vec<Scenario> = match dir {
        Some(d) => bug_corpus::load_dir(d)?,
        None => bug_corpus::shipped(),
    };
    let reports: Vec<ScenarioReport> = if no_guards {
        #[cfg(feature = "unsafe-no-guards")]
        {
            bug_corpus::run_corpus_unguarded(&scenarios)
        }
        #[cfg(not(feature = "unsafe-no-guards"))]
        unreachable!("the flag only exists with the feature")
    } else {
        bug_corpus::run_corpus(&scenarios)
    };
    let passed = reports.iter().filter(|r| r.passed).count();
    let outcome = if passed == reports.len() {
        Outcome::Success
    } else {
        Outcome::Rejected
    };
    let text = if json {
        let rows: Vec<Value> = reports
            .iter()
            .map(|r| {
                json!({
                    "name": r.name,
                    "class": r.class.to_string(),
                    "passed": r.passed,
                    "verdict": r.verdict,
                    "diff": r.diff,
                })
            })
            .collect();
        format!(
            "{}\n",
            json!({ "passed": passed, "total": reports.len(), "scenarios": rows })
        )
    } else {
        let mut s: String = reports.iter().map(|r| format!("{r}\n")).collect();
        s.push_str(&format!("{passed}/{} passed\n", reports.len()));
        s
    };
    Ok((text, outcome))
}
