//! Traces: parsing the line-oriented trace format and folding operations
//! through the monitor.
//!
//! ```text
//! # boot header
//! init subject os
//! init ram ram0 dram:0x0 0x100000
//! init acm os ram0 grant
//! # operations
//! retype os ram0 Frame 0x0 0x1000 f0
//! retype os ram0 TStructure 0x1000 0x1000 pt0
//! derive os pt0 0x1000 vspace
//! map os vspace 0x4000 0x1000 f0 0x0 m0
//! ```
//!
//! Names in the header are always node-qualified (`node:addr`). `modify`
//! takes groups of `<dst-hex> <size-hex> <oid> <obj-offset-hex> <mid>`.

use std::fmt;

use thiserror::Error;

use crate::authority::{parse_rights, Authority, ObjectId, Rights, SubjectId};
use crate::decoding_net::facts::{is_ident, parse_hex};
use crate::decoding_net::{AddressRange, Name};

use super::{MonitorError, MonitorState, ObjectType, Operation, RamRoot, Replacement};

/// Outcome of folding a trace through the monitor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Valid(MonitorState),
    /// `index` is the position of the first failing operation; `state` is
    /// the state just before it.
    Rejected {
        index: usize,
        error: MonitorError,
        state: MonitorState,
    },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid(_))
    }

    pub fn state(&self) -> &MonitorState {
        match self {
            Verdict::Valid(st) | Verdict::Rejected { state: st, .. } => st,
        }
    }
}

pub fn run_trace(st0: &MonitorState, ops: &[Operation]) -> Verdict {
    let mut st = st0.clone();
    for (index, op) in ops.iter().enumerate() {
        match st.apply(op) {
            Ok(next) => st = next,
            Err(error) => {
                return Verdict::Rejected {
                    index,
                    error,
                    state: st,
                }
            }
        }
    }
    Verdict::Valid(st)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitLine {
    Subject(SubjectId),
    Ram(RamRoot),
    Acm(SubjectId, ObjectId, Rights),
}

/// A parsed trace file. Every entry keeps its 1-based source line.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceFile {
    pub init: Vec<(usize, InitLine)>,
    pub ops: Vec<(usize, Operation)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct TraceError {
    pub line: usize,
    pub msg: String,
}

/// Verdict of a whole trace file, reported by source line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FileVerdict {
    Valid(MonitorState),
    Rejected {
        line: usize,
        error: MonitorError,
        state: MonitorState,
    },
}

impl FileVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, FileVerdict::Valid(_))
    }

    pub fn state(&self) -> &MonitorState {
        match self {
            FileVerdict::Valid(st) | FileVerdict::Rejected { state: st, .. } => st,
        }
    }

    pub fn rejected_line(&self) -> Option<usize> {
        match self {
            FileVerdict::Valid(_) => None,
            FileVerdict::Rejected { line, .. } => Some(*line),
        }
    }

    pub fn error(&self) -> Option<&MonitorError> {
        match self {
            FileVerdict::Valid(_) => None,
            FileVerdict::Rejected { error, .. } => Some(error),
        }
    }
}

impl fmt::Display for FileVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FileVerdict::Valid(_) => f.write_str("VALID"),
            FileVerdict::Rejected { line, error, .. } => {
                write!(f, "REJECTED {line} {}", error.code())
            }
        }
    }
}

impl TraceFile {
    pub fn parse(text: &str) -> Result<TraceFile, TraceError> {
        let mut out = TraceFile::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            let words: Vec<&str> = content.split_whitespace().collect();
            let Some(&head) = words.first() else { continue };
            let err = |msg: String| TraceError { line, msg };
            if head == "init" {
                if !out.ops.is_empty() {
                    return Err(err("init lines must precede all operations".into()));
                }
                out.init.push((line, parse_init(&words[1..]).map_err(err)?));
            } else {
                out.ops.push((line, parse_op(&words).map_err(err)?));
            }
        }
        Ok(out)
    }

    /// Boots from `base` (normally an empty state over the platform) using
    /// the header, then runs the operations.
    pub fn execute(&self, base: MonitorState) -> FileVerdict {
        let mut st = base;
        for (line, init) in &self.init {
            let next = match init {
                InitLine::Subject(s) => st.add_subject(s.clone()),
                InitLine::Ram(root) => st.add_ram_root(root.clone()),
                InitLine::Acm(s, o, rights) => st.set_rights(s, o, rights.clone()),
            };
            match next {
                Ok(n) => st = n,
                Err(error) => {
                    return FileVerdict::Rejected {
                        line: *line,
                        error,
                        state: st,
                    }
                }
            }
        }
        let ops: Vec<Operation> = self.ops.iter().map(|(_, op)| op.clone()).collect();
        match run_trace(&st, &ops) {
            Verdict::Valid(st) => FileVerdict::Valid(st),
            Verdict::Rejected { index, error, state } => FileVerdict::Rejected {
                line: self.ops[index].0,
                error,
                state,
            },
        }
    }

    pub fn operations(&self) -> Vec<Operation> {
        self.ops.iter().map(|(_, op)| op.clone()).collect()
    }
}

impl fmt::Display for InitLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitLine::Subject(s) => write!(f, "init subject {s}"),
            InitLine::Ram(r) => write!(f, "init ram {} {} {:#x}", r.oid, r.base, r.size),
            InitLine::Acm(s, o, rights) => {
                write!(f, "init acm {s} {o} {}", crate::authority::format_rights(rights))
            }
        }
    }
}

/// Renders a trace file back to text; parsing the result yields the same
/// header and operations (line numbers aside).
impl fmt::Display for TraceFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (_, i) in &self.init {
            writeln!(f, "{i}")?;
        }
        for (_, op) in &self.ops {
            writeln!(f, "{op}")?;
        }
        Ok(())
    }
}

fn ident(s: &str) -> Result<&str, String> {
    if is_ident(s) {
        Ok(s)
    } else {
        Err(format!("bad identifier `{s}`"))
    }
}

fn hex(s: &str) -> Result<u64, String> {
    parse_hex(s).ok_or_else(|| format!("expected hex number, got `{s}`"))
}

fn range(base: &str, size: &str) -> Result<AddressRange, String> {
    AddressRange::new(hex(base)?, hex(size)?).map_err(|e| e.to_string())
}

fn qualified(s: &str) -> Result<Name, String> {
    let (node, addr) = s
        .split_once(':')
        .ok_or_else(|| format!("`{s}` is not a node-qualified name"))?;
    Ok(Name::new(ident(node)?, hex(addr)?))
}

fn arity(words: &[&str], n: usize) -> Result<(), String> {
    if words.len() == n {
        Ok(())
    } else {
        Err(format!(
            "`{}` takes {} fields, got {}",
            words[0],
            n - 1,
            words.len() - 1
        ))
    }
}

fn parse_init(words: &[&str]) -> Result<InitLine, String> {
    match words {
        ["subject", s] => Ok(InitLine::Subject(ident(s)?.into())),
        ["ram", oid, base, size] => Ok(InitLine::Ram(RamRoot {
            oid: ident(oid)?.into(),
            base: qualified(base)?,
            size: hex(size)?,
        })),
        ["acm", s, o, rights] => Ok(InitLine::Acm(
            ident(s)?.into(),
            ident(o)?.into(),
            parse_rights(rights).map_err(|e| e.to_string())?,
        )),
        ["acm", s, o] => Ok(InitLine::Acm(ident(s)?.into(), ident(o)?.into(), Rights::new())),
        _ => Err(format!("malformed init line `init {}`", words.join(" "))),
    }
}

fn parse_op(w: &[&str]) -> Result<Operation, String> {
    match w[0] {
        "retype" => {
            arity(w, 7)?;
            Ok(Operation::Retype {
                subject: ident(w[1])?.into(),
                parent: ident(w[2])?.into(),
                new_type: w[3].parse::<ObjectType>()?,
                offset: hex(w[4])?,
                size: hex(w[5])?,
                new_oid: ident(w[6])?.into(),
            })
        }
        "derive" => {
            arity(w, 5)?;
            Ok(Operation::Derive {
                subject: ident(w[1])?.into(),
                tstruct: ident(w[2])?.into(),
                granularity: hex(w[3])?,
                asid: ident(w[4])?.into(),
            })
        }
        "map" => {
            arity(w, 8)?;
            Ok(Operation::Map {
                subject: ident(w[1])?.into(),
                asid: ident(w[2])?.into(),
                dst: range(w[3], w[4])?,
                oid: ident(w[5])?.into(),
                obj_offset: hex(w[6])?,
                mid: ident(w[7])?.into(),
            })
        }
        "unmap" => {
            arity(w, 3)?;
            Ok(Operation::Unmap {
                subject: ident(w[1])?.into(),
                mid: ident(w[2])?.into(),
            })
        }
        "copy" => {
            arity(w, 5)?;
            Ok(Operation::Copy {
                from: ident(w[1])?.into(),
                to: ident(w[2])?.into(),
                oid: ident(w[3])?.into(),
                authority: w[4].parse::<Authority>().map_err(|e| e.to_string())?,
            })
        }
        "revoke" => {
            arity(w, 3)?;
            Ok(Operation::Revoke {
                subject: ident(w[1])?.into(),
                oid: ident(w[2])?.into(),
            })
        }
        "modify" => {
            if w.len() < 3 || !(w.len() - 3).is_multiple_of(5) {
                return Err("`modify` takes a subject, a space and groups of 5 fields".into());
            }
            let replacements = w[3..]
                .chunks(5)
                .map(|c| {
                    Ok(Replacement {
                        dst: range(c[0], c[1])?,
                        obj: ident(c[2])?.into(),
                        obj_offset: hex(c[3])?,
                        mid: ident(c[4])?.into(),
                    })
                })
                .collect::<Result<_, String>>()?;
            Ok(Operation::ModifyMap {
                subject: ident(w[1])?.into(),
                asid: ident(w[2])?.into(),
                replacements,
            })
        }
        other => Err(format!("unknown operation `{other}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_ops_with_line_numbers() {
        let text = "# c\ninit subject os\ninit ram r dram:0x0 0x2000\ninit acm os r grant\n\nretype os r Frame 0x0 0x1000 f # tail\n";
        let t = TraceFile::parse(text).unwrap();
        assert_eq!(t.init.len(), 3);
        assert_eq!(t.ops.len(), 1);
        assert_eq!(t.ops[0].0, 6);
    }

    #[test]
    fn unqualified_ram_base_is_a_parse_error() {
        let e = TraceFile::parse("init ram r 0x0 0x1000").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.msg.contains("node-qualified"));
    }

    #[test]
    fn rejects_init_after_ops_and_bad_arity() {
        assert!(TraceFile::parse("unmap os m\ninit subject a").is_err());
        assert!(TraceFile::parse("unmap os").is_err());
        assert!(TraceFile::parse("map os v 0x0 0x1000 f 0 m").is_err());
        assert!(TraceFile::parse("frobnicate x").is_err());
        assert!(TraceFile::parse("modify os v 0x0 0x1000 f").is_err());
    }

    #[test]
    fn display_round_trips() {
        let text = "init subject os\ninit ram r dram:0x0 0x2000\ninit acm os r grant,grant:map\n\
                    retype os r Frame 0x0 0x1000 f\nderive os t 0x1000 v\nmap os v 0x0 0x1000 f 0x0 m\n\
                    unmap os m\ncopy os b f grant:access\nrevoke os f\nmodify os v 0x0 0x1000 f 0x0 m1 0x1000 0x1000 f 0x0 m2\n";
        let t = TraceFile::parse(text).unwrap();
        let again = TraceFile::parse(&t.to_string()).unwrap();
        assert_eq!(t.operations(), again.operations());
        let strip = |t: &TraceFile| t.init.iter().map(|(_, i)| i.clone()).collect::<Vec<_>>();
        assert_eq!(strip(&t), strip(&again));
    }
}
