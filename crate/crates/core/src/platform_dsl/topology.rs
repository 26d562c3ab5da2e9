//! The four two-core reference topologies.
//!
//! * `Uniform`: both cores see DRAM identically at `[0, S)`.
//! * `Swapped`: core0 sees the two DRAM halves crossed, core1 does not.
//! * `Private`: as Uniform, plus a per-core memory at `[S, S + P)` that
//!   the other core cannot reach.
//! * `PrivateSwapped`: Swapped plus the private memories.

use std::fmt;
use std::str::FromStr;

use super::{parse, DslError, PlatformAst};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Topology {
    Uniform,
    Swapped,
    Private,
    PrivateSwapped,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::Uniform,
        Topology::Swapped,
        Topology::Private,
        Topology::PrivateSwapped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Uniform => "uniform",
            Topology::Swapped => "swapped",
            Topology::Private => "private",
            Topology::PrivateSwapped => "private_swapped",
        }
    }

    pub fn is_swapped(self) -> bool {
        matches!(self, Topology::Swapped | Topology::PrivateSwapped)
    }

    pub fn is_private(self) -> bool {
        matches!(self, Topology::Private | Topology::PrivateSwapped)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topology::ALL
            .into_iter()
            .find(|t| t.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown topology `{s}` (uniform, swapped, private, private_swapped)"))
    }
}

const PAGE: u64 = 0x1000;

/// Builds the description of `kind` with `dram_size` bytes of shared DRAM
/// and, for the private variants, `private_size` bytes per core.
pub fn builtin_topology(kind: Topology, dram_size: u64, private_size: u64) -> Result<PlatformAst, DslError> {
    let bad = |m: &str| Err(DslError::BadParams(m.into()));
    if dram_size == 0 || !dram_size.is_multiple_of(PAGE) {
        return bad("dram size must be a positive multiple of 0x1000");
    }
    if kind.is_swapped() && !dram_size.is_multiple_of(2 * PAGE) {
        return bad("swapped dram size must be a multiple of 0x2000");
    }
    if kind.is_private() {
        if private_size == 0 || !private_size.is_multiple_of(PAGE) {
            return bad("private size must be a positive multiple of 0x1000");
        }
        if dram_size.checked_add(private_size).is_none() {
            return bad("sizes overflow the address space");
        }
    }
    let (s, h, p) = (dram_size, dram_size / 2, private_size);
    let mut src = format!("module {kind} {{\n");
    for core in 0..2 {
        src.push_str(&format!("    node core{core} {{\n"));
        if kind.is_swapped() && core == 0 {
            src.push_str(&format!("        map [0x0..{h:#x}) -> dram @ {h:#x}\n"));
            src.push_str(&format!("        map [{h:#x}..{s:#x}) -> dram @ 0x0\n"));
        } else {
            src.push_str(&format!("        map [0x0..{s:#x}) -> dram @ 0x0\n"));
        }
        if kind.is_private() {
            src.push_str(&format!("        map [{s:#x}..{:#x}) -> priv{core} @ 0x0\n", s + p));
        }
        src.push_str("    }\n");
    }
    src.push_str(&format!("    node dram {{\n        accept [0x0..{s:#x})\n    }}\n"));
    if kind.is_private() {
        for core in 0..2 {
            src.push_str(&format!(
                "    node priv{core} {{\n        accept [0x0..{p:#x})\n    }}\n"
            ));
        }
    }
    src.push_str("}\n");
    parse(&src)
}
