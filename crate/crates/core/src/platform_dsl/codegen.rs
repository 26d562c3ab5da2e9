//! Output generation: facts, per-node translation tables and a simulator
//! memory-map configuration.
//!
//! Simulator configuration format, one section per core (a node nothing
//! routes into that does not accept addresses itself):
//!
//! ```text
//! [core core0]
//! region 0x0 0x8000 -> dram 0x8000 shared
//! region 0x10000 0x4000 -> priv0 0x0 private
//! hole 0x20000 0x1000 Undecodable
//! ```
//!
//! `region <local-base> <size> -> <node> <canonical-base> <class>` where the
//! class is `shared` if another core reaches any byte of the same canonical
//! range and `private` otherwise. `hole` lines list claimed local ranges
//! that do not resolve.

use std::fmt;

use crate::decoding_net::{facts, AddressRange, ConfSpaces, DecodingNet, Name, NetError, NodeId};

pub fn emit_facts(net: &DecodingNet, conf: &ConfSpaces) -> String {
    facts::emit(net, conf)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableEntry {
    pub local: AddressRange,
    /// Canonical name of `local.base()`; the entry is offset-linear.
    pub target: Name,
}

impl TableEntry {
    pub fn lookup(&self, addr: u64) -> Option<Name> {
        self.local
            .contains(addr)
            .then(|| Name::new(self.target.node.clone(), self.target.addr + (addr - self.local.base())))
    }
}

/// Local-to-canonical translation of one node, sorted by local base.
/// Ranges the node claims but that do not resolve are kept as holes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranslationTable {
    pub node: NodeId,
    pub entries: Vec<TableEntry>,
    pub holes: Vec<(AddressRange, NetError)>,
}

impl TranslationTable {
    pub fn lookup(&self, addr: u64) -> Option<Name> {
        let i = self.entries.partition_point(|e| e.local.end() <= addr);
        self.entries.get(i).and_then(|e| e.lookup(addr))
    }

    /// Fails with the list of holes if any claimed range is unresolvable.
    pub fn complete(self) -> Result<TranslationTable, Vec<(AddressRange, NetError)>> {
        if self.holes.is_empty() {
            Ok(self)
        } else {
            Err(self.holes)
        }
    }
}

/// Sorted `xlate(...)` lines, then `hole(...)` lines.
impl fmt::Display for TranslationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(
                f,
                "xlate({}, {:#x}, {:#x}, {}, {:#x}).",
                self.node,
                e.local.base(),
                e.local.size(),
                e.target.node,
                e.target.addr
            )?;
        }
        for (r, err) in &self.holes {
            writeln!(
                f,
                "hole({}, {:#x}, {:#x}, {}).",
                self.node,
                r.base(),
                r.size(),
                err.code()
            )?;
        }
        Ok(())
    }
}

pub fn emit_translation_table(net: &DecodingNet, node: &NodeId) -> Result<TranslationTable, NetError> {
    let mut entries = Vec::new();
    let mut holes = Vec::new();
    for run in net.view(node)? {
        match run.target {
            Ok(target) => entries.push(TableEntry {
                local: run.local,
                target,
            }),
            Err(e) => holes.push((run.local, e)),
        }
    }
    Ok(TranslationTable {
        node: node.clone(),
        entries,
        holes,
    })
}

/// Nodes that nothing routes into and that do not accept addresses.
fn cores(net: &DecodingNet) -> Vec<&NodeId> {
    let referenced = net.referenced();
    net.nodes()
        .filter(|n| n.accept.is_empty() && !n.is_empty() && !referenced.contains(&n.id))
        .map(|n| &n.id)
        .collect()
}

pub fn emit_simulator_config(net: &DecodingNet) -> String {
    let tables: Vec<TranslationTable> = cores(net)
        .into_iter()
        .filter_map(|c| emit_translation_table(net, c).ok())
        .collect();
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("[core {}]\n", t.node));
        for e in &t.entries {
            let canon = AddressRange::new(e.target.addr, e.local.size()).expect("entries come from valid runs");
            let shared = tables.iter().enumerate().any(|(j, other)| {
                j != i
                    && other.entries.iter().any(|o| {
                        o.target.node == e.target.node
                            && AddressRange::new(o.target.addr, o.local.size()).is_ok_and(|r| r.overlaps(&canon))
                    })
            });
            out.push_str(&format!(
                "region {:#x} {:#x} -> {} {:#x} {}\n",
                e.local.base(),
                e.local.size(),
                e.target.node,
                e.target.addr,
                if shared { "shared" } else { "private" }
            ));
        }
        for (r, err) in &t.holes {
            out.push_str(&format!("hole {:#x} {:#x} {}\n", r.base(), r.size(), err.code()));
        }
    }
    out
}
