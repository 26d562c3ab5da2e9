//! Line-oriented facts file, the interchange format for nets.
//!
//! ```text
//! accept(dram, 0x0, 0x10000).
//! translate(core0, 0x0, 0x8000, dram, 0x8000).
//! overlay(dma, iommu).
//! node(iommu).
//! configurable(iommu, 0x1000, [sysbus]).
//! ```
//!
//! `node` declares a node that has no other facts. Lines starting with `%`
//! or `#` are comments. Output is sorted by node id, so emitting the same
//! net twice gives byte-identical text.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{AddressRange, ConfSpaces, ConfigurableSpace, DecodingNet, NetError, Node, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FactsError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Range { line: usize, source: NetError },
    #[error(transparent)]
    Net(#[from] NetError),
}

pub fn emit(net: &DecodingNet, conf: &ConfSpaces) -> String {
    let mut out = String::new();
    for node in net.nodes() {
        let id = &node.id;
        for a in &node.accept {
            let _ = writeln!(out, "accept({id}, {:#x}, {:#x}).", a.base(), a.size());
        }
        for s in &node.segments {
            let _ = writeln!(
                out,
                "translate({id}, {:#x}, {:#x}, {}, {:#x}).",
                s.src.base(),
                s.src.size(),
                s.dst,
                s.dst_base
            );
        }
        if let Some(o) = &node.overlay {
            let _ = writeln!(out, "overlay({id}, {o}).");
        }
        if node.is_empty() && !conf.contains_key(id) {
            let _ = writeln!(out, "node({id}).");
        }
    }
    for (id, space) in conf {
        let targets: Vec<&str> = space.targets.iter().map(NodeId::as_str).collect();
        let _ = writeln!(
            out,
            "configurable({id}, {:#x}, [{}]).",
            space.granularity,
            targets.join(", ")
        );
    }
    out
}

/// Parses a facts file back into a validated net and its configurable
/// spaces.
pub fn parse(text: &str) -> Result<(DecodingNet, ConfSpaces), FactsError> {
    let mut nodes: BTreeMap<NodeId, Node> = BTreeMap::new();
    let mut conf = ConfSpaces::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') || trimmed.starts_with('#') {
            continue;
        }
        let syntax = |msg: &str| FactsError::Syntax {
            line,
            msg: msg.to_owned(),
        };
        let body = trimmed
            .strip_suffix(").")
            .ok_or_else(|| syntax("expected `).` at end of fact"))?;
        let (head, args) = body.split_once('(').ok_or_else(|| syntax("expected `(`"))?;
        let args = split_args(args).map_err(|m| syntax(&m))?;
        let num = |i: usize| parse_hex(&args[i]).ok_or_else(|| syntax("expected 0x-prefixed number"));
        let ident = |i: usize| -> Result<NodeId, FactsError> {
            let a = &args[i];
            if is_ident(a) {
                Ok(NodeId::new(a.as_str()))
            } else {
                Err(syntax("expected node identifier"))
            }
        };
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(syntax(&format!("`{head}` takes {n} arguments")))
            }
        };
        let range = |b: u64, s: u64| AddressRange::new(b, s).map_err(|source| FactsError::Range { line, source });
        match head.trim() {
            "accept" => {
                arity(3)?;
                let id = ident(0)?;
                let r = range(num(1)?, num(2)?)?;
                entry(&mut nodes, id).accept.push(r);
            }
            "translate" => {
                arity(5)?;
                let id = ident(0)?;
                let r = range(num(1)?, num(2)?)?;
                let dst = ident(3)?;
                let base = num(4)?;
                entry(&mut nodes, id)
                    .segments
                    .push(super::TranslateSegment::new(r, dst, base));
            }
            "overlay" => {
                arity(2)?;
                let id = ident(0)?;
                let dst = ident(1)?;
                let n = entry(&mut nodes, id);
                if n.overlay.is_some() {
                    return Err(syntax("second overlay for node"));
                }
                n.overlay = Some(dst);
            }
            "node" => {
                arity(1)?;
                entry(&mut nodes, ident(0)?);
            }
            "configurable" => {
                arity(3)?;
                let id = ident(0)?;
                let granularity = num(1)?;
                let list = args[2]
                    .strip_prefix('[')
                    .and_then(|l| l.strip_suffix(']'))
                    .ok_or_else(|| syntax("expected `[targets]`"))?;
                let targets = list
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        if is_ident(t) {
                            Ok(NodeId::new(t))
                        } else {
                            Err(syntax("expected node identifier"))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                entry(&mut nodes, id.clone());
                conf.insert(id, ConfigurableSpace { granularity, targets });
            }
            other => return Err(syntax(&format!("unknown fact `{other}`"))),
        }
    }
    let net = DecodingNet::build(nodes.into_values())?;
    for space in conf.values() {
        if let Some(t) = space.targets.iter().find(|t| !net.contains(t)) {
            return Err(NetError::DanglingReference(t.clone()).into());
        }
    }
    Ok((net, conf))
}

fn entry(nodes: &mut BTreeMap<NodeId, Node>, id: NodeId) -> &mut Node {
    nodes.entry(id.clone()).or_insert_with(|| Node::new(id))
}

/// Splits on top-level commas, keeping `[..]` lists intact.
fn split_args(s: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '[' => {
                depth += 1;
                cur.push(ch);
            }
            ']' => {
                depth = depth.checked_sub(1).ok_or("unbalanced `]`")?;
                cur.push(ch);
            }
            ',' if depth == 0 => out.push(std::mem::take(&mut cur).trim().to_owned()),
            _ => cur.push(ch),
        }
    }
    if depth != 0 {
        return Err("unbalanced `[`".into());
    }
    out.push(cur.trim().to_owned());
    Ok(out)
}

pub(crate) fn parse_hex(s: &str) -> Option<u64> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
    let digits = digits.replace('_', "");
    u64::from_str_radix(&digits, 16).ok()
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}
