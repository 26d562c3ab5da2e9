//! Static decoding-net model of a platform's address translation.
//!
//! Every node of the net is an address space. A node may *accept* some of its
//! local addresses (the address names memory or a device register inside that
//! node) and may *translate* other local addresses into a different node,
//! either through offset-linear segments or through a single default
//! `overlay`. The accepting pair `(node, address)` reached by following
//! translations is the canonical name of the resource.
//!
//! Ranges are half-open. An [`AddressRange`] never extends past
//! `u64::MAX`, so the last representable byte address is `u64::MAX - 1`.

pub mod facts;
mod resolve;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub use resolve::{CanonicalRange, Step, ViewRun};

/// Identifier of a node (address space) within a net.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// A globally qualified name: a local address interpreted in the context of
/// one node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name {
    pub node: NodeId,
    pub addr: u64,
}

impl Name {
    pub fn new(node: impl Into<NodeId>, addr: u64) -> Self {
        Name {
            node: node.into(),
            addr,
        }
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:#x}", self.node, self.addr)
    }
}

/// Half-open byte range `[base, base + size)`, never empty and never
/// wrapping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AddressRange {
    base: u64,
    size: u64,
}

impl AddressRange {
    pub fn new(base: u64, size: u64) -> Result<Self, NetError> {
        if size == 0 {
            return Err(NetError::EmptyRange { base });
        }
        base.checked_add(size).ok_or(NetError::AddressOverflow { base, size })?;
        Ok(AddressRange { base, size })
    }

    /// Range covering `[base, end)`.
    pub fn from_bounds(base: u64, end: u64) -> Result<Self, NetError> {
        if end <= base {
            return Err(NetError::EmptyRange { base });
        }
        Ok(AddressRange { base, size: end - base })
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    /// Exclusive end address.
    pub fn end(&self) -> u64 {
        self.base + self.size
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.end()
    }

    pub fn contains_range(&self, other: &AddressRange) -> bool {
        other.base >= self.base && other.end() <= self.end()
    }

    pub fn overlaps(&self, other: &AddressRange) -> bool {
        self.base < other.end() && other.base < self.end()
    }

    pub fn intersect(&self, other: &AddressRange) -> Option<AddressRange> {
        let base = self.base.max(other.base);
        let end = self.end().min(other.end());
        (base < end).then(|| AddressRange { base, size: end - base })
    }

    /// `self` shifted so that its base becomes `new_base`.
    pub fn rebased(&self, new_base: u64) -> Result<AddressRange, NetError> {
        AddressRange::new(new_base, self.size)
    }
}

impl fmt::Display for AddressRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:#x}..{:#x})", self.base, self.end())
    }
}

/// Offset-linear translation: `src.base + k` becomes `dst:dst_base + k`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TranslateSegment {
    pub src: AddressRange,
    pub dst: NodeId,
    pub dst_base: u64,
}

impl TranslateSegment {
    pub fn new(src: AddressRange, dst: impl Into<NodeId>, dst_base: u64) -> Self {
        TranslateSegment {
            src,
            dst: dst.into(),
            dst_base,
        }
    }

    /// Target name of `addr`, which must lie in `src`.
    pub fn translate(&self, addr: u64) -> Name {
        debug_assert!(self.src.contains(addr));
        Name {
            node: self.dst.clone(),
            addr: self.dst_base + (addr - self.src.base()),
        }
    }

    /// The destination range this segment covers.
    pub fn dst_range(&self) -> Result<AddressRange, NetError> {
        AddressRange::new(self.dst_base, self.src.size())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub accept: Vec<AddressRange>,
    pub segments: Vec<TranslateSegment>,
    pub overlay: Option<NodeId>,
}

impl Node {
    pub fn new(id: impl Into<NodeId>) -> Self {
        Node {
            id: id.into(),
            accept: Vec::new(),
            segments: Vec::new(),
            overlay: None,
        }
    }

    pub fn with_accept(mut self, range: AddressRange) -> Self {
        self.accept.push(range);
        self
    }

    pub fn with_segment(mut self, src: AddressRange, dst: impl Into<NodeId>, dst_base: u64) -> Self {
        self.segments.push(TranslateSegment::new(src, dst, dst_base));
        self
    }

    pub fn with_overlay(mut self, dst: impl Into<NodeId>) -> Self {
        self.overlay = Some(dst.into());
        self
    }

    fn normalize(&mut self) {
        self.accept.sort();
        self.segments.sort();
    }

    /// Every node this node can forward to.
    pub fn targets(&self) -> impl Iterator<Item = &NodeId> {
        self.segments.iter().map(|s| &s.dst).chain(self.overlay.iter())
    }

    /// True if no accept range, segment or overlay is declared.
    pub fn is_empty(&self) -> bool {
        self.accept.is_empty() && self.segments.is_empty() && self.overlay.is_none()
    }
}

/// Hardware constraints of an address space whose translation can be
/// reprogrammed at run time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigurableSpace {
    pub granularity: u64,
    /// Nodes that segments of this space are allowed to point into.
    pub targets: Vec<NodeId>,
}

/// Configurable spaces of a platform, keyed by the node they program.
pub type ConfSpaces = BTreeMap<NodeId, ConfigurableSpace>;

/// A static net together with the spaces in it that software may program.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Platform {
    pub net: DecodingNet,
    pub conf: ConfSpaces,
}

impl Platform {
    pub fn new(net: DecodingNet, conf: ConfSpaces) -> Self {
        Platform { net, conf }
    }

    pub fn is_configurable(&self, id: &NodeId) -> bool {
        self.conf.contains_key(id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("duplicate node `{0}`")]
    DuplicateNode(NodeId),
    #[error("reference to unknown node `{0}`")]
    DanglingReference(NodeId),
    #[error("overlapping ranges in node `{0}`")]
    OverlappingRanges(NodeId),
    #[error("empty range at {base:#x}")]
    EmptyRange { base: u64 },
    #[error("range {base:#x}+{size:#x} overflows the 64-bit address space")]
    AddressOverflow { base: u64, size: u64 },
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("{name} is undecodable (path {})", fmt_path(path))]
    Undecodable { name: Name, path: Vec<NodeId> },
    #[error("translation loop {}", fmt_path(path))]
    Loop { path: Vec<NodeId> },
}

impl NetError {
    /// Stable identifier used in verdict and report output.
    pub fn code(&self) -> &'static str {
        match self {
            NetError::DuplicateNode(_) => "DuplicateNode",
            NetError::DanglingReference(_) => "DanglingReference",
            NetError::OverlappingRanges(_) => "OverlappingRanges",
            NetError::EmptyRange { .. } => "EmptyRange",
            NetError::AddressOverflow { .. } => "AddressOverflow",
            NetError::UnknownNode(_) => "UnknownNode",
            NetError::Undecodable { .. } => "Undecodable",
            NetError::Loop { .. } => "Loop",
        }
    }
}

fn fmt_path(path: &[NodeId]) -> String {
    path.iter().map(NodeId::as_str).collect::<Vec<_>>().join(" -> ")
}

/// One broken invariant found by [`well_formed`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    OverlappingRanges {
        node: NodeId,
        first: AddressRange,
        second: AddressRange,
    },
    DanglingReference {
        node: NodeId,
        target: NodeId,
    },
    SegmentOverflow {
        node: NodeId,
        segment: AddressRange,
    },
    /// A cycle made of overlay edges only.
    Loop {
        path: Vec<NodeId>,
    },
}

impl Violation {
    /// The node the violation was found in.
    pub fn node(&self) -> Option<&NodeId> {
        match self {
            Violation::OverlappingRanges { node, .. }
            | Violation::DanglingReference { node, .. }
            | Violation::SegmentOverflow { node, .. } => Some(node),
            Violation::Loop { path } => path.first(),
        }
    }

    pub fn into_error(self) -> NetError {
        match self {
            Violation::OverlappingRanges { node, .. } => NetError::OverlappingRanges(node),
            Violation::DanglingReference { target, .. } => NetError::DanglingReference(target),
            Violation::SegmentOverflow { segment, .. } => NetError::AddressOverflow {
                base: segment.base(),
                size: segment.size(),
            },
            Violation::Loop { path } => NetError::Loop { path },
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OverlappingRanges { node, first, second } => write!(f, "node {node}: {first} overlaps {second}"),
            Violation::DanglingReference { node, target } => {
                write!(f, "node {node}: reference to unknown node {target}")
            }
            Violation::SegmentOverflow { node, segment } => {
                write!(f, "node {node}: segment {segment} destination overflows")
            }
            Violation::Loop { path } => write!(f, "overlay loop {}", fmt_path(path)),
        }
    }
}

/// A static decoding net. Immutable once built; every query borrows it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecodingNet {
    nodes: BTreeMap<NodeId, Node>,
}

impl DecodingNet {
    /// Builds a net, rejecting duplicates and any broken invariant.
    ///
    /// Overlay cycles are reported as [`NetError::Loop`].
    pub fn build(nodes: impl IntoIterator<Item = Node>) -> Result<Self, NetError> {
        let mut map = BTreeMap::new();
        for node in nodes {
            if map.contains_key(&node.id) {
                return Err(NetError::DuplicateNode(node.id));
            }
            map.insert(node.id.clone(), node);
        }
        let net = DecodingNet::from_map(map);
        match well_formed(&net).into_iter().next() {
            Some(v) => Err(v.into_error()),
            None => Ok(net),
        }
    }

    /// Assembles a net without validation. Later nodes replace earlier ones
    /// with the same id. Intended for checking hand-built inputs with
    /// [`well_formed`].
    pub fn from_nodes_unchecked(nodes: impl IntoIterator<Item = Node>) -> Self {
        DecodingNet::from_map(nodes.into_iter().map(|n| (n.id.clone(), n)).collect())
    }

    fn from_map(mut nodes: BTreeMap<NodeId, Node>) -> Self {
        nodes.values_mut().for_each(Node::normalize);
        DecodingNet { nodes }
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A copy of this net with `node` inserted or replaced, unvalidated.
    pub fn with_node_unchecked(&self, node: Node) -> Self {
        let mut nodes = self.nodes.clone();
        let mut node = node;
        node.normalize();
        nodes.insert(node.id.clone(), node);
        DecodingNet { nodes }
    }

    /// Nodes that some other node forwards into.
    pub fn referenced(&self) -> BTreeSet<&NodeId> {
        self.nodes.values().flat_map(Node::targets).collect()
    }
}

/// Lists every invariant violation of `net`; empty iff the net is well formed.
pub fn well_formed(net: &DecodingNet) -> Vec<Violation> {
    let mut out = Vec::new();
    for node in net.nodes.values() {
        let mut ranges: Vec<AddressRange> = node
            .accept
            .iter()
            .copied()
            .chain(node.segments.iter().map(|s| s.src))
            .collect();
        ranges.sort();
        for pair in ranges.windows(2) {
            if pair[0].overlaps(&pair[1]) {
                out.push(Violation::OverlappingRanges {
                    node: node.id.clone(),
                    first: pair[0],
                    second: pair[1],
                });
            }
        }
        for seg in &node.segments {
            if seg.dst_range().is_err() {
                out.push(Violation::SegmentOverflow {
                    node: node.id.clone(),
                    segment: seg.src,
                });
            }
        }
        let mut dangling: Vec<&NodeId> = node.targets().filter(|t| !net.contains(t)).collect();
        dangling.sort();
        dangling.dedup();
        out.extend(dangling.into_iter().map(|t| Violation::DanglingReference {
            node: node.id.clone(),
            target: t.clone(),
        }));
    }
    out.extend(overlay_cycles(net).into_iter().map(|path| Violation::Loop { path }));
    out
}

/// Cycles formed purely by overlay edges, each reported once, rotated so
/// that the smallest id comes first.
fn overlay_cycles(net: &DecodingNet) -> Vec<Vec<NodeId>> {
    let mut cycles = BTreeSet::new();
    let mut cleared: BTreeSet<&NodeId> = BTreeSet::new();
    for start in net.nodes.keys() {
        let mut chain: Vec<&NodeId> = Vec::new();
        let mut cur = Some(start);
        while let Some(id) = cur {
            if cleared.contains(id) {
                break;
            }
            if let Some(pos) = chain.iter().position(|c| *c == id) {
                let cycle = &chain[pos..];
                let min = (0..cycle.len()).min_by_key(|&i| cycle[i]).unwrap_or(0);
                let rotated: Vec<NodeId> = cycle[min..].iter().chain(&cycle[..min]).map(|n| (*n).clone()).collect();
                cycles.insert(rotated);
                break;
            }
            chain.push(id);
            cur = net.nodes.get(id).and_then(|n| n.overlay.as_ref());
        }
        cleared.extend(chain);
    }
    cycles.into_iter().collect()
}
