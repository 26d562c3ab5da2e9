//! Policy-side queries over a flattened view of a decoding net.
//!
//! The [`FlatGraph`] keeps only the vertices software reasons about:
//! sources (cores and devices, i.e. nodes nothing fixed routes into),
//! configurable spaces, and accepting (memory) nodes. An edge `u -> v`
//! means some address of `u` can be routed into `v` through fixed nodes
//! only. Edges are either *existing* (the route is there today) or
//! *configurable* (a configurable space could be programmed to point into
//! one of its whitelisted targets, from which `v` is reached).
//!
//! Reachability is tracked per node, not per address: a chain of windows
//! whose ranges do not compose still counts as a route. Plans are a
//! roadmap; the monitor decides whether each mapping can be installed.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use thiserror::Error;

use crate::decoding_net::{AddressRange, CanonicalRange, ConfSpaces, DecodingNet, Name, NetError, NodeId};

/// Alignment of ranges handed out by [`FlatGraph::allocation_range`].
pub const ALLOC_ALIGN: u64 = 0x1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("`{0}` is not a vertex of the flattened graph")]
    UnknownVertex(NodeId),
    #[error("no allocatable memory reachable from `{0}`")]
    NoAllocatableMemory(NodeId),
    #[error("`{dst}` is unreachable from `{src}`")]
    Unreachable { src: NodeId, dst: NodeId },
    #[error("{0} resolves outside `{1}`")]
    OutsideFilter(Name, NodeId),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Existing,
    Configurable,
}

impl EdgeKind {
    /// Path cost: the number of spaces that must be programmed.
    pub fn weight(self) -> u32 {
        match self {
            EdgeKind::Existing => 0,
            EdgeKind::Configurable => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub to: NodeId,
    pub kind: EdgeKind,
    /// Whitelisted target the configurable space would point into.
    pub via: Option<NodeId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vertex {
    pub source: bool,
    pub configurable: bool,
    pub accept: Vec<AddressRange>,
    pub out: BTreeSet<Edge>,
}

impl Vertex {
    pub fn is_accepting(&self) -> bool {
        !self.accept.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlatGraph {
    vertices: BTreeMap<NodeId, Vertex>,
    /// Ranges handed out by earlier allocations, per accepting node.
    reserved: BTreeMap<NodeId, Vec<AddressRange>>,
}

/// One step of a plan: program `space` so that it routes into `via`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConfigStep {
    pub space: NodeId,
    pub via: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigPlan {
    pub src: NodeId,
    pub dst: NodeId,
    /// Spaces to program, ordered from `src` towards `dst`.
    pub steps: Vec<ConfigStep>,
    /// The vertex path the plan follows, `src` first.
    pub path: Vec<NodeId>,
}

impl ConfigPlan {
    pub fn spaces(&self) -> Vec<&NodeId> {
        self.steps.iter().map(|s| &s.space).collect()
    }
}

impl fmt::Display for ConfigPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let spaces: Vec<&str> = self.steps.iter().map(|s| s.space.as_str()).collect();
        write!(f, "plan({},{},[{}]).", self.src, self.dst, spaces.join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Allocation {
    pub node: NodeId,
    pub range: AddressRange,
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "alloc({},{:#x},{:#x}).",
            self.node,
            self.range.base(),
            self.range.size()
        )
    }
}

/// Builds the flattened graph of `net` with configurable spaces `conf`.
pub fn flatten(net: &DecodingNet, conf: &ConfSpaces) -> FlatGraph {
    let kinds = vertex_kinds(net, conf);
    let ids: Vec<&NodeId> = kinds.keys().collect();
    let outs = crate::par::map_slice(&ids, |id| out_edges(net, conf, &kinds, id));
    let vertices = ids
        .into_iter()
        .zip(outs)
        .map(|(id, out)| {
            let (source, configurable) = kinds[id];
            let accept = net.node(id).map(|n| n.accept.clone()).unwrap_or_default();
            (
                id.clone(),
                Vertex {
                    source,
                    configurable,
                    accept,
                    out,
                },
            )
        })
        .collect();
    FlatGraph {
        vertices,
        reserved: BTreeMap::new(),
    }
}

/// (source, configurable) for every vertex.
fn vertex_kinds(net: &DecodingNet, conf: &ConfSpaces) -> BTreeMap<NodeId, (bool, bool)> {
    // Segments of configurable spaces come and go with mappings; their
    // whitelists are what stays fixed.
    let mut fixed_in: BTreeSet<&NodeId> = conf.values().flat_map(|c| &c.targets).collect();
    for node in net.nodes() {
        if !conf.contains_key(&node.id) {
            fixed_in.extend(node.targets());
        }
    }
    net.nodes()
        .filter_map(|node| {
            let source = !fixed_in.contains(&node.id);
            let configurable = conf.contains_key(&node.id);
            (source || configurable || !node.accept.is_empty()).then(|| (node.id.clone(), (source, configurable)))
        })
        .collect()
}

fn out_edges(
    net: &DecodingNet,
    conf: &ConfSpaces,
    vertices: &BTreeMap<NodeId, (bool, bool)>,
    id: &NodeId,
) -> BTreeSet<Edge> {
    let mut out = BTreeSet::new();
    let Some(node) = net.node(id) else { return out };
    for t in node.targets() {
        for to in fixed_reach(net, vertices, t) {
            out.insert(Edge {
                to,
                kind: EdgeKind::Existing,
                via: None,
            });
        }
    }
    if let Some(space) = conf.get(id) {
        for t in &space.targets {
            for to in fixed_reach(net, vertices, t) {
                out.insert(Edge {
                    to,
                    kind: EdgeKind::Configurable,
                    via: Some(t.clone()),
                });
            }
        }
    }
    out
}

/// Vertices reachable from `start` passing only through non-vertex nodes.
fn fixed_reach(net: &DecodingNet, vertices: &BTreeMap<NodeId, (bool, bool)>, start: &NodeId) -> BTreeSet<NodeId> {
    let mut found = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![start.clone()];
    while let Some(n) = stack.pop() {
        if !seen.insert(n.clone()) {
            continue;
        }
        if vertices.contains_key(&n) {
            found.insert(n);
            continue;
        }
        if let Some(node) = net.node(&n) {
            stack.extend(node.targets().cloned());
        }
    }
    found
}

impl FlatGraph {
    pub fn vertices(&self) -> &BTreeMap<NodeId, Vertex> {
        &self.vertices
    }

    pub fn vertex(&self, id: &NodeId) -> Option<&Vertex> {
        self.vertices.get(id)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.vertices.values().map(|v| v.out.len()).sum()
    }

    fn require(&self, id: &NodeId) -> Result<&Vertex, QueryError> {
        self.vertices
            .get(id)
            .ok_or_else(|| QueryError::UnknownVertex(id.clone()))
    }

    /// Every vertex reachable from `src` (itself included) through
    /// existing edges, or through any edge if `configurable` is set.
    pub fn reachable(&self, src: &NodeId, configurable: bool) -> Result<BTreeSet<NodeId>, QueryError> {
        self.require(src)?;
        let mut seen = BTreeSet::from([src.clone()]);
        let mut stack = vec![src.clone()];
        while let Some(v) = stack.pop() {
            for e in &self.vertices[&v].out {
                if (configurable || e.kind == EdgeKind::Existing) && seen.insert(e.to.clone()) {
                    stack.push(e.to.clone());
                }
            }
        }
        Ok(seen)
    }

    /// The lowest free, aligned range of `size` bytes in the first (by id)
    /// accepting vertex reachable from `src` that matches `dst_filter`.
    pub fn allocation_range(
        &self,
        src: &NodeId,
        dst_filter: Option<&NodeId>,
        size: u64,
    ) -> Result<Allocation, QueryError> {
        let reach = self.reachable(src, true)?;
        let size = size.max(1).checked_next_multiple_of(ALLOC_ALIGN);
        for id in reach {
            if dst_filter.is_some_and(|f| f != &id) {
                continue;
            }
            let v = &self.vertices[&id];
            let taken = self.reserved.get(&id).map(Vec::as_slice).unwrap_or(&[]);
            if let Some(range) = size.and_then(|s| lowest_free(&v.accept, taken, s)) {
                return Ok(Allocation { node: id, range });
            }
        }
        Err(QueryError::NoAllocatableMemory(src.clone()))
    }

    /// Marks `range` of `node` as used for later allocations.
    pub fn reserve(&mut self, alloc: &Allocation) {
        self.reserved.entry(alloc.node.clone()).or_default().push(alloc.range);
    }

    /// The plan that programs the fewest configurable spaces on a path from
    /// `src` to `dst`. Ties go to fewer hops, then to the lexicographically
    /// smallest vertex path.
    pub fn config_nodes(&self, src: &NodeId, dst: &NodeId) -> Result<ConfigPlan, QueryError> {
        self.require(src)?;
        self.require(dst)?;
        type Key = (u32, u32, Vec<NodeId>, Vec<ConfigStep>);
        let mut heap: BinaryHeap<Reverse<Key>> = BinaryHeap::new();
        let mut done: BTreeSet<NodeId> = BTreeSet::new();
        heap.push(Reverse((0, 0, vec![src.clone()], Vec::new())));
        while let Some(Reverse((cost, hops, path, steps))) = heap.pop() {
            let here = path.last().expect("paths are never empty").clone();
            if !done.insert(here.clone()) {
                continue;
            }
            if &here == dst {
                return Ok(ConfigPlan {
                    src: src.clone(),
                    dst: dst.clone(),
                    steps,
                    path,
                });
            }
            for e in &self.vertices[&here].out {
                if done.contains(&e.to) {
                    continue;
                }
                let mut p = path.clone();
                p.push(e.to.clone());
                let mut s = steps.clone();
                if let (EdgeKind::Configurable, Some(via)) = (e.kind, &e.via) {
                    s.push(ConfigStep {
                        space: here.clone(),
                        via: via.clone(),
                    });
                }
                heap.push(Reverse((cost + e.kind.weight(), hops + 1, p, s)));
            }
        }
        Err(QueryError::Unreachable {
            src: src.clone(),
            dst: dst.clone(),
        })
    }

    /// Recomputes the graph after the configuration of `changed` moved
    /// from the net this graph was built from to `net`. Reservations are
    /// kept. The result equals `flatten(net, conf)` whenever only
    /// `changed` differs.
    pub fn invalidate(&self, net: &DecodingNet, conf: &ConfSpaces, changed: &NodeId) -> FlatGraph {
        let mut next = self.clone();
        let kinds = vertex_kinds(net, conf);
        match kinds.get(changed) {
            Some(&(source, configurable)) => {
                let out = out_edges(net, conf, &kinds, changed);
                let accept = net.node(changed).map(|n| n.accept.clone()).unwrap_or_default();
                next.vertices.insert(
                    changed.clone(),
                    Vertex {
                        source,
                        configurable,
                        accept,
                        out,
                    },
                );
            }
            None => {
                next.vertices.remove(changed);
                for v in next.vertices.values_mut() {
                    v.out.retain(|e| &e.to != changed);
                }
            }
        }
        next
    }

    /// Facts-style dump: one `vertex(...)` line per vertex followed by its
    /// `edge(...)` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, v) in &self.vertices {
            let mut tags = Vec::new();
            if v.source {
                tags.push("source");
            }
            if v.configurable {
                tags.push("configurable");
            }
            if v.is_accepting() {
                tags.push("memory");
            }
            out.push_str(&format!("vertex({id},[{}]).\n", tags.join(",")));
            for e in &v.out {
                match (&e.kind, &e.via) {
                    (EdgeKind::Configurable, Some(via)) => {
                        out.push_str(&format!("edge({id},{},configurable,{via}).\n", e.to))
                    }
                    _ => out.push_str(&format!("edge({id},{},existing).\n", e.to)),
                }
            }
        }
        out
    }
}

fn lowest_free(accept: &[AddressRange], taken: &[AddressRange], size: u64) -> Option<AddressRange> {
    let mut taken = taken.to_vec();
    taken.sort();
    for a in accept {
        let mut cursor = a.base().checked_next_multiple_of(ALLOC_ALIGN)?;
        loop {
            let want = AddressRange::new(cursor, size).ok()?;
            if !a.contains_range(&want) {
                break;
            }
            match taken.iter().find(|t| t.overlaps(&want)) {
                None => return Some(want),
                Some(t) => cursor = t.end().checked_next_multiple_of(ALLOC_ALIGN)?,
            }
        }
    }
    None
}

/// Resolves `size` bytes from `node:addr`. With a filter every byte must
/// land in `dst_filter`.
pub fn dn_resolve_range(
    net: &DecodingNet,
    node: &NodeId,
    addr: u64,
    size: u64,
    dst_filter: Option<&NodeId>,
) -> Result<Vec<CanonicalRange>, QueryError> {
    let ranges = net.resolve_range(&Name::new(node.clone(), addr), size)?;
    if let Some(f) = dst_filter {
        if let Some(bad) = ranges.iter().find(|c| &c.node != f) {
            return Err(QueryError::OutsideFilter(
                Name::new(bad.node.clone(), bad.range.base()),
                f.clone(),
            ));
        }
    }
    Ok(ranges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding_net::{ConfigurableSpace, Node};

    fn r(base: u64, size: u64) -> AddressRange {
        AddressRange::new(base, size).unwrap()
    }

    fn conf(entries: &[(&str, &[&str])]) -> ConfSpaces {
        entries
            .iter()
            .map(|(id, targets)| {
                (
                    NodeId::new(*id),
                    ConfigurableSpace {
                        granularity: 0x1000,
                        targets: targets.iter().map(|t| NodeId::new(*t)).collect(),
                    },
                )
            })
            .collect()
    }

    fn uniform() -> DecodingNet {
        DecodingNet::build([
            Node::new("core0").with_segment(r(0, 0x10000), "dram", 0),
            Node::new("core1").with_segment(r(0, 0x10000), "dram", 0),
            Node::new("dram").with_accept(r(0, 0x10000)),
        ])
        .unwrap()
    }

    #[test]
    fn empty_net_gives_empty_graph() {
        assert!(flatten(&DecodingNet::default(), &ConfSpaces::new()).is_empty());
    }

    #[test]
    fn fixed_interconnect_is_condensed() {
        let net = DecodingNet::build([
            Node::new("cpu").with_segment(r(0, 0x1000), "bus", 0),
            Node::new("bus").with_segment(r(0, 0x1000), "xbar", 0),
            Node::new("xbar").with_segment(r(0, 0x1000), "dram", 0),
            Node::new("dram").with_accept(r(0, 0x1000)),
        ])
        .unwrap();
        let g = flatten(&net, &ConfSpaces::new());
        assert_eq!(g.len(), 2);
        let cpu = g.vertex(&"cpu".into()).unwrap();
        assert!(cpu.source);
        assert_eq!(cpu.out.iter().map(|e| e.to.as_str()).collect::<Vec<_>>(), vec!["dram"]);
    }

    #[test]
    fn allocation_prefers_lowest_free_range() {
        let mut g = flatten(&uniform(), &ConfSpaces::new());
        let a = g.allocation_range(&"core0".into(), None, 0x1800).unwrap();
        assert_eq!(a.to_string(), "alloc(dram,0x0,0x2000).");
        g.reserve(&a);
        let b = g.allocation_range(&"core1".into(), None, 0x1000).unwrap();
        assert_eq!(b.range, r(0x2000, 0x1000));
        assert!(matches!(
            g.allocation_range(&"core0".into(), None, 0x20000),
            Err(QueryError::NoAllocatableMemory(_))
        ));
    }

    #[test]
    fn lone_accepting_node_allocates_from_itself() {
        let net = DecodingNet::build([Node::new("m").with_accept(r(0x4000, 0x4000))]).unwrap();
        let g = flatten(&net, &ConfSpaces::new());
        let a = g.allocation_range(&"m".into(), None, 0x10).unwrap();
        assert_eq!(a.range, r(0x4000, 0x1000));
    }

    #[test]
    fn reachable_destination_needs_no_configuration() {
        let g = flatten(&uniform(), &ConfSpaces::new());
        let plan = g.config_nodes(&"core0".into(), &"dram".into()).unwrap();
        assert!(plan.steps.is_empty());
        assert_eq!(plan.to_string(), "plan(core0,dram,[]).");
        assert!(matches!(
            g.config_nodes(&"core0".into(), &"core1".into()),
            Err(QueryError::Unreachable { .. })
        ));
        assert!(matches!(
            g.config_nodes(&"core0".into(), &"nope".into()),
            Err(QueryError::UnknownVertex(_))
        ));
    }

    #[test]
    fn plan_crosses_configurable_spaces() {
        let net = DecodingNet::build([
            Node::new("dev").with_overlay("mmu"),
            Node::new("mmu"),
            Node::new("bus").with_segment(r(0, 0x1000), "dram", 0),
            Node::new("dram").with_accept(r(0, 0x1000)),
        ])
        .unwrap();
        let g = flatten(&net, &conf(&[("mmu", &["bus"])]));
        let plan = g.config_nodes(&"dev".into(), &"dram".into()).unwrap();
        assert_eq!(plan.to_string(), "plan(dev,dram,[mmu]).");
        assert_eq!(plan.steps[0].via, NodeId::new("bus"));
        assert_eq!(plan.path, vec![NodeId::new("dev"), "mmu".into(), "dram".into()]);
    }

    #[test]
    fn invalidate_matches_rebuild() {
        let net = DecodingNet::build([
            Node::new("dev").with_overlay("mmu"),
            Node::new("mmu"),
            Node::new("bus").with_segment(r(0, 0x1000), "dram", 0),
            Node::new("dram").with_accept(r(0, 0x1000)),
        ])
        .unwrap();
        let c = conf(&[("mmu", &["bus"])]);
        let g = flatten(&net, &c);
        assert_eq!(g.invalidate(&net, &c, &"mmu".into()), g);
        let mapped = net.with_node_unchecked(Node::new("mmu").with_segment(r(0, 0x1000), "bus", 0));
        assert_eq!(g.invalidate(&mapped, &c, &"mmu".into()), flatten(&mapped, &c));
    }

    #[test]
    fn resolve_with_filter() {
        let net = DecodingNet::build([
            Node::new("c")
                .with_segment(r(0, 0x1000), "a", 0)
                .with_segment(r(0x1000, 0x1000), "b", 0),
            Node::new("a").with_accept(r(0, 0x1000)),
            Node::new("b").with_accept(r(0, 0x1000)),
        ])
        .unwrap();
        assert_eq!(
            dn_resolve_range(&net, &"c".into(), 0, 0x1000, Some(&"a".into()))
                .unwrap()
                .len(),
            1
        );
        assert!(matches!(
            dn_resolve_range(&net, &"c".into(), 0x800, 0x1000, Some(&"a".into())),
            Err(QueryError::OutsideFilter(..))
        ));
        assert_eq!(
            dn_resolve_range(&net, &"c".into(), 0x800, 0x1000, None).unwrap().len(),
            2
        );
    }
}
