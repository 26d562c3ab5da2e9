use super::{AddressRange, DecodingNet, Name, NetError, Node, NodeId};

/// Outcome of decoding one name at its own node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    /// The node accepts the address; the name is canonical.
    Accepted(Name),
    /// A segment or the overlay forwards the address to another node.
    Forwarded(Name),
    Undecodable,
}

/// A range of canonical names inside one accepting node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalRange {
    pub node: NodeId,
    pub range: AddressRange,
}

impl CanonicalRange {
    pub fn contains(&self, name: &Name) -> bool {
        self.node == name.node && self.range.contains(name.addr)
    }
}

/// Single-step decode plus the number of consecutive addresses starting at
/// `addr` that decode the same way (same accept range, same segment, same
/// overlay gap or same hole).
fn step_run(node: &Node, addr: u64) -> (Step, u64) {
    let accept = lookup(&node.accept, |r| *r, addr);
    let segment = lookup(&node.segments, |s| s.src, addr);
    if let Found(r) = accept {
        let r = &node.accept[r];
        return (Step::Accepted(Name::new(node.id.clone(), addr)), r.end() - addr);
    }
    if let Found(s) = segment {
        let seg = &node.segments[s];
        return (Step::Forwarded(seg.translate(addr)), seg.src.end() - addr);
    }
    // Inside a gap: the run lasts until the next declared range.
    let next = [accept, segment]
        .into_iter()
        .filter_map(|l| match l {
            Gap(next) => next,
            Found(_) => None,
        })
        .min()
        .unwrap_or(u64::MAX);
    let run = (next - addr).max(1);
    match &node.overlay {
        Some(target) => (Step::Forwarded(Name::new(target.clone(), addr)), run),
        None => (Step::Undecodable, run),
    }
}

#[derive(Clone, Copy)]
enum Lookup {
    Found(usize),
    /// Not covered; carries the base of the next range, if any.
    Gap(Option<u64>),
}
use Lookup::{Found, Gap};

fn lookup<T>(sorted: &[T], range: impl Fn(&T) -> AddressRange, addr: u64) -> Lookup {
    let idx = sorted.partition_point(|e| range(e).base() <= addr);
    if idx > 0 && range(&sorted[idx - 1]).contains(addr) {
        return Found(idx - 1);
    }
    Gap(sorted.get(idx).map(|e| range(e).base()))
}

impl DecodingNet {
    /// Decodes `name` one hop.
    pub fn step(&self, name: &Name) -> Result<Step, NetError> {
        let node = self
            .node(&name.node)
            .ok_or_else(|| NetError::UnknownNode(name.node.clone()))?;
        Ok(step_run(node, name.addr).0)
    }

    /// Follows translations until some node accepts the address.
    ///
    /// Visits each node at most once; revisiting a node is a
    /// [`NetError::Loop`].
    pub fn resolve(&self, name: &Name) -> Result<Name, NetError> {
        self.resolve_run(name, 1).map(|(canonical, _)| canonical)
    }

    /// Resolves `name` and reports how many consecutive addresses (at most
    /// `limit`) resolve to consecutive canonical addresses along the same
    /// path.
    pub fn resolve_run(&self, name: &Name, limit: u64) -> Result<(Name, u64), NetError> {
        let mut path: Vec<NodeId> = Vec::new();
        let mut cur = name.clone();
        let mut run = limit.max(1);
        loop {
            if path.contains(&cur.node) {
                path.push(cur.node);
                return Err(NetError::Loop { path });
            }
            let node = self
                .node(&cur.node)
                .ok_or_else(|| NetError::UnknownNode(cur.node.clone()))?;
            path.push(cur.node.clone());
            let (step, len) = step_run(node, cur.addr);
            run = run.min(len);
            match step {
                Step::Accepted(n) => return Ok((n, run)),
                Step::Forwarded(next) => cur = next,
                Step::Undecodable => {
                    return Err(NetError::Undecodable {
                        name: name.clone(),
                        path,
                    })
                }
            }
        }
    }

    /// Splits `[name.addr, name.addr + size)` into maximal contiguous
    /// canonical ranges, in input-address order.
    pub fn resolve_range(&self, name: &Name, size: u64) -> Result<Vec<CanonicalRange>, NetError> {
        let input = AddressRange::new(name.addr, size)?;
        let mut out: Vec<CanonicalRange> = Vec::new();
        let mut addr = input.base();
        while addr < input.end() {
            let at = Name::new(name.node.clone(), addr);
            let (canonical, len) = self.resolve_run(&at, input.end() - addr)?;
            push_merged(&mut out, canonical, len);
            addr += len;
        }
        Ok(out)
    }

    /// The complete local view of `node`: every run of its address space in
    /// order, with the canonical name the run starts at or the error that
    /// stops it from resolving. Runs that the node does not claim at all
    /// (outside its accept ranges and segments, with no overlay) are
    /// omitted.
    pub fn view(&self, node: &NodeId) -> Result<Vec<ViewRun>, NetError> {
        let n = self.node(node).ok_or_else(|| NetError::UnknownNode(node.clone()))?;
        let mut out: Vec<ViewRun> = Vec::new();
        let mut addr = 0u64;
        while addr < u64::MAX {
            let (step, len) = step_run(n, addr);
            let len = len.min(u64::MAX - addr);
            if matches!(step, Step::Undecodable) {
                addr += len;
                continue;
            }
            // Subdivide the claimed run by downstream boundaries.
            let end = addr + len;
            while addr < end {
                let at = Name::new(node.clone(), addr);
                let (target, sub) = match self.resolve_run(&at, end - addr) {
                    Ok((canonical, sub)) => (Ok(canonical), sub),
                    Err(e) => (Err(e), self.failing_run(&at, end - addr)),
                };
                let local = AddressRange::new(addr, sub)?;
                match (out.last_mut(), &target) {
                    (Some(prev), Ok(c)) if prev.extends_to(&local, c) => {
                        prev.local = AddressRange::new(prev.local.base(), prev.local.size() + sub)?;
                    }
                    (Some(prev), Err(_)) if prev.target.is_err() && prev.local.end() == addr => {
                        prev.local = AddressRange::new(prev.local.base(), prev.local.size() + sub)?;
                    }
                    _ => out.push(ViewRun { local, target }),
                }
                addr += sub;
            }
        }
        Ok(out)
    }

    /// Length of the run starting at `name` along which resolution fails in
    /// the same way.
    fn failing_run(&self, name: &Name, limit: u64) -> u64 {
        let mut cur = name.clone();
        let mut run = limit.max(1);
        let mut seen: Vec<NodeId> = Vec::new();
        while let Some(node) = self.node(&cur.node) {
            if seen.contains(&cur.node) {
                break;
            }
            seen.push(cur.node.clone());
            let (step, len) = step_run(node, cur.addr);
            run = run.min(len);
            match step {
                Step::Forwarded(next) => cur = next,
                _ => break,
            }
        }
        run
    }

    /// Resolves every name. Runs on the rayon pool when the `parallel`
    /// feature is enabled.
    pub fn resolve_batch(&self, names: &[Name]) -> Vec<Result<Name, NetError>> {
        crate::par::map_slice(names, |n| self.resolve(n))
    }

    /// Sequential [`DecodingNet::resolve_batch`], regardless of features.
    pub fn resolve_batch_seq(&self, names: &[Name]) -> Vec<Result<Name, NetError>> {
        names.iter().map(|n| self.resolve(n)).collect()
    }
}

fn push_merged(out: &mut Vec<CanonicalRange>, canonical: Name, len: u64) {
    if let Some(last) = out.last_mut() {
        if last.node == canonical.node && last.range.end() == canonical.addr {
            last.range = AddressRange::new(last.range.base(), last.range.size() + len)
                .expect("merged canonical range stays inside its node");
            return;
        }
    }
    out.push(CanonicalRange {
        node: canonical.node,
        range: AddressRange::new(canonical.addr, len).expect("run fits in 64 bits"),
    });
}

/// One run of a node's local view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewRun {
    pub local: AddressRange,
    /// Canonical name of `local.base()`, or why it does not resolve.
    pub target: Result<Name, NetError>,
}

impl ViewRun {
    fn extends_to(&self, next: &AddressRange, canonical: &Name) -> bool {
        match &self.target {
            Ok(c) => {
                self.local.end() == next.base()
                    && c.node == canonical.node
                    && c.addr.checked_add(self.local.size()) == Some(canonical.addr)
            }
            Err(_) => false,
        }
    }

    /// Canonical name for local address `addr` inside this run.
    pub fn canonical_of(&self, addr: u64) -> Option<Name> {
        let c = self.target.as_ref().ok()?;
        self.local
            .contains(addr)
            .then(|| Name::new(c.node.clone(), c.addr + (addr - self.local.base())))
    }
}

#[cfg(test)]
mod tests {
    use super::super::Node;
    use super::*;

    fn r(base: u64, size: u64) -> AddressRange {
        AddressRange::new(base, size).unwrap()
    }

    /// Per-address walker: iterate `step` with an explicit visited set.
    fn walk(net: &DecodingNet, name: &Name) -> Option<Name> {
        let mut seen = Vec::new();
        let mut cur = name.clone();
        loop {
            if seen.contains(&cur.node) {
                return None;
            }
            seen.push(cur.node.clone());
            match net.step(&cur).ok()? {
                Step::Accepted(n) => return Some(n),
                Step::Forwarded(n) => cur = n,
                Step::Undecodable => return None,
            }
        }
    }

    fn chain() -> DecodingNet {
        DecodingNet::build([
            Node::new("cpu").with_segment(r(0, 0x4000), "bus", 0x1000),
            Node::new("bus").with_segment(r(0x1000, 0x4000), "dram", 0x2000),
            Node::new("dram").with_accept(r(0, 0x10000)),
        ])
        .unwrap()
    }

    #[test]
    fn accept_is_terminal() {
        let net = DecodingNet::build([Node::new("d").with_accept(r(0, 0x1000))]).unwrap();
        assert_eq!(
            net.step(&Name::new("d", 0x10)).unwrap(),
            Step::Accepted(Name::new("d", 0x10))
        );
        assert_eq!(net.resolve(&Name::new("d", 0x10)).unwrap(), Name::new("d", 0x10));
    }

    #[test]
    fn segment_forwards_with_offset() {
        let net = DecodingNet::build([
            Node::new("d").with_accept(r(0, 0x1000)),
            Node::new("c").with_segment(r(0x1000, 0x1000), "d", 0),
        ])
        .unwrap();
        // 0x1800 - 0x1000 + 0x0
        assert_eq!(
            net.step(&Name::new("c", 0x1800)).unwrap(),
            Step::Forwarded(Name::new("d", 0x800))
        );
        for a in 0x1000..0x2000 {
            let expect = walk(&net, &Name::new("c", a));
            assert_eq!(net.resolve(&Name::new("c", a)).ok(), expect);
        }
    }

    #[test]
    fn no_match_no_overlay_is_undecodable() {
        let net = DecodingNet::build([Node::new("c")]).unwrap();
        assert_eq!(net.step(&Name::new("c", 5)).unwrap(), Step::Undecodable);
        assert!(matches!(
            net.resolve(&Name::new("c", 5)),
            Err(NetError::Undecodable { .. })
        ));
    }

    #[test]
    fn unknown_node() {
        let net = chain();
        assert_eq!(
            net.step(&Name::new("nope", 0)),
            Err(NetError::UnknownNode("nope".into()))
        );
    }

    #[test]
    fn chain_resolution_matches_walker() {
        let net = chain();
        // cpu 0x10 -> bus 0x1010 -> dram 0x2000 + (0x1010 - 0x1000)
        assert_eq!(net.resolve(&Name::new("cpu", 0x10)).unwrap(), Name::new("dram", 0x2010));
        for a in (0..0x5000).step_by(0x7) {
            let n = Name::new("cpu", a);
            assert_eq!(net.resolve(&n).ok(), walk(&net, &n), "addr {a:#x}");
        }
    }

    #[test]
    fn overlay_loop_detected() {
        let net =
            DecodingNet::from_nodes_unchecked([Node::new("a").with_overlay("b"), Node::new("b").with_overlay("a")]);
        assert_eq!(
            net.resolve(&Name::new("a", 0)),
            Err(NetError::Loop {
                path: vec!["a".into(), "b".into(), "a".into()]
            })
        );
    }

    #[test]
    fn range_in_one_segment() {
        let net = chain();
        let out = net.resolve_range(&Name::new("cpu", 0x100), 0x800).unwrap();
        assert_eq!(
            out,
            vec![CanonicalRange {
                node: "dram".into(),
                range: r(0x2100, 0x800)
            }]
        );
    }

    #[test]
    fn range_straddling_two_segments() {
        let net = DecodingNet::build([
            Node::new("c")
                .with_segment(r(0, 0x1000), "d0", 0x8000)
                .with_segment(r(0x1000, 0x1000), "d1", 0),
            Node::new("d0").with_accept(r(0, 0x10000)),
            Node::new("d1").with_accept(r(0, 0x10000)),
        ])
        .unwrap();
        let out = net.resolve_range(&Name::new("c", 0x800), 0x1000).unwrap();
        // grouped per-address walk
        let mut oracle: Vec<(NodeId, u64, u64)> = Vec::new();
        for a in 0x800..0x1800 {
            let c = walk(&net, &Name::new("c", a)).unwrap();
            match oracle.last_mut() {
                Some((n, b, s)) if *n == c.node && *b + *s == c.addr => *s += 1,
                _ => oracle.push((c.node, c.addr, 1)),
            }
        }
        let got: Vec<_> = out
            .iter()
            .map(|c| (c.node.clone(), c.range.base(), c.range.size()))
            .collect();
        assert_eq!(got, oracle);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn range_reports_first_failing_address() {
        let net = DecodingNet::build([
            Node::new("c").with_segment(r(0, 0x1000), "d", 0),
            Node::new("d").with_accept(r(0, 0x1000)),
        ])
        .unwrap();
        match net.resolve_range(&Name::new("c", 0x800), 0x1000) {
            Err(NetError::Undecodable { name, .. }) => assert_eq!(name, Name::new("c", 0x1000)),
            other => panic!("{other:?}"),
        }
        assert!(net.resolve_range(&Name::new("c", 0), 0).is_err());
    }

    #[test]
    fn adjacent_segments_merge_into_one_canonical_range() {
        let net = DecodingNet::build([
            Node::new("c")
                .with_segment(r(0, 0x1000), "d", 0x4000)
                .with_segment(r(0x1000, 0x1000), "d", 0x5000),
            Node::new("d").with_accept(r(0, 0x10000)),
        ])
        .unwrap();
        let out = net.resolve_range(&Name::new("c", 0), 0x2000).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].range, r(0x4000, 0x2000));
    }

    #[test]
    fn view_lists_claimed_runs() {
        let net = DecodingNet::build([
            Node::new("c")
                .with_segment(r(0x1000, 0x1000), "d", 0)
                .with_segment(r(0x3000, 0x1000), "hole", 0),
            Node::new("d").with_accept(r(0, 0x1000)),
            Node::new("hole"),
        ])
        .unwrap();
        let view = net.view(&"c".into()).unwrap();
        assert_eq!(view.len(), 2);
        assert_eq!(view[0].local, r(0x1000, 0x1000));
        assert_eq!(view[0].target, Ok(Name::new("d", 0)));
        assert_eq!(view[1].local, r(0x3000, 0x1000));
        assert!(view[1].target.is_err());
    }

    #[test]
    fn overlay_view_covers_whole_space() {
        let net = DecodingNet::build([
            Node::new("core").with_overlay("bus"),
            Node::new("bus").with_accept(r(0, 0x1000)),
        ])
        .unwrap();
        let view = net.view(&"core".into()).unwrap();
        assert_eq!(view[0].local, r(0, 0x1000));
        assert!(view[0].target.is_ok());
        assert_eq!(view[1].local, AddressRange::from_bounds(0x1000, u64::MAX).unwrap());
        assert!(view[1].target.is_err());
    }
}
