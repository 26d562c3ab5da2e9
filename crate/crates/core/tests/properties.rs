use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use proptest::prelude::*;

use addrmon::authority::{format_rights, parse_rights, Authority, Right};
use addrmon::decoding_net::{facts, AddressRange, ConfSpaces, DecodingNet, Name, Node};
use addrmon::monitor::trace::{run_trace, TraceFile};
use addrmon::monitor::{MonitorState, ObjectType, Operation};
use addrmon::platform_dsl::{builtin_topology, compile, compile_str, Topology};

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

const AUTHORITIES: [Authority; 6] = [
    Authority::Direct(Right::Grant),
    Authority::Direct(Right::Map),
    Authority::Direct(Right::Access),
    Authority::Meta(Right::Grant),
    Authority::Meta(Right::Map),
    Authority::Meta(Right::Access),
];

fn range() -> impl Strategy<Value = AddressRange> {
    (0u64..0x10000, 1u64..0x4000).prop_map(|(b, s)| AddressRange::new(b, s).unwrap())
}

/// Nets over a small id space; the build step rejects malformed ones.
fn net() -> impl Strategy<Value = DecodingNet> {
    let node = (
        prop::collection::vec(range(), 0..2),
        prop::collection::vec((range(), 0usize..6, 0u64..0x10000), 0..4),
        prop::option::of(0usize..6),
    );
    prop::collection::vec(node, 1..6).prop_filter_map("malformed net", |shape| {
        let n = shape.len();
        let nodes = shape.into_iter().enumerate().map(|(i, (accept, segs, overlay))| {
            let mut node = Node::new(format!("n{i}"));
            for a in accept {
                node = node.with_accept(a);
            }
            for (src, dst, base) in segs {
                node = node.with_segment(src, format!("n{}", dst % n).as_str(), base);
            }
            if let Some(o) = overlay {
                node = node.with_overlay(format!("n{}", o % n).as_str());
            }
            node
        });
        DecodingNet::build(nodes.collect::<Vec<_>>()).ok()
    })
}

proptest! {
    #[test]
    fn overlap_agrees_with_intersection(a in range(), b in range()) {
        prop_assert_eq!(a.overlaps(&b), a.intersect(&b).is_some());
        prop_assert_eq!(a.overlaps(&b), b.overlaps(&a));
        if let Some(i) = a.intersect(&b) {
            prop_assert!(a.contains_range(&i) && b.contains_range(&i));
        }
    }

    #[test]
    fn rights_round_trip(mask in 0u32..64) {
        let rights: BTreeSet<Authority> = AUTHORITIES
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, a)| *a)
            .collect();
        prop_assert_eq!(parse_rights(&format_rights(&rights)).unwrap(), rights);
    }

    #[test]
    fn facts_round_trip(net in net()) {
        let text = facts::emit(&net, &ConfSpaces::new());
        let (back, conf) = facts::parse(&text).unwrap();
        prop_assert!(conf.is_empty());
        prop_assert_eq!(back, net);
    }

    #[test]
    fn range_resolution_is_pointwise(net in net(), base in 0u64..0x10000, size in 1u64..0x400) {
        for id in net.node_ids() {
            let name = Name::new(id.clone(), base);
            let pointwise: Result<Vec<Name>, _> =
                (base..base + size).map(|a| net.resolve(&Name::new(id.clone(), a))).collect();
            match (net.resolve_range(&name, size), pointwise) {
                (Ok(runs), Ok(names)) => {
                    let flat: Vec<Name> = runs
                        .iter()
                        .flat_map(|r| (r.range.base()..r.range.end()).map(move |a| Name::new(r.node.clone(), a)))
                        .collect();
                    prop_assert_eq!(flat, names);
                }
                (Err(e), Err(f)) => prop_assert_eq!(e.code(), f.code()),
                (got, want) => prop_assert!(false, "{id}: range {got:?}, pointwise {want:?}"),
            }
        }
    }

    #[test]
    fn swapped_topology_is_an_involution(a in 0u64..0x10000) {
        let p = compile(&builtin_topology(Topology::Swapped, 0x10000, 0).unwrap()).unwrap();
        let via0 = p.net.resolve(&Name::new("core0", a)).unwrap();
        let via1 = p.net.resolve(&Name::new("core1", (a + 0x8000) % 0x10000)).unwrap();
        prop_assert_eq!(via0, via1);
    }
}

fn op() -> impl Strategy<Value = Operation> {
    let oid = prop::sample::select(vec!["ram0", "ram1", "f0", "f1", "pt0", "pt1"]);
    let space = prop::sample::select(vec!["v0", "v1", "iommu"]);
    let page = (0u64..8).prop_map(|p| p * 0x1000);
    prop_oneof![
        (
            oid.clone(),
            prop::sample::select(vec![ObjectType::Frame, ObjectType::TStructure]),
            page.clone(),
            oid.clone()
        )
            .prop_map(|(parent, t, offset, new)| Operation::Retype {
                subject: "os".into(),
                parent: parent.into(),
                new_type: t,
                offset,
                size: 0x1000,
                new_oid: new.into(),
            }),
        (oid.clone(), space.clone()).prop_map(|(t, asid)| Operation::Derive {
            subject: "os".into(),
            tstruct: t.into(),
            granularity: 0x1000,
            asid: asid.into(),
        }),
        (space, page, oid, 0u32..4).prop_map(|(asid, dst, o, m)| Operation::Map {
            subject: "os".into(),
            asid: asid.into(),
            dst: AddressRange::new(dst, 0x1000).unwrap(),
            oid: o.into(),
            obj_offset: 0,
            mid: format!("m{m}").as_str().into(),
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn valid_traces_are_prefix_closed(ops in prop::collection::vec(op(), 0..12)) {
        let trace = TraceFile::parse(&fixture("mapping_trace.txt")).unwrap();
        let platform = Arc::new(compile_str(&fixture("uniform.dsl")).unwrap());
        let st = trace.execute(MonitorState::new(platform)).state().clone();
        let verdict = run_trace(&st, &ops);
        let valid_len = match &verdict {
            addrmon::monitor::trace::Verdict::Valid(_) => ops.len(),
            addrmon::monitor::trace::Verdict::Rejected { index, state, .. } => {
                let replay = run_trace(&st, &ops[..*index]);
                prop_assert_eq!(state, replay.state());
                *index
            }
        };
        for k in 0..=valid_len {
            prop_assert!(run_trace(&st, &ops[..k]).is_valid());
        }
        prop_assert!(verdict.state().check_static_security().is_empty());
    }
}
