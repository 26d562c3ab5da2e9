use std::sync::Arc;

use addrmon::authority::{parse_rights, Authority, Right};
use addrmon::decoding_net::{ConfSpaces, ConfigurableSpace, DecodingNet, Name, Node, Platform};
use addrmon::monitor::{MonitorError, MonitorState, ObjectType, RamRoot, Replacement};
use addrmon::AddressRange;

fn r(base: u64, size: u64) -> AddressRange {
    AddressRange::new(base, size).unwrap()
}

/// core -> dram, a device behind a programmable mmu whose only context is
/// the system bus, and a second memory the bus cannot reach.
fn platform() -> Arc<Platform> {
    let net = DecodingNet::build([
        Node::new("core").with_segment(r(0, 0x100000), "dram", 0),
        Node::new("dram").with_accept(r(0, 0x100000)),
        Node::new("far").with_accept(r(0, 0x10000)),
        Node::new("bus").with_segment(r(0x8000_0000, 0x100000), "dram", 0),
        Node::new("dev").with_overlay("mmu"),
        Node::new("mmu"),
    ])
    .unwrap();
    let mut conf = ConfSpaces::new();
    conf.insert(
        "mmu".into(),
        ConfigurableSpace {
            granularity: 0x1000,
            targets: vec!["bus".into()],
        },
    );
    Arc::new(Platform::new(net, conf))
}

fn boot(acm: &[(&str, &str, &str)]) -> MonitorState {
    MonitorState::init(
        platform(),
        ["os".into(), "drv".into(), "app".into()],
        [
            RamRoot {
                oid: "ram".into(),
                base: Name::new("dram", 0),
                size: 0x40000,
            },
            RamRoot {
                oid: "ram2".into(),
                base: Name::new("dram", 0x40000),
                size: 0x40000,
            },
            RamRoot {
                oid: "farram".into(),
                base: Name::new("far", 0),
                size: 0x10000,
            },
        ],
        acm.iter()
            .map(|(s, o, rs)| ((*s).into(), (*o).into(), parse_rights(rs).unwrap())),
    )
    .unwrap()
}

fn os_boot() -> MonitorState {
    boot(&[
        ("os", "ram", "grant"),
        ("os", "ram2", "grant"),
        ("os", "farram", "grant"),
    ])
}

/// Frame f (0x4000 bytes at dram:0x1000), page table pt, space vs.
fn with_space() -> MonitorState {
    os_boot()
        .retype(
            &"os".into(),
            &"ram".into(),
            ObjectType::Frame,
            0x1000,
            0x4000,
            &"f".into(),
        )
        .unwrap()
        .retype(
            &"os".into(),
            &"ram2".into(),
            ObjectType::TStructure,
            0,
            0x1000,
            &"pt".into(),
        )
        .unwrap()
        .derive_address_space(&"os".into(), &"pt".into(), 0x1000, &"vs".into())
        .unwrap()
}

#[test]
fn mapping_trace_installs_translation() {
    let st = with_space()
        .map(
            &"os".into(),
            &"vs".into(),
            r(0x10000, 0x2000),
            &"f".into(),
            0x1000,
            &"m".into(),
        )
        .unwrap();
    assert_eq!(
        st.resolve(&Name::new("vs", 0x10800)).unwrap(),
        Name::new("dram", 0x2800)
    );
    assert!(st.check_static_security().is_empty());
}

#[test]
fn map_without_retype_fails_on_missing_objects() {
    let st = os_boot();
    assert_eq!(
        st.map(&"os".into(), &"vs".into(), r(0, 0x1000), &"f".into(), 0, &"m".into()),
        Err(MonitorError::UnknownAddressSpace("vs".into()))
    );
}

#[test]
fn acm_of_the_dma_example() {
    // The driver may program the space but holds nothing on the buffer;
    // the process owns the buffer but may not program the space.
    let st = os_boot()
        .retype(
            &"os".into(),
            &"ram2".into(),
            ObjectType::TStructure,
            0,
            0x1000,
            &"pt".into(),
        )
        .unwrap()
        .derive_address_space(&"os".into(), &"pt".into(), 0x1000, &"vs".into())
        .unwrap()
        .copy(&"os".into(), &"os".into(), &"vs".into(), Authority::Meta(Right::Map))
        .unwrap()
        .copy(&"os".into(), &"drv".into(), &"vs".into(), Authority::Direct(Right::Map))
        .unwrap()
        .copy(&"os".into(), &"os".into(), &"ram".into(), Authority::Meta(Right::Grant))
        .unwrap()
        .copy(
            &"os".into(),
            &"app".into(),
            &"ram".into(),
            Authority::Direct(Right::Grant),
        )
        .unwrap()
        .retype(
            &"app".into(),
            &"ram".into(),
            ObjectType::Frame,
            0,
            0x1000,
            &"buf".into(),
        )
        .unwrap();
    let drv_map = st.map(&"drv".into(), &"vs".into(), r(0, 0x1000), &"buf".into(), 0, &"m".into());
    assert_eq!(
        drv_map,
        Err(MonitorError::InsufficientRights {
            subject: "drv".into(),
            object: "buf".into(),
            needed: Right::Grant
        })
    );
    let app_map = st.map(&"app".into(), &"vs".into(), r(0, 0x1000), &"buf".into(), 0, &"m".into());
    assert!(matches!(
        app_map,
        Err(MonitorError::InsufficientRights { needed: Right::Map, .. })
    ));

    // Without meta-authority the process cannot hand its Grant over.
    assert!(st
        .copy(
            &"app".into(),
            &"drv".into(),
            &"buf".into(),
            Authority::Direct(Right::Grant)
        )
        .is_err());
    let st = st
        .copy(
            &"app".into(),
            &"app".into(),
            &"buf".into(),
            Authority::Meta(Right::Grant),
        )
        .unwrap()
        .copy(
            &"app".into(),
            &"drv".into(),
            &"buf".into(),
            Authority::Direct(Right::Grant),
        )
        .unwrap();
    let st = st
        .map(&"drv".into(), &"vs".into(), r(0, 0x1000), &"buf".into(), 0, &"m".into())
        .unwrap();
    assert_eq!(st.resolve(&Name::new("vs", 0)).unwrap(), Name::new("dram", 0));
    assert!(st.check_static_security().is_empty());
}

#[test]
fn retype_guards() {
    let st = with_space();
    let os = "os".into();
    assert_eq!(
        st.retype(&os, &"f".into(), ObjectType::Frame, 0, 0x1000, &"g".into()),
        Err(MonitorError::IllegalRetype {
            from: ObjectType::Frame,
            to: ObjectType::Frame
        })
    );
    assert_eq!(
        st.retype(&os, &"ram".into(), ObjectType::Frame, 0x2000, 0x1000, &"g".into()),
        Err(MonitorError::RangeConflict("ram".into()))
    );
    assert_eq!(
        st.retype(&os, &"ram".into(), ObjectType::Frame, 0x3f000, 0x2000, &"g".into()),
        Err(MonitorError::RangeConflict("ram".into()))
    );
    assert_eq!(
        st.retype(&os, &"ram".into(), ObjectType::Frame, 0x8000, 0x1000, &"f".into()),
        Err(MonitorError::DuplicateId("f".into()))
    );
    assert!(matches!(
        st.retype(
            &"app".into(),
            &"ram".into(),
            ObjectType::Frame,
            0x8000,
            0x1000,
            &"g".into()
        ),
        Err(MonitorError::InsufficientRights {
            needed: Right::Grant,
            ..
        })
    ));
    // RAM split, then a frame out of the split
    let st = st
        .retype(&os, &"ram".into(), ObjectType::Ram, 0x10000, 0x10000, &"half".into())
        .unwrap()
        .retype(&os, &"half".into(), ObjectType::Frame, 0x1000, 0x1000, &"g".into())
        .unwrap();
    assert_eq!(st.object(&"g".into()).unwrap().base, Name::new("dram", 0x11000));
    assert!(st.check_static_security().is_empty());
}

#[test]
fn derive_guards() {
    let st = with_space();
    let os = "os".into();
    assert!(matches!(
        st.derive_address_space(&os, &"f".into(), 0x1000, &"v2".into()),
        Err(MonitorError::WrongType { .. })
    ));
    assert_eq!(
        st.derive_address_space(&os, &"pt".into(), 0x1000, &"v2".into()),
        Err(MonitorError::AlreadyDerived("pt".into()))
    );
    let st = st
        .retype(
            &os,
            &"ram2".into(),
            ObjectType::TStructure,
            0x1000,
            0x1000,
            &"pt2".into(),
        )
        .unwrap();
    assert_eq!(
        st.derive_address_space(&os, &"pt2".into(), 0, &"v2".into()),
        Err(MonitorError::BadGranularity)
    );
    assert_eq!(
        st.derive_address_space(&os, &"pt2".into(), 0x1000, &"vs".into()),
        Err(MonitorError::DuplicateId("vs".into()))
    );
    assert_eq!(
        st.derive_address_space(&os, &"pt2".into(), 0x1000, &"dram".into()),
        Err(MonitorError::DuplicateId("dram".into()))
    );
}

#[test]
fn map_guards() {
    let st = with_space();
    let os = "os".into();
    let vs = "vs".into();
    assert!(matches!(
        st.map(&os, &vs, r(0x800, 0x1000), &"f".into(), 0, &"m".into()),
        Err(MonitorError::Misaligned { .. })
    ));
    assert_eq!(
        st.map(&os, &vs, r(0, 0x1000), &"pt".into(), 0, &"m".into()),
        Err(MonitorError::PartitioningViolation("pt".into()))
    );
    assert_eq!(
        st.map(&os, &vs, r(0, 0x1000), &"ram".into(), 0, &"m".into()),
        Err(MonitorError::PartitioningViolation("ram".into()))
    );
    // Past the end of the frame
    assert!(matches!(
        st.map(&os, &vs, r(0, 0x5000), &"f".into(), 0, &"m".into()),
        Err(MonitorError::InsufficientRights {
            needed: Right::Grant,
            ..
        })
    ));
    assert_eq!(
        st.map(&os, &"core".into(), r(0, 0x1000), &"f".into(), 0, &"m".into()),
        Err(MonitorError::StaticSpace("core".into()))
    );
    let st = st.map(&os, &vs, r(0, 0x2000), &"f".into(), 0, &"m".into()).unwrap();
    assert!(matches!(
        st.map(&os, &vs, r(0x1000, 0x1000), &"f".into(), 0, &"m2".into()),
        Err(MonitorError::Overlap { .. })
    ));
    assert_eq!(
        st.map(&os, &vs, r(0x4000, 0x1000), &"f".into(), 0, &"m".into()),
        Err(MonitorError::DuplicateId("m".into()))
    );
}

#[test]
fn rejected_operations_leave_state_equal() {
    let st = with_space();
    let bad = [
        st.map(&"app".into(), &"vs".into(), r(0, 0x1000), &"f".into(), 0, &"m".into()),
        st.revoke(&"app".into(), &"ram".into()),
        st.copy(
            &"os".into(),
            &"app".into(),
            &"pt".into(),
            Authority::Direct(Right::Access),
        ),
    ];
    for b in bad {
        assert!(b.is_err());
    }
    assert_eq!(st, with_space());
}

#[test]
fn unmap_removes_translation() {
    let st = with_space()
        .map(&"os".into(), &"vs".into(), r(0, 0x1000), &"f".into(), 0, &"m".into())
        .unwrap();
    assert!(matches!(
        st.unmap(&"app".into(), &"m".into()),
        Err(MonitorError::InsufficientRights { .. })
    ));
    let st = st.unmap(&"os".into(), &"m".into()).unwrap();
    assert!(st.resolve(&Name::new("vs", 0)).is_err());
    assert!(st.mappings().is_empty());
    assert_eq!(
        st.unmap(&"os".into(), &"m".into()),
        Err(MonitorError::UnknownMapping("m".into()))
    );
}

#[test]
fn copy_rules() {
    let st = with_space();
    let (os, app) = ("os".into(), "app".into());
    // Grant on the object is enough to hand out meta-authority.
    let st = st.copy(&os, &app, &"f".into(), Authority::Meta(Right::Access)).unwrap();
    let st = st
        .copy(&app, &app, &"f".into(), Authority::Direct(Right::Access))
        .unwrap();
    assert!(st.acm().check(&app, &"f".into(), Right::Access));
    // Partitioning is checked even for the owner.
    assert_eq!(
        st.copy(&os, &os, &"pt".into(), Authority::Meta(Right::Access)),
        Err(MonitorError::PartitioningViolation("pt".into()))
    );
    assert_eq!(
        st.copy(&os, &"ghost".into(), &"f".into(), Authority::Direct(Right::Grant)),
        Err(MonitorError::UnknownSubject("ghost".into()))
    );
    assert!(st.check_static_security().is_empty());
}

#[test]
fn revoke_removes_descendants_and_their_rights() {
    let st = with_space()
        .map(&"os".into(), &"vs".into(), r(0, 0x1000), &"f".into(), 0, &"m".into())
        .unwrap()
        .copy(&"os".into(), &"app".into(), &"f".into(), Authority::Meta(Right::Access))
        .unwrap();
    let gone = st.revoke(&"os".into(), &"ram".into()).unwrap();
    assert!(gone.object(&"ram".into()).is_none());
    assert!(gone.object(&"f".into()).is_none());
    assert!(gone.mappings().is_empty());
    assert!(gone.acm().column(&"f".into()).is_empty());
    assert!(gone.space(&"vs".into()).is_some());
    assert!(gone.check_static_security().is_empty());

    let gone = st.revoke(&"os".into(), &"pt".into()).unwrap();
    assert!(gone.space(&"vs".into()).is_none());
    assert!(gone.mappings().is_empty());
    assert!(gone.acm().column(&"vs".into()).is_empty());
    assert!(gone.object(&"f".into()).is_some());
    assert!(gone.check_static_security().is_empty());
}

#[test]
fn modify_map_is_atomic() {
    let st = with_space()
        .map(&"os".into(), &"vs".into(), r(0, 0x1000), &"f".into(), 0, &"a".into())
        .unwrap();
    let reps = [
        Replacement {
            dst: r(0, 0x1000),
            obj: "f".into(),
            obj_offset: 0x1000,
            mid: "b".into(),
        },
        Replacement {
            dst: r(0x1000, 0x1000),
            obj: "pt".into(),
            obj_offset: 0,
            mid: "c".into(),
        },
    ];
    assert_eq!(
        st.modify_map(&"os".into(), &"vs".into(), &reps),
        Err(MonitorError::PartitioningViolation("pt".into()))
    );
    assert_eq!(st.modify_map(&"os".into(), &"vs".into(), &[]).unwrap(), st);
    let ok = st.modify_map(&"os".into(), &"vs".into(), &reps[..1]).unwrap();
    assert_eq!(ok.resolve(&Name::new("vs", 0)).unwrap(), Name::new("dram", 0x2000));
    assert!(ok.mapping(&"a".into()).is_none());
}

#[test]
fn modify_map_swap_matches_unmap_then_map() {
    let os = "os".into();
    let vs = "vs".into();
    let st = with_space()
        .map(&os, &vs, r(0, 0x1000), &"f".into(), 0, &"lo".into())
        .unwrap()
        .map(&os, &vs, r(0x1000, 0x1000), &"f".into(), 0x1000, &"hi".into())
        .unwrap();
    let swapped = st
        .modify_map(
            &os,
            &vs,
            &[
                Replacement {
                    dst: r(0, 0x1000),
                    obj: "f".into(),
                    obj_offset: 0x1000,
                    mid: "lo2".into(),
                },
                Replacement {
                    dst: r(0x1000, 0x1000),
                    obj: "f".into(),
                    obj_offset: 0,
                    mid: "hi2".into(),
                },
            ],
        )
        .unwrap();
    let stepwise = st
        .unmap(&os, &"lo".into())
        .and_then(|s| s.unmap(&os, &"hi".into()))
        .and_then(|s| s.map(&os, &vs, r(0, 0x1000), &"f".into(), 0x1000, &"lo2".into()))
        .and_then(|s| s.map(&os, &vs, r(0x1000, 0x1000), &"f".into(), 0, &"hi2".into()))
        .unwrap();
    assert_eq!(swapped, stepwise);
    assert_eq!(swapped.resolve(&Name::new("vs", 0)).unwrap(), Name::new("dram", 0x2000));
    assert_eq!(
        swapped.resolve(&Name::new("vs", 0x1000)).unwrap(),
        Name::new("dram", 0x1000)
    );
}

#[test]
fn programmable_node_binding() {
    let os = "os".into();
    let mmu = "mmu".into();
    let st = with_space()
        .retype(
            &os,
            &"ram2".into(),
            ObjectType::TStructure,
            0x1000,
            0x1000,
            &"iopt".into(),
        )
        .unwrap()
        .retype(&os, &"farram".into(), ObjectType::Frame, 0, 0x1000, &"farf".into())
        .unwrap();
    assert_eq!(
        st.map(&os, &mmu, r(0, 0x1000), &"f".into(), 0, &"m".into()),
        Err(MonitorError::UnknownAddressSpace("mmu".into()))
    );
    assert!(matches!(
        st.derive_address_space(&os, &"iopt".into(), 0x2000, &mmu),
        Err(MonitorError::GranularityMismatch { declared: 0x1000, .. })
    ));
    let st = st.derive_address_space(&os, &"iopt".into(), 0x1000, &mmu).unwrap();
    assert_eq!(st.space(&mmu).unwrap().whitelist, Some(vec!["bus".into()]));

    // The device now reaches the frame through the bus window.
    let st2 = st
        .map(&os, &mmu, r(0x10000, 0x1000), &"f".into(), 0, &"m".into())
        .unwrap();
    let rec = st2.mapping(&"m".into()).unwrap();
    assert_eq!(rec.via, Name::new("bus", 0x8000_1000));
    assert_eq!(
        st2.resolve(&Name::new("dev", 0x10000)).unwrap(),
        Name::new("dram", 0x1000)
    );
    assert!(st2.check_static_security().is_empty());

    // Memory the bus cannot name is out of reach for the mmu.
    assert_eq!(
        st.map(&os, &mmu, r(0x10000, 0x1000), &"farf".into(), 0, &"m".into()),
        Err(MonitorError::AddressSpaceMismatch {
            asid: "mmu".into(),
            object: "farf".into()
        })
    );
}

#[test]
fn guards_off_skips_rights_but_not_structure() {
    let st = with_space().with_guards_disabled();
    let app = "app".into();
    let st = st
        .map(&app, &"vs".into(), r(0, 0x1000), &"pt".into(), 0, &"m".into())
        .unwrap();
    assert!(!st.check_static_security().is_empty());
    assert!(matches!(
        st.map(&app, &"vs".into(), r(0, 0x1000), &"f".into(), 0, &"m2".into()),
        Err(MonitorError::Overlap { .. })
    ));
}
