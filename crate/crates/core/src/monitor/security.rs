//! Static security check: is the current configuration consistent with the
//! access-control matrix and the hardware configuration spaces?

use std::fmt;

use crate::authority::{Authority, ObjectId, Right, SubjectId};
use crate::decoding_net::{well_formed, AddressRange, NodeId, Violation};

use super::{AddressSpaceId, MappingId, MdbRef, MonitorState, ObjectType};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SecurityViolation {
    /// A mapping outside the space's configuration space.
    Misaligned {
        asid: AddressSpaceId,
        mid: MappingId,
        granularity: u64,
    },
    OverlappingMappings {
        asid: AddressSpaceId,
        first: MappingId,
        second: MappingId,
    },
    /// A fixed platform node differs from its platform description.
    StaticSpaceChanged(NodeId),
    /// A subject holds access to a translation structure.
    AccessToTranslationObject {
        subject: SubjectId,
        object: ObjectId,
    },
    /// A mapping makes (part of) a translation structure reachable.
    MappingExposesTranslationObject {
        mid: MappingId,
        object: ObjectId,
    },
    /// A mapping whose target is not a frame.
    MappingOfNonFrame {
        mid: MappingId,
        object: ObjectId,
    },
    /// A mapping the recorded rights of its creator do not justify.
    UnjustifiedMapping {
        mid: MappingId,
        missing: Right,
    },
    /// A mapping does not resolve to the canonical range of its target.
    MisroutedMapping {
        mid: MappingId,
    },
    DanglingReference {
        from: String,
        to: String,
    },
    /// A child object not contained in its parent, or overlapping a sibling.
    MdbShape {
        parent: ObjectId,
        child: ObjectId,
    },
    Projection(Violation),
}

impl SecurityViolation {
    pub fn code(&self) -> &'static str {
        match self {
            SecurityViolation::Misaligned { .. } | SecurityViolation::OverlappingMappings { .. } => {
                "ConfigurationSpace"
            }
            SecurityViolation::StaticSpaceChanged(_) => "StaticSpaceChanged",
            SecurityViolation::AccessToTranslationObject { .. }
            | SecurityViolation::MappingExposesTranslationObject { .. }
            | SecurityViolation::MappingOfNonFrame { .. } => "PartitioningViolation",
            SecurityViolation::UnjustifiedMapping { .. } => "UnjustifiedMapping",
            SecurityViolation::MisroutedMapping { .. } => "MisroutedMapping",
            SecurityViolation::DanglingReference { .. } => "DanglingReference",
            SecurityViolation::MdbShape { .. } => "MdbShape",
            SecurityViolation::Projection(_) => "Projection",
        }
    }
}

impl fmt::Display for SecurityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SecurityViolation::*;
        match self {
            Misaligned { asid, mid, granularity } => write!(f, "{mid} in {asid} is not {granularity:#x}-aligned"),
            OverlappingMappings { asid, first, second } => write!(f, "{first} and {second} overlap in {asid}"),
            StaticSpaceChanged(n) => write!(f, "fixed node {n} was reconfigured"),
            AccessToTranslationObject { subject, object } => {
                write!(f, "{subject} holds access to translation object {object}")
            }
            MappingExposesTranslationObject { mid, object } => {
                write!(f, "{mid} exposes translation object {object}")
            }
            MappingOfNonFrame { mid, object } => write!(f, "{mid} maps non-frame {object}"),
            UnjustifiedMapping { mid, missing } => {
                write!(f, "{mid} was created without {missing}")
            }
            MisroutedMapping { mid } => write!(f, "{mid} does not reach its target"),
            DanglingReference { from, to } => write!(f, "{from} refers to missing {to}"),
            MdbShape { parent, child } => write!(f, "{child} is not a disjoint part of {parent}"),
            Projection(v) => write!(f, "projection: {v}"),
        }
    }
}

impl MonitorState {
    /// Lists every way the state breaks the configuration-space invariant,
    /// the partitioning invariant, or consistency with the matrix. Empty
    /// means statically secure.
    pub fn check_static_security(&self) -> Vec<SecurityViolation> {
        let mut out = Vec::new();
        self.check_configuration(&mut out);
        self.check_partitioning(&mut out);
        self.check_justification(&mut out);
        self.check_references(&mut out);
        self.check_mdb_shape(&mut out);
        out
    }

    fn check_configuration(&self, out: &mut Vec<SecurityViolation>) {
        for space in self.spaces.values() {
            let g = space.granularity;
            let mut recs: Vec<_> = space.mappings.iter().filter_map(|m| self.mappings.get(m)).collect();
            for rec in &recs {
                if g == 0 || rec.src.base() % g != 0 || rec.src.size() % g != 0 {
                    out.push(SecurityViolation::Misaligned {
                        asid: space.asid.clone(),
                        mid: rec.mid.clone(),
                        granularity: g,
                    });
                }
            }
            recs.sort_by_key(|r| r.src);
            for pair in recs.windows(2) {
                if pair[0].src.overlaps(&pair[1].src) {
                    out.push(SecurityViolation::OverlappingMappings {
                        asid: space.asid.clone(),
                        first: pair[0].mid.clone(),
                        second: pair[1].mid.clone(),
                    });
                }
            }
        }
        let projected = self.project();
        for node in self.platform.net.nodes() {
            let bound = self.spaces.contains_key(&ObjectId::new(node.id.as_str()));
            let now = projected.node(&node.id);
            let unchanged = match now {
                Some(n) if bound => n.accept == node.accept && n.overlay == node.overlay,
                Some(n) => n == node,
                None => false,
            };
            if !unchanged {
                out.push(SecurityViolation::StaticSpaceChanged(node.id.clone()));
            }
        }
        out.extend(well_formed(&projected).into_iter().map(SecurityViolation::Projection));
    }

    fn check_partitioning(&self, out: &mut Vec<SecurityViolation>) {
        for (s, o, rights) in self.acm.entries() {
            let is_tstruct = self
                .objects
                .get(o)
                .is_some_and(|obj| obj.otype == ObjectType::TStructure);
            if is_tstruct && rights.iter().any(|a| a.right() == Right::Access) {
                out.push(SecurityViolation::AccessToTranslationObject {
                    subject: s.clone(),
                    object: o.clone(),
                });
            }
        }
        let tstructs: Vec<_> = self
            .objects
            .values()
            .filter(|o| o.otype == ObjectType::TStructure)
            .collect();
        let projected = self.project();
        for rec in self.mappings.values() {
            let Some(target) = self.objects.get(&rec.target) else {
                continue;
            };
            if target.otype != ObjectType::Frame {
                out.push(SecurityViolation::MappingOfNonFrame {
                    mid: rec.mid.clone(),
                    object: rec.target.clone(),
                });
            }
            let reached = projected.resolve_range(
                &crate::decoding_net::Name::new(rec.aspace.as_str(), rec.src.base()),
                rec.src.size(),
            );
            let expected = AddressRange::new(target.base.addr.saturating_add(rec.target_offset), rec.src.size());
            match (&reached, expected) {
                (Ok(ranges), Ok(want)) => {
                    let exact = ranges.len() == 1 && ranges[0].node == target.base.node && ranges[0].range == want;
                    if !exact {
                        out.push(SecurityViolation::MisroutedMapping { mid: rec.mid.clone() });
                    }
                    for t in &tstructs {
                        let hit = ranges
                            .iter()
                            .any(|c| c.node == t.base.node && c.range.overlaps(&t.range()));
                        if hit {
                            out.push(SecurityViolation::MappingExposesTranslationObject {
                                mid: rec.mid.clone(),
                                object: t.oid.clone(),
                            });
                        }
                    }
                }
                _ => out.push(SecurityViolation::MisroutedMapping { mid: rec.mid.clone() }),
            }
        }
    }

    fn check_justification(&self, out: &mut Vec<SecurityViolation>) {
        for rec in self.mappings.values() {
            let j = &rec.justification;
            if !j.on_space.contains(&Authority::Direct(Right::Map)) {
                out.push(SecurityViolation::UnjustifiedMapping {
                    mid: rec.mid.clone(),
                    missing: Right::Map,
                });
            }
            if !j.on_target.contains(&Authority::Direct(Right::Grant)) {
                out.push(SecurityViolation::UnjustifiedMapping {
                    mid: rec.mid.clone(),
                    missing: Right::Grant,
                });
            }
        }
    }

    fn check_references(&self, out: &mut Vec<SecurityViolation>) {
        let mut dangling = |from: String, to: String| {
            out.push(SecurityViolation::DanglingReference { from, to });
        };
        for (s, o, _) in self.acm.entries() {
            if !self.subjects.contains(s) {
                dangling(format!("acm entry ({s}, {o})"), s.to_string());
            }
            if crate::authority::AuthorityContext::object_kind(self, o).is_none() {
                dangling(format!("acm entry ({s}, {o})"), o.to_string());
            }
        }
        for rec in self.mappings.values() {
            if !self.spaces.contains_key(&rec.aspace) {
                dangling(rec.mid.to_string(), rec.aspace.to_string());
            }
            if !self.objects.contains_key(&rec.target) {
                dangling(rec.mid.to_string(), rec.target.to_string());
            }
            if !self.mdb.contains(&MdbRef::Mapping(rec.mid.clone())) {
                dangling("mdb".into(), rec.mid.to_string());
            }
        }
        for space in self.spaces.values() {
            if !self.objects.contains_key(&space.backing) {
                dangling(space.asid.to_string(), space.backing.to_string());
            }
            for m in &space.mappings {
                if !self.mappings.contains_key(m) {
                    dangling(space.asid.to_string(), m.to_string());
                }
            }
        }
        for entry in self.mdb.entries() {
            let live = match entry {
                MdbRef::Object(o) => self.objects.contains_key(o),
                MdbRef::Space(a) => self.spaces.contains_key(a),
                MdbRef::Mapping(m) => self.mappings.contains_key(m),
            };
            if !live {
                dangling("mdb".into(), entry.to_string());
            }
        }
    }

    fn check_mdb_shape(&self, out: &mut Vec<SecurityViolation>) {
        for obj in self.objects.values() {
            let Some(pid) = &obj.parent else { continue };
            let Some(parent) = self.objects.get(pid) else {
                out.push(SecurityViolation::DanglingReference {
                    from: obj.oid.to_string(),
                    to: pid.to_string(),
                });
                continue;
            };
            let contained = parent.base.node == obj.base.node && parent.range().contains_range(&obj.range());
            if !contained {
                out.push(SecurityViolation::MdbShape {
                    parent: pid.clone(),
                    child: obj.oid.clone(),
                });
            }
        }
        for entry in self.mdb.entries() {
            let MdbRef::Object(pid) = entry else { continue };
            let mut kids: Vec<_> = self
                .mdb
                .children(entry)
                .filter_map(|c| match c {
                    MdbRef::Object(o) => self.objects.get(o),
                    _ => None,
                })
                .collect();
            kids.sort_by_key(|k| k.range());
            for pair in kids.windows(2) {
                if pair[0].range().overlaps(&pair[1].range()) {
                    out.push(SecurityViolation::MdbShape {
                        parent: pid.clone(),
                        child: pair[1].oid.clone(),
                    });
                }
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::authority::Rights;
    use crate::decoding_net::{ConfSpaces, DecodingNet, Name, Node, Platform};
    use crate::monitor::{MappingRecord, RamRoot};

    fn r(base: u64, size: u64) -> AddressRange {
        AddressRange::new(base, size).unwrap()
    }

    pub(crate) fn booted() -> MonitorState {
        let net = DecodingNet::build([
            Node::new("core").with_segment(r(0, 0x100000), "dram", 0),
            Node::new("dram").with_accept(r(0, 0x100000)),
        ])
        .unwrap();
        let platform = Arc::new(Platform::new(net, ConfSpaces::new()));
        let grant: Rights = [Authority::Direct(Right::Grant)].into();
        let st = MonitorState::init(
            platform,
            ["os".into()],
            [RamRoot {
                oid: "ram".into(),
                base: Name::new("dram", 0),
                size: 0x100000,
            }],
            [("os".into(), "ram".into(), grant)],
        )
        .unwrap();
        let st = st
            .retype(&"os".into(), &"ram".into(), ObjectType::Frame, 0, 0x4000, &"f".into())
            .unwrap();
        let st = st
            .retype(
                &"os".into(),
                &"ram".into(),
                ObjectType::TStructure,
                0x10000,
                0x1000,
                &"pt".into(),
            )
            .unwrap();
        st.derive_address_space(&"os".into(), &"pt".into(), 0x1000, &"vs".into())
            .unwrap()
    }

    #[test]
    fn clean_state_has_empty_report() {
        let st = booted()
            .map(
                &"os".into(),
                &"vs".into(),
                r(0x1000, 0x2000),
                &"f".into(),
                0,
                &"m".into(),
            )
            .unwrap();
        assert_eq!(st.check_static_security(), vec![]);
    }

    #[test]
    fn hand_built_tstructure_mapping_is_flagged() {
        let mut st = booted();
        let rec = MappingRecord {
            mid: "bad".into(),
            aspace: "vs".into(),
            src: r(0, 0x1000),
            target: "pt".into(),
            target_offset: 0,
            via: Name::new("dram", 0x10000),
            creator: "os".into(),
            justification: crate::monitor::Justification {
                on_space: [Authority::Direct(Right::Map)].into(),
                on_target: [Authority::Direct(Right::Grant)].into(),
            },
        };
        st.mappings.insert("bad".into(), rec);
        st.spaces.get_mut(&"vs".into()).unwrap().mappings.insert("bad".into());
        st.mdb
            .insert(MdbRef::Mapping("bad".into()), Some(MdbRef::Object("pt".into())));
        let report = st.check_static_security();
        let partitioning: Vec<_> = report
            .iter()
            .filter(|v| matches!(v, SecurityViolation::MappingExposesTranslationObject { .. }))
            .collect();
        assert_eq!(partitioning.len(), 1);
        assert!(report.iter().all(|v| v.code() == "PartitioningViolation"));
    }

    #[test]
    fn hand_built_misaligned_mapping_is_flagged() {
        let st = booted()
            .map(
                &"os".into(),
                &"vs".into(),
                r(0x1000, 0x1000),
                &"f".into(),
                0,
                &"m".into(),
            )
            .unwrap();
        let mut st = st;
        let rec = st.mappings.get_mut(&MappingId::from("m")).unwrap();
        rec.src = r(0x1800, 0x1000);
        rec.via = Name::new("dram", 0);
        let report = st.check_static_security();
        assert_eq!(report.len(), 1, "{report:?}");
        assert!(matches!(report[0], SecurityViolation::Misaligned { .. }));
    }

    #[test]
    fn access_on_tstructure_flagged() {
        let mut st = booted();
        st.acm
            .add_unchecked(&"os".into(), &"pt".into(), Authority::Direct(Right::Access));
        let report = st.check_static_security();
        assert_eq!(
            report,
            vec![SecurityViolation::AccessToTranslationObject {
                subject: "os".into(),
                object: "pt".into()
            }]
        );
    }
}
