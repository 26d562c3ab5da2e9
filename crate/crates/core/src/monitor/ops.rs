//! Guarded state transitions.

use std::collections::BTreeSet;
use std::fmt;

use crate::authority::{check_partitioning, Authority, AuthorityContext, ObjectId, Right, Rights, SubjectId};
use crate::decoding_net::{AddressRange, Name, NodeId};

use super::{
    AddressSpace, AddressSpaceId, Justification, MappingId, MappingRecord, MdbRef, MemoryObject, MonitorError,
    MonitorState, ObjectType,
};

/// One entry of a [`MonitorState::modify_map`] request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replacement {
    pub dst: AddressRange,
    pub obj: ObjectId,
    pub obj_offset: u64,
    pub mid: MappingId,
}

/// A monitor operation, as it appears in a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operation {
    Retype {
        subject: SubjectId,
        parent: ObjectId,
        new_type: ObjectType,
        offset: u64,
        size: u64,
        new_oid: ObjectId,
    },
    Derive {
        subject: SubjectId,
        tstruct: ObjectId,
        granularity: u64,
        asid: AddressSpaceId,
    },
    Map {
        subject: SubjectId,
        asid: AddressSpaceId,
        dst: AddressRange,
        oid: ObjectId,
        obj_offset: u64,
        mid: MappingId,
    },
    Unmap {
        subject: SubjectId,
        mid: MappingId,
    },
    Copy {
        from: SubjectId,
        to: SubjectId,
        oid: ObjectId,
        authority: Authority,
    },
    Revoke {
        subject: SubjectId,
        oid: ObjectId,
    },
    ModifyMap {
        subject: SubjectId,
        asid: AddressSpaceId,
        replacements: Vec<Replacement>,
    },
}

impl Operation {
    /// The subject performing the operation.
    pub fn subject(&self) -> &SubjectId {
        match self {
            Operation::Retype { subject, .. }
            | Operation::Derive { subject, .. }
            | Operation::Map { subject, .. }
            | Operation::Unmap { subject, .. }
            | Operation::Revoke { subject, .. }
            | Operation::ModifyMap { subject, .. } => subject,
            Operation::Copy { from, .. } => from,
        }
    }
}

/// Renders the operation in trace-file syntax.
impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Retype {
                subject,
                parent,
                new_type,
                offset,
                size,
                new_oid,
            } => write!(
                f,
                "retype {subject} {parent} {new_type} {offset:#x} {size:#x} {new_oid}"
            ),
            Operation::Derive {
                subject,
                tstruct,
                granularity,
                asid,
            } => write!(f, "derive {subject} {tstruct} {granularity:#x} {asid}"),
            Operation::Map {
                subject,
                asid,
                dst,
                oid,
                obj_offset,
                mid,
            } => write!(
                f,
                "map {subject} {asid} {:#x} {:#x} {oid} {obj_offset:#x} {mid}",
                dst.base(),
                dst.size()
            ),
            Operation::Unmap { subject, mid } => write!(f, "unmap {subject} {mid}"),
            Operation::Copy {
                from,
                to,
                oid,
                authority,
            } => write!(f, "copy {from} {to} {oid} {authority}"),
            Operation::Revoke { subject, oid } => write!(f, "revoke {subject} {oid}"),
            Operation::ModifyMap {
                subject,
                asid,
                replacements,
            } => {
                write!(f, "modify {subject} {asid}")?;
                for r in replacements {
                    write!(
                        f,
                        " {:#x} {:#x} {} {:#x} {}",
                        r.dst.base(),
                        r.dst.size(),
                        r.obj,
                        r.obj_offset,
                        r.mid
                    )?;
                }
                Ok(())
            }
        }
    }
}

impl MonitorState {
    /// Applies one operation. On error `self` is untouched.
    pub fn apply(&self, op: &Operation) -> Result<MonitorState, MonitorError> {
        match op {
            Operation::Retype {
                subject,
                parent,
                new_type,
                offset,
                size,
                new_oid,
            } => self.retype(subject, parent, *new_type, *offset, *size, new_oid),
            Operation::Derive {
                subject,
                tstruct,
                granularity,
                asid,
            } => self.derive_address_space(subject, tstruct, *granularity, asid),
            Operation::Map {
                subject,
                asid,
                dst,
                oid,
                obj_offset,
                mid,
            } => self.map(subject, asid, *dst, oid, *obj_offset, mid),
            Operation::Unmap { subject, mid } => self.unmap(subject, mid),
            Operation::Copy {
                from,
                to,
                oid,
                authority,
            } => self.copy(from, to, oid, *authority),
            Operation::Revoke { subject, oid } => self.revoke(subject, oid),
            Operation::ModifyMap {
                subject,
                asid,
                replacements,
            } => self.modify_map(subject, asid, replacements),
        }
    }

    /// Carves a new object of `new_type` out of `[offset, offset + size)` of
    /// the RAM object `parent`. The caller receives `Grant` on the child.
    pub fn retype(
        &self,
        s: &SubjectId,
        parent: &ObjectId,
        new_type: ObjectType,
        offset: u64,
        size: u64,
        new_oid: &ObjectId,
    ) -> Result<MonitorState, MonitorError> {
        self.require_subject(s)?;
        let p = self.require_object(parent)?;
        self.require(s, parent, Right::Grant)?;
        if !p.otype.can_retype_to(new_type) {
            return Err(MonitorError::IllegalRetype {
                from: p.otype,
                to: new_type,
            });
        }
        self.check_fresh_object_id(new_oid)?;
        let conflict = || MonitorError::RangeConflict(parent.clone());
        let local = AddressRange::new(offset, size).map_err(|_| conflict())?;
        if local.end() > p.size {
            return Err(conflict());
        }
        let child_range = local.rebased(p.base.addr + offset)?;
        let clash = self
            .mdb
            .children(&MdbRef::Object(parent.clone()))
            .filter_map(|c| match c {
                MdbRef::Object(o) => self.objects.get(o),
                _ => None,
            })
            .any(|sib| sib.range().overlaps(&child_range));
        if clash {
            return Err(conflict());
        }

        let mut next = self.clone();
        next.objects.insert(
            new_oid.clone(),
            MemoryObject {
                oid: new_oid.clone(),
                otype: new_type,
                base: Name::new(p.base.node.clone(), child_range.base()),
                size,
                parent: Some(parent.clone()),
            },
        );
        next.mdb
            .insert(MdbRef::Object(new_oid.clone()), Some(MdbRef::Object(parent.clone())));
        next.acm.add_unchecked(s, new_oid, Authority::Direct(Right::Grant));
        Ok(next)
    }

    /// Creates an empty address space defined by the translation structure
    /// `tstruct`; the caller receives `Map` and `Grant` on it. If `asid` names a configurable platform node, the space
    /// programs that node and inherits its granularity and whitelist.
    pub fn derive_address_space(
        &self,
        s: &SubjectId,
        tstruct: &ObjectId,
        granularity: u64,
        asid: &AddressSpaceId,
    ) -> Result<MonitorState, MonitorError> {
        self.require_subject(s)?;
        let t = self.require_object(tstruct)?;
        self.require(s, tstruct, Right::Grant)?;
        if t.otype != ObjectType::TStructure {
            return Err(MonitorError::WrongType {
                object: tstruct.clone(),
                expected: ObjectType::TStructure,
            });
        }
        if self.spaces.values().any(|sp| &sp.backing == tstruct) {
            return Err(MonitorError::AlreadyDerived(tstruct.clone()));
        }
        if granularity == 0 {
            return Err(MonitorError::BadGranularity);
        }
        let node = NodeId::new(asid.as_str());
        let whitelist = match self.platform.conf.get(&node) {
            Some(conf) => {
                if self.spaces.contains_key(asid) {
                    return Err(MonitorError::DuplicateId(asid.to_string()));
                }
                if conf.granularity != granularity {
                    return Err(MonitorError::GranularityMismatch {
                        asid: asid.clone(),
                        declared: conf.granularity,
                        requested: granularity,
                    });
                }
                let mut wl = conf.targets.clone();
                wl.sort();
                Some(wl)
            }
            None => {
                self.check_fresh_object_id(asid)?;
                None
            }
        };

        let mut next = self.clone();
        next.spaces.insert(
            asid.clone(),
            AddressSpace {
                asid: asid.clone(),
                backing: tstruct.clone(),
                granularity,
                mappings: BTreeSet::new(),
                whitelist,
            },
        );
        next.mdb
            .insert(MdbRef::Space(asid.clone()), Some(MdbRef::Object(tstruct.clone())));
        next.acm.add_unchecked(s, asid, Authority::Direct(Right::Map));
        next.acm.add_unchecked(s, asid, Authority::Direct(Right::Grant));
        Ok(next)
    }

    /// Installs a translation of `dst` in `asid` onto the frame `obj` at
    /// `obj_offset`. Needs `Map` on the space and `Grant` on the frame.
    pub fn map(
        &self,
        s: &SubjectId,
        asid: &AddressSpaceId,
        dst: AddressRange,
        obj: &ObjectId,
        obj_offset: u64,
        mid: &MappingId,
    ) -> Result<MonitorState, MonitorError> {
        let mut next = self.clone();
        next.map_in_place(s, asid, dst, obj, obj_offset, mid)?;
        Ok(next)
    }

    fn map_in_place(
        &mut self,
        s: &SubjectId,
        asid: &AddressSpaceId,
        dst: AddressRange,
        obj: &ObjectId,
        obj_offset: u64,
        mid: &MappingId,
    ) -> Result<(), MonitorError> {
        self.require_subject(s)?;
        let space = self.require_space(asid)?.clone();
        let target = self.require_object(obj)?.clone();
        if self.mappings.contains_key(mid) {
            return Err(MonitorError::DuplicateId(mid.to_string()));
        }
        self.require(s, asid, Right::Map)?;
        self.require(s, obj, Right::Grant)?;
        if self.guards_on() && target.otype != ObjectType::Frame {
            return Err(MonitorError::PartitioningViolation(obj.clone()));
        }
        // Bytes past the end of the frame are not covered by the Grant.
        let in_bounds = obj_offset.checked_add(dst.size()).is_some_and(|end| end <= target.size);
        if self.guards_on() && !in_bounds {
            return Err(MonitorError::InsufficientRights {
                subject: s.clone(),
                object: obj.clone(),
                needed: Right::Grant,
            });
        }
        let g = space.granularity;
        if !dst.base().is_multiple_of(g) || !dst.size().is_multiple_of(g) {
            return Err(MonitorError::Misaligned {
                asid: asid.clone(),
                range: dst,
                granularity: g,
            });
        }
        if self.occupied(&space).iter().any(|r| r.overlaps(&dst)) {
            return Err(MonitorError::Overlap {
                asid: asid.clone(),
                range: dst,
            });
        }
        let canonical = Name::new(
            target.base.node.clone(),
            target
                .base
                .addr
                .checked_add(obj_offset)
                .ok_or(crate::decoding_net::NetError::AddressOverflow {
                    base: target.base.addr,
                    size: obj_offset,
                })?,
        );
        AddressRange::new(canonical.addr, dst.size())?;
        let via = self.mapping_target(&space, &canonical, dst.size(), obj)?;

        let justification = Justification {
            on_space: self.acm.entry(s, asid).cloned().unwrap_or_default(),
            on_target: self.acm.entry(s, obj).cloned().unwrap_or_default(),
        };
        self.mappings.insert(
            mid.clone(),
            MappingRecord {
                mid: mid.clone(),
                aspace: asid.clone(),
                src: dst,
                target: obj.clone(),
                target_offset: obj_offset,
                via,
                creator: s.clone(),
                justification,
            },
        );
        self.spaces
            .get_mut(asid)
            .expect("space checked above")
            .mappings
            .insert(mid.clone());
        self.mdb
            .insert(MdbRef::Mapping(mid.clone()), Some(MdbRef::Object(obj.clone())));

        if space.whitelist.is_some() && self.guards_on() {
            // The new segment must reach the frame without looping back.
            let reached = self.project().resolve(&Name::new(asid.as_str(), dst.base()));
            if reached.as_ref() != Ok(&canonical) {
                return Err(MonitorError::AddressSpaceMismatch {
                    asid: asid.clone(),
                    object: obj.clone(),
                });
            }
        }
        Ok(())
    }

    /// Where a segment of `space` must point so that `size` bytes from
    /// `canonical` are reached. Spaces without a whitelist point straight
    /// at the canonical name; otherwise the first whitelisted context (in
    /// id order) whose current view contains the whole range is used.
    fn mapping_target(
        &self,
        space: &AddressSpace,
        canonical: &Name,
        size: u64,
        obj: &ObjectId,
    ) -> Result<Name, MonitorError> {
        let Some(whitelist) = &space.whitelist else {
            return Ok(canonical.clone());
        };
        let net = self.project();
        let want_end = canonical.addr + size;
        for ctx in whitelist {
            let Ok(view) = net.view(ctx) else { continue };
            for run in &view {
                let Ok(start) = &run.target else { continue };
                let run_end = start.addr.checked_add(run.local.size());
                if start.node == canonical.node
                    && start.addr <= canonical.addr
                    && run_end.is_some_and(|e| want_end <= e)
                {
                    return Ok(Name::new(ctx.clone(), run.local.base() + (canonical.addr - start.addr)));
                }
            }
        }
        if self.guards_on() {
            Err(MonitorError::AddressSpaceMismatch {
                asid: space.asid.clone(),
                object: obj.clone(),
            })
        } else {
            Ok(canonical.clone())
        }
    }

    /// Removes one mapping. Needs `Map` on its space.
    pub fn unmap(&self, s: &SubjectId, mid: &MappingId) -> Result<MonitorState, MonitorError> {
        let mut next = self.clone();
        next.unmap_in_place(s, mid)?;
        Ok(next)
    }

    fn unmap_in_place(&mut self, s: &SubjectId, mid: &MappingId) -> Result<(), MonitorError> {
        self.require_subject(s)?;
        let rec = self
            .mappings
            .get(mid)
            .ok_or_else(|| MonitorError::UnknownMapping(mid.clone()))?;
        let asid = rec.aspace.clone();
        self.require(s, &asid, Right::Map)?;
        self.drop_mapping(mid);
        Ok(())
    }

    fn drop_mapping(&mut self, mid: &MappingId) {
        if let Some(rec) = self.mappings.remove(mid) {
            if let Some(space) = self.spaces.get_mut(&rec.aspace) {
                space.mappings.remove(mid);
            }
            self.mdb.remove(&MdbRef::Mapping(mid.clone()));
        }
    }

    /// Hands an authority on `o` from `from` to `to`. A direct right needs
    /// the matching meta-authority; a meta-authority needs `Grant` on `o`.
    pub fn copy(
        &self,
        from: &SubjectId,
        to: &SubjectId,
        o: &ObjectId,
        authority: Authority,
    ) -> Result<MonitorState, MonitorError> {
        self.require_subject(from)?;
        self.require_subject(to)?;
        let kind = self
            .object_kind(o)
            .ok_or_else(|| MonitorError::UnknownObject(o.clone()))?;
        if self.guards_on() {
            check_partitioning(kind, o, &Rights::from([authority]))?;
            let (needed, held) = match authority {
                Authority::Direct(r) => (r, self.acm.holds(from, o, Authority::Meta(r))),
                Authority::Meta(_) => (Right::Grant, self.acm.check(from, o, Right::Grant)),
            };
            if !held {
                return Err(MonitorError::InsufficientRights {
                    subject: from.clone(),
                    object: o.clone(),
                    needed,
                });
            }
        }
        let mut next = self.clone();
        next.acm.add_unchecked(to, o, authority);
        Ok(next)
    }

    /// Deletes `o` and everything derived from it: child objects, address
    /// spaces defined by them (with all their mappings), mappings of any
    /// deleted frame, and every matrix entry naming a deleted entity.
    pub fn revoke(&self, s: &SubjectId, o: &ObjectId) -> Result<MonitorState, MonitorError> {
        self.require_subject(s)?;
        self.require_object(o)?;
        self.require(s, o, Right::Grant)?;
        let root = MdbRef::Object(o.clone());
        let mut doomed = self.mdb.descendants_post_order(&root);
        doomed.push(root);

        let mut next = self.clone();
        for entry in doomed {
            if !next.mdb.contains(&entry) {
                continue;
            }
            match &entry {
                MdbRef::Mapping(mid) => next.drop_mapping(mid),
                MdbRef::Space(asid) => {
                    if let Some(space) = next.spaces.get(asid) {
                        let mids: Vec<MappingId> = space.mappings.iter().cloned().collect();
                        mids.iter().for_each(|m| next.drop_mapping(m));
                    }
                    next.spaces.remove(asid);
                    next.acm.remove_object(asid);
                    next.mdb.remove(&entry);
                }
                MdbRef::Object(oid) => {
                    next.objects.remove(oid);
                    next.acm.remove_object(oid);
                    next.mdb.remove(&entry);
                }
            }
        }
        Ok(next)
    }

    /// Atomically replaces translations in `asid`: every existing mapping
    /// that overlaps a replacement's destination is removed, then all
    /// replacements are mapped. Either everything applies or nothing does.
    pub fn modify_map(
        &self,
        s: &SubjectId,
        asid: &AddressSpaceId,
        replacements: &[Replacement],
    ) -> Result<MonitorState, MonitorError> {
        self.require_subject(s)?;
        let space = self.require_space(asid)?;
        if replacements.is_empty() {
            return Ok(self.clone());
        }
        let displaced: BTreeSet<MappingId> = space
            .mappings
            .iter()
            .filter(|m| {
                self.mappings
                    .get(*m)
                    .is_some_and(|rec| replacements.iter().any(|r| r.dst.overlaps(&rec.src)))
            })
            .cloned()
            .collect();
        let mut next = self.clone();
        for m in &displaced {
            next.unmap_in_place(s, m)?;
        }
        for r in replacements {
            next.map_in_place(s, asid, r.dst, &r.obj, r.obj_offset, &r.mid)?;
        }
        Ok(next)
    }

    fn require_subject(&self, s: &SubjectId) -> Result<(), MonitorError> {
        if self.subjects.contains(s) {
            Ok(())
        } else {
            Err(MonitorError::UnknownSubject(s.clone()))
        }
    }

    fn require_object(&self, o: &ObjectId) -> Result<&MemoryObject, MonitorError> {
        self.objects
            .get(o)
            .ok_or_else(|| MonitorError::UnknownObject(o.clone()))
    }

    fn require_space(&self, a: &AddressSpaceId) -> Result<&AddressSpace, MonitorError> {
        if let Some(space) = self.spaces.get(a) {
            return Ok(space);
        }
        if self.is_static_space(a) {
            return Err(MonitorError::StaticSpace(a.clone()));
        }
        Err(MonitorError::UnknownAddressSpace(a.clone()))
    }

    /// The authority guard. Skipped only when guards are disabled.
    fn require(&self, s: &SubjectId, o: &ObjectId, r: Right) -> Result<(), MonitorError> {
        if !self.guards_on() || self.acm.check(s, o, r) {
            Ok(())
        } else {
            Err(MonitorError::InsufficientRights {
                subject: s.clone(),
                object: o.clone(),
                needed: r,
            })
        }
    }
}
