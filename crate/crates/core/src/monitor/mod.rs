//! Reference monitor over typed memory objects and address spaces.
//!
//! A [`MonitorState`] holds the subjects, the memory objects with their
//! derivation forest (the [`Mdb`]), the dynamic address spaces with their
//! mappings, and the access-control matrix. Every operation takes the
//! current state by reference and returns the successor state, so a
//! rejected operation cannot leave partial effects behind.
//!
//! Object types form a small hierarchy: `RAM` may be retyped into `Frame`,
//! `TStructure` or a smaller `RAM`; frames and translation structures are
//! leaves. Only frames can be mapped. A translation structure defines an
//! address space (see [`MonitorState::derive_address_space`]) and no subject
//! may ever hold `Access` to one.
//!
//! Every node of the static platform net is a fixed address space whose
//! configuration never changes. Configurable nodes of the platform become
//! programmable once a space is derived under the node's id.

mod mdb;
mod ops;
mod security;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::authority::{
    AccessControlMatrix, AuthorityContext, AuthorityError, ObjectId, ObjectKind, Right, Rights, SubjectId,
};
use crate::decoding_net::{AddressRange, DecodingNet, Name, NetError, Node, NodeId, Platform, TranslateSegment};

pub use mdb::{Mdb, MdbRef};
pub use ops::{Operation, Replacement};
pub use security::SecurityViolation;
pub use trace::{run_trace, Verdict};

/// Translation granularity used when a description does not give one.
pub const DEFAULT_GRANULARITY: u64 = 0x1000;

string_id!(
    /// Identifier of a mapping record.
    MappingId
);

/// Address spaces share the object namespace so that rights on them live in
/// the same matrix.
pub type AddressSpaceId = ObjectId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectType {
    Ram,
    Frame,
    TStructure,
}

impl ObjectType {
    /// Whether `self` may be retyped into `child`.
    pub fn can_retype_to(self, _child: ObjectType) -> bool {
        self == ObjectType::Ram
    }

    pub fn kind(self) -> ObjectKind {
        match self {
            ObjectType::Ram => ObjectKind::Ram,
            ObjectType::Frame => ObjectKind::Frame,
            ObjectType::TStructure => ObjectKind::TStructure,
        }
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectType::Ram => "RAM",
            ObjectType::Frame => "Frame",
            ObjectType::TStructure => "TStructure",
        })
    }
}

impl FromStr for ObjectType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "RAM" => Ok(ObjectType::Ram),
            "Frame" => Ok(ObjectType::Frame),
            "TStructure" => Ok(ObjectType::TStructure),
            _ => Err(format!("unknown object type `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryObject {
    pub oid: ObjectId,
    pub otype: ObjectType,
    /// Canonical name of the first byte.
    pub base: Name,
    pub size: u64,
    pub parent: Option<ObjectId>,
}

impl MemoryObject {
    /// The canonical range the object covers inside `base.node`.
    pub fn range(&self) -> AddressRange {
        AddressRange::new(self.base.addr, self.size).expect("object ranges are validated on creation")
    }
}

/// One installed translation: `src` in `aspace` now decodes to `via`,
/// which resolves to `target` at `target_offset`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MappingRecord {
    pub mid: MappingId,
    pub aspace: AddressSpaceId,
    pub src: AddressRange,
    pub target: ObjectId,
    pub target_offset: u64,
    /// Segment destination; a whitelisted context of the space, or the
    /// object's canonical name for spaces without a whitelist.
    pub via: Name,
    pub creator: SubjectId,
    /// The creator's matrix entries on the space and on the target when
    /// the mapping was installed.
    pub justification: Justification,
}

impl MappingRecord {
    pub fn segment(&self) -> TranslateSegment {
        TranslateSegment::new(self.src, self.via.node.clone(), self.via.addr)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Justification {
    pub on_space: Rights,
    pub on_target: Rights,
}

/// A programmable address space derived from a translation structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AddressSpace {
    pub asid: AddressSpaceId,
    pub backing: ObjectId,
    pub granularity: u64,
    pub mappings: BTreeSet<MappingId>,
    /// Contexts segments must point into, when the space programs a
    /// configurable platform node.
    pub whitelist: Option<Vec<NodeId>>,
}

impl AddressSpace {
    pub fn node_id(&self) -> NodeId {
        NodeId::new(self.asid.as_str())
    }
}

/// Whether the monitor enforces its authority guards.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GuardMode {
    #[default]
    Enforced,
    /// Rights, partitioning and canonical-name guards are skipped.
    /// Structural checks stay on. Test builds only.
    #[cfg(feature = "unsafe-no-guards")]
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorError {
    #[error("{subject} lacks {needed} on {object}")]
    InsufficientRights {
        subject: SubjectId,
        object: ObjectId,
        needed: Right,
    },
    #[error("operation would expose translation object {0}")]
    PartitioningViolation(ObjectId),
    #[error("cannot retype {from} into {to}")]
    IllegalRetype { from: ObjectType, to: ObjectType },
    #[error("range conflict inside {0}")]
    RangeConflict(ObjectId),
    #[error("{0} is not a canonical name")]
    NonCanonicalBase(Name),
    #[error("RAM root {0} overlaps an existing root")]
    OverlappingRoots(ObjectId),
    #[error("{0} already backs an address space")]
    AlreadyDerived(ObjectId),
    #[error("{object} is not a {expected}")]
    WrongType { object: ObjectId, expected: ObjectType },
    #[error("{range} is not aligned to {granularity:#x} in {asid}")]
    Misaligned {
        asid: AddressSpaceId,
        range: AddressRange,
        granularity: u64,
    },
    #[error("{range} overlaps an existing translation in {asid}")]
    Overlap { asid: AddressSpaceId, range: AddressRange },
    #[error("{0} is a fixed address space")]
    StaticSpace(AddressSpaceId),
    #[error("{asid} cannot name {object} from any of its contexts")]
    AddressSpaceMismatch { asid: AddressSpaceId, object: ObjectId },
    #[error("{asid} requires granularity {declared:#x}, got {requested:#x}")]
    GranularityMismatch {
        asid: AddressSpaceId,
        declared: u64,
        requested: u64,
    },
    #[error("granularity must be non-zero")]
    BadGranularity,
    #[error("unknown subject {0}")]
    UnknownSubject(SubjectId),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("unknown address space {0}")]
    UnknownAddressSpace(AddressSpaceId),
    #[error("unknown mapping {0}")]
    UnknownMapping(MappingId),
    #[error("identifier {0} already in use")]
    DuplicateId(String),
    #[error("unknown right `{0}`")]
    BadRight(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

impl MonitorError {
    /// Stable identifier used in verdict output.
    pub fn code(&self) -> &'static str {
        match self {
            MonitorError::InsufficientRights { .. } => "InsufficientRights",
            MonitorError::PartitioningViolation(_) => "PartitioningViolation",
            MonitorError::IllegalRetype { .. } => "IllegalRetype",
            MonitorError::RangeConflict(_) => "RangeConflict",
            MonitorError::NonCanonicalBase(_) => "NonCanonicalBase",
            MonitorError::OverlappingRoots(_) => "OverlappingRoots",
            MonitorError::AlreadyDerived(_) => "AlreadyDerived",
            MonitorError::WrongType { .. } => "WrongType",
            MonitorError::Misaligned { .. } => "Misaligned",
            MonitorError::Overlap { .. } => "Overlap",
            MonitorError::StaticSpace(_) => "StaticSpace",
            MonitorError::AddressSpaceMismatch { .. } => "AddressSpaceMismatch",
            MonitorError::GranularityMismatch { .. } => "GranularityMismatch",
            MonitorError::BadGranularity => "BadGranularity",
            MonitorError::UnknownSubject(_) => "UnknownSubject",
            MonitorError::UnknownObject(_) => "UnknownObject",
            MonitorError::UnknownAddressSpace(_) => "UnknownAddressSpace",
            MonitorError::UnknownMapping(_) => "UnknownMapping",
            MonitorError::DuplicateId(_) => "DuplicateId",
            MonitorError::BadRight(_) => "BadRight",
            MonitorError::Net(e) => e.code(),
        }
    }
}

impl From<AuthorityError> for MonitorError {
    fn from(e: AuthorityError) -> Self {
        match e {
            AuthorityError::UnknownSubject(s) => MonitorError::UnknownSubject(s),
            AuthorityError::UnknownObject(o) => MonitorError::UnknownObject(o),
            AuthorityError::PartitioningViolation(o) => MonitorError::PartitioningViolation(o),
            AuthorityError::BadRight(r) => MonitorError::BadRight(r),
        }
    }
}

/// One initial RAM region handed to the monitor at boot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RamRoot {
    pub oid: ObjectId,
    pub base: Name,
    pub size: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonitorState {
    platform: Arc<Platform>,
    subjects: BTreeSet<SubjectId>,
    objects: BTreeMap<ObjectId, MemoryObject>,
    spaces: BTreeMap<AddressSpaceId, AddressSpace>,
    mappings: BTreeMap<MappingId, MappingRecord>,
    mdb: Mdb,
    acm: AccessControlMatrix,
    guards: GuardMode,
}

impl MonitorState {
    /// A state with no subjects, no objects and no dynamic spaces.
    pub fn new(platform: Arc<Platform>) -> Self {
        MonitorState {
            platform,
            subjects: BTreeSet::new(),
            objects: BTreeMap::new(),
            spaces: BTreeMap::new(),
            mappings: BTreeMap::new(),
            mdb: Mdb::default(),
            acm: AccessControlMatrix::new(),
            guards: GuardMode::Enforced,
        }
    }

    /// Boot state: subjects, disjoint canonical RAM roots and the initial
    /// matrix.
    pub fn init(
        platform: Arc<Platform>,
        subjects: impl IntoIterator<Item = SubjectId>,
        roots: impl IntoIterator<Item = RamRoot>,
        acm: impl IntoIterator<Item = (SubjectId, ObjectId, Rights)>,
    ) -> Result<Self, MonitorError> {
        let mut st = MonitorState::new(platform);
        for s in subjects {
            st = st.add_subject(s)?;
        }
        for r in roots {
            st = st.add_ram_root(r)?;
        }
        for (s, o, rights) in acm {
            st = st.set_rights(&s, &o, rights)?;
        }
        Ok(st)
    }

    #[cfg(feature = "unsafe-no-guards")]
    pub fn with_guards_disabled(mut self) -> Self {
        self.guards = GuardMode::Disabled;
        self
    }

    pub fn guard_mode(&self) -> GuardMode {
        self.guards
    }

    pub(crate) fn guards_on(&self) -> bool {
        self.guards == GuardMode::Enforced
    }

    pub fn add_subject(&self, s: SubjectId) -> Result<Self, MonitorError> {
        if self.subjects.contains(&s) {
            return Err(MonitorError::DuplicateId(s.to_string()));
        }
        let mut next = self.clone();
        next.subjects.insert(s);
        Ok(next)
    }

    pub fn add_ram_root(&self, root: RamRoot) -> Result<Self, MonitorError> {
        self.check_fresh_object_id(&root.oid)?;
        let range = AddressRange::new(root.base.addr, root.size)?;
        if self.guards_on() && !self.is_canonical_range(&root.base.node, &range)? {
            return Err(MonitorError::NonCanonicalBase(root.base));
        }
        let clash = self
            .objects
            .values()
            .any(|o| o.parent.is_none() && o.base.node == root.base.node && o.range().overlaps(&range));
        if clash {
            return Err(MonitorError::OverlappingRoots(root.oid));
        }
        let mut next = self.clone();
        next.mdb.insert(MdbRef::Object(root.oid.clone()), None);
        next.objects.insert(
            root.oid.clone(),
            MemoryObject {
                oid: root.oid,
                otype: ObjectType::Ram,
                base: root.base,
                size: root.size,
                parent: None,
            },
        );
        Ok(next)
    }

    /// Replaces a matrix entry, enforcing the partitioning rule.
    pub fn set_rights(&self, s: &SubjectId, o: &ObjectId, rights: Rights) -> Result<Self, MonitorError> {
        let mut next = self.clone();
        if self.guards_on() {
            let mut acm = std::mem::take(&mut next.acm);
            acm.set(self, s, o, rights)?;
            next.acm = acm;
        } else {
            if !self.has_subject(s) {
                return Err(MonitorError::UnknownSubject(s.clone()));
            }
            if self.object_kind(o).is_none() {
                return Err(MonitorError::UnknownObject(o.clone()));
            }
            next.acm.set_unchecked(s, o, rights);
        }
        Ok(next)
    }

    /// True if every address of `range` in `node` is accepted by `node`
    /// itself, all within one accept range.
    fn is_canonical_range(&self, node: &NodeId, range: &AddressRange) -> Result<bool, MonitorError> {
        let n = self
            .platform
            .net
            .node(node)
            .ok_or_else(|| NetError::UnknownNode(node.clone()))?;
        Ok(n.accept.iter().any(|a| a.contains_range(range)))
    }

    pub(crate) fn check_fresh_object_id(&self, id: &ObjectId) -> Result<(), MonitorError> {
        let node_clash = self.platform.net.contains(&NodeId::new(id.as_str()));
        if self.objects.contains_key(id) || self.spaces.contains_key(id) || node_clash {
            return Err(MonitorError::DuplicateId(id.to_string()));
        }
        Ok(())
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }

    pub fn platform_arc(&self) -> &Arc<Platform> {
        &self.platform
    }

    pub fn subjects(&self) -> &BTreeSet<SubjectId> {
        &self.subjects
    }

    pub fn objects(&self) -> &BTreeMap<ObjectId, MemoryObject> {
        &self.objects
    }

    pub fn object(&self, o: &ObjectId) -> Option<&MemoryObject> {
        self.objects.get(o)
    }

    pub fn spaces(&self) -> &BTreeMap<AddressSpaceId, AddressSpace> {
        &self.spaces
    }

    pub fn space(&self, a: &AddressSpaceId) -> Option<&AddressSpace> {
        self.spaces.get(a)
    }

    pub fn mappings(&self) -> &BTreeMap<MappingId, MappingRecord> {
        &self.mappings
    }

    pub fn mapping(&self, m: &MappingId) -> Option<&MappingRecord> {
        self.mappings.get(m)
    }

    pub fn mdb(&self) -> &Mdb {
        &self.mdb
    }

    pub fn acm(&self) -> &AccessControlMatrix {
        &self.acm
    }

    /// True if `a` names a platform node that is not programmable.
    pub fn is_static_space(&self, a: &AddressSpaceId) -> bool {
        let id = NodeId::new(a.as_str());
        self.platform.net.contains(&id) && !self.platform.is_configurable(&id)
    }

    /// The static decoding net this state induces: the platform plus one
    /// node per dynamic space carrying its mappings as segments.
    pub fn project(&self) -> DecodingNet {
        if self.spaces.is_empty() {
            return self.platform.net.clone();
        }
        let mut nodes: BTreeMap<NodeId, Node> = self.platform.net.nodes().map(|n| (n.id.clone(), n.clone())).collect();
        for space in self.spaces.values() {
            let id = space.node_id();
            let node = nodes.entry(id.clone()).or_insert_with(|| Node::new(id));
            node.segments.extend(
                space
                    .mappings
                    .iter()
                    .filter_map(|m| self.mappings.get(m))
                    .map(MappingRecord::segment),
            );
        }
        DecodingNet::from_nodes_unchecked(nodes.into_values())
    }

    /// Configurable spaces of the projection: the platform's declared
    /// ones plus every derived space. Derived spaces that do not program a
    /// platform node have no whitelist.
    pub fn conf_spaces(&self) -> crate::decoding_net::ConfSpaces {
        let mut conf = self.platform.conf.clone();
        for space in self.spaces.values() {
            conf.entry(space.node_id())
                .or_insert_with(|| crate::decoding_net::ConfigurableSpace {
                    granularity: space.granularity,
                    targets: Vec::new(),
                });
        }
        conf
    }

    /// Lowest granularity-aligned free range of `size` bytes in `asid`.
    pub fn free_range(&self, asid: &AddressSpaceId, size: u64) -> Option<AddressRange> {
        let space = self.spaces.get(asid)?;
        let g = space.granularity;
        let size = size.checked_next_multiple_of(g)?;
        let mut taken: Vec<AddressRange> = self.occupied(space);
        taken.sort();
        let mut cursor = 0u64;
        for t in taken {
            if cursor.checked_add(size)? <= t.base() {
                break;
            }
            cursor = cursor.max(t.end().checked_next_multiple_of(g)?);
        }
        AddressRange::new(cursor, size).ok()
    }

    /// Local ranges of `space` already claimed by mappings or by the
    /// platform node it programs.
    pub(crate) fn occupied(&self, space: &AddressSpace) -> Vec<AddressRange> {
        let mut out: Vec<AddressRange> = space
            .mappings
            .iter()
            .filter_map(|m| self.mappings.get(m))
            .map(|m| m.src)
            .collect();
        if let Some(node) = self.platform.net.node(&space.node_id()) {
            out.extend(node.accept.iter().copied());
            out.extend(node.segments.iter().map(|s| s.src));
        }
        out
    }

    /// Canonical name of `name` in the current projection.
    pub fn resolve(&self, name: &Name) -> Result<Name, NetError> {
        self.project().resolve(name)
    }

    /// Dynamic spaces whose mapping sets differ between two states.
    pub fn changed_spaces(before: &MonitorState, after: &MonitorState) -> BTreeSet<AddressSpaceId> {
        let ids: BTreeSet<&AddressSpaceId> = before.spaces.keys().chain(after.spaces.keys()).collect();
        ids.into_iter()
            .filter(|a| {
                let segs = |st: &MonitorState| {
                    st.spaces.get(*a).map(|s| {
                        s.mappings
                            .iter()
                            .filter_map(|m| st.mappings.get(m))
                            .map(MappingRecord::segment)
                            .collect::<Vec<_>>()
                    })
                };
                segs(before) != segs(after)
            })
            .cloned()
            .collect()
    }
}

impl AuthorityContext for MonitorState {
    fn has_subject(&self, s: &SubjectId) -> bool {
        self.subjects.contains(s)
    }

    fn object_kind(&self, o: &ObjectId) -> Option<ObjectKind> {
        if let Some(obj) = self.objects.get(o) {
            return Some(obj.otype.kind());
        }
        if self.spaces.contains_key(o) || self.is_static_space(o) {
            return Some(ObjectKind::AddressSpace);
        }
        None
    }
}
