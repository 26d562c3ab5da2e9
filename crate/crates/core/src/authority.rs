//! Subjects, objects, rights and the access-control matrix.
//!
//! The matrix is the abstract policy. Rows read as capability lists (what a
//! subject holds), columns as access-control lists (who holds what on an
//! object). Missing entries mean no rights.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

string_id!(
    /// An agent acting on the monitor.
    SubjectId
);
string_id!(
    /// A memory object or an address space.
    ObjectId
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Right {
    /// Insert this object into some address space.
    Grant,
    /// Insert some object into this address space.
    Map,
    /// Read or write the object.
    Access,
}

impl Right {
    pub const ALL: [Right; 3] = [Right::Grant, Right::Map, Right::Access];

    pub fn as_str(self) -> &'static str {
        match self {
            Right::Grant => "grant",
            Right::Map => "map",
            Right::Access => "access",
        }
    }
}

impl fmt::Display for Right {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Right {
    type Err = AuthorityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grant" => Ok(Right::Grant),
            "map" => Ok(Right::Map),
            "access" => Ok(Right::Access),
            _ => Err(AuthorityError::BadRight(s.to_owned())),
        }
    }
}

/// A right held directly, or the meta-authority to hand that right to
/// another subject. Meta-authorities nest exactly one level deep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Authority {
    Direct(Right),
    Meta(Right),
}

impl Authority {
    pub fn right(self) -> Right {
        match self {
            Authority::Direct(r) | Authority::Meta(r) => r,
        }
    }
}

impl From<Right> for Authority {
    fn from(r: Right) -> Self {
        Authority::Direct(r)
    }
}

impl fmt::Display for Authority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Authority::Direct(r) => write!(f, "{r}"),
            Authority::Meta(r) => write!(f, "grant:{r}"),
        }
    }
}

impl FromStr for Authority {
    type Err = AuthorityError;

    /// `grant`, `map`, `access`, or `grant:<right>` for a meta-authority.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("grant", inner)) => Ok(Authority::Meta(inner.parse()?)),
            Some(_) => Err(AuthorityError::BadRight(s.to_owned())),
            None => Ok(Authority::Direct(s.parse()?)),
        }
    }
}

pub type Rights = BTreeSet<Authority>;

/// Parses a comma-separated authority list such as `grant,grant:access`.
pub fn parse_rights(s: &str) -> Result<Rights, AuthorityError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}

pub fn format_rights(rights: &Rights) -> String {
    rights.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// What kind of thing an object id names, as far as the matrix cares.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectKind {
    Ram,
    Frame,
    TStructure,
    AddressSpace,
}

/// Existence and typing information the matrix validates against.
pub trait AuthorityContext {
    fn has_subject(&self, s: &SubjectId) -> bool;
    fn object_kind(&self, o: &ObjectId) -> Option<ObjectKind>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthorityError {
    #[error("unknown subject `{0}`")]
    UnknownSubject(SubjectId),
    #[error("unknown object `{0}`")]
    UnknownObject(ObjectId),
    #[error("access to translation object `{0}` would break partitioning")]
    PartitioningViolation(ObjectId),
    #[error("unknown right `{0}`")]
    BadRight(String),
}

/// Rejects any authority set that would make a translation structure
/// accessible.
pub fn check_partitioning(kind: ObjectKind, o: &ObjectId, rights: &Rights) -> Result<(), AuthorityError> {
    if kind == ObjectKind::TStructure && rights.iter().any(|a| a.right() == Right::Access) {
        return Err(AuthorityError::PartitioningViolation(o.clone()));
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccessControlMatrix {
    entries: BTreeMap<(SubjectId, ObjectId), Rights>,
}

impl AccessControlMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces the entry for `(s, o)`. An empty set removes the entry.
    pub fn set(
        &mut self,
        ctx: &impl AuthorityContext,
        s: &SubjectId,
        o: &ObjectId,
        rights: Rights,
    ) -> Result<(), AuthorityError> {
        if !ctx.has_subject(s) {
            return Err(AuthorityError::UnknownSubject(s.clone()));
        }
        let kind = ctx
            .object_kind(o)
            .ok_or_else(|| AuthorityError::UnknownObject(o.clone()))?;
        check_partitioning(kind, o, &rights)?;
        self.set_unchecked(s, o, rights);
        Ok(())
    }

    pub(crate) fn set_unchecked(&mut self, s: &SubjectId, o: &ObjectId, rights: Rights) {
        let key = (s.clone(), o.clone());
        if rights.is_empty() {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, rights);
        }
    }

    /// Adds one authority to an entry, keeping the others.
    pub(crate) fn add_unchecked(&mut self, s: &SubjectId, o: &ObjectId, a: Authority) {
        self.entries.entry((s.clone(), o.clone())).or_default().insert(a);
    }

    /// Drops every entry naming `o`.
    pub(crate) fn remove_object(&mut self, o: &ObjectId) {
        self.entries.retain(|(_, obj), _| obj != o);
    }

    pub fn entry(&self, s: &SubjectId, o: &ObjectId) -> Option<&Rights> {
        self.entries.get(&(s.clone(), o.clone()))
    }

    /// True iff `s` holds `r` directly on `o`.
    pub fn check(&self, s: &SubjectId, o: &ObjectId, r: Right) -> bool {
        self.holds(s, o, Authority::Direct(r))
    }

    pub fn holds(&self, s: &SubjectId, o: &ObjectId, a: Authority) -> bool {
        self.entry(s, o).is_some_and(|set| set.contains(&a))
    }

    /// Capability list of `s`.
    pub fn row(&self, s: &SubjectId) -> Vec<(ObjectId, Rights)> {
        self.entries
            .iter()
            .filter(|((subj, _), _)| subj == s)
            .map(|((_, o), r)| (o.clone(), r.clone()))
            .collect()
    }

    /// Access-control list of `o`.
    pub fn column(&self, o: &ObjectId) -> Vec<(SubjectId, Rights)> {
        self.entries
            .iter()
            .filter(|((_, obj), _)| obj == o)
            .map(|((s, _), r)| (s.clone(), r.clone()))
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&SubjectId, &ObjectId, &Rights)> {
        self.entries.iter().map(|((s, o), r)| (s, o, r))
    }

    pub fn subjects(&self) -> BTreeSet<&SubjectId> {
        self.entries.keys().map(|(s, _)| s).collect()
    }

    pub fn objects(&self) -> BTreeSet<&ObjectId> {
        self.entries.keys().map(|(_, o)| o).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Sorted `acm(<subject>, <object>, [<rights>]).` lines.
    pub fn dump(&self) -> String {
        self.entries
            .iter()
            .map(|((s, o), r)| format!("acm({s}, {o}, [{}]).\n", format_rights(r)))
            .collect()
    }
}

/// A context backed by plain tables. Handy for policies that are set up
/// before any monitor state exists.
#[derive(Clone, Debug, Default)]
pub struct TableContext {
    pub subjects: BTreeSet<SubjectId>,
    pub objects: BTreeMap<ObjectId, ObjectKind>,
}

impl TableContext {
    pub fn with_subject(mut self, s: &str) -> Self {
        self.subjects.insert(s.into());
        self
    }

    pub fn with_object(mut self, o: &str, kind: ObjectKind) -> Self {
        self.objects.insert(o.into(), kind);
        self
    }
}

impl AuthorityContext for TableContext {
    fn has_subject(&self, s: &SubjectId) -> bool {
        self.subjects.contains(s)
    }

    fn object_kind(&self, o: &ObjectId) -> Option<ObjectKind> {
        self.objects.get(o).copied()
    }
}
