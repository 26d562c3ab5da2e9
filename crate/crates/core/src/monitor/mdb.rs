//! Mapping database: the derivation forest over objects, address spaces and
//! mappings. Revocation walks it to find everything derived from an object.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::authority::ObjectId;

use super::MappingId;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MdbRef {
    Object(ObjectId),
    Space(ObjectId),
    Mapping(MappingId),
}

impl fmt::Display for MdbRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdbRef::Object(o) => write!(f, "object {o}"),
            MdbRef::Space(a) => write!(f, "space {a}"),
            MdbRef::Mapping(m) => write!(f, "mapping {m}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Mdb {
    parent: BTreeMap<MdbRef, MdbRef>,
    children: BTreeMap<MdbRef, BTreeSet<MdbRef>>,
}

impl Mdb {
    /// Adds `entry` under `parent`, or as a root.
    pub(crate) fn insert(&mut self, entry: MdbRef, parent: Option<MdbRef>) {
        self.children.entry(entry.clone()).or_default();
        if let Some(p) = parent {
            self.children.entry(p.clone()).or_default().insert(entry.clone());
            self.parent.insert(entry, p);
        }
    }

    /// Removes a single entry, which must have no children left.
    pub(crate) fn remove(&mut self, entry: &MdbRef) {
        debug_assert!(self.children(entry).next().is_none());
        self.children.remove(entry);
        if let Some(p) = self.parent.remove(entry) {
            if let Some(siblings) = self.children.get_mut(&p) {
                siblings.remove(entry);
            }
        }
    }

    pub fn contains(&self, entry: &MdbRef) -> bool {
        self.children.contains_key(entry)
    }

    pub fn parent(&self, entry: &MdbRef) -> Option<&MdbRef> {
        self.parent.get(entry)
    }

    pub fn children(&self, entry: &MdbRef) -> impl DoubleEndedIterator<Item = &MdbRef> {
        self.children.get(entry).into_iter().flatten()
    }

    pub fn entries(&self) -> impl Iterator<Item = &MdbRef> {
        self.children.keys()
    }

    pub fn roots(&self) -> impl Iterator<Item = &MdbRef> {
        self.children.keys().filter(|e| !self.parent.contains_key(*e))
    }

    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    /// All strict descendants of `entry`, children before their parents.
    pub fn descendants_post_order(&self, entry: &MdbRef) -> Vec<MdbRef> {
        let mut out = Vec::new();
        // Explicit stack: (node, expanded)
        let mut stack: Vec<(MdbRef, bool)> = self.children(entry).rev().map(|c| (c.clone(), false)).collect();
        while let Some((e, expanded)) = stack.pop() {
            if expanded {
                out.push(e);
                continue;
            }
            stack.push((e.clone(), true));
            stack.extend(self.children(&e).rev().map(|c| (c.clone(), false)));
        }
        out
    }
}
