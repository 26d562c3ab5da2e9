//! Address-space model and reference monitor for memory management on
//! platforms with many translation units.
//!
//! * [`decoding_net`]: static translation model and canonical name resolution.
//! * [`authority`]: rights and the access-control matrix.
//! * [`monitor`]: typed memory objects, the mapping database and the guarded
//!   operations that change address-space configurations.
//! * [`query`]: allocation and configuration planning on a flattened graph.
//! * [`platform_dsl`]: platform description language, compiler and code
//!   generation.
//! * [`bug_corpus`]: vulnerability-class scenarios the monitor must reject.

macro_rules! string_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

pub mod authority;
pub mod bug_corpus;
pub mod decoding_net;
pub mod monitor;
pub mod par;
pub mod platform_dsl;
pub mod query;

pub use authority::{AccessControlMatrix, Authority, ObjectId, Right, SubjectId};
pub use decoding_net::{AddressRange, DecodingNet, Name, Node, NodeId, Platform};
pub use monitor::{MonitorError, MonitorState, ObjectType, Operation};
