//! Identifier newtypes.

use std::borrow::Borrow;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

macro_rules! ident {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(s: impl AsRef<str>) -> Self {
                $name(Arc::from(s.as_ref()))
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

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), &*self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name::new(s)
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name::new(s)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Ok($name::new(s))
            }
        }
    };
}

ident!(
    /// A claimable system component.
    Resource
);
ident!(
    /// An actuator owned by exactly one resource.
    Peripheral
);
ident!(ActionName);
ident!(EventName);
ident!(OutcomeName);
ident!(ActivityName);
ident!(
    /// Node name local to one activity, as written in the spec file.
    LocalId
);
ident!(StateName);

/// Globally unique node identity.
///
/// Nodes of a declared activity carry instance `0`. Each activity appended
/// while composing a behavior receives a fresh, strictly increasing instance
/// number so that repeated occurrences of the same activity stay distinct.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub instance: u32,
    pub activity: ActivityName,
    pub local: LocalId,
}

impl NodeId {
    pub fn new(activity: impl Into<ActivityName>, local: impl Into<LocalId>) -> Self {
        NodeId {
            instance: 0,
            activity: activity.into(),
            local: local.into(),
        }
    }

    pub fn with_instance(&self, instance: u32) -> Self {
        NodeId {
            instance,
            ..self.clone()
        }
    }

    /// The same node with the instance number dropped.
    pub fn base(&self) -> NodeId {
        self.with_instance(0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.instance == 0 {
            write!(f, "{}.{}", self.activity, self.local)
        } else {
            write!(f, "{}.{}#{}", self.activity, self.local, self.instance)
        }
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
