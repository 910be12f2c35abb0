//! Identifier newtypes shared by every module.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Returns true if `s` is a legal policy-language identifier: a non-empty
/// string over `[A-Za-z0-9_-]`.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
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

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Label attached to functions; selects the policy that governs them.
    TagId
);
string_id!(
    /// Name of a worker (an invoker node).
    WorkerId
);
string_id!(
    /// Name of a registered function definition.
    FunctionId
);
string_id!(
    /// Availability zone / region a worker lives in.
    ZoneId
);
string_id!(
    /// Token identifying one live invocation of a function.
    ActivationId
);

impl TagId {
    /// The reserved tag whose policy is used as a fallback.
    pub const DEFAULT: &'static str = "default";

    pub fn is_default(&self) -> bool {
        self.0 == Self::DEFAULT
    }
}
