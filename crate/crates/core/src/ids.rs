//! Opaque identifiers. Within a session they are numbered sequentially so a
//! replayed session produces the same ids.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn numbered(n: u64) -> Self {
                Self(format!("{}{}", $prefix, n))
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
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_type!(SessionId, "session-");
id_type!(DocId, "doc");
id_type!(SuggestionId, "s");
id_type!(BatchId, "b");
id_type!(PreviewId, "p");
id_type!(
    /// Correlates a chat request with its asynchronous reply.
    ChatRequestId,
    "c"
);
id_type!(RunId, "r");

/// Per-session id counters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IdSequence {
    next: u64,
}

impl IdSequence {
    pub fn bump(&mut self) -> u64 {
        self.next += 1;
        self.next
    }
}
