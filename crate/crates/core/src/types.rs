//! Identifiers and small value types shared by every stage of the pipeline.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub type Timestamp = DateTime<Utc>;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

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
    /// Platform post identifier.
    PostId
);
string_id!(
    /// Platform author identifier.
    AuthorId
);
string_id!(
    /// Identifier of a generated candidate reply. Review items share it.
    ReplyId
);
string_id!(
    /// Human reviewer identifier.
    ReviewerId
);

/// Experiment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Experimental,
    Control,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Experimental => "experimental",
            Arm::Control => "control",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a post opens a thread or answers another post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadPosition {
    Original,
    Reply,
}

impl ThreadPosition {
    pub fn of(is_reply: bool) -> Self {
        if is_reply {
            ThreadPosition::Reply
        } else {
            ThreadPosition::Original
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ThreadPosition::Original => "original",
            ThreadPosition::Reply => "reply",
        }
    }
}

impl std::str::FromStr for ThreadPosition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" | "root" => Ok(ThreadPosition::Original),
            "reply" => Ok(ThreadPosition::Reply),
            other => Err(format!("unknown thread position `{other}`")),
        }
    }
}
