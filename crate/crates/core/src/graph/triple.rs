use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Closed predicate vocabulary of the knowledge graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predicate {
    Declares,
    Calls,
    Reads,
    Writes,
    HasType,
    MemberOf,
    DocumentedBy,
    Mentions,
    Fixes,
    Touches,
    AuthoredBy,
    AssignedTo,
    ClassifiedAs,
    StartsThread,
    Guards,
    Precedes,
}

impl Predicate {
    pub const ALL: [Predicate; 16] = [
        Predicate::Declares,
        Predicate::Calls,
        Predicate::Reads,
        Predicate::Writes,
        Predicate::HasType,
        Predicate::MemberOf,
        Predicate::DocumentedBy,
        Predicate::Mentions,
        Predicate::Fixes,
        Predicate::Touches,
        Predicate::AuthoredBy,
        Predicate::AssignedTo,
        Predicate::ClassifiedAs,
        Predicate::StartsThread,
        Predicate::Guards,
        Predicate::Precedes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::Declares => "declares",
            Predicate::Calls => "calls",
            Predicate::Reads => "reads",
            Predicate::Writes => "writes",
            Predicate::HasType => "has-type",
            Predicate::MemberOf => "member-of",
            Predicate::DocumentedBy => "documented-by",
            Predicate::Mentions => "mentions",
            Predicate::Fixes => "fixes",
            Predicate::Touches => "touches",
            Predicate::AuthoredBy => "authored-by",
            Predicate::AssignedTo => "assigned-to",
            Predicate::ClassifiedAs => "classified-as",
            Predicate::StartsThread => "starts-thread",
            Predicate::Guards => "guards",
            Predicate::Precedes => "precedes",
        }
    }

    /// Only `has-type` may carry a literal (a type spelling) as its object.
    pub fn allows_literal(self) -> bool {
        matches!(self, Predicate::HasType)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Predicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Predicate::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPredicate(s.to_string()))
    }
}

/// Object position of a triple: an entity id or a literal string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Object {
    Entity(String),
    Literal(String),
}

impl Object {
    pub fn entity(id: impl Into<String>) -> Self {
        Object::Entity(id.into())
    }

    pub fn literal(text: impl Into<String>) -> Self {
        Object::Literal(text.into())
    }

    pub fn as_entity(&self) -> Option<&str> {
        match self {
            Object::Entity(id) => Some(id),
            Object::Literal(_) => None,
        }
    }

    pub fn text(&self) -> &str {
        match self {
            Object::Entity(s) | Object::Literal(s) => s,
        }
    }
}

impl fmt::Display for Object {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Object::Entity(id) => f.write_str(id),
            Object::Literal(s) => {
                write!(f, "{}", serde_json::to_string(s).map_err(|_| fmt::Error)?)
            }
        }
    }
}

/// Knowledge source a primitive or triple came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    SourceCode,
    Comment,
    VersionTracker,
    BugTracker,
    Trace,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::SourceCode,
        Source::Comment,
        Source::VersionTracker,
        Source::BugTracker,
        Source::Trace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::SourceCode => "source-code",
            Source::Comment => "comment",
            Source::VersionTracker => "version-tracker",
            Source::BugTracker => "bug-tracker",
            Source::Trace => "trace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    /// File path or stream name, optionally with `:line`.
    pub origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(source: Source, origin: impl Into<String>) -> Self {
        Self {
            source,
            origin: origin.into(),
            tag: None,
            attrs: BTreeMap::new(),
        }
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: Predicate,
    pub object: Object,
    pub provenance: Provenance,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        predicate: Predicate,
        object: Object,
        provenance: Provenance,
    ) -> Self {
        Self {
            subject: subject.into(),
            predicate,
            object,
            provenance,
        }
    }

    pub fn key(&self) -> TripleKey {
        TripleKey {
            subject: self.subject.clone(),
            predicate: self.predicate,
            object: self.object.clone(),
        }
    }
}

/// The (s, p, o) identity of a triple, without provenance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripleKey {
    pub subject: String,
    pub predicate: Predicate,
    pub object: Object,
}

impl fmt::Display for TripleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}
