//! Canonical entity identifiers.
//!
//! ```text
//! file:<path>            func:<path>#<name>      var:<path>#<scoped-name>
//! type:<path>#<name>     comment:<path>#L<line>  bug:<tracker>/<number>
//! commit:<hash>          dev:<email-or-name>     concept:<term>
//! thread:<path>#<name>
//! ```

use crate::extraction::EntityKind;

/// Path component used for call targets that no parsed file defines.
pub const EXTERN_PATH: &str = "extern";

pub fn file(path: &str) -> String {
    format!("file:{path}")
}

pub fn func(path: &str, name: &str) -> String {
    format!("func:{path}#{name}")
}

pub fn var(path: &str, scoped_name: &str) -> String {
    format!("var:{path}#{scoped_name}")
}

pub fn ty(path: &str, name: &str) -> String {
    format!("type:{path}#{name}")
}

/// `ordinal` is 1 for the first comment starting on `line`; later ones get a `.n` suffix.
pub fn comment(path: &str, line: usize, ordinal: usize) -> String {
    if ordinal <= 1 {
        format!("comment:{path}#L{line}")
    } else {
        format!("comment:{path}#L{line}.{ordinal}")
    }
}

pub fn bug(tracker: &str, number: &str) -> String {
    format!("bug:{tracker}/{number}")
}

pub fn commit(hash: &str) -> String {
    format!("commit:{hash}")
}

pub fn dev(email_or_name: &str) -> String {
    format!("dev:{email_or_name}")
}

pub fn concept(term: &str) -> String {
    format!("concept:{term}")
}

pub fn thread_root(path: &str, name: &str) -> String {
    format!("thread:{path}#{name}")
}

/// Thread-root id for a function id (`func:p#n` -> `thread:p#n`).
pub fn thread_root_of(func_id: &str) -> String {
    match func_id.strip_prefix("func:") {
        Some(rest) => format!("thread:{rest}"),
        None => format!("thread:{func_id}"),
    }
}

pub fn prefix(id: &str) -> Option<&str> {
    id.split_once(':').map(|(p, _)| p)
}

/// Kind implied by the id prefix. `type:` ids infer `Type`.
pub fn kind_of(id: &str) -> Option<EntityKind> {
    let (p, rest) = id.split_once(':')?;
    if rest.is_empty() {
        return None;
    }
    Some(match p {
        "file" => EntityKind::File,
        "func" => EntityKind::Function,
        "var" => EntityKind::Variable,
        "type" => EntityKind::Type,
        "comment" => EntityKind::Comment,
        "bug" => EntityKind::Bug,
        "commit" => EntityKind::Commit,
        "dev" => EntityKind::Developer,
        "concept" => EntityKind::Concept,
        "thread" => EntityKind::ThreadRoot,
        _ => return None,
    })
}

/// Display label derived from the id: the part after `#`, else after the prefix.
pub fn label_of(id: &str) -> String {
    let rest = id.split_once(':').map_or(id, |(_, r)| r);
    match (prefix(id), rest.rsplit_once('#')) {
        (Some("file"), _) => rest.to_string(),
        (Some("bug"), _) => rest.to_string(),
        (_, Some((_, name))) => name.to_string(),
        _ => rest.to_string(),
    }
}

/// Path embedded in a code-element id, if any.
pub fn path_of(id: &str) -> Option<&str> {
    let (p, rest) = id.split_once(':')?;
    match p {
        "file" => Some(rest),
        "func" | "var" | "type" | "comment" | "thread" => {
            rest.rsplit_once('#').map(|(path, _)| path)
        }
        _ => None,
    }
}

/// Ids may not contain tabs or line breaks (they are stored in TSV).
pub fn is_well_formed(id: &str) -> bool {
    kind_of(id).is_some() && !id.contains(['\t', '\n', '\r'])
}
