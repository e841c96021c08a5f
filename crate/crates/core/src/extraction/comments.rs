use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lexer::lex;
use super::{Entity, EntityKind, Span};
use crate::ids;
use crate::text::Normalizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommentStyle {
    Line,
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub text: String,
    pub span: Span,
    pub style: CommentStyle,
    /// Lowercased, punctuation-stripped, stopword-free.
    pub tokens: Vec<String>,
    /// Code precedes the comment on its first line.
    pub trailing: bool,
    pub attrs: BTreeMap<String, String>,
}

/// Every `//` run and `/* */` block in `text`, in source order.
///
/// Consecutive whole-line `//` comments merge into one run. An unterminated
/// block comment extends to the end of the file and carries
/// `attrs["unterminated"] = "true"`.
pub fn extract_comments(text: &str, path: &str, normalizer: &Normalizer) -> Vec<Comment> {
    let raw = lex(text).comments;
    let mut merged: Vec<super::lexer::RawComment> = Vec::new();
    for c in raw {
        if let Some(prev) = merged.last_mut() {
            let joinable = prev.style == CommentStyle::Line
                && c.style == CommentStyle::Line
                && !prev.trailing
                && !c.trailing
                && c.start == prev.end + 1;
            if joinable {
                prev.text.push('\n');
                prev.text.push_str(&c.text);
                prev.end = c.start;
                continue;
            }
        }
        merged.push(c);
    }

    let mut per_line: BTreeMap<usize, usize> = BTreeMap::new();
    merged
        .into_iter()
        .map(|c| {
            let ordinal = per_line.entry(c.start).and_modify(|n| *n += 1).or_insert(1);
            let mut attrs = BTreeMap::new();
            if !c.terminated {
                attrs.insert("unterminated".to_string(), "true".to_string());
            }
            Comment {
                id: ids::comment(path, c.start, *ordinal),
                tokens: normalizer.tokens(&c.text),
                text: c.text,
                span: Span::new(path, c.start, c.end),
                style: c.style,
                trailing: c.trailing,
                attrs,
            }
        })
        .collect()
}

fn is_anchor(e: &Entity) -> bool {
    matches!(
        e.kind,
        EntityKind::Function | EntityKind::Variable | EntityKind::Type | EntityKind::Class
    )
}

/// Maps each comment to exactly one entity of its file.
///
/// 1. A trailing comment goes to the innermost entity spanning its line.
/// 2. Otherwise it goes to the nearest entity starting after it, looking only
///    inside the innermost entity that encloses the comment (if any).
/// 3. A comment with no following entity goes to its enclosing entity, or to
///    the file entity at top level.
///
/// A header comment that precedes every entity of the file and is separated
/// from the first one by at least one line (license blocks, file banners)
/// belongs to the file entity.
pub fn associate_comments(comments: &[Comment], entities: &[Entity]) -> Vec<(String, String)> {
    comments
        .iter()
        .map(|c| {
            let path = c.span.path.as_str();
            let anchors: Vec<(&Entity, &Span)> = entities
                .iter()
                .filter(|e| is_anchor(e))
                .filter_map(|e| e.span.as_ref().filter(|s| s.path == path).map(|s| (e, s)))
                .collect();
            let innermost = |pred: &dyn Fn(&Span) -> bool| {
                anchors
                    .iter()
                    .filter(|(_, s)| pred(s))
                    .min_by(|(ea, sa), (eb, sb)| {
                        sa.len()
                            .cmp(&sb.len())
                            .then(sb.start.cmp(&sa.start))
                            .then(ea.id.cmp(&eb.id))
                    })
                    .map(|(e, s)| (*e, *s))
            };

            if c.trailing {
                if let Some((e, _)) = innermost(&|s| s.contains_line(c.span.start)) {
                    return (c.id.clone(), e.id.clone());
                }
            }
            let enclosing = innermost(&|s| s.start < c.span.start && s.end > c.span.end);
            let following = anchors
                .iter()
                .filter(|(_, s)| s.start > c.span.end)
                .filter(|(_, s)| enclosing.is_none_or(|(_, enc)| s.end <= enc.end))
                .min_by(|(ea, sa), (eb, sb)| {
                    sa.start
                        .cmp(&sb.start)
                        .then(sb.len().cmp(&sa.len()))
                        .then(ea.id.cmp(&eb.id))
                });
            let first_start = anchors.iter().map(|(_, s)| s.start).min();
            let detached_header = enclosing.is_none()
                && first_start.is_some_and(|first| c.span.end < first && first > c.span.end + 1);
            let following = following.filter(|_| !detached_header);
            let target = match (following, enclosing) {
                (Some((e, _)), _) => e.id.clone(),
                (None, Some((e, _))) => e.id.clone(),
                (None, None) => entities
                    .iter()
                    .find(|e| {
                        e.kind == EntityKind::File
                            && e.span.as_ref().is_some_and(|s| s.path == path)
                    })
                    .map_or_else(|| ids::file(path), |e| e.id.clone()),
            };
            (c.id.clone(), target)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::parse_source;

    fn comments(src: &str) -> Vec<Comment> {
        extract_comments(src, "a.c", &Normalizer::default())
    }

    #[test]
    fn bug_reference_tokens() {
        let c = comments("// fix for bug#22\n");
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].tokens, vec!["fix", "bug#22"]);
        assert_eq!(c[0].style, CommentStyle::Line);
    }

    #[test]
    fn no_comments() {
        assert!(comments("int x;\n").is_empty());
    }

    #[test]
    fn two_blocks_on_one_line() {
        let c = comments("/* a */ int x; /* b */");
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].span.start, c[0].span.end), (1, 1));
        assert_eq!((c[1].span.start, c[1].span.end), (1, 1));
        assert_eq!(c[0].id, "comment:a.c#L1");
        assert_eq!(c[1].id, "comment:a.c#L1.2");
        assert_eq!(c[0].text, "a");
    }

    #[test]
    fn line_runs_merge() {
        let c = comments("// one\n// two\nint x; // three\n// four\n");
        assert_eq!(c.len(), 3);
        assert_eq!((c[0].span.start, c[0].span.end), (1, 2));
        assert_eq!(c[0].text, "one\ntwo");
        assert!(c[1].trailing);
        assert_eq!(c[2].span.start, 4);
    }

    #[test]
    fn unterminated_flagged() {
        let c = comments("int x;\n/* dangling\n");
        assert_eq!(
            c[0].attrs.get("unterminated").map(String::as_str),
            Some("true")
        );
        assert_eq!(c[0].span.end, 2);
    }

    #[test]
    fn association_rules() {
        let src = "/* license */\n\n// does things\nvoid f() {\n  int y = 0;\n\n\n\n}\nint g; // counter\n";
        let facts = parse_source(src, "a.c");
        let cs = comments(src);
        let pairs = associate_comments(&cs, &facts.entities);
        assert_eq!(pairs.len(), cs.len());
        let target = |id: &str| pairs.iter().find(|(c, _)| c == id).unwrap().1.clone();
        assert_eq!(target("comment:a.c#L1"), "file:a.c");
        assert_eq!(target("comment:a.c#L3"), "func:a.c#f");
        assert_eq!(target("comment:a.c#L10"), "var:a.c#g");
    }

    #[test]
    fn header_before_nothing_goes_to_file() {
        let src = "int g;\n/* trailing block at end */\n";
        let facts = parse_source(src, "a.c");
        let pairs = associate_comments(&comments(src), &facts.entities);
        assert_eq!(pairs[0].1, "file:a.c");
    }

    #[test]
    fn inner_comment_stays_in_function() {
        let src = "int f(int n) {\n  // divide the range\n  return f(n/2) + f(n/2);\n}\nint h() { return 0; }\n";
        let facts = parse_source(src, "a.c");
        let pairs = associate_comments(&comments(src), &facts.entities);
        assert_eq!(pairs[0].1, "func:a.c#f");
    }
}
