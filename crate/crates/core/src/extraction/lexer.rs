use std::collections::BTreeSet;

use super::comments::CommentStyle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TokKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Tok {
    pub kind: TokKind,
    /// For `Str` tokens: the unescaped contents without quotes.
    pub text: String,
    pub line: usize,
}

impl Tok {
    pub fn is(&self, s: &str) -> bool {
        self.kind != TokKind::Str && self.kind != TokKind::Char && self.text == s
    }

    pub fn is_ident(&self) -> bool {
        self.kind == TokKind::Ident
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RawComment {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub style: CommentStyle,
    /// Code precedes the comment on its first line.
    pub trailing: bool,
    pub terminated: bool,
}

#[derive(Debug, Default)]
pub(crate) struct Lexed {
    pub toks: Vec<Tok>,
    pub comments: Vec<RawComment>,
    pub line_count: usize,
}

const PUNCT3: [&str; 4] = ["<<=", ">>=", "...", "->*"];
const PUNCT2: [&str; 21] = [
    "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "++", "--", "->", "::",
    "&&", "||", "<<", ">>", "##",
];

pub(crate) fn line_count(text: &str) -> usize {
    text.lines().count()
}

pub(crate) fn lex(text: &str) -> Lexed {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut out = Lexed {
        line_count: line_count(text),
        ..Default::default()
    };
    let mut i = 0;
    let mut line = 1;
    let mut at_line_start = true;
    let mut in_directive = false;
    let mut last_code_line = 0;

    while i < n {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            at_line_start = true;
            in_directive = false;
            i += 1;
            continue;
        }
        if c == '\\' && i + 1 < n && chars[i + 1] == '\n' {
            // line continuation keeps a directive going
            line += 1;
            i += 2;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && i + 1 < n && chars[i + 1] == '/' {
            let start = line;
            let mut j = i + 2;
            while j < n && chars[j] != '\n' {
                j += 1;
            }
            let body: String = chars[i + 2..j].iter().collect();
            out.comments.push(RawComment {
                text: body.trim().to_string(),
                start,
                end: start,
                style: CommentStyle::Line,
                trailing: last_code_line == line,
                terminated: true,
            });
            i = j;
            continue;
        }
        if c == '/' && i + 1 < n && chars[i + 1] == '*' {
            let start = line;
            let trailing = last_code_line == line;
            let mut j = i + 2;
            let mut terminated = false;
            while j < n {
                if chars[j] == '*' && j + 1 < n && chars[j + 1] == '/' {
                    terminated = true;
                    break;
                }
                if chars[j] == '\n' {
                    line += 1;
                }
                j += 1;
            }
            let body: String = chars[i + 2..j.min(n)].iter().collect();
            let end = if terminated {
                line
            } else {
                line.min(out.line_count).max(start)
            };
            out.comments.push(RawComment {
                text: body.trim().to_string(),
                start,
                end,
                style: CommentStyle::Block,
                trailing,
                terminated,
            });
            i = if terminated { j + 2 } else { n };
            continue;
        }
        if at_line_start && c == '#' {
            in_directive = true;
        }
        at_line_start = false;
        last_code_line = line;

        let tok_line = line;
        let (kind, text, next) = if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < n && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            (TokKind::Ident, chars[i..j].iter().collect(), j)
        } else if c.is_ascii_digit() || (c == '.' && i + 1 < n && chars[i + 1].is_ascii_digit()) {
            let mut j = i;
            while j < n && (chars[j].is_alphanumeric() || chars[j] == '.' || chars[j] == '_') {
                j += 1;
            }
            (TokKind::Number, chars[i..j].iter().collect(), j)
        } else if c == '"' || c == '\'' {
            let mut j = i + 1;
            let mut s = String::new();
            while j < n && chars[j] != c && chars[j] != '\n' {
                if chars[j] == '\\' && j + 1 < n {
                    j += 1;
                    s.push(match chars[j] {
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        '0' => '\0',
                        other => other,
                    });
                } else {
                    s.push(chars[j]);
                }
                j += 1;
            }
            let next = if j < n && chars[j] == c { j + 1 } else { j };
            (
                if c == '"' {
                    TokKind::Str
                } else {
                    TokKind::Char
                },
                s,
                next,
            )
        } else {
            let rest: String = chars[i..(i + 3).min(n)].iter().collect();
            let p = PUNCT3
                .iter()
                .find(|p| rest.starts_with(**p))
                .or_else(|| PUNCT2.iter().find(|p| rest.starts_with(**p)))
                .map(|p| p.to_string())
                .unwrap_or_else(|| c.to_string());
            let len = p.chars().count();
            (TokKind::Punct, p, i + len)
        };
        i = next;
        if !in_directive {
            out.toks.push(Tok {
                kind,
                text,
                line: tok_line,
            });
        }
    }
    out
}

/// Identifier tokens (code only, comments excluded) on lines `start..=end`.
pub fn scope_identifiers(text: &str, start: usize, end: usize) -> BTreeSet<String> {
    lex(text)
        .toks
        .into_iter()
        .filter(|t| t.is_ident() && t.line >= start && t.line <= end)
        .map(|t| t.text)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directives_skipped_but_lines_counted() {
        let l = lex("#include <stdio.h>\n#define X \\\n  1\nint x;\n");
        assert_eq!(l.toks.len(), 3);
        assert_eq!(l.toks[0].line, 4);
        assert_eq!(l.line_count, 4);
    }

    #[test]
    fn comments_and_trailing_flag() {
        let l = lex("/* a */ int x; /* b */\n// c\n");
        assert_eq!(l.comments.len(), 3);
        assert!(!l.comments[0].trailing);
        assert!(l.comments[1].trailing);
        assert!(!l.comments[2].trailing);
        assert_eq!(l.comments[2].start, 2);
    }

    #[test]
    fn strings_and_operators() {
        let l = lex(r#"f("a\"b"); x += 1; p->q;"#);
        let texts: Vec<_> = l.toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(
            texts,
            vec!["f", "(", "a\"b", ")", ";", "x", "+=", "1", ";", "p", "->", "q", ";"]
        );
        assert_eq!(l.toks[2].kind, TokKind::Str);
    }

    #[test]
    fn unterminated_block_runs_to_eof() {
        let l = lex("int a;\n/* open\nstill\n");
        assert_eq!(l.comments.len(), 1);
        assert!(!l.comments[0].terminated);
        assert_eq!(l.comments[0].end, 3);
    }
}
