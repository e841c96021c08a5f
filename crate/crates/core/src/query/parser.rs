use std::str::FromStr;

use super::{Filter, FilterOp, Node, Pattern, PredTerm, Query};
use crate::error::{Error, Result};
use crate::graph::Predicate;
use crate::ids;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Var(String),
    Str(String),
    Op(FilterOp),
    LBrace,
    RBrace,
    Semi,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    /// Character offset of the token's first character.
    at: usize,
}

fn syntax(at: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        offset: at,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<(Vec<Spanned>, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let at = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '{' => {
                i += 1;
                Tok::LBrace
            }
            '}' => {
                i += 1;
                Tok::RBrace
            }
            ';' => {
                i += 1;
                Tok::Semi
            }
            '?' => {
                i += 1;
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                if i == start {
                    return Err(syntax(at, "expected a variable name after `?`"));
                }
                Tok::Var(chars[start..i].iter().collect())
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => return Err(syntax(at, "unterminated string literal")),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            let esc = chars
                                .get(i + 1)
                                .ok_or_else(|| syntax(i, "dangling escape"))?;
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                other => *other,
                            });
                            i += 2;
                        }
                        Some(ch) => {
                            s.push(*ch);
                            i += 1;
                        }
                    }
                }
                Tok::Str(s)
            }
            '=' => {
                i += 1;
                Tok::Op(FilterOp::Eq)
            }
            '!' | '<' | '>' => {
                let eq = chars.get(i + 1) == Some(&'=');
                i += if eq { 2 } else { 1 };
                Tok::Op(match (c, eq) {
                    ('!', true) => FilterOp::Ne,
                    ('<', false) => FilterOp::Lt,
                    ('<', true) => FilterOp::Le,
                    ('>', false) => FilterOp::Gt,
                    ('>', true) => FilterOp::Ge,
                    _ => return Err(syntax(at, "expected `!=`")),
                })
            }
            _ => {
                let start = i;
                while i < chars.len()
                    && !chars[i].is_whitespace()
                    && !matches!(chars[i], '{' | '}' | ';' | '"')
                {
                    i += 1;
                }
                Tok::Word(chars[start..i].iter().collect())
            }
        };
        out.push(Spanned { tok, at });
    }
    Ok((out, chars.len()))
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |s| s.at)
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(syntax(self.at(), format!("expected {kw}")))
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(syntax(self.at(), format!("expected {what}")))
        }
    }

    fn node(&mut self, subject: bool) -> Result<Node> {
        let at = self.at();
        let node = match self.peek().cloned() {
            Some(Tok::Var(v)) => Node::Var(v),
            Some(Tok::Word(w)) if ids::is_well_formed(&w) => Node::Id(w),
            Some(Tok::Str(_)) if subject => {
                return Err(syntax(at, "a literal cannot be a subject"))
            }
            Some(Tok::Str(s)) => Node::Literal(s),
            _ => {
                return Err(syntax(
                    at,
                    "expected a variable, entity id or string literal",
                ))
            }
        };
        self.pos += 1;
        Ok(node)
    }

    fn predicate(&mut self) -> Result<PredTerm> {
        let at = self.at();
        let p = match self.peek().cloned() {
            Some(Tok::Var(v)) => PredTerm::Var(v),
            Some(Tok::Word(w)) => PredTerm::Pred(Predicate::from_str(&w)?),
            _ => return Err(syntax(at, "expected a predicate or variable")),
        };
        self.pos += 1;
        Ok(p)
    }

    fn filter_op(&mut self) -> Result<FilterOp> {
        let at = self.at();
        let op = match self.peek() {
            Some(Tok::Op(op)) => *op,
            Some(Tok::Word(w)) => match w.to_ascii_uppercase().as_str() {
                "CONTAINS" => FilterOp::Contains,
                "BEFORE" => FilterOp::Before,
                "AFTER" => FilterOp::After,
                _ => return Err(syntax(at, "expected a filter operator")),
            },
            _ => return Err(syntax(at, "expected a filter operator")),
        };
        self.pos += 1;
        Ok(op)
    }
}

/// Parses the query grammar. Errors carry the character offset of the
/// offending token; unknown predicates are named.
pub fn parse_query(text: &str) -> Result<Query> {
    let (toks, end) = lex(text)?;
    let mut p = Parser { toks, pos: 0, end };
    p.expect_keyword("SELECT")?;
    let mut select = Vec::new();
    let mut select_at = Vec::new();
    while let Some(Tok::Var(v)) = p.peek().cloned() {
        select_at.push(p.at());
        select.push(v);
        p.pos += 1;
    }
    if select.is_empty() {
        return Err(syntax(p.at(), "expected at least one selected variable"));
    }
    p.expect_keyword("WHERE")?;
    p.expect(Tok::LBrace, "`{`")?;
    let mut patterns = Vec::new();
    while p.peek() != Some(&Tok::RBrace) {
        if p.peek().is_none() {
            return Err(syntax(p.at(), "expected `}`"));
        }
        let subject = p.node(true)?;
        let predicate = p.predicate()?;
        let object = p.node(false)?;
        patterns.push(Pattern {
            subject,
            predicate,
            object,
        });
        match p.peek() {
            Some(Tok::Semi) => p.pos += 1,
            Some(Tok::RBrace) => {}
            _ => return Err(syntax(p.at(), "expected `;` or `}`")),
        }
    }
    p.pos += 1;

    let bound = |v: &str| patterns.iter().any(|pat| pat.vars().any(|x| x == v));
    for (v, at) in select.iter().zip(&select_at) {
        if !bound(v) {
            return Err(syntax(*at, format!("selected variable ?{v} is unbound")));
        }
    }

    let mut filters = Vec::new();
    while p.keyword("FILTER") {
        p.pos += 1;
        let at = p.at();
        let Some(Tok::Var(var)) = p.peek().cloned() else {
            return Err(syntax(at, "expected a variable after FILTER"));
        };
        if !bound(&var) {
            return Err(syntax(at, format!("filtered variable ?{var} is unbound")));
        }
        p.pos += 1;
        let op = p.filter_op()?;
        let value = match p.peek().cloned() {
            Some(Tok::Str(s)) => s,
            Some(Tok::Word(w))
                if !["FILTER", "LIMIT"]
                    .iter()
                    .any(|k| w.eq_ignore_ascii_case(k)) =>
            {
                w
            }
            _ => return Err(syntax(p.at(), "expected a literal value")),
        };
        p.pos += 1;
        filters.push(Filter { var, op, value });
    }

    let mut limit = None;
    if p.keyword("LIMIT") {
        p.pos += 1;
        let at = p.at();
        match p.peek() {
            Some(Tok::Word(w)) => {
                limit = Some(
                    w.parse::<usize>()
                        .map_err(|_| syntax(at, "LIMIT needs a non-negative integer"))?,
                );
                p.pos += 1;
            }
            _ => return Err(syntax(at, "LIMIT needs a non-negative integer")),
        }
    }
    if p.peek().is_some() {
        return Err(syntax(p.at(), "unexpected trailing input"));
    }
    Ok(Query {
        select,
        patterns,
        filters,
        limit,
    })
}
