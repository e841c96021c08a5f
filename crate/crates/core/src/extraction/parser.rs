//! Recursive-descent extractor for a C/C++ subset.
//!
//! Recognizes function definitions, global variable declarations (with
//! storage class), struct/class/union/enum/typedef declarations, inline
//! method definitions, call expressions by name, reads and writes of
//! file-level globals, thread-creation calls and mutex-protected regions.
//! Preprocessor lines are dropped by the lexer. Anything that does not fit
//! the grammar is skipped and its line range recorded on the file entity
//! (`attrs["skipped"]`).

use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{lex, Tok, TokKind};
use super::{Entity, EntityKind, FactSet, Relation, Span};
use crate::graph::{Object, Predicate};
use crate::ids;

/// Thread-creation entry points and the 0-based position of the start routine.
pub const THREAD_CREATE_FUNCTIONS: [(&str, usize); 6] = [
    ("pthread_create", 2),
    ("thrd_create", 1),
    ("CreateThread", 2),
    ("_beginthread", 0),
    ("_beginthreadex", 2),
    ("std::thread", 0),
];

const LOCK_FUNCTIONS: [&str; 6] = [
    "pthread_mutex_lock",
    "pthread_spin_lock",
    "pthread_rwlock_rdlock",
    "pthread_rwlock_wrlock",
    "mtx_lock",
    "EnterCriticalSection",
];

const UNLOCK_FUNCTIONS: [&str; 5] = [
    "pthread_mutex_unlock",
    "pthread_spin_unlock",
    "pthread_rwlock_unlock",
    "mtx_unlock",
    "LeaveCriticalSection",
];

const SCOPED_LOCKS: [&str; 3] = ["lock_guard", "unique_lock", "scoped_lock"];

const STORAGE: [&str; 7] = [
    "static",
    "extern",
    "register",
    "thread_local",
    "__thread",
    "inline",
    "mutable",
];

const TYPE_WORDS: [&str; 22] = [
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "bool",
    "_Bool", "const", "volatile", "struct", "union", "enum", "class", "auto", "static", "register",
    "wchar_t", "std",
];

const NON_CALLABLE: [&str; 24] = [
    "if",
    "while",
    "for",
    "switch",
    "return",
    "sizeof",
    "do",
    "else",
    "case",
    "default",
    "break",
    "continue",
    "goto",
    "catch",
    "throw",
    "new",
    "delete",
    "alignof",
    "decltype",
    "typeid",
    "static_cast",
    "dynamic_cast",
    "reinterpret_cast",
    "const_cast",
];

const STATEMENT_KEYWORDS: [&str; 12] = [
    "return", "else", "case", "goto", "new", "delete", "throw", "sizeof", "do", "typedef", "using",
    "default",
];

const ASSIGN_OPS: [&str; 11] = [
    "=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=",
];

fn is_type_word(s: &str) -> bool {
    TYPE_WORDS.contains(&s) || s.ends_with("_t")
}

#[derive(Debug)]
struct FuncDef {
    id: String,
    params: Vec<String>,
    body_open: usize,
    body_close: usize,
}

type RelKey = (String, Predicate, Object);

struct Parser<'a> {
    path: &'a str,
    toks: Vec<Tok>,
    matching: Vec<Option<usize>>,
    entities: BTreeMap<String, Entity>,
    relations: BTreeMap<RelKey, BTreeMap<String, String>>,
    funcs: Vec<FuncDef>,
    /// label -> function id, for functions defined in this file
    func_by_name: BTreeMap<String, String>,
    /// name -> var id, for file-scope variables declared in this file
    globals: BTreeMap<String, String>,
    types: BTreeSet<String>,
    skipped: Vec<(usize, usize)>,
}

/// Extracts entities and relations from one source file.
///
/// An empty input yields an empty fact set. Output is sorted and deterministic.
pub fn parse_source(text: &str, path: &str) -> FactSet {
    if text.is_empty() {
        return FactSet::default();
    }
    let lexed = lex(text);
    let line_count = lexed.line_count.max(1);
    let mut p = Parser::new(path, lexed.toks);
    let n = p.toks.len();
    p.parse_items(0, n, None);
    p.analyze_bodies();

    let mut file = Entity::new(ids::file(path), EntityKind::File, path)
        .with_span(Span::new(path, 1, line_count))
        .with_attr("language", "c");
    if !p.skipped.is_empty() {
        let ranges: Vec<String> = p.skipped.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        file = file.with_attr("skipped", ranges.join(","));
    }
    p.entities.insert(file.id.clone(), file);

    let mut facts = FactSet {
        entities: p.entities.into_values().collect(),
        relations: p
            .relations
            .into_iter()
            .map(|((s, pred, o), attrs)| Relation {
                subj: s,
                pred,
                obj: o,
                attrs,
            })
            .collect(),
    };
    facts.normalize();
    facts
}

fn compute_matching(toks: &[Tok]) -> Vec<Option<usize>> {
    let mut out = vec![None; toks.len()];
    let mut stack: Vec<(usize, &str)> = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokKind::Punct {
            continue;
        }
        match t.text.as_str() {
            "(" | "[" | "{" => stack.push((i, t.text.as_str())),
            ")" | "]" | "}" => {
                let want = match t.text.as_str() {
                    ")" => "(",
                    "]" => "[",
                    _ => "{",
                };
                // unwind to the nearest matching opener; stray closers stay unmatched
                if let Some(pos) = stack.iter().rposition(|(_, o)| *o == want) {
                    let (open, _) = stack[pos];
                    stack.truncate(pos);
                    out[open] = Some(i);
                    out[i] = Some(open);
                }
            }
            _ => {}
        }
    }
    out
}

enum Terminator {
    Semi(usize),
    Brace(usize),
    Stop(usize),
}

impl<'a> Parser<'a> {
    fn new(path: &'a str, toks: Vec<Tok>) -> Self {
        let matching = compute_matching(&toks);
        Self {
            path,
            toks,
            matching,
            entities: BTreeMap::new(),
            relations: BTreeMap::new(),
            funcs: Vec::new(),
            func_by_name: BTreeMap::new(),
            globals: BTreeMap::new(),
            types: BTreeSet::new(),
            skipped: Vec::new(),
        }
    }

    fn tok(&self, i: usize) -> Option<&Tok> {
        self.toks.get(i)
    }

    fn is(&self, i: usize, s: &str) -> bool {
        self.tok(i).is_some_and(|t| t.is(s))
    }

    fn line(&self, i: usize) -> usize {
        self.toks
            .get(i)
            .or_else(|| self.toks.last())
            .map_or(1, |t| t.line)
    }

    fn skip_region(&mut self, from: usize, to_inclusive: usize) {
        let (a, b) = (self.line(from), self.line(to_inclusive));
        if let Some(last) = self.skipped.last_mut() {
            if last.1 + 1 >= a {
                last.1 = last.1.max(b);
                return;
            }
        }
        self.skipped.push((a, b));
    }

    fn add_entity(&mut self, e: Entity) {
        self.entities.entry(e.id.clone()).or_insert(e);
    }

    fn add_relation(
        &mut self,
        subj: &str,
        pred: Predicate,
        obj: Object,
        line: usize,
    ) -> &mut BTreeMap<String, String> {
        let attrs = self
            .relations
            .entry((subj.to_string(), pred, obj))
            .or_default();
        let keep = attrs
            .get("line")
            .and_then(|l| l.parse::<usize>().ok())
            .is_some_and(|l| l <= line);
        if !keep {
            attrs.insert("line".into(), line.to_string());
        }
        attrs
    }

    /// Walks forward to the end of a declaration-like statement.
    fn scan_decl(&self, mut i: usize, end: usize) -> Terminator {
        let mut saw_eq = false;
        while i < end {
            let t = &self.toks[i];
            if t.kind == TokKind::Punct {
                match t.text.as_str() {
                    ";" => return Terminator::Semi(i),
                    "=" => saw_eq = true,
                    "(" | "[" => match self.matching[i] {
                        Some(m) if m < end => {
                            i = m + 1;
                            continue;
                        }
                        // unbalanced opener: resume right after it
                        _ => return Terminator::Stop(i),
                    },
                    "{" => {
                        if !saw_eq {
                            return Terminator::Brace(i);
                        }
                        match self.matching[i] {
                            Some(m) if m < end => {
                                i = m + 1;
                                continue;
                            }
                            _ => return Terminator::Stop(end),
                        }
                    }
                    "}" | ")" | "]" => return Terminator::Stop(i),
                    _ => {}
                }
            }
            i += 1;
        }
        Terminator::Stop(end)
    }

    fn skip_angles(&self, mut i: usize, end: usize) -> usize {
        let mut depth = 0i32;
        while i < end {
            match self.toks[i].text.as_str() {
                "<" => depth += 1,
                ">" => depth -= 1,
                ">>" => depth -= 2,
                _ => {}
            }
            i += 1;
            if depth <= 0 {
                break;
            }
        }
        i
    }

    fn parse_items(&mut self, mut i: usize, end: usize, class: Option<(&str, &str)>) {
        while i < end {
            let t = self.toks[i].clone();
            if t.is(";") {
                i += 1;
                continue;
            }
            if t.kind == TokKind::Ident {
                match t.text.as_str() {
                    "namespace" => {
                        let mut j = i + 1;
                        while j < end && (self.toks[j].is_ident() || self.toks[j].is("::")) {
                            j += 1;
                        }
                        if self.is(j, "{") {
                            if let Some(close) = self.matching[j].filter(|&c| c < end) {
                                self.parse_items(j + 1, close, None);
                                i = close + 1;
                                continue;
                            }
                        }
                        i = self.skip_statement(i, end);
                        continue;
                    }
                    "extern" if self.tok(i + 1).is_some_and(|t| t.kind == TokKind::Str) => {
                        if self.is(i + 2, "{") {
                            if let Some(close) = self.matching[i + 2].filter(|&c| c < end) {
                                self.parse_items(i + 3, close, class);
                                i = close + 1;
                                continue;
                            }
                        }
                        i += 2;
                        continue;
                    }
                    "template" if self.is(i + 1, "<") => {
                        i = self.skip_angles(i + 1, end);
                        continue;
                    }
                    "using" | "static_assert" => {
                        i = self.skip_statement(i, end);
                        continue;
                    }
                    "public" | "private" | "protected" if self.is(i + 1, ":") => {
                        i += 2;
                        continue;
                    }
                    "typedef" => {
                        i = self.parse_typedef(i, end);
                        continue;
                    }
                    "struct" | "class" | "union" | "enum" => {
                        if let Some(next) = self.parse_type_definition(i, end) {
                            i = next;
                            continue;
                        }
                    }
                    _ => {}
                }
            }
            match self.scan_decl(i, end) {
                Terminator::Brace(b) => {
                    let Some(close) = self.matching[b].filter(|&c| c < end) else {
                        self.skip_region(i, end.saturating_sub(1));
                        return;
                    };
                    if !self.parse_function(i, b, close, class) {
                        self.skip_region(i, close);
                    }
                    i = close + 1;
                }
                Terminator::Semi(s) => {
                    if class.is_none() && !self.parse_declaration(i, s) {
                        self.skip_region(i, s);
                    }
                    i = s + 1;
                }
                Terminator::Stop(s) => {
                    let stop = s.max(i);
                    self.skip_region(i, stop.min(end.saturating_sub(1)));
                    i = stop + 1;
                }
            }
        }
    }

    fn skip_statement(&self, i: usize, end: usize) -> usize {
        match self.scan_decl(i, end) {
            Terminator::Semi(s) | Terminator::Stop(s) => s + 1,
            Terminator::Brace(b) => self.matching[b].map_or(end, |c| c + 1),
        }
    }

    fn parse_typedef(&mut self, i: usize, end: usize) -> usize {
        let mut j = i + 1;
        while j < end && !self.toks[j].is(";") {
            if matches!(self.toks[j].text.as_str(), "(" | "[" | "{")
                && self.toks[j].kind == TokKind::Punct
            {
                match self.matching[j] {
                    Some(m) if m < end => {
                        j = m;
                    }
                    _ => {
                        self.skip_region(i, end - 1);
                        return end;
                    }
                }
            }
            j += 1;
        }
        if j >= end {
            self.skip_region(i, end - 1);
            return end;
        }
        let stmt = i + 1..j;
        let mut name = None;
        // function-pointer typedef: `( * name )`
        for k in stmt.clone() {
            if self.is(k, "(") && self.is(k + 1, "*") && self.tok(k + 2).is_some_and(Tok::is_ident)
            {
                name = Some(self.toks[k + 2].text.clone());
                break;
            }
        }
        if name.is_none() {
            let mut k = j;
            while k > stmt.start {
                k -= 1;
                if self.toks[k].is("]") {
                    if let Some(m) = self.matching[k] {
                        k = m;
                        continue;
                    }
                }
                if self.toks[k].is_ident() {
                    name = Some(self.toks[k].text.clone());
                }
                break;
            }
        }
        match name {
            Some(name) => {
                let id = ids::ty(self.path, &name);
                let span = Span::new(self.path, self.line(i), self.line(j));
                self.types.insert(name.clone());
                self.add_entity(
                    Entity::new(&id, EntityKind::Type, &name)
                        .with_span(span)
                        .with_attr("keyword", "typedef"),
                );
                self.add_relation(
                    &ids::file(self.path),
                    Predicate::Declares,
                    Object::entity(&id),
                    self.line(i),
                );
            }
            None => self.skip_region(i, j),
        }
        j + 1
    }

    /// `struct|class|union|enum [Name] [: bases] { ... } [declarators] ;`
    /// Returns `None` when the tokens are not a type definition (e.g. `struct S s;`).
    fn parse_type_definition(&mut self, i: usize, end: usize) -> Option<usize> {
        let keyword = self.toks[i].text.clone();
        let mut j = i + 1;
        if keyword == "enum" && (self.is(j, "class") || self.is(j, "struct")) {
            j += 1;
        }
        let name = self.tok(j).filter(|t| t.is_ident()).map(|t| t.text.clone());
        if name.is_some() {
            j += 1;
        }
        // skip base-clause / underlying type up to the body
        while j < end && !self.is(j, "{") {
            let t = &self.toks[j];
            if t.is(";")
                || t.is("(")
                || t.is("=")
                || (t.is_ident() && name.is_some() && j == i + 2 && !t.is("final"))
            {
                break;
            }
            j += 1;
        }
        if !self.is(j, "{") {
            return None;
        }
        let close = self.matching[j].filter(|&c| c < end)?;
        let start_line = self.line(i);
        let type_name = name
            .clone()
            .unwrap_or_else(|| format!("<anon@{start_line}>"));
        let id = ids::ty(self.path, &type_name);
        if name.is_some() {
            let kind = if keyword == "class" {
                EntityKind::Class
            } else {
                EntityKind::Type
            };
            let span = Span::new(self.path, start_line, self.line(close));
            self.types.insert(type_name.clone());
            self.add_entity(
                Entity::new(&id, kind, &type_name)
                    .with_span(span)
                    .with_attr("keyword", &keyword),
            );
            self.add_relation(
                &ids::file(self.path),
                Predicate::Declares,
                Object::entity(&id),
                start_line,
            );
            if keyword != "enum" {
                let class_id = id.clone();
                self.parse_items(j + 1, close, Some((&type_name, &class_id)));
            }
        }
        // trailing declarators: `} a, *b;`
        let mut k = close + 1;
        while k < end && !self.is(k, ";") {
            k += 1;
        }
        if k > close + 1 && k < end {
            let base = format!("{keyword} {type_name}");
            self.declare_variables(i, close + 1, k, Some(base));
        }
        Some((k + 1).min(end))
    }

    /// Function-definition header `toks[start..brace]`, body `brace..=close`.
    fn parse_function(
        &mut self,
        start: usize,
        brace: usize,
        close: usize,
        class: Option<(&str, &str)>,
    ) -> bool {
        let mut k = start;
        let mut paren = None;
        while k < brace {
            let t = &self.toks[k];
            if t.is("=") {
                return false;
            }
            if t.is("(") {
                let prev = if k > start {
                    Some(&self.toks[k - 1])
                } else {
                    None
                };
                let named = prev
                    .is_some_and(|p| p.is_ident() && !NON_CALLABLE.contains(&p.text.as_str()))
                    || (k >= start + 2 && self.toks[k - 2].is("operator"));
                if named {
                    paren = Some(k);
                    break;
                }
                match self.matching[k] {
                    Some(m) if m < brace => k = m,
                    _ => return false,
                }
            }
            k += 1;
        }
        let Some(paren) = paren else { return false };
        let Some(paren_close) = self.matching[paren].filter(|&m| m < brace) else {
            return false;
        };

        // qualified name, walking back over `A::B::~f`
        let mut n = paren - 1;
        if self.toks[n].kind == TokKind::Punct {
            n -= 1; // operator symbol
        }
        while n >= start + 2 && self.toks[n - 1].is("::") && self.toks[n - 2].is_ident() {
            n -= 2;
        }
        if n > start && self.toks[n].is("~") {
            n -= 1;
        }
        let mut name: String = self.toks[n..paren]
            .iter()
            .map(|t| t.text.as_str())
            .collect();
        if n > start && self.toks[n - 1].is("~") {
            name = format!("~{name}");
        }
        let label = match class {
            Some((cname, _)) => format!("{cname}::{name}"),
            None => name.clone(),
        };
        let is_static = self.toks[start..n].iter().any(|t| t.is("static"));
        let id = ids::func(self.path, &label);
        let span = Span::new(self.path, self.line(start), self.line(close));
        let mut e = Entity::new(&id, EntityKind::Function, &label).with_span(span);
        if is_static {
            e = e.with_attr("storage", "static");
        }
        let strings: Vec<String> = self.toks[brace..close]
            .iter()
            .filter(|t| t.kind == TokKind::Str && !t.text.is_empty())
            .map(|t| t.text.clone())
            .collect();
        if !strings.is_empty() {
            e = e.with_attr(
                "strings",
                serde_json::to_string(&strings).unwrap_or_default(),
            );
        }
        if self.entities.contains_key(&id) {
            // redefinition (overload): first one wins
            return true;
        }
        self.add_entity(e);
        self.add_relation(
            &ids::file(self.path),
            Predicate::Declares,
            Object::entity(&id),
            self.line(start),
        );

        let owner = match class {
            Some((_, cid)) => Some(cid.to_string()),
            None => label.rsplit_once("::").and_then(|(q, _)| {
                let qname = q.rsplit("::").next().unwrap_or(q);
                self.types
                    .contains(qname)
                    .then(|| ids::ty(self.path, qname))
            }),
        };
        if let Some(owner) = owner {
            self.add_relation(
                &id,
                Predicate::MemberOf,
                Object::entity(owner),
                self.line(start),
            );
        }
        self.func_by_name
            .entry(label.clone())
            .or_insert_with(|| id.clone());
        if label != name {
            self.func_by_name.entry(name).or_insert_with(|| id.clone());
        }
        let params = self.param_names(paren + 1, paren_close);
        self.funcs.push(FuncDef {
            id,
            params,
            body_open: brace,
            body_close: close,
        });
        true
    }

    fn split_commas(&self, from: usize, to: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut s = from;
        let mut k = from;
        while k < to {
            let t = &self.toks[k];
            if t.kind == TokKind::Punct && matches!(t.text.as_str(), "(" | "[" | "{") {
                if let Some(m) = self.matching[k].filter(|&m| m < to) {
                    k = m + 1;
                    continue;
                }
            }
            if t.is(",") {
                out.push((s, k));
                s = k + 1;
            }
            k += 1;
        }
        if s < to {
            out.push((s, to));
        }
        out
    }

    fn param_names(&self, from: usize, to: usize) -> Vec<String> {
        let mut out = Vec::new();
        for (a, b) in self.split_commas(from, to) {
            let end = (a..b)
                .find(|&k| self.toks[k].is("=") || self.toks[k].is("["))
                .unwrap_or(b);
            if let Some(k) = (a..end).find(|&k| self.is(k, "(") && self.is(k + 1, "*")) {
                if let Some(t) = self.tok(k + 2).filter(|t| t.is_ident()) {
                    out.push(t.text.clone());
                }
                continue;
            }
            let idents: Vec<&Tok> = self.toks[a..end].iter().filter(|t| t.is_ident()).collect();
            if idents.len() >= 2 {
                out.push(idents[idents.len() - 1].text.clone());
            }
        }
        out
    }

    /// Top-level `;`-terminated statement: variable declarations or a prototype.
    fn parse_declaration(&mut self, start: usize, semi: usize) -> bool {
        if start == semi {
            return true;
        }
        let mut k = start;
        while k < semi {
            let t = &self.toks[k];
            if t.is("=") {
                break;
            }
            if t.is("(") {
                let prev_named = k > start
                    && self.toks[k - 1].is_ident()
                    && !is_type_word(&self.toks[k - 1].text);
                if prev_named && !self.is(k + 1, "*") {
                    return true; // prototype or macro invocation
                }
                match self.matching[k] {
                    Some(m) if m < semi => k = m,
                    _ => return false,
                }
            }
            k += 1;
        }
        self.declare_variables(start, start, semi, None)
    }

    /// Declarators in `toks[decl_from..semi]`; `base` overrides the type taken from the first declarator.
    fn declare_variables(
        &mut self,
        stmt_start: usize,
        decl_from: usize,
        semi: usize,
        base: Option<String>,
    ) -> bool {
        let chunks = self.split_commas(decl_from, semi);
        if chunks.is_empty() {
            return false;
        }
        let mut base_type = base;
        let mut storage: Option<String> = None;
        let mut declared = Vec::new();
        for (ci, &(a, b)) in chunks.iter().enumerate() {
            let end = (a..b).find(|&k| self.toks[k].is("=")).unwrap_or(b);
            let mut name_idx = None;
            if let Some(k) = (a..end).find(|&k| self.is(k, "(") && self.is(k + 1, "*")) {
                name_idx = (k + 2 < end && self.toks[k + 2].is_ident()).then_some(k + 2);
            } else {
                let mut k = end;
                while k > a {
                    k -= 1;
                    if self.toks[k].is("]") {
                        if let Some(m) = self.matching[k].filter(|&m| m >= a) {
                            k = m;
                            continue;
                        }
                    }
                    if self.toks[k].is_ident() {
                        name_idx = Some(k);
                    }
                    break;
                }
            }
            let Some(ni) = name_idx else { return false };
            let prefix = &self.toks[a..ni];
            let mut stars = String::new();
            if ci == 0 && base_type.is_none() {
                let mut words = Vec::new();
                for t in prefix {
                    if STORAGE.contains(&t.text.as_str()) {
                        storage.get_or_insert_with(|| t.text.clone());
                    } else if t.is("*") || t.is("&") {
                        stars.push_str(&t.text);
                    } else if !t.is("(") {
                        words.push(t.text.clone());
                    }
                }
                if words.is_empty() {
                    return false;
                }
                base_type = Some(words.join(" ").replace(" :: ", "::"));
            } else {
                for t in prefix {
                    if t.is("*") || t.is("&") {
                        stars.push_str(&t.text);
                    }
                }
            }
            let ty = match (&base_type, stars.is_empty()) {
                (Some(bt), true) => bt.clone(),
                (Some(bt), false) => format!("{bt} {stars}"),
                (None, _) => return false,
            };
            declared.push((self.toks[ni].text.clone(), ty));
        }
        let span = Span::new(self.path, self.line(stmt_start), self.line(semi));
        for (name, ty) in declared {
            let id = ids::var(self.path, &name);
            let mut e = Entity::new(&id, EntityKind::Variable, &name)
                .with_span(span.clone())
                .with_attr("scope", "global")
                .with_attr("type", &ty);
            if let Some(s) = &storage {
                e = e.with_attr("storage", s);
            }
            self.add_entity(e);
            self.globals.entry(name).or_insert_with(|| id.clone());
            self.add_relation(
                &ids::file(self.path),
                Predicate::Declares,
                Object::entity(&id),
                span.start,
            );
            self.add_relation(&id, Predicate::HasType, Object::literal(ty), span.start);
        }
        true
    }

    fn analyze_bodies(&mut self) {
        let funcs = std::mem::take(&mut self.funcs);
        for f in &funcs {
            self.analyze_body(f);
        }
        self.funcs = funcs;
    }

    /// Local declaration at statement start: returns names (token indices) and type text.
    fn local_declaration(&self, i: usize, end: usize) -> Option<(Vec<usize>, String, usize)> {
        let first = &self.toks[i];
        if !first.is_ident()
            || STATEMENT_KEYWORDS.contains(&first.text.as_str())
            || NON_CALLABLE.contains(&first.text.as_str())
        {
            return None;
        }
        let mut j = i;
        let mut idents = 0;
        while j < end {
            let t = &self.toks[j];
            if t.is_ident() {
                idents += 1;
            } else if t.is("::") || t.is("*") || t.is("&") {
            } else if t.is("<") && j > i && self.toks[j - 1].is_ident() {
                j = self.skip_angles(j, end);
                continue;
            } else {
                break;
            }
            j += 1;
        }
        if idents < 2 || j >= end || !self.toks[j - 1].is_ident() {
            return None;
        }
        let follow = &self.toks[j];
        if !["=", ";", ",", "[", "(", "{", ":"]
            .iter()
            .any(|s| follow.is(s))
        {
            return None;
        }
        let typed =
            is_type_word(&first.text) || self.types.contains(&first.text) || self.is(i + 1, "::");
        if follow.is("(") && !typed {
            return None;
        }
        let ty: String = self.toks[i..j - 1]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let mut names = vec![j - 1];
        // further declarators up to the statement end
        let mut k = j;
        while k < end && !self.toks[k].is(";") {
            let t = &self.toks[k];
            if t.kind == TokKind::Punct && matches!(t.text.as_str(), "(" | "[" | "{") {
                if let Some(m) = self.matching[k].filter(|&m| m < end) {
                    k = m + 1;
                    continue;
                }
            }
            if t.is(",") {
                let mut n = k + 1;
                while n < end && (self.toks[n].is("*") || self.toks[n].is("&")) {
                    n += 1;
                }
                if n < end && self.toks[n].is_ident() {
                    names.push(n);
                }
            }
            if t.is(")") {
                break; // end of a for-init
            }
            k += 1;
        }
        Some((names, ty, j))
    }

    fn thread_targets(&self, args_open: usize, position: usize) -> Vec<String> {
        let Some(close) = self.matching[args_open] else {
            return Vec::new();
        };
        let args = self.split_commas(args_open + 1, close);
        let candidates: Vec<Option<String>> = args
            .iter()
            .map(|&(a, b)| {
                let last = self.toks[a..b].iter().rev().find(|t| t.is_ident())?;
                let simple = self.toks[a..b]
                    .iter()
                    .all(|t| t.is_ident() || ["&", "*", "(", ")", "::"].iter().any(|s| t.is(s)));
                (simple
                    && !is_type_word(&last.text)
                    && last.text != "NULL"
                    && last.text != "nullptr")
                    .then(|| last.text.clone())
            })
            .collect();
        let known: Vec<String> = candidates
            .iter()
            .flatten()
            .filter(|n| self.func_by_name.contains_key(*n))
            .cloned()
            .collect();
        if !known.is_empty() {
            return known;
        }
        candidates
            .get(position)
            .cloned()
            .flatten()
            .into_iter()
            .collect()
    }

    fn callee_id(&mut self, name: &str) -> String {
        if let Some(id) = self.func_by_name.get(name) {
            return id.clone();
        }
        let id = ids::func(ids::EXTERN_PATH, name);
        self.add_entity(Entity::new(&id, EntityKind::Function, name).with_attr("external", "true"));
        id
    }

    fn analyze_body(&mut self, f: &FuncDef) {
        let (open, close) = (f.body_open, f.body_close);
        let mut locals: BTreeSet<String> = f.params.iter().cloned().collect();
        let mut skip: BTreeSet<usize> = BTreeSet::new();
        // (lock, scope depth for RAII guards)
        let mut held: Vec<(String, Option<usize>)> = Vec::new();
        let mut depth = 0usize;
        let mut stmt_start = true;
        let mut i = open + 1;

        while i < close {
            let t = self.toks[i].clone();
            if stmt_start && t.is_ident() {
                if let Some((names, ty, after)) = self.local_declaration(i, close) {
                    for k in i..after {
                        skip.insert(k);
                    }
                    for &n in &names {
                        skip.insert(n);
                        locals.insert(self.toks[n].text.clone());
                    }
                    let paren = self.is(after, "(") || self.is(after, "{");
                    if paren && SCOPED_LOCKS.iter().any(|l| ty.contains(l)) {
                        if let Some(m) = self.matching[after] {
                            if let Some(lock) =
                                self.toks[after..m].iter().rev().find(|t| t.is_ident())
                            {
                                held.push((lock.text.clone(), Some(depth)));
                            }
                        }
                    }
                    if self.is(after, "(") && ty.split_whitespace().any(|w| w == "thread") {
                        for target in self.thread_targets(after, 0) {
                            let callee = self.callee_id(&target);
                            let line = self.line(after);
                            self.add_relation(
                                &f.id,
                                Predicate::Calls,
                                Object::entity(callee),
                                line,
                            )
                            .insert("threading".into(), "create".into());
                        }
                    }
                }
            }
            stmt_start = false;
            if t.kind == TokKind::Punct {
                match t.text.as_str() {
                    "{" => {
                        depth += 1;
                        stmt_start = true;
                    }
                    "}" => {
                        held.retain(|(_, d)| d.is_none_or(|d| d < depth));
                        depth = depth.saturating_sub(1);
                        stmt_start = true;
                    }
                    ";" => stmt_start = true,
                    "(" if i > 0 && self.toks[i - 1].is("for") => stmt_start = true,
                    ":" if i > 0
                        && (self.toks[i - 1].is("default") || self.toks[i - 1].is_ident()) =>
                    {
                        stmt_start = true
                    }
                    _ => {}
                }
                i += 1;
                continue;
            }
            if !t.is_ident() || skip.contains(&i) || NON_CALLABLE.contains(&t.text.as_str()) {
                i += 1;
                continue;
            }
            let prev = if i > open + 1 {
                Some(self.toks[i - 1].clone())
            } else {
                None
            };
            if prev.as_ref().is_some_and(|p| p.is("::")) {
                i += 1;
                continue;
            }
            if prev.as_ref().is_some_and(|p| p.is(".") || p.is("->")) {
                if self.is(i + 1, "(") && i >= 2 && self.toks[i - 2].is_ident() {
                    let obj = self.toks[i - 2].text.clone();
                    match t.text.as_str() {
                        "lock" => held.push((obj, None)),
                        "unlock" => {
                            if let Some(pos) = held.iter().rposition(|(l, _)| *l == obj) {
                                held.remove(pos);
                            }
                        }
                        _ => {}
                    }
                }
                i += 1;
                continue;
            }
            // qualified name A::B::c
            let mut name_end = i;
            let mut name = t.text.clone();
            while self.is(name_end + 1, "::") && self.tok(name_end + 2).is_some_and(Tok::is_ident) {
                name_end += 2;
                name = format!("{name}::{}", self.toks[name_end].text);
            }
            let line = t.line;
            if self.is(name_end + 1, "(") {
                let args_open = name_end + 1;
                if locals.contains(&name) {
                    i = name_end + 1;
                    continue;
                }
                let lock_arg = || {
                    self.matching[args_open].and_then(|m| {
                        self.toks[args_open..m]
                            .iter()
                            .rev()
                            .find(|t| t.is_ident())
                            .map(|t| t.text.clone())
                    })
                };
                if LOCK_FUNCTIONS.contains(&name.as_str()) {
                    if let Some(lock) = lock_arg() {
                        held.push((lock, None));
                    }
                } else if UNLOCK_FUNCTIONS.contains(&name.as_str()) {
                    if let Some(lock) = lock_arg() {
                        if let Some(pos) = held.iter().rposition(|(l, _)| *l == lock) {
                            held.remove(pos);
                        }
                    }
                } else if let Some(&(_, pos)) =
                    THREAD_CREATE_FUNCTIONS.iter().find(|(n, _)| *n == name)
                {
                    for target in self.thread_targets(args_open, pos) {
                        let callee = self.callee_id(&target);
                        self.add_relation(&f.id, Predicate::Calls, Object::entity(callee), line)
                            .insert("threading".into(), "create".into());
                    }
                } else {
                    let callee = self.callee_id(&name);
                    let attrs =
                        self.add_relation(&f.id, Predicate::Calls, Object::entity(callee), line);
                    let sites = attrs
                        .get("sites")
                        .and_then(|s| s.parse::<usize>().ok())
                        .unwrap_or(0)
                        + 1;
                    attrs.insert("sites".into(), sites.to_string());
                }
                i = name_end + 1;
                continue;
            }
            if name_end == i && !locals.contains(&name) {
                if let Some(var_id) = self.globals.get(&name).cloned() {
                    let pred = if self.is_write(i, prev.as_ref()) {
                        Predicate::Writes
                    } else {
                        Predicate::Reads
                    };
                    self.add_relation(&f.id, pred, Object::entity(&var_id), line);
                    if !held.is_empty() {
                        let attrs = self.add_relation(
                            &f.id,
                            Predicate::Guards,
                            Object::entity(&var_id),
                            line,
                        );
                        let mut locks: BTreeSet<String> = attrs
                            .get("locks")
                            .map(|l| l.split(',').map(str::to_string).collect())
                            .unwrap_or_default();
                        locks.extend(held.iter().map(|(l, _)| l.clone()));
                        attrs.insert(
                            "locks".into(),
                            locks.into_iter().collect::<Vec<_>>().join(","),
                        );
                    }
                }
            }
            i = name_end + 1;
        }
    }

    fn is_write(&self, i: usize, prev: Option<&Tok>) -> bool {
        if prev.is_some_and(|p| p.is("++") || p.is("--")) {
            return true;
        }
        let mut k = i + 1;
        loop {
            if self.is(k, "[") {
                match self.matching[k] {
                    Some(m) => k = m + 1,
                    None => return false,
                }
            } else if (self.is(k, ".") || self.is(k, "->"))
                && self.tok(k + 1).is_some_and(Tok::is_ident)
            {
                k += 2;
            } else {
                break;
            }
        }
        self.tok(k)
            .is_some_and(|t| t.is("++") || t.is("--") || ASSIGN_OPS.iter().any(|op| t.is(op)))
    }
}
