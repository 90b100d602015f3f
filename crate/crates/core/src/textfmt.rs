//! Concrete `.fdf` syntax: lexer, parser and canonical printer.
//!
//! ```text
//! pipeline minimal
//! source data X "X"
//! source data Y "Y"
//! box b1 : coder     { predef = "pca(var=0.99)"  in data X  out func encode, decode }
//! box b2 : processor { func = b1.encode  in data X  out data xr "X'" }
//! box b3 : trainer   { k = 1 predef = "mlp(50,50,opt=sgd)"  in data b2.xr, Y  out func predict }
//! export func b1.encode
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::diag::{Code, Diagnostic, SourceSpan};
use crate::graph;
use crate::ir::{
    BoxKind, Direction, LibraryRef, Param, Pipeline, PipelineBuilder, PortClass, PortId, DATA_IO, FUNC_OUT,
};

/// Drop an exponent suffix (`V^E` → `V`). Everything from the first `^` on
/// is removed, which keeps the operation idempotent.
pub fn strip_exponent(annotation: &str) -> &str {
    match annotation.split_once('^') {
        Some((base, _)) => base,
        None => annotation,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(u64),
    Sym(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

struct Lexer<'a> {
    text: &'a str,
    line_starts: Vec<usize>,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        let mut line_starts = vec![0];
        line_starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        Lexer { text, line_starts }
    }

    fn span(&self, start: usize, end: usize) -> SourceSpan {
        let line = self.line_starts.partition_point(|s| *s <= start);
        let line_start = self.line_starts[line - 1];
        let column = self.text[line_start..start].chars().count() as u32 + 1;
        SourceSpan { line: line as u32, column, start, end }
    }

    fn tokenize(&self, diags: &mut Vec<Diagnostic>) -> Vec<Token> {
        let mut out = Vec::new();
        let mut it = self.text.char_indices().peekable();
        while let Some(&(i, c)) = it.peek() {
            if c.is_whitespace() {
                it.next();
            } else if c == '#' {
                while let Some(&(_, c)) = it.peek() {
                    if c == '\n' {
                        break;
                    }
                    it.next();
                }
            } else if c.is_alphabetic() || c == '_' {
                let mut end = i;
                while let Some(&(j, c)) = it.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        end = j + c.len_utf8();
                        it.next();
                    } else {
                        break;
                    }
                }
                out.push(Token { tok: Tok::Ident(self.text[i..end].to_string()), span: self.span(i, end) });
            } else if c.is_ascii_digit() {
                let mut end = i;
                while let Some(&(j, c)) = it.peek() {
                    if c.is_ascii_digit() {
                        end = j + 1;
                        it.next();
                    } else {
                        break;
                    }
                }
                match self.text[i..end].parse() {
                    Ok(v) => out.push(Token { tok: Tok::Int(v), span: self.span(i, end) }),
                    Err(_) => diags.push(
                        Diagnostic::new(Code::Syntax, "integer literal out of range")
                            .with_span(Some(self.span(i, end))),
                    ),
                }
            } else if c == '"' {
                it.next();
                let mut value = String::new();
                let mut end = None;
                while let Some((j, c)) = it.next() {
                    match c {
                        '"' => {
                            end = Some(j + 1);
                            break;
                        }
                        '\\' => match it.next() {
                            Some((_, 'n')) => value.push('\n'),
                            Some((_, 't')) => value.push('\t'),
                            Some((_, c)) => value.push(c),
                            None => break,
                        },
                        '\n' => break,
                        c => value.push(c),
                    }
                }
                match end {
                    Some(end) => out.push(Token { tok: Tok::Str(value), span: self.span(i, end) }),
                    None => diags.push(
                        Diagnostic::new(Code::Syntax, "unterminated string literal")
                            .with_span(Some(self.span(i, i + 1))),
                    ),
                }
            } else if "{}:,.=".contains(c) {
                it.next();
                out.push(Token { tok: Tok::Sym(c), span: self.span(i, i + 1) });
            } else {
                it.next();
                diags.push(
                    Diagnostic::new(Code::Syntax, format!("unexpected character {c:?}"))
                        .with_span(Some(self.span(i, i + c.len_utf8()))),
                );
            }
        }
        let end = self.text.len();
        out.push(Token { tok: Tok::Eof, span: self.span(end, end) });
        out
    }
}

#[derive(Debug, Clone)]
struct Ref {
    owner: Option<String>,
    port: String,
    span: SourceSpan,
}

impl Ref {
    fn text(&self) -> String {
        match &self.owner {
            Some(b) => format!("{b}.{}", self.port),
            None => self.port.clone(),
        }
    }
}

#[derive(Debug)]
struct OutDecl {
    class: PortClass,
    name: String,
    annotation: Option<String>,
    span: SourceSpan,
}

#[derive(Debug)]
struct BoxAst {
    id: String,
    kind: BoxKind,
    span: SourceSpan,
    predef: Option<(String, SourceSpan)>,
    func: Option<Ref>,
    k: Option<u64>,
    inputs: Vec<Ref>,
    outputs: Vec<OutDecl>,
}

#[derive(Debug)]
enum Stmt {
    Pipeline(String),
    Source { name: String, annotation: Option<String>, span: SourceSpan },
    Sink { r: Ref, annotation: Option<String>, span: SourceSpan },
    Box(BoxAst),
    Export { r: Ref, span: SourceSpan },
    SameType { a: Ref, b: Ref, span: SourceSpan },
}

const TOP_LEVEL: [&str; 6] = ["pipeline", "source", "sink", "box", "export", "same_type"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

type PResult<T> = Result<T, ()>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&mut self, code: Code, msg: impl Into<String>, span: SourceSpan) -> PResult<T> {
        self.diags.push(Diagnostic::new(code, msg).with_span(Some(span)));
        Err(())
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Eof => "end of file".to_string(),
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, SourceSpan)> {
        match self.peek().clone() {
            Tok::Ident(s) if !TOP_LEVEL.contains(&s.as_str()) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            other => {
                let span = self.span();
                self.error(Code::Syntax, format!("expected {what}, found {}", Self::describe(&other)), span)
            }
        }
    }

    fn expect_sym(&mut self, c: char) -> PResult<SourceSpan> {
        if *self.peek() == Tok::Sym(c) {
            Ok(self.bump().span)
        } else {
            let msg = format!("expected `{c}`, found {}", Self::describe(self.peek()));
            let span = self.span();
            self.error(Code::Syntax, msg, span)
        }
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn opt_string(&mut self) -> Option<String> {
        if let Tok::Str(s) = self.peek().clone() {
            self.bump();
            Some(s)
        } else {
            None
        }
    }

    fn parse_ref(&mut self) -> PResult<Ref> {
        let (first, span) = self.expect_ident("a port reference")?;
        if self.eat_sym('.') {
            let (port, end) = self.expect_ident("a port name after `.`")?;
            Ok(Ref { owner: Some(first), port, span: SourceSpan { end: end.end, ..span } })
        } else {
            Ok(Ref { owner: None, port: first, span })
        }
    }

    fn expect_class(&mut self, allowed: &[PortClass]) -> PResult<PortClass> {
        let (word, span) = self.expect_ident("`data` or `func`")?;
        let class = match word.as_str() {
            "data" => PortClass::Data,
            "func" => PortClass::Function,
            _ => return self.error(Code::Syntax, format!("expected `data` or `func`, found `{word}`"), span),
        };
        if !allowed.contains(&class) {
            return self.error(Code::Keyword, format!("`{word}` is not allowed here"), span);
        }
        Ok(class)
    }

    /// Skip to the next top-level keyword.
    fn recover(&mut self) {
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::Ident(s) if TOP_LEVEL.contains(&s.as_str()) => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn statements(&mut self) -> Vec<Stmt> {
        let mut out = Vec::new();
        loop {
            let start = self.pos;
            match self.statement() {
                Ok(Some(s)) => out.push(s),
                Ok(None) => return out,
                Err(()) => {
                    if self.pos == start {
                        self.bump();
                    }
                    self.recover();
                }
            }
        }
    }

    fn statement(&mut self) -> PResult<Option<Stmt>> {
        let span = self.span();
        let kw = match self.peek().clone() {
            Tok::Eof => return Ok(None),
            Tok::Ident(s) => s,
            other => {
                return self.error(
                    Code::Syntax,
                    format!("expected a statement, found {}", Self::describe(&other)),
                    span,
                )
            }
        };
        match kw.as_str() {
            "pipeline" => {
                self.bump();
                let (name, _) = self.expect_ident("a pipeline name")?;
                Ok(Some(Stmt::Pipeline(name)))
            }
            "source" => {
                self.bump();
                self.expect_class(&[PortClass::Data])?;
                let (name, _) = self.expect_ident("a source name")?;
                let annotation = self.opt_string();
                Ok(Some(Stmt::Source { name, annotation, span }))
            }
            "sink" => {
                self.bump();
                self.expect_class(&[PortClass::Data])?;
                let r = self.parse_ref()?;
                let annotation = self.opt_string();
                Ok(Some(Stmt::Sink { r, annotation, span }))
            }
            "export" => {
                self.bump();
                self.expect_class(&[PortClass::Function])?;
                let r = self.parse_ref()?;
                Ok(Some(Stmt::Export { r, span }))
            }
            "same_type" => {
                self.bump();
                let a = self.parse_ref()?;
                let b = self.parse_ref()?;
                Ok(Some(Stmt::SameType { a, b, span }))
            }
            "box" => {
                self.bump();
                self.box_decl(span).map(|b| Some(Stmt::Box(b)))
            }
            _ => self.error(Code::Syntax, format!("unknown statement `{kw}`"), span),
        }
    }

    fn box_decl(&mut self, span: SourceSpan) -> PResult<BoxAst> {
        let (id, _) = self.expect_ident("a box id")?;
        self.expect_sym(':')?;
        let (kind_word, kind_span) = self.expect_ident("a box kind")?;
        let kind = match kind_word.as_str() {
            "processor" => BoxKind::Processor,
            "coder" => BoxKind::Coder,
            "trainer" => BoxKind::Trainer,
            _ => {
                return self.error(
                    Code::Syntax,
                    format!("unknown box kind `{kind_word}` (expected processor, coder or trainer)"),
                    kind_span,
                )
            }
        };
        self.expect_sym('{')?;
        let mut b =
            BoxAst { id, kind, span, predef: None, func: None, k: None, inputs: Vec::new(), outputs: Vec::new() };
        loop {
            let cspan = self.span();
            match self.peek().clone() {
                Tok::Sym('}') => {
                    self.bump();
                    break;
                }
                Tok::Ident(w) if w == "predef" => {
                    self.bump();
                    self.expect_sym('=')?;
                    let text = match self.peek().clone() {
                        Tok::Str(s) => {
                            self.bump();
                            s
                        }
                        other => {
                            return self.error(
                                Code::Syntax,
                                format!("expected a quoted library call, found {}", Self::describe(&other)),
                                self.span(),
                            )
                        }
                    };
                    if b.predef.is_some() {
                        return self.error(Code::Duplicate, "`predef` given twice", cspan);
                    }
                    if b.func.is_some() {
                        return self.error(Code::Keyword, "processor cannot have both `func` and `predef`", cspan);
                    }
                    b.predef = Some((text, cspan));
                }
                Tok::Ident(w) if w == "func" => {
                    self.bump();
                    if kind != BoxKind::Processor {
                        return self.error(
                            Code::Keyword,
                            format!("`func =` is only valid in a processor, not a {}", kind.keyword()),
                            cspan,
                        );
                    }
                    self.expect_sym('=')?;
                    let r = self.parse_ref()?;
                    if b.func.is_some() {
                        return self.error(Code::Duplicate, "`func` given twice", cspan);
                    }
                    if b.predef.is_some() {
                        return self.error(Code::Keyword, "processor cannot have both `func` and `predef`", cspan);
                    }
                    b.func = Some(r);
                }
                Tok::Ident(w) if w == "k" => {
                    self.bump();
                    if kind != BoxKind::Trainer {
                        return self.error(
                            Code::Keyword,
                            format!("`k =` is only valid in a trainer, not a {}", kind.keyword()),
                            cspan,
                        );
                    }
                    self.expect_sym('=')?;
                    match self.peek().clone() {
                        Tok::Int(v) => {
                            self.bump();
                            if b.k.is_some() {
                                return self.error(Code::Duplicate, "`k` given twice", cspan);
                            }
                            b.k = Some(v);
                        }
                        other => {
                            return self.error(
                                Code::Syntax,
                                format!("expected an integer, found {}", Self::describe(&other)),
                                self.span(),
                            )
                        }
                    }
                }
                Tok::Ident(w) if w == "in" => {
                    self.bump();
                    self.expect_class(&[PortClass::Data])?;
                    loop {
                        b.inputs.push(self.parse_ref()?);
                        if !self.eat_sym(',') {
                            break;
                        }
                    }
                }
                Tok::Ident(w) if w == "out" => {
                    self.bump();
                    let class = self.expect_class(&[PortClass::Data, PortClass::Function])?;
                    loop {
                        let (name, span) = self.expect_ident("an output port name")?;
                        let annotation = self.opt_string();
                        b.outputs.push(OutDecl { class, name, annotation, span });
                        if !self.eat_sym(',') {
                            break;
                        }
                    }
                }
                other => {
                    return self.error(
                        Code::Syntax,
                        format!("expected a box clause or `}}`, found {}", Self::describe(&other)),
                        cspan,
                    )
                }
            }
        }
        Ok(b)
    }
}

/// Parse `.fdf` text. On success ports are renumbered along the topological
/// order whenever the graph is acyclic; cyclic pipelines keep declaration order.
pub fn parse(text: &str) -> Result<Pipeline, Vec<Diagnostic>> {
    let lexer = Lexer::new(text);
    let mut diags = Vec::new();
    let toks = lexer.tokenize(&mut diags);
    let mut parser = Parser { toks, pos: 0, diags };
    let stmts = parser.statements();
    let mut diags = parser.diags;
    let pipeline = lower(stmts, &mut diags);
    if !diags.is_empty() {
        return Err(diags);
    }
    let mut g = graph::build_graph(&pipeline);
    if graph::check_well_formed(&mut g).is_ok() {
        Ok(graph::renumber(&pipeline, &g).expect("graph checked acyclic"))
    } else {
        Ok(pipeline)
    }
}

/// Parse raw bytes, reporting invalid UTF-8 as a syntax diagnostic.
pub fn parse_bytes(bytes: &[u8]) -> Result<Pipeline, Vec<Diagnostic>> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse(text),
        Err(e) => {
            let at = e.valid_up_to();
            let prefix = std::str::from_utf8(&bytes[..at]).unwrap_or("");
            let line = prefix.matches('\n').count() as u32 + 1;
            let column = prefix.rsplit('\n').next().map_or(0, |l| l.chars().count()) as u32 + 1;
            Err(vec![Diagnostic::new(Code::Syntax, "input is not valid UTF-8").with_span(Some(SourceSpan {
                line,
                column,
                start: at,
                end: at + 1,
            }))])
        }
    }
}

fn lower(stmts: Vec<Stmt>, diags: &mut Vec<Diagnostic>) -> Pipeline {
    let name = stmts
        .iter()
        .find_map(|s| match s {
            Stmt::Pipeline(n) => Some(n.clone()),
            _ => None,
        })
        .unwrap_or_else(|| "main".to_string());
    if stmts.iter().filter(|s| matches!(s, Stmt::Pipeline(_))).count() > 1 {
        diags.push(Diagnostic::new(Code::Duplicate, "more than one `pipeline` statement"));
    }
    let mut b = PipelineBuilder::new(name);
    let mut sources: HashMap<String, PortId> = HashMap::new();
    let mut named: HashMap<(String, String), PortId> = HashMap::new();
    // (input port, reference it reads from)
    let mut pending: Vec<(PortId, Ref)> = Vec::new();
    let mut same: Vec<(Ref, Ref, SourceSpan)> = Vec::new();

    for stmt in stmts {
        match stmt {
            Stmt::Pipeline(_) => {}
            Stmt::Source { name, annotation, span } => {
                if sources.contains_key(&name) {
                    diags.push(
                        Diagnostic::new(Code::Duplicate, format!("duplicate source `{name}`")).with_span(Some(span)),
                    );
                    continue;
                }
                let p = b.add_port(DATA_IO, Direction::Output, PortClass::Data, &name, annotation, Some(span));
                sources.insert(name, p);
            }
            Stmt::Sink { r, annotation, span } => {
                let p = b.add_port(DATA_IO, Direction::Input, PortClass::Data, r.text(), annotation, Some(span));
                pending.push((p, r));
            }
            Stmt::Export { r, span } => {
                let p = b.add_port(FUNC_OUT, Direction::Input, PortClass::Function, r.text(), None, Some(span));
                pending.push((p, r));
            }
            Stmt::SameType { a, b: other, span } => same.push((a, other, span)),
            Stmt::Box(ast) => {
                let param = match (ast.kind, &ast.predef, ast.k) {
                    (_, Some((text, span)), k) => match LibraryRef::parse(text) {
                        Ok(r) => match (ast.kind, k) {
                            (BoxKind::Trainer, Some(k)) => Some(Param::Split { k: k as usize, predef: r }),
                            (BoxKind::Trainer, None) => None,
                            _ => Some(Param::Predef(r)),
                        },
                        Err(msg) => {
                            diags.push(Diagnostic::new(Code::Syntax, msg).with_span(Some(*span)));
                            None
                        }
                    },
                    _ => None,
                };
                let idx = match b.add_box(&ast.id, ast.kind, param, Some(ast.span)) {
                    Ok(i) => i,
                    Err(e) => {
                        diags.push(Diagnostic::new(Code::Duplicate, e.to_string()).with_span(Some(ast.span)));
                        continue;
                    }
                };
                if let Some(r) = ast.func {
                    let span = r.span;
                    let p = b.add_port(idx, Direction::Input, PortClass::Function, "func", None, Some(span));
                    named.insert((ast.id.clone(), "func".to_string()), p);
                    pending.push((p, r));
                }
                for (i, r) in ast.inputs.into_iter().enumerate() {
                    let pname = format!("in{}", i + 1);
                    let p = b.add_port(idx, Direction::Input, PortClass::Data, &pname, None, Some(r.span));
                    named.insert((ast.id.clone(), pname), p);
                    pending.push((p, r));
                }
                for out in ast.outputs {
                    let key = (ast.id.clone(), out.name.clone());
                    if named.contains_key(&key) {
                        diags.push(
                            Diagnostic::new(
                                Code::Duplicate,
                                format!("duplicate port `{}` in box `{}`", out.name, ast.id),
                            )
                            .with_span(Some(out.span)),
                        );
                        continue;
                    }
                    let p = b.add_port(idx, Direction::Output, out.class, &out.name, out.annotation, Some(out.span));
                    named.insert(key, p);
                }
            }
        }
    }

    let resolve = |r: &Ref, diags: &mut Vec<Diagnostic>| -> Option<PortId> {
        let hit = match &r.owner {
            None => sources.get(&r.port).copied(),
            Some(owner) => named.get(&(owner.clone(), r.port.clone())).copied(),
        };
        if hit.is_none() {
            diags.push(
                Diagnostic::new(Code::UnknownRef, format!("unknown reference `{}`", r.text())).with_span(Some(r.span)),
            );
        }
        hit
    };

    for (input, r) in pending {
        let Some(src) = resolve(&r, diags) else { continue };
        if b.port(src).direction != Direction::Output {
            diags.push(
                Diagnostic::new(Code::UnknownRef, format!("`{}` is an input port and cannot be read from", r.text()))
                    .with_span(Some(r.span)),
            );
            continue;
        }
        b.wire(input, src);
    }
    for (x, y, span) in same {
        if let (Some(p), Some(q)) = (resolve(&x, diags), resolve(&y, diags)) {
            b.same_type(p, q, Some(span));
        }
    }
    b.build()
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn annotated(name: &str, annotation: &Option<String>) -> String {
    match annotation {
        Some(a) => format!("{name} {}", quote(a)),
        None => name.to_string(),
    }
}

/// Canonical text for a structurally valid pipeline.
pub fn print(pipeline: &Pipeline) -> String {
    let mut out = String::new();
    let src = |q: PortId| pipeline.source_of(q).map(|p| pipeline.port_ref(p)).unwrap_or_default();
    writeln!(out, "pipeline {}", pipeline.name()).unwrap();

    let sources = pipeline.sources();
    if !sources.is_empty() {
        out.push('\n');
    }
    for p in sources {
        let port = &pipeline.ports()[p.index()];
        writeln!(out, "source data {}", annotated(&port.name, &port.annotation)).unwrap();
    }

    for (_, b) in pipeline.explicit_boxes() {
        out.push('\n');
        writeln!(out, "box {} : {} {{", b.id, b.kind.keyword()).unwrap();
        match &b.param {
            Some(Param::Split { k, predef }) => {
                writeln!(out, "    k = {k}").unwrap();
                writeln!(out, "    predef = {}", quote(predef.as_str())).unwrap();
            }
            Some(Param::Predef(r)) => writeln!(out, "    predef = {}", quote(r.as_str())).unwrap(),
            None => {}
        }
        for f in &b.func_inputs {
            writeln!(out, "    func = {}", src(*f)).unwrap();
        }
        if !b.data_inputs.is_empty() {
            let refs: Vec<String> = b.data_inputs.iter().map(|q| src(*q)).collect();
            writeln!(out, "    in data {}", refs.join(", ")).unwrap();
        }
        for (class, list) in [("data", &b.data_outputs), ("func", &b.func_outputs)] {
            if list.is_empty() {
                continue;
            }
            let decls: Vec<String> = list
                .iter()
                .map(|p| {
                    let port = &pipeline.ports()[p.index()];
                    annotated(&port.name, &port.annotation)
                })
                .collect();
            writeln!(out, "    out {class} {}", decls.join(", ")).unwrap();
        }
        writeln!(out, "}}").unwrap();
    }

    let tail = !pipeline.sinks().is_empty() || !pipeline.exports().is_empty() || !pipeline.same_type().is_empty();
    if tail {
        out.push('\n');
    }
    for q in pipeline.sinks() {
        let port = &pipeline.ports()[q.index()];
        writeln!(out, "sink data {}", annotated(&src(*q), &port.annotation)).unwrap();
    }
    for q in pipeline.exports() {
        writeln!(out, "export func {}", src(*q)).unwrap();
    }
    for s in pipeline.same_type() {
        writeln!(out, "same_type {} {}", pipeline.port_ref(s.a), pipeline.port_ref(s.b)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::validate_structure;

    pub(crate) const MINIMAL: &str = include_str!("../fixtures/minimal.fdf");

    #[test]
    fn minimal_fixture_matches_formal_definition() {
        let p = parse(MINIMAL).unwrap();
        assert_eq!(p.shape(), crate::ir::tests::minimal_by_hand().shape());
        let owners: Vec<&str> = (1..=14).map(|i| p.port_owner(PortId(i)).unwrap()).collect();
        assert_eq!(
            owners,
            ["DataIO", "DataIO", "b1", "b2", "b3", "b1", "b1", "FuncOut", "b2", "FuncOut", "b2", "b3", "b3", "FuncOut"]
        );
        let sigma: Vec<(u32, u32)> = p.wiring().iter().map(|(q, s)| (q.0, s.0)).collect();
        assert_eq!(sigma, [(3, 1), (4, 1), (5, 2), (8, 6), (9, 6), (10, 7), (12, 11), (14, 13)]);
        assert!(validate_structure(&p).is_empty());
    }

    #[test]
    fn empty_file_is_an_empty_valid_pipeline() {
        let p = parse("").unwrap();
        assert_eq!(p.port_count(), 0);
        assert_eq!(p.boxes().len(), 2);
        assert!(validate_structure(&p).is_empty());
        let p = parse("# only a comment\n").unwrap();
        assert_eq!(p.port_count(), 0);
    }

    #[test]
    fn unknown_reference_is_reported_with_span() {
        let text = "source data X\nbox p : processor { predef = \"identity\"\n  in data nosuch.port\n  out data y }";
        let diags = parse(text).unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, Code::UnknownRef);
        let span = diags[0].span.unwrap();
        assert_eq!((span.line, span.column), (3, 11));
    }

    #[test]
    fn duplicate_box_and_wrong_keywords() {
        let dup = "box a : processor { predef = \"identity\" }\nbox a : coder { predef = \"pca\" }";
        assert_eq!(parse(dup).unwrap_err()[0].code, Code::Duplicate);
        let k_in_coder = "box c : coder { k = 1 predef = \"pca\" }";
        assert_eq!(parse(k_in_coder).unwrap_err()[0].code, Code::Keyword);
        let func_in_trainer = "box t : trainer { func = a.b }";
        assert_eq!(parse(func_in_trainer).unwrap_err()[0].code, Code::Keyword);
        let both = "source data X\nbox a : processor { predef = \"identity\" in data X out data y }\n\
                    box p : processor { predef = \"identity\" func = a.y in data X out data z }";
        assert_eq!(parse(both).unwrap_err()[0].code, Code::Keyword);
    }

    #[test]
    fn syntax_errors_recover_at_next_statement() {
        let text = "source data\nbox b : widget { }\nsink data nowhere.x";
        let diags = parse(text).unwrap_err();
        let codes: Vec<Code> = diags.iter().map(|d| d.code).collect();
        assert_eq!(codes, [Code::Syntax, Code::Syntax, Code::UnknownRef]);
    }

    #[test]
    fn print_round_trips_minimal() {
        let p = parse(MINIMAL).unwrap();
        let text = print(&p);
        assert_eq!(text.matches("\nbox ").count(), 3);
        let again = parse(&text).unwrap();
        assert_eq!(again.shape(), p.shape());
        assert_eq!(print(&again), text);
    }

    #[test]
    fn annotations_are_preserved_verbatim() {
        let text = "source data v \"V^E\"\nsource data w \"quote \\\" and \\\\ slash\"\nsink data v \"V^H\"";
        let p = parse(text).unwrap();
        assert_eq!(p.ports()[0].annotation.as_deref(), Some("V^E"));
        assert_eq!(p.ports()[1].annotation.as_deref(), Some("quote \" and \\ slash"));
        let printed = print(&p);
        assert!(printed.contains("\"V^E\""));
        assert_eq!(parse(&printed).unwrap().shape(), p.shape());
    }

    #[test]
    fn strip_exponent_cases() {
        assert_eq!(strip_exponent("V^E"), "V");
        assert_eq!(strip_exponent("phi"), "phi");
        assert_eq!(strip_exponent("r\u{0394}U^1"), "r\u{0394}U");
        assert_eq!(strip_exponent("a^b^c"), "a");
    }

    #[test]
    fn invalid_utf8_is_a_diagnostic() {
        let diags = parse_bytes(b"source data X\n\xff").unwrap_err();
        assert_eq!(diags[0].code, Code::Syntax);
        assert_eq!(diags[0].span.unwrap().line, 2);
    }

    #[test]
    fn cyclic_pipeline_parses_without_renumbering() {
        let text = "box a : processor { predef = \"identity\" in data b.y out data x }\n\
                    box b : processor { predef = \"identity\" in data a.x out data y }";
        let p = parse(text).unwrap();
        assert_eq!(p.port_count(), 4);
        let mut g = graph::build_graph(&p);
        let w = graph::check_well_formed(&mut g).unwrap_err();
        assert_eq!(w.0.len(), 4);
        assert!(matches!(graph::renumber(&p, &g), Err(graph::GraphError::NotADag(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn parse_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
                let _ = parse_bytes(&bytes);
            }

            #[test]
            fn parse_never_panics_on_token_soup(
                words in proptest::collection::vec(
                    prop_oneof![
                        Just("box"), Just("source"), Just("sink"), Just("export"), Just("same_type"),
                        Just("data"), Just("func"), Just("in"), Just("out"), Just("k"), Just("predef"),
                        Just("{"), Just("}"), Just(":"), Just(","), Just("."), Just("="), Just("\"pca\""),
                        Just("a"), Just("b"), Just("1"), Just("processor"), Just("coder"), Just("trainer"),
                    ],
                    0..60,
                )
            ) {
                let _ = parse(&words.join(" "));
            }

            #[test]
            fn strip_exponent_is_idempotent(s in ".{0,12}") {
                let once = strip_exponent(&s);
                prop_assert_eq!(strip_exponent(once), once);
            }
        }
    }
}
