//! Diagnostics shared by every checking pass.

use std::fmt;

use crate::ir::PortId;

/// Location of a construct in the original `.fdf` text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SourceSpan {
    /// 1-based line.
    pub line: u32,
    /// 1-based column, counted in characters.
    pub column: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Error,
    Warning,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Code {
    Syntax,
    Duplicate,
    UnknownRef,
    Keyword,
    Arity,
    Param,
    ParamK,
    Dangling,
    Class,
    Cycle,
    AnnotClass,
    ArityMismatch,
    InconsistentInput,
    Upstream,
    UnknownPredef,
    BadArg,
    Batch,
    RuntimeShape,
    Runtime,
    MissingSource,
    UpstreamFailed,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::Syntax => "E-SYNTAX",
            Code::Duplicate => "E-DUPLICATE",
            Code::UnknownRef => "E-UNKNOWN-REF",
            Code::Keyword => "E-KEYWORD",
            Code::Arity => "E-ARITY",
            Code::Param => "E-PARAM",
            Code::ParamK => "E-PARAM-K",
            Code::Dangling => "E-DANGLING",
            Code::Class => "E-CLASS",
            Code::Cycle => "E-CYCLE",
            Code::AnnotClass => "E-ANNOT-CLASS",
            Code::ArityMismatch => "E-ARITY-MISMATCH",
            Code::InconsistentInput => "W-INCONSISTENT-INPUT",
            Code::Upstream => "E-UPSTREAM",
            Code::UnknownPredef => "E-UNKNOWN-PREDEF",
            Code::BadArg => "E-BAD-ARG",
            Code::Batch => "E-BATCH",
            Code::RuntimeShape => "E-RUNTIME-SHAPE",
            Code::Runtime => "E-RUNTIME",
            Code::MissingSource => "E-MISSING-SOURCE",
            Code::UpstreamFailed => "E-UPSTREAM-FAILED",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            Code::InconsistentInput => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: Code,
    pub message: String,
    pub span: Option<SourceSpan>,
    pub ports: Vec<PortId>,
    pub box_id: Option<String>,
}

impl Diagnostic {
    pub fn new(code: Code, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: code.severity(),
            code,
            message: message.into(),
            span: None,
            ports: Vec::new(),
            box_id: None,
        }
    }

    pub fn with_span(mut self, span: Option<SourceSpan>) -> Self {
        self.span = span;
        self
    }

    pub fn with_ports(mut self, ports: impl IntoIterator<Item = PortId>) -> Self {
        self.ports = ports.into_iter().collect();
        self
    }

    pub fn with_box(mut self, box_id: impl Into<String>) -> Self {
        self.box_id = Some(box_id.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `SEVERITY CODE file:line:col message [ports]`
    pub fn render(&self, file: &str) -> String {
        let (line, col) = self.span.map(|s| (s.line, s.column)).unwrap_or((0, 0));
        let ports: Vec<String> = self.ports.iter().map(|p| p.0.to_string()).collect();
        format!(
            "{} {} {}:{}:{} {} [{}]",
            self.severity.as_str(),
            self.code,
            file,
            line,
            col,
            self.message,
            ports.join(", ")
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.severity.as_str(), self.code, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
