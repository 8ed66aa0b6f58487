//! Source locations and diagnostics shared by the model parser and validator.

use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

/// A region of model source text. Lines and columns are 1-based and count
/// characters, not bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SourceSpan {
    pub file: PathBuf,
    pub line: u32,
    pub column: u32,
    pub length: u32,
}

impl SourceSpan {
    pub fn new(file: impl Into<PathBuf>, line: u32, column: u32, length: u32) -> Self {
        Self {
            file: file.into(),
            line: line.max(1),
            column: column.max(1),
            length: length.max(1),
        }
    }

    /// Returns the slice of `source` this span covers, if it lies inside it.
    pub fn excerpt<'a>(&self, source: &'a str) -> Option<&'a str> {
        let line = source.split('\n').nth(self.line as usize - 1)?;
        let start = line
            .char_indices()
            .nth(self.column as usize - 1)
            .map(|(i, _)| i)
            .unwrap_or(line.len());
        let end = line[start..]
            .char_indices()
            .nth(self.length as usize)
            .map(|(i, _)| start + i)
            .unwrap_or(line.len());
        Some(&line[start..end])
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file.display(), self.line, self.column)
    }
}

/// Stable diagnostic codes. The string form is part of the tool's output
/// contract and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Code {
    UnknownState,
    UnknownVar,
    UnknownFunction,
    DomainMismatch,
    DuplicateName,
    BadPlaceholder,
    NoInitialState,
    EmptyEvent,
    SyntaxError,
    UnterminatedBlock,
    DuplicateSection,
    NoFunctions,
    LargeValuationSpace,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::UnknownState => "UNKNOWN_STATE",
            Code::UnknownVar => "UNKNOWN_VAR",
            Code::UnknownFunction => "UNKNOWN_FUNCTION",
            Code::DomainMismatch => "DOMAIN_MISMATCH",
            Code::DuplicateName => "DUPLICATE_NAME",
            Code::BadPlaceholder => "BAD_PLACEHOLDER",
            Code::NoInitialState => "NO_INITIAL_STATE",
            Code::EmptyEvent => "EMPTY_EVENT",
            Code::SyntaxError => "SYNTAX_ERROR",
            Code::UnterminatedBlock => "UNTERMINATED_BLOCK",
            Code::DuplicateSection => "DUPLICATE_SECTION",
            Code::NoFunctions => "NO_FUNCTIONS",
            Code::LargeValuationSpace => "LARGE_VALUATION_SPACE",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            Code::NoFunctions | Code::LargeValuationSpace => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: Code,
    pub severity: Severity,
    /// Human-readable location such as `transition t3` or `app camera`.
    pub location: String,
    pub message: String,
    pub span: Option<SourceSpan>,
    /// For syntax errors, the set of tokens the parser would have accepted.
    pub expected: Vec<String>,
}

impl Diagnostic {
    pub fn new(code: Code, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: code.severity(),
            location: location.into(),
            message: message.into(),
            span: None,
            expected: Vec::new(),
        }
    }

    pub fn at(mut self, span: Option<&SourceSpan>) -> Self {
        self.span = span.cloned();
        self
    }

    pub fn expecting(mut self, expected: Vec<String>) -> Self {
        self.expected = expected;
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(span) = &self.span {
            write!(f, "{span}: ")?;
        }
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{level}[{}]", self.code)?;
        if !self.location.is_empty() {
            write!(f, " {}", self.location)?;
        }
        write!(f, ": {}", self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

/// A non-empty batch of diagnostics returned by a failed parse or validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn codes(&self) -> Vec<Code> {
        self.0.iter().map(|d| d.code).collect()
    }

    pub fn contains(&self, code: Code) -> bool {
        self.0.iter().any(|d| d.code == code)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Diagnostic> {
        self.0.iter()
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

impl IntoIterator for Diagnostics {
    type Item = Diagnostic;
    type IntoIter = std::vec::IntoIter<Diagnostic>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}
