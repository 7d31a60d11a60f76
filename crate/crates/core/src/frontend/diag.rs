use std::fmt;

use serde::Serialize;

use super::ast::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Stable machine-readable diagnostic codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagCode {
    Syntax,
    UnknownSection,
    DuplicateSection,
    MissingOperation,
    OperationName,
    DuplicateIdentifier,
    UnknownIdentifier,
    ReservedWord,
    BadType,
    TypeMismatch,
    NonConstantBound,
    AssignToInput,
    AssignToLoopVar,
    AssignToConstant,
    IndexType,
    NotAnArray,
    ArrayAsValue,
    LiteralRange,
    InitRange,
    InvariantScope,
    DuplicateTarget,
}

impl DiagCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiagCode::Syntax => "syntax",
            DiagCode::UnknownSection => "unknown-section",
            DiagCode::DuplicateSection => "duplicate-section",
            DiagCode::MissingOperation => "missing-operation",
            DiagCode::OperationName => "operation-name",
            DiagCode::DuplicateIdentifier => "duplicate-identifier",
            DiagCode::UnknownIdentifier => "unknown-identifier",
            DiagCode::ReservedWord => "reserved-word",
            DiagCode::BadType => "bad-type",
            DiagCode::TypeMismatch => "type-mismatch",
            DiagCode::NonConstantBound => "non-constant-bound",
            DiagCode::AssignToInput => "assign-to-input",
            DiagCode::AssignToLoopVar => "assign-to-loop-var",
            DiagCode::AssignToConstant => "assign-to-constant",
            DiagCode::IndexType => "index-type",
            DiagCode::NotAnArray => "not-an-array",
            DiagCode::ArrayAsValue => "array-as-value",
            DiagCode::LiteralRange => "literal-range",
            DiagCode::InitRange => "init-range",
            DiagCode::InvariantScope => "invariant-scope",
            DiagCode::DuplicateTarget => "duplicate-target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub span: Span,
    pub message: String,
    pub code: DiagCode,
}

impl Diagnostic {
    pub fn error(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            span,
            message: message.into(),
            code,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}: {}[{}]: {}",
            self.span,
            sev,
            self.code.as_str(),
            self.message
        )
    }
}

impl Serialize for Span {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Span", 2)?;
        st.serialize_field("line", &self.line)?;
        st.serialize_field("column", &self.column)?;
        st.end()
    }
}

/// Renders diagnostics one per line, prefixed with a file name.
pub fn render(file: &str, diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("{file}:{d}\n"))
        .collect()
}
