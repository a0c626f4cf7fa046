use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("duplicate declaration `{0}`")]
    Duplicate(String),
    #[error("unbound identifier `{0}`")]
    Unbound(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub fn at(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError { line, col, kind: ParseErrorKind::Syntax(msg.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("mode violation: {0}")]
    ModeViolation(String),
    #[error("probabilistic expression of non-measurable type {0}")]
    NonMeasurable(String),
    #[error("type mismatch: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("non-conjugate pair: {0}")]
    NonConjugate(String),
    #[error("moments undefined for {0}")]
    UndefinedMoment(String),
    #[error("invalid distribution parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("all particle weights are zero")]
    DegenerateWeights,
    #[error("delayed sampling invariant broken: {0}")]
    Invariant(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("join undefined on {0}")]
    JoinUndefined(String),
    #[error("unfold input mismatch: {0}")]
    UnfoldInput(String),
    #[error("analysis error: {0}")]
    Other(String),
}

/// Any failure along the parse, check and run pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MufError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}
