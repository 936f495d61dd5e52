//! General linear models with categorical factors and continuous covariates,
//! fitted by least squares and decomposed into sequential (Type I) sums of
//! squares.

mod anova;
mod design;
pub mod fdist;
pub mod qr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anova::{type1_ancova, type1_anova, type1_anova_with_coding, AnovaRow, AnovaTable};
pub use design::{build_design_matrix, Coding, Column, ColumnGroup, DataTable, DesignMatrix};
pub use fdist::{f_cdf, f_pvalue, regularized_beta};
pub use qr::{fit_least_squares, GroupedQr, LeastSquaresFit, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinModError {
    #[error("design matrix has no rows")]
    NoRows,
    #[error("matrix has {rows} rows but response has {len} values")]
    DimensionMismatch { rows: usize, len: usize },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("response column `{0}` not found")]
    MissingResponse(String),
    #[error("missing value at row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error(
        "column `{column}` has {observed} observed level(s); a categorical term needs at least 2"
    )]
    TooFewLevels { column: String, observed: usize },
    #[error("column `{0}` must be numeric")]
    NotNumeric(String),
    #[error("column `{column}` has {len} rows, table has {expected}")]
    RaggedColumn {
        column: String,
        len: usize,
        expected: usize,
    },
    #[error("invalid term `{term}`: {reason}")]
    InvalidTerm { term: String, reason: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("degrees of freedom must be positive and finite (got {df1}, {df2})")]
    InvalidDegreesOfFreedom { df1: f64, df2: f64 },
    #[error("F statistic must be finite and nonnegative (got {0})")]
    InvalidStatistic(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// Nuisance grouping; coded like a categorical factor.
    Block,
    Factor,
    Interaction,
    Covariate,
}

/// One model term: a named group of design-matrix columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub kind: TermKind,
    pub name: String,
    pub sources: Vec<String>,
    /// Level count the design intends the factor to have. When fewer levels
    /// are observed the term loses DF and a warning is raised.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_levels: Option<usize>,
}

impl Term {
    pub fn block(name: impl Into<String>, column: impl Into<String>) -> Self {
        Self::single(TermKind::Block, name, column)
    }

    pub fn factor(name: impl Into<String>, column: impl Into<String>) -> Self {
        Self::single(TermKind::Factor, name, column)
    }

    pub fn covariate(name: impl Into<String>, column: impl Into<String>) -> Self {
        Self::single(TermKind::Covariate, name, column)
    }

    pub fn interaction(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            kind: TermKind::Interaction,
            name: name.into(),
            sources: columns.iter().map(|c| c.to_string()).collect(),
            declared_levels: None,
        }
    }

    pub fn with_declared_levels(mut self, levels: usize) -> Self {
        self.declared_levels = Some(levels);
        self
    }

    fn single(kind: TermKind, name: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            kind,
            name: name.into(),
            sources: vec![column.into()],
            declared_levels: None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        !matches!(self.kind, TermKind::Covariate)
    }
}

/// Response plus an ordered term list; the intercept is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub terms: Vec<Term>,
}

impl ModelSpec {
    pub fn new(response: impl Into<String>, terms: Vec<Term>) -> Self {
        Self {
            response: response.into(),
            terms,
        }
    }

    pub fn validate(&self) -> Result<(), LinModError> {
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].iter().any(|o| o.name == t.name) {
                return Err(LinModError::InvalidModel(format!(
                    "duplicate term name `{}`",
                    t.name
                )));
            }
            let bad = |reason: &str| LinModError::InvalidTerm {
                term: t.name.clone(),
                reason: reason.into(),
            };
            match t.kind {
                TermKind::Interaction => {
                    let mut s = t.sources.clone();
                    s.sort();
                    s.dedup();
                    if s.len() < 2 || s.len() != t.sources.len() {
                        return Err(bad("an interaction needs at least 2 distinct factors"));
                    }
                }
                _ if t.sources.len() != 1 => return Err(bad("expected exactly one source column")),
                _ => {}
            }
        }
        Ok(())
    }
}

/// Non-fatal conditions met while building or fitting a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelWarning {
    /// Some of the term's columns were linearly dependent on earlier terms.
    Aliased {
        term: String,
        nominal_df: usize,
        df: usize,
    },
    /// Fewer levels observed than the design declares.
    MissingLevels {
        term: String,
        declared: usize,
        observed: usize,
    },
    /// The model saturates the data; F and p are undefined.
    NoErrorDf,
}

impl std::fmt::Display for ModelWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelWarning::Aliased {
                term,
                nominal_df,
                df,
            } => write!(
                f,
                "term `{term}` aliased: {df} of {nominal_df} df estimable"
            ),
            ModelWarning::MissingLevels {
                term,
                declared,
                observed,
            } => write!(f, "term `{term}`: {observed} of {declared} levels observed"),
            ModelWarning::NoErrorDf => write!(f, "no error degrees of freedom; F and p undefined"),
        }
    }
}
