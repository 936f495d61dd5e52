use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::qr::Matrix;
use super::{LinModError, ModelSpec, ModelWarning, Term, TermKind};

/// A data column. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named, equal-length columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataTable {
    n_rows: usize,
    names: Vec<String>,
    columns: Vec<Column>,
}

impl DataTable {
    pub fn new(n_rows: usize) -> Self {
        Self {
            n_rows,
            ..Self::default()
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Adds or replaces a column.
    pub fn insert(&mut self, name: impl Into<String>, column: Column) -> Result<(), LinModError> {
        let name = name.into();
        if column.len() != self.n_rows {
            return Err(LinModError::RaggedColumn {
                column: name,
                len: column.len(),
                expected: self.n_rows,
            });
        }
        match self.names.iter().position(|n| *n == name) {
            Some(i) => self.columns[i] = column,
            None => {
                self.names.push(name);
                self.columns.push(column);
            }
        }
        Ok(())
    }

    pub fn with_numeric(mut self, name: &str, values: &[f64]) -> Result<Self, LinModError> {
        self.insert(
            name,
            Column::Numeric(values.iter().map(|&v| Some(v)).collect()),
        )?;
        Ok(self)
    }

    pub fn with_text<S: AsRef<str>>(
        mut self,
        name: &str,
        values: &[S],
    ) -> Result<Self, LinModError> {
        self.insert(
            name,
            Column::Text(
                values
                    .iter()
                    .map(|v| Some(v.as_ref().to_string()))
                    .collect(),
            ),
        )?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
    }

    /// Numeric column with every value present.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>, LinModError> {
        match self.get(name) {
            None => Err(LinModError::MissingColumn(name.into())),
            Some(Column::Text(_)) => Err(LinModError::NotNumeric(name.into())),
            Some(Column::Numeric(v)) => v
                .iter()
                .enumerate()
                .map(|(i, x)| match x {
                    Some(x) if x.is_finite() => Ok(*x),
                    _ => Err(LinModError::MissingValue {
                        row: i + 1,
                        column: name.into(),
                    }),
                })
                .collect(),
        }
    }

    /// Per-row level codes (0-based, levels in ascending order) and level count.
    fn level_codes(&self, name: &str) -> Result<(Vec<usize>, usize), LinModError> {
        let missing = |i: usize| LinModError::MissingValue {
            row: i + 1,
            column: name.into(),
        };
        match self.get(name) {
            None => Err(LinModError::MissingColumn(name.into())),
            Some(Column::Numeric(v)) => {
                let vals: Vec<f64> = v
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x.filter(|x| x.is_finite()).ok_or_else(|| missing(i)))
                    .collect::<Result<_, _>>()?;
                let mut levels = vals.clone();
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                let codes = vals
                    .iter()
                    .map(|x| levels.binary_search_by(|l| l.total_cmp(x)).unwrap())
                    .collect();
                Ok((codes, levels.len()))
            }
            Some(Column::Text(v)) => {
                let vals: Vec<&str> = v
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x.as_deref().ok_or_else(|| missing(i)))
                    .collect::<Result<_, _>>()?;
                let mut levels = vals.clone();
                levels.sort_by(|a, b| natural_cmp(a, b));
                levels.dedup();
                let codes = vals
                    .iter()
                    .map(|x| levels.iter().position(|l| l == x).unwrap())
                    .collect();
                Ok((codes, levels.len()))
            }
        }
    }
}

/// Numeric-aware ordering so "10" sorts after "9".
fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

/// How a categorical factor with k levels becomes k-1 columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coding {
    /// Indicators for every level except the first.
    #[default]
    Reference,
    /// Deviation contrasts: +1 for the level, -1 for the last level.
    Sum,
}

impl Coding {
    fn encode(self, codes: &[usize], k: usize) -> Vec<Vec<f64>> {
        match self {
            Coding::Reference => (1..k)
                .map(|l| codes.iter().map(|&c| f64::from(c == l)).collect())
                .collect(),
            Coding::Sum => (0..k - 1)
                .map(|l| {
                    codes
                        .iter()
                        .map(|&c| {
                            if c == l {
                                1.0
                            } else if c == k - 1 {
                                -1.0
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Columns belonging to one model term (or the intercept).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnGroup {
    pub term: String,
    pub kind: Option<TermKind>,
    pub columns: Range<usize>,
    pub nominal_df: usize,
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub matrix: Matrix,
    /// Intercept group first, then one group per term in model order.
    pub groups: Vec<ColumnGroup>,
    pub warnings: Vec<ModelWarning>,
}

impl DesignMatrix {
    pub fn group_ranges(&self) -> Vec<Range<usize>> {
        self.groups.iter().map(|g| g.columns.clone()).collect()
    }
}

/// Realizes the model's terms as design-matrix columns: intercept first,
/// then each term's column group in model order.
pub fn build_design_matrix(
    spec: &ModelSpec,
    data: &DataTable,
    coding: Coding,
) -> Result<DesignMatrix, LinModError> {
    spec.validate()?;
    let n = data.n_rows();
    if n == 0 {
        return Err(LinModError::NoRows);
    }
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut groups = vec![ColumnGroup {
        term: "Intercept".into(),
        kind: None,
        columns: 0..1,
        nominal_df: 1,
    }];
    let mut warnings = Vec::new();

    let mut categorical = |term: &Term, column: &str| -> Result<Vec<Vec<f64>>, LinModError> {
        let (codes, k) = data.level_codes(column)?;
        if k < 2 {
            return Err(LinModError::TooFewLevels {
                column: column.into(),
                observed: k,
            });
        }
        if term.kind != TermKind::Interaction {
            if let Some(declared) = term.declared_levels {
                if k > declared {
                    return Err(LinModError::InvalidTerm {
                        term: term.name.clone(),
                        reason: format!("{k} levels observed but {declared} declared"),
                    });
                }
                if k < declared {
                    warnings.push(ModelWarning::MissingLevels {
                        term: term.name.clone(),
                        declared,
                        observed: k,
                    });
                }
            }
        }
        Ok(coding.encode(&codes, k))
    };

    for term in &spec.terms {
        let block: Vec<Vec<f64>> = match term.kind {
            TermKind::Covariate => vec![data.numeric(&term.sources[0])?],
            TermKind::Block | TermKind::Factor => categorical(term, &term.sources[0])?,
            TermKind::Interaction => {
                let mut acc: Vec<Vec<f64>> = vec![vec![1.0; n]];
                for src in &term.sources {
                    let coded = categorical(term, src)?;
                    acc = acc
                        .iter()
                        .flat_map(|a| {
                            coded
                                .iter()
                                .map(move |c| a.iter().zip(c).map(|(x, y)| x * y).collect())
                        })
                        .collect();
                }
                acc
            }
        };
        let start = columns.len();
        let nominal_df = block.len();
        columns.extend(block);
        groups.push(ColumnGroup {
            term: term.name.clone(),
            kind: Some(term.kind),
            columns: start..columns.len(),
            nominal_df,
        });
    }

    Ok(DesignMatrix {
        matrix: Matrix::from_columns(n, &columns),
        groups,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_factor_three_levels() {
        let data = DataTable::new(6)
            .with_text("g", &["a", "b", "c", "a", "b", "c"])
            .unwrap();
        let spec = ModelSpec::new("y", vec![Term::factor("g", "g")]);
        let d = build_design_matrix(&spec, &data, Coding::Reference).unwrap();
        assert_eq!(d.matrix.cols(), 3);
        assert_eq!(d.groups[1].columns, 1..3);
        assert_eq!(d.matrix.col(1), &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(d.matrix.col(2), &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn two_by_two_interaction_is_cellwise_product() {
        let data = DataTable::new(4)
            .with_numeric("a", &[0.0, 0.0, 1.0, 1.0])
            .unwrap()
            .with_numeric("b", &[5.0, 6.0, 5.0, 6.0])
            .unwrap();
        let spec = ModelSpec::new(
            "y",
            vec![
                Term::factor("A", "a"),
                Term::factor("B", "b"),
                Term::interaction("A*B", &["a", "b"]),
            ],
        );
        let d = build_design_matrix(&spec, &data, Coding::Reference).unwrap();
        assert_eq!(d.matrix.cols(), 4);
        // Hand-built: A indicator (a == 1), B indicator (b == 6), product.
        assert_eq!(d.matrix.col(1), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(d.matrix.col(2), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(d.matrix.col(3), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_value_names_row_and_column() {
        let mut data = DataTable::new(3);
        data.insert(
            "g",
            Column::Text(vec![Some("a".into()), None, Some("b".into())]),
        )
        .unwrap();
        let spec = ModelSpec::new("y", vec![Term::factor("G", "g")]);
        let err = build_design_matrix(&spec, &data, Coding::Reference).unwrap_err();
        assert_eq!(
            err,
            LinModError::MissingValue {
                row: 2,
                column: "g".into()
            }
        );
    }

    #[test]
    fn single_level_factor_rejected() {
        let data = DataTable::new(2).with_text("g", &["a", "a"]).unwrap();
        let spec = ModelSpec::new("y", vec![Term::factor("G", "g")]);
        assert!(matches!(
            build_design_matrix(&spec, &data, Coding::Reference),
            Err(LinModError::TooFewLevels { .. })
        ));
    }

    #[test]
    fn missing_declared_levels_warn() {
        let data = DataTable::new(4)
            .with_text("g", &["a", "b", "a", "b"])
            .unwrap();
        let spec = ModelSpec::new("y", vec![Term::factor("G", "g").with_declared_levels(3)]);
        let d = build_design_matrix(&spec, &data, Coding::Reference).unwrap();
        assert_eq!(d.groups[1].nominal_df, 1);
        assert_eq!(
            d.warnings,
            vec![ModelWarning::MissingLevels {
                term: "G".into(),
                declared: 3,
                observed: 2
            }]
        );
    }

    #[test]
    fn covariate_must_be_numeric() {
        let data = DataTable::new(2).with_text("c", &["x", "y"]).unwrap();
        let spec = ModelSpec::new("y", vec![Term::covariate("C", "c")]);
        assert_eq!(
            build_design_matrix(&spec, &data, Coding::Reference).unwrap_err(),
            LinModError::NotNumeric("c".into())
        );
    }

    #[test]
    fn interaction_needs_distinct_factors() {
        let data = DataTable::new(2).with_text("g", &["a", "b"]).unwrap();
        let spec = ModelSpec::new("y", vec![Term::interaction("G*G", &["g", "g"])]);
        assert!(matches!(
            build_design_matrix(&spec, &data, Coding::Reference),
            Err(LinModError::InvalidTerm { .. })
        ));
    }

    #[test]
    fn text_levels_sort_numerically() {
        assert_eq!(natural_cmp("9", "10"), Ordering::Less);
        assert_eq!(natural_cmp("b", "a"), Ordering::Greater);
    }
}
