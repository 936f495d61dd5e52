use serde::{Deserialize, Serialize};

use super::design::{build_design_matrix, Coding, DataTable};
use super::fdist::f_pvalue;
use super::qr::GroupedQr;
use super::{LinModError, ModelSpec, ModelWarning, TermKind};

/// One line of an ANOVA table. `ms`, `f` and `p` are absent when undefined
/// (zero df, or no error df).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub source: String,
    pub df: usize,
    pub ss: f64,
    pub ms: Option<f64>,
    pub f: Option<f64>,
    pub p: Option<f64>,
    #[serde(default)]
    pub nominal_df: usize,
    #[serde(default)]
    pub aliased: bool,
}

impl AnovaRow {
    fn plain(source: &str, df: usize, ss: f64) -> Self {
        Self {
            source: source.into(),
            df,
            ss,
            ms: (df > 0).then(|| ss / df as f64),
            f: None,
            p: None,
            nominal_df: df,
            aliased: false,
        }
    }

    fn test_against(&mut self, error_ms: Option<f64>, error_df: usize) -> Result<(), LinModError> {
        if let (Some(ms), Some(mse)) = (self.ms, error_ms) {
            if mse > 0.0 {
                let f = ms / mse;
                self.f = Some(f);
                self.p = Some(f_pvalue(f, self.df as f64, error_df as f64)?);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub response: String,
    pub n_obs: usize,
    pub model: AnovaRow,
    pub error: AnovaRow,
    pub total: AnovaRow,
    /// Sequential rows in model order.
    pub terms: Vec<AnovaRow>,
    #[serde(default)]
    pub warnings: Vec<ModelWarning>,
}

impl AnovaTable {
    pub fn term(&self, name: &str) -> Option<&AnovaRow> {
        self.terms.iter().find(|r| r.source == name)
    }
}

/// Sequential (Type I) ANOVA: each term's SS is the drop in residual SS when
/// it is added after all preceding terms. Every F uses the full model's
/// error mean square.
pub fn type1_anova(spec: &ModelSpec, data: &DataTable) -> Result<AnovaTable, LinModError> {
    type1_anova_with_coding(spec, data, Coding::Reference)
}

/// ANCOVA is the same sequential decomposition; the model must carry at least
/// one covariate term.
pub fn type1_ancova(spec: &ModelSpec, data: &DataTable) -> Result<AnovaTable, LinModError> {
    if !spec.terms.iter().any(|t| t.kind == TermKind::Covariate) {
        return Err(LinModError::InvalidModel(
            "ANCOVA needs at least one covariate term".into(),
        ));
    }
    type1_anova(spec, data)
}

pub fn type1_anova_with_coding(
    spec: &ModelSpec,
    data: &DataTable,
    coding: Coding,
) -> Result<AnovaTable, LinModError> {
    let y = match data.numeric(&spec.response) {
        Err(LinModError::MissingColumn(c)) => return Err(LinModError::MissingResponse(c)),
        other => other?,
    };
    let design = build_design_matrix(spec, data, coding)?;
    let n = y.len();
    let qr = GroupedQr::decompose(&design.matrix, &design.group_ranges())?;
    let qty = qr.qt_apply(&y);
    let rank = qr.rank();

    // Components at the level of rounding noise are reported as exact zeros.
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let floor = 16.0 * (n * design.matrix.cols()) as f64 * f64::EPSILON.powi(2) * yy;
    let snap = |v: f64| if v <= floor { 0.0 } else { v };

    let mean = y.iter().sum::<f64>() / n as f64;
    let total_ss = snap(y.iter().map(|v| (v - mean).powi(2)).sum());
    let error_ss = snap(qty[rank..].iter().map(|v| v * v).sum());

    let mut warnings = design.warnings.clone();
    let mut terms = Vec::with_capacity(spec.terms.len());
    let mut pos = qr.group_rank[0];
    for (group, &df) in design.groups.iter().zip(&qr.group_rank).skip(1) {
        let ss = snap(qty[pos..pos + df].iter().map(|v| v * v).sum());
        pos += df;
        let mut row = AnovaRow::plain(&group.term, df, ss);
        row.nominal_df = group.nominal_df;
        if df < group.nominal_df {
            row.aliased = true;
            warnings.push(ModelWarning::Aliased {
                term: group.term.clone(),
                nominal_df: group.nominal_df,
                df,
            });
        }
        terms.push(row);
    }

    let model_df = rank - qr.group_rank[0];
    let error_df = n - rank;
    let model_ss = terms.iter().map(|r| r.ss).sum();
    let mut model = AnovaRow::plain("Model", model_df, model_ss);
    let error = AnovaRow::plain("Error", error_df, error_ss);
    let total = AnovaRow::plain("Corrected Total", n - 1, total_ss);

    if error_df == 0 {
        warnings.push(ModelWarning::NoErrorDf);
    }
    model.test_against(error.ms, error_df)?;
    for row in &mut terms {
        row.test_against(error.ms, error_df)?;
    }

    Ok(AnovaTable {
        response: spec.response.clone(),
        n_obs: n,
        model,
        error,
        total,
        terms,
        warnings,
    })
}
