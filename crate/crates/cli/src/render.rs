//! Fixed-layout text tables. SS and mean squares carry 1 decimal, F values 2
//! and p-values 4; p-values below 0.0001 print as `<.0001`.

use std::fmt::Write as _;

use loadopt::dataio::{Covariate, DescriptiveRow, ScreenRow, StabilitySeries};
use loadopt::linmod::{AnovaRow, AnovaTable};
use loadopt::shotsim::PowerReport;
use loadopt::surface::RankEntry;

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|v| format!("{v:.decimals$}")).unwrap_or_default()
}

pub fn pvalue(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 1e-4 => "<.0001".into(),
        Some(p) => format!("{p:.4}"),
        None => String::new(),
    }
}

fn anova_line(out: &mut String, w: usize, r: &AnovaRow, f_and_p: bool, ms: bool) {
    let (f, p) = if f_and_p {
        (opt(r.f, 2), pvalue(r.p))
    } else {
        (String::new(), String::new())
    };
    let line = format!(
        "{:<w$}  {:>4}  {:>14.1}  {:>11}  {:>7}  {:>6}",
        r.source,
        r.df,
        r.ss,
        opt(r.ms.filter(|_| ms), 1),
        f,
        p
    );
    out.push_str(line.trim_end());
    out.push('\n');
}

pub fn anova(t: &AnovaTable, unit: Option<&str>) -> String {
    let w = t
        .terms
        .iter()
        .map(|r| r.source.len())
        .chain(["Corrected Total".len(), "Source".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    match unit {
        Some(u) => writeln!(out, "Dependent Variable: {} ({u})", t.response).unwrap(),
        None => writeln!(out, "Dependent Variable: {}", t.response).unwrap(),
    }
    writeln!(out, "Observations: {}", t.n_obs).unwrap();
    out.push('\n');
    writeln!(
        out,
        "{:<w$}  {:>4}  {:>14}  {:>11}  {:>7}  {:>6}",
        "Source", "DF", "Sum of Squares", "Mean Square", "F Value", "Pr > F"
    )
    .unwrap();
    anova_line(&mut out, w, &t.model, true, true);
    anova_line(&mut out, w, &t.error, false, true);
    anova_line(&mut out, w, &t.total, false, false);
    out.push('\n');
    writeln!(
        out,
        "{:<w$}  {:>4}  {:>14}  {:>11}  {:>7}  {:>6}",
        "Source", "DF", "Type I SS", "Mean Square", "F Value", "Pr > F"
    )
    .unwrap();
    for r in &t.terms {
        anova_line(&mut out, w, r, true, true);
    }
    if !t.warnings.is_empty() {
        out.push('\n');
        for warning in &t.warnings {
            writeln!(out, "Note: {warning}").unwrap();
        }
    }
    out
}

pub fn anova_csv(t: &AnovaTable) -> String {
    let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from("source,df,ss,ms,f,p\n");
    for r in [&t.model, &t.error, &t.total].into_iter().chain(&t.terms) {
        let source = if r.source.contains(',') {
            format!("\"{}\"", r.source)
        } else {
            r.source.clone()
        };
        writeln!(
            out,
            "{source},{},{},{},{},{}",
            r.df,
            r.ss,
            f(r.ms),
            f(r.f),
            f(r.p)
        )
        .unwrap();
    }
    out
}

fn label(column: &str) -> &str {
    match column {
        "seating_depth" => "Seating Depth",
        "powder_charge" => "Powder Charge",
        _ => Covariate::from_column(column).map_or(column, |c| c.label()),
    }
}

pub fn descriptive(rows: &[DescriptiveRow]) -> String {
    let w = rows
        .iter()
        .map(|r| label(&r.column).len())
        .max()
        .unwrap_or(0)
        .max(8);
    let mut out = format!(
        "{:<w$}  {:>5}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}\n",
        "Variable", "N", "Mean", "Std Dev", "Minimum", "Maximum", "Median"
    );
    for r in rows {
        writeln!(
            out,
            "{:<w$}  {:>5}  {:>10.4}  {:>10}  {:>10.4}  {:>10.4}  {:>10.4}",
            label(&r.column),
            r.n,
            r.mean,
            opt(r.std_dev, 4),
            r.min,
            r.max,
            r.median
        )
        .unwrap();
    }
    out
}

pub fn screen(rows: &[ScreenRow], alpha: f64) -> String {
    let w = rows
        .iter()
        .map(|r| r.covariate.label().len())
        .max()
        .unwrap_or(0);
    let mut out = format!(
        "{:<w$}  {:>7}  {:>6}  {}\n",
        "Covariate", "F Value", "Pr > F", "Lot Effect"
    );
    for r in rows {
        let flag = if r.significant {
            format!("yes (p < {alpha})")
        } else {
            "no".into()
        };
        writeln!(
            out,
            "{:<w$}  {:>7}  {:>6}  {flag}",
            r.covariate.label(),
            opt(r.f, 2),
            pvalue(r.p)
        )
        .unwrap();
    }
    out
}

/// Fewest decimals (at least 1) that print every level exactly.
pub fn level_decimals(levels: &[f64]) -> usize {
    (1..=9)
        .find(|&d| {
            levels.iter().all(|&v| {
                let s = format!("{v:.d$}");
                s.parse::<f64>()
                    .is_ok_and(|r| (r - v).abs() <= 1e-9 * v.abs().max(1.0))
            })
        })
        .unwrap_or(9)
}

/// `show_counts` is false for grids read from a layout that carries no counts.
pub fn ranking(
    entries: &[RankEntry],
    sd_dec: usize,
    pc_dec: usize,
    unit: &str,
    show_counts: bool,
) -> String {
    let mr = format!("Mean Radius ({unit})");
    let mut out = format!(
        "{:>4}  {:>13}  {:>13}  {:>w$}  {:>4}\n",
        "Rank",
        "Seating Depth",
        "Powder Charge",
        mr,
        "N",
        w = mr.len()
    );
    for e in entries {
        let n = if show_counts {
            e.n.to_string()
        } else {
            String::new()
        };
        let line = format!(
            "{:>4}  {:>13.sd_dec$}  {:>13.pc_dec$}  {:>w$.2}  {:>4}",
            e.rank,
            e.seating_depth,
            e.powder_charge,
            e.mean_radius,
            n,
            w = mr.len()
        );
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn stability(s: &StabilitySeries) -> String {
    let mut out = format!("{:>5}  {:>12}\n", "Seq", "Distance");
    for p in &s.points {
        writeln!(out, "{:>5}  {:>12.4}", p.seq, p.distance).unwrap();
    }
    out.push('\n');
    match &s.halves {
        Some(h) => {
            writeln!(
                out,
                "First half:  n = {}, variance = {:.4}",
                h.first_n, h.first_var
            )
            .unwrap();
            writeln!(
                out,
                "Second half: n = {}, variance = {:.4}",
                h.second_n, h.second_var
            )
            .unwrap();
            writeln!(
                out,
                "Variance ratio F = {:.2} on ({}, {}) df, two-sided p = {}",
                h.f,
                h.second_n - 1,
                h.first_n - 1,
                pvalue(Some(h.p))
            )
            .unwrap();
        }
        None => out.push_str(
            "Variance ratio: degenerate (a half has fewer than 2 shots or zero variance)\n",
        ),
    }
    out
}

pub fn power(r: &PowerReport) -> String {
    let w = r
        .terms
        .iter()
        .map(|t| t.term.len())
        .max()
        .unwrap_or(0)
        .max(6);
    let mut out = format!(
        "{} seeds, alpha = {}\n\n{:<w$}  {:>10}  {:>6}\n",
        r.n_seeds, r.alpha, "Source", "Detections", "Rate"
    );
    for t in &r.terms {
        writeln!(out, "{:<w$}  {:>10}  {:>6.3}", t.term, t.detections, t.rate).unwrap();
    }
    if let Some(c) = r.ranked_last.first() {
        writeln!(
            out,
            "\nMost often ranked last: ({}, {}) in {} of {} seeds",
            c.seating_depth, c.powder_charge, c.count, r.n_seeds
        )
        .unwrap();
    }
    out
}
