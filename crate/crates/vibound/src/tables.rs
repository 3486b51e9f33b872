//! Text tables and plot-ready CSV rows for reports.

use std::fmt::Write as _;

use vibound_core::case_study::CaseStudyReport;
use vibound_core::workflow::{family_label, WorkflowReport};

use crate::io::fmt_f64;

pub const FAILED: &str = "failed";

/// Compact display: three significant digits, scientific outside [1e-3, 1e4).
pub fn display(v: f64) -> String {
    if !v.is_finite() {
        return fmt_f64(v);
    }
    let a = v.abs();
    if a == 0.0 || (1e-3..1e4).contains(&a) {
        let digits = if a == 0.0 { 2 } else { (2 - a.log10().floor() as i32).max(0) as usize };
        format!("{v:.digits$}")
    } else {
        format!("{v:.2e}")
    }
}

fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let ncol = header.len();
    let mut width = vec![0; ncol];
    for r in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |r: &[String]| {
        let mut s = String::new();
        for (i, cell) in r.iter().enumerate() {
            let pad = width[i] - cell.chars().count();
            if i == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (ncol - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

/// One row per metric, one column per configuration.
pub fn case_study_text(report: &CaseStudyReport) -> String {
    let mut header = vec![String::new()];
    header.extend(report.columns.iter().map(|c| c.spec.label.clone()));
    let rows: Vec<Vec<String>> = report
        .table()
        .into_iter()
        .map(|(name, cells)| {
            let mut r = vec![name.to_string()];
            r.extend(cells.into_iter().map(|c| c.map_or_else(|| FAILED.to_string(), display)));
            r
        })
        .collect();
    let mut out = format!("{} (ground-truth scale {})\n\n", report.study.name(), display(report.truth_scale()));
    out.push_str(&render(&header, &rows));
    for c in &report.columns {
        if let Some(e) = &c.error {
            let _ = writeln!(out, "{}: {e}", c.spec.label);
        }
    }
    out
}

pub fn case_study_csv_header(report: &CaseStudyReport) -> Vec<String> {
    let mut h = vec!["metric".to_string()];
    h.extend(report.columns.iter().map(|c| c.spec.label.clone()));
    h
}

pub fn case_study_csv_rows(report: &CaseStudyReport) -> Vec<Vec<String>> {
    report
        .table()
        .into_iter()
        .map(|(name, cells)| {
            let mut r = vec![name.to_string()];
            r.extend(cells.into_iter().map(|c| c.map_or_else(|| FAILED.to_string(), fmt_f64)));
            r
        })
        .collect()
}

/// Grid points per marginal density curve.
pub const GRID_POINTS: usize = 201;

/// `(column, coordinate, x, density)` rows: each column's approximate
/// marginals on a grid of ±5 ground-truth standard deviations.
pub fn marginal_density_rows(report: &CaseStudyReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for col in &report.columns {
        let Some(res) = &col.result else { continue };
        let Some(truth) = report.ground_truths.iter().find(|t| t.model == col.spec.model) else { continue };
        for (i, name) in truth.coordinate_names.iter().enumerate() {
            let Ok(m) = res.approximation.marginal(i) else { continue };
            let (c, s) = (truth.truth.moments.mean[i], truth.truth.moments.std[i]);
            for k in 0..GRID_POINTS {
                let x = c - 5.0 * s + 10.0 * s * k as f64 / (GRID_POINTS - 1) as f64;
                rows.push(vec![col.spec.label.clone(), name.clone(), fmt_f64(x), fmt_f64(m.ln_pdf(x).exp())]);
            }
        }
    }
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), display)
}

pub fn workflow_text(r: &WorkflowReport) -> String {
    let mut rows = vec![
        vec!["target".into(), r.target.clone()],
        vec!["family".into(), family_label(&r.config.family)],
        vec!["refinement round".into(), r.refinement_round.to_string()],
        vec!["k-hat".into(), opt(r.k_hat())],
        vec!["D2 bound".into(), opt(r.delta_bar_2())],
        vec!["W2 bound".into(), opt(r.w_bar_2())],
    ];
    if let Some(b) = &r.bounds {
        rows.push(vec![format!("W2 bound (+{} se)", display(b.z)), display(b.w_bar_2_conservative.value)]);
        rows.push(vec!["mean error bound".into(), display(b.summary.mean_bound)]);
        rows.push(vec!["std error bound".into(), display(b.summary.std_bound)]);
    }
    if let Some(w) = r.w_small {
        let note = if r.w_small_is_default { " (heuristic default)" } else { "" };
        rows.push(vec!["w_small".into(), format!("{}{note}", display(w))]);
    }
    rows.push(vec!["decision".into(), r.decision.label().to_string()]);
    rows.push(vec!["exit code".into(), r.decision.exit_code().to_string()]);
    let mut out = render(&["workflow".into(), String::new()], &rows);
    out.push_str("\nstage log\n");
    for s in &r.stage_log {
        let _ = writeln!(out, "  {}. {} [{:?}] {}", s.step, s.name, s.status, s.detail);
    }
    for h in &r.hints {
        let _ = writeln!(out, "hint: {h}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_examples() {
        assert_eq!(display(1.6), "1.60");
        assert_eq!(display(0.006), "0.00600");
        assert_eq!(display(123.4), "123");
        assert_eq!(display(2.5e-5), "2.50e-5");
        assert_eq!(display(f64::INFINITY), "inf");
        assert_eq!(display(0.0), "0.00");
    }

    #[test]
    fn render_aligns_columns() {
        let t = render(&["a".into(), "bb".into()], &[vec!["row".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n-------\nrow   1\n");
    }
}
