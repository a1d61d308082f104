//! Plain-text summaries. Everything here reads only the stored document,
//! so a fit and its JSON print identically.

use std::fmt::Write;

use mlca_core::estimators::significance_stars;
use mlca_core::selection::SelectionRow;

use crate::document::{Coefficient, FitDocument};

const RULE: &str = "---------------------------";
const LEGEND: &str = " *** p < 0.01, ** p < 0.05, * p < 0.1";

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "NA".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), num)
}

/// Row labels left-aligned, every other column right-aligned to its widest
/// entry, single-space separated.
fn table(corner: &str, headers: &[String], rows: &[(String, Vec<String>)]) -> Vec<String> {
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).chain([corner.chars().count()]).max().unwrap_or(0);
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| {
            rows.iter()
                .map(|(_, cells)| cells[c].chars().count())
                .chain([headers[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |label: &str, cells: &[String]| {
        let mut s = format!("{label:<label_w$}");
        for (cell, w) in cells.iter().zip(&widths) {
            let _ = write!(s, " {cell:>w$}");
        }
        s
    };
    let mut out = Vec::with_capacity(rows.len() + 1);
    if !headers.is_empty() {
        out.push(line(corner, headers));
    }
    out.extend(rows.iter().map(|(l, cells)| line(l, cells)));
    out
}

/// A labelled column of numbers without a header row.
fn named_values(rows: &[(&str, String)]) -> Vec<String> {
    let rows: Vec<(String, Vec<String>)> = rows.iter().map(|(l, v)| (l.to_string(), vec![v.clone()])).collect();
    let widths = [rows.iter().map(|(_, c)| c[0].len()).max().unwrap_or(0)];
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
    rows.iter()
        .map(|(l, c)| format!("{l:<label_w$} {:>w$}", c[0], w = widths[0]))
        .collect()
}

fn specification(doc: &FitDocument) -> String {
    let m = &doc.model;
    if m.n_high > 1 {
        let suffix = match (m.low_covariates, m.high_covariates) {
            (true, true) => " with lower- and higher-level covariates",
            (true, false) => " with lower-level covariates",
            (false, true) => " with higher-level covariates",
            (false, false) => "",
        };
        format!("Multilevel LC model{suffix}")
    } else if m.low_covariates {
        "Single-level LC model with covariates".into()
    } else {
        "Single-level LC model".into()
    }
}

fn response_rows(doc: &FitDocument) -> Vec<(String, Vec<String>)> {
    let mut rows = Vec::new();
    for (item, probs) in doc.items.iter().zip(&doc.response_probabilities) {
        let t_count = probs.rows;
        if item.categories.len() == 2 {
            rows.push((format!("P({}|C)", item.name), (0..t_count).map(|t| num(probs[(t, 1)])).collect()));
        } else {
            for (c, cat) in item.categories.iter().enumerate() {
                rows.push((
                    format!("P({}={}|C)", item.name, cat),
                    (0..t_count).map(|t| num(probs[(t, c)])).collect(),
                ));
            }
        }
    }
    rows
}

fn class_headers(n: usize, prefix: char) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

fn coefficient_block(out: &mut Vec<String>, title: &str, column: &str, coefs: &[Coefficient]) {
    out.push(title.to_string());
    out.push(String::new());
    let headers = [column.to_string(), "S.E.".into(), "Z-score".into(), "p-value".into()];
    let rows: Vec<(String, Vec<String>)> = coefs
        .iter()
        .map(|c| {
            let p = match c.p {
                Some(p) => format!("{}{:<3}", num(p), significance_stars(p)),
                None => format!("{:<9}", "NA"),
            };
            (c.name.clone(), vec![num(c.estimate), opt(c.se), opt(c.z), p])
        })
        .collect();
    out.extend(table("", &headers, &rows));
    out.push(String::new());
    out.push(String::new());
    out.push(LEGEND.to_string());
    out.push(String::new());
}

fn logistic_sections(doc: &FitDocument, out: &mut Vec<String>) {
    let (t_count, m_count) = (doc.n_low(), doc.n_high());
    let k_low = doc.structural.gamma.cols;
    let k_high = doc.structural.alpha.cols;
    let n_gamma = (t_count - 1) * m_count * k_low;
    let (gamma, alpha) = doc.coefficients.split_at(n_gamma.min(doc.coefficients.len()));

    if doc.model.high_covariates && m_count > 1 {
        out.push(RULE.into());
        out.push(String::new());
        out.push("LOGISTIC MODEL FOR HIGHER-LEVEL CLASS MEMBERSHIP:".into());
        out.push(String::new());
        out.push(String::new());
        for m in 1..m_count {
            let block = &alpha[(m - 1) * k_high..m * k_high];
            coefficient_block(out, &format!("MODEL FOR G{} (BASE G1)", m + 1), "Alpha", block);
        }
    }
    if doc.model.low_covariates && t_count > 1 {
        out.push(RULE.into());
        out.push(String::new());
        out.push("LOGISTIC MODEL FOR LOWER-LEVEL CLASS MEMBERSHIP:".into());
        out.push(String::new());
        out.push(String::new());
        for m in 0..m_count {
            for t in 1..t_count {
                let row = m * (t_count - 1) + t - 1;
                let block = &gamma[row * k_low..(row + 1) * k_low];
                let title = if m_count > 1 {
                    format!("MODEL FOR C{} (BASE C1) GIVEN G{} ", t + 1, m + 1)
                } else {
                    format!("MODEL FOR C{} (BASE C1)", t + 1)
                };
                coefficient_block(out, &title, "Gamma", block);
            }
        }
    }
}

/// Summary printout of a fit.
pub fn render_fit(doc: &FitDocument) -> String {
    let mut out: Vec<String> = vec![String::new(), "CALL:".into(), doc.call.clone(), String::new()];
    out.push("SPECIFICATION:".into());
    out.push(String::new());
    out.push(format!(" {}", specification(doc)));
    out.push(String::new());

    out.push("ESTIMATION DETAILS:".into());
    out.push(String::new());
    if let Some(st) = doc.final_stage() {
        let headers = ["EMiter".to_string(), "LLfirst".into(), "LLlast".into()];
        let rows = [(
            String::new(),
            vec![st.iterations.to_string(), format!("{:.1}", st.ll_first), format!("{:.1}", st.ll_last)],
        )];
        out.extend(table("", &headers, &rows));
        if !doc.stages.iter().all(|s| s.converged) {
            out.push(" (EM stopped at the iteration limit before converging)".into());
        }
    }
    out.push(String::new());
    out.push(RULE.into());
    out.push(String::new());

    let (t_count, m_count) = (doc.n_low(), doc.n_high());
    let covariates = doc.model.low_covariates || doc.model.high_covariates;
    if m_count > 1 {
        out.push("GROUP PROPORTIONS (SAMPLE MEAN):".into());
        out.push(String::new());
        let labels: Vec<String> = (1..=m_count).map(|m| format!("P(G{m})")).collect();
        let rows: Vec<(&str, String)> = labels
            .iter()
            .zip(&doc.group_proportions)
            .map(|(l, v)| (l.as_str(), num(*v)))
            .collect();
        out.extend(named_values(&rows));
        out.push(String::new());
        out.push("CLASS PROPORTIONS (SAMPLE MEAN):".into());
        out.push(String::new());
        let rows: Vec<(String, Vec<String>)> = (0..t_count)
            .map(|t| {
                (
                    format!("P(C{}|G)", t + 1),
                    (0..m_count).map(|m| num(doc.class_proportions[(m, t)])).collect(),
                )
            })
            .collect();
        out.extend(table("", &class_headers(m_count, 'G'), &rows));
    } else {
        out.push(if covariates {
            "CLASS PROPORTIONS (SAMPLE MEAN):".into()
        } else {
            "CLASS PROPORTIONS:".into()
        });
        out.push(String::new());
        let labels: Vec<String> = (1..=t_count).map(|t| format!("P(C{t})")).collect();
        let rows: Vec<(&str, String)> = labels
            .iter()
            .enumerate()
            .map(|(t, l)| (l.as_str(), num(doc.class_proportions[(0, t)])))
            .collect();
        out.extend(named_values(&rows));
    }
    out.push(String::new());

    out.push("RESPONSE PROBABILITIES:".into());
    out.push(String::new());
    out.extend(table("", &class_headers(t_count, 'C'), &response_rows(doc)));
    out.push(String::new());
    out.push(RULE.into());
    out.push(String::new());

    out.push("MODEL AND CLASSIFICATION STATISTICS:".into());
    out.push(String::new());
    let ic = &doc.information;
    let cs = &doc.classification;
    let stats: Vec<(&str, String)> = if m_count > 1 {
        vec![
            ("R2entrlow", num(cs.entropy_r2_low)),
            ("R2entrhigh", num(cs.entropy_r2_high)),
            ("BIClow", num(ic.bic_low)),
            ("BIChigh", num(ic.bic_high)),
            ("ICLBIClow", num(ic.icl_bic_low)),
            ("ICLBIChigh", num(ic.icl_bic_high)),
            ("AIC", num(ic.aic)),
        ]
    } else {
        vec![
            ("ClassErr", num(cs.class_err)),
            ("EntR-sqr", num(cs.entropy_r2_low)),
            ("BIC", num(ic.bic_low)),
            ("AIC", num(ic.aic)),
        ]
    };
    out.extend(named_values(&stats));
    if doc.rank_deficient {
        out.push(String::new());
        out.push("Note: singular information matrix; standard errors use a pseudo-inverse.".into());
    }
    if covariates {
        out.push(String::new());
        out.push(String::new());
        logistic_sections(doc, &mut out);
    }

    let mut s = out.join("\n");
    s.push('\n');
    s
}

/// Selection grid followed by the chosen numbers of classes.
pub fn render_selection(rows: &[SelectionRow], sequential: bool, chosen: (usize, usize)) -> String {
    let mut headers: Vec<String> = vec!["T".into(), "M".into()];
    if sequential {
        headers.push("step".into());
    }
    headers.extend(
        ["LL", "npar", "BIClow", "BIChigh", "ICLBIClow", "ICLBIChigh", "AIC", "converged"].map(String::from),
    );
    let body: Vec<(String, Vec<String>)> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.n_low.to_string(), r.n_high.to_string()];
            if sequential {
                cells.push(r.step.to_string());
            }
            match &r.ic {
                Some(ic) => cells.extend([
                    format!("{:.1}", ic.loglik),
                    ic.npar.to_string(),
                    num(ic.bic_low),
                    num(ic.bic_high),
                    num(ic.icl_bic_low),
                    num(ic.icl_bic_high),
                    num(ic.aic),
                    if r.converged { "yes".into() } else { "no".into() },
                ]),
                None => {
                    cells.extend(std::iter::repeat_n("NA".to_string(), 7));
                    cells.push(r.error.clone().unwrap_or_else(|| "failed".into()));
                }
            }
            (String::new(), cells)
        })
        .collect();
    let mut out = vec![
        String::new(),
        format!("MODEL SELECTION ({}):", if sequential { "SEQUENTIAL" } else { "SIMULTANEOUS" }),
        String::new(),
    ];
    out.extend(table("", &headers, &body).into_iter().map(|l| l.trim_start().to_string()));
    out.push(String::new());
    out.push(format!("Selected: T = {}, M = {}", chosen.0, chosen.1));
    let mut s = out.join("\n");
    s.push('\n');
    s
}
