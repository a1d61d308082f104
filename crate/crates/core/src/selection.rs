//! Information criteria, classification statistics, and the sequential and
//! simultaneous searches over the numbers of classes.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_two_step, FitOptions, FitResult};
use crate::matrix::Matrix;
use crate::model::ModelSpec;
use crate::numerics::{mix_seed, shannon_entropy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub loglik: f64,
    pub npar: usize,
    pub n_units: usize,
    pub n_groups: usize,
    pub aic: f64,
    pub bic_low: f64,
    pub bic_high: f64,
    pub icl_bic_low: f64,
    pub icl_bic_high: f64,
}

/// Total Shannon entropy of a set of posterior rows.
fn total_entropy(post: &Matrix) -> f64 {
    post.iter_rows().map(shannon_entropy).sum()
}

pub fn information_criteria(
    loglik: f64,
    npar: usize,
    n_units: usize,
    n_groups: usize,
    px: &Matrix,
    pw: &Matrix,
) -> InformationCriteria {
    let k = npar as f64;
    let dev = -2.0 * loglik;
    let bic_low = dev + k * (n_units as f64).ln();
    let bic_high = dev + k * (n_groups as f64).ln();
    InformationCriteria {
        loglik,
        npar,
        n_units,
        n_groups,
        aic: dev + 2.0 * k,
        bic_low,
        bic_high,
        icl_bic_low: bic_low + 2.0 * total_entropy(px),
        icl_bic_high: bic_high + 2.0 * total_entropy(pw),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationStats {
    /// Expected proportion of modal misclassifications (low level).
    pub class_err: f64,
    pub entropy_r2_low: f64,
    pub entropy_r2_high: f64,
}

/// Expected modal misclassification rate of posterior rows.
pub fn classification_error(post: &Matrix) -> f64 {
    if post.rows == 0 {
        return 0.0;
    }
    let s: f64 = post
        .iter_rows()
        .map(|r| 1.0 - r.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    s / post.rows as f64
}

/// `1 − Σ H(posterior) / (n · H(marginal))`, where the marginal is the
/// column mean of the rows. Defined as 1 for a degenerate marginal.
pub fn entropy_r2(post: &Matrix) -> f64 {
    let n = post.rows as f64;
    if post.rows == 0 {
        return 1.0;
    }
    let marginal: Vec<f64> = (0..post.cols).map(|c| post.column(c).iter().sum::<f64>() / n).collect();
    let h0 = shannon_entropy(&marginal);
    if h0 <= 1e-300 {
        return 1.0;
    }
    (1.0 - total_entropy(post) / (n * h0)).clamp(0.0, 1.0)
}

pub fn classification_stats(px: &Matrix, pw: &Matrix) -> ClassificationStats {
    ClassificationStats {
        class_err: classification_error(px),
        entropy_r2_low: entropy_r2(px),
        entropy_r2_high: entropy_r2(pw),
    }
}

/// One fitted cell of a selection grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub n_low: usize,
    pub n_high: usize,
    /// Sequential step (1, 2 or 3) in which the cell was first fitted;
    /// 0 for simultaneous selection.
    pub step: u8,
    pub ic: Option<InformationCriteria>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub rows: Vec<SelectionRow>,
    pub best: FitResult,
}

impl Selection {
    pub fn winner(&self) -> (usize, usize) {
        (self.best.spec.n_low, self.best.spec.n_high)
    }
}

/// Writes the selection table as CSV. Failed cells have empty criteria.
pub fn write_selection_csv<W: Write>(rows: &[SelectionRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "T", "M", "ll", "npar", "bic_low", "bic_high", "aic", "icl_bic_low", "icl_bic_high", "converged",
    ])
    .map_err(io)?;
    for r in rows {
        let mut rec = vec![r.n_low.to_string(), r.n_high.to_string()];
        match &r.ic {
            Some(ic) => {
                rec.push(ic.loglik.to_string());
                rec.push(ic.npar.to_string());
                for v in [ic.bic_low, ic.bic_high, ic.aic, ic.icl_bic_low, ic.icl_bic_high] {
                    rec.push(v.to_string());
                }
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 7)),
        }
        rec.push(r.converged.to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

struct Cell {
    row: SelectionRow,
    fit: Option<FitResult>,
}

fn fit_cell(data: &Dataset, t: usize, m: usize, step: u8, opts: &FitOptions) -> Cell {
    let cell_opts = FitOptions {
        seed: mix_seed(opts.seed, &[t as u64, m as u64]),
        ..opts.clone()
    };
    match fit_two_step(data, &ModelSpec::new(t, m), &cell_opts) {
        Ok(fit) => Cell {
            row: SelectionRow {
                n_low: t,
                n_high: m,
                step,
                ic: Some(fit.ic.clone()),
                converged: fit.converged(),
                error: None,
            },
            fit: Some(fit),
        },
        Err(e) => {
            log::warn!("selection cell T={t}, M={m} failed: {e}");
            Cell {
                row: SelectionRow {
                    n_low: t,
                    n_high: m,
                    step,
                    ic: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
                fit: None,
            }
        }
    }
}

fn check_ranges(t_range: &[usize], m_range: &[usize]) -> Result<()> {
    if t_range.is_empty() || m_range.is_empty() {
        return Err(Error::InvalidSpec("class ranges must be nonempty".into()));
    }
    if t_range.contains(&0) || m_range.contains(&0) {
        return Err(Error::InvalidSpec("class counts must be at least 1".into()));
    }
    Ok(())
}

/// Index of the smallest criterion among successful cells; the first one
/// wins ties.
fn argmin_by(cells: &[&Cell], key: impl Fn(&InformationCriteria) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, c) in cells.iter().enumerate() {
        if let Some(ic) = &c.row.ic {
            let v = key(ic);
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((idx, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Three-step search: T by low-level BIC among single-level models, M by
/// high-level BIC at that T, then T again by low-level BIC at that M.
/// Every cell is a covariate-free two-step fit.
pub fn select_sequential(
    data: &Dataset,
    t_range: &[usize],
    m_range: &[usize],
    opts: &FitOptions,
) -> Result<Selection> {
    check_ranges(t_range, m_range)?;
    let data = data.without_covariates();
    let mut cells: Vec<Cell> = Vec::new();
    let lookup = |cells: &mut Vec<Cell>, grid: &[(usize, usize)], step: u8| -> Vec<usize> {
        let todo: Vec<(usize, usize)> = grid
            .iter()
            .filter(|(t, m)| !cells.iter().any(|c| c.row.n_low == *t && c.row.n_high == *m))
            .cloned()
            .collect();
        let fitted: Vec<Cell> = todo.par_iter().map(|&(t, m)| fit_cell(&data, t, m, step, opts)).collect();
        cells.extend(fitted);
        grid.iter()
            .map(|(t, m)| {
                cells
                    .iter()
                    .position(|c| c.row.n_low == *t && c.row.n_high == *m)
                    .unwrap()
            })
            .collect()
    };

    let step1: Vec<(usize, usize)> = t_range.iter().map(|&t| (t, 1)).collect();
    let idx = lookup(&mut cells, &step1, 1);
    let refs: Vec<&Cell> = idx.iter().map(|&i| &cells[i]).collect();
    let t_star = step1[argmin_by(&refs, |ic| ic.bic_low).ok_or(Error::AllCellsFailed)?].0;

    let step2: Vec<(usize, usize)> = m_range.iter().map(|&m| (t_star, m)).collect();
    let idx = lookup(&mut cells, &step2, 2);
    let refs: Vec<&Cell> = idx.iter().map(|&i| &cells[i]).collect();
    let m_star = step2[argmin_by(&refs, |ic| ic.bic_high).ok_or(Error::AllCellsFailed)?].1;

    let step3: Vec<(usize, usize)> = t_range.iter().map(|&t| (t, m_star)).collect();
    let idx = lookup(&mut cells, &step3, 3);
    let refs: Vec<&Cell> = idx.iter().map(|&i| &cells[i]).collect();
    let pick = idx[argmin_by(&refs, |ic| ic.bic_low).ok_or(Error::AllCellsFailed)?];

    let best = cells[pick].fit.clone().expect("selected cell has a fit");
    Ok(Selection {
        rows: cells.into_iter().map(|c| c.row).collect(),
        best,
    })
}

/// Fits every (T, M) cell on a pool of `workers` threads and keeps the one
/// with the smallest low-level BIC. Cells are seeded from `(seed, T, M)`,
/// so the outcome does not depend on `workers`.
pub fn select_simultaneous(
    data: &Dataset,
    t_range: &[usize],
    m_range: &[usize],
    opts: &FitOptions,
    workers: usize,
) -> Result<Selection> {
    check_ranges(t_range, m_range)?;
    let data = data.without_covariates();
    let grid: Vec<(usize, usize)> = t_range
        .iter()
        .flat_map(|&t| m_range.iter().map(move |&m| (t, m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let cells: Vec<Cell> = pool.install(|| grid.par_iter().map(|&(t, m)| fit_cell(&data, t, m, 0, opts)).collect());
    let refs: Vec<&Cell> = cells.iter().collect();
    // grid order is T-major, so the first minimum has the smallest T, then M
    let pick = argmin_by(&refs, |ic| ic.bic_low).ok_or(Error::AllCellsFailed)?;
    let best = cells[pick].fit.clone().expect("selected cell has a fit");
    Ok(Selection {
        rows: cells.into_iter().map(|c| c.row).collect(),
        best,
    })
}
