//! Parameter containers, likelihood evaluation and posterior class
//! membership for single-level and multilevel latent class models with
//! multinomial-logit class membership at both levels.
//!
//! Everything is computed in the natural-log domain. Class indices are
//! zero-based; class 0 (and group-class 0) is the logit reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::numerics::log_sum_exp;

/// Lower bound kept on every estimated probability.
pub const PROB_FLOOR: f64 = 1e-6;

/// Conditional response probabilities: for item `h`, `probs[h]` is a
/// T × C_h matrix whose row `t` is the category distribution in class `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementParams {
    pub n_classes: usize,
    pub probs: Vec<Matrix>,
}

impl MeasurementParams {
    /// Panics unless every row is a probability vector.
    pub fn new(probs: Vec<Matrix>) -> Self {
        let n_classes = probs.first().map_or(0, |m| m.rows);
        for m in &probs {
            assert_eq!(m.rows, n_classes, "every item needs one row per class");
            for row in m.iter_rows() {
                debug_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            }
        }
        MeasurementParams { n_classes, probs }
    }

    /// Binary items given as `P(Y_h = 1 | t)`, indexed `[h][t]`.
    pub fn binary(p_one: &[Vec<f64>]) -> Self {
        let probs = p_one
            .iter()
            .map(|per_class| {
                let rows: Vec<Vec<f64>> = per_class.iter().map(|&p| vec![1.0 - p, p]).collect();
                Matrix::from_rows(&rows)
            })
            .collect();
        MeasurementParams::new(probs)
    }

    pub fn uniform(n_classes: usize, n_categories: &[usize]) -> Self {
        MeasurementParams {
            n_classes,
            probs: n_categories
                .iter()
                .map(|&c| Matrix::filled(n_classes, c, 1.0 / c as f64))
                .collect(),
        }
    }

    pub fn n_items(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn prob(&self, item: usize, class: usize, category: usize) -> f64 {
        self.probs[item][(class, category)]
    }

    pub fn class_probs(&self, item: usize, class: usize) -> &[f64] {
        self.probs[item].row(class)
    }

    /// Σ_h (C_h − 1) · T
    pub fn n_free(&self) -> usize {
        self.probs.iter().map(|m| (m.cols - 1) * m.rows).sum()
    }

    /// Relabels classes: new class `t` is old class `perm[t]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        MeasurementParams {
            n_classes: self.n_classes,
            probs: self.probs.iter().map(|m| m.select_rows(perm)).collect(),
        }
    }

    pub(crate) fn log_table(&self) -> Vec<Matrix> {
        self.probs
            .iter()
            .map(|m| Matrix {
                rows: m.rows,
                cols: m.cols,
                data: m.data.iter().map(|p| p.ln()).collect(),
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Σ_h log P(y_h | t) for every class.
pub fn item_logdensity(y_row: &[usize], phi: &MeasurementParams) -> Vec<f64> {
    (0..phi.n_classes)
        .map(|t| {
            y_row
                .iter()
                .enumerate()
                .map(|(h, &c)| phi.prob(h, t, c).ln())
                .sum()
        })
        .collect()
}

#[inline]
fn item_logdensity_into(y_row: &[usize], log_phi: &[Matrix], out: &mut [f64]) {
    for (t, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (h, &c) in y_row.iter().enumerate() {
            s += log_phi[h][(t, c)];
        }
        *o = s;
    }
}

/// Log of the multinomial-logit probabilities with category 0 as
/// reference. `coeff` rows are the coefficient vectors of categories
/// `1..T`; only the first `coeff.cols` entries of `z` are used.
pub fn log_logistic_probs(coeff: &[f64], k: usize, z: &[f64]) -> Vec<f64> {
    let n_rows = if k == 0 { 0 } else { coeff.len() / k };
    let mut eta = Vec::with_capacity(n_rows + 1);
    eta.push(0.0);
    for r in 0..n_rows {
        eta.push(dot(&coeff[r * k..(r + 1) * k], &z[..k]));
    }
    let lse = log_sum_exp(&eta);
    eta.iter_mut().for_each(|e| *e -= lse);
    eta
}

/// Multinomial-logit class probabilities (reference category 0).
pub fn logistic_probs(coeff: &Matrix, z: &[f64]) -> Vec<f64> {
    log_logistic_probs(&coeff.data, coeff.cols, z)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Class-membership coefficients. `gamma` has `(T−1)·M` rows ordered by
/// group-class then class (`m·(T−1) + t − 1` for class `t ≥ 1`), one column
/// per low-level design column in use; `alpha` has `M − 1` rows over the
/// high-level design. Intercept-only models use a single column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub n_low: usize,
    pub n_high: usize,
    pub gamma: Matrix,
    pub alpha: Matrix,
}

impl StructuralParams {
    /// Log-odds parameterization of `ω` and the rows of `Π`.
    pub fn intercept_only(omega: &[f64], pi: &Matrix) -> Self {
        let m_count = omega.len();
        let t_count = pi.cols;
        assert_eq!(pi.rows, m_count);
        let mut gamma = Matrix::zeros((t_count - 1) * m_count, 1);
        for m in 0..m_count {
            for t in 1..t_count {
                gamma[(m * (t_count - 1) + t - 1, 0)] = (pi[(m, t)] / pi[(m, 0)]).ln();
            }
        }
        let mut alpha = Matrix::zeros(m_count - 1, 1);
        for m in 1..m_count {
            alpha[(m - 1, 0)] = (omega[m] / omega[0]).ln();
        }
        StructuralParams {
            n_low: t_count,
            n_high: m_count,
            gamma,
            alpha,
        }
    }

    /// All-zero coefficients with the given design widths.
    pub fn zeros(n_low: usize, n_high: usize, k_low: usize, k_high: usize) -> Self {
        StructuralParams {
            n_low,
            n_high,
            gamma: Matrix::zeros((n_low - 1) * n_high, k_low),
            alpha: Matrix::zeros(n_high - 1, k_high),
        }
    }

    pub fn k_low(&self) -> usize {
        self.gamma.cols
    }

    pub fn k_high(&self) -> usize {
        self.alpha.cols
    }

    /// Coefficient rows of group-class `m`, row-major `(T−1) × K`.
    pub fn gamma_block(&self, m: usize) -> &[f64] {
        let w = (self.n_low - 1) * self.gamma.cols;
        &self.gamma.data[m * w..(m + 1) * w]
    }

    pub fn gamma_block_mut(&mut self, m: usize) -> &mut [f64] {
        let w = (self.n_low - 1) * self.gamma.cols;
        &mut self.gamma.data[m * w..(m + 1) * w]
    }

    /// `P(W = m | z*)`.
    pub fn omega_at(&self, z_high: &[f64]) -> Vec<f64> {
        logistic_probs(&self.alpha, z_high)
    }

    /// `P(X = t | W = m, z)`.
    pub fn pi_at(&self, m: usize, z_low: &[f64]) -> Vec<f64> {
        log_logistic_probs(self.gamma_block(m), self.gamma.cols, z_low)
            .into_iter()
            .map(f64::exp)
            .collect()
    }

    /// `ω` for an intercept-only high level.
    pub fn omega(&self) -> Vec<f64> {
        self.omega_at(&vec![1.0; self.alpha.cols])
    }

    /// `Π` (M × T) for an intercept-only low level.
    pub fn pi(&self) -> Matrix {
        let z = vec![1.0; self.gamma.cols];
        let rows: Vec<Vec<f64>> = (0..self.n_high).map(|m| self.pi_at(m, &z)).collect();
        Matrix::from_rows(&rows)
    }

    /// `(T−1)·M·K + (M−1)·K*`
    pub fn n_free(&self) -> usize {
        self.gamma.rows * self.gamma.cols + self.alpha.rows * self.alpha.cols
    }

    /// Stacked free coefficients: `vec(Γ)` row-major followed by `vec(α)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.gamma.data.clone();
        v.extend_from_slice(&self.alpha.data);
        v
    }

    pub fn set_from_vec(&mut self, v: &[f64]) {
        let g = self.gamma.data.len();
        self.gamma.data.copy_from_slice(&v[..g]);
        self.alpha.data.copy_from_slice(&v[g..]);
    }

    /// Relabels classes (new low class `t` is old `low_perm[t]`, likewise
    /// for the high level) and re-expresses coefficients against the new
    /// reference classes.
    pub fn permuted(&self, low_perm: &[usize], high_perm: &[usize]) -> Self {
        let (t_count, m_count, k) = (self.n_low, self.n_high, self.gamma.cols);
        let full_low = |m: usize, t: usize| -> Vec<f64> {
            if t == 0 {
                vec![0.0; k]
            } else {
                self.gamma.row(m * (t_count - 1) + t - 1).to_vec()
            }
        };
        let mut gamma = Matrix::zeros(self.gamma.rows, k);
        for new_m in 0..m_count {
            let old_m = high_perm[new_m];
            let base = full_low(old_m, low_perm[0]);
            for new_t in 1..t_count {
                let row = full_low(old_m, low_perm[new_t]);
                for c in 0..k {
                    gamma[(new_m * (t_count - 1) + new_t - 1, c)] = row[c] - base[c];
                }
            }
        }
        let kh = self.alpha.cols;
        let full_high = |m: usize| -> Vec<f64> {
            if m == 0 {
                vec![0.0; kh]
            } else {
                self.alpha.row(m - 1).to_vec()
            }
        };
        let base = full_high(high_perm[0]);
        let mut alpha = Matrix::zeros(self.alpha.rows, kh);
        for new_m in 1..m_count {
            let row = full_high(high_perm[new_m]);
            for c in 0..kh {
                alpha[(new_m - 1, c)] = row[c] - base[c];
            }
        }
        StructuralParams {
            n_low: t_count,
            n_high: m_count,
            gamma,
            alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    OneStep,
    #[default]
    TwoStep,
    TwoStage,
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_step" => Ok(Estimator::OneStep),
            "two_step" => Ok(Estimator::TwoStep),
            "two_stage" => Ok(Estimator::TwoStage),
            other => Err(Error::InvalidSpec(format!("unknown estimator `{other}`"))),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::OneStep => "one_step",
            Estimator::TwoStep => "two_step",
            Estimator::TwoStage => "two_stage",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_low: usize,
    pub n_high: usize,
    pub low_covariates: bool,
    pub high_covariates: bool,
    pub estimator: Estimator,
    /// Schedules the two-stage refit with fixed group proportions.
    #[serde(default)]
    pub cross_level_interaction: bool,
}

impl ModelSpec {
    pub fn new(n_low: usize, n_high: usize) -> Self {
        ModelSpec {
            n_low,
            n_high,
            low_covariates: false,
            high_covariates: false,
            estimator: Estimator::TwoStep,
            cross_level_interaction: false,
        }
    }

    pub fn with_estimator(mut self, e: Estimator) -> Self {
        self.estimator = e;
        self
    }

    pub fn is_multilevel(&self) -> bool {
        self.n_high > 1
    }

    pub fn has_covariates(&self) -> bool {
        self.low_covariates || self.high_covariates
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.n_low == 0 || self.n_high == 0 {
            return Err(Error::InvalidSpec("class counts must be at least 1".into()));
        }
        if self.high_covariates && self.n_high < 2 {
            return Err(Error::InvalidSpec(
                "high-level covariates need at least two high-level classes".into(),
            ));
        }
        if self.n_high > data.n_groups() {
            return Err(Error::InvalidSpec(format!(
                "{} high-level classes requested but only {} groups present",
                self.n_high,
                data.n_groups()
            )));
        }
        if self.low_covariates && self.n_low < 2 {
            return Err(Error::InvalidSpec(
                "low-level covariates need at least two low-level classes".into(),
            ));
        }
        if self.low_covariates && !data.has_low_covariates() {
            return Err(Error::InvalidSpec("no low-level covariate columns in data".into()));
        }
        if self.high_covariates && !data.has_high_covariates() {
            return Err(Error::InvalidSpec("no high-level covariate columns in data".into()));
        }
        Ok(())
    }
}

/// Per-unit log `P(X = t | W = m, z)` and per-group log `P(W = m | z*)`.
#[derive(Debug, Clone)]
pub struct LogWeights {
    pub n_low: usize,
    pub n_high: usize,
    /// N × M × T, unit-major.
    pub log_pi: Vec<f64>,
    /// J × M.
    pub log_omega: Matrix,
}

impl LogWeights {
    pub fn from_proportions(data: &Dataset, omega: &[f64], pi: &Matrix) -> Self {
        let (n, j) = (data.n_units(), data.n_groups());
        let (m_count, t_count) = (omega.len(), pi.cols);
        let block: Vec<f64> = pi.data.iter().map(|p| p.ln()).collect();
        let mut log_pi = Vec::with_capacity(n * m_count * t_count);
        for _ in 0..n {
            log_pi.extend_from_slice(&block);
        }
        let lo: Vec<f64> = omega.iter().map(|w| w.ln()).collect();
        let mut log_omega = Matrix::zeros(j, m_count);
        for g in 0..j {
            log_omega.row_mut(g).copy_from_slice(&lo);
        }
        LogWeights {
            n_low: t_count,
            n_high: m_count,
            log_pi,
            log_omega,
        }
    }

    pub fn from_structural(data: &Dataset, s: &StructuralParams) -> Self {
        let (n, j) = (data.n_units(), data.n_groups());
        let (t_count, m_count) = (s.n_low, s.n_high);
        let k = s.gamma.cols;
        let mut log_pi = vec![0.0; n * m_count * t_count];
        log_pi
            .par_chunks_mut(m_count * t_count)
            .enumerate()
            .for_each(|(i, out)| {
                let z = data.z_low.row(i);
                for m in 0..m_count {
                    let lp = log_logistic_probs(s.gamma_block(m), k, z);
                    out[m * t_count..(m + 1) * t_count].copy_from_slice(&lp);
                }
            });
        let kh = s.alpha.cols;
        let mut log_omega = Matrix::zeros(j, m_count);
        for g in 0..j {
            let lw = log_logistic_probs(&s.alpha.data, kh, data.z_high.row(g));
            log_omega.row_mut(g).copy_from_slice(&lw);
        }
        LogWeights {
            n_low: t_count,
            n_high: m_count,
            log_pi,
            log_omega,
        }
    }

    #[inline]
    fn unit(&self, i: usize) -> &[f64] {
        let w = self.n_low * self.n_high;
        &self.log_pi[i * w..(i + 1) * w]
    }
}

/// Posterior class membership at both levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posteriors {
    pub n_low: usize,
    pub n_high: usize,
    /// J × M, `P(W_j = m | Y_j, Z)`.
    pub pw: Matrix,
    /// N × (M·T): unit rows hold `P(X = t, W = m | ·)` at column `m·T + t`.
    pub joint: Matrix,
    /// N × T, `joint` summed over `m`.
    pub px_marginal: Matrix,
    pub loglik: f64,
}

impl Posteriors {
    #[inline]
    pub fn joint_at(&self, i: usize, t: usize, m: usize) -> f64 {
        self.joint[(i, m * self.n_low + t)]
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

struct GroupTerms {
    loglik: f64,
    pw: Vec<f64>,
    /// per unit of the group, M × T joint block
    joint: Vec<f64>,
    zero_row: Option<usize>,
}

fn group_terms(data: &Dataset, log_phi: &[Matrix], w: &LogWeights, g: usize) -> GroupTerms {
    let (t_count, m_count) = (w.n_low, w.n_high);
    let rows = data.group_rows(g);
    let mut b = vec![0.0; t_count];
    let mut lp = vec![0.0; rows.len() * m_count * t_count];
    let mut unit_lse = vec![0.0; rows.len() * m_count];
    let mut terms: Vec<f64> = w.log_omega.row(g).to_vec();
    let mut zero_row = None;
    for (r, &i) in rows.iter().enumerate() {
        item_logdensity_into(data.y_row(i), log_phi, &mut b);
        let lpi = w.unit(i);
        let mut all_neg_inf = true;
        for m in 0..m_count {
            let off = (r * m_count + m) * t_count;
            for t in 0..t_count {
                lp[off + t] = lpi[m * t_count + t] + b[t];
            }
            let a = log_sum_exp(&lp[off..off + t_count]);
            unit_lse[r * m_count + m] = a;
            terms[m] += a;
            if a > f64::NEG_INFINITY {
                all_neg_inf = false;
            }
        }
        if all_neg_inf && zero_row.is_none() {
            zero_row = Some(data.source_rows[i]);
        }
    }
    let loglik = log_sum_exp(&terms);
    let mut pw: Vec<f64> = terms.iter().map(|x| (x - loglik).exp()).collect();
    let s: f64 = pw.iter().sum();
    pw.iter_mut().for_each(|p| *p /= s);

    let mut joint = vec![0.0; rows.len() * m_count * t_count];
    for r in 0..rows.len() {
        let mut total = 0.0;
        for m in 0..m_count {
            let off = (r * m_count + m) * t_count;
            let a = unit_lse[r * m_count + m];
            for t in 0..t_count {
                let v = pw[m] * (lp[off + t] - a).exp();
                joint[off + t] = v;
                total += v;
            }
        }
        let block = &mut joint[r * m_count * t_count..(r + 1) * m_count * t_count];
        block.iter_mut().for_each(|v| *v /= total);
    }
    GroupTerms {
        loglik,
        pw,
        joint,
        zero_row,
    }
}

/// E-step for arbitrary mixing weights.
pub fn posteriors_with_weights(
    data: &Dataset,
    phi: &MeasurementParams,
    weights: &LogWeights,
) -> Result<Posteriors> {
    let log_phi = phi.log_table();
    let (t_count, m_count) = (weights.n_low, weights.n_high);
    let j = data.n_groups();
    let per_group: Vec<GroupTerms> = (0..j)
        .into_par_iter()
        .map(|g| group_terms(data, &log_phi, weights, g))
        .collect();

    let n = data.n_units();
    let mut pw = Matrix::zeros(j, m_count);
    let mut joint = Matrix::zeros(n, m_count * t_count);
    let mut px = Matrix::zeros(n, t_count);
    let mut group_ll = Vec::with_capacity(j);
    for (g, terms) in per_group.iter().enumerate() {
        if !terms.loglik.is_finite() {
            return Err(Error::ZeroLikelihood {
                row: terms.zero_row.unwrap_or(data.source_rows[data.group_rows(g)[0]]),
            });
        }
        group_ll.push(terms.loglik);
        pw.row_mut(g).copy_from_slice(&terms.pw);
        for (r, &i) in data.group_rows(g).iter().enumerate() {
            let block = &terms.joint[r * m_count * t_count..(r + 1) * m_count * t_count];
            joint.row_mut(i).copy_from_slice(block);
            let px_row = px.row_mut(i);
            for m in 0..m_count {
                for t in 0..t_count {
                    px_row[t] += block[m * t_count + t];
                }
            }
        }
    }
    Ok(Posteriors {
        n_low: t_count,
        n_high: m_count,
        pw,
        joint,
        px_marginal: px,
        loglik: pairwise_sum(&group_ll),
    })
}

/// Posterior membership probabilities and log-likelihood under the full
/// structural model.
pub fn compute_posteriors(
    data: &Dataset,
    phi: &MeasurementParams,
    s: &StructuralParams,
) -> Result<Posteriors> {
    posteriors_with_weights(data, phi, &LogWeights::from_structural(data, s))
}

/// `Σ_j log Σ_m ω_m(z*_j) Π_i Σ_t π_{t|m}(z_ij) Π_h P(y_ijh | t)`.
pub fn multilevel_loglik(data: &Dataset, phi: &MeasurementParams, s: &StructuralParams) -> Result<f64> {
    compute_posteriors(data, phi, s).map(|p| p.loglik)
}

/// `Σ_i log Σ_t π_t(z_i) Π_h P(y_ih | t)`; requires `M = 1`.
pub fn single_level_loglik(data: &Dataset, phi: &MeasurementParams, s: &StructuralParams) -> Result<f64> {
    if s.n_high != 1 {
        return Err(Error::InvalidSpec("single-level likelihood needs M = 1".into()));
    }
    let k = s.gamma.cols;
    let mut terms = Vec::with_capacity(data.n_units());
    for i in 0..data.n_units() {
        let lw = log_logistic_probs(s.gamma_block(0), k, data.z_low.row(i));
        let b = item_logdensity(data.y_row(i), phi);
        let v: Vec<f64> = lw.iter().zip(&b).map(|(a, b)| a + b).collect();
        let li = log_sum_exp(&v);
        if !li.is_finite() {
            return Err(Error::ZeroLikelihood {
                row: data.source_rows[i],
            });
        }
        terms.push(li);
    }
    Ok(pairwise_sum(&terms))
}
