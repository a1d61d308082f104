//! End-to-end one-step, two-step and two-stage estimation, and standard
//! errors for the structural coefficients.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{filter_for_structural, Dataset, ItemSchema};
use crate::em::{
    em_multilevel_measurement, em_one_step, em_structural, measurement_em, EmControl, EmTrace,
    MeasurementFit, MeasurementUpdates,
};
use crate::error::{Error, Result};
use crate::init::{init_measurement, init_structural, stage_plan_two_stage, ClusterMethod, Stage};
use crate::matrix::Matrix;
use crate::model::{
    posteriors_with_weights, Estimator, LogWeights, MeasurementParams, ModelSpec, Posteriors,
    StructuralParams,
};
use crate::selection::{classification_stats, information_criteria, ClassificationStats, InformationCriteria};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub ctrl: EmControl,
    pub seed: u64,
    pub init: ClusterMethod,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ctrl: EmControl::default(),
            seed: 1,
            init: ClusterMethod::Kmeans,
        }
    }
}

/// Estimates, standard errors and Wald statistics of the free structural
/// coefficients, in the order of [`StructuralParams::to_vec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub names: Vec<String>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub vcov: Matrix,
    /// Information matrix was singular; a pseudo-inverse was used.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: String,
    pub trace: EmTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub items: Vec<ItemSchema>,
    pub low_names: Vec<String>,
    pub high_names: Vec<String>,
    pub group_labels: Vec<String>,
    pub phi: MeasurementParams,
    pub structural: StructuralParams,
    pub posteriors: Posteriors,
    /// Trace of the final estimation stage.
    pub trace: EmTrace,
    /// Every EM run in order, final stage last.
    pub stages: Vec<StageTrace>,
    pub ic: InformationCriteria,
    pub class_stats: ClassificationStats,
    pub coefficients: CoefficientTable,
    /// Sample mean of the per-group high-level class probabilities.
    pub omega_avg: Vec<f64>,
    /// M × T sample mean of the per-unit class probabilities given each
    /// high-level class.
    pub pi_avg: Matrix,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.trace.converged)
    }

    pub fn loglik(&self) -> f64 {
        self.trace.ll_last
    }
}

/// Two-sided standard-normal tail probability.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Names such as `gamma(x|C2,G1)` and `alpha(Intercept|G2)`.
pub fn coefficient_names(s: &StructuralParams, low: &[String], high: &[String]) -> Vec<String> {
    let mut names = Vec::with_capacity(s.n_free());
    for m in 0..s.n_high {
        for t in 1..s.n_low {
            for name in &low[..s.k_low()] {
                if s.n_high > 1 {
                    names.push(format!("gamma({name}|C{},G{})", t + 1, m + 1));
                } else {
                    names.push(format!("gamma({name}|C{})", t + 1));
                }
            }
        }
    }
    for m in 1..s.n_high {
        for name in &high[..s.k_high()] {
            names.push(format!("alpha({name}|G{})", m + 1));
        }
    }
    names
}

fn leading(z: &[f64], k: usize) -> &[f64] {
    &z[..k]
}

/// Score of the observed log-likelihood with respect to the structural
/// coefficients, response probabilities held fixed. Also returns the
/// log-likelihood.
pub fn structural_score(data: &Dataset, phi: &MeasurementParams, s: &StructuralParams) -> Result<(Vec<f64>, f64)> {
    let weights = LogWeights::from_structural(data, s);
    let post = posteriors_with_weights(data, phi, &weights)?;
    let (t_count, m_count) = (s.n_low, s.n_high);
    let (k, kh) = (s.k_low(), s.k_high());
    let mut g = vec![0.0; s.n_free()];
    let block = (t_count - 1) * k;
    for i in 0..data.n_units() {
        let z = leading(data.z_low.row(i), k);
        let j = data.group_of(i);
        let lp = &weights.log_pi[i * m_count * t_count..(i + 1) * m_count * t_count];
        for m in 0..m_count {
            let pw = post.pw[(j, m)];
            for t in 1..t_count {
                let r = post.joint_at(i, t, m) - pw * lp[m * t_count + t].exp();
                if r == 0.0 {
                    continue;
                }
                let off = m * block + (t - 1) * k;
                for (c, zc) in z.iter().enumerate() {
                    g[off + c] += r * zc;
                }
            }
        }
    }
    let base = m_count * block;
    for j in 0..data.n_groups() {
        let zh = leading(data.z_high.row(j), kh);
        for m in 1..m_count {
            let r = post.pw[(j, m)] - weights.log_omega[(j, m)].exp();
            for (c, zc) in zh.iter().enumerate() {
                g[base + (m - 1) * kh + c] += r * zc;
            }
        }
    }
    Ok((g, post.loglik))
}

/// Observed information of the structural coefficients by central
/// differences of the analytic score, inverted to a covariance matrix.
pub fn vcov_structural(data: &Dataset, phi: &MeasurementParams, s: &StructuralParams, names: Vec<String>) -> Result<CoefficientTable> {
    let theta = s.to_vec();
    let d = theta.len();
    let mut info = Matrix::zeros(d, d);
    let mut work = s.clone();
    for k in 0..d {
        let h = 1e-5 * (1.0 + theta[k].abs());
        let mut up = theta.clone();
        up[k] += h;
        work.set_from_vec(&up);
        let (gu, _) = structural_score(data, phi, &work)?;
        let mut dn = theta.clone();
        dn[k] -= h;
        work.set_from_vec(&dn);
        let (gd, _) = structural_score(data, phi, &work)?;
        for r in 0..d {
            info[(r, k)] = -(gu[r] - gd[r]) / (2.0 * h);
        }
    }
    info.symmetrize();
    let (vcov, rank_deficient) = match info.spd_inverse() {
        Some(v) => (v, false),
        None => {
            let (v, rank) = info.symmetric_pinv(1e-10);
            log::warn!(
                "information matrix of the structural coefficients is not positive definite (numerical rank {rank} of {d}); using a pseudo-inverse"
            );
            (v, true)
        }
    };
    let se: Vec<f64> = (0..d).map(|k| vcov[(k, k)].max(0.0).sqrt()).collect();
    let z: Vec<f64> = theta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let p = z.iter().map(|&v| if v.is_finite() { two_sided_p(v) } else { f64::NAN }).collect();
    Ok(CoefficientTable {
        names,
        estimate: theta,
        se,
        z,
        p,
        vcov,
        rank_deficient,
    })
}

fn design_widths(data: &Dataset, spec: &ModelSpec) -> (usize, usize) {
    let k_low = if spec.low_covariates { data.z_low.cols } else { 1 };
    let k_high = if spec.high_covariates { data.z_high.cols } else { 1 };
    (k_low, k_high)
}

/// Data for the structural step: covariate designs trimmed to what the
/// spec uses, and rows with missing covariates removed.
fn structural_data(data: &Dataset, spec: &ModelSpec) -> Result<Dataset> {
    if !spec.has_covariates() {
        return Ok(data.without_covariates());
    }
    let mut d = data.clone();
    if !spec.low_covariates {
        let plain = data.without_covariates();
        d.z_low = plain.z_low;
        d.z_low_names = plain.z_low_names;
    }
    if !spec.high_covariates {
        let plain = data.without_covariates();
        d.z_high = plain.z_high;
        d.z_high_names = plain.z_high_names;
    }
    filter_for_structural(&d)
}

fn model_averages(data: &Dataset, s: &StructuralParams) -> (Vec<f64>, Matrix) {
    let w = LogWeights::from_structural(data, s);
    let (t_count, m_count) = (s.n_low, s.n_high);
    let mut omega = vec![0.0; m_count];
    for j in 0..data.n_groups() {
        for m in 0..m_count {
            omega[m] += w.log_omega[(j, m)].exp();
        }
    }
    let jn = data.n_groups() as f64;
    omega.iter_mut().for_each(|v| *v /= jn);
    let mut pi = Matrix::zeros(m_count, t_count);
    for i in 0..data.n_units() {
        for m in 0..m_count {
            for t in 0..t_count {
                pi[(m, t)] += w.log_pi[(i * m_count + m) * t_count + t].exp();
            }
        }
    }
    let n = data.n_units() as f64;
    pi.data.iter_mut().for_each(|v| *v /= n);
    (omega, pi)
}

struct Assembled<'a> {
    spec: &'a ModelSpec,
    n_measurement: usize,
    sdata: &'a Dataset,
    phi: MeasurementParams,
    structural: StructuralParams,
    posteriors: Posteriors,
    stages: Vec<StageTrace>,
}

fn assemble(a: Assembled<'_>) -> Result<FitResult> {
    let Assembled {
        spec,
        n_measurement,
        sdata,
        phi,
        structural,
        posteriors,
        stages,
    } = a;
    let npar = phi.n_free() + structural.n_free();
    let trace = stages.last().expect("at least one stage").trace.clone();
    let ic = information_criteria(
        posteriors.loglik,
        npar,
        n_measurement,
        sdata.n_groups(),
        &posteriors.px_marginal,
        &posteriors.pw,
    );
    let class_stats = classification_stats(&posteriors.px_marginal, &posteriors.pw);
    let names = coefficient_names(&structural, &sdata.z_low_names, &sdata.z_high_names);
    let coefficients = vcov_structural(sdata, &phi, &structural, names).map_err(|e| e.in_stage("standard errors"))?;
    let (omega_avg, pi_avg) = model_averages(sdata, &structural);
    Ok(FitResult {
        spec: spec.clone(),
        items: sdata.items.clone(),
        low_names: sdata.z_low_names[..structural.k_low()].to_vec(),
        high_names: sdata.z_high_names[..structural.k_high()].to_vec(),
        group_labels: sdata.group_labels.clone(),
        phi,
        structural,
        posteriors,
        trace,
        stages,
        ic,
        class_stats,
        coefficients,
        omega_avg,
        pi_avg,
    })
}

fn stage(label: &str, trace: &EmTrace) -> StageTrace {
    StageTrace {
        stage: label.to_string(),
        trace: trace.clone(),
    }
}

/// Step 1 of the two-step estimator: initialization and the measurement
/// model without covariates on the item-complete data.
fn step_one(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<(MeasurementFit, Vec<StageTrace>)> {
    let init = init_measurement(data, spec.n_low, spec.n_high, opts.init, opts.seed, &opts.ctrl)
        .map_err(|e| e.in_stage("initialization"))?;
    let mut stages = vec![stage("initialization", &init.single_level.trace)];
    let fit = if spec.n_high == 1 {
        init.single_level
    } else {
        em_multilevel_measurement(data, init.phi0, init.omega0, init.pi0, &opts.ctrl)
            .map_err(|e| e.in_stage("step 1"))?
    };
    stages.push(stage("step 1", &fit.trace));
    Ok((fit, stages))
}

fn prepare(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<Dataset> {
    spec.validate(data)?;
    opts.ctrl.validate()?;
    structural_data(data, spec).map_err(|e| e.in_stage("structural data"))
}

/// Two-step estimator: measurement model first, then the structural model
/// with response probabilities fixed.
pub fn fit_two_step(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    let sdata = prepare(data, spec, opts)?;
    let (step1, mut stages) = step_one(data, spec, opts)?;
    let (k_low, k_high) = design_widths(data, spec);
    let s0 = init_structural(&step1.omega, &step1.pi, k_low, k_high);
    let fit = em_structural(&sdata, &step1.phi, s0, &opts.ctrl).map_err(|e| e.in_stage("step 2"))?;
    stages.push(stage("step 2", &fit.trace));
    assemble(Assembled {
        spec,
        n_measurement: data.n_units(),
        sdata: &sdata,
        phi: fit.phi,
        structural: fit.params,
        posteriors: fit.posteriors,
        stages,
    })
}

/// One-step estimator: all parameters jointly, started from the two-step
/// solution so that the full likelihood can only improve on it.
pub fn fit_one_step(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    let sdata = prepare(data, spec, opts)?;
    let (step1, mut stages) = step_one(data, spec, opts)?;
    let (k_low, k_high) = design_widths(data, spec);
    let s0 = init_structural(&step1.omega, &step1.pi, k_low, k_high);
    let warm = em_structural(&sdata, &step1.phi, s0, &opts.ctrl).map_err(|e| e.in_stage("step 2"))?;
    stages.push(stage("step 2", &warm.trace));
    let fit = em_one_step(&sdata, warm.phi, warm.params, &opts.ctrl).map_err(|e| e.in_stage("one-step"))?;
    stages.push(stage("one-step", &fit.trace));
    assemble(Assembled {
        spec,
        n_measurement: data.n_units(),
        sdata: &sdata,
        phi: fit.phi,
        structural: fit.params,
        posteriors: fit.posteriors,
        stages,
    })
}

/// Two-stage estimator: single-level measurement model, multilevel model
/// with those response probabilities fixed, optional refit with the group
/// proportions fixed, then the structural step.
pub fn fit_two_stage(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    let sdata = prepare(data, spec, opts)?;
    let ctrl = &opts.ctrl;
    let init = init_measurement(data, spec.n_low, spec.n_high, opts.init, opts.seed, ctrl)
        .map_err(|e| e.in_stage("initialization"))?;
    let mut stages = Vec::new();
    let mut current: Option<MeasurementFit> = None;
    let (omega0, pi0) = (init.omega0.clone(), init.pi0.clone());
    let mut single = Some(init.single_level);
    for st in stage_plan_two_stage(spec) {
        let label = st.label();
        match st {
            Stage::SingleLevel => {
                let fit = single.take().expect("stage 1a runs once");
                stages.push(stage(label, &fit.trace));
                current = Some(fit);
            }
            Stage::FixedResponses => {
                let prev = current.take().expect("stage 1a precedes 1b");
                let fit = measurement_em(
                    data,
                    prev.phi,
                    omega0.clone(),
                    pi0.clone(),
                    MeasurementUpdates { phi: false, omega: true },
                    ctrl,
                )
                .map_err(|e| e.in_stage(label))?;
                stages.push(stage(label, &fit.trace));
                current = Some(fit);
            }
            Stage::FixedGroupProportions => {
                let prev = current.take().expect("stage 1b precedes 1c");
                let fit = measurement_em(
                    data,
                    prev.phi,
                    prev.omega,
                    prev.pi,
                    MeasurementUpdates { phi: true, omega: false },
                    ctrl,
                )
                .map_err(|e| e.in_stage(label))?;
                stages.push(stage(label, &fit.trace));
                current = Some(fit);
            }
            Stage::Structural => {
                let m = current.take().expect("measurement stages precede stage 2");
                let (k_low, k_high) = design_widths(data, spec);
                let s0 = init_structural(&m.omega, &m.pi, k_low, k_high);
                let fit = em_structural(&sdata, &m.phi, s0, ctrl).map_err(|e| e.in_stage(label))?;
                stages.push(stage(label, &fit.trace));
                return assemble(Assembled {
                    spec,
                    n_measurement: data.n_units(),
                    sdata: &sdata,
                    phi: fit.phi,
                    structural: fit.params,
                    posteriors: fit.posteriors,
                    stages,
                });
            }
        }
    }
    Err(Error::InvalidSpec("two-stage plan has no structural stage".into()))
}

/// Dispatches on `spec.estimator`.
pub fn fit(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    match spec.estimator {
        Estimator::OneStep => fit_one_step(data, spec, opts),
        Estimator::TwoStep => fit_two_step(data, spec, opts),
        Estimator::TwoStage => fit_two_stage(data, spec, opts),
    }
}
