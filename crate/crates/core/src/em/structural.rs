use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measurement::update_phi;
use super::{mstep_logistic, run_em, EmControl, EmTrace};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{compute_posteriors, MeasurementParams, Posteriors, StructuralParams};
use crate::numerics::floored_proportions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralFit {
    pub phi: MeasurementParams,
    pub params: StructuralParams,
    pub posteriors: Posteriors,
    pub trace: EmTrace,
}

fn leading_columns(z: &Matrix, k: usize) -> Matrix {
    if z.cols == k {
        return z.clone();
    }
    let mut out = Matrix::zeros(z.rows, k);
    for i in 0..z.rows {
        out.row_mut(i).copy_from_slice(&z.row(i)[..k]);
    }
    out
}

/// Log-odds against category 0 of floored weighted proportions.
fn intercept_update(counts: &[f64], floor: f64) -> Vec<f64> {
    let p = floored_proportions(counts, floor);
    p[1..].iter().map(|v| (v / p[0]).ln()).collect()
}

struct Designs {
    low: Matrix,
    high: Matrix,
}

fn check_shapes(data: &Dataset, phi: &MeasurementParams, s: &StructuralParams) -> Result<Designs> {
    if phi.n_classes != s.n_low {
        return Err(Error::InvalidSpec("response probabilities and Γ disagree on T".into()));
    }
    if phi.n_items() != data.n_items() {
        return Err(Error::InvalidSpec("response probabilities do not match the items".into()));
    }
    if s.k_low() > data.z_low.cols || s.k_high() > data.z_high.cols {
        return Err(Error::InvalidSpec("coefficients wider than the covariate design".into()));
    }
    if s.n_high > data.n_groups() {
        return Err(Error::InvalidSpec("more high-level classes than groups".into()));
    }
    Ok(Designs {
        low: leading_columns(&data.z_low, s.k_low()),
        high: leading_columns(&data.z_high, s.k_high()),
    })
}

fn update_structural(
    data: &Dataset,
    designs: &Designs,
    s: &mut StructuralParams,
    post: &Posteriors,
    ctrl: &EmControl,
) -> Result<()> {
    let (t_count, m_count) = (s.n_low, s.n_high);
    if m_count > 1 {
        if s.k_high() == 1 {
            let counts: Vec<f64> = (0..m_count).map(|m| post.pw.column(m).iter().sum()).collect();
            s.alpha.data = intercept_update(&counts, ctrl.floor);
        } else {
            s.alpha.data = mstep_logistic(&designs.high, &post.pw, &s.alpha.data, ctrl.newton_steps)?;
        }
    }
    if t_count > 1 {
        let n = data.n_units();
        let blocks: Vec<Result<Vec<f64>>> = (0..m_count)
            .into_par_iter()
            .map(|m| {
                let mut w = Matrix::zeros(n, t_count);
                for i in 0..n {
                    for t in 0..t_count {
                        w[(i, t)] = post.joint_at(i, t, m);
                    }
                }
                if s.k_low() == 1 {
                    let counts: Vec<f64> = (0..t_count).map(|t| w.column(t).iter().sum()).collect();
                    Ok(intercept_update(&counts, ctrl.floor))
                } else {
                    mstep_logistic(&designs.low, &w, s.gamma_block(m), ctrl.newton_steps)
                }
            })
            .collect();
        for (m, b) in blocks.into_iter().enumerate() {
            s.gamma_block_mut(m).copy_from_slice(&b?);
        }
    }
    Ok(())
}

fn run(
    data: &Dataset,
    phi: MeasurementParams,
    init: StructuralParams,
    update_measurement: bool,
    ctrl: &EmControl,
) -> Result<StructuralFit> {
    let designs = check_shapes(data, &phi, &init)?;
    let mut state = (phi, init);
    let (posteriors, trace) = run_em(
        &mut state,
        ctrl,
        |(phi, s)| compute_posteriors(data, phi, s),
        |(phi, s), post| {
            update_structural(data, &designs, s, post, ctrl)?;
            if update_measurement {
                update_phi(data, &post.px_marginal, phi, ctrl.floor);
            }
            Ok(())
        },
    )?;
    let (phi, params) = state;
    Ok(StructuralFit {
        phi,
        params,
        posteriors,
        trace,
    })
}

/// EM over the class-membership coefficients with response probabilities
/// held fixed.
pub fn em_structural(
    data: &Dataset,
    phi: &MeasurementParams,
    init: StructuralParams,
    ctrl: &EmControl,
) -> Result<StructuralFit> {
    run(data, phi.clone(), init, false, ctrl)
}

/// EM over all parameters jointly.
pub fn em_one_step(
    data: &Dataset,
    phi: MeasurementParams,
    init: StructuralParams,
    ctrl: &EmControl,
) -> Result<StructuralFit> {
    run(data, phi, init, true, ctrl)
}
