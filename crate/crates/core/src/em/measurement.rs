use serde::{Deserialize, Serialize};

use super::{run_em, EmControl, EmTrace};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{posteriors_with_weights, LogWeights, MeasurementParams, Posteriors};
use crate::numerics::floored_proportions;

/// Intercept-only model fitted without covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFit {
    pub phi: MeasurementParams,
    /// Length M.
    pub omega: Vec<f64>,
    /// M × T.
    pub pi: Matrix,
    pub posteriors: Posteriors,
    pub trace: EmTrace,
}

/// Parameter blocks re-estimated by the measurement M-step. `pi` is
/// always updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementUpdates {
    pub phi: bool,
    pub omega: bool,
}

impl Default for MeasurementUpdates {
    fn default() -> Self {
        MeasurementUpdates {
            phi: true,
            omega: true,
        }
    }
}

struct State {
    phi: MeasurementParams,
    omega: Vec<f64>,
    pi: Matrix,
}

/// Category counts weighted by the marginal class posteriors, floored.
pub(crate) fn update_phi(
    data: &Dataset,
    px: &Matrix,
    phi: &mut MeasurementParams,
    floor: f64,
) {
    let t_count = phi.n_classes;
    for (h, probs) in phi.probs.iter_mut().enumerate() {
        let c_count = probs.cols;
        let mut counts = Matrix::zeros(t_count, c_count);
        for i in 0..data.n_units() {
            let c = data.y_row(i)[h];
            let p = px.row(i);
            for t in 0..t_count {
                counts[(t, c)] += p[t];
            }
        }
        for t in 0..t_count {
            let row = floored_proportions(counts.row(t), floor);
            probs.row_mut(t).copy_from_slice(&row);
        }
    }
}

/// EM for the multilevel model without covariates, with optional blocks
/// held at their starting values.
pub fn measurement_em(
    data: &Dataset,
    phi: MeasurementParams,
    omega: Vec<f64>,
    pi: Matrix,
    updates: MeasurementUpdates,
    ctrl: &EmControl,
) -> Result<MeasurementFit> {
    let t_count = phi.n_classes;
    let m_count = omega.len();
    if pi.rows != m_count || pi.cols != t_count {
        return Err(Error::InvalidSpec("Π must be M × T".into()));
    }
    if phi.n_items() != data.n_items() {
        return Err(Error::InvalidSpec("response probabilities do not match the items".into()));
    }
    let floor = ctrl.floor;
    let mut state = State { phi, omega, pi };

    let (posteriors, trace) = run_em(
        &mut state,
        ctrl,
        |s| {
            let w = LogWeights::from_proportions(data, &s.omega, &s.pi);
            posteriors_with_weights(data, &s.phi, &w)
        },
        |s, post| {
            if updates.omega && m_count > 1 {
                let counts: Vec<f64> = (0..m_count).map(|m| post.pw.column(m).iter().sum()).collect();
                s.omega = floored_proportions(&counts, floor);
            }
            for m in 0..m_count {
                let mut counts = vec![0.0; t_count];
                for i in 0..data.n_units() {
                    for (t, c) in counts.iter_mut().enumerate() {
                        *c += post.joint_at(i, t, m);
                    }
                }
                let row = floored_proportions(&counts, floor);
                s.pi.row_mut(m).copy_from_slice(&row);
            }
            if updates.phi {
                update_phi(data, &post.px_marginal, &mut s.phi, floor);
            }
            Ok(())
        },
    )?;

    Ok(MeasurementFit {
        phi: state.phi,
        omega: state.omega,
        pi: state.pi,
        posteriors,
        trace,
    })
}

/// Single-level latent class model fitted by EM.
pub fn em_single_measurement(
    data: &Dataset,
    phi: MeasurementParams,
    class_props: Vec<f64>,
    ctrl: &EmControl,
) -> Result<MeasurementFit> {
    let t = class_props.len();
    let pi = Matrix::from_vec(1, t, class_props);
    measurement_em(data, phi, vec![1.0], pi, MeasurementUpdates::default(), ctrl)
}

/// Multilevel latent class model without covariates fitted by EM.
pub fn em_multilevel_measurement(
    data: &Dataset,
    phi: MeasurementParams,
    omega: Vec<f64>,
    pi: Matrix,
    ctrl: &EmControl,
) -> Result<MeasurementFit> {
    measurement_em(data, phi, omega, pi, MeasurementUpdates::default(), ctrl)
}
