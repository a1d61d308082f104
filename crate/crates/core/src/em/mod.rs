//! EM algorithms for the measurement problems (single-level and
//! multilevel, optionally with some blocks held fixed) and for the
//! structural problems (two-step with fixed response probabilities, and
//! the joint one-step problem).

mod logistic;
mod measurement;
mod structural;

pub use logistic::{logistic_gradient, logistic_objective, mstep_logistic};
pub use measurement::{
    em_multilevel_measurement, em_single_measurement, measurement_em, MeasurementFit,
    MeasurementUpdates,
};
pub use structural::{em_one_step, em_structural, StructuralFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Posteriors, PROB_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmControl {
    pub max_iter: usize,
    /// Stop when `|Δll| / (1 + |ll|)` falls below this.
    pub tol: f64,
    /// Damped Newton iterations per M-step for logit coefficients.
    pub newton_steps: usize,
    pub floor: f64,
}

impl Default for EmControl {
    fn default() -> Self {
        EmControl {
            max_iter: 1000,
            tol: 1e-9,
            newton_steps: 1,
            floor: PROB_FLOOR,
        }
    }
}

impl EmControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidSpec("EM control needs tol > 0 and max_iter ≥ 1".into()));
        }
        Ok(())
    }
}

/// Log-likelihood path of one EM run. `history[0]` is the value after the
/// first E-step. `iterations` counts the EM cycles that moved the
/// likelihood; the final cycle that only confirmed convergence is not
/// counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    pub iterations: usize,
    pub ll_first: f64,
    pub ll_last: f64,
    pub converged: bool,
    pub history: Vec<f64>,
}

impl EmTrace {
    /// Largest drop between consecutive log-likelihoods (0 when monotone).
    pub fn max_decrease(&self) -> f64 {
        self.history
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

/// Slack allowed before a decrease is treated as an implementation error.
/// Summing tens of thousands of unit terms leaves roundoff proportional to
/// the magnitude of the log-likelihood.
fn monotone_slack(ll: f64) -> f64 {
    1e-8_f64.max(1e-11 * ll.abs())
}

/// Drives E/M alternation until the relative change in log-likelihood is
/// below `ctrl.tol` or `ctrl.max_iter` cycles have run.
pub(crate) fn run_em<S>(
    state: &mut S,
    ctrl: &EmControl,
    mut e_step: impl FnMut(&S) -> Result<Posteriors>,
    mut m_step: impl FnMut(&mut S, &Posteriors) -> Result<()>,
) -> Result<(Posteriors, EmTrace)> {
    ctrl.validate()?;
    let mut post = e_step(state)?;
    let mut history = vec![post.loglik];
    let mut converged = false;
    let mut iterations = ctrl.max_iter;
    for iter in 1..=ctrl.max_iter {
        m_step(state, &post)?;
        let next = e_step(state)?;
        let (prev, cur) = (post.loglik, next.loglik);
        if cur < prev - monotone_slack(prev) {
            return Err(Error::NonMonotone {
                iteration: iter,
                previous: prev,
                current: cur,
            });
        }
        history.push(cur);
        post = next;
        if (cur - prev).abs() / (1.0 + cur.abs()) < ctrl.tol {
            converged = true;
            iterations = iter - 1;
            break;
        }
    }
    if !converged {
        log::warn!("EM stopped at the iteration cap ({}) before converging", ctrl.max_iter);
    }
    let trace = EmTrace {
        iterations,
        ll_first: history[0],
        ll_last: *history.last().unwrap(),
        converged,
        history,
    };
    Ok((post, trace))
}
