//! Weighted multinomial-logit M-step.
//!
//! Maximizes `f(β) = Σ_i Σ_t w_it log p_t(z_i; β)` where `β` stacks the
//! coefficient rows of categories `1..T` (category 0 is the reference) and
//! `w` holds fractional posterior counts.

use crate::error::{Error, Result};
use crate::matrix::{cholesky_solve, Matrix};
use crate::model::log_logistic_probs;

const MAX_HALVINGS: usize = 50;

fn dims(z: &Matrix, w: &Matrix, beta: &[f64]) -> (usize, usize) {
    let k = z.cols;
    let t = w.cols;
    assert_eq!(z.rows, w.rows, "design and weights disagree on rows");
    assert_eq!(beta.len(), (t - 1) * k, "coefficient vector has wrong length");
    (t, k)
}

pub fn logistic_objective(z: &Matrix, w: &Matrix, beta: &[f64]) -> f64 {
    let (_, k) = dims(z, w, beta);
    let mut f = 0.0;
    for i in 0..z.rows {
        let wi = w.row(i);
        if wi.iter().all(|&v| v == 0.0) {
            continue;
        }
        let lp = log_logistic_probs(beta, k, z.row(i));
        for (wt, l) in wi.iter().zip(&lp) {
            if *wt != 0.0 {
                f += wt * l;
            }
        }
    }
    f
}

/// Analytic score: block `t` is `Σ_i (w_it − s_i p_it) z_i` with
/// `s_i = Σ_t w_it`.
pub fn logistic_gradient(z: &Matrix, w: &Matrix, beta: &[f64]) -> Vec<f64> {
    let (t_count, k) = dims(z, w, beta);
    let mut g = vec![0.0; (t_count - 1) * k];
    for i in 0..z.rows {
        let wi = w.row(i);
        let s: f64 = wi.iter().sum();
        if s == 0.0 {
            continue;
        }
        let zi = z.row(i);
        let lp = log_logistic_probs(beta, k, zi);
        for t in 1..t_count {
            let r = wi[t] - s * lp[t].exp();
            for (c, zc) in zi.iter().enumerate() {
                g[(t - 1) * k + c] += r * zc;
            }
        }
    }
    g
}

/// Negative Hessian `Σ_i s_i (diag(p) − p pᵀ) ⊗ z_i z_iᵀ` over categories 1..T.
fn neg_hessian(z: &Matrix, w: &Matrix, beta: &[f64]) -> Matrix {
    let (t_count, k) = dims(z, w, beta);
    let d = (t_count - 1) * k;
    let mut h = Matrix::zeros(d, d);
    for i in 0..z.rows {
        let s: f64 = w.row(i).iter().sum();
        if s == 0.0 {
            continue;
        }
        let zi = z.row(i);
        let p: Vec<f64> = log_logistic_probs(beta, k, zi)
            .into_iter()
            .map(f64::exp)
            .collect();
        for a in 1..t_count {
            for b in a..t_count {
                let coef = s * (if a == b { p[a] } else { 0.0 } - p[a] * p[b]);
                if coef == 0.0 {
                    continue;
                }
                for c1 in 0..k {
                    let v1 = coef * zi[c1];
                    for c2 in 0..k {
                        h[((a - 1) * k + c1, (b - 1) * k + c2)] += v1 * zi[c2];
                    }
                }
            }
        }
    }
    // fill the lower block triangle
    for a in 1..t_count {
        for b in (a + 1)..t_count {
            for c1 in 0..k {
                for c2 in 0..k {
                    h[((b - 1) * k + c2, (a - 1) * k + c1)] = h[((a - 1) * k + c1, (b - 1) * k + c2)];
                }
            }
        }
    }
    h
}

/// Runs `newton_steps` damped Newton iterations from `start`. Each step is
/// halved until the objective does not decrease, so the returned point
/// never scores below `start`.
pub fn mstep_logistic(z: &Matrix, w: &Matrix, start: &[f64], newton_steps: usize) -> Result<Vec<f64>> {
    let (t_count, _) = dims(z, w, start);
    debug_assert!(w.iter_rows().all(|r| r.iter().sum::<f64>() <= 1.0 + 1e-8));
    let mut beta = start.to_vec();
    if t_count < 2 {
        return Ok(beta);
    }
    let mut f = logistic_objective(z, w, &beta);
    for _ in 0..newton_steps.max(1) {
        let g = logistic_gradient(z, w, &beta);
        let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if gmax == 0.0 {
            break;
        }
        let h = neg_hessian(z, w, &beta);
        let l = match h.cholesky() {
            Some(l) => l,
            None => {
                let mut ridged = h.clone();
                let scale = h.diagonal().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
                for i in 0..ridged.rows {
                    ridged[(i, i)] += 1e-8 * scale;
                }
                ridged.cholesky().ok_or_else(|| {
                    Error::Convergence("logit Hessian singular after ridge regularization".into())
                })?
            }
        };
        let dir = cholesky_solve(&l, &g);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(&dir).map(|(b, d)| b + step * d).collect();
            let fc = logistic_objective(z, w, &cand);
            if fc >= f {
                beta = cand;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn design(rows: &[f64]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|&x| vec![1.0, x]).collect::<Vec<_>>())
    }

    #[test]
    fn equal_weights_zero_is_stationary() {
        let z = design(&[-1.0, 0.3, 2.0, 0.7]);
        let w = Matrix::filled(4, 3, 0.3);
        let beta = vec![0.0; 4];
        let out = mstep_logistic(&z, &w, &beta, 5).unwrap();
        for v in out {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn intercept_only_converges_to_logit() {
        let z = Matrix::filled(5, 1, 1.0);
        // column means (0.6, 0.4)
        let w = Matrix::from_rows(&[
            vec![0.9, 0.1],
            vec![0.5, 0.5],
            vec![0.4, 0.6],
            vec![0.7, 0.3],
            vec![0.5, 0.5],
        ]);
        let out = mstep_logistic(&z, &w, &[0.0], 25).unwrap();
        assert_abs_diff_eq!(out[0], (0.4f64 / 0.6).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(out[0], -0.4055, epsilon = 1e-4);
    }

    #[test]
    fn separable_data_is_monotone() {
        // class 1 whenever x > 0: the MLE does not exist
        let xs = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let z = design(&xs);
        let w = Matrix::from_rows(
            &xs.iter()
                .map(|&x| if x > 0.0 { vec![0.0, 1.0] } else { vec![1.0, 0.0] })
                .collect::<Vec<_>>(),
        );
        let mut beta = vec![0.0, 0.0];
        let mut f = logistic_objective(&z, &w, &beta);
        for _ in 0..30 {
            beta = mstep_logistic(&z, &w, &beta, 1).unwrap();
            let next = logistic_objective(&z, &w, &beta);
            assert!(next >= f);
            f = next;
        }
        assert!(beta[1] > 3.0);
    }

    #[test]
    fn zero_weights_leave_coefficients() {
        let z = design(&[0.1, 0.2]);
        let w = Matrix::zeros(2, 3);
        let out = mstep_logistic(&z, &w, &[0.5, 0.0, -0.5, 0.0], 1).unwrap();
        assert_eq!(out, vec![0.5, 0.0, -0.5, 0.0]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let z = Matrix::from_rows(&[
            vec![1.0, 0.3, -1.0],
            vec![1.0, -0.7, 0.4],
            vec![1.0, 1.2, 0.9],
            vec![1.0, 0.0, -0.2],
        ]);
        let w = Matrix::from_rows(&[
            vec![0.2, 0.5, 0.3],
            vec![0.1, 0.1, 0.5],
            vec![0.6, 0.2, 0.2],
            vec![0.3, 0.3, 0.3],
        ]);
        let beta = vec![0.2, -0.1, 0.5, -0.4, 0.3, 0.05];
        let g = logistic_gradient(&z, &w, &beta);
        let h = 1e-6;
        for j in 0..beta.len() {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (logistic_objective(&z, &w, &up) - logistic_objective(&z, &w, &dn)) / (2.0 * h);
            assert_abs_diff_eq!(g[j], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let z = design(&[-0.5, 0.25, 1.5]);
        let w = Matrix::from_rows(&[vec![0.2, 0.5, 0.3], vec![0.6, 0.3, 0.1], vec![0.1, 0.1, 0.8]]);
        let beta = vec![0.1, 0.2, -0.3, 0.4];
        let h = neg_hessian(&z, &w, &beta);
        let eps = 1e-6;
        for j in 0..4 {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += eps;
            dn[j] -= eps;
            let gu = logistic_gradient(&z, &w, &up);
            let gd = logistic_gradient(&z, &w, &dn);
            for i in 0..4 {
                assert_abs_diff_eq!(-(gu[i] - gd[i]) / (2.0 * eps), h[(i, j)], epsilon = 1e-7);
            }
        }
    }
}
