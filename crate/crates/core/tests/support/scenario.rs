// Baseline simulation: 50 groups of 100 units, three well-separated unit
// classes, two group classes and one standard-normal unit covariate.

use mlca_core::simulate::{CovariateGen, CovariateSpec};
use mlca_core::{Matrix, MeasurementParams, StructuralParams, TrueModel};

pub const GROUPS: usize = 50;
pub const GROUP_SIZE: usize = 100;
pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub fn baseline() -> TrueModel {
    let hi = 0.85;
    let lo = 0.15;
    // class 1 endorses everything, class 3 nothing, class 2 the first half
    let rows: Vec<Vec<f64>> = (0..10)
        .map(|h| vec![hi, if h < 5 { hi } else { lo }, lo])
        .collect();
    let phi = MeasurementParams::binary(&rows);
    let pi = Matrix::from_rows(&[vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5]]);
    let base = StructuralParams::intercept_only(&[0.5, 0.5], &pi);
    let mut s = StructuralParams::zeros(3, 2, 2, 1);
    for r in 0..s.gamma.rows {
        s.gamma[(r, 0)] = base.gamma[(r, 0)];
    }
    // slopes: the covariate pushes towards class 2 in group-class 1 and
    // away from class 3 in group-class 2
    s.gamma[(0, 1)] = 0.5;
    s.gamma[(1, 1)] = 0.0;
    s.gamma[(2, 1)] = 0.0;
    s.gamma[(3, 1)] = -0.5;
    TrueModel {
        phi,
        structural: s,
        low_covariates: vec![CovariateSpec {
            name: "z".into(),
            dist: CovariateGen::Normal { mean: 0.0, sd: 1.0 },
        }],
        high_covariates: vec![],
        item_names: None,
    }
}

pub fn sizes() -> Vec<usize> {
    vec![GROUP_SIZE; GROUPS]
}

/// Low- and high-level permutations taking the fit onto the truth's labels.
pub fn alignment(fit: &mlca_core::FitResult, truth: &TrueModel) -> (Vec<usize>, Vec<usize>) {
    use mlca_core::simulate::{align_high_classes, align_low_classes};
    let low = align_low_classes(&fit.phi, &truth.phi);
    let est_pi = &fit.pi_avg;
    let relabelled = Matrix::from_rows(
        &(0..est_pi.rows)
            .map(|m| low.iter().map(|&t| est_pi[(m, t)]).collect())
            .collect::<Vec<Vec<f64>>>(),
    );
    let mut z = vec![0.0; truth.structural.k_low()];
    z[0] = 1.0;
    let true_pi = Matrix::from_rows(
        &(0..truth.structural.n_high)
            .map(|m| truth.structural.pi_at(m, &z))
            .collect::<Vec<_>>(),
    );
    let high = align_high_classes(&relabelled, &true_pi);
    (low, high)
}

/// Estimated coefficients relabelled to the truth's classes.
pub fn aligned_structural(fit: &mlca_core::FitResult, truth: &TrueModel) -> StructuralParams {
    let (low, high) = alignment(fit, truth);
    fit.structural.permuted(&low, &high)
}

/// Relabelled coefficients with standard errors carried through the
/// (linear) relabelling map.
pub fn aligned_with_se(fit: &mlca_core::FitResult, truth: &TrueModel) -> (Vec<f64>, Vec<f64>) {
    let (low, high) = alignment(fit, truth);
    let d = fit.structural.n_free();
    let mut unit = fit.structural.clone();
    // column j of the map is the image of the j-th unit vector
    let mut a = Matrix::zeros(d, d);
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        unit.set_from_vec(&e);
        for (k, v) in unit.permuted(&low, &high).to_vec().into_iter().enumerate() {
            a[(k, j)] = v;
        }
    }
    let v = &fit.coefficients.vcov;
    let av = a.matmul(v);
    let se = (0..d)
        .map(|k| (0..d).map(|j| av[(k, j)] * a[(k, j)]).sum::<f64>().max(0.0).sqrt())
        .collect();
    (fit.structural.permuted(&low, &high).to_vec(), se)
}
