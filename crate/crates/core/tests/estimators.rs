mod support;

use mlca_core::em::{em_multilevel_measurement, em_single_measurement, em_structural};
use mlca_core::init::{init_measurement, init_structural};
use mlca_core::simulate::{align_high_classes, align_low_classes};
use mlca_core::{
    fit, generate, ClusterMethod, EmControl, Estimator, FitOptions, Matrix, MeasurementParams, ModelSpec,
    StructuralParams, TrueModel,
};
use support::scenario;

fn with_covariate(t: usize, m: usize, estimator: Estimator) -> ModelSpec {
    let mut spec = ModelSpec::new(t, m).with_estimator(estimator);
    spec.low_covariates = true;
    spec
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn two_step_and_one_step_agree_and_recover_gamma() {
    let truth = scenario::baseline();
    let want = &truth.structural.gamma.data;
    for seed in scenario::SEEDS {
        let data = generate(&truth, &scenario::sizes(), seed).unwrap().dataset().unwrap();
        let opts = FitOptions::default();
        let two = fit(&data, &with_covariate(3, 2, Estimator::TwoStep), &opts).unwrap();
        let one = fit(&data, &with_covariate(3, 2, Estimator::OneStep), &opts).unwrap();
        let g2 = scenario::aligned_structural(&two, &truth).gamma.data;
        let g1 = scenario::aligned_structural(&one, &truth).gamma.data;
        assert!(max_gap(&g2, &g1) < 0.05, "seed {seed}: estimators differ by {}", max_gap(&g2, &g1));
        assert!(max_gap(&g2, want) < 0.15, "seed {seed}: two-step off by {}", max_gap(&g2, want));
        assert!(max_gap(&g1, want) < 0.15, "seed {seed}: one-step off by {}", max_gap(&g1, want));
        // the joint problem starts from the two-step solution
        assert!(one.loglik() >= two.loglik() - 1e-8);
    }
}

#[test]
fn intercept_only_structural_step_reproduces_step_one() {
    // at the default tolerance the gap is one EM step of the measurement
    // fit (about 1e-5 here); converging both fits further shows the
    // parameterizations agree
    let ctrl = EmControl {
        tol: 1e-12,
        ..EmControl::default()
    };
    let truth = scenario::baseline();
    for seed in scenario::SEEDS {
        let data = generate(&truth, &scenario::sizes(), seed).unwrap().dataset().unwrap().without_covariates();
        let init = init_measurement(&data, 3, 2, ClusterMethod::Kmeans, 1, &ctrl).unwrap();
        let step1 = em_multilevel_measurement(&data, init.phi0, init.omega0, init.pi0, &ctrl).unwrap();
        let s0 = init_structural(&step1.omega, &step1.pi, 1, 1);
        // the starting intercepts are exactly the log-odds of step 1
        assert!(max_gap(&s0.pi().data, &step1.pi.data) < 1e-12);
        let step2 = em_structural(&data, &step1.phi, s0, &ctrl).unwrap();
        let gap = max_gap(&step2.params.pi().data, &step1.pi.data);
        assert!(gap < 1e-6, "seed {seed}: Π differs by {gap}");
        assert!(max_gap(&step2.params.omega(), &step1.omega) < 1e-6);
    }
}

#[test]
fn intercept_only_two_step_matches_measurement_proportions() {
    let truth = scenario::baseline();
    let data = generate(&truth, &scenario::sizes(), 1).unwrap().dataset().unwrap();
    let fit = fit(&data, &ModelSpec::new(3, 2), &FitOptions::default()).unwrap();
    let pi = fit.structural.pi();
    // without covariates the model average is the structural value itself
    assert!(max_gap(&pi.data, &fit.pi_avg.data) < 1e-12);
    assert!(max_gap(&fit.structural.omega(), &fit.omega_avg) < 1e-12);
    let truth_pi = Matrix::from_rows(&[vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5]]);
    let low = align_low_classes(&fit.phi, &truth.phi);
    let relabelled = Matrix::from_rows(
        &(0..2).map(|m| low.iter().map(|&t| pi[(m, t)]).collect()).collect::<Vec<Vec<f64>>>(),
    );
    let high = align_high_classes(&relabelled, &truth_pi);
    for m in 0..2 {
        for t in 0..3 {
            // Π includes the covariate effect averaged over z, so allow
            // sampling error on top
            assert!((relabelled[(high[m], t)] - truth_pi[(m, t)]).abs() < 0.08);
        }
    }
}

#[test]
fn multilevel_measurement_recovers_group_proportions() {
    let mut truth = scenario::baseline();
    truth.structural.alpha[(0, 0)] = (0.3f64 / 0.7).ln();
    let data = generate(&truth, &scenario::sizes(), 6).unwrap().dataset().unwrap();
    let fit = fit(&data, &ModelSpec::new(3, 2), &FitOptions::default()).unwrap();
    let (low, high) = scenario::alignment(&fit, &truth);
    let omega = fit.structural.permuted(&low, &high).omega();
    // sampling alone puts the realized share within about 0.065 of 0.3
    let realized = generate(&truth, &scenario::sizes(), 6)
        .unwrap()
        .latent
        .iter()
        .filter(|r| r.unit == 0 && r.group_class == 1)
        .count() as f64
        / 50.0;
    assert!((omega[1] - realized).abs() < 0.05, "{omega:?} vs realized {realized}");
}

#[test]
fn single_level_recovers_response_probabilities() {
    let truth = TrueModel {
        phi: MeasurementParams::binary(&[
            vec![0.9, 0.2],
            vec![0.8, 0.1],
            vec![0.85, 0.3],
            vec![0.75, 0.15],
            vec![0.1, 0.7],
            vec![0.2, 0.8],
        ]),
        structural: StructuralParams::intercept_only(&[1.0], &Matrix::from_rows(&[vec![0.6, 0.4]])),
        low_covariates: vec![],
        high_covariates: vec![],
        item_names: None,
    };
    let data = generate(&truth, &[2000], 21).unwrap().dataset().unwrap();
    let fit = fit(&data, &ModelSpec::new(2, 1), &FitOptions::default()).unwrap();
    let low = align_low_classes(&fit.phi, &truth.phi);
    assert!(fit.phi.permuted(&low).max_abs_diff(&truth.phi) < 0.03);
}

#[test]
fn standard_error_matches_complete_data_logit() {
    // with items that reveal the class the structural likelihood is the
    // complete-data one, so SE(intercept) = 1 / sqrt(n p (1 − p))
    let truth = TrueModel {
        phi: MeasurementParams::binary(&vec![vec![1.0, 0.0]; 12]),
        structural: StructuralParams::intercept_only(&[1.0], &Matrix::from_rows(&[vec![0.7, 0.3]])),
        low_covariates: vec![],
        high_covariates: vec![],
        item_names: None,
    };
    let data = generate(&truth, &[3000], 8).unwrap().dataset().unwrap();
    let fit = fit(&data, &ModelSpec::new(2, 1), &FitOptions::default()).unwrap();
    let p = fit.pi_avg[(0, 1)];
    let n = data.n_units() as f64;
    let expected = (1.0 / (n * p * (1.0 - p))).sqrt();
    let se = fit.coefficients.se[0];
    assert!((se - expected).abs() / expected < 0.05, "{se} vs {expected}");
    assert!(!fit.coefficients.rank_deficient);
}

#[test]
fn two_stage_variants_complete_and_label_stages() {
    let truth = scenario::baseline();
    let data = generate(&truth, &scenario::sizes(), 2).unwrap().dataset().unwrap();
    let opts = FitOptions::default();
    let plain = fit(&data, &with_covariate(3, 2, Estimator::TwoStage), &opts).unwrap();
    let labels: Vec<&str> = plain.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(labels, ["stage 1a", "stage 1b", "stage 2"]);
    let mut spec = with_covariate(3, 2, Estimator::TwoStage);
    spec.cross_level_interaction = true;
    let cross = fit(&data, &spec, &opts).unwrap();
    let labels: Vec<&str> = cross.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(labels, ["stage 1a", "stage 1b", "stage 1c", "stage 2"]);
    let two = fit(&data, &with_covariate(3, 2, Estimator::TwoStep), &opts).unwrap();
    let g = scenario::aligned_structural(&plain, &truth).gamma.data;
    let g2 = scenario::aligned_structural(&two, &truth).gamma.data;
    assert!(max_gap(&g, &g2) < 0.1);
}

#[test]
fn single_class_fit_reports_frequencies() {
    let truth = scenario::baseline();
    let data = generate(&truth, &[80, 70], 4).unwrap().dataset().unwrap();
    let fit = fit(&data, &ModelSpec::new(1, 1), &FitOptions::default()).unwrap();
    assert_eq!(fit.pi_avg.data, vec![1.0]);
    assert_eq!(fit.structural.n_free(), 0);
    assert_eq!(fit.class_stats.class_err, 0.0);
    assert_eq!(fit.class_stats.entropy_r2_low, 1.0);
    let n = data.n_units() as f64;
    for h in 0..data.n_items() {
        let ones = (0..data.n_units()).filter(|&i| data.y_row(i)[h] == 1).count() as f64;
        assert!((fit.phi.prob(h, 0, 1) - ones / n).abs() < 1e-12);
    }
}

#[test]
fn fits_are_deterministic_in_the_seed() {
    let truth = scenario::baseline();
    let data = generate(&truth, &scenario::sizes(), 3).unwrap().dataset().unwrap();
    let opts = FitOptions::default();
    let a = fit(&data, &with_covariate(3, 2, Estimator::OneStep), &opts).unwrap();
    let b = fit(&data, &with_covariate(3, 2, Estimator::OneStep), &opts).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.structural, b.structural);
    assert_eq!(a.phi, b.phi);
}

#[test]
fn single_level_em_matches_two_step_with_one_group_class() {
    let truth = scenario::baseline();
    let data = generate(&truth, &scenario::sizes(), 5).unwrap().dataset().unwrap();
    let result = fit(&data, &ModelSpec::new(3, 1), &FitOptions::default()).unwrap();
    let ctrl = EmControl::default();
    let init = init_measurement(&data, 3, 1, ClusterMethod::Kmeans, 1, &ctrl).unwrap();
    assert_eq!(result.phi, init.single_level.phi);
    // restarting from the converged point moves nothing of consequence
    let again = em_single_measurement(&data, init.single_level.phi.clone(), init.single_level.pi.row(0).to_vec(), &ctrl)
        .unwrap();
    assert!(again.phi.max_abs_diff(&result.phi) < 1e-4);
    assert!((again.trace.ll_last - result.trace.ll_last).abs() < 1e-3);
}
