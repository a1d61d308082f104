//! Starting values: the clustering-based measurement initialization, the
//! log-odds initialization of the structural coefficients, and the stage
//! schedule of the two-stage estimator.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::em::{em_single_measurement, EmControl, MeasurementFit};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{MeasurementParams, ModelSpec, StructuralParams, PROB_FLOOR};
use crate::numerics::{argmax, floored_proportions, kmeans, kmodes, mix_seed, pca_scores, Partition};

const PCA_SHARE: f64 = 0.85;
const RESTARTS: usize = 10;
/// Floor on cluster-derived response frequencies; 0/1 values would freeze EM.
const INIT_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    #[default]
    Kmeans,
    Kmodes,
}

impl std::str::FromStr for ClusterMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(ClusterMethod::Kmeans),
            "kmodes" => Ok(ClusterMethod::Kmodes),
            other => Err(Error::InvalidSpec(format!("unknown clustering method `{other}`"))),
        }
    }
}

impl std::fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClusterMethod::Kmeans => "kmeans",
            ClusterMethod::Kmodes => "kmodes",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitBundle {
    pub phi0: MeasurementParams,
    pub omega0: Vec<f64>,
    /// M × T.
    pub pi0: Matrix,
    /// Modal low-level class per unit.
    pub x_tilde: Vec<usize>,
    /// High-level cluster per group.
    pub w_tilde: Vec<usize>,
    /// Single-level fit whose response probabilities seed `phi0`.
    pub single_level: MeasurementFit,
}

fn cluster_units(data: &Dataset, k: usize, method: ClusterMethod, seed: u64) -> Result<Partition> {
    if k == 1 {
        return Ok(Partition {
            assignment: vec![0; data.n_units()],
            k: 1,
            within_dispersion: 0.0,
        });
    }
    match method {
        ClusterMethod::Kmeans => {
            let x = data.one_hot();
            let scores = if x.rows >= 2 { pca_scores(&x, PCA_SHARE)?.scores } else { x };
            kmeans(&scores, k, RESTARTS, seed)
        }
        ClusterMethod::Kmodes => kmodes(data.responses(), data.n_items(), k, RESTARTS, seed),
    }
}

/// Class-wise category frequencies of a hard partition, floored.
fn frequencies(data: &Dataset, part: &Partition, t_count: usize) -> MeasurementParams {
    let probs = data
        .n_categories()
        .iter()
        .enumerate()
        .map(|(h, &c_count)| {
            let mut counts = Matrix::zeros(t_count, c_count);
            for i in 0..data.n_units() {
                counts[(part.assignment[i], data.y_row(i)[h])] += 1.0;
            }
            let rows: Vec<Vec<f64>> = (0..t_count)
                .map(|t| floored_proportions(counts.row(t), INIT_FLOOR))
                .collect();
            Matrix::from_rows(&rows)
        })
        .collect();
    MeasurementParams::new(probs)
}

/// Within-group means of the unit posteriors (J × T relative sizes).
pub fn group_relative_sizes(data: &Dataset, px: &Matrix) -> Matrix {
    let t_count = px.cols;
    let mut out = Matrix::zeros(data.n_groups(), t_count);
    for g in 0..data.n_groups() {
        let rows = data.group_rows(g);
        for &i in rows {
            for t in 0..t_count {
                out[(g, t)] += px[(i, t)];
            }
        }
        let n = rows.len() as f64;
        out.row_mut(g).iter_mut().for_each(|v| *v /= n);
    }
    out
}

fn cluster_groups(sizes: &Matrix, m_count: usize, method: ClusterMethod, seed: u64) -> Result<Partition> {
    match method {
        ClusterMethod::Kmeans => kmeans(sizes, m_count, RESTARTS, seed),
        ClusterMethod::Kmodes => {
            // relative sizes binned to tenths
            let codes: Vec<usize> = sizes.data.iter().map(|p| (10.0 * p).round() as usize).collect();
            kmodes(&codes, sizes.cols, m_count, RESTARTS, seed)
        }
    }
}

/// Clustering-based starting values for the measurement model.
pub fn init_measurement(
    data: &Dataset,
    n_low: usize,
    n_high: usize,
    method: ClusterMethod,
    seed: u64,
    ctrl: &EmControl,
) -> Result<InitBundle> {
    if n_low == 0 || n_high == 0 {
        return Err(Error::InvalidSpec("class counts must be at least 1".into()));
    }
    if n_high > data.n_groups() {
        return Err(Error::Infeasible {
            k: n_high,
            n: data.n_groups(),
        });
    }
    let part = cluster_units(data, n_low, method, mix_seed(seed, &[1]))?;
    let phi_start = frequencies(data, &part, n_low);
    let sizes: Vec<f64> = part.sizes().iter().map(|&s| s as f64).collect();
    let props = floored_proportions(&sizes, PROB_FLOOR);
    let single = em_single_measurement(data, phi_start, props, ctrl)?;
    let px = &single.posteriors.px_marginal;
    let x_tilde: Vec<usize> = px.iter_rows().map(argmax).collect();

    if n_high == 1 {
        return Ok(InitBundle {
            phi0: single.phi.clone(),
            omega0: vec![1.0],
            pi0: single.pi.clone(),
            x_tilde,
            w_tilde: vec![0; data.n_groups()],
            single_level: single,
        });
    }

    let rel = group_relative_sizes(data, px);
    let gpart = cluster_groups(&rel, n_high, method, mix_seed(seed, &[2]))?;
    let gsizes: Vec<f64> = gpart.sizes().iter().map(|&s| s as f64).collect();
    let omega0 = floored_proportions(&gsizes, PROB_FLOOR);
    let w_tilde = gpart.assignment;

    let mut table = Matrix::zeros(n_high, n_low);
    for i in 0..data.n_units() {
        table[(w_tilde[data.group_of(i)], x_tilde[i])] += 1.0;
    }
    // an empty row yields the uniform distribution
    let rows: Vec<Vec<f64>> = (0..n_high)
        .map(|m| floored_proportions(table.row(m), INIT_FLOOR))
        .collect();
    Ok(InitBundle {
        phi0: single.phi.clone(),
        omega0,
        pi0: Matrix::from_rows(&rows),
        x_tilde,
        w_tilde,
        single_level: single,
    })
}

/// Structural coefficients matching a fitted intercept-only model:
/// log-odds intercepts, zero covariate effects.
pub fn init_structural(omega: &[f64], pi: &Matrix, k_low: usize, k_high: usize) -> StructuralParams {
    let base = StructuralParams::intercept_only(omega, pi);
    let mut s = StructuralParams::zeros(base.n_low, base.n_high, k_low, k_high);
    for r in 0..base.gamma.rows {
        s.gamma[(r, 0)] = base.gamma[(r, 0)];
    }
    for r in 0..base.alpha.rows {
        s.alpha[(r, 0)] = base.alpha[(r, 0)];
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Single-level measurement model ignoring the grouping.
    SingleLevel,
    /// Multilevel model with response probabilities fixed.
    FixedResponses,
    /// Multilevel model with group proportions fixed.
    FixedGroupProportions,
    /// Structural model with the measurement model fixed.
    Structural,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::SingleLevel => "stage 1a",
            Stage::FixedResponses => "stage 1b",
            Stage::FixedGroupProportions => "stage 1c",
            Stage::Structural => "stage 2",
        }
    }
}

pub fn stage_plan_two_stage(spec: &ModelSpec) -> Vec<Stage> {
    let mut plan = vec![Stage::SingleLevel];
    if spec.is_multilevel() {
        plan.push(Stage::FixedResponses);
        if spec.cross_level_interaction {
            plan.push(Stage::FixedGroupProportions);
        }
    }
    plan.push(Stage::Structural);
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ItemSchema;
    use approx::assert_abs_diff_eq;

    fn items(h: usize) -> Vec<ItemSchema> {
        (0..h)
            .map(|i| ItemSchema {
                name: format!("y{i}"),
                categories: vec!["0".into(), "1".into()],
            })
            .collect()
    }

    #[test]
    fn symmetric_pi_gives_zero_intercepts() {
        let pi = Matrix::from_rows(&[vec![1.0 / 3.0; 3]]);
        let s = init_structural(&[1.0], &pi, 2, 1);
        assert_eq!(s.gamma.rows, 2);
        for v in &s.gamma.data {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn log_odds_intercepts() {
        let pi = Matrix::from_rows(&[vec![0.5, 0.4, 0.1]]);
        let s = init_structural(&[1.0], &pi, 3, 1);
        assert_abs_diff_eq!(s.gamma[(0, 0)], (0.8f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.gamma[(1, 0)], (0.2f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.gamma[(0, 0)], -0.2231, epsilon = 1e-4);
        assert_abs_diff_eq!(s.gamma[(1, 0)], -1.6094, epsilon = 1e-4);
        assert_eq!(&s.gamma.row(0)[1..], &[0.0, 0.0]);
    }

    #[test]
    fn group_proportion_intercept() {
        let omega = [0.5909, 0.4091];
        let pi = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let s = init_structural(&omega, &pi, 1, 2);
        assert_abs_diff_eq!(s.alpha[(0, 0)], (0.4091f64 / 0.5909).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.alpha[(0, 0)], -0.3676, epsilon = 1e-4);
        assert_eq!(s.alpha[(0, 1)], 0.0);
    }

    #[test]
    fn plans() {
        let mut spec = ModelSpec::new(3, 2);
        use Stage::*;
        assert_eq!(stage_plan_two_stage(&spec), vec![SingleLevel, FixedResponses, Structural]);
        spec.low_covariates = true;
        assert_eq!(stage_plan_two_stage(&spec), vec![SingleLevel, FixedResponses, Structural]);
        spec.cross_level_interaction = true;
        assert_eq!(
            stage_plan_two_stage(&spec),
            vec![SingleLevel, FixedResponses, FixedGroupProportions, Structural]
        );
        assert_eq!(stage_plan_two_stage(&ModelSpec::new(3, 1)), vec![SingleLevel, Structural]);
    }

    fn two_group_data() -> Dataset {
        // group 0 mostly pattern 1111, group 1 mostly 0000
        let mut rows = Vec::new();
        let mut groups = Vec::new();
        for g in 0..6 {
            for i in 0..20 {
                let majority = if g % 2 == 0 { i % 5 != 0 } else { i % 5 == 0 };
                rows.push(vec![majority as usize; 4]);
                groups.push(g);
            }
        }
        Dataset::new(items(4), rows, Some(groups)).unwrap()
    }

    #[test]
    fn m1_collapses_to_single_level() {
        let data = two_group_data();
        let b = init_measurement(&data, 2, 1, ClusterMethod::Kmeans, 7, &EmControl::default()).unwrap();
        assert_eq!(b.omega0, vec![1.0]);
        assert_eq!(b.pi0, b.single_level.pi);
        assert_eq!(b.phi0, b.single_level.phi);
    }

    #[test]
    fn t1_forces_single_column() {
        let data = two_group_data();
        let b = init_measurement(&data, 1, 2, ClusterMethod::Kmeans, 7, &EmControl::default()).unwrap();
        assert!(b.x_tilde.iter().all(|&x| x == 0));
        for m in 0..2 {
            assert_abs_diff_eq!(b.pi0[(m, 0)], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn groups_separate_and_pi_recovered() {
        let data = two_group_data();
        for method in [ClusterMethod::Kmeans, ClusterMethod::Kmodes] {
            let b = init_measurement(&data, 2, 2, method, 11, &EmControl::default()).unwrap();
            // even groups share a cluster, odd groups the other
            for g in 0..6 {
                assert_eq!(b.w_tilde[g] == b.w_tilde[0], g % 2 == 0);
            }
            let hi = argmax(b.phi0.class_probs(0, 0)) == 1;
            let one_class = if hi { 0 } else { 1 };
            let even = b.w_tilde[0];
            assert_abs_diff_eq!(b.pi0[(even, one_class)], 0.8, epsilon = 0.1);
            assert_abs_diff_eq!(b.pi0[(1 - even, one_class)], 0.2, epsilon = 0.1);
            assert_abs_diff_eq!(b.omega0[0], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let data = two_group_data();
        let ctrl = EmControl::default();
        let a = init_measurement(&data, 2, 2, ClusterMethod::Kmeans, 3, &ctrl).unwrap();
        let b = init_measurement(&data, 2, 2, ClusterMethod::Kmeans, 3, &ctrl).unwrap();
        assert_eq!(a, b);
    }
}
