//! Synthetic data from a known model, for recovery and selection checks.
//!
//! Each group draws from its own ChaCha8 stream (`seed`, stream `j + 1`) in
//! a fixed order: high-level covariates, the group class, then for every
//! unit its low-level covariates, its class and its items in column order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnRoles, Dataset, RawTable};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{MeasurementParams, StructuralParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum CovariateGen {
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
    Fixed { value: f64 },
}

impl CovariateGen {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            CovariateGen::Bernoulli { p } => (0.0..=1.0).contains(&p),
            CovariateGen::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            CovariateGen::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("invalid covariate distribution {self:?}")))
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            CovariateGen::Bernoulli { p } => {
                let b = Bernoulli::new(p).expect("validated probability");
                if b.sample(rng) {
                    1.0
                } else {
                    0.0
                }
            }
            CovariateGen::Normal { mean, sd } => Normal::new(mean, sd).expect("validated sd").sample(rng),
            CovariateGen::Fixed { value } => value,
        }
    }

    fn is_binary(&self) -> bool {
        matches!(self, CovariateGen::Bernoulli { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub dist: CovariateGen,
}

/// Data-generating model. Column `c + 1` of `structural.gamma` multiplies
/// low-level covariate `c`; likewise for `alpha` and the high level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub phi: MeasurementParams,
    pub structural: StructuralParams,
    #[serde(default)]
    pub low_covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub high_covariates: Vec<CovariateSpec>,
    /// Defaults to `Y1..YH`.
    #[serde(default)]
    pub item_names: Option<Vec<String>>,
}

impl TrueModel {
    pub fn validate(&self) -> Result<()> {
        let s = &self.structural;
        if self.phi.n_classes != s.n_low {
            return Err(Error::InvalidSpec("phi and gamma disagree on the number of classes".into()));
        }
        if s.gamma.rows != (s.n_low - 1) * s.n_high || s.alpha.rows != s.n_high - 1 {
            return Err(Error::InvalidSpec("coefficient matrices have the wrong number of rows".into()));
        }
        if s.k_low() != 1 + self.low_covariates.len() && s.gamma.rows > 0 {
            return Err(Error::InvalidSpec("gamma needs one column per low-level covariate plus the intercept".into()));
        }
        if s.k_high() != 1 + self.high_covariates.len() && s.alpha.rows > 0 {
            return Err(Error::InvalidSpec("alpha needs one column per high-level covariate plus the intercept".into()));
        }
        for m in &self.phi.probs {
            if m.rows != self.phi.n_classes || m.cols < 2 {
                return Err(Error::InvalidSpec("each item needs T rows and at least 2 categories".into()));
            }
            for row in m.iter_rows() {
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
                    return Err(Error::InvalidSpec("response probabilities must be distributions".into()));
                }
            }
        }
        for c in self.low_covariates.iter().chain(&self.high_covariates) {
            c.dist.validate()?;
        }
        if let Some(names) = &self.item_names {
            if names.len() != self.phi.n_items() {
                return Err(Error::InvalidSpec("item_names must have one entry per item".into()));
            }
        }
        Ok(())
    }

    pub fn item_names(&self) -> Vec<String> {
        self.item_names
            .clone()
            .unwrap_or_else(|| (1..=self.phi.n_items()).map(|h| format!("Y{h}")).collect())
    }
}

/// True classes of one unit (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub group: usize,
    pub unit: usize,
    pub class: usize,
    pub group_class: usize,
}

#[derive(Debug, Clone)]
pub struct Simulated {
    /// Columns: `group`, items, low-level covariates, high-level covariates.
    pub table: RawTable,
    pub latent: Vec<LatentRecord>,
    pub roles: ColumnRoles,
}

impl Simulated {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::build(&self.table, &self.roles)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.table.write_csv(out)
    }

    /// `group,unit,x,w` with one-based classes.
    pub fn write_latent_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["group", "unit", "x", "w"]).map_err(io)?;
        for r in &self.latent {
            w.write_record([
                (r.group + 1).to_string(),
                (r.unit + 1).to_string(),
                (r.class + 1).to_string(),
                (r.group_class + 1).to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn categorical(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    // u beyond the accumulated mass through rounding: last positive category
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

/// Draws `group_sizes.len()` groups of the given sizes.
pub fn generate(truth: &TrueModel, group_sizes: &[usize], seed: u64) -> Result<Simulated> {
    truth.validate()?;
    if group_sizes.is_empty() || group_sizes.contains(&0) {
        return Err(Error::InvalidSpec("every group needs at least one unit".into()));
    }
    let s = &truth.structural;
    let h_count = truth.phi.n_items();
    let (kl, kh) = (truth.low_covariates.len(), truth.high_covariates.len());
    let n: usize = group_sizes.iter().sum();

    let mut group_col = Vec::with_capacity(n);
    let mut items = vec![Vec::with_capacity(n); h_count];
    let mut low = vec![Vec::with_capacity(n); kl];
    let mut high = vec![Vec::with_capacity(n); kh];
    let mut latent = Vec::with_capacity(n);

    for (j, &nj) in group_sizes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64 + 1);
        let mut zh = vec![1.0];
        zh.extend(truth.high_covariates.iter().map(|c| c.dist.draw(&mut rng)));
        let w = categorical(&s.omega_at(&zh), &mut rng);
        for i in 0..nj {
            let mut z = vec![1.0];
            z.extend(truth.low_covariates.iter().map(|c| c.dist.draw(&mut rng)));
            let x = categorical(&s.pi_at(w, &z), &mut rng);
            for (h, col) in items.iter_mut().enumerate() {
                col.push(Some(categorical(truth.phi.class_probs(h, x), &mut rng) as i64));
            }
            group_col.push(Some(j as i64 + 1));
            for (c, col) in low.iter_mut().enumerate() {
                col.push(z[c + 1]);
            }
            for (c, col) in high.iter_mut().enumerate() {
                col.push(zh[c + 1]);
            }
            latent.push(LatentRecord {
                group: j,
                unit: i,
                class: x,
                group_class: w,
            });
        }
    }

    let mut table = RawTable::new();
    table.push_column("group", Column::Int(group_col));
    let names = truth.item_names();
    for (name, col) in names.iter().zip(items) {
        table.push_column(name.clone(), Column::Int(col));
    }
    let push_cov = |table: &mut RawTable, spec: &CovariateSpec, col: Vec<f64>| {
        if spec.dist.is_binary() {
            table.push_column(spec.name.clone(), Column::Int(col.into_iter().map(|v| Some(v as i64)).collect()));
        } else {
            table.push_column(spec.name.clone(), Column::Float(col.into_iter().map(Some).collect()));
        }
    };
    for (spec, col) in truth.low_covariates.iter().zip(low) {
        push_cov(&mut table, spec, col);
    }
    for (spec, col) in truth.high_covariates.iter().zip(high) {
        push_cov(&mut table, spec, col);
    }
    let roles = ColumnRoles {
        items: names,
        group: Some("group".into()),
        low_covariates: truth.low_covariates.iter().map(|c| c.name.clone()).collect(),
        high_covariates: truth.high_covariates.iter().map(|c| c.name.clone()).collect(),
    };
    Ok(Simulated { table, latent, roles })
}

/// All permutations of `0..n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

/// Total variation distance between the response profiles of two classes,
/// summed over items.
fn profile_distance(a: &MeasurementParams, ta: usize, b: &MeasurementParams, tb: usize) -> f64 {
    (0..a.n_items())
        .map(|h| {
            a.class_probs(h, ta)
                .iter()
                .zip(b.class_probs(h, tb))
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / 2.0
        })
        .sum()
}

/// Permutation `perm` such that estimated class `perm[t]` corresponds to
/// true class `t`; `estimate.permuted(&perm)` is then on the truth's
/// labels.
pub fn align_low_classes(estimate: &MeasurementParams, truth: &MeasurementParams) -> Vec<usize> {
    let t = truth.n_classes;
    permutations(t)
        .into_iter()
        .map(|p| {
            let cost: f64 = (0..t).map(|k| profile_distance(truth, k, estimate, p[k])).sum();
            (p, cost)
        })
        .fold((Vec::new(), f64::INFINITY), |best, (p, c)| if c < best.1 { (p, c) } else { best })
        .0
}

/// Matches rows of two M × T class-proportion matrices (already on common
/// low-level labels) by minimum total L1 distance.
pub fn align_high_classes(estimate_pi: &Matrix, truth_pi: &Matrix) -> Vec<usize> {
    let m = truth_pi.rows;
    permutations(m)
        .into_iter()
        .map(|p| {
            let cost: f64 = (0..m)
                .map(|k| {
                    truth_pi
                        .row(k)
                        .iter()
                        .zip(estimate_pi.row(p[k]))
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                })
                .sum();
            (p, cost)
        })
        .fold((Vec::new(), f64::INFINITY), |best, (p, c)| if c < best.1 { (p, c) } else { best })
        .0
}
