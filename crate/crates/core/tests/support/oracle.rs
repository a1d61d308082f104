// Brute-force reference for tiny multilevel models: the group likelihood is
// summed over every joint assignment of the group class and all unit
// classes, in probability space, with no log-sum-exp and no factorization.

use mlca_core::{Dataset, ItemSchema, Matrix, MeasurementParams, StructuralParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub data: Dataset,
    pub phi: MeasurementParams,
    pub structural: StructuralParams,
}

pub struct Enumerated {
    pub loglik: f64,
    /// J × M
    pub pw: Vec<Vec<f64>>,
    /// per unit, `[m][t]`
    pub joint: Vec<Vec<Vec<f64>>>,
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Random instance within J ≤ 3, n_j ≤ 3, H ≤ 3, C_h ≤ 3, T ≤ 3, M ≤ 2,
/// with a continuous covariate at each level half of the time.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = rng.random_range(1..=3usize);
    let m = rng.random_range(1..=2usize);
    let h = rng.random_range(1..=3usize);
    let j = rng.random_range(1..=3usize);
    let cats: Vec<usize> = (0..h).map(|_| rng.random_range(2..=3usize)).collect();
    let items: Vec<ItemSchema> = cats
        .iter()
        .enumerate()
        .map(|(k, &c)| ItemSchema {
            name: format!("Y{}", k + 1),
            categories: (0..c).map(|v| v.to_string()).collect(),
        })
        .collect();
    let mut y = Vec::new();
    let mut groups = Vec::new();
    for g in 0..j {
        for _ in 0..rng.random_range(1..=3usize) {
            y.push(cats.iter().map(|&c| rng.random_range(0..c)).collect::<Vec<_>>());
            groups.push(g);
        }
    }
    let n = y.len();
    let mut data = Dataset::new(items, y, Some(groups)).unwrap();
    let low = rng.random_bool(0.5);
    let high = rng.random_bool(0.5);
    if low {
        let mut z = Matrix::filled(n, 2, 1.0);
        for i in 0..n {
            z[(i, 1)] = rng.random_range(-2.0..2.0);
        }
        data = data.with_low_covariates(vec!["Intercept".into(), "x".into()], z);
    }
    if high {
        let mut z = Matrix::filled(j, 2, 1.0);
        for g in 0..j {
            z[(g, 1)] = rng.random_range(-2.0..2.0);
        }
        data = data.with_high_covariates(vec!["Intercept".into(), "w".into()], z);
    }
    let probs = cats
        .iter()
        .map(|&c| Matrix::from_rows(&(0..t).map(|_| random_simplex(&mut rng, c)).collect::<Vec<_>>()))
        .collect();
    let phi = MeasurementParams::new(probs);
    let mut s = StructuralParams::zeros(t, m, data.z_low.cols, data.z_high.cols);
    for v in s.gamma.data.iter_mut().chain(s.alpha.data.iter_mut()) {
        *v = rng.random_range(-2.0..2.0);
    }
    Instance { data, phi, structural: s }
}

fn softmax_ref(coef: &Matrix, row_offset: usize, k: usize, z: &[f64]) -> Vec<f64> {
    let mut e = vec![1.0];
    for c in 1..k {
        let r = coef.row(row_offset + c - 1);
        e.push(r.iter().zip(z).map(|(a, b)| a * b).sum::<f64>().exp());
    }
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn enumerate(inst: &Instance) -> Enumerated {
    let (data, phi, s) = (&inst.data, &inst.phi, &inst.structural);
    let (t, m) = (s.n_low, s.n_high);
    let mut loglik = 0.0;
    let mut pw = Vec::new();
    let mut joint = vec![vec![vec![0.0; t]; m]; data.n_units()];
    for g in 0..data.n_groups() {
        let rows = data.group_rows(g);
        let omega = softmax_ref(&s.alpha, 0, m, data.z_high.row(g));
        let mut total = 0.0;
        let mut by_m = vec![0.0; m];
        let mut marg = vec![vec![vec![0.0; t]; m]; rows.len()];
        let configs = t.pow(rows.len() as u32);
        for w in 0..m {
            for code in 0..configs {
                let mut x = Vec::with_capacity(rows.len());
                let mut c = code;
                for _ in 0..rows.len() {
                    x.push(c % t);
                    c /= t;
                }
                let mut p = omega[w];
                for (r, &i) in rows.iter().enumerate() {
                    let pi = softmax_ref(&s.gamma, w * (t - 1), t, data.z_low.row(i));
                    p *= pi[x[r]];
                    for (hh, &yv) in data.y_row(i).iter().enumerate() {
                        p *= phi.probs[hh][(x[r], yv)];
                    }
                }
                total += p;
                by_m[w] += p;
                for r in 0..rows.len() {
                    marg[r][w][x[r]] += p;
                }
            }
        }
        loglik += total.ln();
        pw.push(by_m.iter().map(|v| v / total).collect());
        for (r, &i) in rows.iter().enumerate() {
            for w in 0..m {
                for k in 0..t {
                    joint[i][w][k] = marg[r][w][k] / total;
                }
            }
        }
    }
    Enumerated { loglik, pw, joint }
}
