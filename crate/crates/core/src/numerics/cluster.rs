use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAX_LLOYD_ITER: usize = 300;

/// Hard partition of `n` observations into `k` nonempty clusters.
/// Labels are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub k: usize,
    pub within_dispersion: f64,
}

impl Partition {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs.
pub fn kmeans(x: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<Partition> {
    let n = x.rows;
    if k == 0 || k > n {
        return Err(Error::Infeasible { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Partition> = None;
    for _ in 0..restarts.max(1) {
        let centers = plus_plus(x, k, &mut rng);
        let (part, _) = lloyd(x, centers);
        if best
            .as_ref()
            .is_none_or(|b| part.within_dispersion < b.within_dispersion)
        {
            best = Some(part);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows;
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            if d2[pick] == 0.0 {
                // roundoff ran past the end; take the last positive weight
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // fewer distinct points than clusters
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

/// Runs Lloyd iterations from the given centers. Also returns the
/// objective recorded after each assignment step.
pub(crate) fn lloyd(x: &Matrix, mut centers: Matrix) -> (Partition, Vec<f64>) {
    let n = x.rows;
    let k = centers.rows;
    let p = x.cols;
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();

    for _ in 0..MAX_LLOYD_ITER {
        let mut next = vec![0; n];
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let row = x.row(i);
            let mut best = 0;
            let mut best_d = sq_dist(row, centers.row(0));
            for c in 1..k {
                let d = sq_dist(row, centers.row(c));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            next[i] = best;
            dist[i] = best_d;
        }
        repair_empty(&mut next, &mut dist, k);
        history.push(dist.iter().sum());

        let done = next == assignment;
        assignment = next;
        if done {
            break;
        }

        centers = Matrix::zeros(k, p);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (acc, v) in centers.row_mut(c).iter_mut().zip(x.row(i)) {
                *acc += v;
            }
        }
        for c in 0..k {
            let cnt = counts[c] as f64;
            centers.row_mut(c).iter_mut().for_each(|v| *v /= cnt);
        }
    }

    // objective against the final centroids
    let mut centroid = Matrix::zeros(k, p);
    let mut counts = vec![0usize; k];
    for i in 0..n {
        counts[assignment[i]] += 1;
        for (acc, v) in centroid.row_mut(assignment[i]).iter_mut().zip(x.row(i)) {
            *acc += v;
        }
    }
    for c in 0..k {
        let cnt = counts[c].max(1) as f64;
        centroid.row_mut(c).iter_mut().for_each(|v| *v /= cnt);
    }
    let within = (0..n)
        .map(|i| sq_dist(x.row(i), centroid.row(assignment[i])))
        .sum();
    (
        Partition {
            assignment,
            k,
            within_dispersion: within,
        },
        history,
    )
}

/// Moves the point farthest from its center (among clusters with more than
/// one member) into each empty cluster.
fn repair_empty(assignment: &mut [usize], dist: &mut [f64], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut donor = None;
        let mut far = f64::NEG_INFINITY;
        for (i, &a) in assignment.iter().enumerate() {
            if sizes[a] > 1 && dist[i] > far {
                far = dist[i];
                donor = Some(i);
            }
        }
        let Some(i) = donor else { return };
        assignment[i] = empty;
        dist[i] = 0.0;
    }
}

/// K-modes on a row-major categorical matrix with `cols` columns, using
/// simple matching dissimilarity. Mode ties pick the smallest code.
pub fn kmodes(x: &[usize], cols: usize, k: usize, restarts: usize, seed: u64) -> Result<Partition> {
    let n = if cols == 0 { 0 } else { x.len() / cols };
    if k == 0 || k > n {
        return Err(Error::Infeasible { k, n });
    }
    let row = |i: usize| &x[i * cols..(i + 1) * cols];
    let hamming = |a: &[usize], b: &[usize]| a.iter().zip(b).filter(|(u, v)| u != v).count();
    let n_codes = x.iter().copied().max().unwrap_or(0) + 1;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Partition> = None;

    for _ in 0..restarts.max(1) {
        // matching-distance analogue of k-means++ seeding
        let mut modes: Vec<Vec<usize>> = vec![row(rng.random_range(0..n)).to_vec()];
        while modes.len() < k {
            let d: Vec<f64> = (0..n)
                .map(|i| {
                    modes
                        .iter()
                        .map(|m| hamming(row(i), m))
                        .min()
                        .unwrap_or(0) as f64
                })
                .collect();
            let total: f64 = d.iter().sum();
            let pick = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = d.iter().rposition(|&v| v > 0.0).unwrap_or(0);
                for (i, &v) in d.iter().enumerate() {
                    if v > 0.0 && u < v {
                        pick = i;
                        break;
                    }
                    u -= v;
                }
                pick
            } else {
                rng.random_range(0..n)
            };
            modes.push(row(pick).to_vec());
        }

        let mut assignment = vec![usize::MAX; n];
        for _ in 0..MAX_LLOYD_ITER {
            let mut next = vec![0; n];
            let mut dist = vec![0.0; n];
            for i in 0..n {
                let mut best_c = 0;
                let mut best_d = hamming(row(i), &modes[0]);
                for (c, m) in modes.iter().enumerate().skip(1) {
                    let dd = hamming(row(i), m);
                    if dd < best_d {
                        best_c = c;
                        best_d = dd;
                    }
                }
                next[i] = best_c;
                dist[i] = best_d as f64;
            }
            repair_empty(&mut next, &mut dist, k);
            let done = next == assignment;
            assignment = next;
            if done {
                break;
            }
            for (c, mode) in modes.iter_mut().enumerate() {
                let mut counts = vec![0usize; cols * n_codes];
                for i in (0..n).filter(|&i| assignment[i] == c) {
                    for (j, &v) in row(i).iter().enumerate() {
                        counts[j * n_codes + v] += 1;
                    }
                }
                for (j, slot) in mode.iter_mut().enumerate() {
                    let col = &counts[j * n_codes..(j + 1) * n_codes];
                    let mut arg = 0;
                    for (code, &cnt) in col.iter().enumerate() {
                        if cnt > col[arg] {
                            arg = code;
                        }
                    }
                    *slot = arg;
                }
            }
        }

        let within = (0..n)
            .map(|i| hamming(row(i), &modes[assignment[i]]) as f64)
            .sum::<f64>();
        let part = Partition {
            assignment,
            k,
            within_dispersion: within,
        };
        if best
            .as_ref()
            .is_none_or(|b| part.within_dispersion < b.within_dispersion)
        {
            best = Some(part);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_clouds() -> Matrix {
        Matrix::from_rows(&[
            vec![0.0, 0.1],
            vec![0.2, -0.1],
            vec![-0.1, 0.0],
            vec![0.1, 0.2],
            vec![10.0, 10.1],
            vec![9.8, 10.0],
            vec![10.2, 9.9],
            vec![10.1, 10.2],
        ])
    }

    fn objective_of(x: &Matrix, labels: &[usize], k: usize) -> f64 {
        let mut total = 0.0;
        for c in 0..k {
            let members: Vec<usize> = (0..x.rows).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                return f64::INFINITY;
            }
            let mut mean = vec![0.0; x.cols];
            for &i in &members {
                for (m, v) in mean.iter_mut().zip(x.row(i)) {
                    *m += v / members.len() as f64;
                }
            }
            total += members.iter().map(|&i| sq_dist(x.row(i), &mean)).sum::<f64>();
        }
        total
    }

    #[test]
    fn single_cluster_objective_is_total_ss() {
        let x = two_clouds();
        let p = kmeans(&x, 1, 3, 7).unwrap();
        assert!(p.assignment.iter().all(|&a| a == 0));
        assert_abs_diff_eq!(
            p.within_dispersion,
            objective_of(&x, &p.assignment, 1),
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_clouds_match_brute_force() {
        let x = two_clouds();
        let n = x.rows;
        // exhaustive search over all 2-partitions
        let mut best = f64::INFINITY;
        let mut best_labels = vec![];
        for mask in 1u32..(1 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let obj = objective_of(&x, &labels, 2);
            if obj < best {
                best = obj;
                best_labels = labels;
            }
        }
        let p = kmeans(&x, 2, 10, 1).unwrap();
        assert_abs_diff_eq!(p.within_dispersion, best, epsilon = 1e-12);
        let same = |a: &[usize], b: &[usize]| {
            (0..n).all(|i| (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
        };
        assert!(same(&p.assignment, &best_labels));
    }

    #[test]
    fn k_equals_n_is_zero_objective() {
        let x = two_clouds();
        let p = kmeans(&x, x.rows, 2, 3).unwrap();
        assert_eq!(p.within_dispersion, 0.0);
        assert!(p.sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn too_many_clusters() {
        assert!(matches!(
            kmeans(&Matrix::zeros(2, 1), 3, 1, 0),
            Err(Error::Infeasible { k: 3, n: 2 })
        ));
        assert!(kmodes(&[0, 1], 1, 3, 1, 0).is_err());
    }

    #[test]
    fn kmeans_deterministic_given_seed() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i as f64 * 0.91).sin() * 3.0, (i as f64 * 0.37).cos()])
            .collect();
        let x = Matrix::from_rows(&rows);
        assert_eq!(kmeans(&x, 4, 5, 42).unwrap(), kmeans(&x, 4, 5, 42).unwrap());
    }

    #[test]
    fn lloyd_objective_non_increasing_and_fixed_point() {
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.7).sin() * 5.0 + (i % 3) as f64 * 4.0, (t * 1.1).cos()]
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let start = x.select_rows(&[0, 1, 2]);
        let (part, history) = lloyd(&x, start);
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        // one more Lloyd pass from the final centroids leaves labels unchanged
        let mut centers = Matrix::zeros(3, 2);
        let sizes = part.sizes();
        for i in 0..x.rows {
            for (c, v) in centers.row_mut(part.assignment[i]).iter_mut().zip(x.row(i)) {
                *c += v / sizes[part.assignment[i]] as f64;
            }
        }
        let (again, _) = lloyd(&x, centers);
        assert_eq!(again.assignment, part.assignment);
    }

    #[test]
    fn kmodes_single_cluster_mode() {
        let x = [0, 1, 2, 0, 1, 1, 1, 0, 1, 0, 2, 1];
        let p = kmodes(&x, 3, 1, 1, 0).unwrap();
        assert!(p.assignment.iter().all(|&a| a == 0));
        // column modes: (0, 1, 1) -> mismatches 1 + 0 + 2 + 1 = 4
        assert_eq!(p.within_dispersion, 4.0);
    }

    #[test]
    fn kmodes_recovers_duplicated_patterns() {
        let a = [0, 1, 1, 0];
        let b = [1, 0, 0, 2];
        let order = [true, false, true, true, false, false, true, false];
        let mut x = vec![];
        for &first in &order {
            x.extend_from_slice(if first { &a } else { &b });
        }
        let p = kmodes(&x, 4, 2, 3, 5).unwrap();
        assert_eq!(p.within_dispersion, 0.0);
        for i in 0..order.len() {
            for j in 0..order.len() {
                assert_eq!(order[i] == order[j], p.assignment[i] == p.assignment[j]);
            }
        }
    }

    #[test]
    fn kmodes_identical_rows_repair() {
        let x = vec![1, 0, 2, 1, 0, 2, 1, 0, 2, 1, 0, 2];
        let p = kmodes(&x, 3, 2, 2, 9).unwrap();
        assert_eq!(p.within_dispersion, 0.0);
        assert!(p.sizes().iter().all(|&s| s > 0));
    }
}
