//! Numeric kernels shared by the estimation code.

mod cluster;
mod pca;

pub use cluster::{kmeans, kmodes, Partition};
pub use pca::{pca_scores, PcaScores};

/// `log Σ exp(v_k)` by max-shift. Returns `-inf` when every entry is `-inf`
/// (or `v` is empty).
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    if v.len() == 1 {
        return v[0];
    }
    let s: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    debug_assert!(p.iter().all(|&x| x >= -1e-12));
    debug_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Index of the largest entry; ties resolve to the smallest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Maximizer of `Σ_c counts_c · log p_c` over the simplex restricted to
/// `p_c ≥ floor`.
///
/// KKT gives `p_c = max(floor, counts_c / λ)`; `λ` is found by moving
/// categories onto the floor until the remainder is consistent. When all
/// counts vanish the uniform vector is returned.
pub fn floored_proportions(counts: &[f64], floor: f64) -> Vec<f64> {
    let k = counts.len();
    debug_assert!(k > 0 && floor * (k as f64) < 1.0);
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return vec![1.0 / k as f64; k];
    }
    let mut pinned = vec![false; k];
    loop {
        let n_pinned = pinned.iter().filter(|&&b| b).count();
        let free_mass: f64 = counts
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(c, _)| c)
            .sum();
        let budget = 1.0 - floor * n_pinned as f64;
        let lambda = free_mass / budget;
        let mut changed = false;
        for c in 0..k {
            if !pinned[c] && counts[c] < floor * lambda {
                pinned[c] = true;
                changed = true;
            }
        }
        if !changed {
            return counts
                .iter()
                .zip(&pinned)
                .map(|(&c, &p)| if p { floor } else { c / lambda })
                .collect();
        }
    }
}

/// Row-wise normalization in place.
/// Derives an independent seed from a base seed and a sequence of
/// indices (SplitMix64 finalizer applied per component).
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ p.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}
