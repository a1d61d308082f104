use crate::error::{Error, Result};
use crate::matrix::{symmetric_eigen, Matrix};

#[derive(Debug, Clone)]
pub struct PcaScores {
    /// n × q projections of the centered data.
    pub scores: Matrix,
    /// Retained component count q.
    pub n_components: usize,
    /// All eigenvalues of the sample covariance, descending.
    pub eigenvalues: Vec<f64>,
}

/// Principal component scores keeping the larger of (a) the fewest
/// components explaining `var_threshold` of total variance and (b) half of
/// all components, rounded up.
pub fn pca_scores(x: &Matrix, var_threshold: f64) -> Result<PcaScores> {
    let (n, p) = (x.rows, x.cols);
    if n < 2 || p == 0 {
        return Err(Error::Infeasible { k: p.max(1), n });
    }

    let mut means = vec![0.0; p];
    for row in x.iter_rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);

    let mut centered = x.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&means) {
            *v -= m;
        }
    }

    let mut cov = Matrix::zeros(p, p);
    for row in centered.iter_rows() {
        for a in 0..p {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            for b in a..p {
                cov[(a, b)] += ra * row[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = symmetric_eigen(&cov);
    let half = p.div_ceil(2);
    let total: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();

    if total <= 0.0 {
        return Ok(PcaScores {
            scores: Matrix::zeros(n, half),
            n_components: half,
            eigenvalues: eig.values,
        });
    }

    let mut cumulative = 0.0;
    let mut q_threshold = p;
    for (k, v) in eig.values.iter().enumerate() {
        cumulative += v.max(0.0);
        // relative slack absorbs roundoff when eigenvalues tie exactly
        if cumulative / total >= var_threshold - 1e-12 {
            q_threshold = k + 1;
            break;
        }
    }
    let q = q_threshold.max(half);

    let mut scores = Matrix::zeros(n, q);
    for i in 0..n {
        let row = centered.row(i);
        for c in 0..q {
            let mut s = 0.0;
            for (a, &v) in row.iter().enumerate() {
                s += v * eig.vectors[(a, c)];
            }
            scores[(i, c)] = s;
        }
    }

    Ok(PcaScores {
        scores,
        n_components: q,
        eigenvalues: eig.values,
    })
}
