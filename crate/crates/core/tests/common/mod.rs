//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's numeric code.

#![allow(dead_code)]

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Ridge fit on population-standardized columns with an unpenalized
/// intercept, via the normal equations.
#[derive(Debug, Clone)]
pub struct OracleFit {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl OracleFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .enumerate()
                .map(|(j, v)| self.beta[j] * (v - self.means[j]) / self.scales[j])
                .sum::<f64>()
    }
}

/// `columns[j][i]` is row `i` of feature `j`. `None` when a column is
/// constant or the system is singular.
pub fn ridge_oracle(columns: &[Vec<f64>], y: &[f64], lambda: f64) -> Option<OracleFit> {
    let n = y.len();
    let p = columns.len();
    let nf = n as f64;
    let intercept = y.iter().sum::<f64>() / nf;
    let mut means = Vec::new();
    let mut scales = Vec::new();
    let mut z: Vec<Vec<f64>> = Vec::new();
    for c in columns {
        let m = c.iter().sum::<f64>() / nf;
        let s = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf).sqrt();
        if s <= 1e-12 * m.abs().max(1.0) {
            return None;
        }
        z.push(c.iter().map(|v| (v - m) / s).collect());
        means.push(m);
        scales.push(s);
    }
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for j in 0..p {
        for k in 0..p {
            a[j][k] = (0..n).map(|i| z[j][i] * z[k][i]).sum();
        }
        a[j][j] += lambda;
        b[j] = (0..n).map(|i| z[j][i] * (y[i] - intercept)).sum();
    }
    let beta = if p == 0 { Vec::new() } else { gauss_solve(a, b)? };
    Some(OracleFit {
        intercept,
        beta,
        means,
        scales,
    })
}

/// Contiguous folds; the first `n % k` get one extra row.
pub fn oracle_folds(n: usize, k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for f in 0..k {
        let len = n / k + if f < n % k { 1 } else { 0 };
        out.push((start, start + len));
        start += len;
    }
    out
}

/// Mean of per-fold held-out MSEs; `None` when some fold cannot be fitted.
pub fn oracle_cv(columns: &[Vec<f64>], y: &[f64], lambda: f64, k: usize) -> Option<f64> {
    let n = y.len();
    if n < k * (columns.len() + 2) {
        return None;
    }
    let mut total = 0.0;
    for (lo, hi) in oracle_folds(n, k) {
        let keep: Vec<usize> = (0..n).filter(|i| *i < lo || *i >= hi).collect();
        let cols: Vec<Vec<f64>> = columns
            .iter()
            .map(|c| keep.iter().map(|&i| c[i]).collect())
            .collect();
        let yt: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
        let fit = ridge_oracle(&cols, &yt, lambda)?;
        let mut sse = 0.0;
        for i in lo..hi {
            let row: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            sse += (y[i] - fit.predict(&row)).powi(2);
        }
        total += sse / (hi - lo) as f64;
    }
    Some(total / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleStep {
    pub id: String,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSelection {
    pub steps: Vec<OracleStep>,
    pub selected: Vec<String>,
    /// "ConsecutiveFailures", "CandidatesExhausted" or "MaxCandidates".
    pub stop: &'static str,
}

/// Greedy forward selection written out step by step. Gains below one
/// part in 1e12 are ties.
pub fn greedy_oracle(
    order: &[(String, Vec<f64>)],
    y: &[f64],
    lambda: f64,
    folds: usize,
    patience: usize,
    max_candidates: usize,
) -> OracleSelection {
    let limit = if patience == 0 { 1 } else { patience };
    let mut best = oracle_cv(&[], y, lambda, folds).expect("baseline");
    let mut chosen: Vec<Vec<f64>> = Vec::new();
    let mut selected = Vec::new();
    let mut steps = Vec::new();
    let mut misses = 0;
    for (evaluated, (id, col)) in order.iter().enumerate() {
        if evaluated == max_candidates {
            return OracleSelection {
                steps,
                selected,
                stop: "MaxCandidates",
            };
        }
        let mut trial = chosen.clone();
        trial.push(col.clone());
        let score = oracle_cv(&trial, y, lambda, folds);
        let accepted = matches!(score, Some(s) if s < best * (1.0 - 1e-12));
        steps.push(OracleStep {
            id: id.clone(),
            accepted,
        });
        if accepted {
            best = score.unwrap();
            chosen = trial;
            selected.push(id.clone());
            misses = 0;
        } else {
            misses += 1;
            if misses >= limit {
                return OracleSelection {
                    steps,
                    selected,
                    stop: "ConsecutiveFailures",
                };
            }
        }
    }
    OracleSelection {
        steps,
        selected,
        stop: "CandidatesExhausted",
    }
}

/// Plain Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Peak resident set size of this process in bytes.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
