//! Reference implementations written without reusing library code paths.
#![allow(dead_code)]

use std::ops::Range;

/// Per-CpG regression of `y` on `[1, covariates.., group]` by normal equations
/// and Gauss-Jordan inversion. Returns (group coefficient, its standard error).
pub fn naive_ols(y: &[f64], group: &[u8], covariates: &[Vec<f64>]) -> (f64, f64) {
    let n = y.len();
    let k = covariates.len() + 2;
    let x = |i: usize, j: usize| -> f64 {
        if j == 0 {
            1.0
        } else if j == k - 1 {
            group[i] as f64
        } else {
            covariates[j - 1][i]
        }
    };
    // augmented [X'X | I]
    let mut a = vec![vec![0.0; 2 * k]; k];
    for (r, row) in a.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().take(k).enumerate() {
            *v = (0..n).map(|i| x(i, r) * x(i, c)).sum();
        }
        row[k + r] = 1.0;
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    let pivot_row = a[col].clone();
                    for (v, p) in a[r].iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    let inv = |r: usize, c: usize| a[r][k + c];
    let xty: Vec<f64> = (0..k).map(|j| (0..n).map(|i| x(i, j) * y[i]).sum()).collect();
    let coef: Vec<f64> = (0..k).map(|r| (0..k).map(|c| inv(r, c) * xty[c]).sum()).collect();
    let rss: f64 = (0..n)
        .map(|i| {
            let fit: f64 = (0..k).map(|j| x(i, j) * coef[j]).sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    let s2 = rss / (n - k) as f64;
    (coef[k - 1], (s2 * inv(k - 1, k - 1)).sqrt())
}

/// Two-pass Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Partition of sites into clusters by checking every pair: sites `i < j` share
/// a cluster iff they share a chromosome and every link between them holds.
/// `link[k]` says whether sites `k` and `k + 1` are joined.
pub fn brute_force_partition(chromosomes: &[&str], link: &[bool]) -> Vec<Vec<usize>> {
    let n = chromosomes.len();
    let together = |i: usize, j: usize| chromosomes[i] == chromosomes[j] && (i..j).all(|k| link[k]);
    let mut owner: Vec<usize> = (0..n).collect();
    for j in 0..n {
        if let Some(i) = (0..j).find(|&i| together(i, j)) {
            owner[j] = owner[i];
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (j, &o) in owner.iter().enumerate() {
        match groups.iter_mut().find(|g| g[0] == o) {
            Some(g) => g.push(j),
            None => groups.push(vec![j]),
        }
    }
    groups
}

/// Walks sites in order and opens a new cluster at each chromosome change or
/// gap of at least `max_gap`.
pub fn gap_scan(chromosomes: &[&str], positions: &[u64], max_gap: u64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..positions.len() {
        let new = i == 0 || chromosomes[i] != chromosomes[i - 1] || positions[i] - positions[i - 1] >= max_gap;
        if new {
            out.push(vec![i]);
        } else {
            out.last_mut().unwrap().push(i);
        }
    }
    out
}

/// Enumerates every contiguous span and keeps the maximal ones that start and
/// end on a hit and whose non-hits are single CpGs at or above the bridge
/// threshold with hits on both sides.
pub fn exhaustive_segments(z: &[f64], z_main: f64, z_bridge: f64, min_cpgs: usize) -> Vec<Range<usize>> {
    let hit = |i: usize| z[i].abs() >= z_main;
    let valid = |a: usize, b: usize| {
        hit(a)
            && hit(b)
            && (a..=b).all(|i| hit(i) || (z[i].abs() >= z_bridge && i > a && i < b && hit(i - 1) && hit(i + 1)))
    };
    let n = z.len();
    let mut spans = Vec::new();
    for a in 0..n {
        for b in a..n {
            if valid(a, b) {
                spans.push((a, b));
            }
        }
    }
    let maximal: Vec<(usize, usize)> = spans
        .iter()
        .copied()
        .filter(|&(a, b)| !spans.iter().any(|&(c, d)| c <= a && b <= d && (c, d) != (a, b)))
        .collect();
    let mut out: Vec<Range<usize>> = maximal
        .into_iter()
        .filter(|&(a, b)| b - a + 1 >= min_cpgs)
        .map(|(a, b)| a..b + 1)
        .collect();
    out.sort_by_key(|r| r.start);
    out
}

/// Closed form of the segment statistic in plain double precision.
pub fn lrt_closed_form(betas: &[f64], variances: &[f64]) -> (f64, f64) {
    let sw: f64 = variances.iter().map(|v| 1.0 / v).sum();
    let swb: f64 = betas.iter().zip(variances).map(|(b, v)| b / v).sum();
    let m = swb / sw;
    (m, m * m * sw)
}
