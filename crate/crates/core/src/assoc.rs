//! Per-CpG linear association statistics.
//!
//! Every CpG is regressed on the same design `[1, covariates..., group]`, so
//! the design is factorized once (thin QR) and each response only needs
//! `k` dot products for its projection plus one pass for the residuals.
//! With the group indicator as the last design column, its coefficient is
//! `(Q'y)_k / R_kk` and `((X'X)^-1)_kk = 1 / R_kk^2`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{DmsegError, Result};
use crate::ingest::{AnalysisDataset, PhenotypeTable, Scale};

/// Residual variance below which a CpG is flagged as degenerate.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

const RANK_TOL: f64 = 1e-10;

/// Factorized design shared by every CpG regression.
#[derive(Debug, Clone)]
pub struct DesignSummary {
    n_samples: usize,
    n_predictors: usize,
    /// Orthonormal basis of the design column space, column-major `n x k`.
    q: Vec<f64>,
    r_effect: f64,
}

impl DesignSummary {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_predictors(&self) -> usize {
        self.n_predictors
    }

    /// Index of the group indicator among the design columns.
    pub fn effect_column(&self) -> usize {
        self.n_predictors - 1
    }

    pub fn residual_df(&self) -> usize {
        self.n_samples - self.n_predictors
    }

    /// `((X'X)^-1)` entry for the group coefficient.
    pub fn effect_variance_factor(&self) -> f64 {
        1.0 / (self.r_effect * self.r_effect)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpGAssociation {
    pub beta1: f64,
    pub se: f64,
    /// `beta1 / se`, or 0 for degenerate CpGs.
    pub z: f64,
    pub degenerate: bool,
}

impl CpGAssociation {
    pub fn variance(&self) -> f64 {
        self.se * self.se
    }
}

pub fn build_design(phenotypes: &PhenotypeTable) -> Result<DesignSummary> {
    build_design_from(phenotypes.group(), phenotypes.covariates())
}

/// Builds the design for an arbitrary 0/1 labelling with fixed covariates.
pub fn build_design_from(group: &[u8], covariates: &[Vec<f64>]) -> Result<DesignSummary> {
    let n = group.len();
    let k = covariates.len() + 2;
    if n < k + 2 {
        return Err(DmsegError::TooFewSamples {
            needed: k + 2,
            found: n,
        });
    }
    let x = DMatrix::from_fn(n, k, |i, j| match j {
        0 => 1.0,
        j if j == k - 1 => f64::from(group[i]),
        j => covariates[j - 1][i],
    });
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let norm = x.column(j).norm();
        if r[(j, j)].abs() <= RANK_TOL * norm.max(1.0) {
            let what = match j {
                0 => "intercept".to_owned(),
                j if j == k - 1 => "group indicator".to_owned(),
                j => format!("covariate {}", j - 1),
            };
            return Err(DmsegError::RankDeficient(format!(
                "{what} is collinear with earlier design columns"
            )));
        }
    }
    let q = qr.q();
    Ok(DesignSummary {
        n_samples: n,
        n_predictors: k,
        q: q.as_slice().to_vec(),
        r_effect: r[(k - 1, k - 1)],
    })
}

/// Least-squares fit of one response on the shared design.
pub fn fit_row(y: &[f64], design: &DesignSummary) -> CpGAssociation {
    let n = design.n_samples;
    let k = design.n_predictors;
    debug_assert_eq!(y.len(), n);

    if y.iter().all(|&v| v == y[0]) {
        return CpGAssociation {
            beta1: 0.0,
            se: 0.0,
            z: 0.0,
            degenerate: true,
        };
    }

    let mut proj = [0.0f64; 8];
    let mut proj_heap;
    let coef: &mut [f64] = if k <= proj.len() {
        &mut proj[..k]
    } else {
        proj_heap = vec![0.0; k];
        &mut proj_heap
    };
    for (j, c) in coef.iter_mut().enumerate() {
        let qj = &design.q[j * n..(j + 1) * n];
        *c = qj.iter().zip(y).map(|(a, b)| a * b).sum();
    }
    let mut rss = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let mut fitted = 0.0;
        for (j, &c) in coef.iter().enumerate() {
            fitted += design.q[j * n + i] * c;
        }
        let e = yi - fitted;
        rss += e * e;
    }
    let sigma2 = rss / design.residual_df() as f64;
    let beta1 = coef[k - 1] / design.r_effect;
    let se = sigma2.sqrt() / design.r_effect.abs();
    let degenerate = sigma2 < DEGENERATE_VARIANCE;
    CpGAssociation {
        beta1,
        se,
        z: if degenerate { 0.0 } else { beta1 / se },
        degenerate,
    }
}

/// Fits every row of a row-major matrix with `design.n_samples()` columns.
pub fn fit_matrix(values: &[f64], design: &DesignSummary) -> Vec<CpGAssociation> {
    values
        .par_chunks(design.n_samples)
        .with_min_len(256)
        .map(|row| fit_row(row, design))
        .collect()
}

pub fn fit_all_cpgs(dataset: &AnalysisDataset, design: &DesignSummary) -> Vec<CpGAssociation> {
    fit_matrix(dataset.matrix().values(), design)
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let m = v.len() / 2;
    let (_, upper, _) = v.select_nth_unstable_by(m, f64::total_cmp);
    let upper = *upper;
    if v.len() % 2 == 1 {
        upper
    } else {
        // largest element of the lower half
        let lower = v[..m].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Absolute deviations of one row from its group medians, written into `out`.
/// `scratch` is reused between calls to avoid allocation.
pub fn levene_row(y: &[f64], labels: &[u8], out: &mut [f64], scratch: &mut Vec<f64>) {
    let mut medians = [0.0; 2];
    for (g, m) in medians.iter_mut().enumerate() {
        scratch.clear();
        scratch.extend(
            y.iter()
                .zip(labels)
                .filter(|(_, &l)| l as usize == g)
                .map(|(&v, _)| v),
        );
        *m = median_in_place(scratch);
    }
    for ((o, &v), &l) in out.iter_mut().zip(y).zip(labels) {
        *o = (v - medians[l as usize]).abs();
    }
}

/// Brown-Forsythe transform of the whole matrix under the supplied labels.
/// Requires M-values.
pub fn levene_transform(dataset: &AnalysisDataset, labels: &[u8]) -> Result<Vec<f64>> {
    if dataset.scale() != Scale::MValue {
        return Err(DmsegError::ScaleMismatch);
    }
    let n = dataset.n_samples();
    if labels.len() != n {
        return Err(DmsegError::InvalidConfig(format!(
            "{} labels for {n} samples",
            labels.len()
        )));
    }
    for g in 0..2u8 {
        let count = labels.iter().filter(|&&l| l == g).count();
        if count < 2 {
            return Err(DmsegError::SingletonGroup {
                label: g.to_string(),
                count,
            });
        }
    }
    let mut out = vec![0.0; dataset.matrix().values().len()];
    out.par_chunks_mut(n)
        .zip(dataset.matrix().values().par_chunks(n))
        .for_each_init(Vec::new, |scratch, (o, y)| levene_row(y, labels, o, scratch));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GROUPS: [u8; 6] = [0, 0, 0, 1, 1, 1];

    #[test]
    fn design_shape() {
        let d = build_design_from(&GROUPS, &[]).unwrap();
        assert_eq!(d.n_predictors(), 2);
        assert_eq!(d.residual_df(), 4);
        assert_eq!(d.effect_column(), 1);
    }

    #[test]
    fn covariate_equal_to_group_is_rank_deficient() {
        let cov = vec![GROUPS.iter().map(|&g| f64::from(g)).collect::<Vec<_>>()];
        assert!(matches!(
            build_design_from(&GROUPS, &cov),
            Err(DmsegError::RankDeficient(_))
        ));
        let a = vec![2.0, 4.0, 6.0, 1.0, 3.0, 5.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        assert!(matches!(
            build_design_from(&GROUPS, &[a, b]),
            Err(DmsegError::RankDeficient(_)) | Err(DmsegError::TooFewSamples { .. })
        ));
        let g8 = [0, 0, 0, 0, 1, 1, 1, 1];
        let a = vec![2.0, 4.0, 6.0, 1.0, 3.0, 5.0, 0.5, 9.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!(matches!(
            build_design_from(&g8, &[a, b]),
            Err(DmsegError::RankDeficient(_))
        ));
    }

    #[test]
    fn hand_computed_two_group_fit() {
        let d = build_design_from(&GROUPS, &[]).unwrap();
        let a = fit_row(&[0.1, 0.2, 0.15, 0.4, 0.5, 0.45], &d);
        // group means 0.15 / 0.45, pooled s^2 = 0.01 / 4, se = sqrt(2 s^2 / 3)
        assert!((a.beta1 - 0.3).abs() < 1e-12);
        assert!((a.se - 0.040824829046386304).abs() < 1e-12);
        assert!((a.z - a.beta1 / a.se).abs() == 0.0);
        assert!(!a.degenerate);
    }

    #[test]
    fn degenerate_rows() {
        let d = build_design_from(&GROUPS, &[]).unwrap();
        let c = fit_row(&[0.3; 6], &d);
        assert_eq!(c.beta1, 0.0);
        assert!(c.degenerate);
        assert_eq!(c.z, 0.0);

        let g = fit_row(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], &d);
        assert!((g.beta1 - 1.0).abs() < 1e-12);
        assert!(g.degenerate);
        assert_eq!(g.z, 0.0);
    }

    #[test]
    fn levene_row_uses_group_medians() {
        let y = [1.0, 2.0, 3.0, 0.0, 0.0, 0.0];
        let mut out = [0.0; 6];
        levene_row(&y, &GROUPS, &mut out, &mut Vec::new());
        assert_eq!(&out[..3], &[1.0, 0.0, 1.0]);
        assert_eq!(&out[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn levene_even_group_median_and_effect() {
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let y = [0.0, 0.0, 0.0, 0.0, -2.0, -1.0, 1.0, 2.0];
        let mut out = [0.0; 8];
        levene_row(&y, &labels, &mut out, &mut Vec::new());
        assert_eq!(out, [0.0, 0.0, 0.0, 0.0, 2.0, 1.0, 1.0, 2.0]);
        let d = build_design_from(&labels, &[]).unwrap();
        assert!((fit_row(&out, &d).beta1 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn median_helper() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_in_place(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median_in_place(&mut [5.0]), 5.0);
    }

    #[test]
    fn many_covariates_use_heap_buffer() {
        let n = 30;
        let group: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let covs: Vec<Vec<f64>> = (0..8)
            .map(|c| (0..n).map(|i| (i as f64 * (0.3 + 0.17 * c as f64)).sin()).collect())
            .collect();
        let d = build_design_from(&group, &covs).unwrap();
        assert_eq!(d.n_predictors(), 10);
        let y: Vec<f64> = (0..n).map(|i| (i as f64).sin() + f64::from(group[i])).collect();
        let a = fit_row(&y, &d);
        assert!(a.se > 0.0 && a.beta1.is_finite());
    }
}
