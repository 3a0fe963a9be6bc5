//! Grouping of coordinate-adjacent CpGs into clusters.
//!
//! Two neighbouring CpGs on the same chromosome are joined when they are
//! closer than `max_gap_bp` or when their across-sample Pearson correlation
//! exceeds `corr_min`. Clusters are the maximal runs of joined neighbours.

use std::ops::Range;

use log::debug;
use rayon::prelude::*;

use crate::error::{DmsegError, Result};
use crate::ingest::{AnalysisDataset, CpGAnnotation};

pub const DEFAULT_MAX_GAP_BP: u64 = 500;
pub const DEFAULT_CORR_MIN: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacentPairStats {
    pub left_index: usize,
    pub right_index: usize,
    pub gap_bp: u64,
    pub correlation: f64,
    /// Set when either row is constant; `correlation` is then 0.
    pub constant_row: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub cluster_id: usize,
    pub chromosome: String,
    /// Contiguous dataset row indices.
    pub members: Range<usize>,
    /// Internal adjacencies that were joined only because of correlation.
    pub correlation_joins: usize,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Pearson correlation, or `None` when either vector has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Gap and correlation for every consecutive same-chromosome pair of rows.
pub fn adjacent_pair_stats(dataset: &AnalysisDataset) -> Result<Vec<AdjacentPairStats>> {
    if dataset.n_samples() < 3 {
        return Err(DmsegError::TooFewSamples {
            needed: 3,
            found: dataset.n_samples(),
        });
    }
    let ann = dataset.annotations();
    let matrix = dataset.matrix();
    let stats = (1..ann.len())
        .into_par_iter()
        .filter(|&i| ann[i - 1].chromosome == ann[i].chromosome)
        .map(|i| {
            let r = pearson(matrix.row(i - 1), matrix.row(i));
            AdjacentPairStats {
                left_index: i - 1,
                right_index: i,
                gap_bp: ann[i].position - ann[i - 1].position,
                correlation: r.unwrap_or(0.0),
                constant_row: r.is_none(),
            }
        })
        .collect();
    Ok(stats)
}

#[inline]
fn joins(pair: &AdjacentPairStats, max_gap_bp: u64, corr_min: f64) -> bool {
    pair.gap_bp < max_gap_bp || pair.correlation > corr_min
}

pub fn build_clusters(
    dataset: &AnalysisDataset,
    pair_stats: &[AdjacentPairStats],
    max_gap_bp: u64,
    corr_min: f64,
) -> Vec<Cluster> {
    build_clusters_from_annotations(dataset.annotations(), pair_stats, max_gap_bp, corr_min)
}

/// Clusters the rows described by `annotations` (already coordinate sorted).
/// Pairs missing from `pair_stats` are treated as not joined.
pub fn build_clusters_from_annotations(
    annotations: &[CpGAnnotation],
    pair_stats: &[AdjacentPairStats],
    max_gap_bp: u64,
    corr_min: f64,
) -> Vec<Cluster> {
    let n = annotations.len();
    if n == 0 {
        return Vec::new();
    }
    let mut pair_at: Vec<Option<&AdjacentPairStats>> = vec![None; n];
    for p in pair_stats {
        debug_assert_eq!(p.right_index, p.left_index + 1);
        pair_at[p.left_index] = Some(p);
    }

    let mut clusters = Vec::new();
    let mut start = 0;
    let mut corr_joins = 0;
    for i in 1..=n {
        let joined = i < n
            && annotations[i - 1].chromosome == annotations[i].chromosome
            && pair_at[i - 1].is_some_and(|p| joins(p, max_gap_bp, corr_min));
        if joined {
            let p = pair_at[i - 1].unwrap();
            if p.gap_bp >= max_gap_bp {
                corr_joins += 1;
            }
            continue;
        }
        clusters.push(Cluster {
            cluster_id: clusters.len(),
            chromosome: annotations[start].chromosome.clone(),
            members: start..i,
            correlation_joins: corr_joins,
        });
        start = i;
        corr_joins = 0;
    }
    debug!("{} clusters from {n} CpGs", clusters.len());
    clusters
}

/// Drops clusters smaller than `min_size`; ids are kept as assigned.
pub fn filter_clusters(clusters: Vec<Cluster>, min_size: usize) -> Vec<Cluster> {
    clusters.into_iter().filter(|c| c.size() >= min_size).collect()
}

/// Median adjacent correlation among pairs joined by the gap rule alone.
pub fn auto_corr_threshold(pair_stats: &[AdjacentPairStats], max_gap_bp: u64) -> Option<f64> {
    let mut r: Vec<f64> = pair_stats
        .iter()
        .filter(|p| p.gap_bp < max_gap_bp && !p.constant_row)
        .map(|p| p.correlation)
        .collect();
    if r.is_empty() {
        return None;
    }
    r.sort_by(f64::total_cmp);
    let m = r.len() / 2;
    Some(if r.len() % 2 == 1 {
        r[m]
    } else {
        0.5 * (r[m - 1] + r[m])
    })
}

/// Counts reported in run logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterSummary {
    pub gap_only: usize,
    pub merged: usize,
    pub with_correlation_joins: usize,
    pub retained: usize,
}

pub fn summarize(
    annotations: &[CpGAnnotation],
    pair_stats: &[AdjacentPairStats],
    clusters: &[Cluster],
    max_gap_bp: u64,
    min_size: usize,
) -> ClusterSummary {
    let gap_only =
        build_clusters_from_annotations(annotations, pair_stats, max_gap_bp, f64::INFINITY).len();
    ClusterSummary {
        gap_only,
        merged: clusters.len(),
        with_correlation_joins: clusters.iter().filter(|c| c.correlation_joins > 0).count(),
        retained: clusters.iter().filter(|c| c.size() >= min_size).count(),
    }
}
