//! Permutation significance with cluster-size stratified null pools.
//!
//! Group labels are permuted (covariates stay attached to their samples),
//! CpG statistics and segments are recomputed, and each cluster contributes
//! its maximum segment LRT (or a "no finding" zero) to the pool of its size
//! stratum. Observed segments get p-values from their stratum's pool, and
//! family-wise error rates come from the per-permutation minimum p-value.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assoc::{build_design_from, fit_row, levene_row, CpGAssociation, DesignSummary};
use crate::cluster::Cluster;
use crate::error::{DmsegError, Result};
use crate::ingest::{AnalysisDataset, CpGAnnotation, PhenotypeTable, Scale};
use crate::segment::{max_segment_lrt, Mode, ScanOutcome, Segment, SegmentParams};

/// Upper bounds of the cluster-size strata; the last stratum is open-ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strata {
    upper: Vec<usize>,
}

impl Default for Strata {
    fn default() -> Self {
        Strata {
            upper: vec![10, 20, 40],
        }
    }
}

impl Strata {
    pub fn new(mut upper: Vec<usize>) -> Result<Self> {
        upper.sort_unstable();
        upper.dedup();
        if upper.first() == Some(&0) {
            return Err(DmsegError::InvalidConfig("stratum bound 0".into()));
        }
        Ok(Strata { upper })
    }

    pub fn len(&self) -> usize {
        self.upper.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, cluster_size: usize) -> usize {
        self.upper.partition_point(|&u| u < cluster_size)
    }

    pub fn bounds(&self, index: usize) -> StratumBounds {
        StratumBounds {
            lower: if index == 0 { 0 } else { self.upper[index - 1] },
            upper: self.upper.get(index).copied(),
        }
    }

    pub fn upper_bounds(&self) -> &[usize] {
        &self.upper
    }
}

impl FromStr for Strata {
    type Err = DmsegError;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| DmsegError::InvalidConfig(format!("invalid stratum bound '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Strata::new(upper)
    }
}

impl fmt::Display for Strata {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.upper.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Half-open cluster-size interval `(lower, upper]`; `upper = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StratumBounds {
    pub lower: usize,
    pub upper: Option<usize>,
}

impl fmt::Display for StratumBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.upper {
            Some(u) => write!(f, "({},{}]", self.lower, u),
            None => write!(f, "({},inf)", self.lower),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PermutationPlan {
    seed: u64,
    labels: Vec<Vec<u8>>,
}

impl PermutationPlan {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn labels(&self, index: usize) -> &[u8] {
        &self.labels[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.labels.iter().map(Vec::as_slice)
    }
}

pub fn make_plan(phenotypes: &PhenotypeTable, n_permutations: usize, seed: u64) -> Result<PermutationPlan> {
    make_plan_from_labels(phenotypes.group(), n_permutations, seed)
}

/// Permutation `i` shuffles `observed` with ChaCha8 stream `i` under `seed`,
/// so each ordering depends only on `(seed, i)`.
pub fn make_plan_from_labels(observed: &[u8], n_permutations: usize, seed: u64) -> Result<PermutationPlan> {
    if n_permutations == 0 {
        return Err(DmsegError::InvalidPlan("at least one permutation is required".into()));
    }
    let labels = (0..n_permutations)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut perm = observed.to_vec();
            perm.shuffle(&mut rng);
            perm
        })
        .collect();
    Ok(PermutationPlan { seed, labels })
}

/// Null draws for one stratum: positive LRTs plus a count of no-finding draws.
#[derive(Debug, Clone, PartialEq)]
pub struct NullPool {
    pub stratum: StratumBounds,
    /// Sorted ascending; every entry is a cluster maximum from one permutation.
    pub null_lrts: Vec<f64>,
    pub zero_count: usize,
    pub n_clusters: usize,
}

impl NullPool {
    pub fn total_draws(&self) -> usize {
        self.null_lrts.len() + self.zero_count
    }

    /// Fraction of draws that produced a segment.
    pub fn finding_fraction(&self) -> f64 {
        self.null_lrts.len() as f64 / self.total_draws().max(1) as f64
    }

    /// Empirical quantile of the draws with no-finding draws counted as 0.
    pub fn quantile(&self, q: f64) -> f64 {
        let total = self.total_draws();
        if total == 0 {
            return 0.0;
        }
        let rank = ((q * total as f64).ceil() as usize).clamp(1, total);
        if rank <= self.zero_count {
            0.0
        } else {
            self.null_lrts[rank - self.zero_count - 1]
        }
    }

    fn count_at_least(&self, x: f64) -> usize {
        let above = self.null_lrts.len() - self.null_lrts.partition_point(|&v| v < x);
        if x <= 0.0 {
            above + self.zero_count
        } else {
            above
        }
    }
}

/// `(1 + #draws >= observed) / (1 + total draws)`; `None` (no segment) gives 1.
pub fn p_value(observed_lrt: Option<f64>, pool: &NullPool) -> Result<f64> {
    let total = pool.total_draws();
    if total == 0 {
        return Err(DmsegError::EmptyPool);
    }
    Ok(match observed_lrt {
        None => 1.0,
        Some(x) => (1 + pool.count_at_least(x)) as f64 / (1 + total) as f64,
    })
}

/// Stratified null from a full permutation run.
#[derive(Debug, Clone)]
pub struct NullDistribution {
    pub pools: Vec<NullPool>,
    /// For each permutation, the largest cluster maximum in each stratum.
    pub stratum_max: Vec<Vec<Option<f64>>>,
}

impl NullDistribution {
    pub fn n_permutations(&self) -> usize {
        self.stratum_max.len()
    }

    /// Smallest stratified p-value in each permutation (1 when nothing was found).
    pub fn per_permutation_min_p(&self) -> Vec<f64> {
        self.stratum_max
            .iter()
            .map(|maxima| {
                maxima
                    .iter()
                    .zip(&self.pools)
                    .filter_map(|(m, pool)| m.map(|x| p_value(Some(x), pool)))
                    .map(|p| p.expect("pools with clusters are non-empty"))
                    .fold(1.0, f64::min)
            })
            .collect()
    }
}

struct RowScratch {
    transformed: Vec<f64>,
    medians: Vec<f64>,
    stats: Vec<CpGAssociation>,
    z: Vec<f64>,
}

impl RowScratch {
    fn new(n: usize) -> Self {
        RowScratch {
            transformed: vec![0.0; n],
            medians: Vec::with_capacity(n),
            stats: Vec::new(),
            z: Vec::new(),
        }
    }
}

fn check_mode(dataset: &AnalysisDataset, mode: Mode) -> Result<()> {
    if mode == Mode::Vmr && dataset.scale() != Scale::MValue {
        return Err(DmsegError::ScaleMismatch);
    }
    Ok(())
}

fn cluster_max_with(
    dataset: &AnalysisDataset,
    design: &DesignSummary,
    labels: &[u8],
    cluster: &Cluster,
    mode: Mode,
    params: &SegmentParams,
    scratch: &mut RowScratch,
) -> Option<f64> {
    let matrix = dataset.matrix();
    scratch.stats.clear();
    for i in cluster.members.clone() {
        let row = matrix.row(i);
        let stat = match mode {
            Mode::Dmr => fit_row(row, design),
            Mode::Vmr => {
                levene_row(row, labels, &mut scratch.transformed, &mut scratch.medians);
                fit_row(&scratch.transformed, design)
            }
        };
        scratch.stats.push(stat);
    }
    max_segment_lrt(&scratch.stats, &mut scratch.z, params)
}

/// Maximum segment LRT of every cluster when the data are analysed with `labels`.
pub fn cluster_maxima(
    dataset: &AnalysisDataset,
    clusters: &[Cluster],
    labels: &[u8],
    mode: Mode,
    params: &SegmentParams,
) -> Result<Vec<Option<f64>>> {
    check_mode(dataset, mode)?;
    let design = build_design_from(labels, dataset.phenotypes().covariates())?;
    let mut scratch = RowScratch::new(dataset.n_samples());
    Ok(clusters
        .iter()
        .map(|c| cluster_max_with(dataset, &design, labels, c, mode, params, &mut scratch))
        .collect())
}

/// Runs every permutation of `plan` and pools cluster maxima by stratum.
pub fn null_scan(
    dataset: &AnalysisDataset,
    clusters: &[Cluster],
    plan: &PermutationPlan,
    mode: Mode,
    params: &SegmentParams,
    strata: &Strata,
) -> Result<NullDistribution> {
    check_mode(dataset, mode)?;
    let stratum_of: Vec<usize> = clusters.iter().map(|c| strata.index_of(c.size())).collect();
    let n_strata = strata.len();
    let covariates = dataset.phenotypes().covariates();

    // one entry per permutation: positive draws and maximum for each stratum
    type Draws = (Vec<Vec<f64>>, Vec<Option<f64>>);
    let per_perm: Vec<Draws> = plan
        .labels
        .par_iter()
        .map_init(
            || RowScratch::new(dataset.n_samples()),
            |scratch, labels| -> Result<Draws> {
                let design = build_design_from(labels, covariates)?;
                let mut draws = vec![Vec::new(); n_strata];
                let mut maxima = vec![None; n_strata];
                for (c, &s) in clusters.iter().zip(&stratum_of) {
                    if let Some(x) = cluster_max_with(dataset, &design, labels, c, mode, params, scratch) {
                        draws[s].push(x);
                        let m: &mut Option<f64> = &mut maxima[s];
                        *m = Some(m.map_or(x, |cur: f64| cur.max(x)));
                    }
                }
                Ok((draws, maxima))
            },
        )
        .collect::<Result<_>>()?;

    let mut pools: Vec<NullPool> = (0..n_strata)
        .map(|s| NullPool {
            stratum: strata.bounds(s),
            null_lrts: Vec::new(),
            zero_count: 0,
            n_clusters: stratum_of.iter().filter(|&&x| x == s).count(),
        })
        .collect();
    let mut stratum_max = Vec::with_capacity(per_perm.len());
    for (draws, maxima) in per_perm {
        for (pool, d) in pools.iter_mut().zip(draws) {
            pool.null_lrts.extend(d);
        }
        stratum_max.push(maxima);
    }
    let b = plan.len();
    for pool in &mut pools {
        pool.null_lrts.sort_by(f64::total_cmp);
        pool.zero_count = pool.n_clusters * b - pool.null_lrts.len();
    }
    Ok(NullDistribution { pools, stratum_max })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionResult {
    pub segment: Segment,
    pub chromosome: String,
    pub start_probe: String,
    pub end_probe: String,
    pub start_pos: u64,
    pub end_pos: u64,
    pub cluster_size: usize,
    pub stratum: StratumBounds,
    pub stratum_draws: usize,
    pub p_value: f64,
    pub fwer: f64,
}

/// `#{permutations with min p <= p} / B` for every result.
pub fn fwer(results: &mut [RegionResult], per_permutation_min_p: &[f64]) {
    let mut sorted = per_permutation_min_p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len().max(1) as f64;
    for r in results {
        r.fwer = sorted.partition_point(|&m| m <= r.p_value) as f64 / b;
    }
}

#[derive(Debug, Clone)]
pub struct SignificanceReport {
    /// Sorted by FWER, then p-value, then descending LRT.
    pub results: Vec<RegionResult>,
    pub null: NullDistribution,
    pub min_p: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn run_significance(
    dataset: &AnalysisDataset,
    clusters: &[Cluster],
    observed: &ScanOutcome,
    params: &SegmentParams,
    n_permutations: usize,
    seed: u64,
    mode: Mode,
    strata: &Strata,
) -> Result<SignificanceReport> {
    let plan = make_plan(dataset.phenotypes(), n_permutations, seed)?;
    let null = null_scan(dataset, clusters, &plan, mode, params, strata)?;
    let min_p = null.per_permutation_min_p();

    let size_of: std::collections::HashMap<usize, usize> =
        clusters.iter().map(|c| (c.cluster_id, c.size())).collect();
    let ann = dataset.annotations();
    let mut results = observed
        .segments
        .iter()
        .map(|seg| {
            let size = *size_of.get(&seg.cluster_id).ok_or_else(|| {
                DmsegError::InvalidConfig(format!("segment in unknown cluster {}", seg.cluster_id))
            })?;
            let s = strata.index_of(size);
            let pool = &null.pools[s];
            Ok(region_result(ann, seg, size, pool, p_value(Some(seg.lrt), pool)?))
        })
        .collect::<Result<Vec<_>>>()?;
    fwer(&mut results, &min_p);
    sort_results(&mut results);
    Ok(SignificanceReport {
        results,
        null,
        min_p,
    })
}

pub(crate) fn region_result(
    ann: &[CpGAnnotation],
    seg: &Segment,
    cluster_size: usize,
    pool: &NullPool,
    p: f64,
) -> RegionResult {
    let (first, last) = (&ann[seg.start_index], &ann[seg.end_index]);
    RegionResult {
        segment: seg.clone(),
        chromosome: first.chromosome.clone(),
        start_probe: first.probe_id.clone(),
        end_probe: last.probe_id.clone(),
        start_pos: first.position,
        end_pos: last.position,
        cluster_size,
        stratum: pool.stratum,
        stratum_draws: pool.total_draws(),
        p_value: p,
        fwer: 1.0,
    }
}

pub fn sort_results(results: &mut [RegionResult]) {
    results.sort_by(|a, b| {
        a.fwer
            .total_cmp(&b.fwer)
            .then(a.p_value.total_cmp(&b.p_value))
            .then(b.segment.lrt.total_cmp(&a.segment.lrt))
            .then(a.segment.start_index.cmp(&b.segment.start_index))
    });
}
