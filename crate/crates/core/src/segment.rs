//! Candidate region search within clusters and likelihood-ratio scoring.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;

use crate::assoc::CpGAssociation;
use crate::cluster::Cluster;
use crate::error::{DmsegError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Mean differences (differentially methylated regions).
    Dmr,
    /// Variance differences via the Levene transform (variably methylated regions).
    Vmr,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dmr => "dmr",
            Mode::Vmr => "vmr",
        })
    }
}

impl FromStr for Mode {
    type Err = DmsegError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dmr" => Ok(Mode::Dmr),
            "vmr" => Ok(Mode::Vmr),
            other => Err(DmsegError::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub z_main: f64,
    pub z_bridge: f64,
    pub min_cpgs: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            z_main: 1.96,
            z_bridge: 1.64,
            min_cpgs: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub cluster_id: usize,
    /// Inclusive dataset row indices.
    pub start_index: usize,
    pub end_index: usize,
    pub n_cpgs: usize,
    pub segment_mean: f64,
    pub lrt: f64,
    pub mode: Mode,
}

impl Segment {
    pub fn rows(&self) -> Range<usize> {
        self.start_index..self.end_index + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrtScore {
    pub segment_mean: f64,
    pub lrt: f64,
}

/// Spans (relative to `z`) of candidate segments.
///
/// CpGs with `|z| >= z_main` are hits. Maximal runs of hits separated by a
/// single CpG with `|z| >= z_bridge` are merged through it, repeatedly, so a
/// chain of such runs becomes one span. Spans shorter than `min_cpgs` are
/// dropped. Signs are ignored, so a span may mix positive and negative effects.
pub fn find_candidates(z: &[f64], params: &SegmentParams) -> Vec<Range<usize>> {
    let is_hit = |v: f64| v.abs() >= params.z_main;
    let mut spans: Vec<Range<usize>> = Vec::new();
    let mut i = 0;
    while i < z.len() {
        if !is_hit(z[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < z.len() && is_hit(z[i]) {
            i += 1;
        }
        // `i` is the first non-hit after the run
        match spans.last_mut() {
            Some(prev) if prev.end + 1 == start && z[prev.end].abs() >= params.z_bridge => {
                prev.end = i;
            }
            _ => spans.push(start..i),
        }
    }
    spans.retain(|s| s.len() >= params.min_cpgs);
    spans
}

/// Weighted-mean MLE of a common effect and its likelihood-ratio statistic.
///
/// With weights `w = 1/variance`, the mean is `sum(w b) / sum(w)` and the
/// statistic `b'Wb - (b - m)'W(b - m)` reduces to `m^2 sum(w)`. Sums are
/// accumulated in double-double precision so that the result stays accurate
/// when effects of opposite sign nearly cancel.
pub fn lrt_score(betas: &[f64], variances: &[f64]) -> Result<LrtScore> {
    check_inputs(betas, variances)?;
    let (mean, sw) = weighted_mean(betas, variances);
    let lrt = mean.mul(mean).mul(sw);
    Ok(LrtScore {
        segment_mean: mean.hi,
        lrt: lrt.hi,
    })
}

/// Evaluates `b'Wb - (b - m)'W(b - m)` literally for a given `mean`.
pub fn lrt_quadratic_form(betas: &[f64], variances: &[f64], mean: f64) -> Result<f64> {
    check_inputs(betas, variances)?;
    let m = Dd::from(mean);
    let mut full = Dd::ZERO;
    let mut resid = Dd::ZERO;
    for (&b, &v) in betas.iter().zip(variances) {
        let w = Dd::ONE.div(Dd::from(v));
        let b = Dd::from(b);
        full = full.add(w.mul(b.mul(b)));
        let d = b.sub(m);
        resid = resid.add(w.mul(d.mul(d)));
    }
    Ok(full.sub(resid).hi)
}

fn check_inputs(betas: &[f64], variances: &[f64]) -> Result<()> {
    if betas.is_empty() || betas.len() != variances.len() {
        return Err(DmsegError::InvalidConfig(format!(
            "{} effects with {} variances",
            betas.len(),
            variances.len()
        )));
    }
    if let Some((i, &v)) = variances
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
    {
        return Err(DmsegError::NonPositiveVariance(v, i));
    }
    Ok(())
}

fn weighted_mean(betas: &[f64], variances: &[f64]) -> (Dd, Dd) {
    let mut sw = Dd::ZERO;
    let mut swb = Dd::ZERO;
    for (&b, &v) in betas.iter().zip(variances) {
        let w = Dd::ONE.div(Dd::from(v));
        sw = sw.add(w);
        swb = swb.add(w.mul_f64(b));
    }
    (swb.div(sw), sw)
}

fn score_span(stats: &[CpGAssociation]) -> LrtScore {
    let betas: Vec<f64> = stats.iter().map(|s| s.beta1).collect();
    let vars: Vec<f64> = stats.iter().map(CpGAssociation::variance).collect();
    // spans only contain non-degenerate CpGs, whose variance is positive
    lrt_score(&betas, &vars).expect("segment CpGs have positive variance")
}

/// Scored segments of one cluster. `stats` covers the whole dataset.
pub fn scan_cluster(
    cluster: &Cluster,
    stats: &[CpGAssociation],
    params: &SegmentParams,
    mode: Mode,
) -> Vec<Segment> {
    let local = &stats[cluster.members.clone()];
    let z: Vec<f64> = local.iter().map(|s| s.z).collect();
    find_candidates(&z, params)
        .into_iter()
        .map(|span| {
            let score = score_span(&local[span.clone()]);
            Segment {
                cluster_id: cluster.cluster_id,
                start_index: cluster.members.start + span.start,
                end_index: cluster.members.start + span.end - 1,
                n_cpgs: span.len(),
                segment_mean: score.segment_mean,
                lrt: score.lrt,
                mode,
            }
        })
        .collect()
}

/// Largest segment LRT among the CpGs in `local` (one cluster), if any segment exists.
pub fn max_segment_lrt(local: &[CpGAssociation], z_buf: &mut Vec<f64>, params: &SegmentParams) -> Option<f64> {
    z_buf.clear();
    z_buf.extend(local.iter().map(|s| s.z));
    find_candidates(z_buf, params)
        .into_iter()
        .map(|span| score_span(&local[span]).lrt)
        .max_by(f64::total_cmp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    /// All segments, by descending LRT.
    pub segments: Vec<Segment>,
    /// Maximum segment LRT per input cluster, in input order.
    pub cluster_max: Vec<Option<f64>>,
}

pub fn scan_dataset(
    clusters: &[Cluster],
    stats: &[CpGAssociation],
    params: &SegmentParams,
    mode: Mode,
) -> ScanOutcome {
    let per_cluster: Vec<Vec<Segment>> = clusters
        .par_iter()
        .map(|c| scan_cluster(c, stats, params, mode))
        .collect();
    let cluster_max = per_cluster
        .iter()
        .map(|segs| segs.iter().map(|s| s.lrt).max_by(f64::total_cmp))
        .collect();
    let mut segments: Vec<Segment> = per_cluster.into_iter().flatten().collect();
    segments.sort_by(|a, b| b.lrt.total_cmp(&a.lrt).then(a.start_index.cmp(&b.start_index)));
    ScanOutcome {
        segments,
        cluster_max,
    }
}

/// Unevaluated sum `hi + lo` carrying about 106 bits of precision.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    #[inline]
    fn fast_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd {
            hi: s,
            lo: b - (s - a),
        }
    }

    #[inline]
    fn two_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let s = Dd::fast_two_sum(s.hi, s.lo + t.hi);
        Dd::fast_two_sum(s.hi, s.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = Dd::two_prod(self.hi, o.hi);
        Dd::fast_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = Dd::two_prod(self.hi, b);
        Dd::fast_two_sum(p.hi, p.lo + self.lo * b)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f64(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f64(q2));
        let q3 = r.hi / o.hi;
        Dd::fast_two_sum(q1, q2).add(Dd::from(q3))
    }
}

impl From<f64> for Dd {
    fn from(hi: f64) -> Dd {
        Dd { hi, lo: 0.0 }
    }
}
