//! End-to-end runs: load, cluster, fit, scan, permute and write tables.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::assoc::{build_design, fit_all_cpgs, fit_matrix, levene_transform, CpGAssociation};
use crate::cluster::{
    adjacent_pair_stats, auto_corr_threshold, build_clusters, filter_clusters, summarize, AdjacentPairStats,
    Cluster, ClusterSummary,
};
use crate::config::RunConfig;
use crate::error::{DmsegError, Result};
use crate::ingest::{align, load_manifest, load_methylation_matrix, load_phenotypes, AnalysisDataset, Scale};
use crate::report::{self, PlotRow, Provenance, Region, ValidationRow};
use crate::segment::{scan_dataset, Mode, ScanOutcome};
use crate::significance::{run_significance, RegionResult, SignificanceReport};

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| DmsegError::InvalidConfig(format!("missing required option {flag}")))
}

/// Reads and aligns the three input files named in `cfg`.
pub fn load_dataset(cfg: &RunConfig) -> Result<AnalysisDataset> {
    let matrix = load_methylation_matrix(required(&cfg.matrix, "matrix")?, cfg.scale)?;
    let pheno = load_phenotypes(
        required(&cfg.phenotypes, "phenotypes")?,
        &cfg.group_column,
        &cfg.covariates,
        cfg.case_label.as_deref(),
    )?;
    let manifest = load_manifest(required(&cfg.manifest, "manifest")?)?;
    align(matrix, manifest, pheno)
}

/// Variability analysis always runs on M-values.
pub fn to_analysis_scale(dataset: AnalysisDataset, mode: Mode) -> AnalysisDataset {
    if mode == Mode::Vmr && dataset.scale() == Scale::Beta {
        dataset.to_mvalues()
    } else {
        dataset
    }
}

#[derive(Debug, Clone)]
pub struct Clustering {
    pub pair_stats: Vec<AdjacentPairStats>,
    /// Every cluster, singletons included.
    pub all: Vec<Cluster>,
    /// Clusters of at least `min_cluster_size` CpGs.
    pub retained: Vec<Cluster>,
    pub corr_min: f64,
    pub summary: ClusterSummary,
}

pub fn cluster_dataset(dataset: &AnalysisDataset, cfg: &RunConfig) -> Result<Clustering> {
    let pair_stats = adjacent_pair_stats(dataset)?;
    let corr_min = if cfg.corr_auto {
        let r = auto_corr_threshold(&pair_stats, cfg.max_gap_bp).unwrap_or(cfg.corr_min);
        info!("automatic correlation threshold {r:.4}");
        r
    } else {
        cfg.corr_min
    };
    let all = build_clusters(dataset, &pair_stats, cfg.max_gap_bp, corr_min);
    let summary = summarize(
        dataset.annotations(),
        &pair_stats,
        &all,
        cfg.max_gap_bp,
        cfg.min_cluster_size,
    );
    info!(
        "clusters: {} by gap alone, {} after correlation merging ({} with correlation joins), {} retained",
        summary.gap_only, summary.merged, summary.with_correlation_joins, summary.retained
    );
    let retained = filter_clusters(all.clone(), cfg.min_cluster_size);
    Ok(Clustering {
        pair_stats,
        all,
        retained,
        corr_min,
        summary,
    })
}

/// Per-CpG statistics under the observed labels.
pub fn observed_stats(dataset: &AnalysisDataset, mode: Mode) -> Result<Vec<CpGAssociation>> {
    let design = build_design(dataset.phenotypes())?;
    Ok(match mode {
        Mode::Dmr => fit_all_cpgs(dataset, &design),
        Mode::Vmr => fit_matrix(&levene_transform(dataset, dataset.phenotypes().group())?, &design),
    })
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub dataset: AnalysisDataset,
    pub clustering: Clustering,
    pub stats: Vec<CpGAssociation>,
    pub scan: ScanOutcome,
    pub significance: SignificanceReport,
}

impl Analysis {
    pub fn results(&self) -> &[RegionResult] {
        &self.significance.results
    }
}

/// Runs the full analysis in memory on an aligned dataset.
pub fn analyze(dataset: AnalysisDataset, cfg: &RunConfig, mode: Mode) -> Result<Analysis> {
    cfg.validate()?;
    let dataset = to_analysis_scale(dataset, mode);
    let params = cfg.segment_params();

    let t = Instant::now();
    let clustering = cluster_dataset(&dataset, cfg)?;
    info!("clustering took {:.3}s", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let stats = observed_stats(&dataset, mode)?;
    let scan = scan_dataset(&clustering.retained, &stats, &params, mode);
    info!(
        "association and segment search took {:.3}s, {} segments",
        t.elapsed().as_secs_f64(),
        scan.segments.len()
    );

    let t = Instant::now();
    let significance = run_significance(
        &dataset,
        &clustering.retained,
        &scan,
        &params,
        cfg.permutations,
        cfg.seed,
        mode,
        &cfg.strata,
    )?;
    info!(
        "{} permutations took {:.3}s",
        cfg.permutations,
        t.elapsed().as_secs_f64()
    );
    for (i, r) in significance.results.iter().take(5).enumerate() {
        info!(
            "top {}: {}:{}-{} n={} lrt={:.3} p={:.3e} fwer={}",
            i + 1,
            r.chromosome,
            r.start_pos,
            r.end_pos,
            r.segment.n_cpgs,
            r.segment.lrt,
            r.p_value,
            r.fwer
        );
    }
    Ok(Analysis {
        dataset,
        clustering,
        stats,
        scan,
        significance,
    })
}

/// Runs `f` on a pool of `threads` workers, or the global pool when unset.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| DmsegError::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn provenance(cfg: &RunConfig, command: &str) -> Provenance {
    Provenance {
        command: command.to_owned(),
        config_hash: cfg.analysis_hash(),
        seed: cfg.seed,
    }
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| DmsegError::io(&cfg.out_dir, e))
}

fn write_effective_config(cfg: &RunConfig, command: &str) -> Result<()> {
    let path = cfg.out_dir.join(format!("{command}_run.conf"));
    std::fs::write(&path, cfg.to_config_string()).map_err(|e| DmsegError::io(&path, e))
}

/// `dmr` and `vmr`: writes `<mode>_results.tsv` and returns its path.
pub fn run_regions(cfg: &RunConfig, mode: Mode) -> Result<PathBuf> {
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let t = Instant::now();
        let dataset = load_dataset(cfg)?;
        info!(
            "loaded {} CpGs x {} samples in {:.3}s",
            dataset.n_cpgs(),
            dataset.n_samples(),
            t.elapsed().as_secs_f64()
        );
        let analysis = analyze(dataset, cfg, mode)?;
        prepare_out_dir(cfg)?;
        let command = mode.to_string();
        let prov = provenance(cfg, &command);
        let path = cfg.out_dir.join(format!("{command}_results.tsv"));
        report::write_results(&path, &prov, analysis.results(), cfg.permutations)?;
        if let Some(p) = &cfg.cpg_stats {
            report::write_cpg_stats(p, &prov, analysis.dataset.annotations(), &analysis.stats)?;
        }
        write_effective_config(cfg, &command)?;
        info!("wrote {}", path.display());
        Ok(path)
    })
}

/// `cluster-stats`: writes every cluster, singletons included.
pub fn run_cluster_stats(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let dataset = load_dataset(cfg)?;
        let clustering = cluster_dataset(&dataset, cfg)?;
        prepare_out_dir(cfg)?;
        let path = cfg.out_dir.join("cluster_stats.tsv");
        report::write_cluster_stats(
            &path,
            &provenance(cfg, "cluster-stats"),
            &clustering.all,
            dataset.annotations(),
        )?;
        Ok(path)
    })
}

fn overlaps(cluster: &Cluster, dataset: &AnalysisDataset, region: &Region) -> bool {
    let ann = dataset.annotations();
    cluster.chromosome == region.chromosome
        && ann[cluster.members.start].position <= region.end
        && ann[cluster.members.end - 1].position >= region.start
}

/// Scores each region from the clusters it overlaps. Permutation pools are
/// built from the overlapping clusters only.
pub fn validate_regions(
    dataset: AnalysisDataset,
    regions: &[Region],
    cfg: &RunConfig,
    mode: Mode,
) -> Result<Vec<ValidationRow>> {
    cfg.validate()?;
    let dataset = to_analysis_scale(dataset, mode);
    let params = cfg.segment_params();
    let clustering = cluster_dataset(&dataset, cfg)?;
    let per_region: Vec<Vec<usize>> = regions
        .iter()
        .map(|r| {
            clustering
                .retained
                .iter()
                .filter(|c| overlaps(c, &dataset, r))
                .map(|c| c.cluster_id)
                .collect()
        })
        .collect();
    let wanted: HashSet<usize> = per_region.iter().flatten().copied().collect();
    let restricted: Vec<Cluster> = clustering
        .retained
        .into_iter()
        .filter(|c| wanted.contains(&c.cluster_id))
        .collect();
    info!(
        "{} of {} regions overlap {} clusters",
        per_region.iter().filter(|v| !v.is_empty()).count(),
        regions.len(),
        restricted.len()
    );

    let results = if restricted.is_empty() {
        Vec::new()
    } else {
        let stats = observed_stats(&dataset, mode)?;
        let scan = scan_dataset(&restricted, &stats, &params, mode);
        run_significance(
            &dataset,
            &restricted,
            &scan,
            &params,
            cfg.permutations,
            cfg.seed,
            mode,
            &cfg.strata,
        )?
        .results
    };

    Ok(regions
        .iter()
        .zip(&per_region)
        .map(|(region, ids)| {
            let mut hits: Vec<&RegionResult> = results
                .iter()
                .filter(|r| ids.contains(&r.segment.cluster_id))
                .collect();
            hits.sort_by_key(|r| r.segment.start_index);
            let best = hits.iter().min_by(|a, b| a.p_value.total_cmp(&b.p_value));
            ValidationRow {
                region: region.clone(),
                n_clusters: ids.len(),
                n_cpgs: hits.iter().map(|r| r.segment.n_cpgs).sum(),
                segment_means: hits.iter().map(|r| r.segment.segment_mean).collect(),
                lrt: hits.iter().map(|r| r.segment.lrt).max_by(f64::total_cmp),
                p_value: best.map_or(1.0, |r| r.p_value),
                stratum_draws: best.map_or(0, |r| r.stratum_draws),
            }
        })
        .collect())
}

/// `validate`: writes `<mode>_validation.tsv`.
pub fn run_validate(cfg: &RunConfig, mode: Mode, regions_path: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let regions = report::read_regions(regions_path)?;
        let dataset = load_dataset(cfg)?;
        let rows = validate_regions(dataset, &regions, cfg, mode)?;
        prepare_out_dir(cfg)?;
        let command = format!("validate-{mode}");
        let path = cfg.out_dir.join(format!("{mode}_validation.tsv"));
        report::write_validation(&path, &provenance(cfg, &command), &rows)?;
        Ok(path)
    })
}

/// Per-CpG rows for the segment named `start_probe:end_probe`.
pub fn plot_rows(
    dataset: &AnalysisDataset,
    stats: &[CpGAssociation],
    scan: &ScanOutcome,
    segment_id: &str,
) -> Result<Vec<PlotRow>> {
    let unknown = || DmsegError::UnknownSegment(segment_id.to_owned());
    let (start, end) = segment_id.split_once(':').ok_or_else(unknown)?;
    let ann = dataset.annotations();
    let seg = scan
        .segments
        .iter()
        .find(|s| ann[s.start_index].probe_id == start && ann[s.end_index].probe_id == end)
        .ok_or_else(unknown)?;
    let group = dataset.phenotypes().group();
    let n1 = group.iter().filter(|&&g| g == 1).count() as f64;
    let n0 = group.len() as f64 - n1;
    Ok(seg
        .rows()
        .map(|i| {
            let (mut s0, mut s1) = (0.0, 0.0);
            for (&v, &g) in dataset.matrix().row(i).iter().zip(group) {
                if g == 1 {
                    s1 += v;
                } else {
                    s0 += v;
                }
            }
            PlotRow {
                probe_id: ann[i].probe_id.clone(),
                position: ann[i].position,
                group0_mean: s0 / n0,
                group1_mean: s1 / n1,
                z: stats[i].z,
            }
        })
        .collect())
}

/// `plot-data`: writes `plot_<start>_<end>.tsv` for one detected segment.
pub fn run_plot_data(cfg: &RunConfig, mode: Mode, segment_id: &str) -> Result<PathBuf> {
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let dataset = to_analysis_scale(load_dataset(cfg)?, mode);
        let clustering = cluster_dataset(&dataset, cfg)?;
        let stats = observed_stats(&dataset, mode)?;
        let scan = scan_dataset(&clustering.retained, &stats, &cfg.segment_params(), mode);
        let rows = plot_rows(&dataset, &stats, &scan, segment_id)?;
        prepare_out_dir(cfg)?;
        let path = cfg
            .out_dir
            .join(format!("plot_{}.tsv", segment_id.replace(':', "_")));
        report::write_plot_data(
            &path,
            &provenance(cfg, "plot-data"),
            dataset.phenotypes().group_levels(),
            &rows,
        )?;
        Ok(path)
    })
}
