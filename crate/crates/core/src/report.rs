//! Tab-separated output tables and the region list read by `validate`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::assoc::CpGAssociation;
use crate::cluster::Cluster;
use crate::error::{DmsegError, Result};
use crate::ingest::CpGAnnotation;
use crate::significance::RegionResult;

/// Comment lines written at the top of every table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# dmseg {}", crate::VERSION)?;
        writeln!(w, "# command={}", self.command)?;
        writeln!(w, "# config_sha256={}", self.config_hash)?;
        writeln!(w, "# seed={}", self.seed)
    }
}

fn write_table(
    path: &Path,
    prov: &Provenance,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let io = |e| DmsegError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    prov.write_to(&mut w).map_err(io)?;
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

/// p-value text; values at the resolution floor `1/(1+T)` print as `<floor`.
pub fn format_p(p: f64, draws: usize) -> String {
    let floor = 1.0 / (1.0 + draws as f64);
    if p <= floor {
        format!("<{}", fmt_sig(floor))
    } else {
        fmt_sig(p)
    }
}

/// FWER text; zero prints as `<1/B`.
pub fn format_fwer(fwer: f64, n_permutations: usize) -> String {
    if fwer == 0.0 {
        format!("<{}", fmt_sig(1.0 / n_permutations.max(1) as f64))
    } else {
        fmt_sig(fwer)
    }
}

/// Six significant digits without trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

pub const RESULT_COLUMNS: &[&str] = &[
    "rank",
    "mode",
    "chromosome",
    "start_probe",
    "end_probe",
    "start_pos",
    "end_pos",
    "n_cpgs",
    "segment_mean",
    "lrt",
    "p_value",
    "fwer",
];

pub fn write_results(path: &Path, prov: &Provenance, results: &[RegionResult], n_permutations: usize) -> Result<()> {
    write_table(path, prov, |w| {
        writeln!(w, "{}", RESULT_COLUMNS.join("\t"))?;
        for (rank, r) in results.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                rank + 1,
                r.segment.mode,
                r.chromosome,
                r.start_probe,
                r.end_probe,
                r.start_pos,
                r.end_pos,
                r.segment.n_cpgs,
                fmt_sig(r.segment.segment_mean),
                fmt_sig(r.segment.lrt),
                format_p(r.p_value, r.stratum_draws),
                format_fwer(r.fwer, n_permutations),
            )?;
        }
        Ok(())
    })
}

pub fn write_cluster_stats(
    path: &Path,
    prov: &Provenance,
    clusters: &[Cluster],
    annotations: &[CpGAnnotation],
) -> Result<()> {
    write_table(path, prov, |w| {
        writeln!(w, "cluster_id\tchromosome\tstart_position\tend_position\tn_cpgs\tcorrelation_joins")?;
        for c in clusters {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                c.cluster_id,
                c.chromosome,
                annotations[c.members.start].position,
                annotations[c.members.end - 1].position,
                c.size(),
                c.correlation_joins
            )?;
        }
        Ok(())
    })
}

pub fn write_cpg_stats(
    path: &Path,
    prov: &Provenance,
    annotations: &[CpGAnnotation],
    stats: &[CpGAssociation],
) -> Result<()> {
    write_table(path, prov, |w| {
        writeln!(w, "probe_id\tchromosome\tposition\tbeta1\tse\tz\tdegenerate")?;
        for (a, s) in annotations.iter().zip(stats) {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                a.probe_id,
                a.chromosome,
                a.position,
                fmt_sig(s.beta1),
                fmt_sig(s.se),
                fmt_sig(s.z),
                s.degenerate
            )?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub probe_id: String,
    pub position: u64,
    pub group0_mean: f64,
    pub group1_mean: f64,
    pub z: f64,
}

pub fn write_plot_data(path: &Path, prov: &Provenance, group_levels: &[String; 2], rows: &[PlotRow]) -> Result<()> {
    write_table(path, prov, |w| {
        writeln!(w, "# group0={} group1={}", group_levels[0], group_levels[1])?;
        writeln!(w, "probe_id\tposition\tgroup0_mean\tgroup1_mean\tdifference\tz")?;
        for r in rows {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.probe_id,
                r.position,
                fmt_sig(r.group0_mean),
                fmt_sig(r.group1_mean),
                fmt_sig(r.group1_mean - r.group0_mean),
                fmt_sig(r.z)
            )?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub chromosome: String,
    pub start: u64,
    pub end: u64,
}

/// Reads a region list with `chromosome`, `start_pos` and `end_pos` columns
/// (`start`/`end` are accepted too). Lines starting with `#` are skipped.
pub fn read_regions(path: &Path) -> Result<Vec<Region>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
            .ok_or_else(|| DmsegError::MissingColumn {
                path: path.to_path_buf(),
                column: names[0].to_owned(),
            })
    };
    let chr = find(&["chromosome", "chr"])?;
    let start = find(&["start_pos", "start"])?;
    let end = find(&["end_pos", "end"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |col: usize| -> Result<u64> {
            rec.get(col).unwrap_or("").parse().map_err(|_| DmsegError::Parse {
                path: path.to_path_buf(),
                line,
                column: col + 1,
                message: format!("expected a position, found '{}'", rec.get(col).unwrap_or("")),
            })
        };
        let region = Region {
            chromosome: rec.get(chr).unwrap_or("").to_owned(),
            start: num(start)?,
            end: num(end)?,
        };
        if region.end < region.start {
            return Err(DmsegError::Parse {
                path: path.to_path_buf(),
                line,
                column: end + 1,
                message: "end_pos precedes start_pos".into(),
            });
        }
        out.push(region);
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> DmsegError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DmsegError::io(path, source),
        other => DmsegError::Parse {
            path: path.to_path_buf(),
            line,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// One row of the validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub region: Region,
    pub n_clusters: usize,
    pub n_cpgs: usize,
    pub segment_means: Vec<f64>,
    pub lrt: Option<f64>,
    pub p_value: f64,
    pub stratum_draws: usize,
}

impl ValidationRow {
    pub fn status(&self) -> &'static str {
        if self.n_clusters == 0 {
            "NoOverlap"
        } else if self.segment_means.is_empty() {
            "NoSegment"
        } else {
            "Segment"
        }
    }
}

pub fn write_validation(path: &Path, prov: &Provenance, rows: &[ValidationRow]) -> Result<()> {
    write_table(path, prov, |w| {
        writeln!(w, "chromosome\tstart_pos\tend_pos\tstatus\tn_clusters\tn_cpgs\tsegment_mean\tlrt\tp_value")?;
        for r in rows {
            let means = if r.segment_means.is_empty() {
                "NA".to_owned()
            } else {
                r.segment_means.iter().map(|&m| fmt_sig(m)).collect::<Vec<_>>().join(";")
            };
            let lrt = r.lrt.map_or("NA".to_owned(), fmt_sig);
            let p = if r.n_clusters == 0 {
                "NA".to_owned()
            } else if r.segment_means.is_empty() {
                "1".to_owned()
            } else {
                format_p(r.p_value, r.stratum_draws)
            };
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.region.chromosome,
                r.region.start,
                r.region.end,
                r.status(),
                r.n_clusters,
                r.n_cpgs,
                means,
                lrt,
                p
            )?;
        }
        Ok(())
    })
}
