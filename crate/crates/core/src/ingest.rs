//! Loading and alignment of the three input tables.
//!
//! A run needs a methylation matrix (CpGs x samples), a phenotype table
//! carrying the binary group indicator and numeric covariates, and a probe
//! manifest with genomic coordinates. [`align`] joins them into an
//! [`AnalysisDataset`] whose rows are in coordinate order and whose columns
//! follow the phenotype table.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::info;

use crate::error::{DmsegError, Result};

/// Measurement scale of the methylation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    Beta,
    MValue,
}

impl FromStr for Scale {
    type Err = DmsegError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beta" => Ok(Scale::Beta),
            "mvalue" | "m" | "m-value" => Ok(Scale::MValue),
            other => Err(DmsegError::InvalidConfig(format!("unknown scale '{other}'"))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Beta => f.write_str("beta"),
            Scale::MValue => f.write_str("mvalue"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpGAnnotation {
    pub probe_id: String,
    pub chromosome: String,
    pub position: u64,
}

/// Sample phenotypes: the group indicator recoded to 0/1 plus numeric covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeTable {
    sample_ids: Vec<String>,
    group: Vec<u8>,
    group_levels: [String; 2],
    covariate_names: Vec<String>,
    covariates: Vec<Vec<f64>>,
}

impl PhenotypeTable {
    /// `covariates` holds one vector per named column, each with one value per sample.
    pub fn new(
        sample_ids: Vec<String>,
        group: Vec<u8>,
        group_levels: [String; 2],
        covariate_names: Vec<String>,
        covariates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = sample_ids.len();
        check_unique("sample", &sample_ids)?;
        if group.len() != n {
            return Err(DmsegError::InvalidConfig(format!(
                "group vector has {} entries for {n} samples",
                group.len()
            )));
        }
        if let Some(&bad) = group.iter().find(|&&g| g > 1) {
            return Err(DmsegError::InvalidConfig(format!(
                "group indicator {bad} is not 0 or 1"
            )));
        }
        for (level, label) in group_levels.iter().enumerate() {
            let count = group.iter().filter(|&&g| g as usize == level).count();
            if count < 2 {
                return Err(DmsegError::SingletonGroup {
                    label: label.clone(),
                    count,
                });
            }
        }
        if covariate_names.len() != covariates.len() {
            return Err(DmsegError::InvalidConfig(
                "covariate names and columns differ in length".into(),
            ));
        }
        for (name, column) in covariate_names.iter().zip(&covariates) {
            if column.len() != n {
                return Err(DmsegError::InvalidConfig(format!(
                    "covariate '{name}' has {} values for {n} samples",
                    column.len()
                )));
            }
            if column.iter().any(|v| !v.is_finite()) {
                return Err(DmsegError::InvalidConfig(format!(
                    "covariate '{name}' contains a non-finite value"
                )));
            }
            if column.iter().all(|&v| v == column[0]) {
                return Err(DmsegError::ConstantCovariate(name.clone()));
            }
        }
        Ok(PhenotypeTable {
            sample_ids,
            group,
            group_levels,
            covariate_names,
            covariates,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn group(&self) -> &[u8] {
        &self.group
    }

    /// Original labels for group codes 0 and 1.
    pub fn group_levels(&self) -> &[String; 2] {
        &self.group_levels
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }
}

/// Dense CpG x sample matrix, stored row-major so each CpG is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct MethylationMatrix {
    values: Vec<f64>,
    scale: Scale,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
}

impl MethylationMatrix {
    pub fn new(
        values: Vec<f64>,
        scale: Scale,
        row_ids: Vec<String>,
        col_ids: Vec<String>,
    ) -> Result<Self> {
        if values.len() != row_ids.len() * col_ids.len() {
            return Err(DmsegError::InvalidConfig(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        check_unique("probe", &row_ids)?;
        check_unique("sample", &col_ids)?;
        for &v in &values {
            match scale {
                _ if v.is_nan() => {
                    return Err(DmsegError::InvalidConfig("matrix contains NaN".into()))
                }
                Scale::Beta if !(v > 0.0 && v < 1.0) => return Err(DmsegError::BetaOutOfRange(v)),
                Scale::MValue if !v.is_finite() => {
                    return Err(DmsegError::InvalidConfig(format!("non-finite M-value {v}")))
                }
                _ => {}
            }
        }
        Ok(MethylationMatrix {
            values,
            scale,
            row_ids,
            col_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_cols();
        &self.values[i * n..(i + 1) * n]
    }

    /// Returns the matrix on the M-value scale, converting beta values if needed.
    pub fn to_mvalues(&self) -> MethylationMatrix {
        match self.scale {
            Scale::MValue => self.clone(),
            Scale::Beta => MethylationMatrix {
                // values were validated to lie in (0, 1)
                values: self.values.iter().map(|&b| logit2(b)).collect(),
                scale: Scale::MValue,
                row_ids: self.row_ids.clone(),
                col_ids: self.col_ids.clone(),
            },
        }
    }
}

/// The validated, coordinate-sorted input to every analysis step.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisDataset {
    matrix: MethylationMatrix,
    annotations: Vec<CpGAnnotation>,
    phenotypes: PhenotypeTable,
}

impl AnalysisDataset {
    pub fn matrix(&self) -> &MethylationMatrix {
        &self.matrix
    }

    pub fn annotations(&self) -> &[CpGAnnotation] {
        &self.annotations
    }

    pub fn phenotypes(&self) -> &PhenotypeTable {
        &self.phenotypes
    }

    pub fn n_cpgs(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.n_cols()
    }

    pub fn scale(&self) -> Scale {
        self.matrix.scale
    }

    pub fn to_mvalues(&self) -> AnalysisDataset {
        AnalysisDataset {
            matrix: self.matrix.to_mvalues(),
            annotations: self.annotations.clone(),
            phenotypes: self.phenotypes.clone(),
        }
    }

    pub fn into_parts(self) -> (MethylationMatrix, Vec<CpGAnnotation>, PhenotypeTable) {
        (self.matrix, self.annotations, self.phenotypes)
    }
}

/// Converts a beta value to an M-value, `log2(beta / (1 - beta))`.
pub fn beta_to_m(beta: f64) -> Result<f64> {
    if beta > 0.0 && beta < 1.0 {
        Ok(logit2(beta))
    } else {
        Err(DmsegError::BetaOutOfRange(beta))
    }
}

#[inline]
fn logit2(beta: f64) -> f64 {
    (beta / (1.0 - beta)).log2()
}

fn check_unique(kind: &'static str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(DmsegError::DuplicateId {
                kind,
                id: id.clone(),
            });
        }
    }
    Ok(())
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => b',',
        _ => b'\t',
    }
}

fn open_table(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| DmsegError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path))
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_failure(path: &Path, line: usize, column: usize, message: impl Into<String>) -> DmsegError {
    DmsegError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

fn csv_failure(path: &Path, err: csv::Error) -> DmsegError {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    parse_failure(path, line, 0, err.to_string())
}

/// Records paired with their 1-based line number.
type NumberedRecords = Vec<(usize, csv::StringRecord)>;

/// Reads the header row and the remaining records of a delimited table.
fn read_records(path: &Path) -> Result<(Vec<String>, NumberedRecords)> {
    let mut reader = open_table(path)?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_failure(path, e))?,
        None => return Err(parse_failure(path, 1, 0, "empty file")),
    };
    let header: Vec<String> = header.iter().map(str::to_owned).collect();
    let mut body = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_failure(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(parse_failure(
                path,
                line,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        body.push((line, rec));
    }
    Ok((header, body))
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

fn find_column(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| DmsegError::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_owned(),
        })
}

/// Loads a CpG x sample matrix. The first header cell is ignored; the rest are sample ids.
pub fn load_methylation_matrix(path: impl AsRef<Path>, scale: Scale) -> Result<MethylationMatrix> {
    let path = path.as_ref();
    let (header, body) = read_records(path)?;
    if header.len() < 2 {
        return Err(parse_failure(path, 1, 1, "header has no sample columns"));
    }
    let col_ids: Vec<String> = header[1..].to_vec();
    check_unique("sample", &col_ids)?;

    let mut row_ids = Vec::with_capacity(body.len());
    let mut values = Vec::with_capacity(body.len() * col_ids.len());
    for (line, rec) in &body {
        row_ids.push(rec[0].to_owned());
        for (j, cell) in rec.iter().enumerate().skip(1) {
            let column = j + 1;
            if is_missing(cell) {
                return Err(DmsegError::MissingValue {
                    path: path.to_path_buf(),
                    line: *line,
                    column,
                });
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_failure(path, *line, column, format!("not a number: '{cell}'")))?;
            let ok = match scale {
                Scale::Beta => v > 0.0 && v < 1.0,
                Scale::MValue => v.is_finite(),
            };
            if !ok {
                if v.is_nan() {
                    return Err(DmsegError::MissingValue {
                        path: path.to_path_buf(),
                        line: *line,
                        column,
                    });
                }
                return match scale {
                    Scale::Beta => Err(DmsegError::OutOfRange {
                        path: path.to_path_buf(),
                        line: *line,
                        column,
                        value: v,
                    }),
                    Scale::MValue => Err(parse_failure(path, *line, column, "non-finite M-value")),
                };
            }
            values.push(v);
        }
    }
    check_unique("probe", &row_ids)?;
    info!(
        "loaded {} CpGs x {} samples from {}",
        row_ids.len(),
        col_ids.len(),
        path.display()
    );
    Ok(MethylationMatrix {
        values,
        scale,
        row_ids,
        col_ids,
    })
}

/// Writes a matrix in the same layout [`load_methylation_matrix`] reads.
/// Values use the shortest representation that round-trips exactly.
pub fn write_methylation_matrix(path: impl AsRef<Path>, matrix: &MethylationMatrix) -> Result<()> {
    let path = path.as_ref();
    let delim = delimiter_for(path) as char;
    let file = File::create(path).map_err(|e| DmsegError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        write!(out, "probe_id")?;
        for c in &matrix.col_ids {
            write!(out, "{delim}{c}")?;
        }
        writeln!(out)?;
        for (i, id) in matrix.row_ids.iter().enumerate() {
            write!(out, "{id}")?;
            for v in matrix.row(i) {
                write!(out, "{delim}{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(|e| DmsegError::io(path, e))
}

/// Loads the phenotype table and recodes the group column to 0/1.
///
/// The lexicographically smaller label becomes 0 unless `case_label` names
/// the level to code as 1. Covariates must already be numeric (categorical
/// variables need to be one-hot encoded upstream).
pub fn load_phenotypes(
    path: impl AsRef<Path>,
    group_column: &str,
    covariate_columns: &[String],
    case_label: Option<&str>,
) -> Result<PhenotypeTable> {
    let path = path.as_ref();
    let (header, body) = read_records(path)?;
    let group_idx = find_column(path, &header, group_column)?;
    let cov_idx: Vec<usize> = covariate_columns
        .iter()
        .map(|c| find_column(path, &header, c))
        .collect::<Result<_>>()?;
    let id_idx = header
        .iter()
        .position(|h| h.eq_ignore_ascii_case("sample_id"))
        .unwrap_or(0);

    let mut sample_ids = Vec::with_capacity(body.len());
    let mut raw_groups = Vec::with_capacity(body.len());
    let mut covariates = vec![Vec::with_capacity(body.len()); cov_idx.len()];
    for (line, rec) in &body {
        sample_ids.push(rec[id_idx].to_owned());
        let g = &rec[group_idx];
        if is_missing(g) {
            return Err(DmsegError::MissingValue {
                path: path.to_path_buf(),
                line: *line,
                column: group_idx + 1,
            });
        }
        raw_groups.push(g.to_owned());
        for (k, &ci) in cov_idx.iter().enumerate() {
            let cell = &rec[ci];
            if is_missing(cell) {
                return Err(DmsegError::MissingValue {
                    path: path.to_path_buf(),
                    line: *line,
                    column: ci + 1,
                });
            }
            let v: f64 = cell.parse().map_err(|_| {
                parse_failure(path, *line, ci + 1, format!("non-numeric covariate '{cell}'"))
            })?;
            if !v.is_finite() {
                return Err(parse_failure(path, *line, ci + 1, "non-finite covariate"));
            }
            covariates[k].push(v);
        }
    }

    let mut levels: Vec<&str> = raw_groups.iter().map(String::as_str).collect();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() != 2 {
        return Err(DmsegError::NonBinaryGroup {
            column: group_column.to_owned(),
            levels: levels.len(),
        });
    }
    let (control, case) = match case_label {
        None => (levels[0], levels[1]),
        Some(c) if c == levels[0] => (levels[1], levels[0]),
        Some(c) if c == levels[1] => (levels[0], levels[1]),
        Some(c) => return Err(DmsegError::UnknownCaseLabel(c.to_owned())),
    };
    info!("group column '{group_column}': '{control}' -> 0, '{case}' -> 1");
    let group: Vec<u8> = raw_groups.iter().map(|g| u8::from(g == case)).collect();

    PhenotypeTable::new(
        sample_ids,
        group,
        [control.to_owned(), case.to_owned()],
        covariate_columns.to_vec(),
        covariates,
    )
}

/// Loads a probe manifest with columns `probe_id`, `chromosome`, `position`.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<CpGAnnotation>> {
    let path = path.as_ref();
    let (header, body) = read_records(path)?;
    let id = find_column(path, &header, "probe_id")?;
    let chr = find_column(path, &header, "chromosome")?;
    let pos = find_column(path, &header, "position")?;

    let mut seen = HashSet::with_capacity(body.len());
    let mut out = Vec::with_capacity(body.len());
    for (line, rec) in &body {
        let probe_id = rec[id].to_owned();
        let position: i64 = rec[pos].parse().map_err(|_| {
            parse_failure(path, *line, pos + 1, format!("invalid position '{}'", &rec[pos]))
        })?;
        if position <= 0 {
            return Err(DmsegError::NonPositivePosition {
                probe: probe_id,
                position,
            });
        }
        if !seen.insert(probe_id.clone()) {
            return Err(DmsegError::DuplicateId {
                kind: "probe",
                id: probe_id,
            });
        }
        out.push(CpGAnnotation {
            probe_id,
            chromosome: rec[chr].to_owned(),
            position: position as u64,
        });
    }
    Ok(out)
}

/// Joins matrix, manifest and phenotypes into a coordinate-sorted dataset.
///
/// Rows are ordered by (chromosome, position) with chromosomes compared as
/// raw strings. Columns follow the phenotype table order. Manifest probes
/// that are absent from the matrix are dropped.
pub fn align(
    matrix: MethylationMatrix,
    manifest: Vec<CpGAnnotation>,
    phenotypes: PhenotypeTable,
) -> Result<AnalysisDataset> {
    let by_probe: HashMap<&str, &CpGAnnotation> =
        manifest.iter().map(|a| (a.probe_id.as_str(), a)).collect();
    let mut rows: Vec<(usize, &CpGAnnotation)> = Vec::with_capacity(matrix.n_rows());
    for (i, id) in matrix.row_ids.iter().enumerate() {
        let ann = by_probe
            .get(id.as_str())
            .ok_or_else(|| DmsegError::UnknownProbe(id.clone()))?;
        rows.push((i, ann));
    }
    let dropped = manifest.len() - rows.len();
    if dropped > 0 {
        info!("{dropped} manifest probes absent from the matrix were dropped");
    }
    rows.sort_by(|a, b| {
        (a.1.chromosome.as_str(), a.1.position).cmp(&(b.1.chromosome.as_str(), b.1.position))
    });
    for w in rows.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        if a.chromosome == b.chromosome && a.position == b.position {
            return Err(DmsegError::DuplicatePosition {
                first: a.probe_id.clone(),
                second: b.probe_id.clone(),
                chromosome: a.chromosome.clone(),
                position: a.position,
            });
        }
    }

    let col_index: HashMap<&str, usize> = matrix
        .col_ids
        .iter()
        .enumerate()
        .map(|(j, c)| (c.as_str(), j))
        .collect();
    let pheno_ids: HashSet<&str> = phenotypes.sample_ids.iter().map(String::as_str).collect();
    if let Some(extra) = matrix.col_ids.iter().find(|c| !pheno_ids.contains(c.as_str())) {
        return Err(DmsegError::UnknownSample(extra.clone()));
    }
    let col_order: Vec<usize> = phenotypes
        .sample_ids
        .iter()
        .map(|s| {
            col_index
                .get(s.as_str())
                .copied()
                .ok_or_else(|| DmsegError::MissingSample(s.clone()))
        })
        .collect::<Result<_>>()?;

    let n = col_order.len();
    let mut values = Vec::with_capacity(rows.len() * n);
    for &(i, _) in &rows {
        let src = matrix.row(i);
        values.extend(col_order.iter().map(|&j| src[j]));
    }
    let annotations: Vec<CpGAnnotation> = rows.iter().map(|&(_, a)| a.clone()).collect();
    let row_ids = annotations.iter().map(|a| a.probe_id.clone()).collect();
    let col_ids = phenotypes.sample_ids.clone();

    Ok(AnalysisDataset {
        matrix: MethylationMatrix {
            values,
            scale: matrix.scale,
            row_ids,
            col_ids,
        },
        annotations,
        phenotypes,
    })
}
