//! Run configuration: defaults, flat `key = value` files and validation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::cluster::{DEFAULT_CORR_MIN, DEFAULT_MAX_GAP_BP};
use crate::error::{DmsegError, Result};
use crate::ingest::Scale;
use crate::segment::SegmentParams;
use crate::significance::Strata;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub matrix: Option<PathBuf>,
    pub phenotypes: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub group_column: String,
    pub covariates: Vec<String>,
    pub case_label: Option<String>,
    pub scale: Scale,
    pub max_gap_bp: u64,
    pub corr_min: f64,
    pub corr_auto: bool,
    pub z_main: f64,
    pub z_bridge: f64,
    pub min_cpgs: usize,
    pub min_cluster_size: usize,
    pub permutations: usize,
    pub seed: u64,
    pub strata: Strata,
    pub threads: Option<usize>,
    pub cpg_stats: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seg = SegmentParams::default();
        RunConfig {
            matrix: None,
            phenotypes: None,
            manifest: None,
            out_dir: PathBuf::from("."),
            group_column: "group".into(),
            covariates: Vec::new(),
            case_label: None,
            scale: Scale::Beta,
            max_gap_bp: DEFAULT_MAX_GAP_BP,
            corr_min: DEFAULT_CORR_MIN,
            corr_auto: false,
            z_main: seg.z_main,
            z_bridge: seg.z_bridge,
            min_cpgs: seg.min_cpgs,
            min_cluster_size: 2,
            permutations: 500,
            seed: 1,
            strata: Strata::default(),
            threads: None,
            cpg_stats: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| DmsegError::InvalidConfig(format!("invalid value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(DmsegError::InvalidConfig(format!("invalid value '{value}' for {key}"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            z_main: self.z_main,
            z_bridge: self.z_bridge,
            min_cpgs: self.min_cpgs,
        }
    }

    /// Sets one option by its config-file key. Dashes and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "matrix" => self.matrix = opt_path(value),
            "phenotypes" => self.phenotypes = opt_path(value),
            "manifest" => self.manifest = opt_path(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "group_column" => self.group_column = value.to_owned(),
            "covariates" => {
                self.covariates = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect()
            }
            "case_label" => self.case_label = (!value.is_empty()).then(|| value.to_owned()),
            "scale" => self.scale = value.parse()?,
            "max_gap" => self.max_gap_bp = parse_num("max_gap", value)?,
            "corr_min" => self.corr_min = parse_num("corr_min", value)?,
            "corr_auto" => self.corr_auto = parse_bool("corr_auto", value)?,
            "z_main" => self.z_main = parse_num("z_main", value)?,
            "z_bridge" => self.z_bridge = parse_num("z_bridge", value)?,
            "min_cpgs" => self.min_cpgs = parse_num("min_cpgs", value)?,
            "min_cluster_size" => self.min_cluster_size = parse_num("min_cluster_size", value)?,
            "permutations" => self.permutations = parse_num("permutations", value)?,
            "seed" => self.seed = parse_num("seed", value)?,
            "strata" => self.strata = value.parse()?,
            "threads" => {
                self.threads = if value.is_empty() {
                    None
                } else {
                    Some(parse_num("threads", value)?)
                }
            }
            "cpg_stats" => self.cpg_stats = opt_path(value),
            other => return Err(DmsegError::InvalidConfig(format!("unknown option '{other}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DmsegError::InvalidConfig(format!("line {}: expected key = value", n + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| DmsegError::io(path, e))?;
        self.apply_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DmsegError::InvalidConfig(m.to_owned()));
        if self.permutations < 1 {
            return bad("permutations must be at least 1");
        }
        if !(self.corr_min > 0.0 && self.corr_min <= 1.0) {
            return bad("corr_min must lie in (0, 1]");
        }
        if !(self.z_bridge > 0.0 && self.z_bridge <= self.z_main) {
            return bad("z_bridge must be positive and not exceed z_main");
        }
        if self.min_cpgs < 1 || self.min_cluster_size < 1 {
            return bad("min_cpgs and min_cluster_size must be at least 1");
        }
        if self.max_gap_bp < 1 {
            return bad("max_gap must be at least 1");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        Ok(())
    }

    fn path_str(p: &Option<PathBuf>) -> String {
        p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }

    fn analysis_entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("matrix", Self::path_str(&self.matrix)),
            ("phenotypes", Self::path_str(&self.phenotypes)),
            ("manifest", Self::path_str(&self.manifest)),
            ("group_column", self.group_column.clone()),
            ("covariates", self.covariates.join(",")),
            ("case_label", self.case_label.clone().unwrap_or_default()),
            ("scale", self.scale.to_string()),
            ("max_gap", self.max_gap_bp.to_string()),
            ("corr_min", self.corr_min.to_string()),
            ("corr_auto", self.corr_auto.to_string()),
            ("z_main", self.z_main.to_string()),
            ("z_bridge", self.z_bridge.to_string()),
            ("min_cpgs", self.min_cpgs.to_string()),
            ("min_cluster_size", self.min_cluster_size.to_string()),
            ("permutations", self.permutations.to_string()),
            ("seed", self.seed.to_string()),
            ("strata", self.strata.to_string()),
        ]
    }

    /// Effective configuration in the file format accepted by [`RunConfig::apply_str`].
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.analysis_entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(
            out,
            "threads = {}",
            self.threads.map(|t| t.to_string()).unwrap_or_default()
        );
        let _ = writeln!(out, "cpg_stats = {}", Self::path_str(&self.cpg_stats));
        out
    }

    /// Hash of every option that can change results. Output locations and
    /// thread count are excluded.
    pub fn analysis_hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.analysis_entries() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
