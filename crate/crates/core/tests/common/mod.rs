//! Synthetic methylation data shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;

use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use dmseg::ingest::{align, write_methylation_matrix, AnalysisDataset, CpGAnnotation, MethylationMatrix, PhenotypeTable, Scale};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Cluster sizes repeated along each chromosome; covers all four default strata.
pub const CLUSTER_SIZES: &[usize] = &[2, 3, 4, 5, 6, 8, 10, 12, 14, 16, 18, 20, 24, 28, 32, 36, 40, 50, 60];

pub const WITHIN_GAP: u64 = 100;
pub const BETWEEN_GAP: u64 = 5_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spike {
    /// Adds `effect` to every group-1 sample.
    Shift(f64),
    /// Multiplies group-1 deviations from the CpG mean.
    ScaleSd(f64),
}

#[derive(Debug, Clone)]
pub struct Backbone {
    pub n_cpgs: usize,
    pub n0: usize,
    pub n1: usize,
    /// Lag-one correlation within a cluster.
    pub rho: f64,
    pub scale: Scale,
    /// Noise standard deviation on the generating scale.
    pub sd: f64,
    pub spike: Option<(Range<usize>, Spike)>,
}

impl Backbone {
    pub fn beta(n_cpgs: usize) -> Self {
        Backbone {
            n_cpgs,
            n0: 32,
            n1: 32,
            rho: 0.6,
            scale: Scale::Beta,
            sd: 0.1,
            spike: None,
        }
    }

    pub fn mvalue(n_cpgs: usize) -> Self {
        Backbone {
            scale: Scale::MValue,
            sd: 0.5,
            ..Backbone::beta(n_cpgs)
        }
    }

    pub fn with_spike(mut self, rows: Range<usize>, spike: Spike) -> Self {
        self.spike = Some((rows, spike));
        self
    }

    /// Row ranges of the planned clusters, in order.
    pub fn cluster_layout(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for &s in CLUSTER_SIZES.iter().cycle() {
            if start >= self.n_cpgs {
                break;
            }
            let end = (start + s).min(self.n_cpgs);
            out.push(start..end);
            start = end;
        }
        out
    }

    pub fn annotations(&self) -> Vec<CpGAnnotation> {
        let mut out = Vec::with_capacity(self.n_cpgs);
        let mut pos = 10_000;
        for (c, range) in self.cluster_layout().into_iter().enumerate() {
            if c > 0 {
                pos += BETWEEN_GAP;
            }
            for (k, i) in range.enumerate() {
                if k > 0 {
                    pos += WITHIN_GAP;
                }
                out.push(CpGAnnotation {
                    probe_id: format!("cg{i:07}"),
                    chromosome: "chr1".into(),
                    position: pos,
                });
            }
        }
        out
    }

    pub fn phenotypes(&self) -> PhenotypeTable {
        let n = self.n0 + self.n1;
        let ids = (0..n).map(|j| format!("s{j:03}")).collect();
        let group = (0..n).map(|j| u8::from(j >= self.n0)).collect();
        PhenotypeTable::new(ids, group, ["control".into(), "case".into()], vec![], vec![]).unwrap()
    }

    /// Row-major values; AR(1) noise within each cluster, independent clusters.
    pub fn values(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n0 + self.n1;
        let innov = (1.0 - self.rho * self.rho).sqrt();
        let mut values = vec![0.0; self.n_cpgs * n];
        let mut eps = vec![0.0; n];
        for range in self.cluster_layout() {
            for (k, i) in range.enumerate() {
                for e in eps.iter_mut() {
                    let fresh: f64 = StandardNormal.sample(&mut rng);
                    *e = if k == 0 { fresh } else { self.rho * *e + innov * fresh };
                }
                let mu = match self.scale {
                    Scale::Beta => rng.random_range(0.25..0.75),
                    Scale::MValue => rng.random_range(-2.0..2.0),
                };
                let spike = self
                    .spike
                    .as_ref()
                    .filter(|(rows, _)| rows.contains(&i))
                    .map(|(_, s)| *s);
                for (j, &e) in eps.iter().enumerate() {
                    let case = j >= self.n0;
                    let mut dev = self.sd * e;
                    let mut shift = 0.0;
                    match spike {
                        Some(Spike::ScaleSd(f)) if case => dev *= f,
                        Some(Spike::Shift(d)) if case => shift = d,
                        _ => {}
                    }
                    let mut v = mu + shift + dev;
                    if self.scale == Scale::Beta {
                        v = v.clamp(0.005, 0.995);
                    }
                    values[i * n + j] = v;
                }
            }
        }
        values
    }

    pub fn matrix(&self, seed: u64) -> MethylationMatrix {
        let n = self.n0 + self.n1;
        MethylationMatrix::new(
            self.values(seed),
            self.scale,
            (0..self.n_cpgs).map(|i| format!("cg{i:07}")).collect(),
            (0..n).map(|j| format!("s{j:03}")).collect(),
        )
        .unwrap()
    }

    pub fn dataset(&self, seed: u64) -> AnalysisDataset {
        align(self.matrix(seed), self.annotations(), self.phenotypes()).unwrap()
    }

    /// Writes matrix, phenotype and manifest files; returns their paths.
    pub fn write_inputs(&self, dir: &Path, seed: u64) -> Inputs {
        let matrix = dir.join("matrix.tsv");
        write_methylation_matrix(&matrix, &self.matrix(seed)).unwrap();

        let pheno = self.phenotypes();
        let mut text = String::from("sample_id\tgroup\n");
        for (id, &g) in pheno.sample_ids().iter().zip(pheno.group()) {
            writeln!(text, "{id}\t{}", pheno.group_levels()[g as usize]).unwrap();
        }
        let phenotypes = dir.join("phenotypes.tsv");
        std::fs::write(&phenotypes, text).unwrap();

        let mut text = String::from("probe_id\tchromosome\tposition\n");
        for a in self.annotations() {
            writeln!(text, "{}\t{}\t{}", a.probe_id, a.chromosome, a.position).unwrap();
        }
        let manifest = dir.join("manifest.tsv");
        std::fs::write(&manifest, text).unwrap();
        Inputs {
            matrix,
            phenotypes,
            manifest,
        }
    }
}

pub struct Inputs {
    pub matrix: PathBuf,
    pub phenotypes: PathBuf,
    pub manifest: PathBuf,
}

/// Data rows of a TSV, comment lines and header removed.
pub fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').map(str::to_owned).collect())
        .collect()
}
