use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dmseg::config::RunConfig;
use dmseg::pipeline;
use dmseg::segment::Mode;
use dmseg::{DmsegError, Result};

/// Differentially methylated and variably methylated region detection.
#[derive(Parser, Debug)]
#[command(name = "dmseg", version, about)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect differentially methylated regions.
    Dmr(Common),
    /// Detect variably methylated regions.
    Vmr(Common),
    /// Score user-supplied regions.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Region list with chromosome, start_pos and end_pos columns.
        #[arg(long)]
        regions: PathBuf,
        #[arg(long, default_value = "dmr")]
        mode: Mode,
    },
    /// Write the cluster table, singletons included.
    ClusterStats(Common),
    /// Write per-CpG values for one detected segment.
    PlotData {
        #[command(flatten)]
        common: Common,
        /// Segment id as START_PROBE:END_PROBE.
        #[arg(long)]
        segment: String,
        #[arg(long, default_value = "dmr")]
        mode: Mode,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Probe-by-sample matrix (TSV or CSV).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Sample table with the group and covariate columns.
    #[arg(long)]
    phenotypes: Option<PathBuf>,
    /// Probe annotation with probe_id, chromosome, position.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory [default: .].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Two-level group column [default: group].
    #[arg(long)]
    group_column: Option<String>,
    /// Comma-separated covariate columns.
    #[arg(long)]
    covariates: Option<String>,
    /// Group level coded as 1.
    #[arg(long)]
    case_label: Option<String>,
    /// beta or mvalue.
    #[arg(long)]
    scale: Option<String>,
    /// Join neighbours closer than this many bp [default: 500].
    #[arg(long)]
    max_gap: Option<String>,
    /// Join neighbours correlated above this [default: 0.6].
    #[arg(long)]
    corr_min: Option<String>,
    /// Use the median gap-joined correlation as the threshold.
    #[arg(long)]
    corr_auto: bool,
    /// |z| that starts a segment [default: 1.96].
    #[arg(long)]
    z_main: Option<String>,
    /// |z| that extends a segment [default: 1.64].
    #[arg(long)]
    z_bridge: Option<String>,
    /// Minimum CpGs per segment [default: 2].
    #[arg(long)]
    min_cpgs: Option<String>,
    /// Minimum CpGs per scanned cluster [default: 2].
    #[arg(long)]
    min_cluster_size: Option<String>,
    /// Label permutations [default: 500].
    #[arg(long)]
    permutations: Option<String>,
    /// Permutation seed [default: 1].
    #[arg(long)]
    seed: Option<String>,
    /// Stratum upper bounds, e.g. 10,20,40.
    #[arg(long)]
    strata: Option<String>,
    /// Worker threads [default: all cores].
    #[arg(long, env = "DMSEG_THREADS")]
    threads: Option<String>,
    /// Also write per-CpG statistics to this file.
    #[arg(long)]
    cpg_stats: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        let paths = [
            ("matrix", &self.matrix),
            ("phenotypes", &self.phenotypes),
            ("manifest", &self.manifest),
            ("out_dir", &self.out_dir),
            ("cpg_stats", &self.cpg_stats),
        ];
        for (key, value) in paths {
            if let Some(v) = value {
                cfg.set(key, &v.to_string_lossy())?;
            }
        }
        let values = [
            ("group_column", &self.group_column),
            ("covariates", &self.covariates),
            ("case_label", &self.case_label),
            ("scale", &self.scale),
            ("max_gap", &self.max_gap),
            ("corr_min", &self.corr_min),
            ("z_main", &self.z_main),
            ("z_bridge", &self.z_bridge),
            ("min_cpgs", &self.min_cpgs),
            ("min_cluster_size", &self.min_cluster_size),
            ("permutations", &self.permutations),
            ("seed", &self.seed),
            ("strata", &self.strata),
            ("threads", &self.threads),
        ];
        for (key, value) in values {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.corr_auto {
            cfg.corr_auto = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dmr(c) => pipeline::run_regions(&c.resolve()?, Mode::Dmr),
        Command::Vmr(c) => pipeline::run_regions(&c.resolve()?, Mode::Vmr),
        Command::Validate { common, regions, mode } => pipeline::run_validate(&common.resolve()?, mode, &regions),
        Command::ClusterStats(c) => pipeline::run_cluster_stats(&c.resolve()?),
        Command::PlotData { common, segment, mode } => pipeline::run_plot_data(&common.resolve()?, mode, &segment),
    }
    .map(|_| ())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error\tUsageError\t{first}");
            return ExitCode::FAILURE;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::FAILURE
        }
    }
}

/// One tab-separated line: `error`, the error kind, the message.
fn report_error(e: &DmsegError) {
    let message = e.to_string().replace(['\n', '\t'], " ");
    eprintln!("error\t{}\t{}", e.kind(), message);
}
