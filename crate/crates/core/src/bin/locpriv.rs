use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use locpriv::audit::{
    adversarial_audit, dp_ratio_audit, release_sampler, AuditConfig, AuditReport, BinGrid,
};
use locpriv::harness::config::AuditKind;
use locpriv::harness::experiment::{load_trajectories, training_trajectories};
use locpriv::harness::{
    knn_table, parse_pois, parse_trajectories, read_log, run_experiment, write_log, AuditSpec,
    ExperimentConfig, KnnRow, TrajectoryFormat,
};
use locpriv::markov::learn_transition;
use locpriv::{CellIndex, ReleaseContext, Result};

#[derive(Parser)]
#[command(
    name = "locpriv",
    version,
    about = "Differentially private location release under temporal correlations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a transition matrix and write it as `transition.txt`.
    Learn {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the current one).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Additive smoothing; overrides `transition.alpha`.
        #[arg(long)]
        alpha: Option<f64>,
        /// Trajectory files to learn from instead of those in the config
        /// (same format as the config's `[trajectories]`, else cell-csv).
        trajectories: Vec<PathBuf>,
    },
    /// Run an experiment and write metrics and the release log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for `metrics.{json,csv}` and `releases.jsonl`; metrics
        /// go to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Empirically audit a mechanism; exits 1 when the audit fails.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// k-NN precision/recall of a release log against a POI file.
    Knn {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        pois: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long = "k-prime", value_delimiter = ',', required = true)]
        k_prime: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// `Ok(false)` is a clean run with a failing verdict.
fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Learn {
            config,
            out,
            alpha,
            trajectories,
        } => learn(&config, out.as_deref(), alpha, &trajectories).map(|_| true),
        Command::Run {
            config,
            seed,
            out,
            format,
        } => run(&config, seed, out.as_deref(), format).map(|_| true),
        Command::Audit {
            config,
            seed,
            out,
            format,
        } => audit(&config, seed, out.as_deref(), format),
        Command::Knn {
            log,
            pois,
            k,
            k_prime,
            out,
            format,
        } => knn(&log, &pois, &k, &k_prime, out.as_deref(), format).map(|_| true),
    }
}

/// Write to `dir/name`, or stdout when no directory was given.
fn emit(
    dir: Option<&Path>,
    name: &str,
    write: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            let mut f = io::BufWriter::new(fs::File::create(d.join(name))?);
            write(&mut f)?;
            f.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
        }
    }
    Ok(())
}

fn learn(config: &Path, out: Option<&Path>, alpha: Option<f64>, files: &[PathBuf]) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let trajectories = if files.is_empty() {
        let data = load_trajectories(&cfg)?;
        training_trajectories(&cfg, &data)?
    } else {
        let format = cfg
            .trajectories
            .as_ref()
            .map_or(TrajectoryFormat::CellCsv, |s| s.format);
        files
            .iter()
            .map(|p| {
                parse_trajectories(p, format, &cfg.grid, cfg.projection.as_ref()).map(|t| t.cells)
            })
            .collect::<Result<Vec<_>>>()?
    };
    let m = learn_transition(
        &trajectories,
        cfg.grid.len(),
        alpha.unwrap_or(cfg.transition.alpha),
    )?;
    let dir = out.unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let path = dir.join("transition.txt");
    m.save(&path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn run(config: &Path, seed: Option<u64>, out: Option<&Path>, format: Format) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let result = run_experiment(&cfg)?;
    let name = format!("metrics.{}", format.ext());
    emit(out, &name, |w| match format {
        Format::Json => result.report.write_json(w),
        Format::Csv => result.report.write_csv(w),
    })?;
    if let Some(dir) = out {
        emit(Some(dir), "releases.jsonl", |w| write_log(&result.log, w))?;
    }
    Ok(())
}

fn audit(config: &Path, seed: Option<u64>, out: Option<&Path>, format: Format) -> Result<bool> {
    let mut spec = AuditSpec::load(config)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let cells: Vec<CellIndex> = spec.cells.iter().map(|&i| CellIndex(i)).collect();
    let context = ReleaseContext::build(spec.mechanism, spec.epsilon, &cells, &spec.grid)?;
    let sampler = release_sampler(&context, &cells, &spec.grid)?;
    let bins = BinGrid::from_pilot(&sampler, cells.len(), spec.bins, spec.radii, spec.seed)?;
    let cfg = AuditConfig {
        samples: spec.samples,
        slack: spec.slack,
        min_count: spec.min_count,
        seed: spec.seed,
    };
    let report = match spec.kind {
        AuditKind::DpRatio => dp_ratio_audit(&sampler, cells.len(), spec.claimed(), &bins, &cfg)?,
        AuditKind::Adversarial => {
            let prior = spec
                .prior
                .clone()
                .unwrap_or_else(|| vec![1.0 / cells.len() as f64; cells.len()]);
            adversarial_audit(&sampler, &prior, spec.claimed(), &bins, &cfg)?
        }
    };
    let name = format!("audit.{}", format.ext());
    emit(out, &name, |w| match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *w, &report)?;
            writeln!(w)?;
            Ok(())
        }
        Format::Csv => audit_csv(&report, w),
    })?;
    eprintln!(
        "{}: {}",
        if report.pass { "PASS" } else { "FAIL" },
        report.note
    );
    Ok(report.pass)
}

fn audit_csv(report: &AuditReport, w: &mut dyn Write) -> Result<()> {
    writeln!(
        w,
        "# kind={} epsilon={} threshold={} max_ratio={} pass={}",
        report.kind, report.epsilon_claimed, report.threshold, report.max_ratio, report.pass
    )?;
    writeln!(
        w,
        "bin,center_x,center_y,first,second,count_first,count_second,ratio"
    )?;
    for r in &report.table {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.bin,
            r.bin_center.x,
            r.bin_center.y,
            r.first,
            r.second,
            r.count_first,
            r.count_second,
            r.ratio
        )?;
    }
    Ok(())
}

fn knn(
    log: &Path,
    pois: &Path,
    k: &[usize],
    k_prime: &[usize],
    out: Option<&Path>,
    format: Format,
) -> Result<()> {
    let records = read_log(log)?;
    let pois = parse_pois(pois)?;
    let rows = knn_table(&records, &pois, k, k_prime)?;
    let name = format!("knn.{}", format.ext());
    emit(out, &name, |w| write_knn(&rows, format, w))
}

fn write_knn(rows: &[KnnRow], format: Format, w: &mut dyn Write) -> Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *w, rows)?;
            writeln!(w)?;
        }
        Format::Csv => {
            writeln!(w, "k,k_prime,precision,recall")?;
            for r in rows {
                writeln!(w, "{},{},{},{}", r.k, r.k_prime, r.precision, r.recall)?;
            }
        }
    }
    Ok(())
}
