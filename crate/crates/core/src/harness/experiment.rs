//! End-to-end experiment driver: load data, fit the model, release every
//! trajectory and summarise.

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::framework::{EpsilonSchedule, Framework, InitialPrior, StepRecord};
use crate::grid::{CellIndex, GridConfig};
use crate::harness::config::{ExperimentConfig, InitialSpec};
use crate::harness::data::{parse_pois, parse_trajectories, LogRecord, TrajectoryFormat};
use crate::harness::metrics::{knn_table, MetricsReport};
use crate::harness::synthetic;
use crate::markov::{learn_transition, TransitionMatrix};

/// Stream reserved for generating synthetic trajectories, distinct from any
/// `(trajectory, repetition)` release stream.
const SYNTHETIC_STREAM: u64 = u64::MAX;

pub struct ExperimentOutput {
    pub report: MetricsReport,
    pub log: Vec<LogRecord>,
}

/// Trajectories under study, rows dropped while parsing, and the generating
/// chain for synthetic scenarios.
pub struct LoadedData {
    pub trajectories: Vec<Vec<CellIndex>>,
    pub dropped: usize,
    pub generator: Option<TransitionMatrix>,
}

pub fn load_trajectories(cfg: &ExperimentConfig) -> Result<LoadedData> {
    if let Some(spec) = &cfg.synthetic {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(SYNTHETIC_STREAM);
        let (trajectories, chain) = synthetic::generate(spec, &cfg.grid, &mut rng)?;
        return Ok(LoadedData {
            trajectories,
            dropped: 0,
            generator: Some(chain),
        });
    }
    let src = cfg
        .trajectories
        .as_ref()
        .ok_or_else(|| Error::Config("no trajectory source".into()))?;
    let (trajectories, dropped) = parse_files(&src.paths, src.format, cfg)?;
    Ok(LoadedData {
        trajectories,
        dropped,
        generator: None,
    })
}

fn parse_files(
    paths: &[PathBuf],
    format: TrajectoryFormat,
    cfg: &ExperimentConfig,
) -> Result<(Vec<Vec<CellIndex>>, usize)> {
    let mut out = Vec::with_capacity(paths.len());
    let mut dropped = 0;
    for p in paths {
        let parsed = parse_trajectories(p, format, &cfg.grid, cfg.projection.as_ref())?;
        dropped += parsed.dropped;
        out.push(parsed.cells);
    }
    Ok((out, dropped))
}

/// Trajectories the Markov model is fitted on: `transition.training` when
/// given, else the experiment's own trajectories.
pub fn training_trajectories(
    cfg: &ExperimentConfig,
    data: &LoadedData,
) -> Result<Vec<Vec<CellIndex>>> {
    if cfg.transition.training.is_empty() {
        return Ok(data.trajectories.clone());
    }
    let format = cfg
        .trajectories
        .as_ref()
        .map_or(TrajectoryFormat::CellCsv, |s| s.format);
    Ok(parse_files(&cfg.transition.training, format, cfg)?.0)
}

/// Transition matrix from file, from the synthetic generator, or learned.
pub fn resolve_transition(
    cfg: &ExperimentConfig,
    data: &LoadedData,
    training: &[Vec<CellIndex>],
) -> Result<TransitionMatrix> {
    if let Some(path) = &cfg.transition.path {
        let m = TransitionMatrix::load(path)?;
        if m.len() != cfg.grid.len() {
            return Err(Error::DimensionMismatch {
                expected: cfg.grid.len(),
                got: m.len(),
            });
        }
        return Ok(m);
    }
    if let (Some(chain), true) = (&data.generator, cfg.transition.training.is_empty()) {
        return Ok(chain.clone());
    }
    learn_transition(training, cfg.grid.len(), cfg.transition.alpha)
}

fn initial_prior(spec: InitialSpec, training: &[Vec<CellIndex>]) -> InitialPrior {
    match spec {
        InitialSpec::Visited => {
            let cells: BTreeSet<CellIndex> = training.iter().flatten().copied().collect();
            InitialPrior::Uniform {
                cells: cells.into_iter().collect(),
            }
        }
        InitialSpec::FirstCell => InitialPrior::FirstCell,
        InitialSpec::Uniform => InitialPrior::UniformAll,
    }
}

/// Release random stream for one `(trajectory, repetition)` pair.
pub fn release_rng(seed: u64, trajectory: usize, repetition: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trajectory as u64) << 32) | repetition as u64);
    rng
}

pub fn to_log_record(
    trajectory: usize,
    repetition: usize,
    rec: &StepRecord,
    grid: &GridConfig,
) -> Result<LogRecord> {
    let truth = grid.cell_center(rec.true_cell)?;
    let ctx = &rec.release.context;
    Ok(LogRecord {
        trajectory,
        repetition,
        t: rec.t,
        true_cell: rec.true_cell.0,
        true_x: truth.x,
        true_y: truth.y,
        delta_set: rec.delta_set.cells.iter().map(|c| c.0).collect(),
        covered_mass: rec.delta_set.covered_mass,
        drifted: rec.drifted,
        surrogate: rec.surrogate.map(|c| c.0),
        z_x: rec.release.z.x,
        z_y: rec.release.z.y,
        mechanism: ctx.kind().tag().to_string(),
        epsilon: ctx.epsilon(),
        hull_area: ctx.hull_area(),
        transform: ctx.as_pim().map(|p| p.transform().entries()),
        laplace_scale: ctx.as_laplace().map(|l| l.scale()),
    })
}

fn at_trajectory(e: Error, trajectory: usize) -> Error {
    match e {
        Error::AtStep { step, source, .. } => Error::AtStep {
            trajectory,
            step,
            source,
        },
        other => other,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let data = load_trajectories(cfg)?;
    let training = training_trajectories(cfg, &data)?;
    let transition = resolve_transition(cfg, &data, &training)?;
    let initial = initial_prior(cfg.initial, &training);
    let framework = Framework::new(&transition, &cfg.grid, cfg.delta, cfg.mechanism)?;
    let schedule = EpsilonSchedule::Constant(cfg.epsilon);
    log::info!(
        "{} trajectories x {} repetitions, {} cells, mechanism {}",
        data.trajectories.len(),
        cfg.repetitions,
        cfg.grid.len(),
        cfg.mechanism
    );

    let jobs: Vec<(usize, usize)> = (0..data.trajectories.len())
        .flat_map(|t| (0..cfg.repetitions).map(move |r| (t, r)))
        .collect();
    let chunks: Vec<Vec<LogRecord>> = jobs
        .par_iter()
        .map(|&(ti, rep)| {
            let mut rng = release_rng(cfg.seed, ti, rep);
            let records = framework
                .run_trajectory(&data.trajectories[ti], &schedule, &initial, &mut rng)
                .map_err(|e| at_trajectory(e, ti))?;
            records
                .iter()
                .map(|r| to_log_record(ti, rep, r, &cfg.grid))
                .collect()
        })
        .collect::<Result<_>>()?;
    let log: Vec<LogRecord> = chunks.into_iter().flatten().collect();

    let mut report = MetricsReport::from_log(&log);
    report.mechanism = cfg.mechanism.tag().to_string();
    report.epsilon = cfg.epsilon;
    report.delta = cfg.delta;
    report.seed = cfg.seed;
    report.trajectories = data.trajectories.len();
    report.repetitions = cfg.repetitions;
    report.dropped_rows = data.dropped;
    if let Some(knn) = &cfg.knn {
        let pois = parse_pois(&knn.pois)?;
        report.knn = knn_table(&log, &pois, &knn.k, &knn.k_prime)?;
    }
    Ok(ExperimentOutput { report, log })
}
