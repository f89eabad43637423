//! The per-timestamp release loop.
//!
//! Each step propagates the posterior through the Markov model, builds the
//! δ-location set from the resulting prior, swaps the true cell for its
//! nearest in-set surrogate when it fell outside (a drift), releases through
//! the chosen mechanism, and folds the release back into the posterior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellIndex, GridConfig, MapPoint};
use crate::markov::{posterior_update, propagate, ProbVector, TransitionMatrix};
use crate::mechanism::{MechanismKind, Release, ReleaseContext};

/// Slack when comparing cumulative mass with `1 − δ`, so that sums like
/// `0.4 + 0.3 + 0.2` meet a 0.9 threshold despite rounding.
pub const COVERAGE_TOLERANCE: f64 = 1e-12;

/// Minimal set of cells holding at least `1 − δ` of the prior mass,
/// most probable first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaLocationSet {
    pub cells: Vec<CellIndex>,
    pub covered_mass: f64,
}

impl DeltaLocationSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: CellIndex) -> bool {
        self.cells.contains(&c)
    }
}

/// Greedy prefix of the prior sorted by descending probability (ties by
/// ascending index) whose mass first reaches `1 − δ`. Zero-probability
/// cells are never included.
pub fn delta_location_set(prior: &ProbVector, delta: f64) -> Result<DeltaLocationSet> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "delta must be in [0, 1), got {delta}"
        )));
    }
    let mut order: Vec<(usize, f64)> = prior
        .values()
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, p)| *p > 0.0)
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let target = 1.0 - delta - COVERAGE_TOLERANCE;
    let mut cells = Vec::new();
    let mut covered_mass = 0.0;
    for (i, p) in order {
        cells.push(CellIndex(i));
        covered_mass += p;
        if covered_mass >= target {
            break;
        }
    }
    Ok(DeltaLocationSet {
        cells,
        covered_mass,
    })
}

/// In-set cell nearest to `true_cell`; ties go to the lower index.
pub fn surrogate(
    set: &DeltaLocationSet,
    true_cell: CellIndex,
    grid: &GridConfig,
) -> Result<CellIndex> {
    if set.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    grid.check(true_cell)?;
    if set.contains(true_cell) {
        return Ok(true_cell);
    }
    let mut best: Option<(crate::grid::CellOffset, CellIndex)> = None;
    for &c in &set.cells {
        let d = grid.squared_offset(c, true_cell)?;
        let better = match best {
            None => true,
            Some((bd, bc)) => d < bd || (d == bd && c < bc),
        };
        if better {
            best = Some((d, c));
        }
    }
    Ok(best.expect("non-empty set").1)
}

/// Filter state carried between timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub posterior: ProbVector,
    pub t: usize,
}

impl UserState {
    pub fn new(initial: ProbVector) -> Self {
        UserState {
            posterior: initial,
            t: 0,
        }
    }
}

/// How the filter is seeded at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialPrior {
    /// Uniform over the listed cells.
    Uniform { cells: Vec<CellIndex> },
    /// All mass on the trajectory's first cell.
    FirstCell,
    /// Uniform over every grid cell.
    UniformAll,
}

impl InitialPrior {
    pub fn resolve(&self, trajectory: &[CellIndex], m: usize) -> Result<ProbVector> {
        match self {
            InitialPrior::Uniform { cells } => ProbVector::uniform_over(m, cells),
            InitialPrior::FirstCell => {
                let first = trajectory.first().ok_or(Error::EmptyPointSet)?;
                ProbVector::point_mass(m, *first)
            }
            InitialPrior::UniformAll => ProbVector::uniform(m),
        }
    }
}

/// Per-step privacy budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSchedule {
    Constant(f64),
    PerStep(Vec<f64>),
}

impl EpsilonSchedule {
    pub fn at(&self, t: usize) -> Result<f64> {
        let eps = match self {
            EpsilonSchedule::Constant(e) => *e,
            EpsilonSchedule::PerStep(v) => *v
                .get(t)
                .ok_or_else(|| Error::InvalidParameter(format!("no epsilon for step {t}")))?,
        };
        if eps > 0.0 && eps.is_finite() {
            Ok(eps)
        } else {
            Err(Error::InvalidParameter(format!(
                "epsilon at step {t} must be positive, got {eps}"
            )))
        }
    }
}

/// Prior and posterior at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub prior: ProbVector,
    pub posterior: ProbVector,
}

/// Everything that happened at one timestamp.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub true_cell: CellIndex,
    pub delta_set: DeltaLocationSet,
    pub drifted: bool,
    /// Cell released from on drift; `None` when the true cell was in the set.
    pub surrogate: Option<CellIndex>,
    pub release: Release,
    pub snapshot: Option<Snapshot>,
}

impl StepRecord {
    pub fn released_from(&self) -> CellIndex {
        self.surrogate.unwrap_or(self.true_cell)
    }
}

/// Fixed parameters of a release run.
#[derive(Debug, Clone, Copy)]
pub struct Framework<'a> {
    pub transition: &'a TransitionMatrix,
    pub grid: &'a GridConfig,
    pub delta: f64,
    pub mechanism: MechanismKind,
    /// Keep prior/posterior vectors in each record.
    pub keep_snapshots: bool,
}

impl<'a> Framework<'a> {
    pub fn new(
        transition: &'a TransitionMatrix,
        grid: &'a GridConfig,
        delta: f64,
        mechanism: MechanismKind,
    ) -> Result<Self> {
        if transition.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: transition.len(),
            });
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "delta must be in [0, 1), got {delta}"
            )));
        }
        Ok(Framework {
            transition,
            grid,
            delta,
            mechanism,
            keep_snapshots: false,
        })
    }

    pub fn with_snapshots(mut self, keep: bool) -> Self {
        self.keep_snapshots = keep;
        self
    }

    /// One timestamp of the release loop.
    pub fn release_step<R: Rng + ?Sized>(
        &self,
        state: &UserState,
        true_cell: CellIndex,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<(StepRecord, UserState)> {
        self.grid.check(true_cell)?;
        let prior = propagate(&state.posterior, self.transition)?;
        let delta_set = delta_location_set(&prior, self.delta)?;
        let drifted = !delta_set.contains(true_cell);
        let released_from = surrogate(&delta_set, true_cell, self.grid)?;

        let context = ReleaseContext::build(self.mechanism, epsilon, &delta_set.cells, self.grid)?;
        let z = context.perturb(self.grid.cell_center(released_from)?, rng);

        // Bayes runs over the whole prior support, not just the δ-set.
        let support: Vec<CellIndex> = prior.support().collect();
        let emission = context.emission(z, &support, self.grid)?;
        let posterior = posterior_update(&prior, &emission)?;

        let snapshot = self.keep_snapshots.then(|| Snapshot {
            prior: prior.clone(),
            posterior: posterior.clone(),
        });
        let record = StepRecord {
            t: state.t,
            true_cell,
            delta_set,
            drifted,
            surrogate: drifted.then_some(released_from),
            release: Release { z, context },
            snapshot,
        };
        let next = UserState {
            posterior,
            t: state.t + 1,
        };
        Ok((record, next))
    }

    /// Fold [`Self::release_step`] over a trajectory.
    pub fn run_trajectory<R: Rng + ?Sized>(
        &self,
        trajectory: &[CellIndex],
        epsilon: &EpsilonSchedule,
        initial: &InitialPrior,
        rng: &mut R,
    ) -> Result<Vec<StepRecord>> {
        if trajectory.is_empty() {
            return Err(Error::InvalidParameter("empty trajectory".into()));
        }
        let mut state = UserState::new(initial.resolve(trajectory, self.grid.len())?);
        let mut records = Vec::with_capacity(trajectory.len());
        for (t, &cell) in trajectory.iter().enumerate() {
            let eps = epsilon.at(t)?;
            let (record, next) =
                self.release_step(&state, cell, eps, rng)
                    .map_err(|e| Error::AtStep {
                        trajectory: 0,
                        step: t,
                        source: Box::new(e),
                    })?;
            records.push(record);
            state = next;
        }
        Ok(records)
    }
}

/// Fraction of records whose true cell fell outside the δ-set.
pub fn drift_ratio(records: &[StepRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.drifted).count() as f64 / records.len() as f64
}

/// Euclidean distance between the release and the true cell's center.
pub fn release_error(record: &StepRecord, grid: &GridConfig) -> Result<f64> {
    let truth: MapPoint = grid.cell_center(record.true_cell)?;
    Ok(record.release.z.distance(truth))
}
