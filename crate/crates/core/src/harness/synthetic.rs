//! Synthetic mobility scenarios for self-contained experiments.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{CellIndex, GridConfig};
use crate::harness::config::{Scenario, SyntheticSpec};
use crate::markov::TransitionMatrix;

/// Lazy walk: stay with probability `stay`, otherwise move to a uniformly
/// chosen 4-neighbour inside the grid.
pub fn random_walk_chain(grid: &GridConfig, stay: f64) -> Result<TransitionMatrix> {
    let mut rows = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let (r, c) = grid.row_col(CellIndex(i))?;
        let mut nbrs = Vec::with_capacity(4);
        if r > 0 {
            nbrs.push(i - grid.cols);
        }
        if c > 0 {
            nbrs.push(i - 1);
        }
        if c + 1 < grid.cols {
            nbrs.push(i + 1);
        }
        if r + 1 < grid.rows {
            nbrs.push(i + grid.cols);
        }
        rows.push(lazy_row(i, &nbrs, stay));
    }
    TransitionMatrix::from_rows(rows)
}

/// Walk along the main diagonal `(k, k)` of a square grid, stepping to a
/// diagonal neighbour. Off-diagonal cells are absorbing and never visited.
pub fn corridor_chain(grid: &GridConfig, stay: f64) -> Result<TransitionMatrix> {
    if grid.rows != grid.cols {
        return Err(Error::InvalidParameter(
            "corridor needs a square grid".into(),
        ));
    }
    let n = grid.rows;
    let diag = |k: usize| k * n + k;
    let mut rows: Vec<Vec<(usize, f64)>> = (0..grid.len()).map(|i| vec![(i, 1.0)]).collect();
    for k in 0..n {
        let mut nbrs = Vec::with_capacity(2);
        if k > 0 {
            nbrs.push(diag(k - 1));
        }
        if k + 1 < n {
            nbrs.push(diag(k + 1));
        }
        rows[diag(k)] = lazy_row(diag(k), &nbrs, stay);
    }
    TransitionMatrix::from_rows(rows)
}

pub fn corridor_cells(grid: &GridConfig) -> Vec<CellIndex> {
    (0..grid.rows.min(grid.cols))
        .map(|k| CellIndex(k * grid.cols + k))
        .collect()
}

fn lazy_row(i: usize, nbrs: &[usize], stay: f64) -> Vec<(usize, f64)> {
    if nbrs.is_empty() || stay >= 1.0 {
        return vec![(i, 1.0)];
    }
    let mut row = Vec::with_capacity(nbrs.len() + 1);
    if stay > 0.0 {
        row.push((i, stay));
    }
    let share = (1.0 - stay) / nbrs.len() as f64;
    row.extend(nbrs.iter().map(|&j| (j, share)));
    row
}

/// Sample a path of `length` cells starting at `start`.
pub fn sample_path<R: Rng + ?Sized>(
    chain: &TransitionMatrix,
    start: CellIndex,
    length: usize,
    rng: &mut R,
) -> Vec<CellIndex> {
    let mut path = Vec::with_capacity(length);
    let mut cur = start;
    for step in 0..length {
        if step > 0 {
            cur = next_state(chain, cur, rng);
        }
        path.push(cur);
    }
    path
}

fn next_state<R: Rng + ?Sized>(
    chain: &TransitionMatrix,
    from: CellIndex,
    rng: &mut R,
) -> CellIndex {
    let row = chain.row(from);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(j, p) in row {
        acc += p;
        if u < acc {
            return CellIndex(j);
        }
    }
    CellIndex(row.last().expect("rows are non-empty").0)
}

/// Trajectories and the chain that generated them.
pub fn generate<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    grid: &GridConfig,
    rng: &mut R,
) -> Result<(Vec<Vec<CellIndex>>, TransitionMatrix)> {
    let (chain, starts) = match spec.scenario {
        Scenario::RandomWalk => (
            random_walk_chain(grid, spec.stay)?,
            (0..grid.len()).map(CellIndex).collect(),
        ),
        Scenario::Corridor => (corridor_chain(grid, spec.stay)?, corridor_cells(grid)),
    };
    let trajectories = (0..spec.count)
        .map(|_| {
            let start = starts[rng.random_range(0..starts.len())];
            sample_path(&chain, start, spec.length, rng)
        })
        .collect();
    Ok((trajectories, chain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_walk_rows() {
        let g = GridConfig::square(3, 1.0).unwrap();
        let m = random_walk_chain(&g, 0.5).unwrap();
        assert_eq!(m.get(CellIndex(0), CellIndex(0)), 0.5);
        assert_eq!(m.get(CellIndex(0), CellIndex(1)), 0.25);
        assert_eq!(m.get(CellIndex(4), CellIndex(1)), 0.125);
        assert_eq!(m.get(CellIndex(0), CellIndex(4)), 0.0);
    }

    #[test]
    fn corridor_stays_on_diagonal() {
        let g = GridConfig::square(5, 1.0).unwrap();
        let spec = SyntheticSpec {
            scenario: Scenario::Corridor,
            count: 3,
            length: 200,
            stay: 0.2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (trajs, _) = generate(&spec, &g, &mut rng).unwrap();
        let diag = corridor_cells(&g);
        assert_eq!(trajs.len(), 3);
        for t in &trajs {
            assert_eq!(t.len(), 200);
            assert!(t.iter().all(|c| diag.contains(c)));
        }
    }

    #[test]
    fn paths_follow_the_chain() {
        let g = GridConfig::square(4, 1.0).unwrap();
        let m = random_walk_chain(&g, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = sample_path(&m, CellIndex(5), 500, &mut rng);
        assert!(p.windows(2).all(|w| m.get(w[0], w[1]) > 0.0));
    }
}
