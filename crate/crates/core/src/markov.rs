//! Mobility model: first-order Markov chain over grid cells with Bayesian
//! filtering of released locations.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CellIndex;

/// Tolerance on the unit-sum invariants of probability vectors and rows.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Probability vector over the `m` grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProbability("empty vector".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidProbability(format!("entry {i} is {v}")));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidProbability(format!("entries sum to {total}")));
        }
        Ok(ProbVector(values))
    }

    /// Normalize non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidProbability(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidProbability("weights sum to zero".into()));
        }
        Ok(ProbVector(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::from_weights(vec![1.0; m])
    }

    pub fn point_mass(m: usize, cell: CellIndex) -> Result<Self> {
        if cell.0 >= m {
            return Err(Error::CellOutOfRange {
                index: cell.0,
                len: m,
            });
        }
        let mut v = vec![0.0; m];
        v[cell.0] = 1.0;
        Ok(ProbVector(v))
    }

    /// Uniform over the given cells.
    pub fn uniform_over(m: usize, cells: &[CellIndex]) -> Result<Self> {
        let mut v = vec![0.0; m];
        for c in cells {
            if c.0 >= m {
                return Err(Error::CellOutOfRange { index: c.0, len: m });
            }
            v[c.0] = 1.0;
        }
        Self::from_weights(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: CellIndex) -> f64 {
        self.0[i.0]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Cells with non-zero probability, ascending.
    pub fn support(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, _)| CellIndex(i))
    }
}

/// Likelihoods `Pr(z | true cell = sᵢ)` for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionVector(Vec<f64>);

impl EmissionVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidProbability(
                "likelihoods must be finite and non-negative".into(),
            ));
        }
        if !values.iter().any(|v| *v > 0.0) {
            return Err(Error::ZeroLikelihood);
        }
        Ok(EmissionVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Row-stochastic transition matrix in sparse row form.
///
/// Row `i` lists `(j, M[i][j])` for the non-zero entries, sorted by `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidProbability("matrix has no rows".into()));
        }
        let mut clean = Vec::with_capacity(m);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.retain(|&(_, p)| p != 0.0);
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidProbability(format!(
                    "row {i} repeats a column"
                )));
            }
            if let Some(&(j, p)) = row
                .iter()
                .find(|&&(j, p)| j >= m || !(p > 0.0) || !p.is_finite())
            {
                return Err(Error::InvalidProbability(format!(
                    "row {i}: bad entry ({j}, {p})"
                )));
            }
            let total: f64 = row.iter().map(|e| e.1).sum();
            if (total - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidProbability(format!(
                    "row {i} sums to {total}"
                )));
            }
            clean.push(row);
        }
        Ok(TransitionMatrix { rows: clean })
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Result<Self> {
        let m = dense.len();
        let mut rows = Vec::with_capacity(m);
        for r in dense {
            if r.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: r.len(),
                });
            }
            rows.push(
                r.iter()
                    .copied()
                    .enumerate()
                    .filter(|(_, p)| *p != 0.0)
                    .collect(),
            );
        }
        Self::from_rows(rows)
    }

    pub fn identity(m: usize) -> Result<Self> {
        Self::from_rows((0..m).map(|i| vec![(i, 1.0)]).collect())
    }

    /// Number of states.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: CellIndex) -> &[(usize, f64)] {
        &self.rows[i.0]
    }

    pub fn get(&self, i: CellIndex, j: CellIndex) -> f64 {
        let row = &self.rows[i.0];
        row.binary_search_by_key(&j.0, |e| e.0)
            .map(|k| row[k].1)
            .unwrap_or(0.0)
    }

    /// Write as a triplet file: a header line `m`, then one `i j p` line per
    /// non-zero entry.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.len())?;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                writeln!(out, "{i} {j} {p}")?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_triplets(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    /// Parse the triplet format. Blank lines and `#` comments are ignored.
    pub fn parse_triplets(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (n, header) = lines
            .next()
            .ok_or_else(|| err(0, "missing header".into()))?;
        let m: usize = header
            .parse()
            .map_err(|_| err(n, format!("bad header {header:?}")))?;
        if m == 0 {
            return Err(err(n, "matrix size must be positive".into()));
        }
        let mut rows = vec![Vec::new(); m];
        for (n, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(err(n, format!("expected `i j p`, got {line:?}")));
            }
            let i: usize = fields[0]
                .parse()
                .map_err(|_| err(n, format!("bad row {:?}", fields[0])))?;
            let j: usize = fields[1]
                .parse()
                .map_err(|_| err(n, format!("bad column {:?}", fields[1])))?;
            let p: f64 = fields[2]
                .parse()
                .map_err(|_| err(n, format!("bad probability {:?}", fields[2])))?;
            if i >= m || j >= m {
                return Err(err(
                    n,
                    format!("index ({i}, {j}) outside a {m}-state matrix"),
                ));
            }
            rows[i].push((j, p));
        }
        Self::from_rows(rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_triplets(&text, &path.display().to_string())
    }
}

/// Count-based maximum likelihood estimate with additive smoothing:
/// `M[i][j] = (count(i→j) + α) / (Σₖ count(i→k) + α·m)`.
///
/// With `α = 0`, a state never left in the data gets a self-loop.
pub fn learn_transition(
    trajectories: &[Vec<CellIndex>],
    m: usize,
    alpha: f64,
) -> Result<TransitionMatrix> {
    if m == 0 {
        return Err(Error::InvalidParameter("state space is empty".into()));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothing must be >= 0, got {alpha}"
        )));
    }
    let mut counts: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); m];
    let mut observed = 0usize;
    for traj in trajectories {
        for w in traj.windows(2) {
            let (from, to) = (w[0].0, w[1].0);
            if from >= m || to >= m {
                return Err(Error::CellOutOfRange {
                    index: from.max(to),
                    len: m,
                });
            }
            *counts[from].entry(to).or_default() += 1.0;
            observed += 1;
        }
    }
    if observed == 0 && alpha == 0.0 {
        return Err(Error::NoTransitions);
    }

    let rows = counts
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let total: f64 = row.values().sum();
            if alpha == 0.0 {
                if total == 0.0 {
                    return vec![(i, 1.0)];
                }
                return row.into_iter().map(|(j, c)| (j, c / total)).collect();
            }
            let denom = total + alpha * m as f64;
            (0..m)
                .map(|j| (j, (row.get(&j).copied().unwrap_or(0.0) + alpha) / denom))
                .collect::<Vec<_>>()
        })
        .map(normalize_row)
        .collect();
    TransitionMatrix::from_rows(rows)
}

fn normalize_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let total: f64 = row.iter().map(|e| e.1).sum();
    for e in &mut row {
        e.1 /= total;
    }
    row
}

/// One Markov step, `p⁻ = p⁺ M`, renormalized.
pub fn propagate(p: &ProbVector, m: &TransitionMatrix) -> Result<ProbVector> {
    if p.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            got: p.len(),
        });
    }
    let mut out = vec![0.0; p.len()];
    for (i, &pi) in p.values().iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        for &(j, mij) in &m.rows[i] {
            out[j] += pi * mij;
        }
    }
    ProbVector::from_weights(out)
}

/// Bayes update `p⁺[i] = e[i]·p⁻[i] / Σⱼ e[j]·p⁻[j]`.
pub fn posterior_update(prior: &ProbVector, emission: &EmissionVector) -> Result<ProbVector> {
    if prior.len() != emission.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.len(),
            got: emission.len(),
        });
    }
    let joint: Vec<f64> = prior
        .values()
        .iter()
        .zip(emission.values())
        .map(|(p, e)| p * e)
        .collect();
    let total: f64 = joint.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroLikelihood);
    }
    Ok(ProbVector(joint.into_iter().map(|v| v / total).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(v: &[usize]) -> Vec<CellIndex> {
        v.iter().map(|&i| CellIndex(i)).collect()
    }

    fn dense(m: &TransitionMatrix) -> Vec<Vec<f64>> {
        (0..m.len())
            .map(|i| {
                (0..m.len())
                    .map(|j| m.get(CellIndex(i), CellIndex(j)))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn learn_counts() {
        let m = learn_transition(&[cells(&[0, 1, 1])], 2, 0.0).unwrap();
        assert_eq!(dense(&m), vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn learn_self_loop_fallback() {
        let m = learn_transition(&[cells(&[0, 1])], 3, 0.0).unwrap();
        assert_eq!(m.get(CellIndex(1), CellIndex(1)), 1.0);
        assert_eq!(m.get(CellIndex(2), CellIndex(2)), 1.0);
    }

    #[test]
    fn learn_uniform_smoothing() {
        let m = learn_transition(&[], 2, 1.0).unwrap();
        assert_eq!(dense(&m), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let m = learn_transition(&[cells(&[0, 1])], 2, 1.0).unwrap();
        assert!((m.get(CellIndex(0), CellIndex(1)) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn learn_errors() {
        assert!(matches!(
            learn_transition(&[], 2, 0.0),
            Err(Error::NoTransitions)
        ));
        assert!(matches!(
            learn_transition(&[cells(&[5])], 2, 0.0),
            Err(Error::NoTransitions)
        ));
        assert!(learn_transition(&[cells(&[0, 5])], 2, 0.0).is_err());
        assert!(learn_transition(&[], 2, -1.0).is_err());
    }

    #[test]
    fn propagate_examples() {
        let m = TransitionMatrix::from_dense(&[vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let p = propagate(&ProbVector::new(vec![1.0, 0.0]).unwrap(), &m).unwrap();
        assert_eq!(p.values(), &[0.5, 0.5]);
        let p = propagate(&ProbVector::new(vec![0.0, 1.0]).unwrap(), &m).unwrap();
        assert_eq!(p.values(), &[0.0, 1.0]);
        let ds = TransitionMatrix::from_dense(&[vec![0.2, 0.8], vec![0.8, 0.2]]).unwrap();
        let u = ProbVector::uniform(2).unwrap();
        assert_eq!(propagate(&u, &ds).unwrap(), u);
        assert!(matches!(
            propagate(&ProbVector::uniform(3).unwrap(), &m),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn posterior_examples() {
        let prior = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let flat = posterior_update(&prior, &EmissionVector::new(vec![3.0, 3.0]).unwrap()).unwrap();
        assert_eq!(flat.values(), &[0.5, 0.5]);
        let p = posterior_update(&prior, &EmissionVector::new(vec![0.8, 0.2]).unwrap()).unwrap();
        assert!((p.values()[0] - 0.8).abs() < 1e-15 && (p.values()[1] - 0.2).abs() < 1e-15);
        let point = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let p = posterior_update(&point, &EmissionVector::new(vec![0.1, 9.0]).unwrap()).unwrap();
        assert_eq!(p.values(), &[1.0, 0.0]);
    }

    #[test]
    fn posterior_zero_likelihood() {
        let point = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let e = EmissionVector::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            posterior_update(&point, &e),
            Err(Error::ZeroLikelihood)
        ));
        assert!(matches!(
            EmissionVector::new(vec![0.0, 0.0]),
            Err(Error::ZeroLikelihood)
        ));
    }

    #[test]
    fn triplet_round_trip() {
        let m = TransitionMatrix::from_dense(&[
            vec![0.1, 0.9, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ])
        .unwrap();
        let mut buf = Vec::new();
        m.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("3\n0 0 0.1\n"));
        assert_eq!(TransitionMatrix::parse_triplets(&text, "mem").unwrap(), m);
    }

    #[test]
    fn triplet_parse_errors() {
        let e = TransitionMatrix::parse_triplets("2\n0 1 1\n1 1 0.5\n", "m.txt").unwrap_err();
        assert!(e.to_string().contains("row 1 sums to 0.5"), "{e}");
        let e = TransitionMatrix::parse_triplets("2\n0 1\n", "m.txt").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = TransitionMatrix::parse_triplets("2\n0 7 1\n", "m.txt").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        let u = ProbVector::uniform_over(4, &cells(&[1, 3])).unwrap();
        assert_eq!(u.values(), &[0.0, 0.5, 0.0, 0.5]);
        assert_eq!(u.support().collect::<Vec<_>>(), cells(&[1, 3]));
    }
}
