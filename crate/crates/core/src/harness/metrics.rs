//! Utility and privacy summaries of a release log.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MapPoint;
use crate::harness::data::LogRecord;

/// Indices of the `k` POIs nearest to `q`, ties broken by POI index.
fn nearest(q: MapPoint, pois: &[MapPoint], k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = pois
        .iter()
        .enumerate()
        .map(|(i, p)| (p.distance(q), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Precision and recall of answering a k-NN query with the `k'` POIs
/// nearest the release instead of the `k` nearest the truth.
pub fn knn_eval(
    released: MapPoint,
    truth: MapPoint,
    pois: &[MapPoint],
    k: usize,
    k_prime: usize,
) -> Result<(f64, f64)> {
    if k == 0 || k_prime == 0 {
        return Err(Error::InvalidParameter("k and k' must be positive".into()));
    }
    let needed = k.max(k_prime);
    if pois.len() < needed {
        return Err(Error::TooFewPois {
            needed,
            have: pois.len(),
        });
    }
    let exact = nearest(truth, pois, k);
    let answer = nearest(released, pois, k_prime);
    let hits = answer.iter().filter(|i| exact.contains(i)).count() as f64;
    Ok((hits / k_prime as f64, hits / k as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnRow {
    pub k: usize,
    pub k_prime: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Mean precision/recall over all records for every `(k, k')` pair.
pub fn knn_table(
    records: &[LogRecord],
    pois: &[MapPoint],
    ks: &[usize],
    k_primes: &[usize],
) -> Result<Vec<KnnRow>> {
    let mut rows = Vec::with_capacity(ks.len() * k_primes.len());
    for &k in ks {
        for &k_prime in k_primes {
            let (mut p, mut r) = (0.0, 0.0);
            for rec in records {
                let (pi, ri) = knn_eval(rec.released(), rec.truth(), pois, k, k_prime)?;
                p += pi;
                r += ri;
            }
            let n = records.len().max(1) as f64;
            rows.push(KnnRow {
                k,
                k_prime,
                precision: p / n,
                recall: r / n,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampMetrics {
    pub t: usize,
    pub samples: usize,
    pub mean_delta_set_size: f64,
    pub drift_ratio: f64,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mechanism: String,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub trajectories: usize,
    pub repetitions: usize,
    pub steps: usize,
    pub dropped_rows: usize,
    pub mean_delta_set_size: f64,
    pub drift_ratio: f64,
    /// Mean distance between release and true cell center.
    pub mean_distance: f64,
    pub per_timestamp: Vec<TimestampMetrics>,
    pub knn: Vec<KnnRow>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    set_size: f64,
    drifted: usize,
    distance: f64,
}

impl Acc {
    fn add(&mut self, r: &LogRecord) {
        self.n += 1;
        self.set_size += r.delta_set.len() as f64;
        self.drifted += r.drifted as usize;
        self.distance += r.released().distance(r.truth());
    }

    fn means(&self) -> (f64, f64, f64) {
        if self.n == 0 {
            return (0.0, 0.0, 0.0);
        }
        let n = self.n as f64;
        (
            self.set_size / n,
            self.drifted as f64 / n,
            self.distance / n,
        )
    }
}

impl MetricsReport {
    /// Aggregate a release log. Run-level fields (`mechanism`, `seed`, ...)
    /// are filled by the caller.
    pub fn from_log(records: &[LogRecord]) -> Self {
        let mut total = Acc::default();
        let mut by_t: BTreeMap<usize, Acc> = BTreeMap::new();
        for r in records {
            total.add(r);
            by_t.entry(r.t).or_default().add(r);
        }
        let (mean_delta_set_size, drift_ratio, mean_distance) = total.means();
        let per_timestamp = by_t
            .into_iter()
            .map(|(t, acc)| {
                let (s, d, e) = acc.means();
                TimestampMetrics {
                    t,
                    samples: acc.n,
                    mean_delta_set_size: s,
                    drift_ratio: d,
                    mean_distance: e,
                }
            })
            .collect();
        MetricsReport {
            mechanism: records
                .first()
                .map(|r| r.mechanism.clone())
                .unwrap_or_default(),
            epsilon: records.first().map_or(0.0, |r| r.epsilon),
            delta: 0.0,
            seed: 0,
            trajectories: 0,
            repetitions: 0,
            steps: records.len(),
            dropped_rows: 0,
            mean_delta_set_size,
            drift_ratio,
            mean_distance,
            per_timestamp,
            knn: Vec::new(),
        }
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Flat `section,key,value` rows: summary scalars, then one row group per
    /// timestamp and per k-NN pair.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "section,key,value")?;
        let summary: [(&str, String); 11] = [
            ("mechanism", self.mechanism.clone()),
            ("epsilon", self.epsilon.to_string()),
            ("delta", self.delta.to_string()),
            ("seed", self.seed.to_string()),
            ("trajectories", self.trajectories.to_string()),
            ("repetitions", self.repetitions.to_string()),
            ("steps", self.steps.to_string()),
            ("dropped_rows", self.dropped_rows.to_string()),
            ("mean_delta_set_size", self.mean_delta_set_size.to_string()),
            ("drift_ratio", self.drift_ratio.to_string()),
            ("mean_distance", self.mean_distance.to_string()),
        ];
        for (k, v) in summary {
            writeln!(out, "summary,{k},{v}")?;
        }
        for ts in &self.per_timestamp {
            let t = ts.t;
            writeln!(out, "t={t},samples,{}", ts.samples)?;
            writeln!(out, "t={t},mean_delta_set_size,{}", ts.mean_delta_set_size)?;
            writeln!(out, "t={t},drift_ratio,{}", ts.drift_ratio)?;
            writeln!(out, "t={t},mean_distance,{}", ts.mean_distance)?;
        }
        for row in &self.knn {
            let tag = format!("knn k={} k'={}", row.k, row.k_prime);
            writeln!(out, "{tag},precision,{}", row.precision)?;
            writeln!(out, "{tag},recall,{}", row.recall)?;
        }
        Ok(())
    }
}
