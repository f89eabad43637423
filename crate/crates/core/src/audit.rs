//! Monte-Carlo checks of privacy and utility claims.
//!
//! The audits only see a sampling closure `(source index, rng) -> z`; they
//! never look inside a mechanism. Privacy is checked on histogram bins,
//! which are valid events for the ratio bound.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Hull;
use crate::grid::{CellIndex, GridConfig, MapPoint};
use crate::mechanism::ReleaseContext;

/// Smallest sample count accepted by the ratio audits.
pub const MIN_AUDIT_SAMPLES: usize = 100_000;
/// Smallest sample count accepted by [`error_estimate`].
pub const MIN_ERROR_SAMPLES: usize = 10_000;
/// Floor on the per-bin count for a bin to enter the ratio maximum.
pub const MIN_BIN_COUNT: u64 = 50;
pub const DEFAULT_SLACK: f64 = 0.15;

/// Rectangular histogram over the release plane. Points outside are not
/// counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub origin: MapPoint,
    pub bin_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl BinGrid {
    pub fn new(origin: MapPoint, bin_size: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(bin_size > 0.0)
            || !bin_size.is_finite()
            || nx == 0
            || ny == 0
            || !origin.x.is_finite()
            || !origin.y.is_finite()
        {
            return Err(Error::InvalidParameter(format!(
                "degenerate bin grid: size {bin_size}, {nx}x{ny} bins"
            )));
        }
        Ok(BinGrid {
            origin,
            bin_size,
            nx,
            ny,
        })
    }

    /// Square grid of `per_axis²` bins spanning `center ± half_extent`.
    pub fn centered(center: MapPoint, half_extent: f64, per_axis: usize) -> Result<Self> {
        if per_axis == 0 {
            return Err(Error::InvalidParameter(
                "degenerate bin grid: zero bins".into(),
            ));
        }
        let size = 2.0 * half_extent / per_axis as f64;
        Self::new(
            center - MapPoint::new(half_extent, half_extent),
            size,
            per_axis,
            per_axis,
        )
    }

    /// Grid sized from a pilot run: centered on the mean release over all
    /// sources, spanning `radii` mean release radii beyond the farthest
    /// source mean.
    pub fn from_pilot<F>(
        sampler: &F,
        sources: usize,
        per_axis: usize,
        radii: f64,
        seed: u64,
    ) -> Result<Self>
    where
        F: Fn(usize, &mut dyn RngCore) -> MapPoint,
    {
        const PILOT: usize = 20_000;
        if sources == 0 {
            return Err(Error::InvalidParameter("no sources to audit".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut means = Vec::with_capacity(sources);
        let mut radius = 0.0;
        for s in 0..sources {
            let draws: Vec<MapPoint> = (0..PILOT).map(|_| sampler(s, &mut rng)).collect();
            let mean = draws.iter().fold(MapPoint::ORIGIN, |a, &b| a + b) * (1.0 / PILOT as f64);
            radius += draws.iter().map(|z| z.distance(mean)).sum::<f64>() / PILOT as f64;
            means.push(mean);
        }
        radius /= sources as f64;
        let center = means.iter().fold(MapPoint::ORIGIN, |a, &b| a + b) * (1.0 / sources as f64);
        let spread = means.iter().map(|m| m.distance(center)).fold(0.0, f64::max);
        Self::centered(center, spread + radii * radius, per_axis)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn locate(&self, z: MapPoint) -> Option<usize> {
        let fx = (z.x - self.origin.x) / self.bin_size;
        let fy = (z.y - self.origin.y) / self.bin_size;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.nx && iy < self.ny).then_some(iy * self.nx + ix)
    }

    pub fn bin_center(&self, bin: usize) -> MapPoint {
        let (ix, iy) = (bin % self.nx, bin / self.nx);
        self.origin
            + MapPoint::new(
                (ix as f64 + 0.5) * self.bin_size,
                (iy as f64 + 0.5) * self.bin_size,
            )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// Releases drawn per source (ratio audit) or in total (adversarial).
    pub samples: usize,
    pub slack: f64,
    /// Per-bin count needed to enter the maximum; derived from `slack`
    /// when unset.
    pub min_count: Option<u64>,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            samples: 1_000_000,
            slack: DEFAULT_SLACK,
            min_count: None,
            seed: 0,
        }
    }
}

impl AuditConfig {
    /// Count at which three binomial standard errors of a ratio of two
    /// comparable bins stay within `slack`: `2·(3/slack)²`, never below
    /// [`MIN_BIN_COUNT`].
    pub fn effective_min_count(&self) -> u64 {
        self.min_count
            .unwrap_or_else(|| (2.0 * (3.0 / self.slack).powi(2)).ceil() as u64)
            .max(MIN_BIN_COUNT)
    }

    fn validate(&self) -> Result<()> {
        if self.samples < MIN_AUDIT_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "audit needs at least {MIN_AUDIT_SAMPLES} samples, got {}",
                self.samples
            )));
        }
        if !(self.slack >= 0.0) || !self.slack.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "slack must be >= 0, got {}",
                self.slack
            )));
        }
        Ok(())
    }
}

/// One bin's contribution to an audit maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRatio {
    pub bin: usize,
    pub bin_center: MapPoint,
    /// Source in the numerator (ratio audit) or the cell whose
    /// posterior/prior is reported (adversarial audit).
    pub first: usize,
    /// Source in the denominator; unused (equal to `first`) for the
    /// adversarial audit.
    pub second: usize,
    pub count_first: u64,
    pub count_second: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub kind: String,
    pub epsilon_claimed: f64,
    /// `e^ε·(1 + slack)`.
    pub threshold: f64,
    pub max_ratio: f64,
    pub max_log_ratio: f64,
    pub worst: Option<BinRatio>,
    pub samples: usize,
    pub slack: f64,
    pub min_count: u64,
    pub bins_compared: usize,
    pub pass: bool,
    pub note: String,
    pub table: Vec<BinRatio>,
}

impl AuditReport {
    fn assemble(kind: &str, epsilon: f64, cfg: &AuditConfig, table: Vec<BinRatio>) -> Self {
        let threshold = epsilon.exp() * (1.0 + cfg.slack);
        let worst = table
            .iter()
            .copied()
            .max_by(|a, b| a.ratio.total_cmp(&b.ratio));
        let max_ratio = worst.map_or(0.0, |w| w.ratio);
        let pass = worst.is_some() && max_ratio <= threshold;
        let min_count = cfg.effective_min_count();
        let note = if worst.is_none() {
            format!("no bin reached {min_count} counts; audit is inconclusive")
        } else {
            format!(
                "{} bins with >= {min_count} counts; max ratio {:.4} vs e^eps(1+slack) = {:.4}",
                table.len(),
                max_ratio,
                threshold
            )
        };
        AuditReport {
            kind: kind.to_string(),
            epsilon_claimed: epsilon,
            threshold,
            max_ratio,
            max_log_ratio: max_ratio.ln(),
            worst,
            samples: cfg.samples,
            slack: cfg.slack,
            min_count,
            bins_compared: table.len(),
            pass,
            note,
            table,
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn histogram<F>(
    sampler: &F,
    source: usize,
    n: usize,
    bins: &BinGrid,
    rng: &mut ChaCha8Rng,
) -> Vec<u64>
where
    F: Fn(usize, &mut dyn RngCore) -> MapPoint,
{
    let mut counts = vec![0u64; bins.len()];
    for _ in 0..n {
        if let Some(b) = bins.locate(sampler(source, rng)) {
            counts[b] += 1;
        }
    }
    counts
}

/// Binned check of `Pr(z ∈ B | x₁) / Pr(z ∈ B | x₂) ≤ e^ε` over all ordered
/// source pairs.
///
/// Each source gets `cfg.samples` releases from its own random stream. A bin
/// enters the maximum only when both counts reach the configured minimum.
pub fn dp_ratio_audit<F>(
    sampler: &F,
    sources: usize,
    epsilon: f64,
    bins: &BinGrid,
    cfg: &AuditConfig,
) -> Result<AuditReport>
where
    F: Fn(usize, &mut dyn RngCore) -> MapPoint + Sync,
{
    cfg.validate()?;
    if sources < 2 {
        return Err(Error::InvalidParameter(
            "ratio audit needs at least two sources".into(),
        ));
    }
    BinGrid::new(bins.origin, bins.bin_size, bins.nx, bins.ny)?;
    let hists: Vec<Vec<u64>> = (0..sources)
        .into_par_iter()
        .map(|s| {
            histogram(
                sampler,
                s,
                cfg.samples,
                bins,
                &mut stream_rng(cfg.seed, s as u64),
            )
        })
        .collect();

    let floor = cfg.effective_min_count();
    let mut table = Vec::new();
    for a in 0..sources {
        for b in 0..sources {
            if a == b {
                continue;
            }
            for (bin, (&ca, &cb)) in hists[a].iter().zip(&hists[b]).enumerate() {
                if ca >= floor && cb >= floor {
                    table.push(BinRatio {
                        bin,
                        bin_center: bins.bin_center(bin),
                        first: a,
                        second: b,
                        count_first: ca,
                        count_second: cb,
                        ratio: ca as f64 / cb as f64,
                    });
                }
            }
        }
    }
    Ok(AuditReport::assemble("dp-ratio", epsilon, cfg, table))
}

/// Binned check of `Pr(u = sᵢ | z ∈ B) / Pr(u = sᵢ) ≤ e^ε`: draw the true
/// source from `prior`, release, and compare empirical posteriors per bin
/// with the prior. Bins need `min_count` releases in total.
pub fn adversarial_audit<F>(
    sampler: &F,
    prior: &[f64],
    epsilon: f64,
    bins: &BinGrid,
    cfg: &AuditConfig,
) -> Result<AuditReport>
where
    F: Fn(usize, &mut dyn RngCore) -> MapPoint + Sync,
{
    cfg.validate()?;
    BinGrid::new(bins.origin, bins.bin_size, bins.nx, bins.ny)?;
    let total: f64 = prior.iter().sum();
    if prior.is_empty() || prior.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbability(
            "audit prior must be a distribution over the sources".into(),
        ));
    }
    let cumulative: Vec<f64> = prior
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let last_positive = prior
        .iter()
        .rposition(|p| *p > 0.0)
        .expect("prior sums to one");

    const CHUNKS: usize = 16;
    let per_chunk = cfg.samples.div_ceil(CHUNKS);
    let partial: Vec<Vec<u64>> = (0..CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = stream_rng(cfg.seed, chunk as u64);
            let n = per_chunk.min(cfg.samples.saturating_sub(chunk * per_chunk));
            let mut counts = vec![0u64; prior.len() * bins.len()];
            for _ in 0..n {
                let u: f64 = rng.random::<f64>() * total;
                let source = cumulative.partition_point(|&c| c <= u).min(last_positive);
                if let Some(b) = bins.locate(sampler(source, &mut rng)) {
                    counts[source * bins.len() + b] += 1;
                }
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; prior.len() * bins.len()];
    for p in &partial {
        for (c, v) in counts.iter_mut().zip(p) {
            *c += v;
        }
    }

    let floor = cfg.effective_min_count();
    let mut table = Vec::new();
    for bin in 0..bins.len() {
        let in_bin: u64 = (0..prior.len()).map(|s| counts[s * bins.len() + bin]).sum();
        if in_bin < floor {
            continue;
        }
        for (s, &p) in prior.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let c = counts[s * bins.len() + bin];
            table.push(BinRatio {
                bin,
                bin_center: bins.bin_center(bin),
                first: s,
                second: s,
                count_first: c,
                count_second: in_bin,
                ratio: (c as f64 / in_bin as f64) / p,
            });
        }
    }
    Ok(AuditReport::assemble("adversarial", epsilon, cfg, table))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    /// `√(mean ‖z − x‖²)`.
    pub rms: f64,
    /// Delta-method standard error of `rms`.
    pub std_error: f64,
    pub samples: usize,
}

/// Root-mean-square distance between releases and `truth`.
pub fn error_estimate<R, F>(
    mut sample: F,
    truth: MapPoint,
    samples: usize,
    rng: &mut R,
) -> Result<ErrorEstimate>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> MapPoint,
{
    if samples < MIN_ERROR_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "error estimate needs at least {MIN_ERROR_SAMPLES} samples, got {samples}"
        )));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let d2 = (sample(rng) - truth).norm_squared();
        sum += d2;
        sum_sq += d2 * d2;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    let rms = mean.sqrt();
    let std_error = if rms > 0.0 {
        (var / n).sqrt() / (2.0 * rms)
    } else {
        0.0
    };
    Ok(ErrorEstimate {
        rms,
        std_error,
        samples,
    })
}

/// `√Area(K)/ε`, the error lower bound up to its constant.
pub fn lower_bound_reference(hull: &Hull, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    match hull {
        Hull::Polygon(p) => Ok(p.area().sqrt() / epsilon),
        _ => Err(Error::DegeneratePolygon(
            "lower bound needs a non-degenerate hull",
        )),
    }
}

/// Sampling closure releasing from the `i`-th of `cells` through `context`.
pub fn release_sampler<'a>(
    context: &'a ReleaseContext,
    cells: &[CellIndex],
    grid: &GridConfig,
) -> Result<impl Fn(usize, &mut dyn RngCore) -> MapPoint + Sync + 'a> {
    let centers: Vec<MapPoint> = cells
        .iter()
        .map(|&c| grid.cell_center(c))
        .collect::<Result<_>>()?;
    Ok(move |i: usize, rng: &mut dyn RngCore| context.perturb(centers[i], rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;

    #[test]
    fn bin_lookup() {
        let g = BinGrid::centered(MapPoint::ORIGIN, 2.0, 4).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.locate(MapPoint::new(-1.9, -1.9)), Some(0));
        assert_eq!(g.locate(MapPoint::new(1.9, 1.9)), Some(15));
        assert_eq!(g.locate(MapPoint::new(0.5, -1.5)), Some(2));
        assert_eq!(g.locate(MapPoint::new(2.1, 0.0)), None);
        assert_eq!(g.locate(MapPoint::new(f64::NAN, 0.0)), None);
        assert_eq!(g.bin_center(2), MapPoint::new(0.5, -1.5));
        assert!(BinGrid::centered(MapPoint::ORIGIN, 0.0, 4).is_err());
        assert!(BinGrid::centered(MapPoint::ORIGIN, 1.0, 0).is_err());
    }

    #[test]
    fn derived_min_count() {
        let cfg = AuditConfig::default();
        assert_eq!(cfg.effective_min_count(), 800);
        let loose = AuditConfig { slack: 10.0, ..cfg };
        assert_eq!(loose.effective_min_count(), MIN_BIN_COUNT);
        let fixed = AuditConfig {
            min_count: Some(75),
            ..cfg
        };
        assert_eq!(fixed.effective_min_count(), 75);
    }

    #[test]
    fn audit_preconditions() {
        let sampler = |_: usize, rng: &mut dyn RngCore| MapPoint::new(rng.random(), 0.0);
        let bins = BinGrid::centered(MapPoint::ORIGIN, 1.0, 4).unwrap();
        let few = AuditConfig {
            samples: 10,
            ..AuditConfig::default()
        };
        assert!(dp_ratio_audit(&sampler, 2, 1.0, &bins, &few).is_err());
        let cfg = AuditConfig {
            samples: MIN_AUDIT_SAMPLES,
            ..AuditConfig::default()
        };
        assert!(dp_ratio_audit(&sampler, 1, 1.0, &bins, &cfg).is_err());
        let bad = BinGrid {
            bin_size: 0.0,
            ..bins
        };
        assert!(dp_ratio_audit(&sampler, 2, 1.0, &bad, &cfg).is_err());
        assert!(adversarial_audit(&sampler, &[0.5, 0.6], 1.0, &bins, &cfg).is_err());
    }

    #[test]
    fn identical_sources_pass() {
        let sampler = |_: usize, rng: &mut dyn RngCore| {
            MapPoint::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            )
        };
        let bins = BinGrid::centered(MapPoint::ORIGIN, 1.0, 4).unwrap();
        let cfg = AuditConfig {
            samples: MIN_AUDIT_SAMPLES,
            seed: 4,
            ..AuditConfig::default()
        };
        let r = dp_ratio_audit(&sampler, 2, 0.01, &bins, &cfg).unwrap();
        assert!(r.pass, "{}", r.note);
        assert_eq!(r.bins_compared, 32);
    }

    #[test]
    fn disjoint_sources_are_inconclusive() {
        // supports never overlap, so no bin has counts from both sources
        let sampler = |s: usize, rng: &mut dyn RngCore| {
            MapPoint::new(s as f64 * 10.0 + rng.random::<f64>(), 0.5)
        };
        let bins = BinGrid::new(MapPoint::ORIGIN, 1.0, 20, 1).unwrap();
        let cfg = AuditConfig {
            samples: MIN_AUDIT_SAMPLES,
            ..AuditConfig::default()
        };
        let r = dp_ratio_audit(&sampler, 2, 1.0, &bins, &cfg).unwrap();
        assert!(!r.pass);
        assert!(r.worst.is_none());
    }

    #[test]
    fn point_mass_prior_has_unit_ratio() {
        let sampler = |s: usize, rng: &mut dyn RngCore| {
            MapPoint::new(s as f64 + rng.random::<f64>(), rng.random())
        };
        let bins = BinGrid::new(MapPoint::ORIGIN, 0.25, 8, 4).unwrap();
        let cfg = AuditConfig {
            samples: MIN_AUDIT_SAMPLES,
            ..AuditConfig::default()
        };
        let r = adversarial_audit(&sampler, &[0.0, 1.0], 0.5, &bins, &cfg).unwrap();
        assert!(r.pass);
        assert!(r.table.iter().all(|b| b.ratio == 1.0));
    }

    #[test]
    fn rms_of_constant_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = error_estimate(
            |_| MapPoint::new(3.0, 4.0),
            MapPoint::ORIGIN,
            MIN_ERROR_SAMPLES,
            &mut rng,
        )
        .unwrap();
        assert!((e.rms - 5.0).abs() < 1e-12);
        assert!(e.std_error.abs() < 1e-9);
        assert!(error_estimate(|_| MapPoint::ORIGIN, MapPoint::ORIGIN, 10, &mut rng).is_err());
    }

    #[test]
    fn lower_bound_arithmetic() {
        let sq = ConvexPolygon::new(vec![
            MapPoint::new(0.0, 0.0),
            MapPoint::new(1.0, 0.0),
            MapPoint::new(1.0, 1.0),
            MapPoint::new(0.0, 1.0),
        ])
        .unwrap();
        assert_eq!(
            lower_bound_reference(&Hull::Polygon(sq.clone()), 1.0).unwrap(),
            1.0
        );
        assert_eq!(
            lower_bound_reference(&Hull::Polygon(sq.clone()), 2.0).unwrap(),
            0.5
        );
        let big = Hull::Polygon(sq.scaled(3.0).unwrap());
        assert!((lower_bound_reference(&big, 1.0).unwrap() - 3.0).abs() < 1e-12);
        assert!(lower_bound_reference(&Hull::Point(MapPoint::ORIGIN), 1.0).is_err());
    }
}
