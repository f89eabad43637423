//! Location release mechanisms.
//!
//! * Planar Isotropic Mechanism (PIM): a K-norm mechanism on the
//!   sensitivity hull of the δ-location set, sampled in isotropic position.
//! * Laplace mechanism (LM): independent per-axis Laplace noise calibrated
//!   to the ℓ1 diameter of the δ-location set.
//!
//! Each mechanism also provides the emission likelihood used by the
//! Bayesian filter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    apply_transform_polygon, isotropic_transform, regularize_degenerate, sensitivity_hull,
    ConvexPolygon, IsotropyEstimator, Matrix2, MinkowskiNorm, PolygonSampler,
};
use crate::grid::{CellIndex, GridConfig, MapPoint};
use crate::markov::EmissionVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MechanismKind {
    #[serde(rename = "PIM", alias = "pim")]
    Pim,
    #[serde(rename = "LM", alias = "lm")]
    Laplace,
}

impl MechanismKind {
    pub fn tag(self) -> &'static str {
        match self {
            MechanismKind::Pim => "PIM",
            MechanismKind::Laplace => "LM",
        }
    }
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PIM" => Ok(MechanismKind::Pim),
            "LM" | "LAPLACE" => Ok(MechanismKind::Laplace),
            _ => Err(Error::InvalidParameter(format!("unknown mechanism {s:?}"))),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )))
    }
}

fn centers(cells: &[CellIndex], grid: &GridConfig) -> Result<Vec<MapPoint>> {
    if cells.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    cells.iter().map(|&c| grid.cell_center(c)).collect()
}

/// `Gamma(3, 1/ε)` as a sum of three unit exponentials scaled by `1/ε`.
pub fn sample_gamma3<R: Rng + ?Sized>(epsilon: f64, rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the logs stay finite
    let s: f64 = (0..3).map(|_| -(1.0 - rng.random::<f64>()).ln()).sum();
    s / epsilon
}

/// Laplace(0, b) by inverse CDF: `−b·sgn(u)·ln(1 − 2|u|)` for `u ∈ (−½, ½)`.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u = loop {
        let u = rng.random::<f64>() - 0.5;
        if u != -0.5 {
            break u;
        }
    };
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Per-location-set state of a PIM release: the sensitivity hull `K`, its
/// isotropic image `K_I = T·K`, and the transform pair.
#[derive(Debug, Clone)]
pub struct PimContext {
    epsilon: f64,
    hull: ConvexPolygon,
    isotropic_hull: ConvexPolygon,
    transform: Matrix2,
    inverse: Matrix2,
    regularized: bool,
    sampler: PolygonSampler,
    norm: MinkowskiNorm,
    isotropic_area: f64,
}

impl PimContext {
    /// Context with the exact isotropic transform.
    pub fn new(epsilon: f64, cells: &[CellIndex], grid: &GridConfig) -> Result<Self> {
        check_epsilon(epsilon)?;
        let (hull, regularized) = Self::build_hull(cells, grid)?;
        let transform = isotropic_transform(&hull)?;
        Self::assemble(epsilon, hull, regularized, transform)
    }

    /// Context whose transform is estimated by sampling (see
    /// [`IsotropyEstimator`]).
    pub fn with_estimator<R: Rng + ?Sized>(
        epsilon: f64,
        cells: &[CellIndex],
        grid: &GridConfig,
        estimator: &IsotropyEstimator,
        rng: &mut R,
    ) -> Result<Self> {
        check_epsilon(epsilon)?;
        let (hull, regularized) = Self::build_hull(cells, grid)?;
        let estimate = estimator.estimate(&hull, rng)?;
        Self::assemble(epsilon, hull, regularized, estimate.transform)
    }

    fn build_hull(cells: &[CellIndex], grid: &GridConfig) -> Result<(ConvexPolygon, bool)> {
        let pts = centers(cells, grid)?;
        let k = sensitivity_hull(&pts)?;
        let regularized = k.is_degenerate();
        Ok((regularize_degenerate(k, grid.cell_size)?, regularized))
    }

    fn assemble(
        epsilon: f64,
        hull: ConvexPolygon,
        regularized: bool,
        transform: Matrix2,
    ) -> Result<Self> {
        let inverse = transform.inverse()?;
        let isotropic_hull = apply_transform_polygon(&transform, &hull)?;
        let norm = isotropic_hull.norm()?;
        let sampler = isotropic_hull.sampler();
        let isotropic_area = isotropic_hull.area();
        Ok(PimContext {
            epsilon,
            hull,
            isotropic_hull,
            transform,
            inverse,
            regularized,
            sampler,
            norm,
            isotropic_area,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Sensitivity hull `K` (after regularization, if any).
    pub fn hull(&self) -> &ConvexPolygon {
        &self.hull
    }

    pub fn isotropic_hull(&self) -> &ConvexPolygon {
        &self.isotropic_hull
    }

    pub fn transform(&self) -> Matrix2 {
        self.transform
    }

    pub fn inverse_transform(&self) -> Matrix2 {
        self.inverse
    }

    /// Whether `K` was degenerate and had to be widened.
    pub fn regularized(&self) -> bool {
        self.regularized
    }

    /// `z = x + r·T⁻¹·z′` with `z′` uniform on `K_I` and `r ~ Gamma(3, 1/ε)`.
    pub fn perturb<R: Rng + ?Sized>(&self, center: MapPoint, rng: &mut R) -> MapPoint {
        let direction = self.sampler.sample(rng);
        let r = sample_gamma3(self.epsilon, rng);
        center + self.inverse.apply(direction * r)
    }

    /// `‖T(z − x)‖_{K_I}`, which equals `‖z − x‖_K`.
    pub fn displacement_norm(&self, z: MapPoint, center: MapPoint) -> f64 {
        self.norm.eval(self.transform.apply(z - center))
    }

    /// Likelihood in isotropic coordinates,
    /// `ε²/(2·Area(K_I)) · exp(−ε‖Tz − Tx‖_{K_I})`.
    pub fn likelihood(&self, z: MapPoint, center: MapPoint) -> f64 {
        self.peak_likelihood() * (-self.epsilon * self.displacement_norm(z, center)).exp()
    }

    pub fn peak_likelihood(&self) -> f64 {
        self.epsilon * self.epsilon / (2.0 * self.isotropic_area)
    }

    /// Density of the released point in map coordinates: the isotropic
    /// likelihood times the Jacobian `|det T|`. Integrates to one over the
    /// plane.
    pub fn density(&self, z: MapPoint, center: MapPoint) -> f64 {
        self.transform.det().abs() * self.likelihood(z, center)
    }
}

/// Per-location-set state of the baseline Laplace mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceContext {
    epsilon: f64,
    spread_x: f64,
    spread_y: f64,
    scale: f64,
}

impl LaplaceContext {
    pub fn new(epsilon: f64, cells: &[CellIndex], grid: &GridConfig) -> Result<Self> {
        check_epsilon(epsilon)?;
        let pts = centers(cells, grid)?;
        let spread = |f: fn(&MapPoint) -> f64| {
            let (lo, hi) = pts
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        };
        let spread_x = spread(|p| p.x);
        let spread_y = spread(|p| p.y);
        let sensitivity = spread_x + spread_y;
        // a single cell would otherwise get zero noise
        let scale = if sensitivity > 0.0 {
            sensitivity / epsilon
        } else {
            grid.cell_size / epsilon
        };
        Ok(LaplaceContext {
            epsilon,
            spread_x,
            spread_y,
            scale,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(Δ1, Δ2)`: coordinate spreads of the location set.
    pub fn spreads(&self) -> (f64, f64) {
        (self.spread_x, self.spread_y)
    }

    /// Per-axis Laplace scale `b = (Δ1 + Δ2)/ε`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn perturb<R: Rng + ?Sized>(&self, center: MapPoint, rng: &mut R) -> MapPoint {
        let dx = sample_laplace(self.scale, rng);
        let dy = sample_laplace(self.scale, rng);
        center + MapPoint::new(dx, dy)
    }

    /// Product of the two per-axis Laplace densities.
    pub fn likelihood(&self, z: MapPoint, center: MapPoint) -> f64 {
        let b = self.scale;
        let l1 = (z.x - center.x).abs() + (z.y - center.y).abs();
        (-l1 / b).exp() / (4.0 * b * b)
    }
}

#[derive(Debug, Clone)]
pub enum ReleaseContext {
    Pim(PimContext),
    Laplace(LaplaceContext),
}

impl ReleaseContext {
    pub fn build(
        kind: MechanismKind,
        epsilon: f64,
        cells: &[CellIndex],
        grid: &GridConfig,
    ) -> Result<Self> {
        Ok(match kind {
            MechanismKind::Pim => ReleaseContext::Pim(PimContext::new(epsilon, cells, grid)?),
            MechanismKind::Laplace => {
                ReleaseContext::Laplace(LaplaceContext::new(epsilon, cells, grid)?)
            }
        })
    }

    pub fn kind(&self) -> MechanismKind {
        match self {
            ReleaseContext::Pim(_) => MechanismKind::Pim,
            ReleaseContext::Laplace(_) => MechanismKind::Laplace,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            ReleaseContext::Pim(c) => c.epsilon(),
            ReleaseContext::Laplace(c) => c.epsilon(),
        }
    }

    pub fn perturb<R: Rng + ?Sized>(&self, center: MapPoint, rng: &mut R) -> MapPoint {
        match self {
            ReleaseContext::Pim(c) => c.perturb(center, rng),
            ReleaseContext::Laplace(c) => c.perturb(center, rng),
        }
    }

    pub fn likelihood(&self, z: MapPoint, center: MapPoint) -> f64 {
        match self {
            ReleaseContext::Pim(c) => c.likelihood(z, center),
            ReleaseContext::Laplace(c) => c.likelihood(z, center),
        }
    }

    /// Area of the sensitivity hull `K` (PIM only).
    pub fn hull_area(&self) -> Option<f64> {
        match self {
            ReleaseContext::Pim(c) => Some(c.hull().area()),
            ReleaseContext::Laplace(_) => None,
        }
    }

    pub fn as_pim(&self) -> Option<&PimContext> {
        match self {
            ReleaseContext::Pim(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_laplace(&self) -> Option<&LaplaceContext> {
        match self {
            ReleaseContext::Laplace(c) => Some(c),
            _ => None,
        }
    }

    /// Emission vector over all grid cells. Cells not listed in `cells` get
    /// likelihood zero; callers list the prior support.
    pub fn emission(
        &self,
        z: MapPoint,
        cells: &[CellIndex],
        grid: &GridConfig,
    ) -> Result<EmissionVector> {
        let mut values = vec![0.0; grid.len()];
        for &c in cells {
            values[c.0] = self.likelihood(z, grid.cell_center(c)?);
        }
        EmissionVector::new(values)
    }
}

/// A released location together with the context that produced it.
#[derive(Debug, Clone)]
pub struct Release {
    pub z: MapPoint,
    pub context: ReleaseContext,
}

fn release(
    kind: MechanismKind,
    epsilon: f64,
    delta_set: &[CellIndex],
    true_cell: CellIndex,
    grid: &GridConfig,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Release> {
    check_epsilon(epsilon)?;
    if delta_set.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if !delta_set.contains(&true_cell) {
        return Err(Error::NotInLocationSet(true_cell.0));
    }
    let context = ReleaseContext::build(kind, epsilon, delta_set, grid)?;
    let z = context.perturb(grid.cell_center(true_cell)?, rng);
    Ok(Release { z, context })
}

/// Planar Isotropic Mechanism release of `true_cell` over `delta_set`.
pub fn pim_release<R: Rng + ?Sized>(
    epsilon: f64,
    delta_set: &[CellIndex],
    true_cell: CellIndex,
    grid: &GridConfig,
    rng: &mut R,
) -> Result<Release> {
    release(MechanismKind::Pim, epsilon, delta_set, true_cell, grid, rng)
}

/// Baseline Laplace mechanism release of `true_cell` over `delta_set`.
pub fn lm_release<R: Rng + ?Sized>(
    epsilon: f64,
    delta_set: &[CellIndex],
    true_cell: CellIndex,
    grid: &GridConfig,
    rng: &mut R,
) -> Result<Release> {
    release(
        MechanismKind::Laplace,
        epsilon,
        delta_set,
        true_cell,
        grid,
        rng,
    )
}

pub fn pim_emission(
    z: MapPoint,
    cells: &[CellIndex],
    ctx: &ReleaseContext,
    grid: &GridConfig,
) -> Result<EmissionVector> {
    if ctx.kind() != MechanismKind::Pim {
        return Err(Error::WrongMechanism {
            expected: "PIM",
            found: ctx.kind().tag(),
        });
    }
    ctx.emission(z, cells, grid)
}

pub fn lm_emission(
    z: MapPoint,
    cells: &[CellIndex],
    ctx: &ReleaseContext,
    grid: &GridConfig,
) -> Result<EmissionVector> {
    if ctx.kind() != MechanismKind::Laplace {
        return Err(Error::WrongMechanism {
            expected: "LM",
            found: ctx.kind().tag(),
        });
    }
    ctx.emission(z, cells, grid)
}
