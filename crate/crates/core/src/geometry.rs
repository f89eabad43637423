//! Planar convex geometry for the sensitivity hull and its isotropic position.
//!
//! Everything here works on small polygons (tens to a few hundred vertices),
//! so the algorithms favour exactness over asymptotics: Andrew's monotone
//! chain for hulls, closed-form moments, fan triangulation for sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MapPoint;

/// Cross products at or below this (map-units²) count as collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-9;

/// Convex polygon with counter-clockwise, strictly convex vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<MapPoint>,
}

/// Result of a hull computation. Degenerate inputs keep their true shape
/// instead of being inflated; see [`regularize_degenerate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Hull {
    Point(MapPoint),
    Segment(MapPoint, MapPoint),
    Polygon(ConvexPolygon),
}

impl Hull {
    pub fn vertices(&self) -> Vec<MapPoint> {
        match self {
            Hull::Point(p) => vec![*p],
            Hull::Segment(a, b) => vec![*a, *b],
            Hull::Polygon(p) => p.vertices.clone(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !matches!(self, Hull::Polygon(_))
    }

    pub fn area(&self) -> f64 {
        match self {
            Hull::Polygon(p) => p.area(),
            _ => 0.0,
        }
    }

    pub fn as_polygon(&self) -> Option<&ConvexPolygon> {
        match self {
            Hull::Polygon(p) => Some(p),
            _ => None,
        }
    }

    pub fn into_polygon(self) -> Result<ConvexPolygon> {
        match self {
            Hull::Polygon(p) => Ok(p),
            Hull::Point(_) => Err(Error::DegeneratePolygon("hull is a single point")),
            Hull::Segment(..) => Err(Error::DegeneratePolygon("hull is a segment")),
        }
    }
}

/// Convex hull of a point set (Andrew's monotone chain).
///
/// Output vertices are a subset of the input, counter-clockwise, starting
/// from the lexicographically smallest point. Collinear boundary points
/// are dropped.
pub fn convex_hull(points: &[MapPoint]) -> Result<Hull> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidParameter("non-finite hull input".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() == 1 {
        return Ok(Hull::Point(pts[0]));
    }

    let turn = |o: MapPoint, a: MapPoint, b: MapPoint| (a - o).cross(b - o);
    let mut hull: Vec<MapPoint> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2
            && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= COLLINEAR_TOLERANCE
        {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= COLLINEAR_TOLERANCE
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();

    match hull.len() {
        0 | 1 => Ok(Hull::Point(pts[0])),
        2 => Ok(Hull::Segment(hull[0], hull[1])),
        _ => Ok(Hull::Polygon(ConvexPolygon { vertices: hull })),
    }
}

/// Sensitivity hull `K = Conv({vᵢ − vⱼ})` over the vertices of a location
/// set's convex hull.
///
/// Any point set is accepted: it is reduced to its hull vertices first,
/// which leaves the result unchanged and keeps the pairwise step at `h²`.
pub fn sensitivity_hull(points: &[MapPoint]) -> Result<Hull> {
    let vertices = convex_hull(points)?.vertices();
    let mut diffs = Vec::with_capacity(vertices.len() * vertices.len());
    for &a in &vertices {
        for &b in &vertices {
            diffs.push(a - b);
        }
    }
    convex_hull(&diffs)
}

/// Widen a degenerate hull to a polygon: a point becomes a `w × w` square
/// centered on it, a segment a rectangle of width `w` around it.
pub fn regularize_degenerate(hull: Hull, width: f64) -> Result<ConvexPolygon> {
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "regularization width must be positive, got {width}"
        )));
    }
    let h = width / 2.0;
    match hull {
        Hull::Polygon(p) => Ok(p),
        Hull::Point(c) => ConvexPolygon::new(vec![
            c + MapPoint::new(-h, -h),
            c + MapPoint::new(h, -h),
            c + MapPoint::new(h, h),
            c + MapPoint::new(-h, h),
        ]),
        Hull::Segment(a, b) => {
            let d = b - a;
            let n = MapPoint::new(-d.y, d.x) * (h / d.norm());
            ConvexPolygon::new(vec![a - n, b - n, b + n, a + n])
        }
    }
}

impl ConvexPolygon {
    /// Build from counter-clockwise (or clockwise, which is reversed)
    /// strictly convex vertices.
    pub fn new(mut vertices: Vec<MapPoint>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon("fewer than three vertices"));
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) <= COLLINEAR_TOLERANCE {
                return Err(Error::DegeneratePolygon("vertices are not strictly convex"));
            }
        }
        Ok(ConvexPolygon { vertices })
    }

    pub fn vertices(&self) -> &[MapPoint] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn edges(&self) -> impl Iterator<Item = (MapPoint, MapPoint)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> MapPoint {
        let anchor = self.vertices[0];
        let mut acc = MapPoint::ORIGIN;
        let mut total = 0.0;
        for (a, b) in self.edges() {
            let w = (a - anchor).cross(b - anchor);
            acc = acc + (anchor + a + b) * w;
            total += w;
        }
        acc * (1.0 / (3.0 * total))
    }

    /// `(1/Area) ∫ y yᵀ dy` about the origin, in closed form.
    ///
    /// The polygon is fanned from its centroid; each triangle `(a, b, c)`
    /// contributes `Area/12 · (aaᵀ + bbᵀ + ccᵀ + ssᵀ)` with `s = a + b + c`.
    pub fn second_moment(&self) -> Matrix2 {
        let c = self.centroid();
        let mut acc = Matrix2::ZERO;
        let mut total = 0.0;
        for (a, b) in self.edges() {
            let area = (a - c).cross(b - c) / 2.0;
            let s = a + b + c;
            let m = Matrix2::outer(a, a)
                + Matrix2::outer(b, b)
                + Matrix2::outer(c, c)
                + Matrix2::outer(s, s);
            acc = acc + m * (area / 12.0);
            total += area;
        }
        acc * (1.0 / total)
    }

    /// Point-in-polygon with a small outward tolerance.
    pub fn contains(&self, p: MapPoint) -> bool {
        self.edges().all(|(a, b)| (b - a).cross(p - a) >= -1e-9)
    }

    pub fn scaled(&self, factor: f64) -> Result<ConvexPolygon> {
        apply_transform_polygon(&Matrix2::scale(factor), self)
    }

    pub fn translated(&self, offset: MapPoint) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|&v| v + offset).collect(),
        }
    }

    pub fn norm(&self) -> Result<MinkowskiNorm> {
        MinkowskiNorm::new(self)
    }

    pub fn sampler(&self) -> PolygonSampler {
        PolygonSampler::new(self)
    }
}

fn signed_area(vertices: &[MapPoint]) -> f64 {
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum();
    twice / 2.0
}

pub fn polygon_area(p: &ConvexPolygon) -> f64 {
    p.area()
}

pub fn second_moment(p: &ConvexPolygon) -> Matrix2 {
    p.second_moment()
}

/// 2×2 real matrix, row-major `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Matrix2 = Matrix2::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Matrix2 { a, b, c, d }
    }

    pub fn scale(s: f64) -> Self {
        Matrix2::new(s, 0.0, 0.0, s)
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn outer(u: MapPoint, v: MapPoint) -> Self {
        Matrix2::new(u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Matrix2 {
        Matrix2::new(self.a, self.c, self.b, self.d)
    }

    pub fn inverse(&self) -> Result<Matrix2> {
        let det = self.det();
        let scale = self.frobenius().powi(2).max(f64::MIN_POSITIVE);
        if !det.is_finite() || det.abs() <= 1e-12 * scale {
            return Err(Error::SingularMatrix(det));
        }
        Ok(Matrix2::new(
            self.d / det,
            -self.b / det,
            -self.c / det,
            self.a / det,
        ))
    }

    pub fn apply(&self, p: MapPoint) -> MapPoint {
        MapPoint::new(self.a * p.x + self.b * p.y, self.c * p.x + self.d * p.y)
    }

    pub fn frobenius(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// Eigenvalues of a symmetric matrix, ascending.
    pub fn symmetric_eigenvalues(&self) -> (f64, f64) {
        let mean = self.trace() / 2.0;
        let r = (((self.a - self.d) / 2.0).powi(2) + self.b * self.c)
            .max(0.0)
            .sqrt();
        (mean - r, mean + r)
    }

    /// `S^{-1/2}` for symmetric positive definite `S`.
    ///
    /// Uses `√S = (S + √det·I) / √(tr + 2√det)`, exact for 2×2 SPD.
    pub fn inverse_sqrt_spd(&self) -> Result<Matrix2> {
        if (self.b - self.c).abs() > 1e-9 * self.frobenius().max(1.0) {
            return Err(Error::InvalidParameter("matrix is not symmetric".into()));
        }
        let (lo, _) = self.symmetric_eigenvalues();
        let det = self.det();
        if !(lo > 0.0) || !(det > 0.0) {
            return Err(Error::SingularMatrix(det));
        }
        let s = det.sqrt();
        let t = (self.trace() + 2.0 * s).sqrt();
        let root = (*self + Matrix2::scale(s)) * (1.0 / t);
        root.inverse()
    }
}

impl std::ops::Add for Matrix2 {
    type Output = Matrix2;
    fn add(self, o: Matrix2) -> Matrix2 {
        Matrix2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl std::ops::Sub for Matrix2 {
    type Output = Matrix2;
    fn sub(self, o: Matrix2) -> Matrix2 {
        Matrix2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

impl std::ops::Mul<f64> for Matrix2 {
    type Output = Matrix2;
    fn mul(self, s: f64) -> Matrix2 {
        Matrix2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }
}

impl std::ops::Mul for Matrix2 {
    type Output = Matrix2;
    fn mul(self, o: Matrix2) -> Matrix2 {
        Matrix2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

/// Transform `T = Σ^{-1/2}` putting `p` in isotropic position, where `Σ` is
/// the exact second moment of the uniform distribution on `p`.
pub fn isotropic_transform(p: &ConvexPolygon) -> Result<Matrix2> {
    p.second_moment().inverse_sqrt_spd()
}

/// Sampling-based estimate of the isotropic transform.
///
/// Draws `l` uniform points, forms `T = ((1/l) Σ yᵢyᵢᵀ)^{-1/2}`, then draws a
/// second independent `T′`; accepts once `‖T′ − T‖_F < tolerance`,
/// otherwise doubles `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropyEstimator {
    pub initial_samples: usize,
    pub tolerance: f64,
    pub max_samples: usize,
}

impl Default for IsotropyEstimator {
    fn default() -> Self {
        IsotropyEstimator {
            initial_samples: 10_000,
            tolerance: 1e-3,
            max_samples: 1 << 26,
        }
    }
}

/// Outcome of [`IsotropyEstimator::estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropyEstimate {
    pub transform: Matrix2,
    pub samples: usize,
    pub stable: bool,
}

impl IsotropyEstimator {
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        p: &ConvexPolygon,
        rng: &mut R,
    ) -> Result<IsotropyEstimate> {
        if self.initial_samples == 0 || !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(
                "estimator needs samples and a positive tolerance".into(),
            ));
        }
        let sampler = p.sampler();
        let mut l = self.initial_samples;
        let mut current = Self::draw(&sampler, l, rng)?;
        loop {
            let next = Self::draw(&sampler, l, rng)?;
            let stable = (next - current).frobenius() < self.tolerance;
            if stable || l >= self.max_samples {
                return Ok(IsotropyEstimate {
                    transform: next,
                    samples: l,
                    stable,
                });
            }
            current = next;
            l = (l * 2).min(self.max_samples);
        }
    }

    fn draw<R: Rng + ?Sized>(sampler: &PolygonSampler, l: usize, rng: &mut R) -> Result<Matrix2> {
        let mut acc = Matrix2::ZERO;
        for _ in 0..l {
            let y = sampler.sample(rng);
            acc = acc + Matrix2::outer(y, y);
        }
        (acc * (1.0 / l as f64)).inverse_sqrt_spd()
    }
}

pub fn apply_transform_point(t: &Matrix2, p: MapPoint) -> MapPoint {
    t.apply(p)
}

/// Linear image of a polygon. Orientation is restored when `det(T) < 0`.
pub fn apply_transform_polygon(t: &Matrix2, p: &ConvexPolygon) -> Result<ConvexPolygon> {
    let det = t.det();
    t.inverse()?;
    let mut vertices: Vec<MapPoint> = p.vertices.iter().map(|&v| t.apply(v)).collect();
    if det < 0.0 {
        vertices.reverse();
    }
    Ok(ConvexPolygon { vertices })
}

/// Gauge (Minkowski functional) of a convex polygon whose interior holds
/// the origin: `‖v‖ = min{r ≥ 0 : v ∈ r·P}`.
///
/// Each edge `i` is stored as its outward normal `nᵢ` scaled so that
/// `nᵢ·x = 1` on the edge line. The gauge is then `maxᵢ nᵢ·v`, attained on
/// the edge crossed by the ray from the origin through `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinkowskiNorm {
    facets: Vec<MapPoint>,
}

impl MinkowskiNorm {
    pub fn new(p: &ConvexPolygon) -> Result<Self> {
        let mut facets = Vec::with_capacity(p.len());
        for (a, b) in p.edges() {
            let e = b - a;
            let outward = MapPoint::new(e.y, -e.x);
            let offset = outward.dot(a);
            // offset is twice the area of triangle (0, a, b)
            if !(offset > COLLINEAR_TOLERANCE) {
                return Err(Error::OriginNotInterior);
            }
            facets.push(outward * (1.0 / offset));
        }
        Ok(MinkowskiNorm { facets })
    }

    pub fn eval(&self, v: MapPoint) -> f64 {
        self.facets.iter().map(|n| n.dot(v)).fold(0.0, f64::max)
    }
}

pub fn minkowski_norm(p: &ConvexPolygon, v: MapPoint) -> Result<f64> {
    Ok(MinkowskiNorm::new(p)?.eval(v))
}

/// Exact uniform sampler over a convex polygon: area-weighted choice of a
/// fan triangle, then a reflected barycentric draw inside it.
#[derive(Debug, Clone)]
pub struct PolygonSampler {
    apex: MapPoint,
    triangles: Vec<(MapPoint, MapPoint)>,
    cumulative: Vec<f64>,
}

impl PolygonSampler {
    pub fn new(p: &ConvexPolygon) -> Self {
        let apex = p.vertices[0];
        let mut triangles = Vec::with_capacity(p.len() - 2);
        let mut cumulative = Vec::with_capacity(p.len() - 2);
        let mut total = 0.0;
        for w in p.vertices[1..].windows(2) {
            let (u, v) = (w[0] - apex, w[1] - apex);
            total += u.cross(v) / 2.0;
            triangles.push((u, v));
            cumulative.push(total);
        }
        PolygonSampler {
            apex,
            triangles,
            cumulative,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MapPoint {
        let total = *self.cumulative.last().expect("polygon has a triangle");
        let target = rng.random::<f64>() * total;
        let k = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(self.triangles.len() - 1);
        let (u, v) = self.triangles[k];
        let mut s: f64 = rng.random();
        let mut t: f64 = rng.random();
        if s + t > 1.0 {
            s = 1.0 - s;
            t = 1.0 - t;
        }
        self.apex + u * s + v * t
    }
}

pub fn sample_uniform<R: Rng + ?Sized>(p: &ConvexPolygon, rng: &mut R) -> MapPoint {
    p.sampler().sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64) -> MapPoint {
        MapPoint::new(x, y)
    }

    fn square(h: f64) -> ConvexPolygon {
        ConvexPolygon::new(vec![pt(-h, -h), pt(h, -h), pt(h, h), pt(-h, h)]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn hull_drops_interior_point() {
        let h = convex_hull(&[pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0), pt(0.2, 0.2)]).unwrap();
        assert_eq!(h.vertices(), vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0)]);
    }

    #[test]
    fn hull_degenerate_cases() {
        assert_eq!(
            convex_hull(&[pt(0.0, 0.0), pt(1.0, 1.0)]).unwrap(),
            Hull::Segment(pt(0.0, 0.0), pt(1.0, 1.0))
        );
        assert_eq!(
            convex_hull(&[pt(2.0, 3.0); 4]).unwrap(),
            Hull::Point(pt(2.0, 3.0))
        );
        let line = convex_hull(&[pt(0.0, 0.0), pt(1.0, 1.0), pt(2.0, 2.0), pt(0.5, 0.5)]).unwrap();
        assert_eq!(line, Hull::Segment(pt(0.0, 0.0), pt(2.0, 2.0)));
        assert!(matches!(convex_hull(&[]), Err(Error::EmptyPointSet)));
    }

    #[test]
    fn hull_drops_collinear_boundary_points() {
        let h = convex_hull(&[
            pt(0.0, 0.0),
            pt(1.0, 0.0),
            pt(2.0, 0.0),
            pt(2.0, 2.0),
            pt(0.0, 2.0),
        ])
        .unwrap();
        assert_eq!(h.vertices().len(), 4);
    }

    #[test]
    fn sensitivity_hull_of_triangle() {
        let k = sensitivity_hull(&[pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0)]).unwrap();
        let k = k.into_polygon().unwrap();
        let mut got = k.vertices().to_vec();
        got.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        assert_eq!(
            got,
            vec![
                pt(-1.0, 0.0),
                pt(-1.0, 1.0),
                pt(0.0, -1.0),
                pt(0.0, 1.0),
                pt(1.0, -1.0),
                pt(1.0, 0.0)
            ]
        );
        assert!(close(k.area(), 3.0, 1e-12));
    }

    #[test]
    fn sensitivity_hull_degenerate() {
        assert_eq!(
            sensitivity_hull(&[pt(0.0, 0.0), pt(1.0, 0.0)]).unwrap(),
            Hull::Segment(pt(-1.0, 0.0), pt(1.0, 0.0))
        );
        assert_eq!(
            sensitivity_hull(&[pt(3.0, 4.0)]).unwrap(),
            Hull::Point(MapPoint::ORIGIN)
        );
    }

    #[test]
    fn areas() {
        assert!(close(square(0.5).area(), 1.0, 1e-15));
        let tri = ConvexPolygon::new(vec![pt(0.0, 0.0), pt(2.0, 0.0), pt(0.0, 2.0)]).unwrap();
        assert!(close(polygon_area(&tri), 2.0, 1e-15));
        assert_eq!(Hull::Segment(pt(0.0, 0.0), pt(1.0, 0.0)).area(), 0.0);
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let p = ConvexPolygon::new(vec![pt(0.0, 0.0), pt(0.0, 1.0), pt(1.0, 0.0)]).unwrap();
        assert!(p.area() > 0.0);
        assert!(ConvexPolygon::new(vec![pt(0.0, 0.0), pt(1.0, 0.0)]).is_err());
        assert!(ConvexPolygon::new(vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(2.0, 0.0)]).is_err());
    }

    #[test]
    fn square_moment_and_transform() {
        let s = square(1.0);
        let m = s.second_moment();
        for (got, want) in m.entries().iter().zip([1.0 / 3.0, 0.0, 0.0, 1.0 / 3.0]) {
            assert!(close(*got, want, 1e-15));
        }
        let t = isotropic_transform(&s).unwrap();
        for (got, want) in t.entries().iter().zip([3f64.sqrt(), 0.0, 0.0, 3f64.sqrt()]) {
            assert!(close(*got, want, 1e-12));
        }
    }

    #[test]
    fn off_center_triangle_moment() {
        // ∫∫ x² over the triangle (0,0),(1,0),(0,1) is 1/12, area 1/2
        let tri = ConvexPolygon::new(vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0)]).unwrap();
        let m = tri.second_moment();
        assert!(close(m.a, 1.0 / 6.0, 1e-15));
        assert!(close(m.b, 1.0 / 12.0, 1e-15));
        assert!(close(m.d, 1.0 / 6.0, 1e-15));
    }

    #[test]
    fn rotated_rectangle_axes() {
        // rectangle 4 × 1 rotated by 30°: Σ = R diag(4/3, 1/12) Rᵀ
        let theta = 30f64.to_radians();
        let r = Matrix2::rotation(theta);
        let rect = ConvexPolygon::new(vec![
            pt(-2.0, -0.5),
            pt(2.0, -0.5),
            pt(2.0, 0.5),
            pt(-2.0, 0.5),
        ])
        .unwrap();
        let rotated = apply_transform_polygon(&r, &rect).unwrap();
        let t = isotropic_transform(&rotated).unwrap();
        let expected = r * Matrix2::new(3f64.sqrt() / 2.0, 0.0, 0.0, 12f64.sqrt()) * r.transpose();
        assert!((t - expected).frobenius() < 1e-9);
        let axis = r.apply(pt(1.0, 0.0));
        let image = t.apply(axis);
        assert!(image.cross(axis).abs() < 1e-6);
    }

    #[test]
    fn isotropic_position_has_identity_moment() {
        let p = ConvexPolygon::new(vec![
            pt(-3.0, -1.0),
            pt(2.0, -0.5),
            pt(4.0, 2.0),
            pt(-1.0, 1.5),
        ])
        .unwrap();
        let t = isotropic_transform(&p).unwrap();
        let iso = apply_transform_polygon(&t, &p).unwrap();
        assert!((iso.second_moment() - Matrix2::IDENTITY).frobenius() < 1e-9);
    }

    #[test]
    fn inverse_sqrt_rejects_singular() {
        assert!(Matrix2::new(1.0, 0.0, 0.0, 0.0).inverse_sqrt_spd().is_err());
        assert!(Matrix2::new(1.0, 2.0, 0.0, 1.0).inverse_sqrt_spd().is_err());
    }

    #[test]
    fn norm_on_square() {
        let s = square(1.0);
        assert!(close(minkowski_norm(&s, pt(0.5, 0.0)).unwrap(), 0.5, 1e-15));
        assert!(close(minkowski_norm(&s, pt(2.0, 2.0)).unwrap(), 2.0, 1e-15));
        assert_eq!(minkowski_norm(&s, MapPoint::ORIGIN).unwrap(), 0.0);
    }

    #[test]
    fn norm_requires_interior_origin() {
        let off = square(1.0).translated(pt(1.0, 0.0));
        assert!(matches!(
            minkowski_norm(&off, pt(1.0, 0.0)),
            Err(Error::OriginNotInterior)
        ));
    }

    #[test]
    fn transform_round_trip() {
        let t = Matrix2::new(2.0, 0.3, -0.7, 0.5);
        let p = ConvexPolygon::new(vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(0.5, 2.0)]).unwrap();
        let back = apply_transform_polygon(
            &t.inverse().unwrap(),
            &apply_transform_polygon(&t, &p).unwrap(),
        )
        .unwrap();
        for (a, b) in p.vertices().iter().zip(back.vertices()) {
            assert!(a.distance(*b) < 1e-9);
        }
        let doubled = apply_transform_polygon(&Matrix2::scale(2.0), &square(0.5)).unwrap();
        assert!(close(doubled.area(), 4.0, 1e-12));
        assert_eq!(apply_transform_polygon(&Matrix2::IDENTITY, &p).unwrap(), p);
        assert!(apply_transform_polygon(&Matrix2::ZERO, &p).is_err());
        // reflection keeps counter-clockwise order
        let flipped = apply_transform_polygon(&Matrix2::new(-1.0, 0.0, 0.0, 1.0), &p).unwrap();
        assert!(flipped.area() > 0.0);
    }

    #[test]
    fn regularization() {
        let sq = regularize_degenerate(Hull::Point(MapPoint::ORIGIN), 1.0).unwrap();
        assert_eq!(sq, square(0.5));
        let rect = regularize_degenerate(Hull::Segment(pt(-1.0, 0.0), pt(1.0, 0.0)), 1.0).unwrap();
        assert!(close(rect.area(), 2.0, 1e-12));
        let tri = ConvexPolygon::new(vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0)]).unwrap();
        assert_eq!(
            regularize_degenerate(Hull::Polygon(tri.clone()), 1.0).unwrap(),
            tri
        );
        assert!(regularize_degenerate(Hull::Point(MapPoint::ORIGIN), 0.0).is_err());
    }

    #[test]
    fn samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ConvexPolygon::new(vec![
            pt(-3.0, -1.0),
            pt(2.0, -0.5),
            pt(4.0, 2.0),
            pt(-1.0, 1.5),
        ])
        .unwrap();
        let sampler = p.sampler();
        for _ in 0..10_000 {
            assert!(p.contains(sampler.sample(&mut rng)));
        }
    }

    #[test]
    fn estimator_converges_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ConvexPolygon::new(vec![pt(-3.0, -1.0), pt(3.0, 1.0), pt(-1.0, 1.0)]).unwrap();
        let c = p.centroid();
        let p = p.translated(-c);
        let estimator = IsotropyEstimator {
            tolerance: 5e-3,
            ..IsotropyEstimator::default()
        };
        let est = estimator.estimate(&p, &mut rng).unwrap();
        assert!(est.stable);
        let exact = isotropic_transform(&p).unwrap();
        assert!((est.transform - exact).frobenius() < 1e-2);
    }
}
