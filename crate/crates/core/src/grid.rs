//! Discretized map: a rectangular partition into equally sized square cells.
//!
//! Cells are indexed row-major, `i = row * cols + col`, with row 0 at
//! `min_y` and column 0 at `min_x`. The "location" of a cell is its center.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in continuous map coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MapPoint {
    pub x: f64,
    pub y: f64,
}

impl MapPoint {
    pub const ORIGIN: MapPoint = MapPoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        MapPoint { x, y }
    }

    pub fn dot(self, other: MapPoint) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: MapPoint) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: MapPoint) -> f64 {
        (self - other).norm()
    }
}

impl Add for MapPoint {
    type Output = MapPoint;
    fn add(self, rhs: MapPoint) -> MapPoint {
        MapPoint::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for MapPoint {
    type Output = MapPoint;
    fn sub(self, rhs: MapPoint) -> MapPoint {
        MapPoint::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for MapPoint {
    type Output = MapPoint;
    fn neg(self) -> MapPoint {
        MapPoint::new(-self.x, -self.y)
    }
}

impl Mul<f64> for MapPoint {
    type Output = MapPoint;
    fn mul(self, rhs: f64) -> MapPoint {
        MapPoint::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<MapPoint> for f64 {
    type Output = MapPoint;
    fn mul(self, rhs: MapPoint) -> MapPoint {
        rhs * self
    }
}

impl fmt::Display for MapPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Index of a grid cell (a state of the Markov model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellIndex(pub usize);

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl From<usize> for CellIndex {
    fn from(i: usize) -> Self {
        CellIndex(i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub min_x: f64,
    pub min_y: f64,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridConfig {
    pub fn new(min_x: f64, min_y: f64, cell_size: f64, rows: usize, cols: usize) -> Result<Self> {
        let g = GridConfig {
            min_x,
            min_y,
            cell_size,
            rows,
            cols,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unit-origin grid, handy for synthetic scenarios.
    pub fn square(n: usize, cell_size: f64) -> Result<Self> {
        Self::new(0.0, 0.0, cell_size, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "cell_size must be positive, got {}",
                self.cell_size
            )));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidGrid(format!(
                "grid must have at least one row and column, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !self.min_x.is_finite() || !self.min_y.is_finite() {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    /// Number of cells, `m`.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_x(&self) -> f64 {
        self.min_x + self.cols as f64 * self.cell_size
    }

    pub fn max_y(&self) -> f64 {
        self.min_y + self.rows as f64 * self.cell_size
    }

    pub fn check(&self, i: CellIndex) -> Result<()> {
        if i.0 < self.len() {
            Ok(())
        } else {
            Err(Error::CellOutOfRange {
                index: i.0,
                len: self.len(),
            })
        }
    }

    pub fn index(&self, row: usize, col: usize) -> Result<CellIndex> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::InvalidParameter(format!(
                "(row {row}, col {col}) outside a {}x{} grid",
                self.rows, self.cols
            )));
        }
        Ok(CellIndex(row * self.cols + col))
    }

    pub fn row_col(&self, i: CellIndex) -> Result<(usize, usize)> {
        self.check(i)?;
        Ok((i.0 / self.cols, i.0 % self.cols))
    }

    pub fn cell_center(&self, i: CellIndex) -> Result<MapPoint> {
        let (row, col) = self.row_col(i)?;
        Ok(MapPoint::new(
            self.min_x + (col as f64 + 0.5) * self.cell_size,
            self.min_y + (row as f64 + 0.5) * self.cell_size,
        ))
    }

    /// Cell containing `p`, or `None` when `p` lies outside the grid.
    ///
    /// Cells are half-open `[lo, hi)` along each axis, except that the far
    /// edge of the map belongs to the last row/column.
    pub fn coord_to_cell(&self, p: MapPoint) -> Option<CellIndex> {
        let col = axis_slot(p.x, self.min_x, self.cell_size, self.cols)?;
        let row = axis_slot(p.y, self.min_y, self.cell_size, self.rows)?;
        Some(CellIndex(row * self.cols + col))
    }

    pub fn cell_distance(&self, a: CellIndex, b: CellIndex) -> Result<f64> {
        Ok(self.squared_offset(a, b)?.sqrt_scaled(self.cell_size))
    }

    /// Squared center-to-center offset in whole cells. Exact, so it orders
    /// distances without rounding ties apart.
    pub fn squared_offset(&self, a: CellIndex, b: CellIndex) -> Result<CellOffset> {
        let (ra, ca) = self.row_col(a)?;
        let (rb, cb) = self.row_col(b)?;
        let dr = ra.abs_diff(rb) as u64;
        let dc = ca.abs_diff(cb) as u64;
        Ok(CellOffset(dr * dr + dc * dc))
    }
}

/// Squared distance between two cell centers, in units of cells².
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellOffset(pub u64);

impl CellOffset {
    fn sqrt_scaled(self, cell_size: f64) -> f64 {
        (self.0 as f64).sqrt() * cell_size
    }
}

fn axis_slot(v: f64, lo: f64, size: f64, n: usize) -> Option<usize> {
    let hi = lo + n as f64 * size;
    if !(v >= lo && v <= hi) {
        return None;
    }
    let slot = ((v - lo) / size).floor() as usize;
    Some(slot.min(n - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(rows: usize, cols: usize) -> GridConfig {
        GridConfig::new(0.0, 0.0, 1.0, rows, cols).unwrap()
    }

    #[test]
    fn single_cell_center() {
        assert_eq!(
            unit(1, 1).cell_center(CellIndex(0)).unwrap(),
            MapPoint::new(0.5, 0.5)
        );
    }

    #[test]
    fn row_major_layout() {
        let g = unit(2, 2);
        let i = g.index(1, 0).unwrap();
        assert_eq!(i, CellIndex(2));
        assert_eq!(g.cell_center(i).unwrap(), MapPoint::new(0.5, 1.5));
    }

    #[test]
    fn scaled_center() {
        let g = GridConfig::new(0.0, 0.0, 0.34, 10, 10).unwrap();
        let c = g.cell_center(g.index(4, 2).unwrap()).unwrap();
        assert!((c.x - 2.5 * 0.34).abs() < 1e-12);
        assert!((c.y - 4.5 * 0.34).abs() < 1e-12);
        assert!((c.x - 0.85).abs() < 1e-12 && (c.y - 1.53).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_index() {
        assert!(matches!(
            unit(2, 2).cell_center(CellIndex(4)),
            Err(Error::CellOutOfRange { index: 4, len: 4 })
        ));
    }

    #[test]
    fn coord_lookup() {
        let g = unit(1, 1);
        assert_eq!(g.coord_to_cell(MapPoint::new(0.5, 0.5)), Some(CellIndex(0)));
        assert_eq!(g.coord_to_cell(MapPoint::new(-1.0, 0.0)), None);
        assert_eq!(g.coord_to_cell(MapPoint::new(0.5, f64::NAN)), None);
    }

    #[test]
    fn boundary_resolution() {
        let g = unit(2, 2);
        // interior edge goes to the larger index
        assert_eq!(g.coord_to_cell(MapPoint::new(1.0, 0.5)), Some(CellIndex(1)));
        assert_eq!(g.coord_to_cell(MapPoint::new(0.5, 1.0)), Some(CellIndex(2)));
        // the far edge resolves inward
        assert_eq!(g.coord_to_cell(MapPoint::new(2.0, 2.0)), Some(CellIndex(3)));
        assert_eq!(g.coord_to_cell(MapPoint::new(0.0, 0.0)), Some(CellIndex(0)));
        assert_eq!(g.coord_to_cell(MapPoint::new(2.0 + 1e-12, 1.0)), None);
    }

    #[test]
    fn center_round_trip() {
        let g = GridConfig::new(-3.0, 7.5, 0.34, 5, 7).unwrap();
        for i in 0..g.len() {
            let c = g.cell_center(CellIndex(i)).unwrap();
            assert_eq!(g.coord_to_cell(c), Some(CellIndex(i)));
        }
    }

    #[test]
    fn distances() {
        let g = unit(3, 3);
        assert_eq!(g.cell_distance(CellIndex(4), CellIndex(4)).unwrap(), 0.0);
        assert_eq!(g.cell_distance(CellIndex(0), CellIndex(1)).unwrap(), 1.0);
        assert!((g.cell_distance(CellIndex(0), CellIndex(4)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(g.cell_distance(CellIndex(0), CellIndex(9)).is_err());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridConfig::new(0.0, 0.0, 0.0, 1, 1).is_err());
        assert!(GridConfig::new(0.0, 0.0, -1.0, 1, 1).is_err());
        assert!(GridConfig::new(0.0, 0.0, 1.0, 0, 1).is_err());
        assert!(GridConfig::new(0.0, 0.0, 1.0, 1, 0).is_err());
    }
}
