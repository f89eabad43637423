//! File formats: trajectory CSVs, POI CSVs and the JSON-lines release log.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellIndex, GridConfig, MapPoint};
use crate::harness::config::Projection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryFormat {
    /// `timestamp,lat,lon`
    #[serde(rename = "latlon-csv")]
    LatLonCsv,
    /// `timestamp,cell`
    #[serde(rename = "cell-csv")]
    CellCsv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrajectory {
    pub cells: Vec<CellIndex>,
    /// Rows that fell outside the grid.
    pub dropped: usize,
}

fn fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

/// Data lines with their 1-based line numbers. Blank lines and `#`
/// comments are skipped, as is a first line whose leading field is not a
/// number (a header).
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut first = true;
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .filter(move |(_, l)| {
            let header = first && fields(l)[0].parse::<f64>().is_err();
            first = false;
            !header
        })
}

/// Read one trajectory file.
///
/// Timestamps must strictly increase. Rows that land outside the grid are
/// dropped and counted.
pub fn parse_trajectories(
    path: &Path,
    format: TrajectoryFormat,
    grid: &GridConfig,
    projection: Option<&Projection>,
) -> Result<ParsedTrajectory> {
    let text = fs::read_to_string(path)?;
    parse_trajectory_text(&text, &path.display().to_string(), format, grid, projection)
}

pub fn parse_trajectory_text(
    text: &str,
    origin: &str,
    format: TrajectoryFormat,
    grid: &GridConfig,
    projection: Option<&Projection>,
) -> Result<ParsedTrajectory> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let width = match format {
        TrajectoryFormat::CellCsv => 2,
        TrajectoryFormat::LatLonCsv => 3,
    };
    let projection = match (format, projection) {
        (TrajectoryFormat::LatLonCsv, None) => {
            return Err(Error::Config("latlon-csv needs a projection".into()));
        }
        (_, p) => p,
    };

    let mut cells = Vec::new();
    let mut dropped = 0;
    let mut last_time: Option<f64> = None;
    for (n, line) in data_lines(text) {
        let f = fields(line);
        if f.len() != width {
            return Err(err(n, format!("expected {width} fields, got {}", f.len())));
        }
        let time: f64 = f[0]
            .parse()
            .map_err(|_| err(n, format!("bad timestamp {:?}", f[0])))?;
        if let Some(prev) = last_time {
            if !(time > prev) {
                return Err(err(n, format!("timestamp {time} does not follow {prev}")));
            }
        }
        last_time = Some(time);

        let cell = match format {
            TrajectoryFormat::CellCsv => {
                let i: usize = f[1]
                    .parse()
                    .map_err(|_| err(n, format!("bad cell {:?}", f[1])))?;
                (i < grid.len()).then_some(CellIndex(i))
            }
            TrajectoryFormat::LatLonCsv => {
                let lat: f64 = f[1]
                    .parse()
                    .map_err(|_| err(n, format!("bad latitude {:?}", f[1])))?;
                let lon: f64 = f[2]
                    .parse()
                    .map_err(|_| err(n, format!("bad longitude {:?}", f[2])))?;
                let p = projection.expect("checked above").project(lat, lon);
                grid.coord_to_cell(p)
            }
        };
        match cell {
            Some(c) => cells.push(c),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{origin}: dropped {dropped} rows outside the grid");
    }
    if cells.is_empty() {
        return Err(err(0, "no usable rows".into()));
    }
    Ok(ParsedTrajectory { cells, dropped })
}

/// POIs as `x,y` rows in map units.
pub fn parse_pois(path: &Path) -> Result<Vec<MapPoint>> {
    let text = fs::read_to_string(path)?;
    parse_poi_text(&text, &path.display().to_string())
}

pub fn parse_poi_text(text: &str, origin: &str) -> Result<Vec<MapPoint>> {
    data_lines(text)
        .map(|(n, line)| {
            let f = fields(line);
            let bad = || Error::Parse {
                path: origin.to_string(),
                line: n,
                msg: format!("expected `x,y`, got {line:?}"),
            };
            if f.len() != 2 {
                return Err(bad());
            }
            let x: f64 = f[0].parse().map_err(|_| bad())?;
            let y: f64 = f[1].parse().map_err(|_| bad())?;
            Ok(MapPoint::new(x, y))
        })
        .collect()
}

/// One line of the release log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub trajectory: usize,
    pub repetition: usize,
    pub t: usize,
    pub true_cell: usize,
    pub true_x: f64,
    pub true_y: f64,
    pub delta_set: Vec<usize>,
    pub covered_mass: f64,
    pub drifted: bool,
    pub surrogate: Option<usize>,
    pub z_x: f64,
    pub z_y: f64,
    pub mechanism: String,
    pub epsilon: f64,
    /// Area of the sensitivity hull (PIM).
    pub hull_area: Option<f64>,
    /// Row-major isotropic transform `T` (PIM).
    pub transform: Option<[f64; 4]>,
    /// Per-axis Laplace scale (LM).
    pub laplace_scale: Option<f64>,
}

impl LogRecord {
    pub fn released(&self) -> MapPoint {
        MapPoint::new(self.z_x, self.z_y)
    }

    pub fn truth(&self) -> MapPoint {
        MapPoint::new(self.true_x, self.true_y)
    }
}

pub fn write_log<W: Write>(records: &[LogRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: n + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
