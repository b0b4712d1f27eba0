//! Occupancy grid of stationary obstacles, learned from attack-free runs and
//! queried as a predictor of what the distance sensor should read.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};
use crate::world::{clamp_reading, Pose, SENSOR_MAX, SENSOR_MIN};
use crate::{Error, Result};

pub const MAP_VERSION: u32 = 1;

/// One genuine observation: where the robot stood and what the sensor said.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub pose: Pose,
    pub reading: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub scenario: String,
    pub seed: u64,
    pub passes: usize,
}

/// On-disk layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    version: u32,
    resolution: f64,
    bounds: Rect,
    origin: Point,
    width: usize,
    height: usize,
    sensor_offset: f64,
    occupied: Vec<usize>,
    provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapFile", into = "MapFile")]
pub struct HistoricalMap {
    pub resolution: f64,
    /// Area the robot may occupy; queries outside fail.
    pub bounds: Rect,
    /// Lower-left corner of cell 0; one cell of padding around `bounds`.
    pub origin: Point,
    pub width: usize,
    pub height: usize,
    /// Distance from the robot centre to the sensor face.
    pub sensor_offset: f64,
    pub provenance: Provenance,
    cells: Vec<bool>,
}

impl TryFrom<MapFile> for HistoricalMap {
    type Error = String;

    fn try_from(f: MapFile) -> std::result::Result<Self, String> {
        if f.version != MAP_VERSION {
            return Err(format!("unsupported map version {}", f.version));
        }
        if !(f.resolution > 0.0) || !f.bounds.is_valid() {
            return Err("map resolution and bounds must be positive".into());
        }
        let n = f.width * f.height;
        let mut cells = vec![false; n];
        for i in f.occupied {
            *cells
                .get_mut(i)
                .ok_or_else(|| format!("occupied cell {i} outside a {n}-cell grid"))? = true;
        }
        Ok(Self {
            resolution: f.resolution,
            bounds: f.bounds,
            origin: f.origin,
            width: f.width,
            height: f.height,
            sensor_offset: f.sensor_offset,
            provenance: f.provenance,
            cells,
        })
    }
}

impl From<HistoricalMap> for MapFile {
    fn from(m: HistoricalMap) -> Self {
        let occupied = m.occupied_cells().collect();
        MapFile {
            version: MAP_VERSION,
            resolution: m.resolution,
            bounds: m.bounds,
            origin: m.origin,
            width: m.width,
            height: m.height,
            sensor_offset: m.sensor_offset,
            occupied,
            provenance: m.provenance,
        }
    }
}

impl HistoricalMap {
    pub fn empty(
        bounds: Rect,
        resolution: f64,
        sensor_offset: f64,
        provenance: Provenance,
    ) -> Self {
        let origin = bounds.min.offset(-resolution, -resolution);
        let width = ((bounds.max.x - bounds.min.x) / resolution).ceil() as usize + 2;
        let height = ((bounds.max.y - bounds.min.y) / resolution).ceil() as usize + 2;
        Self {
            resolution,
            bounds,
            origin,
            width,
            height,
            sensor_offset,
            provenance,
            cells: vec![false; width * height],
        }
    }

    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let cx = ((p.x - self.origin.x) / self.resolution).floor();
        let cy = ((p.y - self.origin.y) / self.resolution).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
            return None;
        }
        Some((cx as usize, cy as usize))
    }

    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn is_occupied(&self, cx: usize, cy: usize) -> bool {
        cx < self.width && cy < self.height && self.cells[self.index(cx, cy)]
    }

    pub fn mark(&mut self, p: Point) -> bool {
        match self.cell_of(p) {
            Some((cx, cy)) => {
                let i = self.index(cx, cy);
                self.cells[i] = true;
                true
            }
            None => false,
        }
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, &o)| o.then_some(i))
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied_cells().count()
    }

    /// Predicted sensor reading at `pose`: a grid walk from the sensor face
    /// to the first occupied cell, clamped to the sensor range.
    pub fn expected_distance(&self, pose: &Pose) -> Result<f64> {
        if !pose.is_finite() || !self.bounds.contains(pose.position()) {
            return Err(Error::OutsideMap {
                x: pose.x,
                y: pose.y,
            });
        }
        let face = pose.ahead(self.sensor_offset);
        let (dx, dy) = pose.dir();
        let Some((mut cx, mut cy)) = self.cell_of(face) else {
            return Ok(SENSOR_MIN);
        };
        if self.is_occupied(cx, cy) {
            return Ok(SENSOR_MIN);
        }
        let res = self.resolution;
        let axis = |pos: f64, origin: f64, cell: usize, d: f64| -> (f64, f64) {
            if d > 0.0 {
                let boundary = origin + (cell as f64 + 1.0) * res;
                ((boundary - pos) / d, res / d)
            } else if d < 0.0 {
                let boundary = origin + cell as f64 * res;
                ((boundary - pos) / d, -res / d)
            } else {
                (f64::INFINITY, f64::INFINITY)
            }
        };
        let (mut tx, step_x) = axis(face.x, self.origin.x, cx, dx);
        let (mut ty, step_y) = axis(face.y, self.origin.y, cy, dy);
        loop {
            let t = tx.min(ty);
            if t > SENSOR_MAX {
                return Ok(SENSOR_MAX);
            }
            if tx <= ty {
                if dx > 0.0 {
                    cx += 1;
                } else if cx == 0 {
                    return Ok(SENSOR_MAX);
                } else {
                    cx -= 1;
                }
                tx += step_x;
            } else {
                if dy > 0.0 {
                    cy += 1;
                } else if cy == 0 {
                    return Ok(SENSOR_MAX);
                } else {
                    cy -= 1;
                }
                ty += step_y;
            }
            if cx >= self.width || cy >= self.height {
                return Ok(SENSOR_MAX);
            }
            if self.is_occupied(cx, cy) {
                return Ok(clamp_reading(t));
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Parse {
            what: "map".into(),
            source,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Parse {
            what: "map".into(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Builds a map from one or more clean passes. A cell is kept when it was hit
/// in at least `min(2, passes)` passes, which drops obstacles that moved.
pub fn learn(
    passes: &[Vec<TraceSample>],
    bounds: Rect,
    resolution: f64,
    sensor_offset: f64,
    provenance: Provenance,
) -> Result<HistoricalMap> {
    if passes.is_empty() || passes.iter().all(|p| p.is_empty()) {
        return Err(Error::EmptyTrace);
    }
    if !(resolution > 0.0) || !bounds.is_valid() {
        return Err(Error::config("map resolution and bounds must be positive"));
    }
    let mut map = HistoricalMap::empty(bounds, resolution, sensor_offset, provenance);
    // the endpoint is nudged past the surface so it lands in the blocking cell
    let nudge = resolution * 0.05;
    let mut hits: BTreeMap<usize, usize> = BTreeMap::new();
    for pass in passes {
        let mut seen = std::collections::BTreeSet::new();
        for s in pass {
            if s.reading >= SENSOR_MAX {
                continue;
            }
            let face = s.pose.ahead(sensor_offset);
            let (dx, dy) = s.pose.dir();
            let reach = s.reading + nudge;
            let end = Point::new(face.x + dx * reach, face.y + dy * reach);
            if let Some((cx, cy)) = map.cell_of(end) {
                seen.insert(map.index(cx, cy));
            }
        }
        for i in seen {
            *hits.entry(i).or_default() += 1;
        }
    }
    let need = passes.len().min(2);
    for (i, n) in hits {
        if n >= need {
            map.cells[i] = true;
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn prov() -> Provenance {
        Provenance {
            scenario: "unit".into(),
            seed: 0,
            passes: 1,
        }
    }

    fn room() -> Rect {
        Rect::new(Point::new(0.0, 0.0), Point::new(200.0, 150.0))
    }

    #[test]
    fn endpoint_lands_behind_the_wall() {
        let s = TraceSample {
            pose: Pose::new(117.0, 55.0, PI),
            reading: 100.0,
        };
        let map = learn(&[vec![s]], room(), 10.0, 17.0, prov()).unwrap();
        let cell = map.cell_of(Point::new(-0.1, 55.0)).unwrap();
        assert!(map.is_occupied(cell.0, cell.1));
        assert_eq!(map.occupied_count(), 1);
        let d = map.expected_distance(&Pose::new(117.0, 55.0, PI)).unwrap();
        assert!((d - 100.0).abs() <= 10.0);
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert!(matches!(
            learn(&[vec![]], room(), 10.0, 17.0, prov()),
            Err(Error::EmptyTrace)
        ));
    }

    #[test]
    fn nothing_ahead_reads_max() {
        let map = HistoricalMap::empty(room(), 10.0, 17.0, prov());
        assert_eq!(
            map.expected_distance(&Pose::new(50.0, 50.0, 0.0)).unwrap(),
            400.0
        );
        assert!(map.expected_distance(&Pose::new(-5.0, 50.0, 0.0)).is_err());
    }

    #[test]
    fn transient_cells_need_two_passes() {
        let wall = TraceSample {
            pose: Pose::new(117.0, 55.0, PI),
            reading: 100.0,
        };
        let pet = TraceSample {
            pose: Pose::new(117.0, 95.0, PI),
            reading: 40.0,
        };
        let passes = vec![vec![wall, pet], vec![wall]];
        let map = learn(&passes, room(), 10.0, 17.0, prov()).unwrap();
        assert_eq!(map.occupied_count(), 1);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = TraceSample {
            pose: Pose::new(117.3, 55.1, PI),
            reading: 100.3,
        };
        let map = learn(&[vec![s]], room(), 10.0, 17.0, prov()).unwrap();
        let back = HistoricalMap::from_json(&map.to_json().unwrap()).unwrap();
        assert_eq!(back, map);
        let bad = map
            .to_json()
            .unwrap()
            .replace("\"version\": 1", "\"version\": 9");
        assert!(HistoricalMap::from_json(&bad).is_err());
    }
}
