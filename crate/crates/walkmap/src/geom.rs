//! Geometric primitives, feature identifiers, and the prediction grid.
//!
//! Everything downstream works in a flat 2-D metric frame: survey paths are
//! straight segments between measured endpoints, and location estimates are
//! centers of grid cells. The candidate set for localization is the set of
//! walkable cell centers, iterated in row-major index order so that argmax
//! tie-breaking is deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default prediction-grid resolution in meters.
pub const DEFAULT_GRID_RESOLUTION_M: f64 = 0.1;

/// A 2-D position in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFiniteCoordinate);
        }
        Ok(Location { x, y })
    }

    pub fn distance(&self, other: &Location) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A straight survey path with known endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    start: Location,
    end: Location,
    length_m: f64,
}

impl PathSegment {
    pub fn new(start: Location, end: Location) -> Result<Self> {
        let length_m = start.distance(&end);
        if length_m <= 0.0 {
            return Err(Error::DegeneratePath);
        }
        Ok(PathSegment {
            start,
            end,
            length_m,
        })
    }

    pub fn start(&self) -> Location {
        self.start
    }

    pub fn end(&self) -> Location {
        self.end
    }

    /// Euclidean length of the path in meters.
    pub fn length_m(&self) -> f64 {
        self.length_m
    }

    /// Linear interpolation along the path. `fraction` 0 returns the exact
    /// start point, 1 the exact end point.
    pub fn point_along(&self, fraction: f64) -> Result<Location> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::FractionOutOfRange(fraction));
        }
        if fraction == 0.0 {
            return Ok(self.start);
        }
        if fraction == 1.0 {
            return Ok(self.end);
        }
        Ok(Location {
            x: self.start.x + fraction * (self.end.x - self.start.x),
            y: self.start.y + fraction * (self.end.y - self.start.y),
        })
    }

    /// Reversed copy, for walks taken in the opposite direction.
    pub fn reversed(&self) -> PathSegment {
        PathSegment {
            start: self.end,
            end: self.start,
            length_m: self.length_m,
        }
    }
}

/// The kind of a fingerprint feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "wifi-bssid")]
    WifiBssid,
    #[serde(rename = "magnetic-magnitude")]
    MagneticMagnitude,
    #[serde(rename = "magnetic-z")]
    MagneticZ,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::WifiBssid => "wifi-bssid",
            FeatureKind::MagneticMagnitude => "magnetic-magnitude",
            FeatureKind::MagneticZ => "magnetic-z",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureKind> {
        match s {
            "wifi-bssid" => Some(FeatureKind::WifiBssid),
            "magnetic-magnitude" => Some(FeatureKind::MagneticMagnitude),
            "magnetic-z" => Some(FeatureKind::MagneticZ),
            _ => None,
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies one fingerprint feature: a wifi BSSID or one of the two
/// magnetic channels. Magnetic kinds carry an empty id; there is at most one
/// feature of each magnetic kind.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureId {
    pub kind: FeatureKind,
    pub id: String,
}

impl FeatureId {
    pub fn wifi(bssid: impl Into<String>) -> FeatureId {
        FeatureId {
            kind: FeatureKind::WifiBssid,
            id: bssid.into(),
        }
    }

    pub fn magnetic_magnitude() -> FeatureId {
        FeatureId {
            kind: FeatureKind::MagneticMagnitude,
            id: String::new(),
        }
    }

    pub fn magnetic_z() -> FeatureId {
        FeatureId {
            kind: FeatureKind::MagneticZ,
            id: String::new(),
        }
    }

    pub fn is_wifi(&self) -> bool {
        self.kind == FeatureKind::WifiBssid
    }
}

impl std::fmt::Display for FeatureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.id.is_empty() {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "{}:{}", self.kind, self.id)
        }
    }
}

/// One training triple: a feature value observed (or inferred) at a location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggedObservation {
    pub feature: FeatureId,
    pub value: f64,
    pub location: Location,
    pub scan_id: u64,
}

impl TaggedObservation {
    /// Validates the wifi RSS range [-100, 0] dBm; out-of-range readings are
    /// rejected so callers can count them rather than silently altering data.
    pub fn new(feature: FeatureId, value: f64, location: Location, scan_id: u64) -> Result<Self> {
        if feature.is_wifi() && !(-100.0..=0.0).contains(&value) {
            return Err(Error::RssOutOfRange(value));
        }
        if !value.is_finite() {
            return Err(Error::NonFiniteCoordinate);
        }
        Ok(TaggedObservation {
            feature,
            value,
            location,
            scan_id,
        })
    }
}

/// Axis-aligned rectangle in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Rect> {
        if ![min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteCoordinate);
        }
        if max_x <= min_x || max_y <= min_y {
            return Err(Error::ZeroAreaBounds);
        }
        Ok(Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        })
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, p: &Location) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }
}

/// Simple polygon used as a walkable-area mask. Containment uses even-odd
/// ray casting on the cell center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Location>,
}

impl Polygon {
    pub fn new(vertices: Vec<Location>) -> Result<Polygon> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon(vertices.len()));
        }
        Ok(Polygon { vertices })
    }

    pub fn rectangle(r: &Rect) -> Polygon {
        Polygon {
            vertices: vec![
                Location { x: r.min_x, y: r.min_y },
                Location { x: r.max_x, y: r.min_y },
                Location { x: r.max_x, y: r.max_y },
                Location { x: r.min_x, y: r.max_y },
            ],
        }
    }

    pub fn vertices(&self) -> &[Location] {
        &self.vertices
    }

    pub fn contains(&self, p: &Location) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            if ((v[i].y > p.y) != (v[j].y > p.y))
                && (p.x < (v[j].x - v[i].x) * (p.y - v[i].y) / (v[j].y - v[i].y) + v[i].x)
            {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

/// The prediction grid: cell geometry plus a walkable mask. The candidate set
/// for localization is the set of walkable cell centers.
///
/// Cells are addressed `(row, col)` with row-major linear index
/// `row * n_cols + col`; all iteration follows this order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRepr", into = "GridSpecRepr")]
pub struct GridSpec {
    origin: Location,
    resolution_m: f64,
    n_cols: usize,
    n_rows: usize,
    walkable: Vec<bool>,
}

impl GridSpec {
    /// Tiles `bounds` with square cells of side `resolution_m`. Cell centers
    /// outside `mask` (when given) are excluded from the candidate set; with
    /// no mask every cell is walkable.
    pub fn build(bounds: &Rect, resolution_m: f64, mask: Option<&Polygon>) -> Result<GridSpec> {
        if !(resolution_m > 0.0) {
            return Err(Error::NonPositiveResolution(resolution_m));
        }
        let extent = bounds.width().min(bounds.height());
        if resolution_m > extent {
            return Err(Error::ResolutionTooCoarse {
                resolution_m,
                extent_m: extent,
            });
        }
        let n_cols = (bounds.width() / resolution_m).ceil() as usize;
        let n_rows = (bounds.height() / resolution_m).ceil() as usize;
        let origin = Location {
            x: bounds.min_x,
            y: bounds.min_y,
        };
        let mut walkable = vec![true; n_cols * n_rows];
        if let Some(poly) = mask {
            for row in 0..n_rows {
                for col in 0..n_cols {
                    let c = Self::center_at(origin, resolution_m, row, col);
                    walkable[row * n_cols + col] = poly.contains(&c);
                }
            }
        }
        Ok(GridSpec {
            origin,
            resolution_m,
            n_cols,
            n_rows,
            walkable,
        })
    }

    fn center_at(origin: Location, res: f64, row: usize, col: usize) -> Location {
        Location {
            x: origin.x + (col as f64 + 0.5) * res,
            y: origin.y + (row as f64 + 0.5) * res,
        }
    }

    pub fn origin(&self) -> Location {
        self.origin
    }

    pub fn resolution_m(&self) -> f64 {
        self.resolution_m
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cells(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.n_cols + col
    }

    pub fn cell_center(&self, index: usize) -> Location {
        let row = index / self.n_cols;
        let col = index % self.n_cols;
        Self::center_at(self.origin, self.resolution_m, row, col)
    }

    pub fn is_walkable(&self, index: usize) -> bool {
        self.walkable[index]
    }

    /// Walkable cell centers in row-major index order.
    pub fn walkable_cells(&self) -> impl Iterator<Item = (usize, Location)> + '_ {
        self.walkable
            .iter()
            .enumerate()
            .filter(|(_, w)| **w)
            .map(|(i, _)| (i, self.cell_center(i)))
    }

    pub fn walkable_count(&self) -> usize {
        self.walkable.iter().filter(|w| **w).count()
    }

    /// Index of the cell containing `loc`, if it falls inside the grid.
    pub fn cell_of(&self, loc: &Location) -> Option<usize> {
        let col = ((loc.x - self.origin.x) / self.resolution_m).floor();
        let row = ((loc.y - self.origin.y) / self.resolution_m).floor();
        if col < 0.0 || row < 0.0 {
            return None;
        }
        let (row, col) = (row as usize, col as usize);
        if row >= self.n_rows || col >= self.n_cols {
            return None;
        }
        Some(self.cell_index(row, col))
    }

    pub fn bounds(&self) -> Rect {
        Rect {
            min_x: self.origin.x,
            min_y: self.origin.y,
            max_x: self.origin.x + self.n_cols as f64 * self.resolution_m,
            max_y: self.origin.y + self.n_rows as f64 * self.resolution_m,
        }
    }
}

/// Serialized form: the mask is packed as a '0'/'1' string to keep map files
/// compact and diffable.
#[derive(Serialize, Deserialize)]
struct GridSpecRepr {
    origin_x: f64,
    origin_y: f64,
    resolution_m: f64,
    n_cols: usize,
    n_rows: usize,
    walkable: String,
}

impl From<GridSpec> for GridSpecRepr {
    fn from(g: GridSpec) -> Self {
        GridSpecRepr {
            origin_x: g.origin.x,
            origin_y: g.origin.y,
            resolution_m: g.resolution_m,
            n_cols: g.n_cols,
            n_rows: g.n_rows,
            walkable: g
                .walkable
                .iter()
                .map(|w| if *w { '1' } else { '0' })
                .collect(),
        }
    }
}

impl TryFrom<GridSpecRepr> for GridSpec {
    type Error = String;

    fn try_from(r: GridSpecRepr) -> std::result::Result<Self, String> {
        if r.walkable.len() != r.n_cols * r.n_rows {
            return Err(format!(
                "walkable mask length {} does not match {}x{} grid",
                r.walkable.len(),
                r.n_rows,
                r.n_cols
            ));
        }
        let walkable = r
            .walkable
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(format!("invalid mask char '{other}'")),
            })
            .collect::<std::result::Result<Vec<bool>, String>>()?;
        Ok(GridSpec {
            origin: Location {
                x: r.origin_x,
                y: r.origin_y,
            },
            resolution_m: r.resolution_m,
            n_cols: r.n_cols,
            n_rows: r.n_rows,
            walkable,
        })
    }
}
