//! Cells, poses and the two occupancy layers (ground truth and online).
//!
//! Cell `(row, col)` covers `[col*res, (col+1)*res) x [row*res, (row+1)*res)`
//! in meters. Heading 0 points along +x; positive angles turn toward +y.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn center(self, res: f64) -> Point {
        Point::new((self.col as f64 + 0.5) * res, (self.row as f64 + 0.5) * res)
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing from `self` to `other`, degrees in (-180, 180].
    pub fn bearing_to(self, other: Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x).to_degrees()
    }

    pub fn mean<I: IntoIterator<Item = Point>>(points: I) -> Option<Point> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for p in points {
            sx += p.x;
            sy += p.y;
            n += 1;
        }
        (n > 0).then(|| Point::new(sx / n as f64, sy / n as f64))
    }
}

/// Wraps any angle into [0, 360).
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Wraps any angle into (-180, 180].
pub fn normalize_relative(deg: f64) -> f64 {
    let a = deg.rem_euclid(360.0);
    if a > 180.0 {
        a - 360.0
    } else {
        a
    }
}

/// Rounds to the nearest multiple of `quantum`; exact ties round toward zero.
pub fn quantize_angle(deg: f64, quantum: f64) -> f64 {
    let q = deg / quantum;
    let floor = q.floor();
    let frac = q - floor;
    let steps = if (frac - 0.5).abs() < 1e-9 {
        if q > 0.0 {
            floor
        } else {
            floor + 1.0
        }
    } else {
        q.round()
    };
    steps * quantum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Degrees in [0, 360).
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_heading(heading) }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Signed angle from the heading to `target`, degrees in (-180, 180].
    pub fn relative_bearing(&self, target: Point) -> f64 {
        normalize_relative(self.point().bearing_to(target) - self.heading)
    }
}

/// Anything the planner can run Dijkstra over.
pub trait Traversable {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn resolution(&self) -> f64;
    fn passable(&self, cell: Cell) -> bool;

    fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.rows() && (col as usize) < self.cols()
    }

    fn cell_of(&self, p: Point) -> Option<Cell> {
        let res = self.resolution();
        let (r, c) = ((p.y / res).floor(), (p.x / res).floor());
        (r >= 0.0 && c >= 0.0 && (r as usize) < self.rows() && (c as usize) < self.cols())
            .then(|| Cell::new(r as usize, c as usize))
    }
}

/// Eight-neighbourhood offsets, straight moves first.
pub const NEIGHBORS8: [(isize, isize); 8] = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)];
pub const NEIGHBORS4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

pub fn offset(cell: Cell, dr: isize, dc: isize, rows: usize, cols: usize) -> Option<Cell> {
    let (r, c) = (cell.row as isize + dr, cell.col as isize + dc);
    (r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols).then(|| Cell::new(r as usize, c as usize))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupancy {
    Free,
    Occupied,
}

/// Ground-truth occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    rows: usize,
    cols: usize,
    resolution: f64,
    cells: Vec<Occupancy>,
}

impl OccupancyGrid {
    pub fn new(rows: usize, cols: usize, resolution: f64) -> Self {
        Self { rows, cols, resolution, cells: vec![Occupancy::Free; rows * cols] }
    }

    pub fn get(&self, cell: Cell) -> Occupancy {
        self.cells[cell.row * self.cols + cell.col]
    }

    pub fn set(&mut self, cell: Cell, value: Occupancy) {
        self.cells[cell.row * self.cols + cell.col] = value;
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.get(cell) == Occupancy::Free
    }

    /// Occupied or outside the grid.
    pub fn blocks(&self, p: Point) -> bool {
        self.cell_of(p).is_none_or(|c| !self.is_free(c))
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Cell::new(r, c)))
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Occupancy::Free).count()
    }
}

impl Traversable for OccupancyGrid {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn resolution(&self) -> f64 {
        self.resolution
    }
    fn passable(&self, cell: Cell) -> bool {
        self.is_free(cell)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Knowledge {
    Unknown,
    Free,
    Occupied,
}

/// The agent's own map, built from its sensor rays. Starts all-unknown;
/// a cell is written at most once because the world is static.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineGrid {
    rows: usize,
    cols: usize,
    resolution: f64,
    cells: Vec<Knowledge>,
    known: usize,
}

impl OnlineGrid {
    pub fn new(rows: usize, cols: usize, resolution: f64) -> Self {
        Self { rows, cols, resolution, cells: vec![Knowledge::Unknown; rows * cols], known: 0 }
    }

    pub fn get(&self, cell: Cell) -> Knowledge {
        self.cells[cell.row * self.cols + cell.col]
    }

    /// Records an observation; returns true when the cell was previously unknown.
    pub fn observe(&mut self, cell: Cell, value: Knowledge) -> bool {
        let idx = cell.row * self.cols + cell.col;
        if self.cells[idx] == Knowledge::Unknown && value != Knowledge::Unknown {
            self.cells[idx] = value;
            self.known += 1;
            true
        } else {
            false
        }
    }

    pub fn known_count(&self) -> usize {
        self.known
    }

    pub fn cells(&self) -> &[Knowledge] {
        &self.cells
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Cell::new(r, c)))
    }
}

impl Traversable for OnlineGrid {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn resolution(&self) -> f64 {
        self.resolution
    }
    /// Optimistic: unknown space is assumed traversable.
    fn passable(&self, cell: Cell) -> bool {
        self.get(cell) != Knowledge::Occupied
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_center_arithmetic() {
        assert_eq!(Cell::new(4, 4).center(0.25), Point::new(1.125, 1.125));
        let g = OccupancyGrid::new(10, 10, 0.25);
        assert_eq!(g.cell_of(Point::new(1.125, 0.3)), Some(Cell::new(1, 4)));
        assert_eq!(g.cell_of(Point::new(-0.01, 0.3)), None);
        assert_eq!(g.cell_of(Point::new(2.5, 0.3)), None);
    }

    #[test]
    fn heading_normalization() {
        assert_eq!(normalize_heading(-15.0), 345.0);
        assert_eq!(normalize_heading(360.0), 0.0);
        assert_eq!(normalize_relative(270.0), -90.0);
        assert_eq!(normalize_relative(-180.0), 180.0);
    }

    #[test]
    fn quantize_ties_toward_zero() {
        assert_eq!(quantize_angle(7.5, 15.0), 0.0);
        assert_eq!(quantize_angle(-7.5, 15.0), 0.0);
        assert_eq!(quantize_angle(22.5, 15.0), 15.0);
        assert_eq!(quantize_angle(-22.5, 15.0), -15.0);
        assert_eq!(quantize_angle(8.0, 15.0), 15.0);
        assert_eq!(quantize_angle(-44.0, 15.0), -45.0);
    }

    #[test]
    fn online_grid_writes_once() {
        let mut g = OnlineGrid::new(3, 3, 1.0);
        assert!(g.observe(Cell::new(1, 1), Knowledge::Free));
        assert!(!g.observe(Cell::new(1, 1), Knowledge::Occupied));
        assert_eq!(g.get(Cell::new(1, 1)), Knowledge::Free);
        assert_eq!(g.known_count(), 1);
    }

    #[test]
    fn relative_bearing_sign() {
        let p = Pose::new(0.0, 0.0, 90.0);
        assert!((p.relative_bearing(Point::new(1.0, 1.0)) + 45.0).abs() < 1e-9);
        assert!((p.relative_bearing(Point::new(-1.0, 1.0)) - 45.0).abs() < 1e-9);
    }
}
