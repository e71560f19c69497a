//! Primitive kinematics, wavefront planning and the two navigation actions.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Robot, World};
use crate::grid::{normalize_heading, offset, quantize_angle, Cell, Knowledge, OccupancyGrid, Point, Pose, Traversable, NEIGHBORS8};
use crate::perception::{ObjId, ObjectRegistry};

pub const TURN_DEG: f64 = 15.0;
pub const STEP_M: f64 = 0.25;
/// Approach distance for goto_object, kept below the 1.5 m success radius so
/// pose drift and partial-view centroids stay inside it.
pub const APPROACH_RADIUS: f64 = 1.0;
const MAX_COLLISION_REPLANS: usize = 3;
const MAX_SEGMENTS: usize = 120;
const LOOKAHEAD: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("target outside the map")]
    OutOfBounds,
    #[error("unknown object id {0}")]
    UnknownObject(ObjId),
    #[error("unreachable: {0}")]
    Unreachable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimitiveAction {
    TurnLeft,
    TurnRight,
    MoveForward,
    Talk(String),
}

/// One primitive against ground truth. Forward moves into occupied or
/// off-grid space leave the pose unchanged and report `blocked`.
pub fn apply_primitive(pose: Pose, action: &PrimitiveAction, grid: &OccupancyGrid) -> (Pose, bool) {
    match action {
        PrimitiveAction::TurnLeft => (Pose::new(pose.x, pose.y, pose.heading + TURN_DEG), false),
        PrimitiveAction::TurnRight => (Pose::new(pose.x, pose.y, pose.heading - TURN_DEG), false),
        PrimitiveAction::MoveForward => {
            let (dy, dx) = pose.heading.to_radians().sin_cos();
            let next = Pose { x: pose.x + STEP_M * dx, y: pose.y + STEP_M * dy, heading: pose.heading };
            if grid.blocks(next.point()) {
                (pose, true)
            } else {
                (next, false)
            }
        }
        PrimitiveAction::Talk(_) => (pose, false),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavResult {
    pub final_pose: Pose,
    pub steps_taken: Vec<PrimitiveAction>,
    pub distance_traveled: f64,
    pub blocked: bool,
}

impl NavResult {
    pub fn start(pose: Pose) -> Self {
        Self { final_pose: pose, steps_taken: Vec::new(), distance_traveled: 0.0, blocked: false }
    }

    fn exec(&mut self, robot: &mut Robot, world: &World, action: PrimitiveAction) -> bool {
        let blocked = robot.step(world, &action);
        if !blocked && action == PrimitiveAction::MoveForward {
            self.distance_traveled += STEP_M;
        }
        self.steps_taken.push(action);
        self.final_pose = robot.pose;
        blocked
    }

    /// Appends another result executed after this one.
    pub fn extend(&mut self, other: NavResult) {
        self.steps_taken.extend(other.steps_taken);
        self.distance_traveled += other.distance_traveled;
        self.final_pose = other.final_pose;
        self.blocked = other.blocked;
    }

    pub fn forward_steps(&self) -> usize {
        self.steps_taken.iter().filter(|a| **a == PrimitiveAction::MoveForward).count()
    }
}

// ---------------------------------------------------------------------------
// Planning

/// Geodesic costs from a source set. Each cost is kept as a count of
/// straight and diagonal moves so the meter value is computed one way only.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    rows: usize,
    cols: usize,
    resolution: f64,
    moves: Vec<Option<(u32, u32)>>,
}

fn meters(moves: (u32, u32), res: f64) -> f64 {
    (moves.0 as f64 + moves.1 as f64 * std::f64::consts::SQRT_2) * res
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    moves: (u32, u32),
    cell: Cell,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Whether the 8-neighbour step `(dr, dc)` from `cell` is allowed: the
/// target must be passable and a diagonal must not cut an impassable corner.
pub fn step_allowed<G: Traversable>(grid: &G, cell: Cell, dr: isize, dc: isize) -> Option<Cell> {
    let next = offset(cell, dr, dc, grid.rows(), grid.cols())?;
    if !grid.passable(next) {
        return None;
    }
    if dr != 0 && dc != 0 {
        let a = offset(cell, dr, 0, grid.rows(), grid.cols())?;
        let b = offset(cell, 0, dc, grid.rows(), grid.cols())?;
        if !grid.passable(a) || !grid.passable(b) {
            return None;
        }
    }
    Some(next)
}

/// Multi-source Dijkstra over passable cells, 8-connected, straight cost
/// `res` and diagonal cost `res * sqrt(2)`.
pub fn plan_distance_field<G: Traversable>(grid: &G, sources: impl IntoIterator<Item = Cell>) -> DistanceField {
    let (rows, cols) = (grid.rows(), grid.cols());
    let res = grid.resolution();
    let mut moves: Vec<Option<(u32, u32)>> = vec![None; rows * cols];
    let mut heap = BinaryHeap::new();
    for s in sources {
        if moves[s.row * cols + s.col].is_none() {
            moves[s.row * cols + s.col] = Some((0, 0));
            heap.push(Frontier { cost: 0.0, moves: (0, 0), cell: s });
        }
    }
    let mut done = vec![false; rows * cols];
    while let Some(Frontier { moves: m, cell, .. }) = heap.pop() {
        let idx = cell.row * cols + cell.col;
        if done[idx] {
            continue;
        }
        done[idx] = true;
        for (dr, dc) in NEIGHBORS8 {
            let Some(next) = step_allowed(grid, cell, dr, dc) else { continue };
            let nm = if dr != 0 && dc != 0 { (m.0, m.1 + 1) } else { (m.0 + 1, m.1) };
            let ni = next.row * cols + next.col;
            let better = match moves[ni] {
                None => true,
                Some(old) => meters(nm, res) < meters(old, res),
            };
            if better && !done[ni] {
                moves[ni] = Some(nm);
                heap.push(Frontier { cost: meters(nm, res), moves: nm, cell: next });
            }
        }
    }
    DistanceField { rows, cols, resolution: res, moves }
}

impl DistanceField {
    /// Cost in meters; infinite when unreachable.
    pub fn cost(&self, cell: Cell) -> f64 {
        self.moves[cell.row * self.cols + cell.col].map_or(f64::INFINITY, |m| meters(m, self.resolution))
    }

    pub fn reachable(&self, cell: Cell) -> bool {
        self.moves[cell.row * self.cols + cell.col].is_some()
    }

    /// Shortest cell path from `from` to the nearest source, inclusive of
    /// both ends. Empty when `from` is unreachable.
    pub fn descend<G: Traversable>(&self, grid: &G, from: Cell) -> Vec<Cell> {
        if !self.reachable(from) {
            return Vec::new();
        }
        let mut path = vec![from];
        let mut cur = from;
        while self.cost(cur) > 0.0 {
            let best = NEIGHBORS8
                .iter()
                .filter_map(|&(dr, dc)| {
                    let n = offset(cur, dr, dc, self.rows, self.cols)?;
                    // Walk backwards along edges the forward search could use.
                    step_allowed(grid, n, -dr, -dc)?;
                    let edge = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 } else { 1.0 } * self.resolution;
                    (self.reachable(n) && self.cost(n) < self.cost(cur)).then_some((self.cost(n) + edge, n))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match best {
                Some((_, n)) => {
                    path.push(n);
                    cur = n;
                }
                None => break,
            }
        }
        path
    }
}

// ---------------------------------------------------------------------------
// Execution

/// Turns left (positive) or right in 15 degree quanta.
pub fn rotate_by(robot: &mut Robot, world: &World, quanta: i64, nav: &mut NavResult) {
    let action = if quanta >= 0 { PrimitiveAction::TurnLeft } else { PrimitiveAction::TurnRight };
    for _ in 0..quanta.unsigned_abs() {
        nav.exec(robot, world, action.clone());
    }
}

fn turn_quanta(relative_deg: f64) -> i64 {
    (quantize_angle(relative_deg, TURN_DEG) / TURN_DEG).round() as i64
}

/// Where `n` forward steps along `heading` from `from` would land, one
/// point per step.
fn forward_points(from: Point, heading: f64, n: usize) -> impl Iterator<Item = Point> {
    let (dy, dx) = heading.to_radians().sin_cos();
    (1..=n).map(move |k| Point::new(from.x + k as f64 * STEP_M * dx, from.y + k as f64 * STEP_M * dy))
}

/// A straight, quantized segment from the current pose toward `cell`.
struct Segment {
    quanta: i64,
    steps: usize,
}

fn segment_to(robot: &Robot, target: Point) -> Segment {
    let from = robot.pose.point();
    let quanta = turn_quanta(robot.pose.relative_bearing(target));
    let steps = (from.distance(target) / STEP_M).round() as usize;
    Segment { quanta, steps }
}

fn segment_clear(robot: &Robot, seg: &Segment) -> bool {
    let heading = normalize_heading(robot.pose.heading + seg.quanta as f64 * TURN_DEG);
    let mut prev = robot.cell();
    for p in forward_points(robot.pose.point(), heading, seg.steps) {
        let Some(c) = robot.online.cell_of(p) else { return false };
        if !robot.online.passable(c) {
            return false;
        }
        // Diagonal cell changes must not squeeze between known obstacles.
        if c.row != prev.row && c.col != prev.col {
            let a = Cell::new(prev.row, c.col);
            let b = Cell::new(c.row, prev.col);
            if !robot.online.passable(a) || !robot.online.passable(b) {
                return false;
            }
        }
        prev = c;
    }
    true
}

/// Navigates to `target` on the robot's own map with optimistic planning
/// through unknown space, replanning after each segment and after each
/// collision (at most three). Ends in the target cell or within one cell of
/// it; otherwise `blocked` is set.
pub fn goto_point(robot: &mut Robot, world: &World, target: Point) -> Result<NavResult, ControlError> {
    let goal = robot.online.cell_of(target).ok_or(ControlError::OutOfBounds)?;
    let mut nav = NavResult::start(robot.pose);
    let mut collisions = 0;
    let mut near_tries = 0;
    for _ in 0..MAX_SEGMENTS {
        let cur = robot.cell();
        if cur == goal {
            return Ok(nav);
        }
        if cur.chebyshev(goal) <= 1 {
            near_tries += 1;
            if near_tries > 2 {
                return Ok(nav);
            }
        }
        if robot.online.get(goal) == Knowledge::Occupied {
            break;
        }
        let field = plan_distance_field(&robot.online, [goal]);
        let path = field.descend(&robot.online, cur);
        if path.len() < 2 {
            break;
        }
        let res = robot.online.resolution();
        let mut chosen = None;
        for j in (1..path.len().min(LOOKAHEAD + 1)).rev() {
            let seg = segment_to(robot, path[j].center(res));
            if seg.steps > 0 && segment_clear(robot, &seg) {
                chosen = Some(seg);
                break;
            }
        }
        let seg = chosen.unwrap_or_else(|| {
            let s = segment_to(robot, path[1].center(res));
            Segment { steps: s.steps.max(1), ..s }
        });
        rotate_by(robot, world, seg.quanta, &mut nav);
        for _ in 0..seg.steps {
            let (dy, dx) = robot.pose.heading.to_radians().sin_cos();
            let ahead = Point::new(robot.pose.x + STEP_M * dx, robot.pose.y + STEP_M * dy);
            if robot.online.cell_of(ahead).is_none_or(|c| !robot.online.passable(c)) {
                break;
            }
            if nav.exec(robot, world, PrimitiveAction::MoveForward) {
                collisions += 1;
                break;
            }
        }
        if collisions > MAX_COLLISION_REPLANS {
            break;
        }
    }
    let cur = robot.cell();
    nav.blocked = cur.chebyshev(goal) > 1;
    Ok(nav)
}

/// Ray-marched line of sight on the robot's map; unknown space is treated
/// as transparent and cells in `through` never block.
pub fn line_of_sight(grid: &crate::grid::OnlineGrid, from: Point, to: Point, through: &BTreeSet<Cell>) -> bool {
    let d = from.distance(to);
    let n = (d / 0.05).ceil() as usize;
    for k in 1..n {
        let t = k as f64 / n as f64;
        let p = Point::new(from.x + t * (to.x - from.x), from.y + t * (to.y - from.y));
        let Some(c) = grid.cell_of(p) else { return false };
        if grid.get(c) == Knowledge::Occupied && !through.contains(&c) {
            return false;
        }
    }
    true
}

/// Rotates until `target` is within half a turn quantum of the heading.
pub fn face_point(robot: &mut Robot, world: &World, target: Point, nav: &mut NavResult) {
    let quanta = turn_quanta(robot.pose.relative_bearing(target));
    rotate_by(robot, world, quanta, nav);
}

/// Moves to the geodesically nearest free cell within `radius` of the
/// region centroid that sees the centroid, then faces it.
pub fn approach_region(robot: &mut Robot, world: &World, region: &BTreeSet<Cell>, radius: f64) -> Result<NavResult, ControlError> {
    let res = robot.online.resolution();
    let centroid = Point::mean(region.iter().map(|c| c.center(res))).ok_or(ControlError::Unreachable("empty region".into()))?;
    let mut nav = NavResult::start(robot.pose);
    let mut excluded = BTreeSet::new();
    for _ in 0..4 {
        let field = plan_distance_field(&robot.online, [robot.cell()]);
        let reach = (radius / res).ceil() as isize + 1;
        let center_cell = robot.online.cell_of(centroid).ok_or(ControlError::OutOfBounds)?;
        let mut best: Option<(f64, f64, Cell)> = None;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let Some(c) = offset(center_cell, dr, dc, robot.online.rows(), robot.online.cols()) else { continue };
                if region.contains(&c) || excluded.contains(&c) || !robot.online.passable(c) {
                    continue;
                }
                let p = c.center(res);
                let d = p.distance(centroid);
                if d > radius || d < world.camera.depth_min || !field.reachable(c) {
                    continue;
                }
                if !line_of_sight(&robot.online, p, centroid, region) {
                    continue;
                }
                let key = (field.cost(c), d, c);
                if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
        }
        let Some((_, _, cell)) = best else { break };
        let leg = goto_point(robot, world, cell.center(res))?;
        nav.extend(leg);
        if robot.pose.point().distance(centroid) <= radius + 0.5 * res
            && line_of_sight(&robot.online, robot.pose.point(), centroid, region)
        {
            face_point(robot, world, centroid, &mut nav);
            nav.blocked = false;
            return Ok(nav);
        }
        excluded.insert(cell);
    }
    if nav.steps_taken.is_empty() {
        return Err(ControlError::Unreachable("no viewpoint with line of sight".into()));
    }
    nav.blocked = true;
    Ok(nav)
}

/// Navigates to a registered object and faces it.
pub fn goto_object(robot: &mut Robot, world: &World, registry: &ObjectRegistry, id: ObjId) -> Result<NavResult, ControlError> {
    let entry = registry.get(id).ok_or(ControlError::UnknownObject(id))?;
    approach_region(robot, world, &entry.region.clone(), APPROACH_RADIUS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Occupancy;

    #[test]
    fn primitive_turns_and_moves() {
        let g = OccupancyGrid::new(10, 10, 0.25);
        let (p, b) = apply_primitive(Pose::new(1.0, 1.0, 0.0), &PrimitiveAction::TurnLeft, &g);
        assert_eq!((p.heading, b), (15.0, false));
        let (p, _) = apply_primitive(Pose::new(1.0, 1.0, 0.0), &PrimitiveAction::TurnRight, &g);
        assert_eq!(p.heading, 345.0);
        let (p, b) = apply_primitive(Pose::new(1.0, 1.0, 0.0), &PrimitiveAction::MoveForward, &g);
        assert!((p.x - 1.25).abs() < 1e-12 && !b);
    }

    #[test]
    fn primitive_blocked_by_wall() {
        let mut g = OccupancyGrid::new(10, 10, 0.25);
        g.set(Cell::new(4, 5), Occupancy::Occupied);
        let start = Pose::new(1.125, 1.125, 0.0);
        let (p, b) = apply_primitive(start, &PrimitiveAction::MoveForward, &g);
        assert!(b);
        assert_eq!(p, start);
        let edge = Pose::new(2.4, 0.1, 0.0);
        assert!(apply_primitive(edge, &PrimitiveAction::MoveForward, &g).1);
    }

    #[test]
    fn distance_field_basic_costs() {
        let g = OccupancyGrid::new(5, 5, 0.25);
        let f = plan_distance_field(&g, [Cell::new(0, 0)]);
        assert!((f.cost(Cell::new(4, 4)) - 4.0 * std::f64::consts::SQRT_2 * 0.25).abs() < 1e-12);
        assert!((f.cost(Cell::new(1, 1)) - std::f64::consts::SQRT_2 * 0.25).abs() < 1e-12);
        assert_eq!(f.cost(Cell::new(0, 0)), 0.0);
    }

    #[test]
    fn distance_field_wall_disconnects() {
        let mut g = OccupancyGrid::new(5, 5, 0.25);
        for r in 0..5 {
            g.set(Cell::new(r, 2), Occupancy::Occupied);
        }
        let f = plan_distance_field(&g, [Cell::new(0, 0)]);
        assert!(f.cost(Cell::new(0, 4)).is_infinite());
    }

    #[test]
    fn descend_reaches_source() {
        let mut g = OccupancyGrid::new(8, 8, 0.25);
        for r in 0..6 {
            g.set(Cell::new(r, 4), Occupancy::Occupied);
        }
        let f = plan_distance_field(&g, [Cell::new(0, 7)]);
        let path = f.descend(&g, Cell::new(0, 0));
        assert_eq!(path.first(), Some(&Cell::new(0, 0)));
        assert_eq!(path.last(), Some(&Cell::new(0, 7)));
        assert!(path.iter().all(|c| g.is_free(*c)));
    }
}
