//! Online occupancy from depth rays, frontiers, and frontier-based search
//! with spin-and-detect.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;

use crate::agent::{Robot, World};
use crate::control::{goto_point, plan_distance_field, rotate_by, NavResult, PrimitiveAction};
use crate::grid::{offset, Cell, Knowledge, OnlineGrid, Point, Pose, Traversable, NEIGHBORS8};
use crate::perception::{detect_object, CameraModel, DetectionConfig, DetectionResult, ObjId, ObjectRegistry, PerceptionError};
use crate::scene::Scene;

/// Casts the camera fan from `pose`: traversed cells become free, the first
/// occupied hit becomes occupied, anything beyond stays untouched. Returns
/// the number of newly known cells.
pub fn update_occupancy(grid: &mut OnlineGrid, pose: Pose, scene: &Scene, camera: &CameraModel) -> usize {
    let truth = scene.grid();
    let mut fresh = 0;
    if let Some(here) = grid.cell_of(pose.point()) {
        fresh += usize::from(grid.observe(here, Knowledge::Free));
    }
    for angle in camera.ray_angles(pose.heading) {
        camera.march(truth, pose.point(), angle, |cell, _| {
            if truth.is_free(cell) {
                fresh += usize::from(grid.observe(cell, Knowledge::Free));
                true
            } else {
                fresh += usize::from(grid.observe(cell, Knowledge::Occupied));
                false
            }
        });
    }
    fresh
}

/// A full turn in place: 24 left turns, sensing after each.
pub fn initial_spin(robot: &mut Robot, world: &World) -> NavResult {
    let mut nav = NavResult { final_pose: robot.pose, steps_taken: vec![], distance_traveled: 0.0, blocked: false };
    update_occupancy(&mut robot.online, robot.pose, &world.scene, &world.camera);
    rotate_by(robot, world, 24, &mut nav);
    nav
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierCluster {
    pub cells: BTreeSet<Cell>,
    /// Member cell closest to the cluster mean.
    pub centroid: Cell,
    pub size: usize,
    /// Geodesic distance from the robot to the nearest member.
    pub distance: f64,
}

fn is_frontier(grid: &OnlineGrid, cell: Cell) -> bool {
    grid.get(cell) == Knowledge::Free
        && NEIGHBORS8.iter().any(|&(dr, dc)| {
            offset(cell, dr, dc, grid.rows(), grid.cols()).is_some_and(|n| grid.get(n) == Knowledge::Unknown)
        })
}

/// Known-free cells adjacent to unknown space, clustered 8-connected; clusters
/// under two cells are dropped. Sorted by geodesic distance from `from`.
pub fn find_frontiers(grid: &OnlineGrid, from: Cell) -> Vec<FrontierCluster> {
    let frontier: BTreeSet<Cell> = grid.iter_cells().filter(|c| is_frontier(grid, *c)).collect();
    if frontier.is_empty() {
        return Vec::new();
    }
    let field = plan_distance_field(grid, [from]);
    let res = grid.resolution();
    let mut seen = BTreeSet::new();
    let mut clusters = Vec::new();
    for &start in &frontier {
        if !seen.insert(start) {
            continue;
        }
        let mut cells = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for (dr, dc) in NEIGHBORS8 {
                if let Some(n) = offset(c, dr, dc, grid.rows(), grid.cols()) {
                    if frontier.contains(&n) && seen.insert(n) {
                        cells.insert(n);
                        queue.push_back(n);
                    }
                }
            }
        }
        if cells.len() < 2 {
            continue;
        }
        let mean = Point::mean(cells.iter().map(|c| c.center(res))).expect("non-empty");
        let centroid = *cells
            .iter()
            .min_by(|a, b| a.center(res).distance(mean).total_cmp(&b.center(res).distance(mean)))
            .expect("non-empty");
        let distance = cells.iter().map(|c| field.cost(*c)).fold(f64::INFINITY, f64::min);
        clusters.push(FrontierCluster { size: cells.len(), cells, centroid, distance });
    }
    clusters.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.centroid.cmp(&b.centroid)));
    clusters
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found(Vec<DetectionResult>),
    Exhausted,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct QueryCursor {
    started: bool,
    replayed: usize,
    reported: BTreeSet<ObjId>,
}

/// Exploration progress that persists across goals and calls: spin
/// viewpoints (with the queries already run there), frontier cells already
/// targeted, and a per-query resume cursor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchState {
    viewpoints: Vec<(Point, BTreeSet<String>)>,
    visited: BTreeSet<Cell>,
    cursors: BTreeMap<String, QueryCursor>,
}

impl SearchState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn frontier_visits(&self) -> usize {
        self.viewpoints.len()
    }
}

/// Turns a full circle, detecting at every heading. Stops early at the
/// first heading that yields an object not yet reported for this query.
#[allow(clippy::too_many_arguments)]
fn spin_detect<R: Rng>(
    robot: &mut Robot,
    world: &World,
    registry: &mut ObjectRegistry,
    query: &str,
    cfg: DetectionConfig,
    reported: &mut BTreeSet<ObjId>,
    nav: &mut NavResult,
    rng: &mut R,
) -> Result<Option<Vec<DetectionResult>>, PerceptionError> {
    for k in 0..24 {
        if k > 0 {
            rotate_by(robot, world, 1, nav);
        }
        let hits = detect_object(world, robot.pose, query, registry, cfg, rng)?;
        if hits.iter().any(|d| !reported.contains(&d.obj_id)) {
            reported.extend(hits.iter().map(|d| d.obj_id));
            return Ok(Some(hits));
        }
    }
    rotate_by(robot, world, 1, nav);
    Ok(None)
}

/// Frontier-based search for `query`. The first call spins at the current
/// pose; after that, spin viewpoints from earlier searches are revisited,
/// then fresh frontiers nearest first. Returns as soon as a spin reveals an
/// object not yet reported for this query; a repeated call resumes.
pub fn search_object<R: Rng>(
    robot: &mut Robot,
    world: &World,
    state: &mut SearchState,
    registry: &mut ObjectRegistry,
    query: &str,
    cfg: DetectionConfig,
    rng: &mut R,
) -> Result<(SearchOutcome, NavResult), PerceptionError> {
    let mut nav = NavResult { final_pose: robot.pose, steps_taken: vec![], distance_traveled: 0.0, blocked: false };
    let mut cursor = state.cursors.remove(query).unwrap_or_default();
    // Frontiers come from the online map, so it must hold the current view.
    update_occupancy(&mut robot.online, robot.pose, &world.scene, &world.camera);
    let outcome = search_inner(robot, world, state, &mut cursor, registry, query, cfg, &mut nav, rng);
    state.cursors.insert(query.to_string(), cursor);
    nav.final_pose = robot.pose;
    Ok((outcome?, nav))
}

#[allow(clippy::too_many_arguments)]
fn search_inner<R: Rng>(
    robot: &mut Robot,
    world: &World,
    state: &mut SearchState,
    cursor: &mut QueryCursor,
    registry: &mut ObjectRegistry,
    query: &str,
    cfg: DetectionConfig,
    nav: &mut NavResult,
    rng: &mut R,
) -> Result<SearchOutcome, PerceptionError> {
    if !cursor.started {
        cursor.started = true;
        state.viewpoints.push((robot.pose.point(), BTreeSet::from([query.to_string()])));
        if let Some(hits) = spin_detect(robot, world, registry, query, cfg, &mut cursor.reported, nav, rng)? {
            return Ok(SearchOutcome::Found(hits));
        }
    }
    while cursor.replayed < state.viewpoints.len() {
        let i = cursor.replayed;
        cursor.replayed += 1;
        if !state.viewpoints[i].1.insert(query.to_string()) {
            continue;
        }
        let target = state.viewpoints[i].0;
        if let Ok(leg) = goto_point(robot, world, target) {
            nav.extend(leg);
        }
        if let Some(hits) = spin_detect(robot, world, registry, query, cfg, &mut cursor.reported, nav, rng)? {
            return Ok(SearchOutcome::Found(hits));
        }
    }
    loop {
        let clusters = find_frontiers(&robot.online, robot.cell());
        let next = clusters.into_iter().find(|c| c.distance.is_finite() && !c.cells.iter().all(|x| state.visited.contains(x)));
        let Some(cluster) = next else {
            return Ok(SearchOutcome::Exhausted);
        };
        // Marking every member up front bounds the number of frontier visits
        // by the cell count, even when a target turns out to be unreachable.
        state.visited.extend(cluster.cells.iter().copied());
        let target = cluster.centroid.center(robot.online.resolution());
        if let Ok(leg) = goto_point(robot, world, target) {
            nav.extend(leg);
        }
        state.viewpoints.push((robot.pose.point(), BTreeSet::from([query.to_string()])));
        cursor.replayed = state.viewpoints.len();
        if let Some(hits) = spin_detect(robot, world, registry, query, cfg, &mut cursor.reported, nav, rng)? {
            return Ok(SearchOutcome::Found(hits));
        }
    }
}

/// Executes a run of primitives, for replaying policy-level Move/Rotate.
pub fn execute_primitives(robot: &mut Robot, world: &World, actions: &[PrimitiveAction]) -> usize {
    actions.iter().filter(|a| robot.step(world, a)).count()
}
