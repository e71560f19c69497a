//! Static ground truth: occupancy, rooms, objects and personalized goals.

use std::collections::{BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{offset, Cell, Occupancy, OccupancyGrid, Point, Pose, Traversable, NEIGHBORS8};
use crate::perception::{object_view, CameraModel};
use crate::text::tokenize;

/// Radius around an object's mass center inside which a talk can succeed.
pub const SUCCESS_RADIUS: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("unknown object gid {0}")]
    UnknownObject(u32),
    #[error("goal unreachable by success criteria: {0}")]
    EmptySuccessRegion(String),
    #[error("unreachable goal: {0}")]
    UnreachableGoal(String),
    #[error("infeasible generation parameters: {0}")]
    Infeasible(String),
}

fn invalid(msg: impl Into<String>) -> SceneError {
    SceneError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub name: String,
    /// Inclusive `[r0, c0, r1, c1]`.
    pub rect: [usize; 4],
}

impl Room {
    pub fn contains(&self, cell: Cell) -> bool {
        let [r0, c0, r1, c1] = self.rect;
        (r0..=r1).contains(&cell.row) && (c0..=c1).contains(&cell.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub gid: u32,
    pub class_label: String,
    pub personalized_name: String,
    pub room: String,
    pub footprint: Vec<Cell>,
    pub visual_tokens: Vec<String>,
    pub is_landmark: bool,
    pub descriptions: Vec<String>,
}

impl SceneObject {
    /// The phrase a camera could ground: visible attributes only.
    pub fn visual_phrase(&self) -> String {
        self.visual_tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    #[serde(rename = "type")]
    pub goal_type: String,
    pub name: String,
    pub room: String,
    pub target_gid: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    id: String,
    grid: OccupancyGrid,
    rooms: Vec<Room>,
    objects: Vec<SceneObject>,
    goals: Vec<GoalSpec>,
    start: Pose,
    owner: Vec<Option<usize>>,
    mass_centers: Vec<Point>,
}

impl Scene {
    /// Builds a scene and checks every structural invariant. Reachability is
    /// checked separately by [`Scene::validate_reachability`].
    pub fn from_parts(
        id: String,
        grid: OccupancyGrid,
        rooms: Vec<Room>,
        objects: Vec<SceneObject>,
        goals: Vec<GoalSpec>,
        start: Pose,
    ) -> Result<Self, SceneError> {
        let (rows, cols, res) = (grid.rows(), grid.cols(), grid.resolution());
        if rows == 0 || cols == 0 {
            return Err(invalid("empty grid"));
        }
        if res.is_nan() || res <= 0.0 {
            return Err(invalid("resolution must be positive"));
        }
        for room in &rooms {
            let [r0, c0, r1, c1] = room.rect;
            if r0 > r1 || c0 > c1 || r1 >= rows || c1 >= cols {
                return Err(invalid(format!("room out of bounds: {}", room.name)));
            }
        }
        let mut owner = vec![None; rows * cols];
        let mut gids = HashSet::new();
        let mut mass_centers = Vec::with_capacity(objects.len());
        for (idx, obj) in objects.iter().enumerate() {
            if !gids.insert(obj.gid) {
                return Err(invalid(format!("duplicate object gid: {}", obj.gid)));
            }
            if obj.footprint.is_empty() {
                return Err(invalid(format!("empty footprint: object {}", obj.gid)));
            }
            for &cell in &obj.footprint {
                if cell.row >= rows || cell.col >= cols {
                    return Err(invalid(format!("footprint out of bounds: object {}", obj.gid)));
                }
                if grid.get(cell) != Occupancy::Occupied {
                    return Err(invalid(format!("footprint cell not occupied: object {}", obj.gid)));
                }
                let slot = &mut owner[cell.row * cols + cell.col];
                if slot.is_some() {
                    return Err(invalid(format!("overlapping footprints: object {}", obj.gid)));
                }
                *slot = Some(idx);
            }
            let visual: HashSet<String> = obj.visual_tokens.iter().flat_map(|t| tokenize(t)).collect();
            let class_tokens = tokenize(&obj.class_label);
            if class_tokens.is_empty() || !class_tokens.iter().all(|t| visual.contains(t)) {
                return Err(invalid(format!("class not among visual tokens: object {}", obj.gid)));
            }
            let personal = tokenize(&obj.personalized_name);
            if personal.iter().any(|t| !class_tokens.contains(t) && visual.contains(t)) {
                return Err(invalid(format!("personalized token visible: object {}", obj.gid)));
            }
            if !rooms.iter().any(|r| r.name == obj.room) {
                return Err(invalid(format!("unknown room {:?}: object {}", obj.room, obj.gid)));
            }
            mass_centers.push(Point::mean(obj.footprint.iter().map(|c| c.center(res))).unwrap());
        }
        let mut names = HashSet::new();
        for goal in &goals {
            if !names.insert(goal.name.as_str()) {
                return Err(invalid(format!("duplicate goal name: {}", goal.name)));
            }
            let target = objects
                .iter()
                .find(|o| o.gid == goal.target_gid)
                .ok_or(SceneError::UnknownObject(goal.target_gid))?;
            if target.class_label != goal.goal_type {
                return Err(invalid(format!("goal type mismatch: {}", goal.name)));
            }
        }
        match grid.cell_of(start.point()) {
            Some(c) if grid.is_free(c) => {}
            _ => return Err(invalid("start pose not on a free cell")),
        }
        Ok(Self { id, grid, rooms, objects, goals, start, owner, mass_centers })
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn resolution(&self) -> f64 {
        self.grid.resolution()
    }
    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }
    pub fn rows(&self) -> usize {
        self.grid.rows()
    }
    pub fn cols(&self) -> usize {
        self.grid.cols()
    }
    pub fn rooms(&self) -> &[Room] {
        &self.rooms
    }
    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }
    pub fn goals(&self) -> &[GoalSpec] {
        &self.goals
    }
    pub fn start(&self) -> Pose {
        self.start
    }

    /// Index into [`Scene::objects`] of the object covering `cell`.
    pub fn owner_of(&self, cell: Cell) -> Option<usize> {
        self.owner[cell.row * self.grid.cols() + cell.col]
    }

    pub fn object_index(&self, gid: u32) -> Option<usize> {
        self.objects.iter().position(|o| o.gid == gid)
    }

    pub fn object(&self, gid: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.gid == gid)
    }

    pub fn mass_center_of(&self, index: usize) -> Point {
        self.mass_centers[index]
    }

    /// Checks that every goal has a non-empty success region reachable from
    /// the start pose.
    pub fn validate_reachability(&self, camera: &CameraModel, radius: f64) -> Result<(), SceneError> {
        let start = self.grid.cell_of(self.start.point()).expect("start validated");
        let reachable = flood_fill(&self.grid, start);
        for goal in &self.goals {
            let region = goal_success_region(self, goal, camera, radius)?;
            if !region.iter().any(|c| reachable.contains(c)) {
                return Err(SceneError::UnreachableGoal(goal.name.clone()));
            }
        }
        Ok(())
    }
}

/// Free cells 8-connected to `start` without cutting occupied corners.
pub fn flood_fill(grid: &OccupancyGrid, start: Cell) -> BTreeSet<Cell> {
    let mut seen = BTreeSet::new();
    if !grid.is_free(start) {
        return seen;
    }
    let mut queue = VecDeque::from([start]);
    seen.insert(start);
    while let Some(cell) = queue.pop_front() {
        for (dr, dc) in NEIGHBORS8 {
            let Some(n) = offset(cell, dr, dc, grid.rows(), grid.cols()) else { continue };
            if !grid.is_free(n) || seen.contains(&n) {
                continue;
            }
            if dr != 0 && dc != 0 {
                let a = offset(cell, dr, 0, grid.rows(), grid.cols()).unwrap();
                let b = offset(cell, 0, dc, grid.rows(), grid.cols()).unwrap();
                if !grid.is_free(a) || !grid.is_free(b) {
                    continue;
                }
            }
            seen.insert(n);
            queue.push_back(n);
        }
    }
    seen
}

/// Centroid of the object's footprint cell centers, meters.
pub fn object_mass_center(scene: &Scene, gid: u32) -> Result<Point, SceneError> {
    scene.object_index(gid).map(|i| scene.mass_center_of(i)).ok_or(SceneError::UnknownObject(gid))
}

/// Free cells within `radius` of the goal's mass center from which the mass
/// center is visible at one of the 24 rotation-quantum headings.
pub fn goal_success_region(
    scene: &Scene,
    goal: &GoalSpec,
    camera: &CameraModel,
    radius: f64,
) -> Result<BTreeSet<Cell>, SceneError> {
    let index = scene.object_index(goal.target_gid).ok_or(SceneError::UnknownObject(goal.target_gid))?;
    let center = scene.mass_center_of(index);
    let res = scene.resolution();
    let reach = (radius / res).ceil() as isize + 1;
    let center_cell = Cell::new((center.y / res).floor() as usize, (center.x / res).floor() as usize);
    let mut region = BTreeSet::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let Some(cell) = offset(center_cell, dr, dc, scene.rows(), scene.cols()) else { continue };
            if !scene.grid().is_free(cell) || cell.center(res).distance(center) > radius {
                continue;
            }
            let p = cell.center(res);
            let visible = (0..24).any(|k| object_view(scene, Pose::new(p.x, p.y, k as f64 * 15.0), index, camera).visible);
            if visible {
                region.insert(cell);
            }
        }
    }
    if region.is_empty() {
        return Err(SceneError::EmptySuccessRegion(goal.name.clone()));
    }
    Ok(region)
}

// ---------------------------------------------------------------------------
// File format

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    id: String,
    resolution: f64,
    grid: Vec<String>,
    rooms: Vec<Room>,
    objects: Vec<ObjectFile>,
    goals: Vec<GoalSpec>,
    start: PoseFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectFile {
    gid: u32,
    class: String,
    name: String,
    room: String,
    footprint: Vec<[usize; 2]>,
    visual_tokens: Vec<String>,
    landmark: bool,
    descriptions: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    x: f64,
    y: f64,
    heading: f64,
}

/// Parses and fully validates a scene document.
pub fn load_scene(text: &str) -> Result<Scene, SceneError> {
    let file: SceneFile = serde_json::from_str(text)
        .map_err(|e| SceneError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
    let rows = file.grid.len();
    let cols = file.grid.first().map_or(0, |r| r.chars().count());
    let mut grid = OccupancyGrid::new(rows, cols, file.resolution);
    for (r, line) in file.grid.iter().enumerate() {
        if line.chars().count() != cols {
            return Err(invalid(format!("grid row {r} has inconsistent width")));
        }
        for (c, ch) in line.chars().enumerate() {
            match ch {
                '#' => grid.set(Cell::new(r, c), Occupancy::Occupied),
                '.' => {}
                other => return Err(invalid(format!("unexpected grid character {other:?} at row {r}"))),
            }
        }
    }
    let objects = file
        .objects
        .into_iter()
        .map(|o| SceneObject {
            gid: o.gid,
            class_label: o.class,
            personalized_name: o.name,
            room: o.room,
            footprint: o.footprint.into_iter().map(|[r, c]| Cell::new(r, c)).collect(),
            visual_tokens: o.visual_tokens,
            is_landmark: o.landmark,
            descriptions: o.descriptions,
        })
        .collect();
    if !file.start.heading.is_finite() || !(0.0..360.0).contains(&file.start.heading) {
        return Err(invalid("start heading outside [0, 360)"));
    }
    let start = Pose::new(file.start.x, file.start.y, file.start.heading);
    let scene = Scene::from_parts(file.id, grid, file.rooms, objects, file.goals, start)?;
    scene.validate_reachability(&CameraModel::default(), SUCCESS_RADIUS)?;
    Ok(scene)
}

pub fn save_scene(scene: &Scene) -> String {
    let grid = (0..scene.rows())
        .map(|r| {
            (0..scene.cols())
                .map(|c| if scene.grid().is_free(Cell::new(r, c)) { '.' } else { '#' })
                .collect()
        })
        .collect();
    let file = SceneFile {
        id: scene.id.clone(),
        resolution: scene.resolution(),
        grid,
        rooms: scene.rooms.clone(),
        objects: scene
            .objects
            .iter()
            .map(|o| ObjectFile {
                gid: o.gid,
                class: o.class_label.clone(),
                name: o.personalized_name.clone(),
                room: o.room.clone(),
                footprint: o.footprint.iter().map(|c| [c.row, c.col]).collect(),
                visual_tokens: o.visual_tokens.clone(),
                landmark: o.is_landmark,
                descriptions: o.descriptions.clone(),
            })
            .collect(),
        goals: scene.goals.clone(),
        start: PoseFile { x: scene.start.x, y: scene.start.y, heading: scene.start.heading },
    };
    serde_json::to_string_pretty(&file).expect("scene serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn open_scene_json(rows: usize, cols: usize, extra_walls: &[(usize, usize)]) -> String {
        let mut grid: Vec<Vec<char>> = vec![vec!['.'; cols]; rows];
        for &(r, c) in extra_walls {
            grid[r][c] = '#';
        }
        grid[4][4] = '#';
        let grid: Vec<String> = grid.into_iter().map(|r| r.into_iter().collect()).collect();
        serde_json::json!({
            "id": "mini",
            "resolution": 0.25,
            "grid": grid,
            "rooms": [{"name": "office", "rect": [0, 0, rows - 1, cols - 1]}],
            "objects": [{
                "gid": 1, "class": "computer", "name": "alice's computer", "room": "office",
                "footprint": [[4, 4]], "visual_tokens": ["computer", "black"], "landmark": false,
                "descriptions": ["It is black."]
            }],
            "goals": [{"type": "computer", "name": "alice's computer", "room": "office", "target_gid": 1}],
            "start": {"x": 0.125, "y": 0.125, "heading": 0.0}
        })
        .to_string()
    }

    #[test]
    fn minimal_scene_loads() {
        let scene = load_scene(&open_scene_json(10, 10, &[])).unwrap();
        assert_eq!(scene.rows(), 10);
        assert_eq!(scene.objects().len(), 1);
        assert_eq!(object_mass_center(&scene, 1).unwrap(), Point::new(1.125, 1.125));
    }

    #[test]
    fn round_trip() {
        let scene = load_scene(&open_scene_json(10, 10, &[])).unwrap();
        assert_eq!(load_scene(&save_scene(&scene)).unwrap(), scene);
    }

    #[test]
    fn duplicate_goal_name_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&open_scene_json(10, 10, &[])).unwrap();
        let g = v["goals"][0].clone();
        v["goals"].as_array_mut().unwrap().push(g);
        let err = load_scene(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("duplicate goal name"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&open_scene_json(10, 10, &[])).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(matches!(load_scene(&v.to_string()), Err(SceneError::Parse { .. })));
    }

    #[test]
    fn parse_error_reports_line() {
        match load_scene("{\n\"id\": \"x\",\n oops }") {
            Err(SceneError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unreachable_goal_rejected() {
        // Wall off the object region: a ring at Chebyshev distance 7 around (4,4)
        // would leave the grid; instead wall the start into its corner.
        let walls = [(0, 1), (1, 1), (1, 0)];
        let err = load_scene(&open_scene_json(10, 10, &walls)).unwrap_err();
        assert_eq!(err, SceneError::UnreachableGoal("alice's computer".into()));
    }

    #[test]
    fn enclosed_object_has_no_success_region() {
        let mut walls = vec![];
        for r in 3..=5 {
            for c in 3..=5 {
                if (r, c) != (4, 4) {
                    walls.push((r, c));
                }
            }
        }
        let err = load_scene(&open_scene_json(10, 10, &walls)).unwrap_err();
        assert!(matches!(err, SceneError::EmptySuccessRegion(_)));
    }

    #[test]
    fn personalized_token_must_stay_hidden() {
        let mut v: serde_json::Value = serde_json::from_str(&open_scene_json(10, 10, &[])).unwrap();
        v["objects"][0]["visual_tokens"] = serde_json::json!(["computer", "alice"]);
        let err = load_scene(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("personalized token visible"));
    }

    #[test]
    fn footprint_must_be_occupied() {
        let mut v: serde_json::Value = serde_json::from_str(&open_scene_json(10, 10, &[])).unwrap();
        v["objects"][0]["footprint"] = serde_json::json!([[4, 4], [4, 5]]);
        let err = load_scene(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("not occupied"));
    }

    #[test]
    fn mass_center_of_square_and_l_shape() {
        let mut grid = OccupancyGrid::new(6, 6, 1.0);
        let square = vec![Cell::new(0, 0), Cell::new(0, 1), Cell::new(1, 0), Cell::new(1, 1)];
        let ell = vec![Cell::new(3, 3), Cell::new(4, 3), Cell::new(4, 4)];
        for c in square.iter().chain(&ell) {
            grid.set(*c, Occupancy::Occupied);
        }
        let obj = |gid, footprint| SceneObject {
            gid,
            class_label: "box".into(),
            personalized_name: "box".into(),
            room: "r".into(),
            footprint,
            visual_tokens: vec!["box".into()],
            is_landmark: false,
            descriptions: vec![],
        };
        let scene = Scene::from_parts(
            "s".into(),
            grid,
            vec![Room { name: "r".into(), rect: [0, 0, 5, 5] }],
            vec![obj(1, square), obj(2, ell)],
            vec![],
            Pose::new(5.5, 0.5, 0.0),
        )
        .unwrap();
        assert_eq!(object_mass_center(&scene, 1).unwrap(), Point::new(1.0, 1.0));
        // Direct average of (3.5,3.5), (3.5,4.5), (4.5,4.5).
        let m = object_mass_center(&scene, 2).unwrap();
        assert!((m.x - 11.5 / 3.0).abs() < 1e-12 && (m.y - 12.5 / 3.0).abs() < 1e-12);
        assert_eq!(object_mass_center(&scene, 9), Err(SceneError::UnknownObject(9)));
    }
}
