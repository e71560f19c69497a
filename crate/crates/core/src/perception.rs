//! Simulated ego-view sensing: ray-cast visibility, open-vocabulary
//! detection scored in the shared embedding space, the session object
//! registry, and re-observation from a closer viewpoint.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Robot, World};
use crate::control::{self, ControlError};
use crate::embedding::{cosine, EmbeddingError};
use crate::grid::{Cell, Point, Pose, Traversable};
use crate::scene::Scene;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("unknown object id {0}")]
    UnknownObject(ObjId),
    #[error("no reachable viewpoint for {0}")]
    NoViewpoint(ObjId),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fov_deg: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    pub ray_step_deg: f64,
    pub march_step: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { fov_deg: 90.0, depth_min: 0.1, depth_max: 10.0, ray_step_deg: 1.0, march_step: 0.05 }
    }
}

impl CameraModel {
    fn half_rays(&self) -> i64 {
        (self.fov_deg / 2.0 / self.ray_step_deg + 1e-9).floor() as i64
    }

    /// Absolute ray directions for a given heading.
    pub fn ray_angles(&self, heading: f64) -> impl Iterator<Item = f64> + '_ {
        let n = self.half_rays();
        (-n..=n).map(move |k| heading + k as f64 * self.ray_step_deg)
    }

    /// Walks a ray in fixed increments up to `depth_max`, calling `visit` once
    /// per newly entered cell with the distance at entry. Stops when `visit`
    /// returns false or the ray leaves the grid.
    pub fn march<G: Traversable>(&self, grid: &G, origin: Point, angle_deg: f64, mut visit: impl FnMut(Cell, f64) -> bool) {
        let (dy, dx) = angle_deg.to_radians().sin_cos();
        let steps = (self.depth_max / self.march_step + 1e-9).floor() as usize;
        let mut last = grid.cell_of(origin);
        for k in 1..=steps {
            let t = k as f64 * self.march_step;
            let Some(cell) = grid.cell_of(Point::new(origin.x + t * dx, origin.y + t * dy)) else { return };
            if Some(cell) == last {
                continue;
            }
            last = Some(cell);
            if !visit(cell, t) {
                return;
            }
        }
    }
}

/// What the camera sees of one object from one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectView {
    pub visible: bool,
    /// Footprint cells reached by some ray before any foreign obstacle.
    pub cells: BTreeSet<Cell>,
    pub distance: f64,
    pub angle: f64,
}

/// Ray-casts toward object `index`. The object is visible when a ray inside
/// the field of view reaches its mass-center cell without first hitting an
/// occupied cell that belongs to something else, and the mass center lies
/// within the depth range. Rays pass through the object's own footprint.
pub fn object_view(scene: &Scene, pose: Pose, index: usize, camera: &CameraModel) -> ObjectView {
    let obj = &scene.objects()[index];
    let res = scene.resolution();
    let center = scene.mass_center_of(index);
    let origin = pose.point();
    let distance = origin.distance(center);
    let angle = pose.relative_bearing(center);
    let mut view = ObjectView { visible: false, cells: BTreeSet::new(), distance, angle };

    let corners: Vec<Point> = obj
        .footprint
        .iter()
        .flat_map(|c| {
            let (x0, y0) = (c.col as f64 * res, c.row as f64 * res);
            [Point::new(x0, y0), Point::new(x0 + res, y0), Point::new(x0, y0 + res), Point::new(x0 + res, y0 + res)]
        })
        .collect();
    let nearest = corners.iter().map(|p| origin.distance(*p)).fold(f64::INFINITY, f64::min);
    if nearest > camera.depth_max {
        return view;
    }
    let rel: Vec<f64> = corners.iter().map(|p| pose.relative_bearing(*p)).collect();
    let (mut lo, mut hi) = rel.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), a| (l.min(*a), h.max(*a)));
    let half = camera.fov_deg / 2.0;
    if hi - lo > 180.0 {
        lo = -half;
        hi = half;
    }
    if hi < -half - camera.ray_step_deg || lo > half + camera.ray_step_deg {
        return view;
    }
    let n = camera.half_rays();
    let k_lo = (((lo - camera.ray_step_deg) / camera.ray_step_deg).ceil() as i64).max(-n);
    let k_hi = (((hi + camera.ray_step_deg) / camera.ray_step_deg).floor() as i64).min(n);
    let grid = scene.grid();
    for k in k_lo..=k_hi {
        let angle = pose.heading + k as f64 * camera.ray_step_deg;
        camera.march(grid, origin, angle, |cell, _| {
            if grid.is_free(cell) {
                return true;
            }
            if scene.owner_of(cell) == Some(index) {
                view.cells.insert(cell);
                true
            } else {
                false
            }
        });
    }
    let mass_cell = grid.cell_of(center);
    view.visible = mass_cell.is_some_and(|c| view.cells.contains(&c))
        && distance >= camera.depth_min
        && distance <= camera.depth_max;
    view
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibleObject {
    pub index: usize,
    pub gid: u32,
    pub distance: f64,
    pub angle: f64,
    pub cells: BTreeSet<Cell>,
}

/// All objects whose mass center is visible from `pose`, in scene order.
pub fn visible_objects(scene: &Scene, pose: Pose, camera: &CameraModel) -> Vec<VisibleObject> {
    (0..scene.objects().len())
        .filter_map(|index| {
            let view = object_view(scene, pose, index, camera);
            view.visible.then(|| VisibleObject {
                index,
                gid: scene.objects()[index].gid,
                distance: view.distance,
                angle: view.angle,
                cells: view.cells,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Registry

/// Session-scoped object handle shown to policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ObjId(pub u32);

impl fmt::Display for ObjId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "obj_{}", self.0)
    }
}

impl From<ObjId> for String {
    fn from(id: ObjId) -> Self {
        id.to_string()
    }
}

impl FromStr for ObjId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().strip_prefix("obj_").unwrap_or(s.trim());
        digits.parse().map(ObjId).map_err(|_| format!("invalid object id {s:?}"))
    }
}

impl TryFrom<String> for ObjId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionSource {
    Map,
    Detection,
    Memory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub id: ObjId,
    pub region: BTreeSet<Cell>,
    pub source: RegionSource,
    /// Ground-truth object, for evaluation only; never shown to policies.
    pub gid_hint: Option<u32>,
    /// The last query this region answered.
    pub query: String,
}

/// Object areas (from map retrieval or detection) and their session ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectRegistry {
    entries: Vec<RegistryEntry>,
}

pub fn iou(a: &BTreeSet<Cell>, b: &BTreeSet<Cell>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Intersection over the smaller region.
pub fn overlap(a: &BTreeSet<Cell>, b: &BTreeSet<Cell>) -> f64 {
    let smaller = a.len().min(b.len());
    if smaller == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / smaller as f64
    }
}

impl ObjectRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of an existing entry whose region overlaps with IoU
    /// above one half (merging the regions), or a fresh id. A partial view
    /// that lies mostly inside a known region also reuses that id.
    pub fn register(&mut self, region: BTreeSet<Cell>, source: RegionSource, gid_hint: Option<u32>, query: &str) -> ObjId {
        let best = self
            .entries
            .iter_mut()
            .map(|e| (iou(&e.region, &region), overlap(&e.region, &region), e))
            .filter(|(score, within, _)| *score > 0.5 || *within > 0.5)
            .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
            .map(|(score, _, e)| (score, e));
        if let Some((_, entry)) = best {
            entry.region.extend(region);
            entry.query = query.to_string();
            if entry.gid_hint.is_none() {
                entry.gid_hint = gid_hint;
            }
            return entry.id;
        }
        let id = ObjId(self.entries.len() as u32 + 1);
        self.entries.push(RegistryEntry { id, region, source, gid_hint, query: query.to_string() });
        id
    }

    pub fn get(&self, id: ObjId) -> Option<&RegistryEntry> {
        id.0.checked_sub(1).and_then(|i| self.entries.get(i as usize))
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn centroid(&self, id: ObjId, res: f64) -> Option<Point> {
        self.get(id).and_then(|e| Point::mean(e.region.iter().map(|c| c.center(res))))
    }
}

/// Ground-truth object covering most of `region`, if any.
pub fn majority_owner(scene: &Scene, region: &BTreeSet<Cell>) -> Option<u32> {
    let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
    for c in region {
        if let Some(i) = scene.owner_of(*c) {
            *counts.entry(i).or_default() += 1;
        }
    }
    counts.into_iter().max_by_key(|(i, n)| (*n, std::cmp::Reverse(*i))).map(|(i, _)| scene.objects()[i].gid)
}

// ---------------------------------------------------------------------------
// Detection

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub sigma: f64,
    pub threshold: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { sigma: 0.05, threshold: 0.5 }
    }
}

impl DetectionConfig {
    /// The weaker patch-matching detector used by the `det` ablation.
    pub fn degraded(self) -> Self {
        Self { sigma: self.sigma * 4.0, threshold: self.threshold - 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub obj_id: ObjId,
    pub distance: f64,
    /// Relative bearing, degrees in (-180, 180].
    pub angle: f64,
    pub score: f64,
}

fn relative_to(pose: Pose, region: &BTreeSet<Cell>, res: f64) -> (f64, f64) {
    let c = Point::mean(region.iter().map(|c| c.center(res))).expect("non-empty region");
    (pose.point().distance(c), pose.relative_bearing(c))
}

/// Scores every visible object against `query`, keeps those at or above the
/// threshold, writes their visible footprint cells to the registry and
/// returns them best first.
pub fn detect_object<R: Rng>(
    world: &World,
    pose: Pose,
    query: &str,
    registry: &mut ObjectRegistry,
    cfg: DetectionConfig,
    rng: &mut R,
) -> Result<Vec<DetectionResult>, PerceptionError> {
    let q = world.encoder.embed_phrase(query)?;
    let scene = &*world.scene;
    let res = scene.resolution();
    let noise = Normal::new(0.0, cfg.sigma.max(0.0)).expect("finite sigma");
    let mut hits = Vec::new();
    for seen in visible_objects(scene, pose, &world.camera) {
        let mut score = cosine(&q, &world.visuals[seen.index])?;
        if cfg.sigma > 0.0 {
            score += noise.sample(rng);
        }
        let score = score.clamp(0.0, 1.0);
        if score < cfg.threshold {
            continue;
        }
        let (distance, angle) = relative_to(pose, &seen.cells, res);
        let id = registry.register(seen.cells, RegionSource::Detection, Some(seen.gid), query);
        hits.push(DetectionResult { obj_id: id, distance, angle, score });
    }
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.distance.total_cmp(&b.distance)));
    hits.dedup_by_key(|d| d.obj_id);
    Ok(hits)
}

/// Moves to a viewpoint no farther than one meter (or the current distance,
/// if already closer) with line of sight, then detects again for the entry's
/// stored query with half the noise.
pub fn double_check<R: Rng>(
    robot: &mut Robot,
    world: &World,
    registry: &mut ObjectRegistry,
    id: ObjId,
    cfg: DetectionConfig,
    rng: &mut R,
) -> Result<(Option<DetectionResult>, control::NavResult), PerceptionError> {
    let entry = registry.get(id).ok_or(PerceptionError::UnknownObject(id))?.clone();
    let res = world.scene.resolution();
    let centroid = registry.centroid(id, res).expect("registered region");
    let radius = robot.pose.point().distance(centroid).min(1.0);
    let nav = match control::approach_region(robot, world, &entry.region, radius) {
        Ok(nav) => nav,
        // Already close with no better cell: look again from here.
        Err(ControlError::Unreachable(_)) if radius < 1.0 => {
            let mut nav = control::NavResult::start(robot.pose);
            control::face_point(robot, world, centroid, &mut nav);
            nav
        }
        Err(_) => return Err(PerceptionError::NoViewpoint(id)),
    };
    let refined = DetectionConfig { sigma: cfg.sigma * 0.5, ..cfg };
    let mut scratch = registry.clone();
    let hits = detect_object(world, robot.pose, &entry.query, &mut scratch, refined, rng)?;
    // Match the refreshed detections back to this entry by region overlap.
    let best = hits
        .iter()
        .filter_map(|d| {
            let region = &scratch.get(d.obj_id)?.region;
            let overlap = region.intersection(&entry.region).count();
            (overlap > 0 || d.obj_id == id).then_some((overlap, *d))
        })
        .max_by(|a, b| a.0.cmp(&b.0).then(a.1.score.total_cmp(&b.1.score)));
    Ok((best.map(|(_, d)| DetectionResult { obj_id: id, ..d }), nav))
}
