//! The shared read-only world and the mutable robot body.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::control::{apply_primitive, PrimitiveAction, STEP_M};
use crate::embedding::{EmbeddingError, EmbeddingProvider, FeatureVector};
use crate::exploration::update_occupancy;
use crate::grid::{Cell, Knowledge, OnlineGrid, Point, Pose, Traversable};
use crate::perception::CameraModel;
use crate::scene::{goal_success_region, Scene, SceneError, SUCCESS_RADIUS};
use crate::semantic_map::{build_semantic_map, SemanticMap};

/// Everything about a scene that stays fixed while episodes run: ground
/// truth, the camera, per-object visual features, the prebuilt semantic map
/// and each goal's success region.
#[derive(Debug)]
pub struct World {
    pub scene: Arc<Scene>,
    pub camera: CameraModel,
    pub encoder: Arc<EmbeddingProvider>,
    pub visuals: Vec<FeatureVector>,
    pub semantic_map: SemanticMap,
    pub success_radius: f64,
    pub success_regions: Vec<BTreeSet<Cell>>,
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

impl World {
    pub fn new(scene: Arc<Scene>, encoder: Arc<EmbeddingProvider>, camera: CameraModel) -> Result<Self, WorldError> {
        let visuals = scene
            .objects()
            .iter()
            .map(|o| encoder.embed_phrase(&o.visual_phrase()))
            .collect::<Result<Vec<_>, _>>()?;
        let semantic_map = build_semantic_map(&scene, &encoder)?;
        let success_regions = scene
            .goals()
            .iter()
            .map(|g| goal_success_region(&scene, g, &camera, SUCCESS_RADIUS))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { scene, camera, encoder, visuals, semantic_map, success_radius: SUCCESS_RADIUS, success_regions })
    }
}

/// The robot's pose, its own occupancy map and its odometry.
#[derive(Debug, Clone)]
pub struct Robot {
    pub pose: Pose,
    pub online: OnlineGrid,
    pub trail: Vec<Point>,
    pub traveled: f64,
}

impl Robot {
    pub fn new(scene: &Scene, pose: Pose) -> Self {
        let online = OnlineGrid::new(scene.rows(), scene.cols(), scene.resolution());
        Self { pose, online, trail: vec![pose.point()], traveled: 0.0 }
    }

    pub fn cell(&self) -> Cell {
        self.online.cell_of(self.pose.point()).expect("robot pose stays on the grid")
    }

    /// Executes one primitive against ground truth and senses afterwards.
    /// Returns true when a forward move was blocked; the blocking cell is
    /// then recorded as occupied, as a bumper would.
    pub fn step(&mut self, world: &World, action: &PrimitiveAction) -> bool {
        let grid = world.scene.grid();
        let (pose, blocked) = apply_primitive(self.pose, action, grid);
        if blocked {
            let (dy, dx) = self.pose.heading.to_radians().sin_cos();
            let ahead = Point::new(self.pose.x + STEP_M * dx, self.pose.y + STEP_M * dy);
            if let Some(cell) = grid.cell_of(ahead) {
                self.online.observe(cell, Knowledge::Occupied);
            }
            return true;
        }
        if matches!(action, PrimitiveAction::Talk(_)) {
            return false;
        }
        if matches!(action, PrimitiveAction::MoveForward) {
            self.traveled += STEP_M;
            self.trail.push(pose.point());
        }
        self.pose = pose;
        update_occupancy(&mut self.online, self.pose, &world.scene, &world.camera);
        false
    }
}
