//! The top-down feature map of generic visual semantics and the
//! threshold/contour retrieval shared with the memory layers.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, EmbeddingError, EmbeddingProvider, FeatureVector};
use crate::grid::{offset, Cell, Point, Pose, NEIGHBORS4};
use crate::perception::{majority_owner, ObjId, ObjectRegistry, RegionSource};
use crate::scene::Scene;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("snapshot shape {found} does not match map {expected}")]
    ShapeMismatch { expected: String, found: String },
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

/// A sparse L x W x C grid: cells not present are the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    rows: usize,
    cols: usize,
    dim: usize,
    resolution: f64,
    cells: BTreeMap<Cell, FeatureVector>,
}

impl FeatureGrid {
    pub fn new(rows: usize, cols: usize, dim: usize, resolution: f64) -> Self {
        Self { rows, cols, dim, resolution, cells: BTreeMap::new() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn get(&self, cell: Cell) -> Option<&FeatureVector> {
        self.cells.get(&cell)
    }

    pub fn set(&mut self, cell: Cell, v: FeatureVector) {
        if v.is_zero() {
            self.cells.remove(&cell);
        } else {
            self.cells.insert(cell, v);
        }
    }

    /// Writes `v`, or accumulates it with normalized summation if the cell
    /// already holds a feature.
    pub fn accumulate(&mut self, cell: Cell, v: &FeatureVector) {
        let next = match self.cells.get(&cell) {
            Some(old) => old.accumulate(v),
            None => v.clone(),
        };
        self.set(cell, next);
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (&Cell, &FeatureVector)> {
        self.cells.iter()
    }

    pub fn nonzero_count(&self) -> usize {
        self.cells.len()
    }

    /// Cosine of `query` against every nonzero cell.
    pub fn similarity(&self, query: &FeatureVector) -> Result<BTreeMap<Cell, f64>, EmbeddingError> {
        self.cells.iter().map(|(c, v)| Ok((*c, cosine(query, v)?))).collect()
    }

    pub fn snapshot(&self, layer: Option<&str>) -> MapSnapshot {
        MapSnapshot {
            resolution: self.resolution,
            dim: self.dim,
            rows: self.rows,
            cols: self.cols,
            layer: layer.map(str::to_string),
            cells: self.cells.iter().map(|(c, v)| SnapshotCell { r: c.row, c: c.col, v: v.values().to_vec() }).collect(),
        }
    }

    /// Rebuilds a grid from a snapshot, checking it against the expected shape.
    pub fn from_snapshot(snap: &MapSnapshot, rows: usize, cols: usize, dim: usize) -> Result<Self, MapError> {
        if (snap.rows, snap.cols, snap.dim) != (rows, cols, dim) {
            return Err(MapError::ShapeMismatch {
                expected: format!("{rows}x{cols}x{dim}"),
                found: format!("{}x{}x{}", snap.rows, snap.cols, snap.dim),
            });
        }
        let mut grid = Self::new(rows, cols, dim, snap.resolution);
        for cell in &snap.cells {
            if cell.r >= rows || cell.c >= cols || cell.v.len() != dim {
                return Err(MapError::Malformed(format!("cell ({}, {})", cell.r, cell.c)));
            }
            grid.cells.insert(Cell::new(cell.r, cell.c), FeatureVector::from_raw(cell.v.clone()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotCell {
    pub r: usize,
    pub c: usize,
    pub v: Vec<f64>,
}

/// Nonzero cells of one feature layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub resolution: f64,
    pub dim: usize,
    pub rows: usize,
    pub cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    pub cells: Vec<SnapshotCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub threshold: f64,
    pub min_area: usize,
    pub max_candidates: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { threshold: 0.55, min_area: 2, max_candidates: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapCandidate {
    pub obj_id: ObjId,
    pub distance: f64,
    pub angle: f64,
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub grid: FeatureGrid,
    pub built_from: String,
}

/// Writes each object's generic visual phrase into its footprint cells.
/// Personal names never reach the map.
pub fn build_semantic_map(scene: &Scene, provider: &EmbeddingProvider) -> Result<SemanticMap, EmbeddingError> {
    let mut grid = FeatureGrid::new(scene.rows(), scene.cols(), provider.dim(), scene.resolution());
    for obj in scene.objects() {
        let v = provider.embed_phrase(&obj.visual_phrase())?;
        for cell in &obj.footprint {
            grid.set(*cell, v.clone());
        }
    }
    Ok(SemanticMap { grid, built_from: scene.id().to_string() })
}

/// 4-connected components of `cells`, each sorted, in order of first cell.
pub fn components(cells: &BTreeSet<Cell>, rows: usize, cols: usize) -> Vec<BTreeSet<Cell>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in cells {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for (dr, dc) in NEIGHBORS4 {
                if let Some(n) = offset(c, dr, dc, rows, cols) {
                    if cells.contains(&n) && seen.insert(n) {
                        comp.insert(n);
                        queue.push_back(n);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Thresholds a similarity area, extracts contours, registers them and
/// returns candidates nearest first.
#[allow(clippy::too_many_arguments)]
pub fn contour_candidates(
    area: &BTreeMap<Cell, f64>,
    cfg: &RetrievalConfig,
    pose: Pose,
    scene: &Scene,
    registry: &mut ObjectRegistry,
    source: RegionSource,
    query: &str,
) -> Vec<MapCandidate> {
    let res = scene.resolution();
    let hot: BTreeSet<Cell> = area.iter().filter(|(_, s)| **s >= cfg.threshold).map(|(c, _)| *c).collect();
    let mut found: Vec<(f64, f64, BTreeSet<Cell>)> = components(&hot, scene.rows(), scene.cols())
        .into_iter()
        .filter(|comp| comp.len() >= cfg.min_area)
        .map(|comp| {
            let centroid = Point::mean(comp.iter().map(|c| c.center(res))).expect("non-empty component");
            (pose.point().distance(centroid), pose.relative_bearing(centroid), comp)
        })
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.2.iter().next().cmp(&b.2.iter().next())));
    found.truncate(cfg.max_candidates);
    found
        .into_iter()
        .map(|(distance, angle, comp)| {
            let area = comp.len();
            let hint = majority_owner(scene, &comp);
            let obj_id = registry.register(comp, source, hint, query);
            MapCandidate { obj_id, distance, angle, area }
        })
        .collect()
}

pub fn retrieve_map(
    query: &str,
    pose: Pose,
    map: &SemanticMap,
    provider: &EmbeddingProvider,
    scene: &Scene,
    registry: &mut ObjectRegistry,
    cfg: &RetrievalConfig,
) -> Result<Vec<MapCandidate>, EmbeddingError> {
    let q = provider.embed_phrase(query)?;
    let area = map.grid.similarity(&q)?;
    Ok(contour_candidates(&area, cfg, pose, scene, registry, RegionSource::Map, query))
}
