//! User-affirmed (positive) and user-denied (negative) feature layers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, EmbeddingError, EmbeddingProvider};
use crate::grid::Pose;
use crate::perception::{ObjId, ObjectRegistry, RegionSource};
use crate::scene::Scene;
use crate::semantic_map::{contour_candidates, FeatureGrid, MapCandidate, MapError, MapSnapshot, RetrievalConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("unknown object id {0}")]
    UnknownObject(ObjId),
    #[error("update_memory needs pos_str or neg_str")]
    NothingToWrite,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Snapshot(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub theta_pos: f64,
    pub theta_neg: f64,
    /// Detected areas from partial views can be a single cell, so memory
    /// contours keep components of any size.
    pub min_area: usize,
    pub max_candidates: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self { theta_pos: 0.75, theta_neg: 0.75, min_area: 1, max_candidates: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryMaps {
    pub pos: FeatureGrid,
    pub neg: FeatureGrid,
}

impl MemoryMaps {
    pub fn new(rows: usize, cols: usize, dim: usize, resolution: f64) -> Self {
        Self { pos: FeatureGrid::new(rows, cols, dim, resolution), neg: FeatureGrid::new(rows, cols, dim, resolution) }
    }

    pub fn for_scene(scene: &Scene, dim: usize) -> Self {
        Self::new(scene.rows(), scene.cols(), dim, scene.resolution())
    }

    pub fn is_empty(&self) -> bool {
        self.pos.nonzero_count() == 0 && self.neg.nonzero_count() == 0
    }

    pub fn save(&self) -> MemorySnapshot {
        MemorySnapshot(vec![self.pos.snapshot(Some("pos")), self.neg.snapshot(Some("neg"))])
    }

    /// Restores both layers, validating shape against the current map config.
    pub fn load(snapshot: &MemorySnapshot, rows: usize, cols: usize, dim: usize) -> Result<Self, MemoryError> {
        let layer = |name: &str| -> Result<FeatureGrid, MemoryError> {
            let snap = snapshot
                .0
                .iter()
                .find(|s| s.layer.as_deref() == Some(name))
                .ok_or_else(|| MapError::Malformed(format!("missing layer {name:?}")))?;
            Ok(FeatureGrid::from_snapshot(snap, rows, cols, dim)?)
        };
        Ok(Self { pos: layer("pos")?, neg: layer("neg")? })
    }
}

/// Both layers as a JSON array of per-layer snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemorySnapshot(pub Vec<MapSnapshot>);

/// Accumulates `pos_str` and/or `neg_str` into the object's region.
pub fn update_memory(
    maps: &mut MemoryMaps,
    registry: &ObjectRegistry,
    provider: &EmbeddingProvider,
    id: ObjId,
    pos_str: Option<&str>,
    neg_str: Option<&str>,
) -> Result<usize, MemoryError> {
    let entry = registry.get(id).ok_or(MemoryError::UnknownObject(id))?;
    if pos_str.is_none() && neg_str.is_none() {
        return Err(MemoryError::NothingToWrite);
    }
    let pos = pos_str.map(|s| provider.embed_phrase(s)).transpose()?;
    let neg = neg_str.map(|s| provider.embed_phrase(s)).transpose()?;
    for cell in &entry.region {
        if let Some(v) = &pos {
            maps.pos.accumulate(*cell, v);
        }
        if let Some(v) = &neg {
            maps.neg.accumulate(*cell, v);
        }
    }
    Ok(entry.region.len())
}

/// Positive-layer contours for `query`, with cells whose negative-layer
/// similarity reaches `theta_neg` masked out.
pub fn retrieve_memory(
    query: &str,
    pose: Pose,
    maps: &MemoryMaps,
    provider: &EmbeddingProvider,
    scene: &Scene,
    registry: &mut ObjectRegistry,
    cfg: &MemoryConfig,
) -> Result<Vec<MapCandidate>, MemoryError> {
    let q = provider.embed_phrase(query)?;
    let mut area: BTreeMap<_, f64> = maps.pos.similarity(&q)?;
    for (cell, v) in maps.neg.nonzero() {
        if cosine(&q, v)? >= cfg.theta_neg {
            area.remove(cell);
        }
    }
    let rc = RetrievalConfig { threshold: cfg.theta_pos, min_area: cfg.min_area, max_candidates: cfg.max_candidates };
    Ok(contour_candidates(&area, &rc, pose, scene, registry, RegionSource::Memory, query))
}
