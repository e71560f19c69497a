//! A deterministic grid-world simulator and agent framework for finding
//! personal objects through navigation and dialogue.

pub mod agent;
pub mod control;
pub mod embedding;
pub mod exploration;
pub mod grid;
pub mod harness;
pub mod memory;
pub mod orchestrator;
pub mod perception;
pub mod remote;
pub mod scene;
pub mod scene_gen;
pub mod semantic_map;
pub mod text;
pub mod user_sim;
