#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use pnav_core::agent::World;
use pnav_core::embedding::EmbeddingProvider;
use pnav_core::harness::build_worlds;
use pnav_core::perception::CameraModel;
use pnav_core::scene::{load_scene, Scene, SceneError};
use pnav_core::scene_gen::benchmark_suite;

pub fn encoder() -> Arc<EmbeddingProvider> {
    Arc::new(EmbeddingProvider::synthetic(64))
}

pub fn world(scene: Scene) -> Arc<World> {
    Arc::new(World::new(Arc::new(scene), encoder(), CameraModel::default()).unwrap())
}

/// The ten-scene benchmark suite, built once per test binary.
pub fn suite_worlds() -> &'static [Arc<World>] {
    static WORLDS: OnceLock<Vec<Arc<World>>> = OnceLock::new();
    WORLDS.get_or_init(|| build_worlds(benchmark_suite(10).unwrap(), encoder()).unwrap())
}

fn walled(rows: usize, cols: usize) -> Vec<Vec<char>> {
    (0..rows)
        .map(|r| (0..cols).map(|c| if r == 0 || c == 0 || r == rows - 1 || c == cols - 1 { '#' } else { '.' }).collect())
        .collect()
}

fn rows_of(grid: Vec<Vec<char>>) -> Vec<String> {
    grid.into_iter().map(|r| r.into_iter().collect()).collect()
}

/// One office, three computers that look identical, one sofa. Only the
/// names tell the computers apart, and alice's is the farthest from the
/// start.
pub fn lookalike_scene() -> Scene {
    let mut grid = walled(20, 28);
    let computers = [(3, 4), (3, 22), (15, 13)];
    let sofa = (10, 4);
    for &(r, c) in computers.iter().chain([&sofa]) {
        for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            grid[r + dr][c + dc] = '#';
        }
    }
    let fp = |(r, c): (usize, usize)| serde_json::json!([[r, c], [r, c + 1], [r + 1, c], [r + 1, c + 1]]);
    let computer = |gid: u32, name: &str, at, words: &str| {
        serde_json::json!({
            "gid": gid, "class": "computer", "name": name, "room": "office", "footprint": fp(at),
            "visual_tokens": ["computer", "black"], "landmark": false,
            "descriptions": [format!("It has a {words} sticker on the lid.")]
        })
    };
    let doc = serde_json::json!({
        "id": "lookalikes",
        "resolution": 0.25,
        "grid": rows_of(grid),
        "rooms": [{"name": "office", "rect": [1, 1, 18, 26]}],
        "objects": [
            computer(1, "bob's computer", computers[0], "red"),
            computer(2, "carol's computer", computers[2], "green"),
            computer(3, "alice's computer", computers[1], "blue"),
            {
                "gid": 4, "class": "sofa", "name": "the sofa", "room": "office", "footprint": fp(sofa),
                "visual_tokens": ["sofa", "grey"], "landmark": true, "descriptions": ["It is grey."]
            }
        ],
        "goals": [{"type": "computer", "name": "alice's computer", "room": "office", "target_gid": 3}],
        "start": {"x": 2.0, "y": 2.0, "heading": 0.0}
    });
    load_scene(&doc.to_string()).unwrap()
}

/// A walled room with a single 2x2 goal object at `at` (row, col).
pub fn open_room(rows: usize, cols: usize, at: (usize, usize), start: (f64, f64, f64)) -> Result<Scene, SceneError> {
    let mut grid = walled(rows, cols);
    for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        grid[at.0 + dr][at.1 + dc] = '#';
    }
    let (r, c) = at;
    let doc = serde_json::json!({
        "id": "open",
        "resolution": 0.25,
        "grid": rows_of(grid),
        "rooms": [{"name": "hall", "rect": [1, 1, rows - 2, cols - 2]}],
        "objects": [{
            "gid": 1, "class": "chair", "name": "dan's chair", "room": "hall",
            "footprint": [[r, c], [r, c + 1], [r + 1, c], [r + 1, c + 1]],
            "visual_tokens": ["chair", "wooden"], "landmark": false, "descriptions": ["It is wooden."]
        }],
        "goals": [{"type": "chair", "name": "dan's chair", "room": "hall", "target_gid": 1}],
        "start": {"x": start.0, "y": start.1, "heading": start.2}
    });
    load_scene(&doc.to_string())
}
