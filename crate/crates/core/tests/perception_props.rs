mod common;

use std::sync::Arc;

use pnav_core::agent::World;
use pnav_core::embedding::cosine;
use pnav_core::grid::{Cell, Pose, Traversable};
use pnav_core::perception::{detect_object, object_view, DetectionConfig, ObjectRegistry};
use pnav_core::scene_gen::{generate_scene, GenParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const NOISELESS: DetectionConfig = DetectionConfig { sigma: 0.0, threshold: 0.5 };

fn scenes() -> &'static [Arc<World>] {
    static W: std::sync::OnceLock<Vec<Arc<World>>> = std::sync::OnceLock::new();
    W.get_or_init(|| (0..6).map(|s| common::world(generate_scene(s, &GenParams::default()).unwrap())).collect())
}

/// A free cell within `max_d` of object `index` from which it is visible
/// when facing its mass center.
fn viewpoint(world: &World, index: usize, pick: usize, max_d: f64) -> Option<Pose> {
    let scene = &world.scene;
    let center = scene.mass_center_of(index);
    let spots: Vec<Pose> = scene
        .grid()
        .iter_cells()
        .filter(|c| scene.grid().is_free(*c))
        .map(|c| c.center(scene.resolution()))
        .filter(|p| p.distance(center) <= max_d && p.distance(center) > 0.5)
        .map(|p| Pose::new(p.x, p.y, p.bearing_to(center)))
        .filter(|pose| object_view(scene, *pose, index, &world.camera).visible)
        .collect();
    (!spots.is_empty()).then(|| spots[pick % spots.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_score_is_the_cosine(w in 0usize..6, obj in 0usize..40, pick in 0usize..1000) {
        let world = &scenes()[w];
        let index = obj % world.scene.objects().len();
        let Some(pose) = viewpoint(world, index, pick, 3.0) else { return Ok(()) };
        let query = world.scene.objects()[index].visual_phrase();
        let mut reg = ObjectRegistry::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hits = detect_object(world, pose, &query, &mut reg, NOISELESS, &mut rng).unwrap();
        let again = detect_object(world, pose, &query, &mut ObjectRegistry::new(), NOISELESS, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        prop_assert_eq!(&hits, &again);
        let q = world.encoder.embed_phrase(&query).unwrap();
        let gid = world.scene.objects()[index].gid;
        let mine = hits.iter().find(|d| reg.get(d.obj_id).unwrap().gid_hint == Some(gid)).expect("an exact phrase is detected");
        prop_assert_eq!(mine.score, cosine(&q, &world.visuals[index]).unwrap().clamp(0.0, 1.0));
        for d in &hits {
            let c = reg.centroid(d.obj_id, world.scene.resolution()).unwrap();
            prop_assert!((pose.relative_bearing(c) - d.angle).abs() < 1.0);
            prop_assert!((pose.point().distance(c) - d.distance).abs() < 1e-9);
        }
    }

    #[test]
    fn same_object_from_nearby_poses_keeps_its_id(w in 0usize..6, obj in 0usize..40, pick in 0usize..1000, dir in 0usize..8) {
        let world = &scenes()[w];
        let scene = &world.scene;
        let index = obj % scene.objects().len();
        let Some(a) = viewpoint(world, index, pick, 2.5) else { return Ok(()) };
        let (dr, dc) = pnav_core::grid::NEIGHBORS8[dir];
        let here = scene.grid().cell_of(a.point()).unwrap();
        let Some(next) = pnav_core::grid::offset(here, dr, dc, scene.rows(), scene.cols()) else { return Ok(()) };
        prop_assume!(scene.grid().is_free(next));
        let p = next.center(scene.resolution());
        let center = scene.mass_center_of(index);
        let b = Pose::new(p.x, p.y, p.bearing_to(center));
        prop_assume!(object_view(scene, b, index, &world.camera).visible);

        let query = scene.objects()[index].visual_phrase();
        let gid = scene.objects()[index].gid;
        let mut reg = ObjectRegistry::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let id_of = |hits: &[pnav_core::perception::DetectionResult], reg: &ObjectRegistry| {
            hits.iter().find(|d| reg.get(d.obj_id).unwrap().gid_hint == Some(gid)).map(|d| d.obj_id)
        };
        let first = detect_object(world, a, &query, &mut reg, NOISELESS, &mut rng).unwrap();
        let second = detect_object(world, b, &query, &mut reg, NOISELESS, &mut rng).unwrap();
        prop_assert_eq!(id_of(&first, &reg), id_of(&second, &reg));
    }
}

#[test]
fn noise_follows_the_seed() {
    let world = &scenes()[0];
    let index = 0;
    let pose = viewpoint(world, index, 0, 3.0).unwrap();
    let query = world.scene.objects()[index].class_label.clone();
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reg = ObjectRegistry::new();
        (0..20).map(|_| detect_object(world, pose, &query, &mut reg, DetectionConfig::default(), &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(7), run(7));
    assert_ne!(run(7), run(8));
}

#[test]
fn unseen_cells_are_not_reported() {
    let world = &scenes()[1];
    let mut reg = ObjectRegistry::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let start = world.scene.start();
    for k in 0..24 {
        let pose = Pose::new(start.x, start.y, k as f64 * 15.0);
        for d in detect_object(world, pose, "chair", &mut reg, NOISELESS, &mut rng).unwrap() {
            let region = &reg.get(d.obj_id).unwrap().region;
            assert!(region.iter().all(|c: &Cell| world.scene.owner_of(*c).is_some()));
        }
    }
}
