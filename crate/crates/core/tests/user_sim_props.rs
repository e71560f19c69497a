mod common;

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use pnav_core::agent::World;
use pnav_core::control::{apply_primitive, PrimitiveAction, STEP_M, TURN_DEG};
use pnav_core::grid::{Pose, Traversable};
use pnav_core::user_sim::{adjudicate, parse_feedback, procedural_instructions, route_to_goal, FeedbackEvent, FeedbackRegime, Instruction, TemplateUser};
use pnav_core::scene_gen::{generate_scene, GenParams};
use proptest::prelude::*;

fn worlds() -> &'static [Arc<World>] {
    static W: OnceLock<Vec<Arc<World>>> = OnceLock::new();
    W.get_or_init(|| (40..44).map(|s| common::world(generate_scene(s, &GenParams::default()).unwrap())).collect())
}

/// Free poses spread over the scene, every 7th free cell, heading varied.
fn poses(world: &World) -> Vec<Pose> {
    let g = world.scene.grid();
    g.iter_cells()
        .filter(|c| g.is_free(*c))
        .step_by(7)
        .enumerate()
        .map(|(i, c)| {
            let p = c.center(g.resolution());
            Pose::new(p.x, p.y, (i % 24) as f64 * 15.0)
        })
        .collect()
}

fn execute(mut pose: Pose, steps: &[Instruction], world: &World) -> Pose {
    let grid = world.scene.grid();
    for step in steps {
        match *step {
            Instruction::Turn { degrees } => {
                let n = (degrees / TURN_DEG).round() as i64;
                let turn = if n > 0 { PrimitiveAction::TurnLeft } else { PrimitiveAction::TurnRight };
                for _ in 0..n.abs() {
                    pose = apply_primitive(pose, &turn, grid).0;
                }
            }
            Instruction::Forward { meters } => {
                for _ in 0..(meters / STEP_M).round() as i64 {
                    pose = apply_primitive(pose, &PrimitiveAction::MoveForward, grid).0;
                }
            }
        }
    }
    pose
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spoken_route_lands_near_the_path_end(
        row in 2usize..20, col in 2usize..28,
        x in 0.4f64..7.6, y in 0.4f64..5.6, h in 0usize..24,
    ) {
        let Ok(scene) = common::open_room(24, 32, (row, col), (x, y, h as f64 * 15.0)) else { return Ok(()) };
        let world = common::world(scene);
        let pose = world.scene.start();
        let path = route_to_goal(&world, pose, 0).unwrap();
        prop_assume!(!path.is_empty());
        let steps = procedural_instructions(&path, pose, 0.25, world.scene.mass_center_of(0));
        let legs = steps.iter().filter(|s| matches!(s, Instruction::Forward { .. })).count();
        prop_assert!(legs <= 3, "{steps:?}");
        let end = execute(pose, &steps, &world);
        let last = path.last().unwrap().center(0.25);
        prop_assert!(end.point().distance(last) <= 1.0, "landed {:.2} m away", end.point().distance(last));
    }
}

#[test]
fn descriptions_cycle_without_early_repeats() {
    for world in worlds() {
        let scene = &world.scene;
        for (gi, goal) in scene.goals().iter().enumerate() {
            let n = scene.object(goal.target_gid).unwrap().descriptions.len();
            let pose = scene.start();
            if adjudicate(world, pose, goal).success || n == 0 {
                continue;
            }
            let mut user = TemplateUser::new(FeedbackRegime::Descriptive, 0);
            let said: Vec<String> = (0..2 * n)
                .map(|t| match user.respond(world, gi, pose, t).event {
                    Some(FeedbackEvent::Descriptive { sentence }) => sentence,
                    other => panic!("{other:?}"),
                })
                .collect();
            assert_eq!(said[..n].iter().collect::<BTreeSet<_>>().len(), n);
            assert_eq!(said[..n], said[n..]);
        }
    }
}

#[test]
fn success_is_said_iff_adjudicated_and_parses_back() {
    let mut yes = 0;
    for world in worlds() {
        for (gi, goal) in world.scene.goals().iter().enumerate().take(3) {
            for regime in FeedbackRegime::ALL {
                let mut user = TemplateUser::new(regime, 5);
                let mut twin = TemplateUser::new(regime, 5);
                for (t, pose) in poses(world).into_iter().enumerate() {
                    let reply = user.respond(world, gi, pose, t);
                    let success = adjudicate(world, pose, goal).success;
                    assert_eq!(reply.adjudication.success, success);
                    assert_eq!(reply.text.starts_with("Yes"), success, "{}", reply.text);
                    assert_eq!(reply.event.is_none(), success);
                    yes += usize::from(success);
                    assert_eq!(parse_feedback(&reply.text), reply.event, "{}", reply.text);
                    assert_eq!(twin.respond(world, gi, pose, t), reply);
                }
            }
        }
    }
    assert!(yes > 0);
}
