mod common;

use pnav_core::agent::Robot;
use pnav_core::control::{apply_primitive, goto_point, plan_distance_field, step_allowed, PrimitiveAction, STEP_M};
use pnav_core::grid::{Cell, Occupancy, OccupancyGrid, Pose, Traversable, NEIGHBORS8};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid(seed: u64, rows: usize, cols: usize, density: f64) -> OccupancyGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = OccupancyGrid::new(rows, cols, 0.25);
    for r in 0..rows {
        for c in 0..cols {
            if rng.random_bool(density) {
                g.set(Cell::new(r, c), Occupancy::Occupied);
            }
        }
    }
    g
}

/// Relax every edge until nothing changes. Costs are compared as
/// (straight, diagonal) counts turned into meters the same way the planner does.
fn bellman_ford(grid: &OccupancyGrid, source: Cell) -> Vec<Option<f64>> {
    let (rows, cols) = (grid.rows(), grid.cols());
    let res = grid.resolution();
    let mut best: Vec<Option<(u32, u32)>> = vec![None; rows * cols];
    let cost = |m: (u32, u32)| (m.0 as f64 + m.1 as f64 * std::f64::consts::SQRT_2) * res;
    best[source.row * cols + source.col] = Some((0, 0));
    loop {
        let mut changed = false;
        for r in 0..rows {
            for c in 0..cols {
                let here = Cell::new(r, c);
                let Some(m) = best[r * cols + c] else { continue };
                for (dr, dc) in NEIGHBORS8 {
                    let Some(n) = step_allowed(grid, here, dr, dc) else { continue };
                    let next = if dr != 0 && dc != 0 { (m.0, m.1 + 1) } else { (m.0 + 1, m.1) };
                    let slot = &mut best[n.row * cols + n.col];
                    if slot.is_none_or(|old| cost(next) < cost(old)) {
                        *slot = Some(next);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return best.into_iter().map(|m| m.map(cost)).collect();
        }
    }
}

#[test]
fn dijkstra_matches_brute_force_on_100_grids() {
    for seed in 0..100 {
        let grid = random_grid(seed, 20, 20, 0.3);
        let free: Vec<Cell> = grid.iter_cells().filter(|c| grid.is_free(*c)).collect();
        let source = free[seed as usize % free.len()];
        let field = plan_distance_field(&grid, [source]);
        let oracle = bellman_ford(&grid, source);
        for cell in grid.iter_cells() {
            let want = oracle[cell.row * 20 + cell.col].unwrap_or(f64::INFINITY);
            assert_eq!(field.cost(cell), want, "seed {seed} cell {cell:?}");
        }
    }
}

#[test]
fn descent_follows_the_field() {
    for seed in 0..20 {
        let grid = random_grid(seed + 1000, 20, 20, 0.25);
        let free: Vec<Cell> = grid.iter_cells().filter(|c| grid.is_free(*c)).collect();
        let source = free[0];
        let field = plan_distance_field(&grid, [source]);
        for &from in free.iter().filter(|c| field.reachable(**c)) {
            let path = field.descend(&grid, from);
            assert_eq!(path.first(), Some(&from));
            assert_eq!(path.last(), Some(&source));
            let walked: f64 = path
                .windows(2)
                .map(|w| if w[0].row != w[1].row && w[0].col != w[1].col { std::f64::consts::SQRT_2 } else { 1.0 })
                .sum::<f64>()
                * 0.25;
            assert!((walked - field.cost(from)).abs() < 1e-9);
        }
    }
}

fn primitive() -> impl Strategy<Value = PrimitiveAction> {
    prop_oneof![Just(PrimitiveAction::TurnLeft), Just(PrimitiveAction::TurnRight), Just(PrimitiveAction::MoveForward), Just(PrimitiveAction::MoveForward)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn primitives_never_enter_occupied_cells(seed in 0u64..10_000, actions in prop::collection::vec(primitive(), 1..300)) {
        let grid = random_grid(seed, 16, 16, 0.2);
        let start = grid.iter_cells().find(|c| grid.is_free(*c)).unwrap().center(0.25);
        let mut pose = Pose::new(start.x, start.y, 0.0);
        let mut moved = 0.0;
        for a in &actions {
            let (next, blocked) = apply_primitive(pose, a, &grid);
            prop_assert!(!grid.blocks(next.point()));
            if *a == PrimitiveAction::MoveForward && !blocked {
                moved += STEP_M;
                prop_assert!((next.point().distance(pose.point()) - STEP_M).abs() < 1e-9);
            } else {
                prop_assert_eq!(next.point(), pose.point());
            }
            pose = next;
        }
        prop_assert!(moved <= actions.len() as f64 * STEP_M);
    }

    #[test]
    fn travel_accounting(target_row in 2usize..18, target_col in 2usize..26) {
        let scene = common::open_room(20, 28, (9, 12), (1.0, 1.0, 0.0)).unwrap();
        let world = common::world(scene);
        let target = Cell::new(target_row, target_col);
        prop_assume!(world.scene.grid().is_free(target));
        let mut robot = Robot::new(&world.scene, world.scene.start());
        let nav = goto_point(&mut robot, &world, target.center(0.25)).unwrap();
        let forward = nav.forward_steps() as f64 * STEP_M;
        prop_assert!(nav.distance_traveled <= forward + 1e-9);
        prop_assert!((robot.traveled - nav.distance_traveled).abs() < 1e-9);
        let turns_only: Vec<_> = nav.steps_taken.iter().filter(|a| **a != PrimitiveAction::MoveForward).collect();
        prop_assert!(turns_only.len() + nav.forward_steps() == nav.steps_taken.len());
    }
}
