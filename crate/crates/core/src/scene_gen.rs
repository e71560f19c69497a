//! Procedural benchmark scenes: a grid of rooms joined by doors, landmark
//! furniture, and small personal objects with lookalike groups.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::fnv1a64;
use crate::grid::{Cell, Occupancy, OccupancyGrid, Pose};
use crate::perception::CameraModel;
use crate::scene::{GoalSpec, Room, Scene, SceneError, SceneObject, SUCCESS_RADIUS};
use crate::text::{capitalize, ATTRIBUTE_LEXICON};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub rooms: usize,
    /// All objects, landmarks included.
    pub objects: usize,
    /// Size of the lookalike group: same class, same appearance.
    pub duplicates: usize,
    pub goals: usize,
    pub resolution: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self { rooms: 4, objects: 18, duplicates: 3, goals: 10, resolution: 0.25 }
    }
}

const ROOM_NAMES: [&str; 9] =
    ["living room", "kitchen", "bedroom", "office", "study", "dining room", "hallway", "guest room", "playroom"];

/// Landmark classes with (rows, cols) footprints.
const LANDMARKS: [(&str, (usize, usize)); 7] = [
    ("sofa", (2, 4)),
    ("bed", (4, 3)),
    ("fridge", (2, 2)),
    ("tv", (1, 3)),
    ("bookshelf", (1, 4)),
    ("wardrobe", (2, 3)),
    ("table", (3, 3)),
];

const SMALL: [&str; 10] = ["computer", "chair", "lamp", "backpack", "plant", "guitar", "mug", "suitcase", "basket", "speaker"];
const OWNERS: [&str; 10] = ["alice", "bob", "carol", "david", "emma", "frank", "grace", "henry", "irene", "jack"];
const BRANDS: [&str; 6] = ["ikea", "sony", "muji", "lenovo", "dyson", "zara"];
const BOUGHT: [&str; 5] = ["last year", "last week", "in march", "for my birthday", "on sale"];
const USES: [&str; 5] = ["I use it every day.", "It is used for work.", "It was a gift.", "I keep it for guests.", "It is quite new."];

/// Small-object classes used per scene.
const CLASS_POOL: usize = 4;
/// Chance a small object is placed in its class's home room.
const HOME_BIAS: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NameForm {
    Owner(usize),
    Brand(usize),
    Bought(usize),
}

struct Layout {
    grid: OccupancyGrid,
    rooms: Vec<Room>,
    /// Cells near doors and the start, kept clear of objects.
    reserved: BTreeSet<Cell>,
}

fn find(parent: &mut [usize], x: usize) -> usize {
    if parent[x] != x {
        let root = find(parent, parent[x]);
        parent[x] = root;
    }
    parent[x]
}

fn layout(rng: &mut ChaCha8Rng, rooms: usize, res: f64) -> Layout {
    let nc = (rooms as f64).sqrt().ceil() as usize;
    let nr = rooms.div_ceil(nc);
    let widths: Vec<usize> = (0..nc).map(|_| rng.random_range(18..=26)).collect();
    let heights: Vec<usize> = (0..nr).map(|_| rng.random_range(18..=26)).collect();
    let cols = 1 + widths.iter().map(|w| w + 1).sum::<usize>();
    let rows = 1 + heights.iter().map(|h| h + 1).sum::<usize>();
    let mut grid = OccupancyGrid::new(rows, cols, res);
    for c in grid.iter_cells().collect::<Vec<_>>() {
        grid.set(c, Occupancy::Occupied);
    }
    let origin = |i: usize, j: usize| -> (usize, usize) {
        (1 + heights[..i].iter().map(|h| h + 1).sum::<usize>(), 1 + widths[..j].iter().map(|w| w + 1).sum::<usize>())
    };
    let mut out = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for k in 0..rooms {
        let (i, j) = (k / nc, k % nc);
        let (r0, c0) = origin(i, j);
        let rect = [r0, c0, r0 + heights[i] - 1, c0 + widths[j] - 1];
        for r in rect[0]..=rect[2] {
            for c in rect[1]..=rect[3] {
                grid.set(Cell::new(r, c), Occupancy::Free);
            }
        }
        let name = if k < ROOM_NAMES.len() { ROOM_NAMES[k].to_string() } else { format!("room {}", k + 1) };
        out.push(Room { name, rect });
    }
    // Candidate doors between horizontally and vertically adjacent rooms.
    let mut edges = Vec::new();
    for k in 0..rooms {
        let (i, j) = (k / nc, k % nc);
        if j + 1 < nc && k + 1 < rooms {
            edges.push((k, k + 1));
        }
        if i + 1 < nr && k + nc < rooms {
            edges.push((k, k + nc));
        }
    }
    edges.shuffle(rng);
    let mut parent: Vec<usize> = (0..rooms).collect();
    let mut doors = Vec::new();
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            doors.push((a, b));
        } else if rng.random_bool(0.3) {
            doors.push((a, b));
        }
    }
    doors.sort();
    let mut reserved = BTreeSet::new();
    for (a, b) in doors {
        let (ra, rb) = (out[a].rect, out[b].rect);
        let horizontal = b == a + 1;
        let span = if horizontal { (ra[0], ra[2]) } else { (ra[1], ra[3]) };
        let width = 4;
        let start = rng.random_range(span.0 + 2..=span.1 - 1 - width);
        for t in start..start + width {
            let cell = if horizontal { Cell::new(t, ra[3] + 1) } else { Cell::new(ra[2] + 1, t) };
            grid.set(cell, Occupancy::Free);
            for dr in -3isize..=3 {
                for dc in -3isize..=3 {
                    let (r, c) = (cell.row as isize + dr, cell.col as isize + dc);
                    if r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols {
                        reserved.insert(Cell::new(r as usize, c as usize));
                    }
                }
            }
        }
        let _ = rb;
    }
    Layout { grid, rooms: out, reserved }
}

/// Finds a spot for a `h` x `w` footprint inside `room`, one free cell away
/// from walls, doors and other objects.
fn place(rng: &mut ChaCha8Rng, lay: &Layout, room: &Room, (h, w): (usize, usize)) -> Option<Vec<Cell>> {
    let [r0, c0, r1, c1] = room.rect;
    if r1 < r0 + h + 1 || c1 < c0 + w + 1 {
        return None;
    }
    for _ in 0..200 {
        let r = rng.random_range(r0 + 1..=r1 - h);
        let c = rng.random_range(c0 + 1..=c1 - w);
        let clear = (r - 1..=r + h).all(|rr| {
            (c - 1..=c + w).all(|cc| {
                let cell = Cell::new(rr, cc);
                lay.grid.is_free(cell) && !lay.reserved.contains(&cell)
            })
        });
        if clear {
            return Some((r..r + h).flat_map(|rr| (c..c + w).map(move |cc| Cell::new(rr, cc))).collect());
        }
    }
    None
}

fn small_footprint(rng: &mut ChaCha8Rng) -> (usize, usize) {
    *[(1, 2), (2, 1), (2, 2)].choose(rng).expect("non-empty")
}

fn name_for(class: &str, form: NameForm) -> String {
    match form {
        NameForm::Owner(i) => format!("{}'s {class}", OWNERS[i]),
        NameForm::Brand(i) => format!("the {class} from {}", BRANDS[i]),
        NameForm::Bought(i) => format!("the {class} bought {}", BOUGHT[i]),
    }
}

fn descriptions(rng: &mut ChaCha8Rng, class: &str, attr: &str, form: NameForm) -> Vec<String> {
    let visual = if rng.random_bool(0.5) { format!("It is {attr}.") } else { format!("The {class} is {attr}.") };
    let personal = match form {
        NameForm::Owner(i) => format!("It belongs to {}.", capitalize(OWNERS[i])),
        NameForm::Brand(i) => format!("It is made by {}.", capitalize(BRANDS[i])),
        NameForm::Bought(i) => format!("I got it {}.", BOUGHT[i]),
    };
    let mut out = vec![visual, personal, USES.choose(rng).expect("non-empty").to_string()];
    out.shuffle(rng);
    out
}

/// Generates a scene; a pure function of `(seed, params)`.
pub fn generate_scene(seed: u64, params: &GenParams) -> Result<Scene, SceneError> {
    if params.rooms == 0 || params.objects == 0 || params.goals == 0 {
        return Err(SceneError::Infeasible("room, object and goal counts must be positive".into()));
    }
    if params.duplicates < 2 {
        return Err(SceneError::Infeasible("the lookalike group needs at least two objects".into()));
    }
    let landmarks = params.rooms.clamp(3, LANDMARKS.len());
    if params.objects < landmarks + params.duplicates {
        return Err(SceneError::Infeasible(format!("{} objects cannot hold {landmarks} landmarks and the lookalike group", params.objects)));
    }
    if params.duplicates > OWNERS.len() {
        return Err(SceneError::Infeasible("lookalike group larger than the owner list".into()));
    }
    let camera = CameraModel::default();
    let mut last = None;
    for attempt in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(format!("scene/{seed}/{attempt}").as_bytes()));
        match try_generate(&mut rng, seed, params, landmarks) {
            Ok(scene) => match scene.validate_reachability(&camera, SUCCESS_RADIUS) {
                Ok(()) => return Ok(scene),
                Err(e) => last = Some(e),
            },
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| SceneError::Infeasible("no attempt succeeded".into())))
}

fn try_generate(rng: &mut ChaCha8Rng, seed: u64, params: &GenParams, landmarks: usize) -> Result<Scene, SceneError> {
    let mut lay = layout(rng, params.rooms, params.resolution);
    let rooms = lay.rooms.clone();
    let start_room = &rooms[0];
    let sr = (start_room.rect[0] + start_room.rect[2]) / 2;
    let sc = (start_room.rect[1] + start_room.rect[3]) / 2;
    for dr in 0..5 {
        for dc in 0..5 {
            lay.reserved.insert(Cell::new(sr + dr - 2, sc + dc - 2));
        }
    }
    let res = params.resolution;
    let heading = 15.0 * rng.random_range(0..24) as f64;
    let start = Pose::new((sc as f64 + 0.5) * res, (sr as f64 + 0.5) * res, heading);

    let mut objects: Vec<SceneObject> = Vec::new();
    let put = |lay: &mut Layout, rng: &mut ChaCha8Rng, room_idx: usize, size: (usize, usize)| -> Result<(Vec<Cell>, String), SceneError> {
        // Fall back to other rooms when the preferred one is full.
        for k in 0..rooms.len() {
            let room = &rooms[(room_idx + k) % rooms.len()];
            if let Some(fp) = place(rng, lay, room, size) {
                for c in &fp {
                    lay.grid.set(*c, Occupancy::Occupied);
                }
                return Ok((fp, room.name.clone()));
            }
        }
        Err(SceneError::Infeasible("objects exceed the free area".into()))
    };

    let mut lm_classes = LANDMARKS.to_vec();
    lm_classes.shuffle(rng);
    for (k, (class, size)) in lm_classes.into_iter().take(landmarks).enumerate() {
        let size = if rng.random_bool(0.5) { size } else { (size.1, size.0) };
        let (footprint, room) = put(&mut lay, rng, k % rooms.len(), size)?;
        let attr = *ATTRIBUTE_LEXICON.choose(rng).expect("non-empty");
        objects.push(SceneObject {
            gid: objects.len() as u32 + 1,
            class_label: class.to_string(),
            personalized_name: format!("the {room} {class}"),
            room,
            footprint,
            visual_tokens: vec![attr.to_string(), class.to_string()],
            is_landmark: true,
            descriptions: vec![format!("It is {attr}.")],
        });
    }

    let mut classes = SMALL.to_vec();
    classes.shuffle(rng);
    let lookalike = classes[0];
    let lookalike_attr = *ATTRIBUTE_LEXICON.choose(rng).expect("non-empty");
    let mut owners: Vec<usize> = (0..OWNERS.len()).collect();
    owners.shuffle(rng);
    let pool = &classes[..CLASS_POOL];
    // Same-class objects gather in a home room, like the computers of an office.
    let homes: Vec<usize> = (0..CLASS_POOL).map(|_| rng.random_range(0..rooms.len())).collect();
    let mut used_names = BTreeSet::new();
    let small_count = params.objects - landmarks;
    #[allow(clippy::needless_range_loop)]
    for k in 0..small_count {
        let (class, attr, form) = if k < params.duplicates {
            (lookalike, lookalike_attr, NameForm::Owner(owners[k]))
        } else {
            let class = *pool.choose(rng).expect("non-empty");
            let attr = *ATTRIBUTE_LEXICON.choose(rng).expect("non-empty");
            let mut form = None;
            for _ in 0..50 {
                let f = match rng.random_range(0..3) {
                    0 => NameForm::Owner(rng.random_range(0..OWNERS.len())),
                    1 => NameForm::Brand(rng.random_range(0..BRANDS.len())),
                    _ => NameForm::Bought(rng.random_range(0..BOUGHT.len())),
                };
                if !used_names.contains(&name_for(class, f)) {
                    form = Some(f);
                    break;
                }
            }
            let Some(form) = form else { return Err(SceneError::Infeasible("ran out of unique names".into())) };
            (class, attr, form)
        };
        let name = name_for(class, form);
        used_names.insert(name.clone());
        let home = homes[pool.iter().position(|c| *c == class).expect("pooled class")];
        let room_idx = if k < params.duplicates || rng.random_bool(HOME_BIAS) { home } else { rng.random_range(0..rooms.len()) };
        let size = small_footprint(rng);
        let (footprint, room) = put(&mut lay, rng, room_idx, size)?;
        objects.push(SceneObject {
            gid: objects.len() as u32 + 1,
            class_label: class.to_string(),
            personalized_name: name,
            room,
            footprint,
            visual_tokens: vec![attr.to_string(), class.to_string()],
            is_landmark: false,
            descriptions: descriptions(rng, class, attr, form),
        });
    }

    // Goals: the whole lookalike group first in the pool, then the rest.
    let mut pool: Vec<usize> = (0..objects.len()).filter(|&i| !objects[i].is_landmark).collect();
    let (group, mut rest): (Vec<usize>, Vec<usize>) = pool.drain(..).partition(|&i| objects[i].class_label == lookalike && i < landmarks + params.duplicates);
    rest.shuffle(rng);
    let mut chosen: Vec<usize> = group.into_iter().chain(rest).take(params.goals).collect();
    chosen.shuffle(rng);
    let goals = chosen
        .into_iter()
        .map(|i| {
            let o = &objects[i];
            GoalSpec { goal_type: o.class_label.clone(), name: o.personalized_name.clone(), room: o.room.clone(), target_gid: o.gid }
        })
        .collect();
    Scene::from_parts(format!("scene_{seed:03}"), lay.grid, rooms, objects, goals, start)
}

/// Scene parameters and seeds of the standard benchmark suite.
pub fn suite_specs(count: usize) -> Vec<(u64, GenParams)> {
    (0..count as u64)
        .map(|i| {
            let rooms = 4 + (i as usize % 4);
            (100 + i, GenParams { rooms, objects: 14 + 2 * rooms, duplicates: 10, goals: 10, resolution: 0.25 })
        })
        .collect()
}

/// The standard benchmark suite: `count` generated scenes.
pub fn benchmark_suite(count: usize) -> Result<Vec<Scene>, SceneError> {
    suite_specs(count).into_iter().map(|(seed, p)| generate_scene(seed, &p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{load_scene, save_scene};

    #[test]
    fn deterministic_and_seed_sensitive() {
        let p = GenParams { rooms: 3, objects: 12, ..GenParams::default() };
        let a = generate_scene(0, &p).unwrap();
        assert_eq!(save_scene(&a), save_scene(&generate_scene(0, &p).unwrap()));
        assert_ne!(save_scene(&a), save_scene(&generate_scene(1, &p).unwrap()));
        assert_eq!(load_scene(&save_scene(&a)).unwrap(), a);
    }

    #[test]
    fn lookalikes_and_landmarks_present() {
        let s = generate_scene(7, &GenParams::default()).unwrap();
        assert!(s.objects().iter().filter(|o| o.is_landmark).count() >= 3);
        let first = &s.objects()[s.objects().iter().position(|o| !o.is_landmark).unwrap()];
        let twins = s.objects().iter().filter(|o| o.class_label == first.class_label && o.visual_tokens == first.visual_tokens).count();
        assert!(twins >= 2);
    }

    #[test]
    fn infeasible_params_rejected() {
        assert!(matches!(generate_scene(0, &GenParams { duplicates: 1, ..GenParams::default() }), Err(SceneError::Infeasible(_))));
        assert!(matches!(generate_scene(0, &GenParams { rooms: 1, objects: 200, ..GenParams::default() }), Err(SceneError::Infeasible(_))));
    }
}
