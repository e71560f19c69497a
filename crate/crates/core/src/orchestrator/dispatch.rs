//! Routes policy actions to the robot modules and formats their returns.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Robot, World};
use crate::control::{goto_object, goto_point, rotate_by, NavResult, PrimitiveAction, STEP_M, TURN_DEG};
use crate::exploration::{search_object, SearchOutcome, SearchState};
use crate::grid::Point;
use crate::memory::{retrieve_memory, update_memory, MemoryConfig, MemoryMaps};
use crate::perception::{detect_object, double_check, DetectionConfig, DetectionResult, ObjectRegistry};
use crate::semantic_map::{retrieve_map, MapCandidate, RetrievalConfig};

use super::actions::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    Mem,
    Exp,
    Det,
    Map,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Self::Mem, Self::Exp, Self::Det, Self::Map];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mem => "mem",
            Self::Exp => "exp",
            Self::Det => "det",
            Self::Map => "map",
        }
    }
}

impl FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| format!("unknown ablation {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Orion,
    Cow,
    Vlmap,
    Cf,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Orion => "orion",
            Self::Cow => "cow",
            Self::Vlmap => "vlmap",
            Self::Cf => "cf",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::Orion, Self::Cow, Self::Vlmap, Self::Cf]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown preset {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modules {
    pub memory: bool,
    pub map: bool,
    pub detection: bool,
    pub exploration: bool,
}

/// Module availability and the perception thresholds in force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub preset: Preset,
    pub ablations: BTreeSet<Ablation>,
    pub modules: Modules,
    pub detection: DetectionConfig,
    pub map: RetrievalConfig,
    pub memory: MemoryConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self::new(Preset::Orion, &[])
    }
}

impl AgentConfig {
    pub fn new(preset: Preset, ablations: &[Ablation]) -> Self {
        let all = Modules { memory: true, map: true, detection: true, exploration: true };
        let mut map = RetrievalConfig::default();
        let modules = match preset {
            Preset::Orion => all,
            Preset::Cow => Modules { memory: false, map: false, ..all },
            Preset::Vlmap => Modules { map: true, memory: false, detection: false, exploration: false },
            Preset::Cf => {
                map.threshold -= 0.05;
                Modules { map: true, memory: false, detection: false, exploration: false }
            }
        };
        let mut cfg = Self {
            preset,
            ablations: ablations.iter().copied().collect(),
            modules,
            detection: DetectionConfig::default(),
            map,
            memory: MemoryConfig::default(),
        };
        for a in ablations {
            match a {
                Ablation::Mem => cfg.modules.memory = false,
                Ablation::Map => cfg.modules.map = false,
                Ablation::Exp => cfg.modules.exploration = false,
                // The weaker detector stays callable; it just sees worse.
                Ablation::Det => cfg.detection = cfg.detection.degraded(),
            }
        }
        cfg
    }
}

/// Mutable agent state for one scene run; persists across its goals.
#[derive(Debug, Clone)]
pub struct RunState {
    pub robot: Robot,
    pub registry: ObjectRegistry,
    pub memory: MemoryMaps,
    pub search: SearchState,
    pub rng: ChaCha8Rng,
}

/// Structured result of one dispatched action, alongside its message.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Candidates(Vec<MapCandidate>),
    Detections(Vec<DetectionResult>),
    Checked(Option<DetectionResult>),
    Search(SearchOutcome),
    Nav { blocked: bool },
    Stored,
    Unavailable,
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionReturn {
    pub name: &'static str,
    pub message: String,
    pub outcome: Outcome,
    pub moved: f64,
}

fn fmt_angle(a: f64) -> String {
    format!("{}°", a.round() as i64)
}

pub fn format_candidates(list: &[MapCandidate]) -> String {
    let items: Vec<String> = list.iter().map(|c| format!("({}, {:.1}m, {})", c.obj_id, c.distance, fmt_angle(c.angle))).collect();
    format!("[{}]", items.join(", "))
}

pub fn format_detections(list: &[DetectionResult]) -> String {
    let items: Vec<String> =
        list.iter().map(|d| format!("({}, {:.1}m, {}, {:.2})", d.obj_id, d.distance, fmt_angle(d.angle), d.score)).collect();
    format!("[{}]", items.join(", "))
}

fn unavailable(name: &'static str) -> FunctionReturn {
    FunctionReturn { name, message: format!("{name}: module unavailable"), outcome: Outcome::Unavailable, moved: 0.0 }
}

fn error(name: &'static str, err: impl fmt::Display, moved: f64) -> FunctionReturn {
    FunctionReturn { name, message: format!("{name} failed: {err}"), outcome: Outcome::Error(err.to_string()), moved }
}

fn nav_message(nav: &NavResult, what: &str) -> String {
    let p = nav.final_pose;
    let state = if nav.blocked { "Blocked on the way to" } else { "Reached" };
    format!("{state} {what}; moved {:.2}m, now at ({:.2}, {:.2}) facing {}.", nav.distance_traveled, p.x, p.y, fmt_angle(p.heading))
}

/// Executes a non-talk action. Module failures come back as messages.
pub fn dispatch(action: &Action, state: &mut RunState, world: &World, cfg: &AgentConfig) -> FunctionReturn {
    let name = action.name();
    let m = cfg.modules;
    let scene = &*world.scene;
    let RunState { robot, registry, memory, search, rng } = state;
    match action {
        Action::RetrieveMemory { query } => {
            if !m.memory {
                return unavailable(name);
            }
            match retrieve_memory(query, robot.pose, memory, &world.encoder, scene, registry, &cfg.memory) {
                Ok(c) => FunctionReturn {
                    name,
                    message: format!("Found {} items in memory: {}", c.len(), format_candidates(&c)),
                    outcome: Outcome::Candidates(c),
                    moved: 0.0,
                },
                Err(e) => error(name, e, 0.0),
            }
        }
        Action::RetrieveMap { query } => {
            if !m.map {
                return unavailable(name);
            }
            match retrieve_map(query, robot.pose, &world.semantic_map, &world.encoder, scene, registry, &cfg.map) {
                Ok(c) => FunctionReturn {
                    name,
                    message: format!("Found {} items in map: {}", c.len(), format_candidates(&c)),
                    outcome: Outcome::Candidates(c),
                    moved: 0.0,
                },
                Err(e) => error(name, e, 0.0),
            }
        }
        Action::DetectObject { query } => {
            if !m.detection {
                return unavailable(name);
            }
            match detect_object(world, robot.pose, query, registry, cfg.detection, rng) {
                Ok(d) => FunctionReturn {
                    name,
                    message: format!("Found {} objects: {}", d.len(), format_detections(&d)),
                    outcome: Outcome::Detections(d),
                    moved: 0.0,
                },
                Err(e) => error(name, e, 0.0),
            }
        }
        Action::DoubleCheck { obj_id } => {
            if !m.detection {
                return unavailable(name);
            }
            let before = robot.traveled;
            match double_check(robot, world, registry, *obj_id, cfg.detection, rng) {
                Ok((hit, _nav)) => {
                    let moved = robot.traveled - before;
                    let message = match &hit {
                        Some(d) => format!("Double check {obj_id}: {}", format_detections(std::slice::from_ref(d))),
                        None => format!("Double check {obj_id}: not detected."),
                    };
                    FunctionReturn { name, message, outcome: Outcome::Checked(hit), moved }
                }
                Err(e) => error(name, e, robot.traveled - before),
            }
        }
        Action::SearchObject { query } => {
            if !m.exploration {
                return unavailable(name);
            }
            let before = robot.traveled;
            match search_object(robot, world, search, registry, query, cfg.detection, rng) {
                Ok((outcome, nav)) => {
                    let message = match &outcome {
                        SearchOutcome::Found(d) => format!(
                            "Search found {} objects: {}; moved {:.2}m.",
                            d.len(),
                            format_detections(d),
                            nav.distance_traveled
                        ),
                        SearchOutcome::Exhausted => {
                            format!("Search exhausted: no unexplored frontier left; moved {:.2}m.", nav.distance_traveled)
                        }
                    };
                    FunctionReturn { name, message, outcome: Outcome::Search(outcome), moved: robot.traveled - before }
                }
                Err(e) => error(name, e, robot.traveled - before),
            }
        }
        Action::GotoPoint { x, y } => match goto_point(robot, world, Point::new(*x, *y)) {
            Ok(nav) => FunctionReturn {
                name,
                message: nav_message(&nav, &format!("({x:.2}, {y:.2})")),
                outcome: Outcome::Nav { blocked: nav.blocked },
                moved: nav.distance_traveled,
            },
            Err(e) => error(name, e, 0.0),
        },
        Action::GotoObject { obj_id } => match goto_object(robot, world, registry, *obj_id) {
            Ok(nav) => FunctionReturn {
                name,
                message: nav_message(&nav, &obj_id.to_string()),
                outcome: Outcome::Nav { blocked: nav.blocked },
                moved: nav.distance_traveled,
            },
            Err(e) => error(name, e, 0.0),
        },
        Action::UpdateMemory { obj_id, pos_str, neg_str } => {
            if !m.memory {
                return unavailable(name);
            }
            match update_memory(memory, registry, &world.encoder, *obj_id, pos_str.as_deref(), neg_str.as_deref()) {
                Ok(n) => FunctionReturn {
                    name,
                    message: format!("Memory updated for {obj_id} ({n} cells)."),
                    outcome: Outcome::Stored,
                    moved: 0.0,
                },
                Err(e) => error(name, e, 0.0),
            }
        }
        Action::Move { num } => {
            let before = robot.traveled;
            let mut blocked = false;
            for _ in 0..num.unsigned_abs() {
                if robot.step(world, &PrimitiveAction::MoveForward) {
                    blocked = true;
                    break;
                }
            }
            let moved = robot.traveled - before;
            let tail = if blocked { ", then blocked" } else { "" };
            FunctionReturn {
                name,
                message: format!("Moved {moved:.2}m of {:.2}m{tail}.", num.unsigned_abs() as f64 * STEP_M),
                outcome: Outcome::Nav { blocked },
                moved,
            }
        }
        Action::Rotate { num } => {
            let mut nav = NavResult { final_pose: robot.pose, steps_taken: vec![], distance_traveled: 0.0, blocked: false };
            rotate_by(robot, world, -num, &mut nav);
            let side = if *num >= 0 { "right" } else { "left" };
            FunctionReturn {
                name,
                message: format!("Rotated {} {side}; now facing {}.", fmt_angle(num.abs() as f64 * TURN_DEG), fmt_angle(robot.pose.heading)),
                outcome: Outcome::Nav { blocked: false },
                moved: 0.0,
            }
        }
        Action::Talk { .. } => unreachable!("talk is handled by the episode loop"),
    }
}
