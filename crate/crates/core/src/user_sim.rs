//! The simulated user: adjudicates every talk against ground truth and
//! answers with template feedback for the configured regime.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::World;
use crate::control::plan_distance_field;
use crate::embedding::fnv1a64;
use crate::grid::{normalize_relative, quantize_angle, Cell, Point, Pose, Traversable};
use crate::perception::object_view;
use crate::remote::{ChatClient, ChatMessage};
use crate::scene::{GoalSpec, Scene};
use crate::text::{capitalize, mid_sentence_name};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackRegime {
    None,
    YesNo,
    Corrective,
    Descriptive,
    Landmark,
    Procedural,
    Mixed,
}

impl FeedbackRegime {
    pub const ALL: [FeedbackRegime; 7] = [
        Self::None,
        Self::YesNo,
        Self::Corrective,
        Self::Descriptive,
        Self::Landmark,
        Self::Procedural,
        Self::Mixed,
    ];
    pub const SINGLE: [FeedbackRegime; 4] = [Self::Corrective, Self::Descriptive, Self::Landmark, Self::Procedural];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::YesNo => "yesno",
            Self::Corrective => "corrective",
            Self::Descriptive => "descriptive",
            Self::Landmark => "landmark",
            Self::Procedural => "procedural",
            Self::Mixed => "mixed",
        }
    }
}

impl fmt::Display for FeedbackRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeedbackRegime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| format!("unknown feedback regime {s:?}"))
    }
}

/// One step of a spoken route. Positive turns are to the left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Instruction {
    Turn { degrees: f64 },
    Forward { meters: f64 },
}

/// Machine-readable side of a user reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeedbackEvent {
    YesNo,
    Corrective { name: String },
    Descriptive { sentence: String },
    Landmark { class: String, relation: String },
    Procedural { steps: Vec<Instruction> },
    /// Several kinds in one reply, in the order they were said.
    Mixed { parts: Vec<FeedbackEvent> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub success: bool,
    /// Nearest visible object within the success radius.
    pub reached: Option<u32>,
}

/// The referee check run on every talk.
pub fn adjudicate(world: &World, pose: Pose, goal: &GoalSpec) -> Adjudication {
    let scene = &*world.scene;
    let sees = |index: usize| {
        let view = object_view(scene, pose, index, &world.camera);
        (view.visible && view.distance <= world.success_radius).then_some(view.distance)
    };
    let success = scene.object_index(goal.target_gid).and_then(sees).is_some();
    let reached = (0..scene.objects().len())
        .filter_map(|i| sees(i).map(|d| (d, i)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, i)| scene.objects()[i].gid);
    Adjudication { success, reached }
}

// ---------------------------------------------------------------------------
// Procedural routes

fn fmt_number(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.1}")
    }
}

pub fn render_instructions(steps: &[Instruction]) -> String {
    let parts: Vec<String> = steps
        .iter()
        .map(|s| match *s {
            Instruction::Turn { degrees } => {
                let side = if degrees > 0.0 { "left" } else { "right" };
                let mag = degrees.abs();
                if (mag - 180.0).abs() < 1e-9 {
                    "turn around".to_string()
                } else if (mag - 90.0).abs() < 1e-9 {
                    format!("turn {side}")
                } else {
                    format!("turn {side} {} degrees", fmt_number(mag))
                }
            }
            Instruction::Forward { meters } => {
                let unit = if (meters - 1.0).abs() < 1e-9 { "meter" } else { "meters" };
                format!("go forward {} {unit}", fmt_number(meters))
            }
        })
        .collect();
    parts.join(", ")
}

/// Perpendicular distance of `p` from segment `a`-`b`.
fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

fn simplify(points: &[Point], tol: f64) -> Vec<Point> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let (first, last) = (points[0], points[points.len() - 1]);
    let (idx, dmax) = points[1..points.len() - 1]
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1, segment_distance(*p, first, last)))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if dmax <= tol {
        return vec![first, last];
    }
    let mut left = simplify(&points[..=idx], tol);
    let right = simplify(&points[idx..], tol);
    left.pop();
    left.extend(right);
    left
}

/// Compresses a ground-truth cell path into an approximate spoken route:
/// the polyline is simplified, waypoints whose heading change is under 30
/// degrees are merged away, then each leg is aimed from the dead-reckoned
/// position, turns quantized to 15 degrees and distances rounded to half
/// meters. A closing turn faces `look_at`. An empty path yields no steps.
pub fn procedural_instructions(path: &[Cell], pose: Pose, res: f64, look_at: Point) -> Vec<Instruction> {
    if path.len() < 2 {
        return Vec::new();
    }
    let mut pts: Vec<Point> = vec![pose.point()];
    pts.extend(path[1..].iter().map(|c| c.center(res)));
    let mut way = simplify(&pts, 0.35);
    // Drop interior waypoints where the route bends by less than 30 degrees.
    let mut i = 1;
    while i + 1 < way.len() {
        let h1 = way[i - 1].bearing_to(way[i]);
        let h2 = way[i].bearing_to(way[i + 1]);
        if normalize_relative(h2 - h1).abs() < 30.0 || way[i - 1].distance(way[i]) < 0.25 {
            way.remove(i);
        } else {
            i += 1;
        }
    }
    let mut steps = Vec::new();
    let mut at = pose.point();
    let mut heading = pose.heading;
    for target in way.iter().skip(1) {
        let d = at.distance(*target);
        let meters = (d * 2.0).round() / 2.0;
        if meters == 0.0 {
            continue;
        }
        let turn = normalize_relative(quantize_angle(normalize_relative(at.bearing_to(*target) - heading), 15.0));
        if turn != 0.0 {
            steps.push(Instruction::Turn { degrees: turn });
            heading += turn;
        }
        steps.push(Instruction::Forward { meters });
        let (dy, dx) = heading.to_radians().sin_cos();
        at = Point::new(at.x + meters * dx, at.y + meters * dy);
    }
    let face = normalize_relative(quantize_angle(normalize_relative(at.bearing_to(look_at) - heading), 15.0));
    if face.abs() >= 30.0 {
        steps.push(Instruction::Turn { degrees: face });
    }
    steps
}

/// Ground-truth geodesic from the pose's cell to the goal's success region.
pub fn route_to_goal(world: &World, pose: Pose, goal_index: usize) -> Option<Vec<Cell>> {
    let scene = &*world.scene;
    let region = &world.success_regions[goal_index];
    let here = scene.grid().cell_of(pose.point())?;
    if region.contains(&here) {
        return Some(Vec::new());
    }
    let field = plan_distance_field(scene.grid(), region.iter().copied());
    let path = field.descend(scene.grid(), here);
    (!path.is_empty()).then_some(path)
}

// ---------------------------------------------------------------------------
// Template user

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReply {
    pub text: String,
    pub event: Option<FeedbackEvent>,
    pub adjudication: Adjudication,
}

const DENIALS: [&str; 3] = ["No, keep searching.", "No, that's not it.", "No, not this one."];
const NEXT_TO_IT: &str = "No. You are right next to it.";

fn nearest_landmark<'a>(scene: &'a Scene, goal: &GoalSpec) -> Option<&'a str> {
    let gi = scene.object_index(goal.target_gid)?;
    let center = scene.mass_center_of(gi);
    scene
        .objects()
        .iter()
        .enumerate()
        .filter(|(i, o)| o.is_landmark && *i != gi)
        .min_by(|a, b| {
            let da = scene.mass_center_of(a.0).distance(center);
            let db = scene.mass_center_of(b.0).distance(center);
            da.total_cmp(&db).then(a.0.cmp(&b.0))
        })
        .map(|(_, o)| o.class_label.as_str())
}

/// Rewrites template text; the structured event is never touched.
pub trait Paraphraser: Send + Sync {
    fn paraphrase(&self, text: &str) -> String;
}

/// Paraphrases through a chat endpoint, falling back to the template.
pub struct ChatParaphraser<C: ChatClient> {
    pub client: C,
}

impl<C: ChatClient> Paraphraser for ChatParaphraser<C> {
    fn paraphrase(&self, text: &str) -> String {
        let messages = [
            ChatMessage::new("system", "Rewrite the user's message in different words. Keep every fact, name, direction and distance. Reply with the rewritten message only."),
            ChatMessage::new("user", text),
        ];
        self.client.complete(&messages).map(|s| s.trim().to_string()).ok().filter(|s| !s.is_empty()).unwrap_or_else(|| text.to_string())
    }
}

/// Template-driven user for one scene run.
#[derive(Debug, Clone)]
pub struct TemplateUser {
    pub regime: FeedbackRegime,
    pub seed: u64,
    descriptions: BTreeMap<u32, usize>,
}

impl TemplateUser {
    pub fn new(regime: FeedbackRegime, seed: u64) -> Self {
        Self { regime, seed, descriptions: BTreeMap::new() }
    }

    /// The opening request for a goal.
    pub fn instruction(goal: &GoalSpec) -> String {
        format!("Please find {}.", goal.name)
    }

    /// Answers the robot's `talk_index`-th talk (0-based) for goal
    /// `goal_index`, given where it stands.
    pub fn respond(&mut self, world: &World, goal_index: usize, pose: Pose, talk_index: usize) -> UserReply {
        let scene = &*world.scene;
        let goal = &scene.goals()[goal_index];
        let adjudication = adjudicate(world, pose, goal);
        if adjudication.success {
            return UserReply { text: format!("Yes, that's {}. Well done.", goal.name), event: None, adjudication };
        }
        let key = format!("{}/{}/{}", self.seed, scene.id(), goal.name);
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(key.as_bytes()) ^ talk_index as u64);
        let (text, event) = match self.regime {
            FeedbackRegime::Mixed => {
                // Everything the user knows: what was reached, the cycled
                // landmark or description, then the route.
                let lead = FeedbackRegime::SINGLE[[0, 2, 3, 1][talk_index % 4]];
                let mut kinds = vec![FeedbackRegime::Corrective];
                if matches!(lead, FeedbackRegime::Landmark | FeedbackRegime::Descriptive) {
                    kinds.push(lead);
                }
                kinds.push(FeedbackRegime::Procedural);
                let said: Vec<(String, FeedbackEvent)> = kinds.into_iter().filter_map(|k| self.part(world, goal_index, pose, adjudication, k)).collect();
                match said.len() {
                    0 => (DENIALS[rng.random_range(0..DENIALS.len())].to_string(), Some(FeedbackEvent::YesNo)),
                    1 => {
                        let (text, event) = said.into_iter().next().expect("one part");
                        (text, Some(event))
                    }
                    _ => {
                        let mut text = String::new();
                        let mut parts = Vec::new();
                        for (i, (t, e)) in said.into_iter().enumerate() {
                            let t = if i == 0 { t.as_str() } else { t.strip_prefix("No. ").unwrap_or(&t) };
                            if i > 0 {
                                text.push(' ');
                            }
                            text.push_str(t);
                            parts.push(e);
                        }
                        (text, Some(FeedbackEvent::Mixed { parts }))
                    }
                }
            }
            kind => match self.part(world, goal_index, pose, adjudication, kind) {
                Some((text, event)) => (text, Some(event)),
                None => (DENIALS[rng.random_range(0..DENIALS.len())].to_string(), Some(FeedbackEvent::YesNo)),
            },
        };
        UserReply { text, event, adjudication }
    }

    /// One denial of a single feedback kind, or `None` when that kind has
    /// nothing to say here (yes/no always does).
    fn part(&mut self, world: &World, goal_index: usize, pose: Pose, adjudication: Adjudication, kind: FeedbackRegime) -> Option<(String, FeedbackEvent)> {
        let scene = &*world.scene;
        let goal = &scene.goals()[goal_index];
        match kind {
            FeedbackRegime::None | FeedbackRegime::YesNo | FeedbackRegime::Mixed => None,
            FeedbackRegime::Corrective => {
                let obj = adjudication.reached.and_then(|g| scene.object(g))?;
                Some((
                    format!("No, that is {}.", mid_sentence_name(&obj.personalized_name)),
                    FeedbackEvent::Corrective { name: obj.personalized_name.clone() },
                ))
            }
            FeedbackRegime::Descriptive => {
                let obj = scene.object(goal.target_gid).expect("validated goal");
                if obj.descriptions.is_empty() {
                    return None;
                }
                let cursor = self.descriptions.entry(goal.target_gid).or_default();
                let sentence = obj.descriptions[*cursor % obj.descriptions.len()].clone();
                *cursor += 1;
                Some((format!("No. {sentence}"), FeedbackEvent::Descriptive { sentence }))
            }
            FeedbackRegime::Landmark => {
                let class = nearest_landmark(scene, goal)?;
                Some((format!("No. It is near the {class}."), FeedbackEvent::Landmark { class: class.to_string(), relation: "near".into() }))
            }
            FeedbackRegime::Procedural => {
                let path = route_to_goal(world, pose, goal_index)?;
                let target = scene.mass_center_of(scene.object_index(goal.target_gid).expect("validated goal"));
                let steps = procedural_instructions(&path, pose, scene.resolution(), target);
                let text = if steps.is_empty() { NEXT_TO_IT.to_string() } else { format!("No. {}.", capitalize(&render_instructions(&steps))) };
                Some((text, FeedbackEvent::Procedural { steps }))
            }
        }
    }
}

/// Reads template-shaped text back into an event, for human users whose
/// replies feed the scripted policy. Each sentence is read on its own and
/// several recognized sentences make a mixed event. Unrecognized denials
/// become yes/no.
pub fn parse_feedback(text: &str) -> Option<FeedbackEvent> {
    let t = text.trim();
    let lower = t.to_lowercase();
    if lower.starts_with("yes") {
        return None;
    }
    if DENIALS.iter().any(|d| d.eq_ignore_ascii_case(t)) {
        return Some(FeedbackEvent::YesNo);
    }
    let (comma, body) = if lower.starts_with("no,") {
        (true, t[3..].trim())
    } else if lower.starts_with("no.") {
        (false, t[3..].trim())
    } else {
        (false, t)
    };
    let mut parts = Vec::new();
    for (i, raw) in body.split(". ").enumerate() {
        let sentence = raw.trim().trim_end_matches('.').trim();
        if sentence.is_empty() {
            continue;
        }
        let lower = sentence.to_lowercase();
        if let Some(class) = ["it is near the ", "it's near the "].iter().find_map(|p| lower.strip_prefix(p)) {
            parts.push(FeedbackEvent::Landmark { class: class.trim().to_string(), relation: "near".into() });
        } else if lower == "you are right next to it" {
            parts.push(FeedbackEvent::Procedural { steps: Vec::new() });
        } else if let Some(steps) = parse_route(&lower) {
            parts.push(FeedbackEvent::Procedural { steps });
        } else if i == 0 && comma {
            // "No, ..." opens either a correction or a plain denial.
            if let Some(rest) = ["that is ", "that's ", "it is ", "it's ", "this is "].iter().find_map(|p| lower.strip_prefix(p)) {
                parts.push(FeedbackEvent::Corrective { name: rest.trim().to_string() });
            }
        } else {
            parts.push(FeedbackEvent::Descriptive { sentence: format!("{sentence}.") });
        }
    }
    match parts.len() {
        0 => Some(FeedbackEvent::YesNo),
        1 => parts.pop(),
        _ => Some(FeedbackEvent::Mixed { parts }),
    }
}

fn parse_route(text: &str) -> Option<Vec<Instruction>> {
    let mut steps = Vec::new();
    for part in text.trim_end_matches('.').split(',') {
        let words: Vec<&str> = part.split_whitespace().collect();
        match words.as_slice() {
            ["turn", "around"] => steps.push(Instruction::Turn { degrees: 180.0 }),
            ["turn", side] | ["turn", side, _, "degrees"] | ["turn", side, _, "degree"] => {
                let sign = match *side {
                    "left" => 1.0,
                    "right" => -1.0,
                    _ => return None,
                };
                let mag = if words.len() == 4 { words[2].parse::<f64>().ok()? } else { 90.0 };
                steps.push(Instruction::Turn { degrees: sign * mag });
            }
            ["go", "forward", n, _unit] => steps.push(Instruction::Forward { meters: n.parse().ok()? }),
            _ => return None,
        }
    }
    (!steps.is_empty()).then_some(steps)
}
