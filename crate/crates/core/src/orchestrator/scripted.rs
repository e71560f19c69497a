//! Deterministic phase-machine policy. It reads structured returns and
//! feedback events instead of text.

use std::collections::{BTreeSet, VecDeque};

use crate::control::{STEP_M, TURN_DEG};
use crate::exploration::SearchOutcome;
use crate::grid::{normalize_heading, normalize_relative, Point, Pose};
use crate::perception::ObjId;
use crate::semantic_map::MapCandidate;
use crate::text::{attribute_tokens, mid_sentence_name, tokenize};
use crate::user_sim::{FeedbackEvent, Instruction};

use super::actions::{Action, ThoughtAction, MAX_PRIMITIVE_MULTIPLIER};
use super::dispatch::{FunctionReturn, Modules, Outcome};
use super::episode::{GoalInfo, Policy, PolicyError, PolicyView, UserTurn};

/// Two candidates closer than this are taken to be the same object.
const SAME_OBJECT_M: f64 = 0.6;
/// After a route, candidates farther than this from its end are ignored.
const ROUTE_RADIUS_M: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Memory,
    Map,
    Detect,
    GotoCandidate,
    Check,
    Search,
    LandmarkMap,
    Sweep,
    Route,
    RouteDetect,
    Refine,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Memory,
    Map,
    Detection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    id: ObjId,
    pos: Point,
    source: Source,
    boost: u32,
}

#[derive(Debug, Clone)]
struct Planned {
    thought: String,
    action: Action,
    tag: Tag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RouteState {
    end: Pose,
    blocked: bool,
    recovered: bool,
    faced: bool,
}

fn polar(pose: Pose, distance: f64, angle: f64) -> Point {
    let a = (pose.heading + angle).to_radians();
    Point::new(pose.x + distance * a.cos(), pose.y + distance * a.sin())
}

/// Dead-reckons a spoken route and turns it into Rotate/Move calls.
fn route_calls(pose: Pose, steps: &[Instruction]) -> (Vec<Action>, Pose) {
    let (mut x, mut y, mut h) = (pose.x, pose.y, pose.heading);
    let mut calls = Vec::new();
    for step in steps {
        match *step {
            Instruction::Turn { degrees } => {
                let quanta = (degrees / TURN_DEG).round() as i64;
                if quanta != 0 {
                    calls.push(Action::Rotate { num: -quanta });
                    h = normalize_heading(h + quanta as f64 * TURN_DEG);
                }
            }
            Instruction::Forward { meters } => {
                let mut n = (meters / STEP_M).round() as i64;
                let d = n as f64 * STEP_M;
                x += d * h.to_radians().cos();
                y += d * h.to_radians().sin();
                while n > 0 {
                    let chunk = n.min(MAX_PRIMITIVE_MULTIPLIER);
                    calls.push(Action::Move { num: chunk });
                    n -= chunk;
                }
            }
        }
    }
    (calls, Pose::new(x, y, h))
}

/// The scripted backend. One instance serves a whole scene run; module
/// availability learned from "module unavailable" returns carries over.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    modules: Modules,
    goal: GoalInfo,
    query: String,
    queue: VecDeque<Planned>,
    pending: Option<Tag>,
    cands: Vec<Candidate>,
    tried_ids: BTreeSet<ObjId>,
    tried_pos: Vec<Point>,
    focus: Option<Candidate>,
    talked: Option<Candidate>,
    last_confirmed: Option<Candidate>,
    anchor: Option<Point>,
    route: Option<RouteState>,
    exhausted: bool,
}

impl Default for ScriptedPolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedPolicy {
    pub fn new() -> Self {
        Self {
            modules: Modules { memory: true, map: true, detection: true, exploration: true },
            goal: GoalInfo { name: String::new(), goal_type: String::new() },
            query: String::new(),
            queue: VecDeque::new(),
            pending: None,
            cands: Vec::new(),
            tried_ids: BTreeSet::new(),
            tried_pos: Vec::new(),
            focus: None,
            talked: None,
            last_confirmed: None,
            anchor: None,
            route: None,
            exhausted: false,
        }
    }

    fn plan(&mut self, thought: impl Into<String>, action: Action, tag: Tag) {
        self.queue.push_back(Planned { thought: thought.into(), action, tag });
    }

    fn plan_front(&mut self, thought: impl Into<String>, action: Action, tag: Tag) {
        self.queue.push_front(Planned { thought: thought.into(), action, tag });
    }

    fn is_tried(&self, c: &Candidate) -> bool {
        self.tried_ids.contains(&c.id) || self.tried_pos.iter().any(|p| p.distance(c.pos) < SAME_OBJECT_M)
    }

    fn mark_tried(&mut self, c: Candidate) {
        self.tried_ids.insert(c.id);
        self.tried_pos.push(c.pos);
    }

    /// Adds a candidate or boosts the one already at that spot.
    fn offer(&mut self, id: ObjId, pos: Point, source: Source, boost: u32) {
        if let Some(existing) = self.cands.iter_mut().find(|c| c.id == id || c.pos.distance(pos) < SAME_OBJECT_M) {
            if source == Source::Detection && boost > existing.boost && existing.source != Source::Memory {
                existing.id = id;
                existing.pos = pos;
            }
            existing.boost = existing.boost.max(boost);
            if source == Source::Memory {
                existing.source = Source::Memory;
            }
            return;
        }
        self.cands.push(Candidate { id, pos, source, boost });
    }

    fn offer_map(&mut self, list: &[MapCandidate], pose: Pose, source: Source, boost: u32) {
        for c in list {
            self.offer(c.obj_id, polar(pose, c.distance, c.angle), source, boost);
        }
    }

    fn choose(&self) -> Option<Candidate> {
        let open = self.cands.iter().enumerate().filter(|(_, c)| !self.is_tried(c));
        open.min_by(|(ia, a), (ib, b)| {
            let key = |c: &Candidate, i: usize| match self.anchor {
                Some(p) => c.pos.distance(p),
                None => i as f64,
            };
            b.boost.cmp(&a.boost).then(key(a, *ia).total_cmp(&key(b, *ib))).then(ia.cmp(ib))
        })
        .map(|(_, c)| *c)
    }

    fn disable(&mut self, name: &str) {
        match name {
            "retrieve_memory" | "update_memory" => self.modules.memory = false,
            "retrieve_map" => self.modules.map = false,
            "detect_object" | "double_check" => self.modules.detection = false,
            "search_object" => self.modules.exploration = false,
            _ => {}
        }
    }

    fn talk_about(&mut self, c: Option<Candidate>) {
        self.talked = c;
        let content = format!("Is this {}?", mid_sentence_name(&self.goal.name));
        self.plan_front("I am at the candidate; ask the user to confirm.", Action::Talk { content }, Tag::Plain);
    }

    fn sweep(&mut self, query: &str, why: &str) {
        for k in 0..4 {
            if k > 0 {
                self.plan(format!("{why}; turn to the next quadrant."), Action::Rotate { num: 6 }, Tag::Sweep);
            }
            self.plan(format!("{why}; look for the {query}."), Action::DetectObject { query: query.to_string() }, Tag::Sweep);
        }
    }

    fn absorb(&mut self, tag: Tag, ret: &FunctionReturn, pose: Pose) {
        if ret.outcome == Outcome::Unavailable {
            self.disable(ret.name);
            if matches!(tag, Tag::Check) {
                let focus = self.focus;
                self.talk_about(focus);
            }
            return;
        }
        match (tag, &ret.outcome) {
            (Tag::Memory, Outcome::Candidates(list)) => self.offer_map(list, pose, Source::Memory, 10),
            (Tag::Map, Outcome::Candidates(list)) => self.offer_map(list, pose, Source::Map, 0),
            (Tag::Refine, Outcome::Candidates(list)) => self.offer_map(list, pose, Source::Map, 1),
            (Tag::Detect | Tag::Sweep | Tag::RouteDetect, Outcome::Detections(list)) => {
                let boost = u32::from(tag == Tag::Sweep && self.query != self.goal.goal_type);
                for d in list {
                    self.offer(d.obj_id, polar(pose, d.distance, d.angle), Source::Detection, boost);
                }
                if tag == Tag::RouteDetect {
                    let near = self.choose().is_some_and(|c| self.anchor.is_some_and(|a| c.pos.distance(a) <= ROUTE_RADIUS_M));
                    if !near {
                        self.talk_about(None);
                    }
                }
            }
            (Tag::Search, Outcome::Search(SearchOutcome::Found(list))) => {
                for d in list {
                    self.offer(d.obj_id, polar(pose, d.distance, d.angle), Source::Detection, 0);
                }
            }
            (Tag::Search, Outcome::Search(SearchOutcome::Exhausted)) => self.exhausted = true,
            (Tag::GotoCandidate, Outcome::Nav { .. }) => match self.focus {
                Some(c) if self.modules.detection && c.source != Source::Memory => {
                    self.plan_front("Verify the candidate from up close.", Action::DoubleCheck { obj_id: c.id }, Tag::Check)
                }
                focus => self.talk_about(focus),
            },
            (Tag::Check, Outcome::Checked(Some(_))) => {
                let focus = self.focus;
                self.talk_about(focus);
            }
            (Tag::GotoCandidate | Tag::Check, _) => {
                if let Some(c) = self.focus.take() {
                    self.mark_tried(c);
                }
            }
            (Tag::LandmarkMap, Outcome::Candidates(list)) => {
                if let Some(lm) = list.first() {
                    self.anchor = Some(polar(pose, lm.distance, lm.angle));
                    let goal_type = self.goal.goal_type.clone();
                    self.plan("Head to the landmark the user mentioned.", Action::GotoObject { obj_id: lm.obj_id }, Tag::Plain);
                    self.sweep(&goal_type, "Search around the landmark");
                }
            }
            (Tag::Route, Outcome::Nav { blocked: true }) => {
                if let Some(r) = &mut self.route {
                    r.blocked = true;
                }
            }
            _ => {}
        }
    }

    fn on_feedback(&mut self, turn: &UserTurn, pose: Pose) {
        self.focus = None;
        let talked = self.talked.take();
        if let Some(c) = talked {
            self.mark_tried(c);
        }
        let Some(event) = &turn.event else { return };
        let parts = match event {
            FeedbackEvent::Mixed { parts } => parts.clone(),
            single => vec![single.clone()],
        };
        if let (Some(c), true) = (talked, self.modules.memory) {
            let pos_str = parts.iter().find_map(|p| match p {
                FeedbackEvent::Corrective { name } if self.corrective_fits(name) => Some(name.clone()),
                _ => None,
            });
            self.plan(
                "Remember what the user said about this object.",
                Action::UpdateMemory { obj_id: c.id, pos_str, neg_str: Some(self.goal.name.clone()) },
                Tag::Plain,
            );
        }
        let attrs: Vec<String> = parts
            .iter()
            .filter_map(|p| match p {
                FeedbackEvent::Descriptive { sentence } => Some(attribute_tokens(sentence)),
                _ => None,
            })
            .flatten()
            .collect();
        let refined = !attrs.is_empty();
        if refined {
            self.query = format!("{} {}", attrs.join(" "), self.goal.goal_type);
        }
        let route = parts.iter().find_map(|p| match p {
            FeedbackEvent::Procedural { steps } => Some(steps.clone()),
            _ => None,
        });
        if let Some(steps) = route {
            let (calls, end) = route_calls(pose, &steps);
            for call in calls {
                self.plan("Follow the user's directions.", call, Tag::Route);
            }
            self.route = Some(RouteState { end, blocked: false, recovered: false, faced: false });
            return;
        }
        if let Some(class) = parts.iter().find_map(|p| match p {
            FeedbackEvent::Landmark { class, .. } => Some(class.clone()),
            _ => None,
        }) {
            if self.modules.map {
                self.plan(format!("The user says it is near the {class}; find that in the map."), Action::RetrieveMap { query: class }, Tag::LandmarkMap);
            }
            return;
        }
        if refined {
            let query = self.query.clone();
            if self.modules.map {
                self.plan(format!("Look for a {query} in the map."), Action::RetrieveMap { query }, Tag::Refine);
            } else if self.modules.detection {
                self.sweep(&query, "Look around with the description");
            }
        }
    }

    /// A corrective name is stored as a positive label only when it names an
    /// object of the goal's class; the user may have been looking at
    /// something else near the candidate.
    fn corrective_fits(&self, name: &str) -> bool {
        let class = tokenize(&self.goal.goal_type);
        let tokens = tokenize(name);
        class.last().is_some_and(|t| tokens.contains(t))
    }

    fn decide(&mut self, view: &PolicyView<'_>) -> Planned {
        if let Some(mut r) = self.route.take() {
            if r.blocked && !r.recovered {
                r.recovered = true;
                self.route = Some(r);
                return Planned {
                    thought: "The directions were cut short; walk to where they end.".into(),
                    action: Action::GotoPoint { x: r.end.x, y: r.end.y },
                    tag: Tag::Route,
                };
            }
            if !r.faced {
                r.faced = true;
                let quanta = (normalize_relative(r.end.heading - view.pose.heading) / TURN_DEG).round() as i64;
                if quanta != 0 {
                    self.route = Some(r);
                    return Planned { thought: "Face the way the directions end.".into(), action: Action::Rotate { num: -quanta }, tag: Tag::Route };
                }
            }
            self.anchor = Some(view.pose.point());
            if self.modules.detection {
                return Planned {
                    thought: "The directions end here; look for it.".into(),
                    action: Action::DetectObject { query: self.query.clone() },
                    tag: Tag::RouteDetect,
                };
            }
            self.talked = None;
            return Planned {
                thought: "The directions end here; ask the user.".into(),
                action: Action::Talk { content: format!("Is this {}?", mid_sentence_name(&self.goal.name)) },
                tag: Tag::Plain,
            };
        }
        if let Some(c) = self.choose() {
            self.focus = Some(c);
            return Planned {
                thought: format!("Go to candidate {}.", c.id),
                action: Action::GotoObject { obj_id: c.id },
                tag: Tag::GotoCandidate,
            };
        }
        if self.modules.exploration && !self.exhausted {
            return Planned {
                thought: format!("No candidate left; explore for the {}.", self.query),
                action: Action::SearchObject { query: self.query.clone() },
                tag: Tag::Search,
            };
        }
        self.talked = None;
        Planned { thought: "Nothing left to try.".into(), action: Action::Talk { content: "I cannot find it.".into() }, tag: Tag::Plain }
    }
}

impl Policy for ScriptedPolicy {
    fn begin_goal(&mut self, goal: &GoalInfo) {
        let modules = self.modules;
        *self = Self::new();
        self.modules = modules;
        self.goal = goal.clone();
        self.query = goal.goal_type.clone();
        if self.modules.memory {
            self.plan(format!("Check memory for {}.", goal.name), Action::RetrieveMemory { query: goal.name.clone() }, Tag::Memory);
        }
        if self.modules.map {
            self.plan(format!("Look up every {} in the map.", goal.goal_type), Action::RetrieveMap { query: goal.goal_type.clone() }, Tag::Map);
        } else if self.modules.detection {
            self.plan(format!("Look for a {} from here.", goal.goal_type), Action::DetectObject { query: goal.goal_type.clone() }, Tag::Detect);
        }
    }

    fn next_action(&mut self, view: &PolicyView<'_>) -> Result<ThoughtAction, PolicyError> {
        if let (Some(tag), Some(ret)) = (self.pending.take(), view.last_return) {
            self.absorb(tag, ret, view.pose);
        }
        if view.wrap_up {
            self.last_confirmed = self.talked.take();
            let action = match self.last_confirmed {
                Some(c) => Action::UpdateMemory { obj_id: c.id, pos_str: Some(self.goal.name.clone()), neg_str: None },
                None => Action::Talk { content: "Thank you.".into() },
            };
            return Ok(ThoughtAction::new("Store the confirmed object in memory.", action));
        }
        if let Some(turn) = view.last_user {
            self.on_feedback(turn, view.pose);
        }
        let next = match self.queue.pop_front() {
            Some(p) => p,
            None => self.decide(view),
        };
        self.pending = Some(next.tag);
        Ok(ThoughtAction::new(next.thought, next.action))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn route_dead_reckoning() {
        let steps = [Instruction::Forward { meters: 2.0 }, Instruction::Turn { degrees: 90.0 }, Instruction::Forward { meters: 11.0 }];
        let (calls, end) = route_calls(Pose::new(1.0, 1.0, 0.0), &steps);
        assert_eq!(calls, vec![Action::Move { num: 8 }, Action::Rotate { num: -6 }, Action::Move { num: 40 }, Action::Move { num: 4 }]);
        assert!((end.x - 3.0).abs() < 1e-9 && (end.y - 12.0).abs() < 1e-9 && (end.heading - 90.0).abs() < 1e-9);
    }

    #[test]
    fn corrective_guard_uses_class_token() {
        let mut p = ScriptedPolicy::new();
        p.begin_goal(&GoalInfo { name: "alice's computer".into(), goal_type: "computer".into() });
        assert!(p.corrective_fits("bob's computer"));
        assert!(!p.corrective_fits("carol's lamp"));
    }
}
