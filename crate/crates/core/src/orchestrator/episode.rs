//! The think-act-ask loop for a sequence of goals in one scene.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{Robot, World};
use crate::embedding::fnv1a64;
use crate::exploration::{initial_spin, SearchState};
use crate::grid::Pose;
use crate::memory::MemoryMaps;
use crate::perception::ObjectRegistry;
use crate::user_sim::{adjudicate, parse_feedback, FeedbackEvent, TemplateUser, UserReply};

use super::actions::{Action, ThoughtAction};
use super::dispatch::{dispatch, AgentConfig, FunctionReturn, RunState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalInfo {
    pub name: String,
    pub goal_type: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextEntry {
    User(String),
    Robot(ThoughtAction),
    Function(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserTurn {
    pub text: String,
    pub event: Option<FeedbackEvent>,
}

/// What a policy sees before choosing its next action.
pub struct PolicyView<'a> {
    pub goal: &'a GoalInfo,
    pub pose: Pose,
    pub context: &'a [ContextEntry],
    /// Return of the previous action, if it was not a talk.
    pub last_return: Option<&'a FunctionReturn>,
    /// The user's reply, on the first call after a talk.
    pub last_user: Option<&'a UserTurn>,
    pub talk_count: usize,
    /// Set once after a confirmed success; only update_memory is executed.
    pub wrap_up: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy transport failed: {0}")]
    Transport(String),
}

pub trait Policy: Send {
    fn begin_goal(&mut self, goal: &GoalInfo);
    fn next_action(&mut self, view: &PolicyView<'_>) -> Result<ThoughtAction, PolicyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Success,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub i_max: usize,
    /// Non-talk actions allowed between two talks before a talk is forced.
    pub step_cap: usize,
    /// The no-interaction setting: the first talk ends the episode.
    pub single_talk: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { i_max: 5, step_cap: 200, single_talk: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptRecord {
    Dialogue { step: u64, goal: usize, speaker: String, text: String },
    ThoughtAction { step: u64, goal: usize, thought: String, action: Value },
    FunctionReturn { step: u64, goal: usize, name: String, message: String, moved_m: f64 },
}

impl TranscriptRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub goal_index: usize,
    pub goal: GoalInfo,
    pub status: Status,
    pub talk_count: usize,
    pub steps: usize,
    pub start_pose: Pose,
    pub reason: Option<String>,
    pub pending_talk: Option<String>,
    steps_since_talk: usize,
    start_traveled: f64,
    context: Vec<ContextEntry>,
    last_return: Option<FunctionReturn>,
    last_user: Option<UserTurn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalOutcome {
    pub goal_index: usize,
    pub goal: String,
    pub start_pose: Pose,
    pub success: bool,
    pub traveled: f64,
    pub talks: usize,
    pub steps: usize,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Advance {
    Talk(String),
    Terminal,
}

/// One scene run: the robot, its maps and memory persist across goals.
pub struct SceneRun {
    pub world: Arc<World>,
    pub state: RunState,
    pub agent: AgentConfig,
    pub loop_cfg: LoopConfig,
    pub seed: u64,
    pub transcript: Vec<TranscriptRecord>,
    pub episode: Option<Episode>,
    next_step: u64,
    spun: bool,
}

impl SceneRun {
    pub fn new(world: Arc<World>, agent: AgentConfig, loop_cfg: LoopConfig, seed: u64, memory: Option<MemoryMaps>) -> Self {
        let scene = &world.scene;
        let memory = memory.unwrap_or_else(|| MemoryMaps::for_scene(scene, world.encoder.dim()));
        let state = RunState {
            robot: Robot::new(scene, scene.start()),
            registry: ObjectRegistry::new(),
            memory,
            search: SearchState::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        Self { world, state, agent, loop_cfg, seed, transcript: Vec::new(), episode: None, next_step: 0, spun: false }
    }

    fn record(&mut self, make: impl FnOnce(u64) -> TranscriptRecord) {
        let step = self.next_step;
        self.next_step += 1;
        self.transcript.push(make(step));
    }

    /// Opens goal `goal_index` from wherever the robot stands.
    pub fn start_goal(&mut self, goal_index: usize, policy: &mut dyn Policy) {
        let spec = self.world.scene.goals()[goal_index].clone();
        let key = format!("{}/{}/{}", self.seed, self.world.scene.id(), goal_index);
        self.state.rng = ChaCha8Rng::seed_from_u64(fnv1a64(key.as_bytes()));
        let goal = GoalInfo { name: spec.name.clone(), goal_type: spec.goal_type.clone() };
        let instruction = TemplateUser::instruction(&spec);
        let mut ep = Episode {
            goal_index,
            goal: goal.clone(),
            status: Status::Running,
            talk_count: 0,
            steps: 0,
            start_pose: self.state.robot.pose,
            reason: None,
            pending_talk: None,
            steps_since_talk: 0,
            start_traveled: self.state.robot.traveled,
            context: vec![ContextEntry::User(instruction.clone())],
            last_return: None,
            last_user: None,
        };
        self.record(|step| TranscriptRecord::Dialogue { step, goal: goal_index, speaker: "user".into(), text: instruction });
        if !self.spun {
            self.spun = true;
            initial_spin(&mut self.state.robot, &self.world);
            let message = format!("Finished a 360° spin; {} cells known.", self.state.robot.online.known_count());
            ep.context.push(ContextEntry::Function(message.clone()));
            self.record(|step| TranscriptRecord::FunctionReturn {
                step,
                goal: goal_index,
                name: "initial_spin".into(),
                message,
                moved_m: 0.0,
            });
        }
        policy.begin_goal(&goal);
        self.episode = Some(ep);
    }

    fn ask(&mut self, policy: &mut dyn Policy, wrap_up: bool) -> Result<ThoughtAction, PolicyError> {
        let ep = self.episode.as_mut().expect("goal started");
        let last_return = ep.last_return.take();
        let last_user = ep.last_user.take();
        let view = PolicyView {
            goal: &ep.goal,
            pose: self.state.robot.pose,
            context: &ep.context,
            last_return: last_return.as_ref(),
            last_user: last_user.as_ref(),
            talk_count: ep.talk_count,
            wrap_up,
        };
        policy.next_action(&view)
    }

    fn execute(&mut self, ta: &ThoughtAction) {
        let ret = dispatch(&ta.action, &mut self.state, &self.world, &self.agent);
        let goal = self.episode.as_ref().expect("goal started").goal_index;
        let (name, message, moved_m) = (ret.name.to_string(), ret.message.clone(), ret.moved);
        self.record(|step| TranscriptRecord::FunctionReturn { step, goal, name, message, moved_m });
        let ep = self.episode.as_mut().expect("goal started");
        ep.context.push(ContextEntry::Function(ret.message.clone()));
        ep.last_return = Some(ret);
    }

    fn note_thought(&mut self, ta: &ThoughtAction) {
        let goal = self.episode.as_ref().expect("goal started").goal_index;
        let (thought, action) = (ta.thought.clone(), ta.action.to_json());
        self.record(|step| TranscriptRecord::ThoughtAction { step, goal, thought, action });
        self.episode.as_mut().expect("goal started").context.push(ContextEntry::Robot(ta.clone()));
    }

    /// Runs the policy until it talks or the episode ends.
    pub fn advance(&mut self, policy: &mut dyn Policy) -> Advance {
        loop {
            let ep = self.episode.as_ref().expect("goal started");
            if ep.status != Status::Running {
                return Advance::Terminal;
            }
            if let Some(content) = &ep.pending_talk {
                return Advance::Talk(content.clone());
            }
            let ta = if ep.steps_since_talk >= self.loop_cfg.step_cap {
                ThoughtAction::new("Step budget for this round is spent; ask the user.", Action::Talk { content: "Is this it?".into() })
            } else {
                match self.ask(policy, false) {
                    Ok(ta) => ta,
                    Err(e) => {
                        let ep = self.episode.as_mut().expect("goal started");
                        ep.status = Status::Failed;
                        ep.reason = Some(e.to_string());
                        return Advance::Terminal;
                    }
                }
            };
            self.note_thought(&ta);
            if let Action::Talk { content } = &ta.action {
                let goal = self.episode.as_ref().expect("goal started").goal_index;
                let text = content.clone();
                self.record(|step| TranscriptRecord::Dialogue { step, goal, speaker: "robot".into(), text });
                let ep = self.episode.as_mut().expect("goal started");
                ep.talk_count += 1;
                ep.steps += 1;
                ep.steps_since_talk = 0;
                ep.pending_talk = Some(content.clone());
                return Advance::Talk(content.clone());
            }
            self.execute(&ta);
            let ep = self.episode.as_mut().expect("goal started");
            ep.steps += 1;
            ep.steps_since_talk += 1;
        }
    }

    /// Hands the user's answer to the pending talk back to the loop.
    pub fn deliver(&mut self, policy: &mut dyn Policy, text: String, event: Option<FeedbackEvent>, success: bool) {
        let ep = self.episode.as_mut().expect("goal started");
        assert!(ep.pending_talk.take().is_some(), "deliver without a pending talk");
        let goal = ep.goal_index;
        ep.context.push(ContextEntry::User(text.clone()));
        let reply_text = text.clone();
        self.record(|step| TranscriptRecord::Dialogue { step, goal, speaker: "user".into(), text: reply_text });
        if success {
            // One closing action, so the policy can store the confirmation.
            if let Ok(ta) = self.ask_after_user(policy, UserTurn { text, event }, true) {
                if matches!(ta.action, Action::UpdateMemory { .. }) {
                    self.note_thought(&ta);
                    self.execute(&ta);
                }
            }
            self.episode.as_mut().expect("goal started").status = Status::Success;
            return;
        }
        let ep = self.episode.as_mut().expect("goal started");
        if self.loop_cfg.single_talk || ep.talk_count >= self.loop_cfg.i_max {
            ep.status = Status::Failed;
            ep.reason = Some(if self.loop_cfg.single_talk { "first talk not confirmed".into() } else { "interaction budget spent".into() });
            return;
        }
        ep.last_user = Some(UserTurn { text, event });
    }

    fn ask_after_user(&mut self, policy: &mut dyn Policy, turn: UserTurn, wrap_up: bool) -> Result<ThoughtAction, PolicyError> {
        self.episode.as_mut().expect("goal started").last_user = Some(turn);
        self.ask(policy, wrap_up)
    }

    /// Answers the pending talk with the template user.
    pub fn respond_simulated(&mut self, policy: &mut dyn Policy, user: &mut TemplateUser) -> UserReply {
        let ep = self.episode.as_ref().expect("goal started");
        let reply = user.respond(&self.world, ep.goal_index, self.state.robot.pose, ep.talk_count - 1);
        self.deliver(policy, reply.text.clone(), reply.event.clone(), reply.adjudication.success);
        reply
    }

    /// Answers the pending talk with free text from a person; ground truth
    /// still decides success.
    pub fn respond_human(&mut self, policy: &mut dyn Policy, text: &str) -> bool {
        let ep = self.episode.as_ref().expect("goal started");
        let goal = &self.world.scene.goals()[ep.goal_index];
        let success = adjudicate(&self.world, self.state.robot.pose, goal).success;
        self.deliver(policy, text.to_string(), parse_feedback(text), success);
        success
    }

    pub fn outcome(&self) -> GoalOutcome {
        let ep = self.episode.as_ref().expect("goal started");
        GoalOutcome {
            goal_index: ep.goal_index,
            goal: ep.goal.name.clone(),
            start_pose: ep.start_pose,
            success: ep.status == Status::Success,
            traveled: self.state.robot.traveled - ep.start_traveled,
            talks: ep.talk_count,
            steps: ep.steps,
            reason: ep.reason.clone(),
        }
    }

    /// Plays one goal to the end against the template user.
    pub fn run_goal(&mut self, goal_index: usize, policy: &mut dyn Policy, user: &mut TemplateUser) -> GoalOutcome {
        self.start_goal(goal_index, policy);
        while let Advance::Talk(_) = self.advance(policy) {
            self.respond_simulated(policy, user);
        }
        self.outcome()
    }
}
