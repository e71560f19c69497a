//! Policy-facing action API, dispatch into the modules, and the episode loop.

pub mod actions;
pub mod dispatch;
pub mod episode;
pub mod remote_policy;
pub mod scripted;

pub use actions::{parse_thought_action, Action, ParseError, ThoughtAction};
pub use dispatch::{dispatch, Ablation, AgentConfig, FunctionReturn, Modules, Outcome, Preset, RunState};
pub use episode::{Advance, ContextEntry, GoalInfo, GoalOutcome, LoopConfig, Policy, PolicyError, PolicyView, SceneRun, Status, TranscriptRecord, UserTurn};
pub use remote_policy::RemotePolicy;
pub use scripted::ScriptedPolicy;
