//! One live episode and the JSON views the HTTP layer hands out.

use pnav_core::agent::World;
use pnav_core::grid::{Cell, Knowledge};
use pnav_core::orchestrator::{Advance, Policy, SceneRun, Status, TranscriptRecord};
use pnav_core::user_sim::TemplateUser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Simulated,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AgentRunning,
    AwaitingUser,
    Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionError {
    /// The request does not fit the session's state or mode.
    Conflict(String),
}

pub struct Session {
    pub id: u64,
    pub mode: Mode,
    pub goal_index: usize,
    pub run: SceneRun,
    policy: Box<dyn Policy>,
    user: TemplateUser,
    phase: Phase,
    started: bool,
    reported_records: usize,
    reported_trail: usize,
    reported_known: Vec<Knowledge>,
}

impl Session {
    /// The episode is opened on the first step, so a fresh session has not
    /// sensed or moved yet.
    pub fn new(id: u64, mode: Mode, goal_index: usize, run: SceneRun, policy: Box<dyn Policy>, user: TemplateUser) -> Self {
        let reported_known = run.state.robot.online.cells().to_vec();
        Self {
            id,
            mode,
            goal_index,
            run,
            policy,
            user,
            phase: Phase::AgentRunning,
            started: false,
            reported_records: 0,
            reported_trail: 0,
            reported_known,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    fn settle(&mut self) {
        let running = self.run.episode.as_ref().is_some_and(|e| e.status == Status::Running);
        self.phase = if running { Phase::AgentRunning } else { Phase::Terminal };
    }

    /// Runs the agent until it talks or the episode ends. A simulated user
    /// answers the talk before this returns.
    pub fn step(&mut self) -> Result<Value, SessionError> {
        if self.phase != Phase::AgentRunning {
            return Err(SessionError::Conflict(format!("session is {}", phase_name(self.phase))));
        }
        if !self.started {
            self.run.start_goal(self.goal_index, self.policy.as_mut());
            self.started = true;
        }
        let talk = match self.run.advance(self.policy.as_mut()) {
            Advance::Talk(text) => Some(text),
            Advance::Terminal => None,
        };
        if talk.is_some() {
            match self.mode {
                Mode::Simulated => {
                    self.run.respond_simulated(self.policy.as_mut(), &mut self.user);
                    self.settle();
                }
                Mode::Human => self.phase = Phase::AwaitingUser,
            }
        } else {
            self.phase = Phase::Terminal;
        }
        Ok(self.delta(talk))
    }

    /// Delivers a person's reply to the pending talk. Ground truth decides
    /// whether it was a success. The reply carries the same delta as a step.
    pub fn message(&mut self, text: &str) -> Result<Value, SessionError> {
        if self.mode != Mode::Human {
            return Err(SessionError::Conflict("session answers with the simulated user".into()));
        }
        if self.phase != Phase::AwaitingUser {
            return Err(SessionError::Conflict(format!("session is {}", phase_name(self.phase))));
        }
        let success = self.run.respond_human(self.policy.as_mut(), text);
        self.settle();
        let mut out = self.delta(None);
        out["accepted"] = json!(true);
        out["success"] = json!(success);
        Ok(out)
    }

    fn delta(&mut self, talk: Option<String>) -> Value {
        let records = &self.run.transcript[self.reported_records..];
        self.reported_records = self.run.transcript.len();
        let trail: Vec<[f64; 2]> = self.run.state.robot.trail[self.reported_trail..].iter().map(|p| [p.x, p.y]).collect();
        self.reported_trail = self.run.state.robot.trail.len();
        let online = &self.run.state.robot.online;
        let cols = self.run.world.scene.cols();
        let cells: Vec<Value> = online
            .cells()
            .iter()
            .zip(&self.reported_known)
            .enumerate()
            .filter(|(_, (now, before))| now != before)
            .map(|(i, (now, _))| json!([i / cols, i % cols, now]))
            .collect();
        self.reported_known = online.cells().to_vec();
        json!({
            "state": self.phase,
            "records": records,
            "trail": trail,
            "map": cells,
            "known_cells": online.known_count(),
            "talk": talk,
            "metrics": self.metrics(),
        })
    }

    fn metrics(&self) -> Value {
        let Some(ep) = &self.run.episode else {
            return json!({ "interactions": 0, "path_length": 0.0, "steps": 0, "success": null });
        };
        let out = self.run.outcome();
        let success = match ep.status {
            Status::Running => Value::Null,
            Status::Success => json!(1),
            Status::Failed => json!(0),
        };
        json!({ "interactions": out.talks, "path_length": out.traveled, "steps": out.steps, "success": success, "reason": out.reason })
    }

    /// Renderable state. Ground truth about the goal is only added with `reveal`.
    pub fn snapshot(&self, reveal: bool) -> Value {
        let world: &World = &self.run.world;
        let scene = &world.scene;
        let robot = &self.run.state.robot;
        let res = scene.resolution();
        let trajectory: Vec<[f64; 2]> = if self.started { robot.trail.iter().map(|p| [p.x, p.y]).collect() } else { Vec::new() };
        let markers: Vec<Value> = self
            .run
            .state
            .registry
            .entries()
            .iter()
            .map(|e| {
                let c = self.run.state.registry.centroid(e.id, res).expect("entry exists");
                json!({ "id": e.id.0, "x": c.x, "y": c.y, "cells": e.region.len(), "source": e.source })
            })
            .collect();
        let dialogue: Vec<Value> = self
            .run
            .transcript
            .iter()
            .filter_map(|r| match r {
                TranscriptRecord::Dialogue { speaker, text, .. } => Some(json!({ "speaker": speaker, "text": text })),
                _ => None,
            })
            .collect();
        let mut snap = json!({
            "id": self.id,
            "scene": scene.id(),
            "mode": self.mode,
            "state": self.phase,
            "rows": scene.rows(),
            "cols": scene.cols(),
            "resolution": res,
            "known_cells": robot.online.known_count(),
            "occupancy": run_length(robot.online.cells()),
            "pose": { "x": robot.pose.x, "y": robot.pose.y, "heading": robot.pose.heading },
            "trajectory": trajectory,
            "markers": markers,
            "dialogue": dialogue,
            "metrics": self.metrics(),
        });
        if reveal {
            let goal = &scene.goals()[self.goal_index];
            let index = scene.object_index(goal.target_gid).expect("validated scene");
            let center = scene.mass_center_of(index);
            let region: Vec<[usize; 2]> = world.success_regions[self.goal_index].iter().map(|c: &Cell| [c.row, c.col]).collect();
            snap["goal"] = json!({
                "index": self.goal_index,
                "name": goal.name,
                "type": goal.goal_type,
                "room": goal.room,
                "target_gid": goal.target_gid,
                "center": { "x": center.x, "y": center.y },
                "success_region": region,
            });
        }
        snap
    }
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::AgentRunning => "agent_running",
        Phase::AwaitingUser => "awaiting_user",
        Phase::Terminal => "terminal",
    }
}

/// Row-major runs of `[value, count]`.
pub fn run_length(cells: &[Knowledge]) -> Vec<(Knowledge, usize)> {
    let mut runs: Vec<(Knowledge, usize)> = Vec::new();
    for &k in cells {
        match runs.last_mut() {
            Some((v, n)) if *v == k => *n += 1,
            _ => runs.push((k, 1)),
        }
    }
    runs
}
