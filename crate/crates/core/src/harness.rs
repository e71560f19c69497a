//! Suite runner, ground-truth path oracle, metrics and reports.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{World, WorldError};
use crate::control::plan_distance_field;
use crate::embedding::EmbeddingProvider;
use crate::grid::{Pose, Traversable};
use crate::memory::{MemoryError, MemoryMaps, MemorySnapshot};
use crate::orchestrator::{Ablation, AgentConfig, LoopConfig, Policy, Preset, SceneRun, TranscriptRecord};
use crate::perception::CameraModel;
use crate::scene::Scene;
use crate::user_sim::{FeedbackRegime, TemplateUser};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no episodes to score")]
    Empty,
    #[error("goal {goal:?} unreachable from ({x:.2}, {y:.2})")]
    Unreachable { goal: String, x: f64, y: f64 },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scene: String,
    pub seed: u64,
    pub goal_index: usize,
    pub goal: String,
    pub success: bool,
    /// Meters actually traveled.
    pub path_length: f64,
    /// Ground-truth shortest path from the goal's start pose to its success region.
    pub shortest_path: f64,
    pub interactions: usize,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub sr: f64,
    pub spl: f64,
    pub sit: f64,
}

/// SR, SPL and SIT in percent over `(S, l, a, I)` tuples.
pub fn metrics_from(rows: impl IntoIterator<Item = (bool, f64, f64, usize)>) -> Result<Metrics, HarnessError> {
    let (mut n, mut s, mut spl, mut sit) = (0usize, 0.0, 0.0, 0.0);
    for (success, l, a, i) in rows {
        n += 1;
        if success {
            s += 1.0;
            spl += if l == 0.0 { 1.0 } else { l / a.max(l) };
            sit += 1.0 / i.max(1) as f64;
        }
    }
    if n == 0 {
        return Err(HarnessError::Empty);
    }
    let pct = |x: f64| 100.0 * x / n as f64;
    Ok(Metrics { n, sr: pct(s), spl: pct(spl), sit: pct(sit) })
}

pub fn compute_metrics(results: &[EpisodeResult]) -> Result<Metrics, HarnessError> {
    metrics_from(results.iter().map(|r| (r.success, r.shortest_path, r.path_length, r.interactions)))
}

/// Dijkstra on the true grid from `p0` to the nearest success-region cell.
pub fn shortest_path_length(world: &World, p0: Pose, goal_index: usize) -> Result<f64, HarnessError> {
    let scene = &*world.scene;
    let goal = &scene.goals()[goal_index];
    let unreachable = || HarnessError::Unreachable { goal: goal.name.clone(), x: p0.x, y: p0.y };
    let here = scene.grid().cell_of(p0.point()).ok_or_else(unreachable)?;
    let field = plan_distance_field(scene.grid(), world.success_regions[goal_index].iter().copied());
    let cost = field.cost(here);
    if cost.is_finite() {
        Ok(cost)
    } else {
        Err(unreachable())
    }
}

/// Memory snapshots keyed by `"{scene}/{seed}"`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemoryBundle(pub BTreeMap<String, MemorySnapshot>);

pub fn run_key(scene: &str, seed: u64) -> String {
    format!("{scene}/{seed}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub preset: Preset,
    pub ablations: Vec<Ablation>,
    pub feedback: FeedbackRegime,
    pub policy: String,
    pub seeds: u64,
    pub i_max: usize,
    pub step_cap: usize,
    /// Run scene x seed jobs on the thread pool when the feature is built.
    #[serde(skip)]
    pub parallel: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let l = LoopConfig::default();
        Self {
            preset: Preset::Orion,
            ablations: Vec::new(),
            feedback: FeedbackRegime::Mixed,
            policy: "scripted".into(),
            seeds: 5,
            i_max: l.i_max,
            step_cap: l.step_cap,
            parallel: true,
        }
    }
}

impl SuiteConfig {
    pub fn agent(&self) -> AgentConfig {
        AgentConfig::new(self.preset, &self.ablations)
    }

    pub fn loop_cfg(&self) -> LoopConfig {
        LoopConfig { i_max: self.i_max, step_cap: self.step_cap, single_talk: self.feedback == FeedbackRegime::None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scope: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    #[serde(flatten)]
    pub suite: SuiteConfig,
    pub scenes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ReportConfig,
    pub aggregate: Vec<AggregateRow>,
    pub episodes: Vec<EpisodeResult>,
}

impl Report {
    pub fn overall(&self) -> Metrics {
        self.aggregate[0].metrics
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Everything one scene x seed job produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub key: String,
    pub episodes: Vec<EpisodeResult>,
    pub transcript: Vec<TranscriptRecord>,
    pub memory: MemorySnapshot,
}

#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub report: Report,
    pub memory: MemoryBundle,
    pub transcripts: Vec<(String, Vec<TranscriptRecord>)>,
}

impl SuiteOutput {
    /// JSON lines, runs in key order, each record tagged with its run.
    pub fn transcript_lines(&self) -> String {
        let mut out = String::new();
        for (key, records) in &self.transcripts {
            for r in records {
                let mut v = serde_json::to_value(r).expect("records serialize");
                v["run"] = serde_json::Value::String(key.clone());
                out.push_str(&serde_json::to_string(&v).expect("values serialize"));
                out.push('\n');
            }
        }
        out
    }
}

pub fn build_worlds(scenes: Vec<Scene>, encoder: Arc<EmbeddingProvider>) -> Result<Vec<Arc<World>>, HarnessError> {
    scenes
        .into_iter()
        .map(|s| World::new(Arc::new(s), encoder.clone(), CameraModel::default()).map(Arc::new).map_err(HarnessError::from))
        .collect()
}

/// Plays every goal of one scene in order; goals chain from the previous
/// goal's final pose and share maps, registry and memory.
pub fn run_scene(
    world: &Arc<World>,
    cfg: &SuiteConfig,
    seed: u64,
    memory: Option<MemoryMaps>,
    policy: &mut dyn Policy,
) -> Result<RunOutput, HarnessError> {
    let scene_id = world.scene.id().to_string();
    let mut run = SceneRun::new(world.clone(), cfg.agent(), cfg.loop_cfg(), seed, memory);
    let mut user = TemplateUser::new(cfg.feedback, seed);
    let mut episodes = Vec::new();
    for goal_index in 0..world.scene.goals().len() {
        let p0 = run.state.robot.pose;
        let shortest = shortest_path_length(world, p0, goal_index)?;
        let out = run.run_goal(goal_index, policy, &mut user);
        episodes.push(EpisodeResult {
            scene: scene_id.clone(),
            seed,
            goal_index,
            goal: out.goal,
            success: out.success,
            path_length: out.traveled,
            shortest_path: shortest,
            interactions: out.talks,
            steps: out.steps,
            reason: out.reason,
        });
    }
    Ok(RunOutput { key: run_key(&scene_id, seed), episodes, memory: run.state.memory.save(), transcript: run.transcript })
}

fn for_each_job<T: Send>(
    jobs: Vec<(usize, u64)>,
    parallel: bool,
    f: impl Fn((usize, u64)) -> Result<T, HarnessError> + Send + Sync,
) -> Result<Vec<T>, HarnessError> {
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return jobs.into_par_iter().map(f).collect();
    }
    let _ = parallel;
    jobs.into_iter().map(f).collect()
}

/// Runs every scene for seeds `0..cfg.seeds`. `make_policy` builds a fresh
/// policy per scene run.
pub fn run_suite(
    worlds: &[Arc<World>],
    cfg: &SuiteConfig,
    memory_in: Option<&MemoryBundle>,
    make_policy: &(dyn Fn() -> Box<dyn Policy> + Send + Sync),
) -> Result<SuiteOutput, HarnessError> {
    let jobs: Vec<(usize, u64)> = (0..worlds.len()).flat_map(|w| (0..cfg.seeds).map(move |s| (w, s))).collect();
    let outputs = for_each_job(jobs, cfg.parallel, |(w, seed)| {
        let world = &worlds[w];
        let scene = &world.scene;
        let memory = match memory_in.and_then(|b| b.0.get(&run_key(scene.id(), seed))) {
            Some(snap) => Some(MemoryMaps::load(snap, scene.rows(), scene.cols(), world.encoder.dim())?),
            None => None,
        };
        let mut policy = make_policy();
        run_scene(world, cfg, seed, memory, policy.as_mut())
    })?;
    let mut episodes = Vec::new();
    let mut memory = MemoryBundle::default();
    let mut transcripts = Vec::new();
    for out in outputs {
        episodes.extend(out.episodes);
        memory.0.insert(out.key.clone(), out.memory);
        transcripts.push((out.key, out.transcript));
    }
    let mut aggregate = vec![AggregateRow { scope: "all".into(), metrics: compute_metrics(&episodes)? }];
    for w in worlds {
        let id = w.scene.id();
        let rows: Vec<EpisodeResult> = episodes.iter().filter(|e| e.scene == id).cloned().collect();
        if !rows.is_empty() {
            aggregate.push(AggregateRow { scope: format!("scene:{id}"), metrics: compute_metrics(&rows)? });
        }
    }
    let config = ReportConfig { suite: cfg.clone(), scenes: worlds.iter().map(|w| w.scene.id().to_string()).collect() };
    Ok(SuiteOutput { report: Report { config, aggregate, episodes }, memory, transcripts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let m = metrics_from([(true, 4.0, 5.0, 1), (false, 2.0, 2.0, 3), (true, 5.0, 10.0, 5)]).unwrap();
        assert!((m.sr - 66.666_666_666).abs() < 1e-6);
        assert!((m.spl - 43.333_333_333).abs() < 1e-6);
        assert!((m.sit - 40.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_and_empty() {
        let m = metrics_from([(true, 0.0, 0.0, 1)]).unwrap();
        assert_eq!((m.sr, m.spl, m.sit), (100.0, 100.0, 100.0));
        assert!(matches!(metrics_from(std::iter::empty()), Err(HarnessError::Empty)));
    }
}
