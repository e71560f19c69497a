use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pnav_core::agent::World;
use pnav_core::embedding::EmbeddingProvider;
use pnav_core::harness::{build_worlds, run_suite, HarnessError, MemoryBundle, SuiteConfig};
use pnav_core::orchestrator::{Ablation, Policy, Preset, RemotePolicy, ScriptedPolicy};
use pnav_core::remote::{HttpChatClient, RemoteEncoder};
use pnav_core::scene::{load_scene, save_scene, Scene};
use pnav_core::scene_gen::{benchmark_suite, generate_scene, GenParams};
use pnav_core::user_sim::FeedbackRegime;

#[derive(Parser)]
#[command(name = "pnav", version, about = "Grid-world personalized object navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one scene file.
    GenScene {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = GenParams::default().rooms)]
        rooms: usize,
        #[arg(long, default_value_t = GenParams::default().objects)]
        objects: usize,
        #[arg(long, default_value_t = GenParams::default().goals)]
        goals: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the benchmark suite scenes into a directory.
    GenSuite {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every scene for a number of seeds and write a report.
    Run {
        #[command(flatten)]
        scenes: SceneArgs,
        #[arg(long, default_value = "scripted", value_parser = ["scripted", "remote"])]
        policy: String,
        /// Chat endpoint for `--policy remote`.
        #[arg(long)]
        chat_url: Option<String>,
        #[arg(long, default_value = "mixed")]
        feedback: FeedbackRegime,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Comma-separated modules to disable.
        #[arg(long, value_delimiter = ',')]
        ablate: Vec<Ablation>,
        #[arg(long, default_value = "orion")]
        preset: Preset,
        #[arg(long)]
        i_max: Option<usize>,
        #[arg(long)]
        step_cap: Option<usize>,
        #[arg(long)]
        memory_in: Option<PathBuf>,
        #[arg(long)]
        memory_out: Option<PathBuf>,
        /// JSON lines, one transcript record per line.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Serve the session API.
    Serve {
        #[command(flatten)]
        scenes: SceneArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        chat_url: Option<String>,
    },
}

#[derive(clap::Args)]
struct SceneArgs {
    /// Directory of scene files; the benchmark suite when omitted.
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Text encoder service; the synthetic encoder when omitted.
    #[arg(long)]
    encoder_url: Option<String>,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn scene_failure(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

fn load_dir(dir: &Path) -> Result<Vec<Scene>, Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .map_err(scene_failure)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(scene_failure(anyhow::anyhow!("no scene files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(scene_failure)?;
            load_scene(&text).with_context(|| format!("loading {}", p.display())).map_err(scene_failure)
        })
        .collect()
}

impl SceneArgs {
    fn worlds(&self) -> Result<Vec<Arc<World>>, Failure> {
        let scenes = match &self.scenes {
            Some(dir) => load_dir(dir)?,
            None => benchmark_suite(10).map_err(scene_failure)?,
        };
        let encoder = match &self.encoder_url {
            Some(url) => EmbeddingProvider::Remote(RemoteEncoder::connect(url, Duration::from_secs(30)).context("connecting to the encoder")?),
            None => EmbeddingProvider::default(),
        };
        build_worlds(scenes, Arc::new(encoder)).map_err(scene_failure)
    }
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenScene { seed, rooms, objects, goals, out } => {
            let params = GenParams { rooms, objects, goals, ..GenParams::default() };
            let scene = generate_scene(seed, &params).map_err(scene_failure)?;
            write(&out, &save_scene(&scene))?;
        }
        Command::GenSuite { count, out } => {
            for scene in benchmark_suite(count).map_err(scene_failure)? {
                write(&out.join(format!("{}.json", scene.id())), &save_scene(&scene))?;
            }
        }
        Command::Run {
            scenes,
            policy,
            chat_url,
            feedback,
            seeds,
            ablate,
            preset,
            i_max,
            step_cap,
            memory_in,
            memory_out,
            transcript,
            sequential,
            out,
        } => {
            let defaults = SuiteConfig::default();
            let cfg = SuiteConfig {
                preset,
                ablations: ablate,
                feedback,
                policy: policy.clone(),
                seeds,
                i_max: i_max.unwrap_or(defaults.i_max),
                step_cap: step_cap.unwrap_or(defaults.step_cap),
                parallel: !sequential,
            };
            let memory: Option<MemoryBundle> = match &memory_in {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
                }
                None => None,
            };
            let make: Box<dyn Fn() -> Box<dyn Policy> + Send + Sync> = match (policy.as_str(), chat_url) {
                ("remote", Some(url)) => Box::new(move || Box::new(RemotePolicy::new(HttpChatClient::new(&url, Duration::from_secs(120))))),
                ("remote", None) => return Err(anyhow::anyhow!("--policy remote needs --chat-url").into()),
                _ => Box::new(|| Box::new(ScriptedPolicy::new())),
            };
            let worlds = scenes.worlds()?;
            let output = run_suite(&worlds, &cfg, memory.as_ref(), &make).map_err(|e| match e {
                HarnessError::Unreachable { .. } | HarnessError::World(_) => scene_failure(e),
                other => Failure::from(anyhow::Error::from(other)),
            })?;
            write(&out, &output.report.to_json())?;
            if let Some(p) = memory_out {
                write(&p, &serde_json::to_string(&output.memory).context("serializing memory")?)?;
            }
            if let Some(p) = transcript {
                write(&p, &output.transcript_lines())?;
            }
            let m = output.report.overall();
            println!("{} episodes: SR {:.1} SPL {:.1} SIT {:.1}", m.n, m.sr, m.spl, m.sit);
        }
        Command::Serve { scenes, port, chat_url } => {
            let state = pnav_service::AppState::new(scenes.worlds()?, chat_url);
            let runtime = tokio::runtime::Runtime::new().context("starting the runtime")?;
            runtime.block_on(pnav_service::serve(state, port)).context("serving")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

