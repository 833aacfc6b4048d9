use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use dasmr_core::agent::LogRecord;
use dasmr_core::environment::{DasmrEnv, Point};
use dasmr_core::eval::{run_episode, run_eval, EpisodeResult, EvalMetrics, GreedyAgent, SeedMode};
use dasmr_core::rng::{substream, ENV_STREAM};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::{plot, trace};

pub const LOG_FILE: &str = "log.ndjson";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub total_steps: Option<u64>,
    pub out: Option<PathBuf>,
    /// Checkpoint to continue from instead of starting fresh.
    pub resume: Option<PathBuf>,
}

pub fn checkpoint_path(out: &Path, env_steps: u64) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("step_{env_steps:09}.ckpt"))
}

#[derive(Serialize)]
struct LogLine {
    episode: u64,
    env_steps: u64,
    episode_return: f64,
    episode_length: u64,
    rolling_success_rate: f64,
    critic_loss: Option<f64>,
    actor_loss: Option<f64>,
    alpha_loss: Option<f64>,
    alpha: f64,
    critic_updates: u64,
    actor_updates: u64,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn log_line(r: &LogRecord) -> String {
    serde_json::to_string(&LogLine {
        episode: r.episode,
        env_steps: r.env_steps,
        episode_return: r.episode_return,
        episode_length: r.episode_length,
        rolling_success_rate: r.rolling_success_rate,
        critic_loss: finite(r.critic_loss),
        actor_loss: finite(r.actor_loss),
        alpha_loss: finite(r.alpha_loss),
        alpha: r.alpha,
        critic_updates: r.critic_updates,
        actor_updates: r.actor_updates,
    })
    .expect("log records serialize")
}

/// Keeps the log lines written up to `env_steps`, dropping anything a
/// crashed or longer run appended afterwards.
fn truncate_log(path: &Path, env_steps: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut kept = String::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let v: serde_json::Value = serde_json::from_str(&line).with_context(|| format!("malformed log line in {}", path.display()))?;
        if v["env_steps"].as_u64().is_some_and(|s| s <= env_steps) {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    fs::write(path, kept)?;
    Ok(())
}

/// Trains until the configured step budget and returns the run directory.
pub fn train(args: &TrainArgs) -> Result<PathBuf> {
    let (mut config, resumed) = match &args.resume {
        Some(path) => {
            if args.config.is_some() {
                bail!("--config cannot be combined with --resume; the checkpoint carries its config");
            }
            let (config, trainer) =
                checkpoint::load(path).with_context(|| format!("cannot resume from {}", path.display()))?;
            if args.seed.is_some_and(|s| s != config.agent.seed) {
                bail!("--seed differs from the seed stored in {}", path.display());
            }
            (config, Some(trainer))
        }
        None => {
            let mut config = match &args.config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            if let Some(seed) = args.seed {
                config.agent.seed = seed;
            }
            (config, None)
        }
    };
    if let Some(steps) = args.total_steps {
        config.agent.total_steps = steps;
    }
    if let Some(out) = &args.out {
        config.run.out_dir = out.clone();
    }
    config.validate()?;
    let mut trainer = match resumed {
        Some(t) => t,
        None => checkpoint::new_trainer(&config)?,
    };
    trainer.agent.config.total_steps = config.agent.total_steps;

    let out = config.run.out_dir.clone();
    fs::create_dir_all(out.join(CHECKPOINT_DIR)).with_context(|| format!("cannot create {}", out.display()))?;
    fs::write(out.join(CONFIG_SNAPSHOT), config.to_toml())?;
    let log_path = out.join(LOG_FILE);
    let log = if args.resume.is_some() {
        truncate_log(&log_path, trainer.env_steps)?;
        OpenOptions::new().create(true).append(true).open(&log_path)?
    } else {
        File::create(&log_path)?
    };
    let mut log = BufWriter::new(log);

    let total = config.agent.total_steps;
    let every = config.run.checkpoint_every;
    while trainer.env_steps < total {
        if let Some(record) = trainer.step()? {
            writeln!(log, "{}", log_line(&record))?;
            log.flush()?;
            println!(
                "episode {:>6}  steps {:>8}  return {:>9.2}  success {:>5.1}%  alpha {:.4}",
                record.episode,
                record.env_steps,
                record.episode_return,
                100.0 * record.rolling_success_rate,
                record.alpha
            );
        }
        if every > 0 && trainer.env_steps % every == 0 {
            checkpoint::save(&checkpoint_path(&out, trainer.env_steps), &config, &trainer)?;
        }
    }
    log.flush()?;
    checkpoint::save(&out.join(FINAL_CHECKPOINT), &config, &trainer)?;
    Ok(out)
}

#[derive(Serialize)]
struct EpisodeReport {
    goal: Point,
    success: bool,
    final_error: f64,
    path_length: f64,
    shortest_path: f64,
    steps: usize,
    trace: String,
}

#[derive(Serialize)]
struct FailureError {
    mean: f64,
    sigma: f64,
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: String,
    seed_mode: &'static str,
    seed: u64,
    episodes: usize,
    success_rate: f64,
    average_error: f64,
    sigma: f64,
    failure_error: Option<FailureError>,
    spl: f64,
    results: Vec<EpisodeReport>,
}

fn summary(m: &EvalMetrics) -> String {
    let failures = match m.failure_error {
        Some((mean, sigma)) => format!("{mean:.3} ({sigma:.3}) m"),
        None => "none".into(),
    };
    format!(
        "{} episodes ({}): SR {:.1}%  AE {:.3} ({:.3}) m  failure AE {failures}  SPL {:.3}",
        m.episodes,
        m.seed_mode.name(),
        m.success_rate,
        m.average_error,
        m.sigma,
        m.spl
    )
}

/// Evaluates the deterministic policy of a checkpoint. Writes `report.json`
/// and one trace per episode under `out`, by default next to the checkpoint.
/// The episode count defaults to the stored config's `eval.episodes`.
pub fn eval(
    ckpt: &Path,
    episodes: Option<usize>,
    seed_mode: SeedMode,
    out: Option<&Path>,
) -> Result<(EvalMetrics, PathBuf)> {
    let (config, trainer) = checkpoint::load(ckpt).with_context(|| format!("cannot load {}", ckpt.display()))?;
    let episodes = episodes.unwrap_or(config.eval.episodes);
    let world = config.world();
    let seed = config.agent.seed;
    let policy = GreedyAgent(&trainer.agent);
    let (metrics, results) = run_eval(&policy, episodes, seed_mode, seed, world, config.robot())?;

    let out = match out {
        Some(o) => o.to_owned(),
        None => ckpt.parent().unwrap_or(Path::new(".")).join(format!("eval_{}", seed_mode.name())),
    };
    let traces = out.join("traces");
    fs::create_dir_all(&traces).with_context(|| format!("cannot create {}", traces.display()))?;
    let mut reports = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        let name = format!("episode_{i:04}.csv");
        trace::write(&traces.join(&name), r, &world)?;
        reports.push(EpisodeReport {
            goal: r.goal,
            success: r.success,
            final_error: r.final_error,
            path_length: r.path_length,
            shortest_path: r.shortest_path,
            steps: r.steps,
            trace: format!("traces/{name}"),
        });
    }
    let report = EvalReport {
        checkpoint: ckpt.display().to_string(),
        seed_mode: seed_mode.name(),
        seed: seed_mode.goal_seed(seed),
        episodes: metrics.episodes,
        success_rate: metrics.success_rate,
        average_error: metrics.average_error,
        sigma: metrics.sigma,
        failure_error: metrics.failure_error.map(|(mean, sigma)| FailureError { mean, sigma }),
        spl: metrics.spl,
        results: reports,
    };
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    println!("{}", summary(&metrics));
    Ok((metrics, out))
}

/// Drives the deterministic policy toward one goal and writes its trace.
pub fn rollout(ckpt: &Path, goal: Point, trace_path: &Path) -> Result<EpisodeResult> {
    let (config, trainer) = checkpoint::load(ckpt).with_context(|| format!("cannot load {}", ckpt.display()))?;
    let world = config.world();
    if !goal.iter().all(|v| v.is_finite()) || !world.in_workspace(goal) {
        bail!("goal ({}, {}) is outside the workspace (half-width {} m)", goal[0], goal[1], world.workspace_half);
    }
    let mut env = DasmrEnv::new(world, config.robot(), substream(config.agent.seed, ENV_STREAM))?;
    let result = run_episode(&mut env, &GreedyAgent(&trainer.agent), goal)?;
    trace::write(trace_path, &result, &world).with_context(|| format!("cannot write {}", trace_path.display()))?;
    println!(
        "success={} final_error={:.4} path_length={:.4} steps={}",
        result.success, result.final_error, result.path_length, result.steps
    );
    Ok(result)
}

pub fn plot(trace_path: &Path, out: &Path) -> Result<()> {
    let t = trace::read(trace_path).with_context(|| format!("{}", trace_path.display()))?;
    fs::write(out, plot::svg(&t)).with_context(|| format!("cannot write {}", out.display()))?;
    Ok(())
}
