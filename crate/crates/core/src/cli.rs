//! Command-line subcommands. Every command reads a [`RunConfig`], consumes
//! upstream run directories by manifest role and writes a fresh run
//! directory finished by a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::cognitive::DriverProfile;
use crate::dataset::{self, generate_dataset, Dataset, GenerationConfig};
use crate::driver::{DriverBehavior, ScriptedDriver};
use crate::error::{Error, Result};
use crate::eval::{
    latent_report, metrics_table, read_episodes_csv, recompute_report, render_text, welch_t_test, write_cells_csv,
    write_embeddings_csv, write_episodes_csv, write_kl_csv, write_latent_summary_csv, write_summary_csv, EvalReport,
    ModelEntry,
};
use crate::intervention::{train_driver_policy, train_hmi_policy, write_curve_csv, HmiController, LearnedDriver, TrainedPolicy};
use crate::nn::{Checkpoint, ContextEncoder};
use crate::ppo::{ActorCritic, PolicyNet};
use crate::run::{read_artifact, read_checkpoint, Behavior, ContextSource, Input, Manifest, RunConfig, RunDir, Stream};
use crate::seeding::derive_seed;
use crate::traits::{train, RoundStats, TraitModel};

#[derive(Debug, Parser)]
#[command(name = "hmiway", version, about = "Driver-trait learning and personalized HMI intervention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run config, or a manifest.json whose config snapshot is reused.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override, `key.path=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// New run directory for the outputs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record demonstrations of every driver type.
    GenData {
        #[command(flatten)]
        common: Common,
        /// `train-driver` run supplying the demonstrators when data.behavior is "trained".
        #[arg(long)]
        drivers: Option<PathBuf>,
    },
    /// Learn the latent trait encoder, reward and generator.
    TrainTraits {
        #[command(flatten)]
        common: Common,
        /// `gen-data` run.
        #[arg(long)]
        data: PathBuf,
    },
    /// Train one driver policy per driver type on the driving reward.
    TrainDriver {
        #[command(flatten)]
        common: Common,
    },
    /// Train one HMI policy per driver type against its frozen driver.
    TrainHmi {
        #[command(flatten)]
        common: Common,
        /// `train-driver` run.
        #[arg(long)]
        drivers: PathBuf,
        /// `train-traits` run, required when hmi.context is "latent".
        #[arg(long)]
        traits: Option<PathBuf>,
        /// `gen-data` run, required when hmi.context is "latent".
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate personalized, average and no-alert HMIs on every driver.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        drivers: PathBuf,
        #[arg(long)]
        hmi: PathBuf,
        /// Overrides eval.episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Embed every driver's pools and measure latent separation.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        traits: PathBuf,
    },
    /// Recompute an evaluation from its episode logs and add significance tests.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eval: PathBuf,
        /// Optional `embed` run whose summary is appended.
        #[arg(long)]
        embed: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::TrainTraits { .. } => "train-traits",
            Command::TrainDriver { .. } => "train-driver",
            Command::TrainHmi { .. } => "train-hmi",
            Command::Eval { .. } => "eval",
            Command::Embed { .. } => "embed",
            Command::Report { .. } => "report",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::GenData { common, .. }
            | Command::TrainTraits { common, .. }
            | Command::TrainDriver { common }
            | Command::TrainHmi { common, .. }
            | Command::Eval { common, .. }
            | Command::Embed { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

/// Name of the personalized HMI trained for `driver`.
pub fn hmi_model_name(driver: &str) -> String {
    format!("HMI-{driver}")
}

pub const AVG_HMI: &str = "AvgHMI";
pub const NO_HMI: &str = "NoHMI";

fn load_config(common: &Common, extra: &[String]) -> Result<RunConfig> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    overrides.extend_from_slice(extra);
    match &common.config {
        Some(path) => RunConfig::load(path, &overrides),
        None => {
            let mut table = toml::Table::new();
            for o in &overrides {
                crate::run::apply_override(&mut table, o)?;
            }
            let config: RunConfig =
                table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
            config.validate()?;
            Ok(config)
        }
    }
}

/// Output context shared by the commands.
struct Session {
    command: String,
    config: RunConfig,
    run: RunDir,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<Input>,
}

impl Session {
    fn finish(self, summary: serde_json::Value) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            artifacts: self.run.artifacts().to_vec(),
            summary,
        };
        self.run.finish(manifest)
    }
}

/// Validates the config, creates the run directory and dispatches.
pub fn run(cli: &Cli) -> Result<()> {
    let common = cli.command.common();
    let extra = match &cli.command {
        Command::Eval { episodes: Some(n), .. } => vec![format!("eval.episodes={n}")],
        _ => Vec::new(),
    };
    let config = load_config(common, &extra)?;
    let run = RunDir::create(&common.out)?;
    let mut s = Session {
        command: cli.command.name().into(),
        config,
        run,
        seeds: BTreeMap::new(),
        inputs: Vec::new(),
    };
    s.seeds.insert("master".into(), s.config.seed);
    let snapshot = s.config.to_toml()?;
    s.run.write("config", "config.toml", snapshot.as_bytes())?;
    match &cli.command {
        Command::GenData { drivers, .. } => gen_data(s, drivers.as_deref()),
        Command::TrainTraits { data, .. } => train_traits(s, data),
        Command::TrainDriver { .. } => train_drivers(s),
        Command::TrainHmi { drivers, traits, data, .. } => train_hmis(s, drivers, traits.as_deref(), data.as_deref()),
        Command::Eval { drivers, hmi, .. } => eval(s, drivers, hmi),
        Command::Embed { data, traits, .. } => embed(s, data, traits),
        Command::Report { eval, embed, .. } => report(s, eval, embed.as_deref()),
    }
}

fn load_dataset(dir: &Path, inputs: &mut Vec<Input>) -> Result<Dataset> {
    let bytes = read_artifact(dir, "dataset", inputs)?;
    let tmp = std::env::temp_dir().join(format!("hmiway-{}-{}.bin", std::process::id(), &crate::run::sha256_hex(&bytes)[..16]));
    std::fs::write(&tmp, &bytes)?;
    let result = dataset::load(&tmp);
    let _ = std::fs::remove_file(&tmp);
    result
}

fn load_policy(dir: &Path, role: &str, inputs: &mut Vec<Input>) -> Result<(PolicyNet, Checkpoint)> {
    let ck = read_checkpoint(dir, role, inputs)?;
    Ok((ActorCritic::from_checkpoint(&ck)?.policy, ck))
}

fn gen_data(mut s: Session, drivers: Option<&Path>) -> Result<()> {
    let profiles = s.config.population()?;
    let scenario = s.config.scenario.clone();
    let mut policies = BTreeMap::new();
    if s.config.data.behavior == Behavior::Trained {
        let dir = drivers.ok_or_else(|| Error::Config("data.behavior = \"trained\" needs --drivers".into()))?;
        for p in &profiles {
            policies.insert(p.driver_id, load_policy(dir, &format!("driver/{}", p.name), &mut s.inputs)?.0);
        }
    }
    let seed = s.config.seed_for(Stream::Data);
    s.seeds.insert("data".into(), seed);
    let gen = GenerationConfig {
        scenario: scenario.clone(),
        steps_per_type: s.config.data.steps_per_type,
        labeled_fraction: s.config.data.labeled_fraction,
        alerts: s.config.data.alerts,
        seed,
    };
    let mut source = |p: &DriverProfile| -> Result<Box<dyn DriverBehavior>> {
        match policies.get(&p.driver_id) {
            Some(policy) => Ok(Box::new(LearnedDriver { policy: policy.clone() })),
            None => Ok(Box::new(ScriptedDriver::new(scenario.lidar, scenario.kinematics.max_speed, scenario.geometry.lane_count))),
        }
    };
    let data = generate_dataset(&profiles, &gen, &mut source)?;
    let file = s.run.path().join("dataset.bin");
    dataset::save(&data, &file)?;
    let bytes = std::fs::read(&file)?;
    std::fs::remove_file(&file)?;
    s.run.write("dataset", "dataset.bin", &bytes)?;

    let mut rows = Vec::new();
    for p in &profiles {
        let trajectories: Vec<_> = data.trajectories.iter().filter(|t| t.driver_id == p.driver_id).collect();
        rows.push(json!({
            "driver_id": p.driver_id,
            "name": p.name,
            "trajectories": trajectories.len(),
            "steps": trajectories.iter().map(|t| t.len()).sum::<usize>(),
            "labeled": trajectories.iter().filter(|t| t.is_labeled()).count(),
        }));
    }
    s.run.write_with("dataset-summary", "dataset_summary.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["driver_id", "name", "trajectories", "steps", "labeled"]).map_err(crate::intervention::csv_error)?;
        for r in &rows {
            w.write_record(["driver_id", "name", "trajectories", "steps", "labeled"].map(|k| match &r[k] {
                serde_json::Value::String(v) => v.clone(),
                v => v.to_string(),
            }))
            .map_err(crate::intervention::csv_error)?;
        }
        w.flush()?;
        Ok(())
    })?;
    s.finish(json!({ "drivers": rows, "transitions": data.transition_count() }))
}

fn save_trained(s: &mut Session, kind: &str, name: &str, trained: &TrainedPolicy, context: Option<&[f64]>) -> Result<()> {
    let mut ck = trained.model.to_checkpoint()?;
    if let Some(c) = context {
        ck.insert_extra("context", &c.to_vec())?;
    }
    s.run.write_checkpoint(&format!("{kind}/{name}"), &format!("{kind}-{name}"), &ck)?;
    s.run.write_with(&format!("curve/{kind}/{name}"), &format!("curves/{kind}-{name}.csv"), |buf| {
        write_curve_csv(&trained.curve, buf)
    })?;
    Ok(())
}

fn with_average(config: &RunConfig) -> Result<Vec<DriverProfile>> {
    let mut profiles = config.population()?;
    let avg = config.average()?;
    if !profiles.iter().any(|p| p.driver_id == avg.driver_id) {
        profiles.push(avg);
    }
    Ok(profiles)
}

fn train_drivers(mut s: Session) -> Result<()> {
    let base = s.config.seed_for(Stream::Driver);
    let mut final_returns = serde_json::Map::new();
    for p in with_average(&s.config)? {
        let seed = derive_seed(base, &[u64::from(p.driver_id)]);
        s.seeds.insert(format!("driver/{}", p.name), seed);
        log::info!("training driver policy for {}", p.name);
        let trained = train_driver_policy(&p, &s.config.scenario, &s.config.driver, seed)?;
        final_returns.insert(p.name.clone(), json!(trained.curve.last().map(|r| r.mean_return)));
        save_trained(&mut s, "driver", &p.name, &trained, None)?;
    }
    s.finish(json!({ "final_mean_return": final_returns }))
}

/// Mean of the pooled latent means of one driver.
fn latent_context(data: &Dataset, encoder: &ContextEncoder, model: &TraitModel, config: &RunConfig, driver_id: u32) -> Result<Vec<f64>> {
    let seed = config.seed_for(Stream::Embed);
    let e = crate::traits::embed_driver(
        data,
        driver_id,
        encoder,
        config.embed.pools_per_driver,
        model.config.pool_size,
        model.config.window_steps,
        seed,
    )?;
    let mut mean = vec![0.0; encoder.latent_dim()];
    for t in &e {
        for (m, x) in mean.iter_mut().zip(&t.mean) {
            *m += x / e.len() as f64;
        }
    }
    Ok(mean)
}

fn train_hmis(mut s: Session, drivers: &Path, traits: Option<&Path>, data: Option<&Path>) -> Result<()> {
    let profiles = with_average(&s.config)?;
    let population = s.config.population()?;
    let mut contexts: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    match s.config.hmi.context {
        ContextSource::Profile => {
            for p in &profiles {
                contexts.insert(p.driver_id, p.features().to_vec());
            }
        }
        ContextSource::Latent => {
            let (traits, data) = traits
                .zip(data)
                .ok_or_else(|| Error::Config("hmi.context = \"latent\" needs --traits and --data".into()))?;
            let model = TraitModel::from_checkpoint(&read_checkpoint(traits, "traits", &mut s.inputs)?)?;
            let dataset = load_dataset(data, &mut s.inputs)?;
            for p in &population {
                contexts.insert(p.driver_id, latent_context(&dataset, &model.encoder, &model, &s.config, p.driver_id)?);
            }
            // the average driver is described by the population's mean latent
            let dim = model.encoder.latent_dim();
            let avg: Vec<f64> = (0..dim)
                .map(|k| population.iter().map(|p| contexts[&p.driver_id][k]).sum::<f64>() / population.len() as f64)
                .collect();
            let avg_id = s.config.average()?.driver_id;
            contexts.entry(avg_id).or_insert(avg);
        }
    }
    let base = s.config.seed_for(Stream::Hmi);
    let mut summary = serde_json::Map::new();
    for p in &profiles {
        let (driver, _) = load_policy(drivers, &format!("driver/{}", p.name), &mut s.inputs)?;
        let seed = derive_seed(base, &[u64::from(p.driver_id)]);
        s.seeds.insert(format!("hmi/{}", p.name), seed);
        log::info!("training HMI policy for {}", p.name);
        let context = contexts[&p.driver_id].clone();
        let trained = train_hmi_policy(&driver, p, context.clone(), &s.config.scenario, &s.config.hmi.stage, seed)?;
        summary.insert(p.name.clone(), json!(trained.curve.last().map(|r| r.mean_return)));
        save_trained(&mut s, "hmi", &p.name, &trained, Some(&context))?;
    }
    s.finish(json!({ "final_mean_return": summary }))
}

fn round_row(r: &RoundStats) -> Vec<String> {
    let l = &r.losses;
    [r.round as f64, r.steps as f64, l.l1, l.l2, l.l3, l.l4, l.total, r.generator_reward, r.generator_entropy, r.approx_kl]
        .iter()
        .enumerate()
        .map(|(i, x)| if i < 2 { (*x as usize).to_string() } else { format!("{x}") })
        .collect()
}

fn train_traits(mut s: Session, data: &Path) -> Result<()> {
    let dataset = load_dataset(data, &mut s.inputs)?;
    let seed = s.config.seed_for(Stream::Traits);
    s.seeds.insert("traits".into(), seed);
    let mut model = TraitModel::new(dataset.env_spec.sensor_obs_dim, &s.config.traits, seed)?;
    let every = s.config.checkpoint_every;
    let total = s.config.traits.total_steps;
    let run = &mut s.run;
    let history = train(&mut model, &dataset, &s.config.scenario, seed, |m, _| {
        if m.steps >= total {
            run.write_checkpoint("traits", "traits-final", &m.to_checkpoint()?)?;
        } else if m.round % every == 0 {
            run.write_checkpoint(&format!("traits/round-{:05}", m.round), &format!("traits-round-{:05}", m.round), &m.to_checkpoint()?)?;
        }
        Ok(())
    })?;
    s.run.write_with("rounds", "rounds.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["round", "steps", "l1", "l2", "l3", "l4", "total", "generator_reward", "generator_entropy", "approx_kl"])
            .map_err(crate::intervention::csv_error)?;
        for r in &history {
            w.write_record(round_row(r)).map_err(crate::intervention::csv_error)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let last = history.last().map(|r| r.losses.clone());
    s.finish(json!({ "rounds": history.len(), "steps": model.steps, "final_losses": last }))
}

fn embed(mut s: Session, data: &Path, traits: &Path) -> Result<()> {
    let dataset = load_dataset(data, &mut s.inputs)?;
    let model = TraitModel::from_checkpoint(&read_checkpoint(traits, "traits", &mut s.inputs)?)?;
    let seed = s.config.seed_for(Stream::Embed);
    s.seeds.insert("embed".into(), seed);
    let report = latent_report(
        &dataset,
        &model.encoder,
        s.config.embed.pools_per_driver,
        model.config.pool_size,
        model.config.window_steps,
        s.config.embed.probe_train_fraction,
        seed,
    )?;
    s.run.write_with("embeddings", "embeddings.csv", |b| write_embeddings_csv(&report.embeddings, b))?;
    s.run.write_with("cluster-kl", "cluster_kl.csv", |b| write_kl_csv(&report, b))?;
    s.run.write_with("latent-summary", "latent_summary.csv", |b| write_latent_summary_csv(&report, b))?;
    s.finish(json!({
        "average_pairwise_kl": report.average_kl,
        "distraction_probe": report.distraction_probe,
        "preference_probe": report.preference_probe,
    }))
}

fn eval(mut s: Session, drivers: &Path, hmi: &Path) -> Result<()> {
    let population = s.config.population()?;
    let avg = s.config.average()?;
    let mut pairs = Vec::new();
    for p in &population {
        pairs.push((p.clone(), load_policy(drivers, &format!("driver/{}", p.name), &mut s.inputs)?.0));
    }
    let mut models = Vec::new();
    let load_hmi = |name: &str, s: &mut Session| -> Result<HmiController> {
        let (policy, ck) = load_policy(hmi, &format!("hmi/{name}"), &mut s.inputs)?;
        Ok(HmiController::Learned { policy, context: ck.extra("context")? })
    };
    for p in &population {
        models.push(ModelEntry { name: hmi_model_name(&p.name), hmi: load_hmi(&p.name, &mut s)?, own_driver: Some(p.name.clone()) });
    }
    models.push(ModelEntry { name: AVG_HMI.into(), hmi: load_hmi(&avg.name, &mut s)?, own_driver: None });
    models.push(ModelEntry { name: NO_HMI.into(), hmi: HmiController::NoHmi, own_driver: None });

    let seed = s.config.seed_for(Stream::Eval);
    s.seeds.insert("eval".into(), seed);
    let (report, logs) =
        metrics_table(&models, &pairs, &s.config.scenario, s.config.eval.episodes, seed, s.config.eval.full_matrix)?;
    let report_json = serde_json::to_vec_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    s.run.write("report", "report.json", &report_json)?;
    s.run.write_with("cells", "cells.csv", |b| write_cells_csv(&report, b))?;
    s.run.write_with("summary", "summary.csv", |b| write_summary_csv(&report, b))?;
    s.run.write_with("episodes", "episodes.csv", |b| write_episodes_csv(&logs, b))?;
    let text = render_text(&report);
    s.run.write("table", "table.txt", text.as_bytes())?;
    print!("{text}");
    let episodes = s.config.eval.episodes;
    s.finish(json!({ "summaries": report.summaries, "episodes": episodes }))
}

/// Welch tests of each personalized model against the baselines on its own driver.
fn significance(report: &EvalReport, logs: &[crate::eval::EpisodeLog]) -> Result<Vec<[String; 6]>> {
    let distraction = |model: &str, driver: &str| -> Vec<f64> {
        logs.iter().filter(|l| l.model == model && l.driver == driver).map(|l| l.distraction_return).collect()
    };
    let mut rows = Vec::new();
    for d in &report.drivers {
        let own = distraction(&hmi_model_name(d), d);
        if own.len() < 2 {
            continue;
        }
        for baseline in [AVG_HMI, NO_HMI] {
            let other = distraction(baseline, d);
            if other.len() < 2 {
                continue;
            }
            let t = welch_t_test(&own, &other)?;
            let diff = own.iter().sum::<f64>() / own.len() as f64 - other.iter().sum::<f64>() / other.len() as f64;
            rows.push([
                d.clone(),
                hmi_model_name(d),
                baseline.to_string(),
                format!("{diff}"),
                format!("{}", t.t),
                format!("{}", t.p_value),
            ]);
        }
    }
    Ok(rows)
}

fn report(mut s: Session, eval_dir: &Path, embed_dir: Option<&Path>) -> Result<()> {
    let report: EvalReport = serde_json::from_slice(&read_artifact(eval_dir, "report", &mut s.inputs)?)
        .map_err(|e| Error::Schema { line: e.line(), message: e.to_string() })?;
    let logs = read_episodes_csv(&read_artifact(eval_dir, "episodes", &mut s.inputs)?[..])?;
    let cells = read_artifact(eval_dir, "cells", &mut s.inputs)?;
    let recomputed = recompute_report(&report, &logs)?;
    let mut recomputed_cells = Vec::new();
    write_cells_csv(&recomputed, &mut recomputed_cells)?;
    if recomputed_cells != cells || recomputed.summaries != report.summaries {
        return Err(Error::Diverged("report does not match the recomputation from episode logs".into()));
    }
    let tests = significance(&recomputed, &logs)?;
    s.run.write_with("significance", "significance.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["driver", "model", "baseline", "distraction_difference", "t", "p_value"])
            .map_err(crate::intervention::csv_error)?;
        for r in &tests {
            w.write_record(r).map_err(crate::intervention::csv_error)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut text = render_text(&recomputed);
    text.push_str("\nDistraction reward, personalized vs baseline (Welch t-test)\n");
    for r in &tests {
        text.push_str(&format!("{:<10}{:<14}{:<10}diff {:>9.1}  p {:.3e}\n", r[0], r[1], r[2], r[3].parse::<f64>().unwrap_or(f64::NAN), r[5].parse::<f64>().unwrap_or(f64::NAN)));
    }
    let mut latent = serde_json::Value::Null;
    if let Some(dir) = embed_dir {
        let m = Manifest::load(dir)?;
        read_artifact(dir, "latent-summary", &mut s.inputs)?;
        text.push_str(&format!(
            "\nLatent separation: average pairwise KL {:.2}\n",
            m.summary["average_pairwise_kl"].as_f64().unwrap_or(f64::NAN)
        ));
        for probe in ["distraction_probe", "preference_probe"] {
            text.push_str(&format!(
                "{probe}: accuracy {:.3} (chance {:.3})\n",
                m.summary[probe]["accuracy"].as_f64().unwrap_or(f64::NAN),
                m.summary[probe]["chance"].as_f64().unwrap_or(f64::NAN)
            ));
        }
        latent = m.summary;
    }
    s.run.write("report-text", "report.txt", text.as_bytes())?;
    print!("{text}");
    s.finish(json!({ "verified_cells": recomputed.cells.len(), "summaries": recomputed.summaries, "latent": latent }))
}
