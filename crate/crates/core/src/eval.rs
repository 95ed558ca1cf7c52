//! Batch evaluation of driver/HMI pairs, metric tables and latent-space
//! separation statistics.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::actions::{AiAction, HumanAction};
use crate::cognitive::{DriverProfile, Level};
use crate::dataset::Dataset;
use crate::env::{HmiwayEnv, ScenarioConfig};
use crate::error::{Error, Result};
use crate::intervention::{csv_error, HmiController};
use crate::nn::ContextEncoder;
use crate::ppo::PolicyNet;
use crate::seeding::{derive_seed, rng_for};
use crate::traits::{embed_driver, LatentTrait};

/// Per-episode record; every reported statistic is recomputable from these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub model: String,
    pub driver: String,
    pub episode: usize,
    pub seed: u64,
    pub steps: u32,
    pub high_speed_return: f64,
    pub distraction_return: f64,
    pub total_return: f64,
    pub crashed: bool,
    pub alerts: u32,
    pub attentive_steps: u32,
    pub alerts_while_attentive: u32,
}

/// Statistics of one (model, driver) cell. Standard deviations use the
/// unbiased sample estimator (zero for a single episode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub model: String,
    pub driver: String,
    pub episodes: usize,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub distraction_mean: f64,
    pub distraction_std: f64,
    pub crash_rate: f64,
    pub alert_rate: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl CellStats {
    pub fn from_logs(model: &str, driver: &str, logs: &[EpisodeLog]) -> Result<Self> {
        if logs.is_empty() {
            return Err(Error::InsufficientData(format!("no episodes for {model} on {driver}")));
        }
        let speed: Vec<f64> = logs.iter().map(|l| l.high_speed_return).collect();
        let dist: Vec<f64> = logs.iter().map(|l| l.distraction_return).collect();
        let (speed_mean, speed_std) = mean_std(&speed);
        let (distraction_mean, distraction_std) = mean_std(&dist);
        let n = logs.len() as f64;
        let steps: u32 = logs.iter().map(|l| l.steps).sum();
        let alerts: u32 = logs.iter().map(|l| l.alerts).sum();
        Ok(Self {
            model: model.into(),
            driver: driver.into(),
            episodes: logs.len(),
            speed_mean,
            speed_std,
            distraction_mean,
            distraction_std,
            crash_rate: logs.iter().filter(|l| l.crashed).count() as f64 / n,
            alert_rate: f64::from(alerts) / f64::from(steps.max(1)),
        })
    }
}

/// Runs `n_episodes` with the driver sampling its actions and the HMI acting
/// through `hmi`. Episode `k` uses seed `derive_seed(seed, [k])` regardless
/// of the model, so different models face the same traffic.
pub fn evaluate(
    model_name: &str,
    driver: &PolicyNet,
    hmi: &HmiController,
    profile: &DriverProfile,
    scenario: &ScenarioConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<(CellStats, Vec<EpisodeLog>)> {
    if n_episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut env = HmiwayEnv::with_context(scenario.clone(), profile.clone(), hmi.context_for(profile))?;
    let spec = env.spec();
    if driver.obs_dim() != spec.driver_obs_dim || driver.action_count() != HumanAction::COUNT {
        return Err(Error::WidthMismatch { expected: spec.driver_obs_dim, got: driver.obs_dim() });
    }
    if let HmiController::Learned { policy, .. } = hmi {
        if policy.obs_dim() != spec.hmi_obs_dim + HumanAction::COUNT || policy.action_count() != AiAction::COUNT {
            return Err(Error::WidthMismatch { expected: spec.hmi_obs_dim + HumanAction::COUNT, got: policy.obs_dim() });
        }
    }
    let mut logs = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes {
        let ep_seed = derive_seed(seed, &[episode as u64]);
        let mut views = env.reset(ep_seed)?;
        let mut rng = rng_for(ep_seed, &[2]);
        let mut log = EpisodeLog {
            model: model_name.into(),
            driver: profile.name.clone(),
            episode,
            seed: ep_seed,
            steps: 0,
            high_speed_return: 0.0,
            distraction_return: 0.0,
            total_return: 0.0,
            crashed: false,
            alerts: 0,
            attentive_steps: 0,
            alerts_while_attentive: 0,
        };
        loop {
            let (a, _) = driver.sample(&views.driver, &mut rng)?;
            let human = HumanAction::from_index(a).expect("width checked");
            let attentive = !env.cognitive().distracted;
            let ai = hmi.act(&views.hmi, human)?;
            let r = env.step(human, ai)?;
            log.steps += 1;
            log.high_speed_return += r.rewards.speed;
            log.distraction_return += r.rewards.distraction;
            log.total_return += r.rewards.total();
            if attentive {
                log.attentive_steps += 1;
            }
            if ai == AiAction::Alert {
                log.alerts += 1;
                if attentive {
                    log.alerts_while_attentive += 1;
                }
            }
            views = r.views;
            if r.done {
                log.crashed = r.info.crashed;
                break;
            }
        }
        logs.push(log);
    }
    Ok((CellStats::from_logs(model_name, &profile.name, &logs)?, logs))
}

/// A named HMI model; `own_driver` restricts evaluation to one driver.
#[derive(Debug, Clone)]
pub struct ModelEntry {
    pub name: String,
    pub hmi: HmiController,
    pub own_driver: Option<String>,
}

/// Mean of the per-driver cells of each model group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub cells: usize,
    pub speed_mean: f64,
    pub distraction_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<String>,
    pub drivers: Vec<String>,
    pub cells: Vec<CellStats>,
    pub summaries: Vec<SummaryRow>,
}

impl EvalReport {
    pub fn cell(&self, model: &str, driver: &str) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.model == model && c.driver == driver)
    }

    pub fn summary(&self, group: &str) -> Option<&SummaryRow> {
        self.summaries.iter().find(|s| s.group == group)
    }
}

/// Name of the summary group formed by all driver-specific models.
pub const PERSONALIZED: &str = "personalized";

/// Evaluates every model on its drivers. Driver-specific models populate
/// only their own driver's cell unless `full_matrix` is set; they are
/// summarized together as [`PERSONALIZED`], baselines individually.
pub fn metrics_table(
    models: &[ModelEntry],
    drivers: &[(DriverProfile, PolicyNet)],
    scenario: &ScenarioConfig,
    n_episodes: usize,
    seed: u64,
    full_matrix: bool,
) -> Result<(EvalReport, Vec<EpisodeLog>)> {
    let mut cells = Vec::new();
    let mut logs = Vec::new();
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut group_order = Vec::new();
    for m in models {
        for (profile, policy) in drivers {
            let own = m.own_driver.as_deref().map(|d| d.eq_ignore_ascii_case(&profile.name));
            if own == Some(false) && !full_matrix {
                continue;
            }
            let seed = derive_seed(seed, &[u64::from(profile.driver_id)]);
            let (cell, mut ep) = evaluate(&m.name, policy, &m.hmi, profile, scenario, n_episodes, seed)?;
            let group = match own {
                Some(true) => Some(PERSONALIZED.to_string()),
                Some(false) => None,
                None => Some(m.name.clone()),
            };
            if let Some(g) = group {
                if !groups.contains_key(&g) {
                    group_order.push(g.clone());
                }
                groups.entry(g).or_default().push((cell.speed_mean, cell.distraction_mean));
            }
            cells.push(cell);
            logs.append(&mut ep);
        }
    }
    if models.iter().any(|m| m.own_driver.is_some()) {
        if let Some(pos) = group_order.iter().position(|g| g == PERSONALIZED) {
            let g = group_order.remove(pos);
            group_order.insert(0, g);
        }
    }
    let summaries = group_order
        .into_iter()
        .map(|g| {
            let vals = &groups[&g];
            let n = vals.len() as f64;
            SummaryRow {
                cells: vals.len(),
                speed_mean: vals.iter().map(|v| v.0).sum::<f64>() / n,
                distraction_mean: vals.iter().map(|v| v.1).sum::<f64>() / n,
                group: g,
            }
        })
        .collect();
    let report = EvalReport {
        models: models.iter().map(|m| m.name.clone()).collect(),
        drivers: drivers.iter().map(|d| d.0.name.clone()).collect(),
        cells,
        summaries,
    };
    Ok((report, logs))
}

/// Recomputes cells and summaries from raw logs.
pub fn recompute_report(report: &EvalReport, logs: &[EpisodeLog]) -> Result<EvalReport> {
    let mut cells = Vec::with_capacity(report.cells.len());
    for c in &report.cells {
        let sel: Vec<EpisodeLog> =
            logs.iter().filter(|l| l.model == c.model && l.driver == c.driver).cloned().collect();
        cells.push(CellStats::from_logs(&c.model, &c.driver, &sel)?);
    }
    let summaries = report
        .summaries
        .iter()
        .map(|s| {
            let members: Vec<&CellStats> = cells
                .iter()
                .filter(|c| {
                    if s.group == PERSONALIZED {
                        !report.summaries.iter().any(|o| o.group == c.model)
                    } else {
                        c.model == s.group
                    }
                })
                .collect();
            let n = members.len() as f64;
            SummaryRow {
                group: s.group.clone(),
                cells: members.len(),
                speed_mean: members.iter().map(|c| c.speed_mean).sum::<f64>() / n,
                distraction_mean: members.iter().map(|c| c.distraction_mean).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(EvalReport { models: report.models.clone(), drivers: report.drivers.clone(), cells, summaries })
}

/// Welch's unequal-variance t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData("Welch test needs two samples per group".into()));
    }
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let (va, vb) = (sa * sa / a.len() as f64, sb * sb / b.len() as f64);
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        let t = if ma == mb { 0.0 } else { (ma - mb).signum() * f64::INFINITY };
        return Ok(WelchTest { t, df: f64::INFINITY, p_value: p });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InsufficientData(e.to_string()))?;
    Ok(WelchTest { t, df, p_value: 2.0 * (1.0 - dist.cdf(t.abs())) })
}

/// Diagonal Gaussian summary of one driver's embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub driver_id: u32,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Variance floor applied when fitting clusters.
pub const VARIANCE_FLOOR: f64 = 1e-8;

pub fn fit_cluster(driver_id: u32, points: &[Vec<f64>]) -> Result<Cluster> {
    if points.is_empty() {
        return Err(Error::InsufficientData(format!("no embeddings for driver {driver_id}")));
    }
    let d = points[0].len();
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n;
        }
    }
    let mut var = vec![0.0; d];
    for p in points {
        for k in 0..d {
            var[k] += (p[k] - mean[k]).powi(2) / n;
        }
    }
    for v in &mut var {
        *v = v.max(VARIANCE_FLOOR);
    }
    Ok(Cluster { driver_id, mean, var })
}

/// KL(p ‖ q) between diagonal Gaussians.
pub fn gaussian_kl(p: &Cluster, q: &Cluster) -> f64 {
    p.mean
        .iter()
        .zip(&p.var)
        .zip(q.mean.iter().zip(&q.var))
        .map(|((mp, vp), (mq, vq))| 0.5 * ((vq / vp).ln() + (vp + (mp - mq).powi(2)) / vq - 1.0))
        .sum()
}

/// Matrix of KL(row ‖ column) and its average over ordered distinct pairs.
pub fn pairwise_cluster_kl(clusters: &[Cluster]) -> (Vec<Vec<f64>>, f64) {
    let n = clusters.len();
    let mut m = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m[i][j] = gaussian_kl(&clusters[i], &clusters[j]);
                total += m[i][j];
            }
        }
    }
    let avg = if n > 1 { total / (n * (n - 1)) as f64 } else { 0.0 };
    (m, avg)
}

/// Held-out accuracy of a logistic-regression probe on binary labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub train: usize,
    pub test: usize,
    pub accuracy: f64,
    /// Accuracy of always predicting the training majority class.
    pub chance: f64,
}

/// Fits a standardized logistic regression on a random `train_fraction`
/// split by full-batch gradient descent and scores the rest.
pub fn linear_probe(features: &[Vec<f64>], labels: &[bool], train_fraction: f64, seed: u64) -> Result<ProbeResult> {
    let n = features.len();
    if n != labels.len() || n < 4 {
        return Err(Error::InsufficientData(format!("linear probe needs at least 4 labelled points, got {n}")));
    }
    let d = features[0].len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, &[]));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let (train_idx, test_idx) = idx.split_at(n_train);

    let mut mu = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for &i in train_idx {
        for k in 0..d {
            mu[k] += features[i][k] / n_train as f64;
        }
    }
    for &i in train_idx {
        for k in 0..d {
            sd[k] += (features[i][k] - mu[k]).powi(2) / n_train as f64;
        }
    }
    let sd: Vec<f64> = sd.iter().map(|v| v.sqrt().max(1e-12)).collect();
    let design = |rows: &[usize]| {
        let mut x = Array2::<f64>::ones((rows.len(), d + 1));
        for (r, &i) in rows.iter().enumerate() {
            for k in 0..d {
                x[[r, k]] = (features[i][k] - mu[k]) / sd[k];
            }
        }
        x
    };
    let x = design(train_idx);
    let y = Array1::from_iter(train_idx.iter().map(|&i| if labels[i] { 1.0 } else { 0.0 }));
    let mut w = Array1::<f64>::zeros(d + 1);
    for _ in 0..2000 {
        let p = x.dot(&w).mapv(|z| 1.0 / (1.0 + (-z).exp()));
        let grad = x.t().dot(&(&p - &y)) / n_train as f64 + &(&w * 1e-4);
        w -= &(grad * 0.5);
    }
    let xt = design(test_idx);
    let scores = xt.dot(&w);
    let correct = test_idx.iter().zip(scores.iter()).filter(|(&i, &s)| (s > 0.0) == labels[i]).count();
    let positives = train_idx.iter().filter(|&&i| labels[i]).count();
    let majority = positives * 2 >= n_train;
    let chance = test_idx.iter().filter(|&&i| labels[i] == majority).count() as f64 / test_idx.len() as f64;
    Ok(ProbeResult { train: n_train, test: test_idx.len(), accuracy: correct as f64 / test_idx.len() as f64, chance })
}

/// Embeddings of every driver with their separation statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentReport {
    pub embeddings: Vec<LatentTrait>,
    pub clusters: Vec<Cluster>,
    pub kl_matrix: Vec<Vec<f64>>,
    pub average_kl: f64,
    /// Probe for high vs low distractibility on the pooled means.
    pub distraction_probe: ProbeResult,
    /// Probe for high vs low intervention preference on the pooled means.
    pub preference_probe: ProbeResult,
}

/// Encodes `n_pools` pools of every profile in `dataset`, fits one cluster
/// per driver on the pooled means and probes them for the trait labels.
pub fn latent_report(
    dataset: &Dataset,
    encoder: &ContextEncoder,
    n_pools: usize,
    pool_size: usize,
    window_steps: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<LatentReport> {
    let mut embeddings = Vec::new();
    let mut clusters = Vec::new();
    let mut distracted = Vec::new();
    let mut preference = Vec::new();
    for profile in &dataset.profiles {
        let e = embed_driver(dataset, profile.driver_id, encoder, n_pools, pool_size, window_steps, seed)?;
        let means: Vec<Vec<f64>> = e.iter().map(|t| t.mean.clone()).collect();
        clusters.push(fit_cluster(profile.driver_id, &means)?);
        distracted.extend(std::iter::repeat_n(profile.distractibility == Level::High, e.len()));
        preference.extend(std::iter::repeat_n(profile.preference == Level::High, e.len()));
        embeddings.extend(e);
    }
    let (kl_matrix, average_kl) = pairwise_cluster_kl(&clusters);
    let features: Vec<Vec<f64>> = embeddings.iter().map(|t| t.mean.clone()).collect();
    let probe_seed = derive_seed(seed, &[u64::MAX]);
    let distraction_probe = linear_probe(&features, &distracted, train_fraction, probe_seed)?;
    let preference_probe = linear_probe(&features, &preference, train_fraction, probe_seed)?;
    Ok(LatentReport { embeddings, clusters, kl_matrix, average_kl, distraction_probe, preference_probe })
}

pub fn write_embeddings_csv<W: Write>(embeddings: &[LatentTrait], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = embeddings.first().map_or(0, |e| e.mean.len());
    let mut header = vec!["driver_id".to_string(), "pool".into()];
    for prefix in ["mean", "log_std", "sample"] {
        header.extend((0..d).map(|k| format!("{prefix}_{k}")));
    }
    w.write_record(&header).map_err(csv_error)?;
    let mut pool = BTreeMap::<u32, usize>::new();
    for e in embeddings {
        let k = pool.entry(e.driver_id).or_default();
        let mut row = vec![e.driver_id.to_string(), k.to_string()];
        *k += 1;
        row.extend(e.mean.iter().chain(&e.log_std).chain(&e.sample).map(|x| fmt(*x)));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// KL matrix with driver ids as row and column labels.
pub fn write_kl_csv<W: Write>(report: &LatentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["driver_id".to_string()];
    header.extend(report.clusters.iter().map(|c| c.driver_id.to_string()));
    w.write_record(&header).map_err(csv_error)?;
    for (c, row) in report.clusters.iter().zip(&report.kl_matrix) {
        let mut r = vec![c.driver_id.to_string()];
        r.extend(row.iter().map(|x| fmt(*x)));
        w.write_record(&r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_latent_summary_csv<W: Write>(report: &LatentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["statistic", "value"]).map_err(csv_error)?;
    let rows = [
        ("average_pairwise_kl", report.average_kl),
        ("distraction_probe_accuracy", report.distraction_probe.accuracy),
        ("distraction_probe_chance", report.distraction_probe.chance),
        ("preference_probe_accuracy", report.preference_probe.accuracy),
        ("preference_probe_chance", report.preference_probe.chance),
    ];
    for (name, value) in rows {
        w.write_record([name.to_string(), fmt(value)]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn write_cells_csv<W: Write>(report: &EvalReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "driver",
        "episodes",
        "speed_mean",
        "speed_std",
        "distraction_mean",
        "distraction_std",
        "crash_rate",
        "alert_rate",
    ])
    .map_err(csv_error)?;
    for c in &report.cells {
        w.write_record([
            c.model.clone(),
            c.driver.clone(),
            c.episodes.to_string(),
            fmt(c.speed_mean),
            fmt(c.speed_std),
            fmt(c.distraction_mean),
            fmt(c.distraction_std),
            fmt(c.crash_rate),
            fmt(c.alert_rate),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(report: &EvalReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "cells", "speed_mean", "distraction_mean"]).map_err(csv_error)?;
    for s in &report.summaries {
        w.write_record([s.group.clone(), s.cells.to_string(), fmt(s.speed_mean), fmt(s.distraction_mean)])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_episodes_csv<W: Write>(logs: &[EpisodeLog], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for l in logs {
        w.serialize(l).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episodes_csv<R: std::io::Read>(input: R) -> Result<Vec<EpisodeLog>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

/// Aligned text rendering of the two metric tables and summaries.
pub fn render_text(report: &EvalReport) -> String {
    let mut s = String::new();
    for (title, pick) in [
        ("Mean high-speed return", (|c: &CellStats| (c.speed_mean, c.speed_std)) as fn(&CellStats) -> (f64, f64)),
        ("Mean distraction reward per episode", |c: &CellStats| (c.distraction_mean, c.distraction_std)),
    ] {
        s.push_str(title);
        s.push('\n');
        s.push_str(&format!("{:<14}", "model"));
        for d in &report.drivers {
            s.push_str(&format!("{:>18}", d));
        }
        s.push('\n');
        for m in &report.models {
            s.push_str(&format!("{:<14}", m));
            for d in &report.drivers {
                match report.cell(m, d) {
                    Some(c) => {
                        let (mean, std) = pick(c);
                        s.push_str(&format!("{:>18}", format!("{mean:.1} ± {std:.1}")));
                    }
                    None => s.push_str(&format!("{:>18}", "*")),
                }
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s.push_str(&format!("{:<14}{:>8}{:>14}{:>14}\n", "summary", "cells", "return", "distraction"));
    for r in &report.summaries {
        s.push_str(&format!("{:<14}{:>8}{:>14.1}{:>14.1}\n", r.group, r.cells, r.speed_mean, r.distraction_mean));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_small_cases() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn identical_clusters_have_zero_kl() {
        let c = Cluster { driver_id: 0, mean: vec![1.0, -2.0], var: vec![0.5, 2.0] };
        assert_eq!(gaussian_kl(&c, &c), 0.0);
        let (_, avg) = pairwise_cluster_kl(&[c.clone(), Cluster { driver_id: 1, ..c }]);
        assert_eq!(avg, 0.0);
    }
}
