//! Seeded batch experiments: run episodes under a baseline policy, collect
//! per-step metrics, and write them as CSV / JSON lines.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::metrics::{self, welch_t_test, WelchTest};
use crate::policies::{BaselinePolicy, Policy, PolicyKind};

/// Column order of the per-step metrics file.
pub const STEP_HEADER: [&str; 13] = [
    "step",
    "time",
    "gospa_distance",
    "gospa_loc",
    "gospa_missed",
    "gospa_false",
    "cov_norm_sum",
    "t2t",
    "reward",
    "reward_cov",
    "reward_ssv",
    "n_tracks",
    "n_detections",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub gospa_distance: f64,
    pub gospa_loc: f64,
    pub gospa_missed: f64,
    pub gospa_false: f64,
    pub cov_norm_sum: f64,
    pub t2t: Option<f64>,
    pub reward: f64,
    pub reward_cov: f64,
    pub reward_ssv: f64,
    pub n_tracks: usize,
    pub n_detections: usize,
}

/// `(step, track_id, 6 means, 21 upper-triangular covariance entries)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackLogRow {
    pub step: usize,
    pub track_id: u64,
    pub mean: [f64; 6],
    pub covariance_upper: [f64; 21],
}

/// `(step, target_id, 6 true state components)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthLogRow {
    pub step: usize,
    pub target_id: u64,
    pub state: [f64; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub steps: Vec<StepRecord>,
    pub track_log: Vec<TrackLogRow>,
    pub truth_log: Vec<TruthLogRow>,
    /// Set when the episode aborted on a numerical or lifecycle error.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub status: String,
    pub error: Option<String>,
    pub steps: usize,
    pub mean_t2t: Option<f64>,
    pub mean_cov_norm_sum: Option<f64>,
    pub mean_gospa: Option<f64>,
    pub total_reward: f64,
}

impl EpisodeRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn mean_cov_norm_sum(&self) -> Option<f64> {
        metrics::mean(self.steps.iter().map(|s| s.cov_norm_sum))
    }

    pub fn mean_t2t(&self) -> Option<f64> {
        metrics::mean(self.steps.iter().filter_map(|s| s.t2t))
    }

    pub fn summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            episode: self.episode,
            seed: self.seed,
            policy: self.policy,
            status: if self.failed() { "failed" } else { "ok" }.into(),
            error: self.error.clone(),
            steps: self.steps.len(),
            mean_t2t: self.mean_t2t(),
            mean_cov_norm_sum: self.mean_cov_norm_sum(),
            mean_gospa: metrics::mean(self.steps.iter().map(|s| s.gospa_distance)),
            total_reward: self.steps.iter().map(|s| s.reward).fold(0.0, |a, r| a + r),
        }
    }
}

/// Seed of the policy's own random stream, decorrelated from the scenario seed.
pub fn policy_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Runs one episode to its horizon (or termination) under a baseline policy.
pub fn run_episode(
    config: &RunConfig,
    policy: PolicyKind,
    episode: usize,
    seed: u64,
    log_states: bool,
) -> EpisodeRecord {
    let mut record = EpisodeRecord {
        episode,
        seed,
        policy,
        steps: Vec::new(),
        track_log: Vec::new(),
        truth_log: Vec::new(),
        error: None,
    };
    if let Err(e) = drive_episode(config, policy, seed, log_states, &mut record) {
        record.error = Some(e.to_string());
    }
    record
}

fn drive_episode(
    config: &RunConfig,
    policy: PolicyKind,
    seed: u64,
    log_states: bool,
    record: &mut EpisodeRecord,
) -> Result<()> {
    let mut env = Environment::new(config.clone())?;
    let mut agent = BaselinePolicy::new(policy, policy_seed(seed), env.n_a());
    let mut observation = env.reset(seed)?;
    loop {
        let action = agent.next_action(&observation);
        let out = env.step(action)?;
        let gospa = match &out.info.gospa {
            Some(g) => g.clone(),
            None => metrics::gospa(&out.info.truth_positions, &out.info.track_positions, &config.metrics)?,
        };
        let step = env.step_count();
        record.steps.push(StepRecord {
            step,
            time: out.info.time,
            gospa_distance: gospa.distance,
            gospa_loc: gospa.localisation,
            gospa_missed: gospa.missed,
            gospa_false: gospa.false_alarm,
            cov_norm_sum: metrics::covariance_norm_sum(env.tracks()),
            t2t: metrics::track_to_truth_ratio(out.info.n_tracks, out.info.truth_positions.len()),
            reward: out.reward,
            reward_cov: out.info.reward_cov,
            reward_ssv: out.info.reward_ssv,
            n_tracks: out.info.n_tracks,
            n_detections: out.info.n_detections,
        });
        if log_states {
            log_states_at(&env, step, record);
        }
        observation = out.observation;
        if out.terminated || out.truncated {
            return Ok(());
        }
    }
}

fn log_states_at(env: &Environment, step: usize, record: &mut EpisodeRecord) {
    for track in env.tracks().tracks() {
        let s = track.state();
        let mut upper = [0.0; 21];
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                upper[k] = s.covariance[(i, j)];
                k += 1;
            }
        }
        record.track_log.push(TrackLogRow {
            step,
            track_id: track.id.0,
            mean: s.mean.into(),
            covariance_upper: upper,
        });
    }
    let t = env.time();
    for path in env.truths().iter().filter(|p| p.is_alive(t)) {
        record.truth_log.push(TruthLogRow {
            step,
            target_id: path.target_id,
            state: path.current().to_vector().into(),
        });
    }
}

/// Runs `config.run.episodes` episodes with seeds `base_seed + index`.
///
/// Episodes run on a pool of `config.run.threads` workers (0 = all cores);
/// results are returned in episode order regardless of scheduling.
pub fn run_batch(config: &RunConfig) -> Result<Vec<EpisodeRecord>> {
    config.ensure_valid()?;
    let run = &config.run;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    use rayon::prelude::*;
    Ok(pool.install(|| {
        (0..run.episodes)
            .into_par_iter()
            .map(|i| {
                run_episode(
                    config,
                    run.policy,
                    i,
                    run.base_seed.wrapping_add(i as u64),
                    run.log_states,
                )
            })
            .collect()
    }))
}

/// Aggregate over a batch, in the layout of the baseline comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub policy: PolicyKind,
    pub episodes: usize,
    pub failed: usize,
    /// Mean over episodes of each episode's mean track-to-truth ratio.
    pub mean_t2t: Option<f64>,
    /// Mean and sample standard deviation of every per-step covariance-norm
    /// sum pooled across episodes.
    pub cov_norm_mean: Option<f64>,
    pub cov_norm_std: Option<f64>,
    pub mean_gospa: Option<f64>,
}

impl BatchSummary {
    pub fn from_records(policy: PolicyKind, records: &[EpisodeRecord]) -> Self {
        let pooled: Vec<f64> = records
            .iter()
            .flat_map(|r| r.steps.iter().map(|s| s.cov_norm_sum))
            .collect();
        Self {
            policy,
            episodes: records.len(),
            failed: records.iter().filter(|r| r.failed()).count(),
            mean_t2t: metrics::mean(records.iter().filter_map(EpisodeRecord::mean_t2t)),
            cov_norm_mean: metrics::mean(pooled.iter().copied()),
            cov_norm_std: metrics::std_dev(&pooled),
            mean_gospa: metrics::mean(records.iter().flat_map(|r| r.steps.iter().map(|s| s.gospa_distance))),
        }
    }
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.decimals$}"))
}

/// Renders summaries as a `Policy | Mean T2T | ‖P̄‖_frob [m]` table.
pub fn format_table(summaries: &[BatchSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>9} {:>24} {:>12} {:>8}\n",
        "Policy", "Mean T2T", "||P||_frob [m]", "Mean GOSPA", "Failed"
    ));
    for s in summaries {
        let cov = match (s.cov_norm_mean, s.cov_norm_std) {
            (Some(m), Some(sd)) => format!("{m:.2} ± {sd:.2}"),
            (Some(m), None) => format!("{m:.2}"),
            _ => "-".into(),
        };
        out.push_str(&format!(
            "{:<10} {:>9} {:>24} {:>12} {:>8}\n",
            s.policy.name(),
            fmt_opt(s.mean_t2t, 3),
            cov,
            fmt_opt(s.mean_gospa, 2),
            format!("{}/{}", s.failed, s.episodes),
        ));
    }
    out
}

/// Welch test on per-episode mean covariance-norm sums of two batches.
pub fn compare_cov_norms(a: &[EpisodeRecord], b: &[EpisodeRecord]) -> Option<WelchTest> {
    let xs: Vec<f64> = a.iter().filter_map(EpisodeRecord::mean_cov_norm_sum).collect();
    let ys: Vec<f64> = b.iter().filter_map(EpisodeRecord::mean_cov_norm_sum).collect();
    welch_t_test(&xs, &ys)
}

pub fn steps_csv(steps: &[StepRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(STEP_HEADER)?;
    for s in steps {
        w.serialize(s)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

fn track_log_csv(rows: &[TrackLogRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string(), "track_id".to_string()];
    header.extend(["x", "y", "z", "vx", "vy", "vz"].map(String::from));
    for i in 0..6 {
        for j in i..6 {
            header.push(format!("p{i}{j}"));
        }
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.step.to_string(), r.track_id.to_string()];
        rec.extend(r.mean.iter().chain(&r.covariance_upper).map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

fn truth_log_csv(rows: &[TruthLogRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "target_id", "x", "y", "z", "vx", "vy", "vz"])?;
    for r in rows {
        let mut rec = vec![r.step.to_string(), r.target_id.to_string()];
        rec.extend(r.state.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Files written for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub metrics_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
}

/// Writes `metrics/episode_NNNN.csv` per episode, `summary.jsonl` with one
/// line per episode, and `states/` logs when they were recorded.
pub fn write_batch(records: &[EpisodeRecord], dir: &Path) -> Result<BatchOutput> {
    let metrics_dir = dir.join("metrics");
    fs::create_dir_all(&metrics_dir).map_err(|e| Error::io(&metrics_dir, e))?;
    let mut metrics_files = Vec::with_capacity(records.len());
    let mut summary = Vec::new();
    for r in records {
        let path = metrics_dir.join(format!("episode_{:04}.csv", r.episode));
        write_file(&path, &steps_csv(&r.steps)?)?;
        metrics_files.push(path);
        serde_json::to_writer(&mut summary, &r.summary())?;
        summary.push(b'\n');

        if !r.track_log.is_empty() || !r.truth_log.is_empty() {
            let states = dir.join("states");
            fs::create_dir_all(&states).map_err(|e| Error::io(&states, e))?;
            write_file(
                &states.join(format!("tracks_{:04}.csv", r.episode)),
                &track_log_csv(&r.track_log)?,
            )?;
            write_file(
                &states.join(format!("truth_{:04}.csv", r.episode)),
                &truth_log_csv(&r.truth_log)?,
            )?;
        }
    }
    let summary_file = dir.join("summary.jsonl");
    let mut f = fs::File::create(&summary_file).map_err(|e| Error::io(&summary_file, e))?;
    f.write_all(&summary).map_err(|e| Error::io(&summary_file, e))?;
    Ok(BatchOutput {
        metrics_files,
        summary_file,
    })
}

/// Reads a per-step metrics file back.
pub fn read_steps_csv(path: &Path) -> Result<Vec<StepRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .collect::<std::result::Result<Vec<StepRecord>, _>>()
        .map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_config(episodes: usize, horizon: usize) -> RunConfig {
        let mut c = RunConfig::default();
        c.run.episodes = episodes;
        c.environment.horizon = horizon;
        c
    }

    #[test]
    fn header_matches_record_fields() {
        let bytes = steps_csv(&[]).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap().trim_end(),
            "step,time,gospa_distance,gospa_loc,gospa_missed,gospa_false,cov_norm_sum,t2t,reward,reward_cov,reward_ssv,n_tracks,n_detections"
        );
    }

    #[test]
    fn zero_episodes_is_empty() {
        let records = run_batch(&short_config(0, 10)).unwrap();
        assert!(records.is_empty());
        let s = BatchSummary::from_records(PolicyKind::Coverage, &records);
        assert_eq!((s.episodes, s.failed, s.mean_t2t), (0, 0, None));
    }

    #[test]
    fn episode_runs_to_horizon() {
        let r = run_episode(&short_config(1, 50), PolicyKind::Random, 0, 1, true);
        assert!(r.error.is_none());
        assert_eq!(r.steps.len(), 50);
        assert_eq!(r.steps.last().unwrap().step, 50);
        assert!(!r.truth_log.is_empty());
        for s in &r.steps {
            assert_eq!(s.reward, s.reward_cov - s.reward_ssv);
        }
    }

    #[test]
    fn csv_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let records = run_batch(&short_config(2, 30)).unwrap();
        let out = write_batch(&records, dir.path()).unwrap();
        assert_eq!(out.metrics_files.len(), 2);
        let back = read_steps_csv(&out.metrics_files[1]).unwrap();
        assert_eq!(back, records[1].steps);
        let lines = fs::read_to_string(out.summary_file).unwrap();
        assert_eq!(lines.lines().count(), 2);
    }

    #[test]
    fn table_lists_each_policy() {
        let c = short_config(2, 20);
        let summaries: Vec<_> = PolicyKind::ALL
            .iter()
            .map(|&p| {
                let mut c = c.clone();
                c.run.policy = p;
                BatchSummary::from_records(p, &run_batch(&c).unwrap())
            })
            .collect();
        let table = format_table(&summaries);
        for p in PolicyKind::ALL {
            assert!(table.contains(p.name()));
        }
    }
}
