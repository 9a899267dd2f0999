//! Multi-seed experiment driver: per-run CSV records, percentile
//! aggregation and the strategy sweep summary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::scheduler::{Scheduler, Strategy, StrategyMode};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "COLSIM_OUT";

/// One simulated episode of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub run_id: usize,
    pub episode: usize,
    pub strategy: String,
    pub t_rho_effective: usize,
    pub mean_phi: f64,
    pub transitions_sent: usize,
    pub synced: bool,
    pub detector_fired: bool,
}

/// Cross-run statistics of the smoothed reward at one sampled episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub episode: usize,
    pub strategy: String,
    pub mean: f64,
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// `(traffic seed, agent seed)` of one run. With common random numbers every
/// strategy of a given run sees the same traffic and initial networks.
pub fn run_seeds(cfg: &ExperimentConfig, strategy: Strategy, run_id: usize) -> (u64, u64) {
    let name = strategy.to_string();
    let tag: &[u8] = if cfg.common_random_numbers {
        b"common"
    } else {
        name.as_bytes()
    };
    let run = (run_id as u64).to_le_bytes();
    (
        cfg.base_seed ^ fnv1a(&[b"traffic", tag, &run]),
        cfg.base_seed ^ fnv1a(&[b"agent", tag, &run]),
    )
}

/// Simulates one coherence period, handing every episode record to `sink`.
/// Returns the scheduler in its final state.
pub fn simulate_run<F>(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    run_id: usize,
    mut sink: F,
) -> Result<Scheduler>
where
    F: FnMut(EpisodeRecord) -> Result<()>,
{
    let (env_seed, agent_seed) = run_seeds(cfg, strategy, run_id);
    let mut scheduler = Scheduler::new(
        cfg.scheduler_setup(strategy),
        cfg.build_env()?,
        env_seed,
        agent_seed,
    );
    let name = strategy.to_string();
    for _ in 0..cfg.episodes {
        let s = scheduler.run_next_episode()?;
        sink(EpisodeRecord {
            run_id,
            episode: s.episode,
            strategy: name.clone(),
            t_rho_effective: s.t_rho_effective,
            mean_phi: s.result.mean_reward,
            transitions_sent: s.result.transitions_sent,
            synced: s.result.synced,
            detector_fired: s.detector_fired,
        })?;
    }
    Ok(scheduler)
}

/// In-memory variant of [`simulate_run`].
pub fn simulate_run_records(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    run_id: usize,
) -> Result<Vec<EpisodeRecord>> {
    let mut out = Vec::with_capacity(cfg.episodes);
    simulate_run(cfg, strategy, run_id, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

pub fn records_dir(out: &Path) -> PathBuf {
    out.join("records")
}

pub fn records_path(out: &Path, strategy: Strategy, run_id: usize) -> PathBuf {
    records_dir(out).join(format!("{strategy}_run{run_id:04}.csv"))
}

pub fn network_path(out: &Path, strategy: Strategy, run_id: usize) -> PathBuf {
    out.join("networks")
        .join(format!("{strategy}_run{run_id:04}.net"))
}

/// Runs every (strategy, run) pair of `cfg`, streaming one CSV per pair
/// under `out/records/` (and, if enabled, the final inference network under
/// `out/networks/`). Returns the record files, in strategy-major order.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let dir = records_dir(out);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    if cfg.dump_networks {
        let nets = out.join("networks");
        std::fs::create_dir_all(&nets).map_err(|e| Error::io(&nets, e))?;
    }
    let jobs: Vec<(Strategy, usize)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| (0..cfg.num_runs).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(strategy, run_id)| {
                let path = records_path(out, strategy, run_id);
                let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
                let mut writer = csv::Writer::from_writer(BufWriter::new(file));
                let scheduler = simulate_run(cfg, strategy, run_id, |r| Ok(writer.serialize(r)?))?;
                writer.flush().map_err(|e| Error::io(&path, e))?;
                if cfg.dump_networks {
                    let net_path = network_path(out, strategy, run_id);
                    let file = File::create(&net_path).map_err(|e| Error::io(&net_path, e))?;
                    let mut w = BufWriter::new(file);
                    scheduler
                        .agent()
                        .inference
                        .dump(&mut w)
                        .and_then(|_| w.flush())
                        .map_err(|e| Error::io(&net_path, e))?;
                }
                Ok(path)
            })
            .collect()
    })
}

pub fn read_records_file(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Reads every `*.csv` under `dir`, in file-name order.
pub fn read_records_dir(dir: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Records(format!(
            "no record files in {}",
            dir.display()
        )));
    }
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_records_file(&p)?);
    }
    Ok(all)
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Per strategy, the reward series of every run, indexed by episode.
type Series = BTreeMap<String, BTreeMap<usize, Vec<f64>>>;

/// Groups records into complete per-run series. Every run of a strategy must
/// cover episodes `0..K` exactly once, where K is the largest episode seen
/// for that strategy plus one.
fn complete_series(records: &[EpisodeRecord]) -> Result<Series> {
    let mut raw: BTreeMap<&str, BTreeMap<usize, Vec<Option<f64>>>> = BTreeMap::new();
    for r in records {
        if !(0.0..=1.0).contains(&r.mean_phi) {
            return Err(Error::Records(format!(
                "mean_phi {} outside [0, 1] ({} run {} episode {})",
                r.mean_phi, r.strategy, r.run_id, r.episode
            )));
        }
        let series = raw
            .entry(&r.strategy)
            .or_default()
            .entry(r.run_id)
            .or_default();
        if series.len() <= r.episode {
            series.resize(r.episode + 1, None);
        }
        if series[r.episode].replace(r.mean_phi).is_some() {
            return Err(Error::Records(format!(
                "duplicate record for {} run {} episode {}",
                r.strategy, r.run_id, r.episode
            )));
        }
    }
    let mut out = Series::new();
    for (strategy, runs) in raw {
        let k = runs.values().map(Vec::len).max().unwrap_or(0);
        let mut complete = BTreeMap::new();
        for (run_id, series) in runs {
            let missing = (0..k).find(|&e| series.get(e).copied().flatten().is_none());
            if let Some(episode) = missing {
                return Err(Error::MissingRecord {
                    strategy: strategy.to_string(),
                    episode,
                });
            }
            complete.insert(run_id, series.into_iter().flatten().collect());
        }
        out.insert(strategy.to_string(), complete);
    }
    Ok(out)
}

fn sorted_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Samples every strategy at episodes `stride, 2·stride, …` (counted from 1).
/// Each run is first smoothed with a trailing mean over `window` episodes;
/// the row then holds the mean and nearest-rank percentiles across runs.
pub fn aggregate(
    records: &[EpisodeRecord],
    stride: usize,
    window: usize,
) -> Result<Vec<AggregateRow>> {
    if stride == 0 || window == 0 {
        return Err(Error::Config(
            "stride and smoothing window must be positive".into(),
        ));
    }
    let series = complete_series(records)?;
    let mut rows = Vec::new();
    for (strategy, runs) in &series {
        let k = runs.values().next().map_or(0, Vec::len);
        let prefix: Vec<Vec<f64>> = runs
            .values()
            .map(|s| {
                std::iter::once(0.0)
                    .chain(s.iter().scan(0.0, |acc, &x| {
                        *acc += x;
                        Some(*acc)
                    }))
                    .collect()
            })
            .collect();
        for episode in (stride..=k).step_by(stride) {
            let lo = episode.saturating_sub(window);
            let mut smoothed: Vec<f64> = prefix
                .iter()
                .map(|p| (p[episode] - p[lo]) / (episode - lo) as f64)
                .collect();
            let mean = sorted_mean(&mut smoothed);
            rows.push(AggregateRow {
                episode,
                strategy: strategy.clone(),
                mean,
                p5: nearest_rank(&smoothed, 5.0),
                p25: nearest_rank(&smoothed, 25.0),
                p50: nearest_rank(&smoothed, 50.0),
                p75: nearest_rank(&smoothed, 75.0),
                p95: nearest_rank(&smoothed, 95.0),
            });
        }
    }
    Ok(rows)
}

/// Writes the aggregate CSV and a `<file>.meta` sidecar recording how it was smoothed.
pub fn write_aggregate(
    path: &Path,
    rows: &[AggregateRow],
    stride: usize,
    window: usize,
) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    let meta = path.with_extension("meta");
    let text = format!(
        "sample_stride = {stride}\nsmoothing_window = {window}\npercentiles = nearest-rank\n"
    );
    std::fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
}

/// Long-run figures of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: String,
    pub runs: usize,
    pub episodes: usize,
    /// Mean episode reward over all episodes and runs.
    pub mean_reward: f64,
    /// For each run, the number of episodes observed when the convergence
    /// detector first fired, or `None` if it never did.
    pub convergence: Vec<Option<usize>>,
}

/// Result of the empirical strategy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub strategies: Vec<StrategySummary>,
    pub best_constant: Option<String>,
    pub best_adaptive: Option<String>,
}

pub fn sweep_report(records: &[EpisodeRecord]) -> Result<SweepSummary> {
    let series = complete_series(records)?;
    let mut first_fire: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    for r in records.iter().filter(|r| r.detector_fired) {
        let e = first_fire
            .entry((&r.strategy, r.run_id))
            .or_insert(r.episode + 1);
        *e = (*e).min(r.episode + 1);
    }
    let mut strategies = Vec::new();
    for (name, runs) in &series {
        let mut per_run: Vec<f64> = runs
            .values()
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
            .collect();
        strategies.push(StrategySummary {
            strategy: name.clone(),
            runs: runs.len(),
            episodes: runs.values().next().map_or(0, Vec::len),
            mean_reward: sorted_mean(&mut per_run),
            convergence: runs
                .keys()
                .map(|&r| first_fire.get(&(name.as_str(), r)).copied())
                .collect(),
        });
    }
    let best = |mode: StrategyMode| {
        strategies
            .iter()
            .filter(|s| s.strategy.parse::<Strategy>().is_ok_and(|p| p.mode == mode))
            .max_by(|a, b| a.mean_reward.total_cmp(&b.mean_reward))
            .map(|s| s.strategy.clone())
    };
    Ok(SweepSummary {
        best_constant: best(StrategyMode::Constant),
        best_adaptive: best(StrategyMode::Adaptive),
        strategies,
    })
}

impl fmt::Display for SweepSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>5} {:>8} {:>10}  convergence episode (min/median/max, fired runs)",
            "strategy", "runs", "episodes", "mean"
        )?;
        for s in &self.strategies {
            write!(
                f,
                "{:<14} {:>5} {:>8} {:>10.5}",
                s.strategy, s.runs, s.episodes, s.mean_reward
            )?;
            let mut fired: Vec<usize> = s.convergence.iter().flatten().copied().collect();
            fired.sort_unstable();
            if fired.is_empty() {
                writeln!(f, "  -")?;
            } else {
                writeln!(
                    f,
                    "  {}/{}/{} ({}/{})",
                    fired[0],
                    fired[(fired.len() - 1) / 2],
                    fired[fired.len() - 1],
                    fired.len(),
                    s.runs
                )?;
            }
        }
        for (label, best) in [
            ("constant", &self.best_constant),
            ("adaptive", &self.best_adaptive),
        ] {
            if let Some(b) = best {
                writeln!(f, "best {label}: {b}")?;
            }
        }
        Ok(())
    }
}

/// Writes `summary` to `path` as plain text.
pub fn write_report(path: &Path, summary: &SweepSummary) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write!(file, "{summary}")
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))
}
