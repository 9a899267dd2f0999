//! Experiment configuration read from flat `key = value` files.
//!
//! Blank lines and `#` comments are ignored. Every key is optional and falls
//! back to the defaults of [`ExperimentConfig::default`]; unknown keys are
//! rejected with the offending name and line.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agent::AgentParams;
use crate::env::SlicingEnv;
use crate::error::{Error, Result};
use crate::link::LinkParams;
use crate::scheduler::{CostParams, SchedulerSetup, Strategy};
use crate::traffic::{AppKind, AppProfile};

/// Raw application parameters, converted to slots once the link is known.
#[derive(Debug, Clone, PartialEq)]
pub struct AppSettings {
    pub kind: AppKind,
    pub bitrate_bps: u64,
    pub delay_ms: f64,
    pub p_stay: f64,
}

/// Everything needed to run and post-process an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub link: LinkParams,
    pub apps: Vec<AppSettings>,
    pub num_users: usize,
    /// Applications pinned to users in order, instead of a uniform draw per episode.
    pub frozen_apps: Option<Vec<AppKind>>,
    /// Episodes per coherence period.
    pub episodes: usize,
    pub agent: AgentParams,
    pub cost: CostParams,
    /// Convergence detector window, in episodes.
    pub k_avg: usize,
    pub strategies: Vec<Strategy>,
    pub num_runs: usize,
    pub base_seed: u64,
    /// Share traffic and network initialization across strategies for a given run.
    pub common_random_numbers: bool,
    pub output_dir: PathBuf,
    /// Episodes between two aggregate points.
    pub sample_stride: usize,
    /// Trailing smoothing window; defaults to `sample_stride`.
    pub smoothing_window: Option<usize>,
    /// Worker threads for the run pool; 0 lets the pool decide.
    pub threads: usize,
    /// Write each run's final inference network under `networks/`.
    pub dump_networks: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let app = |kind, bitrate_bps, delay_ms| AppSettings {
            kind,
            bitrate_bps,
            delay_ms,
            p_stay: 0.9,
        };
        ExperimentConfig {
            link: LinkParams::default(),
            apps: vec![
                app(AppKind::Ncvo, 25_000, 100.0),
                app(AppKind::Ncvi, 384_000, 300.0),
                app(AppKind::Cvo, 25_000, 75.0),
                app(AppKind::Cvi, 384_000, 100.0),
            ],
            num_users: 5,
            frozen_apps: None,
            episodes: 10_000,
            agent: AgentParams::default(),
            cost: CostParams::default(),
            k_avg: 4000,
            strategies: (1..=5)
                .map(Strategy::constant)
                .chain([Strategy::ideal()])
                .collect(),
            num_runs: 100,
            base_seed: 0,
            common_random_numbers: true,
            output_dir: PathBuf::from("out"),
            sample_stride: 196,
            smoothing_window: None,
            threads: 0,
            dump_networks: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::InvalidValue {
        key: key.into(),
        reason: format!("`{value}`: {e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidValue {
            key: key.into(),
            reason: format!("`{value}` is not a boolean"),
        }),
    }
}

fn parse_list<T: FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Parses configuration text on top of the defaults and validates the result.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    idx + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim(), idx + 1)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` pair; `line` is only used in error messages.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "slot_ms" => self.link.slot_ms = parse(key, value)?,
            "link_bps" => self.link.link_bps = parse(key, value)?,
            "num_blocks" => self.link.num_blocks = parse(key, value)?,
            "packet_bits" => self.link.packet_bits = parse(key, value)?,
            "buffer_packets" => self.link.buffer_packets = parse(key, value)?,
            "decision_slots" => self.link.decision_slots = parse(key, value)?,
            "episode_slots" => self.link.episode_slots = parse(key, value)?,
            "num_users" => self.num_users = parse(key, value)?,
            "frozen_apps" => {
                let apps: Vec<AppKind> = parse_list(value)?;
                self.frozen_apps = if apps.is_empty() { None } else { Some(apps) };
            }
            "episodes" => self.episodes = parse(key, value)?,
            "gamma" => self.agent.gamma = parse(key, value)?,
            "learning_rate" => self.agent.learning_rate = parse(key, value)?,
            "temperature" => self.agent.temperature = parse(key, value)?,
            "batch_size" => self.agent.batch_size = parse(key, value)?,
            "memory_capacity" => self.agent.memory_capacity = parse(key, value)?,
            "initial_q" => {
                self.agent.initial_q = if value == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "transition_bits" => self.cost.transition_bits = parse(key, value)?,
            "model_bits" => self.cost.model_bits = parse(key, value)?,
            "sync_every" => self.cost.sync_every = parse(key, value)?,
            "ideal_sync_every" => self.cost.ideal_sync_every = parse(key, value)?,
            "ideal_upload" => {
                self.cost.ideal_upload = if value == "all" {
                    usize::MAX
                } else {
                    parse(key, value)?
                }
            }
            "k_avg" => self.k_avg = parse(key, value)?,
            "strategies" => self.strategies = parse_list(value)?,
            "num_runs" => self.num_runs = parse(key, value)?,
            "base_seed" => self.base_seed = parse(key, value)?,
            "common_random_numbers" => self.common_random_numbers = parse_bool(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "sample_stride" => self.sample_stride = parse(key, value)?,
            "smoothing_window" => self.smoothing_window = Some(parse(key, value)?),
            "threads" => self.threads = parse(key, value)?,
            "dump_networks" => self.dump_networks = parse_bool(key, value)?,
            _ => return self.set_app(key, value, line),
        }
        Ok(())
    }

    fn set_app(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let unknown = || Error::UnknownKey {
            key: key.into(),
            line,
        };
        let mut parts = key.split('.');
        let (Some("app"), Some(name), Some(field), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(unknown());
        };
        let kind: AppKind = name.to_ascii_uppercase().parse().map_err(|_| unknown())?;
        let app = self
            .apps
            .iter_mut()
            .find(|a| a.kind == kind)
            .ok_or_else(unknown)?;
        match field {
            "bitrate_bps" => app.bitrate_bps = parse(key, value)?,
            "delay_ms" => app.delay_ms = parse(key, value)?,
            "p_stay" => app.p_stay = parse(key, value)?,
            _ => return Err(unknown()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.profiles()?;
        let invalid = |key: &str, reason: &str| {
            Err(Error::InvalidValue {
                key: key.into(),
                reason: reason.into(),
            })
        };
        let a = &self.agent;
        if !(0.0..1.0).contains(&a.gamma) {
            return invalid("gamma", "must lie in [0, 1)");
        }
        if !(a.learning_rate > 0.0) {
            return invalid("learning_rate", "must be positive");
        }
        if !(a.temperature > 0.0) {
            return invalid("temperature", "must be positive");
        }
        if !a.initial_q().is_finite() {
            return invalid("initial_q", "must be finite");
        }
        let positive = [
            ("num_users", self.num_users),
            ("episodes", self.episodes),
            ("batch_size", a.batch_size),
            ("memory_capacity", a.memory_capacity),
            ("transition_bits", self.cost.transition_bits as usize),
            ("sync_every", self.cost.sync_every),
            ("ideal_sync_every", self.cost.ideal_sync_every),
            ("k_avg", self.k_avg),
            ("num_runs", self.num_runs),
            ("sample_stride", self.sample_stride),
            ("smoothing_window", self.smoothing_window.unwrap_or(1)),
        ];
        for (key, v) in positive {
            if v == 0 {
                return invalid(key, "must be positive");
            }
        }
        if self.strategies.is_empty() {
            return invalid("strategies", "at least one strategy is required");
        }
        let decisions = self.link.decisions_per_episode();
        if let Some(s) = self.strategies.iter().find(|s| s.t_rho > decisions) {
            return invalid(
                "strategies",
                &format!("{s} exceeds the {decisions} decisions of an episode"),
            );
        }
        if let Some(frozen) = &self.frozen_apps {
            if let Some(k) = frozen
                .iter()
                .find(|k| !self.apps.iter().any(|a| a.kind == **k))
            {
                return invalid("frozen_apps", &format!("no profile for {k}"));
            }
        }
        Ok(())
    }

    pub fn smoothing(&self) -> usize {
        self.smoothing_window.unwrap_or(self.sample_stride)
    }

    pub fn profiles(&self) -> Result<Vec<AppProfile>> {
        self.apps
            .iter()
            .map(|a| AppProfile::new(a.kind, a.bitrate_bps, a.delay_ms, a.p_stay, &self.link))
            .collect()
    }

    /// Fresh environment matching the configured traffic.
    pub fn build_env(&self) -> Result<SlicingEnv> {
        let mut env = SlicingEnv::new(self.link.clone(), self.profiles()?, self.num_users)?;
        if let Some(apps) = &self.frozen_apps {
            env.freeze_applications(apps.clone())?;
        }
        Ok(env)
    }

    pub fn scheduler_setup(&self, strategy: Strategy) -> SchedulerSetup {
        SchedulerSetup {
            link: self.link.clone(),
            cost: self.cost.clone(),
            agent: self.agent.clone(),
            strategy,
            detector_window: self.k_avg,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = ExperimentConfig::parse_str("# nothing\n\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.smoothing(), 196);
        assert_eq!(cfg.strategies.len(), 6);
    }

    #[test]
    fn keys_override_defaults() {
        let cfg = ExperimentConfig::parse_str(
            "episodes = 10\nstrategies = ideal, constant:1, adaptive:4\nnum_runs=3 # inline comment\n\
             app.cvo.delay_ms = 80\nfrozen_apps = NCVI, CVI\nideal_upload = 500\ncommon_random_numbers = false\n",
        )
        .unwrap();
        assert_eq!(cfg.episodes, 10);
        assert_eq!(cfg.num_runs, 3);
        assert_eq!(
            cfg.strategies,
            vec![
                Strategy::ideal(),
                Strategy::constant(1),
                Strategy::adaptive(4)
            ]
        );
        assert_eq!(cfg.apps[2].delay_ms, 80.0);
        assert_eq!(cfg.frozen_apps, Some(vec![AppKind::Ncvi, AppKind::Cvi]));
        assert_eq!(cfg.cost.ideal_upload, 500);
        assert!(!cfg.common_random_numbers);
        assert!((cfg.agent.initial_q() - 15.0).abs() < 1e-9);
        let cfg2 = ExperimentConfig::parse_str("initial_q = 0\ngamma = 0.9\n").unwrap();
        assert_eq!(cfg2.agent.initial_q(), 0.0);
        let cfg3 = ExperimentConfig::parse_str("initial_q = auto\ngamma = 0.9\n").unwrap();
        assert!((cfg3.agent.initial_q() - 7.5).abs() < 1e-12);
        let env = cfg.build_env().unwrap();
        assert_eq!(env.state_dim(), 8);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse_str("episodes = 5\nepisodez = 5\n").unwrap_err();
        match err {
            Error::UnknownKey { key, line } => {
                assert_eq!(key, "episodez");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected error {other}"),
        }
        let err = ExperimentConfig::parse_str("app.ncvo.colour = 1\n").unwrap_err();
        assert!(err.to_string().contains("app.ncvo.colour"));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "episodes = ten",
            "episodes = 0",
            "gamma = 1.0",
            "temperature = 0",
            "initial_q = inf",
            "strategies = ",
            "strategies = constant:101",
            "num_runs = 0",
            "link_bps = 0",
            "app.cvi.p_stay = 1.5",
            "common_random_numbers = maybe",
            "no equals sign",
        ] {
            assert!(
                ExperimentConfig::parse_str(text).is_err(),
                "{text} accepted"
            );
        }
    }
}
