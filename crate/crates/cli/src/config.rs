//! Run configuration: a TOML file with one table per module. Every field has
//! a default, command-line flags override file values, and the effective
//! configuration is written back out as the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use simcim_core::agent::PpoConfig;
use simcim_core::baselines::CmaesConfig;
use simcim_core::environment::EnvConfig;
use simcim_core::problem::WeightMode;
use simcim_core::rewards::{RewardConfig, RewardScheme};
use simcim_core::simcim::SimCimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    LrTest,
    Pretrain,
    Finetune,
    TuneCmaes,
    Bench,
    Report,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::LrTest => "lr-test",
            Mode::Pretrain => "pretrain",
            Mode::Finetune => "finetune",
            Mode::TuneCmaes => "tune-cmaes",
            Mode::Bench => "bench",
            Mode::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Linear,
    Tanh,
    Agent,
    Cmaes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Weights {
    Unit,
    Signed,
}

impl From<Weights> for WeightMode {
    fn from(w: Weights) -> Self {
        match w {
            Weights::Unit => WeightMode::Unit,
            Weights::Signed => WeightMode::Signed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    /// Set in manifests; `replay` dispatches on it.
    pub mode: Option<Mode>,
    pub seed: u64,
    pub instance: InstanceSection,
    pub simcim: SimcimSection,
    pub schedule: ScheduleSection,
    pub environment: EnvironmentSection,
    pub ppo: PpoSection,
    pub pretrain: PretrainSection,
    pub finetune: FinetuneSection,
    pub cmaes: CmaesSection,
    pub bench: BenchSection,
    pub report: ReportSection,
    pub cache: CacheSection,
    /// Per-component seeds derived from `seed`; written for reference and
    /// ignored when a manifest is read back.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub derived_seeds: BTreeMap<String, u64>,
}


/// Either a Gset file or a random-graph recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSection {
    pub path: Option<PathBuf>,
    pub n: usize,
    pub connect_prob: f64,
    pub weights: Weights,
    /// Overrides the shipped best-known table.
    pub best_known: Option<i64>,
}

impl Default for InstanceSection {
    fn default() -> Self {
        Self {
            path: None,
            n: 60,
            connect_prob: 0.06,
            weights: Weights::Unit,
            best_known: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimcimSection {
    /// `None` runs the learning-rate test.
    pub learning_rate: Option<f64>,
    pub momentum: f64,
    pub noise: f64,
    pub iterations: usize,
    pub batch_size: usize,
    /// Independent batches sampled by `solve`.
    pub batches: usize,
}

impl Default for SimcimSection {
    fn default() -> Self {
        let d = SimCimConfig::default();
        Self {
            learning_rate: None,
            momentum: d.momentum,
            noise: d.noise,
            iterations: d.iterations,
            batch_size: d.batch_size,
            batches: 1,
        }
    }
}

impl SimcimSection {
    /// Core config with a placeholder step size until `μ` is known.
    pub fn to_core(&self) -> SimCimConfig {
        SimCimConfig {
            learning_rate: self.learning_rate.unwrap_or(simcim_core::simcim::LR_FALLBACK),
            momentum: self.momentum,
            noise: self.noise,
            iterations: self.iterations,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub scale: f64,
    pub slope: f64,
    pub shift: f64,
    /// Agent parameters for `kind = "agent"`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Linear,
            scale: 1.0,
            slope: 3.0,
            shift: -0.5,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub interval: usize,
    pub p_delta: f64,
    pub initial_pbar: f64,
    pub percentile: f64,
    pub reward: String,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self {
            interval: e.interval,
            p_delta: e.p_delta,
            initial_pbar: e.initial_pbar,
            percentile: e.reward.q,
            reward: e.reward.scheme.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoSection {
    pub epochs: usize,
    pub gamma: f64,
    pub clip_ratio: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub minibatches: usize,
}

impl Default for PpoSection {
    fn default() -> Self {
        let p = PpoConfig::default();
        Self {
            epochs: p.epochs,
            gamma: p.gamma,
            clip_ratio: p.clip_ratio,
            value_coef: p.value_coef,
            entropy_coef: p.entropy_coef,
            learning_rate: p.learning_rate,
            max_grad_norm: p.max_grad_norm,
            minibatches: p.minibatches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub instances: usize,
    pub hidden: usize,
    pub checkpoint_every: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            instances: 300,
            hidden: simcim_core::agent::network::DEFAULT_HIDDEN,
            checkpoint_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub updates: usize,
    /// Leaderboard capacity in batches.
    pub board_batches: usize,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        Self {
            updates: 100,
            board_batches: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaesSection {
    pub population: usize,
    pub evaluations: usize,
    pub initial_sigma: f64,
}

impl Default for CmaesSection {
    fn default() -> Self {
        let c = CmaesConfig::default();
        Self {
            population: c.population,
            evaluations: c.max_evaluations,
            initial_sigma: c.initial_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub gset_dir: Option<PathBuf>,
    pub instances: Vec<String>,
    /// Row label; derived from the schedule kind when empty.
    pub label: String,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            gset_dir: None,
            instances: (1..=10).map(|i| format!("G{i}")).collect(),
            label: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub runs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    /// Directory for eigendecomposition caches; disabled when unset.
    pub spectral_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c: Self = toml::from_str(text)?;
        c.derived_seeds.clear();
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks every field a run may use and names the offending one.
    pub fn validate(&self) -> Result<()> {
        let s = &self.simcim;
        if let Some(mu) = s.learning_rate {
            if !(mu > 0.0 && mu.is_finite()) {
                bail!("simcim.learning_rate must be positive, got {mu}");
            }
        }
        if !(0.0..1.0).contains(&s.momentum) {
            bail!("simcim.momentum must lie in [0, 1), got {}", s.momentum);
        }
        if !(s.noise >= 0.0) {
            bail!("simcim.noise must be nonnegative, got {}", s.noise);
        }
        if s.iterations == 0 {
            bail!("simcim.iterations must be positive");
        }
        if s.batch_size == 0 {
            bail!("simcim.batch_size must be positive");
        }
        if s.batches == 0 {
            bail!("simcim.batches must be positive");
        }
        let e = &self.environment;
        if e.interval == 0 || !s.iterations.is_multiple_of(e.interval) {
            bail!(
                "environment.interval ({}) must divide simcim.iterations ({})",
                e.interval,
                s.iterations
            );
        }
        if !(e.percentile > 0.0 && e.percentile < 100.0) {
            bail!("environment.percentile must lie in (0, 100), got {}", e.percentile);
        }
        e.reward
            .parse::<RewardScheme>()
            .map_err(|_| anyhow::anyhow!("environment.reward must be \"r2\" or \"r3\", got {:?}", e.reward))?;
        if !(0.0..=1.0).contains(&self.instance.connect_prob) {
            bail!("instance.connect_prob must lie in [0, 1], got {}", self.instance.connect_prob);
        }
        if self.instance.n < 2 {
            bail!("instance.n must be at least 2");
        }
        if self.ppo.epochs == 0 || self.ppo.minibatches == 0 {
            bail!("ppo.epochs and ppo.minibatches must be positive");
        }
        if !(self.ppo.learning_rate > 0.0) {
            bail!("ppo.learning_rate must be positive");
        }
        if self.pretrain.hidden == 0 {
            bail!("pretrain.hidden must be positive");
        }
        if self.finetune.board_batches == 0 {
            bail!("finetune.board_batches must be positive");
        }
        if self.cmaes.population < 2 || self.cmaes.evaluations == 0 {
            bail!("cmaes.population must be at least 2 and cmaes.evaluations positive");
        }
        Ok(())
    }

    /// Makes every path absolute so a manifest replays from any directory.
    pub fn absolutize_paths(&mut self) -> Result<()> {
        fn abs(p: &mut Option<PathBuf>) -> Result<()> {
            if let Some(path) = p {
                *path = std::path::absolute(&*path)?;
            }
            Ok(())
        }
        abs(&mut self.instance.path)?;
        abs(&mut self.schedule.checkpoint)?;
        abs(&mut self.bench.gset_dir)?;
        abs(&mut self.cache.spectral_dir)?;
        for r in &mut self.report.runs {
            *r = std::path::absolute(&*r)?;
        }
        Ok(())
    }

    pub fn env_config(&self, learning_rate: f64) -> EnvConfig {
        EnvConfig {
            simcim: SimCimConfig {
                learning_rate,
                ..self.simcim.to_core()
            },
            interval: self.environment.interval,
            p_delta: self.environment.p_delta,
            initial_pbar: self.environment.initial_pbar,
            reward: RewardConfig {
                q: self.environment.percentile,
                scheme: self.environment.reward.parse().expect("validated"),
            },
        }
    }

    pub fn ppo_config(&self) -> PpoConfig {
        let p = &self.ppo;
        PpoConfig {
            epochs: p.epochs,
            gamma: p.gamma,
            clip_ratio: p.clip_ratio,
            value_coef: p.value_coef,
            entropy_coef: p.entropy_coef,
            learning_rate: p.learning_rate,
            max_grad_norm: p.max_grad_norm,
            minibatches: p.minibatches,
            ..PpoConfig::default()
        }
    }

    pub fn cmaes_config(&self) -> CmaesConfig {
        CmaesConfig {
            population: self.cmaes.population,
            max_evaluations: self.cmaes.evaluations,
            initial_sigma: self.cmaes.initial_sigma,
            ..CmaesConfig::default()
        }
    }
}
