//! Experiment configuration files and command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use pgrad::env::acrobot::DT_SIM;
use pgrad::env::{default_three_state, Bandit, PuckConfig, RewardDist};
use pgrad::experiments::Algorithm;
use pgrad::mdp::{SoftmaxPolicy, TabularFeatures, TabularMdp};
use serde::{Deserialize, Serialize};

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit code 2).
    Config(String),
    /// Anything that went wrong while running (exit code 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<pgrad::Error> for CliError {
    fn from(e: pgrad::Error) -> Self {
        use pgrad::Error::*;
        match e {
            InvalidArgument(_) | InvalidModel(_) | DimensionMismatch { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

/// Environment name plus optional parameter overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: Option<String>,
    /// Model file for the `tabular` environment.
    pub mdp: Option<PathBuf>,
    /// Policy parameters for tabular environments, or fixed parameters for
    /// gradient estimates on the continuous ones.
    pub theta: Option<Vec<f64>>,
    /// Probability of arm 0 for the bandit.
    pub mu0: Option<f64>,
    pub arms: Option<[RewardDist; 2]>,
    /// Acrobot integration substep.
    pub dt_sim: Option<f64>,
    pub puck: Option<PuckConfig>,
}

/// Everything a subcommand may read. Missing fields take the command's
/// defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subcommand this file is meant for; checked when present.
    pub kind: Option<String>,
    #[serde(default)]
    pub env: EnvConfig,
    pub algorithms: Option<Vec<String>>,
    pub gammas: Option<Vec<f64>>,
    pub b_ratios: Option<Vec<f64>>,
    pub checkpoints: Option<Vec<u64>>,
    pub steps: Option<u64>,
    pub replicas: Option<u64>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub window: Option<u64>,
    pub theta_init_range: Option<f64>,
    pub iterations: Option<u64>,
    /// Finite horizon for the optimal-baseline oracle; absent means infinite.
    pub horizon: Option<usize>,
    pub fd_step: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Flag values that replace config-file fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub gammas: Option<Vec<f64>>,
    pub steps: Option<u64>,
    pub replicas: Option<u64>,
    pub seed: Option<u64>,
    pub algorithms: Option<Vec<String>>,
    pub env: Option<String>,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads a config file. Relative model paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(mdp), Some(dir)) = (&cfg.env.mdp, path.parent()) {
            if mdp.is_relative() {
                cfg.env.mdp = Some(dir.join(mdp));
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(name) = o.env {
            if self.env.name.as_deref() != Some(name.as_str()) {
                self.env = EnvConfig {
                    name: Some(name),
                    ..EnvConfig::default()
                };
            }
        }
        self.gammas = o.gammas.or(self.gammas.take());
        self.steps = o.steps.or(self.steps);
        self.replicas = o.replicas.or(self.replicas);
        self.seed = o.seed.or(self.seed);
        self.algorithms = o.algorithms.or(self.algorithms.take());
        self.alpha = o.alpha.or(self.alpha);
        self.out = o.out.or(self.out.take());
    }

    pub fn check_kind(&self, command: &str) -> CliResult<()> {
        match &self.kind {
            Some(k) if k != command => Err(config_err("kind", format!("file is for {k:?}, not {command:?}"))),
            _ => Ok(()),
        }
    }

    pub fn algorithms_or(&self, default: &[Algorithm]) -> CliResult<Vec<Algorithm>> {
        match &self.algorithms {
            None => Ok(default.to_vec()),
            Some(names) if names.is_empty() => Err(config_err("algorithms", "list is empty")),
            Some(names) => names
                .iter()
                .map(|n| n.parse::<Algorithm>().map_err(|e| config_err("algorithms", e)))
                .collect(),
        }
    }

    pub fn gammas_or(&self, default: &[f64]) -> CliResult<Vec<f64>> {
        let gammas = self.gammas.clone().unwrap_or_else(|| default.to_vec());
        if gammas.is_empty() {
            return Err(config_err("gammas", "list is empty"));
        }
        if let Some(g) = gammas.iter().find(|g| !(0.0..1.0).contains(*g)) {
            return Err(config_err("gammas", format!("{g} is outside [0, 1)")));
        }
        Ok(gammas)
    }

    pub fn env(&self, default: &str) -> CliResult<EnvSpec> {
        EnvSpec::resolve(&self.env, default)
    }
}

pub type TabularPolicy = SoftmaxPolicy<TabularFeatures>;

/// A resolved environment.
#[derive(Clone, Debug)]
pub enum EnvSpec {
    Tabular { name: String, mdp: TabularMdp, policy: TabularPolicy },
    Bandit { bandit: Bandit, mu0: f64 },
    Acrobot { dt_sim: f64, theta: Option<Vec<f64>> },
    Puckworld { config: PuckConfig, theta: Option<Vec<f64>> },
}

pub const ENV_NAMES: [&str; 5] = ["three-state", "tabular", "bandit", "acrobot", "puckworld"];

impl EnvSpec {
    pub fn resolve(cfg: &EnvConfig, default: &str) -> CliResult<Self> {
        let name = cfg.name.as_deref().unwrap_or(default);
        let unused = |field: &str, set: bool| {
            if set {
                Err(config_err(&format!("env.{field}"), format!("not used by environment {name:?}")))
            } else {
                Ok(())
            }
        };
        match name {
            "three-state" | "tabular" => {
                unused("mu0", cfg.mu0.is_some())?;
                unused("arms", cfg.arms.is_some())?;
                unused("dt_sim", cfg.dt_sim.is_some())?;
                unused("puck", cfg.puck.is_some())?;
                let mdp = if name == "tabular" {
                    let path = cfg.mdp.as_ref().ok_or_else(|| config_err("env.mdp", "required for \"tabular\""))?;
                    TabularMdp::load(path).map_err(|e| config_err("env.mdp", e))?
                } else {
                    unused("mdp", cfg.mdp.is_some())?;
                    default_three_state().0
                };
                let theta = match &cfg.theta {
                    Some(t) => t.clone(),
                    None if name == "three-state" => default_three_state().1.theta().to_vec(),
                    None => vec![0.0; mdp.n_states() * mdp.n_actions()],
                };
                let policy = mdp.tabular_policy(theta).map_err(|e| config_err("env.theta", e))?;
                Ok(EnvSpec::Tabular {
                    name: name.to_string(),
                    mdp,
                    policy,
                })
            }
            "bandit" => {
                unused("mdp", cfg.mdp.is_some())?;
                unused("theta", cfg.theta.is_some())?;
                unused("dt_sim", cfg.dt_sim.is_some())?;
                unused("puck", cfg.puck.is_some())?;
                let [r0, r1] = cfg.arms.unwrap_or([
                    RewardDist::Bernoulli { p: 0.3 },
                    RewardDist::Bernoulli { p: 0.7 },
                ]);
                let bandit = Bandit::new(r0, r1).map_err(|e| config_err("env.arms", e))?;
                let mu0 = cfg.mu0.unwrap_or(0.5);
                Bandit::policy(mu0).map_err(|e| config_err("env.mu0", e))?;
                Ok(EnvSpec::Bandit { bandit, mu0 })
            }
            "acrobot" => {
                unused("mdp", cfg.mdp.is_some())?;
                unused("mu0", cfg.mu0.is_some())?;
                unused("arms", cfg.arms.is_some())?;
                unused("puck", cfg.puck.is_some())?;
                let dt_sim = cfg.dt_sim.unwrap_or(DT_SIM);
                pgrad::env::Acrobot::with_substep(Default::default(), dt_sim).map_err(|e| config_err("env.dt_sim", e))?;
                Ok(EnvSpec::Acrobot {
                    dt_sim,
                    theta: cfg.theta.clone(),
                })
            }
            "puckworld" => {
                unused("mdp", cfg.mdp.is_some())?;
                unused("mu0", cfg.mu0.is_some())?;
                unused("arms", cfg.arms.is_some())?;
                unused("dt_sim", cfg.dt_sim.is_some())?;
                let config = cfg.puck.clone().unwrap_or_default();
                config.validate().map_err(|e| config_err("env.puck", e))?;
                Ok(EnvSpec::Puckworld {
                    config,
                    theta: cfg.theta.clone(),
                })
            }
            other => Err(config_err(
                "env.name",
                format!("unknown environment {other:?} (expected one of {})", ENV_NAMES.join(", ")),
            )),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            EnvSpec::Tabular { name, .. } => name,
            EnvSpec::Bandit { .. } => "bandit",
            EnvSpec::Acrobot { .. } => "acrobot",
            EnvSpec::Puckworld { .. } => "puckworld",
        }
    }

    /// The model and policy, for commands that need exact answers.
    pub fn tabular(&self, command: &str) -> CliResult<(&TabularMdp, &TabularPolicy)> {
        match self {
            EnvSpec::Tabular { mdp, policy, .. } => Ok((mdp, policy)),
            other => Err(config_err(
                "env.name",
                format!("{command} needs a tabular environment, got {:?}", other.name()),
            )),
        }
    }
}
