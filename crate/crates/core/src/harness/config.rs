use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::BootstrapConfig;
use crate::ensemble::EnsembleConfig;
use crate::env::GridSpec;
use crate::policy::PolicyConfig;
use crate::{Error, Result};

/// One experiment: an environment, the agents to compare, and the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub horizon: u64,
    /// Number of seeds; with no explicit list the seeds are `0..repetitions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<u64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Rounds per feedback batch; 1 is immediate feedback.
    #[serde(default = "one")]
    pub feedback_batch_size: u64,
    /// Relative paths resolve against the output root.
    #[serde(default)]
    pub output_dir: String,
    /// Rounds between policy checkpoints; 0 disables checkpointing.
    #[serde(default)]
    pub checkpoint_every: u64,
    pub environment: EnvironmentSpec,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub sweeps: Vec<SweepSpec>,
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Classification {
        dataset: PathBuf,
        /// Defaults to the dataset path with a `.schema.toml` extension.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schema: Option<PathBuf>,
    },
    Navigation {
        /// Road network text file; without one a grid is generated.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        network: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridSpec>,
        #[serde(default)]
        network_seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        destination: Option<usize>,
    },
}

/// How a raw classification context becomes each arm's feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Arm id prepended as a categorical feature.
    Hybrid,
    /// One-hot, standardized, arm-blocked `K·d` vector.
    Disjoint,
    /// The row as-is; for agents with one model per arm.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearRuleKind {
    LinUcb,
    LinTs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentSpec {
    TreeEnsemble {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        encoding: Option<Encoding>,
        #[serde(default)]
        allow_encoding_mismatch: bool,
        #[serde(default)]
        policy: PolicyConfig,
        #[serde(default)]
        ensemble: EnsembleConfig,
    },
    Linear {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        encoding: Option<Encoding>,
        #[serde(default)]
        allow_encoding_mismatch: bool,
        rule: LinearRuleKind,
        /// α for LinUCB, v for LinTS.
        #[serde(default = "unit")]
        exploration: f64,
        #[serde(default = "unit")]
        lambda: f64,
        /// Exploration values to run side by side; empty runs `exploration` only.
        #[serde(default)]
        grid: Vec<f64>,
        /// Z-score numeric features with moments of the whole dataset or network.
        #[serde(default = "yes")]
        standardize: bool,
    },
    TreeBootstrap {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        encoding: Option<Encoding>,
        #[serde(default)]
        allow_encoding_mismatch: bool,
        #[serde(default)]
        bootstrap: BootstrapConfig,
    },
    Ucb1Normal {
        name: String,
    },
}

fn unit() -> f64 {
    1.0
}

impl AgentSpec {
    pub fn name(&self) -> &str {
        match self {
            AgentSpec::TreeEnsemble { name, .. }
            | AgentSpec::Linear { name, .. }
            | AgentSpec::TreeBootstrap { name, .. }
            | AgentSpec::Ucb1Normal { name } => name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AgentSpec::TreeEnsemble { .. } => "tree_ensemble",
            AgentSpec::Linear { .. } => "linear",
            AgentSpec::TreeBootstrap { .. } => "tree_bootstrap",
            AgentSpec::Ucb1Normal { .. } => "ucb1_normal",
        }
    }

    /// The encoding this kind of agent is built for.
    pub fn natural_encoding(&self) -> Encoding {
        match self {
            AgentSpec::TreeEnsemble { .. } => Encoding::Hybrid,
            AgentSpec::Linear { .. } => Encoding::Disjoint,
            AgentSpec::TreeBootstrap { .. } | AgentSpec::Ucb1Normal { .. } => Encoding::Raw,
        }
    }

    pub fn encoding(&self) -> Encoding {
        match self {
            AgentSpec::TreeEnsemble { encoding, .. }
            | AgentSpec::Linear { encoding, .. }
            | AgentSpec::TreeBootstrap { encoding, .. } => encoding.unwrap_or(self.natural_encoding()),
            AgentSpec::Ucb1Normal { .. } => Encoding::Raw,
        }
    }

    fn allows_mismatch(&self) -> bool {
        match self {
            AgentSpec::TreeEnsemble { allow_encoding_mismatch, .. }
            | AgentSpec::Linear { allow_encoding_mismatch, .. }
            | AgentSpec::TreeBootstrap { allow_encoding_mismatch, .. } => *allow_encoding_mismatch,
            AgentSpec::Ucb1Normal { .. } => true,
        }
    }

    fn set_encoding(&mut self, value: Option<Encoding>) {
        match self {
            AgentSpec::TreeEnsemble { encoding, .. }
            | AgentSpec::Linear { encoding, .. }
            | AgentSpec::TreeBootstrap { encoding, .. } => *encoding = value,
            AgentSpec::Ucb1Normal { .. } => {}
        }
    }
}

/// Parameters a sweep may vary, one at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    MaxDepth,
    NTrees,
    Exploration,
    LearningRate,
    FeedbackBatchSize,
}

impl SweepParameter {
    pub fn label(self) -> &'static str {
        match self {
            SweepParameter::MaxDepth => "max_depth",
            SweepParameter::NTrees => "n_trees",
            SweepParameter::Exploration => "exploration",
            SweepParameter::LearningRate => "learning_rate",
            SweepParameter::FeedbackBatchSize => "feedback_batch_size",
        }
    }

    fn integral(self) -> bool {
        matches!(
            self,
            SweepParameter::MaxDepth | SweepParameter::NTrees | SweepParameter::FeedbackBatchSize
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Agents the sweep applies to; empty means every tree-ensemble agent.
    #[serde(default)]
    pub agents: Vec<String>,
}

/// One concrete agent run: a configured agent plus its feedback batching.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    /// Name of the configured agent this variant came from.
    pub base: String,
    pub spec: AgentSpec,
    pub feedback_batch_size: u64,
    /// Swept or grid-searched setting, if any.
    pub setting: Option<(String, f64)>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(vec![format!("config: {}", e.to_string().trim_end())]))
    }

    /// Reads a config and makes its input paths relative to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        config.rebase_inputs(dir);
        Ok(config)
    }

    fn rebase_inputs(&mut self, dir: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        match &mut self.environment {
            EnvironmentSpec::Classification { dataset, schema } => {
                join(dataset);
                if let Some(s) = schema {
                    join(s);
                }
            }
            EnvironmentSpec::Navigation { network, .. } => {
                if let Some(n) = network {
                    join(n);
                }
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialization cannot fail")
    }

    /// Seeds after applying `repetitions`.
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repetitions.unwrap_or(1)).collect()
        } else {
            self.seeds.clone()
        }
    }

    /// Field-path problems that do not need the environment's data.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push("name: must not be empty".into());
        }
        if self.horizon == 0 {
            out.push("horizon: must be >= 1".into());
        }
        if self.feedback_batch_size == 0 {
            out.push("feedback_batch_size: must be >= 1".into());
        }
        let seeds = self.seed_list();
        if seeds.is_empty() {
            out.push("seeds: at least one seed is needed".into());
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            out.push("seeds: must be distinct".into());
        }
        if let Some(r) = self.repetitions {
            if !self.seeds.is_empty() && r as usize != self.seeds.len() {
                out.push(format!("repetitions: {r} disagrees with {} listed seeds", self.seeds.len()));
            }
        }
        if self.agents.is_empty() {
            out.push("agents: at least one agent is needed".into());
        }
        let classification = matches!(self.environment, EnvironmentSpec::Classification { .. });
        let mut names = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            let at = format!("agents[{i}]");
            let name = a.name();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                out.push(format!("{at}.name: {name:?} must be non-empty and use only letters, digits, '-', '_' or '.'"));
            }
            if !names.insert(name) {
                out.push(format!("{at}.name: duplicate agent {name:?}"));
            }
            if classification {
                if a.encoding() != a.natural_encoding() && !a.allows_mismatch() {
                    out.push(format!(
                        "{at}.encoding: {} agents use {:?} encoding; set allow_encoding_mismatch = true to override",
                        a.kind(),
                        a.natural_encoding()
                    ));
                }
            } else if !matches!(a, AgentSpec::Ucb1Normal { .. }) && a.encoding() != a.natural_encoding() {
                out.push(format!("{at}.encoding: encodings apply to classification environments only"));
            }
            match a {
                AgentSpec::TreeEnsemble { policy, ensemble, .. } => {
                    out.extend(policy.problems().into_iter().map(|p| format!("{at}.policy.{p}")));
                    out.extend(ensemble.problems().into_iter().map(|p| format!("{at}.ensemble.{p}")));
                }
                AgentSpec::Linear {
                    exploration,
                    lambda,
                    grid,
                    ..
                } => {
                    if !(exploration.is_finite() && *exploration >= 0.0) {
                        out.push(format!("{at}.exploration: {exploration} must be finite and >= 0"));
                    }
                    if !(lambda.is_finite() && *lambda > 0.0) {
                        out.push(format!("{at}.lambda: {lambda} must be > 0"));
                    }
                    for (j, g) in grid.iter().enumerate() {
                        if !(g.is_finite() && *g >= 0.0) {
                            out.push(format!("{at}.grid[{j}]: {g} must be finite and >= 0"));
                        }
                    }
                }
                AgentSpec::TreeBootstrap { bootstrap, .. } => {
                    out.extend(bootstrap.problems().into_iter().map(|p| format!("{at}.bootstrap.{p}")));
                }
                AgentSpec::Ucb1Normal { .. } => {}
            }
        }
        for (i, s) in self.sweeps.iter().enumerate() {
            let at = format!("sweeps[{i}]");
            if s.values.is_empty() {
                out.push(format!("{at}.values: must not be empty"));
            }
            for (j, v) in s.values.iter().enumerate() {
                let ok = if s.parameter.integral() {
                    v.fract() == 0.0 && *v >= 1.0
                } else if s.parameter == SweepParameter::LearningRate {
                    *v > 0.0 && *v <= 1.0
                } else {
                    v.is_finite() && *v >= 0.0
                };
                if !ok {
                    out.push(format!("{at}.values[{j}]: {v} is not a valid {}", s.parameter.label()));
                }
            }
            for name in &s.agents {
                match self.agents.iter().find(|a| a.name() == name) {
                    None => out.push(format!("{at}.agents: unknown agent {name:?}")),
                    Some(a) if !matches!(a, AgentSpec::TreeEnsemble { .. })
                        && s.parameter != SweepParameter::FeedbackBatchSize =>
                    {
                        out.push(format!("{at}.agents: {name:?} has no {}", s.parameter.label()))
                    }
                    _ => {}
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Copy with every default written out. `initial_rounds` is the T_I to
    /// use for tree-ensemble agents that leave it unset.
    pub fn resolved(&self, initial_rounds: u64) -> Self {
        let mut c = self.clone();
        c.seeds = self.seed_list();
        c.repetitions = Some(c.seeds.len() as u64);
        if c.output_dir.is_empty() {
            c.output_dir = c.name.clone();
        }
        if let EnvironmentSpec::Classification { dataset, schema } = &mut c.environment {
            if schema.is_none() {
                *schema = Some(dataset.with_extension("schema.toml"));
            }
        }
        for a in &mut c.agents {
            let enc = a.encoding();
            a.set_encoding(Some(enc));
            if let AgentSpec::TreeEnsemble { policy, .. } = a {
                policy.initial_rounds.get_or_insert(initial_rounds);
            }
        }
        c
    }

    /// Short content hash of the resolved config text.
    /// Identity of the experiment; the output location is not part of it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Concrete runs: swept agents expand into one variant per value, linear
    /// agents with a grid into one per exploration value.
    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for a in &self.agents {
            let sweeps: Vec<&SweepSpec> = self
                .sweeps
                .iter()
                .filter(|s| {
                    if s.agents.is_empty() {
                        matches!(a, AgentSpec::TreeEnsemble { .. })
                    } else {
                        s.agents.iter().any(|n| n == a.name())
                    }
                })
                .collect();
            if !sweeps.is_empty() {
                for s in sweeps {
                    for &v in &s.values {
                        out.push(swept(a, s.parameter, v, self.feedback_batch_size));
                    }
                }
                continue;
            }
            match a {
                AgentSpec::Linear { grid, .. } if !grid.is_empty() => {
                    for &g in grid {
                        let mut spec = a.clone();
                        if let AgentSpec::Linear { exploration, grid, .. } = &mut spec {
                            *exploration = g;
                            grid.clear();
                        }
                        out.push(Variant {
                            name: variant_name(a.name(), "exploration", g),
                            base: a.name().to_string(),
                            spec,
                            feedback_batch_size: self.feedback_batch_size,
                            setting: Some(("exploration".into(), g)),
                        });
                    }
                }
                _ => out.push(Variant {
                    name: a.name().to_string(),
                    base: a.name().to_string(),
                    spec: a.clone(),
                    feedback_batch_size: self.feedback_batch_size,
                    setting: None,
                }),
            }
        }
        out
    }
}

fn variant_name(base: &str, label: &str, value: f64) -> String {
    let mut s = format!("{base}[{label}=");
    write!(s, "{value}").expect("writing to a string cannot fail");
    s.push(']');
    s
}

fn swept(a: &AgentSpec, p: SweepParameter, v: f64, batch: u64) -> Variant {
    let mut spec = a.clone();
    let mut feedback_batch_size = batch;
    match (&mut spec, p) {
        (_, SweepParameter::FeedbackBatchSize) => feedback_batch_size = v as u64,
        (AgentSpec::TreeEnsemble { ensemble, .. }, SweepParameter::MaxDepth) => ensemble.max_depth = v as usize,
        (AgentSpec::TreeEnsemble { ensemble, .. }, SweepParameter::NTrees) => ensemble.n_trees = v as usize,
        (AgentSpec::TreeEnsemble { ensemble, .. }, SweepParameter::LearningRate) => ensemble.learning_rate = v,
        (AgentSpec::TreeEnsemble { policy, .. }, SweepParameter::Exploration) => policy.exploration = v,
        (AgentSpec::Linear { exploration, grid, .. }, SweepParameter::Exploration) => {
            *exploration = v;
            grid.clear();
        }
        _ => {}
    }
    Variant {
        name: variant_name(a.name(), p.label(), v),
        base: a.name().to_string(),
        spec,
        feedback_batch_size,
        setting: Some((p.label().to_string(), v)),
    }
}
