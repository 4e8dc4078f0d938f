use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{AgentSpec, Encoding, EnvironmentSpec, ExperimentConfig, LinearRuleKind, Variant};
use super::dataset::{ingest_dataset, DatasetSchema};
use super::report::{summarize, RunSummary, SeedMeta, SeedTiming};
use crate::baselines::{LinearAgent, LinearRule, TreeBootstrapAgent, Ucb1NormalAgent};
use crate::env::{
    generate_grid, ClassificationBanditEnv, Dataset, DisjointEncoder, HybridEncoder, NavState, NavigationEnv,
    RegretTrace, RoadNetwork, TraceStep,
};
use crate::exec;
use crate::policy::{select_arm, select_super_arm, Agent, ArmScore, Observation, TreeEnsembleAgent};
use crate::rng::{derive_seed_tagged, source, RandomSource};
use crate::tree::{FeatureSchema, FeatureVector};
use crate::{Error, Result};

/// Environment inputs shared read-only by every run.
#[derive(Debug, Clone)]
pub enum Workload {
    Classification {
        data: Arc<Dataset>,
    },
    Navigation {
        net: Arc<RoadNetwork>,
        origin: usize,
        dest: usize,
        /// `(mean, sd)` of every edge-context feature over edges and hours.
        moments: Vec<(f64, f64)>,
    },
}

impl Workload {
    pub fn arms(&self) -> usize {
        match self {
            Workload::Classification { data } => data.class_count(),
            Workload::Navigation { net, .. } => net.edges.len(),
        }
    }
}

/// A validated experiment with its inputs loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// Config with every default materialized.
    pub config: ExperimentConfig,
    pub workload: Workload,
    pub variants: Vec<Variant>,
    pub hash: String,
    pub out_dir: PathBuf,
    /// Overrides and deviations worth reporting alongside results.
    pub notes: Vec<String>,
}

/// T_I for tree-ensemble agents that do not set it: ten rounds per arm, or
/// ten paths for routing.
fn default_initial_rounds(workload: &Workload) -> u64 {
    match workload {
        Workload::Classification { data } => 10 * data.class_count() as u64,
        Workload::Navigation { .. } => 10,
    }
}

impl Experiment {
    /// Validates `config`, loads its inputs and resolves the output directory
    /// under `output_root`.
    pub fn prepare(config: &ExperimentConfig, output_root: &Path) -> Result<Self> {
        config.validate()?;
        let workload = load_workload(config)?;
        let mut problems = Vec::new();
        let mut notes = Vec::new();
        match &workload {
            Workload::Classification { data } => {
                if config.horizon as usize > data.len() {
                    problems.push(format!(
                        "horizon: {} exceeds the {} usable rows of {}",
                        config.horizon,
                        data.len(),
                        data.name
                    ));
                }
                if data.dropped > 0 {
                    notes.push(format!("{}: dropped {} rows with missing values", data.name, data.dropped));
                }
                for (i, a) in config.agents.iter().enumerate() {
                    if let AgentSpec::Linear { .. } = a {
                        if a.encoding() == Encoding::Hybrid {
                            problems.push(format!("agents[{i}].encoding: linear agents need numeric contexts"));
                        }
                        if a.encoding() == Encoding::Raw && data.schema.categorical_count() > 0 {
                            problems.push(format!(
                                "agents[{i}].encoding: raw contexts with categorical features cannot feed a linear model"
                            ));
                        }
                    }
                    if a.encoding() != a.natural_encoding() && !matches!(a, AgentSpec::Ucb1Normal { .. }) {
                        let note = format!("{}: {:?} encoding used by override", a.name(), a.encoding());
                        log::warn!("{note}");
                        notes.push(note);
                    }
                }
            }
            Workload::Navigation { .. } => {}
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        for a in &config.agents {
            if let AgentSpec::TreeBootstrap { bootstrap, .. } = a {
                if bootstrap.refit_stride > 1 {
                    let note = format!("{}: per-arm models refit every {} rounds", a.name(), bootstrap.refit_stride);
                    log::warn!("{note}");
                    notes.push(note);
                }
            }
        }
        let mut resolved = config.resolved(default_initial_rounds(&workload));
        if let (EnvironmentSpec::Navigation { origin, destination, .. }, Workload::Navigation { origin: o, dest: d, .. }) =
            (&mut resolved.environment, &workload)
        {
            *origin = Some(*o);
            *destination = Some(*d);
        }
        let out = PathBuf::from(&resolved.output_dir);
        let out_dir = if out.is_absolute() { out } else { output_root.join(out) };
        Ok(Self {
            hash: resolved.hash(),
            variants: resolved.variants(),
            config: resolved,
            workload,
            out_dir,
            notes,
        })
    }

    /// Runs every (variant, seed) pair, in parallel, then writes the summary.
    /// Seeds whose trace already exists are reused; interrupted seeds resume
    /// from their last checkpoint.
    pub fn run(&self) -> Result<RunSummary> {
        self.claim_output_dir()?;
        let mut jobs = Vec::new();
        for v in &self.variants {
            for &seed in &self.config.seeds {
                jobs.push((v, seed));
            }
        }
        let results = exec::map_vec(jobs, |_, (v, seed)| self.run_seed(v, seed));
        for r in results {
            r?;
        }
        let summary = summarize(&self.out_dir)?;
        let text = serde_json::to_string_pretty(&summary)? + "\n";
        write_atomic(&self.out_dir.join("summary.json"), text.as_bytes())?;
        let timing = super::report::collect_timing(&self.out_dir)?;
        write_atomic(
            &self.out_dir.join("timing.json"),
            (serde_json::to_string_pretty(&timing)? + "\n").as_bytes(),
        )?;
        Ok(summary)
    }

    fn claim_output_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join("config.resolved.toml");
        let text = self.config.to_toml();
        match std::fs::read_to_string(&path) {
            Ok(existing) if existing != text => {
                let other = ExperimentConfig::from_toml(&existing).map(|c| c.hash()).unwrap_or_default();
                return Err(Error::Validation(vec![format!(
                    "output_dir: {} holds results of another config ({other}); choose a fresh directory",
                    self.out_dir.display()
                )]));
            }
            Ok(_) => {}
            Err(_) => write_atomic(&path, text.as_bytes())?,
        }
        let notes = path.with_file_name("notes.txt");
        if !self.notes.is_empty() {
            write_atomic(&notes, (self.notes.join("\n") + "\n").as_bytes())?;
        }
        Ok(())
    }

    pub fn trace_path(&self, variant: &str, seed: u64) -> PathBuf {
        trace_path(&self.out_dir, variant, seed)
    }

    fn checkpoint_path(&self, variant: &str, seed: u64) -> PathBuf {
        self.out_dir.join("checkpoints").join(variant).join(format!("seed_{seed}.json"))
    }

    /// Plays one variant on one seed and writes its trace and metadata.
    pub fn run_seed(&self, v: &Variant, seed: u64) -> Result<()> {
        let trace_file = self.trace_path(&v.name, seed);
        let meta_file = trace_file.with_extension("json");
        if trace_file.exists() && meta_file.exists() {
            let f = std::fs::File::open(&trace_file).map_err(|e| Error::io(&trace_file, e))?;
            if RegretTrace::read_csv(f, &v.name, seed)?.len() as u64 == self.config.horizon {
                return Ok(());
            }
        }
        let start = Instant::now();
        let mut run = SeedRun::start(self, v, seed)?;
        let ckpt = self.checkpoint_path(&v.name, seed);
        if let Ok(text) = std::fs::read_to_string(&ckpt) {
            let saved: Checkpoint = serde_json::from_str(&text)?;
            if saved.config_hash == self.hash {
                run.resume(saved)?;
            }
        }
        while run.round < self.config.horizon {
            run.play_round()?;
            let every = self.config.checkpoint_every;
            if every > 0 && run.round % every == 0 && run.round < self.config.horizon {
                let text = serde_json::to_string(&run.checkpoint(&self.hash))?;
                write_atomic(&ckpt, text.as_bytes())?;
            }
        }
        let mut csv = Vec::new();
        run.trace.write_csv(&mut csv)?;
        write_atomic(&trace_file, &csv)?;
        run.timing.wall_seconds += start.elapsed().as_secs_f64();
        run.timing.fit_seconds = run.agent.fit_seconds();
        let meta = SeedMeta {
            agent: v.name.clone(),
            base: v.base.clone(),
            setting: v.setting.clone(),
            feedback_batch_size: v.feedback_batch_size,
            seed,
            fits: run.agent.fits(),
            timing: run.timing.clone(),
        };
        write_atomic(&meta_file, (serde_json::to_string_pretty(&meta)? + "\n").as_bytes())?;
        if ckpt.exists() {
            std::fs::remove_file(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        }
        log::info!(
            "{} seed {seed}: regret {:.3} after {} rounds ({:.1}s)",
            v.name,
            run.trace.cumulative(),
            run.round,
            meta.timing.wall_seconds
        );
        Ok(())
    }

    /// Plays the first `rounds` rounds and leaves a checkpoint behind, as an
    /// interrupted run would.
    pub fn run_seed_partial(&self, v: &Variant, seed: u64, rounds: u64) -> Result<()> {
        self.claim_output_dir()?;
        let mut run = SeedRun::start(self, v, seed)?;
        while run.round < rounds.min(self.config.horizon) {
            run.play_round()?;
        }
        let text = serde_json::to_string(&run.checkpoint(&self.hash))?;
        write_atomic(&self.checkpoint_path(&v.name, seed), text.as_bytes())
    }

    /// Plays one variant on one seed in memory, without touching the disk.
    pub fn simulate(&self, v: &Variant, seed: u64) -> Result<(RegretTrace, u64)> {
        let mut run = SeedRun::start(self, v, seed)?;
        while run.round < self.config.horizon {
            run.play_round()?;
        }
        let fits = run.agent.fits();
        Ok((run.trace, fits))
    }
}

pub(crate) fn trace_path(out_dir: &Path, variant: &str, seed: u64) -> PathBuf {
    out_dir.join("traces").join(variant).join(format!("seed_{seed}.csv"))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn load_workload(config: &ExperimentConfig) -> Result<Workload> {
    match &config.environment {
        EnvironmentSpec::Classification { dataset, schema } => {
            let schema_path = schema.clone().unwrap_or_else(|| dataset.with_extension("schema.toml"));
            let schema = DatasetSchema::load(&schema_path)?;
            let data = ingest_dataset(dataset, &schema)?;
            if data.class_count() < 2 {
                return Err(Error::Validation(vec![format!(
                    "environment.dataset: {} has fewer than two classes",
                    dataset.display()
                )]));
            }
            Ok(Workload::Classification { data: Arc::new(data) })
        }
        EnvironmentSpec::Navigation {
            network,
            grid,
            network_seed,
            origin,
            destination,
        } => {
            let net = match network {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    RoadNetwork::from_text(&text)?
                }
                None => generate_grid(&grid.clone().unwrap_or_default(), &mut source(*network_seed))?,
            };
            let n = net.vertices.len();
            let origin = origin.unwrap_or(0);
            let dest = destination.unwrap_or(n.saturating_sub(1));
            let mut problems = Vec::new();
            if origin >= n {
                problems.push(format!("environment.origin: {origin} is not a vertex (network has {n})"));
            }
            if dest >= n || dest == origin {
                problems.push(format!("environment.destination: {dest} must be a vertex other than the origin"));
            }
            if !problems.is_empty() {
                return Err(Error::Validation(problems));
            }
            let moments = edge_context_moments(&net);
            Ok(Workload::Navigation {
                net: Arc::new(net),
                origin,
                dest,
                moments,
            })
        }
    }
}

/// Mean and population SD of each edge-context feature over every edge at
/// the 24 half-past hours; an SD of 0 becomes 1.
fn edge_context_moments(net: &RoadNetwork) -> Vec<(f64, f64)> {
    let schema = RoadNetwork::context_schema();
    let mut rows = Vec::new();
    for h in 0..24 {
        for e in 0..net.edges.len() {
            rows.push(net.edge_context(e, h as f64 + 0.5, &schema).numeric_values);
        }
    }
    let n = rows.len() as f64;
    (0..schema.numeric_count)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect()
}

/// Every agent kind behind one serializable type.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnyAgent {
    TreeEnsemble(TreeEnsembleAgent),
    Linear(LinearAgent),
    TreeBootstrap(TreeBootstrapAgent),
    Ucb1Normal(Ucb1NormalAgent),
}

impl AnyAgent {
    fn inner(&mut self) -> &mut dyn Agent {
        match self {
            AnyAgent::TreeEnsemble(a) => a,
            AnyAgent::Linear(a) => a,
            AnyAgent::TreeBootstrap(a) => a,
            AnyAgent::Ucb1Normal(a) => a,
        }
    }

    fn inner_ref(&self) -> &dyn Agent {
        match self {
            AnyAgent::TreeEnsemble(a) => a,
            AnyAgent::Linear(a) => a,
            AnyAgent::TreeBootstrap(a) => a,
            AnyAgent::Ucb1Normal(a) => a,
        }
    }
}

impl Agent for AnyAgent {
    fn scores(&mut self, t: u64, contexts: &[FeatureVector]) -> Result<Vec<ArmScore>> {
        self.inner().scores(t, contexts)
    }

    fn observe_batch(&mut self, t: u64, batch: &[Observation]) -> Result<()> {
        self.inner().observe_batch(t, batch)
    }

    fn rng(&mut self) -> &mut RandomSource {
        self.inner().rng()
    }

    fn fits(&self) -> u64 {
        self.inner_ref().fits()
    }

    fn fit_seconds(&self) -> f64 {
        self.inner_ref().fit_seconds()
    }
}

/// Maps an environment context to the vector an agent sees for one arm.
enum ContextMap {
    Raw,
    Hybrid(HybridEncoder),
    Disjoint(DisjointEncoder),
    Standardize(Vec<(f64, f64)>),
}

impl ContextMap {
    fn apply(&self, x: &FeatureVector, arm: usize) -> Result<FeatureVector> {
        match self {
            ContextMap::Raw => Ok(x.clone()),
            ContextMap::Hybrid(e) => e.encode(x, arm),
            ContextMap::Disjoint(e) => e.encode(x, arm),
            ContextMap::Standardize(moments) => Ok(FeatureVector {
                numeric_values: x
                    .numeric_values
                    .iter()
                    .zip(moments)
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect(),
                categorical_values: x.categorical_values.clone(),
                schema_id: x.schema_id,
            }),
        }
    }

    fn output_dim(&self, input: &FeatureSchema) -> usize {
        match self {
            ContextMap::Disjoint(e) => e.output.numeric_count,
            _ => input.numeric_count,
        }
    }
}

fn build_agent(exp: &Experiment, v: &Variant, seed: u64) -> Result<(AnyAgent, ContextMap)> {
    let agent_seed = derive_seed_tagged(seed, &v.name);
    let classification = match &exp.workload {
        Workload::Classification { data } => Some(data),
        Workload::Navigation { .. } => None,
    };
    let input = match classification {
        Some(d) => d.schema.clone(),
        None => RoadNetwork::context_schema(),
    };
    let arms = exp.workload.arms();
    let standardize_map = |standardize: bool| match &exp.workload {
        Workload::Navigation { moments, .. } if standardize => ContextMap::Standardize(moments.clone()),
        _ => ContextMap::Raw,
    };
    let map = match (classification, v.spec.encoding()) {
        (None, _) => match &v.spec {
            AgentSpec::Linear { standardize, .. } => standardize_map(*standardize),
            _ => ContextMap::Raw,
        },
        (Some(_), Encoding::Raw) => ContextMap::Raw,
        (Some(_), Encoding::Hybrid) => ContextMap::Hybrid(HybridEncoder::new(&input, arms)?),
        (Some(d), Encoding::Disjoint) => {
            let scale = match &v.spec {
                AgentSpec::Linear { standardize: false, .. } => None,
                _ => Some(d.numeric_moments()),
            };
            ContextMap::Disjoint(DisjointEncoder::new(&input, arms, scale)?)
        }
    };
    let agent = match &v.spec {
        AgentSpec::TreeEnsemble { policy, ensemble, .. } => {
            let t_i = policy.initial_rounds.unwrap_or(default_initial_rounds(&exp.workload));
            AnyAgent::TreeEnsemble(TreeEnsembleAgent::new(policy.clone(), ensemble.clone(), t_i, agent_seed)?)
        }
        AgentSpec::Linear {
            rule,
            exploration,
            lambda,
            ..
        } => {
            let rule = match rule {
                LinearRuleKind::LinUcb => LinearRule::LinUcb { alpha: *exploration },
                LinearRuleKind::LinTs => LinearRule::LinTs { v: *exploration },
            };
            let shared = matches!(map, ContextMap::Disjoint(_));
            AnyAgent::Linear(LinearAgent::new(rule, *lambda, shared, map.output_dim(&input), agent_seed)?)
        }
        AgentSpec::TreeBootstrap { bootstrap, .. } => {
            AnyAgent::TreeBootstrap(TreeBootstrapAgent::new(bootstrap.clone(), agent_seed)?)
        }
        AgentSpec::Ucb1Normal { .. } => AnyAgent::Ucb1Normal(Ucb1NormalAgent::new(agent_seed)),
    };
    Ok((agent, map))
}

enum EnvInstance {
    Classification(ClassificationBanditEnv),
    Navigation(Box<NavigationEnv>, crate::env::PathOracle),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EnvState {
    Classification { order: Vec<u32>, position: usize },
    Navigation(Box<NavState>),
}

/// Serialized state of an interrupted seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    config_hash: String,
    round: u64,
    agent: AnyAgent,
    env: EnvState,
    pending: Vec<Observation>,
    pending_rounds: u64,
    steps: Vec<TraceStep>,
}

struct SeedRun<'a> {
    horizon: u64,
    batch: u64,
    round: u64,
    agent: AnyAgent,
    map: ContextMap,
    env: EnvInstance,
    pending: Vec<Observation>,
    pending_rounds: u64,
    trace: RegretTrace,
    timing: SeedTiming,
    workload: &'a Workload,
}

impl<'a> SeedRun<'a> {
    fn start(exp: &'a Experiment, v: &Variant, seed: u64) -> Result<Self> {
        let (agent, map) = build_agent(exp, v, seed)?;
        let env = match &exp.workload {
            Workload::Classification { data } => {
                let mut rng = source(derive_seed_tagged(seed, "environment"));
                EnvInstance::Classification(ClassificationBanditEnv::new(data.clone(), &mut rng)?)
            }
            Workload::Navigation { net, origin, dest, .. } => {
                let env = NavigationEnv::new(
                    net.clone(),
                    *origin,
                    *dest,
                    source(derive_seed_tagged(seed, "hours")),
                    source(derive_seed_tagged(seed, "travel-times")),
                )?;
                let oracle = env.oracle();
                EnvInstance::Navigation(Box::new(env), oracle)
            }
        };
        Ok(Self {
            horizon: exp.config.horizon,
            batch: v.feedback_batch_size,
            round: 0,
            agent,
            map,
            env,
            pending: Vec::new(),
            pending_rounds: 0,
            trace: RegretTrace::new(v.name.clone(), seed, exp.hash.clone()),
            timing: SeedTiming::default(),
            workload: &exp.workload,
        })
    }

    fn checkpoint(&self, hash: &str) -> Checkpoint {
        let env = match &self.env {
            EnvInstance::Classification(e) => EnvState::Classification {
                order: e.order().to_vec(),
                position: e.position(),
            },
            EnvInstance::Navigation(e, _) => EnvState::Navigation(Box::new(e.state())),
        };
        Checkpoint {
            config_hash: hash.to_string(),
            round: self.round,
            agent: self.agent.clone(),
            env,
            pending: self.pending.clone(),
            pending_rounds: self.pending_rounds,
            steps: self.trace.steps.clone(),
        }
    }

    fn resume(&mut self, c: Checkpoint) -> Result<()> {
        match (&mut self.env, c.env) {
            (EnvInstance::Classification(e), EnvState::Classification { order, position }) => {
                let Workload::Classification { data } = self.workload else {
                    return Err(Error::Internal("workload and environment disagree".into()));
                };
                *e = ClassificationBanditEnv::with_order(data.clone(), order, position);
            }
            (EnvInstance::Navigation(e, _), EnvState::Navigation(state)) => e.restore_state(*state),
            _ => return Err(Error::Internal("checkpoint is for another environment".into())),
        }
        self.round = c.round;
        self.agent = c.agent;
        self.pending = c.pending;
        self.pending_rounds = c.pending_rounds;
        self.trace.steps = c.steps;
        Ok(())
    }

    fn play_round(&mut self) -> Result<()> {
        let t = self.round + 1;
        match &mut self.env {
            EnvInstance::Classification(env) => {
                let clock = Instant::now();
                let x = env.context()?.clone();
                let arms = env.arms();
                let contexts = (0..arms).map(|k| self.map.apply(&x, k)).collect::<Result<Vec<_>>>()?;
                self.timing.env_seconds += clock.elapsed().as_secs_f64();
                let clock = Instant::now();
                let scores = self.agent.scores(t, &contexts)?;
                let arm = select_arm(&scores, self.agent.rng())?;
                self.timing.select_seconds += clock.elapsed().as_secs_f64();
                let clock = Instant::now();
                let reward = env.step(arm)?;
                self.timing.env_seconds += clock.elapsed().as_secs_f64();
                // The true class pays 1, so the best expected reward is 1.
                self.trace.push(arm.to_string(), reward, 1.0 - reward)?;
                self.pending.push(Observation {
                    arm,
                    context: contexts.into_iter().nth(arm).expect("arm is in range"),
                    reward,
                });
            }
            EnvInstance::Navigation(env, oracle) => {
                let clock = Instant::now();
                env.begin_round();
                let contexts = env
                    .contexts()
                    .iter()
                    .enumerate()
                    .map(|(e, x)| self.map.apply(x, e))
                    .collect::<Result<Vec<_>>>()?;
                self.timing.env_seconds += clock.elapsed().as_secs_f64();
                let clock = Instant::now();
                let scores = self.agent.scores(t, &contexts)?;
                let path = select_super_arm(&scores, oracle)?;
                self.timing.select_seconds += clock.elapsed().as_secs_f64();
                let clock = Instant::now();
                let fb = env.step(&path)?;
                self.timing.env_seconds += clock.elapsed().as_secs_f64();
                let total: f64 = fb.times.iter().sum();
                let choice = path.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("-");
                self.trace.push(choice, -total, fb.regret)?;
                for (&e, &time) in path.iter().zip(&fb.times) {
                    self.pending.push(Observation {
                        arm: e,
                        context: contexts[e].clone(),
                        reward: -time,
                    });
                }
            }
        }
        self.round = t;
        self.pending_rounds += 1;
        if self.pending_rounds == self.batch && t < self.horizon {
            let clock = Instant::now();
            self.agent.observe_batch(t, &self.pending)?;
            self.timing.update_seconds += clock.elapsed().as_secs_f64();
            self.pending.clear();
            self.pending_rounds = 0;
        }
        Ok(())
    }
}
