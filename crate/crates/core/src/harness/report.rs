use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::trace_path;
use crate::env::RegretTrace;
use crate::{Error, Result};

/// Wall-clock split of one seed's run, in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedTiming {
    pub wall_seconds: f64,
    /// Scoring and arm selection, including fits triggered while scoring.
    pub select_seconds: f64,
    /// Feedback absorption, including scheduled rebuilds.
    pub update_seconds: f64,
    pub env_seconds: f64,
    /// Model fitting alone.
    pub fit_seconds: f64,
}

/// Sidecar written next to each trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMeta {
    pub agent: String,
    pub base: String,
    pub setting: Option<(String, f64)>,
    pub feedback_batch_size: u64,
    pub seed: u64,
    pub fits: u64,
    pub timing: SeedTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: String,
    pub base: String,
    pub setting: Option<(String, f64)>,
    pub feedback_batch_size: u64,
    pub seeds: Vec<u64>,
    pub final_regret: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub sd: f64,
    pub fits: Vec<u64>,
}

/// Final cumulative regret per agent across seeds. Deterministic given the
/// config and seeds; timings live in `timing.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub horizon: u64,
    pub agents: Vec<AgentSummary>,
    /// Lowest-regret variant of every agent that ran more than one.
    pub best: BTreeMap<String, String>,
}

impl RunSummary {
    pub fn agent(&self, name: &str) -> Option<&AgentSummary> {
        self.agents.iter().find(|a| a.agent == name)
    }

    /// The best variant of `base`, or the agent itself when it has one variant.
    pub fn best_of(&self, base: &str) -> Option<&AgentSummary> {
        self.agent(self.best.get(base).map_or(base, String::as_str))
    }
}

/// Mean and sample SD, summed in input order.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

struct SeedRecord {
    meta: SeedMeta,
    trace: RegretTrace,
}

/// Every trace under `dir/traces`, grouped by agent name and sorted by seed.
fn load_traces(dir: &Path) -> Result<BTreeMap<String, Vec<SeedRecord>>> {
    let root = dir.join("traces");
    let entries = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
    let mut out: BTreeMap<String, Vec<SeedRecord>> = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&root, e))?;
        if !entry.path().is_dir() {
            continue;
        }
        let agent = entry.file_name().to_string_lossy().into_owned();
        let sub = entry.path();
        let files = std::fs::read_dir(&sub).map_err(|e| Error::io(&sub, e))?;
        for f in files {
            let path = f.map_err(|e| Error::io(&sub, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let meta: SeedMeta = serde_json::from_str(&text)?;
            let csv = trace_path(dir, &agent, meta.seed);
            let file = std::fs::File::open(&csv).map_err(|e| Error::io(&csv, e))?;
            let trace = RegretTrace::read_csv(file, &agent, meta.seed)?;
            out.entry(agent.clone()).or_default().push(SeedRecord { meta, trace });
        }
    }
    for records in out.values_mut() {
        records.sort_by_key(|r| r.meta.seed);
    }
    out.retain(|_, v| !v.is_empty());
    if out.is_empty() {
        return Err(Error::Validation(vec![format!("{}: no traces found", root.display())]));
    }
    Ok(out)
}

fn common_horizon<'a>(traces: impl Iterator<Item = &'a RegretTrace>) -> Result<u64> {
    let mut horizon = None;
    for t in traces {
        match horizon {
            None => horizon = Some(t.len()),
            Some(h) if h != t.len() => {
                return Err(Error::Validation(vec![format!(
                    "traces: {} seed {} has {} steps, others have {h}",
                    t.agent,
                    t.seed,
                    t.len()
                )]))
            }
            _ => {}
        }
    }
    Ok(horizon.unwrap_or(0) as u64)
}

/// Rebuilds the run summary from the traces in an output directory.
pub fn summarize(dir: &Path) -> Result<RunSummary> {
    let records = load_traces(dir)?;
    let horizon = common_horizon(records.values().flatten().map(|r| &r.trace))?;
    let config_hash = std::fs::read_to_string(dir.join("config.resolved.toml"))
        .ok()
        .and_then(|t| ExperimentConfig::from_toml(&t).ok())
        .map(|c| c.hash())
        .unwrap_or_default();
    let mut agents = Vec::new();
    for (agent, recs) in &records {
        let final_regret: Vec<f64> = recs.iter().map(|r| r.trace.cumulative()).collect();
        let (mean, sd) = mean_sd(&final_regret);
        let m = &recs[0].meta;
        agents.push(AgentSummary {
            agent: agent.clone(),
            base: m.base.clone(),
            setting: m.setting.clone(),
            feedback_batch_size: m.feedback_batch_size,
            seeds: recs.iter().map(|r| r.meta.seed).collect(),
            final_regret,
            mean,
            sd,
            fits: recs.iter().map(|r| r.meta.fits).collect(),
        });
    }
    let mut groups: BTreeMap<&str, Vec<&AgentSummary>> = BTreeMap::new();
    for a in &agents {
        groups.entry(a.base.as_str()).or_default().push(a);
    }
    let best = groups
        .into_iter()
        .filter(|(_, v)| v.len() > 1)
        .map(|(base, v)| {
            let b = v
                .iter()
                .min_by(|x, y| x.mean.total_cmp(&y.mean))
                .expect("group is non-empty");
            (base.to_string(), b.agent.clone())
        })
        .collect();
    Ok(RunSummary {
        config_hash,
        horizon,
        agents,
        best,
    })
}

/// Per-seed timings keyed by agent, then seed.
pub fn collect_timing(dir: &Path) -> Result<BTreeMap<String, BTreeMap<u64, SeedTiming>>> {
    Ok(load_traces(dir)?
        .into_iter()
        .map(|(agent, recs)| (agent, recs.into_iter().map(|r| (r.meta.seed, r.meta.timing)).collect()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub step: u64,
    pub agent: String,
    pub mean: f64,
    pub sd: f64,
}

/// Mean cumulative-regret curve per agent with its per-step sample SD.
pub fn plot_rows(traces: &[RegretTrace]) -> Result<Vec<PlotRow>> {
    if traces.is_empty() {
        return Err(Error::Validation(vec!["traces: at least one trace is needed".into()]));
    }
    let horizon = common_horizon(traces.iter())? as usize;
    let mut by_agent: BTreeMap<&str, Vec<&RegretTrace>> = BTreeMap::new();
    for t in traces {
        by_agent.entry(t.agent.as_str()).or_default().push(t);
    }
    let mut rows = Vec::with_capacity(horizon * by_agent.len());
    for (agent, ts) in by_agent {
        for i in 0..horizon {
            let values: Vec<f64> = ts.iter().map(|t| t.steps[i].cumulative_regret).collect();
            let (mean, sd) = mean_sd(&values);
            rows.push(PlotRow {
                step: i as u64 + 1,
                agent: agent.to_string(),
                mean,
                sd,
            });
        }
    }
    Ok(rows)
}

/// Long-format CSV `step,agent,mean,sd` for every agent in an output directory.
pub fn emit_plot_data(dir: &Path) -> Result<String> {
    let traces: Vec<RegretTrace> = load_traces(dir)?.into_values().flatten().map(|r| r.trace).collect();
    plot_csv(&plot_rows(&traces)?)
}

pub fn plot_csv(rows: &[PlotRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::parse("plot data", e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::parse("plot data", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
