use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Instantaneous regret may dip this far below zero from rounding.
pub const REGRET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: u64,
    /// Arm id, or edge ids joined by `-` for a path.
    pub choice: String,
    pub reward: f64,
    pub instant_regret: f64,
    pub cumulative_regret: f64,
}

/// Per-step regret of one agent on one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub agent: String,
    pub seed: u64,
    pub config_hash: String,
    pub steps: Vec<TraceStep>,
}

impl RegretTrace {
    pub fn new(agent: impl Into<String>, seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            agent: agent.into(),
            seed,
            config_hash: config_hash.into(),
            steps: Vec::new(),
        }
    }

    pub fn cumulative(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative_regret)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, choice: String, reward: f64, instant_regret: f64) -> Result<()> {
        if !instant_regret.is_finite() || instant_regret < -REGRET_TOLERANCE {
            return Err(Error::Internal(format!(
                "instantaneous regret {instant_regret} at step {}",
                self.steps.len() + 1
            )));
        }
        let cumulative_regret = self.cumulative() + instant_regret;
        self.steps.push(TraceStep {
            step: self.steps.len() as u64 + 1,
            choice,
            reward,
            instant_regret,
            cumulative_regret,
        });
        Ok(())
    }

    /// CSV with columns `step,choice,reward,instant_regret,cumulative_regret`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for s in &self.steps {
            out.serialize(s).map_err(csv_error)?;
        }
        out.flush().map_err(|e| Error::io("trace", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, agent: &str, seed: u64) -> Result<Self> {
        let mut trace = Self::new(agent, seed, "");
        let mut rdr = csv::Reader::from_reader(r);
        for (i, row) in rdr.deserialize::<TraceStep>().enumerate() {
            let step = row.map_err(|e| Error::parse(format!("{agent} seed {seed} row {}", i + 1), e.to_string()))?;
            if step.step != i as u64 + 1 {
                return Err(Error::parse(
                    format!("{agent} seed {seed} row {}", i + 1),
                    format!("step {} out of sequence", step.step),
                ));
            }
            trace.steps.push(step);
        }
        Ok(trace)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::parse("csv", e.to_string())
}
