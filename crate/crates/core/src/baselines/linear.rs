use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::policy::{Agent, ArmScore, Observation};
use crate::rng::{derive_seed, source, RandomSource};
use crate::tree::FeatureVector;
use crate::{Error, Result};

/// Ridge regression state `A = λI + Σ x xᵀ`, `b = Σ r x`.
///
/// `A⁻¹` is kept current with Sherman–Morrison for UCB scoring; the Cholesky
/// factor of `A` is kept current with rank-one updates for posterior draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearArmModel {
    pub lambda: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    a_inv: Option<DMatrix<f64>>,
    chol: Option<Cholesky<f64, Dyn>>,
}

/// Which derived quantities a [`LinearArmModel`] maintains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearState {
    Inverse,
    Cholesky,
}

impl LinearArmModel {
    pub fn new(dim: usize, lambda: f64, state: LinearState) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("ridge lambda {lambda} must be > 0")));
        }
        let a = DMatrix::identity(dim, dim) * lambda;
        let (a_inv, chol) = match state {
            LinearState::Inverse => (Some(DMatrix::identity(dim, dim) / lambda), None),
            LinearState::Cholesky => (None, Cholesky::new(a.clone())),
        };
        Ok(Self {
            lambda,
            a,
            b: DVector::zeros(dim),
            a_inv,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn vector(&self, x: &FeatureVector) -> Result<DVector<f64>> {
        if x.numeric_values.len() != self.dim() || !x.categorical_values.is_empty() {
            return Err(Error::SchemaMismatch(format!(
                "linear model of dimension {} got {} numeric and {} categorical values",
                self.dim(),
                x.numeric_values.len(),
                x.categorical_values.len()
            )));
        }
        Ok(DVector::from_column_slice(&x.numeric_values))
    }

    pub fn update(&mut self, x: &FeatureVector, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::NonFinite(format!("reward {reward}")));
        }
        let v = self.vector(x)?;
        self.a.ger(1.0, &v, &v, 1.0);
        self.b.axpy(reward, &v, 1.0);
        if let Some(inv) = &mut self.a_inv {
            let u = &*inv * &v;
            let denom = 1.0 + v.dot(&u);
            inv.ger(-1.0 / denom, &u, &u, 1.0);
        }
        if let Some(c) = &mut self.chol {
            c.rank_one_update(&v, 1.0);
        }
        Ok(())
    }

    /// `θ = A⁻¹ b`.
    pub fn theta(&self) -> DVector<f64> {
        match (&self.a_inv, &self.chol) {
            (Some(inv), _) => inv * &self.b,
            (None, Some(c)) => c.solve(&self.b),
            (None, None) => unreachable!("model keeps an inverse or a factor"),
        }
    }

    /// `θᵀx + α sqrt(xᵀ A⁻¹ x)`.
    pub fn ucb(&self, x: &FeatureVector, alpha: f64) -> Result<f64> {
        let v = self.vector(x)?;
        let inv = self
            .a_inv
            .as_ref()
            .ok_or_else(|| Error::Internal("UCB scoring needs the inverse design matrix".into()))?;
        let u = inv * &v;
        let width = v.dot(&u).max(0.0).sqrt();
        Ok(self.b.dot(&u) + alpha * width)
    }

    /// `θ̃ ~ N(θ, v² A⁻¹)`.
    pub fn sample_theta(&self, v: f64, rng: &mut RandomSource) -> Result<DVector<f64>> {
        let c = self
            .chol
            .as_ref()
            .ok_or_else(|| Error::Internal("posterior draws need the Cholesky factor".into()))?;
        let theta = c.solve(&self.b);
        if v == 0.0 {
            return Ok(theta);
        }
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let w = c
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
        Ok(theta + w * v)
    }

    pub fn predict_with(&self, theta: &DVector<f64>, x: &FeatureVector) -> Result<f64> {
        Ok(theta.dot(&self.vector(x)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LinearRule {
    LinUcb { alpha: f64 },
    LinTs { v: f64 },
}

/// LinUCB / LinTS. With `shared` one model scores every arm (pair it with
/// the disjoint encoding); otherwise each arm gets its own model over its
/// own context.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearAgent {
    pub rule: LinearRule,
    pub lambda: f64,
    pub shared: bool,
    dim: usize,
    models: Vec<Option<LinearArmModel>>,
    rng: RandomSource,
    updates: u64,
}

impl LinearAgent {
    pub fn new(rule: LinearRule, lambda: f64, shared: bool, dim: usize, seed: u64) -> Result<Self> {
        let state = match rule {
            LinearRule::LinUcb { alpha } if alpha.is_finite() && alpha >= 0.0 => LinearState::Inverse,
            LinearRule::LinTs { v } if v.is_finite() && v >= 0.0 => LinearState::Cholesky,
            _ => return Err(Error::InvalidArgument(format!("{rule:?}: exploration must be finite and >= 0"))),
        };
        let first = LinearArmModel::new(dim, lambda, state)?;
        Ok(Self {
            rule,
            lambda,
            shared,
            dim,
            models: vec![Some(first)],
            rng: source(derive_seed(seed, 0x11)),
            updates: 0,
        })
    }

    fn state(&self) -> LinearState {
        match self.rule {
            LinearRule::LinUcb { .. } => LinearState::Inverse,
            LinearRule::LinTs { .. } => LinearState::Cholesky,
        }
    }

    fn slot(&self, arm: usize) -> usize {
        if self.shared {
            0
        } else {
            arm
        }
    }

    fn model_mut(&mut self, arm: usize) -> Result<&mut LinearArmModel> {
        let slot = self.slot(arm);
        if self.models.len() <= slot {
            self.models.resize(slot + 1, None);
        }
        if self.models[slot].is_none() {
            self.models[slot] = Some(LinearArmModel::new(self.dim, self.lambda, self.state())?);
        }
        Ok(self.models[slot].as_mut().expect("just created"))
    }

    pub fn model(&self, arm: usize) -> Option<&LinearArmModel> {
        self.models.get(self.slot(arm)).and_then(Option::as_ref)
    }
}

impl Agent for LinearAgent {
    fn scores(&mut self, _t: u64, contexts: &[FeatureVector]) -> Result<Vec<ArmScore>> {
        let slots = if self.shared { 1 } else { contexts.len() };
        for arm in 0..slots {
            self.model_mut(arm)?;
        }
        let mut out = Vec::with_capacity(contexts.len());
        match self.rule {
            LinearRule::LinUcb { alpha } => {
                for (arm, x) in contexts.iter().enumerate() {
                    let m = self.models[self.slot(arm)].as_ref().expect("created above");
                    out.push(score(arm, m.ucb(x, alpha)?));
                }
            }
            LinearRule::LinTs { v } => {
                // One parameter draw per model per round.
                let thetas = (0..slots)
                    .map(|s| {
                        let m = self.models[s].as_ref().expect("created above");
                        m.sample_theta(v, &mut self.rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (arm, x) in contexts.iter().enumerate() {
                    let slot = self.slot(arm);
                    let m = self.models[slot].as_ref().expect("created above");
                    out.push(score(arm, m.predict_with(&thetas[slot], x)?));
                }
            }
        }
        Ok(out)
    }

    fn observe_batch(&mut self, _t: u64, batch: &[Observation]) -> Result<()> {
        for o in batch {
            self.model_mut(o.arm)?.update(&o.context, o.reward)?;
            self.updates += 1;
        }
        Ok(())
    }

    fn rng(&mut self) -> &mut RandomSource {
        &mut self.rng
    }

    fn fits(&self) -> u64 {
        self.updates
    }

    fn fit_seconds(&self) -> f64 {
        0.0
    }
}

fn score(arm: usize, score: f64) -> ArmScore {
    ArmScore {
        arm,
        score,
        posterior: None,
    }
}

/// `θᵀx + α sqrt(xᵀ A⁻¹ x)`.
pub fn linucb_score(m: &LinearArmModel, x: &FeatureVector, alpha: f64) -> Result<f64> {
    m.ucb(x, alpha)
}

/// `θ̃ᵀx` with a fresh `θ̃ ~ N(θ, v² A⁻¹)`.
pub fn lints_sample(m: &LinearArmModel, x: &FeatureVector, v: f64, rng: &mut RandomSource) -> Result<f64> {
    let theta = m.sample_theta(v, rng)?;
    m.predict_with(&theta, x)
}
