//! Synthetic interactive-recommendation environment with explicit causal
//! structure.
//!
//! The state is a unit-norm user-interest vector. An action is a continuous
//! recommendation embedding, projected into interest space by a fixed random
//! matrix. Each step draws click outcomes and drift noise from labeled,
//! disjoint RNG sub-streams, so a snapshot (state + RNG state) makes
//! `do(A := a_c)` interventions exact: restoring the snapshot and stepping
//! with a different action consumes the same exogenous noise as the factual
//! branch.
//!
//! Transition law, with interest `s`, action `a`, projection `W`:
//!
//! ```text
//! p_click  = sigmoid(g * cos(s, W a) + b0)
//! r        = sum of K Bernoulli(p_click) coin flips      (click stream)
//! eps      ~ Normal(0, I_n)                              (drift stream)
//! s'       = normalize((1 - beta*ctr) s + beta*ctr (W a) + sigma * eps)
//! ```

use serde::{Deserialize, Serialize};

use crate::numkit::{content_hash, Matrix, NumError, Rng, Vector};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("step called past episode end (step {step} of {len})")]
    EpisodeOver { step: usize, len: usize },
    #[error("snapshot config mismatch (snapshot {snapshot:#x}, env {env:#x})")]
    ConfigMismatch { snapshot: u64, env: u64 },
    #[error("snapshot deserialization failed: {0}")]
    Deserialize(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Interest-state dimension n.
    pub state_dim: usize,
    /// Action embedding dimension m.
    pub action_dim: usize,
    /// Recommendation slots per step; reward is clicks out of this many.
    pub slots: usize,
    /// Interest drift rate, scaled by the realized CTR.
    pub drift: f64,
    /// Gaussian drift noise scale.
    pub noise_scale: f64,
    /// Click logit gain on the interest/action alignment.
    pub click_gain: f64,
    /// Click logit bias.
    pub click_bias: f64,
    /// Episode length T.
    pub episode_len: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            state_dim: 16,
            action_dim: 8,
            slots: 10,
            drift: 0.3,
            noise_scale: 0.05,
            click_gain: 4.0,
            click_bias: -1.0,
            episode_len: 50,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.state_dim == 0 || self.action_dim == 0 || self.slots == 0 {
            return Err(EnvError::InvalidConfig("all dims must be >= 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return Err(EnvError::InvalidConfig(format!("drift {} not in [0, 1]", self.drift)));
        }
        if self.noise_scale < 0.0 || !self.noise_scale.is_finite() {
            return Err(EnvError::InvalidConfig(format!("noise_scale {} < 0", self.noise_scale)));
        }
        if self.episode_len == 0 {
            return Err(EnvError::InvalidConfig("episode_len must be >= 1".to_string()));
        }
        if !self.click_gain.is_finite() || !self.click_bias.is_finite() {
            return Err(EnvError::InvalidConfig("click params must be finite".to_string()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> u64 {
        content_hash(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Unit-norm interest vector.
    pub interest: Vector,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub state: EnvState,
    pub rng: Rng,
    pub config_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vector,
    /// Integer clicks in [0, slots], exposed as a float reward.
    pub reward: f64,
    pub ctr: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    config_fingerprint: u64,
    /// Fixed random projection W: action space -> interest space.
    projection: Matrix,
    state: EnvState,
    rng: Rng,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn random_unit(n: usize, rng: &mut Rng) -> Vector {
    loop {
        let v = Vector((0..n).map(|_| rng.normal()).collect());
        let norm = v.norm();
        if norm > 1e-12 {
            return v.scale(1.0 / norm);
        }
    }
}

impl Env {
    /// Build an environment. The projection matrix is fixed by the seed; the
    /// initial interest and the trajectory noise stream are derived from it
    /// through labeled forks.
    pub fn new(config: EnvConfig, seed: u64) -> Result<(Env, EnvState), EnvError> {
        config.validate()?;
        let master = Rng::seed_from(seed);
        let mut proj_rng = master.fork("projection");
        let scale = 1.0 / (config.action_dim as f64).sqrt();
        let mut projection = Matrix::zeros(config.state_dim, config.action_dim);
        for w in projection.data.iter_mut() {
            *w = proj_rng.normal() * scale;
        }
        let fingerprint = config.fingerprint();
        let mut env = Env {
            config,
            config_fingerprint: fingerprint,
            projection,
            state: EnvState { interest: Vector::zeros(0), step: 0 },
            rng: master,
        };
        env.reset_episode(seed);
        let state = env.state.clone();
        Ok((env, state))
    }

    /// Start a fresh episode: new interest, new trajectory noise stream.
    /// The projection matrix is part of the environment and is kept.
    pub fn reset_episode(&mut self, episode_seed: u64) -> EnvState {
        let base = Rng::seed_from(episode_seed);
        let mut init_rng = base.fork("init");
        self.state = EnvState {
            interest: random_unit(self.config.state_dim, &mut init_rng),
            step: 0,
        };
        self.rng = base.fork("trajectory");
        self.state.clone()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn observation(&self) -> Vector {
        self.state.interest.clone()
    }

    pub fn done(&self) -> bool {
        self.state.step >= self.config.episode_len
    }

    /// Total `u64` draws consumed from the trajectory stream; used by tests
    /// to audit noise consumption.
    pub fn rng_draws(&self) -> u64 {
        self.rng.draws()
    }

    /// Click probability for an action at the current state; deterministic,
    /// consumes no noise.
    pub fn click_probability(&self, action: &Vector) -> Result<f64, EnvError> {
        let projected = self.projection.matvec(action)?;
        let cos = self.state.interest.cosine(&projected);
        Ok(sigmoid(self.config.click_gain * cos + self.config.click_bias))
    }

    pub fn step(&mut self, action: &Vector) -> Result<StepOutcome, EnvError> {
        if self.state.step >= self.config.episode_len {
            return Err(EnvError::EpisodeOver {
                step: self.state.step,
                len: self.config.episode_len,
            });
        }
        action.check_finite("action")?;
        if action.len() != self.config.action_dim {
            return Err(NumError::DimMismatch {
                what: "action".to_string(),
                expected: self.config.action_dim,
                got: action.len(),
            }
            .into());
        }

        // Disjoint labeled sub-streams per noise role, derived from the
        // current trajectory state; one draw advances the trajectory stream
        // regardless of slots or dims, so snapshot/restore replays exactly.
        let mut click_rng = self.rng.fork("clicks");
        let mut drift_rng = self.rng.fork("drift");
        self.rng.next_u64();

        let projected = self.projection.matvec(action)?;
        let cos = self.state.interest.cosine(&projected);
        let p_click = sigmoid(self.config.click_gain * cos + self.config.click_bias);
        let clicks = (0..self.config.slots).filter(|_| click_rng.bernoulli(p_click)).count();
        let ctr = clicks as f64 / self.config.slots as f64;

        let noise = Vector((0..self.config.state_dim).map(|_| drift_rng.normal()).collect());
        let pull = self.config.drift * ctr;
        if pull != 0.0 || self.config.noise_scale != 0.0 {
            let mut next = self.state.interest.scale(1.0 - pull).add(&projected.scale(pull));
            next = next.add(&noise.scale(self.config.noise_scale));
            let norm = next.norm();
            self.state.interest = if norm > 1e-12 {
                next.scale(1.0 / norm)
            } else {
                // Degenerate cancellation; keep the previous interest.
                self.state.interest.clone()
            };
        }

        self.state.step += 1;
        Ok(StepOutcome {
            next_state: self.state.interest.clone(),
            reward: clicks as f64,
            ctr,
            done: self.done(),
        })
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            state: self.state.clone(),
            rng: self.rng,
            config_fingerprint: self.config_fingerprint,
        }
    }

    pub fn restore(&mut self, snap: &EnvSnapshot) -> Result<(), EnvError> {
        if snap.config_fingerprint != self.config_fingerprint {
            return Err(EnvError::ConfigMismatch {
                snapshot: snap.config_fingerprint,
                env: self.config_fingerprint,
            });
        }
        self.state = snap.state.clone();
        self.rng = snap.rng;
        Ok(())
    }

    /// `do(A := a_c)`: restore the snapshot and step with the counterfactual
    /// action. The restored RNG state means the same exogenous noise is
    /// consumed as the factual branch took from this snapshot.
    pub fn intervene(
        &mut self,
        snap: &EnvSnapshot,
        counterfactual_action: &Vector,
    ) -> Result<StepOutcome, EnvError> {
        self.restore(snap)?;
        self.step(counterfactual_action)
    }
}

const SNAP_MAGIC: &[u8; 4] = b"SNP1";

impl EnvSnapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAP_MAGIC);
        out.extend_from_slice(&self.config_fingerprint.to_le_bytes());
        out.extend_from_slice(&(self.state.step as u64).to_le_bytes());
        let rng_json = serde_json::to_vec(&self.rng).expect("rng serializes");
        out.extend_from_slice(&(rng_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&rng_json);
        out.extend_from_slice(&(self.state.interest.len() as u32).to_le_bytes());
        for &x in self.state.interest.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnvError> {
        let err = |m: &str| EnvError::Deserialize(m.to_string());
        if bytes.len() < 24 || &bytes[0..4] != SNAP_MAGIC {
            return Err(err("bad magic"));
        }
        let fingerprint = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
        let step = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let rng_len = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
        let rest = &bytes[24..];
        if rest.len() < rng_len + 4 {
            return Err(err("truncated"));
        }
        let rng: Rng =
            serde_json::from_slice(&rest[..rng_len]).map_err(|e| err(&e.to_string()))?;
        let rest = &rest[rng_len..];
        let n = u32::from_le_bytes(rest[0..4].try_into().unwrap()) as usize;
        let rest = &rest[4..];
        if rest.len() != n * 8 {
            return Err(err("bad interest length"));
        }
        let interest = Vector(
            rest.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
        Ok(EnvSnapshot {
            state: EnvState { interest, step },
            rng,
            config_fingerprint: fingerprint,
        })
    }
}
