//! Off-policy actor-critic agents: DDPG, TD3 and SAC over the hand-rolled
//! MLP core, sharing the replay buffer and Polyak target machinery.

mod replay;
mod training;

pub use replay::{Provenance, ReplayBuffer, Transition};
pub use sac_math::squashed_gaussian_loss;
pub use training::{
    evaluate_agent, evaluate_policy, random_policy_eval, run_training, state_hash, EvalPoint,
    EvalSpec, TrainError, TrainOutcome,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numkit::{
    adam_step, soft_update, Activation, AdamState, MlpGrads, MlpParams, NumError, Rng, Vector,
};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("sample from empty replay buffer")]
    EmptyBuffer,
    #[error("operation requires agent kind {expected:?}, got {got:?}")]
    KindMismatch { expected: AgentKind, got: AgentKind },
    #[error("non-finite {0} during update")]
    NonFiniteLoss(String),
    #[error("empty mini-batch")]
    EmptyBatch,
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Ddpg,
    Td3,
    Sac,
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AgentKind::Ddpg => write!(f, "ddpg"),
            AgentKind::Td3 => write!(f, "td3"),
            AgentKind::Sac => write!(f, "sac"),
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ddpg" => Ok(AgentKind::Ddpg),
            "td3" => Ok(AgentKind::Td3),
            "sac" => Ok(AgentKind::Sac),
            other => Err(format!("unknown agent kind '{other}' (expected ddpg|td3|sac)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub exploration_noise: f64,
    /// Steps of uniform-random actions before the actor drives exploration.
    pub warmup_steps: usize,
    // TD3
    pub policy_delay: usize,
    pub target_noise: f64,
    pub noise_clip: f64,
    // SAC
    pub entropy_coeff: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.95,
            tau: 0.001,
            actor_lr: 0.003,
            critic_lr: 0.003,
            hidden: vec![128, 128],
            batch_size: 5,
            buffer_capacity: 100_000,
            exploration_noise: 0.1,
            warmup_steps: 0,
            policy_delay: 2,
            target_noise: 0.2,
            noise_clip: 0.5,
            entropy_coeff: 0.2,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} not in [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} not in [0, 1]", self.tau));
        }
        if self.actor_lr <= 0.0 || self.critic_lr <= 0.0 {
            return bad("learning rates must be positive".to_string());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".to_string());
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity must be >= 1".to_string());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden sizes must be non-empty and positive".to_string());
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be >= 1".to_string());
        }
        if self.exploration_noise < 0.0 || self.target_noise < 0.0 || self.noise_clip < 0.0 {
            return bad("noise scales must be non-negative".to_string());
        }
        if self.entropy_coeff < 0.0 {
            return bad("entropy_coeff must be non-negative".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateLosses {
    pub critic: f64,
    /// Absent when a TD3 delayed update skipped the actor.
    pub actor: Option<f64>,
}

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct Agent {
    kind: AgentKind,
    config: AgentConfig,
    state_dim: usize,
    action_dim: usize,
    pub actor: MlpParams,
    pub actor_target: MlpParams,
    pub critic1: MlpParams,
    pub critic1_target: MlpParams,
    pub critic2: Option<MlpParams>,
    pub critic2_target: Option<MlpParams>,
    opt_actor: AdamState,
    opt_critic1: AdamState,
    opt_critic2: AdamState,
    update_count: u64,
}

fn concat(s: &Vector, a: &Vector) -> Vector {
    let mut v = Vec::with_capacity(s.len() + a.len());
    v.extend_from_slice(s.as_slice());
    v.extend_from_slice(a.as_slice());
    Vector(v)
}

fn layer_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input);
    dims.extend_from_slice(hidden);
    dims.push(output);
    dims
}

/// Mean squared regression of a critic onto fixed targets; returns the loss
/// and accumulated gradients for one Adam step.
fn critic_regression(
    critic: &MlpParams,
    inputs: &[Vector],
    targets: &[f64],
) -> Result<(f64, MlpGrads), AgentError> {
    let b = inputs.len() as f64;
    let mut grads = MlpGrads::zeros_like(critic);
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(targets) {
        let q = critic.forward(x)?.0[0];
        let diff = q - y;
        loss += diff * diff / b;
        let (g, _) = critic.backward(x, &Vector(vec![2.0 * diff / b]))?;
        grads.add_assign(&g);
    }
    if !loss.is_finite() {
        return Err(AgentError::NonFiniteLoss("critic loss".to_string()));
    }
    Ok((loss, grads))
}

impl Agent {
    pub fn new(
        kind: AgentKind,
        state_dim: usize,
        action_dim: usize,
        config: AgentConfig,
        rng: &mut Rng,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        let actor_out = match kind {
            AgentKind::Sac => 2 * action_dim,
            _ => action_dim,
        };
        let actor_act = match kind {
            // SAC emits (mean, log_std); squashing happens at sample time.
            AgentKind::Sac => Activation::Identity,
            _ => Activation::Tanh,
        };
        let mut actor_rng = rng.fork("actor");
        let actor = MlpParams::new(
            &layer_dims(state_dim, &config.hidden, actor_out),
            Activation::Relu,
            actor_act,
            &mut actor_rng,
        );
        let mut c1_rng = rng.fork("critic1");
        let critic1 = MlpParams::new(
            &layer_dims(state_dim + action_dim, &config.hidden, 1),
            Activation::Relu,
            Activation::Identity,
            &mut c1_rng,
        );
        let twin = matches!(kind, AgentKind::Td3 | AgentKind::Sac);
        let critic2 = twin.then(|| {
            let mut c2_rng = rng.fork("critic2");
            MlpParams::new(
                &layer_dims(state_dim + action_dim, &config.hidden, 1),
                Activation::Relu,
                Activation::Identity,
                &mut c2_rng,
            )
        });
        Ok(Agent {
            kind,
            config,
            state_dim,
            action_dim,
            actor_target: actor.clone(),
            actor,
            critic1_target: critic1.clone(),
            critic1,
            critic2_target: critic2.clone(),
            critic2,
            opt_actor: AdamState::new(),
            opt_critic1: AdamState::new(),
            opt_critic2: AdamState::new(),
            update_count: 0,
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// Mean and clamped log-std of the SAC policy at a state.
    #[allow(clippy::type_complexity)]
    fn sac_distribution(&self, state: &Vector) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), AgentError> {
        let out = self.actor.forward(state)?;
        let m = self.action_dim;
        let mean = out.0[..m].to_vec();
        let raw: Vec<f64> = out.0[m..].to_vec();
        let log_std: Vec<f64> = raw.iter().map(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Ok((mean, log_std, raw))
    }

    pub fn select_action(
        &self,
        state: &Vector,
        explore: bool,
        rng: &mut Rng,
    ) -> Result<Vector, AgentError> {
        state.check_finite("state")?;
        match self.kind {
            AgentKind::Ddpg | AgentKind::Td3 => {
                let mut a = self.actor.forward(state)?;
                if explore && self.config.exploration_noise > 0.0 {
                    for x in a.0.iter_mut() {
                        *x = (*x + self.config.exploration_noise * rng.normal()).clamp(-1.0, 1.0);
                    }
                }
                Ok(a)
            }
            AgentKind::Sac => {
                let (mean, log_std, _) = self.sac_distribution(state)?;
                if explore {
                    let a = mean
                        .iter()
                        .zip(&log_std)
                        .map(|(&mu, &ls)| (mu + ls.exp() * rng.normal()).tanh())
                        .collect();
                    Ok(Vector(a))
                } else {
                    Ok(Vector(mean.iter().map(|x| x.tanh()).collect()))
                }
            }
        }
    }

    /// DDPG bootstrap target `y = r + gamma * Q_targ(s', mu_targ(s'))`, with
    /// `y = r` on termination.
    pub fn ddpg_critic_target(&self, t: &Transition) -> Result<f64, AgentError> {
        if self.kind != AgentKind::Ddpg {
            return Err(AgentError::KindMismatch { expected: AgentKind::Ddpg, got: self.kind });
        }
        if t.done || self.config.gamma == 0.0 {
            return Ok(t.reward);
        }
        let a = self.actor_target.forward(&t.next_state)?;
        let q = self.critic1_target.forward(&concat(&t.next_state, &a))?.0[0];
        Ok(t.reward + self.config.gamma * q)
    }

    /// One gradient update from a mini-batch; dispatches on the agent kind.
    /// `rng` feeds TD3 target smoothing and SAC sampling, and is untouched by
    /// DDPG.
    pub fn update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<UpdateLosses, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        match self.kind {
            AgentKind::Ddpg => self.ddpg_update(batch),
            AgentKind::Td3 => self.td3_update(batch, rng),
            AgentKind::Sac => self.sac_update(batch, rng),
        }
    }

    fn ddpg_update(&mut self, batch: &[&Transition]) -> Result<UpdateLosses, AgentError> {
        let b = batch.len() as f64;
        let mut inputs = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for t in batch {
            targets.push(self.ddpg_critic_target(t)?);
            inputs.push(concat(&t.state, &t.action));
        }
        let (critic_loss, cgrads) = critic_regression(&self.critic1, &inputs, &targets)?;
        adam_step(&mut self.critic1, &cgrads, &mut self.opt_critic1, self.config.critic_lr)?;

        // Deterministic policy gradient: ascend Q(s, mu(s)) through the
        // freshly updated critic.
        let mut agrads = MlpGrads::zeros_like(&self.actor);
        let mut actor_loss = 0.0;
        for t in batch {
            let a = self.actor.forward(&t.state)?;
            let x = concat(&t.state, &a);
            let q = self.critic1.forward(&x)?.0[0];
            actor_loss -= q / b;
            let (_, xgrad) = self.critic1.backward(&x, &Vector(vec![-1.0 / b]))?;
            let a_grad = Vector(xgrad.0[self.state_dim..].to_vec());
            let (g, _) = self.actor.backward(&t.state, &a_grad)?;
            agrads.add_assign(&g);
        }
        if !actor_loss.is_finite() {
            return Err(AgentError::NonFiniteLoss("actor loss".to_string()));
        }
        adam_step(&mut self.actor, &agrads, &mut self.opt_actor, self.config.actor_lr)?;

        soft_update(&mut self.actor_target, &self.actor, self.config.tau)?;
        soft_update(&mut self.critic1_target, &self.critic1, self.config.tau)?;
        self.update_count += 1;
        Ok(UpdateLosses { critic: critic_loss, actor: Some(actor_loss) })
    }

    /// TD3 target action: target actor output plus clipped smoothing noise,
    /// clamped to the action box.
    fn td3_target_action(&self, next_state: &Vector, rng: &mut Rng) -> Result<Vector, AgentError> {
        let mut a = self.actor_target.forward(next_state)?;
        for x in a.0.iter_mut() {
            let noise = (self.config.target_noise * rng.normal())
                .clamp(-self.config.noise_clip, self.config.noise_clip);
            *x = (*x + noise).clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    fn td3_update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<UpdateLosses, AgentError> {
        let b = batch.len() as f64;
        let c2t = self.critic2_target.as_ref().expect("td3 has twin critics");
        let mut inputs = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for t in batch {
            let y = if t.done {
                t.reward
            } else {
                let a = self.td3_target_action(&t.next_state, rng)?;
                let x = concat(&t.next_state, &a);
                let q1 = self.critic1_target.forward(&x)?.0[0];
                let q2 = c2t.forward(&x)?.0[0];
                t.reward + self.config.gamma * q1.min(q2)
            };
            targets.push(y);
            inputs.push(concat(&t.state, &t.action));
        }
        let (loss1, g1) = critic_regression(&self.critic1, &inputs, &targets)?;
        adam_step(&mut self.critic1, &g1, &mut self.opt_critic1, self.config.critic_lr)?;
        let critic2 = self.critic2.as_mut().expect("td3 has twin critics");
        let (loss2, g2) = critic_regression(critic2, &inputs, &targets)?;
        adam_step(critic2, &g2, &mut self.opt_critic2, self.config.critic_lr)?;

        let delayed_turn = self.update_count.is_multiple_of(self.config.policy_delay as u64);
        let mut actor_loss = None;
        if delayed_turn {
            let mut agrads = MlpGrads::zeros_like(&self.actor);
            let mut aloss = 0.0;
            for t in batch {
                let a = self.actor.forward(&t.state)?;
                let x = concat(&t.state, &a);
                let q = self.critic1.forward(&x)?.0[0];
                aloss -= q / b;
                let (_, xgrad) = self.critic1.backward(&x, &Vector(vec![-1.0 / b]))?;
                let a_grad = Vector(xgrad.0[self.state_dim..].to_vec());
                let (g, _) = self.actor.backward(&t.state, &a_grad)?;
                agrads.add_assign(&g);
            }
            if !aloss.is_finite() {
                return Err(AgentError::NonFiniteLoss("actor loss".to_string()));
            }
            adam_step(&mut self.actor, &agrads, &mut self.opt_actor, self.config.actor_lr)?;
            soft_update(&mut self.actor_target, &self.actor, self.config.tau)?;
            soft_update(&mut self.critic1_target, &self.critic1, self.config.tau)?;
            soft_update(
                self.critic2_target.as_mut().expect("td3 has twin critics"),
                self.critic2.as_ref().unwrap(),
                self.config.tau,
            )?;
            actor_loss = Some(aloss);
        }
        self.update_count += 1;
        Ok(UpdateLosses { critic: loss1 + loss2, actor: actor_loss })
    }

    /// SAC bootstrap target with a freshly sampled squashed-Gaussian action.
    pub(crate) fn sac_target(&self, t: &Transition, rng: &mut Rng) -> Result<f64, AgentError> {
        if t.done {
            return Ok(t.reward);
        }
        let (mean, log_std, _) = self.sac_distribution(&t.next_state)?;
        let mut a = Vec::with_capacity(self.action_dim);
        let mut log_p = 0.0;
        for (&mu, &ls) in mean.iter().zip(&log_std) {
            let xi = rng.normal();
            let u = mu + ls.exp() * xi;
            let ai = u.tanh();
            log_p += -0.5 * xi * xi - 0.5 * (2.0 * std::f64::consts::PI).ln() - ls
                - (1.0 - ai * ai + sac_math::TANH_EPS).ln();
            a.push(ai);
        }
        let a = Vector(a);
        let x = concat(&t.next_state, &a);
        let q1 = self.critic1_target.forward(&x)?.0[0];
        let q2 = self
            .critic2_target
            .as_ref()
            .expect("sac has twin critics")
            .forward(&x)?
            .0[0];
        Ok(t.reward + self.config.gamma * (q1.min(q2) - self.config.entropy_coeff * log_p))
    }

    fn sac_update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<UpdateLosses, AgentError> {
        let b = batch.len() as f64;
        let mut inputs = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for t in batch {
            targets.push(self.sac_target(t, rng)?);
            inputs.push(concat(&t.state, &t.action));
        }
        let (loss1, g1) = critic_regression(&self.critic1, &inputs, &targets)?;
        adam_step(&mut self.critic1, &g1, &mut self.opt_critic1, self.config.critic_lr)?;
        let critic2 = self.critic2.as_mut().expect("sac has twin critics");
        let (loss2, g2) = critic_regression(critic2, &inputs, &targets)?;
        adam_step(critic2, &g2, &mut self.opt_critic2, self.config.critic_lr)?;

        // Reparameterized actor step: minimize alpha * log pi - min(Q1, Q2).
        let mut agrads = MlpGrads::zeros_like(&self.actor);
        let mut aloss = 0.0;
        for t in batch {
            let out = self.actor.forward(&t.state)?;
            let xi: Vec<f64> = (0..self.action_dim).map(|_| rng.normal()).collect();
            let state = &t.state;
            let c1 = &self.critic1;
            let c2 = self.critic2.as_ref().unwrap();
            let n = self.state_dim;
            let q_fn = |a: &Vector| -> Result<(f64, Vector), NumError> {
                let x = concat(state, a);
                let q1 = c1.forward(&x)?.0[0];
                let q2 = c2.forward(&x)?.0[0];
                let (qmin, critic) = if q1 <= q2 { (q1, c1) } else { (q2, c2) };
                let (_, xgrad) = critic.backward(&x, &Vector(vec![1.0]))?;
                Ok((qmin, Vector(xgrad.0[n..].to_vec())))
            };
            let (loss, out_grad) = sac_math::squashed_gaussian_loss(
                &out.0,
                &xi,
                self.config.entropy_coeff,
                LOG_STD_MIN,
                LOG_STD_MAX,
                q_fn,
            )?;
            aloss += loss / b;
            let (g, _) = self.actor.backward(&t.state, &out_grad.scale(1.0 / b))?;
            agrads.add_assign(&g);
        }
        if !aloss.is_finite() {
            return Err(AgentError::NonFiniteLoss("actor loss".to_string()));
        }
        adam_step(&mut self.actor, &agrads, &mut self.opt_actor, self.config.actor_lr)?;

        soft_update(&mut self.critic1_target, &self.critic1, self.config.tau)?;
        soft_update(
            self.critic2_target.as_mut().expect("sac has twin critics"),
            self.critic2.as_ref().unwrap(),
            self.config.tau,
        )?;
        self.update_count += 1;
        Ok(UpdateLosses { critic: loss1 + loss2, actor: Some(aloss) })
    }

    // --- checkpoints ---

    /// Write the agent as a directory of binary `MlpParams` files plus a
    /// JSON manifest. Optimizer moments are not persisted; a loaded agent
    /// restarts with fresh Adam state.
    pub fn save(&self, dir: &Path) -> Result<(), AgentError> {
        std::fs::create_dir_all(dir)?;
        let nets: Vec<(&str, &MlpParams)> = self.net_files();
        for (name, params) in &nets {
            std::fs::write(dir.join(name), params.to_bytes())?;
        }
        let manifest = CheckpointManifest {
            schema_version: 1,
            kind: self.kind,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            update_count: self.update_count,
            config: self.config.clone(),
            actor_hash: format!("{:016x}", self.actor.content_hash()),
        };
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(())
    }

    fn net_files(&self) -> Vec<(&'static str, &MlpParams)> {
        let mut nets = vec![
            ("actor.mlp", &self.actor),
            ("actor_target.mlp", &self.actor_target),
            ("critic1.mlp", &self.critic1),
            ("critic1_target.mlp", &self.critic1_target),
        ];
        if let (Some(c2), Some(c2t)) = (&self.critic2, &self.critic2_target) {
            nets.push(("critic2.mlp", c2));
            nets.push(("critic2_target.mlp", c2t));
        }
        nets
    }

    pub fn load(dir: &Path) -> Result<Self, AgentError> {
        let manifest_path = dir.join("manifest.json");
        let manifest: CheckpointManifest = serde_json::from_str(
            &std::fs::read_to_string(&manifest_path)
                .map_err(|e| AgentError::Checkpoint(format!("{}: {e}", manifest_path.display())))?,
        )
        .map_err(|e| AgentError::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
        if manifest.schema_version != 1 {
            return Err(AgentError::Checkpoint(format!(
                "unsupported checkpoint schema {}",
                manifest.schema_version
            )));
        }
        let read_net = |name: &str| -> Result<MlpParams, AgentError> {
            let path = dir.join(name);
            let bytes = std::fs::read(&path)
                .map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))?;
            Ok(MlpParams::from_bytes(&bytes)?)
        };
        let actor = read_net("actor.mlp")?;
        let actor_hash = format!("{:016x}", actor.content_hash());
        if actor_hash != manifest.actor_hash {
            return Err(AgentError::Checkpoint(format!(
                "actor hash mismatch: manifest {} vs file {actor_hash}",
                manifest.actor_hash
            )));
        }
        let twin = matches!(manifest.kind, AgentKind::Td3 | AgentKind::Sac);
        Ok(Agent {
            kind: manifest.kind,
            config: manifest.config,
            state_dim: manifest.state_dim,
            action_dim: manifest.action_dim,
            actor,
            actor_target: read_net("actor_target.mlp")?,
            critic1: read_net("critic1.mlp")?,
            critic1_target: read_net("critic1_target.mlp")?,
            critic2: twin.then(|| read_net("critic2.mlp")).transpose()?,
            critic2_target: twin.then(|| read_net("critic2_target.mlp")).transpose()?,
            opt_actor: AdamState::new(),
            opt_critic1: AdamState::new(),
            opt_critic2: AdamState::new(),
            update_count: manifest.update_count,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    schema_version: u32,
    kind: AgentKind,
    state_dim: usize,
    action_dim: usize,
    update_count: u64,
    config: AgentConfig,
    actor_hash: String,
}

mod sac_math {
    use crate::numkit::{NumError, Vector};

    pub(crate) const TANH_EPS: f64 = 1e-6;

    /// Loss `alpha * log pi(a) - Q(a)` of one reparameterized squashed-
    /// Gaussian sample, and its gradient with respect to the raw network
    /// outputs `[mean | raw_log_std]`, holding the noise `xi` fixed.
    ///
    /// `q_fn` evaluates the critic and returns `(Q(a), dQ/da)`.
    pub fn squashed_gaussian_loss<F>(
        out: &[f64],
        xi: &[f64],
        alpha: f64,
        log_std_min: f64,
        log_std_max: f64,
        q_fn: F,
    ) -> Result<(f64, Vector), NumError>
    where
        F: FnOnce(&Vector) -> Result<(f64, Vector), NumError>,
    {
        let m = xi.len();
        assert_eq!(out.len(), 2 * m, "expected [mean | log_std] outputs");
        let mean = &out[..m];
        let raw = &out[m..];
        let ln2pi = (2.0 * std::f64::consts::PI).ln();

        let mut action = Vec::with_capacity(m);
        let mut stds = Vec::with_capacity(m);
        let mut log_p = 0.0;
        for j in 0..m {
            let ls = raw[j].clamp(log_std_min, log_std_max);
            let std = ls.exp();
            let u = mean[j] + std * xi[j];
            let a = u.tanh();
            log_p += -0.5 * xi[j] * xi[j] - 0.5 * ln2pi - ls
                - (1.0 - a * a + TANH_EPS).ln();
            action.push(a);
            stds.push(std);
        }
        let action = Vector(action);
        let (q, dq_da) = q_fn(&action)?;
        let loss = alpha * log_p - q;

        let mut grad = vec![0.0; 2 * m];
        for j in 0..m {
            let a = action.0[j];
            let da_du = 1.0 - a * a;
            // d(-ln(1 - a^2 + eps))/du = 2 a (1 - a^2) / (1 - a^2 + eps)
            let dlogp_du = 2.0 * a * da_du / (1.0 - a * a + TANH_EPS);
            let g_u = alpha * dlogp_du - dq_da.0[j] * da_du;
            grad[j] = g_u;
            let clamped = raw[j] < log_std_min || raw[j] > log_std_max;
            grad[m + j] = if clamped { 0.0 } else { g_u * stds[j] * xi[j] - alpha };
        }
        Ok((loss, Vector(grad)))
    }
}

#[cfg(test)]
mod tests;
