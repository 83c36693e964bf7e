//! Counterfactual synthesis policy (CSP) training.
//!
//! A frozen pretrained policy runs the factual branch. At each state the CSP
//! proposes an alternative action; intervening with it under the snapshot's
//! noise drives the environment into a counterfactual state. The pretrained
//! policy then probes that state for one step, and the CSP is rewarded by the
//! negated absolute difference between the factual and probe rewards: states
//! that keep the pretrained policy's reward unchanged are counterfactuals in
//! which only behaviorally trivial parts of the state were replaced. The CSP
//! itself is a DDPG agent over this derived reward.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{
    evaluate_agent, run_training, state_hash, Agent, AgentConfig, AgentError, AgentKind, EvalSpec,
    Provenance, ReplayBuffer, TrainError, Transition,
};
use crate::envsim::{Env, EnvConfig};
use crate::numkit::{MlpParams, Rng, Vector};

/// Exploration noise applied to the pretrained policy when it is configured
/// to act non-greedily during CSP training.
const PRETRAINED_NOISE: f64 = 0.1;

/// A frozen actor from a completed DDPG run. Immutable for the lifetime of a
/// CSP training run; the content hash makes that checkable.
#[derive(Debug, Clone)]
pub struct PretrainedPolicy {
    actor: MlpParams,
    greedy: bool,
}

impl PretrainedPolicy {
    pub fn new(actor: MlpParams, greedy: bool) -> Self {
        PretrainedPolicy { actor, greedy }
    }

    pub fn act(&self, state: &Vector, rng: &mut Rng) -> Result<Vector, AgentError> {
        let mut a = self.actor.forward(state)?;
        if !self.greedy {
            for x in a.0.iter_mut() {
                *x = (*x + PRETRAINED_NOISE * rng.normal()).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    /// Greedy action regardless of the exploration setting; used for the
    /// causal-effect probe.
    pub fn act_greedy(&self, state: &Vector) -> Result<Vector, AgentError> {
        Ok(self.actor.forward(state)?)
    }

    pub fn content_hash(&self) -> u64 {
        self.actor.content_hash()
    }

    pub fn actor(&self) -> &MlpParams {
        &self.actor
    }

    pub fn save(&self, dir: &Path) -> Result<(), AgentError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("actor.mlp"), self.actor.to_bytes())?;
        let manifest = serde_json::json!({
            "schema_version": 1,
            "greedy": self.greedy,
            "actor_hash": format!("{:016x}", self.content_hash()),
        });
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, AgentError> {
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.join("manifest.json"))
                .map_err(|e| AgentError::Checkpoint(format!("{}: {e}", dir.display())))?,
        )
        .map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let greedy = manifest["greedy"].as_bool().unwrap_or(true);
        let bytes = std::fs::read(dir.join("actor.mlp"))
            .map_err(|e| AgentError::Checkpoint(format!("{}: {e}", dir.display())))?;
        let actor = MlpParams::from_bytes(&bytes)?;
        let expected = manifest["actor_hash"].as_str().unwrap_or_default();
        let got = format!("{:016x}", actor.content_hash());
        if expected != got {
            return Err(AgentError::Checkpoint(format!(
                "pretrained actor hash mismatch: manifest {expected} vs file {got}"
            )));
        }
        Ok(PretrainedPolicy { actor, greedy })
    }
}

/// Train a plain DDPG policy on the environment and freeze its actor.
/// Returns the policy and its final greedy evaluation average reward.
pub fn pretrain_policy(
    env_config: &EnvConfig,
    agent_config: &AgentConfig,
    budget_episodes: usize,
    seed: u64,
) -> Result<(PretrainedPolicy, f64), TrainError> {
    let outcome = run_training(
        AgentKind::Ddpg,
        env_config,
        agent_config,
        budget_episodes,
        &EvalSpec::default(),
        seed,
    )?;
    let eval_seed = Rng::seed_from(seed).derive_seed("eval");
    let (avg_reward, _) = evaluate_agent(&outcome.agent, env_config, 10, eval_seed)?;
    Ok((PretrainedPolicy::new(outcome.agent.actor.clone(), true), avg_reward))
}

/// CSP scalar reward: `-|r_counterfactual - r_factual|`, maximal (zero) when
/// the counterfactual state leaves the pretrained policy's reward unchanged.
pub fn csp_reward(r_factual: f64, r_counterfactual: f64) -> f64 {
    -(r_counterfactual - r_factual).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CspTrainerConfig {
    pub episodes: usize,
    /// Cap on CSP steps per episode; 0 means the full episode.
    pub steps_per_episode: usize,
    pub agent: AgentConfig,
    /// When false, the pretrained policy explores during the factual branch.
    pub greedy_pretrained: bool,
    /// Optional action-novelty bonus weight on `||a_c - a_o||`; zero keeps
    /// the pure reward-difference objective.
    pub novelty_bonus: f64,
}

impl Default for CspTrainerConfig {
    fn default() -> Self {
        CspTrainerConfig {
            episodes: 300,
            steps_per_episode: 0,
            agent: AgentConfig::default(),
            greedy_pretrained: true,
            novelty_bonus: 0.0,
        }
    }
}

impl CspTrainerConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        self.agent.validate()?;
        if self.novelty_bonus < 0.0 {
            return Err(AgentError::InvalidConfig("novelty_bonus must be >= 0".to_string()));
        }
        Ok(())
    }
}

/// A trained counterfactual synthesis policy: a DDPG agent whose action,
/// applied at a state through an intervention, produces the counterfactual.
#[derive(Debug, Clone)]
pub struct CspPolicy {
    pub agent: Agent,
    /// Hash of the pretrained policy this CSP was trained against.
    pub pretrained_hash: u64,
}

impl CspPolicy {
    pub fn greedy_action(&self, state: &Vector) -> Result<Vector, AgentError> {
        let mut unused = Rng::seed_from(0);
        self.agent.select_action(state, false, &mut unused)
    }

    pub fn content_hash(&self) -> u64 {
        self.agent.actor.content_hash()
    }

    pub fn save(&self, dir: &Path) -> Result<(), AgentError> {
        self.agent.save(dir)?;
        let extra = serde_json::json!({
            "schema_version": 1,
            "pretrained_hash": format!("{:016x}", self.pretrained_hash),
        });
        std::fs::write(dir.join("csp_manifest.json"), serde_json::to_string_pretty(&extra).unwrap())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, AgentError> {
        let agent = Agent::load(dir)?;
        if agent.kind() != AgentKind::Ddpg {
            return Err(AgentError::Checkpoint("CSP checkpoint must be a ddpg agent".to_string()));
        }
        let extra: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.join("csp_manifest.json"))
                .map_err(|e| AgentError::Checkpoint(format!("{}: {e}", dir.display())))?,
        )
        .map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let pretrained_hash = u64::from_str_radix(
            extra["pretrained_hash"].as_str().unwrap_or_default(),
            16,
        )
        .map_err(|e| AgentError::Checkpoint(format!("bad pretrained_hash: {e}")))?;
        Ok(CspPolicy { agent, pretrained_hash })
    }
}

/// Everything one CSP training step records.
#[derive(Debug, Clone)]
pub struct CspStepDiag {
    pub factual_action: Vector,
    pub factual_reward: f64,
    pub counterfactual_state: Vector,
    pub probe_reward: f64,
    pub csp_reward: f64,
}

/// One step of CSP training at the environment's current state.
///
/// 1. Snapshot at `s_t`.
/// 2. Factual branch: the pretrained policy acts, the env steps.
/// 3. Counterfactual branch: the CSP's exploratory action is applied through
///    an intervention on the snapshot, reaching `s_c` under the same noise.
/// 4. Probe: the pretrained policy acts greedily from `s_c` for one step to
///    measure the causal effect on its reward.
/// 5. The env is restored to the factual branch, which continues unperturbed.
///
/// The returned transition is `(s_t, a_c, -|dr|, s_c)`; `mark_done` flags the
/// episode boundary. `override_action` replaces the CSP's own choice (used
/// for uniform warmup exploration). Must not be called on the episode's
/// final step (the probe needs one more step of room).
#[allow(clippy::too_many_arguments)]
pub fn csp_training_step(
    env: &mut Env,
    pi_o: &PretrainedPolicy,
    csp: &Agent,
    novelty_bonus: f64,
    mark_done: bool,
    override_action: Option<Vector>,
    pi_rng: &mut Rng,
    explore_rng: &mut Rng,
) -> Result<(Transition, CspStepDiag), TrainError> {
    let s_t = env.observation();
    let snap = env.snapshot();

    let a_o = pi_o.act(&s_t, pi_rng)?;
    let factual = env.step(&a_o)?;
    let post_factual = env.snapshot();

    let a_c = match override_action {
        Some(a) => a,
        None => csp.select_action(&s_t, true, explore_rng)?,
    };
    let counter = env.intervene(&snap, &a_c)?;
    let s_c = counter.next_state.clone();

    let a_probe = pi_o.act_greedy(&s_c)?;
    let probe = env.step(&a_probe)?;

    env.restore(&post_factual)?;

    let mut reward = csp_reward(factual.reward, probe.reward);
    if novelty_bonus != 0.0 {
        reward += novelty_bonus * a_c.sub(&a_o).norm();
    }
    if !reward.is_finite() {
        return Err(AgentError::NonFiniteLoss("csp reward".to_string()).into());
    }
    let transition = Transition {
        state: s_t,
        action: a_c,
        reward,
        next_state: s_c.clone(),
        done: mark_done,
        provenance: Provenance::Counterfactual,
    };
    let diag = CspStepDiag {
        factual_action: a_o,
        factual_reward: factual.reward,
        counterfactual_state: s_c,
        probe_reward: probe.reward,
        csp_reward: reward,
    };
    Ok((transition, diag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CspEpisodeLog {
    pub episode: usize,
    pub mean_abs_dr: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
}

#[derive(Debug)]
pub struct CspTrainOutcome {
    pub policy: CspPolicy,
    pub log: Vec<CspEpisodeLog>,
    /// Content hash of each factual state visited, in order; lets tests
    /// verify the factual trajectory was not perturbed by the
    /// counterfactual branches.
    pub factual_trace: Vec<u64>,
}

/// Train a CSP against a frozen pretrained policy.
pub fn train_csp(
    env_config: &EnvConfig,
    pi_o: &PretrainedPolicy,
    config: &CspTrainerConfig,
    seed: u64,
) -> Result<CspTrainOutcome, TrainError> {
    env_config.validate()?;
    config.validate()?;
    let master = Rng::seed_from(seed);
    let mut init_rng = master.fork("csp-init");
    let mut csp = Agent::new(
        AgentKind::Ddpg,
        env_config.state_dim,
        env_config.action_dim,
        config.agent.clone(),
        &mut init_rng,
    )?;
    let (mut env, _) = Env::new(env_config.clone(), master.derive_seed("env"))?;
    let mut buffer = ReplayBuffer::new(config.agent.buffer_capacity);
    let mut explore_rng = master.fork("explore");
    let mut sample_rng = master.fork("sample");
    let mut pi_rng = master.fork("pretrained");
    let episode_base = master.fork("episodes");

    let episode_len = env_config.episode_len;
    let cap = if config.steps_per_episode == 0 {
        usize::MAX
    } else {
        config.steps_per_episode
    };

    let mut log = Vec::with_capacity(config.episodes);
    let mut factual_trace = Vec::new();
    let mut total_csp_steps = 0usize;
    for episode in 0..config.episodes {
        let state = env.reset_episode(episode_base.derive_seed(&episode.to_string()));
        factual_trace.push(state_hash(&state.interest));
        let mut abs_dr_sum = 0.0;
        let mut abs_dr_n = 0u64;
        let (mut closs_sum, mut aloss_sum, mut loss_n) = (0.0, 0.0, 0u64);
        let mut csp_steps = 0usize;
        while !env.done() {
            let step_index = env.state().step;
            // The probe needs one more env step; the episode's final step is
            // taken factually without generating a CSP transition.
            if step_index + 1 >= episode_len || csp_steps >= cap {
                let s = env.observation();
                let a_o = pi_o.act(&s, &mut pi_rng)?;
                let out = env.step(&a_o)?;
                factual_trace.push(state_hash(&out.next_state));
                continue;
            }
            let mark_done = step_index + 2 >= episode_len || csp_steps + 1 >= cap;
            let warmup_action = if total_csp_steps < config.agent.warmup_steps {
                Some(Vector(
                    (0..env_config.action_dim)
                        .map(|_| explore_rng.uniform(-1.0, 1.0))
                        .collect(),
                ))
            } else {
                None
            };
            let (transition, diag) = csp_training_step(
                &mut env,
                pi_o,
                &csp,
                config.novelty_bonus,
                mark_done,
                warmup_action,
                &mut pi_rng,
                &mut explore_rng,
            )?;
            factual_trace.push(state_hash(&env.observation()));
            abs_dr_sum += (diag.probe_reward - diag.factual_reward).abs();
            abs_dr_n += 1;
            csp_steps += 1;
            total_csp_steps += 1;
            buffer.push(transition);
            if total_csp_steps >= config.agent.warmup_steps {
                let batch = buffer.sample(config.agent.batch_size, &mut sample_rng)?;
                let losses = csp.update(&batch, &mut sample_rng)?;
                closs_sum += losses.critic;
                aloss_sum += losses.actor.unwrap_or(0.0);
                loss_n += 1;
            }
        }
        log.push(CspEpisodeLog {
            episode,
            mean_abs_dr: abs_dr_sum / abs_dr_n.max(1) as f64,
            critic_loss: closs_sum / loss_n.max(1) as f64,
            actor_loss: aloss_sum / loss_n.max(1) as f64,
        });
    }
    Ok(CspTrainOutcome {
        policy: CspPolicy { agent: csp, pretrained_hash: pi_o.content_hash() },
        log,
        factual_trace,
    })
}
