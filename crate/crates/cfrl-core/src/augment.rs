//! Replay-buffer augmentation with a trained counterfactual synthesis
//! policy.
//!
//! Every factual environment step can contribute a second, counterfactual
//! transition: the CSP's greedy action is applied through an intervention on
//! the pre-step snapshot, the training agent acts once in the resulting
//! counterfactual state, and that transition is pushed alongside the factual
//! one. The factual trajectory is restored afterwards and never perturbed;
//! all counterfactual-side randomness comes from a dedicated forked stream.

use serde::{Deserialize, Serialize};

use crate::agents::{
    evaluate_agent, state_hash, Agent, AgentConfig, AgentError, AgentKind, Provenance,
    ReplayBuffer, TrainError, Transition,
};
use crate::csp::CspPolicy;
use crate::envsim::{Env, EnvConfig};
use crate::numkit::{Rng, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Write a counterfactual transition every this many factual steps.
    pub frequency: usize,
    /// Ablation switch: store the factual next state inside the
    /// counterfactual transition instead of the branch's own
    /// Bellman-consistent successor. Off by default.
    pub factual_next_state_ablation: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { enabled: false, frequency: 1, factual_next_state_ablation: false }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.frequency == 0 {
            return Err(AgentError::InvalidConfig("augment frequency must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedStepRecord {
    pub factual: Transition,
    /// Absent when the frequency gate skipped this step or augmentation is
    /// off.
    pub counterfactual: Option<Transition>,
}

/// One augmented environment step.
///
/// `factual_action` overrides the agent's choice (used for warmup); when
/// `None` the agent acts with exploration on. `write_counterfactual` is the
/// frequency gate. The counterfactual side draws only from `cf_rng`, so a
/// disabled run consumes exactly the streams a plain run would.
#[allow(clippy::too_many_arguments)]
pub fn augmented_step(
    env: &mut Env,
    agent: &Agent,
    csp: Option<&CspPolicy>,
    config: &AugmentConfig,
    write_counterfactual: bool,
    factual_action: Option<Vector>,
    explore_rng: &mut Rng,
    cf_rng: &mut Rng,
) -> Result<AugmentedStepRecord, TrainError> {
    let s_t = env.observation();
    let snap = env.snapshot();

    let a_t = match factual_action {
        Some(a) => a,
        None => agent.select_action(&s_t, true, explore_rng)?,
    };
    let out = env.step(&a_t)?;
    let factual = Transition {
        state: s_t.clone(),
        action: a_t,
        reward: out.reward,
        next_state: out.next_state.clone(),
        done: out.done,
        provenance: Provenance::Factual,
    };

    let mut counterfactual = None;
    if write_counterfactual {
        let csp = csp.ok_or(TrainError::MissingCsp)?;
        let post_factual = env.snapshot();
        let a_c = csp.greedy_action(&s_t)?;
        let c_out = env.intervene(&snap, &a_c)?;
        let s_c = c_out.next_state.clone();
        let transition = if env.done() {
            // The counterfactual branch hit the episode boundary; the
            // intervention transition itself is the stored sample, which is
            // still a genuine environment transition.
            Transition {
                state: s_t,
                action: a_c,
                reward: c_out.reward,
                next_state: s_c,
                done: true,
                provenance: Provenance::Counterfactual,
            }
        } else {
            let a_prime = agent.select_action(&s_c, true, cf_rng)?;
            let b_out = env.step(&a_prime)?;
            let next_state = if config.factual_next_state_ablation {
                out.next_state.clone()
            } else {
                b_out.next_state
            };
            Transition {
                state: s_c,
                action: a_prime,
                reward: b_out.reward,
                next_state,
                done: b_out.done,
                provenance: Provenance::Counterfactual,
            }
        };
        env.restore(&post_factual)?;
        counterfactual = Some(transition);
    }
    Ok(AugmentedStepRecord { factual, counterfactual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentMetricsRow {
    pub episode: usize,
    pub env_steps: u64,
    pub eval_avg_reward: f64,
    pub eval_ctr: f64,
    pub buffer_size: usize,
    pub buffer_cf_fraction: f64,
}

#[derive(Debug)]
pub struct AugmentedTrainOutcome {
    pub agent: Agent,
    pub metrics: Vec<AugmentMetricsRow>,
    pub env_steps: u64,
    pub counterfactual_pushes: u64,
    /// Content hash of every factual state visited, episode resets included.
    pub factual_trace: Vec<u64>,
}

/// Full training loop with optional counterfactual augmentation. With
/// augmentation disabled this reproduces the plain loop in
/// `agents::run_training` bitwise for the same seed.
#[allow(clippy::too_many_arguments)]
pub fn train_with_augmentation(
    kind: AgentKind,
    env_config: &EnvConfig,
    agent_config: &AgentConfig,
    augment: &AugmentConfig,
    csp: Option<&CspPolicy>,
    episodes: usize,
    eval: &crate::agents::EvalSpec,
    seed: u64,
) -> Result<AugmentedTrainOutcome, TrainError> {
    env_config.validate()?;
    agent_config.validate()?;
    augment.validate()?;
    if augment.enabled && csp.is_none() {
        return Err(TrainError::MissingCsp);
    }

    // Stream derivation matches the plain loop label for label.
    let master = Rng::seed_from(seed);
    let mut init_rng = master.fork("agent-init");
    let mut agent = Agent::new(
        kind,
        env_config.state_dim,
        env_config.action_dim,
        agent_config.clone(),
        &mut init_rng,
    )?;
    let (mut env, _) = Env::new(env_config.clone(), master.derive_seed("env"))?;
    let mut buffer = ReplayBuffer::new(agent_config.buffer_capacity);
    let mut explore_rng = master.fork("explore");
    let mut sample_rng = master.fork("sample");
    let mut cf_rng = master.fork("counterfactual");
    let episode_base = master.fork("episodes");
    let eval_seed = master.derive_seed("eval");

    let mut env_steps = 0u64;
    let mut cf_pushes = 0u64;
    let mut metrics = Vec::new();
    let mut factual_trace = Vec::new();
    for episode in 0..episodes {
        let state = env.reset_episode(episode_base.derive_seed(&episode.to_string()));
        factual_trace.push(state_hash(&state.interest));
        while !env.done() {
            let factual_action = if (env_steps as usize) < agent_config.warmup_steps {
                Some(Vector(
                    (0..env_config.action_dim)
                        .map(|_| explore_rng.uniform(-1.0, 1.0))
                        .collect(),
                ))
            } else {
                None
            };
            let write_cf = augment.enabled && (env_steps + 1).is_multiple_of(augment.frequency as u64);
            let record = augmented_step(
                &mut env,
                &agent,
                csp,
                augment,
                write_cf,
                factual_action,
                &mut explore_rng,
                &mut cf_rng,
            )?;
            factual_trace.push(state_hash(&record.factual.next_state));
            buffer.push(record.factual);
            if let Some(cf) = record.counterfactual {
                buffer.push(cf);
                cf_pushes += 1;
            }
            env_steps += 1;
            if (env_steps as usize) >= agent_config.warmup_steps && !buffer.is_empty() {
                let batch = buffer.sample(agent_config.batch_size, &mut sample_rng)?;
                agent.update(&batch, &mut sample_rng)?;
            }
        }
        if eval.every > 0 && (episode + 1) % eval.every == 0 {
            let (avg_reward, avg_ctr) = evaluate_agent(&agent, env_config, eval.episodes, eval_seed)?;
            metrics.push(AugmentMetricsRow {
                episode: episode + 1,
                env_steps,
                eval_avg_reward: avg_reward,
                eval_ctr: avg_ctr,
                buffer_size: buffer.len(),
                buffer_cf_fraction: buffer.counterfactual_fraction(),
            });
        }
    }
    Ok(AugmentedTrainOutcome {
        agent,
        metrics,
        env_steps,
        counterfactual_pushes: cf_pushes,
        factual_trace,
    })
}
