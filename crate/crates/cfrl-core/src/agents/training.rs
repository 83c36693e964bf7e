//! Plain (unaugmented) training loop and greedy evaluation.
//!
//! This loop is deliberately free of any snapshot or counterfactual
//! machinery; the augmented loop must reproduce it bitwise when augmentation
//! is disabled, and tests hold the two implementations against each other.

use crate::envsim::{Env, EnvConfig, EnvError};
use crate::numkit::{Rng, Vector};

use super::{Agent, AgentConfig, AgentError, AgentKind, Provenance, ReplayBuffer, Transition};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("augmentation enabled but no counterfactual synthesis policy provided")]
    MissingCsp,
}

/// Content hash of a state vector; used to compare visited-state sequences
/// without storing them.
pub fn state_hash(v: &Vector) -> u64 {
    let bytes: Vec<u8> = v.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect();
    crate::numkit::content_hash(&bytes)
}

#[derive(Debug, Clone, Copy)]
pub struct EvalSpec {
    /// Evaluate every this many episodes; 0 disables periodic evaluation.
    pub every: usize,
    /// Greedy episodes per evaluation point.
    pub episodes: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec { every: 0, episodes: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    /// 1-based episode count at which the evaluation ran.
    pub episode: usize,
    pub env_steps: u64,
    pub avg_reward: f64,
    pub avg_ctr: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub eval: Vec<EvalPoint>,
    pub env_steps: u64,
}

/// Greedy rollout evaluation: mean total reward per episode and mean
/// per-step CTR. Deterministic for a fixed (agent, config, seed).
pub fn evaluate_agent(
    agent: &Agent,
    env_config: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64), TrainError> {
    evaluate_policy(env_config, episodes, seed, |obs| {
        let mut unused = Rng::seed_from(0);
        agent.select_action(obs, false, &mut unused)
    })
}

pub fn evaluate_policy<F>(
    env_config: &EnvConfig,
    episodes: usize,
    seed: u64,
    mut policy: F,
) -> Result<(f64, f64), TrainError>
where
    F: FnMut(&Vector) -> Result<Vector, AgentError>,
{
    let (mut env, _) = Env::new(env_config.clone(), seed)?;
    let base = Rng::seed_from(seed).fork("eval-episodes");
    let mut total_reward = 0.0;
    let mut total_ctr = 0.0;
    let mut total_steps = 0u64;
    for i in 0..episodes {
        let state = env.reset_episode(base.derive_seed(&i.to_string()));
        let mut obs = state.interest;
        while !env.done() {
            let action = policy(&obs)?;
            let out = env.step(&action)?;
            total_reward += out.reward;
            total_ctr += out.ctr;
            total_steps += 1;
            obs = out.next_state;
        }
    }
    if episodes == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((total_reward / episodes as f64, total_ctr / total_steps.max(1) as f64))
}

/// Average reward per episode of a uniform-random policy; the floor that
/// learning-sanity checks compare against.
pub fn random_policy_eval(
    env_config: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64), TrainError> {
    let mut rng = Rng::seed_from(seed).fork("random-policy");
    let m = env_config.action_dim;
    evaluate_policy(env_config, episodes, seed, |_| {
        Ok(Vector((0..m).map(|_| rng.uniform(-1.0, 1.0)).collect()))
    })
}

/// Train an agent from scratch with no augmentation.
pub fn run_training(
    kind: AgentKind,
    env_config: &EnvConfig,
    agent_config: &AgentConfig,
    episodes: usize,
    eval: &EvalSpec,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    env_config.validate()?;
    agent_config.validate()?;
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
    let episode_base = master.fork("episodes");
    let eval_seed = master.derive_seed("eval");

    let mut env_steps = 0u64;
    let mut evals = Vec::new();
    for episode in 0..episodes {
        let state = env.reset_episode(episode_base.derive_seed(&episode.to_string()));
        let mut obs = state.interest;
        while !env.done() {
            let action = if (env_steps as usize) < agent_config.warmup_steps {
                Vector(
                    (0..env_config.action_dim)
                        .map(|_| explore_rng.uniform(-1.0, 1.0))
                        .collect(),
                )
            } else {
                agent.select_action(&obs, true, &mut explore_rng)?
            };
            let out = env.step(&action)?;
            buffer.push(Transition {
                state: obs,
                action,
                reward: out.reward,
                next_state: out.next_state.clone(),
                done: out.done,
                provenance: Provenance::Factual,
            });
            env_steps += 1;
            if (env_steps as usize) >= agent_config.warmup_steps && !buffer.is_empty() {
                let batch = buffer.sample(agent_config.batch_size, &mut sample_rng)?;
                agent.update(&batch, &mut sample_rng)?;
            }
            obs = out.next_state;
        }
        if eval.every > 0 && (episode + 1) % eval.every == 0 {
            let (avg_reward, avg_ctr) = evaluate_agent(&agent, env_config, eval.episodes, eval_seed)?;
            evals.push(EvalPoint { episode: episode + 1, env_steps, avg_reward, avg_ctr });
        }
    }
    Ok(TrainOutcome { agent, eval: evals, env_steps })
}
