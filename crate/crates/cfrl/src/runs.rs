//! Execution of independent experiment cells.
//!
//! A cell is one self-contained training run (private env, agent and CSP
//! instances); cells never share mutable state, so sweeps and comparisons
//! can fan them out across a thread pool. The sequential path is always
//! available and is the reference behavior: the parallel path must produce
//! the same results in the same order.

use cfrl_core::agents::{AgentKind, EvalSpec};
use cfrl_core::augment::{train_with_augmentation, AugmentConfig, AugmentedTrainOutcome};
use cfrl_core::csp::{pretrain_policy, train_csp, CspPolicy, CspTrainOutcome, PretrainedPolicy};
use cfrl_core::numkit::Rng;

use crate::{HarnessError, RunConfig};

/// Worker cap from `CFRL_THREADS`; 0 or unset defers to the pool default.
pub fn thread_cap() -> usize {
    std::env::var("CFRL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0)
}

/// Run `jobs(0..n)` sequentially, in index order.
pub fn run_cells_sequential<T, F>(n: usize, jobs: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(usize) -> Result<T, HarnessError> + Sync,
{
    (0..n).map(jobs).collect()
}

/// Run `jobs(0..n)` on a thread pool capped by `CFRL_THREADS`; results come
/// back in index order regardless of completion order.
#[cfg(feature = "parallel")]
pub fn run_cells<T, F>(n: usize, jobs: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(usize) -> Result<T, HarnessError> + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap())
        .build()
        .map_err(|e| HarnessError::Numeric(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&jobs).collect())
}

#[cfg(not(feature = "parallel"))]
pub fn run_cells<T, F>(n: usize, jobs: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(usize) -> Result<T, HarnessError> + Sync,
{
    run_cells_sequential(n, jobs)
}

/// Per-stage seeds derived from the user seed, so the pretrain, CSP and
/// deployment stages do not accidentally share RNG streams.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    Rng::seed_from(seed).derive_seed(stage)
}

pub fn train_seed(seed: u64, kind: AgentKind) -> u64 {
    stage_seed(seed, &format!("train-{kind}"))
}

/// Pretrain the frozen policy for one seed. Returns the policy and its
/// final greedy evaluation reward.
pub fn pretrain_cell(
    config: &RunConfig,
    seed: u64,
) -> Result<(PretrainedPolicy, f64), HarnessError> {
    let (policy, avg_reward) = pretrain_policy(
        &config.env,
        &config.agent,
        config.pretrain_budget,
        stage_seed(seed, "pretrain"),
    )?;
    Ok((policy, avg_reward))
}

/// Train the CSP for one seed against an already-frozen policy.
pub fn csp_cell(
    config: &RunConfig,
    pi_o: &PretrainedPolicy,
    seed: u64,
) -> Result<CspTrainOutcome, HarnessError> {
    Ok(train_csp(&config.env, pi_o, &config.csp_trainer, stage_seed(seed, "csp"))?)
}

/// One deployment-training run: a single (kind, arm, seed) cell. Baseline
/// and augmented arms share the seed so they differ only in augmentation.
pub fn train_cell(
    config: &RunConfig,
    kind: AgentKind,
    augmented: bool,
    csp: Option<&CspPolicy>,
    seed: u64,
) -> Result<AugmentedTrainOutcome, HarnessError> {
    let augment = AugmentConfig { enabled: augmented, ..config.augment.clone() };
    let eval = EvalSpec { every: config.eval_every, episodes: config.eval_episodes };
    Ok(train_with_augmentation(
        kind,
        &config.env,
        &config.agent,
        &augment,
        csp,
        config.budget,
        &eval,
        train_seed(seed, kind),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let jobs = |i: usize| Ok(i * i);
        let seq = run_cells_sequential(8, jobs).unwrap();
        let par = run_cells(8, jobs).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq, vec![0, 1, 4, 9, 16, 25, 36, 49]);
    }

    #[test]
    fn first_error_propagates() {
        let jobs = |i: usize| {
            if i == 3 {
                Err(HarnessError::Numeric("boom".to_string()))
            } else {
                Ok(i)
            }
        };
        assert!(run_cells_sequential(8, jobs).is_err());
        assert!(run_cells(8, jobs).is_err());
    }

    #[test]
    fn stage_seeds_are_distinct() {
        let s = 7;
        let a = stage_seed(s, "pretrain");
        let b = stage_seed(s, "csp");
        let c = train_seed(s, AgentKind::Ddpg);
        assert_ne!(a, b);
        assert_ne!(b, c);
        assert_ne!(a, c);
    }
}
