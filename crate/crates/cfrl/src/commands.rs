//! Subcommand implementations. Each one reads a validated `RunConfig`,
//! writes deterministic artifacts under `output_dir`, and returns a typed
//! summary for the CLI to print. Wall-clock data only ever lands in
//! `run_manifest.json`, keeping every CSV and report byte-stable.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use cfrl_core::agents::{evaluate_agent, run_training, Agent, AgentKind, EvalSpec};
use cfrl_core::csp::{CspPolicy, CspTrainOutcome, PretrainedPolicy};

use crate::config::arm_name;
use crate::report::{
    decile_means, fmt_f64, write_csv, ComparisonReport, RunRow, SweepReport, SweepRow,
};
use crate::runs::{csp_cell, pretrain_cell, run_cells, stage_seed, train_cell};
use crate::{HarnessError, RunConfig};

#[derive(Debug, Clone, Serialize)]
pub struct PretrainSummary {
    pub seed: u64,
    pub final_avg_reward: f64,
    pub final_ctr: f64,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct CspSummary {
    pub seed: u64,
    pub episodes: usize,
    pub first_decile_abs_dr: f64,
    pub last_decile_abs_dr: f64,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub kind: AgentKind,
    pub augmented: bool,
    pub env_steps: u64,
    pub counterfactual_pushes: u64,
    pub final_avg_reward: f64,
    pub final_ctr: f64,
    pub metrics_file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub seed: u64,
    pub kind: AgentKind,
    pub augmented: bool,
    pub avg_reward: f64,
    pub avg_ctr: f64,
}

fn eval_spec(config: &RunConfig) -> EvalSpec {
    EvalSpec { every: config.eval_every, episodes: config.eval_episodes }
}

fn require_checkpoint(dir: &Path) -> Result<(), HarnessError> {
    if dir.join("manifest.json").is_file() {
        Ok(())
    } else {
        Err(HarnessError::MissingArtifact(dir.to_path_buf()))
    }
}

/// Append command timing to the (non-deterministic) run manifest.
fn write_run_manifest(config: &RunConfig, command: &str, started: Instant) -> Result<(), HarnessError> {
    std::fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join("run_manifest.json");
    let mut entries: Vec<serde_json::Value> = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    let unix_secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    entries.push(serde_json::json!({
        "command": command,
        "wall_ms": started.elapsed().as_millis() as u64,
        "finished_unix_secs": unix_secs,
    }));
    std::fs::write(&path, serde_json::to_string_pretty(&entries).unwrap())?;
    Ok(())
}

/// Echo the resolved config next to the artifacts it produced.
fn write_config_echo(config: &RunConfig) -> Result<(), HarnessError> {
    std::fs::create_dir_all(&config.output_dir)?;
    std::fs::write(config.output_dir.join("config.echo.json"), config.to_json())?;
    Ok(())
}

pub fn cmd_pretrain(config: &RunConfig) -> Result<Vec<PretrainSummary>, HarnessError> {
    let started = Instant::now();
    write_config_echo(config)?;
    let spec = eval_spec(config);
    let summaries = run_cells(config.seeds.len(), |i| {
        let seed = config.seeds[i];
        let outcome = run_training(
            AgentKind::Ddpg,
            &config.env,
            &config.agent,
            config.pretrain_budget,
            &spec,
            stage_seed(seed, "pretrain"),
        )?;
        let dir = config.pretrained_dir(seed);
        let policy = PretrainedPolicy::new(outcome.agent.actor.clone(), true);
        policy.save(&dir)?;
        write_csv(
            &config.seed_dir(seed).join("pretrain_curve.csv"),
            "pretrain_curve.v1",
            "episode,env_steps,avg_reward,avg_ctr",
            outcome.eval.iter().map(|p| {
                format!(
                    "{},{},{},{}",
                    p.episode,
                    p.env_steps,
                    fmt_f64(p.avg_reward),
                    fmt_f64(p.avg_ctr)
                )
            }),
        )?;
        let (final_avg_reward, final_ctr) = evaluate_agent(
            &outcome.agent,
            &config.env,
            config.eval_episodes,
            stage_seed(seed, "final-eval"),
        )?;
        Ok(PretrainSummary { seed, final_avg_reward, final_ctr, checkpoint: dir })
    })?;
    write_run_manifest(config, "pretrain", started)?;
    Ok(summaries)
}

fn write_csp_curve(path: &Path, outcome: &CspTrainOutcome) -> Result<(), HarnessError> {
    write_csv(
        path,
        "csp_curve.v1",
        "episode,mean_abs_dr,critic_loss,actor_loss",
        outcome.log.iter().map(|l| {
            format!(
                "{},{},{},{}",
                l.episode,
                fmt_f64(l.mean_abs_dr),
                fmt_f64(l.critic_loss),
                fmt_f64(l.actor_loss)
            )
        }),
    )
}

pub fn cmd_train_csp(config: &RunConfig) -> Result<Vec<CspSummary>, HarnessError> {
    let started = Instant::now();
    write_config_echo(config)?;
    let summaries = run_cells(config.seeds.len(), |i| {
        let seed = config.seeds[i];
        let pre_dir = config.pretrained_dir(seed);
        require_checkpoint(&pre_dir)?;
        let pi_o = PretrainedPolicy::load(&pre_dir)?;
        let outcome = csp_cell(config, &pi_o, seed)?;
        let dir = config.csp_dir(seed);
        outcome.policy.save(&dir)?;
        write_csp_curve(&config.seed_dir(seed).join("csp_curve.csv"), &outcome)?;
        let curve: Vec<f64> = outcome.log.iter().map(|l| l.mean_abs_dr).collect();
        let (first, last) = decile_means(&curve);
        Ok(CspSummary {
            seed,
            episodes: outcome.log.len(),
            first_decile_abs_dr: first,
            last_decile_abs_dr: last,
            checkpoint: dir,
        })
    })?;
    write_run_manifest(config, "train-csp", started)?;
    Ok(summaries)
}

/// Verify a CSP checkpoint was trained against the given frozen policy.
fn check_csp_lineage(csp: &CspPolicy, pi_o: &PretrainedPolicy) -> Result<(), HarnessError> {
    if csp.pretrained_hash != pi_o.content_hash() {
        return Err(HarnessError::Config(
            "csp checkpoint was trained against a different pretrained policy".to_string(),
        ));
    }
    Ok(())
}

fn run_one_training(
    config: &RunConfig,
    kind: AgentKind,
    augmented: bool,
    seed: u64,
) -> Result<TrainSummary, HarnessError> {
    let csp = if augmented {
        let dir = config.csp_dir(seed);
        require_checkpoint(&dir)?;
        let csp = CspPolicy::load(&dir)?;
        let pre_dir = config.pretrained_dir(seed);
        if pre_dir.join("manifest.json").is_file() {
            check_csp_lineage(&csp, &PretrainedPolicy::load(&pre_dir)?)?;
        }
        Some(csp)
    } else {
        None
    };
    let outcome = train_cell(config, kind, augmented, csp.as_ref(), seed)?;
    outcome.agent.save(&config.agent_dir(seed, kind, augmented))?;
    let metrics_file = config.metrics_path(seed, kind, augmented);
    write_csv(
        &metrics_file,
        "train_metrics.v1",
        "episode,env_steps,eval_avg_reward,eval_ctr,buffer_size,buffer_cf_fraction",
        outcome.metrics.iter().map(|m| {
            format!(
                "{},{},{},{},{},{}",
                m.episode,
                m.env_steps,
                fmt_f64(m.eval_avg_reward),
                fmt_f64(m.eval_ctr),
                m.buffer_size,
                fmt_f64(m.buffer_cf_fraction)
            )
        }),
    )?;
    let (final_avg_reward, final_ctr) = evaluate_agent(
        &outcome.agent,
        &config.env,
        config.eval_episodes,
        stage_seed(seed, "final-eval"),
    )?;
    Ok(TrainSummary {
        seed,
        kind,
        augmented,
        env_steps: outcome.env_steps,
        counterfactual_pushes: outcome.counterfactual_pushes,
        final_avg_reward,
        final_ctr,
        metrics_file,
    })
}

pub fn cmd_train(config: &RunConfig) -> Result<Vec<TrainSummary>, HarnessError> {
    let started = Instant::now();
    write_config_echo(config)?;
    let summaries = run_cells(config.seeds.len(), |i| {
        run_one_training(config, config.agent_kind, config.augment.enabled, config.seeds[i])
    })?;
    write_run_manifest(config, "train", started)?;
    Ok(summaries)
}

pub fn cmd_eval(config: &RunConfig) -> Result<Vec<EvalSummary>, HarnessError> {
    let mut out = Vec::new();
    for &seed in &config.seeds {
        let dir = config.agent_dir(seed, config.agent_kind, config.augment.enabled);
        require_checkpoint(&dir)?;
        let agent = Agent::load(&dir)?;
        let (avg_reward, avg_ctr) = evaluate_agent(
            &agent,
            &config.env,
            config.eval_episodes,
            stage_seed(seed, "final-eval"),
        )?;
        out.push(EvalSummary {
            seed,
            kind: config.agent_kind,
            augmented: config.augment.enabled,
            avg_reward,
            avg_ctr,
        });
    }
    Ok(out)
}

/// Load the per-seed frozen policy, training and saving it first if absent.
fn ensure_pretrained(config: &RunConfig, seed: u64) -> Result<PretrainedPolicy, HarnessError> {
    let dir = config.pretrained_dir(seed);
    if dir.join("manifest.json").is_file() {
        return Ok(PretrainedPolicy::load(&dir)?);
    }
    let (policy, _) = pretrain_cell(config, seed)?;
    policy.save(&dir)?;
    Ok(policy)
}

/// Load the per-seed CSP, training and saving it first if absent.
fn ensure_csp(config: &RunConfig, pi_o: &PretrainedPolicy, seed: u64) -> Result<CspPolicy, HarnessError> {
    let dir = config.csp_dir(seed);
    if dir.join("manifest.json").is_file() {
        let csp = CspPolicy::load(&dir)?;
        check_csp_lineage(&csp, pi_o)?;
        return Ok(csp);
    }
    let outcome = csp_cell(config, pi_o, seed)?;
    outcome.policy.save(&dir)?;
    write_csp_curve(&config.seed_dir(seed).join("csp_curve.csv"), &outcome)?;
    Ok(outcome.policy)
}

pub fn cmd_compare(config: &RunConfig) -> Result<ComparisonReport, HarnessError> {
    let started = Instant::now();
    write_config_echo(config)?;
    // Stage 1: one frozen policy + CSP per seed, shared by all agent kinds.
    run_cells(config.seeds.len(), |i| {
        let seed = config.seeds[i];
        let pi_o = ensure_pretrained(config, seed)?;
        ensure_csp(config, &pi_o, seed)?;
        Ok(())
    })?;

    // Stage 2: independent (kind, arm, seed) cells at matched budgets.
    let kinds = [AgentKind::Ddpg, AgentKind::Td3, AgentKind::Sac];
    let arms = [false, true];
    let mut cells = Vec::new();
    for &kind in &kinds {
        for &augmented in &arms {
            for &seed in &config.seeds {
                cells.push((kind, augmented, seed));
            }
        }
    }
    // Failures do not abort the batch: completed cells still land in the
    // report, with a failure manifest naming the rest.
    let results = run_cells(cells.len(), |i| {
        let (kind, augmented, seed) = cells[i];
        Ok(run_one_training(config, kind, augmented, seed).map_err(|e| e.to_string()))
    })?;

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for ((kind, augmented, seed), result) in cells.iter().zip(results) {
        match result {
            Ok(summary) => runs.push(RunRow {
                kind: *kind,
                arm: arm_name(*augmented).to_string(),
                seed: *seed,
                final_avg_reward: summary.final_avg_reward,
                final_ctr: summary.final_ctr,
                curve_file: format!("seed-{seed}/metrics-{kind}-{}.csv", arm_name(*augmented)),
            }),
            Err(message) => failures.push(serde_json::json!({
                "kind": kind.to_string(),
                "arm": arm_name(*augmented),
                "seed": seed,
                "error": message,
            })),
        }
    }
    let report = ComparisonReport::new(config.budget, config.seeds.clone(), runs);
    let compare_dir = config.output_dir.join("compare");
    report.save(&compare_dir.join("report.json"))?;
    if !failures.is_empty() {
        std::fs::write(
            compare_dir.join("failure_manifest.json"),
            serde_json::to_string_pretty(&failures).unwrap(),
        )?;
        write_run_manifest(config, "compare", started)?;
        return Err(HarnessError::Numeric(format!(
            "{} of {} comparison cells failed; partial report written to {}",
            failures.len(),
            cells.len(),
            compare_dir.join("report.json").display()
        )));
    }
    write_run_manifest(config, "compare", started)?;
    Ok(report)
}

pub fn cmd_sweep(config: &RunConfig) -> Result<SweepReport, HarnessError> {
    let started = Instant::now();
    write_config_echo(config)?;
    // Frozen policies are shared across hidden sizes, so build them first.
    let policies = run_cells(config.seeds.len(), |i| {
        ensure_pretrained(config, config.seeds[i])
    })?;

    let mut cells = Vec::new();
    for &hidden in &config.sweep_hidden {
        for (si, &seed) in config.seeds.iter().enumerate() {
            cells.push((hidden, si, seed));
        }
    }
    let outcomes = run_cells(cells.len(), |i| {
        let (hidden, si, seed) = cells[i];
        let mut cell_config = config.clone();
        cell_config.csp_trainer.agent.hidden = vec![hidden, hidden];
        csp_cell(&cell_config, &policies[si], seed)
    })?;

    let sweep_dir = config.output_dir.join("sweep");
    let mut rows = Vec::new();
    for (vi, &hidden) in config.sweep_hidden.iter().enumerate() {
        let per_seed: Vec<&CspTrainOutcome> = config
            .seeds
            .iter()
            .enumerate()
            .map(|(si, _)| &outcomes[vi * config.seeds.len() + si])
            .collect();
        let episodes = config.csp_trainer.episodes;
        let header = std::iter::once("episode".to_string())
            .chain(config.seeds.iter().map(|s| format!("seed_{s}")))
            .collect::<Vec<_>>()
            .join(",");
        write_csv(
            &sweep_dir.join(format!("hidden-{hidden}.csv")),
            "sweep_curve.v1",
            &header,
            (0..episodes).map(|ep| {
                std::iter::once(ep.to_string())
                    .chain(per_seed.iter().map(|o| fmt_f64(o.log[ep].mean_abs_dr)))
                    .collect::<Vec<_>>()
                    .join(",")
            }),
        )?;
        for (si, &seed) in config.seeds.iter().enumerate() {
            let curve: Vec<f64> = per_seed[si].log.iter().map(|l| l.mean_abs_dr).collect();
            let (first, last) = decile_means(&curve);
            rows.push(SweepRow {
                hidden,
                seed,
                episodes,
                first_decile_abs_dr: first,
                last_decile_abs_dr: last,
                final_abs_dr: curve.last().copied().unwrap_or(f64::NAN),
            });
        }
    }
    write_csv(
        &sweep_dir.join("aggregate.csv"),
        "sweep_aggregate.v1",
        "hidden,seed,episodes,first_decile_abs_dr,last_decile_abs_dr,final_abs_dr",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.hidden,
                r.seed,
                r.episodes,
                fmt_f64(r.first_decile_abs_dr),
                fmt_f64(r.last_decile_abs_dr),
                fmt_f64(r.final_abs_dr)
            )
        }),
    )?;
    let report = SweepReport {
        schema_version: 1,
        hidden_values: config.sweep_hidden.clone(),
        seeds: config.seeds.clone(),
        rows,
    };
    std::fs::write(
        sweep_dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    write_run_manifest(config, "sweep", started)?;
    Ok(report)
}
