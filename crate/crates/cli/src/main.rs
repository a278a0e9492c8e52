mod args;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::json;
use surrogate_core::critic::{
    fit_exact_with_occupancy, q_targets_from_table, FeatureKind, StepWeights, Weighting,
};
use surrogate_core::experiment::{
    emit_plot, grad_compare, read_csv, run_sweep, write_csv_to, ExperimentContext,
};
use surrogate_core::{
    collect, fit_standard_ls, fit_weighted_ls, DifferentiablePolicy, PolicyEvaluation, StateTable,
};

use args::{parse_estimators, Cli, Command, CriticArg, FitMethod, ProblemArgs};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    let pipe = Some(io::ErrorKind::BrokenPipe);
    err.chain().any(|cause| {
        cause.downcast_ref::<io::Error>().map(io::Error::kind) == pipe
            || cause
                .downcast_ref::<serde_json::Error>()
                .and_then(|e| e.io_error_kind())
                == pipe
            || match cause.downcast_ref::<surrogate_core::Error>() {
                Some(surrogate_core::Error::Io(e)) => Some(e.kind()) == pipe,
                Some(surrogate_core::Error::Json(e)) => e.io_error_kind() == pipe,
                _ => false,
            }
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn init_threads(problem: &ProblemArgs) -> Result<()> {
    if let Some(n) = problem.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn write_json(problem: &ProblemArgs, value: &serde_json::Value) -> Result<()> {
    let mut out = output(problem.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { problem, policy } => {
            let config = problem.config()?;
            let mdp = config.mdp.build()?;
            let policy = match policy {
                Some(path) => DifferentiablePolicy::from_json(&std::fs::read_to_string(&path)?)?,
                None => config.behavior(),
            };
            let probs = policy.action_probs(mdp.n_states, mdp.n_actions)?;
            let eval = PolicyEvaluation::new(&mdp, &probs)?;
            write_json(
                &problem,
                &json!({
                    "policy": probs,
                    "value": eval.value,
                    "q": eval.q,
                    "advantage": eval.advantage,
                    "occupancy": eval.occupancy,
                    "J": eval.j,
                }),
            )
        }
        Command::Rollout { problem, rollouts } => {
            init_threads(&problem)?;
            let ctx = ExperimentContext::new(&problem.config()?)?;
            let samples = collect(
                &ctx.mdp,
                &ctx.behavior,
                rollouts,
                ctx.horizon,
                ctx.config.master_seed,
            )?;
            let mut out = output(problem.out.as_deref())?;
            samples.write_jsonl(&mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::FitCritic {
            problem,
            kind,
            method,
            rollouts,
        } => {
            init_threads(&problem)?;
            let ctx = ExperimentContext::new(&problem.config()?)?;
            let kind = match kind {
                CriticArg::Standard => FeatureKind::StandardLinear,
                CriticArg::Compatible => FeatureKind::CompatibleTarget,
                CriticArg::CompatibleIs => FeatureKind::CompatibleIs,
            };
            let map = ctx.feature_map(kind)?;
            let eval = &ctx.behavior_eval;
            let baseline = match kind {
                FeatureKind::StandardLinear => StateTable::zeros(ctx.mdp.n_states),
                _ => eval.value.clone(),
            };
            let (report, critic) = match method {
                FitMethod::Exact => {
                    let weighting = match kind {
                        FeatureKind::CompatibleTarget => Weighting::Target,
                        _ => Weighting::Behavior,
                    };
                    fit_exact_with_occupancy(&map, &eval.occupancy, &eval.q, &baseline, weighting)?
                }
                FitMethod::Sampled => {
                    let samples = collect(
                        &ctx.mdp,
                        &ctx.behavior,
                        rollouts,
                        ctx.horizon,
                        ctx.config.master_seed,
                    )?;
                    let targets = q_targets_from_table(&samples, &eval.q);
                    let sw = StepWeights::Discounted(ctx.mdp.gamma);
                    match kind {
                        FeatureKind::CompatibleTarget => {
                            fit_weighted_ls(&samples, &map, &targets, &baseline, sw)?
                        }
                        _ => fit_standard_ls(&samples, &map, &targets, &baseline, sw)?,
                    }
                }
            };
            write_json(
                &problem,
                &json!({ "report": report, "critic": critic.to_json() }),
            )
        }
        Command::GradCompare {
            problem,
            rollouts,
            trial,
            json,
        } => {
            init_threads(&problem)?;
            let ctx = ExperimentContext::new(&problem.config()?)?;
            let rows = grad_compare(&ctx, rollouts, trial)?;
            if json {
                return write_json(&problem, &serde_json::to_value(&rows)?);
            }
            let mut out = output(problem.out.as_deref())?;
            let dim = ctx.ground_truth.len();
            let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(9).max(9);
            write!(out, "{:<width$}", "estimator")?;
            for k in 0..dim {
                write!(out, " {:>14}", format!("g[{k}]"))?;
            }
            writeln!(out, " {:>12}", "gap_inf")?;
            for row in &rows {
                write!(out, "{:<width$}", row.label)?;
                for x in &row.estimate.g {
                    write!(out, " {x:>14.8}")?;
                }
                writeln!(out, " {:>12.3e}", row.gap)?;
            }
            out.flush()?;
            Ok(())
        }
        Command::Sweep {
            problem,
            rollout_counts,
            estimators,
            plot,
        } => {
            init_threads(&problem)?;
            let mut config = problem.config()?;
            if let Some(counts) = rollout_counts {
                config.rollout_counts = counts;
            }
            if let Some(names) = estimators {
                config.estimators = parse_estimators(&names)?;
            }
            config.validate()?;
            let result = run_sweep(&config)?;
            for cell in &result.cells {
                if cell.n_failed > 0 {
                    eprintln!(
                        "note: {} at {} rollouts: {} of {} trials had degenerate fits and were excluded",
                        cell.estimator,
                        cell.n_rollouts,
                        cell.n_failed,
                        cell.n_failed + cell.n_trials
                    );
                }
            }
            let out = output(problem.out.as_deref())?;
            write_csv_to(&result, out)?;
            if let Some(path) = plot {
                emit_plot(&result.summaries(), &path)?;
            }
            Ok(())
        }
        Command::Plot { csv, out } => {
            let cells = read_csv(&csv)?;
            emit_plot(&cells, &out)?;
            Ok(())
        }
    }
}
