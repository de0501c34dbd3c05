use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gaussprep::evalkit::final_window_mean;
use gaussprep::experiment::{self, ExperimentConfig, Summary};
use gaussprep::{Error, Pipeline};

/// Iterative Gaussianization as preprocessing for small diffusion models.
///
/// Exit status: 0 on success, 1 for invalid arguments or configuration,
/// 2 for failures while running.
#[derive(Debug, Parser)]
#[command(name = "gaussprep", version)]
struct Cli {
    /// Experiment config (JSON). Missing fields take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the config's top-level seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Overrides the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Restricts to one network width (default: every configured width).
    #[arg(long, global = true, value_name = "N")]
    width: Option<usize>,

    /// Restricts to one pipeline (default: every configured pipeline).
    #[arg(long, global = true, value_parser = parse_pipeline)]
    pipeline: Option<Pipeline>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the training and held-out sets from the mixture.
    GenData,
    /// Fit the Gaussianizer on the training set and transform it.
    FitTransform,
    /// Train the noise predictor(s).
    Train,
    /// Sample from trained networks and score the snapshots.
    SampleEval,
    /// Render plots and write summary.json.
    Report,
    /// All of the above, training jobs in parallel.
    RunAll,
}

fn parse_pipeline(s: &str) -> Result<Pipeline, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> gaussprep::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::MissingArtifact(p) => {
                Error::InvalidArgument(format!("config file {} not found", p.display()))
            }
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(w) = cli.width {
        cfg.widths = vec![w];
    }
    if let Some(p) = cli.pipeline {
        cfg.pipelines = vec![p];
    }
    cfg.validate()?;
    let layout = cfg.layout();

    match cli.command {
        Command::GenData => {
            experiment::cmd_gen_data(&cfg)?;
            println!(
                "wrote {} training and {} held-out rows to {}",
                cfg.n_train,
                cfg.n_heldout,
                layout.root.display()
            );
        }
        Command::FitTransform => {
            let diag = experiment::cmd_fit_transform(&cfg)?;
            println!("layer  max KS");
            for (i, ks) in diag.ks_per_layer.iter().enumerate() {
                println!("{:>5}  {ks:.4}", i + 1);
            }
            println!(
                "max |corr| {:.4}, held-out round trip max error {:.2e} over {} rows",
                diag.final_max_offdiag_corr, diag.round_trip.max_abs_error, diag.round_trip.rows_used
            );
        }
        Command::Train => {
            for &w in &cfg.widths {
                for &p in &cfg.pipelines {
                    let losses = experiment::cmd_train(&cfg, p, w)?;
                    println!(
                        "{p} w{w}: {} iterations, final-window loss {:.4}",
                        losses.len(),
                        final_window_mean(&losses, 0.1)
                    );
                }
            }
        }
        Command::SampleEval => {
            for &w in &cfg.widths {
                for &p in &cfg.pipelines {
                    let curve = experiment::cmd_sample_eval(&cfg, p, w)?;
                    let last = curve.values.last().copied().unwrap_or(f64::NAN);
                    println!(
                        "{p} w{w}: LL at step {} is {last:.3} (reference {:.3})",
                        curve.steps.last().copied().unwrap_or(0),
                        curve.reference
                    );
                }
            }
        }
        Command::Report => print_summary(&experiment::cmd_report(&cfg)?),
        Command::RunAll => print_summary(&experiment::cmd_run_all(&cfg)?),
    }
    Ok(())
}

fn print_summary(summary: &Summary) {
    println!("reference LL {:.4}", summary.reference_ll);
    for run in &summary.runs {
        let last = run.ll_values.last().copied().unwrap_or(f64::NAN);
        println!(
            "{:>12} w{:<4} final loss {:.4}  final LL {last:.3}",
            run.pipeline.as_str(),
            run.width,
            run.final_loss
        );
    }
    let show = |v: Option<bool>| match v {
        Some(true) => "yes",
        Some(false) => "no",
        None => "-",
    };
    println!("width  early  late-onset  final-order  final-reach  lower-loss");
    for c in &summary.checks {
        println!(
            "{:>5}  {:>5}  {:>10}  {:>11}  {:>11}  {:>10}",
            c.width,
            show(c.early_convergence),
            show(c.late_onset),
            show(c.final_quality_order),
            show(c.final_quality_reach),
            show(c.lower_final_loss)
        );
    }
}
