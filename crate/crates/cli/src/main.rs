//! Command-line harness over the `expts` library.
//!
//! Subcommands either run configured experiments (`run`), dump plot-ready
//! sampler curves (`sampler-dump`), or execute the built-in verification
//! suites (`verify-tails`, `verify-maximal`, `sweep-minimax`). The process
//! exits zero only if all requested work succeeded, including the pass/fail
//! verdict of a verification suite.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use expts::config::{self, ExperimentConfig};
use expts::family::{ExpFamilyModel, FamilyError};
use expts::policy::{PolicyError, PolicyKind};
use expts::report;
use expts::sampler::SamplerParams;
use expts::suites;

/// Environment variable that overrides the configured output directory.
const OUTPUT_DIR_VAR: &str = "EXPTS_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "expts",
    version,
    about = "Thompson sampling on exponential-family bandits: experiments and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write CSVs, a plot stub and a manifest.
    Run(RunArgs),
    /// Tabulate one arm's sampling distribution as a plot-ready CSV.
    SamplerDump(SamplerDumpArgs),
    /// Check sampler draws against the analytic distribution (KS and tails).
    VerifyTails(VerifyTailsArgs),
    /// Check empirical mean crossings against their concentration bound.
    VerifyMaximal(VerifyMaximalArgs),
    /// Sweep hard instances over K and T and fit the regret growth in T.
    SweepMinimax(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (`key = value` lines, `#` comments).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for replications (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the config's base_seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SamplerDumpArgs {
    /// Reward family tag: bernoulli | gaussian:<var> | exponential |
    /// gamma:<shape> | poisson.
    #[arg(long, value_parser = parse_family)]
    family: ExpFamilyModel,
    /// Mean estimate (inside the family's open mean support).
    #[arg(long)]
    mu: f64,
    /// Pull count (at least 1).
    #[arg(long)]
    n: u64,
    /// Override the anytime coefficient b_n (default (n - 1) / n).
    #[arg(long)]
    coeff: Option<f64>,
    /// Grid size; odd sizes center the exact-mean row.
    #[arg(long, default_value_t = 513)]
    points: usize,
    /// Output CSV path.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyTailsArgs {
    /// Draws per case.
    #[arg(long, default_value_t = 100_000)]
    draws: u64,
    /// Base seed (each case derives its own stream).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the full report as JSON instead of per-case lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyMaximalArgs {
    /// Replicated reward streams per case.
    #[arg(long, default_value_t = 100_000)]
    replications: u64,
    /// Base seed (each case derives its own stream).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the full report as JSON instead of per-case lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Policy to sweep.
    #[arg(long, value_parser = parse_policy, default_value = "expts+")]
    policy: PolicyKind,
    /// Replications per (K, T) cell.
    #[arg(long, default_value_t = 200)]
    replications: u64,
    /// Base seed (each cell derives its own stream).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for replications (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Print the full report as JSON instead of per-cell lines.
    #[arg(long)]
    json: bool,
}

fn parse_family(s: &str) -> Result<ExpFamilyModel, FamilyError> {
    ExpFamilyModel::from_str(s)
}

fn parse_policy(s: &str) -> Result<PolicyKind, PolicyError> {
    PolicyKind::from_str(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::SamplerDump(args) => cmd_sampler_dump(args),
        Command::VerifyTails(args) => cmd_verify_tails(args),
        Command::VerifyMaximal(args) => cmd_verify_maximal(args),
        Command::SweepMinimax(args) => cmd_sweep_minimax(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: ExperimentConfig = config::parse_config(&text)?;
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_VAR) {
        config.output_path = PathBuf::from(dir);
    }
    let report = report::run_experiment(&config, args.workers)?;
    for summary in &report.summaries {
        let last = summary.checkpoints.len() - 1;
        println!(
            "{}: mean regret {:.4} +/- {:.4} at t = {}",
            summary.policy, summary.mean_regret[last], summary.stderr[last], summary.horizon
        );
    }
    println!("wrote {}", report.manifest_path.display());
    Ok(())
}

fn cmd_sampler_dump(args: &SamplerDumpArgs) -> anyhow::Result<()> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    if args.points < 2 {
        bail!("--points must be at least 2");
    }
    let params = match args.coeff {
        Some(c) if !(c.is_finite() && c >= 0.0) => {
            bail!("--coeff must be finite and nonnegative")
        }
        Some(c) => SamplerParams::with_coeff(args.mu, args.n, c),
        None => SamplerParams::new(args.mu, args.n),
    };
    report::write_sampler_dump(&args.output, &args.family, &params, args.points)?;
    println!("wrote {}", args.output.display());
    Ok(())
}

fn cmd_verify_tails(args: &VerifyTailsArgs) -> anyhow::Result<()> {
    let cases = suites::default_tails_cases();
    let report = suites::verify_tails_suite(&cases, args.draws, args.seed);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for o in &report.outcomes {
            println!(
                "{} mu={} n={}: KS {:.6} (critical {:.6}), {}/{} tail checks — {}",
                o.case.family,
                o.case.mu,
                o.case.n,
                o.ks_statistic,
                o.ks_critical,
                o.tail_checks.iter().filter(|c| c.ok).count(),
                o.tail_checks.len(),
                verdict(o.ok)
            );
        }
        println!(
            "tails suite: {} ({} cases, {} draws each)",
            verdict(report.ok),
            report.outcomes.len(),
            args.draws
        );
    }
    if !report.ok {
        bail!("tails suite failed");
    }
    Ok(())
}

fn cmd_verify_maximal(args: &VerifyMaximalArgs) -> anyhow::Result<()> {
    let report = suites::verify_maximal_suite(args.replications, args.seed)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for c in &report.checks {
            println!(
                "{} mu={} x={} n in [{}, {}]: frequency {:.6} <= bound {:.6} + slack {:.6} — {}",
                c.family, c.mu, c.x, c.from_n, c.to_n, c.frequency, c.kl_bound, c.slack,
                verdict(c.ok)
            );
        }
        println!(
            "maximal suite: {} ({} cases, {} replications each)",
            verdict(report.ok),
            report.checks.len(),
            args.replications
        );
    }
    if !report.ok {
        bail!("maximal-inequality suite failed");
    }
    Ok(())
}

fn cmd_sweep_minimax(args: &SweepArgs) -> anyhow::Result<()> {
    let report =
        suites::sweep_minimax(args.policy, args.replications, args.seed, args.workers)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for c in &report.cells {
            println!(
                "K={} T={}: mean regret {:.3} +/- {:.3} (ceiling {:.1})",
                c.num_arms, c.horizon, c.mean_regret, c.stderr, c.ceiling
            );
        }
        for &(k, slope) in &report.slopes {
            println!(
                "K={}: fitted log-log slope {:.4} (band [{}, {}])",
                k, slope, report.slope_band.0, report.slope_band.1
            );
        }
        println!("minimax sweep for {}: {}", report.policy, verdict(report.ok));
    }
    if !report.ok {
        bail!("minimax sweep failed");
    }
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}
