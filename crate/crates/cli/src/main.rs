//! `sea-oco`: run experiments, evaluate regret bounds and fuzz the
//! supporting lemmas from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sea_oco::harness::{emit, format_float, run_experiment, to_precise_json, ExperimentConfig, OutputFormat};
use sea_oco::metrics::{bound_value, fuzz_all_lemmas, implicit_omd_stated_bound, BoundInputs, Theorem};
use sea_oco::{Error, ProblemParams, Result};

#[derive(Debug, Parser)]
#[command(
    name = "sea-oco",
    version,
    about = "Optimistic online learning between stochastic and adversarial environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment described by a JSON configuration file.
    Run {
        /// Path to the configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the closed-form right-hand side of a regret bound.
    Bounds {
        /// Which bound: 1, 2, 3, 5, 6, 7, 8 or ftrl-convex.
        #[arg(long)]
        theorem: String,
        /// Comma-separated `key=value` pairs: G, D, L, lambda, alpha,
        /// sigma_cum, Sigma_cum, sigma_tilde_cum, sigma_max_sq,
        /// Sigma_max_sq, P, N, d.
        #[arg(long, default_value = "")]
        params: String,
    },
    /// Check the supporting inequalities on random instances.
    VerifyLemmas {
        /// Instances per lemma.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Seed of the instance generator.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, trials, seed, out } => run(config, trials, seed, out),
        Command::Bounds { theorem, params } => bounds(&theorem, &params),
        Command::VerifyLemmas { n, seed } => verify_lemmas(n, seed),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(path: PathBuf, trials: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut config = ExperimentConfig::load(&path)?;
    if let Some(t) = trials {
        config.trials = t;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.output_dir = Some(o);
    }
    let summary = run_experiment(&config)?;
    match &config.output_dir {
        Some(dir) => {
            let json = emit(&summary, OutputFormat::Json, dir)?;
            let csv = emit(&summary, OutputFormat::Csv, dir)?;
            println!("wrote {} and {}", json.display(), csv.display());
        }
        None => println!("{}", to_precise_json(&summary.final_scalars)?),
    }
    let f = &summary.final_scalars;
    if let (Some(theorem), Some(bound)) = (summary.theorem, f.bound_value) {
        let verdict = if f.regret_mean <= bound { "within" } else { "exceeds" };
        println!(
            "regret {} {verdict} bound {} {} (margin {}){}",
            format_float(f.regret_mean),
            theorem,
            format_float(bound),
            format_float(bound - f.regret_mean),
            if f.bound_estimated { " [estimated]" } else { "" }
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_params(text: &str) -> Result<(ProblemParams, BoundInputs)> {
    let mut params = ProblemParams::default();
    let mut inputs = BoundInputs { experts: 1, ..BoundInputs::default() };
    for pair in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) =
            pair.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got {pair:?}")))?;
        let number: f64 =
            value.trim().parse().map_err(|_| Error::Config(format!("value of {key} is not a number: {value:?}")))?;
        let count = || -> Result<usize> {
            if number >= 0.0 && number.fract() == 0.0 {
                Ok(number as usize)
            } else {
                Err(Error::Config(format!("{key} must be a non-negative integer")))
            }
        };
        match key.trim() {
            "G" => params.g = number,
            "D" => params.d = number,
            "L" => params.l = Some(number),
            "lambda" => params.lambda = Some(number),
            "alpha" => params.alpha = Some(number),
            "sigma_cum" => inputs.sigma_cum = number,
            "Sigma_cum" => inputs.big_sigma_cum = number,
            "sigma_tilde_cum" => inputs.sigma_tilde_cum = number,
            "sigma_max_sq" => inputs.sigma_max_sq = number,
            "Sigma_max_sq" => inputs.big_sigma_max_sq = number,
            "P" => inputs.path_length = number,
            "N" => inputs.experts = count()?,
            "d" => inputs.dim = count()?,
            other => return Err(Error::Config(format!("unknown bound parameter {other:?}"))),
        }
    }
    Ok((params, inputs))
}

fn bounds(theorem: &str, text: &str) -> Result<ExitCode> {
    let theorem: Theorem = theorem.parse()?;
    let (params, inputs) = parse_params(text)?;
    println!("{}", format_float(bound_value(theorem, &params, &inputs)?));
    if theorem == Theorem::ImplicitOmd {
        println!("stated constant: {}", format_float(implicit_omd_stated_bound(&params, &inputs)?));
    }
    Ok(ExitCode::SUCCESS)
}

fn verify_lemmas(n: usize, seed: u64) -> Result<ExitCode> {
    let reports = fuzz_all_lemmas(n, seed)?;
    let mut failed = false;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        failed |= !r.passed();
        println!(
            "{status} {:<31} instances={} violations={} worst_gap={}",
            r.lemma.name(),
            r.instances,
            r.violations,
            format_float(r.worst_gap)
        );
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}
