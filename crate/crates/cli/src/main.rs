use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sveb::Family;
use sveb_cli::config::{merge, read_config_file, Options, RunConfig};
use sveb_cli::error::CliError;
use sveb_cli::pipeline::{execute, write_artifacts, Command};
use sveb_cli::simulate::{generate, parse_scenario, simulate, Preset, SimSettings};
use sveb_cli::replay;

/// Spatially varying empirical Bayes small-area estimation.
#[derive(Parser)]
#[command(name = "sveb", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Select the bandwidth and fit local hyperparameters.
    Fit(DataArgs),
    /// Fit, then estimate MSEs by the parametric bootstrap.
    Mse(DataArgs),
    /// Fit, bootstrap MSEs, and benchmark the estimates.
    Benchmark(DataArgs),
    /// Fit and predict the non-sampled areas with their MSEs.
    Predict(DataArgs),
    /// The whole pipeline.
    Run(DataArgs),
    /// Cross-validation criterion over a bandwidth grid.
    CvCurve {
        #[command(flatten)]
        data: DataArgs,
        /// Grid size.
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// Simulation studies.
    Simulate(SimArgs),
    /// Write one simulated dataset in the input schema.
    Generate {
        #[arg(long)]
        family: String,
        #[arg(long, default_value = "varying")]
        scenario: String,
        #[arg(long, default_value_t = 60)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Re-run a manifest and check that every output reproduces.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value = "sveb-replay")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// gaussian, poisson_gamma or binomial_beta.
    #[arg(long, short)]
    family: Option<String>,
    /// Flat key = value config file; flags take precedence.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// `auto` or a fixed bandwidth.
    #[arg(long, short)]
    bandwidth: Option<String>,
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    /// Golden-section tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Bootstrap replicates.
    #[arg(long, short = 'B')]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// n, none or column:NAME.
    #[arg(long)]
    weights: Option<String>,
    /// Keep the coordinates as given.
    #[arg(long)]
    no_standardize: bool,
    /// Re-select the bandwidth inside every bootstrap replicate.
    #[arg(long)]
    refit_bandwidth: bool,
}

impl DataArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => read_config_file(p)?,
            None => Options::new(),
        };
        let mut flags = Options::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                flags.insert(k.to_string(), v);
            }
        };
        put("input", self.input.as_ref().map(|p| p.display().to_string()));
        put("family", self.family.clone());
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("bandwidth", self.bandwidth.clone());
        put("lo", self.lo.map(|v| format!("{v:?}")));
        put("hi", self.hi.map(|v| format!("{v:?}")));
        put("tol", self.tol.map(|v| format!("{v:?}")));
        put("replicates", self.replicates.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("weights", self.weights.clone());
        put("standardize", self.no_standardize.then(|| "false".to_string()));
        put("refit_bandwidth", self.refit_bandwidth.then(|| "true".to_string()));
        Ok(RunConfig::from_options(&merge(file, flags))?)
    }
}

#[derive(Args)]
struct SimArgs {
    /// table1 or compare.
    #[arg(long, default_value = "table1")]
    preset: String,
    /// poisson_gamma, binomial_beta, or both.
    #[arg(long, default_value = "both")]
    family: String,
    /// varying or constant (compare preset).
    #[arg(long, default_value = "varying")]
    scenario: String,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Truth replications R.
    #[arg(long, short = 'R')]
    replications: Option<usize>,
    /// Estimation runs S (table1 preset).
    #[arg(long, short = 'S', default_value_t = 100)]
    estimation_runs: usize,
    /// Bootstrap replicates B (table1 preset).
    #[arg(long, short = 'B', default_value_t = 100)]
    bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short, default_value = "sveb-sim")]
    out: PathBuf,
}

impl SimArgs {
    fn settings(&self) -> Result<SimSettings, CliError> {
        let preset = match self.preset.as_str() {
            "table1" => Preset::Table1,
            "compare" => Preset::Compare,
            p => return Err(CliError::validation(format!("unknown preset '{p}'; use table1 or compare"))),
        };
        let families = match self.family.as_str() {
            "both" => vec![Family::PoissonGamma, Family::BinomialBeta],
            f => vec![f.parse::<Family>()?],
        };
        let (m, k, r) = match preset {
            Preset::Table1 => (50, 0, 100),
            Preset::Compare => (60, 20, 200),
        };
        Ok(SimSettings {
            preset,
            families,
            scenario: parse_scenario(&self.scenario)?,
            m: self.m.unwrap_or(m),
            k: self.k.unwrap_or(k),
            replications: self.replications.unwrap_or(r),
            estimation_runs: self.estimation_runs,
            bootstrap: self.bootstrap,
            seed: self.seed,
        })
    }
}

fn dataset_command(command: Command, args: &DataArgs, extra: Options) -> Result<serde_json::Value, CliError> {
    let cfg = args.config()?;
    let artifacts = execute(command, &cfg, &extra)?;
    write_artifacts(&cfg.out, &artifacts)?;
    Ok(json!({
        "status": "ok",
        "command": command.name(),
        "out": cfg.out.display().to_string(),
        "files": artifacts.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
    }))
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Cmd::Fit(a) => dataset_command(Command::Fit, &a, Options::new()),
        Cmd::Mse(a) => dataset_command(Command::Mse, &a, Options::new()),
        Cmd::Benchmark(a) => dataset_command(Command::Benchmark, &a, Options::new()),
        Cmd::Predict(a) => dataset_command(Command::Predict, &a, Options::new()),
        Cmd::Run(a) => dataset_command(Command::Run, &a, Options::new()),
        Cmd::CvCurve { data, points } => {
            let extra = Options::from([("points".to_string(), points.to_string())]);
            dataset_command(Command::CvCurve, &data, extra)
        }
        Cmd::Simulate(a) => {
            let artifacts = simulate(&a.settings()?)?;
            write_artifacts(&a.out, &artifacts)?;
            Ok(json!({
                "status": "ok",
                "command": "simulate",
                "out": a.out.display().to_string(),
                "files": artifacts.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
            }))
        }
        Cmd::Generate { family, scenario, m, k, seed, output } => {
            let family: Family = family.parse()?;
            let csv = generate(family, parse_scenario(&scenario)?, m, k, seed)?;
            std::fs::write(&output, csv).map_err(|e| CliError::io(&output, e))?;
            Ok(json!({"status": "ok", "command": "generate", "file": output.display().to_string()}))
        }
        Cmd::Replay { manifest, out } => {
            let r = replay(&manifest, &out)?;
            if !r.mismatched.is_empty() {
                return Err(CliError::Mismatch(format!(
                    "replay outputs differ from the manifest: {}",
                    r.mismatched.join(", ")
                )));
            }
            Ok(json!({"status": "ok", "command": "replay", "out": out.display().to_string(), "reproduced": r.checked}))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
