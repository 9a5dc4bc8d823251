use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use cdnsim::harness::{fit_exponent, replicate, ExperimentSpec, ExponentFit, Sweep};
use cdnsim::params::{ParamError, Params};
use cdnsim::report::{experiment_json, run_json, write_summary_csv, write_trace_csv};
use cdnsim::validate;

#[derive(Parser)]
#[command(name = "cdnsim", version, about = "Content placement simulator for unit-capacity server farms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print its metrics as JSON.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the event trace as CSV (implies --trace).
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Replicate policies over an optional sweep and emit summary rows.
    Experiment {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sweep n and fit log-log slopes of mean deferred requests and
    /// external fetches.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the invariant suites.
    Validate {
        /// Larger systems and more replications.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    lambda_bar: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    /// none, block or continuous.
    #[arg(long)]
    change_model: Option<String>,
    #[arg(long)]
    block_period: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    /// myopic, genie, empirical[@t=SECS|@arrivals=K], good-turing[@...].
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    learn_time: Option<String>,
    #[arg(long)]
    learn_arrivals: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    trace: bool,
}

#[derive(Args, Default)]
struct ExperimentArgs {
    #[arg(long)]
    replications: Option<String>,
    /// Replications for the learn-then-freeze policies.
    #[arg(long)]
    static_replications: Option<String>,
    /// Comma-separated policy list.
    #[arg(long)]
    policies: Option<String>,
    /// n, beta or lambda_bar.
    #[arg(long)]
    sweep_param: Option<String>,
    /// Comma-separated values.
    #[arg(long)]
    sweep_values: Option<String>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file, or `-` for standard output.
    #[arg(long, default_value = "-")]
    out: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Maximum concurrent replications.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Config(String),
    Internal(anyhow::Error),
}

impl From<ParamError> for Failure {
    fn from(e: ParamError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

fn params(config: &ConfigArgs, experiment: Option<&ExperimentArgs>) -> Result<Params, Failure> {
    let file = match &config.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            Params::parse(&text)?
        }
        None => Params::default(),
    };
    let mut flags = Params::default();
    let mut set = |key: &str, v: &Option<String>| -> Result<(), ParamError> {
        match v {
            Some(v) => flags.set(key, v),
            None => Ok(()),
        }
    };
    set("n", &config.n)?;
    set("alpha", &config.alpha)?;
    set("lambda_bar", &config.lambda_bar)?;
    set("beta", &config.beta)?;
    set("horizon", &config.horizon)?;
    set("change_model", &config.change_model)?;
    set("block_period", &config.block_period)?;
    set("nu", &config.nu)?;
    set("policy", &config.policy)?;
    set("learn_time", &config.learn_time)?;
    set("learn_arrivals", &config.learn_arrivals)?;
    set("seed", &config.seed)?;
    if config.trace {
        set("trace", &Some("true".into()))?;
    }
    if let Some(e) = experiment {
        set("replications", &e.replications)?;
        set("static_replications", &e.static_replications)?;
        set("policies", &e.policies)?;
        set("sweep_param", &e.sweep_param)?;
        set("sweep_values", &e.sweep_values)?;
    }
    Ok(file.merged(&flags))
}

fn open_out(out: &str) -> anyhow::Result<Box<dyn Write>> {
    Ok(if out == "-" {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        let f = File::create(Path::new(out)).with_context(|| format!("cannot write {out}"))?;
        Box::new(BufWriter::new(f))
    })
}

fn warn_all(spec: &ExperimentSpec) {
    for p in &spec.policies {
        let c = cdnsim_core::SimConfig { policy: *p, ..spec.base.clone() };
        for w in c.warnings() {
            log::warn!("{w}");
        }
    }
}

fn simulate(config: &ConfigArgs, trace_out: Option<&Path>, out: &str) -> Result<(), Failure> {
    let mut cfg = params(config, None)?.sim_config()?;
    cfg.trace |= trace_out.is_some();
    for w in cfg.warnings() {
        log::warn!("{w}");
    }
    let metrics = cdnsim_core::run(&cfg).context("simulation failed")?;
    if let (Some(path), Some(trace)) = (trace_out, metrics.trace.as_ref()) {
        let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        write_trace_csv(BufWriter::new(f), trace).context("writing trace")?;
    }
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, &run_json(&cfg, &metrics)).context("writing report")?;
    writeln!(w).context("writing report")?;
    w.flush().context("writing report")?;
    Ok(())
}

fn experiment(spec: &ExperimentSpec, output: &OutputArgs, fits: bool) -> Result<(), Failure> {
    warn_all(spec);
    let exp = replicate(spec, output.jobs).map_err(|e| Failure::Internal(e.into()))?;
    let mut fitted: Vec<(String, ExponentFit)> = Vec::new();
    if fits {
        let rows = exp.rows();
        for p in &spec.policies {
            let name = p.to_string();
            let mine: Vec<_> = rows.iter().filter(|r| r.policy == name).collect();
            let series = [
                ("mean_deferred", mine.iter().map(|r| (r.sweep_value, r.mean_deferred)).collect::<Vec<_>>()),
                (
                    "mean_external_fetches",
                    mine.iter().map(|r| (r.sweep_value, r.mean_external_fetches)).collect(),
                ),
            ];
            for (metric, points) in series {
                match fit_exponent(&points) {
                    Ok(f) => {
                        eprintln!("{name} {metric}: {f}");
                        fitted.push((format!("{name}/{metric}"), f));
                    }
                    Err(e) => log::warn!("{name} {metric}: {e}"),
                }
            }
        }
    }
    let mut w = open_out(&output.out)?;
    match output.format {
        Format::Csv => write_summary_csv(&mut w, &exp.rows()).context("writing CSV")?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &experiment_json(&exp, &fitted)).context("writing JSON")?;
            writeln!(w).context("writing JSON")?;
        }
    }
    w.flush().context("writing output")?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Simulate { config, trace_out, out } => simulate(&config, trace_out.as_deref(), &out)?,
        Command::Experiment { config, experiment: e, output } => {
            let spec = params(&config, Some(&e))?.experiment()?;
            experiment(&spec, &output, false)?;
        }
        Command::Sweep { config, experiment: e, output } => {
            let mut p = params(&config, Some(&e))?;
            if p.get("sweep_param").is_none() {
                p.set("sweep_param", "n")?;
            }
            if p.get("sweep_values").is_none() {
                p.set("sweep_values", "250,500,1000,2000")?;
            }
            let spec = p.experiment()?;
            if !matches!(spec.sweep, Sweep::N(_)) {
                return Err(Failure::Config("sweep_param must be n for the scaling sweep".into()));
            }
            experiment(&spec, &output, true)?;
        }
        Command::Validate { full, jobs } => {
            let results = match jobs {
                Some(j) => rayon::ThreadPoolBuilder::new()
                    .num_threads(j.max(1))
                    .build()
                    .context("thread pool")?
                    .install(|| validate::run_all(full)),
                None => validate::run_all(full),
            };
            let mut ok = true;
            for r in &results {
                println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.pass;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
