//! `sea-sim`: runs SEA robot scenarios and writes telemetry, metrics and
//! gain certificates.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;

use sea_control::{builtin_campaign, builtin_campaigns, certify, parse_scenario, run, Error, Scenario};

use output::{certificate_records, directory_name, write_outputs, RunOutputs};

#[derive(Parser)]
#[command(name = "sea-sim", version, about = "Simulate disturbance-observer control of a robot with series elastic actuators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files or built-in campaigns and write their outputs.
    Run {
        /// Scenario JSON files or built-in campaign names; `all` runs every campaign.
        #[arg(required = true)]
        targets: Vec<String>,
        /// Output root; each scenario writes into `<out>/<scenario name>/`.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Keep every N-th telemetry row.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        decimate: u64,
        /// Skip telemetry.csv.
        #[arg(long)]
        metrics_only: bool,
        /// Scenarios simulated concurrently.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
    },
    /// List the built-in campaigns.
    ListCampaigns,
    /// Print a built-in campaign as scenario JSON.
    Show { name: String },
    /// Synthesize the gains of a scenario and print their Lyapunov certificates.
    Certify { target: String },
}

#[derive(Debug)]
enum Failure {
    Io(String),
    Config(String),
    Divergence(String),
    Certification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Divergence(_) => 3,
            Failure::Certification(_) => 4,
        }
    }

    fn prefixed(self, name: &str) -> Self {
        let tag = |m: String| format!("{name}: {m}");
        match self {
            Failure::Io(m) => Failure::Io(tag(m)),
            Failure::Config(m) => Failure::Config(tag(m)),
            Failure::Divergence(m) => Failure::Divergence(tag(m)),
            Failure::Certification(m) => Failure::Certification(tag(m)),
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Config(m) | Failure::Divergence(m) | Failure::Certification(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e.root() {
            Error::Divergence { .. } => Failure::Divergence(message),
            Error::NotHurwitz { .. } | Error::Synthesis(_) | Error::WeightNotPositiveDefinite => {
                Failure::Certification(message)
            }
            _ => Failure::Config(message),
        }
    }
}

/// What one `run` invocation does with each scenario.
struct RunConfig {
    out: PathBuf,
    decimate: usize,
    metrics_only: bool,
}

fn load(target: &str) -> Result<Scenario, Failure> {
    let path = Path::new(target);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        return parse_scenario(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())));
    }
    builtin_campaign(target)
        .ok_or_else(|| Failure::Config(format!("`{target}` is neither a scenario file nor a built-in campaign")))
}

fn resolve(targets: &[String]) -> Result<Vec<Scenario>, Failure> {
    let mut out = Vec::new();
    for t in targets {
        if t == "all" {
            out.extend(builtin_campaigns());
        } else {
            out.push(load(t)?);
        }
    }
    Ok(out)
}

fn certified(scenario: &Scenario) -> Result<Vec<sea_control::lyapunov::LyapunovCertificate>, Failure> {
    let certs = certify(scenario)?;
    if let Some((joint, c)) = certs.iter().enumerate().find(|(_, c)| !c.is_valid()) {
        return Err(Failure::Certification(format!(
            "{}: joint {joint} certificate invalid (residual {:.3e}, min eig(P) {:.3e})",
            scenario.name, c.residual_norm, c.p_min_eig
        )));
    }
    Ok(certs)
}

fn run_one(scenario: &Scenario, config: &RunConfig) -> Result<String, Failure> {
    let certs = certified(scenario)?;
    let start = Instant::now();
    let (telemetry, metrics) = run(scenario).map_err(|e| Failure::from(e).prefixed(&scenario.name))?;
    let elapsed = start.elapsed().as_secs_f64();
    let dir = config.out.join(directory_name(&scenario.name));
    let outputs = RunOutputs {
        scenario,
        telemetry: (!config.metrics_only).then_some(&telemetry),
        metrics: &metrics,
        certificates: &certs,
    };
    let written = write_outputs(&dir, &outputs, config.decimate).map_err(|e| Failure::Io(e.to_string()))?;
    for p in &written {
        info!("wrote {}", p.display());
    }
    let worst = metrics.joints.iter().map(|j| j.max_abs_error).fold(0.0, f64::max);
    Ok(format!(
        "{}: {} steps in {elapsed:.2} s, max |error| {worst:.3e}, oracle residual {:.1e} -> {}",
        scenario.name,
        metrics.steps,
        metrics.max_oracle_residual,
        dir.display()
    ))
}

fn run_all(scenarios: &[Scenario], config: &RunConfig, jobs: usize) -> Vec<Result<String, Failure>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<String, Failure>>>> =
        Mutex::new((0..scenarios.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(scenarios.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(scenario) = scenarios.get(i) else { break };
                let r = run_one(scenario, config);
                results.lock().expect("result slot lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("result slot lock")
        .into_iter()
        .map(|r| r.expect("every scenario ran"))
        .collect()
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            targets,
            out,
            decimate,
            metrics_only,
            jobs,
        } => {
            let scenarios = resolve(&targets)?;
            let config = RunConfig {
                out,
                decimate: decimate as usize,
                metrics_only,
            };
            let mut first_failure = None;
            for r in run_all(&scenarios, &config, jobs as usize) {
                match r {
                    Ok(line) => println!("{line}"),
                    // the first failure is reported by main
                    Err(f) if first_failure.is_some() => eprintln!("error: {}", f.message()),
                    Err(f) => first_failure = Some(f),
                }
            }
            first_failure.map_or(Ok(()), Err)
        }
        Command::ListCampaigns => {
            for s in builtin_campaigns() {
                let modes: Vec<&str> = s.modes.iter().map(|m| m.name()).collect();
                println!("{:<20} {:>5.1} s  {}", s.name, s.duration, modes.join(","));
            }
            Ok(())
        }
        Command::Show { name } => {
            let s = builtin_campaign(&name).ok_or_else(|| Failure::Config(format!("no built-in campaign `{name}`")))?;
            println!("{}", s.to_json());
            Ok(())
        }
        Command::Certify { target } => {
            let scenario = load(&target)?;
            let certs = certify(&scenario)?;
            let records = certificate_records(&scenario.modes, &certs);
            let text = serde_json::to_string_pretty(&records).map_err(|e| Failure::Io(e.to_string()))?;
            println!("{text}");
            if let Some(bad) = records.iter().find(|r| !r.valid) {
                return Err(Failure::Certification(format!("joint {} certificate invalid", bad.joint)));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
