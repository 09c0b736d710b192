use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use embodied_core::harness::{self, BackendKind, HarnessError, RunConfig};
use embodied_core::roschain::CommandRegistry;
use embodied_core::scenarios::ScenarioId;

#[derive(Parser)]
#[command(
    name = "embodied",
    version,
    about = "Run and compare embodied agent scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

fn parse_scenario(s: &str) -> Result<ScenarioId, String> {
    ScenarioId::from_name(s).ok_or_else(|| {
        let names: Vec<_> = ScenarioId::ALL.iter().map(|s| s.name()).collect();
        format!(
            "unknown scenario '{s}' (expected one of {})",
            names.join(", ")
        )
    })
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    BackendKind::from_name(s).ok_or_else(|| {
        format!("unknown backend '{s}' (expected scripted_full, scripted_no_roschain, single_call, random_baseline or external)")
    })
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one episode and write its artifacts.
    Run {
        #[arg(long, value_parser = parse_scenario)]
        scenario: ScenarioId,
        #[arg(long, value_parser = parse_backend, default_value = "scripted_full")]
        backend: BackendKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = harness::DEFAULT_MAX_STEPS)]
        max_steps: u64,
        #[arg(long, default_value_t = harness::DEFAULT_TICK_DT)]
        tick_dt: f64,
        #[arg(long, default_value_t = embodied_core::controller::DEFAULT_MAX_SPEED)]
        max_speed: f64,
        /// Perturb observed bearings and distances.
        #[arg(long)]
        noise: bool,
        /// Use the thread-safe bus mode.
        #[arg(long)]
        concurrent: bool,
        /// Layout JSON replacing the shipped one.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate TR and AR per backend and scenario.
    Compare {
        /// Every offline backend on every scenario.
        #[arg(long, required_unless_present = "scenario")]
        all: bool,
        #[arg(long, value_parser = parse_scenario)]
        scenario: Vec<ScenarioId>,
        #[arg(long, value_parser = parse_backend)]
        backend: Vec<BackendKind>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output; a JSON copy is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the command registry table.
    DumpRegistry,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e.downcast_ref::<io::Error>()
                .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<HarnessError>()
                .is_some_and(|h| matches!(h, HarnessError::Config(_)))
            {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn execute(cmd: Cmd) -> anyhow::Result<()> {
    let mut stdout = io::stdout().lock();
    match cmd {
        Cmd::Run {
            scenario,
            backend,
            seed,
            max_steps,
            tick_dt,
            max_speed,
            noise,
            concurrent,
            layout,
            out,
        } => {
            let config = RunConfig {
                max_steps,
                tick_dt,
                max_speed,
                noise,
                concurrent,
                layout,
                out_dir: Some(out.clone()),
                ..RunConfig::new(scenario, backend, seed)
            };
            let report = harness::run(&config)?;
            writeln!(
                stdout,
                "{} {} seed={} TR={:.1} AR={:.1} steps={} digest={}",
                report.scenario,
                report.backend,
                report.seed,
                report.tr,
                report.ar,
                report.step_count,
                report.command_trace_digest
            )?;
            writeln!(stdout, "artifacts written to {}", out.display())?;
        }
        Cmd::Compare {
            all,
            scenario,
            backend,
            seed,
            out,
        } => {
            let scenarios = if all || scenario.is_empty() {
                ScenarioId::ALL.to_vec()
            } else {
                scenario
            };
            let backends = if all || backend.is_empty() {
                BackendKind::OFFLINE.to_vec()
            } else {
                backend
            };
            let configs: Vec<RunConfig> = backends
                .iter()
                .flat_map(|b| scenarios.iter().map(move |s| RunConfig::new(*s, *b, seed)))
                .collect();
            let (table, _) = harness::compare(&configs)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            let csv = table.to_csv();
            std::fs::write(&out, &csv).with_context(|| format!("writing {}", out.display()))?;
            std::fs::write(out.with_extension("json"), table.to_json())?;
            write!(stdout, "{csv}")?;
        }
        Cmd::DumpRegistry => write!(stdout, "{}", CommandRegistry::standard().dump_table())?,
    }
    Ok(())
}
