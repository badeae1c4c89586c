use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use scpf::experiment::{self, ResultTable, ScenarioConfig};

/// Share-constrained proportionally fair slicing experiments.
#[derive(Debug, Parser)]
#[command(name = "scpf", version)]
struct Cli {
    /// Scenario configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Overrides the tolerance in standard errors.
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,
    /// Overrides the replication count.
    #[arg(long, global = true, value_name = "N")]
    reps: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// BTD and gain curves from the closed forms.
    Analyze,
    /// Monte Carlo BTD against the closed forms.
    Simulate,
    /// Max-min share dimensioning.
    Dimension,
    /// Traffic-shaping equilibria over an arrival-rate sweep.
    Game,
    /// Radio simulation, calibration and closed-loop validation.
    Radio,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Simulate => "simulate",
            Command::Dimension => "dimension",
            Command::Game => "game",
            Command::Radio => "radio",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<scpf::Error>() {
                Some(inner) => eprintln!("error [{}]: {inner}", inner.code()),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ScenarioConfig> {
    let path = cli.config.as_deref().context("--config PATH is required")?;
    let mut config = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(tol) = cli.tol {
        config.experiment.tol = tol;
    }
    if let Some(reps) = cli.reps {
        config.experiment.reps = reps;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let config = load_config(cli)?;
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let cmd = cli.command.name();
    write_text(&cli.out.join(format!("{cmd}.config.toml")), &config.to_toml()?)?;
    println!("scenario {} (config {})", config.name, config.hash());

    match cli.command {
        Command::Analyze => write_table(&cli.out, cmd, &experiment::analyze(&config)?)?,
        Command::Simulate => {
            let table = experiment::simulate(&config)?;
            let flags: Vec<f64> = table.select("within_tol", None, None).map(|r| r.value).collect();
            let passed = flags.iter().filter(|f| **f == 1.0).count();
            println!("{passed}/{} comparisons within {} standard errors", flags.len(), config.experiment.tol);
            write_table(&cli.out, cmd, &table)?;
        }
        Command::Dimension => {
            let d = experiment::dimension(&config)?;
            println!("shares {:?}, objective {:.6} ({:?})", d.shares, d.objective, d.status);
            write_json(&cli.out.join("dimension.json"), &d)?;
        }
        Command::Game => {
            let g = experiment::game(&config)?;
            for p in &g.points {
                let r = p.equilibrium.solver.as_ref().expect("iterative solution");
                println!(
                    "arrival scale {}: gains {:.4?}, omega {:.2e} after {} iterations",
                    p.arrival_scale, p.equilibrium.gains, r.omega, r.iterations
                );
            }
            println!("saturated gains {:.4?}", g.saturated.gains);
            write_json(&cli.out.join("game.json"), &g)?;
            write_table(&cli.out, cmd, &g.table)?;
        }
        Command::Radio => {
            let r = experiment::radio(&config)?;
            write_text(&cli.out.join("calibrated.toml"), &r.calibrated.to_toml()?)?;
            write_json(&cli.out.join("calibration.json"), &r.calibration)?;
            if config.experiment.trace {
                let path = cli.out.join("trace.csv");
                r.run.write_trace_csv(BufWriter::new(File::create(&path)?))?;
                println!("wrote {}", path.display());
            }
            write_table(&cli.out, cmd, &r.table)?;
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_table(dir: &Path, cmd: &str, table: &ResultTable) -> anyhow::Result<()> {
    let path = dir.join(format!("{cmd}.csv"));
    table.write_csv(BufWriter::new(File::create(&path)?))?;
    println!("wrote {} ({} rows)", path.display(), table.rows.len());
    Ok(())
}
