use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cima_core::ProtocolKind;
use cima_sim::verify::{run_all, Scale};
use cima_sim::{
    render_plot, run_experiment, sweep, write_csv, ExperimentConfig, Pattern, PlotKind, PlotOptions, SimError,
    SweepAxis,
};
use clap::{Args, Parser, Subcommand};

/// Collision channel simulator: CIMA, TDMA and quadratic back-off.
#[derive(Parser, Debug)]
#[command(name = "cima-sim", version)]
struct Cli {
    /// Directory for outputs when no explicit output path is given.
    #[arg(long, env = "CIMA_OUTPUT_DIR", global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write per-replication and aggregate rows.
    Run(RunArgs),
    /// Sweep the user count or the load and write one aggregate row per point.
    Sweep(SweepArgs),
    /// Run the invariant and oracle battery.
    Verify(VerifyArgs),
    /// Render a CSV result table as an SVG plot.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON experiment file. Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    protocol: Option<ProtocolKind>,
    #[arg(long, short = 'n')]
    users: Option<usize>,
    /// Total arrival rate, split across users by --pattern.
    #[arg(long)]
    load: Option<f64>,
    #[arg(long)]
    pattern: Option<Pattern>,
    /// Explicit per-user rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// CSV output path. Defaults to stdout, or a file in the output directory.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig, SimError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => {
                let users = self
                    .users
                    .ok_or_else(|| SimError::Config("--users is required without --config".into()))?;
                let mut c = ExperimentConfig::new(ProtocolKind::Cima, users, 0.0, Pattern::Asymmetric);
                c.load = None;
                c
            }
        };
        if let Some(p) = self.protocol {
            cfg.protocol = p;
        }
        if let Some(n) = self.users {
            cfg.users = n;
        }
        if let Some(l) = self.load {
            cfg.load = Some(l);
            cfg.rates = None;
        }
        if let Some(p) = self.pattern {
            cfg.pattern = p;
        }
        if let Some(r) = &self.rates {
            cfg.rates = Some(r.clone());
            cfg.load = None;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    axis: SweepAxis,
    /// Axis values, comma separated. May be empty.
    #[arg(long, default_value = "")]
    values: String,
    /// Protocols to compare on shared arrival paths. Defaults to the configured protocol.
    #[arg(long, value_delimiter = ',')]
    protocols: Option<Vec<ProtocolKind>>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Reduced sizes for a fast smoke run.
    #[arg(long)]
    quick: bool,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// CSV table produced by `run` or `sweep`.
    #[arg(long, short = 'i')]
    input: PathBuf,
    #[arg(long)]
    kind: PlotKind,
    /// Draw the dashed 2N/(1-λ) reference curve.
    #[arg(long)]
    bound: bool,
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

fn open_output(explicit: Option<&Path>, dir: Option<&Path>, default_name: &str) -> Result<Box<dyn Write>, SimError> {
    let path = match (explicit, dir) {
        (Some(p), Some(d)) if p.is_relative() => Some(d.join(p)),
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(d)) => Some(d.join(default_name)),
        (None, None) => None,
    };
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            Ok(Box::new(BufWriter::new(File::create(p)?)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn parse_values(list: &str) -> Result<Vec<f64>, SimError> {
    list.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| SimError::Config(format!("bad sweep value '{v}'"))))
        .collect()
}

fn report_violations(violations: u64) -> ExitCode {
    if violations == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("invariant audit flagged {violations} violations");
        ExitCode::from(1)
    }
}

fn execute(cli: Cli) -> Result<ExitCode, SimError> {
    let dir = cli.output_dir.as_deref();
    match cli.command {
        Command::Run(args) => {
            let cfg = args.experiment.resolve()?;
            let result = run_experiment(&cfg)?;
            let out = open_output(cfg.output.as_deref(), dir, "run.csv")?;
            write_csv(out, result.rows())?;
            Ok(report_violations(result.violations()))
        }
        Command::Sweep(args) => {
            let cfg = args.experiment.resolve()?;
            let protocols = args.protocols.unwrap_or_else(|| vec![cfg.protocol]);
            let values = parse_values(&args.values)?;
            let results = sweep(&cfg, args.axis, &values, &protocols)?;
            let out = open_output(cfg.output.as_deref(), dir, "sweep.csv")?;
            write_csv(out, results.iter().map(|r| &r.aggregate))?;
            Ok(report_violations(results.iter().map(|r| r.violations()).sum()))
        }
        Command::Verify(args) => {
            let scale = if args.quick { Scale::quick() } else { Scale::full() };
            let outcomes = run_all(&scale)?;
            for o in &outcomes {
                println!("{o}");
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} passed, {failed} failed", outcomes.len() - failed);
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Plot(args) => {
            let table = File::open(&args.input)
                .map_err(|e| SimError::Config(format!("cannot read {}: {e}", args.input.display())))?;
            let svg = render_plot(table, args.kind, PlotOptions { bound_overlay: args.bound })?;
            let name = match args.kind {
                PlotKind::DelayVsUsers => "delay_vs_users.svg",
                PlotKind::DelayVsLoad => "delay_vs_load.svg",
            };
            let mut out = open_output(args.output.as_deref(), dir, name)?;
            out.write_all(svg.as_bytes())?;
            out.flush()?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
