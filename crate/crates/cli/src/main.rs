//! `modsynth` command line.
//!
//! Results go to stdout (or `-o FILE`) as JSON, URDF for `export-urdf`;
//! logs go to stderr. Exit status: 0 success, 2 no solution or no path,
//! 1 any other error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;
use modsynth::io::{
    export_urdf, load_bundle, load_scenario, parse_dh_document, plan_between, run_pipeline, PipelineOptions, UrdfOptions,
};
use modsynth::modlib::{combo_label, compose, count_combinations, enumerate_variant_combos, Composition, TwistResidual};
use modsynth::synthesis::SearchMode;
use modsynth::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "modsynth", version, about = "Minimal-DoF manipulator synthesis and modular composition")]
struct Cli {
    /// RNG seed for the solver and planner; overrides the file's seeds.
    #[arg(long, global = true, env = "MODSYNTH_SEED")]
    seed: Option<u64>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize, compose and bundle a scenario.
    Synth {
        scenario: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Multi-start count for every inner solve.
        #[arg(long)]
        restarts: Option<usize>,
        /// Sweep DoF upward instead of binary search.
        #[arg(long)]
        exhaustive_dof: bool,
        /// Also plan between consecutive task locations.
        #[arg(long)]
        plan: bool,
    },
    /// Map a DH table onto modular units.
    Compose {
        dh: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Payload at the end frame (kg); overrides the file.
        #[arg(long)]
        payload: Option<f64>,
    },
    /// List heavy/light combinations for an n-joint chain.
    Enumerate {
        n: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Plan a joint path between two task locations of a bundle (1-based).
    Plan {
        bundle: PathBuf,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the URDF of a bundle's composition.
    ExportUrdf {
        bundle: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn emit(text: &str, output: Option<&PathBuf>) -> anyhow::Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{}", text.trim_end()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.context("writing to stdout"),
            }
        }
    }
}

#[derive(Serialize)]
struct ComposeReport {
    label: String,
    composition: Composition,
    twist_residual: TwistResidual,
}

#[derive(Serialize)]
struct EnumerateReport {
    n: usize,
    count: usize,
    combos: Vec<String>,
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

/// Runs the command; `Ok(false)` means the search or planner came up empty.
fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Synth { scenario, output, restarts, exhaustive_dof, plan } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = cli.seed {
                s.seeds.solver = seed;
                s.seeds.planner = seed;
            }
            if let Some(r) = restarts {
                s.solver.restarts = r;
            }
            if exhaustive_dof {
                s.search = SearchMode::Exhaustive;
            }
            s.validate()?;
            let bundle = run_pipeline(&s, PipelineOptions { plan })?;
            match bundle.synthesis.n_star {
                Some(n) => info!("n_star = {n}"),
                None => info!("no DoF met the threshold"),
            }
            emit(&bundle.to_json(), output.as_ref())?;
            Ok(bundle.solved())
        }
        Command::Compose { dh, output, payload } => {
            let text = std::fs::read_to_string(&dh).with_context(|| format!("reading {}", dh.display()))?;
            let mut doc = parse_dh_document(&text, &dh.display().to_string())?;
            if let Some(p) = payload {
                doc.compose.payload = p;
            }
            let (composition, residual) = compose(&doc.table()?, &doc.compose)?;
            let out = ComposeReport { label: composition.label(), composition, twist_residual: residual };
            emit(&to_json(&out), output.as_ref())?;
            Ok(true)
        }
        Command::Enumerate { n, output } => {
            let combos: Vec<String> = enumerate_variant_combos(n)?.iter().map(|c| combo_label(c)).collect();
            let out = EnumerateReport { n, count: count_combinations(n)?, combos };
            emit(&to_json(&out), output.as_ref())?;
            Ok(true)
        }
        Command::Plan { bundle, from, to, output } => {
            let b = load_bundle(&bundle)?;
            let path = plan_between(&b, from, to, cli.seed)?;
            info!("{} waypoints, joint-space length {:.3} rad", path.waypoints.len(), path.length());
            emit(&to_json(&path), output.as_ref())?;
            Ok(true)
        }
        Command::ExportUrdf { bundle, output } => {
            let b = load_bundle(&bundle)?;
            let table = b.require_table()?;
            let composition = b.composition.as_ref().ok_or(Error::NoSolution)?;
            let opts = UrdfOptions {
                link_width: b.scenario.link_width,
                heavy: b.scenario.compose.heavy.clone(),
                light: b.scenario.compose.light.clone(),
                torque: b.scenario.compose.torque,
                limits: Some(b.scenario.joint_limits(table.dof())?),
                ..Default::default()
            };
            emit(&export_urdf(table, composition, &opts)?, output.as_ref())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_env("RUST_LOG").init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::NoSolution | Error::NoPath(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
