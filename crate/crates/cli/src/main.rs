mod config;
mod score;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{builder::PossibleValuesParser, Args, Parser, Subcommand};

use resel_core::simulator::{run_sweep, write_summary_csv, write_trials_csv, DisturbanceMode};
use resel_core::verify::{run_suites, Suite};
use resel_core::SelectionParams;

use crate::config::{parse_beam, parse_pairs, RunConfig};
use crate::score::{read_xyz, score_cloud, write_csv, ScoreOptions};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "resel", version, about = "Residual selection for LiDAR pose estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run numerical property checks.
    Verify {
        #[arg(long, default_value = "all", value_parser = PossibleValuesParser::new(["all", "so3", "registration", "jacobians", "uncertainty"]))]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Two-frame registration sweep, selection against random subsets.
    Simulate(SimulateArgs),
    /// Score every point of a cloud against a map.
    Score(ScoreArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: u64,
    /// Output directory for trials.csv and summary.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Flat key = value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    da: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    rn: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_parser = PossibleValuesParser::new(["measurements", "models"]))]
    mode: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    /// Trials allowed to fail (degenerate solves) before exiting with status 1.
    #[arg(long)]
    failure_budget: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    map: PathBuf,
    /// Beam profile overrides, e.g. `delta_z=0.03,delta_alpha_deg=0.01`.
    #[arg(long, default_value = "")]
    beam: String,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    max_neighbor_dist: f64,
    /// Accepted for uniformity; scoring draws no random numbers.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SelectionParams::default().max_per_dim)]
    max_per_dim: usize,
    #[arg(long, default_value_t = SelectionParams::default().score_ratio_stop)]
    score_ratio_stop: f64,
    #[arg(long, default_value_t = SelectionParams::default().prefilter_ratio)]
    prefilter_ratio: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify { suite, seed } => verify(&suite, seed),
        Command::Simulate(args) => simulate(args),
        Command::Score(args) => score(args),
    }
}

fn verify(suite: &str, seed: u64) -> ExitCode {
    let suites = match Suite::parse_selection(suite) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let results = run_suites(&suites, seed);
    let failed = results.iter().filter(|r| !r.passed).count();
    for r in &results {
        println!("{r}");
    }
    println!("{} checks, {} failed", results.len(), failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn build_run_config(args: &SimulateArgs) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let pairs = parse_pairs(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.apply(&pairs).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let s = &mut cfg.sweep;
    s.scene.seed = args.seed;
    if let Some(da) = &args.da {
        s.da_grid = da.clone();
    }
    if let Some(rn) = &args.rn {
        s.rn_grid = rn.clone();
    }
    if let Some(reps) = args.reps {
        s.reps = reps;
    }
    if let Some(mode) = &args.mode {
        s.trial.mode = mode.parse::<DisturbanceMode>().map_err(|e| e.to_string())?;
    }
    if args.threads.is_some() {
        s.threads = args.threads;
    }
    if let Some(b) = args.failure_budget {
        cfg.failure_budget = b;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()
}

fn simulate(args: SimulateArgs) -> ExitCode {
    let cfg = match build_run_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match run_sweep(&cfg.sweep) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let written = fs::create_dir_all(&args.out)
        .and_then(|_| write_file(&args.out.join("trials.csv"), |w| write_trials_csv(&result, w)))
        .and_then(|_| write_file(&args.out.join("summary.csv"), |w| write_summary_csv(&result, w)));
    if let Err(e) = written {
        eprintln!("error: writing to {}: {e}", args.out.display());
        return ExitCode::from(EXIT_FAILURE);
    }
    for f in &result.failures {
        eprintln!("trial failed: da={} rn={} trial={}: {}", f.da, f.rn, f.trial, f.error);
    }
    eprintln!("{} trial rows, {} failed trials", result.rows.len(), result.failures.len());
    if result.failures.len() > cfg.failure_budget {
        eprintln!("error: {} failed trials exceed the budget of {}", result.failures.len(), cfg.failure_budget);
        return ExitCode::from(EXIT_FAILURE);
    }
    ExitCode::SUCCESS
}

fn read_cloud(path: &Path) -> Result<Vec<resel_core::Vec3>, String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_xyz(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))
}

fn score(args: ScoreArgs) -> ExitCode {
    let setup = || -> Result<(ScoreOptions, resel_core::BeamModel), String> {
        let beam = parse_beam(&args.beam).map_err(|e| e.to_string())?;
        let selection = SelectionParams::new(args.max_per_dim, args.score_ratio_stop, args.prefilter_ratio)
            .map_err(|e| e.to_string())?;
        if args.k < 3 {
            return Err("k must be at least 3".into());
        }
        if !args.max_neighbor_dist.is_finite() || args.max_neighbor_dist <= 0.0 {
            return Err("max-neighbor-dist must be positive".into());
        }
        Ok((ScoreOptions { k: args.k, max_neighbor_dist: args.max_neighbor_dist, selection }, beam))
    };
    let (opts, beam) = match setup() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let (cloud, map) = match read_cloud(&args.cloud).and_then(|c| Ok((c, read_cloud(&args.map)?))) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let rows = score_cloud(&cloud, &map, &beam, &opts);
    let written = match &args.out {
        Some(path) => write_file(path, |w| write_csv(&rows, w)),
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_csv(&rows, &mut w).and_then(|_| w.flush())
        }
    };
    if let Err(e) = written {
        eprintln!("error: writing output: {e}");
        return ExitCode::from(EXIT_FAILURE);
    }
    ExitCode::SUCCESS
}
