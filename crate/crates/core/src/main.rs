use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use serde::Serialize;
use sha2::{Digest, Sha256};

use fnls_core::ground_state::{ground_state_file_name, GroundStateCache, DEFAULT_MAX_ITER};
use fnls_core::scenarios::{
    presets, run_experiment, run_sweep, write_json, ExperimentResult, ExperimentSpec, RunContext, SweepSpec,
};
use fnls_core::spectral::Grid;
use fnls_core::Error;

#[derive(Parser, Debug)]
#[command(name = "fnls", version, about = "Focusing NLS with fractional dissipation: runs, sweeps, checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment or sweep JSON.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Output directory; every artifact and manifest.json go here.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Recorded in the manifest; runs are deterministic for a given seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the ground state Q and store it.
    Groundstate {
        #[arg(long)]
        dim: usize,
        /// Points per axis (default depends on the dimension).
        #[arg(long)]
        n: Option<usize>,
        /// Box half-period.
        #[arg(long = "box")]
        box_half: Option<f64>,
        #[arg(long, default_value_t = fnls_core::ground_state::DEFAULT_TOL)]
        tol: f64,
    },
    /// Run one experiment from --spec or a named preset.
    Simulate {
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run an (s, a, delta) sweep from --spec.
    Sweep,
    /// Run a built-in group of checks.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::Identities)]
        suite: Suite,
    },
    /// Turn a sweep CSV into long format (one metric per row).
    Report {
        /// Sweep CSV; defaults to --spec.
        input: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Suite {
    /// Mass, energy and momentum balance laws.
    Identities,
    /// Exact solutions with a = 0.
    Conservative,
    /// Global existence and small-mass runs.
    Regimes,
}

/// Failure classes mapped onto exit codes.
enum Fail {
    Usage(String),
    Checks,
    Run(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Run(e)
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Run(e.into())
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    seed: u64,
    files: Vec<ManifestEntry>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = cli.log_level.parse::<log::LevelFilter>();
    let Ok(filter) = filter else {
        eprintln!("error: unknown log level '{}'", cli.log_level);
        return ExitCode::from(2);
    };
    env_logger::Builder::new().filter_level(filter).format_timestamp(None).init();

    let name = match &cli.command {
        Command::Groundstate { .. } => "groundstate",
        Command::Simulate { .. } => "simulate",
        Command::Sweep => "sweep",
        Command::Verify { .. } => "verify",
        Command::Report { .. } => "report",
    };
    let mut result = dispatch(&cli).and_then(|ok| if ok { Ok(()) } else { Err(Fail::Checks) });
    // Artifacts of failed runs are listed too; usage errors wrote nothing.
    if !matches!(result, Err(Fail::Usage(_))) {
        if let Err(e) = write_manifest(&cli.out, name, cli.seed) {
            result = Err(e);
        }
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Checks) => {
            error!("one or more expectations failed");
            ExitCode::from(1)
        }
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Fail::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Returns whether every expectation held.
fn dispatch(cli: &Cli) -> Result<bool, Fail> {
    if cli.workers == 0 {
        return Err(Fail::Usage("--workers must be >= 1".into()));
    }
    fs::create_dir_all(&cli.out).map_err(|e| Fail::Usage(format!("cannot create {}: {e}", cli.out.display())))?;
    let cache = GroundStateCache::from_env();
    match &cli.command {
        Command::Groundstate { dim, n, box_half, tol } => {
            if !(1..=4).contains(dim) {
                return Err(Fail::Usage(format!("--dim must be 1..=4, got {dim}")));
            }
            let n = n.unwrap_or_else(|| fnls_core::scenarios::default_ground_state_n(*dim));
            let l = box_half.unwrap_or(if *dim == 1 { 16.0 } else { 12.0 });
            let grid = Grid::cubic(*dim, n, l).map_err(|e| Fail::Usage(e.to_string()))?;
            let (gs, hit) = cache.get_or_solve(&grid, *tol, DEFAULT_MAX_ITER)?;
            let path = gs.save(&cli.out.join(ground_state_file_name(&grid)))?;
            println!(
                "d={dim} n={n} L={l}: |Q|^2 = {:.12}, |grad Q|^2 = {:.12}, E(Q) = {:.3e}, residual {:.3e} after {} iterations{}",
                gs.mass_sq,
                gs.grad_norm_sq,
                gs.energy,
                gs.residual,
                gs.iterations,
                if hit { " (cached)" } else { "" }
            );
            info!("wrote {}", path.display());
            Ok(true)
        }
        Command::Simulate { preset } => {
            let spec = match (preset, &cli.spec) {
                (Some(name), None) => presets::by_name(name).ok_or_else(|| {
                    Fail::Usage(format!("unknown preset '{name}'; known: {}", presets::NAMES.join(", ")))
                })?,
                (None, Some(path)) => parse_spec(path, ExperimentSpec::from_json)?,
                _ => return Err(Fail::Usage("simulate needs exactly one of --spec, --preset".into())),
            };
            let ctx = RunContext { cache: &cache, out_dir: Some(cli.out.clone()) };
            let r = run_experiment(&spec, &ctx);
            print_result(&r);
            if let Some(e) = &r.error {
                return Err(Fail::Run(Error::Contract(format!("experiment {} failed: {e}", r.name))));
            }
            Ok(r.passed)
        }
        Command::Sweep => {
            let path = cli.spec.as_ref().ok_or_else(|| Fail::Usage("sweep needs --spec".into()))?;
            let spec = parse_spec(path, SweepSpec::from_json)?;
            let table = run_sweep(&spec, cli.workers, &cache, Some(cli.out.clone()))?;
            println!("{:>6} {:>6} {:>6}  {:<17} {:>10} {:>8} {:>10}", "s", "a", "delta", "outcome", "t_star", "alpha", "identity");
            let opt = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
            for r in &table.rows {
                println!(
                    "{:>6} {:>6} {:>6}  {:<17} {:>10} {:>8} {:>10}",
                    r.s,
                    r.a,
                    r.delta,
                    r.outcome,
                    opt(r.t_star, 5),
                    opt(r.alpha_fit, 3),
                    r.max_identity_residual.map(|x| format!("{x:.2e}")).unwrap_or_else(|| "-".into())
                );
            }
            Ok(table.rows.iter().all(|r| r.error.is_none()))
        }
        Command::Verify { suite } => {
            let specs: Vec<ExperimentSpec> = match suite {
                Suite::Identities => vec![presets::identities(presets::IDENTITY_DT0, presets::IDENTITY_CFL), presets::boosted_momentum()],
                Suite::Conservative => vec![presets::soliton_conservative(), presets::pseudo_conformal_rate()],
                Suite::Regimes => vec![
                    presets::global_regime(1.0, 0.1),
                    presets::global_regime(1.5, 0.05),
                    presets::small_mass(0.1),
                    presets::small_mass(0.2),
                    presets::small_mass(0.3),
                ],
            };
            let ctx = RunContext { cache: &cache, out_dir: Some(cli.out.clone()) };
            let results: Vec<ExperimentResult> = specs.iter().map(|s| run_experiment(s, &ctx)).collect();
            println!("{:<24} {:<15} {:>10} {:>10} {:>10}  status", "experiment", "outcome", "mass", "energy", "momentum");
            for r in &results {
                let cell = |f: fn(&fnls_core::scenarios::IdentityResiduals) -> f64| {
                    r.residuals.as_ref().map(|x| format!("{:.2e}", f(x))).unwrap_or_else(|| "-".into())
                };
                println!(
                    "{:<24} {:<15} {:>10} {:>10} {:>10}  {}",
                    r.name,
                    r.outcome.map(|o| o.tag()).unwrap_or("error"),
                    cell(|x| x.mass),
                    cell(|x| x.energy),
                    cell(|x| x.momentum),
                    if r.passed { "PASS" } else { "FAIL" }
                );
                if let Some(e) = &r.error {
                    println!("  error: {e}");
                }
            }
            write_json(&cli.out.join("verify.json"), &results)?;
            Ok(results.iter().all(|r| r.passed))
        }
        Command::Report { input } => {
            let path = input.as_ref().or(cli.spec.as_ref()).ok_or_else(|| Fail::Usage("report needs an input CSV".into()))?;
            let text = fs::read_to_string(path).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
            let out = cli.out.join(format!("{stem}_long.csv"));
            long_format(&text, &out).map_err(|e| match e {
                Error::Csv(_) | Error::Format(_) => Fail::Usage(format!("{}: {e}", path.display())),
                e => Fail::Run(e),
            })?;
            info!("wrote {}", out.display());
            Ok(true)
        }
    }
}

fn parse_spec<T>(path: &Path, parse: fn(&str) -> fnls_core::Result<T>) -> Result<T, Fail> {
    let text = fs::read_to_string(path).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))
}

fn print_result(r: &ExperimentResult) {
    println!(
        "{}: {} at t = {:.6} ({} steps)",
        r.name,
        r.outcome.map(|o| o.tag()).unwrap_or("error"),
        r.t_final,
        r.steps
    );
    if let Some(x) = &r.residuals {
        println!("  identity residuals: mass {:.3e}, energy {:.3e}, momentum {:.3e}", x.mass, x.energy, x.momentum);
    }
    if let Some(b) = &r.blowup {
        println!("  T* = {:.6}, alpha = {:.4}, verdict {:?}", b.t_star, b.alpha_fit, b.window_verdict);
    }
    for c in &r.checks {
        let value = c.value.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into());
        println!("  {:<5} {:<28} {:>12}  {}", if c.passed { "PASS" } else { "FAIL" }, c.check, value, c.limit);
    }
}

/// Sweep table to `s,a,delta,outcome,metric,value` rows.
fn long_format(text: &str, out: &Path) -> fnls_core::Result<()> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Format(format!("missing column '{name}'")))
    };
    let keys = [col("s")?, col("a")?, col("delta")?, col("outcome")?];
    let metrics: Vec<usize> = (0..headers.len()).filter(|i| !keys.contains(i)).collect();
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["s", "a", "delta", "outcome", "metric", "value"])?;
    for row in rd.records() {
        let row = row?;
        for &m in &metrics {
            let value = &row[m];
            if value.is_empty() {
                continue;
            }
            w.write_record([&row[keys[0]], &row[keys[1]], &row[keys[2]], &row[keys[3]], &headers[m], value])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Lists every file under `out` with its SHA-256, sorted by path.
fn write_manifest(out: &Path, subcommand: &str, seed: u64) -> Result<(), Fail> {
    let mut files = Vec::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path != out.join("manifest.json") {
                let bytes = fs::read(&path)?;
                let rel = path.strip_prefix(out).unwrap_or(&path);
                files.push(ManifestEntry {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                });
            }
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    write_json(&out.join("manifest.json"), &Manifest { subcommand, seed, files })?;
    Ok(())
}
