//! `wgmlb`: build lower-bound graph constructions, compute their counts and
//! error floors, verify the concentration facts they rest on, and run seeded Monte
//! Carlo experiments.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid parameters,
//! 3 verification failure.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use wgm_lb::concentration::{chi_square_tail_check, min_pairwise_distance, scalar_inequality_scan};
use wgm_lb::construction::{
    build_lb_graph, enumerate_construction_supports, ensemble_count_bound, suggest_params,
    validate_requirements, ConstructionSpec, RequirementsReport,
};
use wgm_lb::ensemble::{
    build_noiseless_ensemble, build_noisy_ensemble, Mode, RestrictedEnsemble,
};
use wgm_lb::info::{
    block_count, block_rate, mi_upper_bound, required_samples, theorem_rate, tree_count_bound,
    MI_CEILING_NOISELESS, MI_CEILING_NOISY,
};
use wgm_lb::sim::{run_experiment, run_experiment_with_ensemble, DecoderKind, Link};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "wgmlb",
    version,
    about = "Lower-bound constructions, information-theoretic error floors, and Monte Carlo verification for graph-structured sparse recovery"
)]
struct Cli {
    /// Worker threads for Monte Carlo trials (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the grouped circular graph and validate its requirements.
    Construct(ConstructArgs),
    /// Closed-form counts, rates, floors, and sample thresholds.
    Bounds(BoundsArgs),
    /// Run the concentration and inequality checks; exits 3 if any fails.
    Verify(VerifyArgs),
    /// Monte Carlo experiment with CSV/JSON output.
    Simulate(SimulateArgs),
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn parse_link(s: &str) -> Result<Link, String> {
    s.parse()
}

fn parse_decoder(s: &str) -> Result<DecoderKind, String> {
    s.parse()
}

#[derive(Args)]
struct ConstructArgs {
    /// Print the smallest rho and d for the given s, g, B instead of building.
    #[arg(long)]
    suggest: bool,
    #[arg(long, required_unless_present = "suggest")]
    d: Option<usize>,
    #[arg(long)]
    s: usize,
    #[arg(long)]
    g: usize,
    #[arg(long = "B")]
    budget: u64,
    #[arg(long, required_unless_present = "suggest")]
    rho: Option<usize>,
    /// Graph output path (stdout if omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the canonical restricted ensemble to this path.
    #[arg(long)]
    ensemble_out: Option<PathBuf>,
    /// Ensemble mode when --ensemble-out is given: noisy | noiseless.
    #[arg(long, default_value = "noisy", value_parser = parse_mode)]
    mode: Mode,
    #[arg(long = "C0", default_value_t = 1.0)]
    c0: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.95)]
    epsilon: f64,
}

#[derive(Args)]
struct BoundsArgs {
    /// Block-sparsity counts for a J x N matrix with K active columns.
    #[arg(long, conflicts_with = "tree")]
    block: bool,
    /// Tree-sparsity log-count for sparsity s.
    #[arg(long)]
    tree: bool,
    #[arg(long, default_value_t = 15)]
    d: usize,
    #[arg(long, default_value_t = 10)]
    s: usize,
    #[arg(long, default_value_t = 5)]
    g: usize,
    #[arg(long = "B", default_value_t = 5)]
    budget: u64,
    #[arg(long, default_value_t = 2)]
    rho: usize,
    #[arg(long = "J")]
    j: Option<usize>,
    #[arg(long = "N")]
    n_cols: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 15)]
    d: usize,
    #[arg(long, default_value_t = 10)]
    s: usize,
    #[arg(long, default_value_t = 5)]
    g: usize,
    #[arg(long = "B", default_value_t = 5)]
    budget: u64,
    #[arg(long, default_value_t = 2)]
    rho: usize,
    #[arg(long = "C0", default_value_t = 1.0)]
    c0: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.95)]
    epsilon: f64,
    /// Monte Carlo trials per tail-bound cell.
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 20250810)]
    seed: u64,
    /// Check a serialized ensemble instead of building the canonical one.
    #[arg(long)]
    ensemble: Option<PathBuf>,
}

#[derive(Args)]
#[command(after_help = "\
CONFIG FILE (flat `key = value`, `#` comments; flags override):
  d=15  s=10  g=5  B=5  rho=2  mode=noisy  link=identity
  C0=1  sigma=1  epsilon=0.95  C=1
  n_grid=1,2,3  trials=2000  master_seed=20250810  decoder=marginal_ml
Unset decoder defaults to marginal_ml (identity link) or known_design (sign link).")]
struct SimulateArgs {
    /// Flat key=value config file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run over a serialized ensemble (spec and scale are read from it).
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    g: Option<usize>,
    #[arg(long = "B")]
    budget: Option<u64>,
    #[arg(long)]
    rho: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, value_parser = parse_link)]
    link: Option<Link>,
    #[arg(long = "C0")]
    c0: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "C")]
    c: Option<f64>,
    /// Comma-separated sample counts, e.g. 1,2,3.
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_decoder)]
    decoder: Option<DecoderKind>,
    /// CSV output path (stdout if omitted).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary output path.
    #[arg(long)]
    json: Option<PathBuf>,
}

enum CliError {
    Io { path: String, message: String },
    Invalid(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Invalid(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io { path, message } => write!(f, "{path}: {message}"),
            CliError::Invalid(message) => write!(f, "{message}"),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .is_err()
        {
            eprintln!("error: could not configure {workers} workers");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Construct(args) => cmd_construct(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn print_report(report: &RequirementsReport) {
    println!("requirement checks:");
    print!("{report}");
}

fn cmd_construct(args: ConstructArgs) -> Result<ExitCode, CliError> {
    if args.suggest {
        let (rho_min, d_min) = suggest_params(args.s, args.g, args.budget)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        println!("rho_min = {rho_min}");
        println!("d_min = {d_min}");
        return Ok(ExitCode::SUCCESS);
    }
    let (d, rho) = (args.d.unwrap(), args.rho.unwrap());
    let report = validate_requirements(d, args.s, args.g, args.budget, rho);
    print_report(&report);
    if !report.all_pass() {
        eprintln!("construction parameters rejected");
        return Ok(ExitCode::from(2));
    }
    let spec = ConstructionSpec::new(d, args.s, args.g, args.budget, rho)
        .expect("report verified all requirements");
    let graph = build_lb_graph(&spec);
    match &args.output {
        Some(path) => {
            write_file(path, &graph.to_text())?;
            println!(
                "graph: {} nodes, {} edges -> {}",
                graph.node_count(),
                graph.edge_count(),
                path.display()
            );
        }
        None => print!("{}", graph.to_text()),
    }
    if let Some(path) = &args.ensemble_out {
        let supports = enumerate_construction_supports(&graph, &spec)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        let ensemble = match args.mode {
            Mode::Noisy => {
                build_noisy_ensemble(&supports, args.c0, args.sigma, args.epsilon, spec.d())
            }
            Mode::Noiseless => build_noiseless_ensemble(&supports, spec.d()),
        }
        .map_err(|e| CliError::Invalid(e.to_string()))?;
        write_file(path, &ensemble.to_text(&spec))?;
        println!(
            "ensemble: {} members over {} supports -> {}",
            ensemble.len(),
            supports.len(),
            path.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SpecBounds {
    version: &'static str,
    d: usize,
    s: usize,
    g: usize,
    #[serde(rename = "B")]
    budget: u64,
    rho: usize,
    exact_log: f64,
    relaxed_log: f64,
    exact_count: Option<u64>,
    theorem_rate: f64,
    rate_minus_relaxed: f64,
    mi_ceiling_noisy: f64,
    mi_ceiling_noiseless: f64,
    n_star_noisy: usize,
    n_star_noiseless: usize,
}

#[derive(Serialize)]
struct BlockBounds {
    version: &'static str,
    #[serde(rename = "J")]
    j: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    exact_log: f64,
    bound_log: f64,
    exact_count: Option<u64>,
    rate: f64,
}

#[derive(Serialize)]
struct TreeBounds {
    version: &'static str,
    s: usize,
    log_count: f64,
    n_star: usize,
}

fn count_from_log(log: f64) -> Option<u64> {
    (log < 62.0 * std::f64::consts::LN_2).then(|| log.exp().round() as u64)
}

fn emit_json<T: Serialize>(value: &T) -> Result<ExitCode, CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Invalid(format!("JSON encoding failed: {e}")))?;
    println!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_bounds(args: BoundsArgs) -> Result<ExitCode, CliError> {
    let invalid = |e: wgm_lb::info::InfoError| CliError::Invalid(e.to_string());
    if args.block {
        let (j, n, k) = match (args.j, args.n_cols, args.k) {
            (Some(j), Some(n), Some(k)) => (j, n, k),
            _ => return Err(CliError::Invalid("--block needs --J, --N and --K".into())),
        };
        let counts = block_count(j, n, k).map_err(invalid)?;
        return emit_json(&BlockBounds {
            version: VERSION,
            j,
            n,
            k,
            exact_log: counts.exact_log,
            bound_log: counts.bound_log,
            exact_count: count_from_log(counts.exact_log),
            rate: block_rate(j, n, k).map_err(invalid)?,
        });
    }
    if args.tree {
        let log_count = tree_count_bound(args.s).map_err(invalid)?;
        return emit_json(&TreeBounds {
            version: VERSION,
            s: args.s,
            log_count,
            n_star: required_samples(log_count, MI_CEILING_NOISY).map_err(invalid)?,
        });
    }
    let spec = ConstructionSpec::new(args.d, args.s, args.g, args.budget, args.rho)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let counts = ensemble_count_bound(&spec);
    let rate = theorem_rate(&spec);
    emit_json(&SpecBounds {
        version: VERSION,
        d: spec.d(),
        s: spec.s(),
        g: spec.g(),
        budget: spec.budget(),
        rho: spec.rho(),
        exact_log: counts.exact_log,
        relaxed_log: counts.relaxed_log,
        exact_count: count_from_log(counts.exact_log),
        theorem_rate: rate.rate,
        rate_minus_relaxed: rate.rate_minus_relaxed,
        mi_ceiling_noisy: MI_CEILING_NOISY,
        mi_ceiling_noiseless: MI_CEILING_NOISELESS,
        n_star_noisy: required_samples(counts.exact_log, MI_CEILING_NOISY).map_err(invalid)?,
        n_star_noiseless: required_samples(counts.exact_log, MI_CEILING_NOISELESS)
            .map_err(invalid)?,
    })
}

struct CheckLog {
    failures: usize,
}

impl CheckLog {
    fn new() -> Self {
        Self { failures: 0 }
    }

    fn record(&mut self, name: &str, pass: bool, detail: &str) {
        if !pass {
            self.failures += 1;
        }
        println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, CliError> {
    let mut log = CheckLog::new();

    let scan = scalar_inequality_scan(args.seed);
    log.record(
        "scalar eps/(1-eps)+log(1-eps) >= eps^2/2",
        scan.epsilon_tail.pass(),
        &format!(
            "{} points, worst margin {:.3e} at {:.6}",
            scan.epsilon_tail.points, scan.epsilon_tail.worst_margin, scan.epsilon_tail.worst_point
        ),
    );
    log.record(
        "scalar 1 - 1/x <= log x",
        scan.log_lower.pass(),
        &format!(
            "{} points, worst margin {:.3e} at {:.6}",
            scan.log_lower.points, scan.log_lower.worst_margin, scan.log_lower.worst_point
        ),
    );
    for check in &scan.mgf {
        log.record(
            &format!("mgf identity n={} lambda={}", check.n, check.lambda),
            check.pass,
            &format!(
                "estimate {:.6} vs exact {:.6} (se {:.2e})",
                check.estimate, check.exact, check.std_error
            ),
        );
    }

    for &n in &[1usize, 5, 20, 100] {
        for &eps in &[0.3f64, 0.5, 0.9448] {
            let r = chi_square_tail_check(n, eps, args.sigma, args.trials, args.seed)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            log.record(
                &format!("chi-square tail n={n} eps={eps}"),
                r.holds,
                &format!(
                    "empirical {:.5} >= bound {:.5} - margin {:.5}",
                    r.empirical_prob, r.bound, r.margin
                ),
            );
        }
    }

    // Ensemble-level checks: either a serialized ensemble or the canonical
    // construction at the given parameters.
    let loaded: Option<(RestrictedEnsemble, ConstructionSpec)> = match &args.ensemble {
        Some(path) => {
            let text = read_file(path)?;
            let parsed = RestrictedEnsemble::from_text(&text).map_err(|e| CliError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            Some(parsed)
        }
        None => None,
    };

    let (noisy, noiseless) = match loaded {
        Some((ens, _)) => match ens.mode() {
            Mode::Noisy => (Some(ens), None),
            Mode::Noiseless => (None, Some(ens)),
        },
        None => {
            let spec = ConstructionSpec::new(args.d, args.s, args.g, args.budget, args.rho)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            let graph = build_lb_graph(&spec);
            let supports = enumerate_construction_supports(&graph, &spec)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            let noisy =
                build_noisy_ensemble(&supports, args.c0, args.sigma, args.epsilon, spec.d())
                    .map_err(|e| CliError::Invalid(e.to_string()))?;
            let noiseless = build_noiseless_ensemble(&supports, spec.d())
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            (Some(noisy), Some(noiseless))
        }
    };

    if let Some(ens) = &noisy {
        let mi = mi_upper_bound(ens).map_err(|e| CliError::Invalid(e.to_string()))?;
        log.record(
            "KL ceiling (noisy)",
            mi.max_pairwise_kl <= MI_CEILING_NOISY,
            &format!("max pairwise KL {:.6} <= 5", mi.max_pairwise_kl),
        );
        let dist = min_pairwise_distance(ens).map_err(|e| CliError::Invalid(e.to_string()))?;
        log.record(
            "minimum pairwise distance",
            dist.holds,
            &format!(
                "min {:.9} vs radius {:.9}{}",
                dist.min_dist,
                dist.radius,
                if dist.exhaustive { " (exhaustive scan)" } else { "" }
            ),
        );
    }
    if let Some(ens) = &noiseless {
        let mi = mi_upper_bound(ens).map_err(|e| CliError::Invalid(e.to_string()))?;
        log.record(
            "KL ceiling (noiseless)",
            mi.max_pairwise_kl <= MI_CEILING_NOISELESS + 1e-12,
            &format!("max pairwise KL {:.6} <= 1", mi.max_pairwise_kl),
        );
    }

    if log.failures > 0 {
        eprintln!("{} check(s) failed", log.failures);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SimulateJson<'a> {
    version: &'static str,
    summary: &'a wgm_lb::sim::ExperimentSummary,
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, CliError> {
    let mut run = RunConfig::default();
    if let Some(path) = &args.config {
        let text = read_file(path)?;
        run.apply_file(&text).map_err(CliError::Invalid)?;
    }
    if let Some(v) = args.d {
        run.d = v;
    }
    if let Some(v) = args.s {
        run.s = v;
    }
    if let Some(v) = args.g {
        run.g = v;
    }
    if let Some(v) = args.budget {
        run.budget = v;
    }
    if let Some(v) = args.rho {
        run.rho = v;
    }
    if let Some(v) = args.mode {
        run.mode = v;
    }
    if let Some(v) = args.link {
        run.link = v;
    }
    if let Some(v) = args.c0 {
        run.c0 = v;
    }
    if let Some(v) = args.sigma {
        run.sigma = v;
    }
    if let Some(v) = args.epsilon {
        run.epsilon = v;
    }
    if let Some(v) = args.c {
        run.c = v;
    }
    if let Some(grid) = &args.n_grid {
        run.n_grid = grid
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| CliError::Invalid(format!("--n-grid: bad entry {t:?}")))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = args.trials {
        run.trials = v;
    }
    if let Some(v) = args.seed {
        run.master_seed = v;
    }
    if let Some(v) = args.decoder {
        run.decoder = Some(v);
    }

    let summary = match &args.ensemble {
        Some(path) => {
            let text = read_file(path)?;
            let (ensemble, spec) =
                RestrictedEnsemble::from_text(&text).map_err(|e| CliError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            // The file dictates the spec, mode and value scale.
            run.d = spec.d();
            run.s = spec.s();
            run.g = spec.g();
            run.budget = spec.budget();
            run.rho = spec.rho();
            run.mode = ensemble.mode();
            if let wgm_lb::ensemble::EnsembleMeta::Noisy { c0, sigma, epsilon } = ensemble.meta() {
                run.c0 = c0;
                run.sigma = sigma;
                run.epsilon = epsilon;
            }
            let exp = run.to_experiment_config().map_err(CliError::Invalid)?;
            for warning in exp.warnings() {
                eprintln!("warning: {warning}");
            }
            run_experiment_with_ensemble(&exp, &ensemble)
                .map_err(|e| CliError::Invalid(e.to_string()))?
        }
        None => {
            let exp = run.to_experiment_config().map_err(CliError::Invalid)?;
            for warning in exp.warnings() {
                eprintln!("warning: {warning}");
            }
            run_experiment(&exp).map_err(|e| CliError::Invalid(e.to_string()))?
        }
    };

    let csv = summary.to_csv();
    match &args.csv {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.json {
        let payload = SimulateJson {
            version: VERSION,
            summary: &summary,
        };
        let text = serde_json::to_string_pretty(&payload)
            .map_err(|e| CliError::Invalid(format!("JSON encoding failed: {e}")))?;
        write_file(path, &text)?;
    }
    let mut note = String::new();
    let _ = write!(
        note,
        "{} members, seed {}",
        summary.member_count, summary.config.master_seed
    );
    eprintln!("simulate done: {note}");
    Ok(ExitCode::SUCCESS)
}
