//! `gme`: search for, certify and construct states that are genuinely
//! multiparticle entangled while every two-body marginal is separable.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gme_core::certification::{certify, noise_robustness, CertifyOptions};
use gme_core::configurations::{canonical_id, enumerate_trees, MarginalConfiguration};
use gme_core::construction::{glue_states, parse_grid, verify_construction, Block, GlueAssignment};
use gme_core::state_io::{fixtures_dir, load_state, StateFile, TreeLabels};
use gme_core::tensor::{PartyLayout, QuantumState};
use gme_core::witness_search::{see_saw, SearchChecks, SearchStatus, SeeSawOptions, WitnessFile};
use gme_core::CoreError;
use gme_sdp::SolverOptions;
use rayon::prelude::*;
use serde::Serialize;

use manifest::RunManifest;

const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "gme", version, about = "Marginal-based entanglement witnesses and constructions")]
struct Cli {
    #[command(flatten)]
    solver: SolverArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SolverArgs {
    /// Default solver options as `key=value` pairs: gap_tol, feas_tol,
    /// max_iters, step_fraction.
    #[arg(long, global = true, env = "GME_SOLVER_OPTIONS", value_name = "LIST")]
    solver_options: Option<String>,
    /// Relative duality-gap tolerance of each SDP solve.
    #[arg(long, global = true, env = "GME_GAP_TOL")]
    gap_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-seed see-saw search on one marginal configuration.
    Search {
        #[arg(long)]
        n: usize,
        /// Edge list `0-1,1-2`, a label from the tree mapping file or a
        /// configuration file.
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Outer see-saw iterations.
        #[arg(long, default_value_t = 20)]
        max_iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify a state file or shipped fixture against a configuration.
    Verify {
        input: String,
        #[arg(long)]
        config: String,
        /// Also bisect the white-noise robustness.
        #[arg(long)]
        robustness: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// White-noise robustness of detection.
    Robustness {
        input: String,
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Canonical trees on n vertices.
    Trees {
        #[arg(long)]
        n: usize,
    },
    /// Distribute copies of a block fixture over a target graph.
    Construct {
        /// Graph file with `n_parties` and `edges`.
        graph: Option<PathBuf>,
        /// Grid shorthand such as `4x4`.
        #[arg(long, conflicts_with = "graph")]
        grid: Option<String>,
        /// Block fixture label from the tree mapping file.
        #[arg(long)]
        block: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Solver(String),
    Verify(String),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Solver(_) => Failure::Solver(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn solver_options(args: &SolverArgs) -> Result<SolverOptions, Failure> {
    let mut o = SolverOptions::default();
    if let Some(list) = &args.solver_options {
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let Some((k, v)) = item.split_once('=') else {
                return Err(Failure::Usage(format!("solver option `{item}` is not key=value")));
            };
            let bad = || Failure::Usage(format!("solver option `{item}` has an invalid value"));
            match k.trim() {
                "gap_tol" => o.gap_tol = v.trim().parse().map_err(|_| bad())?,
                "feas_tol" => o.feas_tol = v.trim().parse().map_err(|_| bad())?,
                "max_iters" => o.max_iters = v.trim().parse().map_err(|_| bad())?,
                "step_fraction" => o.step_fraction = v.trim().parse().map_err(|_| bad())?,
                other => return Err(Failure::Usage(format!("unknown solver option `{other}`"))),
            }
        }
    }
    if let Some(g) = args.gap_tol {
        o.gap_tol = g;
    }
    if !(o.gap_tol > 0.0 && o.feas_tol > 0.0 && o.step_fraction > 0.0 && o.step_fraction < 1.0 && o.max_iters > 0) {
        return Err(Failure::Usage("solver options out of range".into()));
    }
    Ok(o)
}

fn labels_path() -> PathBuf {
    fixtures_dir().join("tree_labels.json")
}

/// Edge list, mapping-file label or configuration file.
fn resolve_config(text: &str, n: Option<usize>, manifest: &mut RunManifest) -> Result<MarginalConfiguration, Failure> {
    let path = Path::new(text);
    let config = if path.is_file() {
        manifest.hash_file(path)?;
        let body = std::fs::read_to_string(path)?;
        let c: MarginalConfiguration = serde_json::from_str(&body).map_err(|e| {
            Failure::Usage(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
        })?;
        MarginalConfiguration::new(c.n_parties, &c.edges)?
    } else if text.contains('-') {
        MarginalConfiguration::parse(text, n)?
    } else {
        manifest.hash_file(&labels_path())?;
        TreeLabels::shipped()?.config(text)?
    };
    if let Some(n) = n {
        if config.n_parties != n {
            return Err(Failure::Usage(format!("--config has {} parties, --n is {n}", config.n_parties)));
        }
    }
    let v = config.is_valid();
    if !v.valid {
        return Err(Failure::Usage(format!(
            "configuration {} is not valid: {}",
            config.to_edge_string(),
            v.reason.unwrap_or_default()
        )));
    }
    Ok(config)
}

/// State file path or shipped fixture label.
fn resolve_state(input: &str, manifest: &mut RunManifest) -> Result<QuantumState, Failure> {
    let path = Path::new(input);
    if path.is_file() {
        manifest.hash_file(path)?;
        return Ok(load_state(path)?);
    }
    let labels = TreeLabels::shipped()?;
    let fixture = labels.fixture_path(input)?;
    manifest.hash_file(&labels_path())?;
    manifest.hash_file(&fixture)?;
    Ok(labels.fixture_state(input)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct SeedResult {
    manifest: RunManifest,
    seed: u64,
    value: f64,
    initial_value: f64,
    iterations: usize,
    status: SearchStatus,
    checks: SearchChecks,
    rejected_starts: usize,
    objective_trace: Vec<f64>,
    witness: WitnessFile,
    state: StateFile,
}

#[derive(Serialize)]
struct SummaryRow {
    seed: u64,
    value: f64,
    iterations: usize,
    status: SearchStatus,
    checks_pass: bool,
}

#[derive(Serialize)]
struct SearchSummary {
    manifest: RunManifest,
    config: String,
    rows: Vec<SummaryRow>,
    best_seed: u64,
    best_value: f64,
    negative_value_found: bool,
}

#[allow(clippy::too_many_arguments)]
fn cmd_search(
    solver: &SolverOptions,
    n: usize,
    config: &str,
    seeds: u64,
    first_seed: u64,
    jobs: usize,
    max_iters: usize,
    out: Option<&Path>,
) -> CmdResult {
    let start = Instant::now();
    if seeds == 0 || jobs == 0 || max_iters == 0 {
        return Err(Failure::Usage("--seeds, --jobs and --max-iters must be positive".into()));
    }
    let mut manifest = RunManifest::new("search", solver);
    let config = resolve_config(config, Some(n), &mut manifest)?;
    let layout = PartyLayout::qubits(n)?;
    manifest.param("n", n);
    manifest.param("config", config.to_edge_string());
    manifest.param("max_iters", max_iters);
    manifest.seeds = (first_seed..first_seed + seeds).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let runs: Vec<_> = pool.install(|| {
        manifest
            .seeds
            .par_iter()
            .map(|&seed| {
                let opts = SeeSawOptions {
                    seed,
                    max_iters,
                    ..Default::default()
                };
                (seed, see_saw(&layout, &config, &opts, solver))
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut best: Option<(u64, f64)> = None;
    println!("{:>6} {:>14} {:>6} {:>15} checks", "seed", "value", "iters", "status");
    for (seed, run) in runs {
        let r = run?;
        let check = r.certificate.verify(&r.witness)?;
        println!(
            "{seed:>6} {:>14.6e} {:>6} {:>15} {}",
            r.value,
            r.iterations,
            format!("{:?}", r.status),
            if r.checks.all_pass() { "pass" } else { "fail" }
        );
        if best.is_none_or(|(_, v)| r.value < v) {
            best = Some((seed, r.value));
        }
        rows.push(SummaryRow {
            seed,
            value: r.value,
            iterations: r.iterations,
            status: r.status,
            checks_pass: r.checks.all_pass(),
        });
        if let Some(dir) = out {
            let file = SeedResult {
                manifest: manifest.clone(),
                seed,
                value: r.value,
                initial_value: r.initial_value,
                iterations: r.iterations,
                status: r.status,
                checks: r.checks.clone(),
                rejected_starts: r.rejected_starts,
                objective_trace: r.objective_trace.clone(),
                witness: WitnessFile::new(&r.witness, Some(r.value), Some(&check)),
                state: StateFile::from_state(&r.state),
            };
            write_json(&dir.join(format!("seed-{seed}.json")), &file)?;
        }
    }
    let (best_seed, best_value) = best.expect("at least one seed");
    let negative = best_value < 0.0 && rows.iter().any(|r| r.checks_pass);
    println!("best value {best_value:.6e} (seed {best_seed})");
    if !negative {
        println!("no negative witness value found: the marginals do not certify entanglement");
    }
    if let Some(dir) = out {
        manifest.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
        let summary = SearchSummary {
            manifest,
            config: config.to_edge_string(),
            rows,
            best_seed,
            best_value,
            negative_value_found: negative,
        };
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    manifest: RunManifest,
    report: T,
}

fn cmd_verify(solver: &SolverOptions, input: &str, config: &str, robustness: bool, out: Option<&Path>) -> CmdResult {
    let start = Instant::now();
    let mut manifest = RunManifest::new("verify", solver);
    let state = resolve_state(input, &mut manifest)?;
    let config = resolve_config(config, Some(state.layout().n_parties()), &mut manifest)?;
    manifest.param("input", input);
    manifest.param("config", config.to_edge_string());
    manifest.param("robustness", robustness);
    let opts = CertifyOptions {
        robustness,
        ..Default::default()
    };
    let r = certify(&state, &config, &opts, solver)?;
    for p in &r.marginals.pairs {
        println!(
            "marginal {}-{} min_pt_eigenvalue {:.6e} {}",
            p.pair.0,
            p.pair.1,
            p.min_pt_eigenvalue,
            if p.pass { "pass" } else { "FAIL" }
        );
    }
    println!("config {}", r.config);
    println!("witness_value {:.6e}", r.witness_value);
    println!("certificate_min_eigenvalue_p {:.3e}", r.certificate_min_eigenvalue_p);
    println!("certificate_min_eigenvalue_q {:.3e}", r.certificate_min_eigenvalue_q);
    println!("certificate_max_residual {:.3e}", r.certificate_max_residual);
    println!("certificate_valid {}", r.certificate_valid);
    if let Some(u) = &r.uniqueness {
        println!("unique {} gap {:.3e} overlap {:.6}", u.unique, u.gap, u.overlap);
    }
    if let Some(rob) = &r.noise_robustness {
        println!("noise_robustness_p_max {:.4}%", 100.0 * rob.p_max);
    }
    println!("certified {}", r.certified);
    let certified = r.certified;
    if let Some(path) = out {
        manifest.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
        write_json(path, &Report { manifest, report: r })?;
    }
    if certified {
        Ok(())
    } else {
        Err(Failure::Verify("state is not certified".into()))
    }
}

fn cmd_robustness(solver: &SolverOptions, input: &str, config: &str, out: Option<&Path>) -> CmdResult {
    let start = Instant::now();
    let mut manifest = RunManifest::new("robustness", solver);
    let state = resolve_state(input, &mut manifest)?;
    let config = resolve_config(config, Some(state.layout().n_parties()), &mut manifest)?;
    manifest.param("input", input);
    manifest.param("config", config.to_edge_string());
    let tol = CertifyOptions::default().robustness_tol;
    manifest.param("tol", tol);
    let r = noise_robustness(&state, &config, tol, solver)?;
    println!("p_max {:.6e} ({:.4}%)", r.p_max, 100.0 * r.p_max);
    if let Some(w) = &r.warning {
        println!("warning {w}");
    }
    let detected = r.p_max > 0.0;
    if let Some(path) = out {
        manifest.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
        write_json(path, &Report { manifest, report: r })?;
    }
    if detected {
        Ok(())
    } else {
        Err(Failure::Verify("state is not detected without noise".into()))
    }
}

fn cmd_trees(n: usize) -> CmdResult {
    let trees = enumerate_trees(n)?;
    let labels = TreeLabels::shipped()?;
    println!("{} trees on {n} vertices", trees.len());
    for t in &trees {
        let label = labels
            .labels
            .iter()
            .find(|(_, l)| l.n_parties == n && canonical_id(n, &l.edges).is_ok_and(|id| id == t.id))
            .map(|(k, _)| k.as_str())
            .unwrap_or("-");
        println!("{:<4} {}  {}", label, t.id, t.configuration().to_edge_string());
    }
    Ok(())
}

fn cmd_construct(graph: Option<&Path>, grid: Option<&str>, block: &str, out: Option<&Path>) -> CmdResult {
    let start = Instant::now();
    let mut manifest = RunManifest::new("construct", &SolverOptions::default());
    let target = match (graph, grid) {
        (Some(path), None) => resolve_config(&path.display().to_string(), None, &mut manifest)?,
        (None, Some(g)) => parse_grid(g)?,
        _ => return Err(Failure::Usage("give a graph file or --grid".into())),
    };
    manifest.param("graph", target.to_edge_string());
    manifest.param("block", block);
    let labels = TreeLabels::shipped()?;
    let label = labels.get(block)?;
    let state = resolve_state(block, &mut manifest)?;
    let b = Block {
        label: block.into(),
        state,
        certified: label.witness_value.is_some_and(|v| v < 0.0),
        unique: label.unique.unwrap_or(false),
    };
    let assignment = GlueAssignment::from_path_cover(target, label.n_parties)?;
    let composite = glue_states(&b, &assignment)?;
    let r = verify_construction(&composite)?;
    println!("copies {} total_qubits {} party_dims {:?}", r.copies, r.total_qubits, r.party_dims);
    for (k, p) in assignment.placements.iter().enumerate() {
        println!("copy {k} placed on {p:?}");
    }
    println!("pure {} norm_defect {:.2e}", r.pure, r.norm_defect);
    println!(
        "cuts_checked {} min_schmidt_rank {} cut_method {:?} all_cuts_entangled {}",
        r.cuts_checked, r.min_schmidt_rank, r.cut_method, r.all_cuts_entangled
    );
    println!("max_factorization_residual {:.2e} marginals_factorize {}", r.max_factorization_residual, r.marginals_factorize);
    println!("pedigree {} passed {}", r.pedigree, r.passed);
    let passed = r.passed;
    if let Some(dir) = out {
        manifest.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
        write_json(&dir.join("composite.json"), &StateFile::from_state(&composite.state))?;
        write_json(&dir.join("report.json"), &Report { manifest, report: r })?;
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Verify("construction does not meet every check".into()))
    }
}

fn run(cli: Cli) -> CmdResult {
    let solver = solver_options(&cli.solver)?;
    match cli.command {
        Command::Search {
            n,
            config,
            seeds,
            first_seed,
            jobs,
            max_iters,
            out,
        } => cmd_search(&solver, n, &config, seeds, first_seed, jobs, max_iters, out.as_deref()),
        Command::Verify {
            input,
            config,
            robustness,
            out,
        } => cmd_verify(&solver, &input, &config, robustness, out.as_deref()),
        Command::Robustness { input, config, out } => cmd_robustness(&solver, &input, &config, out.as_deref()),
        Command::Trees { n } => cmd_trees(n),
        Command::Construct { graph, grid, block, out } => {
            cmd_construct(graph.as_deref(), grid.as_deref(), &block, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver failure: {m}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Verify(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}
