//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any of A1-A8 fails. Set GME_EXTENDED=1 to add the 5-qubit
//! tier A9, which takes hours.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gme_core::certification::{check_all_marginals_separable, noise_robustness, uniqueness_check};
use gme_core::configurations::{canonical_id, enumerate_trees, MarginalConfiguration};
use gme_core::construction::{glue_states, verify_construction, Block, GlueAssignment};
use gme_core::state_io::TreeLabels;
use gme_core::witness_search::{optimal_witness, see_saw, SeeSawOptions, WitnessResult};
use gme_sdp::{solve, SolveStatus, SolverOptions};
use gme_suite::{max_eigenvalue_problem, prufer_class_count, DualityAudit};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TABLE_4B: f64 = -3.56e-3;
const TABLE_4B_TOL: f64 = 0.5e-3;
const SEARCH_BEST: f64 = -3.0e-3;
const SEARCH_MEDIAN_ITERS: usize = 5;
const SEARCH_SEEDS: u64 = 10;
const ROBUSTNESS_4B: f64 = 0.35e-2;
const ROBUSTNESS_4B_TOL: f64 = 0.10e-2;
const PPT_TOL: f64 = 1e-9;
const GAP_MIN: f64 = 1e-6;
const OVERLAP_MIN: f64 = 0.999;
const EIGEN_TOL: f64 = 1e-7;
const DUALITY_SLACK: f64 = 1e-8;
const FACTORIZATION_TOL: f64 = 1e-10;
const TABLE_5A: f64 = -1.13e-3;
const TABLE_5A_TOL: f64 = 0.4e-3;
const ROBUSTNESS_5A: f64 = 0.11e-2;
const ROBUSTNESS_5A_TOL: f64 = 0.05e-2;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

struct Suite {
    outcomes: Vec<Outcome>,
    audit: DualityAudit,
}

impl Suite {
    fn report(&mut self, id: &'static str, start: Instant, limit: Option<Duration>, pass: bool, detail: String) {
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let detail = match limit {
            Some(l) if !in_time => format!("{detail}; runtime {:.1}s over the {:.0}s limit", elapsed.as_secs_f64(), l.as_secs_f64()),
            _ => detail,
        };
        eprintln!("  {id} done in {:.1}s", elapsed.as_secs_f64());
        self.outcomes.push(Outcome {
            id,
            pass: pass && in_time,
            detail,
            elapsed,
        });
    }
}

fn solver() -> SolverOptions {
    SolverOptions::default()
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn median(v: &mut [usize]) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

fn a1(suite: &mut Suite, labels: &TreeLabels) {
    let start = Instant::now();
    let state = labels.fixture_state("4b").unwrap();
    let r = check_all_marginals_separable(&state, PPT_TOL).unwrap();
    let worst = r.pairs.iter().map(|p| p.min_pt_eigenvalue).fold(f64::INFINITY, f64::min);
    let failing: Vec<String> = r.pairs.iter().filter(|p| !p.pass).map(|p| format!("{:?}", p.pair)).collect();
    suite.report(
        "A1",
        start,
        secs(1),
        r.pairs.len() == 6 && r.all_pass,
        format!("{} pairs, min PT eigenvalue {worst:.3e}, failing pairs {failing:?}", r.pairs.len()),
    );
}

/// Each 4-vertex tree is placed on the fixture's parties as recorded in
/// the mapping file. Returns the solve on 4b.
fn a2(suite: &mut Suite, labels: &TreeLabels) -> WitnessResult {
    let start = Instant::now();
    let state = labels.fixture_state("4b").unwrap();
    let labeled = canonical_id(4, &labels.config("4b").unwrap().edges).unwrap();
    let mut hits = Vec::new();
    let mut values = Vec::new();
    let mut on_4b = None;
    for tree in enumerate_trees(4).unwrap() {
        let (label, config) = labels
            .labels
            .iter()
            .filter(|(_, l)| l.n_parties == 4)
            .map(|(k, _)| (k.clone(), labels.config(k).unwrap()))
            .find(|(_, c)| canonical_id(4, &c.edges).unwrap() == tree.id)
            .expect("the mapping file labels every 4-vertex tree");
        let r = optimal_witness(&state, &config, &solver()).unwrap();
        suite.audit.record(&r.solver_history);
        values.push(format!("{label} {}: {:.6e} on {}", tree.id, r.value, config.to_edge_string()));
        if (r.value - TABLE_4B).abs() <= TABLE_4B_TOL {
            hits.push(tree.id.clone());
        }
        if tree.id == labeled {
            on_4b = Some(r);
        }
    }
    let pass = hits.len() == 1 && hits[0] == labeled;
    suite.report("A2", start, secs(120), pass, format!("values [{}], matching {hits:?}, labeled 4b {labeled}", values.join(", ")));
    on_4b.expect("4b is one of the enumerated trees")
}

fn a3(suite: &mut Suite, labels: &TreeLabels) {
    let start = Instant::now();
    let config = labels.config("4b").unwrap();
    let layout = labels.fixture_state("4b").unwrap().layout().clone();
    let mut best = f64::INFINITY;
    let mut iters = Vec::new();
    let mut all_checks = true;
    for seed in 0..SEARCH_SEEDS {
        let opts = SeeSawOptions {
            seed,
            ..Default::default()
        };
        let r = see_saw(&layout, &config, &opts, &solver()).unwrap();
        for h in &r.solver_histories {
            suite.audit.record(h);
        }
        eprintln!("    seed {seed}: value {:.6e} after {} iterations ({:?})", r.value, r.iterations, r.status);
        best = best.min(r.value);
        iters.push(r.iterations);
        all_checks &= r.checks.all_pass();
    }
    let med = median(&mut iters);
    let pass = best <= SEARCH_BEST && med <= SEARCH_MEDIAN_ITERS as f64 && all_checks;
    suite.report(
        "A3",
        start,
        secs(30 * 60),
        pass,
        format!("best {best:.6e} (need <= {SEARCH_BEST:.1e}), median iterations {med} (need <= {SEARCH_MEDIAN_ITERS}), iterations {iters:?}, checks {all_checks}"),
    );
}

fn a4(suite: &mut Suite, labels: &TreeLabels) {
    let start = Instant::now();
    let state = labels.fixture_state("4b").unwrap();
    let config = labels.config("4b").unwrap();
    let r = noise_robustness(&state, &config, PPT_TOL, &solver()).unwrap();
    for h in &r.solver_histories {
        suite.audit.record(h);
    }
    let pass = (r.p_max - ROBUSTNESS_4B).abs() <= ROBUSTNESS_4B_TOL;
    suite.report(
        "A4",
        start,
        secs(15 * 60),
        pass,
        format!("p_max {:.4}% (need {:.2}% +- {:.2}%)", 100.0 * r.p_max, 100.0 * ROBUSTNESS_4B, 100.0 * ROBUSTNESS_4B_TOL),
    );
}

fn a5(suite: &mut Suite, labels: &TreeLabels, witness: &WitnessResult) {
    let start = Instant::now();
    let state = labels.fixture_state("4b").unwrap();
    let u = uniqueness_check(&state, &witness.witness).unwrap();
    let pass = u.gap >= GAP_MIN && u.overlap >= OVERLAP_MIN;
    suite.report(
        "A5",
        start,
        None,
        pass,
        format!("gap {:.3e} (need >= {GAP_MIN:.0e}), overlap {:.6} (need >= {OVERLAP_MIN})", u.gap, u.overlap),
    );
}

fn a6(suite: &mut Suite) {
    let start = Instant::now();
    let expected = [1, 1, 1, 2, 3, 6, 11];
    let counts: Vec<usize> = (1..=7).map(|n| enumerate_trees(n).unwrap().len()).collect();
    let oracle = prufer_class_count(7);
    let pass = counts == expected && oracle == expected[6];
    suite.report("A6", start, secs(10), pass, format!("counts {counts:?}, Prufer oracle at n = 7 gives {oracle}"));
}

fn a7(suite: &mut Suite) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..=16);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = (&g + g.transpose()) * 0.5;
        let exact = a.clone().symmetric_eigen().eigenvalues.max();
        let sol = solve(&max_eigenvalue_problem(&a), &solver()).unwrap();
        if sol.status != SolveStatus::Optimal {
            failures += 1;
            continue;
        }
        suite.audit.record(&sol.history);
        worst = worst.max((sol.primal_objective - exact).abs());
    }
    let eig_ok = failures == 0 && worst <= EIGEN_TOL;
    let a = &suite.audit;
    let duality_ok = a.holds(DUALITY_SLACK);
    let detail = format!(
        "max eigenvalue error {worst:.2e} over 50 problems ({failures} non-optimal); weak duality over {} solves, {} iterates ({} with both bounds): max violation {:.2e}, finals without bounds {}",
        a.solves, a.iterates, a.bounded_iterates, a.max_violation, a.unbounded_finals
    );
    suite.report("A7", start, None, eig_ok && duality_ok, detail);
}

fn block_5a(labels: &TreeLabels) -> Block {
    let l = labels.get("5a").unwrap();
    Block {
        label: "5a".into(),
        state: labels.fixture_state("5a").unwrap(),
        certified: l.witness_value.is_some_and(|v| v < 0.0),
        unique: l.unique.unwrap_or(false),
    }
}

fn a8(suite: &mut Suite, labels: &TreeLabels) {
    let start = Instant::now();
    let path6 = MarginalConfiguration::parse("0-1,1-2,2-3,3-4,4-5", None).unwrap();
    let assignment = GlueAssignment::from_path_cover(path6, 5).unwrap();
    let composite = glue_states(&block_5a(labels), &assignment).unwrap();
    let r = verify_construction(&composite).unwrap();
    let pass = r.pure
        && r.cuts_checked == 31
        && r.min_schmidt_rank >= 2
        && r.max_factorization_residual <= FACTORIZATION_TOL;
    suite.report(
        "A8",
        start,
        secs(60),
        pass,
        format!(
            "pure {}, {} cuts, min Schmidt rank {}, max marginal residual {:.2e}, block pedigree {}",
            r.pure, r.cuts_checked, r.min_schmidt_rank, r.max_factorization_residual, r.pedigree
        ),
    );
}

fn a9(suite: &mut Suite, labels: &TreeLabels) {
    let start = Instant::now();
    let config = labels.config("5a").unwrap();
    let state = labels.fixture_state("5a").unwrap();
    let search = see_saw(state.layout(), &config, &SeeSawOptions::default(), &solver()).unwrap();
    let rob = noise_robustness(&state, &config, PPT_TOL, &solver()).unwrap();
    let pass = (search.value - TABLE_5A).abs() <= TABLE_5A_TOL
        && (rob.p_max - ROBUSTNESS_5A).abs() <= ROBUSTNESS_5A_TOL
        && search.checks.all_pass();
    suite.report(
        "A9",
        start,
        None,
        pass,
        format!(
            "see-saw value {:.6e} after {} iterations, fixture p_max {:.4}%",
            search.value,
            search.iterations,
            100.0 * rob.p_max
        ),
    );
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters pass arguments; there is one target.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let labels = TreeLabels::shipped().unwrap();
    let mut suite = Suite {
        outcomes: Vec::new(),
        audit: DualityAudit::default(),
    };
    eprintln!("running acceptance criteria");
    a1(&mut suite, &labels);
    let w4b = a2(&mut suite, &labels);
    a5(&mut suite, &labels, &w4b);
    a6(&mut suite);
    a8(&mut suite, &labels);
    a4(&mut suite, &labels);
    a3(&mut suite, &labels);
    let extended = std::env::var("GME_EXTENDED").is_ok_and(|v| v == "1");
    if extended {
        a9(&mut suite, &labels);
    }
    a7(&mut suite);

    suite.outcomes.sort_by_key(|o| o.id);
    println!();
    for o in &suite.outcomes {
        println!(
            "{} {} ({:.1}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    if !extended {
        println!("SKIP A9: extended tier, set GME_EXTENDED=1");
    }
    let failed = suite.outcomes.iter().filter(|o| !o.pass && o.id != "A9").count();
    let passed = suite.outcomes.iter().filter(|o| o.pass).count();
    println!("{passed} of {} criteria passed", suite.outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
