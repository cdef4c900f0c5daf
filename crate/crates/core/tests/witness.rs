use std::collections::BTreeMap;

use gme_core::certification::uniqueness_check;
use gme_core::configurations::MarginalConfiguration;
use gme_core::state_io::TreeLabels;
use gme_core::tensor::{
    is_ppt, partial_trace, pauli_operator, random_pure_state, Bipartition, CMatrix, CVector, PartyLayout, PauliTerm,
    QuantumState, C64,
};
use gme_core::witness_search::{
    expand_witness, min_marginal_pt_eigenvalue, optimal_state, optimal_witness, project_on_terms, see_saw,
    witness_terms, SeeSawOptions, Witness, WitnessFile,
};
use gme_core::CoreError;
use gme_sdp::SolverOptions;

fn cfg(s: &str) -> MarginalConfiguration {
    MarginalConfiguration::parse(s, None).unwrap()
}

fn solver() -> SolverOptions {
    SolverOptions::default()
}

fn ghz3() -> QuantumState {
    let mut v = CVector::zeros(8);
    v[0] = C64::new(1.0, 0.0);
    v[7] = C64::new(1.0, 0.0);
    QuantumState::pure(PartyLayout::qubits(3).unwrap(), v).unwrap()
}

fn maximally_mixed(n: usize) -> QuantumState {
    let d = 1 << n;
    QuantumState::mixed(PartyLayout::qubits(n).unwrap(), CMatrix::identity(d, d) / C64::from(d as f64)).unwrap()
}

fn non_increasing(trace: &[f64], slack: f64) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + slack)
}

#[test]
fn maximally_mixed_state_gives_inverse_dimension() {
    for (n, c) in [(3, "0-1,1-2"), (4, "0-1,1-2,2-3")] {
        let r = optimal_witness(&maximally_mixed(n), &cfg(c), &solver()).unwrap();
        assert!((r.value - 1.0 / (1 << n) as f64).abs() < 1e-8, "{n}: {}", r.value);
    }
}

#[test]
fn ghz_is_not_detected_from_a_path() {
    let config = cfg("0-1,1-2");
    let ghz = ghz3();
    let mut rho = CMatrix::zeros(8, 8);
    rho[(0, 0)] = C64::new(0.5, 0.0);
    rho[(7, 7)] = C64::new(0.5, 0.0);
    let mix = QuantumState::mixed(ghz.layout().clone(), rho).unwrap();
    // Same two-body marginals as a mixture of product states, which is PPT
    // across every bipartition and hence a PPT mixture.
    for pair in [[0, 1], [1, 2], [0, 2]] {
        let diff = partial_trace(&ghz, &pair).unwrap() - partial_trace(&mix, &pair).unwrap();
        assert!(diff.norm() < 1e-15);
    }
    for b in Bipartition::all(3).unwrap() {
        assert!(is_ppt(mix.layout(), &mix.density_matrix(), &b, 1e-12).unwrap().ppt);
    }
    let v_ghz = optimal_witness(&ghz, &config, &solver()).unwrap().value;
    let v_mix = optimal_witness(&mix, &config, &solver()).unwrap().value;
    assert!(v_ghz >= -1e-8, "{v_ghz}");
    assert!((v_ghz - v_mix).abs() < 1e-7);
}

#[test]
fn non_qubit_layouts_are_unsupported() {
    let layout = PartyLayout::new(vec![2, 3]).unwrap();
    let s = random_pure_state(&layout, 0);
    assert!(matches!(optimal_witness(&s, &cfg("0-1"), &solver()), Err(CoreError::Unsupported(_))));
}

#[test]
fn star_fixture_is_detected_by_its_marginals() {
    let labels = TreeLabels::shipped().unwrap();
    let state = labels.fixture_state("4b").unwrap();
    let config = labels.config("4b").unwrap();
    let r = optimal_witness(&state, &config, &solver()).unwrap();
    let check = r.certificate.verify(&r.witness).unwrap();
    assert!(check.valid, "{check:?}");
    assert_eq!(check.bipartitions, 7);
    assert!((r.value + 3.56e-3).abs() < 0.5e-3, "{}", r.value);
    let w = expand_witness(&r.witness);
    assert!((w.trace().re - 1.0).abs() < 1e-10);
    assert!((state.expectation(&w) - r.value).abs() < 1e-8);
    let (id, coeffs) = project_on_terms(&w, &config);
    assert!((id - r.witness.identity_coeff).abs() < 1e-12);
    for (t, c) in coeffs {
        assert!((c - r.witness.coeffs[&t]).abs() < 1e-12);
    }
    let u = uniqueness_check(&state, &r.witness).unwrap();
    assert!(u.gap >= 1e-6, "{u:?}");

    // One state step from the fixture's witness; the fixture is not PPT on
    // every marginal, so the constrained optimum sits slightly above.
    let s = optimal_state(&r.witness, &solver()).unwrap();
    assert!(s.value <= -3.0e-3, "{}", s.value);
    assert!(min_marginal_pt_eigenvalue(&s.state).unwrap() >= -1e-9);
    assert!((s.state.density_matrix().trace().re - 1.0).abs() < 1e-10);
    // The marginal-constrained minimizer is the fixture itself.
    assert!(s.state.expectation(&state.density_matrix()) > 0.999);
}

#[test]
fn trivial_witness_expands_to_scaled_identity() {
    let layout = PartyLayout::qubits(3).unwrap();
    let w = Witness::trivial(&layout, &cfg("0-1,1-2"));
    assert!((expand_witness(&w) - CMatrix::identity(8, 8) / C64::from(8.0)).norm() < 1e-15);
    let s = optimal_state(&w, &solver()).unwrap();
    assert!((s.value - 0.125).abs() < 1e-8);
}

#[test]
fn single_term_overlap() {
    let layout = PartyLayout::qubits(3).unwrap();
    let mut w = Witness::trivial(&layout, &cfg("0-1,1-2"));
    let zz = PauliTerm {
        edge: (0, 1),
        indices: (3, 3),
    };
    let t = 0.37;
    w.coeffs.insert(zz, t);
    let m = expand_witness(&w);
    let op = pauli_operator(&zz, &layout).unwrap();
    assert!(((op * &m).trace().re - t * 8.0).abs() < 1e-12);
}

#[test]
fn projection_round_trip_and_file_round_trip() {
    let layout = PartyLayout::qubits(4).unwrap();
    let config = cfg("0-1,1-2,1-3");
    let mut w = Witness::trivial(&layout, &config);
    for (k, t) in witness_terms(&config).into_iter().enumerate() {
        w.coeffs.insert(t, ((k * 37 % 11) as f64 - 5.0) * 1e-2);
    }
    let m = expand_witness(&w);
    assert!((m.trace().re - 1.0).abs() < 1e-10);
    let (id, coeffs) = project_on_terms(&m, &config);
    assert!((id - w.identity_coeff).abs() < 1e-12);
    assert_eq!(coeffs.len(), w.coeffs.len());
    for (t, c) in &coeffs {
        assert!((c - w.coeffs[t]).abs() < 1e-12);
    }
    let file = WitnessFile::new(&w, Some(-1.0), None);
    let json = serde_json::to_string(&file).unwrap();
    let back: WitnessFile = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_witness().unwrap(), w);

    let mut bad = file.clone();
    bad.coeffs.push((0, 2, 3, 3, 1.0));
    assert!(bad.to_witness().is_err());
}

#[test]
fn state_step_never_exceeds_the_start() {
    let layout = PartyLayout::qubits(3).unwrap();
    let config = cfg("0-1,1-2");
    for seed in 0..3 {
        let rho0 = random_pure_state(&layout, seed);
        let wit = optimal_witness(&rho0, &config, &solver()).unwrap();
        // A random start need not be PPT on its marginals; project it there
        // via the feasible mixture with white noise first.
        let s = optimal_state(&wit.witness, &solver()).unwrap();
        let lam = min_marginal_pt_eigenvalue(&rho0).unwrap();
        let eps = if lam < 0.0 { -lam / (0.25 - lam) } else { 0.0 };
        let feasible = (1.0 - eps) * wit.value + eps / 8.0;
        assert!(s.value <= feasible + 1e-8, "{seed}: {} > {feasible}", s.value);
        assert!(min_marginal_pt_eigenvalue(&s.state).unwrap() >= -1e-9);
    }
}

#[test]
fn two_parties_admit_no_detection() {
    let r = see_saw(
        &PartyLayout::qubits(2).unwrap(),
        &cfg("0-1"),
        &SeeSawOptions {
            max_iters: 3,
            ..Default::default()
        },
        &solver(),
    )
    .unwrap();
    assert!(r.value >= -1e-8, "{}", r.value);
    assert!(!r.checks.negative_value);
}

#[test]
fn three_qubit_see_saw_is_monotone_and_certified() {
    let layout = PartyLayout::qubits(3).unwrap();
    let config = cfg("0-1,1-2");
    let mut seen = BTreeMap::new();
    for seed in 0..2 {
        let opts = SeeSawOptions {
            seed,
            max_iters: 6,
            ..Default::default()
        };
        let r = see_saw(&layout, &config, &opts, &solver()).unwrap();
        assert!(non_increasing(&r.objective_trace, 1e-8), "{:?}", r.objective_trace);
        assert_eq!(r.objective_trace.len(), 2 * r.iterations);
        assert!(r.certificate.verify(&r.witness).unwrap().valid);
        assert!(r.checks.marginals_ppt);
        assert_eq!(Some(&r.value), r.objective_trace.last());
        seen.insert(seed, r.value);
    }
    let again = see_saw(
        &layout,
        &config,
        &SeeSawOptions {
            seed: 0,
            max_iters: 6,
            ..Default::default()
        },
        &solver(),
    )
    .unwrap();
    assert_eq!(again.value, seen[&0]);
}

#[test]
fn local_unitaries_preserve_the_optimum() {
    use gme_core::certification::{apply_local_unitary, LocalUnitary};
    let labels = TreeLabels::shipped().unwrap();
    let state = labels.fixture_state("4b").unwrap();
    let config = labels.config("4b").unwrap();
    let lu = LocalUnitary {
        params: vec![(0.3, -0.2, 0.9), (1.1, 0.4, -0.5), (-0.7, 2.0, 0.25), (0.0, 0.6, 1.3)],
    };
    let rotated = apply_local_unitary(&state, &lu).unwrap();
    let a = optimal_witness(&state, &config, &solver()).unwrap().value;
    let b = optimal_witness(&rotated, &config, &solver()).unwrap().value;
    assert!((a - b).abs() < 2e-8, "{a} vs {b}");
}

/// Extended tier: a 5-qubit witness solve takes over a minute.
#[test]
#[ignore]
fn five_qubit_fixture_is_detected() {
    let labels = TreeLabels::shipped().unwrap();
    let state = labels.fixture_state("5a").unwrap();
    let config = labels.config("5a").unwrap();
    let r = optimal_witness(&state, &config, &solver()).unwrap();
    let check = r.certificate.verify(&r.witness).unwrap();
    let u = uniqueness_check(&state, &r.witness).unwrap();
    eprintln!("5a value {:.6e}, {check:?}, {u:?}", r.value);
    assert!(check.valid);
    assert!((r.value + 1.13e-3).abs() < 0.4e-3);
    assert!(u.gap >= 1e-6);
}
