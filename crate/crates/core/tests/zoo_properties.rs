use sloppy_core::equilibrium::{equilibrium_state, hermitian_eig, outcome_distribution, StateSpec};
use sloppy_core::fim::{analyze, derivatives, finite_difference_derivatives, KernelOptions};
use sloppy_core::freefermion::{many_body_spectrum, ChainSpec};
use sloppy_core::linalg;
use sloppy_core::models::{
    heisenberg_j1j2, hubbard_2d, random_tfim, tfim_1d, tfim_2d, zz_observable, Boundary, ModelBundle,
};
use sloppy_core::operators::{decompose_observable, Observable};
use sloppy_core::symmetry::{term_orbits, verify_invariance, InvarianceMode};

const STATES: [StateSpec; 4] = [
    StateSpec::Thermal { beta: 0.5 },
    StateSpec::Thermal { beta: 1.0 },
    StateSpec::Thermal { beta: 10.0 },
    StateSpec::Ground,
];

/// Every zoo model at six sites or fewer, with each observable it is
/// analysed under.
fn small_zoo() -> Vec<(ModelBundle, Observable)> {
    let mut out = Vec::new();
    for boundary in [Boundary::Periodic, Boundary::Open] {
        let b = tfim_1d(6, 0.3, 1.0, boundary).unwrap();
        out.push((b.clone(), b.observables[0].clone()));
        out.push((b, zz_observable(6, 2, 5).unwrap()));
    }
    let b = tfim_2d(2, 3, 0.3, 1.0).unwrap();
    out.push((b.clone(), b.observables[0].clone()));
    let b = hubbard_2d(2, 2, 1.0, 4.0, 2, 2, Boundary::Periodic).unwrap();
    out.push((b.clone(), b.observables[0].clone()));
    let b = heisenberg_j1j2(2, 3, 1.0, 0.5).unwrap();
    out.push((b.clone(), b.observables[0].clone()));
    let b = random_tfim(6, 0.3, 1.0, 0.1, 17).unwrap();
    out.push((b.clone(), b.observables[0].clone()));
    out
}

#[test]
fn analytic_derivatives_match_finite_differences() {
    for (bundle, obs) in small_zoo() {
        let dec = decompose_observable(&obs.operator).unwrap();
        for state in STATES {
            let (_, v) = derivatives(&bundle.hamiltonian, &dec, state, &KernelOptions::default()).unwrap();
            let fd = finite_difference_derivatives(&bundle.hamiltonian, &dec, state, 1e-3, true).unwrap();
            for k in 0..v.n_params() {
                for (col, &m) in v.retained_outcomes().iter().enumerate() {
                    let (a, b) = (v.values()[(k, col)], fd[(k, m)]);
                    assert!(
                        (a - b).abs() <= 1e-6 * b.abs() + 1e-10,
                        "{} {} {state:?} k={k} m={m}: {a} vs {b}",
                        bundle.name,
                        obs.name
                    );
                }
            }
            assert!(v.max_row_sum() < 1e-9);
        }
    }
}

#[test]
fn rank_never_exceeds_orbit_count() {
    for (bundle, obs) in small_zoo() {
        if bundle.name == "random_tfim" {
            continue;
        }
        let group = bundle.stabilizer_of(&obs).unwrap();
        let orbits = term_orbits(&bundle.hamiltonian, &group).unwrap();
        let dec = decompose_observable(&obs.operator).unwrap();
        for state in [StateSpec::Thermal { beta: 1.0 }, StateSpec::Thermal { beta: 10.0 }, StateSpec::Ground] {
            let pa = analyze(&bundle.hamiltonian, &dec, state, &KernelOptions::default()).unwrap();
            assert!(
                pa.fim.numerical_rank() <= orbits.orbit_count(),
                "{} {} {state:?}: rank {} > {}",
                bundle.name,
                obs.name,
                pa.fim.numerical_rank(),
                orbits.orbit_count()
            );
            for members in orbits.members() {
                let first = pa.derivatives.row(members[0]);
                for &k in &members[1..] {
                    let row = pa.derivatives.row(k);
                    let worst = row.iter().zip(&first).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    assert!(worst < 1e-9, "{} {} {state:?}: rows {} and {k} differ by {worst}", bundle.name, obs.name, members[0]);
                }
            }
        }
    }
}

#[test]
fn dense_and_symbolic_invariance_agree() {
    let check = |b: &ModelBundle, h: &sloppy_core::operators::ParameterizedHamiltonian| {
        let obs = &b.observables[0];
        let s = verify_invariance(h, obs, &b.symmetry, InvarianceMode::Symbolic);
        let d = verify_invariance(h, obs, &b.symmetry, InvarianceMode::Dense);
        assert_eq!(s.is_ok(), d.is_ok(), "{}", b.name);
        s.is_ok()
    };
    for n in [3, 5, 8] {
        for boundary in [Boundary::Periodic, Boundary::Open] {
            let b = tfim_1d(n, 0.4, 1.0, boundary).unwrap();
            assert!(check(&b, &b.hamiltonian));
            let mut lambda = b.hamiltonian.nominal().to_vec();
            lambda[0] += 0.1;
            assert!(!check(&b, &b.hamiltonian.with_nominal(lambda).unwrap()));
        }
    }
    for b in [tfim_2d(2, 4, 0.3, 1.0).unwrap(), heisenberg_j1j2(2, 4, 1.0, 0.3).unwrap()] {
        assert!(check(&b, &b.hamiltonian));
    }
}

#[test]
fn chain_spectra_agree_with_dense_models() {
    for n in [7, 10] {
        for boundary in [Boundary::Open, Boundary::Periodic] {
            let b = tfim_1d(n, 0.45, 1.0, boundary).unwrap();
            let (dense, _) = linalg::sym_eig(b.hamiltonian.assemble_nominal().unwrap().matrix()).unwrap();
            let c = ChainSpec::uniform(n, 0.45, 1.0, boundary, StateSpec::Ground).unwrap();
            let ff = many_body_spectrum(&c).unwrap();
            for (x, y) in ff.iter().zip(&dense) {
                assert!((x - y).abs() < 1e-9, "n={n} {boundary:?}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn thermal_state_approaches_ground_state() {
    let b = tfim_1d(6, 0.7, 1.0, Boundary::Open).unwrap();
    let h = b.hamiltonian.assemble_nominal().unwrap();
    let gap = hermitian_eig(&h).unwrap().ground_gap();
    let dec = decompose_observable(&b.observables[0].operator).unwrap();
    let cold = equilibrium_state(&h, StateSpec::Thermal { beta: 1e3 / gap }).unwrap();
    let ground = equilibrium_state(&h, StateSpec::Ground).unwrap();
    let p = outcome_distribution(cold.rho.as_ref(), &dec).unwrap();
    let q = outcome_distribution(ground.rho.as_ref(), &dec).unwrap();
    for (x, y) in p.probabilities.iter().zip(&q.probabilities) {
        assert!((x - y).abs() < 1e-6);
    }
}
