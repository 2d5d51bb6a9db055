use sloppy_core::equilibrium::StateSpec;
use sloppy_core::fim::{analyze, KernelOptions};
use sloppy_core::freefermion::{
    chain_fim, magnetization_distribution, zz_correlation_distribution, ChainFim, ChainObservable, ChainSpec,
    DerivativeMode,
};
use sloppy_core::linalg;
use sloppy_core::models::{tfim_1d, zz_observable, Boundary};
use sloppy_core::operators::decompose_observable;

const STATES: [StateSpec; 4] = [
    StateSpec::Thermal { beta: 0.5 },
    StateSpec::Thermal { beta: 1.0 },
    StateSpec::Thermal { beta: 10.0 },
    StateSpec::Ground,
];

fn dense(n: usize, b0: f64, boundary: Boundary, state: StateSpec, obs: ChainObservable) -> sloppy_core::fim::PointAnalysis {
    let bundle = tfim_1d(n, b0, 1.0, boundary).unwrap();
    let o = match obs {
        ChainObservable::Magnetization => bundle.observable("S_z").unwrap().clone(),
        ChainObservable::Zz(i, j) => zz_observable(n, i, j).unwrap(),
    };
    let dec = decompose_observable(&o.operator).unwrap();
    analyze(&bundle.hamiltonian, &dec, state, &KernelOptions::default()).unwrap()
}

fn free(n: usize, b0: f64, boundary: Boundary, state: StateSpec, obs: ChainObservable, mode: DerivativeMode) -> ChainFim {
    let c = ChainSpec::uniform(n, b0, 1.0, boundary, state).unwrap();
    chain_fim(&c, obs, mode).unwrap()
}

const ANALYTIC: DerivativeMode = DerivativeMode::Analytic { allow_fallback: true };

#[test]
fn distributions_and_leading_eigenvalue_match_dense() {
    for n in [4, 7, 10] {
        for boundary in [Boundary::Open, Boundary::Periodic] {
            for state in STATES {
                for obs in [ChainObservable::Magnetization, ChainObservable::Zz(2, n - 1)] {
                    let d = dense(n, 0.3, boundary, state, obs);
                    let f = free(n, 0.3, boundary, state, obs, ANALYTIC);
                    for (x, y) in f.distribution.probabilities.iter().zip(&d.distribution.probabilities) {
                        assert!((x - y).abs() < 1e-8, "n={n} {boundary:?} {state:?} {obs:?}: {x} vs {y}");
                    }
                    let (zf, zd) = (f.fim.eigenvalues()[0], d.fim.eigenvalues()[0]);
                    assert!((zf - zd).abs() <= 1e-4 * zd, "n={n} {boundary:?} {state:?} {obs:?}: {zf} vs {zd}");
                }
            }
        }
    }
}

#[test]
fn chain_fim_matches_dense_fim_at_eight_spins() {
    for boundary in [Boundary::Open, Boundary::Periodic] {
        for state in [StateSpec::Thermal { beta: 1.0 }, StateSpec::Ground] {
            for obs in [ChainObservable::Magnetization, ChainObservable::Zz(2, 6)] {
                let d = dense(8, 0.3, boundary, state, obs);
                let f = free(8, 0.3, boundary, state, obs, ANALYTIC);
                let diff = linalg::frobenius_diff(f.fim.fim(), d.fim.fim());
                let scale = linalg::frobenius(d.fim.fim());
                assert!(diff <= 1e-6 * scale, "{boundary:?} {state:?} {obs:?}: {diff} vs {scale}");
            }
        }
    }
}

#[test]
fn analytic_and_finite_difference_fims_agree() {
    for boundary in [Boundary::Open, Boundary::Periodic] {
        for state in [StateSpec::Thermal { beta: 1.0 }, StateSpec::Thermal { beta: 10.0 }, StateSpec::Ground] {
            let obs = ChainObservable::Zz(2, 6);
            let a = free(8, 0.3, boundary, state, obs, ANALYTIC);
            let f = free(8, 0.3, boundary, state, obs, DerivativeMode::FiniteDifference);
            let diff = linalg::frobenius_diff(a.fim.fim(), f.fim.fim());
            let scale = linalg::frobenius(f.fim.fim());
            assert!(diff <= 1e-5 * scale, "{boundary:?} {state:?}: {diff} vs {scale}");
        }
    }
}

#[test]
fn ground_zz_matches_dense_at_critical_field() {
    let c = ChainSpec::uniform(8, 0.5, 1.0, Boundary::Open, StateSpec::Ground).unwrap();
    let f = zz_correlation_distribution(&c, 2, 6).unwrap();
    let d = dense(8, 0.5, Boundary::Open, StateSpec::Ground, ChainObservable::Zz(2, 6));
    for (x, y) in f.probabilities.iter().zip(&d.distribution.probabilities) {
        assert!((x - y).abs() < 1e-9);
    }
    let m = magnetization_distribution(&c).unwrap();
    assert_eq!(m.len(), 9);
}
