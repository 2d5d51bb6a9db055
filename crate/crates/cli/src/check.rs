//! Invariant suites behind `sloppy check`.

use sloppy_core::equilibrium::StateSpec;
use sloppy_core::fim::{analyze, derivatives, finite_difference_derivatives, KernelOptions};
use sloppy_core::freefermion::{chain_fim, ChainObservable, ChainSpec, DerivativeMode};
use sloppy_core::models::{
    heisenberg_j1j2, hubbard_2d, random_tfim, tfim_1d, tfim_2d, zz_observable, Boundary, ModelBundle,
};
use sloppy_core::operators::{decompose_observable, Observable};
use sloppy_core::symmetry::{check_eigenvector_structure, term_orbits};

use crate::config::{ModelConfig, RunConfig};
use crate::runner::{build_bundle, build_observable};

/// Per-entry derivative agreement: `|a − b| ≤ 1e-6 |b| + 1e-10`.
pub const FD_RELATIVE: f64 = 1e-6;
pub const FD_ABSOLUTE: f64 = 1e-10;
/// Richardson-extrapolated central differences use this relative step.
pub const FD_STEP: f64 = 1e-3;

#[derive(Clone, Debug, Default)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            ..Default::default()
        }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failures.push(what());
        }
    }

    pub fn total(&self) -> usize {
        self.passed + self.failures.len()
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

const ALL_STATES: [StateSpec; 4] = [
    StateSpec::Thermal { beta: 0.5 },
    StateSpec::Thermal { beta: 1.0 },
    StateSpec::Thermal { beta: 10.0 },
    StateSpec::Ground,
];

fn state_name(s: StateSpec) -> String {
    match s {
        StateSpec::Thermal { beta } => format!("beta={beta}"),
        StateSpec::Ground => "ground".into(),
    }
}

/// The zoo at six sites or fewer, each with its native observable.
pub fn default_cases(seed: u64) -> sloppy_core::Result<Vec<(ModelBundle, Observable)>> {
    let mut out = Vec::new();
    for boundary in [Boundary::Periodic, Boundary::Open] {
        let b = tfim_1d(6, 0.3, 1.0, boundary)?;
        out.push((b.clone(), b.observables[0].clone()));
        out.push((b, zz_observable(6, 2, 5)?));
    }
    for b in [
        tfim_2d(2, 3, 0.3, 1.0)?,
        hubbard_2d(2, 2, 1.0, 4.0, 2, 2, Boundary::Periodic)?,
        heisenberg_j1j2(2, 3, 1.0, 0.5)?,
        random_tfim(6, 0.3, 1.0, 0.1, seed)?,
    ] {
        let obs = b.observables[0].clone();
        out.push((b, obs));
    }
    Ok(out)
}

/// Analytic derivatives against Richardson finite differences.
pub fn fd_consistency(cases: &[(ModelBundle, Observable)], opts: &KernelOptions) -> SuiteResult {
    let mut suite = SuiteResult::new("fd-consistency");
    for (bundle, obs) in cases {
        let tag = format!("{} {}", bundle.name, obs.name);
        let dec = match decompose_observable(&obs.operator) {
            Ok(d) => d,
            Err(e) => {
                suite.record(false, || format!("{tag}: {e}"));
                continue;
            }
        };
        for state in ALL_STATES {
            let run = || -> sloppy_core::Result<Option<String>> {
                let (_, v) = derivatives(&bundle.hamiltonian, &dec, state, opts)?;
                let fd = finite_difference_derivatives(&bundle.hamiltonian, &dec, state, FD_STEP, true)?;
                let mut worst: Option<(f64, usize, usize)> = None;
                for k in 0..v.n_params() {
                    for (col, &m) in v.retained_outcomes().iter().enumerate() {
                        let (a, b) = (v.values()[(k, col)], fd[(k, m)]);
                        let excess = (a - b).abs() / (FD_RELATIVE * b.abs() + FD_ABSOLUTE);
                        if excess > 1.0 && worst.is_none_or(|w| excess > w.0) {
                            worst = Some((excess, k, m));
                        }
                    }
                }
                Ok(worst.map(|(x, k, m)| format!("entry ({k}, {m}) off by {x:.3e} tolerances")))
            };
            match run() {
                Ok(None) => suite.record(true, String::new),
                Ok(Some(why)) => suite.record(false, || format!("{tag} {}: {why}", state_name(state))),
                Err(e) => suite.record(false, || format!("{tag} {}: {e}", state_name(state))),
            }
        }
    }
    suite
}

/// Exact chain solution against dense diagonalization.
pub fn dense_vs_freefermion(sizes: &[(usize, f64, f64)]) -> SuiteResult {
    let mut suite = SuiteResult::new("dense-vs-freefermion");
    for &(n, b0, j0) in sizes {
        for boundary in [Boundary::Open, Boundary::Periodic] {
            for state in [StateSpec::Thermal { beta: 1.0 }, StateSpec::Thermal { beta: 10.0 }, StateSpec::Ground] {
                let pair = if n >= 6 { (2, 6) } else { (1, n) };
                for obs in [ChainObservable::Magnetization, ChainObservable::Zz(pair.0, pair.1)] {
                    let tag = format!("n={n} {boundary:?} {} {obs:?}", state_name(state));
                    let run = || -> sloppy_core::Result<Option<String>> {
                        let bundle = tfim_1d(n, b0, j0, boundary)?;
                        let o = match obs {
                            ChainObservable::Magnetization => bundle.observables[0].clone(),
                            ChainObservable::Zz(i, j) => zz_observable(n, i, j)?,
                        };
                        let dec = decompose_observable(&o.operator)?;
                        let d = analyze(&bundle.hamiltonian, &dec, state, &KernelOptions::default())?;
                        let c = ChainSpec::uniform(n, b0, j0, boundary, state)?;
                        let f = chain_fim(&c, obs, DerivativeMode::Analytic { allow_fallback: true })?;
                        let dp = f
                            .distribution
                            .probabilities
                            .iter()
                            .zip(&d.distribution.probabilities)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max);
                        if dp >= 1e-8 {
                            return Ok(Some(format!("probabilities differ by {dp:e}")));
                        }
                        let (zf, zd) = (f.fim.eigenvalues()[0], d.fim.eigenvalues()[0]);
                        if (zf - zd).abs() > 1e-4 * zd.abs() {
                            return Ok(Some(format!("leading eigenvalue {zf} vs {zd}")));
                        }
                        Ok(None)
                    };
                    match run() {
                        Ok(None) => suite.record(true, String::new),
                        Ok(Some(why)) => suite.record(false, || format!("{tag}: {why}")),
                        Err(e) => suite.record(false, || format!("{tag}: {e}")),
                    }
                }
            }
        }
    }
    suite
}

/// Rank bounds, equal derivative rows within orbits and orbit-constant
/// dominant eigenvectors.
pub fn orbit_structure(cases: &[(ModelBundle, Observable)], opts: &KernelOptions) -> SuiteResult {
    let mut suite = SuiteResult::new("orbit-structure");
    for (bundle, obs) in cases {
        for state in [StateSpec::Thermal { beta: 1.0 }, StateSpec::Thermal { beta: 10.0 }, StateSpec::Ground] {
            let tag = format!("{} {} {}", bundle.name, obs.name, state_name(state));
            let run = || -> sloppy_core::Result<Option<String>> {
                let group = bundle.stabilizer_of(obs)?;
                let orbits = term_orbits(&bundle.hamiltonian, &group)?;
                let dec = decompose_observable(&obs.operator)?;
                let pa = analyze(&bundle.hamiltonian, &dec, state, opts)?;
                let bound = orbits.orbit_count().min(dec.len() - 1);
                if pa.fim.numerical_rank() > bound {
                    return Ok(Some(format!("rank {} exceeds bound {bound}", pa.fim.numerical_rank())));
                }
                for members in orbits.members() {
                    let first = pa.derivatives.row(members[0]);
                    for &k in &members[1..] {
                        let gap = pa.derivatives.row(k).iter().zip(&first).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                        if gap >= 1e-9 {
                            return Ok(Some(format!("derivative rows {} and {k} differ by {gap:e}", members[0])));
                        }
                    }
                }
                let dominant = pa.fim.dominant_count();
                if let Some(v) = check_eigenvector_structure(&pa.fim, &orbits).iter().take(dominant).find(|v| v.flagged) {
                    return Ok(Some(format!("eigenvector {} spreads {:e} within an orbit", v.index, v.max_spread)));
                }
                Ok(None)
            };
            match run() {
                Ok(None) => suite.record(true, String::new),
                Ok(Some(why)) => suite.record(false, || format!("{tag}: {why}")),
                Err(e) => suite.record(false, || format!("{tag}: {e}")),
            }
        }
    }
    suite
}

/// Suites relevant to `cfg`, or the full default set without one.
pub fn run_check(cfg: Option<&RunConfig>, seed: u64) -> Result<Vec<SuiteResult>, crate::runner::RunError> {
    let opts = cfg.map(RunConfig::kernel_options).unwrap_or_default();
    let cases = match cfg {
        None => default_cases(seed)?,
        Some(c) => {
            c.validate()?;
            let bundle = build_bundle(&c.model)?;
            let obs = build_observable(c, &bundle)?;
            vec![(bundle, obs)]
        }
    };
    let mut suites = vec![fd_consistency(&cases, &opts)];
    match cfg.map(|c| &c.model) {
        None => suites.push(dense_vs_freefermion(&[(8, 0.3, 1.0)])),
        Some(&ModelConfig::Tfim1d { n, b0, j0, .. }) if n <= 10 => suites.push(dense_vs_freefermion(&[(n, b0, j0)])),
        _ => {}
    }
    suites.push(orbit_structure(&cases, &opts));
    Ok(suites)
}
