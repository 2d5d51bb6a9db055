//! Single-point analysis, sweeps and orbit reports.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use sloppy_core::fim::{analyze, cpd_extract, CpdReport, FimAnalysis};
use sloppy_core::freefermion::{chain_fim, ChainObservable, ChainSpec, DerivativeMode};
use sloppy_core::models::{
    heisenberg_j1j2, hubbard_2d, random_tfim, staggered_magnetization, tfim_1d, tfim_2d, total_sz_observable,
    zz_observable, Boundary, ModelBundle,
};
use sloppy_core::operators::{decompose_observable, Observable};
use sloppy_core::symmetry::{close_group, descriptor_orbits, term_orbits, OrbitPartition, SitePermutation, TermDescriptor};
use sloppy_core::operators::PauliAxis;

use crate::config::{ConfigError, Engine, ModelConfig, ObservableConfig, RunConfig};
use crate::records::{merge_label_orders, SweepRecord, SweepTable};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(sloppy_core::Error),
    Io(String),
}

impl RunError {
    /// 1 for invalid input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "invalid config: {e}"),
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<sloppy_core::Error> for RunError {
    fn from(e: sloppy_core::Error) -> Self {
        RunError::Core(e)
    }
}

pub fn build_bundle(model: &ModelConfig) -> sloppy_core::Result<ModelBundle> {
    match *model {
        ModelConfig::Tfim1d { n, b0, j0, boundary } => tfim_1d(n, b0, j0, boundary.into()),
        ModelConfig::Tfim2d { rows, cols, b0, j0 } => tfim_2d(rows, cols, b0, j0),
        ModelConfig::Hubbard2d {
            rows,
            cols,
            t0,
            u0,
            n_up,
            n_down,
            boundary,
        } => hubbard_2d(rows, cols, t0, u0, n_up, n_down, boundary.into()),
        ModelConfig::HeisenbergJ1J2 { rows, cols, j0, k0 } => heisenberg_j1j2(rows, cols, j0, k0),
        ModelConfig::RandomTfim { n, b0, j0, sigma, seed } => random_tfim(n, b0, j0, sigma, seed),
    }
}

pub fn build_observable(cfg: &RunConfig, bundle: &ModelBundle) -> sloppy_core::Result<Observable> {
    let n = cfg.model.n_sites();
    match cfg.observable {
        ObservableConfig::TotalSz => total_sz_observable(n),
        ObservableConfig::Zz { i, j } => zz_observable(n, i, j),
        ObservableConfig::StaggeredMagnetization => staggered_magnetization(n),
        ObservableConfig::DoubleOccupancy => bundle
            .observable("D")
            .cloned()
            .ok_or_else(|| sloppy_core::Error::InvalidInput("model has no D observable".into())),
    }
}

/// Everything reported for one nominal point.
#[derive(Clone, Debug)]
pub struct PointReport {
    pub labels: Vec<String>,
    pub outcomes: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub fim: FimAnalysis,
    pub orbits: OrbitPartition,
    /// `M − 1` over all outcomes of the observable.
    pub outcome_bound: usize,
    pub cpd: CpdReport,
    pub warnings: Vec<String>,
}

impl PointReport {
    pub fn orbit_bound(&self) -> usize {
        self.orbits.orbit_count()
    }

    pub fn rank_bound(&self) -> usize {
        self.orbit_bound().min(self.outcome_bound).min(self.labels.len())
    }
}

fn chain_observable(cfg: &RunConfig) -> ChainObservable {
    match cfg.observable {
        ObservableConfig::Zz { i, j } => ChainObservable::Zz(i, j),
        _ => ChainObservable::Magnetization,
    }
}

/// Orbits of the uniform chain's terms under the symmetries that also fix
/// the observable, built from descriptors alone.
/// Orbits of the chain terms under the observable's stabilizer, and the
/// stabilizer's order.
fn chain_orbits(n: usize, boundary: Boundary, obs: ChainObservable) -> sloppy_core::Result<(OrbitPartition, usize)> {
    let mut descs: Vec<TermDescriptor> = (1..=n).map(|s| TermDescriptor::pauli(&[(s, PauliAxis::Z)])).collect();
    let bonds = if boundary == Boundary::Periodic { n } else { n - 1 };
    descs.extend((1..=bonds).map(|s| TermDescriptor::pauli(&[(s, PauliAxis::X), (s % n + 1, PauliAxis::X)])));
    let gens = match boundary {
        Boundary::Periodic => vec![SitePermutation::cyclic_shift(n, 1)],
        Boundary::Open => vec![SitePermutation::new((1..=n).rev().collect())?],
    };
    let group = close_group(n, &gens, sloppy_core::symmetry::DEFAULT_CLOSURE_CAP)?;
    let stabilizer: Vec<SitePermutation> = group
        .into_iter()
        .filter(|g| match obs {
            ChainObservable::Magnetization => true,
            ChainObservable::Zz(i, j) => {
                let (a, b) = (g.image(i), g.image(j));
                (a, b) == (i, j) || (a, b) == (j, i)
            }
        })
        .collect();
    Ok((descriptor_orbits(&descs, &stabilizer)?, stabilizer.len()))
}

fn with_cpd(fim: &FimAnalysis, labels: &[String], orbits: &OrbitPartition, warnings: &mut Vec<String>) -> sloppy_core::Result<CpdReport> {
    match cpd_extract(fim, labels, Some(orbits)) {
        Ok(r) => Ok(r),
        Err(sloppy_core::Error::OrbitMismatch { vector, orbit, spread }) => {
            warnings.push(format!(
                "dominant eigenvector {vector} is not constant on orbit {orbit} (spread {spread:e})"
            ));
            cpd_extract(fim, labels, None)
        }
        Err(e) => Err(e),
    }
}

pub fn analyze_point(cfg: &RunConfig) -> Result<PointReport, RunError> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    match cfg.engine {
        Engine::Dense => {
            let bundle = build_bundle(&cfg.model)?;
            let obs = build_observable(cfg, &bundle)?;
            let dec = decompose_observable(&obs.operator)?;
            let pa = analyze(&bundle.hamiltonian, &dec, cfg.state_spec(), &cfg.kernel_options())?;
            let group = bundle.stabilizer_of(&obs)?;
            let orbits = term_orbits(&bundle.hamiltonian, &group)?;
            let labels = bundle.hamiltonian.labels().to_vec();
            let cpd = with_cpd(&pa.fim, &labels, &orbits, &mut warnings)?;
            Ok(PointReport {
                labels,
                outcomes: pa.distribution.outcomes,
                probabilities: pa.distribution.probabilities,
                fim: pa.fim,
                orbits,
                outcome_bound: dec.len() - 1,
                cpd,
                warnings,
            })
        }
        Engine::Freefermion => {
            let ModelConfig::Tfim1d { n, b0, j0, boundary } = cfg.model else {
                return Err(ConfigError::new("engine", "freefermion needs the tfim_1d model").into());
            };
            let chain = ChainSpec::uniform(n, b0, j0, boundary.into(), cfg.state_spec())?;
            let obs = chain_observable(cfg);
            let r = chain_fim(&chain, obs, DerivativeMode::Analytic { allow_fallback: true })?;
            warnings.extend(r.warnings);
            let (orbits, _) = chain_orbits(n, boundary.into(), obs)?;
            let labels = chain.labels();
            let cpd = with_cpd(&r.fim, &labels, &orbits, &mut warnings)?;
            Ok(PointReport {
                labels,
                outcome_bound: r.distribution.len() - 1,
                outcomes: r.distribution.outcomes,
                probabilities: r.distribution.probabilities,
                fim: r.fim,
                orbits,
                cpd,
                warnings,
            })
        }
    }
}

/// Parameter labels at the configured point, without solving anything.
pub fn model_labels(cfg: &RunConfig) -> Result<Vec<String>, RunError> {
    Ok(match (cfg.engine, &cfg.model) {
        (Engine::Freefermion, &ModelConfig::Tfim1d { n, b0, j0, boundary }) => {
            ChainSpec::uniform(n, b0, j0, boundary.into(), cfg.state_spec())?.labels()
        }
        _ => build_bundle(&cfg.model)?.hamiltonian.labels().to_vec(),
    })
}

/// Evaluates every grid point on `workers` threads; the table lists the
/// points in grid order whatever order they finish in.
pub fn run_sweep(cfg: &RunConfig, workers: usize) -> Result<SweepTable, RunError> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| ConfigError::new("sweep", "sweep requires a sweep section"))?;
    let grid = sweep.grid.values();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Io(e.to_string()))?;
    let points: Vec<Result<PointReport, String>> = pool.install(|| {
        grid.par_iter()
            .map(|&x| {
                let point = cfg.with_parameter(&sweep.parameter, x).map_err(RunError::from)?;
                analyze_point(&point)
            })
            .map(|r| r.map_err(|e| e.to_string()))
            .collect()
    });
    let mut label_orders: Vec<Vec<String>> = points.iter().filter_map(|p| p.as_ref().ok()).map(|p| p.labels.clone()).collect();
    if label_orders.is_empty() {
        label_orders.push(model_labels(cfg).unwrap_or_default());
    }
    let labels = merge_label_orders(&label_orders);
    let k = labels.len();
    let records = grid
        .iter()
        .zip(points)
        .map(|(&x, p)| match p {
            Err(e) => SweepRecord::failure(x, labels.len(), e),
            Ok(p) => {
                let mut zeta = p.fim.eigenvalues().to_vec();
                zeta.resize(k, 0.0);
                let v = p.fim.eigenvector(0);
                let v1 = labels
                    .iter()
                    .map(|l| p.labels.iter().position(|q| q == l).map(|i| v[i]))
                    .collect();
                SweepRecord {
                    grid: x,
                    zeta,
                    rank: Some(p.fim.numerical_rank()),
                    trace: Some(p.fim.trace()),
                    v1,
                    error: None,
                }
            }
        })
        .collect();
    Ok(SweepTable { k, labels, records })
}

/// Sidecar describing how a sweep file was produced.
#[derive(Clone, Debug, Serialize)]
pub struct SweepMetadata {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub parameter: String,
    pub grid: Vec<f64>,
    pub columns: usize,
    pub labels: Vec<String>,
    pub failed_points: usize,
}

impl SweepMetadata {
    pub fn new(cfg: &RunConfig, table: &SweepTable) -> Self {
        let sweep = cfg.sweep.clone().unwrap_or_else(|| crate::config::SweepConfig {
            parameter: String::new(),
            grid: Default::default(),
        });
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            parameter: sweep.parameter.clone(),
            grid: sweep.grid.values(),
            columns: table.k,
            labels: table.labels.clone(),
            failed_points: table.records.iter().filter(|r| r.is_error()).count(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitReport {
    pub model: String,
    pub observable: String,
    pub group_order: usize,
    pub orbits: Vec<Vec<String>>,
    pub orbit_bound: usize,
    pub outcome_bound: usize,
    pub parameter_count: usize,
    pub rank_bound: usize,
}

pub fn run_orbits(cfg: &RunConfig) -> Result<OrbitReport, RunError> {
    cfg.validate()?;
    let (labels, orbits, outcome_bound, group_order, observable) = match (cfg.engine, &cfg.model) {
        (Engine::Freefermion, &ModelConfig::Tfim1d { n, boundary, .. }) => {
            let obs = chain_observable(cfg);
            let chain = ChainSpec::uniform(n, 1.0, 1.0, boundary.into(), cfg.state_spec())?;
            let (orbits, order) = chain_orbits(n, boundary.into(), obs)?;
            let m = match obs {
                ChainObservable::Zz(..) => 1,
                ChainObservable::Magnetization => n,
            };
            let name = match obs {
                ChainObservable::Zz(i, j) => format!("C_z({i},{j})"),
                ChainObservable::Magnetization => "S_z".into(),
            };
            (chain.labels(), orbits, m, order, name)
        }
        _ => {
            let bundle = build_bundle(&cfg.model)?;
            let obs = build_observable(cfg, &bundle)?;
            let dec = decompose_observable(&obs.operator)?;
            let group = bundle.stabilizer_of(&obs)?;
            let order = close_group(group.n_sites, &group.generators, group.closure_cap)?.len();
            let orbits = term_orbits(&bundle.hamiltonian, &group)?;
            (bundle.hamiltonian.labels().to_vec(), orbits, dec.len() - 1, order, obs.name)
        }
    };
    let members: Vec<Vec<String>> = orbits
        .members()
        .into_iter()
        .map(|m| m.into_iter().map(|i| labels[i].clone()).collect())
        .collect();
    let orbit_bound = orbits.orbit_count();
    Ok(OrbitReport {
        model: cfg.model.name().into(),
        observable,
        group_order,
        orbits: members,
        orbit_bound,
        outcome_bound,
        parameter_count: labels.len(),
        rank_bound: orbit_bound.min(outcome_bound).min(labels.len()),
    })
}
