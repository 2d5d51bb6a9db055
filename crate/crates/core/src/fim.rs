//! Outcome-probability derivatives, Fisher information and its spectral
//! analysis.

use faer::{Mat, MatRef};

use crate::equilibrium::{
    block_ground_state, equilibrium_state, hermitian_eig, outcome_distribution, OutcomeDistribution,
    SpectralDecomposition, StateSpec,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{invariant_blocks, ManyBodyOperator, ObservableDecomposition, ParameterizedHamiltonian};
use crate::rng::GaussianStream;
use crate::symmetry::OrbitPartition;

/// Outcomes with probability below this are dropped before assembling the FIM.
pub const P_TOL: f64 = 1e-14;
/// Eigenvalues above `RANK_TOL · ζ₁` count toward the numerical rank.
pub const RANK_TOL: f64 = 1e-10;
/// Eigenvalues within this factor of `ζ₁` are dominant.
pub const DOMINANCE_FACTOR: f64 = 1e3;

/// Tuning of the thermal derivative kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelOptions {
    /// Multiplies the diagonal of the kernel (exactly 1 for the correct derivative).
    pub diagonal_factor: f64,
    /// Gaps with `β|Δ|/2` at or below this use the degenerate limit.
    pub limit_threshold: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            diagonal_factor: 1.0,
            limit_threshold: 1e-8,
        }
    }
}

/// `V[k][m] = ∂p_m/∂λ_k` over the retained outcomes.
#[derive(Clone, Debug)]
pub struct DerivativeMatrix {
    values: Mat<f64>,
    retained: Vec<usize>,
}

impl DerivativeMatrix {
    pub fn new(values: Mat<f64>, retained: Vec<usize>) -> Result<Self> {
        if values.ncols() != retained.len() {
            return Err(Error::DimensionMismatch {
                expected: retained.len(),
                found: values.ncols(),
            });
        }
        Ok(Self { values, retained })
    }

    pub fn values(&self) -> MatRef<'_, f64> {
        self.values.as_ref()
    }

    /// Original outcome indices of the columns.
    pub fn retained_outcomes(&self) -> &[usize] {
        &self.retained
    }

    pub fn n_params(&self) -> usize {
        self.values.nrows()
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.values.row(k).iter().copied().collect()
    }

    /// Largest `|Σ_m V[k][m]|` over parameters.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.n_params())
            .map(|k| self.values.row(k).iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// A projector in the eigenbasis, `Tᵀ P T`.
fn project_into_basis(p: &ManyBodyOperator, t: MatRef<'_, f64>) -> Mat<f64> {
    if p.is_diagonal() {
        let rows: Vec<usize> = p
            .diagonal()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        let d = t.ncols();
        let a = Mat::from_fn(rows.len(), d, |r, c| t[(rows[r], c)]);
        let diag = p.diagonal();
        if rows.iter().all(|&i| diag[i] == 1.0) {
            return a.transpose() * &a;
        }
        let scaled = Mat::from_fn(rows.len(), d, |r, c| a[(r, c)] * diag[rows[r]]);
        return a.transpose() * &scaled;
    }
    p.conjugate_by(t)
}

fn retained_indices(p: &[f64]) -> Vec<usize> {
    (0..p.len()).filter(|&m| p[m] >= P_TOL).collect()
}

/// Thermal kernel with the Boltzmann factors folded in:
/// `W_pq = (w_p − w_q)/(γ_q − γ_p)`, `W_pp = β w_p`, with `w = e^{−β(γ−γ₁)}`.
fn thermal_kernel(gammas: &[f64], beta: f64, opts: &KernelOptions) -> Mat<f64> {
    let g1 = gammas[0];
    let d = gammas.len();
    let w: Vec<f64> = gammas.iter().map(|g| (-beta * (g - g1)).exp()).collect();
    let mut out = Mat::<f64>::zeros(d, d);
    for q in 0..d {
        out[(q, q)] = opts.diagonal_factor * beta * w[q];
        for p in 0..q {
            let (gp, gq) = (gammas[p], gammas[q]);
            let delta = (gp - gq).abs();
            let v = if beta * delta / 2.0 <= opts.limit_threshold {
                beta * (-beta * (0.5 * (gp + gq) - g1)).exp()
            } else {
                let low = if gp <= gq { w[p] } else { w[q] };
                low * (-(-beta * delta).exp_m1()) / delta
            };
            out[(p, q)] = v;
            out[(q, p)] = v;
        }
    }
    out
}

fn thermal_point(
    h: &ParameterizedHamiltonian,
    sp: &SpectralDecomposition,
    obs: &ObservableDecomposition,
    beta: f64,
    opts: &KernelOptions,
) -> Result<(OutcomeDistribution, DerivativeMatrix)> {
    StateSpec::thermal(beta)?;
    let t = sp.eigenvectors();
    let gammas = sp.eigenvalues();
    let d = gammas.len();
    let g1 = gammas[0];
    let w: Vec<f64> = gammas.iter().map(|g| (-beta * (g - g1)).exp()).collect();
    let z: f64 = w.iter().sum();
    let kernel = thermal_kernel(gammas, beta, opts);

    let projected: Vec<Mat<f64>> = obs.projectors().iter().map(|p| project_into_basis(p, t)).collect();
    let raw: Vec<f64> = projected
        .iter()
        .map(|pm| (0..d).map(|i| w[i] * pm[(i, i)]).sum::<f64>() / z)
        .collect();
    let dist = OutcomeDistribution::from_raw(obs.outcomes().to_vec(), raw)?;
    let retained = retained_indices(&dist.probabilities);

    let k_count = h.len();
    let mut v = Mat::<f64>::zeros(k_count, retained.len());
    for (k, hk) in h.terms().iter().enumerate() {
        let ht = hk.conjugate_by(t);
        let x = Mat::from_fn(d, d, |p, q| ht[(p, q)] * kernel[(p, q)]);
        let diag_sum: f64 = (0..d).map(|p| x[(p, p)]).sum();
        for (col, &m) in retained.iter().enumerate() {
            let pm = &projected[m];
            let s: f64 = (0..d)
                .map(|q| {
                    let (a, b) = (pm.col_as_slice(q), x.col_as_slice(q));
                    a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>()
                })
                .sum();
            v[(k, col)] = (-s + dist.probabilities[m] * diag_sum) / z;
        }
    }
    Ok((dist, DerivativeMatrix::new(v, retained)?))
}

fn ground_point(h: &ParameterizedHamiltonian, obs: &ObservableDecomposition) -> Result<(OutcomeDistribution, DerivativeMatrix)> {
    // the terms never couple different blocks, so only the ground block's
    // own spectrum enters the denominators
    let hn = h.assemble_nominal()?;
    let mut ops: Vec<&ManyBodyOperator> = h.terms().iter().collect();
    ops.push(&hn);
    let g = block_ground_state(&hn, &invariant_blocks(&ops))?;
    let support = &g.support;
    let t = g.spectrum.eigenvectors();
    let gammas = g.spectrum.eigenvalues();
    let b = support.len();
    let psi = g.vector(h.dim());
    let p_psi: Vec<Vec<f64>> = obs.projectors().iter().map(|p| p.mul_vec(&psi)).collect();
    let raw: Vec<f64> = p_psi.iter().map(|x| linalg::dot(x, &psi)).collect();
    let dist = OutcomeDistribution::from_raw(obs.outcomes().to_vec(), raw)?;
    let retained = retained_indices(&dist.probabilities);

    let mut v = Mat::<f64>::zeros(h.len(), retained.len());
    let mut r = vec![0.0; h.dim()];
    for (k, hk) in h.terms().iter().enumerate() {
        // (E₀ − H)⁺ H_k ψ evaluated in the block eigenbasis
        let u = hk.mul_vec(&psi);
        let mut c: Vec<f64> = (0..b).map(|p| (0..b).map(|i| t[(i, p)] * u[support[i]]).sum()).collect();
        c[0] = 0.0;
        for p in 1..b {
            c[p] /= gammas[0] - gammas[p];
        }
        for (i, &site) in support.iter().enumerate() {
            r[site] = (0..b).map(|p| t[(i, p)] * c[p]).sum();
        }
        for (col, &m) in retained.iter().enumerate() {
            v[(k, col)] = 2.0 * linalg::dot(&p_psi[m], &r);
        }
    }
    Ok((dist, DerivativeMatrix::new(v, retained)?))
}

/// Outcome distribution and derivative matrix at the nominal parameters.
pub fn derivatives(
    h: &ParameterizedHamiltonian,
    obs: &ObservableDecomposition,
    state: StateSpec,
    opts: &KernelOptions,
) -> Result<(OutcomeDistribution, DerivativeMatrix)> {
    if obs.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: obs.dim(),
        });
    }
    match state {
        StateSpec::Thermal { beta } => thermal_point(h, &hermitian_eig(&h.assemble_nominal()?)?, obs, beta, opts),
        StateSpec::Ground => ground_point(h, obs),
    }
}

pub fn thermal_derivatives(
    h: &ParameterizedHamiltonian,
    obs: &ObservableDecomposition,
    beta: f64,
) -> Result<DerivativeMatrix> {
    derivatives(h, obs, StateSpec::Thermal { beta }, &KernelOptions::default()).map(|r| r.1)
}

pub fn ground_derivatives(h: &ParameterizedHamiltonian, obs: &ObservableDecomposition) -> Result<DerivativeMatrix> {
    derivatives(h, obs, StateSpec::Ground, &KernelOptions::default()).map(|r| r.1)
}

/// Outcome distribution at an arbitrary parameter vector.
pub fn outcome_probabilities(
    h: &ParameterizedHamiltonian,
    lambda: &[f64],
    obs: &ObservableDecomposition,
    state: StateSpec,
) -> Result<OutcomeDistribution> {
    let st = equilibrium_state(&h.assemble(lambda)?, state)?;
    outcome_distribution(st.rho.as_ref(), obs)
}

/// Central finite-difference derivatives over every outcome (K × M).
///
/// The step for parameter `k` is `relative_step · max(|λ_k|, 1)`. With
/// `richardson` set, two step sizes are combined to cancel the leading
/// truncation error.
pub fn finite_difference_derivatives(
    h: &ParameterizedHamiltonian,
    obs: &ObservableDecomposition,
    state: StateSpec,
    relative_step: f64,
    richardson: bool,
) -> Result<Mat<f64>> {
    let lambda0 = h.nominal().to_vec();
    let m_count = obs.len();
    let central = |k: usize, step: f64| -> Result<Vec<f64>> {
        let mut plus = lambda0.clone();
        let mut minus = lambda0.clone();
        plus[k] += step;
        minus[k] -= step;
        let pp = outcome_probabilities(h, &plus, obs, state)?;
        let pm = outcome_probabilities(h, &minus, obs, state)?;
        Ok((0..m_count)
            .map(|m| (pp.probabilities[m] - pm.probabilities[m]) / (2.0 * step))
            .collect())
    };
    let mut out = Mat::<f64>::zeros(h.len(), m_count);
    for k in 0..h.len() {
        let step = relative_step * lambda0[k].abs().max(1.0);
        let d1 = central(k, step)?;
        let row = if richardson {
            let d2 = central(k, step / 2.0)?;
            d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect()
        } else {
            d1
        };
        for m in 0..m_count {
            out[(k, m)] = row[m];
        }
    }
    Ok(out)
}

/// Fisher information with its descending spectral decomposition.
#[derive(Clone, Debug)]
pub struct FimAnalysis {
    fim: Mat<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<f64>,
    numerical_rank: usize,
    dominant_count: usize,
}

impl FimAnalysis {
    /// Analyzes a symmetric positive-semidefinite matrix.
    pub fn from_matrix(fim: Mat<f64>) -> Result<Self> {
        if !linalg::is_exactly_symmetric(fim.as_ref()) {
            return Err(Error::InvalidInput("FIM must be symmetric".into()));
        }
        let k = fim.nrows();
        let (asc, vecs) = linalg::sym_eig(fim.as_ref())?;
        let eigenvalues: Vec<f64> = asc.iter().rev().copied().collect();
        let mut eigenvectors = Mat::from_fn(k, k, |i, j| vecs[(i, k - 1 - j)]);
        for j in 0..k {
            let mut best = 0;
            for i in 0..k {
                if eigenvectors[(i, j)].abs() > eigenvectors[(best, j)].abs() {
                    best = i;
                }
            }
            if eigenvectors[(best, j)] < 0.0 {
                for i in 0..k {
                    eigenvectors[(i, j)] = -eigenvectors[(i, j)];
                }
            }
        }
        let z1 = eigenvalues.first().copied().unwrap_or(0.0);
        let (numerical_rank, dominant_count) = if z1 > 0.0 {
            (
                eigenvalues.iter().filter(|&&z| z > RANK_TOL * z1).count(),
                eigenvalues.iter().filter(|&&z| z >= z1 / DOMINANCE_FACTOR).count(),
            )
        } else {
            (0, 0)
        };
        Ok(Self {
            fim,
            eigenvalues,
            eigenvectors,
            numerical_rank,
            dominant_count,
        })
    }

    pub fn fim(&self) -> MatRef<'_, f64> {
        self.fim.as_ref()
    }

    pub fn n_params(&self) -> usize {
        self.fim.nrows()
    }

    /// `ζ₁ ≥ ζ₂ ≥ …`
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> MatRef<'_, f64> {
        self.eigenvectors.as_ref()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.col(k).iter().copied().collect()
    }

    pub fn numerical_rank(&self) -> usize {
        self.numerical_rank
    }

    pub fn dominant_count(&self) -> usize {
        self.dominant_count
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(self.fim.as_ref())
    }
}

/// `F = V diag(1/p) Vᵀ` over the retained outcomes.
pub fn assemble_fim(v: &DerivativeMatrix, p: &OutcomeDistribution) -> Result<FimAnalysis> {
    let k = v.n_params();
    let mut scaled = Mat::<f64>::zeros(k, v.retained.len());
    for (col, &m) in v.retained.iter().enumerate() {
        let pm = *p.probabilities.get(m).ok_or(Error::DimensionMismatch {
            expected: m + 1,
            found: p.len(),
        })?;
        if pm < P_TOL {
            return Err(Error::InvalidInput(format!("outcome {m} has probability {pm:e} below threshold")));
        }
        for r in 0..k {
            scaled[(r, col)] = v.values[(r, col)] / pm;
        }
    }
    let f = &scaled * v.values.transpose();
    let sym = Mat::from_fn(k, k, |i, j| 0.5 * (f[(i, j)] + f[(j, i)]));
    FimAnalysis::from_matrix(sym)
}

/// Everything computed at one nominal point.
#[derive(Clone, Debug)]
pub struct PointAnalysis {
    pub distribution: OutcomeDistribution,
    pub derivatives: DerivativeMatrix,
    pub fim: FimAnalysis,
}

pub fn analyze(
    h: &ParameterizedHamiltonian,
    obs: &ObservableDecomposition,
    state: StateSpec,
    opts: &KernelOptions,
) -> Result<PointAnalysis> {
    let (distribution, derivatives) = derivatives(h, obs, state, opts)?;
    let fim = assemble_fim(&derivatives, &distribution)?;
    Ok(PointAnalysis {
        distribution,
        derivatives,
        fim,
    })
}

/// `D_KL(p ‖ q) = Σ_m p_m log(p_m / q_m)`.
pub fn kl_divergence(p: &OutcomeDistribution, q: &OutcomeDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            found: p.len(),
        });
    }
    let mut d = 0.0;
    for (m, (&pm, &qm)) in p.probabilities.iter().zip(&q.probabilities).enumerate() {
        if pm == 0.0 {
            continue;
        }
        if qm == 0.0 {
            return Err(Error::SupportMismatch { outcome: m });
        }
        // ln(p/q) = ln(1 + (p − q)/q) keeps precision when p ≈ q
        d += pm * ((pm - qm) / qm).ln_1p();
    }
    Ok(d)
}

/// How to evaluate `tr F` for the expected Gaussian KL divergence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceMode {
    Exact,
    Hutchinson { samples: usize, seed: u64 },
}

/// Expected second-order divergence for isotropic Gaussian parameter noise of
/// standard deviation `sigma`: `(σ²/2) tr F`.
pub fn expected_kl_gaussian(fa: &FimAnalysis, sigma: f64, mode: TraceMode) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidInput(format!("noise scale must be positive, got {sigma}")));
    }
    let f = fa.fim();
    let k = f.nrows();
    let trace = match mode {
        TraceMode::Exact => fa.trace(),
        TraceMode::Hutchinson { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidInput("Hutchinson estimate needs samples".into()));
            }
            let mut g = GaussianStream::new(seed);
            let mut acc = 0.0;
            for _ in 0..samples {
                let z = g.normals(k);
                let mut q = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        q += z[i] * f[(i, j)] * z[j];
                    }
                }
                acc += q;
            }
            acc / samples as f64
        }
    };
    Ok(0.5 * sigma * sigma * trace)
}

/// β-independent leading factor `U Λ⁻¹ Uᵀ` of the FIM as `β → 0`, with
/// `u_km = tr H_k tr P_m / d² − tr(P_m H_k) / d` and `Λ = diag(tr P_m / d)`.
pub fn high_temperature_fim(h: &ParameterizedHamiltonian, obs: &ObservableDecomposition) -> Result<Mat<f64>> {
    let d = h.dim() as f64;
    let k_count = h.len();
    let m_count = obs.len();
    let tr_p: Vec<f64> = obs.projectors().iter().map(|p| p.trace()).collect();
    let mut u = Mat::<f64>::zeros(k_count, m_count);
    for (k, hk) in h.terms().iter().enumerate() {
        let tr_h = hk.trace();
        for (m, p) in obs.projectors().iter().enumerate() {
            let tr_ph = if p.is_diagonal() {
                p.diagonal().iter().enumerate().map(|(i, &v)| v * hk.matrix()[(i, i)]).sum()
            } else {
                let mut s = 0.0;
                for j in 0..h.dim() {
                    for i in 0..h.dim() {
                        s += p.matrix()[(i, j)] * hk.matrix()[(i, j)];
                    }
                }
                s
            };
            u[(k, m)] = tr_h * tr_p[m] / (d * d) - tr_ph / d;
        }
    }
    let scaled = Mat::from_fn(k_count, m_count, |k, m| u[(k, m)] * d / tr_p[m]);
    let f = &scaled * u.transpose();
    Ok(Mat::from_fn(k_count, k_count, |i, j| 0.5 * (f[(i, j)] + f[(j, i)])))
}

/// Per-vector coefficients of a dominant composite parameter deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct CpdComponent {
    pub eigenvalue: f64,
    pub coefficients: Vec<(String, f64)>,
    /// One common coefficient per orbit, when orbits were supplied.
    pub orbit_coefficients: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct CpdReport {
    pub components: Vec<CpdComponent>,
}

pub fn cpd_extract(fa: &FimAnalysis, labels: &[String], orbits: Option<&OrbitPartition>) -> Result<CpdReport> {
    if labels.len() != fa.n_params() {
        return Err(Error::DimensionMismatch {
            expected: fa.n_params(),
            found: labels.len(),
        });
    }
    if let Some(o) = orbits {
        if o.orbit_of().len() != fa.n_params() {
            return Err(Error::DimensionMismatch {
                expected: fa.n_params(),
                found: o.orbit_of().len(),
            });
        }
    }
    let mut components = Vec::new();
    for k in 0..fa.dominant_count() {
        let v = fa.eigenvector(k);
        let coefficients = labels.iter().cloned().zip(v.iter().copied()).collect();
        let orbit_coefficients = match orbits {
            None => None,
            Some(o) => {
                let scale = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
                let mut mu = Vec::with_capacity(o.orbit_count());
                for (s, members) in o.members().iter().enumerate() {
                    let vals: Vec<f64> = members.iter().map(|&i| v[i]).collect();
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if hi - lo > 1e-6 * scale {
                        return Err(Error::OrbitMismatch {
                            vector: k,
                            orbit: s,
                            spread: hi - lo,
                        });
                    }
                    mu.push(vals.iter().sum::<f64>() / vals.len() as f64);
                }
                Some(mu)
            }
        };
        components.push(CpdComponent {
            eigenvalue: fa.eigenvalues()[k],
            coefficients,
            orbit_coefficients,
        });
    }
    Ok(CpdReport { components })
}
