//! Exact free-fermion solution of the transverse-field Ising chain
//! `H = Σ B_k σ_z^k + Σ J_j σ_x^j σ_x^{j+1}` (normalized Paulis).
//!
//! The chain maps to `A = P + Q = diag(B) + superdiag(J/2)` with `P`
//! symmetric and `Q` antisymmetric. Writing `A = U S Vᵀ`, the mode energies
//! are `Λ = S`, the rows of `Φ` are the columns of `V`, and the rows of `Ψ`
//! are the columns of `−U`. The correlation matrix `G = Ψᵀ diag(f) Φ` (with
//! `f = 1` in the ground state and `tanh(βΛ/2)` thermally) gives
//! `⟨Π_{k∈S} Z_k⟩ = det G[S, S]` for standard Pauli `Z`.
//!
//! A periodic chain is a mixture of its two fermion-parity sectors. In the
//! sector with parity `s = ⟨Π_k Z_k⟩` the wrap-around coupling enters `A` as
//! `(−1)^{n+1} s J_n / 2`, and physical expectations are projected with
//! `(1 + s Π_k Z_k)/2`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use faer::{c64, Mat, MatRef};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::equilibrium::{OutcomeDistribution, StateSpec};
use crate::error::{Error, Result};
use crate::fim::{assemble_fim, DerivativeMatrix, FimAnalysis, P_TOL};
use crate::models::Boundary;

/// Largest chain the magnetization pipeline accepts.
pub const DEFAULT_N_MAX: usize = 80;
/// Mode energies below this count as zero modes.
pub const ZERO_MODE: f64 = 1e-12;
/// Relative step of the five-point finite-difference stencil.
pub const FD_RELATIVE_STEP: f64 = 1e-3;

/// Transverse-field Ising chain with its equilibrium state.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub b: Vec<f64>,
    pub j: Vec<f64>,
    pub boundary: Boundary,
    pub state: StateSpec,
}

impl ChainSpec {
    pub fn new(b: Vec<f64>, j: Vec<f64>, boundary: Boundary, state: StateSpec) -> Result<Self> {
        let n = b.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("chain needs at least 2 spins, got {n}")));
        }
        let bonds = match boundary {
            Boundary::Open => n - 1,
            Boundary::Periodic => n,
        };
        if j.len() != bonds {
            return Err(Error::DimensionMismatch {
                expected: bonds,
                found: j.len(),
            });
        }
        if b.iter().chain(&j).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("chain parameters must be finite".into()));
        }
        if let StateSpec::Thermal { beta } = state {
            StateSpec::thermal(beta)?;
        }
        Ok(Self { b, j, boundary, state })
    }

    pub fn uniform(n: usize, b0: f64, j0: f64, boundary: Boundary, state: StateSpec) -> Result<Self> {
        let bonds = match boundary {
            Boundary::Open => n.saturating_sub(1),
            Boundary::Periodic => n,
        };
        Self::new(vec![b0; n], vec![j0; bonds], boundary, state)
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// `(B_1 … B_n, J_1 …)`, the same ordering as the dense chain model.
    pub fn parameters(&self) -> Vec<f64> {
        self.b.iter().chain(&self.j).copied().collect()
    }

    pub fn labels(&self) -> Vec<String> {
        (1..=self.n())
            .map(|i| format!("B_{i}"))
            .chain((1..=self.j.len()).map(|i| format!("J_{i}")))
            .collect()
    }

    pub fn with_parameters(&self, params: &[f64]) -> Result<Self> {
        let n = self.n();
        if params.len() != n + self.j.len() {
            return Err(Error::DimensionMismatch {
                expected: n + self.j.len(),
                found: params.len(),
            });
        }
        Self::new(params[..n].to_vec(), params[n..].to_vec(), self.boundary, self.state)
    }
}

/// The pair `(P, Q)` with `P` symmetric and `Q` antisymmetric.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    pub p: Mat<f64>,
    pub q: Mat<f64>,
}

impl QuadraticForm {
    /// `P_jj = B_j`, `P_{j,j+1} = P_{j+1,j} = Q_{j,j+1} = −Q_{j+1,j} = c_j`,
    /// with `(n, 1)` playing the role of `(j, j+1)` for a wrap coupling.
    fn with_couplings(b: &[f64], couplings: &[f64]) -> Self {
        let n = b.len();
        let mut p = Mat::from_fn(n, n, |r, c| if r == c { b[r] } else { 0.0 });
        let mut q = Mat::<f64>::zeros(n, n);
        for (j, &c) in couplings.iter().enumerate() {
            let (r, s) = (j, (j + 1) % n);
            p[(r, s)] += c;
            p[(s, r)] += c;
            q[(r, s)] += c;
            q[(s, r)] -= c;
        }
        Self { p, q }
    }

    /// The literal textbook pattern with couplings entered unscaled.
    pub fn from_pattern(b: &[f64], j: &[f64]) -> Self {
        Self::with_couplings(b, j)
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// `P + Q`.
    pub fn a(&self) -> Mat<f64> {
        &self.p + &self.q
    }
}

/// Quadratic form of the chain in normalized units: the couplings enter as
/// `J/4`, so that `A = diag(B) + superdiag(J/2)` and the uniform critical
/// point sits at `J = 2B`. The periodic wrap uses the literal pattern.
pub fn build_pq(c: &ChainSpec) -> QuadraticForm {
    let couplings: Vec<f64> = c.j.iter().map(|x| x / 4.0).collect();
    QuadraticForm::with_couplings(&c.b, &couplings)
}

/// Sign the wrap coupling takes in the parity sector `s`.
fn wrap_sign(n: usize, s: f64) -> f64 {
    if n % 2 == 1 {
        s
    } else {
        -s
    }
}

fn sector_form(c: &ChainSpec, s: f64) -> QuadraticForm {
    let n = c.n();
    let mut couplings: Vec<f64> = c.j.iter().map(|x| x / 4.0).collect();
    couplings[n - 1] *= wrap_sign(n, s);
    QuadraticForm::with_couplings(&c.b, &couplings)
}

/// Mode energies and the row-orthonormal `Φ`, `Ψ`, ascending in `Λ`.
#[derive(Clone, Debug)]
pub struct ChainDiagonalization {
    pub lambda: Vec<f64>,
    pub phi: Mat<f64>,
    pub psi: Mat<f64>,
    a: Mat<f64>,
}

impl ChainDiagonalization {
    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    /// Smallest relative gap between distinct squared mode energies.
    pub fn min_relative_gap(&self) -> f64 {
        let top = self.lambda.iter().fold(0.0_f64, |m, x| m.max(x * x)).max(f64::MIN_POSITIVE);
        self.lambda
            .windows(2)
            .map(|w| (w[1] * w[1] - w[0] * w[0]).abs() / top)
            .fold(f64::INFINITY, f64::min)
    }

    /// `ln Π_k 2 cosh(βΛ_k/2)`.
    pub fn log_partition(&self, beta: f64) -> f64 {
        self.lambda
            .iter()
            .map(|l| {
                let x = (beta * l / 2.0).abs();
                x + (-2.0 * x).exp().ln_1p()
            })
            .sum()
    }

    /// `Ψᵀ diag(f) Φ`.
    pub fn correlation(&self, f: &[f64]) -> Mat<f64> {
        let n = self.n();
        let scaled = Mat::from_fn(n, n, |k, c| f[k] * self.phi[(k, c)]);
        self.psi.transpose() * &scaled
    }

    pub fn thermal_factors(&self, beta: f64) -> Vec<f64> {
        self.lambda.iter().map(|l| (beta * l / 2.0).tanh()).collect()
    }
}

pub fn diagonalize_chain(q: &QuadraticForm) -> Result<ChainDiagonalization> {
    let n = q.n();
    if q.q.nrows() != n || q.p.ncols() != n || q.q.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q.q.nrows(),
        });
    }
    for r in 0..n {
        for c in 0..n {
            if q.p[(r, c)] != q.p[(c, r)] || q.q[(r, c)] != -q.q[(c, r)] {
                return Err(Error::InvalidInput("P must be symmetric and Q antisymmetric".into()));
            }
        }
    }
    let a = q.a();
    let svd = a.svd().map_err(|e| Error::ConvergenceFailure(format!("{e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    if let Some(&neg) = s.iter().find(|x| !x.is_finite() || **x < -1e-10) {
        return Err(Error::NegativeModeEnergy(neg));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| s[x].total_cmp(&s[y]));
    let (u, v) = (svd.U(), svd.V());
    let lambda: Vec<f64> = order.iter().map(|&k| s[k].max(0.0)).collect();
    let phi = Mat::from_fn(n, n, |k, c| v[(c, order[k])]);
    let psi = Mat::from_fn(n, n, |k, c| -u[(c, order[k])]);
    Ok(ChainDiagonalization { lambda, phi, psi, a })
}

/// A state of the chain as one Gaussian or a parity-projected pair of them.
#[derive(Clone, Debug)]
enum Ensemble {
    Single(Gaussian),
    /// `(s, relative weight, Gaussian)`; the physical state is
    /// `Σ_s w_s Π_s ϱ_s / Σ_s w_s (1 + s det G_s)/2`.
    Sectors(Vec<(f64, f64, Gaussian)>),
}

#[derive(Clone, Debug)]
struct Gaussian {
    diag: ChainDiagonalization,
    factors: Vec<f64>,
    g: Mat<f64>,
    /// Sector sign of the wrap coupling, for derivative bookkeeping.
    sector: Option<f64>,
}

impl Gaussian {
    fn new(diag: ChainDiagonalization, factors: Vec<f64>, sector: Option<f64>) -> Self {
        let g = diag.correlation(&factors);
        Self {
            diag,
            factors,
            g,
            sector,
        }
    }
}

fn det_real(m: MatRef<'_, f64>) -> f64 {
    if m.nrows() == 0 {
        1.0
    } else {
        m.determinant()
    }
}

fn submatrix(g: MatRef<'_, f64>, keep: &[usize]) -> Mat<f64> {
    Mat::from_fn(keep.len(), keep.len(), |r, c| g[(keep[r], keep[c])])
}

fn ground_threshold(diag: &ChainDiagonalization) -> f64 {
    let norm: f64 = diag.lambda.iter().sum::<f64>() / 2.0;
    1e-10 * norm.max(1.0)
}

fn build_ensemble(c: &ChainSpec) -> Result<Ensemble> {
    match (c.boundary, c.state) {
        (Boundary::Open, StateSpec::Thermal { beta }) => {
            let d = diagonalize_chain(&build_pq(c))?;
            let f = d.thermal_factors(beta);
            Ok(Ensemble::Single(Gaussian::new(d, f, None)))
        }
        (Boundary::Open, StateSpec::Ground) => {
            let d = diagonalize_chain(&build_pq(c))?;
            let gap = d.lambda[0];
            let threshold = ground_threshold(&d);
            if gap <= threshold {
                return Err(Error::DegenerateGroundState { gap, threshold });
            }
            let f = vec![1.0; c.n()];
            Ok(Ensemble::Single(Gaussian::new(d, f, None)))
        }
        (Boundary::Periodic, StateSpec::Thermal { beta }) => {
            let mut sectors = Vec::with_capacity(2);
            let mut logs = Vec::with_capacity(2);
            for s in [1.0, -1.0] {
                let d = diagonalize_chain(&sector_form(c, s))?;
                logs.push(d.log_partition(beta));
                let f = d.thermal_factors(beta);
                sectors.push((s, Gaussian::new(d, f, Some(s))));
            }
            let top = logs[0].max(logs[1]);
            Ok(Ensemble::Sectors(
                sectors
                    .into_iter()
                    .zip(logs)
                    .map(|((s, g), l)| (s, (l - top).exp(), g))
                    .collect(),
            ))
        }
        (Boundary::Periodic, StateSpec::Ground) => {
            let mut best: Vec<(f64, f64, Gaussian)> = Vec::with_capacity(2);
            let mut threshold: f64 = 0.0;
            for s in [1.0, -1.0] {
                let d = diagonalize_chain(&sector_form(c, s))?;
                threshold = threshold.max(ground_threshold(&d));
                let vac = Gaussian::new(d.clone(), vec![1.0; c.n()], Some(s));
                let parity = det_real(vac.g.as_ref()).signum();
                let base: f64 = -d.lambda.iter().sum::<f64>() / 2.0;
                // lowest excitation inside the sector flips two modes
                let (energy, gauss, internal_gap) = if parity == s {
                    (base, vac, d.lambda[0] + d.lambda.get(1).copied().unwrap_or(f64::INFINITY))
                } else {
                    let mut f = vec![1.0; c.n()];
                    f[0] = -1.0;
                    let gap = d.lambda.get(1).map_or(f64::INFINITY, |l1| {
                        let swap = l1 - d.lambda[0];
                        let pair = d.lambda.get(2).map_or(f64::INFINITY, |l2| l1 + l2);
                        swap.min(pair)
                    });
                    (base + d.lambda[0], Gaussian::new(d, f, Some(s)), gap)
                };
                best.push((energy, internal_gap, gauss));
            }
            let (lo, hi) = if best[0].0 <= best[1].0 { (0, 1) } else { (1, 0) };
            let gap = (best[hi].0 - best[lo].0).min(best[lo].1);
            if gap <= threshold {
                return Err(Error::DegenerateGroundState { gap, threshold });
            }
            Ok(Ensemble::Single(best.swap_remove(lo).2))
        }
    }
}

/// Correlation matrix of the chain's state when it is a single Gaussian.
pub fn correlation_matrix(c: &ChainSpec) -> Result<Option<Mat<f64>>> {
    Ok(match build_ensemble(c)? {
        Ensemble::Single(g) => Some(g.g),
        Ensemble::Sectors(_) => None,
    })
}

fn check_sites(n: usize, i: usize, j: usize) -> Result<()> {
    for s in [i, j] {
        if s == 0 || s > n {
            return Err(Error::SiteOutOfRange { site: s, n_sites: n });
        }
    }
    if i >= j {
        return Err(Error::InvalidInput(format!("need i < j, got ({i}, {j})")));
    }
    Ok(())
}

fn zz_single(g: MatRef<'_, f64>, i: usize, j: usize) -> f64 {
    g[(i, i)] * g[(j, j)] - g[(i, j)] * g[(j, i)]
}

/// `⟨Z_i Z_j⟩` with 0-based sites.
fn zz_expectation(e: &Ensemble, i: usize, j: usize) -> f64 {
    match e {
        Ensemble::Single(g) => zz_single(g.g.as_ref(), i, j),
        Ensemble::Sectors(sectors) => {
            let n = sectors[0].2.g.nrows();
            let rest: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
            let mut num = 0.0;
            let mut den = 0.0;
            for (s, w, g) in sectors {
                let full = det_real(g.g.as_ref());
                let rest_det = det_real(submatrix(g.g.as_ref(), &rest).as_ref());
                num += w * (zz_single(g.g.as_ref(), i, j) + s * rest_det) / 2.0;
                den += w * (1.0 + s * full) / 2.0;
            }
            num / den
        }
    }
}

/// Two-outcome distribution of `σ_z^i σ_z^j` over `θ = (−1/4, +1/4)`.
pub fn zz_correlation_distribution(c: &ChainSpec, i: usize, j: usize) -> Result<OutcomeDistribution> {
    check_sites(c.n(), i, j)?;
    let e = build_ensemble(c)?;
    zz_from_ensemble(&e, i, j)
}

fn zz_from_ensemble(e: &Ensemble, i: usize, j: usize) -> Result<OutcomeDistribution> {
    let zz = zz_expectation(e, i - 1, j - 1);
    OutcomeDistribution::from_raw(vec![-0.25, 0.25], vec![(1.0 - zz) / 2.0, (1.0 + zz) / 2.0])
}

/// How the magnetization distribution is extracted from `G`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MagnetizationMethod {
    /// Principal-minor sums from the characteristic polynomial of `G`,
    /// combined with exact expansion coefficients.
    MinorExpansion,
    /// Discrete Fourier inversion of the generating function
    /// `Σ_m p_m t^m = det((I − G)/2 + t(I + G)/2)` on the unit circle.
    Fourier,
}

fn binomial_big(n: usize, k: usize) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// `ξ_mj` such that the projector onto `m` up spins equals
/// `Σ_j ξ_mj S_j`, where `S_j` sums all `j`-fold products of `σ_z`.
///
/// Expands `C(n,m)(1/2+x)^m(1/2−x)^{n−m} = Σ_j C(n,j) ξ_mj x^j` exactly and
/// rounds once. Cached per `n`.
pub fn xi_coefficients(n: usize) -> Arc<Vec<Vec<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<Vec<f64>>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("cache poisoned").get(&n) {
        return hit.clone();
    }
    let binom: Vec<BigInt> = (0..=n).map(|k| binomial_big(n, k)).collect();
    let mut table = vec![vec![0.0; n + 1]; n + 1];
    for (m, row) in table.iter_mut().enumerate() {
        // (1 + 2x)^m (1 − 2x)^{n−m} / 2^n, coefficients of x^j
        let up: Vec<BigInt> = (0..=m).map(|i| binomial_big(m, i) << i).collect();
        let down: Vec<BigInt> = (0..=n - m)
            .map(|i| {
                let v = binomial_big(n - m, i) << i;
                if i % 2 == 1 {
                    -v
                } else {
                    v
                }
            })
            .collect();
        let mut conv = vec![BigInt::zero(); n + 1];
        for (a, x) in up.iter().enumerate() {
            for (b, y) in down.iter().enumerate() {
                conv[a + b] += x * y;
            }
        }
        for (j, coeff) in conv.into_iter().enumerate() {
            let num = coeff * &binom[m];
            let den = (&binom[j]) << n;
            row[j] = BigRational::new(num, den).to_f64().unwrap_or(f64::NAN);
        }
    }
    let table = Arc::new(table);
    cache.lock().expect("cache poisoned").insert(n, table.clone());
    table
}

/// Elementary symmetric functions `e_0 … e_n` of the eigenvalues of `a`
/// (sums of principal minors) from the Faddeev–LeVerrier recurrence.
pub fn principal_minor_sums(a: MatRef<'_, f64>) -> Vec<f64> {
    let n = a.nrows();
    // characteristic polynomial det(λI − A) = Σ c_i λ^i, c_n = 1
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = Mat::<f64>::zeros(n, n);
    for k in 1..=n {
        let mut next = a * &m;
        for i in 0..n {
            next[(i, i)] += c[n - k + 1];
        }
        m = next;
        let am = a * &m;
        let tr: f64 = (0..n).map(|i| am[(i, i)]).sum();
        c[n - k] = -tr / k as f64;
    }
    (0..=n)
        .map(|j| if j % 2 == 0 { c[n - j] } else { -c[n - j] })
        .collect()
}

fn magnetization_single(g: MatRef<'_, f64>, method: MagnetizationMethod) -> Vec<f64> {
    let n = g.nrows();
    match method {
        MagnetizationMethod::MinorExpansion => {
            let half = Mat::from_fn(n, n, |r, c| g[(r, c)] / 2.0);
            let sums = principal_minor_sums(half.as_ref());
            let xi = xi_coefficients(n);
            (0..=n)
                .map(|m| (0..=n).map(|j| xi[m][j] * sums[j]).sum())
                .collect()
        }
        MagnetizationMethod::Fourier => {
            let points = n + 1;
            let mut acc = vec![0.0; points];
            for k in 0..points {
                let t = c64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / points as f64);
                let mat = Mat::from_fn(n, n, |r, col| {
                    let id = if r == col { 1.0 } else { 0.0 };
                    let lo = c64::new((id - g[(r, col)]) / 2.0, 0.0);
                    let hi = c64::new((id + g[(r, col)]) / 2.0, 0.0);
                    lo + t * hi
                });
                let value: c64 = mat.determinant();
                for (m, slot) in acc.iter_mut().enumerate() {
                    let phase = c64::from_polar(
                        1.0,
                        -2.0 * std::f64::consts::PI * ((k * m) % points) as f64 / points as f64,
                    );
                    *slot += (value * phase).re;
                }
            }
            acc.into_iter().map(|x| x / points as f64).collect()
        }
    }
}

fn magnetization_raw(e: &Ensemble, method: MagnetizationMethod) -> Vec<f64> {
    match e {
        Ensemble::Single(g) => magnetization_single(g.g.as_ref(), method),
        Ensemble::Sectors(sectors) => {
            let n = sectors[0].2.g.nrows();
            let mut num = vec![0.0; n + 1];
            let mut den = 0.0;
            for (s, w, g) in sectors {
                let p = magnetization_single(g.g.as_ref(), method);
                for (m, pm) in p.iter().enumerate() {
                    // projector onto m up spins has parity (−1)^{n−m}
                    let parity = if (n - m) % 2 == 0 { 1.0 } else { -1.0 };
                    num[m] += w * pm * (1.0 + s * parity) / 2.0;
                }
                den += w * (1.0 + s * det_real(g.g.as_ref())) / 2.0;
            }
            num.into_iter().map(|x| x / den).collect()
        }
    }
}

fn magnetization_from_ensemble(e: &Ensemble, n: usize, method: MagnetizationMethod) -> Result<OutcomeDistribution> {
    let raw = magnetization_raw(e, method);
    let total: f64 = raw.iter().sum();
    if let Some(&bad) = raw.iter().find(|&&p| !(p >= -1e-8)) {
        return Err(Error::NumericalInstability(format!("magnetization probability {bad:e}")));
    }
    if !((total - 1.0).abs() <= 1e-8) {
        return Err(Error::NumericalInstability(format!("magnetization probabilities sum to {total}")));
    }
    let outcomes = (0..=n).map(|m| m as f64 - n as f64 / 2.0).collect();
    let clamped: Vec<f64> = raw.iter().map(|p| p.max(0.0)).collect();
    let sum: f64 = clamped.iter().sum();
    Ok(OutcomeDistribution {
        outcomes,
        probabilities: clamped.into_iter().map(|p| p / sum).collect(),
    })
}

/// Distribution of `S_z = Σ σ_z^k` over the `n + 1` outcomes `m − n/2`.
pub fn magnetization_distribution(c: &ChainSpec) -> Result<OutcomeDistribution> {
    magnetization_distribution_with(c, MagnetizationMethod::Fourier, DEFAULT_N_MAX)
}

pub fn magnetization_distribution_with(
    c: &ChainSpec,
    method: MagnetizationMethod,
    n_max: usize,
) -> Result<OutcomeDistribution> {
    if c.n() > n_max {
        return Err(Error::InvalidInput(format!("chain of {} spins exceeds limit {n_max}", c.n())));
    }
    let e = build_ensemble(c)?;
    magnetization_from_ensemble(&e, c.n(), method)
}

/// Observable measured on the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainObservable {
    /// `σ_z^i σ_z^j`, 1-based, `i < j`.
    Zz(usize, usize),
    Magnetization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Closed-form `dG/dλ`; when unavailable, either fall back to finite
    /// differences with a warning or fail.
    Analytic { allow_fallback: bool },
    FiniteDifference,
}

/// FIM of a chain together with the data it was built from.
#[derive(Clone, Debug)]
pub struct ChainFim {
    pub distribution: OutcomeDistribution,
    pub derivatives: DerivativeMatrix,
    pub fim: FimAnalysis,
    pub analytic: bool,
    pub warnings: Vec<String>,
}

fn chain_distribution(c: &ChainSpec, obs: ChainObservable) -> Result<OutcomeDistribution> {
    match obs {
        ChainObservable::Zz(i, j) => zz_correlation_distribution(c, i, j),
        ChainObservable::Magnetization => magnetization_distribution(c),
    }
}

/// Five-point central differences of every outcome probability.
fn finite_difference(c: &ChainSpec, obs: ChainObservable, retained: &[usize]) -> Result<Mat<f64>> {
    let lambda0 = c.parameters();
    let mut v = Mat::<f64>::zeros(lambda0.len(), retained.len());
    for k in 0..lambda0.len() {
        let h = FD_RELATIVE_STEP * lambda0[k].abs().max(1.0);
        let eval = |offset: f64| -> Result<Vec<f64>> {
            let mut p = lambda0.clone();
            p[k] += offset;
            Ok(chain_distribution(&c.with_parameters(&p)?, obs)?.probabilities)
        };
        let (m2, m1, p1, p2) = (eval(-2.0 * h)?, eval(-h)?, eval(h)?, eval(2.0 * h)?);
        for (col, &m) in retained.iter().enumerate() {
            v[(k, col)] = (m2[m] - 8.0 * m1[m] + 8.0 * p1[m] - p2[m]) / (12.0 * h);
        }
    }
    Ok(v)
}

/// `dG/dλ_l` for a single Gaussian, given `dA` as a list of entries.
fn correlation_derivative(gauss: &Gaussian, beta: Option<f64>, da: &[(usize, usize, f64)]) -> Mat<f64> {
    let d = &gauss.diag;
    let n = d.n();
    let a = d.a.as_ref();
    let phi = d.phi.as_ref();
    let psi = d.psi.as_ref();
    let lam = &d.lambda;
    let da_mat = {
        let mut m = Mat::<f64>::zeros(n, n);
        for &(r, c, v) in da {
            m[(r, c)] += v;
        }
        m
    };
    // dM = dAᵀA + AᵀdA in the mode basis: C = Φ dM Φᵀ
    let dm = da_mat.transpose() * a + a.transpose() * &da_mat;
    let cmat = phi * &dm * phi.transpose();
    let dlam: Vec<f64> = (0..n).map(|k| cmat[(k, k)] / (2.0 * lam[k])).collect();
    // dφ_k = Σ_{l≠k} φ_l C_lk / (Λ_k² − Λ_l²), stored as rows
    let mut dphi = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            if l == k {
                continue;
            }
            let coef = cmat[(l, k)] / (lam[k] * lam[k] - lam[l] * lam[l]);
            for c in 0..n {
                dphi[(k, c)] += coef * phi[(l, c)];
            }
        }
    }
    // ψ_k = −Aφ_k/Λ_k ⇒ dψ_k = −(dA φ_k + A dφ_k)/Λ_k − ψ_k dΛ_k/Λ_k
    let da_phi = phi * da_mat.transpose();
    let a_dphi = &dphi * a.transpose();
    let dpsi = Mat::from_fn(n, n, |k, c| {
        -(da_phi[(k, c)] + a_dphi[(k, c)]) / lam[k] - psi[(k, c)] * dlam[k] / lam[k]
    });
    let df: Vec<f64> = match beta {
        Some(beta) => (0..n)
            .map(|k| {
                let x = beta * lam[k] / 2.0;
                let sech = 1.0 / x.cosh();
                beta / 2.0 * sech * sech * dlam[k]
            })
            .collect(),
        None => vec![0.0; n],
    };
    let f = &gauss.factors;
    // G = Σ_k f_k ψ_k φ_kᵀ
    let mut dg = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        for r in 0..n {
            let x = df[k] * psi[(k, r)] + f[k] * dpsi[(k, r)];
            let y = f[k] * psi[(k, r)];
            for c in 0..n {
                dg[(r, c)] += x * phi[(k, c)] + y * dphi[(k, c)];
            }
        }
    }
    dg
}

/// Analytic derivatives of the `σ_z^i σ_z^j` distribution.
fn zz_analytic(c: &ChainSpec, gauss: &Gaussian, i: usize, j: usize, retained: &[usize]) -> Mat<f64> {
    let n = c.n();
    let beta = match c.state {
        StateSpec::Thermal { beta } => Some(beta),
        StateSpec::Ground => None,
    };
    let (i, j) = (i - 1, j - 1);
    let g = gauss.g.as_ref();
    let params = n + c.j.len();
    let mut v = Mat::<f64>::zeros(params, retained.len());
    for l in 0..params {
        let da = if l < n {
            vec![(l, l, 1.0)]
        } else {
            let b = l - n;
            let mut scale = 0.5;
            if b == n - 1 && c.boundary == Boundary::Periodic {
                scale *= wrap_sign(n, gauss.sector.unwrap_or(1.0));
            }
            vec![(b, (b + 1) % n, scale)]
        };
        let dg = correlation_derivative(gauss, beta, &da);
        let dzz = dg[(i, i)] * g[(j, j)] + g[(i, i)] * dg[(j, j)] - dg[(i, j)] * g[(j, i)] - g[(i, j)] * dg[(j, i)];
        let dp = [-dzz / 2.0, dzz / 2.0];
        for (col, &m) in retained.iter().enumerate() {
            v[(l, col)] = dp[m];
        }
    }
    v
}

/// FIM of a chain observable over all `B` and `J` parameters.
pub fn chain_fim(c: &ChainSpec, obs: ChainObservable, mode: DerivativeMode) -> Result<ChainFim> {
    if let ChainObservable::Zz(i, j) = obs {
        check_sites(c.n(), i, j)?;
    }
    let ensemble = build_ensemble(c)?;
    let distribution = match obs {
        ChainObservable::Zz(i, j) => zz_from_ensemble(&ensemble, i, j)?,
        ChainObservable::Magnetization => {
            if c.n() > DEFAULT_N_MAX {
                return Err(Error::InvalidInput(format!(
                    "chain of {} spins exceeds limit {DEFAULT_N_MAX}",
                    c.n()
                )));
            }
            magnetization_from_ensemble(&ensemble, c.n(), MagnetizationMethod::Fourier)?
        }
    };
    let retained: Vec<usize> = (0..distribution.len())
        .filter(|&m| distribution.probabilities[m] >= P_TOL)
        .collect();
    let mut warnings = Vec::new();
    let analytic_values = match (mode, obs) {
        (DerivativeMode::Analytic { allow_fallback }, ChainObservable::Zz(i, j)) => {
            let reason = match &ensemble {
                Ensemble::Sectors(_) => Some("periodic thermal states mix two parity sectors".to_string()),
                Ensemble::Single(g) => {
                    let gap = g.diag.min_relative_gap();
                    if gap < 1e-10 || g.diag.lambda[0] < ZERO_MODE {
                        Some(format!("mode spectrum is not simple (relative gap {gap:e})"))
                    } else {
                        None
                    }
                }
            };
            match (reason, &ensemble) {
                (None, Ensemble::Single(g)) => Some(zz_analytic(c, g, i, j, &retained)),
                (Some(why), _) => {
                    if !allow_fallback {
                        let gap = match &ensemble {
                            Ensemble::Single(g) => g.diag.min_relative_gap(),
                            Ensemble::Sectors(_) => 0.0,
                        };
                        return Err(Error::DegenerateQuadraticForm(gap));
                    }
                    warnings.push(format!("analytic derivatives unavailable, using finite differences: {why}"));
                    None
                }
                (None, Ensemble::Sectors(_)) => unreachable!("sector ensembles always carry a reason"),
            }
        }
        _ => None,
    };
    let analytic = analytic_values.is_some();
    let values = match analytic_values {
        Some(v) => v,
        None => finite_difference(c, obs, &retained)?,
    };
    let derivatives = DerivativeMatrix::new(values, retained)?;
    let fim = assemble_fim(&derivatives, &distribution)?;
    Ok(ChainFim {
        distribution,
        derivatives,
        fim,
        analytic,
        warnings,
    })
}

/// Many-body spectrum implied by the mode energies, ascending. Exponential
/// in `n`; meant for cross-checks on short chains.
pub fn many_body_spectrum(c: &ChainSpec) -> Result<Vec<f64>> {
    let n = c.n();
    if n > 16 {
        return Err(Error::InvalidInput("spectrum enumeration limited to 16 spins".into()));
    }
    let mut out = Vec::with_capacity(1 << n);
    let mut push_sector = |d: &ChainDiagonalization, parity: Option<f64>| {
        let vac_parity = {
            let g = d.correlation(&vec![1.0; n]);
            det_real(g.as_ref()).signum()
        };
        for mask in 0usize..(1 << n) {
            let flips = mask.count_ones();
            if let Some(s) = parity {
                let p = if flips % 2 == 0 { vac_parity } else { -vac_parity };
                if p != s {
                    continue;
                }
            }
            let e: f64 = (0..n)
                .map(|k| if mask & (1 << k) != 0 { d.lambda[k] } else { -d.lambda[k] } / 2.0)
                .sum();
            out.push(e);
        }
    };
    match c.boundary {
        Boundary::Open => push_sector(&diagonalize_chain(&build_pq(c))?, None),
        Boundary::Periodic => {
            for s in [1.0, -1.0] {
                push_sector(&diagonalize_chain(&sector_form(c, s))?, Some(s));
            }
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{equilibrium_state, outcome_distribution};
    use crate::linalg;
    use crate::models::{tfim_chain, zz_observable};
    use crate::operators::decompose_observable;
    use proptest::prelude::*;

    fn dense_distribution(c: &ChainSpec, obs: ChainObservable) -> Vec<f64> {
        let bundle = tfim_chain(c.n(), &c.b, &c.j, c.boundary).unwrap();
        let o = match obs {
            ChainObservable::Magnetization => bundle.observables[0].clone(),
            ChainObservable::Zz(i, j) => zz_observable(c.n(), i, j).unwrap(),
        };
        let dec = decompose_observable(&o.operator).unwrap();
        let st = equilibrium_state(&bundle.hamiltonian.assemble_nominal().unwrap(), c.state).unwrap();
        outcome_distribution(st.rho.as_ref(), &dec).unwrap().probabilities
    }

    #[test]
    fn two_site_pattern() {
        let q = QuadraticForm::from_pattern(&[0.3, 0.7], &[1.5]);
        assert_eq!((q.p[(0, 0)], q.p[(0, 1)], q.p[(1, 0)], q.p[(1, 1)]), (0.3, 1.5, 1.5, 0.7));
        assert_eq!((q.q[(0, 0)], q.q[(0, 1)], q.q[(1, 0)], q.q[(1, 1)]), (0.0, 1.5, -1.5, 0.0));
    }

    #[test]
    fn decoupled_modes() {
        let c = ChainSpec::new(vec![1.0, -2.0, 0.5], vec![0.0, 0.0], Boundary::Open, StateSpec::Ground).unwrap();
        let q = build_pq(&c);
        assert_eq!(linalg::frobenius(q.q.as_ref()), 0.0);
        let d = diagonalize_chain(&q).unwrap();
        assert_eq!(d.lambda, vec![0.5, 1.0, 2.0]);
        for k in 0..3 {
            let row_norm: f64 = (0..3).map(|c| d.phi[(k, c)].abs()).sum();
            assert!((row_norm - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn periodic_form_is_circulant() {
        let c = ChainSpec::uniform(4, 0.6, 1.0, Boundary::Periodic, StateSpec::Ground).unwrap();
        let q = build_pq(&c);
        for r in 0..4 {
            for s in 0..4 {
                assert_eq!(q.p[(r, s)], q.p[((r + 1) % 4, (s + 1) % 4)]);
            }
        }
    }

    #[test]
    fn mode_vectors_are_orthonormal() {
        let c = ChainSpec::new(
            vec![0.3, 0.5, 0.2, 0.9, 0.4],
            vec![1.0, 0.7, 1.3, 0.6],
            Boundary::Open,
            StateSpec::Ground,
        )
        .unwrap();
        let q = build_pq(&c);
        let d = diagonalize_chain(&q).unwrap();
        let id = linalg::identity(5);
        let pp = d.phi.transpose() * &d.phi;
        let ss = d.psi.transpose() * &d.psi;
        assert!(linalg::frobenius_diff(pp.as_ref(), id.as_ref()) < 1e-10);
        assert!(linalg::frobenius_diff(ss.as_ref(), id.as_ref()) < 1e-10);
        let m = (&q.p - &q.q) * (&q.p + &q.q);
        let lhs = &d.phi * &m;
        let rhs = Mat::from_fn(5, 5, |k, c| d.lambda[k] * d.lambda[k] * d.phi[(k, c)]);
        assert!(linalg::frobenius_diff(lhs.as_ref(), rhs.as_ref()) < 1e-9);
        // ψ_kᵀ = −Λ_k⁻¹ φ_kᵀ (P − Q)
        let pq = &d.phi * (&q.p - &q.q);
        for k in 0..5 {
            for col in 0..5 {
                assert!((d.psi[(k, col)] + pq[(k, col)] / d.lambda[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reflection_leaves_modes_unchanged() {
        let b = vec![0.3, 0.5, 0.2, 0.9];
        let j = vec![1.0, 0.7, 1.3];
        let c = ChainSpec::new(b.clone(), j.clone(), Boundary::Open, StateSpec::Ground).unwrap();
        let r = ChainSpec::new(
            b.into_iter().rev().collect(),
            j.into_iter().rev().collect(),
            Boundary::Open,
            StateSpec::Ground,
        )
        .unwrap();
        let a = diagonalize_chain(&build_pq(&c)).unwrap().lambda;
        let bb = diagonalize_chain(&build_pq(&r)).unwrap().lambda;
        for (x, y) in a.iter().zip(&bb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spectra_match_dense_chain() {
        for boundary in [Boundary::Open, Boundary::Periodic] {
            for n in [2, 3, 5, 6] {
                let b: Vec<f64> = (0..n).map(|k| 0.3 + 0.1 * k as f64).collect();
                let bonds = if boundary == Boundary::Open { n - 1 } else { n };
                let j: Vec<f64> = (0..bonds).map(|k| 1.0 - 0.07 * k as f64).collect();
                let c = ChainSpec::new(b.clone(), j.clone(), boundary, StateSpec::Ground).unwrap();
                let ff = many_body_spectrum(&c).unwrap();
                let dense = tfim_chain(n, &b, &j, boundary).unwrap();
                let (vals, _) = linalg::sym_eig(dense.hamiltonian.assemble_nominal().unwrap().matrix()).unwrap();
                assert_eq!(ff.len(), vals.len());
                for (x, y) in ff.iter().zip(&vals) {
                    assert!((x - y).abs() < 1e-10, "{boundary:?} n={n}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn distributions_match_dense() {
        let n = 6;
        for boundary in [Boundary::Open, Boundary::Periodic] {
            for state in [StateSpec::Thermal { beta: 1.0 }, StateSpec::Thermal { beta: 10.0 }, StateSpec::Ground] {
                let c = ChainSpec::uniform(n, 0.3, 1.0, boundary, state).unwrap();
                for obs in [ChainObservable::Magnetization, ChainObservable::Zz(2, 5)] {
                    let ff = chain_distribution(&c, obs).unwrap().probabilities;
                    let dense = dense_distribution(&c, obs);
                    for (x, y) in ff.iter().zip(&dense) {
                        assert!((x - y).abs() < 1e-10, "{boundary:?} {state:?} {obs:?}: {x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn infinite_temperature_limits() {
        let c = ChainSpec::uniform(7, 0.4, 1.0, Boundary::Open, StateSpec::Thermal { beta: 1e-12 }).unwrap();
        let zz = zz_correlation_distribution(&c, 2, 6).unwrap();
        assert!((zz.probabilities[0] - 0.5).abs() < 1e-10);
        let m = magnetization_distribution(&c).unwrap();
        let binom = [1.0, 7.0, 21.0, 35.0, 35.0, 21.0, 7.0, 1.0];
        for (p, b) in m.probabilities.iter().zip(binom) {
            assert!((p - b / 128.0).abs() < 1e-10);
        }
    }

    #[test]
    fn decoupled_ground_aligns_with_fields() {
        let c = ChainSpec::uniform(5, 1.0, 0.0, Boundary::Open, StateSpec::Ground).unwrap();
        let zz = zz_correlation_distribution(&c, 1, 4).unwrap();
        assert!(zz.probabilities[0].abs() < 1e-15);
        assert!((zz.probabilities[1] - 1.0).abs() < 1e-15);
        let m = magnetization_distribution(&c).unwrap();
        assert!((m.probabilities[0] - 1.0).abs() < 1e-12);
        assert_eq!(m.outcomes[0], -2.5);
    }

    #[test]
    fn minor_expansion_agrees_on_short_chains() {
        let c = ChainSpec::uniform(8, 0.3, 1.0, Boundary::Open, StateSpec::Thermal { beta: 1.0 }).unwrap();
        let a = magnetization_distribution_with(&c, MagnetizationMethod::MinorExpansion, 80).unwrap();
        let b = magnetization_distribution_with(&c, MagnetizationMethod::Fourier, 80).unwrap();
        for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn fourier_route_exact_for_independent_spins() {
        // J = 0: every spin is up independently with q = (1 − tanh(βB/2))/2
        let (n, b0, beta) = (80, 1.0, 3.0);
        let c = ChainSpec::uniform(n, b0, 0.0, Boundary::Open, StateSpec::Thermal { beta }).unwrap();
        let p = magnetization_distribution(&c).unwrap().probabilities;
        let q: f64 = (1.0 - (beta * b0 / 2.0).tanh()) / 2.0;
        let mut ln_binom = 0.0;
        for (m, pm) in p.iter().enumerate() {
            if m > 0 {
                ln_binom += ((n - m + 1) as f64 / m as f64).ln();
            }
            let want = (ln_binom + m as f64 * q.ln() + (n - m) as f64 * (1.0 - q).ln()).exp();
            assert!((pm - want).abs() < 1e-12, "m={m}: {pm} vs {want}");
        }
    }

    #[test]
    fn minor_expansion_loses_precision_on_long_chains() {
        let c = ChainSpec::uniform(60, 1.0, 0.1, Boundary::Open, StateSpec::Thermal { beta: 10.0 }).unwrap();
        assert!(magnetization_distribution_with(&c, MagnetizationMethod::Fourier, 80).is_ok());
        let raw = magnetization_raw(&build_ensemble(&c).unwrap(), MagnetizationMethod::MinorExpansion);
        assert!(raw.iter().any(|&p| p < -1e-12));
    }

    #[test]
    fn xi_rows_reproduce_binomial_weights() {
        // with every σ_z replaced by its mean x the projector sums reduce to
        // C(n,m)(1/2+x)^m(1/2−x)^{n−m}; at x = 0 only j = 0 survives
        let n = 6;
        let xi = xi_coefficients(n);
        for m in 0..=n {
            let c: f64 = (0..m).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
            assert!((xi[m][0] - c / 64.0).abs() < 1e-15);
        }
        let col_sum: f64 = (0..=n).map(|m| xi[m][3]).sum();
        assert_eq!(col_sum, 0.0);
    }

    #[test]
    fn principal_minors_of_diagonal() {
        let a = Mat::from_fn(3, 3, |r, c| if r == c { (r + 1) as f64 } else { 0.0 });
        let e = principal_minor_sums(a.as_ref());
        assert_eq!(e, vec![1.0, 6.0, 11.0, 6.0]);
    }

    #[test]
    fn analytic_matches_finite_difference() {
        for (boundary, state) in [
            (Boundary::Open, StateSpec::Thermal { beta: 1.0 }),
            (Boundary::Open, StateSpec::Ground),
            (Boundary::Periodic, StateSpec::Ground),
        ] {
            let c = ChainSpec::new(
                vec![0.3, 0.35, 0.4, 0.45, 0.5, 0.55],
                if boundary == Boundary::Open { vec![1.0, 0.9, 1.1, 0.95, 1.05] } else { vec![1.0, 0.9, 1.1, 0.95, 1.05, 0.98] },
                boundary,
                state,
            )
            .unwrap();
            let obs = ChainObservable::Zz(2, 5);
            let a = chain_fim(&c, obs, DerivativeMode::Analytic { allow_fallback: false }).unwrap();
            assert!(a.analytic);
            let f = chain_fim(&c, obs, DerivativeMode::FiniteDifference).unwrap();
            let scale = linalg::frobenius(f.derivatives.values());
            let diff = linalg::frobenius_diff(a.derivatives.values(), f.derivatives.values());
            assert!(diff < 1e-8 * scale, "{boundary:?} {state:?}: {diff} vs {scale}");
        }
    }

    #[test]
    fn degenerate_modes_fall_back_or_fail() {
        let c = ChainSpec::uniform(4, 1.0, 0.0, Boundary::Open, StateSpec::Thermal { beta: 1.0 }).unwrap();
        let obs = ChainObservable::Zz(1, 3);
        assert!(matches!(
            chain_fim(&c, obs, DerivativeMode::Analytic { allow_fallback: false }),
            Err(Error::DegenerateQuadraticForm(_))
        ));
        let r = chain_fim(&c, obs, DerivativeMode::Analytic { allow_fallback: true }).unwrap();
        assert!(!r.analytic);
        assert_eq!(r.warnings.len(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn correlation_entries_bounded(
            b in proptest::collection::vec(-1.5f64..1.5, 6),
            j in proptest::collection::vec(-1.5f64..1.5, 5),
            beta in 0.05f64..20.0,
        ) {
            let c = ChainSpec::new(b, j, Boundary::Open, StateSpec::Thermal { beta }).unwrap();
            let g = correlation_matrix(&c).unwrap().unwrap();
            for r in 0..6 {
                for s in 0..6 {
                    prop_assert!(g[(r, s)].abs() <= 1.0 + 1e-9);
                }
            }
        }

        #[test]
        fn magnetization_normalized(b0 in 0.05f64..1.5, j0 in 0.1f64..2.0, n in 10usize..50) {
            let c = ChainSpec::uniform(n, b0, j0, Boundary::Open, StateSpec::Thermal { beta: 1.0 }).unwrap();
            let raw = magnetization_raw(&build_ensemble(&c).unwrap(), MagnetizationMethod::Fourier);
            prop_assert!((raw.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            prop_assert!(raw.iter().all(|&p| p > -1e-12));
        }
    }
}
