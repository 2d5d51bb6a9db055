//! Spectral decompositions, thermal and ground states, and outcome
//! distributions `p_m = tr(P_m ϱ)`.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{invariant_blocks, ManyBodyOperator, ObservableDecomposition};

/// `H = T Γ Tᵀ` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<f64>,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> MatRef<'_, f64> {
        self.eigenvectors.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn spectral_norm(&self) -> f64 {
        linalg::spectral_norm_from_eigs(&self.eigenvalues)
    }

    /// `γ₂ − γ₁`, or infinity for a one-dimensional space.
    pub fn ground_gap(&self) -> f64 {
        if self.eigenvalues.len() < 2 {
            f64::INFINITY
        } else {
            self.eigenvalues[1] - self.eigenvalues[0]
        }
    }

    /// Gap below which the ground state counts as degenerate.
    pub fn degeneracy_threshold(&self) -> f64 {
        1e-10 * self.spectral_norm().max(1.0)
    }

    pub fn check_nondegenerate_ground(&self) -> Result<()> {
        let gap = self.ground_gap();
        let threshold = self.degeneracy_threshold();
        if gap <= threshold {
            Err(Error::DegenerateGroundState { gap, threshold })
        } else {
            Ok(())
        }
    }

    pub fn ground_vector(&self) -> Vec<f64> {
        self.eigenvectors.col(0).iter().copied().collect()
    }

    /// `T diag(f(γ)) Tᵀ`.
    pub fn apply_function(&self, f: impl Fn(f64) -> f64) -> Mat<f64> {
        let d = self.dim();
        let t = self.eigenvectors.as_ref();
        let scaled = Mat::from_fn(d, d, |i, j| t[(i, j)] * f(self.eigenvalues[j]));
        let m = &scaled * t.transpose();
        Mat::from_fn(d, d, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }
}

pub fn hermitian_eig(h: &ManyBodyOperator) -> Result<SpectralDecomposition> {
    let (eigenvalues, eigenvectors) = linalg::sym_eig(h.matrix())?;
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Which equilibrium state a model is prepared in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StateSpec {
    Thermal { beta: f64 },
    Ground,
}

impl StateSpec {
    pub fn thermal(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidInput(format!("inverse temperature must be positive, got {beta}")));
        }
        Ok(StateSpec::Thermal { beta })
    }
}

/// Normalized Boltzmann weights `e^{−β(γ_i−γ₁)} / Σ_j e^{−β(γ_j−γ₁)}`.
pub fn boltzmann_weights(eigenvalues: &[f64], beta: f64) -> Vec<f64> {
    let g1 = eigenvalues[0];
    let w: Vec<f64> = eigenvalues.iter().map(|g| (-beta * (g - g1)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Minimum separation between the lowest levels of two invariant blocks
/// before the ground state counts as ambiguous, relative to `max(1, ‖H‖)`.
/// Well above the backward error of the eigensolver, far below any gap that
/// enters a perturbative denominator.
pub const CROSS_BLOCK_RESOLUTION: f64 = 1e-12;

/// The ground state of `H` found block by block.
#[derive(Clone, Debug)]
pub struct BlockGround {
    /// Basis indices of the block holding the ground state.
    pub support: Vec<usize>,
    /// Spectrum of `H` restricted to `support`.
    pub spectrum: SpectralDecomposition,
    /// Largest |eigenvalue| over all blocks, i.e. `‖H‖`.
    pub norm: f64,
}

impl BlockGround {
    pub fn energy(&self) -> f64 {
        self.spectrum.eigenvalues[0]
    }

    /// Ground vector in the full basis; zero off the support.
    pub fn vector(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for (k, &i) in self.support.iter().enumerate() {
            v[i] = self.spectrum.eigenvectors[(k, 0)];
        }
        v
    }
}

/// Ground state of `h`, diagonalizing each of `blocks` separately.
///
/// `blocks` must partition the basis into subspaces `h` leaves invariant.
/// The ground state is rejected as degenerate if the two lowest levels of
/// its own block are closer than `1e-10·max(1, ‖H‖)`, or if another block's
/// lowest level is within [`CROSS_BLOCK_RESOLUTION`]`·max(1, ‖H‖)`.
pub fn block_ground_state(h: &ManyBodyOperator, blocks: &[Vec<usize>]) -> Result<BlockGround> {
    let m = h.matrix();
    let mut best: Option<(Vec<usize>, SpectralDecomposition)> = None;
    let mut second_floor = f64::INFINITY;
    let mut norm = 0.0_f64;
    for block in blocks {
        let sub = Mat::from_fn(block.len(), block.len(), |a, b| m[(block[a], block[b])]);
        let (eigenvalues, eigenvectors) = linalg::sym_eig(sub.as_ref())?;
        let sp = SpectralDecomposition {
            eigenvalues,
            eigenvectors,
        };
        norm = norm.max(sp.spectral_norm());
        let low = sp.eigenvalues[0];
        match &best {
            Some((_, b)) if low >= b.eigenvalues[0] => second_floor = second_floor.min(low),
            _ => {
                if let Some((_, b)) = &best {
                    second_floor = second_floor.min(b.eigenvalues[0]);
                }
                best = Some((block.clone(), sp));
            }
        }
    }
    let (support, spectrum) = best.ok_or_else(|| Error::InvalidInput("no basis states".into()))?;
    let scale = norm.max(1.0);
    let cross = second_floor - spectrum.eigenvalues[0];
    if cross <= CROSS_BLOCK_RESOLUTION * scale {
        return Err(Error::DegenerateGroundState {
            gap: cross,
            threshold: CROSS_BLOCK_RESOLUTION * scale,
        });
    }
    let inner = spectrum.ground_gap();
    if inner <= 1e-10 * scale {
        return Err(Error::DegenerateGroundState {
            gap: inner,
            threshold: 1e-10 * scale,
        });
    }
    Ok(BlockGround {
        support,
        spectrum,
        norm,
    })
}

/// A density matrix with the spectral data it was built from.
#[derive(Clone, Debug)]
pub struct EquilibriumState {
    pub spec: StateSpec,
    /// Basis indices `spectrum` lives on: everything for thermal states, the
    /// ground state's invariant block otherwise.
    pub support: Vec<usize>,
    pub spectrum: SpectralDecomposition,
    /// Occupation of each eigenvector (Boltzmann weights, or a one-hot ground).
    pub weights: Vec<f64>,
    pub rho: Mat<f64>,
}

pub fn equilibrium_state(h: &ManyBodyOperator, s: StateSpec) -> Result<EquilibriumState> {
    match s {
        StateSpec::Thermal { .. } => state_from_spectrum(hermitian_eig(h)?, s),
        StateSpec::Ground => {
            let g = block_ground_state(h, &invariant_blocks(&[h]))?;
            let d = h.dim();
            let psi = g.vector(d);
            let mut weights = vec![0.0; g.support.len()];
            weights[0] = 1.0;
            Ok(EquilibriumState {
                spec: s,
                support: g.support,
                spectrum: g.spectrum,
                weights,
                rho: Mat::from_fn(d, d, |i, j| psi[i] * psi[j]),
            })
        }
    }
}

/// Equilibrium state from a full-basis spectrum.
pub fn state_from_spectrum(spectrum: SpectralDecomposition, s: StateSpec) -> Result<EquilibriumState> {
    let d = spectrum.dim();
    let weights = match s {
        StateSpec::Thermal { beta } => {
            StateSpec::thermal(beta)?;
            boltzmann_weights(spectrum.eigenvalues(), beta)
        }
        StateSpec::Ground => {
            spectrum.check_nondegenerate_ground()?;
            let mut w = vec![0.0; d];
            w[0] = 1.0;
            w
        }
    };
    let rho = match s {
        StateSpec::Ground => {
            let psi = spectrum.eigenvectors().col(0);
            Mat::from_fn(d, d, |i, j| psi[i] * psi[j])
        }
        StateSpec::Thermal { .. } => {
            let t = spectrum.eigenvectors();
            let scaled = Mat::from_fn(d, d, |i, j| t[(i, j)] * weights[j]);
            let m = &scaled * t.transpose();
            Mat::from_fn(d, d, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
        }
    };
    Ok(EquilibriumState {
        spec: s,
        support: (0..d).collect(),
        spectrum,
        weights,
        rho,
    })
}

/// Outcome values with their probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    pub outcomes: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    /// Clamps roundoff negatives and renormalizes; larger violations are errors.
    pub fn from_raw(outcomes: Vec<f64>, raw: Vec<f64>) -> Result<Self> {
        if outcomes.len() != raw.len() {
            return Err(Error::DimensionMismatch {
                expected: outcomes.len(),
                found: raw.len(),
            });
        }
        let total: f64 = raw.iter().sum();
        if !((total - 1.0).abs() < 1e-10) {
            return Err(Error::NotAState { trace: total });
        }
        if let Some(&neg) = raw.iter().find(|&&p| p < -1e-12) {
            return Err(Error::NumericalInstability(format!("probability {neg:e} below zero")));
        }
        let clamped: Vec<f64> = raw.into_iter().map(|p| p.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        Ok(Self {
            outcomes,
            probabilities: clamped.into_iter().map(|p| p / total).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn mean(&self) -> f64 {
        linalg::dot(&self.outcomes, &self.probabilities)
    }
}

/// `tr(A B)` for symmetric `B`, summed column by column.
fn trace_product(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s
}

pub fn outcome_distribution(rho: MatRef<'_, f64>, obs: &ObservableDecomposition) -> Result<OutcomeDistribution> {
    if rho.nrows() != obs.dim() || rho.ncols() != obs.dim() {
        return Err(Error::DimensionMismatch {
            expected: obs.dim(),
            found: rho.nrows(),
        });
    }
    let tr = linalg::trace(rho);
    if !((tr - 1.0).abs() <= 1e-10) {
        return Err(Error::NotAState { trace: tr });
    }
    let raw = obs
        .projectors()
        .iter()
        .map(|p| {
            if p.is_diagonal() {
                p.diagonal()
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(i, &v)| v * rho[(i, i)])
                    .sum()
            } else {
                trace_product(p.matrix(), rho)
            }
        })
        .collect();
    OutcomeDistribution::from_raw(obs.outcomes().to_vec(), raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{decompose_observable, embed_pauli_term, PauliAxis};
    use proptest::prelude::*;

    fn z(n: usize, s: usize) -> ManyBodyOperator {
        embed_pauli_term(n, &[(s, PauliAxis::Z)]).unwrap()
    }

    fn total_sz(n: usize) -> ManyBodyOperator {
        let ops: Vec<_> = (1..=n).map(|s| z(n, s)).collect();
        let refs: Vec<_> = ops.iter().collect();
        ManyBodyOperator::linear_combination("Sz", &refs, &vec![1.0; n]).unwrap()
    }

    #[test]
    fn sorted_spectrum_of_sigma_z() {
        let sp = hermitian_eig(&z(1, 1)).unwrap();
        assert_eq!(sp.eigenvalues(), &[-0.5, 0.5]);
        let t = sp.eigenvectors();
        assert_eq!(t[(1, 0)].abs(), 1.0);
        assert_eq!(t[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn shift_moves_eigenvalues_only() {
        let h = embed_pauli_term(2, &[(1, PauliAxis::X), (2, PauliAxis::X)]).unwrap();
        let id = ManyBodyOperator::identity(4);
        let shifted = ManyBodyOperator::linear_combination("H", &[&h, &id], &[1.0, 3.0]).unwrap();
        let a = hermitian_eig(&h).unwrap();
        let b = hermitian_eig(&shifted).unwrap();
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            assert!((y - x - 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_hamiltonian_gives_maximally_mixed_state() {
        let st = equilibrium_state(&ManyBodyOperator::zeros(8), StateSpec::Thermal { beta: 3.0 }).unwrap();
        let target = faer::Scale(1.0 / 8.0) * linalg::identity(8);
        assert!(linalg::frobenius_diff(st.rho.as_ref(), target.as_ref()) < 1e-15);
    }

    #[test]
    fn two_level_gibbs_weight() {
        let st = equilibrium_state(&z(1, 1), StateSpec::Thermal { beta: 2.0 }).unwrap();
        let dec = decompose_observable(&z(1, 1)).unwrap();
        let p = outcome_distribution(st.rho.as_ref(), &dec).unwrap();
        let e = std::f64::consts::E;
        let want = e.powi(-1) / (e.powi(-1) + e);
        assert!((p.probabilities[1] - want).abs() < 1e-15);
        assert!((p.probabilities[1] - 0.11920).abs() < 1e-5);
    }

    #[test]
    fn infinite_temperature_is_binomial() {
        let n = 5;
        let dec = decompose_observable(&total_sz(n)).unwrap();
        let rho = faer::Scale(1.0 / 32.0) * linalg::identity(32);
        let p = outcome_distribution(rho.as_ref(), &dec).unwrap();
        let binom = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0];
        for (pm, c) in p.probabilities.iter().zip(binom) {
            assert!((pm - c / 32.0).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_ground_is_rejected() {
        let h = ManyBodyOperator::zeros(4);
        assert!(matches!(
            equilibrium_state(&h, StateSpec::Ground),
            Err(Error::DegenerateGroundState { .. })
        ));
    }

    #[test]
    fn cross_block_splitting_is_resolved_down_to_floor() {
        let chain = |n, b| crate::models::tfim_1d(n, b, 1.0, crate::models::Boundary::Open).unwrap();
        // splitting 5e-11: accepted, ground restricted to one parity block
        let h = chain(5, 0.005).hamiltonian.assemble_nominal().unwrap();
        let st = equilibrium_state(&h, StateSpec::Ground).unwrap();
        assert_eq!(st.support.len(), 16);
        assert!((st.rho.as_ref() * st.rho.as_ref() - st.rho.as_ref()).norm_l2() < 1e-12);
        // splitting 5e-13: below the floor
        let h = chain(6, 0.005).hamiltonian.assemble_nominal().unwrap();
        assert!(matches!(
            equilibrium_state(&h, StateSpec::Ground),
            Err(Error::DegenerateGroundState { .. })
        ));
    }

    #[test]
    fn ground_of_fields_points_down() {
        let n = 3;
        let h = total_sz(n);
        let st = equilibrium_state(&h, StateSpec::Ground).unwrap();
        let dec = decompose_observable(&h).unwrap();
        let p = outcome_distribution(st.rho.as_ref(), &dec).unwrap();
        assert_eq!(p.outcomes[0], -1.5);
        assert!((p.probabilities[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_state_rejected() {
        let dec = decompose_observable(&z(1, 1)).unwrap();
        let rho = linalg::identity(2);
        assert!(matches!(
            outcome_distribution(rho.as_ref(), &dec),
            Err(Error::NotAState { .. })
        ));
        assert!(StateSpec::thermal(0.0).is_err());
        assert!(StateSpec::thermal(f64::NAN).is_err());
    }

    fn random_symmetric(seed: &[f64], d: usize) -> ManyBodyOperator {
        let m = Mat::from_fn(d, d, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            seed[(a * d + b) % seed.len()]
        });
        ManyBodyOperator::from_matrix("R", m).unwrap()
    }

    proptest! {
        #[test]
        fn thermal_state_properties(seed in proptest::collection::vec(-1.0f64..1.0, 16), beta in 0.01f64..20.0) {
            let h = random_symmetric(&seed, 4);
            let st = equilibrium_state(&h, StateSpec::Thermal { beta }).unwrap();
            prop_assert!((linalg::trace(st.rho.as_ref()) - 1.0).abs() < 1e-10);
            let comm = st.rho.as_ref() * h.matrix() - h.matrix() * st.rho.as_ref();
            prop_assert!(linalg::frobenius(comm.as_ref()) < 1e-9);
            let (vals, _) = linalg::sym_eig(st.rho.as_ref()).unwrap();
            prop_assert!(vals[0] > -1e-15);
        }

        #[test]
        fn eig_reconstructs(seed in proptest::collection::vec(-1.0f64..1.0, 25)) {
            let h = random_symmetric(&seed, 5);
            let sp = hermitian_eig(&h).unwrap();
            let t = sp.eigenvectors();
            let tt = t.transpose() * t;
            prop_assert!(linalg::frobenius_diff(tt.as_ref(), linalg::identity(5).as_ref()) < 1e-10);
            let rec = sp.apply_function(|g| g);
            prop_assert!(linalg::frobenius_diff(rec.as_ref(), h.matrix()) <= 1e-9 * linalg::frobenius(h.matrix()).max(1e-300));
        }

        #[test]
        fn small_beta_approaches_mixed_state(seed in proptest::collection::vec(-1.0f64..1.0, 9)) {
            let h = random_symmetric(&seed, 3);
            let mixed = faer::Scale(1.0 / 3.0) * linalg::identity(3);
            let dist = |beta: f64| {
                let st = equilibrium_state(&h, StateSpec::Thermal { beta }).unwrap();
                linalg::frobenius_diff(st.rho.as_ref(), mixed.as_ref())
            };
            let (a, b) = (dist(1e-3), dist(1e-4));
            prop_assert!(b <= a * 0.11 + 1e-15);
        }
    }
}
