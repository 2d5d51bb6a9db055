//! Dense real-symmetric many-body operators: embedded Pauli products,
//! fixed-particle-number fermion terms, parameterized Hamiltonians and
//! projector decompositions of observables.
//!
//! Spin basis convention: site `s` (1-based) of an `n`-spin register is bit
//! `n - s` of the basis index, and bit value 0 is the `σ_z = +1/2` state.
//! Pauli operators are normalized so that `{σ_α, σ_β} = δ_αβ I/2`, i.e. every
//! single-site factor has eigenvalues ±1/2.

use std::collections::HashMap;
use std::fmt;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg;
use crate::symmetry::TermDescriptor;

/// Largest spin register the dense engine will build.
pub const MAX_DENSE_SPINS: usize = 12;

#[derive(Clone, Debug)]
struct SparseRows {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    fn from_dense(m: MatRef<'_, f64>) -> Option<Self> {
        let n = m.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let budget = (n * n) / 8 + n;
        // callers pass symmetric matrices, so row i is read off column i
        for i in 0..n {
            for (j, &v) in m.col(i).iter().enumerate() {
                if v != 0.0 {
                    if cols.len() >= budget {
                        return None;
                    }
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Some(Self {
            row_ptr,
            cols,
            vals,
        })
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }
}

/// A dense real symmetric operator on a many-body Hilbert space.
#[derive(Clone)]
pub struct ManyBodyOperator {
    label: String,
    matrix: Mat<f64>,
    sparse: Option<SparseRows>,
}

impl fmt::Debug for ManyBodyOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManyBodyOperator")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .finish()
    }
}

impl ManyBodyOperator {
    /// Wraps a matrix, rejecting anything that is not square and exactly symmetric.
    pub fn from_matrix(label: impl Into<String>, matrix: Mat<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::InvalidInput("operator dimension must be positive".into()));
        }
        if !linalg::is_exactly_symmetric(matrix.as_ref()) {
            return Err(Error::InvalidInput("operator matrix is not symmetric".into()));
        }
        Ok(Self::from_symmetric(label.into(), matrix))
    }

    fn from_symmetric(label: String, matrix: Mat<f64>) -> Self {
        let sparse = SparseRows::from_dense(matrix.as_ref());
        Self {
            label,
            matrix,
            sparse,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_symmetric("I".into(), linalg::identity(dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_symmetric("0".into(), Mat::zeros(dim, dim))
    }

    pub fn diagonal_from(label: impl Into<String>, diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_symmetric(
            label.into(),
            Mat::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    pub fn is_diagonal(&self) -> bool {
        match &self.sparse {
            Some(s) => (0..self.dim()).all(|i| s.row(i).all(|(j, _)| j == i)),
            None => false,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(self.matrix.as_ref())
    }

    /// Number of stored nonzeros when the operator is sparse enough to track them.
    pub fn nonzeros(&self) -> Option<usize> {
        self.sparse.as_ref().map(|s| s.vals.len())
    }

    /// `self · b`, exploiting sparsity when the operator has few nonzeros.
    pub fn mul_mat(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(b.nrows(), self.dim());
        match &self.sparse {
            Some(s) => {
                let mut out = Mat::<f64>::zeros(self.dim(), b.ncols());
                for c in 0..b.ncols() {
                    let col = b.col(c);
                    for i in 0..self.dim() {
                        let mut acc = 0.0;
                        for (j, v) in s.row(i) {
                            acc += v * col[j];
                        }
                        out[(i, c)] = acc;
                    }
                }
                out
            }
            None => self.matrix.as_ref() * b,
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim());
        match &self.sparse {
            Some(s) => (0..self.dim())
                .map(|i| s.row(i).map(|(j, a)| a * v[j]).sum())
                .collect(),
            None => (0..self.dim())
                .map(|i| (0..self.dim()).map(|j| self.matrix[(i, j)] * v[j]).sum())
                .collect(),
        }
    }

    /// `Tᵀ · self · T` for a block of columns `T`.
    pub fn conjugate_by(&self, t: MatRef<'_, f64>) -> Mat<f64> {
        let st = self.mul_mat(t);
        t.transpose() * st
    }

    /// Weighted sum of operators sharing a dimension.
    pub fn linear_combination(
        label: impl Into<String>,
        ops: &[&ManyBodyOperator],
        coeffs: &[f64],
    ) -> Result<Self> {
        if ops.len() != coeffs.len() {
            return Err(Error::DimensionMismatch {
                expected: ops.len(),
                found: coeffs.len(),
            });
        }
        let dim = ops
            .first()
            .map(|o| o.dim())
            .ok_or_else(|| Error::InvalidInput("empty linear combination".into()))?;
        let mut m = Mat::<f64>::zeros(dim, dim);
        for (op, &c) in ops.iter().zip(coeffs) {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
            if c == 0.0 {
                continue;
            }
            match &op.sparse {
                Some(s) => {
                    for i in 0..dim {
                        for (j, v) in s.row(i) {
                            m[(i, j)] += c * v;
                        }
                    }
                }
                None => {
                    for j in 0..dim {
                        for i in 0..dim {
                            m[(i, j)] += c * op.matrix[(i, j)];
                        }
                    }
                }
            }
        }
        // identical floating-point operations on (i,j) and (j,i) keep the sum exactly symmetric
        Ok(Self::from_symmetric(label.into(), m))
    }
}

/// Spin axis of a Pauli factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub fn as_char(self) -> char {
        match self {
            PauliAxis::X => 'x',
            PauliAxis::Y => 'y',
            PauliAxis::Z => 'z',
        }
    }
}

/// Kronecker embedding of a product of normalized Pauli factors into an
/// `n_spins` register. `factors` maps 1-based sites to axes.
pub fn embed_pauli_term(n_spins: usize, factors: &[(usize, PauliAxis)]) -> Result<ManyBodyOperator> {
    if n_spins == 0 || n_spins > MAX_DENSE_SPINS {
        return Err(Error::InvalidInput(format!(
            "dense spin register must have 1..={MAX_DENSE_SPINS} spins, got {n_spins}"
        )));
    }
    let mut seen = vec![false; n_spins];
    for &(site, _) in factors {
        if site == 0 || site > n_spins {
            return Err(Error::SiteOutOfRange {
                site,
                n_sites: n_spins,
            });
        }
        if seen[site - 1] {
            return Err(Error::InvalidInput(format!("site {site} repeated in Pauli product")));
        }
        seen[site - 1] = true;
    }
    let y_count = factors.iter().filter(|(_, a)| *a == PauliAxis::Y).count();
    if y_count % 2 == 1 {
        return Err(Error::OddYCount { count: y_count });
    }
    // σ_y = i·Y' with Y' real; an even number of them contributes i^{2k} = (-1)^k.
    let global = if (y_count / 2) % 2 == 0 { 1.0 } else { -1.0 };

    let dim = 1usize << n_spins;
    let bit = |site: usize| 1usize << (n_spins - site);
    let flip_mask = factors
        .iter()
        .filter(|(_, a)| *a != PauliAxis::Z)
        .fold(0usize, |m, &(s, _)| m | bit(s));

    let mut m = Mat::<f64>::zeros(dim, dim);
    for col in 0..dim {
        let row = col ^ flip_mask;
        let mut amp = global;
        for &(site, axis) in factors {
            let up = col & bit(site) == 0;
            amp *= match axis {
                PauliAxis::Z => {
                    if up {
                        0.5
                    } else {
                        -0.5
                    }
                }
                PauliAxis::X => 0.5,
                PauliAxis::Y => {
                    if up {
                        0.5
                    } else {
                        -0.5
                    }
                }
            };
        }
        m[(row, col)] = amp;
    }
    let label = if factors.is_empty() {
        "I".to_string()
    } else {
        factors
            .iter()
            .map(|(s, a)| format!("s{}^{}", a.as_char(), s))
            .collect::<Vec<_>>()
            .join(" ")
    };
    ManyBodyOperator::from_matrix(label, m)
}

/// `H(λ) = Σ_k λ_k H_k` together with term labels, nominal values and
/// symbolic descriptors used by the symmetry analysis.
#[derive(Clone, Debug)]
pub struct ParameterizedHamiltonian {
    terms: Vec<ManyBodyOperator>,
    labels: Vec<String>,
    nominal: Vec<f64>,
    descriptors: Vec<TermDescriptor>,
    dim: usize,
}

impl ParameterizedHamiltonian {
    /// Builds a Hamiltonian whose terms carry opaque descriptors (no symmetry
    /// maps one term onto another).
    pub fn new(terms: Vec<ManyBodyOperator>, labels: Vec<String>, nominal: Vec<f64>) -> Result<Self> {
        let descriptors = labels.iter().map(|l| TermDescriptor::opaque(l)).collect();
        Self::with_descriptors(terms, labels, nominal, descriptors)
    }

    pub fn with_descriptors(
        terms: Vec<ManyBodyOperator>,
        labels: Vec<String>,
        nominal: Vec<f64>,
        descriptors: Vec<TermDescriptor>,
    ) -> Result<Self> {
        let k = terms.len();
        if k == 0 {
            return Err(Error::InvalidInput("Hamiltonian needs at least one term".into()));
        }
        for len in [labels.len(), nominal.len(), descriptors.len()] {
            if len != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: len,
                });
            }
        }
        let dim = terms[0].dim();
        if let Some(t) = terms.iter().find(|t| t.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: t.dim(),
            });
        }
        let mut seen = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if let Some(prev) = seen.insert(l.as_str(), i) {
                return Err(Error::InvalidInput(format!(
                    "duplicate term label {l:?} at positions {prev} and {i}"
                )));
            }
        }
        if nominal.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("nominal parameters must be finite".into()));
        }
        Ok(Self {
            terms,
            labels,
            nominal,
            descriptors,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[ManyBodyOperator] {
        &self.terms
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn descriptors(&self) -> &[TermDescriptor] {
        &self.descriptors
    }

    /// Same terms, different nominal point.
    pub fn with_nominal(&self, nominal: Vec<f64>) -> Result<Self> {
        if nominal.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: nominal.len(),
            });
        }
        let mut h = self.clone();
        h.nominal = nominal;
        Ok(h)
    }

    /// `Σ_k λ_k H_k`.
    pub fn assemble(&self, lambda: &[f64]) -> Result<ManyBodyOperator> {
        if lambda.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: lambda.len(),
            });
        }
        let ops: Vec<&ManyBodyOperator> = self.terms.iter().collect();
        ManyBodyOperator::linear_combination("H", &ops, lambda)
    }

    pub fn assemble_nominal(&self) -> Result<ManyBodyOperator> {
        self.assemble(&self.nominal)
    }
}

/// Groups of basis states that every operator in `ops` maps into
/// themselves: the connected components of the union of their nonzero
/// patterns. Each group is sorted; groups are ordered by first member.
pub fn invariant_blocks(ops: &[&ManyBodyOperator]) -> Vec<Vec<usize>> {
    let Some(d) = ops.first().map(|o| o.dim()) else {
        return Vec::new();
    };
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut join = |a: usize, b: usize| {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    };
    for op in ops {
        assert_eq!(op.dim(), d);
        match &op.sparse {
            Some(s) => {
                for i in 0..d {
                    for (j, _) in s.row(i) {
                        join(i, j);
                    }
                }
            }
            None => {
                for j in 0..d {
                    for (i, &v) in op.matrix.col(j).iter().enumerate() {
                        if v != 0.0 {
                            join(i, j);
                        }
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; d];
    for i in 0..d {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Free-function form of [`ParameterizedHamiltonian::assemble`].
pub fn assemble_hamiltonian(h: &ParameterizedHamiltonian, lambda: &[f64]) -> Result<ManyBodyOperator> {
    h.assemble(lambda)
}

/// An observable as a dense operator plus its symbolic form (weighted sum of
/// term descriptors) for symmetry checks.
#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub operator: ManyBodyOperator,
    pub descriptor: Vec<(TermDescriptor, f64)>,
}

/// `O = Σ_m θ_m P_m` with orthogonal projectors, outcomes ascending.
#[derive(Clone, Debug)]
pub struct ObservableDecomposition {
    outcomes: Vec<f64>,
    projectors: Vec<ManyBodyOperator>,
    multiplicities: Vec<usize>,
}

impl ObservableDecomposition {
    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn projectors(&self) -> &[ManyBodyOperator] {
        &self.projectors
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].dim()
    }

    /// `Σ_m θ_m P_m`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let d = self.dim();
        let mut m = Mat::<f64>::zeros(d, d);
        for (theta, p) in self.outcomes.iter().zip(&self.projectors) {
            m += faer::Scale(*theta) * p.matrix();
        }
        m
    }
}

fn group_sorted(values: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] >= tol {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Splits an observable into distinct-eigenvalue projectors. Eigenvalues
/// closer than `1e-9·max(1, ‖O‖₂)` are merged into one outcome.
pub fn decompose_observable(o: &ManyBodyOperator) -> Result<ObservableDecomposition> {
    let dim = o.dim();
    if o.is_diagonal() {
        let diag = o.diagonal();
        let norm = linalg::spectral_norm_from_eigs(&diag);
        let tol = 1e-9 * norm.max(1.0);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
        let mut outcomes = Vec::new();
        let mut projectors = Vec::new();
        let mut multiplicities = Vec::new();
        for g in group_sorted(&sorted, tol) {
            let mut p = vec![0.0; dim];
            for &i in &order[g.clone()] {
                p[i] = 1.0;
            }
            outcomes.push(sorted[g.clone()].iter().sum::<f64>() / g.len() as f64);
            multiplicities.push(g.len());
            projectors.push(ManyBodyOperator::diagonal_from(
                format!("P_{}", projectors.len() + 1),
                &p,
            ));
        }
        return Ok(ObservableDecomposition {
            outcomes,
            projectors,
            multiplicities,
        });
    }

    let (values, vectors) = linalg::sym_eig(o.matrix())?;
    let norm = linalg::spectral_norm_from_eigs(&values);
    let tol = 1e-9 * norm.max(1.0);
    let mut outcomes = Vec::new();
    let mut projectors = Vec::new();
    let mut multiplicities = Vec::new();
    for g in group_sorted(&values, tol) {
        let block = vectors.as_ref().subcols(g.start, g.len());
        let p = block * block.transpose();
        let sym = Mat::from_fn(dim, dim, |i, j| 0.5 * (p[(i, j)] + p[(j, i)]));
        outcomes.push(values[g.clone()].iter().sum::<f64>() / g.len() as f64);
        multiplicities.push(g.len());
        projectors.push(ManyBodyOperator::from_symmetric(
            format!("P_{}", projectors.len() + 1),
            sym,
        ));
    }
    Ok(ObservableDecomposition {
        outcomes,
        projectors,
        multiplicities,
    })
}

/// Spin label of a fermionic mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Spin {
    Up,
    Down,
}

/// Fixed `(n_up, n_down)` sector of spinful fermions on `n_sites` sites.
///
/// Basis states are `(up_bits, down_bits)` pairs with site `i` (1-based) in
/// bit `i - 1`, sorted lexicographically. Fermionic signs follow the mode
/// order `up_1 … up_n, down_1 … down_n`.
#[derive(Clone, Debug)]
pub struct FermionSector {
    n_sites: usize,
    n_up: usize,
    n_down: usize,
    basis: Vec<(u64, u64)>,
    index: HashMap<(u64, u64), usize>,
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn patterns_with_popcount(n: usize, k: usize) -> Vec<u64> {
    (0u64..(1u64 << n)).filter(|b| b.count_ones() as usize == k).collect()
}

impl FermionSector {
    pub fn new(n_sites: usize, n_up: usize, n_down: usize) -> Result<Self> {
        if n_sites == 0 || n_sites > 16 {
            return Err(Error::InvalidInput(format!(
                "fermion sector needs 1..=16 sites, got {n_sites}"
            )));
        }
        if n_up > n_sites || n_down > n_sites {
            return Err(Error::InvalidInput(format!(
                "occupations ({n_up}, {n_down}) exceed {n_sites} sites"
            )));
        }
        let ups = patterns_with_popcount(n_sites, n_up);
        let downs = patterns_with_popcount(n_sites, n_down);
        let mut basis = Vec::with_capacity(ups.len() * downs.len());
        for &u in &ups {
            for &d in &downs {
                basis.push((u, d));
            }
        }
        let index = basis.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self {
            n_sites,
            n_up,
            n_down,
            basis,
            index,
        })
    }

    /// Sector dimension without building the basis.
    pub fn dimension_of(n_sites: usize, n_up: usize, n_down: usize) -> usize {
        binomial(n_sites, n_up) * binomial(n_sites, n_down)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_up(&self) -> usize {
        self.n_up
    }

    pub fn n_down(&self) -> usize {
        self.n_down
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[(u64, u64)] {
        &self.basis
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site == 0 || site > self.n_sites {
            Err(Error::SiteOutOfRange {
                site,
                n_sites: self.n_sites,
            })
        } else {
            Ok(())
        }
    }

    fn joined(&self, state: (u64, u64)) -> u64 {
        state.0 | (state.1 << self.n_sites)
    }

    fn split(&self, bits: u64) -> (u64, u64) {
        let mask = (1u64 << self.n_sites) - 1;
        (bits & mask, bits >> self.n_sites)
    }

    fn mode(&self, site: usize, spin: Spin) -> u32 {
        match spin {
            Spin::Up => (site - 1) as u32,
            Spin::Down => (self.n_sites + site - 1) as u32,
        }
    }
}

/// A single fermionic term restricted to a sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FermionTerm {
    /// `c†_{iσ} c_{jσ} + c†_{jσ} c_{iσ}`
    Hopping { i: usize, j: usize, spin: Spin },
    /// `n_{i↑} n_{i↓}`
    DoubleOccupancy { i: usize },
}

/// Applies `c†_a c_b` to an occupation bit-string; returns the new string and sign.
fn hop(bits: u64, a: u32, b: u32) -> Option<(u64, f64)> {
    if bits & (1 << b) == 0 {
        return None;
    }
    let after = bits & !(1 << b);
    if after & (1 << a) != 0 {
        return None;
    }
    let below = |s: u64, m: u32| (s & ((1u64 << m) - 1)).count_ones();
    let parity = below(bits, b) + below(after, a);
    let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
    Some((after | (1 << a), sign))
}

pub fn fermion_sector_operator(sector: &FermionSector, term: FermionTerm) -> Result<ManyBodyOperator> {
    let dim = sector.dim();
    let mut m = Mat::<f64>::zeros(dim, dim);
    let label;
    match term {
        FermionTerm::Hopping { i, j, spin } => {
            sector.check_site(i)?;
            sector.check_site(j)?;
            if i == j {
                return Err(Error::InvalidInput(format!("hopping needs distinct sites, got {i}")));
            }
            let (a, b) = (sector.mode(i, spin), sector.mode(j, spin));
            for (col, &state) in sector.basis.iter().enumerate() {
                let bits = sector.joined(state);
                for (x, y) in [(a, b), (b, a)] {
                    if let Some((nb, sign)) = hop(bits, x, y) {
                        let row = sector.index[&sector.split(nb)];
                        m[(row, col)] += sign;
                    }
                }
            }
            let s = if spin == Spin::Up { "up" } else { "dn" };
            label = format!("hop_{s}({i},{j})");
        }
        FermionTerm::DoubleOccupancy { i } => {
            sector.check_site(i)?;
            let bit = 1u64 << (i - 1);
            for (k, &(u, d)) in sector.basis.iter().enumerate() {
                if u & bit != 0 && d & bit != 0 {
                    m[(k, k)] = 1.0;
                }
            }
            label = format!("docc({i})");
        }
    }
    ManyBodyOperator::from_matrix(label, m)
}
