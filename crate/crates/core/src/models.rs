//! Factories for the studied quantum simulation models, each bundled with
//! observables, nominal parameters and lattice symmetry generators.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::operators::{
    embed_pauli_term, fermion_sector_operator, FermionSector, FermionTerm, ManyBodyOperator, Observable,
    ParameterizedHamiltonian, PauliAxis, Spin, MAX_DENSE_SPINS,
};
use crate::rng::GaussianStream;
use crate::symmetry::{close_group, SitePermutation, SymmetryGroupSpec, TermDescriptor};

/// Largest Hubbard sector the factory will build.
pub const MAX_SECTOR_DIM: usize = 2500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Open,
    Periodic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelMetadata {
    pub rows: usize,
    pub cols: usize,
    pub boundary: Boundary,
    pub seed: Option<u64>,
}

impl ModelMetadata {
    pub fn n_sites(&self) -> usize {
        self.rows * self.cols
    }
}

/// A Hamiltonian with its observables and symmetry generators.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub name: String,
    pub hamiltonian: ParameterizedHamiltonian,
    pub observables: Vec<Observable>,
    pub symmetry: SymmetryGroupSpec,
    pub metadata: ModelMetadata,
}

impl ModelBundle {
    pub fn observable(&self, name: &str) -> Option<&Observable> {
        self.observables.iter().find(|o| o.name == name)
    }

    pub fn add_observable(&mut self, obs: Observable) -> Result<()> {
        if obs.operator.dim() != self.hamiltonian.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.hamiltonian.dim(),
                found: obs.operator.dim(),
            });
        }
        self.observables.retain(|o| o.name != obs.name);
        self.observables.push(obs);
        Ok(())
    }

    /// Elements of the bundled group that also leave `obs` invariant.
    pub fn stabilizer_of(&self, obs: &Observable) -> Result<SymmetryGroupSpec> {
        let group = close_group(self.symmetry.n_sites, &self.symmetry.generators, self.symmetry.closure_cap)?;
        let generators = group
            .into_iter()
            .filter(|g| !g.is_identity() && preserves(obs, g))
            .collect();
        SymmetryGroupSpec::new(self.symmetry.n_sites, generators, self.symmetry.spin_basis)
    }
}

fn preserves(obs: &Observable, g: &SitePermutation) -> bool {
    let canon = |d: &[(TermDescriptor, f64)]| {
        let mut v: Vec<(TermDescriptor, u64)> = d.iter().map(|(t, w)| (t.clone(), w.to_bits())).collect();
        v.sort();
        v
    };
    let image: Vec<(TermDescriptor, f64)> = obs.descriptor.iter().map(|(t, w)| (t.permuted(g), *w)).collect();
    canon(&obs.descriptor) == canon(&image)
}

fn check_dense_spins(n: usize) -> Result<()> {
    if n == 0 || n > MAX_DENSE_SPINS {
        return Err(Error::InvalidInput(format!(
            "dense spin models need 1..={MAX_DENSE_SPINS} spins, got {n}"
        )));
    }
    Ok(())
}

/// Builds a spin observable `Σ w · (Pauli product)`.
fn pauli_observable(name: &str, n: usize, parts: &[(Vec<(usize, PauliAxis)>, f64)]) -> Result<Observable> {
    let ops = parts
        .iter()
        .map(|(f, _)| embed_pauli_term(n, f))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ManyBodyOperator> = ops.iter().collect();
    let weights: Vec<f64> = parts.iter().map(|p| p.1).collect();
    let operator = ManyBodyOperator::linear_combination(name, &refs, &weights)?;
    Ok(Observable {
        name: name.into(),
        operator,
        descriptor: parts.iter().map(|(f, w)| (TermDescriptor::pauli(f), *w)).collect(),
    })
}

/// `S_z = Σ_i σ_z^i`.
pub fn total_sz_observable(n: usize) -> Result<Observable> {
    check_dense_spins(n)?;
    let parts: Vec<_> = (1..=n).map(|s| (vec![(s, PauliAxis::Z)], 1.0)).collect();
    pauli_observable("S_z", n, &parts)
}

/// `C_z(i, j) = σ_z^i σ_z^j`.
pub fn zz_observable(n: usize, i: usize, j: usize) -> Result<Observable> {
    check_dense_spins(n)?;
    if i == j {
        return Err(Error::InvalidInput(format!("correlation needs two distinct sites, got {i}")));
    }
    pauli_observable(
        &format!("C_z({i},{j})"),
        n,
        &[(vec![(i, PauliAxis::Z), (j, PauliAxis::Z)], 1.0)],
    )
}

struct TermList {
    terms: Vec<ManyBodyOperator>,
    labels: Vec<String>,
    nominal: Vec<f64>,
    descriptors: Vec<TermDescriptor>,
}

impl TermList {
    fn new() -> Self {
        Self {
            terms: Vec::new(),
            labels: Vec::new(),
            nominal: Vec::new(),
            descriptors: Vec::new(),
        }
    }

    fn push(&mut self, op: ManyBodyOperator, label: String, nominal: f64, descriptor: TermDescriptor) {
        self.terms.push(op.with_label(label.clone()));
        self.labels.push(label);
        self.nominal.push(nominal);
        self.descriptors.push(descriptor);
    }

    fn push_pauli(&mut self, n: usize, factors: &[(usize, PauliAxis)], label: String, nominal: f64) -> Result<()> {
        let op = embed_pauli_term(n, factors)?;
        self.push(op, label, nominal, TermDescriptor::pauli(factors));
        Ok(())
    }

    fn build(self) -> Result<ParameterizedHamiltonian> {
        ParameterizedHamiltonian::with_descriptors(self.terms, self.labels, self.nominal, self.descriptors)
    }
}

fn chain_generators(n: usize, boundary: Boundary) -> Vec<SitePermutation> {
    match boundary {
        Boundary::Periodic => vec![SitePermutation::cyclic_shift(n, 1)],
        Boundary::Open => {
            let r = SitePermutation::new((1..=n).rev().collect()).expect("reversal is a permutation");
            if r.is_identity() {
                Vec::new()
            } else {
                vec![r]
            }
        }
    }
}

/// Transverse-field Ising chain `Σ B_i σ_z^i + Σ J_i σ_x^i σ_x^{i+1}` with
/// uniform nominal parameters.
pub fn tfim_1d(n: usize, b0: f64, j0: f64, boundary: Boundary) -> Result<ModelBundle> {
    let b = vec![b0; n];
    let j = vec![j0; if boundary == Boundary::Periodic { n } else { n.saturating_sub(1) }];
    let mut bundle = tfim_chain(n, &b, &j, boundary)?;
    bundle.symmetry = SymmetryGroupSpec::new(n, chain_generators(n, boundary), true)?;
    Ok(bundle)
}

/// Ising chain with arbitrary nominal fields and couplings and no symmetry.
pub fn tfim_chain(n: usize, b: &[f64], j: &[f64], boundary: Boundary) -> Result<ModelBundle> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("chain needs at least 2 spins, got {n}")));
    }
    check_dense_spins(n)?;
    let bonds = if boundary == Boundary::Periodic { n } else { n - 1 };
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if j.len() != bonds {
        return Err(Error::DimensionMismatch {
            expected: bonds,
            found: j.len(),
        });
    }
    let mut t = TermList::new();
    for s in 1..=n {
        t.push_pauli(n, &[(s, PauliAxis::Z)], format!("B_{s}"), b[s - 1])?;
    }
    for s in 1..=bonds {
        let next = s % n + 1;
        t.push_pauli(n, &[(s, PauliAxis::X), (next, PauliAxis::X)], format!("J_{s}"), j[s - 1])?;
    }
    Ok(ModelBundle {
        name: "tfim_1d".into(),
        hamiltonian: t.build()?,
        observables: vec![total_sz_observable(n)?],
        symmetry: SymmetryGroupSpec::trivial(n, true),
        metadata: ModelMetadata {
            rows: 1,
            cols: n,
            boundary,
            seed: None,
        },
    })
}

/// Row-major site index (1-based) on a `rows × cols` lattice.
fn site(cols: usize, r: usize, c: usize) -> usize {
    r * cols + c + 1
}

/// Lattice symmetries of an open rectangle: the full square group for square
/// lattices, the two mirrors otherwise. Identity generators are dropped.
fn rectangle_generators(rows: usize, cols: usize) -> Vec<SitePermutation> {
    let n = rows * cols;
    let build = |f: &dyn Fn(usize, usize) -> (usize, usize)| {
        let mut m = vec![0; n];
        for r in 0..rows {
            for c in 0..cols {
                let (r2, c2) = f(r, c);
                m[site(cols, r, c) - 1] = site(cols, r2, c2);
            }
        }
        SitePermutation::new(m).expect("lattice map is a permutation")
    };
    let mut gens = Vec::new();
    if rows == cols {
        gens.push(build(&|r, c| (c, rows - 1 - r)));
    }
    gens.push(build(&|r, c| (r, cols - 1 - c)));
    gens.push(build(&|r, c| (rows - 1 - r, c)));
    gens.retain(|g| !g.is_identity());
    gens.dedup();
    gens
}

/// Translations of a periodic rectangle along each non-trivial direction.
fn torus_generators(rows: usize, cols: usize) -> Vec<SitePermutation> {
    let n = rows * cols;
    let shift = |dr: usize, dc: usize| {
        let mut m = vec![0; n];
        for r in 0..rows {
            for c in 0..cols {
                m[site(cols, r, c) - 1] = site(cols, (r + dr) % rows, (c + dc) % cols);
            }
        }
        SitePermutation::new(m).expect("translation is a permutation")
    };
    let mut gens = Vec::new();
    if cols > 1 {
        gens.push(shift(0, 1));
    }
    if rows > 1 {
        gens.push(shift(1, 0));
    }
    gens
}

/// Unique nearest-neighbour bonds `(i, j)` with `i < j`, horizontal bonds first.
fn lattice_bonds(rows: usize, cols: usize, boundary: Boundary) -> Vec<(usize, usize)> {
    let periodic = boundary == Boundary::Periodic;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut add = |a: usize, b: usize| {
        let key = (a.min(b), a.max(b));
        if a != b && seen.insert(key) {
            out.push(key);
        }
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                add(site(cols, r, c), site(cols, r, c + 1));
            } else if periodic && cols > 1 {
                add(site(cols, r, c), site(cols, r, 0));
            }
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            if r + 1 < rows {
                add(site(cols, r, c), site(cols, r + 1, c));
            } else if periodic && rows > 1 {
                add(site(cols, r, c), site(cols, 0, c));
            }
        }
    }
    out
}

/// Open-boundary 2D transverse-field Ising model on a `rows × cols` lattice.
pub fn tfim_2d(rows: usize, cols: usize, b0: f64, j0: f64) -> Result<ModelBundle> {
    let n = rows * cols;
    check_dense_spins(n)?;
    let mut t = TermList::new();
    for s in 1..=n {
        t.push_pauli(n, &[(s, PauliAxis::Z)], format!("B_{s}"), b0)?;
    }
    for (i, j) in lattice_bonds(rows, cols, Boundary::Open) {
        t.push_pauli(n, &[(i, PauliAxis::X), (j, PauliAxis::X)], format!("J_{{{i},{j}}}"), j0)?;
    }
    Ok(ModelBundle {
        name: "tfim_2d".into(),
        hamiltonian: t.build()?,
        observables: vec![total_sz_observable(n)?],
        symmetry: SymmetryGroupSpec::new(n, rectangle_generators(rows, cols), true)?,
        metadata: ModelMetadata {
            rows,
            cols,
            boundary: Boundary::Open,
            seed: None,
        },
    })
}

/// Fermi–Hubbard model in a fixed `(n_up, n_down)` sector with one
/// spin-summed hopping parameter per bond (nominal `−t0`) and one on-site
/// repulsion per site (nominal `U0`). The observable `D` is the double
/// occupancy fraction `(2/n) Σ n_{i↑} n_{i↓}`.
pub fn hubbard_2d(
    rows: usize,
    cols: usize,
    t0: f64,
    u0: f64,
    n_up: usize,
    n_down: usize,
    boundary: Boundary,
) -> Result<ModelBundle> {
    let n = rows * cols;
    if n == 0 || n > 16 {
        return Err(Error::InvalidInput(format!("Hubbard lattice needs 1..=16 sites, got {n}")));
    }
    if n_up > n || n_down > n {
        return Err(Error::InvalidInput(format!("occupations ({n_up}, {n_down}) exceed {n} sites")));
    }
    let dim = FermionSector::dimension_of(n, n_up, n_down);
    if dim > MAX_SECTOR_DIM {
        return Err(Error::SectorTooLarge {
            dim,
            max: MAX_SECTOR_DIM,
        });
    }
    let sector = FermionSector::new(n, n_up, n_down)?;
    let mut t = TermList::new();
    let mut docc = Vec::with_capacity(n);
    for i in 1..=n {
        let op = fermion_sector_operator(&sector, FermionTerm::DoubleOccupancy { i })?;
        docc.push(op.clone());
        t.push(op, format!("U_{i}"), u0, TermDescriptor::on_sites("docc", &[i], 'd'));
    }
    for (i, j) in lattice_bonds(rows, cols, boundary) {
        let up = fermion_sector_operator(&sector, FermionTerm::Hopping { i, j, spin: Spin::Up })?;
        let dn = fermion_sector_operator(&sector, FermionTerm::Hopping { i, j, spin: Spin::Down })?;
        let op = ManyBodyOperator::linear_combination("hop", &[&up, &dn], &[1.0, 1.0])?;
        t.push(op, format!("t_{{{i},{j}}}"), -t0, TermDescriptor::on_sites("hop", &[i, j], 'h'));
    }
    let w = 2.0 / n as f64;
    let refs: Vec<&ManyBodyOperator> = docc.iter().collect();
    let d_op = ManyBodyOperator::linear_combination("D", &refs, &vec![w; n])?;
    let d_obs = Observable {
        name: "D".into(),
        operator: d_op,
        descriptor: (1..=n).map(|i| (TermDescriptor::on_sites("docc", &[i], 'd'), w)).collect(),
    };
    let generators = match boundary {
        Boundary::Periodic => torus_generators(rows, cols),
        Boundary::Open => rectangle_generators(rows, cols),
    };
    Ok(ModelBundle {
        name: "hubbard_2d".into(),
        hamiltonian: t.build()?,
        observables: vec![d_obs],
        symmetry: SymmetryGroupSpec::new(n, generators, false)?,
        metadata: ModelMetadata {
            rows,
            cols,
            boundary,
            seed: None,
        },
    })
}

fn dot_factors(i: usize, j: usize) -> [Vec<(usize, PauliAxis)>; 3] {
    [PauliAxis::X, PauliAxis::Y, PauliAxis::Z].map(|a| vec![(i, a), (j, a)])
}

fn dot_operator(n: usize, i: usize, j: usize) -> Result<ManyBodyOperator> {
    let ops = dot_factors(i, j)
        .iter()
        .map(|f| embed_pauli_term(n, f))
        .collect::<Result<Vec<_>>>()?;
    ManyBodyOperator::linear_combination("dot", &[&ops[0], &ops[1], &ops[2]], &[1.0, 1.0, 1.0])
}

/// Staggered magnetization `M_s = Σ_{i<j} (−1)^{j−i} σ^i·σ^j` with row-major
/// site numbering.
pub fn staggered_magnetization(n: usize) -> Result<Observable> {
    check_dense_spins(n)?;
    let dim = 1usize << n;
    let mut ops = Vec::new();
    let mut weights = Vec::new();
    let mut descriptor = Vec::new();
    for j in 1..=n {
        for i in 1..j {
            let w = if (j - i) % 2 == 0 { 1.0 } else { -1.0 };
            ops.push(dot_operator(n, i, j)?);
            weights.push(w);
            descriptor.push((TermDescriptor::on_sites("dot", &[i, j], 's'), w));
        }
    }
    let operator = if ops.is_empty() {
        ManyBodyOperator::zeros(dim)
    } else {
        let refs: Vec<&ManyBodyOperator> = ops.iter().collect();
        ManyBodyOperator::linear_combination("M_s", &refs, &weights)?
    };
    Ok(Observable {
        name: "M_s".into(),
        operator: operator.with_label("M_s"),
        descriptor,
    })
}

/// Diagonal next-nearest-neighbour pairs `(i, j)`, `i < j`, of an open lattice.
fn diagonal_bonds(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols {
            if c + 1 < cols {
                out.push((site(cols, r, c), site(cols, r + 1, c + 1)));
            }
            if c > 0 {
                out.push((site(cols, r, c), site(cols, r + 1, c - 1)));
            }
        }
    }
    out
}

/// Open-boundary J1–J2 Heisenberg model with the staggered magnetization.
pub fn heisenberg_j1j2(rows: usize, cols: usize, j0: f64, k0: f64) -> Result<ModelBundle> {
    let n = rows * cols;
    check_dense_spins(n)?;
    let mut t = TermList::new();
    for (i, j) in lattice_bonds(rows, cols, Boundary::Open) {
        t.push(
            dot_operator(n, i, j)?,
            format!("J_{{{i},{j}}}"),
            j0,
            TermDescriptor::on_sites("dot", &[i, j], 's'),
        );
    }
    for (i, j) in diagonal_bonds(rows, cols) {
        t.push(
            dot_operator(n, i, j)?,
            format!("K_{{{i},{j}}}"),
            k0,
            TermDescriptor::on_sites("dot", &[i, j], 's'),
        );
    }
    let ms = staggered_magnetization(n)?;
    let mut bundle = ModelBundle {
        name: "heisenberg_j1j2".into(),
        hamiltonian: t.build()?,
        observables: vec![ms.clone()],
        symmetry: SymmetryGroupSpec::new(n, rectangle_generators(rows, cols), true)?,
        metadata: ModelMetadata {
            rows,
            cols,
            boundary: Boundary::Open,
            seed: None,
        },
    };
    // keep only the lattice symmetries that also fix the observable
    bundle.symmetry = bundle.stabilizer_of(&ms)?;
    Ok(bundle)
}

/// Periodic Ising chain with Gaussian disorder of width `sigma` on every
/// field and coupling. Fields are drawn first, then couplings.
pub fn random_tfim(n: usize, b0: f64, j0: f64, sigma: f64, seed: u64) -> Result<ModelBundle> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("disorder width must be nonnegative, got {sigma}")));
    }
    let mut g = GaussianStream::new(seed);
    let b: Vec<f64> = g.normals(n).into_iter().map(|x| b0 + sigma * x).collect();
    let j: Vec<f64> = g.normals(n).into_iter().map(|x| j0 + sigma * x).collect();
    let mut bundle = tfim_chain(n, &b, &j, Boundary::Periodic)?;
    bundle.name = "random_tfim".into();
    bundle.metadata.seed = Some(seed);
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::symmetry::{term_orbits, verify_invariance, InvarianceMode};

    #[test]
    fn tfim_1d_sizes() {
        let per = tfim_1d(10, 0.5, 1.0, Boundary::Periodic).unwrap();
        assert_eq!(per.hamiltonian.len(), 20);
        assert_eq!(per.symmetry.close().unwrap().len(), 10);
        let open = tfim_1d(10, 0.5, 1.0, Boundary::Open).unwrap();
        assert_eq!(open.hamiltonian.len(), 19);
    }

    #[test]
    fn two_spin_open_chain_matrix() {
        let b = tfim_1d(2, 1.0, 1.0, Boundary::Open).unwrap();
        let h = b.hamiltonian.assemble_nominal().unwrap();
        // σz⊗1 + 1⊗σz = diag(1, 0, 0, -1); σx⊗σx = antidiag(1/4)
        for i in 0..4 {
            for j in 0..4 {
                let want = match (i, j) {
                    (0, 0) => 1.0,
                    (3, 3) => -1.0,
                    _ if i + j == 3 => 0.25,
                    _ => 0.0,
                };
                assert_eq!(h.matrix()[(i, j)], want);
            }
        }
    }

    #[test]
    fn tfim_2d_counts() {
        let b = tfim_2d(3, 3, 0.5, 1.0).unwrap();
        assert_eq!(b.hamiltonian.len(), 21);
        assert_eq!(b.symmetry.close().unwrap().len(), 8);
        assert_eq!(term_orbits(&b.hamiltonian, &b.symmetry).unwrap().orbit_count(), 5);
        let small = tfim_2d(2, 2, 0.5, 1.0).unwrap();
        assert_eq!(small.hamiltonian.len(), 8);
        assert_eq!(term_orbits(&small.hamiltonian, &small.symmetry).unwrap().orbit_count(), 2);
    }

    #[test]
    fn single_row_lattice_is_an_open_chain() {
        let row = tfim_2d(1, 4, 0.3, 1.0).unwrap();
        let chain = tfim_1d(4, 0.3, 1.0, Boundary::Open).unwrap();
        let a = row.hamiltonian.assemble_nominal().unwrap();
        let b = chain.hamiltonian.assemble_nominal().unwrap();
        assert_eq!(linalg::frobenius_diff(a.matrix(), b.matrix()), 0.0);
        assert_eq!(row.symmetry.generators, chain.symmetry.generators);
    }

    #[test]
    fn hubbard_sector_and_orbits() {
        let b = hubbard_2d(2, 3, 1.0, 4.0, 3, 3, Boundary::Periodic).unwrap();
        assert_eq!(b.hamiltonian.dim(), 400);
        assert_eq!(b.hamiltonian.len(), 6 + 3 + 6);
        assert_eq!(term_orbits(&b.hamiltonian, &b.symmetry).unwrap().orbit_count(), 3);
        let d = crate::operators::decompose_observable(&b.observables[0].operator).unwrap();
        let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        assert_eq!(d.len(), 4);
        for (o, w) in d.outcomes().iter().zip(want) {
            assert!((o - w).abs() < 1e-12);
        }
    }

    #[test]
    fn hubbard_rejects_large_sectors() {
        assert!(matches!(
            hubbard_2d(3, 4, 1.0, 4.0, 6, 6, Boundary::Open),
            Err(Error::SectorTooLarge { .. })
        ));
    }

    #[test]
    fn j1j2_structure() {
        let b = heisenberg_j1j2(3, 3, 1.0, 0.5).unwrap();
        assert_eq!(b.hamiltonian.len(), 12 + 8);
        assert_eq!(b.symmetry.close().unwrap().len(), 8);
        assert_eq!(term_orbits(&b.hamiltonian, &b.symmetry).unwrap().orbit_count(), 4);
        let plaquette = heisenberg_j1j2(2, 2, 1.0, 0.5).unwrap();
        let labels = plaquette.hamiltonian.labels();
        assert_eq!(labels.iter().filter(|l| l.starts_with('J')).count(), 4);
        assert_eq!(labels.iter().filter(|l| l.starts_with('K')).count(), 2);
    }

    #[test]
    fn random_tfim_determinism() {
        let a = random_tfim(10, 0.5, 1.0, 0.2, 17).unwrap();
        let b = random_tfim(10, 0.5, 1.0, 0.2, 17).unwrap();
        let bits = |m: &ModelBundle| m.hamiltonian.nominal().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&random_tfim(10, 0.5, 1.0, 0.2, 18).unwrap()));
        assert!(a.symmetry.generators.is_empty());
        let clean = random_tfim(6, 0.5, 1.0, 0.0, 3).unwrap();
        let reference = tfim_1d(6, 0.5, 1.0, Boundary::Periodic).unwrap();
        assert_eq!(clean.hamiltonian.nominal(), reference.hamiltonian.nominal());
        assert_eq!(clean.hamiltonian.labels(), reference.hamiltonian.labels());
    }

    #[test]
    fn disorder_breaks_translation() {
        let r = random_tfim(6, 0.5, 1.0, 0.2, 1).unwrap();
        let shift = SymmetryGroupSpec::new(6, vec![SitePermutation::cyclic_shift(6, 1)], true).unwrap();
        assert!(matches!(
            verify_invariance(&r.hamiltonian, &r.observables[0], &shift, InvarianceMode::Symbolic),
            Err(Error::NotASymmetry { .. })
        ));
        assert!(matches!(
            verify_invariance(&r.hamiltonian, &r.observables[0], &shift, InvarianceMode::Dense),
            Err(Error::NotASymmetry { .. })
        ));
    }

    #[test]
    fn open_chain_is_not_translation_invariant() {
        let b = tfim_1d(5, 0.5, 1.0, Boundary::Open).unwrap();
        let shift = SymmetryGroupSpec::new(5, vec![SitePermutation::cyclic_shift(5, 1)], true).unwrap();
        for mode in [InvarianceMode::Symbolic, InvarianceMode::Dense] {
            assert!(matches!(
                verify_invariance(&b.hamiltonian, &b.observables[0], &shift, mode),
                Err(Error::NotASymmetry { .. })
            ));
        }
    }

    #[test]
    fn every_bundle_is_invariant() {
        let bundles = vec![
            tfim_1d(6, 0.5, 1.0, Boundary::Periodic).unwrap(),
            tfim_1d(6, 0.5, 1.0, Boundary::Open).unwrap(),
            tfim_2d(2, 3, 0.5, 1.0).unwrap(),
            tfim_2d(3, 3, 0.5, 1.0).unwrap(),
            heisenberg_j1j2(3, 3, 1.0, 0.5).unwrap(),
            hubbard_2d(2, 3, 1.0, 4.0, 3, 3, Boundary::Periodic).unwrap(),
            hubbard_2d(2, 2, 1.0, 4.0, 2, 2, Boundary::Open).unwrap(),
            random_tfim(6, 0.5, 1.0, 0.3, 9).unwrap(),
        ];
        for b in &bundles {
            for obs in &b.observables {
                verify_invariance(&b.hamiltonian, obs, &b.symmetry, InvarianceMode::Symbolic).unwrap();
                if b.symmetry.spin_basis {
                    verify_invariance(&b.hamiltonian, obs, &b.symmetry, InvarianceMode::Dense).unwrap();
                }
            }
        }
    }

    #[test]
    fn zero_next_nearest_coupling_is_plain_heisenberg() {
        let b = heisenberg_j1j2(2, 3, 1.0, 0.0).unwrap();
        let h = b.hamiltonian.assemble_nominal().unwrap();
        let n = 6;
        let ops: Vec<_> = lattice_bonds(2, 3, Boundary::Open)
            .into_iter()
            .map(|(i, j)| dot_operator(n, i, j).unwrap())
            .collect();
        let refs: Vec<_> = ops.iter().collect();
        let nn = ManyBodyOperator::linear_combination("H", &refs, &vec![1.0; ops.len()]).unwrap();
        assert_eq!(linalg::frobenius_diff(h.matrix(), nn.matrix()), 0.0);
    }
}
