//! Site-permutation symmetries, term orbits and rank bounds.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::fim::FimAnalysis;
use crate::operators::{Observable, ObservableDecomposition, ParameterizedHamiltonian, PauliAxis};

/// Symbolic form of a Hamiltonian term: a kind tag plus `(site, local tag)`
/// factors kept sorted so that descriptors compare as sets.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermDescriptor {
    pub kind: String,
    pub factors: Vec<(usize, char)>,
}

impl TermDescriptor {
    pub fn new(kind: impl Into<String>, mut factors: Vec<(usize, char)>) -> Self {
        factors.sort_unstable();
        Self {
            kind: kind.into(),
            factors,
        }
    }

    pub fn pauli(factors: &[(usize, PauliAxis)]) -> Self {
        Self::new("pauli", factors.iter().map(|&(s, a)| (s, a.as_char())).collect())
    }

    /// A descriptor no site permutation can move.
    pub fn opaque(label: &str) -> Self {
        Self::new(format!("opaque:{label}"), Vec::new())
    }

    /// A term of the given kind acting on a set of sites with one shared tag.
    pub fn on_sites(kind: impl Into<String>, sites: &[usize], tag: char) -> Self {
        Self::new(kind, sites.iter().map(|&s| (s, tag)).collect())
    }

    pub fn max_site(&self) -> usize {
        self.factors.iter().map(|f| f.0).max().unwrap_or(0)
    }

    pub fn permuted(&self, g: &SitePermutation) -> Self {
        Self::new(
            self.kind.clone(),
            self.factors.iter().map(|&(s, t)| (g.image(s), t)).collect(),
        )
    }
}

/// Bijection on sites `1..=n`; `mapping[i - 1]` is the image of site `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SitePermutation {
    mapping: Vec<usize>,
}

impl SitePermutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m == 0 || m > n {
                return Err(Error::SiteOutOfRange { site: m, n_sites: n });
            }
            if seen[m - 1] {
                return Err(Error::InvalidInput(format!("site {m} appears twice in permutation")));
            }
            seen[m - 1] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (1..=n).collect(),
        }
    }

    /// `i ↦ i + shift (mod n)` on a ring.
    pub fn cyclic_shift(n: usize, shift: usize) -> Self {
        Self {
            mapping: (0..n).map(|i| (i + shift) % n + 1).collect(),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.mapping.len()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn image(&self, site: usize) -> usize {
        self.mapping[site - 1]
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &m)| m == i + 1)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SitePermutation) -> SitePermutation {
        assert_eq!(self.n_sites(), other.n_sites());
        SitePermutation {
            mapping: other.mapping.iter().map(|&s| self.image(s)).collect(),
        }
    }

    pub fn inverse(&self) -> SitePermutation {
        let mut inv = vec![0; self.n_sites()];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m - 1] = i + 1;
        }
        SitePermutation { mapping: inv }
    }
}

pub const DEFAULT_CLOSURE_CAP: usize = 1_000_000;

/// Generators of a site-permutation group.
#[derive(Clone, Debug)]
pub struct SymmetryGroupSpec {
    pub n_sites: usize,
    pub generators: Vec<SitePermutation>,
    pub closure_cap: usize,
    /// Whether the Hilbert space is the `2^n` spin product basis, which makes
    /// dense verification possible.
    pub spin_basis: bool,
}

impl SymmetryGroupSpec {
    pub fn new(n_sites: usize, generators: Vec<SitePermutation>, spin_basis: bool) -> Result<Self> {
        if let Some(g) = generators.iter().find(|g| g.n_sites() != n_sites) {
            return Err(Error::DimensionMismatch {
                expected: n_sites,
                found: g.n_sites(),
            });
        }
        Ok(Self {
            n_sites,
            generators,
            closure_cap: DEFAULT_CLOSURE_CAP,
            spin_basis,
        })
    }

    pub fn trivial(n_sites: usize, spin_basis: bool) -> Self {
        Self {
            n_sites,
            generators: Vec::new(),
            closure_cap: DEFAULT_CLOSURE_CAP,
            spin_basis,
        }
    }

    pub fn close(&self) -> Result<Vec<SitePermutation>> {
        close_group(self.n_sites, &self.generators, self.closure_cap)
    }
}

/// Breadth-first closure of the generated group, sorted with the identity first.
pub fn close_group(n_sites: usize, gens: &[SitePermutation], cap: usize) -> Result<Vec<SitePermutation>> {
    if let Some(g) = gens.iter().find(|g| g.n_sites() != n_sites) {
        return Err(Error::DimensionMismatch {
            expected: n_sites,
            found: g.n_sites(),
        });
    }
    let id = SitePermutation::identity(n_sites);
    let mut seen: BTreeSet<SitePermutation> = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(id.clone());
    queue.push_back(id);
    while let Some(g) = queue.pop_front() {
        for h in gens {
            let next = h.compose(&g);
            if !seen.contains(&next) {
                if seen.len() >= cap {
                    return Err(Error::CapExceeded { cap });
                }
                seen.insert(next.clone());
                queue.push_back(next);
            }
        }
    }
    // the identity mapping is lexicographically smallest, so it comes first
    Ok(seen.into_iter().collect())
}

/// Partition of term indices into symmetry orbits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitPartition {
    orbit_of: Vec<usize>,
    orbit_count: usize,
}

impl OrbitPartition {
    pub fn singletons(k: usize) -> Self {
        Self {
            orbit_of: (0..k).collect(),
            orbit_count: k,
        }
    }

    /// Builds a partition from explicit orbit ids, which must be `0..count`
    /// in order of first appearance.
    pub fn from_assignment(orbit_of: Vec<usize>) -> Result<Self> {
        let mut next = 0;
        for &s in &orbit_of {
            if s > next {
                return Err(Error::InvalidInput(format!("orbit id {s} skips {next}")));
            }
            if s == next {
                next += 1;
            }
        }
        Ok(Self {
            orbit_of,
            orbit_count: next,
        })
    }

    pub fn orbit_of(&self) -> &[usize] {
        &self.orbit_of
    }

    pub fn orbit_count(&self) -> usize {
        self.orbit_count
    }

    /// Term indices grouped by orbit id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.orbit_count];
        for (k, &s) in self.orbit_of.iter().enumerate() {
            out[s].push(k);
        }
        out
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

fn nominal_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn descriptor_index(h: &ParameterizedHamiltonian) -> HashMap<&TermDescriptor, Vec<usize>> {
    let mut map: HashMap<&TermDescriptor, Vec<usize>> = HashMap::new();
    for (k, d) in h.descriptors().iter().enumerate() {
        map.entry(d).or_default().push(k);
    }
    map
}

/// Maps each term through `g`; errors when an image is not a term or the
/// nominal values disagree.
fn term_images(
    h: &ParameterizedHamiltonian,
    index: &HashMap<&TermDescriptor, Vec<usize>>,
    g: &SitePermutation,
    generator: usize,
) -> Result<Vec<usize>> {
    let mut images = Vec::with_capacity(h.len());
    for (k, d) in h.descriptors().iter().enumerate() {
        if d.max_site() > g.n_sites() {
            return Err(Error::NotASymmetry {
                generator,
                reason: format!("term {} touches site beyond {}", h.labels()[k], g.n_sites()),
            });
        }
        let img = d.permuted(g);
        let targets = index.get(&img).ok_or_else(|| Error::NotASymmetry {
            generator,
            reason: format!("image of term {} is not a Hamiltonian term", h.labels()[k]),
        })?;
        let j = targets[0];
        if !nominal_equal(h.nominal()[k], h.nominal()[j]) {
            return Err(Error::NotASymmetry {
                generator,
                reason: format!(
                    "term {} ({}) maps to {} ({})",
                    h.labels()[k],
                    h.nominal()[k],
                    h.labels()[j],
                    h.nominal()[j]
                ),
            });
        }
        images.push(j);
    }
    Ok(images)
}

/// Orbits of the Hamiltonian terms under the group generated by `group`.
pub fn term_orbits(h: &ParameterizedHamiltonian, group: &SymmetryGroupSpec) -> Result<OrbitPartition> {
    let index = descriptor_index(h);
    let mut uf = UnionFind((0..h.len()).collect());
    // terms sharing a descriptor are the same operator and belong together
    for ks in index.values() {
        for &k in &ks[1..] {
            uf.union(ks[0], k);
        }
    }
    for (gi, g) in group.generators.iter().enumerate() {
        let images = term_images(h, &index, g, gi)?;
        for (k, j) in images.into_iter().enumerate() {
            uf.union(k, j);
        }
    }
    let mut ids = HashMap::new();
    let mut orbit_of = Vec::with_capacity(h.len());
    for k in 0..h.len() {
        let r = uf.find(k);
        let next = ids.len();
        orbit_of.push(*ids.entry(r).or_insert(next));
    }
    for k in 0..h.len() {
        let r = uf.find(k);
        if !nominal_equal(h.nominal()[k], h.nominal()[r]) {
            return Err(Error::NotASymmetry {
                generator: 0,
                reason: format!("nominal values differ within the orbit of {}", h.labels()[k]),
            });
        }
    }
    Ok(OrbitPartition {
        orbit_count: ids.len(),
        orbit_of,
    })
}

/// `min(orbit_count, M − 1, K)`.
pub fn rank_bound(h: &ParameterizedHamiltonian, obs: &ObservableDecomposition, orbits: &OrbitPartition) -> usize {
    orbits
        .orbit_count()
        .min(obs.len().saturating_sub(1))
        .min(h.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InvarianceMode {
    Symbolic,
    Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    pub mode: InvarianceMode,
    pub generators_checked: usize,
    /// Largest Frobenius residual seen in dense mode.
    pub max_residual: f64,
}

fn observable_image_matches(obs: &Observable, g: &SitePermutation) -> bool {
    let mut original: Vec<(TermDescriptor, f64)> = obs.descriptor.clone();
    let mut image: Vec<(TermDescriptor, f64)> =
        obs.descriptor.iter().map(|(d, w)| (d.permuted(g), *w)).collect();
    let key = |a: &(TermDescriptor, f64), b: &(TermDescriptor, f64)| {
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
    };
    original.sort_by(key);
    image.sort_by(key);
    original.len() == image.len()
        && original
            .iter()
            .zip(&image)
            .all(|(a, b)| a.0 == b.0 && nominal_equal(a.1, b.1))
}

/// Index permutation of the `2^n` spin basis induced by a site permutation.
pub fn basis_permutation(g: &SitePermutation) -> Vec<usize> {
    let n = g.n_sites();
    (0..1usize << n)
        .map(|b| {
            let mut out = 0;
            for s in 1..=n {
                if b & (1 << (n - s)) != 0 {
                    out |= 1 << (n - g.image(s));
                }
            }
            out
        })
        .collect()
}

fn permuted_residual(m: faer::MatRef<'_, f64>, perm: &[usize]) -> f64 {
    let d = m.nrows();
    let mut s = 0.0;
    for j in 0..d {
        for i in 0..d {
            let v = m[(perm[i], perm[j])] - m[(i, j)];
            s += v * v;
        }
    }
    s.sqrt()
}

/// Checks every generator against the Hamiltonian at its nominal point and
/// against the observable.
pub fn verify_invariance(
    h: &ParameterizedHamiltonian,
    obs: &Observable,
    group: &SymmetryGroupSpec,
    mode: InvarianceMode,
) -> Result<InvarianceReport> {
    let mut max_residual: f64 = 0.0;
    match mode {
        InvarianceMode::Symbolic => {
            let index = descriptor_index(h);
            for (gi, g) in group.generators.iter().enumerate() {
                term_images(h, &index, g, gi)?;
                if !observable_image_matches(obs, g) {
                    return Err(Error::NotASymmetry {
                        generator: gi,
                        reason: format!("observable {} is not invariant", obs.name),
                    });
                }
            }
        }
        InvarianceMode::Dense => {
            if !group.spin_basis || h.dim() != 1usize << group.n_sites {
                return Err(Error::InvalidInput(
                    "dense invariance checks need a spin-product Hilbert space".into(),
                ));
            }
            let hm = h.assemble_nominal()?;
            for (gi, g) in group.generators.iter().enumerate() {
                let perm = basis_permutation(g);
                let rh = permuted_residual(hm.matrix(), &perm);
                if rh >= 1e-10 {
                    return Err(Error::NotASymmetry {
                        generator: gi,
                        reason: format!("Hamiltonian residual {rh:e}"),
                    });
                }
                let ro = permuted_residual(obs.operator.matrix(), &perm);
                if ro >= 1e-10 {
                    return Err(Error::NotASymmetry {
                        generator: gi,
                        reason: format!("observable {} residual {ro:e}", obs.name),
                    });
                }
                max_residual = max_residual.max(rh).max(ro);
            }
        }
    }
    Ok(InvarianceReport {
        mode,
        generators_checked: group.generators.len(),
        max_residual,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorStructure {
    pub index: usize,
    pub max_spread: f64,
    pub flagged: bool,
}

/// Largest within-orbit coefficient spread for each numerically nonzero
/// eigenvector.
pub fn check_eigenvector_structure(fa: &FimAnalysis, orbits: &OrbitPartition) -> Vec<VectorStructure> {
    let members = orbits.members();
    (0..fa.numerical_rank())
        .map(|k| {
            let v = fa.eigenvector(k);
            let spread = members
                .iter()
                .map(|m| {
                    let (lo, hi) = m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        (lo.min(v[i]), hi.max(v[i]))
                    });
                    hi - lo
                })
                .fold(0.0, f64::max);
            VectorStructure {
                index: k,
                max_spread: spread,
                flagged: spread > 1e-6,
            }
        })
        .collect()
}

/// Term descriptors of the general nearest-neighbour spin-1/2 Hamiltonian on
/// a periodic `lx × ly × lz` lattice: fields along x, y, z on every site and
/// xx, yy, zz couplings on every bond. Sites are numbered x-fastest. The
/// generators are the unit translations, plus the lattice rotations when the
/// lattice is a cube.
pub fn cubic_lattice_descriptors(lx: usize, ly: usize, lz: usize) -> (Vec<TermDescriptor>, Vec<SitePermutation>) {
    let n = lx * ly * lz;
    let site = |x: usize, y: usize, z: usize| (z % lz) * lx * ly + (y % ly) * lx + (x % lx) + 1;
    let mut terms = BTreeSet::new();
    for z in 0..lz {
        for y in 0..ly {
            for x in 0..lx {
                let s = site(x, y, z);
                for a in ['x', 'y', 'z'] {
                    terms.insert(TermDescriptor::new(format!("field_{a}"), vec![(s, a)]));
                }
                for nb in [site(x + 1, y, z), site(x, y + 1, z), site(x, y, z + 1)] {
                    if nb != s {
                        for a in ['x', 'y', 'z'] {
                            terms.insert(TermDescriptor::new(format!("bond_{a}{a}"), vec![(s, a), (nb, a)]));
                        }
                    }
                }
            }
        }
    }
    let shift = |dx: usize, dy: usize, dz: usize| {
        let mut m = vec![0; n];
        for z in 0..lz {
            for y in 0..ly {
                for x in 0..lx {
                    m[site(x, y, z) - 1] = site(x + dx, y + dy, z + dz);
                }
            }
        }
        SitePermutation { mapping: m }
    };
    let mut gens = vec![shift(1, 0, 0), shift(0, 1, 0), shift(0, 0, 1)];
    // lattice rotations carry bonds of one direction onto the others
    if lx == ly && ly == lz {
        let relabel = |f: &dyn Fn(usize, usize, usize) -> usize| {
            let mut m = vec![0; n];
            for z in 0..lz {
                for y in 0..ly {
                    for x in 0..lx {
                        m[site(x, y, z) - 1] = f(x, y, z);
                    }
                }
            }
            SitePermutation { mapping: m }
        };
        gens.push(relabel(&|x, y, z| site(y, x, z)));
        gens.push(relabel(&|x, y, z| site(y, z, x)));
    }
    (terms.into_iter().collect(), gens)
}

/// Orbits of a bare descriptor list under a set of generators.
pub fn descriptor_orbits(descriptors: &[TermDescriptor], generators: &[SitePermutation]) -> Result<OrbitPartition> {
    let index: HashMap<&TermDescriptor, usize> = descriptors.iter().enumerate().map(|(k, d)| (d, k)).collect();
    let mut uf = UnionFind((0..descriptors.len()).collect());
    for (gi, g) in generators.iter().enumerate() {
        for (k, d) in descriptors.iter().enumerate() {
            let j = *index.get(&d.permuted(g)).ok_or_else(|| Error::NotASymmetry {
                generator: gi,
                reason: format!("image of descriptor {k} is missing"),
            })?;
            uf.union(k, j);
        }
    }
    let mut ids = HashMap::new();
    let orbit_of = (0..descriptors.len())
        .map(|k| {
            let r = uf.find(k);
            let next = ids.len();
            *ids.entry(r).or_insert(next)
        })
        .collect();
    Ok(OrbitPartition {
        orbit_count: ids.len(),
        orbit_of,
    })
}
