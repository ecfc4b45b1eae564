//! Problem families and the counterdiabatic Hamiltonian.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{commutator, trace_product, PauliSum, PauliTerm, C64};

/// Largest graph for which the maximum cut is found by enumeration.
pub const BRUTE_FORCE_CAP: usize = 24;

/// Scaling of the two-qubit pair.
///
/// `Ising` is `H_S = X0 + X1`, `H_T = -ZZ/2`. `Bloch` is `H_S = (X0 + X1)/2`,
/// `H_T = ZZ`, the normalization in which a quarter turn of each generator
/// (`gamma = beta = pi/4`) maps `|++>` onto the `ZZ = +1` sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TwoLevelNorm {
    #[default]
    Ising,
    Bloch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    TwoLevel(TwoLevelNorm),
    IsingRing(usize),
    MaxCutGraph(Vec<(usize, usize)>),
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub kind: InstanceKind,
    pub n_qubits: usize,
    pub h_simple: PauliSum,
    pub h_target: PauliSum,
    /// `[H_T, H_S]`, anti-Hermitian.
    pub comm: PauliSum,
    pub objective: PauliSum,
    pub obj_max: Option<f64>,
    /// Symmetry `S` (`S^2 = 1`, commuting with both Hamiltonians, `+1` on the
    /// initial state). When set, traces are taken over the `S = +1` sector.
    pub sector: Option<PauliSum>,
}

fn sum_of(n: usize, terms: Vec<(Vec<(usize, char)>, f64)>) -> Result<PauliSum> {
    let mut v = Vec::with_capacity(terms.len());
    for (ops, c) in terms {
        v.push((PauliTerm::from_ops(n, &ops)?, C64::new(c, 0.0)));
    }
    PauliSum::from_terms(n, v)
}

fn transverse_field(n: usize, h: f64) -> Result<PauliSum> {
    sum_of(n, (0..n).map(|i| (vec![(i, 'X')], h)).collect())
}

/// `sum_e c (1 - Z_i Z_j)` style objective with constant `c0` per edge.
fn zz_sum(n: usize, edges: &[(usize, usize)], c_id: f64, c_zz: f64) -> Result<PauliSum> {
    let mut terms = Vec::new();
    for &(i, j) in edges {
        if c_id != 0.0 {
            terms.push((vec![], c_id));
        }
        terms.push((vec![(i, 'Z'), (j, 'Z')], c_zz));
    }
    sum_of(n, terms)
}

impl ProblemInstance {
    fn assemble(
        kind: InstanceKind,
        n: usize,
        h_simple: PauliSum,
        h_target: PauliSum,
        objective: PauliSum,
        obj_max: Option<f64>,
    ) -> Result<Self> {
        let comm = commutator(&h_target, &h_simple)?;
        Ok(Self { kind, n_qubits: n, h_simple, h_target, comm, objective, obj_max, sector: None })
    }

    /// The two-qubit pair restricted by symmetry to a two-level system.
    pub fn two_level(norm: TwoLevelNorm) -> Result<Self> {
        let e = [(0, 1)];
        let (hs, ht, obj) = match norm {
            TwoLevelNorm::Ising => {
                (transverse_field(2, 1.0)?, zz_sum(2, &e, 0.0, -0.5)?, zz_sum(2, &e, 0.5, -0.5)?)
            }
            TwoLevelNorm::Bloch => {
                (transverse_field(2, 0.5)?, zz_sum(2, &e, 0.0, 1.0)?, zz_sum(2, &e, 0.5, 0.5)?)
            }
        };
        let mut inst = Self::assemble(InstanceKind::TwoLevel(norm), 2, hs, ht, obj, Some(1.0))?;
        inst.sector = Some(PauliSum::from_label("XX", 1.0)?);
        Ok(inst)
    }

    /// `tr(A B)` normalized over the symmetry sector (plain normalized trace without one).
    pub fn trace_product(&self, a: &PauliSum, b: &PauliSum) -> Result<f64> {
        let mut t = trace_product(a, b)?.re;
        if let Some(s) = &self.sector {
            t += trace_product(&s.try_mul(a)?, b)?.re;
        }
        Ok(t)
    }

    /// Normalized (sector) trace of `a`.
    pub fn trace(&self, a: &PauliSum) -> Result<f64> {
        self.trace_product(&PauliSum::identity(self.n_qubits), a)
    }

    /// `trace_product` with the identity components removed; a multiple of
    /// the identity is a global phase of the generated unitary.
    pub fn phase_free_product(&self, a: &PauliSum, b: &PauliSum) -> Result<f64> {
        Ok(self.trace_product(a, b)? - self.trace(a)? * self.trace(b)?)
    }

    /// Antiferromagnetic transverse Ising ring (ring of disagrees).
    pub fn ising_ring(n: usize) -> Result<Self> {
        if n < 4 || n % 2 == 1 {
            return Err(Error::Validation(format!("ring size must be even and >= 4, got {n}")));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::assemble(
            InstanceKind::IsingRing(n),
            n,
            transverse_field(n, 1.0)?,
            zz_sum(n, &edges, 0.0, -0.5)?,
            zz_sum(n, &edges, 0.5, -0.5)?,
            Some(n as f64),
        )
    }

    /// MaxCut on a simple connected graph; `H_T` is the cut objective itself.
    pub fn maxcut(edges: &[(usize, usize)]) -> Result<Self> {
        let edges = validate_edges(edges)?;
        let n = edges.iter().map(|&(i, j)| i.max(j)).max().unwrap() + 1;
        if !is_connected(n, &edges) {
            return Err(Error::Validation("graph is not connected".into()));
        }
        let obj = zz_sum(n, &edges, 0.5, -0.5)?;
        let obj_max = if n <= BRUTE_FORCE_CAP { Some(max_cut_brute_force(n, &edges) as f64) } else { None };
        Self::assemble(
            InstanceKind::MaxCutGraph(edges),
            n,
            transverse_field(n, 1.0)?,
            obj.clone(),
            obj,
            obj_max,
        )
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        match &self.kind {
            InstanceKind::TwoLevel(_) => vec![(0, 1)],
            InstanceKind::IsingRing(n) => (0..*n).map(|i| (i, (i + 1) % n)).collect(),
            InstanceKind::MaxCutGraph(e) => e.clone(),
        }
    }

    /// Common vertex degree if the interaction graph is regular.
    pub fn regular_degree(&self) -> Option<usize> {
        let mut deg = vec![0usize; self.n_qubits];
        for (i, j) in self.edges() {
            deg[i] += 1;
            deg[j] += 1;
        }
        let d = deg[0];
        deg.iter().all(|&x| x == d).then_some(d)
    }

    pub fn has_triangle(&self) -> bool {
        let edges = self.edges();
        let set: BTreeSet<(usize, usize)> =
            edges.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
        let n = self.n_qubits;
        (0..n).any(|a| {
            (a + 1..n).any(|b| {
                set.contains(&(a, b))
                    && (b + 1..n).any(|c| set.contains(&(a, c)) && set.contains(&(b, c)))
            })
        })
    }

    /// `i [H_T, H_S]`, the Hermitian counterdiabatic direction.
    pub fn cd_operator(&self) -> PauliSum {
        self.comm.scale(C64::new(0.0, 1.0))
    }

    pub fn name(&self) -> String {
        match &self.kind {
            InstanceKind::TwoLevel(TwoLevelNorm::Ising) => "two_level".into(),
            InstanceKind::TwoLevel(TwoLevelNorm::Bloch) => "two_level_bloch".into(),
            InstanceKind::IsingRing(n) => format!("ising_ring_{n}"),
            InstanceKind::MaxCutGraph(e) => format!("maxcut_{}v_{}e", self.n_qubits, e.len()),
        }
    }
}

fn validate_edges(edges: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    if edges.is_empty() {
        return Err(Error::Validation("empty edge list".into()));
    }
    let mut seen = BTreeSet::new();
    for &(i, j) in edges {
        if i == j {
            return Err(Error::Validation(format!("self loop at vertex {i}")));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::Validation(format!("duplicate edge ({i}, {j})")));
        }
    }
    let n = edges.iter().map(|&(i, j)| i.max(j)).max().unwrap() + 1;
    if n > crate::pauli::MAX_QUBITS {
        return Err(Error::Validation(format!("{n} vertices exceed the 64-qubit limit")));
    }
    Ok(edges.to_vec())
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Maximum cut by enumerating all bipartitions with vertex 0 fixed.
pub fn max_cut_brute_force(n: usize, edges: &[(usize, usize)]) -> usize {
    let masks: Vec<u32> = edges.iter().map(|&(i, j)| (1u32 << i) | (1u32 << j)).collect();
    (0u32..1 << (n - 1))
        .map(|s| {
            let s = s << 1;
            masks.iter().filter(|&&m| (s & m).count_ones() == 1).count()
        })
        .max()
        .unwrap_or(0)
}

/// Seeded random simple connected `degree`-regular graph (pairing model with rejection).
pub fn random_regular_graph(n: usize, degree: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n * degree % 2 == 1 || degree >= n || degree == 0 {
        return Err(Error::Validation(format!("no {degree}-regular graph on {n} vertices")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for _ in 0..10_000 {
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat(v).take(degree)).collect();
        stubs.shuffle(&mut rng);
        let mut set = BTreeSet::new();
        for pair in stubs.chunks(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !set.insert((a, b)) {
                continue 'attempt;
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        if is_connected(n, &edges) {
            return Ok(edges);
        }
    }
    Err(Error::Numerical("failed to sample a simple regular graph".into()))
}

/// `lambda H_T + (1 - lambda) H_S + i (s + lambda_dot alpha) [H_T, H_S]`.
pub fn cd_hamiltonian(
    inst: &ProblemInstance,
    lambda: f64,
    lambda_dot: f64,
    s: f64,
    alpha: f64,
) -> Result<PauliSum> {
    if ![lambda, lambda_dot, s, alpha].iter().all(|x| x.is_finite()) {
        return Err(Error::Validation("non-finite Hamiltonian parameter".into()));
    }
    let mut h = inst.h_target.scale_re(lambda);
    h.add_scaled(&inst.h_simple, C64::new(1.0 - lambda, 0.0))?;
    h.add_scaled(&inst.comm, C64::new(0.0, s + lambda_dot * alpha))?;
    Ok(h)
}

/// Serializable instance description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    TwoLevel {
        #[serde(default)]
        normalization: TwoLevelNorm,
    },
    IsingRing {
        #[serde(rename = "N")]
        n: usize,
    },
    #[serde(rename = "maxcut")]
    MaxCut { edges: Vec<(usize, usize)> },
    RandomRegular {
        n: usize,
        degree: usize,
        seed: u64,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<ProblemInstance> {
        match self {
            InstanceSpec::TwoLevel { normalization } => ProblemInstance::two_level(*normalization),
            InstanceSpec::IsingRing { n } => ProblemInstance::ising_ring(*n),
            InstanceSpec::MaxCut { edges } => ProblemInstance::maxcut(edges),
            InstanceSpec::RandomRegular { n, degree, seed } => {
                ProblemInstance::maxcut(&random_regular_graph(*n, *degree, *seed)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::norm_sq;

    #[test]
    fn two_level_commutator() {
        let inst = ProblemInstance::two_level(TwoLevelNorm::Ising).unwrap();
        // [-ZZ/2, X0 + X1] = -i (YZ + ZY)
        assert_eq!(inst.comm.len(), 2);
        assert!((inst.comm.coeff_of("YZ").unwrap() - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((inst.comm.coeff_of("ZY").unwrap() - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((norm_sq(&inst.comm).unwrap() + 2.0).abs() < 1e-14);
    }

    #[test]
    fn ring_structure() {
        let inst = ProblemInstance::ising_ring(4).unwrap();
        assert_eq!(inst.comm.len(), 8);
        assert_eq!(inst.obj_max, Some(4.0));
        assert!(ProblemInstance::ising_ring(5).is_err());
        assert!(ProblemInstance::ising_ring(2).is_err());
        // <objective> on |+>^N is N/2: only the identity part survives.
        let id = PauliSum::identity(4);
        assert!((trace_product(&inst.objective, &id).unwrap().re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn maxcut_small_graphs() {
        let e = ProblemInstance::maxcut(&[(0, 1)]).unwrap();
        assert_eq!(e.obj_max, Some(1.0));
        let tri = ProblemInstance::maxcut(&[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(tri.obj_max, Some(2.0));
        assert!(tri.has_triangle());
        assert!(ProblemInstance::maxcut(&[(0, 1), (1, 0)]).is_err());
        assert!(ProblemInstance::maxcut(&[(0, 0)]).is_err());
    }

    #[test]
    fn random_regular_is_regular() {
        let edges = random_regular_graph(14, 3, 7).unwrap();
        assert_eq!(edges.len(), 21);
        let inst = ProblemInstance::maxcut(&edges).unwrap();
        assert_eq!(inst.regular_degree(), Some(3));
        assert_eq!(random_regular_graph(14, 3, 7).unwrap(), edges);
    }

    #[test]
    fn cd_hamiltonian_endpoints() {
        let inst = ProblemInstance::ising_ring(6).unwrap();
        let h0 = cd_hamiltonian(&inst, 0.0, 0.0, 0.0, -0.1).unwrap();
        assert_eq!(h0, inst.h_simple);
        let h1 = cd_hamiltonian(&inst, 1.0, 0.0, 0.0, -0.1).unwrap();
        assert_eq!(h1, inst.h_target);
        let h = cd_hamiltonian(&inst, 0.3, 1.2, 0.05, -0.2).unwrap();
        assert!(h.is_hermitian());
        assert!(cd_hamiltonian(&inst, f64::NAN, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn instance_spec_json() {
        let s: InstanceSpec = serde_json::from_str(r#"{"kind":"ising_ring","N":8}"#).unwrap();
        assert_eq!(s, InstanceSpec::IsingRing { n: 8 });
        let m: InstanceSpec =
            serde_json::from_str(r#"{"kind":"maxcut","edges":[[0,1],[1,2]]}"#).unwrap();
        assert_eq!(m.build().unwrap().obj_max, Some(2.0));
        let t: InstanceSpec = serde_json::from_str(r#"{"kind":"two_level"}"#).unwrap();
        assert_eq!(t.build().unwrap().name(), "two_level");
    }
}
