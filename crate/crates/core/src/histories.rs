//! Class operators, decoherence functionals and record projectors.
//!
//! A [`HistorySpec`] holds one projector family per time together with the
//! propagators between consecutive times. Histories are enumerated in
//! lexicographic order of `(alpha_1, ..., alpha_n)`, which is also the row
//! order of every [`DecoherenceMatrix`].

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{
    c, evolve, max_abs, tensor, CMatrix, ComplexOperator, DensityOperator, Ket, ProjectorFamily, PureState,
};

/// Default relative tolerance for decoherence verdicts.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
/// Guard used in the geometric-mean normalization of defects.
pub const EPS_FLOOR: f64 = 1e-300;
/// Branches whose weight `D(a,a)` is below this are treated as null by the defect measures.
pub const NULL_BRANCH_WEIGHT: f64 = 1e-24;
/// `Tr(C rho C^dag)` below this is a null branch for conditioning.
pub const MIN_BRANCH_WEIGHT: f64 = 1e-14;
/// Saturation value of [`record_capacity_check`].
pub const CAPACITY_SATURATION: u64 = 1 << 63;

/// One history: a label index per time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct HistoryIndex(pub Vec<usize>);

impl HistoryIndex {
    pub fn new(alpha: impl Into<Vec<usize>>) -> Self {
        Self(alpha.into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for HistoryIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Every history of a given shape, lexicographic in `(alpha_1, ..., alpha_n)`.
pub fn enumerate_histories(shape: &[usize]) -> Vec<HistoryIndex> {
    let mut out = vec![HistoryIndex(Vec::with_capacity(shape.len()))];
    for &count in shape {
        out = out
            .into_iter()
            .flat_map(|h| {
                (0..count).map(move |a| {
                    let mut next = h.0.clone();
                    next.push(a);
                    HistoryIndex(next)
                })
            })
            .collect();
    }
    out
}

/// Times, projector families and dynamics defining a set of histories.
#[derive(Debug, Clone)]
pub struct HistorySpec {
    hamiltonian: ComplexOperator,
    times: Vec<f64>,
    families: Vec<ProjectorFamily>,
    hbar: f64,
    /// `propagators[k]` carries the state from `times[k]` to `times[k + 1]`.
    propagators: Vec<ComplexOperator>,
    preparation: Option<ComplexOperator>,
}

impl HistorySpec {
    pub fn new(hamiltonian: ComplexOperator, times: Vec<f64>, families: Vec<ProjectorFamily>, hbar: f64) -> Result<Self> {
        Self::check_shape(&hamiltonian, &times, &families, hbar)?;
        let propagators = times
            .windows(2)
            .map(|w| evolve(&hamiltonian, w[1] - w[0], hbar))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            hamiltonian,
            times,
            families,
            hbar,
            propagators,
            preparation: None,
        })
    }

    /// Builds a spec whose interval propagators are known in closed form.
    ///
    /// Each propagator must be unitary within 1e-10 and there must be one per
    /// interval between consecutive times.
    pub fn with_propagators(
        hamiltonian: ComplexOperator,
        times: Vec<f64>,
        families: Vec<ProjectorFamily>,
        hbar: f64,
        propagators: Vec<ComplexOperator>,
    ) -> Result<Self> {
        Self::check_shape(&hamiltonian, &times, &families, hbar)?;
        if propagators.len() + 1 != times.len() {
            return Err(Error::invalid(format!(
                "{} times need {} propagators, got {}",
                times.len(),
                times.len() - 1,
                propagators.len()
            )));
        }
        for (k, u) in propagators.iter().enumerate() {
            check_unitary(u, hamiltonian.dim(), &format!("propagator {k}"))?;
        }
        Ok(Self {
            hamiltonian,
            times,
            families,
            hbar,
            propagators,
            preparation: None,
        })
    }

    /// Inserts an impulsive unitary right after the projection at `times[k]`.
    pub fn with_impulse(mut self, k: usize, unitary: ComplexOperator) -> Result<Self> {
        if k + 1 >= self.times.len() {
            return Err(Error::invalid(format!(
                "impulse index {k} must precede the final time (n = {})",
                self.times.len()
            )));
        }
        check_unitary(&unitary, self.dim(), "impulse")?;
        self.propagators[k] = self.propagators[k].compose(&unitary)?;
        Ok(self)
    }

    /// Optional evolution from `t0 < t_1` applied before the first projector.
    pub fn with_preparation(mut self, t0: f64) -> Result<Self> {
        if !(t0 < self.times[0]) {
            return Err(Error::invalid(format!(
                "preparation time {t0} must precede t_1 = {}",
                self.times[0]
            )));
        }
        self.preparation = Some(evolve(&self.hamiltonian, self.times[0] - t0, self.hbar)?);
        Ok(self)
    }

    fn check_shape(hamiltonian: &ComplexOperator, times: &[f64], families: &[ProjectorFamily], hbar: f64) -> Result<()> {
        if times.is_empty() {
            return Err(Error::invalid("history needs at least one time"));
        }
        if times.len() != families.len() {
            return Err(Error::invalid(format!(
                "{} times but {} projector families",
                times.len(),
                families.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("times must be strictly increasing"));
        }
        if !(hbar > 0.0) {
            return Err(Error::invalid(format!("hbar must be positive, got {hbar}")));
        }
        let dim = hamiltonian.dim();
        if let Some(f) = families.iter().find(|f| f.dim() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "family of dim {} against Hamiltonian of dim {dim}",
                f.dim()
            )));
        }
        let herm = hamiltonian.hermiticity_defect();
        if herm > crate::hilbert::HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: herm });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &ComplexOperator {
        &self.hamiltonian
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn families(&self) -> &[ProjectorFamily] {
        &self.families
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn propagators(&self) -> &[ComplexOperator] {
        &self.propagators
    }

    /// Number of alternatives per time.
    pub fn shape(&self) -> Vec<usize> {
        self.families.iter().map(|f| f.len()).collect()
    }

    pub fn histories(&self) -> Vec<HistoryIndex> {
        enumerate_histories(&self.shape())
    }

    /// Human-readable label string such as `(n,bin2)`.
    pub fn label_of(&self, alpha: &HistoryIndex) -> String {
        let parts: Vec<&str> = alpha
            .0
            .iter()
            .zip(&self.families)
            .map(|(&a, f)| f.labels().get(a).map(String::as_str).unwrap_or("?"))
            .collect();
        format!("({})", parts.join(","))
    }

    pub fn check_index(&self, alpha: &HistoryIndex) -> Result<()> {
        if alpha.len() != self.families.len() {
            return Err(Error::invalid(format!(
                "history {alpha} has {} components, expected {}",
                alpha.len(),
                self.families.len()
            )));
        }
        for (k, (&a, f)) in alpha.0.iter().zip(&self.families).enumerate() {
            if a >= f.len() {
                return Err(Error::invalid(format!(
                    "label {a} at time index {k} is out of range ({} alternatives)",
                    f.len()
                )));
            }
        }
        Ok(())
    }

    /// The same histories on `H (x) H_extra`, every operator tensored with the identity.
    pub fn extend_with_identity(&self, extra_dim: usize) -> HistorySpec {
        let id = ComplexOperator::identity(extra_dim);
        HistorySpec {
            hamiltonian: tensor(&self.hamiltonian, &id),
            times: self.times.clone(),
            families: self.families.iter().map(|f| f.extend_with_identity(extra_dim)).collect(),
            hbar: self.hbar,
            propagators: self.propagators.iter().map(|u| tensor(u, &id)).collect(),
            preparation: self.preparation.as_ref().map(|u| tensor(u, &id)),
        }
    }

    /// Unprojected evolution from `t_1` (or `t_0` when prepared) to `t_n`.
    pub fn total_propagator(&self) -> ComplexOperator {
        let mut u = self
            .preparation
            .clone()
            .unwrap_or_else(|| ComplexOperator::identity(self.dim()));
        for p in &self.propagators {
            u = p.compose(&u).expect("propagators share the spec dimension");
        }
        u
    }

    /// Class operators of every history, in enumeration order.
    ///
    /// Shared prefixes are multiplied once.
    fn all_class_operators(&self) -> Vec<(HistoryIndex, CMatrix)> {
        let dim = self.dim();
        let start = self
            .preparation
            .as_ref()
            .map(|u| u.matrix().clone())
            .unwrap_or_else(|| CMatrix::identity(dim, dim));
        let mut layer: Vec<(Vec<usize>, CMatrix)> = vec![(Vec::new(), start)];
        for (k, family) in self.families.iter().enumerate() {
            let evolved: Vec<(Vec<usize>, CMatrix)> = if k == 0 {
                layer
            } else {
                let u = self.propagators[k - 1].matrix();
                layer.into_iter().map(|(p, m)| (p, u * m)).collect()
            };
            layer = evolved
                .into_iter()
                .flat_map(|(prefix, m)| {
                    family.members().iter().enumerate().map(move |(a, p)| {
                        let mut next = prefix.clone();
                        next.push(a);
                        (next, p.matrix() * &m)
                    })
                })
                .collect();
        }
        layer.into_iter().map(|(a, m)| (HistoryIndex(a), m)).collect()
    }

    /// `C_alpha |psi>` for every history, in enumeration order.
    pub fn branch_states(&self, psi: &Ket) -> Result<Vec<(HistoryIndex, Ket)>> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "state of dim {} against spec of dim {}",
                psi.len(),
                self.dim()
            )));
        }
        let start = match &self.preparation {
            Some(u) => u.matrix() * psi,
            None => psi.clone(),
        };
        let mut layer: Vec<(Vec<usize>, Ket)> = vec![(Vec::new(), start)];
        for (k, family) in self.families.iter().enumerate() {
            if k > 0 {
                let u = self.propagators[k - 1].matrix();
                for (_, v) in layer.iter_mut() {
                    *v = u * &*v;
                }
            }
            layer = layer
                .into_iter()
                .flat_map(|(prefix, v)| {
                    family.members().iter().enumerate().map(move |(a, p)| {
                        let mut next = prefix.clone();
                        next.push(a);
                        (next, p.matrix() * &v)
                    })
                })
                .collect();
        }
        Ok(layer.into_iter().map(|(a, v)| (HistoryIndex(a), v)).collect())
    }
}

fn check_unitary(u: &ComplexOperator, dim: usize, what: &str) -> Result<()> {
    if u.dim() != dim {
        return Err(Error::DimensionMismatch(format!("{what} has dim {}, expected {dim}", u.dim())));
    }
    let defect = u.unitarity_defect();
    if defect > 1e-10 {
        return Err(Error::invalid(format!("{what} is not unitary (defect {defect:e})")));
    }
    Ok(())
}

/// `C_alpha = P_{alpha_n} U_{n-1} ... U_1 P_{alpha_1}` (times the preparation, if any).
pub fn class_operator(spec: &HistorySpec, alpha: &HistoryIndex) -> Result<ComplexOperator> {
    spec.check_index(alpha)?;
    let dim = spec.dim();
    let mut m = spec
        .preparation
        .as_ref()
        .map(|u| u.matrix().clone())
        .unwrap_or_else(|| CMatrix::identity(dim, dim));
    for (k, &a) in alpha.0.iter().enumerate() {
        if k > 0 {
            m = spec.propagators[k - 1].matrix() * m;
        }
        m = spec.families[k].members()[a].matrix() * m;
    }
    Ok(ComplexOperator::from_matrix_unchecked(m))
}

/// `D(alpha, alpha')` over lexicographically ordered histories.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceMatrix {
    shape: Vec<usize>,
    histories: Vec<HistoryIndex>,
    entries: CMatrix,
    tolerance: f64,
}

impl DecoherenceMatrix {
    /// Wraps raw entries for histories of the given shape.
    pub fn from_entries(shape: Vec<usize>, entries: CMatrix, tolerance: f64) -> Result<Self> {
        let histories = enumerate_histories(&shape);
        if entries.nrows() != histories.len() || entries.ncols() != histories.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} histories but a {}x{} matrix",
                histories.len(),
                entries.nrows(),
                entries.ncols()
            )));
        }
        if !(tolerance >= 0.0) {
            return Err(Error::invalid("tolerance must be nonnegative"));
        }
        Ok(Self {
            shape,
            histories,
            entries,
            tolerance,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn histories(&self) -> &[HistoryIndex] {
        &self.histories
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    pub fn position(&self, alpha: &HistoryIndex) -> Option<usize> {
        self.histories.binary_search(alpha).ok()
    }

    pub fn get(&self, alpha: &HistoryIndex, alpha_prime: &HistoryIndex) -> Option<Complex64> {
        Some(self.entries[(self.position(alpha)?, self.position(alpha_prime)?)])
    }

    pub fn total(&self) -> Complex64 {
        self.entries.iter().sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.entries - self.entries.adjoint()))
    }

    /// Largest `|D(alpha, alpha')|` with differing final labels.
    pub fn final_label_leak(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, a) in self.histories.iter().enumerate() {
            for (j, b) in self.histories.iter().enumerate() {
                if a.0.last() != b.0.last() {
                    worst = worst.max(self.entries[(i, j)].norm());
                }
            }
        }
        worst
    }

    pub fn is_decoherent(&self) -> bool {
        decoherence_defect(self) <= self.tolerance
    }

    pub fn is_consistent(&self) -> bool {
        consistency_defect(self) <= self.tolerance
    }

    /// Sums entries over merged labels, producing the coarse-grained matrix.
    ///
    /// `groups[k]` lists, for time `k`, the fine labels forming each coarse label.
    pub fn coarse_grain(&self, groups: &[Vec<Vec<usize>>]) -> Result<DecoherenceMatrix> {
        if groups.len() != self.shape.len() {
            return Err(Error::invalid("one grouping per time is required"));
        }
        let mut map: Vec<Vec<usize>> = Vec::with_capacity(groups.len());
        for (k, g) in groups.iter().enumerate() {
            let mut m = vec![usize::MAX; self.shape[k]];
            for (coarse, members) in g.iter().enumerate() {
                for &fine in members {
                    if fine >= self.shape[k] || m[fine] != usize::MAX {
                        return Err(Error::invalid(format!("grouping at time {k} is not a partition")));
                    }
                    m[fine] = coarse;
                }
            }
            if m.contains(&usize::MAX) {
                return Err(Error::invalid(format!("grouping at time {k} misses labels")));
            }
            map.push(m);
        }
        let shape: Vec<usize> = groups.iter().map(|g| g.len()).collect();
        let coarse_hist = enumerate_histories(&shape);
        let mut entries = CMatrix::zeros(coarse_hist.len(), coarse_hist.len());
        let coarse_pos = |h: &HistoryIndex| -> usize {
            let idx = HistoryIndex(h.0.iter().enumerate().map(|(k, &a)| map[k][a]).collect());
            coarse_hist.binary_search(&idx).expect("coarse history exists")
        };
        let positions: Vec<usize> = self.histories.iter().map(coarse_pos).collect();
        for i in 0..self.len() {
            for j in 0..self.len() {
                entries[(positions[i], positions[j])] += self.entries[(i, j)];
            }
        }
        DecoherenceMatrix::from_entries(shape, entries, self.tolerance)
    }

    /// JSON form: complex entries as `[re, im]`, row-major over lexicographic histories.
    pub fn to_json(&self) -> DecoherenceMatrixJson {
        DecoherenceMatrixJson {
            shape: self.shape.clone(),
            histories: self.histories.iter().map(|h| h.0.clone()).collect(),
            tolerance: self.tolerance,
            entries: (0..self.len())
                .map(|i| (0..self.len()).map(|j| {
                    let z = self.entries[(i, j)];
                    [z.re, z.im]
                }).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecoherenceMatrixJson {
    pub shape: Vec<usize>,
    pub histories: Vec<Vec<usize>>,
    pub tolerance: f64,
    pub entries: Vec<Vec<[f64; 2]>>,
}

fn fill_hermitian<F>(n: usize, entry: F) -> CMatrix
where
    F: Fn(usize, usize) -> Complex64 + Sync,
{
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| entry(i, j)).collect())
        .collect();
    let mut m = CMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, z) in row.into_iter().enumerate() {
            let j = i + off;
            if i == j {
                m[(i, i)] = c(z.re, 0.0);
            } else {
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
    }
    m
}

/// `D(alpha, alpha') = Tr(C_alpha rho C_alpha'^dag)`.
pub fn decoherence_matrix(spec: &HistorySpec, rho: &DensityOperator) -> Result<DecoherenceMatrix> {
    if rho.dim() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "density operator of dim {} against spec of dim {}",
            rho.dim(),
            spec.dim()
        )));
    }
    let class_ops = spec.all_class_operators();
    let weighted: Vec<CMatrix> = class_ops.par_iter().map(|(_, m)| m * rho.matrix()).collect();
    let entries = fill_hermitian(class_ops.len(), |i, j| {
        // Tr(A B^dag) = sum_ij A_ij conj(B_ij)
        weighted[i]
            .iter()
            .zip(class_ops[j].1.iter())
            .map(|(a, b)| a * b.conj())
            .sum()
    });
    DecoherenceMatrix::from_entries(spec.shape(), entries, DEFAULT_TOLERANCE)
}

/// Pure-state shortcut: `D(alpha, alpha') = <C_alpha' psi | C_alpha psi>`.
pub fn decoherence_matrix_pure(spec: &HistorySpec, psi: &PureState) -> Result<DecoherenceMatrix> {
    let branches = spec.branch_states(psi.amplitudes())?;
    let entries = fill_hermitian(branches.len(), |i, j| branches[j].1.dotc(&branches[i].1));
    DecoherenceMatrix::from_entries(spec.shape(), entries, DEFAULT_TOLERANCE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities {
    pub values: Vec<(HistoryIndex, f64)>,
    pub sum_rule_defect: f64,
}

impl Probabilities {
    pub fn get(&self, alpha: &HistoryIndex) -> Option<f64> {
        self.values.iter().find(|(h, _)| h == alpha).map(|(_, p)| *p)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().map(|(_, p)| p).sum()
    }
}

/// `p(alpha) = D(alpha, alpha)` plus the worst single-merge sum-rule violation.
pub fn probabilities(d: &DecoherenceMatrix) -> Probabilities {
    let values = d
        .histories
        .iter()
        .enumerate()
        .map(|(i, h)| (h.clone(), d.entries[(i, i)].re))
        .collect();
    let mut defect = 0.0_f64;
    for (k, &count) in d.shape.iter().enumerate() {
        for label in 0..count.saturating_sub(1) {
            // every history with alpha_k = label pairs with the one at label + 1
            for (i, h) in d.histories.iter().enumerate() {
                if h.0[k] != label {
                    continue;
                }
                let mut partner = h.clone();
                partner.0[k] = label + 1;
                let j = d.position(&partner).expect("partner history exists");
                let merged = d.entries[(i, i)] + d.entries[(j, j)] + d.entries[(i, j)] + d.entries[(j, i)];
                let fine = d.entries[(i, i)].re + d.entries[(j, j)].re;
                defect = defect.max((merged.re - fine).abs());
            }
        }
    }
    Probabilities {
        values,
        sum_rule_defect: defect,
    }
}

fn normalized_off_diagonal(d: &DecoherenceMatrix, part: impl Fn(Complex64) -> f64) -> f64 {
    let n = d.len();
    let mut worst = 0.0_f64;
    for i in 0..n {
        let dii = d.entries[(i, i)].re;
        for j in 0..n {
            if i == j {
                continue;
            }
            let djj = d.entries[(j, j)].re;
            if dii <= NULL_BRANCH_WEIGHT || djj <= NULL_BRANCH_WEIGHT {
                continue;
            }
            let scale = (dii * djj).sqrt().max(EPS_FLOOR);
            worst = worst.max(part(d.entries[(i, j)]) / scale);
        }
    }
    worst
}

/// `max |D(a,a')| / sqrt(D(a,a) D(a',a'))` over distinct non-null histories.
pub fn decoherence_defect(d: &DecoherenceMatrix) -> f64 {
    normalized_off_diagonal(d, |z| z.norm())
}

/// Like [`decoherence_defect`] but with `|Re D|` only.
pub fn consistency_defect(d: &DecoherenceMatrix) -> f64 {
    normalized_off_diagonal(d, |z| z.re.abs())
}

/// Record projectors and the history each one is correlated with.
#[derive(Debug, Clone)]
pub struct RecordProjectorSet {
    pub projectors: ProjectorFamily,
    pub correlation: BTreeMap<HistoryIndex, usize>,
}

impl RecordProjectorSet {
    pub fn trivial(dim: usize, histories: &[HistoryIndex]) -> Self {
        Self {
            projectors: ProjectorFamily::trivial(dim),
            correlation: histories.iter().map(|h| (h.clone(), 0)).collect(),
        }
    }

    pub fn from_family(projectors: ProjectorFamily, correlation: BTreeMap<HistoryIndex, usize>) -> Self {
        Self {
            projectors,
            correlation,
        }
    }

    pub fn record_of(&self, alpha: &HistoryIndex) -> Option<usize> {
        self.correlation.get(alpha).copied()
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    /// Index of the complement block, when the set has one.
    pub fn complement(&self) -> Option<usize> {
        self.projectors.label_index("complement")
    }
}

/// Rank-minimal record projectors onto the branch states `C_alpha |psi>`.
///
/// Branches with weight below `defect_tol` are discarded, the rest are
/// orthonormalized in enumeration order and each gets a rank-one projector.
/// The orthogonal remainder goes into a final `complement` projector.
pub fn find_records(spec: &HistorySpec, psi: &PureState, defect_tol: f64) -> Result<RecordProjectorSet> {
    let d = decoherence_matrix_pure(spec, psi)?;
    let defect = decoherence_defect(&d);
    if defect > defect_tol {
        return Err(Error::NoRecords {
            defect,
            tolerance: defect_tol,
        });
    }
    let dim = spec.dim();
    let branches = spec.branch_states(psi.amplitudes())?;
    let mut basis: Vec<Ket> = Vec::new();
    let mut members = Vec::new();
    let mut labels = Vec::new();
    let mut correlation = BTreeMap::new();
    let mut discarded = Vec::new();
    for (alpha, v) in branches {
        if v.norm_squared() < defect_tol {
            discarded.push(alpha);
            continue;
        }
        let mut w = v;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for e in &basis {
                let overlap = e.dotc(&w);
                w -= e * overlap;
            }
        }
        let norm = w.norm();
        if norm <= 1e-12 {
            return Err(Error::NoRecords {
                defect: 1.0,
                tolerance: defect_tol,
            });
        }
        let e = w / c(norm, 0.0);
        members.push(ComplexOperator::outer(&e));
        labels.push(format!("R{}", spec.label_of(&alpha)));
        correlation.insert(alpha, basis.len());
        basis.push(e);
    }
    let mut rest = CMatrix::identity(dim, dim);
    for m in &members {
        rest -= m.matrix();
    }
    let complement_index = members.len();
    members.push(ComplexOperator::new(rest)?);
    labels.push("complement".into());
    for alpha in discarded {
        correlation.insert(alpha, complement_index);
    }
    let projectors = ProjectorFamily::new(members, labels)?;
    Ok(RecordProjectorSet {
        projectors,
        correlation,
    })
}

/// `max_{alpha,beta} | R_beta C_alpha psi - delta(alpha,beta) C_alpha psi |`.
pub fn record_residual(spec: &HistorySpec, psi: &PureState, records: &RecordProjectorSet) -> Result<f64> {
    let branches = spec.branch_states(psi.amplitudes())?;
    let mut worst = 0.0_f64;
    for (alpha, v) in &branches {
        let own = records.record_of(alpha);
        for (b, r) in records.projectors.members().iter().enumerate() {
            let rv = r.matrix() * v;
            let residual = if own == Some(b) { (rv - v).norm() } else { rv.norm() };
            worst = worst.max(residual);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct JointProbability {
    pub record_labels: Vec<String>,
    pub entries: BTreeMap<(HistoryIndex, usize), f64>,
}

impl JointProbability {
    pub fn get(&self, alpha: &HistoryIndex, beta: usize) -> Option<f64> {
        self.entries.get(&(alpha.clone(), beta)).copied()
    }

    /// `sum_beta p(alpha, beta)`.
    pub fn marginal(&self, alpha: &HistoryIndex) -> f64 {
        self.entries
            .range((alpha.clone(), 0)..=(alpha.clone(), usize::MAX))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn histories(&self) -> Vec<HistoryIndex> {
        let mut hs: Vec<HistoryIndex> = self.entries.keys().map(|(h, _)| h.clone()).collect();
        hs.dedup();
        hs
    }
}

/// `p(alpha, beta) = Tr(R_beta C_alpha rho C_alpha^dag)`.
pub fn joint_probability(spec: &HistorySpec, rho: &DensityOperator, records: &RecordProjectorSet) -> Result<JointProbability> {
    if rho.dim() != spec.dim() || records.projectors.dim() != spec.dim() {
        return Err(Error::DimensionMismatch(
            "spec, state and records must share one dimension".into(),
        ));
    }
    let class_ops = spec.all_class_operators();
    let per_history: Vec<Vec<((HistoryIndex, usize), f64)>> = class_ops
        .par_iter()
        .map(|(alpha, m)| {
            // Tr(R B) = sum_ij R_ij B_ji
            let branch = m * rho.matrix() * m.adjoint();
            records
                .projectors
                .members()
                .iter()
                .enumerate()
                .map(|(b, r)| ((alpha.clone(), b), r.matrix().component_mul(&branch.transpose()).sum().re))
                .collect()
        })
        .collect();
    Ok(JointProbability {
        record_labels: records.projectors.labels().to_vec(),
        entries: per_history.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct ConditionalRecords {
    /// For each history with `p(alpha) > 0`: the best record and `max_beta p(beta|alpha)`.
    pub best: BTreeMap<HistoryIndex, (usize, f64)>,
    /// Histories skipped because `p(alpha)` vanishes.
    pub skipped: Vec<HistoryIndex>,
}

impl ConditionalRecords {
    pub fn min_best(&self) -> Option<f64> {
        self.best.values().map(|&(_, p)| p).reduce(f64::min)
    }
}

/// `max_beta p(beta | alpha) = p(alpha, beta) / p(alpha)`.
pub fn conditional_record_probability(joint: &JointProbability) -> ConditionalRecords {
    let mut out = ConditionalRecords::default();
    for alpha in joint.histories() {
        let p_alpha = joint.marginal(&alpha);
        if p_alpha <= MIN_BRANCH_WEIGHT {
            out.skipped.push(alpha);
            continue;
        }
        let best = joint
            .entries
            .range((alpha.clone(), 0)..=(alpha.clone(), usize::MAX))
            .map(|((_, b), p)| (*b, p / p_alpha))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        out.best.insert(alpha, best);
    }
    out
}

/// `rho_eff(alpha) = C rho C^dag / Tr(C rho C^dag)` and its purity.
pub fn effective_density(spec: &HistorySpec, rho: &DensityOperator, alpha: &HistoryIndex) -> Result<(DensityOperator, f64)> {
    let cop = class_operator(spec, alpha)?;
    if rho.dim() != spec.dim() {
        return Err(Error::DimensionMismatch("density operator and spec differ in dim".into()));
    }
    let m = cop.matrix() * rho.matrix() * cop.matrix().adjoint();
    let weight = m.trace().re;
    if weight <= MIN_BRANCH_WEIGHT {
        return Err(Error::NullBranch { weight });
    }
    let op = ComplexOperator::from_matrix_unchecked(m / c(weight, 0.0)).hermitian_part();
    let eff = DensityOperator::new(op)?;
    let purity = eff.purity();
    Ok((eff, purity))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RecordCapacity {
    pub value: u64,
    pub saturated: bool,
}

/// Least number of environment record labels compatible with decoherence: `A^(n-1)`.
pub fn record_capacity_check(alternatives: u64, times: u32) -> Result<RecordCapacity> {
    if alternatives == 0 || times == 0 {
        return Err(Error::invalid("alternatives and number of times must be at least 1"));
    }
    match alternatives.checked_pow(times - 1) {
        Some(v) if v <= CAPACITY_SATURATION => Ok(RecordCapacity {
            value: v,
            saturated: false,
        }),
        _ => Ok(RecordCapacity {
            value: CAPACITY_SATURATION,
            saturated: true,
        }),
    }
}

/// `rho(t_n)`: the initial state carried through the unprojected dynamics.
pub fn evolved_state(spec: &HistorySpec, rho: &DensityOperator) -> Result<ComplexOperator> {
    let u = spec.total_propagator();
    let m = u.matrix() * rho.matrix() * u.matrix().adjoint();
    ComplexOperator::new(m)
}

/// Builds a [`Ket`] from real amplitudes.
pub fn real_ket(values: &[f64]) -> Ket {
    DVector::from_iterator(values.len(), values.iter().map(|&x| c(x, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qubit_z() -> ProjectorFamily {
        ProjectorFamily::from_index_groups(2, &[vec![0], vec![1]], vec!["0".into(), "1".into()]).unwrap()
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> ComplexOperator {
        let m = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        ComplexOperator::new(m).unwrap().hermitian_part()
    }

    fn random_density(rng: &mut ChaCha8Rng, n: usize) -> DensityOperator {
        let a = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = &a * a.adjoint();
        let tr = m.trace();
        DensityOperator::new(ComplexOperator::new(m / tr).unwrap().hermitian_part()).unwrap()
    }

    fn plus_minus() -> ProjectorFamily {
        let s = 1.0 / 2f64.sqrt();
        let basis = CMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]);
        ProjectorFamily::from_basis_groups(&basis, &[vec![0], vec![1]], vec!["+".into(), "-".into()]).unwrap()
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let hs = enumerate_histories(&[2, 3]);
        let raw: Vec<Vec<usize>> = hs.iter().map(|h| h.0.clone()).collect();
        assert_eq!(raw, vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 0], vec![1, 1], vec![1, 2]]);
    }

    #[test]
    fn class_operator_single_time_is_projector() {
        let spec = HistorySpec::new(ComplexOperator::zeros(2), vec![0.0], vec![qubit_z()], 1.0).unwrap();
        let cop = class_operator(&spec, &HistoryIndex::new(vec![1])).unwrap();
        assert_eq!(&cop, &qubit_z().members()[1]);
    }

    #[test]
    fn class_operator_frozen_dynamics() {
        let spec = HistorySpec::new(ComplexOperator::zeros(2), vec![0.0, 1.0], vec![qubit_z(), plus_minus()], 1.0).unwrap();
        let alpha = HistoryIndex::new(vec![0, 1]);
        let cop = class_operator(&spec, &alpha).unwrap();
        let want = plus_minus().members()[1].compose(&qubit_z().members()[0]).unwrap();
        assert!(cop.max_deviation(&want) <= 1e-15);
    }

    #[test]
    fn class_operator_matches_hand_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_hermitian(&mut rng, 2);
        let spec = HistorySpec::new(h.clone(), vec![0.2, 1.1], vec![qubit_z(), plus_minus()], 1.0).unwrap();
        let u = evolve(&h, 0.9, 1.0).unwrap();
        for alpha in spec.histories() {
            let p1 = qubit_z().members()[alpha.0[0]].clone();
            let p2 = plus_minus().members()[alpha.0[1]].clone();
            let want = p2.compose(&u).unwrap().compose(&p1).unwrap();
            assert!(class_operator(&spec, &alpha).unwrap().max_deviation(&want) <= 1e-12);
        }
        assert!(class_operator(&spec, &HistoryIndex::new(vec![0, 2])).is_err());
        assert!(class_operator(&spec, &HistoryIndex::new(vec![0])).is_err());
    }

    #[test]
    fn frozen_pointer_state() {
        let spec = HistorySpec::new(ComplexOperator::zeros(2), vec![0.0, 1.0], vec![qubit_z(), qubit_z()], 1.0).unwrap();
        let rho = DensityOperator::diagonal(&[1.0, 0.0]).unwrap();
        let d = decoherence_matrix(&spec, &rho).unwrap();
        for (i, a) in d.histories().iter().enumerate() {
            for (j, _) in d.histories().iter().enumerate() {
                let want = if i == j && a.0 == vec![0, 0] { 1.0 } else { 0.0 };
                assert!((d.entries()[(i, j)] - c(want, 0.0)).norm() <= 1e-15);
            }
        }
    }

    #[test]
    fn rotation_qubit_matches_trace_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = ComplexOperator::from_rows(2, &[c(0.0, 0.0), c(0.7, 0.0), c(0.7, 0.0), c(0.0, 0.0)]).unwrap();
        let spec = HistorySpec::new(h, vec![0.0, 0.8], vec![qubit_z(), qubit_z()], 1.0).unwrap();
        let rho = random_density(&mut rng, 2);
        let d = decoherence_matrix(&spec, &rho).unwrap();
        for (i, a) in d.histories().iter().enumerate() {
            for (j, b) in d.histories().iter().enumerate() {
                let ca = class_operator(&spec, a).unwrap();
                let cb = class_operator(&spec, b).unwrap();
                let want = (ca.matrix() * rho.matrix() * cb.matrix().adjoint()).trace();
                assert!((d.entries()[(i, j)] - want).norm() <= 1e-12);
            }
        }
        assert!(d.final_label_leak() <= 1e-12);
        assert!(d.hermiticity_defect() <= 1e-12);
        assert!((d.total() - c(1.0, 0.0)).norm() <= 1e-10);
    }

    #[test]
    fn pure_and_mixed_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = random_hermitian(&mut rng, 3);
        let fam = ProjectorFamily::from_index_groups(3, &[vec![0], vec![1, 2]], vec!["a".into(), "b".into()]).unwrap();
        let spec = HistorySpec::new(h, vec![0.0, 0.5, 1.4], vec![fam.clone(), fam.clone(), fam], 1.0).unwrap();
        let v = Ket::from_fn(3, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let psi = PureState::normalized(v).unwrap();
        let a = decoherence_matrix(&spec, &DensityOperator::from_pure(&psi)).unwrap();
        let b = decoherence_matrix_pure(&spec, &psi).unwrap();
        assert!(max_abs(&(a.entries() - b.entries())) <= 1e-13);
    }

    #[test]
    fn probabilities_diagonal_and_defect() {
        let mut e = CMatrix::zeros(4, 4);
        e[(0, 0)] = c(1.0, 0.0);
        let d = DecoherenceMatrix::from_entries(vec![2, 2], e, DEFAULT_TOLERANCE).unwrap();
        let p = probabilities(&d);
        assert_eq!(p.values.iter().map(|(_, x)| *x).collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.sum_rule_defect, 0.0);
    }

    #[test]
    fn sum_rule_defect_matches_pairing_enumeration() {
        // D with Re D = 0.1 between (0,0) and (1,0) (one adjacent merge at time 0)
        let mut e = CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.3, 0.0), c(0.2, 0.0), c(0.3, 0.0), c(0.2, 0.0)]));
        e[(0, 2)] = c(0.1, 0.05);
        e[(2, 0)] = c(0.1, -0.05);
        let d = DecoherenceMatrix::from_entries(vec![2, 2], e.clone(), DEFAULT_TOLERANCE).unwrap();
        let got = probabilities(&d).sum_rule_defect;

        // oracle: enumerate every single merge and every merged history explicitly
        let hs = enumerate_histories(&[2, 2]);
        let mut oracle = 0.0_f64;
        for k in 0..2 {
            let groups: Vec<Vec<Vec<usize>>> =
                (0..2).map(|t| if t == k { vec![vec![0, 1]] } else { vec![vec![0], vec![1]] }).collect();
            let coarse = d.coarse_grain(&groups).unwrap();
            for (ci, ch) in coarse.histories().iter().enumerate() {
                let fine: f64 = hs
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| (0..2).all(|t| t == k || h.0[t] == ch.0[t]))
                    .map(|(i, _)| e[(i, i)].re)
                    .sum();
                oracle = oracle.max((coarse.entries()[(ci, ci)].re - fine).abs());
            }
        }
        assert!((got - oracle).abs() <= 1e-15);
        assert!(got >= 0.2 - 1e-15);
    }

    #[test]
    fn double_slit_toy_has_unit_defect() {
        // H = 0; branches |0><0|, |1><1| then +/-; psi = |+> gives equal, non-orthogonal branches
        let spec = HistorySpec::new(ComplexOperator::zeros(2), vec![0.0, 1.0], vec![qubit_z(), plus_minus()], 1.0).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let psi = PureState::new(real_ket(&[s, s])).unwrap();
        let d = decoherence_matrix_pure(&spec, &psi).unwrap();
        // hand computation: every branch is (+-1/2)|+-> so |D| = 1/4 = D(a,a)
        for i in 0..4 {
            assert!((d.entries()[(i, i)].re - 0.25).abs() <= 1e-15);
        }
        assert!((decoherence_defect(&d) - 1.0).abs() <= 1e-12);
        assert!((consistency_defect(&d) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn exactly_decoherent_has_zero_defect() {
        let spec = HistorySpec::new(ComplexOperator::zeros(2), vec![0.0, 1.0], vec![qubit_z(), qubit_z()], 1.0).unwrap();
        let rho = DensityOperator::diagonal(&[0.4, 0.6]).unwrap();
        let d = decoherence_matrix(&spec, &rho).unwrap();
        assert!(decoherence_defect(&d) <= 1e-12);
        assert!(d.is_decoherent() && d.is_consistent());
    }

    #[test]
    fn single_time_records_are_own_record() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let fam = ProjectorFamily::from_index_groups(3, &[vec![0], vec![1, 2]], vec!["a".into(), "b".into()]).unwrap();
        let spec = HistorySpec::new(random_hermitian(&mut rng, 3), vec![0.0], vec![fam.clone()], 1.0).unwrap();
        let v = Ket::from_fn(3, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let psi = PureState::normalized(v).unwrap();
        let rec = find_records(&spec, &psi, 1e-10).unwrap();
        for (alpha, &b) in &rec.correlation {
            let r = &rec.projectors.members()[b];
            let p = &fam.members()[alpha.0[0]];
            // R_alpha lies inside P_alpha
            assert!(r.max_deviation(&p.compose(r).unwrap()) <= 1e-12);
        }
        assert!(record_residual(&spec, &psi, &rec).unwrap() <= 1e-12);
    }

    #[test]
    fn find_records_rejects_interfering_set() {
        let spec = HistorySpec::new(ComplexOperator::zeros(2), vec![0.0, 1.0], vec![qubit_z(), plus_minus()], 1.0).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let psi = PureState::new(real_ket(&[s, s])).unwrap();
        assert!(matches!(find_records(&spec, &psi, 1e-8), Err(Error::NoRecords { .. })));
    }

    #[test]
    fn trivial_records_reproduce_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let spec = HistorySpec::new(random_hermitian(&mut rng, 2), vec![0.0, 0.7], vec![qubit_z(), qubit_z()], 1.0).unwrap();
        let rho = random_density(&mut rng, 2);
        let rec = RecordProjectorSet::trivial(2, &spec.histories());
        let joint = joint_probability(&spec, &rho, &rec).unwrap();
        let p = probabilities(&decoherence_matrix(&spec, &rho).unwrap());
        for (alpha, pa) in &p.values {
            assert!((joint.get(alpha, 0).unwrap() - pa).abs() <= 1e-12);
        }
    }

    #[test]
    fn effective_density_purity() {
        let spec = HistorySpec::new(ComplexOperator::zeros(2), vec![0.0], vec![ProjectorFamily::trivial(2)], 1.0).unwrap();
        let rho = DensityOperator::diagonal(&[0.5, 0.5]).unwrap();
        let (_, purity) = effective_density(&spec, &rho, &HistoryIndex::new(vec![0])).unwrap();
        assert!((purity - 0.5).abs() <= 1e-12);

        let pure = DensityOperator::diagonal(&[1.0, 0.0]).unwrap();
        let (_, purity) = effective_density(&spec, &pure, &HistoryIndex::new(vec![0])).unwrap();
        assert!((purity - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn effective_density_null_branch() {
        let spec = HistorySpec::new(ComplexOperator::zeros(2), vec![0.0], vec![qubit_z()], 1.0).unwrap();
        let rho = DensityOperator::diagonal(&[1.0, 0.0]).unwrap();
        assert!(matches!(
            effective_density(&spec, &rho, &HistoryIndex::new(vec![1])),
            Err(Error::NullBranch { .. })
        ));
    }

    #[test]
    fn capacity_bound() {
        assert_eq!(record_capacity_check(2, 3).unwrap().value, 4);
        assert_eq!(record_capacity_check(7, 1).unwrap().value, 1);
        assert_eq!(record_capacity_check(3, 4).unwrap().value, 27);
        let big = record_capacity_check(2, 64).unwrap();
        assert!(!big.saturated && big.value == 1 << 63);
        let over = record_capacity_check(2, 65).unwrap();
        assert!(over.saturated);
        assert!(record_capacity_check(3, 100).unwrap().saturated);
        assert!(record_capacity_check(0, 2).is_err());
    }

    #[test]
    fn impulse_must_precede_final_time() {
        let spec = HistorySpec::new(ComplexOperator::zeros(2), vec![0.0, 1.0], vec![qubit_z(), qubit_z()], 1.0).unwrap();
        assert!(spec.clone().with_impulse(1, ComplexOperator::identity(2)).is_err());
        assert!(spec.with_impulse(0, ComplexOperator::identity(2)).is_ok());
    }

    #[test]
    fn spec_validation() {
        let h = ComplexOperator::zeros(2);
        assert!(HistorySpec::new(h.clone(), vec![1.0, 0.5], vec![qubit_z(), qubit_z()], 1.0).is_err());
        assert!(HistorySpec::new(h.clone(), vec![0.0], vec![qubit_z(), qubit_z()], 1.0).is_err());
        assert!(HistorySpec::new(h, vec![0.0], vec![ProjectorFamily::trivial(3)], 1.0).is_err());
    }
}
