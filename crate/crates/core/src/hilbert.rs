//! Dense complex operator algebra on finite Hilbert spaces.
//!
//! Everything here works on plain dense matrices. Composite spaces are
//! described by a list of factor dimensions, with factor 0 the slowest
//! (leftmost) index of the Kronecker product.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type Ket = DVector<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const DENSITY_HERMITIAN_TOL: f64 = 1e-12;
pub const DENSITY_TRACE_TOL: f64 = 1e-12;
pub const DENSITY_PSD_TOL: f64 = 1e-10;
pub const PURE_NORM_TOL: f64 = 1e-12;
pub const PROJECTOR_TOL: f64 = 1e-10;

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// A dense square complex matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexOperator {
    matrix: CMatrix,
}

impl ComplexOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("operator has non-finite entries"));
        }
        Ok(Self { matrix })
    }

    /// Internal constructor for results of closed operations on valid operators.
    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        debug_assert_eq!(matrix.nrows(), matrix.ncols());
        Self { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix_unchecked(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_matrix_unchecked(CMatrix::zeros(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| c(x, 0.0)));
        Self::from_matrix_unchecked(CMatrix::from_diagonal(&d))
    }

    /// Row-major construction.
    pub fn from_rows(dim: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for dim {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(CMatrix::from_row_slice(dim, dim, entries))
    }

    /// `|v><v|` for an arbitrary (not necessarily normalized) ket.
    pub fn outer(v: &Ket) -> Self {
        Self::from_matrix_unchecked(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self::from_matrix_unchecked(self.matrix.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self::from_matrix_unchecked(&self.matrix * &other.matrix))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self::from_matrix_unchecked(&self.matrix + &other.matrix))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self::from_matrix_unchecked(&self.matrix - &other.matrix))
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self::from_matrix_unchecked(&self.matrix * factor)
    }

    pub fn apply(&self, v: &Ket) -> Result<Ket> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "ket of length {} against operator of dim {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(&self.matrix * v)
    }

    /// `max |A - A^dag|` entrywise.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// `max |U^dag U - 1|` entrywise.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        max_abs(&(self.matrix.adjoint() * &self.matrix - CMatrix::identity(n, n)))
    }

    /// Largest entrywise deviation from another operator of the same dim.
    pub fn max_deviation(&self, other: &Self) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        max_abs(&(&self.matrix - &other.matrix))
    }

    /// `(A + A^dag) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_matrix_unchecked((&self.matrix + self.matrix.adjoint()) * c(0.5, 0.0))
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
pub fn hermitian_eigen(op: &ComplexOperator) -> Result<(Vec<f64>, CMatrix)> {
    let defect = op.hermiticity_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: defect });
    }
    let eig = SymmetricEigen::new(op.hermitian_part().into_matrix());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = op.dim();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

/// Kronecker product with `a` indexing the slow factor.
pub fn tensor(a: &ComplexOperator, b: &ComplexOperator) -> ComplexOperator {
    ComplexOperator::from_matrix_unchecked(a.matrix.kronecker(&b.matrix))
}

pub fn tensor_ket(a: &Ket, b: &Ket) -> Ket {
    a.kronecker(b)
}

/// Trace out every factor not listed in `keep`.
pub fn partial_trace(op: &ComplexOperator, dims: &[usize], keep: &[usize]) -> Result<ComplexOperator> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::DimensionMismatch("factor dims must be positive".into()));
    }
    let total: usize = dims.iter().product();
    if total != op.dim() {
        return Err(Error::DimensionMismatch(format!(
            "factor dims {dims:?} multiply to {total}, operator has dim {}",
            op.dim()
        )));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&k| k >= dims.len()) {
        return Err(Error::DimensionMismatch(format!(
            "keep {keep:?} out of range for {} factors",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();

    // strides for the row-major multi-index
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let kept_dims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let kept_dim: usize = kept_dims.iter().product();
    let traced_dim: usize = traced_dims.iter().product();

    let offsets = |factors: &[usize], fdims: &[usize]| -> Vec<usize> {
        let count: usize = fdims.iter().product();
        (0..count)
            .map(|mut flat| {
                let mut off = 0;
                for (pos, &k) in factors.iter().enumerate().rev() {
                    let digit = flat % fdims[pos];
                    flat /= fdims[pos];
                    off += digit * strides[k];
                }
                off
            })
            .collect()
    };
    let kept_off = offsets(&kept, &kept_dims);
    let traced_off = offsets(&traced, &traced_dims);

    let m = op.matrix();
    let mut out = CMatrix::zeros(kept_dim, kept_dim);
    for i in 0..kept_dim {
        for j in 0..kept_dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..traced_dim {
                acc += m[(kept_off[i] + traced_off[t], kept_off[j] + traced_off[t])];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(ComplexOperator::from_matrix_unchecked(out))
}

/// `U = exp(-i H t / hbar)` through the eigendecomposition of `H`.
pub fn evolve(hamiltonian: &ComplexOperator, t: f64, hbar: f64) -> Result<ComplexOperator> {
    if !(hbar > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("evolve needs finite t and hbar > 0 (t={t}, hbar={hbar})")));
    }
    let (values, vectors) = hermitian_eigen(hamiltonian)?;
    let phases = DVector::from_iterator(
        values.len(),
        values.iter().map(|&e| Complex64::from_polar(1.0, -e * t / hbar)),
    );
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    Ok(ComplexOperator::from_matrix_unchecked(scaled * vectors.adjoint()))
}

/// Valid density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    op: ComplexOperator,
}

impl DensityOperator {
    pub fn new(op: ComplexOperator) -> Result<Self> {
        let herm = op.hermiticity_defect();
        if herm > DENSITY_HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: herm });
        }
        let tr = op.trace();
        if (tr - c(1.0, 0.0)).norm() > DENSITY_TRACE_TOL {
            return Err(Error::invalid(format!("density operator trace is {tr}, expected 1")));
        }
        let (values, _) = hermitian_eigen(&op)?;
        if let Some(&min) = values.first() {
            if min < -DENSITY_PSD_TOL {
                return Err(Error::invalid(format!("density operator has eigenvalue {min:e}")));
            }
        }
        Ok(Self { op })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        Self {
            op: ComplexOperator::outer(psi.amplitudes()),
        }
    }

    /// `diag(p_0, p_1, ...)` in the computational basis.
    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        Self::new(ComplexOperator::from_real_diagonal(weights))
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &ComplexOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn purity(&self) -> f64 {
        (self.op.matrix() * self.op.matrix()).trace().re
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        DensityOperator {
            op: tensor(&self.op, &other.op),
        }
    }
}

/// A normalized ket.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Ket,
}

impl PureState {
    pub fn new(amplitudes: Ket) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::DimensionMismatch("empty state".into()));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > PURE_NORM_TOL {
            return Err(Error::invalid(format!("state norm is {norm}, expected 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes `v`; fails on the zero vector.
    pub fn normalized(v: Ket) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self { amplitudes: v / c(norm, 0.0) })
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid(format!("basis index {index} out of range for dim {dim}")));
        }
        let mut v = Ket::zeros(dim);
        v[index] = c(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &Ket {
        &self.amplitudes
    }

    pub fn tensor(&self, other: &PureState) -> PureState {
        PureState {
            amplitudes: tensor_ket(&self.amplitudes, &other.amplitudes),
        }
    }
}

/// Rotate `v` so its first significant component is real and positive.
fn fix_phase(v: &mut Ket) {
    let scale = v.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-8 * scale).copied() {
        let phase = z.conj() / z.norm();
        *v *= phase;
    }
}

fn lexicographic(a: &Ket, b: &Ket) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let ord = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

/// Purification `sum_n sqrt(p_n) |n> (x) |n~>` on the doubled space.
///
/// The eigenbasis is ordered by descending eigenvalue, each eigenvector is
/// phase-fixed, and ties within 1e-12 are broken by lexicographic order of
/// the eigenvectors so that the output is reproducible.
pub fn purify(rho: &DensityOperator) -> PureState {
    let (values, vectors) =
        hermitian_eigen(rho.operator()).expect("density operators are Hermitian by construction");
    let n = rho.dim();
    let mut pairs: Vec<(f64, Ket)> = (0..n)
        .map(|j| {
            let mut v: Ket = vectors.column(j).into_owned();
            fix_phase(&mut v);
            (values[j].max(0.0), v)
        })
        .collect();
    pairs.sort_by(|(pa, va), (pb, vb)| {
        if (pa - pb).abs() <= 1e-12 {
            lexicographic(va, vb)
        } else {
            pb.total_cmp(pa)
        }
    });
    let mut psi = Ket::zeros(n * n);
    for (p, v) in &pairs {
        if *p == 0.0 {
            continue;
        }
        psi += tensor_ket(v, v) * c(p.sqrt(), 0.0);
    }
    // eigenvalues sum to Tr(rho) = 1 up to rounding
    PureState::normalized(psi).expect("purification of a unit-trace state is nonzero")
}

/// An exclusive, exhaustive family of orthogonal projectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorFamily {
    members: Vec<ComplexOperator>,
    labels: Vec<String>,
}

impl ProjectorFamily {
    pub fn new(members: Vec<ComplexOperator>, labels: Vec<String>) -> Result<Self> {
        let family = Self::new_unchecked(members, labels)?;
        family.validate()?;
        Ok(family)
    }

    fn new_unchecked(members: Vec<ComplexOperator>, labels: Vec<String>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("projector family must have at least one member"));
        }
        if members.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} members but {} labels",
                members.len(),
                labels.len()
            )));
        }
        let dim = members[0].dim();
        if members.iter().any(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch("family members differ in dimension".into()));
        }
        Ok(Self { members, labels })
    }

    /// Diagonal projectors onto groups of computational basis indices.
    pub fn from_index_groups(dim: usize, groups: &[Vec<usize>], labels: Vec<String>) -> Result<Self> {
        let mut members = Vec::with_capacity(groups.len());
        for g in groups {
            let mut diag = vec![0.0; dim];
            for &i in g {
                if i >= dim {
                    return Err(Error::invalid(format!("basis index {i} out of range for dim {dim}")));
                }
                diag[i] = 1.0;
            }
            members.push(ComplexOperator::from_real_diagonal(&diag));
        }
        Self::new(members, labels)
    }

    /// Rank-one projectors onto an orthonormal basis given as matrix columns.
    pub fn from_basis_groups(basis: &CMatrix, groups: &[Vec<usize>], labels: Vec<String>) -> Result<Self> {
        let n = basis.nrows();
        let mut members = Vec::with_capacity(groups.len());
        for g in groups {
            let mut p = CMatrix::zeros(n, n);
            for &i in g {
                let col = basis.column(i);
                p += col * col.adjoint();
            }
            members.push(ComplexOperator::new(p)?);
        }
        Self::new(members, labels)
    }

    pub fn trivial(dim: usize) -> Self {
        Self {
            members: vec![ComplexOperator::identity(dim)],
            labels: vec!["1".into()],
        }
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[ComplexOperator] {
        &self.members
    }

    pub fn member(&self, index: usize) -> Option<&ComplexOperator> {
        self.members.get(index)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// `P (x) 1` for every member.
    pub fn extend_with_identity(&self, extra_dim: usize) -> Self {
        let id = ComplexOperator::identity(extra_dim);
        Self {
            members: self.members.iter().map(|p| tensor(p, &id)).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Measured defects of each family invariant.
    pub fn defects(&self) -> FamilyDefects {
        let n = self.dim();
        let mut idempotent = 0.0_f64;
        let mut hermitian = 0.0_f64;
        let mut exclusive = 0.0_f64;
        let mut sum = CMatrix::zeros(n, n);
        for (i, p) in self.members.iter().enumerate() {
            let m = p.matrix();
            idempotent = idempotent.max(max_abs(&(m * m - m)));
            hermitian = hermitian.max(p.hermiticity_defect());
            for q in &self.members[i + 1..] {
                exclusive = exclusive.max(max_abs(&(m * q.matrix())));
            }
            sum += m;
        }
        let exhaustive = max_abs(&(sum - CMatrix::identity(n, n)));
        FamilyDefects {
            idempotent,
            hermitian,
            exclusive,
            exhaustive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.defects();
        let check = |name: &str, v: f64| -> Result<()> {
            if v > PROJECTOR_TOL {
                Err(Error::invalid(format!("projector family fails {name} check (defect {v:e})")))
            } else {
                Ok(())
            }
        };
        check("idempotent", d.idempotent)?;
        check("Hermitian", d.hermitian)?;
        check("exclusive", d.exclusive)?;
        check("exhaustive", d.exhaustive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyDefects {
    pub idempotent: f64,
    pub hermitian: f64,
    pub exclusive: f64,
    pub exhaustive: f64,
}

impl FamilyDefects {
    pub fn max(&self) -> f64 {
        self.idempotent.max(self.hermitian).max(self.exclusive).max(self.exhaustive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_op(rng: &mut ChaCha8Rng, n: usize) -> ComplexOperator {
        let m = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        ComplexOperator::new(m).unwrap()
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> ComplexOperator {
        random_op(rng, n).hermitian_part()
    }

    fn random_density(rng: &mut ChaCha8Rng, n: usize) -> DensityOperator {
        let a = random_op(rng, n);
        let m = a.matrix() * a.matrix().adjoint();
        let tr = m.trace();
        DensityOperator::new(ComplexOperator::new(m / tr).unwrap().hermitian_part()).unwrap()
    }

    #[test]
    fn tensor_identity_and_projector_convention() {
        let id2 = ComplexOperator::identity(2);
        assert_eq!(tensor(&id2, &id2), ComplexOperator::identity(4));
        let p0 = ComplexOperator::from_real_diagonal(&[1.0, 0.0]);
        assert_eq!(tensor(&p0, &id2), ComplexOperator::from_real_diagonal(&[1.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn tensor_mixed_product_against_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b, cc, d) = (
            random_op(&mut rng, 2),
            random_op(&mut rng, 2),
            random_op(&mut rng, 2),
            random_op(&mut rng, 2),
        );
        let lhs = tensor(&a, &b).compose(&tensor(&cc, &d)).unwrap();
        let rhs = tensor(&a.compose(&cc).unwrap(), &b.compose(&d).unwrap());
        assert!(lhs.max_deviation(&rhs) <= 1e-12);

        // explicit Kronecker index oracle: (A (x) B)[2i+k, 2j+l] = A[i,j] B[k,l]
        let ab = tensor(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let want = a.matrix()[(i, j)] * b.matrix()[(k, l)];
                        assert!((ab.matrix()[(2 * i + k, 2 * j + l)] - want).norm() <= 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_bell_and_product() {
        let s = 1.0 / 2f64.sqrt();
        let bell = PureState::new(Ket::from_vec(vec![c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)])).unwrap();
        let rho = DensityOperator::from_pure(&bell);
        let reduced = partial_trace(rho.operator(), &[2, 2], &[0]).unwrap();
        let half = ComplexOperator::from_real_diagonal(&[0.5, 0.5]);
        assert!(reduced.max_deviation(&half) <= 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ra = random_density(&mut rng, 3);
        let rb = random_density(&mut rng, 2);
        let joint = ra.tensor(&rb);
        let back = partial_trace(joint.operator(), &[3, 2], &[0]).unwrap();
        assert!(back.max_deviation(ra.operator()) <= 1e-12);
        let back_b = partial_trace(joint.operator(), &[3, 2], &[1]).unwrap();
        assert!(back_b.max_deviation(rb.operator()) <= 1e-12);
    }

    #[test]
    fn partial_trace_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(&mut rng, 4);
        let m = rho.matrix();
        for keep in [0usize, 1] {
            let got = partial_trace(rho.operator(), &[2, 2], &[keep]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let mut want = c(0.0, 0.0);
                    for t in 0..2 {
                        let (r, cidx) = if keep == 0 { (2 * i + t, 2 * j + t) } else { (2 * t + i, 2 * t + j) };
                        want += m[(r, cidx)];
                    }
                    assert!((got.matrix()[(i, j)] - want).norm() <= 1e-12);
                }
            }
            assert!((got.trace() - rho.operator().trace()).norm() <= 1e-12);
        }
    }

    #[test]
    fn partial_trace_three_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 3);
        let cc = random_density(&mut rng, 2);
        let abc = a.tensor(&b).tensor(&cc);
        let ac = partial_trace(abc.operator(), &[2, 3, 2], &[0, 2]).unwrap();
        assert!(ac.max_deviation(a.tensor(&cc).operator()) <= 1e-12);
        let only_b = partial_trace(abc.operator(), &[2, 3, 2], &[1]).unwrap();
        assert!(only_b.max_deviation(b.operator()) <= 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let op = ComplexOperator::identity(4);
        assert!(matches!(partial_trace(&op, &[2, 3], &[0]), Err(Error::DimensionMismatch(_))));
        assert!(matches!(partial_trace(&op, &[2, 2], &[2]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn evolve_trivial_and_diagonal() {
        let zero = ComplexOperator::zeros(3);
        assert!(evolve(&zero, 2.7, 1.0).unwrap().max_deviation(&ComplexOperator::identity(3)) <= 1e-15);

        let (e0, e1, t, hbar) = (0.3, -1.7, 2.1, 0.8);
        let h = ComplexOperator::from_real_diagonal(&[e0, e1]);
        let u = evolve(&h, t, hbar).unwrap();
        assert!((u.matrix()[(0, 0)] - Complex64::from_polar(1.0, -e0 * t / hbar)).norm() <= 1e-14);
        assert!((u.matrix()[(1, 1)] - Complex64::from_polar(1.0, -e1 * t / hbar)).norm() <= 1e-14);
        assert!(u.matrix()[(0, 1)].norm() <= 1e-15);
    }

    /// exp(M) by scaling and squaring of a Taylor series.
    fn expm_series(m: &CMatrix) -> CMatrix {
        let norm = m.iter().map(|z| z.norm()).sum::<f64>();
        let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0) as u32;
        let scaled = m / c(2f64.powi(squarings as i32), 0.0);
        let n = m.nrows();
        let mut term = CMatrix::identity(n, n);
        let mut sum = CMatrix::identity(n, n);
        for k in 1..40 {
            term = &term * &scaled / c(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn evolve_matches_series_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(&mut rng, 4);
        let (t, hbar) = (1.3, 1.0);
        let u = evolve(&h, t, hbar).unwrap();
        let oracle = expm_series(&(h.matrix() * c(0.0, -t / hbar)));
        assert!(max_abs(&(u.matrix() - oracle)) <= 1e-9);
        assert!(u.unitarity_defect() <= 1e-10);
    }

    #[test]
    fn evolve_rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let h = ComplexOperator::new(m).unwrap();
        assert!(matches!(evolve(&h, 1.0, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn purify_pure_and_diagonal_inputs() {
        let rho = DensityOperator::diagonal(&[1.0, 0.0]).unwrap();
        let psi = purify(&rho);
        let want = PureState::basis(2, 0).unwrap().tensor(&PureState::basis(2, 0).unwrap());
        assert!((psi.amplitudes() - want.amplitudes()).norm() <= 1e-12);

        for p in [0.3, 0.8] {
            let rho = DensityOperator::diagonal(&[p, 1.0 - p]).unwrap();
            let psi = purify(&rho);
            let a = psi.amplitudes();
            assert!((a[0] - c(p.sqrt(), 0.0)).norm() <= 1e-12);
            assert!((a[3] - c((1.0 - p).sqrt(), 0.0)).norm() <= 1e-12);
            assert!(a[1].norm() <= 1e-12 && a[2].norm() <= 1e-12);
        }
    }

    #[test]
    fn purify_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [2, 3, 5] {
            let rho = random_density(&mut rng, n);
            let psi = purify(&rho);
            let back = partial_trace(DensityOperator::from_pure(&psi).operator(), &[n, n], &[0]).unwrap();
            assert!(back.max_deviation(rho.operator()) <= 1e-10);
        }
    }

    #[test]
    fn purify_is_deterministic_under_degeneracy() {
        let rho = DensityOperator::diagonal(&[0.25; 4]).unwrap();
        let a = purify(&rho);
        let b = purify(&rho.clone());
        assert_eq!(a, b);
    }

    #[test]
    fn density_validation() {
        assert!(DensityOperator::diagonal(&[0.5, 0.6]).is_err());
        assert!(DensityOperator::diagonal(&[1.5, -0.5]).is_err());
        assert!(DensityOperator::diagonal(&[0.25, 0.75]).is_ok());
    }

    #[test]
    fn projector_family_checks() {
        let fam = ProjectorFamily::from_index_groups(3, &[vec![0], vec![1, 2]], vec!["a".into(), "b".into()]).unwrap();
        assert!(fam.defects().max() <= 1e-15);
        // not exhaustive
        assert!(ProjectorFamily::from_index_groups(3, &[vec![0], vec![1]], vec!["a".into(), "b".into()]).is_err());
        // overlapping
        assert!(ProjectorFamily::from_index_groups(2, &[vec![0, 1], vec![1]], vec!["a".into(), "b".into()]).is_err());
    }
}
