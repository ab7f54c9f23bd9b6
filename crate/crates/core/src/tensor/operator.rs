use nalgebra::{DMatrix, DVector};
use std::ops::Deref;

use super::linalg;
use super::space::{LabeledSpace, SpaceProduct};
use crate::{Error, Result, C64};

/// Entrywise tolerance for accepting a matrix as Hermitian, relative to `max(1, max|m_ij|)`.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// A dense complex square matrix acting on a labelled product space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: SpaceProduct,
    matrix: DMatrix<C64>,
}

impl Operator {
    pub fn new(space: SpaceProduct, matrix: DMatrix<C64>) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "space {space} needs a {d}x{d} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { space, matrix })
    }

    /// Build from a matrix whose composite index follows the factor order `ordered`
    /// rather than the canonical label order.
    pub fn from_ordered(ordered: &[LabeledSpace], matrix: DMatrix<C64>) -> Result<Self> {
        let space = SpaceProduct::new(ordered.iter().cloned())?;
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "factor order needs a {d}x{d} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let map = space.reorder_map(ordered)?;
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                out[(map[i], map[j])] = matrix[(i, j)];
            }
        }
        Ok(Self { space, matrix: out })
    }

    pub fn identity(space: SpaceProduct) -> Self {
        let d = space.dim();
        Self {
            space,
            matrix: DMatrix::identity(d, d),
        }
    }

    pub fn zeros(space: SpaceProduct) -> Self {
        let d = space.dim();
        Self {
            space,
            matrix: DMatrix::zeros(d, d),
        }
    }

    pub fn space(&self) -> &SpaceProduct {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    /// Full transpose in the computational product basis.
    pub fn transpose(&self) -> Operator {
        Operator {
            space: self.space.clone(),
            matrix: self.matrix.transpose(),
        }
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator {
            space: self.space.clone(),
            matrix: self.matrix.scale(s),
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.same_space(other)?;
        Ok(Operator {
            space: self.space.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.same_space(other)?;
        Ok(Operator {
            space: self.space.clone(),
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn mul(&self, other: &Operator) -> Result<Operator> {
        self.same_space(other)?;
        Ok(Operator {
            space: self.space.clone(),
            matrix: &self.matrix * &other.matrix,
        })
    }

    /// Hilbert–Schmidt inner product `Tr(self† other)`.
    pub fn hs_inner(&self, other: &Operator) -> Result<C64> {
        self.same_space(other)?;
        Ok(self
            .matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        linalg::frobenius_norm(&self.matrix)
    }

    pub fn frobenius_distance(&self, other: &Operator) -> Result<f64> {
        Ok(self.sub(other)?.frobenius_norm())
    }

    pub(crate) fn same_space(&self, other: &Operator) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch(format!("{} vs {}", self.space, other.space)));
        }
        Ok(())
    }

    /// Tensor product on the union of the two (disjoint) label sets.
    pub fn tensor(&self, other: &Operator) -> Result<Operator> {
        let space = self.space.union(&other.space)?;
        let own_labels: Vec<&str> = self.space.labels().collect();
        let (rest, sub) = space.split_offsets(&own_labels)?;
        let d = space.dim();
        let mut out = DMatrix::zeros(d, d);
        for (i1, &s1) in sub.iter().enumerate() {
            for (i2, &s2) in sub.iter().enumerate() {
                let a = self.matrix[(i1, i2)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for (j1, &r1) in rest.iter().enumerate() {
                    for (j2, &r2) in rest.iter().enumerate() {
                        out[(s1 + r1, s2 + r2)] = a * other.matrix[(j1, j2)];
                    }
                }
            }
        }
        Ok(Operator { space, matrix: out })
    }

    /// Trace out the factors named in `labels`.
    pub fn partial_trace<S: AsRef<str>>(&self, labels: &[S]) -> Result<Operator> {
        let space = self.space.without(labels)?;
        let (rest, sub) = self.space.split_offsets(labels)?;
        let d = rest.len();
        let mut out = DMatrix::zeros(d, d);
        for (i, &r1) in rest.iter().enumerate() {
            for (j, &r2) in rest.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &sub {
                    acc += self.matrix[(r1 + t, r2 + t)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(Operator { space, matrix: out })
    }

    /// Replace the named factors by their maximally mixed state:
    /// `(1/d_L) 1_L ⊗ Tr_L(self)`, on the same space as `self`.
    pub fn depolarize<S: AsRef<str>>(&self, labels: &[S]) -> Result<Operator> {
        let (rest, sub) = self.space.split_offsets(labels)?;
        let dl = sub.len() as f64;
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for &r1 in &rest {
            for &r2 in &rest {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &sub {
                    acc += self.matrix[(r1 + t, r2 + t)];
                }
                let v = acc / dl;
                for &t in &sub {
                    out[(r1 + t, r2 + t)] = v;
                }
            }
        }
        Ok(Operator {
            space: self.space.clone(),
            matrix: out,
        })
    }

    /// `Tr_L[self · (local ⊗ 1)]` where `L` is the label set of `local`.
    pub fn contract(&self, local: &Operator) -> Result<Operator> {
        if !local.space.is_subspace_of(&self.space) {
            return Err(Error::SpaceMismatch(format!(
                "{} is not a sub-product of {}",
                local.space, self.space
            )));
        }
        let labels: Vec<&str> = local.space.labels().collect();
        let space = self.space.without(&labels)?;
        let (rest, sub) = self.space.split_offsets(&labels)?;
        let d = rest.len();
        let mut out = DMatrix::zeros(d, d);
        for (i, &r1) in rest.iter().enumerate() {
            for (j, &r2) in rest.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (t1, &s1) in sub.iter().enumerate() {
                    for (t2, &s2) in sub.iter().enumerate() {
                        let l = local.matrix[(t2, t1)];
                        if l != C64::new(0.0, 0.0) {
                            acc += self.matrix[(r1 + s1, r2 + s2)] * l;
                        }
                    }
                }
                out[(i, j)] = acc;
            }
        }
        Ok(Operator { space, matrix: out })
    }

    /// The matrix with composite indices laid out in the factor order `ordered`.
    pub fn matrix_in_order(&self, ordered: &[LabeledSpace]) -> Result<DMatrix<C64>> {
        let map = self.space.reorder_map(ordered)?;
        let d = self.dim();
        Ok(DMatrix::from_fn(d, d, |i, j| self.matrix[(map[i], map[j])]))
    }
}

/// An [`Operator`] whose matrix is Hermitian.
///
/// Construction rejects matrices further than [`HERMITICITY_TOL`] from Hermitian and
/// replaces the rest by their Hermitian part `(m + m†)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(Operator);

impl HermitianOperator {
    pub fn new(space: SpaceProduct, matrix: DMatrix<C64>) -> Result<Self> {
        Self::from_operator(Operator::new(space, matrix)?)
    }

    pub fn from_ordered(ordered: &[LabeledSpace], matrix: DMatrix<C64>) -> Result<Self> {
        Self::from_operator(Operator::from_ordered(ordered, matrix)?)
    }

    pub fn from_operator(op: Operator) -> Result<Self> {
        let defect = linalg::hermiticity_defect(&op.matrix);
        if defect > HERMITICITY_TOL * linalg::max_abs(&op.matrix).max(1.0) {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self::symmetrized(op))
    }

    /// Wrap an operator known to be Hermitian up to rounding.
    pub(crate) fn symmetrized(op: Operator) -> Self {
        let matrix = linalg::hermitian_part(&op.matrix);
        HermitianOperator(Operator {
            space: op.space,
            matrix,
        })
    }

    pub fn identity(space: SpaceProduct) -> Self {
        HermitianOperator(Operator::identity(space))
    }

    pub fn zeros(space: SpaceProduct) -> Self {
        HermitianOperator(Operator::zeros(space))
    }

    /// `1/d` on the given space.
    pub fn maximally_mixed(space: SpaceProduct) -> Self {
        let d = space.dim() as f64;
        HermitianOperator(Operator::identity(space).scale(1.0 / d))
    }

    pub fn as_operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn real_trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn scale(&self, s: f64) -> HermitianOperator {
        HermitianOperator(self.0.scale(s))
    }

    pub fn add(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        Ok(HermitianOperator(self.0.add(&other.0)?))
    }

    pub fn sub(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        Ok(HermitianOperator(self.0.sub(&other.0)?))
    }

    pub fn transpose(&self) -> HermitianOperator {
        HermitianOperator(self.0.transpose())
    }

    /// Real part of the Hilbert–Schmidt inner product (exact for Hermitian pairs).
    pub fn hs(&self, other: &HermitianOperator) -> Result<f64> {
        Ok(self.0.hs_inner(&other.0)?.re)
    }

    pub fn tensor(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        Ok(HermitianOperator::symmetrized(self.0.tensor(&other.0)?))
    }

    pub fn partial_trace<S: AsRef<str>>(&self, labels: &[S]) -> Result<HermitianOperator> {
        Ok(HermitianOperator::symmetrized(self.0.partial_trace(labels)?))
    }

    pub fn depolarize<S: AsRef<str>>(&self, labels: &[S]) -> Result<HermitianOperator> {
        Ok(HermitianOperator::symmetrized(self.0.depolarize(labels)?))
    }

    pub fn contract(&self, local: &HermitianOperator) -> Result<HermitianOperator> {
        Ok(HermitianOperator::symmetrized(self.0.contract(&local.0)?))
    }

    /// Eigenvalues (ascending) and eigenvectors.
    pub fn eigh(&self) -> Result<(DVector<f64>, DMatrix<C64>)> {
        linalg::eigh(&self.0.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        linalg::min_eigenvalue(&self.0.matrix)
    }

    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -tol)
    }

    pub fn project_psd(&self) -> Result<HermitianOperator> {
        Ok(HermitianOperator(Operator {
            space: self.0.space.clone(),
            matrix: linalg::project_psd_matrix(&self.0.matrix)?,
        }))
    }
}

impl Deref for HermitianOperator {
    type Target = Operator;

    fn deref(&self) -> &Operator {
        &self.0
    }
}

impl From<HermitianOperator> for Operator {
    fn from(h: HermitianOperator) -> Operator {
        h.0
    }
}

/// A (not necessarily normalized) vector on a labelled product space.
#[derive(Debug, Clone, PartialEq)]
pub struct PureVector {
    space: SpaceProduct,
    entries: DVector<C64>,
}

impl PureVector {
    pub fn new(space: SpaceProduct, entries: DVector<C64>) -> Result<Self> {
        if entries.len() != space.dim() {
            return Err(Error::DimensionMismatch(format!(
                "space {space} needs {} entries, got {}",
                space.dim(),
                entries.len()
            )));
        }
        Ok(Self { space, entries })
    }

    /// Build from entries whose composite index follows the factor order `ordered`.
    pub fn from_ordered(ordered: &[LabeledSpace], entries: DVector<C64>) -> Result<Self> {
        let space = SpaceProduct::new(ordered.iter().cloned())?;
        if entries.len() != space.dim() {
            return Err(Error::DimensionMismatch(format!(
                "factor order needs {} entries, got {}",
                space.dim(),
                entries.len()
            )));
        }
        let map = space.reorder_map(ordered)?;
        let mut out = DVector::zeros(entries.len());
        for (i, &m) in map.iter().enumerate() {
            out[m] = entries[i];
        }
        Ok(Self { space, entries: out })
    }

    /// `|1>> = sum_i |i>|i>` on two spaces of equal dimension (norm `sqrt(d)`).
    pub fn identity_choi(a: &LabeledSpace, b: &LabeledSpace) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch(format!("{a} and {b}")));
        }
        let d = a.dim();
        let mut v = DVector::zeros(d * d);
        for i in 0..d {
            v[i * d + i] = C64::new(1.0, 0.0);
        }
        Self::from_ordered(&[a.clone(), b.clone()], v)
    }

    pub fn basis_state(space: &LabeledSpace, index: usize) -> Result<Self> {
        if index >= space.dim() {
            return Err(Error::DimensionMismatch(format!("basis index {index} on {space}")));
        }
        let mut v = DVector::zeros(space.dim());
        v[index] = C64::new(1.0, 0.0);
        Self::new(SpaceProduct::single(space.clone()), v)
    }

    pub fn space(&self) -> &SpaceProduct {
        &self.space
    }

    pub fn entries(&self) -> &DVector<C64> {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn scale(&self, s: C64) -> PureVector {
        PureVector {
            space: self.space.clone(),
            entries: self.entries.map(|z| z * s),
        }
    }

    pub fn add(&self, other: &PureVector) -> Result<PureVector> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch(format!("{} vs {}", self.space, other.space)));
        }
        Ok(PureVector {
            space: self.space.clone(),
            entries: &self.entries + &other.entries,
        })
    }

    pub fn tensor(&self, other: &PureVector) -> Result<PureVector> {
        let space = self.space.union(&other.space)?;
        let own_labels: Vec<&str> = self.space.labels().collect();
        let (rest, sub) = space.split_offsets(&own_labels)?;
        let mut out = DVector::zeros(space.dim());
        for (i, &s) in sub.iter().enumerate() {
            for (j, &r) in rest.iter().enumerate() {
                out[s + r] = self.entries[i] * other.entries[j];
            }
        }
        Ok(PureVector { space, entries: out })
    }

    /// `|v><v|`.
    pub fn outer(&self) -> HermitianOperator {
        let m = &self.entries * self.entries.adjoint();
        HermitianOperator::symmetrized(Operator {
            space: self.space.clone(),
            matrix: m,
        })
    }

    /// `|self><other|` (generally not Hermitian).
    pub fn outer_with(&self, other: &PureVector) -> Result<Operator> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch(format!("{} vs {}", self.space, other.space)));
        }
        Ok(Operator {
            space: self.space.clone(),
            matrix: &self.entries * other.entries.adjoint(),
        })
    }

    /// Apply `|k><k|` on factor `label`, keeping the factor.
    pub fn project_factor(&self, label: &str, k: usize) -> Result<PureVector> {
        let (rest, sub) = self.space.split_offsets(&[label])?;
        if k >= sub.len() {
            return Err(Error::DimensionMismatch(format!("basis index {k} on `{label}`")));
        }
        let mut out = DVector::zeros(self.entries.len());
        for &r in &rest {
            out[r + sub[k]] = self.entries[r + sub[k]];
        }
        Ok(PureVector {
            space: self.space.clone(),
            entries: out,
        })
    }
}
