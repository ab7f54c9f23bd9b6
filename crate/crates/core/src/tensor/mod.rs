//! Labelled complex linear algebra.
//!
//! Every operator lives on a [`SpaceProduct`] of named factors kept in canonical
//! (label-sorted) order, so operators built in different ways over the same label set
//! compare directly. The free functions below are thin wrappers over the
//! [`HermitianOperator`] methods.

mod basis;
pub mod linalg;
mod operator;
mod space;

pub use basis::{hs_basis, hs_basis_factor, product_basis};
pub use operator::{HermitianOperator, Operator, PureVector, HERMITICITY_TOL};
pub use space::{LabeledSpace, SpaceProduct};

use nalgebra::DMatrix;

use crate::{Error, Result, C64};

pub fn tensor(a: &HermitianOperator, b: &HermitianOperator) -> Result<HermitianOperator> {
    a.tensor(b)
}

pub fn partial_trace<S: AsRef<str>>(op: &HermitianOperator, labels: &[S]) -> Result<HermitianOperator> {
    op.partial_trace(labels)
}

pub fn depolarize<S: AsRef<str>>(op: &HermitianOperator, labels: &[S]) -> Result<HermitianOperator> {
    op.depolarize(labels)
}

pub fn project_psd(op: &HermitianOperator) -> Result<HermitianOperator> {
    op.project_psd()
}

/// Choi matrix of the CP map with the given Kraus operators, on `input ⊗ output`.
///
/// Unnormalized convention: `C = Σ_k (1 ⊗ K_k)|1>><<1|(1 ⊗ K_k)†` with
/// `|1>> = Σ_i |i>|i>`. Kraus operators are `d_out x d_in` matrices whose indices follow
/// the canonical order of `output` and `input`.
pub fn choi_of_kraus(kraus: &[DMatrix<C64>], input: &SpaceProduct, output: &SpaceProduct) -> Result<HermitianOperator> {
    let (d_in, d_out) = (input.dim(), output.dim());
    for k in kraus {
        if k.nrows() != d_out || k.ncols() != d_in {
            return Err(Error::DimensionMismatch(format!(
                "Kraus operator is {}x{}, expected {d_out}x{d_in}",
                k.nrows(),
                k.ncols()
            )));
        }
    }
    let n = d_in * d_out;
    let mut choi = DMatrix::<C64>::zeros(n, n);
    for k in kraus {
        // vec[i * d_out + o] = K[o, i]
        let v = nalgebra::DVector::from_fn(n, |idx, _| k[(idx % d_out, idx / d_out)]);
        choi += &v * v.adjoint();
    }
    let ordered: Vec<LabeledSpace> = input.factors().iter().chain(output.factors()).cloned().collect();
    HermitianOperator::from_ordered(&ordered, choi)
}

/// `Tr_out(C) - 1_in` measured as the largest entrywise deviation.
pub fn trace_preservation_defect(choi: &HermitianOperator, output: &SpaceProduct) -> Result<f64> {
    let labels: Vec<&str> = output.labels().collect();
    let reduced = choi.partial_trace(&labels)?;
    let eye = DMatrix::<C64>::identity(reduced.dim(), reduced.dim());
    Ok(linalg::max_abs(&(reduced.matrix() - eye)))
}
