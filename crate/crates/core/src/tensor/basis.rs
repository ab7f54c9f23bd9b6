use nalgebra::DMatrix;

use super::operator::HermitianOperator;
use super::space::SpaceProduct;
use crate::{Result, C64};

/// Generalized Gell-Mann basis of a `d`-dimensional factor.
///
/// Element 0 is the identity; the rest are traceless (symmetric, antisymmetric,
/// then diagonal). Every element `b` satisfies `Tr(b b) = d`, so the qubit case is
/// exactly `{1, X, Y, Z}`.
pub fn hs_basis_factor(d: usize) -> Vec<DMatrix<C64>> {
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let norm = (d as f64 / 2.0).sqrt();
    let mut out = vec![DMatrix::identity(d, d)];
    for j in 0..d {
        for k in (j + 1)..d {
            let mut m = DMatrix::zeros(d, d);
            m[(j, k)] = one * norm;
            m[(k, j)] = one * norm;
            out.push(m);
        }
    }
    for j in 0..d {
        for k in (j + 1)..d {
            let mut m = DMatrix::zeros(d, d);
            m[(j, k)] = -i * norm;
            m[(k, j)] = i * norm;
            out.push(m);
        }
    }
    for l in 1..d {
        let c = (2.0 / (l * (l + 1)) as f64).sqrt() * norm;
        let mut m = DMatrix::zeros(d, d);
        for j in 0..l {
            m[(j, j)] = one * c;
        }
        m[(l, l)] = one * (-(l as f64) * c);
        out.push(m);
    }
    out
}

/// Product Hilbert–Schmidt-orthogonal basis of a labelled space.
///
/// Returned with the per-factor local indices of each element (index 0 = identity on
/// that factor), enumerated row-major in canonical factor order.
pub fn product_basis(space: &SpaceProduct) -> Result<Vec<(Vec<usize>, HermitianOperator)>> {
    let locals: Vec<Vec<DMatrix<C64>>> = space.factors().iter().map(|f| hs_basis_factor(f.dim())).collect();
    let mut out: Vec<(Vec<usize>, DMatrix<C64>)> = vec![(Vec::new(), DMatrix::identity(1, 1))];
    for local in &locals {
        let mut next = Vec::with_capacity(out.len() * local.len());
        for (idx, m) in &out {
            for (k, b) in local.iter().enumerate() {
                let mut idx = idx.clone();
                idx.push(k);
                next.push((idx, m.kronecker(b)));
            }
        }
        out = next;
    }
    out.into_iter()
        .map(|(idx, m)| Ok((idx, HermitianOperator::new(space.clone(), m)?)))
        .collect()
}

/// `d²` Hermitian basis operators per factor, combined as a product basis over `space`.
pub fn hs_basis(space: &SpaceProduct) -> Result<Vec<HermitianOperator>> {
    Ok(product_basis(space)?.into_iter().map(|(_, b)| b).collect())
}
