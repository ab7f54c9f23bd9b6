#![allow(dead_code)]

use causalis::instruments::Instrument;
use causalis::process::{Party, ProcessMatrix};
use causalis::random::{random_hermitian, random_instrument_kraus};
use causalis::tensor::{depolarize, HermitianOperator};
use causalis::C64;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn ket0(d: usize) -> DVector<C64> {
    let mut v = DVector::zeros(d);
    v[0] = c(1.0);
    v
}

pub fn pauli_x() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn pauli_y() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[c(0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), c(0.0)])
}

pub fn pauli_z() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

pub fn bipartite(dims: [usize; 4]) -> Vec<Party> {
    vec![
        Party::with_dims("A", dims[0], dims[1]).unwrap(),
        Party::with_dims("B", dims[2], dims[3]).unwrap(),
    ]
}

/// Projector onto the linear span of valid bipartite processes, written out term by
/// term (independent of the library's validity checkers).
pub fn valid_projector(w: &HermitianOperator) -> HermitianOperator {
    let d = |ls: &[&str]| depolarize(w, ls).unwrap();
    let terms: [(f64, &[&str]); 7] = [
        (1.0, &["A_O"]),
        (1.0, &["B_O"]),
        (-1.0, &["A_O", "B_O"]),
        (-1.0, &["B_I", "B_O"]),
        (1.0, &["A_O", "B_I", "B_O"]),
        (-1.0, &["A_I", "A_O"]),
        (1.0, &["A_I", "A_O", "B_O"]),
    ];
    terms
        .iter()
        .fold(HermitianOperator::zeros(w.space().clone()), |acc, (s, ls)| {
            acc.add(&d(ls).scale(*s)).unwrap()
        })
}

/// Random traceless direction inside the valid subspace, and its complement.
pub fn random_directions(parties: &[Party], rng: &mut impl Rng) -> (HermitianOperator, HermitianOperator) {
    let space = causalis::process::joint_space(parties).unwrap();
    let n = space.dim();
    let h = HermitianOperator::new(space.clone(), random_hermitian(n, rng)).unwrap();
    let traceless = h
        .sub(&HermitianOperator::identity(space).scale(h.real_trace() / n as f64))
        .unwrap();
    let inside = valid_projector(&traceless);
    let outside = traceless.sub(&inside).unwrap();
    (inside, outside)
}

/// `1/(d_AI d_BI) + ε X` with `ε` set so the smallest eigenvalue equals `margin/(d_AI d_BI)`.
pub fn white_noise_plus(parties: &[Party], x: &HermitianOperator, margin: f64) -> ProcessMatrix {
    let space = x.space().clone();
    let d_in = (parties[0].input().dim() * parties[1].input().dim()) as f64;
    let lam = x.min_eigenvalue().unwrap();
    assert!(lam < 0.0, "traceless direction must have a negative eigenvalue");
    let eps = (1.0 - margin) / d_in / lam.abs();
    let w = HermitianOperator::identity(space)
        .scale(1.0 / d_in)
        .add(&x.scale(eps))
        .unwrap();
    ProcessMatrix::new(parties.to_vec(), w).unwrap()
}

pub fn random_instrument(party: &Party, settings: usize, outcomes: usize, rng: &mut impl Rng) -> Instrument {
    let kraus = random_instrument_kraus(party.input().dim(), party.output().dim(), settings, outcomes, 2, rng);
    Instrument::from_kraus(party, kraus).unwrap()
}
