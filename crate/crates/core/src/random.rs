//! Seeded random samplers for states, unitaries, channels and instruments.
//!
//! All samplers take an explicit RNG; callers that need reproducibility use
//! [`seeded`], which derives an independent ChaCha stream per `(seed, stream)` pair.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::C64;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_hermitian(d: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    let g = ginibre(d, d, rng);
    (&g + g.adjoint()).scale(0.5)
}

/// Haar-random unit vector.
pub fn random_pure_state(d: usize, rng: &mut impl Rng) -> DVector<C64> {
    let v = DVector::from_fn(d, |_, _| gaussian(rng));
    let n = v.norm();
    v.unscale(n)
}

/// Full-rank mixed state `G G† / Tr(G G†)` with Ginibre `G`.
pub fn random_density_matrix(d: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    let g = ginibre(d, d, rng);
    let rho = &g * g.adjoint();
    let t = rho.trace().re;
    rho.unscale(t)
}

/// Isometry `d_in -> d_out` (requires `d_out >= d_in`), Haar-distributed up to phases.
pub fn random_isometry(d_in: usize, d_out: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    assert!(d_out >= d_in, "isometry needs d_out >= d_in");
    let g = ginibre(d_out, d_in, rng);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q.columns(0, d_in).into_owned();
    for j in 0..d_in {
        let diag = r[(j, j)];
        let phase = if diag.norm() > 0.0 {
            diag / diag.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..d_out {
            out[(i, j)] *= phase;
        }
    }
    out
}

pub fn random_unitary(d: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    random_isometry(d, d, rng)
}

/// Kraus operators (`d_out x d_in`) of a random CPTP map with `n_kraus` operators.
pub fn random_channel_kraus(d_in: usize, d_out: usize, n_kraus: usize, rng: &mut impl Rng) -> Vec<DMatrix<C64>> {
    let v = random_isometry(d_in, d_out * n_kraus, rng);
    split_isometry(&v, d_out, n_kraus)
}

/// Random instrument Kraus families `[setting][outcome] -> Kraus list`.
///
/// Each setting is an independent Stinespring isometry split into `outcomes` blocks of
/// `kraus_per_outcome` operators, so every setting sums to a CPTP map.
pub fn random_instrument_kraus(
    d_in: usize,
    d_out: usize,
    settings: usize,
    outcomes: usize,
    kraus_per_outcome: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<Vec<DMatrix<C64>>>> {
    (0..settings)
        .map(|_| {
            let v = random_isometry(d_in, d_out * outcomes * kraus_per_outcome, rng);
            let ops = split_isometry(&v, d_out, outcomes * kraus_per_outcome);
            ops.chunks(kraus_per_outcome).map(<[_]>::to_vec).collect()
        })
        .collect()
}

fn split_isometry(v: &DMatrix<C64>, d_out: usize, blocks: usize) -> Vec<DMatrix<C64>> {
    (0..blocks).map(|k| v.rows(k * d_out, d_out).into_owned()).collect()
}
