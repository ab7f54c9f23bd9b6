//! Causal separability: order cones, feasibility by alternating projections, polishing
//! and witnesses.
//!
//! A process is causally separable (for a given list of orders) when
//! `W = Σ_i W_i` with every `W_i ⪰ 0` in the linear span `L_i` of processes compatible
//! with order `i`. Proper and improper mixtures of orders give the same `W`, so the
//! certificate cannot tell them apart.
//!
//! Every `L_i` is spanned by product Hilbert–Schmidt basis elements, grouped by their
//! support pattern (the set of factors on which they are traceless). An element with
//! pattern `s` lies in `L_i` iff it is traceless on no output of the last party, and
//! whenever it is traceless on some output of a party it is also traceless on some
//! factor of a later party. The affine projection onto `{W_i ∈ L_i, Σ W_i = W}`
//! therefore decouples pattern by pattern.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::process::{make_ordered_process, Party, ProcessMatrix, Validity, PSD_TOL};
use crate::random::{random_channel_kraus, random_density_matrix, seeded};
use crate::tensor::{choi_of_kraus, linalg, HermitianOperator, Operator, SpaceProduct};
use crate::{Error, Result, C64};

/// A total order of parties, earliest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderCone {
    order: Vec<String>,
}

impl OrderCone {
    pub fn new<S: AsRef<str>>(order: &[S]) -> Self {
        Self {
            order: order.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn order(&self) -> &[String] {
        &self.order
    }

    /// Parties of `parties` rearranged into this order.
    pub fn arrange(&self, parties: &[Party]) -> Result<Vec<Party>> {
        if self.order.len() != parties.len() {
            return Err(Error::InvalidOrder(format!(
                "order {:?} does not cover the {} parties",
                self.order,
                parties.len()
            )));
        }
        let mut out = Vec::with_capacity(parties.len());
        for (k, name) in self.order.iter().enumerate() {
            if self.order[..k].contains(name) {
                return Err(Error::InvalidOrder(format!("party `{name}` repeated")));
            }
            out.push(
                parties
                    .iter()
                    .find(|p| p.name() == name)
                    .cloned()
                    .ok_or_else(|| Error::InvalidOrder(format!("unknown party `{name}`")))?,
            );
        }
        Ok(out)
    }
}

impl std::fmt::Display for OrderCone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.order.join("<"))
    }
}

/// Orders used when none are given: both orders of a bipartite process, or, for three
/// parties exactly one of which has a trivial output, the two orders of the others
/// followed by that party.
pub fn default_orders(parties: &[Party]) -> Result<Vec<OrderCone>> {
    let names: Vec<&str> = parties.iter().map(Party::name).collect();
    match parties {
        [_, _] => Ok(vec![
            OrderCone::new(&[names[0], names[1]]),
            OrderCone::new(&[names[1], names[0]]),
        ]),
        [_, _, _] => {
            let trivial: Vec<usize> = (0..3).filter(|&k| parties[k].has_trivial_output()).collect();
            let [last] = trivial.as_slice() else {
                return Err(Error::InvalidOrder(
                    "no default order set: exactly one of three parties must have a trivial output".into(),
                ));
            };
            let others: Vec<&str> = (0..3).filter(|k| k != last).map(|k| names[k]).collect();
            Ok(vec![
                OrderCone::new(&[others[0], others[1], names[*last]]),
                OrderCone::new(&[others[1], others[0], names[*last]]),
            ])
        }
        _ => Err(Error::InvalidOrder(format!(
            "no default order set for {} parties",
            parties.len()
        ))),
    }
}

/// Largest Frobenius violation of the order's linear conditions on `w`:
/// `W = _{X_n,O} W` for the last party and, for each earlier party `X_k` with
/// `S_k` the spaces of all later parties, `_{S_k} W = _{S_k ∪ X_k,O} W`.
pub fn order_cone_residual(p: &ProcessMatrix, cone: &OrderCone) -> Result<f64> {
    cone_residual(p.w().as_operator(), &cone.arrange(p.parties())?)
}

fn cone_residual(w: &Operator, order: &[Party]) -> Result<f64> {
    let last = order.last().ok_or_else(|| Error::InvalidOrder("empty order".into()))?;
    let mut worst = w.frobenius_distance(&w.depolarize(&last.output_labels())?)?;
    for k in 0..order.len() - 1 {
        let later: Vec<String> = order[k + 1..].iter().flat_map(Party::labels).collect();
        let mut with_out = later.clone();
        with_out.extend(order[k].output_labels());
        let lhs = w.depolarize(&later)?;
        worst = worst.max(lhs.frobenius_distance(&w.depolarize(&with_out)?)?);
    }
    Ok(worst)
}

/// Pattern bookkeeping for a fixed space and order list.
struct Geometry {
    /// `(rest, sub)` offsets of each factor of dimension > 1.
    factors: Vec<(Vec<usize>, Vec<usize>)>,
    /// `allowed[i][s]`: pattern `s` lies in `L_i`.
    allowed: Vec<Vec<bool>>,
    multiplicity: Vec<usize>,
}

impl Geometry {
    fn new(space: &SpaceProduct, parties: &[Party], orders: &[OrderCone]) -> Result<Self> {
        let labels: Vec<&str> = space
            .factors()
            .iter()
            .filter(|f| f.dim() > 1)
            .map(|f| f.label())
            .collect();
        let factors = labels
            .iter()
            .map(|l| space.split_offsets(&[*l]))
            .collect::<Result<Vec<_>>>()?;
        let bits = |names: Vec<String>| -> usize {
            names
                .iter()
                .filter_map(|n| labels.iter().position(|l| l == n))
                .fold(0, |acc, k| acc | (1 << k))
        };
        let n_patterns = 1usize << labels.len();
        let mut allowed = Vec::new();
        for cone in orders {
            let order = cone.arrange(parties)?;
            let outs: Vec<usize> = order.iter().map(|p| bits(p.output_labels())).collect();
            let alls: Vec<usize> = order.iter().map(|p| bits(p.labels())).collect();
            let n = order.len();
            let row: Vec<bool> = (0..n_patterns)
                .map(|s| {
                    if s & outs[n - 1] != 0 {
                        return false;
                    }
                    (0..n - 1).all(|k| {
                        let later = alls[k + 1..].iter().fold(0, |a, b| a | b);
                        s & outs[k] == 0 || s & later != 0
                    })
                })
                .collect();
            allowed.push(row);
        }
        let multiplicity = (0..n_patterns)
            .map(|s| allowed.iter().filter(|r| r[s]).count())
            .collect();
        Ok(Self {
            factors,
            allowed,
            multiplicity,
        })
    }

    fn patterns(&self) -> usize {
        self.multiplicity.len()
    }

    /// Components of `m` by support pattern (bit `j` set: traceless on factor `j`).
    fn split(&self, m: &DMatrix<C64>) -> Vec<DMatrix<C64>> {
        let mut comps = Vec::with_capacity(self.patterns());
        comps.push(m.clone());
        for (rest, sub) in &self.factors {
            let n = comps.len();
            for idx in 0..n {
                let a = depolarize_raw(&comps[idx], rest, sub);
                let b = &comps[idx] - &a;
                comps[idx] = a;
                comps.push(b);
            }
        }
        comps
    }

    #[cfg(test)]
    fn project_onto(&self, i: usize, m: &DMatrix<C64>) -> DMatrix<C64> {
        let d = m.nrows();
        self.split(m)
            .into_iter()
            .enumerate()
            .filter(|(s, _)| self.allowed[i][*s])
            .fold(DMatrix::zeros(d, d), |acc, (_, c)| acc + c)
    }
}

fn depolarize_raw(m: &DMatrix<C64>, rest: &[usize], sub: &[usize]) -> DMatrix<C64> {
    let n = m.nrows();
    let dl = sub.len() as f64;
    let mut out = DMatrix::zeros(n, n);
    for &r1 in rest {
        for &r2 in rest {
            let mut acc = C64::new(0.0, 0.0);
            for &t in sub {
                acc += m[(r1 + t, r2 + t)];
            }
            let v = acc / dl;
            for &t in sub {
                out[(r1 + t, r2 + t)] = v;
            }
        }
    }
    out
}

/// Update rule for the PSD step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionScheme {
    /// Plain alternating projections; the residual is non-increasing.
    Alternating,
    /// Dykstra's correction on the PSD step (the affine step needs none).
    Dykstra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityConfig {
    pub max_iters: usize,
    /// Residual below which the iteration counts as converged.
    pub tol: f64,
    pub stall_window: usize,
    pub stall_rel: f64,
    pub scheme: ProjectionScheme,
    /// Polishing starts once the residual drops below this value.
    pub polish_below: f64,
    pub polish_every: usize,
    pub seed: u64,
    pub battery_per_order: usize,
    pub battery_mixtures: usize,
    pub witness_eps: f64,
}

impl Default for SeparabilityConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-7,
            stall_window: 500,
            stall_rel: 1e-12,
            scheme: ProjectionScheme::Alternating,
            polish_below: 1e-3,
            polish_every: 250,
            seed: 0,
            battery_per_order: 500,
            battery_mixtures: 500,
            witness_eps: 1e-7,
        }
    }
}

/// Diagnostics of a witness candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessDiagnostics {
    /// `Tr[S W]` for the tested process.
    pub value: f64,
    /// Smallest `Tr[S W']` over the sampled separable battery.
    pub battery_min: f64,
    pub battery_size: usize,
    /// Multiple of the identity added to make the dual certificate exact.
    pub shift: f64,
    /// True when the candidate came from a pattern that no order admits.
    pub structural: bool,
}

/// Result of a candidate extraction; `witness` is `None` when the candidate failed
/// verification.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessOutcome {
    pub witness: Option<HermitianOperator>,
    pub diagnostics: WitnessDiagnostics,
}

/// Separating data from the last projection step of a failed run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationTrace {
    /// `-μ`, the multiplier of the affine projection.
    multiplier: DMatrix<C64>,
    /// `x_i - P_A(x)_i` for the PSD iterate `x` that produced it.
    normals: Vec<DMatrix<C64>>,
    structural: bool,
}

/// Verdict of [`check_separability`].
///
/// Separable verdicts carry components `W_i` (one per order, each positive and in its
/// order cone) summing to `W`, and weights `Tr W_i / Tr W`. Nonseparable verdicts carry
/// the stalled residual and, when it passed its sampled battery, a witness `S` with
/// `Tr[S W] < 0 ≤ Tr[S W']` on the battery. The battery is a finite sample, not a proof;
/// the construction itself makes `Tr[S W'] ≥ 0` hold for all separable `W'` up to
/// rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityCertificate {
    pub separable: bool,
    pub orders: Vec<OrderCone>,
    /// Weight of the first order.
    pub q: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub components: Option<Vec<HermitianOperator>>,
    pub residual: f64,
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
    pub stalled: bool,
    pub polished: bool,
    pub witness: Option<HermitianOperator>,
    pub witness_verified: bool,
    pub witness_diagnostics: Option<WitnessDiagnostics>,
    pub separation: Option<SeparationTrace>,
}

/// Decide causal separability of a validated process with respect to `orders`
/// (defaults from [`default_orders`] when `None`).
pub fn check_separability(
    p: &ProcessMatrix,
    orders: Option<&[OrderCone]>,
    config: &SeparabilityConfig,
) -> Result<SeparabilityCertificate> {
    match p.validity() {
        Validity::Valid => {}
        Validity::Unchecked => return Err(Error::Unvalidated),
        Validity::Invalid(reason) => return Err(Error::InvalidProcess(reason.to_string())),
    }
    let orders = match orders {
        Some(o) if !o.is_empty() => o.to_vec(),
        Some(_) => return Err(Error::InvalidOrder("empty order list".into())),
        None => default_orders(p.parties())?,
    };
    let geo = Geometry::new(p.w().space(), p.parties(), &orders)?;
    let w = p.w().matrix();
    let w_split = geo.split(w);
    let k = orders.len();

    let mut cert = SeparabilityCertificate {
        separable: false,
        orders: orders.clone(),
        q: None,
        weights: None,
        components: None,
        residual: 0.0,
        iterations: 0,
        residual_trace: Vec::new(),
        stalled: false,
        polished: false,
        witness: None,
        witness_verified: false,
        witness_diagnostics: None,
        separation: None,
    };

    // a pattern no order admits separates exactly
    let uncovered: DMatrix<C64> = (0..geo.patterns())
        .filter(|&s| geo.multiplicity[s] == 0)
        .fold(DMatrix::zeros(w.nrows(), w.ncols()), |acc, s| acc + &w_split[s]);
    let gap = linalg::frobenius_norm(&uncovered);
    if gap > crate::process::LINEAR_TOL {
        cert.residual = gap;
        cert.separation = Some(SeparationTrace {
            multiplier: -uncovered,
            normals: Vec::new(),
            structural: true,
        });
        return finish_nonseparable(p, cert, config);
    }

    let mut polisher = Polisher::new(&geo, w)?;
    let mut x: Vec<DMatrix<C64>> = vec![w.unscale(k as f64); k];
    let mut corr: Vec<DMatrix<C64>> = vec![DMatrix::zeros(w.nrows(), w.ncols()); k];
    let mut last = None;
    for it in 1..=config.max_iters {
        let (y, multiplier) = affine_projection(&geo, &w_split, &x);
        let mut next = Vec::with_capacity(k);
        let mut r2 = 0.0;
        for i in 0..k {
            let z = &y[i] + &corr[i];
            let xi = linalg::project_psd_matrix(&z)?;
            if config.scheme == ProjectionScheme::Dykstra {
                corr[i] = &z - &xi;
            }
            r2 += (&xi - &y[i]).norm_squared();
            next.push(xi);
        }
        let r = r2.sqrt();
        cert.residual_trace.push(r);
        cert.iterations = it;
        cert.residual = r;

        if r < config.tol {
            let components = polisher
                .as_mut()
                .and_then(|pol| pol.polish(&geo, &y).ok().flatten())
                .map(|c| (c, true))
                .unwrap_or((y, false));
            return finish_separable(p, cert, components.0, components.1);
        }
        if r < config.polish_below && it % config.polish_every == 0 {
            if let Some(c) = polisher.as_mut().and_then(|pol| pol.polish(&geo, &y).ok().flatten()) {
                return finish_separable(p, cert, c, true);
            }
        }
        if it > config.stall_window {
            let before = cert.residual_trace[it - 1 - config.stall_window];
            if before - r <= config.stall_rel * before {
                cert.stalled = true;
                last = Some((x, y, multiplier));
                break;
            }
        }
        if it == config.max_iters {
            last = Some((x, y, multiplier));
            break;
        }
        x = next;
    }
    if let Some((x, y, multiplier)) = last {
        if let Some(c) = polisher.as_mut().and_then(|pol| pol.polish(&geo, &y).ok().flatten()) {
            return finish_separable(p, cert, c, true);
        }
        cert.separation = Some(SeparationTrace {
            multiplier,
            normals: x.iter().zip(&y).map(|(a, b)| a - b).collect(),
            structural: false,
        });
    }
    finish_nonseparable(p, cert, config)
}

/// `y = P_A(x)` and the multiplier `-μ = -Σ_s μ_s`.
fn affine_projection(
    geo: &Geometry,
    w_split: &[DMatrix<C64>],
    x: &[DMatrix<C64>],
) -> (Vec<DMatrix<C64>>, DMatrix<C64>) {
    let d = w_split[0].nrows();
    let splits: Vec<Vec<DMatrix<C64>>> = x.iter().map(|xi| geo.split(xi)).collect();
    let mut y = vec![DMatrix::zeros(d, d); x.len()];
    let mut multiplier = DMatrix::zeros(d, d);
    for s in 0..geo.patterns() {
        let m = geo.multiplicity[s];
        if m == 0 {
            continue;
        }
        let mut mu = w_split[s].clone();
        for (i, sp) in splits.iter().enumerate() {
            if geo.allowed[i][s] {
                mu -= &sp[s];
            }
        }
        mu.unscale_mut(m as f64);
        for (i, sp) in splits.iter().enumerate() {
            if geo.allowed[i][s] {
                y[i] += &sp[s] + &mu;
            }
        }
        multiplier -= &mu;
    }
    (y, multiplier)
}

fn finish_separable(
    p: &ProcessMatrix,
    mut cert: SeparabilityCertificate,
    components: Vec<DMatrix<C64>>,
    polished: bool,
) -> Result<SeparabilityCertificate> {
    let space = p.w().space().clone();
    let comps = components
        .into_iter()
        .map(|m| HermitianOperator::from_operator(Operator::new(space.clone(), linalg::hermitian_part(&m))?))
        .collect::<Result<Vec<_>>>()?;
    let total = p.w().real_trace();
    let weights: Vec<f64> = comps.iter().map(|c| c.real_trace() / total).collect();
    if polished {
        let sum = comps
            .iter()
            .try_fold(HermitianOperator::zeros(space.clone()), |acc, c| acc.add(c))?;
        let reconstruction = sum.frobenius_distance(p.w())?;
        let negativity = comps
            .iter()
            .map(|c| c.min_eigenvalue().map(|v| (-v).max(0.0)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0f64, f64::max);
        cert.residual = reconstruction.max(negativity);
    }
    cert.separable = true;
    cert.polished = polished;
    cert.q = weights.first().copied();
    cert.weights = Some(weights);
    cert.components = Some(comps);
    Ok(cert)
}

fn finish_nonseparable(
    p: &ProcessMatrix,
    mut cert: SeparabilityCertificate,
    config: &SeparabilityConfig,
) -> Result<SeparabilityCertificate> {
    let outcome = extract_witness(p, &cert, config)?;
    cert.witness_verified = outcome.witness.is_some();
    cert.witness = outcome.witness;
    cert.witness_diagnostics = Some(outcome.diagnostics);
    Ok(cert)
}

/// Exact feasibility on the face of the PSD cone spanned by the range of `W`.
///
/// Any decomposition has `range(W_i) ⊆ range(W)`, so `W_i = V X_i V†` with `V` an
/// orthonormal basis of the range. The linear constraints on the `X_i` are solved by a
/// pseudo-inverse; positivity is then checked, with a short alternating iteration in
/// the reduced space as a fallback.
struct Polisher {
    v: DMatrix<C64>,
    rank: usize,
    k: usize,
    constraints: DMatrix<f64>,
    pinv: DMatrix<f64>,
    rhs: DVector<f64>,
}

const POLISH_MAX_COLUMNS: usize = 1024;
const POLISH_MAX_ENTRIES: usize = 40_000_000;
const POLISH_INNER_ITERS: usize = 500;

impl Polisher {
    fn new(geo: &Geometry, w: &DMatrix<C64>) -> Result<Option<Self>> {
        let (values, vectors) = linalg::eigh(w)?;
        let top = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 1e-10 * top).collect();
        let rank = keep.len();
        let k = geo.allowed.len();
        let d = w.nrows();
        let cols = k * rank * rank;
        let rows = k * 2 * d * d + rank * rank;
        if rank == 0 || cols > POLISH_MAX_COLUMNS || rows * cols > POLISH_MAX_ENTRIES {
            return Ok(None);
        }
        let mut v = DMatrix::zeros(d, rank);
        for (c, &i) in keep.iter().enumerate() {
            v.set_column(c, &vectors.column(i));
        }
        let basis = hermitian_basis(rank);
        let mut constraints = DMatrix::zeros(rows, cols);
        for (j, h) in basis.iter().enumerate() {
            let lifted = &v * h * v.adjoint();
            let parts = geo.split(&lifted);
            for i in 0..k {
                let col = i * rank * rank + j;
                // (1 - P_i)(V H V†) = 0
                let outside = (0..geo.patterns())
                    .filter(|&s| !geo.allowed[i][s])
                    .fold(DMatrix::zeros(d, d), |acc, s| acc + &parts[s]);
                for (e, z) in outside.iter().enumerate() {
                    constraints[(i * 2 * d * d + 2 * e, col)] = z.re;
                    constraints[(i * 2 * d * d + 2 * e + 1, col)] = z.im;
                }
                // Σ_i X_i = V† W V, coordinate j
                constraints[(k * 2 * d * d + j, col)] = 1.0;
            }
        }
        let target = v.adjoint() * w * &v;
        let rhs = DVector::from_fn(rows, |r, _| {
            if r >= k * 2 * d * d {
                hermitian_coordinate(&basis[r - k * 2 * d * d], &target)
            } else {
                0.0
            }
        });
        let pinv = constraints
            .clone()
            .pseudo_inverse(1e-10)
            .map_err(|_| Error::EigenFailure)?;
        Ok(Some(Self {
            v,
            rank,
            k,
            constraints,
            pinv,
            rhs,
        }))
    }

    fn to_reduced(&self, ys: &[DMatrix<C64>]) -> DVector<f64> {
        let basis = hermitian_basis(self.rank);
        let r2 = self.rank * self.rank;
        let mut z = DVector::zeros(self.k * r2);
        for (i, y) in ys.iter().enumerate() {
            let x = self.v.adjoint() * y * &self.v;
            for (j, h) in basis.iter().enumerate() {
                z[i * r2 + j] = hermitian_coordinate(h, &x);
            }
        }
        z
    }

    fn blocks(&self, z: &DVector<f64>) -> Vec<DMatrix<C64>> {
        let basis = hermitian_basis(self.rank);
        let r2 = self.rank * self.rank;
        (0..self.k)
            .map(|i| {
                basis
                    .iter()
                    .enumerate()
                    .fold(DMatrix::zeros(self.rank, self.rank), |acc, (j, h)| {
                        acc + h.scale(z[i * r2 + j])
                    })
            })
            .collect()
    }

    fn pack_blocks(&self, blocks: &[DMatrix<C64>]) -> DVector<f64> {
        let basis = hermitian_basis(self.rank);
        let r2 = self.rank * self.rank;
        let mut z = DVector::zeros(self.k * r2);
        for (i, b) in blocks.iter().enumerate() {
            for (j, h) in basis.iter().enumerate() {
                z[i * r2 + j] = hermitian_coordinate(h, b);
            }
        }
        z
    }

    fn affine(&self, z: &DVector<f64>) -> DVector<f64> {
        z - &self.pinv * (&self.constraints * z - &self.rhs)
    }

    /// Exact decomposition near the iterate `ys`, if one is found.
    fn polish(&mut self, _geo: &Geometry, ys: &[DMatrix<C64>]) -> Result<Option<Vec<DMatrix<C64>>>> {
        let mut z = self.affine(&self.to_reduced(ys));
        if (&self.constraints * &z - &self.rhs).norm() > 1e-9 {
            return Ok(None);
        }
        for _ in 0..=POLISH_INNER_ITERS {
            let blocks = self.blocks(&z);
            let mins = blocks.iter().map(linalg::min_eigenvalue).collect::<Result<Vec<_>>>()?;
            if mins.iter().all(|&m| m >= -PSD_TOL) {
                return Ok(Some(blocks.iter().map(|b| &self.v * b * self.v.adjoint()).collect()));
            }
            let projected = blocks
                .iter()
                .map(linalg::project_psd_matrix)
                .collect::<Result<Vec<_>>>()?;
            z = self.affine(&self.pack_blocks(&projected));
        }
        Ok(None)
    }
}

/// HS-orthonormal basis of `r x r` Hermitian matrices.
fn hermitian_basis(r: usize) -> Vec<DMatrix<C64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(r * r);
    for j in 0..r {
        let mut m = DMatrix::zeros(r, r);
        m[(j, j)] = C64::new(1.0, 0.0);
        out.push(m);
    }
    for j in 0..r {
        for k in (j + 1)..r {
            let mut m = DMatrix::zeros(r, r);
            m[(j, k)] = C64::new(s, 0.0);
            m[(k, j)] = C64::new(s, 0.0);
            out.push(m);
            let mut m = DMatrix::zeros(r, r);
            m[(j, k)] = C64::new(0.0, -s);
            m[(k, j)] = C64::new(0.0, s);
            out.push(m);
        }
    }
    out
}

fn hermitian_coordinate(h: &DMatrix<C64>, m: &DMatrix<C64>) -> f64 {
    linalg::trace_of_product(h, m).re
}

/// Turn a failed run's separating data into a verified witness.
///
/// The candidate is `S = M + t·1` with `M` the affine multiplier. For every `W' = Σ W'_i`
/// with `W'_i ∈ L_i`, `Tr[M W'_i] = Tr[N_i W'_i]` where `N_i` is the last PSD-step
/// displacement; `t` lifts every `N_i` to positive semidefinite, so `Tr[S W'] ≥ 0` on the
/// whole separable cone. The candidate is accepted when `Tr[S W] < -10 ε` and a seeded
/// battery of ordered processes and mixtures stays above `-ε`.
pub fn extract_witness(
    p: &ProcessMatrix,
    cert: &SeparabilityCertificate,
    config: &SeparabilityConfig,
) -> Result<WitnessOutcome> {
    if cert.separable {
        return Err(Error::SeparableProcess);
    }
    let trace = cert
        .separation
        .as_ref()
        .ok_or_else(|| Error::InvalidProcess("certificate carries no separating data".into()))?;
    let mut shift = 0.0f64;
    for n in &trace.normals {
        shift = shift.max(-linalg::min_eigenvalue(n)?);
    }
    let d = trace.multiplier.nrows();
    let mut s = &trace.multiplier + DMatrix::<C64>::identity(d, d).scale(shift);
    let norm = linalg::frobenius_norm(&s);
    if norm > 0.0 {
        s.unscale_mut(norm);
    }
    let witness = HermitianOperator::from_operator(Operator::new(p.w().space().clone(), linalg::hermitian_part(&s))?)?;
    let value = witness.hs(p.w())?;
    let (battery_min, battery_size) = witness_battery(&witness, p.parties(), &cert.orders, config)?;
    let diagnostics = WitnessDiagnostics {
        value,
        battery_min,
        battery_size,
        shift,
        structural: trace.structural,
    };
    let accepted = value < -10.0 * config.witness_eps && battery_min >= -config.witness_eps;
    Ok(WitnessOutcome {
        witness: accepted.then_some(witness),
        diagnostics,
    })
}

/// A random process of definite order `order` (party list already arranged).
pub fn random_ordered_process(order: &[Party], rng: &mut impl Rng) -> Result<ProcessMatrix> {
    let first = &order[0];
    let rho = HermitianOperator::new(first.input().clone(), random_density_matrix(first.input().dim(), rng))?;
    let channels = order
        .windows(2)
        .map(|pair| {
            let n_kraus = rng.random_range(1..=3);
            let ks = random_channel_kraus(pair[0].output().dim(), pair[1].input().dim(), n_kraus, rng);
            choi_of_kraus(&ks, pair[0].output(), pair[1].input())
        })
        .collect::<Result<Vec<_>>>()?;
    make_ordered_process(order, &rho, &channels)
}

/// Smallest `Tr[S W']` over the seeded battery, and the battery size. Sample `j` draws
/// from its own stream, so the result does not depend on scheduling.
pub fn witness_battery(
    witness: &HermitianOperator,
    parties: &[Party],
    orders: &[OrderCone],
    config: &SeparabilityConfig,
) -> Result<(f64, usize)> {
    let arranged = orders.iter().map(|o| o.arrange(parties)).collect::<Result<Vec<_>>>()?;
    let per_order = config.battery_per_order;
    let n_ordered = per_order * arranged.len();
    let total = n_ordered + config.battery_mixtures;
    let evaluate = |j: usize| -> Result<f64> {
        let mut rng = seeded(config.seed, j as u64);
        let w = if j < n_ordered {
            random_ordered_process(&arranged[j / per_order], &mut rng)?.w().clone()
        } else {
            let a = rng.random_range(0..arranged.len());
            let b = rng.random_range(0..arranged.len());
            let t: f64 = rng.random();
            let wa = random_ordered_process(&arranged[a], &mut rng)?;
            let wb = random_ordered_process(&arranged[b], &mut rng)?;
            wa.w().scale(t).add(&wb.w().scale(1.0 - t))?
        };
        witness.hs(&w)
    };
    let min = (0..total)
        .into_par_iter()
        .map(evaluate)
        .try_reduce(|| f64::INFINITY, |a, b| Ok(a.min(b)))?;
    Ok((min, total))
}

/// Every component of a separable certificate, checked: positive within `PSD_TOL`,
/// in its cone within `cone_tol`, and summing to `W` within `sum_tol`.
pub fn verify_certificate(
    p: &ProcessMatrix,
    cert: &SeparabilityCertificate,
    cone_tol: f64,
    sum_tol: f64,
) -> Result<bool> {
    let Some(components) = &cert.components else {
        return Ok(false);
    };
    let mut sum = HermitianOperator::zeros(p.w().space().clone());
    for (c, order) in components.iter().zip(&cert.orders) {
        if c.min_eigenvalue()? < -PSD_TOL * c.real_trace().max(1.0) {
            return Ok(false);
        }
        if cone_residual(c.as_operator(), &order.arrange(p.parties())?)? > cone_tol {
            return Ok(false);
        }
        sum = sum.add(c)?;
    }
    Ok(sum.frobenius_distance(p.w())? < sum_tol)
}
