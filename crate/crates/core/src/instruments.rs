//! Quantum instruments and the generalized Born rule.
//!
//! Probabilities are `P(a⃗|x⃗) = Tr[W · ⊗_X C_X(x_X, a_X)ᵀ]` with the transpose taken in the
//! computational basis of each party's canonical `X_I ⊗ X_O` ordering. With the
//! unnormalized Choi convention of [`crate::tensor::choi_of_kraus`] this reproduces
//! sequential composition for fixed-order processes; [`circuit_oracle`] is an
//! independent Kraus-level simulator used to check it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::process::{
    interference_decomposition, make_quantum_switch, switch_parties, validate_process, Party, ProcessMatrix,
};
use crate::tensor::{choi_of_kraus, linalg, trace_preservation_defect, HermitianOperator, LabeledSpace, Operator};
use crate::{Error, Result, C64};

/// Eigenvalue floor for instrument Chois, relative to `max(1, max|C_ij|)`.
pub const CHOI_PSD_TOL: f64 = 1e-12;
/// Trace-preservation tolerance for the outcome sum of each setting.
pub const COMPLETENESS_TOL: f64 = 1e-10;
/// Bound on probabilities outside `[0, 1]`.
pub const PROBABILITY_TOL: f64 = 1e-10;
/// Per-setting normalization tolerance of probability tables.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A party's family of CP maps indexed by setting `x` and outcome `a`.
///
/// Every setting's outcome maps sum to a trace-preserving map. Kraus operators are kept
/// alongside the Chois (derived from the Choi spectrum when not supplied).
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    party: Party,
    outcomes: usize,
    chois: Vec<Vec<HermitianOperator>>,
    kraus: Vec<Vec<Vec<DMatrix<C64>>>>,
}

impl Instrument {
    /// Build from Choi matrices indexed `[setting][outcome]`.
    pub fn from_chois(party: &Party, chois: Vec<Vec<HermitianOperator>>) -> Result<Self> {
        let kraus = chois
            .iter()
            .map(|row| row.iter().map(|c| kraus_of_choi(party, c)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::checked(party, chois, kraus)
    }

    /// Build from Kraus operators indexed `[setting][outcome]`, each `d_out x d_in` in
    /// the canonical factor order of the party's output and input.
    pub fn from_kraus(party: &Party, kraus: Vec<Vec<Vec<DMatrix<C64>>>>) -> Result<Self> {
        let chois = kraus
            .iter()
            .map(|row| {
                row.iter()
                    .map(|ks| choi_of_kraus(ks, party.input(), party.output()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::checked(party, chois, kraus)
    }

    fn checked(party: &Party, chois: Vec<Vec<HermitianOperator>>, kraus: Vec<Vec<Vec<DMatrix<C64>>>>) -> Result<Self> {
        let outcomes = chois.first().map(Vec::len).unwrap_or(0);
        if outcomes == 0 {
            return Err(Error::InvalidInstrument(format!(
                "party `{}` needs at least one setting and one outcome",
                party.name()
            )));
        }
        let space = party.space();
        for (x, row) in chois.iter().enumerate() {
            if row.len() != outcomes {
                return Err(Error::InvalidInstrument(format!(
                    "setting {x} has {} outcomes, setting 0 has {outcomes}",
                    row.len()
                )));
            }
            let mut total = HermitianOperator::zeros(space.clone());
            for (a, c) in row.iter().enumerate() {
                if c.space() != &space {
                    return Err(Error::SpaceMismatch(format!(
                        "Choi ({x},{a}) acts on {}, party `{}` spans {space}",
                        c.space(),
                        party.name()
                    )));
                }
                let min = c.min_eigenvalue()?;
                if min < -CHOI_PSD_TOL * linalg::max_abs(c.matrix()).max(1.0) {
                    return Err(Error::InvalidInstrument(format!(
                        "Choi ({x},{a}) has eigenvalue {min:.3e}"
                    )));
                }
                total = total.add(c)?;
            }
            let defect = trace_preservation_defect(&total, party.output())?;
            if defect > COMPLETENESS_TOL {
                return Err(Error::InvalidInstrument(format!(
                    "setting {x} is not trace preserving (residual {defect:.3e})"
                )));
            }
        }
        Ok(Self {
            party: party.clone(),
            outcomes,
            chois,
            kraus,
        })
    }

    pub fn party(&self) -> &Party {
        &self.party
    }

    pub fn settings(&self) -> usize {
        self.chois.len()
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn choi(&self, x: usize, a: usize) -> &HermitianOperator {
        &self.chois[x][a]
    }

    pub fn kraus(&self, x: usize, a: usize) -> &[DMatrix<C64>] {
        &self.kraus[x][a]
    }
}

/// Kraus operators `√λ_k · unvec(v_k)` from the spectrum of a Choi matrix.
fn kraus_of_choi(party: &Party, choi: &HermitianOperator) -> Result<Vec<DMatrix<C64>>> {
    let (d_in, d_out) = (party.input().dim(), party.output().dim());
    let natural: Vec<LabeledSpace> = party
        .input()
        .factors()
        .iter()
        .chain(party.output().factors())
        .cloned()
        .collect();
    let m = choi.matrix_in_order(&natural)?;
    let (values, vectors) = linalg::eigh(&m)?;
    let cutoff = 1e-14 * values.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    Ok(values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > cutoff)
        .map(|(k, &v)| {
            let col = vectors.column(k);
            DMatrix::from_fn(d_out, d_in, |o, i| col[i * d_out + o] * v.sqrt())
        })
        .collect())
}

/// Fixture instruments.
#[derive(Debug, Clone, PartialEq)]
pub enum StandardInstrument {
    /// Setting `x` measures in the orthonormal columns of `bases[x]` and reprepares the
    /// observed basis vector (`d_in = d_out`).
    MeasureReprepare { bases: Vec<DMatrix<C64>> },
    /// Setting `x` applies `unitaries[x]`; a single outcome.
    Unitary { unitaries: Vec<DMatrix<C64>> },
    /// Setting `x` discards the input and prepares the density matrix `states[x]`.
    DiscardPrepare { states: Vec<DMatrix<C64>> },
    /// Setting `x` measures the POVM `povms[x]`; the party must have a trivial output.
    Povm { povms: Vec<Vec<DMatrix<C64>>> },
}

impl StandardInstrument {
    pub fn build(&self, party: &Party) -> Result<Instrument> {
        let (d_in, d_out) = (party.input().dim(), party.output().dim());
        let mismatch = |what: &str| Error::DimensionMismatch(format!("{what} for party `{}`", party.name()));
        match self {
            StandardInstrument::MeasureReprepare { bases } => {
                if d_in != d_out {
                    return Err(mismatch("measure-reprepare needs d_in = d_out"));
                }
                let kraus = bases
                    .iter()
                    .map(|b| {
                        if b.nrows() != d_in {
                            return Err(mismatch("basis size"));
                        }
                        linalg::is_unitary(b, 1e-10)?;
                        Ok((0..d_in)
                            .map(|a| {
                                let v = b.column(a);
                                vec![v * v.adjoint()]
                            })
                            .collect())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Instrument::from_kraus(party, kraus)
            }
            StandardInstrument::Unitary { unitaries } => {
                let kraus = unitaries
                    .iter()
                    .map(|u| {
                        if u.nrows() != d_out || u.ncols() != d_in {
                            return Err(mismatch("unitary size"));
                        }
                        linalg::is_unitary(u, 1e-10)?;
                        Ok(vec![vec![u.clone()]])
                    })
                    .collect::<Result<Vec<_>>>()?;
                Instrument::from_kraus(party, kraus)
            }
            StandardInstrument::DiscardPrepare { states } => {
                let kraus = states
                    .iter()
                    .map(|rho| {
                        if rho.nrows() != d_out || rho.ncols() != d_out {
                            return Err(mismatch("prepared state size"));
                        }
                        // K_{k,i} = √p_k |ψ_k><i|
                        let (values, vectors) = linalg::eigh(rho)?;
                        let mut ks = Vec::new();
                        for (k, &p) in values.iter().enumerate() {
                            if p < -1e-12 {
                                return Err(Error::NotPositive(p));
                            }
                            if p <= 0.0 {
                                continue;
                            }
                            let psi = vectors.column(k) * C64::new(p.sqrt(), 0.0);
                            for i in 0..d_in {
                                let mut k_op = DMatrix::zeros(d_out, d_in);
                                k_op.set_column(i, &psi);
                                ks.push(k_op);
                            }
                        }
                        Ok(vec![ks])
                    })
                    .collect::<Result<Vec<_>>>()?;
                Instrument::from_kraus(party, kraus)
            }
            StandardInstrument::Povm { povms } => {
                if d_out != 1 {
                    return Err(mismatch("a POVM needs a trivial output"));
                }
                let chois = povms
                    .iter()
                    .map(|elements| {
                        elements
                            .iter()
                            .map(|e| {
                                if e.nrows() != d_in || e.ncols() != d_in {
                                    return Err(mismatch("POVM element size"));
                                }
                                // Choi of a ⟨·⟩-valued map with effect E is Eᵀ
                                HermitianOperator::new(party.space(), e.transpose())
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Instrument::from_chois(party, chois)
            }
        }
    }
}

/// Dense table `P(a⃗|x⃗)`, row-major over `(x_1, …, x_n, a_1, …, a_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    parties: Vec<String>,
    settings: Vec<usize>,
    outcomes: Vec<usize>,
    values: Vec<f64>,
}

impl ProbabilityTable {
    pub fn new(parties: Vec<String>, settings: Vec<usize>, outcomes: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if parties.len() != settings.len() || parties.len() != outcomes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parties, {} setting counts, {} outcome counts",
                parties.len(),
                settings.len(),
                outcomes.len()
            )));
        }
        let n: usize = settings.iter().chain(&outcomes).product();
        if values.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "expected {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            parties,
            settings,
            outcomes,
            values,
        })
    }

    pub fn parties(&self) -> &[String] {
        &self.parties
    }

    pub fn settings(&self) -> &[usize] {
        &self.settings
    }

    pub fn outcomes(&self) -> &[usize] {
        &self.outcomes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn outcome_count(&self) -> usize {
        self.outcomes.iter().product()
    }

    pub fn setting_count(&self) -> usize {
        self.settings.iter().product()
    }

    /// Row-major flat index of a setting tuple.
    pub fn setting_index(&self, xs: &[usize]) -> usize {
        flat_index(xs, &self.settings)
    }

    pub fn get(&self, xs: &[usize], outcomes: &[usize]) -> f64 {
        self.values[self.setting_index(xs) * self.outcome_count() + flat_index(outcomes, &self.outcomes)]
    }

    /// Distribution over outcome tuples for a flat setting index.
    pub fn conditional(&self, setting: usize) -> &[f64] {
        let n = self.outcome_count();
        &self.values[setting * n..(setting + 1) * n]
    }

    /// Check non-negativity and per-setting normalization.
    pub fn check(&self) -> Result<()> {
        if let Some(v) = self.values.iter().find(|&&v| v < -PROBABILITY_TOL || v.is_nan()) {
            return Err(Error::ProbabilityInvariant(format!("entry {v:.3e} is negative")));
        }
        for s in 0..self.setting_count() {
            let total: f64 = self.conditional(s).iter().sum();
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::NotNormalized(format!("setting tuple {s} sums to {total:.12}")));
            }
        }
        Ok(())
    }

    /// Sum out every party not in `keep`. Dropped parties must have a single setting.
    pub fn marginal(&self, keep: &[&str]) -> Result<ProbabilityTable> {
        let mut kept = Vec::new();
        for name in keep {
            let i = self
                .parties
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| Error::UnknownParty(name.to_string()))?;
            kept.push(i);
        }
        for (i, p) in self.parties.iter().enumerate() {
            if !kept.contains(&i) && self.settings[i] != 1 {
                return Err(Error::ShapeMismatch(format!(
                    "cannot marginalize party `{p}` with {} settings",
                    self.settings[i]
                )));
            }
        }
        let settings: Vec<usize> = kept.iter().map(|&i| self.settings[i]).collect();
        let outcomes: Vec<usize> = kept.iter().map(|&i| self.outcomes[i]).collect();
        let n_out: usize = outcomes.iter().product();
        let mut values = vec![0.0; settings.iter().product::<usize>() * n_out];
        let n = self.parties.len();
        for (flat, &v) in self.values.iter().enumerate() {
            let digits = unflatten(flat, &[self.settings.as_slice(), self.outcomes.as_slice()].concat());
            let xs: Vec<usize> = kept.iter().map(|&i| digits[i]).collect();
            let as_: Vec<usize> = kept.iter().map(|&i| digits[n + i]).collect();
            values[flat_index(&xs, &settings) * n_out + flat_index(&as_, &outcomes)] += v;
        }
        ProbabilityTable::new(keep.iter().map(|s| s.to_string()).collect(), settings, outcomes, values)
    }

    /// Largest entrywise difference to another table of the same shape.
    pub fn max_abs_diff(&self, other: &ProbabilityTable) -> Result<f64> {
        if self.settings != other.settings || self.outcomes != other.outcomes {
            return Err(Error::ShapeMismatch("tables have different alphabets".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

pub(crate) fn flat_index(digits: &[usize], radices: &[usize]) -> usize {
    digits.iter().zip(radices).fold(0, |acc, (&d, &r)| acc * r + d)
}

pub(crate) fn unflatten(mut flat: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = flat % r;
        flat /= r;
    }
    out
}

/// Instruments arranged in the process's party order.
fn match_instruments<'a>(p: &ProcessMatrix, instruments: &'a [Instrument]) -> Result<Vec<&'a Instrument>> {
    if instruments.len() != p.parties().len() {
        return Err(Error::PartyCount {
            expected: p.parties().len(),
            found: instruments.len(),
        });
    }
    p.parties()
        .iter()
        .map(|party| {
            let inst = instruments
                .iter()
                .find(|i| i.party.name() == party.name())
                .ok_or_else(|| Error::UnknownParty(party.name().to_string()))?;
            if inst.party.input() != party.input() || inst.party.output() != party.output() {
                return Err(Error::SpaceMismatch(format!(
                    "instrument for `{}` acts on {}, party spans {}",
                    party.name(),
                    inst.party.space(),
                    party.space()
                )));
            }
            Ok(inst)
        })
        .collect()
}

/// Contract `w` with the transposed Chois of parties `k..` for every outcome tuple.
fn contract_outcomes(w: &Operator, insts: &[&Instrument], xs: &[usize], out: &mut Vec<f64>) -> Result<()> {
    let Some((first, rest)) = insts.split_first() else {
        out.push(w.trace().re);
        return Ok(());
    };
    for a in 0..first.outcomes {
        let reduced = w.contract(first.choi(xs[0], a).transpose().as_operator())?;
        contract_outcomes(&reduced, rest, &xs[1..], out)?;
    }
    Ok(())
}

fn check_probabilities(values: &[f64]) -> Result<()> {
    if let Some(v) = values
        .iter()
        .find(|&&v| !(-PROBABILITY_TOL..=1.0 + PROBABILITY_TOL).contains(&v))
    {
        return Err(Error::ProbabilityInvariant(format!(
            "probability {v:.3e} outside [0, 1]"
        )));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(format!("outcomes sum to {total:.12}")));
    }
    Ok(())
}

/// Outcome distribution for one setting tuple (indexed in the process's party order),
/// row-major over the outcome tuple.
pub fn born(p: &ProcessMatrix, instruments: &[Instrument], settings: &[usize]) -> Result<Vec<f64>> {
    if !p.is_valid() {
        return Err(Error::Unvalidated);
    }
    let insts = match_instruments(p, instruments)?;
    check_settings(&insts, settings)?;
    let mut out = Vec::new();
    contract_outcomes(p.w().as_operator(), &insts, settings, &mut out)?;
    check_probabilities(&out)?;
    Ok(out)
}

fn check_settings(insts: &[&Instrument], settings: &[usize]) -> Result<()> {
    if settings.len() != insts.len() || settings.iter().zip(insts).any(|(&x, i)| x >= i.settings()) {
        return Err(Error::ShapeMismatch(format!("setting tuple {settings:?} out of range")));
    }
    Ok(())
}

/// The full table over every setting tuple, evaluated in parallel.
pub fn born_table(p: &ProcessMatrix, instruments: &[Instrument]) -> Result<ProbabilityTable> {
    if !p.is_valid() {
        return Err(Error::Unvalidated);
    }
    let insts = match_instruments(p, instruments)?;
    let settings: Vec<usize> = insts.iter().map(|i| i.settings()).collect();
    let outcomes: Vec<usize> = insts.iter().map(|i| i.outcomes()).collect();
    let n_settings: usize = settings.iter().product();
    let rows = (0..n_settings)
        .into_par_iter()
        .map(|s| {
            let xs = unflatten(s, &settings);
            let mut row = Vec::new();
            contract_outcomes(p.w().as_operator(), &insts, &xs, &mut row)?;
            check_probabilities(&row)?;
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    ProbabilityTable::new(
        p.parties().iter().map(|x| x.name().to_string()).collect(),
        settings,
        outcomes,
        rows.concat(),
    )
}

/// Sequential Kraus simulation of a fixed-order scenario.
///
/// `order[k]` acts after `order[k-1]`; `channels[k]` (Kraus list) carries `order[k]`'s
/// output to `order[k+1]`'s input and the last output is discarded. Settings and the
/// returned outcome tuples follow `order`. Works on density matrices only, never on
/// process matrices.
pub fn circuit_oracle(
    order: &[&Instrument],
    initial_state: &DMatrix<C64>,
    channels: &[Vec<DMatrix<C64>>],
    settings: &[usize],
) -> Result<Vec<f64>> {
    if order.is_empty() || channels.len() + 1 != order.len() {
        return Err(Error::InvalidOrder(format!(
            "{} parties with {} channels",
            order.len(),
            channels.len()
        )));
    }
    check_settings(order, settings)?;
    let d0 = order[0].party.input().dim();
    if initial_state.nrows() != d0 || initial_state.ncols() != d0 {
        return Err(Error::DimensionMismatch(format!("initial state must be {d0}x{d0}")));
    }
    let mut out = Vec::new();
    simulate(order, initial_state, channels, settings, &mut out);
    check_probabilities(&out)?;
    Ok(out)
}

fn simulate(
    order: &[&Instrument],
    rho: &DMatrix<C64>,
    channels: &[Vec<DMatrix<C64>>],
    settings: &[usize],
    out: &mut Vec<f64>,
) {
    let inst = order[0];
    for a in 0..inst.outcomes {
        let mut next: DMatrix<C64> = inst.kraus(settings[0], a).iter().map(|k| k * rho * k.adjoint()).sum();
        if order.len() == 1 {
            out.push(next.trace().re);
            continue;
        }
        next = channels[0].iter().map(|k| k * &next * k.adjoint()).sum();
        simulate(&order[1..], &next, &channels[1..], &settings[1..], out);
    }
}

/// Result of the switch-based commuting/anticommuting discrimination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminationResult {
    pub p_plus: f64,
    pub p_minus: f64,
}

/// One-query test of whether `U` and `V` commute or anticommute, on target `|0>`.
///
/// Alice applies `U`, Bob applies `V` inside the symmetric quantum switch; Fiona measures
/// the control in the `|±>` basis and discards the target. `P(+) = ‖(UV + VU)|ψ>‖² / 4`.
pub fn switch_discrimination_demo(u: &DMatrix<C64>, v: &DMatrix<C64>) -> Result<DiscriminationResult> {
    let mut psi = DVector::zeros(u.nrows());
    if u.nrows() == 0 {
        return Err(Error::NotUnitary(f64::INFINITY));
    }
    psi[0] = C64::new(1.0, 0.0);
    switch_discrimination_with_state(u, v, &psi)
}

/// [`switch_discrimination_demo`] with an arbitrary target state.
pub fn switch_discrimination_with_state(
    u: &DMatrix<C64>,
    v: &DMatrix<C64>,
    psi: &DVector<C64>,
) -> Result<DiscriminationResult> {
    linalg::is_unitary(u, 1e-10)?;
    linalg::is_unitary(v, 1e-10)?;
    let d = u.nrows();
    if v.nrows() != d || psi.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "U is {d}x{d}, V is {}x{}, target has dimension {}",
            v.nrows(),
            v.ncols(),
            psi.len()
        )));
    }
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let qs = make_quantum_switch(psi, (h, h))?;
    interference_decomposition(&qs)?;
    let w = validate_process(&qs.to_process())?;
    if !w.is_valid() {
        return Err(Error::InvalidProcess("switch failed validation".into()));
    }
    let parties = switch_parties(d)?;
    let alice = StandardInstrument::Unitary {
        unitaries: vec![u.clone()],
    }
    .build(&parties[0])?;
    let bob = StandardInstrument::Unitary {
        unitaries: vec![v.clone()],
    }
    .build(&parties[1])?;
    // Fiona's input is ordered (F_c, F_t)
    let plus = DMatrix::from_element(2, 2, C64::new(0.5, 0.0));
    let minus = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5].map(|x| C64::new(x, 0.0)));
    let eye = DMatrix::identity(d, d);
    let fiona = StandardInstrument::Povm {
        povms: vec![vec![plus.kronecker(&eye), minus.kronecker(&eye)]],
    }
    .build(&parties[2])?;
    let probs = born(&w, &[alice, bob, fiona], &[0, 0, 0])?;
    Ok(DiscriminationResult {
        p_plus: probs[0],
        p_minus: probs[1],
    })
}

/// Instruments for [`crate::process::ocb_process`] on the game
/// [`crate::causality::CausalGame::ocb`].
///
/// Alice measures `Z` on her input (outcome `a`) and prepares `|x>`. Bob's setting is
/// `2·dir + y`: for `dir = 0` he measures `Z` and prepares `|0>`; for `dir = 1` he
/// measures `X` (outcome `b`) and prepares `|y ⊕ b>`.
pub fn ocb_instruments(parties: &[Party]) -> Result<Vec<Instrument>> {
    let [alice, bob] = parties else {
        return Err(Error::PartyCount {
            expected: 2,
            found: parties.len(),
        });
    };
    let half = C64::new(0.5, 0.0);
    let z_proj = |k: usize| {
        let mut m = DMatrix::zeros(2, 2);
        m[(k, k)] = C64::new(1.0, 0.0);
        m
    };
    let x_proj = |k: usize| {
        let s = if k == 0 { half } else { -half };
        DMatrix::from_row_slice(2, 2, &[half, s, s, half])
    };
    // chois are real symmetric, so the transpose convention does not matter here
    let product = |party: &Party, inp: DMatrix<C64>, out: DMatrix<C64>| {
        HermitianOperator::new(party.space(), inp.kronecker(&out))
    };
    let a_chois = (0..2)
        .map(|x| {
            (0..2)
                .map(|a| product(alice, z_proj(a), z_proj(x)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let b_chois = (0..4)
        .map(|s| {
            let (dir, y) = (s / 2, s % 2);
            (0..2)
                .map(|b| {
                    if dir == 0 {
                        product(bob, z_proj(b), z_proj(0))
                    } else {
                        product(bob, x_proj(b), z_proj(y ^ b))
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![
        Instrument::from_chois(alice, a_chois)?,
        Instrument::from_chois(bob, b_chois)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{identity_channel, make_ordered_process, process_from_state};
    use crate::random::{self, seeded};
    use crate::tensor::{PureVector, SpaceProduct};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn pauli(k: usize) -> DMatrix<C64> {
        let z = c(0.0);
        let one = c(1.0);
        let i = C64::new(0.0, 1.0);
        match k {
            0 => DMatrix::identity(2, 2),
            1 => DMatrix::from_row_slice(2, 2, &[z, one, one, z]),
            2 => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
            _ => DMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
        }
    }

    fn z_basis() -> DMatrix<C64> {
        DMatrix::identity(2, 2)
    }

    fn rank(op: &HermitianOperator) -> usize {
        let (values, _) = op.eigh().unwrap();
        values.iter().filter(|&&v| v > 1e-9).count()
    }

    #[test]
    fn measure_reprepare_fixture() {
        let a = Party::with_dims("A", 2, 2).unwrap();
        let inst = StandardInstrument::MeasureReprepare { bases: vec![z_basis()] }
            .build(&a)
            .unwrap();
        assert_eq!(inst.outcomes(), 2);
        for k in 0..2 {
            assert_eq!(rank(inst.choi(0, k)), 1);
        }
    }

    #[test]
    fn unitary_fixture() {
        let a = Party::with_dims("A", 2, 2).unwrap();
        let u = random::random_unitary(2, &mut seeded(1, 0));
        let inst = StandardInstrument::Unitary { unitaries: vec![u] }.build(&a).unwrap();
        assert_eq!(inst.outcomes(), 1);
        assert_eq!(rank(inst.choi(0, 0)), 1);
        assert!((inst.choi(0, 0).real_trace() - 2.0).abs() < 1e-12);
        let bad = StandardInstrument::Unitary {
            unitaries: vec![pauli(1).scale(2.0)],
        };
        assert!(matches!(bad.build(&a), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn povm_chois_sum_to_identity() {
        let a = Party::with_dims("A", 3, 1).unwrap();
        // random POVM from a random isometry
        let iso = random::random_isometry(3, 9, &mut seeded(2, 0));
        let elements: Vec<DMatrix<C64>> = (0..3)
            .map(|k| {
                let block = iso.rows(3 * k, 3).into_owned();
                block.adjoint() * block
            })
            .collect();
        let inst = StandardInstrument::Povm { povms: vec![elements] }.build(&a).unwrap();
        let total = (0..3).fold(HermitianOperator::zeros(a.space()), |acc, k| {
            acc.add(inst.choi(0, k)).unwrap()
        });
        assert!(linalg::max_abs(&(total.matrix() - DMatrix::identity(3, 3))) < 1e-12);
        let wrong = Party::with_dims("A", 3, 2).unwrap();
        assert!(matches!(
            StandardInstrument::Povm {
                povms: vec![vec![DMatrix::identity(3, 3)]]
            }
            .build(&wrong),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn incomplete_instrument_is_rejected() {
        let a = Party::with_dims("A", 2, 1).unwrap();
        let e = HermitianOperator::identity(a.space()).scale(0.4);
        assert!(matches!(
            Instrument::from_chois(&a, vec![vec![e.clone(), e]]),
            Err(Error::InvalidInstrument(_))
        ));
    }

    #[test]
    fn kraus_round_trip_through_choi() {
        let a = Party::with_dims("A", 2, 3).unwrap();
        let kraus = random::random_instrument_kraus(2, 3, 2, 2, 2, &mut seeded(3, 0));
        let inst = Instrument::from_kraus(&a, kraus).unwrap();
        let chois: Vec<Vec<HermitianOperator>> = (0..2)
            .map(|x| (0..2).map(|k| inst.choi(x, k).clone()).collect())
            .collect();
        let rebuilt = Instrument::from_chois(&a, chois).unwrap();
        for x in 0..2 {
            for k in 0..2 {
                let again = choi_of_kraus(rebuilt.kraus(x, k), a.input(), a.output()).unwrap();
                assert!(again.frobenius_distance(inst.choi(x, k)).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn product_state_povms_match_textbook() {
        let a = Party::with_dims("A", 2, 1).unwrap();
        let b = Party::with_dims("B", 2, 1).unwrap();
        let inputs = SpaceProduct::new([
            LabeledSpace::new("A_I", 2).unwrap(),
            LabeledSpace::new("B_I", 2).unwrap(),
        ])
        .unwrap();
        for s in 0..10 {
            let mut rng = seeded(4, s);
            let rho = random::random_density_matrix(4, &mut rng);
            let povm = |rng: &mut random::SeededRng| {
                let iso = random::random_isometry(2, 4, rng);
                (0..2)
                    .map(|k| {
                        let b = iso.rows(2 * k, 2).into_owned();
                        b.adjoint() * b
                    })
                    .collect::<Vec<_>>()
            };
            let (ea, eb) = (povm(&mut rng), povm(&mut rng));
            let p = validate_process(
                &process_from_state(
                    vec![a.clone(), b.clone()],
                    &HermitianOperator::new(inputs.clone(), rho.clone()).unwrap(),
                )
                .unwrap(),
            )
            .unwrap();
            let ia = StandardInstrument::Povm {
                povms: vec![ea.clone()],
            }
            .build(&a)
            .unwrap();
            let ib = StandardInstrument::Povm {
                povms: vec![eb.clone()],
            }
            .build(&b)
            .unwrap();
            let probs = born(&p, &[ia, ib], &[0, 0]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let expected = (&rho * ea[i].kronecker(&eb[j])).trace().re;
                    assert!((probs[i * 2 + j] - expected).abs() < 1e-12);
                }
            }
        }
    }

    fn forward_signalling() -> (ProcessMatrix, Vec<Instrument>) {
        let a = Party::with_dims("A", 2, 2).unwrap();
        let b = Party::with_dims("B", 2, 2).unwrap();
        let rho = PureVector::new(a.input().clone(), DVector::from_vec(vec![c(1.0), c(0.0)]))
            .unwrap()
            .outer();
        let ch = identity_channel(a.output(), b.input()).unwrap();
        let w = make_ordered_process(&[a.clone(), b.clone()], &rho, &[ch]).unwrap();
        // A measures X and reprepares |outcome> in Z; B measures Z (or X) and reprepares
        let h = c(std::f64::consts::FRAC_1_SQRT_2);
        let had = DMatrix::from_row_slice(2, 2, &[h, h, h, -h]);
        let ia = Instrument::from_kraus(
            &a,
            vec![(0..2)
                .map(|k| {
                    let mut m = DMatrix::zeros(2, 2);
                    m[(k, 0)] = had[(0, k)];
                    m[(k, 1)] = had[(1, k)];
                    vec![m]
                })
                .collect()],
        )
        .unwrap();
        let ib = StandardInstrument::MeasureReprepare {
            bases: vec![z_basis(), had],
        }
        .build(&b)
        .unwrap();
        (w, vec![ia, ib])
    }

    #[test]
    fn perfect_forward_signalling() {
        let (w, insts) = forward_signalling();
        let probs = born(&w, &insts, &[0, 0]).unwrap();
        assert!((probs[0] + probs[3] - 1.0).abs() < 1e-12);
        assert!((probs[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_backward_signalling() {
        let (w, insts) = forward_signalling();
        let table = born_table(&w, &insts).unwrap();
        for a in 0..2 {
            let m0 = table.get(&[0, 0], &[a, 0]) + table.get(&[0, 0], &[a, 1]);
            let m1 = table.get(&[0, 1], &[a, 0]) + table.get(&[0, 1], &[a, 1]);
            assert!((m0 - m1).abs() < 1e-12);
        }
    }

    #[test]
    fn born_needs_validated_process() {
        let (w, insts) = forward_signalling();
        let unchecked = ProcessMatrix::new(w.parties().to_vec(), w.w().clone()).unwrap();
        assert_eq!(born(&unchecked, &insts, &[0, 0]).unwrap_err(), Error::Unvalidated);
        assert!(matches!(born(&w, &insts[..1], &[0]), Err(Error::PartyCount { .. })));
    }

    #[test]
    fn born_matches_circuit_on_random_ordered_scenarios() {
        for s in 0..20 {
            let mut rng = seeded(5, s);
            let a = Party::with_dims("A", 2, 2).unwrap();
            let b = Party::with_dims("B", 2, 2).unwrap();
            let rho = random::random_density_matrix(2, &mut rng);
            let ks = random::random_channel_kraus(2, 2, 2, &mut rng);
            let ch = choi_of_kraus(&ks, a.output(), b.input()).unwrap();
            let w = make_ordered_process(
                &[a.clone(), b.clone()],
                &HermitianOperator::new(a.input().clone(), rho.clone()).unwrap(),
                &[ch],
            )
            .unwrap();
            let ia = Instrument::from_kraus(&a, random::random_instrument_kraus(2, 2, 2, 2, 1, &mut rng)).unwrap();
            let ib = Instrument::from_kraus(&b, random::random_instrument_kraus(2, 2, 2, 2, 2, &mut rng)).unwrap();
            for x in 0..2 {
                for y in 0..2 {
                    let engine = born(&w, &[ia.clone(), ib.clone()], &[x, y]).unwrap();
                    let oracle = circuit_oracle(&[&ia, &ib], &rho, std::slice::from_ref(&ks), &[x, y]).unwrap();
                    for (p, q) in engine.iter().zip(&oracle) {
                        assert!((p - q).abs() < 1e-11, "{p} vs {q}");
                    }
                }
            }
        }
    }

    #[test]
    fn table_marginal_and_indexing() {
        let t = ProbabilityTable::new(
            vec!["A".into(), "F".into()],
            vec![2, 1],
            vec![2, 2],
            vec![0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25],
        )
        .unwrap();
        t.check().unwrap();
        assert_eq!(t.get(&[1, 0], &[0, 1]), 0.25);
        let m = t.marginal(&["A"]).unwrap();
        assert!((m.values()[0] - 0.3).abs() < 1e-15);
        assert!((m.values()[1] - 0.7).abs() < 1e-15);
        assert!(t.marginal(&["F"]).is_err());
        assert_eq!(unflatten(flat_index(&[1, 0, 2], &[2, 3, 4]), &[2, 3, 4]), vec![1, 0, 2]);
    }

    #[test]
    fn discrimination_of_paulis() {
        let r = switch_discrimination_demo(&pauli(1), &pauli(3)).unwrap();
        assert!(r.p_plus.abs() < 1e-12);
        let r = switch_discrimination_demo(&pauli(1), &pauli(1)).unwrap();
        assert!((r.p_plus - 1.0).abs() < 1e-12);
        let r = switch_discrimination_demo(&pauli(0), &pauli(0)).unwrap();
        assert!((r.p_plus - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discrimination_matches_interference_formula() {
        for s in 0..10 {
            let mut rng = seeded(6, s);
            let u = random::random_unitary(2, &mut rng);
            let v = random::random_unitary(2, &mut rng);
            let psi = random::random_pure_state(2, &mut rng);
            let r = switch_discrimination_with_state(&u, &v, &psi).unwrap();
            let expected = ((&v * &u + &u * &v) * &psi).norm_squared() / 4.0;
            assert!((r.p_plus - expected).abs() < 1e-12);
            assert!((r.p_plus + r.p_minus - 1.0).abs() < 1e-12);
        }
    }
}
