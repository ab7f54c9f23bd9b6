//! Process matrices: construction, validity, fixed-order processes and the quantum switch.

use nalgebra::{DMatrix, DVector};
use std::fmt;

use crate::tensor::{
    choi_of_kraus, product_basis, trace_preservation_defect, HermitianOperator, LabeledSpace, Operator, PureVector,
    SpaceProduct,
};
use crate::{Error, Result, C64};

/// Eigenvalue floor accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
/// Tolerance for the linear (normalization) conditions.
pub const LINEAR_TOL: f64 = 1e-9;

/// Label of the switch's control qubit at Fiona's input.
pub const CONTROL_LABEL: &str = "F_c";
/// Label of the switch's target system at Fiona's input.
pub const TARGET_LABEL: &str = "F_t";

/// A party with a quantum input and output system.
///
/// Either side may be a product of several labelled factors; an output of total
/// dimension 1 models a party without an outgoing system.
#[derive(Debug, Clone, PartialEq)]
pub struct Party {
    name: String,
    input: SpaceProduct,
    output: SpaceProduct,
}

impl Party {
    pub fn new(name: impl Into<String>, input: SpaceProduct, output: SpaceProduct) -> Result<Self> {
        input.union(&output)?;
        Ok(Self {
            name: name.into(),
            input,
            output,
        })
    }

    /// A party with single factors labelled `<name>_I` and `<name>_O`.
    pub fn with_dims(name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        Self::new(
            name,
            LabeledSpace::new(format!("{name}_I"), d_in)?.into(),
            LabeledSpace::new(format!("{name}_O"), d_out)?.into(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input(&self) -> &SpaceProduct {
        &self.input
    }

    pub fn output(&self) -> &SpaceProduct {
        &self.output
    }

    /// `input ⊗ output`.
    pub fn space(&self) -> SpaceProduct {
        self.input.union(&self.output).expect("disjoint by construction")
    }

    pub fn labels(&self) -> Vec<String> {
        self.input
            .labels()
            .chain(self.output.labels())
            .map(str::to_string)
            .collect()
    }

    pub fn input_labels(&self) -> Vec<String> {
        self.input.labels().map(str::to_string).collect()
    }

    pub fn output_labels(&self) -> Vec<String> {
        self.output.labels().map(str::to_string).collect()
    }

    pub fn has_trivial_output(&self) -> bool {
        self.output.dim() == 1
    }
}

/// The joint space of a list of parties.
pub fn joint_space(parties: &[Party]) -> Result<SpaceProduct> {
    for (i, p) in parties.iter().enumerate() {
        if parties[..i].iter().any(|q| q.name == p.name) {
            return Err(Error::LabelCollision(p.name.clone()));
        }
    }
    SpaceProduct::new(parties.iter().flat_map(|p| {
        p.input
            .factors()
            .iter()
            .chain(p.output.factors())
            .cloned()
            .collect::<Vec<_>>()
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub enum InvalidReason {
    NotPositive { min_eigenvalue: f64 },
    Normalization { residual: f64 },
}

impl InvalidReason {
    pub fn kind(&self) -> &'static str {
        match self {
            InvalidReason::NotPositive { .. } => "positivity",
            InvalidReason::Normalization { .. } => "normalization",
        }
    }
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvalidReason::NotPositive { min_eigenvalue } => {
                write!(f, "positivity: minimum eigenvalue {min_eigenvalue:.3e}")
            }
            InvalidReason::Normalization { residual } => {
                write!(f, "normalization: residual {residual:.3e}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Validity {
    Unchecked,
    Valid,
    Invalid(InvalidReason),
}

/// A process matrix `W` over the input and output spaces of its parties.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessMatrix {
    parties: Vec<Party>,
    w: HermitianOperator,
    validity: Validity,
}

impl ProcessMatrix {
    pub fn new(parties: Vec<Party>, w: HermitianOperator) -> Result<Self> {
        let space = joint_space(&parties)?;
        if &space != w.space() {
            return Err(Error::SpaceMismatch(format!(
                "parties span {space}, operator acts on {}",
                w.space()
            )));
        }
        Ok(Self {
            parties,
            w,
            validity: Validity::Unchecked,
        })
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn party(&self, name: &str) -> Option<&Party> {
        self.parties.iter().find(|p| p.name == name)
    }

    pub fn w(&self) -> &HermitianOperator {
        &self.w
    }

    pub fn validity(&self) -> &Validity {
        &self.validity
    }

    pub fn is_valid(&self) -> bool {
        self.validity == Validity::Valid
    }

    /// `Π d_{X_O}`, the trace of every valid process on these parties.
    pub fn expected_trace(&self) -> f64 {
        self.parties.iter().map(|p| p.output.dim() as f64).product()
    }

    pub(crate) fn assume_valid(mut self) -> Self {
        self.validity = Validity::Valid;
        self
    }
}

/// Residuals behind a validity verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub expected_trace: f64,
    /// Largest `|Tr[W ⊗_X C_X] - 1|` over the spanning-set tuples.
    pub normalization_residual: f64,
    pub tuples_checked: usize,
}

impl ValidityReport {
    /// First violated condition, positivity before normalization.
    pub fn violation(&self) -> Option<InvalidReason> {
        self.violation_with(PSD_TOL, LINEAR_TOL)
    }

    /// [`ValidityReport::violation`] with explicit tolerances.
    pub fn violation_with(&self, psd_tol: f64, linear_tol: f64) -> Option<InvalidReason> {
        if self.min_eigenvalue < -psd_tol {
            Some(InvalidReason::NotPositive {
                min_eigenvalue: self.min_eigenvalue,
            })
        } else if self.normalization_residual > linear_tol {
            Some(InvalidReason::Normalization {
                residual: self.normalization_residual,
            })
        } else {
            None
        }
    }
}

/// Affine spanning set of `{C on X_I ⊗ X_O : Tr_{X_O} C = 1_{X_I}}`:
/// `1/d_O` together with `1/d_O + H` for every product-basis `H` that is traceless on
/// the output.
pub(crate) fn party_spanning_set(party: &Party) -> Result<Vec<Operator>> {
    let space = party.space();
    let base = HermitianOperator::maximally_mixed(space.clone()).scale(party.input.dim() as f64);
    let output_positions: Vec<usize> = space
        .labels()
        .enumerate()
        .filter(|(_, l)| party.output.contains(l))
        .map(|(k, _)| k)
        .collect();
    let mut set = vec![base.as_operator().clone()];
    for (idx, b) in product_basis(&space)? {
        if output_positions.iter().any(|&k| idx[k] != 0) {
            set.push(base.as_operator().add(b.as_operator())?);
        }
    }
    Ok(set)
}

fn normalization_residual(w: &Operator, sets: &[Vec<Operator>]) -> Result<(f64, usize)> {
    let Some((first, rest)) = sets.split_first() else {
        return Ok(((w.trace() - C64::new(1.0, 0.0)).norm(), 1));
    };
    let mut worst = 0.0f64;
    let mut count = 0;
    for c in first {
        let (r, n) = normalization_residual(&w.contract(c)?, rest)?;
        worst = worst.max(r);
        count += n;
    }
    Ok((worst, count))
}

/// Positivity and spanning-set normalization residuals of `p`.
pub fn validity_report(p: &ProcessMatrix) -> Result<ValidityReport> {
    let min_eigenvalue = p.w.min_eigenvalue()?;
    let sets = p.parties.iter().map(party_spanning_set).collect::<Result<Vec<_>>>()?;
    let (normalization_residual, tuples_checked) = normalization_residual(p.w.as_operator(), &sets)?;
    Ok(ValidityReport {
        min_eigenvalue,
        trace: p.w.real_trace(),
        expected_trace: p.expected_trace(),
        normalization_residual,
        tuples_checked,
    })
}

/// Operational validity check.
///
/// `W` is valid iff it is positive semidefinite and `Tr[W ⊗_X C_X] = 1` for every tuple
/// drawn from each party's affine spanning set of trace-preserving Choi operators; by
/// multilinearity this covers every choice of CPTP maps.
pub fn validate_process(p: &ProcessMatrix) -> Result<ProcessMatrix> {
    let report = validity_report(p)?;
    let mut out = p.clone();
    out.validity = match report.violation() {
        None => Validity::Valid,
        Some(reason) => Validity::Invalid(reason),
    };
    Ok(out)
}

/// Residuals of the bipartite closed-form validity conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormReport {
    pub min_eigenvalue: f64,
    pub trace_residual: f64,
    /// Frobenius norms of the three linear conditions.
    pub conditions: [f64; 3],
}

impl ClosedFormReport {
    pub fn holds(&self) -> bool {
        self.min_eigenvalue >= -PSD_TOL
            && self.trace_residual <= LINEAR_TOL
            && self.conditions.iter().all(|&c| c <= LINEAR_TOL)
    }
}

pub fn closed_form_report(p: &ProcessMatrix) -> Result<ClosedFormReport> {
    let [a, b] = p.parties.as_slice() else {
        return Err(Error::PartyCount {
            expected: 2,
            found: p.parties.len(),
        });
    };
    let w = p.w.as_operator();
    let (ai, ao) = (a.input_labels(), a.output_labels());
    let (bi, bo) = (b.input_labels(), b.output_labels());
    let cat = |parts: &[&Vec<String>]| parts.iter().flat_map(|v| v.iter().cloned()).collect::<Vec<String>>();

    let c1 = w
        .depolarize(&cat(&[&bi, &bo]))?
        .frobenius_distance(&w.depolarize(&cat(&[&ao, &bi, &bo]))?)?;
    let c2 = w
        .depolarize(&cat(&[&ai, &ao]))?
        .frobenius_distance(&w.depolarize(&cat(&[&ai, &ao, &bo]))?)?;
    let rebuilt = w
        .depolarize(&bo)?
        .add(&w.depolarize(&ao)?)?
        .sub(&w.depolarize(&cat(&[&ao, &bo]))?)?;
    let c3 = w.frobenius_distance(&rebuilt)?;
    Ok(ClosedFormReport {
        min_eigenvalue: p.w.min_eigenvalue()?,
        trace_residual: (p.w.real_trace() - p.expected_trace()).abs(),
        conditions: [c1, c2, c3],
    })
}

/// Bipartite validity through the closed-form depolarizing conditions.
pub fn validate_bipartite_closed_form(p: &ProcessMatrix) -> Result<bool> {
    Ok(closed_form_report(p)?.holds())
}

/// Process with definite order `order[0] ≺ order[1] ≺ …`.
///
/// `initial_state` is a density matrix on the first party's input; `channels[k]` is the
/// Choi matrix of a CPTP map from `order[k]`'s output to `order[k+1]`'s input. The last
/// party's output is discarded: `W = ρ ⊗ C_1 ⊗ … ⊗ 1`.
pub fn make_ordered_process(
    order: &[Party],
    initial_state: &HermitianOperator,
    channels: &[HermitianOperator],
) -> Result<ProcessMatrix> {
    let (first, last) = match (order.first(), order.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InvalidOrder("empty order".into())),
    };
    if channels.len() + 1 != order.len() {
        return Err(Error::InvalidOrder(format!(
            "{} parties need {} channels, got {}",
            order.len(),
            order.len() - 1,
            channels.len()
        )));
    }
    if initial_state.space() != first.input() {
        return Err(Error::SpaceMismatch(format!(
            "initial state on {}, first input is {}",
            initial_state.space(),
            first.input()
        )));
    }
    let tr = initial_state.real_trace();
    if (tr - 1.0).abs() > LINEAR_TOL {
        return Err(Error::NotUnitTrace(tr));
    }
    let min = initial_state.min_eigenvalue()?;
    if min < -PSD_TOL {
        return Err(Error::NotPositive(min));
    }
    let mut w = initial_state.clone();
    for (k, choi) in channels.iter().enumerate() {
        let expected = order[k].output().union(order[k + 1].input())?;
        if choi.space() != &expected {
            return Err(Error::SpaceMismatch(format!(
                "channel {k} acts on {}, expected {expected}",
                choi.space()
            )));
        }
        let defect = trace_preservation_defect(choi, order[k + 1].input())?;
        if defect > LINEAR_TOL {
            return Err(Error::NotTracePreserving(defect));
        }
        let min = choi.min_eigenvalue()?;
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        w = w.tensor(choi)?;
    }
    w = w.tensor(&HermitianOperator::identity(last.output().clone()))?;
    Ok(ProcessMatrix::new(order.to_vec(), w)?.assume_valid())
}

/// Choi matrix of the identity channel between two single-factor spaces of equal dimension.
pub fn identity_channel(from: &SpaceProduct, to: &SpaceProduct) -> Result<HermitianOperator> {
    if from.dim() != to.dim() {
        return Err(Error::DimensionMismatch(format!("identity channel {from} -> {to}")));
    }
    choi_of_kraus(&[DMatrix::identity(from.dim(), from.dim())], from, to)
}

/// A process given by a process vector `|W>`, with `W = |W><W|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessVector {
    parties: Vec<Party>,
    v: PureVector,
}

impl ProcessVector {
    pub fn new(parties: Vec<Party>, v: PureVector) -> Result<Self> {
        let space = joint_space(&parties)?;
        if &space != v.space() {
            return Err(Error::SpaceMismatch(format!(
                "parties span {space}, vector lives on {}",
                v.space()
            )));
        }
        Ok(Self { parties, v })
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn vector(&self) -> &PureVector {
        &self.v
    }

    /// `|W><W|` (validity unchecked).
    pub fn to_process(&self) -> ProcessMatrix {
        ProcessMatrix {
            parties: self.parties.clone(),
            w: self.v.outer(),
            validity: Validity::Unchecked,
        }
    }
}

/// Parties of the quantum switch with a `d`-dimensional target: Alice and Bob act on
/// the target; Fiona receives control (`F_c`) and target (`F_t`) and has no output.
pub fn switch_parties(d: usize) -> Result<Vec<Party>> {
    let fiona_in = SpaceProduct::new([
        LabeledSpace::new(CONTROL_LABEL, 2)?,
        LabeledSpace::new(TARGET_LABEL, d)?,
    ])?;
    Ok(vec![
        Party::with_dims("A", d, d)?,
        Party::with_dims("B", d, d)?,
        Party::new("F", fiona_in, LabeledSpace::new("F_O", 1)?.into())?,
    ])
}

fn identity_vector(d: usize) -> DVector<C64> {
    let mut v = DVector::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = C64::new(1.0, 0.0);
    }
    v
}

/// Branch of the switch in which `first` acts on the target before `second`:
/// `|ψ>^{first_I} |1>>^{first_O second_I} |1>>^{second_O F_t} |control>^{F_c}`.
fn switch_branch(psi: &DVector<C64>, first: &str, second: &str, control: usize) -> Result<PureVector> {
    let d = psi.len();
    let s = |l: String, dim: usize| LabeledSpace::new(l, dim);
    let ordered = [
        s(format!("{first}_I"), d)?,
        s(format!("{first}_O"), d)?,
        s(format!("{second}_I"), d)?,
        s(format!("{second}_O"), d)?,
        s(TARGET_LABEL.into(), d)?,
        s(CONTROL_LABEL.into(), 2)?,
        s("F_O".into(), 1)?,
    ];
    let mut ctrl = DVector::zeros(2);
    ctrl[control] = C64::new(1.0, 0.0);
    let idv = identity_vector(d);
    let entries = psi.kronecker(&idv).kronecker(&idv).kronecker(&ctrl);
    PureVector::from_ordered(&ordered, entries)
}

/// Quantum switch process vector with control amplitudes `(α, β)`.
///
/// The `α` branch routes the target through A then B (control `|0>`), the `β` branch
/// through B then A (control `|1>`). With `α = β = 1/√2` this is the standard switch.
pub fn make_quantum_switch(psi: &DVector<C64>, amplitudes: (C64, C64)) -> Result<ProcessVector> {
    let (alpha, beta) = amplitudes;
    let norm = alpha.norm_sqr() + beta.norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::AmplitudeNormalization(norm));
    }
    if psi.is_empty() || (psi.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::VectorNormalization(psi.norm()));
    }
    let ab = switch_branch(psi, "A", "B", 0)?;
    let ba = switch_branch(psi, "B", "A", 1)?;
    let v = ab.scale(alpha).add(&ba.scale(beta))?;
    ProcessVector::new(switch_parties(psi.len())?, v)
}

/// The fixed-order process `first ≺ second ≺ F` that the switch reduces to when its
/// control is prepared in `|control>` (identity channels throughout).
pub fn switch_fixed_order(psi: &DVector<C64>, a_first: bool) -> Result<ProcessMatrix> {
    let parties = switch_parties(psi.len())?;
    let (a, b, f) = (&parties[0], &parties[1], &parties[2]);
    let (first, second, control) = if a_first { (a, b, 0) } else { (b, a, 1) };
    let rho = PureVector::new(first.input().clone(), psi.clone())?.outer();
    let d = psi.len();
    // isometry |control>_c ⊗ 1_t into Fiona's input, ordered (F_c, F_t)
    let mut iso = DMatrix::zeros(2 * d, d);
    for i in 0..d {
        iso[(control * d + i, i)] = C64::new(1.0, 0.0);
    }
    let channels = [
        identity_channel(first.output(), second.input())?,
        choi_of_kraus(&[iso], second.output(), f.input())?,
    ];
    make_ordered_process(&[first.clone(), second.clone(), f.clone()], &rho, &channels)
}

/// The four terms of a symmetric switch: `W = ½(W^{A≺B} + W^{B≺A} + X + X†)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceTerms {
    pub a_before_b: HermitianOperator,
    pub b_before_a: HermitianOperator,
    /// `|W^{A≺B}><W^{B≺A}|`
    pub cross: Operator,
    /// `|W^{B≺A}><W^{A≺B}|`
    pub cross_adjoint: Operator,
}

impl InterferenceTerms {
    /// `½` times the sum of the four terms.
    pub fn reconstruct(&self) -> Result<Operator> {
        Ok(self
            .a_before_b
            .as_operator()
            .add(self.b_before_a.as_operator())?
            .add(&self.cross)?
            .add(&self.cross_adjoint)?
            .scale(0.5))
    }
}

/// Split a symmetric switch vector into its two causal-order branches by projecting the
/// control onto `|0>` and `|1>`.
pub fn interference_decomposition(qs: &ProcessVector) -> Result<InterferenceTerms> {
    let u0 = qs.v.project_factor(CONTROL_LABEL, 0)?;
    let u1 = qs.v.project_factor(CONTROL_LABEL, 1)?;
    let (n0, n1) = (u0.norm(), u1.norm());
    if (n0 - n1).abs() > 1e-12 * qs.v.norm().max(1.0) {
        return Err(Error::UnequalAmplitudes(n0, n1));
    }
    let s = C64::new(std::f64::consts::SQRT_2, 0.0);
    let (ab, ba) = (u0.scale(s), u1.scale(s));
    Ok(InterferenceTerms {
        a_before_b: ab.outer(),
        b_before_a: ba.outer(),
        cross: ab.outer_with(&ba)?,
        cross_adjoint: ba.outer_with(&ab)?,
    })
}

/// Density matrix on the joint inputs of a process whose parties all have trivial
/// outputs; Born probabilities become `Tr[ρ (⊗ POVM elements)]`.
pub fn reduce_to_state(p: &ProcessMatrix) -> Result<HermitianOperator> {
    if let Some(x) = p.parties.iter().find(|x| !x.has_trivial_output()) {
        return Err(Error::NontrivialOutput(x.name.clone()));
    }
    let outputs: Vec<String> = p.parties.iter().flat_map(Party::output_labels).collect();
    let rho = p.w.partial_trace(&outputs)?;
    let tr = rho.real_trace();
    if (tr - 1.0).abs() > LINEAR_TOL {
        return Err(Error::NotUnitTrace(tr));
    }
    Ok(rho)
}

/// Process of parties with trivial outputs sharing the joint input state `rho`.
pub fn process_from_state(parties: Vec<Party>, rho: &HermitianOperator) -> Result<ProcessMatrix> {
    if let Some(x) = parties.iter().find(|x| !x.has_trivial_output()) {
        return Err(Error::NontrivialOutput(x.name.clone()));
    }
    let mut w = rho.clone();
    for party in &parties {
        w = w.tensor(&HermitianOperator::identity(party.output.clone()))?;
    }
    ProcessMatrix::new(parties, w)
}

/// Remove a party by feeding white noise into its output and tracing its input:
/// `W' = Tr_X[W] / d_{X_O}`. For a party without output this is the partial trace.
pub fn discard_party(p: &ProcessMatrix, name: &str) -> Result<ProcessMatrix> {
    let party = p.party(name).ok_or_else(|| Error::UnknownParty(name.to_string()))?;
    let w =
        p.w.partial_trace(&party.labels())?
            .scale(1.0 / party.output.dim() as f64);
    let parties = p.parties.iter().filter(|x| x.name != name).cloned().collect();
    let mut out = ProcessMatrix::new(parties, w)?;
    if p.is_valid() {
        out.validity = Validity::Valid;
    }
    Ok(out)
}

/// Bipartite qubit process with indefinite order:
/// `W = ¼[1 + (Z^{A_O} Z^{B_I} + Z^{A_I} X^{B_I} Z^{B_O}) / √2]`.
pub fn ocb_process() -> Result<ProcessMatrix> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let id = DMatrix::<C64>::identity(2, 2);
    let x = DMatrix::from_row_slice(2, 2, &[zero, one, one, zero]);
    let z = DMatrix::from_row_slice(2, 2, &[one, zero, zero, -one]);
    let kron4 = |a: &DMatrix<C64>, b: &DMatrix<C64>, c: &DMatrix<C64>, d: &DMatrix<C64>| {
        a.kronecker(b).kronecker(c).kronecker(d)
    };
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let m = (kron4(&id, &id, &id, &id) + (kron4(&id, &z, &z, &id) + kron4(&z, &id, &x, &z)).scale(h)).scale(0.25);
    let parties = vec![Party::with_dims("A", 2, 2)?, Party::with_dims("B", 2, 2)?];
    let ordered: Vec<LabeledSpace> = parties
        .iter()
        .flat_map(|p| {
            p.input()
                .factors()
                .iter()
                .chain(p.output().factors())
                .cloned()
                .collect::<Vec<_>>()
        })
        .collect();
    ProcessMatrix::new(parties, HermitianOperator::from_ordered(&ordered, m)?)
}
