//! JSON and CSV exchange formats.
//!
//! Operators are `{"factors": [{"label", "dim"}], "entries": [[re, im], ...]}` with
//! entries row-major over the listed factor order; factors given out of label order are
//! canonicalized on read. Floats are written in shortest round-trip form, so writing and
//! reading an operator is bit-exact.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;

use crate::causality::{CausalGame, CausalityVerdict};
use crate::instruments::{unflatten, Instrument, ProbabilityTable};
use crate::process::{Party, ProcessMatrix, ProcessVector};
use crate::separability::SeparabilityCertificate;
use crate::tensor::{HermitianOperator, LabeledSpace, Operator, SpaceProduct};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FactorJson {
    label: String,
    dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OperatorJson {
    factors: Vec<FactorJson>,
    entries: Vec<[f64; 2]>,
}

/// A single factor or a list of factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SpaceJson {
    One(FactorJson),
    Many(Vec<FactorJson>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PartyJson {
    name: String,
    input: SpaceJson,
    output: SpaceJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProcessJson {
    parties: Vec<PartyJson>,
    w: OperatorJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum PartyRef {
    Name(String),
    Full(PartyJson),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstrumentJson {
    party: PartyRef,
    settings: usize,
    outcomes: usize,
    chois: BTreeMap<String, OperatorJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GameJson {
    settings: Vec<usize>,
    outcomes: Vec<usize>,
    input_dist: Vec<f64>,
    wins: Vec<[Vec<usize>; 2]>,
}

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

fn from_value<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T> {
    T::deserialize(v).map_err(parse_err)
}

/// Parse JSON text.
pub fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(parse_err)
}

fn space_factors(space: &SpaceProduct) -> Vec<FactorJson> {
    space
        .factors()
        .iter()
        .map(|f| FactorJson {
            label: f.label().to_string(),
            dim: f.dim(),
        })
        .collect()
}

fn factors_from_json(factors: &[FactorJson]) -> Result<Vec<LabeledSpace>> {
    factors
        .iter()
        .map(|f| LabeledSpace::new(f.label.clone(), f.dim))
        .collect()
}

fn operator_json(op: &Operator) -> OperatorJson {
    // nalgebra stores column-major; emit row-major
    let m = op.matrix();
    let entries = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| [m[(i, j)].re, m[(i, j)].im]))
        .collect();
    OperatorJson {
        factors: space_factors(op.space()),
        entries,
    }
}

fn operator_from(j: &OperatorJson) -> Result<Operator> {
    let ordered = factors_from_json(&j.factors)?;
    let d: usize = ordered.iter().map(LabeledSpace::dim).product();
    if j.entries.len() != d * d {
        return Err(Error::Parse(format!(
            "operator needs {} entries, got {}",
            d * d,
            j.entries.len()
        )));
    }
    if j.entries.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Parse("non-finite operator entry".into()));
    }
    let m = DMatrix::from_fn(d, d, |i, k| {
        let [re, im] = j.entries[i * d + k];
        C64::new(re, im)
    });
    Operator::from_ordered(&ordered, m)
}

pub fn operator_to_json(op: &Operator) -> Value {
    serde_json::to_value(operator_json(op)).expect("serializable")
}

pub fn operator_from_json(v: &Value) -> Result<Operator> {
    operator_from(&from_value(v)?)
}

pub fn hermitian_from_json(v: &Value) -> Result<HermitianOperator> {
    HermitianOperator::from_operator(operator_from_json(v)?)
}

fn space_json(space: &SpaceProduct) -> SpaceJson {
    let mut f = space_factors(space);
    if f.len() == 1 {
        SpaceJson::One(f.remove(0))
    } else {
        SpaceJson::Many(f)
    }
}

fn space_from(j: &SpaceJson) -> Result<SpaceProduct> {
    match j {
        SpaceJson::One(f) => Ok(LabeledSpace::new(f.label.clone(), f.dim)?.into()),
        SpaceJson::Many(fs) => SpaceProduct::new(factors_from_json(fs)?),
    }
}

fn party_json(p: &Party) -> PartyJson {
    PartyJson {
        name: p.name().to_string(),
        input: space_json(p.input()),
        output: space_json(p.output()),
    }
}

fn party_from(j: &PartyJson) -> Result<Party> {
    Party::new(j.name.clone(), space_from(&j.input)?, space_from(&j.output)?)
}

pub fn process_to_json(p: &ProcessMatrix) -> Value {
    serde_json::to_value(ProcessJson {
        parties: p.parties().iter().map(party_json).collect(),
        w: operator_json(p.w()),
    })
    .expect("serializable")
}

/// `|W><W|` of a process vector in process JSON form.
pub fn process_vector_to_json(v: &ProcessVector) -> Value {
    process_to_json(&v.to_process())
}

/// Read a process; the result is unvalidated.
pub fn process_from_json(v: &Value) -> Result<ProcessMatrix> {
    let j: ProcessJson = from_value(v)?;
    let parties = j.parties.iter().map(party_from).collect::<Result<Vec<_>>>()?;
    ProcessMatrix::new(parties, HermitianOperator::from_operator(operator_from(&j.w)?)?)
}

pub fn instrument_to_json(inst: &Instrument) -> Value {
    let mut chois = BTreeMap::new();
    for x in 0..inst.settings() {
        for a in 0..inst.outcomes() {
            chois.insert(format!("{x},{a}"), operator_json(inst.choi(x, a)));
        }
    }
    serde_json::to_value(InstrumentJson {
        party: PartyRef::Name(inst.party().name().to_string()),
        settings: inst.settings(),
        outcomes: inst.outcomes(),
        chois,
    })
    .expect("serializable")
}

/// Read an instrument. A party given by name is looked up in `parties`.
pub fn instrument_from_json(v: &Value, parties: &[Party]) -> Result<Instrument> {
    let j: InstrumentJson = from_value(v)?;
    let party = match &j.party {
        PartyRef::Name(n) => parties
            .iter()
            .find(|p| p.name() == n)
            .cloned()
            .ok_or_else(|| Error::UnknownParty(n.clone()))?,
        PartyRef::Full(p) => party_from(p)?,
    };
    let mut chois = Vec::with_capacity(j.settings);
    for x in 0..j.settings {
        let mut row = Vec::with_capacity(j.outcomes);
        for a in 0..j.outcomes {
            let op = j
                .chois
                .get(&format!("{x},{a}"))
                .ok_or_else(|| Error::Parse(format!("missing Choi \"{x},{a}\"")))?;
            row.push(HermitianOperator::from_operator(operator_from(op)?)?);
        }
        chois.push(row);
    }
    if j.chois.len() != j.settings * j.outcomes {
        return Err(Error::Parse(format!(
            "expected {} Chois, found {}",
            j.settings * j.outcomes,
            j.chois.len()
        )));
    }
    Instrument::from_chois(&party, chois)
}

/// Read a list of instruments: a JSON array, or an object with an `"instruments"` array.
pub fn instruments_from_json(v: &Value, parties: &[Party]) -> Result<Vec<Instrument>> {
    let list = match v {
        Value::Array(items) => items,
        Value::Object(map) => map
            .get("instruments")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("expected an array of instruments".into()))?,
        _ => return Err(Error::Parse("expected an array of instruments".into())),
    };
    list.iter().map(|i| instrument_from_json(i, parties)).collect()
}

pub fn game_to_json(g: &CausalGame) -> Value {
    serde_json::to_value(GameJson {
        settings: g.settings().to_vec(),
        outcomes: g.outcomes().to_vec(),
        input_dist: g.input_dist().to_vec(),
        wins: g
            .winning_tuples()
            .into_iter()
            .map(|(s, o)| [s.to_vec(), o.to_vec()])
            .collect(),
    })
    .expect("serializable")
}

pub fn game_from_json(v: &Value) -> Result<CausalGame> {
    let j: GameJson = from_value(v)?;
    let pair = |xs: &[usize], what: &str| -> Result<[usize; 2]> {
        match xs {
            [a, b] => Ok([*a, *b]),
            _ => Err(Error::Parse(format!("{what} must list two parties"))),
        }
    };
    let settings = pair(&j.settings, "settings")?;
    let outcomes = pair(&j.outcomes, "outcomes")?;
    let n_o = outcomes[0] * outcomes[1];
    let mut wins = vec![false; settings[0] * settings[1] * n_o];
    for [s, o] in &j.wins {
        let (s, o) = (pair(s, "win settings")?, pair(o, "win outcomes")?);
        if s[0] >= settings[0] || s[1] >= settings[1] || o[0] >= outcomes[0] || o[1] >= outcomes[1] {
            return Err(Error::Parse(format!("win tuple {s:?} {o:?} out of range")));
        }
        wins[(s[0] * settings[1] + s[1]) * n_o + o[0] * outcomes[1] + o[1]] = true;
    }
    CausalGame::new(settings, outcomes, j.input_dist, wins)
}

pub fn verdict_to_json(v: &CausalityVerdict) -> Value {
    let weights: Vec<Value> = v
        .weights
        .iter()
        .map(|w| {
            json!({
                "order": w.strategy.order.label(),
                "first": w.strategy.first,
                "second": w.strategy.second,
                "weight": w.weight,
            })
        })
        .collect();
    json!({
        "causal": v.causal,
        "residual": v.residual,
        "q_A_before_B": v.q_a_before_b,
        "weights": weights,
    })
}

pub fn certificate_to_json(c: &SeparabilityCertificate) -> Value {
    let diagnostics = c.witness_diagnostics.as_ref().map(|d| {
        json!({
            "value": d.value,
            "battery_min": d.battery_min,
            "battery_size": d.battery_size,
            "shift": d.shift,
            "structural": d.structural,
            "sampled": true,
        })
    });
    json!({
        "separable": c.separable,
        "q": c.q,
        "residual": c.residual,
        "iterations": c.iterations,
        "witness": c.witness.as_ref().map(|w| operator_to_json(w)),
        "witness_verified": c.witness_verified,
        "orders": c.orders.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "weights": c.weights,
        "stalled": c.stalled,
        "polished": c.polished,
        "witness_diagnostics": diagnostics,
    })
}

/// CSV with header `x_<party>..., a_<party>..., p`, one row per entry, probabilities in
/// 17 significant digits.
pub fn table_to_csv(t: &ProbabilityTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = t
        .parties()
        .iter()
        .map(|p| format!("x_{p}"))
        .chain(t.parties().iter().map(|p| format!("a_{p}")))
        .chain(std::iter::once("p".to_string()))
        .collect();
    w.write_record(&header).map_err(parse_err)?;
    let radices = [t.settings(), t.outcomes()].concat();
    for (flat, v) in t.values().iter().enumerate() {
        let mut record: Vec<String> = unflatten(flat, &radices).iter().map(usize::to_string).collect();
        record.push(format!("{v:.16e}"));
        w.write_record(&record).map_err(parse_err)?;
    }
    String::from_utf8(w.into_inner().map_err(parse_err)?).map_err(parse_err)
}

pub fn table_from_csv(text: &str) -> Result<ProbabilityTable> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(parse_err)?.iter().map(str::to_string).collect();
    if header.len() < 3 || header.len().is_multiple_of(2) || header.last().map(String::as_str) != Some("p") {
        return Err(Error::Parse("header must be x_<party>..., a_<party>..., p".into()));
    }
    let n = (header.len() - 1) / 2;
    let mut parties = Vec::with_capacity(n);
    for k in 0..n {
        let x = header[k].strip_prefix("x_");
        let a = header[n + k].strip_prefix("a_");
        match (x, a) {
            (Some(x), Some(a)) if x == a => parties.push(x.to_string()),
            _ => {
                return Err(Error::Parse(format!(
                    "bad header columns `{}`/`{}`",
                    header[k],
                    header[n + k]
                )))
            }
        }
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(parse_err)?;
        let digits = (0..2 * n)
            .map(|k| rec[k].trim().parse::<usize>().map_err(parse_err))
            .collect::<Result<Vec<_>>>()?;
        let p: f64 = rec[2 * n].trim().parse().map_err(parse_err)?;
        rows.push((digits, p));
    }
    let mut radices = vec![0usize; 2 * n];
    for (digits, _) in &rows {
        for (r, &d) in radices.iter_mut().zip(digits) {
            *r = (*r).max(d + 1);
        }
    }
    let total: usize = radices.iter().product();
    if rows.len() != total {
        return Err(Error::Parse(format!("expected {total} rows, found {}", rows.len())));
    }
    let mut values = vec![f64::NAN; total];
    for (digits, p) in rows {
        let idx = digits.iter().zip(&radices).fold(0, |acc, (&d, &r)| acc * r + d);
        values[idx] = p;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse("duplicate rows".into()));
    }
    ProbabilityTable::new(parties, radices[..n].to_vec(), radices[n..].to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::StandardInstrument;
    use crate::process::{make_quantum_switch, switch_parties, validate_process};
    use proptest::prelude::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    proptest! {
        #[test]
        fn operator_round_trip_is_bit_exact(
            entries in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 36),
            scale in prop_oneof![Just(1.0), Just(1e-17), Just(3.7e12)],
        ) {
            let space = SpaceProduct::new([
                LabeledSpace::new("b", 2).unwrap(),
                LabeledSpace::new("a", 3).unwrap(),
            ]).unwrap();
            let m = DMatrix::from_fn(6, 6, |i, j| {
                let (re, im) = entries[i * 6 + j];
                C64::new(re * scale, im * scale)
            });
            let op = Operator::new(space, m).unwrap();
            let text = serde_json::to_string(&operator_to_json(&op)).unwrap();
            let back = operator_from_json(&parse_json(&text).unwrap()).unwrap();
            prop_assert_eq!(back, op);
        }
    }

    #[test]
    fn unsorted_factors_are_canonicalized() {
        // |0><0| on b ⊗ |1><1| on a, listed as (b, a)
        let mut entries = vec![[0.0, 0.0]; 16];
        entries[5] = [1.0, 0.0];
        let v = json!({"factors": [{"label": "b", "dim": 2}, {"label": "a", "dim": 2}], "entries": entries});
        let op = operator_from_json(&v).unwrap();
        // canonical (a, b) index of a=1, b=0 is 2
        assert_eq!(op.matrix()[(2, 2)], c(1.0));
    }

    #[test]
    fn process_round_trip_with_multi_factor_party() {
        let h = c(std::f64::consts::FRAC_1_SQRT_2);
        let psi = nalgebra::DVector::from_vec(vec![c(1.0), c(0.0)]);
        let p = make_quantum_switch(&psi, (h, h)).unwrap().to_process();
        let text = serde_json::to_string(&process_to_json(&p)).unwrap();
        let back = process_from_json(&parse_json(&text).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(validate_process(&back).unwrap().is_valid());
    }

    #[test]
    fn malformed_inputs_are_parse_errors() {
        assert!(matches!(parse_json("{"), Err(Error::Parse(_))));
        let v = json!({"factors": [{"label": "a", "dim": 2}], "entries": [[1.0, 0.0]]});
        assert!(matches!(operator_from_json(&v), Err(Error::Parse(_))));
    }

    #[test]
    fn instrument_round_trip() {
        let parties = switch_parties(2).unwrap();
        let eye = DMatrix::identity(4, 4).scale(0.5);
        let inst = StandardInstrument::Povm {
            povms: vec![vec![eye.clone(), eye]],
        }
        .build(&parties[2])
        .unwrap();
        let v = instrument_to_json(&inst);
        assert_eq!(v["party"], json!("F"));
        let back = instrument_from_json(&v, &parties).unwrap();
        assert_eq!(back.choi(0, 1), inst.choi(0, 1));
        assert!(matches!(
            instrument_from_json(&v, &parties[..2]),
            Err(Error::UnknownParty(_))
        ));
    }

    #[test]
    fn game_round_trip() {
        for g in [CausalGame::gyni(), CausalGame::lgyni(), CausalGame::ocb()] {
            let back = game_from_json(&game_to_json(&g)).unwrap();
            assert_eq!(back, g);
        }
    }

    #[test]
    fn table_csv_round_trip() {
        let values: Vec<f64> = (0..16)
            .map(|k| if k % 4 == 0 { 1.0 / 3.0 } else { 2.0 / 9.0 })
            .collect();
        let values: Vec<f64> = values
            .chunks(4)
            .flat_map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(move |v| v / s).collect::<Vec<_>>()
            })
            .collect();
        let t = ProbabilityTable::new(vec!["A".into(), "B".into()], vec![2, 2], vec![2, 2], values).unwrap();
        let text = table_to_csv(&t).unwrap();
        assert!(text.starts_with("x_A,x_B,a_A,a_B,p\n"));
        let back = table_from_csv(&text).unwrap();
        assert_eq!(back.settings(), t.settings());
        assert!(back.max_abs_diff(&t).unwrap() == 0.0);
    }
}
