use std::path::{Path, PathBuf};

use causalis::causality::{causal_bound, enumerate_strategies, is_causal, score_inequality, CausalGame};
use causalis::instruments::{born_table, switch_discrimination_demo, ProbabilityTable};
use causalis::io;
use causalis::process::{closed_form_report, make_quantum_switch, validity_report, ProcessMatrix, Validity};
use causalis::separability::{check_separability, OrderCone, SeparabilityConfig};
use causalis::C64;
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::{Command, Common, Failure, Outcome};

pub fn dispatch(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::Validate { common } => validate(common),
        Command::Switch {
            common,
            alpha,
            beta,
            target,
        } => switch(common, alpha, beta, target),
        Command::Born { common } => born(common),
        Command::Sep {
            common,
            orders,
            samples,
        } => sep(common, orders, *samples),
        Command::Ineq { common, game, keep } => ineq(common, game.as_deref(), keep),
        Command::Demo { common, u, v } => demo(u, v).map(|result| Outcome {
            positive: true,
            report_to_out: common.out.is_some(),
            result,
        }),
    }
}

pub fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("cannot read {}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    io::parse_json(&read(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn inputs<'a, const N: usize>(common: &'a Common, names: [&str; N]) -> Result<&'a [PathBuf; N], Failure> {
    common
        .inputs
        .as_slice()
        .try_into()
        .map_err(|_| Failure(format!("expected {N} --in argument(s): {}", names.join(", "))))
}

fn validity_json(p: &ProcessMatrix, tol: Option<f64>) -> Result<(Value, bool), Failure> {
    let report = validity_report(p)?;
    let violation = match tol {
        Some(t) => report.violation_with(t, t),
        None => report.violation(),
    };
    let closed_form = if p.parties().len() == 2 {
        let c = closed_form_report(p)?;
        json!({
            "holds": c.holds(),
            "min_eigenvalue": c.min_eigenvalue,
            "trace_residual": c.trace_residual,
            "conditions": c.conditions,
        })
    } else {
        Value::Null
    };
    let value = json!({
        "valid": violation.is_none(),
        "reason": violation.as_ref().map(|v| v.kind()),
        "detail": violation.as_ref().map(ToString::to_string),
        "min_eigenvalue": report.min_eigenvalue,
        "trace": report.trace,
        "expected_trace": report.expected_trace,
        "normalization_residual": report.normalization_residual,
        "tuples_checked": report.tuples_checked,
        "closed_form": closed_form,
    });
    Ok((value, violation.is_none()))
}

/// Load and validate a process; an invalid process is an input error here.
fn load_valid_process(path: &Path) -> Result<ProcessMatrix, Failure> {
    let p = io::process_from_json(&read_json(path)?)?;
    let p = causalis::process::validate_process(&p)?;
    match p.validity() {
        Validity::Valid => Ok(p),
        Validity::Invalid(reason) => Err(Failure(format!("{}: invalid process ({reason})", path.display()))),
        Validity::Unchecked => unreachable!("validate_process always decides"),
    }
}

fn validate(common: &Common) -> Result<Outcome, Failure> {
    let [path] = inputs(common, ["process.json"])?;
    let p = io::process_from_json(&read_json(path)?)?;
    let (result, valid) = validity_json(&p, common.tol)?;
    Ok(Outcome {
        result,
        positive: valid,
        report_to_out: true,
    })
}

fn parse_complex(s: &str) -> Result<C64, Failure> {
    s.trim()
        .parse::<C64>()
        .map_err(|_| Failure(format!("cannot parse complex number `{s}`")))
}

fn switch(common: &Common, alpha: &str, beta: &str, target: &str) -> Result<Outcome, Failure> {
    let amplitudes = (parse_complex(alpha)?, parse_complex(beta)?);
    let psi: Vec<C64> = target.split(',').map(parse_complex).collect::<Result<_, _>>()?;
    let qs = make_quantum_switch(&DVector::from_vec(psi.clone()), amplitudes)?;
    let p = qs.to_process();
    let (validity, valid) = validity_json(&p, common.tol)?;
    if let Some(out) = &common.out {
        write(
            out,
            &serde_json::to_string_pretty(&io::process_to_json(&p)).expect("serializable"),
        )?;
    }
    let pair = |z: C64| [z.re, z.im];
    Ok(Outcome {
        result: json!({
            "amplitudes": [pair(amplitudes.0), pair(amplitudes.1)],
            "target": psi.iter().map(|&z| pair(z)).collect::<Vec<_>>(),
            "validity": validity,
            "process": common.out,
        }),
        positive: valid,
        report_to_out: false,
    })
}

fn table_json(t: &ProbabilityTable) -> Value {
    let worst = (0..t.setting_count())
        .map(|s| (t.conditional(s).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    json!({
        "parties": t.parties(),
        "settings": t.settings(),
        "outcomes": t.outcomes(),
        "values": t.values(),
        "max_normalization_error": worst,
    })
}

fn born(common: &Common) -> Result<Outcome, Failure> {
    let [process, instruments] = inputs(common, ["process.json", "instruments.json"])?;
    let p = load_valid_process(process)?;
    let insts = io::instruments_from_json(&read_json(instruments)?, p.parties())?;
    let table = born_table(&p, &insts)?;
    if let Some(out) = &common.out {
        write(out, &io::table_to_csv(&table)?)?;
    }
    Ok(Outcome {
        result: json!({ "table": table_json(&table), "csv": common.out }),
        positive: true,
        report_to_out: false,
    })
}

fn sep(common: &Common, orders: &[String], samples: Option<usize>) -> Result<Outcome, Failure> {
    let seed = common
        .seed
        .ok_or_else(|| Failure("sep samples a witness battery and needs --seed".into()))?;
    let [path] = inputs(common, ["process.json"])?;
    let p = load_valid_process(path)?;
    let mut config = SeparabilityConfig {
        seed,
        ..SeparabilityConfig::default()
    };
    if let Some(tol) = common.tol {
        config.tol = tol;
    }
    if let Some(n) = common.max_iters {
        config.max_iters = n;
    }
    if let Some(n) = samples {
        config.battery_per_order = n;
        config.battery_mixtures = n;
    }
    let cones: Vec<OrderCone> = orders
        .iter()
        .map(|o| OrderCone::new(&o.split('<').map(str::trim).collect::<Vec<_>>()))
        .collect();
    let cert = check_separability(&p, (!cones.is_empty()).then_some(cones.as_slice()), &config)?;
    let cert_json = io::certificate_to_json(&cert);
    if let Some(out) = &common.out {
        write(out, &serde_json::to_string_pretty(&cert_json).expect("serializable"))?;
    }
    Ok(Outcome {
        result: cert_json,
        positive: cert.separable,
        report_to_out: false,
    })
}

fn load_game(spec: &str) -> Result<CausalGame, Failure> {
    Ok(match spec.to_ascii_lowercase().as_str() {
        "gyni" => CausalGame::gyni(),
        "lgyni" => CausalGame::lgyni(),
        "ocb" => CausalGame::ocb(),
        _ => io::game_from_json(&read_json(Path::new(spec))?)?,
    })
}

fn ineq(common: &Common, game: Option<&str>, keep: &[String]) -> Result<Outcome, Failure> {
    let game = game.map(load_game).transpose()?;
    let table = match common.inputs.as_slice() {
        [] => None,
        [csv] => Some(io::table_from_csv(&read(csv)?)?),
        [process, instruments] => {
            let p = load_valid_process(process)?;
            let insts = io::instruments_from_json(&read_json(instruments)?, p.parties())?;
            let t = born_table(&p, &insts)?;
            Some(if keep.is_empty() {
                t
            } else {
                t.marginal(&keep.iter().map(String::as_str).collect::<Vec<_>>())?
            })
        }
        _ => {
            return Err(Failure(
                "ineq takes a table CSV, or a process and its instruments".into(),
            ))
        }
    };
    let Some(table) = table else {
        let game = game.ok_or_else(|| Failure("ineq needs --game, an input table, or both".into()))?;
        let tables = enumerate_strategies(&game)?.len();
        return Ok(Outcome {
            result: json!({
                "game": io::game_to_json(&game),
                "bound": causal_bound(&game)?,
                "deterministic_tables": tables,
            }),
            positive: true,
            report_to_out: true,
        });
    };
    let verdict = is_causal(&table)?;
    let score = game.as_ref().map(|g| score_inequality(&table, g)).transpose()?;
    let violated = score.as_ref().is_some_and(|s| s.violated);
    Ok(Outcome {
        result: json!({
            "game": game.as_ref().map(io::game_to_json),
            "bound": score.as_ref().map(|s| s.bound),
            "value": score.as_ref().map(|s| s.value),
            "violated": score.as_ref().map(|s| s.violated),
            "causality": io::verdict_to_json(&verdict),
            "table": table_json(&table),
        }),
        positive: verdict.causal && !violated,
        report_to_out: true,
    })
}

fn gate(name: &str) -> Result<DMatrix<C64>, Failure> {
    let c = |re: f64, im: f64| C64::new(re, im);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let entries = match name.to_ascii_uppercase().as_str() {
        "I" => [c(1., 0.), c(0., 0.), c(0., 0.), c(1., 0.)],
        "X" => [c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)],
        "Y" => [c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)],
        "Z" => [c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)],
        "H" => [c(h, 0.), c(h, 0.), c(h, 0.), c(-h, 0.)],
        "S" => [c(1., 0.), c(0., 0.), c(0., 0.), c(0., 1.)],
        "T" => [c(1., 0.), c(0., 0.), c(0., 0.), c(h, h)],
        _ => {
            return Err(Failure(format!(
                "unknown gate `{name}`; expected one of I, X, Y, Z, H, S, T"
            )))
        }
    };
    Ok(DMatrix::from_row_slice(2, 2, &entries))
}

fn demo(u: &str, v: &str) -> Result<Value, Failure> {
    let r = switch_discrimination_demo(&gate(u)?, &gate(v)?)?;
    Ok(json!({
        "u": u,
        "v": v,
        "target": "|0>",
        "p_plus": r.p_plus,
        "p_minus": r.p_minus,
    }))
}
