use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mmpid::agreement::{
    krippendorff_alpha, mean_confidence, ratings_from_counterfactual, ratings_from_decomposition,
    ratings_from_partial, Alpha, AlphaReport, CounterfactualMeasure, Interaction, Metric,
    RatingsMatrix, Undefined,
};
use mmpid::dataset::{
    parse_counterfactual, parse_decomposition, parse_partial, summarize_decomposition,
    triples_from_counterfactual, triples_from_partial, write_counterfactual, write_partial,
    Condition, CounterfactualRecord, DecompositionSummary, InputFormat, Pairing, PartialRecord,
};
use mmpid::label_space::{LabelKind, LabelSpaceConfig};
use mmpid::pid::{brute_force_qstar, constraints_from_joint, objective, pid_from_solution};
use mmpid::synth::{
    canonical_joint, counterfactual_records, partial_records, random_joint, random_sparse_joint,
    sample, Gate, GateSpec,
};
use mmpid::{decompose, Error, Joint3, LabelSpace, PidResult, SolverConfig};

use crate::output::{emit, emit_json, read_input, CliError, ToolInfo};
use crate::{
    AgreementArgs, AnySchema, ConvertArgs, LabelSchema, OracleArgs, PidArgs, SynthArgs, SynthFormat,
};

/// Component tolerance of the oracle comparison (bits).
const ORACLE_COMPONENT_TOL: f64 = 2e-3;
/// Objective tolerance of the oracle comparison (bits).
const ORACLE_OBJECTIVE_TOL: f64 = 1e-3;

fn label_space(arg: &str) -> Result<(LabelSpaceConfig, LabelSpace), CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read_input(Path::new(arg))?
    };
    let config = LabelSpaceConfig::from_json(&text)
        .map_err(|e| CliError::input("invalid-label-space", e.to_string()))?;
    let space = LabelSpace::build(&config)?;
    // echo the normalized form so a re-run sees the same space
    Ok((space.config(), space))
}

fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn read_all<T>(
    paths: &[PathBuf],
    parse: fn(&[u8], InputFormat) -> mmpid::Result<Vec<T>>,
) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for path in paths {
        let text = read_input(path)?;
        let records = parse(text.as_bytes(), InputFormat::from_path(path)).map_err(|e| {
            let mut err = CliError::from(e);
            err.message = format!("{}: {}", path.display(), err.message);
            err
        })?;
        if records.is_empty() {
            log::warn!("{} holds no records", path.display());
        }
        out.extend(records);
    }
    Ok(out)
}

fn partial(paths: &[PathBuf]) -> Result<Vec<PartialRecord>, CliError> {
    read_all(paths, |b, f| parse_partial(b, f))
}

fn counterfactual(paths: &[PathBuf]) -> Result<Vec<CounterfactualRecord>, CliError> {
    read_all(paths, |b, f| parse_counterfactual(b, f))
}

/// Alpha for one measure; too few items is reported as undefined rather
/// than failing the whole run.
fn alpha(matrix: mmpid::Result<RatingsMatrix>) -> Result<AlphaReport, CliError> {
    match matrix {
        Ok(m) => Ok(krippendorff_alpha(&m)),
        Err(Error::Empty(what)) => Ok(AlphaReport {
            alpha: Alpha::Undefined(Undefined::NoPairableUnits),
            n_units: 0,
            n_pairable: 0,
            reason: Some(format!("{what}: fewer than two items")),
        }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Default, Serialize)]
struct Measures {
    agreement: BTreeMap<&'static str, AlphaReport>,
    /// Mean confidence (0-5), `null` when the measure has no records.
    confidence: BTreeMap<&'static str, Option<f64>>,
}

fn check_metric(space: &LabelSpace, metric: Metric) -> Result<(), CliError> {
    if space.kind() == LabelKind::QaBinary && metric != Metric::Nominal {
        return Err(CliError::input(
            "invalid-config",
            "QA answers are free text and only support the nominal metric",
        ));
    }
    Ok(())
}

fn partial_measures(
    records: &[PartialRecord],
    space: &LabelSpace,
    metric: Metric,
) -> Result<Measures, CliError> {
    let mut m = Measures::default();
    for c in Condition::ALL {
        m.agreement.insert(
            c.as_str(),
            alpha(ratings_from_partial(records, space, c, metric))?,
        );
        m.confidence.insert(
            c.as_str(),
            mean_confidence(records, |r| (r.condition == c).then_some(r.confidence)).ok(),
        );
    }
    Ok(m)
}

fn counterfactual_measures(
    records: &[CounterfactualRecord],
    space: &LabelSpace,
    metric: Metric,
) -> Result<Measures, CliError> {
    let mut m = Measures::default();
    for c in CounterfactualMeasure::ALL {
        m.agreement.insert(
            c.as_str(),
            alpha(ratings_from_counterfactual(records, space, c, metric))?,
        );
        m.confidence.insert(
            c.as_str(),
            mean_confidence(records, |r| c.confidence(r)).ok(),
        );
    }
    Ok(m)
}

#[derive(Debug, Serialize)]
struct ConvertConfig {
    schema: &'static str,
    label_space: LabelSpaceConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairing: Option<Pairing>,
    smoothing: f64,
    metric: Metric,
    solver: SolverConfig,
}

#[derive(Debug, Serialize)]
struct ConvertReport {
    tool: ToolInfo,
    command: &'static str,
    config: ConvertConfig,
    inputs: Vec<String>,
    n_records: usize,
    n_triples: usize,
    total_weight: f64,
    pid: PidResult,
    #[serde(flatten)]
    measures: Measures,
}

/// 0 when the solve converged and passed the consistency check, else 1.
fn solve_status(pid: &PidResult) -> u8 {
    let consistent = pid.consistency.as_ref().is_none_or(|c| c.passed);
    if pid.converged && consistent {
        0
    } else {
        log::error!("solver did not reach the requested tolerance");
        1
    }
}

pub fn convert(a: &ConvertArgs) -> Result<u8, CliError> {
    let (space_config, space) = label_space(&a.label_space)?;
    let cfg = a.solver.config()?;
    if !(a.smoothing >= 0.0) || !a.smoothing.is_finite() {
        return Err(CliError::input(
            "invalid-config",
            "smoothing must be nonnegative",
        ));
    }
    let metric = Metric::from(a.metric);
    check_metric(&space, metric)?;
    let (schema, pairing, n_records, data, measures) = match a.schema {
        LabelSchema::Partial => {
            let records = partial(&a.inputs)?;
            let pairing = Pairing::from(a.pairing);
            let data = triples_from_partial(&records, &space, pairing)?;
            let m = partial_measures(&records, &space, metric)?;
            ("partial", Some(pairing), records.len(), data, m)
        }
        LabelSchema::Counterfactual => {
            let records = counterfactual(&a.inputs)?;
            let data = triples_from_counterfactual(&records, &space)?;
            let m = counterfactual_measures(&records, &space, metric)?;
            ("counterfactual", None, records.len(), data, m)
        }
    };
    let pid = mmpid::convert(&data, a.smoothing, &cfg)?;
    let status = solve_status(&pid);
    let report = ConvertReport {
        tool: ToolInfo::current(),
        command: "convert",
        config: ConvertConfig {
            schema,
            label_space: space_config,
            pairing,
            smoothing: a.smoothing,
            metric,
            solver: cfg,
        },
        inputs: display(&a.inputs),
        n_records,
        n_triples: data.samples().len(),
        total_weight: data.total_weight(),
        pid,
        measures,
    };
    emit_json(a.out.as_ref(), &report)?;
    Ok(status)
}

#[derive(Debug, Serialize)]
struct AgreementConfig {
    schema: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label_space: Option<LabelSpaceConfig>,
    metric: Metric,
}

#[derive(Debug, Serialize)]
struct AgreementReport {
    tool: ToolInfo,
    command: &'static str,
    config: AgreementConfig,
    inputs: Vec<String>,
    n_records: usize,
    #[serde(flatten)]
    measures: Measures,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratings: Option<DecompositionSummary>,
}

pub fn agreement(a: &AgreementArgs) -> Result<u8, CliError> {
    let space = match (a.schema, &a.label_space) {
        (AnySchema::Decomposition, _) => None,
        (_, Some(text)) => Some(label_space(text)?),
        (_, None) => {
            return Err(CliError::input(
                "invalid-config",
                "--label-space is required for label files",
            ))
        }
    };
    let metric = a.metric.map(Metric::from).unwrap_or(match a.schema {
        AnySchema::Decomposition => Metric::Interval,
        _ => Metric::Nominal,
    });
    if let Some((_, s)) = &space {
        check_metric(s, metric)?;
    }

    let (schema, n_records, measures, ratings) = match (a.schema, &space) {
        (AnySchema::Partial, Some((_, s))) => {
            let records = partial(&a.inputs)?;
            let m = partial_measures(&records, s, metric)?;
            ("partial", records.len(), m, None)
        }
        (AnySchema::Counterfactual, Some((_, s))) => {
            let records = counterfactual(&a.inputs)?;
            let m = counterfactual_measures(&records, s, metric)?;
            ("counterfactual", records.len(), m, None)
        }
        _ => {
            let records = read_all(&a.inputs, |b, f| parse_decomposition(b, f))?;
            let mut m = Measures::default();
            for i in Interaction::ALL {
                m.agreement.insert(
                    i.as_str(),
                    alpha(ratings_from_decomposition(&records, i, metric))?,
                );
                m.confidence.insert(
                    i.as_str(),
                    mean_confidence(&records, |r| Some(i.confidence(r))).ok(),
                );
            }
            let summary = summarize_decomposition(&records)?;
            ("decomposition", records.len(), m, Some(summary))
        }
    };
    let report = AgreementReport {
        tool: ToolInfo::current(),
        command: "agreement",
        config: AgreementConfig {
            schema,
            label_space: space.map(|(c, _)| c),
            metric,
        },
        inputs: display(&a.inputs),
        n_records,
        measures,
        ratings,
    };
    emit_json(a.out.as_ref(), &report)?;
    Ok(0)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    size: usize,
    mass: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct PidConfig {
    solver: SolverConfig,
}

#[derive(Debug, Serialize)]
struct PidReport {
    tool: ToolInfo,
    command: &'static str,
    config: PidConfig,
    input: String,
    pid: PidResult,
}

pub fn pid(a: &PidArgs) -> Result<u8, CliError> {
    let cfg = a.solver.config()?;
    let text = read_input(&a.input)?;
    let file: JointFile = serde_json::from_str(&text).map_err(|e| {
        CliError::input(
            "invalid-distribution",
            format!("{}: {e}", a.input.display()),
        )
    })?;
    let p = Joint3::new(file.size, file.mass)?;
    let pid = decompose(&p, &cfg)?;
    let status = solve_status(&pid);
    let report = PidReport {
        tool: ToolInfo::current(),
        command: "pid",
        config: PidConfig { solver: cfg },
        input: a.input.display().to_string(),
        pid,
    };
    emit_json(a.out.as_ref(), &report)?;
    Ok(status)
}

#[derive(Debug, Serialize)]
struct OracleConfig {
    trials: u64,
    sizes: Vec<usize>,
    seed: u64,
    resolution: usize,
    solver: SolverConfig,
}

#[derive(Debug, Serialize)]
struct Tolerances {
    component: f64,
    objective: f64,
}

#[derive(Debug, Serialize)]
struct TrialFailure {
    trial: u64,
    size: usize,
    component_discrepancy: f64,
    objective_discrepancy: f64,
    joint: Joint3,
}

#[derive(Debug, Serialize)]
struct SizeSummary {
    size: usize,
    trials: u64,
    max_component_discrepancy: f64,
    max_objective_discrepancy: f64,
    failures: usize,
}

#[derive(Debug, Serialize)]
struct OracleReport {
    tool: ToolInfo,
    command: &'static str,
    config: OracleConfig,
    tolerances: Tolerances,
    max_component_discrepancy: f64,
    max_objective_discrepancy: f64,
    by_size: Vec<SizeSummary>,
    failures: Vec<TrialFailure>,
    passed: bool,
}

pub fn oracle_check(a: &OracleArgs) -> Result<u8, CliError> {
    let cfg = a.solver.config()?;
    if a.sizes.is_empty() || a.sizes.iter().any(|&n| !(2..=3).contains(&n)) {
        return Err(CliError::input("usage", "--sizes takes values 2 or 3"));
    }
    if a.resolution < 1 {
        return Err(CliError::input("usage", "--resolution must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut by_size: Vec<SizeSummary> = a
        .sizes
        .iter()
        .map(|&size| SizeSummary {
            size,
            trials: 0,
            max_component_discrepancy: 0.0,
            max_objective_discrepancy: 0.0,
            failures: 0,
        })
        .collect();
    let mut failures = Vec::new();
    for trial in 0..a.trials {
        let slot = (trial % a.sizes.len() as u64) as usize;
        let n = a.sizes[slot];
        // size 3 keeps the grid tractable by capping the free parameters
        let p = if n == 2 {
            random_joint(2, &mut rng)
        } else {
            random_sparse_joint(3, 2, &mut rng)
        };
        let solved = decompose(&p, &cfg)?;
        let q = brute_force_qstar(&constraints_from_joint(&p), a.resolution)?;
        let grid = pid_from_solution(&p, &q)?;
        let dc = solved
            .components()
            .iter()
            .zip(grid.components())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let dobj = (objective(&solved.q_star) - objective(&q)).abs();

        let s = &mut by_size[slot];
        s.trials += 1;
        s.max_component_discrepancy = s.max_component_discrepancy.max(dc);
        s.max_objective_discrepancy = s.max_objective_discrepancy.max(dobj);
        if dc > ORACLE_COMPONENT_TOL || dobj > ORACLE_OBJECTIVE_TOL || !solved.converged {
            s.failures += 1;
            failures.push(TrialFailure {
                trial,
                size: n,
                component_discrepancy: dc,
                objective_discrepancy: dobj,
                joint: p,
            });
        }
    }
    let passed = failures.is_empty();
    let report = OracleReport {
        tool: ToolInfo::current(),
        command: "oracle-check",
        config: OracleConfig {
            trials: a.trials,
            sizes: a.sizes.clone(),
            seed: a.seed,
            resolution: a.resolution,
            solver: cfg,
        },
        tolerances: Tolerances {
            component: ORACLE_COMPONENT_TOL,
            objective: ORACLE_OBJECTIVE_TOL,
        },
        max_component_discrepancy: by_size
            .iter()
            .fold(0.0, |m, s| m.max(s.max_component_discrepancy)),
        max_objective_discrepancy: by_size
            .iter()
            .fold(0.0, |m, s| m.max(s.max_objective_discrepancy)),
        by_size,
        failures,
        passed,
    };
    emit_json(a.out.as_ref(), &report)?;
    Ok(if passed { 0 } else { 1 })
}

pub fn synth(a: &SynthArgs) -> Result<u8, CliError> {
    let gate: Gate = a.gate.parse()?;
    let spec = GateSpec::new(gate, a.size)?;
    let data = sample(&canonical_joint(&spec), a.count, a.seed)?;
    let mut buf = Vec::new();
    match a.format {
        SynthFormat::Triples => data.write_csv(&mut buf)?,
        SynthFormat::Partial => write_partial(&partial_records(&data), &mut buf, InputFormat::Csv)?,
        SynthFormat::Counterfactual => {
            write_counterfactual(&counterfactual_records(&data), &mut buf, InputFormat::Csv)?
        }
    }
    emit(a.out.as_ref(), &buf)?;
    Ok(0)
}
