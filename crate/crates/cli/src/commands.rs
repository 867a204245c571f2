use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use condnull::io::{
    read_feature_table, read_levels, write_benefit, write_comparison, write_decisions, write_levels,
    write_study_summary, write_sweep, write_trials, ComparisonRow,
};
use condnull::screening::sweep_acceleration;
use condnull::{
    adjust_vector, benefit_curve, fit_null, fit_null_detailed, levels_from_table, optimize_decisions,
    run_study, ConfidenceVector, DenullMode, ErrorKind, LogBase, LossParams, NullMode, NullModel, StudyConfig,
};

use crate::{AdjustArgs, BenefitArgs, LevelsArgs, NullfitArgs, ScreenArgs, SimulateArgs};

#[derive(Debug)]
pub enum CliError {
    Core(condnull::Error),
    Open { path: PathBuf, source: std::io::Error },
    Io(std::io::Error),
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.kind() == ErrorKind::Numeric => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Open { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<condnull::Error> for CliError {
    fn from(e: condnull::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// What a successful run produced; the first output names the manifest.
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub results: serde_json::Value,
    /// Seed actually used, when it differs from the global flag.
    pub seed: Option<u64>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Open { path: path.to_owned(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Open { path: path.to_owned(), source })
}

fn read_null(path: &Path) -> Result<NullModel> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Open { path: path.to_owned(), source })?;
    Ok(NullModel::from_json(&text)?)
}

fn load_levels(path: &Path) -> Result<ConfidenceVector> {
    Ok(read_levels(open(path)?)?)
}

fn null_summary(m: &NullModel) -> serde_json::Value {
    json!({ "mu0": m.mu0, "sigma0": m.sigma0, "p0": m.p0, "provenance": m.provenance })
}

pub fn levels(args: &LevelsArgs) -> Result<Outcome> {
    let table = read_feature_table(open(&args.input)?)?;
    let v = levels_from_table(&table)?;
    write_levels(create(&args.output)?, &v)?;
    Ok(Outcome {
        inputs: vec![args.input.clone()],
        outputs: vec![args.output.clone()],
        summary: vec![format!("features={} included={} excluded={}", v.len(), v.n_included(), v.n_excluded())],
        results: json!({ "n_features": v.len(), "n_included": v.n_included(), "n_excluded": v.n_excluded() }),
        seed: None,
    })
}

pub fn nullfit(args: &NullfitArgs) -> Result<Outcome> {
    let v = load_levels(&args.input)?;
    let (model, ll) = if args.assumed {
        (NullModel::assumed(), None)
    } else {
        let fit = fit_null_detailed(&v.included_z(), args.center_fraction)?;
        (fit.model, Some(fit.log_likelihood))
    };
    let mut w = create(&args.output)?;
    w.write_all(model.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    let mut results = null_summary(&model);
    results["log_likelihood"] = json!(ll);
    Ok(Outcome {
        inputs: vec![args.input.clone()],
        outputs: vec![args.output.clone()],
        summary: vec![format!("mu0={:?} sigma0={:?} p0={:?}", model.mu0, model.sigma0, model.p0)],
        results,
        seed: None,
    })
}

pub fn adjust(args: &AdjustArgs) -> Result<Outcome> {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(CliError::Usage(format!("--threshold must lie in (0, 1), got {}", args.threshold)));
    }
    let v = load_levels(&args.input)?;
    let null = read_null(&args.null)?;
    let ratios: HashMap<String, f64> = match &args.table {
        Some(path) => {
            let base = if args.log_base == "2" { LogBase::Two } else { LogBase::E };
            let table = read_feature_table(open(path)?)?.with_log_base(base);
            table.ids().iter().cloned().zip(table.estimated_ratios()).filter_map(|(id, r)| Some((id, r?))).collect()
        }
        None => HashMap::new(),
    };
    let adjusted = adjust_vector(&v, &null);

    let t = args.threshold;
    let (mut lost, mut gained) = (0usize, 0usize);
    let mut rows = Vec::with_capacity(v.len());
    for (before, after) in v.features().iter().zip(adjusted.features()) {
        if before.is_included() {
            lost += usize::from(before.level > t && after.level <= t);
            gained += usize::from(after.level > t && before.level <= t);
        }
        rows.push(ComparisonRow {
            feature_id: before.id.clone(),
            estimated_ratio: ratios.get(&before.id).copied(),
            level_assumed: before.level,
            level_estimated: after.level,
        });
    }

    write_levels(create(&args.output)?, &adjusted)?;
    let mut inputs = vec![args.input.clone(), args.null.clone()];
    inputs.extend(args.table.clone());
    let mut outputs = vec![args.output.clone()];
    if let Some(path) = &args.figure_table {
        write_comparison(create(path)?, &rows)?;
        outputs.push(path.clone());
    }
    Ok(Outcome {
        inputs,
        outputs,
        summary: vec![
            format!("assumed>{t} but estimated<={t}: {lost}"),
            format!("estimated>{t} but assumed<={t}: {gained}"),
        ],
        results: json!({ "null": null_summary(&null), "threshold": t, "lost": lost, "gained": gained }),
        seed: None,
    })
}

pub fn screen(args: &ScreenArgs, seed: u64) -> Result<Outcome> {
    let v = load_levels(&args.input)?;
    let null = args.null.as_deref().map(read_null).transpose()?;
    let params = LossParams { a: args.a, c: args.c, n_mc: args.n_mc, seed };
    params.validate()?;
    let mut inputs = vec![args.input.clone()];
    inputs.extend(args.null.clone());

    if let Some(a_values) = &args.sweep {
        let estimated = match null {
            Some(m) => m,
            None => fit_null(&v.included_z(), args.center_fraction)?,
        };
        let adjusted = adjust_vector(&v, &estimated);
        let mut rows = Vec::new();
        for (mode, levels) in [(NullMode::Assumed, &v), (NullMode::Estimated, &adjusted)] {
            rows.extend(sweep_acceleration(levels, a_values, &params)?.into_iter().map(|p| (mode, p)));
        }
        write_sweep(create(&args.output)?, &rows)?;
        let summary = rows
            .iter()
            .map(|(m, p)| format!("{} 1+a={:?} n_decisions={}", m.as_str(), 1.0 + p.a, p.n_decisions))
            .collect();
        let results: Vec<_> = rows
            .iter()
            .map(|(m, p)| json!({ "null": m.as_str(), "a": p.a, "n_decisions": p.n_decisions, "expected_loss": p.expected_loss }))
            .collect();
        return Ok(Outcome {
            inputs,
            outputs: vec![args.output.clone()],
            summary,
            results: json!({ "estimated_null": null_summary(&estimated), "sweep": results }),
            seed: Some(seed),
        });
    }

    let levels = match &null {
        Some(m) => adjust_vector(&v, m),
        None => v,
    };
    let report = optimize_decisions(&levels, &params)?;
    write_decisions(create(&args.output)?, &levels, &report)?;
    Ok(Outcome {
        inputs,
        outputs: vec![args.output.clone()],
        summary: vec![format!("n_decisions={} expected_loss={:?}", report.n_decisions, report.expected_loss)],
        results: json!({ "n_decisions": report.n_decisions, "expected_loss": report.expected_loss }),
        seed: Some(seed),
    })
}

/// `"0,50,200"` or `"0:100:2000"`, the latter inclusive of its stop.
pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let bad = || CliError::Usage(format!("bad --d1-grid `{s}`; expected a comma list or start:step:stop"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [one] => one.split(',').map(num).collect(),
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if step == 0 || stop < start {
                return Err(bad());
            }
            Ok((start..=stop).step_by(step).collect())
        }
        _ => Err(bad()),
    }
}

pub fn benefit(args: &BenefitArgs, mode: DenullMode) -> Result<Outcome> {
    let grid = parse_grid(&args.d1_grid)?;
    let v = load_levels(&args.input)?;
    let null = match &args.null {
        Some(path) => read_null(path)?,
        None => fit_null(&v.included_z(), args.center_fraction)?,
    };
    let curve = benefit_curve(&v, &null, &grid, args.center_fraction, mode)?;
    write_benefit(create(&args.output)?, &curve)?;
    let mut inputs = vec![args.input.clone()];
    inputs.extend(args.null.clone());
    let first_negative = curve.first_negative();
    Ok(Outcome {
        inputs,
        outputs: vec![args.output.clone()],
        summary: vec![format!(
            "relevance_bits={:?} sign_changes={} first_negative_d1={}",
            curve.relevance,
            curve.sign_changes(),
            first_negative.map_or("none".to_string(), |d| d.to_string())
        )],
        results: json!({
            "estimated_null": null_summary(&null),
            "relevance_bits": curve.relevance,
            "sign_changes": curve.sign_changes(),
            "first_negative_d1": first_negative,
        }),
        seed: None,
    })
}

pub fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<Outcome> {
    let text =
        std::fs::read_to_string(&args.config).map_err(|source| CliError::Open { path: args.config.clone(), source })?;
    let mut config: StudyConfig = serde_json::from_str(&text).map_err(condnull::Error::from)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let outcome = run_study(&config)?;
    write_trials(create(&args.output)?, &outcome)?;
    write_study_summary(create(&args.summary)?, &outcome)?;
    let summary = outcome
        .summary
        .cells
        .iter()
        .map(|c| format!("{} {} mean={:?} se={:?} mean_abs={:?}", c.null_mode.as_str(), c.subset, c.mean, c.se, c.mean_abs))
        .collect();
    Ok(Outcome {
        inputs: vec![args.config.clone()],
        outputs: vec![args.output.clone(), args.summary.clone()],
        summary,
        results: json!({ "config": config, "summary": outcome.summary }),
        seed: Some(config.seed),
    })
}
