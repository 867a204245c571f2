//! File formats: replicate TSV in, CSV tables out.
//!
//! Floats are written in shortest round-trip form, so reading a table back
//! reproduces every value bit for bit. Non-finite values are written as
//! empty cells.

use std::io::{BufRead, Read, Write};

use crate::benefit::BenefitCurve;
use crate::dist::norm_cdf;
use crate::error::{Error, Result};
use crate::levels::{ConfidenceVector, Exclusion, FeatureLevel, FeatureTable};
use crate::screening::{DecisionReport, SweepPoint};
use crate::simstudy::{NullMode, StudyOutcome};

pub const LEVELS_HEADER: [&str; 5] = ["feature_id", "n_obs", "level", "z", "exclusion_reason"];

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "N/A")
}

/// Read a replicate table: one row per feature, the identifier followed by
/// tab-separated observations. Empty or `NA` cells are missing values,
/// `#` lines are comments, and a first row with no numeric cells is taken
/// as a header.
pub fn read_feature_table<R: BufRead>(reader: R) -> Result<FeatureTable> {
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen_data = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cells = line.split('\t');
        let id = cells.next().unwrap_or("").trim().to_owned();
        let cells: Vec<&str> = cells.map(str::trim).collect();
        if !seen_data {
            seen_data = true;
            let looks_like_header = !cells.is_empty()
                && cells.iter().all(|c| !is_missing(c) && c.parse::<f64>().is_err());
            if looks_like_header {
                continue;
            }
        }
        if id.is_empty() {
            return Err(Error::Parse { line: line_no, message: "missing feature identifier".into() });
        }
        let mut obs = Vec::with_capacity(cells.len());
        for cell in cells {
            if is_missing(cell) {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("cannot parse `{cell}` as a number for feature `{id}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteObservation { feature: id, value: v });
            }
            obs.push(v);
        }
        ids.push(id);
        rows.push(obs);
    }
    if ids.is_empty() {
        return Err(Error::EmptyTable);
    }
    FeatureTable::new(ids, rows)
}

pub fn write_levels<W: Write>(writer: W, v: &ConfidenceVector) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LEVELS_HEADER)?;
    for f in v.features() {
        w.write_record([
            f.id.as_str(),
            &f.n_obs.map(|n| n.to_string()).unwrap_or_default(),
            &fmt_f64(f.level),
            &fmt_f64(f.z),
            f.exclusion.map(Exclusion::as_str).unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt_f64(cell: &str, line: usize, what: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse { line, message: format!("cannot parse {what} `{cell}`") })
}

/// Read a table written by [`write_levels`]. The opposite-direction level
/// of an included feature is recomputed from its z-value.
pub fn read_levels<R: Read>(reader: R) -> Result<ConfidenceVector> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != LEVELS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", LEVELS_HEADER.join(",")),
        });
    }
    let mut features = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let line = idx + 2;
        let rec = rec?;
        let id = rec[0].to_owned();
        let n_obs = if rec[1].is_empty() {
            None
        } else {
            Some(rec[1].parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse n_obs `{}`", &rec[1]),
            })?)
        };
        let level = parse_opt_f64(&rec[2], line, "level")?;
        let z = parse_opt_f64(&rec[3], line, "z")?;
        let exclusion = match &rec[4] {
            "" => None,
            s => Some(Exclusion::parse(s).ok_or_else(|| Error::Parse {
                line,
                message: format!("unknown exclusion reason `{s}`"),
            })?),
        };
        let feature = match (exclusion, level, z) {
            (None, Some(level), Some(z)) => {
                if !(level > 0.0 && level < 1.0) {
                    return Err(Error::Parse { line, message: format!("included level {level} outside (0, 1)") });
                }
                FeatureLevel { id, n_obs, level, upper: norm_cdf(-z), z, exclusion: None }
            }
            (None, Some(level), None) => {
                let f = FeatureLevel::from_tails(id, n_obs, level, 1.0 - level);
                if !f.is_included() {
                    return Err(Error::Parse { line, message: format!("included level {level} outside (0, 1)") });
                }
                f
            }
            (None, None, Some(z)) => FeatureLevel::from_z(id, n_obs, z),
            (None, None, None) => {
                return Err(Error::Parse { line, message: "included feature without level or z".into() });
            }
            (Some(reason), level, _) => {
                let level = level.unwrap_or(f64::NAN);
                let z = match reason {
                    Exclusion::NonfiniteZ if level >= 1.0 => f64::INFINITY,
                    Exclusion::NonfiniteZ if level <= 0.0 => f64::NEG_INFINITY,
                    _ => f64::NAN,
                };
                FeatureLevel { id, n_obs, level, upper: 1.0 - level, z, exclusion: Some(reason) }
            }
        };
        features.push(feature);
    }
    Ok(ConfidenceVector::new(features))
}

pub fn write_decisions<W: Write>(writer: W, levels: &ConfidenceVector, report: &DecisionReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature_id", "level", "error_prob", "action"])?;
    for ((f, e), a) in levels.features().iter().zip(&report.error_probs).zip(&report.actions) {
        w.write_record([f.id.as_str(), &fmt_f64(f.level), &fmt_f64(*e), a.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(writer: W, rows: &[(NullMode, SweepPoint)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["null", "one_plus_a", "n_decisions", "expected_loss"])?;
    for (mode, p) in rows {
        w.write_record([mode.as_str(), &fmt_f64(1.0 + p.a), &p.n_decisions.to_string(), &fmt_f64(p.expected_loss)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_benefit<W: Write>(writer: W, curve: &BenefitCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["d1", "nonancillarity_bits", "relevance_bits", "benefit_bits"])?;
    for ((d1, n), b) in curve.d1_grid.iter().zip(&curve.nonancillarity).zip(&curve.benefit) {
        w.write_record([d1.to_string(), fmt_f64(*n), fmt_f64(curve.relevance), fmt_f64(*b)])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the assumed-versus-estimated comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub feature_id: String,
    pub estimated_ratio: Option<f64>,
    pub level_assumed: f64,
    pub level_estimated: f64,
}

pub fn write_comparison<W: Write>(writer: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature_id", "estimated_ratio", "level_assumed", "level_estimated", "delta"])?;
    for r in rows {
        w.write_record([
            r.feature_id.as_str(),
            &r.estimated_ratio.map(fmt_f64).unwrap_or_default(),
            &fmt_f64(r.level_assumed),
            &fmt_f64(r.level_estimated),
            &fmt_f64(r.level_estimated - r.level_assumed),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-trial table for the configured null mode.
pub fn write_trials<W: Write>(writer: W, outcome: &StudyOutcome) -> Result<()> {
    let mode = outcome.config.null_mode;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "sigma_k", "mu0_hat", "sigma0_hat", "conservatism_unaffected", "conservatism_affected"])?;
    for t in &outcome.trials {
        let (mu, sigma) = match &t.null_fit {
            Some(m) => (fmt_f64(m.mu0), fmt_f64(m.sigma0)),
            None => (String::new(), String::new()),
        };
        let (cu, ca) = match t.conservatism(mode) {
            Some(c) => (fmt_f64(c.unaffected), fmt_f64(c.affected)),
            None => (String::new(), String::new()),
        };
        w.write_record([t.k.to_string(), fmt_f64(t.sigma_k), mu, sigma, cu, ca])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_study_summary<W: Write>(writer: W, outcome: &StudyOutcome) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["null_mode", "subset", "n_trials", "mean", "se", "mean_abs"])?;
    for c in &outcome.summary.cells {
        w.write_record([
            c.null_mode.as_str(),
            c.subset.as_str(),
            &c.n_trials.to_string(),
            &fmt_f64(c.mean),
            &fmt_f64(c.se),
            &fmt_f64(c.mean_abs),
        ])?;
    }
    w.flush()?;
    Ok(())
}
