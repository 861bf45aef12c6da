use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::Serialize;

use crate::error::{LabError, Result};

use super::runner::ExperimentOutput;
use super::summary::McSummary;

pub const CSV_HEADER: &str =
    "experiment_id,estimator,n,reps,mean,bias,variance,rmse,mc_se,ci_low,ci_high,master_seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(LabError::Config(format!("unknown format '{other}' (csv or json)"))),
        }
    }
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Decimal text with 12 significant digits, locale-free.
pub fn format_sig12(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round to 12 significant digits first so the exponent is final.
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let rounded: f64 = sci.parse().expect("round trip");
        let s = format!("{rounded:.decimals$}");
        trim_zeros(&s)
    } else {
        format!("{}e{exp}", trim_zeros(mant))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn summaries_to_csv(experiment_id: &str, master_seed: u64, summaries: &[McSummary]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in summaries {
        let fields = [
            experiment_id.to_string(),
            s.estimator.clone(),
            s.n.to_string(),
            s.reps.to_string(),
            format_sig12(s.mean),
            format_sig12(s.bias),
            format_sig12(s.variance),
            format_sig12(s.rmse),
            format_sig12(s.mc_se),
            format_sig12(s.ci_low),
            format_sig12(s.ci_high),
            master_seed.to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct JsonRow<'a> {
    experiment_id: &'a str,
    estimator: &'a str,
    n: usize,
    reps: usize,
    mean: Option<f64>,
    bias: Option<f64>,
    variance: Option<f64>,
    rmse: Option<f64>,
    mc_se: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    master_seed: u64,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then(|| format_sig12(x).parse().unwrap_or(x))
}

pub fn summaries_to_json(experiment_id: &str, master_seed: u64, summaries: &[McSummary]) -> String {
    let rows: Vec<JsonRow<'_>> = summaries
        .iter()
        .map(|s| JsonRow {
            experiment_id,
            estimator: &s.estimator,
            n: s.n,
            reps: s.reps,
            mean: finite(s.mean),
            bias: finite(s.bias),
            variance: finite(s.variance),
            rmse: finite(s.rmse),
            mc_se: finite(s.mc_se),
            ci_low: finite(s.ci_low),
            ci_high: finite(s.ci_high),
            master_seed,
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("summary rows serialize");
    s.push('\n');
    s
}

/// Writes the summary table to `path`.
pub fn emit_results(
    experiment_id: &str,
    master_seed: u64,
    summaries: &[McSummary],
    format: OutputFormat,
    path: &Path,
) -> Result<()> {
    let body = match format {
        OutputFormat::Csv => summaries_to_csv(experiment_id, master_seed, summaries),
        OutputFormat::Json => summaries_to_json(experiment_id, master_seed, summaries),
    };
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Writes the per-replication table, gzip-compressed, to `path`.
pub fn write_raw_table(output: &ExperimentOutput, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(GzEncoder::new(file, Compression::default()));
    let write = |w: &mut BufWriter<GzEncoder<File>>, line: String| {
        w.write_all(line.as_bytes()).map_err(|e| io_err(path, e))
    };
    write(&mut w, "experiment_id,n,rep,estimator,value,error\n".into())?;
    for rec in &output.raw {
        match &rec.outcome {
            Ok(values) => {
                for (name, v) in output.estimators.iter().zip(values) {
                    write(
                        &mut w,
                        format!(
                            "{},{},{},{},{},\n",
                            output.experiment_id,
                            rec.n,
                            rec.rep,
                            name,
                            format_sig12(*v)
                        ),
                    )?;
                }
            }
            Err(msg) => {
                let clean = msg.replace([',', '\n'], ";");
                write(
                    &mut w,
                    format!("{},{},{},,,{}\n", output.experiment_id, rec.n, rec.rep, clean),
                )?;
            }
        }
    }
    let enc = w.into_inner().map_err(|e| io_err(path, e.error()))?;
    enc.finish().map_err(|e| io_err(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12_formatting() {
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(1.0), "1");
        assert_eq!(format_sig12(-0.5), "-0.5");
        assert_eq!(format_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig12(123456789.123456789), "123456789.123");
        assert_eq!(format_sig12(1.5e-9), "1.5e-9");
        assert_eq!(format_sig12(2.0e15), "2e15");
        assert_eq!(format_sig12(f64::NAN), "NaN");
    }

    #[test]
    fn empty_summary_is_header_only() {
        assert_eq!(summaries_to_csv("x", 1, &[]), format!("{CSV_HEADER}\n"));
    }
}
