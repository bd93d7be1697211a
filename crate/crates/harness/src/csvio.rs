//! CSV tables written by the harness and their readers.
//!
//! Every file starts with one `# key=value ...` line carrying at least the
//! config hash, followed by a header row. Reals are written with 17
//! significant digits so that `read(write(x)) == x` bit for bit.

use std::collections::BTreeMap;
use std::io::Write;

use fpf_core::metrics::FilterTrace;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing `# key=value` metadata line")]
    MissingMeta,
    #[error("metadata is missing `{0}`")]
    MissingKey(&'static str),
    #[error(
        "metadata value for `{key}` must be a nonempty token without whitespace or `=`: {value:?}"
    )]
    BadMeta { key: String, value: String },
    #[error("expected columns {expected:?}, found {found:?}")]
    Header {
        expected: Vec<&'static str>,
        found: Vec<String>,
    },
    #[error("line {line}, column `{column}`: cannot parse {value:?}")]
    Value {
        line: u64,
        column: &'static str,
        value: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Width {
        line: u64,
        expected: usize,
        found: usize,
    },
}

pub type Meta = BTreeMap<String, String>;

/// Round-trip formatting of a real.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn meta_line(meta: &[(&str, &str)]) -> Result<String, CsvError> {
    let mut line = String::from("#");
    for (k, v) in meta {
        for s in [*k, *v] {
            if s.is_empty() || s.contains(|c: char| c.is_whitespace() || c == '=') {
                return Err(CsvError::BadMeta {
                    key: k.to_string(),
                    value: v.to_string(),
                });
            }
        }
        line.push(' ');
        line.push_str(k);
        line.push('=');
        line.push_str(v);
    }
    line.push('\n');
    Ok(line)
}

fn write_table<W: Write>(
    mut out: W,
    meta: &[(&str, &str)],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CsvError> {
    out.write_all(meta_line(meta)?.as_bytes())?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Splits off the metadata line and parses the table body.
fn read_table(
    text: &str,
    header: &[&'static str],
) -> Result<(Meta, Vec<csv::StringRecord>), CsvError> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let first = first.strip_suffix('\r').unwrap_or(first);
    let tokens = first.strip_prefix('#').ok_or(CsvError::MissingMeta)?;
    let mut meta = Meta::new();
    for tok in tokens.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| CsvError::BadMeta {
            key: tok.to_string(),
            value: String::new(),
        })?;
        meta.insert(k.to_string(), v.to_string());
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(CsvError::Header {
            expected: header.to_vec(),
            found,
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(CsvError::Width {
                line: line_of(&rec),
                expected: header.len(),
                found: rec.len(),
            });
        }
        rows.push(rec);
    }
    Ok((meta, rows))
}

/// Line number in the whole file, counting the metadata line.
fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line() + 1)
}

fn cell<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    column: &'static str,
) -> Result<T, CsvError> {
    let s = &rec[i];
    s.parse().map_err(|_| CsvError::Value {
        line: line_of(rec),
        column,
        value: s.to_string(),
    })
}

fn key<'a>(meta: &'a Meta, k: &'static str) -> Result<&'a String, CsvError> {
    meta.get(k).ok_or(CsvError::MissingKey(k))
}

const TRACE_COLUMNS: [&str; 5] = ["t", "mean", "var", "truth", "obs"];

pub fn write_trace<W: Write>(out: W, trace: &FilterTrace) -> Result<(), CsvError> {
    let seed = trace.seed.to_string();
    let rows = (0..trace.len()).map(|j| {
        vec![
            fmt_real(trace.times[j]),
            fmt_real(trace.means[j]),
            fmt_real(trace.vars[j]),
            fmt_real(trace.truth[j]),
            fmt_real(trace.obs[j]),
        ]
    });
    write_table(
        out,
        &[
            ("label", &trace.label),
            ("seed", &seed),
            ("config_hash", &trace.config_hash),
        ],
        &TRACE_COLUMNS,
        rows,
    )
}

pub fn read_trace(text: &str) -> Result<FilterTrace, CsvError> {
    let (meta, rows) = read_table(text, &TRACE_COLUMNS)?;
    let seed = key(&meta, "seed")?;
    let seed = seed.parse().map_err(|_| CsvError::Value {
        line: 1,
        column: "seed",
        value: seed.clone(),
    })?;
    let mut trace = FilterTrace::new(
        key(&meta, "label")?.clone(),
        seed,
        key(&meta, "config_hash")?.clone(),
    );
    for rec in &rows {
        trace.push(
            cell(rec, 0, "t")?,
            cell(rec, 1, "mean")?,
            cell(rec, 2, "var")?,
            cell(rec, 3, "truth")?,
            cell(rec, 4, "obs")?,
        );
    }
    Ok(trace)
}

/// One sampled path: the truth or the observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// Column name of the values, `truth` or `obs`.
    pub name: String,
    pub config_hash: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn write_series<W: Write>(out: W, s: &Series) -> Result<(), CsvError> {
    let rows = s
        .times
        .iter()
        .zip(&s.values)
        .map(|(t, v)| vec![fmt_real(*t), fmt_real(*v)]);
    write_table(
        out,
        &[("config_hash", &s.config_hash)],
        &["t", &s.name],
        rows,
    )
}

pub fn read_series(text: &str, name: &'static str) -> Result<Series, CsvError> {
    let (meta, rows) = read_table(text, &["t", name])?;
    let mut s = Series {
        name: name.to_string(),
        config_hash: key(&meta, "config_hash")?.clone(),
        times: Vec::with_capacity(rows.len()),
        values: Vec::with_capacity(rows.len()),
    };
    for rec in &rows {
        s.times.push(cell(rec, 0, "t")?);
        s.values.push(cell(rec, 1, name)?);
    }
    Ok(s)
}

/// Seed-averaged errors of one filter at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub filter: String,
    pub family: String,
    /// Members or grid nodes; 0 for the Kalman filter.
    pub resolution: usize,
    pub substeps: usize,
    pub seeds: usize,
    /// Relative RMSE of the posterior mean against the reference mean.
    pub err_mean: f64,
    /// Relative RMSE of the posterior variance against the reference variance.
    pub err_var: f64,
    /// Relative RMSE of the posterior mean against the truth.
    pub err_truth: f64,
}

pub const ERROR_COLUMNS: [&str; 8] = [
    "filter",
    "family",
    "resolution",
    "substeps",
    "seeds",
    "err_mean",
    "err_var",
    "err_truth",
];

pub fn write_errors<W: Write>(
    out: W,
    config_hash: &str,
    rows: &[ErrorRow],
) -> Result<(), CsvError> {
    write_table(
        out,
        &[("config_hash", config_hash)],
        &ERROR_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.filter.clone(),
                r.family.clone(),
                r.resolution.to_string(),
                r.substeps.to_string(),
                r.seeds.to_string(),
                fmt_real(r.err_mean),
                fmt_real(r.err_var),
                fmt_real(r.err_truth),
            ]
        }),
    )
}

pub fn read_errors(text: &str) -> Result<(Meta, Vec<ErrorRow>), CsvError> {
    let (meta, rows) = read_table(text, &ERROR_COLUMNS)?;
    let rows = rows
        .iter()
        .map(|rec| {
            Ok(ErrorRow {
                filter: rec[0].to_string(),
                family: rec[1].to_string(),
                resolution: cell(rec, 2, "resolution")?,
                substeps: cell(rec, 3, "substeps")?,
                seeds: cell(rec, 4, "seeds")?,
                err_mean: cell(rec, 5, "err_mean")?,
                err_var: cell(rec, 6, "err_var")?,
                err_truth: cell(rec, 7, "err_truth")?,
            })
        })
        .collect::<Result<_, CsvError>>()?;
    Ok((meta, rows))
}

/// Errors of one filter on one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub filter: String,
    pub substeps: usize,
    pub seed: u64,
    pub err_mean: f64,
    pub err_var: f64,
    pub err_truth: f64,
}

const CELL_COLUMNS: [&str; 6] = [
    "filter",
    "substeps",
    "seed",
    "err_mean",
    "err_var",
    "err_truth",
];

pub fn write_cells<W: Write>(out: W, config_hash: &str, rows: &[CellRow]) -> Result<(), CsvError> {
    write_table(
        out,
        &[("config_hash", config_hash)],
        &CELL_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.filter.clone(),
                r.substeps.to_string(),
                r.seed.to_string(),
                fmt_real(r.err_mean),
                fmt_real(r.err_var),
                fmt_real(r.err_truth),
            ]
        }),
    )
}

pub fn read_cells(text: &str) -> Result<(Meta, Vec<CellRow>), CsvError> {
    let (meta, rows) = read_table(text, &CELL_COLUMNS)?;
    let rows = rows
        .iter()
        .map(|rec| {
            Ok(CellRow {
                filter: rec[0].to_string(),
                substeps: cell(rec, 1, "substeps")?,
                seed: cell(rec, 2, "seed")?,
                err_mean: cell(rec, 3, "err_mean")?,
                err_var: cell(rec, 4, "err_var")?,
                err_truth: cell(rec, 5, "err_truth")?,
            })
        })
        .collect::<Result<_, CsvError>>()?;
    Ok((meta, rows))
}

/// Log-log fit of error against resolution for one filter family.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub family: String,
    pub substeps: usize,
    /// `err_mean`, `err_var` or `err_truth`.
    pub metric: String,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub points: usize,
}

pub const RATE_COLUMNS: [&str; 7] = [
    "family",
    "substeps",
    "metric",
    "slope",
    "intercept",
    "max_residual",
    "points",
];

pub fn write_rates<W: Write>(out: W, config_hash: &str, rows: &[RateRow]) -> Result<(), CsvError> {
    write_table(
        out,
        &[("config_hash", config_hash)],
        &RATE_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.family.clone(),
                r.substeps.to_string(),
                r.metric.clone(),
                fmt_real(r.slope),
                fmt_real(r.intercept),
                fmt_real(r.max_residual),
                r.points.to_string(),
            ]
        }),
    )
}

pub fn read_rates(text: &str) -> Result<(Meta, Vec<RateRow>), CsvError> {
    let (meta, rows) = read_table(text, &RATE_COLUMNS)?;
    let rows = rows
        .iter()
        .map(|rec| {
            Ok(RateRow {
                family: rec[0].to_string(),
                substeps: cell(rec, 1, "substeps")?,
                metric: rec[2].to_string(),
                slope: cell(rec, 3, "slope")?,
                intercept: cell(rec, 4, "intercept")?,
                max_residual: cell(rec, 5, "max_residual")?,
                points: cell(rec, 6, "points")?,
            })
        })
        .collect::<Result<_, CsvError>>()?;
    Ok((meta, rows))
}

/// One entry of the filter × substeps × metric comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub substeps: usize,
    pub metric: String,
    pub filter: String,
    pub error: f64,
    /// 1 for the smallest error among filters at this substeps and metric.
    pub rank: usize,
}

pub const SUMMARY_COLUMNS: [&str; 5] = ["substeps", "metric", "filter", "error", "rank"];

pub fn write_summary<W: Write>(
    out: W,
    config_hash: &str,
    rows: &[SummaryRow],
) -> Result<(), CsvError> {
    write_table(
        out,
        &[("config_hash", config_hash)],
        &SUMMARY_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.substeps.to_string(),
                r.metric.clone(),
                r.filter.clone(),
                fmt_real(r.error),
                r.rank.to_string(),
            ]
        }),
    )
}

pub fn read_summary(text: &str) -> Result<(Meta, Vec<SummaryRow>), CsvError> {
    let (meta, rows) = read_table(text, &SUMMARY_COLUMNS)?;
    let rows = rows
        .iter()
        .map(|rec| {
            Ok(SummaryRow {
                substeps: cell(rec, 0, "substeps")?,
                metric: rec[1].to_string(),
                filter: rec[2].to_string(),
                error: cell(rec, 3, "error")?,
                rank: cell(rec, 4, "rank")?,
            })
        })
        .collect::<Result<_, CsvError>>()?;
    Ok((meta, rows))
}
