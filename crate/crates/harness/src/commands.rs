//! The four CLI commands. Each writes its tables and a `manifest.txt` into
//! the output directory and returns the paths written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fpf_core::filters::{
    run_filter_cached, simulate as simulate_paths, FilterKind, PropagatorCache,
};
use fpf_core::metrics::{fit_rate, rel_rmse, FilterTrace};
use fpf_core::sde::{ObservationSequence, TruthPath};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentSpec, Sweep};
use crate::csvio::{self, CellRow, ErrorRow, RateRow, Series, SummaryRow};
use crate::manifest::Manifest;

/// Metric columns shared by the error, rate and summary tables.
pub const METRICS: [&str; 3] = ["err_mean", "err_var", "err_truth"];

fn base_manifest(spec: &ExperimentSpec, command: &str) -> Manifest {
    let mut m = Manifest::new();
    m.set("tool", "fpf");
    m.set("version", env!("CARGO_PKG_VERSION"));
    m.set("command", command);
    m.set("config_hash", spec.hash());
    m.set("experiment", spec.canonical());
    m.set("scenario_hash", spec.scenario.fingerprint());
    m
}

struct Output<'a> {
    dir: &'a Path,
    manifest: Manifest,
    written: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    fn new(dir: &'a Path, manifest: Manifest) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            manifest,
            written: Vec::new(),
        })
    }

    fn file(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> Result<(), csvio::CsvError>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf).with_context(|| format!("formatting {name}"))?;
        let path = self.dir.join(name);
        std::fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.record_file(name, &buf);
        self.written.push(path);
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<PathBuf>> {
        let path = self.dir.join("manifest.txt");
        self.manifest
            .write(&path)
            .with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(self.written)
    }
}

/// Writes the truth path and observations of the first replica.
pub fn simulate(spec: &ExperimentSpec, out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = &spec.scenario;
    let (truth, obs) = simulate_paths(cfg)?;
    let hash = cfg.fingerprint();
    let mut o = Output::new(out, base_manifest(spec, "simulate"))?;
    o.manifest.set("seed", cfg.seed);
    o.manifest.set("rows", truth.len());
    let truth_series = Series {
        name: "truth".into(),
        config_hash: hash.clone(),
        times: truth.times().to_vec(),
        values: truth.states().to_vec(),
    };
    let obs_series = Series {
        name: "obs".into(),
        config_hash: hash,
        times: truth.times().to_vec(),
        values: obs.values().to_vec(),
    };
    o.file("truth.csv", |w| csvio::write_series(w, &truth_series))?;
    o.file("observations.csv", |w| csvio::write_series(w, &obs_series))?;
    o.finish()
}

/// File name of a trace: `trace_enkf_100.csv`, with `_nsub<k>` appended
/// under a substeps sweep.
pub fn trace_file_name(kind: &FilterKind, substeps: Option<usize>) -> String {
    let label = kind.to_string().replace(':', "_");
    match substeps {
        Some(n) => format!("trace_{label}_nsub{n}.csv"),
        None => format!("trace_{label}.csv"),
    }
}

/// Runs every filter on the first replica and writes one trace per
/// filter, resolution and substep count.
pub fn run(spec: &ExperimentSpec, out: &Path) -> Result<Vec<PathBuf>> {
    let seed = spec.seeds[0];
    let swept = matches!(spec.sweep, Sweep::Substeps(_));
    let cache = PropagatorCache::new();
    let mut tasks = Vec::new();
    for n in spec.substep_values() {
        let cfg = spec.scenario_for(n, seed)?;
        let (truth, obs) = simulate_paths(&cfg)?;
        for kind in spec.filter_values() {
            tasks.push((n, kind, cfg.clone(), truth.clone(), obs.clone()));
        }
    }
    let traces: BTreeMap<usize, (String, FilterTrace)> = tasks
        .into_par_iter()
        .enumerate()
        .map(|(i, (n, kind, cfg, truth, obs))| {
            let trace = run_filter_cached(kind, &cfg, &obs, &truth, &cache)
                .with_context(|| format!("{kind} with {n} substeps"))?;
            Ok((i, (trace_file_name(&kind, swept.then_some(n)), trace)))
        })
        .collect::<Result<_>>()?;
    let mut o = Output::new(out, base_manifest(spec, "run"))?;
    o.manifest.set("seed", seed);
    for (name, trace) in traces.values() {
        o.file(name, |w| csvio::write_trace(w, trace))?;
    }
    o.finish()
}

/// Truth, observations and reference trace of one replica.
struct Replica {
    truth: TruthPath,
    obs: ObservationSequence,
    reference: FilterTrace,
    burn_in: usize,
    cfg: fpf_core::filters::ScenarioConfig,
}

fn errors_against(trace: &FilterTrace, r: &Replica) -> Result<[f64; 3]> {
    let a = trace.after(r.burn_in);
    let b = r.reference.after(r.burn_in);
    if a.is_empty() {
        bail!("burn-in {} leaves no observations", r.burn_in);
    }
    Ok([
        rel_rmse(&a.means, &b.means)?,
        rel_rmse(&a.vars, &b.vars)?,
        rel_rmse(&a.means, &a.truth)?,
    ])
}

/// Seed-averaged error table, per-replica cells and rate fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub config_hash: String,
    pub cells: Vec<CellRow>,
    pub errors: Vec<ErrorRow>,
    pub rates: Vec<RateRow>,
}

impl Convergence {
    /// Seed-averaged row for `filter` at `substeps`.
    pub fn row(&self, filter: &str, substeps: usize) -> Option<&ErrorRow> {
        self.errors
            .iter()
            .find(|r| r.filter == filter && r.substeps == substeps)
    }
}

/// Errors of every filter against the reference filter, over all replica
/// seeds and substep counts. Cells are keyed, so the result does not depend
/// on the order in which the thread pool finishes them.
pub fn compute_convergence(spec: &ExperimentSpec) -> Result<Convergence> {
    let cache = PropagatorCache::new();
    let substeps = spec.substep_values();
    let filters = spec.filter_values();

    let mut replica_tasks = Vec::new();
    for &n in &substeps {
        for &seed in &spec.seeds {
            replica_tasks.push((n, seed, spec.scenario_for(n, seed)?));
        }
    }
    let replicas: BTreeMap<(usize, u64), Replica> = replica_tasks
        .into_par_iter()
        .map(|(n, seed, cfg)| {
            let (truth, obs) = simulate_paths(&cfg)?;
            let reference = run_filter_cached(spec.reference, &cfg, &obs, &truth, &cache)
                .with_context(|| {
                    format!(
                        "reference {} with {n} substeps, seed {seed}",
                        spec.reference
                    )
                })?;
            let burn_in = cfg.burn_in;
            Ok((
                (n, seed),
                Replica {
                    truth,
                    obs,
                    reference,
                    burn_in,
                    cfg,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let mut cell_tasks = Vec::new();
    for (ni, &n) in substeps.iter().enumerate() {
        for (fi, &kind) in filters.iter().enumerate() {
            for &seed in &spec.seeds {
                cell_tasks.push((ni, fi, n, kind, seed));
            }
        }
    }
    let cells: BTreeMap<(usize, usize, u64), [f64; 3]> = cell_tasks
        .into_par_iter()
        .map(|(ni, fi, n, kind, seed)| {
            let r = &replicas[&(n, seed)];
            let errs = if kind == spec.reference {
                errors_against(&r.reference, r)?
            } else {
                let trace = run_filter_cached(kind, &r.cfg, &r.obs, &r.truth, &cache)
                    .with_context(|| format!("{kind} with {n} substeps, seed {seed}"))?;
                errors_against(&trace, r)?
            };
            Ok(((ni, fi, seed), errs))
        })
        .collect::<Result<_>>()?;

    let mut cell_rows = Vec::with_capacity(cells.len());
    let mut sums: BTreeMap<(usize, usize), [f64; 3]> = BTreeMap::new();
    for (&(ni, fi, seed), errs) in &cells {
        cell_rows.push(CellRow {
            filter: filters[fi].to_string(),
            substeps: substeps[ni],
            seed,
            err_mean: errs[0],
            err_var: errs[1],
            err_truth: errs[2],
        });
        let s = sums.entry((ni, fi)).or_insert([0.0; 3]);
        for k in 0..3 {
            s[k] += errs[k];
        }
    }
    let replicas_per_cell = spec.seeds.len();
    let errors: Vec<ErrorRow> = sums
        .iter()
        .map(|(&(ni, fi), s)| {
            let kind = filters[fi];
            let avg = |k: usize| s[k] / replicas_per_cell as f64;
            ErrorRow {
                filter: kind.to_string(),
                family: kind.family().to_string(),
                resolution: kind.resolution().unwrap_or(0),
                substeps: substeps[ni],
                seeds: replicas_per_cell,
                err_mean: avg(0),
                err_var: avg(1),
                err_truth: avg(2),
            }
        })
        .collect();

    Ok(Convergence {
        config_hash: spec.hash(),
        cells: cell_rows,
        rates: fit_rates(&errors),
        errors,
    })
}

/// Fits `log err` against `log resolution` for every family and substep
/// count with at least three resolutions. Metrics with a zero error (the
/// reference against itself) are skipped.
pub fn fit_rates(errors: &[ErrorRow]) -> Vec<RateRow> {
    let mut groups: BTreeMap<(usize, String), Vec<&ErrorRow>> = BTreeMap::new();
    for r in errors.iter().filter(|r| r.resolution > 0) {
        groups
            .entry((r.substeps, r.family.clone()))
            .or_default()
            .push(r);
    }
    let mut rates = Vec::new();
    for ((substeps, family), rows) in groups {
        if rows.len() < 3 {
            continue;
        }
        let x: Vec<f64> = rows.iter().map(|r| r.resolution as f64).collect();
        for metric in METRICS {
            let y: Vec<f64> = rows.iter().map(|r| metric_value(r, metric)).collect();
            if let Ok(fit) = fit_rate(&x, &y) {
                rates.push(RateRow {
                    family: family.clone(),
                    substeps,
                    metric: metric.to_string(),
                    slope: fit.slope,
                    intercept: fit.intercept,
                    max_residual: fit.max_residual,
                    points: rows.len(),
                });
            }
        }
    }
    rates
}

pub fn metric_value(r: &ErrorRow, metric: &str) -> f64 {
    match metric {
        "err_mean" => r.err_mean,
        "err_var" => r.err_var,
        "err_truth" => r.err_truth,
        _ => unreachable!("unknown metric {metric}"),
    }
}

/// Writes `errors.csv`, `cells.csv` and `rates.csv`.
pub fn convergence(spec: &ExperimentSpec, out: &Path) -> Result<Vec<PathBuf>> {
    let c = compute_convergence(spec)?;
    let mut o = Output::new(out, base_manifest(spec, "convergence"))?;
    o.manifest.set("reference", spec.reference);
    o.file("errors.csv", |w| {
        csvio::write_errors(w, &c.config_hash, &c.errors)
    })?;
    o.file("cells.csv", |w| {
        csvio::write_cells(w, &c.config_hash, &c.cells)
    })?;
    o.file("rates.csv", |w| {
        csvio::write_rates(w, &c.config_hash, &c.rates)
    })?;
    o.finish()
}

/// Builds the filter × substeps × metric table from error tables, ranking
/// filters within each substeps and metric by increasing error.
pub fn summarize(tables: &[Vec<ErrorRow>]) -> Result<Vec<SummaryRow>> {
    if tables.iter().all(|t| t.is_empty()) {
        bail!("no error rows to summarize");
    }
    let mut seen = BTreeMap::new();
    for (i, rows) in tables.iter().enumerate() {
        for r in rows {
            if let Some(j) = seen.insert((r.substeps, r.filter.clone()), i) {
                bail!(
                    "`{}` at {} substeps appears in inputs {} and {}",
                    r.filter,
                    r.substeps,
                    j + 1,
                    i + 1
                );
            }
        }
    }
    let mut out = Vec::new();
    let all: Vec<&ErrorRow> = tables.iter().flatten().collect();
    let mut substeps: Vec<usize> = all.iter().map(|r| r.substeps).collect();
    substeps.sort_unstable();
    substeps.dedup();
    for n in substeps {
        for metric in METRICS {
            let mut group: Vec<(f64, &str)> = all
                .iter()
                .filter(|r| r.substeps == n)
                .map(|r| (metric_value(r, metric), r.filter.as_str()))
                .collect();
            group.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            for (rank, (error, filter)) in group.into_iter().enumerate() {
                out.push(SummaryRow {
                    substeps: n,
                    metric: metric.to_string(),
                    filter: filter.to_string(),
                    error,
                    rank: rank + 1,
                });
            }
        }
    }
    Ok(out)
}

/// Whitespace-separated table for one metric: a row per substep count and
/// a column per filter; `NaN` marks absent cells.
pub fn gnuplot_table(rows: &[SummaryRow], metric: &str) -> String {
    let mut filters: Vec<&str> = rows
        .iter()
        .filter(|r| r.metric == metric)
        .map(|r| r.filter.as_str())
        .collect();
    filters.sort_unstable();
    filters.dedup();
    let mut table: BTreeMap<usize, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        table
            .entry(r.substeps)
            .or_default()
            .insert(&r.filter, r.error);
    }
    let mut s = format!("# substeps {}\n", filters.join(" "));
    for (n, cells) in table {
        s.push_str(&n.to_string());
        for f in &filters {
            s.push(' ');
            match cells.get(f) {
                Some(v) => s.push_str(&csvio::fmt_real(*v)),
                None => s.push_str("NaN"),
            }
        }
        s.push('\n');
    }
    s
}

/// Aggregates the error tables listed under `[report] inputs`.
pub fn report(spec: &ExperimentSpec, out: &Path) -> Result<Vec<PathBuf>> {
    if spec.report.inputs.is_empty() {
        bail!("`report.inputs` lists no error tables");
    }
    let mut tables = Vec::new();
    let mut digest = Sha256::new();
    for input in &spec.report.inputs {
        let path = out.join(input);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("missing report input {}", path.display()))?;
        digest.update(text.as_bytes());
        let (_, rows) =
            csvio::read_errors(&text).with_context(|| format!("parsing {}", path.display()))?;
        tables.push(rows);
    }
    let rows = summarize(&tables)?;
    let hash = hex::encode(digest.finalize());
    let mut m = Manifest::new();
    m.set("tool", "fpf");
    m.set("version", env!("CARGO_PKG_VERSION"));
    m.set("command", "report");
    m.set("config_hash", &hash);
    let inputs: Vec<String> = spec
        .report
        .inputs
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    m.set("inputs", inputs.join(","));
    let mut o = Output::new(out, m)?;
    o.file("summary.csv", |w| csvio::write_summary(w, &hash, &rows))?;
    if spec.report.gnuplot {
        for metric in METRICS {
            let table = gnuplot_table(&rows, metric);
            o.file(&format!("summary_{metric}.dat"), |w| {
                w.extend_from_slice(table.as_bytes());
                Ok(())
            })?;
        }
    }
    o.finish()
}
