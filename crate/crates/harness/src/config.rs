//! Experiment configuration: a TOML file with one table per concern.
//!
//! ```toml
//! [model]
//! kind = "double_well"      # or "ou"
//! a = 10.0
//! b = 0.5
//!
//! [observation]
//! coeff = 1.0               # H
//! gamma = 1.0               # noise variance
//!
//! [timing]
//! dt = 1e-4
//! substeps = 1000           # h = substeps * dt; or give `h` directly
//! total_time = 100.0        # or `steps` = J
//! burn_in = 10
//! scheme = "euler_maruyama" # default "exact_ou" for ou
//!
//! [grid]
//! radius = 3.0
//!
//! [init]
//! law = "invariant"         # or "gaussian" with `mean` and `var`
//! # u0 = 0.5
//!
//! [run]
//! seed = 1
//! replicas = 5
//! filters = ["full_fpf:200", "g1:200", "enkf:1000"]
//!
//! [sweep]
//! axis = "substeps"         # "none", "resolution" or "substeps"
//! values = [5, 20, 100, 1000]
//! reference = "full_fpf:1000"
//!
//! [report]
//! inputs = ["nsub5/errors.csv", "nsub1000/errors.csv"]
//! gnuplot = true
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fpf_core::filters::{FilterKind, InitLaw, ScenarioConfig};
use fpf_core::sde::{ModelKind, ObsModel, Scheme, SdeModel, Window};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(#[from] toml::de::Error),
    #[error("`{field}`: {reason}")]
    Field { field: String, reason: String },
}

fn field(name: impl Into<String>, reason: impl ToString) -> ConfigError {
    ConfigError::Field {
        field: name.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    #[serde(default)]
    observation: RawObservation,
    timing: RawTiming,
    grid: RawGrid,
    #[serde(default)]
    init: RawInit,
    run: RawRun,
    sweep: Option<RawSweep>,
    report: Option<RawReport>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: String,
    a: f64,
    b: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservation {
    #[serde(default = "one")]
    coeff: f64,
    #[serde(default = "one")]
    gamma: f64,
}

impl Default for RawObservation {
    fn default() -> Self {
        Self {
            coeff: 1.0,
            gamma: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTiming {
    dt: Option<f64>,
    h: Option<f64>,
    substeps: Option<u64>,
    steps: Option<u64>,
    total_time: Option<f64>,
    #[serde(default)]
    burn_in: u64,
    scheme: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    radius: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    law: Option<String>,
    mean: Option<f64>,
    var: Option<f64>,
    u0: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_replicas")]
    replicas: u64,
    filters: Vec<String>,
}

fn default_seed() -> u64 {
    1
}

fn default_replicas() -> u64 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: String,
    #[serde(default)]
    values: Vec<u64>,
    reference: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    gnuplot: bool,
}

/// What a sweep varies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sweep {
    /// Every filter once, as listed.
    None,
    /// Ensemble size or grid size of every listed filter.
    Resolution(Vec<usize>),
    /// Euler substeps per observation window, `h = n * dt`.
    Substeps(Vec<usize>),
}

impl Sweep {
    pub fn axis(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::Resolution(_) => "resolution",
            Sweep::Substeps(_) => "substeps",
        }
    }
}

/// Number of observations: fixed, or implied by a time horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Steps(usize),
    Time(f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportSpec {
    /// Error tables to aggregate, relative to the output directory.
    pub inputs: Vec<PathBuf>,
    pub gnuplot: bool,
}

/// A validated experiment: scenario, filters, sweep and replica seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Scenario at the base window, seeded with the first replica seed.
    pub scenario: ScenarioConfig,
    pub filters: Vec<FilterKind>,
    pub sweep: Sweep,
    pub seeds: Vec<u64>,
    pub reference: FilterKind,
    pub horizon: Horizon,
    pub report: ReportSpec,
}

impl ExperimentSpec {
    /// Replaces the replica seeds with `seed, seed + 1, ...`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let n = self.seeds.len() as u64;
        self.seeds = (0..n).map(|k| seed.wrapping_add(k)).collect();
        self.scenario = self.scenario.with_seed(seed);
        self
    }

    /// Substep counts to run: the sweep values, or the base window's.
    pub fn substep_values(&self) -> Vec<usize> {
        match &self.sweep {
            Sweep::Substeps(v) => v.clone(),
            _ => vec![self.scenario.window.substeps()],
        }
    }

    /// Filters to run: each listed filter at each swept resolution.
    pub fn filter_values(&self) -> Vec<FilterKind> {
        match &self.sweep {
            Sweep::Resolution(values) => self
                .filters
                .iter()
                .flat_map(|f| values.iter().filter_map(move |&r| f.with_resolution(r)))
                .collect(),
            _ => self.filters.clone(),
        }
    }

    /// Scenario with `substeps` Euler steps per window and the given seed.
    pub fn scenario_for(&self, substeps: usize, seed: u64) -> Result<ScenarioConfig, ConfigError> {
        let base = &self.scenario;
        let dt = base.window.dt();
        let h = substeps as f64 * dt;
        let window =
            Window::new(h, dt, base.window.scheme()).map_err(|e| field("sweep.values", e))?;
        let steps = steps_for(self.horizon, h)?;
        let cfg = ScenarioConfig {
            window,
            steps,
            seed,
            ..base.clone()
        };
        cfg.validate().map_err(|e| field("sweep.values", e))?;
        Ok(cfg)
    }

    /// Canonical text of everything that determines the outputs.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}", self.scenario.canonical());
        let filters: Vec<String> = self.filters.iter().map(|f| f.to_string()).collect();
        let _ = write!(s, ";filters={}", filters.join(","));
        let values = match &self.sweep {
            Sweep::None => String::new(),
            Sweep::Resolution(v) | Sweep::Substeps(v) => v
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(","),
        };
        let _ = write!(s, ";sweep={}({})", self.sweep.axis(), values);
        let seeds: Vec<String> = self.seeds.iter().map(|x| x.to_string()).collect();
        let _ = write!(s, ";seeds={}", seeds.join(","));
        let _ = write!(s, ";reference={}", self.reference);
        let _ = match self.horizon {
            Horizon::Steps(j) => write!(s, ";horizon=steps({j})"),
            Horizon::Time(t) => write!(s, ";horizon=time({t})"),
        };
        s
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

fn steps_for(horizon: Horizon, h: f64) -> Result<usize, ConfigError> {
    match horizon {
        Horizon::Steps(j) => Ok(j),
        Horizon::Time(t) => {
            let j = (t / h).round();
            if j < 1.0 || ((t / h) - j).abs() > 1e-9 * j {
                return Err(field(
                    "timing.total_time",
                    format!("{t} is not a positive integer multiple of h = {h}"),
                ));
            }
            Ok(j as usize)
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field(name, format!("must be positive and finite, got {v}")))
    }
}

fn increasing(name: &str, values: &[u64]) -> Result<Vec<usize>, ConfigError> {
    if values.is_empty() {
        return Err(field(name, "must not be empty"));
    }
    if values.contains(&0) {
        return Err(field(name, "values must be positive"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(field(name, "values must be strictly increasing"));
    }
    values
        .iter()
        .map(|&v| usize::try_from(v).map_err(|_| field(name, "value too large")))
        .collect()
}

fn filter(name: String, spec: &str) -> Result<FilterKind, ConfigError> {
    spec.parse().map_err(|e| field(name, e))
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;

    let kind = ModelKind::from_label(&raw.model.kind).ok_or_else(|| {
        field(
            "model.kind",
            format!(
                "unknown model `{}` (expected `ou` or `double_well`)",
                raw.model.kind
            ),
        )
    })?;
    positive("model.a", raw.model.a)?;
    positive("model.b", raw.model.b)?;
    let model = SdeModel::new(kind, raw.model.a, raw.model.b).map_err(|e| field("model", e))?;

    if !(raw.observation.coeff.is_finite() && raw.observation.coeff != 0.0) {
        return Err(field("observation.coeff", "must be finite and nonzero"));
    }
    positive("observation.gamma", raw.observation.gamma)?;
    let obs = ObsModel::new(raw.observation.coeff, raw.observation.gamma)
        .map_err(|e| field("observation", e))?;

    let t = &raw.timing;
    let scheme = match t.scheme.as_deref() {
        None if kind == ModelKind::Ou => Scheme::ExactOu,
        None | Some("euler_maruyama") => Scheme::EulerMaruyama,
        Some("exact_ou") if kind == ModelKind::Ou => Scheme::ExactOu,
        Some("exact_ou") => {
            return Err(field("timing.scheme", "`exact_ou` requires the `ou` model"))
        }
        Some(other) => {
            return Err(field(
                "timing.scheme",
                format!("unknown scheme `{other}` (expected `euler_maruyama` or `exact_ou`)"),
            ))
        }
    };
    let (h, dt) = match (t.h, t.substeps, t.dt) {
        (Some(_), Some(_), _) => {
            return Err(field("timing.h", "give either `h` or `substeps`, not both"))
        }
        (Some(h), None, dt) => {
            let h = positive("timing.h", h)?;
            (h, positive("timing.dt", dt.unwrap_or(h))?)
        }
        (None, Some(n), Some(dt)) => {
            let dt = positive("timing.dt", dt)?;
            if n == 0 {
                return Err(field("timing.substeps", "must be positive"));
            }
            (n as f64 * dt, dt)
        }
        (None, Some(_), None) => return Err(field("timing.dt", "required with `substeps`")),
        (None, None, _) => return Err(field("timing.h", "give `h` or `substeps`")),
    };
    let window = Window::new(h, dt, scheme).map_err(|e| field("timing.h", e))?;
    let horizon = match (t.steps, t.total_time) {
        (Some(_), Some(_)) => {
            return Err(field(
                "timing.steps",
                "give either `steps` or `total_time`, not both",
            ))
        }
        (Some(0), None) => return Err(field("timing.steps", "must be positive")),
        (Some(j), None) => Horizon::Steps(
            usize::try_from(j).map_err(|_| field("timing.steps", "value too large"))?,
        ),
        (None, Some(total)) => Horizon::Time(positive("timing.total_time", total)?),
        (None, None) => return Err(field("timing.steps", "give `steps` or `total_time`")),
    };
    let steps = steps_for(horizon, h)?;
    let burn_in =
        usize::try_from(t.burn_in).map_err(|_| field("timing.burn_in", "value too large"))?;

    let radius = positive("grid.radius", raw.grid.radius)?;

    let init = match raw.init.law.as_deref() {
        None | Some("invariant") => {
            if raw.init.mean.is_some() || raw.init.var.is_some() {
                return Err(field("init.law", "`mean`/`var` need law = \"gaussian\""));
            }
            InitLaw::Invariant
        }
        Some("gaussian") => {
            let mean = raw
                .init
                .mean
                .ok_or_else(|| field("init.mean", "required for a Gaussian initial law"))?;
            if !mean.is_finite() {
                return Err(field("init.mean", "must be finite"));
            }
            let var = raw
                .init
                .var
                .ok_or_else(|| field("init.var", "required for a Gaussian initial law"))?;
            InitLaw::Gaussian {
                mean,
                var: positive("init.var", var)?,
            }
        }
        Some(other) => {
            return Err(field(
                "init.law",
                format!("unknown law `{other}` (expected `invariant` or `gaussian`)"),
            ))
        }
    };
    if let Some(u0) = raw.init.u0 {
        if !u0.is_finite() {
            return Err(field("init.u0", "must be finite"));
        }
    }

    if raw.run.filters.is_empty() {
        return Err(field("run.filters", "must list at least one filter"));
    }
    let filters = raw
        .run
        .filters
        .iter()
        .enumerate()
        .map(|(i, s)| filter(format!("run.filters[{i}]"), s))
        .collect::<Result<Vec<_>, _>>()?;
    if raw.run.replicas == 0 {
        return Err(field("run.replicas", "must be positive"));
    }
    let seeds: Vec<u64> = (0..raw.run.replicas)
        .map(|k| raw.run.seed.wrapping_add(k))
        .collect();

    let (sweep, reference) = match &raw.sweep {
        None => (Sweep::None, None),
        Some(s) => {
            let sweep = match s.axis.as_str() {
                "none" => {
                    if !s.values.is_empty() {
                        return Err(field("sweep.values", "axis \"none\" takes no values"));
                    }
                    Sweep::None
                }
                "resolution" => Sweep::Resolution(increasing("sweep.values", &s.values)?),
                "substeps" => Sweep::Substeps(increasing("sweep.values", &s.values)?),
                other => {
                    return Err(field(
                        "sweep.axis",
                        format!("unknown axis `{other}` (expected none, resolution or substeps)"),
                    ))
                }
            };
            let reference = s
                .reference
                .as_deref()
                .map(|r| filter("sweep.reference".into(), r))
                .transpose()?;
            (sweep, reference)
        }
    };
    if let Sweep::Resolution(_) = sweep {
        if let Some(i) = filters.iter().position(|f| f.resolution().is_none()) {
            return Err(field(
                format!("run.filters[{i}]"),
                format!("`{}` has no resolution to sweep", filters[i]),
            ));
        }
    }
    let reference = reference.unwrap_or(if model.is_linear() {
        FilterKind::Kalman
    } else {
        FilterKind::FullFpf { n: 1000 }
    });
    if reference == FilterKind::Kalman && !model.is_linear() {
        return Err(field(
            "sweep.reference",
            "the Kalman filter is exact only for the `ou` model",
        ));
    }

    let report = raw
        .report
        .map(|r| ReportSpec {
            inputs: r.inputs.into_iter().map(PathBuf::from).collect(),
            gnuplot: r.gnuplot,
        })
        .unwrap_or_default();

    let scenario = ScenarioConfig {
        model,
        obs,
        window,
        steps,
        radius,
        init,
        u0: raw.init.u0,
        seed: seeds[0],
        burn_in,
    };
    scenario.validate().map_err(|e| field("scenario", e))?;
    let spec = ExperimentSpec {
        scenario,
        filters,
        sweep,
        seeds,
        reference,
        horizon,
        report,
    };
    for n in spec.substep_values() {
        spec.scenario_for(n, spec.seeds[0])?;
    }
    Ok(spec)
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const OU: &str = r#"
        [model]
        kind = "ou"
        a = 1.0
        b = 1.0
        [timing]
        h = 1.0
        steps = 20
        [grid]
        radius = 6.0
        [run]
        filters = ["kf", "enkf:100"]
    "#;

    fn err_field(text: &str) -> String {
        match parse_config(text) {
            Err(ConfigError::Field { field, .. }) => field,
            other => panic!("expected a field error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_ou_config() {
        let spec = parse_config(OU).unwrap();
        assert_eq!(spec.scenario.steps, 20);
        assert_eq!(spec.scenario.window.scheme(), Scheme::ExactOu);
        assert_eq!(spec.reference, FilterKind::Kalman);
        assert_eq!(spec.seeds, vec![1]);
        assert_eq!(spec.sweep, Sweep::None);
        assert_eq!(spec.filters.len(), 2);
    }

    #[test]
    fn integers_are_accepted_for_reals() {
        let spec = parse_config(&OU.replace("a = 1.0", "a = 2")).unwrap();
        assert_eq!(spec.scenario.model.a(), 2.0);
    }

    #[test]
    fn substeps_and_total_time() {
        let text = r#"
            [model]
            kind = "double_well"
            a = 10
            b = 0.5
            [timing]
            dt = 1e-4
            substeps = 1000
            total_time = 100
            [grid]
            radius = 3.0
            [run]
            replicas = 3
            seed = 7
            filters = ["g1:200"]
            [sweep]
            axis = "substeps"
            values = [5, 1000]
        "#;
        let spec = parse_config(text).unwrap();
        assert_eq!(spec.scenario.steps, 1000);
        assert_eq!(spec.seeds, vec![7, 8, 9]);
        assert_eq!(spec.reference, FilterKind::FullFpf { n: 1000 });
        assert_eq!(spec.scenario_for(5, 8).unwrap().steps, 200_000);
        assert_eq!(spec.with_seed(20).seeds, vec![20, 21, 22]);
    }

    #[test]
    fn fractional_window_names_the_field() {
        assert_eq!(
            err_field(&OU.replace("h = 1.0", "h = 1.0\ndt = 0.3")),
            "timing.h"
        );
    }

    #[test]
    fn validation_errors_name_their_field() {
        assert_eq!(err_field(&OU.replace("\"ou\"", "\"lorenz\"")), "model.kind");
        assert_eq!(err_field(&OU.replace("b = 1.0", "b = -1.0")), "model.b");
        assert_eq!(
            err_field(&OU.replace("enkf:100", "enkf:x")),
            "run.filters[1]"
        );
        assert_eq!(
            err_field(&OU.replace("[\"kf\", \"enkf:100\"]", "[]")),
            "run.filters"
        );
        assert_eq!(
            err_field(&OU.replace("radius = 6.0", "radius = 2.0")),
            "scenario"
        );
        let sweep = format!("{OU}\n[sweep]\naxis = \"resolution\"\nvalues = [10, 5]\n");
        assert_eq!(err_field(&sweep), "sweep.values");
        let kf = format!("{OU}\n[sweep]\naxis = \"resolution\"\nvalues = [10, 50]\n");
        assert_eq!(err_field(&kf), "run.filters[0]");
    }

    #[test]
    fn syntax_errors_report_a_line() {
        let err = parse_config("[model]\nkind = \n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax(_)));
        assert!(err.to_string().contains("line 2"), "{err}");
        let unknown = parse_config(&OU.replace("steps = 20", "steps = 20\nstep = 3")).unwrap_err();
        assert!(unknown.to_string().contains("step"), "{unknown}");
    }

    #[test]
    fn hash_tracks_every_setting() {
        let a = parse_config(OU).unwrap();
        assert_eq!(a.hash(), parse_config(OU).unwrap().hash());
        assert_ne!(a.hash(), a.clone().with_seed(2).hash());
        let b = parse_config(&OU.replace("enkf:100", "enkf:200")).unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
