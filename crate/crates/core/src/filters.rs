//! One filtering run end to end: initial law, forecast/update alternation for
//! each filter kind, and the emitted [`FilterTrace`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::ensemble::{
    enkf_step, kalman_filter_step, particle_filter_step, sample_moments, Ensemble, ParticleCloud,
};
use crate::error::{Error, Result};
use crate::fokker_planck::{build_generator, build_propagator, propagate, Propagator};
use crate::grid::{DensityField, Grid1D};
use crate::metrics::{functional_distance, FilterTrace, TestFunctional};
use crate::quadrature::{mass, moments, normalize, MomentPair};
use crate::rng::{Stream, StreamSet, MEMBER_BLOCK};
use crate::sde::{
    invariant_density, invariant_tail_mass, simulate_truth_and_obs, ModelKind, ObsModel,
    ObservationSequence, SdeModel, TruthPath, Window,
};
use crate::updates::{bayes_update, dmfenkf_update, g1_update, g2_update, ConvolutionRule};

/// Largest initial-law mass allowed outside `[-R, R]`.
pub const TAIL_BOUND: f64 = 1e-8;
/// Density traces must keep unit mass to this tolerance.
const MASS_TOL: f64 = 1e-8;
/// Nodes of the table used to sample the invariant law by inverse CDF.
const SAMPLER_NODES: usize = 8001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    FullFpf { n: usize },
    Dmfenkf { n: usize, rule: ConvolutionRule },
    MfenkfG1 { n: usize },
    MfenkfG2 { n: usize },
    Enkf { members: usize },
    Kalman,
    Particle { particles: usize },
}

impl FilterKind {
    /// Grid size of the density filters.
    pub fn grid_size(&self) -> Option<usize> {
        match *self {
            FilterKind::FullFpf { n }
            | FilterKind::Dmfenkf { n, .. }
            | FilterKind::MfenkfG1 { n }
            | FilterKind::MfenkfG2 { n } => Some(n),
            _ => None,
        }
    }

    /// Degrees of freedom: grid nodes, members or particles.
    pub fn resolution(&self) -> Option<usize> {
        match *self {
            FilterKind::Enkf { members } => Some(members),
            FilterKind::Particle { particles } => Some(particles),
            FilterKind::Kalman => None,
            _ => self.grid_size(),
        }
    }

    /// The same kind at another resolution; `None` for the Kalman filter.
    pub fn with_resolution(&self, r: usize) -> Option<FilterKind> {
        Some(match *self {
            FilterKind::FullFpf { .. } => FilterKind::FullFpf { n: r },
            FilterKind::Dmfenkf { rule, .. } => FilterKind::Dmfenkf { n: r, rule },
            FilterKind::MfenkfG1 { .. } => FilterKind::MfenkfG1 { n: r },
            FilterKind::MfenkfG2 { .. } => FilterKind::MfenkfG2 { n: r },
            FilterKind::Enkf { .. } => FilterKind::Enkf { members: r },
            FilterKind::Particle { .. } => FilterKind::Particle { particles: r },
            FilterKind::Kalman => return None,
        })
    }

    /// Label without the resolution.
    pub fn family(&self) -> &'static str {
        match self {
            FilterKind::FullFpf { .. } => "full_fpf",
            FilterKind::Dmfenkf {
                rule: ConvolutionRule::TrapezoidDirect,
                ..
            } => "dmfenkf",
            FilterKind::Dmfenkf {
                rule: ConvolutionRule::FftRiemann,
                ..
            } => "dmfenkf_fft",
            FilterKind::MfenkfG1 { .. } => "g1",
            FilterKind::MfenkfG2 { .. } => "g2",
            FilterKind::Enkf { .. } => "enkf",
            FilterKind::Kalman => "kf",
            FilterKind::Particle { .. } => "pf",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.resolution() {
            Some(r) => write!(f, "{}:{}", self.family(), r),
            None => f.write_str(self.family()),
        }
    }
}

/// Parses labels such as `full_fpf:1000`, `dmfenkf_fft:200`, `enkf:100` or `kf`.
impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, res) = match s.split_once(':') {
            Some((f, r)) => (f.trim(), Some(r.trim())),
            None => (s, None),
        };
        let res = match res {
            None => None,
            Some(r) => match r.parse::<usize>() {
                Ok(v) if v > 0 => Some(v),
                _ => return Err(Error::FilterSpec(s.to_string())),
            },
        };
        let need = |kind: &'static str| res.ok_or(Error::MissingResolution { kind });
        let kind = match family {
            "full_fpf" | "fpf" => FilterKind::FullFpf {
                n: need("full_fpf")?,
            },
            "dmfenkf" => FilterKind::Dmfenkf {
                n: need("dmfenkf")?,
                rule: ConvolutionRule::TrapezoidDirect,
            },
            "dmfenkf_fft" => FilterKind::Dmfenkf {
                n: need("dmfenkf_fft")?,
                rule: ConvolutionRule::FftRiemann,
            },
            "g1" => FilterKind::MfenkfG1 { n: need("g1")? },
            "g2" => FilterKind::MfenkfG2 { n: need("g2")? },
            "enkf" => FilterKind::Enkf {
                members: need("enkf")?,
            },
            "pf" => FilterKind::Particle {
                particles: need("pf")?,
            },
            "kf" if res.is_none() => FilterKind::Kalman,
            _ => return Err(Error::FilterSpec(s.to_string())),
        };
        if let Some(n) = kind.grid_size() {
            if n < 5 {
                return Err(Error::FilterSpec(s.to_string()));
            }
        }
        if matches!(
            kind,
            FilterKind::Enkf { members: 1 } | FilterKind::Particle { particles: 1 }
        ) {
            return Err(Error::FilterSpec(s.to_string()));
        }
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitLaw {
    /// The model's stationary density.
    Invariant,
    Gaussian {
        mean: f64,
        var: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub model: SdeModel,
    pub obs: ObsModel,
    pub window: Window,
    /// Number of observations `J`.
    pub steps: usize,
    pub radius: f64,
    pub init: InitLaw,
    /// Truth initial state; drawn from `init` when absent.
    pub u0: Option<f64>,
    pub seed: u64,
    /// Leading observation times excluded from error metrics.
    pub burn_in: usize,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Empty("observation count"));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidParameter {
                name: "radius",
                value: self.radius,
                reason: "must be positive and finite",
            });
        }
        if let InitLaw::Gaussian { mean, var } = self.init {
            if !mean.is_finite() || !(var > 0.0) || !var.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "init.var",
                    value: var,
                    reason: "Gaussian initial law needs finite mean and positive variance",
                });
            }
        }
        self.window.check_model(&self.model)?;
        let tail = init_tail_mass(self);
        if tail > TAIL_BOUND {
            return Err(Error::TailMass {
                mass: tail,
                radius: self.radius,
                bound: TAIL_BOUND,
            });
        }
        Ok(())
    }

    /// Canonical text of every field that influences results.
    pub fn canonical(&self) -> String {
        let init = match self.init {
            InitLaw::Invariant => "invariant".to_string(),
            InitLaw::Gaussian { mean, var } => format!("gaussian({mean},{var})"),
        };
        let u0 = self.u0.map_or("drawn".to_string(), |u| u.to_string());
        format!(
            "model={};a={};b={};H={};gamma={};h={};dt={};scheme={};steps={};radius={};init={};u0={};seed={};burn_in={}",
            self.model.label(),
            self.model.a(),
            self.model.b(),
            self.obs.coeff(),
            self.obs.gamma(),
            self.window.h(),
            self.window.dt(),
            self.window.scheme().label(),
            self.steps,
            self.radius,
            init,
            u0,
            self.seed,
            self.burn_in,
        )
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn with_seed(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            seed,
            ..self.clone()
        }
    }
}

fn init_tail_mass(cfg: &ScenarioConfig) -> f64 {
    match cfg.init {
        InitLaw::Invariant => invariant_tail_mass(&cfg.model, cfg.radius),
        InitLaw::Gaussian { mean, var } => {
            let scale = (2.0 * var).sqrt();
            0.5 * (libm::erfc((cfg.radius + mean) / scale)
                + libm::erfc((cfg.radius - mean) / scale))
        }
    }
}

pub fn initial_density(cfg: &ScenarioConfig, grid: &Arc<Grid1D>) -> Result<DensityField> {
    cfg.validate()?;
    match cfg.init {
        InitLaw::Invariant => invariant_density(&cfg.model, grid),
        InitLaw::Gaussian { mean, var } => {
            let v = grid
                .nodes()
                .iter()
                .map(|x| (-(x - mean) * (x - mean) / (2.0 * var)).exp())
                .collect();
            normalize(v, grid)
        }
    }
}

/// Moments of the initial law.
pub fn initial_moments(cfg: &ScenarioConfig) -> MomentPair {
    match cfg.init {
        InitLaw::Gaussian { mean, var } => MomentPair { mean, var },
        InitLaw::Invariant => match cfg.model.kind() {
            ModelKind::Ou => MomentPair {
                mean: 0.0,
                var: cfg.model.b() / cfg.model.a(),
            },
            ModelKind::DoubleWell => {
                let g = Grid1D::shared(SAMPLER_NODES, cfg.radius).expect("validated radius");
                moments(&invariant_density(&cfg.model, &g).expect("valid model"))
            }
        },
    }
}

/// `count` i.i.d. draws from the initial law, from the `Initial` stream at
/// `step`.
fn draw_initial(cfg: &ScenarioConfig, count: usize, step: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let streams = StreamSet::new(cfg.seed);
    let mut out = Vec::with_capacity(count);
    let sampler = match (cfg.init, cfg.model.kind()) {
        (InitLaw::Invariant, ModelKind::DoubleWell) => Some(InverseCdf::invariant(cfg)?),
        _ => None,
    };
    let gauss = initial_moments(cfg);
    for block in 0..count.div_ceil(MEMBER_BLOCK) {
        let mut rng = streams.block_rng(Stream::Initial, step, block as u64);
        let take = MEMBER_BLOCK.min(count - block * MEMBER_BLOCK);
        for _ in 0..take {
            let x = match &sampler {
                Some(s) => s.sample(rng.random::<f64>()),
                None => gauss.mean + gauss.std() * rng.sample::<f64, _>(StandardNormal),
            };
            out.push(x);
        }
    }
    Ok(out)
}

pub fn initial_ensemble(cfg: &ScenarioConfig, members: usize) -> Result<Ensemble> {
    Ensemble::new(draw_initial(cfg, members, 0)?)
}

/// The truth's starting state: `cfg.u0`, or one draw from the initial law.
pub fn truth_initial_state(cfg: &ScenarioConfig) -> Result<f64> {
    match cfg.u0 {
        Some(u) => Ok(u),
        None => Ok(draw_initial(cfg, 1, 1)?[0]),
    }
}

/// Piecewise-linear inverse of a tabulated CDF.
struct InverseCdf {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdf {
    fn invariant(cfg: &ScenarioConfig) -> Result<Self> {
        let g = Grid1D::shared(SAMPLER_NODES, cfg.radius)?;
        let p = invariant_density(&cfg.model, &g)?;
        let v = p.values();
        let dx = g.dx();
        let mut cdf = Vec::with_capacity(v.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in v.windows(2) {
            acc += 0.5 * dx * (w[0] + w[1]);
            cdf.push(acc);
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Ok(Self {
            nodes: g.nodes().to_vec(),
            cdf,
        })
    }

    fn sample(&self, u: f64) -> f64 {
        let i = self
            .cdf
            .partition_point(|c| *c <= u)
            .clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.nodes[i - 1] + w * (self.nodes[i] - self.nodes[i - 1])
    }
}

/// Truth path and observations for `cfg`.
pub fn simulate(cfg: &ScenarioConfig) -> Result<(TruthPath, ObservationSequence)> {
    cfg.validate()?;
    let u0 = truth_initial_state(cfg)?;
    simulate_truth_and_obs(&cfg.model, &cfg.obs, cfg.steps, &cfg.window, u0, cfg.seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct PropagatorKey {
    model: ModelKind,
    a: u64,
    b: u64,
    n: usize,
    radius: u64,
    h: u64,
}

type Slot = Arc<Mutex<Option<Arc<Propagator>>>>;

/// Shared `exp(h L)` matrices keyed by model, grid and window.
#[derive(Debug, Default)]
pub struct PropagatorCache {
    slots: Mutex<HashMap<PropagatorKey, Slot>>,
}

impl PropagatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds on first use; concurrent callers for one key wait for a single
    /// build, other keys proceed independently.
    pub fn get(&self, model: &SdeModel, grid: &Arc<Grid1D>, h: f64) -> Result<Arc<Propagator>> {
        let key = PropagatorKey {
            model: model.kind(),
            a: model.a().to_bits(),
            b: model.b().to_bits(),
            n: grid.len(),
            radius: grid.radius().to_bits(),
            h: h.to_bits(),
        };
        let slot = self
            .slots
            .lock()
            .expect("propagator cache poisoned")
            .entry(key)
            .or_default()
            .clone();
        let mut guard = slot.lock().expect("propagator slot poisoned");
        if let Some(p) = guard.as_ref() {
            return Ok(p.clone());
        }
        let built = Arc::new(build_propagator(&build_generator(model, grid)?, h)?);
        *guard = Some(built.clone());
        Ok(built)
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("propagator cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs `kind` over every observation in `obs`, building propagators afresh.
pub fn run_filter(
    kind: FilterKind,
    cfg: &ScenarioConfig,
    obs: &ObservationSequence,
    truth: &TruthPath,
) -> Result<FilterTrace> {
    run_filter_cached(kind, cfg, obs, truth, &PropagatorCache::new())
}

pub fn run_filter_cached(
    kind: FilterKind,
    cfg: &ScenarioConfig,
    obs: &ObservationSequence,
    truth: &TruthPath,
    cache: &PropagatorCache,
) -> Result<FilterTrace> {
    cfg.validate()?;
    if obs.len() != truth.len() {
        return Err(Error::LengthMismatch(obs.len(), truth.len()));
    }
    let mut trace = FilterTrace::new(kind.to_string(), cfg.seed, cfg.fingerprint());
    let record = |trace: &mut FilterTrace, j: usize, m: MomentPair| {
        trace.push(
            truth.times()[j],
            m.mean,
            m.var,
            truth.states()[j],
            obs.values()[j],
        );
    };
    let h = cfg.window.h();
    let streams = StreamSet::new(cfg.seed);

    match kind {
        FilterKind::FullFpf { n }
        | FilterKind::Dmfenkf { n, .. }
        | FilterKind::MfenkfG1 { n }
        | FilterKind::MfenkfG2 { n } => {
            let grid = Grid1D::shared(n, cfg.radius)?;
            let prop = cache.get(&cfg.model, &grid, h)?;
            let mut p = initial_density(cfg, &grid)?;
            for (j, &y) in obs.values().iter().enumerate() {
                let step = || -> Result<DensityField> {
                    let forecast = propagate(&p, &prop)?.density;
                    match kind {
                        FilterKind::FullFpf { .. } => bayes_update(&forecast, y, &cfg.obs),
                        FilterKind::Dmfenkf { rule, .. } => {
                            dmfenkf_update(&forecast, y, &cfg.obs, rule)
                        }
                        FilterKind::MfenkfG1 { .. } => g1_update(&forecast, y, &cfg.obs),
                        _ => g2_update(&forecast, y, &cfg.obs),
                    }
                };
                p = step().map_err(|e| e.at_step(j + 1))?;
                debug_assert!((mass(&p) - 1.0).abs() <= MASS_TOL);
                debug_assert!(p.values().iter().all(|v| *v >= 0.0));
                record(&mut trace, j, moments(&p));
            }
        }
        FilterKind::Enkf { members } => {
            let mut e = initial_ensemble(cfg, members)?;
            for (j, &y) in obs.values().iter().enumerate() {
                e = enkf_step(
                    &e,
                    &cfg.model,
                    &cfg.obs,
                    y,
                    &cfg.window,
                    &streams,
                    j as u64 + 1,
                )
                .map_err(|e| e.at_step(j + 1))?;
                record(&mut trace, j, sample_moments(&e));
            }
        }
        FilterKind::Kalman => {
            let mut m = initial_moments(cfg);
            for (j, &y) in obs.values().iter().enumerate() {
                m = kalman_filter_step(&m, &cfg.model, &cfg.obs, y, h)
                    .map_err(|e| e.at_step(j + 1))?;
                record(&mut trace, j, m);
            }
        }
        FilterKind::Particle { particles } => {
            let mut cloud = ParticleCloud::uniform(draw_initial(cfg, particles, 0)?)?;
            for (j, &y) in obs.values().iter().enumerate() {
                let s = particle_filter_step(
                    &cloud,
                    &cfg.model,
                    &cfg.obs,
                    y,
                    &cfg.window,
                    &streams,
                    j as u64 + 1,
                )
                .map_err(|e| e.at_step(j + 1))?;
                record(&mut trace, j, s.posterior);
                cloud = s.cloud;
            }
        }
    }
    Ok(trace)
}

/// Trace distance between two filter kinds for each test functional, over
/// independent observation realizations (one per seed), after burn-in.
pub fn measure_distance_estimate(
    a: FilterKind,
    b: FilterKind,
    cfg: &ScenarioConfig,
    functionals: &[TestFunctional],
    seeds: &[u64],
    cache: &PropagatorCache,
) -> Result<Vec<(TestFunctional, f64)>> {
    if seeds.len() < 2 {
        return Err(Error::Empty("need at least two seeds"));
    }
    let mut ta = Vec::with_capacity(seeds.len());
    let mut tb = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let c = cfg.with_seed(seed);
        let (truth, obs) = simulate(&c)?;
        ta.push(run_filter_cached(a, &c, &obs, &truth, cache)?.after(c.burn_in));
        tb.push(run_filter_cached(b, &c, &obs, &truth, cache)?.after(c.burn_in));
    }
    functionals
        .iter()
        .map(|&f| Ok((f, functional_distance(&ta, &tb, f)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::rel_rmse;
    use crate::sde::Scheme;

    fn ou_cfg(steps: usize, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            model: SdeModel::ou(1.0, 1.0).unwrap(),
            obs: ObsModel::new(1.0, 1.0).unwrap(),
            window: Window::new(1.0, 1.0, Scheme::ExactOu).unwrap(),
            steps,
            radius: 6.0,
            init: InitLaw::Invariant,
            u0: None,
            seed,
            burn_in: 10,
        }
    }

    #[test]
    fn filter_labels_round_trip() {
        for s in [
            "full_fpf:1000",
            "dmfenkf:200",
            "dmfenkf_fft:200",
            "g1:40",
            "g2:40",
            "enkf:100",
            "kf",
            "pf:500",
        ] {
            let k: FilterKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        for bad in [
            "",
            "kf:3",
            "enkf",
            "enkf:0",
            "enkf:1",
            "dmfenkf:4",
            "g3:10",
            "pf:x",
        ] {
            assert!(bad.parse::<FilterKind>().is_err(), "{bad}");
        }
    }

    #[test]
    fn invariant_initial_laws_agree() {
        let cfg = ou_cfg(5, 1);
        let g = Grid1D::shared(401, 6.0).unwrap();
        let m = moments(&initial_density(&cfg, &g).unwrap());
        assert!(m.mean.abs() < 1e-10 && (m.var - 1.0).abs() < 1e-4);

        let n = 100_000;
        let e = sample_moments(&initial_ensemble(&cfg, n).unwrap());
        assert!(e.mean.abs() < 4.0 * (1.0 / n as f64).sqrt());
        assert!((e.var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());

        let dw = ScenarioConfig {
            model: SdeModel::double_well(10.0, 0.5).unwrap(),
            window: Window::new(0.1, 1e-4, Scheme::EulerMaruyama).unwrap(),
            radius: 3.0,
            ..cfg
        };
        let exact = initial_moments(&dw);
        let e = sample_moments(&initial_ensemble(&dw, n).unwrap());
        assert!((e.mean - exact.mean).abs() < 4.0 * (exact.var / n as f64).sqrt());
        // Bimodal law: variance of the sample variance is (m4 - var^2) / n,
        // bounded here by 2 var^2 / n.
        assert!((e.var - exact.var).abs() < 4.0 * exact.var * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn gaussian_init_and_tail_check() {
        let mut cfg = ou_cfg(5, 1);
        cfg.init = InitLaw::Gaussian {
            mean: 0.0,
            var: 1.0,
        };
        let e = sample_moments(&initial_ensemble(&cfg, 100_000).unwrap());
        assert!(e.mean.abs() < 4.0 * (1e-5f64).sqrt());
        cfg.init = InitLaw::Gaussian {
            mean: 5.0,
            var: 1.0,
        };
        assert!(matches!(cfg.validate(), Err(Error::TailMass { .. })));
    }

    #[test]
    fn kf_and_full_fpf_agree_on_the_linear_model() {
        let cfg = ou_cfg(120, 3);
        let (truth, obs) = simulate(&cfg).unwrap();
        let kf = run_filter(FilterKind::Kalman, &cfg, &obs, &truth)
            .unwrap()
            .after(10);
        let fpf = run_filter(FilterKind::FullFpf { n: 401 }, &cfg, &obs, &truth)
            .unwrap()
            .after(10);
        let g = Grid1D::new(401, 6.0).unwrap();
        let tol = 10.0 * g.dx() * g.dx();
        assert!(rel_rmse(&fpf.means, &kf.means).unwrap() < tol);
        assert!(rel_rmse(&fpf.vars, &kf.vars).unwrap() < tol);
    }

    #[test]
    fn g1_and_g2_traces_coincide_on_the_linear_model() {
        let cfg = ou_cfg(60, 4);
        let (truth, obs) = simulate(&cfg).unwrap();
        let cache = PropagatorCache::new();
        let a =
            run_filter_cached(FilterKind::MfenkfG1 { n: 200 }, &cfg, &obs, &truth, &cache).unwrap();
        let b =
            run_filter_cached(FilterKind::MfenkfG2 { n: 200 }, &cfg, &obs, &truth, &cache).unwrap();
        assert_eq!(cache.len(), 1);
        let g = Grid1D::new(200, 6.0).unwrap();
        let tol = 10.0 * g.dx() * g.dx();
        for j in 0..a.len() {
            assert!((a.means[j] - b.means[j]).abs() < tol);
            assert!((a.vars[j] - b.vars[j]).abs() < tol);
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = ou_cfg(30, 5);
        let (truth, obs) = simulate(&cfg).unwrap();
        for kind in ["enkf:300", "pf:300", "dmfenkf:100", "kf"] {
            let k: FilterKind = kind.parse().unwrap();
            let a = run_filter(k, &cfg, &obs, &truth).unwrap();
            let b = run_filter(k, &cfg, &obs, &truth).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 30);
            assert!(a.validate().is_ok());
        }
    }

    #[test]
    fn kalman_rejects_the_double_well() {
        let cfg = ScenarioConfig {
            model: SdeModel::double_well(10.0, 0.5).unwrap(),
            window: Window::new(0.1, 0.01, Scheme::EulerMaruyama).unwrap(),
            radius: 3.0,
            ..ou_cfg(5, 1)
        };
        let (truth, obs) = simulate(&cfg).unwrap();
        let err = run_filter(FilterKind::Kalman, &cfg, &obs, &truth).unwrap_err();
        assert!(matches!(err, Error::AtStep { step: 1, .. }), "{err:?}");
    }

    #[test]
    fn fingerprint_tracks_every_field() {
        let a = ou_cfg(10, 1);
        assert_eq!(a.fingerprint(), ou_cfg(10, 1).fingerprint());
        assert_ne!(a.fingerprint(), a.with_seed(2).fingerprint());
        assert_ne!(a.fingerprint(), ou_cfg(11, 1).fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn distance_estimate_is_zero_against_itself() {
        let cfg = ou_cfg(20, 1);
        let cache = PropagatorCache::new();
        let f = [TestFunctional::Identity, TestFunctional::Square];
        let d = measure_distance_estimate(
            FilterKind::Kalman,
            FilterKind::Kalman,
            &cfg,
            &f,
            &[1, 2],
            &cache,
        )
        .unwrap();
        assert!(d.iter().all(|(_, v)| *v == 0.0));
        let d = measure_distance_estimate(
            FilterKind::Kalman,
            FilterKind::Enkf { members: 50 },
            &cfg,
            &f,
            &[1, 2],
            &cache,
        )
        .unwrap();
        assert!(d.iter().all(|(_, v)| *v > 0.0));
    }
}
