//! Scalar diffusions `du = F(u) dt + sqrt(2b) dW`, their invariant densities,
//! and the truth/observation simulator.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid1D};
use crate::quadrature::{normalize, MomentPair};
use crate::rng::{Stream, StreamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// `F(u) = -a u`.
    Ou,
    /// `F(u) = a u (1 - u^2) / (1 + u^2)`.
    DoubleWell,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Ou => "ou",
            ModelKind::DoubleWell => "double_well",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "ou" => Some(ModelKind::Ou),
            "double_well" => Some(ModelKind::DoubleWell),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeModel {
    kind: ModelKind,
    a: f64,
    b: f64,
}

impl SdeModel {
    pub fn new(kind: ModelKind, a: f64, b: f64) -> Result<Self> {
        positive("a", a)?;
        positive("b", b)?;
        Ok(Self { kind, a, b })
    }

    pub fn ou(a: f64, b: f64) -> Result<Self> {
        Self::new(ModelKind::Ou, a, b)
    }

    pub fn double_well(a: f64, b: f64) -> Result<Self> {
        Self::new(ModelKind::DoubleWell, a, b)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn label(&self) -> &'static str {
        self.kind.label()
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Diffusion coefficient `b`.
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn is_linear(&self) -> bool {
        self.kind == ModelKind::Ou
    }

    pub fn drift(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::Ou => drift_ou(u, self.a),
            ModelKind::DoubleWell => drift_double_well(u, self.a),
        }
    }
}

pub fn drift_ou(u: f64, a: f64) -> f64 {
    -a * u
}

pub fn drift_double_well(u: f64, a: f64) -> f64 {
    let u2 = u * u;
    a * u * (1.0 - u2) / (1.0 + u2)
}

/// Linear observation `y = H u + eta`, `eta ~ N(0, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsModel {
    coeff: f64,
    gamma: f64,
}

impl ObsModel {
    pub fn new(coeff: f64, gamma: f64) -> Result<Self> {
        if !coeff.is_finite() || coeff == 0.0 {
            return Err(Error::InvalidParameter {
                name: "H",
                value: coeff,
                reason: "must be finite and nonzero",
            });
        }
        positive("gamma", gamma)?;
        Ok(Self { coeff, gamma })
    }

    /// The coefficient `H`.
    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// How one observation window is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    EulerMaruyama,
    /// Draw from the exact Gaussian transition; OU only.
    ExactOu,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::EulerMaruyama => "euler_maruyama",
            Scheme::ExactOu => "exact_ou",
        }
    }
}

/// Observation window `h = substeps * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    h: f64,
    dt: f64,
    substeps: usize,
    scheme: Scheme,
}

impl Window {
    pub fn new(h: f64, dt: f64, scheme: Scheme) -> Result<Self> {
        positive("h", h)?;
        positive("dt", dt)?;
        let ratio = h / dt;
        let substeps = ratio.round();
        if substeps < 1.0 || (ratio - substeps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::NonIntegerSubsteps { h, dt });
        }
        Ok(Self {
            h,
            dt,
            substeps: substeps as usize,
            scheme,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Number of standard normals one window consumes.
    pub fn draws_per_window(&self) -> usize {
        match self.scheme {
            Scheme::EulerMaruyama => self.substeps,
            Scheme::ExactOu => 1,
        }
    }

    /// Advance `u` across one window with noise from `rng`.
    pub fn advance(&self, u: f64, model: &SdeModel, rng: &mut impl Rng) -> f64 {
        match self.scheme {
            Scheme::EulerMaruyama => (0..self.substeps).fold(u, |v, _| {
                euler_maruyama_step(v, model, self.dt, rng.sample(StandardNormal))
            }),
            Scheme::ExactOu => {
                let t = ou_exact_transition(u, model.a, model.b, self.h);
                t.mean + t.std() * rng.sample::<f64, _>(StandardNormal)
            }
        }
    }

    /// Fails unless the scheme is usable for `model`.
    pub fn check_model(&self, model: &SdeModel) -> Result<()> {
        if self.scheme == Scheme::ExactOu && !model.is_linear() {
            return Err(Error::UnsupportedModel {
                op: "exact transition scheme",
                label: model.label(),
            });
        }
        Ok(())
    }
}

pub fn euler_maruyama_step(u: f64, model: &SdeModel, dt: f64, noise: f64) -> f64 {
    u + dt * model.drift(u) + (2.0 * model.b * dt).sqrt() * noise
}

/// Mean and variance of `u_h` given `u_0 = u` for the OU process.
pub fn ou_exact_transition(u: f64, a: f64, b: f64, h: f64) -> MomentPair {
    let decay = (-a * h).exp();
    MomentPair {
        mean: decay * u,
        var: (b / a) * -(-2.0 * a * h).exp_m1(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthPath {
    times: Vec<f64>,
    states: Vec<f64>,
    seed: u64,
}

impl TruthPath {
    pub fn new(times: Vec<f64>, states: Vec<f64>, seed: u64) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::LengthMismatch(times.len(), states.len()));
        }
        if times.is_empty() {
            return Err(Error::Empty("truth path"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter {
                name: "times",
                value: f64::NAN,
                reason: "must be strictly increasing",
            });
        }
        Ok(Self {
            times,
            states,
            seed,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    values: Vec<f64>,
    seed: u64,
}

impl ObservationSequence {
    pub fn new(values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("observation sequence"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation sequence"));
        }
        Ok(Self { values, seed })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Truth states and observations at `t_j = j h`, `j = 1..=steps`.
///
/// Window `j` takes its dynamical noise from the `Dynamics` stream at step
/// `j` and its observation noise from the `Observation` stream, so the two
/// are independent and any prefix of a longer run is reproduced exactly.
pub fn simulate_truth_and_obs(
    model: &SdeModel,
    obs: &ObsModel,
    steps: usize,
    window: &Window,
    u0: f64,
    seed: u64,
) -> Result<(TruthPath, ObservationSequence)> {
    if steps == 0 {
        return Err(Error::Empty("observation count"));
    }
    window.check_model(model)?;
    let streams = StreamSet::new(seed);
    let noise_sd = obs.gamma.sqrt();
    let mut u = u0;
    let mut times = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    let mut values = Vec::with_capacity(steps);
    for j in 1..=steps {
        u = window.advance(u, model, &mut streams.rng(Stream::Dynamics, j as u64));
        if !u.is_finite() {
            return Err(Error::NonFinite("truth path").at_step(j));
        }
        let eta: f64 = streams
            .rng(Stream::Observation, j as u64)
            .sample(StandardNormal);
        times.push(j as f64 * window.h);
        states.push(u);
        values.push(obs.coeff * u + noise_sd * eta);
    }
    Ok((
        TruthPath::new(times, states, seed)?,
        ObservationSequence::new(values, seed)?,
    ))
}

/// Unnormalized `exp(-(V - min V) / b)` at `nodes`, `V' = -F`.
fn invariant_profile(model: &SdeModel, nodes: &[f64]) -> Vec<f64> {
    let potential: Vec<f64> = match model.kind {
        ModelKind::Ou => nodes.iter().map(|x| 0.5 * model.a * x * x).collect(),
        ModelKind::DoubleWell => {
            let mut v = Vec::with_capacity(nodes.len());
            let mut acc = 0.0;
            v.push(acc);
            for w in nodes.windows(2) {
                acc -= 0.5 * (w[1] - w[0]) * (model.drift(w[0]) + model.drift(w[1]));
                v.push(acc);
            }
            v
        }
    };
    let vmin = potential.iter().copied().fold(f64::INFINITY, f64::min);
    potential
        .iter()
        .map(|v| (-(v - vmin) / model.b).exp())
        .collect()
}

/// The stationary density `exp(-V/b)` sampled on `grid`.
pub fn invariant_density(model: &SdeModel, grid: &Arc<Grid1D>) -> Result<DensityField> {
    normalize(invariant_profile(model, grid.nodes()), grid)
}

/// Fraction of the invariant law lying outside `[-radius, radius]`.
pub fn invariant_tail_mass(model: &SdeModel, radius: f64) -> f64 {
    match model.kind {
        ModelKind::Ou => {
            let sd = (model.b / model.a).sqrt();
            libm::erfc(radius / (sd * std::f64::consts::SQRT_2))
        }
        ModelKind::DoubleWell => {
            // Far out the drift is ~ -a u, so 12 stationary OU widths past
            // the edge captures all representable tail mass.
            let outer = radius + 12.0 * (model.b / model.a).sqrt() + 1.0;
            let n = 40_001;
            let dx = 2.0 * outer / (n - 1) as f64;
            let nodes: Vec<f64> = (0..n).map(|i| -outer + i as f64 * dx).collect();
            let p = invariant_profile(model, &nodes);
            let (mut total, mut inside) = (0.0, 0.0);
            for i in 0..n - 1 {
                let cell = 0.5 * dx * (p[i] + p[i + 1]);
                total += cell;
                if nodes[i] >= -radius && nodes[i + 1] <= radius {
                    inside += cell;
                }
            }
            ((total - inside) / total).max(0.0)
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}
