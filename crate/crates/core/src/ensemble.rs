//! Sampling filters: the perturbed-observation EnKF, the closed-form Kalman
//! filter for the linear model, and a bootstrap particle filter.
//!
//! Members are grouped in blocks of [`MEMBER_BLOCK`]; each block draws from
//! its own counter-addressed generator, so results depend only on
//! `(seed, step, member)` and not on evaluation order.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quadrature::MomentPair;
use crate::rng::{Stream, StreamSet, MEMBER_BLOCK};
use crate::sde::{ou_exact_transition, ObsModel, SdeModel, Window};
use crate::updates::{kalman_gain, kalman_moment_update};

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<f64>,
}

impl Ensemble {
    pub fn new(members: Vec<f64>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::EnsembleTooSmall(members.len()));
        }
        if members.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ensemble member"));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[f64] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Sample mean and variance with divisor `N`.
pub fn sample_moments(e: &Ensemble) -> MomentPair {
    weighted_or_plain_moments(e.members(), None)
}

fn weighted_or_plain_moments(x: &[f64], w: Option<&[f64]>) -> MomentPair {
    let n = x.len() as f64;
    let mean = match w {
        Some(w) => x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>(),
        None => x.iter().sum::<f64>() / n,
    };
    let var = match w {
        Some(w) => x
            .iter()
            .zip(w)
            .map(|(x, w)| w * (x - mean) * (x - mean))
            .sum::<f64>(),
        None => x.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n,
    };
    MomentPair { mean, var }
}

/// Apply `f(member, rng)` in place, one generator per member block.
fn for_each_block(
    values: &mut [f64],
    streams: &StreamSet,
    stream: Stream,
    step: u64,
    mut f: impl FnMut(&mut f64, &mut rand_chacha::ChaCha8Rng),
) {
    for (b, chunk) in values.chunks_mut(MEMBER_BLOCK).enumerate() {
        let mut rng = streams.block_rng(stream, step, b as u64);
        for v in chunk {
            f(v, &mut rng);
        }
    }
}

/// Advance every member across one window with independent noise.
pub fn enkf_forecast(
    e: &Ensemble,
    model: &SdeModel,
    window: &Window,
    streams: &StreamSet,
    step: u64,
) -> Result<Ensemble> {
    window.check_model(model)?;
    let mut members = e.members.clone();
    for_each_block(
        &mut members,
        streams,
        Stream::EnsembleForecast,
        step,
        |v, rng| *v = window.advance(*v, model, rng),
    );
    Ensemble::new(members)
}

/// `v = (1 - KH) v_hat + K (y + eta)`, `eta ~ N(0, gamma)` per member, with
/// `K` from the forecast sample moments.
pub fn enkf_analysis(
    forecast: &Ensemble,
    obs: &ObsModel,
    y: f64,
    streams: &StreamSet,
    step: u64,
) -> Result<Ensemble> {
    if !y.is_finite() {
        return Err(Error::NonFinite("observation"));
    }
    let gain = kalman_gain(&sample_moments(forecast), obs);
    let c = gain.contraction(obs);
    let sd = obs.gamma().sqrt();
    let mut members = forecast.members.clone();
    for_each_block(
        &mut members,
        streams,
        Stream::Perturbation,
        step,
        |v, rng| {
            let eta: f64 = rng.sample(StandardNormal);
            *v = c * *v + gain.k * (y + sd * eta);
        },
    );
    Ensemble::new(members)
}

pub fn enkf_step(
    e: &Ensemble,
    model: &SdeModel,
    obs: &ObsModel,
    y: f64,
    window: &Window,
    streams: &StreamSet,
    step: u64,
) -> Result<Ensemble> {
    let forecast = enkf_forecast(e, model, window, streams, step)?;
    enkf_analysis(&forecast, obs, y, streams, step)
}

/// Exact OU forecast followed by the Kalman update.
pub fn kalman_filter_step(
    mom: &MomentPair,
    model: &SdeModel,
    obs: &ObsModel,
    y: f64,
    h: f64,
) -> Result<MomentPair> {
    Ok(kalman_moment_update(
        &kalman_forecast(mom, model, h)?,
        y,
        obs,
    ))
}

pub fn kalman_forecast(mom: &MomentPair, model: &SdeModel, h: f64) -> Result<MomentPair> {
    if !model.is_linear() {
        return Err(Error::UnsupportedModel {
            op: "Kalman filter",
            label: model.label(),
        });
    }
    let t = ou_exact_transition(mom.mean, model.a(), model.b(), h);
    let decay2 = (-2.0 * model.a() * h).exp();
    Ok(MomentPair {
        mean: t.mean,
        var: decay2 * mom.var + t.var,
    })
}

/// Weighted particles; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    particles: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleCloud {
    pub fn uniform(particles: Vec<f64>) -> Result<Self> {
        let n = particles.len();
        Self::new(particles, vec![1.0 / n as f64; n])
    }

    pub fn new(particles: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if particles.len() < 2 {
            return Err(Error::EnsembleTooSmall(particles.len()));
        }
        if particles.len() != weights.len() {
            return Err(Error::LengthMismatch(particles.len(), weights.len()));
        }
        if particles.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("particle cloud"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "weights",
                value: total,
                reason: "must be nonnegative and sum to one",
            });
        }
        Ok(Self { particles, weights })
    }

    pub fn particles(&self) -> &[f64] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn moments(&self) -> MomentPair {
        weighted_or_plain_moments(&self.particles, Some(&self.weights))
    }

    /// `1 / sum w^2`.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct ParticleStep {
    pub cloud: ParticleCloud,
    /// Weighted moments before any resampling.
    pub posterior: MomentPair,
    pub resampled: bool,
}

/// Bootstrap step: propagate, reweight by the likelihood, and resample
/// multinomially when the effective sample size drops below `N / 2`.
pub fn particle_filter_step(
    cloud: &ParticleCloud,
    model: &SdeModel,
    obs: &ObsModel,
    y: f64,
    window: &Window,
    streams: &StreamSet,
    step: u64,
) -> Result<ParticleStep> {
    window.check_model(model)?;
    let mut particles = cloud.particles.clone();
    for_each_block(
        &mut particles,
        streams,
        Stream::EnsembleForecast,
        step,
        |v, rng| *v = window.advance(*v, model, rng),
    );

    let log_w: Vec<f64> = particles
        .iter()
        .zip(&cloud.weights)
        .map(|(x, w)| {
            let r = y - obs.coeff() * x;
            w.ln() - r * r / (2.0 * obs.gamma())
        })
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::WeightCollapse);
    }
    let mut weights: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::WeightCollapse);
    }
    weights.iter_mut().for_each(|w| *w /= total);

    let weighted = ParticleCloud { particles, weights };
    let posterior = weighted.moments();
    let n = weighted.len();
    if weighted.effective_size() >= n as f64 / 2.0 {
        return Ok(ParticleStep {
            cloud: weighted,
            posterior,
            resampled: false,
        });
    }

    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in &weighted.weights {
        acc += w;
        cdf.push(acc);
    }
    let mut picks = vec![0.0; n];
    for_each_block(&mut picks, streams, Stream::Resample, step, |v, rng| {
        let u: f64 = rng.random::<f64>() * acc;
        let i = cdf.partition_point(|c| *c <= u).min(n - 1);
        *v = weighted.particles[i];
    });
    Ok(ParticleStep {
        cloud: ParticleCloud::uniform(picks)?,
        posterior,
        resampled: true,
    })
}
