//! Error measures between filter traces and log-log rate fits.

use crate::error::{Error, Result};

/// Posterior mean and variance of one filter at every observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    pub label: String,
    pub seed: u64,
    pub config_hash: String,
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
    pub truth: Vec<f64>,
    pub obs: Vec<f64>,
}

impl FilterTrace {
    pub fn new(label: impl Into<String>, seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            seed,
            config_hash: config_hash.into(),
            times: Vec::new(),
            means: Vec::new(),
            vars: Vec::new(),
            truth: Vec::new(),
            obs: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, mean: f64, var: f64, truth: f64, obs: f64) {
        self.times.push(t);
        self.means.push(mean);
        self.vars.push(var);
        self.truth.push(truth);
        self.obs.push(obs);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Checks equal lengths and nonnegative variances.
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        for len in [
            self.means.len(),
            self.vars.len(),
            self.truth.len(),
            self.obs.len(),
        ] {
            if len != n {
                return Err(Error::LengthMismatch(len, n));
            }
        }
        if let Some(v) = self.vars.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "var",
                value: *v,
                reason: "trace variances must be nonnegative",
            });
        }
        Ok(())
    }

    /// The trace with the first `burn_in` times dropped.
    pub fn after(&self, burn_in: usize) -> FilterTrace {
        let k = burn_in.min(self.len());
        FilterTrace {
            label: self.label.clone(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            times: self.times[k..].to_vec(),
            means: self.means[k..].to_vec(),
            vars: self.vars[k..].to_vec(),
            truth: self.truth[k..].to_vec(),
            obs: self.obs[k..].to_vec(),
        }
    }
}

/// `||e - r|| / ||r||` in the Euclidean norm.
pub fn rel_rmse(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::LengthMismatch(estimate.len(), reference.len()));
    }
    if estimate.is_empty() {
        return Err(Error::Empty("rel_rmse input"));
    }
    let num: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - r) * (e - r))
        .sum();
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Moment functionals used as test functions in the trace distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestFunctional {
    /// `f(u) = u`.
    Identity,
    /// `f(u) = u^2`.
    Square,
}

impl TestFunctional {
    pub fn label(self) -> &'static str {
        match self {
            TestFunctional::Identity => "identity",
            TestFunctional::Square => "square",
        }
    }

    /// Expectation of `f` under a law with this mean and variance.
    pub fn expectation(self, mean: f64, var: f64) -> f64 {
        match self {
            TestFunctional::Identity => mean,
            TestFunctional::Square => var + mean * mean,
        }
    }
}

/// Root mean square over seeds and times of the difference in `<f>` between
/// paired traces; a finite-test-function estimate of the random-measure
/// distance, hence a lower bound on it.
pub fn functional_distance(
    a: &[FilterTrace],
    b: &[FilterTrace],
    functional: TestFunctional,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::Empty("need at least two seeds"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (ta, tb) in a.iter().zip(b) {
        if ta.len() != tb.len() {
            return Err(Error::LengthMismatch(ta.len(), tb.len()));
        }
        for j in 0..ta.len() {
            let fa = functional.expectation(ta.means[j], ta.vars[j]);
            let fb = functional.expectation(tb.means[j], tb.vars[j]);
            sum += (fa - fb) * (fa - fb);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("traces"));
    }
    Ok((sum / count as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log space.
    pub max_residual: f64,
}

/// Least-squares line through `(ln x, ln err)`.
pub fn fit_rate(x: &[f64], errors: &[f64]) -> Result<RateFit> {
    if x.len() != errors.len() {
        return Err(Error::LengthMismatch(x.len(), errors.len()));
    }
    if x.len() < 3
        || x.iter()
            .chain(errors)
            .any(|v| !(*v > 0.0) || !v.is_finite())
    {
        return Err(Error::InvalidRateData);
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidRateData);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).abs())
        .fold(0.0, f64::max);
    Ok(RateFit {
        slope,
        intercept,
        max_residual,
    })
}
