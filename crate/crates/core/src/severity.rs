//! Per-event loss severity: the g-and-h family truncated at zero, plus a
//! log-normal alternative used for robustness runs.
//!
//! A g-and-h variable is `α + ς·Y(Z)` with `Z` standard normal and
//! `Y(z) = (exp(g z) − 1)/g · exp(h z²/2)`. Conditioning on positivity
//! gives the truncated model used for cyber losses. Everything here is a
//! pure function of an immutable parameter set.

use crate::error::{Error, Result};
use crate::normal;
use crate::quadrature;
use serde::{Deserialize, Serialize};

const BRACKET_STEPS: usize = 200;
const BISECTION_TOL: f64 = 1e-13;
const SECOND_MOMENT_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct GAndHSpec {
    alpha: f64,
    sigma: f64,
    g: f64,
    h: f64,
}

/// Parameters of a truncated g-and-h severity with the cached mass
/// `F_raw(0)` that the truncation removes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GAndHSpec", into = "GAndHSpec")]
pub struct SeverityParams {
    alpha: f64,
    sigma: f64,
    g: f64,
    h: f64,
    f0: f64,
}

impl TryFrom<GAndHSpec> for SeverityParams {
    type Error = Error;
    fn try_from(s: GAndHSpec) -> Result<Self> {
        SeverityParams::new(s.alpha, s.sigma, s.g, s.h)
    }
}

impl From<SeverityParams> for GAndHSpec {
    fn from(p: SeverityParams) -> Self {
        GAndHSpec {
            alpha: p.alpha,
            sigma: p.sigma,
            g: p.g,
            h: p.h,
        }
    }
}

impl SeverityParams {
    pub fn new(alpha: f64, sigma: f64, g: f64, h: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Domain(format!(
                "location must be finite, got {alpha}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "scale must be positive, got {sigma}"
            )));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::Domain(format!(
                "skewness g must be positive, got {g}"
            )));
        }
        if !(0.0..1.0).contains(&h) {
            return Err(Error::Domain(format!(
                "kurtosis h must lie in [0, 1), got {h}"
            )));
        }
        let mut p = SeverityParams {
            alpha,
            sigma,
            g,
            h,
            f0: 0.0,
        };
        p.f0 = p.cdf_raw(0.0)?;
        if p.f0 >= 1.0 {
            return Err(Error::Domain(
                "no probability mass above zero; truncation undefined".into(),
            ));
        }
        Ok(p)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn g(&self) -> f64 {
        self.g
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    /// Probability that the untruncated variable is non-positive.
    pub fn f0(&self) -> f64 {
        self.f0
    }

    /// The g-and-h transform `Y(z)`.
    pub fn transform(&self, z: f64) -> f64 {
        (self.g * z).exp_m1() / self.g * (0.5 * self.h * z * z).exp()
    }

    /// Inverse of [`transform`](Self::transform) by bracketed bisection.
    pub fn inverse_transform(&self, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let mut steps = 0;
        while self.transform(hi) < y {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > BRACKET_STEPS {
                return Err(Error::ConvergenceFailure(y));
            }
        }
        while self.transform(lo) > y {
            hi = lo;
            lo *= 2.0;
            steps += 1;
            if steps > BRACKET_STEPS {
                return Err(Error::ConvergenceFailure(y));
            }
        }
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.transform(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Standardised pre-image `Y⁻¹((x − α)/ς)`; `-∞` below the range of
    /// the transform (only possible when `h = 0`).
    fn standard_score(&self, x: f64) -> Result<f64> {
        let y = (x - self.alpha) / self.sigma;
        if self.h == 0.0 && y <= -1.0 / self.g {
            return Ok(f64::NEG_INFINITY);
        }
        self.inverse_transform(y)
    }

    /// Distribution function of the untruncated g-and-h variable.
    pub fn cdf_raw(&self, x: f64) -> Result<f64> {
        Ok(normal::cdf(self.standard_score(x)?))
    }

    /// Distribution function of the truncated variable.
    pub fn cdf_truncated(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let raw = self.cdf_raw(x)?;
        Ok(((raw - self.f0) / (1.0 - self.f0)).clamp(0.0, 1.0))
    }

    /// `1 − F(x)` for the truncated variable, accurate in the upper tail.
    pub fn survival_truncated(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(1.0);
        }
        let z = self.standard_score(x)?;
        Ok((normal::sf(z) / (1.0 - self.f0)).clamp(0.0, 1.0))
    }

    /// The `u`-quantile of the truncated variable.
    pub fn quantile_truncated(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must lie in (0, 1), got {u}"
            )));
        }
        Ok(self.quantile_unchecked(u))
    }

    fn quantile_unchecked(&self, u: f64) -> f64 {
        let z = normal::inv_cdf(u + (1.0 - u) * self.f0);
        (self.alpha + self.sigma * self.transform(z)).max(0.0)
    }

    /// Maps uniform draws to truncated g-and-h samples by inversion.
    pub fn sample_truncated(&self, uniforms: &[f64]) -> Result<Vec<f64>> {
        uniforms
            .iter()
            .map(|&u| self.quantile_truncated(u))
            .collect()
    }

    /// Closed-form stop-loss expectation `E[(X − γ)⁺]` for `γ ≥ 0`.
    pub fn stop_loss_expectation(&self, gamma: f64) -> Result<f64> {
        if !(gamma >= 0.0) {
            return Err(Error::Domain(format!(
                "retention must be non-negative, got {gamma}"
            )));
        }
        let (g, h) = (self.g, self.h);
        let root = (1.0 - h).sqrt();
        let z = self.standard_score(gamma)?;
        let upper = if z == f64::NEG_INFINITY {
            (g * g / (2.0 * (1.0 - h))).exp() - 1.0
        } else {
            (g * g / (2.0 * (1.0 - h))).exp() * normal::cdf((g / (1.0 - h) - z) * root)
                - normal::cdf(-z * root)
        };
        let scale = self.sigma / ((1.0 - self.f0) * g * root);
        let shift = (self.alpha - gamma) * normal::sf(z) / (1.0 - self.f0);
        Ok((scale * upper + shift).max(0.0))
    }

    pub fn mean(&self) -> Result<f64> {
        self.stop_loss_expectation(0.0)
    }

    /// `E[X²]` of the truncated variable by adaptive quadrature of
    /// `∫ 2x(1 − F(x)) dx`; finite only for `h < 1/2`.
    pub fn second_moment(&self) -> Result<f64> {
        if self.h >= 0.5 {
            return Err(Error::Domain(format!(
                "second moment infinite for h = {} ≥ 1/2",
                self.h
            )));
        }
        let scale = self.quantile_unchecked(0.5).max(f64::MIN_POSITIVE);
        let integrand = |x: f64| Ok(2.0 * x * self.survival_truncated(x)?);
        let body = quadrature::integrate(integrand, 0.0, scale, SECOND_MOMENT_RTOL * 1e-2, 0.0)?;
        let tail =
            quadrature::integrate_to_infinity(integrand, scale, SECOND_MOMENT_RTOL * 1e-2, 0.0)?;
        Ok(body + tail)
    }

    /// Log-normal parameters whose first two moments equal those of this
    /// truncated g-and-h distribution.
    pub fn lognormal_moment_match(&self) -> Result<LognormalParams> {
        let m1 = self.mean()?;
        let m2 = self.second_moment()?;
        let s2 = (m2 / (m1 * m1)).ln();
        if !(s2 > 0.0) {
            return Err(Error::NumericalInstability(format!(
                "moment ratio E[X²]/E[X]² = {} does not exceed one",
                m2 / (m1 * m1)
            )));
        }
        LognormalParams::new(m1.ln() - 0.5 * s2, s2.sqrt())
    }
}

/// Log-normal severity `exp(μ + s·Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalParams {
    pub mu: f64,
    pub s: f64,
}

impl LognormalParams {
    pub fn new(mu: f64, s: f64) -> Result<Self> {
        if !mu.is_finite() || !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!(
                "log-normal needs finite mu and s > 0, got ({mu}, {s})"
            )));
        }
        Ok(LognormalParams { mu, s })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            normal::cdf((x.ln() - self.mu) / self.s)
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            normal::sf((x.ln() - self.mu) / self.s)
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must lie in (0, 1), got {u}"
            )));
        }
        Ok((self.mu + self.s * normal::inv_cdf(u)).exp())
    }

    pub fn stop_loss_expectation(&self, gamma: f64) -> Result<f64> {
        if !(gamma >= 0.0) {
            return Err(Error::Domain(format!(
                "retention must be non-negative, got {gamma}"
            )));
        }
        let mean = (self.mu + 0.5 * self.s * self.s).exp();
        if gamma == 0.0 {
            return Ok(mean);
        }
        let d = (self.mu - gamma.ln()) / self.s;
        Ok((mean * normal::cdf(d + self.s) - gamma * normal::cdf(d)).max(0.0))
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.s * self.s).exp()
    }

    pub fn variance(&self) -> f64 {
        let s2 = self.s * self.s;
        s2.exp_m1() * (2.0 * self.mu + s2).exp()
    }
}

/// A severity law usable by the compound-loss and simulation layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Severity {
    TruncatedGAndH(SeverityParams),
    Lognormal(LognormalParams),
}

impl Severity {
    pub fn cdf(&self, x: f64) -> Result<f64> {
        match self {
            Severity::TruncatedGAndH(p) => p.cdf_truncated(x),
            Severity::Lognormal(p) => Ok(p.cdf(x)),
        }
    }

    pub fn survival(&self, x: f64) -> Result<f64> {
        match self {
            Severity::TruncatedGAndH(p) => p.survival_truncated(x),
            Severity::Lognormal(p) => Ok(p.survival(x)),
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        match self {
            Severity::TruncatedGAndH(p) => p.quantile_truncated(u),
            Severity::Lognormal(p) => p.quantile(u),
        }
    }

    pub fn stop_loss_expectation(&self, gamma: f64) -> Result<f64> {
        match self {
            Severity::TruncatedGAndH(p) => p.stop_loss_expectation(gamma),
            Severity::Lognormal(p) => p.stop_loss_expectation(gamma),
        }
    }

    pub fn mean(&self) -> Result<f64> {
        self.stop_loss_expectation(0.0)
    }
}
