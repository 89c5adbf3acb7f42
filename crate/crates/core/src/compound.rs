//! Annual aggregate loss `L = Σ (X_k − γ)⁺` under a Poisson event count.
//!
//! The distribution is approximated on an equispaced grid by FFT with
//! exponential tilting; the tilt `e^{−jθ}` damps the wrap-around of heavy
//! tails before the pgf is applied in the frequency domain.

use crate::error::{Error, Result};
use crate::severity::Severity;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

const NEGATIVE_CLIP: f64 = 1e-8;
const MASS_TOLERANCE: f64 = 1e-4;
const CLEAN_MASS_TOLERANCE: f64 = 1e-6;

/// Distribution of the number of loss events in a year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Frequency {
    Poisson { rate: f64 },
}

impl Frequency {
    pub fn poisson(rate: f64) -> Result<Self> {
        let f = Frequency::Poisson { rate };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Frequency::Poisson { rate } if rate >= 0.0 && rate.is_finite() => Ok(()),
            Frequency::Poisson { rate } => Err(Error::Domain(format!(
                "Poisson rate must be finite and non-negative, got {rate}"
            ))),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Frequency::Poisson { rate } => rate,
        }
    }

    /// Probability generating function `E[s^N]`.
    pub fn pgf(&self, s: Complex64) -> Complex64 {
        match *self {
            Frequency::Poisson { rate } => ((s - 1.0) * rate).exp(),
        }
    }
}

/// Grid and tilting parameters for the FFT approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationConfig {
    pub l_bar: f64,
    pub k_gr: u32,
    pub theta: f64,
}

impl DiscretizationConfig {
    pub fn new(l_bar: f64, k_gr: u32, theta: f64) -> Result<Self> {
        let cfg = DiscretizationConfig { l_bar, k_gr, theta };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uses the tilt `θ = 20 / 2^k_gr`, which damps the aliased mass by `e^{−20}`.
    pub fn with_default_theta(l_bar: f64, k_gr: u32) -> Result<Self> {
        Self::new(l_bar, k_gr, Self::default_theta(k_gr))
    }

    pub fn default_theta(k_gr: u32) -> f64 {
        20.0 / (1u64 << k_gr.min(62)) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_bar > 0.0 && self.l_bar.is_finite()) {
            return Err(Error::config("discretization.l_bar", "must be positive"));
        }
        if !(1..=30).contains(&self.k_gr) {
            return Err(Error::config("discretization.k_gr", "must lie in 1..=30"));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::config("discretization.theta", "must be positive"));
        }
        Ok(())
    }

    #[allow(clippy::len_without_is_empty)] // the grid is never empty
    pub fn len(&self) -> usize {
        1usize << self.k_gr
    }

    pub fn step(&self) -> f64 {
        self.l_bar / (self.len() - 1) as f64
    }
}

/// An interval of the non-negative reals with independently open or closed ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub lower_closed: bool,
    pub upper: f64,
    pub upper_closed: bool,
}

impl Interval {
    /// `[0, ∞)`.
    pub fn everything() -> Self {
        Interval::at_least(0.0)
    }

    /// `[lower, ∞)`.
    pub fn at_least(lower: f64) -> Self {
        Interval {
            lower,
            lower_closed: true,
            upper: f64::INFINITY,
            upper_closed: false,
        }
    }

    /// `(lower, ∞)`.
    pub fn above(lower: f64) -> Self {
        Interval {
            lower,
            lower_closed: false,
            upper: f64::INFINITY,
            upper_closed: false,
        }
    }

    /// `(lower, upper]`.
    pub fn open_closed(lower: f64, upper: f64) -> Self {
        Interval {
            lower,
            lower_closed: false,
            upper,
            upper_closed: true,
        }
    }

    pub fn empty() -> Self {
        Interval::open_closed(0.0, 0.0)
    }

    pub fn above_lower(&self, x: f64) -> bool {
        if self.lower_closed {
            x >= self.lower
        } else {
            x > self.lower
        }
    }

    pub fn below_upper(&self, x: f64) -> bool {
        if self.upper_closed {
            x <= self.upper
        } else {
            x < self.upper
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.above_lower(x) && self.below_upper(x)
    }

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
            || (self.lower == self.upper && !(self.lower_closed && self.upper_closed))
    }

    /// Intersection with the open half-line `(threshold, ∞)`.
    pub fn strictly_above(&self, threshold: f64) -> Self {
        let mut out = *self;
        if threshold > self.lower || (threshold == self.lower && self.lower_closed) {
            out.lower = threshold;
            out.lower_closed = false;
        }
        out
    }
}

/// Compensation paid on an aggregate loss: `min((l − dtb)⁺, cap)`.
pub fn layer_payout(loss: f64, deductible: f64, cap: f64) -> f64 {
    (loss - deductible).max(0.0).min(cap)
}

/// A finitely supported approximation of an aggregate-loss distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLossDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
    cum_p: Vec<f64>,
    cum_pa: Vec<f64>,
}

impl DiscreteLossDistribution {
    /// Builds a distribution from non-decreasing, non-negative atoms and
    /// non-negative probabilities summing to one within 1e-6.
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::Domain(
                "atoms and probabilities must be non-empty and of equal length".into(),
            ));
        }
        if atoms.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Domain(
                "atoms must be finite and non-negative".into(),
            ));
        }
        if atoms.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain("atoms must be non-decreasing".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > CLEAN_MASS_TOLERANCE {
            return Err(Error::Domain(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let n = atoms.len();
        let mut cum_p = Vec::with_capacity(n + 1);
        let mut cum_pa = Vec::with_capacity(n + 1);
        let (mut sp, mut spa) = (0.0, 0.0);
        cum_p.push(0.0);
        cum_pa.push(0.0);
        for (a, p) in atoms.iter().zip(&probs) {
            sp += p;
            spa += p * a;
            cum_p.push(sp);
            cum_pa.push(spa);
        }
        Ok(DiscreteLossDistribution {
            atoms,
            probs,
            cum_p,
            cum_pa,
        })
    }

    /// Distribution on the grid `a_j = j·step`.
    pub fn on_grid(step: f64, probs: Vec<f64>) -> Result<Self> {
        let atoms = (0..probs.len()).map(|j| j as f64 * step).collect();
        Self::new(atoms, probs)
    }

    pub fn point_mass(at: f64) -> Result<Self> {
        Self::new(vec![at], vec![1.0])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.cum_p[self.len()]
    }

    pub fn mean(&self) -> f64 {
        self.cum_pa[self.len()]
    }

    /// `P(L ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|&a| a <= x);
        self.cum_p[k]
    }

    /// First index in `0..n` where the monotone predicate turns true.
    fn first_index(&self, pred: impl Fn(usize) -> bool) -> usize {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if pred(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    /// Index range of atoms whose payout lies in `interval` and strictly
    /// exceeds `floor` (when given). Payout is monotone in the atom, so
    /// the set is contiguous.
    fn payout_range(
        &self,
        interval: &Interval,
        dtb: f64,
        cap: f64,
        floor: Option<f64>,
    ) -> (usize, usize) {
        let payout = |j: usize| layer_payout(self.atoms[j], dtb, cap);
        let start = self.first_index(|j| {
            let c = payout(j);
            interval.above_lower(c) && floor.is_none_or(|f| c > f)
        });
        let end = self.first_index(|j| !interval.below_upper(payout(j)));
        (start, end.max(start))
    }

    /// Prefix-sum evaluation of [`layer_expectation`].
    pub fn layer_expectation(&self, interval: &Interval, dtb: f64, cap: f64, offset: f64) -> f64 {
        if interval.is_empty() || cap <= offset {
            return 0.0;
        }
        if offset < 0.0 {
            // every payout clears a negative offset
            return self.layer_expectation(interval, dtb, cap, 0.0)
                - offset * self.layer_probability(interval, dtb, cap);
        }
        let (start, end) = self.payout_range(interval, dtb, cap, Some(offset));
        if start >= end {
            return 0.0;
        }
        let k_cap = if cap.is_finite() {
            self.first_index(|j| self.atoms[j] - dtb >= cap)
        } else {
            self.len()
        };
        let mut total = 0.0;
        let lin_end = end.min(k_cap);
        if start < lin_end {
            let mass = self.cum_p[lin_end] - self.cum_p[start];
            let first = self.cum_pa[lin_end] - self.cum_pa[start];
            total += first - (dtb + offset) * mass;
        }
        let cap_start = start.max(k_cap);
        if cap_start < end {
            total += (cap - offset) * (self.cum_p[end] - self.cum_p[cap_start]);
        }
        total.max(0.0)
    }

    /// Prefix-sum evaluation of [`layer_probability`].
    pub fn layer_probability(&self, interval: &Interval, dtb: f64, cap: f64) -> f64 {
        if interval.is_empty() {
            return 0.0;
        }
        let (start, end) = self.payout_range(interval, dtb, cap, None);
        (self.cum_p[end] - self.cum_p[start]).clamp(0.0, 1.0)
    }

    /// Writes `atom,prob` rows for inspection.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "atom,prob")?;
        for (a, p) in self.atoms.iter().zip(&self.probs) {
            writeln!(out, "{a:e},{p:e}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `Σ_j p_j · 1_I(λ(a_j)) · (λ(a_j) − offset)⁺` with `λ(l) = min((l − dtb)⁺, cap)`,
/// evaluated term by term.
pub fn layer_expectation(
    dist: &DiscreteLossDistribution,
    interval: &Interval,
    dtb: f64,
    cap: f64,
    offset: f64,
) -> f64 {
    dist.atoms
        .iter()
        .zip(&dist.probs)
        .map(|(&a, &p)| {
            let c = layer_payout(a, dtb, cap);
            if interval.contains(c) {
                p * (c - offset).max(0.0)
            } else {
                0.0
            }
        })
        .sum()
}

/// `Σ_j p_j · 1_I(λ(a_j))`, evaluated term by term.
pub fn layer_probability(
    dist: &DiscreteLossDistribution,
    interval: &Interval,
    dtb: f64,
    cap: f64,
) -> f64 {
    dist.atoms
        .iter()
        .zip(&dist.probs)
        .filter(|(&a, _)| interval.contains(layer_payout(a, dtb, cap)))
        .map(|(_, &p)| p)
        .sum()
}

/// Severity and frequency of loss events, before mitigation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub severity: Severity,
    pub frequency: Frequency,
}

/// Aggregate-loss inputs the solver needs for one mitigation measure.
#[derive(Debug, Clone)]
pub struct MitigatedLoss {
    /// Per-event severity reduction of the measure.
    pub gamma: f64,
    pub distribution: DiscreteLossDistribution,
    /// `E[L(d, W)]` in closed form.
    pub expected_loss: f64,
    /// Expected unmitigated annual loss `E[Σ X_k]`.
    pub expected_ground_up: f64,
}

impl LossModel {
    /// CDF of a single event's loss after the reduction `gamma`; the mass
    /// of fully prevented events sits at zero.
    pub fn mitigated_severity_cdf(&self, gamma: f64, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Ok(0.0);
        }
        self.severity.cdf(y + gamma)
    }

    fn mitigated_severity_survival(&self, gamma: f64, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Ok(1.0);
        }
        self.severity.survival(y + gamma)
    }

    /// `E[L(d, W)] = E[N]·E[(X − γ)⁺]`.
    pub fn expected_aggregate_loss(&self, gamma: f64) -> Result<f64> {
        let rate = self.frequency.mean();
        if rate == 0.0 {
            return Ok(0.0);
        }
        Ok(rate * self.severity.stop_loss_expectation(gamma)?)
    }

    /// Midpoint discretisation of the mitigated severity on the grid,
    /// without tilting.
    pub fn discretize_severity(&self, gamma: f64, cfg: &DiscretizationConfig) -> Result<Vec<f64>> {
        let n = cfg.len();
        let eps = cfg.step();
        // survival at the cell edges jε − ε/2, j = 0..=n
        let edges: Vec<f64> = (0..=n)
            .into_par_iter()
            .map(|j| self.mitigated_severity_survival(gamma, j as f64 * eps - 0.5 * eps))
            .collect::<Result<_>>()?;
        Ok(edges.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect())
    }

    /// Aggregate-loss distribution for reduction `gamma` by FFT with
    /// exponential tilting.
    pub fn compound_fft(
        &self,
        gamma: f64,
        cfg: &DiscretizationConfig,
    ) -> Result<DiscreteLossDistribution> {
        let severity = self.discretize_severity(gamma, cfg)?;
        self.compound_from_severity(&severity, cfg, |s| self.frequency.pgf(s))
    }

    /// The FFT step with an arbitrary pgf applied to a discretised severity.
    pub fn compound_from_severity(
        &self,
        severity: &[f64],
        cfg: &DiscretizationConfig,
        pgf: impl Fn(Complex64) -> Complex64,
    ) -> Result<DiscreteLossDistribution> {
        cfg.validate()?;
        let n = cfg.len();
        if severity.len() != n {
            return Err(Error::Domain(format!(
                "severity has {} cells, grid has {n}",
                severity.len()
            )));
        }
        let theta = cfg.theta;
        let mut buf: Vec<Complex64> = severity
            .iter()
            .enumerate()
            .map(|(j, &f)| Complex64::new((-(j as f64) * theta).exp() * f, 0.0))
            .collect();

        let mut planner = FftPlanner::<f64>::new();
        // e^{+2πi jk/n} transform, then pgf, then the e^{−2πi jk/n} transform.
        planner.plan_fft_inverse(n).process(&mut buf);
        for v in buf.iter_mut() {
            *v = pgf(*v);
        }
        planner.plan_fft_forward(n).process(&mut buf);

        let scale = 1.0 / n as f64;
        let mut probs = Vec::with_capacity(n);
        for (j, v) in buf.iter().enumerate() {
            let p = ((j as f64) * theta).exp() * scale * v.re;
            if !p.is_finite() || p < -NEGATIVE_CLIP {
                return Err(Error::NumericalInstability(format!(
                    "untilted probability {p:e} at atom {j}; revisit theta or k_gr"
                )));
            }
            probs.push(p.max(0.0));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::NumericalInstability(format!(
                "aggregate mass {total} deviates from one; revisit l_bar or theta"
            )));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        DiscreteLossDistribution::on_grid(cfg.step(), probs)
    }

    /// Aggregate-loss inputs for every reduction in `gammas`.
    pub fn tabulate(
        &self,
        gammas: &[f64],
        cfg: &DiscretizationConfig,
    ) -> Result<Vec<MitigatedLoss>> {
        let ground_up = self.expected_aggregate_loss(0.0)?;
        gammas
            .iter()
            .map(|&gamma| {
                Ok(MitigatedLoss {
                    gamma,
                    distribution: self.compound_fft(gamma, cfg)?,
                    expected_loss: self.expected_aggregate_loss(gamma)?,
                    expected_ground_up: ground_up,
                })
            })
            .collect()
    }
}
