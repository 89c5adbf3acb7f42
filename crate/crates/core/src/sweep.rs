//! Experiment configuration, premium sweeps and their CSV output.

use crate::compound::{DiscretizationConfig, Frequency, LossModel, MitigatedLoss};
use crate::contract::{
    BonusMalusRule, ClaimPiece, ClaimTransition, ContractSchedules, ContractSpec, ContractState,
    MitigationMeasure, MitigationMenu, Status,
};
use crate::error::{Error, Result};
use crate::severity::{LognormalParams, Severity, SeverityParams};
use crate::simulation::{simulate, SimulationConfig};
use crate::solver::{solve, PolicySolution, Quantity};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "CYBERBM_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeverityConfig {
    TruncatedGAndH {
        alpha: f64,
        sigma: f64,
        g: f64,
        h: f64,
    },
    Lognormal {
        mu: f64,
        s: f64,
    },
    /// Log-normal with the mean and variance of the truncated g-and-h.
    LognormalMatched {
        alpha: f64,
        sigma: f64,
        g: f64,
        h: f64,
    },
}

impl SeverityConfig {
    pub fn build(&self) -> Result<Severity> {
        let wrap = |e: Error| Error::config("severity", e.to_string());
        Ok(match *self {
            SeverityConfig::TruncatedGAndH { alpha, sigma, g, h } => {
                Severity::TruncatedGAndH(SeverityParams::new(alpha, sigma, g, h).map_err(wrap)?)
            }
            SeverityConfig::Lognormal { mu, s } => {
                Severity::Lognormal(LognormalParams::new(mu, s).map_err(wrap)?)
            }
            SeverityConfig::LognormalMatched { alpha, sigma, g, h } => {
                let gh = SeverityParams::new(alpha, sigma, g, h).map_err(wrap)?;
                Severity::Lognormal(gh.lognormal_moment_match().map_err(wrap)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSpec {
    Absolute(f64),
    /// Quantile of the configured severity at this level.
    SeverityQuantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub beta: f64,
    pub gamma: GammaSpec,
}

/// Values over levels and years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelYearSchedule {
    Constant {
        value: f64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        year_overrides: BTreeMap<u32, f64>,
    },
    /// One value per level, constant over the years.
    PerLevel { values: BTreeMap<i32, f64> },
    /// One row of `horizon` values per level.
    Table { values: BTreeMap<i32, Vec<f64>> },
}

impl LevelYearSchedule {
    fn tabulate(&self, field: &str, levels: &[i32], horizon: u32) -> Result<Vec<Vec<f64>>> {
        let t = horizon as usize;
        match self {
            LevelYearSchedule::Constant {
                value,
                year_overrides,
            } => {
                if let Some(y) = year_overrides.keys().find(|&&y| y == 0 || y > horizon) {
                    return Err(Error::config(
                        format!("{field}.year_overrides"),
                        format!("year {y} outside 1..={horizon}"),
                    ));
                }
                let row: Vec<f64> = (1..=horizon)
                    .map(|y| *year_overrides.get(&y).unwrap_or(value))
                    .collect();
                Ok(vec![row; levels.len()])
            }
            LevelYearSchedule::PerLevel { values } => {
                check_level_keys(field, values.keys(), levels)?;
                Ok(levels.iter().map(|b| vec![values[b]; t]).collect())
            }
            LevelYearSchedule::Table { values } => {
                check_level_keys(field, values.keys(), levels)?;
                levels
                    .iter()
                    .map(|b| {
                        let row = &values[b];
                        if row.len() != t {
                            return Err(Error::config(
                                format!("{field}.values[{b}]"),
                                format!("expected {t} yearly values, found {}", row.len()),
                            ));
                        }
                        Ok(row.clone())
                    })
                    .collect()
            }
        }
    }
}

fn check_level_keys<'a>(
    field: &str,
    keys: impl Iterator<Item = &'a i32>,
    levels: &[i32],
) -> Result<()> {
    let keys: Vec<i32> = keys.copied().collect();
    if keys != levels {
        return Err(Error::config(
            format!("{field}.values"),
            format!("levels {keys:?} do not match the level range {levels:?}"),
        ));
    }
    Ok(())
}

/// Values over years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YearSchedule {
    Constant {
        value: f64,
    },
    PerYear {
        values: Vec<f64>,
    },
    /// `slope · (t − knot)⁺`.
    Hinge {
        slope: f64,
        knot: f64,
    },
    /// `intercept + slope · (t − 1)`.
    Affine {
        intercept: f64,
        slope: f64,
    },
}

impl YearSchedule {
    fn tabulate(&self, field: &str, horizon: u32) -> Result<Vec<f64>> {
        let years = 1..=horizon;
        Ok(match self {
            YearSchedule::Constant { value } => vec![*value; horizon as usize],
            YearSchedule::PerYear { values } => {
                if values.len() != horizon as usize {
                    return Err(Error::config(
                        format!("{field}.values"),
                        format!("expected {horizon} yearly values, found {}", values.len()),
                    ));
                }
                values.clone()
            }
            YearSchedule::Hinge { slope, knot } => {
                years.map(|t| slope * (t as f64 - knot).max(0.0)).collect()
            }
            YearSchedule::Affine { intercept, slope } => years
                .map(|t| intercept + slope * (t as f64 - 1.0))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimRuleConfig {
    pub level: i32,
    pub no_claim: i32,
    pub claims: Vec<ClaimPiece>,
}

/// Inactive transition of `(level, status)`; `status` may be `off_*` to
/// cover every off counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InactiveRuleConfig {
    pub level: i32,
    pub status: String,
    pub to_level: i32,
    pub to_status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractTemplate {
    pub min_level: i32,
    pub max_level: i32,
    pub claim_transition: Vec<ClaimRuleConfig>,
    pub inactive_transition: Vec<InactiveRuleConfig>,
    /// Premium at each level and year as a multiple of the base premium.
    pub premium_multiplier: LevelYearSchedule,
    pub deductible: LevelYearSchedule,
    pub max_compensation: LevelYearSchedule,
    pub fee_in: YearSchedule,
    pub fee_out: YearSchedule,
    pub fee_re: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSpec {
    pub l_bar: f64,
    pub k_gr: u32,
    /// Defaults to `20 / 2^k_gr`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub premium_min: f64,
    pub premium_max: f64,
    pub premium_step: f64,
}

impl SweepSpec {
    pub fn premiums(&self) -> Vec<f64> {
        let n = ((self.premium_max - self.premium_min) / self.premium_step + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| self.premium_min + k as f64 * self.premium_step)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub base_premium: f64,
    pub variant: Variant,
    pub paths: usize,
    pub seed: u64,
}

/// Contract with or without experience rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Bm,
    Flat,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Bm => "bm",
            Variant::Flat => "flat",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm" => Ok(Variant::Bm),
            "flat" => Ok(Variant::Flat),
            _ => Err(Error::config(
                "variant",
                format!("expected `bm` or `flat`, found `{s}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub severity: SeverityConfig,
    pub frequency: Frequency,
    pub mitigation: Vec<MeasureConfig>,
    pub horizon: u32,
    pub discount_factor: f64,
    pub contract: ContractTemplate,
    pub discretization: DiscretizationSpec,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_validation: Option<McSpec>,
}

/// The reference experiment: four Bonus-Malus levels over twenty years.
pub fn emit_experiment_defaults() -> ExperimentConfig {
    let claim_transition = (-2..=1)
        .map(|b| ClaimRuleConfig {
            level: b,
            no_claim: (b - 1).max(-2),
            claims: vec![ClaimPiece {
                threshold: 0.0,
                level: 1,
            }],
        })
        .collect();
    let mut inactive_transition = Vec::new();
    for b in -2..=1 {
        inactive_transition.push(InactiveRuleConfig {
            level: b,
            status: "on".into(),
            to_level: b,
            to_status: Status::Off(1),
        });
        inactive_transition.push(InactiveRuleConfig {
            level: b,
            status: "off_*".into(),
            to_level: if b < 0 { b + 1 } else { 0 },
            to_status: Status::Off(1),
        });
    }
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        severity: SeverityConfig::TruncatedGAndH {
            alpha: 0.0,
            sigma: 1.0,
            g: 1.8,
            h: 0.15,
        },
        frequency: Frequency::Poisson { rate: 0.8 },
        mitigation: vec![
            MeasureConfig {
                beta: 0.0,
                gamma: GammaSpec::Absolute(0.0),
            },
            MeasureConfig {
                beta: 0.5,
                gamma: GammaSpec::SeverityQuantile(0.7),
            },
        ],
        horizon: 20,
        discount_factor: 0.95,
        contract: ContractTemplate {
            min_level: -2,
            max_level: 1,
            claim_transition,
            inactive_transition,
            premium_multiplier: LevelYearSchedule::PerLevel {
                values: [(-2, 0.6), (-1, 0.8), (0, 1.0), (1, 1.5)]
                    .into_iter()
                    .collect(),
            },
            deductible: LevelYearSchedule::Constant {
                value: 0.5,
                year_overrides: [(20, 5.0)].into_iter().collect(),
            },
            max_compensation: LevelYearSchedule::Constant {
                value: 1000.0,
                year_overrides: BTreeMap::new(),
            },
            fee_in: YearSchedule::Hinge {
                slope: 0.75,
                knot: 16.0,
            },
            fee_out: YearSchedule::Affine {
                intercept: 3.0,
                slope: 5.0 / 19.0,
            },
            fee_re: 3.0,
        },
        discretization: DiscretizationSpec {
            l_bar: 1e4,
            k_gr: 20,
            theta: None,
        },
        sweep: SweepSpec {
            premium_min: 0.0,
            premium_max: 7.0,
            premium_step: 0.005,
        },
        output: OutputSpec::default(),
        mc_validation: Some(McSpec {
            base_premium: 4.7,
            variant: Variant::Bm,
            paths: 1_000_000,
            seed: 20_240_601,
        }),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Error::config(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn discretization(&self) -> Result<DiscretizationConfig> {
        let d = &self.discretization;
        let theta = d
            .theta
            .unwrap_or_else(|| DiscretizationConfig::default_theta(d.k_gr));
        DiscretizationConfig::new(d.l_bar, d.k_gr, theta)
    }

    fn loss_model(&self) -> Result<LossModel> {
        self.frequency
            .validate()
            .map_err(|e| Error::config("frequency", e.to_string()))?;
        Ok(LossModel {
            severity: self.severity.build()?,
            frequency: self.frequency,
        })
    }

    fn menu(&self, severity: &Severity) -> Result<MitigationMenu> {
        let measures = self
            .mitigation
            .iter()
            .enumerate()
            .map(|(d, m)| {
                let gamma = match m.gamma {
                    GammaSpec::Absolute(g) => g,
                    GammaSpec::SeverityQuantile(q) => {
                        if !(q > 0.0 && q < 1.0) {
                            return Err(Error::config(
                                format!("mitigation[{d}].gamma.severity_quantile"),
                                "must lie in (0, 1)",
                            ));
                        }
                        severity.quantile(q)?
                    }
                };
                Ok(MitigationMeasure {
                    beta: m.beta,
                    gamma,
                })
            })
            .collect::<Result<_>>()?;
        MitigationMenu::new(measures)
    }

    fn rule(&self) -> Result<BonusMalusRule> {
        let c = &self.contract;
        let t = self.horizon;
        if c.min_level > c.max_level {
            return Err(Error::config("contract.min_level", "exceeds max_level"));
        }
        let levels: Vec<i32> = (c.min_level..=c.max_level).collect();
        let mut claim: Vec<Option<ClaimTransition>> = vec![None; levels.len()];
        for (k, r) in c.claim_transition.iter().enumerate() {
            let field = format!("contract.claim_transition[{k}]");
            if !levels.contains(&r.level) {
                return Err(Error::config(
                    field,
                    format!("level {} outside the level range", r.level),
                ));
            }
            let slot = &mut claim[(r.level - c.min_level) as usize];
            if slot.is_some() {
                return Err(Error::config(
                    field,
                    format!("duplicate entry for level {}", r.level),
                ));
            }
            *slot = Some(ClaimTransition {
                no_claim: r.no_claim,
                pieces: r.claims.clone(),
            });
        }
        let claim = claim
            .into_iter()
            .zip(&levels)
            .map(|(c, b)| {
                c.ok_or_else(|| {
                    Error::config("contract.claim_transition", format!("missing level {b}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let n_status = t as usize + 2;
        let mut inactive: Vec<Vec<Option<ContractState>>> = levels
            .iter()
            .map(|&b| {
                let mut row = vec![None; n_status];
                row[0] = Some(ContractState::new(b, Status::NotSigned));
                row
            })
            .collect();
        let mut explicit_no = vec![false; levels.len()];
        for (k, r) in c.inactive_transition.iter().enumerate() {
            let field = format!("contract.inactive_transition[{k}]");
            if !levels.contains(&r.level) {
                return Err(Error::config(
                    field,
                    format!("level {} outside the level range", r.level),
                ));
            }
            let li = (r.level - c.min_level) as usize;
            let slots: Vec<usize> = if r.status == "off_*" {
                (2..n_status).collect()
            } else {
                let s: Status = r
                    .status
                    .parse()
                    .map_err(|e: Error| Error::config(&field, e.to_string()))?;
                let idx = match s {
                    Status::NotSigned => 0,
                    Status::Active => 1,
                    Status::Off(y) if y <= t => 1 + y as usize,
                    Status::Off(y) => {
                        return Err(Error::config(
                            field,
                            format!("off counter {y} exceeds the horizon"),
                        ))
                    }
                };
                vec![idx]
            };
            let to = ContractState::new(r.to_level, r.to_status);
            for idx in slots {
                if idx == 0 {
                    if explicit_no[li] {
                        return Err(Error::config(&field, "duplicate entry"));
                    }
                    explicit_no[li] = true;
                } else if inactive[li][idx].is_some() {
                    return Err(Error::config(&field, "duplicate entry"));
                }
                inactive[li][idx] = Some(to);
            }
        }
        let inactive = inactive
            .into_iter()
            .zip(&levels)
            .map(|(row, &b)| {
                row.into_iter()
                    .enumerate()
                    .map(|(s, v)| {
                        v.ok_or_else(|| {
                            let status = if s == 1 {
                                "on".to_string()
                            } else {
                                format!("off_{}", s - 1)
                            };
                            Error::config(
                                "contract.inactive_transition",
                                format!("missing entry for ({b}, {status})"),
                            )
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        BonusMalusRule::new(c.min_level, c.max_level, t, claim, inactive)
    }

    /// Contract of `variant` at `base_premium`.
    pub fn contract(
        &self,
        variant: Variant,
        base_premium: f64,
        menu: &MitigationMenu,
    ) -> Result<ContractSpec> {
        let c = &self.contract;
        let t = self.horizon;
        if t == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if !(base_premium >= 0.0 && base_premium.is_finite()) {
            return Err(Error::config(
                "base_premium",
                "must be finite and non-negative",
            ));
        }
        let levels: Vec<i32> = (c.min_level..=c.max_level).collect();
        let rule = self.rule()?;
        let premium = c
            .premium_multiplier
            .tabulate("contract.premium_multiplier", &levels, t)?
            .into_iter()
            .map(|row| row.into_iter().map(|m| m * base_premium).collect())
            .collect();
        let schedules = ContractSchedules {
            horizon: t,
            discount_factor: self.discount_factor,
            premium,
            deductible: c.deductible.tabulate("contract.deductible", &levels, t)?,
            max_compensation: c.max_compensation.tabulate(
                "contract.max_compensation",
                &levels,
                t,
            )?,
            fee_in: c.fee_in.tabulate("contract.fee_in", t)?,
            fee_out: c.fee_out.tabulate("contract.fee_out", t)?,
            fee_re: c.fee_re,
        };
        let spec = ContractSpec::new(rule, schedules, menu.clone())?;
        match variant {
            Variant::Bm => Ok(spec),
            Variant::Flat => spec.without_bonus_malus(),
        }
    }

    /// Checks every field without running the FFT.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        let s = &self.sweep;
        if !(s.premium_step > 0.0 && s.premium_step.is_finite()) {
            return Err(Error::config("sweep.premium_step", "must be positive"));
        }
        if !(s.premium_min >= 0.0 && s.premium_min <= s.premium_max && s.premium_max.is_finite()) {
            return Err(Error::config(
                "sweep.premium_min",
                "need 0 ≤ premium_min ≤ premium_max",
            ));
        }
        if !(self.discount_factor > 0.0 && self.discount_factor <= 1.0) {
            return Err(Error::config("discount_factor", "must lie in (0, 1]"));
        }
        self.discretization()?;
        let model = self.loss_model()?;
        let menu = self.menu(&model.severity)?;
        self.contract(Variant::Bm, s.premium_max, &menu)?;
        if let Some(mc) = &self.mc_validation {
            if mc.paths < 2 {
                return Err(Error::config(
                    "mc_validation.paths",
                    "at least two paths are required",
                ));
            }
            if !(mc.base_premium >= 0.0 && mc.base_premium.is_finite()) {
                return Err(Error::config(
                    "mc_validation.base_premium",
                    "must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }
}

/// A validated configuration with its aggregate-loss tables.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: LossModel,
    pub menu: MitigationMenu,
    pub losses: Vec<MitigatedLoss>,
}

/// One row of a premium sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub base_premium: f64,
    pub v0: f64,
    pub retention: f64,
    /// Expected insured years per level of the template, lowest first.
    pub years_per_level: Vec<f64>,
    pub years_uninsured: f64,
    pub mitigation_years: f64,
    pub loss_prevented: f64,
    pub insurer_profit: f64,
}

impl SweepRow {
    pub fn regime(&self) -> Regime {
        Regime {
            retention: Coverage::classify(self.retention, 1.0),
            mitigation: Coverage::classify(self.mitigation_years, self.years_total()),
        }
    }

    fn years_total(&self) -> f64 {
        self.years_per_level.iter().sum::<f64>() + self.years_uninsured
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coverage {
    None,
    Partial,
    Full,
}

impl Coverage {
    const TOL: f64 = 1e-9;

    fn classify(x: f64, full: f64) -> Coverage {
        if x <= Self::TOL {
            Coverage::None
        } else if x >= full - Self::TOL * full.max(1.0) {
            Coverage::Full
        } else {
            Coverage::Partial
        }
    }
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coverage::None => "none",
            Coverage::Partial => "partial",
            Coverage::Full => "full",
        })
    }
}

/// Qualitative behaviour at one premium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Regime {
    pub retention: Coverage,
    pub mitigation: Coverage,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "retention={}/mitigation={}",
            self.retention, self.mitigation
        )
    }
}

/// Maximal run of consecutive grid premiums with the same regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub regime: Regime,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variant: Variant,
    pub levels: Vec<i32>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn bands(&self) -> Vec<Band> {
        let mut bands: Vec<Band> = Vec::new();
        for row in &self.rows {
            let regime = row.regime();
            match bands.last_mut() {
                Some(b) if b.regime == regime => b.end = row.base_premium,
                _ => bands.push(Band {
                    regime,
                    start: row.base_premium,
                    end: row.base_premium,
                }),
            }
        }
        bands
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["base_premium".to_string(), "V0".into(), "retention".into()];
        h.extend(self.levels.iter().map(|&b| {
            if b < 0 {
                format!("years_bm_m{}", -b)
            } else {
                format!("years_bm_{b}")
            }
        }));
        h.extend(
            [
                "years_uninsured",
                "mitigation_years",
                "loss_prevented",
                "insurer_profit",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![r.base_premium, r.v0, r.retention];
            cells.extend(&r.years_per_level);
            cells.extend([
                r.years_uninsured,
                r.mitigation_years,
                r.loss_prevented,
                r.insurer_profit,
            ]);
            let line: Vec<String> = cells.into_iter().map(format_significant).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Premiums at which the regime changes.
    pub fn regime_changes_csv(&self) -> String {
        let mut out = String::from("premium_before,premium_after,regime_before,regime_after\n");
        for w in self.bands().windows(2) {
            out.push_str(&format!(
                "{},{},{},{}\n",
                format_significant(w[0].end),
                format_significant(w[1].start),
                w[0].regime,
                w[1].regime
            ));
        }
        out
    }

    /// Writes `sweep_<variant>.csv` and `regimes_<variant>.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
        let files = [
            (format!("sweep_{}.csv", self.variant), self.to_csv()),
            (
                format!("regimes_{}.csv", self.variant),
                self.regime_changes_csv(),
            ),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(&name);
            let tmp = dir.join(format!(".{name}.tmp"));
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(body.as_bytes())?;
            f.sync_all()?;
            std::fs::rename(&tmp, &path)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Decimal notation with six significant digits.
pub fn format_significant(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let s = if magnitude >= 5 {
        let unit = 10f64.powi(magnitude - 5);
        format!("{:.0}", (x / unit).round() * unit)
    } else {
        format!("{:.*}", (5 - magnitude) as usize, x)
    };
    if s.trim_start_matches('-')
        .chars()
        .all(|c| c == '0' || c == '.')
    {
        "0".into()
    } else {
        s
    }
}

/// Comparison of the Monte Carlo cost of the optimal policy with `V_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub v0: f64,
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    /// Largest state-frequency deviation in binomial standard errors.
    pub max_frequency_z: f64,
    /// States whose exact probability is 0 or 1 but were (not) visited.
    pub impossible_visits: usize,
}

impl McReport {
    pub fn value_consistent(&self) -> bool {
        (self.mean - self.v0).abs() <= (3.0 * self.std_error).max(5e-3 * self.v0.abs())
    }

    pub fn frequencies_consistent(&self) -> bool {
        self.max_frequency_z <= 3.0 && self.impossible_visits == 0
    }
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = config.loss_model()?;
        let menu = config.menu(&model.severity)?;
        let losses = model.tabulate(&menu.gammas(), &config.discretization()?)?;
        Ok(Experiment {
            config,
            model,
            menu,
            losses,
        })
    }

    pub fn contract(&self, variant: Variant, base_premium: f64) -> Result<ContractSpec> {
        self.config.contract(variant, base_premium, &self.menu)
    }

    pub fn solve(&self, variant: Variant, base_premium: f64) -> Result<PolicySolution> {
        let contract = self.contract(variant, base_premium)?;
        solve(
            &contract,
            &self.losses,
            &Quantity::standard(self.menu.len()),
        )
    }

    fn row(&self, variant: Variant, base_premium: f64, levels: &[i32]) -> Result<SweepRow> {
        let sol = self.solve(variant, base_premium)?;
        let occ = sol.occupancy();
        let years_per_level = levels
            .iter()
            .map(|b| {
                occ.years_per_level
                    .iter()
                    .find(|(l, _)| l == b)
                    .map_or(0.0, |x| x.1)
            })
            .collect();
        let missing = || Error::NumericalInstability("standard quantities missing".into());
        Ok(SweepRow {
            base_premium,
            v0: sol.initial_value(),
            retention: occ.retention,
            years_per_level,
            years_uninsured: occ.years_uninsured,
            mitigation_years: occ.mitigation_years,
            loss_prevented: sol.aggregate(Quantity::LossPrevented).ok_or_else(missing)?,
            insurer_profit: sol.insurer_profit().ok_or_else(missing)?,
        })
    }

    /// Solves every premium of the sweep grid; `jobs > 1` solves grid
    /// points concurrently, rows stay in premium order.
    pub fn sweep(&self, variant: Variant, jobs: usize) -> Result<SweepResult> {
        let levels: Vec<i32> =
            (self.config.contract.min_level..=self.config.contract.max_level).collect();
        let premiums = self.config.sweep.premiums();
        let rows = if jobs > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
            pool.install(|| {
                premiums
                    .par_iter()
                    .map(|&p| self.row(variant, p, &levels))
                    .collect::<Result<Vec<_>>>()
            })?
        } else {
            premiums
                .iter()
                .map(|&p| self.row(variant, p, &levels))
                .collect::<Result<Vec<_>>>()?
        };
        for r in &rows {
            let all = [
                r.v0,
                r.retention,
                r.years_uninsured,
                r.mitigation_years,
                r.loss_prevented,
                r.insurer_profit,
            ];
            if all.iter().chain(&r.years_per_level).any(|x| !x.is_finite()) {
                return Err(Error::NumericalInstability(format!(
                    "non-finite result at base premium {}",
                    r.base_premium
                )));
            }
        }
        Ok(SweepResult {
            variant,
            levels,
            rows,
        })
    }

    /// Simulates the optimal policy and compares with the dynamic program.
    pub fn mc_check(
        &self,
        variant: Variant,
        base_premium: f64,
        paths: usize,
        seed: u64,
    ) -> Result<McReport> {
        let sol = self.solve(variant, base_premium)?;
        let contract = sol.contract().clone();
        let summary = simulate(
            &contract,
            &self.model,
            &sol,
            &SimulationConfig { paths, seed },
        )?;
        let mut max_z: f64 = 0.0;
        let mut impossible = 0;
        for t in 0..=contract.horizon() {
            for (k, &p) in sol.marginal(t).iter().enumerate() {
                let f = summary.frequency(t, k);
                let se = (p * (1.0 - p) / paths as f64).sqrt();
                if se > 0.0 {
                    max_z = max_z.max((f - p).abs() / se);
                } else if (f - p).abs() > 1e-12 {
                    impossible += 1;
                }
            }
        }
        Ok(McReport {
            v0: sol.initial_value(),
            mean: summary.mean,
            std_error: summary.std_error,
            paths,
            max_frequency_z: max_z,
            impossible_visits: impossible,
        })
    }
}

/// Output directory: explicit argument, then the environment, then the config.
pub fn output_dir(config: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.output.dir.clone())
}
