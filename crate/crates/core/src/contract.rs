//! Bonus-Malus contract: levels, transition rules, schedules, fees and the
//! mitigation menu, together with the yearly state transition and cost.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Insurance status of the contract at the end of a year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    /// Never signed.
    NotSigned,
    Active,
    /// Withdrawn, with a counter of inactive years.
    Off(u32),
}

impl Status {
    pub fn is_off(self) -> bool {
        matches!(self, Status::Off(_))
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::NotSigned => write!(f, "no"),
            Status::Active => write!(f, "on"),
            Status::Off(y) => write!(f, "off_{y}"),
        }
    }
}

impl FromStr for Status {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no" => Ok(Status::NotSigned),
            "on" => Ok(Status::Active),
            _ => s
                .strip_prefix("off_")
                .and_then(|y| y.parse::<u32>().ok())
                .filter(|&y| y >= 1)
                .map(Status::Off)
                .ok_or_else(|| Error::Domain(format!("unknown contract status `{s}`"))),
        }
    }
}

impl Serialize for Status {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Status {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContractState {
    pub level: i32,
    pub status: Status,
}

impl ContractState {
    pub fn new(level: i32, status: Status) -> Self {
        ContractState { level, status }
    }

    /// `(0, no)`, where every process starts.
    pub fn initial() -> Self {
        ContractState::new(0, Status::NotSigned)
    }
}

impl fmt::Display for ContractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.level, self.status)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationMeasure {
    /// Annual investment.
    pub beta: f64,
    /// Per-event severity reduction.
    pub gamma: f64,
}

/// Mutually exclusive self-mitigation measures; measure 0 is "do nothing".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationMenu {
    measures: Vec<MitigationMeasure>,
}

impl MitigationMenu {
    pub fn new(measures: Vec<MitigationMeasure>) -> Result<Self> {
        let first = measures
            .first()
            .ok_or_else(|| Error::config("mitigation", "menu must contain measure 0"))?;
        if first.beta != 0.0 || first.gamma != 0.0 {
            return Err(Error::config(
                "mitigation[0]",
                "measure 0 must have beta = gamma = 0",
            ));
        }
        for (d, m) in measures.iter().enumerate() {
            if !(m.beta >= 0.0 && m.beta.is_finite() && m.gamma >= 0.0 && m.gamma.is_finite()) {
                return Err(Error::config(
                    format!("mitigation[{d}]"),
                    "beta and gamma must be finite and non-negative",
                ));
            }
        }
        Ok(MitigationMenu { measures })
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn beta(&self, d: usize) -> f64 {
        self.measures[d].beta
    }

    pub fn gamma(&self, d: usize) -> f64 {
        self.measures[d].gamma
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.measures.iter().map(|m| m.gamma).collect()
    }

    pub fn measures(&self) -> &[MitigationMeasure] {
        &self.measures
    }
}

/// One piece of a claim transition: claims in `(threshold, next threshold]`
/// move the policy to `level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaimPiece {
    pub threshold: f64,
    pub level: i32,
}

/// Level update of an active contract as a function of the claim amount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimTransition {
    pub no_claim: i32,
    pub pieces: Vec<ClaimPiece>,
}

impl ClaimTransition {
    pub fn level_for(&self, claim: f64) -> i32 {
        if claim <= 0.0 {
            return self.no_claim;
        }
        let k = self.pieces.partition_point(|p| p.threshold < claim);
        self.pieces[k - 1].level
    }

    /// Highest level reachable through a claim.
    pub fn highest(&self) -> i32 {
        self.pieces
            .last()
            .map_or(self.no_claim, |p| p.level.max(self.no_claim))
    }

    /// Claim amounts `{c ≥ 0 : BM(b, c) = target}` as an interval.
    pub fn claims_landing_on(&self, target: i32) -> crate::compound::Interval {
        use crate::compound::Interval;
        let first = self.pieces.iter().position(|p| p.level == target);
        let upper_of = |k: usize| {
            self.pieces
                .get(k + 1)
                .map_or(f64::INFINITY, |p| p.threshold)
        };
        match first {
            Some(k1) => {
                let k2 = k1
                    + self.pieces[k1..]
                        .iter()
                        .take_while(|p| p.level == target)
                        .count()
                    - 1;
                let upper = upper_of(k2);
                let mut iv = Interval::open_closed(self.pieces[k1].threshold, upper);
                if upper.is_infinite() {
                    iv.upper_closed = false;
                }
                if self.no_claim == target && k1 == 0 {
                    iv.lower_closed = true;
                }
                iv
            }
            None if self.no_claim == target => Interval {
                lower: 0.0,
                lower_closed: true,
                upper: 0.0,
                upper_closed: true,
            },
            None => Interval::empty(),
        }
    }
}

/// Bonus-Malus levels `min_level..=max_level` with the claim and inactive
/// transition rules.
#[derive(Debug, Clone, PartialEq)]
pub struct BonusMalusRule {
    min_level: i32,
    max_level: i32,
    horizon: u32,
    claim: Vec<ClaimTransition>,
    inactive: Vec<Vec<ContractState>>,
}

impl BonusMalusRule {
    /// `claim[k]` and `inactive[k]` describe level `min_level + k`;
    /// `inactive[k]` is indexed by status in the order
    /// `no, on, off_1, …, off_horizon`.
    pub fn new(
        min_level: i32,
        max_level: i32,
        horizon: u32,
        claim: Vec<ClaimTransition>,
        inactive: Vec<Vec<ContractState>>,
    ) -> Result<Self> {
        let rule = BonusMalusRule {
            min_level,
            max_level,
            horizon,
            claim,
            inactive,
        };
        rule.validate()?;
        Ok(rule)
    }

    fn validate(&self) -> Result<()> {
        if self.min_level > 0 || self.max_level < 0 {
            return Err(Error::config(
                "contract.levels",
                "level range must contain 0",
            ));
        }
        let n = self.n_levels();
        if self.claim.len() != n {
            return Err(Error::config(
                "contract.claim_transition",
                "one entry per level required",
            ));
        }
        if self.inactive.len() != n || self.inactive.iter().any(|r| r.len() != self.n_statuses()) {
            return Err(Error::config(
                "contract.inactive_transition",
                "must be total over levels and contract states",
            ));
        }
        for (k, ct) in self.claim.iter().enumerate() {
            let b = self.min_level + k as i32;
            let field = format!("contract.claim_transition[{b}]");
            if ct.pieces.is_empty() || ct.pieces[0].threshold != 0.0 {
                return Err(Error::config(
                    field,
                    "first claim piece must start at threshold 0",
                ));
            }
            if ct
                .pieces
                .windows(2)
                .any(|w| !(w[1].threshold > w[0].threshold))
            {
                return Err(Error::config(
                    field,
                    "claim thresholds must be strictly increasing",
                ));
            }
            if ct.pieces.iter().any(|p| !p.threshold.is_finite()) {
                return Err(Error::config(field, "claim thresholds must be finite"));
            }
            let mut levels = std::iter::once(ct.no_claim).chain(ct.pieces.iter().map(|p| p.level));
            if levels.clone().any(|l| !self.contains_level(l)) {
                return Err(Error::config(field, "transition leaves the level range"));
            }
            let mut prev = levels.next().unwrap_or_default();
            for l in levels {
                if l < prev {
                    return Err(Error::config(
                        field,
                        "level must be non-decreasing in the claim amount",
                    ));
                }
                prev = l;
            }
        }
        for (k, row) in self.inactive.iter().enumerate() {
            let b = self.min_level + k as i32;
            for (s, to) in row.iter().enumerate() {
                let from = self.status_at(s);
                let field = format!("contract.inactive_transition[{b}, {from}]");
                if from == Status::NotSigned && *to != ContractState::new(b, Status::NotSigned) {
                    return Err(Error::config(
                        field,
                        "an unsigned contract must stay unsigned",
                    ));
                }
                if !self.contains_level(to.level) {
                    return Err(Error::config(field, "target level outside the level range"));
                }
                match to.status {
                    Status::Active => {
                        return Err(Error::config(
                            field,
                            "inactive transition cannot activate the contract",
                        ))
                    }
                    Status::Off(y) if y == 0 || y > self.horizon => {
                        return Err(Error::config(field, "off counter must lie in 1..=horizon"))
                    }
                    Status::NotSigned if from != Status::NotSigned => {
                        return Err(Error::config(
                            field,
                            "a signed contract cannot become unsigned",
                        ))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn min_level(&self) -> i32 {
        self.min_level
    }
    pub fn max_level(&self) -> i32 {
        self.max_level
    }
    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn n_levels(&self) -> usize {
        (self.max_level - self.min_level + 1) as usize
    }

    pub fn n_statuses(&self) -> usize {
        self.horizon as usize + 2
    }

    pub fn levels(&self) -> impl Iterator<Item = i32> + Clone {
        self.min_level..=self.max_level
    }

    pub fn contains_level(&self, b: i32) -> bool {
        (self.min_level..=self.max_level).contains(&b)
    }

    pub fn level_index(&self, b: i32) -> usize {
        (b - self.min_level) as usize
    }

    pub fn status_index(&self, s: Status) -> usize {
        match s {
            Status::NotSigned => 0,
            Status::Active => 1,
            Status::Off(y) => 1 + y as usize,
        }
    }

    pub fn status_at(&self, idx: usize) -> Status {
        match idx {
            0 => Status::NotSigned,
            1 => Status::Active,
            k => Status::Off(k as u32 - 1),
        }
    }

    pub fn claim_transition(&self, b: i32) -> &ClaimTransition {
        &self.claim[self.level_index(b)]
    }

    /// Level after a year with the contract active and claim amount `claim`.
    pub fn claim_level(&self, b: i32, claim: f64) -> i32 {
        self.claim_transition(b).level_for(claim)
    }

    /// State after a year without coverage.
    pub fn inactive_transition(&self, state: ContractState) -> ContractState {
        self.inactive[self.level_index(state.level)][self.status_index(state.status)]
    }
}

/// Deterministic premium, deductible, cap and fee schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractSchedules {
    pub horizon: u32,
    /// Per-year discount factor `e^{−r}`.
    pub discount_factor: f64,
    /// `[level index][year − 1]`.
    pub premium: Vec<Vec<f64>>,
    pub deductible: Vec<Vec<f64>>,
    pub max_compensation: Vec<Vec<f64>>,
    /// `[year − 1]`.
    pub fee_in: Vec<f64>,
    pub fee_out: Vec<f64>,
    pub fee_re: f64,
}

impl ContractSchedules {
    fn validate(&self, n_levels: usize) -> Result<()> {
        let t = self.horizon as usize;
        if !(self.discount_factor > 0.0 && self.discount_factor <= 1.0) {
            return Err(Error::config("discount_factor", "must lie in (0, 1]"));
        }
        for (name, table) in [
            ("premium", &self.premium),
            ("deductible", &self.deductible),
            ("max_compensation", &self.max_compensation),
        ] {
            let field = format!("contract.{name}");
            if table.len() != n_levels || table.iter().any(|r| r.len() != t) {
                return Err(Error::config(
                    field,
                    "schedule must be total on levels × years",
                ));
            }
            if table
                .iter()
                .flatten()
                .any(|v| !(v.is_finite() && *v >= 0.0))
            {
                return Err(Error::config(
                    field,
                    "entries must be finite and non-negative",
                ));
            }
        }
        for y in 0..t {
            if self.premium.windows(2).any(|w| w[1][y] < w[0][y]) {
                return Err(Error::config(
                    "contract.premium",
                    format!(
                        "premium must be non-decreasing in the level (year {})",
                        y + 1
                    ),
                ));
            }
        }
        for (name, fees) in [("fee_in", &self.fee_in), ("fee_out", &self.fee_out)] {
            if fees.len() != t || fees.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::config(
                    format!("contract.{name}"),
                    "one finite non-negative fee per year required",
                ));
            }
        }
        if !(self.fee_re.is_finite() && self.fee_re >= 0.0) {
            return Err(Error::config(
                "contract.fee_re",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Decisions taken in one year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decision {
    pub mitigation: usize,
    pub insure: bool,
    pub claim: bool,
}

/// Loss events of one year: the severities of the `n` events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct YearLosses {
    pub severities: Vec<f64>,
}

/// A complete contract with the mitigation menu it is offered alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractSpec {
    pub rule: BonusMalusRule,
    pub schedules: ContractSchedules,
    pub menu: MitigationMenu,
}

impl ContractSpec {
    pub fn new(
        rule: BonusMalusRule,
        schedules: ContractSchedules,
        menu: MitigationMenu,
    ) -> Result<Self> {
        if schedules.horizon != rule.horizon() || schedules.horizon == 0 {
            return Err(Error::config(
                "horizon",
                "rule and schedules must share a positive horizon",
            ));
        }
        schedules.validate(rule.n_levels())?;
        Ok(ContractSpec {
            rule,
            schedules,
            menu,
        })
    }

    pub fn horizon(&self) -> u32 {
        self.schedules.horizon
    }

    pub fn discount_factor(&self) -> f64 {
        self.schedules.discount_factor
    }

    pub fn n_states(&self) -> usize {
        self.rule.n_levels() * self.rule.n_statuses()
    }

    pub fn state_index(&self, s: ContractState) -> usize {
        self.rule.level_index(s.level) * self.rule.n_statuses() + self.rule.status_index(s.status)
    }

    pub fn state_at(&self, idx: usize) -> ContractState {
        let ns = self.rule.n_statuses();
        ContractState::new(
            self.rule.min_level() + (idx / ns) as i32,
            self.rule.status_at(idx % ns),
        )
    }

    pub fn states(&self) -> impl Iterator<Item = ContractState> + '_ {
        (0..self.n_states()).map(|k| self.state_at(k))
    }

    fn cell(&self, table: &[Vec<f64>], b: i32, t: u32) -> f64 {
        table[self.rule.level_index(b)][t as usize - 1]
    }

    pub fn premium(&self, b: i32, t: u32) -> f64 {
        self.cell(&self.schedules.premium, b, t)
    }

    pub fn deductible(&self, b: i32, t: u32) -> f64 {
        self.cell(&self.schedules.deductible, b, t)
    }

    pub fn max_compensation(&self, b: i32, t: u32) -> f64 {
        self.cell(&self.schedules.max_compensation, b, t)
    }

    pub fn fee_in(&self, t: u32) -> f64 {
        self.schedules.fee_in[t as usize - 1]
    }

    pub fn fee_out(&self, t: u32) -> f64 {
        self.schedules.fee_out[t as usize - 1]
    }

    pub fn fee_re(&self) -> f64 {
        self.schedules.fee_re
    }

    /// `Σ_k (x_k − γ(d))⁺`.
    pub fn aggregate_loss(&self, d: usize, w: &YearLosses) -> f64 {
        let gamma = self.menu.gamma(d);
        w.severities.iter().map(|&x| (x - gamma).max(0.0)).sum()
    }

    /// Claimable amount `min((l − deductible)⁺, cap)` in year `t` at level `b`.
    pub fn compensation(&self, b: i32, t: u32, loss: f64) -> f64 {
        crate::compound::layer_payout(loss, self.deductible(b, t), self.max_compensation(b, t))
    }

    fn check(&self, state: ContractState, t: u32, insure: bool, claim: bool) -> Result<()> {
        if claim && !insure {
            return Err(Error::Admissibility(format!(
                "claim without active coverage in year {t} at {state}"
            )));
        }
        if t == 0 || t > self.horizon() {
            return Err(Error::Domain(format!(
                "year {t} outside 1..={}",
                self.horizon()
            )));
        }
        Ok(())
    }

    /// Yearly fixed payments: investment, premium and switching fees.
    pub fn fixed_cost(&self, state: ContractState, t: u32, d: usize, insure: bool) -> f64 {
        let mut c = self.menu.beta(d);
        match (state.status, insure) {
            (Status::NotSigned, true) => c += self.fee_in(t),
            (Status::Active, false) => c += self.fee_out(t),
            (Status::Off(_), true) => c += self.fee_re(),
            _ => {}
        }
        if insure {
            c += self.premium(state.level, t);
        }
        c
    }

    /// State transition given the aggregate loss of the year.
    pub fn transition(
        &self,
        state: ContractState,
        t: u32,
        insure: bool,
        claim: bool,
        loss: f64,
    ) -> Result<ContractState> {
        self.check(state, t, insure, claim)?;
        Ok(if insure {
            let c = if claim {
                self.compensation(state.level, t, loss)
            } else {
                0.0
            };
            ContractState::new(self.rule.claim_level(state.level, c), Status::Active)
        } else {
            self.rule.inactive_transition(state)
        })
    }

    /// Cost of the year given the aggregate loss.
    pub fn cost(
        &self,
        state: ContractState,
        t: u32,
        d: usize,
        insure: bool,
        claim: bool,
        loss: f64,
    ) -> Result<f64> {
        self.check(state, t, insure, claim)?;
        let refund = if insure && claim {
            self.compensation(state.level, t, loss)
        } else {
            0.0
        };
        Ok(self.fixed_cost(state, t, d, insure) + loss - refund)
    }

    pub fn step(
        &self,
        state: ContractState,
        t: u32,
        decision: Decision,
        w: &YearLosses,
    ) -> Result<ContractState> {
        let loss = self.aggregate_loss(decision.mitigation, w);
        self.transition(state, t, decision.insure, decision.claim, loss)
    }

    pub fn stage_cost(
        &self,
        state: ContractState,
        t: u32,
        decision: Decision,
        w: &YearLosses,
    ) -> Result<f64> {
        let loss = self.aggregate_loss(decision.mitigation, w);
        self.cost(
            state,
            t,
            decision.mitigation,
            decision.insure,
            decision.claim,
            loss,
        )
    }

    /// The same contract without experience rating: a single level 0 whose
    /// schedules and inactive rule are those of level 0 here.
    pub fn without_bonus_malus(&self) -> Result<ContractSpec> {
        let horizon = self.horizon();
        let k0 = self.rule.level_index(0);
        let inactive_row = self.rule.inactive[k0]
            .iter()
            .map(|s| ContractState::new(0, s.status))
            .collect();
        let rule = BonusMalusRule::new(
            0,
            0,
            horizon,
            vec![ClaimTransition {
                no_claim: 0,
                pieces: vec![ClaimPiece {
                    threshold: 0.0,
                    level: 0,
                }],
            }],
            vec![inactive_row],
        )?;
        let s = &self.schedules;
        let schedules = ContractSchedules {
            premium: vec![s.premium[k0].clone()],
            deductible: vec![s.deductible[k0].clone()],
            max_compensation: vec![s.max_compensation[k0].clone()],
            ..s.clone()
        };
        ContractSpec::new(rule, schedules, self.menu.clone())
    }
}
