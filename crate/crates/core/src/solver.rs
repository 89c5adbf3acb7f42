//! Backward induction for the insured's optimal mitigation, insurance and
//! claiming policy, followed by a forward pass for the induced Markov
//! kernels, state occupancy and aggregate quantities.

use crate::compound::{Interval, MitigatedLoss};
use crate::contract::{ContractSpec, ContractState, Status};
use crate::error::{Error, Result};

/// Per-year quantity whose expected total under the optimal policy is
/// reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    /// Indicator that measure `d` is adopted (undiscounted).
    Adoption(usize),
    /// Discounted investment in mitigation.
    MitigationSpend,
    /// Discounted premiums and fees paid to the insurer.
    InsurerIncome,
    /// Discounted loss removed by the mitigation measure.
    LossPrevented,
    /// Discounted compensation received.
    Compensation,
}

impl Quantity {
    /// Adoption of every measure followed by the four money quantities.
    pub fn standard(n_measures: usize) -> Vec<Quantity> {
        (0..n_measures)
            .map(Quantity::Adoption)
            .chain([
                Quantity::MitigationSpend,
                Quantity::InsurerIncome,
                Quantity::LossPrevented,
                Quantity::Compensation,
            ])
            .collect()
    }
}

/// Compensation amounts worth claiming when the claim moves the policy to
/// `target`: those strictly above `threshold`, the value gap between
/// `target` and the claim-free level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimRegion {
    pub target: i32,
    pub threshold: f64,
    pub interval: Interval,
}

/// Optimal policy with its value function and derived quantities.
#[derive(Debug, Clone)]
pub struct PolicySolution {
    contract: ContractSpec,
    /// `[t][state]`, `t = 0..=T`.
    values: Vec<Vec<f64>>,
    /// `[t − 1][state]`.
    mitigation: Vec<Vec<usize>>,
    insure: Vec<Vec<bool>>,
    /// `[t − 1][level index]`.
    claim_regions: Vec<Vec<Vec<ClaimRegion>>>,
    /// `[t − 1][from state]` as sparse `(to state, probability)` rows.
    kernels: Vec<Vec<Vec<(usize, f64)>>>,
    /// `[t][state]`, `t = 0..=T`.
    marginals: Vec<Vec<f64>>,
    quantities: Vec<Quantity>,
    /// `[quantity][t − 1]`.
    qoi_per_year: Vec<Vec<f64>>,
    qoi_aggregate: Vec<f64>,
}

/// Occupancy statistics of the optimal policy started from `(0, no)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySummary {
    /// Mean fraction of years that end with an active contract.
    pub retention: f64,
    /// Expected number of insured years spent at each level.
    pub years_per_level: Vec<(i32, f64)>,
    pub years_uninsured: f64,
    /// Expected number of years with a nonzero measure.
    pub mitigation_years: f64,
}

/// Grid expectations for a fixed year, level and measure.
struct LevelTerms {
    /// `Σ_{b'} E[1_ℒ(λ)(λ − α)]`.
    claim_gain: f64,
    /// `Σ_{b'} E[1_ℒ(λ) λ]`.
    compensation: f64,
    /// `P(λ ∈ ℒ(b, b'))` for each region.
    region_probs: Vec<f64>,
}

fn check_losses(contract: &ContractSpec, losses: &[MitigatedLoss]) -> Result<()> {
    let menu = &contract.menu;
    if losses.len() != menu.len() {
        return Err(Error::Domain(format!(
            "{} loss tables for {} mitigation measures",
            losses.len(),
            menu.len()
        )));
    }
    for (d, l) in losses.iter().enumerate() {
        let g = menu.gamma(d);
        if (l.gamma - g).abs() > 1e-12 * (1.0 + g.abs()) {
            return Err(Error::Domain(format!(
                "loss table {d} was built for gamma {} but the menu has {g}",
                l.gamma
            )));
        }
    }
    Ok(())
}

/// Claim regions of level `b` in year `t` given `V_t`.
fn claim_regions(contract: &ContractSpec, v_next: &[f64], b: i32) -> Vec<ClaimRegion> {
    let rule = &contract.rule;
    let ct = rule.claim_transition(b);
    let base = ct.no_claim;
    let v_on = |l: i32| v_next[contract.state_index(ContractState::new(l, Status::Active))];
    (base..=ct.highest())
        .filter_map(|target| {
            let threshold = if target == base {
                0.0
            } else {
                v_on(target) - v_on(base)
            };
            let interval = ct.claims_landing_on(target).strictly_above(threshold);
            (!interval.is_empty()).then_some(ClaimRegion {
                target,
                threshold,
                interval,
            })
        })
        .collect()
}

fn level_terms(loss: &MitigatedLoss, regions: &[ClaimRegion], dtb: f64, cap: f64) -> LevelTerms {
    let dist = &loss.distribution;
    let mut claim_gain = 0.0;
    let mut compensation = 0.0;
    let mut region_probs = Vec::with_capacity(regions.len());
    for r in regions {
        claim_gain += dist.layer_expectation(&r.interval, dtb, cap, r.threshold);
        compensation += dist.layer_expectation(&r.interval, dtb, cap, 0.0);
        region_probs.push(dist.layer_probability(&r.interval, dtb, cap));
    }
    LevelTerms {
        claim_gain,
        compensation,
        region_probs,
    }
}

/// Solves the control problem by backward induction and evaluates
/// `quantities` under the optimal policy.
///
/// `losses[d]` holds the aggregate-loss table of measure `d`.
pub fn solve(
    contract: &ContractSpec,
    losses: &[MitigatedLoss],
    quantities: &[Quantity],
) -> Result<PolicySolution> {
    check_losses(contract, losses)?;
    for q in quantities {
        if let Quantity::Adoption(d) = q {
            if *d >= contract.menu.len() {
                return Err(Error::Domain(format!("no mitigation measure {d}")));
            }
        }
    }
    let horizon = contract.horizon() as usize;
    let n = contract.n_states();
    let n_measures = contract.menu.len();
    let df = contract.discount_factor();
    let rule = &contract.rule;

    let mut values = vec![vec![0.0; n]; horizon + 1];
    let mut mitigation = vec![vec![0usize; n]; horizon];
    let mut insure = vec![vec![false; n]; horizon];
    let mut claim_regions_all = vec![Vec::new(); horizon];
    let mut kernels = vec![vec![Vec::new(); n]; horizon];
    // discounted per-state quantity values, [t − 1][quantity][state]
    let mut zeta = vec![vec![vec![0.0; n]; quantities.len()]; horizon];

    for t in (1..=horizon).rev() {
        let year = t as u32;
        let (head, tail) = values.split_at_mut(t);
        let v_next = &tail[0];
        let v_prev = &mut head[t - 1];
        // quantities of year t are discounted to the start of that year
        let year_discount = df.powi(t as i32 - 1);
        let mut regions_t = Vec::with_capacity(rule.n_levels());

        for b in rule.levels() {
            let regions = claim_regions(contract, v_next, b);
            let dtb = contract.deductible(b, year);
            let cap = contract.max_compensation(b, year);
            let terms: Vec<LevelTerms> = losses
                .iter()
                .map(|l| level_terms(l, &regions, dtb, cap))
                .collect();
            let base = rule.claim_transition(b).no_claim;
            let base_idx = contract.state_index(ContractState::new(base, Status::Active));
            let h_insured: Vec<f64> = terms
                .iter()
                .map(|x| v_next[base_idx] - x.claim_gain)
                .collect();

            for s in 0..rule.n_statuses() {
                let state = ContractState::new(b, rule.status_at(s));
                let idx = contract.state_index(state);
                let idle = contract.state_index(rule.inactive_transition(state));
                let mut best = (f64::INFINITY, 0usize, false);
                for d in 0..n_measures {
                    let stage = losses[d].expected_loss;
                    for ins in [false, true] {
                        let h = if ins { h_insured[d] } else { v_next[idle] };
                        let obj = contract.fixed_cost(state, year, d, ins) + stage + h;
                        if obj < best.0 {
                            best = (obj, d, ins);
                        }
                    }
                }
                let (obj, d, ins) = best;
                if !obj.is_finite() {
                    return Err(Error::NumericalInstability(format!(
                        "non-finite value at year {t}, state {state}"
                    )));
                }
                v_prev[idx] = df * obj;
                mitigation[t - 1][idx] = d;
                insure[t - 1][idx] = ins;

                kernels[t - 1][idx] = if ins {
                    let mut row = Vec::with_capacity(regions.len() + 1);
                    let mut rest = 1.0;
                    for (r, &p) in regions.iter().zip(&terms[d].region_probs) {
                        if r.target != base && p > 0.0 {
                            let to =
                                contract.state_index(ContractState::new(r.target, Status::Active));
                            row.push((to, p));
                            rest -= p;
                        }
                    }
                    row.push((base_idx, rest.max(0.0)));
                    row
                } else {
                    vec![(idle, 1.0)]
                };

                for (m, q) in quantities.iter().enumerate() {
                    zeta[t - 1][m][idx] = match *q {
                        Quantity::Adoption(k) => f64::from(u8::from(d == k)),
                        Quantity::MitigationSpend => year_discount * contract.menu.beta(d),
                        Quantity::InsurerIncome => {
                            year_discount * (contract.fixed_cost(state, year, 0, ins))
                        }
                        Quantity::LossPrevented => {
                            year_discount * (losses[d].expected_ground_up - losses[d].expected_loss)
                        }
                        Quantity::Compensation => {
                            if ins {
                                year_discount * terms[d].compensation
                            } else {
                                0.0
                            }
                        }
                    };
                }
            }
            regions_t.push(regions);
        }
        claim_regions_all[t - 1] = regions_t;
    }

    let mut marginals = vec![vec![0.0; n]; horizon + 1];
    marginals[0][contract.state_index(ContractState::initial())] = 1.0;
    let mut qoi_per_year = vec![vec![0.0; horizon]; quantities.len()];
    for t in 1..=horizon {
        let (head, tail) = marginals.split_at_mut(t);
        let prev = &head[t - 1];
        let next = &mut tail[0];
        for (from, &p) in prev.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for &(to, q) in &kernels[t - 1][from] {
                next[to] += p * q;
            }
            for (m, per_year) in qoi_per_year.iter_mut().enumerate() {
                per_year[t - 1] += p * zeta[t - 1][m][from];
            }
        }
    }
    let qoi_aggregate = qoi_per_year.iter().map(|y| y.iter().sum()).collect();

    Ok(PolicySolution {
        contract: contract.clone(),
        values,
        mitigation,
        insure,
        claim_regions: claim_regions_all,
        kernels,
        marginals,
        quantities: quantities.to_vec(),
        qoi_per_year,
        qoi_aggregate,
    })
}

impl PolicySolution {
    pub fn contract(&self) -> &ContractSpec {
        &self.contract
    }

    pub fn horizon(&self) -> u32 {
        self.contract.horizon()
    }

    /// `V_t(state)`.
    pub fn value(&self, t: u32, state: ContractState) -> f64 {
        self.values[t as usize][self.contract.state_index(state)]
    }

    /// `V_t` over all states, indexed like [`ContractSpec::state_index`].
    pub fn values(&self, t: u32) -> &[f64] {
        &self.values[t as usize]
    }

    /// Optimal expected discounted cost from `(0, no)`.
    pub fn initial_value(&self) -> f64 {
        self.value(0, ContractState::initial())
    }

    /// Optimal `(measure, insure)` in year `t` at `state`.
    pub fn decision(&self, t: u32, state: ContractState) -> (usize, bool) {
        let idx = self.contract.state_index(state);
        let k = t as usize - 1;
        (self.mitigation[k][idx], self.insure[k][idx])
    }

    pub fn claim_regions(&self, t: u32, level: i32) -> &[ClaimRegion] {
        &self.claim_regions[t as usize - 1][self.contract.rule.level_index(level)]
    }

    /// Optimal claim decision in year `t` at `state` for aggregate loss `loss`.
    pub fn claim_rule(&self, t: u32, state: ContractState, loss: f64) -> bool {
        let (_, ins) = self.decision(t, state);
        if !ins {
            return false;
        }
        let c = self.contract.compensation(state.level, t, loss);
        self.claim_regions(t, state.level)
            .iter()
            .any(|r| r.interval.contains(c))
    }

    /// Sparse transition row of year `t` from `state`.
    pub fn kernel(&self, t: u32, state: ContractState) -> &[(usize, f64)] {
        &self.kernels[t as usize - 1][self.contract.state_index(state)]
    }

    /// State distribution after year `t` (`t = 0` is the start).
    pub fn marginal(&self, t: u32) -> &[f64] {
        &self.marginals[t as usize]
    }

    pub fn quantities(&self) -> &[Quantity] {
        &self.quantities
    }

    fn position(&self, q: Quantity) -> Option<usize> {
        self.quantities.iter().position(|&x| x == q)
    }

    /// Expected total of `q` over the horizon, if it was requested.
    pub fn aggregate(&self, q: Quantity) -> Option<f64> {
        self.position(q).map(|m| self.qoi_aggregate[m])
    }

    /// Expected value of `q` in each year, if it was requested.
    pub fn per_year(&self, q: Quantity) -> Option<&[f64]> {
        self.position(q).map(|m| self.qoi_per_year[m].as_slice())
    }

    /// Expected discounted income minus compensation paid.
    pub fn insurer_profit(&self) -> Option<f64> {
        Some(self.aggregate(Quantity::InsurerIncome)? - self.aggregate(Quantity::Compensation)?)
    }

    pub fn occupancy(&self) -> OccupancySummary {
        let c = &self.contract;
        let rule = &c.rule;
        let horizon = self.horizon() as usize;
        let mut per_level = vec![0.0; rule.n_levels()];
        let mut uninsured = 0.0;
        let mut mitigating = 0.0;
        let mut retention = 0.0;
        for t in 1..=horizon {
            for (idx, &p) in self.marginals[t - 1].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                if self.insure[t - 1][idx] {
                    per_level[rule.level_index(c.state_at(idx).level)] += p;
                } else {
                    uninsured += p;
                }
                if self.mitigation[t - 1][idx] != 0 {
                    mitigating += p;
                }
            }
            retention += self.marginals[t]
                .iter()
                .enumerate()
                .filter(|(idx, _)| c.state_at(*idx).status == Status::Active)
                .map(|(_, p)| p)
                .sum::<f64>();
        }
        OccupancySummary {
            retention: retention / horizon as f64,
            years_per_level: rule.levels().zip(per_level).collect(),
            years_uninsured: uninsured,
            mitigation_years: mitigating,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compound::DiscreteLossDistribution;
    use crate::contract::tests::experiment_contract;
    use crate::contract::{
        BonusMalusRule, ClaimPiece, ClaimTransition, ContractSchedules, Decision,
        MitigationMeasure, MitigationMenu, YearLosses,
    };

    fn table(gamma: f64, atoms: Vec<f64>, probs: Vec<f64>, ground_up: f64) -> MitigatedLoss {
        let distribution = DiscreteLossDistribution::new(atoms, probs).unwrap();
        MitigatedLoss {
            gamma,
            expected_loss: distribution.mean(),
            expected_ground_up: ground_up,
            distribution,
        }
    }

    /// Two measures on a coarse loss grid; the mitigated table is the
    /// unmitigated one shifted down by one unit.
    fn coarse_losses() -> Vec<MitigatedLoss> {
        let raw = table(
            0.0,
            vec![0.0, 1.0, 3.0, 12.0],
            vec![0.55, 0.25, 0.15, 0.05],
            1.3,
        );
        let mitigated = table(1.0, vec![0.0, 2.0, 11.0], vec![0.8, 0.15, 0.05], 1.3);
        vec![raw, mitigated]
    }

    #[test]
    fn single_year_insurance_is_dominated_by_its_premium() {
        let mut c = experiment_contract(100.0);
        c.schedules.horizon = 1;
        let losses = coarse_losses();
        let one_year = ContractSpec::new(
            crate::contract::tests::experiment_rule(1),
            ContractSchedules {
                horizon: 1,
                premium: c.schedules.premium.iter().map(|r| vec![r[0]]).collect(),
                deductible: vec![vec![0.5]; 4],
                max_compensation: vec![vec![1000.0]; 4],
                fee_in: vec![0.0],
                fee_out: vec![3.0],
                ..c.schedules.clone()
            },
            c.menu.clone(),
        )
        .unwrap();
        let sol = solve(&one_year, &losses, &Quantity::standard(2)).unwrap();
        let (d, ins) = sol.decision(1, ContractState::initial());
        assert!(!ins);
        // mitigation costs 0.5 but prevents only 1.3 − 0.85 of expected loss
        assert_eq!(d, 0);
        assert!((sol.initial_value() - 0.95 * 1.3).abs() < 1e-12);
    }

    #[test]
    fn mismatched_tables_are_rejected() {
        let c = experiment_contract(1.0);
        let losses = coarse_losses();
        assert!(solve(&c, &losses[..1], &[]).is_err());
        let mut wrong = coarse_losses();
        wrong[1].gamma = 2.0;
        assert!(solve(&c, &wrong, &[]).is_err());
        assert!(solve(&c, &losses, &[Quantity::Adoption(5)]).is_err());
    }

    #[test]
    fn structural_invariants_hold() {
        for base in [0.5, 2.0, 4.0, 6.0] {
            let c = experiment_contract(base);
            let sol = solve(&c, &coarse_losses(), &Quantity::standard(2)).unwrap();
            for t in 0..=20 {
                assert!(sol.values(t).iter().all(|v| *v >= 0.0 && v.is_finite()));
                let mass: f64 = sol.marginal(t).iter().sum();
                assert!((mass - 1.0).abs() < 1e-12);
            }
            for t in 1..=20 {
                for s in c.states() {
                    let row = sol.kernel(t, s);
                    let total: f64 = row.iter().map(|(_, p)| p).sum();
                    assert!((total - 1.0).abs() < 1e-12, "year {t}, {s}: {total}");
                    assert!(row.iter().all(|(_, p)| *p >= 0.0));
                }
            }
            assert!(sol.insurer_profit().is_some());
            let occ = sol.occupancy();
            let years: f64 =
                occ.years_per_level.iter().map(|x| x.1).sum::<f64>() + occ.years_uninsured;
            assert!((years - 20.0).abs() < 1e-10);
            assert!((0.0..=1.0).contains(&occ.retention));
        }
    }

    #[test]
    fn value_is_monotone_in_the_premium() {
        let losses = coarse_losses();
        let mut last = 0.0;
        for k in 0..30 {
            let v = solve(&experiment_contract(0.25 * k as f64), &losses, &[])
                .unwrap()
                .initial_value();
            assert!(v >= last - 1e-12);
            last = v;
        }
    }

    /// The value from the claim rule, the stage cost and `V_t` reproduces
    /// `V_{t−1}` exactly: claiming per the rule is optimal atom by atom.
    #[test]
    fn claim_rule_is_pointwise_optimal() {
        let c = experiment_contract(2.0);
        let losses = coarse_losses();
        let sol = solve(&c, &losses, &[]).unwrap();
        for t in 1..=20u32 {
            for s in c.states() {
                let (d, ins) = sol.decision(t, s);
                let dist = &losses[d].distribution;
                let mut expect = 0.0;
                for (&l, &p) in dist.atoms().iter().zip(dist.probs()) {
                    let claim = sol.claim_rule(t, s, l);
                    let next = |j: bool| {
                        let to = c.transition(s, t, ins, j, l).unwrap();
                        c.cost(s, t, d, ins, j, l).unwrap() + sol.value(t, to)
                    };
                    let chosen = next(claim);
                    if ins {
                        assert!(chosen <= next(!claim) + 1e-12, "year {t}, {s}, loss {l}");
                    }
                    expect += p * chosen;
                }
                let want = sol.value(t - 1, s) / c.discount_factor();
                assert!(
                    (expect - want).abs() < 1e-10,
                    "year {t}, {s}: {expect} vs {want}"
                );
            }
        }
    }

    #[test]
    fn bonus_hunger_small_claims_are_absorbed() {
        let c = experiment_contract(1.0);
        let losses = coarse_losses();
        let sol = solve(&c, &losses, &[]).unwrap();
        let s = ContractState::new(-2, Status::Active);
        let (_, ins) = sol.decision(5, s);
        assert!(ins);
        // a claim of 0.5 costs the bonus; one of 900 is worth it
        assert!(!sol.claim_rule(5, s, 1.0));
        assert!(sol.claim_rule(5, s, 900.0));
        let r = sol.claim_regions(5, -2);
        assert!(r.iter().any(|r| r.target == 1 && r.threshold > 0.5));
    }

    #[test]
    fn quantities_follow_the_policy() {
        let c = experiment_contract(1.0);
        let losses = coarse_losses();
        let sol = solve(&c, &losses, &Quantity::standard(2)).unwrap();
        let occ = sol.occupancy();
        let adopt = sol.aggregate(Quantity::Adoption(1)).unwrap();
        assert!((adopt - occ.mitigation_years).abs() < 1e-12);
        let none = sol.aggregate(Quantity::Adoption(0)).unwrap();
        assert!((adopt + none - 20.0).abs() < 1e-10);
        let spend = sol.per_year(Quantity::MitigationSpend).unwrap();
        assert_eq!(spend.len(), 20);
        assert!(sol.aggregate(Quantity::Compensation).unwrap() >= 0.0);
    }

    /// Minimal contract where claiming is never penalised: every positive
    /// compensation is claimed.
    #[test]
    fn flat_contract_claims_everything() {
        let c = experiment_contract(1.0).without_bonus_malus().unwrap();
        let sol = solve(&c, &coarse_losses(), &[]).unwrap();
        let s = ContractState::new(0, Status::Active);
        assert!(sol.claim_rule(3, s, 0.6) || !sol.decision(3, s).1);
        let r = sol.claim_regions(3, 0);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].threshold, 0.0);
        assert!(!r[0].interval.contains(0.0));
    }

    #[test]
    fn stage_accounting_matches_contract() {
        // one year, one level, no fees: V_0 = e^{−r}·min over the four options
        let rule = BonusMalusRule::new(
            0,
            0,
            1,
            vec![ClaimTransition {
                no_claim: 0,
                pieces: vec![ClaimPiece {
                    threshold: 0.0,
                    level: 0,
                }],
            }],
            vec![vec![
                ContractState::new(0, Status::NotSigned),
                ContractState::new(0, Status::Off(1)),
                ContractState::new(0, Status::Off(1)),
            ]],
        )
        .unwrap();
        let schedules = ContractSchedules {
            horizon: 1,
            discount_factor: 0.9,
            premium: vec![vec![0.7]],
            deductible: vec![vec![0.0]],
            max_compensation: vec![vec![1e9]],
            fee_in: vec![0.0],
            fee_out: vec![0.0],
            fee_re: 0.0,
        };
        let menu = MitigationMenu::new(vec![MitigationMeasure {
            beta: 0.0,
            gamma: 0.0,
        }])
        .unwrap();
        let c = ContractSpec::new(rule, schedules, menu).unwrap();
        let losses = vec![table(0.0, vec![0.0, 2.0], vec![0.5, 0.5], 1.0)];
        let sol = solve(&c, &losses, &[]).unwrap();
        assert!(sol.decision(1, ContractState::initial()).1);
        assert!((sol.initial_value() - 0.9 * 0.7).abs() < 1e-15);
        let w = YearLosses {
            severities: vec![2.0],
        };
        let d = Decision {
            mitigation: 0,
            insure: true,
            claim: true,
        };
        assert!((c.stage_cost(ContractState::initial(), 1, d, &w).unwrap() - 0.7).abs() < 1e-15);
    }
}
