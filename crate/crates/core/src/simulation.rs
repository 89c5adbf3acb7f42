//! Forward Monte Carlo of the controlled contract process.
//!
//! Path `k` draws from its own ChaCha8 stream `k` under the configured
//! seed, so results do not depend on the number of worker threads.

use crate::compound::{Interval, LossModel};
use crate::contract::{ContractSpec, ContractState, YearLosses};
use crate::error::{Error, Result};
use crate::solver::PolicySolution;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

const CHUNK: usize = 4096;

/// Markov decision rule of the insured.
pub trait Policy: Sync {
    /// `(measure, insure)` in year `t` at `state`.
    fn decide(&self, t: u32, state: ContractState) -> Result<(usize, bool)>;
    /// Whether to claim after an aggregate loss of `loss`.
    fn claim(&self, t: u32, state: ContractState, loss: f64) -> Result<bool>;
}

impl Policy for PolicySolution {
    fn decide(&self, t: u32, state: ContractState) -> Result<(usize, bool)> {
        Ok(self.decision(t, state))
    }

    fn claim(&self, t: u32, state: ContractState, loss: f64) -> Result<bool> {
        Ok(self.claim_rule(t, state, loss))
    }
}

/// Claim rule on the compensation amount.
#[derive(Debug, Clone, PartialEq)]
pub enum ClaimDecision {
    Never,
    /// Claim when the compensation strictly exceeds the threshold.
    Above(f64),
    /// Claim when the compensation falls in one of the intervals.
    Intervals(Vec<Interval>),
}

impl ClaimDecision {
    fn wants(&self, compensation: f64) -> bool {
        match self {
            ClaimDecision::Never => false,
            ClaimDecision::Above(x) => compensation > *x,
            ClaimDecision::Intervals(v) => v.iter().any(|i| i.contains(compensation)),
        }
    }
}

/// Explicit decision tables indexed `[t − 1][state index]`.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    contract: ContractSpec,
    mitigation: Vec<Vec<usize>>,
    insure: Vec<Vec<bool>>,
    claim: Vec<Vec<ClaimDecision>>,
}

impl FixedPolicy {
    pub fn new(
        contract: &ContractSpec,
        mitigation: Vec<Vec<usize>>,
        insure: Vec<Vec<bool>>,
        claim: Vec<Vec<ClaimDecision>>,
    ) -> Result<Self> {
        let horizon = contract.horizon() as usize;
        let n = contract.n_states();
        fn shaped<T>(table: &[Vec<T>], rows: usize, cols: usize) -> bool {
            table.len() == rows && table.iter().all(|r| r.len() == cols)
        }
        if !shaped(&mitigation, horizon, n)
            || !shaped(&insure, horizon, n)
            || !shaped(&claim, horizon, n)
        {
            return Err(Error::Domain(format!(
                "policy tables must be {horizon} × {n}"
            )));
        }
        for t in 0..horizon {
            for k in 0..n {
                if mitigation[t][k] >= contract.menu.len() {
                    return Err(Error::Domain(format!(
                        "no mitigation measure {}",
                        mitigation[t][k]
                    )));
                }
                if !insure[t][k] && claim[t][k] != ClaimDecision::Never {
                    return Err(Error::Admissibility(format!(
                        "claim rule without coverage in year {} at {}",
                        t + 1,
                        contract.state_at(k)
                    )));
                }
            }
        }
        Ok(FixedPolicy {
            contract: contract.clone(),
            mitigation,
            insure,
            claim,
        })
    }

    /// The same decisions in every year and state.
    pub fn constant(
        contract: &ContractSpec,
        measure: usize,
        insure: bool,
        claim: ClaimDecision,
    ) -> Result<Self> {
        let horizon = contract.horizon() as usize;
        let n = contract.n_states();
        FixedPolicy::new(
            contract,
            vec![vec![measure; n]; horizon],
            vec![vec![insure; n]; horizon],
            vec![vec![claim; n]; horizon],
        )
    }
}

impl Policy for FixedPolicy {
    fn decide(&self, t: u32, state: ContractState) -> Result<(usize, bool)> {
        let k = self.contract.state_index(state);
        let y = t as usize - 1;
        Ok((self.mitigation[y][k], self.insure[y][k]))
    }

    fn claim(&self, t: u32, state: ContractState, loss: f64) -> Result<bool> {
        let k = self.contract.state_index(state);
        let c = self.contract.compensation(state.level, t, loss);
        Ok(self.claim[t as usize - 1][k].wants(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub paths: usize,
    pub seed: u64,
}

/// One simulated year.
#[derive(Debug, Clone, PartialEq)]
pub struct YearRecord {
    pub year: u32,
    pub state: ContractState,
    pub mitigation: usize,
    pub insure: bool,
    pub events: usize,
    pub loss: f64,
    pub claim: bool,
    pub cost: f64,
    pub next: ContractState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub path: u64,
    /// `Σ_t e^{−tr} g_t`.
    pub discounted_cost: f64,
    pub years: Vec<YearRecord>,
}

/// Sample mean of the discounted cost and per-year state counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub paths: usize,
    pub mean: f64,
    pub std_error: f64,
    /// `[t][state index]`, `t = 0..=T`.
    pub state_counts: Vec<Vec<u64>>,
}

impl SimulationSummary {
    /// Empirical probability of `state` after year `t`.
    pub fn frequency(&self, t: u32, state_index: usize) -> f64 {
        self.state_counts[t as usize][state_index] as f64 / self.paths as f64
    }
}

struct Sampler {
    poisson: Option<Poisson<f64>>,
}

impl Sampler {
    fn new(model: &LossModel) -> Result<Self> {
        let rate = model.frequency.mean();
        let poisson = if rate > 0.0 {
            Some(
                Poisson::new(rate)
                    .map_err(|e| Error::Domain(format!("poisson rate {rate}: {e}")))?,
            )
        } else {
            None
        };
        Ok(Sampler { poisson })
    }

    fn year(&self, model: &LossModel, rng: &mut ChaCha8Rng) -> Result<YearLosses> {
        let n = self.poisson.as_ref().map_or(0, |p| p.sample(rng) as usize);
        let severities = (0..n)
            .map(|_| model.severity.quantile(rng.sample(Open01)))
            .collect::<Result<_>>()?;
        Ok(YearLosses { severities })
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn run_path<P: Policy + ?Sized>(
    contract: &ContractSpec,
    model: &LossModel,
    sampler: &Sampler,
    policy: &P,
    seed: u64,
    path: u64,
    mut visit: impl FnMut(YearRecord),
) -> Result<f64> {
    let mut rng = path_rng(seed, path);
    let df = contract.discount_factor();
    let mut state = ContractState::initial();
    let mut total = 0.0;
    let mut discount = 1.0;
    for t in 1..=contract.horizon() {
        discount *= df;
        let (d, insure) = policy.decide(t, state)?;
        let w = sampler.year(model, &mut rng)?;
        let loss = contract.aggregate_loss(d, &w);
        let claim = insure && policy.claim(t, state, loss)?;
        let cost = contract.cost(state, t, d, insure, claim, loss)?;
        let next = contract.transition(state, t, insure, claim, loss)?;
        total += discount * cost;
        visit(YearRecord {
            year: t,
            state,
            mitigation: d,
            insure,
            events: w.severities.len(),
            loss,
            claim,
            cost,
            next,
        });
        state = next;
    }
    Ok(total)
}

/// Simulates `cfg.paths` independent histories under `policy`.
pub fn simulate<P: Policy + ?Sized>(
    contract: &ContractSpec,
    model: &LossModel,
    policy: &P,
    cfg: &SimulationConfig,
) -> Result<SimulationSummary> {
    if cfg.paths < 2 {
        return Err(Error::Domain("at least two paths are required".into()));
    }
    model.frequency.validate()?;
    let sampler = Sampler::new(model)?;
    let horizon = contract.horizon() as usize;
    let n = contract.n_states();
    let chunks = cfg.paths.div_ceil(CHUNK);
    let results: Vec<(Vec<f64>, Vec<Vec<u64>>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut costs = Vec::with_capacity(CHUNK);
            let mut counts = vec![vec![0u64; n]; horizon + 1];
            for path in c * CHUNK..((c + 1) * CHUNK).min(cfg.paths) {
                counts[0][contract.state_index(ContractState::initial())] += 1;
                let cost = run_path(
                    contract,
                    model,
                    &sampler,
                    policy,
                    cfg.seed,
                    path as u64,
                    |y| {
                        counts[y.year as usize][contract.state_index(y.next)] += 1;
                    },
                )?;
                costs.push(cost);
            }
            Ok((costs, counts))
        })
        .collect::<Result<_>>()?;

    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut k = 0.0;
    let mut state_counts = vec![vec![0u64; n]; horizon + 1];
    for (costs, counts) in &results {
        for &x in costs {
            k += 1.0;
            let delta = x - mean;
            mean += delta / k;
            m2 += delta * (x - mean);
        }
        for (acc, row) in state_counts.iter_mut().zip(counts) {
            for (a, r) in acc.iter_mut().zip(row) {
                *a += r;
            }
        }
    }
    let variance = m2 / (k - 1.0);
    Ok(SimulationSummary {
        paths: cfg.paths,
        mean,
        std_error: (variance / k).sqrt(),
        state_counts,
    })
}

/// Monte Carlo value of an explicit policy.
pub fn evaluate_fixed_policy(
    contract: &ContractSpec,
    model: &LossModel,
    policy: &FixedPolicy,
    cfg: &SimulationConfig,
) -> Result<SimulationSummary> {
    simulate(contract, model, policy, cfg)
}

/// Full year-by-year records of the first `paths` paths.
pub fn trace<P: Policy + ?Sized>(
    contract: &ContractSpec,
    model: &LossModel,
    policy: &P,
    seed: u64,
    paths: usize,
) -> Result<Vec<PathRecord>> {
    let sampler = Sampler::new(model)?;
    (0..paths as u64)
        .map(|path| {
            let mut years = Vec::with_capacity(contract.horizon() as usize);
            let discounted_cost = run_path(contract, model, &sampler, policy, seed, path, |y| {
                years.push(y)
            })?;
            Ok(PathRecord {
                path,
                discounted_cost,
                years,
            })
        })
        .collect()
}

/// Writes one CSV row per path and year.
pub fn write_trace(out: &Path, records: &[PathRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    writeln!(
        w,
        "path,year,level,status,mitigation,insure,events,loss,claim,cost,next_level,next_status"
    )?;
    for r in records {
        for y in &r.years {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.path,
                y.year,
                y.state.level,
                y.state.status,
                y.mitigation,
                u8::from(y.insure),
                y.events,
                y.loss,
                u8::from(y.claim),
                y.cost,
                y.next.level,
                y.next.status
            )?;
        }
    }
    w.flush()?;
    Ok(())
}
