//! Joint rate allocation for all clients: one exact LP, and a Lagrangian
//! subgradient method over per-edge cost splits.

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::entropy::EntropyOracle;
use crate::error::{Error, Result};
use crate::feasibility::check_feasible_multi;
use crate::lp::{solve_lp, CostReoptimizer, LinearProgram, LpStatus, Relation};
use crate::model::{ClientSubproblem, NetworkInstance, RateVector};
use crate::rational::{self, Rational};
use crate::single::{all_proper_subsets, cutting_plane, push_region, region_lp};

/// Default bound on `Σ_t 2^|M_t|` for the exact LP.
pub const ROW_BUDGET: usize = 1 << 16;

/// Clients with larger ground sets solve the inner problem by cutting planes
/// instead of a materialized, warm-started region.
const INNER_TABLE_GROUND: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct MulticastRates {
    /// Envelope `Z_e` on every instance edge (zero outside all `E_t`).
    pub z: RateVector,
    /// `(client node, R^(t) on E_t)` in client order.
    pub per_client: Vec<(usize, RateVector)>,
    pub cost: Rational,
}

impl MulticastRates {
    fn from_local(
        instance: &NetworkInstance,
        subs: &[ClientSubproblem],
        local: &[Vec<Rational>],
    ) -> MulticastRates {
        let mut z =
            RateVector::from_pairs((0..instance.edges().len()).map(|k| (k, Rational::zero())));
        for (sub, rates) in subs.iter().zip(local) {
            for (&k, r) in sub.edges.iter().zip(rates) {
                if r > &z.get_or_zero(k) {
                    z.set(k, r.clone());
                }
            }
        }
        let cost = z.cost(instance);
        MulticastRates {
            z,
            per_client: subs
                .iter()
                .zip(local)
                .map(|(sub, rates)| (sub.client, sub.rates_from_local(rates)))
                .collect(),
            cost,
        }
    }
}

fn feasible_subproblems(
    instance: &NetworkInstance,
    oracle: &EntropyOracle,
) -> Result<Vec<ClientSubproblem>> {
    let verdict = check_feasible_multi(instance, oracle)?;
    if let Some(bad) = verdict.clients.iter().find(|c| !c.is_feasible()) {
        return Err(Error::Infeasible {
            client: bad.client.clone(),
        });
    }
    instance
        .clients()
        .iter()
        .map(|&t| ClientSubproblem::build(instance, oracle, t))
        .collect()
}

/// Exact optimum of the joint LP over `Z` and every `R^(t)`.
pub fn solve_multi_exact(
    instance: &NetworkInstance,
    oracle: &EntropyOracle,
) -> Result<MulticastRates> {
    let subs = feasible_subproblems(instance, oracle)?;
    let rows = subs
        .iter()
        .try_fold(0usize, |acc, s| {
            1usize.checked_shl(s.ground_size() as u32).map(|r| acc + r)
        })
        .unwrap_or(usize::MAX);
    if rows > ROW_BUDGET {
        return Err(Error::BudgetExceeded {
            rows,
            limit: ROW_BUDGET,
        });
    }
    let m = instance.edges().len();
    let total = m + subs.iter().map(|s| s.edges.len()).sum::<usize>();
    let capacities = instance.capacities();
    let mut lp = LinearProgram::new(total);
    for (k, e) in instance.edges().iter().enumerate() {
        lp.objective[k] = e.cost.clone();
        lp.set_bounds(k, Some(Rational::zero()), Some(e.capacity.clone()));
    }
    let mut offsets = Vec::with_capacity(subs.len());
    let mut offset = m;
    for sub in &subs {
        push_region(
            &mut lp,
            sub,
            oracle,
            &capacities,
            all_proper_subsets(sub.ground_size()),
            offset,
        );
        for (pos, &k) in sub.edges.iter().enumerate() {
            lp.add_constraint(
                vec![(k, rational::int(1)), (offset + pos, rational::int(-1))],
                Relation::Ge,
                Rational::zero(),
            );
        }
        offsets.push(offset);
        offset += sub.edges.len();
    }
    let solution = solve_lp(&lp);
    if solution.status != LpStatus::Optimal {
        return Err(Error::Infeasible {
            client: instance.node_name(subs[0].client).to_string(),
        });
    }
    let local: Vec<Vec<Rational>> = subs
        .iter()
        .zip(&offsets)
        .map(|(sub, &o)| solution.x[o..o + sub.edges.len()].to_vec())
        .collect();
    let mut rates = MulticastRates::from_local(instance, &subs, &local);
    // Envelope from the LP itself; equal to the per-edge max at any optimum.
    for k in 0..m {
        rates.z.set(k, solution.x[k].clone());
    }
    rates.cost = rates.z.cost(instance);
    Ok(rates)
}

/// Euclidean projection of `v` onto `{λ >= 0, Σ λ = alpha}` by sort and threshold.
pub fn project_scaled_simplex(v: &[f64], alpha: f64) -> Vec<f64> {
    debug_assert!(alpha > 0.0);
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let candidate = (cumulative - alpha) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepSchedule {
    /// `θ[n] = a / (b + c n)` with `a > 0, b >= 0, c > 0`.
    Harmonic { a: f64, b: f64, c: f64 },
    /// `θ[n] = n^(-a)` with `0 < a < 1`.
    Power { a: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Harmonic {
            a: 1.0,
            b: 1.0,
            c: 1.0,
        }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Harmonic { a, b, c } => {
                a > 0.0 && b >= 0.0 && c > 0.0 && (a + b + c).is_finite()
            }
            StepSchedule::Power { a } => a > 0.0 && a < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!(
                "bad step schedule {self:?}"
            )))
        }
    }

    pub fn step_size(&self, n: usize) -> Result<f64> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameters("step index starts at 1".into()));
        }
        let n = n as f64;
        Ok(match *self {
            StepSchedule::Harmonic { a, b, c } => a / (b + c * n),
            StepSchedule::Power { a } => n.powf(-a),
        })
    }
}

#[derive(Clone, Debug)]
pub struct SubgradientParams {
    pub schedule: StepSchedule,
    pub max_iters: usize,
    pub gap_tol: f64,
    /// Starting multipliers per client over its `E_t` positions; uniform split when absent.
    pub initial: Option<Vec<Vec<f64>>>,
    /// Stop after this many iterations without a smaller gap.
    pub patience: Option<usize>,
}

impl Default for SubgradientParams {
    fn default() -> Self {
        SubgradientParams {
            schedule: StepSchedule::default(),
            max_iters: 50_000,
            gap_tol: 1e-2,
            initial: None,
            patience: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgradientStatus {
    Converged,
    MaxIterations,
    NoProgress,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub n: usize,
    pub dual: f64,
    pub primal: f64,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct SubgradientOutcome {
    /// Lowest-cost recovered iterate; exactly feasible.
    pub rates: MulticastRates,
    pub status: SubgradientStatus,
    pub iterations: usize,
    /// Iteration whose ergodic average is returned.
    pub recovered_at: usize,
    pub best_dual: f64,
    pub gap: f64,
    pub trace: Vec<TracePoint>,
    pub multipliers: Vec<Vec<f64>>,
}

enum Inner {
    Table(Box<CostReoptimizer>),
    Cut,
}

struct Client<'a> {
    sub: &'a ClientSubproblem,
    inner: Inner,
}

impl Client<'_> {
    fn solve(
        &mut self,
        instance: &NetworkInstance,
        oracle: &EntropyOracle,
        capacities: &RateVector,
        weights: &[f64],
    ) -> Result<(Vec<Rational>, f64)> {
        let infeasible = || Error::Infeasible {
            client: instance.node_name(self.sub.client).to_string(),
        };
        match &mut self.inner {
            Inner::Table(reopt) => {
                let (x, value) = reopt.solve(weights).ok_or_else(infeasible)?;
                Ok((x.to_vec(), value))
            }
            Inner::Cut => {
                let mut costs = vec![Rational::zero(); instance.edges().len()];
                for (&k, &w) in self.sub.edges.iter().zip(weights) {
                    costs[k] = rational::from_f64(w);
                }
                let solution = cutting_plane(instance, self.sub, oracle, &costs, capacities)?;
                let x = self.sub.rates_to_local(&solution.rates);
                let value = x
                    .iter()
                    .zip(weights)
                    .map(|(r, w)| rational::to_f64(r) * w)
                    .sum();
                Ok((x, value))
            }
        }
    }
}

/// Dual ascent on the per-edge cost split with ergodic primal recovery.
///
/// Iteration `n >= 1` solves every client's inner problem under `Λ[n-1]`,
/// adds the minimizers to the running average `R̂[n]`, takes `Z[n]` as the
/// per-edge maximum, then sets `Λ[n] = proj(Λ[n-1] + θ[n] R̃[n])`.
pub fn solve_multi_subgradient(
    instance: &NetworkInstance,
    oracle: &EntropyOracle,
    params: &SubgradientParams,
) -> Result<SubgradientOutcome> {
    params.schedule.validate()?;
    if params.gap_tol.is_nan() || params.gap_tol < 0.0 || params.max_iters == 0 {
        return Err(Error::InvalidParameters(
            "need gap_tol >= 0 and max_iters >= 1".into(),
        ));
    }
    let subs = feasible_subproblems(instance, oracle)?;
    let capacities = instance.capacities();
    let alpha: Vec<f64> = instance.costs().iter().map(rational::to_f64).collect();

    let mut sharers: Vec<Vec<(usize, usize)>> = vec![Vec::new(); instance.edges().len()];
    for (t, sub) in subs.iter().enumerate() {
        for (pos, &k) in sub.edges.iter().enumerate() {
            sharers[k].push((t, pos));
        }
    }
    let mut lambda: Vec<Vec<f64>> = match &params.initial {
        Some(init) => {
            if init.len() != subs.len()
                || init
                    .iter()
                    .zip(&subs)
                    .any(|(l, s)| l.len() != s.edges.len())
            {
                return Err(Error::InvalidParameters(
                    "initial multipliers do not match the clients".into(),
                ));
            }
            let mut l = init.clone();
            project_all(&mut l, &sharers, &alpha);
            l
        }
        None => subs
            .iter()
            .map(|s| {
                s.edges
                    .iter()
                    .map(|&k| alpha[k] / sharers[k].len() as f64)
                    .collect()
            })
            .collect(),
    };

    let mut clients = subs
        .iter()
        .map(|sub| {
            let inner = if sub.ground_size() <= INNER_TABLE_GROUND {
                let lp = region_lp(sub, oracle, &capacities)?;
                let reopt = CostReoptimizer::new(&lp).ok_or_else(|| Error::Infeasible {
                    client: instance.node_name(sub.client).to_string(),
                })?;
                Inner::Table(Box::new(reopt))
            } else {
                Inner::Cut
            };
            Ok(Client { sub, inner })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sums: Vec<Vec<Rational>> = subs
        .iter()
        .map(|s| vec![Rational::zero(); s.edges.len()])
        .collect();
    let mut sums_f: Vec<Vec<f64>> = subs.iter().map(|s| vec![0.0; s.edges.len()]).collect();
    let mut best_dual = f64::NEG_INFINITY;
    let mut best_primal = f64::INFINITY;
    let mut best_sums = sums.clone();
    let mut recovered_at = 0;
    let mut best_gap = f64::INFINITY;
    let mut last_improvement = 0;
    let mut trace = Vec::new();
    let mut status = SubgradientStatus::MaxIterations;
    let mut iterations = 0;

    for n in 1..=params.max_iters {
        iterations = n;
        let results = clients
            .par_iter_mut()
            .zip(lambda.par_iter())
            .map(|(client, weights)| client.solve(instance, oracle, &capacities, weights))
            .collect::<Result<Vec<_>>>()?;
        let dual: f64 = results.iter().map(|(_, v)| v).sum();
        best_dual = best_dual.max(dual);
        for (t, (x, _)) in results.iter().enumerate() {
            for (pos, r) in x.iter().enumerate() {
                if !r.is_zero() {
                    sums[t][pos] += r;
                    sums_f[t][pos] += rational::to_f64(r);
                }
            }
        }
        let inv = 1.0 / n as f64;
        let primal: f64 = sharers
            .iter()
            .enumerate()
            .map(|(k, share)| {
                let z = share
                    .iter()
                    .map(|&(t, pos)| sums_f[t][pos] * inv)
                    .fold(0.0, f64::max);
                alpha[k] * z
            })
            .sum();
        let gap = (primal - best_dual) / best_dual.abs().max(f64::MIN_POSITIVE);
        trace.push(TracePoint {
            n,
            dual,
            primal,
            gap,
        });
        if primal < best_primal {
            best_primal = primal;
            best_sums.clone_from(&sums);
            recovered_at = n;
        }
        if gap < best_gap {
            best_gap = gap;
            last_improvement = n;
        }
        if gap <= params.gap_tol {
            status = SubgradientStatus::Converged;
            break;
        }
        if params.patience.is_some_and(|p| n - last_improvement >= p) {
            status = SubgradientStatus::NoProgress;
            break;
        }
        let theta = params.schedule.step_size(n)?;
        for (t, (x, _)) in results.iter().enumerate() {
            for (pos, r) in x.iter().enumerate() {
                lambda[t][pos] += theta * rational::to_f64(r);
            }
        }
        project_all(&mut lambda, &sharers, &alpha);
    }

    let scale = rational::int(recovered_at as i64);
    let local: Vec<Vec<Rational>> = best_sums
        .iter()
        .map(|row| row.iter().map(|s| s / &scale).collect())
        .collect();
    let rates = MulticastRates::from_local(instance, &subs, &local);
    let cost = rational::to_f64(&rates.cost);
    Ok(SubgradientOutcome {
        rates,
        status,
        iterations,
        recovered_at,
        best_dual,
        gap: (cost - best_dual) / best_dual.abs().max(f64::MIN_POSITIVE),
        trace,
        multipliers: lambda,
    })
}

fn project_all(lambda: &mut [Vec<f64>], sharers: &[Vec<(usize, usize)>], alpha: &[f64]) {
    for (k, share) in sharers.iter().enumerate() {
        if share.is_empty() {
            continue;
        }
        let v: Vec<f64> = share.iter().map(|&(t, pos)| lambda[t][pos]).collect();
        for (&(t, pos), p) in share.iter().zip(project_scaled_simplex(&v, alpha[k])) {
            lambda[t][pos] = p;
        }
    }
}
