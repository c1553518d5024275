//! Minimum-cost rate allocation for a single client.

use num_traits::{Signed, Zero};

use crate::entropy::EntropyOracle;
use crate::error::{Error, Result};
use crate::feasibility::check_feasible_single;
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation};
use crate::model::{ClientSubproblem, NetworkInstance, RateVector};
use crate::rational::{self, Rational};
use crate::submodular::{from_fn, in_base_polyhedron, minimize_nonempty, Curvature, SetFunction};
use crate::subset::Subset;

/// Largest client ground set for the fully materialized region.
pub const MATERIALIZE_LIMIT: usize = 16;

/// `g_t(S) = H(M_t) - H(M_t \ S)` over local indices.
pub struct ConditionalEntropy<'a> {
    pub sub: &'a ClientSubproblem,
    pub oracle: &'a EntropyOracle,
}

impl SetFunction for ConditionalEntropy<'_> {
    fn ground_size(&self) -> usize {
        self.sub.ground_size()
    }
    fn value(&self, s: Subset) -> Rational {
        self.sub.required_rate(self.oracle, s)
    }
}

/// `f_t(S) = H(X_S)` over local indices.
pub struct LocalEntropy<'a> {
    pub sub: &'a ClientSubproblem,
    pub oracle: &'a EntropyOracle,
}

impl SetFunction for LocalEntropy<'_> {
    fn ground_size(&self) -> usize {
        self.sub.ground_size()
    }
    fn value(&self, s: Subset) -> Rational {
        self.oracle.entropy(self.sub.to_global(s))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleClientSolution {
    pub client: usize,
    pub rates: RateVector,
    pub cost: Rational,
    /// Local subsets whose region inequality holds with equality, ground set included.
    pub tight_sets: Vec<Subset>,
    pub iterations: usize,
}

/// The modular vector `x_i = ∂R({i})`; `∂R(S) = x(S)` for every `S`.
pub fn boundary_vector(sub: &ClientSubproblem, local: &[Rational]) -> Vec<Rational> {
    (0..sub.ground_size())
        .map(|i| sub.boundary_local(local, Subset::singleton(i)))
        .collect()
}

/// Whether the boundary of `local` lies in `B(g_t)`.
pub fn verify_region(
    sub: &ClientSubproblem,
    oracle: &EntropyOracle,
    local: &[Rational],
) -> Result<bool> {
    let x = boundary_vector(sub, local);
    Ok(in_base_polyhedron(
        &x,
        &ConditionalEntropy { sub, oracle },
        Curvature::Supermodular,
    )?
    .is_member())
}

fn region_row(sub: &ClientSubproblem, s: Subset, offset: usize) -> Vec<(usize, Rational)> {
    sub.boundary_coefficients(s)
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c != 0)
        .map(|(pos, c)| (offset + pos, rational::int(c as i64)))
        .collect()
}

/// Appends the region of `sub` over variables `offset..offset + |E_t|`:
/// the ground equality, one `>=` row per set in `sets`, and the capacity boxes.
pub fn push_region(
    lp: &mut LinearProgram,
    sub: &ClientSubproblem,
    oracle: &EntropyOracle,
    capacities: &RateVector,
    sets: impl IntoIterator<Item = Subset>,
    offset: usize,
) {
    let full = sub.full();
    lp.add_constraint(
        region_row(sub, full, offset),
        Relation::Eq,
        sub.ground_entropy.clone(),
    );
    for s in sets {
        if s.is_empty() || s == full {
            continue;
        }
        lp.add_constraint(
            region_row(sub, s, offset),
            Relation::Ge,
            sub.required_rate(oracle, s),
        );
    }
    for (pos, &k) in sub.edges.iter().enumerate() {
        lp.set_bounds(
            offset + pos,
            Some(Rational::zero()),
            Some(capacities.get_or_zero(k)),
        );
    }
}

/// Every proper nonempty subset of an `n`-element ground set.
pub fn all_proper_subsets(n: usize) -> impl Iterator<Item = Subset> {
    let full = Subset::full(n);
    Subset::all(n).filter(move |&s| !s.is_empty() && s != full)
}

fn check_materializable(sub: &ClientSubproblem) -> Result<()> {
    if sub.ground_size() > MATERIALIZE_LIMIT {
        return Err(Error::GroundTooLarge {
            size: sub.ground_size(),
            limit: MATERIALIZE_LIMIT,
        });
    }
    Ok(())
}

/// The client's region with every inequality materialized and a zero objective.
pub fn region_lp(
    sub: &ClientSubproblem,
    oracle: &EntropyOracle,
    capacities: &RateVector,
) -> Result<LinearProgram> {
    check_materializable(sub)?;
    let mut lp = LinearProgram::new(sub.edges.len());
    push_region(
        &mut lp,
        sub,
        oracle,
        capacities,
        all_proper_subsets(sub.ground_size()),
        0,
    );
    Ok(lp)
}

fn local_costs(sub: &ClientSubproblem, costs: &[Rational]) -> Vec<Rational> {
    sub.edges.iter().map(|&k| costs[k].clone()).collect()
}

fn finish(
    sub: &ClientSubproblem,
    oracle: &EntropyOracle,
    costs: &[Rational],
    local: &[Rational],
    candidates: impl IntoIterator<Item = Subset>,
    iterations: usize,
) -> SingleClientSolution {
    let mut tight_sets: Vec<Subset> = candidates
        .into_iter()
        .filter(|&s| !s.is_empty() && sub.boundary_local(local, s) == sub.required_rate(oracle, s))
        .collect();
    tight_sets.push(sub.full());
    tight_sets.sort_by_key(|s| s.tie_key());
    tight_sets.dedup();
    let cost = local_costs(sub, costs)
        .iter()
        .zip(local)
        .fold(Rational::zero(), |acc, (c, r)| acc + c * r);
    SingleClientSolution {
        client: sub.client,
        rates: sub.rates_from_local(local),
        cost,
        tight_sets,
        iterations,
    }
}

fn infeasible(instance: &NetworkInstance, sub: &ClientSubproblem) -> Error {
    Error::Infeasible {
        client: instance.node_name(sub.client).to_string(),
    }
}

/// Cutting-plane optimum without the feasibility pre-check.
pub(crate) fn cutting_plane(
    instance: &NetworkInstance,
    sub: &ClientSubproblem,
    oracle: &EntropyOracle,
    costs: &[Rational],
    capacities: &RateVector,
) -> Result<SingleClientSolution> {
    let n = sub.ground_size();
    let full = sub.full();
    let mut pool: Vec<Subset> = Vec::new();
    for i in 0..n {
        for s in [Subset::singleton(i), full.without(i)] {
            if !s.is_empty() && s != full && !pool.contains(&s) {
                pool.push(s);
            }
        }
    }
    let objective = local_costs(sub, costs);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut lp = LinearProgram::new(sub.edges.len());
        lp.objective = objective.clone();
        push_region(&mut lp, sub, oracle, capacities, pool.iter().copied(), 0);
        let solution = solve_lp(&lp);
        if solution.status != LpStatus::Optimal {
            return Err(infeasible(instance, sub));
        }
        let local = solution.x;
        let separation = from_fn(n, |s| {
            sub.boundary_local(&local, s) - sub.required_rate(oracle, s)
        });
        let most_violated = minimize_nonempty(&separation)?;
        if !most_violated.value.is_negative() {
            if !verify_region(sub, oracle, &local)? {
                return Err(infeasible(instance, sub));
            }
            return Ok(finish(sub, oracle, costs, &local, pool, iterations));
        }
        if pool.contains(&most_violated.set) {
            return Err(infeasible(instance, sub));
        }
        pool.push(most_violated.set);
    }
}

/// Exact minimum of `Σ α_e R_e` over the client's region and `0 <= R <= c`.
///
/// `costs` is indexed by instance edge; only `E_t` entries are read.
pub fn solve_single_client(
    instance: &NetworkInstance,
    sub: &ClientSubproblem,
    oracle: &EntropyOracle,
    costs: &[Rational],
    capacities: &RateVector,
) -> Result<SingleClientSolution> {
    let certificate = check_feasible_single(instance, sub, oracle, capacities)?;
    if !certificate.is_feasible() {
        return Err(infeasible(instance, sub));
    }
    cutting_plane(instance, sub, oracle, costs, capacities)
}

/// Same optimum from the LP with all `2^|M_t| - 2` inequalities written out.
pub fn solve_single_client_bruteforce(
    instance: &NetworkInstance,
    sub: &ClientSubproblem,
    oracle: &EntropyOracle,
    costs: &[Rational],
    capacities: &RateVector,
) -> Result<SingleClientSolution> {
    let mut lp = region_lp(sub, oracle, capacities)?;
    lp.objective = local_costs(sub, costs);
    let solution = solve_lp(&lp);
    if solution.status != LpStatus::Optimal {
        return Err(infeasible(instance, sub));
    }
    Ok(finish(
        sub,
        oracle,
        costs,
        &solution.x,
        all_proper_subsets(sub.ground_size()),
        1,
    ))
}
