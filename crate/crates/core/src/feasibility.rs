//! Cut-versus-conditional-entropy feasibility test.

use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::entropy::EntropyOracle;
use crate::error::{Error, Result};
use crate::model::{check_reconstructability, ClientSubproblem, NetworkInstance, RateVector};
use crate::rational::{self, Rational};
use crate::single::{solve_single_client, verify_region};
use crate::submodular::{minimize_nonempty, SetFunction};
use crate::subset::Subset;

/// `S ↦ c(Δ⁺S) - g_t(S)` on the local ground set of a client.
pub struct CutSlack<'a> {
    pub sub: &'a ClientSubproblem,
    pub oracle: &'a EntropyOracle,
    pub capacities: &'a RateVector,
}

impl SetFunction for CutSlack<'_> {
    fn ground_size(&self) -> usize {
        self.sub.ground_size()
    }
    fn value(&self, s: Subset) -> Rational {
        self.sub.cut_capacity(self.capacities, s) - self.sub.required_rate(self.oracle, s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
}

/// Outcome of the per-client test with the minimizing set as witness.
///
/// `slack` is the minimum of `c(Δ⁺S) - g_t(S)` over nonempty `S`, attained at
/// `set`; `deficit = max(0, -slack)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityCertificate {
    pub client: String,
    pub status: FeasibilityStatus,
    pub set: Vec<String>,
    #[serde(skip)]
    pub local_set: Subset,
    #[serde(with = "rational::serde_string")]
    pub cut_capacity: Rational,
    #[serde(with = "rational::serde_string")]
    pub required: Rational,
    #[serde(with = "rational::serde_string")]
    pub slack: Rational,
    #[serde(with = "rational::serde_string")]
    pub deficit: Rational,
}

impl FeasibilityCertificate {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

pub fn check_feasible_single(
    instance: &NetworkInstance,
    sub: &ClientSubproblem,
    oracle: &EntropyOracle,
    capacities: &RateVector,
) -> Result<FeasibilityCertificate> {
    let f = CutSlack {
        sub,
        oracle,
        capacities,
    };
    let best = minimize_nonempty(&f)?;
    let cut_capacity = sub.cut_capacity(capacities, best.set);
    let required = sub.required_rate(oracle, best.set);
    let negative = best.value.is_negative();
    Ok(FeasibilityCertificate {
        client: instance.node_name(sub.client).to_string(),
        status: if negative {
            FeasibilityStatus::Infeasible
        } else {
            FeasibilityStatus::Feasible
        },
        set: instance.subset_names(sub.to_global(best.set)),
        local_set: best.set,
        cut_capacity,
        required,
        deficit: if negative {
            -best.value.clone()
        } else {
            Rational::zero()
        },
        slack: best.value,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiFeasibility {
    pub feasible: bool,
    pub clients: Vec<FeasibilityCertificate>,
}

/// Runs the single-client test for every client under the instance capacities.
pub fn check_feasible_multi(
    instance: &NetworkInstance,
    oracle: &EntropyOracle,
) -> Result<MultiFeasibility> {
    let report = check_reconstructability(instance, oracle);
    if let Some(bad) = report.clients.iter().find(|c| !c.complete) {
        return Err(Error::ReconstructabilityViolated {
            client: bad.client.clone(),
            reached: bad.entropy.to_string(),
            total: report.total_entropy.to_string(),
        });
    }
    let capacities = instance.capacities();
    let clients = instance
        .clients()
        .par_iter()
        .map(|&t| {
            let sub = ClientSubproblem::build(instance, oracle, t)?;
            check_feasible_single(instance, &sub, oracle, &capacities)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiFeasibility {
        feasible: clients.iter().all(FeasibilityCertificate::is_feasible),
        clients,
    })
}

/// A rate vector on `E_t` inside the client's region and under `capacities`,
/// found by the single-client optimizer with unit costs.
pub fn achievable_point(
    instance: &NetworkInstance,
    sub: &ClientSubproblem,
    oracle: &EntropyOracle,
    capacities: &RateVector,
) -> Result<RateVector> {
    let unit = vec![rational::int(1); instance.edges().len()];
    let solution = solve_single_client(instance, sub, oracle, &unit, capacities)?;
    let local = sub.rates_to_local(&solution.rates);
    let within = local
        .iter()
        .zip(&sub.edges)
        .all(|(r, &k)| !r.is_negative() && r <= &capacities.get_or_zero(k));
    if !within || !verify_region(sub, oracle, &local)? {
        return Err(Error::Infeasible {
            client: instance.node_name(sub.client).to_string(),
        });
    }
    Ok(solution.rates)
}
