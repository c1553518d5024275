//! Network instances, per-client subproblems and the boundary operator.

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::entropy::EntropyOracle;
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::subset::{Subset, MAX_GROUND};

/// Edge record as it appears in the instance file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawEdge {
    pub id: String,
    pub tail: String,
    pub head: String,
    #[serde(with = "rational::serde_string")]
    pub capacity: Rational,
    #[serde(with = "rational::serde_string")]
    pub cost: Rational,
}

/// Graph part of the instance file, before validation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawInstance {
    pub nodes: Vec<String>,
    pub edges: Vec<RawEdge>,
    pub clients: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: String,
    pub tail: usize,
    pub head: usize,
    pub capacity: Rational,
    pub cost: Rational,
}

/// A validated capacitated DAG. Every node that is not a client is a source;
/// relays are sources whose observation carries no entropy.
#[derive(Clone, Debug)]
pub struct NetworkInstance {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    clients: Vec<usize>,
    sources: Vec<usize>,
    source_slot: Vec<Option<usize>>,
    topo_order: Vec<usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl NetworkInstance {
    pub fn validate(raw: &RawInstance) -> Result<NetworkInstance> {
        let mut index = HashMap::new();
        for (i, name) in raw.nodes.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(Error::DuplicateNode(name.clone()));
            }
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::UnknownNode(name.to_string()))
        };

        let mut is_client = vec![false; raw.nodes.len()];
        let mut clients = Vec::with_capacity(raw.clients.len());
        for name in &raw.clients {
            let c = lookup(name)?;
            if is_client[c] {
                return Err(Error::DuplicateNode(name.clone()));
            }
            is_client[c] = true;
            clients.push(c);
        }
        if clients.is_empty() {
            return Err(Error::Parse("instance declares no clients".into()));
        }

        let mut seen_ids = HashMap::new();
        let mut edges = Vec::with_capacity(raw.edges.len());
        for e in &raw.edges {
            if seen_ids.insert(e.id.as_str(), ()).is_some() {
                return Err(Error::DuplicateEdgeId(e.id.clone()));
            }
            let tail = lookup(&e.tail)?;
            let head = lookup(&e.head)?;
            if tail == head {
                return Err(Error::SelfLoop(e.id.clone()));
            }
            if e.capacity < Rational::zero() {
                return Err(Error::NegativeCapacity(e.id.clone()));
            }
            if e.cost <= Rational::zero() {
                return Err(Error::NonpositiveCost(e.id.clone()));
            }
            edges.push(Edge {
                id: e.id.clone(),
                tail,
                head,
                capacity: e.capacity.clone(),
                cost: e.cost.clone(),
            });
        }

        let n = raw.nodes.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            out_edges[e.tail].push(k);
            in_edges[e.head].push(k);
        }

        let topo_order = topological_order(n, &edges, &out_edges, &in_edges).map_err(|cycle| {
            Error::CycleDetected(cycle.iter().map(|&v| raw.nodes[v].clone()).collect())
        })?;

        for &c in &clients {
            if !out_edges[c].is_empty() {
                return Err(Error::ClientNotSink(raw.nodes[c].clone()));
            }
            if in_edges[c].is_empty() {
                return Err(Error::IsolatedClient(raw.nodes[c].clone()));
            }
        }

        let sources: Vec<usize> = (0..n).filter(|&v| !is_client[v]).collect();
        if sources.len() > MAX_GROUND {
            return Err(Error::GroundTooLarge {
                size: sources.len(),
                limit: MAX_GROUND,
            });
        }
        let mut source_slot = vec![None; n];
        for (i, &v) in sources.iter().enumerate() {
            source_slot[v] = Some(i);
        }

        Ok(NetworkInstance {
            nodes: raw.nodes.clone(),
            edges,
            clients,
            sources,
            source_slot,
            topo_order,
            out_edges,
            in_edges,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_name(&self, v: usize) -> &str {
        &self.nodes[v]
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> &Edge {
        &self.edges[k]
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// Client node indices, in declaration order.
    pub fn clients(&self) -> &[usize] {
        &self.clients
    }

    /// Source node indices in node order; position `i` is ground element `i`
    /// of every entropy oracle built for this instance.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn source_names(&self) -> Vec<String> {
        self.sources
            .iter()
            .map(|&v| self.nodes[v].clone())
            .collect()
    }

    pub fn source_slot(&self, v: usize) -> Option<usize> {
        self.source_slot[v]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }

    pub fn capacities(&self) -> RateVector {
        RateVector::from_pairs(
            self.edges
                .iter()
                .enumerate()
                .map(|(k, e)| (k, e.capacity.clone())),
        )
    }

    pub fn costs(&self) -> Vec<Rational> {
        self.edges.iter().map(|e| e.cost.clone()).collect()
    }

    /// Names of the members of a source subset (global ground indexing).
    pub fn subset_names(&self, s: Subset) -> Vec<String> {
        s.iter()
            .map(|i| self.nodes[self.sources[i]].clone())
            .collect()
    }

    /// Copy of the instance with `f` applied to every edge.
    pub fn map_edges(&self, mut f: impl FnMut(usize, &mut Edge)) -> NetworkInstance {
        let mut out = self.clone();
        for (k, e) in out.edges.iter_mut().enumerate() {
            f(k, e);
        }
        out
    }

    /// Copy of the instance without the given edge; fails if validation of
    /// the reduced graph fails (e.g. a client becomes isolated).
    pub fn without_edge(&self, k: usize) -> Result<NetworkInstance> {
        let raw = RawInstance {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, e)| RawEdge {
                    id: e.id.clone(),
                    tail: self.nodes[e.tail].clone(),
                    head: self.nodes[e.head].clone(),
                    capacity: e.capacity.clone(),
                    cost: e.cost.clone(),
                })
                .collect(),
            clients: self
                .clients
                .iter()
                .map(|&c| self.nodes[c].clone())
                .collect(),
        };
        NetworkInstance::validate(&raw)
    }
}

/// Kahn's algorithm, always releasing the smallest ready node index first.
/// On failure returns a witness cycle `v0 -> .. -> v0`.
fn topological_order(
    n: usize,
    edges: &[Edge],
    out_edges: &[Vec<usize>],
    in_edges: &[Vec<usize>],
) -> std::result::Result<Vec<usize>, Vec<usize>> {
    let mut indegree: Vec<usize> = in_edges.iter().map(Vec::len).collect();
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &k in &out_edges[v] {
            let h = edges[k].head;
            indegree[h] -= 1;
            if indegree[h] == 0 {
                ready.insert(h);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Every leftover node has a leftover predecessor: walk backwards until a
    // node repeats.
    let leftover: Vec<bool> = (0..n).map(|v| indegree[v] > 0).collect();
    let start = (0..n).find(|&v| leftover[v]).expect("leftover node");
    let mut pos = vec![usize::MAX; n];
    let mut walk = Vec::new();
    let mut v = start;
    while pos[v] == usize::MAX {
        pos[v] = walk.len();
        walk.push(v);
        v = in_edges[v]
            .iter()
            .map(|&k| edges[k].tail)
            .find(|&u| leftover[u])
            .expect("leftover predecessor");
    }
    let mut cycle: Vec<usize> = walk[pos[v]..].to_vec();
    cycle.reverse();
    // rotate so the cycle starts at its smallest node index
    let min_at = cycle
        .iter()
        .enumerate()
        .min_by_key(|&(_, &u)| u)
        .map(|(i, _)| i)
        .unwrap();
    cycle.rotate_left(min_at);
    cycle.push(cycle[0]);
    Err(cycle)
}

/// Per-edge rates keyed by edge index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RateVector {
    rates: BTreeMap<usize, Rational>,
}

impl RateVector {
    pub fn new() -> RateVector {
        RateVector::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, Rational)>) -> RateVector {
        RateVector {
            rates: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, k: usize) -> Option<&Rational> {
        self.rates.get(&k)
    }

    pub fn get_or_zero(&self, k: usize) -> Rational {
        self.rates.get(&k).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn set(&mut self, k: usize, value: Rational) {
        self.rates.insert(k, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Rational)> {
        self.rates.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn cost(&self, instance: &NetworkInstance) -> Rational {
        self.iter().fold(Rational::zero(), |acc, (k, r)| {
            acc + &instance.edge(k).cost * r
        })
    }

    /// Rates keyed by edge id, for serialization.
    pub fn named(&self, instance: &NetworkInstance) -> BTreeMap<String, String> {
        self.iter()
            .map(|(k, r)| (instance.edge(k).id.clone(), r.to_string()))
            .collect()
    }

    pub fn from_named(
        instance: &NetworkInstance,
        named: &BTreeMap<String, Rational>,
    ) -> Result<RateVector> {
        let mut out = RateVector::new();
        for (id, r) in named {
            let k = instance
                .edge_index(id)
                .ok_or_else(|| Error::Parse(format!("unknown edge id `{id}` in rates")))?;
            out.set(k, r.clone());
        }
        Ok(out)
    }
}

/// Client `t`, the sources that can reach it, and the edges among them.
#[derive(Clone, Debug)]
pub struct ClientSubproblem {
    pub client: usize,
    /// Global source indices (oracle ground elements) in increasing order.
    pub sources: Vec<usize>,
    /// Edge indices of `E_t` in increasing order.
    pub edges: Vec<usize>,
    /// For each edge of `E_t`: local index of tail and head (`None` is the client).
    ends: Vec<(Option<usize>, Option<usize>)>,
    pub ground_entropy: Rational,
    global_mask: Subset,
}

impl ClientSubproblem {
    pub fn build(
        instance: &NetworkInstance,
        oracle: &EntropyOracle,
        t: usize,
    ) -> Result<ClientSubproblem> {
        if !instance.clients().contains(&t) {
            return Err(Error::UnknownNode(format!(
                "{} is not a client",
                instance.node_name(t)
            )));
        }
        let mut reach = vec![false; instance.nodes().len()];
        let mut stack = vec![t];
        reach[t] = true;
        while let Some(v) = stack.pop() {
            for &k in instance.in_edges(v) {
                let u = instance.edge(k).tail;
                if !reach[u] {
                    reach[u] = true;
                    stack.push(u);
                }
            }
        }
        let sources: Vec<usize> = instance
            .sources()
            .iter()
            .enumerate()
            .filter(|&(_, &v)| reach[v])
            .map(|(i, _)| i)
            .collect();
        if sources.is_empty() {
            return Err(Error::EmptyReachableSet(instance.node_name(t).to_string()));
        }
        let local = |v: usize| -> Option<Option<usize>> {
            if v == t {
                return Some(None);
            }
            let slot = instance.source_slot(v)?;
            sources.binary_search(&slot).ok().map(Some)
        };
        let mut edges = Vec::new();
        let mut ends = Vec::new();
        for (k, e) in instance.edges().iter().enumerate() {
            if let (Some(Some(a)), Some(b)) = (local(e.tail), local(e.head)) {
                edges.push(k);
                ends.push((Some(a), b));
            }
        }
        let global_mask = Subset::from_indices(sources.iter().copied());
        let ground_entropy = oracle.entropy(global_mask);
        Ok(ClientSubproblem {
            client: t,
            sources,
            edges,
            ends,
            ground_entropy,
            global_mask,
        })
    }

    pub fn ground_size(&self) -> usize {
        self.sources.len()
    }

    pub fn full(&self) -> Subset {
        Subset::full(self.ground_size())
    }

    /// Oracle-level mask of a local subset.
    pub fn to_global(&self, s: Subset) -> Subset {
        Subset::from_indices(s.iter().map(|i| self.sources[i]))
    }

    pub fn global_ground(&self) -> Subset {
        self.global_mask
    }

    /// Coefficient of each `E_t` rate in the boundary of `s`:
    /// +1 leaving, -1 entering, 0 otherwise.
    pub fn boundary_coefficients(&self, s: Subset) -> Vec<i8> {
        self.ends
            .iter()
            .map(|&(tail, head)| {
                let t_in = tail.is_some_and(|i| s.contains(i));
                let h_in = head.is_some_and(|i| s.contains(i));
                t_in as i8 - h_in as i8
            })
            .collect()
    }

    /// Net rate leaving `s` within `E_t`.
    pub fn boundary(
        &self,
        instance: &NetworkInstance,
        rates: &RateVector,
        s: Subset,
    ) -> Result<Rational> {
        let mut total = Rational::zero();
        for (pos, coeff) in self.boundary_coefficients(s).into_iter().enumerate() {
            let k = self.edges[pos];
            let r = rates
                .get(k)
                .ok_or_else(|| Error::UnknownEdgeRate(instance.edge(k).id.clone()))?;
            match coeff {
                1 => total += r,
                -1 => total -= r,
                _ => {}
            }
        }
        Ok(total)
    }

    /// Same as [`boundary`](Self::boundary) over local rate slices aligned with `edges`.
    pub fn boundary_local(&self, rates: &[Rational], s: Subset) -> Rational {
        self.boundary_coefficients(s).into_iter().zip(rates).fold(
            Rational::zero(),
            |acc, (c, r)| match c {
                1 => acc + r,
                -1 => acc - r,
                _ => acc,
            },
        )
    }

    /// Total weight of the `E_t` edges leaving `s` (towards other sources or the client).
    pub fn cut_capacity(&self, capacities: &RateVector, s: Subset) -> Rational {
        self.boundary_coefficients(s)
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c == 1)
            .fold(Rational::zero(), |acc, (pos, _)| {
                acc + capacities.get_or_zero(self.edges[pos])
            })
    }

    /// Positions (into `edges`) of the edges entering the client.
    pub fn sink_edges(&self) -> Vec<usize> {
        self.ends
            .iter()
            .enumerate()
            .filter(|(_, &(_, h))| h.is_none())
            .map(|(pos, _)| pos)
            .collect()
    }

    /// Conditional entropy `g_t(S) = H(M_t) - H(M_t \ S)` of a local subset.
    pub fn required_rate(&self, oracle: &EntropyOracle, s: Subset) -> Rational {
        oracle.conditional_entropy(self.to_global(s), self.global_mask)
    }

    pub fn rates_to_local(&self, rates: &RateVector) -> Vec<Rational> {
        self.edges.iter().map(|&k| rates.get_or_zero(k)).collect()
    }

    pub fn rates_from_local(&self, local: &[Rational]) -> RateVector {
        RateVector::from_pairs(self.edges.iter().copied().zip(local.iter().cloned()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClientReach {
    pub client: String,
    pub reachable: Vec<String>,
    #[serde(with = "rational::serde_string")]
    pub entropy: Rational,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructabilityReport {
    #[serde(with = "rational::serde_string")]
    pub total_entropy: Rational,
    pub clients: Vec<ClientReach>,
    pub pass: bool,
}

/// Checks that every client can reach sources jointly carrying the whole entropy.
pub fn check_reconstructability(
    instance: &NetworkInstance,
    oracle: &EntropyOracle,
) -> ReconstructabilityReport {
    let total = oracle.entropy(Subset::full(instance.sources().len()));
    let mut clients = Vec::new();
    for &t in instance.clients() {
        let (entropy, reachable) = match ClientSubproblem::build(instance, oracle, t) {
            Ok(sub) => (
                sub.ground_entropy.clone(),
                instance.subset_names(sub.global_ground()),
            ),
            Err(_) => (Rational::zero(), Vec::new()),
        };
        clients.push(ClientReach {
            client: instance.node_name(t).to_string(),
            reachable,
            complete: entropy == total,
            entropy,
        });
    }
    ReconstructabilityReport {
        pass: clients.iter().all(|c| c.complete),
        total_entropy: total,
        clients,
    }
}
