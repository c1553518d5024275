//! Linear network codes for the finite linear source model.
//!
//! Every edge of rate `R_e` becomes `β R_e` unit channels, where `β` clears the
//! denominators of the rates. A super node feeds each source one channel per
//! basis row of its observation matrix. Channels are kept in topological
//! order, so the channel adjacency `Γ` is strictly upper triangular here
//! (entry `(i, j)` couples channel `i` into channel `j`).

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::entropy::EntropyOracle;
use crate::error::{Error, Result};
use crate::feasibility::check_feasible_single;
use crate::field::{FieldMatrix, Modulus};
use crate::model::{ClientSubproblem, NetworkInstance, RateVector};
use crate::rational::Rational;

pub const DEFAULT_SCALE_LIMIT: u64 = 1 << 12;
pub const DEFAULT_MAX_ATTEMPTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelKind {
    /// From the super node into source `source` (oracle index), carrying basis row `row`.
    Super { source: usize, row: usize },
    /// Copy `copy` of instance edge `edge`.
    Edge { edge: usize, copy: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Channel {
    pub kind: ChannelKind,
    /// `None` for the super node.
    pub tail: Option<usize>,
    pub head: usize,
}

#[derive(Clone, Debug)]
pub struct CodedNetwork {
    pub modulus: Modulus,
    /// Rank of the stacked observations after block scaling, `β H`.
    pub dimension: usize,
    /// Length of `W` before block scaling.
    pub packets: usize,
    pub beta: u64,
    /// `dimension x β N`: row basis of the stacked observations in reduced echelon
    /// form. Clients recover `message_basis · W`, which is `W` itself when the
    /// sources jointly see every packet.
    pub message_basis: FieldMatrix,
    pub channels: Vec<Channel>,
    /// `dimension x channels`; column `i` is the row a super channel carries, zero otherwise.
    pub source_matrix: FieldMatrix,
    /// Input channels of every channel (empty for super channels).
    pub inputs: Vec<Vec<usize>>,
    /// `(client node, incoming channels)` in client order.
    pub clients: Vec<(usize, Vec<usize>)>,
    /// Channels of each instance edge.
    pub edge_channels: Vec<Vec<usize>>,
    pub client_names: Vec<String>,
    pub edge_ids: Vec<String>,
}

impl CodedNetwork {
    pub fn super_channel_count(&self) -> usize {
        self.channels
            .iter()
            .filter(|c| matches!(c.kind, ChannelKind::Super { .. }))
            .count()
    }

    pub fn edge_channel_count(&self) -> usize {
        self.channels.len() - self.super_channel_count()
    }

    /// Support of `Γ`: `(i, j)` whenever channel `i` ends where channel `j` starts.
    pub fn adjacency(&self) -> FieldMatrix {
        let n = self.channels.len();
        let mut gamma = FieldMatrix::zeros(n, n, self.modulus);
        for (j, ins) in self.inputs.iter().enumerate() {
            for &i in ins {
                gamma.set(i, j, 1);
            }
        }
        gamma
    }

    /// `B(t)`: selects the client's incoming channels.
    pub fn output_selector(&self, client: usize) -> FieldMatrix {
        let ins = &self.clients[client].1;
        let mut b = FieldMatrix::zeros(self.channels.len(), ins.len(), self.modulus);
        for (c, &ch) in ins.iter().enumerate() {
            b.set(ch, c, 1);
        }
        b
    }
}

/// Least common denominator of the rates, as long as it stays within `limit`.
fn block_scale(rates: &[Rational], limit: u64) -> Result<u64> {
    let lcm = rates
        .iter()
        .fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
    match lcm.to_u64() {
        Some(beta) if beta <= limit => Ok(beta),
        _ => Err(Error::ScaleOverflow {
            scale: lcm.to_string(),
            limit,
        }),
    }
}

/// `A ⊗ I_β` as integer rows: coordinate `c` of `W` becomes the block `c β .. c β + β`.
fn kron_identity(a: &FieldMatrix, beta: usize) -> FieldMatrix {
    let mut out = FieldMatrix::zeros(a.rows() * beta, a.cols() * beta, a.modulus());
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            let v = a.get(r, c);
            if v != 0 {
                for b in 0..beta {
                    out.set(r * beta + b, c * beta + b, v);
                }
            }
        }
    }
    out
}

/// Expands `rates` into unit channels with the super node attached.
///
/// Missing edges in `rates` carry nothing. The rates must fit under the edge
/// capacities and, used as capacities, must pass the feasibility test of every
/// client.
pub fn build_coded_network(
    instance: &NetworkInstance,
    oracle: &EntropyOracle,
    rates: &RateVector,
    scale_limit: u64,
) -> Result<CodedNetwork> {
    let model = oracle.model().as_linear().ok_or(Error::NotLinearModel)?;
    let m = instance.edges().len();
    let full: Vec<Rational> = (0..m).map(|k| rates.get_or_zero(k)).collect();
    for (k, r) in full.iter().enumerate() {
        let e = instance.edge(k);
        if r.is_negative() || r > &e.capacity {
            return Err(Error::InfeasibleRates(format!(
                "rate {r} on `{}` outside [0, {}]",
                e.id, e.capacity
            )));
        }
    }
    let as_capacities = RateVector::from_pairs(full.iter().cloned().enumerate());
    for &t in instance.clients() {
        let sub = ClientSubproblem::build(instance, oracle, t)?;
        let cert = check_feasible_single(instance, &sub, oracle, &as_capacities)?;
        if !cert.is_feasible() {
            return Err(Error::InfeasibleRates(cert.client));
        }
    }

    let beta = block_scale(&full, scale_limit)?;
    let modulus = model.modulus;
    let stacked = model
        .matrices
        .iter()
        .try_fold(FieldMatrix::zeros(0, model.packets, modulus), |acc, a| {
            acc.vstack(a)
        })?;
    let (echelon, pivots) = stacked.rref();
    let basis = echelon.select_rows(&(0..pivots.len()).collect::<Vec<_>>());
    let dimension = pivots.len() * beta as usize;
    let mut channels = Vec::new();
    let mut super_rows: Vec<Vec<u64>> = Vec::new();
    for (i, a) in model.matrices.iter().enumerate() {
        // a row of `a` equals Σ_j a[p_j] basis_j, so its coordinates are the pivot entries
        let scaled = kron_identity(&a.select_cols(&pivots), beta as usize);
        for (row, r) in scaled.independent_rows().into_iter().enumerate() {
            channels.push(Channel {
                kind: ChannelKind::Super { source: i, row },
                tail: None,
                head: instance.sources()[i],
            });
            super_rows.push(scaled.row(r).to_vec());
        }
    }
    let mut edge_channels = vec![Vec::new(); m];
    for &v in instance.topological_order() {
        for &k in instance.out_edges(v) {
            let count = (&full[k] * Rational::from_integer(BigInt::from(beta)))
                .to_integer()
                .to_usize()
                .expect("scaled rate fits");
            for copy in 0..count {
                edge_channels[k].push(channels.len());
                channels.push(Channel {
                    kind: ChannelKind::Edge { edge: k, copy },
                    tail: Some(v),
                    head: instance.edge(k).head,
                });
            }
        }
    }
    let inputs: Vec<Vec<usize>> = channels
        .iter()
        .map(|c| match c.tail {
            None => Vec::new(),
            Some(v) => (0..channels.len())
                .filter(|&i| channels[i].head == v)
                .collect(),
        })
        .collect();
    let mut source_matrix = FieldMatrix::zeros(dimension, channels.len(), modulus);
    for (col, row) in super_rows.iter().enumerate() {
        for (r, &v) in row.iter().enumerate() {
            source_matrix.set(r, col, v);
        }
    }
    let clients = instance
        .clients()
        .iter()
        .map(|&t| {
            (
                t,
                (0..channels.len())
                    .filter(|&i| channels[i].head == t)
                    .collect(),
            )
        })
        .collect();
    Ok(CodedNetwork {
        modulus,
        dimension,
        packets: model.packets,
        beta,
        message_basis: kron_identity(&basis, beta as usize),
        channels,
        source_matrix,
        inputs,
        clients,
        edge_channels,
        client_names: instance
            .clients()
            .iter()
            .map(|&t| instance.node_name(t).to_string())
            .collect(),
        edge_ids: instance.edges().iter().map(|e| e.id.clone()).collect(),
    })
}

/// Local coefficients (aligned with `net.inputs`) and what they induce.
#[derive(Clone, Debug)]
pub struct CodeAssignment {
    pub coefficients: Vec<Vec<u64>>,
    /// Global coding vector of every channel, length `net.dimension`.
    pub global_vectors: Vec<Vec<u64>>,
    /// Rank of each client's transfer matrix.
    pub ranks: Vec<usize>,
    pub attempts: usize,
}

impl CodeAssignment {
    /// Takes explicit local coefficients; ranks come from propagation.
    pub fn from_coefficients(
        net: &CodedNetwork,
        coefficients: Vec<Vec<u64>>,
    ) -> Result<CodeAssignment> {
        if coefficients.len() != net.channels.len()
            || coefficients
                .iter()
                .zip(&net.inputs)
                .any(|(c, i)| c.len() != i.len())
        {
            return Err(Error::DimensionMismatch(
                "coefficients do not match channel inputs".into(),
            ));
        }
        let q = net.modulus.get();
        let coefficients: Vec<Vec<u64>> = coefficients
            .into_iter()
            .map(|c| c.into_iter().map(|v| v % q).collect())
            .collect();
        let mut assignment = CodeAssignment {
            coefficients,
            global_vectors: Vec::new(),
            ranks: Vec::new(),
            attempts: 1,
        };
        assignment.global_vectors = propagate_global_vectors(net, &assignment);
        assignment.ranks = (0..net.clients.len())
            .map(|c| received_matrix(net, &assignment, c).rank())
            .collect();
        Ok(assignment)
    }

    pub fn is_valid(&self, net: &CodedNetwork) -> bool {
        self.ranks.iter().all(|&r| r == net.dimension)
    }
}

/// Draws local coefficients uniformly from `F_q` until every client's
/// transfer matrix has full rank.
pub fn assign_coefficients(
    net: &CodedNetwork,
    seed: u64,
    max_attempts: usize,
) -> Result<CodeAssignment> {
    let q = net.modulus.get();
    let k = net.clients.len();
    if q <= k as u64 {
        return Err(Error::FieldTooSmall { q, clients: k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = Vec::new();
    for attempt in 1..=max_attempts {
        let coefficients = net
            .inputs
            .iter()
            .map(|ins| ins.iter().map(|_| rng.gen_range(0..q)).collect())
            .collect();
        let mut assignment = CodeAssignment::from_coefficients(net, coefficients)?;
        assignment.attempts = attempt;
        if assignment.is_valid(net) {
            return Ok(assignment);
        }
        last = assignment.ranks;
    }
    Err(Error::VerificationFailedAllAttempts {
        attempts: max_attempts,
        ranks: net.client_names.iter().cloned().zip(last).collect(),
    })
}

/// `Γ` with the assignment's local coefficients.
pub fn coefficient_matrix(net: &CodedNetwork, assignment: &CodeAssignment) -> FieldMatrix {
    let n = net.channels.len();
    let mut gamma = FieldMatrix::zeros(n, n, net.modulus);
    for (j, ins) in net.inputs.iter().enumerate() {
        for (&i, &c) in ins.iter().zip(&assignment.coefficients[j]) {
            gamma.set(i, j, c);
        }
    }
    gamma
}

/// `M(t) = A (I - Γ)^{-1} B(t)`.
pub fn transfer_matrix(
    net: &CodedNetwork,
    assignment: &CodeAssignment,
    client: usize,
) -> Result<FieldMatrix> {
    let n = net.channels.len();
    let q = net.modulus.get();
    let gamma = coefficient_matrix(net, assignment);
    let mut i_minus_gamma = FieldMatrix::identity(n, net.modulus);
    for i in 0..n {
        for j in 0..n {
            let g = gamma.get(i, j);
            if g != 0 {
                i_minus_gamma.set(i, j, (i_minus_gamma.get(i, j) + q - g) % q);
            }
        }
    }
    let inv = i_minus_gamma.inverse()?;
    net.source_matrix
        .mul(&inv)?
        .mul(&net.output_selector(client))
}

/// Global vectors channel by channel in topological order.
pub fn propagate_global_vectors(net: &CodedNetwork, assignment: &CodeAssignment) -> Vec<Vec<u64>> {
    let q = net.modulus.get();
    let mut vectors: Vec<Vec<u64>> = Vec::with_capacity(net.channels.len());
    for (j, ch) in net.channels.iter().enumerate() {
        let v = match ch.kind {
            ChannelKind::Super { .. } => net.source_matrix.column(j),
            ChannelKind::Edge { .. } => {
                let mut acc = vec![0u64; net.dimension];
                for (&i, &c) in net.inputs[j].iter().zip(&assignment.coefficients[j]) {
                    if c == 0 {
                        continue;
                    }
                    for (a, &g) in acc.iter_mut().zip(&vectors[i]) {
                        *a = (*a + c * g) % q;
                    }
                }
                acc
            }
        };
        vectors.push(v);
    }
    vectors
}

/// `dimension x in-channels`, one global vector per column.
fn received_matrix(net: &CodedNetwork, assignment: &CodeAssignment, client: usize) -> FieldMatrix {
    let ins = &net.clients[client].1;
    let mut m = FieldMatrix::zeros(net.dimension, ins.len(), net.modulus);
    for (c, &ch) in ins.iter().enumerate() {
        for (r, &v) in assignment.global_vectors[ch].iter().enumerate() {
            m.set(r, c, v);
        }
    }
    m
}

/// `D` with `D y = W`, where `y` stacks the client's received symbols.
///
/// Uses the first `dimension` independent received symbols and ignores the rest.
pub fn build_decoder(
    net: &CodedNetwork,
    assignment: &CodeAssignment,
    client: usize,
) -> Result<FieldMatrix> {
    let mt = received_matrix(net, assignment, client).transpose();
    let picked = mt.independent_rows();
    if picked.len() < net.dimension {
        return Err(Error::RankDeficient {
            rank: picked.len(),
            needed: net.dimension,
        });
    }
    let inv = mt.select_rows(&picked).inverse()?;
    let mut d = FieldMatrix::zeros(net.dimension, mt.rows(), net.modulus);
    for (c, &row) in picked.iter().enumerate() {
        for r in 0..net.dimension {
            d.set(r, row, inv.get(r, c));
        }
    }
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClientReconstruction {
    pub client: String,
    pub decoded: Vec<u64>,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EdgeTally {
    pub edge: String,
    pub symbols: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Simulation {
    /// `message_basis · w`, what every client should decode.
    pub target: Vec<u64>,
    /// Symbol carried by every channel.
    pub messages: Vec<u64>,
    pub clients: Vec<ClientReconstruction>,
    pub edges: Vec<EdgeTally>,
}

/// Pushes `w` (length `β N`) through the code and decodes at every client.
pub fn simulate(
    net: &CodedNetwork,
    assignment: &CodeAssignment,
    decoders: &[FieldMatrix],
    w: &[u64],
) -> Result<Simulation> {
    let expected = net.packets * net.beta as usize;
    if w.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "message has {} symbols, expected {expected}",
            w.len()
        )));
    }
    if decoders.len() != net.clients.len() {
        return Err(Error::DimensionMismatch(
            "one decoder per client required".into(),
        ));
    }
    let q = net.modulus.get();
    let w: Vec<u64> = w.iter().map(|v| v % q).collect();
    let target = net.message_basis.mul_vec(&w)?;
    let mut messages = Vec::with_capacity(net.channels.len());
    for (j, ch) in net.channels.iter().enumerate() {
        let symbol = match ch.kind {
            ChannelKind::Super { .. } => (0..net.dimension).fold(0, |acc, r| {
                (acc + net.source_matrix.get(r, j) * target[r]) % q
            }),
            ChannelKind::Edge { .. } => net.inputs[j]
                .iter()
                .zip(&assignment.coefficients[j])
                .fold(0, |acc, (&i, &c)| (acc + c * messages[i]) % q),
        };
        messages.push(symbol);
    }
    let clients = net
        .clients
        .iter()
        .zip(decoders)
        .zip(&net.client_names)
        .map(|(((_, ins), d), name)| {
            let y: Vec<u64> = ins.iter().map(|&ch| messages[ch]).collect();
            let decoded = d.mul_vec(&y)?;
            Ok(ClientReconstruction {
                client: name.clone(),
                exact: decoded == target,
                decoded,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let edges = net
        .edge_channels
        .iter()
        .zip(&net.edge_ids)
        .map(|(chs, id)| EdgeTally {
            edge: id.clone(),
            symbols: chs.len(),
        })
        .collect();
    Ok(Simulation {
        target,
        messages,
        clients,
        edges,
    })
}
