#![allow(dead_code)]

use std::collections::BTreeMap;

use mmcast::entropy::RawSourceModel;
use mmcast::model::{check_reconstructability, RawEdge, RawInstance};
use mmcast::problem::ProblemFile;
use mmcast::rational::int;
use mmcast::{Problem, Rational, Subset};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const F2: &str = include_str!("../../../../fixtures/fixture-F2.json");

pub fn f2() -> Problem {
    Problem::from_json(F2).unwrap()
}

pub fn problem(json: &str) -> Problem {
    Problem::from_json(json).unwrap()
}

/// `m1{a} -> m2{b} -> t` with the given capacities.
pub fn chain(c1: i64, c2: i64) -> Problem {
    problem(&format!(
        r#"{{"nodes":["m1","m2","t"],
            "edges":[{{"id":"e1","tail":"m1","head":"m2","capacity":"{c1}","cost":"1"}},
                     {{"id":"e2","tail":"m2","head":"t","capacity":"{c2}","cost":"1"}}],
            "clients":["t"],
            "source_model":{{"kind":"linear","q":5,"N":2,"matrices":{{"m1":[[1,0]],"m2":[[0,1]]}}}}}}"#
    ))
}

/// One source observing `W` in full over a single edge.
pub fn single_edge(packets: usize, capacity: i64, cost: i64) -> Problem {
    let rows: Vec<Vec<i64>> = (0..packets)
        .map(|i| (0..packets).map(|j| (i == j) as i64).collect())
        .collect();
    problem(&format!(
        r#"{{"nodes":["m1","t"],
            "edges":[{{"id":"e","tail":"m1","head":"t","capacity":"{capacity}","cost":"{cost}"}}],
            "clients":["t"],
            "source_model":{{"kind":"linear","q":5,"N":{packets},"matrices":{{"m1":{}}}}}}}"#,
        serde_json::to_string(&rows).unwrap()
    ))
}

/// A random instance whose sources observe coordinate subsets of `W`.
pub struct Generated {
    pub problem: Problem,
    /// Packet bitmask observed by each source, in source order.
    pub observed: Vec<u32>,
}

impl Generated {
    /// Entropy straight from the selector sets: number of distinct packets seen.
    pub fn entropy(&self, global: Subset) -> Rational {
        let union = global.iter().fold(0u32, |acc, i| acc | self.observed[i]);
        int(union.count_ones() as i64)
    }
}

#[derive(Clone, Copy)]
pub struct GenParams {
    pub max_sources: usize,
    pub max_clients: usize,
    pub max_capacity: i64,
    pub max_cost: i64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_sources: 6,
            max_clients: 2,
            max_capacity: 5,
            max_cost: 3,
        }
    }
}

/// Draws until every client can reach all of `W`.
pub fn random_instance(rng: &mut ChaCha8Rng, p: GenParams) -> Generated {
    loop {
        let n = rng.gen_range(1..=p.max_sources);
        let k = rng.gen_range(1..=p.max_clients);
        let packets = rng.gen_range(1..=4usize);
        let observed: Vec<u32> = (0..n)
            .map(|_| {
                (0..packets)
                    .filter(|_| rng.gen_bool(0.4))
                    .fold(0u32, |m, j| m | (1 << j))
            })
            .collect();
        let mut nodes: Vec<String> = (1..=n).map(|i| format!("m{i}")).collect();
        nodes.extend((1..=k).map(|j| format!("t{j}")));
        let mut edges = Vec::new();
        let mut add = |tail: String, head: String, rng: &mut ChaCha8Rng| {
            edges.push(RawEdge {
                id: format!("e{}", edges.len() + 1),
                tail,
                head,
                capacity: int(rng.gen_range(0..=p.max_capacity)),
                cost: int(rng.gen_range(1..=p.max_cost)),
            });
        };
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.35) {
                    add(nodes[i].clone(), nodes[j].clone(), rng);
                }
            }
        }
        for t in 1..=k {
            let forced = rng.gen_range(0..n);
            for (i, node) in nodes.iter().take(n).enumerate() {
                if i == forced || rng.gen_bool(0.35) {
                    add(node.clone(), format!("t{t}"), rng);
                }
            }
        }
        let matrices: BTreeMap<String, Vec<Vec<i64>>> = observed
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m != 0)
            .map(|(i, &m)| {
                let rows = (0..packets)
                    .filter(|&j| m & (1 << j) != 0)
                    .map(|j| (0..packets).map(|c| (c == j) as i64).collect())
                    .collect();
                (nodes[i].clone(), rows)
            })
            .collect();
        let file = ProblemFile {
            instance: RawInstance {
                nodes,
                edges,
                clients: (1..=k).map(|t| format!("t{t}")).collect(),
            },
            source_model: RawSourceModel::Linear {
                q: 5,
                packets,
                blocklength: 1,
                matrices,
            },
        };
        let problem = Problem::from_file(&file).expect("generator builds valid instances");
        if check_reconstructability(&problem.instance, &problem.oracle).pass {
            return Generated { problem, observed };
        }
    }
}

/// Cut condition checked by listing every nonempty subset of every client's
/// reachable sources, with cut capacities read off the edge list.
pub fn enumerate_feasibility(g: &Generated) -> Vec<bool> {
    let inst = &g.problem.instance;
    inst.clients()
        .iter()
        .map(|&t| {
            let reach = reachable_sources(inst, t);
            let ground = Subset::from_indices(reach.iter().copied());
            Subset::all(reach.len()).skip(1).all(|local| {
                let s = Subset::from_indices(local.iter().map(|i| reach[i]));
                let inside = |v: usize| inst.source_slot(v).is_some_and(|i| s.contains(i));
                let target =
                    |v: usize| v == t || inst.source_slot(v).is_some_and(|i| ground.contains(i));
                let cut = inst
                    .edges()
                    .iter()
                    .filter(|e| inside(e.tail) && !inside(e.head) && target(e.head))
                    .fold(int(0), |acc, e| acc + &e.capacity);
                cut >= g.entropy(ground) - g.entropy(ground.minus(s))
            })
        })
        .collect()
}

/// Sources with a directed path to `t`, as oracle indices.
pub fn reachable_sources(inst: &mmcast::model::NetworkInstance, t: usize) -> Vec<usize> {
    let mut seen = vec![false; inst.nodes().len()];
    let mut stack = vec![t];
    while let Some(v) = stack.pop() {
        for e in inst.edges().iter().filter(|e| e.head == v) {
            if !seen[e.tail] {
                seen[e.tail] = true;
                stack.push(e.tail);
            }
        }
    }
    (0..inst.sources().len())
        .filter(|&i| seen[inst.sources()[i]])
        .collect()
}
