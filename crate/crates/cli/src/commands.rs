use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mmcast::entropy::{RawSourceModel, SourceModel};
use mmcast::feasibility::{check_feasible_multi, CutSlack};
use mmcast::field::FieldMatrix;
use mmcast::model::{check_reconstructability, ClientSubproblem, NetworkInstance, RateVector};
use mmcast::multi::{
    solve_multi_exact, solve_multi_subgradient, MulticastRates, StepSchedule, SubgradientParams,
};
use mmcast::netcode::{
    assign_coefficients, build_coded_network, build_decoder, simulate, ChannelKind, CodeAssignment,
    CodedNetwork, DEFAULT_MAX_ATTEMPTS, DEFAULT_SCALE_LIMIT,
};
use mmcast::problem::ProblemFile;
use mmcast::rational::{int, parse_rational};
use mmcast::single::{solve_single_client, solve_single_client_bruteforce};
use mmcast::submodular::SetFunction;
use mmcast::{Error, Problem, Rational, Result, Subset};
use serde_json::{json, Map, Value};

use crate::args::{CodeArgs, Method, SimulateArgs, SolveArgs};
use crate::output::{float, Manifest};

/// A finished command: its JSON result and exit status.
pub struct Outcome {
    pub result: Value,
    pub exit: i32,
}

impl Outcome {
    fn ok(result: Value) -> Outcome {
        Outcome { result, exit: 0 }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))
}

pub fn load(path: &Path, manifest: &mut Manifest, q: Option<u64>) -> Result<Problem> {
    let bytes = read(path)?;
    manifest.record_input(&bytes);
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse(e.to_string()))?;
    let mut file: ProblemFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(new_q) = q {
        match &mut file.source_model {
            RawSourceModel::Linear { q, .. } => *q = new_q,
            _ => return Err(Error::NotLinearModel),
        }
    }
    Problem::from_file(&file)
}

fn names(instance: &NetworkInstance, global: Subset) -> Value {
    json!(instance.subset_names(global))
}

fn rates_json(instance: &NetworkInstance, rates: &RateVector) -> Value {
    json!(rates.named(instance))
}

pub fn validate(p: &Problem, seed: u64) -> Outcome {
    let inst = &p.instance;
    let kind = match p.oracle.model() {
        SourceModel::Linear(_) => "linear",
        SourceModel::Tabular { .. } => "tabular",
        SourceModel::Pmf { .. } => "pmf",
    };
    let poly = p.oracle.validate_polymatroid(12, 4096, seed);
    let order: Vec<&str> = inst
        .topological_order()
        .iter()
        .map(|&v| inst.node_name(v))
        .collect();
    let clients: Vec<&str> = inst.clients().iter().map(|&t| inst.node_name(t)).collect();
    Outcome::ok(json!({
        "nodes": inst.nodes().len(),
        "edges": inst.edges().len(),
        "clients": clients,
        "sources": inst.source_names(),
        "topological_order": order,
        "source_model": kind,
        "unit": p.oracle.unit(),
        "reconstructability": check_reconstructability(inst, &p.oracle),
        "polymatroid": {
            "mode": poly.mode,
            "pairs_checked": poly.pairs_checked,
            "pass": poly.pass(),
        },
    }))
}

pub fn feas(p: &Problem) -> Result<Outcome> {
    let verdict = check_feasible_multi(&p.instance, &p.oracle)?;
    let clients: Vec<Value> = verdict
        .clients
        .iter()
        .map(|c| {
            json!({
                "client": c.client,
                "status": c.status,
                "violating_set": if c.is_feasible() { Value::Null } else { json!(c.set) },
                "argmin": c.set,
                "cut_capacity": c.cut_capacity.to_string(),
                "required": c.required.to_string(),
                "slack": c.slack.to_string(),
                "deficit": c.deficit.to_string(),
            })
        })
        .collect();
    Ok(Outcome {
        result: json!({ "feasible": verdict.feasible, "clients": clients }),
        exit: if verdict.feasible { 0 } else { 2 },
    })
}

pub fn parse_schedule(text: &str) -> Result<StepSchedule> {
    let bad = || Error::InvalidParameters(format!("schedule `{text}` is not s1:a,b,c or s2:a"));
    let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
    let values = rest
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    let schedule = match (kind, values.as_slice()) {
        ("s1", &[a, b, c]) => StepSchedule::Harmonic { a, b, c },
        ("s2", &[a]) => StepSchedule::Power { a },
        _ => return Err(bad()),
    };
    schedule.validate()?;
    Ok(schedule)
}

fn multicast_json(instance: &NetworkInstance, rates: &MulticastRates) -> Map<String, Value> {
    let per_client: Map<String, Value> = rates
        .per_client
        .iter()
        .map(|(t, r)| (instance.node_name(*t).to_string(), rates_json(instance, r)))
        .collect();
    let mut out = Map::new();
    out.insert("Z".into(), rates_json(instance, &rates.z));
    out.insert("per_client".into(), Value::Object(per_client));
    out.insert("cost".into(), json!(rates.cost.to_string()));
    out
}

pub fn solve(p: &Problem, args: &SolveArgs, manifest: &mut Manifest) -> Result<Outcome> {
    let inst = &p.instance;
    if let Some(name) = &args.client {
        manifest.param("client", name.as_str());
        manifest.param("method", "cutting_plane");
        if args.method == Method::Subgradient {
            return Err(Error::InvalidParameters(
                "the subgradient method needs --all-clients".into(),
            ));
        }
        let t = inst
            .node_index(name)
            .filter(|t| inst.clients().contains(t))
            .ok_or_else(|| Error::UnknownNode(name.clone()))?;
        let sub = ClientSubproblem::build(inst, &p.oracle, t)?;
        let s = solve_single_client(inst, &sub, &p.oracle, &inst.costs(), &inst.capacities())?;
        let tight: Vec<Value> = s
            .tight_sets
            .iter()
            .map(|&set| names(inst, sub.to_global(set)))
            .collect();
        return Ok(Outcome::ok(json!({
            "method": "cutting_plane",
            "client": name,
            "rates": rates_json(inst, &s.rates),
            "cost": s.cost.to_string(),
            "tight_sets": tight,
            "iterations": s.iterations,
        })));
    }
    manifest.param("all_clients", true);
    match args.method {
        Method::Exact => {
            manifest.param("method", "exact");
            let rates = solve_multi_exact(inst, &p.oracle)?;
            let mut out = multicast_json(inst, &rates);
            out.insert("method".into(), json!("exact"));
            out.insert("trace".into(), json!([]));
            Ok(Outcome::ok(Value::Object(out)))
        }
        Method::Subgradient => {
            let schedule = parse_schedule(&args.schedule)?;
            manifest.param("method", "subgradient");
            manifest.param("schedule", args.schedule.as_str());
            manifest.param("iters", args.iters);
            manifest.param("gap", float(args.gap));
            let params = SubgradientParams {
                schedule,
                max_iters: args.iters,
                gap_tol: args.gap,
                ..SubgradientParams::default()
            };
            let outcome = solve_multi_subgradient(inst, &p.oracle, &params)?;
            if let Some(path) = &args.trace_csv {
                write_trace(path, &outcome.trace)?;
            }
            let trace: Vec<Value> = outcome
                .trace
                .iter()
                .map(|t| json!({ "n": t.n, "dual": float(t.dual), "primal": float(t.primal), "gap": float(t.gap) }))
                .collect();
            let mut out = multicast_json(inst, &outcome.rates);
            out.insert("method".into(), json!("subgradient"));
            out.insert("status".into(), json!(outcome.status));
            out.insert("iterations".into(), json!(outcome.iterations));
            out.insert("recovered_at".into(), json!(outcome.recovered_at));
            out.insert("best_dual".into(), float(outcome.best_dual));
            out.insert("gap".into(), float(outcome.gap));
            out.insert("trace".into(), json!(trace));
            Ok(Outcome::ok(Value::Object(out)))
        }
    }
}

fn write_trace(path: &Path, trace: &[mmcast::multi::TracePoint]) -> Result<()> {
    let io = |e: csv::Error| Error::Parse(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["n", "dual", "primal", "gap"]).map_err(io)?;
    for t in trace {
        let cell = |x: f64| float(x).to_string();
        w.write_record([t.n.to_string(), cell(t.dual), cell(t.primal), cell(t.gap)])
            .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Parse(format!("cannot write {}: {e}", path.display())))
}

/// Accepts a flat `{edge: rate}` map, or one nested under `rates`, `Z` or `result.Z`.
pub fn load_rates(path: &Path, instance: &NetworkInstance) -> Result<RateVector> {
    let bytes = read(path)?;
    let mut value: Value =
        serde_json::from_slice(&bytes).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(inner) = value.get("result").cloned() {
        value = inner;
    }
    for key in ["rates", "Z"] {
        if let Some(inner) = value.get(key).cloned() {
            value = inner;
            break;
        }
    }
    let map = value
        .as_object()
        .ok_or_else(|| Error::Parse("rates file must hold an object of edge rates".into()))?;
    let mut named = BTreeMap::new();
    for (id, v) in map {
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(Error::Parse(format!("rate of `{id}` is not a number"))),
        };
        named.insert(id.clone(), parse_rational(&text)?);
    }
    RateVector::from_named(instance, &named)
}

struct Code {
    net: CodedNetwork,
    assignment: CodeAssignment,
    decoders: Vec<FieldMatrix>,
    rates: RateVector,
}

fn build_code(p: &Problem, args: &CodeArgs, seed: u64, manifest: &mut Manifest) -> Result<Code> {
    let rates = match &args.rates {
        Some(path) => {
            manifest.param("rates", path.display().to_string());
            load_rates(path, &p.instance)?
        }
        None => {
            manifest.param("rates", "exact");
            solve_multi_exact(&p.instance, &p.oracle)?.z
        }
    };
    let net = build_coded_network(&p.instance, &p.oracle, &rates, DEFAULT_SCALE_LIMIT)?;
    let assignment = assign_coefficients(&net, seed, DEFAULT_MAX_ATTEMPTS)?;
    let decoders = (0..net.clients.len())
        .map(|c| build_decoder(&net, &assignment, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(Code {
        net,
        assignment,
        decoders,
        rates,
    })
}

fn code_params(manifest: &mut Manifest, args: &CodeArgs) {
    if let Some(q) = args.q {
        manifest.param("q", q);
    }
}

pub fn code(p: &Problem, args: &CodeArgs, seed: u64, manifest: &mut Manifest) -> Result<Outcome> {
    code_params(manifest, args);
    let c = build_code(p, args, seed, manifest)?;
    let inst = &p.instance;
    let channels: Vec<Value> = c
        .net
        .channels
        .iter()
        .zip(&c.assignment.global_vectors)
        .enumerate()
        .map(|(i, (ch, v))| {
            let origin = match ch.kind {
                ChannelKind::Super { source, row } => {
                    json!({ "kind": "super", "source": p.oracle.names()[source], "row": row })
                }
                ChannelKind::Edge { edge, copy } => {
                    json!({ "kind": "edge", "edge": inst.edge(edge).id, "copy": copy })
                }
            };
            json!({
                "index": i,
                "origin": origin,
                "inputs": c.net.inputs[i],
                "coefficients": c.assignment.coefficients[i],
                "global_vector": v,
            })
        })
        .collect();
    let clients: Vec<Value> = c
        .net
        .clients
        .iter()
        .enumerate()
        .map(|(k, (_, ins))| {
            json!({
                "client": c.net.client_names[k],
                "in_channels": ins,
                "rank": c.assignment.ranks[k],
                "decoder": c.decoders[k].to_rows(),
            })
        })
        .collect();
    Ok(Outcome::ok(json!({
        "q": c.net.modulus.get(),
        "beta": c.net.beta,
        "dimension": c.net.dimension,
        "packets": c.net.packets,
        "message_basis": c.net.message_basis.to_rows(),
        "attempts": c.assignment.attempts,
        "rates": rates_json(inst, &c.rates),
        "channels": channels,
        "clients": clients,
    })))
}

pub fn parse_message(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<u64>()
                .map_err(|_| Error::Parse(format!("`{v}` is not a field element")))
        })
        .collect()
}

pub fn run_simulation(
    p: &Problem,
    args: &SimulateArgs,
    seed: u64,
    manifest: &mut Manifest,
) -> Result<Outcome> {
    code_params(manifest, &args.code);
    manifest.param("w", args.w.as_str());
    let w = parse_message(&args.w)?;
    let c = build_code(p, &args.code, seed, manifest)?;
    let sim = simulate(&c.net, &c.assignment, &c.decoders, &w)?;
    let exact = sim.clients.iter().all(|r| r.exact);
    Ok(Outcome {
        result: json!({
            "w": w,
            "target": sim.target,
            "beta": c.net.beta,
            "attempts": c.assignment.attempts,
            "clients": sim.clients,
            "edges": sim.edges,
            "messages": sim.messages,
        }),
        exit: if exact { 0 } else { 2 },
    })
}

/// Minimum of `c(Δ⁺S) - g_t(S)` by listing every nonempty subset.
fn enumerate_slack(sub: &ClientSubproblem, p: &Problem, caps: &RateVector) -> Rational {
    let f = CutSlack {
        sub,
        oracle: &p.oracle,
        capacities: caps,
    };
    Subset::all(sub.ground_size())
        .skip(1)
        .map(|s| f.value(s))
        .min()
        .expect("nonempty ground")
}

pub fn oracle(p: &Problem) -> Result<Outcome> {
    let inst = &p.instance;
    let report = check_reconstructability(inst, &p.oracle);
    if let Some(bad) = report.clients.iter().find(|c| !c.complete) {
        return Err(Error::ReconstructabilityViolated {
            client: bad.client.clone(),
            reached: bad.entropy.to_string(),
            total: report.total_entropy.to_string(),
        });
    }
    let caps = inst.capacities();
    let costs = inst.costs();
    let mut all_feasible = true;
    let mut clients = Vec::new();
    for &t in inst.clients() {
        let sub = ClientSubproblem::build(inst, &p.oracle, t)?;
        if sub.ground_size() > 20 {
            return Err(Error::GroundTooLarge {
                size: sub.ground_size(),
                limit: 20,
            });
        }
        let slack = enumerate_slack(&sub, p, &caps);
        let feasible = slack >= int(0);
        all_feasible &= feasible;
        let cost = if feasible {
            json!(
                solve_single_client_bruteforce(inst, &sub, &p.oracle, &costs, &caps)?
                    .cost
                    .to_string()
            )
        } else {
            Value::Null
        };
        clients.push(json!({
            "client": inst.node_name(t),
            "feasible": feasible,
            "slack": slack.to_string(),
            "single_client_cost": cost,
        }));
    }
    let multi = if all_feasible {
        json!(solve_multi_exact(inst, &p.oracle)?.cost.to_string())
    } else {
        Value::Null
    };
    // the cross-check against the fast paths
    let fast = check_feasible_multi(inst, &p.oracle)?;
    let agree = fast.feasible == all_feasible
        && fast
            .clients
            .iter()
            .zip(&clients)
            .all(|(c, o)| o["slack"] == json!(c.slack.to_string()));
    Ok(Outcome {
        result: json!({
            "feasible": all_feasible,
            "clients": clients,
            "multi_client_cost": multi,
            "agrees_with_sfm": agree,
        }),
        exit: if all_feasible && agree { 0 } else { 2 },
    })
}
