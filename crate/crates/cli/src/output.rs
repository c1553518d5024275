use std::path::Path;

use mmcast::Error;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub struct Manifest {
    pub subcommand: &'static str,
    pub input: String,
    pub params: Map<String, Value>,
    pub digest: Option<String>,
}

impl Manifest {
    pub fn new(subcommand: &'static str, input: &Path) -> Manifest {
        Manifest {
            subcommand,
            input: input.display().to_string(),
            params: Map::new(),
            digest: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.params.insert(key.to_string(), value.into());
    }

    pub fn record_input(&mut self, bytes: &[u8]) {
        self.digest = Some(hex::encode(Sha256::digest(bytes)));
    }

    pub fn to_json(&self) -> Value {
        json!({
            "subcommand": self.subcommand,
            "input": self.input,
            "params": self.params,
            "version": env!("CARGO_PKG_VERSION"),
            "input_sha256": self.digest,
        })
    }
}

/// Rounds to 12 significant digits.
pub fn float(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    json!(rounded)
}

/// Infeasibility and failed verification exit with 2, everything else with 1.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible { .. }
        | Error::ReconstructabilityViolated { .. }
        | Error::InfeasibleRates(_)
        | Error::VerificationFailedAllAttempts { .. }
        | Error::RankDeficient { .. }
        | Error::MaxIterationsExceeded { .. } => 2,
        _ => 1,
    }
}

pub fn error_object(code: &str, message: String, context: Value) -> Value {
    json!({ "code": code, "message": message, "context": context })
}

pub fn error_json(err: &Error) -> Value {
    let context = match err {
        Error::CycleDetected(cycle) => json!({ "cycle": cycle }),
        Error::UnknownSubset(set) => json!({ "subset": set }),
        Error::GroundTooLarge { size, limit } => json!({ "size": size, "limit": limit }),
        Error::Infeasible { client } => json!({ "client": client }),
        Error::ReconstructabilityViolated {
            client,
            reached,
            total,
        } => {
            json!({ "client": client, "reached": reached, "total": total })
        }
        Error::BudgetExceeded { rows, limit } => json!({ "rows": rows, "limit": limit }),
        Error::ScaleOverflow { scale, limit } => json!({ "scale": scale, "limit": limit }),
        Error::FieldTooSmall { q, clients } => json!({ "q": q, "clients": clients }),
        Error::VerificationFailedAllAttempts { attempts, ranks } => {
            let ranks: Map<String, Value> =
                ranks.iter().map(|(c, r)| (c.clone(), json!(r))).collect();
            json!({ "attempts": attempts, "ranks": ranks })
        }
        Error::RankDeficient { rank, needed } => json!({ "rank": rank, "needed": needed }),
        Error::ModulusMismatch(a, b) => json!({ "moduli": [a, b] }),
        Error::NotPrime(q) => json!({ "q": q }),
        Error::MaxIterationsExceeded {
            iterations,
            best_set,
            best_value,
        } => json!({ "iterations": iterations, "best_set": best_set, "best_value": best_value }),
        Error::UnknownNode(s)
        | Error::DuplicateNode(s)
        | Error::ClientNotSink(s)
        | Error::IsolatedClient(s)
        | Error::EmptyReachableSet(s) => json!({ "node": s }),
        Error::InfeasibleRates(detail) => json!({ "detail": detail }),
        Error::DuplicateEdgeId(s)
        | Error::SelfLoop(s)
        | Error::NegativeCapacity(s)
        | Error::NonpositiveCost(s)
        | Error::UnknownEdgeRate(s) => json!({ "edge": s }),
        _ => json!({}),
    };
    error_object(err.code(), err.to_string(), context)
}
