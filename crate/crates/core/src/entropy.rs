//! Subset-entropy oracles for the linear, tabular and pmf source models.

use std::collections::{BTreeMap, HashMap};
use std::sync::RwLock;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldMatrix, Modulus};
use crate::rational::{self, Rational};
use crate::subset::{Subset, MAX_GROUND};

/// Default cap on the number of cells of a dense pmf table.
pub const MAX_PMF_CELLS: usize = 1 << 20;

/// Pmf entropies are rounded to multiples of `2^-PMF_BITS` bits.
pub const PMF_BITS: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    /// One packet is `n log q` bits.
    Packets,
    Bits,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RationalValue(#[serde(with = "rational::serde_string")] pub Rational);

/// `source_model` section of the instance file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RawSourceModel {
    Linear {
        q: u64,
        #[serde(rename = "N")]
        packets: usize,
        #[serde(rename = "n", default = "default_blocklength")]
        blocklength: u32,
        matrices: BTreeMap<String, Vec<Vec<i64>>>,
    },
    Tabular {
        unit: Unit,
        entropies: BTreeMap<String, RationalValue>,
    },
    Pmf {
        alphabets: BTreeMap<String, usize>,
        table: Vec<RationalValue>,
    },
}

fn default_blocklength() -> u32 {
    1
}

/// Finite linear source: source `i` observes `A_i W` with `W` uniform on `F_q^N`.
#[derive(Clone, Debug)]
pub struct LinearModel {
    pub modulus: Modulus,
    pub packets: usize,
    pub blocklength: u32,
    /// One observation matrix per source (zero rows for relays).
    pub matrices: Vec<FieldMatrix>,
}

#[derive(Clone, Debug)]
pub enum SourceModel {
    Linear(LinearModel),
    Tabular {
        unit: Unit,
        values: HashMap<Subset, Rational>,
    },
    Pmf {
        alphabets: Vec<usize>,
        probabilities: Vec<f64>,
    },
}

impl SourceModel {
    pub fn unit(&self) -> Unit {
        match self {
            SourceModel::Linear(_) => Unit::Packets,
            SourceModel::Tabular { unit, .. } => *unit,
            SourceModel::Pmf { .. } => Unit::Bits,
        }
    }

    pub fn as_linear(&self) -> Option<&LinearModel> {
        match self {
            SourceModel::Linear(m) => Some(m),
            _ => None,
        }
    }
}

/// `H(X_S)` for every subset `S` of the sources, memoized by bitmask.
#[derive(Debug)]
pub struct EntropyOracle {
    names: Vec<String>,
    model: SourceModel,
    memo: RwLock<HashMap<Subset, Rational>>,
}

impl Clone for EntropyOracle {
    fn clone(&self) -> Self {
        EntropyOracle {
            names: self.names.clone(),
            model: self.model.clone(),
            memo: RwLock::new(self.memo.read().expect("memo lock").clone()),
        }
    }
}

impl EntropyOracle {
    fn with_model(names: Vec<String>, model: SourceModel) -> Result<EntropyOracle> {
        if names.len() > MAX_GROUND {
            return Err(Error::GroundTooLarge {
                size: names.len(),
                limit: MAX_GROUND,
            });
        }
        Ok(EntropyOracle {
            names,
            model,
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn linear(names: Vec<String>, model: LinearModel) -> Result<EntropyOracle> {
        if model.matrices.len() != names.len() {
            return Err(Error::InvalidSourceModel(format!(
                "{} observation matrices for {} sources",
                model.matrices.len(),
                names.len()
            )));
        }
        for (name, a) in names.iter().zip(&model.matrices) {
            if a.cols() != model.packets {
                return Err(Error::InvalidSourceModel(format!(
                    "matrix of `{name}` has {} columns, expected N = {}",
                    a.cols(),
                    model.packets
                )));
            }
            if a.modulus() != model.modulus {
                return Err(Error::ModulusMismatch(
                    a.modulus().get(),
                    model.modulus.get(),
                ));
            }
        }
        EntropyOracle::with_model(names, SourceModel::Linear(model))
    }

    /// Tabular oracle; every nonempty subset must have an entry.
    pub fn tabular(
        names: Vec<String>,
        unit: Unit,
        mut values: HashMap<Subset, Rational>,
    ) -> Result<EntropyOracle> {
        values.insert(Subset::EMPTY, Rational::zero());
        for s in Subset::all(names.len()) {
            if !values.contains_key(&s) {
                return Err(Error::UnknownSubset(
                    s.iter().map(|i| names[i].clone()).collect(),
                ));
            }
        }
        EntropyOracle::with_model(names, SourceModel::Tabular { unit, values })
    }

    /// Pmf oracle over a dense row-major joint table (first source slowest).
    pub fn pmf(
        names: Vec<String>,
        alphabets: Vec<usize>,
        table: &[Rational],
    ) -> Result<EntropyOracle> {
        if alphabets.len() != names.len() {
            return Err(Error::InvalidSourceModel(
                "one alphabet size per source required".into(),
            ));
        }
        if alphabets.contains(&0) {
            return Err(Error::InvalidSourceModel(
                "alphabet sizes must be positive".into(),
            ));
        }
        let cells = alphabets
            .iter()
            .try_fold(1usize, |acc, &a| {
                acc.checked_mul(a).filter(|&c| c <= MAX_PMF_CELLS)
            })
            .ok_or_else(|| {
                Error::InvalidSourceModel(format!("joint table exceeds {MAX_PMF_CELLS} cells"))
            })?;
        if table.len() != cells {
            return Err(Error::InvalidSourceModel(format!(
                "joint table has {} entries, expected {cells}",
                table.len()
            )));
        }
        if table.iter().any(|p| p < &Rational::zero()) {
            return Err(Error::InvalidSourceModel("negative probability".into()));
        }
        if rational::sum(table) != Rational::one() {
            return Err(Error::InvalidSourceModel(
                "probabilities do not sum to 1".into(),
            ));
        }
        let probabilities = table.iter().map(rational::to_f64).collect();
        EntropyOracle::with_model(
            names,
            SourceModel::Pmf {
                alphabets,
                probabilities,
            },
        )
    }

    /// Builds the oracle from the file section; `sources` fixes the ground order.
    pub fn from_raw(raw: &RawSourceModel, sources: &[String]) -> Result<EntropyOracle> {
        let slot = |name: &str| {
            sources
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::InvalidSourceModel(format!("`{name}` is not a source node")))
        };
        match raw {
            RawSourceModel::Linear {
                q,
                packets,
                blocklength,
                matrices,
            } => {
                let modulus = Modulus::new(*q)?;
                let mut mats: Vec<FieldMatrix> = sources
                    .iter()
                    .map(|_| FieldMatrix::zeros(0, *packets, modulus))
                    .collect();
                for (name, rows) in matrices {
                    let i = slot(name)?;
                    mats[i] = FieldMatrix::from_rows(rows, *packets, modulus).map_err(|e| {
                        Error::InvalidSourceModel(format!("matrix of `{name}`: {e}"))
                    })?;
                }
                EntropyOracle::linear(
                    sources.to_vec(),
                    LinearModel {
                        modulus,
                        packets: *packets,
                        blocklength: *blocklength,
                        matrices: mats,
                    },
                )
            }
            RawSourceModel::Tabular { unit, entropies } => {
                let mut values = HashMap::new();
                for (key, value) in entropies {
                    let mut s = Subset::EMPTY;
                    for name in key.split(',').map(str::trim).filter(|n| !n.is_empty()) {
                        s = s.with(slot(name)?);
                    }
                    values.insert(s, value.0.clone());
                }
                EntropyOracle::tabular(sources.to_vec(), *unit, values)
            }
            RawSourceModel::Pmf { alphabets, table } => {
                let mut sizes = vec![1; sources.len()];
                for (name, &size) in alphabets {
                    sizes[slot(name)?] = size;
                }
                let probs: Vec<Rational> = table.iter().map(|p| p.0.clone()).collect();
                EntropyOracle::pmf(sources.to_vec(), sizes, &probs)
            }
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ground_size(&self) -> usize {
        self.names.len()
    }

    pub fn model(&self) -> &SourceModel {
        &self.model
    }

    pub fn unit(&self) -> Unit {
        self.model.unit()
    }

    /// `H(X_S)`; packet units for the linear model, bits for pmf.
    pub fn entropy(&self, s: Subset) -> Rational {
        assert!(
            s.is_subset_of(Subset::full(self.ground_size())),
            "subset {s:?} outside the ground set"
        );
        if s.is_empty() {
            return Rational::zero();
        }
        if let Some(v) = self.memo.read().expect("memo lock").get(&s) {
            return v.clone();
        }
        let value = self.evaluate(s);
        self.memo
            .write()
            .expect("memo lock")
            .entry(s)
            .or_insert(value)
            .clone()
    }

    fn evaluate(&self, s: Subset) -> Rational {
        match &self.model {
            SourceModel::Linear(m) => {
                let rows: Vec<Vec<i64>> = s
                    .iter()
                    .flat_map(|i| m.matrices[i].to_rows())
                    .map(|r| r.into_iter().map(|v| v as i64).collect())
                    .collect();
                let stacked =
                    FieldMatrix::from_rows(&rows, m.packets, m.modulus).expect("uniform width");
                rational::int(stacked.rank() as i64)
            }
            SourceModel::Tabular { values, .. } => values[&s].clone(),
            SourceModel::Pmf {
                alphabets,
                probabilities,
            } => rational::round_to_dyadic(
                marginal_entropy_bits(alphabets, probabilities, s),
                PMF_BITS,
            ),
        }
    }

    /// `H(X_S | X_{G \ S}) = H(G) - H(G \ S)`; requires `S ⊆ G`.
    pub fn conditional_entropy(&self, s: Subset, ground: Subset) -> Rational {
        assert!(
            s.is_subset_of(ground),
            "conditional entropy needs S within G"
        );
        self.entropy(ground) - self.entropy(ground.minus(s))
    }

    /// Checks normalization, monotonicity and submodularity.
    ///
    /// Up to 8 sources every pair `(S, T)` is compared. Up to `exhaustive_limit`
    /// the equivalent local exchange condition
    /// `H(S+i) + H(S+j) >= H(S+i+j) + H(S)` is checked for all `S, i, j`.
    /// Beyond that, `samples` random pairs are drawn from `seed`.
    pub fn validate_polymatroid(
        &self,
        exhaustive_limit: usize,
        samples: usize,
        seed: u64,
    ) -> PolymatroidReport {
        let n = self.ground_size();
        let mut violations = Vec::new();
        let h = |s: Subset| self.entropy(s);
        let check_pair = |a: Subset, b: Subset, violations: &mut Vec<PolymatroidViolation>| {
            if h(a) + h(b) < h(a.union(b)) + h(a.intersection(b)) {
                violations.push(PolymatroidViolation::Submodularity { s: a, t: b });
            }
        };
        let mode;
        let mut checked = 0u64;
        if n <= 8 {
            mode = CheckMode::AllPairs;
            for a in Subset::all(n) {
                for b in Subset::all(n) {
                    if a.0 < b.0 {
                        check_pair(a, b, &mut violations);
                        checked += 1;
                    }
                }
            }
        } else if n <= exhaustive_limit {
            mode = CheckMode::LocalExchange;
            for s in Subset::all(n) {
                for i in 0..n {
                    for j in i + 1..n {
                        if !s.contains(i) && !s.contains(j) {
                            check_pair(s.with(i), s.with(j), &mut violations);
                            checked += 1;
                        }
                    }
                }
            }
        } else {
            mode = CheckMode::Sampled;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let full = Subset::full(n).0;
            for _ in 0..samples {
                let a = Subset(rng.gen::<u64>() & full);
                let b = Subset(rng.gen::<u64>() & full);
                check_pair(a, b, &mut violations);
                checked += 1;
            }
        }
        if n <= exhaustive_limit {
            for s in Subset::all(n) {
                for i in (0..n).filter(|&i| !s.contains(i)) {
                    if h(s.with(i)) < h(s) {
                        violations.push(PolymatroidViolation::Monotonicity {
                            subset: s,
                            element: i,
                        });
                    }
                }
            }
        }
        let empty = h(Subset::EMPTY);
        if !empty.is_zero() {
            violations.push(PolymatroidViolation::NonzeroEmpty);
        }
        PolymatroidReport {
            mode,
            pairs_checked: checked,
            violations,
        }
    }
}

fn marginal_entropy_bits(alphabets: &[usize], probabilities: &[f64], s: Subset) -> f64 {
    let n = alphabets.len();
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * alphabets[i + 1];
    }
    let mut marginal: HashMap<usize, f64> = HashMap::new();
    for (cell, &p) in probabilities.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut key = 0usize;
        for i in s.iter() {
            key = key * alphabets[i] + (cell / strides[i]) % alphabets[i];
        }
        *marginal.entry(key).or_insert(0.0) += p;
    }
    let mut keys: Vec<_> = marginal.into_iter().collect();
    keys.sort_by_key(|&(k, _)| k);
    keys.iter()
        .filter(|&&(_, p)| p > 0.0)
        .map(|&(_, p)| -p * p.log2())
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    AllPairs,
    LocalExchange,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolymatroidViolation {
    NonzeroEmpty,
    Monotonicity { subset: Subset, element: usize },
    Submodularity { s: Subset, t: Subset },
}

#[derive(Clone, Debug)]
pub struct PolymatroidReport {
    pub mode: CheckMode,
    pub pairs_checked: u64,
    pub violations: Vec<PolymatroidViolation>,
}

impl PolymatroidReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("m{i}")).collect()
    }

    fn selector(rows: &[usize], n: usize, q: Modulus) -> FieldMatrix {
        let rows: Vec<Vec<i64>> = rows
            .iter()
            .map(|&r| (0..n).map(|c| (c == r) as i64).collect())
            .collect();
        FieldMatrix::from_rows(&rows, n, q).unwrap()
    }

    pub(crate) fn f2_oracle() -> EntropyOracle {
        let q = Modulus::new(5).unwrap();
        EntropyOracle::linear(
            names(4),
            LinearModel {
                modulus: q,
                packets: 4,
                blocklength: 1,
                matrices: vec![
                    selector(&[0, 1], 4, q),
                    selector(&[1, 2], 4, q),
                    selector(&[2], 4, q),
                    selector(&[3], 4, q),
                ],
            },
        )
        .unwrap()
    }

    #[test]
    fn linear_entropies() {
        let o = f2_oracle();
        assert_eq!(o.entropy(Subset::singleton(0)), int(2));
        assert_eq!(o.entropy(Subset::full(4)), int(4));
        assert_eq!(o.entropy(Subset::from_indices([0, 1])), int(3));
        assert_eq!(o.entropy(Subset::EMPTY), int(0));
        assert_eq!(o.unit(), Unit::Packets);
    }

    #[test]
    fn conditional_examples() {
        let o = f2_oracle();
        let mt1 = Subset::full(4);
        assert_eq!(o.conditional_entropy(Subset::singleton(1), mt1), int(0));
        let mt2 = Subset::from_indices([0, 1, 3]);
        assert_eq!(o.conditional_entropy(Subset::singleton(3), mt2), int(1));
        assert_eq!(o.conditional_entropy(mt2, mt2), o.entropy(mt2));
        assert_eq!(o.conditional_entropy(Subset::EMPTY, mt2), int(0));
    }

    #[test]
    fn pmf_two_fair_bits() {
        let quarter = ratio(1, 4);
        let o = EntropyOracle::pmf(names(2), vec![2, 2], &vec![quarter; 4]).unwrap();
        assert_eq!(o.entropy(Subset::singleton(0)), int(1));
        assert_eq!(o.entropy(Subset::singleton(1)), int(1));
        assert_eq!(o.entropy(Subset::full(2)), int(2));
        assert_eq!(o.unit(), Unit::Bits);
    }

    #[test]
    fn pmf_correlated_bits() {
        // X2 = X1: joint entropy equals the marginal.
        let half = ratio(1, 2);
        let table = vec![half.clone(), int(0), int(0), half];
        let o = EntropyOracle::pmf(names(2), vec![2, 2], &table).unwrap();
        assert_eq!(o.entropy(Subset::full(2)), int(1));
        assert!(o.validate_polymatroid(12, 0, 0).pass());
    }

    #[test]
    fn pmf_rejects_bad_tables() {
        assert!(EntropyOracle::pmf(names(1), vec![2], &[ratio(1, 2), ratio(1, 3)]).is_err());
        assert!(EntropyOracle::pmf(names(1), vec![2], &[int(1)]).is_err());
        assert!(EntropyOracle::pmf(names(1), vec![2], &[int(2), int(-1)]).is_err());
    }

    #[test]
    fn tabular_violation_reported() {
        let mut v = HashMap::new();
        v.insert(Subset::singleton(0), int(1));
        v.insert(Subset::singleton(1), int(1));
        v.insert(Subset::full(2), int(3));
        let o = EntropyOracle::tabular(names(2), Unit::Packets, v).unwrap();
        let report = o.validate_polymatroid(12, 0, 0);
        assert_eq!(
            report.violations,
            vec![PolymatroidViolation::Submodularity {
                s: Subset::singleton(0),
                t: Subset::singleton(1)
            }]
        );
    }

    #[test]
    fn tabular_missing_entry() {
        let mut v = HashMap::new();
        v.insert(Subset::singleton(0), int(1));
        v.insert(Subset::full(2), int(1));
        assert_eq!(
            EntropyOracle::tabular(names(2), Unit::Bits, v).unwrap_err(),
            Error::UnknownSubset(vec!["m2".into()])
        );
    }

    #[test]
    fn tabular_copy_of_linear_matches() {
        let lin = f2_oracle();
        assert!(lin.validate_polymatroid(12, 0, 0).pass());
        let table: HashMap<Subset, Rational> =
            Subset::all(4).map(|s| (s, lin.entropy(s))).collect();
        let tab = EntropyOracle::tabular(names(4), Unit::Packets, table).unwrap();
        assert!(tab.validate_polymatroid(12, 0, 0).pass());
        for s in Subset::all(4) {
            assert_eq!(lin.entropy(s), tab.entropy(s));
        }
    }

    #[test]
    fn monotonicity_violation_reported() {
        let mut v = HashMap::new();
        v.insert(Subset::singleton(0), int(2));
        v.insert(Subset::singleton(1), int(1));
        v.insert(Subset::full(2), int(1));
        let o = EntropyOracle::tabular(names(2), Unit::Packets, v).unwrap();
        let r = o.validate_polymatroid(12, 0, 0);
        assert!(r.violations.contains(&PolymatroidViolation::Monotonicity {
            subset: Subset::singleton(0),
            element: 1
        }));
    }

    #[test]
    fn raw_linear_relays_get_zero_rows() {
        let raw: RawSourceModel =
            serde_json::from_str(r#"{"kind":"linear","q":5,"N":2,"matrices":{"a":[[1,0],[0,1]]}}"#)
                .unwrap();
        let o = EntropyOracle::from_raw(&raw, &["a".into(), "relay".into()]).unwrap();
        assert_eq!(o.entropy(Subset::singleton(1)), int(0));
        assert_eq!(o.entropy(Subset::full(2)), int(2));
    }

    #[test]
    fn raw_tabular_keys_are_order_free() {
        let raw: RawSourceModel = serde_json::from_str(
            r#"{"kind":"tabular","unit":"bits","entropies":{"a":"1","b":1,"b,a":"3/2"}}"#,
        )
        .unwrap();
        let o = EntropyOracle::from_raw(&raw, &["a".into(), "b".into()]).unwrap();
        assert_eq!(o.entropy(Subset::full(2)), ratio(3, 2));
        assert_eq!(o.unit(), Unit::Bits);
    }
}
