//! Submodular minimization and base-polyhedron primitives.
//!
//! Only submodular minimization is implemented; a supermodular `g` is handled
//! by minimizing `-g` (see [`Negated`]).

use nalgebra::{DMatrix, DVector};
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::subset::{Subset, MAX_GROUND};

/// Largest ground set accepted by [`sfm_brute_force`].
pub const BRUTE_FORCE_LIMIT: usize = 20;

const MNP_EPS: f64 = 1e-12;
const MNP_MAX_ITERATIONS: usize = 10_000;

/// A set function on `{0, .., n-1}` with exact rational values.
pub trait SetFunction: Sync {
    fn ground_size(&self) -> usize;
    fn value(&self, s: Subset) -> Rational;
}

impl<T: SetFunction + ?Sized> SetFunction for &T {
    fn ground_size(&self) -> usize {
        (**self).ground_size()
    }
    fn value(&self, s: Subset) -> Rational {
        (**self).value(s)
    }
}

/// Set function backed by a closure.
pub struct FnSetFunction<F> {
    n: usize,
    f: F,
}

pub fn from_fn<F: Fn(Subset) -> Rational + Sync>(n: usize, f: F) -> FnSetFunction<F> {
    FnSetFunction { n, f }
}

impl<F: Fn(Subset) -> Rational + Sync> SetFunction for FnSetFunction<F> {
    fn ground_size(&self) -> usize {
        self.n
    }
    fn value(&self, s: Subset) -> Rational {
        (self.f)(s)
    }
}

/// `S ↦ Σ_{i∈S} w_i`.
#[derive(Clone, Debug)]
pub struct Modular(pub Vec<Rational>);

impl SetFunction for Modular {
    fn ground_size(&self) -> usize {
        self.0.len()
    }
    fn value(&self, s: Subset) -> Rational {
        rational::sum(s.iter().map(|i| &self.0[i]))
    }
}

/// `S ↦ -f(S)`.
pub struct Negated<F>(pub F);

impl<F: SetFunction> SetFunction for Negated<F> {
    fn ground_size(&self) -> usize {
        self.0.ground_size()
    }
    fn value(&self, s: Subset) -> Rational {
        -self.0.value(s)
    }
}

/// `S ↦ f(S) - x(S)`.
pub struct MinusModular<'a, F> {
    pub f: F,
    pub x: &'a [Rational],
}

impl<F: SetFunction> SetFunction for MinusModular<'_, F> {
    fn ground_size(&self) -> usize {
        self.f.ground_size()
    }
    fn value(&self, s: Subset) -> Rational {
        self.f.value(s) - rational::sum(s.iter().map(|i| &self.x[i]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimizer {
    pub set: Subset,
    pub value: Rational,
}

/// Exact minimum over all `2^n` subsets, ties broken by cardinality then bitmask.
pub fn sfm_brute_force<F: SetFunction>(f: &F) -> Result<Minimizer> {
    let n = f.ground_size();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::GroundTooLarge {
            size: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut best = Minimizer {
        set: Subset::EMPTY,
        value: f.value(Subset::EMPTY),
    };
    for s in Subset::all(n).skip(1) {
        let v = f.value(s);
        if v < best.value || (v == best.value && s.tie_key() < best.set.tie_key()) {
            best = Minimizer { set: s, value: v };
        }
    }
    Ok(best)
}

/// Exact enumeration up to [`BRUTE_FORCE_LIMIT`], min-norm-point beyond.
pub fn sfm_minimize<F: SetFunction>(f: &F) -> Result<Minimizer> {
    if f.ground_size() <= BRUTE_FORCE_LIMIT {
        return sfm_brute_force(f);
    }
    check_ground(f.ground_size())?;
    let m = min_norm_point(f, MNP_EPS, MNP_MAX_ITERATIONS)?;
    Ok(Minimizer {
        set: m.set,
        value: m.value,
    })
}

/// Minimum over nonempty subsets.
///
/// Large ground sets run one min-norm-point per element `i` on
/// `T ↦ f(T + i) - f({i})` over the remaining elements.
pub fn minimize_nonempty<F: SetFunction>(f: &F) -> Result<Minimizer> {
    let n = f.ground_size();
    if n == 0 {
        return Err(Error::InvalidParameters(
            "empty ground set has no nonempty subset".into(),
        ));
    }
    if n <= BRUTE_FORCE_LIMIT {
        let mut best: Option<Minimizer> = None;
        for s in Subset::all(n).skip(1) {
            let v = f.value(s);
            if best
                .as_ref()
                .is_none_or(|b| v < b.value || (v == b.value && s.tie_key() < b.set.tie_key()))
            {
                best = Some(Minimizer { set: s, value: v });
            }
        }
        return Ok(best.expect("n > 0"));
    }
    check_ground(n)?;
    let mut best: Option<Minimizer> = None;
    for i in 0..n {
        let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let lift = |t: Subset| Subset::from_indices(t.iter().map(|k| rest[k])).with(i);
        let base = f.value(Subset::singleton(i));
        let h = from_fn(n - 1, |t| f.value(lift(t)) - &base);
        let m = min_norm_point(&h, MNP_EPS, MNP_MAX_ITERATIONS)?;
        let cand = Minimizer {
            set: lift(m.set),
            value: m.value + &base,
        };
        if best.as_ref().is_none_or(|b| {
            cand.value < b.value || (cand.value == b.value && cand.set.tie_key() < b.set.tie_key())
        }) {
            best = Some(cand);
        }
    }
    Ok(best.expect("n > 0"))
}

fn check_ground(n: usize) -> Result<()> {
    if n > MAX_GROUND {
        return Err(Error::GroundTooLarge {
            size: n,
            limit: MAX_GROUND,
        });
    }
    Ok(())
}

/// Greedy vertex of `B(f)` for a submodular `f`: element `ordering[i]` gets the
/// marginal gain of adding it after `ordering[..i]`.
pub fn greedy_base_vertex<F: SetFunction>(f: &F, ordering: &[usize]) -> Vec<Rational> {
    let n = f.ground_size();
    debug_assert_eq!(ordering.len(), n);
    let mut x = vec![Rational::zero(); n];
    let mut prefix = Subset::EMPTY;
    let mut previous = f.value(prefix);
    for &e in ordering {
        prefix = prefix.with(e);
        let current = f.value(prefix);
        x[e] = &current - &previous;
        previous = current;
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curvature {
    /// `B(f) = {x : x(S) <= f(S), x(V) = f(V)}`
    Submodular,
    /// `B(g) = {x : x(S) >= g(S), x(V) = g(V)}`
    Supermodular,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Membership {
    Member,
    /// `set` violates its inequality by `amount > 0` (or breaks the ground equality).
    Violation {
        set: Subset,
        amount: Rational,
    },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member)
    }
}

/// Membership of `x` in the base polyhedron of `f`, decided by exact SFM.
pub fn in_base_polyhedron<F: SetFunction>(
    x: &[Rational],
    f: &F,
    curvature: Curvature,
) -> Result<Membership> {
    let n = f.ground_size();
    let full = Subset::full(n);
    let total = rational::sum(x.iter());
    let f_full = f.value(full);
    if total != f_full {
        return Ok(Membership::Violation {
            set: full,
            amount: (&total - &f_full).abs(),
        });
    }
    let slack = match curvature {
        Curvature::Submodular => sfm_minimize(&MinusModular { f, x })?,
        Curvature::Supermodular => {
            let neg = Negated(f);
            sfm_minimize(&MinusModular {
                f: neg,
                x: &x.iter().map(|v| -v).collect::<Vec<_>>(),
            })?
        }
    };
    if slack.value < Rational::zero() {
        Ok(Membership::Violation {
            set: slack.set,
            amount: -slack.value,
        })
    } else {
        Ok(Membership::Member)
    }
}

#[derive(Clone, Debug)]
pub struct MinNormPoint {
    /// Approximate minimum-norm point of `B(f)`.
    pub point: Vec<f64>,
    pub set: Subset,
    pub value: Rational,
    pub iterations: usize,
}

/// Fujishige–Wolfe minimum-norm-point SFM for a submodular `f` with `f(∅) = 0`.
///
/// The iterate is floating point; the returned set is the best sublevel set of
/// the final point, and its value is evaluated exactly.
pub fn min_norm_point<F: SetFunction>(
    f: &F,
    eps: f64,
    max_iterations: usize,
) -> Result<MinNormPoint> {
    let n = f.ground_size();
    if n == 0 {
        return Ok(MinNormPoint {
            point: Vec::new(),
            set: Subset::EMPTY,
            value: f.value(Subset::EMPTY),
            iterations: 0,
        });
    }
    let greedy = |x: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        greedy_base_vertex(f, &order)
            .iter()
            .map(rational::to_f64)
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let combine = |pts: &[Vec<f64>], w: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (p, &c) in pts.iter().zip(w) {
            for (o, v) in out.iter_mut().zip(p) {
                *o += c * v;
            }
        }
        out
    };

    let first = greedy(&vec![0.0; n]);
    let scale = 1.0 + first.iter().map(|v| v * v).sum::<f64>();
    let mut corral = vec![first.clone()];
    let mut weights = vec![1.0];
    let mut x = first;
    let tiny = 1e-12;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        let q = greedy(&x);
        let gap = dot(&x, &x) - dot(&x, &q);
        if gap <= eps * scale {
            converged = true;
            break;
        }
        if corral
            .iter()
            .any(|p| p.iter().zip(&q).all(|(a, b)| (a - b).abs() <= tiny * scale))
        {
            converged = true;
            break;
        }
        corral.push(q);
        weights.push(0.0);
        loop {
            let alpha = affine_minimizer(&corral);
            if alpha.iter().all(|&a| a > tiny) {
                weights = alpha;
                x = combine(&corral, &weights);
                break;
            }
            let theta = weights
                .iter()
                .zip(&alpha)
                .filter(|&(_, &a)| a <= tiny)
                .map(|(&w, &a)| w / (w - a))
                .fold(1.0f64, f64::min);
            for (w, a) in weights.iter_mut().zip(&alpha) {
                *w = theta * a + (1.0 - theta) * *w;
            }
            let mut k = 0;
            while k < corral.len() {
                if weights[k] <= tiny {
                    corral.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            x = combine(&corral, &weights);
            if corral.len() == 1 {
                break;
            }
        }
    }
    let best = best_sublevel_set(f, &x);
    if !converged {
        return Err(Error::MaxIterationsExceeded {
            iterations,
            best_set: best.set.iter().collect(),
            best_value: best.value.to_string(),
        });
    }
    Ok(MinNormPoint {
        point: x,
        set: best.set,
        value: best.value,
        iterations,
    })
}

/// Minimizes `|Σ α_i p_i|²` subject to `Σ α_i = 1` via `(G + 11ᵀ) v = 1`.
fn affine_minimizer(points: &[Vec<f64>]) -> Vec<f64> {
    let k = points.len();
    let gram = DMatrix::from_fn(k, k, |i, j| {
        1.0 + points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| a * b)
            .sum::<f64>()
    });
    let ones = DVector::from_element(k, 1.0);
    let v = gram
        .clone()
        .lu()
        .solve(&ones)
        .or_else(|| gram.svd(true, true).solve(&ones, 1e-12).ok())
        .unwrap_or_else(|| DVector::from_element(k, 1.0));
    let total: f64 = v.iter().sum();
    v.iter().map(|a| a / total).collect()
}

/// Evaluates every prefix of the ascending order of `x` and keeps the best.
fn best_sublevel_set<F: SetFunction>(f: &F, x: &[f64]) -> Minimizer {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut best = Minimizer {
        set: Subset::EMPTY,
        value: f.value(Subset::EMPTY),
    };
    let mut prefix = Subset::EMPTY;
    for &i in &order {
        prefix = prefix.with(i);
        let v = f.value(prefix);
        if v < best.value || (v == best.value && prefix.tie_key() < best.set.tie_key()) {
            best = Minimizer {
                set: prefix,
                value: v,
            };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn modular(w: &[i64]) -> Modular {
        Modular(w.iter().map(|&v| int(v)).collect())
    }

    /// Sum of a random modular part, a truncated cardinality and a directed cut.
    fn random_submodular(rng: &mut ChaCha8Rng, n: usize) -> impl SetFunction {
        let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(-6..=6)).collect();
        let cap = rng.gen_range(1..=n as i64);
        let scale = rng.gen_range(0..=3);
        let arcs: Vec<(usize, usize, i64)> = (0..2 * n)
            .map(|_| {
                (
                    rng.gen_range(0..n),
                    rng.gen_range(0..n),
                    rng.gen_range(1..=3),
                )
            })
            .filter(|(a, b, _)| a != b)
            .collect();
        from_fn(n, move |s: Subset| {
            let m: i64 = s.iter().map(|i| weights[i]).sum();
            let conc = scale * (s.len() as i64).min(cap);
            let cut: i64 = arcs
                .iter()
                .filter(|&&(a, b, _)| s.contains(a) && !s.contains(b))
                .map(|&(_, _, c)| c)
                .sum();
            int(m + conc + cut)
        })
    }

    #[test]
    fn brute_force_examples() {
        let card = from_fn(4, |s: Subset| int(s.len() as i64));
        assert_eq!(
            sfm_brute_force(&card).unwrap(),
            Minimizer {
                set: Subset::EMPTY,
                value: int(0)
            }
        );
        let m = sfm_brute_force(&modular(&[-1, 2, -3])).unwrap();
        assert_eq!(m.set, Subset::from_indices([0, 2]));
        assert_eq!(m.value, int(-4));
        let big = from_fn(21, |_| int(0));
        assert!(matches!(
            sfm_brute_force(&big),
            Err(Error::GroundTooLarge { .. })
        ));
    }

    #[test]
    fn brute_force_tie_breaking() {
        // value 0 for ∅, {0}, {1}: smallest cardinality wins
        let f = modular(&[0, 0, 1]);
        assert_eq!(sfm_brute_force(&f).unwrap().set, Subset::EMPTY);
        let g = from_fn(3, |s: Subset| if s.is_empty() { int(1) } else { int(0) });
        assert_eq!(sfm_brute_force(&g).unwrap().set, Subset::singleton(0));
    }

    #[test]
    fn greedy_on_modular_returns_weights() {
        let f = modular(&[3, -1, 4]);
        for order in [[0, 1, 2], [2, 0, 1], [1, 2, 0]] {
            assert_eq!(greedy_base_vertex(&f, &order), f.0);
        }
    }

    #[test]
    fn greedy_vertices_are_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(1..7);
            let f = random_submodular(&mut rng, n);
            let base = f.value(Subset::EMPTY);
            let f0 = from_fn(n, move |s| f.value(s) - &base);
            let mut order: Vec<usize> = (0..n).collect();
            for _ in 0..5 {
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
                let x = greedy_base_vertex(&f0, &order);
                assert_eq!(rational::sum(x.iter()), f0.value(Subset::full(n)));
                assert!(in_base_polyhedron(&x, &f0, Curvature::Submodular)
                    .unwrap()
                    .is_member());
            }
        }
    }

    #[test]
    fn perturbed_vertex_violates_at_ground() {
        let f = from_fn(3, |s: Subset| int((s.len() as i64).min(2)));
        let mut x = greedy_base_vertex(&f, &[0, 1, 2]);
        x[0] += int(1);
        assert_eq!(
            in_base_polyhedron(&x, &f, Curvature::Submodular).unwrap(),
            Membership::Violation {
                set: Subset::full(3),
                amount: int(1)
            }
        );
    }

    #[test]
    fn interior_violation_found() {
        // x(V) = f(V) but x({0}) = 2 > f({0}) = 1
        let f = from_fn(2, |s: Subset| int((s.len() as i64).min(1)));
        let x = vec![int(2), int(-1)];
        assert_eq!(
            in_base_polyhedron(&x, &f, Curvature::Submodular).unwrap(),
            Membership::Violation {
                set: Subset::singleton(0),
                amount: int(1)
            }
        );
    }

    #[test]
    fn supermodular_membership() {
        // g(S) = max(0, |S|-1) is supermodular; (0,1) is a base, (2,-1) is not.
        let g = from_fn(2, |s: Subset| int((s.len() as i64 - 1).max(0)));
        assert!(
            in_base_polyhedron(&[int(0), int(1)], &g, Curvature::Supermodular)
                .unwrap()
                .is_member()
        );
        assert_eq!(
            in_base_polyhedron(&[int(2), int(-1)], &g, Curvature::Supermodular).unwrap(),
            Membership::Violation {
                set: Subset::singleton(1),
                amount: int(1)
            }
        );
    }

    #[test]
    fn min_norm_point_examples() {
        let r = min_norm_point(&modular(&[-1, 2, -3]), 1e-9, 1000).unwrap();
        assert_eq!(r.set, Subset::from_indices([0, 2]));
        assert_eq!(r.value, int(-4));
        let cut_like = from_fn(5, |s: Subset| int((s.len() as i64).min(1)));
        let r = min_norm_point(&cut_like, 1e-9, 1000).unwrap();
        assert_eq!(r.value, int(0));
        assert_eq!(r.set, Subset::EMPTY);
    }

    #[test]
    fn min_norm_point_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let f = random_submodular(&mut rng, 8);
            let exact = sfm_brute_force(&f).unwrap();
            let approx = min_norm_point(&f, 1e-9, 10_000).unwrap();
            let diff = rational::to_f64(&(&approx.value - &exact.value));
            assert!((0.0..=1e-9).contains(&diff), "diff {diff}");
        }
    }

    #[test]
    fn sfm_minimum_below_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_submodular(&mut rng, 10);
        let m = sfm_brute_force(&f).unwrap();
        for _ in 0..1000 {
            let s = Subset(rng.gen::<u64>() & Subset::full(10).0);
            assert!(m.value <= f.value(s));
        }
    }
}
