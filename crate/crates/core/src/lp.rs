//! Exact rational simplex (two-phase, Bland's rule).
//!
//! [`CostReoptimizer`] keeps a feasible basis of a fixed polytope and
//! re-optimizes it for a stream of floating-point cost vectors; vertices stay
//! exact.

use num_traits::{One, Signed, Zero};

use crate::rational::{self, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

/// `min c·x` subject to linear rows and per-variable bounds.
/// Variables default to `[0, +inf)`; a `None` lower bound means free.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<Rational>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<Option<Rational>>,
    pub upper: Vec<Option<Rational>>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> LinearProgram {
        LinearProgram {
            objective: vec![Rational::zero(); num_vars],
            constraints: Vec::new(),
            lower: vec![Some(Rational::zero()); num_vars],
            upper: vec![None; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(
        &mut self,
        coeffs: Vec<(usize, Rational)>,
        relation: Relation,
        rhs: Rational,
    ) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_bounds(&mut self, var: usize, lower: Option<Rational>, upper: Option<Rational>) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    /// Checks every row and bound exactly.
    pub fn is_feasible_point(&self, x: &[Rational]) -> bool {
        let bounds_ok = x.iter().enumerate().all(|(j, v)| {
            self.lower[j].as_ref().is_none_or(|l| v >= l)
                && self.upper[j].as_ref().is_none_or(|u| v <= u)
        });
        bounds_ok
            && self.constraints.iter().all(|c| {
                let lhs = c
                    .coeffs
                    .iter()
                    .fold(Rational::zero(), |acc, (j, a)| acc + a * &x[*j]);
                match c.relation {
                    Relation::Le => lhs <= c.rhs,
                    Relation::Ge => lhs >= c.rhs,
                    Relation::Eq => lhs == c.rhs,
                }
            })
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        self.objective
            .iter()
            .zip(x)
            .fold(Rational::zero(), |acc, (c, v)| acc + c * v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal objective value (only for `Optimal`).
    pub value: Option<Rational>,
    /// Optimal vertex (empty unless `Optimal`).
    pub x: Vec<Rational>,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> LpSolution {
        LpSolution {
            status,
            value: None,
            x: Vec::new(),
        }
    }
}

/// Where an original variable lives among the nonnegative standard columns.
#[derive(Clone, Debug)]
struct VarColumns {
    pos: usize,
    neg: Option<usize>,
    offset: Rational,
}

struct StandardForm {
    columns: usize,
    rows: Vec<Vec<(usize, Rational)>>,
    rhs: Vec<Rational>,
    /// Slack column with coefficient +1 in this row, if any.
    basic_slack: Vec<Option<usize>>,
    cost: Vec<Rational>,
    vars: Vec<VarColumns>,
}

fn standardize(lp: &LinearProgram) -> Option<StandardForm> {
    let n = lp.num_vars();
    let mut vars = Vec::with_capacity(n);
    let mut columns = 0;
    for j in 0..n {
        if let (Some(l), Some(u)) = (&lp.lower[j], &lp.upper[j]) {
            if l > u {
                return None;
            }
        }
        let (offset, neg) = match &lp.lower[j] {
            Some(l) => (l.clone(), None),
            None => (Rational::zero(), Some(columns + 1)),
        };
        vars.push(VarColumns {
            pos: columns,
            neg,
            offset,
        });
        columns += if neg.is_some() { 2 } else { 1 };
    }

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut relations = Vec::new();
    let expand = |coeffs: &[(usize, Rational)], b: &Rational| {
        let mut row = Vec::new();
        let mut b = b.clone();
        for (j, a) in coeffs {
            if a.is_zero() {
                continue;
            }
            let v = &vars[*j];
            b -= a * &v.offset;
            row.push((v.pos, a.clone()));
            if let Some(neg) = v.neg {
                row.push((neg, -a.clone()));
            }
        }
        (row, b)
    };
    for c in &lp.constraints {
        let (row, b) = expand(&c.coeffs, &c.rhs);
        rows.push(row);
        rhs.push(b);
        relations.push(c.relation);
    }
    for j in 0..n {
        if let Some(u) = &lp.upper[j] {
            let (row, b) = expand(&[(j, Rational::one())], u);
            rows.push(row);
            rhs.push(b);
            relations.push(Relation::Le);
        }
    }

    let mut basic_slack = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let slack_sign = match relations[i] {
            Relation::Le => Some(Rational::one()),
            Relation::Ge => Some(-Rational::one()),
            Relation::Eq => None,
        };
        let mut slack_col = None;
        if let Some(sign) = slack_sign {
            rows[i].push((columns, sign));
            slack_col = Some(columns);
            columns += 1;
        }
        if rhs[i].is_negative() {
            rhs[i] = -rhs[i].clone();
            for (_, a) in rows[i].iter_mut() {
                *a = -a.clone();
            }
        }
        let usable = slack_col.filter(|&s| rows[i].iter().any(|(c, a)| *c == s && a.is_one()));
        basic_slack.push(usable);
    }

    let mut cost = vec![Rational::zero(); columns];
    for (j, c) in lp.objective.iter().enumerate() {
        let v = &vars[j];
        cost[v.pos] = c.clone();
        if let Some(neg) = v.neg {
            cost[neg] = -c.clone();
        }
    }
    Some(StandardForm {
        columns,
        rows,
        rhs,
        basic_slack,
        cost,
        vars,
    })
}

/// Dense simplex tableau; column `width` of each row holds the right-hand side.
#[derive(Clone, Debug)]
struct Tableau {
    width: usize,
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    /// Reduced costs, with `-objective` in the last slot.
    objective: Vec<Rational>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let inv = self.rows[r][c].recip();
        for v in self.rows[r].iter_mut() {
            if !v.is_zero() {
                *v *= &inv;
            }
        }
        let support: Vec<usize> = (0..=self.width)
            .filter(|&j| !self.rows[r][j].is_zero())
            .collect();
        let pivot_row = self.rows[r].clone();
        let eliminate = |row: &mut Vec<Rational>| {
            let factor = row[c].clone();
            if factor.is_zero() {
                return;
            }
            for &j in &support {
                let delta = &factor * &pivot_row[j];
                row[j] -= delta;
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.objective);
        self.basis[r] = c;
    }

    /// Bland ratio test: smallest ratio, ties to the smallest basic index.
    fn leaving_row(&self, c: usize) -> Option<usize> {
        let mut best: Option<(usize, Rational)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            if row[c].is_positive() {
                let ratio = &row[self.width] / &row[c];
                let better = match &best {
                    None => true,
                    Some((b, r)) => ratio < *r || (ratio == *r && self.basis[i] < self.basis[*b]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    /// Runs Bland's rule on the current objective row over `allowed` columns.
    /// Returns `false` when unbounded.
    fn optimize(&mut self, allowed: usize) -> bool {
        loop {
            let Some(c) = (0..allowed).find(|&j| self.objective[j].is_negative()) else {
                return true;
            };
            let Some(r) = self.leaving_row(c) else {
                return false;
            };
            self.pivot(r, c);
        }
    }

    fn set_costs(&mut self, cost: &[Rational]) {
        let mut obj: Vec<Rational> = cost.to_vec();
        obj.resize(self.width + 1, Rational::zero());
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = &cost[b];
            if cb.is_zero() {
                continue;
            }
            for (j, v) in self.rows[i].iter().enumerate() {
                if !v.is_zero() {
                    obj[j] -= cb * v;
                }
            }
        }
        self.objective = obj;
    }

    fn column_values(&self, columns: usize) -> Vec<Rational> {
        let mut y = vec![Rational::zero(); columns];
        for (i, &b) in self.basis.iter().enumerate() {
            y[b] = self.rows[i][self.width].clone();
        }
        y
    }
}

/// Phase one: returns a feasible tableau over the structural and slack
/// columns (artificials removed), or `None` if infeasible.
fn feasible_tableau(sf: &StandardForm) -> Option<Tableau> {
    let m = sf.rows.len();
    let artificial_rows: Vec<usize> = (0..m).filter(|&i| sf.basic_slack[i].is_none()).collect();
    let width = sf.columns + artificial_rows.len();
    let mut rows = vec![vec![Rational::zero(); width + 1]; m];
    let mut basis = vec![0; m];
    for (row, (entries, rhs)) in rows.iter_mut().zip(sf.rows.iter().zip(&sf.rhs)) {
        for (j, a) in entries {
            row[*j] += a;
        }
        row[width] = rhs.clone();
    }
    for (k, &i) in artificial_rows.iter().enumerate() {
        rows[i][sf.columns + k] = Rational::one();
        basis[i] = sf.columns + k;
    }
    for (b, slack) in basis.iter_mut().zip(&sf.basic_slack) {
        if let Some(s) = slack {
            *b = *s;
        }
    }
    let mut tab = Tableau {
        width,
        rows,
        basis,
        objective: Vec::new(),
    };
    if !artificial_rows.is_empty() {
        let mut phase1 = vec![Rational::zero(); width];
        for c in phase1.iter_mut().skip(sf.columns) {
            *c = Rational::one();
        }
        tab.set_costs(&phase1);
        tab.optimize(width);
        if !tab.objective[width].is_zero() {
            return None;
        }
        // Drive zero-valued artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= sf.columns {
                match (0..sf.columns).find(|&j| !tab.rows[i][j].is_zero()) {
                    Some(j) => {
                        tab.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }
    // Drop artificial columns.
    let columns = sf.columns;
    for row in tab.rows.iter_mut() {
        let rhs = row[width].clone();
        row.truncate(columns);
        row.push(rhs);
    }
    tab.width = columns;
    Some(tab)
}

fn recover(sf: &StandardForm, y: &[Rational]) -> Vec<Rational> {
    sf.vars
        .iter()
        .map(|v| {
            let mut x = &v.offset + &y[v.pos];
            if let Some(neg) = v.neg {
                x -= &y[neg];
            }
            x
        })
        .collect()
}

/// Solves the program exactly. Deterministic for a given input ordering.
pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    let Some(sf) = standardize(lp) else {
        return LpSolution::without_point(LpStatus::Infeasible);
    };
    let Some(mut tab) = feasible_tableau(&sf) else {
        return LpSolution::without_point(LpStatus::Infeasible);
    };
    tab.set_costs(&sf.cost);
    if !tab.optimize(sf.columns) {
        return LpSolution::without_point(LpStatus::Unbounded);
    }
    let x = recover(&sf, &tab.column_values(sf.columns));
    LpSolution {
        status: LpStatus::Optimal,
        value: Some(lp.objective_value(&x)),
        x,
    }
}

struct CachedBasis {
    basis: Vec<usize>,
    /// Row-major float copy of the constraint part of the tableau.
    dense: Vec<f64>,
    x: Vec<Rational>,
    x_f64: Vec<f64>,
}

/// Re-optimizes a fixed feasible polytope for varying float costs.
///
/// Pivots and vertices are exact; only the pricing uses the float costs, with
/// a relative tolerance of `1e-11`.
pub struct CostReoptimizer {
    sf: StandardForm,
    tab: Tableau,
    cache: Vec<CachedBasis>,
    capacity: usize,
    pub pivots: usize,
}

impl CostReoptimizer {
    /// Returns `None` when the polytope is empty.
    pub fn new(lp: &LinearProgram) -> Option<CostReoptimizer> {
        let sf = standardize(lp)?;
        let tab = feasible_tableau(&sf)?;
        Some(CostReoptimizer {
            sf,
            tab,
            cache: Vec::new(),
            capacity: 64,
            pivots: 0,
        })
    }

    fn column_costs(&self, costs: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.sf.columns];
        for (j, v) in self.sf.vars.iter().enumerate() {
            c[v.pos] = costs[j];
            if let Some(neg) = v.neg {
                c[neg] = -costs[j];
            }
        }
        c
    }

    fn is_optimal(dense: &[f64], basis: &[usize], c: &[f64], tol: f64) -> bool {
        let width = c.len();
        let mut reduced = c.to_vec();
        for (i, &b) in basis.iter().enumerate() {
            let cb = c[b];
            if cb == 0.0 {
                continue;
            }
            let row = &dense[i * width..(i + 1) * width];
            for (r, &a) in reduced.iter_mut().zip(row) {
                *r -= cb * a;
            }
        }
        reduced.iter().all(|&d| d >= -tol)
    }

    fn snapshot(&self) -> CachedBasis {
        let width = self.tab.width;
        let mut dense = Vec::with_capacity(self.tab.rows.len() * width);
        for row in &self.tab.rows {
            dense.extend(row[..width].iter().map(rational::to_f64));
        }
        let x = recover(&self.sf, &self.tab.column_values(width));
        let x_f64 = x.iter().map(rational::to_f64).collect();
        CachedBasis {
            basis: self.tab.basis.clone(),
            dense,
            x,
            x_f64,
        }
    }

    /// Returns an optimal vertex for `costs` (indexed like the original variables)
    /// and its float objective value, or `None` if the costs make it unbounded.
    pub fn solve(&mut self, costs: &[f64]) -> Option<(&[Rational], f64)> {
        let c = self.column_costs(costs);
        let tol = 1e-11 * (1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let hit = self
            .cache
            .iter()
            .position(|cb| Self::is_optimal(&cb.dense, &cb.basis, &c, tol));
        let idx = match hit {
            Some(k) => k,
            None => {
                self.reoptimize(&c, tol)?;
                let snap = self.snapshot();
                if self.cache.len() == self.capacity {
                    self.cache.pop();
                }
                self.cache.push(snap);
                self.cache.len() - 1
            }
        };
        if idx > 0 {
            let entry = self.cache.remove(idx);
            self.cache.insert(0, entry);
        }
        let cb = &self.cache[0];
        let value = cb.x_f64.iter().zip(costs).map(|(x, c)| x * c).sum();
        Some((&cb.x, value))
    }

    /// Bland pivots on the exact tableau priced by float reduced costs.
    fn reoptimize(&mut self, c: &[f64], tol: f64) -> Option<()> {
        let width = self.tab.width;
        loop {
            let mut reduced = c.to_vec();
            for (i, &b) in self.tab.basis.iter().enumerate() {
                let cb = c[b];
                if cb == 0.0 {
                    continue;
                }
                for (j, a) in self.tab.rows[i][..width].iter().enumerate() {
                    if !a.is_zero() {
                        reduced[j] -= cb * rational::to_f64(a);
                    }
                }
            }
            let Some(col) = (0..width).find(|&j| reduced[j] < -tol) else {
                return Some(());
            };
            let row = self.tab.leaving_row(col)?;
            self.tab.pivot(row, col);
            self.pivots += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};
    use proptest::prelude::*;

    #[test]
    fn bounded_single_variable() {
        let mut lp = LinearProgram::new(1);
        lp.objective[0] = int(1);
        lp.add_constraint(vec![(0, int(1))], Relation::Ge, int(3));
        lp.add_constraint(vec![(0, int(1))], Relation::Le, int(10));
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.value, Some(int(3)));
        assert_eq!(s.x, vec![int(3)]);
    }

    #[test]
    fn equality_vertex_is_deterministic() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![int(1), int(1)];
        lp.add_constraint(vec![(0, int(1)), (1, int(1))], Relation::Eq, int(1));
        let s = solve_lp(&lp);
        assert_eq!(s.value, Some(int(1)));
        assert_eq!(s.x, vec![int(1), int(0)]);
        assert_eq!(solve_lp(&lp).x, s.x);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_constraint(vec![(0, int(1))], Relation::Ge, int(1));
        lp.add_constraint(vec![(0, int(1))], Relation::Le, int(0));
        assert_eq!(solve_lp(&lp).status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(1);
        lp.objective[0] = int(-1);
        assert_eq!(solve_lp(&lp).status, LpStatus::Unbounded);

        let mut lp = LinearProgram::new(1);
        lp.set_bounds(0, Some(int(2)), Some(int(1)));
        assert_eq!(solve_lp(&lp).status, LpStatus::Infeasible);
    }

    #[test]
    fn free_and_shifted_variables() {
        // min x - y, x in [-3, 5] free-below, y in [1/2, 2]
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![int(1), int(-1)];
        lp.set_bounds(0, None, Some(int(5)));
        lp.set_bounds(1, Some(ratio(1, 2)), Some(int(2)));
        lp.add_constraint(vec![(0, int(1))], Relation::Ge, int(-3));
        let s = solve_lp(&lp);
        assert_eq!(s.x, vec![int(-3), int(2)]);
        assert_eq!(s.value, Some(int(-5)));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![int(2), int(1)];
        lp.add_constraint(vec![(0, int(1)), (1, int(1))], Relation::Eq, int(2));
        lp.add_constraint(vec![(0, int(2)), (1, int(2))], Relation::Eq, int(4));
        let s = solve_lp(&lp);
        assert_eq!(s.value, Some(int(2)));
        assert!(lp.is_feasible_point(&s.x));
    }

    /// Dual of `min c x, A x >= b, x >= 0` is `max b y, A^T y <= c, y >= 0`.
    fn dual_of(c: &[i64], a: &[Vec<i64>], b: &[i64]) -> (LinearProgram, LinearProgram) {
        let n = c.len();
        let m = b.len();
        let mut primal = LinearProgram::new(n);
        primal.objective = c.iter().map(|&v| int(v)).collect();
        for (row, &bi) in a.iter().zip(b) {
            primal.add_constraint(
                row.iter().enumerate().map(|(j, &v)| (j, int(v))).collect(),
                Relation::Ge,
                int(bi),
            );
        }
        let mut dual = LinearProgram::new(m);
        dual.objective = b.iter().map(|&v| int(-v)).collect();
        for j in 0..n {
            dual.add_constraint(
                (0..m).map(|i| (i, int(a[i][j]))).collect(),
                Relation::Le,
                int(c[j]),
            );
        }
        (primal, dual)
    }

    proptest! {
        #[test]
        fn strong_duality(
            n in 1usize..5, m in 1usize..5,
            cs in prop::collection::vec(0i64..6, 5),
            entries in prop::collection::vec(-3i64..4, 25),
            bs in prop::collection::vec(-4i64..6, 5),
        ) {
            let c = &cs[..n];
            let a: Vec<Vec<i64>> = (0..m).map(|i| entries[i * 5..i * 5 + n].to_vec()).collect();
            let b = &bs[..m];
            let (primal, dual) = dual_of(c, &a, b);
            let p = solve_lp(&primal);
            let d = solve_lp(&dual);
            match p.status {
                LpStatus::Optimal => {
                    prop_assert_eq!(d.status, LpStatus::Optimal);
                    prop_assert_eq!(p.value.clone().unwrap(), -d.value.unwrap());
                    prop_assert!(primal.is_feasible_point(&p.x));
                    // at most n linearly independent active constraints: count
                    // tight rows plus zero variables is at least n at a vertex
                    let tight = primal.constraints.iter().filter(|c| {
                        let lhs = c.coeffs.iter().fold(Rational::zero(), |acc, (j, v)| acc + v * &p.x[*j]);
                        lhs == c.rhs
                    }).count() + p.x.iter().filter(|v| v.is_zero()).count();
                    prop_assert!(tight >= n);
                }
                LpStatus::Infeasible => prop_assert_ne!(d.status, LpStatus::Optimal),
                LpStatus::Unbounded => prop_assert_eq!(d.status, LpStatus::Infeasible),
            }
        }

        #[test]
        fn reoptimizer_agrees_with_exact(
            entries in prop::collection::vec(-2i64..3, 12),
            costs in prop::collection::vec(prop::collection::vec(0.0f64..3.0, 3), 1..8),
        ) {
            let mut lp = LinearProgram::new(3);
            for j in 0..3 {
                lp.set_bounds(j, Some(int(0)), Some(int(4)));
            }
            for i in 0..4 {
                lp.add_constraint(
                    (0..3).map(|j| (j, int(entries[i * 3 + j]))).collect(),
                    Relation::Le,
                    int(3),
                );
            }
            let mut reopt = CostReoptimizer::new(&lp).unwrap();
            for c in &costs {
                let (_, value) = reopt.solve(c).unwrap();
                let mut exact = lp.clone();
                exact.objective = c.iter().map(|&v| rational::from_f64(v)).collect();
                let best = rational::to_f64(&solve_lp(&exact).value.unwrap());
                prop_assert!((value - best).abs() <= 1e-9 * (1.0 + best.abs()));
            }
        }
    }
}
