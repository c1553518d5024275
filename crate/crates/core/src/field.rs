//! Prime-field arithmetic and the dense matrix kernel (rank, solve, inverse).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn is_prime(q: u64) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2u64;
    while d.saturating_mul(d) <= q {
        if q.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// A prime modulus, checked once at construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Modulus(u64);

impl Modulus {
    pub fn new(q: u64) -> Result<Modulus> {
        if is_prime(q) && q <= u32::MAX as u64 {
            Ok(Modulus(q))
        } else {
            Err(Error::NotPrime(q))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn reduce(self, v: i64) -> u64 {
        v.rem_euclid(self.0 as i64) as u64
    }

    fn add(self, a: u64, b: u64) -> u64 {
        (a + b) % self.0
    }

    fn sub(self, a: u64, b: u64) -> u64 {
        (a + self.0 - b) % self.0
    }

    fn mul(self, a: u64, b: u64) -> u64 {
        a * b % self.0
    }

    fn pow(self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.0;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat; `a` must be nonzero.
    fn inv(self, a: u64) -> u64 {
        debug_assert!(a != 0);
        self.pow(a, self.0 - 2)
    }
}

impl TryFrom<u64> for Modulus {
    type Error = Error;
    fn try_from(q: u64) -> Result<Self> {
        Modulus::new(q)
    }
}

impl From<Modulus> for u64 {
    fn from(m: Modulus) -> u64 {
        m.0
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    modulus: Modulus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl FieldElement {
    pub fn new(value: i64, modulus: Modulus) -> FieldElement {
        FieldElement {
            value: modulus.reduce(value),
            modulus,
        }
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn modulus(self) -> Modulus {
        self.modulus
    }

    pub fn apply(self, op: FieldOp, rhs: FieldElement) -> Result<FieldElement> {
        if self.modulus != rhs.modulus {
            return Err(Error::ModulusMismatch(
                self.modulus.get(),
                rhs.modulus.get(),
            ));
        }
        let m = self.modulus;
        let value = match op {
            FieldOp::Add => m.add(self.value, rhs.value),
            FieldOp::Sub => m.sub(self.value, rhs.value),
            FieldOp::Mul => m.mul(self.value, rhs.value),
            FieldOp::Div => {
                if rhs.value == 0 {
                    return Err(Error::DivisionByZero);
                }
                m.mul(self.value, m.inv(rhs.value))
            }
        };
        Ok(FieldElement { value, modulus: m })
    }

    pub fn inverse(self) -> Result<FieldElement> {
        FieldElement::new(1, self.modulus).apply(FieldOp::Div, self)
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus.get())
    }
}

/// Dense row-major matrix over a prime field.
#[derive(Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    modulus: Modulus,
    data: Vec<u64>,
}

impl FieldMatrix {
    pub fn zeros(rows: usize, cols: usize, modulus: Modulus) -> FieldMatrix {
        FieldMatrix {
            rows,
            cols,
            modulus,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize, modulus: Modulus) -> FieldMatrix {
        let mut m = FieldMatrix::zeros(n, n, modulus);
        for i in 0..n {
            m.data[i * n + i] = 1 % modulus.get();
        }
        m
    }

    /// Builds a matrix from integer rows, reducing every entry mod q.
    pub fn from_rows(rows: &[Vec<i64>], cols: usize, modulus: Modulus) -> Result<FieldMatrix> {
        let mut m = FieldMatrix::zeros(rows.len(), cols, modulus);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                m.data[i * cols + j] = modulus.reduce(v);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    pub fn element(&self, i: usize, j: usize) -> FieldElement {
        FieldElement {
            value: self.get(i, j),
            modulus: self.modulus,
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: u64) {
        self.data[i * self.cols + j] = value % self.modulus.get();
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<u64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn transpose(&self) -> FieldMatrix {
        let mut t = FieldMatrix::zeros(self.cols, self.rows, self.modulus);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn mul(&self, rhs: &FieldMatrix) -> Result<FieldMatrix> {
        self.same_field(rhs)?;
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let m = self.modulus;
        let mut out = FieldMatrix::zeros(self.rows, rhs.cols, m);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    let idx = i * rhs.cols + j;
                    out.data[idx] = m.add(out.data[idx], m.mul(a, rhs.get(k, j)));
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[u64]) -> Result<Vec<u64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let m = self.modulus;
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(0, |acc, (&a, &b)| m.add(acc, m.mul(a, b % m.get())))
            })
            .collect())
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &FieldMatrix) -> Result<FieldMatrix> {
        self.same_field(below)?;
        if self.cols != below.cols {
            return Err(Error::DimensionMismatch(format!(
                "stacking {} columns on {} columns",
                self.cols, below.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        Ok(FieldMatrix {
            rows: self.rows + below.rows,
            cols: self.cols,
            modulus: self.modulus,
            data,
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> FieldMatrix {
        let mut out = FieldMatrix::zeros(rows.len(), self.cols, self.modulus);
        for (k, &i) in rows.iter().enumerate() {
            out.data[k * self.cols..(k + 1) * self.cols].copy_from_slice(self.row(i));
        }
        out
    }

    pub fn select_cols(&self, cols: &[usize]) -> FieldMatrix {
        let mut out = FieldMatrix::zeros(self.rows, cols.len(), self.modulus);
        for i in 0..self.rows {
            for (k, &j) in cols.iter().enumerate() {
                out.data[i * cols.len() + k] = self.get(i, j);
            }
        }
        out
    }

    fn same_field(&self, other: &FieldMatrix) -> Result<()> {
        if self.modulus != other.modulus {
            Err(Error::ModulusMismatch(
                self.modulus.get(),
                other.modulus.get(),
            ))
        } else {
            Ok(())
        }
    }

    /// Reduced row echelon form and its pivot columns. The first nonzero entry
    /// in column order is used as pivot.
    pub fn rref(&self) -> (FieldMatrix, Vec<usize>) {
        let m = self.modulus;
        let mut a = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..a.cols {
            if r == a.rows {
                break;
            }
            let Some(p) = (r..a.rows).find(|&i| a.get(i, c) != 0) else {
                continue;
            };
            a.swap_rows(p, r);
            let inv = m.inv(a.get(r, c));
            for j in c..a.cols {
                let idx = r * a.cols + j;
                a.data[idx] = m.mul(a.data[idx], inv);
            }
            for i in 0..a.rows {
                let f = a.get(i, c);
                if i == r || f == 0 {
                    continue;
                }
                for j in c..a.cols {
                    let v = m.sub(a.get(i, j), m.mul(f, a.get(r, j)));
                    a.data[i * a.cols + j] = v;
                }
            }
            pivots.push(c);
            r += 1;
        }
        (a, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Row indices of a maximal independent set of rows, chosen greedily top-down.
    pub fn independent_rows(&self) -> Vec<usize> {
        self.transpose().rref().1
    }

    /// Returns `X` with `self * X = rhs`. Requires full column rank so the
    /// solution is unique.
    pub fn solve_right(&self, rhs: &FieldMatrix) -> Result<FieldMatrix> {
        self.same_field(rhs)?;
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "system has {} rows but right-hand side has {}",
                self.rows, rhs.rows
            )));
        }
        let n = self.cols;
        let mut aug = FieldMatrix::zeros(self.rows, n + rhs.cols, self.modulus);
        for i in 0..self.rows {
            aug.data[i * aug.cols..i * aug.cols + n].copy_from_slice(self.row(i));
            aug.data[i * aug.cols + n..(i + 1) * aug.cols].copy_from_slice(rhs.row(i));
        }
        let (red, pivots) = aug.rref();
        if pivots.iter().any(|&c| c >= n) {
            return Err(Error::Inconsistent);
        }
        if pivots.len() < n {
            return Err(Error::RankDeficient {
                rank: pivots.len(),
                needed: n,
            });
        }
        let mut x = FieldMatrix::zeros(n, rhs.cols, self.modulus);
        for (r, &c) in pivots.iter().enumerate() {
            for j in 0..rhs.cols {
                x.data[c * rhs.cols + j] = red.get(r, n + j);
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<FieldMatrix> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot invert a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        self.solve_right(&FieldMatrix::identity(self.rows, self.modulus))
            .map_err(|e| match e {
                Error::Inconsistent => Error::RankDeficient {
                    rank: self.rank(),
                    needed: self.rows,
                },
                other => other,
            })
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }
}

impl fmt::Debug for FieldMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "FieldMatrix {}x{} over F_{}",
            self.rows,
            self.cols,
            self.modulus.get()
        )?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q(p: u64) -> Modulus {
        Modulus::new(p).unwrap()
    }

    fn fe(v: i64, p: u64) -> FieldElement {
        FieldElement::new(v, q(p))
    }

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, m: Modulus) -> FieldMatrix {
        let rows: Vec<Vec<i64>> = (0..r)
            .map(|_| (0..c).map(|_| rng.gen_range(0..m.get() as i64)).collect())
            .collect();
        FieldMatrix::from_rows(&rows, c, m).unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(fe(3, 5).apply(FieldOp::Mul, fe(4, 5)).unwrap().value(), 2);
        assert_eq!(fe(1, 5).apply(FieldOp::Div, fe(2, 5)).unwrap().value(), 3);
        assert_eq!(fe(1, 2).apply(FieldOp::Add, fe(1, 2)).unwrap().value(), 0);
        assert_eq!(fe(1, 5).apply(FieldOp::Sub, fe(3, 5)).unwrap().value(), 3);
        assert_eq!(fe(-1, 7).value(), 6);
    }

    #[test]
    fn arithmetic_errors() {
        assert_eq!(
            fe(1, 5).apply(FieldOp::Div, fe(0, 5)),
            Err(Error::DivisionByZero)
        );
        assert_eq!(
            fe(1, 5).apply(FieldOp::Add, fe(1, 7)),
            Err(Error::ModulusMismatch(5, 7))
        );
        assert!(Modulus::new(4).is_err());
        assert!(Modulus::new(1).is_err());
        assert!(Modulus::new(2).is_ok());
    }

    #[test]
    fn rank_examples() {
        let m = FieldMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1]], 2, q(2)).unwrap();
        assert_eq!(m.rank(), 2);
        assert_eq!(FieldMatrix::zeros(3, 4, q(5)).rank(), 0);
        assert_eq!(FieldMatrix::identity(6, q(5)).rank(), 6);
    }

    #[test]
    fn rank_does_not_mutate() {
        let m = FieldMatrix::from_rows(&[vec![2, 4], vec![1, 2]], 2, q(5)).unwrap();
        let before = m.clone();
        assert_eq!(m.rank(), 1);
        assert_eq!(m, before);
    }

    #[test]
    fn solve_examples() {
        let id = FieldMatrix::identity(3, q(5));
        let y = FieldMatrix::from_rows(&[vec![1, 2], vec![3, 4], vec![0, 1]], 2, q(5)).unwrap();
        assert_eq!(id.solve_right(&y).unwrap(), y);

        let two = FieldMatrix::from_rows(&[vec![2]], 1, q(5)).unwrap();
        let one = FieldMatrix::from_rows(&[vec![1]], 1, q(5)).unwrap();
        assert_eq!(two.solve_right(&one).unwrap().get(0, 0), 3);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = random_matrix(&mut rng, 4, 4, q(5));
        while m.rank() < 4 {
            m = random_matrix(&mut rng, 4, 4, q(5));
        }
        let inv = m.inverse().unwrap();
        assert_eq!(m.mul(&inv).unwrap(), FieldMatrix::identity(4, q(5)));
        assert_eq!(inv.mul(&m).unwrap(), FieldMatrix::identity(4, q(5)));
    }

    #[test]
    fn solve_errors() {
        let m = FieldMatrix::from_rows(&[vec![1, 1], vec![1, 1]], 2, q(5)).unwrap();
        let y = FieldMatrix::from_rows(&[vec![1], vec![2]], 1, q(5)).unwrap();
        assert_eq!(m.solve_right(&y), Err(Error::Inconsistent));
        let y = FieldMatrix::from_rows(&[vec![1], vec![1]], 1, q(5)).unwrap();
        assert_eq!(
            m.solve_right(&y),
            Err(Error::RankDeficient { rank: 1, needed: 2 })
        );
        assert!(matches!(m.inverse(), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn tall_full_column_rank_solve() {
        let m = FieldMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1]], 2, q(7)).unwrap();
        let x = FieldMatrix::from_rows(&[vec![3], vec![5]], 1, q(7)).unwrap();
        let y = m.mul(&x).unwrap();
        assert_eq!(m.solve_right(&y).unwrap(), x);
    }

    proptest! {
        #[test]
        fn rank_invariances(seed in any::<u64>(), r in 1usize..7, c in 1usize..7, p in prop::sample::select(vec![2u64, 3, 5, 7])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, r, c, q(p));
            let rank = m.rank();
            prop_assert_eq!(rank, m.transpose().rank());
            prop_assert!(rank <= r.min(c));
            let mut perm: Vec<usize> = (0..r).collect();
            perm.reverse();
            prop_assert_eq!(m.select_rows(&perm).rank(), rank);
            let mut scaled = m.clone();
            for j in 0..c {
                let v = scaled.get(0, j) * (p - 1);
                scaled.set(0, j, v);
            }
            prop_assert_eq!(scaled.rank(), rank);
        }

        #[test]
        fn rank_subadditive(seed in any::<u64>(), r1 in 1usize..5, r2 in 1usize..5, c in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, r1, c, q(3));
            let b = random_matrix(&mut rng, r2, c, q(3));
            prop_assert!(a.vstack(&b).unwrap().rank() <= a.rank() + b.rank());
        }

        #[test]
        fn solve_multiplies_back(seed in any::<u64>(), n in 1usize..6, k in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, n + 1, n, q(11));
            let x = random_matrix(&mut rng, n, k, q(11));
            let y = m.mul(&x).unwrap();
            match m.solve_right(&y) {
                Ok(sol) => prop_assert_eq!(m.mul(&sol).unwrap(), y),
                Err(Error::RankDeficient { .. }) => prop_assert!(m.rank() < n),
                Err(e) => prop_assert!(false, "unexpected {:?}", e),
            }
        }
    }
}
