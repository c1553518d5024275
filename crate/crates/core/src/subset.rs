use std::fmt;

/// A subset of a ground set `{0, .., n-1}` with `n <= 63`, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Subset(pub u64);

pub const MAX_GROUND: usize = 63;

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn full(n: usize) -> Subset {
        debug_assert!(n <= MAX_GROUND);
        Subset((1u64 << n) - 1)
    }

    pub fn singleton(i: usize) -> Subset {
        Subset(1u64 << i)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Subset {
        Subset(indices.into_iter().fold(0, |m, i| m | (1u64 << i)))
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn with(self, i: usize) -> Subset {
        Subset(self.0 | 1u64 << i)
    }

    pub fn without(self, i: usize) -> Subset {
        Subset(self.0 & !(1u64 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Subset) -> Subset {
        Subset(self.0 | other.0)
    }

    pub fn intersection(self, other: Subset) -> Subset {
        Subset(self.0 & other.0)
    }

    pub fn minus(self, other: Subset) -> Subset {
        Subset(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: Subset) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    /// All subsets of `{0, .., n-1}` in increasing bitmask order.
    pub fn all(n: usize) -> impl Iterator<Item = Subset> {
        (0..1u64 << n).map(Subset)
    }

    /// Reproducible order used for tie-breaking: cardinality first, then bitmask.
    pub fn tie_key(self) -> (usize, u64) {
        (self.len(), self.0)
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
