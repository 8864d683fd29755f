//! Colexicographic ranking of `N`-subsets of `{0, .., L-1}`.

use crate::error::{Error, Result};

/// Binomial coefficient, 0 when `k > n`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc * (n - k + i) as u128 / i as u128;
    }
    acc as usize
}

/// Bijection between strictly increasing offset vectors and `0..C(L,N)`.
///
/// The colex rank of `c_1 < .. < c_N` is `sum_i C(c_i, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DualStateIndex {
    sites: usize,
    particles: usize,
}

impl DualStateIndex {
    pub fn new(sites: usize, particles: usize) -> Result<Self> {
        if particles == 0 || particles > sites {
            return Err(Error::invalid(format!(
                "shock count {particles} must satisfy 1 <= N <= L = {sites}"
            )));
        }
        Ok(Self { sites, particles })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    /// `C(L, N)`.
    pub fn len(&self) -> usize {
        binomial(self.sites, self.particles)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rank(&self, offsets: &[usize]) -> Result<usize> {
        if offsets.len() != self.particles {
            return Err(Error::DimensionMismatch {
                expected: self.particles,
                got: offsets.len(),
            });
        }
        let mut rank = 0;
        for (i, &c) in offsets.iter().enumerate() {
            if c >= self.sites || (i > 0 && c <= offsets[i - 1]) {
                return Err(Error::invalid(format!(
                    "offsets {offsets:?} not strictly increasing within 0..{}",
                    self.sites
                )));
            }
            rank += binomial(c, i + 1);
        }
        Ok(rank)
    }

    pub fn unrank(&self, rank: usize) -> Result<Vec<usize>> {
        let bound = self.len();
        if rank >= bound {
            return Err(Error::IndexOutOfRange { index: rank, bound });
        }
        let mut out = vec![0; self.particles];
        let mut rest = rank;
        let mut c = self.sites;
        for i in (1..=self.particles).rev() {
            // largest c with C(c, i) <= rest
            c -= 1;
            while binomial(c, i) > rest {
                c -= 1;
            }
            out[i - 1] = c;
            rest -= binomial(c, i);
        }
        Ok(out)
    }

    /// All states in rank order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len()).map(move |r| self.unrank(r).expect("rank in range"))
    }
}
