//! Finite lattice, configuration encoding and Kronecker-product vectors.
//!
//! Configurations on `[L-, L+]` are encoded as `L`-bit words with site `L-`
//! in the most significant bit. This is the ordering produced by left-to-right
//! Kronecker products of two-dimensional site vectors `(empty, occupied)`, so
//! [`kron_vector`] and the generators in [`crate::asep`] share one index space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense vector over `2^L` configurations or `C(L,N)` shock states.
pub type DenseVector<T> = Vec<T>;

/// The integer interval `[l_minus, l_plus]` with at least two sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    l_minus: i64,
    l_plus: i64,
}

impl Lattice {
    pub fn new(l_minus: i64, l_plus: i64) -> Result<Self> {
        if l_plus - l_minus + 1 < 2 {
            return Err(Error::LatticeTooSmall { l_minus, l_plus });
        }
        Ok(Self { l_minus, l_plus })
    }

    /// Lattice `[1, len]`.
    pub fn with_len(len: usize) -> Result<Self> {
        Self::new(1, len as i64)
    }

    pub fn l_minus(&self) -> i64 {
        self.l_minus
    }

    pub fn l_plus(&self) -> i64 {
        self.l_plus
    }

    /// Number of sites `L`.
    pub fn len(&self) -> usize {
        (self.l_plus - self.l_minus + 1) as usize
    }

    /// Always `false`; a lattice has at least two sites.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of configurations `2^L`.
    pub fn num_configs(&self) -> usize {
        1usize << self.len()
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> + Clone {
        self.l_minus..=self.l_plus
    }

    pub fn contains(&self, site: i64) -> bool {
        (self.l_minus..=self.l_plus).contains(&site)
    }

    /// 0-based offset `site - L-`.
    pub fn offset(&self, site: i64) -> Result<usize> {
        if !self.contains(site) {
            return Err(Error::SiteOutOfRange {
                site,
                l_minus: self.l_minus,
                l_plus: self.l_plus,
            });
        }
        Ok((site - self.l_minus) as usize)
    }

    /// Bit mask of the site with the given 0-based offset.
    #[inline]
    pub(crate) fn mask(&self, offset: usize) -> u64 {
        1u64 << (self.len() - 1 - offset)
    }
}

/// Occupation numbers of all sites, packed MSB-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Configuration {
    bits: u64,
    len: usize,
}

impl Configuration {
    pub fn empty(len: usize) -> Self {
        Self { bits: 0, len }
    }

    /// Builds from occupation numbers listed from `L-` to `L+`.
    pub fn from_occupations(occ: &[u8]) -> Result<Self> {
        if occ.len() > 63 {
            return Err(Error::invalid("configurations are limited to 63 sites"));
        }
        let mut bits = 0u64;
        for &n in occ {
            if n > 1 {
                return Err(Error::invalid(format!("occupation number {n} not in {{0,1}}")));
            }
            bits = (bits << 1) | n as u64;
        }
        Ok(Self { bits, len: occ.len() })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Occupation number at 0-based offset `j` (site `L- + j`).
    #[inline]
    pub fn occupation(&self, j: usize) -> u8 {
        ((self.bits >> (self.len - 1 - j)) & 1) as u8
    }

    pub fn occupations(&self) -> Vec<u8> {
        (0..self.len).map(|j| self.occupation(j)).collect()
    }

    pub fn particle_count(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Bit string with site `L-` first, e.g. `"100"`.
    pub fn to_bitstring(&self) -> String {
        (0..self.len)
            .map(|j| if self.occupation(j) == 1 { '1' } else { '0' })
            .collect()
    }
}

/// Index of a configuration in the Kronecker basis.
pub fn config_index(c: &Configuration) -> usize {
    c.bits as usize
}

/// Inverse of [`config_index`] for a lattice of `len` sites.
pub fn index_config(i: usize, len: usize) -> Result<Configuration> {
    if len >= usize::BITS as usize || len > 63 {
        return Err(Error::invalid(format!("{len} sites cannot be indexed")));
    }
    let bound = 1usize << len;
    if i >= bound {
        return Err(Error::IndexOutOfRange { index: i, bound });
    }
    Ok(Configuration {
        bits: i as u64,
        len,
    })
}

/// Two-dimensional site vector `(c0, c1)`; for a density `rho` this is `(1-rho, rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TwoVector<T> {
    pub c0: T,
    pub c1: T,
}

impl<T: Scalar> TwoVector<T> {
    pub fn new(c0: T, c1: T) -> Self {
        Self { c0, c1 }
    }

    /// Bernoulli vector `(1-rho, rho)`.
    pub fn density(rho: T) -> Self {
        Self {
            c0: T::one() - rho,
            c1: rho,
        }
    }

    /// Normalized vector with fugacity `z`.
    pub fn from_fugacity(z: T) -> Self {
        let norm = T::one() + z;
        Self {
            c0: T::one() / norm,
            c1: z / norm,
        }
    }

    /// `c1 / c0`, or `None` when `c0 = 0`.
    pub fn fugacity(&self) -> Option<T> {
        (self.c0 != T::zero()).then(|| self.c1 / self.c0)
    }

    pub fn sum(&self) -> T {
        self.c0 + self.c1
    }

    #[inline]
    pub fn get(&self, bit: u8) -> T {
        if bit == 0 {
            self.c0
        } else {
            self.c1
        }
    }
}

/// Kronecker product of site vectors, first factor on site `L-`.
pub fn kron_vector<T: Scalar>(factors: &[TwoVector<T>]) -> Result<DenseVector<T>> {
    if factors.is_empty() {
        return Err(Error::EmptyFactors);
    }
    if factors.len() > 40 {
        return Err(Error::invalid("too many factors for a dense Kronecker vector"));
    }
    let mut out = vec![T::one()];
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * 2);
        for &v in &out {
            next.push(v * f.c0);
            next.push(v * f.c1);
        }
        out = next;
    }
    Ok(out)
}
