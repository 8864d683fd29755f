//! Memory guards for the exponentially large state spaces.

use crate::error::{Error, Result};

/// Environment variable overriding [`Limits::max_sites`] and
/// [`Limits::max_dense_sites`].
pub const MAX_SITES_ENV: &str = "ASEP_LAB_MAX_SITES";
/// Environment variable overriding [`Limits::max_dense_dim`].
pub const MAX_DENSE_DIM_ENV: &str = "ASEP_LAB_MAX_DENSE_DIM";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Largest lattice for which sparse `2^L` generators are assembled.
    pub max_sites: usize,
    /// Largest lattice for which dense `C(L,N) x 2^L` duality matrices are stored.
    pub max_dense_sites: usize,
    /// Largest matrix handed to the dense eigensolver or linear solver.
    pub max_dense_dim: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_sites: 16,
            max_dense_sites: 14,
            max_dense_dim: 4096,
        }
    }
}

impl Limits {
    /// Defaults, overridden by the environment where set.
    pub fn from_env() -> Self {
        let mut limits = Self::default();
        if let Some(n) = read_env(MAX_SITES_ENV) {
            limits.max_sites = n;
            limits.max_dense_sites = n;
        }
        if let Some(n) = read_env(MAX_DENSE_DIM_ENV) {
            limits.max_dense_dim = n;
        }
        limits
    }

    pub fn check_sites(&self, sites: usize) -> Result<()> {
        // 2^L indices must also fit the configuration word
        let cap = self.max_sites.min(62);
        if sites > cap {
            return Err(Error::CapExceeded {
                what: "lattice sites for sparse generator",
                requested: sites,
                cap,
            });
        }
        Ok(())
    }

    pub fn check_dense_sites(&self, sites: usize) -> Result<()> {
        let cap = self.max_dense_sites.min(self.max_sites).min(62);
        if sites > cap {
            return Err(Error::CapExceeded {
                what: "lattice sites for dense duality matrices",
                requested: sites,
                cap,
            });
        }
        Ok(())
    }

    pub fn check_dense_dim(&self, dim: usize) -> Result<()> {
        if dim > self.max_dense_dim {
            return Err(Error::CapExceeded {
                what: "dense matrix dimension",
                requested: dim,
                cap: self.max_dense_dim,
            });
        }
        Ok(())
    }
}

fn read_env(key: &str) -> Option<usize> {
    std::env::var(key).ok()?.trim().parse().ok()
}
