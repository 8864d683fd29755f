//! Bernoulli shock measures and the duality matrices `S` and `R = diag(pi) S`.

use rayon::prelude::*;

use crate::asep::{density_from_fugacity, kappa_pair, Rates};
use crate::combinatorics::DualStateIndex;
use crate::error::{Error, Result};
use crate::lattice::{kron_vector, DenseVector, Lattice, TwoVector};
use crate::limits::Limits;
use crate::scalar::Scalar;
use crate::shock::{densities_from_stability, reversible_weights, shock_rates, ShockPositions, ShockProfile, ShockRates, WeightNorm};

/// `rho*_i` from the shock fugacities `z*_i = (alpha/gamma) q^{2(i-1)}`.
pub fn shock_densities_from_boundary<T: Scalar>(rates: &Rates<T>, n: usize) -> Result<Vec<T>> {
    rates.validate()?;
    let base = rates.alpha / rates.gamma;
    let q2 = rates.q2();
    Ok((0..n)
        .map(|i| density_from_fugacity(base * q2.powi(i as i32)))
        .collect())
}

impl<T: Scalar> ShockProfile<T> {
    /// The `N`-shock family selected by the boundary rates: `rho_0` from the
    /// left boundary eigenvector, stable bulk plateaus and boundary-fixed
    /// shock densities.
    pub fn from_rates(rates: &Rates<T>, n: usize) -> Result<Self> {
        let (kp, _) = kappa_pair(rates.alpha, rates.gamma, rates)?;
        let rho0 = density_from_fugacity(kp.recip());
        let bulk = densities_from_stability(rho0, n, rates.q())?;
        Self::new(bulk, shock_densities_from_boundary(rates, n)?)
    }

    /// Site vectors of the shock measure at `xs`: `rho*_i` on `x_i` and
    /// `rho_i` strictly between `x_i` and `x_{i+1}`.
    pub fn site_factors(&self, xs: &ShockPositions, lat: &Lattice) -> Result<Vec<TwoVector<T>>> {
        if xs.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: xs.n(),
            });
        }
        let offsets = xs.offsets(lat);
        let mut out = Vec::with_capacity(lat.len());
        let mut plateau = 0;
        for j in 0..lat.len() {
            if plateau < offsets.len() && offsets[plateau] == j {
                out.push(TwoVector::density(self.shock()[plateau]));
                plateau += 1;
            } else {
                out.push(TwoVector::density(self.bulk()[plateau]));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShockMeasure<T> {
    pub positions: ShockPositions,
    pub vector: DenseVector<T>,
}

pub fn shock_measure_vector<T: Scalar>(profile: &ShockProfile<T>, xs: &ShockPositions, lat: &Lattice) -> Result<ShockMeasure<T>> {
    let factors = profile.site_factors(xs, lat)?;
    Ok(ShockMeasure {
        positions: xs.clone(),
        vector: kron_vector(&factors)?,
    })
}

/// Dense duality matrices over `C(L,N)` shock states times `2^L` configurations.
///
/// `pi` is the reversible measure scaled so that its largest entry is one;
/// the duality relation is invariant under this scaling.
#[derive(Debug, Clone)]
pub struct DualityMatrices<T> {
    pub index: DualStateIndex,
    pub lattice: Lattice,
    pub configs: usize,
    /// Row-major rows `mu^x`.
    pub s: Vec<T>,
    pub pi: Vec<T>,
}

impl<T: Scalar> DualityMatrices<T> {
    pub fn states(&self) -> usize {
        self.index.len()
    }

    pub fn s_row(&self, x: usize) -> &[T] {
        &self.s[x * self.configs..(x + 1) * self.configs]
    }

    /// `R = diag(pi) S`, row-major.
    pub fn r(&self) -> Vec<T> {
        let mut r = self.s.clone();
        r.par_chunks_mut(self.configs)
            .zip(self.pi.par_iter())
            .for_each(|(row, &p)| row.iter_mut().for_each(|v| *v *= p));
        r
    }
}

pub fn build_duality_matrices<T: Scalar>(
    profile: &ShockProfile<T>,
    rates: &Rates<T>,
    lat: &Lattice,
    limits: &Limits,
) -> Result<DualityMatrices<T>> {
    let sr = shock_rates(profile, rates)?;
    build_duality_matrices_with(profile, &sr, lat, limits)
}

/// As [`build_duality_matrices`] with explicitly supplied shock rates.
pub fn build_duality_matrices_with<T: Scalar>(
    profile: &ShockProfile<T>,
    sr: &ShockRates<T>,
    lat: &Lattice,
    limits: &Limits,
) -> Result<DualityMatrices<T>> {
    limits.check_dense_sites(lat.len())?;
    if sr.n() != profile.n() {
        return Err(Error::DimensionMismatch {
            expected: profile.n(),
            got: sr.n(),
        });
    }
    let index = DualStateIndex::new(lat.len(), profile.n())?;
    let configs = lat.num_configs();
    let rows: Vec<Vec<T>> = (0..index.len())
        .into_par_iter()
        .map(|x| {
            let xs = ShockPositions::from_offsets(&index.unrank(x)?, lat)?;
            Ok(shock_measure_vector(profile, &xs, lat)?.vector)
        })
        .collect::<Result<_>>()?;
    let pi = reversible_weights(sr, lat, WeightNorm::Max)?;
    Ok(DualityMatrices {
        index,
        lattice: *lat,
        configs,
        s: rows.concat(),
        pi,
    })
}

/// Occupation marginal `P(eta_k = 1)` at every site.
pub fn site_densities<T: Scalar>(mu: &[T], lat: &Lattice) -> Result<Vec<T>> {
    if mu.len() != lat.num_configs() {
        return Err(Error::DimensionMismatch {
            expected: lat.num_configs(),
            got: mu.len(),
        });
    }
    let mut out = vec![T::zero(); lat.len()];
    for (eta, &p) in mu.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            if eta as u64 & lat.mask(j) != 0 {
                *o += p;
            }
        }
    }
    Ok(out)
}

/// `P(eta_j = 1, eta_k = 1)` for offsets `j`, `k`.
pub fn pair_density<T: Scalar>(mu: &[T], lat: &Lattice, j: usize, k: usize) -> T {
    let m = lat.mask(j) | lat.mask(k);
    mu.iter()
        .enumerate()
        .filter(|(eta, _)| *eta as u64 & m == m)
        .map(|(_, &p)| p)
        .sum()
}
