//! The dual shock exclusion process: shock profiles, hopping rates, the
//! generator `Q`, its reversible measure and the single-shock propagator.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::asep::{fugacity, Rates};
use crate::combinatorics::DualStateIndex;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::limits::Limits;
use crate::scalar::Scalar;
use crate::sparse::{Convention, GeneratorBuilder, SparseGenerator};

/// Bulk densities `rho_0..rho_N` and shock densities `rho*_1..rho*_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockProfile<T> {
    bulk: Vec<T>,
    shock: Vec<T>,
}

impl<T: Scalar> ShockProfile<T> {
    /// Any profile with densities in range; stability is checked separately
    /// so that unstable profiles can serve as negative controls.
    pub fn new(bulk: Vec<T>, shock: Vec<T>) -> Result<Self> {
        if shock.is_empty() {
            return Err(Error::invalid("a shock profile needs N >= 1 shocks"));
        }
        if bulk.len() != shock.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: shock.len() + 1,
                got: bulk.len(),
            });
        }
        for &rho in &bulk {
            if !(rho > T::zero() && rho < T::one()) {
                return Err(Error::invalid(format!("bulk density {rho} must lie in (0, 1)")));
            }
        }
        for &rho in &shock {
            if !(rho >= T::zero() && rho <= T::one()) {
                return Err(Error::invalid(format!("shock density {rho} must lie in [0, 1]")));
            }
        }
        Ok(Self { bulk, shock })
    }

    pub fn n(&self) -> usize {
        self.shock.len()
    }

    /// `rho_0..rho_N`.
    pub fn bulk(&self) -> &[T] {
        &self.bulk
    }

    /// `rho*_1..rho*_N` (index 0 holds `rho*_1`).
    pub fn shock(&self) -> &[T] {
        &self.shock
    }

    pub fn bulk_fugacities(&self) -> Vec<T> {
        self.bulk.iter().map(|&r| r / (T::one() - r)).collect()
    }

    /// Largest relative deviation of `z_i / z_{i-1}` from `q^2`.
    pub fn stability_residual(&self, q2: T) -> T {
        let z = self.bulk_fugacities();
        z.windows(2)
            .fold(T::zero(), |m, p| m.max(((p[1] / p[0]) - q2).abs() / q2))
    }

    pub fn is_stable(&self, q2: T, tol: T) -> bool {
        self.stability_residual(q2) <= tol
    }
}

/// `rho_i = z_i / (1 + z_i)` with `z_i = q^{2i} z_0`, for `i = 0..=N`.
pub fn densities_from_stability<T: Scalar>(rho0: T, n: usize, q: T) -> Result<Vec<T>> {
    if !(q > T::zero()) || q == T::one() || !q.is_finite() {
        return Err(Error::invalid(format!("q = {q} must be positive and != 1")));
    }
    if !(rho0 > T::zero() && rho0 < T::one()) {
        return Err(Error::invalid(format!("rho_0 = {rho0} must lie in (0, 1)")));
    }
    let z0 = fugacity(rho0)?;
    let q2 = q * q;
    let out: Vec<T> = (0..=n)
        .map(|i| {
            let z = z0 * q2.powi(i as i32);
            z / (T::one() + z)
        })
        .collect();
    if out.iter().any(|&r| !(r > T::zero() && r < T::one())) {
        return Err(Error::invalid(format!(
            "stability chain from rho_0 = {rho0} leaves (0, 1) at working precision"
        )));
    }
    Ok(out)
}

/// Hopping rates of one shock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockRate<T> {
    pub d_l: T,
    pub d_r: T,
    /// `sqrt(d_r / d_l)`.
    pub d: T,
    /// `d_r - d_l`.
    pub v: T,
    /// `(d_r + d_l) / 2`.
    pub diffusion: T,
}

impl<T: Scalar> ShockRate<T> {
    pub fn new(d_l: T, d_r: T) -> Result<Self> {
        if !(d_l > T::zero()) || !(d_r > T::zero()) || !d_l.is_finite() || !d_r.is_finite() {
            return Err(Error::invalid(format!("shock rates ({d_l}, {d_r}) must be positive")));
        }
        Ok(Self {
            d_l,
            d_r,
            d: (d_r / d_l).sqrt(),
            v: d_r - d_l,
            diffusion: (d_r + d_l) / T::lit(2.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockRates<T> {
    pub shocks: Vec<ShockRate<T>>,
}

impl<T: Scalar> ShockRates<T> {
    pub fn from_pairs(pairs: &[(T, T)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("at least one shock is required"));
        }
        let shocks = pairs
            .iter()
            .map(|&(l, r)| ShockRate::new(l, r))
            .collect::<Result<_>>()?;
        Ok(Self { shocks })
    }

    pub fn n(&self) -> usize {
        self.shocks.len()
    }

    /// Shock `i` with 1-based label.
    pub fn get(&self, i: usize) -> &ShockRate<T> {
        &self.shocks[i - 1]
    }

    fn single(&self) -> Result<&ShockRate<T>> {
        if self.n() != 1 {
            return Err(Error::invalid(format!(
                "the closed-form random walk needs N = 1, got N = {}",
                self.n()
            )));
        }
        Ok(&self.shocks[0])
    }
}

/// Rates from the currents across each shock, `d^l_i = j_{i-1}/(rho_i - rho_{i-1})`,
/// `d^r_i = j_i/(rho_i - rho_{i-1})`, cross-checked against the closed forms
/// `l(1-rho_{i-1}) + r rho_{i-1}` and `r(1-rho_i) + l rho_i`.
pub fn shock_rates<T: Scalar>(profile: &ShockProfile<T>, rates: &Rates<T>) -> Result<ShockRates<T>> {
    rates.validate()?;
    let (r, l, one) = (rates.r, rates.ell, T::one());
    let j = |rho: T| (r - l) * rho * (one - rho);
    let tol = T::check_tol();
    let mut shocks = Vec::with_capacity(profile.n());
    for i in 1..=profile.n() {
        let (lo, hi) = (profile.bulk[i - 1], profile.bulk[i]);
        let jump = hi - lo;
        if jump == T::zero() {
            return Err(Error::invalid(format!("shock {i} has no density jump")));
        }
        let d_l = j(lo) / jump;
        let d_r = j(hi) / jump;
        let d_l_alt = l * (one - lo) + r * lo;
        let d_r_alt = r * (one - hi) + l * hi;
        let scale = r.max(l);
        if (d_l - d_l_alt).abs() > tol * scale || (d_r - d_r_alt).abs() > tol * scale {
            return Err(Error::Postcondition(format!(
                "shock {i}: rate forms disagree (d_l {d_l} vs {d_l_alt}, d_r {d_r} vs {d_r_alt}); profile not stable?"
            )));
        }
        if (d_l * d_r - r * l).abs() > tol * r * l {
            return Err(Error::Postcondition(format!("shock {i}: d_l d_r != r l")));
        }
        shocks.push(ShockRate::new(d_l, d_r)?);
    }
    Ok(ShockRates { shocks })
}

/// Strictly increasing absolute shock positions within the lattice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShockPositions {
    x: Vec<i64>,
}

impl ShockPositions {
    pub fn new(x: Vec<i64>, lat: &Lattice) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("shock positions must not be empty"));
        }
        for (k, &site) in x.iter().enumerate() {
            lat.offset(site)?;
            if k > 0 && site <= x[k - 1] {
                return Err(Error::invalid(format!("shock positions {x:?} are not strictly increasing")));
            }
        }
        Ok(Self { x })
    }

    pub fn from_offsets(offsets: &[usize], lat: &Lattice) -> Result<Self> {
        Self::new(offsets.iter().map(|&c| lat.l_minus() + c as i64).collect(), lat)
    }

    pub fn sites(&self) -> &[i64] {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn offsets(&self, lat: &Lattice) -> Vec<usize> {
        self.x.iter().map(|&s| (s - lat.l_minus()) as usize).collect()
    }

    pub fn rank(&self, lat: &Lattice) -> Result<usize> {
        DualStateIndex::new(lat.len(), self.n())?.rank(&self.offsets(lat))
    }
}

#[inline]
fn delta(a: i64, b: i64) -> i64 {
    (a == b) as i64
}

/// Shock exclusion generator built from the shock rates of `profile`.
pub fn build_q<T: Scalar>(
    profile: &ShockProfile<T>,
    rates: &Rates<T>,
    lat: &Lattice,
    limits: &Limits,
) -> Result<SparseGenerator<T>> {
    let sr = shock_rates(profile, rates)?;
    build_q_from_rates(&sr, lat, limits)
}

/// Intensity matrix on `C(L,N)` states in colex order. Hops follow the
/// single-file rates with sentinels `x_0 = L- - 1` and `x_{N+1} = L+ + 1`.
pub fn build_q_from_rates<T: Scalar>(sr: &ShockRates<T>, lat: &Lattice, limits: &Limits) -> Result<SparseGenerator<T>> {
    limits.check_sites(lat.len())?;
    let n = sr.n();
    let idx = DualStateIndex::new(lat.len(), n)?;
    let dim = idx.len();
    let mut b = GeneratorBuilder::with_capacity(dim, dim * (2 * n + 1));
    let mut x = vec![0i64; n + 2];
    x[0] = -1;
    x[n + 1] = lat.len() as i64;
    for s in 0..dim {
        for (k, c) in idx.unrank(s)?.into_iter().enumerate() {
            x[k + 1] = c as i64;
        }
        let mut out = T::zero();
        for i in 1..=n {
            let rate = sr.get(i);
            let open_l = (1 - delta(x[i], x[i - 1] + 1)) * (1 - delta(x[i], x[i + 1]));
            let open_r = (1 - delta(x[i], x[i + 1] - 1)) * (1 - delta(x[i], x[i - 1]));
            for (open, step, d) in [(open_l, -1, rate.d_l), (open_r, 1, rate.d_r)] {
                if open == 0 {
                    continue;
                }
                let moved: Vec<usize> = (1..=n)
                    .map(|j| (x[j] + if j == i { step } else { 0 }) as usize)
                    .collect();
                b.add(s, idx.rank(&moved)?, d);
                out += d;
            }
        }
        b.add(s, s, -out);
    }
    Ok(b.build(Convention::Intensity))
}

/// Unnormalized reversible weight `prod_i d_i^{2 x_i}` (absolute sites).
pub fn reversible_pi<T: Scalar>(xs: &ShockPositions, sr: &ShockRates<T>) -> Result<T> {
    if xs.n() != sr.n() {
        return Err(Error::DimensionMismatch {
            expected: sr.n(),
            got: xs.n(),
        });
    }
    Ok(xs
        .sites()
        .iter()
        .zip(&sr.shocks)
        .fold(T::one(), |acc, (&x, s)| acc * s.d.powi(2 * x as i32)))
}

/// How a vector of weights is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightNorm {
    /// Entries sum to one.
    Sum,
    /// Largest entry equals one.
    Max,
}

/// Reversible weights over all states in colex order, evaluated in log space
/// so that large lattices do not overflow.
pub fn reversible_weights<T: Scalar>(sr: &ShockRates<T>, lat: &Lattice, norm: WeightNorm) -> Result<Vec<T>> {
    let idx = DualStateIndex::new(lat.len(), sr.n())?;
    let two = T::lit(2.0);
    let logs: Vec<T> = idx
        .iter()
        .map(|c| {
            c.iter().zip(&sr.shocks).fold(T::zero(), |acc, (&off, s)| {
                acc + two * T::from_int(lat.l_minus() + off as i64) * s.d.ln()
            })
        })
        .collect();
    let top = logs.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut w: Vec<T> = logs.iter().map(|&v| (v - top).exp()).collect();
    if norm == WeightNorm::Sum {
        let total: T = w.iter().copied().sum();
        for v in &mut w {
            *v /= total;
        }
    }
    Ok(w)
}

/// `max |pi_x Q_xy - pi_y Q_yx|` over all pairs.
pub fn detailed_balance_residual<T: Scalar>(q: &SparseGenerator<T>, pi: &[T]) -> Result<T> {
    if pi.len() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: pi.len(),
        });
    }
    let mut worst = T::zero();
    for x in 0..q.dim() {
        for (y, v) in q.row(x) {
            if x != y {
                worst = worst.max((pi[x] * v - pi[y] * q.get(y, x)).abs());
            }
        }
    }
    Ok(worst)
}

/// `eps_p = w (d + 1/d - 2 cos(pi p / L))` for `p = 0..L-1`, with `eps_0 = 0`.
pub fn rw_spectrum<T: Scalar>(sr: &ShockRates<T>, lat: &Lattice) -> Result<Vec<T>> {
    let s = sr.single()?;
    let w = (s.d_l * s.d_r).sqrt();
    let len = T::from_int(lat.len() as i64);
    let pi = T::lit(std::f64::consts::PI);
    Ok((0..lat.len())
        .map(|p| {
            if p == 0 {
                T::zero()
            } else {
                let c = (pi * T::from_int(p as i64) / len).cos();
                w * (s.d + s.d.recip() - T::lit(2.0) * c)
            }
        })
        .collect())
}

fn psi<T: Scalar>(d: T, p: usize, y_off: i64, len: usize) -> T {
    let k = T::lit(std::f64::consts::PI) * T::from_int(p as i64) / T::from_int(len as i64);
    d * (k * T::from_int(y_off + 1)).sin() - (k * T::from_int(y_off)).sin()
}

/// Stationary term `(d^2 - 1)/(d^{2L} - 1) d^{2(y - L-)}`, equal to `1/L` at `d = 1`.
pub fn rw_stationary<T: Scalar>(sr: &ShockRates<T>, lat: &Lattice, y: i64) -> Result<T> {
    let d = sr.single()?.d;
    let off = lat.offset(y)? as i32;
    let len = lat.len() as i32;
    if d == T::one() {
        return Ok(T::one() / T::from_int(len as i64));
    }
    let d2 = d * d;
    // divide through by the larger end to stay finite for long lattices
    Ok(if d > T::one() {
        let inv = d2.recip();
        (T::one() - inv) / (T::one() - inv.powi(len)) * inv.powi(len - 1 - off)
    } else {
        (T::one() - d2) / (T::one() - d2.powi(len)) * d2.powi(off)
    })
}

/// Transition probability `P(y, t | x, 0)` of the single shock.
///
/// The spectral weight of mode `p` is `w / (d eps_p)`, i.e. the squared
/// modulus of the normalization `1/(d - e^{-i pi p/L})` of the eigenvectors.
pub fn rw_propagator<T: Scalar>(x: i64, y: i64, t: T, sr: &ShockRates<T>, lat: &Lattice) -> Result<T> {
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::invalid(format!("time must be finite and >= 0, got {t}")));
    }
    let s = sr.single()?;
    let (xo, yo) = (lat.offset(x)? as i64, lat.offset(y)? as i64);
    let len = lat.len();
    let w = (s.d_l * s.d_r).sqrt();
    let eps = rw_spectrum(sr, lat)?;
    let mut sum = T::zero();
    for (p, &e) in eps.iter().enumerate().skip(1) {
        let weight = w / (s.d * e) * (-e * t).exp();
        sum += psi(s.d, p, xo, len) * psi(s.d, p, yo, len) * weight;
    }
    let spectral = s.d.powi((yo - xo) as i32) * T::lit(2.0) / T::from_int(len as i64) * sum;
    Ok(rw_stationary(sr, lat, y)? + spectral)
}

/// Full `L x L` propagator matrix, row `x`, column `y` (offsets).
pub fn rw_propagator_matrix<T: Scalar>(t: T, sr: &ShockRates<T>, lat: &Lattice) -> Result<Vec<T>> {
    let len = lat.len();
    let mut out = Vec::with_capacity(len * len);
    for x in lat.sites() {
        for y in lat.sites() {
            out.push(rw_propagator(x, y, t, sr, lat)?);
        }
    }
    Ok(out)
}

/// Eigenvectors `Psi_p(y)` of the symmetrized walk generator, rows `p = 0..L-1`.
pub fn rw_eigenvectors<T: Scalar>(sr: &ShockRates<T>, lat: &Lattice) -> Result<Vec<Vec<Complex<T>>>> {
    let d = sr.single()?.d;
    let len = lat.len();
    let norm = (T::lit(2.0) / T::from_int(len as i64)).sqrt();
    let pi = T::lit(std::f64::consts::PI);
    let mut rows = Vec::with_capacity(len);
    let ground: Vec<Complex<T>> = lat
        .sites()
        .map(|y| rw_stationary(sr, lat, y).map(|p| Complex::new(p.sqrt(), T::zero())))
        .collect::<Result<_>>()?;
    rows.push(ground);
    for p in 1..len {
        let phase = -pi * T::from_int(p as i64) / T::from_int(len as i64);
        let denom = Complex::new(d, T::zero()) - Complex::new(phase.cos(), phase.sin());
        rows.push(
            (0..len as i64)
                .map(|y| Complex::new(norm * psi(d, p, y, len), T::zero()) / denom)
                .collect(),
        );
    }
    Ok(rows)
}
