//! Similarity transform of the ASEP Hamiltonian onto the open XXZ chain with
//! non-diagonal boundary fields.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::asep::{build_h, kappa_pair, manifold_residuals, ManifoldSpec, Rates};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::limits::Limits;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XXZParams<T> {
    /// `ln q`.
    pub theta: T,
    pub w: T,
    pub phi_minus: T,
    pub psi_minus: T,
    pub phi_plus: T,
    pub psi_plus: T,
    pub theta_minus: T,
    pub theta_plus: T,
    pub e0: T,
}

/// Boundary parameters of the spin chain for the given rates and lattice.
pub fn xxz_from_rates<T: Scalar>(rates: &Rates<T>, lat: &Lattice) -> Result<XXZParams<T>> {
    rates.validate()?;
    let half = T::lit(0.5);
    let theta = rates.q().ln();
    let w = rates.w();
    let psi_minus = half * kappa_pair(rates.alpha, rates.gamma, rates)?.0.ln();
    let phi_minus = psi_minus + half * (rates.alpha / rates.gamma).ln();
    let psi_plus = half * kappa_pair(rates.beta, rates.delta, rates)?.0.ln();
    let phi_plus = psi_plus + half * (rates.beta / rates.delta).ln();
    if phi_minus == T::zero() || phi_plus == T::zero() {
        return Err(Error::invalid("boundary angle phi vanishes: boundary field is singular"));
    }
    let len = T::from_usize(lat.len()).ok_or(Error::NonFinite("lattice length"))?;
    let sum = rates.alpha + rates.beta + rates.gamma + rates.delta;
    let p = XXZParams {
        theta,
        w,
        phi_minus,
        psi_minus,
        phi_plus,
        psi_plus,
        theta_minus: psi_minus - phi_minus + theta * T::from_int(lat.l_minus()),
        theta_plus: phi_plus - psi_plus + theta * T::from_int(lat.l_plus()),
        e0: (len - T::one()) * theta.cosh() + sum / w,
    };
    let back = rates_from_xxz(&p)?;
    let worst = crate::scalar::max_abs_diff(
        &[back.alpha, back.beta, back.gamma, back.delta],
        &[rates.alpha, rates.beta, rates.gamma, rates.delta],
    );
    let scale = sum.max(T::one());
    if worst > T::lit(1e-10) * scale {
        return Err(Error::Postcondition(format!(
            "xxz parametrization does not reproduce the boundary rates (mismatch {worst})"
        )));
    }
    Ok(p)
}

/// Forward map back to the ASEP rates.
pub fn rates_from_xxz<T: Scalar>(p: &XXZParams<T>) -> Result<Rates<T>> {
    let two = T::lit(2.0);
    let pref = p.w / two * p.theta.sinh();
    let left = pref / (p.phi_minus.sinh() * p.psi_minus.cosh());
    let right = pref / (p.phi_plus.sinh() * p.psi_plus.cosh());
    let q = p.theta.exp();
    Rates::new(
        p.w * q,
        p.w / q,
        left * (p.phi_minus - p.psi_minus).exp(),
        right * (p.phi_plus - p.psi_plus).exp(),
        left * (p.psi_minus - p.phi_minus).exp(),
        right * (p.psi_plus - p.phi_plus).exp(),
    )
}

type C<T> = Complex<T>;

fn pauli<T: Scalar>() -> [[C<T>; 4]; 6] {
    let (o, l, i) = (C::new(T::zero(), T::zero()), C::new(T::one(), T::zero()), C::new(T::zero(), T::one()));
    [
        // identity, sigma^+, sigma^-, sigma^x, sigma^y, sigma^z (index 0 = vacancy)
        [l, o, o, l],
        [o, l, o, o],
        [o, o, l, o],
        [o, l, l, o],
        [o, -i, i, o],
        [l, o, o, -l],
    ]
}

const ID: usize = 0;
const SP: usize = 1;
const SM: usize = 2;
const SX: usize = 3;
const SY: usize = 4;
const SZ: usize = 5;

/// Dense operator `prod_k ops[k]` with site `L-` as the most significant factor.
fn tensor<T: Scalar>(len: usize, factors: &[(usize, [C<T>; 4])]) -> Vec<C<T>> {
    let dim = 1usize << len;
    let id = pauli::<T>()[ID];
    let mut local = vec![id; len];
    for &(j, m) in factors {
        local[j] = m;
    }
    let mut out = vec![C::new(T::zero(), T::zero()); dim * dim];
    for row in 0..dim {
        for col in 0..dim {
            let mut v = C::new(T::one(), T::zero());
            for (j, m) in local.iter().enumerate() {
                let shift = len - 1 - j;
                let (a, b) = ((row >> shift) & 1, (col >> shift) & 1);
                v *= m[2 * a + b];
                if v.re == T::zero() && v.im == T::zero() {
                    break;
                }
            }
            out[row * dim + col] = v;
        }
    }
    out
}

fn axpy<T: Scalar>(acc: &mut [C<T>], c: C<T>, m: &[C<T>]) {
    for (a, &x) in acc.iter_mut().zip(m) {
        *a += c * x;
    }
}

/// `H^XXZ` assembled from Pauli tensor blocks, row-major.
pub fn xxz_hamiltonian<T: Scalar>(p: &XXZParams<T>, lat: &Lattice, limits: &Limits) -> Result<Vec<C<T>>> {
    let len = lat.len();
    limits.check_dense_sites(len)?;
    limits.check_dense_dim(lat.num_configs())?;
    let s = pauli::<T>();
    let dim = lat.num_configs();
    let re = |x: T| C::new(x, T::zero());
    let mut h = vec![re(T::zero()); dim * dim];
    let ch = p.theta.cosh();
    for k in 0..len - 1 {
        axpy(&mut h, re(T::one()), &tensor(len, &[(k, s[SX]), (k + 1, s[SX])]));
        axpy(&mut h, re(T::one()), &tensor(len, &[(k, s[SY]), (k + 1, s[SY])]));
        axpy(&mut h, re(ch), &tensor(len, &[(k, s[SZ]), (k + 1, s[SZ])]));
    }
    axpy(&mut h, re(-p.e0), &tensor(len, &[]));
    let sh = p.theta.sinh();
    let left = sh / (p.phi_minus.sinh() * p.psi_minus.cosh());
    let first = 0;
    axpy(&mut h, re(left * (-p.theta_minus).exp()), &tensor(len, &[(first, s[SM])]));
    axpy(&mut h, re(left * p.theta_minus.exp()), &tensor(len, &[(first, s[SP])]));
    axpy(&mut h, re(left * p.psi_minus.sinh() * p.phi_minus.cosh()), &tensor(len, &[(first, s[SZ])]));
    let right = sh / (p.phi_plus.sinh() * p.psi_plus.cosh());
    let last = len - 1;
    axpy(&mut h, re(right * (-p.theta_plus).exp()), &tensor(len, &[(last, s[SM])]));
    axpy(&mut h, re(right * p.theta_plus.exp()), &tensor(len, &[(last, s[SP])]));
    axpy(&mut h, re(-right * p.psi_plus.sinh() * p.phi_plus.cosh()), &tensor(len, &[(last, s[SZ])]));
    let pref = re(-p.w / T::lit(2.0));
    for x in h.iter_mut() {
        *x *= pref;
    }
    Ok(h)
}

/// `max |Q^{-1} H Q - H^XXZ|` with `Q = prod_{k=L-}^{L+} q^{k n_k}`.
pub fn xxz_residual<T: Scalar>(rates: &Rates<T>, lat: &Lattice, limits: &Limits) -> Result<T> {
    let p = xxz_from_rates(rates, lat)?;
    let hx = xxz_hamiltonian(&p, lat, limits)?;
    let h = build_h(rates, lat, limits)?.to_dense();
    let dim = lat.num_configs();
    let len = lat.len();
    // exponent sum_k k n_k in units of theta
    let expo: Vec<T> = (0..dim)
        .map(|i| {
            let k: i64 = (0..len)
                .filter(|&j| (i >> (len - 1 - j)) & 1 == 1)
                .map(|j| lat.l_minus() + j as i64)
                .sum();
            T::from_int(k)
        })
        .collect();
    let mut worst = T::zero();
    for i in 0..dim {
        for j in 0..dim {
            let sim = h[i * dim + j] * (p.theta * (expo[j] - expo[i])).exp();
            worst = worst.max((C::new(sim, T::zero()) - hx[i * dim + j]).norm());
        }
    }
    Ok(worst)
}

/// Residual of the integrability condition
/// `phi- + psi- + phi+ + psi+ - (theta+ - theta- + (2N - L + 1) theta)`.
pub fn integrability_residual<T: Scalar>(p: &XXZParams<T>, lat: &Lattice, n: usize) -> T {
    let len = T::from_usize(lat.len()).unwrap_or(T::nan());
    let nn = T::from_usize(n).unwrap_or(T::nan());
    let two = T::lit(2.0);
    p.phi_minus + p.psi_minus + p.phi_plus + p.psi_plus
        - (p.theta_plus - p.theta_minus + (two * nn - len + T::one()) * p.theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityCheck<T> {
    pub integrability: T,
    /// `ln(1 + res_N / q^{2N})`, the manifold residual on the same log scale.
    pub manifold_log: T,
    pub res_n: T,
}

pub fn integrability_check<T: Scalar>(rates: &Rates<T>, lat: &Lattice, n: usize) -> Result<IntegrabilityCheck<T>> {
    let p = xxz_from_rates(rates, lat)?;
    let m = manifold_residuals(rates, &ManifoldSpec::new(n, 1)?)?;
    Ok(IntegrabilityCheck {
        integrability: integrability_residual(&p, lat, n),
        manifold_log: (m.res_n / m.q2n).ln_1p(),
        res_n: m.res_n,
    })
}
