//! Numerical witnesses of the reverse duality between the open ASEP and the
//! shock exclusion process, and of the local algebra behind it.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asep::{build_h, build_w, bulk_block, kappa_pair, left_block, manifold_residuals, right_block, ManifoldCheck, ManifoldSpec, Rates};
use crate::eigen::generator_eigs;
use crate::error::{Error, Result};
use crate::expm::Evolver;
use crate::lattice::{DenseVector, Lattice, TwoVector};
use crate::limits::Limits;
use crate::measures::{build_duality_matrices_with, shock_measure_vector, DualityMatrices};
use crate::scalar::Scalar;
use crate::shock::{
    build_q_from_rates, reversible_weights, rw_propagator, rw_spectrum, rw_stationary, shock_rates, ShockPositions,
    ShockProfile, ShockRates, WeightNorm,
};
use crate::sparse::SparseGenerator;

/// Residuals of `R W = Q^T R` and `S W = Q S` for one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub lattice: Lattice,
    pub n: usize,
    pub rates: Rates<f64>,
    pub manifold: ManifoldCheck<f64>,
    /// On `B_N^1` within `manifold_tol`.
    pub on_manifold: bool,
    pub manifold_tol: f64,
    /// `max |R W - Q^T R|` with `pi` scaled to unit maximum.
    pub residual_duality: f64,
    /// `max |S W - Q S|`.
    pub residual_intertwine: f64,
    pub bulk_densities: Vec<f64>,
    pub shock_densities: Vec<f64>,
}

impl DualityReport {
    /// `true` when both residuals are below `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.residual_duality < tol && self.residual_intertwine < tol
    }
}

/// `(max |R W - Q^T R|, max |S W - Q S|)`.
pub fn duality_residuals<T: Scalar>(dm: &DualityMatrices<T>, w: &SparseGenerator<T>, q: &SparseGenerator<T>) -> Result<(T, T)> {
    if w.dim() != dm.configs || q.dim() != dm.states() {
        return Err(Error::DimensionMismatch {
            expected: dm.configs,
            got: w.dim(),
        });
    }
    let wt = w.transpose();
    let qt = q.transpose();
    let sw: Vec<Vec<T>> = (0..dm.states())
        .into_par_iter()
        .map(|x| wt.matvec(dm.s_row(x)))
        .collect::<Result<_>>()?;
    let worst = (0..dm.states())
        .into_par_iter()
        .map(|x| {
            let mut qtr = vec![T::zero(); dm.configs];
            for (y, v) in qt.row(x) {
                let scale = v * dm.pi[y];
                for (a, &s) in qtr.iter_mut().zip(dm.s_row(y)) {
                    *a += scale * s;
                }
            }
            let mut qs = vec![T::zero(); dm.configs];
            for (y, v) in q.row(x) {
                for (a, &s) in qs.iter_mut().zip(dm.s_row(y)) {
                    *a += v * s;
                }
            }
            let mut rd = T::zero();
            let mut ri = T::zero();
            for eta in 0..dm.configs {
                rd = rd.max((dm.pi[x] * sw[x][eta] - qtr[eta]).abs());
                ri = ri.max((sw[x][eta] - qs[eta]).abs());
            }
            (rd, ri)
        })
        .reduce(|| (T::zero(), T::zero()), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(worst)
}

/// Builds `W`, `Q`, `R`, `S` for `N` shocks with the shock family fixed by the
/// boundary rates, and reports both residuals.
pub fn verify_reverse_duality<T: Scalar>(rates: &Rates<T>, lat: &Lattice, n: usize, limits: &Limits) -> Result<DualityReport> {
    let spec = ManifoldSpec::new(n, 1)?;
    spec.bind(lat)?;
    let profile = ShockProfile::from_rates(rates, n)?;
    let sr = shock_rates(&profile, rates)?;
    let w = build_w(rates, lat, limits)?;
    let q = build_q_from_rates(&sr, lat, limits)?;
    let dm = build_duality_matrices_with(&profile, &sr, lat, limits)?;
    let (rd, ri) = duality_residuals(&dm, &w, &q)?;
    let check = manifold_residuals(rates, &spec)?;
    let manifold_tol = 1e-10;
    let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    Ok(DualityReport {
        lattice: *lat,
        n,
        rates: rates.to_f64(),
        manifold: ManifoldCheck {
            res_n: check.res_n.as_f64(),
            res_m: check.res_m.as_f64(),
            q2n: check.q2n.as_f64(),
            q2m_inv: check.q2m_inv.as_f64(),
        },
        on_manifold: check.on_manifold(T::lit(manifold_tol)),
        manifold_tol,
        residual_duality: rd.as_f64(),
        residual_intertwine: ri.as_f64(),
        bulk_densities: f(profile.bulk()),
        shock_densities: f(profile.shock()),
    })
}

/// Distribution of the dual process at time `t` started from `x0`, over all
/// shock states in colex order. Uses the closed form for a single shock.
pub fn dual_transition_row<T: Scalar>(sr: &ShockRates<T>, lat: &Lattice, x0: &ShockPositions, t: T, tol: T, limits: &Limits) -> Result<Vec<T>> {
    if sr.n() == 1 && t > T::zero() {
        return lat.sites().map(|y| rw_propagator(x0.sites()[0], y, t, sr, lat)).collect();
    }
    let q = build_q_from_rates(sr, lat, limits)?;
    let mut e = vec![T::zero(); q.dim()];
    e[x0.rank(lat)?] = T::one();
    Evolver::new(&q)?.apply(&e, t, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionComparison<T> {
    /// `mu^{x0}` evolved by the ASEP.
    pub lhs: DenseVector<T>,
    /// `sum_y P(y, t | x0) mu^y`.
    pub rhs: DenseVector<T>,
    /// Transition probabilities of the dual process.
    pub dual: Vec<T>,
    /// `max |lhs - rhs|`.
    pub err: T,
}

/// Compares the ASEP evolution of a shock measure with the mixture of shock
/// measures weighted by the dual transition probabilities.
pub fn evolve_and_compare<T: Scalar>(
    rates: &Rates<T>,
    lat: &Lattice,
    profile: &ShockProfile<T>,
    x0: &ShockPositions,
    t: T,
    tol: T,
    limits: &Limits,
) -> Result<EvolutionComparison<T>> {
    let sr = shock_rates(profile, rates)?;
    let w = build_w(rates, lat, limits)?;
    let start = shock_measure_vector(profile, x0, lat)?.vector;
    let lhs = Evolver::new(&w)?.apply(&start, t, tol)?;
    let dual = dual_transition_row(&sr, lat, x0, t, tol, limits)?;
    let rhs = mixture(profile, &dual, lat)?;
    let err = crate::scalar::max_abs_diff(&lhs, &rhs);
    Ok(EvolutionComparison { lhs, rhs, dual, err })
}

/// `sum_x weights[x] mu^x` over shock states in colex order.
pub fn mixture<T: Scalar>(profile: &ShockProfile<T>, weights: &[T], lat: &Lattice) -> Result<DenseVector<T>> {
    let idx = crate::combinatorics::DualStateIndex::new(lat.len(), profile.n())?;
    if weights.len() != idx.len() {
        return Err(Error::DimensionMismatch {
            expected: idx.len(),
            got: weights.len(),
        });
    }
    let mut out = vec![T::zero(); lat.num_configs()];
    for (x, &wx) in weights.iter().enumerate() {
        if wx == T::zero() {
            continue;
        }
        let xs = ShockPositions::from_offsets(&idx.unrank(x)?, lat)?;
        let mu = shock_measure_vector(profile, &xs, lat)?.vector;
        for (o, m) in out.iter_mut().zip(mu) {
            *o += wx * m;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantMeasure<T> {
    /// Normalized reversible weights of the shock states.
    pub weights: Vec<T>,
    pub mu: DenseVector<T>,
    /// `max |W^T mu|`.
    pub stationarity_residual: T,
}

impl<T: Scalar> InvariantMeasure<T> {
    pub fn ensure_stationary(&self, tol: T) -> Result<()> {
        if !(self.stationarity_residual < tol) {
            return Err(Error::Postcondition(format!(
                "convex combination is not stationary: max |W^T mu| = {} (off-manifold parameters?)",
                self.stationarity_residual
            )));
        }
        Ok(())
    }
}

/// Convex combination of shock measures with weights `prod_i d_i^{2 x_i}`.
pub fn invariant_measure<T: Scalar>(rates: &Rates<T>, lat: &Lattice, profile: &ShockProfile<T>, limits: &Limits) -> Result<InvariantMeasure<T>> {
    let sr = shock_rates(profile, rates)?;
    let weights = reversible_weights(&sr, lat, WeightNorm::Sum)?;
    let mu = mixture(profile, &weights, lat)?;
    let w = build_w(rates, lat, limits)?;
    let stationarity_residual = crate::scalar::max_abs(&w.vecmat(&mu)?);
    Ok(InvariantMeasure {
        weights,
        mu,
        stationarity_residual,
    })
}

/// Single-shock weights `(d^2 - 1)/(d^{2L} - 1) d^{2(x - L-)}`.
pub fn geometric_weights<T: Scalar>(sr: &ShockRates<T>, lat: &Lattice) -> Result<Vec<T>> {
    lat.sites().map(|x| rw_stationary(sr, lat, x)).collect()
}

/// Total variation distance `sum |a - b| / 2`.
pub fn total_variation<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum::<T>() / T::lit(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEigen<T> {
    pub z: T,
    /// `alpha - gamma z` (left) or `delta - beta z` (right).
    pub eps: T,
    /// `(r-l) z/(1+z)` (left) or `-(r-l) z/(1+z)` (right).
    pub eps_alt: T,
    /// `max |h (1, z)^T - eps (1, z)^T|`.
    pub residual: T,
}

/// Positive-fugacity eigenvector of a boundary block.
pub fn boundary_eigen<T: Scalar>(rates: &Rates<T>, side: Side) -> Result<BoundaryEigen<T>> {
    let g = rates.r - rates.ell;
    let (z, eps, eps_alt, block) = match side {
        Side::Left => {
            let z = kappa_pair(rates.alpha, rates.gamma, rates)?.0.recip();
            (z, rates.alpha - rates.gamma * z, g * z / (T::one() + z), left_block(rates))
        }
        Side::Right => {
            let z = kappa_pair(rates.beta, rates.delta, rates)?.0;
            (z, rates.delta - rates.beta * z, -g * z / (T::one() + z), right_block(rates))
        }
    };
    let v = [T::one(), z];
    let hv = [block[0] + block[1] * z, block[2] + block[3] * z];
    let residual = (hv[0] - eps * v[0]).abs().max((hv[1] - eps * v[1]).abs());
    let scale = rates.named().iter().fold(T::one(), |m, (_, x)| m.max(*x)) * (T::one() + z);
    if residual > T::check_tol() * scale {
        return Err(Error::Postcondition(format!("boundary eigenvector residual {residual}")));
    }
    Ok(BoundaryEigen {
        z,
        eps,
        eps_alt,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCoefficients<T> {
    pub delta: T,
    pub d: T,
    pub d_tilde: T,
    pub d_minus: T,
    pub d_plus: T,
    pub d_tilde_minus: T,
    pub d_tilde_plus: T,
}

/// `Δ(a,b) = a0 b1 - a1 b0`.
pub fn det<T: Scalar>(a: &TwoVector<T>, b: &TwoVector<T>) -> T {
    a.c0 * b.c1 - a.c1 * b.c0
}

pub fn projection_coefficients<T: Scalar>(a: &TwoVector<T>, b: &TwoVector<T>, rates: &Rates<T>) -> Result<ProjectionCoefficients<T>> {
    let delta = det(a, b);
    if delta == T::zero() {
        return Err(Error::LinearlyDependent(0.0));
    }
    let g = rates.r - rates.ell;
    let z = a.fugacity().ok_or_else(|| Error::invalid("a0 = 0: fugacity undefined"))?;
    let eps_m = rates.alpha - rates.gamma * z;
    let eps_p = rates.delta - rates.beta * z;
    Ok(ProjectionCoefficients {
        delta,
        d: g * a.c1 * a.c0 / delta,
        d_tilde: g * a.c1 * b.c0 / delta,
        d_minus: eps_m * a.c0 * a.sum() / delta,
        d_plus: eps_p * a.c0 * a.sum() / delta,
        d_tilde_minus: eps_m * a.c0 * b.sum() / delta,
        d_tilde_plus: eps_p * a.c0 * b.sum() / delta,
    })
}

fn d_fn<T: Scalar>(a: &TwoVector<T>, b: &TwoVector<T>, rates: &Rates<T>) -> Result<T> {
    let delta = det(a, b);
    if delta == T::zero() {
        return Err(Error::LinearlyDependent(0.0));
    }
    Ok((rates.r - rates.ell) * a.c1 * a.c0 / delta)
}

fn d_tilde_fn<T: Scalar>(a: &TwoVector<T>, b: &TwoVector<T>, rates: &Rates<T>) -> Result<T> {
    let delta = det(a, b);
    if delta == T::zero() {
        return Err(Error::LinearlyDependent(0.0));
    }
    Ok((rates.r - rates.ell) * a.c1 * b.c0 / delta)
}

/// Vectors entering the three projection identities. `b_tilde`, `c` and
/// `c_tilde` are auxiliary and only need to be independent of their partners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInputs<T> {
    pub a: TwoVector<T>,
    pub a_tilde: TwoVector<T>,
    pub b: TwoVector<T>,
    pub b_tilde: TwoVector<T>,
    pub c: TwoVector<T>,
    pub c_tilde: TwoVector<T>,
}

impl<T: Scalar> ProjectionInputs<T> {
    /// Auxiliaries taken as the rotations `(-v1, v0)` of their partners.
    pub fn new(a: TwoVector<T>, a_tilde: TwoVector<T>, b: TwoVector<T>) -> Self {
        let rot = |v: TwoVector<T>| TwoVector::new(-v.c1, v.c0);
        Self {
            a,
            a_tilde,
            b,
            b_tilde: rot(b),
            c: rot(a_tilde),
            c_tilde: rot(a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResiduals<T> {
    pub case_a: T,
    pub case_b: T,
    pub case_c: T,
    /// `z(a~)/z(a) - q^2`.
    pub stability: T,
}

impl<T: Scalar> ProjectionResiduals<T> {
    pub fn max(&self) -> T {
        self.case_a.max(self.case_b).max(self.case_c)
    }
}

fn kron2<T: Scalar>(a: &TwoVector<T>, b: &TwoVector<T>) -> [T; 4] {
    [a.c0 * b.c0, a.c0 * b.c1, a.c1 * b.c0, a.c1 * b.c1]
}

fn apply4<T: Scalar>(h: &[T; 16], v: &[T; 4]) -> [T; 4] {
    let mut out = [T::zero(); 4];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|j| h[i * 4 + j] * v[j]).sum();
    }
    out
}

fn residual4<T: Scalar>(lhs: [T; 4], terms: &[(T, [T; 4])]) -> T {
    let mut worst = T::zero();
    for k in 0..4 {
        let rhs: T = terms.iter().map(|(c, v)| *c * v[k]).sum();
        worst = worst.max((lhs[k] - rhs).abs());
    }
    worst
}

/// Applies the bulk block to `|ab>`, `|b a~>`, `|a a~>` and measures how far
/// each image is from its three-term expansion.
pub fn verify_projection_lemma<T: Scalar>(inp: &ProjectionInputs<T>, rates: &Rates<T>) -> Result<ProjectionResiduals<T>> {
    let ProjectionInputs {
        a,
        a_tilde: at,
        b,
        b_tilde: bt,
        c,
        c_tilde: ct,
    } = *inp;
    for (name, v) in [("a", a), ("a_tilde", at)] {
        if v.c0 * v.c1 == T::zero() {
            return Err(Error::invalid(format!("{name} must have two nonzero components")));
        }
    }
    if det(&b, &at) == T::zero() {
        return Err(Error::LinearlyDependent(0.0));
    }
    let h = bulk_block(rates);

    let ab = kron2(&a, &b);
    let (u, v, w) = (rates.ell - d_tilde_fn(&b, &bt, rates)?, d_fn(&a, &at, rates)?, -d_fn(&b, &bt, rates)?);
    let case_a = residual4(apply4(&h, &ab), &[(u, ab), (-v, kron2(&b, &at)), (-w, kron2(&a, &bt))]);

    let bat = kron2(&b, &at);
    let (u, v, w) = (rates.r + d_tilde_fn(&b, &bt, rates)?, -d_fn(&at, &a, rates)?, d_fn(&b, &bt, rates)?);
    let case_b = residual4(apply4(&h, &bat), &[(u, bat), (-v, ab), (-w, kron2(&bt, &at))]);

    let aat = kron2(&a, &at);
    let u = d_tilde_fn(&a, &ct, rates)? - d_tilde_fn(&at, &c, rates)?;
    let (v, w) = (-d_fn(&at, &c, rates)?, d_fn(&a, &ct, rates)?);
    let case_c = residual4(apply4(&h, &aat), &[(u, aat), (-w, kron2(&ct, &at)), (-v, kron2(&a, &c))]);

    let za = a.fugacity().ok_or_else(|| Error::invalid("a0 = 0"))?;
    let zat = at.fugacity().ok_or_else(|| Error::invalid("a~0 = 0"))?;
    Ok(ProjectionResiduals {
        case_a,
        case_b,
        case_c,
        stability: zat / za - rates.q2(),
    })
}

/// Largest spread within each identity chain relating the shock hopping
/// rates to the plateau densities and boundary eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorollaryResiduals<T> {
    pub left_rate: T,
    pub right_rate: T,
    pub eps_plus: T,
    pub eps_minus: T,
    pub product: T,
}

impl<T: Scalar> CorollaryResiduals<T> {
    pub fn max(&self) -> T {
        self.left_rate
            .max(self.right_rate)
            .max(self.eps_plus)
            .max(self.eps_minus)
            .max(self.product)
    }
}

fn spread<T: Scalar>(vals: &[T]) -> T {
    let lo = vals.iter().fold(T::infinity(), |m, &v| m.min(v));
    let hi = vals.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    hi - lo
}

/// Evaluates the identity chains for every shock of a stable profile. The
/// boundary-rate forms of the eigenvalues enter at the outermost plateaus.
pub fn corollary_identities<T: Scalar>(profile: &ShockProfile<T>, rates: &Rates<T>) -> Result<CorollaryResiduals<T>> {
    let sr = shock_rates(profile, rates)?;
    let (r, l, one) = (rates.r, rates.ell, T::one());
    let g = r - l;
    let rho = profile.bulk();
    let n = profile.n();
    let mut out = CorollaryResiduals {
        left_rate: T::zero(),
        right_rate: T::zero(),
        eps_plus: T::zero(),
        eps_minus: T::zero(),
        product: T::zero(),
    };
    for i in 1..=n {
        let (lo, hi) = (rho[i - 1], rho[i]);
        let (tlo, thi) = (TwoVector::density(lo), TwoVector::density(hi));
        let s = sr.get(i);
        out.left_rate = out.left_rate.max(spread(&[
            d_fn(&tlo, &thi, rates)?,
            l * (one - lo) / (one - hi),
            r * lo / hi,
            l * (one - lo) + r * lo,
            s.d_l,
        ]));
        out.right_rate = out.right_rate.max(spread(&[
            -d_fn(&thi, &tlo, rates)?,
            l * hi / lo,
            r * (one - hi) / (one - lo),
            r * (one - hi) + l * hi,
            s.d_r,
        ]));
        let mut plus = vec![-g * hi, s.d_r - r];
        if i == n {
            plus.push(rates.delta - rates.beta * (hi / (one - hi)));
        }
        out.eps_plus = out.eps_plus.max(spread(&plus));
        let mut minus = vec![g * lo, s.d_l - l];
        if i == 1 {
            minus.push(rates.alpha - rates.gamma * (lo / (one - lo)));
        }
        out.eps_minus = out.eps_minus.max(spread(&minus));
        out.product = out.product.max((s.d_l * s.d_r - r * l).abs());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumContainment<T> {
    pub eps: Vec<T>,
    /// Distance from each `eps_p` to the nearest eigenvalue of `H`.
    pub gaps: Vec<T>,
    pub max_gap: T,
}

/// Matches the single-shock relaxation rates against the spectrum of `H`.
pub fn spectrum_containment<T: Scalar>(rates: &Rates<T>, lat: &Lattice, limits: &Limits) -> Result<SpectrumContainment<T>> {
    let profile = ShockProfile::from_rates(rates, 1)?;
    let sr = shock_rates(&profile, rates)?;
    let eps = rw_spectrum(&sr, lat)?;
    limits.check_dense_dim(lat.num_configs())?;
    let h = build_h(rates, lat, limits)?;
    let spec = generator_eigs(&h, limits)?;
    let gaps: Vec<T> = eps
        .iter()
        .map(|&e| {
            spec.iter()
                .map(|z| (z - Complex::new(e, T::zero())).norm())
                .fold(T::infinity(), |m, v| m.min(v))
        })
        .collect();
    let max_gap = gaps.iter().fold(T::zero(), |m, &v| m.max(v));
    Ok(SpectrumContainment { eps, gaps, max_gap })
}
