//! Action of the Markov semigroup on a measure by uniformization.
//!
//! With `Λ` the largest exit rate, `exp(Wt) = e^{-Λt} Σ_n (Λt)^n/n! P^n` where
//! `P = I + W/Λ` is stochastic. Long horizons are split into sub-steps with
//! `Λ Δt <= 30` so the Poisson weights stay representable; each sub-step
//! truncates once the neglected Poisson tail drops below its share of `tol`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::{Convention, SparseGenerator};

const MAX_STEP_MASS: f64 = 30.0;
const MAX_TERMS: usize = 100_000;

/// Reusable propagator for one generator.
#[derive(Debug, Clone)]
pub struct Evolver<T> {
    /// Operator acting on column vectors: `W^T` or `-H`.
    op: SparseGenerator<T>,
    lambda: T,
}

impl<T: Scalar> Evolver<T> {
    pub fn new(g: &SparseGenerator<T>) -> Result<Self> {
        if !g.all_finite() {
            return Err(Error::NonFinite("generator entries"));
        }
        let op = match g.convention() {
            Convention::Intensity => g.transpose(),
            Convention::Hamiltonian => g.negated(),
        };
        let lambda = g.max_exit_rate();
        Ok(Self { op, lambda })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Evolves the measure `v` over time `t` with `l1` error at most `tol`
    /// (for probability vectors).
    pub fn apply(&self, v: &[T], t: T, tol: T) -> Result<Vec<T>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        if !(t >= T::zero()) || !t.is_finite() {
            return Err(Error::invalid(format!("time must be finite and >= 0, got {t}")));
        }
        if !(tol > T::zero()) {
            return Err(Error::invalid(format!("tolerance must be > 0, got {tol}")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("input vector"));
        }
        if t == T::zero() || self.lambda == T::zero() {
            return Ok(v.to_vec());
        }
        let mass = self.lambda * t;
        let steps = (mass / T::lit(MAX_STEP_MASS)).ceil().max(T::one());
        let n_steps = steps.to_usize().ok_or(Error::NonFinite("step count"))?;
        let step_mass = mass / steps;
        let step_tol = tol / steps;
        let mut x = v.to_vec();
        for _ in 0..n_steps {
            x = self.step(&x, step_mass, step_tol)?;
        }
        Ok(x)
    }

    fn step(&self, x: &[T], mass: T, tol: T) -> Result<Vec<T>> {
        let inv_lambda = T::one() / self.lambda;
        let mut weight = (-mass).exp();
        let mut cum = weight;
        let mut term = x.to_vec();
        let mut acc: Vec<T> = term.iter().map(|&u| weight * u).collect();
        let mut buf = vec![T::zero(); x.len()];
        let floor = T::epsilon() * T::lit(1e-3);
        let mut n = 0usize;
        loop {
            let tail = T::one() - cum;
            if tail <= tol {
                break;
            }
            let past_mode = T::from_usize(n).unwrap_or(T::infinity()) > mass;
            if past_mode && weight <= floor {
                // remaining tail is below rounding of the accumulated sum
                break;
            }
            n += 1;
            if n > MAX_TERMS {
                return Err(Error::NonConvergence(format!(
                    "uniformization exceeded {MAX_TERMS} terms"
                )));
            }
            self.op.matvec_into(&term, &mut buf);
            for (u, &du) in term.iter_mut().zip(&buf) {
                *u += du * inv_lambda;
            }
            weight = weight * mass / T::from_usize(n).unwrap_or(T::infinity());
            cum += weight;
            for (a, &u) in acc.iter_mut().zip(&term) {
                *a += weight * u;
            }
        }
        Ok(acc)
    }
}

/// Evolves the measure `v` for time `t` under `g`.
///
/// For an intensity matrix this returns `(v^T exp(W t))^T`, for a Hamiltonian
/// `exp(-H t) v`; both describe the same Markov evolution.
pub fn expm_action<T: Scalar>(g: &SparseGenerator<T>, v: &[T], t: T, tol: T) -> Result<Vec<T>> {
    Evolver::new(g)?.apply(v, t, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::max_abs_diff;
    use proptest::prelude::*;

    fn chain(a: f64, b: f64) -> SparseGenerator<f64> {
        SparseGenerator::from_dense(2, &[-a, a, b, -b], Convention::Intensity).unwrap()
    }

    #[test]
    fn time_zero_is_identity() {
        let w = chain(1.0, 2.0);
        assert_eq!(expm_action(&w, &[0.3, 0.7], 0.0, 1e-12).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn two_state_closed_form() {
        let w = chain(1.0, 1.0);
        for &t in &[0.1, 0.5, 1.0, 3.0, 40.0, 200.0] {
            let got = expm_action(&w, &[1.0, 0.0], t, 1e-13).unwrap();
            let e = (-2.0 * t).exp();
            let want = [(1.0 + e) / 2.0, (1.0 - e) / 2.0];
            assert!(max_abs_diff(&got, &want) < 1e-12, "t={t}: {got:?}");
        }
    }

    #[test]
    fn hamiltonian_form_agrees() {
        let w = chain(0.3, 1.7);
        let h = w.negative_transpose();
        let a = expm_action(&w, &[0.2, 0.8], 1.3, 1e-13).unwrap();
        let b = expm_action(&h, &[0.2, 0.8], 1.3, 1e-13).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-14);
    }

    #[test]
    fn stationary_vector_is_fixed() {
        let (a, b) = (0.4, 1.6);
        let w = chain(a, b);
        let pi = [b / (a + b), a / (a + b)];
        for &t in &[0.5, 5.0, 100.0] {
            let got = expm_action(&w, &pi, t, 1e-12).unwrap();
            assert!(max_abs_diff(&got, &pi) < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let w = chain(1.0, 1.0);
        assert!(expm_action(&w, &[1.0, 0.0], -1.0, 1e-12).is_err());
        assert!(expm_action(&w, &[1.0, 0.0], 1.0, 0.0).is_err());
        assert!(expm_action(&w, &[f64::NAN, 0.0], 1.0, 1e-12).is_err());
        assert!(expm_action(&w, &[1.0], 1.0, 1e-12).is_err());
    }

    proptest! {
        #[test]
        fn semigroup_mass_and_positivity(a in 0.05f64..5.0, b in 0.05f64..5.0, c in 0.05f64..5.0,
                                         s in 0.0f64..4.0, t in 0.0f64..4.0) {
            // three-state cycle with a back edge
            let dense = [-a, a, 0.0, 0.0, -b, b, c, 0.5, -c - 0.5];
            let w = SparseGenerator::from_dense(3, &dense, Convention::Intensity).unwrap();
            let tol = 1e-12;
            let v = [0.6, 0.3, 0.1];
            let direct = expm_action(&w, &v, s + t, tol).unwrap();
            let split = expm_action(&w, &expm_action(&w, &v, s, tol).unwrap(), t, tol).unwrap();
            prop_assert!(max_abs_diff(&direct, &split) <= 2.0 * tol + 1e-15);
            prop_assert!(direct.iter().all(|&x| x >= -tol));
            prop_assert!((direct.iter().sum::<f64>() - 1.0).abs() <= tol + 1e-15);
        }
    }
}
