//! Direct Gillespie simulation of the open ASEP and of the shock exclusion
//! process, with ensemble statistics against exact references.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asep::Rates;
use crate::combinatorics::DualStateIndex;
use crate::duality::evolve_and_compare;
use crate::error::{Error, Result};
use crate::lattice::{config_index, index_config, Configuration, Lattice};
use crate::limits::Limits;
use crate::measures::site_densities;
use crate::scalar::Scalar;
use crate::shock::{shock_rates, ShockPositions, ShockProfile, ShockRates};

/// Acceptance threshold on `|z|` for ensemble comparisons.
pub const Z_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    /// Particle at `from` jumps one site right.
    HopRight { from: i64 },
    /// Particle at `from` jumps one site left.
    HopLeft { from: i64 },
    Enter { site: i64 },
    Exit { site: i64 },
    /// Shock `shock` (1-based) moves from `from` by one site.
    ShockLeft { shock: usize, from: i64 },
    ShockRight { shock: usize, from: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub mv: Move,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum State {
    Asep(Vec<u8>),
    Shock(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub stream: u64,
    pub initial: State,
    pub final_state: State,
    pub n_events: u64,
    /// Only filled with `SimOptions::record_events`.
    pub events: Vec<Event>,
    /// Time spent in each state, indexed by configuration index or colex
    /// rank. Only filled with `SimOptions::record_occupation`.
    pub occupation: Option<Vec<f64>>,
}

impl Trajectory {
    /// Event log, one `time move` pair per line.
    pub fn event_log(&self) -> String {
        self.events.iter().map(|e| format!("{:.17e} {:?}\n", e.time, e.mv)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub record_events: bool,
    pub record_occupation: bool,
}

/// Per-trajectory generator: one ChaCha stream per trajectory index.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Sim<'a, R: Rng> {
    rng: &'a mut R,
    opts: SimOptions,
    events: Vec<Event>,
    n_events: u64,
    occupation: Option<Vec<f64>>,
}

impl<R: Rng> Sim<'_, R> {
    /// Runs the direct method until `t_end`. `moves(state)` lists the
    /// enabled moves with their rates, `apply` performs one, `index` ranks a
    /// state for occupation bookkeeping.
    fn run<S>(
        &mut self,
        state: &mut S,
        t_end: f64,
        moves: impl Fn(&S, &mut Vec<(Move, f64)>),
        apply: impl Fn(&mut S, Move),
        index: impl Fn(&S) -> usize,
    ) {
        let mut t = 0.0;
        let mut buf = Vec::new();
        loop {
            buf.clear();
            moves(state, &mut buf);
            let total: f64 = buf.iter().map(|m| m.1).sum();
            let dt = if total > 0.0 {
                // 1 - u lies in (0, 1]
                -(1.0 - self.rng.random::<f64>()).ln() / total
            } else {
                f64::INFINITY
            };
            let stay = dt.min(t_end - t);
            if let Some(occ) = self.occupation.as_mut() {
                occ[index(state)] += stay;
            }
            if t + dt > t_end {
                return;
            }
            t += dt;
            let mut u = self.rng.random::<f64>() * total;
            let mut pick = buf[buf.len() - 1].0;
            for &(m, rate) in &buf {
                if u < rate {
                    pick = m;
                    break;
                }
                u -= rate;
            }
            apply(state, pick);
            self.n_events += 1;
            if self.opts.record_events {
                self.events.push(Event { time: t, mv: pick });
            }
        }
    }
}

fn asep_moves(rates: &Rates<f64>, lat: &Lattice, bits: u64, out: &mut Vec<(Move, f64)>) {
    let len = lat.len();
    let occ = |j: usize| bits & lat.mask(j) != 0;
    let site = |j: usize| lat.l_minus() + j as i64;
    for j in 0..len - 1 {
        match (occ(j), occ(j + 1)) {
            (true, false) => out.push((Move::HopRight { from: site(j) }, rates.r)),
            (false, true) => out.push((Move::HopLeft { from: site(j + 1) }, rates.ell)),
            _ => {}
        }
    }
    if occ(0) {
        out.push((Move::Exit { site: site(0) }, rates.gamma));
    } else {
        out.push((Move::Enter { site: site(0) }, rates.alpha));
    }
    if occ(len - 1) {
        out.push((Move::Exit { site: site(len - 1) }, rates.beta));
    } else {
        out.push((Move::Enter { site: site(len - 1) }, rates.delta));
    }
}

fn asep_apply(lat: &Lattice, bits: &mut u64, mv: Move) {
    let m = |s: i64| lat.mask((s - lat.l_minus()) as usize);
    match mv {
        Move::HopRight { from } => *bits ^= m(from) | m(from + 1),
        Move::HopLeft { from } => *bits ^= m(from) | m(from - 1),
        Move::Enter { site } | Move::Exit { site } => *bits ^= m(site),
        Move::ShockLeft { .. } | Move::ShockRight { .. } => unreachable!("shock move in ASEP"),
    }
}

/// Simulates the open ASEP from `init` up to `t_end`.
pub fn gillespie_asep<T: Scalar>(
    rates: &Rates<T>,
    lat: &Lattice,
    init: &Configuration,
    t_end: T,
    seed: u64,
    stream: u64,
    opts: SimOptions,
) -> Result<Trajectory> {
    let rates = rates.to_f64();
    rates.validate()?;
    check_time(t_end)?;
    if init.len() != lat.len() {
        return Err(Error::DimensionMismatch {
            expected: lat.len(),
            got: init.len(),
        });
    }
    let mut rng = trajectory_rng(seed, stream);
    Ok(run_asep(&rates, lat, init.bits(), t_end.as_f64(), &mut rng, seed, stream, opts))
}

#[allow(clippy::too_many_arguments)]
fn run_asep<R: Rng>(rates: &Rates<f64>, lat: &Lattice, init: u64, t_end: f64, rng: &mut R, seed: u64, stream: u64, opts: SimOptions) -> Trajectory {
    let mut sim = Sim {
        rng,
        opts,
        events: Vec::new(),
        n_events: 0,
        occupation: opts.record_occupation.then(|| vec![0.0; lat.num_configs()]),
    };
    let mut bits = init;
    sim.run(
        &mut bits,
        t_end,
        |b, out| asep_moves(rates, lat, *b, out),
        |b, mv| asep_apply(lat, b, mv),
        |b| *b as usize,
    );
    let occ = |b: u64| (0..lat.len()).map(|j| u8::from(b & lat.mask(j) != 0)).collect();
    Trajectory {
        seed,
        stream,
        initial: State::Asep(occ(init)),
        final_state: State::Asep(occ(bits)),
        n_events: sim.n_events,
        events: sim.events,
        occupation: sim.occupation,
    }
}

fn shock_moves(sr: &ShockRates<f64>, lat: &Lattice, x: &[i64], out: &mut Vec<(Move, f64)>) {
    let n = x.len();
    for i in 0..n {
        let left_nb = if i == 0 { lat.l_minus() - 1 } else { x[i - 1] };
        let right_nb = if i + 1 == n { lat.l_plus() + 1 } else { x[i + 1] };
        let s = sr.get(i + 1);
        if x[i] - 1 != left_nb {
            out.push((Move::ShockLeft { shock: i + 1, from: x[i] }, s.d_l));
        }
        if x[i] + 1 != right_nb {
            out.push((Move::ShockRight { shock: i + 1, from: x[i] }, s.d_r));
        }
    }
}

fn shock_apply(x: &mut [i64], mv: Move) {
    match mv {
        Move::ShockLeft { shock, .. } => x[shock - 1] -= 1,
        Move::ShockRight { shock, .. } => x[shock - 1] += 1,
        _ => unreachable!("particle move in shock process"),
    }
}

/// Simulates the shock exclusion process with the rates of `profile`.
#[allow(clippy::too_many_arguments)]
pub fn gillespie_shock<T: Scalar>(
    profile: &ShockProfile<T>,
    rates: &Rates<T>,
    lat: &Lattice,
    init: &ShockPositions,
    t_end: T,
    seed: u64,
    stream: u64,
    opts: SimOptions,
) -> Result<Trajectory> {
    let sr = shock_rates_f64(profile, rates)?;
    check_time(t_end)?;
    let mut rng = trajectory_rng(seed, stream);
    run_shock(&sr, lat, init, t_end.as_f64(), &mut rng, seed, stream, opts)
}

fn shock_rates_f64<T: Scalar>(profile: &ShockProfile<T>, rates: &Rates<T>) -> Result<ShockRates<f64>> {
    let sr = shock_rates(profile, rates)?;
    let pairs: Vec<(f64, f64)> = sr.shocks.iter().map(|s| (s.d_l.as_f64(), s.d_r.as_f64())).collect();
    ShockRates::from_pairs(&pairs)
}

#[allow(clippy::too_many_arguments)]
fn run_shock<R: Rng>(
    sr: &ShockRates<f64>,
    lat: &Lattice,
    init: &ShockPositions,
    t_end: f64,
    rng: &mut R,
    seed: u64,
    stream: u64,
    opts: SimOptions,
) -> Result<Trajectory> {
    if init.n() != sr.n() {
        return Err(Error::DimensionMismatch {
            expected: sr.n(),
            got: init.n(),
        });
    }
    let idx = DualStateIndex::new(lat.len(), sr.n())?;
    let mut sim = Sim {
        rng,
        opts,
        events: Vec::new(),
        n_events: 0,
        occupation: opts.record_occupation.then(|| vec![0.0; idx.len()]),
    };
    let mut x = init.sites().to_vec();
    let base = lat.l_minus();
    sim.run(
        &mut x,
        t_end,
        |x, out| shock_moves(sr, lat, x, out),
        |x, mv| shock_apply(x, mv),
        |x| {
            let o: Vec<usize> = x.iter().map(|&s| (s - base) as usize).collect();
            idx.rank(&o).expect("valid shock state")
        },
    );
    Ok(Trajectory {
        seed,
        stream,
        initial: State::Shock(init.sites().to_vec()),
        final_state: State::Shock(x),
        n_events: sim.n_events,
        events: sim.events,
        occupation: sim.occupation,
    })
}

fn check_time<T: Scalar>(t: T) -> Result<()> {
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::invalid(format!("t_end must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Draws a configuration from the product measure with the given site densities.
pub fn sample_product<R: Rng>(densities: &[f64], rng: &mut R) -> Result<Configuration> {
    let occ: Vec<u8> = densities.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect();
    Configuration::from_occupations(&occ)
}

/// Empirical frequencies with standard errors and optional exact reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_traj: u64,
    pub t: f64,
    /// Per-site densities or per-state frequencies.
    pub empirical: Vec<f64>,
    /// Sample standard deviation over `sqrt(n_traj)`.
    pub std_errors: Vec<f64>,
    pub exact: Option<Vec<f64>>,
    pub z_scores: Option<Vec<f64>>,
    pub max_abs_z: Option<f64>,
    /// Raw counts behind `empirical` when it is a histogram.
    pub histogram: Option<Vec<u64>>,
    /// Number of simultaneous comparisons behind `max_abs_z`; the `|z| < 4`
    /// threshold is not Bonferroni corrected.
    pub comparisons: usize,
}

impl EnsembleStats {
    /// Indicator means from integer counts.
    pub fn from_counts(counts: &[u64], n_traj: u64, t: f64) -> Self {
        let n = n_traj as f64;
        let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let std_errors = empirical
            .iter()
            .map(|&p| {
                let var = if n_traj > 1 { p * (1.0 - p) * n / (n - 1.0) } else { 0.0 };
                (var / n).sqrt()
            })
            .collect();
        Self {
            n_traj,
            t,
            empirical,
            std_errors,
            exact: None,
            z_scores: None,
            max_abs_z: None,
            histogram: None,
            comparisons: counts.len(),
        }
    }

    /// Means of real samples, one row per trajectory.
    pub fn from_samples(rows: &[Vec<f64>], t: f64) -> Self {
        let n = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        let nf = n as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std_errors = var
            .iter()
            .map(|s| if n > 1 { (s / (nf - 1.0) / nf).sqrt() } else { 0.0 })
            .collect();
        Self {
            n_traj: n as u64,
            t,
            empirical: mean,
            std_errors,
            exact: None,
            z_scores: None,
            max_abs_z: None,
            histogram: None,
            comparisons: width,
        }
    }

    /// Attaches an exact reference. Where the empirical error vanishes the
    /// binomial error of the reference is used instead.
    pub fn with_reference(mut self, exact: Vec<f64>) -> Result<Self> {
        if exact.len() != self.empirical.len() {
            return Err(Error::DimensionMismatch {
                expected: self.empirical.len(),
                got: exact.len(),
            });
        }
        let n = self.n_traj as f64;
        let z: Vec<f64> = self
            .empirical
            .iter()
            .zip(&self.std_errors)
            .zip(&exact)
            .map(|((&e, &se), &x)| {
                let diff = e - x;
                let se = if se > 0.0 { se } else { (x * (1.0 - x) / n).abs().sqrt() };
                if diff == 0.0 {
                    0.0
                } else if se > 0.0 {
                    diff / se
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        self.max_abs_z = Some(z.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
        self.z_scores = Some(z);
        self.exact = Some(exact);
        Ok(self)
    }

    pub fn passes(&self) -> Option<bool> {
        self.max_abs_z.map(|z| z < Z_THRESHOLD)
    }
}

/// Runs `n_traj` ASEP trajectories started from samples of `mu^{x0}` and
/// compares site densities at `t` with the dual-side exact profile. With
/// `reference = false` no exact profile is computed (exploratory runs).
#[allow(clippy::too_many_arguments)]
pub fn compare_empirical_exact<T: Scalar>(
    rates: &Rates<T>,
    lat: &Lattice,
    profile: &ShockProfile<T>,
    x0: &ShockPositions,
    t: T,
    n_traj: u64,
    seed: u64,
    reference: bool,
    limits: &Limits,
) -> Result<EnsembleStats> {
    limits.check_sites(lat.len())?;
    check_time(t)?;
    if n_traj == 0 {
        return Err(Error::invalid("n_traj must be positive"));
    }
    let init: Vec<f64> = profile.site_factors(x0, lat)?.iter().map(|v| v.c1.as_f64()).collect();
    let r64 = rates.to_f64();
    r64.validate()?;
    let tf = t.as_f64();
    let finals: Vec<u64> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, k);
            let start = sample_product(&init, &mut rng)?;
            Ok(run_asep(&r64, lat, start.bits(), tf, &mut rng, seed, k, SimOptions::default()).final_bits(lat))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; lat.len()];
    for b in finals {
        for (j, c) in counts.iter_mut().enumerate() {
            *c += u64::from(b & lat.mask(j) != 0);
        }
    }
    let stats = EnsembleStats::from_counts(&counts, n_traj, tf);
    if !reference {
        return Ok(stats);
    }
    let tol = T::lit(1e-12);
    let cmp = evolve_and_compare(rates, lat, profile, x0, t, tol, limits)?;
    let exact = site_densities(&cmp.rhs, lat)?.iter().map(|x| x.as_f64()).collect();
    stats.with_reference(exact)
}

impl Trajectory {
    fn final_bits(&self, lat: &Lattice) -> u64 {
        match &self.final_state {
            State::Asep(occ) => occ
                .iter()
                .enumerate()
                .filter(|(_, &o)| o == 1)
                .fold(0, |b, (j, _)| b | lat.mask(j)),
            State::Shock(_) => 0,
        }
    }

    /// Final ASEP configuration, if this is an ASEP trajectory.
    pub fn final_configuration(&self) -> Option<Configuration> {
        match &self.final_state {
            State::Asep(occ) => Configuration::from_occupations(occ).ok(),
            State::Shock(_) => None,
        }
    }
}

/// Histogram over ASEP configurations at `t` from a fixed initial state.
pub fn asep_state_histogram<T: Scalar>(rates: &Rates<T>, lat: &Lattice, init: &Configuration, t: T, n_traj: u64, seed: u64) -> Result<EnsembleStats> {
    let r64 = rates.to_f64();
    r64.validate()?;
    check_time(t)?;
    let tf = t.as_f64();
    let finals: Vec<usize> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, k);
            let tr = run_asep(&r64, lat, init.bits(), tf, &mut rng, seed, k, SimOptions::default());
            tr.final_configuration().map(|c| config_index(&c)).unwrap_or(0)
        })
        .collect();
    let mut counts = vec![0u64; lat.num_configs()];
    for i in finals {
        counts[i] += 1;
    }
    let mut s = EnsembleStats::from_counts(&counts, n_traj, tf);
    s.histogram = Some(counts);
    Ok(s)
}

/// Histogram over shock states (colex rank) at `t` from `x0`.
#[allow(clippy::too_many_arguments)]
pub fn shock_histogram<T: Scalar>(
    profile: &ShockProfile<T>,
    rates: &Rates<T>,
    lat: &Lattice,
    x0: &ShockPositions,
    t: T,
    n_traj: u64,
    seed: u64,
) -> Result<EnsembleStats> {
    let sr = shock_rates_f64(profile, rates)?;
    check_time(t)?;
    let idx = DualStateIndex::new(lat.len(), sr.n())?;
    let tf = t.as_f64();
    let finals: Vec<usize> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, k);
            let tr = run_shock(&sr, lat, x0, tf, &mut rng, seed, k, SimOptions::default())?;
            match tr.final_state {
                State::Shock(x) => ShockPositions::new(x, lat)?.rank(lat),
                State::Asep(_) => unreachable!(),
            }
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; idx.len()];
    for i in finals {
        counts[i] += 1;
    }
    let mut s = EnsembleStats::from_counts(&counts, n_traj, tf);
    s.histogram = Some(counts);
    Ok(s)
}

/// Mean displacement of each shock over `[0, t]`, one sample per trajectory.
#[allow(clippy::too_many_arguments)]
pub fn shock_displacement<T: Scalar>(
    profile: &ShockProfile<T>,
    rates: &Rates<T>,
    lat: &Lattice,
    x0: &ShockPositions,
    t: T,
    n_traj: u64,
    seed: u64,
) -> Result<EnsembleStats> {
    let sr = shock_rates_f64(profile, rates)?;
    check_time(t)?;
    let tf = t.as_f64();
    let rows: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, k);
            let tr = run_shock(&sr, lat, x0, tf, &mut rng, seed, k, SimOptions::default())?;
            match tr.final_state {
                State::Shock(x) => Ok(x.iter().zip(x0.sites()).map(|(a, b)| (a - b) as f64).collect()),
                State::Asep(_) => unreachable!(),
            }
        })
        .collect::<Result<_>>()?;
    Ok(EnsembleStats::from_samples(&rows, tf))
}

/// Fraction of `[0, t]` spent in each shock state (colex rank), one sample
/// per trajectory started from a draw of `start` (a distribution over ranks).
#[allow(clippy::too_many_arguments)]
pub fn shock_occupation_fractions<T: Scalar>(
    profile: &ShockProfile<T>,
    rates: &Rates<T>,
    lat: &Lattice,
    start: &[f64],
    t: T,
    n_traj: u64,
    seed: u64,
) -> Result<EnsembleStats> {
    let sr = shock_rates_f64(profile, rates)?;
    check_time(t)?;
    let idx = DualStateIndex::new(lat.len(), sr.n())?;
    if start.len() != idx.len() {
        return Err(Error::DimensionMismatch {
            expected: idx.len(),
            got: start.len(),
        });
    }
    let tf = t.as_f64();
    if !(tf > 0.0) {
        return Err(Error::invalid("occupation fractions need t > 0"));
    }
    let opts = SimOptions {
        record_events: false,
        record_occupation: true,
    };
    let rows: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, k);
            let mut u = rng.random::<f64>();
            let mut pick = start.len() - 1;
            for (i, &p) in start.iter().enumerate() {
                if u < p {
                    pick = i;
                    break;
                }
                u -= p;
            }
            let x0 = ShockPositions::from_offsets(&idx.unrank(pick)?, lat)?;
            let tr = run_shock(&sr, lat, &x0, tf, &mut rng, seed, k, opts)?;
            let occ = tr.occupation.unwrap_or_default();
            Ok(occ.iter().map(|v| v / tf).collect())
        })
        .collect::<Result<_>>()?;
    Ok(EnsembleStats::from_samples(&rows, tf))
}

/// Configuration with index `i`, exposed for histogram consumers.
pub fn histogram_label(i: usize, lat: &Lattice) -> Result<String> {
    Ok(index_config(i, lat.len())?.to_bitstring())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asep::{build_w, solve_manifold, ManifoldSpec, OmegaChoice};
    use crate::duality::geometric_weights;
    use crate::eigen::stationary_dense;
    use crate::expm::expm_action;
    use crate::shock::{reversible_weights, WeightNorm};

    fn demo(n: usize) -> (Rates<f64>, ShockProfile<f64>) {
        let p = solve_manifold(2f64.sqrt(), 2f64.sqrt(), 1.0 / 3.0, &ManifoldSpec::new(n, 1).unwrap(), OmegaChoice::Symmetric).unwrap();
        let rates = p.rates().unwrap();
        let profile = ShockProfile::from_rates(&rates, n).unwrap();
        (rates, profile)
    }

    fn assert_z(s: &EnsembleStats) {
        assert!(s.max_abs_z.unwrap() < Z_THRESHOLD, "{s:?}");
    }

    #[test]
    fn zero_horizon_keeps_initial_state() {
        let (rates, profile) = demo(1);
        let lat = Lattice::with_len(4).unwrap();
        let init = Configuration::from_occupations(&[1, 0, 1, 1]).unwrap();
        let tr = gillespie_asep(&rates, &lat, &init, 0.0, 7, 0, SimOptions::default()).unwrap();
        assert_eq!(tr.final_state, tr.initial);
        assert_eq!(tr.n_events, 0);
        let x0 = ShockPositions::new(vec![2], &lat).unwrap();
        let tr = gillespie_shock(&profile, &rates, &lat, &x0, 0.0, 7, 0, SimOptions::default()).unwrap();
        assert_eq!(tr.final_state, State::Shock(vec![2]));
    }

    #[test]
    fn trajectories_are_valid_and_reproducible() {
        let (rates, _) = demo(1);
        let lat = Lattice::with_len(5).unwrap();
        let init = Configuration::from_occupations(&[0, 1, 1, 0, 1]).unwrap();
        let opts = SimOptions {
            record_events: true,
            record_occupation: true,
        };
        let a = gillespie_asep(&rates, &lat, &init, 5.0, 11, 3, opts).unwrap();
        let b = gillespie_asep(&rates, &lat, &init, 5.0, 11, 3, opts).unwrap();
        assert_eq!(a, b);
        assert!(a.n_events > 0);
        let w = build_w(&rates, &lat, &Limits::default()).unwrap();
        let mut bits = init.bits();
        let mut last = 0.0;
        for e in &a.events {
            assert!(e.time > last);
            last = e.time;
            let before = bits as usize;
            asep_apply(&lat, &mut bits, e.mv);
            assert!(w.get(before, bits as usize) > 0.0, "{:?}", e.mv);
        }
        assert_eq!(a.final_bits(&lat), bits);
        let occ: f64 = a.occupation.as_ref().unwrap().iter().sum();
        assert!((occ - 5.0).abs() < 1e-12);
        assert_eq!(a.event_log().lines().count(), a.events.len());
    }

    #[test]
    fn jammed_shocks_never_move() {
        let (rates, profile) = demo(4);
        let lat = Lattice::with_len(4).unwrap();
        let x0 = ShockPositions::new(vec![1, 2, 3, 4], &lat).unwrap();
        let tr = gillespie_shock(&profile, &rates, &lat, &x0, 100.0, 1, 0, SimOptions::default()).unwrap();
        assert_eq!(tr.n_events, 0);
    }

    #[test]
    fn shock_moves_respect_exclusion() {
        let (rates, profile) = demo(2);
        let lat = Lattice::with_len(5).unwrap();
        let x0 = ShockPositions::new(vec![2, 3], &lat).unwrap();
        let opts = SimOptions {
            record_events: true,
            record_occupation: false,
        };
        let tr = gillespie_shock(&profile, &rates, &lat, &x0, 20.0, 5, 0, opts).unwrap();
        let mut x = vec![2, 3];
        for e in &tr.events {
            shock_apply(&mut x, e.mv);
            assert!(ShockPositions::new(x.clone(), &lat).is_ok(), "{x:?}");
        }
    }

    #[test]
    fn rate_scaling_matches_event_counts() {
        let (rates, _) = demo(1);
        let lat = Lattice::with_len(4).unwrap();
        let init = Configuration::from_occupations(&[0, 1, 0, 1]).unwrap();
        let fast = rates.scaled(2.0);
        for k in 0..50 {
            let a = gillespie_asep(&rates, &lat, &init, 3.0, 99, k, SimOptions::default()).unwrap();
            let b = gillespie_asep(&fast, &lat, &init, 1.5, 99, k, SimOptions::default()).unwrap();
            assert_eq!(a.n_events, b.n_events);
            assert_eq!(a.final_state, b.final_state);
        }
        let n = 20_000u64;
        let counts = |r: &Rates<f64>, t: f64| -> Vec<f64> {
            (0..n)
                .into_par_iter()
                .map(|k| gillespie_asep(r, &lat, &init, t, 5, k, SimOptions::default()).unwrap().n_events as f64)
                .collect()
        };
        let a = counts(&rates, 2.0);
        let b = counts(&rates.scaled(3.0), 2.0 / 3.0);
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / n as f64;
            let s2 = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
            (m, s2 / n as f64)
        };
        let ((ma, va), (mb, vb)) = (stats(&a), stats(&b));
        assert!((ma - mb).abs() / (va + vb).sqrt() < Z_THRESHOLD);
    }

    #[test]
    fn two_site_stationary_frequencies() {
        let rates = Rates::<f64>::new(1.5, 0.5, 0.8, 0.6, 0.3, 0.2).unwrap();
        let lat = Lattice::with_len(2).unwrap();
        let limits = Limits::default();
        let w = build_w(&rates, &lat, &limits).unwrap();
        let pi = stationary_dense(&w, &limits).unwrap();
        let init = Configuration::empty(2);
        let s = asep_state_histogram(&rates, &lat, &init, 40.0, 100_000, 17).unwrap();
        assert_z(&s.with_reference(pi).unwrap());
    }

    #[test]
    fn two_site_transition_frequencies() {
        let rates = Rates::<f64>::new(1.5, 0.5, 0.8, 0.6, 0.3, 0.2).unwrap();
        let lat = Lattice::with_len(2).unwrap();
        let w = build_w(&rates, &lat, &Limits::default()).unwrap();
        for start in 0..4 {
            let mut e = vec![0.0; 4];
            e[start] = 1.0;
            let exact = expm_action(&w, &e, 0.7, 1e-13).unwrap();
            let init = index_config(start, 2).unwrap();
            let s = asep_state_histogram(&rates, &lat, &init, 0.7, 100_000, 23 + start as u64).unwrap();
            assert_z(&s.with_reference(exact).unwrap());
        }
    }

    #[test]
    fn sampling_noise_at_time_zero() {
        let (rates, profile) = demo(1);
        let lat = Lattice::with_len(6).unwrap();
        let x0 = ShockPositions::new(vec![3], &lat).unwrap();
        let s = compare_empirical_exact(&rates, &lat, &profile, &x0, 0.0, 100_000, 3, true, &Limits::default()).unwrap();
        assert_z(&s);
    }

    #[test]
    fn evolved_profile_matches_dual() {
        let (rates, profile) = demo(1);
        let lat = Lattice::with_len(6).unwrap();
        let x0 = ShockPositions::new(vec![3], &lat).unwrap();
        let t = 2.0 / rates.w();
        let s = compare_empirical_exact(&rates, &lat, &profile, &x0, t, 100_000, 2024, true, &Limits::default()).unwrap();
        assert_z(&s);
        let again = compare_empirical_exact(&rates, &lat, &profile, &x0, t, 1000, 2024, false, &Limits::default()).unwrap();
        assert!(again.max_abs_z.is_none());
    }

    #[test]
    fn shock_velocity_at_short_times() {
        let (rates, profile) = demo(1);
        let lat = Lattice::with_len(9).unwrap();
        let x0 = ShockPositions::new(vec![5], &lat).unwrap();
        let t = 0.05;
        let s = shock_displacement(&profile, &rates, &lat, &x0, t, 100_000, 8).unwrap();
        let v = shock_rates(&profile, &rates).unwrap().get(1).v;
        let z = (s.empirical[0] - v * t) / s.std_errors[0];
        assert!(z.abs() < Z_THRESHOLD, "{z}");
    }

    #[test]
    fn shock_histogram_reaches_geometric_weights() {
        let (rates, profile) = demo(1);
        let lat = Lattice::with_len(6).unwrap();
        let x0 = ShockPositions::new(vec![1], &lat).unwrap();
        let sr = shock_rates(&profile, &rates).unwrap();
        let exact = geometric_weights(&sr, &lat).unwrap();
        let s = shock_histogram(&profile, &rates, &lat, &x0, 60.0, 100_000, 31).unwrap();
        assert_z(&s.with_reference(exact).unwrap());
    }

    #[test]
    fn occupation_fractions_follow_reversible_weights() {
        let (rates, profile) = demo(2);
        let lat = Lattice::with_len(5).unwrap();
        let sr = shock_rates(&profile, &rates).unwrap();
        let pi = reversible_weights(&sr, &lat, WeightNorm::Sum).unwrap();
        let s = shock_occupation_fractions(&profile, &rates, &lat, &pi, 5.0, 40_000, 13).unwrap();
        assert_z(&s.with_reference(pi).unwrap());
    }

    #[test]
    fn ensembles_are_deterministic() {
        let (rates, profile) = demo(1);
        let lat = Lattice::with_len(5).unwrap();
        let x0 = ShockPositions::new(vec![2], &lat).unwrap();
        let run = || compare_empirical_exact(&rates, &lat, &profile, &x0, 1.0, 5000, 77, false, &Limits::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        assert_eq!(run(), pool.install(run));
        let h = || shock_histogram(&profile, &rates, &lat, &x0, 1.0, 5000, 9).unwrap();
        assert_eq!(h(), pool.install(h));
    }
}
