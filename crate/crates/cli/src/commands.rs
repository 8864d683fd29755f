//! Subcommand bodies. Each returns the files it wants written; nothing touches
//! the output directory until the command has finished.

use anyhow::{bail, Context, Result};
use asep_core::asep::{manifold_residuals, ManifoldCheck, ManifoldSpec};
use asep_core::duality::{
    corollary_identities, dual_transition_row, evolve_and_compare, invariant_measure, spectrum_containment,
    total_variation, verify_reverse_duality, CorollaryResiduals, DualityReport,
};
use asep_core::eigen::stationary_dense;
use asep_core::mc::{compare_empirical_exact, shock_histogram, EnsembleStats, Z_THRESHOLD};
use asep_core::measures::{shock_measure_vector, site_densities};
use asep_core::shock::{build_q_from_rates, reversible_weights, rw_propagator, shock_rates, ShockRate, WeightNorm};
use asep_core::xxz::{integrability_check, xxz_from_rates, xxz_residual, IntegrabilityCheck, XXZParams};
use asep_core::{build_w, expm_action, BoundaryParametrization, DualStateIndex, Limits, ShockPositions, ShockProfile};
use serde::Serialize;

use crate::config::{ExperimentConfig, Resolved};
use crate::output::Outputs;

fn state_label(xs: &ShockPositions) -> String {
    xs.sites().iter().map(i64::to_string).collect::<Vec<_>>().join(";")
}

fn all_states(res: &Resolved) -> Result<Vec<ShockPositions>> {
    let idx = DualStateIndex::new(res.lattice.len(), res.spec.n)?;
    idx.iter()
        .map(|o| Ok(ShockPositions::from_offsets(&o, &res.lattice)?))
        .collect()
}

fn site_of(res: &Resolved, j: usize) -> i64 {
    res.lattice.l_minus() + j as i64
}

#[derive(Serialize)]
struct QuantityRow<'a> {
    quantity: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct ShockRateRow {
    shock: usize,
    quantity: &'static str,
    value: f64,
}

fn shock_rate_rows(rates: &[ShockRate<f64>]) -> Vec<ShockRateRow> {
    let mut rows = Vec::new();
    for (i, s) in rates.iter().enumerate() {
        for (quantity, value) in [
            ("d_l", s.d_l),
            ("d_r", s.d_r),
            ("d", s.d),
            ("velocity", s.v),
            ("diffusion", s.diffusion),
        ] {
            rows.push(ShockRateRow {
                shock: i + 1,
                quantity,
                value,
            });
        }
    }
    rows
}

#[derive(Serialize)]
struct ManifoldReport {
    config: ExperimentConfig,
    manifold: ManifoldCheck<f64>,
    on_manifold: bool,
    on_b_n: bool,
    manifold_tol: f64,
    warning: Option<String>,
    parametrization: Option<BoundaryParametrization<f64>>,
    bulk_densities: Vec<f64>,
    shock_densities: Vec<f64>,
    shock_rates: Vec<ShockRate<f64>>,
    corollary: Option<CorollaryResiduals<f64>>,
}

pub fn check_manifold(res: &Resolved, out: &mut Outputs) -> Result<String> {
    let tol = res.config.experiment.manifold_tol;
    let check = manifold_residuals(&res.rates, &res.spec)?;
    let profile = ShockProfile::from_rates(&res.rates, res.spec.n)?;
    let sr = shock_rates(&profile, &res.rates)?;
    let on_b_n = check.on_b_n(tol);
    let report = ManifoldReport {
        config: res.rerunnable(),
        manifold: check,
        on_manifold: check.on_manifold(tol),
        on_b_n,
        manifold_tol: tol,
        warning: res.spec.mpm_warning(&res.lattice),
        parametrization: res.parametrization,
        bulk_densities: profile.bulk().to_vec(),
        shock_densities: profile.shock().to_vec(),
        shock_rates: sr.shocks.clone(),
        corollary: if on_b_n { Some(corollary_identities(&profile, &res.rates)?) } else { None },
    };
    out.json("manifold.json", &report)?;
    out.csv(
        "manifold.csv",
        &[
            QuantityRow { quantity: "res_n", value: check.res_n },
            QuantityRow { quantity: "res_m", value: check.res_m },
            QuantityRow { quantity: "q2n", value: check.q2n },
            QuantityRow { quantity: "q2m_inv", value: check.q2m_inv },
        ],
    )?;
    out.csv("shock_rates.csv", &shock_rate_rows(&sr.shocks))?;
    let mut s = format!(
        "B_{}^{}: res_N = {:e}, res_M = {:e} -> {}",
        res.spec.n,
        res.spec.m,
        check.res_n,
        check.res_m,
        if report.on_manifold { "on manifold" } else { "off manifold" }
    );
    if let Some(p) = res.parametrization {
        s += &format!("\nomega_- = {}, omega_+ = {}, rho_+ = {}", p.omega_minus, p.omega_plus, p.rho_plus);
    }
    if let Some(w) = &report.warning {
        s += &format!("\nwarning: {w}");
    }
    Ok(s)
}

#[derive(Serialize)]
struct CheckRow {
    check: &'static str,
    t: Option<f64>,
    x0: Option<String>,
    value: f64,
    threshold: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    config: ExperimentConfig,
    duality: DualityReport,
    off_manifold: bool,
    evolution_max_err: f64,
    spectrum_max_gap: Option<f64>,
    xxz_residual: f64,
    integrability: IntegrabilityCheck<f64>,
    all_pass: bool,
    note: Option<String>,
}

pub fn verify(res: &Resolved, limits: &Limits, out: &mut Outputs) -> Result<String> {
    let ex = &res.config.experiment;
    let n = res.spec.n;
    let rep = verify_reverse_duality(&res.rates, &res.lattice, n, limits).context("reverse duality")?;
    let mut rows = vec![
        CheckRow {
            check: "duality",
            t: None,
            x0: None,
            value: rep.residual_duality,
            threshold: ex.tol,
            pass: rep.residual_duality < ex.tol,
        },
        CheckRow {
            check: "intertwining",
            t: None,
            x0: None,
            value: rep.residual_intertwine,
            threshold: ex.tol,
            pass: rep.residual_intertwine < ex.tol,
        },
    ];
    let profile = ShockProfile::from_rates(&res.rates, n)?;
    let mut evo_max = 0.0f64;
    for &t in &res.times {
        let cmp = evolve_and_compare(&res.rates, &res.lattice, &profile, &res.positions, t, ex.expm_tol, limits)
            .context("measure evolution")?;
        evo_max = evo_max.max(cmp.err);
        rows.push(CheckRow {
            check: "evolution",
            t: Some(t),
            x0: Some(state_label(&res.positions)),
            value: cmp.err,
            threshold: ex.evolution_tol,
            pass: cmp.err < ex.evolution_tol,
        });
    }
    let mut note = None;
    let spectrum = if n == 1 {
        let s = spectrum_containment(&res.rates, &res.lattice, limits).context("spectrum")?;
        rows.push(CheckRow {
            check: "spectrum",
            t: None,
            x0: None,
            value: s.max_gap,
            threshold: ex.evolution_tol,
            pass: s.max_gap < ex.evolution_tol,
        });
        Some(s.max_gap)
    } else {
        note = Some("spectrum containment is a single-shock statement; skipped for N > 1".into());
        None
    };
    let xr = xxz_residual(&res.rates, &res.lattice, limits).context("xxz transform")?;
    rows.push(CheckRow {
        check: "xxz",
        t: None,
        x0: None,
        value: xr,
        threshold: ex.tol,
        pass: xr < ex.tol,
    });
    let integ = integrability_check(&res.rates, &res.lattice, n)?;
    rows.push(CheckRow {
        check: "integrability",
        t: None,
        x0: None,
        value: integ.integrability.abs(),
        threshold: ex.tol,
        pass: integ.integrability.abs() < ex.tol,
    });
    let all_pass = rows.iter().all(|r| r.pass);
    let off = !rep.on_manifold;
    let summary = format!(
        "duality residual {:e}, intertwining {:e}, evolution {:e}, xxz {:e}{}; {}",
        rep.residual_duality,
        rep.residual_intertwine,
        evo_max,
        xr,
        if off { " [off-manifold]" } else { "" },
        if all_pass { "all checks pass" } else { "some checks fail" }
    );
    out.csv("verify_sweep.csv", &rows)?;
    out.json(
        "verify.json",
        &VerifyReport {
            config: res.rerunnable(),
            duality: rep,
            off_manifold: off,
            evolution_max_err: evo_max,
            spectrum_max_gap: spectrum,
            xxz_residual: xr,
            integrability: integ,
            all_pass,
            note,
        },
    )?;
    Ok(summary)
}

#[derive(Serialize)]
struct ProfileRow {
    t: f64,
    site: i64,
    asep: f64,
    dual: f64,
    abs_diff: f64,
}

#[derive(Serialize)]
struct MarginalRow {
    x0: String,
    site: i64,
    density: f64,
}

#[derive(Serialize)]
struct EvolveReport {
    config: ExperimentConfig,
    errors: Vec<(f64, f64)>,
    max_err: f64,
    pass: bool,
}

pub fn evolve(res: &Resolved, limits: &Limits, out: &mut Outputs) -> Result<String> {
    let ex = &res.config.experiment;
    let profile = ShockProfile::from_rates(&res.rates, res.spec.n)?;
    let mu0 = shock_measure_vector(&profile, &res.positions, &res.lattice)?.vector;
    let marg = site_densities(&mu0, &res.lattice)?;
    let label = state_label(&res.positions);
    let marginals: Vec<MarginalRow> = marg
        .iter()
        .enumerate()
        .map(|(j, &d)| MarginalRow {
            x0: label.clone(),
            site: site_of(res, j),
            density: d,
        })
        .collect();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for &t in &res.times {
        let cmp = evolve_and_compare(&res.rates, &res.lattice, &profile, &res.positions, t, ex.expm_tol, limits)?;
        let a = site_densities(&cmp.lhs, &res.lattice)?;
        let d = site_densities(&cmp.rhs, &res.lattice)?;
        for (j, (&x, &y)) in a.iter().zip(&d).enumerate() {
            rows.push(ProfileRow {
                t,
                site: site_of(res, j),
                asep: x,
                dual: y,
                abs_diff: (x - y).abs(),
            });
        }
        errors.push((t, cmp.err));
    }
    let max_err = errors.iter().fold(0.0f64, |m, e| m.max(e.1));
    out.csv("evolve_profile.csv", &rows)?;
    out.csv("shock_marginals.csv", &marginals)?;
    out.json(
        "evolve.json",
        &EvolveReport {
            config: res.rerunnable(),
            errors,
            max_err,
            pass: max_err < ex.evolution_tol,
        },
    )?;
    Ok(format!("max |lhs - rhs| over {} times: {max_err:e}", res.times.len()))
}

#[derive(Serialize)]
struct WeightRow {
    rank: usize,
    state: String,
    weight: f64,
}

#[derive(Serialize)]
struct DensityRow {
    site: i64,
    density: f64,
}

#[derive(Serialize)]
struct InvariantReport {
    config: ExperimentConfig,
    stationarity_residual: f64,
    oracle_tv: Option<f64>,
    pass: bool,
}

pub fn invariant(res: &Resolved, limits: &Limits, out: &mut Outputs) -> Result<String> {
    let ex = &res.config.experiment;
    let profile = ShockProfile::from_rates(&res.rates, res.spec.n)?;
    let inv = invariant_measure(&res.rates, &res.lattice, &profile, limits)?;
    let states = all_states(res)?;
    let weights: Vec<WeightRow> = states
        .iter()
        .zip(&inv.weights)
        .enumerate()
        .map(|(rank, (xs, &weight))| WeightRow {
            rank,
            state: state_label(xs),
            weight,
        })
        .collect();
    let dens: Vec<DensityRow> = site_densities(&inv.mu, &res.lattice)?
        .iter()
        .enumerate()
        .map(|(j, &density)| DensityRow {
            site: site_of(res, j),
            density,
        })
        .collect();
    let oracle_tv = if limits.check_dense_dim(res.lattice.num_configs()).is_ok() {
        let w = build_w(&res.rates, &res.lattice, limits)?;
        Some(total_variation(&inv.mu, &stationary_dense(&w, limits)?))
    } else {
        None
    };
    let pass = inv.stationarity_residual < ex.tol && oracle_tv.is_none_or(|tv| tv < ex.tol);
    out.csv("invariant_weights.csv", &weights)?;
    out.csv("invariant_densities.csv", &dens)?;
    out.json(
        "invariant.json",
        &InvariantReport {
            config: res.rerunnable(),
            stationarity_residual: inv.stationarity_residual,
            oracle_tv,
            pass,
        },
    )?;
    Ok(format!(
        "max |W^T mu| = {:e}{}",
        inv.stationarity_residual,
        oracle_tv.map_or(String::new(), |tv| format!(", TV to null-space oracle {tv:e}"))
    ))
}

#[derive(Serialize)]
struct PropagatorRow {
    t: f64,
    x: i64,
    y: i64,
    closed_form: f64,
    expm: f64,
    abs_diff: f64,
}

#[derive(Serialize)]
struct PropagatorReport {
    config: ExperimentConfig,
    max_diff: f64,
    max_normalization_err: f64,
    pass: bool,
}

pub fn propagator(res: &Resolved, limits: &Limits, out: &mut Outputs) -> Result<String> {
    if res.spec.n != 1 {
        bail!(crate::config::ConfigError(vec![format!(
            "propagator is defined for a single shock, got N = {}",
            res.spec.n
        )]));
    }
    let ex = &res.config.experiment;
    let profile = ShockProfile::from_rates(&res.rates, 1)?;
    let sr = shock_rates(&profile, &res.rates)?;
    let q = build_q_from_rates(&sr, &res.lattice, limits)?;
    let len = res.lattice.len();
    let mut times = vec![0.0];
    times.extend(res.times.iter().copied().filter(|&t| t > 0.0));
    let mut rows = Vec::new();
    let (mut max_diff, mut max_norm) = (0.0f64, 0.0f64);
    for &t in &times {
        for (i, x) in res.lattice.sites().enumerate() {
            let mut e = vec![0.0; len];
            e[i] = 1.0;
            let num = expm_action(&q, &e, t, ex.expm_tol)?;
            let mut total = 0.0;
            for (k, y) in res.lattice.sites().enumerate() {
                let p = rw_propagator(x, y, t, &sr, &res.lattice)?;
                total += p;
                max_diff = max_diff.max((p - num[k]).abs());
                rows.push(PropagatorRow {
                    t,
                    x,
                    y,
                    closed_form: p,
                    expm: num[k],
                    abs_diff: (p - num[k]).abs(),
                });
            }
            max_norm = max_norm.max((total - 1.0).abs());
        }
    }
    out.csv("propagator.csv", &rows)?;
    let pass = max_diff < ex.evolution_tol;
    out.json(
        "propagator.json",
        &PropagatorReport {
            config: res.rerunnable(),
            max_diff,
            max_normalization_err: max_norm,
            pass,
        },
    )?;
    Ok(format!("closed form vs expm: {max_diff:e}; normalization {max_norm:e}"))
}

#[derive(Serialize)]
struct SpectrumRow {
    p: usize,
    eps: f64,
    nearest_gap: f64,
}

#[derive(Serialize)]
struct SpectrumReport {
    config: ExperimentConfig,
    on_b_1: bool,
    max_gap: f64,
    pass: bool,
}

pub fn spectrum(res: &Resolved, limits: &Limits, out: &mut Outputs) -> Result<String> {
    let ex = &res.config.experiment;
    let s = spectrum_containment(&res.rates, &res.lattice, limits)?;
    let on = manifold_residuals(&res.rates, &ManifoldSpec::new(1, 1)?)?.on_manifold(ex.manifold_tol);
    let rows: Vec<SpectrumRow> = s
        .eps
        .iter()
        .zip(&s.gaps)
        .enumerate()
        .map(|(p, (&eps, &nearest_gap))| SpectrumRow { p, eps, nearest_gap })
        .collect();
    out.csv("spectrum.csv", &rows)?;
    out.json(
        "spectrum.json",
        &SpectrumReport {
            config: res.rerunnable(),
            on_b_1: on,
            max_gap: s.max_gap,
            pass: s.max_gap < ex.evolution_tol,
        },
    )?;
    Ok(format!(
        "largest distance from eps_p to spec(H): {:e}{}",
        s.max_gap,
        if on { "" } else { " [parameters not on B_1^1]" }
    ))
}

#[derive(Serialize)]
struct XxzReport {
    config: ExperimentConfig,
    params: XXZParams<f64>,
    residual: f64,
    integrability: IntegrabilityCheck<f64>,
    pass: bool,
}

pub fn xxz(res: &Resolved, limits: &Limits, out: &mut Outputs) -> Result<String> {
    let ex = &res.config.experiment;
    let params = xxz_from_rates(&res.rates, &res.lattice)?;
    let residual = xxz_residual(&res.rates, &res.lattice, limits)?;
    let integ = integrability_check(&res.rates, &res.lattice, res.spec.n)?;
    let p = params;
    out.csv(
        "xxz.csv",
        &[
            QuantityRow { quantity: "theta", value: p.theta },
            QuantityRow { quantity: "w", value: p.w },
            QuantityRow { quantity: "phi_minus", value: p.phi_minus },
            QuantityRow { quantity: "psi_minus", value: p.psi_minus },
            QuantityRow { quantity: "phi_plus", value: p.phi_plus },
            QuantityRow { quantity: "psi_plus", value: p.psi_plus },
            QuantityRow { quantity: "theta_minus", value: p.theta_minus },
            QuantityRow { quantity: "theta_plus", value: p.theta_plus },
            QuantityRow { quantity: "e0", value: p.e0 },
            QuantityRow { quantity: "residual", value: residual },
            QuantityRow { quantity: "integrability", value: integ.integrability },
        ],
    )?;
    out.json(
        "xxz.json",
        &XxzReport {
            config: res.rerunnable(),
            params,
            residual,
            integrability: integ,
            pass: residual < ex.tol,
        },
    )?;
    Ok(format!(
        "max |Q^-1 H Q - H_XXZ| = {residual:e}; integrability residual {:e}",
        integ.integrability
    ))
}

#[derive(Serialize)]
struct SimDensityRow {
    t: f64,
    site: i64,
    empirical: f64,
    std_error: f64,
    exact: Option<f64>,
    z: Option<f64>,
}

#[derive(Serialize)]
struct SimHistogramRow {
    t: f64,
    state: String,
    count: u64,
    frequency: f64,
    std_error: f64,
    exact: f64,
    z: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    config: ExperimentConfig,
    n_traj: u64,
    seed: u64,
    reference: bool,
    densities: Vec<EnsembleStats>,
    histograms: Vec<EnsembleStats>,
    max_abs_z: Option<f64>,
    z_threshold: f64,
    note: String,
}

pub fn simulate(res: &Resolved, limits: &Limits, out: &mut Outputs) -> Result<String> {
    let ex = &res.config.experiment;
    let n = res.spec.n;
    let on = manifold_residuals(&res.rates, &ManifoldSpec::new(n, 1)?)?.on_manifold(ex.manifold_tol);
    let profile = ShockProfile::from_rates(&res.rates, n)?;
    let sr = shock_rates(&profile, &res.rates)?;
    let states = all_states(res)?;
    let mut drows = Vec::new();
    let mut hrows = Vec::new();
    let mut dstats = Vec::new();
    let mut hstats = Vec::new();
    for (k, &t) in res.times.iter().enumerate() {
        let seed = ex.seed.wrapping_add(k as u64);
        let s = compare_empirical_exact(&res.rates, &res.lattice, &profile, &res.positions, t, ex.n_traj, seed, on, limits)?;
        for j in 0..res.lattice.len() {
            drows.push(SimDensityRow {
                t,
                site: site_of(res, j),
                empirical: s.empirical[j],
                std_error: s.std_errors[j],
                exact: s.exact.as_ref().map(|e| e[j]),
                z: s.z_scores.as_ref().map(|z| z[j]),
            });
        }
        dstats.push(s);
        let exact = dual_transition_row(&sr, &res.lattice, &res.positions, t, ex.expm_tol, limits)?;
        let h = shock_histogram(&profile, &res.rates, &res.lattice, &res.positions, t, ex.n_traj, seed ^ 0x5eed)?
            .with_reference(exact)?;
        if let (Some(counts), Some(exact), Some(z)) = (&h.histogram, &h.exact, &h.z_scores) {
            for (i, xs) in states.iter().enumerate() {
                hrows.push(SimHistogramRow {
                    t,
                    state: state_label(xs),
                    count: counts[i],
                    frequency: h.empirical[i],
                    std_error: h.std_errors[i],
                    exact: exact[i],
                    z: z[i],
                });
            }
        }
        hstats.push(h);
    }
    let max_z = dstats
        .iter()
        .chain(hstats.iter())
        .filter_map(|s| s.max_abs_z)
        .fold(None, |m: Option<f64>, z| Some(m.map_or(z, |m| m.max(z))));
    let comparisons: usize = dstats.iter().chain(hstats.iter()).filter(|s| s.max_abs_z.is_some()).map(|s| s.comparisons).sum();
    let note = format!(
        "|z| < {Z_THRESHOLD} per comparison, {comparisons} comparisons, no Bonferroni correction{}",
        if on { "" } else { "; off-manifold: ASEP densities are exploratory, no exact reference" }
    );
    let pi = reversible_weights(&sr, &res.lattice, WeightNorm::Sum)?;
    let stationary: Vec<WeightRow> = states
        .iter()
        .zip(pi)
        .enumerate()
        .map(|(rank, (xs, weight))| WeightRow {
            rank,
            state: state_label(xs),
            weight,
        })
        .collect();
    out.csv("simulate_densities.csv", &drows)?;
    out.csv("simulate_shock_histogram.csv", &hrows)?;
    out.csv("simulate_shock_stationary.csv", &stationary)?;
    out.json(
        "simulate.json",
        &SimulateReport {
            config: res.rerunnable(),
            n_traj: ex.n_traj,
            seed: ex.seed,
            reference: on,
            densities: dstats,
            histograms: hstats,
            max_abs_z: max_z,
            z_threshold: Z_THRESHOLD,
            note: note.clone(),
        },
    )?;
    Ok(format!(
        "{} trajectories per time; max |z| = {}; {note}",
        ex.n_traj,
        max_z.map_or("n/a".into(), |z| format!("{z:.3}"))
    ))
}
