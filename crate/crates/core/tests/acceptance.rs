//! Acceptance gate: one test per criterion, each printing a single
//! `criterion k: PASS|FAIL` line with its measured figure.
//! Run with `--nocapture` to see the lines.

use std::time::Instant;

use asep_core::asep::{solve_manifold, BoundaryParametrization, ManifoldSpec, OmegaChoice, Rates};
use asep_core::duality::{
    boundary_eigen, corollary_identities, det, evolve_and_compare, geometric_weights, invariant_measure,
    spectrum_containment, total_variation, verify_projection_lemma, verify_reverse_duality, ProjectionInputs, Side,
};
use asep_core::eigen::stationary_dense;
use asep_core::expm::Evolver;
use asep_core::mc::{compare_empirical_exact, shock_histogram, Z_THRESHOLD};
use asep_core::shock::{
    build_q_from_rates, detailed_balance_residual, reversible_weights, rw_propagator_matrix, shock_rates, WeightNorm,
};
use asep_core::xxz::{integrability_check, xxz_residual};
use asep_core::{build_w, DualStateIndex, Lattice, Limits, ShockPositions, ShockProfile, TwoVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RHOS: [f64; 3] = [0.2, 1.0 / 3.0, 0.45];
const Q2S: [f64; 3] = [1.5, 2.0, 3.0];

fn report(k: usize, pass: bool, detail: String) {
    println!("criterion {k}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn solved(q2: f64, rho: f64, n: usize) -> BoundaryParametrization<f64> {
    solve_manifold(q2.sqrt(), 1.0, rho, &ManifoldSpec::new(n, 1).unwrap(), OmegaChoice::Symmetric).unwrap()
}

/// `(L, N, q^2, rho_-)` over 2 <= L <= 7, 1 <= N <= L.
fn grid() -> Vec<(usize, usize, f64, f64)> {
    let mut g = Vec::new();
    for len in 2..=7 {
        for n in 1..=len {
            for q2 in Q2S {
                for rho in RHOS {
                    g.push((len, n, q2, rho));
                }
            }
        }
    }
    g
}

fn states(lat: &Lattice, n: usize) -> Vec<ShockPositions> {
    DualStateIndex::new(lat.len(), n)
        .unwrap()
        .iter()
        .map(|o| ShockPositions::from_offsets(&o, lat).unwrap())
        .collect()
}

#[test]
fn criterion_01_reverse_duality() {
    let start = Instant::now();
    let limits = Limits::default();
    let mut worst = 0.0f64;
    for (len, n, q2, rho) in grid() {
        let rates = solved(q2, rho, n).rates().unwrap();
        let rep = verify_reverse_duality(&rates, &Lattice::with_len(len).unwrap(), n, &limits).unwrap();
        worst = worst.max(rep.residual_duality);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-10 && secs < 60.0;
    report(1, pass, format!("max |RW - Q^T R| = {worst:.3e} over {} cases in {secs:.1}s", grid().len()));
    assert!(pass);
}

#[test]
fn criterion_02_negative_controls() {
    let limits = Limits::default();
    let mut smallest = f64::INFINITY;
    let mut below = Vec::new();
    for (len, n, q2, rho) in grid() {
        let mut p = solved(q2, rho, n);
        p.omega_plus += 0.1;
        let rates = p.rates().unwrap();
        let rep = verify_reverse_duality(&rates, &Lattice::with_len(len).unwrap(), n, &limits).unwrap();
        smallest = smallest.min(rep.residual_duality);
        if rep.residual_duality <= 1e-4 {
            below.push((len, n, q2, rho, rep.residual_duality));
        }
    }
    let pass = below.is_empty();
    report(
        2,
        pass,
        format!(
            "min residual off manifold = {smallest:.3e}; {} of {} cases at or below 1e-4",
            below.len(),
            grid().len()
        ),
    );
    for (len, n, q2, rho, r) in &below {
        println!("    L={len} N={n} q^2={q2} rho_-={rho:.4}: {r:.3e}");
    }
    assert!(pass);
}

#[test]
fn criterion_03_propagator() {
    let limits = Limits::default();
    let (mut worst, mut delta0, mut norm) = (0.0f64, 0.0f64, 0.0f64);
    for q2 in Q2S {
        for rho in RHOS {
            let rates = solved(q2, rho, 1).rates().unwrap();
            let profile = ShockProfile::from_rates(&rates, 1).unwrap();
            let sr = shock_rates(&profile, &rates).unwrap();
            let w = rates.w();
            for len in 2..=10 {
                let lat = Lattice::with_len(len).unwrap();
                let q = build_q_from_rates(&sr, &lat, &limits).unwrap();
                let ev = Evolver::new(&q).unwrap();
                for tw in [0.0, 0.1, 1.0, 10.0] {
                    let t = tw / w;
                    let p = rw_propagator_matrix(t, &sr, &lat).unwrap();
                    for x in 0..len {
                        let mut e = vec![0.0; len];
                        e[x] = 1.0;
                        let num = ev.apply(&e, t, 1e-14).unwrap();
                        let row = &p[x * len..(x + 1) * len];
                        for y in 0..len {
                            worst = worst.max((row[y] - num[y]).abs());
                            if tw == 0.0 {
                                delta0 = delta0.max((row[y] - if x == y { 1.0 } else { 0.0 }).abs());
                            }
                        }
                        norm = norm.max((row.iter().sum::<f64>() - 1.0).abs());
                    }
                }
            }
        }
    }
    let pass = worst < 1e-9 && delta0 < 1e-9 && norm < 1e-11;
    report(3, pass, format!("closed form vs expm {worst:.3e}, t=0 delta {delta0:.3e}, normalization {norm:.3e}"));
    assert!(pass);
}

#[test]
fn criterion_04_measure_evolution() {
    let limits = Limits::default();
    let mut worst = 0.0f64;
    let mut count = 0;
    for q2 in Q2S {
        for rho in RHOS {
            for n in 1..=3 {
                let rates = solved(q2, rho, n).rates().unwrap();
                let profile = ShockProfile::from_rates(&rates, n).unwrap();
                for len in n.max(2)..=6 {
                    let lat = Lattice::with_len(len).unwrap();
                    for x0 in states(&lat, n) {
                        for tw in [0.5, 2.0] {
                            let t = tw / rates.w();
                            let cmp = evolve_and_compare(&rates, &lat, &profile, &x0, t, 1e-12, &limits).unwrap();
                            worst = worst.max(cmp.err);
                            count += 1;
                        }
                    }
                }
            }
        }
    }
    let pass = worst < 1e-8;
    report(4, pass, format!("max |lhs - rhs| = {worst:.3e} over {count} runs"));
    assert!(pass);
}

#[test]
fn criterion_05_invariant_measure() {
    let limits = Limits::default();
    let (mut stat, mut tv, mut geo) = (0.0f64, 0.0f64, 0.0f64);
    for q2 in Q2S {
        for rho in RHOS {
            for n in 1..=3 {
                let rates = solved(q2, rho, n).rates().unwrap();
                let profile = ShockProfile::from_rates(&rates, n).unwrap();
                for len in n.max(2)..=7 {
                    let lat = Lattice::with_len(len).unwrap();
                    let inv = invariant_measure(&rates, &lat, &profile, &limits).unwrap();
                    stat = stat.max(inv.stationarity_residual);
                    let w = build_w(&rates, &lat, &limits).unwrap();
                    tv = tv.max(total_variation(&inv.mu, &stationary_dense(&w, &limits).unwrap()));
                    if n == 1 {
                        let sr = shock_rates(&profile, &rates).unwrap();
                        let g = geometric_weights(&sr, &lat).unwrap();
                        for (a, b) in g.iter().zip(&inv.weights) {
                            geo = geo.max((a - b).abs() / b);
                        }
                    }
                }
            }
        }
    }
    let pass = stat < 1e-10 && tv < 1e-10 && geo < 1e-13;
    report(
        5,
        pass,
        format!("max |W^T mu| = {stat:.3e}, TV to null space {tv:.3e}, N=1 geometric form rel. {geo:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_reversibility() {
    let limits = Limits::default();
    let mut worst = 0.0f64;
    for (len, n, q2, rho) in grid() {
        let rates = solved(q2, rho, n).rates().unwrap();
        let profile = ShockProfile::from_rates(&rates, n).unwrap();
        let sr = shock_rates(&profile, &rates).unwrap();
        let lat = Lattice::with_len(len).unwrap();
        let q = build_q_from_rates(&sr, &lat, &limits).unwrap();
        let pi = reversible_weights(&sr, &lat, WeightNorm::Max).unwrap();
        worst = worst.max(detailed_balance_residual(&q, &pi).unwrap());
    }
    let pass = worst < 1e-12;
    report(6, pass, format!("max |pi_x Q_xy - pi_y Q_yx| = {worst:.3e}"));
    assert!(pass);
}

fn random_rates(rng: &mut ChaCha8Rng) -> Rates<f64> {
    loop {
        let r: f64 = rng.random_range(0.2..3.0);
        let l = rng.random_range(0.2..3.0);
        if (r - l).abs() < 0.05 {
            continue;
        }
        let mut b = || rng.random_range(0.1..2.0);
        return Rates::new(r, l, b(), b(), b(), b()).unwrap();
    }
}

#[test]
fn criterion_07_lemma_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut eig, mut proj, mut chains, mut control) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let rates = random_rates(&mut rng);
        for side in [Side::Left, Side::Right] {
            let e = boundary_eigen(&rates, side).unwrap();
            eig = eig.max(e.residual).max((e.eps - e.eps_alt).abs());
        }
        let a = TwoVector::density(rng.random_range(0.05..0.95));
        let z = a.fugacity().unwrap();
        let at = TwoVector::from_fugacity(rates.q2() * z);
        let b = loop {
            let b = TwoVector::from_fugacity(rng.random_range(0.05..5.0));
            if det(&b, &at).abs() > 1e-2 {
                break b;
            }
        };
        proj = proj.max(verify_projection_lemma(&ProjectionInputs::new(a, at, b), &rates).unwrap().max());
        let bad = TwoVector::from_fugacity(1.5 * rates.q2() * z);
        if det(&b, &bad).abs() > 1e-2 {
            let r = verify_projection_lemma(&ProjectionInputs::new(a, bad, b), &rates).unwrap();
            control = control.min(r.case_a.max(r.case_b).max(r.case_c));
        }

        let q2: f64 = if rng.random_bool(0.5) { rng.random_range(1.1..4.0) } else { rng.random_range(0.25..0.9) };
        let n = rng.random_range(1..=4);
        let p = solve_manifold(q2.sqrt(), rng.random_range(0.3..2.0), rng.random_range(0.05..0.95), &ManifoldSpec::new(n, 1).unwrap(), OmegaChoice::Symmetric)
            .unwrap();
        let mrates = p.rates().unwrap();
        let profile = ShockProfile::from_rates(&mrates, n).unwrap();
        chains = chains.max(corollary_identities(&profile, &mrates).unwrap().max());
    }
    let pass = eig < 1e-12 && proj < 1e-12 && chains < 1e-12 && control > 1e-4;
    report(
        7,
        pass,
        format!("eigenvector {eig:.3e}, projection {proj:.3e}, chains {chains:.3e}, min stability control {control:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_spectrum_containment() {
    let limits = Limits::default();
    let mut worst = 0.0f64;
    for q2 in Q2S {
        for rho in RHOS {
            let rates = solved(q2, rho, 1).rates().unwrap();
            for len in 2..=8 {
                let s = spectrum_containment(&rates, &Lattice::with_len(len).unwrap(), &limits).unwrap();
                worst = worst.max(s.max_gap);
            }
        }
    }
    let pass = worst < 1e-8;
    report(8, pass, format!("max distance eps_p to spec(H) = {worst:.3e}"));
    assert!(pass);
}

#[test]
fn criterion_09_xxz() {
    let limits = Limits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sim = 0.0f64;
    for len in 2..=6 {
        for _ in 0..20 {
            let rates = random_rates(&mut rng);
            sim = sim.max(xxz_residual(&rates, &Lattice::with_len(len).unwrap(), &limits).unwrap());
        }
    }
    let mut integ = 0.0f64;
    for (len, n, q2, rho) in grid() {
        let rates = solved(q2, rho, n).rates().unwrap();
        let c = integrability_check(&rates, &Lattice::with_len(len).unwrap(), n).unwrap();
        integ = integ.max((c.integrability - c.manifold_log).abs()).max(c.integrability.abs());
    }
    let pass = sim < 1e-10 && integ < 1e-10;
    report(9, pass, format!("max |Q^-1 H Q - H_XXZ| = {sim:.3e}, integrability vs B_N {integ:.3e}"));
    assert!(pass);
}

#[test]
fn criterion_10_monte_carlo() {
    let start = Instant::now();
    let limits = Limits::default();
    let rates = solved(2.0, 1.0 / 3.0, 1).rates().unwrap();
    let profile = ShockProfile::from_rates(&rates, 1).unwrap();
    let lat = Lattice::with_len(6).unwrap();
    let x0 = ShockPositions::new(vec![3], &lat).unwrap();
    let t = 2.0 / rates.w();
    let dens = compare_empirical_exact(&rates, &lat, &profile, &x0, t, 100_000, 10, true, &limits).unwrap();
    let sr = shock_rates(&profile, &rates).unwrap();
    let exact = geometric_weights(&sr, &lat).unwrap();
    let hist = shock_histogram(&profile, &rates, &lat, &x0, 200.0 / rates.w(), 100_000, 11)
        .unwrap()
        .with_reference(exact)
        .unwrap();
    let (zd, zh) = (dens.max_abs_z.unwrap(), hist.max_abs_z.unwrap());
    let secs = start.elapsed().as_secs_f64();
    let pass = zd < Z_THRESHOLD && zh < Z_THRESHOLD && secs < 300.0;
    report(10, pass, format!("max |z| densities {zd:.2}, stationary histogram {zh:.2} ({secs:.1}s)"));
    assert!(pass);
}
