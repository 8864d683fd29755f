//! JSON experiment configuration and its resolution into core types.

use std::path::Path;

use anyhow::{bail, Context, Result};
use asep_core::asep::{solve_manifold, BoundaryParametrization, ManifoldSpec, OmegaChoice, Rates};
use asep_core::{Lattice, ShockPositions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parametrization: Option<ParametrizationConfig>,
    pub shocks: ShocksConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub l_minus: i64,
    pub l_plus: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub r: f64,
    pub ell: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametrizationConfig {
    pub q: f64,
    pub w: f64,
    pub rho_minus: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_plus: Option<f64>,
    /// Manifold `B_N^M` onto which `rho_plus` and `omega_plus` are solved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve_for: Option<SolveFor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveFor {
    pub n: usize,
    #[serde(default = "one")]
    pub m: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShocksConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub m: usize,
    /// Absolute sites of the initial shocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Subcommand this config was written for; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Absolute times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Times in units of `1/w`; ignored when `times` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times_w: Option<Vec<f64>>,
    /// Pass/fail threshold for identity residuals.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Threshold for evolution and spectral checks.
    #[serde(default = "default_evolution_tol")]
    pub evolution_tol: f64,
    /// Truncation tolerance handed to uniformization.
    #[serde(default = "default_expm_tol")]
    pub expm_tol: f64,
    /// Relative tolerance for manifold membership.
    #[serde(default = "default_manifold_tol")]
    pub manifold_tol: f64,
    #[serde(default = "default_n_traj")]
    pub n_traj: u64,
    #[serde(default)]
    pub seed: u64,
    /// Added to `omega_plus` after solving; produces an off-manifold control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_omega_plus: Option<f64>,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_evolution_tol() -> f64 {
    1e-8
}
fn default_expm_tol() -> f64 {
    1e-12
}
fn default_manifold_tol() -> f64 {
    1e-10
}
fn default_n_traj() -> u64 {
    10_000
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: None,
            times: None,
            times_w: None,
            tol: default_tol(),
            evolution_tol: default_evolution_tol(),
            expm_tol: default_expm_tol(),
            manifold_tol: default_manifold_tol(),
            n_traj: default_n_traj(),
            seed: 0,
            perturb_omega_plus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Any of `json`, `csv`.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> String {
    "out".into()
}
fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

/// Demo instance: `L = 4`, one shock, `r = 2`, `l = 1`, `rho_- = 1/3`,
/// solved onto `B_1^1`.
pub fn demo() -> ExperimentConfig {
    ExperimentConfig {
        lattice: LatticeConfig { l_minus: 1, l_plus: 4 },
        rates: None,
        parametrization: Some(ParametrizationConfig {
            q: 2f64.sqrt(),
            w: 2f64.sqrt(),
            rho_minus: 1.0 / 3.0,
            rho_plus: None,
            omega_minus: None,
            omega_plus: None,
            solve_for: Some(SolveFor { n: 1, m: 1 }),
        }),
        shocks: ShocksConfig {
            n: 1,
            m: 1,
            positions: None,
        },
        experiment: ExperimentSection::default(),
        output: OutputConfig::default(),
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Config with every derived quantity fixed: rates, times and positions.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub lattice: Lattice,
    pub rates: Rates<f64>,
    pub parametrization: Option<BoundaryParametrization<f64>>,
    pub spec: ManifoldSpec,
    pub positions: ShockPositions,
    pub times: Vec<f64>,
}

impl Resolved {
    /// The resolved parameters as a rates-only config that reruns identically.
    pub fn rerunnable(&self) -> ExperimentConfig {
        let mut c = self.config.clone();
        let r = self.rates;
        c.rates = Some(RatesConfig {
            r: r.r,
            ell: r.ell,
            alpha: r.alpha,
            beta: r.beta,
            gamma: r.gamma,
            delta: r.delta,
        });
        c.parametrization = None;
        c.experiment.times = Some(self.times.clone());
        c.experiment.times_w = None;
        c.experiment.perturb_omega_plus = None;
        c.shocks.positions = Some(self.positions.sites().to_vec());
        c
    }
}

/// Checks every precondition up front and reports all violations together.
pub fn resolve(config: ExperimentConfig, kind: &str) -> Result<Resolved> {
    let mut errs: Vec<String> = Vec::new();
    if let Some(k) = &config.experiment.kind {
        if k != kind {
            errs.push(format!("experiment.kind is {k:?} but the subcommand is {kind:?}"));
        }
    }
    let lattice = Lattice::new(config.lattice.l_minus, config.lattice.l_plus)
        .map_err(|e| errs.push(format!("lattice: {e}")))
        .ok();
    let spec = ManifoldSpec::new(config.shocks.n, config.shocks.m)
        .map_err(|e| errs.push(format!("shocks: {e} (N >= 1 and 1 <= M <= N required)")))
        .ok();
    if let (Some(lat), Some(spec)) = (lattice, spec) {
        if let Err(e) = spec.bind(&lat) {
            errs.push(format!("shocks: {e}"));
        }
    }
    let ex = &config.experiment;
    for (name, v) in [
        ("tol", ex.tol),
        ("evolution_tol", ex.evolution_tol),
        ("expm_tol", ex.expm_tol),
        ("manifold_tol", ex.manifold_tol),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            errs.push(format!("experiment.{name} must be positive and finite, got {v}"));
        }
    }
    for t in ex.times.iter().chain(ex.times_w.iter()).flatten() {
        if !(*t >= 0.0 && t.is_finite()) {
            errs.push(format!("experiment times must be finite and >= 0, got {t}"));
        }
    }
    if ex.n_traj == 0 {
        errs.push("experiment.n_traj must be positive".into());
    }
    for f in &config.output.formats {
        if f != "json" && f != "csv" {
            errs.push(format!("output.formats: unknown format {f:?} (json, csv)"));
        }
    }

    let mut parametrization = None;
    let rates = match (&config.rates, &config.parametrization) {
        (Some(_), Some(_)) => {
            errs.push("give exactly one of `rates` and `parametrization`, not both".into());
            None
        }
        (None, None) => {
            errs.push("give exactly one of `rates` and `parametrization`".into());
            None
        }
        (Some(r), None) => {
            if ex.perturb_omega_plus.is_some() {
                errs.push("experiment.perturb_omega_plus needs a parametrization".into());
            }
            Rates::new(r.r, r.ell, r.alpha, r.beta, r.gamma, r.delta)
                .map_err(|e| errs.push(format!("rates: {e}")))
                .ok()
        }
        (None, Some(p)) => match resolve_parametrization(p, ex.perturb_omega_plus) {
            Ok(bp) => {
                parametrization = Some(bp);
                bp.rates().map_err(|e| errs.push(format!("parametrization: {e}"))).ok()
            }
            Err(e) => {
                errs.extend(e);
                None
            }
        },
    };

    let positions = lattice.filter(|_| spec.is_some()).and_then(|lat| {
        let n = config.shocks.n;
        let sites = config.shocks.positions.clone().unwrap_or_else(|| {
            let start = lat.l_minus() + (lat.len().saturating_sub(n) / 2) as i64;
            (0..n as i64).map(|k| start + k).collect()
        });
        if sites.len() != n {
            errs.push(format!("shocks.positions has {} entries, N = {n}", sites.len()));
            return None;
        }
        ShockPositions::new(sites, &lat)
            .map_err(|e| errs.push(format!("shocks.positions: {e}")))
            .ok()
    });

    if !errs.is_empty() {
        bail!(ConfigError(errs));
    }
    let (lattice, rates, spec, positions) = (lattice.unwrap(), rates.unwrap(), spec.unwrap(), positions.unwrap());
    let w = rates.w();
    let times = match (&ex.times, &ex.times_w) {
        (Some(t), _) => t.clone(),
        (None, Some(tw)) => tw.iter().map(|x| x / w).collect(),
        (None, None) => vec![0.5 / w, 2.0 / w],
    };
    Ok(Resolved {
        config,
        lattice,
        rates,
        parametrization,
        spec,
        positions,
        times,
    })
}

fn resolve_parametrization(p: &ParametrizationConfig, perturb: Option<f64>) -> std::result::Result<BoundaryParametrization<f64>, Vec<String>> {
    let mut errs = Vec::new();
    let mut bp = match p.solve_for {
        Some(sf) => {
            if p.rho_plus.is_some() || p.omega_plus.is_some() {
                errs.push("parametrization: rho_plus and omega_plus are solved for; drop them or drop solve_for".into());
            }
            let spec = ManifoldSpec::new(sf.n, sf.m).map_err(|e| errs.push(format!("parametrization.solve_for: {e}")));
            let choice = p.omega_minus.map_or(OmegaChoice::Symmetric, OmegaChoice::FixedMinus);
            match spec {
                Ok(spec) if errs.is_empty() => solve_manifold(p.q, p.w, p.rho_minus, &spec, choice)
                    .map_err(|e| errs.push(format!("parametrization: {e}")))
                    .ok(),
                _ => None,
            }
        }
        None => match (p.rho_plus, p.omega_minus, p.omega_plus) {
            (Some(rho_plus), Some(omega_minus), Some(omega_plus)) => Some(BoundaryParametrization {
                q: p.q,
                w: p.w,
                rho_minus: p.rho_minus,
                rho_plus,
                omega_minus,
                omega_plus,
            }),
            _ => {
                errs.push("parametrization: without solve_for, rho_plus, omega_minus and omega_plus are all required".into());
                None
            }
        },
    };
    if let (Some(bp), Some(d)) = (bp.as_mut(), perturb) {
        bp.omega_plus += d;
    }
    if let Some(bp) = &bp {
        if let Err(e) = bp.validate() {
            errs.push(format!("parametrization: {e}"));
        }
    }
    match bp {
        Some(bp) if errs.is_empty() => Ok(bp),
        _ => Err(errs),
    }
}

/// All configuration problems found in one pass.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration:")?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}
