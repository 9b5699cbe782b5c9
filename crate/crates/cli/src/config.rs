//! Scenario files: TOML with a versioned `schema` field. Every preset-dependent
//! default is filled in by [`parse_scenario_str`], so the echoed scenario is
//! complete and re-parses to an equal value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use mpf_core::continuous_filter::{step_count, ContinuousScenario, PathBundle};
use mpf_core::discrete_filter::{DiscreteScenario, Integrator};
use mpf_core::dynamics::{Coefficient, ContinuousObsModel, DiffusionModel, DiscreteObsModel, Sensor};
use mpf_core::families::{MixtureCoords, MixtureFamily, WeightRule};
use mpf_core::oracles::{GridScheme, InitialLaw};
use mpf_core::quad::QuadratureSpec;

use crate::error::CliError;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// f = -alpha x, b(x) = h(x) = x.
    LinearOu,
    /// f = -alpha x, b(x) = h(x) = x^3.
    CubicSensor,
    /// f = x - x^3, b(x) = h(x) = x.
    BimodalDrift,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::LinearOu => "linear-ou",
            Preset::CubicSensor => "cubic-sensor",
            Preset::BimodalDrift => "bimodal-drift",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Mpf,
    Galerkin,
    Particle,
    Grid,
    Kalman,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Mpf => "mpf",
            Engine::Galerkin => "galerkin",
            Engine::Particle => "particle",
            Engine::Grid => "grid",
            Engine::Kalman => "kalman",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Engine::Mpf, Engine::Galerkin, Engine::Particle, Engine::Grid, Engine::Kalman]
            .into_iter()
            .find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub preset: Preset,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    /// Polynomial drift coefficients in x (constant first); overrides the preset drift.
    pub drift: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationSpec {
    pub mode: Mode,
    /// Polynomial coefficients per channel; discrete mode takes one channel.
    pub sensors: Option<Vec<Vec<f64>>>,
    /// Discrete observation noise variance; 2 for the OU presets, 0.5 otherwise.
    pub r: Option<f64>,
    /// Spacing of discrete observations.
    pub interval: f64,
    /// Path step for continuous mode; Euler-Maruyama step of the simulated signal.
    pub dt: f64,
    pub horizon: Option<f64>,
}

impl Default for ObservationSpec {
    fn default() -> Self {
        ObservationSpec { mode: Mode::Discrete, sensors: None, r: None, interval: 0.1, dt: 1e-3, horizon: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSpec {
    /// Gaussian components as [mean, variance].
    pub components: Option<Vec<[f64; 2]>>,
    /// First m mixture weights; uniform when absent from the preset and the file.
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthSpec {
    /// Initial signal value; drawn from the initial mixture per seed when absent.
    pub x0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadKind {
    #[default]
    Grid,
    GaussHermite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSpec {
    pub kind: QuadKind,
    pub nodes: usize,
    /// Explicit [lo, hi] for grid rules; the basis hints decide otherwise.
    pub bounds: Option<[f64; 2]>,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { kind: QuadKind::Grid, nodes: mpf_core::quad::DEFAULT_GRID_NODES, bounds: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorKind {
    #[default]
    Exact,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRuleSpec {
    #[default]
    Reweighted,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSpec {
    pub kind: IntegratorKind,
    /// RK4 step as a fraction of the prediction interval.
    pub delta_fraction: f64,
    /// Recorded sub-intervals per observation interval (discrete mode).
    pub substeps: usize,
    /// Record every this many path steps (continuous mode).
    pub record_every: usize,
    pub weight_rule: WeightRuleSpec,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec {
            kind: IntegratorKind::Exact,
            delta_fraction: 1e-3,
            substeps: 1,
            record_every: 1,
            weight_rule: WeightRuleSpec::Reweighted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeSpec {
    Explicit,
    #[default]
    CrankNicolson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub dt: f64,
    pub scheme: SchemeSpec,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lo: -6.0, hi: 6.0, nodes: 601, dt: 1e-3, scheme: SchemeSpec::CrankNicolson }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub engines: Vec<Engine>,
    pub seeds: Vec<u64>,
    pub particles: usize,
    pub grid: GridSpec,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec { engines: vec![Engine::Mpf], seeds: vec![0], particles: 10_000, grid: GridSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub observation: ObservationSpec,
    #[serde(default)]
    pub basis: BasisSpec,
    #[serde(default)]
    pub truth: TruthSpec,
    #[serde(default)]
    pub quadrature: QuadSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub run: RunSpec,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Validation { field: field.into(), message: message.into() }
}

/// Means evenly spread over +-2 stationary sd, variance 0.4 sd^2, weights
/// proportional to N(mu; 0, 0.6 sd^2), so the mixture is close to N(0, sd^2).
fn stationary_basis(alpha: f64, sigma: f64) -> (Vec<[f64; 2]>, Vec<f64>) {
    let s2 = sigma * sigma / (2.0 * alpha);
    let sd = s2.sqrt();
    let n = 7;
    let means: Vec<f64> = (0..n).map(|i| -2.0 * sd + 4.0 * sd * i as f64 / (n - 1) as f64).collect();
    let w: Vec<f64> = means.iter().map(|&m| mpf_core::field::gaussian_pdf(m, 0.0, 0.6 * s2)).collect();
    let total: f64 = w.iter().sum();
    (means.iter().map(|&m| [m, 0.4 * s2]).collect(), w[..n - 1].iter().map(|v| v / total).collect())
}

impl Scenario {
    /// A complete scenario for a preset.
    pub fn preset(preset: Preset) -> Self {
        let mut s = Scenario {
            schema: SCHEMA,
            name: String::new(),
            model: ModelSpec { preset, alpha: None, sigma: None, drift: None },
            observation: ObservationSpec::default(),
            basis: BasisSpec::default(),
            truth: TruthSpec::default(),
            quadrature: QuadSpec::default(),
            integrator: IntegratorSpec::default(),
            run: RunSpec::default(),
        };
        s.materialize();
        s
    }

    /// Fills preset-dependent defaults that the file left out.
    fn materialize(&mut self) {
        if self.name.is_empty() {
            self.name = self.model.preset.name().to_string();
        }
        let m = &mut self.model;
        match m.preset {
            Preset::LinearOu | Preset::CubicSensor => {
                let alpha = *m.alpha.get_or_insert(1.0);
                m.sigma.get_or_insert(0.5);
                m.drift.get_or_insert_with(|| vec![0.0, -alpha]);
            }
            Preset::BimodalDrift => {
                m.sigma.get_or_insert(1.0);
                m.drift.get_or_insert_with(|| vec![0.0, 1.0, 0.0, -1.0]);
                self.truth.x0.get_or_insert(1.0);
            }
        }
        let sensor = match m.preset {
            Preset::CubicSensor => vec![0.0, 0.0, 0.0, 1.0],
            _ => vec![0.0, 1.0],
        };
        self.observation.sensors.get_or_insert_with(|| vec![sensor]);
        // with r = 0.5 the seven-component stationary basis leaves the simplex within a few observations
        let r = match m.preset {
            Preset::BimodalDrift => 0.5,
            _ => 2.0,
        };
        self.observation.r.get_or_insert(r);
        let horizon = match self.observation.mode {
            Mode::Discrete => 2.0,
            Mode::Continuous => 1.0,
        };
        self.observation.horizon.get_or_insert(horizon);
        if self.basis.components.is_none() {
            let (comps, theta) = match m.preset {
                Preset::BimodalDrift => (vec![[-0.9, 0.25], [0.9, 0.25]], vec![0.5]),
                _ => {
                    let (alpha, sigma) = (m.alpha.unwrap_or(1.0), m.sigma.unwrap_or(0.5));
                    if alpha > 0.0 && sigma > 0.0 {
                        stationary_basis(alpha, sigma)
                    } else {
                        (vec![[-0.5, 0.5], [0.5, 0.5]], vec![0.5])
                    }
                }
            };
            self.basis.components = Some(comps);
            self.basis.theta.get_or_insert(theta);
        }
        if self.basis.theta.is_none() {
            let k = self.basis.components.as_ref().map_or(0, Vec::len);
            if k > 0 {
                self.basis.theta = Some(vec![1.0 / k as f64; k - 1]);
            }
        }
    }

    pub fn components(&self) -> &[[f64; 2]] {
        self.basis.components.as_deref().unwrap_or(&[])
    }

    pub fn theta(&self) -> &[f64] {
        self.basis.theta.as_deref().unwrap_or(&[])
    }

    pub fn horizon(&self) -> f64 {
        self.observation.horizon.unwrap_or(0.0)
    }

    pub fn sigma(&self) -> f64 {
        self.model.sigma.unwrap_or(0.0)
    }

    pub fn sensors(&self) -> &[Vec<f64>] {
        self.observation.sensors.as_deref().unwrap_or(&[])
    }

    /// Checks referential validity; the error names the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA {
            return Err(invalid("schema", format!("unsupported version {} (expected {SCHEMA})", self.schema)));
        }
        let m = &self.model;
        if let Some(a) = m.alpha {
            if !a.is_finite() {
                return Err(invalid("model.alpha", "must be finite"));
            }
        }
        if !(self.sigma() >= 0.0 && self.sigma().is_finite()) {
            return Err(invalid("model.sigma", "must be finite and nonnegative"));
        }
        match &m.drift {
            Some(d) if !d.is_empty() && d.iter().all(|c| c.is_finite()) => {}
            _ => return Err(invalid("model.drift", "needs at least one finite coefficient")),
        }
        let obs = &self.observation;
        let sensors = self.sensors();
        if sensors.is_empty() {
            return Err(invalid("observation.sensors", "needs at least one channel"));
        }
        for (k, s) in sensors.iter().enumerate() {
            if s.is_empty() || s.iter().any(|c| !c.is_finite()) {
                return Err(invalid(format!("observation.sensors[{k}]"), "needs finite polynomial coefficients"));
            }
        }
        let horizon = self.horizon();
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("observation.horizon", "must be positive"));
        }
        if !(obs.dt > 0.0 && obs.dt <= horizon) {
            return Err(invalid("observation.dt", "must be positive and at most the horizon"));
        }
        match obs.mode {
            Mode::Discrete => {
                if sensors.len() != 1 {
                    return Err(invalid("observation.sensors", "discrete mode takes exactly one channel"));
                }
                if !obs.r.is_some_and(|r| r > 0.0 && r.is_finite()) {
                    return Err(invalid("observation.r", "must be positive"));
                }
                if !(obs.interval > 0.0) {
                    return Err(invalid("observation.interval", "must be positive"));
                }
                step_count(horizon, obs.interval).map_err(|_| {
                    invalid(
                        "observation.interval",
                        format!("{} does not divide observation.horizon = {horizon}", obs.interval),
                    )
                })?;
            }
            Mode::Continuous => {
                step_count(horizon, obs.dt).map_err(|_| {
                    invalid("observation.dt", format!("{} does not divide observation.horizon = {horizon}", obs.dt))
                })?;
            }
        }
        let comps = self.components();
        if comps.len() < 2 {
            return Err(invalid("basis.components", "needs at least two Gaussian components"));
        }
        for (i, [mu, v]) in comps.iter().enumerate() {
            if !mu.is_finite() {
                return Err(invalid(format!("basis.components[{i}][0]"), "mean must be finite"));
            }
            if !(*v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("basis.components[{i}][1]"), "variance must be positive"));
            }
        }
        let theta = self.theta();
        if theta.len() + 1 != comps.len() {
            return Err(invalid(
                "basis.theta",
                format!(
                    "has dimension {} but basis.components has {} entries (must be m = {})",
                    theta.len(),
                    comps.len(),
                    comps.len() - 1
                ),
            ));
        }
        if let Err(e) = MixtureCoords::new(theta.to_vec()) {
            return Err(invalid("basis.theta", e.to_string()));
        }
        if let Some(x0) = self.truth.x0 {
            if !x0.is_finite() {
                return Err(invalid("truth.x0", "must be finite"));
            }
        }
        let q = &self.quadrature;
        if q.nodes < 3 {
            return Err(invalid("quadrature.nodes", "needs at least 3 nodes"));
        }
        if let Some([lo, hi]) = q.bounds {
            if !(lo < hi) {
                return Err(invalid("quadrature.bounds", "lo must be below hi"));
            }
        }
        let ig = &self.integrator;
        if !(ig.delta_fraction > 0.0 && ig.delta_fraction <= 1.0) {
            return Err(invalid("integrator.delta_fraction", "must lie in (0, 1]"));
        }
        if ig.substeps == 0 {
            return Err(invalid("integrator.substeps", "must be at least 1"));
        }
        if ig.record_every == 0 {
            return Err(invalid("integrator.record_every", "must be at least 1"));
        }
        let run = &self.run;
        if run.engines.is_empty() {
            return Err(invalid("run.engines", "needs at least one engine"));
        }
        for (i, e) in run.engines.iter().enumerate() {
            if run.engines[..i].contains(e) {
                return Err(invalid(format!("run.engines[{i}]"), format!("`{}` listed twice", e.name())));
            }
        }
        if run.seeds.is_empty() {
            return Err(invalid("run.seeds", "needs at least one seed"));
        }
        if run.engines.contains(&Engine::Particle) && run.particles < mpf_core::oracles::particle::MIN_PARTICLES {
            return Err(invalid(
                "run.particles",
                format!("needs at least {}", mpf_core::oracles::particle::MIN_PARTICLES),
            ));
        }
        let g = &run.grid;
        if !(g.lo < g.hi) {
            return Err(invalid("run.grid.lo", "must be below run.grid.hi"));
        }
        if g.nodes < 3 {
            return Err(invalid("run.grid.nodes", "needs at least 3 nodes"));
        }
        if !(g.dt > 0.0) {
            return Err(invalid("run.grid.dt", "must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn diffusion_model(&self) -> DiffusionModel {
        let drift = self.model.drift.clone().unwrap_or_else(|| vec![0.0]);
        DiffusionModel::new(Coefficient::polynomial(&drift), Coefficient::constant(self.sigma()), 1.0, true)
            .expect("unit noise covariance")
            .named(self.model.preset.name())
    }

    pub fn quadrature_spec(&self) -> QuadratureSpec {
        let q = &self.quadrature;
        match (q.kind, q.bounds) {
            (QuadKind::Grid, Some([lo, hi])) => QuadratureSpec::grid(lo, hi, q.nodes),
            (QuadKind::Grid, None) => QuadratureSpec { nodes: q.nodes, ..QuadratureSpec::default() },
            (QuadKind::GaussHermite, _) => QuadratureSpec::gauss_hermite(q.nodes),
        }
    }

    pub fn family(&self) -> mpf_core::Result<MixtureFamily> {
        let params: Vec<(f64, f64)> = self.components().iter().map(|c| (c[0], c[1])).collect();
        MixtureFamily::gaussian(&params, self.quadrature_spec())
    }

    pub fn theta0(&self) -> mpf_core::Result<MixtureCoords> {
        MixtureCoords::new(self.theta().to_vec())
    }

    /// The initial mixture as a law for sampling and for the oracles.
    pub fn initial_law(&self) -> mpf_core::Result<InitialLaw> {
        let hat = self.theta0()?.extended();
        InitialLaw::mixture(self.components().iter().zip(&hat).map(|(c, w)| (*w, c[0], c[1])).collect())
    }

    pub fn observation_times(&self) -> Vec<f64> {
        let n = step_count(self.horizon(), self.observation.interval).unwrap_or(0);
        (1..=n).map(|k| k as f64 * self.observation.interval).collect()
    }

    pub fn discrete_obs(&self) -> mpf_core::Result<DiscreteObsModel> {
        DiscreteObsModel::new(
            Sensor::polynomial(&self.sensors()[0]),
            self.observation.r.unwrap_or(0.5),
            self.observation_times(),
        )
    }

    pub fn continuous_obs(&self) -> mpf_core::Result<ContinuousObsModel> {
        ContinuousObsModel::new(self.sensors().iter().map(|s| Sensor::polynomial(s)).collect())
    }

    pub fn integrator(&self) -> Integrator {
        match self.integrator.kind {
            IntegratorKind::Exact => Integrator::Exact,
            IntegratorKind::Rk4 => Integrator::Rk4 { delta_fraction: self.integrator.delta_fraction },
        }
    }

    pub fn weight_rule(&self) -> WeightRule {
        match self.integrator.weight_rule {
            WeightRuleSpec::Reweighted => WeightRule::Reweighted,
            WeightRuleSpec::Literal => WeightRule::Literal,
        }
    }

    pub fn grid_scheme(&self) -> GridScheme {
        match self.run.grid.scheme {
            SchemeSpec::Explicit => GridScheme::Explicit,
            SchemeSpec::CrankNicolson => GridScheme::CrankNicolson,
        }
    }

    /// Initial signal value for a seed.
    pub fn x0(&self, seed: u64) -> mpf_core::Result<f64> {
        match self.truth.x0 {
            Some(x) => Ok(x),
            None => {
                let hat = self.theta0()?.extended();
                let params: Vec<(f64, f64)> = self.components().iter().map(|c| (c[0], c[1])).collect();
                mpf_core::continuous_filter::sample_gaussian_mixture(&hat, &params, seed)
            }
        }
    }

    pub fn discrete_scenario(&self, observations: Vec<f64>) -> mpf_core::Result<DiscreteScenario> {
        let mut sc = DiscreteScenario::new(
            self.family()?,
            self.theta0()?,
            self.diffusion_model(),
            self.discrete_obs()?,
            observations,
        );
        sc.integrator = self.integrator();
        sc.weight_rule = self.weight_rule();
        sc.substeps = self.integrator.substeps;
        Ok(sc)
    }

    pub fn continuous_scenario(&self, path: PathBundle) -> mpf_core::Result<ContinuousScenario> {
        let mut sc = ContinuousScenario::new(
            self.family()?,
            self.theta0()?,
            self.diffusion_model(),
            self.continuous_obs()?,
            path,
        );
        sc.record_every = self.integrator.record_every;
        Ok(sc)
    }
}

/// Parses and validates a scenario, filling every default.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, CliError> {
    let mut s: Scenario = toml::from_str(text)
        .map_err(|e| CliError::Parse { source_name: String::from("<input>"), message: e.to_string() })?;
    s.materialize();
    s.validate()?;
    Ok(s)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_scenario_str(&text).map_err(|e| match e {
        CliError::Parse { message, .. } => CliError::Parse { source_name: path.display().to_string(), message },
        other => other,
    })
}
