//! Mixture projection filter with discrete-time observations: an affine ODE
//! for the mixture weights between observations, and an exact Bayes correction
//! that multiplies every basis density by the likelihood.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;

use crate::continuous_filter::EXPLOSION_BOUND;
use crate::dynamics::{backward_samples, forward_samples, likelihood, DiffusionModel, DiscreteObsModel};
use crate::error::{Error, Result};
use crate::families::{
    bayes_update_basis, clip_to_simplex, posterior_weights_log, ClipEvent, MixtureCoords, MixtureFamily, WeightRule,
};
use crate::linalg::{expm, Matrix};
use crate::rng::{engine, normal, stream};

/// dtheta/dt = B theta_hat = M theta + c for the current basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGenerator {
    pub b: Matrix,
    pub m: Matrix,
    pub c: Vec<f64>,
    pub generation: usize,
    pub t: f64,
}

impl PredictionGenerator {
    pub fn from_b(b: Matrix, generation: usize, t: f64) -> Self {
        let m = b.rows();
        let last = b.column(m);
        let mm = Matrix::from_fn(m, m, |i, j| b[(i, j)] - last[i]);
        PredictionGenerator { b, m: mm, c: last, generation, t }
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    /// M theta + c.
    pub fn rate(&self, theta: &[f64]) -> Vec<f64> {
        let mut r = self.m.matvec(theta);
        for (ri, ci) in r.iter_mut().zip(&self.c) {
            *ri += ci;
        }
        r
    }
}

/// <q_k, L u_j> for every j < m, k <= m, sampled on the family rule.
pub(crate) fn weak_generator_raw(fam: &MixtureFamily, model: &DiffusionModel, t: f64) -> Result<Matrix> {
    let rule = fam.rule();
    let m = fam.m();
    let lq =
        fam.components().iter().map(|c| backward_samples(model, c.field(), t, rule)).collect::<Result<Vec<_>>>()?;
    let q = fam.q_samples();
    let mut raw = Matrix::zeros(m, m + 1);
    for j in 0..m {
        let lu: Vec<f64> = lq[j].iter().zip(&lq[m]).map(|(a, b)| a - b).collect();
        for k in 0..=m {
            raw[(j, k)] = rule.dot(&q[k], &lu);
        }
    }
    Ok(raw)
}

/// Applies h^{-1} to every column of an m x (m+1) matrix.
pub(crate) fn solve_columns(fam: &MixtureFamily, raw: &Matrix) -> Matrix {
    let (m, n) = (raw.rows(), raw.cols());
    let mut out = Matrix::zeros(m, n);
    for k in 0..n {
        let col = fam.metric().solve(&raw.column(k));
        for j in 0..m {
            out[(j, k)] = col[j];
        }
    }
    out
}

/// B = h^{-1} <L (q_{1:m} - q_{m+1}), q>.
pub fn assemble_prediction_generator(
    fam: &MixtureFamily,
    model: &DiffusionModel,
    t: f64,
) -> Result<PredictionGenerator> {
    let raw = weak_generator_raw(fam, model, t)?;
    Ok(PredictionGenerator::from_b(solve_columns(fam, &raw), fam.generation(), t))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Integrator {
    /// Exponential of the augmented matrix [[M, c], [0, 0]].
    #[default]
    Exact,
    /// Classical fourth-order Runge-Kutta with step `delta_fraction` times the interval.
    Rk4 { delta_fraction: f64 },
}

pub const DEFAULT_DELTA_FRACTION: f64 = 1e-3;

fn rk4_steps(delta_fraction: f64) -> Result<usize> {
    if !(delta_fraction > 0.0 && delta_fraction <= 1.0) {
        return Err(Error::validation(format!("integrator step fraction {delta_fraction} outside (0, 1]")));
    }
    Ok((1.0 / delta_fraction).ceil().max(1.0) as usize)
}

/// Solves dtheta/dt = M theta + c over `dt` without clipping.
pub fn predict_raw(theta0: &[f64], gen: &PredictionGenerator, dt: f64, integrator: Integrator) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::validation(format!("prediction interval must be positive, got {dt}")));
    }
    if theta0.len() != gen.dim() {
        return Err(Error::validation("coordinate dimension differs from the generator"));
    }
    let m = gen.dim();
    match integrator {
        Integrator::Exact => {
            let aug = Matrix::from_fn(m + 1, m + 1, |i, j| {
                if i == m {
                    0.0
                } else if j == m {
                    gen.c[i] * dt
                } else {
                    gen.m[(i, j)] * dt
                }
            });
            let e = expm(&aug)?;
            let mut x = theta0.to_vec();
            x.push(1.0);
            let y = e.matvec(&x);
            Ok(y[..m].to_vec())
        }
        Integrator::Rk4 { delta_fraction } => {
            let n = rk4_steps(delta_fraction)?;
            let h = dt / n as f64;
            let mut th = theta0.to_vec();
            for _ in 0..n {
                th = rk4_step(&th, h, |x| gen.rate(x));
            }
            Ok(th)
        }
    }
}

pub(crate) fn rk4_step(x: &[f64], h: f64, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
    let k1 = f(x);
    let k2 = f(&axpy(x, 0.5 * h, &k1));
    let k3 = f(&axpy(x, 0.5 * h, &k2));
    let k4 = f(&axpy(x, h, &k3));
    (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// Prediction followed by clipping into the simplex interior.
pub fn predict(
    theta0: &MixtureCoords,
    gen: &PredictionGenerator,
    dt: f64,
    integrator: Integrator,
) -> Result<(MixtureCoords, Vec<ClipEvent>)> {
    let mut th = predict_raw(theta0.theta(), gen, dt, integrator)?;
    let events = clip_to_simplex(&mut th)?;
    Ok((MixtureCoords::new(th)?, events))
}

/// Prediction for time-dependent coefficients: RK4 with the generator
/// reassembled at every stage time.
pub fn predict_time_varying(
    theta0: &MixtureCoords,
    fam: &MixtureFamily,
    model: &DiffusionModel,
    t0: f64,
    t1: f64,
    delta_fraction: f64,
) -> Result<(MixtureCoords, Vec<ClipEvent>)> {
    let dt = t1 - t0;
    if !(dt > 0.0) {
        return Err(Error::validation("prediction interval must be positive"));
    }
    let n = rk4_steps(delta_fraction)?;
    let h = dt / n as f64;
    let mut th = theta0.theta().to_vec();
    for s in 0..n {
        let t = t0 + h * s as f64;
        let g0 = assemble_prediction_generator(fam, model, t)?;
        let gh = assemble_prediction_generator(fam, model, t + 0.5 * h)?;
        let g1 = assemble_prediction_generator(fam, model, t + h)?;
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
        let k1 = g0.rate(&th);
        let k2 = gh.rate(&axpy(&th, 0.5 * h, &k1));
        let k3 = gh.rate(&axpy(&th, 0.5 * h, &k2));
        let k4 = g1.rate(&axpy(&th, h, &k3));
        for i in 0..th.len() {
            th[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let events = clip_to_simplex(&mut th)?;
    Ok((MixtureCoords::new(th)?, events))
}

/// Output of a correction step.
#[derive(Debug, Clone)]
pub struct Correction {
    pub theta: MixtureCoords,
    pub family: MixtureFamily,
    pub c: Vec<f64>,
    pub events: Vec<ClipEvent>,
}

/// Bayes correction at an observation: update every basis density and reweight.
pub fn correct(
    prior: &MixtureCoords,
    fam: &MixtureFamily,
    z: f64,
    obs: &DiscreteObsModel,
    t: f64,
    rule: WeightRule,
) -> Result<Correction> {
    if !z.is_finite() {
        return Err(Error::validation(format!("observation {z} is not finite")));
    }
    if prior.m() != fam.m() {
        return Err(Error::validation("coordinate dimension differs from the family"));
    }
    let psi = likelihood(z, obs, t);
    let up = bayes_update_basis(fam, &psi)?;
    let post = posterior_weights_log(&prior.extended(), &up.log_c, rule)?;
    let mut th = post.theta().to_vec();
    let events = clip_to_simplex(&mut th)?;
    Ok(Correction { theta: MixtureCoords::new(th)?, family: up.family, c: up.c, events })
}

/// What happened at a recorded step.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Clip { index: usize, value: f64 },
    Note(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterEvent {
    pub step: usize,
    pub time: f64,
    pub kind: EventKind,
}

/// Timestamped record of a filter run.
#[derive(Debug, Clone, Default)]
pub struct FilterTrajectory {
    pub times: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub generations: Vec<usize>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Drift projection residual at each recorded time.
    pub residuals: Vec<f64>,
    pub events: Vec<FilterEvent>,
    /// One family per generation, indexed by generation.
    pub families: Vec<MixtureFamily>,
}

impl FilterTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of events recorded at recorded step `step`.
    pub fn events_at(&self, step: usize) -> usize {
        self.events.iter().filter(|e| e.step == step).count()
    }

    pub fn clip_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Clip { .. })).count()
    }

    /// Trapezoidal time integral of the recorded drift residual.
    pub fn integrated_residual(&self) -> f64 {
        self.times.windows(2).zip(self.residuals.windows(2)).map(|(t, r)| 0.5 * (t[1] - t[0]) * (r[0] + r[1])).sum()
    }

    /// The family and extended weights of recorded step `k`.
    pub fn state(&self, k: usize) -> (&MixtureFamily, Vec<f64>) {
        let fam = &self.families[self.generations[k]];
        let mut hat = self.thetas[k].clone();
        hat.push(1.0 - hat.iter().sum::<f64>());
        (fam, hat)
    }

    pub(crate) fn push_clips(&mut self, step: usize, time: f64, clips: &[ClipEvent]) {
        for c in clips {
            self.events.push(FilterEvent { step, time, kind: EventKind::Clip { index: c.index, value: c.value } });
        }
    }
}

/// A filter run that stopped early, with everything recorded before the failure.
#[derive(Debug, Clone)]
pub struct FilterFailure {
    pub error: Error,
    pub trajectory: FilterTrajectory,
}

impl core::fmt::Display for FilterFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} (after {} recorded steps)", self.error, self.trajectory.len())
    }
}

/// L* q_k sampled on the family rule, for residual evaluation.
pub(crate) fn forward_component_samples(fam: &MixtureFamily, model: &DiffusionModel, t: f64) -> Result<Vec<Vec<f64>>> {
    fam.components().iter().map(|c| forward_samples(model, c.field(), t, fam.rule())).collect()
}

/// ||v - Pi v|| for v = sum_k theta_hat_k w_k given per-component samples w_k.
pub(crate) fn residual_of_combination(fam: &MixtureFamily, per_component: &[Vec<f64>], theta_hat: &[f64]) -> f64 {
    let n = fam.rule().len();
    let mut v = vec![0.0; n];
    for (w, s) in theta_hat.iter().zip(per_component) {
        for k in 0..n {
            v[k] += w * s[k];
        }
    }
    let c = fam.project_samples(&v);
    let r = fam.residual_samples(&v, &c);
    fam.rule().norm(&r)
}

/// Drift projection residual ||L* p - Pi L* p|| at (fam, theta).
pub fn prediction_residual(fam: &MixtureFamily, theta: &MixtureCoords, model: &DiffusionModel, t: f64) -> Result<f64> {
    let lq = forward_component_samples(fam, model, t)?;
    Ok(residual_of_combination(fam, &lq, &theta.extended()))
}

/// Inputs of a discrete-time filter run.
#[derive(Debug, Clone)]
pub struct DiscreteScenario {
    pub family: MixtureFamily,
    pub theta0: MixtureCoords,
    pub model: DiffusionModel,
    pub obs: DiscreteObsModel,
    pub t0: f64,
    /// One value per observation time; empty for a pure prediction run over `obs.times`.
    pub observations: Vec<f64>,
    pub integrator: Integrator,
    pub weight_rule: WeightRule,
    /// Recorded sub-intervals per prediction interval.
    pub substeps: usize,
}

impl DiscreteScenario {
    pub fn new(
        family: MixtureFamily,
        theta0: MixtureCoords,
        model: DiffusionModel,
        obs: DiscreteObsModel,
        observations: Vec<f64>,
    ) -> Self {
        DiscreteScenario {
            family,
            theta0,
            model,
            obs,
            t0: 0.0,
            observations,
            integrator: Integrator::Exact,
            weight_rule: WeightRule::Reweighted,
            substeps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta0.m() != self.family.m() {
            return Err(Error::validation(format!(
                "initial theta has dimension {} but the basis has {} components (expected m = {})",
                self.theta0.m(),
                self.family.m() + 1,
                self.family.m()
            )));
        }
        if !self.observations.is_empty() && self.observations.len() != self.obs.times.len() {
            return Err(Error::validation("observation values and times differ in length"));
        }
        if let Some(&first) = self.obs.times.first() {
            if !(first > self.t0) {
                return Err(Error::validation("first observation time must follow t0"));
            }
        }
        if self.substeps == 0 {
            return Err(Error::validation("substeps must be at least 1"));
        }
        Ok(())
    }
}

struct Cache {
    gen: PredictionGenerator,
    forward: Vec<Vec<f64>>,
}

fn cache_for(fam: &MixtureFamily, model: &DiffusionModel, t: f64) -> Result<Cache> {
    Ok(Cache { gen: assemble_prediction_generator(fam, model, t)?, forward: forward_component_samples(fam, model, t)? })
}

fn record(traj: &mut FilterTrajectory, fam: &MixtureFamily, theta: &MixtureCoords, t: f64, forward: &[Vec<f64>]) {
    let hat = theta.extended();
    let (mean, var) = fam.moments(&hat);
    traj.times.push(t);
    traj.thetas.push(theta.theta().to_vec());
    traj.generations.push(fam.generation());
    traj.means.push(mean);
    traj.variances.push(var);
    traj.residuals.push(residual_of_combination(fam, forward, &hat));
}

/// Alternates prediction and correction over the observation schedule.
pub fn run_discrete_filter(sc: &DiscreteScenario) -> core::result::Result<FilterTrajectory, FilterFailure> {
    let mut traj = FilterTrajectory::default();
    match run_inner(sc, &mut traj) {
        Ok(()) => Ok(traj),
        Err(error) => Err(FilterFailure { error, trajectory: traj }),
    }
}

fn run_inner(sc: &DiscreteScenario, traj: &mut FilterTrajectory) -> Result<()> {
    sc.validate()?;
    let model = &sc.model;
    let mut fam = sc.family.clone();
    let base_generation = fam.generation();
    let mut theta = sc.theta0.clone();
    let mut t = sc.t0;
    // generation numbers in the trajectory are relative to the input family
    let relabel = |f: &MixtureFamily| -> Result<MixtureFamily> {
        MixtureFamily::with_generation(f.components().to_vec(), f.spec().clone(), f.generation() - base_generation)
    };
    fam = relabel(&fam)?;
    traj.families.push(fam.clone());
    let mut cache = cache_for(&fam, model, t)?;
    {
        let mut th = theta.theta().to_vec();
        let clips = clip_to_simplex(&mut th)?;
        traj.push_clips(0, t, &clips);
        theta = MixtureCoords::new(th)?;
    }
    record(traj, &fam, &theta, t, &cache.forward);

    for (n, &tn) in sc.obs.times.iter().enumerate() {
        let h = (tn - t) / sc.substeps as f64;
        for s in 0..sc.substeps {
            let t_next = if s + 1 == sc.substeps { tn } else { t + h };
            let (next, clips) = if model.time_invariant {
                predict(&theta, &cache.gen, t_next - t, sc.integrator)?
            } else {
                let frac = match sc.integrator {
                    Integrator::Rk4 { delta_fraction } => delta_fraction,
                    Integrator::Exact => DEFAULT_DELTA_FRACTION,
                };
                predict_time_varying(&theta, &fam, model, t, t_next, frac)?
            };
            theta = next;
            t = t_next;
            let step = traj.len();
            traj.push_clips(step, t, &clips);
            if !model.time_invariant {
                cache.forward = forward_component_samples(&fam, model, t)?;
            }
            let is_last = s + 1 == sc.substeps;
            if !(is_last && !sc.observations.is_empty()) {
                record(traj, &fam, &theta, t, &cache.forward);
            }
        }
        if let Some(&z) = sc.observations.get(n) {
            let corr = correct(&theta, &fam, z, &sc.obs, t, sc.weight_rule)?;
            fam = corr.family;
            theta = corr.theta;
            traj.families.push(fam.clone());
            cache = cache_for(&fam, model, t)?;
            let step = traj.len();
            traj.push_clips(step, t, &corr.events);
            record(traj, &fam, &theta, t, &cache.forward);
        }
    }
    Ok(())
}

/// Signal values and noisy observations at `obs.times`, with the signal
/// advanced by Euler-Maruyama steps of at most `dt` from (t0, x0).
pub fn simulate_discrete_observations(
    model: &DiffusionModel,
    obs: &DiscreteObsModel,
    t0: f64,
    x0: f64,
    dt: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::validation("simulation step must be positive"));
    }
    let (mut t, mut x) = (t0, x0);
    let mut key = 0u64;
    let mut truth = Vec::with_capacity(obs.times.len());
    let mut zs = Vec::with_capacity(obs.times.len());
    for (n, &tn) in obs.times.iter().enumerate() {
        let steps = ((tn - t) / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = (tn - t) / steps as f64;
        for _ in 0..steps {
            let mut r = stream(seed, engine::TRUTH, key);
            key += 1;
            x += model.f(t, x) * h + model.sigma.eval(t, x) * (model.noise_cov * h).sqrt() * normal(&mut r);
            t += h;
            if !(x.abs() <= EXPLOSION_BOUND) {
                return Err(Error::Explosion { step: key as usize, value: x.abs() });
            }
        }
        t = tn;
        let mut r = stream(seed, engine::OBSERVATION, n as u64);
        truth.push(x);
        zs.push(obs.sensor.eval(t, x) + obs.r.sqrt() * normal(&mut r));
    }
    Ok((truth, zs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Coefficient, Sensor};
    use crate::quad::QuadratureSpec;

    fn two_gauss() -> MixtureFamily {
        MixtureFamily::gaussian(&[(-1.0, 1.0), (1.0, 1.0)], QuadratureSpec::default()).unwrap()
    }

    fn still() -> DiffusionModel {
        DiffusionModel::new(Coefficient::constant(0.0), Coefficient::constant(0.0), 1.0, true).unwrap()
    }

    #[test]
    fn affine_identity() {
        let fam = MixtureFamily::gaussian(&[(-1.0, 0.5), (0.0, 1.0), (1.5, 0.7)], QuadratureSpec::default()).unwrap();
        let gen = assemble_prediction_generator(&fam, &DiffusionModel::bimodal_drift(0.8), 0.0).unwrap();
        for &th in &[[0.1, 0.2], [0.5, 0.3], [0.0, 0.99]] {
            let hat = [th[0], th[1], 1.0 - th[0] - th[1]];
            let bh = gen.b.matvec(&hat);
            let r = gen.rate(&th);
            for i in 0..2 {
                assert!((bh[i] - r[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_dynamics() {
        let gen = assemble_prediction_generator(&two_gauss(), &still(), 0.0).unwrap();
        assert_eq!(gen.b.max_abs(), 0.0);
        let th = MixtureCoords::new(vec![0.3]).unwrap();
        let (out, ev) = predict(&th, &gen, 0.7, Integrator::Exact).unwrap();
        assert_eq!(out.theta(), &[0.3]);
        assert!(ev.is_empty());
    }

    #[test]
    fn symmetric_basis_keeps_half() {
        let gen = assemble_prediction_generator(&two_gauss(), &DiffusionModel::heat(1.0), 0.0).unwrap();
        let th = MixtureCoords::new(vec![0.5]).unwrap();
        for &dt in &[0.1, 0.5, 2.0] {
            let (out, _) = predict(&th, &gen, dt, Integrator::Exact).unwrap();
            assert!((out.theta()[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_matches_rk4() {
        let fam = MixtureFamily::gaussian(&[(-1.0, 1.0), (1.0, 1.0)], QuadratureSpec::default()).unwrap();
        let gen = assemble_prediction_generator(&fam, &DiffusionModel::bimodal_drift(1.0), 0.0).unwrap();
        let th = [0.3];
        let a = predict_raw(&th, &gen, 0.5, Integrator::Exact).unwrap();
        let b = predict_raw(&th, &gen, 0.5, Integrator::Rk4 { delta_fraction: 1e-3 }).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-10, "{} vs {}", a[0], b[0]);
    }

    #[test]
    fn flat_sensor_leaves_weights() {
        let fam = two_gauss();
        let obs = DiscreteObsModel::new(Sensor::zero(), 1.0, vec![1.0]).unwrap();
        let th = MixtureCoords::new(vec![0.3]).unwrap();
        let c = correct(&th, &fam, 0.4, &obs, 1.0, WeightRule::Reweighted).unwrap();
        assert!((c.theta.theta()[0] - 0.3).abs() < 1e-14);
        assert!((c.c[0] - c.c[1]).abs() < 1e-12 * c.c[0]);
    }

    #[test]
    fn dominant_component_conjugate() {
        let fam = MixtureFamily::gaussian(&[(0.0, 1.0), (40.0, 1.0)], QuadratureSpec::default()).unwrap();
        let obs = DiscreteObsModel::new(Sensor::identity(), 1.0, vec![1.0]).unwrap();
        let th = MixtureCoords::new(vec![1.0 - 1e-9]).unwrap();
        let c = correct(&th, &fam, 1.0, &obs, 1.0, WeightRule::Reweighted).unwrap();
        let g = c.family.components()[0].as_gaussian().unwrap();
        assert!((g.mean - 0.5).abs() < 1e-15 && (g.var - 0.5).abs() < 1e-15);
        assert!(c.theta.theta()[0] > 1.0 - 1e-9);
    }

    #[test]
    fn zero_dynamics_run_is_constant() {
        let obs = DiscreteObsModel::new(Sensor::identity(), 1.0, vec![0.5, 1.0, 1.5]).unwrap();
        let sc = DiscreteScenario::new(two_gauss(), MixtureCoords::new(vec![0.4]).unwrap(), still(), obs, vec![]);
        let tr = run_discrete_filter(&sc).unwrap();
        assert_eq!(tr.len(), 4);
        for th in &tr.thetas {
            assert_eq!(th[0], 0.4);
        }
        assert!(tr.events.is_empty());
    }

    #[test]
    fn simulated_observations_of_a_still_signal() {
        let obs = DiscreteObsModel::new(Sensor::identity(), 1e-20, vec![0.3, 0.6]).unwrap();
        let (x, z) = simulate_discrete_observations(&still(), &obs, 0.0, 1.25, 0.1, 3).unwrap();
        assert_eq!(x, vec![1.25, 1.25]);
        assert!(z.iter().all(|v| (v - 1.25).abs() < 1e-8));
        let ou = DiffusionModel::linear_ou(1.0, 1.0);
        let a = simulate_discrete_observations(&ou, &obs, 0.0, 0.0, 0.01, 3).unwrap();
        assert_eq!(a, simulate_discrete_observations(&ou, &obs, 0.0, 0.0, 0.01, 3).unwrap());
        assert_ne!(a, simulate_discrete_observations(&ou, &obs, 0.0, 0.0, 0.01, 4).unwrap());
    }
}
