//! Bootstrap particle filters with systematic resampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;
use rand::Rng;

use super::InitialLaw;
use crate::continuous_filter::PathBundle;
use crate::dynamics::{ContinuousObsModel, DiffusionModel, DiscreteObsModel};
use crate::error::{Error, Result};
use crate::rng::{engine, normal, stream, Stream};

pub const MIN_PARTICLES: usize = 100;

/// Weighted particles; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(particles: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if particles.len() != weights.len() || particles.is_empty() {
            return Err(Error::validation("particles and weights differ in length"));
        }
        let s: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("weights must be nonnegative and sum to one (sum {s})")));
        }
        Ok(ParticleEnsemble { particles, weights })
    }

    fn uniform(particles: Vec<f64>) -> Self {
        let n = particles.len();
        ParticleEnsemble { particles, weights: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.particles.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    /// (mean, variance, fourth central moment).
    pub fn moments(&self) -> (f64, f64, f64) {
        let mu = self.mean();
        let (mut m2, mut m4) = (0.0, 0.0);
        for (x, w) in self.particles.iter().zip(&self.weights) {
            let d2 = (x - mu) * (x - mu);
            m2 += w * d2;
            m4 += w * d2 * d2;
        }
        (mu, m2, m4)
    }

    /// Multiplies weights by exp(ell) and renormalizes.
    fn reweight(&mut self, ell: &[f64], step: usize) -> Result<()> {
        let mx = ell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !mx.is_finite() {
            return Err(Error::WeightCollapse { step });
        }
        let mut s = 0.0;
        for (w, l) in self.weights.iter_mut().zip(ell) {
            *w *= (l - mx).exp();
            s += *w;
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::WeightCollapse { step });
        }
        for w in &mut self.weights {
            *w /= s;
        }
        Ok(())
    }

    fn systematic_resample(&mut self, rng: &mut Stream) {
        let n = self.len();
        let u0: f64 = rng.random::<f64>() / n as f64;
        let mut out = Vec::with_capacity(n);
        let mut cum = self.weights[0];
        let mut i = 0;
        for k in 0..n {
            let u = u0 + k as f64 / n as f64;
            while u > cum && i + 1 < n {
                i += 1;
                cum += self.weights[i];
            }
            out.push(self.particles[i]);
        }
        *self = ParticleEnsemble::uniform(out);
    }
}

/// Moments with Monte Carlo standard errors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticleTrajectory {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// sqrt(variance / ESS).
    pub mean_se: Vec<f64>,
    /// sqrt((m4 - variance^2) / ESS).
    pub variance_se: Vec<f64>,
    pub ess: Vec<f64>,
    pub resamples: usize,
}

impl ParticleTrajectory {
    fn record(&mut self, t: f64, e: &ParticleEnsemble) {
        let (mu, v, m4) = e.moments();
        let ess = e.ess();
        self.times.push(t);
        self.means.push(mu);
        self.variances.push(v);
        self.mean_se.push((v / ess).sqrt());
        self.variance_se.push(((m4 - v * v).max(0.0) / ess).sqrt());
        self.ess.push(ess);
    }
}

fn initial(law: &InitialLaw, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n < MIN_PARTICLES {
        return Err(Error::validation(format!("particle filter needs at least {MIN_PARTICLES} particles, got {n}")));
    }
    let mut r = stream(seed, engine::INITIAL, 1);
    Ok(ParticleEnsemble::uniform((0..n).map(|_| law.sample(&mut r)).collect()))
}

fn propagate(model: &DiffusionModel, xs: &mut [f64], t: f64, dt: f64, rng: &mut Stream) {
    let sq = (model.noise_cov * dt).sqrt();
    for x in xs.iter_mut() {
        *x += model.f(t, *x) * dt + model.sigma.eval(t, *x) * sq * normal(rng);
    }
}

fn maybe_resample(e: &mut ParticleEnsemble, rng: &mut Stream, count: &mut usize) {
    if e.ess() < 0.5 * e.len() as f64 {
        e.systematic_resample(rng);
        *count += 1;
    }
}

/// Continuous observations: weight by exp(b . dY - |b|^2 dt / 2) at the start
/// of each step, then Euler-Maruyama propagation.
pub fn particle_filter_continuous(
    model: &DiffusionModel,
    obs: &ContinuousObsModel,
    path: &PathBundle,
    init: &InitialLaw,
    n: usize,
    seed: u64,
) -> Result<ParticleTrajectory> {
    if path.y.first().map(|y| y.len()) != Some(obs.d()) {
        return Err(Error::validation("observation path has the wrong number of channels"));
    }
    let mut e = initial(init, n, seed)?;
    let mut out = ParticleTrajectory::default();
    out.record(path.times[0], &e);
    let dt = path.dt;
    let mut ell = vec![0.0; n];
    for k in 0..path.steps() {
        let t = path.times[k];
        let dy = path.dy(k);
        for (l, &x) in ell.iter_mut().zip(&e.particles) {
            let mut s = 0.0;
            for (c, sensor) in obs.sensors.iter().enumerate() {
                let b = sensor.eval(t, x);
                s += b * dy[c] - 0.5 * b * b * dt;
            }
            *l = s;
        }
        e.reweight(&ell, k + 1)?;
        let mut rng = stream(seed, engine::PARTICLE, k as u64);
        propagate(model, &mut e.particles, t, dt, &mut rng);
        if e.particles.iter().any(|x| !x.is_finite()) {
            return Err(Error::Explosion { step: k + 1, value: f64::INFINITY });
        }
        out.record(path.times[k + 1], &e);
        maybe_resample(&mut e, &mut rng, &mut out.resamples);
    }
    Ok(out)
}

/// Discrete observations with Euler-Maruyama sub-steps of at most `dt`,
/// recorded on the schedule of the discrete projection filter.
#[allow(clippy::too_many_arguments)]
pub fn particle_filter_discrete(
    model: &DiffusionModel,
    obs: &DiscreteObsModel,
    zs: &[f64],
    t0: f64,
    init: &InitialLaw,
    n: usize,
    seed: u64,
    dt: f64,
    substeps: usize,
) -> Result<ParticleTrajectory> {
    if !zs.is_empty() && zs.len() != obs.times.len() {
        return Err(Error::validation("observation values and times differ in length"));
    }
    if substeps == 0 || !(dt > 0.0) {
        return Err(Error::validation("substeps and dt must be positive"));
    }
    let mut e = initial(init, n, seed)?;
    let mut out = ParticleTrajectory::default();
    out.record(t0, &e);
    let mut t = t0;
    let mut key = 0u64;
    for (j, &tn) in obs.times.iter().enumerate() {
        let h = (tn - t) / substeps as f64;
        for s in 0..substeps {
            let t_next = if s + 1 == substeps { tn } else { t + h };
            let steps = ((t_next - t) / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let hk = (t_next - t) / steps as f64;
            for k in 0..steps {
                let mut rng = stream(seed, engine::PARTICLE, key);
                key += 1;
                propagate(model, &mut e.particles, t + hk * k as f64, hk, &mut rng);
            }
            if e.particles.iter().any(|x| !x.is_finite()) {
                return Err(Error::Explosion { step: key as usize, value: f64::INFINITY });
            }
            t = t_next;
            if !(s + 1 == substeps && !zs.is_empty()) {
                out.record(t, &e);
            }
        }
        if let Some(&z) = zs.get(j) {
            let ell: Vec<f64> = e
                .particles
                .iter()
                .map(|&x| {
                    let d = z - obs.sensor.eval(t, x);
                    -d * d / (2.0 * obs.r)
                })
                .collect();
            e.reweight(&ell, j + 1)?;
            out.record(t, &e);
            let mut rng = stream(seed, engine::PARTICLE, key);
            key += 1;
            maybe_resample(&mut e, &mut rng, &mut out.resamples);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Sensor;

    #[test]
    fn free_brownian_mean_within_clt_band() {
        let heat = DiffusionModel::heat(1.0);
        let obs = DiscreteObsModel::new(Sensor::identity(), 1.0, vec![1.0]).unwrap();
        let n = 4000;
        let tr =
            particle_filter_discrete(&heat, &obs, &[], 0.0, &InitialLaw::gaussian(0.0, 1e-12), n, 5, 0.01, 1).unwrap();
        let m = *tr.means.last().unwrap();
        assert!(m.abs() < 3.0 / (n as f64).sqrt(), "{m}");
        assert!((tr.variances.last().unwrap() - 1.0).abs() < 0.1);
    }

    #[test]
    fn standard_error_halves_with_four_times_particles() {
        let heat = DiffusionModel::heat(1.0);
        let obs = DiscreteObsModel::new(Sensor::identity(), 1.0, vec![1.0]).unwrap();
        let law = InitialLaw::gaussian(0.0, 1.0);
        let a = particle_filter_discrete(&heat, &obs, &[], 0.0, &law, 1000, 1, 0.1, 1).unwrap();
        let b = particle_filter_discrete(&heat, &obs, &[], 0.0, &law, 4000, 1, 0.1, 1).unwrap();
        let ratio = b.mean_se[1] / a.mean_se[1];
        assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn resampling_preserves_particles_and_rejects_collapse() {
        let mut e = ParticleEnsemble::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        let mut r = stream(0, 0, 0);
        e.systematic_resample(&mut r);
        assert_eq!(e.particles, vec![2.0, 2.0, 3.0, 3.0]);
        assert!(matches!(e.reweight(&[f64::NEG_INFINITY; 4], 3), Err(Error::WeightCollapse { step: 3 })));
        assert!(initial(&InitialLaw::gaussian(0.0, 1.0), 10, 0).is_err());
    }

    #[test]
    fn reproducible_from_seed() {
        let ou = DiffusionModel::linear_ou(1.0, 1.0);
        let obs = DiscreteObsModel::new(Sensor::identity(), 0.5, vec![0.5, 1.0]).unwrap();
        let law = InitialLaw::gaussian(0.0, 1.0);
        let a = particle_filter_discrete(&ou, &obs, &[0.3, -0.2], 0.0, &law, 500, 9, 0.05, 2).unwrap();
        let b = particle_filter_discrete(&ou, &obs, &[0.3, -0.2], 0.0, &law, 500, 9, 0.05, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
