//! Kalman recursions for linear-Gaussian scenarios.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;

use super::MomentTrajectory;
use crate::continuous_filter::PathBundle;
use crate::dynamics::{ContinuousObsModel, DiffusionModel, DiscreteObsModel};
use crate::error::{Error, Result};

fn linear(model: &DiffusionModel) -> Result<(f64, f64)> {
    model
        .linear_gaussian()
        .map(|(f, s)| (f, s * s))
        .ok_or_else(|| Error::validation(alloc::format!("model `{}` is not linear-Gaussian", model.name)))
}

/// Mean and variance after `dt` of dX = F X dt + sigma dW.
fn propagate(f: f64, s2: f64, m: f64, p: f64, dt: f64) -> (f64, f64) {
    let e = (f * dt).exp();
    let growth = if f.abs() < 1e-12 { dt } else { ((2.0 * f * dt).exp() - 1.0) / (2.0 * f) };
    (e * m, e * e * p + s2 * growth)
}

/// Discrete-time Kalman filter on the schedule of the discrete projection
/// filter: the initial state, `substeps - 1` intermediate predictions per
/// interval, then the posterior at each observation time. Empty `zs` records
/// every sub-interval end instead.
pub fn kalman_discrete(
    model: &DiffusionModel,
    obs: &DiscreteObsModel,
    zs: &[f64],
    t0: f64,
    m0: f64,
    p0: f64,
    substeps: usize,
) -> Result<MomentTrajectory> {
    let (f, s2) = linear(model)?;
    let (hs, ho) = obs.sensor.affine().ok_or_else(|| Error::validation("sensor is not affine"))?;
    if !zs.is_empty() && zs.len() != obs.times.len() {
        return Err(Error::validation("observation values and times differ in length"));
    }
    if substeps == 0 || !(p0 >= 0.0) {
        return Err(Error::validation("substeps must be positive and the initial variance nonnegative"));
    }
    let mut out = MomentTrajectory::default();
    let (mut m, mut p, mut t) = (m0, p0, t0);
    out.push(t, m, p);
    for (n, &tn) in obs.times.iter().enumerate() {
        let h = (tn - t) / substeps as f64;
        for s in 0..substeps {
            let t_next = if s + 1 == substeps { tn } else { t + h };
            (m, p) = propagate(f, s2, m, p, t_next - t);
            t = t_next;
            if !(s + 1 == substeps && !zs.is_empty()) {
                out.push(t, m, p);
            }
        }
        if let Some(&z) = zs.get(n) {
            let k = p * hs / (hs * hs * p + obs.r);
            m += k * (z - hs * m - ho);
            p = p * obs.r / (hs * hs * p + obs.r);
            out.push(t, m, p);
        }
    }
    Ok(out)
}

/// Kalman-Bucy filter along a sampled observation path: Euler step for the
/// mean with the Riccati variance integrated by RK4.
pub fn kalman_bucy(
    model: &DiffusionModel,
    obs: &ContinuousObsModel,
    path: &PathBundle,
    m0: f64,
    p0: f64,
) -> Result<MomentTrajectory> {
    let (f, s2) = linear(model)?;
    let lin: Vec<(f64, f64)> = obs
        .sensors
        .iter()
        .map(|s| s.affine().ok_or_else(|| Error::validation("sensor is not affine")))
        .collect::<Result<_>>()?;
    let h2: f64 = lin.iter().map(|(h, _)| h * h).sum();
    let riccati = |p: f64| 2.0 * f * p + s2 - p * p * h2;
    let dt = path.dt;
    let mut out = MomentTrajectory::default();
    let (mut m, mut p) = (m0, p0);
    out.push(path.times[0], m, p);
    for k in 0..path.steps() {
        let dy = path.dy(k);
        let innovation: f64 = lin.iter().zip(&dy).map(|((h, o), y)| h * (y - (h * m + o) * dt)).sum();
        m += f * m * dt + p * innovation;
        let k1 = riccati(p);
        let k2 = riccati(p + 0.5 * dt * k1);
        let k3 = riccati(p + 0.5 * dt * k2);
        let k4 = riccati(p + dt * k3);
        p += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(path.times[k + 1], m, p);
    }
    Ok(out)
}

/// Stationary variance of the Kalman-Bucy filter, the positive root of
/// 2 F P + s2 - H2 P^2 = 0 (s2 = sigma^2 q, H2 = sum of squared sensor slopes).
pub fn riccati_fixed_point(f: f64, s2: f64, h2: f64) -> Result<f64> {
    if h2 > 0.0 {
        Ok((f + (f * f + h2 * s2).sqrt()) / h2)
    } else if f < 0.0 {
        Ok(-s2 / (2.0 * f))
    } else {
        Err(Error::validation("no stationary variance for an unobserved unstable signal"))
    }
}
