//! Galerkin filters with test functions u_j = q_j - q_{m+1}, assembled from the
//! forward operator applied to the basis densities. Nothing here goes through the
//! filter assembly in `discrete_filter` or `continuous_filter`.

use alloc::vec;
use alloc::vec::Vec;

use crate::continuous_filter::PathBundle;
use crate::discrete_filter::{
    correct, predict, DiscreteScenario, FilterFailure, FilterTrajectory, PredictionGenerator,
};
use crate::dynamics::{ContinuousObsModel, DiffusionModel};
use crate::error::{Error, Result};
use crate::families::{clip_to_simplex, ClipEvent, MixtureCoords, MixtureFamily};
use crate::linalg::{Lu, Matrix};
use crate::quad::{QuadratureSpec, Rule};

fn own_rule(fam: &MixtureFamily, spec: &QuadratureSpec) -> Result<Rule> {
    let comps = fam.components();
    let hint = comps.iter().skip(1).fold(comps[0].hint().clone(), |h, c| h.envelope(c.hint()));
    spec.rule(&hint)
}

type Samples = Vec<Vec<f64>>;

/// Samples of (q_l, L* q_l) for every basis density, with
/// L* q = -(f' q + f q') + (a'' q + 2 a' q' + a q'') / 2.
fn forward_basis(fam: &MixtureFamily, model: &DiffusionModel, t: f64, rule: &Rule) -> Result<(Samples, Samples)> {
    let xs = rule.abscissae();
    let mut q = Vec::new();
    let mut lq = Vec::new();
    for (l, comp) in fam.components().iter().enumerate() {
        let field = comp.field();
        let mut qs = Vec::with_capacity(xs.len());
        let mut ls = Vec::with_capacity(xs.len());
        for (i, &x) in xs.iter().enumerate() {
            let (p, p1, p2) = (field.eval1(x), field.d1(x), field.d2(x));
            let (f, f1) = (model.f(t, x), model.drift.dx(t, x));
            let (a, a1, a2) = (model.a(t, x), model.a_dx(t, x), model.a_dxx(t, x));
            let v = -(f1 * p + f * p1) + 0.5 * (a2 * p + 2.0 * a1 * p1 + a * p2);
            if !v.is_finite() {
                return Err(Error::Domain { what: alloc::format!("L* q_{l}"), node: i, x, value: v });
            }
            qs.push(p);
            ls.push(v);
        }
        q.push(qs);
        lq.push(ls);
    }
    Ok((q, lq))
}

fn test_functions(q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = q.len() - 1;
    (0..m).map(|j| q[j].iter().zip(&q[m]).map(|(a, b)| a - b).collect()).collect()
}

fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..w.len() {
        s += w[k] * a[k] * b[k];
    }
    s
}

fn gram(w: &[f64], u: &[Vec<f64>]) -> Result<Lu> {
    let m = u.len();
    Lu::new(&Matrix::from_fn(m, m, |i, j| weighted_dot(w, &u[i], &u[j])))
}

/// Galerkin prediction matrix G^{-1} [<L* q_l, u_j>] (m x (m+1)).
pub fn galerkin_prediction_generator(
    fam: &MixtureFamily,
    model: &DiffusionModel,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<Matrix> {
    let rule = own_rule(fam, spec)?;
    let w = rule.weights();
    let (q, lq) = forward_basis(fam, model, t, &rule)?;
    let u = test_functions(&q);
    let lu = gram(w, &u)?;
    let m = u.len();
    let rhs = Matrix::from_fn(m, m + 1, |j, l| weighted_dot(w, &u[j], &lq[l]));
    Ok(lu.solve_matrix(&rhs))
}

/// Cached samples for repeated Ito-Galerkin steps at a fixed time.
pub struct ItoGalerkin {
    w: Vec<f64>,
    q: Vec<Vec<f64>>,
    lq: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    lu: Lu,
}

impl ItoGalerkin {
    pub fn new(
        fam: &MixtureFamily,
        model: &DiffusionModel,
        obs: &ContinuousObsModel,
        t: f64,
        spec: &QuadratureSpec,
    ) -> Result<Self> {
        let rule = own_rule(fam, spec)?;
        let (q, lq) = forward_basis(fam, model, t, &rule)?;
        let u = test_functions(&q);
        let lu = gram(rule.weights(), &u)?;
        let b = obs.sensors.iter().map(|s| rule.abscissae().iter().map(|&x| s.eval(t, x)).collect()).collect();
        Ok(ItoGalerkin { w: rule.weights().to_vec(), q, lq, u, b, lu })
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = self.u.iter().map(|u| weighted_dot(&self.w, u, v)).collect();
        self.lu.solve(&rhs)
    }

    /// Projected Ito drift and diffusion columns at theta:
    /// drift field L* p - sum_k E_p(b^k) gamma^k, diffusion fields gamma^k = (b^k - E_p b^k) p.
    pub fn coefficients(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let m = self.u.len();
        if theta.len() != m {
            return Err(Error::validation("coordinate dimension differs from the family"));
        }
        let mut hat = theta.to_vec();
        hat.push(1.0 - theta.iter().sum::<f64>());
        let n = self.w.len();
        let mut p = vec![0.0; n];
        let mut lp = vec![0.0; n];
        for (l, c) in hat.iter().enumerate() {
            for k in 0..n {
                p[k] += c * self.q[l][k];
                lp[k] += c * self.lq[l][k];
            }
        }
        let mut drift = lp;
        let mut diff = Vec::with_capacity(self.b.len());
        for b in &self.b {
            let e = weighted_dot(&self.w, b, &p);
            let gamma: Vec<f64> = (0..n).map(|k| (b[k] - e) * p[k]).collect();
            for k in 0..n {
                drift[k] -= e * gamma[k];
            }
            diff.push(self.project(&gamma));
        }
        Ok((self.project(&drift), diff))
    }

    /// Euler-Maruyama step followed by clipping into the simplex interior.
    pub fn step(&self, theta: &[f64], dy: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<ClipEvent>)> {
        if dy.len() != self.b.len() {
            return Err(Error::validation("observation increment has the wrong number of channels"));
        }
        let (mu, sig) = self.coefficients(theta)?;
        let mut out: Vec<f64> = (0..theta.len())
            .map(|i| theta[i] + mu[i] * dt + sig.iter().zip(dy).map(|(s, y)| s[i] * y).sum::<f64>())
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(alloc::format!("non-finite Ito-Galerkin step from theta = {theta:?}")));
        }
        let events = clip_to_simplex(&mut out)?;
        Ok((out, events))
    }
}

/// Projected Ito drift and diffusion at theta.
pub fn galerkin_ito_drift(
    theta: &[f64],
    fam: &MixtureFamily,
    model: &DiffusionModel,
    obs: &ContinuousObsModel,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    ItoGalerkin::new(fam, model, obs, t, spec)?.coefficients(theta)
}

/// One Ito-Galerkin Euler-Maruyama step.
#[allow(clippy::too_many_arguments)]
pub fn galerkin_ito_continuous_step(
    theta: &[f64],
    fam: &MixtureFamily,
    model: &DiffusionModel,
    obs: &ContinuousObsModel,
    dy: &[f64],
    dt: f64,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<(Vec<f64>, Vec<ClipEvent>)> {
    ItoGalerkin::new(fam, model, obs, t, spec)?.step(theta, dy, dt)
}

/// Discrete-time filter whose prediction uses the Galerkin generator; the
/// correction is the exact basis update. Records on the schedule of
/// `run_discrete_filter`, without residuals.
pub fn galerkin_discrete_filter(sc: &DiscreteScenario) -> core::result::Result<FilterTrajectory, FilterFailure> {
    let mut traj = FilterTrajectory::default();
    match discrete_inner(sc, &mut traj) {
        Ok(()) => Ok(traj),
        Err(error) => Err(FilterFailure { error, trajectory: traj }),
    }
}

fn record_state(traj: &mut FilterTrajectory, fam: &MixtureFamily, theta: &[f64], generation: usize, t: f64) {
    let mut hat = theta.to_vec();
    hat.push(1.0 - theta.iter().sum::<f64>());
    let (mean, var) = fam.moments(&hat);
    traj.times.push(t);
    traj.thetas.push(theta.to_vec());
    traj.generations.push(generation);
    traj.means.push(mean);
    traj.variances.push(var);
}

fn discrete_inner(sc: &DiscreteScenario, traj: &mut FilterTrajectory) -> Result<()> {
    sc.validate()?;
    if !sc.model.time_invariant {
        return Err(Error::Capability("Galerkin prediction needs time-invariant coefficients".into()));
    }
    let spec = sc.family.spec().clone();
    let mut fam = MixtureFamily::with_generation(sc.family.components().to_vec(), spec.clone(), 0)?;
    let mut generation = 0;
    let mut t = sc.t0;
    let mut th = sc.theta0.theta().to_vec();
    let clips = clip_to_simplex(&mut th)?;
    traj.push_clips(0, t, &clips);
    let mut theta = MixtureCoords::new(th)?;
    traj.families.push(fam.clone());
    let mut gen = PredictionGenerator::from_b(galerkin_prediction_generator(&fam, &sc.model, t, &spec)?, 0, t);
    record_state(traj, &fam, theta.theta(), generation, t);
    for (n, &tn) in sc.obs.times.iter().enumerate() {
        let h = (tn - t) / sc.substeps as f64;
        for s in 0..sc.substeps {
            let t_next = if s + 1 == sc.substeps { tn } else { t + h };
            let (next, clips) = predict(&theta, &gen, t_next - t, sc.integrator)?;
            theta = next;
            t = t_next;
            let step = traj.len();
            traj.push_clips(step, t, &clips);
            if !(s + 1 == sc.substeps && !sc.observations.is_empty()) {
                record_state(traj, &fam, theta.theta(), generation, t);
            }
        }
        if let Some(&z) = sc.observations.get(n) {
            let corr = correct(&theta, &fam, z, &sc.obs, t, sc.weight_rule)?;
            generation += 1;
            fam = MixtureFamily::with_generation(corr.family.components().to_vec(), spec.clone(), generation)?;
            theta = corr.theta;
            traj.families.push(fam.clone());
            gen = PredictionGenerator::from_b(galerkin_prediction_generator(&fam, &sc.model, t, &spec)?, generation, t);
            let step = traj.len();
            traj.push_clips(step, t, &corr.events);
            record_state(traj, &fam, theta.theta(), generation, t);
        }
    }
    Ok(())
}

/// Ito-Galerkin filter along an observation path (Euler-Maruyama, clipped
/// after each step), recorded every `record_every` steps and at the end.
pub fn galerkin_ito_filter(
    fam: &MixtureFamily,
    theta0: &MixtureCoords,
    model: &DiffusionModel,
    obs: &ContinuousObsModel,
    path: &PathBundle,
    record_every: usize,
) -> core::result::Result<FilterTrajectory, FilterFailure> {
    let mut traj = FilterTrajectory::default();
    match ito_inner(fam, theta0, model, obs, path, record_every, &mut traj) {
        Ok(()) => Ok(traj),
        Err(error) => Err(FilterFailure { error, trajectory: traj }),
    }
}

fn ito_inner(
    fam: &MixtureFamily,
    theta0: &MixtureCoords,
    model: &DiffusionModel,
    obs: &ContinuousObsModel,
    path: &PathBundle,
    record_every: usize,
    traj: &mut FilterTrajectory,
) -> Result<()> {
    if theta0.m() != fam.m() || record_every == 0 {
        return Err(Error::validation("initial theta must match the family and record_every be positive"));
    }
    let spec = fam.spec().clone();
    traj.families.push(MixtureFamily::with_generation(fam.components().to_vec(), spec.clone(), 0)?);
    let mut theta = theta0.theta().to_vec();
    let clips = clip_to_simplex(&mut theta)?;
    traj.push_clips(0, path.times[0], &clips);
    record_state(traj, fam, &theta, 0, path.times[0]);
    let mut ito = ItoGalerkin::new(fam, model, obs, path.times[0], &spec)?;
    let n = path.steps();
    for k in 0..n {
        if !model.time_invariant {
            ito = ItoGalerkin::new(fam, model, obs, path.times[k], &spec)?;
        }
        let (next, clips) = ito.step(&theta, &path.dy(k), path.dt)?;
        theta = next;
        let step = traj.len();
        traj.push_clips(step, path.times[k + 1], &clips);
        if (k + 1) % record_every == 0 || k + 1 == n {
            record_state(traj, fam, &theta, 0, path.times[k + 1]);
        }
    }
    Ok(())
}
