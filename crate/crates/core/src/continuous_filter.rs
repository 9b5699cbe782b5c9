//! Continuous-time mixture projection filter: the Stratonovich form of the
//! Kushner-Stratonovich equation projected onto the mixture family, stepped
//! with a stochastic Heun scheme along a simulated observation path.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;

use crate::discrete_filter::{
    forward_component_samples, solve_columns, weak_generator_raw, FilterFailure, FilterTrajectory,
};
use crate::dynamics::{ContinuousObsModel, DiffusionModel};
use crate::error::{Error, Result};
use crate::families::{clip_to_simplex, ClipEvent, MixtureCoords, MixtureFamily};
use crate::linalg::Matrix;
use crate::rng::{engine, normal, stream};

/// Drift and diffusion columns of an SDE in the free coordinates.
pub trait SdeSystem {
    fn drift(&self, theta: &[f64]) -> Vec<f64>;
    /// One column per observation channel.
    fn diffusion(&self, theta: &[f64]) -> Vec<Vec<f64>>;
}

/// Tensors of the projected filter for time-invariant coefficients.
///
/// Raw tensors (before h^{-1}): A_jl = <q_l, L u_j>, C^k_jl = <b^k q_l, u_j>,
/// beta^k_l = int b^k q_l, D_jl = <|b|^2 q_l, u_j>, delta_l = int |b|^2 q_l,
/// G_jl = <q_l, u_j>.
#[derive(Debug, Clone)]
pub struct SdeCoefficients {
    pub a: Matrix,
    pub c: Vec<Matrix>,
    pub beta: Vec<Vec<f64>>,
    pub d: Matrix,
    pub delta: Vec<f64>,
    pub g: Matrix,
    pub t: f64,
    ha: Matrix,
    hc: Vec<Matrix>,
    hd: Matrix,
    hg: Matrix,
}

fn extend(theta: &[f64]) -> Vec<f64> {
    let mut h = theta.to_vec();
    h.push(1.0 - theta.iter().sum::<f64>());
    h
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SdeCoefficients {
    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn channels(&self) -> usize {
        self.c.len()
    }

    /// h^{-1}[A th - (1/2)(D th - (delta . th) G th)] at extended weights `hat`.
    pub fn drift_hat(&self, hat: &[f64]) -> Vec<f64> {
        let a = self.ha.matvec(hat);
        let d = self.hd.matvec(hat);
        let g = self.hg.matvec(hat);
        let e = dot(&self.delta, hat);
        (0..a.len()).map(|j| a[j] - 0.5 * (d[j] - e * g[j])).collect()
    }

    /// h^{-1}[C^k th - (beta^k . th) G th].
    pub fn diffusion_hat(&self, hat: &[f64]) -> Vec<Vec<f64>> {
        let g = self.hg.matvec(hat);
        self.hc
            .iter()
            .zip(&self.beta)
            .map(|(ck, bk)| {
                let c = ck.matvec(hat);
                let e = dot(bk, hat);
                (0..c.len()).map(|j| c[j] - e * g[j]).collect()
            })
            .collect()
    }

    /// Prediction-only drift h^{-1} A th.
    pub fn prediction_drift_hat(&self, hat: &[f64]) -> Vec<f64> {
        self.ha.matvec(hat)
    }
}

impl SdeSystem for SdeCoefficients {
    fn drift(&self, theta: &[f64]) -> Vec<f64> {
        self.drift_hat(&extend(theta))
    }

    fn diffusion(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        self.diffusion_hat(&extend(theta))
    }
}

fn finite_or(m: &Matrix, what: &str) -> Result<()> {
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if !m[(i, j)].is_finite() {
                return Err(Error::Domain {
                    what: format!("tensor {what}[{i}][{j}]"),
                    node: 0,
                    x: f64::NAN,
                    value: m[(i, j)],
                });
            }
        }
    }
    Ok(())
}

pub fn assemble_sde_coefficients(
    fam: &MixtureFamily,
    model: &DiffusionModel,
    obs: &ContinuousObsModel,
    t: f64,
) -> Result<SdeCoefficients> {
    let rule = fam.rule();
    let xs = rule.abscissae();
    let (q, u) = (fam.q_samples(), fam.u_samples());
    let m = fam.m();
    let a = weak_generator_raw(fam, model, t)?;
    let pair = |weight: &[f64]| -> (Matrix, Vec<f64>) {
        let mut mat = Matrix::zeros(m, m + 1);
        let mut vec_ = vec![0.0; m + 1];
        for l in 0..=m {
            let wq: Vec<f64> = weight.iter().zip(&q[l]).map(|(w, ql)| w * ql).collect();
            vec_[l] = rule.integrate_values(&wq);
            for j in 0..m {
                mat[(j, l)] = rule.dot(&wq, &u[j]);
            }
        }
        (mat, vec_)
    };
    let mut c = Vec::with_capacity(obs.d());
    let mut beta = Vec::with_capacity(obs.d());
    for s in &obs.sensors {
        let b: Vec<f64> = xs.iter().map(|&x| s.eval(t, x)).collect();
        let (ck, bk) = pair(&b);
        c.push(ck);
        beta.push(bk);
    }
    let bsq: Vec<f64> = xs.iter().map(|&x| obs.b_squared(t, x)).collect();
    let (d, delta) = pair(&bsq);
    let ones = vec![1.0; xs.len()];
    let (g, _) = pair(&ones);
    finite_or(&a, "A")?;
    for (k, ck) in c.iter().enumerate() {
        finite_or(ck, &format!("C{k}"))?;
    }
    finite_or(&d, "D")?;
    finite_or(&Matrix::from_vec(1, delta.len(), delta.clone()), "delta")?;
    for (k, bk) in beta.iter().enumerate() {
        finite_or(&Matrix::from_vec(1, bk.len(), bk.clone()), &format!("beta{k}"))?;
    }
    Ok(SdeCoefficients {
        ha: solve_columns(fam, &a),
        hc: c.iter().map(|ck| solve_columns(fam, ck)).collect(),
        hd: solve_columns(fam, &d),
        hg: solve_columns(fam, &g),
        a,
        c,
        beta,
        d,
        delta,
        g,
        t,
    })
}

/// One stochastic Heun (predictor-corrector) step without clipping.
pub fn heun_step<S: SdeSystem + ?Sized>(theta: &[f64], sys: &S, dy: &[f64], dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::validation("time step must be positive"));
    }
    let mu0 = sys.drift(theta);
    let s0 = sys.diffusion(theta);
    if s0.len() != dy.len() {
        return Err(Error::validation(format!("{} observation increments for {} channels", dy.len(), s0.len())));
    }
    let m = theta.len();
    let mut star = theta.to_vec();
    for i in 0..m {
        star[i] += mu0[i] * dt + s0.iter().zip(dy).map(|(s, y)| s[i] * y).sum::<f64>();
    }
    let mu1 = sys.drift(&star);
    let s1 = sys.diffusion(&star);
    let mut out = theta.to_vec();
    for i in 0..m {
        let noise: f64 = (0..dy.len()).map(|k| 0.5 * (s0[k][i] + s1[k][i]) * dy[k]).sum();
        out[i] += 0.5 * (mu0[i] + mu1[i]) * dt + noise;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite Heun step from theta = {theta:?} with dY = {dy:?}")));
    }
    Ok(out)
}

/// Heun step followed by clipping into the simplex interior.
pub fn stratonovich_step(
    theta: &[f64],
    coeffs: &SdeCoefficients,
    dy: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<ClipEvent>)> {
    let mut out = heun_step(theta, coeffs, dy, dt)?;
    let events = clip_to_simplex(&mut out)?;
    Ok((out, events))
}

/// Signal and observation paths on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub dt: f64,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    /// Y_t per channel at each time; Y_0 = 0.
    pub y: Vec<Vec<f64>>,
    pub seed: u64,
}

impl PathBundle {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Y_{n+1} - Y_n.
    pub fn dy(&self, n: usize) -> Vec<f64> {
        self.y[n + 1].iter().zip(&self.y[n]).map(|(a, b)| a - b).collect()
    }
}

/// Number of steps of size `dt` in `horizon`, which must divide it.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::validation("horizon and time step must be positive"));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon || n < 1.0 {
        return Err(Error::validation(format!("time step {dt} does not divide the horizon {horizon}")));
    }
    Ok(n as usize)
}

/// Largest |X| tolerated by the path simulator.
pub const EXPLOSION_BOUND: f64 = 1e6;

/// Euler-Maruyama signal with observation increments b(X) dt + sqrt(dt) N(0, I).
pub fn simulate_truth_and_observations(
    model: &DiffusionModel,
    obs: &ContinuousObsModel,
    horizon: f64,
    dt: f64,
    x0: f64,
    seed: u64,
) -> Result<PathBundle> {
    let n = step_count(horizon, dt)?;
    let d = obs.d();
    let mut times = Vec::with_capacity(n + 1);
    let mut x = Vec::with_capacity(n + 1);
    let mut y = Vec::with_capacity(n + 1);
    times.push(0.0);
    x.push(x0);
    y.push(vec![0.0; d]);
    let sq = dt.sqrt();
    for k in 0..n {
        let t = dt * k as f64;
        let xk = x[k];
        let mut sig = stream(seed, engine::TRUTH, k as u64);
        let mut ob = stream(seed, engine::OBSERVATION, k as u64);
        let xn = xk + model.f(t, xk) * dt + model.sigma.eval(t, xk) * (model.noise_cov * dt).sqrt() * normal(&mut sig);
        if !(xn.abs() <= EXPLOSION_BOUND) {
            return Err(Error::Explosion { step: k + 1, value: xn.abs() });
        }
        let yn: Vec<f64> = (0..d).map(|c| y[k][c] + obs.sensors[c].eval(t, xk) * dt + sq * normal(&mut ob)).collect();
        times.push(dt * (k + 1) as f64);
        x.push(xn);
        y.push(yn);
    }
    Ok(PathBundle { dt, times, x, y, seed })
}

/// Inputs of a continuous-time filter run.
#[derive(Debug, Clone)]
pub struct ContinuousScenario {
    pub family: MixtureFamily,
    pub theta0: MixtureCoords,
    pub model: DiffusionModel,
    pub obs: ContinuousObsModel,
    pub path: PathBundle,
    /// Record every this many steps (the final step is always recorded).
    pub record_every: usize,
    /// Cache the coefficient tensors; requires time-invariant coefficients.
    pub cache_tensors: bool,
}

impl ContinuousScenario {
    pub fn new(
        family: MixtureFamily,
        theta0: MixtureCoords,
        model: DiffusionModel,
        obs: ContinuousObsModel,
        path: PathBundle,
    ) -> Self {
        let cache_tensors = model.time_invariant;
        ContinuousScenario { family, theta0, model, obs, path, record_every: 1, cache_tensors }
    }
}

struct Residuals {
    forward: Vec<Vec<f64>>,
    bsq: Vec<f64>,
    sensors: Vec<Vec<f64>>,
}

impl Residuals {
    fn new(fam: &MixtureFamily, model: &DiffusionModel, obs: &ContinuousObsModel, t: f64) -> Result<Self> {
        let xs = fam.rule().abscissae();
        Ok(Residuals {
            forward: forward_component_samples(fam, model, t)?,
            bsq: xs.iter().map(|&x| obs.b_squared(t, x)).collect(),
            sensors: obs.sensors.iter().map(|s| xs.iter().map(|&x| s.eval(t, x)).collect()).collect(),
        })
    }

    fn eval(&self, fam: &MixtureFamily, hat: &[f64]) -> (f64, Vec<f64>) {
        let rule = fam.rule();
        let p = fam.density_samples(hat);
        let n = p.len();
        let resid = |v: &[f64]| {
            let c = fam.project_samples(v);
            rule.norm(&fam.residual_samples(v, &c))
        };
        let e_bsq = rule.dot(&p, &self.bsq);
        let mut drift = vec![0.0; n];
        for (w, s) in hat.iter().zip(&self.forward) {
            for k in 0..n {
                drift[k] += w * s[k];
            }
        }
        for k in 0..n {
            drift[k] -= 0.5 * (self.bsq[k] - e_bsq) * p[k];
        }
        let diff = self
            .sensors
            .iter()
            .map(|b| {
                let e = rule.dot(&p, b);
                let g: Vec<f64> = (0..n).map(|k| (b[k] - e) * p[k]).collect();
                resid(&g)
            })
            .collect();
        (resid(&drift), diff)
    }
}

/// Drift and diffusion projection residuals at (fam, theta):
/// ||(L*p - gamma0) - Pi(L*p - gamma0)|| and ||gamma^k - Pi gamma^k||.
pub fn projection_residual(
    fam: &MixtureFamily,
    theta: &MixtureCoords,
    model: &DiffusionModel,
    obs: &ContinuousObsModel,
    t: f64,
) -> Result<(f64, Vec<f64>)> {
    if theta.m() != fam.m() {
        return Err(Error::validation("coordinate dimension differs from the family"));
    }
    Ok(Residuals::new(fam, model, obs, t)?.eval(fam, &theta.extended()))
}

/// Steps the projected filter along the observation path of the scenario.
pub fn run_continuous_filter(sc: &ContinuousScenario) -> core::result::Result<FilterTrajectory, FilterFailure> {
    let mut traj = FilterTrajectory::default();
    match run_inner(sc, &mut traj) {
        Ok(()) => Ok(traj),
        Err(error) => Err(FilterFailure { error, trajectory: traj }),
    }
}

fn run_inner(sc: &ContinuousScenario, traj: &mut FilterTrajectory) -> Result<()> {
    let fam = &sc.family;
    if sc.theta0.m() != fam.m() {
        return Err(Error::validation("initial theta dimension differs from the family"));
    }
    if sc.cache_tensors && !(sc.model.time_invariant) {
        return Err(Error::validation("tensor caching requires time-invariant coefficients"));
    }
    if sc.record_every == 0 {
        return Err(Error::validation("record_every must be at least 1"));
    }
    if sc.path.y.first().map(|y| y.len()) != Some(sc.obs.d()) {
        return Err(Error::validation("observation path has the wrong number of channels"));
    }
    let fam0 = MixtureFamily::with_generation(fam.components().to_vec(), fam.spec().clone(), 0)?;
    traj.families.push(fam0);
    let dt = sc.path.dt;
    let mut theta = sc.theta0.theta().to_vec();
    let clips = clip_to_simplex(&mut theta)?;
    traj.push_clips(0, sc.path.times[0], &clips);

    let mut coeffs = assemble_sde_coefficients(fam, &sc.model, &sc.obs, sc.path.times[0])?;
    let mut resid = Residuals::new(fam, &sc.model, &sc.obs, sc.path.times[0])?;
    let record = |traj: &mut FilterTrajectory, theta: &[f64], t: f64, resid: &Residuals| {
        let hat = extend(theta);
        let (mean, var) = fam.moments(&hat);
        traj.times.push(t);
        traj.thetas.push(theta.to_vec());
        traj.generations.push(0);
        traj.means.push(mean);
        traj.variances.push(var);
        traj.residuals.push(resid.eval(fam, &hat).0);
    };
    record(traj, &theta, sc.path.times[0], &resid);
    let n = sc.path.steps();
    for k in 0..n {
        let t = sc.path.times[k];
        let dy = sc.path.dy(k);
        let next = if sc.cache_tensors {
            heun_step(&theta, &coeffs, &dy, dt)?
        } else {
            coeffs = assemble_sde_coefficients(fam, &sc.model, &sc.obs, t)?;
            let c1 = assemble_sde_coefficients(fam, &sc.model, &sc.obs, t + dt)?;
            heun_time_varying(&theta, &coeffs, &c1, &dy, dt)?
        };
        theta = next;
        let mut clipped = theta.clone();
        let clips = clip_to_simplex(&mut clipped)?;
        theta = clipped;
        let tn = sc.path.times[k + 1];
        if (k + 1) % sc.record_every == 0 || k + 1 == n {
            if !sc.cache_tensors {
                resid = Residuals::new(fam, &sc.model, &sc.obs, tn)?;
            }
            let step = traj.len();
            traj.push_clips(step, tn, &clips);
            record(traj, &theta, tn, &resid);
        } else {
            let step = traj.len();
            traj.push_clips(step, tn, &clips);
        }
    }
    Ok(())
}

fn heun_time_varying(
    theta: &[f64],
    c0: &SdeCoefficients,
    c1: &SdeCoefficients,
    dy: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let mu0 = c0.drift(theta);
    let s0 = c0.diffusion(theta);
    let m = theta.len();
    let mut star = theta.to_vec();
    for i in 0..m {
        star[i] += mu0[i] * dt + s0.iter().zip(dy).map(|(s, y)| s[i] * y).sum::<f64>();
    }
    let mu1 = c1.drift(&star);
    let s1 = c1.diffusion(&star);
    let mut out = theta.to_vec();
    for i in 0..m {
        let noise: f64 = (0..dy.len()).map(|k| 0.5 * (s0[k][i] + s1[k][i]) * dy[k]).sum();
        out[i] += 0.5 * (mu0[i] + mu1[i]) * dt + noise;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite Heun step from theta = {theta:?} with dY = {dy:?}")));
    }
    Ok(out)
}

/// Draws X0 from a mixture of scalar Gaussians with the given weights.
pub fn sample_gaussian_mixture(weights: &[f64], params: &[(f64, f64)], seed: u64) -> Result<f64> {
    use rand::Rng;
    if weights.len() != params.len() || weights.is_empty() {
        return Err(Error::validation("mixture weights and components differ in length"));
    }
    let mut r = stream(seed, engine::INITIAL, 0);
    let u: f64 = r.random();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut idx = weights.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc {
            idx = i;
            break;
        }
    }
    let (m, v) = params[idx];
    Ok(m + v.sqrt() * normal(&mut r))
}

/// Human-readable tag for a scenario's coefficient handling.
pub fn describe(sc: &ContinuousScenario) -> String {
    format!(
        "m = {}, channels = {}, steps = {}, cached = {}",
        sc.family.m(),
        sc.obs.d(),
        sc.path.steps(),
        sc.cache_tensors
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete_filter::{assemble_prediction_generator, predict_raw, Integrator};
    use crate::dynamics::Sensor;
    use crate::field::gaussian_field;
    use crate::quad::QuadratureSpec;

    fn fam2() -> MixtureFamily {
        MixtureFamily::gaussian(&[(-1.0, 1.0), (1.0, 1.0)], QuadratureSpec::default()).unwrap()
    }

    #[test]
    fn constant_sensor_has_no_diffusion() {
        let obs = ContinuousObsModel::scalar(Sensor::polynomial(&[3.0]));
        let model = DiffusionModel::bimodal_drift(1.0);
        let c = assemble_sde_coefficients(&fam2(), &model, &obs, 0.0).unwrap();
        let gen = assemble_prediction_generator(&fam2(), &model, 0.0).unwrap();
        let th = [0.3];
        assert!(c.diffusion(&th)[0][0].abs() < 1e-12);
        let d = c.drift(&th);
        let r = gen.rate(&th);
        assert!((d[0] - r[0]).abs() < 1e-12);
    }

    #[test]
    fn tensor_matches_field_quadrature() {
        let fam = fam2();
        let obs = ContinuousObsModel::scalar(Sensor::identity());
        let model = DiffusionModel::heat(1.0);
        let c = assemble_sde_coefficients(&fam, &model, &obs, 0.0).unwrap();
        assert!((c.beta[0][0] + 1.0).abs() < 1e-10 && (c.beta[0][1] - 1.0).abs() < 1e-10);
        let th = MixtureCoords::new(vec![0.5]).unwrap();
        let p = fam.density(&th).unwrap();
        let g1 = crate::dynamics::gammak(&p, &obs, 0, 0.0, fam.spec()).unwrap();
        let samples = fam.rule().sample(&g1, "gamma").unwrap();
        let direct = fam.project_samples(&samples);
        let tensor = c.diffusion(th.theta());
        assert!((direct[0] - tensor[0][0]).abs() < 1e-8);
    }

    #[test]
    fn zero_coefficients_are_fixed_points() {
        struct Zero;
        impl SdeSystem for Zero {
            fn drift(&self, t: &[f64]) -> Vec<f64> {
                vec![0.0; t.len()]
            }
            fn diffusion(&self, t: &[f64]) -> Vec<Vec<f64>> {
                vec![vec![0.0; t.len()]]
            }
        }
        assert_eq!(heun_step(&[0.2, 0.3], &Zero, &[0.7], 0.01).unwrap(), vec![0.2, 0.3]);
    }

    #[test]
    fn deterministic_limit_matches_exact_prediction() {
        let fam = fam2();
        let model = DiffusionModel::bimodal_drift(1.0);
        let obs = ContinuousObsModel::scalar(Sensor::zero());
        let c = assemble_sde_coefficients(&fam, &model, &obs, 0.0).unwrap();
        let gen = assemble_prediction_generator(&fam, &model, 0.0).unwrap();
        let mut errs = vec![];
        for &dt in &[0.02, 0.01] {
            let h = heun_step(&[0.3], &c, &[0.0], dt).unwrap();
            let e = predict_raw(&[0.3], &gen, dt, Integrator::Exact).unwrap();
            errs.push((h[0] - e[0]).abs());
        }
        // local trapezoid error is third order
        assert!(errs[1] < errs[0] / 6.0, "{errs:?}");
    }

    #[test]
    fn linear_stratonovich_sde_strong_order() {
        struct Lin(f64);
        impl SdeSystem for Lin {
            fn drift(&self, t: &[f64]) -> Vec<f64> {
                vec![0.0; t.len()]
            }
            fn diffusion(&self, t: &[f64]) -> Vec<Vec<f64>> {
                vec![vec![self.0 * t[0]]]
            }
        }
        let a = 0.8;
        let fine = 1usize << 12;
        let mut errs = vec![];
        let seeds = 200;
        for level in [6u32, 8, 10, 12] {
            let n = 1usize << level;
            let mut acc = 0.0;
            for s in 0..seeds {
                // Brownian increments at the finest level, aggregated
                let mut r = stream(s, 99, 0);
                let w: Vec<f64> = (0..fine).map(|_| normal(&mut r) * (1.0 / fine as f64).sqrt()).collect();
                let mut th = vec![1.0];
                let agg = fine / n;
                for k in 0..n {
                    let dy: f64 = w[k * agg..(k + 1) * agg].iter().sum();
                    th = heun_step(&th, &Lin(a), &[dy], 1.0 / n as f64).unwrap();
                }
                let y: f64 = w.iter().sum();
                acc += (th[0] - (a * y).exp()).abs();
            }
            errs.push(acc / seeds as f64);
        }
        let slope = (errs[0] / errs[3]).ln() / (64f64).ln();
        assert!(slope >= 0.5, "strong order {slope}, errors {errs:?}");
    }

    #[test]
    fn residual_pythagoras_and_tangent() {
        let fam = MixtureFamily::gaussian(&[(-1.0, 0.5), (0.0, 1.0), (1.0, 0.5)], QuadratureSpec::default()).unwrap();
        let v = gaussian_field(0.3, 0.8).sub(&gaussian_field(-0.2, 1.3));
        let vs = fam.rule().sample(&v, "v").unwrap();
        let c = fam.project_samples(&vs);
        let r = fam.residual_samples(&vs, &c);
        let pv: Vec<f64> = vs.iter().zip(&r).map(|(a, b)| a - b).collect();
        let lhs = fam.rule().dot(&vs, &vs);
        let rhs = fam.rule().dot(&pv, &pv) + fam.rule().dot(&r, &r);
        assert!((lhs - rhs).abs() < 1e-8 * lhs.max(1e-300) + 1e-15);
        let inside = fam.residual_samples(&pv, &fam.project_samples(&pv));
        assert!(fam.rule().norm(&inside) < 1e-8);
    }

    #[test]
    fn path_simulation_trivial_and_brownian() {
        let still = DiffusionModel::new(
            crate::dynamics::Coefficient::constant(0.0),
            crate::dynamics::Coefficient::constant(0.0),
            1.0,
            true,
        )
        .unwrap();
        let obs0 = ContinuousObsModel::scalar(Sensor::zero());
        let p = simulate_truth_and_observations(&still, &obs0, 1.0, 0.01, 0.5, 3).unwrap();
        assert!(p.x.iter().all(|x| *x == 0.5));
        assert_eq!(p.y[0], vec![0.0]);
        assert!(simulate_truth_and_observations(&still, &obs0, 1.0, 0.3, 0.0, 1).is_err());
        let heat = DiffusionModel::heat(1.0);
        let n = 2000;
        let ends: Vec<f64> = (0..n)
            .map(|s| *simulate_truth_and_observations(&heat, &obs0, 1.0, 0.05, 0.0, s).unwrap().x.last().unwrap())
            .collect();
        let var = ends.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.1, "{var}");
    }
}
