//! Finite-volume solvers for the Fokker-Planck and Kushner equations on a
//! uniform one-dimensional grid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;

use super::{InitialLaw, MomentTrajectory};
use crate::continuous_filter::PathBundle;
use crate::dynamics::{forward_tridiagonal, ContinuousObsModel, DiffusionModel, DiscreteObsModel, UniformGrid};
use crate::error::{Error, Result};

/// Largest a dt / dx^2 accepted by the explicit scheme.
pub const CFL_LIMIT: f64 = 0.45;

/// Density values on a uniform grid; integrals are rectangle sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl GridDensity {
    pub fn new(grid: UniformGrid, values: Vec<f64>, normalized: bool) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::validation("grid density length differs from the grid"));
        }
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain { what: "grid density".into(), node: i, x: grid.x(i), value: values[i] });
        }
        let out = GridDensity { grid, values, normalized };
        if normalized && (out.mass() - 1.0).abs() > 1e-8 {
            return Err(Error::validation(format!("grid density has mass {} but is flagged normalized", out.mass())));
        }
        Ok(out)
    }

    /// Samples `f` at the nodes and normalizes.
    pub fn from_fn(grid: UniformGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = (0..grid.n).map(|i| f(grid.x(i)).max(0.0)).collect();
        let mut out = GridDensity::new(grid, values, false)?;
        out.normalize()?;
        Ok(out)
    }

    pub fn from_law(grid: UniformGrid, law: &InitialLaw) -> Result<Self> {
        Self::from_fn(grid, |x| law.pdf(x))
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::numeric(format!("grid density has mass {mass}")));
        }
        for v in &mut self.values {
            *v /= mass;
        }
        self.normalized = true;
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        let dx = self.grid.dx();
        (0..self.grid.n).map(|i| self.values[i] * self.grid.x(i)).sum::<f64>() * dx / self.mass()
    }

    pub fn variance(&self) -> f64 {
        let dx = self.grid.dx();
        let mu = self.mean();
        (0..self.grid.n)
            .map(|i| {
                let d = self.grid.x(i) - mu;
                self.values[i] * d * d
            })
            .sum::<f64>()
            * dx
            / self.mass()
    }

    /// (sum_i (v_i - f(x_i))^2 dx)^{1/2}.
    pub fn l2_distance_to(&self, f: impl Fn(f64) -> f64) -> f64 {
        let dx = self.grid.dx();
        (0..self.grid.n)
            .map(|i| {
                let d = self.values[i] - f(self.grid.x(i));
                d * d
            })
            .sum::<f64>()
            .sqrt()
            * dx.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridScheme {
    Explicit,
    #[default]
    CrankNicolson,
}

/// Output of a Fokker-Planck solve.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub density: GridDensity,
    pub steps: usize,
    /// Steps at which negative values were floored to zero.
    pub floor_events: Vec<usize>,
}

/// Moments of a grid filter plus density snapshots at selected record indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridTrajectory {
    pub moments: MomentTrajectory,
    /// (record index, density)
    pub snapshots: Vec<(usize, GridDensity)>,
    pub floor_events: usize,
}

/// Solves a tridiagonal system; `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 {
        return Err(Error::numeric("zero pivot in tridiagonal solve"));
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return Err(Error::numeric(format!("bad pivot {piv} in tridiagonal solve at row {i}")));
        }
        c[i] = if i + 1 < n { upper[i] / piv } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Advances a grid density through one Fokker-Planck step at a time.
struct FpStepper<'a> {
    model: &'a DiffusionModel,
    scheme: GridScheme,
    grid: UniformGrid,
    cached: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl<'a> FpStepper<'a> {
    fn new(model: &'a DiffusionModel, grid: UniformGrid, scheme: GridScheme) -> Self {
        FpStepper { model, scheme, grid, cached: None }
    }

    fn operator(&mut self, t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if self.model.time_invariant {
            if self.cached.is_none() {
                self.cached = Some(forward_tridiagonal(self.model, &self.grid, t)?);
            }
            return Ok(self.cached.clone().unwrap());
        }
        forward_tridiagonal(self.model, &self.grid, t)
    }

    fn check_cfl(&self, t: f64, dt: f64) -> Result<()> {
        let dx = self.grid.dx();
        let amax = (0..self.grid.n).map(|i| self.model.a(t, self.grid.x(i)).abs()).fold(0.0, f64::max);
        let ratio = amax * dt / (dx * dx);
        if ratio > CFL_LIMIT {
            return Err(Error::Cfl { ratio, limit: CFL_LIMIT });
        }
        Ok(())
    }

    /// Returns true when negative values had to be floored.
    fn step(&mut self, p: &mut GridDensity, t: f64, dt: f64) -> Result<bool> {
        let v = &p.values;
        let n = v.len();
        let apply = |l: &[f64], d: &[f64], u: &[f64], s: f64| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut y = d[i] * v[i];
                    if i > 0 {
                        y += l[i] * v[i - 1];
                    }
                    if i + 1 < n {
                        y += u[i] * v[i + 1];
                    }
                    v[i] + s * y
                })
                .collect()
        };
        let next = match self.scheme {
            GridScheme::Explicit => {
                if !self.model.time_invariant || self.cached.is_none() {
                    self.check_cfl(t, dt)?;
                }
                let (l, d, u) = self.operator(t)?;
                apply(&l, &d, &u, dt)
            }
            GridScheme::CrankNicolson => {
                let (l, d, u) = self.operator(t + 0.5 * dt)?;
                let rhs = apply(&l, &d, &u, 0.5 * dt);
                let h = 0.5 * dt;
                let ll: Vec<f64> = l.iter().map(|x| -h * x).collect();
                let dd: Vec<f64> = d.iter().map(|x| 1.0 - h * x).collect();
                let uu: Vec<f64> = u.iter().map(|x| -h * x).collect();
                solve_tridiagonal(&ll, &dd, &uu, &rhs)?
            }
        };
        if let Some(i) = next.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain {
                what: "grid Fokker-Planck step".into(),
                node: i,
                x: self.grid.x(i),
                value: next[i],
            });
        }
        p.values = next;
        let floored = p.values.iter().any(|x| *x < 0.0);
        if floored {
            for x in &mut p.values {
                *x = x.max(0.0);
            }
            if p.normalized {
                p.normalize()?;
            }
        }
        Ok(floored)
    }
}

fn step_plan(t0: f64, t1: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t1 >= t0) || !(dt > 0.0) {
        return Err(Error::validation(format!("bad time span [{t0}, {t1}] with step {dt}")));
    }
    if t1 == t0 {
        return Ok((0, dt));
    }
    let n = ((t1 - t0) / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok((n, (t1 - t0) / n as f64))
}

/// Solves dp/dt = L* p from t0 to t1 with steps no longer than `dt`.
pub fn grid_fokker_planck_solve(
    model: &DiffusionModel,
    p0: &GridDensity,
    t0: f64,
    t1: f64,
    dt: f64,
    scheme: GridScheme,
) -> Result<GridSolution> {
    let (n, h) = step_plan(t0, t1, dt)?;
    let mut stepper = FpStepper::new(model, p0.grid, scheme);
    let mut p = p0.clone();
    let mut floor_events = Vec::new();
    for k in 0..n {
        if stepper.step(&mut p, t0 + h * k as f64, h)? {
            floor_events.push(k + 1);
        }
    }
    Ok(GridSolution { density: p, steps: n, floor_events })
}

/// Splitting solver for the Kushner equation along an observation path:
/// a Fokker-Planck step followed by p <- p exp(b . dY - |b|^2 dt / 2), renormalized.
/// `fp_dt` bounds the Fokker-Planck sub-step (defaults to the path step).
pub fn grid_kushner_solve(
    model: &DiffusionModel,
    obs: &ContinuousObsModel,
    p0: &GridDensity,
    path: &PathBundle,
    scheme: GridScheme,
    fp_dt: Option<f64>,
) -> Result<GridTrajectory> {
    if path.y.first().map(|y| y.len()) != Some(obs.d()) {
        return Err(Error::validation("observation path has the wrong number of channels"));
    }
    let grid = p0.grid;
    let mut stepper = FpStepper::new(model, grid, scheme);
    let mut p = p0.clone();
    p.normalize()?;
    let mut out = GridTrajectory::default();
    out.moments.push(path.times[0], p.mean(), p.variance());
    let xs = grid.nodes();
    let (sub, h) = step_plan(0.0, path.dt, fp_dt.unwrap_or(path.dt).min(path.dt))?;
    let mut ell = vec![0.0; grid.n];
    for k in 0..path.steps() {
        let t = path.times[k];
        for s in 0..sub {
            if stepper.step(&mut p, t + h * s as f64, h)? {
                out.floor_events += 1;
            }
        }
        let dy = path.dy(k);
        for (i, &x) in xs.iter().enumerate() {
            let mut l = 0.0;
            for (c, sensor) in obs.sensors.iter().enumerate() {
                let b = sensor.eval(t, x);
                l += b * dy[c] - 0.5 * b * b * path.dt;
            }
            ell[i] = l;
        }
        let mx = ell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !mx.is_finite() {
            return Err(Error::numeric(format!("non-finite log-likelihood at step {k}")));
        }
        for (v, l) in p.values.iter_mut().zip(&ell) {
            *v *= (l - mx).exp();
        }
        p.normalize()?;
        out.moments.push(path.times[k + 1], p.mean(), p.variance());
    }
    out.snapshots.push((out.moments.len() - 1, p));
    Ok(out)
}

/// Fokker-Planck prediction with pointwise Bayes corrections at the observation
/// times, recorded on the same schedule as the discrete projection filter.
/// An empty `zs` gives a pure prediction run over `obs.times`.
#[allow(clippy::too_many_arguments)]
pub fn grid_discrete_filter(
    model: &DiffusionModel,
    obs: &DiscreteObsModel,
    zs: &[f64],
    p0: &GridDensity,
    t0: f64,
    dt: f64,
    scheme: GridScheme,
    substeps: usize,
) -> Result<GridTrajectory> {
    if !zs.is_empty() && zs.len() != obs.times.len() {
        return Err(Error::validation("observation values and times differ in length"));
    }
    if substeps == 0 {
        return Err(Error::validation("substeps must be at least 1"));
    }
    let grid = p0.grid;
    let xs = grid.nodes();
    let mut stepper = FpStepper::new(model, grid, scheme);
    let mut p = p0.clone();
    p.normalize()?;
    let mut out = GridTrajectory::default();
    let keep = |out: &mut GridTrajectory, t: f64, p: &GridDensity| {
        out.moments.push(t, p.mean(), p.variance());
        out.snapshots.push((out.moments.len() - 1, p.clone()));
    };
    keep(&mut out, t0, &p);
    let mut t = t0;
    for (n, &tn) in obs.times.iter().enumerate() {
        let h = (tn - t) / substeps as f64;
        for s in 0..substeps {
            let t_next = if s + 1 == substeps { tn } else { t + h };
            let (steps, dt_k) = step_plan(t, t_next, dt)?;
            for k in 0..steps {
                if stepper.step(&mut p, t + dt_k * k as f64, dt_k)? {
                    out.floor_events += 1;
                }
            }
            t = t_next;
            if !(s + 1 == substeps && !zs.is_empty()) {
                keep(&mut out, t, &p);
            }
        }
        if let Some(&z) = zs.get(n) {
            let ell: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    let e = z - obs.sensor.eval(t, x);
                    -e * e / (2.0 * obs.r)
                })
                .collect();
            let mx = ell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (v, l) in p.values.iter_mut().zip(&ell) {
                *v *= (l - mx).exp();
            }
            p.normalize()?;
            keep(&mut out, t, &p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous_filter::simulate_truth_and_observations;
    use crate::dynamics::{Coefficient, Sensor};
    use crate::field::gaussian_pdf;

    fn heat_error(dx: f64) -> f64 {
        let n = (16.0 / dx).round() as usize + 1;
        let grid = UniformGrid::new(-8.0, 8.0, n).unwrap();
        let p0 = GridDensity::from_fn(grid, |x| gaussian_pdf(x, 0.0, 0.5)).unwrap();
        let sol =
            grid_fokker_planck_solve(&DiffusionModel::heat(1.0), &p0, 0.0, 0.5, 0.05 * dx, GridScheme::CrankNicolson)
                .unwrap();
        sol.density.l2_distance_to(|x| gaussian_pdf(x, 0.0, 1.0))
    }

    #[test]
    fn heat_kernel_second_order() {
        let e1 = heat_error(0.2);
        let e2 = heat_error(0.1);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.3, "order {order} ({e1}, {e2})");
    }

    #[test]
    fn zero_dynamics_and_mass() {
        let grid = UniformGrid::new(-6.0, 6.0, 241).unwrap();
        let p0 = GridDensity::from_fn(grid, |x| gaussian_pdf(x, 1.0, 0.7)).unwrap();
        let still = DiffusionModel::new(Coefficient::constant(0.0), Coefficient::constant(0.0), 1.0, true).unwrap();
        let s = grid_fokker_planck_solve(&still, &p0, 0.0, 1.0, 0.01, GridScheme::Explicit).unwrap();
        assert_eq!(s.density.values, p0.values);
        let s = grid_fokker_planck_solve(
            &DiffusionModel::bimodal_drift(0.8),
            &p0,
            0.0,
            1.0,
            0.01,
            GridScheme::CrankNicolson,
        )
        .unwrap();
        assert!((s.density.mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ou_stationary_and_cfl() {
        let grid = UniformGrid::new(-6.0, 6.0, 481).unwrap();
        let p0 = GridDensity::from_fn(grid, |x| gaussian_pdf(x, 0.0, 0.5)).unwrap();
        let ou = DiffusionModel::linear_ou(1.0, 1.0);
        let s = grid_fokker_planck_solve(&ou, &p0, 0.0, 1.0, 0.00025, GridScheme::Explicit).unwrap();
        assert!(s.density.l2_distance_to(|x| gaussian_pdf(x, 0.0, 0.5)) < 1e-3);
        let err = grid_fokker_planck_solve(&ou, &p0, 0.0, 1.0, 0.01, GridScheme::Explicit).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
    }

    #[test]
    fn kushner_without_sensor_is_fokker_planck() {
        let grid = UniformGrid::new(-6.0, 6.0, 241).unwrap();
        let p0 = GridDensity::from_fn(grid, |x| gaussian_pdf(x, 0.3, 0.5)).unwrap();
        let model = DiffusionModel::bimodal_drift(0.8);
        let obs = ContinuousObsModel::scalar(Sensor::zero());
        let path = simulate_truth_and_observations(&model, &obs, 0.5, 0.01, 0.0, 4).unwrap();
        let k = grid_kushner_solve(&model, &obs, &p0, &path, GridScheme::CrankNicolson, None).unwrap();
        let f = grid_fokker_planck_solve(&model, &p0, 0.0, 0.5, 0.01, GridScheme::CrankNicolson).unwrap();
        let d = &k.snapshots[0].1;
        let diff = d.values.iter().zip(&f.density.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-13, "{diff}");
    }

    #[test]
    fn tridiagonal_solve() {
        let l = [0.0, 1.0, 1.0];
        let d = [4.0, 4.0, 4.0];
        let u = [1.0, 1.0, 0.0];
        let x = solve_tridiagonal(&l, &d, &u, &[5.0, 6.0, 5.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
