//! Filtering systems: the scalar state diffusion, discrete and continuous
//! observation models, the backward and forward (Fokker-Planck) operators,
//! likelihoods and the centered gamma fields.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::families::{AffineGaussian, LikelihoodFactor};
use crate::field::{Hint, ScalarField};
use crate::quad::{QuadratureSpec, Rule};

type TxFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Minimum number of grid nodes accepted by the forward operator.
pub const MIN_GRID_NODES: usize = 64;

/// A scalar coefficient c(t, x) with optional analytic x-derivatives.
#[derive(Clone)]
pub struct Coefficient {
    value: Arc<TxFn>,
    d1: Option<Arc<TxFn>>,
    d2: Option<Arc<TxFn>>,
    poly: Option<Vec<f64>>,
}

impl core::fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match &self.poly {
            Some(c) => write!(f, "Coefficient::polynomial({c:?})"),
            None => write!(f, "Coefficient(analytic derivatives: {})", self.d1.is_some()),
        }
    }
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ck| acc * x + ck)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter().enumerate().skip(1).map(|(k, ck)| k as f64 * ck).collect()
}

impl Coefficient {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient { value: Arc::new(f), d1: None, d2: None, poly: None }
    }

    pub fn with_derivatives(
        mut self,
        d1: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.d1 = Some(Arc::new(d1));
        self.d2 = Some(Arc::new(d2));
        self
    }

    pub fn constant(c: f64) -> Self {
        Self::polynomial(&[c])
    }

    /// sum_k coeffs[k] x^k, time invariant.
    pub fn polynomial(coeffs: &[f64]) -> Self {
        let c0: Vec<f64> = if coeffs.is_empty() { vec![0.0] } else { coeffs.to_vec() };
        let c1 = poly_deriv(&c0);
        let c2 = poly_deriv(&c1);
        let (a, b, c) = (c0.clone(), c1, c2);
        Coefficient {
            value: Arc::new(move |_, x| poly_eval(&a, x)),
            d1: Some(Arc::new(move |_, x| poly_eval(&b, x))),
            d2: Some(Arc::new(move |_, x| poly_eval(&c, x))),
            poly: Some(c0),
        }
    }

    pub fn polynomial_coeffs(&self) -> Option<&[f64]> {
        self.poly.as_deref()
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.d1.is_some() && self.d2.is_some()
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        (self.value)(t, x)
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        match &self.d1 {
            Some(d) => d(t, x),
            None => {
                let h = 1e-5 * x.abs().max(1.0);
                (self.eval(t, x + h) - self.eval(t, x - h)) / (2.0 * h)
            }
        }
    }

    pub fn dxx(&self, t: f64, x: f64) -> f64 {
        match &self.d2 {
            Some(d) => d(t, x),
            None => {
                let h = 1e-4 * x.abs().max(1.0);
                (self.eval(t, x + h) - 2.0 * self.eval(t, x) + self.eval(t, x - h)) / (h * h)
            }
        }
    }

    /// Affine form (slope, offset) when the coefficient is a polynomial of degree <= 1.
    pub fn affine(&self) -> Option<(f64, f64)> {
        let c = self.poly.as_ref()?;
        if c.iter().skip(2).any(|v| *v != 0.0) {
            return None;
        }
        Some((c.get(1).copied().unwrap_or(0.0), c[0]))
    }
}

/// Scalar diffusion dX = f(t, X) dt + sigma(t, X) dW with Var(dW) = q dt.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    pub drift: Coefficient,
    pub sigma: Coefficient,
    pub noise_cov: f64,
    pub time_invariant: bool,
    pub name: String,
}

impl DiffusionModel {
    pub fn new(drift: Coefficient, sigma: Coefficient, noise_cov: f64, time_invariant: bool) -> Result<Self> {
        if !(noise_cov > 0.0) || !noise_cov.is_finite() {
            return Err(Error::validation(format!("noise covariance must be positive, got {noise_cov}")));
        }
        Ok(DiffusionModel { drift, sigma, noise_cov, time_invariant, name: String::from("custom") })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// f = -alpha x, constant sigma.
    pub fn linear_ou(alpha: f64, sigma: f64) -> Self {
        DiffusionModel {
            drift: Coefficient::polynomial(&[0.0, -alpha]),
            sigma: Coefficient::constant(sigma),
            noise_cov: 1.0,
            time_invariant: true,
            name: String::from("linear-ou"),
        }
    }

    /// f = x - x^3 (double-well), constant sigma.
    pub fn bimodal_drift(sigma: f64) -> Self {
        DiffusionModel {
            drift: Coefficient::polynomial(&[0.0, 1.0, 0.0, -1.0]),
            sigma: Coefficient::constant(sigma),
            noise_cov: 1.0,
            time_invariant: true,
            name: String::from("bimodal-drift"),
        }
    }

    /// f = 0, constant sigma.
    pub fn heat(sigma: f64) -> Self {
        DiffusionModel {
            drift: Coefficient::constant(0.0),
            sigma: Coefficient::constant(sigma),
            noise_cov: 1.0,
            time_invariant: true,
            name: String::from("heat"),
        }
    }

    #[inline]
    pub fn f(&self, t: f64, x: f64) -> f64 {
        self.drift.eval(t, x)
    }

    /// a = sigma q sigma.
    #[inline]
    pub fn a(&self, t: f64, x: f64) -> f64 {
        let s = self.sigma.eval(t, x);
        self.noise_cov * s * s
    }

    pub fn a_dx(&self, t: f64, x: f64) -> f64 {
        2.0 * self.noise_cov * self.sigma.eval(t, x) * self.sigma.dx(t, x)
    }

    pub fn a_dxx(&self, t: f64, x: f64) -> f64 {
        let (s, s1, s2) = (self.sigma.eval(t, x), self.sigma.dx(t, x), self.sigma.dxx(t, x));
        2.0 * self.noise_cov * (s1 * s1 + s * s2)
    }

    /// (slope, sigma) when the model is linear-Gaussian: f = slope x, sigma constant.
    pub fn linear_gaussian(&self) -> Option<(f64, f64)> {
        let (slope, offset) = self.drift.affine()?;
        let (s1, s0) = self.sigma.affine()?;
        if offset != 0.0 || s1 != 0.0 || !self.time_invariant {
            return None;
        }
        Some((slope, s0 * self.noise_cov.sqrt()))
    }
}

/// Observation function h(t, x).
#[derive(Debug, Clone)]
pub struct Sensor {
    pub map: Coefficient,
}

impl Sensor {
    pub fn polynomial(coeffs: &[f64]) -> Self {
        Sensor { map: Coefficient::polynomial(coeffs) }
    }

    /// h(x) = x.
    pub fn identity() -> Self {
        Self::polynomial(&[0.0, 1.0])
    }

    /// h(x) = x^3.
    pub fn cubic() -> Self {
        Self::polynomial(&[0.0, 0.0, 0.0, 1.0])
    }

    pub fn zero() -> Self {
        Self::polynomial(&[0.0])
    }

    pub fn custom(c: Coefficient) -> Self {
        Sensor { map: c }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.map.eval(t, x)
    }

    pub fn affine(&self) -> Option<(f64, f64)> {
        self.map.affine()
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.map.affine(), Some((s, _)) if s == 0.0)
    }
}

/// Z_n = h(X_{t_n}) + V_n, V_n ~ N(0, r).
#[derive(Debug, Clone)]
pub struct DiscreteObsModel {
    pub sensor: Sensor,
    pub r: f64,
    pub times: Vec<f64>,
}

impl DiscreteObsModel {
    pub fn new(sensor: Sensor, r: f64, times: Vec<f64>) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::validation(format!("observation variance must be positive, got {r}")));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::validation(format!(
                    "observation times not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("observation times must be finite"));
        }
        Ok(DiscreteObsModel { sensor, r, times })
    }
}

/// dY = b(t, X) dt + dV with R = I.
#[derive(Debug, Clone)]
pub struct ContinuousObsModel {
    pub sensors: Vec<Sensor>,
}

impl ContinuousObsModel {
    pub fn new(sensors: Vec<Sensor>) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::validation("continuous observation model needs at least one sensor"));
        }
        Ok(ContinuousObsModel { sensors })
    }

    pub fn scalar(sensor: Sensor) -> Self {
        ContinuousObsModel { sensors: vec![sensor] }
    }

    pub fn d(&self) -> usize {
        self.sensors.len()
    }

    /// |b(t, x)|^2.
    pub fn b_squared(&self, t: f64, x: f64) -> f64 {
        self.sensors.iter().map(|s| s.eval(t, x).powi(2)).sum()
    }
}

/// Whether finite differences may stand in for missing analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativePolicy {
    #[default]
    AllowFiniteDifference,
    AnalyticOnly,
}

/// L phi = f phi' + (1/2) a phi''.
pub fn backward_operator(model: &DiffusionModel, phi: &ScalarField, t: f64) -> Result<ScalarField> {
    backward_operator_with(model, phi, t, DerivativePolicy::default())
}

pub fn backward_operator_with(
    model: &DiffusionModel,
    phi: &ScalarField,
    t: f64,
    policy: DerivativePolicy,
) -> Result<ScalarField> {
    check_phi(phi, policy)?;
    let (m, p) = (model.clone(), phi.clone());
    Ok(ScalarField::new_1d(phi.hint().clone(), move |x| m.f(t, x) * p.d1(x) + 0.5 * m.a(t, x) * p.d2(x)))
}

fn check_phi(phi: &ScalarField, policy: DerivativePolicy) -> Result<()> {
    if phi.dim() != 1 {
        return Err(Error::validation("operators act on scalar-state fields"));
    }
    if policy == DerivativePolicy::AnalyticOnly && !phi.has_analytic_derivatives() {
        return Err(Error::Capability(String::from(
            "field has no analytic derivatives and finite differences are disabled",
        )));
    }
    Ok(())
}

/// L phi sampled on the nodes of `rule`.
pub fn backward_samples(model: &DiffusionModel, phi: &ScalarField, t: f64, rule: &Rule) -> Result<Vec<f64>> {
    check_phi(phi, DerivativePolicy::default())?;
    let xs = rule.abscissae();
    let mut out = Vec::with_capacity(xs.len());
    for (k, &x) in xs.iter().enumerate() {
        let v = model.f(t, x) * phi.d1(x) + 0.5 * model.a(t, x) * phi.d2(x);
        if !v.is_finite() {
            return Err(Error::Domain { what: String::from("backward operator"), node: k, x, value: v });
        }
        out.push(v);
    }
    Ok(out)
}

/// L* p = -(f p)' + (1/2)(a p)'' evaluated pointwise from the derivatives of p.
pub fn forward_samples(model: &DiffusionModel, p: &ScalarField, t: f64, rule: &Rule) -> Result<Vec<f64>> {
    check_phi(p, DerivativePolicy::default())?;
    let xs = rule.abscissae();
    let mut out = Vec::with_capacity(xs.len());
    for (k, &x) in xs.iter().enumerate() {
        let (p0, p1, p2) = (p.eval1(x), p.d1(x), p.d2(x));
        let (f0, f1) = (model.f(t, x), model.drift.dx(t, x));
        let (a0, a1, a2) = (model.a(t, x), model.a_dx(t, x), model.a_dxx(t, x));
        let v = -(f1 * p0 + f0 * p1) + 0.5 * (a2 * p0 + 2.0 * a1 * p1 + a0 * p2);
        if !v.is_finite() {
            return Err(Error::Domain { what: String::from("forward operator"), node: k, x, value: v });
        }
        out.push(v);
    }
    Ok(out)
}

/// Uniform grid of `n` nodes on [lo, hi], ends included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || n < 3 {
            return Err(Error::validation(format!("bad grid [{lo}, {hi}] with {n} nodes")));
        }
        Ok(UniformGrid { lo, hi, n })
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.lo + self.dx() * i as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }
}

/// Values on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::validation("grid field length differs from the grid"));
        }
        Ok(GridField { grid, values })
    }

    pub fn sample(grid: UniformGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n).map(|i| f(grid.x(i))).collect();
        GridField { grid, values }
    }

    /// sum_i v_i dx.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }
}

/// Tridiagonal coefficients (lower, diag, upper) of the divergence-form
/// discretization of L* with zero-flux boundaries. Every column sums to zero.
pub fn forward_tridiagonal(
    model: &DiffusionModel,
    grid: &UniformGrid,
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if grid.n < MIN_GRID_NODES {
        return Err(Error::validation(format!(
            "forward operator needs at least {MIN_GRID_NODES} grid nodes, got {}",
            grid.n
        )));
    }
    let n = grid.n;
    let dx = grid.dx();
    let a: Vec<f64> = (0..n).map(|i| model.a(t, grid.x(i))).collect();
    // drift at the interfaces i + 1/2
    let fh: Vec<f64> = (0..n - 1).map(|i| model.f(t, grid.x(i) + 0.5 * dx)).collect();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        if i > 0 {
            // flux through i - 1/2 enters cell i
            lower[i] = (0.5 * fh[i - 1] + 0.5 * a[i - 1] / dx) / dx;
            diag[i] += (0.5 * fh[i - 1] - 0.5 * a[i] / dx) / dx;
        }
        if i + 1 < n {
            diag[i] -= (0.5 * fh[i] + 0.5 * a[i] / dx) / dx;
            upper[i] = -(0.5 * fh[i] - 0.5 * a[i + 1] / dx) / dx;
        }
    }
    if let Some((i, v)) = a.iter().chain(&fh).enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Domain {
            what: String::from("diffusion coefficients"),
            node: i,
            x: grid.x(i.min(n - 1)),
            value: *v,
        });
    }
    Ok((lower, diag, upper))
}

/// Divergence-form finite-volume L* p on a grid.
pub fn forward_operator(model: &DiffusionModel, p: &GridField, t: f64) -> Result<GridField> {
    let (l, d, u) = forward_tridiagonal(model, &p.grid, t)?;
    let v = &p.values;
    let n = v.len();
    let out = (0..n)
        .map(|i| {
            let mut s = d[i] * v[i];
            if i > 0 {
                s += l[i] * v[i - 1];
            }
            if i + 1 < n {
                s += u[i] * v[i + 1];
            }
            s
        })
        .collect();
    GridField::new(p.grid, out)
}

/// Psi(x) = exp(-(z - h(x))^2 / (2 r)).
pub fn likelihood(z: f64, obs: &DiscreteObsModel, t: f64) -> LikelihoodFactor {
    let r = obs.r;
    if let Some((slope, offset)) = obs.sensor.affine() {
        return LikelihoodFactor::affine_gaussian(AffineGaussian { slope, offset, z, r });
    }
    let (h0, h1, h2) = (obs.sensor.map.clone(), obs.sensor.map.clone(), obs.sensor.map.clone());
    let log = ScalarField::new_1d(Hint::scalar(0.0, 1.0), move |x| {
        let e = z - h0.eval(t, x);
        -0.5 * e * e / r
    })
    .with_derivatives_1d(
        move |x| (z - h1.eval(t, x)) * h1.dx(t, x) / r,
        move |x| {
            let d = h2.dx(t, x);
            (-(d * d) + (z - h2.eval(t, x)) * h2.dxx(t, x)) / r
        },
    );
    LikelihoodFactor::from_log(log)
}

fn expectation(p: &ScalarField, f: impl Fn(f64) -> f64, spec: &QuadratureSpec, what: &str) -> Result<f64> {
    let rule = spec.rule(p.hint())?;
    let ps = rule.sample(p, "density")?;
    let mut acc = 0.0;
    for (k, &x) in rule.abscissae().iter().enumerate() {
        acc += rule.weights()[k] * ps[k] * f(x);
    }
    if !acc.is_finite() {
        return Err(Error::Domain { what: format!("expectation of {what}"), node: 0, x: f64::NAN, value: acc });
    }
    Ok(acc)
}

/// gamma0(p) = (1/2)(|b|^2 - E_p|b|^2) p.
pub fn gamma0(p: &ScalarField, obs: &ContinuousObsModel, t: f64, spec: &QuadratureSpec) -> Result<ScalarField> {
    let o = obs.clone();
    let e = expectation(p, |x| o.b_squared(t, x), spec, "|b|^2")?;
    let (o, pp) = (obs.clone(), p.clone());
    Ok(ScalarField::new_1d(p.hint().clone(), move |x| 0.5 * (o.b_squared(t, x) - e) * pp.eval1(x)))
}

/// gamma^k(p) = (b^k - E_p b^k) p.
pub fn gammak(
    p: &ScalarField,
    obs: &ContinuousObsModel,
    k: usize,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<ScalarField> {
    let s = obs.sensors.get(k).ok_or_else(|| Error::validation(format!("sensor index {k} out of range")))?.clone();
    let s1 = s.clone();
    let e = expectation(p, move |x| s1.eval(t, x), spec, "b^k")?;
    let pp = p.clone();
    Ok(ScalarField::new_1d(p.hint().clone(), move |x| (s.eval(t, x) - e) * pp.eval1(x)))
}

/// Empirical constants of the local Lipschitz, non-explosion and polynomial
/// growth conditions over [-radius, radius]. Diagnostic only.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub radius: f64,
    pub lipschitz: f64,
    pub non_explosion: f64,
    pub growth_constant: f64,
    pub growth_order: f64,
}

pub fn check_assumptions(
    model: &DiffusionModel,
    sensor: &Sensor,
    t: f64,
    radius: f64,
    samples: usize,
) -> Result<AssumptionReport> {
    if !(radius > 0.0) || samples < 3 {
        return Err(Error::validation("assumption check needs radius > 0 and at least 3 samples"));
    }
    let grid = UniformGrid::new(-radius, radius, samples)?;
    let xs = grid.nodes();
    let f: Vec<f64> = xs.iter().map(|&x| model.f(t, x)).collect();
    let a: Vec<f64> = xs.iter().map(|&x| model.a(t, x)).collect();
    let mut lipschitz = 0.0f64;
    for i in 1..xs.len() {
        let dx = xs[i] - xs[i - 1];
        lipschitz = lipschitz.max(((f[i] - f[i - 1]) / dx).abs()).max(((a[i] - a[i - 1]) / dx).abs());
    }
    let mut non_explosion = 0.0f64;
    for i in 0..xs.len() {
        let w = 1.0 + xs[i] * xs[i];
        non_explosion = non_explosion.max(xs[i] * f[i] / w).max(a[i] / w);
    }
    let growth_order = match sensor.map.polynomial_coeffs() {
        Some(c) => c.iter().rposition(|v| *v != 0.0).unwrap_or(0) as f64,
        None => {
            let (b1, b2) = (sensor.eval(t, radius / 2.0).abs(), sensor.eval(t, radius).abs());
            if b1 > 0.0 && b2 > 0.0 {
                ((b2 / b1).ln() / 2f64.ln()).max(0.0)
            } else {
                0.0
            }
        }
    };
    let growth_constant =
        xs.iter().map(|&x| sensor.eval(t, x).abs() / (1.0 + x.abs().powf(growth_order))).fold(0.0, f64::max);
    Ok(AssumptionReport { radius, lipschitz, non_explosion, growth_constant, growth_order })
}
