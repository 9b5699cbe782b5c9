//! The simple mixture family: convex combinations of m+1 fixed basis densities,
//! its constant direct-L2 metric, and the Bayes update of the basis.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::{gaussian_field, gaussian_log_pdf, linear_combination, Hint, ScalarField};
use crate::geometry::{MetricMatrix, ParametricFamily};
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::quad::{QuadratureSpec, Rule};

/// Interior margin kept between filter states and the simplex boundary.
pub const EPS_SIMPLEX: f64 = 1e-10;
/// Largest undershoot that is clipped back instead of reported as a manifold exit.
pub const CLIP_TOLERANCE: f64 = 1e-6;
/// Relative eigenvalue floor of the mixture metric.
pub const DEGENERATE_RATIO: f64 = 1e-12;
/// Maximum number of accumulated likelihood factors per basis density.
pub const MAX_LOG_FACTORS: usize = 64;
/// Allowed normalization defect of a basis density.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

const FOLD_NODES: usize = 2001;

/// A scalar Gaussian N(mean, var).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub mean: f64,
    pub var: f64,
}

impl GaussianComponent {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !mean.is_finite() || !(var > 0.0) || !var.is_finite() {
            return Err(Error::validation(format!(
                "gaussian component needs finite mean and var > 0, got N({mean}, {var})"
            )));
        }
        Ok(GaussianComponent { mean, var })
    }
}

#[derive(Debug, Clone)]
pub enum Base {
    Gaussian(GaussianComponent),
    Field(ScalarField),
}

/// A basis density: a base density times accumulated likelihood factors,
/// `q(x) = base(x) exp(sum_k l_k(x) - log_norm)`.
#[derive(Clone)]
pub struct BasisDensity {
    base: Base,
    log_factors: Vec<ScalarField>,
    log_norm: f64,
    hint: Hint,
    density: ScalarField,
    log_density: ScalarField,
}

impl core::fmt::Debug for BasisDensity {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("BasisDensity")
            .field("base", &self.base)
            .field("factors", &self.log_factors.len())
            .field("log_norm", &self.log_norm)
            .field("hint", &self.hint)
            .finish()
    }
}

fn log_of_base(base: &Base) -> ScalarField {
    match base {
        Base::Gaussian(g) => {
            let (m, v) = (g.mean, g.var);
            ScalarField::new_1d(Hint::scalar(m, v.sqrt()), move |x| gaussian_log_pdf(x, m, v))
                .with_derivatives_1d(move |x| -(x - m) / v, move |_| -1.0 / v)
        }
        Base::Field(f) => f.compose_1d(|y| (y.ln(), 1.0 / y, -1.0 / (y * y))),
    }
}

impl BasisDensity {
    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        let g = GaussianComponent::new(mean, var)?;
        Ok(Self::assemble(Base::Gaussian(g), Vec::new(), 0.0, Hint::scalar(mean, var.sqrt())))
    }

    /// A general one-dimensional base density; normalization is checked when a
    /// family is built from it.
    pub fn from_field(field: ScalarField) -> Result<Self> {
        if field.dim() != 1 {
            return Err(Error::validation("basis densities are one-dimensional"));
        }
        let hint = field.hint().clone();
        Ok(Self::assemble(Base::Field(field), Vec::new(), 0.0, hint))
    }

    fn assemble(base: Base, log_factors: Vec<ScalarField>, log_norm: f64, hint: Hint) -> Self {
        let (density, log_density) = if log_factors.is_empty() {
            let d = match &base {
                Base::Gaussian(g) => gaussian_field(g.mean, g.var),
                Base::Field(f) => f.clone(),
            };
            (d, log_of_base(&base))
        } else {
            let mut terms = vec![log_of_base(&base)];
            terms.extend(log_factors.iter().cloned());
            let mut coeffs = vec![1.0; terms.len()];
            terms.push(ScalarField::constant(hint.clone(), 1.0));
            coeffs.push(-log_norm);
            let log = linear_combination(&coeffs, &terms).with_hint(hint.clone());
            let d = log.compose_1d(|y| {
                let e = y.exp();
                (e, e, e)
            });
            (d, log)
        };
        BasisDensity {
            base,
            log_factors,
            log_norm,
            hint: hint.clone(),
            density: density.with_hint(hint.clone()),
            log_density: log_density.with_hint(hint),
        }
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    /// The Gaussian parameters when the density is a plain Gaussian.
    pub fn as_gaussian(&self) -> Option<GaussianComponent> {
        match (&self.base, self.log_factors.is_empty()) {
            (Base::Gaussian(g), true) => Some(*g),
            _ => None,
        }
    }

    pub fn log_factors(&self) -> &[ScalarField] {
        &self.log_factors
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn hint(&self) -> &Hint {
        &self.hint
    }

    pub fn field(&self) -> &ScalarField {
        &self.density
    }

    pub fn log_field(&self) -> &ScalarField {
        &self.log_density
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.density.eval1(x)
    }

    /// Multiplies by `exp(log_psi)` and renormalizes. Returns the new density and
    /// `ln int exp(log_psi) q`.
    fn absorb(&self, log_psi: &ScalarField, spec: &QuadratureSpec) -> Result<(BasisDensity, f64)> {
        let rule = spec.rule(&self.hint)?;
        let lq = rule.sample(&self.log_density, "basis log-density")?;
        let lp = rule.sample(log_psi, "log-likelihood")?;
        let log_mass = log_weighted_sum(rule.weights(), &lq, &lp);
        if !log_mass.is_finite() {
            return Err(Error::Starvation { component: 0, integral: log_mass.exp() });
        }
        let mut factors = self.log_factors.clone();
        factors.push(log_psi.clone());
        let log_norm = self.log_norm + log_mass;
        // recenter the hint on the updated component
        let (mean, var) = {
            let vals: Vec<f64> = lq.iter().zip(&lp).map(|(a, b)| (a + b - log_mass).exp()).collect();
            let xs = rule.abscissae();
            let m1: f64 = (0..rule.len()).map(|k| rule.weights()[k] * vals[k] * xs[k]).sum();
            let m2: f64 = (0..rule.len()).map(|k| rule.weights()[k] * vals[k] * (xs[k] - m1) * (xs[k] - m1)).sum();
            (m1, m2)
        };
        if !(var > 0.0) || !mean.is_finite() {
            return Err(Error::DegenerateUpdate(format!("updated component has moments ({mean}, {var})")));
        }
        let hint = Hint::scalar(mean, var.sqrt());
        let mut out = Self::assemble(self.base.clone(), factors, log_norm, hint);
        if out.log_factors.len() > MAX_LOG_FACTORS {
            out = out.folded(spec)?;
        }
        Ok((out, log_mass))
    }

    /// Replaces the factor list by one tabulated factor (quintic Hermite
    /// interpolation of the accumulated log-likelihood on the current support).
    fn folded(&self, spec: &QuadratureSpec) -> Result<BasisDensity> {
        let sum = linear_combination(&vec![1.0; self.log_factors.len()], &self.log_factors);
        let (c, s) = (self.hint.center[0], self.hint.scale[0]);
        let table = HermiteTable::new(&sum, c - 10.0 * s, c + 10.0 * s, FOLD_NODES)?;
        let folded = table.into_field(self.hint.clone());
        // the normalization of the tabulated product is recomputed from scratch
        let rule = spec.rule(&self.hint)?;
        let base = Self::assemble(self.base.clone(), vec![folded.clone()], 0.0, self.hint.clone());
        let lq = rule.sample(&base.log_density, "folded log-density")?;
        let zero = vec![0.0; lq.len()];
        let log_mass = log_weighted_sum(rule.weights(), &lq, &zero);
        Ok(Self::assemble(self.base.clone(), vec![folded], log_mass, self.hint.clone()))
    }
}

/// ln sum_k w_k exp(a_k + b_k), computed without overflow.
fn log_weighted_sum(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mx = a.iter().zip(b).map(|(x, y)| x + y).fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return f64::NEG_INFINITY;
    }
    let s: f64 = w.iter().zip(a.iter().zip(b)).map(|(wk, (x, y))| wk * (x + y - mx).exp()).sum();
    mx + s.ln()
}

/// Quintic Hermite interpolant on a uniform grid, quadratic extrapolation outside.
struct HermiteTable {
    lo: f64,
    step: f64,
    v: Vec<f64>,
    d: Vec<f64>,
    dd: Vec<f64>,
}

impl HermiteTable {
    fn new(f: &ScalarField, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let step = (hi - lo) / (n - 1) as f64;
        let mut v = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        let mut dd = Vec::with_capacity(n);
        for k in 0..n {
            let x = lo + step * k as f64;
            let (a, b, c) = (f.eval1(x), f.d1(x), f.d2(x));
            if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                return Err(Error::Domain { what: String::from("folded likelihood"), node: k, x, value: a });
            }
            v.push(a);
            d.push(b);
            dd.push(c);
        }
        Ok(HermiteTable { lo, step, v, d, dd })
    }

    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.v.len();
        let hi = self.lo + self.step * (n - 1) as f64;
        let edge = |k: usize, x0: f64| {
            let y = x - x0;
            (self.v[k] + self.d[k] * y + 0.5 * self.dd[k] * y * y, self.d[k] + self.dd[k] * y, self.dd[k])
        };
        if x <= self.lo {
            return edge(0, self.lo);
        }
        if x >= hi {
            return edge(n - 1, hi);
        }
        let s = (x - self.lo) / self.step;
        let k = (s.floor() as usize).min(n - 2);
        let t = s - k as f64;
        let h = self.step;
        let (t2, t3, t4, t5) = (t * t, t * t * t, t * t * t * t, t * t * t * t * t);
        // basis values and first/second t-derivatives
        let b = [
            (
                1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
                -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
                -60.0 * t + 180.0 * t2 - 120.0 * t3,
            ),
            (
                t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
                1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
                -36.0 * t + 96.0 * t2 - 60.0 * t3,
            ),
            (
                0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
                t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4,
                1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3,
            ),
            (0.5 * t3 - t4 + 0.5 * t5, 1.5 * t2 - 4.0 * t3 + 2.5 * t4, 3.0 * t - 12.0 * t2 + 10.0 * t3),
            (-4.0 * t3 + 7.0 * t4 - 3.0 * t5, -12.0 * t2 + 28.0 * t3 - 15.0 * t4, -24.0 * t + 84.0 * t2 - 60.0 * t3),
            (10.0 * t3 - 15.0 * t4 + 6.0 * t5, 30.0 * t2 - 60.0 * t3 + 30.0 * t4, 60.0 * t - 180.0 * t2 + 120.0 * t3),
        ];
        let c =
            [self.v[k], h * self.d[k], h * h * self.dd[k], h * h * self.dd[k + 1], h * self.d[k + 1], self.v[k + 1]];
        let mut out = (0.0, 0.0, 0.0);
        for i in 0..6 {
            out.0 += c[i] * b[i].0;
            out.1 += c[i] * b[i].1;
            out.2 += c[i] * b[i].2;
        }
        (out.0, out.1 / h, out.2 / (h * h))
    }

    fn into_field(self, hint: Hint) -> ScalarField {
        let t = Arc::new(self);
        let (t0, t1, t2) = (t.clone(), t.clone(), t);
        ScalarField::new_1d(hint, move |x| t0.eval(x).0)
            .with_derivatives_1d(move |x| t1.eval(x).1, move |x| t2.eval(x).2)
    }
}

/// Coordinates theta in the closed simplex {theta_i >= 0, sum theta_i <= 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureCoords {
    theta: Vec<f64>,
}

impl MixtureCoords {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::validation("mixture coordinates need m >= 1"));
        }
        for (i, &t) in theta.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::validation(format!("theta[{i}] = {t} is negative or not finite")));
            }
        }
        let s: f64 = theta.iter().sum();
        if s > 1.0 {
            return Err(Error::validation(format!(
                "theta sums to {s} > 1 (extended index {} would be negative)",
                theta.len()
            )));
        }
        Ok(MixtureCoords { theta })
    }

    /// Builds coordinates from extended weights (all m+1 of them).
    pub fn from_extended(hat: &[f64]) -> Result<Self> {
        if hat.len() < 2 {
            return Err(Error::validation("extended coordinates need at least two entries"));
        }
        Self::new(hat[..hat.len() - 1].to_vec())
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }

    pub fn extended(&self) -> Vec<f64> {
        let mut out = self.theta.clone();
        out.push(1.0 - self.theta.iter().sum::<f64>());
        out
    }
}

/// theta -> (theta_1, .., theta_m, 1 - sum theta_i).
pub fn extend_coords(theta: &[f64]) -> Result<Vec<f64>> {
    Ok(MixtureCoords::new(theta.to_vec())?.extended())
}

/// A change made by [`clip_to_simplex`]: `index` in extended numbering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipEvent {
    pub index: usize,
    pub value: f64,
}

/// Clips raw coordinates into the simplex interior with margin [`EPS_SIMPLEX`].
/// Undershoots beyond [`CLIP_TOLERANCE`] are manifold exits.
pub fn clip_to_simplex(theta: &mut [f64]) -> Result<Vec<ClipEvent>> {
    let mut events = Vec::new();
    for (i, t) in theta.iter_mut().enumerate() {
        if !t.is_finite() {
            return Err(Error::numeric(format!("theta[{i}] is not finite")));
        }
        if *t < EPS_SIMPLEX {
            if *t < -CLIP_TOLERANCE {
                return Err(Error::ManifoldExit { index: i, value: *t });
            }
            events.push(ClipEvent { index: i, value: *t });
            *t = EPS_SIMPLEX;
        }
    }
    let last = 1.0 - theta.iter().sum::<f64>();
    if last < EPS_SIMPLEX {
        if last < -CLIP_TOLERANCE {
            return Err(Error::ManifoldExit { index: theta.len(), value: last });
        }
        events.push(ClipEvent { index: theta.len(), value: last });
        let s: f64 = theta.iter().sum();
        let scale = (1.0 - EPS_SIMPLEX) / s;
        for t in theta.iter_mut() {
            *t *= scale;
        }
    }
    Ok(events)
}

/// The simple mixture family over m+1 basis densities.
#[derive(Clone)]
pub struct MixtureFamily {
    components: Vec<BasisDensity>,
    spec: QuadratureSpec,
    rule: Arc<Rule>,
    q: Arc<Vec<Vec<f64>>>,
    u: Arc<Vec<Vec<f64>>>,
    metric: MetricMatrix,
    generation: usize,
}

impl core::fmt::Debug for MixtureFamily {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("MixtureFamily")
            .field("components", &self.components)
            .field("generation", &self.generation)
            .field("metric", self.metric.matrix())
            .finish()
    }
}

/// Per-component samples on the rule nodes.
type Samples = Vec<Vec<f64>>;

fn sampled_family(components: &[BasisDensity], spec: &QuadratureSpec) -> Result<(Rule, Samples, Samples)> {
    if components.len() < 2 {
        return Err(Error::validation("a mixture family needs at least two basis densities"));
    }
    let hint = components[1..].iter().fold(components[0].hint().clone(), |h, c| h.envelope(c.hint()));
    let rule = spec.rule(&hint)?;
    let q = components.iter().map(|c| rule.sample(c.field(), "basis density")).collect::<Result<Vec<_>>>()?;
    for (k, qk) in q.iter().enumerate() {
        let mass = rule.integrate_values(qk);
        if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::validation(format!("basis density {k} integrates to {mass}, not 1")));
        }
    }
    let last = &q[q.len() - 1];
    let u = q[..q.len() - 1].iter().map(|qi| qi.iter().zip(last).map(|(a, b)| a - b).collect()).collect();
    Ok((rule, q, u))
}

fn metric_of(rule: &Rule, u: &[Vec<f64>]) -> Result<MetricMatrix> {
    let m = u.len();
    let mut h = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = rule.dot(&u[i], &u[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let tr = h.trace();
    let min = symmetric_eigenvalues(&h)[0];
    let threshold = DEGENERATE_RATIO * tr;
    if !(min >= threshold) || !(tr > 0.0) {
        return Err(Error::DegenerateFamily { min_eigenvalue: min, threshold });
    }
    MetricMatrix::new(h, "mixture").map_err(|_| Error::DegenerateFamily { min_eigenvalue: min, threshold })
}

/// Direct L2 metric h_ij = <q_i - q_{m+1}, q_j - q_{m+1}> of a set of basis densities.
pub fn mixture_metric(components: &[BasisDensity], spec: &QuadratureSpec) -> Result<MetricMatrix> {
    let (rule, _, u) = sampled_family(components, spec)?;
    metric_of(&rule, &u)
}

impl MixtureFamily {
    pub fn new(components: Vec<BasisDensity>, spec: QuadratureSpec) -> Result<Self> {
        Self::with_generation(components, spec, 0)
    }

    pub fn with_generation(components: Vec<BasisDensity>, spec: QuadratureSpec, generation: usize) -> Result<Self> {
        let (rule, q, u) = sampled_family(&components, &spec)?;
        let metric = metric_of(&rule, &u)?;
        Ok(MixtureFamily { components, spec, rule: Arc::new(rule), q: Arc::new(q), u: Arc::new(u), metric, generation })
    }

    /// Family of scalar Gaussians N(mean_k, var_k).
    pub fn gaussian(params: &[(f64, f64)], spec: QuadratureSpec) -> Result<Self> {
        let comps = params.iter().map(|&(m, v)| BasisDensity::gaussian(m, v)).collect::<Result<Vec<_>>>()?;
        Self::new(comps, spec)
    }

    /// Number of free coordinates m (one less than the number of components).
    pub fn m(&self) -> usize {
        self.components.len() - 1
    }

    pub fn components(&self) -> &[BasisDensity] {
        &self.components
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn metric(&self) -> &MetricMatrix {
        &self.metric
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    /// The quadrature rule shared by all inner products of the family.
    pub fn rule(&self) -> &Rule {
        &self.rule
    }

    /// Basis densities sampled on [`Self::rule`].
    pub fn q_samples(&self) -> &[Vec<f64>] {
        &self.q
    }

    /// Tangent vectors u_i = q_i - q_{m+1} sampled on [`Self::rule`].
    pub fn u_samples(&self) -> &[Vec<f64>] {
        &self.u
    }

    fn check_coords(&self, theta: &MixtureCoords) -> Result<()> {
        if theta.m() != self.m() {
            return Err(Error::validation(format!(
                "coordinates of dimension {} for a family with m = {}",
                theta.m(),
                self.m()
            )));
        }
        Ok(())
    }

    /// p = theta_hat^T q sampled on the family rule.
    pub fn density_samples(&self, theta_hat: &[f64]) -> Vec<f64> {
        let n = self.rule.len();
        let mut out = vec![0.0; n];
        for (w, qk) in theta_hat.iter().zip(self.q.iter()) {
            for k in 0..n {
                out[k] += w * qk[k];
            }
        }
        out
    }

    /// Coefficients c of the direct-L2 projection sum_i c_i u_i of sampled `v`.
    pub fn project_samples(&self, v: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = self.u.iter().map(|u| self.rule.dot(v, u)).collect();
        self.metric.solve(&rhs)
    }

    /// Closest member of the affine span to the density `p` in L2:
    /// theta = h^{-1} <p - q_{m+1}, u>. The result may leave the simplex.
    pub fn fit_density(&self, p: impl Fn(f64) -> f64) -> Vec<f64> {
        let last = &self.q[self.m()];
        let v: Vec<f64> = self.rule.abscissae().iter().zip(last).map(|(&x, q)| p(x) - q).collect();
        self.project_samples(&v)
    }

    /// `fit_density` with negative weights raised to the simplex margin and the
    /// result rescaled onto the simplex. Returns the clipped extended weights.
    pub fn fit_coords(&self, p: impl Fn(f64) -> f64) -> Result<(MixtureCoords, Vec<ClipEvent>)> {
        let theta = self.fit_density(p);
        let mut hat = theta.clone();
        hat.push(1.0 - theta.iter().sum::<f64>());
        let mut events = Vec::new();
        for (i, w) in hat.iter_mut().enumerate() {
            if !w.is_finite() {
                return Err(Error::numeric(format!("fitted weight {i} is not finite")));
            }
            if *w < EPS_SIMPLEX {
                events.push(ClipEvent { index: i, value: *w });
                *w = EPS_SIMPLEX;
            }
        }
        let s: f64 = hat.iter().sum();
        hat.pop();
        Ok((MixtureCoords::new(hat.iter().map(|w| w / s).collect())?, events))
    }

    /// `v - sum_i c_i u_i` on the nodes.
    pub fn residual_samples(&self, v: &[f64], c: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for (ci, u) in c.iter().zip(self.u.iter()) {
            for k in 0..r.len() {
                r[k] -= ci * u[k];
            }
        }
        r
    }

    /// Expectation of a sampled function under p = theta_hat^T q.
    pub fn expectation(&self, theta_hat: &[f64], f: &[f64]) -> f64 {
        let p = self.density_samples(theta_hat);
        self.rule.dot(&p, f)
    }

    /// Posterior mean and variance of the scalar state under theta_hat^T q.
    pub fn moments(&self, theta_hat: &[f64]) -> (f64, f64) {
        let p = self.density_samples(theta_hat);
        let xs = self.rule.abscissae();
        let w = self.rule.weights();
        let mean: f64 = (0..xs.len()).map(|k| w[k] * p[k] * xs[k]).sum();
        let var: f64 = (0..xs.len()).map(|k| w[k] * p[k] * (xs[k] - mean) * (xs[k] - mean)).sum();
        (mean, var)
    }

    pub fn tangent_basis(&self) -> Vec<ScalarField> {
        let last = self.components[self.m()].field().clone();
        self.components[..self.m()].iter().map(|c| c.field().sub(&last)).collect()
    }

    pub fn density(&self, theta: &MixtureCoords) -> Result<ScalarField> {
        self.check_coords(theta)?;
        Ok(self.density_hat(&theta.extended()))
    }

    pub fn density_hat(&self, theta_hat: &[f64]) -> ScalarField {
        let fields: Vec<ScalarField> = self.components.iter().map(|c| c.field().clone()).collect();
        linear_combination(theta_hat, &fields)
    }

    /// The family as a generic chart theta -> theta_hat^T q.
    pub fn as_parametric_family(&self) -> ParametricFamily {
        let fields: Arc<Vec<ScalarField>> = Arc::new(self.components.iter().map(|c| c.field().clone()).collect());
        let hint = self.components[1..].iter().fold(self.components[0].hint().clone(), |h, c| h.envelope(c.hint()));
        let m = self.m();
        let (f0, f1) = (fields.clone(), fields);
        ParametricFamily::new(
            m,
            "mixture",
            move |x, t| {
                let last = 1.0 - t.iter().sum::<f64>();
                t.iter().zip(f0.iter()).map(|(w, f)| w * f.eval(x)).sum::<f64>() + last * f0[m].eval(x)
            },
            move |_| hint.clone(),
            |t| t.iter().all(|v| *v >= 0.0) && t.iter().sum::<f64>() <= 1.0,
        )
        .with_tangent(move |x, _, i| f1[i].eval(x) - f1[m].eval(x))
    }
}

pub fn mixture_density(fam: &MixtureFamily, theta: &MixtureCoords) -> Result<ScalarField> {
    fam.density(theta)
}

pub fn tangent_basis(fam: &MixtureFamily) -> Vec<ScalarField> {
    fam.tangent_basis()
}

/// A likelihood factor Psi(x) = exp(log_psi(x)). When it has the linear-Gaussian
/// form exp(-(z - a x - b)^2 / (2 r)), Gaussian components update in closed form.
#[derive(Clone)]
pub struct LikelihoodFactor {
    pub log_psi: ScalarField,
    pub affine: Option<AffineGaussian>,
}

impl core::fmt::Debug for LikelihoodFactor {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("LikelihoodFactor").field("affine", &self.affine).finish()
    }
}

/// Observation z of a + slope x with noise variance r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineGaussian {
    pub slope: f64,
    pub offset: f64,
    pub z: f64,
    pub r: f64,
}

impl LikelihoodFactor {
    /// From a strictly positive field Psi.
    pub fn from_field(psi: &ScalarField) -> Self {
        LikelihoodFactor { log_psi: psi.compose_1d(|y| (y.ln(), 1.0 / y, -1.0 / (y * y))), affine: None }
    }

    pub fn from_log(log_psi: ScalarField) -> Self {
        LikelihoodFactor { log_psi, affine: None }
    }

    pub fn affine_gaussian(a: AffineGaussian) -> Self {
        let AffineGaussian { slope, offset, z, r } = a;
        let log_psi = ScalarField::new_1d(Hint::scalar((z - offset) / slope.abs().max(1e-300), 1.0), move |x| {
            let e = z - slope * x - offset;
            -0.5 * e * e / r
        })
        .with_derivatives_1d(move |x| slope * (z - slope * x - offset) / r, move |_| -slope * slope / r);
        LikelihoodFactor { log_psi, affine: Some(a) }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.log_psi.eval1(x).exp()
    }

    pub fn field(&self) -> ScalarField {
        self.log_psi.compose_1d(|y| {
            let e = y.exp();
            (e, e, e)
        })
    }
}

/// Result of a basis update: the new family and the constants c_i = 1 / int Psi q_i.
#[derive(Debug, Clone)]
pub struct BasisUpdate {
    pub family: MixtureFamily,
    pub c: Vec<f64>,
    /// ln c_i, finite even when c_i overflows.
    pub log_c: Vec<f64>,
}

fn conjugate(g: GaussianComponent, a: AffineGaussian) -> (GaussianComponent, f64) {
    let AffineGaussian { slope, offset, z, r } = a;
    let prec = 1.0 / g.var + slope * slope / r;
    let var = 1.0 / prec;
    let mean = (g.mean / g.var + slope * (z - offset) / r) * var;
    // ln int Psi q = ln sqrt(2 pi r) + ln N(z; a mu + b, a^2 v + r)
    let log_mass = 0.5 * (2.0 * core::f64::consts::PI * r).ln()
        + gaussian_log_pdf(z, slope * g.mean + offset, slope * slope * g.var + r);
    (GaussianComponent { mean, var }, log_mass)
}

/// q_i^n = c_i Psi q_i^{n-1}, c_i = 1 / int Psi q_i^{n-1}.
pub fn bayes_update_basis(fam: &MixtureFamily, psi: &LikelihoodFactor) -> Result<BasisUpdate> {
    bayes_update_basis_with(fam, psi, false)
}

/// As [`bayes_update_basis`]; `force_generic` skips the conjugate Gaussian path.
pub fn bayes_update_basis_with(
    fam: &MixtureFamily,
    psi: &LikelihoodFactor,
    force_generic: bool,
) -> Result<BasisUpdate> {
    let mut comps = Vec::with_capacity(fam.components.len());
    let mut log_c = Vec::with_capacity(fam.components.len());
    for (i, comp) in fam.components.iter().enumerate() {
        let (next, log_mass) = match (comp.as_gaussian(), psi.affine, force_generic) {
            (Some(g), Some(a), false) => {
                let (post, lm) = conjugate(g, a);
                (BasisDensity::gaussian(post.mean, post.var)?, lm)
            }
            _ => comp.absorb(&psi.log_psi, &fam.spec).map_err(|e| match e {
                Error::Starvation { integral, .. } => Error::Starvation { component: i, integral },
                other => other,
            })?,
        };
        if !log_mass.is_finite() || log_mass < f64::MIN_POSITIVE.ln() {
            return Err(Error::Starvation { component: i, integral: log_mass.exp() });
        }
        comps.push(next);
        log_c.push(-log_mass);
    }
    let family = MixtureFamily::with_generation(comps, fam.spec.clone(), fam.generation + 1)?;
    let c = log_c.iter().map(|l| l.exp()).collect();
    Ok(BasisUpdate { family, c, log_c })
}

/// How posterior weights are formed after a basis update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightRule {
    /// theta_hat_i proportional to theta_hat_i^- / c_i; keeps the correction exact.
    #[default]
    Reweighted,
    /// Weights carried over unchanged; exact only when all c_i are equal.
    Literal,
}

/// Posterior coordinates with theta_hat_i proportional to theta_hat_i^- / c_i.
pub fn posterior_weights(prior_hat: &[f64], c: &[f64]) -> Result<MixtureCoords> {
    if c.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::validation("normalization constants must be positive"));
    }
    let log_c: Vec<f64> = c.iter().map(|v| v.ln()).collect();
    posterior_weights_log(prior_hat, &log_c, WeightRule::Reweighted)
}

/// [`posterior_weights`] from ln c, with the choice of rule.
pub fn posterior_weights_log(prior_hat: &[f64], log_c: &[f64], rule: WeightRule) -> Result<MixtureCoords> {
    if prior_hat.len() != log_c.len() {
        return Err(Error::validation("weight and constant vectors differ in length"));
    }
    if rule == WeightRule::Literal {
        return MixtureCoords::from_extended(prior_hat);
    }
    let shift = log_c.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = prior_hat.iter().zip(log_c).map(|(w, l)| w.max(0.0) * (shift - l).exp()).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateUpdate(String::from("all posterior weights vanish")));
    }
    let theta: Vec<f64> = raw[..raw.len() - 1].iter().map(|w| w / total).collect();
    // the sum can exceed 1 by rounding when the last weight is negligible
    let s: f64 = theta.iter().sum();
    let theta = if s > 1.0 { theta.iter().map(|t| t / s).collect() } else { theta };
    MixtureCoords::new(theta)
}
