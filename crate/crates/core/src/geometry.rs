//! Distances, metric matrices and orthogonal tangent-space projections on
//! finite-dimensional statistical manifolds.
//!
//! Two embeddings of a parametric family `theta -> p(., theta)` into L2 are
//! supported: through square roots of densities (Hellinger distance, whose
//! tangent Gram matrix is one quarter of the Fisher information) and directly
//! through the densities (direct L2 distance and metric).

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::{gaussian_pdf, Hint, ScalarField};
use crate::linalg::{Cholesky, Lu, Matrix};
use crate::quad::{QuadratureSpec, Rule};

/// Smallest admissible Cholesky pivot when inverting a metric.
pub const METRIC_MIN_PIVOT: f64 = 1e-12;
/// Step used for finite differences in parameter space.
pub const THETA_FD_STEP: f64 = 1e-6;

type DensityFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type TangentFn = dyn Fn(&[f64], &[f64], usize) -> f64 + Send + Sync;
type HintFn = dyn Fn(&[f64]) -> Hint + Send + Sync;
type DomainFn = dyn Fn(&[f64]) -> bool + Send + Sync;

/// A chart `theta -> p(., theta)` of an m-dimensional family of densities.
#[derive(Clone)]
pub struct ParametricFamily {
    dim: usize,
    chart: String,
    density: Arc<DensityFn>,
    dtheta: Option<Arc<TangentFn>>,
    hint: Arc<HintFn>,
    domain: Arc<DomainFn>,
}

impl core::fmt::Debug for ParametricFamily {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ParametricFamily")
            .field("dim", &self.dim)
            .field("chart", &self.chart)
            .field("analytic_tangent", &self.dtheta.is_some())
            .finish()
    }
}

impl ParametricFamily {
    pub fn new(
        dim: usize,
        chart: impl Into<String>,
        density: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        hint: impl Fn(&[f64]) -> Hint + Send + Sync + 'static,
        domain: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        ParametricFamily {
            dim,
            chart: chart.into(),
            density: Arc::new(density),
            dtheta: None,
            hint: Arc::new(hint),
            domain: Arc::new(domain),
        }
    }

    /// Attaches analytic parameter derivatives `(x, theta, i) -> dp/dtheta_i`.
    pub fn with_tangent(mut self, d: impl Fn(&[f64], &[f64], usize) -> f64 + Send + Sync + 'static) -> Self {
        self.dtheta = Some(Arc::new(d));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim && (self.domain)(theta)
    }

    pub fn hint(&self, theta: &[f64]) -> Hint {
        (self.hint)(theta)
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::validation(format!(
                "parameter of length {} for a {}-dimensional family",
                theta.len(),
                self.dim
            )));
        }
        if !(self.domain)(theta) {
            return Err(Error::validation(format!("parameter {theta:?} outside the {} chart", self.chart)));
        }
        Ok(())
    }

    pub fn density_at(&self, x: &[f64], theta: &[f64]) -> f64 {
        (self.density)(x, theta)
    }

    /// dp/dtheta_i at x, analytic or by central differences in theta.
    pub fn tangent_at(&self, x: &[f64], theta: &[f64], i: usize) -> f64 {
        match &self.dtheta {
            Some(d) => d(x, theta, i),
            None => {
                let h = THETA_FD_STEP * theta[i].abs().max(1.0);
                let mut tp = theta.to_vec();
                tp[i] = theta[i] + h;
                let fp = (self.density)(x, &tp);
                tp[i] = theta[i] - h;
                let fm = (self.density)(x, &tp);
                (fp - fm) / (2.0 * h)
            }
        }
    }

    pub fn density_field(&self, theta: &[f64]) -> ScalarField {
        let fam = self.clone();
        let th = theta.to_vec();
        ScalarField::new(self.hint(theta), move |x: &[f64]| fam.density_at(x, &th))
    }

    pub fn tangent_field(&self, theta: &[f64], i: usize) -> ScalarField {
        let fam = self.clone();
        let th = theta.to_vec();
        ScalarField::new(self.hint(theta), move |x: &[f64]| fam.tangent_at(x, &th, i))
    }

    /// Gaussian family in canonical coordinates, p = exp(t1 x + t2 x^2 - psi(t)), t2 < 0.
    pub fn gaussian_canonical() -> Self {
        ParametricFamily::new(
            2,
            "gaussian-canonical",
            |x, t| {
                let (mu, v) = canonical_to_moments(t[0], t[1]);
                gaussian_pdf(x[0], mu, v)
            },
            |t| {
                let (mu, v) = canonical_to_moments(t[0], t[1]);
                Hint::scalar(mu, v.sqrt())
            },
            |t| t[0].is_finite() && t[1] < 0.0,
        )
        .with_tangent(|x, t, i| {
            let (mu, v) = canonical_to_moments(t[0], t[1]);
            let p = gaussian_pdf(x[0], mu, v);
            match i {
                0 => (x[0] - mu) * p,
                _ => (x[0] * x[0] - (v + mu * mu)) * p,
            }
        })
    }

    /// Gaussian family in mean/variance coordinates (mu, v), v > 0.
    pub fn gaussian_expectation() -> Self {
        ParametricFamily::new(
            2,
            "gaussian-expectation",
            |x, t| gaussian_pdf(x[0], t[0], t[1]),
            |t| Hint::scalar(t[0], t[1].sqrt()),
            |t| t[0].is_finite() && t[1] > 0.0,
        )
        .with_tangent(|x, t, i| {
            let (mu, v) = (t[0], t[1]);
            let y = x[0] - mu;
            let p = gaussian_pdf(x[0], mu, v);
            match i {
                0 => y / v * p,
                _ => (y * y / (2.0 * v * v) - 0.5 / v) * p,
            }
        })
    }
}

/// A symmetric positive definite metric matrix tagged with its coordinate chart.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    matrix: Matrix,
    chart: String,
    factor: Cholesky,
}

impl MetricMatrix {
    pub fn new(matrix: Matrix, chart: impl Into<String>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::validation("metric must be square"));
        }
        if matrix.asymmetry() > 1e-12 {
            return Err(Error::validation(format!("metric not symmetric (relative {:e})", matrix.asymmetry())));
        }
        let factor = Cholesky::new(&matrix, METRIC_MIN_PIVOT)?;
        Ok(MetricMatrix { matrix, chart: chart.into(), factor })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.factor
    }

    /// Solves `G x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.factor.solve(b)
    }

    pub fn inverse(&self) -> Matrix {
        self.factor.inverse()
    }

    /// Largest entrywise difference relative to the largest entry of `other`.
    pub fn relative_difference(&self, other: &MetricMatrix) -> f64 {
        self.matrix.sub(&other.matrix).max_abs() / other.matrix.max_abs()
    }
}

fn sample_nonnegative(rule: &Rule, f: &ScalarField, what: &str) -> Result<Vec<f64>> {
    let v = rule.sample(f, what)?;
    if let Some((i, &bad)) = v.iter().enumerate().find(|(_, x)| **x < 0.0) {
        return Err(Error::Domain {
            what: format!("{what} (negative density)"),
            node: i,
            x: rule.point(i)[0],
            value: bad,
        });
    }
    Ok(v)
}

/// Hellinger distance ||sqrt p - sqrt q||.
pub fn hellinger_distance(p: &ScalarField, q: &ScalarField, spec: &QuadratureSpec) -> Result<f64> {
    let rule = spec.rule(&p.hint().envelope(q.hint()))?;
    let a = sample_nonnegative(&rule, p, "p")?;
    let b = sample_nonnegative(&rule, q, "q")?;
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.sqrt() - y.sqrt()).collect();
    Ok(rule.norm(&diff))
}

/// Direct L2 distance ||p - q||.
pub fn l2_distance(p: &ScalarField, q: &ScalarField, spec: &QuadratureSpec) -> Result<f64> {
    let rule = spec.rule(&p.hint().envelope(q.hint()))?;
    let a = sample_nonnegative(&rule, p, "p")?;
    let b = sample_nonnegative(&rule, q, "q")?;
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    Ok(rule.norm(&diff))
}

/// Kullback-Leibler information K(p, q) = E_p[log p/q].
pub fn kl_divergence(p: &ScalarField, q: &ScalarField, spec: &QuadratureSpec) -> Result<f64> {
    let rule = spec.rule(&p.hint().envelope(q.hint()))?;
    let a = sample_nonnegative(&rule, p, "p")?;
    let b = rule.sample(q, "q")?;
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in a.iter().zip(&b).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::Domain {
                what: String::from("q (nonpositive where p > 0)"),
                node: i,
                x: rule.point(i)[0],
                value: qi,
            });
        }
        acc += rule.weights()[i] * pi * (pi / qi).ln();
    }
    Ok(acc)
}

fn sample_chart(
    fam: &ParametricFamily,
    theta: &[f64],
    spec: &QuadratureSpec,
) -> Result<(Rule, Vec<f64>, Vec<Vec<f64>>)> {
    fam.check(theta)?;
    let rule = spec.rule(&fam.hint(theta))?;
    let p = rule.sample(&fam.density_field(theta), "density")?;
    let tangents =
        (0..fam.dim()).map(|i| rule.sample(&fam.tangent_field(theta, i), "tangent")).collect::<Result<Vec<_>>>()?;
    Ok((rule, p, tangents))
}

fn gram(rule: &Rule, basis: &[Vec<f64>]) -> Matrix {
    let m = basis.len();
    let mut g = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = rule.dot(&basis[i], &basis[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

fn degenerate(e: Error, what: &str) -> Error {
    match e {
        Error::DegenerateChart(msg) => Error::DegenerateChart(format!("{what}: {msg}")),
        other => other,
    }
}

fn require_positive(rule: &Rule, p: &[f64]) -> Result<()> {
    if let Some((i, &bad)) = p.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
        return Err(Error::Domain {
            what: String::from("density (must be strictly positive)"),
            node: i,
            x: rule.point(i)[0],
            value: bad,
        });
    }
    Ok(())
}

/// Fisher information g_ij = int (1/p) dp/dtheta_i dp/dtheta_j.
pub fn fisher_metric(fam: &ParametricFamily, theta: &[f64], spec: &QuadratureSpec) -> Result<MetricMatrix> {
    let (rule, p, t) = sample_chart(fam, theta, spec)?;
    require_positive(&rule, &p)?;
    let m = fam.dim();
    let mut g = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v: f64 = (0..rule.len()).map(|k| rule.weights()[k] * (t[i][k] * t[j][k] / p[k])).sum();
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    MetricMatrix::new(g, fam.chart()).map_err(|e| degenerate(e, "fisher metric"))
}

/// Gram matrix of the square-root tangent vectors (1/(2 sqrt p)) dp/dtheta_i.
/// Equals one quarter of the Fisher information.
pub fn hellinger_tangent_gram(fam: &ParametricFamily, theta: &[f64], spec: &QuadratureSpec) -> Result<Matrix> {
    let (rule, p, t) = sample_chart(fam, theta, spec)?;
    require_positive(&rule, &p)?;
    let w: Vec<Vec<f64>> =
        t.iter().map(|ti| ti.iter().zip(&p).map(|(d, pk)| d / (2.0 * pk.sqrt())).collect()).collect();
    Ok(gram(&rule, &w))
}

/// Direct L2 metric h_ij = <dp/dtheta_i, dp/dtheta_j>.
pub fn l2_metric(fam: &ParametricFamily, theta: &[f64], spec: &QuadratureSpec) -> Result<MetricMatrix> {
    let (rule, _, t) = sample_chart(fam, theta, spec)?;
    MetricMatrix::new(gram(&rule, &t), fam.chart()).map_err(|e| degenerate(e, "direct L2 metric"))
}

/// Transports a metric to new coordinates: J^T g J with J = d(old)/d(new).
pub fn change_coordinates_metric(
    g: &MetricMatrix,
    jacobian: &Matrix,
    chart: impl Into<String>,
) -> Result<MetricMatrix> {
    if !jacobian.is_square() || jacobian.rows() != g.dim() {
        return Err(Error::validation("jacobian shape does not match the metric"));
    }
    let lu = Lu::new(jacobian).map_err(|_| Error::validation("singular coordinate jacobian"))?;
    let det = lu.determinant();
    if !(det.abs() > 0.0) || !det.is_finite() {
        return Err(Error::validation("singular coordinate jacobian"));
    }
    let out = jacobian.transpose().matmul(g.matrix()).matmul(jacobian).symmetrized();
    MetricMatrix::new(out, chart)
}

/// Coefficients of the orthogonal projection of `v` onto span(basis), given
/// the sampled basis and its Gram matrix.
pub fn project_onto_span(rule: &Rule, v: &[f64], basis: &[Vec<f64>], metric: &MetricMatrix) -> Vec<f64> {
    let rhs: Vec<f64> = basis.iter().map(|b| rule.dot(v, b)).collect();
    metric.solve(&rhs)
}

/// Direct-L2 projection of `v` onto the tangent space span{dp/dtheta_i}.
/// Returns `c` with Pi[v] = sum_i c_i dp/dtheta_i.
pub fn project_l2(v: &ScalarField, fam: &ParametricFamily, theta: &[f64], spec: &QuadratureSpec) -> Result<Vec<f64>> {
    let (rule, _, t) = sample_chart(fam, theta, spec)?;
    let h = MetricMatrix::new(gram(&rule, &t), fam.chart()).map_err(|e| degenerate(e, "direct L2 metric"))?;
    let vs = rule.sample(v, "projected field")?;
    Ok(project_onto_span(&rule, &vs, &t, &h))
}

/// Hellinger/Fisher projection of `v` onto span{(1/(2 sqrt p)) dp/dtheta_i}:
/// c = 4 g^{-1} <v, (1/(2 sqrt p)) dp/dtheta>.
pub fn project_fisher(
    v: &ScalarField,
    fam: &ParametricFamily,
    theta: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>> {
    let (rule, p, t) = sample_chart(fam, theta, spec)?;
    require_positive(&rule, &p)?;
    let w: Vec<Vec<f64>> =
        t.iter().map(|ti| ti.iter().zip(&p).map(|(d, pk)| d / (2.0 * pk.sqrt())).collect()).collect();
    let g = fisher_metric(fam, theta, spec)?;
    let vs = rule.sample(v, "projected field")?;
    let rhs: Vec<f64> = w.iter().map(|b| 4.0 * rule.dot(&vs, b)).collect();
    Ok(g.solve(&rhs))
}

/// Square-root tangent vector (1/(2 sqrt p)) dp/dtheta_i as a field.
pub fn sqrt_tangent_field(fam: &ParametricFamily, theta: &[f64], i: usize) -> ScalarField {
    let f = fam.clone();
    let th = theta.to_vec();
    ScalarField::new(fam.hint(theta), move |x: &[f64]| f.tangent_at(x, &th, i) / (2.0 * f.density_at(x, &th).sqrt()))
}

/// K(p(theta), p(theta + dtheta)) - (1/2) dtheta^T g(theta) dtheta.
pub fn kl_quadratic_remainder(
    fam: &ParametricFamily,
    theta: &[f64],
    dtheta: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    if dtheta.len() != theta.len() {
        return Err(Error::validation("dtheta length differs from theta"));
    }
    let moved: Vec<f64> = theta.iter().zip(dtheta).map(|(a, b)| a + b).collect();
    fam.check(&moved)?;
    let g = fisher_metric(fam, theta, spec)?;
    let k = kl_divergence(&fam.density_field(theta), &fam.density_field(&moved), spec)?;
    let gd = g.matrix().matvec(dtheta);
    let quad: f64 = dtheta.iter().zip(&gd).map(|(a, b)| a * b).sum();
    Ok(k - 0.5 * quad)
}

// --- Gaussian family closed forms -------------------------------------------------

/// (mu, v) from canonical coordinates: mu = -t1/(2 t2), v = -1/(2 t2).
pub fn canonical_to_moments(t1: f64, t2: f64) -> (f64, f64) {
    (-t1 / (2.0 * t2), -1.0 / (2.0 * t2))
}

/// Canonical coordinates from (mu, v): t1 = mu / v, t2 = -1 / (2 v).
pub fn moments_to_canonical(mu: f64, v: f64) -> (f64, f64) {
    (mu / v, -1.0 / (2.0 * v))
}

/// d(t1, t2)/d(mu, v).
pub fn canonical_jacobian_wrt_moments(mu: f64, v: f64) -> Matrix {
    Matrix::from_rows(&[&[1.0 / v, -mu / (v * v)], &[0.0, 1.0 / (2.0 * v * v)]])
}

fn check_canonical(t1: f64, t2: f64) -> Result<()> {
    if !(t2 < 0.0) || !t1.is_finite() || !t2.is_finite() {
        return Err(Error::validation(format!("canonical parameter requires t2 < 0, got ({t1}, {t2})")));
    }
    Ok(())
}

fn check_moments(mu: f64, v: f64) -> Result<()> {
    if !(v > 0.0) || !mu.is_finite() || !v.is_finite() {
        return Err(Error::validation(format!("variance must be positive, got ({mu}, {v})")));
    }
    Ok(())
}

/// Fisher metric of the Gaussian family in canonical coordinates.
pub fn gaussian_fisher_canonical(t1: f64, t2: f64) -> Result<MetricMatrix> {
    check_canonical(t1, t2)?;
    let off = t1 / (2.0 * t2 * t2);
    MetricMatrix::new(
        Matrix::from_rows(&[&[-1.0 / (2.0 * t2), off], &[off, 1.0 / (2.0 * t2 * t2) - t1 * t1 / (2.0 * t2 * t2 * t2)]]),
        "gaussian-canonical",
    )
}

/// Fisher metric of the Gaussian family in (mu, v): (1/v) diag(1, 1/(2v)).
pub fn gaussian_fisher_expectation(mu: f64, v: f64) -> Result<MetricMatrix> {
    check_moments(mu, v)?;
    MetricMatrix::new(Matrix::diag(&[1.0 / v, 1.0 / (2.0 * v * v)]), "gaussian-expectation")
}

/// Direct L2 metric of the Gaussian family in canonical coordinates.
pub fn gaussian_l2_canonical(t1: f64, t2: f64) -> Result<MetricMatrix> {
    check_canonical(t1, t2)?;
    let s = -t2;
    let pref = core::f64::consts::SQRT_2 / (8.0 * (s * core::f64::consts::PI).sqrt());
    let off = pref * t1 / s;
    MetricMatrix::new(
        Matrix::from_rows(&[&[pref, off], &[off, pref * (0.75 / s + t1 * t1 / (t2 * t2))]]),
        "gaussian-canonical",
    )
}

/// Coefficient of the printed (mu, mu) entry of the direct L2 metric in
/// (mu, v) coordinates, `1/(8 v sqrt(v pi))`. Direct integration of
/// `(dp/dmu)^2` gives `1/(4 v sqrt(v pi))`, twice the printed value; the
/// corrected coefficient is [`L2_EXPECTATION_MU_MU_COEFF`].
pub const L2_EXPECTATION_MU_MU_COEFF_AS_PRINTED: f64 = 1.0 / 8.0;
pub const L2_EXPECTATION_MU_MU_COEFF: f64 = 1.0 / 4.0;

/// Direct L2 metric in (mu, v): diag(1/(4 v sqrt(v pi)), 3/(32 v^2 sqrt(v pi))).
pub fn gaussian_l2_expectation(mu: f64, v: f64) -> Result<MetricMatrix> {
    check_moments(mu, v)?;
    let base = 1.0 / (v * (v * core::f64::consts::PI).sqrt());
    MetricMatrix::new(Matrix::diag(&[L2_EXPECTATION_MU_MU_COEFF * base, base / 8.0 * 0.75 / v]), "gaussian-expectation")
}

/// The (mu, v) direct L2 metric with the (mu, mu) entry as printed in the
/// original derivation; kept only to document the discrepancy.
pub fn gaussian_l2_expectation_as_printed(mu: f64, v: f64) -> Result<MetricMatrix> {
    check_moments(mu, v)?;
    let base = 1.0 / (v * (v * core::f64::consts::PI).sqrt());
    MetricMatrix::new(
        Matrix::diag(&[L2_EXPECTATION_MU_MU_COEFF_AS_PRINTED * base, base / 8.0 * 0.75 / v]),
        "gaussian-expectation",
    )
}

/// Convenience: metric of a chart sampled on an explicit set of tangent fields.
pub fn gram_of_fields(fields: &[ScalarField], spec: &QuadratureSpec) -> Result<Matrix> {
    if fields.is_empty() {
        return Ok(Matrix::zeros(0, 0));
    }
    let hint = fields[1..].iter().fold(fields[0].hint().clone(), |h, f| h.envelope(f.hint()));
    let rule = spec.rule(&hint)?;
    let samples = fields.iter().map(|f| rule.sample(f, "basis field")).collect::<Result<Vec<_>>>()?;
    Ok(gram(&rule, &samples))
}

#[allow(dead_code)]
fn unit(m: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; m];
    e[i] = 1.0;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gaussian_field;
    use core::f64::consts::PI;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn hellinger_examples() {
        let p = gaussian_field(0.0, 1.0);
        assert!(hellinger_distance(&p, &p, &spec()).unwrap().abs() < 1e-12);
        let q = gaussian_field(2.0, 1.0);
        let d = hellinger_distance(&p, &q, &spec()).unwrap();
        let closed = (2.0 - 2.0 * (-4.0f64 / 8.0).exp()).sqrt();
        assert!((d - closed).abs() < 1e-10);
        assert!((d - 0.887096).abs() < 1e-6);
        assert_eq!(d, hellinger_distance(&q, &p, &spec()).unwrap());
    }

    #[test]
    fn l2_distance_matches_overlap_algebra() {
        let p = gaussian_field(0.0, 1.0);
        let q = gaussian_field(0.0, 4.0);
        // <N(0,a), N(0,b)> = N(0; 0, a+b)
        let pp = 1.0 / (2.0 * (PI * 1.0).sqrt());
        let qq = 1.0 / (2.0 * (PI * 4.0).sqrt());
        let pq = 1.0 / (2.0 * PI * 5.0).sqrt();
        let closed = (pp + qq - 2.0 * pq).sqrt();
        let d = l2_distance(&p, &q, &spec()).unwrap();
        assert!((d - closed).abs() < 1e-10, "{d} vs {closed}");
        assert!(l2_distance(&p, &p, &spec()).unwrap() == 0.0);
    }

    #[test]
    fn negative_density_is_a_domain_error() {
        let p = gaussian_field(0.0, 1.0);
        let q = gaussian_field(0.0, 1.0).scaled(-1.0);
        assert!(matches!(hellinger_distance(&p, &q, &spec()), Err(Error::Domain { .. })));
    }

    #[test]
    fn kl_examples() {
        let p = gaussian_field(0.0, 1.0);
        assert!(kl_divergence(&p, &p, &spec()).unwrap().abs() < 1e-14);
        let q = gaussian_field(1.0, 1.0);
        assert!((kl_divergence(&p, &q, &spec()).unwrap() - 0.5).abs() < 1e-8);
        let wide = gaussian_field(0.0, 4.0);
        let a = kl_divergence(&p, &wide, &spec()).unwrap();
        let b = kl_divergence(&wide, &p, &spec()).unwrap();
        // closed forms: 0.5(ln 4 + 1/4 - 1) and 0.5(ln(1/4) + 4 - 1)
        assert!((a - 0.5 * (4.0f64.ln() + 0.25 - 1.0)).abs() < 1e-9);
        assert!((b - 0.5 * (0.25f64.ln() + 3.0)).abs() < 1e-9);
        assert!((a - b).abs() > 0.1);
    }

    #[test]
    fn fisher_metric_examples() {
        let g = fisher_metric(&ParametricFamily::gaussian_canonical(), &[0.0, -0.5], &spec()).unwrap();
        let expect = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]);
        assert!(g.matrix().sub(&expect).max_abs() < 1e-9);
        let g = fisher_metric(&ParametricFamily::gaussian_expectation(), &[0.0, 1.0], &spec()).unwrap();
        let expect = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.5]]);
        assert!(g.matrix().sub(&expect).max_abs() < 1e-9);
    }

    #[test]
    fn l2_metric_examples() {
        let h = l2_metric(&ParametricFamily::gaussian_canonical(), &[0.0, -0.5], &spec()).unwrap();
        let c = 1.0 / (4.0 * PI.sqrt());
        assert!((h.get(0, 0) - c).abs() < 1e-12);
        assert!((h.get(1, 1) - 1.5 * c).abs() < 1e-12);
        assert!(h.get(0, 1).abs() < 1e-14);
        let h = l2_metric(&ParametricFamily::gaussian_expectation(), &[0.0, 1.0], &spec()).unwrap();
        assert!((h.get(1, 1) - 3.0 / (32.0 * PI.sqrt())).abs() < 1e-12);
        assert!((h.get(0, 0) - 1.0 / (4.0 * PI.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_at_reference_points() {
        let g = gaussian_fisher_canonical(0.0, -0.5).unwrap();
        assert_eq!(g.matrix(), &Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]));
        let h = gaussian_l2_expectation(0.0, 1.0).unwrap();
        assert!((h.get(1, 1) - 3.0 / (32.0 * PI.sqrt())).abs() < 1e-15);
        assert!((h.get(0, 0) - 1.0 / (4.0 * PI.sqrt())).abs() < 1e-15);
        let printed = gaussian_l2_expectation_as_printed(0.0, 1.0).unwrap();
        assert!((h.get(0, 0) / printed.get(0, 0) - 2.0).abs() < 1e-15);
        assert!(matches!(gaussian_fisher_canonical(0.0, 0.5), Err(Error::Validation(_))));
        assert!(matches!(gaussian_l2_expectation(0.0, -1.0), Err(Error::Validation(_))));
    }

    #[test]
    fn moment_relations_match_quadrature_moments() {
        for &(t1, t2) in &[(0.0, -0.5), (1.0, -2.0), (-2.0, -0.1)] {
            let (mu, v) = canonical_to_moments(t1, t2);
            // density written directly from the exponential-family form
            let psi = 0.5 * (PI / -t2).ln() - t1 * t1 / (4.0 * t2);
            let f = ScalarField::new_1d(Hint::scalar(mu, v.sqrt()), move |x| (t1 * x + t2 * x * x - psi).exp());
            let m1 = crate::quad::integrate(&f.mul(&ScalarField::new_1d(f.hint().clone(), |x| x)), &spec()).unwrap();
            let m2 =
                crate::quad::integrate(&f.mul(&ScalarField::new_1d(f.hint().clone(), |x| x * x)), &spec()).unwrap();
            assert!((m1 - mu).abs() < 1e-9);
            assert!((m2 - m1 * m1 - v).abs() < 1e-9 * v.max(1.0));
        }
    }

    #[test]
    fn coordinate_change_examples() {
        let g = gaussian_fisher_canonical(0.0, -0.5).unwrap();
        let same = change_coordinates_metric(&g, &Matrix::identity(2), "same").unwrap();
        assert_eq!(same.matrix(), g.matrix());
        let j = canonical_jacobian_wrt_moments(0.0, 1.0);
        assert_eq!(j, Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.5]]));
        let moved = change_coordinates_metric(&g, &j, "mv").unwrap();
        assert!(moved.relative_difference(&gaussian_fisher_expectation(0.0, 1.0).unwrap()) < 1e-15);
        let h = gaussian_l2_canonical(0.0, -0.5).unwrap();
        let moved = change_coordinates_metric(&h, &j, "mv").unwrap();
        let c = 1.0 / PI.sqrt();
        assert!((moved.get(0, 0) - c / 4.0).abs() < 1e-15);
        assert!((moved.get(1, 1) - 3.0 * c / 32.0).abs() < 1e-15);
        let singular = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(change_coordinates_metric(&g, &singular, "x").is_err());
    }

    #[test]
    fn projection_of_basis_vector_is_unit() {
        let fam = ParametricFamily::gaussian_expectation();
        let th = [0.2, 1.3];
        for i in 0..2 {
            let c = project_l2(&fam.tangent_field(&th, i), &fam, &th, &spec()).unwrap();
            let c_f = project_fisher(&sqrt_tangent_field(&fam, &th, i), &fam, &th, &spec()).unwrap();
            for k in 0..2 {
                let e = if k == i { 1.0 } else { 0.0 };
                assert!((c[k] - e).abs() < 1e-10);
                assert!((c_f[k] - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kl_remainder_examples() {
        let fam = ParametricFamily::gaussian_expectation();
        assert!(kl_quadratic_remainder(&fam, &[0.0, 1.0], &[0.0, 0.0], &spec()).unwrap().abs() < 1e-14);
        // mean shift only: K = eps^2 / 2 = (1/2) g11 eps^2 exactly
        for &eps in &[1e-1, 1e-2] {
            let r = kl_quadratic_remainder(&fam, &[0.0, 1.0], &[eps, 0.0], &spec()).unwrap();
            assert!(r.abs() / (eps * eps) < 1e-6, "ratio {}", r / (eps * eps));
        }
    }

    #[test]
    fn fd_tangent_fallback_agrees() {
        let analytic = ParametricFamily::gaussian_expectation();
        let fd = ParametricFamily::new(
            2,
            "fd",
            |x, t| gaussian_pdf(x[0], t[0], t[1]),
            |t| Hint::scalar(t[0], t[1].sqrt()),
            |t| t[1] > 0.0,
        );
        let a = l2_metric(&analytic, &[0.3, 0.8], &spec()).unwrap();
        let b = l2_metric(&fd, &[0.3, 0.8], &spec()).unwrap();
        assert!(a.relative_difference(&b) < 1e-8);
    }
}
