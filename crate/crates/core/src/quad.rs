//! Quadrature over R^n for n = 1, 2: integrals and L2 inner products.
//!
//! The default rule is a uniform Simpson grid spanning `center +- 10 scale` of
//! the integrand's hint. A Gauss-Hermite rule is available for integrands that
//! carry a single Gaussian weight.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::{Hint, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    UniformGrid,
    GaussHermite,
}

/// Where the nodes of a rule are placed.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// `hint.center +- 10 hint.scale` for grids, Gaussian weight N(center, scale^2)
    /// for Gauss-Hermite.
    FromHint,
    /// Explicit per-axis bounds (grid rules only).
    Bounds(Vec<(f64, f64)>),
    /// Explicit Gaussian weight per axis (Gauss-Hermite only).
    Gaussian { mean: Vec<f64>, sd: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub kind: QuadratureKind,
    /// Nodes per axis.
    pub nodes: usize,
    pub domain: Domain,
    pub tolerance: f64,
}

pub const DEFAULT_GRID_NODES: usize = 2001;
pub const DEFAULT_HERMITE_NODES: usize = 64;
pub const HINT_HALF_WIDTH: f64 = 10.0;

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            kind: QuadratureKind::UniformGrid,
            nodes: DEFAULT_GRID_NODES,
            domain: Domain::FromHint,
            tolerance: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub fn grid(lo: f64, hi: f64, nodes: usize) -> Self {
        QuadratureSpec {
            kind: QuadratureKind::UniformGrid,
            nodes,
            domain: Domain::Bounds(vec![(lo, hi)]),
            tolerance: 1e-8,
        }
    }

    pub fn gauss_hermite(nodes: usize) -> Self {
        QuadratureSpec { kind: QuadratureKind::GaussHermite, nodes, domain: Domain::FromHint, tolerance: 1e-8 }
    }

    pub fn gauss_hermite_at(mean: f64, sd: f64, nodes: usize) -> Self {
        QuadratureSpec {
            kind: QuadratureKind::GaussHermite,
            nodes,
            domain: Domain::Gaussian { mean: vec![mean], sd: vec![sd] },
            tolerance: 1e-8,
        }
    }

    /// Same rule with roughly twice the nodes per axis (grids stay odd-sized).
    pub fn refined(&self) -> Self {
        let mut s = self.clone();
        s.nodes = match self.kind {
            QuadratureKind::UniformGrid => 2 * self.nodes - 1,
            QuadratureKind::GaussHermite => 2 * self.nodes,
        };
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 8 {
            return Err(Error::validation(format!("quadrature needs at least 8 nodes per axis, got {}", self.nodes)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::validation("quadrature tolerance must be positive"));
        }
        match (&self.kind, &self.domain) {
            (_, Domain::FromHint) => {}
            (QuadratureKind::UniformGrid, Domain::Bounds(b)) => {
                if b.is_empty() || b.len() > 2 {
                    return Err(Error::validation("grid bounds must cover 1 or 2 axes"));
                }
                for &(lo, hi) in b {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(Error::validation(format!("invalid grid bounds [{lo}, {hi}]")));
                    }
                }
            }
            (QuadratureKind::GaussHermite, Domain::Gaussian { mean, sd }) => {
                if mean.len() != sd.len() || mean.is_empty() || mean.len() > 2 {
                    return Err(Error::validation("Gauss-Hermite weight must cover 1 or 2 axes"));
                }
                if mean.iter().any(|m| !m.is_finite()) || sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(Error::validation("Gauss-Hermite weight parameters must be finite, sd > 0"));
                }
            }
            _ => return Err(Error::validation("quadrature kind and domain do not match")),
        }
        Ok(())
    }

    /// Materializes the nodes and weights for a field with the given hint.
    pub fn rule(&self, hint: &Hint) -> Result<Rule> {
        self.validate()?;
        let dim = hint.dim();
        if dim == 0 || dim > 2 {
            return Err(Error::validation(format!("quadrature supports dimensions 1 and 2, got {dim}")));
        }
        let axes: Vec<(Vec<f64>, Vec<f64>)> = match (&self.kind, &self.domain) {
            (QuadratureKind::UniformGrid, Domain::FromHint) => (0..dim)
                .map(|k| {
                    let (c, s) = (hint.center[k], hint.scale[k]);
                    simpson_axis(c - HINT_HALF_WIDTH * s, c + HINT_HALF_WIDTH * s, self.nodes)
                })
                .collect(),
            (QuadratureKind::UniformGrid, Domain::Bounds(b)) => {
                if b.len() != dim {
                    return Err(Error::validation("grid bounds dimension does not match the integrand"));
                }
                b.iter().map(|&(lo, hi)| simpson_axis(lo, hi, self.nodes)).collect()
            }
            (QuadratureKind::GaussHermite, Domain::FromHint) => {
                (0..dim).map(|k| hermite_axis(hint.center[k], hint.scale[k], self.nodes)).collect()
            }
            (QuadratureKind::GaussHermite, Domain::Gaussian { mean, sd }) => {
                if mean.len() != dim {
                    return Err(Error::validation("Gauss-Hermite dimension does not match the integrand"));
                }
                (0..dim).map(|k| hermite_axis(mean[k], sd[k], self.nodes)).collect()
            }
            _ => unreachable!("validated above"),
        };
        Ok(Rule::tensor(&axes))
    }
}

/// Concrete nodes and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    fn tensor(axes: &[(Vec<f64>, Vec<f64>)]) -> Rule {
        match axes {
            [(x, w)] => Rule { dim: 1, points: x.clone(), weights: w.clone() },
            [(x0, w0), (x1, w1)] => {
                let mut points = Vec::with_capacity(2 * x0.len() * x1.len());
                let mut weights = Vec::with_capacity(x0.len() * x1.len());
                for (a, wa) in x0.iter().zip(w0) {
                    for (b, wb) in x1.iter().zip(w1) {
                        points.push(*a);
                        points.push(*b);
                        weights.push(wa * wb);
                    }
                }
                Rule { dim: 2, points, weights }
            }
            _ => unreachable!(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// One-dimensional node coordinates.
    pub fn abscissae(&self) -> &[f64] {
        assert_eq!(self.dim, 1);
        &self.points
    }

    /// Samples `f` at every node; non-finite values are reported with their node.
    pub fn sample(&self, f: &ScalarField, what: &str) -> Result<Vec<f64>> {
        if f.dim() != self.dim {
            return Err(Error::validation(format!(
                "field of dimension {} on a rule of dimension {}",
                f.dim(),
                self.dim
            )));
        }
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let x = self.point(i);
            let v = f.eval(x);
            if !v.is_finite() {
                return Err(Error::Domain { what: what.to_string(), node: i, x: x[0], value: v });
            }
            out.push(v);
        }
        Ok(out)
    }

    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Weighted dot product of two sampled fields; symmetric bit-for-bit.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.len());
        debug_assert_eq!(b.len(), self.len());
        self.weights.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * (x * y)).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).max(0.0).sqrt()
    }
}

pub fn integrate(f: &ScalarField, spec: &QuadratureSpec) -> Result<f64> {
    let rule = spec.rule(f.hint())?;
    let v = rule.sample(f, "integrand")?;
    Ok(rule.integrate_values(&v))
}

/// L2 inner product on the rule built from the envelope of both hints.
pub fn inner_product(f: &ScalarField, g: &ScalarField, spec: &QuadratureSpec) -> Result<f64> {
    if f.dim() != g.dim() {
        return Err(Error::validation("inner product of fields of different dimensions"));
    }
    let hint = f.hint().envelope(g.hint());
    let rule = spec.rule(&hint)?;
    let a = rule.sample(f, "left factor")?;
    let b = rule.sample(g, "right factor")?;
    Ok(rule.dot(&a, &b))
}

fn simpson_axis(lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
    let mut w = vec![0.0; n];
    let simpson_end = if n % 2 == 1 { n - 1 } else { n - 4 };
    for i in (0..simpson_end).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if n.is_multiple_of(2) {
        // 3/8 rule on the last three intervals
        let s = n - 4;
        w[s] += 3.0 * h / 8.0;
        w[s + 1] += 9.0 * h / 8.0;
        w[s + 2] += 9.0 * h / 8.0;
        w[s + 3] += 3.0 * h / 8.0;
    }
    (x, w)
}

/// Gauss-Hermite nodes and weights for `int exp(-t^2) g(t) dt`, by Newton
/// iteration on the orthonormal Hermite recurrence.
pub fn hermite_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = core::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z: f64 = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Nodes and weights for `int f(x) dx` with the Gaussian weight N(mean, sd^2) factored out.
fn hermite_axis(mean: f64, sd: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = hermite_nodes(n);
    let s = core::f64::consts::SQRT_2 * sd;
    let x = t.iter().map(|ti| mean + s * ti).collect();
    let w = t.iter().zip(&w).map(|(ti, wi)| s * wi * (ti * ti).exp()).collect();
    (x, w)
}
