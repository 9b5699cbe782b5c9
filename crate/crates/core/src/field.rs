//! Evaluable real-valued functions on R^n (n = 1 or 2).
//!
//! A [`ScalarField`] is the common currency of the crate: densities, test
//! functions, basis elements and operator outputs are all fields. Analytic
//! first and second derivatives are optional; when absent, central finite
//! differences scaled by the field's [`Hint`] are used.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type DerivFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Step factor (relative to the hint scale) for first-derivative fallbacks.
pub const FD_GRAD_STEP: f64 = 1e-5;
/// Step factor for second-derivative fallbacks; balances O(h^2) truncation
/// against O(eps/h^2) cancellation.
pub const FD_HESS_STEP: f64 = 1e-4;

/// Location of the effective support of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct Hint {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Hint {
    pub fn new(center: Vec<f64>, scale: Vec<f64>) -> Self {
        debug_assert_eq!(center.len(), scale.len());
        Hint { center, scale }
    }

    pub fn scalar(center: f64, scale: f64) -> Self {
        Hint { center: vec![center], scale: vec![scale] }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Smallest hint covering both supports, using the default +-10 scale window.
    pub fn envelope(&self, other: &Hint) -> Hint {
        let mut center = Vec::with_capacity(self.dim());
        let mut scale = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let lo = (self.center[k] - 10.0 * self.scale[k]).min(other.center[k] - 10.0 * other.scale[k]);
            let hi = (self.center[k] + 10.0 * self.scale[k]).max(other.center[k] + 10.0 * other.scale[k]);
            center.push(0.5 * (lo + hi));
            scale.push((hi - lo) / 20.0);
        }
        Hint { center, scale }
    }
}

/// An evaluable field with optional analytic derivatives.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    eval: Arc<EvalFn>,
    grad: Option<Arc<DerivFn>>,
    hess: Option<Arc<DerivFn>>,
    hint: Hint,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("analytic_grad", &self.grad.is_some())
            .field("analytic_hess", &self.hess.is_some())
            .field("hint", &self.hint)
            .finish()
    }
}

impl ScalarField {
    pub fn new(hint: Hint, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField { dim: hint.dim(), eval: Arc::new(eval), grad: None, hess: None, hint }
    }

    /// One-dimensional field from a closure of a scalar argument.
    pub fn new_1d(hint: Hint, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(hint, move |x: &[f64]| f(x[0]))
    }

    /// Attaches analytic first and second derivatives to a one-dimensional field.
    pub fn with_derivatives_1d(
        mut self,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert_eq!(self.dim, 1, "with_derivatives_1d on a field of dimension {}", self.dim);
        self.grad = Some(Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = d1(x[0])));
        self.hess = Some(Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = d2(x[0])));
        self
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    /// Row-major n x n Hessian.
    pub fn with_hessian(mut self, h: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.hess = Some(Arc::new(h));
        self
    }

    pub fn with_hint(mut self, hint: Hint) -> Self {
        assert_eq!(hint.dim(), self.dim);
        self.hint = hint;
        self
    }

    pub fn zero(hint: Hint) -> Self {
        Self::constant(hint, 0.0)
    }

    pub fn constant(hint: Hint, value: f64) -> Self {
        let n = hint.dim();
        ScalarField {
            dim: n,
            eval: Arc::new(move |_: &[f64]| value),
            grad: Some(Arc::new(|_: &[f64], out: &mut [f64]| out.fill(0.0))),
            hess: Some(Arc::new(|_: &[f64], out: &mut [f64]| out.fill(0.0))),
            hint,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hint(&self) -> &Hint {
        &self.hint
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.grad.is_some() && self.hess.is_some()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    #[inline]
    pub fn eval1(&self, x: f64) -> f64 {
        (self.eval)(&[x])
    }

    /// Gradient at `x`, analytic when available.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match &self.grad {
            Some(g) => g(x, out),
            None => self.fd_gradient(x, out),
        }
    }

    /// Row-major Hessian at `x`, analytic when available.
    pub fn hessian(&self, x: &[f64], out: &mut [f64]) {
        match &self.hess {
            Some(h) => h(x, out),
            None => self.fd_hessian(x, out),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        let mut g = [0.0];
        self.gradient(&[x], &mut g);
        g[0]
    }

    pub fn d2(&self, x: f64) -> f64 {
        let mut h = [0.0];
        self.hessian(&[x], &mut h);
        h[0]
    }

    pub fn fd_gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut xp: Vec<f64> = x.to_vec();
        for k in 0..self.dim {
            let h = FD_GRAD_STEP * self.hint.scale[k];
            xp[k] = x[k] + h;
            let fp = self.eval(&xp);
            xp[k] = x[k] - h;
            let fm = self.eval(&xp);
            xp[k] = x[k];
            out[k] = (fp - fm) / (2.0 * h);
        }
    }

    pub fn fd_hessian(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        let f0 = self.eval(x);
        let mut xp: Vec<f64> = x.to_vec();
        for i in 0..n {
            let hi = FD_HESS_STEP * self.hint.scale[i];
            xp[i] = x[i] + hi;
            let fp = self.eval(&xp);
            xp[i] = x[i] - hi;
            let fm = self.eval(&xp);
            xp[i] = x[i];
            out[i * n + i] = (fp - 2.0 * f0 + fm) / (hi * hi);
            for j in (i + 1)..n {
                let hj = FD_HESS_STEP * self.hint.scale[j];
                let mut corner = |si: f64, sj: f64| {
                    xp[i] = x[i] + si * hi;
                    xp[j] = x[j] + sj * hj;
                    let v = self.eval(&xp);
                    xp[i] = x[i];
                    xp[j] = x[j];
                    v
                };
                let v =
                    (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * hi * hj);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
    }

    /// `a * self`.
    pub fn scaled(&self, a: f64) -> ScalarField {
        linear_combination(&[a], core::slice::from_ref(self))
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        linear_combination(&[1.0, 1.0], &[self.clone(), other.clone()])
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        linear_combination(&[1.0, -1.0], &[self.clone(), other.clone()])
    }

    /// Pointwise product. Derivatives follow the product rule when both factors have them.
    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(self.dim, other.dim);
        let (a, b) = (self.clone(), other.clone());
        let n = self.dim;
        let hint = self.hint.envelope(&other.hint);
        let mut out = ScalarField::new(hint, {
            let (a, b) = (a.clone(), b.clone());
            move |x: &[f64]| a.eval(x) * b.eval(x)
        });
        if self.has_analytic_derivatives() && other.has_analytic_derivatives() {
            let (ga, gb) = (a.clone(), b.clone());
            out.grad = Some(Arc::new(move |x: &[f64], g: &mut [f64]| {
                let mut da = vec![0.0; n];
                let mut db = vec![0.0; n];
                ga.gradient(x, &mut da);
                gb.gradient(x, &mut db);
                let (va, vb) = (ga.eval(x), gb.eval(x));
                for k in 0..n {
                    g[k] = da[k] * vb + va * db[k];
                }
            }));
            out.hess = Some(Arc::new(move |x: &[f64], h: &mut [f64]| {
                let mut da = vec![0.0; n];
                let mut db = vec![0.0; n];
                let mut ha = vec![0.0; n * n];
                let mut hb = vec![0.0; n * n];
                a.gradient(x, &mut da);
                b.gradient(x, &mut db);
                a.hessian(x, &mut ha);
                b.hessian(x, &mut hb);
                let (va, vb) = (a.eval(x), b.eval(x));
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] = ha[i * n + j] * vb + da[i] * db[j] + da[j] * db[i] + va * hb[i * n + j];
                    }
                }
            }));
        }
        out
    }

    /// Applies `g` pointwise; `g` returns (value, first, second derivative) of the
    /// outer function so the chain rule can be carried through in one dimension.
    pub fn compose_1d(&self, g: impl Fn(f64) -> (f64, f64, f64) + Send + Sync + 'static) -> ScalarField {
        assert_eq!(self.dim, 1);
        let g = Arc::new(g);
        let inner = self.clone();
        let hint = self.hint.clone();
        let (gi, ig) = (g.clone(), inner.clone());
        let mut out = ScalarField::new_1d(hint, move |x| gi(ig.eval1(x)).0);
        if self.has_analytic_derivatives() {
            let (g1, i1) = (g.clone(), inner.clone());
            let (g2, i2) = (g, inner);
            out = out.with_derivatives_1d(
                move |x| g1(i1.eval1(x)).1 * i1.d1(x),
                move |x| {
                    let (_, dg, ddg) = g2(i2.eval1(x));
                    let d = i2.d1(x);
                    ddg * d * d + dg * i2.d2(x)
                },
            );
        }
        out
    }
}

/// `sum_k coeffs[k] * fields[k]`, with derivatives when every term has them.
pub fn linear_combination(coeffs: &[f64], fields: &[ScalarField]) -> ScalarField {
    assert_eq!(coeffs.len(), fields.len());
    assert!(!fields.is_empty());
    let n = fields[0].dim;
    let hint = fields[1..].iter().fold(fields[0].hint.clone(), |h, f| h.envelope(&f.hint));
    let terms: Arc<Vec<(f64, ScalarField)>> = Arc::new(coeffs.iter().copied().zip(fields.iter().cloned()).collect());
    let analytic = fields.iter().all(|f| f.has_analytic_derivatives());
    let t0 = terms.clone();
    let mut out = ScalarField::new(hint, move |x: &[f64]| t0.iter().map(|(c, f)| c * f.eval(x)).sum());
    if analytic {
        let t1 = terms.clone();
        out.grad = Some(Arc::new(move |x: &[f64], g: &mut [f64]| {
            g.fill(0.0);
            let mut tmp = vec![0.0; n];
            for (c, f) in t1.iter() {
                f.gradient(x, &mut tmp);
                for k in 0..n {
                    g[k] += c * tmp[k];
                }
            }
        }));
        let t2 = terms;
        out.hess = Some(Arc::new(move |x: &[f64], h: &mut [f64]| {
            h.fill(0.0);
            let mut tmp = vec![0.0; n * n];
            for (c, f) in t2.iter() {
                f.hessian(x, &mut tmp);
                for k in 0..n * n {
                    h[k] += c * tmp[k];
                }
            }
        }));
    }
    out
}

/// Normal density N(mean, var) as a field with analytic derivatives.
pub fn gaussian_field(mean: f64, var: f64) -> ScalarField {
    let sd = var.sqrt();
    ScalarField::new_1d(Hint::scalar(mean, sd), move |x| gaussian_pdf(x, mean, var)).with_derivatives_1d(
        move |x| -(x - mean) / var * gaussian_pdf(x, mean, var),
        move |x| {
            let y = x - mean;
            (y * y / (var * var) - 1.0 / var) * gaussian_pdf(x, mean, var)
        },
    )
}

#[inline]
pub fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let y = x - mean;
    (-0.5 * y * y / var).exp() / (2.0 * core::f64::consts::PI * var).sqrt()
}

#[inline]
pub fn gaussian_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let y = x - mean;
    -0.5 * y * y / var - 0.5 * (2.0 * core::f64::consts::PI * var).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn finite_differences_match_analytic_derivatives() {
        let g = gaussian_field(0.3, 0.7);
        let plain = ScalarField::new_1d(g.hint().clone(), move |x| gaussian_pdf(x, 0.3, 0.7));
        for &x in &[-1.1, -0.2, 0.9, 1.7] {
            assert!(rel(plain.d1(x), g.d1(x)) < 1e-6, "d1 at {x}");
            assert!(rel(plain.d2(x), g.d2(x)) < 1e-6, "d2 at {x}");
        }
    }

    #[test]
    fn product_rule_and_composition() {
        let a = gaussian_field(0.0, 1.0);
        let b = gaussian_field(1.0, 2.0);
        let p = a.mul(&b);
        let fd = ScalarField::new_1d(p.hint().clone(), {
            let p = p.clone();
            move |x| p.eval1(x)
        });
        for &x in &[-0.5, 0.4, 1.3] {
            assert!(rel(p.d1(x), fd.d1(x)) < 1e-6);
            assert!(rel(p.d2(x), fd.d2(x)) < 1e-6);
        }
        let sq = a.compose_1d(|v| (v * v, 2.0 * v, 2.0));
        let sq_fd = ScalarField::new_1d(sq.hint().clone(), {
            let a = a.clone();
            move |x| a.eval1(x).powi(2)
        });
        for &x in &[-0.5, 0.4, 1.3] {
            assert!(rel(sq.d2(x), sq_fd.d2(x)) < 1e-6);
        }
    }

    #[test]
    fn two_dimensional_hessian_fallback() {
        let f =
            ScalarField::new(Hint::new(vec![0.0, 0.0], vec![1.0, 1.0]), |x: &[f64]| x[0] * x[0] * x[1] + (x[1]).sin());
        let mut h = [0.0; 4];
        f.hessian(&[0.5, 0.3], &mut h);
        assert!((h[0] - 0.6).abs() < 1e-6);
        assert!((h[1] - 1.0).abs() < 1e-6 && (h[2] - 1.0).abs() < 1e-6);
        assert!((h[3] + 0.3f64.sin()).abs() < 1e-6);
    }
}
