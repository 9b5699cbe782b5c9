//! `metrics` verb: the closed-form Gaussian metrics next to their quadrature values.

use std::fmt::Write as _;

use mpf_core::geometry::{
    canonical_to_moments, fisher_metric, gaussian_fisher_canonical, gaussian_fisher_expectation, gaussian_l2_canonical,
    gaussian_l2_expectation, l2_metric, moments_to_canonical, MetricMatrix, ParametricFamily,
};
use mpf_core::QuadratureSpec;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Coords {
    Canonical,
    Expectation,
}

pub struct MetricCheck {
    pub name: &'static str,
    pub point: [f64; 2],
    pub closed_form: [[f64; 2]; 2],
    pub quadrature: [[f64; 2]; 2],
}

impl MetricCheck {
    /// Largest entrywise difference relative to the largest closed-form entry.
    pub fn relative_error(&self) -> f64 {
        let mut scale = 0.0f64;
        let mut diff = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                scale = scale.max(self.closed_form[i][j].abs());
                diff = diff.max((self.closed_form[i][j] - self.quadrature[i][j]).abs());
            }
        }
        diff / scale
    }
}

fn entries(g: &MetricMatrix) -> [[f64; 2]; 2] {
    [[g.get(0, 0), g.get(0, 1)], [g.get(1, 0), g.get(1, 1)]]
}

/// Grid rule spanning twelve standard deviations either side of the mean.
fn rule_for(mu: f64, v: f64) -> QuadratureSpec {
    let sd = v.sqrt();
    QuadratureSpec::grid(mu - 12.0 * sd, mu + 12.0 * sd, 4001)
}

/// The four closed-form matrices at one point, given in either chart.
pub fn metric_checks(coords: Coords, point: [f64; 2]) -> Result<Vec<MetricCheck>, CliError> {
    let (t, m) = match coords {
        Coords::Canonical => {
            let (mu, v) = canonical_to_moments(point[0], point[1]);
            (point, [mu, v])
        }
        Coords::Expectation => {
            let (t1, t2) = moments_to_canonical(point[0], point[1]);
            ([t1, t2], point)
        }
    };
    if !(t[1] < 0.0) || !(m[1] > 0.0) {
        return Err(CliError::Validation {
            field: "point".into(),
            message: format!("({}, {}) is outside the Gaussian family", point[0], point[1]),
        });
    }
    let spec = rule_for(m[0], m[1]);
    let can = ParametricFamily::gaussian_canonical();
    let exp = ParametricFamily::gaussian_expectation();
    Ok(vec![
        MetricCheck {
            name: "fisher canonical",
            point: t,
            closed_form: entries(&gaussian_fisher_canonical(t[0], t[1])?),
            quadrature: entries(&fisher_metric(&can, &t, &spec)?),
        },
        MetricCheck {
            name: "fisher expectation",
            point: m,
            closed_form: entries(&gaussian_fisher_expectation(m[0], m[1])?),
            quadrature: entries(&fisher_metric(&exp, &m, &spec)?),
        },
        MetricCheck {
            name: "l2 canonical",
            point: t,
            closed_form: entries(&gaussian_l2_canonical(t[0], t[1])?),
            quadrature: entries(&l2_metric(&can, &t, &spec)?),
        },
        MetricCheck {
            name: "l2 expectation",
            point: m,
            closed_form: entries(&gaussian_l2_expectation(m[0], m[1])?),
            quadrature: entries(&l2_metric(&exp, &m, &spec)?),
        },
    ])
}

pub fn render(checks: &[MetricCheck]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(s, "{} at ({}, {})", c.name, c.point[0], c.point[1]);
        for i in 0..2 {
            let _ = writeln!(
                s,
                "  [{:>14.8e} {:>14.8e}]   quadrature [{:>14.8e} {:>14.8e}]",
                c.closed_form[i][0], c.closed_form[i][1], c.quadrature[i][0], c.quadrature[i][1]
            );
        }
        let _ = writeln!(s, "  relative error {:.3e}", c.relative_error());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_charts_agree_with_quadrature() {
        for (coords, p) in [(Coords::Canonical, [0.5, -0.5]), (Coords::Expectation, [0.3, 2.0])] {
            let checks = metric_checks(coords, p).unwrap();
            assert_eq!(checks.len(), 4);
            for c in &checks {
                assert!(c.relative_error() < 1e-6, "{} {}", c.name, c.relative_error());
            }
        }
    }

    #[test]
    fn point_outside_family() {
        assert!(metric_checks(Coords::Canonical, [0.0, 0.5]).is_err());
        assert!(metric_checks(Coords::Expectation, [0.0, -1.0]).is_err());
    }
}
