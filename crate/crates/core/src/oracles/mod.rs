//! Reference solvers used to check the projection filters: grid PDE solvers,
//! bootstrap particle filters, Kalman recursions and a Galerkin assembly that
//! shares no code with the filter assembly.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by f64 inherent methods whenever std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::gaussian_pdf;
use crate::rng::{normal, Stream};

pub mod galerkin;
pub mod grid;
pub mod kalman;
pub mod particle;

pub use galerkin::{
    galerkin_discrete_filter, galerkin_ito_continuous_step, galerkin_ito_drift, galerkin_ito_filter,
    galerkin_prediction_generator,
};
pub use grid::{
    grid_discrete_filter, grid_fokker_planck_solve, grid_kushner_solve, GridDensity, GridScheme, GridSolution,
    GridTrajectory,
};
pub use kalman::{kalman_bucy, kalman_discrete, riccati_fixed_point};
pub use particle::{particle_filter_continuous, particle_filter_discrete, ParticleEnsemble, ParticleTrajectory};

/// Initial law of the signal: a finite Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLaw {
    /// (weight, mean, variance)
    pub components: Vec<(f64, f64, f64)>,
}

impl InitialLaw {
    pub fn gaussian(mean: f64, var: f64) -> Self {
        InitialLaw { components: alloc::vec![(1.0, mean, var)] }
    }

    pub fn mixture(components: Vec<(f64, f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::validation("initial law needs at least one component"));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if components.iter().any(|c| !(c.0 >= 0.0) || !(c.2 > 0.0)) || !(total > 0.0) {
            return Err(Error::validation("initial law weights must be nonnegative and variances positive"));
        }
        Ok(InitialLaw { components: components.into_iter().map(|(w, m, v)| (w / total, m, v)).collect() })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components.iter().map(|&(w, m, v)| w * gaussian_pdf(x, m, v)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|&(w, m, _)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.components.iter().map(|&(w, m, v)| w * (v + (m - mu) * (m - mu))).sum()
    }

    /// (mean, variance) if the law is a single Gaussian.
    pub fn as_gaussian(&self) -> Option<(f64, f64)> {
        match self.components.as_slice() {
            [(_, m, v)] => Some((*m, *v)),
            _ => None,
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        use rand::Rng;
        let mut idx = self.components.len() - 1;
        if self.components.len() > 1 {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, c) in self.components.iter().enumerate() {
                acc += c.0;
                if u < acc {
                    idx = i;
                    break;
                }
            }
        }
        let (_, m, v) = self.components[idx];
        m + v.sqrt() * normal(rng)
    }
}

/// Mean and variance over time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl MomentTrajectory {
    pub fn push(&mut self, t: f64, mean: f64, var: f64) {
        self.times.push(t);
        self.means.push(mean);
        self.variances.push(var);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}
