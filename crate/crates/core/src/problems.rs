//! Benchmark initial conditions: linear Landau damping and the two-stream
//! instability, in one and two spatial dimensions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    Landau1D,
    TwoStream1D,
    Landau2D,
    TwoStream2D,
}

impl ProblemId {
    pub const ALL: [ProblemId; 4] = [
        ProblemId::Landau1D,
        ProblemId::TwoStream1D,
        ProblemId::Landau2D,
        ProblemId::TwoStream2D,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Landau1D => "landau1d",
            ProblemId::TwoStream1D => "twostream1d",
            ProblemId::Landau2D => "landau2d",
            ProblemId::TwoStream2D => "twostream2d",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ProblemId::Landau1D | ProblemId::TwoStream1D => 1,
            ProblemId::Landau2D | ProblemId::TwoStream2D => 2,
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_lowercase();
        ProblemId::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::config("problem", format!("unknown problem `{s}`")))
    }
}

/// Physical parameters of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub id: ProblemId,
    /// Perturbation amplitude.
    pub alpha: f64,
    /// Wavenumber, the same along every spatial axis.
    pub k: f64,
    pub v_max: f64,
}

/// Analytic linear-theory values used to validate runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticReference {
    /// Decay rate of the field amplitude (positive means damping).
    pub gamma: f64,
    pub omega: Option<f64>,
}

impl ProblemSpec {
    pub fn new(id: ProblemId) -> Self {
        let (alpha, v_max) = match id {
            ProblemId::Landau1D => (0.01, 10.0),
            ProblemId::TwoStream1D => (0.01, 10.0),
            ProblemId::Landau2D => (0.05, 6.0),
            ProblemId::TwoStream2D => (0.05, 9.0),
        };
        ProblemSpec { id, alpha, k: 0.5, v_max }
    }

    pub fn dim(&self) -> usize {
        self.id.dim()
    }

    /// Domain length `2 pi / k` along each spatial axis.
    pub fn length(&self) -> f64 {
        2.0 * PI / self.k
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::config("k", "must be positive"));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::config("v_max", "must be positive"));
        }
        if !(self.alpha.abs() <= 1.0) {
            return Err(Error::config("alpha", "must lie in [-1, 1] to keep f non-negative"));
        }
        Ok(())
    }

    /// Initial distribution function `f(x, v, 0)`.
    pub fn eval_initial_f(&self, x: &[f64], v: &[f64]) -> f64 {
        let (a, k) = (self.alpha, self.k);
        match self.id {
            ProblemId::Landau1D => (-0.5 * v[0] * v[0]).exp() / (2.0 * PI).sqrt() * (1.0 + a * (k * x[0]).cos()),
            ProblemId::TwoStream1D => {
                v[0] * v[0] * (-0.5 * v[0] * v[0]).exp() / (2.0 * PI).sqrt() * (1.0 + a * (k * x[0]).cos())
            }
            ProblemId::Landau2D => {
                let g = (-0.5 * (v[0] * v[0] + v[1] * v[1])).exp() / (2.0 * PI);
                g * (1.0 + a * (k * x[0]).cos() * (k * x[1]).cos())
            }
            ProblemId::TwoStream2D => {
                let g = (-0.5 * (v[0] * v[0] + v[1] * v[1])).exp() / (12.0 * PI);
                g * (1.0 + a * (k * x[0]).cos()) * (1.0 + 5.0 * v[0] * v[0])
            }
        }
    }

    pub fn reference(&self) -> Option<AnalyticReference> {
        match self.id {
            ProblemId::Landau1D => Some(AnalyticReference {
                gamma: 0.1533,
                omega: Some(1.416),
            }),
            ProblemId::Landau2D => Some(AnalyticReference {
                gamma: 0.394,
                omega: None,
            }),
            _ => None,
        }
    }
}

/// Resolution and run parameters of a reference configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub problem: ProblemSpec,
    pub n_cells: usize,
    pub n_x: usize,
    pub n_v: usize,
    pub dt: f64,
    pub t_final: f64,
    pub threshold: f64,
    pub remap_interval: usize,
}

/// The reference run configuration of each benchmark.
pub fn reference_config(id: ProblemId) -> Preset {
    let problem = ProblemSpec::new(id);
    let (n_cells, n_x, n_v, dt, threshold) = match id {
        ProblemId::Landau1D => (64, 128, 256, 1.0 / 32.0, 1e-16),
        ProblemId::TwoStream1D => (256, 512, 1024, 1.0 / 128.0, 1e-16),
        ProblemId::Landau2D => (32, 64, 128, 1.0 / 16.0, 1e-12),
        ProblemId::TwoStream2D => (64, 128, 256, 1.0 / 32.0, 1e-12),
    };
    Preset {
        problem,
        n_cells,
        n_x,
        n_v,
        dt,
        t_final: 30.0,
        threshold,
        remap_interval: 5,
    }
}

/// Coarsest level of the reference resolution studies.
pub fn ladder_base(id: ProblemId) -> Preset {
    let mut p = reference_config(id);
    let (n_cells, n_x, n_v, dt) = match id {
        ProblemId::Landau1D | ProblemId::TwoStream1D => (32, 64, 128, 1.0 / 16.0),
        ProblemId::Landau2D | ProblemId::TwoStream2D => (8, 16, 32, 1.0 / 4.0),
    };
    p.n_cells = n_cells;
    p.n_x = n_x;
    p.n_v = n_v;
    p.dt = dt;
    p
}

/// Reduced-cost variant of the reference configuration; only the 2D Landau
/// problem differs (velocity lattice halved).
pub fn scaled_config(id: ProblemId) -> Preset {
    let mut p = reference_config(id);
    if id == ProblemId::Landau2D {
        p.n_v = 64;
    }
    p
}

/// Default time window for damping-rate fits.
pub fn default_fit_window(_id: ProblemId) -> (f64, f64) {
    (0.0, 20.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let l1 = ProblemSpec::new(ProblemId::Landau1D);
        assert!((l1.eval_initial_f(&[0.0], &[0.0]) - 1.01 / (2.0 * PI).sqrt()).abs() < 1e-15);

        let ts = ProblemSpec::new(ProblemId::TwoStream1D);
        for x in [0.0, 1.0, 7.3] {
            assert_eq!(ts.eval_initial_f(&[x], &[0.0]), 0.0);
        }

        let ts2 = ProblemSpec::new(ProblemId::TwoStream2D);
        let got = ts2.eval_initial_f(&[0.0, 3.0], &[0.0, 0.0]);
        assert!((got - 1.05 / (12.0 * PI)).abs() < 1e-15);

        let l2 = ProblemSpec::new(ProblemId::Landau2D);
        assert!((l2.eval_initial_f(&[0.0, 0.0], &[0.0, 0.0]) - 1.05 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn presets() {
        let p = reference_config(ProblemId::Landau1D);
        assert_eq!(p.dt, 1.0 / 32.0);
        assert_eq!(p.n_x / p.n_cells, 2);
        assert_eq!(p.threshold, 1e-16);
        assert_eq!(reference_config(ProblemId::Landau2D).threshold, 1e-12);
        for id in ProblemId::ALL {
            let p = reference_config(id);
            assert_eq!(p.n_x, 2 * p.n_cells);
            assert_eq!(p.remap_interval, 5);
            assert!((p.problem.length() * p.problem.k - 2.0 * PI).abs() < 1e-15);
        }
        assert_eq!(reference_config(ProblemId::TwoStream2D).problem.v_max, 9.0);
        assert_eq!(scaled_config(ProblemId::Landau2D).n_v, 64);
        assert_eq!(ladder_base(ProblemId::TwoStream2D).n_cells, 8);
    }

    #[test]
    fn names_round_trip() {
        for id in ProblemId::ALL {
            assert_eq!(id.name().parse::<ProblemId>().unwrap(), id);
        }
        assert_eq!("Landau-1D".parse::<ProblemId>().unwrap(), ProblemId::Landau1D);
        assert!("bump".parse::<ProblemId>().is_err());
    }

    /// Midpoint-rule integral of f over the phase-space box at the
    /// reference 1D resolution.
    fn box_integral(spec: &ProblemSpec, n_x: usize, n_v: usize) -> f64 {
        let l = spec.length();
        let (hx, hv) = (l / n_x as f64, 2.0 * spec.v_max / n_v as f64);
        let mut sum = 0.0;
        for i in 0..n_x {
            let x = (i as f64 + 0.5) * hx;
            for j in 0..n_v {
                let v = -spec.v_max + (j as f64 + 0.5) * hv;
                sum += spec.eval_initial_f(&[x], &[v]);
            }
        }
        sum * hx * hv
    }

    #[test]
    fn one_dimensional_problems_are_neutral() {
        for id in [ProblemId::Landau1D, ProblemId::TwoStream1D] {
            let p = reference_config(id);
            let total = box_integral(&p.problem, p.n_x, p.n_v);
            let l = p.problem.length();
            assert!(((total - l) / l).abs() < 1e-6, "{id}: {total} vs {l}");
        }
    }

    #[test]
    fn two_dimensional_velocity_marginals_are_unit() {
        // integrate over velocity at a point where the spatial factor is 1
        for id in [ProblemId::Landau2D, ProblemId::TwoStream2D] {
            let spec = ProblemSpec::new(id);
            let x = [PI / (2.0 * spec.k), PI / (2.0 * spec.k)];
            let n = 256;
            let h = 2.0 * spec.v_max / n as f64;
            let mut sum = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let v = [-spec.v_max + (a as f64 + 0.5) * h, -spec.v_max + (b as f64 + 0.5) * h];
                    sum += spec.eval_initial_f(&x, &v);
                }
            }
            assert!((sum * h * h - 1.0).abs() < 1e-6, "{id}: {}", sum * h * h);
        }
    }

    #[test]
    fn initial_f_is_nonnegative() {
        for id in ProblemId::ALL {
            let spec = ProblemSpec::new(id);
            let l = spec.length();
            for i in 0..40 {
                for j in 0..40 {
                    let x = [l * i as f64 / 40.0, l * j as f64 / 40.0];
                    let v = [-spec.v_max + 2.0 * spec.v_max * j as f64 / 39.0, spec.v_max * (i as f64 / 39.0 - 0.5)];
                    assert!(spec.eval_initial_f(&x[..spec.dim()], &v[..spec.dim()]) >= 0.0);
                }
            }
        }
    }
}
