//! Geometric multigrid for the periodic Poisson problem `lap(phi) = -rho`.
//!
//! V-cycles use red-black Gauss-Seidel smoothing, cell-average restriction
//! and linear prolongation between cell-centered grids, coarsening down to
//! four cells per axis where the problem is handled by smoothing sweeps.
//! Coarse operators are rediscretizations of the fine one.
//!
//! The periodic problem is singular. The mean of `rho` is removed from the
//! right-hand side and the returned potential has zero mean.
//!
//! For the 4th-order operator the V-cycle runs on that operator directly;
//! if the residual stalls the solver switches to defect correction with a
//! 2nd-order V-cycle as the approximate inverse.

use serde::{Deserialize, Serialize};

use super::stencil::{laplacian_into, Axis};
use super::{Mesh, Order, ScalarField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultigridConfig {
    /// Target for `max|b - A phi| / max|b|`.
    pub tolerance: f64,
    pub max_vcycles: usize,
    pub pre_smooth: usize,
    pub post_smooth: usize,
    /// Gauss-Seidel sweeps on the coarsest (4-cell) grid.
    pub coarse_sweeps: usize,
    /// Whether each Gauss-Seidel sweep updates the even-parity cells first.
    pub red_first: bool,
}

impl Default for MultigridConfig {
    fn default() -> Self {
        MultigridConfig {
            tolerance: 1e-9,
            max_vcycles: 100,
            pre_smooth: 2,
            post_smooth: 2,
            coarse_sweeps: 64,
            red_first: true,
        }
    }
}

impl MultigridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::config("tolerance", "must be positive"));
        }
        if self.max_vcycles == 0 {
            return Err(Error::config("max_vcycles", "must be at least 1"));
        }
        if self.pre_smooth == 0 || self.post_smooth == 0 {
            return Err(Error::config("pre_smooth/post_smooth", "must be at least 1"));
        }
        if self.coarse_sweeps < 50 {
            return Err(Error::config("coarse_sweeps", "must be at least 50"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub cycles: usize,
    /// Final relative max-norm residual.
    pub residual: f64,
    /// Whether the solve fell back to 2nd-order-preconditioned defect correction.
    pub defect_correction: bool,
}

struct Level {
    dim: usize,
    n: usize,
    dx: f64,
    phi: Vec<f64>,
    rhs: Vec<f64>,
    res: Vec<f64>,
}

impl Level {
    fn new(mesh: &Mesh) -> Level {
        let len = mesh.cell_count();
        Level {
            dim: mesh.dim(),
            n: mesh.n_cells(),
            dx: mesh.dx(),
            phi: vec![0.0; len],
            rhs: vec![0.0; len],
            res: vec![0.0; len],
        }
    }

    fn parity(&self, i: usize) -> usize {
        if self.dim == 1 {
            i % 2
        } else {
            (i / self.n + i % self.n) % 2
        }
    }

    fn smooth(&mut self, order: Order, sweeps: usize, red_first: bool) {
        let inv = 1.0 / (self.dx * self.dx);
        let diag = match order {
            Order::Second => -2.0 * self.dim as f64 * inv,
            Order::Fourth => -2.5 * self.dim as f64 * inv,
        };
        let axes: Vec<Axis> = (0..self.dim).map(|d| Axis::of(self.dim, self.n, d)).collect();
        let first = if red_first { 0 } else { 1 };
        for _ in 0..sweeps {
            for color in [first, 1 - first] {
                for i in 0..self.phi.len() {
                    if self.parity(i) != color {
                        continue;
                    }
                    let mut off = 0.0;
                    for ax in &axes {
                        let p1 = self.phi[ax.shift(i, 1)];
                        let m1 = self.phi[ax.shift(i, -1)];
                        off += match order {
                            Order::Second => (p1 + m1) * inv,
                            Order::Fourth => {
                                let p2 = self.phi[ax.shift(i, 2)];
                                let m2 = self.phi[ax.shift(i, -2)];
                                (16.0 * (p1 + m1) - p2 - m2) * inv / 12.0
                            }
                        };
                    }
                    self.phi[i] = (self.rhs[i] - off) / diag;
                }
            }
        }
    }

    /// `res = rhs - A phi`; returns its max norm.
    fn residual(&mut self, order: Order) -> f64 {
        laplacian_into(self.dim, self.n, self.dx, order, &self.phi, &mut self.res);
        let mut norm: f64 = 0.0;
        for (r, b) in self.res.iter_mut().zip(&self.rhs) {
            *r = b - *r;
            norm = norm.max(r.abs());
        }
        norm
    }
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Cell averages of the fine residual into the coarse right-hand side.
fn restrict(fine: &Level, coarse: &mut Level) {
    let nc = coarse.n;
    let nf = fine.n;
    if fine.dim == 1 {
        for i in 0..nc {
            coarse.rhs[i] = 0.5 * (fine.res[2 * i] + fine.res[2 * i + 1]);
        }
    } else {
        for i in 0..nc {
            for j in 0..nc {
                let f = |a: usize, b: usize| fine.res[(2 * i + a) * nf + 2 * j + b];
                coarse.rhs[i * nc + j] = 0.25 * (f(0, 0) + f(1, 0) + f(0, 1) + f(1, 1));
            }
        }
    }
    remove_mean(&mut coarse.rhs);
}

/// Linear interpolation of the coarse correction, added to the fine iterate.
fn prolong_add(coarse: &Level, fine: &mut Level) {
    let nc = coarse.n as isize;
    let nf = fine.n;
    // fine cell i sits a quarter coarse cell from coarse cell i/2, toward i/2 -+ 1
    let taps = |i: usize| -> [(usize, f64); 2] {
        let ci = (i / 2) as isize;
        let nb = if i % 2 == 0 { ci - 1 } else { ci + 1 };
        [(ci as usize, 0.75), (nb.rem_euclid(nc) as usize, 0.25)]
    };
    if fine.dim == 1 {
        for i in 0..nf {
            let [(a, wa), (b, wb)] = taps(i);
            fine.phi[i] += wa * coarse.phi[a] + wb * coarse.phi[b];
        }
    } else {
        let ncu = coarse.n;
        for i in 0..nf {
            let ti = taps(i);
            for j in 0..nf {
                let tj = taps(j);
                let mut acc = 0.0;
                for &(a, wa) in &ti {
                    for &(b, wb) in &tj {
                        acc += wa * wb * coarse.phi[a * ncu + b];
                    }
                }
                fine.phi[i * nf + j] += acc;
            }
        }
    }
}

/// Reusable multigrid hierarchy for one mesh and operator order.
pub struct Multigrid {
    mesh: Mesh,
    order: Order,
    cfg: MultigridConfig,
    levels: Vec<Level>,
    preconditioner: Option<Box<Multigrid>>,
}

impl Multigrid {
    pub fn new(mesh: Mesh, order: Order, cfg: MultigridConfig) -> Result<Self> {
        cfg.validate()?;
        let mut levels = vec![Level::new(&mesh)];
        let mut m = mesh;
        while let Some(c) = m.coarsen() {
            levels.push(Level::new(&c));
            m = c;
        }
        Ok(Multigrid {
            mesh,
            order,
            cfg,
            levels,
            preconditioner: None,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn config(&self) -> &MultigridConfig {
        &self.cfg
    }

    fn cycle(&mut self, l: usize) {
        let (order, cfg) = (self.order, self.cfg);
        if l + 1 == self.levels.len() {
            let lev = &mut self.levels[l];
            lev.smooth(order, cfg.coarse_sweeps, cfg.red_first);
            remove_mean(&mut lev.phi);
            return;
        }
        self.levels[l].smooth(order, cfg.pre_smooth, cfg.red_first);
        self.levels[l].residual(order);
        {
            let (fine, rest) = self.levels.split_at_mut(l + 1);
            let coarse = &mut rest[0];
            restrict(&fine[l], coarse);
            coarse.phi.iter_mut().for_each(|p| *p = 0.0);
        }
        self.cycle(l + 1);
        {
            let (fine, rest) = self.levels.split_at_mut(l + 1);
            prolong_add(&rest[0], &mut fine[l]);
        }
        self.levels[l].smooth(order, cfg.post_smooth, cfg.red_first);
    }

    /// One V-cycle on `A phi = rhs`, updating `phi` in place.
    pub fn vcycle(&mut self, phi: &mut ScalarField, rhs: &ScalarField) {
        self.levels[0].phi.copy_from_slice(phi.values());
        self.levels[0].rhs.copy_from_slice(rhs.values());
        self.cycle(0);
        phi.values_mut().copy_from_slice(&self.levels[0].phi);
    }

    /// Max-norm of `rhs - A phi`.
    pub fn residual_norm(&mut self, phi: &ScalarField, rhs: &ScalarField) -> f64 {
        let lev = &mut self.levels[0];
        lev.phi.copy_from_slice(phi.values());
        lev.rhs.copy_from_slice(rhs.values());
        lev.residual(self.order)
    }

    fn defect_correction_step(&mut self) -> Result<()> {
        let (mesh, cfg) = (self.mesh, self.cfg);
        if self.preconditioner.is_none() {
            self.preconditioner = Some(Box::new(Multigrid::new(mesh, Order::Second, cfg)?));
        }
        let order = self.order;
        let fine = &mut self.levels[0];
        fine.residual(order);
        let pre = self.preconditioner.as_mut().unwrap();
        pre.levels[0].rhs.copy_from_slice(&fine.res);
        remove_mean(&mut pre.levels[0].rhs);
        pre.levels[0].phi.iter_mut().for_each(|p| *p = 0.0);
        pre.cycle(0);
        for (p, e) in fine.phi.iter_mut().zip(&pre.levels[0].phi) {
            *p += e;
        }
        Ok(())
    }

    /// Solves `lap(phi) = -(rho - mean(rho))` to the configured tolerance.
    pub fn solve(&mut self, rho: &ScalarField) -> Result<(ScalarField, SolveStats)> {
        if rho.mesh() != &self.mesh {
            return Err(Error::InvalidMesh("density and solver meshes differ".into()));
        }
        let mean = rho.mean();
        let lev = &mut self.levels[0];
        for (b, r) in lev.rhs.iter_mut().zip(rho.values()) {
            *b = -(r - mean);
        }
        lev.phi.iter_mut().for_each(|p| *p = 0.0);
        let bnorm = lev.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if bnorm == 0.0 {
            return Ok((ScalarField::zeros(self.mesh), SolveStats::default()));
        }

        let mut history = vec![1.0];
        let mut stats = SolveStats::default();
        let mut converged = false;
        for cycle in 1..=self.cfg.max_vcycles {
            if stats.defect_correction {
                self.defect_correction_step()?;
            } else {
                self.cycle(0);
            }
            let rel = self.levels[0].residual(self.order) / bnorm;
            history.push(rel);
            stats.cycles = cycle;
            stats.residual = rel;
            if rel <= self.cfg.tolerance {
                converged = true;
                break;
            }
            if self.order == Order::Fourth && !stats.defect_correction && cycle >= 5 {
                let factor = (rel / history[cycle - 5]).powf(0.2);
                if factor > 0.9 {
                    stats.defect_correction = true;
                }
            }
        }
        if !converged {
            return Err(Error::SolverNotConverged {
                cycles: stats.cycles,
                residual: stats.residual,
            });
        }
        let mut phi = self.levels[0].phi.clone();
        remove_mean(&mut phi);
        Ok((ScalarField::from_values(self.mesh, phi)?, stats))
    }
}

/// One-shot Poisson solve; see [`Multigrid::solve`].
pub fn solve_poisson(rho: &ScalarField, order: Order, cfg: &MultigridConfig) -> Result<ScalarField> {
    let mut mg = Multigrid::new(*rho.mesh(), order, *cfg)?;
    mg.solve(rho).map(|(phi, _)| phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::apply_laplacian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_zero_mean(mesh: Mesh, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..mesh.cell_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        remove_mean(&mut v);
        ScalarField::from_values(mesh, v).unwrap()
    }

    fn relative_residual(phi: &ScalarField, rho: &ScalarField, order: Order) -> f64 {
        let lap = apply_laplacian(phi, order);
        let mean = rho.mean();
        let bnorm = rho.values().iter().fold(0.0f64, |m, r| m.max((r - mean).abs()));
        lap.values()
            .iter()
            .zip(rho.values())
            .map(|(l, r)| (l + (r - mean)).abs())
            .fold(0.0, f64::max)
            / bnorm
    }

    #[test]
    fn zero_density_gives_zero_potential() {
        let mesh = Mesh::new(2, 16, 1.0).unwrap();
        let phi = solve_poisson(&ScalarField::zeros(mesh), Order::Fourth, &Default::default()).unwrap();
        assert_eq!(phi.max_abs(), 0.0);
    }

    #[test]
    fn sine_density_inverts_the_stencil_symbol() {
        let length = 4.0 * PI;
        let mesh = Mesh::new(1, 64, length).unwrap();
        let k = 2.0 * PI / length;
        let dx = mesh.dx();
        let rho = ScalarField::from_fn(mesh, |x| (k * x[0]).sin());
        let phi = solve_poisson(&rho, Order::Second, &Default::default()).unwrap();
        let factor = dx * dx / (2.0 - 2.0 * (k * dx).cos());
        let amp = factor;
        for (i, p) in phi.values().iter().enumerate() {
            let expected = (k * mesh.cell_center(i)).sin() * factor;
            assert!((p - expected).abs() <= 1e-8 * amp, "{p} vs {expected}");
        }
        assert!(relative_residual(&phi, &rho, Order::Second) <= 1e-9);
    }

    #[test]
    fn random_density_converges_in_2d_for_both_orders() {
        let mesh = Mesh::new(2, 64, 2.0).unwrap();
        let rho = random_zero_mean(mesh, 7);
        for order in [Order::Second, Order::Fourth] {
            let mut mg = Multigrid::new(mesh, order, Default::default()).unwrap();
            let (phi, stats) = mg.solve(&rho).unwrap();
            assert!(stats.residual <= 1e-9);
            assert!(stats.cycles < 100);
            assert!(relative_residual(&phi, &rho, order) <= 1e-9);
            assert!(phi.mean().abs() < 1e-14);
        }
    }

    #[test]
    fn nonzero_mean_is_removed() {
        let mesh = Mesh::new(1, 32, 1.0).unwrap();
        let base = random_zero_mean(mesh, 3);
        let shifted = ScalarField::from_values(mesh, base.values().iter().map(|v| v + 0.25).collect()).unwrap();
        let a = solve_poisson(&base, Order::Fourth, &Default::default()).unwrap();
        let b = solve_poisson(&shifted, Order::Fourth, &Default::default()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-9 * a.max_abs());
        }
    }

    #[test]
    fn single_vcycle_reduction_factor() {
        let mesh = Mesh::new(1, 64, 1.0).unwrap();
        let rhs = random_zero_mean(mesh, 11);
        let mut mg = Multigrid::new(mesh, Order::Second, Default::default()).unwrap();
        let mut phi = ScalarField::zeros(mesh);
        let r0 = mg.residual_norm(&phi, &rhs);
        mg.vcycle(&mut phi, &rhs);
        let r1 = mg.residual_norm(&phi, &rhs);
        let factor = r1 / r0;
        assert!(factor <= 0.2, "reduction factor {factor}");
    }

    #[test]
    fn zero_rhs_vcycle_is_fixed_point() {
        let mesh = Mesh::new(2, 16, 1.0).unwrap();
        let mut mg = Multigrid::new(mesh, Order::Fourth, Default::default()).unwrap();
        let mut phi = ScalarField::zeros(mesh);
        mg.vcycle(&mut phi, &ScalarField::zeros(mesh));
        assert_eq!(phi.max_abs(), 0.0);
    }

    #[test]
    fn residual_decays_geometrically() {
        let mesh = Mesh::new(2, 32, 1.0).unwrap();
        let rhs = random_zero_mean(mesh, 5);
        for order in [Order::Second, Order::Fourth] {
            let mut mg = Multigrid::new(mesh, order, Default::default()).unwrap();
            let mut phi = ScalarField::zeros(mesh);
            let mut prev = mg.residual_norm(&phi, &rhs);
            for _ in 0..8 {
                mg.vcycle(&mut phi, &rhs);
                let r = mg.residual_norm(&phi, &rhs);
                assert!(r < 0.5 * prev, "{order}: {r} vs {prev}");
                prev = r;
            }
        }
    }

    #[test]
    fn sweep_color_does_not_change_the_answer() {
        let mesh = Mesh::new(2, 32, 3.0).unwrap();
        let rho = random_zero_mean(mesh, 9);
        for order in [Order::Second, Order::Fourth] {
            let red = solve_poisson(&rho, order, &MultigridConfig::default()).unwrap();
            let cfg = MultigridConfig { red_first: false, ..Default::default() };
            let black = solve_poisson(&rho, order, &cfg).unwrap();
            let scale = red.max_abs();
            for (a, b) in red.values().iter().zip(black.values()) {
                assert!((a - b).abs() <= 1e-7 * scale);
            }
        }
    }

    #[test]
    fn defect_correction_path_converges() {
        let mesh = Mesh::new(2, 32, 1.0).unwrap();
        let rho = random_zero_mean(mesh, 13);
        let mut mg = Multigrid::new(mesh, Order::Fourth, Default::default()).unwrap();
        // drive the fallback directly
        let lev = &mut mg.levels[0];
        for (b, r) in lev.rhs.iter_mut().zip(rho.values()) {
            *b = -r;
        }
        let bnorm = lev.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut rel = 1.0;
        for _ in 0..60 {
            mg.defect_correction_step().unwrap();
            rel = mg.levels[0].residual(Order::Fourth) / bnorm;
            if rel < 1e-10 {
                break;
            }
        }
        assert!(rel < 1e-10, "defect correction stalled at {rel}");
    }

    #[test]
    fn config_validation() {
        assert!(MultigridConfig::default().validate().is_ok());
        let bad = MultigridConfig { tolerance: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = MultigridConfig { coarse_sweeps: 10, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
