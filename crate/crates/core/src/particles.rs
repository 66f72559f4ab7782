//! Particle storage, lattice initialization, charge deposition and force
//! interpolation.
//!
//! Particles are stored structure-of-arrays: `q[p]`, and `x`/`v` flattened
//! as `x[p * dim + d]`.
//!
//! Deposition sums into an exact fixed-point accumulator, so the deposited
//! density does not depend on particle order (bitwise) and parallel partial
//! sums merge without rounding differences.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{header_value, parse_header, Mesh, ScalarField, VectorField};
use crate::kernels::{dispatch_kernel, split_coordinate, KernelId, StaticKernel, MAX_WIDTH};

/// Ordered set of equal-mass particles on a periodic domain `[0, length)^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    dim: usize,
    length: f64,
    q: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
}

/// Wraps a coordinate into `[0, length)`.
#[inline]
pub fn wrap_coordinate(x: f64, length: f64) -> f64 {
    let r = x.rem_euclid(length);
    if r >= length {
        0.0
    } else {
        r
    }
}

impl ParticleSet {
    pub fn new(dim: usize, length: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::config("dim", format!("{dim} not in {{1, 2}}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::config("length", "must be positive"));
        }
        Ok(ParticleSet {
            dim,
            length,
            q: Vec::new(),
            x: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn with_capacity(dim: usize, length: f64, capacity: usize) -> Result<Self> {
        let mut ps = Self::new(dim, length)?;
        ps.q.reserve(capacity);
        ps.x.reserve(capacity * dim);
        ps.v.reserve(capacity * dim);
        Ok(ps)
    }

    /// Builds a set from flat arrays; positions are wrapped into the domain.
    pub fn from_parts(dim: usize, length: f64, q: Vec<f64>, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let mut ps = Self::new(dim, length)?;
        if x.len() != q.len() * dim || v.len() != q.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: q.len() * dim,
                got: x.len().min(v.len()),
            });
        }
        if let Some(bad) = q.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::config("q", format!("particle charge {bad} must be positive")));
        }
        ps.q = q;
        ps.x = x;
        ps.v = v;
        ps.wrap_positions();
        Ok(ps)
    }

    pub fn push(&mut self, q: f64, x: &[f64], v: &[f64]) -> Result<()> {
        if x.len() != self.dim || v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::config("q", format!("particle charge {q} must be positive")));
        }
        self.q.push(q);
        self.x.extend(x.iter().map(|&c| wrap_coordinate(c, self.length)));
        self.v.extend_from_slice(v);
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, q: f64, x: &[f64], v: &[f64]) {
        self.q.push(q);
        self.x.extend_from_slice(x);
        self.v.extend_from_slice(v);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn charges(&self) -> &[f64] {
        &self.q
    }

    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    pub fn velocities(&self) -> &[f64] {
        &self.v
    }

    pub fn position(&self, p: usize) -> &[f64] {
        &self.x[p * self.dim..(p + 1) * self.dim]
    }

    pub fn velocity(&self, p: usize) -> &[f64] {
        &self.v[p * self.dim..(p + 1) * self.dim]
    }

    /// Mutable positions and velocities. Call [`ParticleSet::wrap_positions`]
    /// after moving particles.
    pub fn phase_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.x, &mut self.v)
    }

    pub fn total_charge(&self) -> f64 {
        self.q.iter().sum()
    }

    pub fn wrap_positions(&mut self) {
        let l = self.length;
        self.x.iter_mut().for_each(|c| *c = wrap_coordinate(*c, l));
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# count={} dim={} length={:e}",
            self.len(),
            self.dim,
            self.length
        )?;
        for p in 0..self.len() {
            let mut row = vec![format!("{:e}", self.q[p])];
            row.extend(self.position(p).iter().map(|c| format!("{c:e}")));
            row.extend(self.velocity(p).iter().map(|c| format!("{c:e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty particle snapshot".into()))??;
        let pairs = parse_header(&header)?;
        let count: usize = header_value(&pairs, "count")?;
        let dim: usize = header_value(&pairs, "dim")?;
        let length: f64 = header_value(&pairs, "length")?;
        let mut ps = ParticleSet::with_capacity(dim, length, count)?;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != 1 + 2 * dim {
                return Err(Error::Parse(format!("expected {} columns, got {}", 1 + 2 * dim, vals.len())));
            }
            ps.push(vals[0], &vals[1..1 + dim], &vals[1 + dim..])?;
        }
        if ps.len() != count {
            return Err(Error::Parse(format!("header says {count} particles, found {}", ps.len())));
        }
        Ok(ps)
    }
}

/// Phase-space lattice used to create particles at initialization and remap.
///
/// The lattice has `n_x` cells per spatial axis on `[0, length)` and `n_v`
/// cells per velocity axis on `[-v_max, v_max]`. Cells are stored with the
/// spatial axes slowest and the last velocity axis fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGridSpec {
    pub dim: usize,
    pub length: f64,
    pub n_x: usize,
    pub n_v: usize,
    pub v_max: f64,
    /// Particles with charge below this are discarded.
    pub threshold: f64,
}

impl PhaseSpaceGridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::config("dim", format!("{} not in {{1, 2}}", self.dim)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::config("length", "must be positive"));
        }
        if self.n_x == 0 || self.n_v == 0 {
            return Err(Error::config("n_x/n_v", "lattice needs at least one cell per axis"));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::config("v_max", "must be positive"));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::config("threshold", "must be non-negative"));
        }
        Ok(())
    }

    pub fn h_x(&self) -> f64 {
        self.length / self.n_x as f64
    }

    pub fn h_v(&self) -> f64 {
        2.0 * self.v_max / self.n_v as f64
    }

    /// Phase-space volume of one lattice cell, `h_x^D h_v^D`.
    pub fn cell_volume(&self) -> f64 {
        (self.h_x() * self.h_v()).powi(self.dim as i32)
    }

    pub fn cell_count(&self) -> usize {
        (self.n_x * self.n_v).pow(self.dim as u32)
    }

    /// Lattice extents, spatial axes first.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.n_x; self.dim];
        s.extend(std::iter::repeat(self.n_v).take(self.dim));
        s
    }

    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h_x()
    }

    pub fn v_center(&self, j: usize) -> f64 {
        -self.v_max + (j as f64 + 0.5) * self.h_v()
    }

    /// Cell-center coordinates of a flat lattice index into `x` and `v`.
    pub fn center_of(&self, index: usize, x: &mut [f64], v: &mut [f64]) {
        let mut rest = index;
        for d in (0..self.dim).rev() {
            v[d] = self.v_center(rest % self.n_v);
            rest /= self.n_v;
        }
        for d in (0..self.dim).rev() {
            x[d] = self.x_center(rest % self.n_x);
            rest /= self.n_x;
        }
    }
}

/// Creates one particle per lattice cell with `q = f(x, v) h_x^D h_v^D`,
/// discarding those below the threshold.
pub fn initialize_particles(f: impl Fn(&[f64], &[f64]) -> f64, spec: &PhaseSpaceGridSpec) -> Result<ParticleSet> {
    spec.validate()?;
    let vol = spec.cell_volume();
    let dim = spec.dim;
    let mut ps = ParticleSet::new(dim, spec.length)?;
    let (mut x, mut v) = ([0.0; 2], [0.0; 2]);
    for index in 0..spec.cell_count() {
        spec.center_of(index, &mut x, &mut v);
        let q = f(&x[..dim], &v[..dim]) * vol;
        if q > 0.0 && q >= spec.threshold {
            ps.push_unchecked(q, &x[..dim], &v[..dim]);
        }
    }
    Ok(ps)
}

const HI_SCALE: f64 = (1u64 << 40) as f64;
const LO_SCALE: f64 = (1u64 << 60) as f64;
const FIXED_UNIT: f64 = HI_SCALE * LO_SCALE;
/// Largest single term the fixed-point accumulator accepts.
const FIXED_TERM_LIMIT: f64 = (1u64 << 22) as f64;

/// Adds `value` to a fixed-point accumulator with resolution 2^-100.
#[inline]
fn fixed_add(acc: &mut i128, value: f64) {
    let a = value * HI_SCALE;
    let hi = a as i64;
    let lo = ((a - hi as f64) * LO_SCALE) as i64;
    *acc += ((hi as i128) << 60) + lo as i128;
}

#[inline]
fn fixed_value(acc: i128) -> f64 {
    acc as f64 / FIXED_UNIT
}

/// Per-axis taps of a point on a periodic cell-centered axis.
#[inline(always)]
pub(crate) fn periodic_taps(kernel: KernelId, x: f64, h: f64, n: usize) -> ([usize; MAX_WIDTH], [f64; MAX_WIDTH]) {
    let (home, s) = split_coordinate(x / h - 0.5);
    let w = kernel.weights(s);
    let mut idx = [0usize; MAX_WIDTH];
    let ni = n as i64;
    let mut base = home + kernel.first_offset();
    // wrapped positions only need a shift; the division is for far-off input
    if base < 0 {
        base += ni;
    }
    if !(0..ni).contains(&base) {
        base = base.rem_euclid(ni);
    }
    let base = base as usize;
    for (m, slot) in idx.iter_mut().take(kernel.width()).enumerate() {
        let mut j = base + m;
        while j >= n {
            j -= n;
        }
        *slot = j;
    }
    (idx, w)
}

/// Reusable scratch for repeated depositions onto one mesh.
#[derive(Debug, Default, Clone)]
pub struct Depositor {
    acc: Vec<i128>,
}

impl Depositor {
    /// Deposits charges `q` at positions `x` (flat, any real values; wrapped
    /// periodically) and returns the density `sum q W / V`.
    pub fn deposit(&mut self, mesh: &Mesh, kernel: KernelId, q: &[f64], x: &[f64]) -> Result<ScalarField> {
        let dim = mesh.dim();
        if x.len() != q.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: q.len() * dim,
                got: x.len(),
            });
        }
        let n = mesh.n_cells();
        let dx = mesh.dx();
        let inv_vol = 1.0 / mesh.cell_volume();
        let qmax = q.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if qmax * inv_vol * 2.0 >= FIXED_TERM_LIMIT {
            return Err(Error::config("q", "charge density exceeds the deposition accumulator range"));
        }
        self.acc.clear();
        self.acc.resize(mesh.cell_count(), 0);
        dispatch_kernel!(kernel, deposit_fixed(&mut self.acc, dim, n, dx, inv_vol, q, x));
        let values = self.acc.iter().map(|&a| fixed_value(a)).collect();
        ScalarField::from_values(*mesh, values)
    }
}

fn deposit_fixed<K: StaticKernel>(acc: &mut [i128], dim: usize, n: usize, dx: f64, inv_vol: f64, q: &[f64], x: &[f64]) {
    let kernel = K::ID;
    let width = kernel.width();
    match dim {
        1 => {
            for (p, &qp) in q.iter().enumerate() {
                let (ix, wx) = periodic_taps(kernel, x[p], dx, n);
                let c = qp * inv_vol;
                for a in 0..width {
                    fixed_add(&mut acc[ix[a]], c * wx[a]);
                }
            }
        }
        _ => {
            for (p, &qp) in q.iter().enumerate() {
                let (ix, wx) = periodic_taps(kernel, x[2 * p], dx, n);
                let (iy, wy) = periodic_taps(kernel, x[2 * p + 1], dx, n);
                let c = qp * inv_vol;
                for a in 0..width {
                    let row = ix[a] * n;
                    let ca = c * wx[a];
                    for b in 0..width {
                        fixed_add(&mut acc[row + iy[b]], ca * wy[b]);
                    }
                }
            }
        }
    }
}

/// Charge density `rho_i = sum_p (q_p / V_i) W((x_i - x_p) / dx)`.
pub fn deposit_charge(ps: &ParticleSet, mesh: &Mesh, kernel: KernelId) -> Result<ScalarField> {
    if ps.dim() != mesh.dim() {
        return Err(Error::DimensionMismatch {
            expected: mesh.dim(),
            got: ps.dim(),
        });
    }
    Depositor::default().deposit(mesh, kernel, ps.charges(), ps.positions())
}

/// Net charge density `1 - deposited`, shifted to have exactly zero mean.
pub fn charge_density_rhs(deposited: &ScalarField) -> ScalarField {
    let mut rho = deposited.clone();
    rho.values_mut().iter_mut().for_each(|r| *r = 1.0 - *r);
    let mean = rho.mean();
    rho.values_mut().iter_mut().for_each(|r| *r -= mean);
    rho
}

/// Gathers `E` at positions `x` and writes accelerations `a = -E_p` into `out`.
pub fn interpolate_accelerations(e: &VectorField, kernel: KernelId, x: &[f64], out: &mut [f64]) -> Result<()> {
    let mesh = e.mesh();
    let dim = mesh.dim();
    if x.len() != out.len() || x.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: out.len(),
        });
    }
    dispatch_kernel!(kernel, gather_accelerations(e, x, out));
    Ok(())
}

fn gather_accelerations<K: StaticKernel>(e: &VectorField, x: &[f64], out: &mut [f64]) {
    let mesh = e.mesh();
    let dim = mesh.dim();
    let n = mesh.n_cells();
    let dx = mesh.dx();
    let kernel = K::ID;
    let width = kernel.width();
    match dim {
        1 => {
            let ex = e.component(0).values();
            for (xp, o) in x.iter().zip(out.iter_mut()) {
                let (ix, wx) = periodic_taps(kernel, *xp, dx, n);
                let mut acc = 0.0;
                for a in 0..width {
                    acc += wx[a] * ex[ix[a]];
                }
                *o = -acc;
            }
        }
        _ => {
            let ex = e.component(0).values();
            let ey = e.component(1).values();
            for (xp, o) in x.chunks_exact(2).zip(out.chunks_exact_mut(2)) {
                let (ix, wx) = periodic_taps(kernel, xp[0], dx, n);
                let (iy, wy) = periodic_taps(kernel, xp[1], dx, n);
                let (mut ax, mut ay) = (0.0, 0.0);
                for a in 0..width {
                    let row = ix[a] * n;
                    let (mut sx, mut sy) = (0.0, 0.0);
                    for b in 0..width {
                        sx += wy[b] * ex[row + iy[b]];
                        sy += wy[b] * ey[row + iy[b]];
                    }
                    ax += wx[a] * sx;
                    ay += wx[a] * sy;
                }
                o[0] = -ax;
                o[1] = -ay;
            }
        }
    }
}

/// Per-particle accelerations `a_p = -E_p` with `E_p = sum_i E_i W((x_i - x_p) / dx)`.
pub fn interpolate_field(e: &VectorField, ps: &ParticleSet, kernel: KernelId) -> Result<Vec<f64>> {
    if ps.dim() != e.mesh().dim() {
        return Err(Error::DimensionMismatch {
            expected: e.mesh().dim(),
            got: ps.dim(),
        });
    }
    let mut out = vec![0.0; ps.positions().len()];
    interpolate_accelerations(e, kernel, ps.positions(), &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_set(dim: usize, length: f64, count: usize, seed: u64) -> ParticleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParticleSet::new(dim, length).unwrap();
        for _ in 0..count {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..length)).collect();
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            ps.push(rng.gen_range(0.01..1.0), &x, &v).unwrap();
        }
        ps
    }

    #[test]
    fn fixed_point_accumulator_is_exact_for_dyadics() {
        let mut acc = 0i128;
        for v in [0.5, -0.25, 1e-3, 3.0, -1e-3] {
            fixed_add(&mut acc, v);
        }
        assert_eq!(fixed_value(acc), 3.25);
        let mut acc = 0i128;
        fixed_add(&mut acc, 0.1);
        assert!((fixed_value(acc) - 0.1).abs() < 1e-16);
    }

    #[test]
    fn uniform_lattice_initialization() {
        let spec = PhaseSpaceGridSpec {
            dim: 1,
            length: 2.0,
            n_x: 2,
            n_v: 2,
            v_max: 1.0,
            threshold: 0.0,
        };
        let ps = initialize_particles(|_, _| 1.0, &spec).unwrap();
        assert_eq!(ps.len(), 4);
        for &q in ps.charges() {
            assert_eq!(q, spec.h_x() * spec.h_v());
        }
        assert_eq!(ps.position(0), &[0.5]);
        assert_eq!(ps.velocity(0), &[-0.5]);
        assert_eq!(ps.velocity(1), &[0.5]);
        assert_eq!(ps.position(2), &[1.5]);
    }

    #[test]
    fn landau_charge_at_quarter_domain() {
        let k = 0.5;
        let length = 2.0 * PI / k;
        // choose the lattice so that (L/4, 0) is a cell center
        let spec = PhaseSpaceGridSpec {
            dim: 1,
            length,
            n_x: 2,
            n_v: 1,
            v_max: 10.0,
            threshold: 0.0,
        };
        let f = |x: &[f64], v: &[f64]| {
            (-v[0] * v[0] / 2.0).exp() / (2.0 * PI).sqrt() * (1.0 + 0.01 * (k * x[0]).cos())
        };
        let ps = initialize_particles(f, &spec).unwrap();
        let expected = (1.0 + 0.01 * (0.5 * length / 4.0).cos()) / (2.0 * PI).sqrt() * spec.h_x() * spec.h_v();
        assert!((ps.position(0)[0] - length / 4.0).abs() < 1e-15);
        assert!((ps.charges()[0] - expected).abs() <= 4.0 * f64::EPSILON * expected);
    }

    #[test]
    fn tail_cells_below_threshold_are_dropped() {
        let spec = PhaseSpaceGridSpec {
            dim: 1,
            length: 4.0 * PI,
            n_x: 8,
            n_v: 64,
            v_max: 10.0,
            threshold: 1e-16,
        };
        let f = |_: &[f64], v: &[f64]| (-v[0] * v[0] / 2.0).exp() / (2.0 * PI).sqrt();
        let ps = initialize_particles(f, &spec).unwrap();
        assert!(ps.len() < spec.cell_count());
        assert!(ps.charges().iter().all(|&q| q >= 1e-16));
        assert!(ps.velocities().iter().all(|v| v.abs() < 9.0));
    }

    #[test]
    fn deposit_single_particle_at_center_and_midpoint() {
        let mesh = Mesh::new(1, 8, 4.0).unwrap();
        let vol = mesh.cell_volume();
        let mut ps = ParticleSet::new(1, 4.0).unwrap();
        ps.push(1.0, &[mesh.cell_center(3)], &[0.0]).unwrap();
        let rho = deposit_charge(&ps, &mesh, KernelId::W2).unwrap();
        for (i, r) in rho.values().iter().enumerate() {
            assert_eq!(*r, if i == 3 { 1.0 / vol } else { 0.0 });
        }

        let mut ps = ParticleSet::new(1, 4.0).unwrap();
        ps.push(1.0, &[2.0 * mesh.dx()], &[0.0]).unwrap();
        let rho = deposit_charge(&ps, &mesh, KernelId::W2).unwrap();
        assert_eq!(rho.values()[1], 0.5 / vol);
        assert_eq!(rho.values()[2], 0.5 / vol);
        assert_eq!(rho.sum(), 1.0 / vol);
    }

    #[test]
    fn deposit_conserves_charge() {
        for dim in [1, 2] {
            let ps = random_set(dim, 3.0, 500, 42 + dim as u64);
            let mesh = Mesh::new(dim, 16, 3.0).unwrap();
            for kernel in [KernelId::W2, KernelId::W4] {
                let rho = deposit_charge(&ps, &mesh, kernel).unwrap();
                let total = rho.sum() * mesh.cell_volume();
                let q = ps.total_charge();
                assert!((total - q).abs() <= 1e-12 * q, "{dim}D {kernel:?}");
            }
        }
    }

    #[test]
    fn deposit_is_bitwise_order_independent() {
        let ps = random_set(2, 5.0, 300, 1);
        let mesh = Mesh::new(2, 8, 5.0).unwrap();
        let mut perm: Vec<usize> = (0..ps.len()).collect();
        perm.reverse();
        perm.swap(3, 100);
        let mut shuffled = ParticleSet::new(2, 5.0).unwrap();
        for &p in &perm {
            shuffled.push(ps.charges()[p], ps.position(p), ps.velocity(p)).unwrap();
        }
        let a = deposit_charge(&ps, &mesh, KernelId::W4).unwrap();
        let b = deposit_charge(&shuffled, &mesh, KernelId::W4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rhs_neutralizes_background() {
        let mesh = Mesh::new(1, 8, 1.0).unwrap();
        let ones = ScalarField::from_fn(mesh, |_| 1.0);
        assert_eq!(charge_density_rhs(&ones).max_abs(), 0.0);

        let k = 2.0 * PI;
        let pert = ScalarField::from_fn(mesh, |x| 1.0 + 0.01 * (k * x[0]).cos());
        let rho = charge_density_rhs(&pert);
        for (i, r) in rho.values().iter().enumerate() {
            assert!((r + 0.01 * (k * mesh.cell_center(i)).cos()).abs() < 1e-15);
        }

        let drift = ScalarField::from_fn(mesh, |x| 1.0 + 1e-3 + x[0]);
        assert!(charge_density_rhs(&drift).mean().abs() < 1e-16);
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let length = 8.0;
        let mesh = Mesh::new(1, 32, length).unwrap();
        let cases: [(KernelId, fn(f64) -> f64); 3] = [
            (KernelId::W2, |_| 0.7),
            (KernelId::W2, |x| 0.3 * x - 1.0),
            (KernelId::W4, |x| 0.01 * x * x * x - 0.2 * x * x + x - 2.0),
        ];
        for (kernel, poly) in cases {
            let e = VectorField::from_components(vec![ScalarField::from_fn(mesh, |x| poly(x[0]))]).unwrap();
            // keep the stencil away from the periodic seam
            let xs = [2.0, 3.1415, 4.77, 5.5001];
            let mut out = [0.0; 4];
            interpolate_accelerations(&e, kernel, &xs, &mut out).unwrap();
            for (x, a) in xs.iter().zip(out) {
                assert!((a + poly(*x)).abs() < 1e-12, "{kernel:?} at {x}: {a}");
            }
        }
    }

    #[test]
    fn uniform_field_gathers_exactly_in_2d() {
        let mesh = Mesh::new(2, 8, 2.0).unwrap();
        let e = VectorField::from_components(vec![
            ScalarField::from_fn(mesh, |_| 0.25),
            ScalarField::from_fn(mesh, |_| -1.5),
        ])
        .unwrap();
        let ps = random_set(2, 2.0, 50, 3);
        for kernel in [KernelId::W2, KernelId::W4] {
            let a = interpolate_field(&e, &ps, kernel).unwrap();
            for c in a.chunks(2) {
                assert!((c[0] + 0.25).abs() < 1e-14);
                assert!((c[1] - 1.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shifting_by_one_cell_permutes_density() {
        // dyadic length and positions keep the shift exact
        let length = 8.0;
        let mesh = Mesh::new(2, 16, length).unwrap();
        let dx = mesh.dx();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut ps = ParticleSet::new(2, length).unwrap();
        let mut shifted = ParticleSet::new(2, length).unwrap();
        for _ in 0..200 {
            let x = [
                rng.gen_range(0..(1u32 << 23)) as f64 / (1u32 << 20) as f64,
                rng.gen_range(0..(1u32 << 23)) as f64 / (1u32 << 20) as f64,
            ];
            let q = rng.gen_range(1..1000) as f64 / 1024.0;
            ps.push(q, &x, &[0.0, 0.0]).unwrap();
            shifted.push(q, &[x[0] + dx, x[1]], &[0.0, 0.0]).unwrap();
        }
        for kernel in [KernelId::W2, KernelId::W4] {
            let a = deposit_charge(&ps, &mesh, kernel).unwrap();
            let b = deposit_charge(&shifted, &mesh, kernel).unwrap();
            let n = mesh.n_cells();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(b.values()[((i + 1) % n) * n + j], a.values()[i * n + j]);
                }
            }
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let ps = random_set(2, 3.0, 20, 5);
        let mut buf = Vec::new();
        ps.write_snapshot(&mut buf).unwrap();
        assert_eq!(ParticleSet::read_snapshot(&buf[..]).unwrap(), ps);
    }

    #[test]
    fn rejects_nonpositive_charge() {
        let mut ps = ParticleSet::new(1, 1.0).unwrap();
        assert!(ps.push(0.0, &[0.1], &[0.0]).is_err());
        assert!(ps.push(-1.0, &[0.1], &[0.0]).is_err());
        assert!(ps.push(1.0, &[0.1, 0.2], &[0.0]).is_err());
    }

    #[test]
    fn positions_wrap_into_domain() {
        let mut ps = ParticleSet::new(1, 2.0).unwrap();
        ps.push(1.0, &[-0.5], &[0.0]).unwrap();
        ps.push(1.0, &[4.25], &[0.0]).unwrap();
        ps.push(1.0, &[-1e-18], &[0.0]).unwrap();
        assert_eq!(ps.positions()[0], 1.5);
        assert_eq!(ps.positions()[1], 0.25);
        assert!(ps.positions()[2] < 2.0);
    }
}
