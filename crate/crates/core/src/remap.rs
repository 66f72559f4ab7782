//! Phase-space remapping.
//!
//! A remap deposits the particles onto the phase-space lattice with a
//! high-order kernel, optionally moves negative undershoots onto positive
//! neighbours, and emits one fresh particle per lattice cell.
//!
//! Large lattices are processed in blocks of slabs along the first spatial
//! axis. Each block is padded with `2 * max_redistribution_iters` halo slabs
//! per side, which is the distance redistribution information travels, so a
//! blocked remap returns exactly (bitwise) the particles of a whole-lattice
//! remap.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{dispatch_kernel, split_coordinate, KernelId, StaticKernel, MAX_WIDTH};
use crate::particles::{periodic_taps, ParticleSet, PhaseSpaceGridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemapConfig {
    /// Steps between remaps; 0 disables remapping.
    pub interval: usize,
    pub spec: PhaseSpaceGridSpec,
    pub positivity: bool,
    pub max_redistribution_iters: usize,
    /// Lattices with more cells than this are remapped block by block.
    pub max_chunk_cells: usize,
    /// Forces blocks of this many first-axis slabs, regardless of size.
    pub chunk_slabs: Option<usize>,
}

impl RemapConfig {
    pub fn new(spec: PhaseSpaceGridSpec, interval: usize) -> Self {
        RemapConfig {
            interval,
            spec,
            positivity: true,
            max_redistribution_iters: 5,
            max_chunk_cells: 1 << 27,
            chunk_slabs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.positivity && self.max_redistribution_iters == 0 {
            return Err(Error::config(
                "max_redistribution_iters",
                "must be at least 1 when positivity is enabled",
            ));
        }
        if self.chunk_slabs == Some(0) {
            return Err(Error::config("chunk_slabs", "must be positive"));
        }
        Ok(())
    }

    fn halo(&self) -> usize {
        if self.positivity {
            2 * self.max_redistribution_iters
        } else {
            0
        }
    }
}

/// Distribution function sampled on the full phase-space lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceDensity {
    pub spec: PhaseSpaceGridSpec,
    /// Cell values, spatial axes slowest, last velocity axis fastest.
    pub values: Vec<f64>,
    /// Charge that fell outside the velocity bounds during deposition.
    pub truncated_charge: f64,
}

impl PhaseSpaceDensity {
    /// Sum of `f h_x^D h_v^D` over the lattice.
    pub fn total_charge(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    /// Writes a header line and one row per run of the fastest axis.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.spec;
        writeln!(
            w,
            "# dim={} n_x={} n_v={} h_x={:e} h_v={:e} length={:e} v_max={:e}",
            s.dim,
            s.n_x,
            s.n_v,
            s.h_x(),
            s.h_v(),
            s.length,
            s.v_max
        )?;
        for row in self.values.chunks(s.n_v) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Extents and boundary treatment of a Cartesian lattice, slowest axis first.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeShape {
    pub dims: Vec<usize>,
    pub periodic: Vec<bool>,
}

impl LatticeShape {
    pub fn new(dims: Vec<usize>, periodic: Vec<bool>) -> Result<Self> {
        if dims.len() != periodic.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                got: periodic.len(),
            });
        }
        Ok(LatticeShape { dims, periodic })
    }

    /// Phase-space lattice: periodic in position, bounded in velocity.
    pub fn phase_space(spec: &PhaseSpaceGridSpec) -> Self {
        let mut periodic = vec![true; spec.dim];
        periodic.extend(std::iter::repeat(false).take(spec.dim));
        LatticeShape {
            dims: spec.shape(),
            periodic,
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RedistributionReport {
    /// Redistribution passes performed.
    pub iterations: usize,
    /// Cells still negative after the last pass, clamped to zero.
    pub clamped_cells: usize,
    /// Sum of the clamped (negative) values' magnitudes, in units of `f`.
    pub clamp_defect: f64,
}

/// Removes negative values by moving each undershoot onto the positive
/// neighbours (all cells within index offset 1 in every axis) in proportion
/// to their value.
///
/// Passes are Jacobi-style: every transfer in a pass is computed from the
/// values at the start of that pass. A negative cell with no positive
/// neighbour is left for a later pass; cells still negative after
/// `max_iters` passes are clamped to zero and reported.
pub fn redistribute_in_place(values: &mut [f64], shape: &LatticeShape, max_iters: usize) -> Result<RedistributionReport> {
    if values.len() != shape.len() {
        return Err(Error::DimensionMismatch {
            expected: shape.len(),
            got: values.len(),
        });
    }
    let order: Vec<usize> = (0..shape.dims.first().copied().unwrap_or(0)).collect();
    let slab = shape.len() / shape.dims.first().copied().unwrap_or(1).max(1);
    Ok(redistribute_ordered(values, shape, max_iters, &order, 0..order.len(), slab))
}

/// Redistribution on the whole lattice of a density.
pub fn redistribute_negatives(f: &mut PhaseSpaceDensity, max_iters: usize) -> RedistributionReport {
    let shape = LatticeShape::phase_space(&f.spec);
    redistribute_in_place(&mut f.values, &shape, max_iters).expect("density matches its own lattice")
}

/// Neighbour offsets in a fixed order, excluding the zero offset.
fn neighbour_offsets(nd: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; nd];
    for _ in 0..3usize.pow(nd as u32) {
        if idx.iter().any(|&m| m != 1) {
            out.push(idx.iter().map(|&m| m as i64 - 1).collect());
        }
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] < 3 {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// Core redistribution. Negative cells are visited slab by slab following
/// `slab_order`, so the accumulation order at every cell can be made to
/// agree between a padded block and the whole lattice. Clamp defects are
/// counted only for slabs in `counted`.
fn redistribute_ordered(
    values: &mut [f64],
    shape: &LatticeShape,
    max_iters: usize,
    slab_order: &[usize],
    counted: std::ops::Range<usize>,
    slab_len: usize,
) -> RedistributionReport {
    let nd = shape.dims.len();
    let offsets = neighbour_offsets(nd);
    let mut strides = vec![1usize; nd];
    for d in (0..nd.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape.dims[d + 1];
    }
    let neighbour = |index: usize, off: &[i64]| -> Option<usize> {
        let mut out = index as i64;
        for d in 0..nd {
            let n = shape.dims[d] as i64;
            let c = (index / strides[d]) as i64 % n;
            let mut t = c + off[d];
            if t < 0 || t >= n {
                if !shape.periodic[d] {
                    return None;
                }
                t = t.rem_euclid(n);
            }
            out += (t - c) * strides[d] as i64;
        }
        Some(out as usize)
    };

    let mut report = RedistributionReport::default();
    let mut acc: Vec<f64> = Vec::new();
    let mut negatives = Vec::new();
    let mut zeroed = Vec::new();
    let mut targets = Vec::with_capacity(offsets.len());
    loop {
        negatives.clear();
        for &s in slab_order {
            let base = s * slab_len;
            for (i, &v) in values[base..base + slab_len].iter().enumerate() {
                if v < 0.0 {
                    negatives.push(base + i);
                }
            }
        }
        if negatives.is_empty() || report.iterations == max_iters {
            break;
        }
        if acc.is_empty() {
            acc = vec![0.0; values.len()];
        }
        zeroed.clear();
        for &k in &negatives {
            targets.clear();
            let mut capacity = 0.0;
            for off in &offsets {
                if let Some(n) = neighbour(k, off) {
                    let xi = values[n];
                    if xi > 0.0 {
                        capacity += xi;
                        targets.push(n);
                    }
                }
            }
            if capacity > 0.0 {
                let c = values[k] / capacity;
                for &n in &targets {
                    acc[n] += c;
                }
                zeroed.push(k);
            }
        }
        for (v, a) in values.iter_mut().zip(acc.iter_mut()) {
            if *a != 0.0 {
                *v += *v * *a;
                *a = 0.0;
            }
        }
        for &k in &zeroed {
            values[k] = 0.0;
        }
        report.iterations += 1;
    }
    for &k in &negatives {
        if counted.contains(&(k / slab_len)) {
            report.clamped_cells += 1;
            report.clamp_defect -= values[k];
        }
        values[k] = 0.0;
    }
    report
}

/// Velocity-axis taps clipped to the lattice: first node index, weights, and
/// the in-range entry range `lo..hi`.
#[inline(always)]
fn velocity_taps(kernel: KernelId, v: f64, spec: &PhaseSpaceGridSpec) -> (i64, [f64; MAX_WIDTH], usize, usize) {
    let (home, s) = split_coordinate((v + spec.v_max) / spec.h_v() - 0.5);
    let w = kernel.weights(s);
    let first = home + kernel.first_offset();
    let width = kernel.width() as i64;
    let n = spec.n_v as i64;
    let lo = (-first).clamp(0, width) as usize;
    let hi = (n - first).clamp(0, width) as usize;
    (first, w, lo, hi.max(lo))
}

/// Charge lost off the velocity bounds, summed in particle order.
fn truncation_loss(ps: &ParticleSet, spec: &PhaseSpaceGridSpec, kernel: KernelId) -> f64 {
    let width = kernel.width();
    let mut lost = 0.0;
    for (p, &q) in ps.charges().iter().enumerate() {
        let mut kept = 1.0;
        let mut clipped = false;
        for &v in ps.velocity(p) {
            let (_, w, lo, hi) = velocity_taps(kernel, v, spec);
            if lo > 0 || hi < width {
                clipped = true;
                kept *= w[lo..hi].iter().sum::<f64>();
            }
        }
        if clipped {
            lost += q * (1.0 - kept);
        }
    }
    lost
}

/// A run of first-axis slabs `start, start + 1, ...` (mod `n_x`).
#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    slabs: usize,
    /// The block is the whole, periodic lattice.
    whole: bool,
}

fn slab_len(spec: &PhaseSpaceGridSpec) -> usize {
    spec.cell_count() / spec.n_x
}

/// Deposits all particles onto the slabs of `block`; contributions to each
/// cell are summed in particle order.
fn deposit_block(ps: &ParticleSet, spec: &PhaseSpaceGridSpec, kernel: KernelId, block: Block) -> Vec<f64> {
    dispatch_kernel!(kernel, deposit_block_with(ps, spec, block))
}

fn deposit_block_with<K: StaticKernel>(ps: &ParticleSet, spec: &PhaseSpaceGridSpec, block: Block) -> Vec<f64> {
    let kernel = K::ID;
    let dim = spec.dim;
    let n_x = spec.n_x;
    let n_v = spec.n_v;
    let h_x = spec.h_x();
    let slab = slab_len(spec);
    let mut out = vec![0.0; block.slabs * slab];
    let inv_vol = 1.0 / spec.cell_volume();
    let width = kernel.width();
    let x = ps.positions();
    let v = ps.velocities();
    let local_of = |g: usize| -> Option<usize> {
        if block.whole {
            return Some(g);
        }
        let l = (g + n_x - block.start) % n_x;
        (l < block.slabs).then_some(l)
    };

    for (p, &q) in ps.charges().iter().enumerate() {
        let (ix0, wx0) = periodic_taps(kernel, x[p * dim], h_x, n_x);
        if !block.whole && (0..width).all(|a| local_of(ix0[a]).is_none()) {
            continue;
        }
        let c = q * inv_vol;
        if dim == 1 {
            let (first, wv, lo, hi) = velocity_taps(kernel, v[p], spec);
            for a in 0..width {
                let Some(l) = local_of(ix0[a]) else { continue };
                let ca = c * wx0[a];
                let row = l * n_v;
                for m in lo..hi {
                    out[row + (first + m as i64) as usize] += ca * wv[m];
                }
            }
        } else {
            let (ix1, wx1) = periodic_taps(kernel, x[p * 2 + 1], h_x, n_x);
            let (f0, wv0, lo0, hi0) = velocity_taps(kernel, v[p * 2], spec);
            let (f1, wv1, lo1, hi1) = velocity_taps(kernel, v[p * 2 + 1], spec);
            if lo1 >= hi1 {
                continue;
            }
            let j1 = (f1 + lo1 as i64) as usize;
            let wv1 = &wv1[lo1..hi1];
            for a in 0..width {
                let Some(l) = local_of(ix0[a]) else { continue };
                let ca = c * wx0[a];
                for b in 0..width {
                    let cb = ca * wx1[b];
                    let plane = (l * n_x + ix1[b]) * n_v;
                    for m in lo0..hi0 {
                        let cm = cb * wv0[m];
                        let base = (plane + (f0 + m as i64) as usize) * n_v + j1;
                        for (o, w) in out[base..base + wv1.len()].iter_mut().zip(wv1) {
                            *o += cm * w;
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ResampleReport {
    /// Cells whose charge was below the threshold or not positive.
    pub dropped_count: usize,
    /// Total (signed) charge of those cells.
    pub dropped_charge: f64,
}

/// Emits particles for slabs `lo..hi` of a block into `out`.
fn resample_block(
    values: &[f64],
    spec: &PhaseSpaceGridSpec,
    block: Block,
    lo: usize,
    hi: usize,
    out: &mut ParticleSet,
    report: &mut ResampleReport,
) {
    let dim = spec.dim;
    let slab = slab_len(spec);
    let vol = spec.cell_volume();
    let (mut x, mut v) = ([0.0; 2], [0.0; 2]);
    for l in lo..hi {
        let g = (block.start + l) % spec.n_x;
        for (r, &f) in values[l * slab..(l + 1) * slab].iter().enumerate() {
            let q = f * vol;
            if q > 0.0 && q >= spec.threshold {
                spec.center_of(g * slab + r, &mut x, &mut v);
                out.push_unchecked(q, &x[..dim], &v[..dim]);
            } else if f != 0.0 {
                report.dropped_count += 1;
                report.dropped_charge += q;
            }
        }
    }
}

/// Deposits particles onto the full lattice:
/// `f = sum_p q_p / (h_x^D h_v^D) W(x) W(v)`, periodic in position and
/// truncated at the velocity bounds.
pub fn deposit_phase_space(ps: &ParticleSet, spec: &PhaseSpaceGridSpec, kernel: KernelId) -> Result<PhaseSpaceDensity> {
    spec.validate()?;
    check_dims(ps, spec)?;
    let block = Block {
        start: 0,
        slabs: spec.n_x,
        whole: true,
    };
    Ok(PhaseSpaceDensity {
        spec: *spec,
        values: deposit_block(ps, spec, kernel, block),
        truncated_charge: truncation_loss(ps, spec, kernel),
    })
}

/// One particle per lattice cell with `q = f h_x^D h_v^D`, in lattice order;
/// cells below the threshold (or not positive) are skipped and reported.
pub fn resample_particles(f: &PhaseSpaceDensity) -> Result<(ParticleSet, ResampleReport)> {
    let spec = &f.spec;
    spec.validate()?;
    if f.values.len() != spec.cell_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.cell_count(),
            got: f.values.len(),
        });
    }
    let mut out = ParticleSet::new(spec.dim, spec.length)?;
    let mut report = ResampleReport::default();
    let block = Block {
        start: 0,
        slabs: spec.n_x,
        whole: true,
    };
    resample_block(&f.values, spec, block, 0, spec.n_x, &mut out, &mut report);
    Ok((out, report))
}

fn check_dims(ps: &ParticleSet, spec: &PhaseSpaceGridSpec) -> Result<()> {
    if ps.dim() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: ps.dim(),
        });
    }
    if (ps.length() - spec.length).abs() > 1e-12 * spec.length {
        return Err(Error::config("length", "particle domain differs from the remap lattice"));
    }
    Ok(())
}

/// Charge accounting of one remap. Up to rounding,
/// `charge_after = charge_before - truncated_charge - dropped_charge + clamp_defect`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RemapReport {
    pub particles_before: usize,
    pub particles_after: usize,
    pub charge_before: f64,
    pub charge_after: f64,
    pub truncated_charge: f64,
    pub dropped_count: usize,
    pub dropped_charge: f64,
    pub clamped_cells: usize,
    /// Charge added by clamping leftover negative cells to zero.
    pub clamp_defect: f64,
    pub redistribution_iterations: usize,
    pub blocks: usize,
}

/// Replaces a particle set by lattice-centered particles representing the
/// same distribution function.
pub fn remap(ps: &ParticleSet, cfg: &RemapConfig, kernel: KernelId) -> Result<(ParticleSet, RemapReport)> {
    cfg.validate()?;
    let spec = &cfg.spec;
    check_dims(ps, spec)?;
    let n_x = spec.n_x;
    let slab = slab_len(spec);
    let halo = cfg.halo();

    let width = match cfg.chunk_slabs {
        Some(w) => Some(w),
        None if spec.cell_count() > cfg.max_chunk_cells => {
            Some((cfg.max_chunk_cells / slab).saturating_sub(2 * halo).max(1))
        }
        None => None,
    };
    let blocks: Vec<(Block, usize, usize)> = match width {
        Some(w) if w + 2 * halo < n_x => (0..n_x)
            .step_by(w)
            .map(|c0| {
                let inner = w.min(n_x - c0);
                let block = Block {
                    start: (c0 + n_x - halo) % n_x,
                    slabs: inner + 2 * halo,
                    whole: false,
                };
                (block, halo, halo + inner)
            })
            .collect(),
        _ => vec![(
            Block {
                start: 0,
                slabs: n_x,
                whole: true,
            },
            0,
            n_x,
        )],
    };

    let mut report = RemapReport {
        particles_before: ps.len(),
        charge_before: ps.total_charge(),
        truncated_charge: truncation_loss(ps, spec, kernel),
        blocks: blocks.len(),
        ..Default::default()
    };
    let mut out = ParticleSet::new(spec.dim, spec.length)?;
    let mut resample = ResampleReport::default();
    let vol = spec.cell_volume();
    for &(block, lo, hi) in &blocks {
        let mut values = deposit_block(ps, spec, kernel, block);
        if cfg.positivity {
            let mut shape = LatticeShape::phase_space(spec);
            shape.dims[0] = block.slabs;
            shape.periodic[0] = block.whole;
            let mut order: Vec<usize> = (0..block.slabs).collect();
            order.sort_by_key(|&l| (block.start + l) % n_x);
            let r = redistribute_ordered(&mut values, &shape, cfg.max_redistribution_iters, &order, lo..hi, slab);
            report.redistribution_iterations = report.redistribution_iterations.max(r.iterations);
            report.clamped_cells += r.clamped_cells;
            report.clamp_defect += r.clamp_defect * vol;
        }
        resample_block(&values, spec, block, lo, hi, &mut out, &mut resample);
    }
    report.dropped_count = resample.dropped_count;
    report.dropped_charge = resample.dropped_charge;
    report.particles_after = out.len();
    report.charge_after = out.total_charge();
    Ok((out, report))
}
