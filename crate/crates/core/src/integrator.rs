//! Time integration of the particle system.
//!
//! The 2nd-order scheme uses the two-stage RK2 push and the 4th-order scheme
//! the three-stage fourth-order Runge-Kutta-Nystrom push, which exploits the
//! velocity-independent force. Each stage evaluates accelerations through a
//! [`ForceModel`]; for the PIC pipeline that is deposit, Poisson solve,
//! gradient and interpolation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{field_amplitude, field_amplitude_with, AmplitudeNorm, AmplitudeSeries};
use crate::error::{Error, Result};
use crate::field::{gradient_to_efield, Mesh, Multigrid, MultigridConfig, Order, SolveStats, VectorField};
use crate::kernels::KernelId;
use crate::particles::{charge_density_rhs, interpolate_accelerations, wrap_coordinate, Depositor, ParticleSet};
use crate::remap::{remap, RemapConfig, RemapReport};

/// Order-locked scheme selection plus the time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub order: Order,
    pub dt: f64,
    pub t_final: f64,
}

impl SchemeConfig {
    pub fn new(order: Order, dt: f64, t_final: f64) -> Result<Self> {
        let s = SchemeConfig { order, dt, t_final };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", "must be non-negative"));
        }
        self.n_steps().map(|_| ())
    }

    pub fn transfer_kernel(&self) -> KernelId {
        self.order.transfer_kernel()
    }

    pub fn remap_kernel(&self) -> KernelId {
        self.order.remap_kernel()
    }

    pub fn stages(&self) -> usize {
        match self.order {
            Order::Second => 2,
            Order::Fourth => 3,
        }
    }

    /// Step index reached at time `t`, which must be a multiple of `dt`.
    pub fn step_of(&self, t: f64, field: &str) -> Result<usize> {
        let s = t / self.dt;
        let r = s.round();
        if !(r >= 0.0) || (s - r).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::config(field, format!("time {t} is not a multiple of dt = {}", self.dt)));
        }
        Ok(r as usize)
    }

    pub fn n_steps(&self) -> Result<usize> {
        self.step_of(self.t_final, "t_final")
    }
}

/// Accelerations of particles with charges `q` at (trial) positions `x`.
pub trait ForceModel {
    fn accelerations(&mut self, q: &[f64], x: &[f64], out: &mut [f64]) -> Result<()>;
}

/// A field solve captured during a step.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub field: VectorField,
    pub stats: SolveStats,
}

/// The full PIC force: deposit, neutralize, solve, differentiate, gather.
pub struct PicForce {
    mesh: Mesh,
    order: Order,
    multigrid: Multigrid,
    depositor: Depositor,
    evaluations: usize,
    last_stats: SolveStats,
    record_next: bool,
    recorded: Option<FieldSample>,
}

impl PicForce {
    pub fn new(mesh: Mesh, order: Order, cfg: MultigridConfig) -> Result<Self> {
        Ok(PicForce {
            mesh,
            order,
            multigrid: Multigrid::new(mesh, order, cfg)?,
            depositor: Depositor::default(),
            evaluations: 0,
            last_stats: SolveStats::default(),
            record_next: false,
            recorded: None,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Number of field pipelines run so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn last_stats(&self) -> SolveStats {
        self.last_stats
    }

    /// Electric field of charges `q` at positions `x`.
    pub fn field(&mut self, q: &[f64], x: &[f64]) -> Result<VectorField> {
        let deposited = self.depositor.deposit(&self.mesh, self.order.transfer_kernel(), q, x)?;
        let rho = charge_density_rhs(&deposited);
        let (phi, stats) = self.multigrid.solve(&rho)?;
        self.evaluations += 1;
        self.last_stats = stats;
        Ok(gradient_to_efield(&phi, self.order))
    }

    /// Keeps a copy of the field computed by the next evaluation.
    pub fn record_next(&mut self) {
        self.record_next = true;
    }

    pub fn take_recorded(&mut self) -> Option<FieldSample> {
        self.recorded.take()
    }
}

impl ForceModel for PicForce {
    fn accelerations(&mut self, q: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        let e = self.field(q, x)?;
        interpolate_accelerations(&e, self.order.transfer_kernel(), x, out)?;
        if self.record_next {
            self.record_next = false;
            self.recorded = Some(FieldSample {
                field: e,
                stats: self.last_stats,
            });
        }
        Ok(())
    }
}

/// Accelerations `a = -E` at trial positions, using the particles' charges.
pub fn accel_at<F: ForceModel + ?Sized>(force: &mut F, ps: &ParticleSet, positions: &[f64]) -> Result<Vec<f64>> {
    if positions.len() != ps.positions().len() {
        return Err(Error::DimensionMismatch {
            expected: ps.positions().len(),
            got: positions.len(),
        });
    }
    let mut out = vec![0.0; positions.len()];
    force.accelerations(ps.charges(), positions, &mut out)?;
    Ok(out)
}

/// Scratch buffers reused across steps.
#[derive(Debug, Default, Clone)]
pub struct StepWorkspace {
    trial: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    a3: Vec<f64>,
}

impl StepWorkspace {
    fn resize(&mut self, n: usize, stages: usize) {
        for (s, buf) in [&mut self.trial, &mut self.a1, &mut self.a2, &mut self.a3].into_iter().enumerate() {
            if s <= stages {
                buf.resize(n, 0.0);
            }
        }
    }

    /// Frees the buffers (they are reallocated on the next step).
    pub fn release(&mut self) {
        *self = StepWorkspace::default();
    }
}

/// RK2: `a1 = a(x)`, `a2 = a(x + v dt)`,
/// `x += v dt + a1 dt^2 / 2`, `v += (a1 + a2) dt / 2`.
pub fn step_rk2<F: ForceModel + ?Sized>(force: &mut F, ps: &mut ParticleSet, dt: f64, ws: &mut StepWorkspace) -> Result<()> {
    let n = ps.positions().len();
    let length = ps.length();
    ws.resize(n, 2);
    force.accelerations(ps.charges(), ps.positions(), &mut ws.a1)?;
    for ((t, x), v) in ws.trial.iter_mut().zip(ps.positions()).zip(ps.velocities()) {
        *t = wrap_coordinate(x + v * dt, length);
    }
    force.accelerations(ps.charges(), &ws.trial, &mut ws.a2)?;
    let (x, v) = ps.phase_mut();
    for i in 0..n {
        x[i] = wrap_coordinate(x[i] + v[i] * dt + 0.5 * ws.a1[i] * dt * dt, length);
        v[i] += 0.5 * (ws.a1[i] + ws.a2[i]) * dt;
    }
    Ok(())
}

/// Three-stage fourth-order Runge-Kutta-Nystrom step:
/// `a1 = a(x)`, `a2 = a(x + v dt/2 + a1 dt^2/8)`, `a3 = a(x + v dt + a2 dt^2/2)`,
/// `x += v dt + (a1 + 2 a2) dt^2 / 6`, `v += (a1 + 4 a2 + a3) dt / 6`.
pub fn step_rk4<F: ForceModel + ?Sized>(force: &mut F, ps: &mut ParticleSet, dt: f64, ws: &mut StepWorkspace) -> Result<()> {
    let n = ps.positions().len();
    let length = ps.length();
    let dt2 = dt * dt;
    ws.resize(n, 3);
    force.accelerations(ps.charges(), ps.positions(), &mut ws.a1)?;
    for i in 0..n {
        let (x, v) = (ps.positions()[i], ps.velocities()[i]);
        ws.trial[i] = wrap_coordinate(x + 0.5 * v * dt + 0.125 * ws.a1[i] * dt2, length);
    }
    force.accelerations(ps.charges(), &ws.trial, &mut ws.a2)?;
    for i in 0..n {
        let (x, v) = (ps.positions()[i], ps.velocities()[i]);
        ws.trial[i] = wrap_coordinate(x + v * dt + 0.5 * ws.a2[i] * dt2, length);
    }
    force.accelerations(ps.charges(), &ws.trial, &mut ws.a3)?;
    let (x, v) = ps.phase_mut();
    for i in 0..n {
        let (a1, a2, a3) = (ws.a1[i], ws.a2[i], ws.a3[i]);
        x[i] = wrap_coordinate(x[i] + v[i] * dt + (a1 + 2.0 * a2) * dt2 / 6.0, length);
        v[i] += (a1 + 4.0 * a2 + a3) * dt / 6.0;
    }
    Ok(())
}

/// One step with the push matching `order`.
pub fn step<F: ForceModel + ?Sized>(order: Order, force: &mut F, ps: &mut ParticleSet, dt: f64, ws: &mut StepWorkspace) -> Result<()> {
    match order {
        Order::Second => step_rk2(force, ps, dt, ws),
        Order::Fourth => step_rk4(force, ps, dt, ws),
    }
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    pub particles: ParticleSet,
    pub time: f64,
    pub step_index: usize,
    pub mesh: Mesh,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub multigrid: MultigridConfig,
    /// Remap settings; `None` or an interval of 0 disables remapping.
    pub remap: Option<RemapConfig>,
    /// Times at which the full electric field is kept.
    pub field_times: Vec<f64>,
    /// Times at which the particle set is kept.
    pub snapshot_times: Vec<f64>,
    pub norm: AmplitudeNorm,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Field amplitude at every step `t_n = n dt`, `n = 0..=n_steps`.
    pub amplitude: AmplitudeSeries,
    pub fields: Vec<(f64, VectorField)>,
    pub snapshots: Vec<(f64, ParticleSet)>,
    /// Remap reports with the step index after which each remap ran.
    pub remaps: Vec<(usize, RemapReport)>,
    /// Field pipelines evaluated, including the final diagnostic one.
    pub evaluations: usize,
    pub state: SimulationState,
}

fn sample_steps(scheme: &SchemeConfig, times: &[f64], field: &str, last: usize) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            let s = scheme.step_of(t, field)?;
            if s > last {
                return Err(Error::config(field, format!("time {t} is past t_final = {}", scheme.t_final)));
            }
            Ok(s)
        })
        .collect()
}

/// Advances `initial` to `t_final`, remapping every `remap.interval` steps
/// (after the step) and recording the field amplitude at every step.
///
/// One progress line per step is written to `progress` when given.
pub fn run(
    initial: ParticleSet,
    mesh: Mesh,
    scheme: &SchemeConfig,
    opts: &RunOptions,
    mut progress: Option<&mut dyn Write>,
) -> Result<RunOutput> {
    scheme.validate()?;
    if initial.dim() != mesh.dim() {
        return Err(Error::DimensionMismatch {
            expected: mesh.dim(),
            got: initial.dim(),
        });
    }
    let remap_cfg = opts.remap.filter(|r| r.interval > 0);
    if let Some(r) = &remap_cfg {
        r.validate()?;
    }
    let steps = scheme.n_steps()?;
    let field_steps = sample_steps(scheme, &opts.field_times, "field_times", steps)?;
    let snapshot_steps = sample_steps(scheme, &opts.snapshot_times, "snapshot_times", steps)?;

    let mut pic = PicForce::new(mesh, scheme.order, opts.multigrid)?;
    let mut ws = StepWorkspace::default();
    let mut ps = initial;
    let mut out = RunOutput {
        amplitude: AmplitudeSeries::new(),
        fields: Vec::new(),
        snapshots: Vec::new(),
        remaps: Vec::new(),
        evaluations: 0,
        state: SimulationState {
            particles: ParticleSet::new(mesh.dim(), mesh.length())?,
            time: 0.0,
            step_index: 0,
            mesh,
        },
    };

    for n in 0..=steps {
        let t = n as f64 * scheme.dt;
        for (i, _) in snapshot_steps.iter().enumerate().filter(|(_, &s)| s == n) {
            out.snapshots.push((opts.snapshot_times[i], ps.clone()));
        }
        let sample = if n < steps {
            pic.record_next();
            step(scheme.order, &mut pic, &mut ps, scheme.dt, &mut ws)?;
            pic.take_recorded().expect("the first stage records its field")
        } else {
            let field = pic.field(ps.charges(), ps.positions())?;
            FieldSample {
                field,
                stats: pic.last_stats(),
            }
        };
        out.amplitude.push(t, field_amplitude_with(&sample.field, opts.norm));
        if let Some(w) = progress.as_deref_mut() {
            writeln!(
                w,
                "step={n} time={t:.6} max_e={:.6e} particles={} residual={:.3e} cycles={}",
                field_amplitude(&sample.field),
                ps.len(),
                sample.stats.residual,
                sample.stats.cycles
            )?;
        }
        for (i, _) in field_steps.iter().enumerate().filter(|(_, &s)| s == n) {
            out.fields.push((opts.field_times[i], sample.field.clone()));
        }
        if let Some(r) = &remap_cfg {
            if n < steps && (n + 1) % r.interval == 0 {
                ws.release();
                let (next, report) = remap(&ps, r, scheme.remap_kernel())?;
                ps = next;
                if let Some(w) = progress.as_deref_mut() {
                    writeln!(
                        w,
                        "remap after_step={n} particles={} charge_change={:.3e} dropped={} truncated={:.3e} clamped={:.3e} iterations={}",
                        report.particles_after,
                        report.charge_after - report.charge_before,
                        report.dropped_count,
                        report.truncated_charge,
                        report.clamp_defect,
                        report.redistribution_iterations
                    )?;
                }
                out.remaps.push((n, report));
            }
        }
    }
    out.evaluations = pic.evaluations();
    out.state = SimulationState {
        particles: ps,
        time: steps as f64 * scheme.dt,
        step_index: steps,
        mesh,
    };
    Ok(out)
}
