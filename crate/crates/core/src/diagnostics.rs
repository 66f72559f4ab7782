//! Post-processing: field amplitude series, damping-rate fits, Richardson
//! error estimates with periodic spline resampling, and phase-space images.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Mesh, ScalarField, VectorField};
use crate::kernels::KernelId;
use crate::particles::{periodic_taps, ParticleSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeNorm {
    /// Largest `|E_d|` over cells and components.
    #[default]
    Max,
    /// `sqrt(sum_i |E_i|^2 V_i)`.
    L2,
}

pub fn field_amplitude(e: &VectorField) -> f64 {
    field_amplitude_with(e, AmplitudeNorm::Max)
}

pub fn field_amplitude_with(e: &VectorField, norm: AmplitudeNorm) -> f64 {
    match norm {
        AmplitudeNorm::Max => e.max_abs(),
        AmplitudeNorm::L2 => {
            let vol = e.mesh().cell_volume();
            let sq: f64 = e.components().iter().flat_map(|c| c.values()).map(|v| v * v).sum();
            (sq * vol).sqrt()
        }
    }
}

/// Field amplitude against time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AmplitudeSeries {
    pub times: Vec<f64>,
    pub amplitude: Vec<f64>,
}

impl AmplitudeSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(times: Vec<f64>, amplitude: Vec<f64>) -> Result<Self> {
        let s = AmplitudeSeries { times, amplitude };
        s.validate()?;
        Ok(s)
    }

    pub fn push(&mut self, t: f64, a: f64) {
        self.times.push(t);
        self.amplitude.push(a);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.amplitude.len() {
            return Err(Error::DimensionMismatch {
                expected: self.times.len(),
                got: self.amplitude.len(),
            });
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse("amplitude series times must increase strictly".into()));
        }
        if self.amplitude.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Parse("amplitudes must be non-negative".into()));
        }
        Ok(())
    }

    /// Linear interpolation at `t` (clamped to the series ends).
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let n = self.times.len();
        if n == 0 {
            return None;
        }
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return Some(self.amplitude[0]);
        }
        if i == n {
            return Some(self.amplitude[n - 1]);
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        Some(self.amplitude[i - 1] * (1.0 - w) + self.amplitude[i] * w)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,amplitude")?;
        for (t, a) in self.times.iter().zip(&self.amplitude) {
            writeln!(w, "{t:e},{a:e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut s = AmplitudeSeries::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("time")) {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let parse = |c: Option<&str>| -> Result<f64> {
                c.ok_or_else(|| Error::Parse(format!("line {}: expected two columns", lineno + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let t = parse(cols.next())?;
            let a = parse(cols.next())?;
            s.push(t, a);
        }
        if s.is_empty() {
            return Err(Error::Parse("amplitude series is empty".into()));
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Peaks must be at least this far apart in time; of two closer ones
    /// the larger wins.
    pub min_separation: f64,
    /// Drop the first peak inside the window (initial transient).
    pub skip_first_peak: bool,
    pub min_peaks: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_separation: 1.0,
            skip_first_peak: false,
            min_peaks: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DampingFit {
    pub gamma: f64,
    pub omega: f64,
    /// Refined `(time, amplitude)` of the peaks used.
    pub peaks: Vec<(f64, f64)>,
}

/// Local maxima of the series, refined by a parabola through the log
/// amplitudes of the three samples around each maximum.
pub fn find_peaks(series: &AmplitudeSeries, min_separation: f64) -> Vec<(f64, f64)> {
    let (t, a) = (&series.times, &series.amplitude);
    let mut raw: Vec<usize> = Vec::new();
    for i in 1..a.len().saturating_sub(1) {
        if a[i] > a[i - 1] && a[i] >= a[i + 1] && a[i] > 0.0 {
            match raw.last() {
                Some(&j) if t[i] - t[j] < min_separation => {
                    if a[i] > a[j] {
                        *raw.last_mut().unwrap() = i;
                    }
                }
                _ => raw.push(i),
            }
        }
    }
    raw.into_iter()
        .map(|i| {
            let (ym, y0, yp) = (a[i - 1].ln(), a[i].ln(), a[i + 1].ln());
            let curv = ym - 2.0 * y0 + yp;
            if !(curv < 0.0) || !ym.is_finite() || !yp.is_finite() {
                return (t[i], a[i]);
            }
            let h = 0.5 * (t[i + 1] - t[i - 1]);
            let shift = 0.5 * (ym - yp) / curv;
            let peak = y0 - 0.125 * (ym - yp) * (ym - yp) / curv;
            (t[i] + shift * h, peak.exp())
        })
        .collect()
}

/// Fits `A e^{-gamma t} |cos(omega t + phase)|` through the peaks of the
/// series inside `window`: `gamma` is minus the least-squares slope of log
/// peak amplitude against time and `omega` is `pi` over the mean peak spacing.
pub fn fit_damping(series: &AmplitudeSeries, window: (f64, f64)) -> Result<DampingFit> {
    fit_damping_with(series, window, &FitOptions::default())
}

pub fn fit_damping_with(series: &AmplitudeSeries, window: (f64, f64), opts: &FitOptions) -> Result<DampingFit> {
    series.validate()?;
    let mut peaks: Vec<(f64, f64)> = find_peaks(series, opts.min_separation)
        .into_iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if opts.skip_first_peak && !peaks.is_empty() {
        peaks.remove(0);
    }
    let needed = opts.min_peaks.max(2);
    if peaks.len() < needed {
        return Err(Error::TooFewPeaks {
            found: peaks.len(),
            needed,
        });
    }
    let n = peaks.len() as f64;
    let tm = peaks.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = peaks.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, a) in &peaks {
        sxy += (t - tm) * (a.ln() - ym);
        sxx += (t - tm) * (t - tm);
    }
    let slope = sxy / sxx;
    let spacing = (peaks[peaks.len() - 1].0 - peaks[0].0) / (n - 1.0);
    Ok(DampingFit {
        gamma: -slope,
        omega: std::f64::consts::PI / spacing,
        peaks,
    })
}

/// Second derivatives of the periodic cubic spline through `y` with unit
/// spacing: solves the cyclic system `M_{i-1} + 4 M_i + M_{i+1} = 6 (y_{i-1} - 2 y_i + y_{i+1})`.
fn periodic_spline_moments(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let rhs: Vec<f64> = (0..n)
        .map(|i| 6.0 * (y[(i + n - 1) % n] - 2.0 * y[i] + y[(i + 1) % n]))
        .collect();
    // Sherman-Morrison on the cyclic tridiagonal matrix (1, 4, 1).
    let gamma = -4.0;
    let mut diag = vec![4.0; n];
    diag[0] -= gamma;
    diag[n - 1] -= 1.0 / gamma;
    let solve = |d: &[f64], b: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        c[0] = 1.0 / d[0];
        x[0] = b[0] / d[0];
        for i in 1..n {
            let m = d[i] - c[i - 1];
            c[i] = 1.0 / m;
            x[i] = (b[i] - x[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };
    let x = solve(&diag, &rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = 1.0;
    let z = solve(&diag, &u);
    let fact = (x[0] + x[n - 1] / gamma) / (1.0 + z[0] + z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

/// Periodic cubic-spline refinement of one line of samples by `ratio`,
/// from centers of `n` cells to centers of `n * ratio` cells.
fn refine_line(y: &[f64], ratio: usize) -> Vec<f64> {
    let n = y.len();
    let m = periodic_spline_moments(y);
    let mut out = Vec::with_capacity(n * ratio);
    for j in 0..n * ratio {
        // fine center in coarse-center index units
        let u = (j as f64 + 0.5) / ratio as f64 - 0.5;
        let i0 = u.floor();
        let t = u - i0;
        let i = (i0 as i64).rem_euclid(n as i64) as usize;
        let ip = (i + 1) % n;
        let s = 1.0 - t;
        out.push(s * y[i] + t * y[ip] + ((s * s * s - s) * m[i] + (t * t * t - t) * m[ip]) / 6.0);
    }
    out
}

fn resample_scalar(f: &ScalarField, target: &Mesh) -> Result<ScalarField> {
    let src = f.mesh();
    let (n, nf) = (src.n_cells(), target.n_cells());
    let ratio = nf / n;
    if src.dim() != target.dim()
        || nf % n != 0
        || !ratio.is_power_of_two()
        || (src.length() - target.length()).abs() > 1e-12 * src.length()
    {
        return Err(Error::NonNestedMeshes(format!(
            "{} cells (length {}) cannot be refined onto {} cells (length {})",
            n,
            src.length(),
            nf,
            target.length()
        )));
    }
    let values = match src.dim() {
        1 => refine_line(f.values(), ratio),
        _ => {
            // refine along y (contiguous), then along x
            let mut rows = vec![0.0; n * nf];
            for i in 0..n {
                let r = refine_line(&f.values()[i * n..(i + 1) * n], ratio);
                rows[i * nf..(i + 1) * nf].copy_from_slice(&r);
            }
            let mut out = vec![0.0; nf * nf];
            let mut col = vec![0.0; n];
            for j in 0..nf {
                for i in 0..n {
                    col[i] = rows[i * nf + j];
                }
                for (i, v) in refine_line(&col, ratio).into_iter().enumerate() {
                    out[i * nf + j] = v;
                }
            }
            out
        }
    };
    ScalarField::from_values(*target, values)
}

/// Periodic cubic-spline interpolation of each component from coarse cell
/// centers to the (nested, finer) target mesh.
pub fn resample_field(e: &VectorField, target: &Mesh) -> Result<VectorField> {
    let comps = e
        .components()
        .iter()
        .map(|c| resample_scalar(c, target))
        .collect::<Result<Vec<_>>>()?;
    VectorField::from_components(comps)
}

/// Richardson error `max |E_h - E_2h|` after resampling `E_2h` to the fine mesh.
pub fn richardson_error(e_h: &VectorField, e_2h: &VectorField) -> Result<f64> {
    let (fine, coarse) = (e_h.mesh(), e_2h.mesh());
    if fine.n_cells() != 2 * coarse.n_cells() {
        return Err(Error::NonNestedMeshes(format!(
            "expected the fine mesh to have twice the {} coarse cells, got {}",
            coarse.n_cells(),
            fine.n_cells()
        )));
    }
    let up = resample_field(e_2h, fine)?;
    let mut err = 0.0f64;
    for (a, b) in e_h.components().iter().zip(up.components()) {
        for (x, y) in a.values().iter().zip(b.values()) {
            err = err.max((x - y).abs());
        }
    }
    Ok(err)
}

/// Observed order `log2(e_2h / e_h)`.
pub fn convergence_order(e_2h: f64, e_h: f64) -> Result<f64> {
    if !(e_2h > 0.0 && e_h > 0.0 && e_2h.is_finite() && e_h.is_finite()) {
        return Err(Error::UndefinedOrder { coarse: e_2h, fine: e_h });
    }
    Ok((e_2h / e_h).log2())
}

/// Richardson errors and observed orders of a resolution ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// One descriptor per ladder level, coarsest first.
    pub levels: Vec<String>,
    pub times: Vec<f64>,
    /// `errors[t][p]`: error between levels `p` and `p + 1` at `times[t]`.
    pub errors: Vec<Vec<f64>>,
    /// `orders[t][p]`: order from error pairs `p` and `p + 1`.
    pub orders: Vec<Vec<Option<f64>>>,
}

impl ConvergenceReport {
    /// Builds the report from `fields[level][time]`.
    pub fn from_fields(levels: Vec<String>, times: Vec<f64>, fields: &[Vec<VectorField>]) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::InsufficientLadder {
                got: fields.len(),
                needed: 2,
            });
        }
        if fields.iter().any(|f| f.len() != times.len()) {
            return Err(Error::config("times", "every level needs one field per sample time"));
        }
        let mut errors = Vec::with_capacity(times.len());
        let mut orders = Vec::with_capacity(times.len());
        for ti in 0..times.len() {
            let e: Vec<f64> = (0..fields.len() - 1)
                .map(|p| richardson_error(&fields[p + 1][ti], &fields[p][ti]))
                .collect::<Result<_>>()?;
            let q = e.windows(2).map(|w| convergence_order(w[0], w[1]).ok()).collect();
            errors.push(e);
            orders.push(q);
        }
        Ok(ConvergenceReport {
            levels,
            times,
            errors,
            orders,
        })
    }

    /// Order of the finest pair of errors at time index `ti`.
    pub fn finest_order(&self, ti: usize) -> Option<f64> {
        self.orders.get(ti).and_then(|q| q.last().copied().flatten())
    }

    /// Error between the two finest levels at time index `ti`.
    pub fn finest_error(&self, ti: usize) -> Option<f64> {
        self.errors.get(ti).and_then(|e| e.last().copied())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, l) in self.levels.iter().enumerate() {
            writeln!(w, "# level {i}: {l}")?;
        }
        let pairs = self.errors.first().map_or(0, Vec::len);
        let mut header = vec!["time".to_string()];
        header.extend((0..pairs).map(|p| format!("e{p}")));
        header.extend((0..pairs.saturating_sub(1)).map(|p| format!("q{p}")));
        writeln!(w, "{}", header.join(","))?;
        for ((t, e), q) in self.times.iter().zip(&self.errors).zip(&self.orders) {
            let mut row = vec![format!("{t}")];
            row.extend(e.iter().map(|v| format!("{v:e}")));
            row.extend(q.iter().map(|v| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.4}"))));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Distribution function on a 2D `(x_d, v_d)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceImage {
    pub n_x: usize,
    pub n_v: usize,
    pub length: f64,
    pub v_max: f64,
    /// Row-major, `values[i * n_v + j]` at `(x_i, v_j)`.
    pub values: Vec<f64>,
}

impl PhaseSpaceImage {
    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.v_max / self.n_v as f64
    }

    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# n_x={} n_v={} dx={:e} dv={:e} length={:e} v_max={:e}",
            self.n_x,
            self.n_v,
            self.dx(),
            self.dv(),
            self.length,
            self.v_max
        )?;
        for row in self.values.chunks(self.n_v) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Deposits particles with `W6` onto an `n_x` by `n_v` grid in position
/// axis `axes.0` and velocity axis `axes.1`, integrating out the others.
/// Velocity contributions outside `[-v_max, v_max]` are dropped.
pub fn phase_space_image(
    ps: &ParticleSet,
    axes: (usize, usize),
    grid: (usize, usize),
    v_max: f64,
) -> Result<PhaseSpaceImage> {
    let dim = ps.dim();
    if axes.0 >= dim || axes.1 >= dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: axes.0.max(axes.1) + 1,
        });
    }
    let (n_x, n_v) = grid;
    if n_x == 0 || n_v == 0 || !(v_max > 0.0) {
        return Err(Error::config("grid", "image needs a non-empty grid and positive v_max"));
    }
    let mut img = PhaseSpaceImage {
        n_x,
        n_v,
        length: ps.length(),
        v_max,
        values: vec![0.0; n_x * n_v],
    };
    let (dx, dv) = (img.dx(), img.dv());
    let inv = 1.0 / (dx * dv);
    let k = KernelId::W6;
    for (p, &q) in ps.charges().iter().enumerate() {
        let (ix, wx) = periodic_taps(k, ps.position(p)[axes.0], dx, n_x);
        let (home, s) = crate::kernels::split_coordinate((ps.velocity(p)[axes.1] + v_max) / dv - 0.5);
        let wv = k.weights(s);
        let first = home + k.first_offset();
        for a in 0..k.width() {
            let row = ix[a] * n_v;
            for (m, w) in wv.iter().take(k.width()).enumerate() {
                let j = first + m as i64;
                if j >= 0 && (j as usize) < n_v {
                    img.values[row + j as usize] += q * inv * wx[a] * w;
                }
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn synthetic(gamma: f64, omega: f64, dt: f64, t_end: f64, scale: f64) -> AmplitudeSeries {
        let mut s = AmplitudeSeries::new();
        let n = (t_end / dt).round() as usize;
        for i in 0..=n {
            let t = i as f64 * dt;
            s.push(t, scale * (-gamma * t).exp() * (omega * t).cos().abs());
        }
        s
    }

    #[test]
    fn amplitude_norms() {
        let mesh = Mesh::new(1, 8, 8.0).unwrap();
        let mut e = VectorField::zeros(mesh);
        assert_eq!(field_amplitude(&e), 0.0);
        e.component_mut(0).values_mut()[3] = -0.7;
        assert_eq!(field_amplitude(&e), 0.7);
        assert!((field_amplitude_with(&e, AmplitudeNorm::L2) - 0.7).abs() < 1e-15);

        let k = 2.0 * PI / 8.0;
        let s = ScalarField::from_fn(mesh, |x| 0.01 * (k * x[0]).sin());
        let e = VectorField::from_components(vec![s]).unwrap();
        assert!((field_amplitude(&e) - 0.01 * (k * 1.5).sin()).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_synthetic_damping() {
        let s = synthetic(0.1533, 1.416, 1.0 / 32.0, 30.0, 1e-2);
        let fit = fit_damping(&s, (0.0, 20.0)).unwrap();
        assert!((fit.gamma - 0.1533).abs() < 0.01 * 0.1533, "gamma {}", fit.gamma);
        assert!((fit.omega - 1.416).abs() < 0.01 * 1.416, "omega {}", fit.omega);
    }

    #[test]
    fn fit_recovers_modulated_exponential() {
        // e^{-0.3 t} (1.5 + sin(2 pi t / 3)): peaks every 3 time units
        let mut s = AmplitudeSeries::new();
        for i in 0..=1600 {
            let t = i as f64 / 40.0;
            s.push(t, (-0.3 * t).exp() * (1.5 + (2.0 * PI * t / 3.0).sin()));
        }
        let fit = fit_damping(&s, (0.0, 40.0)).unwrap();
        assert!((fit.gamma - 0.3).abs() < 1e-3, "{}", fit.gamma);
        // peaks of |E| spaced pi / omega
        assert!((fit.omega - PI / 3.0).abs() < 1e-3, "{}", fit.omega);
    }

    #[test]
    fn constant_series_has_no_peaks() {
        let s = AmplitudeSeries::from_parts((0..100).map(|i| i as f64).collect(), vec![1.0; 100]).unwrap();
        assert!(matches!(fit_damping(&s, (0.0, 100.0)), Err(Error::TooFewPeaks { found: 0, .. })));
    }

    #[test]
    fn skip_first_peak() {
        let s = synthetic(0.2, 1.0, 0.01, 20.0, 1.0);
        let all = fit_damping(&s, (0.0, 20.0)).unwrap();
        let opts = FitOptions {
            skip_first_peak: true,
            ..Default::default()
        };
        let skipped = fit_damping_with(&s, (0.0, 20.0), &opts).unwrap();
        assert_eq!(skipped.peaks.len() + 1, all.peaks.len());
        assert_eq!(skipped.peaks[0], all.peaks[1]);
    }

    #[test]
    fn csv_round_trip_and_empty_error() {
        let s = synthetic(0.1, 1.0, 0.125, 4.0, 0.5);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = AmplitudeSeries::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert!(AmplitudeSeries::read_csv("time,amplitude\n".as_bytes()).is_err());
        assert!(AmplitudeSeries::read_csv("".as_bytes()).is_err());
    }

    #[test]
    fn spline_resampling() {
        let length = 2.0 * PI;
        let coarse = Mesh::new(1, 32, length).unwrap();
        let fine = coarse.refine();
        let c = ScalarField::from_fn(coarse, |_| 3.25);
        let e = VectorField::from_components(vec![c]).unwrap();
        let up = resample_field(&e, &fine).unwrap();
        assert!(up.component(0).values().iter().all(|v| (v - 3.25).abs() < 1e-14));

        // sin(x): error shrinks like dx^4
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let m = Mesh::new(1, n, length).unwrap();
                let f = ScalarField::from_fn(m, |x| x[0].sin());
                let up = resample_scalar(&f, &m.refine()).unwrap();
                let exact = ScalarField::from_fn(m.refine(), |x| x[0].sin());
                up.values()
                    .iter()
                    .zip(exact.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 3.8, "{errs:?}");
        }
        assert!(errs[1] < 1e-5);

        // sampling the fine field back at coarse centers is close to the input
        let m = Mesh::new(1, 32, length).unwrap();
        let f = ScalarField::from_fn(m, |x| (2.0 * x[0]).cos());
        let up = resample_scalar(&f, &m.refine()).unwrap();
        for i in 0..32 {
            let back = 0.5 * (up.values()[2 * i] + up.values()[2 * i + 1]);
            assert!((back - f.values()[i]).abs() < 2e-2);
        }
    }

    #[test]
    fn spline_resampling_2d() {
        let length = 2.0 * PI;
        let m = Mesh::new(2, 16, length).unwrap();
        let f = ScalarField::from_fn(m, |x| x[0].sin() * (2.0 * x[1]).cos());
        let up = resample_scalar(&f, &m.refine()).unwrap();
        let exact = ScalarField::from_fn(m.refine(), |x| x[0].sin() * (2.0 * x[1]).cos());
        let err = up
            .values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-3, "{err}");
    }

    #[test]
    fn resampling_rejects_non_nested_meshes() {
        let a = Mesh::new(1, 16, 1.0).unwrap();
        let b = Mesh::new(1, 16, 2.0).unwrap();
        let e = VectorField::zeros(a);
        assert!(matches!(resample_field(&e, &b), Err(Error::NonNestedMeshes(_))));
        let c = Mesh::new(1, 8, 1.0).unwrap();
        assert!(resample_field(&e, &c).is_err());
    }

    #[test]
    fn richardson_error_examples() {
        let coarse = Mesh::new(1, 16, 1.0).unwrap();
        let fine = coarse.refine();
        let k = 2.0 * PI;
        let e2h = VectorField::from_components(vec![ScalarField::from_fn(coarse, |x| (k * x[0]).sin())]).unwrap();
        let eh_same = resample_field(&e2h, &fine).unwrap();
        assert_eq!(richardson_error(&eh_same, &e2h).unwrap(), 0.0);

        let mut shifted = eh_same.clone();
        shifted.component_mut(0).values_mut().iter_mut().for_each(|v| *v += 0.003);
        assert!((richardson_error(&shifted, &e2h).unwrap() - 0.003).abs() < 1e-15);

        assert!(richardson_error(&e2h, &e2h).is_err());
    }

    #[test]
    fn convergence_order_examples() {
        assert_eq!(convergence_order(0.4, 0.1).unwrap(), 2.0);
        assert_eq!(convergence_order(1.6, 0.1).unwrap(), 4.0);
        assert_eq!(convergence_order(0.3, 0.3).unwrap(), 0.0);
        assert!(convergence_order(0.0, 0.1).is_err());
        assert!(convergence_order(0.1, -1.0).is_err());
    }

    #[test]
    fn report_from_geometric_ladder() {
        // fields whose pairwise differences shrink by 2^3 per level
        let base = Mesh::new(1, 8, 1.0).unwrap();
        let mut fields = Vec::new();
        let mut m = base;
        for level in 0..4 {
            let err = 0.5f64.powi(3 * level);
            let f = ScalarField::from_fn(m, |_| err);
            fields.push(vec![VectorField::from_components(vec![f]).unwrap()]);
            m = m.refine();
        }
        let labels = (0..4).map(|l| format!("level {l}")).collect();
        let r = ConvergenceReport::from_fields(labels, vec![1.0], &fields).unwrap();
        assert_eq!(r.errors[0].len(), 3);
        for q in &r.orders[0] {
            assert!((q.unwrap() - 3.0).abs() < 1e-12);
        }
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("time,e0,e1,e2,q0,q1"));
    }

    #[test]
    fn phase_space_image_examples() {
        let mut ps = ParticleSet::new(1, 4.0).unwrap();
        // grid node (x=0.125, v=-0.875) on a 16 x 8 grid with v_max 1
        ps.push(0.5, &[0.125], &[-0.875]).unwrap();
        let img = phase_space_image(&ps, (0, 0), (16, 8), 1.0).unwrap();
        let nonzero: Vec<usize> = (0..img.values.len()).filter(|&i| img.values[i] != 0.0).collect();
        assert_eq!(nonzero, vec![0]);
        assert!((img.values[0] - 0.5 / (img.dx() * img.dv())).abs() < 1e-12);

        let mut ps = ParticleSet::new(2, 4.0).unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.077;
            ps.push(0.01 + t * 0.001, &[t, 3.0 * t], &[0.3 * t.sin(), 0.2]).unwrap();
        }
        let img = phase_space_image(&ps, (1, 0), (32, 32), 2.0).unwrap();
        let total: f64 = img.values.iter().sum::<f64>() * img.dx() * img.dv();
        assert!((total - ps.total_charge()).abs() < 1e-12);
    }
}
