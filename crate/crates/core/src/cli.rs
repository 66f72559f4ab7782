//! Command-line front end: configuration resolution, single runs,
//! resolution ladders and damping fits.
//!
//! Settings are merged in the order preset, config file, flags. The config
//! file is flat TOML whose keys mirror the long flags with `_` for `-`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{fit_damping_with, phase_space_image, AmplitudeNorm, AmplitudeSeries, ConvergenceReport, DampingFit, FitOptions};
use crate::error::{Error, Result};
use crate::field::{Mesh, MultigridConfig, Order, VectorField};
use crate::integrator::{run, RunOptions, RunOutput, SchemeConfig};
use crate::particles::{initialize_particles, ParticleSet, PhaseSpaceGridSpec};
use crate::problems::{default_fit_window, ladder_base, reference_config, scaled_config, Preset, ProblemId, ProblemSpec};
use crate::remap::RemapConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PresetKind {
    /// The reference run parameters.
    #[default]
    Reference,
    /// Coarsest level of the reference resolution study.
    Ladder,
    /// Reference parameters with reduced velocity resolution where needed.
    Scaled,
}

impl PresetKind {
    pub fn preset(self, id: ProblemId) -> Preset {
        match self {
            PresetKind::Reference => reference_config(id),
            PresetKind::Ladder => ladder_base(id),
            PresetKind::Scaled => scaled_config(id),
        }
    }
}

/// Partial settings from a config file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Benchmark: landau1d, twostream1d, landau2d or twostream2d.
    #[arg(long)]
    pub problem: Option<ProblemId>,
    /// Scheme order, 2 or 4.
    #[arg(long)]
    pub order: Option<u32>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetKind>,
    /// Mesh cells per axis.
    #[arg(long)]
    pub n_cells: Option<usize>,
    /// Phase-space lattice cells per spatial axis.
    #[arg(long = "nx")]
    #[serde(alias = "nx")]
    pub n_x: Option<usize>,
    /// Phase-space lattice cells per velocity axis.
    #[arg(long = "nv")]
    #[serde(alias = "nv")]
    pub n_v: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub v_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    /// Steps between remaps; 0 disables remapping.
    #[arg(long)]
    pub remap_interval: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(skip)]
    pub positivity: Option<bool>,
    #[arg(long = "out")]
    #[serde(alias = "out")]
    pub output_dir: Option<PathBuf>,
    /// Comma-separated times at which particle snapshots and phase-space
    /// images are written.
    #[arg(long, value_delimiter = ',')]
    pub snapshot_times: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NormArg {
    Max,
    L2,
}

impl From<NormArg> for AmplitudeNorm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Max => AmplitudeNorm::Max,
            NormArg::L2 => AmplitudeNorm::L2,
        }
    }
}

impl From<AmplitudeNorm> for NormArg {
    fn from(n: AmplitudeNorm) -> Self {
        match n {
            AmplitudeNorm::Max => NormArg::Max,
            AmplitudeNorm::L2 => NormArg::L2,
        }
    }
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Overrides {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Values set in `other` replace those in `self`.
    pub fn merge(&mut self, other: &Overrides) {
        merge_fields!(
            self, other, problem, order, preset, n_cells, n_x, n_v, dt, t_final, v_max, alpha, k, remap_interval,
            threshold, positivity, output_dir, snapshot_times, norm
        );
    }
}

/// Fully resolved settings of one run. This is what `config.toml` echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub order: u32,
    pub preset: PresetKind,
    pub n_cells: usize,
    pub n_x: usize,
    pub n_v: usize,
    pub dt: f64,
    pub t_final: f64,
    pub v_max: f64,
    pub alpha: f64,
    pub k: f64,
    pub remap_interval: usize,
    pub threshold: f64,
    pub positivity: bool,
    pub output_dir: PathBuf,
    pub snapshot_times: Vec<f64>,
    pub norm: NormArg,
}

impl RunConfig {
    /// Preset values for `id`, before any overrides.
    pub fn from_preset(id: ProblemId, kind: PresetKind) -> Self {
        let p = kind.preset(id);
        RunConfig {
            problem: id,
            order: 4,
            preset: kind,
            n_cells: p.n_cells,
            n_x: p.n_x,
            n_v: p.n_v,
            dt: p.dt,
            t_final: p.t_final,
            v_max: p.problem.v_max,
            alpha: p.problem.alpha,
            k: p.problem.k,
            remap_interval: p.remap_interval,
            threshold: p.threshold,
            positivity: true,
            output_dir: PathBuf::from("output"),
            snapshot_times: Vec::new(),
            norm: NormArg::Max,
        }
    }

    /// Applies `o` on top of the preset it names and validates the result.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let id = o.problem.ok_or_else(|| Error::config("problem", "no problem given"))?;
        let mut c = RunConfig::from_preset(id, o.preset.unwrap_or_default());
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = o.$f.clone() { c.$f = v; } )* };
        }
        take!(order, n_cells, n_x, n_v, dt, t_final, v_max, alpha, k, remap_interval, threshold, positivity, output_dir, norm);
        match &o.snapshot_times {
            Some(t) => c.snapshot_times = t.clone(),
            None => c.snapshot_times = c.default_snapshot_times(),
        }
        c.validate()?;
        Ok(c)
    }

    /// Four evenly spaced times for the two-stream problems, none otherwise.
    /// Each is rounded to the nearest step.
    pub fn default_snapshot_times(&self) -> Vec<f64> {
        match self.problem {
            ProblemId::TwoStream1D | ProblemId::TwoStream2D if self.dt > 0.0 => {
                (0..4).map(|i| (self.t_final * i as f64 / 3.0 / self.dt).round() * self.dt).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn order(&self) -> Result<Order> {
        Order::try_from(self.order).map_err(|_| Error::config("order", format!("{} is not a supported order (use 2 or 4)", self.order)))
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        ProblemSpec {
            id: self.problem,
            alpha: self.alpha,
            k: self.k,
            v_max: self.v_max,
        }
    }

    pub fn mesh(&self) -> Result<Mesh> {
        Mesh::new(self.problem.dim(), self.n_cells, self.problem_spec().length())
            .map_err(|e| Error::config("n_cells", e.to_string()))
    }

    pub fn grid_spec(&self) -> PhaseSpaceGridSpec {
        PhaseSpaceGridSpec {
            dim: self.problem.dim(),
            length: self.problem_spec().length(),
            n_x: self.n_x,
            n_v: self.n_v,
            v_max: self.v_max,
            threshold: self.threshold,
        }
    }

    pub fn scheme(&self) -> Result<SchemeConfig> {
        SchemeConfig::new(self.order()?, self.dt, self.t_final)
    }

    pub fn remap_config(&self) -> Option<RemapConfig> {
        (self.remap_interval > 0).then(|| {
            let mut r = RemapConfig::new(self.grid_spec(), self.remap_interval);
            r.positivity = self.positivity;
            r
        })
    }

    pub fn validate(&self) -> Result<()> {
        let scheme = self.scheme()?;
        self.problem_spec().validate()?;
        self.mesh()?;
        self.grid_spec().validate()?;
        for &t in &self.snapshot_times {
            if scheme.step_of(t, "snapshot_times")? > scheme.n_steps()? {
                return Err(Error::config("snapshot_times", format!("{t} is past t_final")));
            }
        }
        Ok(())
    }

    pub fn initial_particles(&self) -> Result<ParticleSet> {
        let spec = self.problem_spec();
        initialize_particles(|x, v| spec.eval_initial_f(x, v), &self.grid_spec())
    }

    /// Runs the simulation, keeping the field at `field_times` and particle
    /// sets at the configured snapshot times.
    pub fn simulate(&self, field_times: &[f64], progress: Option<&mut dyn Write>) -> Result<RunOutput> {
        self.validate()?;
        let opts = RunOptions {
            multigrid: MultigridConfig::default(),
            remap: self.remap_config(),
            field_times: field_times.to_vec(),
            snapshot_times: self.snapshot_times.clone(),
            norm: self.norm.into(),
        };
        run(self.initial_particles()?, self.mesh()?, &self.scheme()?, &opts, progress)
    }

    /// Level `level` of a ladder built on this config: every resolution
    /// parameter doubled and the step halved `level` times.
    pub fn refined(&self, level: usize) -> RunConfig {
        let s = 1usize << level;
        RunConfig {
            n_cells: self.n_cells * s,
            n_x: self.n_x * s,
            n_v: self.n_v * s,
            dt: self.dt / s as f64,
            ..self.clone()
        }
    }

    pub fn describe_resolution(&self) -> String {
        format!("n_cells={} n_x={} n_v={} dt={}", self.n_cells, self.n_x, self.n_v, self.dt)
    }
}

fn time_tag(t: f64) -> String {
    format!("{t:.4}").replace('.', "p")
}

/// Executes a run and writes `config.toml`, `progress.log`, `amplitude.csv`,
/// and per snapshot time a particle snapshot and a phase-space image.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    write_config_echo(cfg, &dir.join("config.toml"))?;
    let mut log = BufWriter::new(File::create(dir.join("progress.log"))?);
    let out = cfg.simulate(&[], Some(&mut log))?;
    log.flush()?;
    out.amplitude.write_csv(BufWriter::new(File::create(dir.join("amplitude.csv"))?))?;
    for (t, ps) in &out.snapshots {
        let tag = time_tag(*t);
        ps.write_snapshot(BufWriter::new(File::create(dir.join(format!("snapshot_t{tag}.txt")))?))?;
        let img = phase_space_image(ps, (0, 0), (cfg.n_x, cfg.n_v), cfg.v_max)?;
        img.write_dump(BufWriter::new(File::create(dir.join(format!("phase_space_t{tag}.dat")))?))?;
    }
    Ok(out)
}

pub fn write_config_echo(cfg: &RunConfig, path: &Path) -> Result<()> {
    let text = toml::to_string(cfg).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Runs `levels` refinements of `base` to the last sample time and builds
/// the Richardson report at `times`.
pub fn run_ladder(base: &RunConfig, levels: usize, times: &[f64], logs: Option<&Path>) -> Result<ConvergenceReport> {
    if levels < 3 {
        return Err(Error::InsufficientLadder { got: levels, needed: 3 });
    }
    if times.is_empty() {
        return Err(Error::config("times", "at least one sample time is needed"));
    }
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    let mut names = Vec::with_capacity(levels);
    let mut fields: Vec<Vec<VectorField>> = Vec::with_capacity(levels);
    for level in 0..levels {
        let mut cfg = base.refined(level);
        cfg.t_final = t_end;
        cfg.snapshot_times.clear();
        let out = match logs {
            Some(dir) => {
                let mut log = BufWriter::new(File::create(dir.join(format!("level{level}.log")))?);
                let out = cfg.simulate(times, Some(&mut log))?;
                log.flush()?;
                out
            }
            None => cfg.simulate(times, None)?,
        };
        names.push(cfg.describe_resolution());
        fields.push(out.fields.into_iter().map(|(_, e)| e).collect());
    }
    ConvergenceReport::from_fields(names, times.to_vec(), &fields)
}

pub fn cmd_converge(base: &RunConfig, levels: usize, times: &[f64]) -> Result<ConvergenceReport> {
    let dir = &base.output_dir;
    fs::create_dir_all(dir)?;
    write_config_echo(base, &dir.join("config.toml"))?;
    let report = run_ladder(base, levels, times, Some(dir))?;
    report.write_csv(BufWriter::new(File::create(dir.join("convergence.csv"))?))?;
    Ok(report)
}

pub fn cmd_fit(path: &Path, window: (f64, f64), opts: &FitOptions) -> Result<DampingFit> {
    let series = AmplitudeSeries::read_csv(BufReader::new(File::open(path)?))?;
    fit_damping_with(&series, window, opts)
}

#[derive(Debug, Parser)]
#[command(name = "pic", version, about = "Particle-in-cell Vlasov-Poisson solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation.
    Run(RunArgs),
    /// Run a resolution ladder and report Richardson errors and orders.
    Converge(ConvergeArgs),
    /// Fit damping rate and frequency to an amplitude CSV.
    Fit(FitArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat TOML file with any of the flag settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Skip the redistribution of negative weights at remap.
    #[arg(long)]
    pub no_positivity: bool,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut o = match &self.config {
            Some(path) => Overrides::from_file(path)?,
            None => Overrides::default(),
        };
        let mut flags = self.overrides.clone();
        if self.no_positivity {
            flags.positivity = Some(false);
        }
        o.merge(&flags);
        RunConfig::resolve(&o)
    }
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Comma-separated sample times.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
    pub times: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Amplitude CSV written by `run`.
    pub input: PathBuf,
    /// Problem whose default window is used when none is given.
    #[arg(long)]
    pub problem: Option<ProblemId>,
    #[arg(long, allow_hyphen_values = true)]
    pub t_start: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Keep the first peak in the window (dropped by default as transient).
    #[arg(long)]
    pub keep_first_peak: bool,
    #[arg(long, default_value_t = 1.0)]
    pub min_separation: f64,
}

/// Executes a parsed command line, writing the human-readable summary to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let res = cmd_run(&cfg)?;
            writeln!(
                out,
                "{} order {}: {} steps, {} remaps, final amplitude {:.6e}; output in {}",
                cfg.problem,
                cfg.order,
                res.state.step_index,
                res.remaps.len(),
                res.amplitude.amplitude.last().copied().unwrap_or(0.0),
                cfg.output_dir.display()
            )?;
        }
        Command::Converge(args) => {
            let mut o = match &args.run.config {
                Some(path) => Overrides::from_file(path)?,
                None => Overrides::default(),
            };
            if o.preset.is_none() {
                o.preset = Some(PresetKind::Ladder);
            }
            let mut flags = args.run.overrides.clone();
            if args.run.no_positivity {
                flags.positivity = Some(false);
            }
            o.merge(&flags);
            let base = RunConfig::resolve(&o)?;
            let report = cmd_converge(&base, args.levels, &args.times)?;
            report.write_csv(&mut *out)?;
        }
        Command::Fit(args) => {
            let default = default_fit_window(args.problem.unwrap_or(ProblemId::Landau1D));
            let window = (args.t_start.unwrap_or(default.0), args.t_end.unwrap_or(default.1));
            let opts = FitOptions {
                min_separation: args.min_separation,
                skip_first_peak: !args.keep_first_peak,
                ..FitOptions::default()
            };
            let fit = cmd_fit(&args.input, window, &opts)?;
            writeln!(out, "gamma={:.6} omega={:.6} peaks={}", fit.gamma, fit.omega, fit.peaks.len())?;
        }
    }
    Ok(())
}
