//! The `emcoh` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::classifier::{classify, coherence_bracket, PowerEntry, PowerSeries, RegimeReport};
use crate::diffusion::{contrast_reduction, g2_diffused_curve, QuadratureSpec};
use crate::dynamics::{emission_rate, evolve_pulse_from, g2_resonant, lambda_pair, PulseEnvelope, PulseShape};
use crate::error::{Error, Result};
use crate::fitting::{
    confidence_bands, estimate_g2_guess, fit_g2, fit_with, histogram_line_fit, FitProblem, G2Fixed, G2Guess,
    LineShape, ModelKind,
};
use crate::io::{self, Config};
use crate::models::{diffusion_rate, gap_closing_range, GapClosing};
use crate::montecarlo::{correlate, simulate_stream_with, DiffusionProcess, StreamOptions};
use crate::types::{angular_to_hz, hz_to_angular, BandPoint, DetuningDistribution, EmitterParams, Estimate, FitResult, PhysicalConstants};

#[derive(Debug, Parser)]
#[command(name = "emcoh", version, about = "Coherent driving of single quantum emitters: simulate, correlate, fit, classify")]
pub struct Cli {
    /// Flat TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic g2 curve, resonant or averaged over spectral diffusion.
    SimulateG2(SimulateG2),
    /// Excited-state population under a drive pulse.
    SimulatePulse(SimulatePulse),
    /// Monte Carlo photon stream written as time tags.
    SimulateStream(SimulateStream),
    /// Coincidence histogram of a time-tag file.
    Correlate(CorrelateArgs),
    /// Fit Rabi frequency and dephasing to a coincidence histogram.
    FitG2(FitG2Args),
    /// PLE scan widths, or a temperature series against a linewidth model.
    FitLinewidth(FitLinewidthArgs),
    /// Fit the saturation law to intensity against power.
    FitSaturation(FitSaturationArgs),
    /// Lower bound on the spectral diffusion rate.
    DiffusionRate(DiffusionRateArgs),
    /// Temperature range where two Boltzmann fits meet.
    GapClosing(GapClosingArgs),
    /// Coherent-driving regime per temperature from fitted power series.
    Classify(ClassifyArgs),
    /// Index of the reports in the output directory.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EmitterArgs {
    /// Rabi frequency, Hz.
    #[arg(long)]
    pub omega_hz: f64,
    /// Pure dephasing rate, Hz.
    #[arg(long, default_value_t = 0.0)]
    pub gamma_c_hz: f64,
    /// Laser detuning, Hz.
    #[arg(long, default_value_t = 0.0)]
    pub delta_hz: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateG2 {
    #[command(flatten)]
    pub emitter: EmitterArgs,
    /// Standard deviation of the detuning spread, Hz; 0 for none.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_hz: f64,
    #[arg(long, default_value_t = 20e-9)]
    pub tau_max_s: f64,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeArg {
    Square,
    Exponential,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulatePulse {
    #[command(flatten)]
    pub emitter: EmitterArgs,
    #[arg(long, default_value_t = 10e-9)]
    pub duration_s: f64,
    /// 10-90 % rise time, s.
    #[arg(long, default_value_t = 0.0)]
    pub rise_s: f64,
    #[arg(long, value_enum, default_value_t = ShapeArg::Square)]
    pub shape: ShapeArg,
    /// End of the sampled window, s; defaults to twice the pulse length.
    #[arg(long)]
    pub t_end_s: Option<f64>,
    #[arg(long, default_value_t = 1001)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionArg {
    None,
    Frozen,
    Jumps,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TagFormat {
    Binary,
    Csv,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateStream {
    #[command(flatten)]
    pub emitter: EmitterArgs,
    #[arg(long)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub efficiency: f64,
    /// Uncorrelated background detections, 1/s.
    #[arg(long, default_value_t = 0.0)]
    pub background_hz: f64,
    #[arg(long, value_enum, default_value_t = DiffusionArg::None)]
    pub diffusion: DiffusionArg,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_hz: f64,
    /// Resampling rate of the jump process, 1/s.
    #[arg(long, default_value_t = 0.0)]
    pub jump_rate: f64,
    /// Resampling period of the frozen Gaussian, s.
    #[arg(long)]
    pub epoch_s: Option<f64>,
    #[arg(long, value_enum, default_value_t = TagFormat::Binary)]
    pub format: TagFormat,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct CorrelateArgs {
    /// Time-tag file, binary or CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub bin_s: f64,
    #[arg(long)]
    pub max_tau_s: f64,
    /// Stream length, s; defaults to the last arrival time.
    #[arg(long)]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitG2Args {
    /// `tau_s,counts` histogram.
    #[arg(long)]
    pub input: PathBuf,
    /// Detuning spread held fixed in the model, Hz.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_hz: f64,
    /// Starting Rabi frequency, Hz; read off the curve when absent.
    #[arg(long)]
    pub omega_hz: Option<f64>,
    /// Starting pure dephasing, Hz.
    #[arg(long)]
    pub gamma_c_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LinewidthModelArg {
    Cubic,
    Logistic,
    Boltzmann,
}

#[derive(Debug, Args, Serialize)]
pub struct FitLinewidthArgs {
    /// `scan_id,freq_hz,counts` PLE scans.
    #[arg(long, conflicts_with = "series")]
    pub scans: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ShapeChoice::Lorentzian)]
    pub shape: ShapeChoice,
    /// `temperature_k,value,sigma` series.
    #[arg(long, requires = "model")]
    pub series: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<LinewidthModelArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeChoice {
    Lorentzian,
    Gaussian,
}

#[derive(Debug, Args, Serialize)]
pub struct FitSaturationArgs {
    /// `power_w,counts` or `power_w,counts,sigma`.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DiffusionRateArgs {
    /// Laser scan speed, Hz/s.
    #[arg(long)]
    pub ul: f64,
    /// Fourier-limited linewidth, Hz.
    #[arg(long)]
    pub ftl: f64,
    /// Single-scan linewidth, Hz.
    #[arg(long)]
    pub single: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct GapClosingArgs {
    /// `temperature_k,value,sigma` of the shrinking gap.
    #[arg(long)]
    pub down: PathBuf,
    /// `temperature_k,value,sigma` of the growing half-width.
    #[arg(long)]
    pub up: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    /// `temperature_k,power_w,omega_hz,omega_sigma_hz,gamma_perp_hz,gamma_perp_sigma_hz`.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Reports to index; defaults to every `.json` in the output directory.
    pub inputs: Vec<PathBuf>,
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

struct Out<'a> {
    cfg: &'a Config,
    command: &'static str,
    files: Vec<PathBuf>,
}

impl Out<'_> {
    fn dir(&self) -> &Path {
        &self.cfg.output_dir
    }

    fn report<I: Serialize, R: Serialize>(&mut self, inputs: &I, result: &R) -> Result<()> {
        let p = io::write_report(self.dir(), self.command, inputs, result)?;
        self.files.push(p);
        Ok(())
    }

    fn plot(&mut self, points: &[BandPoint], x_label: &str, y_label: &str) -> Result<()> {
        let p = self.dir().join(format!("{}.csv", self.command));
        io::write_plot_csv(&p, points)?;
        self.files.push(p);
        if self.cfg.svg {
            let p = self.dir().join(format!("{}.svg", self.command));
            io::write_text(&p, &io::plot_svg(self.command, x_label, y_label, points))?;
            self.files.push(p);
        }
        Ok(())
    }
}

fn dispatch(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = Config::load(cli.config.as_deref())?;
    let command = match &cli.command {
        Command::SimulateG2(_) => "simulate-g2",
        Command::SimulatePulse(_) => "simulate-pulse",
        Command::SimulateStream(_) => "simulate-stream",
        Command::Correlate(_) => "correlate",
        Command::FitG2(_) => "fit-g2",
        Command::FitLinewidth(_) => "fit-linewidth",
        Command::FitSaturation(_) => "fit-saturation",
        Command::DiffusionRate(_) => "diffusion-rate",
        Command::GapClosing(_) => "gap-closing",
        Command::Classify(_) => "classify",
        Command::Report(_) => "report",
    };
    let mut out = Out {
        cfg: &cfg,
        command,
        files: Vec::new(),
    };
    match &cli.command {
        Command::SimulateG2(a) => simulate_g2(a, &mut out)?,
        Command::SimulatePulse(a) => simulate_pulse(a, &mut out)?,
        Command::SimulateStream(a) => simulate_stream_cmd(a, &mut out)?,
        Command::Correlate(a) => correlate_cmd(a, &mut out)?,
        Command::FitG2(a) => fit_g2_cmd(a, &mut out)?,
        Command::FitLinewidth(a) => fit_linewidth(a, &mut out)?,
        Command::FitSaturation(a) => fit_saturation(a, &mut out)?,
        Command::DiffusionRate(a) => {
            let rate = diffusion_rate(a.ul, a.ftl, a.single)?;
            out.report(a, &DiffusionRateResult { rate_hz: rate, lower_bound: true })?;
        }
        Command::GapClosing(a) => gap_closing(a, &mut out)?,
        Command::Classify(a) => classify_cmd(a, &mut out)?,
        Command::Report(a) => report_cmd(a, &mut out)?,
    }
    Ok(out.files)
}

fn emitter(cfg: &Config, e: &EmitterArgs) -> Result<EmitterParams> {
    EmitterParams::new(cfg.gamma(), hz_to_angular(e.gamma_c_hz), hz_to_angular(e.omega_hz), hz_to_angular(e.delta_hz))
}

fn distribution(sigma_hz: f64) -> Result<DetuningDistribution> {
    DetuningDistribution::new(hz_to_angular(sigma_hz), 0.0)
}

fn grid(end: f64, points: usize) -> Result<Vec<f64>> {
    if !(end.is_finite() && end > 0.0) || points < 2 {
        return Err(Error::invalid("the sampling window must be > 0 with at least two points"));
    }
    Ok((0..points).map(|i| end * i as f64 / (points - 1) as f64).collect())
}

fn plain(x: &[f64], y: &[f64]) -> Vec<BandPoint> {
    x.iter().zip(y).map(|(&x, &y)| BandPoint { x, y, lo: y, hi: y }).collect()
}

/// A rate in both conventions.
#[derive(Debug, Serialize)]
struct Rate {
    rad_per_s: f64,
    hz: f64,
}

impl Rate {
    fn new(rad_per_s: f64) -> Rate {
        Rate {
            rad_per_s,
            hz: angular_to_hz(rad_per_s),
        }
    }
}

#[derive(Debug, Serialize)]
struct RateEstimate {
    rad_per_s: Estimate,
    hz: Estimate,
}

impl RateEstimate {
    fn new(e: Estimate) -> RateEstimate {
        RateEstimate {
            rad_per_s: e,
            hz: Estimate {
                value: angular_to_hz(e.value),
                sigma: angular_to_hz(e.sigma),
            },
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulateG2Result {
    gamma: Rate,
    gamma_perp: Rate,
    effective_omega: Rate,
    regime: crate::dynamics::DampingRegime,
    envelope_rate: Rate,
    oscillation_frequency: Rate,
    emission_rate: f64,
    contrast_reduction: Option<f64>,
    g2_min: f64,
    g2_max: f64,
    points: usize,
}

fn simulate_g2(a: &SimulateG2, out: &mut Out) -> Result<()> {
    let p = emitter(out.cfg, &a.emitter)?;
    let dist = distribution(a.sigma_hz)?;
    let taus = grid(a.tau_max_s, a.points)?;
    let g2 = if dist.is_degenerate() {
        taus.iter().map(|&t| g2_resonant(&p, t)).collect()
    } else {
        let quad = out.cfg.quadrature_spec().unwrap_or_else(|| QuadratureSpec::auto_for(&p, &dist));
        g2_diffused_curve(&p, &dist, &taus, &quad)?
    };
    let lp = lambda_pair(&p);
    let contrast = if dist.is_degenerate() {
        None
    } else {
        match contrast_reduction(&p, &dist) {
            Ok(c) => Some(c),
            Err(Error::NotOscillatory) => None,
            Err(e) => return Err(e),
        }
    };
    let result = SimulateG2Result {
        gamma: Rate::new(p.gamma()),
        gamma_perp: Rate::new(p.gamma_perp()),
        effective_omega: Rate::new(p.effective_omega()),
        regime: lp.regime,
        envelope_rate: Rate::new(lp.envelope_rate()),
        oscillation_frequency: Rate::new(lp.oscillation_frequency()),
        emission_rate: emission_rate(&p),
        contrast_reduction: contrast,
        g2_min: g2.iter().copied().fold(f64::INFINITY, f64::min),
        g2_max: g2.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        points: g2.len(),
    };
    out.report(a, &result)?;
    out.plot(&plain(&taus, &g2), "tau (s)", "g2")
}

#[derive(Debug, Serialize)]
struct SimulatePulseResult {
    steady_state_rho_ee: f64,
    /// Oscillation envelope decay rate, (gamma + gamma_perp) / 2.
    envelope_rate_eq6: Rate,
    gamma: Rate,
    max_rho_ee: f64,
    final_rho_ee: f64,
    points: usize,
}

fn simulate_pulse(a: &SimulatePulse, out: &mut Out) -> Result<()> {
    let p = emitter(out.cfg, &a.emitter)?;
    let shape = match a.shape {
        ShapeArg::Square => PulseShape::IdealSquare,
        ShapeArg::Exponential => PulseShape::ExponentialRise,
    };
    let env = PulseEnvelope::new(a.duration_s, a.rise_s, shape, p.omega())?;
    let t = grid(a.t_end_s.unwrap_or(2.0 * a.duration_s), a.points)?;
    let states = evolve_pulse_from(&p, &env, crate::dynamics::BlochState::GROUND, &t, &out.cfg.bloch_options())?;
    let rho: Vec<f64> = states.iter().map(|s| s.rho_ee).collect();
    let result = SimulatePulseResult {
        steady_state_rho_ee: emission_rate(&p),
        envelope_rate_eq6: Rate::new(lambda_pair(&p).envelope_rate()),
        gamma: Rate::new(p.gamma()),
        max_rho_ee: rho.iter().copied().fold(0.0, f64::max),
        final_rho_ee: *rho.last().expect("grid has points"),
        points: rho.len(),
    };
    out.report(a, &result)?;
    out.plot(&plain(&t, &rho), "t (s)", "rho_ee")
}

#[derive(Debug, Serialize)]
struct SimulateStreamResult {
    photons: usize,
    duration_s: f64,
    mean_rate_hz: f64,
    seed: u64,
    time_tags: String,
}

fn simulate_stream_cmd(a: &SimulateStream, out: &mut Out) -> Result<()> {
    let p = emitter(out.cfg, &a.emitter)?;
    let seed = out.cfg.require_seed(a.seed)?;
    let sigma = hz_to_angular(a.sigma_hz);
    let proc = match (a.diffusion, a.epoch_s) {
        (DiffusionArg::None, _) => DiffusionProcess::none(seed),
        (DiffusionArg::Frozen, None) => DiffusionProcess::frozen(sigma, seed),
        (DiffusionArg::Frozen, Some(e)) => DiffusionProcess::frozen_epochs(sigma, e, seed),
        (DiffusionArg::Jumps, _) => DiffusionProcess::jumps(sigma, a.jump_rate, seed),
    };
    let opts = StreamOptions {
        detection_efficiency: a.efficiency,
        background_rate: a.background_hz,
        ..StreamOptions::default()
    };
    let stream = simulate_stream_with(&p, &proc, a.duration_s, &opts)?;
    let name = match a.format {
        TagFormat::Binary => "simulate-stream.bin",
        TagFormat::Csv => "simulate-stream.tags.csv",
    };
    let path = out.dir().join(name);
    std::fs::create_dir_all(out.dir()).map_err(|e| Error::io(format!("creating {}", out.dir().display()), e))?;
    match a.format {
        TagFormat::Binary => io::write_time_tags_binary(&path, &stream)?,
        TagFormat::Csv => io::write_time_tags_csv(&path, &stream)?,
    }
    out.files.push(path);
    let result = SimulateStreamResult {
        photons: stream.len(),
        duration_s: stream.total_duration(),
        mean_rate_hz: stream.mean_rate(),
        seed,
        time_tags: name.to_string(),
    };
    out.report(a, &result)
}

#[derive(Debug, Serialize)]
struct CorrelateResult {
    photons: usize,
    bins: usize,
    bin_width_s: f64,
    normalization: f64,
    accidental_level: f64,
    g2_zero_bin: f64,
    histogram: String,
}

fn correlate_cmd(a: &CorrelateArgs, out: &mut Out) -> Result<()> {
    let stream = io::load_time_tags(&a.input, a.duration_s)?;
    let curve = correlate(&stream, a.bin_s, a.max_tau_s)?;
    let name = "correlate.histogram.csv";
    let path = out.dir().join(name);
    std::fs::create_dir_all(out.dir()).map_err(|e| Error::io(format!("creating {}", out.dir().display()), e))?;
    io::write_correlation_csv(&path, &curve)?;
    out.files.push(path);
    let g2 = curve.g2();
    let zero = curve.tau_bins().iter().position(|t| t.abs() < 0.5 * a.bin_s).map_or(f64::NAN, |i| g2[i]);
    let result = CorrelateResult {
        photons: stream.len(),
        bins: curve.len(),
        bin_width_s: curve.bin_width(),
        normalization: curve.normalization(),
        accidental_level: crate::montecarlo::accidental_level(&stream, a.bin_s),
        g2_zero_bin: zero,
        histogram: name.to_string(),
    };
    out.report(a, &result)?;
    out.plot(&plain(curve.tau_bins(), &g2), "tau (s)", "g2")
}

#[derive(Debug, Serialize)]
struct FitG2Result {
    omega: RateEstimate,
    gamma_c: RateEstimate,
    gamma_perp: RateEstimate,
    gamma: Rate,
    scale: Estimate,
    regime: crate::dynamics::DampingRegime,
    pinned_at_gamma_perp_floor: bool,
    model: ModelKind,
    guess_omega: Rate,
    guess_gamma_c: Rate,
    reduced_chi2: f64,
    converged: bool,
    iterations: usize,
    sigma_level: f64,
}

fn fit_g2_cmd(a: &FitG2Args, out: &mut Out) -> Result<()> {
    let curve = io::load_correlation_csv(&a.input)?;
    let gamma = out.cfg.gamma();
    let auto = estimate_g2_guess(&curve, gamma);
    let guess = match (a.omega_hz, a.gamma_c_hz) {
        (Some(w), Some(c)) => G2Guess {
            omega: hz_to_angular(w),
            gamma_c: hz_to_angular(c),
        },
        (w, c) => {
            let g = auto?;
            G2Guess {
                omega: w.map_or(g.omega, hz_to_angular),
                gamma_c: c.map_or(g.gamma_c, hz_to_angular),
            }
        }
    };
    let fixed = G2Fixed {
        gamma,
        dist: distribution(a.sigma_hz)?,
    };
    let r = fit_g2(&curve, &fixed, &guess)?;
    let scale = r.fit.require("scale")?;
    let result = FitG2Result {
        omega: RateEstimate::new(r.omega),
        gamma_c: RateEstimate::new(r.gamma_c),
        gamma_perp: RateEstimate::new(r.gamma_perp),
        gamma: Rate::new(gamma),
        scale,
        regime: r.regime,
        pinned_at_gamma_perp_floor: r.pinned_at_floor,
        model: r.model,
        guess_omega: Rate::new(guess.omega),
        guess_gamma_c: Rate::new(guess.gamma_c),
        reduced_chi2: r.fit.reduced_chi2(),
        converged: r.fit.converged,
        iterations: r.fit.iterations,
        sigma_level: r.fit.sigma_level,
    };
    out.report(a, &result)?;
    let s = scale.value;
    let pts: Vec<BandPoint> = r
        .fit
        .confidence_bands
        .iter()
        .map(|b| BandPoint { x: b.x, y: b.y / s, lo: b.lo / s, hi: b.hi / s })
        .collect();
    out.plot(&pts, "tau (s)", "g2")
}

#[derive(Debug, Deserialize)]
struct SeriesRow {
    temperature_k: f64,
    value: f64,
    sigma: f64,
}

fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let (mut t, mut v, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for row in r.deserialize::<SeriesRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        t.push(row.temperature_k);
        v.push(row.value);
        s.push(row.sigma);
    }
    Ok((t, v, s))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(format!("reading {}", path.display()), io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn fit_points(model: ModelKind, fit: &FitResult, x: &[f64]) -> Result<Vec<BandPoint>> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dense: Vec<f64> = (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).collect();
    confidence_bands(model.build(1.0, DetuningDistribution::resonant()).as_ref(), fit, &dense)
}

fn boltzmann_guess(t: &[f64], v: &[f64]) -> Vec<f64> {
    let (imin, imax) = extreme_indices(t);
    let mid = 0.5 * (t[imin] + t[imax]);
    vec![v[imin], v[imax] - v[imin], PhysicalConstants::K_B * mid]
}

fn extreme_indices(v: &[f64]) -> (usize, usize) {
    let imin = (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(0);
    let imax = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(0);
    (imin, imax)
}

fn series_fit(model: ModelKind, t: Vec<f64>, v: Vec<f64>, s: Vec<f64>, cfg: &Config) -> Result<FitResult> {
    if t.is_empty() {
        return Err(Error::invalid("empty temperature series"));
    }
    let (imin, imax) = extreme_indices(&t);
    let guess = match model {
        ModelKind::Boltzmann => boltzmann_guess(&t, &v),
        ModelKind::Cubic => {
            let span = t[imax].powi(3) - t[imin].powi(3);
            vec![v[imin], ((v[imax] - v[imin]) / span).max(0.0)]
        }
        ModelKind::Logistic => {
            let mid = (t[imin] * t[imax]).sqrt().ln();
            vec![v[imin], v[imax], 10.0, mid, 1.0]
        }
        _ => return Err(Error::invalid("unsupported series model")),
    };
    let problem = FitProblem::new(model.build(1.0, DetuningDistribution::resonant()), t, v, guess).with_sigma(s);
    fit_with(&problem, &cfg.fit_options())
}

fn fit_linewidth(a: &FitLinewidthArgs, out: &mut Out) -> Result<()> {
    if let Some(path) = &a.scans {
        let scans = io::load_ple_scans(path)?;
        let shape = match a.shape {
            ShapeChoice::Lorentzian => LineShape::Lorentzian,
            ShapeChoice::Gaussian => LineShape::Gaussian,
        };
        let report = histogram_line_fit(&scans, shape)?;
        out.report(a, &report)?;
        let pts = match &report.center_histogram {
            Some(f) => {
                let x: Vec<f64> = f.confidence_bands.iter().map(|b| b.x).collect();
                fit_points(ModelKind::Gaussian, f, &x)?
            }
            None => Vec::new(),
        };
        return out.plot(&pts, "line centre (Hz)", "scans per bin");
    }
    let (Some(path), Some(model)) = (&a.series, a.model) else {
        return Err(Error::invalid("pass --scans, or --series with --model"));
    };
    let kind = match model {
        LinewidthModelArg::Cubic => ModelKind::Cubic,
        LinewidthModelArg::Logistic => ModelKind::Logistic,
        LinewidthModelArg::Boltzmann => ModelKind::Boltzmann,
    };
    let (t, v, s) = read_series(path)?;
    let fit = series_fit(kind, t.clone(), v, s, out.cfg)?;
    out.report(a, &fit)?;
    out.plot(&fit_points(kind, &fit, &t)?, "T (K)", "linewidth (Hz)")
}

#[derive(Debug, Deserialize)]
struct SaturationRow {
    power_w: f64,
    counts: f64,
    #[serde(default)]
    sigma: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FitSaturationResult {
    i_inf: Estimate,
    p_sat: Estimate,
    fit: FitResult,
}

fn fit_saturation(a: &FitSaturationArgs, out: &mut Out) -> Result<()> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(&a.input)
        .map_err(|e| csv_error(&a.input, e))?;
    let (mut p, mut c, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for row in r.deserialize::<SaturationRow>() {
        let row = row.map_err(|e| csv_error(&a.input, e))?;
        p.push(row.power_w);
        s.push(row.sigma.unwrap_or_else(|| row.counts.max(1.0).sqrt()));
        c.push(row.counts);
    }
    if p.len() < 3 {
        return Err(Error::invalid("a saturation fit needs at least three points"));
    }
    let (_, imax) = extreme_indices(&p);
    let top = c.iter().copied().fold(0.0, f64::max);
    let guess = vec![1.5 * top, 0.5 * p[imax]];
    let problem = FitProblem::new(ModelKind::Saturation.build(1.0, DetuningDistribution::resonant()), p.clone(), c, guess)
        .with_sigma(s);
    let fit = fit_with(&problem, &out.cfg.fit_options())?;
    let result = FitSaturationResult {
        i_inf: fit.require("I_inf")?,
        p_sat: fit.require("P_sat")?,
        fit,
    };
    out.report(a, &result)?;
    out.plot(&fit_points(ModelKind::Saturation, &result.fit, &p)?, "P (W)", "counts/s")
}

#[derive(Debug, Serialize)]
struct DiffusionRateResult {
    rate_hz: f64,
    lower_bound: bool,
}

#[derive(Debug, Serialize)]
struct GapClosingResult {
    closing: GapClosing,
    fit_down: FitResult,
    fit_up: FitResult,
}

fn gap_closing(a: &GapClosingArgs, out: &mut Out) -> Result<()> {
    let (t1, v1, s1) = read_series(&a.down)?;
    let (t2, v2, s2) = read_series(&a.up)?;
    let fit_down = series_fit(ModelKind::Boltzmann, t1, v1, s1, out.cfg)?;
    let fit_up = series_fit(ModelKind::Boltzmann, t2, v2, s2, out.cfg)?;
    let closing = gap_closing_range(&fit_down, &fit_up, out.cfg.sigma_level)?;
    out.report(a, &GapClosingResult { closing, fit_down, fit_up })
}

#[derive(Debug, Deserialize)]
struct ClassifyRow {
    temperature_k: f64,
    power_w: f64,
    omega_hz: f64,
    omega_sigma_hz: f64,
    gamma_perp_hz: f64,
    gamma_perp_sigma_hz: f64,
}

#[derive(Debug, Serialize)]
struct ClassifyResult {
    gamma: Rate,
    reports: Vec<RegimeReport>,
    /// Measured temperatures between which coherent driving is lost.
    coherence_bracket_k: Option<(f64, f64)>,
}

fn classify_cmd(a: &ClassifyArgs, out: &mut Out) -> Result<()> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.input)
        .map_err(|e| csv_error(&a.input, e))?;
    let mut groups: Vec<PowerSeries> = Vec::new();
    for row in r.deserialize::<ClassifyRow>() {
        let row = row.map_err(|e| csv_error(&a.input, e))?;
        let entry = PowerEntry {
            power: row.power_w,
            omega: Estimate {
                value: hz_to_angular(row.omega_hz),
                sigma: hz_to_angular(row.omega_sigma_hz),
            },
            gamma_perp: Estimate {
                value: hz_to_angular(row.gamma_perp_hz),
                sigma: hz_to_angular(row.gamma_perp_sigma_hz),
            },
        };
        match groups.iter_mut().find(|g| g.temperature == row.temperature_k) {
            Some(g) => g.entries.push(entry),
            None => groups.push(PowerSeries {
                temperature: row.temperature_k,
                entries: vec![entry],
            }),
        }
    }
    if groups.is_empty() {
        return Err(Error::invalid("no rows to classify"));
    }
    groups.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
    let gamma = out.cfg.gamma();
    let mut reports = Vec::new();
    for g in &mut groups {
        g.entries.sort_by(|a, b| a.power.total_cmp(&b.power));
        reports.push(classify(g, gamma)?);
    }
    let result = ClassifyResult {
        gamma: Rate::new(gamma),
        coherence_bracket_k: coherence_bracket(&reports),
        reports,
    };
    out.report(a, &result)
}

#[derive(Debug, Serialize)]
struct ReportEntry {
    file: String,
    command: String,
    schema_version: u64,
}

#[derive(Debug, Serialize)]
struct ReportIndex {
    entries: Vec<ReportEntry>,
}

fn report_cmd(a: &ReportArgs, out: &mut Out) -> Result<()> {
    let mut inputs = a.inputs.clone();
    if inputs.is_empty() {
        let dir = out.dir();
        let listing = std::fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        for entry in listing {
            let p = entry.map_err(|e| Error::io("listing output directory", e))?.path();
            if p.extension().is_some_and(|e| e == "json") && p.file_name().is_some_and(|n| n != "report.json") {
                inputs.push(p);
            }
        }
    }
    inputs.sort();
    let mut entries = Vec::new();
    for p in &inputs {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: not JSON: {e}", p.display())))?;
        if v["schema"] != io::SCHEMA_ID {
            return Err(Error::invalid(format!("{} is not an emcoh report", p.display())));
        }
        entries.push(ReportEntry {
            file: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            command: v["command"].as_str().unwrap_or_default().to_string(),
            schema_version: v["schema_version"].as_u64().unwrap_or_default(),
        });
    }
    let names: Vec<String> = entries.iter().map(|e| e.file.clone()).collect();
    out.report(&names, &ReportIndex { entries })
}
