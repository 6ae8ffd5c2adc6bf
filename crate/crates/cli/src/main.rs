use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pfspad::estimators::{estimate_from_interarrivals, DetectionTrace};
use pfspad::hdr_pipeline::{
    load_flux_image, reconstruct_flux, rescale_dynamic_range, simulate_capture, tone_map, write_outputs, OutputPaths,
};
use pfspad::photon_mc::{run_trials, simulate_spad_trace_from, SeedSpec, SimSensor, StartState, TrialStats};
use pfspad::spad_analytic::{
    count_variance, dynamic_range, expected_counts, log_flux_grid, rmse_approx, snr_curve, snr_from_rmse,
    SensorModel, SnrCurve,
};
use pfspad::{ConfigFile, Exposure, FluxLevel, SpadConfig};

/// Noise models, simulation and HDR rendering for passive free-running SPAD
/// pixels.
#[derive(Parser, Debug)]
#[command(name = "pfspad", version)]
struct Cli {
    /// Worker threads for simulation and curve evaluation [count, 0 = one per core]
    #[arg(long, global = true, env = "PFSPAD_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write an SNR-versus-flux curve as CSV
    SnrCurve(SnrCurveArgs),
    /// Write the per-flux bias and variance terms of the SPAD estimator as CSV
    NoiseBreakdown(NoiseBreakdownArgs),
    /// Write one SNR curve per exposure time
    ExposureSweep(ExposureSweepArgs),
    /// Simulate one SPAD exposure and write its detection timestamps
    SimulateTrace(SimulateTraceArgs),
    /// Compare Monte Carlo trials of a SPAD pixel with the analytic model
    Validate(ValidateArgs),
    /// Simulate capture of a PFM radiance map and write PNG, PFM and CSV outputs
    Render(RenderArgs),
    /// Print the dynamic range of an SNR curve CSV
    DynamicRange(DynamicRangeArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CurveSensor {
    /// PF-SPAD, Gaussian approximation
    Spad,
    /// PF-SPAD, exact count distribution
    SpadExact,
    /// PF-SPAD with dead-time jitter
    SpadJitter,
    /// Conventional full-well pixel
    Conventional,
    /// Single-bit quanta image sensor
    Qis,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CaptureSensor {
    Spad,
    Conventional,
    Qis,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Start {
    /// uncounted detection at t = 0
    DetectionAtZero,
    /// pixel already free-running when the exposure opens
    Stationary,
    /// pixel live at t = 0
    Armed,
}

impl From<Start> for StartState {
    fn from(s: Start) -> Self {
        match s {
            Start::DetectionAtZero => StartState::DetectionAtZero,
            Start::Stationary => StartState::Stationary,
            Start::Armed => StartState::Armed,
        }
    }
}

#[derive(Args, Debug)]
struct SensorFile {
    /// Sensor config file (key=value: q, tau_d_s [s], dark_rate_hz [1/s], p_ap,
    /// jitter_sigma_s [s], exposure_s [s], fwc [electrons], read_noise_e
    /// [electrons rms], qis_tau_b_s [s])
    #[arg(long, value_name = "FILE")]
    config: PathBuf,

    /// Exposure time [s]; overrides exposure_s from the config file
    #[arg(long, value_name = "SECONDS")]
    exposure_s: Option<f64>,
}

impl SensorFile {
    fn load(&self) -> Result<(ConfigFile, Exposure)> {
        let cfg = ConfigFile::load(&self.config)?;
        let exposure = match self.exposure_s {
            Some(t) => Exposure::new(t)?,
            None => cfg.exposure().context("no --exposure-s and no exposure_s in the config")?,
        };
        Ok((cfg, exposure))
    }
}

#[derive(Args, Debug)]
struct FluxGrid {
    /// Lowest flux of the log-spaced grid [photons/s]
    #[arg(long, value_name = "PHOTONS_PER_S", default_value_t = 1e2)]
    flux_min: f64,

    /// Highest flux of the log-spaced grid [photons/s]
    #[arg(long, value_name = "PHOTONS_PER_S", default_value_t = 1e12)]
    flux_max: f64,

    /// Number of grid points [count]
    #[arg(long, value_name = "N", default_value_t = 1001)]
    points: usize,
}

#[derive(Args, Debug)]
struct SnrCurveArgs {
    /// Sensor model
    #[arg(long, value_enum)]
    sensor: CurveSensor,

    #[command(flatten)]
    file: SensorFile,

    #[command(flatten)]
    grid: FluxGrid,

    /// Output CSV (flux_photons_per_s,rmse,snr_db,model); stdout when omitted
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NoiseBreakdownArgs {
    #[command(flatten)]
    file: SensorFile,

    #[command(flatten)]
    grid: FluxGrid,

    /// Include dead-time jitter (jitter_sigma_s [s]) in the shot term
    #[arg(long)]
    jitter_corrected: bool,

    /// Output CSV; stdout when omitted. Biases in photons/s, variances in (photons/s)^2
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExposureSweepArgs {
    /// Sensor model
    #[arg(long, value_enum)]
    sensor: CurveSensor,

    /// Sensor config file (same keys as snr-curve; exposure_s is ignored)
    #[arg(long, value_name = "FILE")]
    config: PathBuf,

    /// Comma-separated exposure times [s]
    #[arg(long, value_name = "SECONDS,...", value_delimiter = ',', required = true)]
    exposures_s: Vec<f64>,

    #[command(flatten)]
    grid: FluxGrid,

    /// Output prefix; writes {PREFIX}_T{exposure_s}.csv per exposure
    #[arg(long, value_name = "PREFIX")]
    out_prefix: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateTraceArgs {
    #[command(flatten)]
    file: SensorFile,

    /// Incident photon flux [photons/s]
    #[arg(long, value_name = "PHOTONS_PER_S")]
    flux: f64,

    /// Master seed [integer]
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Random stream within the seed [integer]
    #[arg(long, default_value_t = 0)]
    stream: u64,

    /// Pixel state when the exposure opens
    #[arg(long, value_enum, default_value_t = Start::DetectionAtZero)]
    start: Start,

    /// Output CSV of detection times (t_s [s]); stdout when omitted
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// SPAD config file; reference parameters (q 0.4, tau_d 149.7 ns) without dark counts or afterpulsing when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Exposure time [s]; defaults to exposure_s from the config, else 5e-3
    #[arg(long, value_name = "SECONDS")]
    exposure_s: Option<f64>,

    /// Comma-separated flux levels [photons/s]
    #[arg(long, value_name = "PHOTONS_PER_S,...", value_delimiter = ',', default_value = "1e8")]
    flux: Vec<f64>,

    /// Simulated exposures per flux level [count, >= 2]
    #[arg(long, value_name = "N", default_value_t = 10_000)]
    trials: usize,

    /// Master seed [integer]
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Also write the trial statistics CSV here
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Ground-truth radiance map, PFM, values in photons/s
    #[arg(long, value_name = "PFM")]
    input: PathBuf,

    /// Sensor to simulate
    #[arg(long, value_enum)]
    sensor: CaptureSensor,

    #[command(flatten)]
    file: SensorFile,

    /// Master seed [integer]
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output prefix; writes {PREFIX}.png, {PREFIX}_flux.pfm, {PREFIX}_summary.csv
    #[arg(long, value_name = "PREFIX")]
    out_prefix: PathBuf,

    /// Sample SPAD counts from the exact count distribution (needs p_ap = 0 and jitter_sigma_s = 0)
    #[arg(long)]
    fast: bool,

    /// Rescale the input so max/min positive flux equals this ratio [dimensionless]
    #[arg(long, value_name = "RATIO", requires = "peak_flux")]
    rescale_ratio: Option<f64>,

    /// Brightest flux after rescaling [photons/s]
    #[arg(long, value_name = "PHOTONS_PER_S", requires = "rescale_ratio")]
    peak_flux: Option<f64>,

    /// Tone-mapping key: larger values darken the image [dimensionless, > 0]
    #[arg(long, default_value_t = 1.0)]
    key: f64,
}

#[derive(Args, Debug)]
struct DynamicRangeArgs {
    /// SNR curve CSV as written by snr-curve
    #[arg(long, value_name = "CSV")]
    curve: PathBuf,

    /// Minimum acceptable SNR [dB]
    #[arg(long, value_name = "DB", default_value_t = 30.0)]
    threshold_db: f64,

    /// Second curve; prints the ratio of the two dynamic ranges as well
    #[arg(long, value_name = "CSV")]
    versus: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn model(sensor: CurveSensor, cfg: &ConfigFile) -> Result<SensorModel> {
    Ok(match sensor {
        CurveSensor::Spad => SensorModel::SpadApprox(cfg.spad()?),
        CurveSensor::SpadExact => SensorModel::SpadExact(cfg.spad()?),
        CurveSensor::SpadJitter => SensorModel::SpadJitter(cfg.spad()?),
        CurveSensor::Conventional => SensorModel::Conventional(cfg.conventional()?),
        CurveSensor::Qis => SensorModel::Qis(cfg.qis()?),
    })
}

fn spad_with_exposure(cfg: &ConfigFile, exposure: Exposure) -> Result<SpadConfig> {
    let (spad, _) = pfspad::sensor::validate_spad_config(cfg.spad()?, exposure)?;
    Ok(spad)
}

fn snr_curve_cmd(args: &SnrCurveArgs) -> Result<()> {
    let (cfg, exposure) = args.file.load()?;
    let m = model(args.sensor, &cfg)?;
    let curve = snr_curve(&m, exposure, args.grid.flux_min, args.grid.flux_max, args.grid.points)?;
    let mut out = output(args.out.as_deref())?;
    curve.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn noise_breakdown_cmd(args: &NoiseBreakdownArgs) -> Result<()> {
    let (cfg, exposure) = args.file.load()?;
    let spad = spad_with_exposure(&cfg, exposure)?;
    let grid = log_flux_grid(args.grid.flux_min, args.grid.flux_max, args.grid.points)?;
    let mut out = output(args.out.as_deref())?;
    writeln!(
        out,
        "flux_photons_per_s,bias_dark,bias_afterpulse,var_shot,var_quantization,rmse,snr_db"
    )?;
    for phi in grid {
        let level = FluxLevel::new(phi)?;
        let b = rmse_approx(level, &spad, exposure, args.jitter_corrected);
        let snr = snr_from_rmse(level, b.rmse)?;
        writeln!(
            out,
            "{phi:e},{:e},{:e},{:e},{:e},{:e},{snr:e}",
            b.bias_dark, b.bias_afterpulse, b.var_shot, b.var_quantization, b.rmse
        )?;
    }
    out.flush()?;
    Ok(())
}

fn exposure_sweep_cmd(args: &ExposureSweepArgs) -> Result<()> {
    let cfg = ConfigFile::load(&args.config)?;
    let m = model(args.sensor, &cfg)?;
    for &t in &args.exposures_s {
        let exposure = Exposure::new(t)?;
        let curve = snr_curve(&m, exposure, args.grid.flux_min, args.grid.flux_max, args.grid.points)?;
        let mut path = args.out_prefix.as_os_str().to_owned();
        path.push(format!("_T{t}.csv"));
        let path = PathBuf::from(path);
        curve.save_csv(&path)?;
        println!("{} exposure_s={t} peak_snr_db={:.4}", path.display(), curve.peak_snr_db());
    }
    Ok(())
}

fn simulate_trace_cmd(args: &SimulateTraceArgs) -> Result<()> {
    let (cfg, exposure) = args.file.load()?;
    let spad = spad_with_exposure(&cfg, exposure)?;
    let phi = FluxLevel::new(args.flux)?;
    let trace = simulate_spad_trace_from(phi, &spad, exposure, args.start.into(), SeedSpec::new(args.seed, args.stream));
    let mut out = output(args.out.as_deref())?;
    trace.write_csv(&mut out)?;
    out.flush()?;
    drop(out);
    if args.out.is_some() {
        print_trace_summary(&trace, &spad);
    }
    Ok(())
}

fn print_trace_summary(trace: &DetectionTrace, spad: &SpadConfig) {
    print!("detections={}", trace.count());
    match estimate_from_interarrivals(trace, spad) {
        Ok(est) => println!(" phi_hat={:e}", est.phi_hat),
        Err(e) => println!(" phi_hat=NA ({e})"),
    }
}

fn validate_cmd(args: &ValidateArgs) -> Result<bool> {
    let (spad, exposure) = match &args.config {
        Some(path) => {
            let cfg = ConfigFile::load(path)?;
            let exposure = Exposure::new(args.exposure_s.or(cfg.exposure_s).unwrap_or(5e-3))?;
            (spad_with_exposure(&cfg, exposure)?, exposure)
        }
        None => (
            SpadConfig::REFERENCE.without_spurious_counts(),
            Exposure::new(args.exposure_s.unwrap_or(5e-3))?,
        ),
    };
    if spad.afterpulse_prob > 0.0 || spad.jitter_sigma_s > 0.0 {
        log::warn!("the count mean and variance checks do not model afterpulsing or jitter");
    }
    let sensor = SimSensor::Spad {
        cfg: spad,
        start: StartState::Stationary,
        exact_sampling: false,
    };
    let stats = run_trials(&sensor, exposure, &args.flux, args.trials, args.seed)?;
    if let Some(path) = &args.out {
        TrialStats::save_csv(&stats, path)?;
    }
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let mut all = true;
    println!("check result flux_photons_per_s measured expected tolerance");
    for s in &stats {
        let phi = FluxLevel::new(s.flux)?;
        // dark counts enter the count process like extra photons
        let effective = FluxLevel::new(s.flux + spad.dark_rate_hz / spad.quantum_efficiency)?;
        let mean = expected_counts(effective, &spad, exposure);
        let var = count_variance(effective, &spad, exposure);
        let snr = snr_from_rmse(phi, rmse_approx(phi, &spad, exposure, false).rmse)?;
        let se = s.count_standard_error();
        let checks = [
            ("mean_count", s.mean_count, mean, 3.0 * se, (s.mean_count - mean).abs() <= 3.0 * se),
            ("var_count", s.var_count, var, 0.1 * var, (s.var_count - var).abs() <= 0.1 * var),
            ("snr_db", s.snr_db(), snr, 1.0, (s.snr_db() - snr).abs() <= 1.0),
        ];
        for (name, measured, expected, tol, ok) in checks {
            all &= ok;
            println!(
                "{name} {} {:e} {measured:.6e} {expected:.6e} {tol:.3e}",
                verdict(ok),
                s.flux
            );
        }
    }
    Ok(all)
}

fn render_cmd(args: &RenderArgs) -> Result<()> {
    let (cfg, exposure) = args.file.load()?;
    let mut img = load_flux_image(&args.input)?;
    if let (Some(ratio), Some(peak)) = (args.rescale_ratio, args.peak_flux) {
        img = rescale_dynamic_range(&img, ratio, peak)?;
    }
    let sensor = match args.sensor {
        CaptureSensor::Spad => SimSensor::spad_capture(spad_with_exposure(&cfg, exposure)?, args.fast),
        CaptureSensor::Conventional => SimSensor::Conventional(cfg.conventional()?),
        CaptureSensor::Qis => SimSensor::Qis(cfg.qis()?),
    };
    if args.fast && args.sensor != CaptureSensor::Spad {
        log::warn!("--fast only affects the spad sensor");
    }
    let counts = simulate_capture(&img, &sensor, exposure, args.seed)?;
    let rec = reconstruct_flux(&counts)?;
    let toned = tone_map(&rec.flux, args.key)?;
    let paths = OutputPaths::from_prefix(&args.out_prefix);
    write_outputs(&rec, &toned, &paths)?;
    println!("{}", paths.png.display());
    println!("{}", paths.pfm.display());
    println!("{}", paths.summary_csv.display());
    println!("saturated_samples={}", rec.saturated_count());
    Ok(())
}

fn dynamic_range_cmd(args: &DynamicRangeArgs) -> Result<()> {
    let range = |path: &Path| -> Result<f64> {
        let curve = SnrCurve::load_csv(path)?;
        dynamic_range(&curve, args.threshold_db)
            .with_context(|| format!("{} never reaches {} dB", path.display(), args.threshold_db))
    };
    let dr = range(&args.curve)?;
    match &args.versus {
        None => println!("{dr:e}"),
        Some(other) => {
            let dr2 = range(other)?;
            println!("dynamic_range={dr:e} versus={dr2:e} ratio={:e}", dr / dr2);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match &cli.command {
        Command::SnrCurve(a) => snr_curve_cmd(a),
        Command::NoiseBreakdown(a) => noise_breakdown_cmd(a),
        Command::ExposureSweep(a) => exposure_sweep_cmd(a),
        Command::SimulateTrace(a) => simulate_trace_cmd(a),
        Command::Validate(a) => {
            if validate_cmd(a)? {
                Ok(())
            } else {
                bail!("validation failed")
            }
        }
        Command::Render(a) => render_cmd(a),
        Command::DynamicRange(a) => dynamic_range_cmd(a),
    }
}

/// One line a script can grep for, next to the human-readable message.
fn report(kind: &str, msg: &str) {
    let escaped = msg.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    eprintln!("error kind={kind} msg=\"{escaped}\"");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let first = e.to_string();
            report("usage", first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            report("runtime", &format!("{e:#}"));
            ExitCode::from(1)
        }
    }
}
