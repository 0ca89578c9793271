//! `sqz`: command-line front end for the OPO squeezing toolkit.
//!
//! Exit codes: 0 success, 1 data or validation error, 2 usage error.

mod io;
mod si;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sqz_core::estimation::{
    correct_electronic_noise, fit_gain, fit_power_sweep, fit_spectra, ExclusionBand, FitResult,
    PhiMode, SpectraFitConfig, ThresholdMode,
};
use sqz_core::noise_analysis::{
    default_segment_length, default_tau_grid, normalize_fractional, oadev, welch_psd, Window,
};
use sqz_core::opo_model::{quadrature_variance, spectrum, OpoModelParams, Quadrature};
use sqz_core::physics::{db_from_ratio, ratio_from_db, CavityCharacter, CavityGeometry};
use sqz_core::simulator::{
    gen_gain_data, gen_polarization_noise, gen_spectrum_trace, Seed, SpectrumAnalyzerConfig, Spur,
};

use io::RunManifest;
use si::{parse_list_or_grid, parse_quantity};

#[derive(Parser, Debug)]
#[command(name = "sqz", version, about = "Model, fit and analyze squeezed-light OPO data")]
struct Cli {
    /// Suppress informational output (results and warnings still print)
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Derive FSR, finesse, linewidth and escape efficiency from a cavity
    /// geometry JSON file
    Cavity(CavityArgs),
    /// Evaluate the quadrature-variance model
    #[command(subcommand)]
    Model(ModelCommand),
    /// Fit model parameters to measured or synthetic data
    #[command(subcommand)]
    Fit(FitCommand),
    /// Generate seeded synthetic data
    #[command(subcommand)]
    Sim(SimCommand),
    /// Overlapped Allan deviation of a power time series
    Adev(AdevArgs),
    /// Welch power spectral density of a power time series
    Psd(PsdArgs),
    /// Remove the electronics floor from a spectrum trace
    CorrectNoise(CorrectNoiseArgs),
}

#[derive(Args, Debug)]
struct CavityArgs {
    /// Geometry description (JSON)
    #[arg(long = "geometry")]
    geometry: String,
    /// Output JSON path (stdout when absent)
    #[arg(long = "out")]
    out: Option<String>,
}

#[derive(Subcommand, Debug)]
enum ModelCommand {
    /// Evaluate squeezing/anti-squeezing at a point or over a frequency grid
    Eval(ModelEvalArgs),
}

#[derive(Args, Debug)]
struct ModelEvalArgs {
    /// OPO threshold power (e.g. 5.12mW)
    #[arg(long)]
    pthr: String,
    /// Cavity FWHM bandwidth (e.g. 66MHz)
    #[arg(long)]
    kappa: String,
    /// Total detection efficiency in (0, 1]
    #[arg(long)]
    eta: f64,
    /// RMS phase noise (e.g. 19mrad)
    #[arg(long)]
    phi: String,
    /// Pump power (e.g. 2.5mW)
    #[arg(long)]
    power: String,
    /// Single sideband frequency (e.g. 5MHz)
    #[arg(long, conflicts_with = "grid")]
    freq: Option<String>,
    /// Frequency grid start:step:stop (e.g. 1MHz:0.5MHz:120MHz)
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum, default_value_t = QuadratureArg::Both)]
    quadrature: QuadratureArg,
    /// Print the point evaluation as JSON
    #[arg(long)]
    json: bool,
    /// Output CSV path for grid mode (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand, Debug)]
enum FitCommand {
    /// Threshold power from a classical gain curve
    Gain(FitGainArgs),
    /// Efficiency and phase noise from squeezing vs pump power
    Sweep(FitSweepArgs),
    /// Joint fit across spectrum traces with exclusion bands
    Spectra(FitSpectraArgs),
}

#[derive(Args, Debug)]
struct FitGainArgs {
    /// Gain data CSV (pump_power_w,gain,power_frac_err)
    #[arg(long = "in")]
    input: String,
    /// Initial threshold guess (default: 1.2 x largest pump power)
    #[arg(long = "init-pthr")]
    init_pthr: Option<String>,
    /// Output JSON path (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct FitSweepArgs {
    /// Squeezed-quadrature sweep CSV (pump_power_w,variance_db_rel_shot)
    #[arg(long)]
    squeezed: Option<String>,
    /// Anti-squeezed-quadrature sweep CSV
    #[arg(long)]
    antisqueezed: Option<String>,
    /// Sideband frequency (falls back to the file metadata)
    #[arg(long)]
    freq: Option<String>,
    /// Cavity FWHM bandwidth (e.g. 66MHz)
    #[arg(long)]
    kappa: String,
    /// Hold the threshold power fixed at this value
    #[arg(long, conflicts_with = "fit_pthr")]
    pthr: Option<String>,
    /// Estimate the threshold power as a free parameter
    #[arg(long = "fit-pthr")]
    fit_pthr: bool,
    /// Initial guess for a free threshold
    #[arg(long = "init-pthr")]
    init_pthr: Option<String>,
    /// Output JSON path (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct FitSpectraArgs {
    /// Spectrum trace CSV (repeatable)
    #[arg(long = "in", required = true)]
    inputs: Vec<String>,
    /// Exclusion band low:high in Hz (repeatable, e.g. 38e6:42e6)
    #[arg(long = "exclude")]
    exclude: Vec<String>,
    /// Add the default bands: 40/80/100 MHz, half-width 2 MHz
    #[arg(long = "default-bands")]
    default_bands: bool,
    /// Initial guess for the cavity FWHM
    #[arg(long = "kappa-init")]
    kappa_init: Option<String>,
    /// Hold the threshold power fixed at this value
    #[arg(long, conflicts_with = "fit_pthr")]
    pthr: Option<String>,
    /// Estimate the threshold power as a free parameter
    #[arg(long = "fit-pthr")]
    fit_pthr: bool,
    /// Initial guess for a free threshold
    #[arg(long = "init-pthr")]
    init_pthr: Option<String>,
    /// Share one phase-noise value or fit one per pump power
    #[arg(long = "phi-mode", value_enum, default_value_t = PhiModeArg::Shared)]
    phi_mode: PhiModeArg,
    /// Output JSON path (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand, Debug)]
enum SimCommand {
    /// Classical gain curve with a fractional power error
    Gain(SimGainArgs),
    /// Spectrum-analyzer squeezing trace
    Spectrum(SimSpectrumArgs),
    /// Polarization-noise power time series
    Polnoise(SimPolnoiseArgs),
}

#[derive(Args, Debug)]
struct SimGainArgs {
    /// Threshold power (e.g. 5.12mW)
    #[arg(long)]
    pthr: String,
    /// Pump powers: comma list or start:step:stop (e.g. 0.5mW:0.25mW:4.5mW)
    #[arg(long)]
    powers: String,
    /// Fractional power error (e.g. 0.05)
    #[arg(long = "power-error", default_value_t = 0.05)]
    power_error: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct SimSpectrumArgs {
    #[arg(long)]
    pthr: String,
    #[arg(long)]
    kappa: String,
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    phi: String,
    /// Pump power of the trace
    #[arg(long)]
    power: String,
    /// Frequency grid start:step:stop or comma list
    #[arg(long)]
    grid: String,
    #[arg(long, value_enum)]
    quadrature: QuadratureArg,
    /// Resolution bandwidth
    #[arg(long, default_value = "300kHz")]
    rbw: String,
    /// Video bandwidth
    #[arg(long, default_value = "300Hz")]
    vbw: String,
    /// Number of averaged traces (0 = noise-free limit)
    #[arg(long, default_value_t = 100)]
    averages: u32,
    /// Electronics floor relative to shot noise, in dB (e.g. -22)
    #[arg(long = "electronic-noise-db", default_value_t = -22.0, allow_hyphen_values = true)]
    electronic_noise_db: f64,
    /// Spur freq:height_db:width (repeatable, e.g. 40MHz:10:1MHz)
    #[arg(long = "spur")]
    spurs: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct SimPolnoiseArgs {
    /// Duration in seconds (e.g. 10000 or 10ks)
    #[arg(long)]
    duration: String,
    /// Sample rate (e.g. 1Hz)
    #[arg(long, default_value = "1Hz")]
    rate: String,
    /// White-noise standard deviation (fractional)
    #[arg(long = "white-std")]
    white_std: f64,
    /// Random-walk step per sample (fractional)
    #[arg(long = "rw-step")]
    rw_step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct AdevArgs {
    /// Time-series CSV (value column, '# sample_rate_hz=' metadata)
    #[arg(long = "in")]
    input: String,
    /// Averaging factors m (comma list); default: 1-2-5 decades up to N/3
    #[arg(long)]
    taus: Option<String>,
    /// Analyze the samples as-is instead of normalizing to the mean first
    #[arg(long)]
    raw: bool,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct PsdArgs {
    /// Time-series CSV (value column, '# sample_rate_hz=' metadata)
    #[arg(long = "in")]
    input: String,
    /// Segment length in samples; default: largest power of two <= N/8
    #[arg(long)]
    segment: Option<usize>,
    /// Overlap fraction in [0, 0.9]
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long, value_enum, default_value_t = WindowArg::Hann)]
    window: WindowArg,
    /// Analyze the samples as-is instead of normalizing to the mean first
    #[arg(long)]
    raw: bool,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct CorrectNoiseArgs {
    /// Spectrum trace CSV
    #[arg(long = "in")]
    input: String,
    /// Electronics floor relative to shot noise, in dB (e.g. -22)
    #[arg(long = "floor-db", allow_hyphen_values = true)]
    floor_db: f64,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum QuadratureArg {
    Squeezed,
    Antisqueezed,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum WindowArg {
    Hann,
    Rectangular,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PhiModeArg {
    Shared,
    PerPower,
}

fn main() {
    let cli = Cli::parse();
    let quiet = cli.quiet;
    let result = match cli.command {
        Command::Cavity(args) => cmd_cavity(args, quiet),
        Command::Model(ModelCommand::Eval(args)) => cmd_model_eval(args, quiet),
        Command::Fit(FitCommand::Gain(args)) => cmd_fit_gain(args, quiet),
        Command::Fit(FitCommand::Sweep(args)) => cmd_fit_sweep(args, quiet),
        Command::Fit(FitCommand::Spectra(args)) => cmd_fit_spectra(args, quiet),
        Command::Sim(SimCommand::Gain(args)) => cmd_sim_gain(args),
        Command::Sim(SimCommand::Spectrum(args)) => cmd_sim_spectrum(args, quiet),
        Command::Sim(SimCommand::Polnoise(args)) => cmd_sim_polnoise(args),
        Command::Adev(args) => cmd_adev(args, quiet),
        Command::Psd(args) => cmd_psd(args),
        Command::CorrectNoise(args) => cmd_correct_noise(args),
    };
    if let Err(message) = result {
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}

fn info(quiet: bool, message: &str) {
    if !quiet {
        eprintln!("{message}");
    }
}

fn cmd_cavity(args: CavityArgs, quiet: bool) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.geometry)
        .map_err(|e| format!("cannot read {}: {e}", args.geometry))?;
    let geometry: CavityGeometry = serde_json::from_str(&text)
        .map_err(|e| format!("{}: invalid geometry JSON: {e}", args.geometry))?;
    let character =
        CavityCharacter::from_geometry(&geometry).map_err(|e| e.to_string())?;
    info(
        quiet,
        &format!(
            "FSR {:.6e} Hz, finesse {:.2}, FWHM {:.6e} Hz, escape efficiency {:.4}",
            character.fsr_hz, character.finesse, character.fwhm_hz, character.escape_efficiency
        ),
    );
    let body = serde_json::to_string_pretty(&character).expect("serializes") + "\n";
    let repr = format!("{args:?}");
    io::emit(&body, args.out.as_deref(), |out| {
        RunManifest::new("cavity", &repr, None, vec![args.geometry.clone()], vec![out.into()])
    })
}

fn model_params(pthr: &str, kappa: &str, eta: f64, phi: &str) -> Result<OpoModelParams, String> {
    let params = OpoModelParams {
        threshold_power_w: parse_quantity(pthr, "W")?,
        fwhm_bandwidth_hz: parse_quantity(kappa, "Hz")?,
        total_efficiency: eta,
        phase_noise_rms_rad: parse_quantity(phi, "rad")?,
    };
    params.validate().map_err(|e| e.to_string())?;
    Ok(params)
}

fn warn_phi_validity(params: &OpoModelParams) {
    if !params.phi_within_validity() {
        eprintln!(
            "warning: RMS phase noise {} rad exceeds the small-angle validity limit 0.1 rad; \
             model values are unreliable",
            params.phase_noise_rms_rad
        );
    }
}

fn cmd_model_eval(args: ModelEvalArgs, _quiet: bool) -> Result<(), String> {
    let params = model_params(&args.pthr, &args.kappa, args.eta, &args.phi)?;
    warn_phi_validity(&params);
    let pump = parse_quantity(&args.power, "W")?;

    if let Some(grid) = &args.grid {
        let quadrature = match args.quadrature {
            QuadratureArg::Squeezed => Quadrature::Squeezed,
            QuadratureArg::Antisqueezed => Quadrature::Antisqueezed,
            QuadratureArg::Both => {
                return Err("grid output holds one trace; choose --quadrature \
                            squeezed or antisqueezed"
                    .into())
            }
        };
        let freqs = parse_list_or_grid(grid, "Hz")?;
        let trace =
            spectrum(&params, pump, &freqs, quadrature).map_err(|e| e.to_string())?;
        let body = io::spectrum_csv(&trace)?;
        let repr = format!("{args:?}");
        return io::emit(&body, args.out.as_deref(), |out| {
            RunManifest::new("model eval", &repr, None, vec![], vec![out.into()])
        });
    }

    let freq = parse_quantity(
        args.freq.as_deref().ok_or("one of --freq or --grid is required")?,
        "Hz",
    )?;
    let eval = |quadrature| -> Result<(f64, f64), String> {
        let v = quadrature_variance(&params, pump, freq, quadrature)
            .map_err(|e| e.to_string())?;
        Ok((v, db_from_ratio(v).map_err(|e| e.to_string())?))
    };
    match args.quadrature {
        QuadratureArg::Both => {
            let (v_sq, db_sq) = eval(Quadrature::Squeezed)?;
            let (v_anti, db_anti) = eval(Quadrature::Antisqueezed)?;
            if args.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "squeezed_variance": v_sq,
                        "squeezed_db": db_sq,
                        "antisqueezed_variance": v_anti,
                        "antisqueezed_db": db_anti,
                    })
                );
            } else {
                println!("squeezed: {db_sq:+.2} dB");
                println!("antisqueezed: {db_anti:+.2} dB");
            }
        }
        QuadratureArg::Squeezed | QuadratureArg::Antisqueezed => {
            let quadrature = if args.quadrature == QuadratureArg::Squeezed {
                Quadrature::Squeezed
            } else {
                Quadrature::Antisqueezed
            };
            let (v, db) = eval(quadrature)?;
            if args.json {
                println!("{}", serde_json::json!({ "variance": v, "db": db }));
            } else {
                println!(
                    "{}: {db:+.2} dB",
                    if quadrature == Quadrature::Squeezed { "squeezed" } else { "antisqueezed" }
                );
            }
        }
    }
    Ok(())
}

fn emit_fit(
    fit: &FitResult,
    out: Option<&str>,
    command: &str,
    repr: &str,
    inputs: Vec<String>,
    quiet: bool,
) -> Result<(), String> {
    for warning in &fit.warnings {
        eprintln!("warning: {warning}");
    }
    if !quiet {
        for ((name, value), se) in
            fit.parameter_names.iter().zip(&fit.values).zip(&fit.standard_errors)
        {
            eprintln!("{name} = {value:.6e} +/- {se:.2e}");
        }
        eprintln!(
            "converged: {} after {} iterations, rss {:.4e}, dof {}",
            fit.converged, fit.iterations, fit.rss, fit.dof
        );
    }
    let body = io::fit_result_json(fit) + "\n";
    io::emit(&body, out, |out_path| {
        RunManifest::new(command, repr, None, inputs, vec![out_path.into()])
    })
}

fn cmd_fit_gain(args: FitGainArgs, quiet: bool) -> Result<(), String> {
    let data = io::read_gain_csv(&args.input)?;
    let max_power = data.iter().map(|d| d.pump_power_w).fold(0.0, f64::max);
    let initial = match &args.init_pthr {
        Some(raw) => parse_quantity(raw, "W")?,
        None => 1.2 * max_power,
    };
    let fit = fit_gain(&data, initial).map_err(|e| e.to_string())?;
    let repr = format!("{args:?}");
    emit_fit(&fit, args.out.as_deref(), "fit gain", &repr, vec![args.input.clone()], quiet)
}

fn threshold_mode(
    pthr: &Option<String>,
    fit_pthr: bool,
    init_pthr: &Option<String>,
) -> Result<ThresholdMode, String> {
    match (pthr, fit_pthr) {
        (Some(raw), false) => Ok(ThresholdMode::Fixed(parse_quantity(raw, "W")?)),
        (None, true) => Ok(ThresholdMode::Free {
            initial: init_pthr.as_deref().map(|raw| parse_quantity(raw, "W")).transpose()?,
        }),
        (None, false) => Err("choose --pthr <value> or --fit-pthr".into()),
        (Some(_), true) => unreachable!("clap conflict"),
    }
}

fn cmd_fit_sweep(args: FitSweepArgs, quiet: bool) -> Result<(), String> {
    let mut inputs = Vec::new();
    let mut freq_meta = None;
    let mut read_side = |path: &Option<String>,
                         expect: Quadrature|
     -> Result<Vec<(f64, f64)>, String> {
        let Some(path) = path else { return Ok(Vec::new()) };
        let (points, quadrature, freq) = io::read_sweep_csv(path)?;
        if let Some(q) = quadrature {
            if q != expect {
                return Err(format!(
                    "{path}: file is marked '{q:?}' but was passed as the {expect:?} input"
                ));
            }
        }
        if freq_meta.is_none() {
            freq_meta = freq;
        }
        inputs.push(path.clone());
        Ok(points)
    };
    let squeezed = read_side(&args.squeezed, Quadrature::Squeezed)?;
    let antisqueezed = read_side(&args.antisqueezed, Quadrature::Antisqueezed)?;
    if squeezed.is_empty() && antisqueezed.is_empty() {
        return Err("no sweep data: pass --squeezed and/or --antisqueezed".into());
    }
    let freq = match &args.freq {
        Some(raw) => parse_quantity(raw, "Hz")?,
        None => freq_meta.ok_or(
            "sideband frequency not given (--freq) and not present in the file metadata",
        )?,
    };
    let kappa = parse_quantity(&args.kappa, "Hz")?;
    let mode = threshold_mode(&args.pthr, args.fit_pthr, &args.init_pthr)?;
    let fit = fit_power_sweep(&squeezed, &antisqueezed, freq, kappa, mode)
        .map_err(|e| e.to_string())?;
    let repr = format!("{args:?}");
    emit_fit(&fit, args.out.as_deref(), "fit sweep", &repr, inputs, quiet)
}

fn cmd_fit_spectra(args: FitSpectraArgs, quiet: bool) -> Result<(), String> {
    let traces = args
        .inputs
        .iter()
        .map(|path| io::read_spectrum_csv(path))
        .collect::<Result<Vec<_>, _>>()?;
    let mut bands = Vec::new();
    for band in &args.exclude {
        let (low, high) = band
            .split_once(':')
            .ok_or_else(|| format!("--exclude '{band}' is not of the form low:high"))?;
        bands.push(
            ExclusionBand::new(parse_quantity(low, "Hz")?, parse_quantity(high, "Hz")?)
                .map_err(|e| e.to_string())?,
        );
    }
    if args.default_bands {
        bands.extend(ExclusionBand::default_bands());
    }
    let config = SpectraFitConfig {
        threshold: threshold_mode(&args.pthr, args.fit_pthr, &args.init_pthr)?,
        kappa_initial_hz: args
            .kappa_init
            .as_deref()
            .map(|raw| parse_quantity(raw, "Hz"))
            .transpose()?,
        phi_mode: match args.phi_mode {
            PhiModeArg::Shared => PhiMode::Shared,
            PhiModeArg::PerPower => PhiMode::PerPower,
        },
    };
    let fit = fit_spectra(&traces, &bands, &config).map_err(|e| e.to_string())?;
    let repr = format!("{args:?}");
    emit_fit(&fit, args.out.as_deref(), "fit spectra", &repr, args.inputs.clone(), quiet)
}

fn cmd_sim_gain(args: SimGainArgs) -> Result<(), String> {
    let threshold = parse_quantity(&args.pthr, "W")?;
    let powers = parse_list_or_grid(&args.powers, "W")?;
    let data = gen_gain_data(threshold, &powers, args.power_error, Seed(args.seed))
        .map_err(|e| e.to_string())?;
    let body = io::gain_csv(&data);
    let repr = format!("{args:?}");
    io::emit(&body, args.out.as_deref(), |out| {
        RunManifest::new("sim gain", &repr, Some(args.seed), vec![], vec![out.into()])
    })
}

fn cmd_sim_spectrum(args: SimSpectrumArgs, _quiet: bool) -> Result<(), String> {
    let params = model_params(&args.pthr, &args.kappa, args.eta, &args.phi)?;
    warn_phi_validity(&params);
    let pump = parse_quantity(&args.power, "W")?;
    let freqs = parse_list_or_grid(&args.grid, "Hz")?;
    let quadrature = match args.quadrature {
        QuadratureArg::Squeezed => Quadrature::Squeezed,
        QuadratureArg::Antisqueezed => Quadrature::Antisqueezed,
        QuadratureArg::Both => {
            return Err("a trace holds one quadrature; choose squeezed or antisqueezed".into())
        }
    };
    let mut spurs = Vec::new();
    for entry in &args.spurs {
        let parts: Vec<&str> = entry.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("--spur '{entry}' is not of the form freq:height_db:width"));
        }
        spurs.push(Spur {
            frequency_hz: parse_quantity(parts[0], "Hz")?,
            height_db: parse_quantity(parts[1], "dB")?,
            width_hz: parse_quantity(parts[2], "Hz")?,
        });
    }
    let sa = SpectrumAnalyzerConfig {
        rbw_hz: parse_quantity(&args.rbw, "Hz")?,
        vbw_hz: parse_quantity(&args.vbw, "Hz")?,
        trace_averages: if args.averages == 0 { u32::MAX } else { args.averages },
        electronic_noise_rel_shot: if args.electronic_noise_db == f64::NEG_INFINITY {
            0.0
        } else {
            ratio_from_db(args.electronic_noise_db)
        },
        spurs,
    };
    let trace = gen_spectrum_trace(&params, pump, &freqs, quadrature, &sa, Seed(args.seed))
        .map_err(|e| e.to_string())?;
    let body = io::spectrum_csv(&trace)?;
    let repr = format!("{args:?}");
    io::emit(&body, args.out.as_deref(), |out| {
        RunManifest::new("sim spectrum", &repr, Some(args.seed), vec![], vec![out.into()])
    })
}

fn cmd_sim_polnoise(args: SimPolnoiseArgs) -> Result<(), String> {
    let series = gen_polarization_noise(
        parse_quantity(&args.duration, "s")?,
        parse_quantity(&args.rate, "Hz")?,
        args.white_std,
        args.rw_step,
        Seed(args.seed),
    )
    .map_err(|e| e.to_string())?;
    let body = io::timeseries_csv(&series);
    let repr = format!("{args:?}");
    io::emit(&body, args.out.as_deref(), |out| {
        RunManifest::new("sim polnoise", &repr, Some(args.seed), vec![], vec![out.into()])
    })
}

fn cmd_adev(args: AdevArgs, quiet: bool) -> Result<(), String> {
    let series = io::read_timeseries_csv(&args.input)?;
    let series = if args.raw {
        series
    } else {
        normalize_fractional(&series).map_err(|e| e.to_string())?
    };
    let taus = match &args.taus {
        Some(raw) => raw
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("--taus entry '{t}' is not a positive integer"))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => default_tau_grid(series.samples.len()),
    };
    let outcome = oadev(&series, &taus).map_err(|e| e.to_string())?;
    for m in &outcome.omitted_taus {
        eprintln!("warning: tau m={m} needs at least {} samples; omitted", 2 * m + 1);
    }
    info(quiet, &format!("{} tau points from {} samples", outcome.points.len(),
        series.samples.len()));
    let body = io::adev_csv(&outcome.points);
    let repr = format!("{args:?}");
    io::emit(&body, args.out.as_deref(), |out| {
        RunManifest::new("adev", &repr, None, vec![args.input.clone()], vec![out.into()])
    })
}

fn cmd_psd(args: PsdArgs) -> Result<(), String> {
    let series = io::read_timeseries_csv(&args.input)?;
    let series = if args.raw {
        series
    } else {
        normalize_fractional(&series).map_err(|e| e.to_string())?
    };
    let segment = args.segment.unwrap_or_else(|| default_segment_length(series.samples.len()));
    let window = match args.window {
        WindowArg::Hann => Window::Hann,
        WindowArg::Rectangular => Window::Rectangular,
    };
    let points =
        welch_psd(&series, segment, args.overlap, window).map_err(|e| e.to_string())?;
    let body = io::psd_csv(&points);
    let repr = format!("{args:?}");
    io::emit(&body, args.out.as_deref(), |out| {
        RunManifest::new("psd", &repr, None, vec![args.input.clone()], vec![out.into()])
    })
}

fn cmd_correct_noise(args: CorrectNoiseArgs) -> Result<(), String> {
    let mut trace = io::read_spectrum_csv(&args.input)?;
    let floor = ratio_from_db(args.floor_db);
    for (i, point) in trace.points.iter_mut().enumerate() {
        point.1 = correct_electronic_noise(point.1, floor).map_err(|e| {
            format!("{}: point {} at {} Hz: {e}", args.input, i + 1, point.0)
        })?;
    }
    let body = io::spectrum_csv(&trace)?;
    let repr = format!("{args:?}");
    io::emit(&body, args.out.as_deref(), |out| {
        RunManifest::new("correct-noise", &repr, None, vec![args.input.clone()], vec![out.into()])
    })
}
