//! `amfm`: run the AM-to-FM chain and its measurements from the shell.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amfm::analysis::{compute_spectrum, measure_harmonics, Window};
use amfm::chain::{recover_audio, run_convert, run_roundtrip, ChainConfig, ChainInput, StageData};
use amfm::demodulation::demodulate_am;
use amfm::filters::{
    design_deemphasis, design_preemphasis, design_single_pole_lowpass, fra_sweep, FilterSpec, FraConfig,
};
use amfm::io::{load_iq, load_raw_real, load_wav, save_iq, save_raw_real, save_wav, BitDepth};
use amfm::modulation::{am_modulate, fm_modulate, FmParams};
use amfm::signal::{generate_tone, ToneSpec};
use amfm::vco::{tuning_curve, VcoOutput};
use amfm::{ComplexSignal, RealSignal};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amfm", version, about = "AM-to-FM conversion chain simulator")]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key (repeatable), e.g. --set am.depth=0.5
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audio (or an AM waveform) in, FM IQ out.
    Convert(ConvertArgs),
    /// Convert, receive, and compare with the input.
    Roundtrip(RoundtripArgs),
    /// Swept-sine frequency response of a chain filter.
    Sweep(SweepArgs),
    /// Averaged spectrum and harmonic report.
    Spectrum(SpectrumArgs),
    /// VCO frequency versus bias.
    TuningCurve(TuningArgs),
    /// AM- or FM-modulate audio.
    Modulate(ModulateArgs),
    /// Recover audio from an AM waveform or FM IQ.
    Demodulate(DemodulateArgs),
    /// Print the effective configuration.
    Config,
}

#[derive(Args)]
struct SourceArgs {
    /// Input file. Without it the config's message tone is used.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Sample rate of a headerless input file.
    #[arg(long)]
    fs: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKind {
    Audio,
    Am,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// What the input holds.
    #[arg(long, value_enum, default_value = "audio")]
    input_kind: InputKind,
    /// IQ (or raw real) output file.
    #[arg(short, long)]
    output: PathBuf,
    /// Write every intermediate stage into this directory.
    #[arg(long, value_name = "DIR")]
    dump_stages: Option<PathBuf>,
}

#[derive(Args)]
struct RoundtripArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Save the recovered audio as float WAV.
    #[arg(long)]
    recovered: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepTarget {
    Preemphasis,
    Deemphasis,
    Lowpass,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    target: SweepTarget,
    #[arg(long, default_value_t = 10.0)]
    from: f64,
    #[arg(long, default_value_t = 50_000.0)]
    to: f64,
    #[arg(long, default_value_t = 10)]
    ppd: usize,
    /// Sweep sample rate.
    #[arg(long, default_value_t = 192_000.0)]
    fs: f64,
    /// CSV destination; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// WAV, or headerless IQ with --iq.
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(long)]
    iq: bool,
    #[arg(long)]
    fs: Option<f64>,
    /// Generate a test tone at this frequency instead of reading a file.
    #[arg(long, conflicts_with = "input")]
    tone: Option<f64>,
    /// Add a harmonic to the generated tone, ORDER:DBC (repeatable).
    #[arg(long = "harmonic", value_name = "ORDER:DBC", requires = "tone")]
    harmonics: Vec<String>,
    #[arg(long, default_value_t = 16384)]
    nfft: usize,
    #[arg(long, default_value = "hann")]
    window: String,
    /// Fundamental for the harmonic report; the spectral peak by default.
    #[arg(long)]
    fundamental: Option<f64>,
    #[arg(long, default_value_t = 5)]
    max_order: usize,
    /// Spectrum CSV destination.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Harmonic report CSV destination.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TuningArgs {
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    #[arg(long, default_value_t = 12.0)]
    to: f64,
    #[arg(long, default_value_t = 25)]
    steps: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Am,
    Fm,
}

#[derive(Args)]
struct ModulateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum, default_value = "am")]
    scheme: Scheme,
    /// FM deviation per unit of audio.
    #[arg(long, default_value_t = 75e3)]
    deviation: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct DemodulateArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "am")]
    scheme: Scheme,
    /// Sample rate of a headerless input; the config's AM or IQ rate otherwise.
    #[arg(long)]
    fs: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 1 for bad input or files, 2 for faults inside the library.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<amfm::Error>() {
            return if e.is_user_error() { 1 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    1
}

fn load_config(cli: &Cli) -> anyhow::Result<ChainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ChainConfig::parse(&text)?
        }
        None => ChainConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Convert(a) => convert(&cfg, a),
        Command::Roundtrip(a) => roundtrip(&cfg, a),
        Command::Sweep(a) => sweep(&cfg, a),
        Command::Spectrum(a) => spectrum(a),
        Command::TuningCurve(a) => tuning(&cfg, a),
        Command::Modulate(a) => modulate(&cfg, a),
        Command::Demodulate(a) => demodulate(&cfg, a),
        Command::Config => {
            print!("{}", cfg.to_kv_string());
            Ok(())
        }
    }
}

fn is_wav(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// WAV by extension, headerless f32 otherwise.
fn read_real(path: &Path, fs: Option<f64>) -> anyhow::Result<RealSignal> {
    if is_wav(path) {
        return Ok(load_wav(path)?);
    }
    let Some(fs) = fs else {
        bail!("{} has no header; pass --fs", path.display());
    };
    Ok(load_raw_real(path, fs)?)
}

fn source_signal(cfg: &ChainConfig, src: &SourceArgs, default_fs: f64) -> anyhow::Result<RealSignal> {
    match &src.input {
        Some(p) => read_real(p, src.fs.or(Some(default_fs))),
        None => Ok(cfg.message_tone()?),
    }
}

fn write_text(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            // A closed pipe (`| head`) is not a failure.
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn write_real(signal: &RealSignal, path: &Path) -> anyhow::Result<()> {
    if is_wav(path) {
        save_wav(signal, path, BitDepth::Float32)?;
    } else {
        save_raw_real(signal, path)?;
    }
    Ok(())
}

fn convert(cfg: &ChainConfig, a: ConvertArgs) -> anyhow::Result<()> {
    let input = match a.input_kind {
        InputKind::Audio => ChainInput::Audio(source_signal(cfg, &a.source, cfg.audio_sample_rate_hz)?),
        InputKind::Am => {
            let Some(p) = &a.source.input else {
                bail!("--input-kind am needs --input");
            };
            ChainInput::Am(read_real(p, a.source.fs.or(Some(cfg.am_sample_rate_hz)))?)
        }
    };
    let out = run_convert(input, cfg, a.dump_stages.is_some())?;
    match &out.output {
        VcoOutput::Baseband(iq) => {
            save_iq(iq, &a.output)?;
            println!(
                "wrote {} IQ samples at {} Hz, centered on {} Hz, to {}",
                iq.len(),
                iq.sample_rate_hz(),
                out.center_hz,
                a.output.display()
            );
        }
        VcoOutput::Real(x) => {
            save_raw_real(x, &a.output)?;
            println!(
                "wrote {} real samples at {} Hz to {}",
                x.len(),
                x.sample_rate_hz(),
                a.output.display()
            );
        }
    }
    if let Some(dir) = &a.dump_stages {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, stage) in out.stages.iter().enumerate() {
            let path = match &stage.data {
                StageData::Real(x) => {
                    let p = dir.join(format!("{:02}_{}.wav", i + 1, stage.name));
                    save_wav(x, &p, BitDepth::Float32)?;
                    p
                }
                StageData::Complex(z) => {
                    let p = dir.join(format!("{:02}_{}.iq", i + 1, stage.name));
                    save_iq(z, &p)?;
                    p
                }
            };
            log::info!("stage {} -> {}", stage.name, path.display());
        }
    }
    print_warnings(&out.warnings);
    Ok(())
}

fn print_warnings(warnings: &[String]) {
    if warnings.is_empty() {
        return;
    }
    eprintln!("{} warning(s):", warnings.len());
    for w in warnings {
        eprintln!("  {w}");
    }
}

fn roundtrip(cfg: &ChainConfig, a: RoundtripArgs) -> anyhow::Result<()> {
    let audio = source_signal(cfg, &a.source, cfg.audio_sample_rate_hz)?;
    let report = run_roundtrip(&audio, cfg)?;
    print!("{}", report.summary());
    if let Some(p) = &a.recovered {
        save_wav(&report.recovered, p, BitDepth::Float32)?;
    }
    print_warnings(&report.warnings);
    Ok(())
}

fn sweep(cfg: &ChainConfig, a: SweepArgs) -> anyhow::Result<()> {
    let (spec, settle): (FilterSpec, f64) = match a.target {
        SweepTarget::Preemphasis => (design_preemphasis(cfg.emphasis, a.fs)?, 5.0 * cfg.emphasis.tau1_s),
        SweepTarget::Deemphasis => (design_deemphasis(cfg.emphasis, a.fs)?, 5.0 * cfg.emphasis.tau1_s),
        SweepTarget::Lowpass => (
            design_single_pole_lowpass(cfg.filter_r_ohms, cfg.filter_c_f, a.fs)?,
            5.0 * cfg.filter_r_ohms * cfg.filter_c_f,
        ),
    };
    let fra = FraConfig::new(a.from, a.to, a.ppd, a.fs).with_settle_time(settle);
    let result = fra_sweep(|x| spec.filter(x), &fra)?;
    write_text(a.output.as_deref(), &result.to_csv())
}

fn parse_harmonic(s: &str) -> anyhow::Result<(usize, f64)> {
    let (order, dbc) = s
        .split_once(':')
        .with_context(|| format!("harmonic `{s}` is not ORDER:DBC"))?;
    Ok((order.trim().parse()?, dbc.trim().parse()?))
}

fn spectrum(a: SpectrumArgs) -> anyhow::Result<()> {
    let window: Window = a.window.parse()?;
    let spec = if let Some(f0) = a.tone {
        let fs = a.fs.unwrap_or(48_000.0);
        let duration = (a.nfft * 4) as f64 / fs;
        let mut x = generate_tone(ToneSpec::new(f0, 1.0), duration, fs)?;
        for h in &a.harmonics {
            let (order, dbc) = parse_harmonic(h)?;
            let extra = generate_tone(ToneSpec::new(f0 * order as f64, 10f64.powf(dbc / 20.0)), duration, fs)?;
            x = RealSignal::new(fs, x.samples().iter().zip(extra.samples()).map(|(p, q)| p + q).collect())?;
        }
        compute_spectrum(&x, a.nfft, window)?
    } else {
        let Some(path) = &a.input else {
            bail!("spectrum needs --input or --tone");
        };
        if a.iq {
            let Some(fs) = a.fs else {
                bail!("--iq needs --fs");
            };
            let iq: ComplexSignal = load_iq(path, fs, 0.0)?;
            compute_spectrum(&iq, a.nfft, window)?
        } else {
            compute_spectrum(&read_real(path, a.fs)?, a.nfft, window)?
        }
    };
    write_text(a.output.as_deref(), &spec.to_csv())?;
    let f0 = a.fundamental.or(a.tone).unwrap_or_else(|| spec.peak_frequency());
    match measure_harmonics(&spec, f0, a.max_order) {
        Ok(rep) => {
            eprintln!("{rep}");
            if let Some(p) = &a.report {
                fs::write(p, rep.to_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Err(e) if a.report.is_none() => eprintln!("no harmonic report: {e}"),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn tuning(cfg: &ChainConfig, a: TuningArgs) -> anyhow::Result<()> {
    let vco = cfg.vco_config()?;
    let curve = tuning_curve(&vco, a.from, a.to, a.steps)?;
    write_text(a.output.as_deref(), &curve.to_csv())
}

fn modulate(cfg: &ChainConfig, a: ModulateArgs) -> anyhow::Result<()> {
    let audio = source_signal(cfg, &a.source, cfg.audio_sample_rate_hz)?;
    match a.scheme {
        Scheme::Am => {
            let am = am_modulate(&audio.resample(cfg.am_sample_rate_hz)?, cfg.am)?;
            write_real(&am, &a.output)?;
            println!("wrote {} AM samples at {} Hz", am.len(), am.sample_rate_hz());
        }
        Scheme::Fm => {
            let at_iq = audio.resample(cfg.iq_sample_rate_hz)?;
            let iq = fm_modulate(&at_iq, FmParams::new(0.0, a.deviation))?;
            save_iq(&iq, &a.output)?;
            println!("wrote {} IQ samples at {} Hz", iq.len(), iq.sample_rate_hz());
        }
    }
    Ok(())
}

fn demodulate(cfg: &ChainConfig, a: DemodulateArgs) -> anyhow::Result<()> {
    let audio = match a.scheme {
        Scheme::Am => {
            let am = read_real(&a.input, a.fs.or(Some(cfg.am_sample_rate_hz)))?;
            let lpf = design_single_pole_lowpass(cfg.filter_r_ohms, cfg.filter_c_f, am.sample_rate_hz())?;
            demodulate_am(&am, cfg.opamp, &lpf)?
                .resample(cfg.audio_sample_rate_hz)?
                .remove_dc()
        }
        Scheme::Fm => {
            let iq = load_iq(&a.input, a.fs.unwrap_or(cfg.iq_sample_rate_hz), 0.0)?;
            recover_audio(&iq, cfg)?
        }
    };
    // Audio files carry a normalized level; peak at half scale.
    let peak = audio.peak();
    let out = if peak > 0.0 { audio.scaled(0.5 / peak)? } else { audio };
    write_real(&out, &a.output)?;
    println!("wrote {} audio samples at {} Hz", out.len(), out.sample_rate_hz());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_spec() {
        assert_eq!(parse_harmonic("3:-15").unwrap(), (3, -15.0));
        assert_eq!(parse_harmonic(" 2 : -40.5 ").unwrap(), (2, -40.5));
        assert!(parse_harmonic("3").is_err());
        assert!(parse_harmonic("x:-1").is_err());
    }

    #[test]
    fn wav_by_extension() {
        assert!(is_wav(Path::new("a/b.WAV")));
        assert!(!is_wav(Path::new("b.iq")));
        assert!(!is_wav(Path::new("wav")));
    }

    #[test]
    fn library_errors_map_to_exit_codes() {
        let io = anyhow::Error::from(std::io::Error::other("x"));
        assert_eq!(exit_code(&io), 1);
        let bad_cfg = ChainConfig::default().apply_override("nope").unwrap_err();
        assert_eq!(exit_code(&anyhow::Error::from(bad_cfg)), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
