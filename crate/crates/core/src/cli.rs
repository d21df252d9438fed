//! Command-line interface. Exit codes: 0 success, 1 runtime failure,
//! 2 invalid input (arguments, configuration or input files).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use crate::attention::AttentionVariant;
use crate::autodiff::{gradcheck, SpikeMode};
use crate::config::{ConfigError, RunConfig};
use crate::encoder::{accumulate_events, load_events, write_frame_csv, EventFormat};
use crate::energy::{profile_attention, EnergyReport, PAPER_SHAPE};
use crate::error::Error;
use crate::pipeline::{diversity, simulate, write_simulation};
use crate::train::{train, write_loss_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "tde-snn", version, about = "Spiking network engine with temporal dynamics enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the enhanced block over several rounds and write raster,
    /// histogram, ledger and coefficient trajectory files.
    Simulate { config: PathBuf },
    /// Operation counts and energy of an attention variant.
    #[command(group(ArgGroup::new("extent").required(true).args(["paper_shape", "shape"])))]
    Energy {
        #[arg(long, value_enum, required_unless_present = "compare")]
        variant: Option<Variant>,
        /// Use the reference shape 4,128,80,40.
        #[arg(long)]
        paper_shape: bool,
        /// Feature map shape `T,C,H,W`.
        #[arg(long, value_parser = parse_shape)]
        shape: Option<[usize; 4]>,
        /// Report both variants and the energy ratio of sda to tcsa.
        #[arg(long)]
        compare: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare firing-pattern diversity of the baseline and enhanced paths.
    Diversity {
        config: PathBuf,
        /// Spiking layer to analyze (0 = encoder); defaults to the config's.
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Autodiff against finite differences on a small seeded network.
    Gradcheck {
        #[arg(long, default_value = "relaxed", value_parser = parse_mode)]
        mode: SpikeMode,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Train the toy box regressor with and without enhancement.
    TrainToy { config: PathBuf },
    /// Accumulate an event stream into a single frame CSV.
    EventsToFrame {
        input: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: EventFormat,
        #[arg(long)]
        out: PathBuf,
        /// Half-open timestamp window `start,end`; all events by default.
        #[arg(long, value_parser = parse_window)]
        window: Option<[u64; 2]>,
        /// Frame size `HxW`; inferred from the largest coordinates by default.
        #[arg(long, value_parser = parse_size)]
        size: Option<[usize; 2]>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Tcsa,
    Sda,
}

impl From<Variant> for AttentionVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Tcsa => AttentionVariant::Tcsa,
            Variant::Sda => AttentionVariant::Sda,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

fn parse_list<const N: usize, T: std::str::FromStr>(s: &str, sep: char, what: &str) -> Result<[T; N], String> {
    let parts: Vec<&str> = s.split(sep).collect();
    if parts.len() != N {
        return Err(format!("expected {what}, got {s:?}"));
    }
    let mut out = Vec::with_capacity(N);
    for p in parts {
        out.push(p.trim().parse().map_err(|_| format!("expected {what}, got {s:?}"))?);
    }
    out.try_into().map_err(|_| unreachable!())
}

fn parse_shape(s: &str) -> Result<[usize; 4], String> {
    let shape: [usize; 4] = parse_list(s, ',', "T,C,H,W")?;
    if shape.contains(&0) {
        return Err(format!("every extent must be positive, got {s:?}"));
    }
    Ok(shape)
}

fn parse_window(s: &str) -> Result<[u64; 2], String> {
    let w: [u64; 2] = parse_list(s, ',', "start,end")?;
    if w[0] >= w[1] {
        return Err(format!("window start must be below its end, got {s:?}"));
    }
    Ok(w)
}

fn parse_size(s: &str) -> Result<[usize; 2], String> {
    let size: [usize; 2] = parse_list(s, 'x', "HxW")?;
    if size.contains(&0) {
        return Err(format!("frame extents must be positive, got {s:?}"));
    }
    Ok(size)
}

fn parse_mode(s: &str) -> Result<SpikeMode, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<EventFormat, String> {
    s.parse()
}

/// A failed command: exit code and message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::invalid(format!("invalid configuration: {e}"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::runtime(e)
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    Ok(RunConfig::load(path)?)
}

/// Errors while reading user-provided inputs are invalid input.
fn input_error(e: Error) -> Failure {
    match e {
        Error::Parse { .. } | Error::InvalidEvent { .. } | Error::Io { .. } | Error::InvalidArgument { .. } => {
            Failure::invalid(e)
        }
        other => Failure::runtime(other),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::runtime(format!("cannot write output: {e}")))
}

fn cmd_simulate(config: &Path, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(config)?;
    if let Some(ev) = &cfg.input.events {
        load_events(&ev.path, ev.format).map_err(input_error)?;
    }
    let sim = simulate(&cfg)?;
    write_simulation(&sim, &cfg.output_dir)?;
    emit(
        out,
        &format!(
            "wrote {} rounds to {}; final alpha {:?}\n",
            cfg.rounds,
            cfg.output_dir.display(),
            sim.alpha_trajectory.last().expect("at least one entry")
        ),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_energy(
    variant: Option<Variant>,
    paper_shape: bool,
    shape: Option<[usize; 4]>,
    compare: bool,
    seed: u64,
    format: Format,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let shape = if paper_shape { PAPER_SHAPE } else { shape.expect("clap enforces one extent") };
    let reports = if compare {
        let tcsa = profile_attention(AttentionVariant::Tcsa, shape, seed)?;
        let sda = profile_attention(AttentionVariant::Sda, shape, seed)?;
        let ratio = crate::energy::compare(&tcsa, &sda).ratio;
        vec![
            EnergyReport::new(AttentionVariant::Tcsa, shape, tcsa.total()),
            EnergyReport {
                ratio_vs_baseline: ratio,
                ..EnergyReport::new(AttentionVariant::Sda, shape, sda.total())
            },
        ]
    } else {
        let v: AttentionVariant = variant.expect("clap enforces a variant").into();
        vec![EnergyReport::new(v, shape, profile_attention(v, shape, seed)?.total())]
    };
    let text = match format {
        Format::Csv => {
            let mut s = format!("{}\n", EnergyReport::CSV_HEADER);
            for r in &reports {
                s.push_str(&r.csv_row());
                s.push('\n');
            }
            s
        }
        Format::Json if compare => {
            let doc = serde_json::json!({
                "reports": reports,
                "ratio": reports[1].ratio_vs_baseline,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("serializes"))
        }
        Format::Json => format!("{}\n", reports[0].to_json()),
    };
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::runtime(Error::io(p, e))),
        None => emit(out, &text),
    }
}

fn cmd_diversity(config: &Path, layer: Option<usize>, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(config)?;
    let layer = layer.unwrap_or(cfg.layer);
    if layer >= crate::config::SPIKING_LAYERS {
        return Err(Failure::invalid(format!(
            "--layer {layer} out of range: the block has {} spiking layers (0 = encoder)",
            crate::config::SPIKING_LAYERS
        )));
    }
    if let Some(ev) = &cfg.input.events {
        load_events(&ev.path, ev.format).map_err(input_error)?;
    }
    let report = diversity(&cfg, layer)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Failure::runtime(Error::io(&cfg.output_dir, e)))?;
    let path = cfg.output_dir.join("diversity.json");
    let json = format!("{}\n", report.to_json());
    std::fs::write(&path, &json).map_err(|e| Failure::runtime(Error::io(path, e)))?;
    emit(out, &json)?;
    emit(out, &format!("{}\n", report.summary_line()))
}

fn cmd_gradcheck(mode: SpikeMode, h: f64, seeds: u64, out: &mut dyn Write) -> CmdResult {
    if mode == SpikeMode::Spiking {
        return Err(Failure::invalid(
            "gradcheck refuses spiking mode: the hard threshold is discontinuous, so finite \
             differences do not approximate the straight-through gradient; use --mode relaxed",
        ));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Failure::invalid(format!("--h must be positive, got {h}")));
    }
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let r = gradcheck(seed, h, mode)?;
        emit(
            out,
            &format!(
                "seed {seed}: relative error {:.3e} ({}), elementwise {:.3e}, {} coordinates\n",
                r.max_rel_error, r.worst, r.max_elementwise_error, r.coordinates
            ),
        )?;
        worst = worst.max(r.max_rel_error);
    }
    emit(out, &format!("max relative error {worst:.3e} (h = {h:e})\n"))?;
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Failure::runtime(format!(
            "gradient check failed: {worst:.3e} >= {GRADCHECK_TOLERANCE:e}"
        )))
    }
}

fn cmd_train_toy(config: &Path, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(config)?;
    let tde = train(cfg.run_spec(true), cfg.train.clone())?;
    let baseline = train(cfg.run_spec(false), cfg.train.clone())?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Failure::runtime(Error::io(&cfg.output_dir, e)))?;
    let path = cfg.output_dir.join("loss.csv");
    let mut csv = Vec::new();
    write_loss_csv(&tde, &baseline, &mut csv)?;
    std::fs::write(&path, csv).map_err(|e| Failure::runtime(Error::io(path, e)))?;
    let window = cfg.train.smoothing_window;
    let (t0, t1) = tde.smoothed_ends(window);
    let (b0, b1) = baseline.smoothed_ends(window);
    let doc = serde_json::json!({
        "steps": cfg.train.steps,
        "smoothing_window": window,
        "tde": {"initial": t0, "final": t1},
        "baseline": {"initial": b0, "final": b1},
    });
    emit(out, &format!("{doc}\n"))
}

fn cmd_events_to_frame(
    input: &Path,
    format: EventFormat,
    path: &Path,
    window: Option<[u64; 2]>,
    size: Option<[usize; 2]>,
) -> CmdResult {
    let events = load_events(input, format).map_err(input_error)?;
    let [h, w] = size.unwrap_or_else(|| {
        let h = events.iter().map(|e| e.y as usize + 1).max().unwrap_or(0);
        let w = events.iter().map(|e| e.x as usize + 1).max().unwrap_or(0);
        [h, w]
    });
    let window = match window {
        Some([a, b]) => a..b,
        None => 0..events.iter().map(|e| e.t).max().map_or(1, |t| t + 1),
    };
    let frame = accumulate_events(&events, h, w, window).map_err(input_error)?;
    let mut csv = Vec::new();
    write_frame_csv(&frame, &mut csv).expect("write to memory");
    std::fs::write(path, csv).map_err(|e| Failure::runtime(Error::io(path, e)))
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CmdResult {
    match cli.command {
        Command::Simulate { config } => cmd_simulate(&config, out),
        Command::Energy {
            variant,
            paper_shape,
            shape,
            compare,
            seed,
            format,
            out: path,
        } => cmd_energy(variant, paper_shape, shape, compare, seed, format, path.as_deref(), out),
        Command::Diversity { config, layer } => cmd_diversity(&config, layer, out),
        Command::Gradcheck { mode, h, seeds } => cmd_gradcheck(mode, h, seeds, out),
        Command::TrainToy { config } => cmd_train_toy(&config, out),
        Command::EventsToFrame {
            input,
            format,
            out: path,
            window,
            size,
        } => cmd_events_to_frame(&input, format, &path, window, size),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut full = vec!["tde-snn"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn value_parsers() {
        assert_eq!(parse_shape("4,128,80,40").unwrap(), [4, 128, 80, 40]);
        assert!(parse_shape("4,0,1,1").is_err());
        assert!(parse_shape("4,1,1").is_err());
        assert_eq!(parse_window("3,9").unwrap(), [3, 9]);
        assert!(parse_window("9,3").is_err());
        assert_eq!(parse_size("2x3").unwrap(), [2, 3]);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_args(&[]).0, EXIT_INVALID);
        assert_eq!(run_args(&["energy", "--variant", "sda"]).0, EXIT_INVALID);
        assert_eq!(run_args(&["energy", "--variant", "none", "--shape", "1,1,1,1"]).0, EXIT_INVALID);
        assert_eq!(run_args(&["gradcheck", "--mode", "soft"]).0, EXIT_INVALID);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn gradcheck_refuses_spiking_and_bad_step() {
        let (code, _, err) = run_args(&["gradcheck", "--mode", "spiking"]);
        assert_eq!(code, EXIT_INVALID);
        assert!(err.contains("relaxed"));
        assert_eq!(run_args(&["gradcheck", "--h", "0"]).0, EXIT_INVALID);
    }

    #[test]
    fn missing_config_is_invalid_input() {
        assert_eq!(run_args(&["simulate", "/nonexistent/run.json"]).0, EXIT_INVALID);
    }
}
