//! Command-line front end. [`run`] is the whole program; the binary only
//! forwards `std::env::args` and exits with the returned code.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::analysis::{self, Polarity, ReactivParams, Stretch};
use crate::error::Error;
use crate::mcv::{McvKind, Normalization};
use crate::polarimetry;
use crate::scan::{self, EstimationMode, ScanOptions, VmaiMap};
use crate::simulator::{self, Scenario};
use crate::stack::{self, ScalarMap, SpeckleStack};

pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATAERR: i32 = 65;
pub const EXIT_NOINPUT: i32 = 66;
pub const EXIT_SOFTWARE: i32 = 70;

pub const THREADS_ENV: &str = "SPECKLEVAR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "specklevar", version, about = "Speckle contrast, activity and depolarization maps")]
struct Cli {
    /// Worker threads (default: $SPECKLEVAR_THREADS, else logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic complex stack and its ground-truth masks.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-channel modulus of a complex stack.
    Amplitudes {
        #[command(flatten)]
        io: InOut,
        /// Emit intensities |E|² instead of amplitudes.
        #[arg(long)]
        power: bool,
    },
    /// Stokes vectors of a dual-pol complex stack.
    Stokes {
        #[command(flatten)]
        io: InOut,
        /// Average this many consecutive frames (detector integration).
        #[arg(long, default_value_t = 1)]
        integrate: usize,
    },
    /// Coefficient-of-variation map.
    Compute(EstimatorArgs),
    /// Activity map 1/γ².
    Vmai(EstimatorArgs),
    /// Partial temporal degree of polarization.
    Dop {
        #[command(flatten)]
        io: InOut,
    },
    /// Depolarization map 1/DOP.
    Invdop {
        #[command(flatten)]
        io: InOut,
    },
    /// Change composite PNG (hue: date of max, saturation: CV, value: max).
    Reactiv {
        #[command(flatten)]
        io: InOut,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long, default_value_t = 1.0)]
        cv_sat: f64,
        #[arg(long, default_value_t = 300.0)]
        hue_span: f64,
        #[arg(long, default_value_t = 99.0)]
        value_percentile: f64,
    },
    /// Threshold a map.
    Detect {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        threshold: f64,
        #[arg(long, value_enum)]
        polarity: PolarityArg,
    },
    /// ROC curve and AUC of a map against a truth mask.
    Eval {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum)]
        polarity: PolarityArg,
    },
    /// Compare maps.
    Compare {
        #[arg(long, num_args = 2, value_names = ["A", "B"], required = true)]
        pearson: Vec<PathBuf>,
        /// Ignore pixels flagged in a `.saturated` sidecar.
        #[arg(long)]
        exclude_saturated: bool,
        /// Also write the result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// 8-bit grayscale PNG of a map.
    Render {
        #[command(flatten)]
        io: InOut,
        #[arg(long, value_enum, default_value_t = StretchArg::Minmax)]
        stretch: StretchArg,
    },
}

#[derive(Debug, Args)]
struct InOut {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimatorArgs {
    #[command(flatten)]
    io: InOut,
    #[arg(long, value_enum)]
    estimator: EstimatorArg,
    /// Channel for `--estimator single`.
    #[arg(long, default_value_t = 0)]
    channel: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Temporal)]
    mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// 1/(N-1) covariance instead of 1/N.
    #[arg(long)]
    unbiased: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    R,
    Vv,
    Vn,
    Az,
    Single,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Temporal,
    Spatial,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolarityArg {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StretchArg {
    Minmax,
    #[value(name = "p2_98")]
    P2_98,
}

impl From<PolarityArg> for Polarity {
    fn from(p: PolarityArg) -> Self {
        match p {
            PolarityArg::High => Polarity::HighIsChange,
            PolarityArg::Low => Polarity::LowIsPs,
        }
    }
}

impl From<StretchArg> for Stretch {
    fn from(s: StretchArg) -> Self {
        match s {
            StretchArg::Minmax => Stretch::MinMax,
            StretchArg::P2_98 => Stretch::Percentile(2.0, 98.0),
        }
    }
}

impl EstimatorArgs {
    fn kind(&self) -> McvKind {
        match self.estimator {
            EstimatorArg::R => McvKind::R,
            EstimatorArg::Vv => McvKind::VV,
            EstimatorArg::Vn => McvKind::VN,
            EstimatorArg::Az => McvKind::AZ,
            EstimatorArg::Single => McvKind::Single(self.channel),
        }
    }

    fn mode(&self) -> EstimationMode {
        match self.mode {
            ModeArg::Temporal => EstimationMode::Temporal,
            ModeArg::Spatial => EstimationMode::Spatial {
                window: self.window,
                frame: self.frame,
            },
        }
    }

    fn options(&self) -> ScanOptions {
        ScanOptions {
            normalization: if self.unbiased {
                Normalization::Unbiased
            } else {
                Normalization::MaxLikelihood
            },
        }
    }

    fn params(&self) -> Value {
        json!({
            "estimator": self.kind().to_string(),
            "mode": format!("{:?}", self.mode).to_lowercase(),
            "window": self.window,
            "frame": self.frame,
            "normalization": if self.unbiased { "unbiased" } else { "ml" },
        })
    }
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            kind,
            message: message.into(),
        }
    }

    fn line(&self) -> String {
        json!({"error": {"code": self.code, "kind": self.kind, "message": self.message}}).to_string()
    }
}

/// Errors while computing.
impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Precondition(_) | Error::OutOfRange { .. } | Error::Shape(_) => {
                CliError::new(EXIT_DATAERR, "precondition", msg)
            }
            Error::Io { .. } | Error::Header { .. } | Error::NonFinite { .. } => {
                CliError::new(EXIT_NOINPUT, "input", msg)
            }
            Error::Numeric(_) | Error::Image(_) => CliError::new(EXIT_SOFTWARE, "internal", msg),
        }
    }
}

fn input_error(e: Error) -> CliError {
    match e {
        Error::Precondition(_) => e.into(),
        other => CliError::new(EXIT_NOINPUT, "input", other.to_string()),
    }
}

fn output_error(e: Error) -> CliError {
    CliError::new(EXIT_SOFTWARE, "output", e.to_string())
}

fn load_stack(path: &Path) -> Result<SpeckleStack, CliError> {
    stack::read_stack(path).map_err(input_error)
}

fn load_map(path: &Path) -> Result<ScalarMap, CliError> {
    stack::read_map(path).map_err(input_error)
}

fn saturated_sidecar(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    PathBuf::from(format!("{}.saturated", s.strip_suffix(".json").unwrap_or(&s)))
}

fn base_of(path: &Path) -> String {
    let s = path.to_string_lossy();
    s.strip_suffix(".json").unwrap_or(&s).to_string()
}

/// What a subcommand produced, for the manifest.
struct Outcome {
    params: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    manifest_base: Option<String>,
}

fn json_paths(paths: &[PathBuf]) -> Value {
    Value::Array(
        paths
            .iter()
            .map(|p| Value::String(p.to_string_lossy().into_owned()))
            .collect(),
    )
}

fn header_of(base: &str) -> PathBuf {
    PathBuf::from(format!("{base}.json"))
}

fn write_map_out(map: &ScalarMap, out: &Path, outputs: &mut Vec<PathBuf>) -> Result<(), CliError> {
    stack::write_map(map, out).map_err(output_error)?;
    let base = base_of(out);
    outputs.push(header_of(&base));
    outputs.push(header_of(&format!("{base}.valid")));
    Ok(())
}

fn write_stack_out(st: &SpeckleStack, out: &Path, outputs: &mut Vec<PathBuf>) -> Result<(), CliError> {
    stack::write_stack(st, out).map_err(output_error)?;
    outputs.push(header_of(&base_of(out)));
    Ok(())
}

fn execute(cmd: &Command, stdout: &mut Vec<u8>) -> Result<Outcome, CliError> {
    let mut outputs = Vec::new();
    let outcome = |params, inputs: Vec<PathBuf>, outputs, base: &Path| Outcome {
        params,
        inputs,
        outputs,
        seed: None,
        manifest_base: Some(base_of(base)),
    };
    match cmd {
        Command::Simulate { scenario, out, seed } => {
            let text = fs::read_to_string(scenario)
                .map_err(|e| CliError::new(EXIT_NOINPUT, "input", format!("{}: {e}", scenario.display())))?;
            let mut sc = Scenario::from_json(&text).map_err(input_error)?;
            if let Some(s) = seed {
                sc.seed = *s;
            }
            let st = simulator::simulate(&sc)?;
            let (change, ps) = simulator::ground_truth(&sc)?;
            write_stack_out(&st, out, &mut outputs)?;
            let base = base_of(out);
            write_map_out(&change, Path::new(&format!("{base}_truth_change")), &mut outputs)?;
            write_map_out(&ps, Path::new(&format!("{base}_truth_ps")), &mut outputs)?;
            let mut o = outcome(
                serde_json::to_value(&sc).unwrap(),
                vec![scenario.clone()],
                outputs,
                out,
            );
            o.seed = Some(sc.seed);
            Ok(o)
        }
        Command::Amplitudes { io, power } => {
            let st = load_stack(&io.input)?;
            let res = if *power {
                polarimetry::intensities(&st)?
            } else {
                polarimetry::amplitudes(&st)?
            };
            write_stack_out(&res, &io.out, &mut outputs)?;
            Ok(outcome(json!({"power": power}), vec![io.input.clone()], outputs, &io.out))
        }
        Command::Stokes { io, integrate } => {
            let st = load_stack(&io.input)?;
            let mut res = polarimetry::to_stokes(&st)?;
            if *integrate > 1 {
                res = res.integrate_time(*integrate)?;
            }
            write_stack_out(&res, &io.out, &mut outputs)?;
            Ok(outcome(json!({"integrate": integrate}), vec![io.input.clone()], outputs, &io.out))
        }
        Command::Compute(args) => {
            let st = load_stack(&args.io.input)?;
            let map = scan::compute_map_with(&st, args.kind(), args.mode(), args.options())?;
            write_map_out(&map, &args.io.out, &mut outputs)?;
            Ok(outcome(args.params(), vec![args.io.input.clone()], outputs, &args.io.out))
        }
        Command::Vmai(args) => {
            let st = load_stack(&args.io.input)?;
            let v = scan::compute_vmai_map_with(&st, args.kind(), args.mode(), args.options())?;
            write_map_out(&v.map, &args.io.out, &mut outputs)?;
            let sat = saturated_sidecar(&args.io.out);
            stack::write_map(&v.saturation_map(), &sat).map_err(output_error)?;
            outputs.push(header_of(&base_of(&sat)));
            Ok(outcome(args.params(), vec![args.io.input.clone()], outputs, &args.io.out))
        }
        Command::Dop { io } => {
            let st = load_stack(&io.input)?;
            let map = polarimetry::temporal_dop(&st)?;
            write_map_out(&map, &io.out, &mut outputs)?;
            Ok(outcome(json!({}), vec![io.input.clone()], outputs, &io.out))
        }
        Command::Invdop { io } => {
            let dop = load_map(&io.input)?;
            let map = polarimetry::inverse_dop(&dop);
            write_map_out(&map, &io.out, &mut outputs)?;
            Ok(outcome(
                json!({"dop_floor": polarimetry::DOP_FLOOR}),
                vec![io.input.clone()],
                outputs,
                &io.out,
            ))
        }
        Command::Reactiv {
            io,
            channel,
            cv_sat,
            hue_span,
            value_percentile,
        } => {
            let mut st = load_stack(&io.input)?;
            if st.shape().n_chan > 1 {
                st = st.slice_channel(*channel)?;
            }
            let params = ReactivParams {
                cv_sat: *cv_sat,
                hue_span: *hue_span,
                value_percentile: *value_percentile,
            };
            let img = analysis::reactiv(&st, params)?.to_rgb();
            analysis::save_png(&img, &io.out).map_err(output_error)?;
            outputs.push(io.out.clone());
            Ok(outcome(
                json!({"channel": channel, "cv_sat": cv_sat, "hue_span": hue_span,
                       "value_percentile": value_percentile}),
                vec![io.input.clone()],
                outputs,
                &io.out,
            ))
        }
        Command::Detect { io, threshold, polarity } => {
            let map = load_map(&io.input)?;
            let det = analysis::detect(&map, (*polarity).into(), *threshold)?;
            write_map_out(&det, &io.out, &mut outputs)?;
            Ok(outcome(
                json!({"threshold": threshold, "polarity": format!("{polarity:?}").to_lowercase()}),
                vec![io.input.clone()],
                outputs,
                &io.out,
            ))
        }
        Command::Eval { io, truth, polarity } => {
            let map = load_map(&io.input)?;
            let t = load_map(truth)?;
            let curve = analysis::roc(&map, &t, (*polarity).into())?;
            let tm = t.to_mask();
            let pos = (0..map.len()).filter(|i| map.valid[*i] && tm[*i]).count();
            let neg = map.valid_count() - pos;
            let base = base_of(&io.out);
            if let Some(dir) = Path::new(&base).parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| output_error(Error::io(dir, e)))?;
            }
            let csv = PathBuf::from(format!("{base}.csv"));
            let js = PathBuf::from(format!("{base}.json"));
            fs::write(&csv, curve.to_csv()).map_err(|e| output_error(Error::io(&csv, e)))?;
            fs::write(&js, curve.summary_json(pos, neg)).map_err(|e| output_error(Error::io(&js, e)))?;
            outputs.extend([csv, js]);
            writeln!(stdout, "{:?}", curve.auc).ok();
            Ok(outcome(
                json!({"polarity": format!("{polarity:?}").to_lowercase(), "auc": curve.auc}),
                vec![io.input.clone(), truth.clone()],
                outputs,
                &io.out,
            ))
        }
        Command::Compare {
            pearson,
            exclude_saturated,
            out,
        } => {
            let mut maps = Vec::with_capacity(2);
            for p in pearson {
                let mut m = load_map(p)?;
                let sat = saturated_sidecar(p);
                if *exclude_saturated && header_of(&base_of(&sat)).exists() {
                    let mask = load_map(&sat)?;
                    m = VmaiMap {
                        saturated: mask.to_mask(),
                        map: m,
                    }
                    .unsaturated();
                }
                maps.push(m);
            }
            let r = analysis::pearson(&maps[0], &maps[1])?;
            writeln!(stdout, "{r:?}").ok();
            if let Some(out) = out {
                let path = header_of(&base_of(out));
                let text = format!("{}\n", serde_json::to_string_pretty(&json!({"pearson": r})).unwrap());
                fs::write(&path, text).map_err(|e| output_error(Error::io(&path, e)))?;
                outputs.push(path);
            }
            Ok(Outcome {
                params: json!({"exclude_saturated": exclude_saturated, "pearson": r}),
                inputs: pearson.clone(),
                outputs,
                seed: None,
                manifest_base: out.as_deref().map(base_of),
            })
        }
        Command::Render { io, stretch } => {
            let map = load_map(&io.input)?;
            let img = analysis::render_gray(&map, (*stretch).into())?;
            analysis::save_png(&img, &io.out).map_err(output_error)?;
            outputs.push(io.out.clone());
            Ok(outcome(
                json!({"stretch": format!("{stretch:?}").to_lowercase()}),
                vec![io.input.clone()],
                outputs,
                &io.out,
            ))
        }
    }
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Simulate { .. } => "simulate",
        Command::Amplitudes { .. } => "amplitudes",
        Command::Stokes { .. } => "stokes",
        Command::Compute(_) => "compute",
        Command::Vmai(_) => "vmai",
        Command::Dop { .. } => "dop",
        Command::Invdop { .. } => "invdop",
        Command::Reactiv { .. } => "reactiv",
        Command::Detect { .. } => "detect",
        Command::Eval { .. } => "eval",
        Command::Compare { .. } => "compare",
        Command::Render { .. } => "render",
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(CliError::new(EXIT_USAGE, "usage", "--threads must be at least 1"));
        }
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::new(EXIT_USAGE, "usage", format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Run the program on `argv` (including the program name), writing normal
/// output to `stdout` and the machine-readable error line to `stderr`.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(stdout, "{e}").ok();
                return 0;
            }
            let err = CliError::new(EXIT_USAGE, "usage", e.to_string().trim().to_string());
            writeln!(stderr, "{}", err.line()).ok();
            return err.code;
        }
    };
    let started = Instant::now();
    let result = resolve_threads(cli.threads).and_then(|threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::new(EXIT_SOFTWARE, "internal", e.to_string()))?;
        let mut printed = Vec::new();
        let outcome = pool.install(|| execute(&cli.command, &mut printed));
        stdout.write_all(&printed).ok();
        Ok((threads, outcome?))
    });
    match result {
        Ok((threads, outcome)) => {
            if let Some(base) = &outcome.manifest_base {
                let manifest = json!({
                    "tool": "specklevar",
                    "version": env!("CARGO_PKG_VERSION"),
                    "subcommand": subcommand_name(&cli.command),
                    "argv": argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
                    "params": outcome.params,
                    "inputs": json_paths(&outcome.inputs),
                    "outputs": json_paths(&outcome.outputs),
                    "seed": outcome.seed,
                    "threads": threads,
                    "wall_time_s": started.elapsed().as_secs_f64(),
                });
                let path = PathBuf::from(format!("{base}.manifest.json"));
                let text = format!("{}\n", serde_json::to_string_pretty(&manifest).unwrap());
                if let Err(e) = fs::write(&path, text) {
                    let err = output_error(Error::io(&path, e));
                    writeln!(stderr, "{}", err.line()).ok();
                    return err.code;
                }
            }
            0
        }
        Err(err) => {
            writeln!(stderr, "{}", err.line()).ok();
            err.code
        }
    }
}

/// Run with the process's standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}
