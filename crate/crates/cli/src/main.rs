//! `detsketch`: build a sketch matrix, ingest update streams into it, decode
//! the heavy hitters and check them against ground truth.
//!
//! Exit codes: 0 success, 2 parameter error, 3 input format error,
//! 4 guarantee violated under `--verify --strict-check`.

mod report;
mod scheme;
mod state;

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use detsketch::planted::{planted, strict_zipf, zipf, PlantedShape};
use detsketch::stream::{parse_signal, parse_stream};
use detsketch::{apply, Signal, SketchVector};

use report::{Format, Report};
use scheme::{DescriptorFile, SchemeConfig, SchemeKind};

#[derive(Debug)]
pub enum Failure {
    Param(String),
    Format(String),
    Guarantee(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Param(_) => 2,
            Failure::Format(_) => 3,
            Failure::Guarantee(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Param(m) => write!(f, "parameter error: {m}"),
            Failure::Format(m) => write!(f, "input error: {m}"),
            Failure::Guarantee(m) => write!(f, "guarantee violated: {m}"),
        }
    }
}

impl From<detsketch::Error> for Failure {
    fn from(e: detsketch::Error) -> Self {
        use detsketch::Error as E;
        match e {
            E::Parameter(_) | E::Construction(_) | E::TooManySubsets { .. } => Failure::Param(e.to_string()),
            _ => Failure::Format(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Format(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "detsketch", version, about = "Deterministic linear sketches for l1 heavy hitters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a matrix and write its descriptor.
    Build {
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Descriptor path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fold an update stream into a sketch state file.
    Ingest {
        #[arg(long)]
        desc: PathBuf,
        /// Stream of `<index> <delta>` lines; `-` reads stdin.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Existing state to add the stream onto.
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Recover heavy hitters from a sketch state file.
    Decode {
        #[arg(long)]
        desc: PathBuf,
        /// Sketch state file.
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
        /// Ground-truth signal, `<index> <value>` lines.
        #[arg(long)]
        verify: Option<PathBuf>,
        /// Exit with code 4 when the verified guarantee fails.
        #[arg(long, requires = "verify")]
        strict_check: bool,
    },
    /// Time build, sketch and decode on seeded planted instances.
    Bench {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value_t = 20)]
        instances: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args)]
struct SchemeArgs {
    #[arg(long, value_enum)]
    scheme: SchemeKind,
    #[arg(long, default_value_t = 4096)]
    n: usize,
    #[arg(long, conflicts_with = "eps")]
    k: Option<usize>,
    /// Heavy-hitter threshold; sets `k = ceil(1/eps)`.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SchemeArgs {
    fn config(&self) -> Result<SchemeConfig, Failure> {
        SchemeConfig::new(self.scheme, self.n, self.k, self.eps, self.seed)
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutputArgs {
    fn emit(&self, text: &str) -> Result<(), Failure> {
        match &self.out {
            Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn load_descriptor(path: &Path) -> Result<(DescriptorFile, [u8; 32]), Failure> {
    let text = read_text(path)?;
    let file = DescriptorFile::parse(&text)?;
    Ok((file, state::descriptor_hash(text.as_bytes())))
}

fn cmd_build(args: &SchemeArgs, out: Option<&Path>) -> Result<(), Failure> {
    let config = args.config()?;
    let built = config.build()?;
    let bytes = DescriptorFile::new(config, &built).to_bytes();
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| io_failure(p, e)),
        None => io::stdout().write_all(&bytes).map_err(|e| Failure::Format(e.to_string())),
    }
}

fn cmd_ingest(desc: &Path, input: &Path, out: &Path, base: Option<&Path>) -> Result<(), Failure> {
    let (file, hash) = load_descriptor(desc)?;
    let built = file.rebuild()?;
    let phi = built.operator();
    let mut v = SketchVector::zeros(phi);
    if let Some(b) = base {
        let bytes = fs::read(b).map_err(|e| io_failure(b, e))?;
        v.values = state::decode(&bytes, &hash, phi.m())?;
    }
    let reader: Box<dyn Read> = if input == Path::new("-") {
        Box::new(io::stdin())
    } else {
        Box::new(fs::File::open(input).map_err(|e| io_failure(input, e))?)
    };
    // Prefix sums of a fresh strict stream must stay nonnegative.
    let mut running = (file.config.scheme == SchemeKind::Strict && base.is_none()).then(|| Signal::zeros(phi.n()));
    for (no, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| io_failure(input, e))?;
        let updates = parse_stream(&line, phi.n()).map_err(|e| match e {
            detsketch::Error::Format { msg, .. } => Failure::Format(format!("{}:{}: {msg}", input.display(), no + 1)),
            other => other.into(),
        })?;
        for u in &updates {
            v.ingest(phi, u)?;
            if let Some(x) = running.as_mut() {
                x.apply_update(u)?;
                if x.get(u.index as usize) < 0.0 {
                    return Err(Failure::Format(format!(
                        "{}:{}: coordinate {} goes negative in a strict stream",
                        input.display(),
                        no + 1,
                        u.index
                    )));
                }
            }
        }
    }
    fs::write(out, state::encode(&hash, &v.values)).map_err(|e| io_failure(out, e))
}

fn cmd_decode(
    desc: &Path,
    input: &Path,
    output: &OutputArgs,
    verify: Option<&Path>,
    strict_check: bool,
) -> Result<(), Failure> {
    let (file, hash) = load_descriptor(desc)?;
    let built = file.rebuild()?;
    let bytes = fs::read(input).map_err(|e| io_failure(input, e))?;
    let values = state::decode(&bytes, &hash, file.m)?;
    let decoded = built.decode(&values)?;
    let truth = match verify {
        Some(p) => Some(parse_signal(&read_text(p)?, file.config.n)?),
        None => None,
    };
    let mut report = Report::new(&file.config, &built, &decoded, truth.as_ref())?;
    if file.config.scheme == SchemeKind::WorkedExample {
        report.measurements = Some(values);
    }
    output.emit(&report.render(output.format))?;
    if strict_check {
        if let Some(v) = report.verification.as_ref().filter(|v| !v.guarantee_satisfied) {
            return Err(Failure::Guarantee(format!(
                "error {} exceeds the bound {}",
                v.measured_error, v.bound
            )));
        }
    }
    Ok(())
}

fn cmd_bench(args: &SchemeArgs, instances: u64, output: &OutputArgs) -> Result<(), Failure> {
    let config = args.config()?;
    let t0 = Instant::now();
    let built = config.build()?;
    let build_seconds = t0.elapsed().as_secs_f64();
    let phi = built.operator();
    let mut reports = Vec::new();
    let mut sketch_seconds = 0.0;
    for seed in 0..instances {
        let x = match config.scheme {
            SchemeKind::GeneralLinf => planted(config.n, config.k, &PlantedShape::standard(config.k), seed).signal,
            SchemeKind::GeneralL1l1 => zipf(config.n, 1.5, 100.0, seed),
            SchemeKind::Strict => strict_zipf(config.n, 1.2, 1000.0, seed),
            SchemeKind::WorkedExample => return Err(Failure::Param("bench does not support this scheme".into())),
        };
        let t = Instant::now();
        let v = apply(phi, &x)?;
        sketch_seconds += t.elapsed().as_secs_f64();
        let decoded = built.decode(&v.values)?;
        reports.push(Report::new(&config, &built, &decoded, Some(&x))?);
    }
    let summary = report::BenchSummary::new(&config, phi.m(), build_seconds, sketch_seconds, &reports);
    output.emit(&summary.render(output.format))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Build { scheme, out } => cmd_build(&scheme, out.as_deref()),
        Command::Ingest { desc, input, out, base } => cmd_ingest(&desc, &input, &out, base.as_deref()),
        Command::Decode { desc, input, output, verify, strict_check } => {
            cmd_decode(&desc, &input, &output, verify.as_deref(), strict_check)
        }
        Command::Bench { scheme, instances, output } => cmd_bench(&scheme, instances, &output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("detsketch: {f}");
            ExitCode::from(f.code())
        }
    }
}
