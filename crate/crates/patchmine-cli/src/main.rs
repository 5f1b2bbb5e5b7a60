//! patchmine command line.
//!
//! Subcommands: `forward` (run the dual-encoder + mining pipeline),
//! `check` (self-verification suites), `parse-gen` (generation/OCR text
//! protocols), `manifest` (dataset-mixture arithmetic).
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or grammar error,
//! 3 IO/config error. `PATCHMINE_THREADS` caps kernel parallelism
//! (0 = auto); f64 results do not depend on it.

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use patchmine::manifest::{self, Fraction, Stage};
use patchmine::pipeline::{self, RunConfig, SyntheticKind};
use patchmine::protocol;
use patchmine::tensor::Precision;
use patchmine::verify::{self, Suite};
use patchmine::EncoderConfig;

#[derive(Parser)]
#[command(
    name = "patchmine",
    version,
    about = "dual-resolution visual token mining toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum PrecisionArg {
    F32,
    #[default]
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum SyntheticArg {
    #[default]
    Noise,
    Ramp,
}

#[derive(Subcommand)]
enum Command {
    /// Run the forward pipeline and print {N, S, M, tokenCount, checksum}.
    Forward {
        /// Encoder configuration JSON file (defaults to the published
        /// 336/768/14 geometry at desk-scale widths).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for the synthetic input image.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Mining kernel precision.
        #[arg(long, value_enum, default_value_t)]
        precision: PrecisionArg,
        /// Use the 5N token extension.
        #[arg(long)]
        extended: bool,
        /// Output directory for the mined-token dump.
        #[arg(long, default_value = "patchmine-out")]
        out: PathBuf,
        /// Input image (binary PPM, P6). Synthetic input when omitted.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Synthetic input kind used when --image is absent.
        #[arg(long, value_enum, default_value_t)]
        synthetic: SyntheticArg,
    },
    /// Run a verification suite and report one line per check.
    Check {
        /// oracle | grad | shapes | extension | protocol | manifest | all
        suite: String,
    },
    /// Parse generation markup from stdin or a file (JSON out); with
    /// --emit-caption or --append-ocr, emit protocol text instead.
    ParseGen {
        /// Read input from this file instead of stdin.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Append a generation directive to the input reply.
        #[arg(long, value_name = "CAPTION", conflicts_with = "append_ocr")]
        emit_caption: Option<String>,
        /// Append an OCR reference suffix; tokens are comma-separated.
        #[arg(long, value_name = "TOKENS")]
        append_ocr: Option<String>,
    },
    /// Print the dataset-mixture manifest JSON and a per-stage table.
    Manifest {
        /// Scale factor as a fraction ("1/1000"), decimal, or integer.
        #[arg(long)]
        scale: Option<String>,
        /// Tie-break seed for largest-remainder rounding.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE_OR_GRAMMAR: u8 = 2;
const EXIT_IO_OR_CONFIG: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.exit)
        }
    }
}

struct Failure {
    exit: u8,
    message: String,
}

impl From<patchmine::Error> for Failure {
    fn from(e: patchmine::Error) -> Self {
        let exit = match e {
            // Invalid flag values are usage errors.
            patchmine::Error::Range { .. } => EXIT_USAGE_OR_GRAMMAR,
            _ => EXIT_IO_OR_CONFIG,
        };
        Failure {
            exit,
            message: e.to_string(),
        }
    }
}

impl From<protocol::ProtocolError> for Failure {
    fn from(e: protocol::ProtocolError) -> Self {
        Failure {
            exit: EXIT_USAGE_OR_GRAMMAR,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            exit: EXIT_IO_OR_CONFIG,
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Forward {
            config,
            seed,
            precision,
            extended,
            out,
            image,
            synthetic,
        } => {
            let encoder = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    serde_json::from_str::<EncoderConfig>(&text).map_err(|e| Failure {
                        exit: EXIT_IO_OR_CONFIG,
                        message: format!("{}: {e}", path.display()),
                    })?
                }
                None => EncoderConfig::default_geometry(),
            };
            let run = RunConfig {
                encoder,
                extended,
                seed,
                precision: precision.into(),
                output_dir: out,
            };
            let kind = match synthetic {
                SyntheticArg::Noise => SyntheticKind::Noise,
                SyntheticArg::Ramp => SyntheticKind::Ramp,
            };
            let input = pipeline::load_input(image.as_deref(), kind)?;
            let summary = pipeline::run_forward(&run, input)?;
            println!("{}", serde_json::to_string(&summary).expect("plain struct"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { suite } => {
            let suite = Suite::parse(&suite).ok_or_else(|| Failure {
                exit: EXIT_USAGE_OR_GRAMMAR,
                message: format!(
                    "unknown suite {suite:?}; expected oracle|grad|shapes|extension|protocol|manifest|all"
                ),
            })?;
            let outcomes = verify::run_suite(suite);
            let mut failed = 0usize;
            for o in &outcomes {
                let status = if o.passed { "ok" } else { "FAILED" };
                println!("{status} {} — {}", o.name, o.detail);
                eprintln!("{}: {} ms", o.name, o.millis);
                if !o.passed {
                    failed += 1;
                }
            }
            println!("{} checks, {} failed", outcomes.len(), failed);
            if failed == 0 {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(EXIT_CHECK_FAILED))
            }
        }
        Command::ParseGen {
            input,
            emit_caption,
            append_ocr,
        } => {
            let text = match input {
                Some(path) => std::fs::read_to_string(path)?,
                None => {
                    let mut buf = String::new();
                    std::io::stdin().read_to_string(&mut buf)?;
                    buf
                }
            };
            if let Some(caption) = emit_caption {
                let reply = strip_one_newline(&text);
                println!("{}", protocol::emit_generation(reply, &caption)?);
                return Ok(ExitCode::SUCCESS);
            }
            if let Some(tokens) = append_ocr {
                let conversation = strip_one_newline(&text);
                let tokens: Vec<String> = tokens.split(',').map(str::to_string).collect();
                println!("{}", protocol::append_ocr_tokens(conversation, &tokens)?);
                return Ok(ExitCode::SUCCESS);
            }
            let parsed = protocol::parse_generation(&text)?;
            println!("{}", serde_json::to_string(&parsed).expect("plain struct"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Manifest { scale, seed } => {
            let mut m = manifest::build_published_manifest();
            if let Some(scale) = scale {
                let f = Fraction::parse(&scale)?;
                m = manifest::scale_manifest(&m, f, seed)?;
            }
            println!("{}", serde_json::to_string(&m).expect("plain struct"));
            print_stage_table(&m);
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Inputs read from stdin or files usually end with one newline that is
/// not part of the conversation text.
fn strip_one_newline(s: &str) -> &str {
    s.strip_suffix("\r\n")
        .or_else(|| s.strip_suffix('\n'))
        .unwrap_or(s)
}

fn print_stage_table(m: &manifest::Manifest) {
    println!("{:<22} {:>8} {:>12}", "stage", "sources", "items");
    for stage in manifest::STAGES {
        let count = m.sources.iter().filter(|s| s.stage == stage).count();
        println!(
            "{:<22} {:>8} {:>12}",
            stage.to_string(),
            count,
            m.stage_total(stage)
        );
    }
    println!("{:<22} {:>8} {:>12}", "total", m.sources.len(), m.total());
    println!(
        "{:<22} {:>8} {:>12}",
        "instruct+generation",
        "",
        m.stage_total(Stage::Instruct) + m.stage_total(Stage::Generation)
    );
}
