use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use fieldblast::{
    emit_report, gen_jolt_or, gen_random, parse_problem, pretty_problem, run_pipeline, Error,
    OracleCheck, PipelineOptions, RandomSpec, ReportFormat,
};

#[derive(Parser)]
#[command(
    name = "fieldblast",
    version,
    about = "Verify equivalence goals mixing finite-field, natural and bitvector arithmetic"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify one or more problem files.
    ///
    /// Exit code: 0 valid, 1 invalid, 2 unknown, >2 error. With several
    /// files the most severe outcome wins.
    Verify(VerifyArgs),
    /// Emit benchmark problem files.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
}

#[derive(Args)]
struct VerifyArgs {
    /// Problem files in the s-expression format.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Wall-clock budget per problem, in seconds.
    #[arg(long, default_value_t = 300)]
    timeout: u64,
    /// Memory ceiling in MiB (checked between stages).
    #[arg(long, default_value_t = 8192)]
    memory_mb: u64,
    /// Write the rule-application trace as JSON lines (single file only).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Force oracle validation of countermodels (error budget permitting).
    #[arg(long, conflicts_with = "no_oracle_check")]
    oracle_check: bool,
    /// Disable oracle validation; countermodels yield unknown.
    #[arg(long)]
    no_oracle_check: bool,
    /// Disable the case-split rules inside translation premises, forcing
    /// the overflow-safe rule variants.
    #[arg(long)]
    no_case_splits: bool,
    /// Report format.
    #[arg(long, default_value = "human", value_parser = ["human", "lines"])]
    format: String,
    /// Export the bit-blasted CNF in DIMACS format (single file only).
    #[arg(long)]
    dimacs_out: Option<PathBuf>,
    /// Read a DIMACS model (s/v lines) instead of running the internal
    /// solver (single file only).
    #[arg(long)]
    dimacs_model: Option<PathBuf>,
    /// Worker threads for batch verification (0 = one per CPU).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum GenFamily {
    /// The B-bit bitwise-or arithmetization family.
    JoltOr {
        #[arg(long)]
        bits: u32,
        #[arg(long)]
        field: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Seeded random contexts.
    Random {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 7)]
        field: u64,
        #[arg(long, default_value_t = 3)]
        vars: u32,
        #[arg(long, default_value_t = 4)]
        depth: u32,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify(args) => verify(args),
        Command::Gen { family } => gen(family),
    }
}

fn error_exit(e: &Error) -> u8 {
    match e {
        Error::Timeout(_) => 4,
        Error::MemoryExceeded(_) => 5,
        Error::Unsupported(_) | Error::ConstraintViolation(_) => 5,
        Error::Internal(_) => 6,
        _ => 3,
    }
}

fn verify(args: VerifyArgs) -> ExitCode {
    if args.files.len() > 1 && (args.trace.is_some() || args.dimacs_out.is_some()) {
        eprintln!("error: --trace/--dimacs-out require a single input file");
        return ExitCode::from(3);
    }
    let opts = PipelineOptions {
        timeout: Some(Duration::from_secs(args.timeout)),
        memory_mb: Some(args.memory_mb),
        case_splits: !args.no_case_splits,
        oracle_check: if args.no_oracle_check {
            OracleCheck::Off
        } else if args.oracle_check {
            OracleCheck::On
        } else {
            OracleCheck::Auto
        },
        oracle_budget: fieldblast::oracle::DEFAULT_BUDGET,
        dimacs_out: args.dimacs_out.clone(),
        dimacs_model: args.dimacs_model.clone(),
    };
    let format = if args.format == "lines" {
        ReportFormat::Lines
    } else {
        ReportFormat::Human
    };

    // Each run returns (exit code, stdout text, stderr text) so batch mode
    // can print results in input order regardless of worker scheduling.
    let run_one = |path: &PathBuf| -> (u8, String, String) {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return (3, String::new(), format!("{}: {e}\n", path.display())),
        };
        let problem = match parse_problem(&text) {
            Ok(p) => p,
            Err(e) => return (3, String::new(), format!("{}: {e}\n", path.display())),
        };
        match run_pipeline(&problem, &opts) {
            Ok(verdict) => {
                let mut out = String::new();
                if args.files.len() > 1 {
                    out.push_str(&format!("=== {}\n", path.display()));
                }
                out.push_str(&emit_report(&verdict, format));
                if let Some(tp) = &args.trace {
                    if let Err(e) = std::fs::write(tp, verdict.trace.to_jsonl()) {
                        return (3, out, format!("{}: {e}\n", tp.display()));
                    }
                }
                (verdict.status.exit_code() as u8, out, String::new())
            }
            Err(e) => (
                error_exit(&e),
                String::new(),
                format!("{}: {e}\n", path.display()),
            ),
        }
    };

    let results: Vec<(u8, String, String)> = if args.files.len() == 1 {
        vec![run_one(&args.files[0])]
    } else {
        // Batch mode: independent problems on a bounded worker pool.
        let jobs = if args.jobs == 0 {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            args.jobs.max(1)
        };
        let files = &args.files;
        let chunk_size = files.len().div_ceil(jobs);
        let mut results: Vec<(u8, String, String)> = Vec::new();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk in files.chunks(chunk_size) {
                let run_one = &run_one;
                handles.push(scope.spawn(move || {
                    chunk.iter().map(run_one).collect::<Vec<_>>()
                }));
            }
            for h in handles {
                results.extend(h.join().expect("worker panicked"));
            }
        });
        results
    };

    let mut worst = 0u8;
    for (code, out, err) in results {
        print!("{out}");
        eprint!("{err}");
        worst = worst.max(code);
    }
    ExitCode::from(worst)
}

fn gen(family: GenFamily) -> ExitCode {
    let (problem, out) = match family {
        GenFamily::JoltOr { bits, field, out } => match gen_jolt_or(bits, field) {
            Ok(p) => (p, out),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
        },
        GenFamily::Random {
            seed,
            field,
            vars,
            depth,
            out,
        } => {
            if !fieldblast::term::is_prime(field) {
                eprintln!("error: field order {field} is not prime");
                return ExitCode::from(3);
            }
            (
                gen_random(&RandomSpec {
                    seed,
                    prime: field,
                    var_count: vars,
                    depth,
                }),
                out,
            )
        }
    };
    let text = pretty_problem(&problem);
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, text) {
                eprintln!("{}: {e}", path.display());
                return ExitCode::from(3);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}
