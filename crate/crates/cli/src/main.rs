//! `joinagg` — analyze, evaluate, generate, and benchmark join-aggregate
//! queries over annotated relations.
//!
//! Exit codes: 0 success, 2 parse/usage error, 3 cyclic query, 4 schema or
//! data mismatch, 5 internal invariant or budget failure, 6 I/O error,
//! 7 infeasible generator parameters.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use joinagg::driver::{evaluate, Algorithm};
use joinagg::error::Error;
use joinagg::generators::{generate, Family, GeneratorSpec};
use joinagg::instance::Instance;
use joinagg::io;
use joinagg::oracle::brute_force;
use joinagg::query::Query;
use joinagg::semiring::{Boolean, Counting, MaxProd, Semiring, SumProd};
use joinagg::stats::RunStats;
use joinagg::width::{analyze, WidthReport};

#[derive(Parser)]
#[command(
    name = "joinagg",
    about = "Join-aggregate query evaluation over commutative semirings",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a query and print its width report.
    Analyze {
        /// Query file (JSON).
        query: PathBuf,
    },
    /// Evaluate a query over CSV relations.
    Run(RunArgs),
    /// Generate a dataset (query.json plus one CSV per relation).
    Gen(GenArgs),
    /// Run generator sweeps and print per-run counters as CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Query file (JSON).
    query: PathBuf,
    /// Directory holding `<relation>.csv` files.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = SemiringFlag::Counting)]
    semiring: SemiringFlag,
    #[arg(long, value_enum, default_value_t = AlgorithmFlag::Auto)]
    algorithm: AlgorithmFlag,
    /// Output-size estimate OUT~; omitted = doubling guess (auto/hybrid) or
    /// KMV estimate (line).
    #[arg(long)]
    out_guess: Option<u64>,
    /// Write the result CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the JSON run report here instead of stderr.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the run report even without --report.
    #[arg(long)]
    stats: bool,
    /// Print hybrid partition trace lines to stderr.
    #[arg(long)]
    trace: bool,
    /// Worker thread cap. Evaluation is sequential; any value yields
    /// identical results.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Check the result against the brute-force evaluator (desk scale).
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: FamilyFlag,
    /// Target input size N.
    #[arg(long)]
    n: u64,
    /// Target output size OUT.
    #[arg(long, default_value_t = 100)]
    out: u64,
    /// Relation count.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// RNG seed; the JOINAGG_SEED environment variable overrides it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Sweep specification (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SemiringFlag {
    Counting,
    Boolean,
    Maxprod,
    Sumprod,
}

impl SemiringFlag {
    fn name(self) -> &'static str {
        match self {
            SemiringFlag::Counting => "counting",
            SemiringFlag::Boolean => "boolean",
            SemiringFlag::Maxprod => "maxprod",
            SemiringFlag::Sumprod => "sumprod",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmFlag {
    Auto,
    Yannakakis,
    Line,
    Hybrid,
}

impl From<AlgorithmFlag> for Algorithm {
    fn from(f: AlgorithmFlag) -> Algorithm {
        match f {
            AlgorithmFlag::Auto => Algorithm::Auto,
            AlgorithmFlag::Yannakakis => Algorithm::Yannakakis,
            AlgorithmFlag::Line => Algorithm::Line,
            AlgorithmFlag::Hybrid => Algorithm::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyFlag {
    #[value(name = "star_hard")]
    StarHard,
    #[value(name = "line_hard")]
    LineHard,
    #[value(name = "line_adversarial")]
    LineAdversarial,
    #[value(name = "random_acyclic")]
    RandomAcyclic,
    #[value(name = "random_line")]
    RandomLine,
}

impl From<FamilyFlag> for Family {
    fn from(f: FamilyFlag) -> Family {
        match f {
            FamilyFlag::StarHard => Family::StarHard,
            FamilyFlag::LineHard => Family::LineHard,
            FamilyFlag::LineAdversarial => Family::LineAdversarial,
            FamilyFlag::RandomAcyclic => Family::RandomAcyclic,
            FamilyFlag::RandomLine => Family::RandomLine,
        }
    }
}

#[derive(Serialize)]
struct RunReport {
    classification: WidthReport,
    algorithm: String,
    semiring: String,
    out: u64,
    stats: RunStats,
    wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verified: Option<bool>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::UnknownAttribute { .. } => 2,
        Error::Cyclic(_) => 3,
        Error::SchemaMismatch(_) | Error::NotSeparated(_) | Error::NotLine(_) => 4,
        Error::Invariant(_) | Error::BudgetExceeded => 5,
        Error::Io(_) => 6,
        Error::InfeasibleParams(_) => 7,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { query } => cmd_analyze(&query),
        Command::Run(args) => cmd_run(&args),
        Command::Gen(args) => cmd_gen(&args),
        Command::Bench(args) => cmd_bench(&args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn cmd_analyze(path: &Path) -> joinagg::Result<()> {
    let q = io::read_query_file(path)?;
    let report = analyze(&q);
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> joinagg::Result<()> {
    if args.threads == 0 {
        return Err(Error::Parse("--threads must be at least 1".into()));
    }
    let q = io::read_query_file(&args.query)?;
    match args.semiring {
        SemiringFlag::Counting => run_with_ring(args, &q, &Counting),
        SemiringFlag::Boolean => run_with_ring(args, &q, &Boolean),
        SemiringFlag::Maxprod => run_with_ring(args, &q, &MaxProd),
        SemiringFlag::Sumprod => run_with_ring(args, &q, &SumProd),
    }
}

fn run_with_ring<S: Semiring>(args: &RunArgs, q: &Query, ring: &S) -> joinagg::Result<()>
where
    S::Elem: PartialEq,
{
    let inst: Instance<S::Elem> = io::read_instance_dir(&args.data, q, ring)?;
    let started = Instant::now();
    let algorithm: Algorithm = args.algorithm.into();
    let (rs, stats, trace) = if args.trace && algorithm != Algorithm::Yannakakis {
        let mut stats = RunStats::new();
        let mut trace = Vec::new();
        let prepared = joinagg::driver::prepare(q, &inst, ring, algorithm, &mut stats)?;
        match args.out_guess {
            Some(guess) => {
                let rs = prepared.evaluate_with_guess_traced(
                    ring,
                    guess,
                    &mut stats,
                    Some(&mut trace),
                )?;
                (rs, stats, trace)
            }
            None => {
                // Doubling guess with the successful trial's trace kept.
                let n = inst.input_size().max(1) as f64;
                let exponent = 1.0 - 1.0 / prepared.fnfhtw() as f64;
                let mut done = None;
                for i in 0..63u32 {
                    let guess = 1u64 << i;
                    let budget = (joinagg::driver::DOUBLING_BUDGET_FACTOR
                        * (n * (guess as f64).powf(exponent) + guess as f64))
                        as u64;
                    let mut trial = RunStats::with_budget(budget);
                    trace.clear();
                    match prepared.evaluate_with_guess_traced(
                        ring,
                        guess,
                        &mut trial,
                        Some(&mut trace),
                    ) {
                        Ok(rs) => {
                            stats.absorb(&trial);
                            done = Some(rs);
                            break;
                        }
                        Err(Error::BudgetExceeded) => {
                            stats.absorb(&trial);
                            continue;
                        }
                        Err(other) => return Err(other),
                    }
                }
                let rs =
                    done.ok_or_else(|| Error::Invariant("doubling guess exhausted 2^63".into()))?;
                (rs, stats, trace)
            }
        }
    } else {
        let (rs, stats) = evaluate(q, &inst, ring, args.out_guess, algorithm)?;
        (rs, stats, Vec::new())
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    for line in &trace {
        eprintln!("trace: {}", line.render());
    }

    let verified = if args.verify {
        let oracle = brute_force(q, &inst, ring)?;
        let ok = oracle.canonical().rows() == rs.canonical().rows();
        if !ok {
            return Err(Error::Invariant(
                "result differs from the brute-force evaluator".into(),
            ));
        }
        Some(ok)
    } else {
        None
    };

    let csv = io::result_to_csv(&rs, q, ring);
    match &args.output {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }

    let report = RunReport {
        classification: analyze(q),
        algorithm: format!("{:?}", algorithm).to_lowercase(),
        semiring: args.semiring.name().to_string(),
        out: rs.len() as u64,
        stats,
        wall_ms,
        output_path: args.output.as_ref().map(|p| p.display().to_string()),
        verified,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.report {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => {
            if args.stats {
                eprintln!("{text}");
            }
        }
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> joinagg::Result<()> {
    let seed = std::env::var("JOINAGG_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(args.seed);
    let spec = GeneratorSpec {
        family: args.family.into(),
        n: args.n,
        out: args.out,
        k: args.k,
        seed,
    };
    let generated = generate(&spec)?;
    io::write_dataset(&args.dir, &generated.query, &generated.instance)?;
    eprintln!(
        "wrote {} relations to {} (N = {}{})",
        generated.query.edge_count(),
        args.dir.display(),
        generated.instance.input_size(),
        generated
            .realized_out
            .map(|o| format!(", OUT = {o}"))
            .unwrap_or_default()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct BenchSpec {
    sweeps: Vec<Sweep>,
}

#[derive(serde::Deserialize)]
struct Sweep {
    family: String,
    #[serde(default = "default_k")]
    k: usize,
    n: u64,
    outs: Vec<u64>,
    algorithms: Vec<String>,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_k() -> usize {
    3
}
fn default_seed() -> u64 {
    1
}

fn cmd_bench(args: &BenchArgs) -> joinagg::Result<()> {
    let text = std::fs::read_to_string(&args.spec)?;
    let spec: BenchSpec =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("bench spec: {e}")))?;
    let mut rows = vec![
        "family,k,n,out_target,out_realized,algorithm,max_intermediate_rows,total_rows_materialized,semiring_ops,wall_ms"
            .to_string(),
    ];
    for sweep in &spec.sweeps {
        let family: Family = sweep.family.parse()?;
        for &out in &sweep.outs {
            let generated = generate(&GeneratorSpec {
                family,
                n: sweep.n,
                out,
                k: sweep.k,
                seed: sweep.seed,
            })?;
            for alg_name in &sweep.algorithms {
                let algorithm: Algorithm = alg_name.parse()?;
                let started = Instant::now();
                let (rs, stats) = evaluate(
                    &generated.query,
                    &generated.instance,
                    &Counting,
                    generated.realized_out,
                    algorithm,
                )?;
                let wall_ms = started.elapsed().as_secs_f64() * 1e3;
                rows.push(format!(
                    "{},{},{},{},{},{},{},{},{},{:.3}",
                    sweep.family,
                    sweep.k,
                    sweep.n,
                    out,
                    rs.len(),
                    alg_name,
                    stats.max_intermediate_rows,
                    stats.total_rows_materialized,
                    stats.semiring_ops,
                    wall_ms
                ));
            }
        }
    }
    let body = rows.join("\n") + "\n";
    match &args.output {
        Some(path) => std::fs::write(path, body)?,
        None => print!("{body}"),
    }
    Ok(())
}
