use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gwgen::bench;
use gwgen::oracle;
use gwgen::verify::{self, Check, Suite, VerifyConfig};
use gwgen::{Algo, BitSource, ConditionedSampler, Error, GenParams, Generator, RngMode, SampleMethod, Tree};

/// Random binary trees from critical Galton-Watson processes.
#[derive(Parser)]
#[command(name = "gwgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow free Galton-Watson trees.
    Generate(GenerateArgs),
    /// Draw uniform trees with an exact number of nodes.
    Sample(SampleArgs),
    /// Run a verification suite and print one CSV verdict per check.
    Verify(VerifyArgs),
    /// Print exact tables as CSV.
    Oracle(OracleArgs),
    /// Time the engines and print CSV rows.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Naive,
    Iterative,
    Parallel,
    Hybrid,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Algo {
        match a {
            AlgoArg::Naive => Algo::Naive,
            AlgoArg::Iterative => Algo::Iterative,
            AlgoArg::Parallel => Algo::Parallel,
            AlgoArg::Hybrid => Algo::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RngArg {
    Split,
    PerWorker,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Bits,
    Dot,
    Stats,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, value_enum, default_value = "iterative")]
    algo: AlgoArg,
    #[arg(long, default_value_t = 64)]
    threshold: usize,
    #[arg(long, default_value_t = 1024)]
    hybrid_switch: usize,
    #[arg(long, env = "GW_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value = "split")]
    rng_mode: RngArg,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    engine: EngineArgs,
    /// Defaults to a seed from the operating system, echoed in the header.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1 << 31)]
    max_nodes: u64,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, value_enum, default_value = "bits")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rejection,
    Cycle,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    size: u64,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, value_enum, default_value = "cycle")]
    method: MethodArg,
    /// Engine used by the rejection method.
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "bits")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Uniform,
    Lifetime,
    Peak,
    Time,
    Determinism,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::Uniform => Suite::Uniform,
            SuiteArg::Lifetime => Suite::Lifetime,
            SuiteArg::Peak => Suite::Peak,
            SuiteArg::Time => Suite::Time,
            SuiteArg::Determinism => Suite::Determinism,
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    suite: SuiteArg,
    /// Comma-separated sizes.
    #[arg(long, alias = "size", value_delimiter = ',')]
    sizes: Vec<u64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threshold: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, env = "GW_WORKERS", default_value_t = 4)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    Tnk,
    Pmf,
    Limit,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(value_enum)]
    what: Table,
    #[arg(long, default_value_t = 7)]
    size: u64,
    #[arg(long, default_value_t = 1)]
    threshold: usize,
    #[arg(long, default_value_t = 50)]
    kmax: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["naive", "iterative"])]
    algos: Vec<AlgoArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [1_000_000u64])]
    sizes: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize])]
    workers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [64usize])]
    thresholds: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// First seed of the size search.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    /// Bad flags or parameters; exit code 2.
    Usage(String),
    /// A verification check failed; exit code 1.
    Verdict,
    /// Any other runtime error; exit code 1.
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(_)
            | Error::InvalidSize(_)
            | Error::UnsupportedThreshold(_)
            | Error::BudgetExceeded { .. }
            | Error::UnknownWorker(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Sample(a) => sample(a),
        Command::Verify(a) => run_verify(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("gwgen: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("gwgen: {msg}");
            ExitCode::from(2)
        }
    }
}

fn output(path: &Option<PathBuf>) -> io::Result<BufWriter<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    Ok(BufWriter::new(sink))
}

fn entropy_seed() -> Result<u64, Failure> {
    let mut buf = [0u8; 8];
    getrandom::getrandom(&mut buf).map_err(|e| Failure::Runtime(format!("no entropy source: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

fn engine_params(e: &EngineArgs, seed: u64, max_nodes: u64) -> Result<GenParams, Failure> {
    let params = GenParams {
        algo: e.algo.into(),
        threshold: e.threshold,
        hybrid_switch: e.hybrid_switch,
        workers: e.workers,
        seed,
        max_nodes,
        rng_mode: match e.rng_mode {
            RngArg::Split => RngMode::SplitDeterministic,
            RngArg::PerWorker => RngMode::PerWorker,
        },
        ..GenParams::default()
    };
    params.validate()?;
    Ok(params)
}

const STATS_HEADER: &str = "index,status,size,height,left_spine,bits_consumed,tasks_spawned";

fn write_tree(out: &mut impl Write, format: Format, index: u64, tree: &Tree, bits: u64, spawned: u64) -> io::Result<()> {
    match format {
        Format::Bits => writeln!(out, "{}", tree.encode_bits()),
        Format::Dot => write!(out, "{}", tree.to_dot()),
        Format::Stats => writeln!(
            out,
            "{index},tree,{},{},{},{bits},{spawned}",
            tree.size(),
            tree.height_nodes(),
            tree.left_spine()
        ),
    }
}

fn generate(a: GenerateArgs) -> CmdResult {
    let seed = match a.seed {
        Some(s) => s,
        None => entropy_seed()?,
    };
    let params = engine_params(&a.engine, seed, a.max_nodes)?;
    let mut gen = Generator::new(params)?;
    let mut out = output(&a.out)?;
    writeln!(out, "# seed={seed}")?;
    if a.format == Format::Stats {
        writeln!(out, "{STATS_HEADER}")?;
    }
    for i in 0..a.count {
        let outcome = gen.generate_from(BitSource::new(seed, &[i]))?;
        let (bits, spawned, nodes) = (outcome.bits_consumed, outcome.tasks_spawned, outcome.nodes_generated);
        match outcome.into_tree() {
            Some(tree) => {
                write_tree(&mut out, a.format, i, &tree, bits, spawned)?;
                gen.recycle(tree);
            }
            None => match a.format {
                Format::Stats => writeln!(out, "{i},overflow,{nodes},,,{bits},{spawned}")?,
                _ => writeln!(out, "# overflow index={i} nodes>{}", a.max_nodes)?,
            },
        }
    }
    out.flush()?;
    Ok(())
}

fn sample(a: SampleArgs) -> CmdResult {
    if a.size == 0 || a.size % 2 == 0 {
        return Err(Failure::Usage(format!("--size must be odd and positive, got {}", a.size)));
    }
    let seed = match a.seed {
        Some(s) => s,
        None => entropy_seed()?,
    };
    let mut sampler = match a.method {
        MethodArg::Cycle => ConditionedSampler::cycle_lemma(BitSource::new(seed, &[])),
        MethodArg::Rejection => {
            let params = engine_params(&a.engine, seed, a.size)?;
            ConditionedSampler::new(params, SampleMethod::Rejection)?
        }
    };
    let mut out = output(&a.out)?;
    writeln!(out, "# seed={seed}")?;
    if a.format == Format::Stats {
        writeln!(out, "{STATS_HEADER}")?;
    }
    for i in 0..a.count {
        let before = sampler.bits_consumed();
        let tree = sampler.sample(a.size)?;
        let bits = sampler.bits_consumed() - before;
        write_tree(&mut out, a.format, i, &tree, bits, 0)?;
        sampler.recycle(tree);
    }
    out.flush()?;
    Ok(())
}

fn run_verify(a: VerifyArgs) -> CmdResult {
    let suite: Suite = a.suite.into();
    let mut cfg = VerifyConfig::defaults(suite, a.seed);
    if !a.sizes.is_empty() {
        cfg.sizes = a.sizes;
    }
    if let Some(s) = a.samples {
        cfg.samples = s;
    }
    cfg.threshold = a.threshold;
    cfg.workers = a.workers;
    let checks = verify::run_suite(suite, &cfg)?;
    let mut out = output(&a.out)?;
    writeln!(out, "{}", Check::CSV_HEADER)?;
    for c in &checks {
        writeln!(out, "{}", c.to_csv())?;
    }
    out.flush()?;
    if checks.iter().any(Check::failed) {
        Err(Failure::Verdict)
    } else {
        Ok(())
    }
}

fn run_oracle(a: OracleArgs) -> CmdResult {
    let mut out = output(&a.out)?;
    match a.what {
        Table::Tnk => {
            let rows = oracle::tnk_table(a.size, a.threshold)?;
            writeln!(out, "n,k,closed_form,brute_force,match")?;
            for r in rows {
                writeln!(out, "{},{},{},{},{}", r.n, r.k, r.closed, r.enumerated, r.matches())?;
            }
        }
        Table::Pmf => {
            let pmf = oracle::exact_pmf_lifetime(a.size, a.threshold)?;
            writeln!(out, "n,k,probability,approx")?;
            for (k, p) in &pmf.entries {
                writeln!(out, "{},{k},{p},{:.12}", a.size, oracle::ratio_f64(p))?;
            }
        }
        Table::Limit => {
            let pmf = oracle::limit_pmf(a.threshold, a.kmax)?;
            writeln!(out, "k,probability,approx")?;
            let mut mass = 0.0;
            for (k, p) in &pmf {
                let x = oracle::ratio_f64(p);
                mass += x;
                writeln!(out, "{k},{p},{x:.12e}")?;
            }
            writeln!(out, "# mass={mass:.12} mean={}", oracle::limit_mean(a.threshold)?)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn run_bench(a: BenchArgs) -> CmdResult {
    if a.repeats == 0 {
        return Err(Failure::Usage("--repeats must be positive".into()));
    }
    if let Some(w) = a.workers.iter().find(|&&w| w == 0) {
        return Err(Failure::Usage(format!("invalid worker count {w}")));
    }
    let mut combos = Vec::new();
    for &algo in &a.algos {
        let algo: Algo = algo.into();
        let pooled = matches!(algo, Algo::Parallel | Algo::Hybrid);
        for &n in &a.sizes {
            let workers: &[usize] = if pooled { &a.workers } else { &[1] };
            let thresholds: &[usize] = if pooled { &a.thresholds } else { &a.thresholds[..1.min(a.thresholds.len())] };
            for &w in workers {
                for &t in thresholds {
                    let params = bench::bench_params(algo, n, w, t);
                    params.validate()?;
                    combos.push((params, n));
                }
            }
        }
    }
    let mut out = output(&a.out)?;
    writeln!(out, "{}", bench::BenchRow::CSV_HEADER)?;
    for (params, n) in combos {
        let (seed, _) = bench::find_seed(&params, n, a.seed, 1_000_000)?;
        for row in bench::bench_seed(&params, n, seed, a.repeats)? {
            writeln!(out, "{}", row.to_csv())?;
        }
        out.flush()?;
    }
    Ok(())
}
