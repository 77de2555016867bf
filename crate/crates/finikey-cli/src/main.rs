//! `finikey` — finite-key secret-key rates for BB84 and six-state QKD.
//!
//! Subcommands: `rate` (one optimized operating point with diagnostics),
//! `sweep` (rate vs. block size tables in CSV/JSON/gnuplot), `compare`
//! (collective vs. coherent vs. post-selection at one point), `selftest`
//! (numerical audit against the independent oracle routes).
//!
//! Exit codes: 0 success, 2 domain error, 64 usage error, 73 output not
//! writable. `FINIKEY_THREADS` caps the worker pool.

mod output;
mod selftest;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use finikey::optimizer::{optimize_rate, OptimizationSpec};
use finikey::rates::{AttackModel, ProtocolSpec, SecurityBudget};
use finikey::ProtocolKind;

const EXIT_DOMAIN: i32 = 2;
const EXIT_USAGE: i32 = 64;
const EXIT_CANTCREAT: i32 = 73;

#[derive(Parser)]
#[command(name = "finikey", version, about = "Finite-key secret-key rate engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimized secret-key rate at a single operating point
    Rate(RateArgs),
    /// Optimized rate versus block size N, written as a table
    Sweep(SweepArgs),
    /// Three attack analyses side by side at one operating point
    Compare(CompareArgs),
    /// Audit the numerics against independent recomputation routes
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    Bb84,
    SixState,
}

impl ProtocolArg {
    fn kind(self) -> ProtocolKind {
        match self {
            ProtocolArg::Bb84 => ProtocolKind::Bb84,
            ProtocolArg::SixState => ProtocolKind::SixState,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackArg {
    Collective,
    Coherent,
    Postselection,
}

impl AttackArg {
    fn model(self) -> AttackModel {
        match self {
            AttackArg::Collective => AttackModel::Collective,
            AttackArg::Coherent => AttackModel::Coherent,
            AttackArg::Postselection => AttackModel::PostSelection,
        }
    }
}

#[derive(Args)]
struct RateArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    #[arg(long, value_enum)]
    attack: AttackArg,
    /// Initial signal count N (scientific notation accepted)
    #[arg(long = "N")]
    n_total: f64,
    /// Observed quantum bit error rate
    #[arg(long)]
    qber: f64,
    /// Total security failure probability (default 1e-9)
    #[arg(long = "eps-total")]
    eps_total: Option<f64>,
    /// Fix the estimation-sample count instead of optimizing it
    #[arg(long)]
    m: Option<f64>,
    /// Fix the budget split (all four must be given together)
    #[arg(long = "eps-pe")]
    eps_pe: Option<f64>,
    #[arg(long = "eps-ec")]
    eps_ec: Option<f64>,
    #[arg(long = "eps-pa")]
    eps_pa: Option<f64>,
    #[arg(long = "eps-bar")]
    eps_bar: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Gnuplot,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    /// Attack analyses to tabulate (default: all three)
    #[arg(long, value_enum, value_delimiter = ',')]
    models: Option<Vec<AttackArg>>,
    /// Comma-separated QBER values
    #[arg(long, value_delimiter = ',', required = true)]
    qbers: Vec<f64>,
    /// Smallest N of the log-spaced range
    #[arg(long = "n-min")]
    n_min: f64,
    /// Largest N of the log-spaced range
    #[arg(long = "n-max")]
    n_max: f64,
    /// Number of log-spaced N values
    #[arg(long = "n-count")]
    n_count: usize,
    #[arg(long = "eps-total", default_value_t = 1e-9)]
    eps_total: f64,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Output file (stdout when omitted)
    #[arg(long)]
    output: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    #[arg(long = "N")]
    n_total: f64,
    #[arg(long)]
    qber: f64,
    #[arg(long = "eps-total", default_value_t = 1e-9)]
    eps_total: f64,
}

#[derive(Args)]
struct SelftestArgs {
    /// Sample count for the randomized checks
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0xf1002)]
    seed: u64,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(code) = init_thread_pool() {
        std::process::exit(code);
    }
    let code = match cli.command {
        Command::Rate(args) => cmd_rate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Selftest(args) => selftest::run(args.samples, args.seed),
    };
    std::process::exit(code);
}

fn init_thread_pool() -> Result<(), i32> {
    let Ok(raw) = std::env::var("FINIKEY_THREADS") else {
        return Ok(());
    };
    match raw.trim().parse::<usize>() {
        Ok(k) if k >= 1 => {
            // a second build_global in one process is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            Ok(())
        }
        _ => {
            eprintln!("FINIKEY_THREADS must be a positive integer, got {raw:?}");
            Err(EXIT_USAGE)
        }
    }
}

fn domain(e: &finikey::Error) -> i32 {
    eprintln!("error: {e}");
    EXIT_DOMAIN
}

fn cmd_rate(args: &RateArgs) -> i32 {
    let given = [args.eps_pe, args.eps_ec, args.eps_pa, args.eps_bar];
    let n_given = given.iter().filter(|v| v.is_some()).count();
    if n_given != 0 && n_given != 4 {
        eprintln!("usage error: --eps-pe/--eps-ec/--eps-pa/--eps-bar must be given together");
        return EXIT_USAGE;
    }
    let model = args.attack.model();
    let fixed_budget = (n_given == 4).then(|| {
        SecurityBudget::new(
            args.eps_pe.unwrap(),
            args.eps_ec.unwrap(),
            args.eps_pa.unwrap(),
            args.eps_bar.unwrap(),
        )
    });
    let eps_total = args
        .eps_total
        .or_else(|| fixed_budget.as_ref().map(|b| b.total(model)))
        .unwrap_or(1e-9);

    let proto = protocol_spec(args.protocol);
    let mut spec = match OptimizationSpec::new(model, proto, args.n_total, args.qber, eps_total) {
        Ok(s) => s,
        Err(e) => return domain(&e),
    };
    if let Some(m) = args.m {
        spec = spec.with_fixed_m(m);
    }
    if let Some(b) = fixed_budget {
        spec = spec.with_fixed_budget(b);
    }
    let point = match optimize_rate(&spec) {
        Ok(p) => p,
        Err(e) => return domain(&e),
    };

    println!("protocol:       {}", point.protocol.kind());
    println!("attack:         {}", point.attack_model);
    println!("N:              {:.8e}", point.n_total);
    println!("qber:           {:.8e}", point.qber);
    println!("eps_total:      {eps_total:.8e}");
    println!("m:              {:.8e}", point.m);
    println!("eps_pe:         {:.8e}", point.budget.eps_pe);
    println!("eps_ec:         {:.8e}", point.budget.eps_ec);
    println!("eps_pa:         {:.8e}", point.budget.eps_pa);
    println!("eps_bar:        {:.8e}", point.budget.eps_bar);
    println!("rate:           {:.8e}", output::clamp_rate(point.reported()));
    println!("raw_rate:       {:.8e}", point.rate);
    println!("xi_pe:          {:.8e}", point.bounds.xi_pe);
    println!("xi_att:         {:.8e}", point.bounds.xi_att);
    println!("xi_coh:         {:.8e}", point.bounds.xi_coh);
    println!("leak_bits:      {:.8e}", point.bounds.leak_bits);
    println!("aep_per_signal: {:.8e}", point.bounds.aep_bits_per_signal);
    let l = point.minimizer_lambda;
    println!(
        "minimizer:      [{:.8e}, {:.8e}, {:.8e}, {:.8e}]",
        l[0], l[1], l[2], l[3]
    );
    println!("infeasible:     {}", point.infeasible);
    if point.reported() == 0.0 {
        println!("note: no positive rate at this operating point (block too small or too noisy)");
    }
    0
}

fn protocol_spec(p: ProtocolArg) -> ProtocolSpec<f64> {
    match p.kind() {
        ProtocolKind::Bb84 => ProtocolSpec::bb84(),
        ProtocolKind::SixState => ProtocolSpec::six_state(),
    }
}

fn cmd_sweep(args: &SweepArgs) -> i32 {
    if !(args.n_min >= 1e2 && args.n_max <= 1e16 && args.n_min <= args.n_max) {
        eprintln!(
            "error: N range must satisfy 1e2 <= n-min <= n-max <= 1e16, got [{}, {}]",
            args.n_min, args.n_max
        );
        return EXIT_DOMAIN;
    }
    if args.n_count < 1 || args.n_count > 10_000 {
        eprintln!("error: n-count must lie in [1, 10000], got {}", args.n_count);
        return EXIT_DOMAIN;
    }
    let mut qbers = args.qbers.clone();
    if qbers.is_empty() {
        eprintln!("usage error: --qbers needs at least one value");
        return EXIT_USAGE;
    }
    qbers.sort_by(f64::total_cmp);
    qbers.dedup();

    // canonical model order regardless of how the flag listed them
    let models: Vec<AttackModel> = match &args.models {
        None => AttackModel::ALL.to_vec(),
        Some(list) => {
            let chosen: Vec<AttackModel> = list.iter().map(|a| a.model()).collect();
            AttackModel::ALL
                .into_iter()
                .filter(|m| chosen.contains(m))
                .collect()
        }
    };

    let ns = log_spaced(args.n_min, args.n_max, args.n_count);
    let grid: Vec<(AttackModel, f64, f64)> = models
        .iter()
        .flat_map(|&m| {
            let ns = &ns;
            qbers
                .iter()
                .flat_map(move |&q| ns.iter().map(move |&n| (m, q, n)))
        })
        .collect();

    let proto = protocol_spec(args.protocol);
    let rows: Result<Vec<output::Row>, finikey::Error> = {
        use rayon::prelude::*;
        grid.par_iter()
            .map(|&(model, qber, n)| {
                let spec = OptimizationSpec::new(model, proto.clone(), n, qber, args.eps_total)?;
                let point = optimize_rate(&spec)?;
                Ok(output::Row::from_point(&point))
            })
            .collect()
    };
    let rows = match rows {
        Ok(r) => r,
        Err(e) => return domain(&e),
    };

    let rendered = match args.format {
        FormatArg::Csv => output::render_csv(&rows),
        FormatArg::Json => output::render_json(&rows),
        FormatArg::Gnuplot => output::render_gnuplot(&rows),
    };
    match &args.output {
        None => {
            print!("{rendered}");
            0
        }
        Some(path) => match std::fs::write(path, rendered) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: cannot write {}: {e}", path.display());
                EXIT_CANTCREAT
            }
        },
    }
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn cmd_compare(args: &CompareArgs) -> i32 {
    let proto = protocol_spec(args.protocol).with_comparison_conventions();
    let mut reported = [0.0f64; 3];
    for (slot, model) in reported.iter_mut().zip(AttackModel::ALL) {
        let spec = match OptimizationSpec::new(
            model,
            proto.clone(),
            args.n_total,
            args.qber,
            args.eps_total,
        ) {
            Ok(s) => s,
            Err(e) => return domain(&e),
        };
        match optimize_rate(&spec) {
            Ok(p) => *slot = output::clamp_rate(p.reported()),
            Err(e) => return domain(&e),
        }
    }
    let [r_coll, r_coh, r_post] = reported;
    println!("protocol:    {}", proto.kind());
    println!("conventions: comparison (symmetric sifting, per-basis estimation, worst-case reconciliation)");
    println!("N:           {:.8e}", args.n_total);
    println!("qber:        {:.8e}", args.qber);
    println!("eps_total:   {:.8e}", args.eps_total);
    println!("r_coll:      {r_coll:.8e}");
    println!("r_coh:       {r_coh:.8e}");
    println!("r_post:      {r_post:.8e}");
    if r_post > 0.0 {
        println!("coh_vs_post: {:+.2}%", (r_coh - r_post) / r_post * 100.0);
    } else {
        println!("coh_vs_post: undefined (r_post = 0)");
    }
    0
}
