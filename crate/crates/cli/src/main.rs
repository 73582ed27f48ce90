//! `diffmech`: tree generation, single mechanism runs, property checks and
//! experiment tables. All randomness flows from `--seed`.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffusion_mech::experiments::{
    alpha_sweep, branch_table, mean_buyer_depth, ratio_table, worst_case_star, GroupKey, ItemRule,
    RatioReport, TableRun,
};
use diffusion_mech::mechanism::{MechanismParams, MechanismPlan};
use diffusion_mech::network::{
    random_tree, ActionProfile, EffectiveMarket, SocialTree, ValuationProfile,
};
use diffusion_mech::properties::{
    dic_sweep, measure_complexity, outcome_sweep, TreeShape, MAX_DIC_NODES,
};
use diffusion_mech::seed::{derive_seed, rng_from_seed, DEFAULT_SEED};
use mimalloc::MiMalloc;

#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

#[derive(Parser, Debug)]
#[command(
    name = "diffmech",
    version,
    about = "Multi-item diffusion auctions on social trees"
)]
struct Cli {
    /// Master seed; every result is a function of it.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads for trial loops. Output does not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output format for tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Include per-trial rows (JSON only).
    #[arg(long, global = true)]
    full: bool,
    /// Write results here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a uniform random tree as JSON.
    GenTree {
        /// Node count, seller included.
        #[arg(long)]
        n: usize,
    },
    /// Run the mechanism once on a tree file.
    Run(RunArgs),
    /// Check IR, feasibility and diffusion incentive compatibility.
    Verify(VerifyArgs),
    /// Revenue ratios on uniform random trees of several sizes.
    Table1(Table1Args),
    /// Revenue ratios on trees with controlled branch count and size.
    Table2(Table2Args),
    /// Single item on a star.
    WorstCase(WorstCaseArgs),
    /// Mechanism revenue as a function of the reward factor.
    AlphaSweep(AlphaArgs),
    /// Execution time against tree size.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Tree JSON as written by `gen-tree`.
    #[arg(long)]
    tree: PathBuf,
    /// Items for sale.
    #[arg(long)]
    m: usize,
    /// Reward factor for diffusion, in [0, 1).
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Buyer values in ascending buyer id; drawn from the seed if absent.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Largest tree in the deviation sweep.
    #[arg(long, default_value_t = 10)]
    n_max: usize,
    /// Paired samples per deviation.
    #[arg(long, default_value_t = 20_000)]
    samples: u64,
    /// Item counts 1..=m-max in the deviation sweep.
    #[arg(long, default_value_t = 3)]
    m_max: usize,
    /// Random instances for the IR and feasibility checks.
    #[arg(long, default_value_t = 10_000)]
    instances: u64,
    /// Largest tree among those instances.
    #[arg(long, default_value_t = 50)]
    instance_nodes: usize,
}

#[derive(Args, Debug)]
struct Table1Args {
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// `n/D` for max(1, n/D) items, or a fixed item count.
    #[arg(long, default_value = "n/20", value_parser = parse_item_rule)]
    m_rule: ItemRule,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct Table2Args {
    /// `BRANCHESxSIZE` pairs.
    #[arg(long, value_delimiter = ',', default_value = "5x200,10x100,20x50,50x20,100x10", value_parser = parse_shape)]
    shapes: Vec<(f64, f64)>,
    #[arg(long, default_value_t = 500)]
    trials: u64,
    #[arg(long, default_value = "n/20", value_parser = parse_item_rule)]
    m_rule: ItemRule,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct WorstCaseArgs {
    /// Buyer count (leaves of the star).
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct AlphaArgs {
    /// Node count, seller included.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Items; defaults to max(1, n/20).
    #[arg(long)]
    m: Option<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.001,0.005,0.01,0.05,0.1,0.2,0.5"
    )]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    trials: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value = "path", value_parser = |s: &str| s.parse::<TreeShape>())]
    shape: TreeShape,
    /// Node counts; defaults to 10^4 doubled up to 640000, then 10^6.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Minimum measuring time per size.
    #[arg(long, default_value_t = 200)]
    min_time_ms: u64,
}

fn parse_item_rule(s: &str) -> Result<ItemRule, String> {
    if let Some(d) = s.strip_prefix("n/") {
        return match d.parse::<usize>() {
            Ok(d) if d > 0 => Ok(ItemRule::PerNodes(d)),
            _ => Err(format!("bad divisor in {s:?}")),
        };
    }
    s.parse::<usize>()
        .map(ItemRule::Fixed)
        .map_err(|_| format!("expected n/D or an item count, got {s:?}"))
}

fn parse_shape(s: &str) -> Result<(f64, f64), String> {
    let (b, k) = s
        .split_once('x')
        .ok_or_else(|| format!("expected BRANCHESxSIZE, got {s:?}"))?;
    let parse = |t: &str| {
        t.parse::<f64>()
            .map_err(|_| format!("bad number {t:?} in {s:?}"))
    };
    let (b, k) = (parse(b)?, parse(k)?);
    if !(b >= 1.0 && k >= 1.0) {
        return Err(format!("means must be at least 1 in {s:?}"));
    }
    Ok((b, k))
}

type CliResult<T> = Result<T, String>;

struct Output {
    text: String,
    violation: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    eprintln!("reproduce: {}", repro_line(cli.seed));
    let result = dispatch(&cli).and_then(|out| {
        match &cli.output {
            Some(path) => fs::write(path, &out.text)
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
            None => io::stdout()
                .write_all(out.text.as_bytes())
                .map_err(|e| e.to_string())?,
        }
        Ok(out.violation)
    });
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn repro_line(seed: u64) -> String {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    if !args
        .iter()
        .any(|a| a == "--seed" || a.starts_with("--seed="))
    {
        args.insert(0, seed.to_string());
        args.insert(0, "--seed".into());
    }
    std::iter::once("diffmech".to_string())
        .chain(args)
        .collect::<Vec<_>>()
        .join(" ")
}

fn dispatch(cli: &Cli) -> CliResult<Output> {
    if cli.full && cli.format != Format::Json {
        return Err("--full requires --format json".into());
    }
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err("--jobs must be positive".into());
    }
    let text = match &cli.command {
        Command::GenTree { n } => {
            if *n < 2 {
                return Err("--n must be at least 2".into());
            }
            let tree = random_tree(*n, &mut rng_from_seed(cli.seed)).map_err(|e| e.to_string())?;
            tree.to_json() + "\n"
        }
        Command::Run(args) => run(args, cli.seed)?,
        Command::Verify(args) => return verify(args, cli.seed),
        Command::Table1(args) => {
            check_alpha(args.alpha)?;
            if args.sizes.iter().any(|&n| n < 2) {
                return Err("sizes must be at least 2".into());
            }
            let run = ratio_table(
                &args.sizes,
                args.m_rule,
                args.alpha,
                args.trials,
                cli.seed,
                jobs,
            )
            .map_err(|e| e.to_string())?;
            render_table(&run, cli)?
        }
        Command::Table2(args) => {
            check_alpha(args.alpha)?;
            let run = branch_table(
                &args.shapes,
                args.m_rule,
                args.alpha,
                args.trials,
                cli.seed,
                jobs,
            )
            .map_err(|e| e.to_string())?;
            render_table(&run, cli)?
        }
        Command::WorstCase(args) => {
            check_alpha(args.alpha)?;
            let r = worst_case_star(args.n, args.trials, args.alpha, cli.seed, jobs)
                .map_err(|e| e.to_string())?;
            match cli.format {
                Format::Json => json(&r)?,
                Format::Csv => csv_text(
                    &[
                        "n",
                        "m",
                        "alpha",
                        "trials",
                        "rd_ropt_ratio",
                        "rd_ropt_stderr",
                        "branch_price",
                        "predicted_rd",
                        "mean_rd",
                        "mean_ropt",
                        "seed",
                    ],
                    [vec![
                        r.buyers.to_string(),
                        "1".into(),
                        args.alpha.to_string(),
                        r.trials.to_string(),
                        r.ratio.to_string(),
                        r.std_error.to_string(),
                        r.branch_price.to_string(),
                        r.predicted_rd.to_string(),
                        r.mean_rd.to_string(),
                        r.mean_ropt.to_string(),
                        r.seed.to_string(),
                    ]],
                )?,
            }
        }
        Command::AlphaSweep(args) => {
            if args.n < 2 {
                return Err("--n must be at least 2".into());
            }
            let items = args.m.unwrap_or_else(|| ItemRule::default().items(args.n));
            let rows = alpha_sweep(args.n, items, &args.alphas, args.trials, cli.seed, jobs)
                .map_err(|e| e.to_string())?;
            let depth = mean_buyer_depth(args.n, args.trials.min(1000), cli.seed)
                .map_err(|e| e.to_string())?;
            eprintln!(
                "mean buyer depth at n={}: {depth:.3} (sqrt(pi n) = {:.3})",
                args.n,
                (std::f64::consts::PI * args.n as f64).sqrt()
            );
            match cli.format {
                Format::Json => json(&rows)?,
                Format::Csv => csv_text(
                    &[
                        "n",
                        "m",
                        "alpha",
                        "trials",
                        "mean_rd",
                        "rd_stderr",
                        "mean_gross",
                        "relative_loss",
                        "seed",
                    ],
                    rows.iter().map(|r| {
                        vec![
                            args.n.to_string(),
                            items.to_string(),
                            r.alpha.to_string(),
                            r.trials.to_string(),
                            r.mean_rd.to_string(),
                            r.rd_stderr.to_string(),
                            r.mean_gross.to_string(),
                            r.relative_loss.map_or(String::new(), |x| x.to_string()),
                            r.seed.to_string(),
                        ]
                    }),
                )?,
            }
        }
        Command::Bench(args) => {
            let sizes = args.sizes.clone().unwrap_or_else(|| {
                let mut s: Vec<usize> = (0..7).map(|k| 10_000 << k).collect();
                s.push(1_000_000);
                s
            });
            if sizes.iter().any(|&n| n < 2) {
                return Err("sizes must be at least 2".into());
            }
            let report = measure_complexity(
                &sizes,
                args.shape,
                Duration::from_millis(args.min_time_ms),
                &mut rng_from_seed(cli.seed),
            )
            .map_err(|e| e.to_string())?;
            eprintln!(
                "linear fit: {:.3e} s/node + {:.3e} s, relative residual {:.3}",
                report.slope, report.intercept, report.relative_residual
            );
            match cli.format {
                Format::Json => json(&report)?,
                Format::Csv => csv_text(
                    &["shape", "n", "seconds", "repetitions"],
                    report.rows.iter().map(|r| {
                        vec![
                            format!("{:?}", args.shape).to_lowercase(),
                            r.nodes.to_string(),
                            r.seconds.to_string(),
                            r.repetitions.to_string(),
                        ]
                    }),
                )?,
            }
        }
    };
    Ok(Output {
        text,
        violation: false,
    })
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(format!("--alpha {alpha} must lie in [0, 1)"))
    }
}

fn json<T: serde::Serialize + ?Sized>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| e.to_string())
}

fn csv_text<I>(header: &[&str], rows: I) -> CliResult<String>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| e.to_string())?;
    for row in rows {
        w.write_record(&row).map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| e.to_string())
}

fn render_table(run: &TableRun, cli: &Cli) -> CliResult<String> {
    match cli.format {
        Format::Json if cli.full => json(run),
        Format::Json => json(&run.reports),
        Format::Csv => {
            let shaped = run
                .reports
                .iter()
                .any(|r| matches!(r.key, GroupKey::Branches { .. }));
            let mut header = if shaped {
                vec!["mean_branches", "mean_size"]
            } else {
                vec!["n"]
            };
            header.extend([
                "m",
                "alpha",
                "trials",
                "rd_r0_ratio",
                "rd_r0_stderr",
                "rd_ropt_ratio",
                "rd_ropt_stderr",
                "seed",
            ]);
            csv_text(&header, run.reports.iter().map(report_row))
        }
    }
}

fn report_row(r: &RatioReport) -> Vec<String> {
    let mut row = match r.key {
        GroupKey::Size { n } => vec![n.to_string()],
        GroupKey::Branches {
            mean_branches,
            mean_size,
        } => vec![mean_branches.to_string(), mean_size.to_string()],
    };
    row.extend([
        r.items.to_string(),
        r.alpha.to_string(),
        r.trials.to_string(),
        r.rd_r0_ratio.to_string(),
        r.rd_r0_stderr.to_string(),
        r.rd_ropt_ratio.to_string(),
        r.rd_ropt_stderr.to_string(),
        r.seed.to_string(),
    ]);
    row
}

fn run(args: &RunArgs, seed: u64) -> CliResult<String> {
    let text = fs::read_to_string(&args.tree)
        .map_err(|e| format!("cannot read {}: {e}", args.tree.display()))?;
    let tree = SocialTree::from_json(&text).map_err(|e| format!("{}: {e}", args.tree.display()))?;
    let params = MechanismParams::new(args.m, args.alpha).map_err(|e| e.to_string())?;
    let mut rng = rng_from_seed(seed);
    let values = match &args.values {
        Some(given) => {
            if given.len() != tree.buyer_count() {
                return Err(format!(
                    "--values has {} entries, tree has {} buyers",
                    given.len(),
                    tree.buyer_count()
                ));
            }
            let mut all = vec![0.0; tree.node_count()];
            for (b, &v) in tree.buyers().zip(given) {
                all[b] = v;
            }
            ValuationProfile::new(all).map_err(|e| e.to_string())?
        }
        None => ValuationProfile::sample(&tree, &mut rng),
    };
    let market = EffectiveMarket::new(&tree, &ActionProfile::full(&tree));
    let outcome = MechanismPlan::new(&market, params)
        .and_then(|plan| plan.execute(&values, &mut rng))
        .map_err(|e| e.to_string())?;
    Ok(outcome.to_json() + "\n")
}

fn verify(args: &VerifyArgs, seed: u64) -> CliResult<Output> {
    if args.n_max > MAX_DIC_NODES {
        return Err(format!("--n-max {} exceeds {MAX_DIC_NODES}", args.n_max));
    }
    if args.samples == 0 || args.m_max == 0 {
        return Err("--samples and --m-max must be positive".into());
    }
    let started = Instant::now();
    let outcomes = outcome_sweep(args.instances, args.instance_nodes, derive_seed(seed, &[0]))
        .map_err(|e| e.to_string())?;
    let items: Vec<usize> = (1..=args.m_max).collect();
    let dic = dic_sweep(
        args.n_max,
        &items,
        &[0.0, 0.01],
        args.samples,
        derive_seed(seed, &[1]),
    )
    .map_err(|e| e.to_string())?;
    eprintln!(
        "checked {} instances and {} deviations on {} trees in {:.1}s",
        outcomes.instances,
        dic.comparisons,
        dic.trees,
        started.elapsed().as_secs_f64()
    );
    let violation = !outcomes.failures.is_empty() || !dic.violations.is_empty();
    let text = if violation {
        json(&serde_json::json!({
            "instance_failures": outcomes.failures,
            "dic_counterexamples": dic.violations,
        }))?
    } else {
        json(&serde_json::json!({
            "instances": outcomes.instances,
            "ir_violations": 0,
            "feasibility_violations": 0,
            "trees": dic.trees,
            "comparisons": dic.comparisons,
            "dic_violations": 0,
            "min_z": dic.min_z,
        }))?
    };
    Ok(Output { text, violation })
}
