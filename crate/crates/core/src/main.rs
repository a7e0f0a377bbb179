use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::Value;

use kspoa::dynamics::{Cor1Reading, GroupSizeDistribution, StopRule};
use kspoa::equilibrium::is_ksne;
use kspoa::experiments::{
    run_bounds_sweep, run_design_sweep, run_dynamics_mc, run_worst_case, sweep_sizes, write_bounds_csv,
    write_design_csv, write_final_csv, write_summary_csv, write_trace_csv, DynamicsMcConfig, GameSource, GroupSizes,
    SweepConfig,
};
use kspoa::game::{GameFile, JointAction, RandomGameConfig, WelfareSpec};
use kspoa::{Error, Result};

/// k-strong price of anarchy bounds, utility design and coalitional dynamics
/// for resource allocation games.
#[derive(Debug, Parser)]
#[command(name = "kspoa", version)]
struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Solve linear programs in rational arithmetic.
    #[arg(long, global = true)]
    exact: bool,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file whose keys mirror the long flag names; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tight bound 1/P*(n, w, k) on the k-strong price of anarchy.
    SpoaBound(SweepArgs),
    /// Best single-size utility rules and the design upper bound.
    UtilityDesign(SweepArgs),
    /// Ring instance attaining the bound, in game JSON.
    WorstCase(WorstCaseArgs),
    /// Monte Carlo runs of the coalitional best-response dynamics.
    Simulate(SimulateArgs),
    /// Checks a joint action against every coalition of size k.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Largest coalition size (default n).
    #[arg(long)]
    k: Option<usize>,
    /// Emit one row for every size 1..=k.
    #[arg(long)]
    all_k: bool,
    /// Truncate the sweep at this size.
    #[arg(long)]
    max_k: Option<usize>,
    /// `covering`, `exp5`, or a JSON file holding a table.
    #[arg(long)]
    welfare: Option<String>,
}

#[derive(Debug, Args)]
struct WorstCaseArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    welfare: Option<String>,
    /// Also check the instance by enumeration and print the report to stderr.
    #[arg(long)]
    verify: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Game JSON file.
    #[arg(long, conflicts_with = "random")]
    game: Option<PathBuf>,
    /// Random-instance JSON file, or `numerical-study` for the 25-agent setup.
    #[arg(long)]
    random: Option<String>,
    /// Welfare rule for random instances.
    #[arg(long)]
    welfare: Option<String>,
    /// Coalition sizes, one arm each.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Explicit group-size probabilities `p_1,..,p_K`.
    #[arg(long, conflicts_with = "cor1")]
    p: Option<String>,
    /// Draw sizes from the multipliers of the combined program.
    #[arg(long)]
    cor1: bool,
    /// With --cor1, weight by the multipliers alone.
    #[arg(long, requires = "cor1")]
    literal: bool,
    /// Revisions per trial.
    #[arg(long = "T", alias = "horizon")]
    horizon: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// `fixed-horizon` or `until-equilibrium`.
    #[arg(long)]
    stop: Option<String>,
    /// `async` or `round-robin`.
    #[arg(long)]
    dynamics: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    game: Option<PathBuf>,
    /// Comma-separated action indices, one per agent.
    #[arg(long)]
    joint_action: Option<String>,
    #[arg(long)]
    k: Option<usize>,
}

/// Values from the `--config` file, keyed by long flag name.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    exact: Option<bool>,
    out: Option<PathBuf>,
    n: Option<usize>,
    k: Option<Value>,
    all_k: Option<bool>,
    max_k: Option<usize>,
    welfare: Option<Value>,
    verify: Option<bool>,
    game: Option<PathBuf>,
    random: Option<Value>,
    p: Option<Value>,
    cor1: Option<bool>,
    literal: Option<bool>,
    #[serde(rename = "T", alias = "horizon")]
    horizon: Option<u64>,
    trials: Option<u64>,
    stop: Option<StopRule>,
    dynamics: Option<String>,
    joint_action: Option<Value>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(io::BufReader::new(File::open(path)?))?)
}

/// A registered name, or a JSON file with `{"table": [...]}`, `{"name": ..}` or a bare array.
fn parse_welfare(text: &str) -> Result<WelfareSpec> {
    let path = Path::new(text);
    if text.ends_with(".json") || path.is_file() {
        let value: Value = read_json(path)?;
        return welfare_from_value(&value);
    }
    Ok(WelfareSpec::named(text))
}

fn welfare_from_value(value: &Value) -> Result<WelfareSpec> {
    match value {
        Value::String(s) => parse_welfare(s),
        Value::Array(_) => Ok(WelfareSpec::Table {
            table: serde_json::from_value(value.clone())?,
        }),
        _ => Ok(serde_json::from_value(value.clone())?),
    }
}

fn welfare_arg(flag: &Option<String>, cfg: &FileConfig, default: &str) -> Result<WelfareSpec> {
    match (flag, &cfg.welfare) {
        (Some(text), _) => parse_welfare(text),
        (None, Some(v)) => welfare_from_value(v),
        (None, None) => Ok(WelfareSpec::named(default)),
    }
}

fn ks_from_value(v: &Value) -> Result<Vec<usize>> {
    match v {
        Value::Number(_) => Ok(vec![serde_json::from_value(v.clone())?]),
        _ => Ok(serde_json::from_value(v.clone())?),
    }
}

fn single_k(flag: Option<usize>, cfg: &FileConfig) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match &cfg.k {
        None => Ok(None),
        Some(v) => {
            let ks = ks_from_value(v)?;
            match ks.as_slice() {
                [k] => Ok(Some(*k)),
                _ => Err(invalid("`k` must be a single size here")),
            }
        }
    }
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| invalid(format!("--{name} is required")))
}

struct Globals {
    seed: u64,
    exact: bool,
    out: Option<PathBuf>,
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `dir/trace.csv` with `summary` gives `dir/trace.summary.csv`.
fn sibling(path: &Path, tag: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{tag}.{ext}"))
}

fn sweep_config(args: &SweepArgs, cfg: &FileConfig, g: &Globals) -> Result<SweepConfig> {
    let n = required(args.n.or(cfg.n), "n")?;
    let ks = sweep_sizes(
        n,
        single_k(args.k, cfg)?,
        args.all_k || cfg.all_k.unwrap_or(false),
        args.max_k.or(cfg.max_k),
    )?;
    Ok(SweepConfig {
        n,
        ks,
        welfare: welfare_arg(&args.welfare, cfg, "covering")?,
        exact: g.exact,
    })
}

fn spoa_bound(args: &SweepArgs, cfg: &FileConfig, g: &Globals) -> Result<()> {
    let rows = run_bounds_sweep(&sweep_config(args, cfg, g)?)?;
    write_bounds_csv(&rows, open_out(&g.out)?)?;
    report_row_errors(rows.iter().filter_map(|r| r.result.as_ref().err().map(|e| (r.k, e))))
}

fn utility_design(args: &SweepArgs, cfg: &FileConfig, g: &Globals) -> Result<()> {
    let sweep = run_design_sweep(&sweep_config(args, cfg, g)?)?;
    write_design_csv(&sweep, open_out(&g.out)?)?;
    if let Some(out) = &g.out {
        let sidecar = sibling(out, "rules", "json");
        serde_json::to_writer_pretty(BufWriter::new(File::create(&sidecar)?), &sweep)?;
    }
    report_row_errors(sweep.rows.iter().filter_map(|r| r.result.as_ref().err().map(|e| (r.k, e))))
}

fn report_row_errors<'a>(errors: impl Iterator<Item = (usize, &'a String)>) -> Result<()> {
    let mut failed = 0;
    for (k, e) in errors {
        eprintln!("k = {k}: {e}");
        failed += 1;
    }
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} row(s) failed")));
    }
    Ok(())
}

fn worst_case(args: &WorstCaseArgs, cfg: &FileConfig, g: &Globals) -> Result<()> {
    if g.exact {
        return Err(invalid("--exact is not supported by worst-case"));
    }
    let n = required(args.n.or(cfg.n), "n")?;
    let k = required(single_k(args.k, cfg)?, "k")?;
    let welfare = welfare_arg(&args.welfare, cfg, "covering")?;
    let verify = args.verify || cfg.verify.unwrap_or(false);
    let (_, wc) = run_worst_case(n, &welfare, k, verify)?;
    let mut out = open_out(&g.out)?;
    serde_json::to_writer_pretty(&mut out, &wc.ring)?;
    writeln!(out)?;
    out.flush()?;
    if let Some(report) = &wc.report {
        eprintln!("{}", serde_json::to_string_pretty(report)?);
        if !report.passed {
            return Err(Error::Numerical("constructed instance does not attain the bound".into()));
        }
    }
    Ok(())
}

fn simulate(args: &SimulateArgs, cfg: &FileConfig, g: &Globals) -> Result<()> {
    if g.exact {
        return Err(invalid("--exact is not supported by simulate"));
    }
    let source = if let Some(path) = args.game.as_ref().or(cfg.game.as_ref()) {
        GameSource::File(GameFile::load(path)?)
    } else {
        let random = match (&args.random, &cfg.random) {
            (Some(text), _) => random_from_text(text)?,
            (None, Some(Value::String(text))) => random_from_text(text)?,
            (None, Some(v)) => serde_json::from_value(v.clone())?,
            (None, None) => return Err(invalid("one of --game or --random is required")),
        };
        GameSource::Random(random)
    };
    let welfare = welfare_arg(&args.welfare, cfg, "exp5")?;
    let mut ks = args.k.clone();
    if ks.is_empty() {
        if let Some(v) = &cfg.k {
            ks = ks_from_value(v)?;
        }
    }
    let p = match (&args.p, &cfg.p) {
        (Some(text), _) => Some(GroupSizeDistribution::parse(text)?),
        (None, Some(Value::String(text))) => Some(GroupSizeDistribution::parse(text)?),
        (None, Some(v)) => Some(serde_json::from_value(v.clone())?),
        (None, None) => None,
    };
    let cor1 = args.cor1 || cfg.cor1.unwrap_or(false);
    let sizes = match (p, cor1) {
        (Some(_), true) => return Err(invalid("--p and --cor1 are mutually exclusive")),
        (Some(p), false) => GroupSizes::Distribution(p),
        (None, true) => GroupSizes::Corollary1 {
            ks: required((!ks.is_empty()).then_some(ks), "k")?,
            reading: if args.literal || cfg.literal.unwrap_or(false) {
                Cor1Reading::Literal
            } else {
                Cor1Reading::BinomWeighted
            },
        },
        (None, false) => GroupSizes::Exactly(required((!ks.is_empty()).then_some(ks), "k")?),
    };
    let stop = match (&args.stop, cfg.stop) {
        (Some(text), _) => serde_json::from_value(Value::String(text.clone()))
            .map_err(|_| invalid(format!("unknown stop rule `{text}`")))?,
        (None, Some(s)) => s,
        (None, None) => StopRule::FixedHorizon,
    };
    let mc = DynamicsMcConfig {
        source,
        welfare,
        sizes,
        horizon: required(args.horizon.or(cfg.horizon), "T")?,
        trials: args.trials.or(cfg.trials).unwrap_or(1),
        seed: g.seed,
        stop,
        dynamics: args
            .dynamics
            .clone()
            .or_else(|| cfg.dynamics.clone())
            .unwrap_or_else(|| "async".into()),
        optimum: false,
    };
    let out = run_dynamics_mc(&mc)?;
    match &g.out {
        Some(path) => {
            write_trace_csv(&out, BufWriter::new(File::create(path)?))?;
            write_summary_csv(&out, BufWriter::new(File::create(sibling(path, "summary", "csv"))?))?;
            write_final_csv(&out, BufWriter::new(File::create(sibling(path, "final", "csv"))?))?;
        }
        None => write_summary_csv(&out, open_out(&None)?)?,
    }
    Ok(())
}

fn random_from_text(text: &str) -> Result<RandomGameConfig> {
    if text == "numerical-study" {
        return Ok(RandomGameConfig::numerical_study());
    }
    read_json(Path::new(text))
}

fn verify(args: &VerifyArgs, cfg: &FileConfig, g: &Globals) -> Result<()> {
    if g.exact {
        return Err(invalid("--exact is not supported by verify"));
    }
    let file = GameFile::load(required(args.game.as_ref().or(cfg.game.as_ref()), "game")?)?;
    let a = match (&args.joint_action, &cfg.joint_action) {
        (Some(text), _) => JointAction::parse(text)?,
        (None, Some(Value::String(text))) => JointAction::parse(text)?,
        (None, Some(v)) => JointAction(serde_json::from_value(v.clone())?),
        (None, None) => return Err(invalid("--joint-action is required")),
    };
    let k = required(single_k(args.k, cfg)?, "k")?;
    let game = file.game()?;
    let report = is_ksne(&game, &file.welfare_rule()?, &a, k)?;
    let mut out = open_out(&g.out)?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg: FileConfig = match &cli.config {
        Some(path) => read_json(path)?,
        None => FileConfig::default(),
    };
    if let Some(threads) = cli.threads.or(cfg.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| invalid(e.to_string()))?;
    }
    let g = Globals {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        exact: cli.exact || cfg.exact.unwrap_or(false),
        out: cli.out.clone().or_else(|| cfg.out.clone()),
    };
    match &cli.command {
        Command::SpoaBound(a) => spoa_bound(a, &cfg, &g),
        Command::UtilityDesign(a) => utility_design(a, &cfg, &g),
        Command::WorstCase(a) => worst_case(a, &cfg, &g),
        Command::Simulate(a) => simulate(a, &cfg, &g),
        Command::Verify(a) => verify(a, &cfg, &g),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
