//! Drivers behind the command-line subcommands: bound and design sweeps,
//! Monte Carlo runs of the dynamics, and worst-case instance export.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{solve_q_k_with, solve_q_zeta_with, DesignUpperBound, UtilityDesign, TIGHTNESS_RTOL};
use crate::dynamics::{
    corollary1_distribution, dynamics_registry, Cor1Reading, DynamicsInput, DynamicsTrace, GroupSizeDistribution, TraceStep,
    StopRule,
};
use crate::equilibrium::{check_k, optimal_welfare};
use crate::error::{Error, Result};
use crate::game::{random_game_with, GameFile, JointAction, RandomGameConfig, ResourceGame, WelfareRule, WelfareSpec};
use crate::lp::approx_eq;
use crate::poa::{solve_p_k, solve_p_k_exact, PoaBound};
use crate::worstcase::{build_ring_game, verify_tightness, RingGame, TightnessReport};

/// Bumped whenever a CSV layout changes; written in each file's first line.
pub const SCHEMA_VERSION: u32 = 1;

/// Writes the `# kspoa <kind> schema v<N>` line and returns a CSV writer.
pub fn csv_writer<W: Write>(mut out: W, kind: &str) -> Result<csv::Writer<W>> {
    writeln!(out, "# kspoa {kind} schema v{SCHEMA_VERSION}")?;
    Ok(csv::Writer::from_writer(out))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Group sizes a sweep visits: just `k`, or `1..=k` with `all_k`, cut at `max_k`.
pub fn sweep_sizes(n: usize, k: Option<usize>, all_k: bool, max_k: Option<usize>) -> Result<Vec<usize>> {
    let top = k.unwrap_or(n);
    check_k(n, top)?;
    let top = max_k.map_or(top, |m| m.min(top));
    if top == 0 {
        return Err(Error::InvalidArgument("--max-k must be at least 1".into()));
    }
    Ok(if all_k || k.is_none() { (1..=top).collect() } else { vec![top] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: usize,
    pub ks: Vec<usize>,
    pub welfare: WelfareSpec,
    #[serde(default)]
    pub exact: bool,
}

/// One sweep cell; LP failures are kept per row instead of aborting the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row<T> {
    pub n: usize,
    pub k: usize,
    pub result: std::result::Result<T, String>,
}

fn run_cells<T: Send>(ks: &[usize], f: impl Fn(usize) -> Result<T> + Sync + Send) -> Vec<(usize, Result<T>)> {
    ks.par_iter().map(|&k| (k, f(k))).collect()
}

pub fn run_bounds_sweep(cfg: &SweepConfig) -> Result<Vec<Row<PoaBound>>> {
    let w = cfg.welfare.resolve(cfg.n)?;
    let n = cfg.n;
    Ok(run_cells(&cfg.ks, |k| {
        if cfg.exact {
            solve_p_k_exact(n, &w, k).map(|(b, _)| b)
        } else {
            solve_p_k(n, &w, k)
        }
    })
    .into_iter()
    .map(|(k, r)| Row {
        n,
        k,
        result: r.map_err(|e| e.to_string()),
    })
    .collect())
}

/// Columns `n, k, rho_star, spoa, nu_1..nu_K[, rho_star_exact], error`.
pub fn write_bounds_csv<W: Write>(rows: &[Row<PoaBound>], out: W) -> Result<()> {
    let width = rows.iter().map(|r| r.k).max().unwrap_or(0);
    let exact = rows
        .iter()
        .any(|r| matches!(&r.result, Ok(b) if b.rho_star_exact.is_some()));
    let mut wr = csv_writer(out, "bounds")?;
    let mut header: Vec<String> = ["n", "k", "rho_star", "spoa"].map(String::from).to_vec();
    header.extend((1..=width).map(|z| format!("nu_{z}")));
    if exact {
        header.push("rho_star_exact".into());
    }
    header.push("error".into());
    wr.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![row.n.to_string(), row.k.to_string()];
        match &row.result {
            Ok(b) => {
                rec.push(b.rho_star.to_string());
                rec.push(b.spoa.to_string());
                rec.extend((0..width).map(|i| b.nu_star.get(i).map_or(String::new(), f64::to_string)));
                if exact {
                    rec.push(b.rho_star_exact.clone().unwrap_or_default());
                }
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 2 + width + exact as usize));
                rec.push(e.clone());
            }
        }
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub spoa_welfare: f64,
    pub rho_tilde_min: f64,
    pub best_zeta: usize,
    pub q_star: f64,
    pub design_lower: f64,
    pub design_upper: f64,
    pub tight: bool,
}

/// Rows plus the tabulated rules, which go to the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSweep {
    pub n: usize,
    pub welfare: String,
    pub rows: Vec<Row<DesignRow>>,
    /// Single-size designs for `z = 1..=max k`.
    pub designs: Vec<Row<UtilityDesign>>,
    pub upper: Vec<Row<DesignUpperBound>>,
}

pub fn run_design_sweep(cfg: &SweepConfig) -> Result<DesignSweep> {
    let n = cfg.n;
    let w = cfg.welfare.resolve(n)?;
    let top = cfg.ks.iter().copied().max().unwrap_or(0);
    let zetas: Vec<usize> = (1..=top).collect();
    let designs = run_cells(&zetas, |z| solve_q_zeta_with(n, &w, z, cfg.exact));
    let cells = run_cells(&cfg.ks, |k| {
        let bound = if cfg.exact {
            solve_p_k_exact(n, &w, k)?.0
        } else {
            solve_p_k(n, &w, k)?
        };
        Ok((bound, solve_q_k_with(n, &w, k, cfg.exact)?))
    });
    let mut rows = Vec::with_capacity(cells.len());
    let mut upper = Vec::with_capacity(cells.len());
    for (k, cell) in cells {
        let result = cell.map_err(|e| e.to_string()).and_then(|(bound, q)| {
            let best = designs[..k]
                .iter()
                .map(|(_, d)| d.as_ref().map_err(|e| e.to_string()))
                .collect::<std::result::Result<Vec<_>, _>>()?
                .into_iter()
                .fold(None::<&UtilityDesign>, |b, d| match b {
                    Some(b) if b.rho_tilde <= d.rho_tilde => Some(b),
                    _ => Some(d),
                })
                .expect("k >= 1")
                .clone();
            upper.push(Row {
                n,
                k,
                result: Ok(q.clone()),
            });
            Ok(DesignRow {
                spoa_welfare: bound.spoa,
                rho_tilde_min: best.rho_tilde,
                best_zeta: best.zeta,
                q_star: q.q_star,
                design_lower: 1.0 / best.rho_tilde,
                design_upper: q.spoa_upper,
                tight: approx_eq(best.rho_tilde, q.q_star, TIGHTNESS_RTOL),
            })
        });
        rows.push(Row { n, k, result });
    }
    Ok(DesignSweep {
        n,
        welfare: cfg.welfare.label(),
        rows,
        designs: designs
            .into_iter()
            .map(|(z, r)| Row {
                n,
                k: z,
                result: r.map_err(|e| e.to_string()),
            })
            .collect(),
        upper,
    })
}

pub fn write_design_csv<W: Write>(sweep: &DesignSweep, out: W) -> Result<()> {
    let mut wr = csv_writer(out, "design")?;
    wr.write_record([
        "n",
        "k",
        "spoa_welfare",
        "rho_tilde_min",
        "best_zeta",
        "q_star",
        "design_lower",
        "design_upper",
        "tight",
        "error",
    ])
    .map_err(csv_err)?;
    for row in &sweep.rows {
        let mut rec = vec![row.n.to_string(), row.k.to_string()];
        match &row.result {
            Ok(d) => rec.extend([
                d.spoa_welfare.to_string(),
                d.rho_tilde_min.to_string(),
                d.best_zeta.to_string(),
                d.q_star.to_string(),
                d.design_lower.to_string(),
                d.design_upper.to_string(),
                d.tight.to_string(),
                String::new(),
            ]),
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(e.clone());
            }
        }
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Where the Monte Carlo instances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameSource {
    File(GameFile),
    /// A fresh instance per trial.
    Random(RandomGameConfig),
}

impl GameSource {
    pub fn num_agents(&self) -> usize {
        match self {
            Self::File(f) => f.n,
            Self::Random(c) => c.agents,
        }
    }
}

/// How the group size is drawn in each arm of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupSizes {
    /// One arm per listed `k`, each with all mass on `k`.
    Exactly(Vec<usize>),
    /// One arm with this distribution.
    Distribution(GroupSizeDistribution),
    /// One arm per `k`, with sizes drawn from the multipliers of the combined program.
    Corollary1 { ks: Vec<usize>, reading: Cor1Reading },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsMcConfig {
    pub source: GameSource,
    pub welfare: WelfareSpec,
    pub sizes: GroupSizes,
    pub horizon: u64,
    pub trials: u64,
    pub seed: u64,
    pub stop: StopRule,
    pub dynamics: String,
    /// Also compute `W(a*)` by enumeration for each instance.
    #[serde(default)]
    pub optimum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub k: usize,
    pub p: GroupSizeDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub arm: usize,
    pub trial: u64,
    pub trace: DynamicsTrace,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_welfare: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub k: usize,
    pub t: u64,
    pub mean_welfare: f64,
    pub se_welfare: f64,
    pub mean_cum_evals: f64,
    pub se_cum_evals: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOutput {
    pub arms: Vec<Arm>,
    /// Ordered by trial, then arm.
    pub trials: Vec<TrialOutcome>,
    pub summary: Vec<SummaryRow>,
}

impl McOutput {
    pub fn arm_trials(&self, arm: usize) -> impl Iterator<Item = &TrialOutcome> {
        self.trials.iter().filter(move |t| t.arm == arm)
    }
}

/// Mean and standard error of the mean (zero for a single sample).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn arms(cfg: &DynamicsMcConfig, w: &WelfareRule) -> Result<Vec<Arm>> {
    let n = cfg.source.num_agents();
    match &cfg.sizes {
        GroupSizes::Exactly(ks) => ks
            .iter()
            .map(|&k| {
                check_k(n, k)?;
                Ok(Arm {
                    k,
                    p: GroupSizeDistribution::delta(k)?,
                })
            })
            .collect(),
        GroupSizes::Distribution(p) => {
            p.check_agents(n)?;
            Ok(vec![Arm {
                k: p.max_size(),
                p: p.clone(),
            }])
        }
        GroupSizes::Corollary1 { ks, reading } => ks
            .iter()
            .map(|&k| {
                let bound = solve_p_k(n, w, k)?;
                Ok(Arm {
                    k,
                    p: corollary1_distribution(n, k, &bound.nu_star, *reading)?,
                })
            })
            .collect(),
    }
}

/// Trial `i` uses stream `i` of the master seed: the instance and initial
/// action are drawn first, then every arm continues from a copy of that
/// generator, so arms see common random numbers and results do not depend on
/// the thread count.
pub fn run_dynamics_mc(cfg: &DynamicsMcConfig) -> Result<McOutput> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let n = cfg.source.num_agents();
    let w = match &cfg.source {
        GameSource::File(f) => f.welfare_rule()?,
        GameSource::Random(_) => cfg.welfare.resolve(n)?,
    };
    let dynamics = dynamics_registry().get(&cfg.dynamics)?;
    let arms = arms(cfg, &w)?;
    let fixed = match &cfg.source {
        GameSource::File(f) => Some(f.game()?),
        GameSource::Random(c) => {
            c.validate()?;
            None
        }
    };
    let per_trial: Vec<Vec<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(trial);
            let drawn;
            let game: &ResourceGame = match (&fixed, &cfg.source) {
                (Some(g), _) => g,
                (None, GameSource::Random(c)) => {
                    drawn = random_game_with(c, &mut rng)?;
                    &drawn
                }
                (None, GameSource::File(_)) => unreachable!("file games are loaded up front"),
            };
            let a0 = JointAction::random(game, &mut rng);
            let optimal_welfare = if cfg.optimum {
                Some(optimal_welfare(game, &w)?.1)
            } else {
                None
            };
            arms.iter()
                .enumerate()
                .map(|(i, arm)| {
                    let mut arm_rng = rng.clone();
                    let mut trace = dynamics.run(
                        DynamicsInput {
                            game,
                            objective: &w,
                            welfare: &w,
                            k: arm.k,
                            p: &arm.p,
                            a0: a0.clone(),
                            horizon: cfg.horizon,
                            stop: cfg.stop,
                        },
                        &mut arm_rng,
                    )?;
                    trace.seed = Some(cfg.seed);
                    Ok(TrialOutcome {
                        arm: i,
                        trial,
                        trace,
                        optimal_welfare,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let trials: Vec<TrialOutcome> = per_trial.into_iter().flatten().collect();
    let summary = summarize(&arms, &trials);
    Ok(McOutput { arms, trials, summary })
}

/// Per arm and revision count: mean and standard error across trials; a trial
/// that stopped early keeps its last state.
fn summarize(arms: &[Arm], trials: &[TrialOutcome]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (i, arm) in arms.iter().enumerate() {
        let traces: Vec<&DynamicsTrace> = trials.iter().filter(|t| t.arm == i).map(|t| &t.trace).collect();
        let horizon = traces.iter().map(|t| t.steps.len()).max().unwrap_or(0);
        for t in 0..horizon {
            let at: Vec<&TraceStep> = traces.iter().map(|tr| &tr.steps[t.min(tr.steps.len() - 1)]).collect();
            let welf: Vec<f64> = at.iter().map(|s| s.welfare).collect();
            let evals: Vec<f64> = at.iter().map(|s| s.cum_evals as f64).collect();
            let (mean_welfare, se_welfare) = mean_se(&welf);
            let (mean_cum_evals, se_cum_evals) = mean_se(&evals);
            rows.push(SummaryRow {
                k: arm.k,
                t: t as u64,
                mean_welfare,
                se_welfare,
                mean_cum_evals,
                se_cum_evals,
                trials: traces.len() as u64,
            });
        }
    }
    rows
}

/// Columns `k, trial, t, group_size, changed, welfare, cum_welfare_evals`.
pub fn write_trace_csv<W: Write>(out: &McOutput, w: W) -> Result<()> {
    let mut wr = csv_writer(w, "trace")?;
    wr.write_record(["k", "trial", "t", "group_size", "changed", "welfare", "cum_welfare_evals"])
        .map_err(csv_err)?;
    for trial in &out.trials {
        let k = out.arms[trial.arm].k.to_string();
        for s in &trial.trace.steps {
            wr.write_record([
                k.clone(),
                trial.trial.to_string(),
                s.t.to_string(),
                s.group.len().to_string(),
                (s.changed as u8).to_string(),
                s.welfare.to_string(),
                s.cum_evals.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Mean welfare against revisions, with the mean evaluation count alongside.
pub fn write_summary_csv<W: Write>(out: &McOutput, w: W) -> Result<()> {
    let mut wr = csv_writer(w, "summary")?;
    for row in &out.summary {
        wr.serialize(row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FinalRow {
    k: usize,
    trial: u64,
    revisions: u64,
    total_evals: u64,
    final_welfare: f64,
    mean_welfare: f64,
    converged: bool,
}

/// One row per trial and arm: total evaluations against attained welfare.
pub fn write_final_csv<W: Write>(out: &McOutput, w: W) -> Result<()> {
    let mut wr = csv_writer(w, "final")?;
    for t in &out.trials {
        wr.serialize(FinalRow {
            k: out.arms[t.arm].k,
            trial: t.trial,
            revisions: t.trace.revisions(),
            total_evals: t.trace.total_evals(),
            final_welfare: t.trace.final_welfare(),
            mean_welfare: t.trace.mean_welfare(),
            converged: t.trace.converged,
        })
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCase {
    pub ring: GameFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<TightnessReport>,
}

/// Builds the ring instance from an optimal `theta`, optionally checking it by enumeration.
pub fn run_worst_case(n: usize, welfare: &WelfareSpec, k: usize, verify: bool) -> Result<(RingGame, WorstCase)> {
    let w = welfare.resolve(n)?;
    let theta = crate::poa::solve_primal_d(n, &w, k)?;
    let ring = build_ring_game(n, &w, &theta)?;
    let report = if verify {
        Some(verify_tightness(&ring, &w, k)?)
    } else {
        None
    };
    let file = ring.to_file(welfare.clone());
    Ok((ring, WorstCase { ring: file, report }))
}
