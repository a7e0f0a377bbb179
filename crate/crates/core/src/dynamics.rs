//! Coalitional best-response dynamics: deterministic round-robin over all
//! size-k groups, and asynchronous revisions by randomly drawn groups.

use std::sync::OnceLock;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{check_k, coalitions, is_ksne, restore_group, scan_group, strip_group, EQUILIBRIUM_TOL};
use crate::error::{Error, Result};
use crate::game::{welfare, JointAction, LoadTracker, LocalRule, ResourceGame, WelfareRule};
use crate::labels::binom;
use crate::poa::SmoothnessCertificate;
use crate::registry::Registry;

/// Probabilities `p[z - 1]` of drawing a group of size `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GroupSizeDistribution {
    p: Vec<f64>,
}

impl GroupSizeDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "group-size probabilities must be nonnegative and finite, got {p:?}"
            )));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "group-size probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { p })
    }

    /// All mass on size `zeta`.
    pub fn delta(zeta: usize) -> Result<Self> {
        if zeta == 0 {
            return Err(Error::InvalidArgument("group size must be at least 1".into()));
        }
        let mut p = vec![0.0; zeta];
        p[zeta - 1] = 1.0;
        Self::new(p)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let p = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad probability `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(p)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// Largest size with positive probability.
    pub fn max_size(&self) -> usize {
        self.p.iter().rposition(|v| *v > 0.0).map_or(0, |i| i + 1)
    }

    pub fn check_agents(&self, n: usize) -> Result<()> {
        if self.max_size() > n {
            return Err(Error::InvalidArgument(format!(
                "groups of size {} drawn with {n} agents",
                self.max_size()
            )));
        }
        Ok(())
    }

    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> usize {
        let mut u: f64 = rng.gen();
        for (i, p) in self.p.iter().enumerate() {
            if u < *p {
                return i + 1;
            }
            u -= p;
        }
        self.max_size()
    }
}

impl TryFrom<Vec<f64>> for GroupSizeDistribution {
    type Error = Error;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        Self::new(p)
    }
}

impl From<GroupSizeDistribution> for Vec<f64> {
    fn from(d: GroupSizeDistribution) -> Self {
        d.p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cor1Reading {
    /// `p_z` proportional to `C(n, z) nu*_z`.
    BinomWeighted,
    /// `p_z` proportional to `nu*_z`.
    Literal,
}

/// Group-size distribution built from the multipliers of the combined program.
pub fn corollary1_distribution(
    n: usize,
    k: usize,
    nu_star: &[f64],
    reading: Cor1Reading,
) -> Result<GroupSizeDistribution> {
    check_k(n, k)?;
    if nu_star.len() != k {
        return Err(Error::InvalidArgument(format!(
            "expected {k} multipliers, got {}",
            nu_star.len()
        )));
    }
    let weights = nu_star
        .iter()
        .enumerate()
        .map(|(i, nu)| {
            let nu = nu.max(0.0);
            Ok(match reading {
                Cor1Reading::BinomWeighted => binom(n as u64, i as u64 + 1)? as f64 * nu,
                Cor1Reading::Literal => nu,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("all multipliers are zero".into()));
    }
    GroupSizeDistribution::new(weights.iter().map(|v| v / total).collect())
}

/// `(sum_z p_z lambda_z) / (1 + sum_z p_z mu_z)`.
pub fn mixture_guarantee(certificates: &[SmoothnessCertificate], p: &GroupSizeDistribution) -> Result<f64> {
    let mut lam = 0.0;
    let mut mu = 0.0;
    for (i, pz) in p.probabilities().iter().enumerate().filter(|(_, pz)| **pz > 0.0) {
        let cert = certificates
            .iter()
            .find(|c| c.zeta == i + 1)
            .ok_or_else(|| Error::InvalidArgument(format!("no certificate for group size {}", i + 1)))?;
        lam += pz * cert.lambda;
        mu += pz * cert.mu;
    }
    Ok(lam / (1.0 + mu))
}

/// `(T - 1)/(2T)` times the mixture guarantee times `W(a*)`.
pub fn transient_bound(
    certificates: &[SmoothnessCertificate],
    p: &GroupSizeDistribution,
    horizon: u64,
    w_opt: f64,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let t = horizon as f64;
    Ok((t - 1.0) / (2.0 * t) * mixture_guarantee(certificates, p)? * w_opt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: u64,
    pub group: Vec<usize>,
    pub changed: bool,
    pub welfare: f64,
    pub cum_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTrace {
    /// Starts with the initial state at `t = 0`.
    pub steps: Vec<TraceStep>,
    pub final_action: JointAction,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DynamicsTrace {
    pub fn revisions(&self) -> u64 {
        self.steps.last().map_or(0, |s| s.t)
    }

    pub fn total_evals(&self) -> u64 {
        self.steps.last().map_or(0, |s| s.cum_evals)
    }

    pub fn final_welfare(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.welfare)
    }

    /// `(1/T) sum_{t=1}^T W(a^t)`; the initial welfare when no revision took place.
    pub fn mean_welfare(&self) -> f64 {
        if self.steps.len() <= 1 {
            return self.steps.first().map_or(0.0, |s| s.welfare);
        }
        let tail = &self.steps[1..];
        tail.iter().map(|s| s.welfare).sum::<f64>() / tail.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupResponse {
    /// New action indices for the group members, in group order.
    pub choice: Vec<usize>,
    pub evals: u64,
    pub changed: bool,
    /// Objective value after the response.
    pub value: f64,
}

/// Current state of a trajectory with incrementally maintained objective and welfare.
struct State<'a> {
    game: &'a ResourceGame,
    objective: LoadTracker<'a>,
    /// `None` when the objective is the welfare rule itself.
    welfare: Option<LoadTracker<'a>>,
    a: JointAction,
    value: f64,
    welfare_value: f64,
    leaves: Vec<f64>,
}

impl<'a> State<'a> {
    fn new<R: LocalRule + ?Sized>(
        game: &'a ResourceGame,
        objective: &'a R,
        w: &'a WelfareRule,
        a: JointAction,
    ) -> Result<Self> {
        game.check_joint(&a)?;
        game.check_rule(objective)?;
        game.check_rule(w)?;
        let value = welfare(game, objective, &a);
        let same = objective.table() == w.table();
        let welfare_value = if same { value } else { welfare(game, w, &a) };
        Ok(Self {
            game,
            objective: LoadTracker::new(game, objective, &a),
            welfare: (!same).then(|| LoadTracker::new(game, w, &a)),
            a,
            value,
            welfare_value,
            leaves: Vec::new(),
        })
    }

    fn respond<G: Rng + ?Sized>(&mut self, gamma: &[usize], rng: &mut G) -> GroupResponse {
        let stripped = strip_group(&mut self.objective, &self.a, gamma, self.value);
        let current: Vec<usize> = gamma.iter().map(|&i| self.a.0[i]).collect();
        let mut leaves = std::mem::take(&mut self.leaves);
        leaves.clear();
        let mut current_idx = 0usize;
        let mut idx = 0usize;
        let evals = scan_group(self.game, &mut self.objective, stripped, gamma, |choice, v| {
            if choice == current.as_slice() {
                current_idx = idx;
            }
            leaves.push(v);
            idx += 1;
        });
        let best = leaves.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let response = if leaves[current_idx] >= best - EQUILIBRIUM_TOL {
            restore_group(&mut self.objective, &self.a, gamma);
            GroupResponse {
                choice: current,
                evals,
                changed: false,
                value: self.value,
            }
        } else {
            let count = leaves.iter().filter(|v| **v >= best - EQUILIBRIUM_TOL).count();
            let pick = rng.gen_range(0..count);
            let chosen = leaves
                .iter()
                .enumerate()
                .filter(|(_, v)| **v >= best - EQUILIBRIUM_TOL)
                .nth(pick)
                .map(|(i, _)| i)
                .expect("pick is in range");
            let choice = self.decode(gamma, chosen);
            let new_value = leaves[chosen];
            for (&i, &j) in gamma.iter().zip(&choice) {
                self.objective.add(i, j);
                if let Some(wt) = self.welfare.as_mut() {
                    self.welfare_value += wt.remove(i, self.a.0[i]) + wt.add(i, j);
                }
                self.a.0[i] = j;
            }
            self.value = new_value;
            if self.welfare.is_none() {
                self.welfare_value = new_value;
            }
            GroupResponse {
                choice,
                evals,
                changed: true,
                value: new_value,
            }
        };
        self.leaves = leaves;
        response
    }

    /// Group action at lexicographic position `idx` (first member most significant).
    fn decode(&self, gamma: &[usize], mut idx: usize) -> Vec<usize> {
        let mut choice = vec![0; gamma.len()];
        for (d, &i) in gamma.iter().enumerate().rev() {
            let m = self.game.num_actions(i);
            choice[d] = idx % m;
            idx /= m;
        }
        choice
    }
}

/// Best response of `gamma` against the others: stays put when the current
/// group action attains the maximum, otherwise moves to a uniformly random maximizer.
pub fn group_best_response<R: LocalRule + ?Sized, G: Rng + ?Sized>(
    game: &ResourceGame,
    objective: &R,
    a: &JointAction,
    gamma: &[usize],
    rng: &mut G,
) -> Result<GroupResponse> {
    check_group(game, gamma)?;
    let mut state = State::new_objective_only(game, objective, a.clone())?;
    Ok(state.respond(gamma, rng))
}

impl<'a> State<'a> {
    fn new_objective_only<R: LocalRule + ?Sized>(
        game: &'a ResourceGame,
        objective: &'a R,
        a: JointAction,
    ) -> Result<Self> {
        game.check_joint(&a)?;
        game.check_rule(objective)?;
        let value = welfare(game, objective, &a);
        Ok(Self {
            game,
            objective: LoadTracker::new(game, objective, &a),
            welfare: None,
            a,
            value,
            welfare_value: value,
            leaves: Vec::new(),
        })
    }
}

fn check_group(game: &ResourceGame, gamma: &[usize]) -> Result<()> {
    let n = game.num_agents();
    if gamma.is_empty() || gamma.len() > n || gamma.iter().any(|&i| i >= n) {
        return Err(Error::InvalidArgument(format!("invalid group {gamma:?} for {n} agents")));
    }
    if gamma.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!("group {gamma:?} must be strictly increasing")));
    }
    Ok(())
}

/// Sweeps every size-`k` group in `order` (lexicographic by default) until a
/// full round changes nothing.
pub fn round_robin<R: LocalRule + ?Sized, G: Rng + ?Sized>(
    game: &ResourceGame,
    objective: &R,
    w: &WelfareRule,
    k: usize,
    order: Option<&[Vec<usize>]>,
    a0: JointAction,
    rng: &mut G,
) -> Result<DynamicsTrace> {
    let n = game.num_agents();
    check_k(n, k)?;
    let default_order;
    let order = match order {
        Some(o) => {
            let mut sorted: Vec<Vec<usize>> = o.to_vec();
            sorted.sort();
            if sorted != coalitions(n, k) {
                return Err(Error::InvalidArgument(format!(
                    "order must list every size-{k} group exactly once"
                )));
            }
            o
        }
        None => {
            default_order = coalitions(n, k);
            &default_order
        }
    };
    let mut state = State::new(game, objective, w, a0)?;
    let mut steps = vec![TraceStep {
        t: 0,
        group: Vec::new(),
        changed: false,
        welfare: state.welfare_value,
        cum_evals: 0,
    }];
    let mut evals = 0u64;
    let mut t = 0u64;
    loop {
        let mut round_changed = false;
        for gamma in order {
            let r = state.respond(gamma, rng);
            t += 1;
            evals += r.evals;
            round_changed |= r.changed;
            steps.push(TraceStep {
                t,
                group: gamma.clone(),
                changed: r.changed,
                welfare: state.welfare_value,
                cum_evals: evals,
            });
        }
        if !round_changed {
            break;
        }
    }
    Ok(DynamicsTrace {
        steps,
        final_action: state.a,
        converged: true,
        seed: None,
    })
}

/// `(m^n / y + 1) C(n, k) m^k` with `y = sum_{z=1}^k C(n, z) (m - 1)^z`; with
/// `m = 1` there is nothing to improve and one round suffices.
pub fn round_robin_eval_bound(n: usize, m: usize, k: usize) -> Result<f64> {
    check_k(n, k)?;
    let per_round = binom(n as u64, k as u64)? as f64 * (m as f64).powi(k as i32);
    let y: f64 = (1..=k)
        .map(|z| Ok(binom(n as u64, z as u64)? as f64 * ((m - 1) as f64).powi(z as i32)))
        .sum::<Result<f64>>()?;
    if y == 0.0 {
        return Ok(per_round);
    }
    Ok(((m as f64).powi(n as i32) / y + 1.0) * per_round)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Exactly `T` revisions.
    FixedHorizon,
    /// Stop at the first k-SNE (k = largest drawable group size), at most `T` revisions.
    UntilEquilibrium,
}

/// Each step draws a size from `p`, then a uniformly random group of that size, which best-responds.
#[allow(clippy::too_many_arguments)]
pub fn async_best_response<R: LocalRule + ?Sized, G: Rng + ?Sized>(
    game: &ResourceGame,
    objective: &R,
    w: &WelfareRule,
    p: &GroupSizeDistribution,
    a0: JointAction,
    horizon: u64,
    stop: StopRule,
    rng: &mut G,
) -> Result<DynamicsTrace> {
    let n = game.num_agents();
    p.check_agents(n)?;
    let k = p.max_size();
    let mut state = State::new(game, objective, w, a0)?;
    let mut steps = vec![TraceStep {
        t: 0,
        group: Vec::new(),
        changed: false,
        welfare: state.welfare_value,
        cum_evals: 0,
    }];
    let at_equilibrium = |a: &JointAction| -> Result<bool> { Ok(is_ksne(game, objective, a, k)?.is_equilibrium) };
    let mut converged = stop == StopRule::UntilEquilibrium && at_equilibrium(&state.a)?;
    let mut evals = 0u64;
    let mut t = 0u64;
    while t < horizon && !converged {
        let zeta = p.sample(rng);
        let mut gamma = sample(rng, n, zeta).into_vec();
        gamma.sort_unstable();
        let r = state.respond(&gamma, rng);
        t += 1;
        evals += r.evals;
        steps.push(TraceStep {
            t,
            group: gamma,
            changed: r.changed,
            welfare: state.welfare_value,
            cum_evals: evals,
        });
        if stop == StopRule::UntilEquilibrium && r.changed {
            converged = at_equilibrium(&state.a)?;
        }
    }
    Ok(DynamicsTrace {
        steps,
        final_action: state.a,
        converged,
        seed: None,
    })
}

/// Everything a dynamics variant may need; unused fields are ignored.
pub struct DynamicsInput<'a> {
    pub game: &'a ResourceGame,
    pub objective: &'a dyn LocalRule,
    pub welfare: &'a WelfareRule,
    pub k: usize,
    pub p: &'a GroupSizeDistribution,
    pub a0: JointAction,
    pub horizon: u64,
    pub stop: StopRule,
}

pub trait Dynamics: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, input: DynamicsInput<'_>, rng: &mut ChaCha8Rng) -> Result<DynamicsTrace>;
}

pub struct RoundRobin;

impl Dynamics for RoundRobin {
    fn name(&self) -> &'static str {
        "round-robin"
    }

    fn run(&self, input: DynamicsInput<'_>, rng: &mut ChaCha8Rng) -> Result<DynamicsTrace> {
        round_robin(input.game, input.objective, input.welfare, input.k, None, input.a0, rng)
    }
}

pub struct AsyncBestResponse;

impl Dynamics for AsyncBestResponse {
    fn name(&self) -> &'static str {
        "async"
    }

    fn run(&self, input: DynamicsInput<'_>, rng: &mut ChaCha8Rng) -> Result<DynamicsTrace> {
        async_best_response(
            input.game,
            input.objective,
            input.welfare,
            input.p,
            input.a0,
            input.horizon,
            input.stop,
            rng,
        )
    }
}

pub fn dynamics_registry() -> &'static Registry<dyn Dynamics> {
    static REGISTRY: OnceLock<Registry<dyn Dynamics>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn Dynamics> = Registry::new("dynamics");
        reg.register("async", Box::new(AsyncBestResponse))
            .register("round-robin", Box::new(RoundRobin))
            .alias("abr", "async")
            .alias("rr", "round-robin");
        reg
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{builtin_welfare, random_game, RandomGameConfig, Resource};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_cfg(agents: usize) -> RandomGameConfig {
        RandomGameConfig {
            resources: 6,
            agents,
            min_actions: 1,
            max_actions: 3,
            inclusion_probability: 0.4,
        }
    }

    #[test]
    fn distribution_validation_and_sampling() {
        assert!(GroupSizeDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(GroupSizeDistribution::new(vec![-0.5, 1.5]).is_err());
        assert!(GroupSizeDistribution::new(vec![]).is_err());
        let d = GroupSizeDistribution::parse("0,0,1").unwrap();
        assert_eq!(d.max_size(), 3);
        let mut g = rng(1);
        assert!((0..100).all(|_| d.sample(&mut g) == 3));
        let mix = GroupSizeDistribution::new(vec![0.25, 0.75]).unwrap();
        let twos = (0..4000).filter(|_| mix.sample(&mut g) == 2).count();
        assert!((twos as f64 / 4000.0 - 0.75).abs() < 0.03);
        assert!(GroupSizeDistribution::delta(2).unwrap().check_agents(1).is_err());
    }

    #[test]
    fn corollary_weights() {
        let d = corollary1_distribution(2, 2, &[1.0, 1.0], Cor1Reading::BinomWeighted).unwrap();
        assert!((d.probabilities()[0] - 2.0 / 3.0).abs() < 1e-15);
        let lit = corollary1_distribution(2, 2, &[1.0, 1.0], Cor1Reading::Literal).unwrap();
        assert_eq!(lit.probabilities(), &[0.5, 0.5]);
        let single = corollary1_distribution(4, 3, &[0.0, 0.0, 2.0], Cor1Reading::BinomWeighted).unwrap();
        assert_eq!(single.probabilities(), &[0.0, 0.0, 1.0]);
        assert!(corollary1_distribution(2, 2, &[0.0, 0.0], Cor1Reading::Literal).is_err());
    }

    #[test]
    fn only_binomial_weighting_recovers_the_bound() {
        let w = WelfareRule::new(vec![0.0, 0.05, 2.7562729382535824, 0.05, 0.05, 0.05, 0.05]).unwrap();
        let b = crate::poa::solve_p_k(6, &w, 5).unwrap();
        assert!(b.nu_star.iter().filter(|v| **v > 0.0).count() > 1);
        let value = |reading| {
            let p = corollary1_distribution(6, 5, &b.nu_star, reading).unwrap();
            crate::poa::mixed_certificate(6, &w, p.probabilities()).unwrap().guarantee
        };
        assert!((value(Cor1Reading::BinomWeighted) - b.spoa).abs() < 1e-9);
        assert!(value(Cor1Reading::Literal) < b.spoa - 0.05);
    }

    #[test]
    fn transient_bound_arithmetic() {
        let cert = SmoothnessCertificate {
            zeta: 1,
            lambda: 0.5,
            mu: 0.0,
            guarantee: 0.5,
        };
        let p = GroupSizeDistribution::delta(1).unwrap();
        assert_eq!(transient_bound(&[cert.clone()], &p, 1, 3.0).unwrap(), 0.0);
        let b = transient_bound(&[cert.clone()], &p, 11, 2.0).unwrap();
        assert!((b - 10.0 / 22.0 * 0.5 * 2.0).abs() < 1e-15);
        assert!(transient_bound(&[cert], &GroupSizeDistribution::delta(2).unwrap(), 5, 1.0).is_err());
    }

    #[test]
    fn stays_when_current_is_optimal() {
        // Both actions of the single agent are worth the same.
        let res = vec![
            Resource {
                id: "a".into(),
                value: 1.0,
            },
            Resource {
                id: "b".into(),
                value: 1.0,
            },
        ];
        let g = ResourceGame::new(res, vec![vec![vec![0], vec![1]]]).unwrap();
        let w = builtin_welfare("covering", 1).unwrap();
        for seed in 0..20 {
            let r = group_best_response(&g, &w, &JointAction(vec![1]), &[0], &mut rng(seed)).unwrap();
            assert_eq!((r.choice, r.changed, r.evals), (vec![1], false, 2));
        }
    }

    #[test]
    fn ties_are_broken_at_random() {
        let res = (0..3)
            .map(|r| Resource {
                id: format!("r{r}"),
                value: if r == 0 { 0.5 } else { 1.0 },
            })
            .collect();
        let g = ResourceGame::new(res, vec![vec![vec![0], vec![1], vec![2]]]).unwrap();
        let w = builtin_welfare("covering", 1).unwrap();
        let picks: std::collections::BTreeSet<usize> = (0..40)
            .map(|s| group_best_response(&g, &w, &JointAction(vec![0]), &[0], &mut rng(s)).unwrap().choice[0])
            .collect();
        assert_eq!(picks.into_iter().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn round_robin_reaches_equilibrium_within_bound() {
        let w = builtin_welfare("exp5", 4).unwrap();
        for seed in 0..30 {
            let g = random_game(&small_cfg(4), seed).unwrap();
            for k in 1..=4 {
                let a0 = JointAction::random(&g, &mut rng(seed));
                let tr = round_robin(&g, &w, &w, k, None, a0, &mut rng(seed + 100)).unwrap();
                assert!(is_ksne(&g, &w, &tr.final_action, k).unwrap().is_equilibrium);
                let bound = round_robin_eval_bound(4, g.max_actions(), k).unwrap();
                assert!(tr.total_evals() as f64 <= bound);
                assert!(tr.steps.windows(2).all(|s| s[1].welfare >= s[0].welfare - 1e-12));
                assert!((tr.final_welfare() - welfare(&g, &w, &tr.final_action)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn async_until_equilibrium() {
        let w = builtin_welfare("covering", 3).unwrap();
        for seed in 0..20 {
            let g = random_game(&small_cfg(3), seed).unwrap();
            let p = GroupSizeDistribution::delta(2).unwrap();
            let a0 = JointAction::zeros(3);
            let tr = async_best_response(&g, &w, &w, &p, a0, 10_000, StopRule::UntilEquilibrium, &mut rng(seed))
                .unwrap();
            assert!(tr.converged);
            assert!(is_ksne(&g, &w, &tr.final_action, 2).unwrap().is_equilibrium);
        }
    }

    #[test]
    fn fixed_horizon_and_determinism() {
        let w = builtin_welfare("exp5", 5).unwrap();
        let g = random_game(&small_cfg(5), 9).unwrap();
        let p = GroupSizeDistribution::new(vec![0.5, 0.5]).unwrap();
        let run = |s| {
            async_best_response(&g, &w, &w, &p, JointAction::zeros(5), 40, StopRule::FixedHorizon, &mut rng(s))
                .unwrap()
        };
        let a = run(3);
        assert_eq!(a.steps.len(), 41);
        assert_eq!(a, run(3));
        let zero = async_best_response(&g, &w, &w, &p, JointAction::zeros(5), 0, StopRule::FixedHorizon, &mut rng(3))
            .unwrap();
        assert_eq!(zero.mean_welfare(), welfare(&g, &w, &JointAction::zeros(5)));
    }

    #[test]
    fn utility_objective_tracks_welfare_separately() {
        let w = builtin_welfare("exp5", 4).unwrap();
        let u = crate::game::UtilityRule::new(vec![0.0, 1.0, 0.2, 0.1, 0.05]).unwrap();
        let g = random_game(&small_cfg(4), 5).unwrap();
        let p = GroupSizeDistribution::delta(1).unwrap();
        let tr = async_best_response(&g, &u, &w, &p, JointAction::zeros(4), 30, StopRule::FixedHorizon, &mut rng(1))
            .unwrap();
        assert!((tr.final_welfare() - welfare(&g, &w, &tr.final_action)).abs() < 1e-9);
    }

    #[test]
    fn eval_bound_edge_cases() {
        assert_eq!(round_robin_eval_bound(3, 1, 2).unwrap(), 3.0);
        let b = round_robin_eval_bound(2, 2, 1).unwrap();
        assert!((b - (4.0 / 2.0 + 1.0) * 2.0 * 2.0).abs() < 1e-12);
        assert!(dynamics_registry().get("rr").is_ok());
        assert!(dynamics_registry().get("nope").is_err());
    }
}
