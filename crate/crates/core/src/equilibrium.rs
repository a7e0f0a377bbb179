//! Brute-force oracles: k-strong Nash equilibrium checks, optimal welfare and
//! exact per-instance strong price of anarchy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{JointAction, LoadTracker, LocalRule, ResourceGame, WelfareRule};

/// Absolute slack on objective comparisons; float noise must not fabricate deviations.
pub const EQUILIBRIUM_TOL: f64 = 1e-12;

/// Default cap on the number of joint actions an oracle may enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub coalition: Vec<usize>,
    /// New action indices for the coalition members, in coalition order.
    pub deviation: Vec<usize>,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub is_equilibrium: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

/// Size-`k` subsets of `0..n` in lexicographic order.
pub fn coalitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        let Some(i) = (0..k).rev().find(|&i| c[i] < n - k + i) else {
            return out;
        };
        c[i] += 1;
        for j in i + 1..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

pub(crate) fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must lie in [1, {n}], got {k}")));
    }
    Ok(())
}

/// Visits every group action of `gamma` against `a_{-gamma}`, in lexicographic
/// order, with the full objective value of the resulting joint action. Returns
/// the number of leaves visited.
pub(crate) fn scan_group<F>(
    game: &ResourceGame,
    tracker: &mut LoadTracker<'_>,
    base_value: f64,
    gamma: &[usize],
    mut visit: F,
) -> u64
where
    F: FnMut(&[usize], f64),
{
    let mut choice = vec![0usize; gamma.len()];
    let mut leaves = 0u64;
    descend(game, tracker, gamma, 0, base_value, &mut choice, &mut leaves, &mut visit);
    leaves
}

#[allow(clippy::too_many_arguments)]
fn descend<F>(
    game: &ResourceGame,
    tracker: &mut LoadTracker<'_>,
    gamma: &[usize],
    depth: usize,
    value: f64,
    choice: &mut [usize],
    leaves: &mut u64,
    visit: &mut F,
) where
    F: FnMut(&[usize], f64),
{
    if depth == gamma.len() {
        *leaves += 1;
        visit(choice, value);
        return;
    }
    let agent = gamma[depth];
    for j in 0..game.num_actions(agent) {
        let delta = tracker.add(agent, j);
        choice[depth] = j;
        descend(game, tracker, gamma, depth + 1, value + delta, choice, leaves, visit);
        tracker.remove(agent, j);
    }
}

/// Objective value with `gamma` removed, leaving the tracker in that state.
pub(crate) fn strip_group(
    tracker: &mut LoadTracker<'_>,
    a: &JointAction,
    gamma: &[usize],
    value: f64,
) -> f64 {
    gamma.iter().fold(value, |v, &i| v + tracker.remove(i, a.0[i]))
}

pub(crate) fn restore_group(
    tracker: &mut LoadTracker<'_>,
    a: &JointAction,
    gamma: &[usize],
) {
    for &i in gamma {
        tracker.add(i, a.0[i]);
    }
}

/// Checks every coalition of size exactly `k` (smaller groups are covered by
/// members keeping their actions). The witness is the best deviation of the
/// first violating coalition in lexicographic order.
pub fn is_ksne<R: LocalRule + ?Sized>(
    game: &ResourceGame,
    rule: &R,
    a: &JointAction,
    k: usize,
) -> Result<EquilibriumReport> {
    check_k(game.num_agents(), k)?;
    game.check_joint(a)?;
    game.check_rule(rule)?;
    let mut tracker = LoadTracker::new(game, rule, a);
    let total = crate::game::welfare(game, rule, a);
    for gamma in coalitions(game.num_agents(), k) {
        let stripped = strip_group(&mut tracker, a, &gamma, total);
        let current: Vec<usize> = gamma.iter().map(|&i| a.0[i]).collect();
        let mut current_value = f64::NAN;
        let mut best: Option<(Vec<usize>, f64)> = None;
        scan_group(game, &mut tracker, stripped, &gamma, |choice, v| {
            if choice == current.as_slice() {
                current_value = v;
            }
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((choice.to_vec(), v));
            }
        });
        restore_group(&mut tracker, a, &gamma);
        let (deviation, best_value) = best.expect("action sets are nonempty");
        let gain = best_value - current_value;
        if gain > EQUILIBRIUM_TOL {
            return Ok(EquilibriumReport {
                is_equilibrium: false,
                witness: Some(Witness {
                    coalition: gamma,
                    deviation,
                    gain,
                }),
            });
        }
    }
    Ok(EquilibriumReport {
        is_equilibrium: true,
        witness: None,
    })
}

/// Mixed-radix indexing of the joint action space (agent 0 most significant).
#[derive(Debug, Clone)]
pub struct JointSpace {
    radices: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl JointSpace {
    pub fn new(game: &ResourceGame, cap: u128) -> Result<Self> {
        let size = game.num_joint_actions();
        if size > cap {
            return Err(Error::TooLarge { size, cap });
        }
        let radices: Vec<usize> = (0..game.num_agents()).map(|i| game.num_actions(i)).collect();
        let mut strides = vec![1usize; radices.len()];
        for i in (0..radices.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * radices[i + 1];
        }
        Ok(Self {
            radices,
            strides,
            size: size as usize,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn index(&self, a: &JointAction) -> usize {
        a.0.iter().zip(&self.strides).map(|(j, s)| j * s).sum()
    }

    pub fn joint(&self, mut idx: usize) -> JointAction {
        JointAction(
            self.strides
                .iter()
                .map(|s| {
                    let j = idx / s;
                    idx %= s;
                    j
                })
                .collect(),
        )
    }

    /// Objective value of every joint action, by index.
    pub fn table<R: LocalRule + ?Sized>(&self, game: &ResourceGame, rule: &R) -> Result<Vec<f64>> {
        game.check_rule(rule)?;
        let all: Vec<usize> = (0..game.num_agents()).collect();
        let a0 = JointAction::zeros(game.num_agents());
        let mut tracker = LoadTracker::new(game, rule, &a0);
        let stripped = strip_group(&mut tracker, &a0, &all, crate::game::welfare(game, rule, &a0));
        let mut out = Vec::with_capacity(self.size);
        scan_group(game, &mut tracker, stripped, &all, |_, v| out.push(v));
        Ok(out)
    }

    /// Index offsets of every group action of `gamma`, relative to all members at 0.
    fn offsets(&self, gamma: &[usize]) -> Vec<usize> {
        let mut out = vec![0usize];
        for &i in gamma {
            out = out
                .iter()
                .flat_map(|base| (0..self.radices[i]).map(move |j| base + j * self.strides[i]))
                .collect();
        }
        out
    }

    /// Marks the joint actions no size-`k` coalition can strictly improve on.
    pub fn equilibrium_mask(&self, objective: &[f64], k: usize) -> Result<Vec<bool>> {
        check_k(self.radices.len(), k)?;
        let groups: Vec<(Vec<usize>, Vec<usize>)> = coalitions(self.radices.len(), k)
            .into_iter()
            .map(|g| {
                let off = self.offsets(&g);
                (g, off)
            })
            .collect();
        Ok((0..self.size)
            .map(|idx| {
                let v = objective[idx];
                groups.iter().all(|(g, off)| {
                    let base = idx - g.iter().map(|&i| (idx / self.strides[i] % self.radices[i]) * self.strides[i]).sum::<usize>();
                    off.iter().all(|o| objective[base + o] <= v + EQUILIBRIUM_TOL)
                })
            })
            .collect())
    }
}

pub fn optimal_welfare(game: &ResourceGame, w: &WelfareRule) -> Result<(JointAction, f64)> {
    optimal_welfare_capped(game, w, DEFAULT_ENUMERATION_CAP)
}

/// Exact maximizer by enumeration; ties go to the lexicographically smallest joint action.
pub fn optimal_welfare_capped<R: LocalRule + ?Sized>(
    game: &ResourceGame,
    rule: &R,
    cap: u128,
) -> Result<(JointAction, f64)> {
    let space = JointSpace::new(game, cap)?;
    let table = space.table(game, rule)?;
    let (idx, v) = argmax(&table);
    Ok((space.joint(idx), v))
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpoaReport {
    pub spoa: f64,
    pub worst_equilibrium: JointAction,
    pub worst_welfare: f64,
    pub optimum: JointAction,
    pub optimal_welfare: f64,
    pub num_equilibria: usize,
}

/// Equilibria are taken with respect to `objective`, welfare is measured with `w`.
pub fn spoa_report<R: LocalRule + ?Sized>(
    game: &ResourceGame,
    w: &WelfareRule,
    objective: &R,
    k: usize,
    cap: u128,
) -> Result<SpoaReport> {
    let space = JointSpace::new(game, cap)?;
    let welfare = space.table(game, w)?;
    let obj_table;
    let obj: &[f64] = if objective.table() == w.table() {
        &welfare
    } else {
        obj_table = space.table(game, objective)?;
        &obj_table
    };
    let mask = space.equilibrium_mask(obj, k)?;
    let (opt_idx, opt) = argmax(&welfare);
    let worst = mask
        .iter()
        .enumerate()
        .filter(|(_, eq)| **eq)
        .map(|(i, _)| (i, welfare[i]))
        .fold(None::<(usize, f64)>, |acc, (i, v)| match acc {
            Some((_, b)) if b <= v => acc,
            _ => Some((i, v)),
        });
    let (worst_idx, worst_value) = worst.ok_or(Error::NoEquilibrium)?;
    let spoa = if opt <= 0.0 { 1.0 } else { worst_value / opt };
    Ok(SpoaReport {
        spoa,
        worst_equilibrium: space.joint(worst_idx),
        worst_welfare: worst_value,
        optimum: space.joint(opt_idx),
        optimal_welfare: opt,
        num_equilibria: mask.iter().filter(|m| **m).count(),
    })
}

/// Worst k-SNE welfare over optimal welfare, with 0/0 taken as 1.
pub fn exact_spoa(game: &ResourceGame, w: &WelfareRule, k: usize) -> Result<f64> {
    Ok(spoa_report(game, w, w, k, DEFAULT_ENUMERATION_CAP)?.spoa)
}

/// All k-SNE of the game under `objective`, in index order.
pub fn enumerate_equilibria<R: LocalRule + ?Sized>(
    game: &ResourceGame,
    objective: &R,
    k: usize,
    cap: u128,
) -> Result<Vec<JointAction>> {
    let space = JointSpace::new(game, cap)?;
    let table = space.table(game, objective)?;
    let mask = space.equilibrium_mask(&table, k)?;
    Ok(mask
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(i, _)| space.joint(i))
        .collect())
}

/// Every joint action of the game, in index order.
pub fn joint_actions(game: &ResourceGame, cap: u128) -> Result<Vec<JointAction>> {
    let space = JointSpace::new(game, cap)?;
    Ok((0..space.size()).map(|i| space.joint(i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{builtin_welfare, random_game, welfare, RandomGameConfig, Resource};

    fn game(values: &[f64], actions: Vec<Vec<Vec<usize>>>) -> ResourceGame {
        let res = values
            .iter()
            .enumerate()
            .map(|(r, v)| Resource {
                id: format!("r{}", r + 1),
                value: *v,
            })
            .collect();
        ResourceGame::new(res, actions).unwrap()
    }

    #[test]
    fn coalition_order() {
        assert_eq!(coalitions(4, 2), vec![
            vec![0, 1],
            vec![0, 2],
            vec![0, 3],
            vec![1, 2],
            vec![1, 3],
            vec![2, 3]
        ]);
        assert_eq!(coalitions(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(coalitions(3, 0), vec![Vec::<usize>::new()]);
        assert!(coalitions(2, 3).is_empty());
    }

    #[test]
    fn single_agent_optimum() {
        let g = game(&[3.0, 1.0], vec![vec![vec![0], vec![1]]]);
        let w = builtin_welfare("covering", 1).unwrap();
        let (a, v) = optimal_welfare(&g, &w).unwrap();
        assert_eq!(a, JointAction(vec![0]));
        assert_eq!(v, 3.0);
        assert!(is_ksne(&g, &w, &a, 1).unwrap().is_equilibrium);
        let r = is_ksne(&g, &w, &JointAction(vec![1]), 1).unwrap();
        let wit = r.witness.unwrap();
        assert_eq!((wit.coalition, wit.deviation), (vec![0], vec![0]));
        assert!((wit.gain - 2.0).abs() < 1e-15);
        assert_eq!(enumerate_equilibria(&g, &w, 1, 100).unwrap(), vec![JointAction(vec![0])]);
    }

    #[test]
    fn zero_values() {
        let g = game(&[0.0, 0.0], vec![vec![vec![0], vec![1]], vec![vec![1], vec![0]]]);
        let w = builtin_welfare("covering", 2).unwrap();
        let (a, v) = optimal_welfare(&g, &w).unwrap();
        assert_eq!((a, v), (JointAction(vec![0, 0]), 0.0));
        assert_eq!(exact_spoa(&g, &w, 1).unwrap(), 1.0);
    }

    #[test]
    fn coordination_failure() {
        // With w(2) > 2 w(1), sharing r1 is stable for single agents but not for the pair.
        let g = game(&[1.0, 1.2], vec![vec![vec![0], vec![1]], vec![vec![0], vec![1]]]);
        let w = WelfareRule::new(vec![0.0, 1.0, 3.0]).unwrap();
        let both = JointAction(vec![0, 0]);
        assert!(is_ksne(&g, &w, &both, 1).unwrap().is_equilibrium);
        let r = is_ksne(&g, &w, &both, 2).unwrap();
        assert_eq!(r.witness.unwrap().deviation, vec![1, 1]);
        assert!(is_ksne(&g, &w, &JointAction(vec![0, 1]), 1).unwrap().witness.is_some());
        assert!((exact_spoa(&g, &w, 1).unwrap() - 3.0 / 3.6).abs() < 1e-15);
        assert_eq!(exact_spoa(&g, &w, 2).unwrap(), 1.0);
        assert!(matches!(is_ksne(&g, &w, &both, 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cap_is_enforced() {
        let g = game(&[1.0], vec![vec![vec![0], vec![]]; 4]);
        let w = builtin_welfare("covering", 4).unwrap();
        assert!(matches!(optimal_welfare_capped(&g, &w, 15), Err(Error::TooLarge { size: 16, cap: 15 })));
    }

    #[test]
    fn table_and_mask_agree_with_direct_checks() {
        let cfg = RandomGameConfig {
            resources: 5,
            agents: 3,
            min_actions: 1,
            max_actions: 3,
            inclusion_probability: 0.4,
        };
        let w = builtin_welfare("exp5", 3).unwrap();
        for seed in 0..20 {
            let g = random_game(&cfg, seed).unwrap();
            let space = JointSpace::new(&g, 1000).unwrap();
            let table = space.table(&g, &w).unwrap();
            for k in 1..=3 {
                let mask = space.equilibrium_mask(&table, k).unwrap();
                for idx in 0..space.size() {
                    let a = space.joint(idx);
                    assert_eq!(space.index(&a), idx);
                    assert!((table[idx] - welfare(&g, &w, &a)).abs() < 1e-12);
                    assert_eq!(mask[idx], is_ksne(&g, &w, &a, k).unwrap().is_equilibrium);
                }
            }
        }
    }
}
