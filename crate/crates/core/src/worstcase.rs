//! Ring construction turning an optimal `theta` of the primal program into a
//! concrete game whose designated equilibrium attains the bound.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{is_ksne, Witness};
use crate::error::{Error, Result};
use crate::game::{welfare, GameFile, JointAction, Resource, ResourceGame, WelfareRule, WelfareSpec};
use crate::labels::Label;
use crate::poa::{solve_p_k, ThetaSolution};

/// `theta` entries below this are treated as solver noise and dropped.
pub const THETA_TRUNCATION: f64 = 1e-10;

/// Agreement required between the ring's welfare ratio and `1 / P*`.
pub const RATIO_TOL: f64 = 1e-6;

pub const DEFAULT_RESOURCE_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RingGame {
    pub game: ResourceGame,
    /// Every agent plays action 0.
    pub designated_equilibrium: JointAction,
    /// Every agent plays action 1.
    pub designated_optimum: JointAction,
    pub theta: ThetaSolution,
}

impl RingGame {
    pub fn to_file(&self, welfare: WelfareSpec) -> GameFile {
        let mut file = GameFile::new(&self.game, welfare);
        file.designated_equilibrium = Some(self.designated_equilibrium.0.clone());
        file.designated_optimum = Some(self.designated_optimum.0.clone());
        file
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("a larger suffix element exists");
        p.swap(i - 1, j);
        p[i..].reverse();
        out.push(p.clone());
    }
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

fn check_theta(theta: &ThetaSolution, w: &WelfareRule) -> Result<()> {
    if theta.labels.len() != theta.theta.len() {
        return Err(Error::InfeasibleTheta("labels and values differ in length".into()));
    }
    if let Some(t) = theta.theta.iter().find(|t| !t.is_finite() || **t < -THETA_TRUNCATION) {
        return Err(Error::InfeasibleTheta(format!("negative entry {t}")));
    }
    let (norm, slack) = theta.feasibility(w)?;
    if norm.abs() > 1e-9 {
        return Err(Error::InfeasibleTheta(format!("normalization is off by {norm:e}")));
    }
    if slack < -1e-9 {
        return Err(Error::InfeasibleTheta(format!("equilibrium row violated by {:e}", -slack)));
    }
    Ok(())
}

pub fn build_ring_game(n: usize, w: &WelfareRule, theta: &ThetaSolution) -> Result<RingGame> {
    build_ring_game_capped(n, w, theta, DEFAULT_RESOURCE_CAP)
}

/// For every support label and every permutation `s` of the agents, a ring of
/// `n` resources valued `theta(e,x,o)`; agent `i` covers positions
/// `s(i)..s(i)+e+x-1` in its equilibrium action and `s(i)+e..s(i)+e+x+o-1` in
/// its optimum action, modulo `n`.
pub fn build_ring_game_capped(
    n: usize,
    w: &WelfareRule,
    theta: &ThetaSolution,
    cap: u128,
) -> Result<RingGame> {
    if n == 0 || theta.n != n {
        return Err(Error::InvalidArgument(format!(
            "theta is for n = {}, asked to build for n = {n}",
            theta.n
        )));
    }
    w.ensure_covers(n)?;
    check_theta(theta, w)?;
    let support: Vec<(Label, f64)> = theta.support(THETA_TRUNCATION);
    let size = (n as u128)
        .saturating_mul(factorial(n))
        .saturating_mul(support.len() as u128);
    if size > cap {
        return Err(Error::TooLarge { size, cap });
    }
    let perms = permutations(n);
    let mut resources = Vec::with_capacity(size as usize);
    let mut eq_actions = vec![Vec::new(); n];
    let mut opt_actions = vec![Vec::new(); n];
    for (label, value) in &support {
        let Label { e, x, o } = *label;
        for (s, sigma) in perms.iter().enumerate() {
            let ring = resources.len();
            for pos in 0..n {
                resources.push(Resource {
                    id: format!("e{e}x{x}o{o}/s{s}/p{pos}"),
                    value: *value,
                });
            }
            for i in 0..n {
                let start = sigma[i];
                eq_actions[i].extend((0..e + x).map(|d| ring + (start + d) % n));
                opt_actions[i].extend((e..e + x + o).map(|d| ring + (start + d) % n));
            }
        }
    }
    let actions = eq_actions
        .into_iter()
        .zip(opt_actions)
        .map(|(eq, opt)| vec![eq, opt])
        .collect();
    Ok(RingGame {
        game: ResourceGame::new(resources, actions)?,
        designated_equilibrium: JointAction::zeros(n),
        designated_optimum: JointAction(vec![1; n]),
        theta: theta.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub n: usize,
    pub k: usize,
    pub is_equilibrium: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub equilibrium_welfare: f64,
    pub optimum_welfare: f64,
    pub ratio: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Brute-force check that the designated action is a k-SNE whose welfare
/// ratio matches `1 / P*(n, w, k)`.
pub fn verify_tightness(ring: &RingGame, w: &WelfareRule, k: usize) -> Result<TightnessReport> {
    let n = ring.game.num_agents();
    let report = is_ksne(&ring.game, w, &ring.designated_equilibrium, k)?;
    let eq = welfare(&ring.game, w, &ring.designated_equilibrium);
    let opt = welfare(&ring.game, w, &ring.designated_optimum);
    let ratio = if opt <= 0.0 { 1.0 } else { eq / opt };
    let bound = solve_p_k(n, w, k)?.spoa;
    Ok(TightnessReport {
        n,
        k,
        is_equilibrium: report.is_equilibrium,
        witness: report.witness,
        equilibrium_welfare: eq,
        optimum_welfare: opt,
        ratio,
        bound,
        passed: report.is_equilibrium && (ratio - bound).abs() <= RATIO_TOL,
    })
}
