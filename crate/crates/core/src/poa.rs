//! Linear programs bounding the k-strong price of anarchy of resource
//! allocation games, their primal, and the smoothness certificates they yield.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{check_k, coalitions};
use crate::error::{Error, Result};
use crate::game::{welfare, JointAction, LocalRule, ResourceGame, WelfareRule};
use crate::labels::{binom, deviation_sum, enumerate_labels, Label, LabelSet};
use crate::lp::{solve, LinearProgram, Scalar};

/// Relative slack on the smoothness inequalities checked against concrete games.
pub const SMOOTHNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCertificate {
    pub zeta: usize,
    pub lambda: f64,
    pub mu: f64,
    pub guarantee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PZetaSolution {
    pub zeta: usize,
    pub rho: f64,
    pub nu: f64,
    pub certificate: SmoothnessCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoaBound {
    pub n: usize,
    pub k: usize,
    pub rho_star: f64,
    pub spoa: f64,
    /// `nu_star[z - 1]` multiplies the size-`z` coalition rows.
    pub nu_star: Vec<f64>,
    /// `P*` as an exact fraction when solved in rational arithmetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_star_exact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSolution {
    pub n: usize,
    pub k: usize,
    pub labels: Vec<Label>,
    pub theta: Vec<f64>,
    /// Worst-case `W(a*)` with `W(a) = 1`.
    pub objective: f64,
}

impl ThetaSolution {
    /// Labels with `theta > tol`, in label order.
    pub fn support(&self, tol: f64) -> Vec<(Label, f64)> {
        self.labels
            .iter()
            .zip(&self.theta)
            .filter(|(_, t)| **t > tol)
            .map(|(l, t)| (*l, *t))
            .collect()
    }

    /// Normalization residual `sum theta w(e+x) - 1` and the smallest equilibrium-row slack.
    pub fn feasibility(&self, w: &WelfareRule) -> Result<(f64, f64)> {
        let rows = label_rows::<f64>(self.n, w, &(1..=self.k).collect::<Vec<_>>())?;
        let mut norm = -1.0;
        let mut slack = vec![0.0; self.k];
        for ((row, label), t) in rows.iter().zip(&self.labels).zip(&self.theta) {
            debug_assert_eq!(row.label, *label);
            norm += row.base * t;
            for (s, g) in slack.iter_mut().zip(&row.gaps) {
                *s += g * t;
            }
        }
        Ok((norm, slack.into_iter().fold(f64::INFINITY, f64::min)))
    }
}

/// Per-label data shared by every program: `w(e+x)`, `w(o+x)` and, for each
/// requested coalition size, `C(n, z) w(e+x) - deviation_sum`.
pub(crate) struct LabelRow<S> {
    pub label: Label,
    pub base: S,
    pub alt: S,
    pub gaps: Vec<S>,
}

pub(crate) fn rule_values<S: Scalar, R: LocalRule + ?Sized>(n: usize, rule: &R) -> Result<Vec<S>> {
    if rule.n_max() < n {
        return Err(Error::InvalidRule(format!(
            "rule is defined up to {}, needed {n}",
            rule.n_max()
        )));
    }
    Ok(rule.table()[..=n].iter().map(|v| S::from_f64(*v)).collect())
}

pub(crate) fn check_zetas(n: usize, zetas: &[usize]) -> Result<()> {
    if zetas.is_empty() {
        return Err(Error::InvalidArgument("no coalition sizes given".into()));
    }
    zetas.iter().try_for_each(|&z| check_k(n, z))
}

fn label_rows<S: Scalar>(n: usize, w: &WelfareRule, zetas: &[usize]) -> Result<Vec<LabelRow<S>>> {
    check_zetas(n, zetas)?;
    let values: Vec<S> = rule_values(n, w)?;
    let labels = enumerate_labels(n)?;
    let binoms = zetas
        .iter()
        .map(|&z| binom(n as u64, z as u64).map(S::from_u128))
        .collect::<Result<Vec<_>>>()?;
    labels
        .iter()
        .map(|label| {
            let base = values[label.base()].clone();
            let gaps = zetas
                .iter()
                .zip(&binoms)
                .map(|(&z, c)| Ok(c.clone() * base.clone() - deviation_sum(n, z, label, &values)?))
                .collect::<Result<Vec<_>>>()?;
            Ok(LabelRow {
                label: *label,
                base,
                alt: values[label.alt()].clone(),
                gaps,
            })
        })
        .collect()
}

/// Variables `(rho, nu_z for z in zetas)`; `rho` is free, every `nu_z >= 0`.
/// Row per label: `-rho w(e+x) + sum_z nu_z (C(n,z) w(e+x) - D_z) <= -w(o+x)`.
/// The label `(1,0,0)` reads `rho >= C(n-1, z-1) nu_z`, so `rho >= nu >= 0` needs no extra row.
pub fn build_p_in<S: Scalar>(n: usize, w: &WelfareRule, zetas: &[usize]) -> Result<LinearProgram<S>> {
    let rows = label_rows::<S>(n, w, zetas)?;
    let mut objective = vec![S::zero(); zetas.len() + 1];
    objective[0] = S::one();
    let mut lp = LinearProgram::minimize(objective);
    lp.set_free(0);
    for row in rows {
        let mut coeffs = Vec::with_capacity(zetas.len() + 1);
        coeffs.push(-row.base);
        coeffs.extend(row.gaps);
        lp.add_le(coeffs, -row.alt);
    }
    Ok(lp)
}

pub fn build_p_zeta(n: usize, w: &WelfareRule, zeta: usize) -> Result<LinearProgram> {
    build_p_in(n, w, &[zeta])
}

pub fn build_p_k(n: usize, w: &WelfareRule, k: usize) -> Result<LinearProgram> {
    check_k(n, k)?;
    build_p_in(n, w, &(1..=k).collect::<Vec<_>>())
}

fn solve_p<S: Scalar>(n: usize, w: &WelfareRule, zetas: &[usize]) -> Result<(S, Vec<S>)> {
    let lp = build_p_in::<S>(n, w, zetas)?;
    let mut sol = solve(&lp)?.expect_optimal()?;
    let nu = sol.x.split_off(1);
    Ok((sol.x.swap_remove(0), nu))
}

fn certificate(n: usize, zeta: usize, rho: f64, nu: f64) -> Result<SmoothnessCertificate> {
    let c = binom(n as u64, zeta as u64)? as f64;
    if nu <= 0.0 {
        return Err(Error::Numerical(format!("nu* = {nu} for coalition size {zeta}")));
    }
    let lambda = 1.0 / (c * nu);
    Ok(SmoothnessCertificate {
        zeta,
        lambda,
        mu: rho * lambda - 1.0,
        guarantee: 1.0 / rho,
    })
}

/// Solves the single-size program; `lambda = 1/(C(n,z) nu*)`, `mu = rho*/(C(n,z) nu*) - 1`.
pub fn solve_p_zeta(n: usize, w: &WelfareRule, zeta: usize) -> Result<PZetaSolution> {
    let (rho, nu) = solve_p::<f64>(n, w, &[zeta])?;
    Ok(PZetaSolution {
        zeta,
        rho,
        nu: nu[0],
        certificate: certificate(n, zeta, rho, nu[0])?,
    })
}

pub fn solve_p_zeta_exact(n: usize, w: &WelfareRule, zeta: usize) -> Result<(BigRational, BigRational)> {
    let (rho, mut nu) = solve_p::<BigRational>(n, w, &[zeta])?;
    Ok((rho, nu.swap_remove(0)))
}

/// `P*(n, w, k)` and its multipliers; the bound is `spoa_k = 1 / P*`.
pub fn solve_p_k(n: usize, w: &WelfareRule, k: usize) -> Result<PoaBound> {
    check_k(n, k)?;
    let (rho, nu) = solve_p::<f64>(n, w, &(1..=k).collect::<Vec<_>>())?;
    Ok(PoaBound {
        n,
        k,
        rho_star: rho,
        spoa: 1.0 / rho,
        nu_star: nu,
        rho_star_exact: None,
    })
}

pub fn solve_p_k_exact(n: usize, w: &WelfareRule, k: usize) -> Result<(PoaBound, BigRational)> {
    check_k(n, k)?;
    let (rho, nu) = solve_p::<BigRational>(n, w, &(1..=k).collect::<Vec<_>>())?;
    let rho_f = rho.to_f64();
    let bound = PoaBound {
        n,
        k,
        rho_star: rho_f,
        spoa: 1.0 / rho_f,
        nu_star: nu.iter().map(Scalar::to_f64).collect(),
        rho_star_exact: Some(rho.to_string()),
    };
    Ok((bound, rho))
}

/// Maximizes `sum theta w(o+x)` over `theta >= 0` subject to one equilibrium
/// row per coalition size `z <= k` and `sum theta w(e+x) = 1`.
pub fn build_primal_d(n: usize, w: &WelfareRule, k: usize) -> Result<(LinearProgram, LabelSet)> {
    check_k(n, k)?;
    let zetas: Vec<usize> = (1..=k).collect();
    let rows = label_rows::<f64>(n, w, &zetas)?;
    let mut lp = LinearProgram::minimize(rows.iter().map(|r| -r.alt).collect());
    for z in 0..k {
        lp.add_ge(rows.iter().map(|r| r.gaps[z]).collect(), 0.0);
    }
    lp.add_eq(rows.iter().map(|r| r.base).collect(), 1.0);
    Ok((lp, enumerate_labels(n)?))
}

pub fn solve_primal_d(n: usize, w: &WelfareRule, k: usize) -> Result<ThetaSolution> {
    let (lp, labels) = build_primal_d(n, w, k)?;
    let sol = solve(&lp)?.expect_optimal()?;
    Ok(ThetaSolution {
        n,
        k,
        labels: labels.labels().to_vec(),
        theta: sol.x,
        objective: -sol.objective,
    })
}

/// `(1/C(n,z)) sum_{|G| = z} f(a'_G, a_{-G})` for the rule `f`.
pub(crate) fn coalition_average<R: LocalRule + ?Sized>(
    game: &ResourceGame,
    rule: &R,
    a: &JointAction,
    a_dev: &JointAction,
    zeta: usize,
) -> f64 {
    let groups = coalitions(game.num_agents(), zeta);
    let count = groups.len() as f64;
    let mut mixed = a.clone();
    let total: f64 = groups
        .iter()
        .map(|g| {
            for &i in g {
                mixed.0[i] = a_dev.0[i];
            }
            let v = welfare(game, rule, &mixed);
            for &i in g {
                mixed.0[i] = a.0[i];
            }
            v
        })
        .sum();
    total / count
}

pub(crate) fn holds(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - SMOOTHNESS_TOL * 1f64.max(lhs.abs()).max(rhs.abs())
}

/// Checks `(1/C(n,z)) sum_G W(a'_G, a_{-G}) >= lambda W(a') - mu W(a)` for every pair `(a, a')`.
pub fn check_smoothness(
    game: &ResourceGame,
    w: &WelfareRule,
    certificate: &SmoothnessCertificate,
    pairs: &[(JointAction, JointAction)],
) -> Result<bool> {
    check_k(game.num_agents(), certificate.zeta)?;
    game.check_rule(w)?;
    for (a, a_dev) in pairs {
        game.check_joint(a)?;
        game.check_joint(a_dev)?;
        let lhs = coalition_average(game, w, a, a_dev, certificate.zeta);
        let rhs = certificate.lambda * welfare(game, w, a_dev) - certificate.mu * welfare(game, w, a);
        if !holds(lhs, rhs) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All ordered pairs of joint actions.
pub fn all_pairs(actions: &[JointAction]) -> Vec<(JointAction, JointAction)> {
    actions
        .iter()
        .flat_map(|a| actions.iter().map(move |b| (a.clone(), b.clone())))
        .collect()
}

/// Best certificate for a fixed group-size mixture `p` (`p[z - 1]` for size `z`):
/// the combined inequality `sum_z p_z (1/C(n,z)) sum_G W(a'_G, a_{-G}) >= Lambda W(a') - M W(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedCertificate {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
    pub guarantee: f64,
}

pub fn mixed_certificate(n: usize, w: &WelfareRule, p: &[f64]) -> Result<MixedCertificate> {
    let zetas: Vec<usize> = (1..=p.len()).collect();
    let rows = label_rows::<f64>(n, w, &zetas)?;
    let weights = zetas
        .iter()
        .zip(p)
        .map(|(&z, pz)| Ok(pz / binom(n as u64, z as u64)? as f64))
        .collect::<Result<Vec<_>>>()?;
    let mut lp = LinearProgram::minimize(vec![1.0, 0.0]);
    lp.set_free(0);
    for row in rows {
        let gap: f64 = row.gaps.iter().zip(&weights).map(|(g, q)| g * q).sum();
        lp.add_le(vec![-row.base, gap], -row.alt);
    }
    let sol = solve(&lp)?.expect_optimal()?;
    let (rho, nu) = (sol.x[0], sol.x[1]);
    if nu <= 0.0 {
        return Err(Error::Numerical(format!("mixed multiplier {nu} is not positive")));
    }
    Ok(MixedCertificate {
        lambda: 1.0 / nu,
        mu: rho / nu - 1.0,
        rho,
        guarantee: 1.0 / rho,
    })
}
