//! Utility design: programs for the best-certified local utility rule, the
//! upper bound on what any utility design can achieve, and checks of the
//! generalized smoothness inequality on concrete games.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{check_k, spoa_report, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::game::{welfare, JointAction, ResourceGame, UtilityRule, WelfareRule};
use crate::labels::{binom, deviation_coefficients, enumerate_labels};
use crate::lp::{approx_eq, solve, LinearProgram, Scalar};
use crate::poa::{coalition_average, holds, rule_values};

/// Relative tolerance for declaring the design bracket closed.
pub const TIGHTNESS_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityDesign {
    pub zeta: usize,
    pub rho_tilde: f64,
    pub u_tilde: UtilityRule,
    pub guarantee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignUpperBound {
    pub k: usize,
    pub q_star: f64,
    pub spoa_upper: f64,
    /// `rules[z - 1]` is the size-`z` utility block of the optimal point.
    pub rules: Vec<UtilityRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tightness {
    Tight { spoa: f64, zeta: usize, rule: UtilityRule },
    Gap { lower: f64, upper: f64 },
}

/// Variables `rho >= 0` and one block `u_z(1..=n) >= 0` per size; `u_z(0) = 0`
/// is left out of the program. Row per label:
/// `-rho w(e+x) + sum_z sum_j (C(n,z) [j = e+x] - c_{z,j}) u_z(j) <= -w(o+x)`.
pub fn build_q(n: usize, w: &WelfareRule, zetas: &[usize]) -> Result<LinearProgram> {
    crate::poa::check_zetas(n, zetas)?;
    let values: Vec<f64> = rule_values(n, w)?;
    let labels = enumerate_labels(n)?;
    let blocks = zetas.len();
    let mut objective = vec![0.0; 1 + blocks * n];
    objective[0] = 1.0;
    let mut lp = LinearProgram::minimize(objective);
    let binoms = zetas
        .iter()
        .map(|&z| binom(n as u64, z as u64).map(|c| c as f64))
        .collect::<Result<Vec<_>>>()?;
    for label in labels.iter() {
        let mut coeffs = vec![0.0; 1 + blocks * n];
        coeffs[0] = -values[label.base()];
        for (b, &z) in zetas.iter().enumerate() {
            let dev = deviation_coefficients(n, z, label)?;
            let block = &mut coeffs[1 + b * n..1 + (b + 1) * n];
            for j in 1..=n {
                block[j - 1] -= dev[j] as f64;
            }
            if label.base() >= 1 {
                block[label.base() - 1] += binoms[b];
            }
        }
        lp.add_le(coeffs, -values[label.alt()]);
    }
    Ok(lp)
}

fn rule_from_block(block: &[f64]) -> Result<UtilityRule> {
    // Simplex output is nonnegative up to round-off.
    let mut values = vec![0.0];
    values.extend(block.iter().map(|v| v.max(0.0)));
    UtilityRule::new(values)
}

/// Optimal point of a float program, optionally re-solved in exact arithmetic.
fn optimal_point(lp: &LinearProgram, exact: bool) -> Result<Vec<f64>> {
    if exact {
        let sol = solve(&lp.to_exact())?.expect_optimal()?;
        Ok(sol.x.iter().map(Scalar::to_f64).collect())
    } else {
        Ok(solve(lp)?.expect_optimal()?.x)
    }
}

pub fn solve_q_zeta(n: usize, w: &WelfareRule, zeta: usize) -> Result<UtilityDesign> {
    solve_q_zeta_with(n, w, zeta, false)
}

pub fn solve_q_zeta_with(n: usize, w: &WelfareRule, zeta: usize, exact: bool) -> Result<UtilityDesign> {
    let x = optimal_point(&build_q(n, w, &[zeta])?, exact)?;
    let rho = x[0];
    Ok(UtilityDesign {
        zeta,
        rho_tilde: rho,
        u_tilde: rule_from_block(&x[1..])?,
        guarantee: 1.0 / rho,
    })
}

pub fn solve_q_k(n: usize, w: &WelfareRule, k: usize) -> Result<DesignUpperBound> {
    solve_q_k_with(n, w, k, false)
}

pub fn solve_q_k_with(n: usize, w: &WelfareRule, k: usize, exact: bool) -> Result<DesignUpperBound> {
    check_k(n, k)?;
    let zetas: Vec<usize> = (1..=k).collect();
    let x = optimal_point(&build_q(n, w, &zetas)?, exact)?;
    let rules = (0..k)
        .map(|b| rule_from_block(&x[1 + b * n..1 + (b + 1) * n]))
        .collect::<Result<Vec<_>>>()?;
    Ok(DesignUpperBound {
        k,
        q_star: x[0],
        spoa_upper: 1.0 / x[0],
        rules,
    })
}

/// Every single-size design for sizes `1..=k` and the combined upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBracket {
    pub designs: Vec<UtilityDesign>,
    pub upper: DesignUpperBound,
}

impl DesignBracket {
    pub fn solve(n: usize, w: &WelfareRule, k: usize) -> Result<Self> {
        check_k(n, k)?;
        let designs = (1..=k)
            .map(|z| solve_q_zeta(n, w, z))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            designs,
            upper: solve_q_k(n, w, k)?,
        })
    }

    /// The design with the smallest `rho_tilde`; ties go to the smaller size.
    pub fn best(&self) -> &UtilityDesign {
        self.designs
            .iter()
            .fold(&self.designs[0], |b, d| if d.rho_tilde < b.rho_tilde { d } else { b })
    }

    /// `1 / min_z rho_tilde_z`.
    pub fn lower(&self) -> f64 {
        1.0 / self.best().rho_tilde
    }

    pub fn tightness(&self) -> Tightness {
        let best = self.best();
        if approx_eq(best.rho_tilde, self.upper.q_star, TIGHTNESS_RTOL) {
            Tightness::Tight {
                spoa: self.upper.spoa_upper,
                zeta: best.zeta,
                rule: best.u_tilde.clone(),
            }
        } else {
            Tightness::Gap {
                lower: self.lower(),
                upper: self.upper.spoa_upper,
            }
        }
    }
}

pub fn check_tightness(n: usize, w: &WelfareRule, k: usize) -> Result<Tightness> {
    Ok(DesignBracket::solve(n, w, k)?.tightness())
}

/// Checks `(1/C(n,z)) sum_G U(a'_G, a_{-G}) - U(a) + W(a) >= lambda W(a') - mu W(a)` on every pair.
#[allow(clippy::too_many_arguments)]
pub fn check_generalized_smoothness(
    game: &ResourceGame,
    w: &WelfareRule,
    u: &UtilityRule,
    lambda: f64,
    mu: f64,
    zeta: usize,
    pairs: &[(JointAction, JointAction)],
) -> Result<bool> {
    check_k(game.num_agents(), zeta)?;
    game.check_rule(w)?;
    game.check_rule(u)?;
    for (a, a_dev) in pairs {
        game.check_joint(a)?;
        game.check_joint(a_dev)?;
        let wa = welfare(game, w, a);
        let lhs = coalition_average(game, u, a, a_dev, zeta) - welfare(game, u, a) + wa;
        let rhs = lambda * welfare(game, w, a_dev) - mu * wa;
        if !holds(lhs, rhs) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityOutcome {
    pub worst_welfare: f64,
    pub optimal_welfare: f64,
    pub spoa: f64,
}

/// Equilibria of the game played on `U`, measured with `W`.
pub fn equilibria_under_utility(
    game: &ResourceGame,
    w: &WelfareRule,
    u: &UtilityRule,
    k: usize,
) -> Result<UtilityOutcome> {
    let report = spoa_report(game, w, u, k, DEFAULT_ENUMERATION_CAP).map_err(|e| match e {
        Error::NoEquilibrium => Error::Numerical("no equilibrium found under the utility rule".into()),
        other => other,
    })?;
    Ok(UtilityOutcome {
        worst_welfare: report.worst_welfare,
        optimal_welfare: report.optimal_welfare,
        spoa: report.spoa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::builtin_welfare;
    use crate::poa::solve_p_zeta;

    #[test]
    fn single_agent_design() {
        let w = builtin_welfare("covering", 1).unwrap();
        let d = solve_q_zeta(1, &w, 1).unwrap();
        assert!((d.rho_tilde - 1.0).abs() < 1e-12);
        assert_eq!(d.u_tilde.values()[0], 0.0);
    }

    #[test]
    fn design_never_worse_than_welfare() {
        for name in ["covering", "exp5"] {
            for n in 1..=6 {
                let w = builtin_welfare(name, n).unwrap();
                for z in 1..=n {
                    let d = solve_q_zeta(n, &w, z).unwrap();
                    let p = solve_p_zeta(n, &w, z).unwrap();
                    assert!(d.rho_tilde <= p.rho * (1.0 + 1e-9), "{name} n={n} z={z}");
                    assert!(d.u_tilde.values().iter().all(|v| *v >= 0.0));
                    assert_eq!(d.u_tilde.values().len(), n + 1);
                }
            }
        }
    }

    #[test]
    fn k_one_is_tight() {
        let w = builtin_welfare("exp5", 5).unwrap();
        let q = solve_q_k(5, &w, 1).unwrap();
        let d = solve_q_zeta(5, &w, 1).unwrap();
        assert!(approx_eq(q.q_star, d.rho_tilde, 1e-9));
        assert!(matches!(check_tightness(5, &w, 1).unwrap(), Tightness::Tight { zeta: 1, .. }));
    }

    #[test]
    fn single_size_design_can_trail_the_mixed_bound() {
        // Sharply peaked at occupancy 2: mixing sizes beats any one-size design.
        let w = WelfareRule::new(vec![0.0, 0.05, 2.7562729382535824, 0.05, 0.05]).unwrap();
        let b = DesignBracket::solve(4, &w, 3).unwrap();
        let spoa = crate::poa::solve_p_k(4, &w, 3).unwrap().spoa;
        assert!(spoa > b.lower() + 0.1);
        assert!(spoa <= b.upper.spoa_upper + 1e-9);
    }

    #[test]
    fn exact_design_agrees() {
        let w = builtin_welfare("covering", 3).unwrap();
        for z in 1..=3 {
            let f = solve_q_zeta(3, &w, z).unwrap();
            let e = solve_q_zeta_with(3, &w, z, true).unwrap();
            assert!(approx_eq(f.rho_tilde, e.rho_tilde, 1e-9));
        }
        let q = solve_q_k_with(3, &w, 2, true).unwrap();
        assert!(approx_eq(q.q_star, solve_q_k(3, &w, 2).unwrap().q_star, 1e-9));
    }

    #[test]
    fn recovered_rule_satisfies_rows() {
        let w = builtin_welfare("covering", 4).unwrap();
        for z in 1..=4 {
            let lp = build_q(4, &w, &[z]).unwrap();
            let d = solve_q_zeta(4, &w, z).unwrap();
            let mut x = vec![d.rho_tilde];
            x.extend_from_slice(&d.u_tilde.values()[1..]);
            assert!(lp.max_violation(&x) <= 1e-9);
        }
    }
}
