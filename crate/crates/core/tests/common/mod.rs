//! Independent reference implementations shared by the integration tests and
//! the acceptance runner. None of them call into the simplex or the
//! incremental equilibrium scan.
#![allow(dead_code)]

use kspoa::game::{JointAction, LocalRule, ResourceGame};
use kspoa::lp::{Bound, LinearProgram};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, Zero};

/// Every `r`-subset of `0..n` in lexicographic order.
pub fn subsets(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < r - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, r, &mut Vec::new(), &mut out);
    out
}

fn rat(v: f64) -> BigRational {
    BigRational::from_f64(v).expect("finite coefficient")
}

/// Solves the square system by Gauss-Jordan elimination; `None` if singular.
fn solve_square(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let d = b.len();
    for col in 0..d {
        let piv = (col..d).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col].clone();
        for j in col..d {
            a[col][j] = &a[col][j] / &p;
        }
        b[col] = &b[col] / &p;
        for r in 0..d {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in col..d {
                    let t = &f * &a[col][j];
                    a[r][j] -= t;
                }
                let t = &f * &b[col];
                b[r] -= t;
            }
        }
    }
    Some(b)
}

/// Minimum of the objective over all basic feasible solutions, in exact
/// arithmetic. Assumes the optimum is attained at a vertex.
pub fn vertex_minimum(lp: &LinearProgram) -> Option<(BigRational, Vec<BigRational>)> {
    let d = lp.objective.len();
    // Inequalities as `g x <= h`, including `x_j >= 0` for bounded variables.
    let mut ineq: Vec<(Vec<BigRational>, BigRational)> = lp
        .upper
        .iter()
        .map(|r| (r.coeffs.iter().map(|c| rat(*c)).collect(), rat(r.rhs)))
        .collect();
    for (j, b) in lp.bounds.iter().enumerate() {
        if *b == Bound::NonNegative {
            let mut g = vec![BigRational::zero(); d];
            g[j] = -BigRational::from_integer(BigInt::from(1));
            ineq.push((g, BigRational::zero()));
        }
    }
    let eq: Vec<(Vec<BigRational>, BigRational)> = lp
        .equal
        .iter()
        .map(|r| (r.coeffs.iter().map(|c| rat(*c)).collect(), rat(r.rhs)))
        .collect();
    let c: Vec<BigRational> = lp.objective.iter().map(|v| rat(*v)).collect();
    let mut best: Option<(BigRational, Vec<BigRational>)> = None;
    for tight in subsets(ineq.len(), d - eq.len()) {
        let mut a: Vec<Vec<BigRational>> = eq.iter().map(|(g, _)| g.clone()).collect();
        let mut b: Vec<BigRational> = eq.iter().map(|(_, h)| h.clone()).collect();
        for &i in &tight {
            a.push(ineq[i].0.clone());
            b.push(ineq[i].1.clone());
        }
        let Some(x) = solve_square(a, b) else { continue };
        let feasible = ineq.iter().all(|(g, h)| {
            let lhs: BigRational = g.iter().zip(&x).map(|(gi, xi)| gi * xi).sum();
            lhs <= *h
        });
        if !feasible {
            continue;
        }
        let val: BigRational = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
        if best.as_ref().is_none_or(|(v, _)| val < *v) {
            best = Some((val, x));
        }
    }
    best
}

pub fn abs_diff(a: &BigRational, b: &BigRational) -> BigRational {
    (a - b).abs()
}

/// `sum_r v_r f(|a|_r)` recomputed from scratch.
pub fn naive_welfare<R: LocalRule + ?Sized>(game: &ResourceGame, rule: &R, a: &JointAction) -> f64 {
    let mut counts = vec![0usize; game.num_resources()];
    for (i, &j) in a.0.iter().enumerate() {
        for &r in game.action(i, j) {
            counts[r] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        .map(|(r, &c)| game.value(r) * rule.table()[c])
        .sum()
}

/// Every joint action, agent 0 varying slowest.
pub fn all_joint(game: &ResourceGame) -> Vec<JointAction> {
    let mut out = vec![JointAction(Vec::new())];
    for i in 0..game.num_agents() {
        out = out
            .into_iter()
            .flat_map(|a| {
                (0..game.num_actions(i)).map(move |j| {
                    let mut v = a.0.clone();
                    v.push(j);
                    JointAction(v)
                })
            })
            .collect();
    }
    out
}

/// Checks every coalition of size at most `k` and every joint deviation.
pub fn naive_is_ksne<R: LocalRule + ?Sized>(game: &ResourceGame, rule: &R, a: &JointAction, k: usize) -> bool {
    let n = game.num_agents();
    let base = naive_welfare(game, rule, a);
    for size in 1..=k {
        for group in subsets(n, size) {
            let mut dev = vec![JointAction(a.0.clone())];
            for &i in &group {
                dev = dev
                    .into_iter()
                    .flat_map(|b| {
                        (0..game.num_actions(i)).map(move |j| {
                            let mut v = b.0.clone();
                            v[i] = j;
                            JointAction(v)
                        })
                    })
                    .collect();
            }
            if dev.iter().any(|b| naive_welfare(game, rule, b) > base + 1e-12) {
                return false;
            }
        }
    }
    true
}

/// `(min over naive k-SNE of W) / (max W)`.
pub fn naive_spoa<R: LocalRule + ?Sized>(game: &ResourceGame, rule: &R, k: usize) -> f64 {
    let all = all_joint(game);
    let opt = all.iter().map(|a| naive_welfare(game, rule, a)).fold(f64::NEG_INFINITY, f64::max);
    let worst = all
        .iter()
        .filter(|a| naive_is_ksne(game, rule, a, k))
        .map(|a| naive_welfare(game, rule, a))
        .fold(f64::INFINITY, f64::min);
    if opt <= 0.0 {
        1.0
    } else {
        worst / opt
    }
}

/// Occupancy counts of every coalition deviation on one resource of label
/// `(e, x, o)`, by explicitly listing agents and coalitions.
pub fn brute_force_coefficients(n: usize, zeta: usize, e: usize, x: usize, o: usize) -> Vec<u128> {
    // Agents 0..e use the resource only at the equilibrium, e..e+x at both,
    // e+x..e+x+o only at the optimum, the rest at neither.
    let mut counts = vec![0u128; n + 1];
    for group in subsets(n, zeta) {
        let occ = (0..n)
            .filter(|i| {
                let deviating = group.contains(i);
                let at_eq = *i < e + x;
                let at_opt = *i >= e && *i < e + x + o;
                if deviating {
                    at_opt
                } else {
                    at_eq
                }
            })
            .count();
        counts[occ] += 1;
    }
    counts
}
