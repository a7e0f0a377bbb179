use super::{Bound, LinearProgram, LpSolution, LpStatus, Scalar, FEASIBILITY_TOL, OPTIMALITY_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Pivot cap; `None` derives one from the problem size.
    pub max_iterations: Option<usize>,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: None,
            bland_after: 64,
        }
    }
}

pub fn solve<S: Scalar>(lp: &LinearProgram<S>) -> Result<LpSolution<S>> {
    solve_with(lp, &SolverOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau<S> {
    rows: Vec<Vec<S>>,
    /// Row-scaled original system; float tableaus are periodically rebuilt from it.
    source: Vec<Vec<S>>,
    cost: Vec<S>,
    basis: Vec<usize>,
    kinds: Vec<ColKind>,
    width: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Tolerances<S> {
    optimality: S,
    pivot: S,
    zero: S,
    feasibility: S,
}

/// Pivots between rebuilds of a float tableau from the source system.
const REFACTOR_EVERY: usize = 50;

impl<S: Scalar> Tableau<S> {
    fn rhs(&self, i: usize) -> &S {
        &self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let piv = self.rows[r][q].clone();
        let width = self.width;
        let nonzero: Vec<usize> = (0..=width)
            .filter(|&j| !self.rows[r][j].is_zero())
            .collect();
        for &j in &nonzero {
            self.rows[r][j] = self.rows[r][j].clone() / piv.clone();
        }
        self.rows[r][q] = S::one();
        let prow: Vec<(usize, S)> = nonzero
            .iter()
            .map(|&j| (j, self.rows[r][j].clone()))
            .collect();
        let eliminate = |target: &mut Vec<S>| {
            let f = target[q].clone();
            if f.is_zero() {
                return;
            }
            for (j, v) in &prow {
                target[*j] = target[*j].clone() - f.clone() * v.clone();
            }
            target[q] = S::zero();
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.cost);
        self.basis[r] = q;
    }

    /// Sets the reduced-cost row for column costs `c` against the current basis.
    fn price(&mut self, c: &[S]) {
        let mut cost: Vec<S> = c.iter().cloned().chain(std::iter::once(S::zero())).collect();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = c[b].clone();
            if cb.is_zero() {
                continue;
            }
            for (j, v) in self.rows[i].iter().enumerate() {
                if !v.is_zero() {
                    cost[j] = cost[j].clone() - cb.clone() * v.clone();
                }
            }
        }
        self.cost = cost;
    }

    /// Recomputes `B^-1 [A | b]` for the current basis by Gauss-Jordan
    /// elimination with partial pivoting on the source rows.
    fn refactor(&mut self) -> Result<()> {
        let m = self.rows.len();
        let mut rows = self.source.clone();
        for r in 0..m {
            let q = self.basis[r];
            let p = (r..m)
                .max_by(|&a, &b| {
                    rows[a][q]
                        .abs_val()
                        .partial_cmp(&rows[b][q].abs_val())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("nonempty range");
            if rows[p][q].abs_val().to_f64() < 1e-13 {
                return Err(Error::Numerical("basis became singular".into()));
            }
            rows.swap(r, p);
            let piv = rows[r][q].clone();
            for v in rows[r].iter_mut() {
                if !v.is_zero() {
                    *v = v.clone() / piv.clone();
                }
            }
            let prow: Vec<(usize, S)> = rows[r]
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_zero())
                .map(|(j, v)| (j, v.clone()))
                .collect();
            for (i, row) in rows.iter_mut().enumerate() {
                if i == r {
                    continue;
                }
                let f = row[q].clone();
                if f.is_zero() {
                    continue;
                }
                for (j, v) in &prow {
                    row[*j] = row[*j].clone() - f.clone() * v.clone();
                }
                row[q] = S::zero();
            }
        }
        self.rows = rows;
        Ok(())
    }

    fn run(
        &mut self,
        c: &[S],
        allowed: &[bool],
        tol: &Tolerances<S>,
        opts: &SolverOptions,
        budget: &mut usize,
    ) -> Result<PhaseEnd> {
        let mut bland = false;
        let mut degenerate_streak = 0usize;
        let mut since_refactor = 0usize;
        let neg_opt = -tol.optimality.clone();
        self.price(c);
        loop {
            if !S::EXACT && since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                self.price(c);
                since_refactor = 0;
            }
            if *budget == 0 {
                return Err(Error::Numerical("simplex iteration limit reached".into()));
            }
            *budget -= 1;

            let mut entering: Option<usize> = None;
            for j in 0..self.width {
                if !allowed[j] || !(self.cost[j] < neg_opt) {
                    continue;
                }
                match entering {
                    None => entering = Some(j),
                    Some(_) if bland => {}
                    Some(q) => {
                        if self.cost[j] < self.cost[q] {
                            entering = Some(j);
                        }
                    }
                }
                if bland {
                    break;
                }
            }
            let Some(q) = entering else {
                if !S::EXACT && since_refactor > 0 {
                    // Confirm optimality on a freshly rebuilt tableau.
                    since_refactor = REFACTOR_EVERY;
                    continue;
                }
                return Ok(PhaseEnd::Optimal);
            };

            // Harris ratio test: bound the step with relaxed feasibility, then
            // take the largest pivot among rows within that bound.
            let mut bound: Option<S> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][q];
                if !(*a > tol.pivot) {
                    continue;
                }
                let b = clamp_nonneg(self.rhs(i).clone());
                let relaxed = (b + tol.feasibility.clone()) / a.clone();
                if bound.as_ref().is_none_or(|t| relaxed < *t) {
                    bound = Some(relaxed);
                }
            }
            let Some(bound) = bound else {
                return Ok(PhaseEnd::Unbounded);
            };
            let mut leaving: Option<(usize, S)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][q];
                if !(*a > tol.pivot) {
                    continue;
                }
                let ratio = clamp_nonneg(self.rhs(i).clone()) / a.clone();
                if ratio > bound {
                    continue;
                }
                let better = match &leaving {
                    None => true,
                    Some((r, best)) => {
                        if bland {
                            let gap = ratio.clone() - best.clone();
                            gap < -tol.zero.clone()
                                || (!(gap > tol.zero) && self.basis[i] < self.basis[*r])
                        } else if S::EXACT && ratio != *best {
                            ratio < *best
                        } else {
                            self.rows[i][q].abs_val() > self.rows[*r][q].abs_val()
                        }
                    }
                };
                if better {
                    leaving = Some((i, ratio));
                }
            }
            let (r, ratio) = leaving.expect("the bounding row qualifies");
            if ratio.abs_val() <= tol.zero {
                degenerate_streak += 1;
                if degenerate_streak > opts.bland_after {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
            }
            self.pivot(r, q);
            since_refactor += 1;
        }
    }
}

fn clamp_nonneg<S: Scalar>(v: S) -> S {
    if v < S::zero() {
        S::zero()
    } else {
        v
    }
}

/// Solves tall programs through their dual (fewer rows, slack starting basis
/// when costs are nonnegative) and falls back to the other formulation when
/// the first attempt fails numerically.
pub fn solve_with<S: Scalar>(lp: &LinearProgram<S>, opts: &SolverOptions) -> Result<LpSolution<S>> {
    lp.validate()?;
    let via_dual_first = lp.num_rows() > 2 * lp.num_vars();
    let first = if via_dual_first { solve_via_dual(lp, opts) } else { solve_direct(lp, opts) };
    match first {
        Ok(sol) => Ok(sol),
        Err(Error::Numerical(first_err)) => {
            let second = if via_dual_first { solve_direct(lp, opts) } else { solve_via_dual(lp, opts) };
            second.map_err(|e| match e {
                Error::Numerical(second_err) => {
                    Error::Numerical(format!("{first_err}; other formulation: {second_err}"))
                }
                other => other,
            })
        }
        Err(e) => Err(e),
    }
}

/// `min b.y + d.z` s.t. `-(A^T y + E^T z)_j <= c_j` (`= c_j` for free `x_j`), `y >= 0`, `z` free.
/// Its multipliers are the primal point.
fn dualize<S: Scalar>(lp: &LinearProgram<S>) -> LinearProgram<S> {
    let n_ub = lp.upper.len();
    let objective: Vec<S> = lp.upper.iter().chain(&lp.equal).map(|r| r.rhs.clone()).collect();
    let mut dual = LinearProgram::minimize(objective);
    for i in n_ub..lp.num_rows() {
        dual.set_free(i);
    }
    for j in 0..lp.num_vars() {
        let coeffs: Vec<S> = lp.upper.iter().chain(&lp.equal).map(|r| -r.coeffs[j].clone()).collect();
        let rhs = lp.objective[j].clone();
        match lp.bounds[j] {
            Bound::NonNegative => dual.add_le(coeffs, rhs),
            Bound::Free => dual.add_eq(coeffs, rhs),
        };
    }
    dual
}

fn solve_via_dual<S: Scalar>(lp: &LinearProgram<S>, opts: &SolverOptions) -> Result<LpSolution<S>> {
    let dual = dualize(lp);
    let dsol = solve_direct(&dual, opts)?;
    if !dsol.is_optimal() {
        // An infeasible dual leaves the primal status ambiguous; settle it directly.
        return solve_direct(lp, opts);
    }
    // Dual rows are ordered like the primal variables: nonnegative ones are <= rows, free ones equalities.
    let (mut up, mut eq) = (dsol.duals_upper.into_iter(), dsol.duals_equal.into_iter());
    let x: Vec<S> = lp
        .bounds
        .iter()
        .map(|b| match b {
            Bound::NonNegative => clamp_nonneg(up.next().expect("one row per variable")),
            Bound::Free => eq.next().expect("one row per variable"),
        })
        .collect();
    let n_ub = lp.upper.len();
    let mut y = dsol.x;
    let z = y.split_off(n_ub);
    let objective = lp
        .objective
        .iter()
        .zip(&x)
        .fold(S::zero(), |acc, (c, v)| acc + c.clone() * v.clone());
    if !S::EXACT {
        let scale: Vec<S> = lp
            .upper
            .iter()
            .chain(&lp.equal)
            .map(|r| {
                let big = r.coeffs.iter().map(|c| c.to_f64().abs()).fold(0.0f64, f64::max);
                S::from_f64(if big > 0.0 { 1.0 / big } else { 1.0 })
            })
            .collect();
        let xmax = x.iter().map(|v| v.to_f64().abs()).fold(1.0, f64::max);
        let violation = scaled_violation(lp, &x, &scale);
        let gap = (objective.to_f64() + dsol.objective.to_f64()).abs();
        let size = 1f64.max(objective.to_f64().abs());
        if violation > FEASIBILITY_TOL * xmax || gap > 1e-7 * size {
            return Err(Error::Numerical(format!(
                "dual route: violation {violation:e}, duality gap {gap:e}"
            )));
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals_upper: y,
        duals_equal: z,
    })
}

fn solve_direct<S: Scalar>(lp: &LinearProgram<S>, opts: &SolverOptions) -> Result<LpSolution<S>> {
    let nvars = lp.num_vars();
    let n_ub = lp.upper.len();
    let m = lp.num_rows();

    // Structural columns; free variables are split into a positive and a negative part.
    let mut pos_col = Vec::with_capacity(nvars);
    let mut neg_col = Vec::with_capacity(nvars);
    let mut ns = 0usize;
    for b in &lp.bounds {
        pos_col.push(ns);
        ns += 1;
        if *b == Bound::Free {
            neg_col.push(Some(ns));
            ns += 1;
        } else {
            neg_col.push(None);
        }
    }

    let rows_src: Vec<&super::Constraint<S>> = lp.upper.iter().chain(&lp.equal).collect();
    let mut scale = vec![S::one(); m];
    let mut negated = vec![false; m];
    let mut structural: Vec<Vec<S>> = Vec::with_capacity(m);
    let mut rhs: Vec<S> = Vec::with_capacity(m);
    for (i, row) in rows_src.iter().enumerate() {
        if !S::EXACT {
            let big = row
                .coeffs
                .iter()
                .map(|c| c.to_f64().abs())
                .fold(0.0f64, f64::max);
            if big > 0.0 {
                scale[i] = S::from_f64(1.0 / big);
            }
        }
        let mut b = row.rhs.clone() * scale[i].clone();
        negated[i] = b < S::zero();
        let sign = if negated[i] { -S::one() } else { S::one() };
        if negated[i] {
            b = -b;
        }
        let mut coeffs = vec![S::zero(); ns];
        for (j, a) in row.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let v = a.clone() * scale[i].clone() * sign.clone();
            if let Some(nc) = neg_col[j] {
                coeffs[nc] = -v.clone();
            }
            coeffs[pos_col[j]] = v;
        }
        structural.push(coeffs);
        rhs.push(b);
    }

    // Column layout: structural | slack per <= row | artificial per row needing one.
    let slack_col: Vec<usize> = (0..n_ub).map(|i| ns + i).collect();
    let mut art_col: Vec<Option<usize>> = vec![None; m];
    let mut width = ns + n_ub;
    for i in 0..m {
        if i >= n_ub || negated[i] {
            art_col[i] = Some(width);
            width += 1;
        }
    }
    let mut kinds = vec![ColKind::Structural; ns];
    kinds.extend(std::iter::repeat_n(ColKind::Slack, n_ub));
    kinds.extend(std::iter::repeat_n(ColKind::Artificial, width - ns - n_ub));

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = std::mem::take(&mut structural[i]);
        row.resize(width + 1, S::zero());
        if i < n_ub {
            row[slack_col[i]] = if negated[i] { -S::one() } else { S::one() };
        }
        match art_col[i] {
            Some(a) => {
                row[a] = S::one();
                basis.push(a);
            }
            None => basis.push(slack_col[i]),
        }
        row[width] = rhs[i].clone();
        rows.push(row);
    }

    let source = if S::EXACT { Vec::new() } else { rows.clone() };
    let mut tab = Tableau {
        rows,
        source,
        cost: Vec::new(),
        basis,
        kinds,
        width,
    };
    let tol = Tolerances {
        optimality: S::eps(OPTIMALITY_TOL),
        pivot: S::eps(1e-9),
        zero: S::eps(1e-12),
        feasibility: S::eps(FEASIBILITY_TOL),
    };
    let mut budget = opts.max_iterations.unwrap_or(50 * (m + width) + 1000);

    // Phase I: minimize the sum of artificials.
    if tab.kinds.contains(&ColKind::Artificial) {
        let phase1: Vec<S> = tab
            .kinds
            .iter()
            .map(|k| if *k == ColKind::Artificial { S::one() } else { S::zero() })
            .collect();
        let allowed = vec![true; width];
        tab.run(&phase1, &allowed, &tol, opts, &mut budget)?;
        let infeasibility = -tab.cost[width].clone();
        let art_mass = art_col
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_some())
            .fold(0.0, |acc, (i, _)| acc + rhs[i].to_f64().abs());
        if infeasibility > S::eps(FEASIBILITY_TOL * (1.0 + art_mass)) {
            return Ok(LpSolution::without_point(LpStatus::Infeasible));
        }
        // Pivot remaining zero-level artificials out where the row allows it.
        for i in 0..m {
            if tab.kinds[tab.basis[i]] != ColKind::Artificial {
                continue;
            }
            let mut best: Option<usize> = None;
            for j in 0..width {
                if tab.kinds[j] == ColKind::Artificial || tab.rows[i][j].abs_val() <= tol.pivot {
                    continue;
                }
                if best.is_none_or(|b| tab.rows[i][j].abs_val() > tab.rows[i][b].abs_val()) {
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                tab.pivot(i, j);
            }
        }
        // Only equality-row artificials are kept: their columns carry the duals.
        let keep: Vec<bool> = (0..width)
            .map(|j| {
                tab.kinds[j] != ColKind::Artificial
                    || art_col[n_ub..].contains(&Some(j))
                    || tab.basis.contains(&j)
            })
            .collect();
        if keep.iter().any(|k| !k) {
            let mut remap = vec![usize::MAX; width + 1];
            let mut next = 0;
            for j in 0..=width {
                if j == width || keep[j] {
                    remap[j] = next;
                    next += 1;
                }
            }
            for row in tab.rows.iter_mut().chain(tab.source.iter_mut()) {
                let old = std::mem::take(row);
                *row = old
                    .into_iter()
                    .enumerate()
                    .filter(|(j, _)| remap[*j] != usize::MAX)
                    .map(|(_, v)| v)
                    .collect();
            }
            tab.kinds = (0..width).filter(|j| keep[*j]).map(|j| tab.kinds[j]).collect();
            for b in tab.basis.iter_mut() {
                *b = remap[*b];
            }
            for a in art_col.iter_mut() {
                *a = a.and_then(|c| (remap[c] != usize::MAX).then(|| remap[c]));
            }
            width = next - 1;
            tab.width = width;
        }
    }

    // Phase II.
    let mut phase2 = vec![S::zero(); width];
    for j in 0..nvars {
        phase2[pos_col[j]] = lp.objective[j].clone();
        if let Some(nc) = neg_col[j] {
            phase2[nc] = -lp.objective[j].clone();
        }
    }
    let allowed: Vec<bool> = tab.kinds.iter().map(|k| *k != ColKind::Artificial).collect();
    if let PhaseEnd::Unbounded = tab.run(&phase2, &allowed, &tol, opts, &mut budget)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded));
    }

    let mut col_value = vec![S::zero(); width];
    for (i, &b) in tab.basis.iter().enumerate() {
        col_value[b] = tab.rhs(i).clone();
    }
    let feas = S::eps(FEASIBILITY_TOL);
    let mut x = Vec::with_capacity(nvars);
    for j in 0..nvars {
        let mut v = col_value[pos_col[j]].clone();
        if let Some(nc) = neg_col[j] {
            v = v - col_value[nc].clone();
        } else if v < S::zero() && -v.clone() <= feas {
            v = S::zero();
        }
        x.push(v);
    }
    let objective = lp
        .objective
        .iter()
        .zip(&x)
        .fold(S::zero(), |acc, (c, v)| acc + c.clone() * v.clone());
    let duals_upper = (0..n_ub)
        .map(|i| tab.cost[slack_col[i]].clone() * scale[i].clone())
        .collect();
    let duals_equal = (n_ub..m)
        .map(|i| match art_col[i] {
            Some(a) => {
                let sign = if negated[i] { -S::one() } else { S::one() };
                tab.cost[a].clone() * sign * scale[i].clone()
            }
            None => S::zero(),
        })
        .collect();

    let sol = LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals_upper,
        duals_equal,
    };
    if !S::EXACT {
        let xmax = sol.x.iter().map(|v| v.to_f64().abs()).fold(1.0, f64::max);
        let violation = scaled_violation(lp, &sol.x, &scale);
        if violation > FEASIBILITY_TOL * xmax {
            return Err(Error::Numerical(format!(
                "optimal point violates constraints by {violation:e}"
            )));
        }
    }
    Ok(sol)
}

fn scaled_violation<S: Scalar>(lp: &LinearProgram<S>, x: &[S], scale: &[S]) -> f64 {
    let mut worst: f64 = 0.0;
    let rows = lp.upper.iter().map(|r| (r, false)).chain(lp.equal.iter().map(|r| (r, true)));
    for (i, (row, is_eq)) in rows.enumerate() {
        let lhs: f64 = row
            .coeffs
            .iter()
            .zip(x)
            .map(|(a, v)| a.to_f64() * v.to_f64())
            .sum();
        let r = (lhs - row.rhs.to_f64()) * scale[i].to_f64();
        worst = worst.max(if is_eq { r.abs() } else { r });
    }
    for (b, v) in lp.bounds.iter().zip(x) {
        if *b == Bound::NonNegative {
            worst = worst.max(-v.to_f64());
        }
    }
    worst
}
