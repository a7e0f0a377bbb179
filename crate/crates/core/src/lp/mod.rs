//! Dense linear programs and a two-phase tableau simplex.
//!
//! Problems are posed as
//!
//! ```text
//! minimize    c . x
//! subject to  A_ub x <= b_ub
//!             A_eq x  = b_eq
//!             x_j >= 0  or  x_j free
//! ```
//!
//! Duals are reported as multipliers `y >= 0` on the `<=` rows and free `z`
//! on the equality rows, satisfying `c + A_ub^T y + A_eq^T z >= 0` (with
//! equality on free variables). The dual objective is `-(b_ub . y + b_eq . z)`.

mod scalar;
mod simplex;

pub use scalar::Scalar;
pub use simplex::{solve, SolverOptions};

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute feasibility tolerance for float solves.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Reduced-cost optimality tolerance for float solves.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Relative tolerance used when comparing LP values downstream.
pub const VALUE_RTOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    NonNegative,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<S = f64> {
    pub coeffs: Vec<S>,
    pub rhs: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<S = f64> {
    pub objective: Vec<S>,
    pub upper: Vec<Constraint<S>>,
    pub equal: Vec<Constraint<S>>,
    pub bounds: Vec<Bound>,
}

impl<S: Scalar> LinearProgram<S> {
    /// Minimize `objective . x` with all variables nonnegative and no rows yet.
    pub fn minimize(objective: Vec<S>) -> Self {
        let bounds = vec![Bound::NonNegative; objective.len()];
        Self {
            objective,
            upper: Vec::new(),
            equal: Vec::new(),
            bounds,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.upper.len() + self.equal.len()
    }

    pub fn set_free(&mut self, var: usize) -> &mut Self {
        self.bounds[var] = Bound::Free;
        self
    }

    pub fn add_le(&mut self, coeffs: Vec<S>, rhs: S) -> &mut Self {
        self.upper.push(Constraint { coeffs, rhs });
        self
    }

    /// `coeffs . x >= rhs`, stored negated as a `<=` row.
    pub fn add_ge(&mut self, coeffs: Vec<S>, rhs: S) -> &mut Self {
        let coeffs = coeffs.into_iter().map(|c| -c).collect();
        self.upper.push(Constraint { coeffs, rhs: -rhs });
        self
    }

    pub fn add_eq(&mut self, coeffs: Vec<S>, rhs: S) -> &mut Self {
        self.equal.push(Constraint { coeffs, rhs });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.bounds.len() != n {
            return Err(Error::MalformedLp(format!(
                "{} bounds for {n} variables",
                self.bounds.len()
            )));
        }
        let rows = self.upper.iter().chain(&self.equal);
        for (i, row) in rows.enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::MalformedLp(format!(
                    "row {i} has {} coefficients for {n} variables",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite_val() || row.coeffs.iter().any(|c| !c.is_finite_val()) {
                return Err(Error::MalformedLp(format!("row {i} has a non-finite entry")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite_val()) {
            return Err(Error::MalformedLp("non-finite objective coefficient".into()));
        }
        Ok(())
    }

    pub fn dual_objective(&self, sol: &LpSolution<S>) -> S {
        let mut acc = S::zero();
        for (row, y) in self.upper.iter().zip(&sol.duals_upper) {
            acc = acc + row.rhs.clone() * y.clone();
        }
        for (row, z) in self.equal.iter().zip(&sol.duals_equal) {
            acc = acc + row.rhs.clone() * z.clone();
        }
        -acc
    }

    /// Largest violation of any row or bound by `x` (zero when feasible).
    pub fn max_violation(&self, x: &[S]) -> f64 {
        let dot = |c: &[S]| -> f64 {
            c.iter()
                .zip(x)
                .fold(S::zero(), |acc, (a, v)| acc + a.clone() * v.clone())
                .to_f64()
        };
        let mut worst: f64 = 0.0;
        for row in &self.upper {
            worst = worst.max(dot(&row.coeffs) - row.rhs.to_f64());
        }
        for row in &self.equal {
            worst = worst.max((dot(&row.coeffs) - row.rhs.to_f64()).abs());
        }
        for (b, v) in self.bounds.iter().zip(x) {
            if *b == Bound::NonNegative {
                worst = worst.max(-v.to_f64());
            }
        }
        worst
    }
}

impl LinearProgram<f64> {
    pub fn to_exact(&self) -> LinearProgram<BigRational> {
        let conv = |v: &[f64]| v.iter().map(|c| BigRational::from_f64(*c)).collect();
        let rows = |rs: &[Constraint<f64>]| {
            rs.iter()
                .map(|r| Constraint {
                    coeffs: conv(&r.coeffs),
                    rhs: BigRational::from_f64(r.rhs),
                })
                .collect()
        };
        LinearProgram {
            objective: conv(&self.objective),
            upper: rows(&self.upper),
            equal: rows(&self.equal),
            bounds: self.bounds.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<S = f64> {
    pub status: LpStatus,
    pub x: Vec<S>,
    pub objective: S,
    pub duals_upper: Vec<S>,
    pub duals_equal: Vec<S>,
}

impl<S: Scalar> LpSolution<S> {
    pub(crate) fn without_point(status: LpStatus) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: S::zero(),
            duals_upper: Vec::new(),
            duals_equal: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn expect_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            other => Err(Error::NotOptimal(other)),
        }
    }
}

/// `|a - b| <= rtol * max(1, |a|, |b|)`.
pub fn approx_eq(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * 1f64.max(a.abs()).max(b.abs())
}
