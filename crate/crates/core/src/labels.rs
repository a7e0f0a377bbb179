//! The `(e, x, o)` resource census and the coalition-deviation coefficients
//! shared by every bound and design program.
//!
//! For a resource used by `e` agents only in `a`, `x` agents in both `a` and
//! `a'`, and `o` agents only in `a'`, a coalition of size `zeta` containing
//! `alpha` of the `e` agents and `beta` of the `o` agents leaves the resource
//! with occupancy `e + x + beta - alpha` after deviating to `a'`. There are
//! `C(e, alpha) C(o, beta) C(n - e - o, zeta - alpha - beta)` such coalitions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::Scalar;

/// Binomial coefficient in exact 128-bit arithmetic; `C(n, k) = 0` for `n < k`.
pub fn binom(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let mut acc: u128 = 1;
    for i in 0..k.min(n - k) {
        // C(n, i + 1) = C(n, i) * (n - i) / (i + 1); dividing the gcd out first
        // keeps the intermediate no larger than the result.
        let den = u128::from(i + 1);
        let g = gcd(acc, den);
        let factor = u128::from(n - i) / (den / g);
        acc = (acc / g)
            .checked_mul(factor)
            .ok_or(Error::BinomialOverflow { n, k })?;
    }
    Ok(acc)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub(crate) fn binom_small(n: usize, k: usize) -> u128 {
    binom(n as u64, k as u64).expect("binomial within 128-bit range for supported sizes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub e: usize,
    pub x: usize,
    pub o: usize,
}

impl Label {
    pub const fn new(e: usize, x: usize, o: usize) -> Self {
        Self { e, x, o }
    }

    pub const fn total(&self) -> usize {
        self.e + self.x + self.o
    }

    /// Occupancy under the first joint action, `e + x`.
    pub const fn base(&self) -> usize {
        self.e + self.x
    }

    /// Occupancy under the second joint action, `o + x`.
    pub const fn alt(&self) -> usize {
        self.o + self.x
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.e, self.x, self.o)
    }
}

/// All labels with `1 <= e + x + o <= n`, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    n: usize,
    labels: Vec<Label>,
}

impl LabelSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Label> {
        self.labels.iter()
    }

    pub fn contains(&self, label: &Label) -> bool {
        (1..=self.n).contains(&label.total())
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.labels.binary_search(label).ok()
    }
}

impl<'a> IntoIterator for &'a LabelSet {
    type Item = &'a Label;
    type IntoIter = std::slice::Iter<'a, Label>;

    fn into_iter(self) -> Self::IntoIter {
        self.labels.iter()
    }
}

pub fn enumerate_labels(n: usize) -> Result<LabelSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("label set needs n >= 1".into()));
    }
    let mut labels = Vec::new();
    for e in 0..=n {
        for x in 0..=n - e {
            for o in 0..=n - e - x {
                if e + x + o >= 1 {
                    labels.push(Label::new(e, x, o));
                }
            }
        }
    }
    Ok(LabelSet { n, labels })
}

fn check_zeta_label(n: usize, zeta: usize, label: &Label) -> Result<()> {
    if zeta == 0 || zeta > n {
        return Err(Error::InvalidArgument(format!(
            "coalition size {zeta} outside [1, {n}]"
        )));
    }
    if !(1..=n).contains(&label.total()) {
        return Err(Error::InvalidArgument(format!(
            "label {label} is not in the label set for n = {n}"
        )));
    }
    Ok(())
}

/// Integer coefficients `c_j` such that the total post-deviation value over all
/// coalitions of size `zeta` equals `sum_j c_j f(j)`, for `j` in `0..=n`.
pub fn deviation_coefficients(n: usize, zeta: usize, label: &Label) -> Result<Vec<u128>> {
    check_zeta_label(n, zeta, label)?;
    let Label { e, x, o } = *label;
    let rest = n - e - o;
    let mut coeffs = vec![0u128; n + 1];
    for alpha in 0..=e.min(zeta) {
        for beta in 0..=o.min(zeta - alpha) {
            let count = binom_small(e, alpha)
                .checked_mul(binom_small(o, beta))
                .and_then(|c| c.checked_mul(binom_small(rest, zeta - alpha - beta)))
                .ok_or(Error::BinomialOverflow {
                    n: n as u64,
                    k: zeta as u64,
                })?;
            if count == 0 {
                continue;
            }
            coeffs[e + x + beta - alpha] += count;
        }
    }
    Ok(coeffs)
}

/// `sum_{alpha, beta} C(e, alpha) C(o, beta) C(n - e - o, zeta - alpha - beta) f(e + x + beta - alpha)`.
pub fn deviation_sum<S: Scalar>(n: usize, zeta: usize, label: &Label, f: &[S]) -> Result<S> {
    if f.len() <= n {
        return Err(Error::InvalidArgument(format!(
            "rule table has {} entries, needs {} for n = {n}",
            f.len(),
            n + 1
        )));
    }
    let coeffs = deviation_coefficients(n, zeta, label)?;
    Ok(coeffs
        .iter()
        .zip(f)
        .filter(|(c, _)| **c != 0)
        .fold(S::zero(), |acc, (c, v)| acc + S::from_u128(*c) * v.clone()))
}

/// Number of coalitions counted by [`deviation_coefficients`]; equals `C(n, zeta)`.
pub fn coalition_census(n: usize, zeta: usize, label: &Label) -> Result<u128> {
    Ok(deviation_coefficients(n, zeta, label)?.iter().sum())
}
