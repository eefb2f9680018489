//! Stationary finite-state sources: iid and stationary Markov chains, with
//! two-sided window sampling, exact block laws and closed-form Markov beta.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{inverse_cdf, ksum, validate_pmf, validate_rows, Seed, Window};
use crate::error::{Error, Result};
use crate::exact::pmf::{Axis, JointPmf, SplitPmf};

/// Tolerance for stationarity of `pi` and stochasticity of the reversed chain.
pub const CHAIN_TOL: f64 = 1e-10;

/// Largest chain handled by the dense stationary solve.
pub const MAX_CHAIN_STATES: usize = 64;

pub type Matrix = Vec<Vec<f64>>;

pub(crate) fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for (k, &aik) in a[i].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub(crate) fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `a^n` by repeated squaring.
pub(crate) fn mat_pow(a: &Matrix, mut n: u64) -> Matrix {
    let mut result = identity(a.len());
    let mut base = a.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = mat_mul(&result, &base);
        }
        base = mat_mul(&base, &base);
        n >>= 1;
    }
    result
}

fn reachable(trans: &Matrix, from: usize, forward: bool) -> Vec<bool> {
    let n = trans.len();
    let mut seen = vec![false; n];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            let edge = if forward { trans[i][j] } else { trans[j][i] };
            if edge > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

fn is_irreducible(trans: &Matrix) -> bool {
    reachable(trans, 0, true).iter().all(|&b| b) && reachable(trans, 0, false).iter().all(|&b| b)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Period of an irreducible chain (gcd of level differences along edges of a BFS tree).
fn period(trans: &Matrix) -> usize {
    let n = trans.len();
    let mut level = vec![-1i64; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut g = 0i64;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if trans[i][j] <= 0.0 {
                continue;
            }
            if level[j] < 0 {
                level[j] = level[i] + 1;
                queue.push_back(j);
            } else {
                g = gcd(g, level[i] + 1 - level[j]);
            }
        }
    }
    g.max(1) as usize
}

/// Unique stationary law of an irreducible row-stochastic matrix.
pub fn stationary_dist(trans: &Matrix) -> Result<Vec<f64>> {
    validate_rows(trans)?;
    let n = trans.len();
    if n > MAX_CHAIN_STATES {
        return Err(Error::ChainTooLarge(n));
    }
    if !is_irreducible(trans) {
        return Err(Error::Reducible);
    }
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = trans[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(Error::Reducible)?;
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let s = ksum(pi.iter().copied());
    pi.iter_mut().for_each(|p| *p /= s);
    if pi.iter().any(|&p| p <= 0.0) {
        return Err(Error::Reducible);
    }
    Ok(pi)
}

/// Stationary Markov chain with its time reversal.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    trans: Matrix,
    pi: Vec<f64>,
    rev: Matrix,
    period: usize,
}

fn reversal(trans: &Matrix, pi: &[f64]) -> Matrix {
    let n = trans.len();
    (0..n)
        .map(|j| {
            if pi[j] > 0.0 {
                (0..n).map(|i| pi[i] * trans[i][j] / pi[j]).collect()
            } else {
                trans[j].clone()
            }
        })
        .collect()
}

impl MarkovChain {
    pub fn new(trans: Matrix) -> Result<Self> {
        let pi = stationary_dist(&trans)?;
        let rev = reversal(&trans, &pi);
        let n = trans.len();
        for j in 0..n {
            let lhs = ksum((0..n).map(|i| pi[i] * trans[i][j]));
            if (lhs - pi[j]).abs() > CHAIN_TOL {
                return Err(Error::NonStochastic { row: j, sum: lhs });
            }
            let s = ksum(rev[j].iter().copied());
            if (s - 1.0).abs() > CHAIN_TOL {
                return Err(Error::NonStochastic { row: j, sum: s });
            }
        }
        let period = period(&trans);
        Ok(Self {
            trans,
            pi,
            rev,
            period,
        })
    }

    /// Builds a chain from a transition matrix and an invariant law without
    /// the irreducibility check.
    pub fn from_parts_unchecked(trans: Matrix, pi: Vec<f64>) -> Self {
        let rev = reversal(&trans, &pi);
        Self {
            trans,
            pi,
            rev,
            period: 1,
        }
    }

    /// Symmetric two-state chain that switches state with probability `flip`.
    pub fn symmetric_flip(flip: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]])
    }

    pub fn size(&self) -> usize {
        self.trans.len()
    }

    pub fn trans(&self) -> &Matrix {
        &self.trans
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn rev(&self) -> &Matrix {
        &self.rev
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn is_periodic(&self) -> bool {
        self.period > 1
    }

    pub fn power(&self, n: u64) -> Matrix {
        mat_pow(&self.trans, n)
    }
}

type CustomSampler = dyn Fn(i64, i64, &mut ChaCha8Rng) -> Vec<usize> + Send + Sync;

/// User-supplied stationary source, Monte-Carlo only.
///
/// The sampler returns the values on `lo..=hi`. Such sources cannot be
/// extended after the fact, so they declare a margin that the replication
/// sampler adds to every window up front.
#[derive(Clone)]
pub struct CustomSource {
    pub states: usize,
    pub margin: i64,
    sampler: Arc<CustomSampler>,
}

impl CustomSource {
    pub fn new(
        states: usize,
        margin: i64,
        sampler: impl Fn(i64, i64, &mut ChaCha8Rng) -> Vec<usize> + Send + Sync + 'static,
    ) -> Self {
        Self {
            states,
            margin,
            sampler: Arc::new(sampler),
        }
    }
}

impl fmt::Debug for CustomSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSource")
            .field("states", &self.states)
            .field("margin", &self.margin)
            .finish_non_exhaustive()
    }
}

/// Law of a strictly stationary finite-state sequence.
#[derive(Debug, Clone)]
pub enum SourceModel {
    Iid(Vec<f64>),
    Markov(MarkovChain),
    Custom(CustomSource),
}

impl SourceModel {
    pub fn iid(pmf: Vec<f64>) -> Result<Self> {
        validate_pmf(&pmf)?;
        Ok(SourceModel::Iid(pmf))
    }

    pub fn markov(trans: Matrix) -> Result<Self> {
        Ok(SourceModel::Markov(MarkovChain::new(trans)?))
    }

    pub fn states(&self) -> usize {
        match self {
            SourceModel::Iid(p) => p.len(),
            SourceModel::Markov(c) => c.size(),
            SourceModel::Custom(c) => c.states,
        }
    }

    /// One-dimensional stationary law, when known exactly.
    pub fn marginal(&self) -> Option<Vec<f64>> {
        match self {
            SourceModel::Iid(p) => Some(p.clone()),
            SourceModel::Markov(c) => Some(c.pi.clone()),
            SourceModel::Custom(_) => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, SourceModel::Custom(_))
    }

    /// Transition matrix of the source viewed as a Markov chain (iid rows repeat the pmf).
    pub fn forward_matrix(&self) -> Result<Matrix> {
        match self {
            SourceModel::Iid(p) => Ok(vec![p.clone(); p.len()]),
            SourceModel::Markov(c) => Ok(c.trans.clone()),
            SourceModel::Custom(_) => Err(Error::ExactPathUnsupported),
        }
    }

    pub fn backward_matrix(&self) -> Result<Matrix> {
        match self {
            SourceModel::Iid(p) => Ok(vec![p.clone(); p.len()]),
            SourceModel::Markov(c) => Ok(c.rev.clone()),
            SourceModel::Custom(_) => Err(Error::ExactPathUnsupported),
        }
    }
}

fn draw(pmf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    inverse_cdf(pmf, rng.random::<f64>())
}

/// Draws the stationary source on `lo..=hi` using `rng`.
pub(crate) fn sample_window_with(
    model: &SourceModel,
    lo: i64,
    hi: i64,
    rng: &mut ChaCha8Rng,
) -> Result<Window<usize>> {
    if hi < lo {
        return Ok(Window::empty(lo));
    }
    let len = (hi - lo + 1) as usize;
    let values = match model {
        SourceModel::Iid(p) => (0..len).map(|_| draw(p, rng)).collect(),
        SourceModel::Markov(c) => {
            let mut v = Vec::with_capacity(len);
            let mut s = draw(&c.pi, rng);
            v.push(s);
            for _ in 1..len {
                s = draw(&c.trans[s], rng);
                v.push(s);
            }
            v
        }
        SourceModel::Custom(c) => {
            let v = (c.sampler)(lo, hi, rng);
            if v.len() != len || v.iter().any(|&s| s >= c.states) {
                return Err(Error::InvalidArgument(format!(
                    "custom sampler returned {} values for {len} indices",
                    v.len()
                )));
            }
            v
        }
    };
    Ok(Window::new(lo, values))
}

/// Stationary draw of the source on `lo..=hi`.
pub fn sample_window(model: &SourceModel, lo: i64, hi: i64, seed: Seed) -> Result<Window<usize>> {
    if hi < lo {
        return Err(Error::InvalidArgument(format!("empty range {lo}..={hi}")));
    }
    sample_window_with(model, lo, hi, &mut seed.rng())
}

/// Extends `w` in place to cover `new_lo..=new_hi`, continuing the chain
/// forward from the last value and backward (reversed chain) from the first.
pub(crate) fn extend_window_with(
    model: &SourceModel,
    w: &mut Window<usize>,
    new_lo: i64,
    new_hi: i64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if matches!(model, SourceModel::Custom(_)) {
        if new_lo >= w.lo() && new_hi <= w.hi() {
            return Ok(());
        }
        return Err(Error::UnsupportedExtension);
    }
    if w.is_empty() {
        *w = sample_window_with(model, new_lo, new_hi, rng)?;
        return Ok(());
    }
    if new_lo > w.lo() || new_hi < w.hi() {
        return Err(Error::InvalidArgument(format!(
            "new range {new_lo}..={new_hi} does not contain {}..={}",
            w.lo(),
            w.hi()
        )));
    }
    let extra_left = (w.lo() - new_lo) as usize;
    let extra_right = (new_hi - w.hi()) as usize;
    match model {
        SourceModel::Iid(p) => {
            let right: Vec<usize> = (0..extra_right).map(|_| draw(p, rng)).collect();
            let mut left: Vec<usize> = (0..extra_left).map(|_| draw(p, rng)).collect();
            left.reverse();
            w.extend_right(right);
            w.extend_left(left);
        }
        SourceModel::Markov(c) => {
            let mut s = *w.values().last().expect("nonempty");
            let mut right = Vec::with_capacity(extra_right);
            for _ in 0..extra_right {
                s = draw(&c.trans[s], rng);
                right.push(s);
            }
            let mut s = w.values()[0];
            let mut left = Vec::with_capacity(extra_left);
            for _ in 0..extra_left {
                s = draw(&c.rev[s], rng);
                left.push(s);
            }
            left.reverse();
            w.extend_right(right);
            w.extend_left(left);
        }
        SourceModel::Custom(_) => unreachable!(),
    }
    Ok(())
}

pub fn extend_window(
    model: &SourceModel,
    w: &Window<usize>,
    new_lo: i64,
    new_hi: i64,
    seed: Seed,
) -> Result<Window<usize>> {
    let mut out = w.clone();
    extend_window_with(model, &mut out, new_lo, new_hi, &mut seed.rng())?;
    Ok(out)
}

fn state_axis(name: String, m: usize) -> Axis {
    Axis::new(name, (0..m).map(|i| i.to_string()).collect())
}

fn check_positions(positions: &[i64]) -> Result<()> {
    if positions.is_empty() || positions.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidArgument(format!(
            "positions must be nonempty and strictly increasing: {positions:?}"
        )));
    }
    Ok(())
}

/// Exact joint law of the source at strictly increasing positions.
pub fn block_pmf(model: &SourceModel, positions: &[i64]) -> Result<JointPmf> {
    check_positions(positions)?;
    let m = model.states();
    let axes: Vec<Axis> = positions
        .iter()
        .map(|p| state_axis(format!("W[{p}]"), m))
        .collect();
    match model {
        SourceModel::Iid(p) => JointPmf::from_fn(axes, 0.0, |atom| atom.iter().map(|&a| p[a]).product()),
        SourceModel::Markov(c) => {
            let steps: Vec<Matrix> = positions
                .windows(2)
                .map(|w| c.power((w[1] - w[0]) as u64))
                .collect();
            JointPmf::from_fn(axes, 0.0, |atom| {
                let mut p = c.pi[atom[0]];
                for (k, t) in steps.iter().enumerate() {
                    p *= t[atom[k]][atom[k + 1]];
                }
                p
            })
        }
        SourceModel::Custom(_) => Err(Error::UnsupportedExtension),
    }
}

/// Exact law of (source at `left`, source at `right`) with the interface
/// at the last left position. Requires `max(left) < min(right)`.
pub fn block_split_pmf(model: &SourceModel, left: &[i64], right: &[i64]) -> Result<SplitPmf> {
    check_positions(left)?;
    check_positions(right)?;
    if left[left.len() - 1] >= right[0] {
        return Err(Error::InvalidArgument("left block must precede right block".into()));
    }
    let m = model.states();
    let trans = model.forward_matrix().map_err(|_| Error::UnsupportedExtension)?;
    let left_law = block_pmf(model, left)?;
    let left_axes = left_law.axes().to_vec();
    let last = left.len() - 1;
    let mut l = vec![0.0; left_law.table().len() * m];
    for (cell, &p) in left_law.table().iter().enumerate() {
        let h = cell % m; // last axis is the fastest
        debug_assert_eq!(left_law.atom_of(cell)[last], h);
        l[cell * m + h] = p;
    }
    let mut positions = vec![left[last]];
    positions.extend_from_slice(right);
    let steps: Vec<Matrix> = positions
        .windows(2)
        .map(|w| mat_pow(&trans, (w[1] - w[0]) as u64))
        .collect();
    let right_axes: Vec<Axis> = right
        .iter()
        .map(|p| state_axis(format!("W[{p}]"), m))
        .collect();
    let rc: usize = right_axes.iter().map(Axis::len).product();
    let mut r = vec![0.0; rc * m];
    let mut atom = vec![0usize; right.len()];
    for b in 0..rc {
        for h in 0..m {
            let mut p = steps[0][h][atom[0]];
            for k in 1..right.len() {
                p *= steps[k][atom[k - 1]][atom[k]];
            }
            r[b * m + h] = p;
        }
        for k in (0..right.len()).rev() {
            atom[k] += 1;
            if atom[k] < m {
                break;
            }
            atom[k] = 0;
        }
    }
    SplitPmf::new(left_axes, right_axes, m, l, r, 0.0)
}

/// beta between the past and the future `n` steps ahead of a stationary
/// Markov chain: `1/2 sum_i pi_i sum_j |P^n(i,j) - pi_j|`.
pub fn markov_beta_exact(chain: &MarkovChain, n: u64) -> f64 {
    let pn = chain.power(n);
    let half: Vec<f64> = chain
        .pi
        .iter()
        .zip(&pn)
        .map(|(pi_i, row)| pi_i * ksum(row.iter().zip(&chain.pi).map(|(p, q)| (p - q).abs())))
        .collect();
    (0.5 * ksum(half)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{beta_of_joint, AxisSplit};

    #[test]
    fn stationary_examples() {
        let pi = stationary_dist(&vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14);
        let pi = stationary_dist(&vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(stationary_dist(&identity(3)), Err(Error::Reducible));
    }

    #[test]
    fn reversed_chain_is_stochastic_and_period_detected() {
        let c = MarkovChain::new(vec![
            vec![0.1, 0.6, 0.3],
            vec![0.5, 0.0, 0.5],
            vec![0.2, 0.7, 0.1],
        ])
        .unwrap();
        for row in c.rev() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(!c.is_periodic());
        let flip = MarkovChain::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(flip.period(), 2);
    }

    #[test]
    fn degenerate_iid_window() {
        let w = sample_window(&SourceModel::iid(vec![1.0, 0.0]).unwrap(), -3, 5, Seed(1)).unwrap();
        assert_eq!(w.lo(), -3);
        assert!(w.values().iter().all(|&v| v == 0));
    }

    #[test]
    fn same_seed_same_window() {
        let m = SourceModel::markov(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let a = sample_window(&m, -10, 10, Seed(7)).unwrap();
        let b = sample_window(&m, -10, 10, Seed(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn markov_singleton_frequency_matches_pi() {
        let m = SourceModel::markov(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let n = 100_000;
        let zeros = (0..n)
            .filter(|&i| sample_window(&m, 0, 0, Seed(3).index(i)).unwrap().values()[0] == 0)
            .count();
        let f = zeros as f64 / n as f64;
        let se = (f * (1.0 - f) / n as f64).sqrt();
        assert!((f - 2.0 / 3.0).abs() < 3.0 * se, "f = {f}");
    }

    #[test]
    fn left_extension_follows_reversed_chain() {
        let chain = MarkovChain::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let want = chain.rev()[0][0];
        let m = SourceModel::Markov(chain);
        let n = 100_000u64;
        let mut hits = 0;
        for i in 0..n {
            let w = Window::new(0, vec![0usize]);
            let e = extend_window(&m, &w, -1, 0, Seed(11).index(i)).unwrap();
            if *e.get(-1).unwrap() == 0 {
                hits += 1;
            }
        }
        let f = hits as f64 / n as f64;
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((f - want).abs() < 3.0 * se, "f = {f}, want {want}");
    }

    #[test]
    fn extension_to_same_range_is_identity() {
        let m = SourceModel::markov(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let w = sample_window(&m, -4, 4, Seed(5)).unwrap();
        assert_eq!(extend_window(&m, &w, -4, 4, Seed(6)).unwrap(), w);
        let custom = SourceModel::Custom(CustomSource::new(2, 0, |lo, hi, _| vec![0; (hi - lo + 1) as usize]));
        assert_eq!(extend_window(&custom, &w, -5, 4, Seed(6)), Err(Error::UnsupportedExtension));
    }

    #[test]
    fn iid_extension_keeps_old_values() {
        let m = SourceModel::iid(vec![0.3, 0.7]).unwrap();
        let w = sample_window(&m, 0, 3, Seed(9)).unwrap();
        let e = extend_window(&m, &w, -5, 8, Seed(10)).unwrap();
        assert_eq!(e.restrict(0, 3).unwrap(), w);
        assert_eq!(e.len(), 14);
    }

    #[test]
    fn block_pmf_examples() {
        let q = vec![0.2, 0.8];
        let j = block_pmf(&SourceModel::iid(q.clone()).unwrap(), &[0, 5]).unwrap();
        assert!((j.prob(&[0, 1]) - 0.16).abs() < 1e-15);
        let m = SourceModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        let j = block_pmf(&m, &[0, 1]).unwrap();
        for (atom, want) in [([0, 0], 0.375), ([0, 1], 0.125), ([1, 0], 0.125), ([1, 1], 0.375)] {
            assert!((j.prob(&atom) - want).abs() < 1e-14);
        }
        let j = block_pmf(&m, &[-2, 3, 4]).unwrap();
        let marg = j.marginal(&[1]).unwrap();
        assert!((marg.prob(&[0]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn markov_beta_examples() {
        let iid = MarkovChain::new(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert!(markov_beta_exact(&iid, 1) < 1e-15);
        let flip = MarkovChain::symmetric_flip(0.25).unwrap();
        assert!((markov_beta_exact(&flip, 1) - 0.25).abs() < 1e-14);
        assert!((markov_beta_exact(&flip, 2) - 0.125).abs() < 1e-14);
        let frozen = MarkovChain::from_parts_unchecked(identity(2), vec![0.5, 0.5]);
        assert!((markov_beta_exact(&frozen, 3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn markov_beta_nonincreasing() {
        let c = MarkovChain::new(vec![
            vec![0.2, 0.5, 0.3],
            vec![0.6, 0.1, 0.3],
            vec![0.3, 0.3, 0.4],
        ])
        .unwrap();
        let values: Vec<f64> = (1..10).map(|n| markov_beta_exact(&c, n)).collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn split_pmf_matches_dense_block() {
        let m = SourceModel::markov(vec![vec![0.6, 0.4], vec![0.1, 0.9]]).unwrap();
        let s = block_split_pmf(&m, &[-1, 0], &[2, 3]).unwrap();
        let dense = block_pmf(&m, &[-1, 0, 2, 3]).unwrap();
        let j = s.to_joint().unwrap();
        for (a, b) in j.table().iter().zip(dense.table()) {
            assert!((a - b).abs() < 1e-15);
        }
        let split = AxisSplit::new(vec![0, 1], vec![2, 3]);
        assert!((s.beta() - beta_of_joint(&dense, &split).unwrap()).abs() < 1e-14);
    }
}
