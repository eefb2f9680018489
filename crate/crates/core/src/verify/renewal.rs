//! Level-visit counts of 0/1 partial sums and the fourth-moment bound that
//! controls them.

use rayon::prelude::*;

use crate::domain::Seed;
use crate::error::{Error, Result};
use crate::exact::{Axis, JointPmf};
use crate::mixing::{alpha_of_joint, AxisSplit};
use crate::processes::{block_pmf, sample_window, SourceModel};

use super::{mean_se, CheckReport, Status};

/// Nonincreasing, nonnegative, summable weights `H(0), H(1), ...`.
#[derive(Debug, Clone, PartialEq)]
pub enum HFunction {
    /// `H(j) = h0 * ratio^j` with `0 <= ratio < 1`.
    Geometric { h0: f64, ratio: f64 },
    /// Listed values, zero beyond the end.
    Table(Vec<f64>),
}

impl HFunction {
    pub fn zero() -> Self {
        HFunction::Table(Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HFunction::Geometric { h0, ratio } => {
                if !(*h0 >= 0.0 && h0.is_finite() && (0.0..1.0).contains(ratio)) {
                    return Err(Error::InvalidArgument(format!(
                        "geometric H needs h0 >= 0 and ratio in [0,1), got {h0}, {ratio}"
                    )));
                }
            }
            HFunction::Table(v) => {
                if v.iter().any(|h| !(*h >= 0.0 && h.is_finite())) || v.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidArgument("H must be nonnegative and nonincreasing".into()));
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, j: u64) -> f64 {
        match self {
            HFunction::Geometric { h0, ratio } => h0 * ratio.powi(j.min(i32::MAX as u64) as i32),
            HFunction::Table(v) => v.get(j as usize).copied().unwrap_or(0.0),
        }
    }

    /// `sum_{j >= 0} H(j)`.
    pub fn total(&self) -> f64 {
        match self {
            HFunction::Geometric { h0, ratio } => h0 / (1.0 - ratio),
            HFunction::Table(v) => v.iter().sum(),
        }
    }
}

/// Partial sums `S_0 = 0, S_n = X_1 + ... + X_n` of a 0/1 path and the
/// level-visit counts `eta_j = #{n >= 1 : S_n = j}` up to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalTrace {
    s: Vec<u64>,
    eta: Vec<u64>,
    p: f64,
}

impl RenewalTrace {
    pub fn from_bits(bits: impl IntoIterator<Item = bool>, p: f64) -> Self {
        let mut s = vec![0u64];
        for b in bits {
            let last = s[s.len() - 1];
            s.push(last + b as u64);
        }
        let top = s[s.len() - 1] as usize;
        let mut eta = vec![0u64; top + 1];
        for &v in &s[1..] {
            eta[v as usize] += 1;
        }
        Self { s, eta, p }
    }

    pub fn s(&self) -> &[u64] {
        &self.s
    }

    pub fn eta(&self) -> &[u64] {
        &self.eta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn horizon(&self) -> usize {
        self.s.len() - 1
    }

    /// `sum_{j <= J} eta_j = max{n >= 0 : S_n = J}` for every level `J` left
    /// strictly before the horizon.
    pub fn identity_holds(&self) -> bool {
        let top = self.s[self.s.len() - 1];
        let mut cumulative = 0u64;
        let mut last_at = 0usize;
        for j in 0..top {
            cumulative += self.eta[j as usize];
            while last_at + 1 < self.s.len() && self.s[last_at + 1] <= j {
                last_at += 1;
            }
            if cumulative != last_at as u64 {
                return false;
            }
        }
        true
    }
}

/// `P(X_0 = 1)` of a two-state iid or Markov source.
fn success_prob(model: &SourceModel) -> Result<f64> {
    if model.states() != 2 {
        return Err(Error::InvalidArgument(format!(
            "a 0/1 source needs 2 states, got {}",
            model.states()
        )));
    }
    let pi = model.marginal().ok_or(Error::ExactPathUnsupported)?;
    let p = pi[1];
    if p <= 1e-12 || p >= 1.0 - 1e-12 {
        return Err(Error::DegenerateSource(p));
    }
    Ok(p)
}

/// `alpha(X, m)` for `m = 0..len`. The `m = 0` term is `alpha` of the
/// trivial split `(X_0, X_0)`; later terms use the joint law of `(X_0, X_m)`,
/// which carries the past/future coefficient for iid and Markov sources.
pub fn alpha_sequence(model: &SourceModel, len: usize) -> Result<Vec<f64>> {
    let pi = model.marginal().ok_or(Error::ExactPathUnsupported)?;
    let k = pi.len();
    let labels: Vec<String> = (0..k).map(|i| i.to_string()).collect();
    let diag = JointPmf::from_fn(
        vec![Axis::new("X0", labels.clone()), Axis::new("X0'", labels)],
        0.0,
        |a| if a[0] == a[1] { pi[a[0]] } else { 0.0 },
    )?;
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return Ok(out);
    }
    out.push(alpha_of_joint(&diag, &AxisSplit::at(1, 2))?.value);
    for m in 1..len as i64 {
        let v = match model {
            SourceModel::Iid(_) => 0.0,
            _ => alpha_of_joint(&block_pmf(model, &[0, m])?, &AxisSplit::at(1, 2))?.value,
        };
        out.push(v);
    }
    Ok(out)
}

/// Right side of the fourth-moment bound:
/// `20000 n sum_{m<n} (m+1)^2 alpha_m + 24 n^2 (sum_{m<n} alpha_m)^2`.
pub fn moment4_rhs(alphas: &[f64], n: usize) -> f64 {
    let n_f = n as f64;
    let (a1, a2) = alphas
        .iter()
        .take(n)
        .enumerate()
        .fold((0.0, 0.0), |(s1, s2), (m, &a)| (s1 + a, s2 + ((m + 1) as f64).powi(2) * a));
    20000.0 * n_f * a2 + 24.0 * n_f * n_f * a1 * a1
}

/// Joint law of `(S_n, X_n)` for `n = 1..=horizon`, handed to `visit` in turn.
fn walk_sums(model: &SourceModel, horizon: usize, mut visit: impl FnMut(usize, &[[f64; 2]])) -> Result<()> {
    let trans = model.forward_matrix()?;
    let pi = model.marginal().ok_or(Error::ExactPathUnsupported)?;
    let mut dist = vec![[0.0f64; 2]; horizon + 2];
    dist[0][0] = pi[0];
    dist[1][1] = pi[1];
    visit(1, &dist);
    for n in 2..=horizon {
        let mut next = vec![[0.0f64; 2]; horizon + 2];
        for s in 0..n {
            for x in 0..2 {
                let p = dist[s][x];
                if p == 0.0 {
                    continue;
                }
                next[s][0] += p * trans[x][0];
                next[s + 1][1] += p * trans[x][1];
            }
        }
        dist = next;
        visit(n, &dist);
    }
    Ok(())
}

/// `sum_{n=1}^{horizon} E H(S_n)` by exact recursion over `(S_n, X_n)`.
pub fn exact_partial_sum(model: &SourceModel, h: &HFunction, horizon: usize) -> Result<f64> {
    success_prob(model)?;
    let mut total = 0.0;
    walk_sums(model, horizon, |_, dist| {
        total += dist
            .iter()
            .enumerate()
            .map(|(s, d)| (d[0] + d[1]) * h.at(s as u64))
            .sum::<f64>();
    })?;
    Ok(total)
}

/// `E (S_n - n p)^4` by exact recursion.
fn exact_moment4(model: &SourceModel, n: usize, p: f64) -> Result<f64> {
    let mut out = 0.0;
    walk_sums(model, n, |k, dist| {
        if k == n {
            out = dist
                .iter()
                .enumerate()
                .map(|(s, d)| (d[0] + d[1]) * (s as f64 - n as f64 * p).powi(4))
                .sum();
        }
    })?;
    Ok(out)
}

/// Upper bound on `C_2 = 16/p^4 sum_{n>=1} n^-4 E(S_n - np)^4` with the
/// fourth moments replaced by their alpha bound. Terms past `cutoff` use the
/// full alpha sums, whose own tail must be negligible.
fn c2_bound(alphas: &[f64], p: f64, cutoff: usize) -> Result<f64> {
    let last = alphas.last().copied().unwrap_or(0.0);
    if last > 1e-14 {
        return Err(Error::InvalidArgument(format!(
            "alpha({}) = {last:e} is not negligible; mixing too slow for the assembled bound",
            alphas.len() - 1
        )));
    }
    let head: f64 = (1..=cutoff)
        .map(|n| moment4_rhs(alphas, n) / (n as f64).powi(4))
        .sum();
    let a1: f64 = alphas.iter().sum();
    let a2: f64 = alphas
        .iter()
        .enumerate()
        .map(|(m, a)| ((m + 1) as f64).powi(2) * a)
        .sum();
    let c = cutoff as f64;
    // sum_{n>c} n^-3 <= 1/(2c^2), sum_{n>c} n^-2 <= 1/c
    let tail = 20000.0 * a2 / (2.0 * c * c) + 24.0 * a1 * a1 / c;
    Ok(16.0 / p.powi(4) * (head + tail))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma23Options {
    pub horizon: usize,
    pub replicates: usize,
    pub seed: Seed,
    /// Terms of the alpha sequence and of the `C_2` series summed explicitly.
    pub series_terms: usize,
}

impl Default for Lemma23Options {
    fn default() -> Self {
        Self {
            horizon: 200,
            replicates: 100_000,
            seed: Seed(0),
            series_terms: 4000,
        }
    }
}

fn sample_bits(model: &SourceModel, n: usize, seed: Seed) -> Result<Vec<bool>> {
    Ok(sample_window(model, 1, n as i64, seed)?
        .into_values()
        .into_iter()
        .map(|x| x == 1)
        .collect())
}

/// Monte-Carlo `sum_{n <= horizon} E H(S_n)` against `C_3 sum_j H(j)`.
///
/// Passes when the estimate is below the bound up to `3 SE`, every simulated
/// trace satisfies the level-count identity, the estimate agrees with the
/// exact truncated sum within `3 SE`, and, for an iid source, with the exact
/// infinite sum within `3 SE` plus the truncation tail.
pub fn lemma23_sum(model: &SourceModel, h: &HFunction, opts: Lemma23Options) -> Result<CheckReport> {
    h.validate()?;
    let p = success_prob(model)?;
    if opts.horizon == 0 || opts.replicates < 2 {
        return Err(Error::InvalidArgument("lemma23 needs a positive horizon and >= 2 replicates".into()));
    }
    let base = opts.seed.derive("lemma23");
    let draws: Vec<(f64, bool)> = (0..opts.replicates as u64)
        .into_par_iter()
        .map(|i| {
            let bits = sample_bits(model, opts.horizon, base.index(i))?;
            let trace = RenewalTrace::from_bits(bits, p);
            let sum: f64 = trace.s()[1..].iter().map(|&s| h.at(s)).sum();
            Ok((sum, trace.identity_holds()))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let violations = draws.iter().filter(|d| !d.1).count();
    let (est, se) = mean_se(&values);

    let alphas = alpha_sequence(model, opts.series_terms)?;
    let c2 = c2_bound(&alphas, p, opts.series_terms)?;
    let c3 = 2.0 / p + c2;
    let bound = c3 * h.total();
    let truncated = exact_partial_sum(model, h, opts.horizon)?;
    let truncated_ok = (est - truncated).abs() <= 3.0 * se + 1e-12;

    let mut report = CheckReport::at_most("lemma23", est, bound, 3.0 * se)
        .with_num("se", se)
        .with("replicates", opts.replicates)
        .with("horizon", opts.horizon)
        .with_num("p", p)
        .with_num("c2", c2)
        .with_num("c3", c3)
        .with_num("exact_truncated", truncated)
        .with("identity_violations", violations);
    let mut ok = violations == 0 && truncated_ok;
    if let SourceModel::Iid(_) = model {
        // E eta_0 = (1-p)/p, E eta_j = 1/p for j >= 1
        let limit = h.at(0) * (1.0 - p) / p + (h.total() - h.at(0)) / p;
        let tail = (limit - truncated).max(0.0);
        let limit_ok = (est - limit).abs() <= 3.0 * se + tail + 1e-12;
        report = report.with_num("exact_limit", limit).with_num("truncation_tail", tail);
        ok &= limit_ok;
    }
    if !ok {
        report.status = Status::Fail;
    }
    Ok(report)
}

/// One report per `n`: the upper confidence limit `estimate + 3 SE` of
/// `E(S_n - np)^4` against the alpha bound.
pub fn moment4_check(
    model: &SourceModel,
    n_list: &[usize],
    replicates: usize,
    seed: Seed,
) -> Result<Vec<CheckReport>> {
    let p = success_prob(model)?;
    if replicates < 2 {
        return Err(Error::InvalidArgument("moment4 needs >= 2 replicates".into()));
    }
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    let alphas = alpha_sequence(model, n_max)?;
    n_list
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::InvalidArgument("moment4 needs n >= 1".into()));
            }
            let base = seed.derive("moment4").index(n as u64);
            let values: Vec<f64> = (0..replicates as u64)
                .into_par_iter()
                .map(|i| {
                    let s = sample_bits(model, n, base.index(i))?.into_iter().filter(|&b| b).count();
                    Ok((s as f64 - n as f64 * p).powi(4))
                })
                .collect::<Result<_>>()?;
            let (est, se) = mean_se(&values);
            let rhs = moment4_rhs(&alphas, n);
            Ok(CheckReport::at_most(format!("moment4[n={n}]"), est + 3.0 * se, rhs, 0.0)
                .with_num("estimate", est)
                .with_num("se", se)
                .with_num("exact", exact_moment4(model, n, p)?)
                .with("replicates", replicates))
        })
        .collect()
}
