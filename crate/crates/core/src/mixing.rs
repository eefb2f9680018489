//! Dependence coefficients: exact alpha and beta of joint tables, block
//! approximations for sequences, and plug-in estimates with bootstrap errors.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::domain::{ksum, Seed};
use crate::error::{Error, Result};
use crate::exact::{block_split, fmt_num, ExactOptions, JointPmf, Query, SplitPmf};
use crate::processes::{block_split_pmf, markov_beta_exact, SourceModel};
use crate::replication::{Measure, Model};

/// Largest side (in atoms) for exact subset enumeration in `alpha_of_joint`.
pub const ALPHA_EXACT_ATOMS: usize = 20;

pub const DEFAULT_RESAMPLES: usize = 200;

/// Which axes of a joint table form the past and which the future.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisSplit {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl AxisSplit {
    pub fn new(left: Vec<usize>, right: Vec<usize>) -> Self {
        Self { left, right }
    }

    /// First `k` axes against the rest.
    pub fn at(k: usize, total: usize) -> Self {
        Self::new((0..k).collect(), (k..total).collect())
    }

    fn check(&self, naxes: usize) -> Result<()> {
        let all: Vec<usize> = self.left.iter().chain(&self.right).copied().collect();
        if self.left.is_empty() || self.right.is_empty() {
            return Err(Error::InvalidArgument("both sides of a split need axes".into()));
        }
        for (i, &a) in all.iter().enumerate() {
            if a >= naxes || all[..i].contains(&a) {
                return Err(Error::InvalidArgument(format!("bad axis split {self:?}")));
            }
        }
        Ok(())
    }
}

/// Joint matrix `P(a, b)` of the two sides (left cells outer) and its dimensions.
fn side_matrix(j: &JointPmf, split: &AxisSplit) -> Result<(Vec<f64>, usize, usize)> {
    split.check(j.axes().len())?;
    let keep: Vec<usize> = split.left.iter().chain(&split.right).copied().collect();
    let m = j.marginal(&keep)?;
    let rc: usize = split.right.iter().map(|&a| j.axes()[a].len()).product();
    let lc = m.table().len() / rc;
    Ok((m.table().to_vec(), lc, rc))
}

/// `1/2 sum |p(a,b) - p(a) q(b)|` over a dense matrix, with the mass
/// deficit as one extra atom sitting on both sides.
fn beta_dense(p: &[f64], lc: usize, rc: usize, deficit: f64) -> f64 {
    let mut pa: Vec<f64> = (0..lc).map(|a| ksum(p[a * rc..(a + 1) * rc].iter().copied())).collect();
    let mut qb: Vec<f64> = (0..rc).map(|b| ksum((0..lc).map(|a| p[a * rc + b]))).collect();
    pa.push(deficit);
    qb.push(deficit);
    let cell = |a: usize, b: usize| -> f64 {
        if a == lc || b == rc {
            if a == lc && b == rc {
                deficit
            } else {
                0.0
            }
        } else {
            p[a * rc + b]
        }
    };
    let terms = (0..=lc).flat_map(|a| (0..=rc).map(move |b| (a, b)));
    let s = ksum(terms.map(|(a, b)| (cell(a, b) - pa[a] * qb[b]).abs()));
    (0.5 * s).clamp(0.0, 1.0)
}

/// beta between the sigma-fields generated by the two sides of `split`.
///
/// For atomic sigma-fields the supremum over partition pairs is attained at
/// the atom partitions, so this is the closed form `1/2 sum |p - pq|`.
pub fn beta_of_joint(j: &JointPmf, split: &AxisSplit) -> Result<f64> {
    let (p, lc, rc) = side_matrix(j, split)?;
    Ok(beta_dense(&p, lc, rc, j.mass_deficit()))
}

type CellFn = Box<dyn Fn(usize, usize) -> f64>;

impl SplitPmf {
    /// beta between the left and right vectors, computed without
    /// materializing the joint table. The mass deficit is an atom on both
    /// sides; right-side losses form an overflow column.
    pub fn beta(&self) -> f64 {
        let lc = self.left_cells();
        let rc = self.right_cells();
        let hs = self.hidden();
        // marginal of the right side and right-overflow per h
        let hw = self.hidden_weights();
        let mut qb = vec![0.0; rc + 1];
        let mut lost = vec![1.0; hs];
        for (b, q) in qb.iter_mut().take(rc).enumerate() {
            let r = self.right_row(b);
            *q = ksum(r.iter().zip(&hw).map(|(x, y)| x * y));
            for (l, x) in lost.iter_mut().zip(r.iter()) {
                *l -= x;
            }
        }
        let lost: Vec<f64> = lost.into_iter().map(|v| v.max(0.0)).collect();
        let left_total = ksum(hw.iter().copied());
        let left_deficit = (1.0 - left_total).max(0.0);
        qb[rc] = ksum(hw.iter().zip(&lost).map(|(w, l)| w * l)) + left_deficit;

        let rows: Vec<f64> = (0..lc)
            .into_par_iter()
            .map(|a| {
                let l = self.left_row(a);
                let pa = ksum(l.iter().copied());
                if pa == 0.0 {
                    return 0.0;
                }
                let mut row = vec![0.0; rc];
                self.joint_row(a, &mut row);
                let over = ksum(l.iter().zip(&lost).map(|(x, y)| x * y));
                let s = ksum(row.iter().zip(&qb).map(|(p, q)| (p - pa * q).abs()));
                s + (over - pa * qb[rc]).abs()
            })
            .collect();
        let deficit_row = ksum(qb[..rc].iter().map(|q| left_deficit * q))
            + (left_deficit - left_deficit * qb[rc]).abs();
        (0.5 * (ksum(rows) + deficit_row)).clamp(0.0, 1.0)
    }
}

/// alpha together with whether it is the exact supremum or a lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaValue {
    pub value: f64,
    pub lower_bound: bool,
}

/// `max over B of |P(A x B) - P(A) Q(B)|` for a fixed left event `A`.
fn best_right(da: &[f64]) -> f64 {
    let pos: f64 = da.iter().filter(|d| **d > 0.0).sum();
    let neg: f64 = -da.iter().filter(|d| **d < 0.0).sum::<f64>();
    pos.max(neg)
}

/// alpha between the two sides: the supremum of `|P(A B) - P(A) P(B)|`.
///
/// For each event on the smaller side the best event on the other side is
/// found in closed form; when both sides exceed `ALPHA_EXACT_ATOMS` atoms,
/// a seeded local search returns a lower bound.
pub fn alpha_of_joint(j: &JointPmf, split: &AxisSplit) -> Result<AlphaValue> {
    let (dense, lc0, rc0) = side_matrix(j, split)?;
    // the mass deficit is one more atom on both sides
    let (lc, rc) = (lc0 + 1, rc0 + 1);
    let mut p = vec![0.0; lc * rc];
    for a in 0..lc0 {
        p[a * rc..a * rc + rc0].copy_from_slice(&dense[a * rc0..(a + 1) * rc0]);
    }
    p[lc * rc - 1] = j.mass_deficit();
    // drop null atoms, orient so the enumerated side is the smaller one
    let rows: Vec<usize> = (0..lc).filter(|&a| (0..rc).any(|b| p[a * rc + b] > 0.0)).collect();
    let cols: Vec<usize> = (0..rc).filter(|&b| (0..lc).any(|a| p[a * rc + b] > 0.0)).collect();
    let (na, nb, get): (usize, usize, CellFn) = if rows.len() <= cols.len() {
        let (r, c) = (rows.clone(), cols.clone());
        (r.len(), c.len(), Box::new(move |a, b| p[r[a] * rc + c[b]]))
    } else {
        let (r, c) = (rows.clone(), cols.clone());
        (c.len(), r.len(), Box::new(move |a, b| p[r[b] * rc + c[a]]))
    };
    if na == 0 {
        return Ok(AlphaValue {
            value: 0.0,
            lower_bound: false,
        });
    }
    let m: Vec<Vec<f64>> = (0..na).map(|a| (0..nb).map(|b| get(a, b)).collect()).collect();
    let pa: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    let qb: Vec<f64> = (0..nb).map(|b| m.iter().map(|r| r[b]).sum()).collect();
    let eval = |set: &dyn Fn(usize) -> bool| -> f64 {
        let mut d = vec![0.0; nb];
        let mut pset = 0.0;
        for a in (0..na).filter(|&a| set(a)) {
            pset += pa[a];
            for b in 0..nb {
                d[b] += m[a][b];
            }
        }
        for b in 0..nb {
            d[b] -= pset * qb[b];
        }
        best_right(&d)
    };
    if na <= ALPHA_EXACT_ATOMS {
        let best = (1u64..(1u64 << na))
            .into_par_iter()
            .map(|mask| eval(&|a| mask >> a & 1 == 1))
            .reduce(|| 0.0, f64::max);
        return Ok(AlphaValue {
            value: best.min(0.25),
            lower_bound: false,
        });
    }
    // Local search over left events from seeded random starts.
    let mut rng = Seed(0x0A1F_A5EA_4C11).rng();
    let mut best = 0.0f64;
    for _ in 0..64 {
        let mut set: Vec<bool> = (0..na).map(|_| rng.random::<bool>()).collect();
        let mut cur = eval(&|a| set[a]);
        loop {
            let mut improved = false;
            for a in 0..na {
                set[a] = !set[a];
                let v = eval(&|i| set[i]);
                if v > cur + 1e-15 {
                    cur = v;
                    improved = true;
                } else {
                    set[a] = !set[a];
                }
            }
            if !improved {
                break;
            }
        }
        best = best.max(cur);
    }
    Ok(AlphaValue {
        value: best.min(0.25),
        lower_bound: true,
    })
}

/// `1/2 sum |a - b|` over cells and the overflow atom. Axes must carry the
/// same labels; names may differ, so shifted blocks compare directly.
pub fn tv_distance(a: &JointPmf, b: &JointPmf) -> Result<f64> {
    let same = a.axes().len() == b.axes().len()
        && a.axes().iter().zip(b.axes()).all(|(x, y)| x.labels == y.labels);
    if !same {
        return Err(Error::AxisMismatch(format!(
            "{:?} vs {:?}",
            a.axes().iter().map(|x| &x.name).collect::<Vec<_>>(),
            b.axes().iter().map(|x| &x.name).collect::<Vec<_>>()
        )));
    }
    let cells = ksum(a.table().iter().zip(b.table()).map(|(p, q)| (p - q).abs()));
    Ok((0.5 * (cells + (a.mass_deficit() - b.mass_deficit()).abs())).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Closed form for a stationary Markov chain.
    Exact,
    /// Exact law of finite blocks.
    Oracle,
    /// Plug-in estimate from samples.
    Empirical,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Oracle => "oracle",
            Method::Empirical => "empirical",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "oracle" => Ok(Method::Oracle),
            "empirical" => Ok(Method::Empirical),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// One block-beta value with its error budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaEstimate {
    pub value: f64,
    pub se: f64,
    /// Upper bound on the expected plug-in bias (0 for exact paths).
    pub bias_bound: f64,
    pub mass_deficit: f64,
    pub method: Method,
}

impl BetaEstimate {
    fn exact(value: f64, method: Method, mass_deficit: f64) -> Self {
        Self {
            value,
            se: 0.0,
            bias_bound: 0.0,
            mass_deficit,
            method,
        }
    }
}

/// Which output-side process of the model a block is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelProcess {
    Upsilon,
    V,
    Y,
}

impl ModelProcess {
    pub fn query(self, k: i64) -> Query {
        match self {
            ModelProcess::Upsilon => Query::Upsilon(k),
            ModelProcess::V => Query::V(k),
            ModelProcess::Y => Query::Y(k),
        }
    }
}

/// Draws one (past block, future block) pair, each encoded as a cell index.
pub type BlockSampler<'a> = dyn Fn(i64, i64, Seed) -> Result<(u64, u64)> + Sync + 'a;

/// Settings for plug-in estimation.
#[derive(Clone, Copy)]
pub struct Empirical<'a> {
    pub sampler: &'a BlockSampler<'a>,
    /// Number of possible cells of one block (used for the bias bound).
    pub block_cells: u64,
    pub samples: usize,
    pub resamples: usize,
    pub seed: Seed,
}

/// Where block laws come from.
#[derive(Clone, Copy)]
pub enum LawProvider<'a> {
    /// A stationary iid or Markov source, blocks by exact law.
    Source(&'a SourceModel),
    /// An output-side process of the model, blocks by exact enumeration.
    Model {
        model: &'a Model,
        process: ModelProcess,
        measure: Measure,
        opts: ExactOptions,
    },
    Empirical(Empirical<'a>),
}

/// Plug-in beta from a list of `(left cell, right cell)` observations.
pub fn plug_in_beta(pairs: &[(u64, u64)]) -> f64 {
    let n = pairs.len() as f64;
    if pairs.is_empty() {
        return 0.0;
    }
    let mut joint: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut left: BTreeMap<u64, f64> = BTreeMap::new();
    let mut right: BTreeMap<u64, f64> = BTreeMap::new();
    for &(a, b) in pairs {
        *joint.entry((a, b)).or_insert(0.0) += 1.0;
        *left.entry(a).or_insert(0.0) += 1.0;
        *right.entry(b).or_insert(0.0) += 1.0;
    }
    // observed cells, plus the product mass sitting on unobserved cells
    let mut observed_product = 0.0;
    let mut s = 0.0;
    for (&(a, b), &c) in &joint {
        let prod = left[&a] * right[&b] / (n * n);
        observed_product += prod;
        s += (c / n - prod).abs();
    }
    (0.5 * (s + (1.0 - observed_product).max(0.0))).clamp(0.0, 1.0)
}

/// Deterministic bound on the expected plug-in error when the table has
/// `k_left x k_right` cells and `n` samples:
/// `1/2 (sqrt(K/n) + sqrt(K_left/n) + sqrt(K_right/n))`.
pub fn plug_in_bias_bound(k_left: u64, k_right: u64, n: usize) -> f64 {
    let n = n as f64;
    let k = k_left as f64 * k_right as f64;
    0.5 * ((k / n).sqrt() + (k_left as f64 / n).sqrt() + (k_right as f64 / n).sqrt())
}

fn empirical_block_beta(e: &Empirical<'_>, n: i64, w: i64) -> Result<BetaEstimate> {
    if e.samples == 0 {
        return Err(Error::InvalidArgument("empirical estimate needs samples".into()));
    }
    let base = e.seed.derive("blocks").index(n as u64).index(w as u64);
    let pairs: Vec<(u64, u64)> = (0..e.samples as u64)
        .into_par_iter()
        .map(|i| (e.sampler)(n, w, base.index(i)))
        .collect::<Result<_>>()?;
    let value = plug_in_beta(&pairs);
    let boot = e.seed.derive("bootstrap").index(n as u64).index(w as u64);
    let reps: Vec<f64> = (0..e.resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = boot.index(r).rng();
            let resample: Vec<(u64, u64)> = (0..pairs.len())
                .map(|_| pairs[rng.random_range(0..pairs.len())])
                .collect();
            plug_in_beta(&resample)
        })
        .collect();
    let se = if reps.len() > 1 {
        let mean = reps.iter().sum::<f64>() / reps.len() as f64;
        (reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(BetaEstimate {
        value,
        se,
        bias_bound: plug_in_bias_bound(e.block_cells, e.block_cells, e.samples),
        mass_deficit: 0.0,
        method: Method::Empirical,
    })
}

/// beta between the block `(-w, 0]` and the block `[n, n + w)`.
pub fn block_beta(provider: &LawProvider<'_>, n: i64, w: i64) -> Result<BetaEstimate> {
    if n < 1 || w < 1 {
        return Err(Error::InvalidArgument(format!("lag {n} and width {w} must be positive")));
    }
    match provider {
        LawProvider::Source(src) => {
            let left: Vec<i64> = (-w + 1..=0).collect();
            let right: Vec<i64> = (n..n + w).collect();
            let s = block_split_pmf(src, &left, &right)?;
            Ok(BetaEstimate::exact(s.beta(), Method::Oracle, 0.0))
        }
        LawProvider::Model {
            model,
            process,
            measure,
            opts,
        } => {
            let s = block_split(model, |k| process.query(k), n, w, *measure, *opts)?;
            Ok(BetaEstimate::exact(s.beta(), Method::Oracle, s.mass_deficit()))
        }
        LawProvider::Empirical(e) => empirical_block_beta(e, n, w),
    }
}

/// Lag-indexed coefficient values at a fixed block width.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingProfile {
    pub lags: Vec<i64>,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    pub bias_bound: Vec<f64>,
    pub method: Method,
    pub width: i64,
}

impl MixingProfile {
    /// CSV with header `lag,value,se,method,width`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lag,value,se,method,width\n");
        self.write_rows(&mut s, None);
        s
    }

    /// Rows without header; `label` prefixes each row when given.
    pub fn write_rows(&self, out: &mut String, label: Option<&str>) {
        for i in 0..self.lags.len() {
            if let Some(l) = label {
                let _ = write!(out, "{l},");
            }
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.lags[i],
                fmt_num(self.values[i]),
                fmt_num(self.se[i]),
                self.method,
                self.width
            );
        }
    }
}

/// `block_beta` across `lags`. A Markov source gives the closed form
/// (width-free) and the profile is checked to be nonincreasing.
pub fn beta_profile(provider: &LawProvider<'_>, lags: &[i64], w: i64) -> Result<MixingProfile> {
    let closed_form = match provider {
        LawProvider::Source(SourceModel::Markov(c)) => Some(c),
        _ => None,
    };
    let mut values = Vec::with_capacity(lags.len());
    let mut se = Vec::with_capacity(lags.len());
    let mut bias = Vec::with_capacity(lags.len());
    let mut method = Method::Oracle;
    for &n in lags {
        let est = match closed_form {
            Some(c) if n >= 1 => BetaEstimate::exact(markov_beta_exact(c, n as u64), Method::Exact, 0.0),
            _ => block_beta(provider, n, w)?,
        };
        method = est.method;
        values.push(est.value);
        se.push(est.se);
        bias.push(est.bias_bound);
    }
    if method == Method::Exact {
        let mut order: Vec<usize> = (0..lags.len()).collect();
        order.sort_by_key(|&i| lags[i]);
        if order.windows(2).any(|p| values[p[1]] > values[p[0]] + 1e-12) {
            return Err(Error::InvalidArgument("exact profile is not nonincreasing".into()));
        }
    }
    Ok(MixingProfile {
        lags: lags.to_vec(),
        values,
        se,
        bias_bound: bias,
        method,
        width: w,
    })
}
