//! Normal approximation of partial sums of a symbol indicator.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::{MidSymbol, Seed};
use crate::error::{Error, Result};
use crate::processes::{sample_window, MarkovChain, SourceModel};
use crate::replication::{sample_replication, Measure, Model, SamplingOptions};

use super::CheckReport;

pub const VARIANCE_TOL: f64 = 1e-12;
pub const MIN_P_VALUE: f64 = 0.01;

/// The sequence whose indicator is summed.
#[derive(Debug, Clone)]
pub enum CltSource {
    /// `1(X_i = symbol)` for a stationary iid or Markov source.
    Source { model: SourceModel, symbol: usize },
    /// `1(Z at xi_i = M)`, `i = 1..n`, under `P0`.
    MatchedLetters(Model),
}

/// Chain of `Z` watched only at its `{M, I}` visits, on states `(M, I)`.
pub fn induced_mi_chain(mid: &SourceModel) -> Result<MarkovChain> {
    let p = mid.forward_matrix()?;
    let (m, i, d) = (MidSymbol::M.index(), MidSymbol::I.index(), MidSymbol::D.index());
    let stay = p[d][d];
    if stay >= 1.0 - 1e-15 {
        return Err(Error::NonErgodicMid("D is absorbing".into()));
    }
    let row = |a: usize| -> Vec<f64> {
        let via_d = p[a][d] / (1.0 - stay);
        vec![p[a][m] + via_d * p[d][m], p[a][i] + via_d * p[d][i]]
    };
    MarkovChain::new(vec![row(m), row(i)])
}

/// Trans matrix and stationary law of the summed sequence, plus the symbol.
fn chain_of(src: &CltSource) -> Result<(Vec<Vec<f64>>, Vec<f64>, usize)> {
    match src {
        CltSource::Source { model, symbol } => {
            if *symbol >= model.states() {
                return Err(Error::OutOfRange {
                    index: *symbol as i64,
                    lo: 0,
                    hi: model.states() as i64 - 1,
                });
            }
            let pi = model.marginal().ok_or(Error::ExactPathUnsupported)?;
            Ok((model.forward_matrix()?, pi, *symbol))
        }
        CltSource::MatchedLetters(model) => {
            let c = induced_mi_chain(&model.mid)?;
            Ok((c.trans().clone(), c.pi().to_vec(), 0))
        }
    }
}

/// Long-run variance `Var f + 2 sum_n Cov(f(X_0), f(X_n))` of the indicator
/// of `s`, summing covariances until the chain has mixed to `1e-14`.
fn long_run_variance(trans: &[Vec<f64>], pi: &[f64], s: usize) -> f64 {
    let ps = pi[s];
    let mut var = ps * (1.0 - ps);
    let mut row: Vec<f64> = (0..pi.len()).map(|j| if j == s { 1.0 } else { 0.0 }).collect();
    for _ in 0..1_000_000 {
        row = (0..pi.len())
            .map(|j| row.iter().zip(trans).map(|(r, t)| r * t[j]).sum())
            .collect();
        var += 2.0 * ps * (row[s] - ps);
        if row.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>() < 1e-14 {
            break;
        }
    }
    var
}

/// Asymptotic Kolmogorov tail with Stephens' small-sample correction.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.27 {
        return 1.0;
    }
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (2.0 * q).clamp(0.0, 1.0)
}

fn ks_statistic(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let std = Normal::standard();
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = std.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `(S_n - n pi_s) / (sqrt(n) sigma)` over `replicates` runs, tested against
/// the standard normal with Kolmogorov-Smirnov; passes when `p > 0.01`.
pub fn clt_demo(src: &CltSource, n: usize, replicates: usize, seed: Seed) -> Result<CheckReport> {
    if n == 0 || replicates < 2 {
        return Err(Error::InvalidArgument("clt needs n >= 1 and >= 2 replicates".into()));
    }
    let (trans, pi, s) = chain_of(src)?;
    let sigma2 = long_run_variance(&trans, &pi, s);
    if sigma2 <= VARIANCE_TOL {
        return Err(Error::DegenerateVariance(sigma2));
    }
    let base = seed.derive("clt");
    let sums: Vec<u64> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| match src {
            CltSource::Source { model, symbol } => Ok(sample_window(model, 1, n as i64, base.index(i))?
                .values()
                .iter()
                .filter(|&&x| x == *symbol)
                .count() as u64),
            CltSource::MatchedLetters(model) => {
                let r = sample_replication(model, 1, n as i64, Measure::P0, base.index(i), SamplingOptions::default())?;
                Ok(r.v.values().iter().filter(|a| a.letter == MidSymbol::M).count() as u64)
            }
        })
        .collect::<Result<_>>()?;
    let scale = (n as f64 * sigma2).sqrt();
    let z: Vec<f64> = sums
        .iter()
        .map(|&c| (c as f64 - n as f64 * pi[s]) / scale)
        .collect();
    let d = ks_statistic(z);
    let p = ks_p_value(d, replicates);
    Ok(CheckReport::above("clt", p, MIN_P_VALUE)
        .with_num("ks_statistic", d)
        .with_num("sigma2", sigma2)
        .with("n", n)
        .with("replicates", replicates))
}
