//! Checks on the output-side processes of the replication model:
//! stationarity under `P0`, its failure under `P`, and the mixing bound for
//! `Upsilon` in terms of `V` and the input source.

use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;
use rayon::prelude::*;

use crate::domain::{MidSymbol, Seed};
use crate::error::{Error, Result};
use crate::exact::{block_split, enumerate_model, fmt_num, upsilon_block_dist, ExactOptions, JointPmf, Query};
use crate::mixing::{plug_in_beta, plug_in_bias_bound, tv_distance, DEFAULT_RESAMPLES};
use crate::processes::{markov_beta_exact, SourceModel};
use crate::replication::{sample_replication, Measure, Model, SamplingOptions};

use super::{mean_se, CheckReport, HFunction, Status};

/// Exact enumeration, or Monte Carlo with bootstrap standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckMode {
    Exact,
    MonteCarlo { samples: usize, resamples: usize, seed: Seed },
}

impl CheckMode {
    pub fn monte_carlo(samples: usize, seed: Seed) -> Self {
        CheckMode::MonteCarlo {
            samples,
            resamples: DEFAULT_RESAMPLES,
            seed,
        }
    }
}

pub const STATIONARITY_TOL: f64 = 1e-8;
pub const REMARK_THRESHOLD: f64 = 1e-3;
pub const EXACT_INEQ_TOL: f64 = 1e-10;
pub const COARSENING_TOL: f64 = 1e-12;
/// Largest acceptable share of the gap law in the overflow atom.
pub const MAX_OVERFLOW_SHARE: f64 = 0.1;

/// Dense ids in order of first appearance.
fn intern<K: Hash + Eq + Clone>(keys: &[K]) -> Vec<u64> {
    let mut ids: HashMap<K, u64> = HashMap::new();
    keys.iter()
        .map(|k| {
            let next = ids.len() as u64;
            *ids.entry(k.clone()).or_insert(next)
        })
        .collect()
}

fn empirical_tv(a: &[u64], b: &[u64], cells: usize) -> f64 {
    let mut ca = vec![0.0; cells];
    let mut cb = vec![0.0; cells];
    a.iter().for_each(|&i| ca[i as usize] += 1.0);
    b.iter().for_each(|&i| cb[i as usize] += 1.0);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    0.5 * ca.iter().zip(&cb).map(|(x, y)| (x / na - y / nb).abs()).sum::<f64>()
}

/// Observed tv between two samples and the mean and sd of the tv between two
/// resamples of the pooled data.
fn two_sample_tv(a: &[u64], b: &[u64], resamples: usize, seed: Seed) -> (f64, f64, f64) {
    let cells = a.iter().chain(b).max().map_or(0, |&m| m as usize + 1);
    let observed = empirical_tv(a, b, cells);
    let pool: Vec<u64> = a.iter().chain(b).copied().collect();
    let null: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed.index(r).rng();
            let ra: Vec<u64> = (0..a.len()).map(|_| pool[rng.random_range(0..pool.len())]).collect();
            let rb: Vec<u64> = (0..b.len()).map(|_| pool[rng.random_range(0..pool.len())]).collect();
            empirical_tv(&ra, &rb, cells)
        })
        .collect();
    let (mean, se) = mean_se(&null);
    let sd = se * (null.len() as f64).sqrt();
    (observed, mean, sd)
}

fn shifted(positions: &[i64], s: i64) -> Vec<i64> {
    positions.iter().map(|p| p + s).collect()
}

/// Compares the law of `Upsilon` at `positions` with its law at
/// `positions + 1` and `positions + 2`. Under `P0` the tv distance must vanish
/// (exact: `<= 1e-8`; Monte Carlo: within the bootstrap null mean plus 3 sd).
/// Under `P` the distances are reported as inconclusive, without a pass
/// requirement.
pub fn stationarity_report(
    model: &Model,
    positions: &[i64],
    measure: Measure,
    mode: CheckMode,
    opts: ExactOptions,
) -> Result<Vec<CheckReport>> {
    if positions.is_empty() {
        return Err(Error::InvalidArgument("stationarity needs block positions".into()));
    }
    let mut out = Vec::new();
    match mode {
        CheckMode::Exact => {
            let base = upsilon_block_dist(model, positions, measure, opts)?;
            for s in 1..=2 {
                let other = upsilon_block_dist(model, &shifted(positions, s), measure, opts)?;
                let tv = tv_distance(&base, &other)?;
                let r = CheckReport::at_most(format!("stationarity[{measure},shift={s}]"), tv, 0.0, STATIONARITY_TOL)
                    .with("mode", "exact")
                    .with("positions", format!("{positions:?}"))
                    .with_num("deficit", base.mass_deficit().max(other.mass_deficit()));
                out.push(if measure == Measure::P { r.inconclusive() } else { r });
            }
        }
        CheckMode::MonteCarlo {
            samples,
            resamples,
            seed,
        } => {
            if samples < 2 {
                return Err(Error::InvalidArgument("stationarity needs >= 2 samples".into()));
            }
            let lo = *positions.iter().min().expect("nonempty");
            let hi = *positions.iter().max().expect("nonempty");
            let draw = |stream: &str, s: i64| -> Result<Vec<Vec<(MidSymbol, u64, usize)>>> {
                let base = seed.derive("stationarity").derive(stream);
                (0..samples as u64)
                    .into_par_iter()
                    .map(|i| {
                        let r = sample_replication(
                            model,
                            lo + s,
                            hi + s,
                            measure,
                            base.index(i),
                            SamplingOptions::default(),
                        )?;
                        positions
                            .iter()
                            .map(|&p| {
                                let a = r.upsilon.get(p + s)?;
                                Ok((a.v.letter, a.v.gap, a.y))
                            })
                            .collect()
                    })
                    .collect()
            };
            let reference = draw("reference", 0)?;
            for s in 1..=2 {
                let moved = draw(&format!("shift{s}"), s)?;
                let all: Vec<_> = reference.iter().chain(&moved).cloned().collect();
                let ids = intern(&all);
                let (a, b) = ids.split_at(reference.len());
                let (tv, null_mean, null_sd) =
                    two_sample_tv(a, b, resamples, seed.derive("stationarity-boot").index(s as u64));
                let r = CheckReport::at_most(
                    format!("stationarity[{measure},shift={s}]"),
                    tv,
                    null_mean,
                    3.0 * null_sd,
                )
                .with("mode", "mc")
                .with("samples", samples)
                .with("positions", format!("{positions:?}"))
                .with_num("null_sd", null_sd);
                out.push(if measure == Measure::P { r.inconclusive() } else { r });
            }
        }
    }
    Ok(out)
}

fn single(model: &Model, q: Query, measure: Measure, opts: ExactOptions) -> Result<JointPmf> {
    enumerate_model(model, &[q], measure, opts)
}

/// `V_1` against `V_2` under `P` (expected to differ) and `V_k` against
/// `V_{k+1}` for `k = 1, 2` under `P0` (equal). A configuration whose laws
/// coincide under `P` cannot show the effect and is marked inconclusive.
pub fn remark31a_demo(model: &Model, opts: ExactOptions) -> Result<CheckReport> {
    let v1 = single(model, Query::V(1), Measure::P, opts)?;
    let v2 = single(model, Query::V(2), Measure::P, opts)?;
    let tv_p = tv_distance(&v1, &v2)?;
    let mut tv_p0: f64 = 0.0;
    for k in 1..=2 {
        let a = single(model, Query::V(k), Measure::P0, opts)?;
        let b = single(model, Query::V(k + 1), Measure::P0, opts)?;
        tv_p0 = tv_p0.max(tv_distance(&a, &b)?);
    }
    let gap1 = |measure| -> Result<f64> {
        Ok(single(model, Query::Gap(1), measure, opts)?.table()[0])
    };
    let mut r = CheckReport::above("remark31a", tv_p, REMARK_THRESHOLD)
        .with_num("tv_p0", tv_p0)
        .with_num("gap1_p", gap1(Measure::P)?)
        .with_num("gap1_p0", gap1(Measure::P0)?);
    if tv_p0 > STATIONARITY_TOL {
        r.status = Status::Fail;
    } else if tv_p <= REMARK_THRESHOLD {
        r = r.inconclusive();
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem41Options {
    pub n_list: Vec<i64>,
    pub w: i64,
    pub gap_cap: u32,
    /// Window and tolerance for enumeration; the `V` side uses
    /// `gap_cap = window_bound`, which loses no gap information.
    pub exact: ExactOptions,
    /// `H(n)`; defaults to `beta(X, n + 1)` from the input source.
    pub h: Option<HFunction>,
    pub mode: CheckMode,
}

/// One line of the summability table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem41Row {
    pub n: i64,
    pub beta_upsilon: f64,
    pub beta_v: f64,
    pub mutation_term: f64,
    pub beta_y: f64,
}

impl Theorem41Row {
    pub const CSV_HEADER: &'static str = "n,beta_upsilon,beta_v,mutation_term,beta_y";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.n,
            fmt_num(self.beta_upsilon),
            fmt_num(self.beta_v),
            fmt_num(self.mutation_term),
            fmt_num(self.beta_y)
        )
    }
}

/// `H(n) = beta(X, n + 1)` for an iid or Markov input source.
fn source_h(x: &SourceModel, len: usize) -> Result<HFunction> {
    match x {
        SourceModel::Iid(_) => Ok(HFunction::zero()),
        SourceModel::Markov(c) => Ok(HFunction::Table(
            (0..len as u64).map(|n| markov_beta_exact(c, n + 1)).collect(),
        )),
        SourceModel::Custom(_) => Err(Error::InvalidArgument(
            "a custom input source needs an explicit H table".into(),
        )),
    }
}

/// Exact law of `sum_{i=1}^{n-1} 1(Z at xi_i = M)` under `P0`, as
/// probabilities of `0..n-1` plus the enumeration deficit.
fn mut_count_law(model: &Model, n: i64, opts: ExactOptions) -> Result<(Vec<f64>, f64)> {
    let queries: Vec<Query> = (1..n).map(Query::Matched).collect();
    let joint = enumerate_model(model, &queries, Measure::P0, opts)?;
    let mut law = vec![0.0; n as usize];
    for (cell, &p) in joint.table().iter().enumerate() {
        let count: usize = joint.atom_of(cell).iter().sum();
        law[count] += p;
    }
    Ok((law, joint.mass_deficit()))
}

/// Overflow share of the gap law at the given cap, under `P0`.
fn overflow_share(model: &Model, opts: ExactOptions) -> Result<f64> {
    let g = single(model, Query::Gap(1), Measure::P0, opts)?;
    Ok(*g.table().last().expect("gap axis is nonempty"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem41Result {
    pub reports: Vec<CheckReport>,
    pub rows: Vec<Theorem41Row>,
}

impl Theorem41Result {
    pub fn table_csv(&self) -> String {
        let mut s = format!("{}\n", Theorem41Row::CSV_HEADER);
        for r in &self.rows {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Per lag `N`: `beta(Upsilon blocks) <= beta(V blocks) + 2 E0 H(mut_count)`
/// and `beta(Y blocks) <= beta(Upsilon blocks)`, then the same comparison
/// for the sums over all listed lags.
pub fn theorem41_ii_check(model: &Model, o: &Theorem41Options) -> Result<Theorem41Result> {
    if o.n_list.iter().any(|&n| n < 2) || o.w < 1 {
        return Err(Error::InvalidArgument("lags must be >= 2 and the width >= 1".into()));
    }
    let n_max = o.n_list.iter().copied().max().unwrap_or(2);
    let h = match &o.h {
        Some(h) => {
            h.validate()?;
            h.clone()
        }
        None => source_h(&model.x, n_max as usize)?,
    };
    let capped = ExactOptions {
        gap_cap: o.gap_cap,
        ..o.exact
    };
    let uncapped = ExactOptions {
        gap_cap: o.exact.window_bound as u32,
        ..o.exact
    };
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    let mut tol_sum = 0.0;
    match o.mode {
        CheckMode::Exact => {
            let share = overflow_share(model, capped)?;
            if share > MAX_OVERFLOW_SHARE {
                return Err(Error::CapTooSmall { mass: share });
            }
            for &n in &o.n_list {
                let ups = block_split(model, Query::Upsilon, n, o.w, Measure::P0, capped)?;
                let v = block_split(model, Query::V, n, o.w, Measure::P0, uncapped)?;
                let y = block_split(model, Query::Y, n, o.w, Measure::P0, capped)?;
                let (law, deficit) = mut_count_law(model, n, capped)?;
                // unresolved mass counted at the largest value H(0)
                let eh: f64 =
                    law.iter().enumerate().map(|(c, p)| p * h.at(c as u64)).sum::<f64>() + deficit * h.at(0);
                let row = Theorem41Row {
                    n,
                    beta_upsilon: ups.beta(),
                    beta_v: v.beta(),
                    mutation_term: 2.0 * eh,
                    beta_y: y.beta(),
                };
                reports.push(
                    CheckReport::at_most(
                        format!("theorem41ii[N={n},w={}]", o.w),
                        row.beta_upsilon,
                        row.beta_v + row.mutation_term,
                        EXACT_INEQ_TOL,
                    )
                    .with("mode", "exact")
                    .with("gap_cap", o.gap_cap)
                    .with_num("beta_v", row.beta_v)
                    .with_num("mutation_term", row.mutation_term)
                    .with_num("overflow_share", share)
                    .with_num(
                        "deficit",
                        ups.mass_deficit().max(v.mass_deficit()).max(y.mass_deficit()).max(deficit),
                    ),
                );
                reports.push(CheckReport::at_most(
                    format!("theorem41ii_coarsening[N={n},w={}]", o.w),
                    row.beta_y,
                    row.beta_upsilon,
                    COARSENING_TOL,
                ));
                tol_sum += EXACT_INEQ_TOL;
                rows.push(row);
            }
        }
        CheckMode::MonteCarlo {
            samples,
            resamples,
            seed,
        } => {
            if samples < 2 {
                return Err(Error::InvalidArgument("theorem41ii needs >= 2 samples".into()));
            }
            let m = model.alphabet.len() as u64;
            for &n in &o.n_list {
                let mc = mc_lag(model, n, o.w, o.gap_cap, &h, samples, resamples, seed)?;
                let ups_cells = (2 * (o.gap_cap as u64 + 1) * m).pow(o.w as u32);
                let bias = plug_in_bias_bound(ups_cells, ups_cells, samples);
                let se = (mc.ups.1.powi(2) + mc.v.1.powi(2) + 4.0 * mc.eh.1.powi(2)).sqrt();
                let tol = 3.0 * se + bias;
                let row = Theorem41Row {
                    n,
                    beta_upsilon: mc.ups.0,
                    beta_v: mc.v.0,
                    mutation_term: 2.0 * mc.eh.0,
                    beta_y: mc.y.0,
                };
                reports.push(
                    CheckReport::at_most(
                        format!("theorem41ii[N={n},w={}]", o.w),
                        row.beta_upsilon,
                        row.beta_v + row.mutation_term,
                        tol,
                    )
                    .with("mode", "mc")
                    .with("samples", samples)
                    .with_num("se", se)
                    .with_num("bias_bound", bias),
                );
                let se_y = (mc.y.1.powi(2) + mc.ups.1.powi(2)).sqrt();
                reports.push(
                    CheckReport::at_most(
                        format!("theorem41ii_coarsening[N={n},w={}]", o.w),
                        row.beta_y,
                        row.beta_upsilon,
                        3.0 * se_y + COARSENING_TOL,
                    )
                    .with_num("se", se_y),
                );
                tol_sum += tol;
                rows.push(row);
            }
        }
    }
    let sum = |f: fn(&Theorem41Row) -> f64| rows.iter().map(f).sum::<f64>();
    reports.push(
        CheckReport::at_most(
            "theorem41ii_sums",
            sum(|r| r.beta_upsilon),
            sum(|r| r.beta_v) + sum(|r| r.mutation_term),
            tol_sum,
        )
        .with_num("sum_beta_y", sum(|r| r.beta_y))
        .with_num("sum_beta_v", sum(|r| r.beta_v))
        .with_num("sum_mutation_term", sum(|r| r.mutation_term))
        .with("lags", format!("{:?}", o.n_list)),
    );
    Ok(Theorem41Result { reports, rows })
}

struct McLag {
    ups: (f64, f64),
    v: (f64, f64),
    y: (f64, f64),
    eh: (f64, f64),
}

fn bootstrap_beta(pairs: &[(u64, u64)], resamples: usize, seed: Seed) -> (f64, f64) {
    let value = plug_in_beta(pairs);
    let reps: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed.index(r).rng();
            let re: Vec<(u64, u64)> = (0..pairs.len())
                .map(|_| pairs[rng.random_range(0..pairs.len())])
                .collect();
            plug_in_beta(&re)
        })
        .collect();
    let (_, se) = mean_se(&reps);
    (value, se * (reps.len() as f64).sqrt())
}

fn block_pairs<K: Hash + Eq + Clone>(past: &[K], future: &[K]) -> Vec<(u64, u64)> {
    intern(past).into_iter().zip(intern(future)).collect()
}

#[allow(clippy::too_many_arguments)]
fn mc_lag(
    model: &Model,
    n: i64,
    w: i64,
    gap_cap: u32,
    h: &HFunction,
    samples: usize,
    resamples: usize,
    seed: Seed,
) -> Result<McLag> {
    type Block = Vec<(MidSymbol, u64, usize)>;
    let base = seed.derive("theorem41ii").index(n as u64).index(w as u64);
    let draws: Vec<(Block, Block, u64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let r = sample_replication(model, -w + 1, n + w - 1, Measure::P0, base.index(i), SamplingOptions::default())?;
            let block = |lo: i64| -> Result<Block> {
                (lo..lo + w)
                    .map(|k| {
                        let a = r.upsilon.get(k)?;
                        Ok((a.v.letter, a.v.gap, a.y))
                    })
                    .collect()
            };
            let (_, muts) = r.count_t(n)?;
            Ok((block(-w + 1)?, block(n)?, muts))
        })
        .collect::<Result<_>>()?;
    let cap = |b: &Block| -> Block { b.iter().map(|&(l, g, y)| (l, g.min(gap_cap as u64 + 1), y)).collect() };
    let ups_past: Vec<Block> = draws.iter().map(|d| cap(&d.0)).collect();
    let ups_future: Vec<Block> = draws.iter().map(|d| cap(&d.1)).collect();
    let v_of = |b: &Block| -> Vec<(MidSymbol, u64)> { b.iter().map(|&(l, g, _)| (l, g)).collect() };
    let y_of = |b: &Block| -> Vec<usize> { b.iter().map(|&(_, _, y)| y).collect() };
    let v_past: Vec<_> = draws.iter().map(|d| v_of(&d.0)).collect();
    let v_future: Vec<_> = draws.iter().map(|d| v_of(&d.1)).collect();
    let y_past: Vec<_> = draws.iter().map(|d| y_of(&d.0)).collect();
    let y_future: Vec<_> = draws.iter().map(|d| y_of(&d.1)).collect();
    let boot = seed.derive("theorem41ii-boot").index(n as u64).index(w as u64);
    let hs: Vec<f64> = draws.iter().map(|d| h.at(d.2)).collect();
    Ok(McLag {
        ups: bootstrap_beta(&block_pairs(&ups_past, &ups_future), resamples, boot.derive("upsilon")),
        v: bootstrap_beta(&block_pairs(&v_past, &v_future), resamples, boot.derive("v")),
        y: bootstrap_beta(&block_pairs(&y_past, &y_future), resamples, boot.derive("y")),
        eh: mean_se(&hs),
    })
}

/// Monte-Carlo mean of `mut_count` from sampled replications against its
/// exact expectation under `P0`, within `3 SE`.
pub fn mut_count_cross_check(
    model: &Model,
    n: i64,
    samples: usize,
    seed: Seed,
    opts: ExactOptions,
) -> Result<CheckReport> {
    if samples < 2 {
        return Err(Error::InvalidArgument("mut_count check needs >= 2 samples".into()));
    }
    let (law, deficit) = mut_count_law(model, n, opts)?;
    let exact: f64 = law.iter().enumerate().map(|(c, p)| c as f64 * p).sum();
    let base = seed.derive("mutcount").index(n as u64);
    let counts: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let r = sample_replication(model, 1, n, Measure::P0, base.index(i), SamplingOptions::default())?;
            Ok(r.count_t(n)?.1 as f64)
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_se(&counts);
    Ok(
        CheckReport::at_most(format!("mutcount[N={n}]"), (mean - exact).abs(), 0.0, 3.0 * se + deficit * n as f64)
            .with_num("estimate", mean)
            .with_num("exact", exact)
            .with_num("se", se)
            .with("samples", samples),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Alphabet, InsertionDist, MutationKernel};

    fn model(x: SourceModel, mid: SourceModel) -> Model {
        Model::new(
            Alphabet::numeric(2),
            x,
            mid,
            MutationKernel::symmetric(2, 0.1).unwrap(),
            InsertionDist::new(vec![0.3, 0.7]).unwrap(),
        )
        .unwrap()
    }

    fn markov_mid() -> SourceModel {
        SourceModel::markov(vec![
            vec![0.6, 0.2, 0.2],
            vec![0.3, 0.5, 0.2],
            vec![0.4, 0.2, 0.4],
        ])
        .unwrap()
    }

    fn flip_x() -> SourceModel {
        SourceModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap()
    }

    fn opts() -> ExactOptions {
        ExactOptions {
            window_bound: 48,
            gap_cap: 8,
            tolerance: 1e-10,
        }
    }

    #[test]
    fn iid_uniform_mid_remark() {
        let m = model(
            SourceModel::iid(vec![0.5, 0.5]).unwrap(),
            SourceModel::iid(vec![1.0 / 3.0; 3]).unwrap(),
        );
        let r = remark31a_demo(&m, opts()).unwrap();
        assert!(r.passed(), "{}", r.text_block());
        let g = |k: &str| r.diagnostics.iter().find(|d| d.0 == k).unwrap().1.parse::<f64>().unwrap();
        assert!((g("gap1_p") - 4.0 / 9.0).abs() < 1e-10);
        assert!((g("gap1_p0") - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn point_mass_mid_is_inconclusive() {
        let m = model(
            SourceModel::iid(vec![0.5, 0.5]).unwrap(),
            SourceModel::iid(vec![1.0, 0.0, 0.0]).unwrap(),
        );
        assert_eq!(remark31a_demo(&m, opts()).unwrap().status, Status::Inconclusive);
    }

    #[test]
    fn exact_stationarity_under_p0() {
        let m = model(flip_x(), markov_mid());
        let rs = stationarity_report(&m, &[1, 2], Measure::P0, CheckMode::Exact, opts()).unwrap();
        assert!(rs.iter().all(CheckReport::passed));
        let rs = stationarity_report(&m, &[1, 2], Measure::P, CheckMode::Exact, opts()).unwrap();
        assert!(rs.iter().all(|r| r.status == Status::Inconclusive && r.lhs > 1e-3));
    }

    #[test]
    fn trivial_config_both_sides_vanish() {
        let m = model(
            SourceModel::iid(vec![0.5, 0.5]).unwrap(),
            SourceModel::iid(vec![0.5, 0.25, 0.25]).unwrap(),
        );
        let o = Theorem41Options {
            n_list: vec![2, 3],
            w: 1,
            gap_cap: 8,
            exact: opts(),
            h: None,
            mode: CheckMode::Exact,
        };
        let res = theorem41_ii_check(&m, &o).unwrap();
        for row in &res.rows {
            assert!(row.beta_upsilon < 1e-12 && row.beta_v < 1e-12 && row.mutation_term == 0.0);
        }
        assert!(res.reports.iter().all(CheckReport::passed));
    }

    #[test]
    fn markov_demo_inequality_holds() {
        let m = model(flip_x(), markov_mid());
        let o = Theorem41Options {
            n_list: vec![2, 3],
            w: 1,
            gap_cap: 8,
            exact: opts(),
            h: None,
            mode: CheckMode::Exact,
        };
        let res = theorem41_ii_check(&m, &o).unwrap();
        for r in &res.reports {
            assert!(r.passed(), "{}", r.text_block());
        }
    }

    #[test]
    fn lhs_grows_with_gap_cap_and_width() {
        let m = model(flip_x(), markov_mid());
        let b = |w, cap| {
            block_split(&m, Query::Upsilon, 2, w, Measure::P0, ExactOptions { gap_cap: cap, ..opts() })
                .unwrap()
                .beta()
        };
        assert!(b(1, 2) <= b(1, 4) + 1e-12);
        assert!(b(1, 4) <= b(1, 8) + 1e-12);
        assert!(b(1, 4) <= b(2, 4) + 1e-12);
    }

    #[test]
    fn too_small_cap_is_reported() {
        let m = model(flip_x(), markov_mid());
        let o = Theorem41Options {
            n_list: vec![2],
            w: 1,
            gap_cap: 1,
            exact: opts(),
            h: None,
            mode: CheckMode::Exact,
        };
        assert!(matches!(theorem41_ii_check(&m, &o), Err(Error::CapTooSmall { .. })));
    }

    #[test]
    fn mut_count_matches_enumeration() {
        let m = model(flip_x(), markov_mid());
        let r = mut_count_cross_check(&m, 3, 4000, Seed(5), opts()).unwrap();
        assert!(r.passed(), "{}", r.text_block());
    }
}
