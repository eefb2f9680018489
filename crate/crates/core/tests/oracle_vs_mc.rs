//! Exact enumeration against sampled frequencies of the same variables.

use repchar::domain::{Alphabet, InsertionDist, MidSymbol, MutationKernel, Seed};
use repchar::exact::{enumerate_model, ExactOptions, Query};
use repchar::processes::SourceModel;
use repchar::replication::{sample_replication, Measure, Model, SamplingOptions};

fn model() -> Model {
    Model::new(
        Alphabet::new(["a", "b"]).unwrap(),
        SourceModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap(),
        SourceModel::markov(vec![vec![0.6, 0.2, 0.2], vec![0.3, 0.5, 0.2], vec![0.4, 0.2, 0.4]]).unwrap(),
        MutationKernel::symmetric(2, 0.1).unwrap(),
        InsertionDist::new(vec![0.3, 0.7]).unwrap(),
    )
    .unwrap()
}

fn opts() -> ExactOptions {
    ExactOptions {
        window_bound: 48,
        gap_cap: 3,
        tolerance: 1e-10,
    }
}

/// Every cell of the exact law of `(Upsilon_0, Upsilon_1)` lies within
/// 4 SE of its sampled frequency.
fn compare(measure: Measure, seed: u64) {
    let m = model();
    let law = enumerate_model(&m, &[Query::Upsilon(0), Query::Upsilon(1)], measure, opts()).unwrap();
    let n = 40_000u64;
    let mut counts = vec![0f64; law.table().len()];
    let per_axis = law.axes()[0].len();
    for i in 0..n {
        let r = sample_replication(&m, 0, 1, measure, Seed(seed).index(i), SamplingOptions::default()).unwrap();
        let code = |k: i64| {
            let a = r.upsilon.get(k).unwrap();
            let letter = usize::from(a.v.letter != MidSymbol::M);
            let gap = a.v.gap.min(4) as usize - 1;
            (letter * 4 + gap) * 2 + a.y
        };
        counts[code(0) * per_axis + code(1)] += 1.0;
    }
    for (cell, &p) in law.table().iter().enumerate() {
        let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-4);
        let f = counts[cell] / n as f64;
        assert!((f - p).abs() <= 4.0 * se, "cell {cell}: exact {p}, sampled {f}");
    }
}

#[test]
fn upsilon_pair_under_p0() {
    compare(Measure::P0, 1);
}

#[test]
fn upsilon_pair_under_p() {
    compare(Measure::P, 2);
}

#[test]
fn p0_origin_and_gap_for_uniform_mid() {
    let m = Model::new(
        Alphabet::numeric(2),
        SourceModel::iid(vec![0.5, 0.5]).unwrap(),
        SourceModel::iid(vec![1.0 / 3.0; 3]).unwrap(),
        MutationKernel::identity(2),
        InsertionDist::uniform(2),
    )
    .unwrap();
    let n = 100_000u64;
    let mut z0_m = 0f64;
    let mut gaps = [0f64; 4];
    for i in 0..n {
        let r = sample_replication(&m, 1, 1, Measure::P0, Seed(7).index(i), SamplingOptions::default()).unwrap();
        if *r.z.get(0).unwrap() == MidSymbol::M {
            z0_m += 1.0;
        }
        let g = r.v.get(1).unwrap().gap.min(4) as usize;
        gaps[g - 1] += 1.0;
    }
    let se = (0.25 / n as f64).sqrt();
    assert!((z0_m / n as f64 - 0.5).abs() <= 3.0 * se);
    // Geometric(2/3) on {1, 2, ...}
    let law = [2.0 / 3.0, 2.0 / 9.0, 2.0 / 27.0, 1.0 / 27.0];
    for (k, &p) in law.iter().enumerate() {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((gaps[k] / n as f64 - p).abs() <= 3.0 * se, "gap {}", k + 1);
    }
}
