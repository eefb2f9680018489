//! Exact laws of model variables on bounded windows, with U integrated out.

pub mod pmf;
mod walk;

use std::fmt;

use crate::domain::MidSymbol;
use crate::error::{Error, Result};
use crate::replication::{Measure, Model};

pub use pmf::{fmt_num, Axis, JointPmf, SplitPmf};
use walk::{Field, Walker, UNSET};

pub const DEFAULT_GAP_CAP: u32 = 12;
pub const DEFAULT_WINDOW_BOUND: i64 = 24;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Z is enumerated on `[-window_bound, window_bound]`.
    pub window_bound: i64,
    /// Gaps above this value share one overflow atom.
    pub gap_cap: u32,
    /// Largest acceptable mass outside the window.
    pub tolerance: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            window_bound: DEFAULT_WINDOW_BOUND,
            gap_cap: DEFAULT_GAP_CAP,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// A model variable whose exact law can be enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Query {
    /// `Upsilon_k = (V_k, Y_k)`.
    Upsilon(i64),
    /// `V_k = (Z at xi_k, xi_k - xi_{k-1})`.
    V(i64),
    /// `xi_k - xi_{k-1}`.
    Gap(i64),
    /// `Z at xi_k`, in `{M, I}`.
    Letter(i64),
    /// `Y_k`.
    Y(i64),
    /// Indicator that `Z at xi_k = M`.
    Matched(i64),
    /// `Z_j` at a fixed position `j`.
    Z(i64),
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Upsilon(k) => write!(f, "Upsilon[{k}]"),
            Query::V(k) => write!(f, "V[{k}]"),
            Query::Gap(k) => write!(f, "Gap[{k}]"),
            Query::Letter(k) => write!(f, "Letter[{k}]"),
            Query::Y(k) => write!(f, "Y[{k}]"),
            Query::Matched(k) => write!(f, "Matched[{k}]"),
            Query::Z(j) => write!(f, "Z[{j}]"),
        }
    }
}

impl Query {
    /// Whether the variable is determined by the walk left of the origin.
    pub fn is_left(self) -> bool {
        match self {
            Query::Upsilon(k)
            | Query::V(k)
            | Query::Gap(k)
            | Query::Letter(k)
            | Query::Y(k)
            | Query::Matched(k) => k <= 0,
            Query::Z(j) => j <= 0,
        }
    }

    fn fields(self) -> Vec<Field> {
        match self {
            Query::Upsilon(k) => vec![Field::Letter(k), Field::Gap(k), Field::Y(k)],
            Query::V(k) => vec![Field::Letter(k), Field::Gap(k)],
            Query::Gap(k) => vec![Field::Gap(k)],
            Query::Letter(k) | Query::Matched(k) => vec![Field::Letter(k)],
            Query::Y(k) => vec![Field::Y(k)],
            Query::Z(j) => vec![Field::Z(j)],
        }
    }
}

fn gap_labels(cap: u32) -> Vec<String> {
    (1..=cap)
        .map(|g| g.to_string())
        .chain(std::iter::once("OVF".to_string()))
        .collect()
}

fn letters() -> [&'static str; 2] {
    ["M", "I"]
}

/// Coordinate space of a query, and the map from its field values to an atom.
fn axis_of(q: Query, model: &Model, gap_cap: u32) -> Axis {
    let alpha = model.alphabet.labels();
    let gaps = gap_labels(gap_cap);
    let labels: Vec<String> = match q {
        Query::Upsilon(_) => letters()
            .iter()
            .flat_map(|l| {
                gaps.iter()
                    .flat_map(move |g| alpha.iter().map(move |a| format!("{l}:{g}:{a}")))
            })
            .collect(),
        Query::V(_) => letters()
            .iter()
            .flat_map(|l| gaps.iter().map(move |g| format!("{l}:{g}")))
            .collect(),
        Query::Gap(_) => gaps,
        Query::Letter(_) => letters().iter().map(|s| s.to_string()).collect(),
        Query::Y(_) => alpha.to_vec(),
        Query::Matched(_) => vec!["0".into(), "1".into()],
        Query::Z(_) => MidSymbol::ALL.iter().map(|s| s.to_string()).collect(),
    };
    Axis::new(q.to_string(), labels)
}

fn atom_of(q: Query, vals: &[u16], m: usize, gap_cap: u32) -> usize {
    let g = gap_cap as usize + 1;
    match q {
        Query::Upsilon(_) => (vals[0] as usize * g + vals[1] as usize) * m + vals[2] as usize,
        Query::V(_) => vals[0] as usize * g + vals[1] as usize,
        // Letter 0 is M
        Query::Matched(_) => usize::from(vals[0] == 0),
        _ => vals[0] as usize,
    }
}

/// Distinct fields needed by a list of queries, plus per-query field slots.
fn layout(queries: &[Query]) -> (Vec<Field>, Vec<Vec<usize>>) {
    let mut fields: Vec<Field> = Vec::new();
    let slots = queries
        .iter()
        .map(|q| {
            q.fields()
                .into_iter()
                .map(|f| match fields.iter().position(|&g| g == f) {
                    Some(i) => i,
                    None => {
                        fields.push(f);
                        fields.len() - 1
                    }
                })
                .collect()
        })
        .collect();
    (fields, slots)
}

fn cell_index(
    queries: &[Query],
    slots: &[Vec<usize>],
    axes: &[Axis],
    vals: &[u16],
    m: usize,
    gap_cap: u32,
) -> usize {
    let mut idx = 0;
    for ((q, s), a) in queries.iter().zip(slots).zip(axes) {
        let fv: Vec<u16> = s.iter().map(|&i| vals[i]).collect();
        debug_assert!(fv.iter().all(|&v| v != UNSET));
        idx = idx * a.len() + atom_of(*q, &fv, m, gap_cap);
    }
    idx
}

/// Exact law of (left queries, right queries) factored through the origin
/// interface. Left queries must live at or left of the origin (`k <= 0`,
/// `j <= 0`), right queries strictly right of it.
pub fn enumerate_split(
    model: &Model,
    left: &[Query],
    right: &[Query],
    measure: Measure,
    opts: ExactOptions,
) -> Result<SplitPmf> {
    if let Some(q) = left.iter().find(|q| !q.is_left()) {
        return Err(Error::InvalidArgument(format!("{q} is not a left-side variable")));
    }
    if let Some(q) = right.iter().find(|q| q.is_left()) {
        return Err(Error::InvalidArgument(format!("{q} is not a right-side variable")));
    }
    let walker = Walker::new(model, opts.gap_cap, opts.window_bound)?;
    let m = model.alphabet.len();
    let (lf, lslots) = layout(left);
    let (rf, rslots) = layout(right);
    debug_assert!(lf.iter().all(|f| f.is_left()) && rf.iter().all(|f| !f.is_left()));
    let hid = walker.hidden(&rf, measure);
    let hs = hid.size();
    let left_axes: Vec<Axis> = left.iter().map(|&q| axis_of(q, model, opts.gap_cap)).collect();
    let right_axes: Vec<Axis> = right.iter().map(|&q| axis_of(q, model, opts.gap_cap)).collect();
    let lc = pmf::cell_count(&left_axes)?;
    let rc = pmf::cell_count(&right_axes)?;
    if lc.saturating_mul(hs) > pmf::MAX_CELLS || rc.saturating_mul(hs) > pmf::MAX_CELLS {
        return Err(Error::TableTooLarge(lc.max(rc).saturating_mul(hs)));
    }

    let lt = walker.walk_left(&lf, measure, hid)?;
    let mut l = vec![0.0; lc * hs];
    let mut cells: Vec<_> = lt.cells.into_iter().collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0));
    for ((vals, h), p) in cells {
        let a = cell_index(left, &lslots, &left_axes, &vals, m, opts.gap_cap);
        l[a * hs + h] += p;
    }

    let rt = walker.walk_right(&rf, hid)?;
    let mut r = vec![0.0; rc * hs];
    let mut cells: Vec<_> = rt.cells.into_iter().collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0));
    for ((vals, h), p) in cells {
        let b = cell_index(right, &rslots, &right_axes, &vals, m, opts.gap_cap);
        r[b * hs + h] += p;
    }

    // Mass lost on the right, weighted by the interface law.
    let mut right_mass = vec![0.0; hs];
    for b in 0..rc {
        for h in 0..hs {
            right_mass[h] += r[b * hs + h];
        }
    }
    let mut deficit = lt.deficit;
    for h in 0..hs {
        let wh: f64 = (0..lc).map(|a| l[a * hs + h]).sum();
        deficit += wh * (1.0 - right_mass[h]).max(0.0);
    }
    let out = SplitPmf::new(left_axes, right_axes, hs, l, r, deficit)?;
    if deficit > opts.tolerance {
        return Err(Error::DeficitTooLarge {
            mass: deficit,
            tolerance: opts.tolerance,
        });
    }
    Ok(out)
}

/// Exact joint law of the queried variables, axes in query order.
pub fn enumerate_model(
    model: &Model,
    queries: &[Query],
    measure: Measure,
    opts: ExactOptions,
) -> Result<JointPmf> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no queries".into()));
    }
    for (i, q) in queries.iter().enumerate() {
        if queries[..i].contains(q) {
            return Err(Error::InvalidArgument(format!("duplicate query {q}")));
        }
    }
    let (left, right): (Vec<Query>, Vec<Query>) = queries.iter().partition(|q| q.is_left());
    let joint = enumerate_split(model, &left, &right, measure, opts)?.to_joint()?;
    let order: Vec<Query> = left.iter().chain(&right).copied().collect();
    if order == queries {
        return Ok(joint);
    }
    let keep: Vec<usize> = queries
        .iter()
        .map(|q| order.iter().position(|o| o == q).expect("query present"))
        .collect();
    joint.marginal(&keep)
}

/// Exact law of `(Upsilon_k)` at the listed positions.
pub fn upsilon_block_dist(
    model: &Model,
    positions: &[i64],
    measure: Measure,
    opts: ExactOptions,
) -> Result<JointPmf> {
    let queries: Vec<Query> = positions.iter().map(|&k| Query::Upsilon(k)).collect();
    enumerate_model(model, &queries, measure, opts)
}

/// Past block `(-w, 0]` against future block `[n, n + w)` of a process built
/// from `make(k)`, as a factored pmf ready for beta.
pub fn block_split(
    model: &Model,
    make: impl Fn(i64) -> Query,
    n: i64,
    w: i64,
    measure: Measure,
    opts: ExactOptions,
) -> Result<SplitPmf> {
    if n < 1 || w < 1 {
        return Err(Error::InvalidArgument(format!("lag {n} and width {w} must be positive")));
    }
    let left: Vec<Query> = (-w + 1..=0).map(&make).collect();
    let right: Vec<Query> = (n..n + w).map(&make).collect();
    enumerate_split(model, &left, &right, measure, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Alphabet, InsertionDist, MutationKernel};
    use crate::processes::SourceModel;

    fn model(mid: SourceModel, x: SourceModel) -> Model {
        Model::new(
            Alphabet::numeric(2),
            x,
            mid,
            MutationKernel::symmetric(2, 0.1).unwrap(),
            InsertionDist::new(vec![0.3, 0.7]).unwrap(),
        )
        .unwrap()
    }

    fn uniform_mid() -> Model {
        model(
            SourceModel::iid(vec![1.0 / 3.0; 3]).unwrap(),
            SourceModel::iid(vec![0.4, 0.6]).unwrap(),
        )
    }

    fn markov_mid() -> SourceModel {
        SourceModel::markov(vec![
            vec![0.6, 0.25, 0.15],
            vec![0.3, 0.5, 0.2],
            vec![0.35, 0.15, 0.5],
        ])
        .unwrap()
    }

    #[test]
    fn z0_under_p0() {
        let j = enumerate_model(&uniform_mid(), &[Query::Z(0)], Measure::P0, ExactOptions::default()).unwrap();
        assert!((j.prob_of_labels(&["M"]).unwrap() - 0.5).abs() < 1e-15);
        assert!((j.prob_of_labels(&["I"]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(j.prob_of_labels(&["D"]).unwrap(), 0.0);
    }

    #[test]
    fn origin_gap_laws() {
        let opts = ExactOptions {
            gap_cap: 10,
            window_bound: 48,
            tolerance: 1e-12,
        };
        let m = uniform_mid();
        let j = enumerate_model(&m, &[Query::Gap(1)], Measure::P0, opts).unwrap();
        for d in 1..=10 {
            let want = (1.0f64 / 3.0).powi(d - 1) * (2.0 / 3.0);
            assert!((j.prob(&[d as usize - 1]) - want).abs() < 1e-14);
        }
        assert!((j.prob(&[10]) - (1.0f64 / 3.0).powi(10)).abs() < 1e-14);
        let j = enumerate_model(&m, &[Query::Gap(1)], Measure::P, opts).unwrap();
        for d in 1..=10 {
            let want = d as f64 * (1.0f64 / 3.0).powi(d - 1) * (2.0f64 / 3.0).powi(2);
            assert!((j.prob(&[d as usize - 1]) - want).abs() < 1e-12, "d = {d}");
        }
        assert!((j.prob(&[0]) - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_m_gives_x_block_law() {
        let x = SourceModel::markov(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let m = Model::new(
            Alphabet::numeric(2),
            x.clone(),
            SourceModel::iid(vec![1.0, 0.0, 0.0]).unwrap(),
            MutationKernel::identity(2),
            InsertionDist::uniform(2),
        )
        .unwrap();
        let j = upsilon_block_dist(&m, &[1, 2], Measure::P0, ExactOptions::default()).unwrap();
        let xb = crate::processes::block_pmf(&x, &[1, 2]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let p = j.prob_of_labels(&[&format!("M:1:{a}"), &format!("M:1:{b}")]).unwrap();
                assert!((p - xb.prob(&[a, b])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn upsilon_shift_invariance_under_p0() {
        let opts = ExactOptions {
            window_bound: 40,
            gap_cap: 6,
            tolerance: 1e-9,
        };
        let x = SourceModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        for mid in [SourceModel::iid(vec![0.5, 0.3, 0.2]).unwrap(), markov_mid()] {
            let m = model(mid, x.clone());
            let a = upsilon_block_dist(&m, &[1, 2], Measure::P0, opts).unwrap();
            let b = upsilon_block_dist(&m, &[2, 3], Measure::P0, opts).unwrap();
            let c = upsilon_block_dist(&m, &[-1, 0], Measure::P0, opts).unwrap();
            for ((p, q), r) in a.table().iter().zip(b.table()).zip(c.table()) {
                assert!((p - q).abs() < 1e-9 && (p - r).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn upsilon_differs_under_p_for_markov_mid() {
        let opts = ExactOptions {
            window_bound: 40,
            gap_cap: 6,
            tolerance: 1e-9,
        };
        let m = model(markov_mid(), SourceModel::iid(vec![0.5, 0.5]).unwrap());
        let a = upsilon_block_dist(&m, &[1, 2], Measure::P, opts).unwrap();
        let b = upsilon_block_dist(&m, &[2, 3], Measure::P, opts).unwrap();
        let tv: f64 = a.table().iter().zip(b.table()).map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0;
        assert!(tv > 1e-3, "tv = {tv}");
    }

    #[test]
    fn query_order_is_respected() {
        let m = model(markov_mid(), SourceModel::iid(vec![0.5, 0.5]).unwrap());
        let opts = ExactOptions {
            window_bound: 48,
            ..ExactOptions::default()
        };
        let a = enumerate_model(&m, &[Query::Letter(2), Query::Letter(0)], Measure::P0, opts).unwrap();
        let b = enumerate_model(&m, &[Query::Letter(0), Query::Letter(2)], Measure::P0, opts).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                assert!((a.prob(&[i, k]) - b.prob(&[k, i])).abs() < 1e-15);
            }
        }
        assert_eq!(a.axes()[0].name, "Letter[2]");
    }

    #[test]
    fn small_window_reports_deficit() {
        let m = uniform_mid();
        let opts = ExactOptions {
            window_bound: 3,
            gap_cap: 4,
            tolerance: 1e-8,
        };
        match enumerate_model(&m, &[Query::Gap(2)], Measure::P0, opts) {
            Err(Error::DeficitTooLarge { mass, .. }) => assert!(mass > 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_sources_are_refused() {
        let custom = SourceModel::Custom(crate::processes::CustomSource::new(3, 0, |lo, hi, _| {
            vec![0; (hi - lo + 1) as usize]
        }));
        let m = model(custom, SourceModel::iid(vec![0.5, 0.5]).unwrap());
        assert_eq!(
            enumerate_model(&m, &[Query::Z(0)], Measure::P, ExactOptions::default()),
            Err(Error::UnsupportedExtension)
        );
    }
}
