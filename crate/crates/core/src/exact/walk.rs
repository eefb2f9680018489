//! Two-sided dynamic program over Z paths.
//!
//! The right walk runs the MID chain forward from the origin, the left walk
//! runs its time reversal backward. Both carry the Markov state of X at the
//! current input-clock index so Y can be integrated against the mutation
//! rows. The walks meet at the interface `h = (Z_0, X_0, d0)` where `d0` is
//! the distance from the last output-clock position `<= 0` to the origin.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;

use crate::domain::MidSymbol;
use crate::error::{Error, Result};
use crate::processes::{Matrix, SourceModel};
use crate::replication::{Measure, Model};

type Map<K, V> = HashMap<K, V, BuildHasherDefault<DefaultHasher>>;

pub(crate) const UNSET: u16 = u16::MAX;

/// Elementary model variables filled in by a walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Field {
    /// `Z` at output-clock position `xi_k`: 0 = M, 1 = I.
    Letter(i64),
    /// `xi_k - xi_{k-1}`: index `gap - 1`, with `gap_cap` meaning overflow.
    Gap(i64),
    /// `Y_k` as an alphabet index.
    Y(i64),
    /// `Z_j` at a fixed position: M, I, D as 0, 1, 2.
    Z(i64),
}

impl Field {
    pub(crate) fn is_left(self) -> bool {
        match self {
            Field::Letter(k) | Field::Gap(k) | Field::Y(k) => k <= 0,
            Field::Z(j) => j <= 0,
        }
    }
}

pub(crate) struct Walker<'a> {
    model: &'a Model,
    gap_cap: u32,
    window_bound: i64,
    z_fwd: Matrix,
    z_bwd: Matrix,
    /// `None` for an iid input source, whose state need not be tracked.
    x_fwd: Option<Matrix>,
    x_bwd: Option<Matrix>,
    x_pi: Vec<f64>,
    /// Law of a mutated symbol drawn from the stationary X marginal.
    mixed_row: Vec<f64>,
}

/// Interface layout: `(z0, x0, d0)` flattened with `d0` fastest.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Hidden {
    pub mx: usize,
    pub nd: usize,
}

impl Hidden {
    pub(crate) fn size(self) -> usize {
        3 * self.mx * self.nd
    }

    fn index(self, z0: usize, x0: usize, d0: usize) -> usize {
        (z0 * self.mx + x0) * self.nd + d0
    }

    fn parts(self, h: usize) -> (usize, usize, usize) {
        (h / (self.mx * self.nd), (h / self.nd) % self.mx, h % self.nd)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct LeftState {
    z0: u8,
    x0: u16,
    z: u8,
    x: u16,
    started: bool,
    k: i32,
    since: u32,
    d0: u16,
    vals: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct RightState {
    h: u32,
    z: u8,
    x: u16,
    k: i32,
    since: u32,
    vals: Vec<u16>,
}

/// Completed left paths: `(field values, hidden index) -> probability`.
pub(crate) struct LeftTable {
    pub cells: Map<(Vec<u16>, usize), f64>,
    pub deficit: f64,
}

/// Completed right paths per interface value.
pub(crate) struct RightTable {
    pub cells: Map<(Vec<u16>, usize), f64>,
}

fn find(fields: &[Field], f: Field) -> Option<usize> {
    fields.iter().position(|&g| g == f)
}

impl<'a> Walker<'a> {
    pub(crate) fn new(model: &'a Model, gap_cap: u32, window_bound: i64) -> Result<Self> {
        if !model.is_exact() {
            return Err(Error::UnsupportedExtension);
        }
        if gap_cap == 0 || window_bound < 1 {
            return Err(Error::InvalidArgument(format!(
                "gap_cap {gap_cap} and window_bound {window_bound} must be positive"
            )));
        }
        let (x_fwd, x_bwd) = match &model.x {
            SourceModel::Markov(c) => (Some(c.trans().clone()), Some(c.rev().clone())),
            _ => (None, None),
        };
        let x_pi = model.x.marginal().ok_or(Error::UnsupportedExtension)?;
        let m = model.alphabet.len();
        let mut mixed_row = vec![0.0; m];
        for (a, &pa) in x_pi.iter().enumerate() {
            for (b, out) in mixed_row.iter_mut().enumerate() {
                *out += pa * model.mutation.row(a)[b];
            }
        }
        Ok(Self {
            model,
            gap_cap,
            window_bound,
            z_fwd: model.mid.forward_matrix()?,
            z_bwd: model.mid.backward_matrix()?,
            x_fwd,
            x_bwd,
            x_pi,
            mixed_row,
        })
    }

    pub(crate) fn hidden(&self, right_fields: &[Field], measure: Measure) -> Hidden {
        let mx = if self.x_fwd.is_some() { self.x_pi.len() } else { 1 };
        let nd = if measure == Measure::P && right_fields.contains(&Field::Gap(1)) {
            self.gap_cap as usize + 1
        } else {
            1
        };
        Hidden { mx, nd }
    }

    fn gap_index(&self, since: u32) -> u16 {
        (since.min(self.gap_cap + 1) - 1) as u16
    }

    fn cap_since(&self, since: u32) -> u32 {
        since.min(self.gap_cap + 1)
    }

    /// Weights of `Y` at an output-clock position with letter `z` and input state `x`.
    fn y_row(&self, z: MidSymbol, x: u16) -> &[f64] {
        match z {
            MidSymbol::I => self.model.insertion.pmf(),
            _ if self.x_fwd.is_some() => self.model.mutation.row(x as usize),
            _ => &self.mixed_row,
        }
    }

    fn origin_weights(&self, measure: Measure) -> Result<Vec<f64>> {
        let pi = self.model.mid.marginal().ok_or(Error::UnsupportedExtension)?;
        match measure {
            Measure::P => Ok(pi),
            Measure::P0 => {
                let p = pi[0] + pi[1];
                if p <= 0.0 {
                    return Err(Error::NonErgodicMid("P(Z_0 in {M, I}) = 0".into()));
                }
                Ok(vec![pi[0] / p, pi[1] / p, 0.0])
            }
        }
    }

    /// Walks left from the origin until every left field is known and the
    /// last output-clock position `<= 0` has been found.
    pub(crate) fn walk_left(&self, fields: &[Field], measure: Measure, hid: Hidden) -> Result<LeftTable> {
        let origin = self.origin_weights(measure)?;
        let mut states: Map<LeftState, f64> = Map::default();
        for (z0, &pz) in origin.iter().enumerate() {
            if pz == 0.0 {
                continue;
            }
            for x0 in 0..hid.mx {
                let px = if hid.mx == 1 { 1.0 } else { self.x_pi[x0] };
                if px == 0.0 {
                    continue;
                }
                let s = LeftState {
                    z0: z0 as u8,
                    x0: x0 as u16,
                    z: z0 as u8,
                    x: x0 as u16,
                    started: false,
                    k: 1,
                    since: 0,
                    d0: 0,
                    vals: vec![UNSET; fields.len()],
                };
                *states.entry(s).or_insert(0.0) += pz * px;
            }
        }
        let mut done = LeftTable {
            cells: Map::default(),
            deficit: 0.0,
        };
        let mut j = 0i64;
        while !states.is_empty() {
            if j < -self.window_bound {
                done.deficit += states.values().sum::<f64>();
                break;
            }
            let mut next: Map<LeftState, f64> = Map::default();
            for (s, w) in states {
                let sym = MidSymbol::from_index(s.z as usize).expect("MID state");
                let mut branches: Vec<(LeftState, f64)> = vec![(s.clone(), w)];
                if sym.is_mi() {
                    for (b, _) in branches.iter_mut() {
                        if b.started {
                            if let Some(i) = find(fields, Field::Gap(b.k as i64)) {
                                b.vals[i] = self.gap_index(b.since);
                            }
                            b.k -= 1;
                        } else {
                            b.started = true;
                            b.k = 0;
                            b.d0 = (-j).min(self.gap_cap as i64) as u16;
                        }
                        b.since = 0;
                        if let Some(i) = find(fields, Field::Letter(b.k as i64)) {
                            b.vals[i] = sym.index() as u16;
                        }
                    }
                    let k = branches[0].0.k as i64;
                    if let Some(i) = find(fields, Field::Y(k)) {
                        let row = self.y_row(sym, s.x);
                        branches = branches
                            .into_iter()
                            .flat_map(|(b, w)| {
                                row.iter().enumerate().filter(|(_, p)| **p > 0.0).map(move |(y, p)| {
                                    let mut c = b.clone();
                                    c.vals[i] = y as u16;
                                    (c, w * p)
                                })
                            })
                            .collect();
                    }
                }
                if let Some(i) = find(fields, Field::Z(j)) {
                    for (b, _) in branches.iter_mut() {
                        b.vals[i] = sym.index() as u16;
                    }
                }
                for (mut b, w) in branches {
                    if b.started && b.vals.iter().all(|&v| v != UNSET) {
                        let h = hid.index(b.z0 as usize, b.x0 as usize, if hid.nd > 1 { b.d0 as usize } else { 0 });
                        *done.cells.entry((b.vals, h)).or_insert(0.0) += w;
                        continue;
                    }
                    // step to j - 1
                    let pending = |v: &[u16], pred: &dyn Fn(Field) -> bool| {
                        fields.iter().zip(v).any(|(f, &x)| x == UNSET && pred(*f))
                    };
                    let needs_x = pending(&b.vals, &|f| matches!(f, Field::Y(_)));
                    let needs_gap = pending(&b.vals, &|f| matches!(f, Field::Gap(_)));
                    if b.started {
                        b.since = if needs_gap { self.cap_since(b.since + 1) } else { 0 };
                    }
                    let x_moves: Vec<(u16, f64)> = match (&self.x_bwd, needs_x) {
                        (Some(rev), true) if sym.is_md() => rev[b.x as usize]
                            .iter()
                            .enumerate()
                            .filter(|(_, p)| **p > 0.0)
                            .map(|(x, &p)| (x as u16, p))
                            .collect(),
                        (_, true) => vec![(b.x, 1.0)],
                        (_, false) => vec![(0, 1.0)],
                    };
                    for (zn, &pz) in self.z_bwd[b.z as usize].iter().enumerate() {
                        if pz == 0.0 {
                            continue;
                        }
                        for &(xn, px) in &x_moves {
                            let mut c = b.clone();
                            c.z = zn as u8;
                            c.x = xn;
                            *next.entry(c).or_insert(0.0) += w * pz * px;
                        }
                    }
                }
            }
            states = next;
            j -= 1;
        }
        Ok(done)
    }

    /// Walks right from the origin for every interface value `h`, giving
    /// the conditional law of the right fields given `h`.
    pub(crate) fn walk_right(&self, fields: &[Field], hid: Hidden) -> Result<RightTable> {
        let mut states: Map<RightState, f64> = Map::default();
        for h in 0..hid.size() {
            let (z0, x0, d0) = hid.parts(h);
            let s = RightState {
                h: h as u32,
                z: z0 as u8,
                x: x0 as u16,
                k: 0,
                since: d0 as u32,
                vals: vec![UNSET; fields.len()],
            };
            states.insert(s, 1.0);
        }
        let mut done = RightTable {
            cells: Map::default(),
        };
        if fields.is_empty() {
            for h in 0..hid.size() {
                done.cells.insert((Vec::new(), h), 1.0);
            }
            return Ok(done);
        }
        for j in 1..=self.window_bound {
            let mut next: Map<RightState, f64> = Map::default();
            for (s, w) in states {
                let pending = |pred: &dyn Fn(Field) -> bool| {
                    fields.iter().zip(&s.vals).any(|(f, &x)| x == UNSET && pred(*f))
                };
                let needs_x = pending(&|f| matches!(f, Field::Y(_)));
                let needs_gap = pending(&|f| matches!(f, Field::Gap(_)));
                for (zn, &pz) in self.z_fwd[s.z as usize].iter().enumerate() {
                    if pz == 0.0 {
                        continue;
                    }
                    let sym = MidSymbol::from_index(zn).expect("MID state");
                    let x_moves: Vec<(u16, f64)> = match (&self.x_fwd, needs_x) {
                        (Some(tr), true) if sym.is_md() => tr[s.x as usize]
                            .iter()
                            .enumerate()
                            .filter(|(_, p)| **p > 0.0)
                            .map(|(x, &p)| (x as u16, p))
                            .collect(),
                        (_, true) => vec![(s.x, 1.0)],
                        (_, false) => vec![(0, 1.0)],
                    };
                    for (xn, px) in x_moves {
                        let mut c = s.clone();
                        c.z = zn as u8;
                        c.x = xn;
                        c.since = if needs_gap { self.cap_since(c.since + 1) } else { 0 };
                        let mut branches = vec![(c, w * pz * px)];
                        if sym.is_mi() {
                            let b = &mut branches[0].0;
                            b.k += 1;
                            if let Some(i) = find(fields, Field::Gap(b.k as i64)) {
                                b.vals[i] = self.gap_index(b.since);
                            }
                            b.since = 0;
                            if let Some(i) = find(fields, Field::Letter(b.k as i64)) {
                                b.vals[i] = sym.index() as u16;
                            }
                            if let Some(i) = find(fields, Field::Y(b.k as i64)) {
                                let row = self.y_row(sym, xn);
                                let (base, bw) = branches.pop().expect("one branch");
                                branches = row
                                    .iter()
                                    .enumerate()
                                    .filter(|(_, p)| **p > 0.0)
                                    .map(|(y, p)| {
                                        let mut c = base.clone();
                                        c.vals[i] = y as u16;
                                        (c, bw * p)
                                    })
                                    .collect();
                            }
                        }
                        if let Some(i) = find(fields, Field::Z(j)) {
                            for (b, _) in branches.iter_mut() {
                                b.vals[i] = sym.index() as u16;
                            }
                        }
                        for (b, bw) in branches {
                            if b.vals.iter().all(|&v| v != UNSET) {
                                *done.cells.entry((b.vals, b.h as usize)).or_insert(0.0) += bw;
                            } else {
                                *next.entry(b).or_insert(0.0) += bw;
                            }
                        }
                    }
                }
            }
            states = next;
            if states.is_empty() {
                break;
            }
        }
        Ok(done)
    }
}
