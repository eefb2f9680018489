//! The replicating character string: time-changes, placeholder sequence,
//! randomized output and the marked-gap processes, sampled under `P` or `P0`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::domain::{
    Alphabet, InsertionDist, MidSymbol, MutationKernel, Seed, Window,
};
use crate::error::{Error, Result, Side};
use crate::processes::{extend_window_with, sample_window_with, SourceModel};

/// Default cap on the number of indices a sampled Z window may grow to.
pub const DEFAULT_WINDOW_CAP: usize = 1 << 16;

/// Unconditioned measure `P`, or `P0 = P(. | Z_0 in {M, I})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    P,
    P0,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::P => write!(f, "P"),
            Measure::P0 => write!(f, "P0"),
        }
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P" => Ok(Measure::P),
            "P0" => Ok(Measure::P0),
            other => Err(Error::InvalidArgument(format!("unknown measure `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeChangeKind {
    /// Positions with `Z in {M, D}`: the input-side clock.
    Zeta,
    /// Positions with `Z in {M, I}`: the output-side clock.
    Xi,
}

impl TimeChangeKind {
    fn selects(self, s: MidSymbol) -> bool {
        match self {
            TimeChangeKind::Zeta => s.is_md(),
            TimeChangeKind::Xi => s.is_mi(),
        }
    }
}

/// Increasing enumeration `k -> position` of the selected positions of a Z
/// window, anchored so that entry 0 is the last selected position `<= 0`.
///
/// `indices` holds every entry determined by the window `span_lo..=span_hi`;
/// inside the span the enumeration is complete.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    kind: TimeChangeKind,
    indices: Window<i64>,
    span_lo: i64,
    span_hi: i64,
}

impl TimeChange {
    pub fn kind(&self) -> TimeChangeKind {
        self.kind
    }

    pub fn indices(&self) -> &Window<i64> {
        &self.indices
    }

    pub fn span(&self) -> (i64, i64) {
        (self.span_lo, self.span_hi)
    }

    pub fn get(&self, k: i64) -> Result<i64> {
        self.indices.get(k).copied().map_err(|_| {
            Error::CoverageGap(format!(
                "time-change entry {k} not determined (have {}..={})",
                self.indices.lo(),
                self.indices.hi()
            ))
        })
    }

    /// `k` with `position == entry k`, if that position is selected.
    /// Errors when the position is outside what the enumeration determines.
    pub fn index_of(&self, position: i64) -> Result<Option<i64>> {
        let v = self.indices.values();
        let inside_entries = !v.is_empty() && v[0] <= position && position <= v[v.len() - 1];
        let inside_span = self.span_lo <= position && position <= self.span_hi;
        if !inside_entries && !inside_span {
            return Err(Error::CoverageGap(format!(
                "position {position} outside the determined time-change span"
            )));
        }
        Ok(v.binary_search(&position)
            .ok()
            .map(|i| self.indices.lo() + i as i64))
    }
}

fn time_change(
    kind: TimeChangeKind,
    z: &Window<MidSymbol>,
    k_lo: i64,
    k_hi: i64,
) -> Result<TimeChange> {
    if k_lo > k_hi {
        return Err(Error::InvalidArgument(format!("empty k range {k_lo}..={k_hi}")));
    }
    // Nonpositive selected positions, nearest the origin first.
    let left: Vec<i64> = z
        .iter()
        .filter(|(j, s)| *j <= 0 && kind.selects(**s))
        .map(|(j, _)| j)
        .rev()
        .collect();
    let right: Vec<i64> = z
        .iter()
        .filter(|(j, s)| *j > 0 && kind.selects(**s))
        .map(|(j, _)| j)
        .collect();
    // Without the origin in the span nothing is anchored.
    if z.is_empty() || z.lo() > 0 {
        return Err(Error::InsufficientWindow {
            side: Side::Left,
            needed_k: 0,
        });
    }
    if z.hi() < 0 {
        return Err(Error::InsufficientWindow {
            side: Side::Right,
            needed_k: 0,
        });
    }
    let first_missing_left = -(left.len() as i64);
    if k_lo <= first_missing_left {
        return Err(Error::InsufficientWindow {
            side: Side::Left,
            needed_k: first_missing_left,
        });
    }
    let first_missing_right = right.len() as i64 + 1;
    if k_hi >= first_missing_right {
        return Err(Error::InsufficientWindow {
            side: Side::Right,
            needed_k: first_missing_right,
        });
    }
    let lo = first_missing_left + 1;
    let mut values: Vec<i64> = left.into_iter().rev().collect();
    values.extend(right);
    Ok(TimeChange {
        kind,
        indices: Window::new(lo, values),
        span_lo: z.lo(),
        span_hi: z.hi(),
    })
}

/// The `{M, D}` clock of `z`, required to determine entries `k_lo..=k_hi`.
pub fn zeta_indices(z: &Window<MidSymbol>, k_lo: i64, k_hi: i64) -> Result<TimeChange> {
    time_change(TimeChangeKind::Zeta, z, k_lo, k_hi)
}

/// The `{M, I}` clock of `z`, required to determine entries `k_lo..=k_hi`.
pub fn xi_indices(z: &Window<MidSymbol>, k_lo: i64, k_hi: i64) -> Result<TimeChange> {
    time_change(TimeChangeKind::Xi, z, k_lo, k_hi)
}

/// Placeholder sequence on `j_lo..=j_hi`: `x[k]` at position `zeta_k`, `None`
/// (the placeholder) elsewhere.
pub fn build_xbar<T: Clone>(
    x: &Window<T>,
    zeta: &TimeChange,
    j_lo: i64,
    j_hi: i64,
) -> Result<Window<Option<T>>> {
    let mut values = Vec::with_capacity((j_hi - j_lo + 1).max(0) as usize);
    for j in j_lo..=j_hi {
        let v = match zeta.index_of(j)? {
            Some(k) => Some(
                x.get(k)
                    .map_err(|_| Error::CoverageGap(format!("x[{k}] needed at position {j}")))?
                    .clone(),
            ),
            None => None,
        };
        values.push(v);
    }
    Ok(Window::new(j_lo, values))
}

/// Pre-output `ybar[l] = xbar[xi_l]` on `l_lo..=l_hi`.
pub fn build_ybar<T: Clone>(
    xbar: &Window<Option<T>>,
    xi: &TimeChange,
    l_lo: i64,
    l_hi: i64,
) -> Result<Window<Option<T>>> {
    let mut values = Vec::with_capacity((l_hi - l_lo + 1).max(0) as usize);
    for l in l_lo..=l_hi {
        let j = xi.get(l)?;
        let v = xbar
            .get(j)
            .map_err(|_| Error::CoverageGap(format!("xbar[{j}] needed for ybar[{l}]")))?;
        values.push(v.clone());
    }
    Ok(Window::new(l_lo, values))
}

/// Output with arbitrary mutation `g(a, u)` and insertion `h(u)` maps.
pub fn build_y_with<T, S>(
    ybar: &Window<Option<T>>,
    u: &Window<f64>,
    g: impl Fn(&T, f64) -> S,
    h: impl Fn(f64) -> S,
) -> Result<Window<S>> {
    let mut values = Vec::with_capacity(ybar.len());
    for (l, slot) in ybar.iter() {
        let ul = *u
            .get(l)
            .map_err(|_| Error::CoverageGap(format!("u[{l}] needed for y[{l}]")))?;
        values.push(match slot {
            Some(a) => g(a, ul),
            None => h(ul),
        });
    }
    Ok(Window::new(ybar.lo(), values))
}

/// Output over a finite alphabet: mutation rows and insertion pmf applied by inverse CDF.
pub fn build_y(
    ybar: &Window<Option<usize>>,
    u: &Window<f64>,
    mutation: &MutationKernel,
    insertion: &InsertionDist,
) -> Result<Window<usize>> {
    build_y_with(ybar, u, |&a, ul| mutation.apply(a, ul), |ul| insertion.apply(ul))
}

/// `V_k = (Z at xi_k, xi_k - xi_{k-1})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VAtom {
    pub letter: MidSymbol,
    pub gap: u64,
}

/// `Upsilon_k = (V_k, Y_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UpsilonAtom {
    pub v: VAtom,
    pub y: usize,
}

pub fn build_v_upsilon(
    z: &Window<MidSymbol>,
    xi: &TimeChange,
    y: &Window<usize>,
    k_lo: i64,
    k_hi: i64,
) -> Result<(Window<VAtom>, Window<UpsilonAtom>)> {
    let mut v = Vec::new();
    let mut ups = Vec::new();
    for k in k_lo..=k_hi {
        let (a, b) = (xi.get(k - 1)?, xi.get(k)?);
        let letter = *z
            .get(b)
            .map_err(|_| Error::CoverageGap(format!("z[{b}] needed for v[{k}]")))?;
        let atom = VAtom {
            letter,
            gap: (b - a) as u64,
        };
        let yk = *y
            .get(k)
            .map_err(|_| Error::CoverageGap(format!("y[{k}] needed for upsilon[{k}]")))?;
        v.push(atom);
        ups.push(UpsilonAtom { v: atom, y: yk });
    }
    Ok((Window::new(k_lo, v), Window::new(k_lo, ups)))
}

/// Finite-alphabet model: input source X, MID source Z and the channel.
#[derive(Debug, Clone)]
pub struct Model {
    pub alphabet: Alphabet,
    pub x: SourceModel,
    pub mid: SourceModel,
    pub mutation: MutationKernel,
    pub insertion: InsertionDist,
}

impl Model {
    pub fn new(
        alphabet: Alphabet,
        x: SourceModel,
        mid: SourceModel,
        mutation: MutationKernel,
        insertion: InsertionDist,
    ) -> Result<Self> {
        let m = alphabet.len();
        if x.states() != m || mutation.size() != m || insertion.size() != m {
            return Err(Error::Shape(format!(
                "alphabet has {m} symbols; x source {}, mutation {}, insertion {}",
                x.states(),
                mutation.size(),
                insertion.size()
            )));
        }
        if mid.states() != 3 {
            return Err(Error::Shape(format!(
                "MID source must have 3 states, has {}",
                mid.states()
            )));
        }
        Ok(Self {
            alphabet,
            x,
            mid,
            mutation,
            insertion,
        })
    }

    pub fn is_exact(&self) -> bool {
        self.x.is_exact() && self.mid.is_exact()
    }

    /// `P(Z_0 in {M, I})`, when the MID law is known.
    pub fn p_mi(&self) -> Option<f64> {
        self.mid.marginal().map(|p| p[0] + p[1])
    }
}

/// Source of Z values as symbols.
pub(crate) fn mid_window(w: &Window<usize>) -> Window<MidSymbol> {
    w.map(|&s| MidSymbol::from_index(s).expect("MID source has 3 states"))
}

/// One realization of every process of the model on a window.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSample {
    pub measure: Measure,
    pub x: Window<usize>,
    pub z: Window<MidSymbol>,
    pub zeta: TimeChange,
    pub xi: TimeChange,
    pub xbar: Window<Option<usize>>,
    pub ybar: Window<Option<usize>>,
    pub u: Window<f64>,
    pub y: Window<usize>,
    pub v: Window<VAtom>,
    pub upsilon: Window<UpsilonAtom>,
}

#[derive(Debug, Clone, Copy)]
pub struct SamplingOptions {
    pub window_cap: usize,
    /// Attempts allowed for the `P0` rejection step.
    pub max_rejections: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            window_cap: DEFAULT_WINDOW_CAP,
            max_rejections: 1 << 20,
        }
    }
}

fn check_clocks(model: &Model) -> Result<()> {
    if let Some(p) = model.mid.marginal() {
        if p[0] + p[1] <= 0.0 {
            return Err(Error::NonErgodicMid("no mass on {M, I}; the output clock is undefined".into()));
        }
        if p[0] + p[2] <= 0.0 {
            return Err(Error::NonErgodicMid("no mass on {M, D}; the input clock is undefined".into()));
        }
    }
    Ok(())
}

/// Grows `z` on the deficient side (doubling) until `f` succeeds.
fn grow_until<T>(
    model: &Model,
    z: &mut Window<usize>,
    rng: &mut rand_chacha::ChaCha8Rng,
    cap: usize,
    mut f: impl FnMut(&Window<MidSymbol>) -> Result<T>,
) -> Result<T> {
    loop {
        match f(&mid_window(z)) {
            Err(Error::InsufficientWindow { side, .. }) => {
                let step = (z.len() as i64).max(1);
                let (lo, hi) = match side {
                    Side::Left => (z.lo() - step, z.hi()),
                    Side::Right => (z.lo(), z.hi() + step),
                };
                if (hi - lo + 1) as usize > cap {
                    return Err(Error::WindowCapExceeded { cap });
                }
                extend_window_with(&model.mid, z, lo, hi, rng)?;
            }
            other => return other,
        }
    }
}

/// Draws the whole model so that `V`, `Upsilon` and `Y` are available on
/// `k_lo..=k_hi`.
///
/// Z, X and U use separate substreams of `seed`. Under `P0` whole Z windows
/// are redrawn until `Z_0 in {M, I}`; the X and U streams do not depend on
/// the number of rejections.
pub fn sample_replication(
    model: &Model,
    k_lo: i64,
    k_hi: i64,
    measure: Measure,
    seed: Seed,
    opts: SamplingOptions,
) -> Result<ReplicationSample> {
    if k_lo > k_hi {
        return Err(Error::InvalidArgument(format!("empty k range {k_lo}..={k_hi}")));
    }
    check_clocks(model)?;
    let margin = match &model.mid {
        SourceModel::Custom(c) => c.margin,
        _ => 0,
    };
    let z_lo = k_lo.min(0) - 1 - margin;
    let z_hi = k_hi.max(1) + margin;
    let z_seed = seed.derive("Z");
    let (mut z, mut rng) = match measure {
        Measure::P => {
            let mut rng = z_seed.rng();
            (sample_window_with(&model.mid, z_lo, z_hi, &mut rng)?, rng)
        }
        Measure::P0 => {
            let mut attempt = 0u64;
            loop {
                if attempt >= opts.max_rejections {
                    return Err(Error::NonErgodicMid(format!(
                        "no draw with Z_0 in {{M, I}} after {attempt} attempts"
                    )));
                }
                let mut rng = z_seed.derive("retry").index(attempt).rng();
                let w = sample_window_with(&model.mid, z_lo, z_hi, &mut rng)?;
                if MidSymbol::from_index(*w.get(0)?).is_some_and(MidSymbol::is_mi) {
                    break (w, rng);
                }
                attempt += 1;
            }
        }
    };
    let cap = opts.window_cap;
    let xi = grow_until(model, &mut z, &mut rng, cap, |zw| xi_indices(zw, k_lo - 1, k_hi))?;
    let zeta = grow_until(model, &mut z, &mut rng, cap, |zw| zeta_indices(zw, 0, 0))?;
    let zw = mid_window(&z);
    let (j_lo, j_hi) = (xi.get(k_lo - 1)?, xi.get(k_hi)?);

    // X indices used by the placeholder sequence on j_lo..=j_hi, plus the target range.
    let used: Vec<i64> = (j_lo..=j_hi)
        .map(|j| zeta.index_of(j))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let x_lo = used.first().map_or(k_lo, |&k| k.min(k_lo));
    let x_hi = used.last().map_or(k_hi, |&k| k.max(k_hi));
    let x_margin = match &model.x {
        SourceModel::Custom(c) => c.margin,
        _ => 0,
    };
    let x = sample_window_with(
        &model.x,
        x_lo - x_margin,
        x_hi + x_margin,
        &mut seed.derive("X").rng(),
    )?;

    let xbar = build_xbar(&x, &zeta, j_lo, j_hi)?;
    let ybar = build_ybar(&xbar, &xi, k_lo, k_hi)?;
    let u_seed = seed.derive("U");
    let u = Window::from_fn(k_lo, k_hi, |l| u_seed.uniform_at(l));
    let y = build_y(&ybar, &u, &model.mutation, &model.insertion)?;
    let (v, upsilon) = build_v_upsilon(&zw, &xi, &y, k_lo, k_hi)?;
    Ok(ReplicationSample {
        measure,
        x,
        z: zw,
        zeta,
        xi,
        xbar,
        ybar,
        u,
        y,
        v,
        upsilon,
    })
}

/// `T = #{1 <= k < xi_N : Z_k in {M, D}}` and `sum_{i<N} 1(Z at xi_i = M)`.
pub fn count_t(
    z: &Window<MidSymbol>,
    xi: &TimeChange,
    n: i64,
) -> Result<(u64, u64)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("N must be at least 2, got {n}")));
    }
    let end = xi.get(n)?;
    let mut t = 0;
    for k in 1..end {
        let s = z
            .get(k)
            .map_err(|_| Error::CoverageGap(format!("z[{k}] needed for T")))?;
        if s.is_md() {
            t += 1;
        }
    }
    let mut muts = 0;
    for i in 1..n {
        let j = xi.get(i)?;
        if *z.get(j).map_err(|_| Error::CoverageGap(format!("z[{j}] needed for T")))? == MidSymbol::M {
            muts += 1;
        }
    }
    Ok((t, muts))
}

impl ReplicationSample {
    /// `(T, mut_count)` for this sample.
    pub fn count_t(&self, n: i64) -> Result<(u64, u64)> {
        count_t(&self.z, &self.xi, n)
    }

    /// Line-oriented text form: one field per line, `name lo hi values...`.
    /// The placeholder prints as `_`; V atoms as `letter:gap`; Upsilon
    /// atoms as `letter:gap:symbol`.
    pub fn to_text(&self, alphabet: &Alphabet) -> String {
        let sym = |i: usize| alphabet.label(i).unwrap_or("?").to_string();
        let slot = |s: &Option<usize>| s.map_or_else(|| "_".to_string(), sym);
        let mut out = String::new();
        let _ = writeln!(out, "measure {}", self.measure);
        line(&mut out, "x", &self.x, |&a| sym(a));
        line(&mut out, "z", &self.z, |s| s.to_string());
        line(&mut out, "zeta", self.zeta.indices(), |j| j.to_string());
        line(&mut out, "xi", self.xi.indices(), |j| j.to_string());
        line(&mut out, "xbar", &self.xbar, slot);
        line(&mut out, "ybar", &self.ybar, slot);
        line(&mut out, "u", &self.u, |u| format!("{u:.17e}"));
        line(&mut out, "y", &self.y, |&a| sym(a));
        line(&mut out, "v", &self.v, |v| format!("{}:{}", v.letter, v.gap));
        line(&mut out, "upsilon", &self.upsilon, |a| {
            format!("{}:{}:{}", a.v.letter, a.v.gap, sym(a.y))
        });
        out
    }
}

fn line<T>(out: &mut String, name: &str, w: &Window<T>, f: impl Fn(&T) -> String) {
    let _ = write!(out, "{name} {} {}", w.lo(), w.hi());
    for v in w.values() {
        out.push(' ');
        out.push_str(&f(v));
    }
    out.push('\n');
}
