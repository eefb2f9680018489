//! Shared domain types: alphabets, MID symbols, two-sided windows,
//! stochastic kernels and the seed discipline used by every sampler.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Absolute tolerance for row sums of stochastic vectors.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Neumaier-compensated sum.
pub fn ksum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Ordered set of distinct symbol labels; symbols are indices `0..m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidArgument("alphabet must be nonempty".into()));
        }
        for (i, a) in labels.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::InvalidArgument("empty alphabet label".into()));
            }
            if labels[..i].contains(a) {
                return Err(Error::InvalidArgument(format!("duplicate alphabet label `{a}`")));
            }
        }
        Ok(Self { labels })
    }

    /// Labels `0, 1, ..., m-1`.
    pub fn numeric(m: usize) -> Self {
        Self {
            labels: (0..m.max(1)).map(|i| i.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Value of the MID sequence at one time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MidSymbol {
    M,
    I,
    D,
}

impl MidSymbol {
    pub const ALL: [MidSymbol; 3] = [MidSymbol::M, MidSymbol::I, MidSymbol::D];

    /// State index used by MID sources: M = 0, I = 1, D = 2.
    pub fn index(self) -> usize {
        match self {
            MidSymbol::M => 0,
            MidSymbol::I => 1,
            MidSymbol::D => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Selected by the input-side clock.
    pub fn is_md(self) -> bool {
        matches!(self, MidSymbol::M | MidSymbol::D)
    }

    /// Selected by the output-side clock.
    pub fn is_mi(self) -> bool {
        matches!(self, MidSymbol::M | MidSymbol::I)
    }

    pub fn as_char(self) -> char {
        match self {
            MidSymbol::M => 'M',
            MidSymbol::I => 'I',
            MidSymbol::D => 'D',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'M' => Some(MidSymbol::M),
            'I' => Some(MidSymbol::I),
            'D' => Some(MidSymbol::D),
            _ => None,
        }
    }
}

impl fmt::Display for MidSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Finite segment of a two-sided sequence: `values[i]` sits at index `offset + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<T> {
    offset: i64,
    values: Vec<T>,
}

impl<T> Window<T> {
    pub fn new(offset: i64, values: Vec<T>) -> Self {
        Self { offset, values }
    }

    pub fn empty(offset: i64) -> Self {
        Self {
            offset,
            values: Vec::new(),
        }
    }

    /// Builds the window over `lo..=hi` from `f(index)`.
    pub fn from_fn(lo: i64, hi: i64, mut f: impl FnMut(i64) -> T) -> Self {
        Self {
            offset: lo,
            values: (lo..=hi).map(&mut f).collect(),
        }
    }

    pub fn lo(&self) -> i64 {
        self.offset
    }

    /// Last index; `lo() - 1` for an empty window.
    pub fn hi(&self) -> i64 {
        self.offset + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, index: i64) -> bool {
        index >= self.lo() && index <= self.hi()
    }

    pub fn get(&self, index: i64) -> Result<&T> {
        if !self.contains(index) {
            return Err(self.out_of_range(index));
        }
        Ok(&self.values[(index - self.offset) as usize])
    }

    pub fn set(&mut self, index: i64, value: T) -> Result<()> {
        if !self.contains(index) {
            return Err(self.out_of_range(index));
        }
        let slot = (index - self.offset) as usize;
        self.values[slot] = value;
        Ok(())
    }

    fn out_of_range(&self, index: i64) -> Error {
        Error::OutOfRange {
            index,
            lo: self.lo(),
            hi: self.hi(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (i64, &T)> + ExactSizeIterator + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.offset + i as i64, v))
    }

    /// Prepends `left` so that its last element lands at `lo() - 1`.
    pub fn extend_left(&mut self, left: Vec<T>) {
        let n = left.len() as i64;
        let mut merged = left;
        merged.append(&mut self.values);
        self.values = merged;
        self.offset -= n;
    }

    pub fn extend_right(&mut self, right: Vec<T>) {
        self.values.extend(right);
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Window<U> {
        Window {
            offset: self.offset,
            values: self.values.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> Window<T> {
    /// Restriction to `lo..=hi`, which must lie inside the window.
    pub fn restrict(&self, lo: i64, hi: i64) -> Result<Window<T>> {
        if hi < lo {
            return Ok(Window::empty(lo));
        }
        if !self.contains(lo) {
            return Err(self.out_of_range(lo));
        }
        if !self.contains(hi) {
            return Err(self.out_of_range(hi));
        }
        let a = (lo - self.offset) as usize;
        let b = (hi - self.offset) as usize;
        Ok(Window::new(lo, self.values[a..=b].to_vec()))
    }
}

fn check_stochastic_row(row: usize, values: &[f64]) -> Result<()> {
    for (col, &v) in values.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::NegativeEntry { row, col, value: v });
        }
    }
    let sum = ksum(values.iter().copied());
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::NonStochastic { row, sum });
    }
    Ok(())
}

/// Checks that every row is a probability vector.
pub fn validate_rows(rows: &[Vec<f64>]) -> Result<()> {
    let m = rows.len();
    if m == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != m {
            return Err(Error::Shape(format!(
                "row {i} has length {} in a {m}x{m} matrix",
                row.len()
            )));
        }
        check_stochastic_row(i, row)?;
    }
    Ok(())
}

pub fn validate_pmf(pmf: &[f64]) -> Result<()> {
    if pmf.is_empty() {
        return Err(Error::Shape("empty pmf".into()));
    }
    check_stochastic_row(0, pmf)
}

/// Row-stochastic m x m matrix; row `a` is the law of the mutated symbol given `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationKernel {
    rows: Vec<Vec<f64>>,
}

impl MutationKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        validate_rows(&rows)?;
        Ok(Self { rows })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            rows: (0..m)
                .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    /// Keeps the symbol with probability `1 - rate`, else moves uniformly to another symbol.
    pub fn symmetric(m: usize, rate: f64) -> Result<Self> {
        if m < 2 || !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "symmetric kernel needs m >= 2 and rate in [0,1], got m={m}, rate={rate}"
            )));
        }
        let off = rate / (m - 1) as f64;
        Self::new(
            (0..m)
                .map(|i| (0..m).map(|j| if i == j { 1.0 - rate } else { off }).collect())
                .collect(),
        )
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.rows[a]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `g(a, u)` for the finite alphabet.
    pub fn apply(&self, a: usize, u: f64) -> usize {
        inverse_cdf(&self.rows[a], u)
    }
}

/// Law of an inserted symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct InsertionDist {
    pmf: Vec<f64>,
}

impl InsertionDist {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        validate_pmf(&pmf)?;
        Ok(Self { pmf })
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            pmf: vec![1.0 / m as f64; m],
        }
    }

    pub fn size(&self) -> usize {
        self.pmf.len()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `h(u)` for the finite alphabet.
    pub fn apply(&self, u: f64) -> usize {
        inverse_cdf(&self.pmf, u)
    }
}

/// Borrowed view of either kernel kind, for [`validate_kernel`].
#[derive(Debug, Clone, Copy)]
pub enum KernelRef<'a> {
    Mutation(&'a [Vec<f64>]),
    Insertion(&'a [f64]),
}

pub fn validate_kernel(k: KernelRef<'_>) -> Result<()> {
    match k {
        KernelRef::Mutation(rows) => validate_rows(rows),
        KernelRef::Insertion(pmf) => validate_pmf(pmf),
    }
}

/// Smallest index with positive mass whose cumulative sum reaches `u`.
///
/// `u = 0` maps to the first index of positive mass. If rounding leaves the
/// total just below `u`, the last index of positive mass is returned.
pub fn inverse_cdf(pmf: &[f64], u: f64) -> usize {
    let mut cum = 0.0f64;
    let mut comp = 0.0f64;
    let mut last_positive = 0;
    for (i, &p) in pmf.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        // compensated running sum
        let y = p - comp;
        let t = cum + y;
        comp = (t - cum) - y;
        cum = t;
        last_positive = i;
        if cum >= u {
            return i;
        }
    }
    last_positive
}

/// Root seed with named substreams.
///
/// Every random component draws from `root.derive(name)` so that, for a fixed
/// configuration, outputs are bit-identical across runs and independent of
/// how replicates are partitioned over threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl Seed {
    pub fn derive(self, label: &str) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(fnv1a(label))))
    }

    /// Substream for replicate number `i`.
    pub fn index(self, i: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(i ^ 0x5851_F42D_4C95_7F2D)))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Counter-based uniform on [0,1) attached to a sequence index, so a
    /// two-sided iid uniform sequence is fixed by the seed alone.
    pub fn uniform_at(self, index: i64) -> f64 {
        let bits = splitmix64(self.0 ^ splitmix64(index as u64));
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_kernel_validates() {
        let k = MutationKernel::identity(4);
        assert!(validate_kernel(KernelRef::Mutation(k.rows())).is_ok());
    }

    #[test]
    fn non_stochastic_row_reported() {
        let rows = vec![vec![0.5, 0.6], vec![0.5, 0.5]];
        match validate_kernel(KernelRef::Mutation(&rows)) {
            Err(Error::NonStochastic { row, sum }) => {
                assert_eq!(row, 0);
                assert!((sum - 1.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniform_kernel_validates() {
        let rows = vec![vec![0.25; 4]; 4];
        assert!(validate_kernel(KernelRef::Mutation(&rows)).is_ok());
        assert!(validate_kernel(KernelRef::Insertion(&[0.25; 4])).is_ok());
    }

    #[test]
    fn negative_entry_rejected() {
        assert!(matches!(
            validate_pmf(&[1.5, -0.5]),
            Err(Error::NegativeEntry { col: 1, .. })
        ));
    }

    #[test]
    fn inverse_cdf_examples() {
        assert_eq!(inverse_cdf(&[1.0, 0.0, 0.0], 0.7), 0);
        assert_eq!(inverse_cdf(&[0.25; 4], 0.5), 1);
        assert_eq!(inverse_cdf(&[0.5, 0.5], 1.0), 1);
        assert_eq!(inverse_cdf(&[0.0, 0.3, 0.7], 0.0), 1);
        assert_eq!(inverse_cdf(&[0.5, 0.5, 0.0], 1.0), 1);
    }

    #[test]
    fn window_bounds_are_errors() {
        let mut w = Window::new(-2, vec![1, 2, 3]);
        assert_eq!(w.hi(), 0);
        assert_eq!(*w.get(-1).unwrap(), 2);
        assert!(w.get(1).is_err());
        assert!(w.set(-3, 9).is_err());
        w.extend_left(vec![7, 8]);
        assert_eq!(w.lo(), -4);
        assert_eq!(*w.get(-3).unwrap(), 8);
        w.extend_right(vec![5]);
        assert_eq!(*w.get(1).unwrap(), 5);
    }

    #[test]
    fn alphabet_rejects_duplicates() {
        assert!(Alphabet::new(["A", "C", "A"]).is_err());
        let a = Alphabet::new(["A", "C", "G", "T"]).unwrap();
        assert_eq!(a.index_of("G"), Some(2));
        assert_eq!(a.label(3), Some("T"));
    }

    #[test]
    fn seed_substreams_are_deterministic_and_distinct() {
        let s = Seed(42);
        assert_eq!(s.derive("x"), Seed(42).derive("x"));
        assert_ne!(s.derive("x"), s.derive("z"));
        assert_ne!(s.index(0), s.index(1));
        assert_eq!(s.uniform_at(-5), s.uniform_at(-5));
        let u = s.uniform_at(17);
        assert!((0.0..1.0).contains(&u));
    }

    proptest! {
        #[test]
        fn window_set_get_round_trip(offset in -50i64..50, len in 1usize..30, pick in 0usize..30, v in any::<i32>()) {
            let mut w = Window::new(offset, vec![0i32; len]);
            let i = offset + (pick % len) as i64;
            w.set(i, v).unwrap();
            prop_assert_eq!(*w.get(i).unwrap(), v);
            prop_assert!(w.get(offset - 1).is_err());
            prop_assert!(w.get(offset + len as i64).is_err());
        }

        #[test]
        fn inverse_cdf_monotone(raw in proptest::collection::vec(0.0f64..1.0, 1..8), u1 in 0.0f64..=1.0, u2 in 0.0f64..=1.0) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let pmf: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let (a, b) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
            prop_assert!(inverse_cdf(&pmf, a) <= inverse_cdf(&pmf, b));
            prop_assert!(pmf[inverse_cdf(&pmf, a)] > 0.0);
        }
    }
}
