use std::fmt::Write as _;

use crate::domain::ksum;
use crate::error::{Error, Result};

/// Largest dense table we are willing to allocate.
pub const MAX_CELLS: usize = 1 << 26;

/// Tolerance on `total + mass_deficit = 1`.
pub const MASS_TOL: f64 = 1e-10;

/// A finite coordinate space with labeled atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axis {
    pub name: String,
    pub labels: Vec<String>,
}

impl Axis {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

pub(crate) fn cell_count(axes: &[Axis]) -> Result<usize> {
    let mut n: usize = 1;
    for a in axes {
        n = n
            .checked_mul(a.len())
            .filter(|&n| n <= MAX_CELLS)
            .ok_or(Error::TableTooLarge(usize::MAX))?;
    }
    Ok(n)
}

pub(crate) fn strides(axes: &[Axis]) -> Vec<usize> {
    let mut s = vec![1usize; axes.len()];
    for i in (0..axes.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * axes[i + 1].len();
    }
    s
}

/// Exact probability table over a product of finite axes.
///
/// Cells are stored densely in row-major order (last axis fastest).
/// `mass_deficit` is the probability of realizations that fell outside the
/// enumeration window; it is never folded back into the table.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    axes: Vec<Axis>,
    table: Vec<f64>,
    mass_deficit: f64,
}

impl JointPmf {
    pub fn new(axes: Vec<Axis>, table: Vec<f64>, mass_deficit: f64) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Shape("joint pmf needs at least one axis".into()));
        }
        let n = cell_count(&axes)?;
        if table.len() != n {
            return Err(Error::Shape(format!(
                "table has {} cells, axes imply {n}",
                table.len()
            )));
        }
        if let Some((i, &v)) = table.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeEntry {
                row: i,
                col: 0,
                value: v,
            });
        }
        if !(mass_deficit >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "negative mass deficit {mass_deficit}"
            )));
        }
        let total = ksum(table.iter().copied());
        if (total + mass_deficit - 1.0).abs() > MASS_TOL {
            return Err(Error::NonStochastic {
                row: 0,
                sum: total + mass_deficit,
            });
        }
        Ok(Self {
            axes,
            table,
            mass_deficit,
        })
    }

    /// Builds the table cell by cell from `f(atom tuple)`.
    pub fn from_fn(
        axes: Vec<Axis>,
        mass_deficit: f64,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        let n = cell_count(&axes)?;
        let mut table = Vec::with_capacity(n);
        let mut atom = vec![0usize; axes.len()];
        for _ in 0..n {
            table.push(f(&atom));
            for k in (0..axes.len()).rev() {
                atom[k] += 1;
                if atom[k] < axes[k].len() {
                    break;
                }
                atom[k] = 0;
            }
        }
        Self::new(axes, table, mass_deficit)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn mass_deficit(&self) -> f64 {
        self.mass_deficit
    }

    pub fn total(&self) -> f64 {
        ksum(self.table.iter().copied())
    }

    pub fn index_of(&self, atom: &[usize]) -> usize {
        strides(&self.axes)
            .iter()
            .zip(atom)
            .map(|(s, a)| s * a)
            .sum()
    }

    pub fn atom_of(&self, mut cell: usize) -> Vec<usize> {
        let mut atom = vec![0; self.axes.len()];
        for k in (0..self.axes.len()).rev() {
            let n = self.axes[k].len();
            atom[k] = cell % n;
            cell /= n;
        }
        atom
    }

    pub fn prob(&self, atom: &[usize]) -> f64 {
        self.table[self.index_of(atom)]
    }

    /// Probability of the cell named by its labels, one per axis.
    pub fn prob_of_labels(&self, labels: &[&str]) -> Option<f64> {
        if labels.len() != self.axes.len() {
            return None;
        }
        let atom: Option<Vec<usize>> = self
            .axes
            .iter()
            .zip(labels)
            .map(|(a, l)| a.position(l))
            .collect();
        atom.map(|a| self.prob(&a))
    }

    /// Marginal onto the listed axes (in the listed order).
    pub fn marginal(&self, keep: &[usize]) -> Result<JointPmf> {
        if keep.is_empty() || keep.iter().any(|&k| k >= self.axes.len()) {
            return Err(Error::InvalidArgument(format!("bad marginal axes {keep:?}")));
        }
        let axes: Vec<Axis> = keep.iter().map(|&k| self.axes[k].clone()).collect();
        let out_strides = strides(&axes);
        let mut out = vec![0.0; cell_count(&axes)?];
        for (cell, &p) in self.table.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let atom = self.atom_of(cell);
            let idx: usize = keep
                .iter()
                .zip(&out_strides)
                .map(|(&k, s)| atom[k] * s)
                .sum();
            out[idx] += p;
        }
        JointPmf::new(axes, out, self.mass_deficit)
    }

    /// Law of two independent vectors: axes of `a` followed by axes of `b`.
    pub fn product(a: &JointPmf, b: &JointPmf) -> Result<JointPmf> {
        let mut axes = a.axes.clone();
        axes.extend(b.axes.iter().cloned());
        cell_count(&axes)?;
        let mut table = Vec::with_capacity(a.table.len() * b.table.len());
        for &pa in &a.table {
            for &pb in &b.table {
                table.push(pa * pb);
            }
        }
        let total = ksum(table.iter().copied());
        JointPmf::new(axes, table, (1.0 - total).max(0.0))
    }

    /// Merges atoms of one axis: atom `i` goes to group `groups[i]`.
    pub fn coarsen(&self, axis: usize, groups: &[usize], labels: Vec<String>) -> Result<JointPmf> {
        if axis >= self.axes.len() || groups.len() != self.axes[axis].len() {
            return Err(Error::Shape("coarsening map does not match axis".into()));
        }
        if groups.iter().any(|&g| g >= labels.len()) {
            return Err(Error::Shape("coarsening group out of range".into()));
        }
        let mut axes = self.axes.clone();
        axes[axis] = Axis::new(self.axes[axis].name.clone(), labels);
        let out_strides = strides(&axes);
        let mut out = vec![0.0; cell_count(&axes)?];
        for (cell, &p) in self.table.iter().enumerate() {
            let mut atom = self.atom_of(cell);
            atom[axis] = groups[atom[axis]];
            let idx: usize = atom.iter().zip(&out_strides).map(|(a, s)| a * s).sum();
            out[idx] += p;
        }
        JointPmf::new(axes, out, self.mass_deficit)
    }

    /// CSV dump: header of axis names plus `probability`, one row per cell,
    /// trailing `OVERFLOW` row carrying the mass deficit.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let names: Vec<&str> = self.axes.iter().map(|a| a.name.as_str()).collect();
        let _ = writeln!(s, "{},probability", names.join(","));
        for (cell, &p) in self.table.iter().enumerate() {
            let atom = self.atom_of(cell);
            for (k, a) in atom.iter().enumerate() {
                s.push_str(&self.axes[k].labels[*a]);
                s.push(',');
            }
            let _ = writeln!(s, "{}", fmt_num(p));
        }
        s.push_str("OVERFLOW");
        for _ in 1..self.axes.len() {
            s.push(',');
        }
        let _ = writeln!(s, ",{}", fmt_num(self.mass_deficit));
        s
    }
}

/// 17 significant digits, round-trip safe.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Joint law of a (left, right) pair of vectors, stored through a finite
/// interface variable `h` that separates them:
/// `P(a, b) = sum_h left(a, h) * right(b | h)`.
///
/// This is how the oracle keeps past/future tables small enough to take
/// beta over long gaps without materializing the product.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPmf {
    left_axes: Vec<Axis>,
    right_axes: Vec<Axis>,
    hidden: usize,
    left: Vec<f64>,
    right: Vec<f64>,
    mass_deficit: f64,
}

impl SplitPmf {
    /// `left` is `left_cells x hidden` (joint of a and h), `right` is
    /// `right_cells x hidden` (conditional of b given h).
    pub fn new(
        left_axes: Vec<Axis>,
        right_axes: Vec<Axis>,
        hidden: usize,
        left: Vec<f64>,
        right: Vec<f64>,
        mass_deficit: f64,
    ) -> Result<Self> {
        let lc = cell_count(&left_axes)?;
        let rc = cell_count(&right_axes)?;
        if hidden == 0 || left.len() != lc * hidden || right.len() != rc * hidden {
            return Err(Error::Shape(format!(
                "split pmf: left {} (want {}), right {} (want {})",
                left.len(),
                lc * hidden,
                right.len(),
                rc * hidden
            )));
        }
        if left.iter().chain(&right).any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("negative split pmf entry".into()));
        }
        Ok(Self {
            left_axes,
            right_axes,
            hidden,
            left,
            right,
            mass_deficit,
        })
    }

    pub fn left_axes(&self) -> &[Axis] {
        &self.left_axes
    }

    pub fn right_axes(&self) -> &[Axis] {
        &self.right_axes
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn left_cells(&self) -> usize {
        self.left.len() / self.hidden
    }

    pub fn right_cells(&self) -> usize {
        self.right.len() / self.hidden
    }

    pub fn mass_deficit(&self) -> f64 {
        self.mass_deficit
    }

    pub(crate) fn left_row(&self, a: usize) -> &[f64] {
        &self.left[a * self.hidden..(a + 1) * self.hidden]
    }

    pub(crate) fn right_row(&self, b: usize) -> &[f64] {
        &self.right[b * self.hidden..(b + 1) * self.hidden]
    }

    /// Marginal weight of each interface value.
    pub(crate) fn hidden_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.hidden];
        for a in 0..self.left_cells() {
            for (wh, l) in w.iter_mut().zip(self.left_row(a)) {
                *wh += l;
            }
        }
        w
    }

    /// Joint probabilities of left cell `a` with every right cell.
    pub(crate) fn joint_row(&self, a: usize, out: &mut [f64]) {
        let l = self.left_row(a);
        for (b, o) in out.iter_mut().enumerate() {
            let r = self.right_row(b);
            *o = l.iter().zip(r).map(|(x, y)| x * y).sum();
        }
    }

    pub fn to_joint(&self) -> Result<JointPmf> {
        let mut axes = self.left_axes.clone();
        axes.extend(self.right_axes.iter().cloned());
        let rc = self.right_cells();
        let mut table = vec![0.0; cell_count(&axes)?];
        for a in 0..self.left_cells() {
            self.joint_row(a, &mut table[a * rc..(a + 1) * rc]);
        }
        let total = ksum(table.iter().copied());
        // Rounding can leave total + deficit a hair off 1; the explicit deficit wins.
        let deficit = if (total + self.mass_deficit - 1.0).abs() <= MASS_TOL {
            self.mass_deficit
        } else {
            (1.0 - total).max(0.0)
        };
        JointPmf::new(axes, table, deficit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(name: &str, n: usize) -> Axis {
        Axis::new(name, (0..n).map(|i| i.to_string()).collect())
    }

    #[test]
    fn rejects_bad_mass() {
        assert!(JointPmf::new(vec![axis("a", 2)], vec![0.5, 0.4], 0.0).is_err());
        assert!(JointPmf::new(vec![axis("a", 2)], vec![0.5, 0.4], 0.1).is_ok());
        assert!(JointPmf::new(vec![axis("a", 2)], vec![1.5, -0.5], 0.0).is_err());
    }

    #[test]
    fn marginal_and_index_agree() {
        let j = JointPmf::new(
            vec![axis("a", 2), axis("b", 3)],
            vec![0.1, 0.2, 0.0, 0.3, 0.1, 0.3],
            0.0,
        )
        .unwrap();
        assert_eq!(j.atom_of(4), vec![1, 1]);
        assert_eq!(j.index_of(&[1, 1]), 4);
        let m = j.marginal(&[1]).unwrap();
        assert!((m.prob(&[0]) - 0.4).abs() < 1e-15);
        assert!((m.prob(&[2]) - 0.3).abs() < 1e-15);
        assert_eq!(j.prob_of_labels(&["1", "2"]), Some(0.3));
    }

    #[test]
    fn csv_has_header_and_overflow_row() {
        let j = JointPmf::new(vec![axis("a", 2)], vec![0.25, 0.75], 0.0).unwrap();
        let csv = j.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "a,probability");
        assert_eq!(lines[1], "0,2.5000000000000000e-1");
        assert!(lines[3].starts_with("OVERFLOW,"));
    }

    #[test]
    fn split_materializes_to_product_for_trivial_interface() {
        let s = SplitPmf::new(
            vec![axis("a", 2)],
            vec![axis("b", 2)],
            1,
            vec![0.3, 0.7],
            vec![0.6, 0.4],
            0.0,
        )
        .unwrap();
        let j = s.to_joint().unwrap();
        assert!((j.prob(&[1, 0]) - 0.42).abs() < 1e-15);
    }
}
