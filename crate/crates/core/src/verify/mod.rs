//! Executable checks of the inequalities and stationarity claims, each
//! reported as a literal `lhs <= rhs (+ tolerance)` comparison.

mod clt;
mod lemmas;
mod model_checks;
mod renewal;

use std::fmt::{self, Write as _};

use crate::exact::fmt_num;

pub use clt::{clt_demo, induced_mi_chain, CltSource};
pub use lemmas::{check_lemma21, check_lemma22, lemma21_instances, lemma22_instances, random_joint, Lemma21Instance};
pub use model_checks::{
    mut_count_cross_check, remark31a_demo, stationarity_report, theorem41_ii_check, CheckMode, Theorem41Options, Theorem41Result,
    Theorem41Row,
};
pub use renewal::{
    alpha_sequence, exact_partial_sum, lemma23_sum, moment4_check, moment4_rhs, HFunction, Lemma23Options,
    RenewalTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        })
    }
}

/// Outcome of one check: `status = pass` exactly when `rhs - lhs >= -tolerance`,
/// unless the check is informational and marked inconclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub status: Status,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub diagnostics: Vec<(String, String)>,
}

impl CheckReport {
    /// Report for the claim `lhs <= rhs` up to `tolerance`.
    pub fn at_most(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = rhs - lhs;
        let status = if slack >= -tolerance { Status::Pass } else { Status::Fail };
        Self {
            name: name.into(),
            status,
            lhs,
            rhs,
            slack,
            tolerance,
            diagnostics: Vec::new(),
        }
    }

    /// Report for the claim `lhs > rhs` (a strict lower bound), so `slack = lhs - rhs`.
    pub fn above(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let slack = lhs - rhs;
        Self {
            name: name.into(),
            status: if slack > 0.0 { Status::Pass } else { Status::Fail },
            lhs,
            rhs,
            slack,
            tolerance: 0.0,
            diagnostics: Vec::new(),
        }
    }

    pub fn inconclusive(mut self) -> Self {
        self.status = Status::Inconclusive;
        self
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.diagnostics.push((key.to_string(), value.to_string()));
        self
    }

    pub fn with_num(self, key: &str, value: f64) -> Self {
        self.with(key, fmt_num(value))
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub const CSV_HEADER: &'static str = "name,status,lhs,rhs,slack,tolerance,diagnostics";

    pub fn csv_row(&self) -> String {
        let diag: Vec<String> = self.diagnostics.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!(
            "{},{},{},{},{},{},{}",
            self.name,
            self.status,
            fmt_num(self.lhs),
            fmt_num(self.rhs),
            fmt_num(self.slack),
            fmt_num(self.tolerance),
            diag.join(";")
        )
    }

    pub fn text_block(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}] {}", self.status, self.name);
        let _ = writeln!(s, "  lhs       = {}", fmt_num(self.lhs));
        let _ = writeln!(s, "  rhs       = {}", fmt_num(self.rhs));
        let _ = writeln!(s, "  slack     = {}", fmt_num(self.slack));
        let _ = writeln!(s, "  tolerance = {}", fmt_num(self.tolerance));
        for (k, v) in &self.diagnostics {
            let _ = writeln!(s, "  {k}: {v}");
        }
        s
    }
}

/// Sample mean and standard error of the mean.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_follows_slack() {
        assert!(CheckReport::at_most("a", 1.0, 1.0, 0.0).passed());
        assert!(CheckReport::at_most("a", 1.0 + 1e-13, 1.0, 1e-12).passed());
        assert!(!CheckReport::at_most("a", 1.1, 1.0, 1e-12).passed());
        assert!(!CheckReport::above("a", 0.0, 0.0).passed());
    }

    #[test]
    fn csv_row_has_seven_columns() {
        let r = CheckReport::at_most("x", 0.5, 1.0, 1e-12).with("n", 3).with_num("se", 0.1);
        assert_eq!(r.csv_row().split(',').count(), 7);
        assert!(r.csv_row().ends_with("n=3;se=1.0000000000000001e-1"));
    }
}
