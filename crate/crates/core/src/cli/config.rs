//! Experiment configuration: a TOML file, validated into a model plus jobs.

use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::domain::{Alphabet, InsertionDist, MidSymbol, MutationKernel, Seed};
use crate::error::{Error, Result};
use crate::exact::ExactOptions;
use crate::mixing::Method;
use crate::processes::SourceModel;
use crate::replication::{Measure, Model};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceSpec {
    Iid { pmf: Vec<f64> },
    Markov { matrix: Vec<Vec<f64>> },
}

/// Raw file contents. Top-level keys come before the tables.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub alphabet: Vec<String>,
    pub mutation: Vec<Vec<f64>>,
    pub insertion: Vec<f64>,
    #[serde(default = "default_measure")]
    pub measure: String,
    #[serde(default)]
    pub run: Vec<String>,
    pub x_model: SourceSpec,
    pub mid_model: SourceSpec,
    pub params: Params,
}

fn default_measure() -> String {
    "P0".into()
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_lags")]
    pub lags: Vec<i64>,
    #[serde(default = "default_one")]
    pub width: i64,
    #[serde(default = "default_widths")]
    pub widths: Vec<i64>,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<i64>,
    #[serde(default = "default_positions")]
    pub positions: Vec<i64>,
    #[serde(default = "default_gap_cap")]
    pub gap_cap: u32,
    #[serde(default = "default_window_bound")]
    pub window_bound: i64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_moment_n")]
    pub moment_n: Vec<usize>,
    #[serde(default = "default_clt_n")]
    pub clt_n: usize,
    #[serde(default = "default_clt_replicates")]
    pub clt_replicates: usize,
    #[serde(default = "default_clt_functional")]
    pub clt_functional: String,
    #[serde(default = "default_processes")]
    pub profile_processes: Vec<String>,
    #[serde(default = "default_method")]
    pub profile_method: String,
    #[serde(default)]
    pub h_table: Option<Vec<f64>>,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_mode() -> String {
    "exact".into()
}
fn default_samples() -> usize {
    100_000
}
fn default_lags() -> Vec<i64> {
    (1..=8).collect()
}
fn default_one() -> i64 {
    1
}
fn default_widths() -> Vec<i64> {
    vec![1, 2]
}
fn default_n_list() -> Vec<i64> {
    vec![2, 3, 4]
}
fn default_positions() -> Vec<i64> {
    vec![1, 2]
}
fn default_gap_cap() -> u32 {
    8
}
fn default_window_bound() -> i64 {
    48
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_instances() -> usize {
    200
}
fn default_horizon() -> usize {
    200
}
fn default_moment_n() -> Vec<usize> {
    vec![10, 50]
}
fn default_clt_n() -> usize {
    2000
}
fn default_clt_replicates() -> usize {
    500
}
fn default_clt_functional() -> String {
    "matched".into()
}
fn default_processes() -> Vec<String> {
    vec!["x".into(), "upsilon".into()]
}
fn default_method() -> String {
    "oracle".into()
}
fn default_out_dir() -> String {
    "out".into()
}

/// Runnable jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemma21,
    Lemma22,
    Lemma23,
    Moment4,
    Stationarity,
    Remark31a,
    Theorem41ii,
    Clt,
    BetaProfile,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Lemma21,
        Suite::Lemma22,
        Suite::Lemma23,
        Suite::Moment4,
        Suite::Stationarity,
        Suite::Remark31a,
        Suite::Theorem41ii,
        Suite::Clt,
        Suite::BetaProfile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma21 => "lemma21",
            Suite::Lemma22 => "lemma22",
            Suite::Lemma23 => "lemma23",
            Suite::Moment4 => "moment4",
            Suite::Stationarity => "stationarity",
            Suite::Remark31a => "remark31a",
            Suite::Theorem41ii => "theorem41ii",
            Suite::Clt => "clt",
            Suite::BetaProfile => "beta_profile",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Suite::Lemma21 => "beta of independent pairs is subadditive (random tables)",
            Suite::Lemma22 => "|beta(A,X) - beta(A,Y)| <= 2 P(X != Y) (random tables)",
            Suite::Lemma23 => "expected sum of H over 0/1 partial sums against the renewal bound (x source)",
            Suite::Moment4 => "fourth central moment of 0/1 partial sums against the alpha bound (x source)",
            Suite::Stationarity => "Upsilon block laws at shifted positions agree under the measure",
            Suite::Remark31a => "V_1 and V_2 differ in law under P but not under P0",
            Suite::Theorem41ii => "beta(Upsilon) <= beta(V) + 2 E0 H(mut_count), and beta(Y) <= beta(Upsilon)",
            Suite::Clt => "normalized partial sums of a symbol indicator are close to normal",
            Suite::BetaProfile => "block beta profiles of the listed processes",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| config_err("run", format!("unknown suite `{s}`")))
    }
}

/// Process whose beta profile is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileProcess {
    X,
    Upsilon,
    V,
    Y,
}

impl ProfileProcess {
    pub fn name(self) -> &'static str {
        match self {
            ProfileProcess::X => "x",
            ProfileProcess::Upsilon => "upsilon",
            ProfileProcess::V => "v",
            ProfileProcess::Y => "y",
        }
    }
}

/// Functional summed by the normal-approximation demo.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CltFunctional {
    /// `1(Z at xi_i = M)` under `P0`.
    Matched,
    /// `1(X_i = symbol)`.
    XSymbol(usize),
}

pub(crate) fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub model: Model,
    pub measure: Measure,
    pub suites: Vec<Suite>,
    pub exact: bool,
    pub exact_opts: ExactOptions,
    pub profile_processes: Vec<ProfileProcess>,
    pub profile_method: Method,
    pub clt_functional: CltFunctional,
}

fn source(spec: &SourceSpec, path: &str) -> Result<SourceModel> {
    let built = match spec {
        SourceSpec::Iid { pmf } => SourceModel::iid(pmf.clone()),
        SourceSpec::Markov { matrix } => SourceModel::markov(matrix.clone()),
    };
    built.map_err(|e| config_err(path, e.to_string()))
}

fn require(cond: bool, path: &str, message: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(config_err(path, message))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let path = e
                .span()
                .map(|s| {
                    let line = text[..s.start].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "<root>".into());
            config_err(&path, message)
        })?;
        Self::validate(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(raw: RawConfig) -> Result<Self> {
        let alphabet = Alphabet::new(raw.alphabet.clone()).map_err(|e| config_err("alphabet", e.to_string()))?;
        let m = alphabet.len();
        let x = source(&raw.x_model, "x_model")?;
        require(x.states() == m, "x_model", "number of states must equal the alphabet size")?;
        let mid = source(&raw.mid_model, "mid_model")?;
        require(mid.states() == 3, "mid_model", "MID source needs exactly 3 states (M, I, D)")?;
        let pi = mid.marginal().expect("iid or Markov");
        for s in MidSymbol::ALL {
            if pi[s.index()] <= 0.0 {
                return Err(config_err(
                    "mid_model",
                    format!("each of M, I, D needs positive stationary mass; P(Z_0 = {s}) = 0"),
                ));
            }
        }
        let mutation = MutationKernel::new(raw.mutation.clone()).map_err(|e| config_err("mutation", e.to_string()))?;
        require(mutation.size() == m, "mutation", "must be an m x m matrix over the alphabet")?;
        let insertion = InsertionDist::new(raw.insertion.clone()).map_err(|e| config_err("insertion", e.to_string()))?;
        require(insertion.size() == m, "insertion", "must have one entry per alphabet symbol")?;
        let model = Model::new(alphabet, x, mid, mutation, insertion).map_err(|e| config_err("<model>", e.to_string()))?;
        let measure: Measure = raw.measure.parse().map_err(|_| config_err("measure", "expected `P` or `P0`"))?;
        let suites = raw
            .run
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<Suite>>>()?;

        let p = &raw.params;
        let exact = match p.mode.as_str() {
            "exact" => true,
            "mc" => false,
            other => return Err(config_err("params.mode", format!("expected `exact` or `mc`, got `{other}`"))),
        };
        require(p.samples >= 2, "params.samples", "must be at least 2")?;
        require(p.width >= 1, "params.width", "must be positive")?;
        require(!p.widths.is_empty() && p.widths.iter().all(|&w| w >= 1), "params.widths", "must be positive")?;
        require(!p.lags.is_empty() && p.lags.iter().all(|&n| n >= 1), "params.lags", "must be positive")?;
        require(!p.n_list.is_empty() && p.n_list.iter().all(|&n| n >= 2), "params.n_list", "lags must be at least 2")?;
        require(!p.positions.is_empty(), "params.positions", "must be nonempty")?;
        require(p.gap_cap >= 1, "params.gap_cap", "must be positive")?;
        require(p.window_bound >= 2, "params.window_bound", "must be at least 2")?;
        require(p.tolerance > 0.0 && p.tolerance < 1.0, "params.tolerance", "must lie in (0, 1)")?;
        require(p.horizon >= 1, "params.horizon", "must be positive")?;
        require(p.moment_n.iter().all(|&n| n >= 1), "params.moment_n", "must be positive")?;
        require(p.clt_n >= 1 && p.clt_replicates >= 2, "params.clt_n", "needs n >= 1 and >= 2 replicates")?;
        let profile_processes = p
            .profile_processes
            .iter()
            .map(|s| match s.as_str() {
                "x" => Ok(ProfileProcess::X),
                "upsilon" => Ok(ProfileProcess::Upsilon),
                "v" => Ok(ProfileProcess::V),
                "y" => Ok(ProfileProcess::Y),
                other => Err(config_err("params.profile_processes", format!("unknown process `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let profile_method: Method = p
            .profile_method
            .parse()
            .map_err(|e: Error| config_err("params.profile_method", e.to_string()))?;
        let clt_functional = match p.clt_functional.as_str() {
            "matched" => CltFunctional::Matched,
            s => match s.strip_prefix("x:").and_then(|l| model.alphabet.index_of(l)) {
                Some(i) => CltFunctional::XSymbol(i),
                None => {
                    return Err(config_err(
                        "params.clt_functional",
                        format!("expected `matched` or `x:<symbol>`, got `{s}`"),
                    ))
                }
            },
        };
        let exact_opts = ExactOptions {
            window_bound: p.window_bound,
            gap_cap: p.gap_cap,
            tolerance: p.tolerance,
        };
        Ok(Self {
            raw,
            model,
            measure,
            suites,
            exact,
            exact_opts,
            profile_processes,
            profile_method,
            clt_functional,
        })
    }

    pub fn seed(&self) -> Seed {
        Seed(self.raw.params.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
alphabet = ["a", "b"]
mutation = [[0.9, 0.1], [0.1, 0.9]]
insertion = [0.5, 0.5]
run = ["stationarity"]

[x_model]
kind = "iid"
pmf = [0.5, 0.5]

[mid_model]
kind = "iid"
pmf = [0.5, 0.25, 0.25]

[params]
seed = 7
"#;

    #[test]
    fn sample_parses_with_defaults() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.suites, vec![Suite::Stationarity]);
        assert_eq!(c.measure, Measure::P0);
        assert_eq!(c.exact_opts.window_bound, 48);
        assert!(c.exact);
    }

    #[test]
    fn zero_mass_mid_symbol_is_rejected() {
        let text = SAMPLE.replace("pmf = [0.5, 0.25, 0.25]", "pmf = [0.5, 0.5, 0.0]");
        match ExperimentConfig::parse(&text) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "mid_model");
                assert!(message.contains("positive"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_suite_is_named() {
        let text = SAMPLE.replace("[\"stationarity\"]", "[\"nope\"]");
        let e = ExperimentConfig::parse(&text).unwrap_err();
        assert!(matches!(&e, Error::Config { path, message } if path == "run" && message.contains("nope")));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = SAMPLE.replace("seed = 7", "seed = 7\nsede = 8");
        assert!(matches!(ExperimentConfig::parse(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn bad_kernel_names_its_field() {
        let text = SAMPLE.replace("[[0.9, 0.1], [0.1, 0.9]]", "[[0.9, 0.2], [0.1, 0.9]]");
        let e = ExperimentConfig::parse(&text).unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "mutation"));
    }

    #[test]
    fn suites_round_trip_names() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
    }
}
