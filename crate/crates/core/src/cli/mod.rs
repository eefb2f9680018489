//! Config-driven runner: builds the model, executes the listed suites and
//! writes CSV artifacts plus a summary.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::domain::Seed;
use crate::error::{Error, Result};
use crate::exact::{enumerate_model, upsilon_block_dist, ExactOptions, Query};
use crate::mixing::{
    beta_profile, Empirical, LawProvider, Method, MixingProfile, ModelProcess, DEFAULT_RESAMPLES,
};
use crate::processes::sample_window;
use crate::replication::{sample_replication, Measure, Model, SamplingOptions, UpsilonAtom};
use crate::verify::{
    check_lemma21, check_lemma22, clt_demo, lemma21_instances, lemma22_instances, lemma23_sum, moment4_check,
    mut_count_cross_check, remark31a_demo, stationarity_report, theorem41_ii_check, CheckMode, CheckReport,
    CltSource, HFunction, Lemma23Options, Status, Theorem41Options,
};

pub use config::{CltFunctional, ExperimentConfig, ProfileProcess, Suite};

/// Command-line overrides; everything else comes from the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<CheckReport>,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.status != Status::Fail)
    }

    /// 0 when no check failed, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        if self.all_passed() {
            0
        } else {
            1
        }
    }
}

/// Text listing of the runnable suites.
pub fn list_suites() -> String {
    let mut s = String::new();
    for suite in Suite::ALL {
        let _ = writeln!(s, "{:<14} {}", suite.name(), suite.description());
    }
    s
}

/// Files produced by one suite.
#[derive(Default)]
struct Artifacts {
    reports: Vec<CheckReport>,
    profiles: Vec<(String, MixingProfile)>,
    dists: Vec<(String, String)>,
    tables: Vec<(String, String)>,
}

struct Job<'a> {
    cfg: &'a ExperimentConfig,
    seed: Seed,
    samples: usize,
}

impl Job<'_> {
    fn model(&self) -> &Model {
        &self.cfg.model
    }

    fn mode(&self, label: &str) -> CheckMode {
        if self.cfg.exact {
            CheckMode::Exact
        } else {
            CheckMode::monte_carlo(self.samples, self.seed.derive(label))
        }
    }

    fn run(&self, suite: Suite) -> Result<Artifacts> {
        let p = &self.cfg.raw.params;
        let seed = self.seed.derive(suite.name());
        let mut a = Artifacts::default();
        match suite {
            Suite::Lemma21 => a.reports.push(check_lemma21(&lemma21_instances(p.instances, seed))?),
            Suite::Lemma22 => a.reports.push(check_lemma22(&lemma22_instances(p.instances, seed))?),
            Suite::Lemma23 => {
                let h = match &p.h_table {
                    Some(t) => HFunction::Table(t.clone()),
                    None => HFunction::Geometric { h0: 1.0, ratio: 0.5 },
                };
                let opts = Lemma23Options {
                    horizon: p.horizon,
                    replicates: self.samples,
                    seed,
                    ..Lemma23Options::default()
                };
                a.reports.push(lemma23_sum(&self.model().x, &h, opts)?);
            }
            Suite::Moment4 => a.reports.extend(moment4_check(&self.model().x, &p.moment_n, self.samples, seed)?),
            Suite::Stationarity => {
                let m = self.cfg.measure;
                let mode = self.mode("stationarity");
                a.reports.extend(stationarity_report(self.model(), &p.positions, m, mode, self.cfg.exact_opts)?);
                if self.cfg.exact {
                    for s in 0..=2 {
                        let pos: Vec<i64> = p.positions.iter().map(|k| k + s).collect();
                        let d = upsilon_block_dist(self.model(), &pos, m, self.cfg.exact_opts)?;
                        a.dists.push((format!("upsilon_{m}_{}", join(&pos)), d.to_csv()));
                    }
                }
            }
            Suite::Remark31a => {
                a.reports.push(remark31a_demo(self.model(), self.cfg.exact_opts)?);
                for m in [Measure::P, Measure::P0] {
                    for k in 1..=2 {
                        let d = enumerate_model(self.model(), &[Query::V(k)], m, self.cfg.exact_opts)?;
                        a.dists.push((format!("v{k}_{m}"), d.to_csv()));
                    }
                }
            }
            Suite::Theorem41ii => {
                let h = p.h_table.clone().map(HFunction::Table);
                for &w in &p.widths {
                    let o = Theorem41Options {
                        n_list: p.n_list.clone(),
                        w,
                        gap_cap: p.gap_cap,
                        exact: self.cfg.exact_opts,
                        h: h.clone(),
                        mode: self.mode(&format!("theorem41ii-w{w}")),
                    };
                    let res = theorem41_ii_check(self.model(), &o)?;
                    a.tables.push((format!("summability_w{w}.csv"), res.table_csv()));
                    a.reports.extend(res.reports);
                }
                for &n in &p.n_list {
                    a.reports.push(mut_count_cross_check(
                        self.model(),
                        n,
                        self.samples,
                        seed.derive("mutcount"),
                        self.cfg.exact_opts,
                    )?);
                }
            }
            Suite::Clt => {
                let src = match self.cfg.clt_functional {
                    CltFunctional::Matched => CltSource::MatchedLetters(self.model().clone()),
                    CltFunctional::XSymbol(symbol) => CltSource::Source {
                        model: self.model().x.clone(),
                        symbol,
                    },
                };
                a.reports.push(clt_demo(&src, p.clt_n, p.clt_replicates, seed)?);
            }
            Suite::BetaProfile => {
                for &proc in &self.cfg.profile_processes {
                    let prof = self.profile(proc, seed.derive(proc.name()))?;
                    a.profiles.push((proc.name().to_string(), prof));
                }
            }
        }
        Ok(a)
    }

    fn profile(&self, proc: ProfileProcess, seed: Seed) -> Result<MixingProfile> {
        let p = &self.cfg.raw.params;
        let model = self.model();
        let measure = self.cfg.measure;
        let opts = self.cfg.exact_opts;
        if self.cfg.profile_method != Method::Empirical {
            let provider = match proc {
                ProfileProcess::X => LawProvider::Source(&model.x),
                other => LawProvider::Model {
                    model,
                    process: model_process(other),
                    measure,
                    opts,
                },
            };
            return beta_profile(&provider, &p.lags, p.width);
        }
        let radix = atom_radix(proc, model, opts);
        let sampler = move |n: i64, w: i64, s: Seed| -> Result<(u64, u64)> {
            let encode = |lo: i64, f: &dyn Fn(i64) -> Result<u64>| -> Result<u64> {
                (lo..lo + w).try_fold(0u64, |acc, k| Ok(acc * radix + f(k)?))
            };
            match proc {
                ProfileProcess::X => {
                    let x = sample_window(&model.x, -w + 1, n + w - 1, s)?;
                    let f = |k: i64| x.get(k).map(|&v| v as u64);
                    Ok((encode(-w + 1, &f)?, encode(n, &f)?))
                }
                other => {
                    let r = sample_replication(model, -w + 1, n + w - 1, measure, s, SamplingOptions::default())?;
                    let f = |k: i64| r.upsilon.get(k).map(|a| atom_code(other, a, model, opts));
                    Ok((encode(-w + 1, &f)?, encode(n, &f)?))
                }
            }
        };
        let emp = Empirical {
            sampler: &sampler,
            block_cells: radix.saturating_pow(p.width as u32),
            samples: self.samples,
            resamples: DEFAULT_RESAMPLES,
            seed,
        };
        beta_profile(&LawProvider::Empirical(emp), &p.lags, p.width)
    }
}

fn model_process(p: ProfileProcess) -> ModelProcess {
    match p {
        ProfileProcess::Upsilon => ModelProcess::Upsilon,
        ProfileProcess::V => ModelProcess::V,
        ProfileProcess::Y | ProfileProcess::X => ModelProcess::Y,
    }
}

/// Number of atoms of one coordinate, gaps capped as in the exact path.
fn atom_radix(p: ProfileProcess, model: &Model, opts: ExactOptions) -> u64 {
    let m = model.alphabet.len() as u64;
    let g = opts.gap_cap as u64 + 1;
    match p {
        ProfileProcess::X | ProfileProcess::Y => m,
        ProfileProcess::V => 2 * g,
        ProfileProcess::Upsilon => 2 * g * m,
    }
}

fn atom_code(p: ProfileProcess, a: &UpsilonAtom, model: &Model, opts: ExactOptions) -> u64 {
    let m = model.alphabet.len() as u64;
    let g = opts.gap_cap as u64 + 1;
    let letter = a.v.letter.index() as u64; // M = 0, I = 1
    let gap = a.v.gap.min(g) - 1;
    match p {
        ProfileProcess::Upsilon => (letter * g + gap) * m + a.y as u64,
        ProfileProcess::V => letter * g + gap,
        ProfileProcess::Y | ProfileProcess::X => a.y as u64,
    }
}

fn join(v: &[i64]) -> String {
    v.iter().map(i64::to_string).collect::<Vec<_>>().join("-")
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Runs every suite of the config and writes the artifacts.
///
/// Artifacts: `checks.csv`, `profiles.csv`, `dists/*.csv`,
/// `summability_w*.csv` and `summary.txt`. All CSV files are byte-identical
/// for identical config and seed.
pub fn run(config_text: &str, overrides: &Overrides) -> Result<RunOutcome> {
    let started = Instant::now();
    let cfg = ExperimentConfig::parse(config_text)?;
    let seed = Seed(overrides.seed.unwrap_or(cfg.raw.params.seed));
    let samples = overrides.samples.unwrap_or(cfg.raw.params.samples);
    if samples < 2 {
        return Err(Error::InvalidArgument("--samples must be at least 2".into()));
    }
    let out_dir = overrides
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.raw.params.out_dir));
    let job = Job {
        cfg: &cfg,
        seed,
        samples,
    };
    let mut all = Artifacts::default();
    for &suite in &cfg.suites {
        let a = job.run(suite).map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::InvalidArgument(format!("suite {}: {other}", suite.name())),
        })?;
        all.reports.extend(a.reports);
        all.profiles.extend(a.profiles);
        all.dists.extend(a.dists);
        all.tables.extend(a.tables);
    }

    fs::create_dir_all(out_dir.join("dists"))?;
    let mut checks = format!("{}\n", CheckReport::CSV_HEADER);
    for r in &all.reports {
        checks.push_str(&r.csv_row());
        checks.push('\n');
    }
    write(&out_dir.join("checks.csv"), &checks)?;
    let mut profiles = String::from("process,lag,value,se,method,width\n");
    for (label, p) in &all.profiles {
        p.write_rows(&mut profiles, Some(label));
    }
    write(&out_dir.join("profiles.csv"), &profiles)?;
    for (name, csv) in &all.dists {
        write(&out_dir.join("dists").join(format!("{name}.csv")), csv)?;
    }
    for (name, csv) in &all.tables {
        write(&out_dir.join(name), csv)?;
    }

    let outcome = RunOutcome {
        reports: all.reports,
        out_dir: out_dir.clone(),
    };
    let digest: String = Sha256::digest(config_text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let mut summary = String::new();
    let _ = writeln!(summary, "{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let _ = writeln!(summary, "config_sha256 {digest}");
    let _ = writeln!(summary, "seed {}", seed.0);
    let _ = writeln!(summary, "samples {samples}");
    let _ = writeln!(summary, "mode {}", cfg.raw.params.mode);
    let _ = writeln!(summary, "measure {}", cfg.measure);
    let names: Vec<&str> = cfg.suites.iter().map(|s| s.name()).collect();
    let _ = writeln!(summary, "suites {}", names.join(","));
    let count = |s: Status| outcome.reports.iter().filter(|r| r.status == s).count();
    let _ = writeln!(
        summary,
        "checks pass={} fail={} inconclusive={}",
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Inconclusive)
    );
    let _ = writeln!(summary, "wall_seconds {:.3}", started.elapsed().as_secs_f64());
    summary.push('\n');
    for r in &outcome.reports {
        summary.push_str(&r.text_block());
    }
    write(&out_dir.join("summary.txt"), &summary)?;
    Ok(outcome)
}

/// Reads the config file and runs it.
pub fn run_file(path: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    run(&text, overrides)
}
