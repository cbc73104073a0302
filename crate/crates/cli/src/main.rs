//! `hcm`: command-line front end for the hidden community toolkit.
//!
//! Every file written embeds a `# {json}` header with the build tag, seed
//! and full configuration. Indices in user-facing output are 1-based.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hidden_community::cleanup::{clean_up_instance, symdiff_sorted, CleanupConfig, DEFAULT_DELTA};
use hidden_community::estimators::{LocalOptions, Method, DEFAULT_BUDGET};
use hidden_community::harness::{self, SweepConfig, SweepHeader};
use hidden_community::model::{self, read_instance, sample_instance_seeded, write_edge_list, write_instance};
use hidden_community::thresholds::ThresholdReport;
use hidden_community::{DiagMode, DistPair, Error, BUILD_TAG};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "hcm", version, about = "Hidden community model: thresholds, recovery and Monte Carlo sweeps")]
struct Cli {
    /// Worker threads (defaults to HCM_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Diag {
    Zero,
    Informative,
}

impl From<Diag> for DiagMode {
    fn from(d: Diag) -> Self {
        match d {
            Diag::Zero => DiagMode::Zero,
            Diag::Informative => DiagMode::Informative,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exhaustive,
    Local,
    Degree,
    Cleanup,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Exhaustive => Method::Exhaustive,
            MethodArg::Local => Method::Local,
            MethodArg::Degree => Method::Degree,
            MethodArg::Cleanup => Method::Cleanup,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample an instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// Pair as JSON, e.g. '{"kind":"gaussian","mu":1.0}', or a path to a JSON file.
        #[arg(long)]
        pair: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "zero")]
        diag: Diag,
        #[arg(long)]
        out: PathBuf,
        /// Also write a Bernoulli edge list.
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Estimate the community of an instance file.
    Recover {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Community size; defaults to the instance's K.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        /// Weak step for cleanup.
        #[arg(long, value_enum, default_value = "degree")]
        weak: MethodArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Threshold ratios and verdicts. Lists (`a,b,c` or `from:to:step`) give CSV.
    Thresholds {
        #[arg(long)]
        n: String,
        #[arg(long)]
        k: String,
        #[arg(long)]
        pair: String,
        #[arg(long, value_enum, default_value = "zero")]
        diag: Diag,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a phase-diagram sweep described by a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo check of the tail bounds for a sum of LLRs.
    CheckBounds {
        #[arg(long)]
        pair: String,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    match harness::install(threads, move || run(cli.cmd)) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) | Err(e) => {
            eprintln!("hcm: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn parse_pair(arg: &str) -> Result<DistPair, Error> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg)?
    };
    Ok(serde_json::from_str(&text)?)
}

/// `a,b,c` or `from:to:step` (inclusive).
fn parse_list(arg: &str) -> Result<Vec<usize>, Error> {
    let bad = || Error::Config(format!("cannot parse list {arg:?}"));
    let mut out = Vec::new();
    for part in arg.split(',') {
        let part = part.trim();
        if let Some((a, rest)) = part.split_once(':') {
            let (b, step) = rest.split_once(':').unwrap_or((rest, "1"));
            let (a, b, step): (usize, usize, usize) = (
                a.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
                step.parse().map_err(|_| bad())?,
            );
            if step == 0 || a > b {
                return Err(bad());
            }
            out.extend((a..=b).step_by(step));
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

fn write_json<T: Serialize>(value: &T, mut w: impl Write) -> Result<(), Error> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cmd: Cmd) -> Result<ExitCode, Error> {
    match cmd {
        Cmd::Gen {
            n,
            k,
            pair,
            seed,
            diag,
            out,
            edges,
        } => {
            let pair = parse_pair(&pair)?;
            let inst = sample_instance_seeded(n, k, &pair, seed, diag.into())?;
            let mut w = create(&out)?;
            write_instance(&inst, &mut w)?;
            w.flush()?;
            if let Some(path) = edges {
                let mut w = create(&path)?;
                write_edge_list(&inst, &mut w)?;
                w.flush()?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Recover {
            instance,
            method,
            k,
            delta,
            weak,
            seed,
            restarts,
            budget,
            out,
        } => {
            let inst = read_instance(BufReader::new(File::open(&instance)?))?;
            let k = k.unwrap_or(inst.k);
            let method: Method = method.into();
            let local = LocalOptions {
                restarts,
                ..LocalOptions::default()
            };
            let config = json!({
                "instance": instance.display().to_string(),
                "method": method,
                "K": k,
                "delta": delta,
                "weak": Method::from(weak),
                "restarts": restarts,
                "budget": budget,
            });
            let (estimate, blocks) = if method == Method::Cleanup {
                let cfg = CleanupConfig {
                    delta,
                    weak_method: weak.into(),
                    partition_seed: seed,
                    budget,
                    local,
                };
                let outcome = clean_up_instance(&inst, k, &cfg)?;
                let blocks: Vec<_> = outcome
                    .blocks
                    .iter()
                    .map(|b| {
                        json!({
                            "withheld": one_based(&b.withheld),
                            "weak_estimate": one_based(&b.weak_estimate),
                            "symdiff": b.symdiff,
                        })
                    })
                    .collect();
                let diag = json!({
                    "rounded": outcome.rounded,
                    "weak_target": outcome.weak_target,
                    "vote_threshold": outcome.vote_threshold,
                    "blocks": blocks,
                });
                (outcome.estimate, Some(diag))
            } else {
                let lmat = model::llr_matrix(&inst)?;
                let spec = harness::EstimatorSpec {
                    local,
                    budget,
                    ..harness::EstimatorSpec::new(method)
                };
                (spec.estimate(&lmat, k, seed)?, None)
            };
            let symdiff = symdiff_sorted(&estimate.community, &inst.community);
            let report = json!({
                "build": BUILD_TAG,
                "seed": seed,
                "config": config,
                "method": estimate.method,
                "community": one_based(&estimate.community),
                "score": estimate.score,
                "iterations": estimate.iterations,
                "truth": one_based(&inst.community),
                "symdiff": symdiff,
                "hamming_frac": symdiff as f64 / inst.k as f64,
                "exact": symdiff == 0,
                "cleanup": blocks,
            });
            write_json(&report, sink(&out)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Thresholds { n, k, pair, diag, out } => {
            let pair = parse_pair(&pair)?;
            let (ns, ks) = (parse_list(&n)?, parse_list(&k)?);
            let diag: DiagMode = diag.into();
            let mut w = sink(&out)?;
            if ns.len() == 1 && ks.len() == 1 {
                let report = ThresholdReport::evaluate(ns[0], ks[0], &pair, diag)?;
                let doc = json!({
                    "build": BUILD_TAG,
                    "pair": pair,
                    "report": report,
                });
                write_json(&doc, w)?;
            } else {
                let header = json!({
                    "format": "hcm-thresholds/1",
                    "build": BUILD_TAG,
                    "config": {"n": ns, "K": ks, "pair": pair, "diag_mode": diag},
                });
                writeln!(w, "# {header}")?;
                write_threshold_csv(&ns, &ks, &pair, diag, &mut w)?;
                w.flush()?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sweep { config, out } => {
            let cfg: SweepConfig = serde_json::from_reader(BufReader::new(File::open(&config)?))?;
            let rows = harness::phase_diagram(&cfg, |row, secs| {
                let status = row.error.as_deref().unwrap_or("ok");
                eprintln!(
                    "point {} n={} x1={} x2={:?}: {status} ({secs:.2}s)",
                    row.point, row.n, row.x1, row.x2
                );
            })?;
            let mut w = create(&out)?;
            harness::write_sweep_csv(&SweepHeader::new(&cfg), &rows, &mut w)?;
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::CheckBounds {
            pair,
            n,
            gamma,
            delta,
            reps,
            seed,
            out,
        } => {
            let pair = parse_pair(&pair)?;
            let report = harness::verify_bounds(&pair, n, gamma, delta, reps, seed)?;
            let doc = json!({ "build": BUILD_TAG, "seed": seed, "report": report });
            write_json(&doc, sink(&out)?)?;
            Ok(if report.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("hcm: bound check failed");
                ExitCode::from(2)
            })
        }
    }
}

#[derive(Serialize)]
struct ThresholdRow {
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    kd: Option<f64>,
    weak_ratio: Option<f64>,
    gamma: Option<f64>,
    exact_ratio: Option<f64>,
    chernoff_index: Option<f64>,
    weak_verdict: Option<String>,
    exact_verdict: Option<String>,
    tau_star: Option<f64>,
    mu_plus_sq: Option<f64>,
    error: Option<String>,
}

fn write_threshold_csv(ns: &[usize], ks: &[usize], pair: &DistPair, diag: DiagMode, w: &mut dyn Write) -> Result<(), Error> {
    let mut csv = csv::Writer::from_writer(w);
    for &n in ns {
        for &k in ks {
            let row = match ThresholdReport::evaluate(n, k, pair, diag) {
                Ok(r) => ThresholdRow {
                    n,
                    k,
                    kd: Some(r.kd),
                    weak_ratio: Some(r.weak_ratio),
                    gamma: Some(r.gamma),
                    exact_ratio: Some(r.exact_ratio),
                    chernoff_index: Some(r.chernoff_index),
                    weak_verdict: Some(verdict_str(&r.verdicts.weak)?),
                    exact_verdict: Some(verdict_str(&r.verdicts.exact)?),
                    tau_star: r.extras.tau_star,
                    mu_plus_sq: r.extras.mu_plus_sq,
                    error: None,
                },
                Err(e) => ThresholdRow {
                    n,
                    k,
                    kd: None,
                    weak_ratio: None,
                    gamma: None,
                    exact_ratio: None,
                    chernoff_index: None,
                    weak_verdict: None,
                    exact_verdict: None,
                    tau_star: None,
                    mu_plus_sq: None,
                    error: Some(e.to_string()),
                },
            };
            csv.serialize(row)?;
        }
    }
    csv.flush()?;
    Ok(())
}

fn verdict_str<T: Serialize>(v: &T) -> Result<String, Error> {
    Ok(serde_json::to_value(v)?.as_str().unwrap_or_default().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("5").unwrap(), vec![5]);
        assert_eq!(parse_list("1,4, 9").unwrap(), vec![1, 4, 9]);
        assert_eq!(parse_list("10:30:10").unwrap(), vec![10, 20, 30]);
        assert_eq!(parse_list("2:4").unwrap(), vec![2, 3, 4]);
        assert!(parse_list("3:1").is_err());
        assert!(parse_list("x").is_err());
    }

    #[test]
    fn pair_parsing() {
        assert!(parse_pair(r#"{"kind":"gaussian","mu":1.5}"#).is_ok());
        assert!(parse_pair(r#"{"kind":"gaussian","mu":0}"#).is_err());
    }

    fn exec(args: &[&str]) -> Result<ExitCode, Error> {
        let cli = Cli::try_parse_from(std::iter::once("hcm").chain(args.iter().copied())).expect("arguments parse");
        run(cli.cmd)
    }

    fn read_json(path: &Path) -> serde_json::Value {
        serde_json::from_reader(BufReader::new(File::open(path).unwrap())).unwrap()
    }

    #[test]
    fn gen_then_recover_finds_a_strong_community() {
        let dir = tempfile::tempdir().unwrap();
        let inst = dir.path().join("inst.csv");
        let inst_s = inst.to_str().unwrap();
        exec(&["gen", "--n", "30", "--k", "6", "--pair", r#"{"kind":"gaussian","mu":4.0}"#, "--seed", "1", "--out", inst_s])
            .unwrap();
        for method in ["exhaustive", "local", "degree", "cleanup"] {
            let out = dir.path().join(format!("{method}.json"));
            exec(&["recover", "--instance", inst_s, "--method", method, "--out", out.to_str().unwrap()]).unwrap();
            let doc = read_json(&out);
            assert_eq!(doc["method"], method);
            assert_eq!(doc["community"], doc["truth"], "{method}");
            assert_eq!(doc["exact"], true);
            let first = doc["community"][0].as_u64().unwrap();
            assert!(first >= 1, "indices are 1-based");
            assert_eq!(doc["cleanup"].is_null(), method != "cleanup");
        }
    }

    #[test]
    fn edge_list_only_for_bernoulli() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("g.csv");
        let edges = dir.path().join("g.edges");
        let gauss = exec(&[
            "gen", "--n", "8", "--k", "3", "--pair", r#"{"kind":"gaussian","mu":1.0}"#,
            "--out", out.to_str().unwrap(), "--edges", edges.to_str().unwrap(),
        ]);
        assert!(gauss.is_err());
        exec(&[
            "gen", "--n", "8", "--k", "3", "--pair", r#"{"kind":"bernoulli","p":0.9,"q":0.1}"#,
            "--out", out.to_str().unwrap(), "--edges", edges.to_str().unwrap(),
        ])
        .unwrap();
        assert!(std::fs::metadata(&edges).unwrap().len() > 0);
    }

    #[test]
    fn thresholds_single_point_and_grid() {
        let dir = tempfile::tempdir().unwrap();
        let single = dir.path().join("t.json");
        let pair = r#"{"kind":"gaussian","mu":1.0}"#;
        exec(&["thresholds", "--n", "10000", "--k", "100", "--pair", pair, "--out", single.to_str().unwrap()]).unwrap();
        let doc = read_json(&single);
        assert!(doc["report"]["exact_ratio"].as_f64().unwrap() > 0.0);
        let grid = dir.path().join("t.csv");
        exec(&["thresholds", "--n", "100,1000", "--k", "5:15:5", "--pair", pair, "--out", grid.to_str().unwrap()]).unwrap();
        let text = std::fs::read_to_string(&grid).unwrap();
        assert!(text.starts_with("# {"));
        let rows = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, 1 + 2 * 3);
    }

    #[test]
    fn sweep_writes_a_readable_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("cfg.json");
        std::fs::write(
            &cfg,
            r#"{"pair":{"kind":"gaussian","mu":1.0},"sweep":[{"param":"mu","values":[1.0,3.0]}],
                "n":[16],"k_rule":{"fixed":4},"trials":10,"estimator":{"method":"degree"},"master_seed":3}"#,
        )
        .unwrap();
        let out = dir.path().join("s.csv");
        exec(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).unwrap();
        let (header, rows) = harness::read_sweep_csv(BufReader::new(File::open(&out).unwrap())).unwrap();
        assert_eq!(header.master_seed, 3);
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.trials == Some(10)));
    }

    #[test]
    fn unknown_sweep_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("cfg.json");
        std::fs::write(&cfg, r#"{"pair":{"kind":"gaussian","mu":1.0},"sweep":[{"param":"mu","values":[1.0]}],"n":[16],"k_rule":{"fixed":4},"trials":1,"estimator":{"method":"degree"},"master_seed":0,"typo":1}"#).unwrap();
        let out = dir.path().join("s.csv");
        assert!(exec(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).is_err());
    }

    #[test]
    fn check_bounds_reports_success() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("cb.json");
        let code = exec(&[
            "check-bounds", "--pair", r#"{"kind":"gaussian","mu":1.0}"#, "--n", "30", "--gamma", "0", "--delta", "0.4",
            "--reps", "5000", "--seed", "2", "--out", out.to_str().unwrap(),
        ])
        .unwrap();
        assert_eq!(code, ExitCode::SUCCESS);
        assert_eq!(read_json(&out)["report"]["pass"], true);
    }
}
