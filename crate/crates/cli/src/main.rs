use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use tisgm::solver::classify_phase_with_grid;
use tisgm::{
    critical_theta_with_tol, ks_scan, run_suite, s_k, Error, ModelParams, Outcome, ScalarMap,
    TreeChain, VerifyConfig,
};

mod config;

use config::{resolve, Bracket, CommonArgs, Defaults, Extra, Format, LawChoice, RunConfig};

/// Bad flags or config values; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// At least one oracle check failed; exits with status 4.
#[derive(Debug)]
struct VerificationFailed(Vec<String>);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for VerificationFailed {}

/// Critical θ failed for some k; exits with status 2 after writing the rest.
#[derive(Debug)]
struct PartialFailure(usize);

impl std::fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} critical value(s) could not be bracketed", self.0)
    }
}

impl std::error::Error for PartialFailure {}

/// Fixed points, critical temperatures and Gibbs-measure diagnostics for the
/// period-3 mixed-spin Ising model on a Cayley tree.
#[derive(Parser, Debug)]
#[command(name = "tisgm", version)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// s_k(θ) = f'(1) - 1 on a θ grid (columns theta, k, s_k).
    Stability,
    /// Root of s_k for each k (columns k, theta_c).
    Critical {
        /// Search interval LO:HI.
        #[arg(long, value_name = "LO:HI")]
        bracket: Option<Bracket>,
    },
    /// All positive fixed points with stability, per (θ, k).
    Phases,
    /// Kesten–Stigum function g_k of the disordered law (columns theta, k, lambda2, g_k, non_extremal).
    Ks,
    /// Sample trees from a fixed-point law and summarize level histograms.
    Sample {
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        trees: Option<usize>,
        /// disordered, minus, plus, or x=<fixed point>.
        #[arg(long)]
        law: Option<LawChoice>,
    },
    /// Exact finite-volume checks: compatibility, TP2, Holley, MLR, sandwich.
    Verify {
        #[arg(long)]
        depth: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Stability => "stability",
            Command::Critical { .. } => "critical",
            Command::Phases => "phases",
            Command::Ks => "ks",
            Command::Sample { .. } => "sample",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Where results go: `--out`, else `<out-dir>/<command>.<ext>`, else stdout.
fn destination(cfg: &RunConfig, out_dir: Option<&PathBuf>) -> Option<PathBuf> {
    cfg.out
        .clone()
        .or_else(|| out_dir.map(|d| d.join(format!("{}.{}", cfg.command, cfg.format.extension()))))
}

fn write_output(cfg: &RunConfig, out_dir: Option<&PathBuf>, bytes: &[u8]) -> anyhow::Result<()> {
    match destination(cfg, out_dir) {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .with_context(|| format!("creating directory {}", parent.display()))?;
            }
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).context("writing to standard output")?;
            out.flush().context("writing to standard output")
        }
    }
}

/// Comment header with the effective config, then a CSV table.
fn csv_bytes<R: Serialize>(
    cfg: &RunConfig,
    notes: &[String],
    rows: &[R],
    headers: &[&str],
) -> anyhow::Result<Vec<u8>> {
    let mut buf = cfg.header().into_bytes();
    for n in notes {
        buf.extend_from_slice(format!("# {n}\n").as_bytes());
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(buf);
    w.write_record(headers)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().context("flushing CSV")
}

fn json_bytes<R: Serialize>(cfg: &RunConfig, results: &R) -> anyhow::Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(&json!({ "config": cfg, "results": results }))?;
    buf.push(b'\n');
    Ok(buf)
}

/// Every (θ, k) pair in output order: k outer, θ inner.
fn pairs(cfg: &RunConfig) -> Vec<(f64, u32)> {
    cfg.k
        .iter()
        .flat_map(|&k| cfg.theta.iter().map(move |&t| (t, k)))
        .collect()
}

fn cmd_stability(cfg: &RunConfig, out_dir: Option<&PathBuf>) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Row {
        theta: f64,
        k: u32,
        s_k: f64,
    }
    let rows = pairs(cfg)
        .into_par_iter()
        .map(|(theta, k)| {
            Ok(Row {
                theta,
                k,
                s_k: s_k(theta, k)?,
            })
        })
        .collect::<tisgm::Result<Vec<_>>>()?;
    let bytes = match cfg.format {
        Format::Csv => csv_bytes(cfg, &[], &rows, &["theta", "k", "s_k"])?,
        Format::Json => json_bytes(cfg, &rows)?,
    };
    write_output(cfg, out_dir, &bytes)
}

fn cmd_critical(
    cfg: &RunConfig,
    bracket: Bracket,
    out_dir: Option<&PathBuf>,
) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Row {
        k: u32,
        theta_c: f64,
    }
    let results: Vec<(u32, tisgm::Result<f64>)> = cfg
        .k
        .par_iter()
        .map(|&k| {
            (
                k,
                critical_theta_with_tol(k, (bracket.0, bracket.1), cfg.tol),
            )
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results {
        match r {
            Ok(theta_c) => rows.push(Row { k, theta_c }),
            Err(e) => failures.push((k, e)),
        }
    }
    let bytes = match cfg.format {
        Format::Csv => csv_bytes(cfg, &[], &rows, &["k", "theta_c"])?,
        Format::Json => json_bytes(cfg, &rows)?,
    };
    write_output(cfg, out_dir, &bytes)?;
    if failures.is_empty() {
        return Ok(());
    }
    if let [(k, _)] = failures.as_slice() {
        let k = *k;
        let (_, e) = failures.pop().unwrap();
        return Err(anyhow::Error::from(e).context(format!("k = {k}")));
    }
    for (k, e) in &failures {
        eprintln!("k = {k}: {e}");
    }
    Err(PartialFailure(failures.len()).into())
}

fn cmd_phases(cfg: &RunConfig, out_dir: Option<&PathBuf>) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Row {
        theta: f64,
        k: u32,
        s_k: f64,
        regime: tisgm::Regime,
        count: usize,
        fixed_points: String,
    }
    let points = pairs(cfg)
        .into_par_iter()
        .map(|(theta, k)| classify_phase_with_grid(theta, k, cfg.grid))
        .collect::<tisgm::Result<Vec<_>>>()?;
    let bytes = match cfg.format {
        Format::Json => json_bytes(cfg, &points)?,
        Format::Csv => {
            let rows: Vec<Row> = points
                .iter()
                .map(|p| Row {
                    theta: p.theta,
                    k: p.k,
                    s_k: p.s_k,
                    regime: p.regime,
                    count: p.fixed_points.len(),
                    fixed_points: p
                        .fixed_points
                        .iter()
                        .map(|f| {
                            let tag = serde_json::to_value(f.stability).unwrap_or_default();
                            format!("{}:{}", f.x_star, tag.as_str().unwrap_or(""))
                        })
                        .collect::<Vec<_>>()
                        .join(";"),
                })
                .collect();
            let headers = ["theta", "k", "s_k", "regime", "count", "fixed_points"];
            csv_bytes(cfg, &[], &rows, &headers)?
        }
    };
    write_output(cfg, out_dir, &bytes)
}

fn cmd_ks(cfg: &RunConfig, out_dir: Option<&PathBuf>) -> anyhow::Result<()> {
    let mut grid = cfg.theta.clone();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    let scans = cfg
        .k
        .iter()
        .map(|&k| ks_scan(k, &grid))
        .collect::<tisgm::Result<Vec<_>>>()?;
    let bytes = match cfg.format {
        Format::Json => json_bytes(cfg, &scans)?,
        Format::Csv => {
            let notes: Vec<String> = scans
                .iter()
                .map(|s| {
                    let iv: Vec<String> = s
                        .positive_intervals
                        .iter()
                        .map(|(a, b)| format!("[{a}, {b}]"))
                        .collect();
                    let list = if iv.is_empty() {
                        "none".to_string()
                    } else {
                        iv.join(" ")
                    };
                    format!("positive g_k, k = {}: {list}", s.k)
                })
                .collect();
            let rows: Vec<_> = scans
                .iter()
                .flat_map(|s| s.reports.iter().copied())
                .collect();
            let headers = ["theta", "k", "lambda2", "g_k", "non_extremal"];
            csv_bytes(cfg, &notes, &rows, &headers)?
        }
    };
    write_output(cfg, out_dir, &bytes)
}

fn law_x(map: &ScalarMap, choice: LawChoice, grid: usize) -> anyhow::Result<f64> {
    let pts = tisgm::find_fixed_points(map, grid)?;
    let x = match choice {
        LawChoice::Disordered => 1.0,
        LawChoice::X(x) => x,
        LawChoice::Minus | LawChoice::Plus if pts.len() < 3 => {
            return Err(Error::RegimeMismatch(format!(
                "θ = {} has a single fixed point, so there is no plus or minus law",
                map.theta()
            ))
            .into())
        }
        LawChoice::Minus => pts[0].x_star,
        LawChoice::Plus => pts[pts.len() - 1].x_star,
    };
    tisgm::stability_of(x, map)?;
    Ok(x)
}

fn single<T: Copy + std::fmt::Display>(what: &str, xs: &[T]) -> anyhow::Result<T> {
    match xs {
        [x] => Ok(*x),
        _ => bail!(UsageError(format!(
            "sample takes exactly one {what}, got {}",
            xs.len()
        ))),
    }
}

fn cmd_sample(cfg: &RunConfig, extra: &Extra, out_dir: Option<&PathBuf>) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Row {
        level: usize,
        class: &'static str,
        value: f64,
        count: u64,
        fraction_mean: f64,
        fraction_se: f64,
    }
    let theta = single("θ", &cfg.theta)?;
    let k = single("k", &cfg.k)?;
    let depth = extra.depth.unwrap_or(3);
    let trees = extra.trees.unwrap_or(1000);
    if trees == 0 {
        bail!(UsageError("--trees must be at least 1".into()));
    }
    let map = ScalarMap::new(ModelParams::new(theta, k)?);
    let x = law_x(&map, extra.law.unwrap_or(LawChoice::Disordered), cfg.grid)?;
    let chain = TreeChain::new(&map.law_from_x(x), map.params())?;
    let summary = chain.summarize(depth, trees, cfg.seed)?;
    let bytes = match cfg.format {
        Format::Json => json_bytes(cfg, &json!({ "x": x, "summary": summary }))?,
        Format::Csv => {
            let mut notes = vec![format!("x = {x}"), format!("rng = {}", summary.rng)];
            let m = &summary.magnetization;
            for c in 0..3 {
                if let (Some(v), Some(se)) = (m.m[c], m.se[c]) {
                    notes.push(format!("m{c} = {v} (se {se}, {} trees)", m.samples));
                }
            }
            let rows: Vec<Row> = summary
                .levels
                .iter()
                .flat_map(|l| {
                    (0..l.spins.len()).map(move |i| Row {
                        level: l.distance,
                        class: l.level.name(),
                        value: f64::from(l.spins[i]) / 2.0,
                        count: l.counts[i],
                        fraction_mean: l.fraction_mean[i],
                        fraction_se: l.fraction_se[i],
                    })
                })
                .collect();
            let headers = [
                "level",
                "class",
                "value",
                "count",
                "fraction_mean",
                "fraction_se",
            ];
            csv_bytes(cfg, &notes, &rows, &headers)?
        }
    };
    write_output(cfg, out_dir, &bytes)
}

fn cmd_verify(cfg: &RunConfig, extra: &Extra, out_dir: Option<&PathBuf>) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        theta: f64,
        k: u32,
        check: &'a str,
        outcome: Outcome,
        worst: Option<f64>,
        detail: &'a str,
    }
    let runs = pairs(cfg)
        .into_iter()
        .map(|(theta, k)| {
            run_suite(&VerifyConfig {
                theta,
                k,
                depth: extra.depth.unwrap_or(2),
                seed: cfg.seed,
                ..VerifyConfig::default()
            })
        })
        .collect::<tisgm::Result<Vec<_>>>()?;
    let bytes = match cfg.format {
        Format::Json => json_bytes(cfg, &runs)?,
        Format::Csv => {
            let rows: Vec<Row> = runs
                .iter()
                .flat_map(|r| {
                    r.checks.iter().map(move |c| Row {
                        theta: r.config.theta,
                        k: r.config.k,
                        check: &c.name,
                        outcome: c.outcome,
                        worst: c.worst,
                        detail: &c.detail,
                    })
                })
                .collect();
            csv_bytes(
                cfg,
                &[],
                &rows,
                &["theta", "k", "check", "outcome", "worst", "detail"],
            )?
        }
    };
    write_output(cfg, out_dir, &bytes)?;
    let failed: Vec<String> = runs
        .iter()
        .flat_map(|r| {
            r.checks
                .iter()
                .filter(|c| !c.outcome.ok())
                .map(move |c| format!("{} at θ={} k={}", c.name, r.config.theta, r.config.k))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(VerificationFailed(failed).into())
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let name = cli.command.name();
    let defaults = match &cli.command {
        Command::Stability => Defaults {
            theta: config::ThetaRange {
                start: 1.0,
                stop: 2.0,
                points: 101,
            }
            .grid(),
            k: vec![2],
            format: Format::Csv,
        },
        Command::Critical { .. } => Defaults {
            theta: vec![1.0],
            k: vec![2, 3, 4, 5],
            format: Format::Csv,
        },
        Command::Phases => Defaults {
            theta: config::ThetaRange {
                start: 1.0,
                stop: 2.0,
                points: 11,
            }
            .grid(),
            k: vec![2],
            format: Format::Json,
        },
        Command::Ks => Defaults {
            theta: config::ThetaRange {
                start: 1.0,
                stop: 5.0,
                points: 400,
            }
            .grid(),
            k: vec![2, 3, 4, 5],
            format: Format::Csv,
        },
        Command::Sample { .. } => Defaults {
            theta: vec![1.6],
            k: vec![2],
            format: Format::Csv,
        },
        Command::Verify { .. } => Defaults {
            theta: vec![2.0],
            k: vec![2],
            format: Format::Csv,
        },
    };
    let (mut cfg, file) = resolve(name, &cli.common, defaults)?;
    let out_dir = cli.common.out_dir.as_ref();
    match cli.command {
        Command::Stability => cmd_stability(&cfg, out_dir),
        Command::Critical { bracket } => {
            let flags = Extra {
                bracket,
                ..Extra::default()
            };
            let fallback = Extra {
                bracket: Some(Bracket(1.0, 5.0)),
                ..Extra::default()
            };
            let extra = cfg.extra(&file, flags, fallback)?;
            cfg.theta.clear();
            cmd_critical(&cfg, extra.bracket.unwrap_or(Bracket(1.0, 5.0)), out_dir)
        }
        Command::Phases => cmd_phases(&cfg, out_dir),
        Command::Ks => cmd_ks(&cfg, out_dir),
        Command::Sample { depth, trees, law } => {
            let flags = Extra {
                depth,
                trees,
                law,
                ..Extra::default()
            };
            let fallback = Extra {
                depth: Some(3),
                trees: Some(1000),
                law: Some(LawChoice::Disordered),
                ..Extra::default()
            };
            let extra = cfg.extra(&file, flags, fallback)?;
            cmd_sample(&cfg, &extra, out_dir)
        }
        Command::Verify { depth } => {
            let flags = Extra {
                depth,
                ..Extra::default()
            };
            let fallback = Extra {
                depth: Some(2),
                ..Extra::default()
            };
            let extra = cfg.extra(&file, flags, fallback)?;
            cmd_verify(&cfg, &extra, out_dir)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return e.exit_code() as u8;
    }
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 4;
    }
    if err.downcast_ref::<PartialFailure>().is_some() {
        return 2;
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
