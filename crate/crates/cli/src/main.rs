mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use gapkit::clarknum::{band, middle_third_bounds, theta_derivative_profile, ClarkConfig, KreinInner};
use gapkit::density::{self, Method};
use gapkit::energy::{energy_condition_report_with, total_energy, SeriesVerdict};
use gapkit::fekete::fekete_optimize_with;
use gapkit::gapnum::{estimate_gap_characteristic, linear_grid, sigma_min_sweep_with};
use gapkit::partitions::{greedy_partition, is_admissible_partition, shortness};
use gapkit::regularize::{regularize_gaps, spread_points};
use gapkit::seqcore::generate;
use gapkit::{GapError, Interval, Partition, PointSequence, SequenceLaw};

use config::Settings;

#[derive(Parser, Debug)]
#[command(name = "gapkit", version, about = "Spectral gaps, densities and log-energies of discrete sequences")]
struct Cli {
    /// Settings file (`key = value` lines); defaults to $GAPKIT_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override a setting, `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output path for the JSON report (stdout if absent).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Plot-ready CSV alongside the report.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct SeqArgs {
    /// A law (`lattice:1`, `perturbed:1,0.3`, `lacunary:2`, `poisson:1`) or a file of points.
    #[arg(long)]
    seq: String,
    /// Truncation window `lo,hi`.
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Materialize a sequence law as a point file.
    Gen {
        #[arg(long)]
        spec: String,
        #[arg(long, allow_hyphen_values = true)]
        window: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Total energy and, given a partition, the energy-condition series.
    Energy {
        #[command(flatten)]
        seq: SeqArgs,
        /// Greedy monotone partition at this density.
        #[arg(long, conflicts_with = "partition")]
        density: Option<f64>,
        /// Breakpoint file, one per line, containing 0.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        include_endpoints: bool,
    },
    /// Greedy density partition with shortness and validity checks.
    Partition {
        #[command(flatten)]
        seq: SeqArgs,
        #[arg(long)]
        density: f64,
        /// Drop the growth requirement on interval lengths.
        #[arg(long)]
        non_monotone: bool,
    },
    /// Density estimates (`d1`, `d2`, `d3`, `d4`, `bm` or `all`).
    Density {
        #[command(flatten)]
        seq: SeqArgs,
        #[arg(long, default_value = "all")]
        method: String,
    },
    /// Move the points inside an interval apart to spacing C.
    Spread {
        #[command(flatten)]
        seq: SeqArgs,
        #[arg(long, allow_hyphen_values = true)]
        interval: String,
        #[arg(short = 'c', long = "spacing")]
        c: f64,
    },
    /// Fill gaps longer than C.
    Regularize {
        #[command(flatten)]
        seq: SeqArgs,
        #[arg(short = 'c', long = "spacing")]
        c: f64,
    },
    /// Energy-maximizing k-point configuration on an interval.
    Fekete {
        #[arg(short)]
        k: usize,
        #[arg(long, allow_hyphen_values = true, default_value = "-1,1")]
        interval: String,
    },
    /// Gap-characteristic certificate, or a plain Gram sweep with --sweep.
    Gap {
        #[command(flatten)]
        seq: SeqArgs,
        /// `lo,hi,steps` sweep of sigma_min over the sequence points.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Residue weights and |θ'| profile of the Krein-shift inner function.
    Clark {
        #[command(flatten)]
        seq: SeqArgs,
        #[arg(long = "R")]
        radius: Option<f64>,
        /// Only gaps with midpoint in `lo,hi` get weights.
        #[arg(long, allow_hyphen_values = true)]
        targets: Option<String>,
        /// `lo,hi,steps` profile grid.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long)]
        profile_csv: Option<PathBuf>,
    },
    /// Energy, all density estimates and the gap certificate in one report.
    Report {
        #[command(flatten)]
        seq: SeqArgs,
    },
}

/// A subcommand's product: the report body, an optional CSV table, and
/// whether the outcome is conclusive.
struct Outcome {
    result: Value,
    csv: Option<Table>,
    extra_csv: Option<(PathBuf, Table)>,
    conclusive: bool,
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Table { header, rows: vec![] }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> gapkit::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn pair(s: &str, what: &str) -> gapkit::Result<(f64, f64)> {
    let v: Vec<&str> = s.split(',').collect();
    match v.as_slice() {
        [a, b] => match (a.trim().parse(), b.trim().parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(GapError::Parameter(format!("{what} {s:?} is not lo,hi"))),
        },
        _ => Err(GapError::Parameter(format!("{what} {s:?} is not lo,hi"))),
    }
}

fn interval(s: &str, what: &str) -> gapkit::Result<Interval> {
    let (a, b) = pair(s, what)?;
    Interval::new(a, b)
}

fn grid_spec(s: &str) -> gapkit::Result<(f64, f64, usize)> {
    let v: Vec<&str> = s.split(',').collect();
    if let [a, b, n] = v.as_slice() {
        if let (Ok(a), Ok(b), Ok(n)) = (a.trim().parse(), b.trim().parse(), n.trim().parse()) {
            return Ok((a, b, n));
        }
    }
    Err(GapError::Parameter(format!("grid {s:?} is not lo,hi,steps")))
}

fn load_seq(args: &SeqArgs, settings: &Settings) -> gapkit::Result<PointSequence> {
    let window = args.window.as_deref().map(|w| interval(w, "window")).transpose()?;
    let path = Path::new(&args.seq);
    if path.is_file() {
        return PointSequence::read_file(path, window);
    }
    let law: SequenceLaw = args.seq.parse()?;
    let window = window.ok_or_else(|| GapError::Parameter("a sequence law needs --window".into()))?;
    generate(&law, window, Some(args.seed.map_or_else(|| settings.seed(), Ok)?))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn read_breakpoints(path: &Path) -> gapkit::Result<Partition> {
    let text = std::fs::read_to_string(path)?;
    let mut v = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        v.push(t.parse().map_err(|_| GapError::Parse { line: i + 1, msg: format!("not a decimal real: {t:?}") })?);
    }
    Partition::new(v)
}

fn run_command(cmd: &Command, settings: &Settings, output: Option<&Path>) -> gapkit::Result<Outcome> {
    let plain = |result: Value| Outcome { result, csv: None, extra_csv: None, conclusive: true };
    match cmd {
        Command::Gen { spec, window, seed } => {
            let law: SequenceLaw = spec.parse()?;
            let seq = generate(&law, interval(window, "window")?, Some(seed.map_or_else(|| settings.seed(), Ok)?))?;
            match output {
                Some(p) => seq.write_text(BufWriter::new(File::create(p)?))?,
                None => seq.write_text(std::io::stdout().lock())?,
            }
            Ok(Outcome { result: Value::Null, csv: None, extra_csv: None, conclusive: true })
        }
        Command::Energy { seq, density, partition, include_endpoints } => {
            let s = load_seq(seq, settings)?;
            let total = total_energy(&s)?;
            let part = match (density, partition) {
                (Some(d), _) => Some(greedy_partition(&s, *d, true)?),
                (_, Some(p)) => Some(read_breakpoints(p)?),
                _ => None,
            };
            let Some(part) = part else {
                return Ok(plain(json!({ "points": s.len(), "total_energy": total })));
            };
            let rep = energy_condition_report_with(&s, &part, *include_endpoints, &settings.tail()?)?;
            let mut t = Table::new(vec!["index", "a", "b", "count", "energy", "summand", "partial_sum"]);
            for (r, ps) in rep.records.iter().zip(&rep.partial_sums) {
                t.push(vec![
                    r.index.to_string(),
                    r.interval.a.to_string(),
                    r.interval.b.to_string(),
                    r.count.to_string(),
                    r.energy.to_string(),
                    r.summand.to_string(),
                    ps.to_string(),
                ]);
            }
            let conclusive = rep.verdict() != SeriesVerdict::Inconclusive;
            Ok(Outcome {
                result: json!({ "points": s.len(), "total_energy": total, "condition": to_value(&rep) }),
                csv: Some(t),
                extra_csv: None,
                conclusive,
            })
        }
        Command::Partition { seq, density, non_monotone } => {
            let s = load_seq(seq, settings)?;
            let part = greedy_partition(&s, *density, !non_monotone)?;
            let short = shortness(&part);
            let validity = is_admissible_partition(&part);
            let mut t = Table::new(vec!["index", "a", "b", "count", "term"]);
            for (ii, term) in part.intervals().iter().zip(&short.terms) {
                t.push(vec![
                    ii.index.to_string(),
                    ii.interval.a.to_string(),
                    ii.interval.b.to_string(),
                    s.count_in(&ii.interval).to_string(),
                    term.to_string(),
                ]);
            }
            Ok(Outcome {
                result: json!({ "density": density, "partition": to_value(&part), "shortness": to_value(&short), "validity": to_value(&validity) }),
                csv: Some(t),
                extra_csv: None,
                conclusive: validity.valid,
            })
        }
        Command::Density { seq, method } => {
            let s = load_seq(seq, settings)?;
            let cfg = settings.density()?;
            let methods: Vec<Method> = if method == "all" {
                vec![Method::D1, Method::D2, Method::D3, Method::D4, Method::Bm]
            } else {
                vec![method.parse().map_err(GapError::Parameter)?]
            };
            let ests: Vec<_> = methods.iter().map(|&m| density::estimate(&s, m, &cfg)).collect();
            let mut t = Table::new(vec!["method", "value", "verified"]);
            for e in &ests {
                t.push(vec![to_value(&e.method).as_str().unwrap_or_default().to_string(), e.value.to_string(), e.verified.to_string()]);
            }
            Ok(Outcome { result: json!({ "estimates": to_value(&ests) }), csv: Some(t), extra_csv: None, conclusive: true })
        }
        Command::Spread { seq, interval: j, c } => {
            let s = load_seq(seq, settings)?;
            let out = spread_points(&s, &interval(j, "interval")?, *c)?;
            let mut t = Table::new(vec!["x"]);
            out.gamma.points().iter().for_each(|x| t.push(vec![x.to_string()]));
            Ok(Outcome { result: to_value(&out), csv: Some(t), extra_csv: None, conclusive: true })
        }
        Command::Regularize { seq, c } => {
            let s = load_seq(seq, settings)?;
            let out = regularize_gaps(&s, *c)?;
            let added_bm = if out.added.is_empty() { None } else { Some(density::bm_density_with(&out.added, &settings.density()?)) };
            let mut t = Table::new(vec!["x", "inserted"]);
            for x in out.gamma.points() {
                let ins = out.added.points().binary_search_by(|p| p.total_cmp(x)).is_ok();
                t.push(vec![x.to_string(), ins.to_string()]);
            }
            Ok(Outcome {
                result: json!({ "outcome": to_value(&out), "added_bm_density": to_value(&added_bm) }),
                csv: Some(t),
                extra_csv: None,
                conclusive: true,
            })
        }
        Command::Fekete { k, interval: iv } => {
            let r = fekete_optimize_with(*k, &interval(iv, "interval")?, &settings.fekete()?)?;
            let mut t = Table::new(vec!["x", "jacobi"]);
            for (x, p) in r.points.iter().zip(&r.jacobi_prediction) {
                t.push(vec![x.to_string(), p.to_string()]);
            }
            let conclusive = r.converged;
            Ok(Outcome { result: to_value(&r), csv: Some(t), extra_csv: None, conclusive })
        }
        Command::Gap { seq, sweep } => {
            let s = load_seq(seq, settings)?;
            let gcfg = settings.gap()?;
            let mut t = Table::new(vec!["a", "sigma_min"]);
            if let Some(sw) = sweep {
                let (a0, a1, n) = grid_spec(sw)?;
                let res = sigma_min_sweep_with(s.points(), &linear_grid(a0, a1, n)?, &gcfg.knee)?;
                res.curve.iter().for_each(|(a, v)| t.push(vec![a.to_string(), v.to_string()]));
                let conclusive = res.monotone_violations == 0;
                return Ok(Outcome { result: to_value(&res), csv: Some(t), extra_csv: None, conclusive });
            }
            let cert = estimate_gap_characteristic(&s, &gcfg)?;
            if let Some(sw) = &cert.sweep {
                sw.curve.iter().for_each(|(a, v)| t.push(vec![a.to_string(), v.to_string()]));
            }
            let conclusive = cert.verdict != SeriesVerdict::Inconclusive;
            Ok(Outcome { result: to_value(&cert), csv: Some(t), extra_csv: None, conclusive })
        }
        Command::Clark { seq, radius, targets, grid, profile_csv } => {
            let s = load_seq(seq, settings)?;
            let mut cfg: ClarkConfig = settings.clark()?;
            if let Some(r) = radius {
                cfg.radius = *r;
            }
            cfg.targets = targets.as_deref().map(|t| interval(t, "targets")).transpose()?;
            let inner = KreinInner::new(s.points(), cfg)?;
            let mut t = Table::new(vec!["n", "a_n", "delta_n", "beta_n", "tail_bound"]);
            for w in &inner.weights {
                t.push(vec![w.n.to_string(), w.a.to_string(), w.delta.to_string(), w.beta.to_string(), w.tail_bound.to_string()]);
            }
            let profile = match grid {
                Some(g) => {
                    let (a, b, n) = grid_spec(g)?;
                    if n < 2 || a.is_nan() || b.is_nan() || b <= a {
                        return Err(GapError::Parameter("profile grid needs lo < hi and at least 2 steps".into()));
                    }
                    let xs: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
                    Some(theta_derivative_profile(&inner, &xs))
                }
                None => None,
            };
            let extra_csv = match (&profile, profile_csv) {
                (Some(p), Some(path)) => {
                    let mut pt = Table::new(vec!["x", "beta_branch", "exact"]);
                    p.iter().for_each(|q| pt.push(vec![q.x.to_string(), q.beta_branch.to_string(), q.exact.to_string()]));
                    Some((path.clone(), pt))
                }
                _ => None,
            };
            let thirds = middle_third_bounds(&inner, 9);
            Ok(Outcome {
                result: json!({
                    "cap": inner.cap,
                    "weights": to_value(&inner.weights),
                    "band": to_value(&band(&inner.weights)),
                    "middle_thirds": { "short_gaps": to_value(&thirds.short_gaps), "long_gaps": to_value(&thirds.long_gaps) },
                    "profile": to_value(&profile),
                }),
                csv: Some(t),
                extra_csv,
                conclusive: true,
            })
        }
        Command::Report { seq } => {
            let s = load_seq(seq, settings)?;
            let dcfg = settings.density()?;
            let ests: Vec<_> = [Method::D1, Method::D2, Method::D3, Method::D4, Method::Bm]
                .iter()
                .map(|&m| density::estimate(&s, m, &dcfg))
                .collect();
            let cert = estimate_gap_characteristic(&s, &settings.gap()?)?;
            let energy = match &cert.partition {
                Some(p) => Some(energy_condition_report_with(&s, p, false, &settings.tail()?)?),
                None => None,
            };
            let mut t = Table::new(vec!["quantity", "value"]);
            for e in &ests {
                t.push(vec![to_value(&e.method).as_str().unwrap_or_default().to_string(), e.value.to_string()]);
            }
            t.push(vec!["c_estimate".into(), cert.c_estimate.to_string()]);
            t.push(vec!["g_estimate".into(), cert.g_estimate.to_string()]);
            let conclusive = cert.verdict != SeriesVerdict::Inconclusive;
            Ok(Outcome {
                result: json!({
                    "points": s.len(),
                    "window": to_value(&s.window()),
                    "total_energy": total_energy(&s)?,
                    "densities": to_value(&ests),
                    "certificate": to_value(&cert),
                    "energy_condition": energy.map(|e| json!({ "verdict": to_value(&e.verdict()), "total": e.total(), "tail": to_value(&e.tail) })),
                }),
                csv: Some(t),
                extra_csv: None,
                conclusive,
            })
        }
    }
}

fn exit_for(e: &GapError) -> u8 {
    match e {
        GapError::Infeasible(_) | GapError::PostCondition(_) => 3,
        _ => 2,
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Gen { .. } => "gen",
        Command::Energy { .. } => "energy",
        Command::Partition { .. } => "partition",
        Command::Density { .. } => "density",
        Command::Spread { .. } => "spread",
        Command::Regularize { .. } => "regularize",
        Command::Fekete { .. } => "fekete",
        Command::Gap { .. } => "gap",
        Command::Clark { .. } => "clark",
        Command::Report { .. } => "report",
    }
}

fn settings_for(cli: &Cli) -> gapkit::Result<Settings> {
    let mut s = Settings::defaults();
    let path = cli.config.clone().or_else(|| std::env::var_os("GAPKIT_CONFIG").map(PathBuf::from));
    if let Some(p) = path {
        s.load(&p)?;
    }
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| GapError::Parameter(format!("--set {kv:?} is not key=value")))?;
        s.set(k.trim(), v)?;
    }
    if let Some(t) = cli.threads {
        s.set("threads", &t.to_string())?;
    }
    Ok(s)
}

fn emit(path: Option<&Path>, doc: &Value) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("json values serialize");
    match path {
        Some(p) => std::fs::write(p, text + "\n"),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let settings = match settings_for(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("gapkit: {e}");
            return ExitCode::from(2);
        }
    };
    let threads = settings.u("threads").unwrap_or(0);
    if threads > 0 {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let name = command_name(&cli.command);
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut doc = json!({
        "command": name,
        "invocation": std::env::args().collect::<Vec<_>>(),
        "config": settings.map(),
        "timestamp": timestamp,
    });
    let outcome = run_command(&cli.command, &settings, cli.output.as_deref());
    let code = match outcome {
        Ok(_) if matches!(cli.command, Command::Gen { .. }) => return ExitCode::SUCCESS,
        Ok(o) => {
            if let (Some(path), Some(t)) = (&cli.csv, &o.csv) {
                if let Err(e) = t.write(path) {
                    eprintln!("gapkit: {e}");
                    return ExitCode::from(2);
                }
            }
            if let Some((path, t)) = &o.extra_csv {
                if let Err(e) = t.write(path) {
                    eprintln!("gapkit: {e}");
                    return ExitCode::from(2);
                }
            }
            doc["status"] = json!(if o.conclusive { "ok" } else { "inconclusive" });
            doc["result"] = o.result;
            if o.conclusive {
                0
            } else {
                3
            }
        }
        Err(e) => {
            let code = exit_for(&e);
            eprintln!("gapkit: {e}");
            if code == 2 {
                return ExitCode::from(2);
            }
            doc["status"] = json!("infeasible");
            doc["error"] = json!(e.to_string());
            code
        }
    };
    if let Err(e) = emit(cli.output.as_deref(), &doc) {
        eprintln!("gapkit: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}
