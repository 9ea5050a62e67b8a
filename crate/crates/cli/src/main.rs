//! `qshard` command-line front end.

mod svg;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qshard::circuit::{build_ghz, build_qft, parse_circuit, Circuit, CircuitError};
use qshard::engine::{format_bits, simulate, EngineConfig, EngineError};
use qshard::matrix::{C64, ZERO};
use qshard::rng::derive_seed;
use qshard::validate::{
    default_p_grid, dft_oracle, fidelity_pairs, heatmap, min_sdrp_series, rmse, sdrp_sweep, write_csv, EnvStamp,
    SweepRecord, ValidateError, REFERENCE_BUDGET,
};
use serde::Serialize;

use svg::Series;

#[derive(Parser)]
#[command(name = "qshard", version, about = "Factorized hybrid quantum circuit simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Base RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Dense amplitude budget.
    #[arg(long, global = true)]
    mem_budget: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    #[value(name = "csv+svg")]
    CsvSvg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Init {
    Zero,
    Ghz,
}

#[derive(Subcommand)]
enum Command {
    /// Time the QFT on |0...0> or GHZ inputs.
    QftBench {
        #[arg(long, default_value_t = 4)]
        n_min: usize,
        #[arg(long, default_value_t = 20)]
        n_max: usize,
        #[arg(long, value_enum, default_value = "zero")]
        init: Init,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// SDRP sweeps comparing estimated and exact fidelity.
    Validate {
        /// Cells as WIDTHxDEPTH, comma separated.
        #[arg(long, default_value = "6x6,12x6,12x12,15x15")]
        grid: String,
        #[arg(long, default_value_t = 100)]
        circuits: usize,
    },
    /// Smallest SDRP that fits the memory budget, per depth.
    MinSdrp {
        #[arg(long, default_value_t = 16)]
        width: usize,
        /// `a..b` (inclusive) or a comma list.
        #[arg(long, default_value = "1..10")]
        depths: String,
        #[arg(long, default_value_t = 100)]
        circuits: usize,
        #[arg(long, default_value_t = 0.025)]
        step: f64,
        /// Mean fidelity on a depth x p grid instead of the search.
        #[arg(long)]
        heatmap: bool,
        /// p values for the heat map, comma separated.
        #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
        p_values: String,
        /// Required for width 54 and above.
        #[arg(long = "i-have-80gb")]
        i_have_80gb: bool,
    },
    /// Simulate a circuit file.
    Run {
        circuit: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        sdrp: f64,
        /// Sample this many bitstrings (qubit n-1 first).
        #[arg(long, default_value_t = 0)]
        shots: usize,
        /// Write the final ket (`index re im` lines) to --out or stdout.
        #[arg(long)]
        dump_state: bool,
    },
}

#[derive(Debug)]
struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, kind: "usage", message: message.into() }
    }
    fn input(message: impl Into<String>) -> Self {
        CliError { code: 3, kind: "input", message: message.into() }
    }
    fn io(path: &Path, e: io::Error) -> Self {
        CliError { code: 5, kind: "io", message: format!("{}: {e}", path.display()) }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::OutOfMemory { .. } => CliError { code: 4, kind: "budget", message: e.to_string() },
            EngineError::Circuit(c) => c.into(),
            EngineError::Config(_) => CliError::usage(e.to_string()),
            other => CliError { code: 5, kind: "internal", message: other.to_string() },
        }
    }
}

impl From<CircuitError> for CliError {
    fn from(e: CircuitError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<ValidateError> for CliError {
    fn from(e: ValidateError) -> Self {
        match e {
            ValidateError::Engine(e) => e.into(),
            ValidateError::Circuit(c) => c.into(),
            ValidateError::Budget { .. } => CliError { code: 4, kind: "budget", message: e.to_string() },
            other => CliError { code: 5, kind: "internal", message: other.to_string() },
        }
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| CliError::usage(format!("bad {what} `{t}`"))))
        .collect()
}

fn parse_depths(s: &str) -> Result<Vec<usize>, CliError> {
    if let Some((a, b)) = s.split_once("..") {
        let bad = || CliError::usage(format!("bad depth range `{s}`"));
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a == 0 || b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let v: Vec<usize> = parse_list(s, "depth")?;
    if v.contains(&0) {
        return Err(CliError::usage("depth must be at least 1"));
    }
    Ok(v)
}

fn parse_grid(s: &str) -> Result<Vec<(usize, usize)>, CliError> {
    s.split(',')
        .map(|cell| {
            let (w, d) = cell.trim().split_once('x').ok_or_else(|| CliError::usage(format!("bad cell `{cell}`")))?;
            match (w.parse(), d.parse()) {
                (Ok(w), Ok(d)) if w > 0 && d > 0 => Ok((w, d)),
                _ => Err(CliError::usage(format!("bad cell `{cell}`"))),
            }
        })
        .collect()
}

struct Output<'a> {
    common: &'a Common,
    stamp: EnvStamp,
}

impl Output<'_> {
    fn csv<T: Serialize>(&self, rows: &[T]) -> Result<(), CliError> {
        match &self.common.out {
            Some(path) => {
                let f = File::create(path).map_err(|e| CliError::io(path, e))?;
                let mut w = BufWriter::new(f);
                write_csv(&mut w, &self.stamp, rows).map_err(|e| csv_err(path, e))?;
                w.flush().map_err(|e| CliError::io(path, e))
            }
            None => write_csv(io::stdout().lock(), &self.stamp, rows).map_err(|e| csv_err(Path::new("<stdout>"), e)),
        }
    }

    /// Writes the plot next to the CSV; failures are reported, not fatal.
    fn plot(&self, render: impl FnOnce() -> String) {
        if self.common.format != Format::CsvSvg {
            return;
        }
        let Some(out) = &self.common.out else { return };
        let path = out.with_extension("svg");
        if let Err(e) = std::fs::write(&path, render()) {
            eprintln!("warning: plot: {}: {e}", path.display());
        }
    }
}

fn csv_err(path: &Path, e: ValidateError) -> CliError {
    match e {
        ValidateError::Io(e) => CliError::io(path, e),
        other => CliError { code: 5, kind: "io", message: format!("{}: {other}", path.display()) },
    }
}

#[derive(Serialize)]
struct BenchRow {
    n: usize,
    init: &'static str,
    wall_ms: Option<f64>,
    peak_amplitudes: Option<usize>,
    /// Empty when the output was too large to check.
    verified: Option<bool>,
    max_error: Option<f64>,
    error: Option<String>,
}

fn input_amplitudes(n: usize, init: Init) -> Vec<C64> {
    let mut v = vec![ZERO; 1 << n];
    match init {
        Init::Zero => v[0] = C64::new(1.0, 0.0),
        Init::Ghz => {
            let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            v[0] = a;
            v[(1 << n) - 1] = a;
        }
    }
    v
}

fn bench_row(n: usize, init: Init, repeats: usize, cfg: &EngineConfig) -> BenchRow {
    let name = match init {
        Init::Zero => "zero",
        Init::Ghz => "ghz",
    };
    let mut row = BenchRow { n, init: name, wall_ms: None, peak_amplitudes: None, verified: None, max_error: None, error: None };
    let mut c = match init {
        Init::Zero => Circuit::new(n),
        Init::Ghz => build_ghz(n),
    }
    .expect("n >= 1");
    c.extend(&build_qft(n).expect("n >= 1")).expect("same width");

    let mut warm = match simulate(&c, cfg) {
        Ok(h) => h,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.peak_amplitudes = Some(warm.peak_amplitudes());
    if (n as u32) < usize::BITS && 1usize << n <= cfg.mem_budget {
        if let Ok(out) = warm.full_ket() {
            let expect = dft_oracle(&input_amplitudes(n, init)).expect("power of two");
            let err = out.amplitudes().iter().zip(&expect).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            row.max_error = Some(err);
            row.verified = Some(err <= 1e-9);
        }
    }
    let mut times: Vec<f64> = (0..repeats)
        .map(|_| {
            let t = Instant::now();
            let _ = simulate(&c, cfg);
            (t.elapsed().as_secs_f64() * 1e6).round() / 1e3
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    row.wall_ms = times.get(times.len() / 2).copied();
    row
}

fn cmd_qft_bench(out: &Output, n_min: usize, n_max: usize, init: Init, repeats: usize) -> Result<(), CliError> {
    if n_min == 0 || n_max < n_min {
        return Err(CliError::usage("need 1 <= n-min <= n-max"));
    }
    if repeats == 0 {
        return Err(CliError::usage("repeats must be at least 1"));
    }
    let cfg = config(out.common)?;
    let rows: Vec<BenchRow> = (n_min..=n_max).map(|n| bench_row(n, init, repeats, &cfg)).collect();
    out.csv(&rows)?;
    out.plot(|| {
        let pts = rows.iter().filter_map(|r| Some((r.n as f64, r.wall_ms?))).collect();
        svg::line_plot("QFT wall time", "qubits", "wall time (ms)", &[Series { name: rows[0].init.into(), points: pts }], true)
    });
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn cmd_validate(out: &Output, grid: &str, circuits: usize) -> Result<(), CliError> {
    let cells = parse_grid(grid)?;
    if circuits == 0 {
        return Err(CliError::usage("circuits must be at least 1"));
    }
    let cfg = config(out.common)?;
    for &(w, _) in &cells {
        if w >= usize::BITS as usize - 1 || 1usize << w > REFERENCE_BUDGET.min(cfg.mem_budget) {
            return Err(CliError {
                code: 4,
                kind: "budget",
                message: format!("width {w} needs {} amplitudes for the exact reference", 1u128 << w.min(127)),
            });
        }
    }
    let p_grid = default_p_grid();
    let mut all: Vec<SweepRecord> = Vec::new();
    let mut table = Vec::new();
    for (i, &(w, d)) in cells.iter().enumerate() {
        let recs = sdrp_sweep(w, d, circuits, &p_grid, derive_seed(out.common.seed, i as u64), &cfg);
        let pairs = fidelity_pairs(&recs);
        table.push((format!("{w}x{d}"), pairs.len(), recs.len() - pairs.len(), rmse(&pairs).ok()));
        all.extend(recs);
    }
    let pairs = fidelity_pairs(&all);
    table.push(("Overall".into(), pairs.len(), all.len() - pairs.len(), rmse(&pairs).ok()));

    if out.common.out.is_some() {
        out.csv(&all)?;
    }
    println!("{:<10} {:>8} {:>7} {:>8}", "cell", "pairs", "failed", "rmse");
    for (name, n, failed, e) in &table {
        let e = e.map_or("-".to_string(), |e| format!("{e:.4}"));
        println!("{name:<10} {n:>8} {failed:>7} {e:>8}");
    }
    out.plot(|| {
        let mut series = Vec::new();
        for (i, &(w, d)) in cells.iter().enumerate() {
            let recs = &all[i * circuits * p_grid.len()..(i + 1) * circuits * p_grid.len()];
            for (label, exact) in [("model", false), ("exact", true)] {
                let points = p_grid
                    .iter()
                    .filter_map(|&p| {
                        let f = recs
                            .iter()
                            .filter(|r| r.p == p)
                            .filter_map(|r| if exact { r.f_exact } else { r.f_model });
                        Some((p, mean(f)?))
                    })
                    .collect();
                series.push(Series { name: format!("{w}x{d} {label}"), points });
            }
        }
        svg::line_plot("Mean fidelity vs SDRP", "p", "fidelity", &series, false)
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_min_sdrp(
    out: &Output,
    width: usize,
    depths: &str,
    circuits: usize,
    step: f64,
    heat: bool,
    p_values: &str,
    ack: bool,
) -> Result<(), CliError> {
    if width >= 54 && !ack {
        return Err(CliError::usage(format!("width {width} needs --i-have-80gb")));
    }
    if width == 0 || circuits == 0 {
        return Err(CliError::usage("width and circuits must be at least 1"));
    }
    let depths = parse_depths(depths)?;
    let budget = out.common.mem_budget.unwrap_or(1 << 20);
    if heat {
        let ps: Vec<f64> = parse_list(p_values, "p value")?;
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(CliError::usage("p values must lie in [0, 1]"));
        }
        let cells = heatmap(width, &depths, &ps, circuits, budget, out.common.seed);
        out.csv(&cells)?;
        out.plot(|| {
            let values: Vec<Vec<Option<f64>>> =
                depths.iter().enumerate().map(|(d, _)| (0..ps.len()).map(|k| cells[d * ps.len() + k].mean_f_model).collect()).collect();
            svg::heat_map(
                &format!("Mean estimated fidelity, width {width}"),
                "p",
                "depth",
                &ps.iter().map(|p| format!("{p}")).collect::<Vec<_>>(),
                &depths.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
                &values,
            )
        });
        return Ok(());
    }
    let series = min_sdrp_series(width, &depths, circuits, budget, step, out.common.seed)?;
    out.csv(&series)?;
    out.plot(|| {
        let points = series.iter().map(|p| (p.depth as f64, p.mean_f_model)).collect();
        svg::line_plot(
            &format!("Achievable fidelity, width {width}"),
            "depth",
            "mean estimated fidelity",
            &[Series { name: format!("budget {budget}"), points }],
            false,
        )
    });
    Ok(())
}

fn cmd_run(out: &Output, path: &Path, sdrp: f64, shots: usize, dump: bool) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let c = parse_circuit(&text)?;
    let cfg = config(out.common)?.with_sdrp(sdrp);
    cfg.validate()?;
    let start = Instant::now();
    let mut h = simulate(&c, &cfg)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    println!("estimated fidelity: {:.6}", h.estimated_fidelity());
    println!("peak amplitudes: {}", h.peak_amplitudes());
    println!("wall time: {ms:.3} ms");
    for i in 0..shots {
        let cfg = cfg.clone().with_seed(derive_seed(out.common.seed, i as u64));
        let bits = simulate(&c, &cfg)?.measure_all()?;
        println!("{}", format_bits(&bits));
    }
    if dump {
        let ket = h.full_ket()?;
        match &out.common.out {
            Some(p) => {
                let mut w = BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?);
                ket.write_dump(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(p, e))?;
            }
            None => ket.write_dump(io::stdout().lock()).map_err(|e| CliError::io(Path::new("<stdout>"), e))?,
        }
    }
    Ok(())
}

fn config(c: &Common) -> Result<EngineConfig, CliError> {
    let cfg = EngineConfig::default()
        .with_seed(c.seed)
        .with_mem_budget(c.mem_budget.unwrap_or(REFERENCE_BUDGET));
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let common = &cli.common;
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(CliError::usage("threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError { code: 5, kind: "internal", message: e.to_string() })?;
    }
    if common.format == Format::CsvSvg && common.out.is_none() {
        return Err(CliError::usage("--format csv+svg needs --out"));
    }
    let out = Output { common, stamp: EnvStamp::current() };
    match &cli.command {
        Command::QftBench { n_min, n_max, init, repeats } => cmd_qft_bench(&out, *n_min, *n_max, *init, *repeats),
        Command::Validate { grid, circuits } => cmd_validate(&out, grid, *circuits),
        Command::MinSdrp { width, depths, circuits, step, heatmap, p_values, i_have_80gb } => {
            cmd_min_sdrp(&out, *width, depths, *circuits, *step, *heatmap, p_values, *i_have_80gb)
        }
        Command::Run { circuit, sdrp, shots, dump_state } => cmd_run(&out, circuit, *sdrp, *shots, *dump_state),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind, e.message);
            ExitCode::from(e.code)
        }
    }
}
