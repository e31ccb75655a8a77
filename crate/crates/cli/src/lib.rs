//! Seed sweeps over the simulator: argument parsing, parallel execution and
//! report output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;
use thiserror::Error;

use jpp_core::analysis::{analyze_run, AnalysisReport, RunAnalysis};
use jpp_core::io::{summarize_sweep, write_records, write_runs, write_summary, Format};
use jpp_core::jpp::JppSim;
use jpp_core::model::{DEFAULT_B, DEFAULT_C, DEFAULT_CTR_MAX_ADD, DEFAULT_ESTIMATE_SPREAD, DEFAULT_RHO};
use jpp_core::{run_with_id, ConfigError, FailureTiming, IoError, Mode, SimConfig, SimError, StartNode, Trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "jpp", version, about = "Run seeded sweeps of gossip protocol simulations")]
pub struct Args {
    /// Network size; repeat or comma-separate for a sweep.
    #[arg(long = "n", required = true, value_delimiter = ',')]
    pub n: Vec<u32>,
    /// Number of seeds per point (seeds 0..k).
    #[arg(long, conflicts_with = "seed_list")]
    pub seeds: Option<u64>,
    /// Explicit comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seed_list: Option<Vec<u64>>,
    /// jpp, push, pull or pushpull; repeatable.
    #[arg(long, value_delimiter = ',', default_value = "jpp")]
    pub mode: Vec<Mode>,
    #[arg(long, default_value_t = DEFAULT_C)]
    pub c: u32,
    /// Rumor size in bits.
    #[arg(long, default_value_t = DEFAULT_B)]
    pub b: u32,
    #[arg(long, default_value_t = DEFAULT_CTR_MAX_ADD)]
    pub ctr_max_add: u32,
    #[arg(long, default_value_t = 0.0)]
    pub failure_scale: f64,
    /// none, start or per-round. Defaults to start when a failure scale is given.
    #[arg(long)]
    pub failure_timing: Option<FailureTiming>,
    /// Nodes only know a local estimate of n.
    #[arg(long)]
    pub non_exact: bool,
    #[arg(long)]
    pub rho: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_ESTIMATE_SPREAD)]
    pub estimate_spread: f64,
    /// Node id or `random`.
    #[arg(long, default_value = "0")]
    pub start_node: StartNode,
    /// Output file; per-run rows go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: Format,
    /// Also report the structure of the phase-2 graphs (jpp runs only).
    #[arg(long)]
    pub analyze: bool,
    /// Worker threads; without a value, one per core.
    #[arg(long, num_args = 0..=1, default_missing_value = "0", default_value = "1")]
    pub parallel: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::Count(k) => (0..*k).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub n_list: Vec<u32>,
    pub seeds: Seeds,
    /// Template; `n`, `mode` and `seed` are overwritten per run.
    pub base: SimConfig,
    pub modes: Vec<Mode>,
    /// 0 means one thread per core.
    pub parallelism: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Invocation {
    pub sweep: SweepSpec,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub analyze: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum UsageError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("cannot write {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl SweepSpec {
    pub fn configs(&self) -> Vec<SimConfig> {
        let seeds = self.seeds.to_vec();
        let mut out = Vec::with_capacity(self.n_list.len() * self.modes.len() * seeds.len());
        for &n in &self.n_list {
            for &mode in &self.modes {
                for &seed in &seeds {
                    out.push(SimConfig { n, mode, seed, ..self.base.clone() });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if self.n_list.is_empty() {
            return Err(UsageError::Invalid("at least one --n is required".into()));
        }
        if self.seeds.to_vec().is_empty() {
            return Err(UsageError::Invalid("at least one seed is required".into()));
        }
        if self.modes.is_empty() {
            return Err(UsageError::Invalid("at least one --mode is required".into()));
        }
        for cfg in self.configs() {
            cfg.validate()?;
        }
        Ok(())
    }
}

pub fn parse_args<I, T>(argv: I) -> Result<Invocation, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(argv)?;
    let mut warnings = Vec::new();
    let rho = match args.rho {
        Some(r) => r,
        None => {
            if args.non_exact {
                warnings.push(format!("--non-exact without --rho: using rho = {DEFAULT_RHO}"));
            }
            DEFAULT_RHO
        }
    };
    let failure_timing = args.failure_timing.unwrap_or(if args.failure_scale > 0.0 {
        FailureTiming::AtStart
    } else {
        FailureTiming::None
    });
    let mut modes = args.mode.clone();
    modes.dedup();
    let base = SimConfig {
        c: args.c,
        b: args.b,
        ctr_max_add: args.ctr_max_add,
        failure_scale: args.failure_scale,
        failure_timing,
        non_exact: args.non_exact,
        rho,
        estimate_spread: args.estimate_spread,
        start_node: args.start_node,
        ..SimConfig::new(args.n[0], modes[0], 0)
    };
    let seeds = match (args.seeds, args.seed_list) {
        (_, Some(list)) => Seeds::List(list),
        (Some(k), None) => Seeds::Count(k),
        (None, None) => Seeds::Count(1),
    };
    let sweep = SweepSpec { n_list: args.n, seeds, base, modes, parallelism: args.parallel };
    sweep.validate()?;
    Ok(Invocation { sweep, out: args.out, format: args.format, analyze: args.analyze, warnings })
}

/// One finished run; `analysis` is set for jpp runs when requested.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: Trace,
    pub analysis: Option<RunAnalysis>,
}

fn run_one(cfg: &SimConfig, run_id: u64, analyze: bool) -> Result<RunResult, SimError> {
    if analyze && cfg.mode == Mode::Jpp {
        let mut sim = JppSim::new(cfg, run_id)?;
        sim.record_subphases(true);
        sim.run_to_end()?;
        let analysis = analyze_run(&sim).expect("recorded graphs are well formed");
        return Ok(RunResult { trace: sim.into_trace(), analysis: Some(analysis) });
    }
    Ok(RunResult { trace: run_with_id(cfg, run_id)?, analysis: None })
}

/// Executes every run of the sweep. Results are in `run_id` order whatever
/// the thread count.
pub fn run_sweep(spec: &SweepSpec, analyze: bool) -> Result<Vec<RunResult>, RunError> {
    let jobs: Vec<(u64, SimConfig)> = spec.configs().into_iter().enumerate().map(|(i, c)| (i as u64, c)).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(spec.parallelism).build()?;
    let mut results =
        pool.install(|| jobs.par_iter().map(|(id, cfg)| run_one(cfg, *id, analyze)).collect::<Result<Vec<_>, _>>())?;
    results.sort_by_key(|r| r.trace.meta.run_id);
    Ok(results)
}

/// Groups analyses by `(n, failure_scale)`.
pub fn analysis_reports(results: &[RunResult]) -> Vec<AnalysisReport> {
    let mut groups: BTreeMap<(u32, u64), Vec<RunAnalysis>> = BTreeMap::new();
    for r in results {
        if let Some(a) = &r.analysis {
            groups.entry((r.trace.meta.n, r.trace.meta.failure_scale.to_bits())).or_default().push(a.clone());
        }
    }
    groups.into_iter().map(|((n, f), runs)| AnalysisReport::aggregate(n, f64::from_bits(f), &runs)).collect()
}

/// `dir/stem.<kind>.<ext>` next to the main output file.
pub fn sibling_path(out: &Path, kind: &str, format: Format) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.{kind}.{}", format.extension()))
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(|source| RunError::Open { path: path.to_path_buf(), source })
}

fn flush(mut w: impl Write, path: &Path) -> Result<(), RunError> {
    w.flush().map_err(|source| RunError::Open { path: path.to_path_buf(), source })
}

/// Writes the per-run table, the summary and (optionally) the analysis
/// report. Without `--out` the table goes to `stdout` and the rest to
/// `stderr`.
pub fn write_outputs(
    inv: &Invocation,
    results: &[RunResult],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), RunError> {
    let traces: Vec<Trace> = results.iter().map(|r| r.trace.clone()).collect();
    let summary = summarize_sweep(&traces);
    let reports = if inv.analyze { analysis_reports(results) } else { Vec::new() };
    match &inv.out {
        Some(path) => {
            let mut w = create(path)?;
            write_runs(&traces, inv.format, &mut w)?;
            flush(w, path)?;
            let sp = sibling_path(path, "summary", inv.format);
            let mut w = create(&sp)?;
            write_summary(&summary, inv.format, &mut w)?;
            flush(w, &sp)?;
            if inv.analyze {
                let ap = sibling_path(path, "analysis", inv.format);
                let mut w = create(&ap)?;
                write_records(&reports, inv.format, &mut w)?;
                flush(w, &ap)?;
            }
        }
        None => {
            write_runs(&traces, inv.format, &mut *stdout)?;
            write_summary(&summary, inv.format, &mut *stderr)?;
            if inv.analyze {
                write_records(&reports, inv.format, &mut *stderr)?;
            }
        }
    }
    Ok(())
}

/// Full command line behaviour; returns the process exit code.
pub fn main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let inv = match parse_args(argv) {
        Ok(inv) => inv,
        Err(UsageError::Clap(e)) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    for w in &inv.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let outcome = run_sweep(&inv.sweep, inv.analyze).and_then(|results| write_outputs(&inv, &results, stdout, stderr));
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUN
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &'static str) -> Result<Invocation, UsageError> {
        parse_args(std::iter::once("jpp").chain(s.split_whitespace()))
    }

    #[test]
    fn defaults_fill_the_template() {
        let inv = parse("--n 1024 --seeds 10 --mode jpp").unwrap();
        assert_eq!(inv.sweep.n_list, vec![1024]);
        assert_eq!(inv.sweep.seeds, Seeds::Count(10));
        assert_eq!(inv.sweep.modes, vec![Mode::Jpp]);
        assert_eq!(inv.sweep.base.c, DEFAULT_C);
        assert_eq!(inv.sweep.base.b, DEFAULT_B);
        assert_eq!(inv.sweep.parallelism, 1);
        assert_eq!(inv.format, Format::Csv);
        assert!(inv.warnings.is_empty());
    }

    #[test]
    fn non_exact_without_rho_warns() {
        let inv = parse("--n 64 --non-exact").unwrap();
        assert_eq!(inv.sweep.base.rho, DEFAULT_RHO);
        assert_eq!(inv.warnings.len(), 1);
    }

    #[test]
    fn small_rho_is_a_config_error() {
        assert!(matches!(parse("--n 64 --non-exact --rho 1"), Err(UsageError::Config(ConfigError::RhoTooSmall(1)))));
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert!(matches!(parse("--n 64 --bogus"), Err(UsageError::Clap(_))));
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(main_with(["jpp", "--n", "64", "--bogus"], &mut out, &mut err), EXIT_USAGE);
    }

    #[test]
    fn sweeps_expand_in_n_mode_seed_order() {
        let inv = parse("--n 8,16 --mode push --mode pull --seed-list 5,7").unwrap();
        let got: Vec<(u32, Mode, u64)> = inv.sweep.configs().iter().map(|c| (c.n, c.mode, c.seed)).collect();
        assert_eq!(got[0], (8, Mode::Push, 5));
        assert_eq!(got[1], (8, Mode::Push, 7));
        assert_eq!(got[2], (8, Mode::Pull, 5));
        assert_eq!(got[7], (16, Mode::Pull, 7));
    }

    #[test]
    fn failure_scale_implies_failures_at_start() {
        let inv = parse("--n 64 --failure-scale 1").unwrap();
        assert_eq!(inv.sweep.base.failure_timing, FailureTiming::AtStart);
        let inv = parse("--n 64 --failure-scale 1 --failure-timing per-round").unwrap();
        assert_eq!(inv.sweep.base.failure_timing, FailureTiming::PerRound);
    }

    #[test]
    fn one_run_gives_one_summary_row() {
        let inv = parse("--n 32 --mode push").unwrap();
        let results = run_sweep(&inv.sweep, false).unwrap();
        let traces: Vec<Trace> = results.into_iter().map(|r| r.trace).collect();
        assert_eq!(summarize_sweep(&traces).len(), 1);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(
            sibling_path(Path::new("/tmp/x/run.csv"), "summary", Format::Csv),
            PathBuf::from("/tmp/x/run.summary.csv")
        );
        assert_eq!(sibling_path(Path::new("run"), "analysis", Format::Json), PathBuf::from("run.analysis.json"));
    }
}
