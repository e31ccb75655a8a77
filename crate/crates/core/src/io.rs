//! CSV/JSON output of runs and sweep summaries.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::model::{log2_ceil, loglog2_ceil, sqrt_log2_ceil, Mode};
use crate::trace::{PhaseLabel, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

pub const CSV_HEADER: [&str; 15] = [
    "run_id",
    "seed",
    "n",
    "c",
    "b",
    "mode",
    "failure_scale",
    "round",
    "phase",
    "informed",
    "channel_opens",
    "address_msgs",
    "rumor_msgs",
    "state_msgs",
    "bit_total",
];

#[derive(Serialize)]
struct CsvRow {
    run_id: u64,
    seed: u64,
    n: u32,
    c: u32,
    b: u32,
    mode: Mode,
    failure_scale: f64,
    round: u32,
    phase: PhaseLabel,
    informed: u64,
    channel_opens: u64,
    address_msgs: u64,
    rumor_msgs: u64,
    state_msgs: u64,
    bit_total: u64,
}

fn csv_rows(w: &mut csv::Writer<impl Write>, trace: &Trace) -> Result<(), IoError> {
    let m = &trace.meta;
    for r in &trace.rows {
        w.serialize(CsvRow {
            run_id: m.run_id,
            seed: m.seed,
            n: m.n,
            c: m.c,
            b: m.b,
            mode: m.mode,
            failure_scale: m.failure_scale,
            round: r.round,
            phase: r.phase,
            informed: r.informed,
            channel_opens: r.channel_opens,
            address_msgs: r.address_msgs,
            rumor_msgs: r.rumor_msgs,
            state_msgs: r.state_msgs,
            bit_total: r.bit_total,
        })?;
    }
    Ok(())
}

/// Writes several runs: one CSV table with a single header, or a JSON array.
pub fn write_runs(traces: &[Trace], format: Format, sink: impl Write) -> Result<(), IoError> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
            w.write_record(CSV_HEADER)?;
            for t in traces {
                csv_rows(&mut w, t)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, traces)?;
            sink.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Writes one run: per-round CSV rows, or the trace as a JSON object.
pub fn write_run(trace: &Trace, format: Format, sink: impl Write) -> Result<(), IoError> {
    match format {
        Format::Csv => write_runs(std::slice::from_ref(trace), format, sink),
        Format::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, trace)?;
            sink.write_all(b"\n")?;
            Ok(())
        }
    }
}

pub fn read_run_json(source: impl Read) -> Result<Trace, IoError> {
    Ok(serde_json::from_reader(source)?)
}

pub fn read_runs_json(source: impl Read) -> Result<Vec<Trace>, IoError> {
    Ok(serde_json::from_reader(source)?)
}

/// Aggregate over the runs of one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: u32,
    pub mode: Mode,
    pub c: u32,
    pub b: u32,
    pub failure_scale: f64,
    pub runs: u64,
    pub complete_runs: u64,
    /// Nearest-rank quantiles over complete runs.
    pub median_completion: Option<u32>,
    pub p95_completion: Option<u32>,
    pub mean_rounds: f64,
    pub mean_bit_total: f64,
    pub mean_uninformed: f64,
    /// `mean_rounds / ⌈√log2 n⌉`.
    pub rounds_ratio: f64,
    /// `mean_bit_total / (n·(⌈log2 n⌉·⌈√log2 n⌉ + b·⌈log2 log2 n⌉))`.
    pub bit_ratio: f64,
}

/// Nearest-rank quantile of sorted values.
pub fn quantile(sorted: &[u32], q: f64) -> Option<u32> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Denominator of the bit ratio.
pub fn bit_normalizer(n: u32, b: u32) -> f64 {
    let n_f = n as f64;
    let l = log2_ceil(n_f) as f64;
    let s = sqrt_log2_ceil(n_f) as f64;
    let ll = loglog2_ceil(n_f) as f64;
    n_f * (l * s + b as f64 * ll)
}

/// Groups runs by `(n, mode, c, b, failure_scale)`, in ascending order.
pub fn summarize_sweep(traces: &[Trace]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(u32, Mode, u32, u32, u64), Vec<&Trace>> = BTreeMap::new();
    for t in traces {
        let m = &t.meta;
        groups.entry((m.n, m.mode, m.c, m.b, m.failure_scale.to_bits())).or_default().push(t);
    }
    groups
        .into_iter()
        .map(|((n, mode, c, b, f), runs)| {
            let k = runs.len() as f64;
            let mut completion: Vec<u32> =
                runs.iter().filter(|t| t.outcome.complete).filter_map(|t| t.outcome.completion_round).collect();
            completion.sort_unstable();
            let mean_rounds = runs.iter().map(|t| t.rounds() as f64).sum::<f64>() / k;
            let mean_bit_total = runs.iter().map(|t| t.bit_total() as f64).sum::<f64>() / k;
            SummaryRow {
                n,
                mode,
                c,
                b,
                failure_scale: f64::from_bits(f),
                runs: runs.len() as u64,
                complete_runs: runs.iter().filter(|t| t.outcome.complete).count() as u64,
                median_completion: quantile(&completion, 0.5),
                p95_completion: quantile(&completion, 0.95),
                mean_rounds,
                mean_bit_total,
                mean_uninformed: runs.iter().map(|t| t.uninformed() as f64).sum::<f64>() / k,
                rounds_ratio: mean_rounds / sqrt_log2_ceil(n as f64) as f64,
                bit_ratio: mean_bit_total / bit_normalizer(n, b),
            }
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], format: Format, sink: impl Write) -> Result<(), IoError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, rows)?;
            sink.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Writes any serializable report list (used for analysis output).
pub fn write_records<T: Serialize>(rows: &[T], format: Format, sink: impl Write) -> Result<(), IoError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, rows)?;
            sink.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SimConfig;
    use crate::sim::run_protocol;

    fn push2() -> Trace {
        run_protocol(&SimConfig::new(2, Mode::Push, 0)).unwrap()
    }

    #[test]
    fn header_is_exact() {
        let mut t = push2();
        t.rows.clear();
        let mut out = Vec::new();
        write_run(&t, Format::Csv, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "run_id,seed,n,c,b,mode,failure_scale,round,phase,informed,channel_opens,address_msgs,rumor_msgs,state_msgs,bit_total\n"
        );
    }

    #[test]
    fn one_round_push_on_two_nodes() {
        let mut out = Vec::new();
        write_run(&push2(), Format::Csv, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "0,0,2,4,8,push,0.0,1,push,2,1,0,1,0,9");
    }

    #[test]
    fn json_round_trips() {
        let mut cfg = SimConfig::new(64, Mode::Jpp, 9);
        cfg.failure_scale = 0.3;
        cfg.failure_timing = crate::model::FailureTiming::AtStart;
        let t = run_protocol(&cfg).unwrap();
        let mut out = Vec::new();
        write_run(&t, Format::Json, &mut out).unwrap();
        assert_eq!(read_run_json(out.as_slice()).unwrap(), t);
    }

    #[test]
    fn single_run_summary_equals_the_run() {
        let t = push2();
        let s = summarize_sweep(std::slice::from_ref(&t));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].runs, 1);
        assert_eq!(s[0].median_completion, t.outcome.completion_round);
        assert_eq!(s[0].mean_bit_total, t.bit_total() as f64);
        assert_eq!(summarize_sweep(&[t.clone(), t.clone()])[0].p95_completion, s[0].p95_completion);
    }

    #[test]
    fn quantiles_use_nearest_rank() {
        assert_eq!(quantile(&[], 0.5), None);
        assert_eq!(quantile(&[3], 0.95), Some(3));
        assert_eq!(quantile(&[1, 2, 3, 4], 0.5), Some(2));
        let v: Vec<u32> = (1..=100).collect();
        assert_eq!(quantile(&v, 0.95), Some(95));
    }
}
