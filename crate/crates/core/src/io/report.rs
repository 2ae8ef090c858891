//! Evaluation reports: a readable text block and a CSV table.
//!
//! CSV columns: `method,status,frames,error_frames,e_med_m,e_p25_m,e_p75_m,
//! e_p90_m,md_pct,fa_pct`. Undefined values are written as `NA`.
//! Missed detection is the share of in-area frames reported vacant; false
//! alarm is the share of vacant frames reported in-area.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::evaluation::{EvaluationReport, MethodRow, RowStatus};

use super::atomic_write;

pub const CSV_HEADER: &str = "method,status,frames,error_frames,e_med_m,e_p25_m,e_p75_m,e_p90_m,md_pct,fa_pct";

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

fn status(s: &RowStatus) -> &'static str {
    match s {
        RowStatus::Ok => "ok",
        RowStatus::NotCalibrated(_) => "not-calibrated",
        RowStatus::Failed(_) => "failed",
    }
}

fn csv_row(r: &MethodRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.method,
        status(&r.status),
        r.frames,
        r.error_frames,
        num(r.median_m),
        num(r.p25_m),
        num(r.p75_m),
        num(r.p90_m),
        num(r.rates.and_then(|x| x.missed_pct)),
        num(r.rates.and_then(|x| x.false_alarm_pct)),
    )
}

pub fn to_csv(report: &EvaluationReport) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &report.rows {
        s.push_str(&csv_row(r));
        s.push('\n');
    }
    s
}

/// Text report; runtimes are appended only when `timing` is set so the
/// default output is reproducible byte for byte.
pub fn to_text(report: &EvaluationReport, timing: bool) -> String {
    let mut s = String::from("# dfl evaluation report\n");
    for r in &report.rows {
        let _ = write!(s, "method={} status={}", r.method, status(&r.status));
        match &r.status {
            RowStatus::Ok => {
                let _ = write!(
                    s,
                    " frames={} error_frames={} e_med_m={} e_p25_m={} e_p75_m={} e_p90_m={} md_pct={} fa_pct={}",
                    r.frames,
                    r.error_frames,
                    num(r.median_m),
                    num(r.p25_m),
                    num(r.p75_m),
                    num(r.p90_m),
                    num(r.rates.and_then(|x| x.missed_pct)),
                    num(r.rates.and_then(|x| x.false_alarm_pct)),
                );
                if timing {
                    let _ = write!(s, " runtime_s={}", num(r.runtime_s));
                }
            }
            RowStatus::NotCalibrated(msg) | RowStatus::Failed(msg) => {
                let _ = write!(s, " reason=\"{msg}\"");
            }
        }
        s.push('\n');
    }
    s
}

/// Write `<path>` (text) and `<path>.csv`.
pub fn write_report(report: &EvaluationReport, path: &Path, timing: bool) -> Result<()> {
    atomic_write(path, to_text(report, timing).as_bytes())?;
    let mut csv = path.as_os_str().to_owned();
    csv.push(".csv");
    atomic_write(Path::new(&csv), to_csv(report).as_bytes())
}
