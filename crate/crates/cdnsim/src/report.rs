//! CSV and JSON result files.

use std::io::{self, Write};

use cdnsim_core::engine::Decision;
use cdnsim_core::{FetchClass, RunMetrics, SimConfig, TraceRecord};
use serde_json::{json, Value};

use crate::harness::{Experiment, ExponentFit, SummaryRow};
use crate::params::{config_to_json, experiment_to_json};

pub const SUMMARY_HEADER: [&str; 10] = [
    "policy",
    "sweep_param",
    "sweep_value",
    "mean_served_fraction",
    "std_served_fraction",
    "mean_deferred",
    "mean_external_fetches",
    "mean_internal_fetches",
    "replications",
    "seed",
];

pub const TRACE_HEADER: [&str; 6] = ["time", "kind", "content", "server", "decision", "fetch_class"];

/// `x` with six significant digits, in the style of C's `%g`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.sweep_param.clone(),
            sig6(r.sweep_value),
            sig6(r.mean_served_fraction),
            sig6(r.std_served_fraction),
            sig6(r.mean_deferred),
            sig6(r.mean_external_fetches),
            sig6(r.mean_internal_fetches),
            r.replications.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

fn row_json(r: &SummaryRow) -> Value {
    let n = |x: f64| -> Value { sig6(x).parse::<f64>().map(Value::from).unwrap_or(Value::Null) };
    json!({
        "policy": r.policy,
        "sweep_param": r.sweep_param,
        "sweep_value": n(r.sweep_value),
        "mean_served_fraction": n(r.mean_served_fraction),
        "std_served_fraction": n(r.std_served_fraction),
        "se_served_fraction": n(r.se_served_fraction),
        "mean_deferred": n(r.mean_deferred),
        "se_deferred": n(r.se_deferred),
        "mean_external_fetches": n(r.mean_external_fetches),
        "se_external_fetches": n(r.se_external_fetches),
        "mean_internal_fetches": n(r.mean_internal_fetches),
        "se_internal_fetches": n(r.se_internal_fetches),
        "replications": r.replications,
        "seed": r.seed,
        "single_sample": r.single_sample,
        "degenerate_runs": r.degenerate_runs,
    })
}

/// Rows plus the resolved experiment configuration.
pub fn experiment_json(exp: &Experiment, fits: &[(String, ExponentFit)]) -> Value {
    let fits: Vec<Value> = fits
        .iter()
        .map(|(name, f)| {
            json!({
                "series": name,
                "slope": f.slope,
                "ci_low": f.lo,
                "ci_high": f.hi,
                "points_used": f.points_used,
                "dropped": f.dropped,
            })
        })
        .collect();
    let mut v = json!({
        "experiment": experiment_to_json(&exp.spec),
        "rows": exp.rows().iter().map(row_json).collect::<Vec<_>>(),
    });
    if !fits.is_empty() {
        v["fits"] = Value::from(fits);
    }
    v
}

/// One run's metrics plus its configuration.
pub fn run_json(config: &SimConfig, m: &RunMetrics) -> Value {
    json!({
        "config": config_to_json(config),
        "metrics": {
            "arrivals": m.arrivals,
            "served": m.served,
            "deferred": m.deferred,
            "served_fraction": m.served_fraction(),
            "deferred_phase1": m.deferred_phase1,
            "external_fetches": m.external_fetches,
            "internal_fetches": m.internal_fetches,
            "distinct_contents_requested": m.distinct_contents_requested,
            "max_busy": m.max_busy,
            "popularity_changes": m.popularity_changes,
            "phase_boundary_time": m.phase_boundary_time,
            "degenerate_estimate": m.degenerate_estimate.map(|d| format!("{d:?}")),
            "workload_checksum": format!("{:016x}", m.workload_checksum),
        }
    })
}

/// Trace rows; absent content, server, decision or fetch class print as -1.
pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceRecord]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace {
        let decision = r.decision.map_or("-1", Decision::as_str);
        let fetch = match r.fetch {
            Some(FetchClass::Internal) => "internal",
            Some(FetchClass::External) => "external",
            None => "-1",
        };
        w.write_record([
            r.time.to_string(),
            r.kind.as_str().to_string(),
            r.content.map_or("-1".into(), |c| c.0.to_string()),
            r.server.map_or("-1".into(), |s| s.0.to_string()),
            decision.to_string(),
            fetch.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}
