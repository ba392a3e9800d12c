//! Report emission for `gauth run`: one directory per run holding the
//! rendered trace, three CSV files with fixed column orders, and a
//! human-readable summary. Run directories are append-only: a name
//! collision allocates a numbered sibling instead of overwriting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use gauth_core::scenario::ScenarioConfig;
use gauth_core::simnet::{RunMetrics, RunReport};

/// Creates `<root>/<scenario>-seed<seed>`, or the first free
/// `...-2`, `...-3` sibling when earlier runs already used the name.
pub fn allocate_run_dir(root: &Path, scenario: &str, seed: u64) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(root)
        .with_context(|| format!("cannot create output root {}", root.display()))?;
    let stem = format!("{scenario}-seed{seed}");
    let mut dir = root.join(&stem);
    let mut n = 1u32;
    while dir.exists() {
        n += 1;
        dir = root.join(format!("{stem}-{n}"));
    }
    std::fs::create_dir(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

pub fn write_reports(dir: &Path, cfg: &ScenarioConfig, report: &RunReport) -> anyhow::Result<()> {
    std::fs::write(dir.join("trace.txt"), report.trace.render())?;
    std::fs::write(dir.join("auths.csv"), auths_csv(&report.metrics))?;
    std::fs::write(dir.join("exposure.csv"), exposure_csv(&report.metrics))?;
    std::fs::write(dir.join("battery.csv"), battery_csv(&report.metrics))?;
    std::fs::write(dir.join("summary.txt"), summary_text(cfg, report))?;
    Ok(())
}

/// Column order is part of the interface; see docs/reports.md.
fn auths_csv(m: &RunMetrics) -> String {
    let mut out = String::from("started_ms,arrived_ms,kind,tid,uid,origin,outcome,latency_ms\n");
    for a in &m.auths {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            a.started_ms, a.arrived_ms, a.kind, a.tid, a.uid, a.origin, a.outcome, a.latency_ms
        )
        .expect("string writes cannot fail");
    }
    out
}

fn exposure_csv(m: &RunMetrics) -> String {
    let mut out = String::from("tid,uid,walk_away_s,detect_s,window_s\n");
    for e in &m.exposure {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{:.3}",
            e.tid,
            e.uid,
            e.walk_away_ms as f64 / 1000.0,
            e.detect_ms as f64 / 1000.0,
            e.window_ms() as f64 / 1000.0
        )
        .expect("string writes cannot fail");
    }
    out
}

fn battery_csv(m: &RunMetrics) -> String {
    let mut out = String::from("minute,level_pct\n");
    for (minute, level) in &m.battery_trajectory {
        writeln!(out, "{minute},{level:.4}").expect("string writes cannot fail");
    }
    out
}

/// Checks whose outcome belongs in the summary. Each line is
/// `<name>: PASS|FAIL (<evidence>)`; only checks the scenario actually
/// exercises are emitted.
pub fn verdicts(cfg: &ScenarioConfig, report: &RunReport) -> Vec<String> {
    let m = &report.metrics;
    let mut out = Vec::new();

    out.push(format!(
        "trace-reconciliation: {}",
        if report.reconciles() { "PASS" } else { "FAIL" }
    ));

    let bound_ms = cfg
        .terminals
        .iter()
        .filter_map(|t| t.continuous.as_ref())
        .map(|c| ((c.t_reauth_secs + c.lock_timeout_secs) * 1000.0).round() as u64)
        .max();
    if let Some(bound_ms) = bound_ms {
        // One scheduler tick of slack on top of the analytic T+L bound.
        let pass = m.exposure.iter().all(|e| e.window_ms() <= bound_ms + 1);
        let evidence = match m.max_exposure_ms() {
            Some(max) => format!(
                "max {:.3} s of {} windows",
                max as f64 / 1000.0,
                m.exposure.len()
            ),
            None => "no walk-away windows".to_string(),
        };
        out.push(format!(
            "exposure-bound (W <= {:.3} s): {} ({evidence})",
            bound_ms as f64 / 1000.0,
            if pass { "PASS" } else { "FAIL" }
        ));
    }

    if m.adversary_presentations > 0 {
        out.push(format!(
            "adversary-rejection: {} ({} of {} accepted)",
            if m.adversary_accepts == 0 {
                "PASS"
            } else {
                "FAIL"
            },
            m.adversary_accepts,
            m.adversary_presentations
        ));
    }

    out
}

fn mean(values: &[u64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<u64>() as f64 / values.len() as f64)
}

fn summary_text(cfg: &ScenarioConfig, report: &RunReport) -> String {
    let m = &report.metrics;
    let mut out = String::new();
    let mut line = |text: String| {
        out.push_str(&text);
        out.push('\n');
    };

    line(format!("scenario: {}", report.scenario_name));
    line(format!("seed: {}", report.seed));
    line(format!(
        "duration: {:.3} s",
        report.duration_ms as f64 / 1000.0
    ));
    line(String::new());

    let user_auths = m.auths.len() as u64;
    line(format!(
        "auth attempts: {} user + {} adversary = {} total",
        user_auths,
        m.adversary_presentations,
        m.attempts()
    ));
    line(format!(
        "accepted: {} user + {} adversary",
        m.accepts() - m.adversary_accepts,
        m.adversary_accepts
    ));
    let refusals = m.refusals();
    if refusals.is_empty() {
        line("refused: none".to_string());
    } else {
        line("refused:".to_string());
        for (reason, count) in &refusals {
            line(format!("  {reason}: {count}"));
        }
    }

    for (label, samples) in [
        ("login", m.login_latencies_ms()),
        ("reauth", m.reauth_latencies_ms()),
    ] {
        match mean(&samples) {
            Some(avg) => line(format!(
                "{label} latency: n={} mean {avg:.0} ms",
                samples.len()
            )),
            None => line(format!("{label} latency: none")),
        }
    }

    line(format!(
        "scans: {} failed decodes, {} unmatched payloads",
        m.failed_scans, m.no_matches
    ));
    line(format!(
        "session events: {} locks, {} unlocks, {} user logouts, {} grace logouts",
        m.locks, m.unlocks, m.user_logouts, m.grace_logouts
    ));

    match (m.max_exposure_ms(), m.mean_exposure_ms()) {
        (Some(max), Some(avg)) => line(format!(
            "exposure windows: n={} max {:.3} s mean {:.3} s",
            m.exposure.len(),
            max as f64 / 1000.0,
            avg / 1000.0
        )),
        _ => line("exposure windows: none".to_string()),
    }

    let start_level = cfg.device.as_ref().map(|d| d.battery).unwrap_or(100.0);
    line(format!(
        "battery: {start_level:.2}% -> {:.2}%",
        m.final_battery
    ));

    line(String::new());
    line("verdicts:".to_string());
    for verdict in verdicts(cfg, report) {
        line(format!("  {verdict}"));
    }
    out
}
