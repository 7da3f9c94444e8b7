//! Report output: a text table for people and CSV for plotting.
//!
//! `report.csv` holds only seed-determined values, so identical scenarios give
//! byte-identical files. Wall-clock measurements go to `timing.csv`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::energy::EnergyModel;
use crate::runner::ScenarioRun;
use crate::transport::LinkModel;

/// Version tag written in the first column of every CSV row.
pub const REPORT_SCHEMA: &str = "privmatch-report/1";
pub const TIMING_SCHEMA: &str = "privmatch-timing/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub schema: &'static str,
    pub scenario: String,
    pub protocol: &'static str,
    pub candidate: String,
    pub rank: Option<usize>,
    pub accepted: bool,
    /// What the initiator learned.
    pub similarity: Option<f64>,
    /// What the responder computed.
    pub responder_similarity: Option<f64>,
    pub common_count: Option<usize>,
    pub init_offline_hash: u64,
    pub init_offline_exp: u64,
    pub init_online_hash: u64,
    pub init_online_exp: u64,
    pub resp_offline_hash: u64,
    pub resp_offline_exp: u64,
    pub resp_online_hash: u64,
    pub resp_online_exp: u64,
    pub init_bytes_sent: u64,
    pub resp_bytes_sent: u64,
    pub transfer_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub schema: &'static str,
    pub candidate: String,
    pub init_offline_ms: f64,
    pub resp_offline_ms: f64,
    pub init_online_ms: f64,
    pub resp_online_ms: f64,
    pub transfer_ms: f64,
    pub simulated_ms: f64,
    pub init_energy_j: f64,
    pub resp_energy_j: f64,
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

pub fn report_rows(run: &ScenarioRun, link: LinkModel) -> Vec<ReportRow> {
    run.candidates
        .iter()
        .map(|c| {
            let (ic, rc) = (&c.initiator_counters, &c.responder_counters);
            let seen = c.initiator.as_ref();
            ReportRow {
                schema: REPORT_SCHEMA,
                scenario: run.scenario.clone(),
                protocol: run.protocol.label(),
                candidate: c.name.clone(),
                rank: run.ranking.iter().position(|r| r.0 == c.name).map(|p| p + 1),
                accepted: seen.is_some_and(|o| o.accepted),
                similarity: seen.and_then(|o| o.similarity),
                responder_similarity: c.responder.as_ref().and_then(|o| o.similarity),
                common_count: seen.and_then(|o| o.common_count),
                init_offline_hash: ic.offline.hash_ops,
                init_offline_exp: ic.offline.exp_class(),
                init_online_hash: ic.online.hash_ops,
                init_online_exp: ic.online.exp_class(),
                resp_offline_hash: rc.offline.hash_ops,
                resp_offline_exp: rc.offline.exp_class(),
                resp_online_hash: rc.online.hash_ops,
                resp_online_exp: rc.online.exp_class(),
                init_bytes_sent: ic.bytes_sent,
                resp_bytes_sent: rc.bytes_sent,
                transfer_ms: ms(link.transfer_time(ic.bytes_sent + rc.bytes_sent)),
                error: c.error.clone(),
            }
        })
        .collect()
}

pub fn timing_rows(run: &ScenarioRun, model: &EnergyModel) -> Vec<TimingRow> {
    run.candidates
        .iter()
        .map(|c| {
            let t = &c.timing;
            let (ic, rc) = (&c.initiator_counters, &c.responder_counters);
            TimingRow {
                schema: TIMING_SCHEMA,
                candidate: c.name.clone(),
                init_offline_ms: ms(t.initiator_offline),
                resp_offline_ms: ms(t.responder_offline),
                init_online_ms: ms(t.initiator_online),
                resp_online_ms: ms(t.responder_online),
                transfer_ms: ms(t.transfer),
                simulated_ms: ms(t.simulated()),
                init_energy_j: model
                    .estimate(ic.bytes_sent, ic.bytes_received, t.initiator_online, t.simulated())
                    .joules,
                resp_energy_j: model
                    .estimate(rc.bytes_sent, rc.bytes_received, t.responder_online, t.simulated())
                    .joules,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

/// Text table of outcomes, counts and traffic.
pub fn render_table(run: &ScenarioRun, link: LinkModel) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "scenario {} | protocol {} | initiator {}",
        run.scenario, run.protocol, run.initiator
    )
    .unwrap();
    if let Some(w) = &run.sizing_warning {
        writeln!(s, "warning: {w}").unwrap();
    }
    writeln!(
        s,
        "{:<12} {:>4} {:>9} {:>9} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "candidate", "rank", "learned", "computed", "|S|", "i.on.exp", "r.on.exp", "i.bytes", "r.bytes", "xfer ms"
    )
    .unwrap();
    for r in report_rows(run, link) {
        writeln!(
            s,
            "{:<12} {:>4} {:>9} {:>9} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10.2}",
            r.candidate,
            r.rank.map_or_else(|| "-".into(), |x| x.to_string()),
            opt(r.similarity),
            opt(r.responder_similarity),
            r.common_count.map_or_else(|| "-".into(), |x| x.to_string()),
            r.init_online_exp,
            r.resp_online_exp,
            r.init_bytes_sent,
            r.resp_bytes_sent,
            r.transfer_ms
        )
        .unwrap();
        if let Some(e) = &r.error {
            writeln!(s, "  error: {e}").unwrap();
        }
    }
    let order: Vec<String> = run.ranking.iter().map(|(n, v)| format!("{n} ({v:.4})")).collect();
    writeln!(s, "ranking: {}", if order.is_empty() { "-".into() } else { order.join(" > ") }).unwrap();
    s
}

/// Writes `report.txt`, `report.csv` and `timing.csv` into `dir`.
pub fn write_reports(run: &ScenarioRun, link: LinkModel, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.txt"), render_table(run, link))?;
    let to_io = |e: csv::Error| std::io::Error::other(e);
    write_csv(&report_rows(run, link), std::fs::File::create(dir.join("report.csv"))?).map_err(to_io)?;
    write_csv(
        &timing_rows(run, &EnergyModel::default()),
        std::fs::File::create(dir.join("timing.csv"))?,
    )
    .map_err(to_io)?;
    Ok(())
}
