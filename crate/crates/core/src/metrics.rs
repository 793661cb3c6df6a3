//! CSV output. Column order is fixed:
//!
//! Per-run slot table: `slot, time, sum_rate, active_links, u2u_links,
//! qos_violations, delivered_bits, tasks_delivered, bnb_nodes, dc_iterations,
//! rounds, suboptimal`, then for each UAV in id order `u{id}_x, u{id}_y,
//! u{id}_z, u{id}_speed, u{id}_activity, u{id}_mode, u{id}_relay,
//! u{id}_subchannels, u{id}_power, u{id}_sinr_db, u{id}_rate, u{id}_backlog`,
//! then `t{id}_state` for each task in file order.
//!
//! Run summaries: `scheme, seed, subchannels, slots, mean_sum_rate,
//! completion_time, qos_violations, delivered_bits, u2u_link_slots,
//! bnb_nodes, dc_iterations, suboptimal_slots, error`.
//!
//! Aggregates: `metric, n, mean, ci_low, ci_high`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::channel::linear_to_db;
use crate::error::Result;
use crate::rrm::LinkKind;
use crate::scenario::Scenario;
use crate::sensing::TaskState;
use crate::sim::{Interval, RunSummary, SlotRecord};

const UAV_FIELDS: [&str; 12] = [
    "x", "y", "z", "speed", "activity", "mode", "relay", "subchannels", "power", "sinr_db", "rate", "backlog",
];

fn kind_str(k: LinkKind) -> &'static str {
    match k {
        LinkKind::U2n => "U2N",
        LinkKind::U2u => "U2U",
    }
}

pub fn slot_header(scenario: &Scenario) -> Vec<String> {
    let mut h: Vec<String> = [
        "slot",
        "time",
        "sum_rate",
        "active_links",
        "u2u_links",
        "qos_violations",
        "delivered_bits",
        "tasks_delivered",
        "bnb_nodes",
        "dc_iterations",
        "rounds",
        "suboptimal",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for u in &scenario.uavs {
        h.extend(UAV_FIELDS.iter().map(|f| format!("u{}_{f}", u.id)));
    }
    h.extend(scenario.tasks.iter().map(|t| format!("t{}_state", t.id)));
    h
}

pub fn slot_row(r: &SlotRecord) -> Vec<String> {
    let mut row = vec![
        r.slot.to_string(),
        r.time.to_string(),
        r.sum_rate.to_string(),
        r.links.len().to_string(),
        r.links.iter().filter(|l| l.kind == LinkKind::U2u).count().to_string(),
        r.qos_violations.to_string(),
        r.delivered_bits.to_string(),
        r.task_states.iter().filter(|&&s| s == TaskState::Delivered).count().to_string(),
        r.bnb_nodes.to_string(),
        r.dc_iterations.to_string(),
        r.rounds.to_string(),
        r.suboptimal.to_string(),
    ];
    for u in &r.uavs {
        let link = r.link(u.id);
        row.push(u.position.x.to_string());
        row.push(u.position.y.to_string());
        row.push(u.position.z.to_string());
        row.push(u.speed.to_string());
        row.push(u.activity.to_string());
        row.push(u.mode.map_or("", kind_str).to_string());
        row.push(u.relay.map_or(String::new(), |x| x.to_string()));
        row.push(link.map_or(String::new(), |l| {
            l.subchannels.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";")
        }));
        row.push(link.map_or(String::new(), |l| l.power.to_string()));
        row.push(link.map_or(String::new(), |l| linear_to_db(l.sinr).to_string()));
        row.push(link.map_or("0".to_string(), |l| l.rate.to_string()));
        row.push(u.backlog.to_string());
    }
    row.extend(r.task_states.iter().map(|s| s.as_str().to_string()));
    row
}

fn to_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn slot_csv(scenario: &Scenario, records: &[SlotRecord]) -> Result<Vec<u8>> {
    to_bytes(slot_header(scenario), records.iter().map(slot_row))
}

pub fn summary_csv(runs: &[(u64, std::result::Result<RunSummary, String>)]) -> Result<Vec<u8>> {
    let header = [
        "scheme",
        "seed",
        "subchannels",
        "slots",
        "mean_sum_rate",
        "completion_time",
        "qos_violations",
        "delivered_bits",
        "u2u_link_slots",
        "bnb_nodes",
        "dc_iterations",
        "suboptimal_slots",
        "error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = runs.iter().map(|(seed, r)| match r {
        Ok(s) => vec![
            s.scheme.to_string(),
            s.seed.to_string(),
            s.subchannels.to_string(),
            s.slots.to_string(),
            s.mean_sum_rate.to_string(),
            s.completion_time.to_string(),
            s.qos_violations.to_string(),
            s.delivered_bits.to_string(),
            s.u2u_link_slots.to_string(),
            s.bnb_nodes.to_string(),
            s.dc_iterations.to_string(),
            s.suboptimal_slots.to_string(),
            String::new(),
        ],
        Err(e) => {
            let mut v = vec![String::new(), seed.to_string()];
            v.extend(std::iter::repeat_n(String::new(), 10));
            v.push(e.clone());
            v
        }
    });
    to_bytes(header, rows)
}

pub fn aggregate_csv(rows: &[(String, Interval)]) -> Result<Vec<u8>> {
    let header = ["group", "metric", "n", "mean", "ci_low", "ci_high"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    to_bytes(
        header,
        rows.iter().map(|(g, i)| {
            vec![
                g.clone(),
                i.metric.to_string(),
                i.n.to_string(),
                i.mean.to_string(),
                i.low.to_string(),
                i.high.to_string(),
            ]
        }),
    )
}

/// Write via a temporary file and rename, so readers never see a partial
/// file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
