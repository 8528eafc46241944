use std::io::Write;

use serde_json::{json, Value};

use super::engine::{EventKind, RoundTrace};
use crate::error::Result;

/// Exported iteration index: 1-based for per-iteration steps, 0 for the
/// round-level broadcast and parameter upload.
fn export_iter(kind: EventKind, iteration: usize) -> usize {
    match kind {
        EventKind::SmDone | EventKind::CmDone => 0,
        _ => iteration + 1,
    }
}

/// Columns `round, time_s, kind, client, iteration`; clients are 1-based.
pub fn write_events_csv<W: Write>(out: W, rounds: &[(usize, &RoundTrace)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "time_s", "kind", "client", "iteration"])?;
    for (n, tr) in rounds {
        for e in &tr.events {
            w.write_record([
                n.to_string(),
                e.time.to_string(),
                e.kind.as_str().to_string(),
                (e.client + 1).to_string(),
                export_iter(e.kind, e.iteration).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `{clients: [{id, bars: [{kind, start_s, end_s, iter}]}]}` with bars in
/// start order; times are relative to the round start.
pub fn gantt_json(trace: &RoundTrace) -> Value {
    let k = trace.steps.clients.len();
    let clients: Vec<Value> = (0..k)
        .map(|c| {
            let mut bars: Vec<_> = trace.bars.iter().filter(|b| b.client == c).collect();
            bars.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
            let bars: Vec<Value> = bars
                .into_iter()
                .map(|b| {
                    json!({
                        "kind": b.kind.step_label(),
                        "start_s": b.start - trace.t_start,
                        "end_s": b.end - trace.t_start,
                        "iter": export_iter(b.kind, b.iteration),
                    })
                })
                .collect();
            json!({ "id": c + 1, "bars": bars })
        })
        .collect();
    json!({ "clients": clients })
}
