//! `trace-v1`: gzip-compressed JSON lines holding one finished episode.
//!
//! Line order: header (with the instance), plan, one line per slot of the
//! ledger, one line per task record, footer.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mec::{SlotLedger, SlotUsage, TaskRecord};
use crate::model::Instance;
use crate::routing::RoutePlan;

pub const TRACE_SCHEMA: &str = "trace-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub instance: Instance,
    pub plan: RoutePlan,
    pub ledger: SlotLedger,
    pub records: Vec<TaskRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header {
        schema: String,
        instance: Box<Instance>,
        energy_cap: Option<Vec<f64>>,
        energy_used: Vec<f64>,
        finalized: bool,
    },
    Plan {
        plan: RoutePlan,
    },
    Slot {
        t: usize,
        usage: SlotUsage,
    },
    Task {
        index: usize,
        record: TaskRecord,
    },
    Footer {
        n_slots: usize,
        n_tasks: usize,
    },
}

pub fn write_trace(path: &Path, trace: &EpisodeTrace) -> Result<()> {
    let file = File::create(path)?;
    let mut out = GzEncoder::new(BufWriter::new(file), Compression::default());
    let mut put = |line: &Line| -> Result<()> {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    put(&Line::Header {
        schema: TRACE_SCHEMA.into(),
        instance: Box::new(trace.instance.clone()),
        energy_cap: trace.ledger.energy_cap.clone(),
        energy_used: trace.ledger.energy_used.clone(),
        finalized: trace.ledger.finalized,
    })?;
    put(&Line::Plan {
        plan: trace.plan.clone(),
    })?;
    for (t, usage) in trace.ledger.slots.iter().enumerate() {
        put(&Line::Slot {
            t,
            usage: usage.clone(),
        })?;
    }
    for (index, record) in trace.records.iter().enumerate() {
        put(&Line::Task {
            index,
            record: record.clone(),
        })?;
    }
    put(&Line::Footer {
        n_slots: trace.ledger.slots.len(),
        n_tasks: trace.records.len(),
    })?;
    out.finish()?.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<EpisodeTrace> {
    let reader = BufReader::new(GzDecoder::new(File::open(path)?));
    let mut header = None;
    let mut plan = None;
    let mut slots = Vec::new();
    let mut records = Vec::new();
    let mut footer = None;
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line)? {
            Line::Header {
                schema,
                instance,
                energy_cap,
                energy_used,
                finalized,
            } => {
                if schema != TRACE_SCHEMA {
                    return Err(Error::Config(format!("unsupported trace schema {schema:?}")));
                }
                header = Some((instance, energy_cap, energy_used, finalized));
            }
            Line::Plan { plan: p } => plan = Some(p),
            Line::Slot { t, usage } => {
                if t != slots.len() {
                    return Err(Error::Input(format!("trace line {}: slot {t} out of order", no + 1)));
                }
                slots.push(usage);
            }
            Line::Task { index, record } => {
                if index != records.len() {
                    return Err(Error::Input(format!("trace line {}: task {index} out of order", no + 1)));
                }
                records.push(record);
            }
            Line::Footer { n_slots, n_tasks } => footer = Some((n_slots, n_tasks)),
        }
    }
    let (instance, energy_cap, energy_used, finalized) =
        header.ok_or_else(|| Error::Input("trace has no header".into()))?;
    let plan = plan.ok_or_else(|| Error::Input("trace has no plan".into()))?;
    match footer {
        Some((s, k)) if s == slots.len() && k == records.len() => {}
        _ => return Err(Error::Input("trace is truncated".into())),
    }
    Ok(EpisodeTrace {
        instance: *instance,
        plan,
        ledger: SlotLedger {
            slots,
            energy_used,
            energy_cap,
            finalized,
        },
        records,
    })
}
