//! Per-bucket, per-sub-flow throughput timeline and its CSV form.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Duration;

use crate::error::Result;
use crate::model::{InterfacePair, SubflowId};

pub const CSV_HEADER: &str = "bucket_start_ms,subflow_id,pair,bytes_acked,throughput_bps,low_prio,alive";

/// Bytes acknowledged on one sub-flow during one bucket. `low_prio` and
/// `alive` are sampled at the end of the bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThroughputBucket {
    pub bucket_start_ms: u64,
    pub subflow_id: SubflowId,
    pub pair: InterfacePair,
    pub bytes_acked: u64,
    pub low_prio: bool,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenealogyEntry {
    pub subflow_id: SubflowId,
    pub pair: InterfacePair,
    pub created_at: Duration,
    pub died_at: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineReport {
    pub bucket_ms: u64,
    pub duration_ms: u64,
    /// Sorted by (bucket_start_ms, subflow_id).
    pub rows: Vec<ThroughputBucket>,
    pub subflow_genealogy: Vec<GenealogyEntry>,
}

impl TimelineReport {
    pub fn bucket_count(&self) -> usize {
        if self.bucket_ms == 0 {
            return 0;
        }
        self.duration_ms.div_ceil(self.bucket_ms) as usize
    }

    pub fn rows_in_bucket(&self, bucket: usize) -> impl Iterator<Item = &ThroughputBucket> {
        let start = bucket as u64 * self.bucket_ms;
        self.rows.iter().filter(move |r| r.bucket_start_ms == start)
    }

    pub fn bytes(&self, bucket: usize, id: SubflowId) -> u64 {
        self.rows_in_bucket(bucket)
            .find(|r| r.subflow_id == id)
            .map_or(0, |r| r.bytes_acked)
    }

    /// Sub-flows that acknowledged data during `bucket`.
    pub fn active_subflows(&self, bucket: usize) -> BTreeSet<SubflowId> {
        self.rows_in_bucket(bucket)
            .filter(|r| r.bytes_acked > 0)
            .map(|r| r.subflow_id)
            .collect()
    }

    /// Interface pairs that carried data during `bucket`.
    pub fn active_pairs(&self, bucket: usize) -> BTreeSet<InterfacePair> {
        self.rows_in_bucket(bucket)
            .filter(|r| r.bytes_acked > 0)
            .map(|r| r.pair)
            .collect()
    }

    pub fn total_bytes(&self, bucket: usize) -> u64 {
        self.rows_in_bucket(bucket).map(|r| r.bytes_acked).sum()
    }

    pub fn throughput_bps(&self, bytes: u64) -> u64 {
        bytes * 8 * 1000 / self.bucket_ms
    }
}

/// Writes the CSV timeline, then the sub-flow genealogy as `#` comment
/// lines (`# genealogy,<id>,<pair>,<created_ms>,<died_ms or ->`).
pub fn emit_csv(report: &TimelineReport, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.bucket_start_ms,
            row.subflow_id,
            row.pair,
            row.bytes_acked,
            report.throughput_bps(row.bytes_acked),
            u8::from(row.low_prio),
            u8::from(row.alive),
        )?;
    }
    for entry in &report.subflow_genealogy {
        let died = entry
            .died_at
            .map_or_else(|| "-".to_string(), |d| d.as_millis().to_string());
        writeln!(
            out,
            "# genealogy,{},{},{},{}",
            entry.subflow_id,
            entry.pair,
            entry.created_at.as_millis(),
            died
        )?;
    }
    Ok(())
}
