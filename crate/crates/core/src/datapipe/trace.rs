use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::geometry::{quat_normalize, Quaternion};

use super::DataError;

pub const TRACE_COLUMNS: [&str; 10] =
    ["timestamp_us", "gaze_x", "gaze_y", "confidence", "qw", "qx", "qy", "qz", "scene_id", "session_id"];

/// Gaze part of a trace row, in raw device units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawGaze {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// One CSV row. Either half may be absent so gaze and head streams can be
/// recorded at different instants; a row always carries at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTraceRecord {
    pub timestamp_us: i64,
    pub gaze: Option<RawGaze>,
    pub head: Option<Quaternion>,
    pub scene_id: String,
    pub session_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t_us: i64,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadSample {
    pub t_us: i64,
    pub q: Quaternion,
}

/// All records of one recording session, sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSession {
    pub scene_id: String,
    pub session_id: String,
    pub records: Vec<RawTraceRecord>,
}

impl TraceSession {
    pub fn gaze_stream(&self) -> Vec<GazeSample> {
        self.records
            .iter()
            .filter_map(|r| r.gaze.map(|g| GazeSample { t_us: r.timestamp_us, x: g.x, y: g.y, confidence: g.confidence }))
            .collect()
    }

    /// Head samples with quaternions normalized to unit length.
    pub fn head_stream(&self) -> Result<Vec<HeadSample>, DataError> {
        self.records
            .iter()
            .filter_map(|r| r.head.map(|q| (r.timestamp_us, q)))
            .map(|(t_us, q)| Ok(HeadSample { t_us, q: quat_normalize(q)? }))
            .collect()
    }
}

/// Reads a trace CSV and groups it into sessions ordered by `session_id`.
///
/// Rows inside a session are sorted by timestamp; rows sharing a timestamp
/// are merged, later rows overriding the fields they carry.
pub fn ingest_traces(path: &Path) -> Result<Vec<TraceSession>, DataError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| DataError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_traces(&text)
}

pub fn parse_traces(text: &str) -> Result<Vec<TraceSession>, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| DataError::Parse { line: 1, message: e.to_string() })?.clone();
    let mut idx = [0usize; 10];
    for (slot, name) in idx.iter_mut().zip(TRACE_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))?;
    }

    let mut sessions: BTreeMap<String, TraceSession> = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| row.get(idx[i]).unwrap_or("");
        let record = parse_record(line, &field)?;
        let entry = sessions.entry(record.session_id.clone()).or_insert_with(|| TraceSession {
            scene_id: record.scene_id.clone(),
            session_id: record.session_id.clone(),
            records: Vec::new(),
        });
        if entry.scene_id != record.scene_id {
            return Err(DataError::Parse {
                line,
                message: format!("session {} switches scene {} -> {}", record.session_id, entry.scene_id, record.scene_id),
            });
        }
        entry.records.push(record);
    }

    let mut out = Vec::with_capacity(sessions.len());
    for (_, mut s) in sessions {
        s.records.sort_by_key(|r| r.timestamp_us);
        let mut merged: Vec<RawTraceRecord> = Vec::with_capacity(s.records.len());
        for r in s.records {
            match merged.last_mut() {
                Some(prev) if prev.timestamp_us == r.timestamp_us => {
                    if r.gaze.is_some() {
                        prev.gaze = r.gaze;
                    }
                    if r.head.is_some() {
                        prev.head = r.head;
                    }
                }
                _ => merged.push(r),
            }
        }
        if merged.windows(2).any(|w| w[0].timestamp_us >= w[1].timestamp_us) {
            return Err(DataError::NonMonotonicTimestamp(s.session_id));
        }
        s.records = merged;
        out.push(s);
    }
    Ok(out)
}

fn parse_record<'a>(line: usize, field: &impl Fn(usize) -> &'a str) -> Result<RawTraceRecord, DataError> {
    let num = |i: usize| -> Result<Option<f64>, DataError> {
        let s = field(i);
        if s.is_empty() {
            return Ok(None);
        }
        let v: f64 = s.parse().map_err(|_| DataError::Parse {
            line,
            message: format!("column {}: not a number: {s:?}", TRACE_COLUMNS[i]),
        })?;
        if !v.is_finite() {
            return Err(DataError::Parse { line, message: format!("column {}: non-finite value", TRACE_COLUMNS[i]) });
        }
        Ok(Some(v))
    };
    let ts = field(0);
    let timestamp_us = match ts.parse::<i64>() {
        Ok(v) => v,
        Err(_) => num(0)?
            .map(|v| v.round() as i64)
            .ok_or_else(|| DataError::Parse { line, message: "missing timestamp".into() })?,
    };

    let gaze = match (num(1)?, num(2)?, num(3)?) {
        (None, None, None) => None,
        (Some(x), Some(y), Some(confidence)) => {
            if !(0.0..=1.0).contains(&confidence) {
                return Err(DataError::Parse { line, message: format!("confidence {confidence} outside [0, 1]") });
            }
            Some(RawGaze { x, y, confidence })
        }
        _ => return Err(DataError::Parse { line, message: "partial gaze fields".into() }),
    };
    let head = match (num(4)?, num(5)?, num(6)?, num(7)?) {
        (None, None, None, None) => None,
        (Some(w), Some(x), Some(y), Some(z)) => Some(Quaternion::new(w, x, y, z)),
        _ => return Err(DataError::Parse { line, message: "partial quaternion fields".into() }),
    };
    if gaze.is_none() && head.is_none() {
        return Err(DataError::Parse { line, message: "row carries neither gaze nor head data".into() });
    }
    let scene_id = field(8).to_string();
    let session_id = field(9).to_string();
    if scene_id.is_empty() || session_id.is_empty() {
        return Err(DataError::Parse { line, message: "empty scene_id or session_id".into() });
    }
    Ok(RawTraceRecord { timestamp_us, gaze, head, scene_id, session_id })
}

/// Writes records in the trace CSV schema, in the order given.
pub fn write_traces<'a>(path: &Path, records: impl IntoIterator<Item = &'a RawTraceRecord>) -> Result<(), DataError> {
    let io = |e: std::io::Error| DataError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{}", TRACE_COLUMNS.join(",")).map_err(io)?;
    for r in records {
        let (gx, gy, gc) = match r.gaze {
            Some(g) => (g.x.to_string(), g.y.to_string(), g.confidence.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        let q = match r.head {
            Some(q) => format!("{},{},{},{}", q.w, q.x, q.y, q.z),
            None => ",,,".to_string(),
        };
        writeln!(w, "{},{gx},{gy},{gc},{q},{},{}", r.timestamp_us, r.scene_id, r.session_id).map_err(io)?;
    }
    w.flush().map_err(io)
}
