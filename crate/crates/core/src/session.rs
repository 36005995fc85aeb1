//! Labeled session logs, their CSV representation and replay.
//!
//! Schema (one header line, LF line endings, no quoting):
//!
//! ```text
//! t_ms,seq,participant,gesture,region,f0,...,f8,b0,...,b8
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read};
use std::path::Path;

use thiserror::Error;

use crate::model::{
    parse_region_token, region_token, validate_participant, Counts, GestureKind, ModelError, SensorFrame, TrialLabel,
    SENSOR_COUNT,
};

pub const CSV_HEADER: &str =
    "t_ms,seq,participant,gesture,region,f0,f1,f2,f3,f4,f5,f6,f7,f8,b0,b1,b2,b3,b4,b5,b6,b7,b8";

const COLUMN_COUNT: usize = 5 + 2 * SENSOR_COUNT;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error on line {line}: {message}")]
    Data { line: u64, message: String },
    #[error("frame at t_ms={t_ms} follows t_ms={previous}")]
    OutOfOrder { previous: u32, t_ms: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRow {
    pub frame: SensorFrame,
    pub label: TrialLabel,
}

/// Ordered labeled frames of one recording.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionLog {
    participant: String,
    rows: Vec<LogRow>,
}

impl SessionLog {
    pub fn new(participant: impl Into<String>) -> Result<Self, SessionError> {
        let participant = participant.into();
        validate_participant(&participant)?;
        Ok(Self {
            participant,
            rows: Vec::new(),
        })
    }

    /// Session participant. Empty only for a log that was created without one
    /// and has no rows; otherwise it is the first row's participant or the one
    /// given to [`SessionLog::new`].
    pub fn participant(&self) -> &str {
        &self.participant
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last_t_ms(&self) -> Option<u32> {
        self.rows.last().map(|r| r.frame.t_ms())
    }

    /// Appends a row; `t_ms` must not decrease.
    pub fn push(&mut self, frame: SensorFrame, label: TrialLabel) -> Result<(), SessionError> {
        if let Some(previous) = self.last_t_ms() {
            if frame.t_ms() < previous {
                return Err(SessionError::OutOfOrder {
                    previous,
                    t_ms: frame.t_ms(),
                });
            }
        }
        if self.participant.is_empty() {
            self.participant = label.participant().to_string();
        }
        self.rows.push(LogRow { frame, label });
        Ok(())
    }

    pub fn frames(&self) -> impl Iterator<Item = &SensorFrame> + '_ {
        self.rows.iter().map(|r| &r.frame)
    }

    /// Frames labeled `none`.
    pub fn idle_frames(&self) -> impl Iterator<Item = &SensorFrame> + '_ {
        self.rows.iter().filter(|r| r.label.is_idle()).map(|r| &r.frame)
    }

    /// Maximal runs of consecutive rows sharing the same non-`none` label.
    pub fn trials(&self) -> Vec<Trial<'_>> {
        let mut trials = Vec::new();
        let mut i = 0;
        while i < self.rows.len() {
            let label = &self.rows[i].label;
            let len = self.rows[i..].iter().take_while(|r| &r.label == label).count();
            if !label.is_idle() {
                trials.push(Trial {
                    label,
                    rows: &self.rows[i..i + len],
                });
            }
            i += len;
        }
        trials
    }
}

/// One labeled trial window inside a [`SessionLog`].
#[derive(Debug, Clone, Copy)]
pub struct Trial<'a> {
    pub label: &'a TrialLabel,
    pub rows: &'a [LogRow],
}

impl<'a> Trial<'a> {
    pub fn frames(&self) -> impl Iterator<Item = &'a SensorFrame> + 'a {
        self.rows.iter().map(|r| &r.frame)
    }
}

/// Frames of a log in recorded order, with their labels.
pub fn replay(log: &SessionLog) -> impl Iterator<Item = (&SensorFrame, &TrialLabel)> + '_ {
    log.rows.iter().map(|r| (&r.frame, &r.label))
}

pub fn write_csv(log: &SessionLog) -> String {
    let mut out = String::with_capacity(CSV_HEADER.len() + 1 + log.len() * 96);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &log.rows {
        let (f, l) = (&row.frame, &row.label);
        // Writing into a String cannot fail.
        let _ = write!(
            out,
            "{},{},{},{},{}",
            f.t_ms(),
            f.seq(),
            l.participant(),
            l.gesture().token(),
            region_token(l.region())
        );
        for c in f.filtered().iter().chain(f.baseline()) {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

pub fn read_csv(text: &str) -> Result<SessionLog, SessionError> {
    read_csv_from(text.as_bytes())
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<SessionLog, SessionError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| SessionError::Schema(e.to_string()))?.clone();
    check_header(&header)?;

    let mut log = SessionLog::default();
    for record in rdr.records() {
        let record = record.map_err(|e| SessionError::Data {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let data_err = |message: String| SessionError::Data { line, message };
        if record.len() != COLUMN_COUNT {
            return Err(data_err(format!(
                "expected {COLUMN_COUNT} fields, found {}",
                record.len()
            )));
        }

        let t_ms: u32 = parse_int(&record[0], "t_ms").map_err(data_err)?;
        let seq: u16 = parse_int(&record[1], "seq").map_err(data_err)?;
        let gesture: GestureKind = record[3].parse().map_err(|e: ModelError| data_err(e.to_string()))?;
        let region = parse_region_token(&record[4]).map_err(|e| data_err(e.to_string()))?;
        let label = TrialLabel::new(gesture, region, &record[2]).map_err(|e| data_err(e.to_string()))?;

        let mut counts = [0u16; 2 * SENSOR_COUNT];
        for (k, c) in counts.iter_mut().enumerate() {
            *c = parse_int(&record[5 + k], &header[5 + k]).map_err(data_err)?;
        }
        let filtered: Counts = counts[..SENSOR_COUNT].try_into().expect("nine counts");
        let baseline: Counts = counts[SENSOR_COUNT..].try_into().expect("nine counts");
        let frame = SensorFrame::new(seq, t_ms, filtered, baseline).map_err(|e| data_err(e.to_string()))?;
        log.push(frame, label).map_err(|e| data_err(e.to_string()))?;
    }
    Ok(log)
}

fn check_header(header: &csv::StringRecord) -> Result<(), SessionError> {
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    for (i, want) in expected.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) => {
                return Err(SessionError::Schema(format!(
                    "column {} is `{got}`, expected `{want}`",
                    i + 1
                )))
            }
            None => return Err(SessionError::Schema(format!("missing column `{want}`"))),
        }
    }
    if let Some(extra) = header.get(expected.len()) {
        return Err(SessionError::Schema(format!("unexpected column `{extra}`")));
    }
    Ok(())
}

fn parse_int<T: std::str::FromStr>(field: &str, column: &str) -> Result<T, String> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("`{column}` value `{field}` is not a non-negative integer"));
    }
    field
        .parse()
        .map_err(|_| format!("`{column}` value `{field}` is out of range"))
}

pub fn load(path: impl AsRef<Path>) -> Result<SessionLog, SessionError> {
    let file = fs::File::open(path)?;
    read_csv_from(io::BufReader::new(file))
}

pub fn save(log: &SessionLog, path: impl AsRef<Path>) -> Result<(), SessionError> {
    fs::write(path, write_csv(log))?;
    Ok(())
}
