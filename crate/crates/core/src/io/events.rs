//! Event log: `#` header block, then `time_ps,channel,kind,herald` records.
//!
//! ```text
//! # fringe-events 1
//! # seed 7
//! # config {"seed":7,...}
//! # config-sha256 5f1c...
//! time_ps,channel,kind,herald
//! 412345,13,signal,D1
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{malformed, IoError, RunConfig};
use crate::montecarlo::{DetectionEvent, EventKind};
use crate::polarization::Port;

pub const EVENTS_FORMAT_VERSION: &str = "1";

const MAGIC: &str = "# fringe-events ";
const COLUMNS: &str = "time_ps,channel,kind,herald";

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub seed: u64,
    /// Compact JSON of the run configuration, stored verbatim.
    pub config: String,
    pub events: Vec<DetectionEvent>,
}

impl EventLog {
    pub fn new(seed: u64, config: &RunConfig, events: Vec<DetectionEvent>) -> Self {
        Self {
            seed,
            config: serde_json::to_string(config).expect("config serializes"),
            events,
        }
    }

    pub fn config_digest(&self) -> String {
        sha256_hex(self.config.as_bytes())
    }

    pub fn run_config(&self) -> Result<RunConfig, IoError> {
        super::parse_config(&self.config)
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn render(log: &EventLog) -> Result<String, IoError> {
    let mut out = String::with_capacity(64 + 24 * log.events.len());
    out.push_str(&format!("{MAGIC}{EVENTS_FORMAT_VERSION}\n"));
    out.push_str(&format!("# seed {}\n", log.seed));
    if log.config.contains('\n') {
        return Err(malformed(3, "config JSON must be a single line"));
    }
    out.push_str(&format!("# config {}\n", log.config));
    out.push_str(&format!("# config-sha256 {}\n", log.config_digest()));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(COLUMNS.split(',')).expect("in-memory write");
    let mut prev = i64::MIN;
    for (i, e) in log.events.iter().enumerate() {
        if e.time_ps < prev {
            return Err(IoError::Unsorted {
                line: 6 + i,
                time_ps: e.time_ps,
            });
        }
        prev = e.time_ps;
        w.write_record([
            e.time_ps.to_string().as_str(),
            e.channel.to_string().as_str(),
            e.kind.label(),
            e.herald.map_or("", Port::label),
        ])
        .expect("in-memory write");
    }
    let body = w.into_inner().expect("in-memory flush");
    out.push_str(std::str::from_utf8(&body).expect("ascii"));
    Ok(out)
}

/// Writes `log`; records must already be time-sorted.
pub fn write_events(path: &Path, log: &EventLog) -> Result<(), IoError> {
    let text = render(log)?;
    fs::write(path, text).map_err(|e| IoError::file(path, e))
}

fn header_value<'a>(line: Option<&'a str>, n: usize, key: &str) -> Result<&'a str, IoError> {
    let prefix = format!("# {key} ");
    line.and_then(|l| l.strip_prefix(prefix.as_str()))
        .ok_or_else(|| malformed(n, format!("expected header `{}<value>`", prefix)))
}

pub fn read_events(path: &Path) -> Result<EventLog, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_events(&text)
}

fn parse_events(text: &str) -> Result<EventLog, IoError> {
    let mut lines = text.split_inclusive('\n');
    let mut next = || lines.next().map(|l| l.strip_suffix('\n').unwrap_or(l));

    let first = next().ok_or_else(|| malformed(1, "empty file"))?;
    let version = first
        .strip_prefix(MAGIC)
        .ok_or_else(|| malformed(1, "not a fringe event log"))?;
    if version != EVENTS_FORMAT_VERSION {
        return Err(IoError::Version {
            found: version.to_string(),
            expected: EVENTS_FORMAT_VERSION.to_string(),
        });
    }
    let seed = header_value(next(), 2, "seed")?
        .parse::<u64>()
        .map_err(|e| malformed(2, format!("seed: {e}")))?;
    let config = header_value(next(), 3, "config")?.to_string();
    let digest = header_value(next(), 4, "config-sha256")?.to_string();
    let computed = sha256_hex(config.as_bytes());
    if digest != computed {
        return Err(IoError::Digest {
            header: digest,
            computed,
        });
    }
    if next() != Some(COLUMNS) {
        return Err(malformed(5, format!("expected column header `{COLUMNS}`")));
    }
    let body: String = lines.collect();
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(body.as_bytes());
    let mut events = Vec::new();
    let mut prev = i64::MIN;
    for (i, rec) in reader.records().enumerate() {
        let line = 6 + i;
        let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(malformed(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let time_ps: i64 = rec[0].parse().map_err(|e| malformed(line, format!("time_ps: {e}")))?;
        if time_ps < 0 {
            return Err(malformed(line, "negative time_ps"));
        }
        let channel: u16 = rec[1].parse().map_err(|e| malformed(line, format!("channel: {e}")))?;
        let kind = EventKind::parse(&rec[2]).ok_or_else(|| malformed(line, format!("unknown kind `{}`", &rec[2])))?;
        let herald = match &rec[3] {
            "" => None,
            s => Some(Port::parse(s).ok_or_else(|| malformed(line, format!("unknown herald `{s}`")))?),
        };
        if time_ps < prev {
            return Err(IoError::Unsorted { line, time_ps });
        }
        prev = time_ps;
        events.push(DetectionEvent {
            time_ps,
            channel,
            kind,
            herald,
        });
    }
    let log = EventLog { seed, config, events };
    let last_channel = log.run_config()?.optics.n_pixels + 1;
    if let Some(i) = log.events.iter().position(|e| e.channel as usize > last_channel) {
        return Err(malformed(6 + i, format!("channel {} beyond {last_channel}", log.events[i].channel)));
    }
    Ok(log)
}
