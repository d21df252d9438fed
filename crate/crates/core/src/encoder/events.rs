//! DVS events and their accumulation into single-channel frames.
//!
//! Two on-disk formats are supported:
//!
//! * CSV: one event per line, `x,y,t,p` as integers, `p` in `{-1, 1}`, no header.
//! * Binary: packed little-endian records of `u16 x, u16 y, u64 t, i8 p`
//!   (13 bytes each), no header and no padding.

use std::io::{BufRead, Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BINARY_RECORD_LEN: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    /// Microseconds.
    pub t: u64,
    pub p: i8,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: i8) -> Self {
        Self { x, y, t, p }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Csv,
    Bin,
}

impl std::str::FromStr for EventFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "bin" => Ok(Self::Bin),
            other => Err(format!("unknown event format {other:?} (expected csv or bin)")),
        }
    }
}

/// Signed polarity sum per pixel over events with `t` in `window`.
/// Returns a `[1, height, width]` frame.
pub fn accumulate_events(
    events: &[Event],
    height: usize,
    width: usize,
    window: Range<u64>,
) -> Result<Tensor> {
    if window.is_empty() {
        return Err(Error::invalid(
            "accumulate_events",
            format!("empty window [{}, {})", window.start, window.end),
        ));
    }
    let mut frame = Tensor::zeros(&[1, height, width]);
    let data = frame.data_mut();
    for (index, e) in events.iter().enumerate() {
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= width || y >= height {
            return Err(Error::InvalidEvent {
                index,
                reason: format!("({x}, {y}) outside {width}x{height} frame"),
            });
        }
        if e.p != 1 && e.p != -1 {
            return Err(Error::InvalidEvent {
                index,
                reason: format!("polarity {} is not -1 or 1", e.p),
            });
        }
        if window.contains(&e.t) {
            data[y * width + x] += e.p as f64;
        }
    }
    Ok(frame)
}

pub fn read_events_csv(reader: impl BufRead) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        events.push(parse_csv_event(line).map_err(|reason| Error::Parse {
            line: line_no,
            reason,
        })?);
    }
    Ok(events)
}

fn parse_csv_event(line: &str) -> std::result::Result<Event, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let [x, y, t, p] = fields[..] else {
        return Err(format!("expected 4 fields x,y,t,p, found {}", fields.len()));
    };
    let bad = |name: &str, v: &str| format!("invalid {name} value {v:?}");
    let event = Event {
        x: x.parse().map_err(|_| bad("x", x))?,
        y: y.parse().map_err(|_| bad("y", y))?,
        t: t.parse().map_err(|_| bad("t", t))?,
        p: p.parse().map_err(|_| bad("p", p))?,
    };
    if event.p != 1 && event.p != -1 {
        return Err(format!("polarity {} is not -1 or 1", event.p));
    }
    Ok(event)
}

pub fn write_events_csv(events: &[Event], mut writer: impl Write) -> std::io::Result<()> {
    for e in events {
        writeln!(writer, "{},{},{},{}", e.x, e.y, e.t, e.p)?;
    }
    Ok(())
}

pub fn read_events_bin(mut reader: impl Read) -> Result<Vec<Event>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| Error::Parse {
        line: 0,
        reason: e.to_string(),
    })?;
    if bytes.len() % BINARY_RECORD_LEN != 0 {
        return Err(Error::Parse {
            line: bytes.len() / BINARY_RECORD_LEN + 1,
            reason: format!(
                "truncated record: {} trailing bytes",
                bytes.len() % BINARY_RECORD_LEN
            ),
        });
    }
    bytes
        .chunks_exact(BINARY_RECORD_LEN)
        .enumerate()
        .map(|(i, r)| {
            let event = Event {
                x: u16::from_le_bytes([r[0], r[1]]),
                y: u16::from_le_bytes([r[2], r[3]]),
                t: u64::from_le_bytes(r[4..12].try_into().expect("8 bytes")),
                p: r[12] as i8,
            };
            if event.p != 1 && event.p != -1 {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("polarity {} is not -1 or 1", event.p),
                });
            }
            Ok(event)
        })
        .collect()
}

pub fn write_events_bin(events: &[Event], mut writer: impl Write) -> std::io::Result<()> {
    for e in events {
        writer.write_all(&e.x.to_le_bytes())?;
        writer.write_all(&e.y.to_le_bytes())?;
        writer.write_all(&e.t.to_le_bytes())?;
        writer.write_all(&[e.p as u8])?;
    }
    Ok(())
}

pub fn load_events(path: &Path, format: EventFormat) -> Result<Vec<Event>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        EventFormat::Csv => read_events_csv(std::io::BufReader::new(file)),
        EventFormat::Bin => read_events_bin(file),
    }
}

/// Writes a `[1, H, W]` (or `[H, W]`) frame as `H` lines of `W` values.
pub fn write_frame_csv(frame: &Tensor, mut writer: impl Write) -> std::io::Result<()> {
    let s = frame.shape();
    let w = s[s.len() - 1];
    for row in frame.data().chunks(w.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(writer, "{}", line.join(","))?;
    }
    Ok(())
}
