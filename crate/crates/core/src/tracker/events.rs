//! Event stream serialization: tab-separated lines or JSON lines.

use std::io::{BufRead, Write};

use super::AlignmentEvent;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Tsv,
    JsonLines,
}

impl std::str::FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(EventFormat::Tsv),
            "jsonl" | "json-lines" => Ok(EventFormat::JsonLines),
            other => Err(Error::Config(format!("unknown event format {other:?}"))),
        }
    }
}

pub fn write_event<W: Write + ?Sized>(out: &mut W, e: &AlignmentEvent, format: EventFormat) -> Result<()> {
    match format {
        EventFormat::Tsv => writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            e.target_index, e.target_time_ms, e.reference_index, e.reference_time_ms, e.normalized_cost
        )?,
        EventFormat::JsonLines => {
            serde_json::to_writer(&mut *out, e)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn write_events<W: Write + ?Sized>(out: &mut W, events: &[AlignmentEvent], format: EventFormat) -> Result<()> {
    for e in events {
        write_event(out, e, format)?;
    }
    Ok(())
}

/// Reads either format, detected per line. Blank lines and `#` comments are skipped.
pub fn read_events(input: impl BufRead) -> Result<Vec<AlignmentEvent>> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        if line.starts_with('{') {
            events.push(serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?);
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err(format!(
                "expected 5 tab-separated fields, got {}",
                fields.len()
            )));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| parse_err(format!("{s:?}: {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| parse_err(format!("{s:?}: {e}")));
        events.push(AlignmentEvent {
            target_index: int(fields[0])?,
            target_time_ms: real(fields[1])?,
            reference_index: int(fields[2])?,
            reference_time_ms: real(fields[3])?,
            normalized_cost: real(fields[4])?,
            exhausted: false,
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<AlignmentEvent> {
        vec![
            AlignmentEvent {
                target_index: 0,
                target_time_ms: 0.0,
                reference_index: 2,
                reference_time_ms: 80.0,
                normalized_cost: 0.125,
                exhausted: false,
            },
            AlignmentEvent {
                target_index: 3,
                target_time_ms: 120.0,
                reference_index: 4,
                reference_time_ms: 160.0,
                normalized_cost: 1.0 / 3.0,
                exhausted: false,
            },
        ]
    }

    #[test]
    fn tsv_line_layout() {
        let mut buf = Vec::new();
        write_events(&mut buf, &sample()[..1], EventFormat::Tsv).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0\t0\t2\t80\t0.125\n");
    }

    #[test]
    fn both_formats_read_back() {
        for fmt in [EventFormat::Tsv, EventFormat::JsonLines] {
            let mut buf = Vec::new();
            write_events(&mut buf, &sample(), fmt).unwrap();
            assert_eq!(read_events(&buf[..]).unwrap(), sample());
        }
    }

    #[test]
    fn jsonl_fields() {
        let mut buf = Vec::new();
        write_events(&mut buf, &sample()[..1], EventFormat::JsonLines).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for key in [
            "target_index",
            "target_time_ms",
            "reference_index",
            "reference_time_ms",
            "normalized_cost",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = read_events(&b"0\t0\t1\t40\t0.5\nbad line\n"[..]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
