//! Conversion of external homodyne records into the canonical batch format.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{PhaseIntervals, QuadratureBatch, QuadratureEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSchema {
    pub mode_column: String,
    pub phase_column: String,
    pub value_column: String,
    /// Without it, records are paired across modes by order of appearance
    /// within each phase slot.
    pub repetition_column: Option<String>,
    /// Index of the first mode in the file, usually 0 or 1.
    pub mode_base: u16,
    pub delimiter: char,
    pub state_id: String,
    pub intervals: PhaseIntervals,
}

impl Default for IngestSchema {
    fn default() -> Self {
        Self {
            mode_column: "mode".into(),
            phase_column: "phase".into(),
            value_column: "value".into(),
            repetition_column: None,
            mode_base: 1,
            delimiter: ',',
            state_id: "ingested".into(),
            intervals: PhaseIntervals::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub mode_count: usize,
    /// Rows whose phase was outside `[0, 2π)` and was wrapped.
    pub wrapped_phases: usize,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::InvalidInput(format!("column `{name}` not found in the header")))
}

pub fn ingest_csv<R: Read>(input: R, schema: &IngestSchema) -> Result<(QuadratureBatch, IngestReport)> {
    schema.intervals.validate()?;
    if !schema.delimiter.is_ascii() {
        return Err(Error::InvalidConfig("the delimiter must be an ASCII character".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::InvalidInput("the file is empty".into()));
    }
    let (mi, pi, vi) = (
        column(&headers, &schema.mode_column)?,
        column(&headers, &schema.phase_column)?,
        column(&headers, &schema.value_column)?,
    );
    let ri = schema.repetition_column.as_deref().map(|c| column(&headers, c)).transpose()?;

    let mut batch = QuadratureBatch::new(schema.state_id.clone(), 0);
    let mut counters: HashMap<(u16, u8), u32> = HashMap::new();
    let mut wrapped = 0;
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() as usize;
        let more = reader.read_record(&mut record).map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(line, |p| p.line() as usize);
        let bad = |reason: String| Error::MalformedRow { line, reason };
        let field = |i: usize| record.get(i).ok_or_else(|| bad(format!("missing column {}", i + 1)));
        let number = |i: usize, what: &str| -> Result<f64> {
            let text = field(i)?;
            let v: f64 = text.parse().map_err(|_| bad(format!("{what} `{text}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("{what} `{text}` is not finite")))
            }
        };

        let raw_mode = field(mi)?;
        let mode: u16 = raw_mode
            .parse::<u16>()
            .ok()
            .filter(|m| *m >= schema.mode_base)
            .map(|m| m - schema.mode_base + 1)
            .ok_or_else(|| bad(format!("mode `{raw_mode}` is not an integer >= {}", schema.mode_base)))?;
        let mut phase = number(pi, "phase")?;
        if !(0.0..TAU).contains(&phase) {
            let w = phase.rem_euclid(TAU);
            log::warn!("line {line}: phase {phase} wrapped to {w}");
            phase = w;
            wrapped += 1;
        }
        let value = number(vi, "value")?;
        let phase_index = (schema.intervals.nearest_slot(phase) + 1) as u8;
        let repetition = match ri {
            Some(i) => {
                let text = field(i)?;
                text.parse().map_err(|_| bad(format!("repetition `{text}` is not a non-negative integer")))?
            }
            None => {
                let c = counters.entry((mode, phase_index)).or_insert(0);
                *c += 1;
                *c - 1
            }
        };
        batch.entries.push(QuadratureEntry {
            repetition,
            mode,
            phase_index,
            phase,
            value,
            is_vacuum_replacement: false,
        });
    }
    if batch.entries.is_empty() {
        return Err(Error::InvalidInput("the file has no data rows".into()));
    }
    batch.mode_count = batch.entries.iter().map(|e| e.mode as usize).max().unwrap_or(0);
    batch.validate()?;
    let report = IngestReport {
        rows: batch.len(),
        mode_count: batch.mode_count,
        wrapped_phases: wrapped,
    };
    Ok((batch, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::bin_quadratures;

    #[test]
    fn pairs_records_by_order_and_assigns_slots() {
        let text = "mode,phase,value\n1,0.1,0.5\n2,0.2,-0.5\n1,1.5,1.0\n2,1.4,2.0\n1,2.5,0.0\n2,2.6,0.1\n1,0.3,0.7\n2,0.2,0.8\n";
        let (b, r) = ingest_csv(text.as_bytes(), &IngestSchema::default()).unwrap();
        assert_eq!((r.rows, r.mode_count, r.wrapped_phases), (8, 2, 0));
        let slots: Vec<u8> = b.entries.iter().map(|e| e.phase_index).collect();
        assert_eq!(slots, vec![1, 1, 2, 2, 3, 3, 1, 1]);
        assert_eq!(b.entries[6].repetition, 1);
        assert_eq!(bin_quadratures(&b, 2).unwrap().features.len(), 30);
    }

    #[test]
    fn wraps_out_of_range_phases() {
        let text = "mode,phase,value\n1,-0.5,0.2\n1,7.0,0.1\n";
        let (b, r) = ingest_csv(text.as_bytes(), &IngestSchema::default()).unwrap();
        assert_eq!(r.wrapped_phases, 2);
        assert!((b.entries[0].phase - (TAU - 0.5)).abs() < 1e-12);
        assert!((b.entries[1].phase - (7.0 - TAU)).abs() < 1e-12);
    }

    #[test]
    fn custom_columns_and_zero_based_modes() {
        let text = "theta;x;ch;shot\n0.0;1.5;0;0\n0.0;1.0;0;1\n";
        let schema = IngestSchema {
            mode_column: "ch".into(),
            phase_column: "theta".into(),
            value_column: "x".into(),
            repetition_column: Some("shot".into()),
            mode_base: 0,
            delimiter: ';',
            ..IngestSchema::default()
        };
        let (b, _) = ingest_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(b.mode_count, 1);
        assert_eq!(b.entries[1].repetition, 1);
        assert_eq!(b.entries[1].value, 1.0);
    }

    #[test]
    fn reports_the_offending_line() {
        let text = "mode,phase,value\n1,0.1,0.5\n1,0.1,abc\n";
        match ingest_csv(text.as_bytes(), &IngestSchema::default()) {
            Err(Error::MalformedRow { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
        let e = ingest_csv("mode,phase,value\n0,0.1,0.5\n".as_bytes(), &IngestSchema::default()).unwrap_err();
        assert!(matches!(e, Error::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(ingest_csv("".as_bytes(), &IngestSchema::default()).is_err());
        assert!(ingest_csv("mode,phase,value\n".as_bytes(), &IngestSchema::default()).is_err());
        assert!(ingest_csv("a,b\n1,2\n".as_bytes(), &IngestSchema::default()).is_err());
    }
}
