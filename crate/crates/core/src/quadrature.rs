//! Homodyne quadrature records and the three-phase measurement protocol.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PHASE_SLOTS: usize = 3;

/// Three phase intervals `[lo, hi)`; a point interval `[a, a]` pins the phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseIntervals(pub [[f64; 2]; PHASE_SLOTS]);

impl Default for PhaseIntervals {
    fn default() -> Self {
        Self([[0.0, PI / 3.0], [PI / 3.0, 2.0 * PI / 3.0], [2.0 * PI / 3.0, PI]])
    }
}

impl PhaseIntervals {
    pub fn validate(&self) -> Result<()> {
        for [lo, hi] in self.0 {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!("phase interval [{lo}, {hi}] is invalid")));
            }
        }
        Ok(())
    }

    /// Slot (0-based) whose interval is closest to `phase` on the circle.
    pub fn nearest_slot(&self, phase: f64) -> usize {
        let circ = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d)
        };
        let mut best = (f64::INFINITY, 0);
        for (slot, [lo, hi]) in self.0.iter().enumerate() {
            let d = if phase >= *lo && phase < *hi || phase == *lo {
                0.0
            } else {
                circ(phase, *lo).min(circ(phase, *hi))
            };
            if d < best.0 {
                best = (d, slot);
            }
        }
        best.1
    }
}

/// Per-mode phases for each of the three measurement settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProtocol {
    pub intervals: PhaseIntervals,
    /// `phases[mode][slot]` in radians.
    pub phases: Vec<[f64; PHASE_SLOTS]>,
}

impl PhaseProtocol {
    pub fn mode_count(&self) -> usize {
        self.phases.len()
    }

    pub fn slot_phases(&self, slot: usize) -> Vec<f64> {
        self.phases.iter().map(|p| p[slot]).collect()
    }
}

pub fn draw_phase_protocol<R: Rng + ?Sized>(modes: usize, intervals: &PhaseIntervals, rng: &mut R) -> PhaseProtocol {
    let phases = (0..modes)
        .map(|_| {
            let mut row = [0.0; PHASE_SLOTS];
            for (slot, [lo, hi]) in intervals.0.iter().enumerate() {
                row[slot] = if hi > lo { lo + (hi - lo) * rng.random::<f64>() } else { *lo };
            }
            row
        })
        .collect();
    PhaseProtocol {
        intervals: *intervals,
        phases,
    }
}

/// One homodyne outcome. Modes and phase slots are 1-based as in the files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureEntry {
    pub repetition: u32,
    pub mode: u16,
    pub phase_index: u8,
    pub phase: f64,
    pub value: f64,
    pub is_vacuum_replacement: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureBatch {
    pub state_id: String,
    pub mode_count: usize,
    pub entries: Vec<QuadratureEntry>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    state_id: String,
    repetition: u32,
    mode: u16,
    phase_index: u8,
    phase: f64,
    value: f64,
    is_vacuum_replacement: bool,
}

impl QuadratureBatch {
    pub fn new(state_id: impl Into<String>, mode_count: usize) -> Self {
        Self {
            state_id: state_id.into(),
            mode_count,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of repetitions per phase slot, taken as the largest index + 1.
    pub fn repetitions(&self) -> usize {
        self.entries.iter().map(|e| e.repetition as usize + 1).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.mode == 0 || e.mode as usize > self.mode_count {
                return Err(Error::InvalidInput(format!("entry {i}: mode {} outside 1..={}", e.mode, self.mode_count)));
            }
            if e.phase_index == 0 || e.phase_index as usize > PHASE_SLOTS {
                return Err(Error::InvalidInput(format!("entry {i}: phase index {} outside 1..=3", e.phase_index)));
            }
            if !e.value.is_finite() || !e.phase.is_finite() {
                return Err(Error::InvalidInput(format!("entry {i}: non-finite phase or value")));
            }
        }
        Ok(())
    }

    /// Keeps repetitions `0..k` of every phase slot.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            state_id: self.state_id.clone(),
            mode_count: self.mode_count,
            entries: self.entries.iter().copied().filter(|e| (e.repetition as usize) < k).collect(),
        }
    }

    /// Keeps a uniformly random set of `k` repetitions per phase slot and
    /// renumbers them `0..k`; joint records stay together.
    pub fn subsample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Self> {
        let mut out = Self::new(self.state_id.clone(), self.mode_count);
        for slot in 1..=PHASE_SLOTS as u8 {
            let mut reps: Vec<u32> = self.entries.iter().filter(|e| e.phase_index == slot).map(|e| e.repetition).collect();
            reps.sort_unstable();
            reps.dedup();
            if reps.is_empty() {
                continue;
            }
            if reps.len() < k {
                return Err(Error::InvalidInput(format!(
                    "phase slot {slot} has {} repetitions, cannot draw {k}",
                    reps.len()
                )));
            }
            let mut chosen: Vec<u32> = index::sample(rng, reps.len(), k).into_iter().map(|i| reps[i]).collect();
            chosen.sort_unstable();
            for e in self.entries.iter().filter(|e| e.phase_index == slot) {
                if let Ok(pos) = chosen.binary_search(&e.repetition) {
                    out.entries.push(QuadratureEntry {
                        repetition: pos as u32,
                        ..*e
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_batches_csv(std::slice::from_ref(self), out)
    }

    /// Reads a single-state file. Mode count is the largest mode seen unless given.
    pub fn read_csv<R: Read>(input: R, mode_count: Option<usize>) -> Result<Self> {
        let mut batches = read_batches_csv(input, mode_count)?;
        match batches.len() {
            1 => Ok(batches.remove(0)),
            0 => Err(Error::InvalidInput("quadrature file has no rows".into())),
            n => Err(Error::InvalidInput(format!("expected one state in the file, found {n}"))),
        }
    }
}

pub fn write_batches_csv<W: Write>(batches: &[QuadratureBatch], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in batches {
        for e in &b.entries {
            w.serialize(CsvRow {
                state_id: b.state_id.clone(),
                repetition: e.repetition,
                mode: e.mode,
                phase_index: e.phase_index,
                phase: e.phase,
                value: e.value,
                is_vacuum_replacement: e.is_vacuum_replacement,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a multi-state file, grouping rows by `state_id` in order of first appearance.
pub fn read_batches_csv<R: Read>(input: R, mode_count: Option<usize>) -> Result<Vec<QuadratureBatch>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut batches: Vec<QuadratureBatch> = Vec::new();
    for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
        let entry = QuadratureEntry {
            repetition: row.repetition,
            mode: row.mode,
            phase_index: row.phase_index,
            phase: row.phase,
            value: row.value,
            is_vacuum_replacement: row.is_vacuum_replacement,
        };
        match batches.iter_mut().rev().find(|b| b.state_id == row.state_id) {
            Some(b) => b.entries.push(entry),
            None => batches.push(QuadratureBatch {
                state_id: row.state_id,
                mode_count: 0,
                entries: vec![entry],
            }),
        }
    }
    for b in &mut batches {
        let seen = b.entries.iter().map(|e| e.mode as usize).max().unwrap_or(0);
        b.mode_count = mode_count.unwrap_or(seen);
        b.validate()?;
    }
    Ok(batches)
}

/// Independent vacuum quadratures, standard normal under the vacuum-variance-1 convention.
pub fn sample_vacuum_quadratures<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Replaces exactly `⌊fraction · N⌋` uniformly chosen entries by vacuum draws.
pub fn inject_loss_replacement<R: Rng + ?Sized>(batch: &QuadratureBatch, fraction: f64, rng: &mut R) -> Result<QuadratureBatch> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!("replacement fraction {fraction} outside [0, 1]")));
    }
    let n = batch.entries.len();
    // The epsilon absorbs products like 0.29 * 100 = 28.999999999999996.
    let count = ((fraction * n as f64) + 1e-9).floor() as usize;
    let count = count.min(n);
    let mut out = batch.clone();
    for i in index::sample(rng, n, count) {
        let e = &mut out.entries[i];
        e.value = rng.sample(StandardNormal);
        e.is_vacuum_replacement = true;
    }
    Ok(out)
}
