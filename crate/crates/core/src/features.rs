//! Histogram features, negativity labels, and the dataset file.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{QuadratureBatch, PHASE_SLOTS};

pub const BIN_EDGES: [f64; 6] = [-5.0, -3.0, -1.0, 1.0, 3.0, 5.0];
pub const BINS_PER_GROUP: usize = 5;
pub const FEATURES_PER_MODE: usize = BINS_PER_GROUP * PHASE_SLOTS;

pub fn feature_len(modes: usize) -> usize {
    FEATURES_PER_MODE * modes
}

/// Default labelling cutoff `−0.1/(2π)^m`.
pub fn default_cutoff(modes: usize) -> f64 {
    -0.1 / (2.0 * PI).powi(modes as i32)
}

/// Bin index of `x`; the top edge `+5` belongs to the last bin.
pub fn bin_index(x: f64) -> Option<usize> {
    if !(BIN_EDGES[0]..=BIN_EDGES[BINS_PER_GROUP]).contains(&x) {
        return None;
    }
    let i = BIN_EDGES[1..BINS_PER_GROUP].iter().take_while(|edge| x >= **edge).count();
    Some(i)
}

/// Offset of the first bin of a (1-based mode, 1-based phase slot) group.
pub fn group_offset(mode: usize, phase_index: usize) -> usize {
    ((mode - 1) * PHASE_SLOTS + (phase_index - 1)) * BINS_PER_GROUP
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binned {
    /// `m × 3 × 5` values, mode-major then phase slot then bin.
    pub features: Vec<f64>,
    /// (mode, phase_index) groups without any measurement.
    pub empty_groups: Vec<(usize, usize)>,
}

pub fn bin_quadratures(batch: &QuadratureBatch, modes: usize) -> Result<Binned> {
    let groups = modes * PHASE_SLOTS;
    let mut counts = vec![0u64; groups * BINS_PER_GROUP];
    let mut totals = vec![0u64; groups];
    for (i, e) in batch.entries.iter().enumerate() {
        let (mode, slot) = (e.mode as usize, e.phase_index as usize);
        if mode == 0 || mode > modes || slot == 0 || slot > PHASE_SLOTS {
            return Err(Error::InvalidInput(format!(
                "entry {i}: (mode {mode}, phase index {slot}) outside {modes} modes × {PHASE_SLOTS} slots"
            )));
        }
        let offset = group_offset(mode, slot);
        totals[offset / BINS_PER_GROUP] += 1;
        if let Some(b) = bin_index(e.value) {
            counts[offset + b] += 1;
        }
    }
    let mut empty_groups = Vec::new();
    let mut features = vec![0.0; counts.len()];
    for (g, total) in totals.iter().enumerate() {
        if *total == 0 {
            let group = (g / PHASE_SLOTS + 1, g % PHASE_SLOTS + 1);
            log::warn!(
                "state {}: no measurements for mode {} phase slot {}",
                batch.state_id,
                group.0,
                group.1
            );
            empty_groups.push(group);
            continue;
        }
        for b in 0..BINS_PER_GROUP {
            let idx = g * BINS_PER_GROUP + b;
            features[idx] = counts[idx] as f64 / *total as f64;
        }
    }
    Ok(Binned { features, empty_groups })
}

/// True when the state counts as negative: `w_min < C`.
pub fn label_state(w_min: f64, cutoff: f64) -> bool {
    w_min < cutoff
}

/// Drops examples in the ambiguous band `C ≤ w_min < 0`.
pub fn filter_cutoff_band(examples: Vec<LabeledExample>, cutoff: f64) -> Vec<LabeledExample> {
    examples.into_iter().filter(|e| !in_cutoff_band(e.w_min, cutoff)).collect()
}

pub fn in_cutoff_band(w_min: f64, cutoff: f64) -> bool {
    w_min >= cutoff && w_min < 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Unassigned,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Unassigned => "none",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "none" => Some(Split::Unassigned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub state_id: String,
    pub features: Vec<f64>,
    pub w_min: f64,
    pub label: bool,
    pub split: Split,
}

impl LabeledExample {
    pub fn new(state_id: impl Into<String>, features: Vec<f64>, w_min: f64, cutoff: f64) -> Self {
        Self {
            state_id: state_id.into(),
            features,
            w_min,
            label: label_state(w_min, cutoff),
            split: Split::Unassigned,
        }
    }

    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub mode_count: usize,
    pub cutoff: f64,
    pub bins: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl DatasetHeader {
    pub fn new(mode_count: usize, cutoff: f64, seed: u64) -> Self {
        Self {
            mode_count,
            cutoff,
            bins: BIN_EDGES.to_vec(),
            seed,
            provenance: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub examples: Vec<LabeledExample>,
}

pub const MIN_SPLIT_SIZE: usize = 10;

impl Dataset {
    pub fn new(header: DatasetHeader, examples: Vec<LabeledExample>) -> Result<Self> {
        let n = feature_len(header.mode_count);
        for e in &examples {
            if e.features.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: e.features.len(),
                });
            }
        }
        Ok(Self { header, examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn positive_fraction(&self) -> f64 {
        positive_fraction(self.examples.iter())
    }

    pub fn split(&self, which: Split) -> Vec<&LabeledExample> {
        self.examples.iter().filter(|e| e.split == which).collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        let mut w = csv::Writer::from_writer(out);
        let n = feature_len(self.header.mode_count);
        let mut head = vec!["state_id".to_string()];
        head.extend((0..n).map(|i| format!("f{i}")));
        head.extend(["w_min", "label", "split"].map(String::from));
        w.write_record(&head)?;
        for e in &self.examples {
            let mut row = Vec::with_capacity(n + 4);
            row.push(e.state_id.clone());
            row.extend(e.features.iter().map(|v| v.to_string()));
            row.push(e.w_min.to_string());
            row.push(if e.label { "1" } else { "0" }.to_string());
            row.push(e.split.as_str().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        if first.trim().is_empty() {
            return Err(Error::InvalidInput("dataset file has no header line".into()));
        }
        let header: DatasetHeader = serde_json::from_str(first.trim())?;
        let n = feature_len(header.mode_count);
        let mut rows = csv::Reader::from_reader(reader);
        let mut examples = Vec::new();
        for (i, rec) in rows.records().enumerate() {
            let line = i + 3;
            let rec = rec.map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
            if rec.len() != n + 4 {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("expected {} columns, found {}", n + 4, rec.len()),
                });
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::MalformedRow {
                    line,
                    reason: format!("'{s}': {e}"),
                })
            };
            let features = (1..=n).map(|c| num(&rec[c])).collect::<Result<Vec<_>>>()?;
            let w_min = num(&rec[n + 1])?;
            let label = match &rec[n + 2] {
                "1" => true,
                "0" => false,
                other => return Err(Error::MalformedRow { line, reason: format!("label '{other}'") }),
            };
            let split = Split::parse(&rec[n + 3]).ok_or_else(|| Error::MalformedRow {
                line,
                reason: format!("split '{}'", &rec[n + 3]),
            })?;
            examples.push(LabeledExample {
                state_id: rec[0].to_string(),
                features,
                w_min,
                label,
                split,
            });
        }
        Self::new(header, examples)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomically(path, |f| self.write(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(File::open(path)?)
    }
}

pub fn positive_fraction<'a>(examples: impl Iterator<Item = &'a LabeledExample>) -> f64 {
    let (mut pos, mut n) = (0usize, 0usize);
    for e in examples {
        n += 1;
        pos += e.label as usize;
    }
    if n == 0 {
        0.0
    } else {
        pos as f64 / n as f64
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomically<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Stratified random split: `round(ratio·N)` training examples, of which
/// `round(ratio·N₊)` are positive.
pub fn split_dataset<R: Rng + ?Sized>(dataset: &mut Dataset, ratio: f64, rng: &mut R) -> Result<()> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = dataset.len();
    if n < MIN_SPLIT_SIZE {
        return Err(Error::InvalidInput(format!(
            "dataset has {n} examples; at least {MIN_SPLIT_SIZE} are needed to split"
        )));
    }
    let mut pos: Vec<usize> = (0..n).filter(|&i| dataset.examples[i].label).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| !dataset.examples[i].label).collect();
    pos.shuffle(rng);
    neg.shuffle(rng);
    let total_train = (ratio * n as f64).round() as usize;
    let pos_train = ((ratio * pos.len() as f64).round() as usize).min(total_train);
    let neg_train = (total_train - pos_train).min(neg.len());
    let pos_train = total_train - neg_train;
    for e in &mut dataset.examples {
        e.split = Split::Validation;
    }
    for &i in pos[..pos_train].iter().chain(&neg[..neg_train]) {
        dataset.examples[i].split = Split::Train;
    }
    Ok(())
}
