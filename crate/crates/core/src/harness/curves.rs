use std::io::{Read, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::LabeledExample;
use crate::mlp::metrics::{
    auc_exact, labels, precision_at_recall, precision_recall_curve, roc_auc, roc_curve, scores, threshold_grid, PrPoint,
    RocPoint,
};
use crate::mlp::MlpModel;

pub const GRID_POINTS: usize = 101;
pub const REFERENCE_RECALL: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub examples: usize,
    pub prevalence: f64,
    /// Trapezoid area over the threshold grid.
    pub auc_grid: f64,
    /// Area under the full score staircase.
    pub auc_exact: f64,
    pub precision_at_recall: Option<f64>,
    pub reference_recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub roc: Vec<RocPoint>,
    pub pr: Vec<PrPoint>,
    pub summary: CurveSummary,
}

pub fn curves_from_scores(scores: &[f64], labels: &[bool], points: usize) -> Result<Curves> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::InvalidInput("need one label per score and at least one example".into()));
    }
    if points < 2 {
        return Err(Error::InvalidInput("a threshold grid needs at least two points".into()));
    }
    let grid = threshold_grid(points);
    let roc = roc_curve(scores, labels, &grid);
    let pr = precision_recall_curve(scores, labels, &grid);
    let summary = CurveSummary {
        examples: scores.len(),
        prevalence: labels.iter().filter(|l| **l).count() as f64 / labels.len() as f64,
        auc_grid: roc_auc(&roc),
        auc_exact: auc_exact(scores, labels),
        precision_at_recall: precision_at_recall(scores, labels, REFERENCE_RECALL),
        reference_recall: REFERENCE_RECALL,
    };
    Ok(Curves { roc, pr, summary })
}

pub fn model_curves(model: &MlpModel, examples: &[&LabeledExample], points: usize) -> Result<Curves> {
    curves_from_scores(&scores(model, examples)?, &labels(examples), points)
}

fn write_rows<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::MalformedRow {
                line: i + 2,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Columns `threshold,fpr,tpr`.
pub fn write_roc_csv<W: Write>(roc: &[RocPoint], out: W) -> Result<()> {
    write_rows(roc, out)
}

pub fn read_roc_csv<R: Read>(input: R) -> Result<Vec<RocPoint>> {
    read_rows(input)
}

/// Columns `threshold,recall,precision`; precision is empty where undefined.
pub fn write_pr_csv<W: Write>(pr: &[PrPoint], out: W) -> Result<()> {
    write_rows(pr, out)
}

pub fn read_pr_csv<R: Read>(input: R) -> Result<Vec<PrPoint>> {
    read_rows(input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_scores_give_unit_area() {
        let s = [0.9, 0.8, 0.2, 0.1];
        let l = [true, true, false, false];
        let c = curves_from_scores(&s, &l, GRID_POINTS).unwrap();
        assert_eq!(c.roc.len(), 101);
        assert_eq!(c.summary.auc_exact, 1.0);
        assert_eq!(c.summary.auc_grid, 1.0);
        assert_eq!(c.summary.precision_at_recall, Some(1.0));
        assert_eq!(c.summary.prevalence, 0.5);
    }

    #[test]
    fn csv_round_trip_keeps_undefined_precision() {
        let s = [0.3, 0.6, 0.95];
        let l = [false, true, true];
        let c = curves_from_scores(&s, &l, 11).unwrap();
        assert!(c.pr.last().unwrap().precision.is_none());
        let mut roc = Vec::new();
        write_roc_csv(&c.roc, &mut roc).unwrap();
        assert!(String::from_utf8(roc.clone()).unwrap().starts_with("threshold,fpr,tpr\n"));
        assert_eq!(read_roc_csv(roc.as_slice()).unwrap(), c.roc);
        let mut pr = Vec::new();
        write_pr_csv(&c.pr, &mut pr).unwrap();
        assert!(String::from_utf8(pr.clone()).unwrap().starts_with("threshold,recall,precision\n"));
        assert_eq!(read_pr_csv(pr.as_slice()).unwrap(), c.pr);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        assert!(curves_from_scores(&[0.1], &[true, false], 11).is_err());
        assert!(curves_from_scores(&[], &[], 11).is_err());
    }
}
