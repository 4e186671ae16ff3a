use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgpipe::Sample;
use crate::model::Model;

/// One row of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Class 1 is the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub count: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
}

/// Accuracy and confusion counts for scores thresholded at `threshold`.
pub fn evaluate_scores(scores: &[f32], labels: &[u8], threshold: f32) -> Result<Evaluation> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "evaluate",
            left: vec![scores.len()],
            right: vec![labels.len()],
        });
    }
    if scores.is_empty() {
        return Err(Error::Contract("nothing to evaluate".into()));
    }
    let mut c = Confusion::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, 1) => c.tp += 1,
            (false, 0) => c.tn += 1,
            (true, 0) => c.fp += 1,
            (false, 1) => c.fn_ += 1,
            (_, other) => return Err(Error::Contract(format!("label {other} outside {{0, 1}}"))),
        }
    }
    Ok(Evaluation {
        count: scores.len(),
        accuracy: (c.tp + c.tn) as f64 / scores.len() as f64,
        confusion: c,
    })
}

pub fn evaluate(model: &Model, samples: &[&Sample]) -> Result<Evaluation> {
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let scores = model.score_images(&images)?;
    evaluate_scores(&scores, &labels, model.meta().threshold)
}

/// Writes `epoch,train_loss,acc,val_loss,val_acc` rows with a header.
pub fn write_history_csv<W: Write>(history: &[EpochMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in history {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history_json<W: Write>(history: &[EpochMetrics], out: W) -> Result<()> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, history)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn save_history(history: &[EpochMetrics], csv_path: &Path, json_path: &Path) -> Result<()> {
    write_history_csv(history, BufWriter::new(File::create(csv_path)?))?;
    let mut json = BufWriter::new(File::create(json_path)?);
    write_history_json(history, &mut json)?;
    json.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_of_each_outcome() {
        let e = evaluate_scores(&[0.1, 0.9, 0.4, 0.6], &[0, 1, 1, 0], 0.5).unwrap();
        assert_eq!(e.accuracy, 0.5);
        assert_eq!(e.confusion, Confusion { tp: 1, tn: 1, fp: 1, fn_: 1 });
    }

    #[test]
    fn threshold_is_inclusive() {
        let e = evaluate_scores(&[0.5], &[1], 0.5).unwrap();
        assert_eq!(e.confusion.tp, 1);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(evaluate_scores(&[], &[], 0.5), Err(Error::Contract(_))));
    }

    #[test]
    fn csv_layout() {
        let h = vec![
            EpochMetrics { epoch: 1, train_loss: 0.5, acc: 0.75, val_loss: 0.25, val_acc: 1.0 },
            EpochMetrics { epoch: 2, train_loss: 0.125, acc: 1.0, val_loss: 0.5, val_acc: 0.5 },
        ];
        let mut buf = Vec::new();
        write_history_csv(&h, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,acc,val_loss,val_acc\n1,0.5,0.75,0.25,1.0\n2,0.125,1.0,0.5,0.5\n"
        );
    }
}
