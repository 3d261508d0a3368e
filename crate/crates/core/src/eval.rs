//! Segmentation and classification metrics.

use crate::error::{Error, Result};

/// `K×K` counts, rows ground truth, columns prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.k || pred >= self.k {
            return Err(Error::arg(format!(
                "class pair ({truth}, {pred}) outside a {}-class matrix",
                self.k
            )));
        }
        self.counts[truth * self.k + pred] += 1;
        Ok(())
    }

    /// Adds one item per position of two equally long label streams.
    pub fn accumulate(&mut self, truth: &[u8], pred: &[u8]) -> Result<()> {
        if truth.len() != pred.len() {
            return Err(Error::dim(format!(
                "truth has {} items, prediction {}",
                truth.len(),
                pred.len()
            )));
        }
        for (&t, &p) in truth.iter().zip(pred) {
            self.add(t as usize, p as usize)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::dim(format!("cannot merge {}-class into {}-class matrix", other.k, self.k)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `TP/(TP+FP+FN)` per class; `None` where the denominator is zero.
    pub fn iou_per_class(&self) -> Vec<Option<f64>> {
        (0..self.k)
            .map(|c| {
                let tp = self.get(c, c);
                let row: u64 = (0..self.k).map(|p| self.get(c, p)).sum();
                let col: u64 = (0..self.k).map(|t| self.get(t, c)).sum();
                let denom = row + col - tp;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    /// Mean IoU over classes with a nonzero denominator, background included.
    pub fn miou(&self) -> Result<f64> {
        self.miou_with(true)
    }

    /// As [`miou`](Self::miou), optionally dropping class 0 from the mean.
    pub fn miou_with(&self, include_background: bool) -> Result<f64> {
        let skip = usize::from(!include_background);
        let present: Vec<f64> = self.iou_per_class().into_iter().skip(skip).flatten().collect();
        if present.is_empty() {
            return Err(Error::UndefinedMetric("mIoU: no class has a nonzero denominator".into()));
        }
        Ok(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows of `logits` (`labels.len() × k_classes`, row-major) whose
/// label ranks among the `k` largest. Equal logits rank the lower class first.
pub fn topk_accuracy(logits: &[f64], labels: &[usize], k: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("top-k accuracy of zero samples".into()));
    }
    if logits.len() % labels.len() != 0 {
        return Err(Error::dim(format!("{} logits for {} samples", logits.len(), labels.len())));
    }
    let classes = logits.len() / labels.len();
    if k == 0 || k > classes {
        return Err(Error::arg(format!("k = {k} outside 1..={classes}")));
    }
    let mut hits = 0usize;
    for (row, &t) in logits.chunks_exact(classes).zip(labels) {
        if t >= classes {
            return Err(Error::arg(format!("label {t} outside {classes} classes")));
        }
        let ahead = row
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v > row[t] || (v == row[t] && j < t))
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// Agreement after mapping grade 0 to normal and every other grade to abnormal.
pub fn binary_accuracy(pred: &[u8], truth: &[u8]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("binary accuracy of zero samples".into()));
    }
    let agree = pred.iter().zip(truth).filter(|&(&p, &t)| (p == 0) == (t == 0)).count();
    Ok(agree as f64 / pred.len() as f64)
}
