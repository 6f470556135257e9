//! Pixel-level segmentation metrics aggregated over a whole dataset.
//!
//! Counts from every image are summed before any ratio is taken. A class that is
//! absent from both prediction and truth scores 1.0; a zero denominator in any other
//! situation scores 0.0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagedata::LabelField;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    #[serde(rename = "fn")]
    pub fn_: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(classes: usize) -> Self {
        Self {
            tp: vec![0; classes],
            fp: vec![0; classes],
            fn_: vec![0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.tp.len()
    }

    /// Adds the per-pixel outcomes of one image.
    pub fn accumulate(&mut self, pred: &LabelField, truth: &LabelField) -> Result<()> {
        if (pred.width(), pred.height()) != (truth.width(), truth.height()) {
            return Err(Error::DimensionMismatch(format!(
                "prediction is {}x{}, truth is {}x{}",
                pred.width(),
                pred.height(),
                truth.width(),
                truth.height()
            )));
        }
        let c = self.classes();
        for (&p, &t) in pred.data().iter().zip(truth.data()) {
            let (p, t) = (usize::from(p), usize::from(t));
            if p >= c || t >= c {
                return Err(Error::InvalidField(format!("label out of range for {c} classes")));
            }
            if p == t {
                self.tp[p] += 1;
            } else {
                self.fp[p] += 1;
                self.fn_[t] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for (a, b) in [
            (&mut self.tp, &other.tp),
            (&mut self.fp, &other.fp),
            (&mut self.fn_, &other.fn_),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn iou(&self, class: usize) -> f64 {
        let (tp, fp, fn_) = (self.tp[class], self.fp[class], self.fn_[class]);
        ratio(tp, tp + fp + fn_, fp + fn_)
    }

    pub fn mean_iou(&self) -> f64 {
        (0..self.classes()).map(|c| self.iou(c)).sum::<f64>() / self.classes() as f64
    }

    pub fn precision(&self, class: usize) -> f64 {
        let (tp, fp, fn_) = (self.tp[class], self.fp[class], self.fn_[class]);
        ratio(tp, tp + fp, fp + fn_)
    }

    pub fn mean_precision(&self) -> f64 {
        (0..self.classes()).map(|c| self.precision(c)).sum::<f64>() / self.classes() as f64
    }

    /// The four reported criteria, with per-class scores for `class`.
    pub fn summary(&self, class: usize) -> MetricSummary {
        MetricSummary {
            iou: self.iou(class),
            miou: self.mean_iou(),
            prec: self.precision(class),
            mean: self.mean_precision(),
        }
    }
}

/// `num / den`, with an empty denominator scoring 1.0 only when nothing was
/// predicted or missed for the class at all.
fn ratio(num: u64, den: u64, errors: u64) -> f64 {
    if den == 0 {
        if errors == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

pub fn accumulate(pred: &LabelField, truth: &LabelField, mut counts: ConfusionCounts) -> Result<ConfusionCounts> {
    counts.accumulate(pred, truth)?;
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    #[serde(rename = "IoU")]
    pub iou: f64,
    #[serde(rename = "mIoU")]
    pub miou: f64,
    #[serde(rename = "Prec")]
    pub prec: f64,
    #[serde(rename = "Mean")]
    pub mean: f64,
}

impl MetricSummary {
    /// Two-line table in percent.
    pub fn to_table(&self) -> String {
        format!(
            "{:>8} {:>8} {:>8} {:>8}\n{:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
            "IoU",
            "mIoU",
            "Prec",
            "Mean",
            100.0 * self.iou,
            100.0 * self.miou,
            100.0 * self.prec,
            100.0 * self.mean
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn labels(data: Vec<u8>) -> LabelField {
        let n = data.len();
        LabelField::binary(n, 1, data).unwrap()
    }

    #[test]
    fn perfect_waste_prediction() {
        let l = labels(vec![1; 10]);
        let c = accumulate(&l, &l, ConfusionCounts::new(2)).unwrap();
        assert_eq!((c.tp[1], c.fp[1], c.fn_[1]), (10, 0, 0));
        let s = c.summary(1);
        assert_eq!((s.iou, s.miou, s.prec, s.mean), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn all_wrong_prediction() {
        let c = accumulate(&labels(vec![1; 10]), &labels(vec![0; 10]), ConfusionCounts::new(2)).unwrap();
        assert_eq!(c.fp[1], 10);
        assert_eq!(c.fn_[0], 10);
        assert_eq!(c.iou(1), 0.0);
        assert_eq!(c.precision(0), 0.0);
    }

    #[test]
    fn known_counts() {
        let c = ConfusionCounts {
            tp: vec![0, 8],
            fp: vec![0, 2],
            fn_: vec![0, 2],
        };
        assert!((c.iou(1) - 0.6667).abs() < 1e-4);
        assert!((c.precision(1) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_denominator_conventions() {
        let c = ConfusionCounts {
            tp: vec![5, 0],
            fp: vec![0, 0],
            fn_: vec![0, 0],
        };
        assert_eq!(c.iou(1), 1.0);
        assert_eq!(c.precision(1), 1.0);
        let missed = ConfusionCounts {
            tp: vec![5, 0],
            fp: vec![3, 0],
            fn_: vec![0, 3],
        };
        assert_eq!(missed.iou(1), 0.0);
        assert_eq!(missed.precision(1), 0.0);
    }

    #[test]
    fn random_pairs_match_a_tally_and_stay_ordered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let p: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2)).collect();
            let t: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2)).collect();
            let c = accumulate(&labels(p.clone()), &labels(t.clone()), ConfusionCounts::new(2)).unwrap();
            for k in 0..2u8 {
                let tp = p.iter().zip(&t).filter(|(a, b)| **a == k && **b == k).count() as u64;
                let fp = p.iter().zip(&t).filter(|(a, b)| **a == k && **b != k).count() as u64;
                let fn_ = p.iter().zip(&t).filter(|(a, b)| **a != k && **b == k).count() as u64;
                assert_eq!((c.tp[k as usize], c.fp[k as usize], c.fn_[k as usize]), (tp, fp, fn_));
                let k = k as usize;
                assert!(c.iou(k) <= c.precision(k));
                assert!((0.0..=1.0).contains(&c.iou(k)) && (0.0..=1.0).contains(&c.precision(k)));
            }
        }
    }

    #[test]
    fn aggregation_is_order_independent() {
        let a = (labels(vec![1, 1, 0, 0]), labels(vec![1, 0, 0, 1]));
        let b = (labels(vec![0, 1, 1, 1]), labels(vec![0, 1, 1, 0]));
        let mut ab = ConfusionCounts::new(2);
        ab.accumulate(&a.0, &a.1).unwrap();
        ab.accumulate(&b.0, &b.1).unwrap();
        let mut ba = ConfusionCounts::new(2);
        ba.accumulate(&b.0, &b.1).unwrap();
        ba.accumulate(&a.0, &a.1).unwrap();
        assert_eq!(ab, ba);
        let mut merged = ConfusionCounts::new(2);
        merged.merge(&accumulate(&a.0, &a.1, ConfusionCounts::new(2)).unwrap());
        merged.merge(&accumulate(&b.0, &b.1, ConfusionCounts::new(2)).unwrap());
        assert_eq!(merged, ab);
    }

    #[test]
    fn mismatched_shapes_error() {
        let a = labels(vec![0, 1]);
        let b = labels(vec![0, 1, 1]);
        assert!(accumulate(&a, &b, ConfusionCounts::new(2)).is_err());
    }
}
