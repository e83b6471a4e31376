//! Confusion matrices, accuracy, support-weighted F1, Cohen's kappa, and
//! aggregation over repeated runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[true][predicted]`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::usage("confusion matrix must be square and non-empty"));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn from_predictions(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::dim("confusion matrix", &[truth.len()], &[pred.len()]));
        }
        let mut cm = ConfusionMatrix::new(n_classes);
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::usage(format!(
                    "label pair ({t}, {p}) out of range for {n_classes} classes"
                )));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn check_nonempty(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::usage("metrics of an empty confusion matrix")),
            n => Ok(n as f64),
        }
    }

    fn diag(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        let n = self.check_nonempty()?;
        Ok(self.diag() as f64 / n)
    }

    /// Per-class F1 averaged with true-class support as weights. A class whose
    /// precision and recall are both zero (or undefined) scores 0.
    pub fn f1_weighted(&self) -> Result<f64> {
        let n = self.check_nonempty()?;
        let mut acc = 0.0;
        for c in 0..self.n_classes() {
            let support = self.row_sum(c);
            if support == 0 {
                continue;
            }
            let tp = self.counts[c][c] as f64;
            let predicted = self.col_sum(c) as f64;
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = tp / support as f64;
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            acc += support as f64 * f1;
        }
        Ok(acc / n)
    }

    /// `(p_o - p_e) / (1 - p_e)`; defined as 1 when every sample falls in one
    /// class that is always predicted correctly.
    pub fn kappa(&self) -> Result<f64> {
        let n = self.check_nonempty()?;
        let p_o = self.diag() as f64 / n;
        let p_e: f64 = (0..self.n_classes())
            .map(|c| self.row_sum(c) as f64 * self.col_sum(c) as f64)
            .sum::<f64>()
            / (n * n);
        if (1.0 - p_e).abs() < 1e-15 {
            return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
        }
        Ok((p_o - p_e) / (1.0 - p_e))
    }

    pub fn metrics(&self) -> Result<Metrics> {
        Ok(Metrics {
            f1: self.f1_weighted()?,
            accuracy: self.accuracy()?,
            kappa: self.kappa()?,
        })
    }
}

/// Scores of one run, as fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub f1: f64,
    pub accuracy: f64,
    pub kappa: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::usage("cannot aggregate zero runs"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(MeanStd { mean, std: var.sqrt() })
    }

    /// `mean ± std` scaled to percent with two decimals.
    pub fn percent(&self) -> String {
        format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }

    /// `mean ± std` with three decimals.
    pub fn plain(&self) -> String {
        format!("{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub f1: MeanStd,
    pub accuracy: MeanStd,
    pub kappa: MeanStd,
    pub runs: usize,
}

impl Aggregate {
    pub fn of(runs: &[Metrics]) -> Result<Self> {
        let pick = |f: fn(&Metrics) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        Ok(Aggregate {
            f1: pick(|m| m.f1)?,
            accuracy: pick(|m| m.accuracy)?,
            kappa: pick(|m| m.kappa)?,
            runs: runs.len(),
        })
    }

    /// `F1 | Accuracy | Kappa` cells.
    pub fn cells(&self) -> [String; 3] {
        [self.f1.percent(), self.accuracy.percent(), self.kappa.plain()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn perfect_diagonal() {
        let m = cm(&[&[5, 0, 0], &[0, 3, 0], &[0, 0, 2]]).metrics().unwrap();
        assert_eq!((m.f1, m.accuracy, m.kappa), (1.0, 1.0, 1.0));
    }

    #[test]
    fn two_by_two_example() {
        let m = cm(&[&[3, 0], &[1, 1]]).metrics().unwrap();
        assert!((m.accuracy - 0.8).abs() < 1e-12);
        // class 0: p=3/4 r=1 f1=6/7; class 1: p=1 r=1/2 f1=2/3
        let f1 = (3.0 * 6.0 / 7.0 + 2.0 * 2.0 / 3.0) / 5.0;
        assert!((m.f1 - f1).abs() < 1e-12);
        // p_e = (3·4 + 2·1) / 25
        let pe = 14.0 / 25.0;
        assert!((m.kappa - (0.8 - pe) / (1.0 - pe)).abs() < 1e-12);
    }

    #[test]
    fn always_majority_has_zero_kappa() {
        let m = cm(&[&[8, 0], &[2, 0]]).metrics().unwrap();
        assert!((m.accuracy - 0.8).abs() < 1e-12);
        assert!(m.kappa.abs() < 1e-12);
    }

    #[test]
    fn single_class_perfect_kappa_is_one() {
        assert_eq!(cm(&[&[4, 0], &[0, 0]]).kappa().unwrap(), 1.0);
    }

    #[test]
    fn empty_matrix_is_error() {
        assert!(ConfusionMatrix::new(3).accuracy().is_err());
        assert!(ConfusionMatrix::from_predictions(&[0], &[3], 2).is_err());
    }

    #[test]
    fn aggregation_and_formatting() {
        let s = MeanStd::of(&[0.80, 0.82]).unwrap();
        assert!((s.mean - 0.81).abs() < 1e-12);
        assert!((s.std - 0.01).abs() < 1e-12);
        assert_eq!(s.percent(), "81.00 ± 1.00");
        let one = MeanStd::of(&[0.7]).unwrap();
        assert_eq!(one.std, 0.0);
        assert_eq!(MeanStd { mean: 0.772, std: 0.009 }.plain(), "0.772 ± 0.009");
        assert!(MeanStd::of(&[]).is_err());
    }
}
