//! Confusion matrix with overall accuracy, average accuracy and Cohen's
//! kappa.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// `counts[(i, j)]` is the number of samples of true class `i + 1`
/// predicted as class `j + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Builds a matrix from row-major counts.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::format(format!(
                "{} counts for {classes} classes",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Count for 1-based (true, predicted) classes.
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[(truth - 1) * self.classes + (pred - 1)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes)
            .map(|i| self.counts[i * self.classes + i])
            .sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.classes..(i + 1) * self.classes]
            .iter()
            .sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        (0..self.classes)
            .map(|i| self.counts[i * self.classes + j])
            .sum()
    }

    fn nonempty(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::degenerate("empty confusion matrix")),
            t => Ok(t as f64),
        }
    }

    /// Overall accuracy: trace / total.
    pub fn oa(&self) -> Result<f64> {
        let total = self.nonempty()?;
        Ok(self.trace() as f64 / total)
    }

    /// Average accuracy: mean per-class recall over classes that occur in
    /// the ground truth. Absent classes are left out of the mean.
    pub fn aa(&self) -> Result<f64> {
        self.nonempty()?;
        let recalls: Vec<f64> = (0..self.classes)
            .filter_map(|i| {
                let row = self.row_sum(i);
                (row > 0).then(|| self.counts[i * self.classes + i] as f64 / row as f64)
            })
            .collect();
        Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
    }

    /// Expected chance agreement `sum_i row_i col_i / total^2`.
    pub fn chance_agreement(&self) -> Result<f64> {
        let total = self.nonempty()?;
        let pe: f64 = (0..self.classes)
            .map(|i| self.row_sum(i) as f64 * self.col_sum(i) as f64)
            .sum();
        Ok(pe / (total * total))
    }

    /// Cohen's kappa `(p_o - p_e) / (1 - p_e)`.
    pub fn kappa(&self) -> Result<f64> {
        let po = self.oa()?;
        let pe = self.chance_agreement()?;
        if pe == 1.0 {
            return if po == 1.0 {
                Ok(1.0)
            } else {
                Err(Error::degenerate("kappa undefined: chance agreement is 1"))
            };
        }
        Ok((po - pe) / (1.0 - pe))
    }

    /// One `name value` line per metric.
    pub fn report_text(&self) -> Result<String> {
        let mut s = String::new();
        writeln!(s, "samples {}", self.total()).unwrap();
        writeln!(s, "oa {:.6}", self.oa()?).unwrap();
        writeln!(s, "aa {:.6}", self.aa()?).unwrap();
        writeln!(s, "kappa {:.6}", self.kappa()?).unwrap();
        Ok(s)
    }

    /// `metric,value` CSV.
    pub fn report_csv(&self) -> Result<String> {
        Ok(format!(
            "metric,value\nsamples,{}\noa,{}\naa,{}\nkappa,{}\n",
            self.total(),
            self.oa()?,
            self.aa()?,
            self.kappa()?
        ))
    }

    /// The counts as CSV with a header row of predicted classes and a
    /// leading column of true classes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for j in 1..=self.classes {
            write!(s, ",{j}").unwrap();
        }
        s.push('\n');
        for i in 0..self.classes {
            write!(s, "{}", i + 1).unwrap();
            for j in 0..self.classes {
                write!(s, ",{}", self.counts[i * self.classes + j]).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Tallies 1-based labels into a `classes x classes` matrix.
pub fn confusion(truth: &[usize], pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::degenerate(format!(
            "{} true labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (&t, &p) in truth.iter().zip(pred) {
        if t == 0 || t > classes || p == 0 || p > classes {
            return Err(Error::degenerate(format!(
                "label pair ({t}, {p}) outside 1..={classes}"
            )));
        }
        cm.counts[(t - 1) * classes + (p - 1)] += 1;
    }
    Ok(cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_cases() {
        let cm = confusion(&[1, 2], &[1, 2], 2).unwrap();
        assert_eq!(cm, ConfusionMatrix::from_counts(2, vec![1, 0, 0, 1]).unwrap());

        let cm = confusion(&[1, 1], &[2, 2], 2).unwrap();
        assert_eq!(cm.get(1, 2), 2);
        assert_eq!(cm.total(), 2);

        let cm = confusion(&[], &[], 3).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(cm.oa().is_err());
        assert!(confusion(&[1], &[4], 3).is_err());
        assert!(confusion(&[0], &[1], 3).is_err());
    }

    #[test]
    fn perfect_and_chance() {
        let cm = ConfusionMatrix::from_counts(3, vec![4, 0, 0, 0, 7, 0, 0, 0, 2]).unwrap();
        assert_eq!(cm.oa().unwrap(), 1.0);
        assert_eq!(cm.aa().unwrap(), 1.0);
        assert_eq!(cm.kappa().unwrap(), 1.0);

        let cm = ConfusionMatrix::from_counts(2, vec![25, 25, 25, 25]).unwrap();
        assert_eq!(cm.oa().unwrap(), 0.5);
        assert_eq!(cm.chance_agreement().unwrap(), 0.5);
        assert_eq!(cm.kappa().unwrap(), 0.0);
    }

    #[test]
    fn kappa_single_cell() {
        let cm = ConfusionMatrix::from_counts(2, vec![5, 0, 0, 0]).unwrap();
        assert_eq!(cm.kappa().unwrap(), 1.0);
        // all truth in class 1, all predictions in class 1 except none: p_e < 1
        let cm = ConfusionMatrix::from_counts(2, vec![3, 2, 0, 0]).unwrap();
        assert_eq!(cm.kappa().unwrap(), 0.0);
    }

    #[test]
    fn aa_skips_absent_classes() {
        // class 2 never occurs in the truth
        let cm = ConfusionMatrix::from_counts(3, vec![3, 1, 0, 0, 0, 0, 0, 0, 2]).unwrap();
        assert!((cm.aa().unwrap() - (0.75 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let cm = confusion(&[1, 2, 2], &[1, 1, 2], 2).unwrap();
        assert_eq!(cm.to_csv(), "true\\pred,1,2\n1,1,0\n2,1,1\n");
        assert!(cm.report_text().unwrap().starts_with("samples 3\noa 0.666667\n"));
    }

    proptest! {
        #[test]
        fn ranges(counts in proptest::collection::vec(0u64..50, 16)) {
            let cm = ConfusionMatrix::from_counts(4, counts).unwrap();
            prop_assume!(cm.total() > 0);
            let oa = cm.oa().unwrap();
            let aa = cm.aa().unwrap();
            prop_assert!((0.0..=1.0).contains(&oa));
            prop_assert!((0.0..=1.0).contains(&aa));
            if let Ok(k) = cm.kappa() {
                prop_assert!((-1.0..=1.0).contains(&k));
            }
        }
    }
}
