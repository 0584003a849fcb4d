use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::index;

use super::{LabelRaster, Pixel};
use crate::error::{Error, Result};
use crate::random;

/// Per-class training counts for Indian Pines (16 classes).
pub const INDIAN_PINES_TRAIN_COUNTS: [usize; 16] = [
    15, 142, 83, 23, 48, 73, 20, 47, 15, 97, 160, 59, 20, 126, 38, 50,
];

/// Per-class training counts for Pavia University (9 classes).
pub const PAVIA_TRAIN_COUNTS: [usize; 9] = [132, 372, 41, 61, 26, 100, 26, 73, 18];

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPreset {
    IndianPines,
    Pavia,
}

impl SplitPreset {
    pub fn train_counts(self) -> &'static [usize] {
        match self {
            SplitPreset::IndianPines => &INDIAN_PINES_TRAIN_COUNTS,
            SplitPreset::Pavia => &PAVIA_TRAIN_COUNTS,
        }
    }
}

/// Disjoint train and test pixel lists covering every labeled pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<Pixel>,
    pub test: Vec<Pixel>,
    pub seed: u64,
}

impl Split {
    pub fn labels_of(&self, raster: &LabelRaster, train: bool) -> Vec<usize> {
        let side = if train { &self.train } else { &self.test };
        side.iter().map(|&(r, c)| raster.get(r, c) as usize).collect()
    }
}

/// Draws exactly `counts[c]` training pixels from class `c + 1`, uniformly
/// at random for the given seed; every other labeled pixel goes to test.
/// Both sides are listed class by class, in raster order within a class.
pub fn make_split(labels: &LabelRaster, counts: &[usize], seed: u64) -> Result<Split> {
    let per_class = labels.class_pixels();
    if counts.len() != per_class.len() {
        return Err(Error::degenerate(format!(
            "{} per-class counts for {} classes",
            counts.len(),
            per_class.len()
        )));
    }
    let mut rng = random::seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, (pixels, &want)) in per_class.iter().zip(counts).enumerate() {
        if want > pixels.len() {
            return Err(Error::degenerate(format!(
                "class {} has {} pixels, {want} requested for training",
                c + 1,
                pixels.len()
            )));
        }
        let mut chosen = index::sample(&mut rng, pixels.len(), want).into_vec();
        chosen.sort_unstable();
        let mut picked = vec![false; pixels.len()];
        for i in chosen {
            picked[i] = true;
        }
        for (p, &is_train) in pixels.iter().zip(&picked) {
            if is_train {
                train.push(*p);
            } else {
                test.push(*p);
            }
        }
    }
    if test.is_empty() {
        warn!("split leaves the test set empty");
    }
    Ok(Split { train, test, seed })
}

/// `round(fraction * total)` training pixels per class.
pub fn split_fraction(labels: &LabelRaster, fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::degenerate(format!("fraction {fraction} outside [0, 1]")));
    }
    let counts: Vec<usize> = labels
        .class_pixels()
        .iter()
        .map(|p| (fraction * p.len() as f64).round() as usize)
        .collect();
    make_split(labels, &counts, seed)
}

pub fn split_preset(labels: &LabelRaster, preset: SplitPreset, seed: u64) -> Result<Split> {
    make_split(labels, preset.train_counts(), seed)
}

/// `row,col,role` lines under a header, train pixels first.
pub fn write_split_csv(split: &Split, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from("row,col,role\n");
    for &(r, c) in &split.train {
        writeln!(s, "{r},{c},train").unwrap();
    }
    for &(r, c) in &split.test {
        writeln!(s, "{r},{c},test").unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_split_csv(path: impl AsRef<Path>, seed: u64) -> Result<Split> {
    let text = fs::read_to_string(path)?;
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
        seed,
    };
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("row")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::format(format!("split line {}: '{line}'", i + 1));
        if fields.len() != 3 {
            return Err(bad());
        }
        let r: usize = fields[0].parse().map_err(|_| bad())?;
        let c: usize = fields[1].parse().map_err(|_| bad())?;
        if !seen.insert((r, c)) {
            return Err(Error::format(format!("pixel ({r}, {c}) listed twice")));
        }
        match fields[2] {
            "train" => split.train.push((r, c)),
            "test" => split.test.push((r, c)),
            _ => return Err(bad()),
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster() -> LabelRaster {
        // class 1: 6 pixels, class 2: 4 pixels, 2 unlabeled
        LabelRaster::new(3, 4, vec![1, 1, 2, 0, 1, 2, 2, 1, 0, 1, 2, 1]).unwrap()
    }

    #[test]
    fn counts_and_disjointness() {
        let r = raster();
        let s = make_split(&r, &[2, 3], 7).unwrap();
        assert_eq!(s.train.len(), 5);
        assert_eq!(s.test.len(), 5);
        let labels = s.labels_of(&r, true);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 2);
        assert_eq!(labels.iter().filter(|&&l| l == 2).count(), 3);
        let train: HashSet<_> = s.train.iter().collect();
        assert!(s.test.iter().all(|p| !train.contains(p)));
        assert_eq!(make_split(&r, &[2, 3], 7).unwrap(), s);
    }

    #[test]
    fn over_request_and_full_train() {
        let r = raster();
        assert!(matches!(make_split(&r, &[7, 1], 0), Err(Error::DegenerateInput(_))));
        assert!(make_split(&r, &[1], 0).is_err());
        let s = make_split(&r, &[6, 4], 0).unwrap();
        assert!(s.test.is_empty());
    }

    #[test]
    fn fraction_rounds_per_class() {
        let s = split_fraction(&raster(), 0.5, 1).unwrap();
        assert_eq!(s.train.len(), 3 + 2);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.csv");
        let s = make_split(&raster(), &[3, 1], 3).unwrap();
        write_split_csv(&s, &p).unwrap();
        assert_eq!(read_split_csv(&p, 3).unwrap(), s);
        fs::write(&p, "row,col,role\n0,0,train\n0,0,test\n").unwrap();
        assert!(read_split_csv(&p, 0).is_err());
    }
}
