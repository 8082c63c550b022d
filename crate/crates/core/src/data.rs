//! Dataset ingestion and generation.
//!
//! The on-disk layout is the common multi-omics release format: per view k
//! in {1,2,3} the files `{k}_tr.csv`, `{k}_te.csv` (one sample per row, no
//! header), `{k}_featname.csv` (one feature name per line), plus
//! `labels_tr.csv` / `labels_te.csv` (one 0/1 label per line). In memory
//! samples live in a single unified ordering, the training block followed
//! by the test block, and every module indexes into that ordering.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::rng::{standard_normal, uniform};
use crate::numcore::{seeded_rng, Matrix};

pub const VIEW_COUNT: usize = 3;
pub const DEFAULT_VIEW_NAMES: [&str; VIEW_COUNT] = ["mRNA", "DNAmeth", "miRNA"];

#[derive(Debug, Clone)]
pub struct OmicsView {
    pub id: usize,
    pub name: String,
    /// n×d feature matrix over the unified sample ordering.
    pub features: Matrix,
    pub feature_names: Vec<String>,
    /// Relative acquisition cost of this view.
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub views: Vec<OmicsView>,
    /// 0 = control, 1 = disease; unified ordering.
    pub labels: Vec<usize>,
    pub train_index: Vec<usize>,
    pub test_index: Vec<usize>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_samples();
        for view in &self.views {
            if view.features.rows() != n {
                return Err(Error::Alignment(format!(
                    "view '{}' has {} rows for {} samples",
                    view.name,
                    view.features.rows(),
                    n
                )));
            }
            if view.feature_names.len() != view.features.cols() {
                return Err(Error::Alignment(format!(
                    "view '{}' has {} feature names for {} columns",
                    view.name,
                    view.feature_names.len(),
                    view.features.cols()
                )));
            }
        }
        if self.labels.iter().any(|&l| l > 1) {
            return Err(Error::Config("labels must be binary".to_string()));
        }
        let mut seen = vec![false; n];
        for &i in self.train_index.iter().chain(&self.test_index) {
            if i >= n || seen[i] {
                return Err(Error::Alignment(format!(
                    "sample index {i} out of range or duplicated across splits"
                )));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

fn data_err(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Data {
        file: file.display().to_string(),
        line,
        message: message.into(),
    }
}

fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| data_err(path, 0, format!("cannot open: {e}")))?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                data_err(path, line_no, format!("non-numeric cell '{}'", cell.trim()))
            })?;
            if !v.is_finite() {
                return Err(data_err(path, line_no, "non-finite value"));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            let expected = Vec::len(first);
            if row.len() != expected {
                return Err(data_err(
                    path,
                    line_no,
                    format!("ragged row: {} cells, expected {expected}", row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data_err(path, 0, "empty file"));
    }
    Ok(rows)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let file = File::open(path).map_err(|e| data_err(path, 0, format!("cannot open: {e}")))?;
    let mut labels = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let cell = line.trim();
        if cell.is_empty() {
            continue;
        }
        // Some releases store labels as floats ("1.0").
        let value: f64 = cell
            .parse()
            .map_err(|_| data_err(path, line_no, format!("non-numeric label '{cell}'")))?;
        if value != 0.0 && value != 1.0 {
            return Err(data_err(
                path,
                line_no,
                format!("non-binary label '{cell}'"),
            ));
        }
        labels.push(value as usize);
    }
    if labels.is_empty() {
        return Err(data_err(path, 0, "empty label file"));
    }
    Ok(labels)
}

fn read_names(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| data_err(path, 0, format!("cannot open: {e}")))?;
    let mut names = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let name = line.trim();
        if !name.is_empty() {
            names.push(name.to_string());
        }
    }
    Ok(names)
}

/// Load a dataset directory, validating shapes and labels. Training rows
/// come first in the unified ordering, then test rows.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let labels_tr = read_labels(&dir.join("labels_tr.csv"))?;
    let labels_te = read_labels(&dir.join("labels_te.csv"))?;
    let (n_tr, n_te) = (labels_tr.len(), labels_te.len());

    let mut views = Vec::with_capacity(VIEW_COUNT);
    for k in 0..VIEW_COUNT {
        let tr_path = dir.join(format!("{}_tr.csv", k + 1));
        let te_path = dir.join(format!("{}_te.csv", k + 1));
        let tr = read_numeric_csv(&tr_path)?;
        let te = read_numeric_csv(&te_path)?;
        if tr.len() != n_tr {
            return Err(data_err(
                &tr_path,
                tr.len(),
                format!("{} rows but labels_tr.csv has {n_tr}", tr.len()),
            ));
        }
        if te.len() != n_te {
            return Err(data_err(
                &te_path,
                te.len(),
                format!("{} rows but labels_te.csv has {n_te}", te.len()),
            ));
        }
        if tr[0].len() != te[0].len() {
            return Err(data_err(
                &te_path,
                1,
                format!(
                    "feature count {} differs from training block's {}",
                    te[0].len(),
                    tr[0].len()
                ),
            ));
        }
        let d = tr[0].len();
        let name_path = dir.join(format!("{}_featname.csv", k + 1));
        let feature_names = read_names(&name_path)?;
        if feature_names.len() != d {
            return Err(data_err(
                &name_path,
                feature_names.len(),
                format!("{} names for {d} feature columns", feature_names.len()),
            ));
        }
        let mut all = tr;
        all.extend(te);
        views.push(OmicsView {
            id: k,
            name: DEFAULT_VIEW_NAMES[k].to_string(),
            features: Matrix::from_rows(&all)?,
            feature_names,
            cost: 1.0,
        });
    }

    let mut labels = labels_tr;
    labels.extend(labels_te);
    let dataset = Dataset {
        views,
        labels,
        train_index: (0..n_tr).collect(),
        test_index: (n_tr..n_tr + n_te).collect(),
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Companion writer emitting the same layout `load_dataset` reads. The
/// train/test blocks are written in unified-ordering order, so a
/// round-trip reproduces the dataset exactly.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    std::fs::create_dir_all(dir)?;
    let write_rows = |path: &Path, rows: &[usize], view: &OmicsView| -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for &i in rows {
            let cells: Vec<String> = view.features.row(i).iter().map(f64::to_string).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    };
    for view in &dataset.views {
        write_rows(
            &dir.join(format!("{}_tr.csv", view.id + 1)),
            &dataset.train_index,
            view,
        )?;
        write_rows(
            &dir.join(format!("{}_te.csv", view.id + 1)),
            &dataset.test_index,
            view,
        )?;
        let mut w = BufWriter::new(File::create(
            dir.join(format!("{}_featname.csv", view.id + 1)),
        )?);
        for name in &view.feature_names {
            writeln!(w, "{name}")?;
        }
    }
    let write_labels = |path: &Path, rows: &[usize]| -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for &i in rows {
            writeln!(w, "{}", dataset.labels[i])?;
        }
        Ok(())
    };
    write_labels(&dir.join("labels_tr.csv"), &dataset.train_index)?;
    write_labels(&dir.join("labels_te.csv"), &dataset.test_index)?;
    Ok(())
}

/// Two-class Gaussian synthetic dataset. Per view, class means sit at
/// ±snr·u along a random unit direction u with unit-variance noise, so the
/// oracle (Bayes) accuracy of that view alone is Φ(snr). Balanced classes,
/// 70/30 stratified train/test split, fully determined by the seed.
pub fn generate_synthetic(n: usize, d: usize, view_snrs: [f64; 3], seed: u64) -> Result<Dataset> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "synthetic n must be even and ≥ 4, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::Config("synthetic d must be ≥ 1".to_string()));
    }
    if view_snrs.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::Config(format!(
            "view snrs must be non-negative, got {view_snrs:?}"
        )));
    }
    let mut rng = seeded_rng(seed);

    // Alternating labels keep both classes balanced before the split.
    let labels_prelim: Vec<usize> = (0..n).map(|i| i % 2).collect();

    let mut feature_blocks = Vec::with_capacity(VIEW_COUNT);
    for &snr in &view_snrs {
        // Random unit direction per view.
        let mut u: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        u.iter_mut().for_each(|v| *v /= norm);

        let mut rows = Vec::with_capacity(n);
        for &label in &labels_prelim {
            let sign = if label == 1 { 1.0 } else { -1.0 };
            let row: Vec<f64> = u
                .iter()
                .map(|&ui| sign * snr * ui + standard_normal(&mut rng))
                .collect();
            rows.push(row);
        }
        feature_blocks.push(rows);
    }

    // Stratified 70/30 split via a seeded shuffle within each class.
    let mut class0: Vec<usize> = (0..n).filter(|i| labels_prelim[*i] == 0).collect();
    let mut class1: Vec<usize> = (0..n).filter(|i| labels_prelim[*i] == 1).collect();
    shuffle(&mut class0, &mut rng);
    shuffle(&mut class1, &mut rng);
    // 70% to the train block, but never an empty test block per class.
    let cut = |len: usize| (len * 7).div_ceil(10).min(len - 1).max(1);
    let cut0 = cut(class0.len());
    let cut1 = cut(class1.len());
    let mut train_order: Vec<usize> = class0[..cut0].to_vec();
    train_order.extend_from_slice(&class1[..cut1]);
    train_order.sort_unstable();
    let mut test_order: Vec<usize> = class0[cut0..].to_vec();
    test_order.extend_from_slice(&class1[cut1..]);
    test_order.sort_unstable();

    // Re-order into the unified layout: train block then test block.
    let order: Vec<usize> = train_order.iter().chain(&test_order).copied().collect();
    let labels: Vec<usize> = order.iter().map(|&i| labels_prelim[i]).collect();
    let n_tr = train_order.len();

    let views = feature_blocks
        .into_iter()
        .enumerate()
        .map(|(k, rows)| {
            let reordered: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
            Ok(OmicsView {
                id: k,
                name: DEFAULT_VIEW_NAMES[k].to_string(),
                features: Matrix::from_rows(&reordered)?,
                feature_names: (0..d).map(|j| format!("f{j}")).collect(),
                cost: 1.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let dataset = Dataset {
        views,
        labels,
        train_index: (0..n_tr).collect(),
        test_index: (n_tr..n).collect(),
    };
    dataset.validate()?;
    Ok(dataset)
}

fn shuffle(items: &mut [usize], rng: &mut crate::numcore::SeededRng) {
    for i in (1..items.len()).rev() {
        let j = (uniform(rng) * (i + 1) as f64) as usize;
        items.swap(i, j.min(i));
    }
}

/// Stratified carve of the training block into fit and tune subsets.
/// `tune_fraction` of each class (rounded down, at least one sample when
/// possible) moves to the tune set.
pub fn carve_validation(
    dataset: &Dataset,
    tune_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&tune_fraction) || tune_fraction == 0.0 {
        return Err(Error::Config(format!(
            "tune fraction {tune_fraction} outside (0, 1)"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut fit = Vec::new();
    let mut tune = Vec::new();
    for class in 0..2 {
        let mut members: Vec<usize> = dataset
            .train_index
            .iter()
            .copied()
            .filter(|&i| dataset.labels[i] == class)
            .collect();
        shuffle(&mut members, &mut rng);
        let take =
            ((members.len() as f64 * tune_fraction) as usize).max(usize::from(members.len() > 1));
        tune.extend_from_slice(&members[..take]);
        fit.extend_from_slice(&members[take..]);
    }
    if fit.is_empty() || tune.is_empty() {
        return Err(Error::Config(
            "validation carve left an empty fit or tune set".to_string(),
        ));
    }
    fit.sort_unstable();
    tune.sort_unstable();
    Ok((fit, tune))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(40, 6, [2.0, 0.5, 0.0], 9).unwrap();
        let b = generate_synthetic(40, 6, [2.0, 0.5, 0.0], 9).unwrap();
        assert_eq!(a.labels, b.labels);
        for (va, vb) in a.views.iter().zip(&b.views) {
            assert_eq!(va.features, vb.features);
        }
    }

    #[test]
    fn synthetic_shapes_and_balance() {
        let ds = generate_synthetic(60, 5, [1.0, 1.0, 1.0], 3).unwrap();
        assert_eq!(ds.n_samples(), 60);
        assert_eq!(ds.views.len(), 3);
        assert_eq!(ds.views[0].features.shape(), (60, 5));
        let positives = ds.labels.iter().filter(|&&l| l == 1).count();
        assert_eq!(positives, 30);
        assert_eq!(ds.train_index.len() + ds.test_index.len(), 60);
        // Stratification keeps the test block roughly balanced.
        let test_pos = ds.test_index.iter().filter(|&&i| ds.labels[i] == 1).count();
        assert_eq!(test_pos, ds.test_index.len() - test_pos);
    }

    #[test]
    fn synthetic_rejects_bad_sizes() {
        assert!(generate_synthetic(3, 4, [1.0; 3], 0).is_err());
        assert!(generate_synthetic(5, 4, [1.0; 3], 0).is_err());
        assert!(generate_synthetic(10, 0, [1.0; 3], 0).is_err());
        assert!(generate_synthetic(10, 4, [1.0, -1.0, 0.0], 0).is_err());
    }

    #[test]
    fn round_trip_through_disk() {
        let ds = generate_synthetic(20, 4, [1.5, 0.8, 0.2], 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.labels, ds.labels);
        assert_eq!(loaded.train_index, ds.train_index);
        assert_eq!(loaded.test_index, ds.test_index);
        for (a, b) in ds.views.iter().zip(&loaded.views) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.feature_names, b.feature_names);
        }
    }

    #[test]
    fn loader_rejects_non_binary_label() {
        let ds = generate_synthetic(10, 3, [1.0; 3], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        std::fs::write(dir.path().join("labels_tr.csv"), "0\n2\n1\n0\n1\n0\n1\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("labels_tr.csv:2"), "{err}");
        assert!(err.contains("non-binary"), "{err}");
    }

    #[test]
    fn loader_rejects_row_count_mismatch() {
        let ds = generate_synthetic(10, 3, [1.0; 3], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        // Drop one row from view 2's training block.
        let path = dir.path().join("2_tr.csv");
        let content = std::fs::read_to_string(&path).unwrap();
        let trimmed: Vec<&str> = content.lines().skip(1).collect();
        std::fs::write(&path, trimmed.join("\n")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("2_tr.csv"), "{err}");
    }

    #[test]
    fn loader_rejects_ragged_and_non_numeric() {
        let ds = generate_synthetic(10, 3, [1.0; 3], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join("1_te.csv");
        std::fs::write(&path, "0.1,0.2,0.3\n0.4,0.5\n0.6,0.7,0.8\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("1_te.csv:2"), "{err}");
        assert!(err.contains("ragged"), "{err}");

        std::fs::write(&path, "0.1,0.2,0.3\n0.4,zebra,0.5\n0.6,0.7,0.8\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("non-numeric"), "{err}");
    }

    #[test]
    fn loader_rejects_missing_file() {
        let ds = generate_synthetic(10, 3, [1.0; 3], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("3_featname.csv")).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn carve_validation_is_stratified_and_disjoint() {
        let ds = generate_synthetic(60, 4, [1.0; 3], 5).unwrap();
        let (fit, tune) = carve_validation(&ds, 0.2, 11).unwrap();
        assert_eq!(fit.len() + tune.len(), ds.train_index.len());
        for i in &tune {
            assert!(!fit.contains(i));
        }
        let tune_pos = tune.iter().filter(|&&i| ds.labels[i] == 1).count();
        assert!(tune_pos > 0 && tune_pos < tune.len());
    }
}
