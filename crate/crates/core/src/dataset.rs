//! Labeled sample collections and the operations that produce them: CSV and
//! IDX loaders, column normalization, stratified splits, and a synthetic
//! generator for two classes that differ only by the sign of a shared
//! direction.
//!
//! Samples are stored column-wise: a `FeatureMatrix` has one feature
//! dimension per row and one sample per column, and every index into a
//! `Dictionary` refers to a column position.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Integer class identifier.
pub type Label = i64;

/// Columns with l2-norm below this are degenerate and get perturbed before
/// normalization.
pub const EPSILON_COL: f64 = 1e-10;

/// Magnitude of the uniform perturbation applied to degenerate columns.
const PERTURBATION: f64 = 1e-8;

/// Internal seed for the degenerate-column perturbation; XORed with the
/// column index so the operation is pure without a seed parameter.
const PERTURBATION_SEED: u64 = 0x6b63_7263_5f70_636f;

/// Label of the synthetic class drawn from the positive orthant.
pub const CLASS_Q: Label = 0;
/// Label of the synthetic class drawn from the negative orthant.
pub const CLASS_W: Label = 1;

/// Default noise variance for [`make_same_direction`], whose parameter is
/// the standard deviation: pass `DEFAULT_NOISE_VARIANCE.sqrt()`.
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.15;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

// ===== Containers =====

/// Dense feature matrix, one sample per column. Every entry is finite and
/// the feature dimension is at least 1. Loaders additionally reject inputs
/// with zero samples; a zero-column matrix is only ever produced internally
/// (empty split halves).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    /// Wraps a matrix, validating shape and finiteness.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "feature matrix needs at least one row".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "feature matrix contains a non-finite value".into(),
            ));
        }
        Ok(Self { data })
    }

    /// Builds a matrix from equally sized column vectors.
    pub fn from_columns(dim: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "feature dimension must be at least 1".into(),
            ));
        }
        if columns.is_empty() {
            return Err(Error::InvalidArgument(
                "feature matrix needs at least one column".into(),
            ));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "expected columns of length {dim}, found {}",
                c.len()
            )));
        }
        let data = DMatrix::from_fn(dim, columns.len(), |i, j| columns[j][i]);
        Self::new(data)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    /// Column `j` as a contiguous slice (samples are column-major).
    pub fn column(&self, j: usize) -> &[f64] {
        let m = self.data.nrows();
        &self.data.as_slice()[j * m..(j + 1) * m]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// A labeled set of atoms. `labels[k]` is the class of column `k`;
/// `classes` lists the distinct labels in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: FeatureMatrix,
    labels: Vec<Label>,
    classes: Vec<Label>,
}

impl Dictionary {
    pub fn new(atoms: FeatureMatrix, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != atoms.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} atoms",
                labels.len(),
                atoms.cols()
            )));
        }
        let mut classes = labels.clone();
        classes.sort_unstable();
        classes.dedup();
        Ok(Self {
            atoms,
            labels,
            classes,
        })
    }

    pub fn atoms(&self) -> &FeatureMatrix {
        &self.atoms
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Distinct labels, ascending.
    pub fn classes(&self) -> &[Label] {
        &self.classes
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.atoms.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.cols() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.atoms.rows()
    }

    pub fn label(&self, k: usize) -> Label {
        self.labels[k]
    }

    /// Column positions of every atom with the given label.
    pub fn class_indices(&self, label: Label) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(k, _)| k)
            .collect()
    }

    /// Sub-dictionary of the given column positions, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Dictionary> {
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&k| k >= n) {
            return Err(Error::InvalidArgument(format!(
                "atom index {bad} out of range for {n} atoms"
            )));
        }
        let m = self.feature_dim();
        let data = DMatrix::from_fn(m, indices.len(), |i, j| {
            self.atoms.matrix()[(i, indices[j])]
        });
        let labels = indices.iter().map(|&k| self.labels[k]).collect();
        Dictionary::new(FeatureMatrix { data }, labels)
    }
}

// ===== CSV =====

/// Loads a dictionary from CSV: one sample per line, first field the
/// integer label, remaining fields the feature values. No header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dictionary> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

fn parse_csv(text: &str) -> Result<Dictionary> {
    let mut labels = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            // Permit blank trailing lines; anything else is malformed.
            if text.lines().skip(idx).any(|l| !l.trim().is_empty()) {
                return Err(Error::Parse {
                    line: lineno,
                    message: "empty line inside data".into(),
                });
            }
            break;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: lineno,
                message: "expected a label and at least one feature".into(),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {w} fields, found {}", fields.len()),
                });
            }
            _ => {}
        }
        let label = fields[0].trim().parse::<Label>().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid integer label {:?}", fields[0]),
        })?;
        let mut column = Vec::with_capacity(fields.len() - 1);
        for field in &fields[1..] {
            let v = field.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid feature value {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("non-finite feature value {field:?}"),
                });
            }
            column.push(v);
        }
        labels.push(label);
        columns.push(column);
    }
    if columns.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let dim = columns[0].len();
    Dictionary::new(FeatureMatrix::from_columns(dim, &columns)?, labels)
}

/// Writes a dictionary in the format [`load_csv`] reads. Values round-trip
/// exactly (shortest-representation float formatting).
pub fn save_csv(dict: &Dictionary, path: impl AsRef<Path>) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    for k in 0..dict.len() {
        let _ = write!(out, "{}", dict.label(k));
        for v in dict.atoms().column(k) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ===== IDX =====

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxFormat(format!("truncated header reading {what}")));
    }
    let mut buf = [0u8; 4];
    buf.copy_from_slice(&bytes[offset..end]);
    Ok(u32::from_be_bytes(buf))
}

/// Loads an image/label pair of IDX files (the MNIST container format).
/// Pixels are scaled to [0, 1]; each image becomes one column.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dictionary> {
    let img_bytes = std::fs::read(images)?;
    let lbl_bytes = std::fs::read(labels)?;

    let magic = read_u32_be(&img_bytes, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxFormat(format!(
            "image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )));
    }
    let count = read_u32_be(&img_bytes, 4, "image count")? as usize;
    let rows = read_u32_be(&img_bytes, 8, "image rows")? as usize;
    let cols = read_u32_be(&img_bytes, 12, "image cols")? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(Error::IdxFormat(format!(
            "degenerate image dimensions {count}x{rows}x{cols}"
        )));
    }
    let expected = 16 + count * rows * cols;
    if img_bytes.len() != expected {
        return Err(Error::IdxFormat(format!(
            "image payload is {} bytes, expected {expected}",
            img_bytes.len()
        )));
    }

    let magic = read_u32_be(&lbl_bytes, 0, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxFormat(format!(
            "label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )));
    }
    let lbl_count = read_u32_be(&lbl_bytes, 4, "label count")? as usize;
    if lbl_bytes.len() != 8 + lbl_count {
        return Err(Error::IdxFormat(format!(
            "label payload is {} bytes, expected {}",
            lbl_bytes.len(),
            8 + lbl_count
        )));
    }
    if lbl_count != count {
        return Err(Error::IdxFormat(format!(
            "{count} images but {lbl_count} labels"
        )));
    }

    let dim = rows * cols;
    let pixels = &img_bytes[16..];
    let data = DMatrix::from_fn(dim, count, |i, j| f64::from(pixels[j * dim + i]) / 255.0);
    let labels = lbl_bytes[8..].iter().map(|&b| Label::from(b)).collect();
    Dictionary::new(FeatureMatrix::new(data)?, labels)
}

// ===== Normalization =====

/// Scales every column of `m` (in place) to unit l2-norm and returns the
/// scale factors that were divided out. Columns with norm below
/// [`EPSILON_COL`] first receive a deterministic uniform perturbation in
/// [-1e-8, 1e-8].
pub(crate) fn normalize_columns_in_place(m: &mut DMatrix<f64>) -> DVector<f64> {
    let rows = m.nrows();
    let mut scales = DVector::zeros(m.ncols());
    for j in 0..m.ncols() {
        let mut norm = m.column(j).norm();
        if norm < EPSILON_COL {
            let mut rng = ChaCha8Rng::seed_from_u64(PERTURBATION_SEED ^ j as u64);
            while norm < EPSILON_COL {
                for i in 0..rows {
                    m[(i, j)] += rng.random_range(-PERTURBATION..=PERTURBATION);
                }
                norm = m.column(j).norm();
            }
        }
        let mut col = m.column_mut(j);
        col /= norm;
        scales[j] = norm;
    }
    scales
}

/// Returns `m` with every column scaled to unit l2-norm. Degenerate columns
/// (norm below [`EPSILON_COL`]) are perturbed first, so the result always
/// has unit columns; applying the operation twice changes nothing beyond
/// rounding.
pub fn unit_normalize_columns(m: &FeatureMatrix) -> FeatureMatrix {
    let mut data = m.matrix().clone();
    normalize_columns_in_place(&mut data);
    FeatureMatrix { data }
}

/// Returns `dict` with atom columns normalized, labels untouched.
pub fn normalize_dictionary(dict: &Dictionary) -> Dictionary {
    Dictionary {
        atoms: unit_normalize_columns(dict.atoms()),
        labels: dict.labels.clone(),
        classes: dict.classes.clone(),
    }
}

// ===== Stratified split =====

/// Per-class train size and shuffle seed for [`stratified_split`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub per_class: usize,
    pub seed: u64,
}

/// Splits `dict` into (train, test): exactly `per_class` atoms of every
/// class go to train, the rest to test. Atom order within each half follows
/// the original column order. Deterministic for a fixed seed.
pub fn stratified_split(dict: &Dictionary, spec: &SplitSpec) -> Result<(Dictionary, Dictionary)> {
    if spec.per_class == 0 {
        return Err(Error::InvalidArgument(
            "per-class train count must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for &class in dict.classes() {
        let mut members = dict.class_indices(class);
        if members.len() < spec.per_class {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} atoms, cannot take {} for training",
                members.len(),
                spec.per_class
            )));
        }
        members.shuffle(&mut rng);
        let (train, test) = members.split_at(spec.per_class);
        train_idx.extend_from_slice(train);
        test_idx.extend_from_slice(test);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((dict.select(&train_idx)?, dict.select(&test_idx)?))
}

// ===== Synthetic generator =====

/// Generates two classes that share a direction and differ only by sign:
/// class [`CLASS_Q`] has i.i.d. entries uniform on [1, 3], class [`CLASS_W`]
/// uniform on [-3, -1], each entry then offset by zero-mean Gaussian noise
/// with standard deviation `noise_sd`. Produces `per_class` atoms per class
/// (Q block first).
pub fn make_same_direction(
    m: usize,
    per_class: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<Dictionary> {
    if m == 0 || per_class == 0 {
        return Err(Error::InvalidArgument(
            "feature dimension and per-class count must be at least 1".into(),
        ));
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be finite and non-negative, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positive = Uniform::new_inclusive(1.0, 3.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let negative = Uniform::new_inclusive(-3.0, -1.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };

    let n = 2 * per_class;
    let mut data = DMatrix::zeros(m, n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let base = if j < per_class { positive } else { negative };
        labels.push(if j < per_class { CLASS_Q } else { CLASS_W });
        for i in 0..m {
            let mut v = base.sample(&mut rng);
            if let Some(dist) = &noise {
                v += dist.sample(&mut rng);
            }
            data[(i, j)] = v;
        }
    }
    Dictionary::new(FeatureMatrix::new(data)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().expect("temp file");
        f.write_all(content.as_bytes()).expect("write");
        f
    }

    #[test]
    fn load_csv_reads_labels_and_columns() {
        let f = write_temp("1,0.5,2.25\n2,-1,3\n");
        let d = load_csv(f.path()).expect("load");
        assert_eq!(d.len(), 2);
        assert_eq!(d.feature_dim(), 2);
        assert_eq!(d.labels(), &[1, 2]);
        assert_eq!(d.classes(), &[1, 2]);
        assert_eq!(d.atoms().column(0), &[0.5, 2.25]);
        assert_eq!(d.atoms().column(1), &[-1.0, 3.0]);
    }

    #[test]
    fn load_csv_names_offending_line() {
        let f = write_temp("1,0.5,2.0\n2,1.0\n");
        match load_csv(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write_temp("1,0.5\nx,1.0\n");
        match load_csv(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write_temp("");
        assert!(matches!(load_csv(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let d = make_same_direction(5, 4, 0.3, 7).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_csv(&d, f.path()).unwrap();
        let back = load_csv(f.path()).unwrap();
        assert_eq!(back.labels(), d.labels());
        assert_eq!(back.atoms().matrix(), d.atoms().matrix());
    }

    fn idx_pair(images: &[u8], labels: &[u8]) -> (tempfile::NamedTempFile, tempfile::NamedTempFile) {
        use std::io::Write as _;
        let mut fi = tempfile::NamedTempFile::new().unwrap();
        fi.write_all(images).unwrap();
        let mut fl = tempfile::NamedTempFile::new().unwrap();
        fl.write_all(labels).unwrap();
        (fi, fl)
    }

    fn images_header(count: u32, rows: u32, cols: u32) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        v.extend_from_slice(&count.to_be_bytes());
        v.extend_from_slice(&rows.to_be_bytes());
        v.extend_from_slice(&cols.to_be_bytes());
        v
    }

    fn labels_payload(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn load_idx_scales_pixels() {
        let mut img = images_header(1, 2, 2);
        img.extend_from_slice(&[0, 255, 0, 255]);
        let (fi, fl) = idx_pair(&img, &labels_payload(&[7]));
        let d = load_idx(fi.path(), fl.path()).expect("load");
        assert_eq!(d.len(), 1);
        assert_eq!(d.feature_dim(), 4);
        assert_eq!(d.labels(), &[7]);
        assert_eq!(d.atoms().column(0), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn load_idx_rejects_bad_input() {
        // Count mismatch between the two files.
        let mut img = images_header(1, 2, 2);
        img.extend_from_slice(&[0; 4]);
        let (fi, fl) = idx_pair(&img, &labels_payload(&[1, 2]));
        assert!(matches!(load_idx(fi.path(), fl.path()), Err(Error::IdxFormat(_))));

        // Wrong magic.
        let mut img = images_header(1, 2, 2);
        img[3] = 0x01;
        img.extend_from_slice(&[0; 4]);
        let (fi, fl) = idx_pair(&img, &labels_payload(&[1]));
        assert!(matches!(load_idx(fi.path(), fl.path()), Err(Error::IdxFormat(_))));

        // Truncated pixel payload.
        let mut img = images_header(2, 2, 2);
        img.extend_from_slice(&[0; 7]);
        let (fi, fl) = idx_pair(&img, &labels_payload(&[1, 2]));
        assert!(matches!(load_idx(fi.path(), fl.path()), Err(Error::IdxFormat(_))));
    }

    #[test]
    fn normalize_scales_to_unit_norm() {
        let m = FeatureMatrix::new(DMatrix::from_column_slice(2, 1, &[3.0, 4.0])).unwrap();
        let n = unit_normalize_columns(&m);
        assert!((n.column(0)[0] - 0.6).abs() < 1e-15);
        assert!((n.column(0)[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_handles_zero_columns() {
        let m = FeatureMatrix::new(DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 0.0])).unwrap();
        let n = unit_normalize_columns(&m);
        let norm: f64 = n.column(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12, "norm {norm}");
        // Deterministic: same input, same output.
        let again = unit_normalize_columns(&m);
        assert_eq!(n, again);
    }

    #[test]
    fn normalize_is_idempotent() {
        let d = make_same_direction(6, 10, 0.2, 3).unwrap();
        let once = unit_normalize_columns(d.atoms());
        let twice = unit_normalize_columns(&once);
        let diff = (once.matrix() - twice.matrix()).abs().max();
        assert!(diff <= 1e-12, "idempotence violated by {diff}");
    }

    #[test]
    fn split_partitions_by_class() {
        let d = make_same_direction(4, 10, 0.1, 11).unwrap();
        let (train, test) = stratified_split(&d, &SplitSpec { per_class: 3, seed: 5 }).unwrap();
        assert_eq!(train.len(), 6);
        assert_eq!(test.len(), 14);
        for &class in d.classes() {
            assert_eq!(train.class_indices(class).len(), 3);
            assert_eq!(test.class_indices(class).len(), 7);
        }
        // Same seed reproduces the same split.
        let (train2, _) = stratified_split(&d, &SplitSpec { per_class: 3, seed: 5 }).unwrap();
        assert_eq!(train.atoms().matrix(), train2.atoms().matrix());
        // Multiset of labels is preserved.
        let mut all: Vec<Label> = train.labels().iter().chain(test.labels()).copied().collect();
        all.sort_unstable();
        let mut orig = d.labels().to_vec();
        orig.sort_unstable();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_preserves_atom_content() {
        let d = make_same_direction(3, 5, 0.1, 2).unwrap();
        let (train, test) = stratified_split(&d, &SplitSpec { per_class: 2, seed: 9 }).unwrap();
        // Every train/test column must literally appear in the source.
        let source: Vec<&[f64]> = (0..d.len()).map(|k| d.atoms().column(k)).collect();
        for k in 0..train.len() {
            assert!(source.contains(&train.atoms().column(k)));
        }
        for k in 0..test.len() {
            assert!(source.contains(&test.atoms().column(k)));
        }
    }

    #[test]
    fn split_with_full_class_leaves_empty_test() {
        let d = make_same_direction(4, 10, 0.1, 11).unwrap();
        let (train, test) = stratified_split(&d, &SplitSpec { per_class: 10, seed: 1 }).unwrap();
        assert_eq!(train.len(), 20);
        assert_eq!(test.len(), 0);
        assert!(test.is_empty());
    }

    #[test]
    fn split_rejects_oversized_request() {
        let d = make_same_direction(4, 10, 0.1, 11).unwrap();
        let err = stratified_split(&d, &SplitSpec { per_class: 11, seed: 1 }).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn same_direction_labels_and_ranges() {
        let d = make_same_direction(1, 50, 0.0, 4).unwrap();
        assert_eq!(d.classes(), &[CLASS_Q, CLASS_W]);
        assert_eq!(d.class_indices(CLASS_Q).len(), 50);
        assert_eq!(d.class_indices(CLASS_W).len(), 50);
        for k in d.class_indices(CLASS_Q) {
            let v = d.atoms().column(k)[0];
            assert!((1.0..=3.0).contains(&v), "class Q value {v} outside [1,3]");
        }
        for k in d.class_indices(CLASS_W) {
            let v = d.atoms().column(k)[0];
            assert!((-3.0..=-1.0).contains(&v), "class W value {v} outside [-3,-1]");
        }
    }

    #[test]
    fn same_direction_class_means_concentrate() {
        // Law of large numbers check: with 200 samples per class the
        // per-coordinate class-Q mean sits near 2.
        let d = make_same_direction(2, 200, DEFAULT_NOISE_VARIANCE.sqrt(), 42).unwrap();
        for i in 0..2 {
            let members = d.class_indices(CLASS_Q);
            let mean: f64 =
                members.iter().map(|&k| d.atoms().column(k)[i]).sum::<f64>() / members.len() as f64;
            assert!((1.8..=2.2).contains(&mean), "class Q mean {mean} drifted");
        }
    }

    #[test]
    fn same_direction_is_seed_deterministic() {
        let a = make_same_direction(3, 4, 0.5, 99).unwrap();
        let b = make_same_direction(3, 4, 0.5, 99).unwrap();
        assert_eq!(a.atoms().matrix(), b.atoms().matrix());
        let c = make_same_direction(3, 4, 0.5, 100).unwrap();
        assert_ne!(a.atoms().matrix(), c.atoms().matrix());
    }
}
