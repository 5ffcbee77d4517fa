//! Datasets and the bookkeeping around them: synthetic class mixtures,
//! CSV ingestion, teacher/student splits, per-example membership plans,
//! duplicate injection, and label-flip poisoning.
//!
//! Examples carry stable integer IDs. Splits and plans always speak in
//! IDs, never row positions, so rows can be appended (duplicates,
//! poison replicas) without renumbering anything that came before.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::seed::rng_from_seed;

/// A labeled dataset with stable per-example IDs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Unique ID per row. Freshly built datasets use `0..n`; appended
    /// rows (duplicates, poison replicas) get IDs past the current max.
    pub ids: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let ids = (0..labels.len()).collect();
        let d = Dataset { features, labels, classes, ids };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidData("need at least 2 classes".into()));
        }
        if self.features.rows() != self.labels.len() || self.labels.len() != self.ids.len() {
            return Err(Error::InvalidData("rows, labels, and ids disagree in length".into()));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.classes) {
            return Err(Error::InvalidData(format!(
                "label {bad} out of range for {} classes",
                self.classes
            )));
        }
        if self.features.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature entry".into()));
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        if !self.ids.iter().all(|&id| seen.insert(id)) {
            return Err(Error::InvalidData("duplicate example ID".into()));
        }
        Ok(())
    }

    /// Map from example ID to row position.
    pub fn index(&self) -> HashMap<usize, usize> {
        self.ids.iter().enumerate().map(|(row, &id)| (id, row)).collect()
    }

    /// Row position of an ID, or an error naming it.
    pub fn row_of(&self, id: usize) -> Result<usize> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .ok_or_else(|| Error::invalid_argument(format!("no example with ID {id}")))
    }

    fn next_id(&self) -> usize {
        self.ids.iter().max().map_or(0, |m| m + 1)
    }

    /// Appends a row and returns its fresh ID.
    fn push_row(&mut self, features: &[f64], label: usize) -> usize {
        let id = self.next_id();
        self.features.push_row(features);
        self.labels.push(label);
        self.ids.push(id);
        id
    }
}

/// Teacher and student pools, as ID lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub teacher: Vec<usize>,
    pub student: Vec<usize>,
    pub seed: u64,
    /// When set, the pools are one and the same set of examples.
    pub self_distill: bool,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.self_distill {
            if self.teacher != self.student {
                return Err(Error::InvalidData(
                    "self-distillation split with differing pools".into(),
                ));
            }
        } else {
            let t: HashSet<_> = self.teacher.iter().collect();
            if self.student.iter().any(|id| t.contains(id)) {
                return Err(Error::InvalidData("teacher and student pools overlap".into()));
            }
        }
        Ok(())
    }
}

/// Which examples each of `n_models` shadow models trains on.
///
/// Bits are stored model-major: position `m * pool.len() + p` says
/// whether pool entry `p` is IN for model `m`. Every example is IN for
/// exactly `n_models / 2` models (rounded down).
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipPlan {
    pub pool: Vec<usize>,
    pub n_models: usize,
    pub seed: u64,
    bits: Vec<bool>,
}

impl MembershipPlan {
    pub fn is_in(&self, model: usize, pool_pos: usize) -> bool {
        self.bits[model * self.pool.len() + pool_pos]
    }

    /// IDs of the pool examples that model `m` trains on.
    pub fn members_of(&self, m: usize) -> Vec<usize> {
        self.pool
            .iter()
            .enumerate()
            .filter(|&(p, _)| self.is_in(m, p))
            .map(|(_, &id)| id)
            .collect()
    }

    /// Number of models a pool entry is IN for.
    pub fn in_count(&self, pool_pos: usize) -> usize {
        (0..self.n_models).filter(|&m| self.is_in(m, pool_pos)).count()
    }

    /// Position of an ID within the plan's pool.
    pub fn pool_pos(&self, id: usize) -> Option<usize> {
        self.pool.iter().position(|&i| i == id)
    }
}

/// Draws a class mixture: each class gets a random unit-norm center, and
/// each example is its center plus `spread` times standard-normal noise.
pub fn gen_synthetic_mixture(
    classes: usize,
    dims: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::invalid_argument("need at least 2 classes"));
    }
    if dims < 1 || per_class < 1 {
        return Err(Error::invalid_argument("dims and per_class must be >= 1"));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::invalid_argument("spread must be finite and >= 0"));
    }
    let mut rng = rng_from_seed(seed);
    let normal = StandardNormal;
    let mut centers = Matrix::zeros(classes, dims);
    for c in 0..classes {
        let row = centers.row_mut(c);
        loop {
            for v in row.iter_mut() {
                *v = normal.sample(&mut rng);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            // A zero draw is astronomically unlikely but would divide by 0.
            if norm > 1e-12 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
                break;
            }
        }
    }
    let n = classes * per_class;
    let mut features = Matrix::zeros(n, dims);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for j in 0..per_class {
            let row = features.row_mut(c * per_class + j);
            for (v, &center) in row.iter_mut().zip(centers.row(c)) {
                let noise: f64 = normal.sample(&mut rng);
                *v = center + spread * noise;
            }
            labels.push(c);
        }
    }
    Dataset::new(features, labels, classes)
}

/// Loads `label,f1,...,fd` rows (no header). Row numbers in errors are
/// 1-based. Blank lines are skipped but still counted.
pub fn load_csv_tabular(path: &Path, classes: usize) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::invalid_argument("need at least 2 classes"));
    }
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut dims: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label_txt = fields.next().expect("split yields at least one field");
        let label: usize = label_txt.trim().parse().map_err(|_| Error::Parse {
            row,
            msg: format!("bad label {label_txt:?}"),
        })?;
        if label >= classes {
            return Err(Error::InvalidData(format!(
                "row {row}: label {label} out of range for {classes} classes"
            )));
        }
        let mut feats = Vec::new();
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("bad feature {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("non-finite feature {f:?}"),
                });
            }
            feats.push(v);
        }
        match dims {
            None => {
                if feats.is_empty() {
                    return Err(Error::Parse { row, msg: "row has no features".into() });
                }
                dims = Some(feats.len());
            }
            Some(d) if d != feats.len() => {
                return Err(Error::Parse {
                    row,
                    msg: format!("expected {d} features, found {}", feats.len()),
                });
            }
            _ => {}
        }
        labels.push(label);
        data.extend_from_slice(&feats);
    }
    let dims = dims.ok_or_else(|| Error::InvalidData("file has no data rows".into()))?;
    let n = labels.len();
    Dataset::new(Matrix::from_vec(data, n, dims), labels, classes)
}

/// Writes the `label,f1,...,fd` format read by [`load_csv_tabular`].
/// Floats use the shortest representation that parses back exactly, so
/// a save/load round trip is bitwise lossless.
pub fn save_csv_tabular(d: &Dataset, path: &Path) -> Result<()> {
    d.validate()?;
    let mut out = String::with_capacity(d.len() * (d.dim() + 1) * 8);
    for r in 0..d.len() {
        out.push_str(&d.labels[r].to_string());
        for v in d.features.row(r) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Drops later rows whose feature vector repeats an earlier one bit for
/// bit. Returns the kept dataset (original IDs preserved) and the IDs of
/// removed rows.
pub fn dedup_exact(d: &Dataset) -> (Dataset, Vec<usize>) {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(d.len());
    let mut keep_rows = Vec::with_capacity(d.len());
    let mut removed = Vec::new();
    for row in 0..d.len() {
        let key: Vec<u64> = d.features.row(row).iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            keep_rows.push(row);
        } else {
            removed.push(d.ids[row]);
        }
    }
    let kept = Dataset {
        features: d.features.gather_rows(&keep_rows),
        labels: keep_rows.iter().map(|&r| d.labels[r]).collect(),
        classes: d.classes,
        ids: keep_rows.iter().map(|&r| d.ids[r]).collect(),
    };
    (kept, removed)
}

/// Splits IDs into disjoint teacher and student pools via a seeded
/// permutation — or, in self-distillation mode, one shared pool.
pub fn split_teacher_student(
    d: &Dataset,
    n_t: usize,
    n_s: usize,
    seed: u64,
    self_distill: bool,
) -> Result<SplitSpec> {
    if n_t == 0 || n_s == 0 {
        return Err(Error::invalid_argument("pool sizes must be >= 1"));
    }
    if self_distill {
        if n_t != n_s {
            return Err(Error::invalid_argument(
                "self-distillation requires n_t == n_s",
            ));
        }
        if n_t > d.len() {
            return Err(Error::invalid_argument(format!(
                "need {n_t} examples, dataset has {}",
                d.len()
            )));
        }
    } else if n_t + n_s > d.len() {
        return Err(Error::invalid_argument(format!(
            "need {} examples, dataset has {}",
            n_t + n_s,
            d.len()
        )));
    }
    let mut perm = d.ids.clone();
    perm.shuffle(&mut rng_from_seed(seed));
    let teacher: Vec<usize> = perm[..n_t].to_vec();
    let student: Vec<usize> = if self_distill {
        teacher.clone()
    } else {
        perm[n_t..n_t + n_s].to_vec()
    };
    Ok(SplitSpec { teacher, student, seed, self_distill })
}

/// For each pool example independently, permutes the model indices and
/// marks the first `n_models / 2` as IN — exact balance per example.
pub fn sample_membership_plan(pool: &[usize], n_models: usize, seed: u64) -> Result<MembershipPlan> {
    if n_models < 2 {
        return Err(Error::invalid_argument("need at least 2 models"));
    }
    if pool.is_empty() {
        return Err(Error::invalid_argument("empty pool"));
    }
    let mut rng = rng_from_seed(seed);
    let n_pool = pool.len();
    let mut bits = vec![false; n_models * n_pool];
    let mut order: Vec<usize> = (0..n_models).collect();
    for p in 0..n_pool {
        order.shuffle(&mut rng);
        for &m in &order[..n_models / 2] {
            bits[m * n_pool + p] = true;
        }
    }
    Ok(MembershipPlan { pool: pool.to_vec(), n_models, seed, bits })
}

/// Appends one exact copy of each target's feature row to the dataset
/// (fresh ID, same label) and returns a split whose student pool includes
/// the copies.
pub fn inject_duplicates(
    split: &SplitSpec,
    targets: &[usize],
    d: &mut Dataset,
) -> Result<SplitSpec> {
    let teacher: HashSet<_> = split.teacher.iter().collect();
    if let Some(&bad) = targets.iter().find(|id| !teacher.contains(id)) {
        return Err(Error::invalid_argument(format!(
            "duplicate target {bad} is not in the teacher pool"
        )));
    }
    let mut out = split.clone();
    for &t in targets {
        let row = d.row_of(t)?;
        let feats = d.features.row(row).to_vec();
        let label = d.labels[row];
        let fresh = d.push_row(&feats, label);
        out.student.push(fresh);
    }
    Ok(out)
}

/// Appends `r` copies of the target's features, all labeled with one
/// seeded uniform draw from the wrong labels.
pub fn poison_label_flip(d: &Dataset, target: usize, replicas: usize, seed: u64) -> Result<Dataset> {
    let row = d.row_of(target)?;
    let mut out = d.clone();
    if replicas == 0 {
        return Ok(out);
    }
    let true_label = d.labels[row];
    let mut rng = rng_from_seed(seed);
    // Uniform over the C-1 labels other than the true one.
    let draw = rand::Rng::random_range(&mut rng, 0..d.classes - 1);
    let wrong = if draw >= true_label { draw + 1 } else { draw };
    let feats = d.features.row(row).to_vec();
    for _ in 0..replicas {
        out.push_row(&feats, wrong);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn mixture_spread_zero_collapses_to_centers() {
        let d = gen_synthetic_mixture(3, 5, 4, 0.0, 1).unwrap();
        for c in 0..3 {
            let first = d.features.row(c * 4).to_vec();
            let norm: f64 = first.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "center not unit norm: {norm}");
            for j in 1..4 {
                assert_eq!(d.features.row(c * 4 + j), &first[..]);
            }
        }
    }

    #[test]
    fn mixture_is_deterministic() {
        let a = gen_synthetic_mixture(10, 32, 400, 0.6, 7).unwrap();
        let b = gen_synthetic_mixture(10, 32, 400, 0.6, 7).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic_mixture(10, 32, 400, 0.6, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mixture_classes_are_separable_at_moderate_spread() {
        // Nearest-centroid (a linear rule) trained on one half must beat
        // chance clearly on the other half.
        let classes = 6;
        let d = gen_synthetic_mixture(classes, 16, 60, 0.6, 3).unwrap();
        let train: Vec<usize> = (0..d.len()).filter(|i| i % 2 == 0).collect();
        let test: Vec<usize> = (0..d.len()).filter(|i| i % 2 == 1).collect();
        let mut centroids = Matrix::zeros(classes, d.dim());
        let mut counts = vec![0usize; classes];
        for &i in &train {
            let y = d.labels[i];
            counts[y] += 1;
            for (acc, &v) in centroids.row_mut(y).iter_mut().zip(d.features.row(i)) {
                *acc += v;
            }
        }
        for c in 0..classes {
            for v in centroids.row_mut(c) {
                *v /= counts[c] as f64;
            }
        }
        let mut correct = 0;
        for &i in &test {
            let x = d.features.row(i);
            let best = (0..classes)
                .min_by(|&a, &b| {
                    let da: f64 = x.iter().zip(centroids.row(a)).map(|(u, v)| (u - v).powi(2)).sum();
                    let db: f64 = x.iter().zip(centroids.row(b)).map(|(u, v)| (u - v).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == d.labels[i] {
                correct += 1;
            }
        }
        let acc = correct as f64 / test.len() as f64;
        assert!(
            acc > 2.0 / classes as f64,
            "nearest-centroid accuracy {acc} is not clearly above chance"
        );
    }

    #[test]
    fn mixture_rejects_bad_arguments() {
        assert!(gen_synthetic_mixture(1, 4, 10, 0.5, 0).is_err());
        assert!(gen_synthetic_mixture(3, 0, 10, 0.5, 0).is_err());
        assert!(gen_synthetic_mixture(3, 4, 0, 0.5, 0).is_err());
        assert!(gen_synthetic_mixture(3, 4, 10, -0.1, 0).is_err());
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_roundtrip_small() {
        let f = write_csv("0,1.5,-2.25\n1,0.0,3.5\n");
        let d = load_csv_tabular(f.path(), 2).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.labels, vec![0, 1]);
        assert_eq!(d.features.row(0), &[1.5, -2.25]);
        assert_eq!(d.ids, vec![0, 1]);
    }

    #[test]
    fn csv_save_load_is_bitwise_lossless() {
        let d = gen_synthetic_mixture(3, 5, 7, 0.8, 99).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_csv_tabular(&d, f.path()).unwrap();
        let back = load_csv_tabular(f.path(), 3).unwrap();
        assert_eq!(back.labels, d.labels);
        assert_eq!(back.features.data(), d.features.data());
        // Saving the reloaded dataset reproduces the file byte for byte.
        let g = tempfile::NamedTempFile::new().unwrap();
        save_csv_tabular(&back, g.path()).unwrap();
        assert_eq!(
            std::fs::read(f.path()).unwrap(),
            std::fs::read(g.path()).unwrap()
        );
    }

    #[test]
    fn csv_reports_bad_row_number() {
        let f = write_csv("0,1.0,2.0\n1,oops,2.0\n");
        let err = load_csv_tabular(f.path(), 2).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_out_of_range_label() {
        let f = write_csv("0,1.0\n5,2.0\n");
        let err = load_csv_tabular(f.path(), 2).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)), "{err:?}");
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let f = write_csv("0,1.0,2.0\n1,3.0\n");
        let err = load_csv_tabular(f.path(), 2).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_row_order_does_not_change_multiset() {
        let f1 = write_csv("0,1.0,2.0\n1,3.0,4.0\n0,5.0,6.0\n");
        let f2 = write_csv("0,5.0,6.0\n0,1.0,2.0\n1,3.0,4.0\n");
        let a = load_csv_tabular(f1.path(), 2).unwrap();
        let b = load_csv_tabular(f2.path(), 2).unwrap();
        let key = |d: &Dataset| {
            let mut rows: Vec<(usize, Vec<u64>)> = (0..d.len())
                .map(|i| {
                    (
                        d.labels[i],
                        d.features.row(i).iter().map(|v| v.to_bits()).collect(),
                    )
                })
                .collect();
            rows.sort();
            rows
        };
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn dedup_no_duplicates_is_identity() {
        let d = gen_synthetic_mixture(3, 4, 5, 0.5, 2).unwrap();
        let (kept, removed) = dedup_exact(&d);
        assert_eq!(kept, d);
        assert!(removed.is_empty());
    }

    #[test]
    fn dedup_removes_exact_repeats_keeping_first() {
        let features = Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![1.0, 2.0],
            vec![1.0, 2.0],
        ]);
        let d = Dataset::new(features, vec![0, 1, 0, 1], 2).unwrap();
        let (kept, removed) = dedup_exact(&d);
        assert_eq!(kept.len(), 2);
        assert_eq!(removed, vec![2, 3]);
        assert_eq!(kept.ids, vec![0, 1]);
        // Idempotent.
        let (again, removed2) = dedup_exact(&kept);
        assert_eq!(again, kept);
        assert!(removed2.is_empty());
    }

    #[test]
    fn split_disjoint_and_exhaustive() {
        let d = gen_synthetic_mixture(2, 3, 50, 0.4, 5).unwrap();
        let s = split_teacher_student(&d, 60, 40, 9, false).unwrap();
        assert_eq!(s.teacher.len(), 60);
        assert_eq!(s.student.len(), 40);
        s.validate().unwrap();
        let mut all: Vec<usize> = s.teacher.iter().chain(&s.student).copied().collect();
        all.sort_unstable();
        let mut want: Vec<usize> = d.ids.clone();
        want.sort_unstable();
        assert_eq!(all, want);
    }

    #[test]
    fn split_self_distill_shares_pool() {
        let d = gen_synthetic_mixture(2, 3, 20, 0.4, 5).unwrap();
        let s = split_teacher_student(&d, 30, 30, 1, true).unwrap();
        assert_eq!(s.teacher, s.student);
        s.validate().unwrap();
        assert!(split_teacher_student(&d, 30, 20, 1, true).is_err());
    }

    #[test]
    fn split_rejects_oversized_request() {
        let d = gen_synthetic_mixture(2, 3, 10, 0.4, 5).unwrap();
        assert!(split_teacher_student(&d, 15, 10, 0, false).is_err());
    }

    #[test]
    fn membership_plan_is_balanced() {
        let pool: Vec<usize> = (0..37).collect();
        for n_models in [2, 5, 16] {
            let plan = sample_membership_plan(&pool, n_models, 3).unwrap();
            for p in 0..pool.len() {
                assert_eq!(plan.in_count(p), n_models / 2, "n_models={n_models} p={p}");
            }
        }
    }

    #[test]
    fn membership_plan_deterministic() {
        let pool: Vec<usize> = (10..50).collect();
        let a = sample_membership_plan(&pool, 8, 7).unwrap();
        let b = sample_membership_plan(&pool, 8, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_membership_plan(&pool, 8, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn membership_members_match_bits() {
        let pool = vec![100, 200, 300];
        let plan = sample_membership_plan(&pool, 4, 1).unwrap();
        for m in 0..4 {
            let members = plan.members_of(m);
            for (p, &id) in pool.iter().enumerate() {
                assert_eq!(members.contains(&id), plan.is_in(m, p));
            }
        }
    }

    #[test]
    fn inject_duplicates_appends_copies() {
        let mut d = gen_synthetic_mixture(2, 4, 20, 0.5, 11).unwrap();
        let split = split_teacher_student(&d, 20, 20, 2, false).unwrap();
        let targets: Vec<usize> = split.teacher[..5].to_vec();
        let before = d.len();
        let out = inject_duplicates(&split, &targets, &mut d).unwrap();
        assert_eq!(d.len(), before + 5);
        assert_eq!(out.student.len(), split.student.len() + 5);
        d.validate().unwrap();
        for (&t, &fresh) in targets.iter().zip(&out.student[split.student.len()..]) {
            let tr = d.row_of(t).unwrap();
            let fr = d.row_of(fresh).unwrap();
            assert_eq!(d.features.row(tr), d.features.row(fr));
            assert_eq!(d.labels[tr], d.labels[fr]);
        }
        // Empty target list leaves everything alone.
        let mut d2 = gen_synthetic_mixture(2, 4, 20, 0.5, 11).unwrap();
        let unchanged = inject_duplicates(&split, &[], &mut d2).unwrap();
        assert_eq!(unchanged, split);
        assert_eq!(d2.len(), before);
    }

    #[test]
    fn inject_duplicates_rejects_non_teacher_target() {
        let mut d = gen_synthetic_mixture(2, 4, 20, 0.5, 11).unwrap();
        let split = split_teacher_student(&d, 20, 20, 2, false).unwrap();
        let outsider = split.student[0];
        assert!(inject_duplicates(&split, &[outsider], &mut d).is_err());
    }

    #[test]
    fn poison_appends_consistent_wrong_labels() {
        let d = gen_synthetic_mixture(4, 3, 10, 0.5, 6).unwrap();
        let target = d.ids[13];
        let true_label = d.labels[13];

        let unchanged = poison_label_flip(&d, target, 0, 9).unwrap();
        assert_eq!(unchanged, d);

        let poisoned = poison_label_flip(&d, target, 4, 9).unwrap();
        assert_eq!(poisoned.len(), d.len() + 4);
        poisoned.validate().unwrap();
        let new_labels = &poisoned.labels[d.len()..];
        assert!(new_labels.iter().all(|&y| y == new_labels[0]));
        assert_ne!(new_labels[0], true_label);
        for row in d.len()..poisoned.len() {
            assert_eq!(poisoned.features.row(row), d.features.row(13));
        }

        // Deterministic in the seed.
        let again = poison_label_flip(&d, target, 4, 9).unwrap();
        assert_eq!(again, poisoned);
    }

    #[test]
    fn poison_rejects_unknown_target() {
        let d = gen_synthetic_mixture(2, 3, 5, 0.5, 6).unwrap();
        assert!(poison_label_flip(&d, 999, 2, 0).is_err());
    }
}
