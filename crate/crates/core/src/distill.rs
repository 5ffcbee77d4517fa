//! The distillation pipeline: train a teacher on hard labels, query it
//! at temperature `H` to build a soft-labeled query dataset, then train
//! a student on those soft targets. Self-distillation reuses one pool
//! for both models and blends soft and hard losses.
//!
//! A pipeline consumes exactly one seed: the teacher trains with it and
//! the student with a fixed offset of it, so a shadow run is fully
//! described by (data, member IDs, config, seed).

use crate::data::{Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::nn::{
    init_model, sgd_train, softmax_temperature_into, ModelParams, Targets, TrainConfig,
};
use crate::seed::{derive_seed, streams, STUDENT_SEED_OFFSET};

/// The student-side training set: features plus the teacher's raw logits
/// and their temperature-scaled softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryDataset {
    pub features: Matrix,
    /// `softmax(raw_logits / temperature)`, row per example.
    pub soft_targets: Matrix,
    /// Teacher logits before any scaling, row per example.
    pub raw_logits: Matrix,
    pub temperature: f64,
}

impl QueryDataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks that the stored soft targets match the stored raw logits.
    pub fn validate(&self) -> Result<()> {
        if self.features.rows() != self.soft_targets.rows()
            || self.features.rows() != self.raw_logits.rows()
            || self.soft_targets.cols() != self.raw_logits.cols()
        {
            return Err(Error::InvalidData("query dataset shapes disagree".into()));
        }
        let mut probs = vec![0.0; self.raw_logits.cols()];
        for i in 0..self.raw_logits.rows() {
            softmax_temperature_into(self.raw_logits.row(i), self.temperature, &mut probs);
            let stored = self.soft_targets.row(i);
            if probs.iter().zip(stored).any(|(a, b)| (a - b).abs() > 1e-12) {
                return Err(Error::InvalidData(format!(
                    "soft target row {i} does not match its raw logits"
                )));
            }
        }
        Ok(())
    }
}

/// How the student is trained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistillMode {
    /// Teacher pool and student pool are disjoint; the student sees only
    /// soft targets.
    Standard,
    /// One shared pool; the student loss is
    /// `alpha * soft + (1 - alpha) * hard`.
    SelfDistill { alpha: f64 },
}

/// Everything `run_pipeline` needs beyond the data.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Hidden-layer width shared by teacher and student.
    pub hidden: usize,
    /// Master seed for the pipeline; the teacher uses it directly and
    /// the student uses a fixed offset of it.
    pub seed: u64,
    pub teacher: TrainConfig,
    pub student: TrainConfig,
    pub mode: DistillMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            hidden: 32,
            seed: 0,
            teacher: TrainConfig::default(),
            student: TrainConfig::default(),
            mode: DistillMode::Standard,
        }
    }
}

/// A finished pipeline: both models, the query set, and the exact
/// configs (seeds included) that produced them.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub teacher: ModelParams,
    pub query: QueryDataset,
    pub student: ModelParams,
    pub teacher_cfg: TrainConfig,
    pub student_cfg: TrainConfig,
}

/// Trains a fresh model on hard labels. The parameter init draws from a
/// stream derived from `cfg.seed`, so one seed fixes the whole run.
pub fn train_teacher(
    features: &Matrix,
    labels: &[usize],
    hidden: usize,
    classes: usize,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    let init = init_model(features.cols(), hidden, classes, derive_seed(cfg.seed, streams::MODEL))?;
    sgd_train(&init, features, &Targets::Hard(labels), cfg)
}

/// Queries the teacher on every row and records both raw logits and
/// their temperature-`h` softmax.
pub fn make_query_dataset(teacher: &ModelParams, features: &Matrix, h: f64) -> Result<QueryDataset> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid_argument("temperature must be > 0"));
    }
    if features.cols() != teacher.input_dim {
        return Err(Error::invalid_argument(format!(
            "features are {} wide, teacher expects {}",
            features.cols(),
            teacher.input_dim
        )));
    }
    let n = features.rows();
    let mut raw = Matrix::zeros(n, teacher.classes);
    let mut soft = Matrix::zeros(n, teacher.classes);
    let mut hidden_buf = vec![0.0; teacher.hidden];
    for i in 0..n {
        let x = features.row(i);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument(format!(
                "feature row {i} has a non-finite entry"
            )));
        }
        teacher.forward_into(x, &mut hidden_buf, raw.row_mut(i));
        let (logits, probs) = (raw.row(i).to_vec(), soft.row_mut(i));
        softmax_temperature_into(&logits, h, probs);
    }
    Ok(QueryDataset { features: features.clone(), soft_targets: soft, raw_logits: raw, temperature: h })
}

/// Trains a fresh student on the query set's soft targets, at the query
/// set's temperature (the `cfg.temperature` field is overridden).
pub fn train_student(q: &QueryDataset, hidden: usize, cfg: &TrainConfig) -> Result<ModelParams> {
    if q.is_empty() {
        return Err(Error::invalid_argument("empty query dataset"));
    }
    let cfg = TrainConfig { temperature: q.temperature, ..cfg.clone() };
    let classes = q.soft_targets.cols();
    let init = init_model(q.features.cols(), hidden, classes, derive_seed(cfg.seed, streams::MODEL))?;
    sgd_train(&init, &q.features, &Targets::Soft(&q.soft_targets), &cfg)
}

/// Runs one full pipeline.
///
/// `members` are the IDs the teacher trains on: a subset of the teacher
/// pool in standard mode, or of the shared pool in self-distillation. In
/// standard mode the query set covers the whole student pool; in
/// self-distillation it covers exactly the member examples, and the
/// student loss blends soft targets with the members' original labels.
pub fn run_pipeline(
    d: &Dataset,
    split: &SplitSpec,
    members: &[usize],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    split.validate()?;
    if members.is_empty() {
        return Err(Error::invalid_argument("empty teacher membership"));
    }
    match cfg.mode {
        DistillMode::Standard if split.self_distill => {
            return Err(Error::invalid_argument(
                "standard pipeline on a self-distillation split",
            ));
        }
        DistillMode::SelfDistill { .. } if !split.self_distill => {
            return Err(Error::invalid_argument(
                "self-distillation pipeline on a disjoint split",
            ));
        }
        _ => {}
    }
    let pool: std::collections::HashSet<usize> = split.teacher.iter().copied().collect();
    if let Some(&bad) = members.iter().find(|id| !pool.contains(id)) {
        return Err(Error::invalid_argument(format!(
            "member {bad} is not in the teacher pool"
        )));
    }
    let index = d.index();
    let row_of = |id: usize| -> Result<usize> {
        index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::invalid_argument(format!("no example with ID {id}")))
    };

    let member_rows: Vec<usize> = members.iter().map(|&id| row_of(id)).collect::<Result<_>>()?;
    let t_features = d.features.gather_rows(&member_rows);
    let t_labels: Vec<usize> = member_rows.iter().map(|&r| d.labels[r]).collect();

    let teacher_cfg = TrainConfig { seed: cfg.seed, ..cfg.teacher.clone() };
    let teacher = train_teacher(&t_features, &t_labels, cfg.hidden, d.classes, &teacher_cfg)?;

    let student_seed = cfg.seed.wrapping_add(STUDENT_SEED_OFFSET);
    match cfg.mode {
        DistillMode::Standard => {
            let student_rows: Vec<usize> =
                split.student.iter().map(|&id| row_of(id)).collect::<Result<_>>()?;
            let s_features = d.features.gather_rows(&student_rows);
            let query = make_query_dataset(&teacher, &s_features, cfg.student.temperature)?;
            let student_cfg = TrainConfig { seed: student_seed, ..cfg.student.clone() };
            let student = train_student(&query, cfg.hidden, &student_cfg)?;
            Ok(PipelineOutput { teacher, query, student, teacher_cfg, student_cfg })
        }
        DistillMode::SelfDistill { alpha } => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::invalid_argument("alpha must be in [0, 1]"));
            }
            let query = make_query_dataset(&teacher, &t_features, cfg.student.temperature)?;
            let student_cfg = TrainConfig {
                seed: student_seed,
                alpha,
                temperature: query.temperature,
                ..cfg.student.clone()
            };
            let init = init_model(
                query.features.cols(),
                cfg.hidden,
                d.classes,
                derive_seed(student_cfg.seed, streams::MODEL),
            )?;
            let targets = Targets::Mixed { soft: &query.soft_targets, hard: &t_labels };
            let student = sgd_train(&init, &query.features, &targets, &student_cfg)?;
            Ok(PipelineOutput { teacher, query, student, teacher_cfg, student_cfg })
        }
    }
}
