//! Shadow-model populations: plan a batch of training runs, execute them
//! across worker threads, and collect every model's logits on a probe
//! set into a compact on-disk store.
//!
//! Execution is embarrassingly parallel: each model is trained from its
//! own seed, and results merge by model index, so the store is bitwise
//! identical for any worker count.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MembershipPlan, SplitSpec};
use crate::distill::{
    make_query_dataset, run_pipeline, train_student, train_teacher, DistillMode, PipelineConfig,
};
use crate::error::{Error, Result};
use crate::nn::{ModelParams, TrainConfig};
use crate::seed::{derive_seed, streams};

/// Calibration population size used by the paper-scale profile.
pub const DEFAULT_CALIBRATION_MODELS: usize = 100;

/// Shadow count the paper's student-query attack was run with. Kept as
/// documentation of the full-scale profile; desk-scale runs use far
/// fewer.
pub const STUDENT_QUERY_PAPER_MODELS: usize = 4000;

/// What a batch of shadow models is for. The tag names the model whose
/// logits get recorded and how it is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackFamily {
    /// Teachers trained on membership subsets, probed directly.
    TeacherOnly,
    /// Teacher shadows used to calibrate an attack on student targets.
    Transfer,
    /// Full distillation pipelines; the distilled student is probed.
    EndToEnd,
    /// Teacher shadows probed on the student query set, for the
    /// indirect student-query attack.
    StudentQuery,
    /// Student shadows distilled from a fixed teacher under a declared
    /// knowledge level; membership varies in the student pool.
    PrivateStudent,
    /// Self-distillation pipelines on one shared pool.
    SelfDistill,
    /// Uncalibrated logit-threshold scores; never a shadow population.
    Baseline,
}

impl AttackFamily {
    /// On-disk tag. `Baseline` has no stored form.
    pub fn tag(self) -> Option<u8> {
        match self {
            AttackFamily::TeacherOnly => Some(0),
            AttackFamily::EndToEnd => Some(1),
            AttackFamily::Transfer => Some(2),
            AttackFamily::PrivateStudent => Some(3),
            AttackFamily::SelfDistill => Some(4),
            AttackFamily::StudentQuery => Some(5),
            AttackFamily::Baseline => None,
        }
    }

    pub fn from_tag(tag: u8) -> Option<AttackFamily> {
        match tag {
            0 => Some(AttackFamily::TeacherOnly),
            1 => Some(AttackFamily::EndToEnd),
            2 => Some(AttackFamily::Transfer),
            3 => Some(AttackFamily::PrivateStudent),
            4 => Some(AttackFamily::SelfDistill),
            5 => Some(AttackFamily::StudentQuery),
            _ => None,
        }
    }
}

/// What the attacker knows about the teacher behind a private student.
#[derive(Debug, Clone)]
pub enum TeacherKnowledge {
    /// The exact teacher is available.
    Known { teacher: ModelParams },
    /// The teacher is one of a small candidate set; shadow students are
    /// distilled from the candidates round-robin.
    Candidates { teachers: Vec<ModelParams> },
    /// No access to the teacher or its data: surrogate teachers trained
    /// on held-out data stand in, round-robin.
    Surrogate { teachers: Vec<ModelParams> },
}

impl TeacherKnowledge {
    fn teacher_for(&self, model_index: usize) -> &ModelParams {
        match self {
            TeacherKnowledge::Known { teacher } => teacher,
            TeacherKnowledge::Candidates { teachers } | TeacherKnowledge::Surrogate { teachers } => {
                &teachers[model_index % teachers.len()]
            }
        }
    }

    fn teachers(&self) -> &[ModelParams] {
        match self {
            TeacherKnowledge::Known { teacher } => std::slice::from_ref(teacher),
            TeacherKnowledge::Candidates { teachers } | TeacherKnowledge::Surrogate { teachers } => teachers,
        }
    }
}

/// A fully planned batch of shadow runs.
#[derive(Debug, Clone)]
pub struct ShadowRunSpec {
    pub family: AttackFamily,
    /// Membership of the audited pool across models.
    pub plan: MembershipPlan,
    /// Examples whose logits are recorded, in store column order.
    pub probe_ids: Vec<usize>,
    /// One seed per model, derived from the master seed.
    pub seeds: Vec<u64>,
    /// Architecture and training settings shared by every run.
    pub pipeline: PipelineConfig,
    /// IDs force-included in every model's teacher training set (poison
    /// replicas); empty otherwise.
    pub always_in: Vec<usize>,
    /// Required for the private-student family, absent otherwise.
    pub teacher_knowledge: Option<TeacherKnowledge>,
}

impl ShadowRunSpec {
    pub fn n_models(&self) -> usize {
        self.plan.n_models
    }

    pub fn validate(&self) -> Result<()> {
        if self.probe_ids.is_empty() {
            return Err(Error::invalid_argument("empty probe set"));
        }
        if self.seeds.len() != self.plan.n_models {
            return Err(Error::invalid_argument(format!(
                "{} seeds for {} models",
                self.seeds.len(),
                self.plan.n_models
            )));
        }
        match (self.family, &self.teacher_knowledge) {
            (AttackFamily::Baseline, _) => {
                return Err(Error::invalid_argument("baseline is not a shadow family"));
            }
            (AttackFamily::PrivateStudent, None) => {
                return Err(Error::invalid_argument(
                    "private-student runs need a teacher-knowledge setting",
                ));
            }
            (AttackFamily::PrivateStudent, Some(k)) => {
                if k.teachers().is_empty() {
                    return Err(Error::invalid_argument("empty teacher candidate set"));
                }
            }
            (_, Some(_)) => {
                return Err(Error::invalid_argument(
                    "teacher knowledge only applies to the private-student family",
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Derives per-model seeds and bundles the batch description. `counts`
/// beyond the plan's own are implied by it; the plan must hold at least
/// two models.
pub fn plan_runs(
    family: AttackFamily,
    plan: MembershipPlan,
    probe_ids: Vec<usize>,
    pipeline: PipelineConfig,
    master_seed: u64,
) -> Result<ShadowRunSpec> {
    if plan.n_models < 2 {
        return Err(Error::invalid_argument("need at least 2 models"));
    }
    let seeds = (0..plan.n_models)
        .map(|m| derive_seed(master_seed, streams::SHADOW_RUN + m as u64))
        .collect();
    let spec = ShadowRunSpec {
        family,
        plan,
        probe_ids,
        seeds,
        pipeline,
        always_in: Vec::new(),
        teacher_knowledge: None,
    };
    if spec.family == AttackFamily::PrivateStudent {
        // Knowledge is attached by the caller; defer full validation.
        Ok(spec)
    } else {
        spec.validate()?;
        Ok(spec)
    }
}

/// Logits of `n_models` models on `n_probe` examples over `n_classes`
/// classes, plus a membership bit per (model, probe position).
///
/// This is exactly the persisted content: probe IDs, seeds, and
/// temperatures live in the [`ShadowRunSpec`] that produced the store.
/// Membership bits are set only for probe examples that belong to the
/// audited pool; probes outside it (e.g. student queries under a
/// teacher-pool plan) read as all-OUT.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitStore {
    n_models: usize,
    n_probe: usize,
    n_classes: usize,
    family: AttackFamily,
    /// Model-major: entry `m * n_probe + p`.
    membership: Vec<bool>,
    /// Index order (model, probe, class).
    logits: Vec<f32>,
}

impl LogitStore {
    pub fn new(
        n_models: usize,
        n_probe: usize,
        n_classes: usize,
        family: AttackFamily,
        membership: Vec<bool>,
        logits: Vec<f32>,
    ) -> Result<Self> {
        if family.tag().is_none() {
            return Err(Error::invalid_argument("baseline has no stored form"));
        }
        if n_models == 0 || n_probe == 0 || n_classes == 0 {
            return Err(Error::invalid_argument("empty store dimension"));
        }
        if membership.len() != n_models * n_probe {
            return Err(Error::invalid_argument("membership length mismatch"));
        }
        if logits.len() != n_models * n_probe * n_classes {
            return Err(Error::invalid_argument("logit length mismatch"));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite logit".into()));
        }
        Ok(LogitStore { n_models, n_probe, n_classes, family, membership, logits })
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn n_probe(&self) -> usize {
        self.n_probe
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn family(&self) -> AttackFamily {
        self.family
    }

    pub fn logit(&self, model: usize, probe: usize, class: usize) -> f32 {
        self.logits[(model * self.n_probe + probe) * self.n_classes + class]
    }

    pub fn is_in(&self, model: usize, probe: usize) -> bool {
        self.membership[model * self.n_probe + probe]
    }

    /// Correct-class logits at probe position `p`, split into (IN, OUT)
    /// by the membership bits.
    pub fn split_column(&self, probe: usize, class: usize) -> (Vec<f64>, Vec<f64>) {
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for m in 0..self.n_models {
            let v = self.logit(m, probe, class) as f64;
            if self.is_in(m, probe) {
                ins.push(v);
            } else {
                outs.push(v);
            }
        }
        (ins, outs)
    }

    /// New store restricted to the given probe columns, in the given
    /// order, under a new family tag.
    pub fn select_probes(&self, positions: &[usize], family: AttackFamily) -> Result<LogitStore> {
        if let Some(&bad) = positions.iter().find(|&&p| p >= self.n_probe) {
            return Err(Error::invalid_argument(format!(
                "probe position {bad} out of range ({} columns)",
                self.n_probe
            )));
        }
        let mut membership = Vec::with_capacity(self.n_models * positions.len());
        let mut logits = Vec::with_capacity(self.n_models * positions.len() * self.n_classes);
        for m in 0..self.n_models {
            for &p in positions {
                membership.push(self.is_in(m, p));
            }
        }
        for m in 0..self.n_models {
            for &p in positions {
                let base = (m * self.n_probe + p) * self.n_classes;
                logits.extend_from_slice(&self.logits[base..base + self.n_classes]);
            }
        }
        LogitStore::new(self.n_models, positions.len(), self.n_classes, family, membership, logits)
    }
}

/// Trains every planned model and collects probe logits. Results are
/// identical for any `workers >= 1`; each failing run is retried once
/// before the whole batch aborts.
pub fn execute_runs(
    d: &Dataset,
    split: &SplitSpec,
    spec: &ShadowRunSpec,
    workers: usize,
) -> Result<LogitStore> {
    if workers < 1 {
        return Err(Error::invalid_argument("need at least 1 worker"));
    }
    spec.validate()?;
    split.validate()?;
    let index = d.index();
    let probe_rows: Vec<usize> = spec
        .probe_ids
        .iter()
        .map(|&id| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::invalid_argument(format!("probe ID {id} not in dataset")))
        })
        .collect::<Result<_>>()?;

    let n = spec.n_models();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid_argument(format!("thread pool: {e}")))?;
    let blocks: Vec<Vec<f32>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|m| {
                run_one(d, split, spec, &index, &probe_rows, m)
                    .or_else(|_| run_one(d, split, spec, &index, &probe_rows, m))
                    .map_err(|e| Error::RunFailed { index: m, msg: e.to_string() })
            })
            .collect::<Result<_>>()
    })?;

    let n_probe = spec.probe_ids.len();
    let mut membership = Vec::with_capacity(n * n_probe);
    for m in 0..n {
        for &id in &spec.probe_ids {
            let bit = spec.plan.pool_pos(id).is_some_and(|j| spec.plan.is_in(m, j));
            membership.push(bit);
        }
    }
    let mut logits = Vec::with_capacity(n * n_probe * d.classes);
    for block in blocks {
        logits.extend_from_slice(&block);
    }
    LogitStore::new(n, n_probe, d.classes, spec.family, membership, logits)
}

/// Trains model `m` per its family and returns its probe-logit block.
fn run_one(
    d: &Dataset,
    split: &SplitSpec,
    spec: &ShadowRunSpec,
    index: &HashMap<usize, usize>,
    probe_rows: &[usize],
    m: usize,
) -> Result<Vec<f32>> {
    let seed = spec.seeds[m];
    let mut members = spec.plan.members_of(m);
    members.extend_from_slice(&spec.always_in);
    let cfg = PipelineConfig { seed, ..spec.pipeline.clone() };

    let model = match spec.family {
        AttackFamily::TeacherOnly | AttackFamily::Transfer | AttackFamily::StudentQuery => {
            let rows: Vec<usize> = members
                .iter()
                .map(|&id| {
                    index
                        .get(&id)
                        .copied()
                        .ok_or_else(|| Error::invalid_argument(format!("member ID {id} not in dataset")))
                })
                .collect::<Result<_>>()?;
            let features = d.features.gather_rows(&rows);
            let labels: Vec<usize> = rows.iter().map(|&r| d.labels[r]).collect();
            let teacher_cfg = TrainConfig { seed, ..cfg.teacher };
            train_teacher(&features, &labels, cfg.hidden, d.classes, &teacher_cfg)?
        }
        AttackFamily::EndToEnd => run_pipeline(d, split, &members, &cfg)?.student,
        AttackFamily::SelfDistill => {
            if !matches!(cfg.mode, DistillMode::SelfDistill { .. }) {
                return Err(Error::invalid_argument(
                    "self-distill family needs a self-distill pipeline mode",
                ));
            }
            run_pipeline(d, split, &members, &cfg)?.student
        }
        AttackFamily::PrivateStudent => {
            let knowledge = spec
                .teacher_knowledge
                .as_ref()
                .expect("validated: private-student carries knowledge");
            let teacher = knowledge.teacher_for(m);
            let rows: Vec<usize> = members
                .iter()
                .map(|&id| {
                    index
                        .get(&id)
                        .copied()
                        .ok_or_else(|| Error::invalid_argument(format!("member ID {id} not in dataset")))
                })
                .collect::<Result<_>>()?;
            let features = d.features.gather_rows(&rows);
            let query = make_query_dataset(teacher, &features, cfg.student.temperature)?;
            let student_cfg = TrainConfig { seed, ..cfg.student };
            train_student(&query, cfg.hidden, &student_cfg)?
        }
        AttackFamily::Baseline => unreachable!("rejected by validate"),
    };

    let mut block = Vec::with_capacity(probe_rows.len() * d.classes);
    let mut hidden = vec![0.0; model.hidden];
    let mut logits = vec![0.0; model.classes];
    for &row in probe_rows {
        model.forward_into(d.features.row(row), &mut hidden, &mut logits);
        for &z in &logits {
            let z32 = z as f32;
            if !z32.is_finite() {
                return Err(Error::InvalidData(format!("non-finite probe logit {z}")));
            }
            block.push(z32);
        }
    }
    Ok(block)
}

const MAGIC: &[u8; 4] = b"MILS";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 * 3 + 1;

/// Serializes the store: magic `MILS`, version, dims, family tag, the
/// membership bit matrix (rows padded to byte boundaries, bits LSB
/// first), then logits as little-endian binary32 in (model, probe,
/// class) order.
pub fn write_store(s: &LogitStore, path: &Path) -> Result<()> {
    let row_bytes = s.n_probe.div_ceil(8);
    let mut buf =
        Vec::with_capacity(HEADER_LEN + s.n_models * row_bytes + s.logits.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(s.n_models as u64).to_le_bytes());
    buf.extend_from_slice(&(s.n_probe as u64).to_le_bytes());
    buf.extend_from_slice(&(s.n_classes as u64).to_le_bytes());
    buf.push(s.family.tag().expect("stores never hold the baseline family"));
    for m in 0..s.n_models {
        let mut row = vec![0u8; row_bytes];
        for p in 0..s.n_probe {
            if s.membership[m * s.n_probe + p] {
                row[p / 8] |= 1 << (p % 8);
            }
        }
        buf.extend_from_slice(&row);
    }
    for v in &s.logits {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads a store written by [`write_store`], verifying magic, version,
/// and exact length.
pub fn read_store(path: &Path) -> Result<LogitStore> {
    let buf = fs::read(path)?;
    let fail = |offset: usize, msg: String| Error::Format { offset: offset as u64, msg };
    if buf.len() < HEADER_LEN {
        return Err(fail(buf.len(), "truncated header".into()));
    }
    if &buf[0..4] != MAGIC {
        return Err(fail(0, format!("bad magic {:?}", &buf[0..4])));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().expect("fixed slice"));
    if version != VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    let dim = |at: usize| -> Result<usize> {
        let v = u64::from_le_bytes(buf[at..at + 8].try_into().expect("fixed slice"));
        usize::try_from(v).map_err(|_| fail(at, format!("dimension {v} too large")))
    };
    let n_models = dim(8)?;
    let n_probe = dim(16)?;
    let n_classes = dim(24)?;
    if n_models == 0 || n_probe == 0 || n_classes == 0 {
        return Err(fail(8, "zero dimension".into()));
    }
    let family = AttackFamily::from_tag(buf[32])
        .ok_or_else(|| fail(32, format!("unknown family tag {}", buf[32])))?;
    let row_bytes = n_probe.div_ceil(8);
    let bits_len = n_models
        .checked_mul(row_bytes)
        .ok_or_else(|| fail(8, "bit matrix size overflows".into()))?;
    let logit_count = n_models
        .checked_mul(n_probe)
        .and_then(|x| x.checked_mul(n_classes))
        .ok_or_else(|| fail(8, "logit tensor size overflows".into()))?;
    let expected = HEADER_LEN + bits_len + logit_count * 4;
    if buf.len() != expected {
        return Err(fail(
            buf.len().min(expected),
            format!("file is {} bytes, expected {expected}", buf.len()),
        ));
    }
    let mut membership = Vec::with_capacity(n_models * n_probe);
    for m in 0..n_models {
        let row = &buf[HEADER_LEN + m * row_bytes..HEADER_LEN + (m + 1) * row_bytes];
        for p in 0..n_probe {
            membership.push(row[p / 8] >> (p % 8) & 1 == 1);
        }
    }
    let mut logits = Vec::with_capacity(logit_count);
    let base = HEADER_LEN + bits_len;
    for i in 0..logit_count {
        let at = base + i * 4;
        let v = f32::from_le_bytes(buf[at..at + 4].try_into().expect("fixed slice"));
        if !v.is_finite() {
            return Err(fail(at, format!("non-finite logit {v}")));
        }
        logits.push(v);
    }
    LogitStore::new(n_models, n_probe, n_classes, family, membership, logits)
}
