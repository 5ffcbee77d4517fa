//! Likelihood-ratio membership scoring.
//!
//! Calibration fits, per example, one Gaussian to the correct-class
//! logits of shadow models that trained on it and one to those that did
//! not; the membership score of an observed logit is the difference of
//! log-densities. The same machinery serves the direct attack on
//! teachers, the transfer and end-to-end attacks on students, and the
//! indirect student-query attack that never queries the audited model
//! on the examples in question.

use serde::{Deserialize, Serialize};

use crate::data::MembershipPlan;
use crate::distill::QueryDataset;
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::shadow::{AttackFamily, LogitStore};

/// Default variance floor: keeps degenerate calibration columns from
/// producing infinite densities.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;

/// Default number of student queries kept by the mean-gap filter.
pub const DEFAULT_QUERY_FILTER_K: usize = 10;

/// IN/OUT Gaussians fitted to one example's calibration logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPair {
    pub mu_in: f64,
    pub sigma_in: f64,
    pub mu_out: f64,
    pub sigma_out: f64,
    pub n_in: usize,
    pub n_out: usize,
}

impl GaussianPair {
    /// Absolute distance between the IN and OUT means.
    pub fn mean_gap(&self) -> f64 {
        (self.mu_in - self.mu_out).abs()
    }
}

/// One membership score for one example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    /// Example ID the score is about.
    pub id: usize,
    /// Log likelihood ratio in nats; higher means more IN-like.
    pub score: f64,
    /// Ground-truth membership, when the evaluation harness knows it.
    pub is_in: Option<bool>,
    pub family: AttackFamily,
}

/// Scoring knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiraOptions {
    /// Lower bound applied to fitted variances. Zero disables the floor
    /// (then degenerate columns are an error).
    pub variance_floor: f64,
    /// Replace per-example variances with the count-weighted average
    /// across examples — steadier at low shadow counts.
    pub global_variance: bool,
}

impl Default for LiraOptions {
    fn default() -> Self {
        LiraOptions { variance_floor: DEFAULT_VARIANCE_FLOOR, global_variance: false }
    }
}

/// Which class's logit the student-query attack reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    /// The audited teacher example's own label — the paper's refinement.
    TeacherLabel,
    /// Each query's student-side label, for the ablation.
    StudentLabel,
}

fn mean_and_var(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Fits sample means and population (MLE) variances, flooring the
/// variances at `floor`.
pub fn fit_gaussian_pair_with(
    in_samples: &[f64],
    out_samples: &[f64],
    floor: f64,
) -> Result<GaussianPair> {
    if in_samples.len() < 2 || out_samples.len() < 2 {
        return Err(Error::insufficient_data(format!(
            "need >= 2 samples per side, got {} IN and {} OUT",
            in_samples.len(),
            out_samples.len()
        )));
    }
    let (mu_in, var_in) = mean_and_var(in_samples);
    let (mu_out, var_out) = mean_and_var(out_samples);
    let var_in = var_in.max(floor);
    let var_out = var_out.max(floor);
    if var_in == 0.0 || var_out == 0.0 {
        return Err(Error::insufficient_data(
            "zero variance with the floor disabled",
        ));
    }
    Ok(GaussianPair {
        mu_in,
        sigma_in: var_in.sqrt(),
        mu_out,
        sigma_out: var_out.sqrt(),
        n_in: in_samples.len(),
        n_out: out_samples.len(),
    })
}

/// [`fit_gaussian_pair_with`] at the default floor.
pub fn fit_gaussian_pair(in_samples: &[f64], out_samples: &[f64]) -> Result<GaussianPair> {
    fit_gaussian_pair_with(in_samples, out_samples, DEFAULT_VARIANCE_FLOOR)
}

/// `log N(obs; mu_in, sigma_in^2) - log N(obs; mu_out, sigma_out^2)`.
pub fn log_lr(g: &GaussianPair, obs: f64) -> f64 {
    let zi = (obs - g.mu_in) / g.sigma_in;
    let zo = (obs - g.mu_out) / g.sigma_out;
    (g.sigma_out / g.sigma_in).ln() + 0.5 * (zo * zo - zi * zi)
}

/// Fits one [`GaussianPair`] per probe column of a calibration store,
/// reading each example's correct-class logit. With `global_variance`
/// set, per-example variances are replaced by their count-weighted
/// averages before flooring.
pub fn calibrated_pairs(
    calib: &LogitStore,
    labels: &[usize],
    opts: &LiraOptions,
) -> Result<Vec<GaussianPair>> {
    if labels.len() != calib.n_probe() {
        return Err(Error::invalid_argument(format!(
            "{} labels for {} probe columns",
            labels.len(),
            calib.n_probe()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= calib.n_classes()) {
        return Err(Error::invalid_argument(format!(
            "label {bad} out of range for {} classes",
            calib.n_classes()
        )));
    }
    let mut raw = Vec::with_capacity(calib.n_probe());
    for p in 0..calib.n_probe() {
        let (ins, outs) = calib.split_column(p, labels[p]);
        if ins.len() < 2 || outs.len() < 2 {
            return Err(Error::insufficient_data(format!(
                "probe column {p}: {} IN and {} OUT calibration models (need >= 2 each)",
                ins.len(),
                outs.len()
            )));
        }
        let (mu_in, var_in) = mean_and_var(&ins);
        let (mu_out, var_out) = mean_and_var(&outs);
        raw.push((mu_in, var_in, ins.len(), mu_out, var_out, outs.len()));
    }
    let (shared_in, shared_out) = if opts.global_variance {
        let tot_in: usize = raw.iter().map(|r| r.2).sum();
        let tot_out: usize = raw.iter().map(|r| r.5).sum();
        let pooled_in = raw.iter().map(|r| r.1 * r.2 as f64).sum::<f64>() / tot_in as f64;
        let pooled_out = raw.iter().map(|r| r.4 * r.5 as f64).sum::<f64>() / tot_out as f64;
        (Some(pooled_in), Some(pooled_out))
    } else {
        (None, None)
    };
    raw.into_iter()
        .map(|(mu_in, var_in, n_in, mu_out, var_out, n_out)| {
            let vi = shared_in.unwrap_or(var_in).max(opts.variance_floor);
            let vo = shared_out.unwrap_or(var_out).max(opts.variance_floor);
            if vi == 0.0 || vo == 0.0 {
                return Err(Error::insufficient_data(
                    "zero variance with the floor disabled",
                ));
            }
            Ok(GaussianPair {
                mu_in,
                sigma_in: vi.sqrt(),
                mu_out,
                sigma_out: vo.sqrt(),
                n_in,
                n_out,
            })
        })
        .collect()
}

/// The direct attack: calibrate on one store, score every model of
/// another on the same probe set. Records carry the evaluation store's
/// membership bits as ground truth.
pub fn direct_lira(
    calib: &LogitStore,
    eval: &LogitStore,
    probe_ids: &[usize],
    labels: &[usize],
    opts: &LiraOptions,
    family: AttackFamily,
) -> Result<Vec<ScoreRecord>> {
    if calib.n_probe() != eval.n_probe() || calib.n_classes() != eval.n_classes() {
        return Err(Error::invalid_argument(
            "calibration and evaluation stores have different probe shapes",
        ));
    }
    if probe_ids.len() != calib.n_probe() {
        return Err(Error::invalid_argument(format!(
            "{} probe IDs for {} probe columns",
            probe_ids.len(),
            calib.n_probe()
        )));
    }
    let pairs = calibrated_pairs(calib, labels, opts).map_err(|e| match e {
        // Name the example, not just the column.
        Error::InsufficientData(msg) => {
            Error::insufficient_data(rewrite_column_to_id(&msg, probe_ids))
        }
        other => other,
    })?;
    let mut records = Vec::with_capacity(eval.n_models() * eval.n_probe());
    for m in 0..eval.n_models() {
        for p in 0..eval.n_probe() {
            let obs = eval.logit(m, p, labels[p]) as f64;
            records.push(ScoreRecord {
                id: probe_ids[p],
                score: log_lr(&pairs[p], obs),
                is_in: Some(eval.is_in(m, p)),
                family,
            });
        }
    }
    Ok(records)
}

fn rewrite_column_to_id(msg: &str, probe_ids: &[usize]) -> String {
    // Messages from `calibrated_pairs` start with "probe column {p}:".
    if let Some(rest) = msg.strip_prefix("probe column ") {
        if let Some((num, tail)) = rest.split_once(':') {
            if let Ok(p) = num.trim().parse::<usize>() {
                if let Some(&id) = probe_ids.get(p) {
                    return format!("example {id}:{tail}");
                }
            }
        }
    }
    msg.to_string()
}

/// Indices of the `k` largest mean gaps, ties broken toward the lower
/// index; returned ascending. Fewer than `k` pairs returns all of them.
pub fn mean_gap_filter(pairs: &[GaussianPair], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| {
        pairs[b]
            .mean_gap()
            .partial_cmp(&pairs[a].mean_gap())
            .expect("gaps are finite")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Precomputed per-(teacher example, query) calibration for the
/// student-query attack: for each audited example, the filtered query
/// indices and their Gaussian pairs.
#[derive(Debug, Clone)]
pub struct StudentQueryCalibration {
    /// Audited example IDs, in plan-pool order.
    pub ids: Vec<usize>,
    /// Per audited example: `(query index, fitted pair)` for the queries
    /// that survived the mean-gap filter.
    pub selected: Vec<Vec<(usize, GaussianPair)>>,
    /// Class read per selected query (fixed per example in teacher-label
    /// mode, per query in student-label mode).
    pub classes: Vec<Vec<usize>>,
    pub mode: LabelMode,
}

impl StudentQueryCalibration {
    /// Narrows each example's query set to its `k` largest-gap pairs
    /// among those already stored. Applied to an unfiltered calibration
    /// this equals calibrating with `k` directly.
    pub fn refiltered(&self, k: usize) -> StudentQueryCalibration {
        let mut selected = Vec::with_capacity(self.selected.len());
        let mut classes = Vec::with_capacity(self.classes.len());
        for (pairs, cls) in self.selected.iter().zip(&self.classes) {
            let gaps: Vec<GaussianPair> = pairs.iter().map(|p| p.1).collect();
            let keep = mean_gap_filter(&gaps, k);
            selected.push(keep.iter().map(|&i| pairs[i]).collect());
            classes.push(keep.iter().map(|&i| cls[i]).collect());
        }
        StudentQueryCalibration { ids: self.ids.clone(), selected, classes, mode: self.mode }
    }
}

/// Builds the student-query calibration: fits a [`GaussianPair`] per
/// (audited teacher example, student query) from teacher-shadow logits
/// and keeps each example's `k` largest-gap queries.
pub fn calibrate_student_query(
    calib: &LogitStore,
    calib_plan: &MembershipPlan,
    teacher_labels: &[usize],
    student_labels: &[usize],
    k: usize,
    mode: LabelMode,
    opts: &LiraOptions,
) -> Result<StudentQueryCalibration> {
    let positions: Vec<usize> = (0..calib_plan.pool.len()).collect();
    calibrate_positions(calib, calib_plan, teacher_labels, student_labels, &positions, k, mode, opts)
}

/// [`calibrate_student_query`] restricted to a subset of audited
/// examples, given by ID; the returned calibration lists them in the
/// order passed.
pub fn calibrate_student_query_for(
    calib: &LogitStore,
    calib_plan: &MembershipPlan,
    teacher_labels: &[usize],
    student_labels: &[usize],
    targets: &[usize],
    k: usize,
    mode: LabelMode,
    opts: &LiraOptions,
) -> Result<StudentQueryCalibration> {
    let positions: Vec<usize> = targets
        .iter()
        .map(|&id| {
            calib_plan
                .pool_pos(id)
                .ok_or_else(|| Error::invalid_argument(format!("example {id} not in the audited pool")))
        })
        .collect::<Result<_>>()?;
    calibrate_positions(calib, calib_plan, teacher_labels, student_labels, &positions, k, mode, opts)
}

#[allow(clippy::too_many_arguments)]
fn calibrate_positions(
    calib: &LogitStore,
    calib_plan: &MembershipPlan,
    teacher_labels: &[usize],
    student_labels: &[usize],
    positions: &[usize],
    k: usize,
    mode: LabelMode,
    opts: &LiraOptions,
) -> Result<StudentQueryCalibration> {
    if k == 0 {
        return Err(Error::invalid_argument("query filter k must be >= 1"));
    }
    if calib.family() != AttackFamily::StudentQuery {
        return Err(Error::invalid_argument(
            "calibration store is not a student-query population",
        ));
    }
    if calib.n_models() != calib_plan.n_models {
        return Err(Error::invalid_argument(format!(
            "store has {} models, plan has {}",
            calib.n_models(),
            calib_plan.n_models
        )));
    }
    if teacher_labels.len() != calib_plan.pool.len() {
        return Err(Error::invalid_argument(
            "teacher labels do not match the plan pool",
        ));
    }
    if student_labels.len() != calib.n_probe() {
        return Err(Error::invalid_argument(format!(
            "{} student labels for {} query columns",
            student_labels.len(),
            calib.n_probe()
        )));
    }
    let classes = calib.n_classes();
    if let Some(&bad) = teacher_labels.iter().chain(student_labels).find(|&&y| y >= classes) {
        return Err(Error::invalid_argument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    if let Some(&bad) = positions.iter().find(|&&j| j >= calib_plan.pool.len()) {
        return Err(Error::invalid_argument(format!(
            "pool position {bad} out of range ({} examples)",
            calib_plan.pool.len()
        )));
    }
    let n_queries = calib.n_probe();
    let n_models = calib.n_models();
    let mut selected = Vec::with_capacity(positions.len());
    let mut sel_classes = Vec::with_capacity(positions.len());
    let mut in_models = Vec::with_capacity(n_models);
    let mut out_models = Vec::with_capacity(n_models);
    let mut ins: Vec<f64> = Vec::with_capacity(n_models);
    let mut outs: Vec<f64> = Vec::with_capacity(n_models);
    for &j in positions {
        let id = calib_plan.pool[j];
        in_models.clear();
        out_models.clear();
        for m in 0..n_models {
            if calib_plan.is_in(m, j) {
                in_models.push(m);
            } else {
                out_models.push(m);
            }
        }
        if in_models.len() < 2 || out_models.len() < 2 {
            return Err(Error::insufficient_data(format!(
                "example {id}: {} IN and {} OUT calibration models (need >= 2 each)",
                in_models.len(),
                out_models.len()
            )));
        }
        let mut pairs = Vec::with_capacity(n_queries);
        for i in 0..n_queries {
            let class = match mode {
                LabelMode::TeacherLabel => teacher_labels[j],
                LabelMode::StudentLabel => student_labels[i],
            };
            ins.clear();
            outs.clear();
            for &m in &in_models {
                ins.push(calib.logit(m, i, class) as f64);
            }
            for &m in &out_models {
                outs.push(calib.logit(m, i, class) as f64);
            }
            pairs.push(fit_gaussian_pair_with(&ins, &outs, opts.variance_floor)?);
        }
        let keep = mean_gap_filter(&pairs, k);
        sel_classes.push(
            keep.iter()
                .map(|&i| match mode {
                    LabelMode::TeacherLabel => teacher_labels[j],
                    LabelMode::StudentLabel => student_labels[i],
                })
                .collect(),
        );
        selected.push(keep.into_iter().map(|i| (i, pairs[i])).collect());
    }
    Ok(StudentQueryCalibration {
        ids: positions.iter().map(|&j| calib_plan.pool[j]).collect(),
        selected,
        classes: sel_classes,
        mode,
    })
}

/// Scores one audited teacher against a prepared calibration: per
/// example, the sum of log likelihood ratios over its selected queries,
/// read from the teacher's query outputs. The audited model is never
/// evaluated on the examples being scored.
pub fn score_student_query(
    calibration: &StudentQueryCalibration,
    target_q: &QueryDataset,
    membership: Option<&[bool]>,
) -> Result<Vec<ScoreRecord>> {
    score_student_query_logits(calibration, &target_q.raw_logits, membership)
}

/// [`score_student_query`] on a bare `n_queries x n_classes` logit
/// matrix — the form evaluation harnesses read back from stores.
pub fn score_student_query_logits(
    calibration: &StudentQueryCalibration,
    query_logits: &Matrix,
    membership: Option<&[bool]>,
) -> Result<Vec<ScoreRecord>> {
    let n_queries = query_logits.rows();
    if let Some(mb) = membership {
        if mb.len() != calibration.ids.len() {
            return Err(Error::invalid_argument(
                "membership length does not match audited examples",
            ));
        }
    }
    let mut records = Vec::with_capacity(calibration.ids.len());
    for (j, &id) in calibration.ids.iter().enumerate() {
        let mut score = 0.0;
        for (&(i, ref pair), &class) in calibration.selected[j].iter().zip(&calibration.classes[j]) {
            if i >= n_queries {
                return Err(Error::invalid_argument(format!(
                    "query index {i} out of range for target with {n_queries} queries"
                )));
            }
            let obs = query_logits.row(i)[class];
            score += log_lr(pair, obs);
        }
        records.push(ScoreRecord {
            id,
            score,
            is_in: membership.map(|mb| mb[j]),
            family: AttackFamily::StudentQuery,
        });
    }
    Ok(records)
}

/// One-shot student-query attack: calibrate, filter, and score a single
/// audited teacher.
#[allow(clippy::too_many_arguments)]
pub fn student_query_attack(
    calib: &LogitStore,
    calib_plan: &MembershipPlan,
    target_q: &QueryDataset,
    teacher_labels: &[usize],
    student_labels: &[usize],
    membership: Option<&[bool]>,
    k: usize,
    mode: LabelMode,
    opts: &LiraOptions,
) -> Result<Vec<ScoreRecord>> {
    if target_q.raw_logits.rows() != calib.n_probe() {
        return Err(Error::invalid_argument(format!(
            "target was queried on {} examples, calibration on {}",
            target_q.raw_logits.rows(),
            calib.n_probe()
        )));
    }
    let calibration =
        calibrate_student_query(calib, calib_plan, teacher_labels, student_labels, k, mode, opts)?;
    score_student_query(&calibration, target_q, membership)
}

/// The uncalibrated baseline: each score is the raw correct-class logit
/// of the evaluated model; a single global threshold sweep (the ROC)
/// does the rest.
pub fn logit_threshold_baseline(
    eval: &LogitStore,
    probe_ids: &[usize],
    labels: &[usize],
) -> Result<Vec<ScoreRecord>> {
    if probe_ids.len() != eval.n_probe() || labels.len() != eval.n_probe() {
        return Err(Error::invalid_argument(
            "probe IDs and labels must match the store's probe columns",
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= eval.n_classes()) {
        return Err(Error::invalid_argument(format!(
            "label {bad} out of range for {} classes",
            eval.n_classes()
        )));
    }
    let mut records = Vec::with_capacity(eval.n_models() * eval.n_probe());
    for m in 0..eval.n_models() {
        for p in 0..eval.n_probe() {
            records.push(ScoreRecord {
                id: probe_ids[p],
                score: eval.logit(m, p, labels[p]) as f64,
                is_in: Some(eval.is_in(m, p)),
                family: AttackFamily::Baseline,
            });
        }
    }
    Ok(records)
}
