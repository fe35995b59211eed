//! End-to-end runs: cross-validation, static train/test evaluation and
//! session-by-session self-training.

pub mod config;
pub mod cv;
pub mod extractor;

use serde::{Deserialize, Serialize};

use crate::classify::Vote;
use crate::data::{Class, SplitSpec, TrialSet};
use crate::error::{Error, Result};
use crate::features::Method;
use crate::select::{grid_search, CandidateScore, SearchResult};

pub use config::{ArParams, CspParams, EnsembleParams, LrpParams, PipelineConfig};
pub use cv::{cross_validate, stratified_folds, CvSummary};
pub use extractor::{combine_features, FittedExtractor, TrainedPipeline};

/// 2×2 counts, rows = truth, columns = prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub neg_as_neg: usize,
    pub neg_as_pos: usize,
    pub pos_as_neg: usize,
    pub pos_as_pos: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.neg_as_neg + self.neg_as_pos + self.pos_as_neg + self.pos_as_pos
    }

    pub fn correct(&self) -> usize {
        self.neg_as_neg + self.pos_as_pos
    }

    fn add(&mut self, truth: Class, pred: Class) {
        match (truth, pred) {
            (Class::Neg, Class::Neg) => self.neg_as_neg += 1,
            (Class::Neg, Class::Pos) => self.neg_as_pos += 1,
            (Class::Pos, Class::Neg) => self.pos_as_neg += 1,
            (Class::Pos, Class::Pos) => self.pos_as_pos += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Percent correct.
    pub accuracy: f64,
    pub confusion: Confusion,
}

/// Accuracy and confusion counts of `predicted` against `truth`.
pub fn evaluate(predicted: &[Class], truth: &[Option<Class>]) -> Result<Evaluation> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: predicted.len(),
            actual: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let mut confusion = Confusion::default();
    for (i, (&p, t)) in predicted.iter().zip(truth).enumerate() {
        let t = t.ok_or_else(|| Error::invalid(format!("trial {i} has no true label")))?;
        confusion.add(t, p);
    }
    Ok(Evaluation {
        accuracy: 100.0 * confusion.correct() as f64 / confusion.total() as f64,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Static,
    Adaptive,
}

/// CSP parameters in force for one prediction step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenParams {
    pub band_hz: Option<(f64, f64)>,
    pub window_s: Option<(f64, f64)>,
    pub channels: Option<Vec<usize>>,
    pub m: usize,
}

impl ChosenParams {
    fn of(config: &PipelineConfig) -> Option<ChosenParams> {
        config.uses(Method::Csp).then(|| ChosenParams {
            band_hz: config.csp.preprocess.band_hz,
            window_s: config.csp.preprocess.window_s,
            channels: config.csp.channels.clone(),
            m: config.csp.m,
        })
    }
}

/// One grid search: the winner and the full candidate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    /// First session labeled with the winning parameters.
    pub session: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub winner: CandidateScore,
    pub table: Vec<CandidateScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session: u32,
    /// Trials of this session that were predicted.
    pub n_trials: usize,
    /// Training-set size of the model that predicted them.
    pub n_train: usize,
    pub accuracy: Option<f64>,
    pub confusion: Option<Confusion>,
    pub chosen: Option<ChosenParams>,
    pub rho: Option<f64>,
    pub balance_penalty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub session: u32,
    pub trial_index: usize,
    pub predicted: Class,
    pub mean_score: f64,
    pub truth: Option<Class>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: RunMode,
    pub method: Method,
    /// Labeled trials the run started from.
    pub n_train: usize,
    pub n_test: usize,
    /// Cross-validation on the labeled training trials.
    pub train_cv: Option<CvSummary>,
    /// Percent correct over test trials with known labels.
    pub test_accuracy: Option<f64>,
    pub confusion: Option<Confusion>,
    pub sessions: Vec<SessionReport>,
    pub searches: Vec<SearchStep>,
    /// Configuration of the last fitted model.
    pub final_config: PipelineConfig,
    pub predictions: Vec<Prediction>,
    pub notes: Vec<String>,
}

impl EvalReport {
    /// Accuracy over the test trials of the given sessions.
    pub fn accuracy_on_sessions(&self, sessions: &[u32]) -> Option<f64> {
        let (pred, truth): (Vec<Class>, Vec<Option<Class>>) = self
            .predictions
            .iter()
            .filter(|p| sessions.contains(&p.session))
            .map(|p| (p.predicted, p.truth))
            .unzip();
        evaluate(&pred, &truth).ok().map(|e| e.accuracy)
    }

    pub fn predicted_labels(&self) -> Vec<Class> {
        self.predictions.iter().map(|p| p.predicted).collect()
    }
}

/// Runs the grid search when the config asks for one and it applies.
fn maybe_search(
    train: &TrialSet,
    test_hidden: &TrialSet,
    config: &PipelineConfig,
    notes: &mut Vec<String>,
) -> Result<(PipelineConfig, Option<SearchResult>)> {
    match &config.search {
        Some(space) if config.uses(Method::Csp) => {
            let r = grid_search(train, test_hidden, space, config)?;
            Ok((r.config.clone(), Some(r)))
        }
        Some(_) => {
            let note = format!(
                "parameter search tunes the csp chain only; skipped for method {}",
                config.method.as_str()
            );
            if !notes.contains(&note) {
                notes.push(note);
            }
            Ok((config.clone(), None))
        }
        None => Ok((config.clone(), None)),
    }
}

fn base_notes(config: &PipelineConfig) -> Vec<String> {
    let mut notes = Vec::new();
    if config.method == Method::Combined {
        notes.push("combined features are a plain concatenation of csp, ar and lrp features".into());
    }
    notes
}

/// CV on the training set; failures become a note instead of an error.
fn train_cv(train: &TrialSet, config: &PipelineConfig, notes: &mut Vec<String>) -> Option<CvSummary> {
    let labels = train.known_labels()?;
    let min_class = [Class::Neg, Class::Pos]
        .iter()
        .map(|&c| labels.iter().filter(|&&l| l == c).count())
        .min()
        .unwrap_or(0);
    let folds = config.cv_folds.min(min_class);
    if folds < 2 {
        notes.push(format!("training cross-validation skipped: {min_class} trials in the smaller class"));
        return None;
    }
    match cross_validate(train, config, folds, config.seed) {
        Ok(cv) => Some(cv),
        Err(e) => {
            notes.push(format!("training cross-validation failed: {e}"));
            None
        }
    }
}

fn search_step(session: u32, train: &TrialSet, test: &TrialSet, r: &SearchResult) -> SearchStep {
    SearchStep {
        session,
        n_train: train.len(),
        n_test: test.len(),
        winner: r.winning().clone(),
        table: r.table.clone(),
    }
}

fn predictions(test: &TrialSet, truth: &[Option<Class>], votes: &[Vote]) -> Vec<Prediction> {
    test.trials()
        .iter()
        .zip(truth)
        .zip(votes)
        .map(|((t, &truth), v)| Prediction {
            session: t.session_id,
            trial_index: t.trial_index,
            predicted: v.decision(),
            mean_score: v.mean_score,
            truth,
        })
        .collect()
}

/// Accuracy over the labeled subset, if any.
fn score_labeled(preds: &[Prediction]) -> Option<Evaluation> {
    let (p, t): (Vec<Class>, Vec<Option<Class>>) = preds
        .iter()
        .filter(|p| p.truth.is_some())
        .map(|p| (p.predicted, p.truth))
        .unzip();
    evaluate(&p, &t).ok()
}

fn session_row(
    session: u32,
    preds: &[Prediction],
    n_train: usize,
    config: &PipelineConfig,
    search: Option<&SearchResult>,
) -> SessionReport {
    let mine: Vec<Prediction> = preds.iter().filter(|p| p.session == session).cloned().collect();
    let eval = score_labeled(&mine);
    SessionReport {
        session,
        n_trials: mine.len(),
        n_train,
        accuracy: eval.map(|e| e.accuracy),
        confusion: eval.map(|e| e.confusion),
        chosen: ChosenParams::of(config),
        rho: search.map(|s| s.rho),
        balance_penalty: search.map(|s| s.balance_penalty),
    }
}

fn distinct_sessions(set: &TrialSet) -> Vec<u32> {
    set.session_ranges().into_iter().map(|(s, _)| s).collect()
}

/// Fits on `train` and labels `test`. Test labels, when present, are used only
/// for scoring.
pub fn run_static(train: &TrialSet, test: &TrialSet, config: &PipelineConfig) -> Result<EvalReport> {
    let fs = train.sampling_rate_hz();
    config.validate(fs, train.duration_s(), train.n_channels())?;
    if train.known_labels().is_none() {
        return Err(Error::invalid("training set has unlabeled trials"));
    }
    if test.is_empty() {
        return Err(Error::config("train_fraction", "test set is empty"));
    }
    let truth = test.labels();
    let hidden = test.without_labels();
    let mut notes = base_notes(config);

    let (cfg, search) = maybe_search(train, &hidden, config, &mut notes)?;
    let model = TrainedPipeline::fit(train, &cfg)?;
    let votes = model.vote(&hidden)?;
    let preds = predictions(test, &truth, &votes);
    let overall = score_labeled(&preds);
    let train_cv = train_cv(train, &cfg, &mut notes);

    let sessions = distinct_sessions(test)
        .into_iter()
        .map(|s| session_row(s, &preds, train.len(), &cfg, search.as_ref()))
        .collect();
    let searches = search
        .iter()
        .map(|r| search_step(test.trials()[0].session_id, train, test, r))
        .collect();
    Ok(EvalReport {
        mode: RunMode::Static,
        method: cfg.method,
        n_train: train.len(),
        n_test: test.len(),
        train_cv,
        test_accuracy: overall.map(|e| e.accuracy),
        confusion: overall.map(|e| e.confusion),
        sessions,
        searches,
        final_config: cfg,
        predictions: preds,
        notes,
    })
}

/// Self-training across sessions.
///
/// The first `initial` trials (all within session 1) are the labeled seed. The
/// rest of session 1 is labeled by the ensemble; then each later session is
/// labeled by a model refitted on everything before it, earlier predictions
/// standing in for the unknown labels. Predictions are never revised. With a
/// search space configured, the search reruns before every step with the
/// upcoming trials as its unlabeled side.
pub fn run_adaptive(data: &TrialSet, initial: &SplitSpec, config: &PipelineConfig) -> Result<EvalReport> {
    let fs = data.sampling_rate_hz();
    config.validate(fs, data.duration_s(), data.n_channels())?;
    let ranges = data.session_ranges();
    if ranges.len() < 2 {
        return Err(Error::config(
            "adapt",
            format!("adaptive mode needs at least 2 sessions, data has {}", ranges.len()),
        ));
    }
    let k = initial.train_len(data)?;
    let first_end = ranges[0].1.end;
    if k == 0 {
        return Err(Error::config("train_fraction", "initial training set would be empty"));
    }
    if k > first_end {
        return Err(Error::config(
            "train_fraction",
            format!("initial training set ({k} trials) must lie within session 1 ({first_end} trials)"),
        ));
    }
    let seed_idx: Vec<usize> = (0..k).collect();
    let mut train = data.subset(&seed_idx);
    if train.known_labels().is_none() {
        return Err(Error::invalid("initial training trials must be labeled"));
    }
    let mut notes = base_notes(config);
    let train_cv = train_cv(&train, config, &mut notes);

    // step boundaries: rest of session 1, then each later session
    let mut steps: Vec<std::ops::Range<usize>> = Vec::new();
    if k < first_end {
        steps.push(k..first_end);
    }
    steps.extend(ranges[1..].iter().map(|(_, r)| r.clone()));

    let mut preds: Vec<Prediction> = Vec::new();
    let mut sessions = Vec::new();
    let mut searches = Vec::new();
    let mut cfg = config.clone();
    for range in steps {
        let idx: Vec<usize> = range.collect();
        let block = data.subset(&idx);
        let truth = block.labels();
        let hidden = block.without_labels();
        let session = block.trials()[0].session_id;

        let (step_cfg, search) = maybe_search(&train, &hidden, config, &mut notes)?;
        let model = TrainedPipeline::fit(&train, &step_cfg)?;
        let votes = model.vote(&hidden)?;
        let block_preds = predictions(&block, &truth, &votes);

        sessions.push(session_row(session, &block_preds, train.len(), &step_cfg, search.as_ref()));
        if let Some(r) = &search {
            searches.push(search_step(session, &train, &block, r));
        }
        let pseudo: Vec<Option<Class>> = block_preds.iter().map(|p| Some(p.predicted)).collect();
        train = train.concat(&hidden.relabeled(&pseudo)?)?;
        preds.extend(block_preds);
        cfg = step_cfg;
    }

    let overall = score_labeled(&preds);
    Ok(EvalReport {
        mode: RunMode::Adaptive,
        method: cfg.method,
        n_train: k,
        n_test: preds.len(),
        train_cv,
        test_accuracy: overall.map(|e| e.accuracy),
        confusion: overall.map(|e| e.confusion),
        sessions,
        searches,
        final_config: cfg,
        predictions: preds,
        notes,
    })
}
