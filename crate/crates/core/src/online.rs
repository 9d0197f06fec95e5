//! The online adaptation loop.
//!
//! After an initial supervised phase on a small labelled subset `X₀`, every
//! round refits the decision rule over the whole training set, labels the
//! next chunk of unlabeled traffic, raises alerts for attacks, flips a fixed
//! fraction of the fresh pseudo-labels, appends the chunk to the training set
//! and fine-tunes the model on it.
//!
//! The anchor means are always taken from the true-labelled normals of `X₀`.
//! Stream examples keep their ground truth in a [`HiddenTruth`] store that
//! counts every read; the loop itself only reads it to audit pseudo-label
//! quality and to score the held-out test set.

use std::cell::Cell;
use std::num::NonZeroUsize;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, FeatureSchema, Label, LabeledExample, Provenance, TrainingSet};
use crate::decision::{
    fit_two_gaussians_with, nearest_rank_percentile, score_all, AnchorContext, DecisionMode,
    DecisionState, FitOptions, HeadDecision, HeadRule, Verdict,
};
use crate::error::{Error, Result};
use crate::eval::{metrics, zero_day_recall, AttackTag, CategoryRecall, ConfusionCounts, Metrics};
use crate::linalg::Matrix;
use crate::loss::LossConfig;
use crate::model::{train_epochs, Activation, HeadMode, LayerSpec, ModelParams, TrainConfig, TrainSummary};

pub const REPORT_FORMAT: &str = "ondetect-report/1";
pub const CHECKPOINT_FORMAT: &str = "ondetect-checkpoint/1";
pub const SNAPSHOT_FORMAT: &str = "ondetect-snapshot/1";

/// Rows per forward pass when scoring large sets.
const SCORING_BATCH: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub epoch_0: usize,
    pub epoch_1: usize,
    pub chunk_size: NonZeroUsize,
    pub lambda: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub heads: HeadMode,
    pub decision: DecisionMode,
    pub train: TrainConfig,
    /// Encoder widths; the decoder mirrors them.
    pub encoder_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub pin_mixture_weights: bool,
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 0.5), got {}",
                self.lambda
            )));
        }
        if let DecisionMode::FixedThreshold { percentile } = self.decision {
            if !(0.0..=100.0).contains(&percentile) {
                return Err(Error::Config(format!(
                    "threshold percentile must lie in [0, 100], got {percentile}"
                )));
            }
        }
        self.loss.validate()?;
        self.train.validate()
    }

    pub fn layer_spec(&self, input_dim: usize) -> Result<LayerSpec> {
        let mut spec = LayerSpec::mirrored(input_dim, &self.encoder_widths)?;
        spec.hidden_activation = self.hidden_activation;
        spec.output_activation = self.output_activation;
        Ok(spec)
    }
}

/// Ground truth of one stream example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truth {
    pub label: Label,
    pub attack: Option<String>,
    pub family: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadPurpose {
    /// Scoring pseudo-labels or test predictions after the fact.
    Evaluation,
    /// Anything that could feed the model or the decision rule.
    Learning,
}

/// Ground truth kept apart from the features, with a read counter.
#[derive(Debug, Default)]
pub struct HiddenTruth {
    truths: Vec<Truth>,
    evaluation_reads: Cell<u64>,
    learning_reads: Cell<u64>,
}

impl HiddenTruth {
    pub fn reveal(&self, index: usize, purpose: ReadPurpose) -> &Truth {
        let counter = match purpose {
            ReadPurpose::Evaluation => &self.evaluation_reads,
            ReadPurpose::Learning => &self.learning_reads,
        };
        counter.set(counter.get() + 1);
        &self.truths[index]
    }

    pub fn len(&self) -> usize {
        self.truths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truths.is_empty()
    }

    /// Reads made for anything other than evaluation.
    pub fn reads_outside_evaluation(&self) -> u64 {
        self.learning_reads.get()
    }

    pub fn evaluation_reads(&self) -> u64 {
        self.evaluation_reads.get()
    }
}

/// Unlabeled traffic in arrival order, with its ground truth sealed away.
#[derive(Debug)]
pub struct Stream {
    features: Matrix,
    pub truth: HiddenTruth,
}

impl Stream {
    pub fn new(examples: Vec<LabeledExample>, dim: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(examples.len() * dim);
        let mut truths = Vec::with_capacity(examples.len());
        for e in examples {
            if e.x.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: e.x.len(),
                });
            }
            data.extend_from_slice(&e.x);
            truths.push(Truth {
                label: e.y,
                attack: e.attack,
                family: e.category,
            });
        }
        Ok(Self {
            features: Matrix::from_vec(truths.len(), dim, data),
            truth: HiddenTruth {
                truths,
                ..HiddenTruth::default()
            },
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Row ranges of consecutive chunks.
    pub fn chunk_ranges(&self, m: NonZeroUsize) -> Vec<std::ops::Range<usize>> {
        (0..self.len())
            .step_by(m.get())
            .map(|s| s..(s + m.get()).min(self.len()))
            .collect()
    }

    fn rows(&self, range: std::ops::Range<usize>) -> Matrix {
        let d = self.features.cols();
        Matrix::from_vec(
            range.len(),
            d,
            self.features.as_slice()[range.start * d..range.end * d].to_vec(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub stream_index: usize,
    pub round: usize,
    pub label: Label,
    pub encoder: Option<HeadDecision>,
    pub decoder: Option<HeadDecision>,
    pub timestamp_ms: u64,
}

/// Head-wise diagnostics from the last refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitInfo {
    pub encoder_em_iterations: Option<usize>,
    pub decoder_em_iterations: Option<usize>,
    pub sigma_floored: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineState {
    pub config: OnlineConfig,
    pub params: ModelParams,
    pub train_set: TrainingSet,
    /// Rows `0..initial_len` of the training set form `X₀`.
    pub initial_len: usize,
    pub decision: Option<DecisionState>,
    pub last_refit: Option<RefitInfo>,
    pub round: usize,
    train_rng: ChaCha8Rng,
    flip_rng: ChaCha8Rng,
}

fn rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut train = ChaCha8Rng::seed_from_u64(seed);
    train.set_stream(1);
    let mut flip = ChaCha8Rng::seed_from_u64(seed);
    flip.set_stream(2);
    (train, flip)
}

/// Trains a freshly initialized model on the labelled initial set.
pub fn initialize(initial: &Dataset, cfg: &OnlineConfig) -> Result<OnlineState> {
    cfg.validate()?;
    let train_set = TrainingSet::from_dataset(initial)?;
    let normals = train_set.count_label(Label::Normal);
    let attacks = train_set.count_label(Label::Attack);
    if normals < 2 || attacks < 1 {
        return Err(Error::Precondition(format!(
            "initial set needs at least 2 normal and 1 attack example, got {normals} and {attacks}"
        )));
    }
    let spec = cfg.layer_spec(initial.dim())?;
    let mut params = ModelParams::init(&spec, cfg.seed)?;
    let (mut train_rng, flip_rng) = rngs(cfg.seed);
    if cfg.epoch_0 > 0 {
        let summary = train_epochs(
            &mut params,
            &train_set,
            &cfg.loss,
            cfg.heads,
            &cfg.train,
            cfg.epoch_0,
            &mut train_rng,
        )?;
        tracing::debug!(epochs = summary.epochs, loss = ?summary.epoch_loss, "initial training done");
    }
    Ok(OnlineState {
        config: cfg.clone(),
        params,
        initial_len: train_set.len(),
        train_set,
        decision: None,
        last_refit: None,
        round: 0,
        train_rng,
        flip_rng,
    })
}

/// Forward pass over many rows in bounded batches.
pub fn represent(params: &ModelParams, x: &Matrix) -> Result<(Matrix, Matrix)> {
    let d = x.cols();
    let mut en = Vec::with_capacity(x.rows() * params.spec.bottleneck_dim());
    let mut de = Vec::with_capacity(x.rows() * d);
    let mut start = 0;
    while start < x.rows() {
        let end = (start + SCORING_BATCH).min(x.rows());
        let part = Matrix::from_vec(end - start, d, x.as_slice()[start * d..end * d].to_vec());
        let out = params.forward_batch(&part, false)?;
        en.extend_from_slice(out.u_en.as_slice());
        de.extend_from_slice(out.u_de.as_slice());
        start = end;
    }
    Ok((
        Matrix::from_vec(x.rows(), params.spec.bottleneck_dim(), en),
        Matrix::from_vec(x.rows(), params.spec.input_dim(), de),
    ))
}

fn training_matrix(set: &TrainingSet) -> Matrix {
    Matrix::from_vec(set.len(), set.dim(), set.features().to_vec())
}

fn fit_head(
    anchor: &[f64],
    reps: &Matrix,
    x0_normals: &[usize],
    cfg: &OnlineConfig,
) -> Result<(HeadRule, Option<usize>, bool)> {
    let scores = score_all(anchor, reps)?;
    match cfg.decision {
        DecisionMode::Gaussian => {
            let opts = FitOptions {
                pin_weights: cfg.pin_mixture_weights,
                ..FitOptions::default()
            };
            let report = fit_two_gaussians_with(&scores, &opts)?;
            Ok((
                HeadRule::Gaussian(report.pair),
                Some(report.iterations),
                report.sigma_floored,
            ))
        }
        DecisionMode::FixedThreshold { percentile } => {
            let normal_scores: Vec<f64> = x0_normals.iter().map(|&i| scores[i]).collect();
            let threshold = nearest_rank_percentile(&normal_scores, percentile)?;
            Ok((HeadRule::Threshold { threshold }, None, false))
        }
    }
}

/// Recomputes the anchors from `X₀` normals and refits each active head over
/// every row of the current training set.
pub fn refresh_decision(state: &mut OnlineState) -> Result<&DecisionState> {
    let cfg = &state.config;
    let x = training_matrix(&state.train_set);
    let (en, de) = represent(&state.params, &x)?;
    let x0_normals: Vec<usize> = (0..state.initial_len)
        .filter(|&i| {
            state.train_set.provenance()[i] == Provenance::True
                && state.train_set.labels()[i] == Label::Normal
        })
        .collect();
    let anchors = AnchorContext {
        mean_normal_en: crate::decision::mean_rows(&en, x0_normals.iter().copied())?,
        mean_normal_de: crate::decision::mean_rows(&de, x0_normals.iter().copied())?,
    };
    let mut info = RefitInfo {
        encoder_em_iterations: None,
        decoder_em_iterations: None,
        sigma_floored: false,
    };
    let encoder = if cfg.heads.uses_encoder() {
        let (rule, iters, floored) = fit_head(&anchors.mean_normal_en, &en, &x0_normals, cfg)?;
        info.encoder_em_iterations = iters;
        info.sigma_floored |= floored;
        Some(rule)
    } else {
        None
    };
    let decoder = if cfg.heads.uses_decoder() {
        let (rule, iters, floored) = fit_head(&anchors.mean_normal_de, &de, &x0_normals, cfg)?;
        info.decoder_em_iterations = iters;
        info.sigma_floored |= floored;
        Some(rule)
    } else {
        None
    };
    tracing::debug!(
        round = state.round,
        encoder = ?encoder,
        decoder = ?decoder,
        sigma_floored = info.sigma_floored,
        "decision refit"
    );
    state.last_refit = Some(info);
    state.decision = Some(DecisionState {
        heads: cfg.heads,
        anchors,
        encoder,
        decoder,
    });
    Ok(state.decision.as_ref().expect("just set"))
}

/// Labels every row with the current model and decision rule.
pub fn classify_rows(params: &ModelParams, decision: &DecisionState, x: &Matrix) -> Result<Vec<Verdict>> {
    let (en, de) = represent(params, x)?;
    Ok((0..x.rows())
        .map(|r| decision.decide_parts(en.row(r), de.row(r)))
        .collect())
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Pseudo-labels a chunk and emits one alert per row labelled as an attack.
/// `first_index` is the stream position of the chunk's first row.
pub fn pseudo_label_chunk(
    state: &OnlineState,
    chunk: &Matrix,
    first_index: usize,
) -> Result<(Vec<Label>, Vec<AlertEvent>)> {
    let decision = state
        .decision
        .as_ref()
        .ok_or_else(|| Error::Precondition("decision rule has not been fit this round".into()))?;
    let verdicts = classify_rows(&state.params, decision, chunk)?;
    let ts = now_ms();
    let alerts = verdicts
        .iter()
        .enumerate()
        .filter(|(_, v)| v.label == Label::Attack)
        .map(|(i, v)| AlertEvent {
            stream_index: first_index + i,
            round: state.round,
            label: v.label,
            encoder: v.encoder,
            decoder: v.decoder,
            timestamp_ms: ts,
        })
        .collect();
    Ok((verdicts.into_iter().map(|v| v.label).collect(), alerts))
}

/// Number of labels flipped for a chunk of `n`: `λ·n` rounded half up.
pub fn flip_count(n: usize, lambda: f64) -> usize {
    ((lambda * n as f64) + 0.5).floor() as usize
}

/// Positions to flip, drawn uniformly without replacement.
pub fn flip_positions(n: usize, lambda: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = flip_count(n, lambda).min(n);
    let mut picked = index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

pub fn apply_flips(labels: &[Label], positions: &[usize]) -> Vec<Label> {
    let mut out = labels.to_vec();
    for &p in positions {
        out[p] = out[p].flipped();
    }
    out
}

/// Flips `round(λ·|labels|)` uniformly chosen labels.
pub fn random_flip(labels: &[Label], lambda: f64, rng: &mut ChaCha8Rng) -> (Vec<Label>, Vec<usize>) {
    let positions = flip_positions(labels.len(), lambda, rng);
    (apply_flips(labels, &positions), positions)
}

/// Appends the chunk with its (flipped) pseudo-labels and fine-tunes.
pub fn adapt(state: &mut OnlineState, chunk: &Matrix, labels: &[Label]) -> Result<TrainSummary> {
    if chunk.rows() != labels.len() {
        return Err(Error::Dimension {
            expected: chunk.rows(),
            actual: labels.len(),
        });
    }
    for (row, &y) in chunk.iter_rows().zip(labels) {
        state.train_set.push(row, y, Provenance::Pseudo)?;
    }
    let cfg = &state.config;
    let summary = train_epochs(
        &mut state.params,
        &state.train_set,
        &cfg.loss,
        cfg.heads,
        &cfg.train,
        cfg.epoch_1,
        &mut state.train_rng,
    )?;
    state.round += 1;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub metrics: Metrics,
    pub zero_day: Vec<CategoryRecall>,
}

/// Scores a labelled dataset with a frozen model and decision rule.
pub fn evaluate(params: &ModelParams, decision: &DecisionState, test: &Dataset) -> Result<EvalResult> {
    if test.is_empty() {
        return Err(Error::Empty("test set is empty"));
    }
    let x = Matrix::from_rows(
        &test.examples.iter().map(|e| e.x.as_slice()).collect::<Vec<_>>(),
        test.dim(),
    );
    let preds: Vec<Label> = classify_rows(params, decision, &x)?
        .into_iter()
        .map(|v| v.label)
        .collect();
    let truths: Vec<Label> = test.examples.iter().map(|e| e.y).collect();
    let tags: Vec<AttackTag> = test
        .examples
        .iter()
        .map(|e| AttackTag {
            truth: e.y,
            attack: e.attack.clone(),
            family: e.category.clone(),
        })
        .collect();
    Ok(EvalResult {
        metrics: metrics(&preds, &truths)?,
        zero_day: zero_day_recall(&preds, &tags, &test.schema.training_attack_types)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub chunk_len: usize,
    pub alerts: usize,
    pub flips: usize,
    /// Pre-flip pseudo-labels scored against the hidden truth.
    pub pseudo_label_audit: Metrics,
    pub encoder_rule: Option<HeadRule>,
    pub decoder_rule: Option<HeadRule>,
    pub train: TrainSummary,
    pub train_set_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub mode: RunMode,
    pub config: OnlineConfig,
    pub seed: u64,
    pub initial_size: usize,
    pub stream_size: usize,
    /// Test metrics right after the initial training phase.
    pub initial: EvalResult,
    pub rounds: Vec<RoundReport>,
    #[serde(rename = "final")]
    pub final_eval: EvalResult,
    pub final_train_set_size: usize,
    pub true_label_count: usize,
    pub pseudo_label_count: usize,
    pub hidden_label_reads_outside_evaluation: u64,
    pub wall_clock_secs: f64,
    /// SHA-256 of the report with timing zeroed and this field empty.
    pub digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Online,
    Offline,
}

impl RunReport {
    fn compute_digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.wall_clock_secs = 0.0;
        canonical.digest.clear();
        let bytes = serde_json::to_vec(&canonical).expect("report serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn verify_digest(&self) -> bool {
        self.compute_digest() == self.digest
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Receives alerts and round summaries as the run progresses.
pub trait RunObserver {
    fn alert(&mut self, _event: &AlertEvent) -> Result<()> {
        Ok(())
    }

    fn round_done(&mut self, _state: &OnlineState, _report: &RoundReport) -> Result<()> {
        Ok(())
    }

    /// Return true to receive a [`Snapshot`] after every round.
    fn wants_snapshots(&self) -> bool {
        false
    }

    fn snapshot(&mut self, _snapshot: &Snapshot) -> Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

/// Everything needed to continue an interrupted online run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub state: OnlineState,
    pub initial_eval: EvalResult,
    pub rounds: Vec<RoundReport>,
    pub stream_position: usize,
}

impl Snapshot {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let snap: Snapshot = serde_json::from_slice(&bytes)?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::Format {
                expected: SNAPSHOT_FORMAT.into(),
                found: snap.format,
            });
        }
        Ok(snap)
    }
}

fn audit_chunk(stream: &Stream, range: std::ops::Range<usize>, labels: &[Label]) -> Result<Metrics> {
    let mut counts = ConfusionCounts::default();
    for (i, &p) in range.zip(labels) {
        counts.record(p, stream.truth.reveal(i, ReadPurpose::Evaluation).label);
    }
    Metrics::from_counts(counts)
}

fn rule_json(rule: &Option<HeadRule>) -> String {
    serde_json::to_string(rule).unwrap_or_default()
}

/// Runs one round over `range` of the stream: refit, pseudo-label, flip,
/// adapt.
pub fn run_round(
    state: &mut OnlineState,
    stream: &Stream,
    range: std::ops::Range<usize>,
    observer: &mut dyn RunObserver,
) -> Result<RoundReport> {
    refresh_decision(state)?;
    let chunk = stream.rows(range.clone());
    let (labels, alerts) = pseudo_label_chunk(state, &chunk, range.start)?;
    for a in &alerts {
        observer.alert(a)?;
    }
    let audit = audit_chunk(stream, range.clone(), &labels)?;
    let (flipped, positions) = random_flip(&labels, state.config.lambda, &mut state.flip_rng);
    let decision = state.decision.clone().expect("refreshed above");
    let round = state.round;
    let train = adapt(state, &chunk, &flipped)?;
    let report = RoundReport {
        round,
        chunk_len: range.len(),
        alerts: alerts.len(),
        flips: positions.len(),
        pseudo_label_audit: audit,
        encoder_rule: decision.encoder,
        decoder_rule: decision.decoder,
        train,
        train_set_size: state.train_set.len(),
    };
    tracing::debug!(
        round,
        alerts = report.alerts,
        flips = report.flips,
        pseudo_accuracy = report.pseudo_label_audit.accuracy,
        encoder_rule = %rule_json(&report.encoder_rule),
        decoder_rule = %rule_json(&report.decoder_rule),
        "round complete"
    );
    observer.round_done(state, &report)?;
    Ok(report)
}

/// Drives a full online run: initial training, every stream round, then
/// evaluation on the held-out test set. Returns the report and the final
/// state, with its decision rule refitted after the last round.
pub fn run_online(
    initial: &Dataset,
    stream: Vec<LabeledExample>,
    test: &Dataset,
    cfg: &OnlineConfig,
    observer: &mut dyn RunObserver,
) -> Result<(RunReport, OnlineState)> {
    let started = Instant::now();
    let stream = Stream::new(stream, initial.dim())?;
    let mut state = initialize(initial, cfg)?;
    refresh_decision(&mut state)?;
    let initial_eval = evaluate(
        &state.params,
        state.decision.as_ref().expect("fit above"),
        test,
    )?;
    let snapshot = Snapshot {
        format: SNAPSHOT_FORMAT.into(),
        state,
        initial_eval,
        rounds: Vec::new(),
        stream_position: 0,
    };
    continue_online(snapshot, &stream, test, observer, started)
}

/// Resumes a run from a snapshot. The stream must be the same ordered stream
/// the snapshot was taken from.
pub fn resume_online(
    snapshot: Snapshot,
    stream: Vec<LabeledExample>,
    test: &Dataset,
    observer: &mut dyn RunObserver,
) -> Result<(RunReport, OnlineState)> {
    let dim = snapshot.state.train_set.dim();
    let stream = Stream::new(stream, dim)?;
    continue_online(snapshot, &stream, test, observer, Instant::now())
}

fn continue_online(
    snapshot: Snapshot,
    stream: &Stream,
    test: &Dataset,
    observer: &mut dyn RunObserver,
    started: Instant,
) -> Result<(RunReport, OnlineState)> {
    let Snapshot {
        mut state,
        initial_eval,
        mut rounds,
        stream_position,
        ..
    } = snapshot;
    let cfg = state.config.clone();
    for range in stream.chunk_ranges(cfg.chunk_size) {
        if range.start < stream_position {
            continue;
        }
        let end = range.end;
        rounds.push(run_round(&mut state, stream, range, observer)?);
        if observer.wants_snapshots() {
            observer.snapshot(&Snapshot {
                format: SNAPSHOT_FORMAT.into(),
                state: state.clone(),
                initial_eval: initial_eval.clone(),
                rounds: rounds.clone(),
                stream_position: end,
            })?;
        }
    }
    refresh_decision(&mut state)?;
    let final_eval = evaluate(
        &state.params,
        state.decision.as_ref().expect("fit above"),
        test,
    )?;
    let report = finish_report(
        RunMode::Online,
        &state,
        initial_eval,
        rounds,
        final_eval,
        stream.len(),
        stream.truth.reads_outside_evaluation(),
        started,
    )?;
    Ok((report, state))
}

#[allow(clippy::too_many_arguments)]
fn finish_report(
    mode: RunMode,
    state: &OnlineState,
    initial: EvalResult,
    rounds: Vec<RoundReport>,
    final_eval: EvalResult,
    stream_size: usize,
    hidden_reads: u64,
    started: Instant,
) -> Result<RunReport> {
    let mut report = RunReport {
        format: REPORT_FORMAT.into(),
        mode,
        config: state.config.clone(),
        seed: state.config.seed,
        initial_size: state.initial_len,
        stream_size,
        initial,
        rounds,
        final_eval,
        final_train_set_size: state.train_set.len(),
        true_label_count: state.train_set.count_provenance(Provenance::True),
        pseudo_label_count: state.train_set.count_provenance(Provenance::Pseudo),
        hidden_label_reads_outside_evaluation: hidden_reads,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        digest: String::new(),
    };
    report.digest = report.compute_digest();
    Ok(report)
}

/// Fully supervised baseline: trains on the complete labelled training set
/// for `epoch_0` epochs with no streaming.
pub fn run_offline(train: &Dataset, test: &Dataset, cfg: &OnlineConfig) -> Result<(RunReport, OnlineState)> {
    let started = Instant::now();
    let mut state = initialize(train, cfg)?;
    refresh_decision(&mut state)?;
    let eval = evaluate(
        &state.params,
        state.decision.as_ref().expect("fit above"),
        test,
    )?;
    let report = finish_report(
        RunMode::Offline,
        &state,
        eval.clone(),
        Vec::new(),
        eval,
        0,
        0,
        started,
    )?;
    Ok((report, state))
}

/// Inference bundle: model, decision rule and the schema it was built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub schema: FeatureSchema,
    pub config: OnlineConfig,
    pub init_seed: u64,
    pub round: usize,
    pub params: ModelParams,
    pub decision: DecisionState,
}

impl Checkpoint {
    pub fn from_state(state: &OnlineState, schema: &FeatureSchema) -> Result<Self> {
        let decision = state
            .decision
            .clone()
            .ok_or_else(|| Error::Precondition("no decision rule fitted yet".into()))?;
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            schema: schema.clone(),
            config: state.config.clone(),
            init_seed: state.config.seed,
            round: state.round,
            params: state.params.clone(),
            decision,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("format").and_then(|f| f.as_str()).unwrap_or_default();
        if found != CHECKPOINT_FORMAT {
            return Err(Error::Format {
                expected: CHECKPOINT_FORMAT.into(),
                found: found.into(),
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn evaluate(&self, test: &Dataset) -> Result<EvalResult> {
        evaluate(&self.params, &self.decision, test)
    }
}
