//! Model evaluation: forward simulation of car-following events, binary
//! classification metrics for lane-change decisions, regression error for
//! flow relations, stratified reports, and improvement rates.
//!
//! Native variants and DSL candidates are wrapped into a family-typed
//! [`BoundModel`] so every downstream consumer (evaluation, calibration, the
//! agent loop, the CLI) treats them uniformly.

use serde::{Deserialize, Serialize};

use crate::datasets::{
    classify_steps, CarFollowEvent, DensityBucket, DrivingState, FlowSample, LaneChangeSample,
    StateThresholds, TIME_STEP_S,
};
use crate::dsl::{self, CandidateModel};
use crate::error::{Error, Result};
use crate::models::{
    IdmParams, LwrParams, MobilParams, ModelFamily, ModelVariant, VariantFn,
};

// ---------------------------------------------------------------------------
// Datasets as a family-typed value
// ---------------------------------------------------------------------------

/// A loaded dataset tagged with the family it serves.
#[derive(Debug, Clone)]
pub enum Dataset {
    CarFollow(Vec<CarFollowEvent>),
    LaneChange(Vec<LaneChangeSample>),
    Flow(Vec<FlowSample>),
}

impl Dataset {
    pub fn family(&self) -> ModelFamily {
        match self {
            Dataset::CarFollow(_) => ModelFamily::Idm,
            Dataset::LaneChange(_) => ModelFamily::Mobil,
            Dataset::Flow(_) => ModelFamily::Lwr,
        }
    }

    /// Number of top-level items (events or samples).
    pub fn len(&self) -> usize {
        match self {
            Dataset::CarFollow(events) => events.len(),
            Dataset::LaneChange(samples) => samples.len(),
            Dataset::Flow(samples) => samples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Seeded split into (calibration, validation) parts.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        Ok(match self {
            Dataset::CarFollow(events) => {
                let (c, v) = crate::datasets::split_events(events, fraction, seed)?;
                (Dataset::CarFollow(c), Dataset::CarFollow(v))
            }
            Dataset::LaneChange(samples) => {
                let (c, v) = crate::datasets::split_events(samples, fraction, seed)?;
                (Dataset::LaneChange(c), Dataset::LaneChange(v))
            }
            Dataset::Flow(samples) => {
                let (c, v) = crate::datasets::split_events(samples, fraction, seed)?;
                (Dataset::Flow(c), Dataset::Flow(v))
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Bound models
// ---------------------------------------------------------------------------

type AccelFn = Box<dyn Fn(f64, f64, f64) -> Result<f64>>;
type DecideFn = Box<dyn Fn(&[LaneChangeSample]) -> Result<Vec<u8>>>;
type FlowFn = Box<dyn Fn(&[FlowSample]) -> Result<Vec<f64>>>;

/// A model bound to a concrete parameter vector, ready to evaluate.
pub enum BoundModel {
    /// `(spacing, sv_spd, lv_spd) -> acceleration`, one simulation step at a time.
    CarFollow(AccelFn),
    /// Whole-batch lane-change decisions (batch statistics are part of some models).
    LaneChange(DecideFn),
    /// Whole-batch density→speed predictions.
    Flow(FlowFn),
}

/// Candidate decision scores above this are a lane change. Scores are
/// expected to be indicator-like (comparisons yield exactly 0.0/1.0).
pub const DECISION_SCORE_THRESHOLD: f64 = 0.5;

impl BoundModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            BoundModel::CarFollow(_) => ModelFamily::Idm,
            BoundModel::LaneChange(_) => ModelFamily::Mobil,
            BoundModel::Flow(_) => ModelFamily::Lwr,
        }
    }

    /// Bind a registered native variant to a parameter vector.
    pub fn from_native(variant: &'static ModelVariant, params: &[f64]) -> Result<BoundModel> {
        if params.len() != variant.param_count() {
            return Err(Error::Params(format!(
                "{}/{} expects {} parameters {:?}, got {}",
                variant.family,
                variant.name,
                variant.param_count(),
                variant.param_names,
                params.len()
            )));
        }
        Ok(match variant.function {
            VariantFn::Accel(f) => {
                let p = IdmParams::from_slice(params)?;
                BoundModel::CarFollow(Box::new(move |s, sv, lv| Ok(f(&p, s, sv, lv))))
            }
            VariantFn::Decide(f) => {
                let p = MobilParams::from_slice(params)?;
                BoundModel::LaneChange(Box::new(move |batch| Ok(f(&p, batch))))
            }
            VariantFn::Speed(f) => {
                let p = LwrParams::from_slice(params)?;
                BoundModel::Flow(Box::new(move |batch| {
                    Ok(batch.iter().map(|s| f(&p, s.density)).collect())
                }))
            }
        })
    }

    /// Bind a DSL candidate to a parameter vector (canonical then extras).
    pub fn from_candidate(candidate: &CandidateModel, params: &[f64]) -> Result<BoundModel> {
        let compiled = dsl::compile_candidate(candidate)?;
        if params.len() != compiled.param_count() {
            return Err(Error::Params(format!(
                "candidate expects {} parameters, got {}",
                compiled.param_count(),
                params.len()
            )));
        }
        let params: Vec<f64> = params.to_vec();
        Ok(match candidate.family {
            ModelFamily::Idm => BoundModel::CarFollow(Box::new(move |s, sv, lv| {
                let out = compiled.eval_rows(&params, &[vec![s, sv, lv]])?;
                Ok(out[0])
            })),
            ModelFamily::Mobil => BoundModel::LaneChange(Box::new(move |batch| {
                let rows: Vec<Vec<f64>> = batch.iter().map(|s| s.features().to_vec()).collect();
                let scores = compiled.eval_rows(&params, &rows)?;
                Ok(scores
                    .iter()
                    .map(|&y| u8::from(y > DECISION_SCORE_THRESHOLD))
                    .collect())
            })),
            ModelFamily::Lwr => BoundModel::Flow(Box::new(move |batch| {
                let rows: Vec<Vec<f64>> = batch.iter().map(|s| vec![s.density]).collect();
                compiled.eval_rows(&params, &rows)
            })),
        })
    }
}

// ---------------------------------------------------------------------------
// Forward simulation
// ---------------------------------------------------------------------------

/// Simulated spacing and speed trajectories, same length as the source event.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub spacing: Vec<f64>,
    pub speed: Vec<f64>,
}

/// Forward-simulate one car-following event under a model.
///
/// Initial conditions come from the observation; each step applies the model
/// acceleration to the simulated state while the leader follows its recorded
/// speed:
///
/// ```text
/// v[t+1] = max(0, v[t] + a·dt)
/// s[t+1] = s[t] + lv_obs[t]·dt − (v[t] + v[t+1])/2 · dt
/// ```
///
/// A non-finite acceleration aborts with an error naming the event and step.
pub fn simulate_event(
    accel: &dyn Fn(f64, f64, f64) -> Result<f64>,
    event: &CarFollowEvent,
) -> Result<SimTrace> {
    let n = event.steps.len();
    let mut spacing = Vec::with_capacity(n);
    let mut speed = Vec::with_capacity(n);
    spacing.push(event.steps[0].spacing_m);
    speed.push(event.steps[0].sv_speed_mps);

    for t in 0..n - 1 {
        let lv = event.steps[t].lv_speed_mps;
        let a = accel(spacing[t], speed[t], lv)?;
        if !a.is_finite() {
            return Err(Error::NonFiniteAccel {
                event: event.event_id.clone(),
                step: t,
            });
        }
        let v_next = (speed[t] + a * TIME_STEP_S).max(0.0);
        let s_next = spacing[t] + lv * TIME_STEP_S - (speed[t] + v_next) / 2.0 * TIME_STEP_S;
        speed.push(v_next);
        spacing.push(s_next);
    }
    Ok(SimTrace { spacing, speed })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLoss {
    pub scenario: String,
    pub loss: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    pub confusion: ConfusionCounts,
}

/// Evaluation outcome for one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub family: ModelFamily,
    pub total_loss: f64,
    /// Stratified losses: driving states for car-following, density buckets
    /// for flow. Empty for lane-change models. Counts sum to the number of
    /// evaluated points.
    pub per_scenario: Vec<ScenarioLoss>,
    /// Present exactly for lane-change models.
    pub classification: Option<Classification>,
    /// Filled in by callers comparing against a baseline.
    pub improvement_rate_pct: Option<f64>,
}

impl EvalReport {
    pub fn scenario(&self, label: &str) -> Option<&ScenarioLoss> {
        self.per_scenario.iter().find(|s| s.scenario == label)
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Confusion counts and derived metrics for binary decisions. Degenerate
/// ratios (0/0) are defined as 0.
pub fn classification_metrics(predictions: &[u8], labels: &[u8]) -> Result<Classification> {
    if predictions.len() != labels.len() {
        return Err(Error::Domain(format!(
            "predictions ({}) and labels ({}) differ in length",
            predictions.len(),
            labels.len()
        )));
    }
    let mut c = ConfusionCounts { tp: 0, tn: 0, fp: 0, fn_: 0 };
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p != 0, l != 0) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(metrics_from_confusion(c))
}

/// Derive precision/recall/F1/specificity from confusion counts.
pub fn metrics_from_confusion(c: ConfusionCounts) -> Classification {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let specificity = ratio(c.tn, c.tn + c.fp);
    Classification { precision, recall, f1, specificity, confusion: c }
}

/// Lane-change loss: `1 − F1`.
pub fn lanechange_loss(f1: f64) -> f64 {
    1.0 - f1
}

/// Relative improvement of `new_loss` over `base_loss`, in percent. The
/// baseline must be a positive finite loss.
pub fn improvement_rate(base_loss: f64, new_loss: f64) -> Result<f64> {
    if !base_loss.is_finite() || base_loss <= 0.0 {
        return Err(Error::Domain(format!(
            "improvement rate needs a positive finite baseline loss, got {base_loss}"
        )));
    }
    if !new_loss.is_finite() {
        return Err(Error::Domain(format!(
            "improvement rate needs a finite new loss, got {new_loss}"
        )));
    }
    Ok(100.0 * (base_loss - new_loss) / base_loss)
}

// ---------------------------------------------------------------------------
// Family evaluations
// ---------------------------------------------------------------------------

/// Total spacing MAE across all events and steps (the calibration objective).
pub fn carfollow_total_mae(
    accel: &dyn Fn(f64, f64, f64) -> Result<f64>,
    events: &[CarFollowEvent],
) -> Result<f64> {
    if events.is_empty() {
        return Err(Error::Domain("no car-following events to evaluate".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for event in events {
        let trace = simulate_event(accel, event)?;
        for (sim, obs) in trace.spacing.iter().zip(&event.steps) {
            total += (sim - obs.spacing_m).abs();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Evaluate a car-following model: total spacing MAE plus per-driving-state
/// MAEs. States are classified on the observed trajectories.
pub fn evaluate_carfollow(
    accel: &dyn Fn(f64, f64, f64) -> Result<f64>,
    events: &[CarFollowEvent],
    thresholds: &StateThresholds,
) -> Result<EvalReport> {
    if events.is_empty() {
        return Err(Error::Domain("no car-following events to evaluate".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    let mut state_sum = [0.0f64; 4];
    let mut state_count = [0usize; 4];

    for event in events {
        let trace = simulate_event(accel, event)?;
        let states = classify_steps(event, thresholds);
        for ((sim, obs), state) in trace.spacing.iter().zip(&event.steps).zip(&states) {
            let err = (sim - obs.spacing_m).abs();
            total += err;
            count += 1;
            let idx = DrivingState::ALL.iter().position(|s| s == state).unwrap();
            state_sum[idx] += err;
            state_count[idx] += 1;
        }
    }

    let per_scenario = DrivingState::ALL
        .iter()
        .enumerate()
        .filter(|(i, _)| state_count[*i] > 0)
        .map(|(i, state)| ScenarioLoss {
            scenario: state.label().to_string(),
            loss: state_sum[i] / state_count[i] as f64,
            count: state_count[i],
        })
        .collect();

    Ok(EvalReport {
        family: ModelFamily::Idm,
        total_loss: total / count as f64,
        per_scenario,
        classification: None,
        improvement_rate_pct: None,
    })
}

/// Evaluate a lane-change model: `1 − F1` with the full classification block.
pub fn evaluate_lanechange(
    decide: &dyn Fn(&[LaneChangeSample]) -> Result<Vec<u8>>,
    samples: &[LaneChangeSample],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Domain("no lane-change samples to evaluate".into()));
    }
    let predictions = decide(samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let classification = classification_metrics(&predictions, &labels)?;
    Ok(EvalReport {
        family: ModelFamily::Mobil,
        total_loss: lanechange_loss(classification.f1),
        per_scenario: Vec::new(),
        classification: Some(classification),
        improvement_rate_pct: None,
    })
}

/// Evaluate a flow model: total speed MAE plus per-density-bucket MAEs.
pub fn evaluate_flow(
    flow: &dyn Fn(&[FlowSample]) -> Result<Vec<f64>>,
    samples: &[FlowSample],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Domain("no flow samples to evaluate".into()));
    }
    let predictions = flow(samples)?;
    let mut total = 0.0;
    let mut bucket_sum = [0.0f64; 3];
    let mut bucket_count = [0usize; 3];
    for (pred, sample) in predictions.iter().zip(samples) {
        let err = (pred - sample.speed).abs();
        total += err;
        let idx = DensityBucket::ALL
            .iter()
            .position(|b| *b == DensityBucket::from_density(sample.density))
            .unwrap();
        bucket_sum[idx] += err;
        bucket_count[idx] += 1;
    }

    let per_scenario = DensityBucket::ALL
        .iter()
        .enumerate()
        .filter(|(i, _)| bucket_count[*i] > 0)
        .map(|(i, bucket)| ScenarioLoss {
            scenario: bucket.label().to_string(),
            loss: bucket_sum[i] / bucket_count[i] as f64,
            count: bucket_count[i],
        })
        .collect();

    Ok(EvalReport {
        family: ModelFamily::Lwr,
        total_loss: total / samples.len() as f64,
        per_scenario,
        classification: None,
        improvement_rate_pct: None,
    })
}

/// Evaluate any bound model on a matching dataset.
pub fn evaluate(
    model: &BoundModel,
    dataset: &Dataset,
    thresholds: &StateThresholds,
) -> Result<EvalReport> {
    match (model, dataset) {
        (BoundModel::CarFollow(f), Dataset::CarFollow(events)) => {
            evaluate_carfollow(f.as_ref(), events, thresholds)
        }
        (BoundModel::LaneChange(f), Dataset::LaneChange(samples)) => {
            evaluate_lanechange(f.as_ref(), samples)
        }
        (BoundModel::Flow(f), Dataset::Flow(samples)) => evaluate_flow(f.as_ref(), samples),
        (model, dataset) => Err(Error::Domain(format!(
            "model family {} cannot be evaluated on a {} dataset",
            model.family(),
            dataset.family()
        ))),
    }
}

/// The calibration objective: the family's scalar loss on a dataset.
pub fn loss(model: &BoundModel, dataset: &Dataset, thresholds: &StateThresholds) -> Result<f64> {
    match (model, dataset) {
        (BoundModel::CarFollow(f), Dataset::CarFollow(events)) => {
            carfollow_total_mae(f.as_ref(), events)
        }
        _ => evaluate(model, dataset, thresholds).map(|r| r.total_loss),
    }
}
