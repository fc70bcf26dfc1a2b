//! The iterative model-improvement loop.
//!
//! One *trial* calibrates and evaluates a baseline model, then repeatedly
//! asks a chat model to (1) propose an improvement idea grounded in retrieved
//! passages, (2) write a candidate model in the sandboxed DSL with a bounded
//! debugging loop, (3) calibrate and evaluate the candidate, and (4) analyze
//! the outcome into feedback for the next round — until the target
//! improvement rate is reached or the iteration budget runs out. Every step
//! is recorded as a structured event so a trial is fully replayable.

pub mod prompts;
pub mod retrieval;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_model, CalibrationResult, GaConfig, ModelSpec};
use crate::datasets::StateThresholds;
use crate::dsl::{
    extract_dsl_block, parse_candidate, reference, render_candidate, validate_candidate,
    CandidateModel,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, improvement_rate, Dataset, EvalReport};
use crate::llm::{with_retry, ChatBackend, ChatMessage, ChatRequest, RetryPolicy};
use crate::models::{get_variant, ModelFamily, ModelVariant};
use crate::report;

use prompts::{PromptSet, TemplateName};
use retrieval::{format_passages, CorpusIndex};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Everything a trial needs to be reproducible (given the same dataset,
/// corpus, templates, and backend responses).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub family: ModelFamily,
    /// Registered native variant to calibrate as the baseline.
    pub baseline_variant: String,
    /// Chat model identifier passed through to the backend.
    pub model_name: String,
    /// A candidate whose validation improvement rate (%) reaches this value
    /// ends the trial successfully.
    pub target_improvement_pct: f64,
    pub max_iterations: u32,
    /// Code-generation attempts per iteration (first try plus refinements).
    pub debug_max_attempts: u32,
    /// Share of the dataset used for calibration; the rest validates.
    pub calibration_fraction: f64,
    pub split_seed: u64,
    /// Driving-state stratification thresholds for car-following reports.
    #[serde(default)]
    pub thresholds: StateThresholds,
    pub ga: GaConfig,
    pub max_tokens: u32,
    pub idea_temperature: f64,
    pub code_temperature: f64,
    pub retry: RetryPolicy,
    /// Passages retrieved from the corpus per idea prompt.
    pub retrieval_k: usize,
}

/// Default improvement target per family.
pub fn default_target_pct(family: ModelFamily) -> f64 {
    match family {
        ModelFamily::Idm => 25.0,
        ModelFamily::Mobil => 50.0,
        ModelFamily::Lwr => 50.0,
    }
}

impl TrialConfig {
    pub fn for_family(family: ModelFamily) -> TrialConfig {
        TrialConfig {
            family,
            baseline_variant: "baseline".to_string(),
            model_name: "gpt-4o".to_string(),
            target_improvement_pct: default_target_pct(family),
            max_iterations: 10,
            debug_max_attempts: 3,
            calibration_fraction: 0.2,
            split_seed: 42,
            thresholds: StateThresholds::default(),
            ga: GaConfig::default(),
            max_tokens: 2048,
            idea_temperature: crate::llm::IDEA_TEMPERATURE,
            code_temperature: crate::llm::CODE_TEMPERATURE,
            retry: RetryPolicy::default(),
            retrieval_k: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.baseline_variant.is_empty() {
            return Err(Error::Config("baseline_variant must not be empty".into()));
        }
        if self.model_name.is_empty() {
            return Err(Error::Config("model_name must not be empty".into()));
        }
        if !(self.target_improvement_pct.is_finite() && self.target_improvement_pct > 0.0) {
            return Err(Error::Config(format!(
                "target_improvement_pct must be positive, got {}",
                self.target_improvement_pct
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.debug_max_attempts == 0 {
            return Err(Error::Config("debug_max_attempts must be at least 1".into()));
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(Error::Config(format!(
                "calibration_fraction must be in (0, 1), got {}",
                self.calibration_fraction
            )));
        }
        for (name, temp) in [
            ("idea_temperature", self.idea_temperature),
            ("code_temperature", self.code_temperature),
        ] {
            if !(0.0..=2.0).contains(&temp) {
                return Err(Error::Config(format!("{name} must be in [0, 2], got {temp}")));
            }
        }
        self.ga.validate()
    }
}

// ---------------------------------------------------------------------------
// Trial events and logs
// ---------------------------------------------------------------------------

/// How one iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterationOutcome {
    /// Candidate reached the target improvement rate.
    Success,
    /// Candidate evaluated but fell short of the target.
    BelowTarget,
    /// No valid candidate within the debugging budget.
    CodegenFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    ImprovedModelFound,
    Exhausted,
}

/// A prompt exactly as sent to the backend, for auditability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPrompt {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub idea_text: String,
    /// Every prompt sent this iteration, in order.
    pub prompts: Vec<StoredPrompt>,
    /// Canonical rendering of the accepted candidate, if any.
    pub candidate_source: Option<String>,
    pub codegen_attempts: u32,
    /// Diagnostics from the last failed attempt when no candidate was
    /// accepted.
    pub codegen_failure: Option<String>,
    pub calibration: Option<CalibrationResult>,
    pub report: Option<EvalReport>,
    pub improvement_rate_pct: Option<f64>,
    /// Analyzer output (or generated-code diagnostics when code generation
    /// failed); feeds the next iteration's idea prompt.
    pub analysis_text: String,
    pub outcome: IterationOutcome,
}

/// One line of a trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TrialEvent {
    Config {
        config: TrialConfig,
    },
    Baseline {
        variant: String,
        params: Vec<f64>,
        report: EvalReport,
    },
    Iteration {
        record: IterationRecord,
    },
    Status {
        status: TrialStatus,
        success_factors: Option<String>,
    },
}

/// Receives trial events as they happen.
pub trait TrialSink {
    fn record(&mut self, event: &TrialEvent) -> Result<()>;
}

/// Collects events in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub events: Vec<TrialEvent>,
}

impl TrialSink for MemorySink {
    fn record(&mut self, event: &TrialEvent) -> Result<()> {
        self.events.push(event.clone());
        Ok(())
    }
}

/// Appends one JSON line per event, flushing after each so a crashed trial
/// still leaves a readable prefix.
#[derive(Debug)]
pub struct JsonlSink {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<JsonlSink> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(JsonlSink { path: path.to_path_buf(), writer: BufWriter::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl TrialSink for JsonlSink {
    fn record(&mut self, event: &TrialEvent) -> Result<()> {
        let line = serde_json::to_string(event)?;
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Read a JSONL trial log back into events.
pub fn read_trial_log(path: &Path) -> Result<Vec<TrialEvent>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: TrialEvent = serde_json::from_str(&line).map_err(|e| {
            Error::Schema {
                path: path.to_path_buf(),
                message: format!("line {}: bad trial event: {e}", i + 1),
            }
        })?;
        events.push(event);
    }
    Ok(events)
}

/// A fully assembled trial, reconstructed from its event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub config: TrialConfig,
    pub baseline_variant: String,
    pub baseline_params: Vec<f64>,
    pub baseline_report: EvalReport,
    pub iterations: Vec<IterationRecord>,
    /// `None` when the log is a prefix of an interrupted trial.
    pub status: Option<TrialStatus>,
    pub success_factors: Option<String>,
}

impl TrialLog {
    pub fn from_events(events: Vec<TrialEvent>) -> Result<TrialLog> {
        let mut iter = events.into_iter();
        let config = match iter.next() {
            Some(TrialEvent::Config { config }) => config,
            Some(other) => {
                return Err(Error::TrialLog(format!(
                    "trial log must start with a config event, got {other:?}"
                )))
            }
            None => return Err(Error::TrialLog("trial log is empty".into())),
        };
        let (baseline_variant, baseline_params, baseline_report) = match iter.next() {
            Some(TrialEvent::Baseline { variant, params, report }) => (variant, params, report),
            other => {
                return Err(Error::TrialLog(format!(
                    "expected a baseline event after config, got {other:?}"
                )))
            }
        };
        let mut iterations = Vec::new();
        let mut status = None;
        let mut success_factors = None;
        for event in iter {
            match event {
                TrialEvent::Iteration { record } => {
                    if status.is_some() {
                        return Err(Error::TrialLog(
                            "iteration event after the status event".into(),
                        ));
                    }
                    iterations.push(record);
                }
                TrialEvent::Status { status: s, success_factors: f } => {
                    if status.is_some() {
                        return Err(Error::TrialLog("duplicate status event".into()));
                    }
                    status = Some(s);
                    success_factors = f;
                }
                other => {
                    return Err(Error::TrialLog(format!("unexpected trial event {other:?}")));
                }
            }
        }
        Ok(TrialLog {
            config,
            baseline_variant,
            baseline_params,
            baseline_report,
            iterations,
            status,
            success_factors,
        })
    }
}

// ---------------------------------------------------------------------------
// Analyzer feedback
// ---------------------------------------------------------------------------

/// Structured feedback parsed out of an analysis response.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerFeedback {
    pub reasons: String,
    pub suggestions: String,
    pub questions: String,
    pub raw: String,
}

fn heading_section(line: &str) -> Option<(usize, &str)> {
    let trimmed = line.trim().trim_start_matches(['*', '#', '-', '>']).trim_start();
    for (idx, token) in ["reasons:", "suggestions:", "new questions:"].iter().enumerate() {
        if trimmed.len() >= token.len() && trimmed[..token.len()].eq_ignore_ascii_case(token) {
            return Some((idx, trimmed[token.len()..].trim_matches(['*', ' '])));
        }
    }
    None
}

/// Split an analysis response on its `Reasons:` / `Suggestions:` /
/// `New questions:` headings (tolerating markdown emphasis and casing).
/// A response with no recognizable headings becomes, in full, the
/// suggestions — feedback is never silently dropped.
pub fn parse_feedback(text: &str) -> AnalyzerFeedback {
    let mut sections: [Vec<&str>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut current = None;
    for line in text.lines() {
        if let Some((idx, rest)) = heading_section(line) {
            current = Some(idx);
            if !rest.is_empty() {
                sections[idx].push(rest);
            }
        } else if let Some(idx) = current {
            sections[idx].push(line);
        }
    }
    let joined = |lines: &[&str]| lines.join("\n").trim().to_string();
    let mut feedback = AnalyzerFeedback {
        reasons: joined(&sections[0]),
        suggestions: joined(&sections[1]),
        questions: joined(&sections[2]),
        raw: text.trim().to_string(),
    };
    if current.is_none() {
        feedback.suggestions = feedback.raw.clone();
    }
    feedback
}

// ---------------------------------------------------------------------------
// Prompt assembly and chat steps
// ---------------------------------------------------------------------------

struct TrialContext<'a> {
    config: &'a TrialConfig,
    templates: &'a PromptSet,
    corpus: &'a CorpusIndex,
}

fn chat_text(
    backend: &mut dyn ChatBackend,
    config: &TrialConfig,
    prompt: &str,
    temperature: f64,
) -> Result<String> {
    let request = ChatRequest {
        model: config.model_name.clone(),
        messages: vec![ChatMessage::user(prompt)],
        temperature,
        max_tokens: config.max_tokens,
    };
    with_retry(backend, &request, &config.retry).map(|r| r.content)
}

/// Fixed per-family corpus query so retrieval is deterministic.
fn retrieval_query(family: ModelFamily) -> &'static str {
    match family {
        ModelFamily::Idm => {
            "car following model acceleration spacing headway driver behavior"
        }
        ModelFamily::Mobil => "lane change decision incentive safety gap acceptance",
        ModelFamily::Lwr => "traffic flow fundamental diagram density speed relation",
    }
}

fn numbered_ideas(ideas: &[String]) -> String {
    ideas
        .iter()
        .enumerate()
        .map(|(i, idea)| format!("Idea {}: {}", i + 1, idea))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn generate_idea(
    backend: &mut dyn ChatBackend,
    ctx: &TrialContext,
    previous_ideas: &[String],
    feedback: Option<&AnalyzerFeedback>,
) -> Result<(String, StoredPrompt)> {
    let config = ctx.config;
    let display = config.family.display_name();
    let passages = ctx.corpus.retrieve(retrieval_query(config.family), config.retrieval_k);
    let source = format_passages(&passages);

    let (name, prompt) = match feedback {
        None => {
            let name = TemplateName::IdeaGeneration;
            let prompt = ctx
                .templates
                .get(name)
                .render(&[("model_name", display), ("source", &source)])?;
            (name, prompt)
        }
        Some(feedback) => {
            let name = TemplateName::IdeaRefinement;
            let previous = numbered_ideas(previous_ideas);
            let prompt = ctx.templates.get(name).render(&[
                ("model_name", display),
                ("previous_ideas", &previous),
                ("suggestions", &feedback.suggestions),
                ("questions", &feedback.questions),
                ("source", &source),
            ])?;
            (name, prompt)
        }
    };
    let text = chat_text(backend, config, &prompt, config.idea_temperature)?;
    Ok((
        text.trim().to_string(),
        StoredPrompt { name: name.name().to_string(), text: prompt },
    ))
}

/// Result of the bounded code-generation loop.
pub enum CandidateOutcome {
    Valid { candidate: CandidateModel, attempts: u32, prompts: Vec<StoredPrompt> },
    Failed { attempts: u32, diagnostics: String, prompts: Vec<StoredPrompt> },
}

fn check_candidate(extracted: &str, family: ModelFamily) -> std::result::Result<CandidateModel, String> {
    let candidate = match parse_candidate(extracted) {
        Ok(c) => c,
        Err(e) => return Err(e.to_string()),
    };
    if candidate.family != family {
        return Err(format!(
            "the candidate declares family '{}' but this trial improves '{}'",
            candidate.family, family
        ));
    }
    let diagnostics = validate_candidate(&candidate);
    if diagnostics.is_ok() {
        Ok(candidate)
    } else {
        Err(diagnostics.to_string())
    }
}

fn generate_candidate(
    backend: &mut dyn ChatBackend,
    ctx: &TrialContext,
    idea: &str,
    baseline_info: &str,
) -> Result<CandidateOutcome> {
    let config = ctx.config;
    let display = config.family.display_name();
    let mut prompts = Vec::new();
    let mut last_failure = String::new();
    let mut last_source = String::new();

    for attempt in 1..=config.debug_max_attempts {
        let (name, prompt) = if attempt == 1 {
            let name = TemplateName::CodeGeneration;
            let prompt = ctx.templates.get(name).render(&[
                ("model_name", display),
                ("source", idea),
                ("baseline_info", baseline_info),
            ])?;
            (name, prompt)
        } else {
            let name = TemplateName::CodeRefinement;
            let prompt = ctx.templates.get(name).render(&[
                ("model_name", display),
                ("source", &last_source),
                ("errors", &last_failure),
            ])?;
            (name, prompt)
        };
        let response = chat_text(backend, config, &prompt, config.code_temperature)?;
        prompts.push(StoredPrompt { name: name.name().to_string(), text: prompt });

        let extracted =
            extract_dsl_block(&response).unwrap_or_else(|| response.trim().to_string());
        last_source = extracted.clone();
        match check_candidate(&extracted, config.family) {
            Ok(candidate) => {
                return Ok(CandidateOutcome::Valid { candidate, attempts: attempt, prompts })
            }
            Err(failure) => last_failure = failure,
        }
    }
    Ok(CandidateOutcome::Failed {
        attempts: config.debug_max_attempts,
        diagnostics: last_failure,
        prompts,
    })
}

fn analyze(
    backend: &mut dyn ChatBackend,
    ctx: &TrialContext,
    success: bool,
    baseline_info: &str,
    history: &str,
) -> Result<(AnalyzerFeedback, StoredPrompt)> {
    let config = ctx.config;
    let name = if success { TemplateName::AnalysisSuccess } else { TemplateName::AnalysisFailure };
    let prompt = ctx.templates.get(name).render(&[
        ("model_name", config.family.display_name()),
        ("baseline_info", baseline_info),
        ("history", history),
    ])?;
    let text = chat_text(backend, config, &prompt, config.idea_temperature)?;
    Ok((parse_feedback(&text), StoredPrompt { name: name.name().to_string(), text: prompt }))
}

/// What the code-generation prompt gets to know about the baseline: family,
/// interface, calibrated parameters, definition, and validation performance.
fn baseline_info_text(
    config: &TrialConfig,
    variant: &ModelVariant,
    params: &[f64],
    report: &EvalReport,
) -> String {
    let family = config.family;
    let named: Vec<String> = variant
        .param_names
        .iter()
        .zip(params)
        .map(|(name, value)| format!("{name} = {value}"))
        .collect();
    let mut out = format!(
        "Model family: {} ({})\nOutput per input row: {}\nInputs: {}\nCalibrated baseline parameters: {}\n",
        family.display_name(),
        family.name(),
        family.output_role(),
        family.input_names().join(", "),
        named.join(", "),
    );
    if let Some(definition) = reference::reference_source(family, variant.name) {
        out.push_str("Baseline definition:\n");
        out.push_str(&definition);
        out.push('\n');
    }
    out.push_str(&report::format_loss_block(report, true));
    out
}

// ---------------------------------------------------------------------------
// The trial loop
// ---------------------------------------------------------------------------

/// Run one improvement trial end to end, emitting events into `sink`.
pub fn run_trial(
    config: &TrialConfig,
    dataset: &Dataset,
    corpus: &CorpusIndex,
    templates: &PromptSet,
    backend: &mut dyn ChatBackend,
    sink: &mut dyn TrialSink,
) -> Result<TrialLog> {
    config.validate()?;
    if config.family != dataset.family() {
        return Err(Error::Domain(format!(
            "trial improves the {} family but the dataset holds {} data",
            config.family,
            dataset.family()
        )));
    }
    let thresholds = config.thresholds;
    sink.record(&TrialEvent::Config { config: config.clone() })?;

    let (calibration_set, validation_set) =
        dataset.split(config.calibration_fraction, config.split_seed)?;
    let variant = get_variant(config.family, &config.baseline_variant)?;
    let spec = ModelSpec::Native(variant);
    let bounds = spec.default_bounds()?;
    let baseline_cal = calibrate_model(&spec, &calibration_set, &bounds, &config.ga)?;
    let baseline_bound = spec.bind(&baseline_cal.best_params)?;
    let baseline_report = evaluate(&baseline_bound, &validation_set, &thresholds)?;
    sink.record(&TrialEvent::Baseline {
        variant: variant.name.to_string(),
        params: baseline_cal.best_params.clone(),
        report: baseline_report.clone(),
    })?;

    let baseline_info = baseline_info_text(config, variant, &baseline_cal.best_params, &baseline_report);
    let ctx = TrialContext { config, templates, corpus };

    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut previous_ideas: Vec<String> = Vec::new();
    let mut feedback: Option<AnalyzerFeedback> = None;
    let mut status = TrialStatus::Exhausted;
    let mut success_factors: Option<String> = None;

    for index in 0..config.max_iterations {
        let mut prompts: Vec<StoredPrompt> = Vec::new();
        let (idea, idea_prompt) =
            generate_idea(backend, &ctx, &previous_ideas, feedback.as_ref())?;
        prompts.push(idea_prompt);
        previous_ideas.push(idea.clone());

        let record = match generate_candidate(backend, &ctx, &idea, &baseline_info)? {
            CandidateOutcome::Failed { attempts, diagnostics, prompts: code_prompts } => {
                prompts.extend(code_prompts);
                let analysis_text = format!(
                    "No valid candidate was produced; fix these problems first:\n{diagnostics}"
                );
                feedback = Some(AnalyzerFeedback {
                    reasons: String::new(),
                    suggestions: analysis_text.clone(),
                    questions: String::new(),
                    raw: analysis_text.clone(),
                });
                IterationRecord {
                    index,
                    idea_text: idea,
                    prompts,
                    candidate_source: None,
                    codegen_attempts: attempts,
                    codegen_failure: Some(diagnostics),
                    calibration: None,
                    report: None,
                    improvement_rate_pct: None,
                    analysis_text,
                    outcome: IterationOutcome::CodegenFailed,
                }
            }
            CandidateOutcome::Valid { candidate, attempts, prompts: code_prompts } => {
                prompts.extend(code_prompts);
                let source = render_candidate(&candidate);
                let cand_spec = ModelSpec::Candidate(&candidate);
                let cand_bounds = cand_spec.default_bounds()?;
                let calibration =
                    calibrate_model(&cand_spec, &calibration_set, &cand_bounds, &config.ga)?;
                let bound = cand_spec.bind(&calibration.best_params)?;
                let mut cand_report = evaluate(&bound, &validation_set, &thresholds)?;
                let rate = improvement_rate(baseline_report.total_loss, cand_report.total_loss)?;
                cand_report.improvement_rate_pct = Some(rate);
                let success = rate >= config.target_improvement_pct;

                let mut record = IterationRecord {
                    index,
                    idea_text: idea,
                    prompts: Vec::new(),
                    candidate_source: Some(source),
                    codegen_attempts: attempts,
                    codegen_failure: None,
                    calibration: Some(calibration),
                    report: Some(cand_report),
                    improvement_rate_pct: Some(rate),
                    analysis_text: String::new(),
                    outcome: if success {
                        IterationOutcome::Success
                    } else {
                        IterationOutcome::BelowTarget
                    },
                };

                // Success analysis looks at the winning iteration alone;
                // failure analysis gets up to the last three iterations of
                // context.
                let history = if success {
                    report::render_iteration(&record, baseline_report.total_loss)
                } else {
                    let mut parts: Vec<String> = iterations
                        .iter()
                        .rev()
                        .take(2)
                        .rev()
                        .map(|r| report::render_iteration(r, baseline_report.total_loss))
                        .collect();
                    parts.push(report::render_iteration(&record, baseline_report.total_loss));
                    parts.join("\n")
                };
                let (parsed, analysis_prompt) =
                    analyze(backend, &ctx, success, &baseline_info, &history)?;
                prompts.push(analysis_prompt);
                record.prompts = prompts;
                record.analysis_text = parsed.raw.clone();
                feedback = Some(parsed);
                record
            }
        };

        sink.record(&TrialEvent::Iteration { record: record.clone() })?;
        let succeeded = record.outcome == IterationOutcome::Success;
        if succeeded {
            status = TrialStatus::ImprovedModelFound;
            success_factors = Some(record.analysis_text.clone());
        }
        iterations.push(record);
        if succeeded {
            break;
        }
    }

    sink.record(&TrialEvent::Status { status, success_factors: success_factors.clone() })?;
    Ok(TrialLog {
        config: config.clone(),
        baseline_variant: variant.name.to_string(),
        baseline_params: baseline_cal.best_params,
        baseline_report,
        iterations,
        status: Some(status),
        success_factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::FlowSample;
    use crate::llm::ReplayBackend;
    use crate::models::sigmoid;

    fn logistic_flow_dataset(n: usize) -> Dataset {
        let samples: Vec<FlowSample> = (0..n)
            .map(|i| {
                let density = i as f64 / (n - 1) as f64;
                let speed = 1.0 * (1.0 - sigmoid(6.0 * (density - 0.5)));
                FlowSample { density, speed }
            })
            .collect();
        Dataset::Flow(samples)
    }

    fn small_config() -> TrialConfig {
        let mut config = TrialConfig::for_family(ModelFamily::Lwr);
        config.target_improvement_pct = 30.0;
        config.max_iterations = 3;
        config.ga = GaConfig {
            population_size: 24,
            generations: 40,
            seed: 7,
            ..GaConfig::default()
        };
        config
    }

    fn corpus() -> CorpusIndex {
        CorpusIndex::build(vec![
            (
                "flow-notes.txt".to_string(),
                "Speed-density relations saturate near jam density; logistic transitions fit \
                 observed traffic flow better than linear ones."
                    .to_string(),
            ),
            (
                "unrelated.txt".to_string(),
                "Grocery lists and recipes have nothing to do with traffic.".to_string(),
            ),
        ])
    }

    fn logistic_candidate_reply() -> String {
        format!("Here is the model.\n```dsl\n{}\n```\n", crate::dsl::reference::lwr_improved_final())
    }

    #[test]
    fn trial_succeeds_with_scripted_backend() {
        let dataset = logistic_flow_dataset(60);
        let config = small_config();
        let mut backend = ReplayBackend::from_responses(vec![
            "Use a logistic density-speed transition instead of a linear drop.".to_string(),
            logistic_candidate_reply(),
            "Reasons:\nThe logistic shape matches saturation.\nSuggestions:\nKeep the \
             steepness parameter.\nNew questions:\nHow does it behave near zero density?"
                .to_string(),
        ]);
        let mut sink = MemorySink::default();
        let log = run_trial(
            &config,
            &dataset,
            &corpus(),
            &PromptSet::defaults(),
            &mut backend,
            &mut sink,
        )
        .unwrap();

        assert_eq!(log.status, Some(TrialStatus::ImprovedModelFound));
        assert_eq!(log.iterations.len(), 1);
        let record = &log.iterations[0];
        assert_eq!(record.outcome, IterationOutcome::Success);
        assert_eq!(record.codegen_attempts, 1);
        assert!(record.improvement_rate_pct.unwrap() >= config.target_improvement_pct);
        assert!(record.candidate_source.as_ref().unwrap().contains("sigmoid"));
        assert!(log.success_factors.as_ref().unwrap().contains("logistic shape"));
        // prompts: idea, code, analysis
        assert_eq!(record.prompts.len(), 3);
        assert_eq!(record.prompts[0].name, "idea-generation");
        assert_eq!(record.prompts[1].name, "code-generation");
        assert_eq!(record.prompts[2].name, "analysis-success");
        // The idea prompt embedded the retrieved passage, not the unrelated one,
        // at rank 1.
        assert!(record.prompts[0].text.contains("Passage 1 (flow-notes.txt)"));
        // The code prompt embedded the baseline definition and calibrated values.
        assert!(record.prompts[1].text.contains("Baseline definition:"));
        assert!(record.prompts[1].text.contains("(defmodel lwr"));
        assert!(record.prompts[1].text.contains("Base model loss:"));

        // Event stream shape.
        assert_eq!(sink.events.len(), 4);
        assert!(matches!(sink.events[0], TrialEvent::Config { .. }));
        assert!(matches!(sink.events[1], TrialEvent::Baseline { .. }));
        assert!(matches!(sink.events[2], TrialEvent::Iteration { .. }));
        assert!(matches!(sink.events[3], TrialEvent::Status { .. }));
        let rebuilt = TrialLog::from_events(sink.events.clone()).unwrap();
        assert_eq!(rebuilt, log);
    }

    #[test]
    fn codegen_failure_feeds_diagnostics_into_next_idea_prompt() {
        let dataset = logistic_flow_dataset(60);
        let config = small_config();
        let bad = "```dsl\n(defmodel lwr (extra-params) (input densty))\n```".to_string();
        let mut backend = ReplayBackend::from_responses(vec![
            "First idea.".to_string(),
            bad.clone(),
            bad.clone(),
            bad,
            "Second idea: logistic transition.".to_string(),
            logistic_candidate_reply(),
            "Suggestions:\nNothing further.".to_string(),
        ]);
        let mut sink = MemorySink::default();
        let log = run_trial(
            &config,
            &dataset,
            &corpus(),
            &PromptSet::defaults(),
            &mut backend,
            &mut sink,
        )
        .unwrap();

        assert_eq!(log.iterations.len(), 2);
        let failed = &log.iterations[0];
        assert_eq!(failed.outcome, IterationOutcome::CodegenFailed);
        assert_eq!(failed.codegen_attempts, config.debug_max_attempts);
        assert!(failed.candidate_source.is_none());
        assert!(failed.codegen_failure.as_ref().unwrap().contains("densty"));
        // idea + 3 code attempts, no analysis call
        assert_eq!(failed.prompts.len(), 4);
        assert_eq!(failed.prompts[1].name, "code-generation");
        assert_eq!(failed.prompts[2].name, "code-refinement");
        assert!(failed.prompts[2].text.contains("densty"));

        let second = &log.iterations[1];
        assert_eq!(second.outcome, IterationOutcome::Success);
        assert_eq!(second.prompts[0].name, "idea-refinement");
        // The diagnostics from the failed iteration flow into the next idea prompt.
        assert!(second.prompts[0].text.contains("No valid candidate was produced"));
        assert!(second.prompts[0].text.contains("Idea 1: First idea."));
        assert_eq!(log.status, Some(TrialStatus::ImprovedModelFound));
    }

    #[test]
    fn below_target_iteration_is_recorded_and_trial_exhausts() {
        let dataset = logistic_flow_dataset(60);
        let mut config = small_config();
        config.max_iterations = 2;
        // The baseline transcribed as a candidate cannot beat the calibrated
        // native baseline by 30 %.
        let same_as_baseline =
            format!("```dsl\n{}\n```", crate::dsl::reference::lwr_baseline());
        let mut backend = ReplayBackend::from_responses(vec![
            "Idea one.".to_string(),
            same_as_baseline.clone(),
            "Reasons:\nStill linear.\nSuggestions:\nTry a nonlinear shape.\nNew questions:\nnone".to_string(),
            "Idea two.".to_string(),
            same_as_baseline,
            "Reasons:\nSame.\nSuggestions:\nSame.\nNew questions:\nnone".to_string(),
        ]);
        let mut sink = MemorySink::default();
        let log = run_trial(
            &config,
            &dataset,
            &corpus(),
            &PromptSet::defaults(),
            &mut backend,
            &mut sink,
        )
        .unwrap();

        assert_eq!(log.status, Some(TrialStatus::Exhausted));
        assert!(log.success_factors.is_none());
        assert_eq!(log.iterations.len(), 2);
        for record in &log.iterations {
            assert_eq!(record.outcome, IterationOutcome::BelowTarget);
            assert!(record.report.is_some());
            assert!(record.improvement_rate_pct.unwrap() < config.target_improvement_pct);
        }
        // Failure analysis ran each time: last prompt is analysis-failure with
        // the iteration history embedded.
        let last = log.iterations[1].prompts.last().unwrap();
        assert_eq!(last.name, "analysis-failure");
        assert!(last.text.contains("============ Iteration 0 ============"));
        assert!(last.text.contains("============ Iteration 1 ============"));
        // The second idea prompt carries the first analyzer's suggestions.
        assert!(log.iterations[1].prompts[0].text.contains("Try a nonlinear shape."));
    }

    #[test]
    fn replay_exhaustion_aborts_the_trial() {
        let dataset = logistic_flow_dataset(40);
        let config = small_config();
        let mut backend = ReplayBackend::from_responses(vec!["Only an idea.".to_string()]);
        let mut sink = MemorySink::default();
        let err = run_trial(
            &config,
            &dataset,
            &corpus(),
            &PromptSet::defaults(),
            &mut backend,
            &mut sink,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ReplayExhausted { consumed: 1 }));
        // The config and baseline events were still recorded.
        assert_eq!(sink.events.len(), 2);
    }

    #[test]
    fn family_mismatch_is_rejected_before_any_chat() {
        let dataset = logistic_flow_dataset(40);
        let mut config = small_config();
        config.family = ModelFamily::Idm;
        let mut backend = ReplayBackend::from_responses(vec![]);
        let mut sink = MemorySink::default();
        let err = run_trial(
            &config,
            &dataset,
            &corpus(),
            &PromptSet::defaults(),
            &mut backend,
            &mut sink,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(sink.events.is_empty());
    }

    #[test]
    fn jsonl_sink_round_trips_through_the_reader() {
        let dataset = logistic_flow_dataset(60);
        let config = small_config();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trial.jsonl");
        let mut backend = ReplayBackend::from_responses(vec![
            "Logistic idea.".to_string(),
            logistic_candidate_reply(),
            "Suggestions:\nShip it.".to_string(),
        ]);
        let mut sink = JsonlSink::create(&path).unwrap();
        let log = run_trial(
            &config,
            &dataset,
            &corpus(),
            &PromptSet::defaults(),
            &mut backend,
            &mut sink,
        )
        .unwrap();
        let events = read_trial_log(&path).unwrap();
        assert_eq!(events.len(), 4);
        let rebuilt = TrialLog::from_events(events).unwrap();
        assert_eq!(rebuilt, log);
    }

    #[test]
    fn trial_log_requires_config_then_baseline() {
        let err = TrialLog::from_events(vec![]).unwrap_err();
        assert!(matches!(err, Error::TrialLog(_)));
        let err = TrialLog::from_events(vec![TrialEvent::Status {
            status: TrialStatus::Exhausted,
            success_factors: None,
        }])
        .unwrap_err();
        assert!(matches!(err, Error::TrialLog(_)));
    }

    #[test]
    fn feedback_parses_markdown_headings() {
        let feedback = parse_feedback(
            "Preamble to ignore.\n**Reasons:** too linear\nmore reasons\nSUGGESTIONS:\n- try \
             tanh\nNew Questions: what about noise?\nfollow-up line",
        );
        assert_eq!(feedback.reasons, "too linear\nmore reasons");
        assert_eq!(feedback.suggestions, "- try tanh");
        assert_eq!(feedback.questions, "what about noise?\nfollow-up line");
        assert!(feedback.raw.starts_with("Preamble"));
    }

    #[test]
    fn feedback_without_headings_becomes_suggestions() {
        let feedback = parse_feedback("  just some advice  ");
        assert_eq!(feedback.suggestions, "just some advice");
        assert_eq!(feedback.reasons, "");
        assert_eq!(feedback.questions, "");
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut config = TrialConfig::for_family(ModelFamily::Lwr);
        config.max_iterations = 0;
        assert!(config.validate().is_err());
        let mut config = TrialConfig::for_family(ModelFamily::Lwr);
        config.calibration_fraction = 1.0;
        assert!(config.validate().is_err());
        let mut config = TrialConfig::for_family(ModelFamily::Lwr);
        config.target_improvement_pct = -5.0;
        assert!(config.validate().is_err());
        assert!(TrialConfig::for_family(ModelFamily::Idm).validate().is_ok());
    }
}
