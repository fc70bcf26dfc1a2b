//! Plain-text rendering of evaluation reports, iteration records, and whole
//! trial logs. The same renderer feeds prompt context (baseline info,
//! iteration history) and the CLI `report` command, so the text a trial
//! prints is exactly the text the chat model saw.

use crate::agent::{IterationRecord, TrialLog, TrialStatus};
use crate::datasets::DensityBucket;
use crate::evaluation::EvalReport;
use crate::models::ModelFamily;

/// One evaluation as a loss block. Baseline blocks use the `Base model`
/// prefix and multi-line layout; iteration blocks use the compact form.
pub fn format_loss_block(report: &EvalReport, is_baseline: bool) -> String {
    match report.family {
        ModelFamily::Idm => {
            let strata = report
                .per_scenario
                .iter()
                .map(|s| format!("{}: {:.4}", s.scenario, s.loss))
                .collect::<Vec<_>>()
                .join(", ");
            if is_baseline {
                format!(
                    "Base model total loss: {:.3}\nBase model loss for each driving scenarios: [{strata}].",
                    report.total_loss
                )
            } else {
                format!(
                    "Model total loss: {:.3}\nLoss for each driving scenarios: [{strata}].",
                    report.total_loss
                )
            }
        }
        ModelFamily::Mobil => match &report.classification {
            Some(c) => {
                let results = format!(
                    "[Precision: {:.3}, Recall: {:.3}, F1: {:.3}, Specificity: {:.3}]",
                    c.precision, c.recall, c.f1, c.specificity
                );
                let confusion = format!(
                    "[TP: {}, TN: {}, FP: {}, FN: {}]",
                    c.confusion.tp, c.confusion.tn, c.confusion.fp, c.confusion.fn_
                );
                if is_baseline {
                    format!(
                        "Base model evaluation results: {results}\nBase model confusion matrix: {confusion}"
                    )
                } else {
                    format!(
                        "Model evaluation results: {results}, Model confusion matrix: {confusion}"
                    )
                }
            }
            None => {
                let prefix = if is_baseline { "Base model" } else { "Model" };
                format!("{prefix} loss: {:.3}", report.total_loss)
            }
        },
        ModelFamily::Lwr => {
            let strata = DensityBucket::ALL
                .iter()
                .filter_map(|bucket| {
                    report
                        .scenario(bucket.label())
                        .map(|s| format!("{}: {:.4}", bucket.range_label(), s.loss))
                })
                .collect::<Vec<_>>()
                .join(", ");
            if is_baseline {
                format!(
                    "Base model loss: {:.4}\nBase model loss for different density levels: [{strata}]",
                    report.total_loss
                )
            } else {
                let mut out = format!(
                    "Model loss: {:.3}\nLoss for different density levels: [{strata}].",
                    report.total_loss
                );
                if let Some(worst) = worst_scenario(report) {
                    out.push_str(&format!(
                        " Based on the results, the model performs worst in the {worst} density scenario."
                    ));
                }
                out
            }
        }
    }
}

/// First stratum with the highest loss, if any.
fn worst_scenario(report: &EvalReport) -> Option<&str> {
    let mut worst: Option<(&str, f64)> = None;
    for s in &report.per_scenario {
        if worst.is_none_or(|(_, loss)| s.loss > loss) {
            worst = Some((&s.scenario, s.loss));
        }
    }
    worst.map(|(label, _)| label)
}

pub fn format_comparison(baseline_loss: f64, model_loss: f64, improvement_rate_pct: f64) -> String {
    format!(
        "Baseline model loss: {baseline_loss:.3}, improved model loss: {model_loss:.3}, improved rate: {improvement_rate_pct:.2}"
    )
}

pub fn iteration_banner(index: u32) -> String {
    format!("============ Iteration {index} ============")
}

pub fn format_idea(idea: &str) -> String {
    format!("Idea: \n {idea}")
}

pub fn format_code(code: &str) -> String {
    format!("Code: \n {code}")
}

/// Render one iteration: banner, idea, code (or the code-generation failure),
/// evaluation, comparison against the baseline, and the analysis if present.
pub fn render_iteration(record: &IterationRecord, baseline_loss: f64) -> String {
    let mut sections = vec![iteration_banner(record.index), format_idea(&record.idea_text)];
    match (&record.candidate_source, &record.report) {
        (Some(code), Some(report)) => {
            sections.push(format_code(code));
            sections.push(format_loss_block(report, false));
            if let Some(rate) = record.improvement_rate_pct {
                sections.push(format_comparison(baseline_loss, report.total_loss, rate));
            }
        }
        _ => {
            sections.push(format!(
                "Code generation failed after {} attempts. Last errors:\n{}",
                record.codegen_attempts,
                record.codegen_failure.as_deref().unwrap_or("(none recorded)")
            ));
        }
    }
    if !record.analysis_text.is_empty() {
        sections.push(record.analysis_text.clone());
    }
    sections.join("\n")
}

/// Render a whole trial: baseline block, every iteration, closing status.
pub fn render_trial(log: &TrialLog) -> String {
    let mut sections = vec![format_loss_block(&log.baseline_report, true)];
    for record in &log.iterations {
        sections.push(render_iteration(record, log.baseline_report.total_loss));
    }
    match log.status {
        Some(TrialStatus::ImprovedModelFound) => {
            let mut tail = "Improved model found!".to_string();
            if let Some(factors) = &log.success_factors {
                tail.push_str("\nSuccess factors: \n ");
                tail.push_str(factors);
            }
            sections.push(tail);
        }
        Some(TrialStatus::Exhausted) => {
            sections.push("No improved model found within the iteration budget.".to_string());
        }
        None => sections.push("Trial log ends without a status event.".to_string()),
    }
    sections.join("\n")
}
