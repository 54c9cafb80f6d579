//! Verification reports: a JSON document plus a human-readable table row
//! with the usual columns (P_train, r, P_learn, P_test, result, model
//! size, epsilon, time).

use serde::{Deserialize, Serialize};
use slarkit_core::slar::{Outcome, VerificationReport};
use thiserror::Error;

use crate::property::print_property;

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportIoError {
    #[error("report parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported report format version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationDoc {
    pub round: usize,
    pub epsilon_used: f64,
    pub epsilon_retried: bool,
    pub model_size: usize,
    pub p_learn: f64,
    pub reducible_fallback: bool,
    pub desyncs: u64,
    pub spurious_from: Option<Vec<u32>>,
    pub spurious_to: Option<Vec<u32>>,
    pub spurious_deviation: Option<f64>,
    pub predicate_added: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsDoc {
    pub zero_support: bool,
    pub reducible_fallback: bool,
    pub epsilon_retries: u32,
    pub total_desyncs: u64,
    pub inconclusive_reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDoc {
    pub format_version: u32,
    pub property: String,
    pub outcome: String,
    pub p_train: f64,
    pub threshold_r: f64,
    pub p_learn: Option<f64>,
    pub p_test: Option<f64>,
    pub confidence: Option<f64>,
    pub model_size: Option<usize>,
    pub epsilon: f64,
    pub predicates: Vec<String>,
    pub time_seconds: f64,
    pub iterations: Vec<IterationDoc>,
    pub diagnostics: DiagnosticsDoc,
}

pub fn outcome_name(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Verified => "Verified",
        Outcome::Violated => "Violated",
        Outcome::Inconclusive => "Inconclusive",
    }
}

/// Short result code for the table: SUC for verified, VIO for violated,
/// FAL when the loop could not reach a verdict.
pub fn outcome_code(outcome: &str) -> &'static str {
    match outcome {
        "Verified" => "SUC",
        "Violated" => "VIO",
        _ => "FAL",
    }
}

pub fn report_to_doc(report: &VerificationReport, time_seconds: f64, epsilon: f64) -> ReportDoc {
    let last = report.iterations.last();
    ReportDoc {
        format_version: REPORT_FORMAT_VERSION,
        property: print_property(&report.property),
        outcome: outcome_name(report.outcome).to_string(),
        p_train: report.p_train,
        threshold_r: report.property.threshold(),
        p_learn: report.p_learn,
        p_test: report.p_test,
        confidence: report.confidence,
        model_size: report
            .chain
            .as_ref()
            .map(|c| c.len())
            .or_else(|| last.map(|i| i.model_size)),
        epsilon: last.map(|i| i.epsilon_used).unwrap_or(epsilon),
        predicates: report.predicates.iter().map(|p| p.render()).collect(),
        time_seconds,
        iterations: report
            .iterations
            .iter()
            .map(|i| IterationDoc {
                round: i.round,
                epsilon_used: i.epsilon_used,
                epsilon_retried: i.epsilon_retried,
                model_size: i.model_size,
                p_learn: i.p_learn,
                reducible_fallback: i.reducible_fallback,
                desyncs: i.desyncs,
                spurious_from: i.spurious_from.clone(),
                spurious_to: i.spurious_to.clone(),
                spurious_deviation: i.spurious_deviation,
                predicate_added: i.predicate_added.as_ref().map(|p| p.render()),
            })
            .collect(),
        diagnostics: DiagnosticsDoc {
            zero_support: report.diagnostics.zero_support,
            reducible_fallback: report.diagnostics.reducible_fallback,
            epsilon_retries: report.diagnostics.epsilon_retries,
            total_desyncs: report.diagnostics.total_desyncs,
            inconclusive_reason: report.diagnostics.inconclusive_reason.clone(),
        },
    }
}

pub fn report_to_json(doc: &ReportDoc) -> String {
    serde_json::to_string_pretty(doc).expect("report serialization cannot fail")
}

pub fn report_from_json(text: &str) -> Result<ReportDoc, ReportIoError> {
    let doc: ReportDoc = serde_json::from_str(text)?;
    if doc.format_version != REPORT_FORMAT_VERSION {
        return Err(ReportIoError::Version(doc.format_version));
    }
    Ok(doc)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "--".into(), |x| format!("{x:.4}"))
}

pub fn table_header() -> String {
    format!(
        "{:<28} {:>8} {:>8} {:>8} {:>8} {:>6} {:>10} {:>8} {:>8}",
        "Property", "P_train", "r", "P_learn", "P_test", "Result", "ModelSize", "epsilon", "Time"
    )
}

pub fn table_row(doc: &ReportDoc) -> String {
    format!(
        "{:<28} {:>8.4} {:>8.4} {:>8} {:>8} {:>6} {:>10} {:>8} {:>8.1}",
        doc.property,
        doc.p_train,
        doc.threshold_r,
        opt(doc.p_learn),
        opt(doc.p_test),
        outcome_code(&doc.outcome),
        doc.model_size
            .map_or_else(|| "--".into(), |m| m.to_string()),
        doc.epsilon,
        doc.time_seconds
    )
}
