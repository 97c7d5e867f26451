use std::fmt::Write;

use super::{FeedbackRecord, GatewayError, Task, TaskRequest};
use crate::model::LanguageId;

/// Rendered in place of an empty feedback block.
pub const NO_RECORDS: &str = "(no records)";

pub(crate) const INITIAL_HEADING: &str = "## Historical Feedback: Initial Direct Repair";
pub(crate) const TRANSLATION_HEADING: &str = "## Historical Feedback: Translation-Based Repair";
pub(crate) const CONSTRAINTS_HEADING: &str = "## Task Constraints";

fn fenced(out: &mut String, lang: LanguageId, code: &str) {
    let _ = writeln!(out, "```{}", lang.fence_tag());
    out.push_str(code);
    if !code.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("```\n");
}

fn join(langs: &[LanguageId]) -> String {
    if langs.is_empty() {
        return "none".into();
    }
    langs.iter().map(|l| l.name()).collect::<Vec<_>>().join(", ")
}

/// One feedback line. The `key=value | ...` layout is also what
/// [`super::parse_feedback_line`] reads back.
pub(crate) fn render_record(r: &FeedbackRecord) -> String {
    let mut line = format!(
        "- sim={:.4} | bug={} | language={} | difficulty={} | outcome={} | error={}",
        r.similarity, r.bug_id, r.language, r.difficulty, r.outcome, r.error_type
    );
    if let Some(t) = r.target {
        let _ = write!(line, " | target={t}");
    }
    let _ = write!(
        line,
        " | fixed={} | successful={} | pass={}/{}",
        if r.fixed { "yes" } else { "no" },
        join(&r.successful_targets),
        r.c,
        r.n
    );
    line
}

fn block(out: &mut String, heading: &str, purpose: &str, records: &[FeedbackRecord]) {
    let _ = writeln!(out, "{heading}");
    let _ = writeln!(out, "{purpose}");
    if records.is_empty() {
        let _ = writeln!(out, "{NO_RECORDS}");
    }
    for r in records {
        let _ = writeln!(out, "{}", render_record(r));
    }
    out.push('\n');
}

/// Render the prompt for `request`. Pure: equal requests give equal text.
pub fn build_prompt(request: &TaskRequest) -> Result<String, GatewayError> {
    let mut out = String::new();
    let bug = &request.bug;
    match request.task {
        Task::Repair => {
            if request.code.is_empty() {
                return Err(GatewayError::MissingField("code"));
            }
            let _ = writeln!(out, "## Problem Description\n{}\n", bug.description.trim_end());
            let _ = writeln!(out, "## Error Type\n{}\n", request.error_type);
            let _ = writeln!(out, "## Input Specification\n{}\n", bug.input_spec.trim_end());
            let _ = writeln!(out, "## Output Specification\n{}\n", bug.output_spec.trim_end());
            let _ = writeln!(out, "## Buggy Code ({})", request.language);
            fenced(&mut out, request.language, &request.code);
            out.push('\n');
            let _ = writeln!(
                out,
                "## Instruction\nThe {lang} program above fails with {err}. Fix the bug so that the \
                 program satisfies the problem description and the input/output specifications. \
                 Reply with the complete fixed {lang} program in a single fenced code block.",
                lang = request.language,
                err = request.error_type,
            );
        }
        Task::Translate | Task::BackTranslate => {
            if request.code.is_empty() {
                return Err(GatewayError::MissingField("code"));
            }
            let to = request
                .target_language
                .ok_or(GatewayError::MissingField("target_language"))?;
            let from = request.language;
            let _ = writeln!(out, "## Source Language\n{from}\n");
            let _ = writeln!(out, "## Target Language\n{to}\n");
            let _ = writeln!(out, "## Code ({from})");
            fenced(&mut out, from, &request.code);
            out.push('\n');
            let _ = writeln!(
                out,
                "## Instruction\nTranslate the {from} program above into {to}. Preserve its \
                 behaviour exactly, including any defects, and read from standard input and write \
                 to standard output as the original does. Reply with the complete {to} program in \
                 a single fenced code block."
            );
        }
        Task::DecideTarget => {
            if request.candidates.is_empty() {
                return Err(GatewayError::MissingField("candidates"));
            }
            let _ = writeln!(
                out,
                "You choose the programming language into which a buggy program is translated \
                 before it is repaired. Pick the language in which this bug is most likely to be \
                 fixed.\n"
            );
            let _ = writeln!(out, "## Bug Characteristics");
            let _ = writeln!(out, "- Language: {}", bug.source_language);
            let _ = writeln!(out, "- Problem difficulty: {}", bug.difficulty);
            let _ = writeln!(out, "- Execution outcome: {}", bug.initial_outcome);
            let _ = writeln!(out, "- Error type: {}", bug.error_type);
            let _ = writeln!(out, "- Problem: {}\n", bug.description.trim_end());

            let empty = super::HistoryContext::default();
            let history = request.history.as_ref().unwrap_or(&empty);
            block(
                &mut out,
                INITIAL_HEADING,
                "Similar bugs repaired directly in their own language; shows which languages the \
                 repairer handles well for bugs like this one.",
                &history.initial,
            );
            block(
                &mut out,
                TRANSLATION_HEADING,
                "Similar bugs repaired after translation; shows target languages in which such \
                 bugs were fixed before.",
                &history.translation,
            );

            let _ = writeln!(out, "{CONSTRAINTS_HEADING}");
            let _ = writeln!(out, "- Choose exactly one of: {}", join(&request.candidates));
            let _ = writeln!(
                out,
                "- Already attempted for this bug (do not choose): {}",
                join(&request.attempted)
            );
            let _ = writeln!(
                out,
                "- The source language {} is not a valid target.\n",
                bug.source_language
            );
            let _ = writeln!(
                out,
                "## Reasoning\nLet's think step by step. First, summarize what the bug \
                 characteristics suggest. Second, analyze which languages fixed similar bugs in \
                 each feedback block. Third, weigh the remaining candidates against each other. \
                 Finally, end your answer with exactly one line of the form:\nTARGET: <language>"
            );
        }
    }
    Ok(out)
}
