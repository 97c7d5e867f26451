use std::collections::BTreeMap;

use rand::seq::IndexedRandom;

use super::prompt::{INITIAL_HEADING, TRANSLATION_HEADING};
use super::FeedbackRecord;
use crate::model::{LanguageId, OutcomeCategory};
use crate::seed::rng_for;

fn langs(value: &str) -> Result<Vec<LanguageId>, String> {
    if value.trim() == "none" {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| s.trim().parse::<LanguageId>().map_err(|e| e.to_string()))
        .collect()
}

/// Parse one rendered feedback line (`- sim=... | bug=... | ...`).
pub fn parse_feedback_line(line: &str) -> Result<FeedbackRecord, String> {
    let body = line
        .trim()
        .strip_prefix("- ")
        .ok_or_else(|| "feedback line must start with '- '".to_string())?;
    let mut fields = BTreeMap::new();
    for part in body.split(" | ") {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("field without '=': {part:?}"))?;
        if fields.insert(k.trim(), v.trim()).is_some() {
            return Err(format!("duplicate field {k}"));
        }
    }
    let mut take = |k: &str| fields.remove(k).ok_or_else(|| format!("missing field {k}"));
    let num = |k: &str, v: &str| v.parse::<u32>().map_err(|e| format!("{k}: {e}"));

    let similarity: f64 = take("sim")?.parse().map_err(|e| format!("sim: {e}"))?;
    if !similarity.is_finite() {
        return Err("sim must be finite".into());
    }
    let bug_id = take("bug")?.to_string();
    let language = take("language")?.parse::<LanguageId>().map_err(|e| e.to_string())?;
    let difficulty = num("difficulty", take("difficulty")?)?;
    let outcome = take("outcome")?.parse::<OutcomeCategory>().map_err(|e| e.to_string())?;
    let error_type = take("error")?.to_string();
    let target = fields
        .remove("target")
        .map(|t| t.parse::<LanguageId>().map_err(|e| e.to_string()))
        .transpose()?;
    let mut take = |k: &str| fields.remove(k).ok_or_else(|| format!("missing field {k}"));
    let fixed = match take("fixed")? {
        "yes" => true,
        "no" => false,
        other => return Err(format!("fixed: expected yes/no, got {other:?}")),
    };
    let successful_targets = langs(take("successful")?)?;
    let (c, n) = take("pass")?
        .split_once('/')
        .ok_or_else(|| "pass must be c/n".to_string())?;
    let (c, n) = (num("pass", c)?, num("pass", n)?);
    if c > n {
        return Err(format!("pass {c}/{n} has c > n"));
    }
    if let Some(k) = fields.keys().next() {
        return Err(format!("unknown field {k}"));
    }
    Ok(FeedbackRecord {
        bug_id,
        similarity,
        language,
        difficulty,
        outcome,
        error_type,
        target,
        fixed,
        successful_targets,
        n,
        c,
    })
}

fn section<'a>(prompt: &'a str, heading: &str) -> impl Iterator<Item = FeedbackRecord> + 'a {
    let start = prompt.find(heading).map(|i| i + heading.len());
    let body = start.map(|s| &prompt[s..]).unwrap_or("");
    let end = body.find("\n## ").unwrap_or(body.len());
    body[..end].lines().filter_map(|l| parse_feedback_line(l).ok())
}

/// Offline stand-in for a reasoning model: reads the feedback blocks of a
/// decision prompt and names the candidate the history favours.
///
/// Translation-based successes count first, weighted by similarity; failing
/// that, languages whose similar bugs were fixed directly; failing that, a
/// seeded pick. Ties go to candidate order.
pub fn follow_history(prompt: &str, candidates: &[LanguageId], seed: u64) -> String {
    let pick = |scores: &BTreeMap<LanguageId, f64>| -> Option<LanguageId> {
        let mut best: Option<(LanguageId, f64)> = None;
        for &c in candidates {
            let s = scores.get(&c).copied().unwrap_or(0.0);
            if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        best.map(|(c, _)| c)
    };

    let mut scores = BTreeMap::new();
    for r in section(prompt, TRANSLATION_HEADING) {
        for l in &r.successful_targets {
            *scores.entry(*l).or_insert(0.0) += r.similarity.max(0.0);
        }
    }
    if let Some(l) = pick(&scores) {
        return format!("Similar bugs were fixed after translation into {l}.\nTARGET: {l}");
    }
    let mut scores = BTreeMap::new();
    for r in section(prompt, INITIAL_HEADING).filter(|r| r.fixed) {
        *scores.entry(r.language).or_insert(0.0) += r.similarity.max(0.0);
    }
    if let Some(l) = pick(&scores) {
        return format!("Similar {l} bugs were fixed directly.\nTARGET: {l}");
    }
    let mut rng = rng_for(&[b"follow", &seed.to_le_bytes()]);
    match candidates.choose(&mut rng) {
        Some(l) => format!("No informative history.\nTARGET: {l}"),
        None => "No candidates.".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::prompt::{render_record, CONSTRAINTS_HEADING};
    use LanguageId::*;

    fn rec(lang: LanguageId, sim: f64, fixed: bool, succ: Vec<LanguageId>) -> FeedbackRecord {
        FeedbackRecord {
            bug_id: "h".into(),
            similarity: sim,
            language: lang,
            difficulty: 1000,
            outcome: OutcomeCategory::RuntimeError,
            error_type: "RUNTIME_ERROR".into(),
            target: succ.first().copied(),
            fixed,
            successful_targets: succ,
            n: 20,
            c: u32::from(fixed),
        }
    }

    fn prompt(initial: &[FeedbackRecord], translation: &[FeedbackRecord]) -> String {
        let lines = |rs: &[FeedbackRecord]| {
            rs.iter().map(render_record).collect::<Vec<_>>().join("\n")
        };
        format!(
            "{INITIAL_HEADING}\nx\n{}\n\n{TRANSLATION_HEADING}\ny\n{}\n\n{CONSTRAINTS_HEADING}\n- z\n",
            lines(initial),
            lines(translation)
        )
    }

    #[test]
    fn feedback_line_rejections() {
        let good = render_record(&rec(Go, 0.5, true, vec![Rust, Cpp]));
        let parsed = parse_feedback_line(&good).unwrap();
        assert_eq!(parsed.successful_targets, vec![Rust, Cpp]);
        assert!(parse_feedback_line("sim=1").is_err());
        assert!(parse_feedback_line(&good.replace("pass=1/20", "pass=21/20")).is_err());
        assert!(parse_feedback_line(&good.replace("fixed=yes", "fixed=maybe")).is_err());
        assert!(parse_feedback_line(&format!("{good} | extra=1")).is_err());
        assert!(parse_feedback_line(&good.replace("sim=0.5000", "sim=NaN")).is_err());
    }

    #[test]
    fn translation_successes_dominate() {
        let p = prompt(
            &[rec(Go, 0.99, true, vec![])],
            &[rec(C, 0.4, true, vec![Rust]), rec(C, 0.3, true, vec![Cpp]), rec(C, 0.2, true, vec![Cpp])],
        );
        assert!(follow_history(&p, &[Go, Cpp, Rust], 0).ends_with("TARGET: C++"));
        // non-candidates never chosen
        assert!(follow_history(&p, &[Go, Rust], 0).ends_with("TARGET: Rust"));
    }

    #[test]
    fn falls_back_to_initial_then_seeded_pick() {
        let p = prompt(&[rec(Go, 0.9, true, vec![]), rec(Java, 0.95, false, vec![])], &[]);
        assert!(follow_history(&p, &[Java, Go], 0).ends_with("TARGET: Go"));
        let p = prompt(&[], &[]);
        let a = follow_history(&p, &[Java, Go, Rust], 7);
        assert_eq!(a, follow_history(&p, &[Java, Go, Rust], 7));
        assert!(super::super::parse_final_answer(&a).is_some());
    }
}
