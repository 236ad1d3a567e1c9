//! Prompt templates and completion parsing.
//!
//! The two templates below are the wire contract with the model and are tested
//! byte-for-byte; do not touch the spacing.

use super::{ComparisonQuery, OracleError, TripletQuery, Vocabulary};

/// `{criteria} Answer with a single word, yes or no. X: '{x}' Y: '{y}'`
pub fn render_comparison_prompt(q: &ComparisonQuery) -> String {
    format!(
        "{} Answer with a single word, yes or no. X: '{}' Y: '{}'",
        q.criteria().text(),
        q.x().text(),
        q.y().text()
    )
}

/// `{criteria} \nX: {y-candidate}\nY: {z-candidate}\nZ: {anchor}\n Answer either 'X' or 'Y'.`
///
/// The anchor plays the prompt role Z; the two candidates play X and Y. An "X"
/// answer therefore asserts the anchor is closer to `cand_y`.
pub fn render_triplet_prompt(q: &TripletQuery) -> String {
    format!(
        "{} \nX: {}\nY: {}\nZ: {}\n Answer either 'X' or 'Y'.",
        q.criteria().text(),
        q.cand_y().text(),
        q.cand_z().text(),
        q.anchor().text()
    )
}

/// Remove thinking segments from a completion.
///
/// Paired `<think>…</think>` blocks are dropped. An unclosed `<think>` drops
/// everything after it (the completion was truncated mid-thought); an unpaired
/// `</think>` keeps only what follows it (some chat templates start the
/// completion already inside a think block).
pub fn strip_thinking(raw: &str) -> String {
    const OPEN: &str = "<think>";
    const CLOSE: &str = "</think>";
    let mut s = raw.to_string();
    while let Some(start) = s.find(OPEN) {
        match s[start + OPEN.len()..].find(CLOSE) {
            Some(rel) => {
                s.replace_range(start..start + OPEN.len() + rel + CLOSE.len(), "");
            }
            None => {
                s.truncate(start);
                break;
            }
        }
    }
    if let Some(pos) = s.rfind(CLOSE) {
        s = s[pos + CLOSE.len()..].to_string();
    }
    s
}

fn first_alphabetic_token(s: &str) -> Option<String> {
    let mut token = String::new();
    for ch in s.chars() {
        if ch.is_alphabetic() {
            token.push(ch);
        } else if !token.is_empty() {
            break;
        }
    }
    if token.is_empty() {
        None
    } else {
        Some(token)
    }
}

/// Parse a completion into a boolean under the given vocabulary.
///
/// Thinking segments are stripped, then the first alphabetic token of the
/// remainder is matched case-insensitively: yes/X map to true, no/Y to false.
/// Anything else is a parse failure.
pub fn parse_binary_answer(raw: &str, vocabulary: Vocabulary) -> Result<bool, OracleError> {
    let expected = match vocabulary {
        Vocabulary::YesNo => "yes/no",
        Vocabulary::XY => "X/Y",
    };
    let cleaned = strip_thinking(raw);
    let token = first_alphabetic_token(&cleaned).ok_or_else(|| OracleError::ParseFailure {
        expected,
        raw: raw.to_string(),
    })?;
    let verdict = match vocabulary {
        Vocabulary::YesNo => {
            if token.eq_ignore_ascii_case("yes") {
                Some(true)
            } else if token.eq_ignore_ascii_case("no") {
                Some(false)
            } else {
                None
            }
        }
        Vocabulary::XY => {
            if token.eq_ignore_ascii_case("x") {
                Some(true)
            } else if token.eq_ignore_ascii_case("y") {
                Some(false)
            } else {
                None
            }
        }
    };
    verdict.ok_or_else(|| OracleError::ParseFailure {
        expected,
        raw: raw.to_string(),
    })
}
