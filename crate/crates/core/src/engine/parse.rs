//! Parsing free-form model replies into terms, candidate picks and relations.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::ontology::Relation;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no usable items in model reply: {raw:?}")]
pub struct ReplyParseError {
    pub raw: String,
}

fn list_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\(?\d{1,3}[.):]|[-*•+])\s+").unwrap())
}

fn inline_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|\s)(?:\d{1,3}[.)]|[-*•])\s+").unwrap())
}

/// Trim, drop emphasis and surrounding quotes, and cut trailing commentary.
pub fn clean_term(raw: &str) -> String {
    let mut s = raw.trim();
    for sep in [" - ", " \u{2013} ", " \u{2014} ", ": "] {
        if let Some(i) = s.find(sep) {
            s = &s[..i];
        }
    }
    let mut s = s.trim().trim_matches('*').trim_matches('_').trim();
    loop {
        let before = s;
        s = s
            .trim_end_matches(['.', ';', ','])
            .trim_matches(|c| matches!(c, '"' | '\'' | '`' | '“' | '”' | '‘' | '’'))
            .trim();
        if s == before {
            break;
        }
    }
    s.to_string()
}

/// Parse a list of terms from a reply: numbered or bulleted lines, an
/// inline bulleted sentence, a JSON array, or comma-separated text.
/// `expected` only decides whether a lone line may be split on commas.
pub fn parse_term_list(raw: &str, expected: usize) -> Result<Vec<String>, ReplyParseError> {
    let text = raw.trim();
    let items = if let Some(items) = parse_json_array(text) {
        items
    } else {
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let marked: Vec<&str> = lines
            .iter()
            .copied()
            .filter(|l| list_marker().is_match(l))
            .collect();
        if !marked.is_empty() {
            marked
                .iter()
                .map(|l| list_marker().replace(l, "").into_owned())
                .collect()
        } else if let Some(items) = parse_inline_bullets(text) {
            items
        } else if lines.len() >= 2 {
            lines.iter().map(|l| strip_lead_in(l).to_string()).collect()
        } else {
            let line = lines.first().map(|l| strip_lead_in(l)).unwrap_or("");
            if expected > 1 && (line.contains(',') || line.contains(';')) {
                line.split([',', ';']).map(str::to_string).collect()
            } else {
                vec![line.to_string()]
            }
        }
    };
    let out: Vec<String> = items
        .iter()
        .map(|s| clean_term(s))
        .filter(|s| !s.is_empty())
        .collect();
    if out.is_empty() {
        return Err(ReplyParseError { raw: raw.to_string() });
    }
    Ok(out)
}

/// Parse a single-term answer; takes the last `Answer:` line when present.
pub fn parse_single_term(raw: &str) -> Result<String, ReplyParseError> {
    let answer = raw
        .lines()
        .rev()
        .find_map(|l| {
            let t = l.trim().trim_start_matches('*');
            let lower = t.to_ascii_lowercase();
            ["final answer:", "answer:", "process:"]
                .iter()
                .find(|p| lower.starts_with(*p))
                .map(|p| t[p.len()..].to_string())
        });
    let term = match answer {
        Some(a) => clean_term(&a),
        None => {
            let first = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
            clean_term(&list_marker().replace(first, ""))
        }
    };
    if term.is_empty() {
        Err(ReplyParseError { raw: raw.to_string() })
    } else {
        Ok(term)
    }
}

fn parse_json_array(text: &str) -> Option<Vec<String>> {
    let start = text.find('[')?;
    let end = text.rfind(']')?;
    let arr: Vec<serde_json::Value> = serde_json::from_str(&text[start..=end]).ok()?;
    Some(
        arr.into_iter()
            .filter_map(|v| match v {
                serde_json::Value::String(s) => Some(s),
                serde_json::Value::Null => None,
                other => Some(other.to_string()),
            })
            .collect(),
    )
}

fn parse_inline_bullets(text: &str) -> Option<Vec<String>> {
    let starts: Vec<(usize, usize)> = inline_marker()
        .find_iter(text)
        .map(|m| (m.start(), m.end()))
        .collect();
    if starts.len() < 2 {
        return None;
    }
    let mut items = Vec::new();
    for (i, &(_, body_start)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map(|&(s, _)| s).unwrap_or(text.len());
        items.push(text[body_start..end].to_string());
    }
    Some(items)
}

/// Drop a short `Lead-in:` prefix such as `Processes:`.
fn strip_lead_in(line: &str) -> &str {
    match line.split_once(": ") {
        Some((head, tail)) if head.split_whitespace().count() <= 6 && !tail.trim().is_empty() => {
            tail.trim()
        }
        _ => line,
    }
}

/// Candidate picks from a vote reply, as 0-based indices into `candidates`,
/// distinct and in reply order. Numbers are preferred; when the reply has
/// none in range, candidate texts are matched instead.
pub fn parse_candidate_indices(raw: &str, candidates: &[String]) -> Vec<usize> {
    static NUM: OnceLock<Regex> = OnceLock::new();
    let num = NUM.get_or_init(|| Regex::new(r"\b\d{1,4}\b").unwrap());
    let mut picks: Vec<usize> = Vec::new();
    for m in num.find_iter(raw) {
        if let Ok(n) = m.as_str().parse::<usize>() {
            if (1..=candidates.len()).contains(&n) && !picks.contains(&(n - 1)) {
                picks.push(n - 1);
            }
        }
    }
    if !picks.is_empty() {
        return picks;
    }
    let lower = raw.to_lowercase();
    let mut found: Vec<(usize, usize)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| lower.find(&c.to_lowercase()).map(|pos| (pos, i)))
        .collect();
    // longer matches first at equal positions, so "DNA repair" beats "DNA"
    found.sort_by_key(|&(pos, i)| (pos, std::cmp::Reverse(candidates[i].len())));
    for (_, i) in found {
        if !picks.contains(&i) {
            picks.push(i);
        }
    }
    picks
}

/// The first relation named in a reply.
pub fn parse_relation(raw: &str) -> Option<Relation> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(
            r"(?i)\b(is[ _-]a|part[ _-]of|has[ _-]part|(?:positively[ _-]|negatively[ _-])?regulates)\b",
        )
        .unwrap()
    });
    re.find(raw).and_then(|m| m.as_str().parse().ok())
}
