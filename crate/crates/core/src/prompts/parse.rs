use crate::text::{contains_words, find_label, match_title, normalize_title, strip_wrapping};

use super::PromptError;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedChoice {
    /// Index into the candidate list.
    pub index: usize,
    pub chosen_title: String,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSelfIntro {
    pub text: String,
    /// The expected label was missing and the whole reply was taken.
    pub low_confidence: bool,
}

/// Reply to the two-item reflection prompt. The first slot is the item the
/// prompt listed first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedItemDescriptions {
    pub first: String,
    pub second: Option<String>,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDescription {
    pub text: String,
    pub low_confidence: bool,
}

/// A full permutation of the candidate indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRanking {
    pub order: Vec<usize>,
    /// How many leading entries of `order` came from the reply.
    pub matched: usize,
    /// Candidates the reply omitted, appended in presentation order.
    pub appended: Vec<usize>,
    /// Reply entries that matched no remaining candidate.
    pub unmatched: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedYesNo {
    pub choice: bool,
    pub explanation: String,
}

/// Text following `label` and an optional colon on the same line.
fn after_label<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    let end = find_label(text, label)?;
    let rest = &text[end..];
    let line_end = rest.find('\n').unwrap_or(rest.len());
    match rest[..line_end].find(':') {
        Some(colon) => Some(&rest[colon + 1..]),
        None => Some(rest),
    }
}

fn label_start(text: &str, label: &str) -> Option<usize> {
    find_label(text, label).map(|end| end - label.len())
}

/// The labelled explanation, possibly empty; `None` without a label.
fn explanation_of(text: &str) -> Option<String> {
    let rest = after_label(text, "explanation")?;
    Some(strip_wrapping(rest.trim()).to_string())
}

/// Identify which candidate a selection reply picked.
pub fn parse_choice<S: AsRef<str>>(text: &str, candidates: &[S]) -> Result<ParsedChoice, PromptError> {
    let unparsable = || PromptError::UnparsableChoice { raw: text.to_string() };
    if candidates.is_empty() {
        return Err(unparsable());
    }

    let mut index = None;
    let mut remainder = text;
    if let Some(rest) = after_label(text, "chosen") {
        let line_end = rest.find('\n').unwrap_or(rest.len());
        let mut value = &rest[..line_end];
        if let Some(cut) = label_start(value, "explanation:") {
            value = &value[..cut];
        }
        remainder = &rest[line_end..];
        let value = strip_wrapping(value.trim().trim_end_matches('.'));
        index = match_title(value, candidates, |_| false).map(|m| m.index);
        if index.is_none() {
            if let Ok(n) = value.parse::<usize>() {
                if (1..=candidates.len()).contains(&n) {
                    index = Some(n - 1);
                }
            }
        }
    } else {
        // no label: accept only if exactly one candidate title occurs
        let hay = normalize_title(text);
        let hits: Vec<usize> = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                let n = normalize_title(c.as_ref());
                !n.is_empty() && contains_words(&hay, &n)
            })
            .map(|(i, _)| i)
            .collect();
        if hits.len() == 1 {
            index = Some(hits[0]);
        }
    }

    let index = index.ok_or_else(unparsable)?;
    let explanation = explanation_of(text)
        .or_else(|| {
            let r = remainder.trim();
            (!r.is_empty()).then(|| r.to_string())
        })
        .unwrap_or_else(|| text.trim().to_string());
    Ok(ParsedChoice {
        index,
        chosen_title: candidates[index].as_ref().to_string(),
        explanation,
    })
}

pub fn parse_self_intro(text: &str) -> Result<ParsedSelfIntro, PromptError> {
    let (body, low_confidence) = match after_label(text, "updated self-introduction") {
        Some(rest) => (rest, false),
        None => (text, true),
    };
    let body = strip_wrapping(body.trim());
    if body.is_empty() {
        return Err(PromptError::EmptySelfIntro);
    }
    Ok(ParsedSelfIntro { text: body.to_string(), low_confidence })
}

fn trim_description(s: &str) -> String {
    let mut s = s.trim();
    // the second label usually starts its own sentence with "The updated"
    for tail in ["the updated", "updated"] {
        let lower = s.to_lowercase();
        if lower.len() == s.len() && lower.ends_with(tail) {
            s = s[..s.len() - tail.len()].trim_end();
        }
    }
    strip_wrapping(s).to_string()
}

pub fn parse_item_descriptions(text: &str) -> Result<ParsedItemDescriptions, PromptError> {
    let first_label = "description of the first";
    let second_label = "description of the second";
    let second_start = label_start(text, second_label);
    let second = after_label(text, second_label)
        .map(trim_description)
        .filter(|s| !s.is_empty());

    let (first, low_confidence) = match after_label(text, first_label) {
        Some(rest) => {
            let offset = text.len() - rest.len();
            let end = second_start.filter(|&s| s >= offset).unwrap_or(text.len());
            (trim_description(&text[offset..end]), false)
        }
        None => {
            let end = second_start.unwrap_or(text.len());
            (trim_description(&text[..end]), true)
        }
    };
    if first.is_empty() {
        return Err(PromptError::EmptyDescription);
    }
    Ok(ParsedItemDescriptions { first, second, low_confidence })
}

/// Single-item description reply, as produced by the warmup prompt.
pub fn parse_description(text: &str) -> Result<ParsedDescription, PromptError> {
    let (body, low_confidence) = match after_label(text, "updated description of the cd is") {
        Some(rest) => (rest, false),
        None => (text, true),
    };
    let body = strip_wrapping(body.trim());
    if body.is_empty() {
        return Err(PromptError::EmptyDescription);
    }
    Ok(ParsedDescription { text: body.to_string(), low_confidence })
}

/// Remove a list marker such as `3.`, `3)`, `-` or `*`. Returns the rest
/// and whether a numeric marker was present.
fn strip_marker(line: &str) -> (&str, bool) {
    let line = line.trim();
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')', ':']) {
            return (r.trim(), true);
        }
    }
    for bullet in ["- ", "* ", "• "] {
        if let Some(r) = line.strip_prefix(bullet) {
            return (r.trim(), false);
        }
    }
    (line, false)
}

/// Split a comma-separated line into titles. Adjacent pieces are merged
/// when the merge exactly names an unused candidate, so titles that
/// contain commas survive.
fn split_commas(line: &str, normalized: &[String], used: &[bool]) -> Vec<String> {
    let pieces: Vec<&str> = line.split(',').collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < pieces.len() {
        let mut taken = 1;
        for j in (i + 1..pieces.len()).rev() {
            let joined = normalize_title(&pieces[i..=j].join(","));
            if normalized.iter().zip(used).any(|(n, u)| !u && *n == joined) {
                taken = j - i + 1;
                break;
            }
        }
        let entry = pieces[i..i + taken].join(",");
        if !entry.trim().is_empty() {
            out.push(entry.trim().to_string());
        }
        i += taken;
    }
    out
}

/// Turn a ranking reply into a complete permutation of the candidates.
pub fn parse_ranking<S: AsRef<str>>(text: &str, candidates: &[S]) -> Result<ParsedRanking, PromptError> {
    let normalized: Vec<String> = candidates.iter().map(|c| normalize_title(c.as_ref())).collect();
    let lines: Vec<(&str, bool)> = text
        .lines()
        .map(strip_marker)
        .filter(|(l, _)| !l.is_empty())
        .collect();
    let numbered = lines.iter().any(|(_, n)| *n);

    let mut used = vec![false; candidates.len()];
    let mut order = Vec::with_capacity(candidates.len());
    let mut unmatched = Vec::new();
    let mut take = |entry: &str, used: &mut Vec<bool>| {
        let entry = strip_wrapping(entry);
        match match_title(entry, candidates, |i| used[i]) {
            Some(m) => {
                used[m.index] = true;
                order.push(m.index);
            }
            None => {
                log::warn!("ranking entry matches no remaining candidate: {entry:?}");
                unmatched.push(entry.to_string());
            }
        }
    };

    for (line, is_numbered) in &lines {
        if numbered {
            if *is_numbered {
                take(line, &mut used);
            }
        } else {
            for entry in split_commas(line, &normalized, &used) {
                take(&entry, &mut used);
            }
        }
    }

    if order.is_empty() {
        return Err(PromptError::UnparsableRanking { raw: text.to_string() });
    }
    let matched = order.len();
    let appended: Vec<usize> = (0..candidates.len()).filter(|&i| !used[i]).collect();
    order.extend(&appended);
    Ok(ParsedRanking { order, matched, appended, unmatched })
}

fn first_yes_no(region: &str) -> Option<bool> {
    region
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .find_map(|w| match w.to_lowercase().as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        })
}

pub fn parse_yes_no(text: &str) -> Result<ParsedYesNo, PromptError> {
    let choice = match after_label(text, "choice") {
        Some(rest) => {
            let end = label_start(rest, "explanation").unwrap_or(rest.len());
            first_yes_no(&rest[..end])
        }
        // unlabeled replies count only if they open with the answer
        None => text
            .split(|c: char| !c.is_alphabetic())
            .find(|w| !w.is_empty())
            .and_then(first_yes_no),
    }
    .ok_or_else(|| PromptError::NoYesNo { raw: text.to_string() })?;
    let explanation = explanation_of(text).unwrap_or_default();
    Ok(ParsedYesNo { choice, explanation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choice_is_case_insensitive() {
        let c = parse_choice("Chosen CD: brainwashed\nExplanation: x", &["Thriller", "Brainwashed"]).unwrap();
        assert_eq!(c.index, 1);
        assert_eq!(c.chosen_title, "Brainwashed");
        assert_eq!(c.explanation, "x");
    }

    #[test]
    fn choice_without_label_or_title_fails() {
        assert!(matches!(
            parse_choice("I pick nothing", &["Brainwashed", "Thriller"]),
            Err(PromptError::UnparsableChoice { .. })
        ));
        assert!(parse_choice("Chosen CD: x", &[] as &[&str]).is_err());
    }

    #[test]
    fn choice_with_inline_explanation_and_number() {
        let c = parse_choice("Chosen CD: \"Thriller\" Explanation: dance", &["Brainwashed", "Thriller"]).unwrap();
        assert_eq!((c.index, c.explanation.as_str()), (1, "dance"));
        let n = parse_choice("Chosen CD: 1\nExplanation: first", &["Brainwashed", "Thriller"]).unwrap();
        assert_eq!(n.index, 0);
    }

    #[test]
    fn choice_fallback_single_mention() {
        let c = parse_choice("I would go with Thriller for sure.", &["Brainwashed", "Thriller"]).unwrap();
        assert_eq!(c.index, 1);
        assert!(parse_choice("Thriller or Brainwashed?", &["Brainwashed", "Thriller"]).is_err());
    }

    #[test]
    fn self_intro_label_and_fallback() {
        let p = parse_self_intro("My updated self-introduction: I like jazz.").unwrap();
        assert_eq!(p.text, "I like jazz.");
        assert!(!p.low_confidence);
        assert_eq!(parse_self_intro("My updated self-introduction:   \n "), Err(PromptError::EmptySelfIntro));
        let f = parse_self_intro("I like metal.").unwrap();
        assert!(f.low_confidence);
        assert_eq!(f.text, "I like metal.");
    }

    #[test]
    fn item_descriptions_both_labels() {
        let text = "The updated description of the first CD is: Loud and fast. \n The updated description of the second CD is: Slow and soft.";
        let p = parse_item_descriptions(text).unwrap();
        assert_eq!(p.first, "Loud and fast.");
        assert_eq!(p.second.as_deref(), Some("Slow and soft."));
        assert!(!p.low_confidence);
    }

    #[test]
    fn item_descriptions_unlabeled() {
        let p = parse_item_descriptions("\"X\" is a rock album.").unwrap();
        assert_eq!(p.first, "\"X\" is a rock album.");
        assert!(p.second.is_none());
        assert!(p.low_confidence);
        assert!(parse_item_descriptions("  ").is_err());
    }

    #[test]
    fn description_label() {
        let p = parse_description("The updated description of the CD is: Bright pop.").unwrap();
        assert_eq!(p.text, "Bright pop.");
        assert!(parse_description("").is_err());
    }

    #[test]
    fn ranking_numbered() {
        let r = parse_ranking("1. B\n2. A", &["A", "B"]);
        // single letters are below the containment floor but match exactly
        assert_eq!(r.unwrap().order, [1, 0]);
    }

    #[test]
    fn ranking_completes_permutation() {
        let cands = ["Alpha One", "Beta Two", "Gamma Three", "Delta Four"];
        let r = parse_ranking("Here you go:\n1. Gamma Three\n2. Alpha One\n3. Nonsense Title Here", &cands).unwrap();
        assert_eq!(r.order, [2, 0, 1, 3]);
        assert_eq!(r.matched, 2);
        assert_eq!(r.appended, [1, 3]);
        assert_eq!(r.unmatched, ["Nonsense Title Here"]);
    }

    #[test]
    fn ranking_comma_separated_with_comma_titles() {
        let cands = ["Thriller", "O, Yeah! Ultimate Aerosmith Hits", "Brainwashed"];
        let r = parse_ranking("Brainwashed, O, Yeah! Ultimate Aerosmith Hits, Thriller", &cands).unwrap();
        assert_eq!(r.order, [2, 1, 0]);
        assert!(r.appended.is_empty());
    }

    #[test]
    fn ranking_duplicates_do_not_repeat() {
        let r = parse_ranking("1. Thriller\n2. Thriller\n3. Brainwashed", &["Brainwashed", "Thriller"]).unwrap();
        assert_eq!(r.order, [1, 0]);
    }

    #[test]
    fn ranking_without_matches_fails() {
        assert!(matches!(
            parse_ranking("no idea", &["Brainwashed", "Thriller"]),
            Err(PromptError::UnparsableRanking { .. })
        ));
    }

    #[test]
    fn yes_no() {
        let y = parse_yes_no("Choice: Yes\nExplanation: great").unwrap();
        assert!(y.choice);
        assert_eq!(y.explanation, "great");
        assert!(!parse_yes_no("choice: no.").unwrap().choice);
        assert!(parse_yes_no("Yes, definitely").unwrap().choice);
        assert!(matches!(parse_yes_no("maybe"), Err(PromptError::NoYesNo { .. })));
    }
}
