//! Small text utilities shared by the lexical scorer and the output parsers.

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Whitespace-separated word count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_title(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_lowercase().next().unwrap_or(c)
            } else if c.is_whitespace() {
                ' '
            } else {
                '\u{0}'
            }
        })
        .filter(|c| *c != '\u{0}')
        .collect::<String>()
        .split_whitespace()
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Minimum normalized similarity for a fuzzy title match.
pub const FUZZY_THRESHOLD: f64 = 0.8;

const STRONG_SIMILARITY: f64 = 0.9;

/// Shortest normalized echo allowed to match a candidate by containment.
const MIN_CONTAINMENT_LEN: usize = 4;

/// Outcome of matching an echoed title against a candidate list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TitleMatch {
    pub index: usize,
    pub similarity: f64,
}

/// Find the candidate an echoed title refers to.
///
/// Exact normalized equality wins, then a near-exact edit similarity,
/// then containment in either direction (longest candidate first), then
/// the best normalized Levenshtein similarity at or above
/// [`FUZZY_THRESHOLD`]. Candidates for which `skip` returns true are
/// ignored.
pub fn match_title<S: AsRef<str>>(
    echoed: &str,
    candidates: &[S],
    skip: impl Fn(usize) -> bool,
) -> Option<TitleMatch> {
    let needle = normalize_title(echoed);
    if needle.is_empty() {
        return None;
    }
    let normalized: Vec<String> = candidates
        .iter()
        .map(|c| normalize_title(c.as_ref()))
        .collect();

    if let Some(index) = (0..normalized.len()).find(|&i| !skip(i) && normalized[i] == needle) {
        return Some(TitleMatch { index, similarity: 1.0 });
    }

    let fuzzy = |floor: f64| {
        let mut best: Option<TitleMatch> = None;
        for (i, cand) in normalized.iter().enumerate() {
            if skip(i) {
                continue;
            }
            let sim = strsim::normalized_levenshtein(&needle, cand);
            if sim >= floor && best.is_none_or(|b| sim > b.similarity) {
                best = Some(TitleMatch { index: i, similarity: sim });
            }
        }
        best
    };

    // near-exact echoes first: "Blue Moon Rivr" -> "Blue Moon River", not "Blue Moon"
    if let Some(m) = fuzzy(STRONG_SIMILARITY) {
        return Some(m);
    }

    // candidate inside the echo, e.g. `"Title" by Artist`
    let mut best: Option<(usize, usize)> = None;
    for (i, cand) in normalized.iter().enumerate() {
        if skip(i) || cand.len() < MIN_CONTAINMENT_LEN || !contains_words(&needle, cand) {
            continue;
        }
        if best.is_none_or(|(_, len)| cand.len() > len) {
            best = Some((i, cand.len()));
        }
    }
    if let Some((index, _)) = best {
        return Some(TitleMatch { index, similarity: 1.0 });
    }

    // truncated echo inside a candidate; only when unambiguous
    if needle.len() >= MIN_CONTAINMENT_LEN {
        let hits: Vec<usize> = (0..normalized.len())
            .filter(|&i| !skip(i) && contains_words(&normalized[i], &needle))
            .collect();
        if hits.len() == 1 {
            return Some(TitleMatch { index: hits[0], similarity: 1.0 });
        }
    }

    fuzzy(FUZZY_THRESHOLD)
}

/// Word-boundary substring test over normalized strings.
pub(crate) fn contains_words(haystack: &str, needle: &str) -> bool {
    let padded_h = format!(" {haystack} ");
    let padded_n = format!(" {needle} ");
    padded_h.contains(&padded_n)
}

/// Case-insensitive search for `label`, returning the byte offset just past it.
pub fn find_label(text: &str, label: &str) -> Option<usize> {
    let lower = text.to_lowercase();
    // lowercasing can change byte lengths for some scripts; only trust
    // offsets when it did not
    if lower.len() != text.len() {
        return text.find(label).map(|i| i + label.len());
    }
    lower.find(&label.to_lowercase()).map(|i| i + label.len())
}

/// Strip quotes and brackets an LLM leaves around a value when echoing a
/// format string.
pub fn strip_wrapping(text: &str) -> &str {
    let mut s = text.trim();
    loop {
        let before = s;
        for (open, close) in [('"', '"'), ('\'', '\''), ('[', ']'), ('“', '”'), ('*', '*')] {
            if s.len() >= open.len_utf8() + close.len_utf8() && s.starts_with(open) && s.ends_with(close) {
                let inner = &s[open.len_utf8()..s.len() - close.len_utf8()];
                // `"A" and "B"` is content, not a wrapped value
                if open == '*' || !inner.contains([open, close]) {
                    s = inner.trim();
                }
            }
        }
        if s == before {
            return s;
        }
    }
}
