use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::PromptError;

/// A prompt body with `${name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub name: String,
    pub body: String,
    pub required: BTreeSet<String>,
}

/// Placeholder names in order of appearance (with repeats).
fn placeholders(body: &str) -> Result<Vec<&str>, String> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("${") {
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| "unterminated `${` in template body".to_string())?;
        let name = &after[..end];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("invalid placeholder name `{name}`"));
        }
        out.push(name);
        rest = &after[end + 1..];
    }
    Ok(out)
}

impl Template {
    pub fn new(name: &str, body: &str) -> Result<Self, PromptError> {
        let required = placeholders(body)
            .map_err(|reason| PromptError::Catalog { name: name.to_string(), reason })?
            .into_iter()
            .map(str::to_string)
            .collect();
        Ok(Self { name: name.to_string(), body: body.to_string(), required })
    }

    /// Parse a catalog file: a `---` delimited header with `name` and
    /// `required` (and `#` comment lines), then the body. One trailing
    /// newline is dropped from the body.
    pub fn parse(source: &str) -> Result<Self, PromptError> {
        let bad = |reason: &str| PromptError::Catalog { name: "<unnamed>".into(), reason: reason.into() };
        let rest = source.strip_prefix("---\n").ok_or_else(|| bad("missing front matter"))?;
        let (header, body) = rest.split_once("\n---\n").ok_or_else(|| bad("unterminated front matter"))?;
        let mut name = None;
        let mut declared: Option<BTreeSet<String>> = None;
        for line in header.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| bad("header line without `:`"))?;
            match key.trim() {
                "name" => name = Some(value.trim().to_string()),
                "required" => {
                    let list = value.trim().trim_start_matches('[').trim_end_matches(']');
                    declared = Some(
                        list.split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(str::to_string)
                            .collect(),
                    );
                }
                other => return Err(bad(&format!("unknown header key `{other}`"))),
            }
        }
        let name = name.ok_or_else(|| bad("missing name"))?;
        let body = body.strip_suffix('\n').unwrap_or(body);
        let template = Template::new(&name, body)?;
        if let Some(declared) = declared {
            if declared != template.required {
                return Err(PromptError::Catalog {
                    name,
                    reason: format!(
                        "declared placeholders {:?} differ from body placeholders {:?}",
                        declared, template.required
                    ),
                });
            }
        }
        Ok(template)
    }

    /// Substitute every placeholder. Unknown bindings are ignored with a warning.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        if let Some(missing) = self.required.iter().find(|r| !bindings.contains_key(r.as_str())) {
            return Err(PromptError::Unbound { template: self.name.clone(), placeholder: missing.clone() });
        }
        for key in bindings.keys() {
            if !self.required.contains(*key) {
                log::warn!("template {}: unused binding `{key}`", self.name);
            }
        }
        let mut out = String::with_capacity(self.body.len() + 256);
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("${") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after.find('}').expect("validated at construction");
            out.push_str(&bindings[&after[..end]]);
            rest = &after[end + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../prompts/", $name, ".tmpl")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin!(
    "select_pair",
    "reflect_user",
    "reflect_items",
    "consolidate_success",
    "rank_basic",
    "rank_retrieval",
    "rank_history",
    "rank_zero_shot",
    "review_positive",
    "review_negative",
    "decide_before_reviews",
    "decide_after_reviews",
    "query_preference",
    "warmup_cold",
);

/// Templates keyed by name.
#[derive(Debug, Clone)]
pub struct Catalog {
    templates: BTreeMap<String, Template>,
}

impl Catalog {
    /// The shipped catalog, compiled in.
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(file, src)| {
                let t = Template::parse(src).unwrap_or_else(|e| panic!("builtin template {file}: {e}"));
                (t.name.clone(), t)
            })
            .collect();
        Self { templates }
    }

    /// Built-in catalog with every `*.tmpl` in `dir` overriding by name.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut catalog = Self::builtin();
        let entries = std::fs::read_dir(dir).map_err(|e| PromptError::Catalog {
            name: dir.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut paths: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "tmpl"))
            .collect();
        paths.sort();
        for path in paths {
            let src = std::fs::read_to_string(&path).map_err(|e| PromptError::Catalog {
                name: path.display().to_string(),
                reason: e.to_string(),
            })?;
            let t = Template::parse(&src)?;
            catalog.templates.insert(t.name.clone(), t);
        }
        Ok(catalog)
    }

    pub fn get(&self, name: &str) -> Result<&Template, PromptError> {
        self.templates.get(name).ok_or_else(|| PromptError::UnknownTemplate(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(&self, name: &str, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        self.get(name)?.render(bindings)
    }
}
