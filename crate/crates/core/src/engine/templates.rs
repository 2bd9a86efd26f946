//! Prompt templates: editable text files with `[system]` and `[user]`
//! sections and `{name}` placeholders.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::gateway::ChatMessage;

/// Placeholder names templates may use.
pub const PLACEHOLDERS: &[&str] = &[
    "genes",
    "parent_term",
    "child_term",
    "candidates",
    "count",
    "relation_examples",
    "exemplars",
    "pathways",
];

/// Every template the crate ships, by file stem.
pub const TEMPLATE_NAMES: &[&str] = &[
    "initial",
    "subsequent",
    "vote",
    "final",
    "edge_label",
    "io_zero_shot",
    "io_zero_shot_9",
    "few_shot",
    "cot",
];

const DEFAULTS: &[(&str, &str)] = &[
    ("initial", include_str!("../../templates/initial.txt")),
    ("subsequent", include_str!("../../templates/subsequent.txt")),
    ("vote", include_str!("../../templates/vote.txt")),
    ("final", include_str!("../../templates/final.txt")),
    ("edge_label", include_str!("../../templates/edge_label.txt")),
    ("io_zero_shot", include_str!("../../templates/io_zero_shot.txt")),
    ("io_zero_shot_9", include_str!("../../templates/io_zero_shot_9.txt")),
    ("few_shot", include_str!("../../templates/few_shot.txt")),
    ("cot", include_str!("../../templates/cot.txt")),
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template `{template}`: placeholder {{{placeholder}}} is not bound")]
    Unbound { template: String, placeholder: String },
    #[error("template `{template}`: unknown placeholder {{{placeholder}}}")]
    UnknownPlaceholder { template: String, placeholder: String },
    #[error("template `{0}`: missing [user] section")]
    MissingUser(String),
    #[error("no template named `{0}`")]
    Missing(String),
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub system_text: String,
    pub user_template: String,
}

impl PromptTemplate {
    /// Parse the `[system]` / `[user]` file layout. Text before any section
    /// header is treated as the user section.
    pub fn parse(name: &str, text: &str) -> Result<Self, TemplateError> {
        let mut system = String::new();
        let mut user = String::new();
        let mut current: Option<&mut String> = None;
        let mut saw_user = false;
        for line in text.lines() {
            match line.trim() {
                "[system]" => current = Some(&mut system),
                "[user]" => {
                    saw_user = true;
                    current = Some(&mut user);
                }
                _ => {
                    let target = match current.as_deref_mut() {
                        Some(t) => t,
                        None => {
                            saw_user = true;
                            current = Some(&mut user);
                            current.as_deref_mut().unwrap()
                        }
                    };
                    target.push_str(line);
                    target.push('\n');
                }
            }
        }
        if !saw_user {
            return Err(TemplateError::MissingUser(name.to_string()));
        }
        let template = PromptTemplate {
            name: name.to_string(),
            system_text: system.trim().to_string(),
            user_template: user.trim().to_string(),
        };
        for text in [&template.system_text, &template.user_template] {
            for ph in placeholders_in(text) {
                if !PLACEHOLDERS.contains(&ph) {
                    return Err(TemplateError::UnknownPlaceholder {
                        template: name.to_string(),
                        placeholder: ph.to_string(),
                    });
                }
            }
        }
        Ok(template)
    }

    /// Placeholders used by this template, in first-use order.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for ph in placeholders_in(&self.system_text).chain(placeholders_in(&self.user_template)) {
            if !out.contains(&ph) {
                out.push(ph);
            }
        }
        out
    }

    /// Substitute every placeholder. Values are inserted verbatim and never
    /// re-scanned.
    pub fn render(&self, bindings: &Bindings) -> Result<Vec<ChatMessage>, TemplateError> {
        let mut messages = Vec::with_capacity(2);
        if !self.system_text.is_empty() {
            messages.push(ChatMessage::system(self.fill(&self.system_text, bindings)?));
        }
        messages.push(ChatMessage::user(self.fill(&self.user_template, bindings)?));
        Ok(messages)
    }

    fn fill(&self, text: &str, bindings: &Bindings) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let after = &rest[start + 1..];
            match after.find('}') {
                Some(end) if is_placeholder_name(&after[..end]) => {
                    let name = &after[..end];
                    let value = bindings.get(name).ok_or_else(|| TemplateError::Unbound {
                        template: self.name.clone(),
                        placeholder: name.to_string(),
                    })?;
                    out.push_str(value);
                    rest = &after[end + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_' || b.is_ascii_digit())
}

fn placeholders_in(text: &str) -> impl Iterator<Item = &str> {
    text.match_indices('{').filter_map(move |(i, _)| {
        let after = &text[i + 1..];
        let end = after.find('}')?;
        let name = &after[..end];
        is_placeholder_name(name).then_some(name)
    })
}

/// Placeholder values for one rendering.
#[derive(Debug, Clone, Default)]
pub struct Bindings(BTreeMap<&'static str, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &'static str, value: impl Into<String>) -> Self {
        self.0.insert(name, value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

/// The full set of prompt templates.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = DEFAULTS
            .iter()
            .map(|(name, text)| {
                let t = PromptTemplate::parse(name, text).expect("bundled template parses");
                (name.to_string(), t)
            })
            .collect();
        TemplateSet { templates }
    }
}

impl TemplateSet {
    /// Defaults, with any `<name>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })?;
            set.templates
                .insert(name.to_string(), PromptTemplate::parse(name, &text)?);
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .get(name)
            .ok_or_else(|| TemplateError::Missing(name.to_string()))
    }

    pub fn render(&self, name: &str, bindings: &Bindings) -> Result<Vec<ChatMessage>, TemplateError> {
        self.get(name)?.render(bindings)
    }
}
