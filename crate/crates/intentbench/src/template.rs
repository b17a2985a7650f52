//! Versioned prompt templates for the proposal, selection and direct-answer
//! stages.
//!
//! Templates are plain text files with a `[system]` and a `[user]` section
//! and the placeholders `{query}`, `{k}` and `{options}`. Built-in defaults
//! are compiled into the crate; a templates directory can override any of
//! them by name.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// A named, versioned two-part prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub system_text: String,
    pub user_template: String,
    pub version: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template {name:?} is missing required placeholder {{{placeholder}}}")]
    MissingPlaceholder { name: String, placeholder: String },
    #[error("rendered template {name:?} still contains placeholder {{{placeholder}}}")]
    ResidualPlaceholder { name: String, placeholder: String },
    #[error("template file {0:?} has no [user] section")]
    NoUserSection(String),
    #[error("no template named {0:?} (no file in the templates directory, not a built-in)")]
    NotFound(String),
    #[error("failed to read template {path:?}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PromptTemplate {
    /// Parses the template file format:
    ///
    /// ```text
    /// version: 1
    /// [system]
    /// ...optional system text...
    /// [user]
    /// ...user text with {query} {k} {options}...
    /// ```
    pub fn parse(name: &str, text: &str) -> Result<Self, TemplateError> {
        let mut version = "0".to_string();
        let mut system = String::new();
        let mut user = String::new();
        let mut section: Option<&mut String> = None;
        let mut saw_user = false;
        for line in text.lines() {
            let trimmed = line.trim();
            match trimmed {
                "[system]" => section = Some(&mut system),
                "[user]" => {
                    saw_user = true;
                    section = Some(&mut user);
                }
                _ => {
                    if section.is_none() {
                        if let Some(v) = trimmed.strip_prefix("version:") {
                            version = v.trim().to_string();
                            continue;
                        }
                        if trimmed.is_empty() {
                            continue;
                        }
                    }
                    if let Some(buf) = section.as_deref_mut() {
                        if !buf.is_empty() {
                            buf.push('\n');
                        }
                        buf.push_str(line);
                    }
                }
            }
        }
        if !saw_user {
            return Err(TemplateError::NoUserSection(name.to_string()));
        }
        Ok(PromptTemplate {
            name: name.to_string(),
            system_text: system.trim().to_string(),
            user_template: user.trim().to_string(),
            version,
        })
    }

    /// Checks every placeholder the stage needs exists in the user template.
    pub fn require(&self, placeholders: &[&str]) -> Result<(), TemplateError> {
        for p in placeholders {
            if !self.user_template.contains(&format!("{{{p}}}")) {
                return Err(TemplateError::MissingPlaceholder {
                    name: self.name.clone(),
                    placeholder: p.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Substitutes all bindings and rejects any residual `{placeholder}`
    /// marker.
    pub fn render_user(&self, bindings: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let mut out = self.user_template.clone();
        for (key, value) in bindings {
            out = out.replace(&format!("{{{key}}}"), value);
        }
        if let Some(residual) = find_placeholder(&out) {
            return Err(TemplateError::ResidualPlaceholder {
                name: self.name.clone(),
                placeholder: residual,
            });
        }
        Ok(out)
    }
}

/// First `{lower_snake}` marker in the text, if any.
fn find_placeholder(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while let Some(start) = text[i..].find('{').map(|p| p + i) {
        let rest = &bytes[start + 1..];
        let len = rest
            .iter()
            .take_while(|c| c.is_ascii_lowercase() || **c == b'_')
            .count();
        if len > 0 && rest.get(len) == Some(&b'}') {
            return Some(text[start + 1..start + 1 + len].to_string());
        }
        i = start + 1;
    }
    None
}

const BUILTIN_TEMPLATES: &[(&str, &str)] = &[
    ("propose_default", include_str!("../templates/propose_default.txt")),
    ("propose_retry", include_str!("../templates/propose_retry.txt")),
    ("select_default", include_str!("../templates/select_default.txt")),
    ("select_retry", include_str!("../templates/select_retry.txt")),
    ("direct_default", include_str!("../templates/direct_default.txt")),
];

/// Loads a template by name: a `<name>.txt` file in `dir` wins, otherwise
/// the built-in of that name.
pub fn load_template(dir: Option<&Path>, name: &str) -> Result<PromptTemplate, TemplateError> {
    if let Some(dir) = dir {
        let path = dir.join(format!("{name}.txt"));
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })?;
            return PromptTemplate::parse(name, &text);
        }
    }
    BUILTIN_TEMPLATES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| PromptTemplate::parse(n, text))
        .unwrap_or_else(|| Err(TemplateError::NotFound(name.to_string())))
}

/// The retry variant of a template: `<name>_retry` if it resolves, else the
/// built-in retry template for the stage.
pub fn load_retry_template(
    dir: Option<&Path>,
    base_name: &str,
    stage_fallback: &str,
) -> Result<PromptTemplate, TemplateError> {
    let retry_name = format!("{base_name}_retry");
    match load_template(dir, &retry_name) {
        Ok(t) => Ok(t),
        Err(TemplateError::NotFound(_)) => load_template(dir, stage_fallback),
        Err(e) => Err(e),
    }
}
