//! Meta-prompt templates with `{variable}` substitution. Built-in templates
//! ship with the crate; a template directory can override any of them.

use crate::domain::MutationKind;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
    #[error("template '{template}' references unbound variable '{name}'")]
    UnboundVariable { template: String, name: String },
    #[error("failed to read template dir {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const JUDGE_TEMPLATE: &str = "judge";
pub const APO_GRADIENT_TEMPLATE: &str = "apo_gradient";
pub const APO_EDIT_TEMPLATE: &str = "apo_edit";
pub const OPRO_TEMPLATE: &str = "opro";

pub fn mutation_template_id(kind: MutationKind) -> String {
    format!("mutation_{}", kind.name())
}

const BUILTIN: &[(&str, &str)] = &[
    (
        "mutation_instruction_expansion",
        include_str!("../templates/mutation_instruction_expansion.txt"),
    ),
    (
        "mutation_expert_persona",
        include_str!("../templates/mutation_expert_persona.txt"),
    ),
    (
        "mutation_structural_variation",
        include_str!("../templates/mutation_structural_variation.txt"),
    ),
    (
        "mutation_constraint_addition",
        include_str!("../templates/mutation_constraint_addition.txt"),
    ),
    (
        "mutation_creative_backstory",
        include_str!("../templates/mutation_creative_backstory.txt"),
    ),
    (
        "mutation_task_decomposition",
        include_str!("../templates/mutation_task_decomposition.txt"),
    ),
    (
        "mutation_concise_optimization",
        include_str!("../templates/mutation_concise_optimization.txt"),
    ),
    (
        "mutation_role_assignment",
        include_str!("../templates/mutation_role_assignment.txt"),
    ),
    ("apo_gradient", include_str!("../templates/apo_gradient.txt")),
    ("apo_edit", include_str!("../templates/apo_edit.txt")),
    ("opro", include_str!("../templates/opro.txt")),
    ("judge", include_str!("../templates/judge.txt")),
];

/// A named set of meta-prompt templates.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self {
            templates: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// Built-ins plus any `*.txt` file in `dir` (file stem = template id,
    /// overriding the built-in of the same name).
    pub fn with_overrides_from(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        let entries = std::fs::read_dir(dir).map_err(|source| TemplateError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for entry in entries {
            let entry = entry.map_err(|source| TemplateError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
            let path = entry.path();
            if path.extension().map(|e| e == "txt").unwrap_or(false) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    let text =
                        std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                            path: path.clone(),
                            source,
                        })?;
                    set.templates.insert(stem.to_string(), text);
                }
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Result<&str, TemplateError> {
        self.templates
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::UnknownTemplate(id.to_string()))
    }

    /// Substitute every `{variable}` occurrence in the template. All
    /// variables referenced by the template text must be bound; bound values
    /// may themselves contain braces without being re-expanded.
    pub fn render(
        &self,
        id: &str,
        bindings: &BTreeMap<&str, String>,
    ) -> Result<String, TemplateError> {
        let template = self.get(id)?;
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let tail = &rest[start + 1..];
            match tail.find('}') {
                Some(end) if is_variable_name(&tail[..end]) => {
                    let name = &tail[..end];
                    match bindings.get(name) {
                        Some(value) => out.push_str(value),
                        None => {
                            return Err(TemplateError::UnboundVariable {
                                template: id.to_string(),
                                name: name.to_string(),
                            })
                        }
                    }
                    rest = &tail[end + 1..];
                }
                _ => {
                    out.push('{');
                    rest = tail;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn is_variable_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}
