//! `{{placeholder}}` prompt templates.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{template}` uses unknown placeholder `{{{{{name}}}}}`")]
    UnknownPlaceholder { template: String, name: String },
    #[error("cannot read template {0}")]
    Io(String),
}

pub const JUDGE_SYSTEM: &str = "judge.system";
pub const JUDGE_USER: &str = "judge.user";
pub const COUNSEL_SYSTEM: &str = "counsel.system";
pub const COUNSEL_USER: &str = "counsel.user";
pub const ADJUDICATOR_SYSTEM: &str = "adjudicator.system";
pub const ADJUDICATOR_USER: &str = "adjudicator.user";

const BUILTIN: [(&str, &str); 6] = [
    (JUDGE_SYSTEM, include_str!("../../templates/judge.system.txt")),
    (JUDGE_USER, include_str!("../../templates/judge.user.txt")),
    (COUNSEL_SYSTEM, include_str!("../../templates/counsel.system.txt")),
    (COUNSEL_USER, include_str!("../../templates/counsel.user.txt")),
    (ADJUDICATOR_SYSTEM, include_str!("../../templates/adjudicator.system.txt")),
    (ADJUDICATOR_USER, include_str!("../../templates/adjudicator.user.txt")),
];

/// The six role prompts. Files are named `<name>.txt`, e.g. `judge.user.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    name: String,
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
            name: "builtin".into(),
            templates: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Loads templates from `dir`; any file that is absent falls back to the built-in text.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        if !dir.is_dir() {
            return Err(TemplateError::Io(format!("{} is not a directory", dir.display())));
        }
        let mut set = Self::builtin();
        set.name = dir.display().to_string();
        for (name, _) in BUILTIN {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
                set.templates.insert(name.to_string(), text);
            }
        }
        Ok(set)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn render(&self, template: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let text = self.templates.get(template).ok_or_else(|| TemplateError::UnknownPlaceholder {
            template: template.to_string(),
            name: "<missing template>".into(),
        })?;
        render(template, text, vars)
    }
}

/// Substitutes every `{{name}}` in `text`. Substituted values are not rescanned.
pub fn render(template: &str, text: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else { break };
        let name = rest[open + 2..open + 2 + close].trim();
        let value = vars.get(name).ok_or_else(|| TemplateError::UnknownPlaceholder {
            template: template.to_string(),
            name: name.to_string(),
        })?;
        out.push_str(&rest[..open]);
        out.push_str(value);
        rest = &rest[open + 2 + close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}
