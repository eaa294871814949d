use std::collections::BTreeMap;

use thiserror::Error;

pub const BUNDLED_CATALOG: &str = include_str!("../../content/clarifications.txt");

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("catalog line {line}: expected `key = template`")]
    Syntax { line: usize },
    #[error("catalog has no template `{0}`")]
    MissingKey(String),
    #[error("template `{key}` needs a value for `{name}`")]
    MissingValue { key: String, name: String },
    #[error("template `{key}` has an unclosed placeholder")]
    Unclosed { key: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TemplateValue {
    Number(f64),
    Text(String),
}

impl TemplateValue {
    fn render(&self) -> String {
        match self {
            TemplateValue::Number(v) => format!("{v:.3}"),
            TemplateValue::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for TemplateValue {
    fn from(v: f64) -> Self {
        TemplateValue::Number(v)
    }
}

impl From<&str> for TemplateValue {
    fn from(v: &str) -> Self {
        TemplateValue::Text(v.to_string())
    }
}

impl From<String> for TemplateValue {
    fn from(v: String) -> Self {
        TemplateValue::Text(v)
    }
}

pub type TemplateVars = BTreeMap<String, TemplateValue>;

/// Editable clarification strings keyed by `<filter>.<variant>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClarificationCatalog {
    templates: BTreeMap<String, String>,
}

impl ClarificationCatalog {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_CATALOG).expect("bundled catalog is well formed")
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut templates = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, template) = line.split_once('=').ok_or(CatalogError::Syntax { line: idx + 1 })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CatalogError::Syntax { line: idx + 1 });
            }
            templates.insert(key.to_string(), template.trim().to_string());
        }
        Ok(Self { templates })
    }

    pub fn template(&self, key: &str) -> Result<&str, CatalogError> {
        self.templates
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CatalogError::MissingKey(key.to_string()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(&self, key: &str, vars: &TemplateVars) -> Result<String, CatalogError> {
        let template = self.template(key)?;
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after
                .find('}')
                .ok_or_else(|| CatalogError::Unclosed { key: key.to_string() })?;
            let name = &after[..close];
            let value = vars.get(name).ok_or_else(|| CatalogError::MissingValue {
                key: key.to_string(),
                name: name.to_string(),
            })?;
            out.push_str(&value.render());
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}
