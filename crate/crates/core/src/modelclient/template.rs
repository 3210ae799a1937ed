use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::TaskKind;

pub const PLACEHOLDER: &str = "{input}";

#[derive(Debug, Error, PartialEq)]
#[error("prompt template for {task} must contain exactly one `{{input}}` placeholder, found {found}")]
pub struct TemplateError {
    pub task: TaskKind,
    pub found: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate")]
pub struct PromptTemplate {
    task: TaskKind,
    template: String,
}

#[derive(Deserialize)]
struct RawTemplate {
    task: TaskKind,
    template: String,
}

impl TryFrom<RawTemplate> for PromptTemplate {
    type Error = TemplateError;

    fn try_from(raw: RawTemplate) -> Result<Self, Self::Error> {
        PromptTemplate::new(raw.task, raw.template)
    }
}

impl PromptTemplate {
    pub fn new(task: TaskKind, template: impl Into<String>) -> Result<Self, TemplateError> {
        let template = template.into();
        let found = template.matches(PLACEHOLDER).count();
        if found != 1 {
            return Err(TemplateError { task, found });
        }
        Ok(PromptTemplate { task, template })
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn text(&self) -> &str {
        &self.template
    }

    /// Substitutes the input once; placeholders inside the input are left alone.
    pub fn render(&self, input: &str) -> String {
        let (head, tail) = self
            .template
            .split_once(PLACEHOLDER)
            .expect("validated at construction");
        let mut out = String::with_capacity(head.len() + input.len() + tail.len());
        out.push_str(head);
        out.push_str(input);
        out.push_str(tail);
        out
    }

    pub fn default_for(task: TaskKind) -> Self {
        let text = match task {
            TaskKind::CodeGeneration => "Solve the following programming task. Respond with code only.\n\n{input}",
            TaskKind::TestGeneration => "Write unit tests for the following code. Respond with code only.\n\n{input}",
            TaskKind::ProgramRepair => "Fix the bug in the following code. Respond with the corrected code only.\n\n{input}",
            TaskKind::VulnerabilityDetection => {
                "Does the following code contain a security vulnerability? Name the weakness or answer \"none\".\n\n{input}"
            }
            TaskKind::CodeSummarization => "Summarize what the following code does in one sentence.\n\n{input}",
        };
        PromptTemplate::new(task, text).expect("default templates are valid")
    }
}

/// One template per task; defaults unless overridden.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    templates: BTreeMap<TaskKind, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            templates: TaskKind::ALL.iter().map(|&t| (t, PromptTemplate::default_for(t))).collect(),
        }
    }
}

impl TemplateSet {
    pub fn set(&mut self, template: PromptTemplate) {
        self.templates.insert(template.task(), template);
    }

    pub fn get(&self, task: TaskKind) -> &PromptTemplate {
        &self.templates[&task]
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }
}
