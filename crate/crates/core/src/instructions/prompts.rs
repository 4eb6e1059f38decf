use std::collections::BTreeMap;

use regex::RegexBuilder;

use crate::datamodel::TaskKind;
use crate::error::{Error, Result};

/// Placeholder standing for the sketch image inside prompts.
pub const SKETCH_TOKEN: &str = "<sketch>";

const QUESTION_SLOT: &str = "{question}";

const MIN_TEMPLATES: usize = 3;

/// Prompt templates per task plus the pretraining templates. Templates never
/// name the class: the sketch is the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPool {
    tasks: BTreeMap<TaskKind, Vec<String>>,
    pretrain: Vec<String>,
}

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for PromptPool {
    fn default() -> Self {
        let tasks = BTreeMap::from([
            (
                TaskKind::Count,
                owned(&[
                    "How many objects like the one drawn in <sketch> appear in this image? Answer with a single integer.",
                    "Count the instances of the sketched object <sketch> in the image.",
                    "<sketch> Using this sketch as the query, count how many matching objects are visible.",
                    "Look at the sketch <sketch>. How many of these can you find in the image?",
                ]),
            ),
            (
                TaskKind::Detect,
                owned(&[
                    "Locate every object in the image that matches the sketch <sketch>. Return boxes as {[x1, y1, x2, y2]}.",
                    "<sketch> Find all instances of the sketched object and give their bounding boxes.",
                    "Give the bounding boxes of all objects matching this sketch: <sketch>.",
                ]),
            ),
            (
                TaskKind::Vqa,
                owned(&[
                    "Referring to the object drawn in <sketch>: {question}",
                    "<sketch> {question}",
                    "Use the sketch <sketch> to identify the object in question. {question}",
                ]),
            ),
            (
                TaskKind::Sbir,
                owned(&[
                    "Does the image contain the object drawn in <sketch>? Answer yes or no.",
                    "<sketch> Is the sketched object present in this image? Reply with yes or no.",
                    "Answer yes or no: does this image match the sketch <sketch>?",
                ]),
            ),
        ]);
        let pretrain = owned(&[
            "Describe the image with respect to the object drawn in <sketch>.",
            "<sketch> Find the sketched object in the image, describe it and its surroundings, and give its bounding boxes.",
            "Explain what the sketch <sketch> depicts in this image and where it appears.",
        ]);
        Self { tasks, pretrain }
    }
}

impl PromptPool {
    pub fn new(tasks: BTreeMap<TaskKind, Vec<String>>, pretrain: Vec<String>) -> Result<Self> {
        let pool = Self { tasks, pretrain };
        pool.validate()?;
        Ok(pool)
    }

    /// Section format: a `[COUNT]`, `[BBOX]`, `[VQA]`, `[SBIR]` or `[PRETRAIN]`
    /// header followed by one template per line. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tasks: BTreeMap<TaskKind, Vec<String>> = BTreeMap::new();
        let mut pretrain = Vec::new();
        let mut section: Option<Option<TaskKind>> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name.trim() {
                    "PRETRAIN" => None,
                    other => Some(TaskKind::from_descriptor(other).ok_or_else(|| {
                        Error::InvalidParameter(format!("line {}: unknown section [{other}]", n + 1))
                    })?),
                });
                continue;
            }
            match section {
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "line {}: template outside a section",
                        n + 1
                    )))
                }
                Some(Some(task)) => tasks.entry(task).or_default().push(line.to_string()),
                Some(None) => pretrain.push(line.to_string()),
            }
        }
        Self::new(tasks, pretrain)
    }

    pub fn validate(&self) -> Result<()> {
        for task in TaskKind::ALL {
            let list = self.templates(task);
            if list.len() < MIN_TEMPLATES {
                return Err(Error::InvalidParameter(format!(
                    "{task} needs at least {MIN_TEMPLATES} templates, has {}",
                    list.len()
                )));
            }
            for t in list {
                if !t.contains(SKETCH_TOKEN) {
                    return Err(Error::InvalidParameter(format!("{task} template lacks {SKETCH_TOKEN}: {t:?}")));
                }
                if task == TaskKind::Vqa && !t.contains(QUESTION_SLOT) {
                    return Err(Error::InvalidParameter(format!("VQA template lacks {QUESTION_SLOT}: {t:?}")));
                }
            }
        }
        if self.pretrain.len() < MIN_TEMPLATES {
            return Err(Error::InvalidParameter(format!(
                "pretraining needs at least {MIN_TEMPLATES} templates"
            )));
        }
        Ok(())
    }

    /// Fails if any template spells out one of `class_names`.
    pub fn check_class_free(&self, class_names: &[String]) -> Result<()> {
        let all = self.tasks.values().flatten().chain(&self.pretrain);
        let templates: Vec<&String> = all.collect();
        for name in class_names.iter().filter(|n| !n.trim().is_empty()) {
            let re = RegexBuilder::new(&format!(r"\b{}\b", regex::escape(name.trim())))
                .case_insensitive(true)
                .build()
                .expect("escaped pattern");
            if let Some(t) = templates.iter().find(|t| re.is_match(t)) {
                return Err(Error::InvalidParameter(format!(
                    "template names class {name:?}: {t:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn templates(&self, task: TaskKind) -> &[String] {
        self.tasks.get(&task).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn pretrain_templates(&self) -> &[String] {
        &self.pretrain
    }

    /// Descriptor, a space, then the template.
    pub fn render(task: TaskKind, template: &str) -> String {
        format!("{} {template}", task.descriptor())
    }

    pub fn render_question(template: &str, question: &str) -> String {
        template.replace(QUESTION_SLOT, question.trim())
    }
}
