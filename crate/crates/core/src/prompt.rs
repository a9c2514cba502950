//! One-shot assessment prompt rendering.
//!
//! A rendered prompt always has these sections in order: task framing,
//! analysis requirements, output format, the worked example, the patch under
//! assessment (buggy then fixed), and the closing instruction to start reasoning.
//! Code is wrapped in backtick fences that are always longer than any backtick
//! run inside the code, so sample text can never close a fence early.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::PatchSample;
use crate::error::{Error, Result};
use crate::parser::{self, ANSWER_CLOSE, ANSWER_OPEN, THINK_CLOSE, THINK_OPEN};

pub const DEFAULT_TEMPLATE_ID: &str = "template_v1";
const DEFAULT_TEMPLATE_JSON: &str = include_str!("../templates/template_v1.json");
const CODE_LANGUAGE: &str = "java";

pub const SECTION_REQUIREMENTS: &str = "## Analysis requirements";
pub const SECTION_FORMAT: &str = "## Output format";
pub const SECTION_EXAMPLE: &str = "## Solved example";
pub const SECTION_PATCH: &str = "## Patch to assess";
pub const HEADING_BUGGY: &str = "### Buggy code";
pub const HEADING_FIXED: &str = "### Fixed code";
pub const HEADING_RESPONSE: &str = "### Expected response";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarShot {
    pub buggy_code: String,
    pub fixed_code: String,
    pub ideal_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub task_framing: String,
    pub analysis_requirements: Vec<String>,
    pub output_format_spec: String,
    pub exemplar: ExemplarShot,
    pub reasoning_trigger: String,
    /// Identity threaded into reports; not part of the JSON document.
    #[serde(skip, default = "default_id")]
    pub id: String,
}

fn default_id() -> String {
    DEFAULT_TEMPLATE_ID.to_string()
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.analysis_requirements.is_empty() {
            return Err(Error::Config("template has no analysis requirements".into()));
        }
        for tag in [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE] {
            if !self.output_format_spec.contains(tag) {
                return Err(Error::Config(format!("output format spec does not mention `{tag}`")));
            }
        }
        if !parser::parse(&self.exemplar.ideal_response).is_wellformed() {
            return Err(Error::Config(
                "exemplar ideal response is not a well-formed response".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str, id: impl Into<String>) -> Result<Self> {
        let mut t: PromptTemplate = serde_json::from_str(text)?;
        t.id = id.into();
        t.validate()?;
        Ok(t)
    }

    /// Loads a template file; its id is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(default_id);
        Self::from_json(&text, id)
    }
}

/// The canonical `template_v1` template. Its exemplar is a correct patch that
/// adds a NaN guard to `Complex.add`.
pub fn default_template() -> PromptTemplate {
    PromptTemplate::from_json(DEFAULT_TEMPLATE_JSON, DEFAULT_TEMPLATE_ID)
        .expect("bundled template is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub sample_id: String,
}

fn fence_for(code: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in code.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat((longest + 1).max(3))
}

fn push_code(out: &mut String, heading: &str, code: &str) {
    let fence = fence_for(code);
    out.push_str(heading);
    out.push('\n');
    out.push_str(&fence);
    out.push_str(CODE_LANGUAGE);
    out.push('\n');
    out.push_str(code);
    if !code.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(&fence);
    out.push_str("\n\n");
}

pub fn build_prompt(sample: &PatchSample, template: &PromptTemplate) -> RenderedPrompt {
    let mut out = String::new();
    out.push_str(template.task_framing.trim_end());
    out.push_str("\n\n");

    out.push_str(SECTION_REQUIREMENTS);
    out.push('\n');
    for (i, req) in template.analysis_requirements.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, req));
    }
    out.push('\n');

    out.push_str(SECTION_FORMAT);
    out.push('\n');
    out.push_str(template.output_format_spec.trim_end());
    out.push_str("\n\n");

    out.push_str(SECTION_EXAMPLE);
    out.push('\n');
    push_code(&mut out, HEADING_BUGGY, &template.exemplar.buggy_code);
    push_code(&mut out, HEADING_FIXED, &template.exemplar.fixed_code);
    out.push_str(HEADING_RESPONSE);
    out.push('\n');
    out.push_str(template.exemplar.ideal_response.trim_end());
    out.push_str("\n\n");

    out.push_str(SECTION_PATCH);
    out.push('\n');
    push_code(&mut out, HEADING_BUGGY, &sample.buggy_code);
    push_code(&mut out, HEADING_FIXED, &sample.fixed_code);

    out.push_str(template.reasoning_trigger.trim_end());
    out.push('\n');

    RenderedPrompt {
        text: out,
        sample_id: sample.id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Verdict;

    #[test]
    fn default_template_exemplar_is_correct() {
        let t = default_template();
        t.validate().unwrap();
        assert_eq!(t.id, DEFAULT_TEMPLATE_ID);
        assert_eq!(parser::parse(&t.exemplar.ideal_response).verdict, Some(Verdict::Correct));
        assert!(t.exemplar.fixed_code.contains("return NaN;"));
    }

    #[test]
    fn fence_outgrows_backticks_in_code() {
        assert_eq!(fence_for("plain"), "```");
        assert_eq!(fence_for("a ``` b"), "````");
        assert_eq!(fence_for("`````"), "``````");
    }

    #[test]
    fn invalid_templates_rejected() {
        let mut t = default_template();
        t.analysis_requirements.clear();
        assert!(t.validate().is_err());

        let mut t = default_template();
        t.output_format_spec = "answer inside <answer></answer>".into();
        assert!(t.validate().is_err());

        let mut t = default_template();
        t.exemplar.ideal_response = "<answer>correct</answer>".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn template_json_has_five_fields() {
        let v = serde_json::to_value(default_template()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["analysis_requirements", "exemplar", "output_format_spec", "reasoning_trigger", "task_framing"]
        );
    }
}
