//! Prompt templates for the improvement loop.
//!
//! Templates are plain UTF-8 text with `{placeholder}` slots drawn from a
//! fixed vocabulary. Rendering is a single literal pass over the template:
//! substituted values are never re-scanned, and brace sequences that are not
//! known placeholders pass through untouched (the DSL grammar block and any
//! JSON examples survive verbatim).

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Placeholder names a template may use.
pub const PLACEHOLDERS: [&str; 8] = [
    "model_name",
    "previous_ideas",
    "suggestions",
    "questions",
    "source",
    "errors",
    "baseline_info",
    "history",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateName {
    IdeaGeneration,
    IdeaRefinement,
    CodeGeneration,
    CodeRefinement,
    AnalysisSuccess,
    AnalysisFailure,
}

impl TemplateName {
    pub const ALL: [TemplateName; 6] = [
        TemplateName::IdeaGeneration,
        TemplateName::IdeaRefinement,
        TemplateName::CodeGeneration,
        TemplateName::CodeRefinement,
        TemplateName::AnalysisSuccess,
        TemplateName::AnalysisFailure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateName::IdeaGeneration => "idea-generation",
            TemplateName::IdeaRefinement => "idea-refinement",
            TemplateName::CodeGeneration => "code-generation",
            TemplateName::CodeRefinement => "code-refinement",
            TemplateName::AnalysisSuccess => "analysis-success",
            TemplateName::AnalysisFailure => "analysis-failure",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.name())
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub text: String,
}

impl PromptTemplate {
    /// Known placeholders appearing in this template, in first-use order.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut found = Vec::new();
        for name in PLACEHOLDERS {
            if self.text.contains(&format!("{{{name}}}")) && !found.contains(&name) {
                found.push(name);
            }
        }
        found
    }

    /// Substitute every known placeholder from `bindings`. A known
    /// placeholder present in the text but absent from the bindings is an
    /// error naming it; unknown `{...}` sequences are copied literally.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String> {
        let mut out = String::with_capacity(self.text.len());
        let bytes = self.text.as_bytes();
        let mut i = 0;
        'scan: while i < bytes.len() {
            if bytes[i] == b'{' {
                for name in PLACEHOLDERS {
                    let token = format!("{{{name}}}");
                    if self.text[i..].starts_with(&token) {
                        let Some((_, value)) = bindings.iter().find(|(k, _)| *k == name) else {
                            return Err(Error::UnboundPlaceholder {
                                template: self.name.name().to_string(),
                                placeholder: name.to_string(),
                            });
                        };
                        out.push_str(value);
                        i += token.len();
                        continue 'scan;
                    }
                }
            }
            // Copy one UTF-8 character.
            let ch = self.text[i..].chars().next().unwrap();
            out.push(ch);
            i += ch.len_utf8();
        }
        Ok(out)
    }
}

/// The full set of six templates used by a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub idea_generation: PromptTemplate,
    pub idea_refinement: PromptTemplate,
    pub code_generation: PromptTemplate,
    pub code_refinement: PromptTemplate,
    pub analysis_success: PromptTemplate,
    pub analysis_failure: PromptTemplate,
}

impl PromptSet {
    /// Templates shipped with the library.
    pub fn defaults() -> PromptSet {
        PromptSet {
            idea_generation: PromptTemplate {
                name: TemplateName::IdeaGeneration,
                text: include_str!("../../prompts/idea-generation.txt").to_string(),
            },
            idea_refinement: PromptTemplate {
                name: TemplateName::IdeaRefinement,
                text: include_str!("../../prompts/idea-refinement.txt").to_string(),
            },
            code_generation: PromptTemplate {
                name: TemplateName::CodeGeneration,
                text: include_str!("../../prompts/code-generation.txt").to_string(),
            },
            code_refinement: PromptTemplate {
                name: TemplateName::CodeRefinement,
                text: include_str!("../../prompts/code-refinement.txt").to_string(),
            },
            analysis_success: PromptTemplate {
                name: TemplateName::AnalysisSuccess,
                text: include_str!("../../prompts/analysis-success.txt").to_string(),
            },
            analysis_failure: PromptTemplate {
                name: TemplateName::AnalysisFailure,
                text: include_str!("../../prompts/analysis-failure.txt").to_string(),
            },
        }
    }

    /// Load all six templates from a directory of `<name>.txt` files.
    pub fn from_dir(dir: &Path) -> Result<PromptSet> {
        let load = |name: TemplateName| -> Result<PromptTemplate> {
            let path = dir.join(name.file_name());
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(PromptTemplate { name, text })
        };
        Ok(PromptSet {
            idea_generation: load(TemplateName::IdeaGeneration)?,
            idea_refinement: load(TemplateName::IdeaRefinement)?,
            code_generation: load(TemplateName::CodeGeneration)?,
            code_refinement: load(TemplateName::CodeRefinement)?,
            analysis_success: load(TemplateName::AnalysisSuccess)?,
            analysis_failure: load(TemplateName::AnalysisFailure)?,
        })
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        match name {
            TemplateName::IdeaGeneration => &self.idea_generation,
            TemplateName::IdeaRefinement => &self.idea_refinement,
            TemplateName::CodeGeneration => &self.code_generation,
            TemplateName::CodeRefinement => &self.code_refinement,
            TemplateName::AnalysisSuccess => &self.analysis_success,
            TemplateName::AnalysisFailure => &self.analysis_failure,
        }
    }
}
