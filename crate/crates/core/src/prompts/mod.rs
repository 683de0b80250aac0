//! Prompt templates and parsers for the structured replies they ask for.

mod parse;
mod template;

pub use parse::{
    parse_choice, parse_description, parse_item_descriptions, parse_ranking, parse_self_intro,
    parse_yes_no, ParsedChoice, ParsedDescription, ParsedItemDescriptions, ParsedRanking,
    ParsedSelfIntro, ParsedYesNo,
};
pub use template::{Catalog, Template};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("template catalog entry {name}: {reason}")]
    Catalog { name: String, reason: String },
    #[error("template {template}: placeholder `{placeholder}` is not bound")]
    Unbound { template: String, placeholder: String },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("could not identify the chosen item in: {raw:?}")]
    UnparsableChoice { raw: String },
    #[error("self-introduction is empty")]
    EmptySelfIntro,
    #[error("no candidate titles found in ranking: {raw:?}")]
    UnparsableRanking { raw: String },
    #[error("no Yes/No answer in: {raw:?}")]
    NoYesNo { raw: String },
    #[error("item description is empty")]
    EmptyDescription,
}
