use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::docmodel::Category;

const PLAIN_TEMPLATE: &str = include_str!("../../resources/prompts/plain.txt");
const FORMULA_TEMPLATE: &str = include_str!("../../resources/prompts/formula.txt");
const TABLE_TEMPLATE: &str = include_str!("../../resources/prompts/table.txt");
const MULTICOLUMN_TEMPLATE: &str = include_str!("../../resources/prompts/multicolumn.txt");

pub const DEFAULT_STYLES: [&str; 9] = [
    "Exam paper",
    "slides",
    "academic paper",
    "book",
    "textbook",
    "magazine",
    "notes",
    "newspaper",
    "financial report",
];

const PLACEHOLDERS: [&str; 4] = ["TOPIC", "SEED", "TABLE", "STYLES"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSpec {
    pub category: Category,
    pub topic: String,
    pub seed: u64,
    pub columns: u8,
    pub style_pool: Vec<String>,
}

impl GenSpec {
    pub fn new(category: Category, topic: impl Into<String>, seed: u64) -> Self {
        let columns = if category == Category::MultiColumn { 2 } else { 1 };
        Self {
            category,
            topic: topic.into(),
            seed,
            columns,
            style_pool: DEFAULT_STYLES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        match (self.category, self.columns) {
            (Category::RealWorld, _) => Err(PromptError::UnknownCategory(self.category)),
            (Category::MultiColumn, 2 | 3) => Ok(()),
            (cat, 1) if cat != Category::MultiColumn => Ok(()),
            (category, columns) => Err(PromptError::Columns { category, columns }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub category: Category,
    pub substitutions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("category {0:?} has no generation template")]
    UnknownCategory(Category),
    #[error("category {0:?} requires a table")]
    MissingTable(Category),
    #[error("category {category:?} cannot use {columns} columns")]
    Columns { category: Category, columns: u8 },
}

fn template_for(category: Category) -> Result<&'static str, PromptError> {
    match category {
        Category::PlainOnly => Ok(PLAIN_TEMPLATE),
        Category::WithFormula => Ok(FORMULA_TEMPLATE),
        Category::WithTable => Ok(TABLE_TEMPLATE),
        Category::MultiColumn => Ok(MULTICOLUMN_TEMPLATE),
        Category::RealWorld => Err(PromptError::UnknownCategory(category)),
    }
}

/// Replaces every placeholder in one left-to-right pass, so substituted
/// values are never rescanned.
fn substitute(template: &str, values: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    loop {
        let next = PLACEHOLDERS
            .iter()
            .filter(|p| values.contains_key(**p))
            .filter_map(|p| rest.find(p).map(|i| (i, *p)))
            .min();
        match next {
            Some((i, p)) => {
                out.push_str(&rest[..i]);
                out.push_str(&values[p]);
                rest = &rest[i + p.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

pub fn build_prompt(spec: &GenSpec, table_html: Option<&str>) -> Result<PromptText, PromptError> {
    spec.validate()?;
    let template = template_for(spec.category)?;
    let mut values = BTreeMap::new();
    values.insert("SEED".to_string(), spec.seed.to_string());
    if template.contains("TOPIC") {
        values.insert("TOPIC".to_string(), spec.topic.clone());
    }
    if template.contains("STYLES") {
        values.insert("STYLES".to_string(), spec.style_pool.join(", "));
    }
    if spec.category == Category::WithTable {
        let table = table_html.ok_or(PromptError::MissingTable(spec.category))?;
        values.insert("TABLE".to_string(), table.to_string());
    }
    Ok(PromptText {
        text: substitute(template, &values),
        category: spec.category,
        substitutions: values,
    })
}
