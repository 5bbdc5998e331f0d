//! Prompt construction and SQL extraction from model output.
//!
//! Prompt wording lives in data files under `data/`, versioned by their
//! header line, so it can change without touching code.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xdialect_core::sqltext::strip_trailing_semicolons;
use xdialect_core::{Dialect, Example};

use crate::error::{HarnessError, Result};

pub const PROMPT_VERSION: &str = "v1";

const SYSTEM_HEADER: &str = include_str!("../data/system_v1.txt");

const BUILTIN_GUIDELINES: [(&str, &str); 7] = [
    ("sqlite", include_str!("../data/guidelines/sqlite.txt")),
    ("postgres", include_str!("../data/guidelines/postgres.txt")),
    ("mysql", include_str!("../data/guidelines/mysql.txt")),
    ("clickhouse", include_str!("../data/guidelines/clickhouse.txt")),
    ("snowflake", include_str!("../data/guidelines/snowflake.txt")),
    ("bigquery", include_str!("../data/guidelines/bigquery.txt")),
    ("quirk", include_str!("../data/guidelines/quirk.txt")),
];

/// Exactly five syntax rules for one dialect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialectGuidelines {
    pub dialect: Dialect,
    pub version: String,
    rules: [String; 5],
}

impl DialectGuidelines {
    pub fn new(dialect: Dialect, rules: Vec<String>) -> Result<Self> {
        let bad = |m: String| HarnessError::Guidelines { dialect: dialect.id().to_string(), message: m };
        let rules: Vec<String> = rules.into_iter().map(|r| r.trim().to_string()).collect();
        if let Some(i) = rules.iter().position(String::is_empty) {
            return Err(bad(format!("rule {} is empty", i + 1)));
        }
        let n = rules.len();
        let rules: [String; 5] = rules.try_into().map_err(|_| bad(format!("expected exactly 5 rules, found {n}")))?;
        Ok(DialectGuidelines { dialect, version: PROMPT_VERSION.to_string(), rules })
    }

    /// One rule per line after a `# guidelines <version>: <dialect>` header;
    /// blank lines and other `#` lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().unwrap_or_default();
        let parsed = header
            .strip_prefix("# guidelines ")
            .and_then(|rest| rest.split_once(':'))
            .map(|(v, d)| (v.trim().to_string(), d.trim().to_string()));
        let Some((version, dialect)) = parsed else {
            return Err(HarnessError::Guidelines {
                dialect: "?".into(),
                message: format!("missing '# guidelines <version>: <dialect>' header, got '{header}'"),
            });
        };
        let dialect: Dialect = dialect.parse()?;
        let rules = lines.filter(|l| !l.starts_with('#')).map(str::to_string).collect();
        let mut g = DialectGuidelines::new(dialect, rules)?;
        g.version = version;
        Ok(g)
    }

    pub fn builtin(dialect: &Dialect) -> Result<Self> {
        let (_, text) = BUILTIN_GUIDELINES.iter().find(|(id, _)| *id == dialect.id()).ok_or_else(|| {
            HarnessError::Guidelines { dialect: dialect.id().to_string(), message: "no built-in guidelines; supply a file".into() }
        })?;
        Self::parse(text)
    }

    pub fn rules(&self) -> &[String; 5] {
        &self.rules
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

fn header_body() -> &'static str {
    // first line is the version marker, not prompt text
    SYSTEM_HEADER.split_once('\n').map_or(SYSTEM_HEADER, |(_, rest)| rest)
}

/// System text: header, the five rules, then the schema. User text: the
/// question, evidence if any, and the answer-format instruction.
pub fn build_prompt(example: &Example, ddl: &str, guidelines: &DialectGuidelines) -> Prompt {
    let name = guidelines.dialect.display_name();
    let rules: Vec<String> = guidelines.rules.iter().enumerate().map(|(i, r)| format!("{}. {r}", i + 1)).collect();
    let system = header_body()
        .replace("{guidelines}", &rules.join("\n"))
        .replace("{ddl}", ddl.trim())
        .replace("{dialect}", name)
        .trim_end()
        .to_string();
    let mut user = format!("Question: {}\n", example.question.trim());
    if let Some(ev) = example.evidence.as_deref().map(str::trim).filter(|e| !e.is_empty()) {
        user.push_str(&format!("\nEvidence: {ev}\n"));
    }
    user.push_str(&format!("\nAnswer with a single {name} SQL query in a ```sql code block."));
    Prompt { system, user }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no SQL found in the completion")]
    NoSql,
    #[error("the code block is empty")]
    EmptyBlock,
}

fn keyword_at(s: &str, i: usize, kw: &str) -> bool {
    let b = s.as_bytes();
    let end = i + kw.len();
    s.get(i..end).is_some_and(|w| w.eq_ignore_ascii_case(kw))
        && (i == 0 || !is_word(b[i - 1]))
        && (end == b.len() || !is_word(b[end]))
}

fn is_word(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn find_keyword(s: &str, kw: &str) -> Option<usize> {
    s.char_indices().map(|(i, _)| i).find(|&i| keyword_at(s, i, kw))
}

fn tidy(sql: &str) -> String {
    strip_trailing_semicolons(sql.trim()).trim().to_string()
}

/// The query in a completion: the first fenced block if there is one,
/// otherwise everything from the first SELECT or WITH.
pub fn extract_sql(completion: &str) -> Result<String, ExtractError> {
    if let Some(open) = completion.find("```") {
        let mut body = &completion[open + 3..];
        let info_end = body.find('\n').unwrap_or(body.len());
        let info = body[..info_end].trim();
        if info.is_empty() || info.eq_ignore_ascii_case("sql") {
            body = &body[info_end..];
        } else if info.len() > 3 && info[..3].eq_ignore_ascii_case("sql") && info.as_bytes()[3].is_ascii_whitespace() {
            // ```sql SELECT 1``` on one line
            body = &body[3..];
        }
        let body = body.find("```").map_or(body, |close| &body[..close]);
        let sql = tidy(body);
        return if sql.is_empty() { Err(ExtractError::EmptyBlock) } else { Ok(sql) };
    }
    let select = find_keyword(completion, "select");
    // WITH only counts as a query start when a SELECT follows it
    let with = find_keyword(completion, "with").filter(|&w| select.is_some_and(|s| s > w));
    let start = match (select, with) {
        (Some(s), Some(w)) => s.min(w),
        (Some(s), None) => s,
        _ => return Err(ExtractError::NoSql),
    };
    let sql = tidy(&completion[start..]);
    if sql.is_empty() {
        Err(ExtractError::NoSql)
    } else {
        Ok(sql)
    }
}
