//! Deterministic stand-in for the LLM judge.

use std::collections::{BTreeMap, BTreeSet};

use super::{Classification, ErrorCategory, GapError, Judge, JudgeError};
use crate::record::ErrorKind;
use crate::sqltext::{tokenize, Token, TokenKind};

/// Tables and their columns from CREATE TABLE statements, lowercased.
/// Schema qualifiers are dropped.
pub fn parse_schema_ddl(ddl: &str) -> BTreeMap<String, BTreeSet<String>> {
    let toks = tokenize(ddl);
    let mut out = BTreeMap::new();
    let mut i = 0;
    while i + 2 < toks.len() {
        if !(toks[i].is_word("create") && toks[i + 1].is_word("table")) {
            i += 1;
            continue;
        }
        let mut j = i + 2;
        if toks[j].is_word("if") {
            j += 3; // IF NOT EXISTS
        }
        let mut name = None;
        while j < toks.len() && !toks[j].is_symbol("(") {
            if matches!(toks[j].kind, TokenKind::Word | TokenKind::QuotedIdent) {
                name = Some(toks[j].text.to_lowercase());
            }
            j += 1;
        }
        let Some(name) = name else { break };
        let depth = toks.get(j).map(|t| t.depth + 1).unwrap_or(1);
        let mut columns = BTreeSet::new();
        let mut at_item_start = true;
        j += 1;
        while j < toks.len() && !(toks[j].is_symbol(")") && toks[j].depth + 1 == depth) {
            let t = &toks[j];
            if t.depth == depth {
                if at_item_start && matches!(t.kind, TokenKind::Word | TokenKind::QuotedIdent) {
                    let constraint = t.kind == TokenKind::Word
                        && ["primary", "foreign", "constraint", "unique", "check", "key", "index"]
                            .iter()
                            .any(|k| t.is_word(k));
                    if !constraint {
                        columns.insert(t.text.to_lowercase());
                    }
                }
                at_item_start = t.is_symbol(",");
            }
            j += 1;
        }
        out.insert(name, columns);
        i = j;
    }
    out
}

const KEYWORDS: &[&str] = &[
    "select", "from", "where", "and", "or", "not", "in", "is", "null", "as", "on", "join", "inner", "left",
    "right", "full", "outer", "cross", "natural", "using", "group", "by", "order", "having", "limit", "offset",
    "asc", "desc", "distinct", "all", "any", "some", "exists", "between", "like", "ilike", "glob", "escape",
    "case", "when", "then", "else", "end", "union", "intersect", "except", "with", "recursive", "over",
    "partition", "rows", "range", "unbounded", "preceding", "following", "current", "row", "filter", "nulls",
    "first", "last", "true", "false", "cast", "interval", "fetch", "next", "only", "top", "collate", "lateral",
    "window", "qualify", "similar", "to", "at", "time", "zone", "local", "values", "default", "no", "others",
    "ties", "percent", "div", "mod", "xor", "regexp", "rlike", "binary", "unknown", "separator", "array",
    "struct", "unnest", "format", "final", "sample", "global", "semi", "anti", "asof", "any_value",
];

/// Date parts and type names that appear as bare words in EXTRACT, CAST,
/// INTERVAL and friends.
const NON_IDENTIFIER_WORDS: &[&str] = &[
    "year", "years", "month", "months", "day", "days", "hour", "hours", "minute", "minutes", "second",
    "seconds", "week", "weeks", "quarter", "epoch", "dow", "doy", "isodow", "isoyear", "millisecond",
    "microsecond", "dayofweek", "dayofyear", "date", "timestamp", "datetime", "integer", "int", "bigint",
    "smallint", "tinyint", "int64", "float64", "float", "double", "precision", "real", "numeric", "decimal",
    "number", "text", "varchar", "char", "character", "varying", "string", "boolean", "bool", "signed",
    "unsigned", "blob", "bytea", "bytes", "nvarchar", "timestamptz", "time", "utc",
];

fn is_reserved(word: &str) -> bool {
    let w = word.to_lowercase();
    KEYWORDS.contains(&w.as_str()) || NON_IDENTIFIER_WORDS.contains(&w.as_str())
}

/// Identifiers in `sql` that name neither a table nor a column of the
/// schema, nor anything the query defines itself (aliases, CTE names).
/// Function names, keywords, date parts, type names and qualifiers
/// (`x` in `x.col`) are not checked.
pub fn unknown_identifiers(sql: &str, schema: &BTreeMap<String, BTreeSet<String>>) -> Vec<String> {
    let toks = tokenize(sql);
    let known: BTreeSet<String> =
        schema.keys().cloned().chain(schema.values().flat_map(|c| c.iter().cloned())).collect();
    let is_name = |t: &Token| match t.kind {
        TokenKind::QuotedIdent => true,
        TokenKind::Word => !is_reserved(&t.text),
        _ => false,
    };
    let next_is = |i: usize, s: &str| toks.get(i + 1).is_some_and(|n| n.is_symbol(s));
    let mut local = BTreeSet::new();
    for (i, t) in toks.iter().enumerate() {
        if !is_name(t) {
            continue;
        }
        let prev = i.checked_sub(1).map(|p| &toks[p]);
        let aliased = prev.is_some_and(|p| p.is_word("as") || is_name(p) || p.is_symbol(")"));
        let cte = toks.get(i + 1).is_some_and(|n| n.is_word("as")) && toks.get(i + 2).is_some_and(|n| n.is_symbol("("));
        if aliased || cte {
            local.insert(t.text.to_lowercase());
        }
    }
    let mut unknown = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if !is_name(t) || next_is(i, ".") || (t.kind == TokenKind::Word && next_is(i, "(")) {
            continue;
        }
        let name = t.text.to_lowercase();
        if !known.contains(&name) && !local.contains(&name) && !unknown.contains(&t.text) {
            unknown.push(t.text.clone());
        }
    }
    unknown
}

const AGGREGATES: &[&str] = &["count", "sum", "avg", "min", "max"];

/// Whether the query groups, plus the aggregate functions it calls.
pub fn aggregation_signature(sql: &str) -> (bool, BTreeSet<String>) {
    let toks = tokenize(sql);
    let grouped = toks.windows(2).any(|w| w[0].is_word("group") && w[1].is_word("by"));
    let aggs = toks
        .windows(2)
        .filter(|w| w[1].is_symbol("(") && AGGREGATES.iter().any(|a| w[0].is_word(a)))
        .map(|w| w[0].text.to_lowercase())
        .collect();
    (grouped, aggs)
}

fn schema_error_message(message: &str) -> bool {
    let m = message.to_lowercase();
    let function = m.contains("function");
    m.contains("no such column")
        || m.contains("no such table")
        || m.contains("unknown column")
        || m.contains("unknown table")
        || m.contains("missing columns")
        || m.contains("unknown identifier")
        || (!function && (m.contains("does not exist") || m.contains("doesn't exist")))
}

/// Rule order: unknown identifier or schema error message, then syntax-class
/// engine error, then a different aggregation signature, else filtering.
///
/// It cannot tell a type-confusion logic error from real dialect syntax
/// when the engine reports both as syntax errors, so it leans to
/// dialect_error there.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleJudge;

impl RuleJudge {
    pub fn classify(&self, gap: &GapError) -> Classification {
        let (category, explanation, evidence) = self.decide(gap);
        Classification { question_id: gap.example_id, category, explanation: explanation.to_string(), evidence }
    }

    fn decide(&self, gap: &GapError) -> (ErrorCategory, &'static str, String) {
        let schema = parse_schema_ddl(&gap.schema);
        if !schema.is_empty() {
            let unknown = unknown_identifiers(&gap.pred_sql, &schema);
            if let Some(first) = unknown.first() {
                return (
                    ErrorCategory::SchemaLinkingError,
                    "The prediction references a name absent from the target schema.",
                    first.clone(),
                );
            }
        }
        if let Some(msg) = &gap.pred_error {
            if schema_error_message(msg) {
                return (
                    ErrorCategory::SchemaLinkingError,
                    "The engine reports a missing table or column.",
                    msg.clone(),
                );
            }
            let kind = gap.pred_error_kind.unwrap_or_else(|| ErrorKind::classify_message(msg));
            if msg.to_lowercase().contains("group by") {
                return (ErrorCategory::AggregationError, "The engine rejects the grouping.", msg.clone());
            }
            if kind == ErrorKind::Syntax {
                return (
                    ErrorCategory::DialectError,
                    "The engine rejects syntax or a function the target dialect lacks.",
                    msg.clone(),
                );
            }
        }
        let pred = aggregation_signature(&gap.pred_sql);
        let gold = aggregation_signature(&gap.gold_sql);
        if pred != gold {
            return (
                ErrorCategory::AggregationError,
                "Grouping or aggregate functions differ from the reference query.",
                format!("group by: {} vs {}; aggregates: {:?} vs {:?}", pred.0, gold.0, pred.1, gold.1),
            );
        }
        (
            ErrorCategory::FilteringError,
            "The query runs with the expected shape but selects different rows.",
            gap.pred_error.clone().unwrap_or_default(),
        )
    }
}

impl Judge for RuleJudge {
    fn judge(&self, gap: &GapError, _prompt: &str) -> Result<String, JudgeError> {
        serde_json::to_string(&self.classify(gap)).map_err(|e| JudgeError::Fatal(e.to_string()))
    }
}
