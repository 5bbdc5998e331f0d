//! Benchmark ingestion: Spider/BIRD-shaped JSON into [`BenchmarkSpec`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, DeserializeSeed, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::dialect::Dialect;
use crate::error::{CoreError, Result};

/// One natural-language question with its gold query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: i64,
    pub question: String,
    pub gold_sql: String,
    pub db_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub name: String,
    pub source_dialect: Dialect,
    pub examples: Vec<Example>,
    /// db_id to source database file. Filled by [`BenchmarkSpec::attach_registry`].
    #[serde(default)]
    pub db_registry: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkFormat {
    SpiderJson,
    BirdJson,
}

impl BenchmarkFormat {
    pub fn default_name(&self) -> &'static str {
        match self {
            BenchmarkFormat::SpiderJson => "spider",
            BenchmarkFormat::BirdJson => "bird",
        }
    }
}

impl std::str::FromStr for BenchmarkFormat {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spider" | "spider_json" => Ok(BenchmarkFormat::SpiderJson),
            "bird" | "bird_json" => Ok(BenchmarkFormat::BirdJson),
            other => Err(CoreError::Parse(format!("unknown benchmark format '{other}'"))),
        }
    }
}

/// Parse a benchmark file. Examples get ids by array position, starting at 0.
///
/// Both formats accept either `query` or `SQL` for the gold query; the
/// format only decides the default benchmark name.
pub fn parse_benchmark(bytes: &[u8], format: BenchmarkFormat) -> Result<BenchmarkSpec> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let elements = IndexedElements
        .deserialize(&mut de)
        .map_err(|e| CoreError::Parse(e.to_string()))?;
    de.end().map_err(|e| CoreError::Parse(e.to_string()))?;

    let mut examples = Vec::with_capacity(elements.len());
    for (index, element) in elements.into_iter().enumerate() {
        examples.push(example_from_value(index, element)?);
    }
    if examples.is_empty() {
        return Err(CoreError::Schema("benchmark contains no examples".into()));
    }
    Ok(BenchmarkSpec {
        name: format.default_name().to_string(),
        source_dialect: Dialect::Sqlite,
        examples,
        db_registry: BTreeMap::new(),
    })
}

fn example_from_value(index: usize, value: Value) -> Result<Example> {
    let Value::Object(map) = value else {
        return Err(CoreError::Schema(format!("element at index {index} is not an object")));
    };
    let string_field = |keys: &[&str], label: &str| -> Result<String> {
        for key in keys {
            match map.get(*key) {
                Some(Value::String(s)) => return Ok(s.clone()),
                Some(Value::Null) | None => continue,
                Some(_) => {
                    return Err(CoreError::Schema(format!(
                        "{label} is not a string at index {index}"
                    )))
                }
            }
        }
        Err(CoreError::Schema(format!("{label} missing at index {index}")))
    };
    let question = string_field(&["question"], "question")?;
    let gold_sql = string_field(&["query", "SQL"], "query")?;
    if gold_sql.trim().is_empty() {
        return Err(CoreError::Schema(format!("query empty at index {index}")));
    }
    let db_id = string_field(&["db_id"], "db_id")?;
    let evidence = match map.get("evidence") {
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
        _ => None,
    };
    Ok(Example { id: index as i64, question, gold_sql, db_id, evidence })
}

/// Deserializes a top-level array element by element so that syntax errors
/// can name the element they occurred in.
struct IndexedElements;

impl<'de> DeserializeSeed<'de> for IndexedElements {
    type Value = Vec<Value>;

    fn deserialize<D: Deserializer<'de>>(self, deserializer: D) -> Result<Self::Value, D::Error> {
        deserializer.deserialize_seq(self)
    }
}

impl<'de> Visitor<'de> for IndexedElements {
    type Value = Vec<Value>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a JSON array of benchmark examples")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
        let mut out = Vec::new();
        loop {
            match seq.next_element::<Value>() {
                Ok(Some(v)) => out.push(v),
                Ok(None) => return Ok(out),
                Err(e) => {
                    return Err(de::Error::custom(format!("element at index {}: {e}", out.len())))
                }
            }
        }
    }
}

/// Problem found by [`validate_benchmark`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    DuplicateId(i64),
    MissingDatabase { db_id: String, searched: PathBuf },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::DuplicateId(id) => write!(f, "duplicate id {id}"),
            ValidationIssue::MissingDatabase { db_id, searched } => {
                write!(f, "database \"{db_id}\" not found under {}", searched.display())
            }
        }
    }
}

/// Locate `<root>/<db_id>.<ext>` or the Spider-style `<root>/<db_id>/<db_id>.<ext>`.
pub fn resolve_database(root: &Path, db_id: &str, extension: &str) -> Option<PathBuf> {
    let flat = root.join(format!("{db_id}.{extension}"));
    if flat.is_file() {
        return Some(flat);
    }
    let nested = root.join(db_id).join(format!("{db_id}.{extension}"));
    nested.is_file().then_some(nested)
}

/// Issues are data: an empty list means every db_id resolves to a file
/// and example ids are unique.
pub fn validate_benchmark(spec: &BenchmarkSpec, registry_root: &Path) -> Vec<ValidationIssue> {
    validate_benchmark_with(spec, registry_root, "sqlite")
}

pub fn validate_benchmark_with(
    spec: &BenchmarkSpec,
    registry_root: &Path,
    extension: &str,
) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut seen = BTreeSet::new();
    let mut reported = BTreeSet::new();
    for ex in &spec.examples {
        if !seen.insert(ex.id) && reported.insert(ex.id) {
            issues.push(ValidationIssue::DuplicateId(ex.id));
        }
    }
    let db_ids: BTreeSet<&str> = spec.examples.iter().map(|e| e.db_id.as_str()).collect();
    for db_id in db_ids {
        if resolve_database(registry_root, db_id, extension).is_none() {
            issues.push(ValidationIssue::MissingDatabase {
                db_id: db_id.to_string(),
                searched: registry_root.to_path_buf(),
            });
        }
    }
    issues
}

impl BenchmarkSpec {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Fill the registry from a directory of database files; unresolved ids
    /// are left out (see [`validate_benchmark`]).
    pub fn attach_registry(&mut self, root: &Path, extension: &str) {
        for ex in &self.examples {
            if self.db_registry.contains_key(&ex.db_id) {
                continue;
            }
            if let Some(path) = resolve_database(root, &ex.db_id, extension) {
                self.db_registry.insert(ex.db_id.clone(), path);
            }
        }
    }

    pub fn db_ids(&self) -> BTreeSet<&str> {
        self.examples.iter().map(|e| e.db_id.as_str()).collect()
    }

    pub fn example(&self, id: i64) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }
}
