//! SQL dialect identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CoreError;

/// A SQL dialect, i.e. one backend engine family.
///
/// The built-in set covers the engines the harness knows how to talk to;
/// [`Dialect::Other`] carries an extension key registered by the caller.
/// `Quirk` is a test-only dialect: the source engine with deterministic
/// output perturbations layered on top.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dialect {
    Sqlite,
    Postgres,
    Mysql,
    Clickhouse,
    Snowflake,
    Bigquery,
    Quirk,
    Other(String),
}

impl Dialect {
    pub const BUILTIN: [Dialect; 7] = [
        Dialect::Sqlite,
        Dialect::Postgres,
        Dialect::Mysql,
        Dialect::Clickhouse,
        Dialect::Snowflake,
        Dialect::Bigquery,
        Dialect::Quirk,
    ];

    pub fn id(&self) -> &str {
        match self {
            Dialect::Sqlite => "sqlite",
            Dialect::Postgres => "postgres",
            Dialect::Mysql => "mysql",
            Dialect::Clickhouse => "clickhouse",
            Dialect::Snowflake => "snowflake",
            Dialect::Bigquery => "bigquery",
            Dialect::Quirk => "quirk",
            Dialect::Other(key) => key,
        }
    }

    /// Human-facing name used in prompts and report headers.
    pub fn display_name(&self) -> &str {
        match self {
            Dialect::Sqlite => "SQLite",
            Dialect::Postgres => "PostgreSQL",
            Dialect::Mysql => "MySQL",
            Dialect::Clickhouse => "ClickHouse",
            Dialect::Snowflake => "Snowflake",
            Dialect::Bigquery => "BigQuery",
            Dialect::Quirk => "Quirk",
            Dialect::Other(key) => key,
        }
    }

    /// Column position in leaderboard-style tables. Source first, then the
    /// enterprise targets, then test and extension dialects.
    pub fn report_rank(&self) -> u8 {
        match self {
            Dialect::Sqlite => 0,
            Dialect::Postgres => 1,
            Dialect::Mysql => 2,
            Dialect::Snowflake => 3,
            Dialect::Bigquery => 4,
            Dialect::Clickhouse => 5,
            Dialect::Quirk => 6,
            Dialect::Other(_) => 7,
        }
    }

    /// Engines backed by an embedded SQLite database file.
    pub fn is_sqlite_family(&self) -> bool {
        matches!(self, Dialect::Sqlite | Dialect::Quirk)
    }

    /// Case folding the engine applies to unquoted identifiers. Target
    /// objects are created under the folded name so that unquoted
    /// references in model output resolve.
    pub fn fold_identifier(&self, name: &str) -> String {
        match self {
            Dialect::Postgres => name.to_lowercase(),
            Dialect::Snowflake => name.to_uppercase(),
            _ => name.to_string(),
        }
    }

    /// Quote an identifier the way this dialect expects.
    pub fn quote_identifier(&self, name: &str) -> String {
        match self {
            Dialect::Mysql | Dialect::Clickhouse | Dialect::Bigquery => {
                format!("`{}`", name.replace('`', "``"))
            }
            _ => format!("\"{}\"", name.replace('"', "\"\"")),
        }
    }

    /// Environment variable holding the DSN for this dialect.
    pub fn dsn_env_var(&self) -> String {
        format!("POLY_{}_DSN", self.id().to_uppercase())
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Dialect {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "sqlite" => Dialect::Sqlite,
            "postgres" => Dialect::Postgres,
            "mysql" => Dialect::Mysql,
            "clickhouse" => Dialect::Clickhouse,
            "snowflake" => Dialect::Snowflake,
            "bigquery" => Dialect::Bigquery,
            "quirk" => Dialect::Quirk,
            other => {
                let valid = !other.is_empty()
                    && other
                        .chars()
                        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
                if !valid {
                    return Err(CoreError::InvalidDialect(other.to_string()));
                }
                Dialect::Other(other.to_string())
            }
        })
    }
}

impl Serialize for Dialect {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for Dialect {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
