//! DSN parsing and redaction.

use std::path::PathBuf;

use url::Url;
use xdialect_core::Dialect;

use crate::error::{EngineError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dsn {
    /// Embedded database file.
    Sqlite(PathBuf),
    /// Directory holding one embedded database file per namespace.
    Quirk(PathBuf),
    Url(Url),
    /// Anything else (libpq key=value strings, extension engines).
    Raw(String),
}

impl Dsn {
    pub fn parse(dialect: &Dialect, dsn: &str) -> Result<Dsn> {
        let bad = |message: String| EngineError::Dsn { dialect: dialect.clone(), message };
        let dsn = dsn.trim();
        if dsn.is_empty() {
            return Err(bad("empty DSN".into()));
        }
        match dialect {
            Dialect::Sqlite => Ok(Dsn::Sqlite(file_part(dsn, "sqlite:"))),
            Dialect::Quirk => {
                if !dsn.starts_with("quirk:") {
                    return Err(bad(format!("expected quirk:<dir>, got '{}'", redact(dsn))));
                }
                Ok(Dsn::Quirk(file_part(dsn, "quirk:")))
            }
            Dialect::Postgres if !dsn.contains("://") => {
                // libpq keyword form, handed to the driver as is
                if dsn.contains('=') {
                    Ok(Dsn::Raw(dsn.to_string()))
                } else {
                    Err(bad(format!("unrecognised DSN '{}'", redact(dsn))))
                }
            }
            Dialect::Postgres | Dialect::Mysql | Dialect::Clickhouse => {
                let url = Url::parse(dsn).map_err(|e| bad(format!("{e} in '{}'", redact(dsn))))?;
                let allowed: &[&str] = match dialect {
                    Dialect::Postgres => &["postgres", "postgresql"],
                    Dialect::Mysql => &["mysql"],
                    _ => &["http", "https", "clickhouse"],
                };
                if !allowed.contains(&url.scheme()) {
                    return Err(bad(format!(
                        "scheme '{}' not accepted (expected one of {})",
                        url.scheme(),
                        allowed.join(", ")
                    )));
                }
                if url.host_str().is_none_or(str::is_empty) {
                    return Err(bad(format!("missing host in '{}'", redact(dsn))));
                }
                Ok(Dsn::Url(url))
            }
            _ => Ok(match Url::parse(dsn) {
                Ok(url) => Dsn::Url(url),
                Err(_) => Dsn::Raw(dsn.to_string()),
            }),
        }
    }
}

fn file_part(dsn: &str, scheme: &str) -> PathBuf {
    let rest = dsn.strip_prefix(scheme).unwrap_or(dsn);
    // sqlite:///abs/path and sqlite:relative are both accepted
    let rest = rest.strip_prefix("//").unwrap_or(rest);
    PathBuf::from(rest)
}

/// DSN with passwords masked, safe for logs and error messages.
pub fn redact(dsn: &str) -> String {
    if let Ok(mut url) = Url::parse(dsn) {
        if url.password().is_some() {
            let _ = url.set_password(Some("***"));
        }
        let pairs: Vec<(String, String)> = url
            .query_pairs()
            .map(|(k, v)| {
                let secret = is_secret_key(&k);
                (k.into_owned(), if secret { "***".to_string() } else { v.into_owned() })
            })
            .collect();
        if !pairs.is_empty() {
            url.query_pairs_mut().clear().extend_pairs(pairs);
        }
        return url.to_string();
    }
    dsn.split_whitespace()
        .map(|tok| match tok.split_once('=') {
            Some((k, _)) if is_secret_key(k) => format!("{k}=***"),
            _ => tok.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_secret_key(key: &str) -> bool {
    let k = key.to_ascii_lowercase();
    k == "password" || k == "pass" || k == "pwd" || k.contains("token") || k.contains("secret")
}

/// Remove every occurrence of the DSN's password from a driver message.
pub(crate) fn scrub(message: &str, dsn: &str) -> String {
    let mut secrets = Vec::new();
    match Url::parse(dsn) {
        Ok(url) => {
            if let Some(p) = url.password() {
                secrets.push(p.to_string());
                if let Some((_, v)) = url::form_urlencoded::parse(format!("p={p}").as_bytes()).next() {
                    secrets.push(v.into_owned());
                }
            }
        }
        Err(_) => secrets.extend(dsn.split_whitespace().filter_map(|tok| {
            let (k, v) = tok.split_once('=')?;
            is_secret_key(k).then(|| v.to_string())
        })),
    }
    let mut out = message.to_string();
    for s in secrets.iter().filter(|s| !s.is_empty()) {
        out = out.replace(s.as_str(), "***");
    }
    out
}
