//! A small SQL lexer. It only knows enough to tell code from literals,
//! quoted identifiers and comments, which is all the callers need.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Bare word: keyword or unquoted identifier.
    Word,
    /// `"x"`, `` `x` `` or `[x]`; text holds the unquoted name.
    QuotedIdent,
    /// `'...'`; text holds the literal content with `''` unescaped.
    StringLit,
    Number,
    Symbol,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Parenthesis nesting depth at the token.
    pub depth: usize,
    /// Byte offset in the source.
    pub offset: usize,
}

impl Token {
    pub fn is_word(&self, w: &str) -> bool {
        self.kind == TokenKind::Word && self.text.eq_ignore_ascii_case(w)
    }

    pub fn is_symbol(&self, s: &str) -> bool {
        self.kind == TokenKind::Symbol && self.text == s
    }
}

/// Tokenize `sql`. Never fails: unterminated literals and comments run to
/// the end of the input.
pub fn tokenize(sql: &str) -> Vec<Token> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut depth = 0usize;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b if b.is_ascii_whitespace() => i += 1,
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
            }
            b'\'' => {
                let (text, end) = read_quoted(sql, i, b'\'');
                out.push(Token { kind: TokenKind::StringLit, text, depth, offset: start });
                i = end;
            }
            b'"' | b'`' => {
                let (text, end) = read_quoted(sql, i, c);
                out.push(Token { kind: TokenKind::QuotedIdent, text, depth, offset: start });
                i = end;
            }
            b'[' => {
                let end = sql[i + 1..].find(']').map(|p| i + 1 + p).unwrap_or(bytes.len());
                let text = sql[i + 1..end].to_string();
                out.push(Token { kind: TokenKind::QuotedIdent, text, depth, offset: start });
                i = (end + 1).min(bytes.len());
            }
            b'0'..=b'9' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.') {
                    i += 1;
                }
                out.push(Token { kind: TokenKind::Number, text: sql[start..i].into(), depth, offset: start });
            }
            b'.' if bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.') {
                    i += 1;
                }
                out.push(Token { kind: TokenKind::Number, text: sql[start..i].into(), depth, offset: start });
            }
            b if is_word_byte(b) => {
                while i < bytes.len() && (is_word_byte(bytes[i]) || bytes[i].is_ascii_digit() || bytes[i] == b'$') {
                    i += 1;
                }
                out.push(Token { kind: TokenKind::Word, text: sql[start..i].into(), depth, offset: start });
            }
            _ => {
                let ch = sql[i..].chars().next().expect("in bounds");
                i += ch.len_utf8();
                let mut text = ch.to_string();
                // Two-character operators matter for nothing here except
                // keeping `::` together for cast detection.
                if ch == ':' && bytes.get(i) == Some(&b':') {
                    text.push(':');
                    i += 1;
                }
                if ch == ')' {
                    depth = depth.saturating_sub(1);
                }
                out.push(Token { kind: TokenKind::Symbol, text, depth, offset: start });
                if ch == '(' {
                    depth += 1;
                }
            }
        }
    }
    out
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b >= 0x80
}

/// Read a literal opened by `quote` at `start`; a doubled quote escapes.
fn read_quoted(sql: &str, start: usize, quote: u8) -> (String, usize) {
    let bytes = sql.as_bytes();
    let mut i = start + 1;
    let mut text = String::new();
    let mut seg = i;
    while i < bytes.len() {
        if bytes[i] == quote {
            if bytes.get(i + 1) == Some(&quote) {
                text.push_str(&sql[seg..=i]);
                i += 2;
                seg = i;
                continue;
            }
            text.push_str(&sql[seg..i]);
            return (text, i + 1);
        }
        i += 1;
    }
    text.push_str(&sql[seg..]);
    (text, bytes.len())
}

/// Which ORDER BY occurrences count as ordering the result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderByScope {
    /// Any ORDER BY in the text, subqueries and window clauses included.
    #[default]
    Anywhere,
    /// Only an ORDER BY outside every parenthesis.
    TopLevel,
}

/// True when the keyword pair ORDER BY appears outside literals, quoted
/// identifiers and comments.
pub fn contains_order_by(sql: &str) -> bool {
    contains_order_by_scoped(sql, OrderByScope::Anywhere)
}

pub fn contains_order_by_scoped(sql: &str, scope: OrderByScope) -> bool {
    let toks = tokenize(sql);
    toks.windows(2).any(|w| {
        w[0].is_word("order")
            && w[1].is_word("by")
            && (scope == OrderByScope::Anywhere || w[0].depth == 0)
    })
}

/// Split on top-level semicolons, dropping empty statements.
pub fn split_statements(sql: &str) -> Vec<String> {
    let mut cuts = vec![0];
    for t in tokenize(sql) {
        if t.is_symbol(";") {
            cuts.push(t.offset);
            cuts.push(t.offset + 1);
        }
    }
    cuts.push(sql.len());
    cuts.chunks(2)
        .map(|c| sql[c[0]..c[1]].trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Strip trailing semicolons and whitespace.
pub fn strip_trailing_semicolons(sql: &str) -> &str {
    let mut s = sql.trim_end();
    while let Some(rest) = s.strip_suffix(';') {
        s = rest.trim_end();
    }
    s
}
