//! Text formats: the line-oriented einsum document and the canonical key.
//!
//! Document:
//!
//! ```text
//! einsum: ij,j->i
//! row: A,B
//! row: A,C
//! array: A float64 96x4
//! array: B float64 4
//! array: C float64 4
//! ```
//!
//! `#` starts a comment and blank lines are ignored. The einsum line comes
//! first, then the rows, then the arrays. A 0-dimensional array has shape
//! `scalar`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, ParseError, Result};
use crate::model::{ArrayMeta, BatchedEinsum, DtypeCode, IndexList};

const KEY_PREFIX: &str = "FE1";

/// Parses a document into a validated batched einsum.
pub fn parse_classic(text: &str) -> Result<BatchedEinsum> {
    let mut notation: Option<(IndexList, Vec<IndexList>)> = None;
    let mut rows: Vec<(usize, Vec<(String, usize)>)> = Vec::new();
    let mut arrays: BTreeMap<String, ArrayMeta> = BTreeMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let indent = line.len() - line.trim_start().len();
        let line = line.trim();
        let Some((keyword, rest)) = line.split_once(':') else {
            return Err(ParseError::new(line_no, indent + 1, "expected `keyword: value`").into());
        };
        // column of the first character after the colon and its spaces
        let value_col = indent + keyword.len() + 2 + (rest.len() - rest.trim_start().len());
        let value = rest.trim();
        match keyword.trim() {
            "einsum" => {
                if notation.is_some() {
                    return Err(
                        ParseError::new(line_no, indent + 1, "duplicate einsum line").into(),
                    );
                }
                notation = Some(parse_notation(value, line_no, value_col)?);
            }
            "row" => {
                if notation.is_none() {
                    return Err(
                        ParseError::new(line_no, indent + 1, "row before einsum line").into(),
                    );
                }
                if !arrays.is_empty() {
                    return Err(
                        ParseError::new(line_no, indent + 1, "row after array lines").into(),
                    );
                }
                let mut names = Vec::new();
                let mut col = value_col;
                for part in value.split(',') {
                    let lead = part.len() - part.trim_start().len();
                    let name = part.trim();
                    if !is_name(name) {
                        return Err(ParseError::new(
                            line_no,
                            col + lead,
                            format!("invalid array name `{name}`"),
                        )
                        .into());
                    }
                    names.push((name.to_string(), col + lead));
                    col += part.len() + 1;
                }
                rows.push((line_no, names));
            }
            "array" => {
                if notation.is_none() {
                    return Err(
                        ParseError::new(line_no, indent + 1, "array before einsum line").into(),
                    );
                }
                let a = parse_array(value, line_no, value_col)?;
                if arrays.contains_key(&a.name) {
                    return Err(ParseError::new(
                        line_no,
                        value_col,
                        format!("duplicate array definition `{}`", a.name),
                    )
                    .into());
                }
                arrays.insert(a.name.clone(), a);
            }
            other => {
                return Err(ParseError::new(
                    line_no,
                    indent + 1,
                    format!("unknown keyword `{other}`"),
                )
                .into());
            }
        }
    }

    let Some((i_out, i_in)) = notation else {
        return Err(ParseError::new(1, 1, "missing einsum line").into());
    };
    let mut args = Vec::with_capacity(rows.len());
    for (line_no, names) in rows {
        if names.len() != i_in.len() {
            return Err(ParseError::new(
                line_no,
                1,
                format!(
                    "row has {} operands, einsum has {}",
                    names.len(),
                    i_in.len()
                ),
            )
            .into());
        }
        let mut row = Vec::with_capacity(names.len());
        for (name, col) in names {
            let Some(a) = arrays.get(&name) else {
                return Err(
                    ParseError::new(line_no, col, format!("unknown array `{name}`")).into(),
                );
            };
            row.push(a.clone());
        }
        args.push(row);
    }
    let used: BTreeSet<&str> = args.iter().flatten().map(|a| a.name.as_str()).collect();
    if let Some(unused) = arrays.keys().find(|k| !used.contains(k.as_str())) {
        return Err(
            ParseError::new(1, 1, format!("array `{unused}` is declared but never used")).into(),
        );
    }
    BatchedEinsum::checked(i_out, i_in, args)
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_notation(s: &str, line: usize, col: usize) -> Result<(IndexList, Vec<IndexList>)> {
    let Some(arrow) = s.find("->") else {
        return Err(ParseError::new(line, col, "missing `->`").into());
    };
    let parse_list = |text: &str, start: usize| -> Result<IndexList> {
        for (k, c) in text.chars().enumerate() {
            if !c.is_ascii_lowercase() {
                return Err(ParseError::new(
                    line,
                    start + k,
                    format!("invalid index `{c}`, expected a-z"),
                )
                .into());
            }
        }
        Ok(IndexList::from_letters(text))
    };
    let (lhs, rhs) = (&s[..arrow], &s[arrow + 2..]);
    let mut i_in = Vec::new();
    let mut pos = col;
    for part in lhs.split(',') {
        i_in.push(parse_list(part, pos)?);
        pos += part.chars().count() + 1;
    }
    let i_out = parse_list(rhs, col + arrow + 2)?;
    Ok((i_out, i_in))
}

fn parse_array(s: &str, line: usize, col: usize) -> Result<ArrayMeta> {
    let fields: Vec<&str> = s.split_whitespace().collect();
    let [name, dtype, shape] = fields[..] else {
        return Err(ParseError::new(line, col, "expected `<name> <dtype> <shape>`").into());
    };
    if !is_name(name) {
        return Err(ParseError::new(line, col, format!("invalid array name `{name}`")).into());
    }
    let Some(dtype) = DtypeCode::from_name(dtype) else {
        return Err(ParseError::new(line, col, format!("unknown dtype `{dtype}`")).into());
    };
    let shape = parse_shape(shape)
        .ok_or_else(|| ParseError::new(line, col, format!("invalid shape `{shape}`")))?;
    Ok(ArrayMeta::new(name, shape, dtype))
}

fn parse_shape(s: &str) -> Option<Vec<usize>> {
    if s == "scalar" {
        return Some(Vec::new());
    }
    s.split('x')
        .map(|d| {
            if d.is_empty() || !d.bytes().all(|b| b.is_ascii_digit()) {
                None
            } else {
                d.parse().ok()
            }
        })
        .collect()
}

fn render_shape(shape: &[usize]) -> String {
    if shape.is_empty() {
        "scalar".to_string()
    } else {
        shape
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("x")
    }
}

fn is_letter_index(s: &str) -> bool {
    s.len() == 1 && s.as_bytes()[0].is_ascii_lowercase()
}

/// `"ij,j->i"` for the index structure of `e`.
pub fn notation_string(e: &BatchedEinsum) -> Result<String> {
    if let Some(bad) = e
        .i_in
        .iter()
        .chain(std::iter::once(&e.i_out))
        .flat_map(|l| l.iter())
        .find(|s| !is_letter_index(s))
    {
        return Err(Error::Notation(format!(
            "index `{bad}` is not a single letter a-z"
        )));
    }
    let ins: Vec<String> = e.i_in.iter().map(|l| l.0.concat()).collect();
    Ok(format!("{}->{}", ins.join(","), e.i_out.0.concat()))
}

/// Renders `e` as a document; arrays are listed in order of first use.
pub fn print_classic(e: &BatchedEinsum) -> Result<String> {
    let mut s = format!("einsum: {}\n", notation_string(e)?);
    for row in &e.args {
        let names: Vec<&str> = row.iter().map(|a| a.name.as_str()).collect();
        let _ = writeln!(s, "row: {}", names.join(","));
    }
    for a in e.arrays_in_order() {
        let _ = writeln!(
            s,
            "array: {} {} {}",
            a.name,
            a.dtype,
            render_shape(&a.shape)
        );
    }
    Ok(s)
}

/// Key string for a canonical form; no canonicality check.
pub(crate) fn render_key(e: &BatchedEinsum) -> String {
    let ins: Vec<String> = e.i_in.iter().map(|l| l.0.concat()).collect();
    let rows: Vec<String> = e
        .args
        .iter()
        .map(|r| {
            r.iter()
                .map(|a| a.name.as_str())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    let mut key = format!(
        "{KEY_PREFIX}|b={}|n={}|out={}|in={}|rows={}",
        e.b(),
        e.n(),
        e.i_out.0.concat(),
        ins.join(";"),
        rows.join(";")
    );
    for a in e.universe().values() {
        let _ = write!(key, "|{}={}:{}", a.name, a.dtype, render_shape(&a.shape));
    }
    key
}

/// Database key for a batched einsum already in canonical form.
///
/// Fails with [`Error::NotCanonical`] if canonicalizing `e` again changes it.
pub fn canonical_key(e: &BatchedEinsum) -> Result<String> {
    let c = crate::canonicalize::canonicalize(e)?;
    if !c.canonical.equals(e) {
        return Err(Error::NotCanonical);
    }
    Ok(render_key(e))
}

/// Splits a concatenated index list such as `abidx27` into symbols.
fn split_key_indices(s: &str) -> Option<IndexList> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut k = 0;
    while k < bytes.len() {
        if s[k..].starts_with("idx") && bytes.get(k + 3).is_some_and(u8::is_ascii_digit) {
            let end = k
                + 3
                + bytes[k + 3..]
                    .iter()
                    .take_while(|b| b.is_ascii_digit())
                    .count();
            out.push(s[k..end].to_string());
            k = end;
        } else if bytes[k].is_ascii_lowercase() {
            out.push(s[k..k + 1].to_string());
            k += 1;
        } else {
            return None;
        }
    }
    Some(IndexList(out))
}

/// Inverse of [`canonical_key`]'s rendering.
pub fn parse_canonical_key(key: &str) -> Result<BatchedEinsum> {
    let bad = |m: &str| Error::Parse(ParseError::new(1, 1, format!("malformed key: {m}")));
    let mut fields = key.split('|');
    if fields.next() != Some(KEY_PREFIX) {
        return Err(bad("missing version prefix"));
    }
    let mut take = |name: &str| -> Result<&str> {
        fields
            .next()
            .and_then(|f| f.strip_prefix(name))
            .and_then(|f| f.strip_prefix('='))
            .ok_or_else(|| bad(&format!("expected `{name}=`")))
    };
    let b: usize = take("b")?.parse().map_err(|_| bad("b"))?;
    let n: usize = take("n")?.parse().map_err(|_| bad("n"))?;
    let i_out = split_key_indices(take("out")?).ok_or_else(|| bad("out"))?;
    let i_in: Vec<IndexList> = take("in")?
        .split(';')
        .map(split_key_indices)
        .collect::<Option<_>>()
        .ok_or_else(|| bad("in"))?;
    let rows: Vec<Vec<&str>> = take("rows")?
        .split(';')
        .map(|r| r.split(',').collect())
        .collect();
    let mut arrays = BTreeMap::new();
    for f in fields {
        let (name, meta) = f.split_once('=').ok_or_else(|| bad("array entry"))?;
        let (dtype, shape) = meta.split_once(':').ok_or_else(|| bad("array entry"))?;
        let dtype = DtypeCode::from_name(dtype).ok_or_else(|| bad("dtype"))?;
        let shape = parse_shape(shape).ok_or_else(|| bad("shape"))?;
        arrays.insert(name.to_string(), ArrayMeta::new(name, shape, dtype));
    }
    if i_in.len() != n || rows.len() != b {
        return Err(bad("b or n disagree with the lists"));
    }
    let args = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|name| {
                    arrays
                        .get(*name)
                        .cloned()
                        .ok_or_else(|| bad("unknown array"))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    BatchedEinsum::checked(i_out, i_in, args)
}
