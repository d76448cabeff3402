//! Minimal kernel IR: rectangular loop domain, operand definitions, and
//! sum-of-product statements.
//!
//! ```text
//! domain: i0<96 i1<4
//! array: P float64 96x4
//! def u(i,j) := P[i,j]*P[i,j]
//! stmt y1[i0] = sum([i1], u(i0,i1)*P[i0,i1])
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;

use super::expr::{parse_operand, OperandExpr};
use crate::error::{Error, ParseError, Result};
use crate::model::{ArrayMeta, DtypeCode, Tensor};

/// One factor of a statement's product: a `def` call or a direct array
/// access, applied to loop indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factor {
    pub callee: String,
    pub args: Vec<String>,
}

/// `output[out_indices] = sum(reduction, Π factors)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Statement {
    pub output: String,
    pub out_indices: Vec<String>,
    pub reduction: Vec<String>,
    pub factors: Vec<Factor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalKernel {
    /// Loop index extents, in declaration order.
    pub domain: Vec<(String, usize)>,
    pub defs: BTreeMap<String, OperandExpr>,
    /// External input arrays.
    pub arrays: BTreeMap<String, ArrayMeta>,
    pub statements: Vec<Statement>,
}

impl FunctionalKernel {
    pub fn extent(&self, index: &str) -> Option<usize> {
        self.domain
            .iter()
            .find(|(n, _)| n == index)
            .map(|&(_, e)| e)
    }

    /// The operand a factor denotes: the def body, or the identity access
    /// for a direct array reference.
    pub fn operand(&self, callee: &str) -> Option<OperandExpr> {
        if let Some(d) = self.defs.get(callee) {
            return Some(d.clone());
        }
        self.arrays
            .get(callee)
            .map(|a| OperandExpr::identity(callee, a.dim()))
    }

    /// Widest dtype among the arrays an operand reads; float64 when it
    /// reads none.
    pub fn operand_dtype(&self, op: &OperandExpr) -> DtypeCode {
        op.accesses()
            .iter()
            .filter_map(|(a, _)| self.arrays.get(*a).map(|m| m.dtype))
            .max()
            .unwrap_or(DtypeCode::Float64)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("domain:");
        for (n, e) in &self.domain {
            let _ = write!(s, " {n}<{e}");
        }
        s.push('\n');
        for a in self.arrays.values() {
            let shape = if a.shape.is_empty() {
                "scalar".to_string()
            } else {
                a.shape
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join("x")
            };
            let _ = writeln!(s, "array: {} {} {}", a.name, a.dtype, shape);
        }
        for (name, d) in &self.defs {
            let body = d.to_string();
            let body = body
                .split_once(" -> ")
                .map_or(body.as_str(), |(_, b)| b)
                .to_string();
            let _ = writeln!(s, "def {name}({}) := {body}", d.params.join(","));
        }
        for st in &self.statements {
            let product: Vec<String> = st
                .factors
                .iter()
                .map(|f| {
                    if self.defs.contains_key(&f.callee) {
                        format!("{}({})", f.callee, f.args.join(","))
                    } else {
                        format!("{}[{}]", f.callee, f.args.join(","))
                    }
                })
                .collect();
            let _ = writeln!(
                s,
                "stmt {}[{}] = sum([{}], {})",
                st.output,
                st.out_indices.join(","),
                st.reduction.join(","),
                product.join("*")
            );
        }
        s
    }
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(x) if x.is_ascii_alphabetic() || x == '_')
        && c.all(|x| x.is_ascii_alphanumeric() || x == '_')
}

fn split_list(s: &str) -> Vec<String> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    s.split(',').map(|x| x.trim().to_string()).collect()
}

/// Parses `name(args)` or `name[args]`; returns (name, args, bracketed).
fn parse_call(text: &str) -> Option<(String, Vec<String>, bool)> {
    let text = text.trim();
    let open = text.find(['(', '['])?;
    let bracket = text.as_bytes()[open] == b'[';
    let close = if bracket { ']' } else { ')' };
    if !text.ends_with(close) {
        return None;
    }
    let name = text[..open].trim();
    let args = split_list(&text[open + 1..text.len() - 1]);
    if !is_ident(name) || !args.iter().all(|a| is_ident(a)) {
        return None;
    }
    Some((name.to_string(), args, bracket))
}

fn parse_statement(
    value: &str,
    line: usize,
    col: usize,
) -> std::result::Result<Statement, ParseError> {
    let err = |m: &str| ParseError::new(line, col, m.to_string());
    let (lhs, rhs) = value
        .split_once('=')
        .ok_or_else(|| err("expected `out[...] = ...`"))?;
    let (output, out_indices, bracket) = match parse_call(lhs) {
        Some(c) => c,
        None if is_ident(lhs.trim()) => (lhs.trim().to_string(), Vec::new(), true),
        None => return Err(err("invalid statement output")),
    };
    if !bracket {
        return Err(err("statement output must use `[...]`"));
    }
    let rhs = rhs.trim();
    let (reduction, product) =
        if let Some(inner) = rhs.strip_prefix("sum(").and_then(|r| r.strip_suffix(')')) {
            let inner = inner.trim_start();
            let inner = inner
                .strip_prefix('[')
                .ok_or_else(|| err("expected `sum([indices], product)`"))?;
            let (red, rest) = inner
                .split_once(']')
                .ok_or_else(|| err("unterminated reduction list"))?;
            let rest = rest
                .trim_start()
                .strip_prefix(',')
                .ok_or_else(|| err("expected `,` after reduction list"))?;
            (split_list(red), rest)
        } else {
            (Vec::new(), rhs)
        };
    if !reduction.iter().all(|r| is_ident(r)) {
        return Err(err("reduction indices must be names"));
    }
    let mut factors = Vec::new();
    for part in product.split('*') {
        let (callee, args, _) = parse_call(part).ok_or_else(|| {
            err(&format!(
                "statement is not a sum of one product of operand calls: `{}`",
                part.trim()
            ))
        })?;
        factors.push(Factor { callee, args });
    }
    Ok(Statement {
        output,
        out_indices,
        reduction,
        factors,
    })
}

/// Parses the kernel text format.
pub fn parse_kernel(text: &str) -> Result<FunctionalKernel> {
    let mut domain: Vec<(String, usize)> = Vec::new();
    let mut defs: BTreeMap<String, OperandExpr> = BTreeMap::new();
    let mut arrays: BTreeMap<String, ArrayMeta> = BTreeMap::new();
    let mut statements = Vec::new();
    let mut def_lines: BTreeMap<String, usize> = BTreeMap::new();

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let content = content.trim();
        if let Some(rest) = content.strip_prefix("stmt ") {
            statements.push(parse_statement(rest, line, indent + 6)?);
            continue;
        }
        if let Some(rest) = content.strip_prefix("def ") {
            let (head, body) = rest.split_once(":=").ok_or_else(|| {
                ParseError::new(line, indent + 1, "expected `def name(params) := expr`")
            })?;
            let (name, params, _) = parse_call(head)
                .filter(|c| !c.2)
                .ok_or_else(|| ParseError::new(line, indent + 5, "invalid def head"))?;
            if defs.contains_key(&name) || arrays.contains_key(&name) {
                return Err(ParseError::new(
                    line,
                    indent + 5,
                    format!("duplicate definition `{name}`"),
                )
                .into());
            }
            let body_col = indent + 4 + head.len() + 2 + 1 + (body.len() - body.trim_start().len());
            let op = parse_operand(&params, body.trim(), line, body_col)?;
            def_lines.insert(name.clone(), line);
            defs.insert(name, op);
            continue;
        }
        let Some((keyword, value)) = content.split_once(':') else {
            return Err(ParseError::new(line, indent + 1, "expected `keyword: value`").into());
        };
        let col = indent + keyword.len() + 2;
        match keyword.trim() {
            "domain" => {
                for item in value.split_whitespace() {
                    let (n, e) = item.split_once('<').ok_or_else(|| {
                        ParseError::new(line, col, format!("expected `name<extent`, got `{item}`"))
                    })?;
                    let e: usize = e.parse().ok().filter(|&e| e > 0).ok_or_else(|| {
                        ParseError::new(line, col, format!("invalid extent in `{item}`"))
                    })?;
                    if !is_ident(n) || domain.iter().any(|(m, _)| m == n) {
                        return Err(ParseError::new(
                            line,
                            col,
                            format!("invalid or repeated index `{n}`"),
                        )
                        .into());
                    }
                    domain.push((n.to_string(), e));
                }
            }
            "array" => {
                let fields: Vec<&str> = value.split_whitespace().collect();
                let [name, dtype, shape] = fields[..] else {
                    return Err(
                        ParseError::new(line, col, "expected `<name> <dtype> <shape>`").into(),
                    );
                };
                let dtype = DtypeCode::from_name(dtype).ok_or_else(|| {
                    ParseError::new(line, col, format!("unknown dtype `{dtype}`"))
                })?;
                let shape: Vec<usize> = if shape == "scalar" {
                    Vec::new()
                } else {
                    shape
                        .split('x')
                        .map(|d| d.parse().ok())
                        .collect::<Option<_>>()
                        .ok_or_else(|| {
                            ParseError::new(line, col, format!("invalid shape `{shape}`"))
                        })?
                };
                if !is_ident(name) || arrays.contains_key(name) || defs.contains_key(name) {
                    return Err(ParseError::new(
                        line,
                        col,
                        format!("invalid or duplicate array `{name}`"),
                    )
                    .into());
                }
                arrays.insert(name.to_string(), ArrayMeta::new(name, shape, dtype));
            }
            other => {
                return Err(ParseError::new(
                    line,
                    indent + 1,
                    format!("unknown keyword `{other}`"),
                )
                .into());
            }
        }
    }

    for (name, op) in &defs {
        for (array, args) in op.accesses() {
            let Some(meta) = arrays.get(array) else {
                return Err(ParseError::new(
                    def_lines[name],
                    1,
                    format!("def `{name}` reads undeclared array `{array}`"),
                )
                .into());
            };
            if meta.dim() != args.len() {
                return Err(ParseError::new(
                    def_lines[name],
                    1,
                    format!(
                        "def `{name}` accesses `{array}` with {} subscripts, it has {}",
                        args.len(),
                        meta.dim()
                    ),
                )
                .into());
            }
        }
    }
    Ok(FunctionalKernel {
        domain,
        defs,
        arrays,
        statements,
    })
}

/// Runs the kernel as a plain loop nest. Returns one array per statement,
/// keyed by output name, in float64/complex128 arithmetic.
pub fn evaluate_kernel(
    k: &FunctionalKernel,
    bindings: &BTreeMap<String, Tensor>,
) -> Result<BTreeMap<String, Tensor>> {
    let mut out = BTreeMap::new();
    for st in &k.statements {
        let loops: Vec<&String> = st.out_indices.iter().chain(&st.reduction).collect();
        let extents: Vec<usize> = loops
            .iter()
            .map(|i| {
                k.extent(i)
                    .ok_or_else(|| Error::Raising(format!("index `{i}` is not in the domain")))
            })
            .collect::<Result<_>>()?;
        let out_shape: Vec<usize> = extents[..st.out_indices.len()].to_vec();
        let mut acc = vec![Complex64::new(0.0, 0.0); out_shape.iter().product()];
        let operands: Vec<(OperandExpr, Vec<usize>)> = st
            .factors
            .iter()
            .map(|f| {
                let op = k
                    .operand(&f.callee)
                    .ok_or_else(|| Error::Raising(format!("unknown operand `{}`", f.callee)))?;
                if op.arity() != f.args.len() {
                    return Err(Error::Raising(format!(
                        "`{}` called with {} arguments",
                        f.callee,
                        f.args.len()
                    )));
                }
                let pos = f
                    .args
                    .iter()
                    .map(|a| {
                        loops.iter().position(|l| *l == a).ok_or_else(|| {
                            Error::Raising(format!("index `{a}` is not bound in `{}`", st.output))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((op, pos))
            })
            .collect::<Result<_>>()?;
        let total: usize = extents.iter().product();
        let mut counter = vec![0usize; extents.len()];
        for _ in 0..total {
            let mut prod = Complex64::new(1.0, 0.0);
            for (op, pos) in &operands {
                let at: Vec<usize> = pos.iter().map(|&p| counter[p]).collect();
                prod *= op.eval(&at, bindings).map_err(|m| Error::BindingMismatch {
                    name: st.output.clone(),
                    reason: m,
                })?;
            }
            let off = out_shape
                .iter()
                .zip(&counter)
                .fold(0, |a, (&n, &i)| a * n + i);
            acc[off] += prod;
            for d in (0..counter.len()).rev() {
                counter[d] += 1;
                if counter[d] < extents[d] {
                    break;
                }
                counter[d] = 0;
            }
        }
        out.insert(
            st.output.clone(),
            Tensor::complex(out_shape, DtypeCode::Complex128, acc),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = "\
domain: i0<96 i1<4
array: P float64 96x4
array: Q float64 4
array: R float64 4
def u(i,j) := P[i,j]*P[i,j]
def v(i) := 3*cos(Q[i])+5
def w(i) := sin(R[i])
stmt y1[i0] = sum([i1], u(i0,i1)*v(i1))
stmt y2[i0] = sum([i1], u(i0,i1)*w(i1))
";

    #[test]
    fn parses_listing_kernel() {
        let k = parse_kernel(LISTING).unwrap();
        assert_eq!(
            k.domain,
            vec![("i0".to_string(), 96), ("i1".to_string(), 4)]
        );
        assert_eq!(k.defs.len(), 3);
        assert_eq!(k.statements.len(), 2);
        assert_eq!(
            k.statements[1].factors[1],
            Factor {
                callee: "w".into(),
                args: vec!["i1".into()]
            }
        );
        assert_eq!(k.statements[0].reduction, vec!["i1".to_string()]);
        let again = parse_kernel(&k.to_text()).unwrap();
        assert_eq!(again, k);
    }

    #[test]
    fn bare_product_and_direct_access() {
        let k = parse_kernel(
            "domain: i<3\narray: P float64 3\narray: Q float64 3\nstmt y[i] = P[i]*Q[i]\n",
        )
        .unwrap();
        assert!(k.statements[0].reduction.is_empty());
        assert_eq!(k.statements[0].factors.len(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_kernel("domain: i<0\n").is_err());
        assert!(parse_kernel("domain: i<3\ndef u(i) := Z[i]\n").is_err());
        assert!(parse_kernel("domain: i<3\narray: P float64 3\nstmt y[i] = P[i]+P[i]\n").is_err());
        assert!(parse_kernel("domain: i<3\narray: P float64 3x3\ndef u(i) := P[i]\n").is_err());
        assert!(parse_kernel("loop: i<3\n").is_err());
    }

    #[test]
    fn loop_nest_evaluation() {
        let k = parse_kernel("domain: i<2 j<3\narray: P float64 2x3\narray: x float64 3\nstmt y[i] = sum([j], P[i,j]*x[j])\n").unwrap();
        let mut b = BTreeMap::new();
        b.insert(
            "P".to_string(),
            Tensor::f64(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]),
        );
        b.insert("x".to_string(), Tensor::f64(vec![3], vec![1., 0., -1.]));
        let out = evaluate_kernel(&k, &b).unwrap();
        let y = &out["y"];
        assert_eq!(y.shape, vec![2]);
        assert_eq!(y.get(&[0]).re, -2.0);
        assert_eq!(y.get(&[1]).re, -2.0);
    }
}
