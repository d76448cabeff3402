//! Scalar operand expressions and their text syntax.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::ParseError;
use crate::model::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Reciprocal,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "reciprocal" => Func::Reciprocal,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Reciprocal => "reciprocal",
        }
    }

    fn apply(self, x: Complex64) -> Complex64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
            Func::Reciprocal => x.inv(),
        }
    }
}

/// Expression tree; parameters are referred to by position.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Lit(f64),
    Param(usize),
    /// Array element; every subscript is a parameter position.
    Access {
        array: String,
        args: Vec<usize>,
    },
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// `λ params. body`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperandExpr {
    pub params: Vec<String>,
    pub body: Expr,
}

impl OperandExpr {
    /// `λ p0 … p(d-1). array[p0, …, p(d-1)]`.
    pub fn identity(array: impl Into<String>, arity: usize) -> Self {
        OperandExpr {
            params: (0..arity).map(|k| format!("p{k}")).collect(),
            body: Expr::Access {
                array: array.into(),
                args: (0..arity).collect(),
            },
        }
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    /// Structural identity up to parameter names, commutativity of `+`
    /// and `*`, and literal spelling.
    pub fn fingerprint(&self) -> String {
        format!("{}|{}", self.params.len(), fingerprint(&self.body))
    }

    /// Arrays referenced by the body with the subscripts used.
    pub fn accesses(&self) -> Vec<(&str, &[usize])> {
        let mut out = Vec::new();
        collect_accesses(&self.body, &mut out);
        out
    }

    /// Value at the given parameter values.
    pub fn eval(
        &self,
        at: &[usize],
        arrays: &BTreeMap<String, Tensor>,
    ) -> Result<Complex64, String> {
        eval(&self.body, at, arrays)
    }
}

fn collect_accesses<'a>(e: &'a Expr, out: &mut Vec<(&'a str, &'a [usize])>) {
    match e {
        Expr::Lit(_) | Expr::Param(_) => {}
        Expr::Access { array, args } => out.push((array, args)),
        Expr::Neg(a) | Expr::Call(_, a) => collect_accesses(a, out),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            collect_accesses(a, out);
            collect_accesses(b, out);
        }
    }
}

fn eval(e: &Expr, at: &[usize], arrays: &BTreeMap<String, Tensor>) -> Result<Complex64, String> {
    Ok(match e {
        Expr::Lit(x) => Complex64::new(*x, 0.0),
        Expr::Param(k) => Complex64::new(at[*k] as f64, 0.0),
        Expr::Access { array, args } => {
            let t = arrays
                .get(array)
                .ok_or_else(|| format!("no binding for array `{array}`"))?;
            if t.shape.len() != args.len() {
                return Err(format!(
                    "`{array}` has {} axes, accessed with {}",
                    t.shape.len(),
                    args.len()
                ));
            }
            let idx: Vec<usize> = args.iter().map(|&k| at[k]).collect();
            if idx.iter().zip(&t.shape).any(|(i, n)| i >= n) {
                return Err(format!("`{array}` accessed out of bounds at {idx:?}"));
            }
            t.get(&idx)
        }
        Expr::Neg(a) => -eval(a, at, arrays)?,
        Expr::Add(a, b) => eval(a, at, arrays)? + eval(b, at, arrays)?,
        Expr::Sub(a, b) => eval(a, at, arrays)? - eval(b, at, arrays)?,
        Expr::Mul(a, b) => eval(a, at, arrays)? * eval(b, at, arrays)?,
        Expr::Div(a, b) => eval(a, at, arrays)? / eval(b, at, arrays)?,
        Expr::Call(f, a) => f.apply(eval(a, at, arrays)?),
    })
}

fn literal(x: f64) -> String {
    // -0.0 and 0.0 are the same literal
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:?}")
}

fn fingerprint(e: &Expr) -> String {
    fn flatten<'a>(e: &'a Expr, mul: bool, out: &mut Vec<&'a Expr>) {
        match (e, mul) {
            (Expr::Add(a, b), false) | (Expr::Mul(a, b), true) => {
                flatten(a, mul, out);
                flatten(b, mul, out);
            }
            _ => out.push(e),
        }
    }
    match e {
        Expr::Lit(x) => literal(*x),
        Expr::Param(k) => format!("${k}"),
        Expr::Access { array, args } => {
            let args: Vec<String> = args.iter().map(|k| format!("${k}")).collect();
            format!("{array}[{}]", args.join(","))
        }
        Expr::Neg(a) => format!("neg({})", fingerprint(a)),
        Expr::Add(..) | Expr::Mul(..) => {
            let mul = matches!(e, Expr::Mul(..));
            let mut terms = Vec::new();
            flatten(e, mul, &mut terms);
            let mut fps: Vec<String> = terms.into_iter().map(fingerprint).collect();
            fps.sort();
            format!("{}({})", if mul { "mul" } else { "add" }, fps.join(","))
        }
        Expr::Sub(a, b) => format!("sub({},{})", fingerprint(a), fingerprint(b)),
        Expr::Div(a, b) => format!("div({},{})", fingerprint(a), fingerprint(b)),
        Expr::Call(f, a) => format!("{}({})", f.name(), fingerprint(a)),
    }
}

impl fmt::Display for OperandExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) -> ", self.params.join(", "))?;
        write_expr(f, &self.body, &self.params, 0)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, params: &[String], parent: u8) -> fmt::Result {
    let (prec, text): (u8, Option<(&Expr, &str, &Expr)>) = match e {
        Expr::Add(a, b) => (1, Some((a, "+", b))),
        Expr::Sub(a, b) => (1, Some((a, "-", b))),
        Expr::Mul(a, b) => (2, Some((a, "*", b))),
        Expr::Div(a, b) => (2, Some((a, "/", b))),
        _ => (3, None),
    };
    if let Some((a, op, b)) = text {
        if prec < parent {
            write!(f, "(")?;
        }
        write_expr(f, a, params, prec)?;
        write!(f, "{op}")?;
        write_expr(f, b, params, prec + 1)?;
        if prec < parent {
            write!(f, ")")?;
        }
        return Ok(());
    }
    match e {
        Expr::Lit(x) => write!(f, "{x}"),
        Expr::Param(k) => write!(f, "{}", params[*k]),
        Expr::Access { array, args } => {
            let args: Vec<&str> = args.iter().map(|&k| params[k].as_str()).collect();
            write!(f, "{array}[{}]", args.join(","))
        }
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_expr(f, a, params, 3)
        }
        Expr::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, a, params, 0)?;
            write!(f, ")")
        }
        _ => unreachable!(),
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(s: &str, line: usize, col: usize) -> Result<Vec<(Token, usize)>, ParseError> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        let start = k;
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() || c == '.' {
            while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                k += 1;
            }
            // optional exponent
            if k < chars.len() && (chars[k] == 'e' || chars[k] == 'E') {
                let mut j = k + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    k = j;
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let text: String = chars[start..k].iter().collect();
            let x: f64 = text.parse().map_err(|_| {
                ParseError::new(line, col + start, format!("invalid number `{text}`"))
            })?;
            out.push((Token::Num(x), col + start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while k < chars.len() && (chars[k].is_ascii_alphanumeric() || chars[k] == '_') {
                k += 1;
            }
            out.push((Token::Ident(chars[start..k].iter().collect()), col + start));
        } else if "+-*/()[],".contains(c) {
            out.push((Token::Sym(c), col + start));
            k += 1;
        } else {
            return Err(ParseError::new(
                line,
                col + start,
                format!("unexpected character `{c}`"),
            ));
        }
    }
    Ok(out)
}

/// Recursive-descent parser over a token slice.
struct Parser<'a> {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    params: &'a [String],
    line: usize,
    end_col: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.col(), msg)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Token::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.primary()
        }
    }

    fn param(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p == name)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Token::Num(x)) => {
                self.pos += 1;
                Ok(Expr::Lit(x))
            }
            Some(Token::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                let name_col = self.col();
                self.pos += 1;
                if self.eat('[') {
                    let mut args = Vec::new();
                    if !self.eat(']') {
                        loop {
                            let col = self.col();
                            let Some(Token::Ident(p)) = self.peek().cloned() else {
                                return Err(self.err("subscripts must be parameter names"));
                            };
                            let k = self.param(&p).ok_or_else(|| {
                                ParseError::new(self.line, col, format!("unknown parameter `{p}`"))
                            })?;
                            self.pos += 1;
                            args.push(k);
                            if self.eat(']') {
                                break;
                            }
                            self.expect(',')?;
                        }
                    }
                    Ok(Expr::Access { array: name, args })
                } else if self.eat('(') {
                    let f = Func::from_name(&name).ok_or_else(|| {
                        ParseError::new(self.line, name_col, format!("unknown function `{name}`"))
                    })?;
                    let e = self.expr()?;
                    self.expect(')')?;
                    Ok(Expr::Call(f, Box::new(e)))
                } else if let Some(k) = self.param(&name) {
                    Ok(Expr::Param(k))
                } else {
                    Err(ParseError::new(
                        self.line,
                        name_col,
                        format!("unknown name `{name}`"),
                    ))
                }
            }
            _ => Err(self.err("expected an expression")),
        }
    }
}

/// Parses `text` as the body of `λ params. body`. `line` and `col` locate
/// the text for error messages.
pub fn parse_operand(
    params: &[String],
    text: &str,
    line: usize,
    col: usize,
) -> Result<OperandExpr, ParseError> {
    let tokens = tokenize(text, line, col)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        params,
        line,
        end_col: col + text.chars().count(),
    };
    let body = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(OperandExpr {
        params: params.to_vec(),
        body,
    })
}
