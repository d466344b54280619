//! Model formulas of the form `response ~ term + term - excluded`.
//!
//! Supported terms: plain column names, `.` (every remaining column),
//! `log(a)`, `square(a)`, `hinge(a, knot)` = max(a − knot, 0),
//! `cut(a, b0, b1, …, bk)` (right-closed bins, R-style labels),
//! `gt(a, c)` = 1{a > c}, `is(a, level)` = 1{a == level} and interactions
//! `a:b` of any of these. A `- 1` or `+ 0` removes the intercept.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{DesignMatrix, EncodedFactor};
use super::{ColumnValues, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Column(String),
    /// Every dataset column not used by the response or excluded.
    Dot,
    Log(String),
    Square(String),
    Hinge(String, f64),
    Cut(String, Vec<f64>),
    Gt(String, f64),
    Is(String, String),
    Interaction(Vec<Term>),
}

impl Term {
    fn columns(&self) -> Vec<&str> {
        match self {
            Term::Column(a)
            | Term::Log(a)
            | Term::Square(a)
            | Term::Hinge(a, _)
            | Term::Cut(a, _)
            | Term::Gt(a, _)
            | Term::Is(a, _) => vec![a.as_str()],
            Term::Dot => Vec::new(),
            Term::Interaction(parts) => parts.iter().flat_map(Term::columns).collect(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Column(a) => write!(f, "{a}"),
            Term::Dot => write!(f, "."),
            Term::Log(a) => write!(f, "log({a})"),
            Term::Square(a) => write!(f, "square({a})"),
            Term::Hinge(a, c) => write!(f, "hinge({a},{c})"),
            Term::Cut(a, b) => {
                let b: Vec<String> = b.iter().map(|v| format_g3(*v)).collect();
                write!(f, "cut({a},{})", b.join(","))
            }
            Term::Gt(a, c) => write!(f, "gt({a},{c})"),
            Term::Is(a, l) => write!(f, "is({a},{l})"),
            Term::Interaction(parts) => {
                let s: Vec<String> = parts.iter().map(Term::to_string).collect();
                write!(f, "{}", s.join(":"))
            }
        }
    }
}

/// How categorical terms expand into dummy columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    /// L − 1 dummies, first level is the reference.
    #[default]
    Reference,
    /// One dummy per level (used by tree learners, which split one level
    /// against the rest).
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub response: Term,
    pub terms: Vec<Term>,
    pub excluded: Vec<String>,
    pub intercept: bool,
    pub coding: Coding,
}

impl Formula {
    pub fn parse(text: &str) -> Result<Self> {
        let (lhs, rhs) = text
            .split_once('~')
            .ok_or_else(|| Error::Formula(format!("missing `~` in `{text}`")))?;
        let response = parse_factor(lhs.trim())?;
        if matches!(response, Term::Dot | Term::Interaction(_)) {
            return Err(Error::Formula("response must be a single column expression".into()));
        }
        let mut terms = Vec::new();
        let mut excluded = Vec::new();
        let mut intercept = true;
        for (sign, piece) in split_top_level(rhs)? {
            let piece = piece.trim();
            match (sign, piece) {
                (_, "") => return Err(Error::Formula(format!("empty term in `{text}`"))),
                ('-', "1") | ('+', "0") => intercept = false,
                ('+', "1") => intercept = true,
                ('-', name) => excluded.push(name.to_string()),
                (_, term) => terms.push(parse_term(term)?),
            }
        }
        Ok(Self { response, terms, excluded, intercept, coding: Coding::Reference })
    }

    pub fn with_coding(mut self, coding: Coding) -> Self {
        self.coding = coding;
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }
}

fn split_top_level(s: &str) -> Result<Vec<(char, String)>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut sign = '+';
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::Formula(format!("unbalanced parentheses in `{s}`")));
                }
                cur.push(ch);
            }
            '+' | '-' if depth == 0 => {
                if !cur.trim().is_empty() {
                    out.push((sign, std::mem::take(&mut cur)));
                } else if !out.is_empty() || sign != '+' {
                    return Err(Error::Formula(format!("dangling operator in `{s}`")));
                }
                cur.clear();
                sign = ch;
            }
            _ => cur.push(ch),
        }
    }
    if depth != 0 {
        return Err(Error::Formula(format!("unbalanced parentheses in `{s}`")));
    }
    out.push((sign, cur));
    Ok(out)
}

fn parse_term(s: &str) -> Result<Term> {
    let parts: Vec<&str> = split_colon(s);
    if parts.len() == 1 {
        return parse_factor(parts[0].trim());
    }
    let factors = parts
        .iter()
        .map(|p| parse_factor(p.trim()))
        .collect::<Result<Vec<_>>>()?;
    if factors.iter().any(|f| matches!(f, Term::Dot)) {
        return Err(Error::Formula("`.` cannot appear inside an interaction".into()));
    }
    Ok(Term::Interaction(factors))
}

fn split_colon(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ':' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn parse_number(s: &str) -> Result<f64> {
    match s.trim() {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        t => t.parse::<f64>().map_err(|_| Error::Formula(format!("expected a number, got `{t}`"))),
    }
}

fn parse_factor(s: &str) -> Result<Term> {
    if s == "." {
        return Ok(Term::Dot);
    }
    if s.is_empty() {
        return Err(Error::Formula("empty term".into()));
    }
    let Some(open) = s.find('(') else {
        if s.contains(|c: char| c.is_whitespace() || "(),~".contains(c)) {
            return Err(Error::Formula(format!("invalid column name `{s}`")));
        }
        return Ok(Term::Column(s.to_string()));
    };
    if !s.ends_with(')') {
        return Err(Error::Formula(format!("malformed call `{s}`")));
    }
    let func = s[..open].trim();
    let args: Vec<&str> = s[open + 1..s.len() - 1].split(',').map(str::trim).collect();
    let name = || -> Result<String> {
        match args.first() {
            Some(a) if !a.is_empty() => Ok(a.to_string()),
            _ => Err(Error::Formula(format!("`{func}` needs a column argument"))),
        }
    };
    let arity = |n: usize| -> Result<()> {
        if args.len() == n {
            Ok(())
        } else {
            Err(Error::Formula(format!("`{func}` takes {n} argument(s), got {}", args.len())))
        }
    };
    match func {
        "log" => arity(1).and_then(|_| Ok(Term::Log(name()?))),
        "square" => arity(1).and_then(|_| Ok(Term::Square(name()?))),
        "hinge" => arity(2).and_then(|_| Ok(Term::Hinge(name()?, parse_number(args[1])?))),
        "gt" => arity(2).and_then(|_| Ok(Term::Gt(name()?, parse_number(args[1])?))),
        "is" => arity(2).and_then(|_| Ok(Term::Is(name()?, args[1].to_string()))),
        "cut" => {
            if args.len() < 3 {
                return Err(Error::Formula("`cut` needs a column and at least two breaks".into()));
            }
            let breaks = args[1..].iter().map(|a| parse_number(a)).collect::<Result<Vec<_>>>()?;
            if breaks.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Formula("`cut` breaks must be increasing".into()));
            }
            Ok(Term::Cut(name()?, breaks))
        }
        other => Err(Error::Formula(format!("unknown function `{other}`"))),
    }
}

/// `printf("%.3g")`, the format R uses for `cut` labels.
pub(crate) fn format_g3(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.2e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..3).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (2 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// A block of encoded columns produced by one term.
struct Block {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    factor: Option<(Vec<String>, Option<String>)>,
}

fn numeric<'a>(ds: &'a Dataset, name: &str) -> Result<&'a [f64]> {
    ds.column(name)?
        .as_numeric()
        .ok_or_else(|| Error::Formula(format!("column `{name}` is categorical, expected numeric")))
}

fn dummies(name: &str, levels: &[String], codes: &[usize], coding: Coding) -> Block {
    let skip = usize::from(coding == Coding::Reference);
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (k, level) in levels.iter().enumerate().skip(skip) {
        names.push(format!("{name}{level}"));
        columns.push(codes.iter().map(|&c| f64::from(u8::from(c == k))).collect());
    }
    let reference = (coding == Coding::Reference).then(|| levels[0].clone());
    Block { names, columns, factor: Some((levels.to_vec(), reference)) }
}

fn eval_term(ds: &Dataset, term: &Term, coding: Coding) -> Result<Block> {
    let single = |name: String, v: Vec<f64>| Block { names: vec![name], columns: vec![v], factor: None };
    match term {
        Term::Column(a) => match &ds.column(a)?.values {
            ColumnValues::Numeric(v) => Ok(single(a.clone(), v.clone())),
            ColumnValues::Categorical { levels, codes } => Ok(dummies(a, levels, codes, coding)),
        },
        Term::Log(a) => {
            let v = numeric(ds, a)?;
            if v.iter().any(|&x| x <= 0.0) {
                return Err(Error::Formula(format!("log({a}) of a non-positive value")));
            }
            Ok(single(term.to_string(), v.iter().map(|x| x.ln()).collect()))
        }
        Term::Square(a) => Ok(single(term.to_string(), numeric(ds, a)?.iter().map(|x| x * x).collect())),
        Term::Hinge(a, c) => Ok(single(
            term.to_string(),
            numeric(ds, a)?.iter().map(|x| (x - c).max(0.0)).collect(),
        )),
        Term::Gt(a, c) => Ok(single(
            term.to_string(),
            numeric(ds, a)?.iter().map(|&x| f64::from(u8::from(x > *c))).collect(),
        )),
        Term::Is(a, level) => {
            let col = ds.column(a)?;
            let v = (0..ds.n_rows()).map(|i| f64::from(u8::from(col.label(i) == *level) )).collect::<Vec<_>>();
            if !v.iter().any(|&x| x == 1.0) {
                if let Some(levels) = col.levels() {
                    if !levels.contains(level) {
                        return Err(Error::Formula(format!("`{a}` has no level `{level}`")));
                    }
                }
            }
            Ok(single(term.to_string(), v))
        }
        Term::Cut(a, breaks) => {
            let v = numeric(ds, a)?;
            let levels: Vec<String> = breaks
                .windows(2)
                .map(|w| format!("({},{}]", format_g3(w[0]), format_g3(w[1])))
                .collect();
            let codes = v
                .iter()
                .map(|&x| {
                    breaks
                        .windows(2)
                        .position(|w| x > w[0] && x <= w[1])
                        .ok_or_else(|| Error::Formula(format!("value {x} of `{a}` outside the cut breaks")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(dummies(a, &levels, &codes, coding))
        }
        Term::Interaction(parts) => {
            let mut acc = Block { names: vec![String::new()], columns: vec![vec![1.0; ds.n_rows()]], factor: None };
            for part in parts {
                let b = eval_term(ds, part, coding)?;
                let mut names = Vec::new();
                let mut columns = Vec::new();
                for (na, ca) in acc.names.iter().zip(&acc.columns) {
                    for (nb, cb) in b.names.iter().zip(&b.columns) {
                        names.push(if na.is_empty() { nb.clone() } else { format!("{na}:{nb}") });
                        columns.push(ca.iter().zip(cb).map(|(x, y)| x * y).collect());
                    }
                }
                acc = Block { names, columns, factor: None };
            }
            Ok(acc)
        }
        Term::Dot => Err(Error::Formula("`.` must be expanded before evaluation".into())),
    }
}

/// Encodes `ds` into a numeric design following `formula`.
pub fn encode(ds: &Dataset, formula: &Formula) -> Result<DesignMatrix> {
    let response_cols: Vec<&str> = formula.response.columns();
    for c in &response_cols {
        ds.column(c)?;
    }
    let y: Vec<f64> = match &formula.response {
        Term::Column(a) => match &ds.column(a)?.values {
            ColumnValues::Numeric(v) => v.clone(),
            ColumnValues::Categorical { levels, codes } if levels.len() == 2 => {
                codes.iter().map(|&c| c as f64).collect()
            }
            ColumnValues::Categorical { .. } => {
                return Err(Error::Formula(format!(
                    "categorical response `{a}` must have exactly two levels; use is({a}, level)"
                )))
            }
        },
        t => eval_term(ds, t, Coding::Reference)?.columns.remove(0),
    };

    for e in &formula.excluded {
        ds.column(e)?;
    }
    let mut terms = Vec::new();
    for t in &formula.terms {
        match t {
            Term::Dot => terms.extend(
                ds.column_names()
                    .filter(|c| !response_cols.contains(c) && !formula.excluded.iter().any(|e| e == c))
                    .map(|c| Term::Column(c.to_string())),
            ),
            Term::Interaction(_) => {
                if let Some(c) = t.columns().iter().find(|c| response_cols.contains(c)) {
                    return Err(Error::Formula(format!("interaction `{t}` involves the response `{c}`")));
                }
                terms.push(t.clone());
            }
            other => terms.push(other.clone()),
        }
    }

    let n = ds.n_rows();
    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut encoding_map = Vec::new();
    if formula.intercept {
        names.push("(Intercept)".to_string());
        columns.push(vec![1.0; n]);
    }
    for t in &terms {
        let block = eval_term(ds, t, formula.coding)?;
        let start = columns.len();
        if let Some((levels, reference)) = block.factor {
            encoding_map.push(EncodedFactor {
                source: t.to_string(),
                levels,
                reference,
                columns: (start..start + block.columns.len()).collect(),
            });
        }
        names.extend(block.names);
        columns.extend(block.columns);
    }
    let x = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    Ok(DesignMatrix {
        x,
        y: DVector::from_vec(y),
        column_names: names,
        response_name: formula.response.to_string(),
        has_intercept: formula.intercept,
        encoding_map,
        standardization: None,
    })
}
