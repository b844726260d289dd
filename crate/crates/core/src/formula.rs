//! Two-part model formulas and the prior mini-language.
//!
//! A formula names the response, the mean-model terms and (after `|`) the
//! variance-model terms:
//!
//! ```text
//! y ~ sm(u, k = 20, bs = "rd") | sm(u, k = 20, bs = "rd")
//! mpg ~ disp + hp + wt + qsec | 1
//! ```
//!
//! Prior strings look like `IG(0.5,0.5*n)`, `Beta(1,1)` or `HN(2)`; the only
//! symbol allowed inside a parameter is the sample size `n`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of knots used by `sm` when `k` is not given.
pub const DEFAULT_KNOTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisCode {
    /// Radial `r² log r²` basis (`bs = "rd"`).
    Radial,
    /// Truncated-linear `(u - ξ)₊` basis (`bs = "tl"`).
    TruncatedLinear,
}

impl BasisCode {
    pub fn code(self) -> &'static str {
        match self {
            BasisCode::Radial => "rd",
            BasisCode::TruncatedLinear => "tl",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "rd" => Some(BasisCode::Radial),
            "tl" => Some(BasisCode::TruncatedLinear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Smooth {
    pub vars: Vec<String>,
    /// Knots per margin.
    pub k: usize,
    pub basis: BasisCode,
    /// Path to a one- or two-column CSV of knot locations.
    pub knots: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TermKind {
    Intercept,
    Linear(String),
    Categorical(String),
    Smooth(Smooth),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub kind: TermKind,
    pub label: String,
}

impl Term {
    pub fn new(kind: TermKind) -> Self {
        let label = match &kind {
            TermKind::Intercept => "1".to_string(),
            TermKind::Linear(v) | TermKind::Categorical(v) => v.clone(),
            TermKind::Smooth(s) => format!("sm({})", s.vars.join(",")),
        };
        Term { kind, label }
    }

    pub fn intercept() -> Self {
        Term::new(TermKind::Intercept)
    }

    pub fn is_intercept(&self) -> bool {
        matches!(self.kind, TermKind::Intercept)
    }

    /// Data columns this term reads.
    pub fn variables(&self) -> Vec<&str> {
        match &self.kind {
            TermKind::Intercept => vec![],
            TermKind::Linear(v) | TermKind::Categorical(v) => vec![v.as_str()],
            TermKind::Smooth(s) => s.vars.iter().map(String::as_str).collect(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            TermKind::Intercept => write!(f, "1"),
            TermKind::Linear(v) | TermKind::Categorical(v) => write!(f, "{v}"),
            TermKind::Smooth(s) => {
                write!(f, "sm({}, k = {}, bs = \"{}\"", s.vars.join(", "), s.k, s.basis.code())?;
                if let Some(path) = &s.knots {
                    write!(f, ", knots = \"{path}\"")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub mean_terms: Vec<Term>,
    pub var_terms: Vec<Term>,
}

impl ModelSpec {
    /// All distinct variables referenced, response first.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = vec![self.response.as_str()];
        for t in self.mean_terms.iter().chain(&self.var_terms) {
            for v in t.variables() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |terms: &[Term]| {
            terms
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" + ")
        };
        write!(
            f,
            "{} ~ {} | {}",
            self.response,
            join(&self.mean_terms),
            join(&self.var_terms)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Tilde,
    Pipe,
    Plus,
    Star,
    Comma,
    Eq,
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(x) => format!("number {x}"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Tilde => "`~`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Star => "`*`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '.'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

/// Tokens paired with their 1-based character offsets.
fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '~' => Some(Tok::Tilde),
            '|' => Some(Tok::Pipe),
            '+' => Some(Tok::Plus),
            '*' => Some(Tok::Star),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, pos));
            i += 1;
            continue;
        }
        if c == '"' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != '"' {
                j += 1;
            }
            if j == chars.len() {
                return Err(Error::syntax(pos, "unterminated string literal"));
            }
            out.push((Tok::Str(chars[start..j].iter().collect()), pos));
            i = j + 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let s: String = chars[i..j].iter().collect();
            let v: f64 = s
                .parse()
                .map_err(|_| Error::syntax(pos, format!("malformed number `{s}`")))?;
            out.push((Tok::Number(v), pos));
            i = j;
            continue;
        }
        if is_ident_start(c) {
            let mut j = i;
            while j < chars.len() && is_ident_char(chars[j]) {
                j += 1;
            }
            out.push((Tok::Ident(chars[i..j].iter().collect()), pos));
            i = j;
            continue;
        }
        return Err(Error::syntax(pos, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end_pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Parser {
            toks: lex(text)?,
            at: 0,
            end_pos: text.chars().count() + 1,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end_pos, |(_, p)| *p)
    }

    fn next(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.at).cloned();
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> Error {
        match self.peek() {
            Some(t) => Error::syntax(self.pos(), format!("expected {wanted}, found {}", t.describe())),
            None => Error::syntax(self.pos(), format!("expected {wanted}, found end of input")),
        }
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> Result<usize> {
        if self.peek() == Some(&tok) {
            Ok(self.next().unwrap().1)
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn ident(&mut self, wanted: &str) -> Result<(String, usize)> {
        match self.peek() {
            Some(Tok::Ident(_)) => match self.next() {
                Some((Tok::Ident(s), p)) => Ok((s, p)),
                _ => unreachable!(),
            },
            _ => Err(self.unexpected(wanted)),
        }
    }

    fn at_end(&self) -> bool {
        self.at >= self.toks.len()
    }

    fn rhs(&mut self) -> Result<Vec<Term>> {
        let mut terms = Vec::new();
        let mut seen: Vec<(String, usize)> = Vec::new();
        loop {
            let pos = self.pos();
            let term = self.term()?;
            if seen.iter().any(|(l, _)| *l == term.label) {
                return Err(Error::syntax(pos, format!("duplicate term `{}`", term.label)));
            }
            seen.push((term.label.clone(), pos));
            terms.push(term);
            if self.peek() == Some(&Tok::Plus) {
                self.next();
            } else {
                break;
            }
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<Term> {
        match self.peek() {
            Some(Tok::Number(x)) if *x == 1.0 => {
                self.next();
                Ok(Term::intercept())
            }
            Some(Tok::Ident(name)) if name == "sm" && self.toks.get(self.at + 1).map(|t| &t.0) == Some(&Tok::LParen) => {
                self.smooth()
            }
            Some(Tok::Ident(_)) => {
                let (name, _) = self.ident("a term")?;
                Ok(Term::new(TermKind::Linear(name)))
            }
            _ => Err(self.unexpected("a term (`1`, a variable, or `sm(...)`)")),
        }
    }

    fn smooth(&mut self) -> Result<Term> {
        let call_pos = self.pos();
        self.next(); // sm
        self.expect(Tok::LParen, "`(`")?;
        let mut vars = vec![self.ident("a variable name")?.0];
        let mut k: Option<usize> = None;
        let mut basis: Option<BasisCode> = None;
        let mut knots: Option<String> = None;
        while self.peek() == Some(&Tok::Comma) {
            self.next();
            let (name, name_pos) = self.ident("a variable or argument name")?;
            if self.peek() != Some(&Tok::Eq) {
                if k.is_some() || basis.is_some() || knots.is_some() {
                    return Err(Error::syntax(name_pos, "variables must precede named arguments in sm()"));
                }
                vars.push(name);
                if vars.len() > 2 {
                    return Err(Error::syntax(name_pos, "sm() takes at most two variables"));
                }
                continue;
            }
            self.next(); // =
            match name.as_str() {
                "k" => {
                    if k.is_some() {
                        return Err(Error::syntax(name_pos, "argument `k` given twice"));
                    }
                    let vpos = self.pos();
                    let v = match self.next() {
                        Some((Tok::Number(v), _)) => v,
                        _ => return Err(Error::syntax(vpos, "expected an integer for `k`")),
                    };
                    if v.fract() != 0.0 || v < 0.0 {
                        return Err(Error::syntax(vpos, "`k` must be a non-negative integer"));
                    }
                    if v < 2.0 {
                        return Err(Error::syntax(vpos, format!("`k` must be at least 2, got {v}")));
                    }
                    k = Some(v as usize);
                }
                "bs" => {
                    if basis.is_some() {
                        return Err(Error::syntax(name_pos, "argument `bs` given twice"));
                    }
                    let vpos = self.pos();
                    let code = match self.next() {
                        Some((Tok::Str(s), _)) => s,
                        _ => return Err(Error::syntax(vpos, "expected a quoted basis code for `bs`")),
                    };
                    basis = Some(BasisCode::from_code(&code).ok_or_else(|| {
                        Error::syntax(vpos, format!("unknown basis code \"{code}\" (expected \"rd\" or \"tl\")"))
                    })?);
                }
                "knots" => {
                    if knots.is_some() {
                        return Err(Error::syntax(name_pos, "argument `knots` given twice"));
                    }
                    let vpos = self.pos();
                    knots = match self.next() {
                        Some((Tok::Str(s), _)) if !s.is_empty() => Some(s),
                        _ => return Err(Error::syntax(vpos, "expected a quoted knot file path for `knots`")),
                    };
                }
                other => {
                    return Err(Error::syntax(name_pos, format!("unknown sm() argument `{other}`")));
                }
            }
        }
        if self.peek() != Some(&Tok::RParen) {
            if let Some(Tok::Ident(_)) = self.peek() {
                return Err(Error::syntax(self.pos(), "expected `,` or `)` in sm()"));
            }
            return Err(self.unexpected("`)` closing sm()"));
        }
        self.next();
        if vars.len() == 2 && vars[0] == vars[1] {
            return Err(Error::syntax(call_pos, "sm() variables must be distinct"));
        }
        Ok(Term::new(TermKind::Smooth(Smooth {
            vars,
            k: k.unwrap_or(DEFAULT_KNOTS),
            basis: basis.unwrap_or(BasisCode::Radial),
            knots,
        })))
    }
}

/// Parse `resp ~ rhs (| rhs)?`.
pub fn parse_model_formula(text: &str) -> Result<ModelSpec> {
    let mut p = Parser::new(text)?;
    let (response, _) = p.ident("a response variable")?;
    p.expect(Tok::Tilde, "`~`")?;
    let mean_terms = p.rhs()?;
    let var_terms = if p.peek() == Some(&Tok::Pipe) {
        p.next();
        p.rhs()?
    } else {
        vec![Term::intercept()]
    };
    if !p.at_end() {
        return Err(p.unexpected("`+`, `|` or end of formula"));
    }
    Ok(ModelSpec {
        response,
        mean_terms,
        var_terms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorFamily {
    #[serde(rename = "IG")]
    InverseGamma,
    Beta,
    #[serde(rename = "HN")]
    HalfNormal,
}

impl PriorFamily {
    pub fn name(self) -> &'static str {
        match self {
            PriorFamily::InverseGamma => "IG",
            PriorFamily::Beta => "Beta",
            PriorFamily::HalfNormal => "HN",
        }
    }

    fn arity(self) -> usize {
        match self {
            PriorFamily::HalfNormal => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub family: PriorFamily,
    pub params: Vec<f64>,
    pub raw: String,
}

impl PriorSpec {
    pub fn new(family: PriorFamily, params: Vec<f64>) -> Result<Self> {
        if params.len() != family.arity() {
            return Err(Error::Prior(format!(
                "{} takes {} parameter(s), got {}",
                family.name(),
                family.arity(),
                params.len()
            )));
        }
        if let Some(bad) = params.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Prior(format!(
                "{} parameters must be positive, got {bad}",
                family.name()
            )));
        }
        let raw = format!(
            "{}({})",
            family.name(),
            params.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
        );
        Ok(PriorSpec { family, params, raw })
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Parse a prior such as `IG(0.5,0.5*n)`, evaluating `n` as the sample size.
pub fn parse_prior_string(text: &str, n: usize) -> Result<PriorSpec> {
    let mut p = Parser::new(text)?;
    let (fam_name, fam_pos) = p.ident("a prior family (IG, Beta or HN)")?;
    let family = match fam_name.as_str() {
        "IG" => PriorFamily::InverseGamma,
        "Beta" => PriorFamily::Beta,
        "HN" => PriorFamily::HalfNormal,
        other => {
            return Err(Error::syntax(
                fam_pos,
                format!("unknown prior family `{other}` (expected IG, Beta or HN)"),
            ))
        }
    };
    p.expect(Tok::LParen, "`(`")?;
    let mut params = Vec::new();
    loop {
        let expr_pos = p.pos();
        let v = prior_expr(&mut p, n)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::syntax(expr_pos, format!("prior parameter must be positive, got {v}")));
        }
        params.push(v);
        match p.peek() {
            Some(Tok::Comma) => {
                p.next();
            }
            Some(Tok::RParen) => {
                p.next();
                break;
            }
            _ => return Err(p.unexpected("`,` or `)`")),
        }
    }
    if !p.at_end() {
        return Err(p.unexpected("end of prior"));
    }
    if params.len() != family.arity() {
        return Err(Error::syntax(
            fam_pos,
            format!("{} takes {} parameter(s), got {}", family.name(), family.arity(), params.len()),
        ));
    }
    Ok(PriorSpec {
        family,
        params,
        raw: text.trim().to_string(),
    })
}

/// `factor ('*' factor)*` where a factor is a numeric literal or `n`.
fn prior_expr(p: &mut Parser, n: usize) -> Result<f64> {
    let mut value = prior_factor(p, n)?;
    while p.peek() == Some(&Tok::Star) {
        p.next();
        value *= prior_factor(p, n)?;
    }
    Ok(value)
}

fn prior_factor(p: &mut Parser, n: usize) -> Result<f64> {
    let pos = p.pos();
    match p.next() {
        Some((Tok::Number(v), _)) => Ok(v),
        Some((Tok::Ident(s), _)) if s == "n" => Ok(n as f64),
        Some((Tok::Ident(s), _)) => Err(Error::syntax(
            pos,
            format!("unknown symbol `{s}` (only `n` is allowed)"),
        )),
        Some((t, _)) => Err(Error::syntax(pos, format!("expected a number or `n`, found {}", t.describe()))),
        None => Err(Error::syntax(pos, "expected a number or `n`, found end of input")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(var: &str, k: usize) -> Term {
        Term::new(TermKind::Smooth(Smooth {
            vars: vec![var.into()],
            k,
            basis: BasisCode::Radial,
            knots: None,
        }))
    }

    #[test]
    fn parses_single_covariate_model() {
        let spec = parse_model_formula(r#"y ~ sm(u, k = 20, bs = "rd") | sm(u, k = 20, bs = "rd")"#).unwrap();
        assert_eq!(spec.response, "y");
        assert_eq!(spec.mean_terms, vec![smooth("u", 20)]);
        assert_eq!(spec.var_terms, vec![smooth("u", 20)]);
        assert_eq!(spec.mean_terms[0].label, "sm(u)");
    }

    #[test]
    fn intercept_only() {
        let spec = parse_model_formula("y ~ 1").unwrap();
        assert_eq!(spec.mean_terms, vec![Term::intercept()]);
        assert_eq!(spec.var_terms, vec![Term::intercept()]);
    }

    #[test]
    fn linear_terms_and_intercept_variance() {
        let spec = parse_model_formula("mpg ~ disp + hp + wt + qsec | 1").unwrap();
        let labels: Vec<_> = spec.mean_terms.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(labels, ["disp", "hp", "wt", "qsec"]);
        assert!(spec.mean_terms.iter().all(|t| matches!(t.kind, TermKind::Linear(_))));
        assert_eq!(spec.var_terms, vec![Term::intercept()]);
    }

    #[test]
    fn defaults_and_bivariate() {
        let spec = parse_model_formula("y ~ sm(w1,w2) + sm(x, bs=\"tl\", knots=\"k.csv\")").unwrap();
        match &spec.mean_terms[0].kind {
            TermKind::Smooth(s) => {
                assert_eq!(s.vars, ["w1", "w2"]);
                assert_eq!(s.k, DEFAULT_KNOTS);
                assert_eq!(s.basis, BasisCode::Radial);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(spec.mean_terms[0].label, "sm(w1,w2)");
        match &spec.mean_terms[1].kind {
            TermKind::Smooth(s) => {
                assert_eq!(s.basis, BasisCode::TruncatedLinear);
                assert_eq!(s.knots.as_deref(), Some("k.csv"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn error_positions_are_one_based() {
        match parse_model_formula("y ~ sm(u, bs = \"ps\")") {
            Err(Error::Syntax { position, message }) => {
                assert_eq!(position, 16, "{message}");
                assert!(message.contains("unknown basis"));
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_model_formula("y ~ sm(u, k = 1)") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 15),
            other => panic!("unexpected {other:?}"),
        }
        match parse_model_formula("y ~ sm(a, b, c)") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 14),
            other => panic!("unexpected {other:?}"),
        }
        match parse_model_formula("y ~ ") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_model_formula("y ~ u + u").is_err());
        assert!(parse_model_formula("~ u").is_err());
        assert!(parse_model_formula("y ~ u | v | w").is_err());
        assert!(parse_model_formula("y ~ u $ v").is_err());
    }

    #[test]
    fn whitespace_insensitive() {
        let a = parse_model_formula("y~sm(u,k=5,bs=\"tl\")|u").unwrap();
        let b = parse_model_formula("  y  ~  sm( u , k = 5 , bs = \"tl\" )  |  u ").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prior_strings() {
        let p = parse_prior_string("IG(0.5,0.5*n)", 500).unwrap();
        assert_eq!(p.family, PriorFamily::InverseGamma);
        assert_eq!(p.params, vec![0.5, 250.0]);
        let p = parse_prior_string("Beta(1,1)", 7).unwrap();
        assert_eq!((p.family, p.params), (PriorFamily::Beta, vec![1.0, 1.0]));
        let p = parse_prior_string("HN(2)", 7).unwrap();
        assert_eq!((p.family, p.params), (PriorFamily::HalfNormal, vec![2.0]));
        assert_eq!(parse_prior_string("IG(1, n*0.4)", 10).unwrap().params[1], 0.4 * 10.0);
    }

    #[test]
    fn prior_errors() {
        assert!(parse_prior_string("Gamma(1,1)", 1).is_err());
        assert!(parse_prior_string("IG(1,0*n)", 1).is_err());
        assert!(parse_prior_string("IG(1,0.5*m)", 1).is_err());
        assert!(parse_prior_string("HN(1,2)", 1).is_err());
        assert!(parse_prior_string("Beta(1)", 1).is_err());
        assert!(parse_prior_string("IG(1,1", 1).is_err());
    }
}
