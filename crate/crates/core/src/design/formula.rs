//! A small Wilkinson-style formula language.
//!
//! ```text
//! formula := [name] '~' terms [ '+' '(' ['~'] terms '|' name ')' ]
//! terms   := term ('+' term)*
//! term    := product ('*' product)*          a*b expands to a + b + a:b
//! product := factor (':' factor)*
//! factor  := name | name '^' int | 'ns' '(' name ',' int ')' | '1' | '0'
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One variable raised to a positive integer power inside a product term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Factor {
    pub var: String,
    pub power: u32,
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.power == 1 {
            write!(f, "{}", self.var)
        } else {
            write!(f, "{}^{}", self.var, self.power)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    /// Main effect, power or interaction: the elementwise product of its factors.
    Product(Vec<Factor>),
    Spline { var: String, df: usize },
}

impl Term {
    pub fn main(var: &str) -> Self {
        Term::Product(vec![Factor {
            var: var.to_string(),
            power: 1,
        }])
    }

    /// Interaction order used for column ordering.
    fn order(&self) -> usize {
        match self {
            Term::Intercept => 0,
            Term::Product(f) => f.len(),
            Term::Spline { .. } => 1,
        }
    }

    pub fn variables(&self) -> Vec<&str> {
        match self {
            Term::Intercept => vec![],
            Term::Product(f) => f.iter().map(|x| x.var.as_str()).collect(),
            Term::Spline { var, .. } => vec![var.as_str()],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "(Intercept)"),
            Term::Product(fs) => {
                let parts: Vec<String> = fs.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(":"))
            }
            Term::Spline { var, df } => write!(f, "ns({var}, {df})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomPart {
    pub terms: Vec<Term>,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFormula {
    pub response: Option<String>,
    pub fixed: Vec<Term>,
    pub random: Option<RandomPart>,
}

impl ModelFormula {
    /// Combines the three strings of a JSON model spec: fixed (`y ~ ...`),
    /// random (`~ ...`) and the grouping column.
    pub fn mixed(fixed: &str, random: &str, group: &str) -> Result<Self> {
        let mut f = parse_formula(fixed)?;
        if f.random.is_some() {
            return Err(Error::Formula {
                offset: 0,
                message: "random part given twice".into(),
            });
        }
        let r = parse_formula(random)?;
        if r.response.is_some() || r.random.is_some() {
            return Err(Error::Formula {
                offset: 0,
                message: "random formula must be one-sided, e.g. `~ time`".into(),
            });
        }
        f.random = Some(RandomPart {
            terms: r.fixed,
            group: group.to_string(),
        });
        Ok(f)
    }

    pub fn random_terms(&self) -> &[Term] {
        self.random.as_ref().map_or(&[], |r| &r.terms)
    }

    pub fn has_intercept(&self) -> bool {
        self.fixed.first() == Some(&Term::Intercept)
    }

    /// Drops the intercept (used for Cox models, whose baseline absorbs it).
    pub fn without_intercept(mut self) -> Self {
        self.fixed.retain(|t| *t != Term::Intercept);
        self
    }
}

impl fmt::Display for ModelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rhs = |terms: &[Term]| -> String {
            let mut parts: Vec<String> = terms
                .iter()
                .filter(|t| **t != Term::Intercept)
                .map(|t| t.to_string())
                .collect();
            if terms.first() != Some(&Term::Intercept) {
                parts.insert(0, "0".into());
            }
            if parts.is_empty() {
                "1".into()
            } else {
                parts.join(" + ")
            }
        };
        if let Some(r) = &self.response {
            write!(f, "{r} ")?;
        }
        write!(f, "~ {}", rhs(&self.fixed))?;
        if let Some(r) = &self.random {
            write!(f, " + (~ {} | {})", rhs(&r.terms), r.group)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Int(u64),
    Tilde,
    Plus,
    Colon,
    Star,
    Caret,
    LParen,
    RParen,
    Comma,
    Bar,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let single = match c {
            b'~' => Some(Tok::Tilde),
            b'+' => Some(Tok::Plus),
            b':' => Some(Tok::Colon),
            b'*' => Some(Tok::Star),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            b'|' => Some(Tok::Bar),
            _ => None,
        };
        if c == b'~' && bytes.get(i + 1) == Some(&b'~') {
            return Err(Error::Formula {
                offset: i,
                message: "unexpected `~~`".into(),
            });
        }
        if let Some(t) = single {
            out.push((t, i));
            i += 1;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_' || bytes[i] == b'.') {
                return Err(Error::Formula {
                    offset: start,
                    message: "names may not start with a digit".into(),
                });
            }
            let v = text[start..i].parse().map_err(|_| Error::Formula {
                offset: start,
                message: "integer too large".into(),
            })?;
            out.push((Tok::Int(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' || c == b'.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                i += 1;
            }
            out.push((Tok::Name(text[start..i].to_string()), start));
        } else {
            return Err(Error::Formula {
                offset: i,
                message: format!("unexpected character `{}`", text[i..].chars().next().unwrap_or('?')),
            });
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

/// Parsed term item: an actual term, or an intercept switch.
enum Item {
    Term(Term),
    Intercept(bool),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Formula {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn formula(&mut self) -> Result<ModelFormula> {
        let response = match self.peek().clone() {
            Tok::Name(n) => {
                self.bump();
                Some(n)
            }
            _ => None,
        };
        self.expect(Tok::Tilde, "`~`")?;
        let mut items = Vec::new();
        let mut random = None;
        loop {
            if *self.peek() == Tok::LParen && random.is_none() && !items.is_empty() {
                random = Some(self.random_part()?);
            } else {
                items.extend(self.term()?);
            }
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                }
                Tok::End => break,
                _ => return self.err("expected `+` or end of formula"),
            }
        }
        Ok(ModelFormula {
            response,
            fixed: assemble(items),
            random,
        })
    }

    fn random_part(&mut self) -> Result<RandomPart> {
        self.expect(Tok::LParen, "`(`")?;
        if *self.peek() == Tok::Tilde {
            self.bump();
        }
        let mut items = Vec::new();
        loop {
            items.extend(self.term()?);
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                }
                Tok::Bar => {
                    self.bump();
                    break;
                }
                _ => return self.err("expected `+` or `|`"),
            }
        }
        let group = match self.bump() {
            Tok::Name(n) => n,
            _ => {
                self.pos -= 1;
                return self.err("expected grouping variable name");
            }
        };
        self.expect(Tok::RParen, "`)`")?;
        Ok(RandomPart {
            terms: assemble(items),
            group,
        })
    }

    fn term(&mut self) -> Result<Vec<Item>> {
        let mut products = vec![self.product()?];
        while *self.peek() == Tok::Star {
            self.bump();
            products.push(self.product()?);
        }
        if products.len() == 1 {
            return Ok(vec![products.pop().unwrap()]);
        }
        // expand a*b*c into all non-empty subsets ordered by size
        let mut factors = Vec::new();
        for p in products {
            match p {
                Item::Term(Term::Product(f)) => factors.push(f),
                _ => return self.err("`*` applies to variables and products only"),
            }
        }
        let k = factors.len();
        let mut subsets: Vec<Vec<usize>> = (1u32..(1 << k))
            .map(|mask| (0..k).filter(|j| mask & (1 << j) != 0).collect())
            .collect();
        subsets.sort_by_key(|s| s.len());
        Ok(subsets
            .into_iter()
            .map(|s| Item::Term(Term::Product(s.into_iter().flat_map(|j| factors[j].clone()).collect())))
            .collect())
    }

    fn product(&mut self) -> Result<Item> {
        let first = self.factor()?;
        if *self.peek() != Tok::Colon {
            return Ok(first);
        }
        let mut factors = match first {
            Item::Term(Term::Product(f)) => f,
            _ => return self.err("only variables and powers may be interacted"),
        };
        while *self.peek() == Tok::Colon {
            self.bump();
            match self.factor()? {
                Item::Term(Term::Product(f)) => factors.extend(f),
                _ => return self.err("only variables and powers may be interacted"),
            }
        }
        Ok(Item::Term(Term::Product(merge_factors(factors))))
    }

    fn factor(&mut self) -> Result<Item> {
        let off = self.offset();
        match self.bump() {
            Tok::Int(0) => Ok(Item::Intercept(false)),
            Tok::Int(1) => Ok(Item::Intercept(true)),
            Tok::Int(_) => Err(Error::Formula {
                offset: off,
                message: "only 0 or 1 may appear as a constant term".into(),
            }),
            Tok::Name(n) => {
                if *self.peek() == Tok::LParen {
                    return self.call(n, off);
                }
                let mut power = 1;
                if *self.peek() == Tok::Caret {
                    self.bump();
                    let poff = self.offset();
                    match self.bump() {
                        Tok::Int(p) if p >= 1 && p <= 16 => power = p as u32,
                        _ => {
                            return Err(Error::Formula {
                                offset: poff,
                                message: "exponent must be an integer between 1 and 16".into(),
                            })
                        }
                    }
                }
                Ok(Item::Term(Term::Product(vec![Factor { var: n, power }])))
            }
            _ => Err(Error::Formula {
                offset: off,
                message: "expected a term".into(),
            }),
        }
    }

    fn call(&mut self, name: String, off: usize) -> Result<Item> {
        if name != "ns" {
            return Err(Error::Formula {
                offset: off,
                message: format!("unknown function `{name}`"),
            });
        }
        self.expect(Tok::LParen, "`(`")?;
        let var = match self.bump() {
            Tok::Name(v) => v,
            _ => {
                self.pos -= 1;
                return self.err("expected variable name");
            }
        };
        self.expect(Tok::Comma, "`,`")?;
        let doff = self.offset();
        let df = match self.bump() {
            Tok::Int(d) => d as usize,
            _ => {
                self.pos -= 1;
                return self.err("expected integer df");
            }
        };
        if df < 1 {
            return Err(Error::Formula {
                offset: doff,
                message: "spline df must be at least 1".into(),
            });
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(Item::Term(Term::Spline { var, df }))
    }
}

/// Collapses repeated variables inside a product into powers (`t:t` is `t^2`).
fn merge_factors(factors: Vec<Factor>) -> Vec<Factor> {
    let mut out: Vec<Factor> = Vec::new();
    for f in factors {
        if let Some(e) = out.iter_mut().find(|e| e.var == f.var) {
            e.power += f.power;
        } else {
            out.push(f);
        }
    }
    out
}

/// Applies intercept switches, removes duplicates and orders columns:
/// intercept, then terms by interaction order, formula order within an order.
fn assemble(items: Vec<Item>) -> Vec<Term> {
    let mut intercept = true;
    let mut terms: Vec<Term> = Vec::new();
    for it in items {
        match it {
            Item::Intercept(b) => intercept = b,
            Item::Term(t) => {
                if !terms.contains(&t) {
                    terms.push(t);
                }
            }
        }
    }
    terms.sort_by_key(Term::order);
    if intercept {
        terms.insert(0, Term::Intercept);
    }
    terms
}

/// Parses a formula string.
pub fn parse_formula(text: &str) -> Result<ModelFormula> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let f = p.formula()?;
    if f.fixed.is_empty() {
        return Err(Error::Formula {
            offset: 0,
            message: "formula has no terms".into(),
        });
    }
    if let Some(r) = &f.random {
        if r.terms.is_empty() {
            return Err(Error::Formula {
                offset: 0,
                message: "random part has no terms".into(),
            });
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_interaction() {
        let f = parse_formula("y ~ t + t^2 + s + t:s").unwrap();
        assert_eq!(f.response.as_deref(), Some("y"));
        assert_eq!(f.fixed.len(), 5);
        assert_eq!(f.fixed[0], Term::Intercept);
        let labels: Vec<String> = f.fixed.iter().map(|t| t.to_string()).collect();
        assert_eq!(labels, ["(Intercept)", "t", "t^2", "s", "t:s"]);
    }

    #[test]
    fn spline_term() {
        let f = parse_formula("y ~ ns(t, 3) + a").unwrap();
        assert_eq!(f.fixed[1], Term::Spline { var: "t".into(), df: 3 });
        assert_eq!(f.fixed[2], Term::main("a"));
    }

    #[test]
    fn double_tilde_offset() {
        match parse_formula("y ~~ t") {
            Err(Error::Formula { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
        match parse_formula("y ~ t ~ s") {
            Err(Error::Formula { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn star_expansion() {
        let f = parse_formula("y ~ t*a").unwrap();
        let labels: Vec<String> = f.fixed.iter().map(|t| t.to_string()).collect();
        assert_eq!(labels, ["(Intercept)", "t", "a", "t:a"]);
    }

    #[test]
    fn interactions_after_parents() {
        let f = parse_formula("y ~ t:a + t + a").unwrap();
        let labels: Vec<String> = f.fixed.iter().map(|t| t.to_string()).collect();
        assert_eq!(labels, ["(Intercept)", "t", "a", "t:a"]);
    }

    #[test]
    fn random_part_and_intercept_control() {
        let f = parse_formula("y ~ 0 + t + (~ t | id)").unwrap();
        assert!(!f.has_intercept());
        let r = f.random.unwrap();
        assert_eq!(r.group, "id");
        assert_eq!(r.terms, vec![Term::Intercept, Term::main("t")]);

        let m = ModelFormula::mixed("y ~ t", "~ 1", "id").unwrap();
        assert_eq!(m.random_terms(), &[Term::Intercept]);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_formula("y ~ log(t)"), Err(Error::Formula { .. })));
        assert!(matches!(parse_formula("y ~ ns(t, 0)"), Err(Error::Formula { .. })));
        assert!(parse_formula("y ~ t +").is_err());
        assert!(parse_formula("y ~ 2").is_err());
        assert!(parse_formula("y t").is_err());
    }

    #[test]
    fn display_round_trip() {
        for s in ["y ~ t + t^2 + s + s:t", "y ~ 0 + ns(t, 3)", "y ~ t + (~ t | id)"] {
            let f = parse_formula(s).unwrap();
            assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
        }
    }
}
