//! Subgroup queries over decoded state sequences.
//!
//! ```text
//! query     := or?
//! or        := and ("OR" and)*
//! and       := atom ("AND" atom)*
//! atom      := "(" or ")" | predicate
//! predicate := "visited" ("==" | "=") set
//!            | "visited" "contains" set
//!            | "starts_in" "(" state ")"
//!            | "ends_in" "(" state ")"
//!            | "dwell" "(" state ")" cmp number
//! set       := "{" (state ("," state)*)? "}"
//! cmp       := "<" | "<=" | ">" | ">=" | "==" | "="
//! ```
//!
//! Keywords are case-insensitive, `&&` and `||` are accepted for AND and
//! OR, and hyphens may replace underscores (`starts-in`). `dwell` compares
//! the total time in years a subject's timeline bands spend in the state.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::labeling::{LabeledCohort, LabeledSubject};
use super::timeline::subject_bands;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparison {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Lt => lhs < rhs,
            Comparison::Le => lhs <= rhs,
            Comparison::Gt => lhs > rhs,
            Comparison::Ge => lhs >= rhs,
            Comparison::Eq => lhs == rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    /// Matches every subject.
    All,
    VisitedEquals(BTreeSet<usize>),
    VisitedContains(BTreeSet<usize>),
    StartsIn(usize),
    EndsIn(usize),
    Dwell {
        state: usize,
        cmp: Comparison,
        years: f64,
    },
    And(Box<Query>, Box<Query>),
    Or(Box<Query>, Box<Query>),
}

impl Query {
    pub fn parse(text: &str) -> Result<Self> {
        let tokens = tokenize(text)?;
        let mut parser = Parser { tokens, pos: 0 };
        if parser.peek().kind == Tok::End {
            return Ok(Query::All);
        }
        let q = parser.or()?;
        let next = parser.peek();
        if next.kind != Tok::End {
            return Err(query_error(next.at, format!("unexpected {}", next.kind)));
        }
        Ok(q)
    }

    pub fn matches(&self, subject: &LabeledSubject) -> bool {
        if subject.visits.is_empty() {
            return matches!(self, Query::All);
        }
        match self {
            Query::All => true,
            Query::VisitedEquals(set) => &subject.states().collect::<BTreeSet<_>>() == set,
            Query::VisitedContains(set) => {
                let visited: BTreeSet<usize> = subject.states().collect();
                set.is_subset(&visited)
            }
            Query::StartsIn(s) => subject.first_state() == *s,
            Query::EndsIn(s) => subject.last_state() == *s,
            Query::Dwell { state, cmp, years } => {
                let total: f64 = subject_bands(subject)
                    .iter()
                    .filter(|b| b.state == *state)
                    .map(|b| b.duration())
                    .sum();
                cmp.holds(total, *years)
            }
            Query::And(a, b) => a.matches(subject) && b.matches(subject),
            Query::Or(a, b) => a.matches(subject) || b.matches(subject),
        }
    }
}

impl FromStr for Query {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Query::parse(s)
    }
}

fn write_set(f: &mut fmt::Formatter<'_>, set: &BTreeSet<usize>) -> fmt::Result {
    let items: Vec<String> = set.iter().map(usize::to_string).collect();
    write!(f, "{{{}}}", items.join(","))
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::All => Ok(()),
            Query::VisitedEquals(set) => {
                f.write_str("visited == ")?;
                write_set(f, set)
            }
            Query::VisitedContains(set) => {
                f.write_str("visited contains ")?;
                write_set(f, set)
            }
            Query::StartsIn(s) => write!(f, "starts_in({s})"),
            Query::EndsIn(s) => write!(f, "ends_in({s})"),
            Query::Dwell { state, cmp, years } => write!(f, "dwell({state}) {} {years:?}", cmp.symbol()),
            Query::And(a, b) => write!(f, "({a} AND {b})"),
            Query::Or(a, b) => write!(f, "({a} OR {b})"),
        }
    }
}

/// Ids of the subjects matching `query`, in cohort order.
pub fn subgroup_filter(labeled: &LabeledCohort, query: &str) -> Result<Vec<String>> {
    let q = Query::parse(query)?;
    Ok(filter_subjects(labeled, &q))
}

pub fn filter_subjects(labeled: &LabeledCohort, query: &Query) -> Vec<String> {
    labeled
        .subjects
        .iter()
        .filter(|s| query.matches(s))
        .map(|s| s.subject_id.clone())
        .collect()
}

fn query_error(position: usize, message: impl Into<String>) -> Error {
    Error::Query {
        position,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Cmp(Comparison),
    And,
    Or,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Number(n) => write!(f, "number `{n}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Cmp(c) => write!(f, "`{}`", c.symbol()),
            Tok::And => f.write_str("AND"),
            Tok::Or => f.write_str("OR"),
            Tok::End => f.write_str("end of query"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    /// Byte offset into the query text.
    at: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let at = i;
        let two = bytes.get(i..i + 2);
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'{' => Tok::LBrace,
            b'}' => Tok::RBrace,
            b',' => Tok::Comma,
            b'&' if two == Some(b"&&") => {
                i += 1;
                Tok::And
            }
            b'|' if two == Some(b"||") => {
                i += 1;
                Tok::Or
            }
            b'<' | b'>' | b'=' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                if eq {
                    i += 1;
                }
                Tok::Cmp(match (c, eq) {
                    (b'<', false) => Comparison::Lt,
                    (b'<', true) => Comparison::Le,
                    (b'>', false) => Comparison::Gt,
                    (b'>', true) => Comparison::Ge,
                    _ => Comparison::Eq,
                })
            }
            b'0'..=b'9' | b'.' | b'-' => {
                let mut j = i + 1;
                while j < bytes.len() {
                    let d = bytes[j];
                    let exp_sign = (d == b'-' || d == b'+') && matches!(bytes[j - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let lexeme = &text[i..j];
                if lexeme.parse::<f64>().is_err() {
                    return Err(query_error(at, format!("malformed number `{lexeme}`")));
                }
                i = j;
                tokens.push(Token {
                    kind: Tok::Number(lexeme.to_string()),
                    at,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i + 1;
                while j < bytes.len() {
                    let d = bytes[j];
                    let hyphen = d == b'-' && bytes.get(j + 1).is_some_and(|n| n.is_ascii_alphabetic());
                    if d.is_ascii_alphanumeric() || d == b'_' || hyphen {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let word = text[i..j].to_ascii_lowercase().replace('-', "_");
                i = j;
                tokens.push(Token {
                    kind: match word.as_str() {
                        "and" => Tok::And,
                        "or" => Tok::Or,
                        _ => Tok::Word(word),
                    },
                    at,
                });
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(query_error(at, format!("unexpected character `{ch}`")));
            }
        };
        i += 1;
        tokens.push(Token { kind, at });
    }
    tokens.push(Token {
        kind: Tok::End,
        at: text.len(),
    });
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: Tok) -> Result<()> {
        let t = self.next();
        if t.kind == kind {
            Ok(())
        } else {
            Err(query_error(t.at, format!("expected {kind}, found {}", t.kind)))
        }
    }

    fn or(&mut self) -> Result<Query> {
        let mut lhs = self.and()?;
        while self.peek().kind == Tok::Or {
            self.next();
            lhs = Query::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Query> {
        let mut lhs = self.atom()?;
        while self.peek().kind == Tok::And {
            self.next();
            lhs = Query::And(Box::new(lhs), Box::new(self.atom()?));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Query> {
        let t = self.next();
        match t.kind {
            Tok::LParen => {
                let q = self.or()?;
                self.expect(Tok::RParen)?;
                Ok(q)
            }
            Tok::Word(w) => match w.as_str() {
                "visited" | "visited_set" => {
                    let op = self.next();
                    match op.kind {
                        Tok::Cmp(Comparison::Eq) => Ok(Query::VisitedEquals(self.set()?)),
                        Tok::Word(ref c) if c == "contains" => Ok(Query::VisitedContains(self.set()?)),
                        other => Err(query_error(op.at, format!("expected `==` or `contains`, found {other}"))),
                    }
                }
                "starts_in" => Ok(Query::StartsIn(self.state_arg()?)),
                "ends_in" => Ok(Query::EndsIn(self.state_arg()?)),
                "dwell" | "dwell_in_state" => {
                    let state = self.state_arg()?;
                    let op = self.next();
                    let Tok::Cmp(cmp) = op.kind else {
                        return Err(query_error(op.at, format!("expected a comparison, found {}", op.kind)));
                    };
                    let n = self.next();
                    let Tok::Number(lexeme) = n.kind else {
                        return Err(query_error(n.at, format!("expected a number, found {}", n.kind)));
                    };
                    Ok(Query::Dwell {
                        state,
                        cmp,
                        years: lexeme.parse().expect("validated by the tokenizer"),
                    })
                }
                _ => Err(query_error(t.at, format!("unknown predicate `{w}`"))),
            },
            other => Err(query_error(t.at, format!("expected a predicate, found {other}"))),
        }
    }

    fn state(&mut self) -> Result<usize> {
        let t = self.next();
        match &t.kind {
            Tok::Number(n) => n
                .parse::<usize>()
                .map_err(|_| query_error(t.at, format!("state index must be a non-negative integer, found `{n}`"))),
            other => Err(query_error(t.at, format!("expected a state index, found {other}"))),
        }
    }

    fn state_arg(&mut self) -> Result<usize> {
        self.expect(Tok::LParen)?;
        let s = self.state()?;
        self.expect(Tok::RParen)?;
        Ok(s)
    }

    fn set(&mut self) -> Result<BTreeSet<usize>> {
        self.expect(Tok::LBrace)?;
        let mut set = BTreeSet::new();
        if self.peek().kind == Tok::RBrace {
            self.next();
            return Ok(set);
        }
        loop {
            set.insert(self.state()?);
            let t = self.next();
            match t.kind {
                Tok::Comma => continue,
                Tok::RBrace => return Ok(set),
                other => return Err(query_error(t.at, format!("expected `,` or `}}`, found {other}"))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_predicates_and_connectives() {
        let q = Query::parse("starts_in(3) AND dwell(3) > 2").unwrap();
        assert_eq!(
            q,
            Query::And(
                Box::new(Query::StartsIn(3)),
                Box::new(Query::Dwell {
                    state: 3,
                    cmp: Comparison::Gt,
                    years: 2.0
                })
            )
        );
        assert!(matches!(Query::parse("visited == {0, 1,2}").unwrap(), Query::VisitedEquals(s) if s.len() == 3));
        assert!(matches!(Query::parse("Starts-In(1) || ends_in(2)").unwrap(), Query::Or(..)));
        assert_eq!(Query::parse("   ").unwrap(), Query::All);
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let q = Query::parse("starts_in(0) OR starts_in(1) AND ends_in(2)").unwrap();
        assert!(matches!(q, Query::Or(_, ref rhs) if matches!(**rhs, Query::And(..))));
    }

    #[test]
    fn display_round_trips() {
        for text in ["visited contains {2,5}", "(starts_in(1) OR dwell(4) <= 0.5) AND ends_in(7)", "visited == {}"] {
            let q = Query::parse(text).unwrap();
            assert_eq!(Query::parse(&q.to_string()).unwrap(), q);
        }
    }

    fn position(text: &str) -> usize {
        match Query::parse(text) {
            Err(Error::Query { position, .. }) => position,
            other => panic!("expected a query error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(position("starts_in(1) AND"), 16);
        assert_eq!(position("visited == {0,"), 14);
        assert_eq!(position("lives_in(2)"), 0);
        assert_eq!(position("starts_in(1.5)"), 10);
        assert_eq!(position("ends_in(1) $"), 11);
        assert_eq!(position("(starts_in(1)"), 13);
        assert_eq!(position("dwell(1) 3"), 9);
    }
}
