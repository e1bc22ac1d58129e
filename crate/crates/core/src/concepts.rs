//! Named unary predicates over model objects.
//!
//! A concept is a conjunction of atoms, each atom either a category test or a
//! comparison on a property/link. Evaluation is three-valued: an atom that
//! refers to a property or link the object does not have is *undefined*, and
//! undefinedness absorbs the whole conjunction. Negation happens only at the
//! [`Literal`] level.
//!
//! Source syntax, one definition per line:
//!
//! ```text
//! # comment
//! T4 := Age < 16
//! T5 := Age >= 16 & Age < 25
//! T1 := HasHairColor = "Brunette"
//! F_dessert := cat(Front_dessert)
//! ```

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::facts::{Evaluable, FactualModel, ObjIx, ObjectId, SymbolKind, Value, ValueKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConceptError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("concept `{0}` is defined twice")]
    DuplicateName(String),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("concept `{concept}` uses `{symbol}`, which is not in the model schema")]
    UnknownSymbol { concept: String, symbol: String },
    #[error("concept `{concept}` orders `{symbol}`, which is not numeric")]
    OrderingOnNonNumeric { concept: String, symbol: String },
    #[error("concept `{concept}` compares `{symbol}` ({expected}) with a {found} literal")]
    KindMismatch {
        concept: String,
        symbol: String,
        expected: ValueKind,
        found: ValueKind,
    },
    #[error("invalid literal `{0}`")]
    BadLiteral(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    fn apply<T: PartialOrd + ?Sized>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    CategoryIs(String),
    /// `symbol op rhs`; whether `symbol` is a property or a link is decided
    /// by the model the atom is evaluated against.
    Compare {
        symbol: String,
        op: CmpOp,
        rhs: Value,
    },
}

impl Atom {
    pub fn eval(&self, model: &FactualModel, ix: ObjIx) -> Option<bool> {
        match self {
            Atom::CategoryIs(category) => Some(model.has_category(category, ix)),
            Atom::Compare { symbol, op, rhs } => match model.symbol_kind(symbol)? {
                SymbolKind::Link => {
                    let target = model.link_target(symbol, ix)?;
                    match rhs {
                        Value::Text(t) if !op.is_ordering() => Some(op.apply(target.as_str(), t)),
                        Value::Ref(t) if !op.is_ordering() => Some(op.apply(target, t)),
                        _ => None,
                    }
                }
                SymbolKind::Property(_) => compare(model.property(symbol, ix)?, *op, rhs),
            },
        }
    }

    /// Human-readable rendering (text literals unquoted).
    pub fn gloss(&self) -> String {
        match self {
            Atom::CategoryIs(c) => c.clone(),
            Atom::Compare { symbol, op, rhs } => format!("{symbol} {} {rhs}", op.symbol()),
        }
    }

    fn to_source(&self) -> String {
        match self {
            Atom::CategoryIs(c) => format!("cat({c})"),
            Atom::Compare { symbol, op, rhs } => {
                let rhs = match rhs {
                    Value::Text(t) => serde_json::Value::from(t.as_str()).to_string(),
                    Value::Ref(id) => serde_json::Value::from(id.as_str()).to_string(),
                    other => other.to_string(),
                };
                format!("{symbol} {} {rhs}", op.symbol())
            }
        }
    }
}

/// Compares a stored value against a literal. Incomparable kinds give
/// `None`.
fn compare(lhs: &Value, op: CmpOp, rhs: &Value) -> Option<bool> {
    match (lhs, rhs) {
        (Value::Int(a), Value::Int(b)) => Some(op.apply(a, b)),
        (Value::Int(_) | Value::Real(_), Value::Int(_) | Value::Real(_)) => {
            Some(op.apply(&lhs.as_f64()?, &rhs.as_f64()?))
        }
        _ if op.is_ordering() => None,
        (Value::Text(a), Value::Text(b)) => Some(op.apply(a, b)),
        (Value::Ref(a), Value::Text(b)) => Some(op.apply(a.as_str(), b.as_str())),
        (Value::Ref(a), Value::Ref(b)) => Some(op.apply(a, b)),
        (Value::Flag(a), Value::Flag(b)) => Some(op.apply(a, b)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub name: String,
    pub body: Vec<Atom>,
}

impl Concept {
    pub fn eval(&self, model: &FactualModel, ix: ObjIx) -> Option<bool> {
        let mut all = true;
        for atom in &self.body {
            all &= atom.eval(model, ix)?;
        }
        Some(all)
    }

    pub fn gloss(&self) -> String {
        self.body
            .iter()
            .map(Atom::gloss)
            .collect::<Vec<_>>()
            .join(" and ")
    }

    pub fn to_source(&self) -> String {
        let body: Vec<String> = self.body.iter().map(Atom::to_source).collect();
        format!("{} := {}", self.name, body.join(" & "))
    }
}

/// A signed concept: `T` or `¬T`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub concept: String,
    #[serde(rename = "sign")]
    pub positive: bool,
}

impl Literal {
    pub fn pos(concept: impl Into<String>) -> Self {
        Literal {
            concept: concept.into(),
            positive: true,
        }
    }

    pub fn neg(concept: impl Into<String>) -> Self {
        Literal {
            concept: concept.into(),
            positive: false,
        }
    }

    pub fn negated(&self) -> Self {
        Literal {
            concept: self.concept.clone(),
            positive: !self.positive,
        }
    }
}

impl Ord for Literal {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.concept
            .cmp(&other.concept)
            .then_with(|| other.positive.cmp(&self.positive))
    }
}

impl PartialOrd for Literal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            f.write_str(&self.concept)
        } else {
            write!(f, "¬{}", self.concept)
        }
    }
}

impl FromStr for Literal {
    type Err = ConceptError;

    /// Accepts `T`, `!T`, `~T`, `-T` or `¬T`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (positive, name) = match s.chars().next() {
            Some(c @ ('!' | '~' | '-' | '¬')) => (false, s[c.len_utf8()..].trim()),
            _ => (true, s),
        };
        if name.is_empty() || !name.chars().all(is_ident_char) {
            return Err(ConceptError::BadLiteral(s.to_string()));
        }
        Ok(Literal {
            concept: name.to_string(),
            positive,
        })
    }
}

/// Concepts in declaration order with unique names.
#[derive(Debug, Clone, Default)]
pub struct ConceptSet {
    concepts: Vec<Concept>,
    by_name: HashMap<String, usize>,
}

impl ConceptSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, concept: Concept) -> Result<(), ConceptError> {
        if self.by_name.contains_key(&concept.name) {
            return Err(ConceptError::DuplicateName(concept.name));
        }
        self.by_name
            .insert(concept.name.clone(), self.concepts.len());
        self.concepts.push(concept);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Concept, ConceptError> {
        self.by_name
            .get(name)
            .map(|&i| &self.concepts[i])
            .ok_or_else(|| ConceptError::UnknownConcept(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.concepts.iter().map(|c| c.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Renders a literal for explanations: the concept's body, prefixed with
    /// `not` when negative.
    pub fn gloss(&self, lit: &Literal) -> Result<String, ConceptError> {
        let concept = self.get(&lit.concept)?;
        let body = concept.gloss();
        Ok(match (lit.positive, concept.body.len()) {
            (true, _) => body,
            (false, 1) => format!("not {body}"),
            (false, _) => format!("not ({body})"),
        })
    }

    pub fn conjunction<'a>(&'a self, lits: &[Literal]) -> Result<Conjunction<'a>, ConceptError> {
        let parts = lits
            .iter()
            .map(|l| Ok((self.get(&l.concept)?, l.positive)))
            .collect::<Result<Vec<_>, ConceptError>>()?;
        Ok(Conjunction { parts })
    }

    /// Checks that every compared symbol exists in `model`'s schema with a
    /// kind the comparison can use. Category atoms are not checked: an empty
    /// category is a legitimate fact about the domain.
    pub fn check_against(&self, model: &FactualModel) -> Result<(), ConceptError> {
        for concept in &self.concepts {
            for atom in &concept.body {
                let Atom::Compare { symbol, op, rhs } = atom else {
                    continue;
                };
                let unknown = || ConceptError::UnknownSymbol {
                    concept: concept.name.clone(),
                    symbol: symbol.clone(),
                };
                let kind = model.symbol_kind(symbol).ok_or_else(unknown)?;
                let stored = match kind {
                    SymbolKind::Link => ValueKind::Ref,
                    SymbolKind::Property(k) => k,
                };
                let numeric = |k: ValueKind| matches!(k, ValueKind::Int | ValueKind::Real);
                if op.is_ordering() && !numeric(stored) {
                    return Err(ConceptError::OrderingOnNonNumeric {
                        concept: concept.name.clone(),
                        symbol: symbol.clone(),
                    });
                }
                let compatible = match (stored, rhs.kind()) {
                    (a, b) if numeric(a) && numeric(b) => true,
                    (ValueKind::Ref, ValueKind::Text | ValueKind::Ref) => true,
                    (a, b) => a == b,
                };
                if !compatible {
                    return Err(ConceptError::KindMismatch {
                        concept: concept.name.clone(),
                        symbol: symbol.clone(),
                        expected: stored,
                        found: rhs.kind(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_source(&self) -> String {
        self.concepts.iter().map(|c| c.to_source() + "\n").collect()
    }
}

/// A resolved conjunction of literals, evaluable per object.
pub struct Conjunction<'a> {
    parts: Vec<(&'a Concept, bool)>,
}

impl Evaluable for Conjunction<'_> {
    fn eval(&self, model: &FactualModel, ix: ObjIx) -> Option<bool> {
        let mut all = true;
        for (concept, positive) in &self.parts {
            all &= concept.eval(model, ix)? == *positive;
        }
        Some(all)
    }
}

/// Evaluates a literal on a named object.
pub fn eval_literal(
    model: &FactualModel,
    concepts: &ConceptSet,
    lit: &Literal,
    obj: &ObjectId,
) -> Result<Option<bool>, ConceptError> {
    let concept = concepts.get(&lit.concept)?;
    let ix = model
        .ix(obj)
        .ok_or_else(|| ConceptError::UnknownObject(obj.to_string()))?;
    Ok(concept.eval(model, ix).map(|v| v == lit.positive))
}

/// Parses concept definitions. Symbols are not checked against any model;
/// see [`parse_concepts_for`].
pub fn parse_concepts(source: &str) -> Result<ConceptSet, ConceptError> {
    let mut set = ConceptSet::new();
    for (n, line) in source.lines().enumerate() {
        if let Some(concept) = Parser::new(line, n + 1).definition()? {
            set.insert(concept)?;
        }
    }
    Ok(set)
}

/// Parses and checks conservativity against `model`.
pub fn parse_concepts_for(source: &str, model: &FactualModel) -> Result<ConceptSet, ConceptError> {
    let set = parse_concepts(source)?;
    set.check_against(model)?;
    Ok(set)
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Parser {
    fn new(src: &str, line: usize) -> Self {
        Parser {
            chars: src.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ConceptError> {
        Err(ConceptError::Syntax {
            line: self.line,
            column: self.pos + 1,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        matches!(self.peek(), None | Some('#'))
    }

    fn eat(&mut self, s: &str) -> bool {
        let n = s.chars().count();
        if self.chars[self.pos.min(self.chars.len())..]
            .iter()
            .take(n)
            .copied()
            .eq(s.chars())
        {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, ConceptError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if is_ident_start(c) => {}
            _ => return self.error("expected identifier"),
        }
        let start = self.pos;
        while self.peek().is_some_and(is_ident_char) {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn definition(&mut self) -> Result<Option<Concept>, ConceptError> {
        if self.at_end() {
            return Ok(None);
        }
        let name = self.ident()?;
        self.skip_ws();
        if !self.eat(":=") {
            return self.error("expected `:=`");
        }
        let mut body = vec![self.atom()?];
        loop {
            if self.at_end() {
                break;
            }
            if !self.eat("&") {
                return self.error("expected `&` or end of line");
            }
            body.push(self.atom()?);
        }
        Ok(Some(Concept { name, body }))
    }

    fn atom(&mut self) -> Result<Atom, ConceptError> {
        self.skip_ws();
        let symbol = self.ident()?;
        self.skip_ws();
        if symbol == "cat" && self.peek() == Some('(') {
            self.pos += 1;
            let category = self.ident()?;
            self.skip_ws();
            if !self.eat(")") {
                return self.error("expected `)`");
            }
            return Ok(Atom::CategoryIs(category));
        }
        let op = if self.eat("!=") {
            CmpOp::Ne
        } else if self.eat("<=") {
            CmpOp::Le
        } else if self.eat(">=") {
            CmpOp::Ge
        } else if self.eat("<") {
            CmpOp::Lt
        } else if self.eat(">") {
            CmpOp::Gt
        } else if self.eat("=") {
            CmpOp::Eq
        } else {
            return self.error("expected comparison operator");
        };
        let rhs = self.literal()?;
        Ok(Atom::Compare { symbol, op, rhs })
    }

    fn literal(&mut self) -> Result<Value, ConceptError> {
        self.skip_ws();
        match self.peek() {
            Some('"') => {
                self.pos += 1;
                let mut text = String::new();
                loop {
                    match self.peek() {
                        None => return self.error("unterminated string"),
                        Some('"') => {
                            self.pos += 1;
                            break;
                        }
                        Some('\\') => {
                            self.pos += 1;
                            match self.peek() {
                                Some(c @ ('"' | '\\')) => text.push(c),
                                _ => return self.error("bad escape"),
                            }
                            self.pos += 1;
                        }
                        Some(c) => {
                            text.push(c);
                            self.pos += 1;
                        }
                    }
                }
                Ok(Value::Text(text))
            }
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' => {
                let start = self.pos;
                self.pos += 1;
                while self
                    .peek()
                    .is_some_and(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '-' | '+'))
                {
                    self.pos += 1;
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                if let Ok(i) = text.parse::<i64>() {
                    return Ok(Value::Int(i));
                }
                match text.parse::<f64>() {
                    Ok(r) if r.is_finite() => Ok(Value::Real(r)),
                    _ => {
                        self.pos = start;
                        self.error(format!("invalid number `{text}`"))
                    }
                }
            }
            Some(c) if is_ident_start(c) => {
                let start = self.pos;
                let word = self.ident()?;
                match word.as_str() {
                    "true" => Ok(Value::Flag(true)),
                    "false" => Ok(Value::Flag(false)),
                    _ => {
                        self.pos = start;
                        self.error("text literals must be double-quoted")
                    }
                }
            }
            _ => self.error("expected literal"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::Fact;

    fn people() -> FactualModel {
        FactualModel::from_facts([
            Fact::cat("HairColor", "Green").unwrap(),
            Fact::prop("Age", "Ann", Value::Int(15)).unwrap(),
            Fact::link("HasHairColor", "Ann", "Green").unwrap(),
            Fact::cat("Person", "Victor").unwrap(),
            Fact::prop("Height", "Victor", Value::Real(1.8)).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn parses_single_comparison() {
        let set = parse_concepts("T4 := Age < 16").unwrap();
        let t4 = set.get("T4").unwrap();
        assert_eq!(
            t4.body,
            vec![Atom::Compare {
                symbol: "Age".into(),
                op: CmpOp::Lt,
                rhs: Value::Int(16)
            }]
        );
    }

    #[test]
    fn parses_conjunction_and_comments() {
        let src = "# ages\n\nT5 := Age >= 16 & Age < 25   # young adults\nT1 := HasHairColor = \"Brunette\"\nP := cat(Person) & Flagged = true\n";
        let set = parse_concepts(src).unwrap();
        assert_eq!(set.names(), vec!["T5", "T1", "P"]);
        assert_eq!(set.get("T5").unwrap().body.len(), 2);
        assert_eq!(
            set.get("P").unwrap().body[0],
            Atom::CategoryIs("Person".into())
        );
        // the printer produces parseable source
        let again = parse_concepts(&set.to_source()).unwrap();
        assert_eq!(again.get("T1").unwrap(), set.get("T1").unwrap());
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_concepts("T4 := Age <").unwrap_err();
        assert!(
            matches!(
                err,
                ConceptError::Syntax {
                    line: 1,
                    column: 12,
                    ..
                }
            ),
            "{err:?}"
        );
        let err = parse_concepts("ok := cat(A)\nT4 = Age < 3").unwrap_err();
        assert!(matches!(err, ConceptError::Syntax { line: 2, .. }));
        assert!(parse_concepts("T := Color = Green").is_err());
        assert!(parse_concepts("T := A < 1 B > 2").is_err());
        assert!(parse_concepts("T := ").is_err());
        assert!(parse_concepts("T := cat(A").is_err());
        assert!(parse_concepts("T := A = \"open").is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = parse_concepts("T := A < 1\nT := A > 1").unwrap_err();
        assert_eq!(err, ConceptError::DuplicateName("T".into()));
    }

    #[test]
    fn literal_syntax() {
        assert_eq!("T9".parse::<Literal>().unwrap(), Literal::pos("T9"));
        assert_eq!("!T9".parse::<Literal>().unwrap(), Literal::neg("T9"));
        assert_eq!("¬T9".parse::<Literal>().unwrap(), Literal::neg("T9"));
        assert!("".parse::<Literal>().is_err());
        assert!("T 9".parse::<Literal>().is_err());
        assert_eq!(Literal::neg("T9").to_string(), "¬T9");
        assert!(Literal::pos("A") < Literal::neg("A"));
        assert!(Literal::neg("A") < Literal::pos("B"));
    }

    #[test]
    fn eval_three_valued() {
        let m = people();
        let set =
            parse_concepts("T4 := Age < 16\nT3 := HasHairColor = \"Green\"\nTall := Height > 1.5")
                .unwrap();
        let ann = ObjectId::new("Ann").unwrap();
        let victor = ObjectId::new("Victor").unwrap();
        assert_eq!(
            eval_literal(&m, &set, &Literal::pos("T4"), &ann),
            Ok(Some(true))
        );
        assert_eq!(
            eval_literal(&m, &set, &Literal::neg("T4"), &ann),
            Ok(Some(false))
        );
        assert_eq!(
            eval_literal(&m, &set, &Literal::pos("T4"), &victor),
            Ok(None)
        );
        assert_eq!(
            eval_literal(&m, &set, &Literal::neg("T4"), &victor),
            Ok(None)
        );
        assert_eq!(
            eval_literal(&m, &set, &Literal::pos("T3"), &ann),
            Ok(Some(true))
        );
        assert_eq!(
            eval_literal(&m, &set, &Literal::pos("Tall"), &victor),
            Ok(Some(true))
        );
        assert!(matches!(
            eval_literal(&m, &set, &Literal::pos("Nope"), &ann),
            Err(ConceptError::UnknownConcept(_))
        ));
        assert!(matches!(
            eval_literal(
                &m,
                &set,
                &Literal::pos("T4"),
                &ObjectId::new("Zed").unwrap()
            ),
            Err(ConceptError::UnknownObject(_))
        ));
    }

    #[test]
    fn undefined_absorbs_false() {
        // Victor has no Age: the body is undefined even though cat(Person) holds
        let m = people();
        let set = parse_concepts("X := cat(HairColor) & Age < 16").unwrap();
        let c = set.get("X").unwrap();
        let victor = m.ix(&ObjectId::new("Victor").unwrap()).unwrap();
        assert_eq!(c.eval(&m, victor), None);
    }

    #[test]
    fn conservativity_check() {
        let m = people();
        assert!(parse_concepts_for("T4 := Age < 16", &m).is_ok());
        assert!(matches!(
            parse_concepts_for("Q := Weight < 16", &m),
            Err(ConceptError::UnknownSymbol { .. })
        ));
        assert!(matches!(
            parse_concepts_for("Q := HasHairColor < 16", &m),
            Err(ConceptError::OrderingOnNonNumeric { .. })
        ));
        assert!(matches!(
            parse_concepts_for("Q := Age = \"old\"", &m),
            Err(ConceptError::KindMismatch { .. })
        ));
        assert!(parse_concepts_for("Q := Height < 2", &m).is_ok());
    }

    #[test]
    fn glosses() {
        let set = parse_concepts("T5 := Age >= 16 & Age < 25\nT9 := Occupation = \"Researcher\"")
            .unwrap();
        assert_eq!(
            set.gloss(&Literal::neg("T9")).unwrap(),
            "not Occupation = Researcher"
        );
        assert_eq!(
            set.gloss(&Literal::neg("T5")).unwrap(),
            "not (Age >= 16 and Age < 25)"
        );
    }
}
