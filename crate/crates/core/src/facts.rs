//! Deterministic fact store: objects, categorical facts, single-valued
//! properties and links.
//!
//! A [`FactualModel`] is built by asserting facts one at a time and is then
//! treated as an immutable snapshot by everything downstream (concept
//! evaluation, counting, mining). The value kind of each property is inferred
//! from the first assertion and enforced afterwards.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Position of an object inside a [`FactualModel`]. Indices are dense and
/// follow insertion order.
pub type ObjIx = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactError {
    #[error("object id must be a non-empty token")]
    EmptyId,
    #[error("`{symbol}` expects {expected} values, got {found}")]
    KindMismatch {
        symbol: String,
        expected: ValueKind,
        found: ValueKind,
    },
    #[error("`{symbol}({object})` is already asserted with a different value")]
    DuplicateFunctionalFact { symbol: String, object: String },
    #[error("reference to unknown object `{0}`")]
    DanglingRef(String),
    #[error("real values must be finite")]
    NonFiniteReal,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Result<Self, FactError> {
        let id = id.into();
        if id.is_empty() {
            return Err(FactError::EmptyId);
        }
        Ok(ObjectId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Text,
    Int,
    Real,
    Ref,
    Flag,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Text => "text",
            ValueKind::Int => "int",
            ValueKind::Real => "real",
            ValueKind::Ref => "ref",
            ValueKind::Flag => "flag",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Int(i64),
    Real(f64),
    Ref(ObjectId),
    Flag(bool),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Text(_) => ValueKind::Text,
            Value::Int(_) => ValueKind::Int,
            Value::Real(_) => ValueKind::Real,
            Value::Ref(_) => ValueKind::Ref,
            Value::Flag(_) => ValueKind::Flag,
        }
    }

    /// Numeric view used by ordering comparisons.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Text(s) => serde_json::Value::from(s.as_str()),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Real(r) => serde_json::Value::from(*r),
            Value::Ref(id) => serde_json::json!({ "ref": id.as_str() }),
            Value::Flag(b) => serde_json::Value::from(*b),
        }
    }

    fn from_json(v: &serde_json::Value) -> Result<Value, String> {
        use serde_json::Value as J;
        match v {
            J::String(s) => Ok(Value::Text(s.clone())),
            J::Bool(b) => Ok(Value::Flag(*b)),
            J::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Value::Int(i))
                } else {
                    n.as_f64()
                        .filter(|f| f.is_finite())
                        .map(Value::Real)
                        .ok_or_else(|| format!("unsupported number {n}"))
                }
            }
            J::Object(m) if m.len() == 1 => match m.get("ref") {
                Some(J::String(s)) => ObjectId::new(s.clone())
                    .map(Value::Ref)
                    .map_err(|e| e.to_string()),
                _ => Err("object values must have the form {\"ref\": \"id\"}".into()),
            },
            other => Err(format!("unsupported value {other}")),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Ref(id) => write!(f, "{id}"),
            Value::Flag(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fact {
    Categorical {
        category: String,
        obj: ObjectId,
    },
    Property {
        prop: String,
        obj: ObjectId,
        val: Value,
    },
    Link {
        link: String,
        obj: ObjectId,
        target: ObjectId,
    },
}

impl Fact {
    pub fn cat(category: &str, obj: &str) -> Result<Fact, FactError> {
        Ok(Fact::Categorical {
            category: category.to_string(),
            obj: ObjectId::new(obj)?,
        })
    }

    pub fn prop(prop: &str, obj: &str, val: Value) -> Result<Fact, FactError> {
        Ok(Fact::Property {
            prop: prop.to_string(),
            obj: ObjectId::new(obj)?,
            val,
        })
    }

    pub fn link(link: &str, obj: &str, target: &str) -> Result<Fact, FactError> {
        Ok(Fact::Link {
            link: link.to_string(),
            obj: ObjectId::new(obj)?,
            target: ObjectId::new(target)?,
        })
    }

    pub fn subject(&self) -> &ObjectId {
        match self {
            Fact::Categorical { obj, .. } | Fact::Property { obj, .. } | Fact::Link { obj, .. } => {
                obj
            }
        }
    }

    /// Serializes to the fact-file line format with a fixed key order.
    pub fn to_json_line(&self) -> String {
        let q = |s: &str| serde_json::Value::from(s).to_string();
        match self {
            Fact::Categorical { category, obj } => format!(
                "{{\"type\":\"cat\",\"category\":{},\"object\":{}}}",
                q(category),
                q(obj.as_str())
            ),
            Fact::Property { prop, obj, val } => format!(
                "{{\"type\":\"prop\",\"property\":{},\"object\":{},\"value\":{}}}",
                q(prop),
                q(obj.as_str()),
                val.to_json()
            ),
            Fact::Link { link, obj, target } => format!(
                "{{\"type\":\"link\",\"link\":{},\"object\":{},\"target\":{}}}",
                q(link),
                q(obj.as_str()),
                q(target.as_str())
            ),
        }
    }

    /// Parses one fact-file line. Unknown or missing keys are rejected.
    pub fn from_json_line(line: &str) -> Result<Fact, String> {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let obj = v.as_object().ok_or("fact must be a JSON object")?;
        let kind = obj
            .get("type")
            .and_then(|t| t.as_str())
            .ok_or("missing string key `type`")?;
        let allowed: &[&str] = match kind {
            "cat" => &["type", "category", "object"],
            "prop" => &["type", "property", "object", "value"],
            "link" => &["type", "link", "object", "target"],
            other => return Err(format!("unknown fact type `{other}`")),
        };
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(format!("unknown key `{key}` for `{kind}` fact"));
            }
        }
        let text = |key: &str| -> Result<String, String> {
            obj.get(key)
                .and_then(|x| x.as_str())
                .map(str::to_string)
                .ok_or_else(|| format!("missing string key `{key}`"))
        };
        let id = |key: &str| -> Result<ObjectId, String> {
            ObjectId::new(text(key)?).map_err(|e| e.to_string())
        };
        Ok(match kind {
            "cat" => Fact::Categorical {
                category: text("category")?,
                obj: id("object")?,
            },
            "prop" => Fact::Property {
                prop: text("property")?,
                obj: id("object")?,
                val: Value::from_json(obj.get("value").ok_or("missing key `value`")?)?,
            },
            _ => Fact::Link {
                link: text("link")?,
                obj: id("object")?,
                target: id("target")?,
            },
        })
    }
}

/// What a non-categorical symbol denotes in a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Property(ValueKind),
    Link,
}

#[derive(Debug, Clone, Default)]
pub struct FactualModel {
    ids: Vec<ObjectId>,
    index: HashMap<ObjectId, ObjIx>,
    categories: BTreeMap<String, BTreeSet<ObjIx>>,
    properties: BTreeMap<String, HashMap<ObjIx, Value>>,
    links: BTreeMap<String, HashMap<ObjIx, ObjIx>>,
    schema: BTreeMap<String, SymbolKind>,
    fact_count: usize,
}

impl FactualModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a model from a fact sequence, stopping at the first error.
    pub fn from_facts<I: IntoIterator<Item = Fact>>(facts: I) -> Result<Self, FactError> {
        let mut model = FactualModel::new();
        for fact in facts {
            model.assert_fact(fact)?;
        }
        Ok(model)
    }

    /// Reads a JSON Lines fact file. Blank lines are skipped.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, FactError> {
        let mut model = FactualModel::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| FactError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let fact = Fact::from_json_line(&line).map_err(|message| FactError::Parse {
                line: n + 1,
                message,
            })?;
            model.assert_fact(fact).map_err(|e| match e {
                FactError::Parse { .. } => e,
                other => FactError::Parse {
                    line: n + 1,
                    message: other.to_string(),
                },
            })?;
        }
        Ok(model)
    }

    /// Adds a fact. Re-asserting an identical fact is a no-op; asserting a
    /// different value for an existing `(symbol, object)` pair is an error.
    pub fn assert_fact(&mut self, fact: Fact) -> Result<&mut Self, FactError> {
        match fact {
            Fact::Categorical { category, obj } => {
                let ix = self.intern(obj);
                if self.categories.entry(category).or_default().insert(ix) {
                    self.fact_count += 1;
                }
            }
            Fact::Property { prop, obj, val } => {
                if let Value::Real(r) = val {
                    if !r.is_finite() {
                        return Err(FactError::NonFiniteReal);
                    }
                }
                let kind = val.kind();
                match self.schema.get(&prop) {
                    Some(SymbolKind::Property(k)) if *k != kind => {
                        return Err(FactError::KindMismatch {
                            symbol: prop,
                            expected: *k,
                            found: kind,
                        })
                    }
                    Some(SymbolKind::Link) => {
                        return Err(FactError::KindMismatch {
                            symbol: prop,
                            expected: ValueKind::Ref,
                            found: kind,
                        })
                    }
                    _ => {}
                }
                if let Value::Ref(target) = &val {
                    if !self.index.contains_key(target) {
                        return Err(FactError::DanglingRef(target.to_string()));
                    }
                }
                if let Some(&ix) = self.index.get(&obj) {
                    if let Some(existing) = self.properties.get(&prop).and_then(|m| m.get(&ix)) {
                        if *existing == val {
                            return Ok(self);
                        }
                        return Err(FactError::DuplicateFunctionalFact {
                            symbol: prop,
                            object: obj.to_string(),
                        });
                    }
                }
                let ix = self.intern(obj);
                self.schema.insert(prop.clone(), SymbolKind::Property(kind));
                self.properties.entry(prop).or_default().insert(ix, val);
                self.fact_count += 1;
            }
            Fact::Link { link, obj, target } => {
                if let Some(SymbolKind::Property(k)) = self.schema.get(&link) {
                    return Err(FactError::KindMismatch {
                        symbol: link,
                        expected: *k,
                        found: ValueKind::Ref,
                    });
                }
                let target_ix = *self
                    .index
                    .get(&target)
                    .ok_or_else(|| FactError::DanglingRef(target.to_string()))?;
                if let Some(&ix) = self.index.get(&obj) {
                    if let Some(&existing) = self.links.get(&link).and_then(|m| m.get(&ix)) {
                        if existing == target_ix {
                            return Ok(self);
                        }
                        return Err(FactError::DuplicateFunctionalFact {
                            symbol: link,
                            object: obj.to_string(),
                        });
                    }
                }
                let ix = self.intern(obj);
                self.schema.insert(link.clone(), SymbolKind::Link);
                self.links.entry(link).or_default().insert(ix, target_ix);
                self.fact_count += 1;
            }
        }
        Ok(self)
    }

    fn intern(&mut self, id: ObjectId) -> ObjIx {
        if let Some(&ix) = self.index.get(&id) {
            return ix;
        }
        let ix = self.ids.len();
        self.ids.push(id.clone());
        self.index.insert(id, ix);
        ix
    }

    pub fn object_count(&self) -> usize {
        self.ids.len()
    }

    pub fn fact_count(&self) -> usize {
        self.fact_count
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn object_ids(&self) -> &[ObjectId] {
        &self.ids
    }

    pub fn ix(&self, id: &ObjectId) -> Option<ObjIx> {
        self.index.get(id).copied()
    }

    pub fn id(&self, ix: ObjIx) -> &ObjectId {
        &self.ids[ix]
    }

    pub fn schema(&self) -> &BTreeMap<String, SymbolKind> {
        &self.schema
    }

    pub fn symbol_kind(&self, symbol: &str) -> Option<SymbolKind> {
        self.schema.get(symbol).copied()
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    pub fn has_category(&self, category: &str, ix: ObjIx) -> bool {
        self.categories
            .get(category)
            .is_some_and(|members| members.contains(&ix))
    }

    pub fn property(&self, prop: &str, ix: ObjIx) -> Option<&Value> {
        self.properties.get(prop)?.get(&ix)
    }

    pub fn link_target(&self, link: &str, ix: ObjIx) -> Option<&ObjectId> {
        self.links.get(link)?.get(&ix).map(|&t| &self.ids[t])
    }

    /// All objects carrying a categorical fact for `category`; empty when the
    /// category is unknown.
    pub fn objects_of(&self, category: &str) -> BTreeSet<ObjectId> {
        self.categories
            .get(category)
            .map(|members| members.iter().map(|&ix| self.ids[ix].clone()).collect())
            .unwrap_or_default()
    }

    /// Exact number of objects on which `pred` is defined and true.
    pub fn count_satisfying<P: Evaluable + ?Sized>(&self, pred: &P) -> usize {
        (0..self.ids.len())
            .filter(|&ix| pred.eval(self, ix) == Some(true))
            .count()
    }

    /// Every fact, in a canonical order (categorical, then properties, then
    /// links; each sorted by symbol and object id).
    pub fn facts(&self) -> Vec<Fact> {
        let mut out = Vec::with_capacity(self.fact_count);
        for (category, members) in &self.categories {
            let mut ids: Vec<&ObjectId> = members.iter().map(|&ix| &self.ids[ix]).collect();
            ids.sort();
            out.extend(ids.into_iter().map(|obj| Fact::Categorical {
                category: category.clone(),
                obj: obj.clone(),
            }));
        }
        for (prop, values) in &self.properties {
            let mut rows: Vec<(&ObjectId, &Value)> =
                values.iter().map(|(&ix, v)| (&self.ids[ix], v)).collect();
            rows.sort_by(|a, b| a.0.cmp(b.0));
            out.extend(rows.into_iter().map(|(obj, val)| Fact::Property {
                prop: prop.clone(),
                obj: obj.clone(),
                val: val.clone(),
            }));
        }
        for (link, targets) in &self.links {
            let mut rows: Vec<(&ObjectId, &ObjectId)> = targets
                .iter()
                .map(|(&ix, &t)| (&self.ids[ix], &self.ids[t]))
                .collect();
            rows.sort();
            out.extend(rows.into_iter().map(|(obj, target)| Fact::Link {
                link: link.clone(),
                obj: obj.clone(),
                target: target.clone(),
            }));
        }
        out
    }

    /// SHA-256 over the canonical fact listing; independent of assertion order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let mut objects: Vec<&ObjectId> = self.ids.iter().collect();
        objects.sort();
        for id in objects {
            hasher.update(b"obj ");
            hasher.update(id.as_str().as_bytes());
            hasher.update(b"\n");
        }
        for fact in self.facts() {
            hasher.update(fact.to_json_line().as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Writes the canonical JSON Lines form. Objects that carry no fact of
    /// their own are not representable and are dropped.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        // categorical facts come first, which is how link targets usually
        // get created
        for fact in self.facts() {
            out.push_str(&fact.to_json_line());
            out.push('\n');
        }
        out
    }
}

/// Anything that can be evaluated on a single object with three-valued
/// semantics: `None` means undefined (a referenced symbol is missing).
pub trait Evaluable {
    fn eval(&self, model: &FactualModel, ix: ObjIx) -> Option<bool>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn property_creates_object() {
        let mut m = FactualModel::new();
        m.assert_fact(Fact::prop("Age", "Ann", Value::Int(15)).unwrap())
            .unwrap();
        assert_eq!(m.object_count(), 1);
        assert_eq!(m.fact_count(), 1);
        assert_eq!(m.property("Age", 0), Some(&Value::Int(15)));
    }

    #[test]
    fn reassert_is_idempotent() {
        let mut m = FactualModel::new();
        let f = Fact::prop("Age", "Ann", Value::Int(15)).unwrap();
        m.assert_fact(f.clone()).unwrap();
        m.assert_fact(f).unwrap();
        assert_eq!(m.fact_count(), 1);
        m.assert_fact(Fact::cat("Person", "Ann").unwrap()).unwrap();
        m.assert_fact(Fact::cat("Person", "Ann").unwrap()).unwrap();
        assert_eq!(m.fact_count(), 2);
    }

    #[test]
    fn functional_properties() {
        let mut m = FactualModel::new();
        m.assert_fact(Fact::prop("Age", "Ann", Value::Int(15)).unwrap())
            .unwrap();
        let err = m
            .assert_fact(Fact::prop("Age", "Ann", Value::Int(16)).unwrap())
            .unwrap_err();
        assert!(matches!(err, FactError::DuplicateFunctionalFact { .. }));
    }

    #[test]
    fn kind_mismatch() {
        let mut m = FactualModel::new();
        m.assert_fact(Fact::prop("Age", "Ann", Value::Int(15)).unwrap())
            .unwrap();
        let err = m
            .assert_fact(Fact::prop("Age", "Bob", Value::Text("old".into())).unwrap())
            .unwrap_err();
        assert!(matches!(err, FactError::KindMismatch { .. }));
        // a symbol cannot be both a property and a link
        m.assert_fact(Fact::cat("Color", "Green").unwrap()).unwrap();
        let err = m
            .assert_fact(Fact::link("Age", "Bob", "Green").unwrap())
            .unwrap_err();
        assert!(matches!(err, FactError::KindMismatch { .. }));
    }

    #[test]
    fn links_need_targets() {
        let mut m = FactualModel::new();
        let err = m
            .assert_fact(Fact::link("HasHairColor", "Ann", "Green").unwrap())
            .unwrap_err();
        assert_eq!(err, FactError::DanglingRef("Green".into()));
        m.assert_fact(Fact::cat("HairColor", "Green").unwrap())
            .unwrap();
        m.assert_fact(Fact::link("HasHairColor", "Ann", "Green").unwrap())
            .unwrap();
        m.assert_fact(Fact::link("HasHairColor", "Ann", "Green").unwrap())
            .unwrap();
        assert_eq!(m.fact_count(), 2);
        m.assert_fact(Fact::cat("HairColor", "Blonde").unwrap())
            .unwrap();
        let err = m
            .assert_fact(Fact::link("HasHairColor", "Ann", "Blonde").unwrap())
            .unwrap_err();
        assert!(matches!(err, FactError::DuplicateFunctionalFact { .. }));
        let err = m
            .assert_fact(
                Fact::prop("Friend", "Ann", Value::Ref(ObjectId::new("Zed").unwrap())).unwrap(),
            )
            .unwrap_err();
        assert!(matches!(err, FactError::DanglingRef(_)));
    }

    #[test]
    fn non_finite_real_rejected() {
        let mut m = FactualModel::new();
        let err = m
            .assert_fact(Fact::prop("H", "a", Value::Real(f64::NAN)).unwrap())
            .unwrap_err();
        assert_eq!(err, FactError::NonFiniteReal);
    }

    #[test]
    fn objects_of_unknown_category_is_empty() {
        let mut m = FactualModel::new();
        m.assert_fact(Fact::cat("Person", "Victor").unwrap())
            .unwrap();
        assert!(m.objects_of("Unicorn").is_empty());
        assert!(m
            .objects_of("Person")
            .contains(&ObjectId::new("Victor").unwrap()));
    }

    #[test]
    fn empty_ids_rejected() {
        assert_eq!(ObjectId::new("").unwrap_err(), FactError::EmptyId);
    }

    #[test]
    fn json_lines_exact_layout() {
        let lines = [
            r#"{"type":"cat","category":"Person","object":"Victor"}"#,
            r#"{"type":"prop","property":"Age","object":"Ann","value":15}"#,
            r#"{"type":"link","link":"HasHairColor","object":"Ann","target":"Green"}"#,
        ];
        for line in lines {
            let fact = Fact::from_json_line(line).unwrap();
            assert_eq!(fact.to_json_line(), line);
        }
    }

    #[test]
    fn json_lines_reject_unknown_keys() {
        let err = Fact::from_json_line(
            r#"{"type":"cat","category":"Person","object":"Victor","extra":1}"#,
        )
        .unwrap_err();
        assert!(err.contains("unknown key"));
        assert!(Fact::from_json_line(r#"{"type":"rel","object":"x"}"#).is_err());
        assert!(Fact::from_json_line(r#"{"type":"cat","object":"x"}"#).is_err());
    }

    #[test]
    fn jsonl_reader_reports_line() {
        let src = "{\"type\":\"cat\",\"category\":\"HairColor\",\"object\":\"Green\"}\n\n\
                   {\"type\":\"link\",\"link\":\"HasHairColor\",\"object\":\"Ann\",\"target\":\"Blue\"}\n";
        let err = FactualModel::from_jsonl(src.as_bytes()).unwrap_err();
        assert!(matches!(err, FactError::Parse { line: 3, .. }));
    }

    #[test]
    fn fingerprint_ignores_assertion_order() {
        let a = FactualModel::from_facts([
            Fact::cat("Person", "Ann").unwrap(),
            Fact::prop("Age", "Ann", Value::Int(15)).unwrap(),
            Fact::prop("Age", "Bob", Value::Int(40)).unwrap(),
        ])
        .unwrap();
        let b = FactualModel::from_facts([
            Fact::prop("Age", "Bob", Value::Int(40)).unwrap(),
            Fact::prop("Age", "Ann", Value::Int(15)).unwrap(),
            Fact::cat("Person", "Ann").unwrap(),
        ])
        .unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let round = FactualModel::from_jsonl(a.to_jsonl().as_bytes()).unwrap();
        assert_eq!(round.fingerprint(), a.fingerprint());
    }
}
