//! Consistent one-step prediction from a law set.
//!
//! For every concept with applicable laws, only the most specific ones
//! (premise sets not strictly contained in another applicable law's) compete.
//! The best law for `T` and the best for `¬T` are compared by probability,
//! then by premise count; an exact tie on both is reported as ambiguous and
//! nothing is predicted for that concept. At most one literal per concept is
//! ever emitted.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::concepts::{ConceptError, ConceptSet, Literal};
use crate::facts::{Evaluable, Fact, FactualModel, ObjectId, SymbolKind, Value, ValueKind};
use crate::rules::{fraction_string, Law, Prob};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error(transparent)]
    Concept(#[from] ConceptError),
    #[error("invalid object description: {0}")]
    BadDescription(String),
    #[error("`{symbol}` expects {expected} values")]
    KindMismatch { symbol: String, expected: ValueKind },
}

/// Partial description of a fresh object: categories it belongs to and
/// property/link values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectDescription {
    pub categories: BTreeSet<String>,
    pub values: BTreeMap<String, Value>,
}

const CATEGORY_KEY: &str = "@type";

impl ObjectDescription {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: Value) -> Self {
        self.values.insert(key.to_string(), value);
        self
    }

    pub fn with_category(mut self, category: &str) -> Self {
        self.categories.insert(category.to_string());
        self
    }

    /// Parses `{"Age": 15, "HasHairColor": "Green", "@type": ["Person"]}`.
    pub fn from_json(src: &str) -> Result<Self, PredictError> {
        let bad = |m: String| PredictError::BadDescription(m);
        let v: serde_json::Value = serde_json::from_str(src).map_err(|e| bad(e.to_string()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| bad("expected a JSON object".into()))?;
        let mut desc = ObjectDescription::new();
        for (key, value) in obj {
            if key == CATEGORY_KEY {
                let names: Vec<&serde_json::Value> = match value {
                    serde_json::Value::Array(items) => items.iter().collect(),
                    single => vec![single],
                };
                for name in names {
                    let name = name
                        .as_str()
                        .ok_or_else(|| bad(format!("`{CATEGORY_KEY}` entries must be strings")))?;
                    desc.categories.insert(name.to_string());
                }
                continue;
            }
            let value = match value {
                serde_json::Value::String(s) => Value::Text(s.clone()),
                serde_json::Value::Bool(b) => Value::Flag(*b),
                serde_json::Value::Number(n) => match n.as_i64() {
                    Some(i) => Value::Int(i),
                    None => Value::Real(
                        n.as_f64()
                            .filter(|f| f.is_finite())
                            .ok_or_else(|| bad(format!("unsupported number {n}")))?,
                    ),
                },
                other => return Err(bad(format!("unsupported value for `{key}`: {other}"))),
            };
            desc.values.insert(key.clone(), value);
        }
        Ok(desc)
    }

    /// Checks value kinds against a reference model's schema. Keys the
    /// schema does not know are accepted as-is.
    pub fn check_against(&self, model: &FactualModel) -> Result<(), PredictError> {
        for (key, value) in &self.values {
            let expected = match model.symbol_kind(key) {
                None => continue,
                Some(SymbolKind::Link) => ValueKind::Ref,
                Some(SymbolKind::Property(k)) => k,
            };
            let ok = match (expected, value.kind()) {
                (ValueKind::Ref, ValueKind::Text | ValueKind::Ref) => true,
                (ValueKind::Real, ValueKind::Int) => true,
                (a, b) => a == b,
            };
            if !ok {
                return Err(PredictError::KindMismatch {
                    symbol: key.clone(),
                    expected,
                });
            }
        }
        Ok(())
    }

    /// A one-object model holding the description. Links become text
    /// properties; concept atoms compare links and text the same way.
    fn to_model(&self) -> FactualModel {
        let mut model = FactualModel::new();
        let id = "?".to_string();
        let obj = ObjectId::new(id.clone()).expect("non-empty");
        for c in &self.categories {
            model
                .assert_fact(Fact::Categorical {
                    category: c.clone(),
                    obj: obj.clone(),
                })
                .expect("fresh object");
        }
        for (key, value) in &self.values {
            let val = match value {
                Value::Ref(target) => Value::Text(target.to_string()),
                other => other.clone(),
            };
            model
                .assert_fact(Fact::Property {
                    prop: key.clone(),
                    obj: obj.clone(),
                    val,
                })
                .expect("single value per key");
        }
        if model.is_empty() {
            model
                .assert_fact(Fact::Categorical {
                    category: "@described".into(),
                    obj,
                })
                .expect("fresh object");
        }
        model
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    #[serde(flatten)]
    pub literal: Literal,
    #[serde(serialize_with = "ser_prob")]
    pub p: Prob,
    pub law: Law,
    #[serde(skip)]
    pub rivals: Vec<Law>,
}

fn ser_prob<S: serde::Serializer>(p: &Prob, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&fraction_string(p))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PredictionReport {
    pub predicted: Vec<Prediction>,
    pub ambiguous: Vec<String>,
    /// Applicable laws that lost to a selected law or sat in an ambiguous
    /// tie.
    pub rivals: Vec<Law>,
}

impl PredictionReport {
    pub fn literal_for(&self, concept: &str) -> Option<&Literal> {
        self.predicted
            .iter()
            .map(|p| &p.literal)
            .find(|l| l.concept == concept)
    }

    pub fn to_text(&self, concepts: &ConceptSet) -> Result<String, ConceptError> {
        let mut out = String::new();
        for p in &self.predicted {
            out.push_str(&format!(
                "{} (probability {}), because: {}\n",
                concepts.gloss(&p.literal)?,
                crate::rules::decimal_string(&p.p),
                crate::rules::explain(&p.law, concepts)?
            ));
        }
        for concept in &self.ambiguous {
            out.push_str(&format!(
                "No prediction for {concept}: equally strong laws point both ways.\n"
            ));
        }
        if out.is_empty() {
            out.push_str("No applicable laws.\n");
        }
        Ok(out)
    }
}

/// Laws whose premises all evaluate to true on the description. A premise
/// that is undefined on the description makes its law inapplicable.
pub fn applicable_laws<'a>(
    desc: &ObjectDescription,
    laws: &'a [Law],
    concepts: &ConceptSet,
) -> Result<Vec<&'a Law>, ConceptError> {
    let model = desc.to_model();
    let mut out = Vec::new();
    for law in laws {
        if concepts.conjunction(law.rule.premises())?.eval(&model, 0) == Some(true) {
            out.push(law);
        }
    }
    Ok(out)
}

/// Ranks laws for the same concept: higher p, then more premises, then
/// lexicographically smaller premises.
fn strength(a: &Law, b: &Law) -> Ordering {
    a.p()
        .cmp(&b.p())
        .then_with(|| a.rule.premises().len().cmp(&b.rule.premises().len()))
        .then_with(|| b.rule.premises().cmp(a.rule.premises()))
}

pub fn predict(
    desc: &ObjectDescription,
    laws: &[Law],
    concepts: &ConceptSet,
) -> Result<PredictionReport, ConceptError> {
    let applicable = applicable_laws(desc, laws, concepts)?;
    let mut by_concept: BTreeMap<&str, Vec<&Law>> = BTreeMap::new();
    for law in applicable {
        by_concept
            .entry(law.rule.conclusion().concept.as_str())
            .or_default()
            .push(law);
    }

    let mut report = PredictionReport::default();
    for (concept, candidates) in by_concept {
        let maximal: Vec<&Law> = candidates
            .iter()
            .copied()
            .filter(|l| {
                !candidates
                    .iter()
                    .any(|other| l.rule.premises_strict_subset_of(&other.rule))
            })
            .collect();
        let best = |positive: bool| {
            maximal
                .iter()
                .copied()
                .filter(|l| l.rule.conclusion().positive == positive)
                .max_by(|a, b| strength(a, b))
        };
        let winner = match (best(true), best(false)) {
            (Some(pos), Some(neg)) => {
                let tie =
                    pos.p() == neg.p() && pos.rule.premises().len() == neg.rule.premises().len();
                if tie {
                    report.ambiguous.push(concept.to_string());
                    report.rivals.extend(candidates.iter().map(|&l| l.clone()));
                    continue;
                }
                if strength(pos, neg) == Ordering::Greater {
                    pos
                } else {
                    neg
                }
            }
            (Some(only), None) | (None, Some(only)) => only,
            (None, None) => unreachable!("candidates are non-empty and some law is maximal"),
        };
        let rivals: Vec<Law> = candidates
            .iter()
            .filter(|l| !std::ptr::eq(**l, winner))
            .map(|&l| l.clone())
            .collect();
        report.rivals.extend(rivals.iter().cloned());
        report.predicted.push(Prediction {
            literal: winner.rule.conclusion().clone(),
            p: winner.p(),
            law: winner.clone(),
            rivals,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::parse_concepts;
    use crate::rules::{Rule, RuleStats};

    fn law(prem: &[Literal], concl: Literal, support: u64, hits: u64) -> Law {
        Law {
            rule: Rule::new(prem.to_vec(), concl).unwrap(),
            stats: RuleStats { support, hits },
            subset_max_p: None,
        }
    }

    fn concepts() -> ConceptSet {
        parse_concepts(
            "T4 := Age < 16\nT10 := Occupation = \"Student\"\nA := cat(Adult)\nT := Tall = true",
        )
        .unwrap()
    }

    #[test]
    fn applicability() {
        let c = concepts();
        let laws = vec![law(&[Literal::pos("T4")], Literal::pos("T10"), 50, 49)];
        let young = ObjectDescription::new().with("Age", Value::Int(15));
        assert_eq!(applicable_laws(&young, &laws, &c).unwrap().len(), 1);
        let old = ObjectDescription::new().with("Age", Value::Int(30));
        assert!(applicable_laws(&old, &laws, &c).unwrap().is_empty());
        assert!(applicable_laws(&ObjectDescription::new(), &laws, &c)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_law_prediction() {
        let c = concepts();
        let laws = vec![law(&[Literal::pos("T4")], Literal::pos("T10"), 50, 49)];
        let desc = ObjectDescription::new().with("Age", Value::Int(15));
        let report = predict(&desc, &laws, &c).unwrap();
        assert_eq!(report.predicted.len(), 1);
        assert_eq!(report.predicted[0].literal, Literal::pos("T10"));
        assert_eq!(report.predicted[0].p, Prob::new(49, 50));
    }

    #[test]
    fn specific_law_dominates() {
        let c = concepts();
        let laws = vec![
            law(&[], Literal::pos("T"), 10, 6),
            law(&[Literal::pos("A")], Literal::neg("T"), 10, 9),
        ];
        let desc = ObjectDescription::new().with_category("Adult");
        let report = predict(&desc, &laws, &c).unwrap();
        assert_eq!(report.literal_for("T"), Some(&Literal::neg("T")));
        assert_eq!(report.rivals.len(), 1);
        // even a stronger base rate loses to the more specific law
        let laws = vec![
            law(&[], Literal::pos("T"), 100, 99),
            law(&[Literal::pos("A")], Literal::neg("T"), 10, 6),
        ];
        let report = predict(&desc, &laws, &c).unwrap();
        assert_eq!(report.literal_for("T"), Some(&Literal::neg("T")));
    }

    #[test]
    fn exact_tie_abstains() {
        let c = concepts();
        let laws = vec![
            law(&[Literal::pos("A")], Literal::pos("T"), 10, 5),
            law(&[Literal::pos("A")], Literal::neg("T"), 10, 5),
        ];
        let desc = ObjectDescription::new().with_category("Adult");
        let report = predict(&desc, &laws, &c).unwrap();
        assert!(report.predicted.is_empty());
        assert_eq!(report.ambiguous, vec!["T".to_string()]);
        assert_eq!(report.rivals.len(), 2);
    }

    #[test]
    fn incomparable_laws_resolved_by_p_then_size() {
        let c = concepts();
        let desc = ObjectDescription::new()
            .with_category("Adult")
            .with("Age", Value::Int(10));
        let laws = vec![
            law(&[Literal::pos("A")], Literal::pos("T"), 10, 7),
            law(&[Literal::pos("T4")], Literal::neg("T"), 10, 8),
        ];
        let report = predict(&desc, &laws, &c).unwrap();
        assert_eq!(report.literal_for("T"), Some(&Literal::neg("T")));
    }

    #[test]
    fn description_json() {
        let d = ObjectDescription::from_json(
            r#"{"Age":15,"Height":1.5,"Name":"Ann","@type":["Person"],"Ok":true}"#,
        )
        .unwrap();
        assert_eq!(d.values["Age"], Value::Int(15));
        assert_eq!(d.values["Height"], Value::Real(1.5));
        assert!(d.categories.contains("Person"));
        assert!(ObjectDescription::from_json("[1]").is_err());
        assert!(ObjectDescription::from_json(r#"{"a":[1]}"#).is_err());
        let m = FactualModel::from_facts([Fact::prop("Age", "x", Value::Int(3)).unwrap()]).unwrap();
        assert!(d.check_against(&m).is_ok());
        let bad = ObjectDescription::new().with("Age", Value::Text("15".into()));
        assert!(matches!(
            bad.check_against(&m),
            Err(PredictError::KindMismatch { .. })
        ));
    }

    #[test]
    fn report_json_shape() {
        let c = concepts();
        let laws = vec![law(&[Literal::pos("T4")], Literal::pos("T10"), 50, 49)];
        let desc = ObjectDescription::new().with("Age", Value::Int(15));
        let report = predict(&desc, &laws, &c).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["predicted"][0]["concept"], "T10");
        assert_eq!(json["predicted"][0]["sign"], true);
        assert_eq!(json["predicted"][0]["p"], "49/50");
        assert_eq!(json["predicted"][0]["law"]["support"], 50);
        assert_eq!(json["ambiguous"], serde_json::json!([]));
    }
}
