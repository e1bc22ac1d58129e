//! Causal rules `T1* ∧ … ∧ Tn* → T0*`, their exact conditional probabilities
//! and the probabilistic-law test.
//!
//! Counting runs over a [`ConceptTable`]: one pair of bitsets per concept
//! (where it is defined, where it is true). A rule's counting domain is the
//! set of objects on which every concept it mentions is defined; support and
//! hits are popcounts over that domain. All comparisons between
//! probabilities are on exact rationals.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;

use fixedbitset::FixedBitSet;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::{ConceptError, ConceptSet, Literal};
use crate::facts::FactualModel;
use crate::miner::MiningParams;

pub type Prob = Ratio<u64>;

/// Largest premise set the exhaustive subset check will accept.
pub const MAX_CHECKED_PREMISES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error(transparent)]
    Concept(#[from] ConceptError),
    #[error("conclusion concept `{0}` also appears among the premises")]
    ConclusionInPremises(String),
    #[error("premise `{0}` is listed twice")]
    DuplicatePremise(String),
    #[error("{0} premises exceed the exhaustive subset-check limit")]
    TooManyPremises(usize),
    #[error("law file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    premises: Vec<Literal>,
    conclusion: Literal,
}

impl Rule {
    /// Premises are kept sorted. Complementary premises (`T ∧ ¬T`) are
    /// allowed; such a rule simply has zero support.
    pub fn new(mut premises: Vec<Literal>, conclusion: Literal) -> Result<Rule, RuleError> {
        premises.sort();
        if let Some(w) = premises.windows(2).find(|w| w[0] == w[1]) {
            return Err(RuleError::DuplicatePremise(w[0].to_string()));
        }
        if premises.iter().any(|p| p.concept == conclusion.concept) {
            return Err(RuleError::ConclusionInPremises(conclusion.concept));
        }
        Ok(Rule {
            premises,
            conclusion,
        })
    }

    pub fn premises(&self) -> &[Literal] {
        &self.premises
    }

    pub fn conclusion(&self) -> &Literal {
        &self.conclusion
    }

    /// True when every premise of `self` is also a premise of `other` and
    /// `other` has at least one more.
    pub fn premises_strict_subset_of(&self, other: &Rule) -> bool {
        self.premises.len() < other.premises.len()
            && self.premises.iter().all(|p| other.premises.contains(p))
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.premises.is_empty() {
            f.write_str("∅")?;
        } else {
            let body: Vec<String> = self.premises.iter().map(Literal::to_string).collect();
            f.write_str(&body.join(" ∧ "))?;
        }
        write!(f, " → {}", self.conclusion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RuleStats {
    /// N(premises) over the rule's domain.
    pub support: u64,
    /// N(premises ∧ conclusion) over the rule's domain.
    pub hits: u64,
}

impl RuleStats {
    /// `None` when the premises are never satisfied.
    pub fn p(&self) -> Option<Prob> {
        (self.support > 0).then(|| Ratio::new(self.hits, self.support))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LawRecord", try_from = "LawRecord")]
pub struct Law {
    pub rule: Rule,
    pub stats: RuleStats,
    /// Best probability among proper premise subsets; `None` when no subset
    /// has a defined probability (always the case for an empty premise set),
    /// or when the law was read back from a file.
    pub subset_max_p: Option<Prob>,
}

impl Law {
    pub fn p(&self) -> Prob {
        self.stats.p().expect("laws have positive support")
    }
}

/// Why a rule failed the law test.
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    Undefined,
    LowSupport {
        support: u64,
        min_support: u64,
    },
    Redundant {
        subset: Vec<Literal>,
        subset_p: Prob,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Accept(Law),
    Reject(Rejection),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept(_))
    }
}

/// Per-concept truth tables as bitsets over the model's objects.
#[derive(Debug, Clone)]
pub struct ConceptTable {
    names: Vec<String>,
    slots: HashMap<String, usize>,
    defined: Vec<FixedBitSet>,
    /// `holds[2c]` = defined and true, `holds[2c + 1]` = defined and false.
    holds: Vec<FixedBitSet>,
    objects: usize,
}

impl ConceptTable {
    /// Evaluates each named concept on every object of `model`.
    pub fn build(
        model: &FactualModel,
        concepts: &ConceptSet,
        names: &[String],
    ) -> Result<Self, ConceptError> {
        let mut unique: Vec<String> = Vec::with_capacity(names.len());
        for n in names {
            if !unique.contains(n) {
                unique.push(n.clone());
            }
        }
        let resolved = unique
            .iter()
            .map(|n| concepts.get(n))
            .collect::<Result<Vec<_>, _>>()?;
        let objects = model.object_count();
        let columns: Vec<(FixedBitSet, FixedBitSet, FixedBitSet)> = resolved
            .par_iter()
            .map(|concept| {
                let mut defined = FixedBitSet::with_capacity(objects);
                let mut yes = FixedBitSet::with_capacity(objects);
                let mut no = FixedBitSet::with_capacity(objects);
                for ix in 0..objects {
                    match concept.eval(model, ix) {
                        Some(true) => {
                            defined.insert(ix);
                            yes.insert(ix);
                        }
                        Some(false) => {
                            defined.insert(ix);
                            no.insert(ix);
                        }
                        None => {}
                    }
                }
                (defined, yes, no)
            })
            .collect();
        let mut defined = Vec::with_capacity(columns.len());
        let mut holds = Vec::with_capacity(columns.len() * 2);
        for (d, y, n) in columns {
            defined.push(d);
            holds.push(y);
            holds.push(n);
        }
        let slots = unique
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(ConceptTable {
            names: unique,
            slots,
            defined,
            holds,
            objects,
        })
    }

    pub fn objects(&self) -> usize {
        self.objects
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slot(&self, concept: &str) -> Result<usize, ConceptError> {
        self.slots
            .get(concept)
            .copied()
            .ok_or_else(|| ConceptError::UnknownConcept(concept.to_string()))
    }

    /// Literal id: `2 * slot` for positive, `2 * slot + 1` for negative.
    pub fn literal_id(&self, lit: &Literal) -> Result<usize, ConceptError> {
        Ok(2 * self.slot(&lit.concept)? + usize::from(!lit.positive))
    }

    pub fn literal(&self, id: usize) -> Literal {
        Literal {
            concept: self.names[id / 2].clone(),
            positive: id.is_multiple_of(2),
        }
    }

    pub(crate) fn holds(&self, lit_id: usize) -> &FixedBitSet {
        &self.holds[lit_id]
    }

    /// Objects satisfying all premises, restricted to where the conclusion's
    /// concept is defined.
    pub(crate) fn cover(&self, premises: &[usize], conclusion: usize) -> FixedBitSet {
        let mut cover = self.defined[conclusion / 2].clone();
        for &p in premises {
            cover.intersect_with(&self.holds[p]);
        }
        cover
    }

    pub(crate) fn stats_for_cover(&self, cover: &FixedBitSet, conclusion: usize) -> RuleStats {
        RuleStats {
            support: cover.count_ones(..) as u64,
            hits: cover.intersection_count(&self.holds[conclusion]) as u64,
        }
    }

    pub(crate) fn stats_ids(&self, premises: &[usize], conclusion: usize) -> RuleStats {
        let cover = self.cover(premises, conclusion);
        self.stats_for_cover(&cover, conclusion)
    }

    pub fn stats(&self, rule: &Rule) -> Result<RuleStats, ConceptError> {
        let premises = rule
            .premises
            .iter()
            .map(|l| self.literal_id(l))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.stats_ids(&premises, self.literal_id(&rule.conclusion)?))
    }

    /// Applies the probabilistic-law test: enough support, and strictly
    /// higher probability than every proper premise subset with a defined
    /// probability.
    pub fn law_verdict(&self, rule: &Rule, min_support: u64) -> Result<Verdict, RuleError> {
        let n = rule.premises.len();
        if n > MAX_CHECKED_PREMISES {
            return Err(RuleError::TooManyPremises(n));
        }
        let ids = rule
            .premises
            .iter()
            .map(|l| self.literal_id(l))
            .collect::<Result<Vec<_>, _>>()?;
        let conclusion = self.literal_id(&rule.conclusion)?;
        let stats = self.stats_ids(&ids, conclusion);
        let Some(p) = stats.p() else {
            return Ok(Verdict::Reject(Rejection::Undefined));
        };
        if stats.support < min_support {
            return Ok(Verdict::Reject(Rejection::LowSupport {
                support: stats.support,
                min_support,
            }));
        }
        let mut best: Option<Prob> = None;
        let full = (1u32 << n) - 1;
        for mask in 0..full {
            let subset: Vec<usize> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| ids[i])
                .collect();
            let Some(sp) = self.stats_ids(&subset, conclusion).p() else {
                continue;
            };
            if sp >= p {
                return Ok(Verdict::Reject(Rejection::Redundant {
                    subset: subset.iter().map(|&id| self.literal(id)).collect(),
                    subset_p: sp,
                }));
            }
            best = best.max(Some(sp));
        }
        Ok(Verdict::Accept(Law {
            rule: rule.clone(),
            stats,
            subset_max_p: best,
        }))
    }
}

fn rule_concepts(rule: &Rule) -> Vec<String> {
    rule.premises
        .iter()
        .chain(std::iter::once(&rule.conclusion))
        .map(|l| l.concept.clone())
        .collect()
}

/// Support, hits and exact probability of `rule` over `model`.
pub fn conditional_probability(
    model: &FactualModel,
    concepts: &ConceptSet,
    rule: &Rule,
) -> Result<RuleStats, ConceptError> {
    ConceptTable::build(model, concepts, &rule_concepts(rule))?.stats(rule)
}

pub fn is_probabilistic_law(
    model: &FactualModel,
    concepts: &ConceptSet,
    rule: &Rule,
    min_support: u64,
) -> Result<Verdict, RuleError> {
    ConceptTable::build(model, concepts, &rule_concepts(rule))?.law_verdict(rule, min_support)
}

/// Exact `a/b` in lowest terms, e.g. `"49/50"`, `"1/1"`.
pub fn fraction_string(p: &Prob) -> String {
    format!("{}/{}", p.numer(), p.denom())
}

pub fn parse_fraction(s: &str) -> Option<Prob> {
    let (a, b) = s.split_once('/')?;
    let (a, b): (u64, u64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
    (b > 0).then(|| Ratio::new(a, b))
}

/// Decimal rendering for prose: exact when the expansion terminates within
/// six places, otherwise rounded to three and marked with `~`.
pub fn decimal_string(p: &Prob) -> String {
    let (n, d) = (*p.numer() as u128, *p.denom() as u128);
    let whole = n / d;
    let mut rem = n % d;
    let mut digits = String::new();
    for _ in 0..6 {
        if rem == 0 {
            break;
        }
        rem *= 10;
        digits.push(char::from(b'0' + (rem / d) as u8));
        rem %= d;
    }
    if rem == 0 {
        return if digits.is_empty() {
            whole.to_string()
        } else {
            format!("{whole}.{digits}")
        };
    }
    let scaled = (n * 1000 + d / 2) / d;
    let s = format!("{}.{:03}", scaled / 1000, scaled % 1000);
    format!("~{}", s.trim_end_matches('0').trim_end_matches('.'))
}

/// One-sentence English rendering of a law.
pub fn explain(law: &Law, concepts: &ConceptSet) -> Result<String, ConceptError> {
    let conclusion = concepts.gloss(&law.rule.conclusion)?;
    let p = decimal_string(&law.p());
    if law.rule.premises.is_empty() {
        return Ok(format!("Unconditionally, {conclusion} (probability {p})."));
    }
    let several = law.rule.premises.len() > 1;
    let mut parts = Vec::with_capacity(law.rule.premises.len());
    for lit in &law.rule.premises {
        let concept = concepts.get(&lit.concept)?;
        let gloss = concepts.gloss(lit)?;
        if several && lit.positive && concept.body.len() > 1 {
            parts.push(format!("({gloss})"));
        } else {
            parts.push(gloss);
        }
    }
    Ok(format!(
        "If {} then {conclusion} (probability {p}, support {}).",
        parts.join(" and "),
        law.stats.support
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub fingerprint: String,
    pub params: Option<MiningParams>,
}

/// The mined causal model: laws plus where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LawSet {
    pub laws: Vec<Law>,
    pub provenance: Provenance,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LawRecord {
    premises: Vec<Literal>,
    conclusion: Literal,
    support: u64,
    hits: u64,
    p: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceRecord {
    provenance: Provenance,
}

impl From<Law> for LawRecord {
    fn from(law: Law) -> Self {
        LawRecord {
            p: fraction_string(&law.p()),
            premises: law.rule.premises,
            conclusion: law.rule.conclusion,
            support: law.stats.support,
            hits: law.stats.hits,
        }
    }
}

impl TryFrom<LawRecord> for Law {
    type Error = String;

    fn try_from(rec: LawRecord) -> Result<Self, Self::Error> {
        if rec.support == 0 || rec.hits > rec.support {
            return Err("support must be positive and at least hits".into());
        }
        let stats = RuleStats {
            support: rec.support,
            hits: rec.hits,
        };
        let p = parse_fraction(&rec.p).ok_or_else(|| format!("bad fraction `{}`", rec.p))?;
        if Some(p) != stats.p() {
            return Err(format!("p {} disagrees with hits/support", rec.p));
        }
        let rule = Rule::new(rec.premises, rec.conclusion).map_err(|e| e.to_string())?;
        Ok(Law {
            rule,
            stats,
            subset_max_p: None,
        })
    }
}

impl Law {
    /// One export line: premises, conclusion, support, hits, exact `p`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("law records serialize")
    }

    pub fn from_json_str(line: &str) -> Result<Law, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }
}

impl LawSet {
    /// JSON Lines: a provenance header line, then one law per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&ProvenanceRecord {
            provenance: self.provenance.clone(),
        })
        .expect("provenance serializes");
        out.push('\n');
        for law in &self.laws {
            let _ = writeln!(out, "{}", law.to_json_line());
        }
        out
    }

    /// Reads the format written by [`LawSet::to_jsonl`]; the provenance line
    /// is optional.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<LawSet, RuleError> {
        let mut laws = Vec::new();
        let mut provenance = Provenance {
            fingerprint: String::new(),
            params: None,
        };
        for (n, line) in reader.lines().enumerate() {
            let format_err = |message: String| RuleError::Format {
                line: n + 1,
                message,
            };
            let line = line.map_err(|e| format_err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if line.trim_start().starts_with("{\"provenance\"") {
                let rec: ProvenanceRecord =
                    serde_json::from_str(&line).map_err(|e| format_err(e.to_string()))?;
                provenance = rec.provenance;
                continue;
            }
            laws.push(Law::from_json_str(&line).map_err(format_err)?);
        }
        Ok(LawSet { laws, provenance })
    }
}
