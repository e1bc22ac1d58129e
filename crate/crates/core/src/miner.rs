//! Level-wise search of the premise lattice for probabilistic laws.
//!
//! For each target literal the search grows premise sets one literal at a
//! time, in canonical (lexicographic) order so every set is generated once.
//! Two facts make the search exact while pruning:
//!
//! * support is anti-monotone, so a node below `min_support` has no law
//!   among its descendants, and a child whose immediate subsets were not all
//!   kept can be skipped without counting;
//! * a node's best proper-subset probability is the max over its immediate
//!   subsets of `max(p, best_subset_p)`, so it is carried forward instead of
//!   re-enumerating `2^n` subsets.
//!
//! [`oracle_mine`] enumerates the same lattice by brute force with
//! object-by-object counting and is used to cross-check [`mine_laws`].

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::{ConceptError, ConceptSet, Literal};
use crate::facts::FactualModel;
use crate::rules::{
    ConceptTable, Law, LawSet, Prob, Provenance, Rule, RuleError, RuleStats, Verdict,
};

pub const MAX_PREMISES_CAP: usize = 5;
pub const ORACLE_MAX_VOCABULARY: usize = 12;
pub const ORACLE_MAX_PREMISES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MineError {
    #[error(transparent)]
    Concept(#[from] ConceptError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("invalid mining parameters: {0}")]
    InvalidParams(String),
    #[error("exhaustive search would visit up to {nodes} nodes (limit {limit})")]
    VocabularyTooLarge { nodes: u128, limit: u64 },
    #[error("oracle bounds exceeded: {0}")]
    OracleTooLarge(String),
    #[error("law `{0}` failed the post-search audit")]
    AuditFailed(String),
}

mod fraction {
    use num_rational::Ratio;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::rules::fraction_string(p))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<u64>, D::Error> {
        let s = String::deserialize(d)?;
        crate::rules::parse_fraction(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("bad fraction `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningParams {
    pub targets: Vec<Literal>,
    pub vocabulary: Vec<String>,
    pub max_premises: usize,
    pub min_support: u64,
    #[serde(with = "fraction")]
    pub min_p: Prob,
    /// 0 means exhaustive.
    pub beam_width: usize,
    /// Ceiling on candidate nodes for exhaustive search.
    pub max_nodes: u64,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            targets: Vec::new(),
            vocabulary: Vec::new(),
            max_premises: 3,
            min_support: 3,
            min_p: Ratio::new(1, 2),
            beam_width: 0,
            max_nodes: 10_000_000,
        }
    }
}

impl MiningParams {
    pub fn new(targets: Vec<Literal>, vocabulary: Vec<String>) -> Self {
        MiningParams {
            targets,
            vocabulary,
            ..Default::default()
        }
    }

    pub fn validate(&self, concepts: &ConceptSet) -> Result<(), MineError> {
        if self.max_premises > MAX_PREMISES_CAP {
            return Err(MineError::InvalidParams(format!(
                "max_premises {} exceeds the cap of {MAX_PREMISES_CAP}",
                self.max_premises
            )));
        }
        if self.min_support < 1 {
            return Err(MineError::InvalidParams(
                "min_support must be at least 1".into(),
            ));
        }
        if self.min_p > Ratio::from_integer(1) {
            return Err(MineError::InvalidParams("min_p must lie in [0, 1]".into()));
        }
        for name in &self.vocabulary {
            concepts.get(name)?;
        }
        for t in &self.targets {
            concepts.get(&t.concept)?;
            if !self.vocabulary.contains(&t.concept) {
                return Err(MineError::InvalidParams(format!(
                    "target concept `{}` is not in the vocabulary",
                    t.concept
                )));
            }
        }
        Ok(())
    }

    fn premise_concepts(&self, target: &Literal) -> Vec<String> {
        let mut names: Vec<String> = self
            .vocabulary
            .iter()
            .filter(|n| **n != target.concept)
            .cloned()
            .collect();
        names.sort();
        names.dedup();
        names
    }

    /// Upper bound on lattice nodes an exhaustive search may visit.
    pub fn candidate_nodes(&self) -> u128 {
        self.targets
            .iter()
            .map(|t| {
                let m = self.premise_concepts(t).len() as u128;
                let mut total = 0u128;
                let mut choose = 1u128;
                total += 1;
                for k in 1..=self.max_premises.min(m as usize) as u128 {
                    choose = choose * (m - k + 1) / k;
                    total += choose << k;
                }
                total
            })
            .sum()
    }
}

struct Node {
    cover: FixedBitSet,
    p: Prob,
    best_subset_p: Option<Prob>,
}

/// Mines all probabilistic laws for the configured targets.
///
/// With `beam_width == 0` the result is exact. With a beam, each level keeps
/// only the best `beam_width` nodes (by p, then literal order) and each
/// candidate is checked against all of its subsets directly, so the output is
/// a subset of the exhaustive one.
pub fn mine_laws(
    model: &FactualModel,
    concepts: &ConceptSet,
    params: &MiningParams,
) -> Result<LawSet, MineError> {
    params.validate(concepts)?;
    if params.beam_width == 0 {
        let nodes = params.candidate_nodes();
        if nodes > params.max_nodes as u128 {
            return Err(MineError::VocabularyTooLarge {
                nodes,
                limit: params.max_nodes,
            });
        }
    }
    let mut names = params.vocabulary.clone();
    names.sort();
    let table = ConceptTable::build(model, concepts, &names)?;

    let per_target = params
        .targets
        .par_iter()
        .map(|target| {
            let mut laws = if params.beam_width == 0 {
                search_exhaustive(&table, params, target)?
            } else {
                search_beam(&table, params, target)?
            };
            laws.sort_by(|a, b| {
                a.rule
                    .premises()
                    .len()
                    .cmp(&b.rule.premises().len())
                    .then_with(|| a.rule.premises().cmp(b.rule.premises()))
            });
            Ok(laws)
        })
        .collect::<Result<Vec<_>, MineError>>()?;

    let laws: Vec<Law> = per_target.into_iter().flatten().collect();
    for law in &laws {
        match table.law_verdict(&law.rule, params.min_support)? {
            Verdict::Accept(check)
                if check.stats == law.stats && check.subset_max_p == law.subset_max_p => {}
            _ => return Err(MineError::AuditFailed(law.rule.to_string())),
        }
    }
    Ok(LawSet {
        laws,
        provenance: Provenance {
            fingerprint: model.fingerprint(),
            params: Some(params.clone()),
        },
    })
}

fn candidate_literals(
    table: &ConceptTable,
    params: &MiningParams,
    target: &Literal,
) -> Result<Vec<usize>, ConceptError> {
    // table slots are in lexicographic name order, so literal ids are too
    let mut ids = Vec::new();
    for name in params.premise_concepts(target) {
        let slot = table.slot(&name)?;
        ids.push(2 * slot);
        ids.push(2 * slot + 1);
    }
    ids.sort_unstable();
    Ok(ids)
}

fn make_law(
    table: &ConceptTable,
    key: &[usize],
    conclusion: usize,
    stats: RuleStats,
    best: Option<Prob>,
) -> Result<Law, RuleError> {
    let rule = Rule::new(
        key.iter().map(|&id| table.literal(id)).collect(),
        table.literal(conclusion),
    )?;
    Ok(Law {
        rule,
        stats,
        subset_max_p: best,
    })
}

fn search_exhaustive(
    table: &ConceptTable,
    params: &MiningParams,
    target: &Literal,
) -> Result<Vec<Law>, MineError> {
    let conclusion = table.literal_id(target)?;
    let candidates = candidate_literals(table, params, target)?;
    let mut laws = Vec::new();

    let root_cover = table.cover(&[], conclusion);
    let root_stats = table.stats_for_cover(&root_cover, conclusion);
    let mut level: HashMap<Vec<usize>, Node> = HashMap::new();
    match root_stats.p() {
        Some(p) if root_stats.support >= params.min_support => {
            if p >= params.min_p {
                laws.push(make_law(table, &[], conclusion, root_stats, None)?);
            }
            level.insert(
                Vec::new(),
                Node {
                    cover: root_cover,
                    p,
                    best_subset_p: None,
                },
            );
        }
        _ => return Ok(laws),
    }

    for _depth in 1..=params.max_premises {
        let mut next: HashMap<Vec<usize>, Node> = HashMap::new();
        let mut parents: Vec<(&Vec<usize>, &Node)> = level.iter().collect();
        parents.sort_by(|a, b| a.0.cmp(b.0));
        for (key, parent) in parents {
            let last_slot = key.last().map(|id| id / 2);
            for &lit in &candidates {
                if last_slot.is_some_and(|s| lit / 2 <= s) {
                    continue;
                }
                let mut child = key.clone();
                child.push(lit);
                // every immediate subset must have survived
                let mut best = None;
                let mut complete = true;
                for drop in 0..child.len() {
                    let sub: Vec<usize> = child
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != drop)
                        .map(|(_, &id)| id)
                        .collect();
                    match level.get(&sub) {
                        Some(n) => best = best.max(Some(n.p)).max(n.best_subset_p),
                        None => {
                            complete = false;
                            break;
                        }
                    }
                }
                if !complete {
                    continue;
                }
                let mut cover = parent.cover.clone();
                cover.intersect_with(table.holds(lit));
                let stats = table.stats_for_cover(&cover, conclusion);
                if stats.support < params.min_support {
                    continue;
                }
                let p = stats.p().expect("support is positive");
                if best.is_none_or(|b| p > b) && p >= params.min_p {
                    laws.push(make_law(table, &child, conclusion, stats, best)?);
                }
                next.insert(
                    child,
                    Node {
                        cover,
                        p,
                        best_subset_p: best,
                    },
                );
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }
    Ok(laws)
}

fn search_beam(
    table: &ConceptTable,
    params: &MiningParams,
    target: &Literal,
) -> Result<Vec<Law>, MineError> {
    let conclusion = table.literal_id(target)?;
    let candidates = candidate_literals(table, params, target)?;
    let mut laws = Vec::new();

    let root_cover = table.cover(&[], conclusion);
    let root_stats = table.stats_for_cover(&root_cover, conclusion);
    match root_stats.p() {
        Some(p) if root_stats.support >= params.min_support => {
            if p >= params.min_p {
                laws.push(make_law(table, &[], conclusion, root_stats, None)?);
            }
        }
        _ => return Ok(laws),
    }
    let mut level: Vec<(Vec<usize>, FixedBitSet, Prob)> =
        vec![(Vec::new(), root_cover, Ratio::from_integer(0))];

    for _depth in 1..=params.max_premises {
        let mut next = Vec::new();
        for (key, cover, _) in &level {
            let last_slot = key.last().map(|id| id / 2);
            for &lit in &candidates {
                if last_slot.is_some_and(|s| lit / 2 <= s) {
                    continue;
                }
                let mut child_cover = cover.clone();
                child_cover.intersect_with(table.holds(lit));
                let stats = table.stats_for_cover(&child_cover, conclusion);
                if stats.support < params.min_support {
                    continue;
                }
                let mut child = key.clone();
                child.push(lit);
                let p = stats.p().expect("support is positive");
                if p >= params.min_p {
                    let rule = make_law(table, &child, conclusion, stats, None)?.rule;
                    if let Verdict::Accept(law) = table.law_verdict(&rule, params.min_support)? {
                        laws.push(law);
                    }
                }
                next.push((child, child_cover, p));
            }
        }
        // ties: higher p, then literal order (premise count is equal per level)
        next.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
        next.truncate(params.beam_width);
        if next.is_empty() {
            break;
        }
        level = next;
    }
    Ok(laws)
}

/// Brute-force reference miner: enumerates every premise set and checks every
/// proper subset by counting objects one at a time. Only for small inputs.
pub fn oracle_mine(
    model: &FactualModel,
    concepts: &ConceptSet,
    params: &MiningParams,
) -> Result<LawSet, MineError> {
    params.validate(concepts)?;
    let mut vocab = params.vocabulary.clone();
    vocab.sort();
    vocab.dedup();
    if vocab.len() > ORACLE_MAX_VOCABULARY {
        return Err(MineError::OracleTooLarge(format!(
            "vocabulary of {} concepts (max {ORACLE_MAX_VOCABULARY})",
            vocab.len()
        )));
    }
    if params.max_premises > ORACLE_MAX_PREMISES {
        return Err(MineError::OracleTooLarge(format!(
            "max_premises {} (max {ORACLE_MAX_PREMISES})",
            params.max_premises
        )));
    }
    // values[obj][concept]
    let resolved = vocab
        .iter()
        .map(|n| concepts.get(n))
        .collect::<Result<Vec<_>, _>>()?;
    let values: Vec<Vec<Option<bool>>> = (0..model.object_count())
        .map(|ix| resolved.iter().map(|c| c.eval(model, ix)).collect())
        .collect();
    let slot = |name: &str| vocab.iter().position(|n| n == name).expect("in vocabulary");

    let count = |premises: &[(usize, bool)], conclusion: (usize, bool)| -> RuleStats {
        let mut stats = RuleStats {
            support: 0,
            hits: 0,
        };
        'objects: for row in &values {
            let Some(c) = row[conclusion.0] else { continue };
            for &(s, sign) in premises {
                match row[s] {
                    Some(v) if v == sign => {}
                    _ => continue 'objects,
                }
            }
            stats.support += 1;
            if c == conclusion.1 {
                stats.hits += 1;
            }
        }
        stats
    };

    let mut laws = Vec::new();
    for target in &params.targets {
        let conclusion = (slot(&target.concept), target.positive);
        let others: Vec<usize> = (0..vocab.len()).filter(|&s| s != conclusion.0).collect();
        let mut target_laws = Vec::new();
        for premises in signed_subsets(&others, params.max_premises) {
            let stats = count(&premises, conclusion);
            let Some(p) = stats.p() else { continue };
            if stats.support < params.min_support || p < params.min_p {
                continue;
            }
            let n = premises.len();
            let mut best: Option<Prob> = None;
            let mut redundant = false;
            for mask in 0..(1u32 << n) - 1 {
                let subset: Vec<(usize, bool)> = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| premises[i])
                    .collect();
                if let Some(sp) = count(&subset, conclusion).p() {
                    if sp >= p {
                        redundant = true;
                        break;
                    }
                    best = best.max(Some(sp));
                }
            }
            if redundant {
                continue;
            }
            let lits = premises
                .iter()
                .map(|&(s, sign)| Literal {
                    concept: vocab[s].clone(),
                    positive: sign,
                })
                .collect();
            target_laws.push(Law {
                rule: Rule::new(lits, target.clone())?,
                stats,
                subset_max_p: best,
            });
        }
        target_laws.sort_by(|a, b| {
            a.rule
                .premises()
                .len()
                .cmp(&b.rule.premises().len())
                .then_with(|| a.rule.premises().cmp(b.rule.premises()))
        });
        laws.extend(target_laws);
    }
    Ok(LawSet {
        laws,
        provenance: Provenance {
            fingerprint: model.fingerprint(),
            params: Some(params.clone()),
        },
    })
}

/// All sets of at most `max` signed items drawn from distinct `slots`.
fn signed_subsets(slots: &[usize], max: usize) -> Vec<Vec<(usize, bool)>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<(usize, Vec<(usize, bool)>)> = vec![(0, Vec::new())];
    for _ in 0..max {
        let mut next = Vec::new();
        for (start, set) in &frontier {
            for (i, &slot) in slots.iter().enumerate().skip(*start) {
                for sign in [true, false] {
                    let mut s = set.clone();
                    s.push((slot, sign));
                    out.push(s.clone());
                    next.push((i + 1, s));
                }
            }
        }
        frontier = next;
    }
    out
}
