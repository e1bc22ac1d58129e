//! Semantic models learned from data: a fact base, concepts defined over it,
//! probabilistic laws mined by exact counting, consistent prediction, and a
//! small grid world in which subgoals are invented from action logs.

pub mod cli;
pub mod concepts;
pub mod datasets;
pub mod facts;
pub mod lunch;
pub mod miner;
pub mod predict;
pub mod rules;
pub mod testgen;

pub use concepts::{
    parse_concepts, parse_concepts_for, Concept, ConceptError, ConceptSet, Literal,
};
pub use facts::{Fact, FactError, FactualModel, ObjectId, Value};
pub use miner::{mine_laws, oracle_mine, MineError, MiningParams};
pub use predict::{predict, ObjectDescription, PredictError, PredictionReport};
pub use rules::{
    conditional_probability, explain, is_probabilistic_law, Law, LawSet, Prob, Rule, RuleError,
    RuleStats,
};
