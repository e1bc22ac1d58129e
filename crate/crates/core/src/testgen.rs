//! Seeded generators of small random models, concept sets and object
//! descriptions, shared by `selfcheck` and the property tests.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::concepts::{Atom, CmpOp, Concept, ConceptSet, Literal};
use crate::facts::{Fact, FactualModel, ObjectId, Value};
use crate::predict::ObjectDescription;

const PROPS: [&str; 3] = ["a", "b", "c"];
const CATS: [&str; 2] = ["K", "L"];
const OPS: [CmpOp; 6] = [
    CmpOp::Eq,
    CmpOp::Ne,
    CmpOp::Lt,
    CmpOp::Le,
    CmpOp::Gt,
    CmpOp::Ge,
];

#[derive(Debug, Clone)]
pub struct RandomWorld {
    pub model: FactualModel,
    pub concepts: ConceptSet,
}

impl RandomWorld {
    pub fn names(&self) -> Vec<String> {
        self.concepts.names()
    }
}

/// Up to `max_objects` objects with small integer properties (each missing
/// with probability 1/6) and two categories; up to `max_concepts` concepts of
/// one or two atoms, named `C0`, `C1`, ….
pub fn random_world(rng: &mut ChaCha8Rng, max_objects: usize, max_concepts: usize) -> RandomWorld {
    let n = rng.random_range(0..=max_objects);
    let mut model = FactualModel::new();
    for i in 0..n {
        let obj = ObjectId::new(format!("o{i}")).expect("non-empty");
        model
            .assert_fact(Fact::Categorical {
                category: "Thing".into(),
                obj: obj.clone(),
            })
            .expect("fresh");
        for cat in CATS {
            if rng.random_bool(0.5) {
                model
                    .assert_fact(Fact::Categorical {
                        category: cat.into(),
                        obj: obj.clone(),
                    })
                    .expect("fresh");
            }
        }
        for prop in PROPS {
            if rng.random_range(0..6) != 0 {
                model
                    .assert_fact(Fact::Property {
                        prop: prop.into(),
                        obj: obj.clone(),
                        val: Value::Int(rng.random_range(0..4)),
                    })
                    .expect("fresh");
            }
        }
    }
    let k = rng.random_range(1..=max_concepts.max(1));
    let mut concepts = ConceptSet::new();
    for i in 0..k {
        let atoms = rng.random_range(1..=2);
        let body = (0..atoms).map(|_| random_atom(rng)).collect();
        concepts
            .insert(Concept {
                name: format!("C{i}"),
                body,
            })
            .expect("unique names");
    }
    RandomWorld { model, concepts }
}

fn random_atom(rng: &mut ChaCha8Rng) -> Atom {
    if rng.random_range(0..4) == 0 {
        Atom::CategoryIs(CATS.choose(rng).expect("non-empty").to_string())
    } else {
        Atom::Compare {
            symbol: PROPS.choose(rng).expect("non-empty").to_string(),
            op: *OPS.choose(rng).expect("non-empty"),
            rhs: Value::Int(rng.random_range(0..4)),
        }
    }
}

/// A description mentioning a random subset of the properties and categories.
pub fn random_description(rng: &mut ChaCha8Rng) -> ObjectDescription {
    let mut desc = ObjectDescription::new();
    for prop in PROPS {
        if rng.random_bool(0.7) {
            desc = desc.with(prop, Value::Int(rng.random_range(0..4)));
        }
    }
    for cat in CATS {
        if rng.random_bool(0.5) {
            desc = desc.with_category(cat);
        }
    }
    desc
}

/// A random signed literal over the world's concepts.
pub fn random_literal(rng: &mut ChaCha8Rng, world: &RandomWorld) -> Literal {
    let names = world.names();
    let name = names.choose(rng).expect("at least one concept").clone();
    if rng.random_bool(0.5) {
        Literal::pos(name)
    } else {
        Literal::neg(name)
    }
}

/// A random premise set (distinct concepts, excluding `conclusion`).
pub fn random_premises(
    rng: &mut ChaCha8Rng,
    world: &RandomWorld,
    conclusion: &Literal,
    max: usize,
) -> Vec<Literal> {
    let names: Vec<String> = world
        .names()
        .into_iter()
        .filter(|n| *n != conclusion.concept)
        .collect();
    let k = rng.random_range(0..=max.min(names.len()));
    names
        .choose_multiple(rng, k)
        .map(|n| {
            if rng.random_bool(0.5) {
                Literal::pos(n.clone())
            } else {
                Literal::neg(n.clone())
            }
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
