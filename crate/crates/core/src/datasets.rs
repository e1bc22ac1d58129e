//! Built-in people datasets: age, hair colour and occupation.
//!
//! `hair10` is a hand-sized model. `hair100` scales the same profile so that
//! three laws come out at exactly 49/50, 19/20 and 999/1000.

use crate::concepts::{parse_concepts, ConceptSet};
use crate::facts::{Fact, FactualModel, Value};

pub const HAIR_CONCEPTS: &str = r#"# hair colour
T1 := HasHairColor = "Brunette"
T2 := HasHairColor = "Blonde"
T3 := HasHairColor = "Green"
# age bands
T4 := Age < 16
T5 := Age >= 16 & Age < 25
T6 := Age >= 25 & Age < 50
T7 := Age >= 50
# occupation
T8 := Occupation = "Musician"
T9 := Occupation = "Researcher"
T10 := Occupation = "Student"
"#;

const HAIR: [&str; 3] = ["Brunette", "Blonde", "Green"];
const JOBS: [&str; 3] = ["Musician", "Researcher", "Student"];

pub fn hair_concepts() -> ConceptSet {
    parse_concepts(HAIR_CONCEPTS).expect("built-in concepts parse")
}

fn person(out: &mut Vec<Fact>, name: &str, age: i64, hair: &str, job: &str) {
    out.push(Fact::cat("Person", name).expect("valid id"));
    out.push(Fact::prop("Age", name, Value::Int(age)).expect("valid id"));
    out.push(Fact::link("HasHairColor", name, hair).expect("valid id"));
    out.push(Fact::link("Occupation", name, job).expect("valid id"));
}

fn header() -> Vec<Fact> {
    let mut out = Vec::new();
    for h in HAIR {
        out.push(Fact::cat("HairColor", h).expect("valid id"));
    }
    for j in JOBS {
        out.push(Fact::cat("Profession", j).expect("valid id"));
    }
    out
}

pub fn hair10_facts() -> Vec<Fact> {
    let mut out = header();
    for (name, age, hair, job) in [
        ("Ann", 15, "Brunette", "Student"),
        ("Bob", 14, "Brunette", "Student"),
        ("Cat", 12, "Brunette", "Student"),
        ("Dan", 13, "Brunette", "Musician"),
        ("Eve", 20, "Green", "Student"),
        ("Fay", 22, "Green", "Musician"),
        ("Nataly", 35, "Blonde", "Researcher"),
        ("Victor", 55, "Brunette", "Musician"),
        ("Gus", 60, "Blonde", "Researcher"),
        ("Hal", 30, "Green", "Researcher"),
    ] {
        person(&mut out, name, age, hair, job);
    }
    out
}

/// Persons are named `p0001`, `p0002`, … in group order.
pub fn hair100_facts() -> Vec<Fact> {
    let mut out = header();
    let mut n = 0usize;
    let mut group =
        |out: &mut Vec<Fact>, ages: (i64, i64), hair: &[&str], jobs: &[(&str, usize)]| {
            let mut i = 0usize;
            for &(job, count) in jobs {
                for _ in 0..count {
                    n += 1;
                    let age = ages.0 + (i as i64) % (ages.1 - ages.0 + 1);
                    person(out, &format!("p{n:04}"), age, hair[i % hair.len()], job);
                    i += 1;
                }
            }
        };
    let plain = ["Brunette", "Blonde"];
    group(
        &mut out,
        (5, 15),
        &plain,
        &[("Student", 49), ("Musician", 1)],
    );
    group(
        &mut out,
        (16, 24),
        &["Green"],
        &[("Student", 10), ("Musician", 9), ("Researcher", 1)],
    );
    group(
        &mut out,
        (16, 24),
        &plain,
        &[("Researcher", 10), ("Musician", 10)],
    );
    group(
        &mut out,
        (25, 49),
        &["Green"],
        &[("Researcher", 5), ("Musician", 5)],
    );
    group(
        &mut out,
        (25, 49),
        &plain,
        &[("Researcher", 10), ("Musician", 10)],
    );
    group(&mut out, (50, 89), &["Green"], &[("Musician", 1)]);
    group(
        &mut out,
        (50, 89),
        &plain,
        &[("Researcher", 500), ("Musician", 499)],
    );
    out
}

pub fn hair10() -> FactualModel {
    FactualModel::from_facts(hair10_facts()).expect("built-in dataset is consistent")
}

pub fn hair100() -> FactualModel {
    FactualModel::from_facts(hair100_facts()).expect("built-in dataset is consistent")
}

pub fn by_name(name: &str) -> Option<FactualModel> {
    match name {
        "hair10" => Some(hair10()),
        "hair100" => Some(hair100()),
        _ => None,
    }
}
