//! Acceptance criteria 1–10. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

use std::collections::{HashSet, VecDeque};
use std::time::{Duration, Instant};

use num_rational::Ratio;

use semodel::concepts::{ConceptSet, Literal};
use semodel::datasets::{hair100, hair_concepts};
use semodel::facts::FactualModel;
use semodel::lunch::{
    evaluate_agent, explore, invent_subgoals, transitions_to_kb, AgentAction, Dish, GridWorld,
    Heading, LunchConfig, SubgoalChain,
};
use semodel::miner::{mine_laws, oracle_mine, MiningParams};
use semodel::predict::predict;
use semodel::rules::{conditional_probability, fraction_string, Law, Prob, Rule, RuleStats};
use semodel::testgen::{random_description, random_literal, random_premises, random_world, rng};

const LUNCH_SEED: u64 = 2024;
const LUNCH_EPISODES: u64 = 500;
const EVAL_SEED: u64 = 7;

struct Outcome {
    ok: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        ok: true,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        ok: false,
        detail: detail.into(),
    }
}

/// Per-object filter-and-count, written independently of the bitset tables.
fn count(
    model: &FactualModel,
    concepts: &ConceptSet,
    premises: &[Literal],
    c: &Literal,
) -> RuleStats {
    let lit = |l: &Literal, ix| {
        concepts
            .get(&l.concept)
            .unwrap()
            .eval(model, ix)
            .map(|v| v == l.positive)
    };
    let mut s = RuleStats {
        support: 0,
        hits: 0,
    };
    for ix in 0..model.object_count() {
        let Some(hit) = lit(c, ix) else { continue };
        if premises.iter().all(|l| lit(l, ix) == Some(true)) {
            s.support += 1;
            s.hits += hit as u64;
        }
    }
    s
}

/// Every proper premise subset, recounted, must have strictly smaller p.
fn redundancy_violations(model: &FactualModel, concepts: &ConceptSet, laws: &[Law]) -> usize {
    let mut bad = 0;
    for law in laws {
        let prem = law.rule.premises();
        let s = count(model, concepts, prem, law.rule.conclusion());
        if s != law.stats {
            bad += 1;
            continue;
        }
        for mask in 0..(1u32 << prem.len()) - 1 {
            let sub: Vec<Literal> = (0..prem.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| prem[i].clone())
                .collect();
            if let Some(p) = count(model, concepts, &sub, law.rule.conclusion()).p() {
                if p >= law.p() {
                    bad += 1;
                }
            }
        }
    }
    bad
}

fn hair_params() -> MiningParams {
    MiningParams {
        targets: vec![Literal::pos("T10"), Literal::neg("T9"), Literal::neg("T3")],
        vocabulary: hair_concepts().names(),
        max_premises: 3,
        min_support: 3,
        ..Default::default()
    }
}

fn law_p(laws: &[Law], premises: &[Literal], conclusion: &Literal) -> Option<Prob> {
    laws.iter()
        .find(|l| l.rule.premises() == premises && l.rule.conclusion() == conclusion)
        .map(Law::p)
}

struct Shared {
    hair_laws: Vec<Law>,
    random_laws: Vec<(FactualModel, ConceptSet, Vec<Law>)>,
}

fn criterion1(shared: &mut Shared) -> Outcome {
    let (model, concepts) = (hair100(), hair_concepts());
    let laws = mine_laws(&model, &concepts, &hair_params()).unwrap().laws;
    let expected = [
        (
            vec![Literal::pos("T4")],
            Literal::pos("T10"),
            Ratio::new(49, 50),
        ),
        (
            vec![Literal::pos("T3"), Literal::pos("T5")],
            Literal::neg("T9"),
            Ratio::new(19, 20),
        ),
        (
            vec![Literal::pos("T7")],
            Literal::neg("T3"),
            Ratio::new(999, 1000),
        ),
    ];
    let mut found = Vec::new();
    for (prem, c, p) in &expected {
        let rule = Rule::new(prem.clone(), c.clone()).unwrap();
        match law_p(&laws, prem, c) {
            Some(got) if got == *p => found.push(format!("{rule} = {}", fraction_string(&got))),
            other => {
                return fail(format!(
                    "{rule}: expected {}, got {other:?}",
                    fraction_string(p)
                ))
            }
        }
    }
    shared.hair_laws = laws;
    pass(found.join("; "))
}

fn criterion2() -> Outcome {
    let mut r = rng(2);
    for case in 0..200 {
        let w = random_world(&mut r, 12, 8);
        let c = random_literal(&mut r, &w);
        let prem = random_premises(&mut r, &w, &c, 4);
        let rule = Rule::new(prem.clone(), c.clone()).unwrap();
        let fast = conditional_probability(&w.model, &w.concepts, &rule).unwrap();
        let slow = count(&w.model, &w.concepts, &prem, &c);
        if fast != slow || fast.p() != slow.p() {
            return fail(format!("case {case}: {rule}: {fast:?} vs {slow:?}"));
        }
    }
    pass("200 models, exact equality")
}

fn criterion3(shared: &mut Shared) -> Outcome {
    let mut r = rng(3);
    let mut total = 0;
    for case in 0..100 {
        let w = random_world(&mut r, 12, 8);
        let targets = vec![random_literal(&mut r, &w), random_literal(&mut r, &w)];
        let params = MiningParams {
            targets,
            vocabulary: w.names(),
            max_premises: 3,
            min_support: 1 + case % 3,
            min_p: Ratio::new(case % 3, 4),
            ..Default::default()
        };
        let a = mine_laws(&w.model, &w.concepts, &params).unwrap();
        let b = oracle_mine(&w.model, &w.concepts, &params).unwrap();
        if a.laws != b.laws {
            return fail(format!(
                "case {case}: {} vs {} laws",
                a.laws.len(),
                b.laws.len()
            ));
        }
        total += a.laws.len();
        shared.random_laws.push((w.model, w.concepts, a.laws));
    }
    pass(format!("100 models, {total} laws identical"))
}

fn criterion4(shared: &Shared) -> Outcome {
    let mut laws = shared.hair_laws.len();
    let mut bad = redundancy_violations(&hair100(), &hair_concepts(), &shared.hair_laws);
    for (m, c, l) in &shared.random_laws {
        laws += l.len();
        bad += redundancy_violations(m, c, l);
    }
    if bad == 0 && laws > 0 {
        pass(format!("{laws} laws audited, 0 violations"))
    } else {
        fail(format!("{bad} violations over {laws} laws"))
    }
}

fn criterion5() -> Outcome {
    let mut r = rng(5);
    let mut triples = 0;
    let mut predictions = 0;
    while triples < 1000 {
        let w = random_world(&mut r, 12, 6);
        let params = MiningParams {
            targets: w
                .names()
                .into_iter()
                .flat_map(|n| [Literal::pos(n.clone()), Literal::neg(n)])
                .collect(),
            vocabulary: w.names(),
            max_premises: 2,
            min_support: 1,
            min_p: Ratio::from_integer(0),
            ..Default::default()
        };
        let laws = mine_laws(&w.model, &w.concepts, &params).unwrap().laws;
        for _ in 0..4 {
            let desc = random_description(&mut r);
            let report = predict(&desc, &laws, &w.concepts).unwrap();
            let mut seen = HashSet::new();
            for p in &report.predicted {
                if !seen.insert(p.literal.concept.clone()) {
                    return fail(format!(
                        "triple {triples}: both signs of {}",
                        p.literal.concept
                    ));
                }
            }
            predictions += report.predicted.len();
            triples += 1;
        }
    }
    pass(format!(
        "{triples} triples, {predictions} predictions, 0 violations"
    ))
}

struct Lunch {
    config: LunchConfig,
    model: FactualModel,
    concepts: ConceptSet,
    episodes_jsonl: String,
}

fn lunch_logs() -> Lunch {
    let config = LunchConfig::default();
    let log = explore(&config, LUNCH_EPISODES, config.step_budget(), LUNCH_SEED).unwrap();
    let (model, concepts) = transitions_to_kb(&log.plain(), &config.order).unwrap();
    Lunch {
        config,
        model,
        concepts,
        episodes_jsonl: log.to_jsonl(),
    }
}

fn criterion6(lunch: &Lunch) -> Outcome {
    let g = Literal::pos("G_dessert");
    let base = vec![Literal::pos("F_dessert"), Literal::pos("Act_forward")];
    let mut refined = base.clone();
    refined.push(Literal::pos("E_mainCourse"));
    let p = |prem: &[Literal]| {
        conditional_probability(
            &lunch.model,
            &lunch.concepts,
            &Rule::new(prem.to_vec(), g.clone()).unwrap(),
        )
        .unwrap()
        .p()
    };
    let (a, b) = (p(&base), p(&refined));
    let one = Ratio::from_integer(1);
    match (a, b) {
        (Some(a), Some(b)) if a < one && b == one => pass(format!(
            "{} transitions; without E_mainCourse p = {}, with it p = {}",
            lunch.model.object_count(),
            fraction_string(&a),
            fraction_string(&b)
        )),
        other => fail(format!("got {other:?}")),
    }
}

fn lunch_params() -> MiningParams {
    MiningParams {
        max_premises: 3,
        min_support: 3,
        ..Default::default()
    }
}

fn criterion7(lunch: &Lunch) -> (Outcome, Option<(SubgoalChain, String)>) {
    let inv = match invent_subgoals(
        &lunch.model,
        &lunch.concepts,
        &lunch_params(),
        Dish::Dessert,
    ) {
        Ok(inv) => inv,
        Err(e) => return (fail(e.to_string()), None),
    };
    let chain = &inv.chain;
    let goals: Vec<&str> = chain.nodes.iter().map(|n| n.goal.as_str()).collect();
    let one = Ratio::from_integer(1);
    let all_one = chain.nodes.iter().all(|n| n.law.p() == one);
    let leaf_free = chain.nodes.last().is_some_and(|n| {
        n.law
            .rule
            .premises()
            .iter()
            .all(|l| !l.concept.starts_with("E_"))
    });
    let links = chain.nodes.windows(2).all(|w| {
        let d = w[1].dish.name();
        w[0].requires.as_deref() == Some(w[1].goal.as_str())
            && w[0]
                .law
                .rule
                .premises()
                .contains(&Literal::pos(format!("E_{d}")))
    });
    let expected = ["G_dessert", "G_mainCourse", "G_soup", "G_appetizer"];
    let outcome = if goals == expected && all_one && leaf_free && links {
        pass(format!("{} (all p = 1/1)", goals.join(" <- ")))
    } else {
        fail(format!(
            "chain {goals:?}, all p=1: {all_one}, leaf free of E_*: {leaf_free}, linked: {links}"
        ))
    };
    let artifacts = format!(
        "{}{}",
        inv.laws.to_jsonl(),
        serde_json::to_string(&inv.chain).unwrap()
    );
    (outcome, Some((inv.chain, artifacts)))
}

fn criterion8(lunch: &Lunch, chain: &SubgoalChain) -> (Outcome, String) {
    let trained = evaluate_agent(chain, &lunch.config, 100, EVAL_SEED).unwrap();
    let random = evaluate_agent(
        &SubgoalChain { nodes: vec![] },
        &lunch.config,
        100,
        EVAL_SEED,
    )
    .unwrap();
    let artifacts = format!(
        "{}{}",
        serde_json::to_string(&trained).unwrap(),
        serde_json::to_string(&random).unwrap()
    );
    let outcome = if trained.success_rate == Ratio::from_integer(1)
        && random.success_rate < Ratio::new(1, 2)
    {
        pass(format!(
            "learned chain {}, random policy {} (budget {} steps)",
            fraction_string(&trained.success_rate),
            fraction_string(&random.success_rate),
            lunch.config.step_budget()
        ))
    } else {
        fail(format!(
            "learned {}, random {}",
            fraction_string(&trained.success_rate),
            fraction_string(&random.success_rate)
        ))
    };
    (outcome, artifacts)
}

/// Compact state: dish cells (255 = eaten), eaten sequence (255 = none),
/// agent cell, heading.
type Key = ([u8; 4], [u8; 4], u8, u8);

fn key(w: &GridWorld) -> Key {
    let mut cells = [255u8; 4];
    for (d, &(x, y)) in &w.dishes {
        cells[*d as usize] = (y * w.width + x) as u8;
    }
    let mut eaten = [255u8; 4];
    for (i, d) in w.eaten.iter().enumerate() {
        eaten[i] = *d as u8;
    }
    let heading = [Heading::N, Heading::E, Heading::S, Heading::W]
        .iter()
        .position(|h| *h == w.heading)
        .unwrap() as u8;
    (
        cells,
        eaten,
        (w.agent.1 * w.width + w.agent.0) as u8,
        heading,
    )
}

fn criterion9() -> Outcome {
    let config = LunchConfig::new(3, 3, Dish::ALL.to_vec()).unwrap();
    let cell = |i: usize| (i % 3, i / 3);
    let mut seen: HashSet<Key> = HashSet::new();
    let mut queue = VecDeque::new();
    let headings = [Heading::N, Heading::E, Heading::S, Heading::W];
    // every layout: four dish cells and a distinct agent cell
    for a in 0..9 {
        for s in 0..9 {
            for m in 0..9 {
                for d in 0..9 {
                    for g in 0..9 {
                        let cells = [a, s, m, d, g];
                        if (0..5).any(|i| (i + 1..5).any(|j| cells[i] == cells[j])) {
                            continue;
                        }
                        let dishes: std::collections::BTreeMap<Dish, (usize, usize)> = Dish::ALL
                            .iter()
                            .zip(&cells)
                            .map(|(&x, &c)| (x, cell(c)))
                            .collect();
                        for h in headings {
                            let w = GridWorld::new(&config, dishes.clone(), cell(g), h).unwrap();
                            if seen.insert(key(&w)) {
                                queue.push_back(w);
                            }
                        }
                    }
                }
            }
        }
    }
    let starts = seen.len();
    let mut complete = 0usize;
    while let Some(w) = queue.pop_front() {
        if w.eaten[..] != config.order[..w.eaten.len()] {
            return fail(format!("reachable state with eaten {:?}", w.eaten));
        }
        if w.is_done() {
            complete += 1;
        }
        for action in AgentAction::ALL {
            let (next, _) = w.step(action);
            if seen.insert(key(&next)) {
                queue.push_back(next);
            }
        }
    }
    pass(format!(
        "{} reachable states from {starts} starts, {complete} complete, 0 violations",
        seen.len()
    ))
}

fn criterion10(first: &[String]) -> Outcome {
    let mut shared = Shared {
        hair_laws: vec![],
        random_laws: vec![],
    };
    criterion1(&mut shared);
    let hair = mine_laws(&hair100(), &hair_concepts(), &hair_params())
        .unwrap()
        .to_jsonl();
    let lunch = lunch_logs();
    let (_, inv) = criterion7(&lunch);
    let Some((chain, chain_art)) = inv else {
        return fail("subgoal invention failed on rerun");
    };
    let (_, eval_art) = criterion8(&lunch, &chain);
    let second = [hair, lunch.episodes_jsonl.clone(), chain_art, eval_art];
    let names = ["hair100 laws", "episode log", "laws + chain", "evaluation"];
    for (i, name) in names.iter().enumerate() {
        if first[i] != second[i] {
            return fail(format!("{name} differs between runs"));
        }
    }
    let bytes: usize = second.iter().map(String::len).sum();
    pass(format!("4 artifacts, {bytes} bytes, byte-identical"))
}

fn main() {
    let mut results: Vec<(usize, &str, Duration, Duration, Outcome)> = Vec::new();
    let mut shared = Shared {
        hair_laws: vec![],
        random_laws: vec![],
    };
    let mut timed = |n: usize, name: &'static str, limit: u64, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        results.push((
            n,
            name,
            start.elapsed(),
            Duration::from_secs(limit),
            outcome,
        ));
    };

    timed(1, "law reproduction on hair100", 5, &mut || {
        criterion1(&mut shared)
    });
    timed(
        2,
        "conditional probability oracle identity",
        10,
        &mut criterion2,
    );
    timed(3, "miner and oracle equivalence", 60, &mut || {
        criterion3(&mut shared)
    });
    timed(4, "non-redundancy audit", 60, &mut || criterion4(&shared));
    timed(5, "prediction consistency", 60, &mut criterion5);

    let mut lunch_slot = None;
    timed(6, "action law gap on exploratory logs", 30, &mut || {
        let lunch = lunch_logs();
        let outcome = criterion6(&lunch);
        lunch_slot = Some(lunch);
        outcome
    });
    let lunch = lunch_slot.expect("logs generated");

    let mut chain = None;
    let mut artifacts = vec![
        mine_laws(&hair100(), &hair_concepts(), &hair_params())
            .unwrap()
            .to_jsonl(),
        lunch.episodes_jsonl.clone(),
    ];
    timed(7, "subgoal hierarchy", 30, &mut || {
        let (o, inv) = criterion7(&lunch);
        if let Some((c, art)) = inv {
            chain = Some(c);
            artifacts.push(art);
        }
        o
    });
    timed(8, "agent evaluation", 30, &mut || match &chain {
        Some(c) => {
            let (o, art) = criterion8(&lunch, c);
            artifacts.push(art);
            o
        }
        None => fail("no chain"),
    });
    timed(
        9,
        "order enforcement over all 3x3 states",
        10,
        &mut criterion9,
    );
    timed(10, "determinism", 120, &mut || {
        if artifacts.len() < 4 {
            fail("earlier artifacts missing")
        } else {
            criterion10(&artifacts)
        }
    });

    let mut failed = 0;
    for (n, name, took, limit, outcome) in &results {
        let in_time = took <= limit;
        let ok = outcome.ok && in_time;
        if !ok {
            failed += 1;
        }
        let timing = if in_time {
            format!("{:.2}s", took.as_secs_f64())
        } else {
            format!(
                "{:.2}s, over the {}s limit",
                took.as_secs_f64(),
                limit.as_secs()
            )
        };
        println!(
            "criterion {n:>2} {}: {name} ({timing}): {}",
            if ok { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
