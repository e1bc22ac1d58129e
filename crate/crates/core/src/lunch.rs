//! The lunch grid world.
//!
//! An agent on a `width × height` grid can move forward or turn. Dishes sit
//! on distinct cells; entering a dish's cell eats it only if it is the next
//! dish in the required order, otherwise the dish stays put. Every step is
//! logged as a [`Transition`] of boolean fluents, the log is encoded as a
//! fact base (one object per transition), and laws for the goal concepts
//! `G_d` are mined from it. When the best law for a goal falls short of
//! probability 1, the vocabulary is widened with the `E_*` (already eaten)
//! fluents; the `E_d'` premise of the resulting probability-1 law names the
//! next subgoal. No reward signal is used anywhere.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use num_rational::Ratio;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::{Atom, Concept, ConceptSet, Literal};
use crate::facts::{Fact, FactError, FactualModel, ObjectId};
use crate::miner::{mine_laws, MineError, MiningParams};
use crate::rules::{Law, LawSet, Prob, Provenance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LunchError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("insufficient exploration; never observed: {}", .0.join(", "))]
    InsufficientExploration(Vec<String>),
    #[error("no probability-1 law found for `{0}`")]
    NoLawFound(String),
    #[error("subgoal `{0}` appears twice in the chain")]
    CyclicChain(String),
    #[error(transparent)]
    Mine(#[from] MineError),
    #[error(transparent)]
    Fact(#[from] FactError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dish {
    #[serde(rename = "appetizer")]
    Appetizer,
    #[serde(rename = "soup")]
    Soup,
    #[serde(rename = "mainCourse")]
    MainCourse,
    #[serde(rename = "dessert")]
    Dessert,
}

impl Dish {
    pub const ALL: [Dish; 4] = [Dish::Appetizer, Dish::Soup, Dish::MainCourse, Dish::Dessert];

    pub fn name(self) -> &'static str {
        match self {
            Dish::Appetizer => "appetizer",
            Dish::Soup => "soup",
            Dish::MainCourse => "mainCourse",
            Dish::Dessert => "dessert",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Dish> {
        Dish::ALL.into_iter().find(|d| d.name() == name)
    }
}

impl fmt::Display for Dish {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    fn left(self) -> Heading {
        match self {
            Heading::N => Heading::W,
            Heading::W => Heading::S,
            Heading::S => Heading::E,
            Heading::E => Heading::N,
        }
    }

    fn right(self) -> Heading {
        match self {
            Heading::N => Heading::E,
            Heading::E => Heading::S,
            Heading::S => Heading::W,
            Heading::W => Heading::N,
        }
    }

    /// y grows southwards.
    fn delta(self) -> (i64, i64) {
        match self {
            Heading::N => (0, -1),
            Heading::E => (1, 0),
            Heading::S => (0, 1),
            Heading::W => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentAction {
    #[serde(rename = "moveForward")]
    MoveForward,
    #[serde(rename = "turnLeft")]
    TurnLeft,
    #[serde(rename = "turnRight")]
    TurnRight,
}

impl AgentAction {
    pub const ALL: [AgentAction; 3] = [
        AgentAction::MoveForward,
        AgentAction::TurnLeft,
        AgentAction::TurnRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentAction::MoveForward => "moveForward",
            AgentAction::TurnLeft => "turnLeft",
            AgentAction::TurnRight => "turnRight",
        }
    }

    /// Concept name used in mined laws.
    pub fn concept(self) -> &'static str {
        match self {
            AgentAction::MoveForward => "Act_forward",
            AgentAction::TurnLeft => "Act_left",
            AgentAction::TurnRight => "Act_right",
        }
    }

    fn from_concept(name: &str) -> Option<AgentAction> {
        AgentAction::ALL.into_iter().find(|a| a.concept() == name)
    }
}

/// One boolean per dish, indexed by [`Dish`]. Serializes as a map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct DishFlags([bool; 4]);

impl DishFlags {
    pub fn get(&self, d: Dish) -> bool {
        self.0[d.index()]
    }

    pub fn set(&mut self, d: Dish, v: bool) {
        self.0[d.index()] = v;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl Serialize for DishFlags {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<Dish, bool> = Dish::ALL.iter().map(|&d| (d, self.get(d))).collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DishFlags {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<Dish, bool>::deserialize(d)?;
        let mut flags = DishFlags::default();
        for (dish, v) in map {
            flags.set(dish, v);
        }
        Ok(flags)
    }
}

/// Fluents before and after one action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub front: DishFlags,
    pub eaten: DishFlags,
    pub action: AgentAction,
    pub center: DishFlags,
    pub picked_up: bool,
}

/// Grid size and the required eating order (which also fixes the dishes).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LunchConfig {
    pub width: usize,
    pub height: usize,
    pub order: Vec<Dish>,
}

impl Default for LunchConfig {
    fn default() -> Self {
        LunchConfig {
            width: 5,
            height: 5,
            order: Dish::ALL.to_vec(),
        }
    }
}

impl LunchConfig {
    pub fn new(width: usize, height: usize, order: Vec<Dish>) -> Result<Self, LunchError> {
        let cfg = LunchConfig {
            width,
            height,
            order,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), LunchError> {
        if self.width < 2 || self.height < 2 {
            return Err(LunchError::InvalidWorld("grid must be at least 2×2".into()));
        }
        if self.order.is_empty() {
            return Err(LunchError::InvalidWorld(
                "at least one dish is required".into(),
            ));
        }
        let mut seen = DishFlags::default();
        for &d in &self.order {
            if seen.get(d) {
                return Err(LunchError::InvalidWorld(format!("dish `{d}` listed twice")));
            }
            seen.set(d, true);
        }
        if self.order.len() + 1 > self.width * self.height {
            return Err(LunchError::InvalidWorld("not enough cells".into()));
        }
        Ok(())
    }

    /// Step budget per episode: `4 · width · height` per dish.
    pub fn step_budget(&self) -> usize {
        4 * self.width * self.height * self.order.len()
    }
}

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    /// Dishes still on the grid.
    pub dishes: BTreeMap<Dish, Cell>,
    pub agent: Cell,
    pub heading: Heading,
    pub eaten: Vec<Dish>,
    pub order: Vec<Dish>,
}

impl GridWorld {
    pub fn new(
        config: &LunchConfig,
        dishes: BTreeMap<Dish, Cell>,
        agent: Cell,
        heading: Heading,
    ) -> Result<Self, LunchError> {
        config.validate()?;
        let inside = |(x, y): Cell| x < config.width && y < config.height;
        if !inside(agent) {
            return Err(LunchError::InvalidWorld("agent outside the grid".into()));
        }
        let mut cells: Vec<Cell> = Vec::new();
        for &d in &config.order {
            let cell = *dishes
                .get(&d)
                .ok_or_else(|| LunchError::InvalidWorld(format!("no cell for `{d}`")))?;
            if !inside(cell) || cells.contains(&cell) {
                return Err(LunchError::InvalidWorld(format!("bad cell for `{d}`")));
            }
            cells.push(cell);
        }
        if dishes.len() != config.order.len() {
            return Err(LunchError::InvalidWorld("dish not in the order".into()));
        }
        Ok(GridWorld {
            width: config.width,
            height: config.height,
            dishes,
            agent,
            heading,
            eaten: Vec::new(),
            order: config.order.clone(),
        })
    }

    /// Random layout: distinct cells for the dishes and the agent, random
    /// heading.
    pub fn random<R: Rng>(config: &LunchConfig, rng: &mut R) -> Result<Self, LunchError> {
        config.validate()?;
        let cells = sample(rng, config.width * config.height, config.order.len() + 1);
        let to_cell = |i: usize| (i % config.width, i / config.width);
        let dishes = config
            .order
            .iter()
            .zip(cells.iter())
            .map(|(&d, i)| (d, to_cell(i)))
            .collect();
        let agent = to_cell(cells.index(config.order.len()));
        let heading = Heading::ALL[rng.random_range(0..4)];
        GridWorld::new(config, dishes, agent, heading)
    }

    pub fn is_done(&self) -> bool {
        self.eaten.len() == self.order.len()
    }

    pub fn next_required(&self) -> Option<Dish> {
        self.order.get(self.eaten.len()).copied()
    }

    fn ahead(&self, from: Cell, heading: Heading) -> Option<Cell> {
        let (dx, dy) = heading.delta();
        let x = from.0 as i64 + dx;
        let y = from.1 as i64 + dy;
        (x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height)
            .then_some((x as usize, y as usize))
    }

    pub fn front_cell(&self) -> Option<Cell> {
        self.ahead(self.agent, self.heading)
    }

    pub fn dish_at(&self, cell: Cell) -> Option<Dish> {
        self.dishes
            .iter()
            .find(|(_, &c)| c == cell)
            .map(|(&d, _)| d)
    }

    pub fn front_flags(&self) -> DishFlags {
        let mut flags = DishFlags::default();
        if let Some(d) = self.front_cell().and_then(|c| self.dish_at(c)) {
            flags.set(d, true);
        }
        flags
    }

    pub fn eaten_flags(&self) -> DishFlags {
        let mut flags = DishFlags::default();
        for &d in &self.eaten {
            flags.set(d, true);
        }
        flags
    }

    /// Applies one action and returns the logged transition.
    pub fn apply(&mut self, action: AgentAction) -> Transition {
        let front = self.front_flags();
        let eaten = self.eaten_flags();
        let mut center = DishFlags::default();
        let mut picked_up = false;
        match action {
            AgentAction::TurnLeft => self.heading = self.heading.left(),
            AgentAction::TurnRight => self.heading = self.heading.right(),
            AgentAction::MoveForward => {
                if let Some(cell) = self.front_cell() {
                    self.agent = cell;
                    if let Some(d) = self.dish_at(cell) {
                        if self.next_required() == Some(d) {
                            self.dishes.remove(&d);
                            self.eaten.push(d);
                            picked_up = true;
                            center.set(d, true);
                        }
                    }
                }
            }
        }
        if let Some(d) = self.dish_at(self.agent) {
            center.set(d, true);
        }
        Transition {
            front,
            eaten,
            action,
            center,
            picked_up,
        }
    }

    /// Pure form of [`GridWorld::apply`].
    pub fn step(&self, action: AgentAction) -> (GridWorld, Transition) {
        let mut next = self.clone();
        let t = next.apply(action);
        (next, t)
    }
}

pub trait Policy {
    fn act(&mut self, world: &GridWorld, rng: &mut ChaCha8Rng) -> AgentAction;
}

/// Uniformly random actions.
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&mut self, _world: &GridWorld, rng: &mut ChaCha8Rng) -> AgentAction {
        AgentAction::ALL[rng.random_range(0..3)]
    }
}

/// Replays a fixed script, then turns left forever.
pub struct ScriptedPolicy {
    script: VecDeque<AgentAction>,
}

impl ScriptedPolicy {
    pub fn new(script: impl IntoIterator<Item = AgentAction>) -> Self {
        ScriptedPolicy {
            script: script.into_iter().collect(),
        }
    }
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, _world: &GridWorld, _rng: &mut ChaCha8Rng) -> AgentAction {
        self.script.pop_front().unwrap_or(AgentAction::TurnLeft)
    }
}

/// Runs until every dish is eaten or `max_steps` actions were taken.
pub fn run_episode(
    world: &mut GridWorld,
    policy: &mut dyn Policy,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Transition> {
    let mut log = Vec::new();
    while log.len() < max_steps.max(1) && !world.is_done() {
        let action = policy.act(world, rng);
        log.push(world.apply(action));
    }
    log
}

/// Per-episode generator: the base seed picks the ChaCha key, the episode
/// index picks the stream.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedTransition {
    pub episode: u64,
    pub step: u64,
    #[serde(flatten)]
    pub transition: Transition,
}

/// Random-policy exploration logs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationLog {
    pub config: LunchConfig,
    pub episodes: u64,
    pub transitions: Vec<LoggedTransition>,
}

impl ExplorationLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.transitions {
            out.push_str(&serde_json::to_string(t).expect("transitions serialize"));
            out.push('\n');
        }
        out
    }

    pub fn plain(&self) -> Vec<Transition> {
        self.transitions.iter().map(|t| t.transition).collect()
    }
}

/// Runs `episodes` random-policy episodes of at most `max_steps` steps. If
/// some required context is still unobserved, keeps going (up to four times
/// as many episodes again) before giving up.
pub fn explore(
    config: &LunchConfig,
    episodes: u64,
    max_steps: usize,
    seed: u64,
) -> Result<ExplorationLog, LunchError> {
    config.validate()?;
    let mut transitions = Vec::new();
    let run = |ep: u64, out: &mut Vec<LoggedTransition>| -> Result<(), LunchError> {
        let mut rng = episode_rng(seed, ep);
        let mut world = GridWorld::random(config, &mut rng)?;
        let log = run_episode(&mut world, &mut RandomPolicy, max_steps, &mut rng);
        out.extend(log.into_iter().enumerate().map(|(i, t)| LoggedTransition {
            episode: ep,
            step: i as u64,
            transition: t,
        }));
        Ok(())
    };
    for ep in 0..episodes {
        run(ep, &mut transitions)?;
    }
    let mut total = episodes;
    let limit = episodes.max(1) * 5;
    while !missing_contexts(transitions.iter().map(|t| &t.transition)).is_empty() && total < limit {
        run(total, &mut transitions)?;
        total += 1;
    }
    let missing = missing_contexts(transitions.iter().map(|t| &t.transition));
    if !missing.is_empty() {
        return Err(LunchError::InsufficientExploration(missing));
    }
    Ok(ExplorationLog {
        config: config.clone(),
        episodes: total,
        transitions,
    })
}

/// Every eaten-context seen anywhere in the log must have been combined with
/// "dish in front + move forward" for each dish not in that context (and
/// present in the world). Returns the combinations never observed.
fn missing_contexts<'a>(log: impl Iterator<Item = &'a Transition> + Clone) -> Vec<String> {
    let mut contexts: Vec<DishFlags> = Vec::new();
    let mut dishes = DishFlags::default();
    let mut seen: Vec<(Dish, DishFlags)> = Vec::new();
    for t in log {
        if !contexts.contains(&t.eaten) {
            contexts.push(t.eaten);
        }
        for d in Dish::ALL {
            if t.front.get(d) || t.eaten.get(d) || t.center.get(d) {
                dishes.set(d, true);
            }
            if t.front.get(d)
                && t.action == AgentAction::MoveForward
                && !seen.contains(&(d, t.eaten))
            {
                seen.push((d, t.eaten));
            }
        }
    }
    let mut missing = Vec::new();
    contexts.sort_by_key(|c| (c.count(), c.0));
    for ctx in &contexts {
        for d in Dish::ALL {
            if dishes.get(d) && !ctx.get(d) && !seen.contains(&(d, *ctx)) {
                let eaten: Vec<&str> = Dish::ALL
                    .iter()
                    .filter(|&&e| ctx.get(e))
                    .map(|e| e.name())
                    .collect();
                missing.push(format!(
                    "Front({d}) ∧ moveForward with eaten {{{}}}",
                    eaten.join(", ")
                ));
            }
        }
    }
    if dishes.count() == 0 {
        missing.push("any dish in front".into());
    }
    missing
}

pub fn front_concept(d: Dish) -> String {
    format!("F_{}", d.name())
}

pub fn eaten_concept(d: Dish) -> String {
    format!("E_{}", d.name())
}

pub fn goal_concept(d: Dish) -> String {
    format!("G_{}", d.name())
}

/// Encodes transitions as objects `t0, t1, …` with one categorical fact per
/// true fluent or action, plus the concept vocabulary over them.
pub fn transitions_to_kb(
    log: &[Transition],
    dishes: &[Dish],
) -> Result<(FactualModel, ConceptSet), LunchError> {
    let mut model = FactualModel::new();
    for (i, t) in log.iter().enumerate() {
        let obj = ObjectId::new(format!("t{i}"))?;
        let mut cat = |category: String| {
            model
                .assert_fact(Fact::Categorical {
                    category,
                    obj: obj.clone(),
                })
                .map(|_| ())
        };
        cat("Transition".into())?;
        cat(t.action.name().into())?;
        for d in Dish::ALL {
            if t.front.get(d) {
                cat(format!("Front_{}", d.name()))?;
            }
            if t.eaten.get(d) {
                cat(format!("Eaten_{}", d.name()))?;
            }
            if t.center.get(d) {
                cat(format!("Center_{}", d.name()))?;
            }
        }
        if t.picked_up {
            cat("PickedUp".into())?;
        }
    }

    let mut concepts = ConceptSet::new();
    let mut add = |name: String, body: Vec<Atom>| {
        concepts
            .insert(Concept { name, body })
            .expect("generated names are unique");
    };
    let cat = |c: String| Atom::CategoryIs(c);
    for &d in dishes {
        add(front_concept(d), vec![cat(format!("Front_{}", d.name()))]);
    }
    for a in AgentAction::ALL {
        add(a.concept().into(), vec![cat(a.name().into())]);
    }
    for &d in dishes {
        add(eaten_concept(d), vec![cat(format!("Eaten_{}", d.name()))]);
    }
    for &d in dishes {
        add(
            format!("NextCenter_{}", d.name()),
            vec![cat(format!("Center_{}", d.name()))],
        );
    }
    add("NextPicked".into(), vec![cat("PickedUp".into())]);
    for &d in dishes {
        add(
            goal_concept(d),
            vec![cat(format!("Center_{}", d.name())), cat("PickedUp".into())],
        );
    }
    Ok((model, concepts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgoalNode {
    pub goal: String,
    pub dish: Dish,
    /// Probability-1 law achieving the goal.
    pub law: Law,
    /// Best probability reached before the vocabulary was widened, when it
    /// had to be.
    #[serde(with = "opt_fraction")]
    pub unrefined_p: Option<Prob>,
    /// Concept whose addition produced `law`, naming the next subgoal.
    pub invented: Option<String>,
    /// Goal of the next node, if any.
    pub requires: Option<String>,
}

mod opt_fraction {
    use crate::rules::{fraction_string, parse_fraction, Prob};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Option<Prob>, s: S) -> Result<S::Ok, S::Error> {
        match p {
            Some(p) => s.serialize_some(&fraction_string(p)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Prob>, D::Error> {
        match Option::<String>::deserialize(d)? {
            None => Ok(None),
            Some(s) => parse_fraction(&s)
                .map(Some)
                .ok_or_else(|| serde::de::Error::custom(format!("bad fraction `{s}`"))),
        }
    }
}

/// Subgoal hierarchy, root goal first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgoalChain {
    pub nodes: Vec<SubgoalNode>,
}

impl SubgoalChain {
    pub fn depth(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Indented rendering, one node per level.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (depth, node) in self.nodes.iter().enumerate() {
            let pad = "  ".repeat(depth);
            out.push_str(&format!(
                "{pad}{} <= {} [p {}, support {}]\n",
                node.goal,
                node.law
                    .rule
                    .premises()
                    .iter()
                    .map(Literal::to_string)
                    .collect::<Vec<_>>()
                    .join(" ∧ "),
                crate::rules::fraction_string(&node.law.p()),
                node.law.stats.support
            ));
            if let Some(invented) = &node.invented {
                let before = node
                    .unrefined_p
                    .map(|p| crate::rules::fraction_string(&p))
                    .unwrap_or_else(|| "none".into());
                out.push_str(&format!(
                    "{pad}  invented {invented} (best p without it: {before})\n"
                ));
            }
        }
        out
    }
}

/// Learned chain plus every law mined along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Invention {
    pub chain: SubgoalChain,
    pub laws: LawSet,
}

fn dishes_in(concepts: &ConceptSet) -> Vec<Dish> {
    Dish::ALL
        .into_iter()
        .filter(|&d| concepts.contains(&goal_concept(d)))
        .collect()
}

/// Exploration precondition over an encoded log: every observed
/// eaten-context must have been paired with "dish in front + forward" for
/// every uneaten dish.
pub fn check_exploration(model: &FactualModel, concepts: &ConceptSet) -> Result<(), LunchError> {
    let dishes = dishes_in(concepts);
    let forward = concepts
        .get(AgentAction::MoveForward.concept())
        .map_err(MineError::from)?;
    let mut log = Vec::with_capacity(model.object_count());
    for ix in 0..model.object_count() {
        let mut t = Transition {
            front: DishFlags::default(),
            eaten: DishFlags::default(),
            action: AgentAction::TurnLeft,
            center: DishFlags::default(),
            picked_up: false,
        };
        for &d in &dishes {
            let holds = |name: String| -> Result<bool, LunchError> {
                Ok(concepts
                    .get(&name)
                    .map_err(MineError::from)?
                    .eval(model, ix)
                    == Some(true))
            };
            t.front.set(d, holds(front_concept(d))?);
            t.eaten.set(d, holds(eaten_concept(d))?);
            t.center.set(d, holds(format!("NextCenter_{}", d.name()))?);
        }
        if forward.eval(model, ix) == Some(true) {
            t.action = AgentAction::MoveForward;
        }
        log.push(t);
    }
    let missing = missing_contexts(log.iter());
    if missing.is_empty() {
        Ok(())
    } else {
        Err(LunchError::InsufficientExploration(missing))
    }
}

/// Learns the subgoal hierarchy below `root`.
///
/// `params` supplies `max_premises`, `min_support` and `beam_width`; targets,
/// vocabulary and `min_p` (0, so weak laws stay visible) are set per stage.
pub fn invent_subgoals(
    model: &FactualModel,
    concepts: &ConceptSet,
    params: &MiningParams,
    root: Dish,
) -> Result<Invention, LunchError> {
    check_exploration(model, concepts)?;
    let dishes = dishes_in(concepts);
    let base_vocab: Vec<String> = dishes
        .iter()
        .map(|&d| front_concept(d))
        .chain(AgentAction::ALL.iter().map(|a| a.concept().to_string()))
        .collect();
    let eaten_vocab: Vec<String> = dishes.iter().map(|&d| eaten_concept(d)).collect();

    let mut nodes: Vec<SubgoalNode> = Vec::new();
    let mut all_laws: Vec<Law> = Vec::new();
    let mut goal = root;
    loop {
        let goal_name = goal_concept(goal);
        if nodes.iter().any(|n| n.goal == goal_name) {
            return Err(LunchError::CyclicChain(goal_name));
        }
        let stage = |extra: &[String]| -> Result<Vec<Law>, LunchError> {
            let mut vocabulary = base_vocab.clone();
            vocabulary.extend_from_slice(extra);
            vocabulary.push(goal_name.clone());
            let p = MiningParams {
                targets: vec![Literal::pos(goal_name.clone())],
                vocabulary,
                min_p: Ratio::from_integer(0),
                ..params.clone()
            };
            Ok(mine_laws(model, concepts, &p)?.laws)
        };
        let first = stage(&[])?;
        let best_first = first.iter().map(Law::p).max();
        all_laws.extend(first.iter().cloned());
        let one = Ratio::from_integer(1);

        let pick = |laws: &[Law], need_eaten: bool| -> Option<Law> {
            laws.iter()
                .filter(|l| l.p() == one)
                .filter(|l| !need_eaten || positive_eaten(l).is_some())
                .min_by(|a, b| {
                    a.rule
                        .premises()
                        .len()
                        .cmp(&b.rule.premises().len())
                        .then_with(|| b.stats.support.cmp(&a.stats.support))
                        .then_with(|| a.rule.premises().cmp(b.rule.premises()))
                })
                .cloned()
        };

        if let Some(law) = pick(&first, false) {
            nodes.push(SubgoalNode {
                goal: goal_name,
                dish: goal,
                law,
                unrefined_p: None,
                invented: None,
                requires: None,
            });
            break;
        }
        let second = stage(&eaten_vocab)?;
        all_laws.extend(second.iter().filter(|l| !first.contains(l)).cloned());
        let Some(law) = pick(&second, true).or_else(|| pick(&second, false)) else {
            return Err(LunchError::NoLawFound(goal_name));
        };
        let next = positive_eaten(&law);
        let invented = next.map(eaten_concept);
        nodes.push(SubgoalNode {
            goal: goal_name,
            dish: goal,
            law,
            unrefined_p: best_first,
            invented,
            requires: next.map(goal_concept),
        });
        match next {
            Some(d) => goal = d,
            None => break,
        }
    }

    let fingerprint = model.fingerprint();
    Ok(Invention {
        chain: SubgoalChain { nodes },
        laws: LawSet {
            laws: all_laws,
            provenance: Provenance {
                fingerprint,
                params: Some(params.clone()),
            },
        },
    })
}

fn positive_eaten(law: &Law) -> Option<Dish> {
    law.rule
        .premises()
        .iter()
        .filter(|l| l.positive)
        .find_map(|l| l.concept.strip_prefix("E_").and_then(Dish::from_name))
}

/// Follows the learned chain: works on the deepest subgoal whose dish is not
/// yet eaten, walking by shortest path until the law's premises hold and then
/// taking the law's action.
pub struct SubgoalPolicy {
    steps: Vec<(Dish, AgentAction)>,
}

impl SubgoalPolicy {
    pub fn new(chain: &SubgoalChain) -> Self {
        let steps = chain
            .nodes
            .iter()
            .rev()
            .map(|n| {
                let premises = n.law.rule.premises();
                let dish = premises
                    .iter()
                    .filter(|l| l.positive)
                    .find_map(|l| l.concept.strip_prefix("F_").and_then(Dish::from_name))
                    .unwrap_or(n.dish);
                let action = premises
                    .iter()
                    .filter(|l| l.positive)
                    .find_map(|l| AgentAction::from_concept(&l.concept))
                    .unwrap_or(AgentAction::MoveForward);
                (dish, action)
            })
            .collect();
        SubgoalPolicy { steps }
    }
}

impl Policy for SubgoalPolicy {
    fn act(&mut self, world: &GridWorld, rng: &mut ChaCha8Rng) -> AgentAction {
        let Some(&(dish, action)) = self.steps.iter().find(|(d, _)| !world.eaten.contains(d))
        else {
            return RandomPolicy.act(world, rng);
        };
        if world.front_flags().get(dish) {
            return action;
        }
        match world.dishes.get(&dish) {
            Some(&target) => first_step_towards(world, target).unwrap_or(AgentAction::TurnLeft),
            None => RandomPolicy.act(world, rng),
        }
    }
}

/// First action of a shortest action sequence that leaves the agent facing
/// `target`.
fn first_step_towards(world: &GridWorld, target: Cell) -> Option<AgentAction> {
    type State = (Cell, Heading);
    let start: State = (world.agent, world.heading);
    let mut first: HashMap<State, Option<AgentAction>> = HashMap::new();
    first.insert(start, None);
    let mut queue = VecDeque::from([start]);
    while let Some((cell, heading)) = queue.pop_front() {
        if world.ahead(cell, heading) == Some(target) {
            return first[&(cell, heading)];
        }
        for action in AgentAction::ALL {
            let next = match action {
                AgentAction::TurnLeft => (cell, heading.left()),
                AgentAction::TurnRight => (cell, heading.right()),
                AgentAction::MoveForward => match world.ahead(cell, heading) {
                    Some(c) => (c, heading),
                    None => continue,
                },
            };
            let via = first[&(cell, heading)].or(Some(action));
            if let std::collections::hash_map::Entry::Vacant(e) = first.entry(next) {
                e.insert(via);
                queue.push_back(next);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub episodes: u64,
    pub successes: u64,
    #[serde(serialize_with = "ser_ratio")]
    pub success_rate: Prob,
}

fn ser_ratio<S: serde::Serializer>(p: &Prob, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::rules::fraction_string(p))
}

/// An episode succeeds when every dish was eaten, in the required order,
/// within the step budget.
pub fn replay_success(world: &GridWorld, steps: usize, budget: usize) -> bool {
    world.is_done() && world.eaten == world.order && steps <= budget
}

/// Runs `n_episodes` fresh random layouts. A non-empty chain drives a
/// [`SubgoalPolicy`]; an empty chain falls back to random actions.
pub fn evaluate_agent(
    chain: &SubgoalChain,
    config: &LunchConfig,
    n_episodes: u64,
    seed: u64,
) -> Result<Evaluation, LunchError> {
    config.validate()?;
    let budget = config.step_budget();
    let mut successes = 0;
    for ep in 0..n_episodes {
        let mut rng = episode_rng(seed, ep);
        let mut world = GridWorld::random(config, &mut rng)?;
        let mut policy: Box<dyn Policy> = if chain.is_empty() {
            Box::new(RandomPolicy)
        } else {
            Box::new(SubgoalPolicy::new(chain))
        };
        let log = run_episode(&mut world, policy.as_mut(), budget, &mut rng);
        if replay_success(&world, log.len(), budget) {
            successes += 1;
        }
    }
    Ok(Evaluation {
        episodes: n_episodes,
        successes,
        success_rate: if n_episodes == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(successes, n_episodes)
        },
    })
}
