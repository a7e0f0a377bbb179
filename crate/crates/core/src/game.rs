//! Resource allocation games: resources with values, per-agent action sets of
//! resource subsets, and tabulated local welfare / utility rules.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;

/// A tabulated local rule `f(0..=n_max)` applied per resource as `v_r f(|a|_r)`.
pub trait LocalRule: Send + Sync {
    fn table(&self) -> &[f64];

    fn value(&self, occupancy: usize) -> f64 {
        self.table()[occupancy]
    }

    fn n_max(&self) -> usize {
        self.table().len() - 1
    }
}

fn check_table(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidRule(format!("{what} table is empty")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidRule(format!("{what} table has non-finite value {v}")));
    }
    if values[0] != 0.0 {
        return Err(Error::InvalidRule(format!(
            "{what}(0) must be 0, got {}",
            values[0]
        )));
    }
    Ok(())
}

/// Local welfare `w` with `w(0) = 0` and `w(y) > 0` for `y >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WelfareRule {
    values: Vec<f64>,
}

impl WelfareRule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_table(&values, "w")?;
        if let Some((y, v)) = values.iter().enumerate().skip(1).find(|(_, v)| **v <= 0.0) {
            return Err(Error::InvalidRule(format!("w({y}) = {v} must be positive")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The same rule restricted to `0..=n`.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.n_max() {
            return Err(Error::InvalidRule(format!(
                "rule is defined up to {}, needed {n}",
                self.n_max()
            )));
        }
        Ok(Self {
            values: self.values[..=n].to_vec(),
        })
    }

    pub fn ensure_covers(&self, n: usize) -> Result<()> {
        self.truncated(n).map(|_| ())
    }
}

impl LocalRule for WelfareRule {
    fn table(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for WelfareRule {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<WelfareRule> for Vec<f64> {
    fn from(rule: WelfareRule) -> Self {
        rule.values
    }
}

/// Utility rule `u` with `u(0) = 0` and `u >= 0`; interior zeros are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UtilityRule {
    values: Vec<f64>,
}

impl UtilityRule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_table(&values, "u")?;
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::InvalidRule(format!("u({j}) = {v} must be nonnegative")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl From<&WelfareRule> for UtilityRule {
    fn from(w: &WelfareRule) -> Self {
        Self {
            values: w.values.clone(),
        }
    }
}

impl LocalRule for UtilityRule {
    fn table(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for UtilityRule {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<UtilityRule> for Vec<f64> {
    fn from(rule: UtilityRule) -> Self {
        rule.values
    }
}

/// A named family of welfare rules, tabulated on demand for a given `n`.
pub trait WelfareFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn value(&self, occupancy: usize) -> f64;

    fn table(&self, n: usize) -> Result<WelfareRule> {
        WelfareRule::new((0..=n).map(|y| self.value(y)).collect())
    }
}

/// `w(y) = 1` for every covered resource.
pub struct Covering;

impl WelfareFamily for Covering {
    fn name(&self) -> &'static str {
        "covering"
    }

    fn value(&self, y: usize) -> f64 {
        if y > 0 {
            1.0
        } else {
            0.0
        }
    }
}

/// `w(y) = y exp(-y / 5)`: added benefit from sharing with eventual congestion.
pub struct CongestedExponential;

impl WelfareFamily for CongestedExponential {
    fn name(&self) -> &'static str {
        "congested-exponential"
    }

    fn value(&self, y: usize) -> f64 {
        let y = y as f64;
        y * (-y / 5.0).exp()
    }
}

pub fn welfare_families() -> &'static Registry<dyn WelfareFamily> {
    static REGISTRY: OnceLock<Registry<dyn WelfareFamily>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn WelfareFamily> = Registry::new("welfare rule");
        reg.register("covering", Box::new(Covering))
            .register("congested-exponential", Box::new(CongestedExponential))
            .alias("exp5", "congested-exponential");
        reg
    })
}

pub fn builtin_welfare(name: &str, n: usize) -> Result<WelfareRule> {
    welfare_families().get(name)?.table(n)
}

/// How a welfare rule is named in game and config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WelfareSpec {
    Named { name: String },
    Table { table: Vec<f64> },
}

impl WelfareSpec {
    pub fn named(name: &str) -> Self {
        Self::Named {
            name: name.to_string(),
        }
    }

    pub fn resolve(&self, n: usize) -> Result<WelfareRule> {
        match self {
            Self::Named { name } => builtin_welfare(name, n),
            Self::Table { table } => {
                let rule = WelfareRule::new(table.clone())?;
                rule.ensure_covers(n)?;
                Ok(rule)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Named { name } => welfare_families()
                .get(name)
                .map(|f| f.name().to_string())
                .unwrap_or_else(|_| name.clone()),
            Self::Table { .. } => "table".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: String,
    pub value: f64,
}

/// Agents choosing among subsets of valued resources.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGame {
    resources: Vec<Resource>,
    /// `actions[i][j]` is agent `i`'s `j`-th action, as sorted resource indices.
    actions: Vec<Vec<Vec<usize>>>,
    index: HashMap<String, usize>,
}

impl ResourceGame {
    pub fn new(resources: Vec<Resource>, actions: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let mut index = HashMap::with_capacity(resources.len());
        for (r, res) in resources.iter().enumerate() {
            if !(res.value.is_finite() && res.value >= 0.0) {
                return Err(Error::InvalidGame(format!(
                    "resource `{}` has invalid value {}",
                    res.id, res.value
                )));
            }
            if index.insert(res.id.clone(), r).is_some() {
                return Err(Error::InvalidGame(format!("duplicate resource id `{}`", res.id)));
            }
        }
        let mut sorted = Vec::with_capacity(actions.len());
        for (i, set) in actions.into_iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidGame(format!("agent {i} has no actions")));
            }
            let mut agent = Vec::with_capacity(set.len());
            for mut action in set {
                action.sort_unstable();
                if action.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::InvalidGame(format!(
                        "agent {i} has an action with a repeated resource"
                    )));
                }
                if let Some(r) = action.iter().find(|r| **r >= resources.len()) {
                    return Err(Error::InvalidGame(format!(
                        "agent {i} references missing resource index {r}"
                    )));
                }
                agent.push(action);
            }
            sorted.push(agent);
        }
        if sorted.is_empty() {
            return Err(Error::InvalidGame("game has no agents".into()));
        }
        Ok(Self {
            resources,
            actions: sorted,
            index,
        })
    }

    pub fn from_ids(resources: Vec<Resource>, actions: &[Vec<Vec<String>>]) -> Result<Self> {
        let lookup: HashMap<&str, usize> = resources
            .iter()
            .enumerate()
            .map(|(r, res)| (res.id.as_str(), r))
            .collect();
        let mut indexed = Vec::with_capacity(actions.len());
        for set in actions {
            let mut agent = Vec::with_capacity(set.len());
            for action in set {
                let ids = action
                    .iter()
                    .map(|id| {
                        lookup
                            .get(id.as_str())
                            .copied()
                            .ok_or_else(|| Error::UnknownResource(id.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                agent.push(ids);
            }
            indexed.push(agent);
        }
        Self::new(resources, indexed)
    }

    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn value(&self, r: usize) -> f64 {
        self.resources[r].value
    }

    pub fn action_sets(&self) -> &[Vec<Vec<usize>>] {
        &self.actions
    }

    pub fn num_actions(&self, agent: usize) -> usize {
        self.actions[agent].len()
    }

    pub fn action(&self, agent: usize, idx: usize) -> &[usize] {
        &self.actions[agent][idx]
    }

    /// `m = max_i |A_i|`.
    pub fn max_actions(&self) -> usize {
        self.actions.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `|A| = prod_i |A_i|`, saturating.
    pub fn num_joint_actions(&self) -> u128 {
        self.actions
            .iter()
            .fold(1u128, |acc, a| acc.saturating_mul(a.len() as u128))
    }

    pub fn resource_index(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownResource(id.to_string()))
    }

    /// Every resource value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let resources = self
            .resources
            .iter()
            .map(|r| Resource {
                id: r.id.clone(),
                value: r.value * c,
            })
            .collect();
        Self::new(resources, self.actions.clone())
    }

    pub fn check_joint(&self, a: &JointAction) -> Result<()> {
        if a.0.len() != self.num_agents() {
            return Err(Error::InvalidArgument(format!(
                "joint action has {} entries for {} agents",
                a.0.len(),
                self.num_agents()
            )));
        }
        for (i, &j) in a.0.iter().enumerate() {
            if j >= self.num_actions(i) {
                return Err(Error::InvalidArgument(format!(
                    "agent {i} has {} actions, index {j} is out of range",
                    self.num_actions(i)
                )));
            }
        }
        Ok(())
    }

    pub fn check_rule<R: LocalRule + ?Sized>(&self, rule: &R) -> Result<()> {
        if rule.n_max() < self.num_agents() {
            return Err(Error::InvalidRule(format!(
                "rule is defined up to {}, game has {} agents",
                rule.n_max(),
                self.num_agents()
            )));
        }
        Ok(())
    }
}

/// Per-agent action indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAction(pub Vec<usize>);

impl JointAction {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn parse(text: &str) -> Result<Self> {
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidArgument(format!("bad action index `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn random<R: Rng + ?Sized>(game: &ResourceGame, rng: &mut R) -> Self {
        Self(
            (0..game.num_agents())
                .map(|i| rng.gen_range(0..game.num_actions(i)))
                .collect(),
        )
    }
}

/// `|a|_r` for every resource.
pub fn occupancies(game: &ResourceGame, a: &JointAction) -> Vec<usize> {
    let mut counts = vec![0usize; game.num_resources()];
    for (i, &j) in a.0.iter().enumerate() {
        for &r in game.action(i, j) {
            counts[r] += 1;
        }
    }
    counts
}

pub fn occupancy(game: &ResourceGame, a: &JointAction, id: &str) -> Result<usize> {
    game.check_joint(a)?;
    let r = game.resource_index(id)?;
    Ok(a.0
        .iter()
        .enumerate()
        .filter(|(i, j)| game.action(*i, **j).binary_search(&r).is_ok())
        .count())
}

/// `sum_r v_r f(|a|_r)`. The rule must be defined up to the number of agents.
pub fn welfare<R: LocalRule + ?Sized>(game: &ResourceGame, rule: &R, a: &JointAction) -> f64 {
    occupancies(game, a)
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(r, c)| game.value(r) * rule.value(*c))
        .sum()
}

/// Occupancy counts with an incrementally maintained objective value.
pub(crate) struct LoadTracker<'a> {
    game: &'a ResourceGame,
    table: &'a [f64],
    counts: Vec<usize>,
}

impl<'a> LoadTracker<'a> {
    pub(crate) fn new<R: LocalRule + ?Sized>(game: &'a ResourceGame, rule: &'a R, a: &JointAction) -> Self {
        Self {
            game,
            table: rule.table(),
            counts: occupancies(game, a),
        }
    }

    /// Adds the agent's action and returns the change in objective.
    pub(crate) fn add(&mut self, agent: usize, idx: usize) -> f64 {
        let mut delta = 0.0;
        for &r in self.game.action(agent, idx) {
            let c = self.counts[r];
            delta += self.game.value(r) * (self.table[c + 1] - self.table[c]);
            self.counts[r] = c + 1;
        }
        delta
    }

    /// Removes the agent's action and returns the change in objective.
    pub(crate) fn remove(&mut self, agent: usize, idx: usize) -> f64 {
        let mut delta = 0.0;
        for &r in self.game.action(agent, idx) {
            let c = self.counts[r];
            delta += self.game.value(r) * (self.table[c - 1] - self.table[c]);
            self.counts[r] = c - 1;
        }
        delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomGameConfig {
    pub resources: usize,
    pub agents: usize,
    #[serde(default = "one")]
    pub min_actions: usize,
    pub max_actions: usize,
    pub inclusion_probability: f64,
}

fn one() -> usize {
    1
}

impl RandomGameConfig {
    /// 100 resources, 25 agents with 1..=10 actions, inclusion probability 0.25.
    pub fn numerical_study() -> Self {
        Self {
            resources: 100,
            agents: 25,
            min_actions: 1,
            max_actions: 10,
            inclusion_probability: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.inclusion_probability) {
            return Err(Error::InvalidArgument(format!(
                "inclusion probability {} outside [0, 1]",
                self.inclusion_probability
            )));
        }
        if self.agents == 0 || self.min_actions == 0 || self.min_actions > self.max_actions {
            return Err(Error::InvalidArgument(format!(
                "need agents >= 1 and 1 <= min_actions <= max_actions, got {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn random_game(cfg: &RandomGameConfig, seed: u64) -> Result<ResourceGame> {
    random_game_with(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn random_game_with<G: Rng + ?Sized>(cfg: &RandomGameConfig, rng: &mut G) -> Result<ResourceGame> {
    cfg.validate()?;
    let resources = (0..cfg.resources)
        .map(|r| Resource {
            id: format!("r{r}"),
            value: rng.gen::<f64>(),
        })
        .collect();
    let actions = (0..cfg.agents)
        .map(|_| {
            let count = rng.gen_range(cfg.min_actions..=cfg.max_actions);
            (0..count)
                .map(|_| {
                    (0..cfg.resources)
                        .filter(|_| rng.gen_bool(cfg.inclusion_probability))
                        .collect()
                })
                .collect()
        })
        .collect();
    ResourceGame::new(resources, actions)
}

/// On-disk form of a game together with its welfare rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub n: usize,
    pub resources: Vec<Resource>,
    pub actions: Vec<Vec<Vec<String>>>,
    pub welfare: WelfareSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designated_equilibrium: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designated_optimum: Option<Vec<usize>>,
}

impl GameFile {
    pub fn new(game: &ResourceGame, welfare: WelfareSpec) -> Self {
        let actions = game
            .action_sets()
            .iter()
            .map(|set| {
                set.iter()
                    .map(|a| a.iter().map(|&r| game.resources[r].id.clone()).collect())
                    .collect()
            })
            .collect();
        Self {
            n: game.num_agents(),
            resources: game.resources.clone(),
            actions,
            welfare,
            designated_equilibrium: None,
            designated_optimum: None,
        }
    }

    pub fn game(&self) -> Result<ResourceGame> {
        let game = ResourceGame::from_ids(self.resources.clone(), &self.actions)?;
        if game.num_agents() != self.n {
            return Err(Error::InvalidGame(format!(
                "header says n = {} but {} action sets are listed",
                self.n,
                game.num_agents()
            )));
        }
        Ok(game)
    }

    pub fn welfare_rule(&self) -> Result<WelfareRule> {
        self.welfare.resolve(self.n)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
