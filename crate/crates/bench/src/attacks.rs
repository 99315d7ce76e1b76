use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use veilaudit_core::adversary::{
    attack_forgery, attack_partition, attack_post_disclosure, attack_replay, attack_unauthorized_reveal, game_aol,
    AttackOutcome, PostDisclosure, RevealAttack,
};
use veilaudit_core::scenario::{ScenarioConfig, World};

use crate::report::sub_seed;
use crate::BenchError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSuiteConfig {
    pub forgery: u64,
    pub replay: u64,
    pub game_trials: usize,
    pub partition_trials: usize,
    pub partition_users: usize,
    pub reveal_uids: usize,
    pub reveal_guesses: usize,
    pub post_disclosure: u64,
    pub seed: u64,
    pub scenario: ScenarioConfig,
}

impl AttackSuiteConfig {
    pub fn new(seed: u64) -> Self {
        let mut scenario = ScenarioConfig::with_size(2_000, 500);
        scenario.committee.t = 3;
        scenario.committee.n = 5;
        AttackSuiteConfig {
            forgery: 1_000,
            replay: 10_000,
            game_trials: 10_000,
            partition_trials: 100,
            partition_users: 50,
            reveal_uids: 100,
            reveal_guesses: 1_000,
            post_disclosure: 1_000,
            seed,
            scenario,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackSuite {
    pub config: AttackSuiteConfig,
    pub forgery: AttackOutcome,
    pub replay: AttackOutcome,
    pub game: Vec<AttackOutcome>,
    pub partition: BTreeMap<String, f64>,
    pub reveal: RevealAttack,
    pub post_disclosure: PostDisclosure,
}

/// Flat CSV view: one row per attack outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackRow {
    pub attack: String,
    pub variant: String,
    pub attempts: u64,
    pub successes: u64,
    pub advantage: Option<f64>,
    pub advantage_lo: Option<f64>,
    pub advantage_hi: Option<f64>,
}

impl AttackSuite {
    pub fn rows(&self) -> Vec<AttackRow> {
        let row = |o: &AttackOutcome, variant: &str| AttackRow {
            attack: o.attack.clone(),
            variant: variant.to_string(),
            attempts: o.attempts,
            successes: o.successes,
            advantage: o.advantage,
            advantage_lo: o.advantage_ci.map(|c| c.0),
            advantage_hi: o.advantage_ci.map(|c| c.1),
        };
        let mut rows = vec![row(&self.forgery, "all"), row(&self.replay, "all")];
        for g in &self.game {
            let name = g.detail.keys().next().map_or("", String::as_str);
            rows.push(row(g, name));
        }
        rows.push(row(&self.reveal.outcome, "coalition_below_t"));
        rows.push(row(&self.post_disclosure.outcome, "all"));
        rows
    }
}

pub fn run_attack_suite(cfg: &AttackSuiteConfig) -> Result<AttackSuite, BenchError> {
    let s = |label: &str| sub_seed(cfg.seed, label, 0);
    let mut world = World::generate(cfg.scenario.clone(), s("attack-world"))?;
    let game = game_aol(&world, cfg.game_trials, s("game"));
    let partition = attack_partition(&world, cfg.partition_trials, cfg.partition_users, s("partition"));
    let reveal = attack_unauthorized_reveal(&world, cfg.reveal_uids, cfg.reveal_guesses, s("reveal"))
        .map_err(|e| BenchError::BadConfig(e.to_string()))?;
    let forgery = attack_forgery(&mut world, cfg.forgery, s("forgery"))?;
    let replay = attack_replay(&mut world, cfg.replay, s("replay"));
    let post_disclosure = attack_post_disclosure(&mut world, 0, cfg.post_disclosure, s("post-disclosure"))?;
    Ok(AttackSuite { config: cfg.clone(), forgery, replay, game, partition, reveal, post_disclosure })
}
