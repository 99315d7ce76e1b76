use serde::{Deserialize, Serialize};
use serde_json::json;

use veilaudit_core::adversary::attack_replay;
use veilaudit_core::chainsim::BridgeError;
use veilaudit_core::protocols::{aud_build, FinalizedTransfer};
use veilaudit_core::scenario::{ScenarioConfig, World};

use crate::report::{plot_series, sub_seed, PlotPoint, RunReport};
use crate::stats::percentile;
use crate::BenchError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthConfig {
    pub depths: Vec<u64>,
    /// Closed-loop transfers per depth and repeat.
    pub transfers: usize,
    pub repeats: usize,
    /// Verbatim, ts-mutated and rerouted resubmissions per depth and repeat.
    pub replays: u64,
    pub seed: u64,
    pub scenario: ScenarioConfig,
}

impl DepthConfig {
    pub fn new(depths: Vec<u64>, seed: u64) -> Self {
        DepthConfig { depths, transfers: 20, repeats: 10, replays: 300, seed, scenario: ScenarioConfig::with_size(20, 10) }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.depths.is_empty() || self.depths.iter().any(|d| !(1..=64).contains(d)) {
            return Err(BenchError::BadConfig("depths must lie in [1, 64]".into()));
        }
        if self.transfers == 0 || self.repeats == 0 {
            return Err(BenchError::BadConfig("transfers and repeats must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: u64,
    pub block_ms: u64,
    pub seed: u64,
    pub repeat: usize,
    pub transfers: usize,
    pub mean_latency_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub replay_attempts: u64,
    pub replay_accepted: u64,
    pub reorg_attempts: u64,
    pub reorg_accepted: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthSweep {
    pub config: DepthConfig,
    pub rows: Vec<DepthRow>,
    pub points: Vec<RunReport>,
    pub plot_latency: Vec<PlotPoint>,
}

impl DepthSweep {
    pub fn accepted_duplicates(&self) -> u64 {
        self.rows.iter().map(|r| r.replay_accepted + r.reorg_accepted).sum()
    }

    pub fn mean_latency(&self, depth: u64) -> Option<f64> {
        self.points.iter().find(|r| r.config["depth"].as_u64() == Some(depth)).map(|r| r.mean("latency_ms"))
    }
}

/// End-to-end latency from source inclusion to tag commitment at each
/// confirmation depth, with replay and reorg-resubmission checks.
pub fn run_depth_sweep(cfg: &DepthConfig) -> Result<DepthSweep, BenchError> {
    cfg.validate()?;
    let block_ms = cfg.scenario.audit_chain.block_interval_ms;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &d in &cfg.depths {
        let mut scenario = cfg.scenario.clone();
        scenario.bridge.depth = d;
        scenario.workload.tags = cfg.transfers;
        let mut rep = RunReport::new(format!("depth={d}"), json!({ "depth": d, "block_ms": block_ms, "transfers": cfg.transfers, "repeats": cfg.repeats }));
        let mut per_run = Vec::new();
        let mut all = Vec::new();
        for r in 0..cfg.repeats {
            let seed = sub_seed(cfg.seed, &format!("depth/{d}"), r as u64);
            let mut world = World::generate(scenario.clone(), seed)?;
            let mut lat: Vec<f64> = world.transfers.iter().map(|t| (t.committed_ms - t.src_included_ms) as f64).collect();
            let mean = lat.iter().sum::<f64>() / lat.len() as f64;
            let replay = attack_replay(&mut world, cfg.replays, sub_seed(seed, "replay", 0));
            let (reorg_attempts, reorg_accepted) = reorg_resubmissions(&mut world)?;
            lat.sort_by(f64::total_cmp);
            rows.push(DepthRow {
                depth: d,
                block_ms,
                seed,
                repeat: r,
                transfers: lat.len(),
                mean_latency_ms: mean,
                p50_ms: percentile(&lat, 0.50),
                p95_ms: percentile(&lat, 0.95),
                replay_attempts: replay.attempts,
                replay_accepted: replay.successes,
                reorg_attempts,
                reorg_accepted,
            });
            per_run.push(mean);
            all.extend(lat);
        }
        rep.metric("latency_ms", per_run, sub_seed(cfg.seed, "depth-ci", d))?;
        all.sort_by(f64::total_cmp);
        rep.p50_ms = Some(percentile(&all, 0.50));
        rep.p95_ms = Some(percentile(&all, 0.95));
        points.push(rep);
    }
    Ok(DepthSweep {
        config: cfg.clone(),
        plot_latency: plot_series(&points, |r| r.config["depth"].as_f64().expect("depth recorded"), "latency_ms"),
        rows,
        points,
    })
}

/// Models a relayer re-observing every committed source transaction after a
/// reorg: the bridge relays it again under a fresh message id. Counts how
/// many of those duplicates reach the destination or the ledger.
fn reorg_resubmissions(world: &mut World) -> Result<(u64, u64), BenchError> {
    let depth = world.config.bridge.depth;
    let mut attempts = 0;
    let mut accepted = 0;
    for i in 0..world.transfers.len() {
        let rec = world.transfers[i].clone();
        let now = world.net.now_ms();
        let msg = world.net.bridge.relay(&world.net.chains[&rec.src], &rec.txid_src, depth, now).map_err(scenario_err)?;
        world.net.advance_to(msg.ready_ms);
        let now = world.net.now_ms();
        let dst = world.net.chains.get_mut(&rec.dst).expect("known chain");
        attempts += 1;
        match world.net.bridge.deliver(&msg, dst, now) {
            Err(BridgeError::DuplicateMessage) => {}
            Err(e) => return Err(scenario_err(e)),
            Ok(_) => accepted += 1,
        }
        // a tag pointing at the re-relayed message, reusing the original
        // destination transaction and bundles
        let orig = world.net.ledger.get(&rec.key).expect("committed").clone();
        let tag = aud_build(&FinalizedTransfer { message: msg, txid_dst: orig.core.txid_dst }, orig.party_a, orig.party_b, now);
        attempts += 1;
        if world.net.ledger.append(tag, &world.net.chains).is_ok() {
            accepted += 1;
        }
    }
    Ok((attempts, accepted))
}

fn scenario_err(e: BridgeError) -> BenchError {
    BenchError::Scenario(e.into())
}
