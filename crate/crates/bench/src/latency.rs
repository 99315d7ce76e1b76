use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use veilaudit_core::chainsim::{AuditMode, AuditOutcome};
use veilaudit_core::scenario::{ExecutedTransfer, ScenarioConfig, World};

use crate::report::{plot_series, sub_seed, PlotPoint, RunReport};
use crate::stats::percentile;
use crate::BenchError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyConfig {
    pub mode: AuditMode,
    pub qps_values: Vec<u32>,
    pub n_senders: Vec<usize>,
    pub block_ms: u64,
    pub duration_s: u64,
    pub repeats: usize,
    pub seed: u64,
    pub scenario: ScenarioConfig,
}

impl LatencyConfig {
    pub fn new(mode: AuditMode, qps_values: Vec<u32>, n_senders: Vec<usize>, block_ms: u64, duration_s: u64, seed: u64) -> Self {
        LatencyConfig {
            mode,
            qps_values,
            n_senders,
            block_ms,
            duration_s,
            repeats: 10,
            seed,
            scenario: ScenarioConfig::with_size(0, 25),
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::BadConfig(m.into()));
        if self.qps_values.is_empty() || self.qps_values.contains(&0) {
            return bad("qps values must be nonempty and positive");
        }
        if self.n_senders.is_empty() || self.n_senders.contains(&0) {
            return bad("sender counts must be nonempty and positive");
        }
        if self.block_ms == 0 {
            return bad("block_ms must be positive");
        }
        if self.duration_s == 0 {
            return bad("duration_s must be positive");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub mode: AuditMode,
    pub qps: u32,
    pub n_senders: usize,
    pub block_ms: u64,
    pub duration_s: u64,
    pub seed: u64,
    pub repeat: usize,
    pub sent: usize,
    pub mined: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub tps_realized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyBench {
    pub config: LatencyConfig,
    pub rows: Vec<LatencyRow>,
    pub points: Vec<RunReport>,
    pub plot_p50: Vec<PlotPoint>,
    pub plot_p95: Vec<PlotPoint>,
    pub plot_tps: Vec<PlotPoint>,
}

struct RunResult {
    sent: usize,
    mined: usize,
    latencies: Vec<f64>,
}

/// Open-loop load on the audit chain. Each run draws one arrival per slot of
/// width `1/qps` s, assigns slot `j` to sender `j mod N` (so every sender
/// emits `qps/N` tx/s) and measures submission to inclusion on the virtual
/// clock. Store mode submits real tags from a pool of executed transfers and
/// persists them in the ledger; emit mode submits event-only records.
pub fn run_latency_bench(cfg: &LatencyConfig) -> Result<LatencyBench, BenchError> {
    cfg.validate()?;
    let max_sent = cfg.qps_values.iter().map(|&q| q as u64 * cfg.duration_s).max().expect("nonempty") as usize;
    let mut scenario = cfg.scenario.clone();
    scenario.audit_chain.block_interval_ms = cfg.block_ms;
    scenario.workload.tags = 0;
    let mut world = World::new(scenario, sub_seed(cfg.seed, "latency-world", 0))?;
    let pool: Vec<ExecutedTransfer> = match cfg.mode {
        AuditMode::Store => {
            let mut pool = Vec::with_capacity(max_sent);
            for _ in 0..max_sent {
                let plan = world.random_plan();
                pool.push(world.execute_legs(&plan)?);
            }
            pool
        }
        AuditMode::Emit => Vec::new(),
    };
    world.net.mode = cfg.mode;

    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &n in &cfg.n_senders {
        for &qps in &cfg.qps_values {
            let mut rep = RunReport::new(
                format!("{:?}/qps={qps}/N={n}", cfg.mode).to_lowercase(),
                json!({ "mode": cfg.mode, "qps": qps, "n_senders": n, "block_ms": cfg.block_ms,
                        "duration_s": cfg.duration_s, "repeats": cfg.repeats }),
            );
            let mut all = Vec::new();
            let (mut p50s, mut p95s, mut tpss) = (Vec::new(), Vec::new(), Vec::new());
            for r in 0..cfg.repeats {
                let seed = sub_seed(cfg.seed, &format!("latency/{qps}/{n}"), r as u64);
                let res = one_run(&world, &pool, cfg, qps, n, seed);
                let mut sorted = res.latencies.clone();
                sorted.sort_by(f64::total_cmp);
                let row = LatencyRow {
                    mode: cfg.mode,
                    qps,
                    n_senders: n,
                    block_ms: cfg.block_ms,
                    duration_s: cfg.duration_s,
                    seed,
                    repeat: r,
                    sent: res.sent,
                    mined: res.mined,
                    p50_ms: percentile(&sorted, 0.50),
                    p95_ms: percentile(&sorted, 0.95),
                    tps_realized: res.mined as f64 / cfg.duration_s as f64,
                };
                p50s.push(row.p50_ms);
                p95s.push(row.p95_ms);
                tpss.push(row.tps_realized);
                all.extend(res.latencies);
                rows.push(row);
            }
            let ci_seed = sub_seed(cfg.seed, "latency-ci", points.len() as u64);
            rep.metric("p50_ms", p50s, ci_seed)?;
            rep.metric("p95_ms", p95s, ci_seed)?;
            let tps = rep.metric("tps_realized", tpss, ci_seed)?.mean;
            all.sort_by(f64::total_cmp);
            rep.p50_ms = Some(percentile(&all, 0.50));
            rep.p95_ms = Some(percentile(&all, 0.95));
            rep.tps_realized = Some(tps);
            points.push(rep);
        }
    }
    let qx = |r: &RunReport| r.config["qps"].as_f64().expect("qps recorded");
    Ok(LatencyBench {
        config: cfg.clone(),
        plot_p50: plot_series(&points, qx, "p50_ms"),
        plot_p95: plot_series(&points, qx, "p95_ms"),
        plot_tps: plot_series(&points, qx, "tps_realized"),
        rows,
        points,
    })
}

fn one_run(world: &World, pool: &[ExecutedTransfer], cfg: &LatencyConfig, qps: u32, n: usize, seed: u64) -> RunResult {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut net = world.net.clone();
    let t = cfg.block_ms;
    let base = net.now_ms().div_ceil(t) * t;
    net.advance_to(base);
    let first = net.inclusions().len();
    let window_ms = cfg.duration_s * 1000;
    let slots = qps as u64 * cfg.duration_s;
    let mut sent = Vec::with_capacity(slots as usize);
    for j in 0..slots {
        let u: f64 = rng.gen();
        let at = base + ((j as f64 + u) * 1000.0 / qps as f64).floor() as u64;
        let sender = (j % n as u64) as u32;
        let txid = match cfg.mode {
            AuditMode::Store => net.submit_tag_at(pool[j as usize].build_tag(at), at),
            AuditMode::Emit => {
                let digest = veilaudit_core::algebra::digest32(
                    b"veilaudit/load",
                    &[&seed.to_be_bytes(), &sender.to_be_bytes(), &j.to_be_bytes()],
                );
                net.submit_audit_record(digest, at)
            }
        };
        sent.push(txid);
    }
    // drain: everything submitted in the window is included within one block
    net.advance_to(base + window_ms + t);
    let incl = &net.inclusions()[first..];
    let mut latencies = Vec::with_capacity(incl.len());
    let mut mined = 0;
    for i in incl {
        if matches!(i.outcome, AuditOutcome::Rejected(_)) {
            continue;
        }
        latencies.push((i.included_ms - i.submitted_ms) as f64);
        if i.included_ms <= base + window_ms {
            mined += 1;
        }
    }
    RunResult { sent: sent.len(), mined, latencies }
}
