use serde::{Deserialize, Serialize};
use serde_json::json;

use veilaudit_core::auditor::{analyze, sample_visible, ClusterReport};
use veilaudit_core::protocols::Party;
use veilaudit_core::scenario::{ScenarioConfig, World};

use crate::report::{plot_series, sub_seed, PlotPoint, RunReport};
use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Low,
    High,
}

impl Regime {
    /// `(B, S)`; both regimes have four tags per user on average.
    pub fn size(self) -> (usize, usize) {
        match self {
            Regime::Low => (10_000, 2_500),
            Regime::High => (30_000, 7_500),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AolSweepConfig {
    pub regime: Regime,
    pub tags: usize,
    pub users: usize,
    pub p_values: Vec<f64>,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Fill wall-clock columns. Off by default so reports are reproducible.
    pub timing: bool,
    pub scenario: ScenarioConfig,
}

impl AolSweepConfig {
    pub fn new(regime: Regime, p_values: Vec<f64>, repeats: usize, seed: u64) -> Self {
        let (tags, users) = regime.size();
        AolSweepConfig {
            regime,
            tags,
            users,
            p_values,
            repeats,
            warmup: 1,
            seed,
            timing: false,
            scenario: ScenarioConfig::default(),
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.p_values.is_empty() || self.p_values.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(BenchError::BadConfig("p values must lie in (0, 1]".into()));
        }
        if self.repeats == 0 {
            return Err(BenchError::BadConfig("repeats must be at least 1".into()));
        }
        if self.tags == 0 || self.users < 2 {
            return Err(BenchError::BadConfig("need tags >= 1 and users >= 2".into()));
        }
        Ok(())
    }
}

/// One CSV row: one clustering run at one `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AolRow {
    pub p: f64,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub k_bar: f64,
    pub seed: u64,
    pub ari: f64,
    pub nmi: f64,
    pub n_pairs_effective: u64,
    pub wall_ms: Option<u64>,
    pub pairs_per_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AolSweep {
    pub config: AolSweepConfig,
    pub rows: Vec<AolRow>,
    /// Full cluster reports, row-aligned, for callers that need the extra
    /// fields. Not serialized.
    #[serde(skip)]
    pub details: Vec<ClusterReport>,
    pub points: Vec<RunReport>,
    pub plot_ari: Vec<PlotPoint>,
    pub plot_nmi: Vec<PlotPoint>,
    pub plot_ari_population: Vec<PlotPoint>,
}

impl AolSweep {
    pub fn point(&self, p: f64) -> Option<&RunReport> {
        self.points.iter().find(|r| r.config["p"].as_f64() == Some(p))
    }
}

/// Generates one world per repeat and clusters it at every `p`. Worlds are
/// shared across `p` within a repeat so the points differ only in sampling.
pub fn run_aol_sweep(cfg: &AolSweepConfig) -> Result<AolSweep, BenchError> {
    cfg.validate()?;
    let mut scenario = cfg.scenario.clone();
    scenario.workload.tags = cfg.tags;
    scenario.workload.users = cfg.users;
    let k_bar = cfg.tags as f64 / cfg.users as f64;

    let mut rows = Vec::new();
    let mut details = Vec::new();
    for r in 0..cfg.repeats {
        let world_seed = sub_seed(cfg.seed, "aol-world", r as u64);
        let world = World::generate(scenario.clone(), world_seed)?;
        let truth = world.owners_a();
        for (pi, &p) in cfg.p_values.iter().enumerate() {
            let vis = sample_visible(&world.net.ledger, p, sub_seed(world_seed, "visible", pi as u64))?;
            if r == 0 {
                for _ in 0..cfg.warmup {
                    analyze(&vis, &world.et.ask, Party::A, &truth);
                }
            }
            let (_, rep) = analyze(&vis, &world.et.ask, Party::A, &truth);
            rows.push(AolRow {
                p,
                b: cfg.tags,
                s: cfg.users,
                k_bar,
                seed: world_seed,
                ari: rep.ari,
                nmi: rep.nmi,
                n_pairs_effective: rep.n_pairs_effective,
                wall_ms: cfg.timing.then_some(rep.wall_ms.round() as u64),
                pairs_per_s: cfg.timing.then_some(rep.pairs_per_s),
            });
            details.push(rep);
        }
    }

    let mut points = Vec::new();
    for (pi, &p) in cfg.p_values.iter().enumerate() {
        let idx: Vec<usize> = (0..rows.len()).filter(|i| i % cfg.p_values.len() == pi).collect();
        let mut rep = RunReport::new(
            format!("p={p}"),
            json!({ "regime": cfg.regime, "p": p, "B": cfg.tags, "S": cfg.users, "k_bar": k_bar, "repeats": cfg.repeats }),
        );
        let seed = sub_seed(cfg.seed, "aol-ci", pi as u64);
        rep.metric("ari", idx.iter().map(|&i| rows[i].ari).collect(), seed)?;
        rep.metric("nmi", idx.iter().map(|&i| rows[i].nmi).collect(), seed)?;
        rep.metric("ari_population", idx.iter().map(|&i| details[i].ari_population).collect(), seed)?;
        rep.metric("nmi_population", idx.iter().map(|&i| details[i].nmi_population).collect(), seed)?;
        rep.metric("visible", idx.iter().map(|&i| details[i].visible as f64).collect(), seed)?;
        if cfg.timing {
            rep.metric("wall_ms", idx.iter().map(|&i| details[i].wall_ms).collect(), seed)?;
            rep.metric("pairs_per_s", idx.iter().map(|&i| details[i].pairs_per_s).collect(), seed)?;
        }
        points.push(rep);
    }
    let px = |r: &RunReport| r.config["p"].as_f64().expect("p recorded");
    Ok(AolSweep {
        config: cfg.clone(),
        plot_ari: plot_series(&points, px, "ari"),
        plot_nmi: plot_series(&points, px, "nmi"),
        plot_ari_population: plot_series(&points, px, "ari_population"),
        rows,
        details,
        points,
    })
}
