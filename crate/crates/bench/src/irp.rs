use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use veilaudit_core::auditor::{analyze, escalate, min_cluster_size, sample_visible};
use veilaudit_core::protocols::{irp_run, Party, ProtocolError};
use veilaudit_core::scenario::{ScenarioConfig, World};
use veilaudit_core::threshold::ThresholdError;

use crate::report::sub_seed;
use crate::BenchError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrpConfig {
    pub t: usize,
    pub n: usize,
    /// Extra tags issued by user 0 on top of the background workload.
    pub outlier_tags: usize,
    pub escalate_at: usize,
    pub seed: u64,
    pub scenario: ScenarioConfig,
}

impl IrpConfig {
    pub fn new(t: usize, n: usize, seed: u64) -> Self {
        IrpConfig { t, n, outlier_tags: 12, escalate_at: 10, seed, scenario: ScenarioConfig::with_size(120, 40) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IrpCaseReport {
    pub case_id: String,
    pub tags: usize,
    pub approvals: Vec<u8>,
    pub revealed: Vec<String>,
    /// Revealed identities equal the ground-truth owners of the cluster.
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IrpDemo {
    pub config: IrpConfig,
    pub ledger_tags: usize,
    pub clusters: usize,
    pub ari: f64,
    pub cases: Vec<IrpCaseReport>,
    pub outlier_revealed: bool,
    /// The same case with `t − 1` approvals was refused.
    pub below_threshold_refused: bool,
    pub reveal_records: usize,
    #[serde(skip)]
    pub ledger_export: String,
}

impl IrpDemo {
    pub fn passed(&self) -> bool {
        !self.cases.is_empty() && self.cases.iter().all(|c| c.correct) && self.outlier_revealed && self.below_threshold_refused
    }
}

/// Cluster at full visibility, escalate large clusters, then open them under
/// a `t`-of-`n` approval.
pub fn run_irp_demo(cfg: &IrpConfig) -> Result<IrpDemo, BenchError> {
    let mut scenario = cfg.scenario.clone();
    scenario.committee.t = cfg.t;
    scenario.committee.n = cfg.n;
    let mut world = World::generate(scenario, sub_seed(cfg.seed, "irp-world", 0))?;
    let others = world.users.len();
    for i in 0..cfg.outlier_tags {
        let plan = world.plan_for(0, 1 + i % (others - 1));
        world.run_transfer(plan)?;
    }
    let truth = world.owners_a();
    let vis = sample_visible(&world.net.ledger, 1.0, sub_seed(cfg.seed, "irp-visible", 0))?;
    let (clustering, rep) = analyze(&vis, &world.et.ask, Party::A, &truth);
    let cases = escalate(&vis, &clustering, min_cluster_size(cfg.escalate_at));

    let approvals: BTreeSet<u8> = world.shares.iter().take(cfg.t).map(|s| s.index).collect();
    let mut below_threshold_refused = !cases.is_empty();
    if let Some(first) = cases.first() {
        let mut short = first.clone();
        short.approvals = approvals.iter().copied().take(cfg.t - 1).collect();
        let now = world.net.now_ms();
        below_threshold_refused = matches!(
            irp_run(&short, &world.keyset, &world.shares, &mut world.net.ledger, now),
            Err(ProtocolError::Threshold(ThresholdError::BelowThreshold { .. }))
        );
    }

    let mut reports = Vec::new();
    let mut outlier_revealed = false;
    for mut case in cases {
        case.approvals = approvals.clone();
        let now = world.net.now_ms();
        let revealed = irp_run(&case, &world.keyset, &world.shares, &mut world.net.ledger, now)?;
        let expected: BTreeSet<[u8; 32]> = case
            .tags
            .iter()
            .map(|tr| {
                let pos = world.transfers.iter().position(|t| t.key == tr.key).expect("committed tag");
                world.users[truth[pos]].pk_id.encode()
            })
            .collect();
        let got: BTreeSet<[u8; 32]> = revealed.iter().map(|g| g.encode()).collect();
        outlier_revealed |= got.contains(&world.users[0].pk_id.encode());
        reports.push(IrpCaseReport {
            case_id: String::from_utf8_lossy(&case.case_id).into_owned(),
            tags: case.tags.len(),
            approvals: case.approvals.iter().copied().collect(),
            revealed: got.iter().map(hex::encode).collect(),
            correct: got == expected,
        });
    }
    Ok(IrpDemo {
        config: cfg.clone(),
        ledger_tags: world.net.ledger.len(),
        clusters: rep.clusters,
        ari: rep.ari,
        cases: reports,
        outlier_revealed,
        below_threshold_refused,
        reveal_records: world.net.ledger.reveal_count(),
        ledger_export: world.net.ledger.export(),
    })
}
