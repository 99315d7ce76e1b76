//! Trapdoor clustering of audit tags and partition scoring.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Scalar;
use crate::chainsim::{AuditLedger, DedupKey};
use crate::linktag::{extract_pseudonym, LinkPseudonym};
use crate::protocols::{AuditTag, Party, RevealCase, TagRef};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditorError {
    #[error("sampling rate {0} outside (0, 1]")]
    BadRate(String),
    #[error("partitions cover different element sets")]
    DomainMismatch,
}

/// Tags the auditor observes. `positions` index into the ledger records.
#[derive(Clone, Debug)]
pub struct VisibleSet {
    pub p: f64,
    pub seed: u64,
    pub total: usize,
    pub positions: Vec<usize>,
    pub tags: Vec<(DedupKey, AuditTag)>,
}

pub fn sample_visible(ledger: &AuditLedger, p: f64, seed: u64) -> Result<VisibleSet, AuditorError> {
    sample_records(ledger.records(), p, seed)
}

pub fn sample_records(records: &[(DedupKey, AuditTag)], p: f64, seed: u64) -> Result<VisibleSet, AuditorError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(AuditorError::BadRate(p.to_string()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let positions: Vec<usize> = (0..records.len()).filter(|_| rng.gen::<f64>() < p).collect();
    Ok(VisibleSet {
        p,
        seed,
        total: records.len(),
        tags: positions.iter().map(|&i| records[i].clone()).collect(),
        positions,
    })
}

/// Grouping of visible tags by one party's pseudonym.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clustering {
    pub party: Party,
    /// Cluster index of every visible tag, in visible order.
    pub labels: Vec<usize>,
    /// Shared pseudonym of each cluster.
    pub pseudonyms: Vec<LinkPseudonym>,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().enumerate().filter(move |(_, &l)| l == cluster).map(|(i, _)| i)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.pseudonyms.len()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Decrypts each tag's pseudonym once and unions tags that share one.
pub fn cluster(visible: &VisibleSet, ask: &Scalar, party: Party) -> Clustering {
    let n = visible.tags.len();
    let mut uf = UnionFind::new(n);
    let mut first: HashMap<[u8; 32], usize> = HashMap::with_capacity(n);
    let mut pseudonyms = Vec::with_capacity(n);
    for (i, (_, tag)) in visible.tags.iter().enumerate() {
        let l = extract_pseudonym(ask, &tag.bundle(party).ct_link);
        pseudonyms.push(l);
        match first.get(&l.0.encode()) {
            Some(&j) => uf.union(i, j),
            None => {
                first.insert(l.0.encode(), i);
            }
        }
    }
    let mut root_label: HashMap<usize, usize> = HashMap::new();
    let mut labels = Vec::with_capacity(n);
    let mut cluster_ps = Vec::new();
    for (i, l) in pseudonyms.iter().enumerate() {
        let root = uf.find(i);
        let next = root_label.len();
        let label = *root_label.entry(root).or_insert_with(|| {
            cluster_ps.push(*l);
            next
        });
        labels.push(label);
    }
    Clustering { party, labels, pseudonyms: cluster_ps }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub p: f64,
    pub total: usize,
    pub visible: usize,
    pub clusters: usize,
    pub ari: f64,
    pub nmi: f64,
    /// Same clustering scored against the full population, with every hidden
    /// tag counted as its own predicted singleton.
    pub ari_population: f64,
    pub nmi_population: f64,
    pub n_pairs_effective: u64,
    pub wall_ms: f64,
    pub pairs_per_s: f64,
}

/// `p·B·(B−1)/2`, rounded.
pub fn effective_pairs(p: f64, total: usize) -> u64 {
    let b = total as f64;
    (p * b * (b - 1.0) / 2.0).round() as u64
}

/// Clusters on `party` and scores against `truth`, the owner of every ledger
/// record.
pub fn analyze(visible: &VisibleSet, ask: &Scalar, party: Party, truth: &[usize]) -> (Clustering, ClusterReport) {
    let start = Instant::now();
    let c = cluster(visible, ask, party);
    let wall = start.elapsed().as_secs_f64();

    let pred: BTreeMap<usize, usize> = visible.positions.iter().copied().zip(c.labels.iter().copied()).collect();
    let gt: BTreeMap<usize, usize> = visible.positions.iter().map(|&i| (i, truth[i])).collect();
    let ari_v = ari(&pred, &gt).expect("same domain");
    let nmi_v = nmi(&pred, &gt).expect("same domain");

    // hidden tags become singleton clusters labelled past the visible ones
    let mut pred_all: BTreeMap<usize, usize> = (0..visible.total).map(|i| (i, c.pseudonyms.len() + i)).collect();
    pred_all.extend(pred.iter().map(|(&k, &v)| (k, v)));
    let gt_all: BTreeMap<usize, usize> = (0..visible.total).map(|i| (i, truth[i])).collect();

    let n_pairs = effective_pairs(visible.p, visible.total);
    let report = ClusterReport {
        p: visible.p,
        total: visible.total,
        visible: visible.tags.len(),
        clusters: c.pseudonyms.len(),
        ari: ari_v,
        nmi: nmi_v,
        ari_population: ari(&pred_all, &gt_all).expect("same domain"),
        nmi_population: nmi(&pred_all, &gt_all).expect("same domain"),
        n_pairs_effective: n_pairs,
        wall_ms: wall * 1e3,
        pairs_per_s: if wall > 0.0 { n_pairs as f64 / wall } else { f64::INFINITY },
    };
    (c, report)
}

struct Contingency {
    n: i128,
    cells: Vec<i128>,
    rows: Vec<i128>,
    cols: Vec<i128>,
}

fn contingency<E: Ord, A: Ord, B: Ord>(a: &BTreeMap<E, A>, b: &BTreeMap<E, B>) -> Result<Contingency, AuditorError> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(AuditorError::DomainMismatch);
    }
    let mut cells: BTreeMap<(&A, &B), i128> = BTreeMap::new();
    let mut rows: BTreeMap<&A, i128> = BTreeMap::new();
    let mut cols: BTreeMap<&B, i128> = BTreeMap::new();
    for (la, lb) in a.values().zip(b.values()) {
        *cells.entry((la, lb)).or_default() += 1;
        *rows.entry(la).or_default() += 1;
        *cols.entry(lb).or_default() += 1;
    }
    Ok(Contingency {
        n: a.len() as i128,
        cells: cells.into_values().collect(),
        rows: rows.into_values().collect(),
        cols: cols.into_values().collect(),
    })
}

fn choose2(v: i128) -> i128 {
    v * (v - 1) / 2
}

/// Adjusted Rand index from exact pair counts.
pub fn ari<E: Ord, A: Ord, B: Ord>(a: &BTreeMap<E, A>, b: &BTreeMap<E, B>) -> Result<f64, AuditorError> {
    let t = contingency(a, b)?;
    let index: i128 = t.cells.iter().map(|&v| choose2(v)).sum();
    let sa: i128 = t.rows.iter().map(|&v| choose2(v)).sum();
    let sb: i128 = t.cols.iter().map(|&v| choose2(v)).sum();
    let total = choose2(t.n);
    let num = 2 * index * total - 2 * sa * sb;
    let den = (sa + sb) * total - 2 * sa * sb;
    if num == den || den == 0 {
        // identical partitions, or both trivial in the same way
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

/// Normalized mutual information, arithmetic-mean normalization.
pub fn nmi<E: Ord, A: Ord, B: Ord>(a: &BTreeMap<E, A>, b: &BTreeMap<E, B>) -> Result<f64, AuditorError> {
    let t = contingency(a, b)?;
    if t.cells.len() == t.rows.len() && t.cells.len() == t.cols.len() {
        // every row and column has exactly one nonzero cell
        return Ok(1.0);
    }
    let n = t.n as f64;
    let entropy = |counts: &[i128]| -> f64 {
        counts.iter().map(|&c| c as f64 / n).map(|p| -p * p.ln()).sum()
    };
    let (ha, hb) = (entropy(&t.rows), entropy(&t.cols));
    // mutual information via I = H(A) + H(B) − H(A,B)
    let mi = ha + hb - entropy(&t.cells);
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Escalates every cluster matching `rule` into a case draft with no
/// approvals attached.
pub fn escalate<F>(visible: &VisibleSet, clustering: &Clustering, rule: F) -> Vec<RevealCase>
where
    F: Fn(usize, &LinkPseudonym) -> bool,
{
    let sizes = clustering.sizes();
    clustering
        .pseudonyms
        .iter()
        .enumerate()
        .filter(|(c, l)| rule(sizes[*c], l))
        .map(|(c, l)| RevealCase {
            case_id: format!("case-{}", hex::encode(&l.0.encode()[..8])).into_bytes(),
            tags: clustering
                .members(c)
                .map(|i| TagRef { key: visible.tags[i].0, party: clustering.party })
                .collect(),
            cluster_evidence: Some(*l),
            approvals: Default::default(),
        })
        .collect()
}

pub fn min_cluster_size(threshold: usize) -> impl Fn(usize, &LinkPseudonym) -> bool {
    move |size, _| size >= threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(labels: &[u32]) -> BTreeMap<usize, u32> {
        labels.iter().copied().enumerate().collect()
    }

    #[test]
    fn ari_examples() {
        let a = part(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let one = part(&[7; 10]);
        assert_eq!(ari(&a, &a).unwrap(), 1.0);
        assert_eq!(nmi(&a, &a).unwrap(), 1.0);
        assert_eq!(ari(&a, &one).unwrap(), 0.0);
        // relabelling does not matter
        let b = part(&[5, 5, 5, 5, 5, 2, 2, 2, 2, 2]);
        assert_eq!(ari(&a, &b).unwrap(), 1.0);
        assert_eq!(nmi(&a, &b).unwrap(), 1.0);
        let disjoint: BTreeMap<usize, u32> = (10..20).map(|i| (i, 0)).collect();
        assert_eq!(ari(&a, &disjoint), Err(AuditorError::DomainMismatch));
        assert_eq!(nmi(&a, &disjoint), Err(AuditorError::DomainMismatch));
    }

    /// Pair-counting oracle: ARI by enumerating every element pair.
    fn ari_bruteforce(a: &[u32], b: &[u32]) -> f64 {
        let n = a.len();
        let (mut ss, mut sd, mut ds, mut dd) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..n {
            for j in i + 1..n {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => ss += 1.0,
                    (true, false) => sd += 1.0,
                    (false, true) => ds += 1.0,
                    (false, false) => dd += 1.0,
                }
            }
        }
        // Hubert–Arabie in pair-count form
        let num = 2.0 * (ss * dd - sd * ds);
        let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
        if den == 0.0 {
            1.0
        } else {
            num / den
        }
    }

    /// NMI oracle from explicit probability sums.
    fn nmi_direct(a: &[u32], b: &[u32]) -> f64 {
        let n = a.len() as f64;
        let mut joint: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        let mut pa: BTreeMap<u32, f64> = BTreeMap::new();
        let mut pb: BTreeMap<u32, f64> = BTreeMap::new();
        for (&x, &y) in a.iter().zip(b) {
            *joint.entry((x, y)).or_default() += 1.0;
            *pa.entry(x).or_default() += 1.0;
            *pb.entry(y).or_default() += 1.0;
        }
        for m in [&mut pa, &mut pb] {
            m.values_mut().for_each(|v| *v /= n);
        }
        joint.values_mut().for_each(|v| *v /= n);
        let mi: f64 = joint.iter().map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln()).sum();
        let h = |m: &BTreeMap<u32, f64>| -> f64 { m.values().map(|p| -p * p.ln()).sum() };
        let d = h(&pa) + h(&pb);
        if d == 0.0 {
            1.0
        } else {
            2.0 * mi / d
        }
    }

    #[test]
    fn scores_match_independent_oracles() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.gen_range(2..40);
            let ka = rng.gen_range(1..6);
            let kb = rng.gen_range(1..6);
            let a: Vec<u32> = (0..n).map(|_| rng.gen_range(0..ka)).collect();
            let b: Vec<u32> = (0..n).map(|_| rng.gen_range(0..kb)).collect();
            let got = ari(&part(&a), &part(&b)).unwrap();
            let want = ari_bruteforce(&a, &b);
            assert!((got - want).abs() < 1e-9, "{a:?} {b:?}: {got} vs {want}");
            let got = nmi(&part(&a), &part(&b)).unwrap();
            let want = nmi_direct(&a, &b);
            assert!((got - want).abs() < 1e-9, "{a:?} {b:?}: {got} vs {want}");
            assert!((-1.0..=1.0).contains(&ari(&part(&a), &part(&b)).unwrap()));
        }
    }

    #[test]
    fn effective_pairs_rounds() {
        assert_eq!(effective_pairs(1.0, 4), 6);
        assert_eq!(effective_pairs(0.6, 10_000), 29_997_000);
    }
}
