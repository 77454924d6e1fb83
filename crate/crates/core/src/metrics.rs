//! Accuracy, coverage, novelty and diversity metrics for ranked lists.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ArticleId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("zero-norm embedding")]
    ZeroVector,
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("rank must be at least 1")]
    ZeroRank,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub cutoff: usize,
    /// Relevance of an item not clicked in the session.
    pub background_relevance: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { cutoff: 10, background_relevance: 0.02 }
    }
}

pub fn hit_rate(rank: usize, n: usize) -> f64 {
    if rank >= 1 && rank <= n {
        1.0
    } else {
        0.0
    }
}

pub fn reciprocal_rank(rank: usize, n: usize) -> f64 {
    if rank >= 1 && rank <= n {
        1.0 / rank as f64
    } else {
        0.0
    }
}

/// Logarithmic rank discount; `disc(0)` is defined as 1.
pub fn disc(k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        1.0 / ((k + 1) as f64).log2()
    }
}

/// Relative discount of position `l` seen from target position `k`.
pub fn rdisc(l: usize, k: usize) -> f64 {
    disc(l.saturating_sub(k))
}

pub fn relevance(clicked: bool, background: f64) -> f64 {
    if clicked {
        1.0
    } else {
        background
    }
}

pub fn cos_distance(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    let cos = (dot / (na * nb).sqrt()).clamp(-1.0, 1.0);
    Ok((1.0 - cos) / 2.0)
}

fn discount_mass(n: usize) -> f64 {
    (1..=n).map(disc).sum()
}

/// Rank-discounted mean self-information of `pops` (list order).
pub fn esi_r(pops: &[f64]) -> f64 {
    if pops.is_empty() {
        return 0.0;
    }
    let s: f64 = pops.iter().enumerate().map(|(i, p)| -p.log2() * disc(i + 1)).sum();
    s / discount_mass(pops.len())
}

pub fn esi_rr(pops: &[f64], relevance: &[f64]) -> f64 {
    if pops.is_empty() {
        return 0.0;
    }
    let s: f64 = pops
        .iter()
        .zip(relevance)
        .enumerate()
        .map(|(i, (p, r))| -p.log2() * disc(i + 1) * r)
        .sum();
    s / discount_mass(pops.len())
}

/// Symmetric pairwise cosine distances.
pub fn distance_matrix(aces: &[&[f64]]) -> Result<Vec<Vec<f64>>, MetricError> {
    let n = aces.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = cos_distance(aces[i], aces[j])?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    if n == 1 {
        cos_distance(aces[0], aces[0])?;
    }
    Ok(d)
}

/// Shared EILD kernel; `rel` of `None` means unit relevance.
fn eild(dist: &[Vec<f64>], rel: Option<&[f64]>) -> f64 {
    let n = dist.len();
    if n < 2 {
        return 0.0;
    }
    let r = |i: usize| rel.map_or(1.0, |r| r[i]);
    let mut outer = 0.0;
    for k in 1..=n {
        let mut norm = 0.0;
        let mut inner = 0.0;
        for l in (1..=n).filter(|&l| l != k) {
            let w = rdisc(l, k);
            norm += w;
            inner += dist[k - 1][l - 1] * w * r(l - 1);
        }
        outer += disc(k) * r(k - 1) * inner / norm;
    }
    outer / discount_mass(n)
}

pub fn eild_r(dist: &[Vec<f64>]) -> f64 {
    eild(dist, None)
}

pub fn eild_rr(dist: &[Vec<f64>], relevance: &[f64]) -> f64 {
    eild(dist, Some(relevance))
}

/// The top of one ranking plus what the metrics need to know about it.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    /// The first `cutoff` (or fewer) ranked articles.
    pub top: Vec<ArticleId>,
    /// 1-based rank of the positive within the full candidate ranking.
    pub positive_rank: usize,
    /// Floored recent popularity of each `top` item.
    pub pops: Vec<f64>,
    /// Whether each `top` item was clicked in the session.
    pub clicked: Vec<bool>,
    /// Content embedding of each `top` item, when all are available.
    pub aces: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ListMetrics {
    pub hr: f64,
    pub mrr: f64,
    pub esi_r: f64,
    pub esi_rr: f64,
    pub eild_r: Option<f64>,
    pub eild_rr: Option<f64>,
}

pub fn evaluate_list(list: &RankedList, cfg: &MetricConfig) -> Result<ListMetrics, MetricError> {
    if list.positive_rank == 0 {
        return Err(MetricError::ZeroRank);
    }
    let n = cfg.cutoff.min(list.top.len());
    let pops = &list.pops[..n];
    let rel: Vec<f64> =
        list.clicked[..n].iter().map(|&c| relevance(c, cfg.background_relevance)).collect();
    let (eild_r_v, eild_rr_v) = match &list.aces {
        Some(aces) => {
            let refs: Vec<&[f64]> = aces[..n].iter().map(Vec::as_slice).collect();
            let dist = distance_matrix(&refs)?;
            (Some(eild_r(&dist)), Some(eild_rr(&dist, &rel)))
        }
        None => (None, None),
    };
    Ok(ListMetrics {
        hr: hit_rate(list.positive_rank, cfg.cutoff),
        mrr: reciprocal_rank(list.positive_rank, cfg.cutoff),
        esi_r: esi_r(pops),
        esi_rr: esi_rr(pops, &rel),
        eild_r: eild_r_v,
        eild_rr: eild_rr_v,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Sum {
    total: f64,
    count: usize,
}

impl Sum {
    fn add(&mut self, x: f64) {
        self.total += x;
        self.count += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.total / self.count as f64)
    }

    fn merge(&mut self, o: &Sum) {
        self.total += o.total;
        self.count += o.count;
    }
}

/// Means over one evaluation hour for one algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourMetrics {
    pub n_measurements: usize,
    pub hr: Option<f64>,
    pub mrr: Option<f64>,
    pub cov: Option<f64>,
    pub esi_r: Option<f64>,
    pub esi_rr: Option<f64>,
    pub eild_r: Option<f64>,
    pub eild_rr: Option<f64>,
}

/// Running sums for one (hour, algorithm) cell. Merging is associative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricAccumulator {
    hr: Sum,
    mrr: Sum,
    esi_r: Sum,
    esi_rr: Sum,
    eild_r: Sum,
    eild_rr: Sum,
    recommended: BTreeSet<ArticleId>,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, list: &RankedList, m: &ListMetrics, cutoff: usize) {
        self.hr.add(m.hr);
        self.mrr.add(m.mrr);
        self.esi_r.add(m.esi_r);
        self.esi_rr.add(m.esi_rr);
        if let Some(v) = m.eild_r {
            self.eild_r.add(v);
        }
        if let Some(v) = m.eild_rr {
            self.eild_rr.add(v);
        }
        self.recommended.extend(list.top.iter().take(cutoff).copied());
    }

    pub fn merge(&mut self, other: &MetricAccumulator) {
        self.hr.merge(&other.hr);
        self.mrr.merge(&other.mrr);
        self.esi_r.merge(&other.esi_r);
        self.esi_rr.merge(&other.esi_rr);
        self.eild_r.merge(&other.eild_r);
        self.eild_rr.merge(&other.eild_rr);
        self.recommended.extend(other.recommended.iter().copied());
    }

    pub fn count(&self) -> usize {
        self.hr.count
    }

    pub fn recommended(&self) -> &BTreeSet<ArticleId> {
        &self.recommended
    }

    /// Fraction of `recommendable` that appeared in any top list; `None`
    /// when nothing was recommendable.
    pub fn coverage(&self, recommendable: &BTreeSet<ArticleId>) -> Option<f64> {
        if recommendable.is_empty() {
            return None;
        }
        let hit = self.recommended.intersection(recommendable).count();
        Some(hit as f64 / recommendable.len() as f64)
    }

    pub fn finish(&self, recommendable: &BTreeSet<ArticleId>) -> HourMetrics {
        HourMetrics {
            n_measurements: self.count(),
            hr: self.hr.mean(),
            mrr: self.mrr.mean(),
            cov: self.coverage(recommendable),
            esi_r: self.esi_r.mean(),
            esi_rr: self.esi_rr.mean(),
            eild_r: self.eild_r.mean(),
            eild_rr: self.eild_rr.mean(),
        }
    }
}
