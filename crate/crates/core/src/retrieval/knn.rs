use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::macro_f1;
use super::store::{euclidean, EmbeddingStore};
use crate::error::{Error, Result};

/// Which rows a query may not retrieve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    /// Only the query row itself.
    SelfOnly,
    SameSlide,
    /// Rows sharing the query's patient id; falls back to `SelfOnly` for rows without one.
    SamePatient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchLevel {
    Patch,
    Wsi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: usize,
    pub truth: usize,
    /// Nearest first; indices are rows (patch level) or slides (WSI level).
    pub neighbors: Vec<usize>,
    pub distances: Vec<f64>,
    pub top1: usize,
    pub mv3: Option<usize>,
    pub mv5: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub level: SearchLevel,
    pub k: usize,
    pub queries: Vec<QueryResult>,
    pub top1: MetricSummary,
    pub mv3: Option<MetricSummary>,
    pub mv5: Option<MetricSummary>,
}

impl RetrievalResult {
    /// Report with one block per metric: `{accuracy: {top1, mv3, mv5}, macro_f1: {...}}`.
    pub fn report(&self) -> serde_json::Value {
        let pick = |f: fn(&MetricSummary) -> f64| {
            serde_json::json!({
                "top1": f(&self.top1),
                "mv3": self.mv3.as_ref().map(f),
                "mv5": self.mv5.as_ref().map(f),
            })
        };
        serde_json::json!({
            "level": self.level,
            "k": self.k,
            "queries": self.queries.len(),
            "accuracy": pick(|m| m.accuracy),
            "macro_f1": pick(|m| m.macro_f1),
        })
    }
}

/// Most frequent label among `ranked` (nearest first). Ties go to the tied
/// label whose best-ranked member is nearest.
pub fn majority_vote(ranked: &[usize]) -> usize {
    let mut counts: Vec<(usize, usize, usize)> = Vec::new(); // (label, count, first rank)
    for (rank, &l) in ranked.iter().enumerate() {
        match counts.iter_mut().find(|c| c.0 == l) {
            Some(c) => c.1 += 1,
            None => counts.push((l, 1, rank)),
        }
    }
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|c| c.0)
        .expect("non-empty ranking")
}

/// Sorts candidates by distance (ties by index), keeps the `k` nearest and votes.
pub(crate) fn rank_and_vote(
    query: usize,
    truth: usize,
    mut candidates: Vec<(usize, f64)>,
    k: usize,
    label: impl Fn(usize) -> usize,
) -> Result<QueryResult> {
    if candidates.len() < k {
        return Err(Error::InsufficientNeighbors {
            query,
            available: candidates.len(),
            required: k,
        });
    }
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    candidates.truncate(k);
    let labels: Vec<usize> = candidates.iter().map(|c| label(c.0)).collect();
    Ok(QueryResult {
        query,
        truth,
        top1: labels[0],
        mv3: (k >= 3).then(|| majority_vote(&labels[..3])),
        mv5: (k >= 5).then(|| majority_vote(&labels[..5])),
        neighbors: candidates.iter().map(|c| c.0).collect(),
        distances: candidates.iter().map(|c| c.1).collect(),
    })
}

pub(crate) fn summarize(level: SearchLevel, k: usize, queries: Vec<QueryResult>) -> Result<RetrievalResult> {
    let truths: Vec<usize> = queries.iter().map(|q| q.truth).collect();
    let summary = |preds: Option<Vec<usize>>| -> Result<Option<MetricSummary>> {
        let Some(preds) = preds else { return Ok(None) };
        let hits = preds.iter().zip(&truths).filter(|(p, t)| p == t).count();
        Ok(Some(MetricSummary {
            accuracy: hits as f64 / truths.len() as f64,
            macro_f1: macro_f1(&preds, &truths)?,
        }))
    };
    let top1 = summary(Some(queries.iter().map(|q| q.top1).collect()))?.expect("top1 present");
    let mv3 = summary(queries.iter().map(|q| q.mv3).collect())?;
    let mv5 = summary(queries.iter().map(|q| q.mv5).collect())?;
    Ok(RetrievalResult {
        level,
        k,
        queries,
        top1,
        mv3,
        mv5,
    })
}

fn excluded(store: &EmbeddingStore, q: usize, j: usize, exclusion: Exclusion) -> bool {
    if q == j {
        return true;
    }
    let (a, b) = (&store.meta()[q], &store.meta()[j]);
    match exclusion {
        Exclusion::SelfOnly => false,
        Exclusion::SameSlide => a.slide_id == b.slide_id,
        Exclusion::SamePatient => matches!((&a.patient_id, &b.patient_id), (Some(x), Some(y)) if x == y),
    }
}

/// Exhaustive leave-one-out k-NN over every row of the store.
pub fn knn_leave_one_out(store: &EmbeddingStore, k: usize, exclusion: Exclusion) -> Result<RetrievalResult> {
    if store.is_empty() {
        return Err(Error::EmptySet);
    }
    if k == 0 {
        return Err(Error::Invalid("k must be >= 1".into()));
    }
    let queries = (0..store.len())
        .into_par_iter()
        .map(|q| {
            let row = store.row(q);
            let cands = (0..store.len())
                .filter(|&j| !excluded(store, q, j, exclusion))
                .map(|j| (j, euclidean(row, store.row(j))))
                .collect();
            rank_and_vote(q, store.label_of(q), cands, k, |j| store.label_of(j))
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(SearchLevel::Patch, k, queries)
}
