use rayon::prelude::*;

use super::knn::{rank_and_vote, summarize, RetrievalResult, SearchLevel};
use super::store::{euclidean, EmbeddingStore};
use crate::error::{Error, Result};

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &mut [f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySet);
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Ok(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Median over query patches of each patch's minimum Euclidean distance to
/// the target's patches. Not symmetric.
pub fn wsi_distance(query: &[&[f32]], target: &[&[f32]]) -> Result<f64> {
    if query.is_empty() || target.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut mins: Vec<f64> = query
        .iter()
        .map(|q| target.iter().map(|t| euclidean(q, t)).fold(f64::INFINITY, f64::min))
        .collect();
    median(&mut mins)
}

/// Rows of one slide.
#[derive(Debug, Clone)]
pub struct SlideGroup {
    pub slide_id: String,
    pub label: usize,
    pub patient_id: Option<String>,
    pub rows: Vec<usize>,
}

/// Groups rows by slide in order of first appearance. A slide's label and
/// patient are taken from its first row.
pub fn group_by_slide(store: &EmbeddingStore) -> Vec<SlideGroup> {
    let mut groups: Vec<SlideGroup> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (i, m) in store.meta().iter().enumerate() {
        let g = *index.entry(m.slide_id.clone()).or_insert_with(|| {
            groups.push(SlideGroup {
                slide_id: m.slide_id.clone(),
                label: m.label,
                patient_id: m.patient_id.clone(),
                rows: Vec::new(),
            });
            groups.len() - 1
        });
        groups[g].rows.push(i);
    }
    groups
}

/// Leave-one-out slide retrieval ranked by median-of-minimum distance.
/// With `exclude_patient`, slides sharing the query's patient id are skipped.
pub fn wsi_leave_one_out(store: &EmbeddingStore, k: usize, exclude_patient: bool) -> Result<RetrievalResult> {
    let groups = group_by_slide(store);
    if groups.len() < 2 {
        return Err(Error::InsufficientSlides(groups.len()));
    }
    if k == 0 {
        return Err(Error::Invalid("k must be >= 1".into()));
    }
    let rows: Vec<Vec<&[f32]>> = groups.iter().map(|g| g.rows.iter().map(|&r| store.row(r)).collect()).collect();
    let queries = (0..groups.len())
        .into_par_iter()
        .map(|q| {
            let gq = &groups[q];
            let cands = (0..groups.len())
                .filter(|&t| t != q)
                .filter(|&t| {
                    !(exclude_patient
                        && matches!((&gq.patient_id, &groups[t].patient_id), (Some(a), Some(b)) if a == b))
                })
                .map(|t| Ok((t, wsi_distance(&rows[q], &rows[t])?)))
                .collect::<Result<Vec<_>>>()?;
            rank_and_vote(q, gq.label, cands, k, |t| groups[t].label)
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(SearchLevel::Wsi, k, queries)
}
