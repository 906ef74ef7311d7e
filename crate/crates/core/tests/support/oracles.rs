//! Straightforward, deliberately unoptimised implementations used as test oracles.

use std::collections::VecDeque;

use histopatch::geometry::{Point, Rect};
use histopatch::retrieval::EmbeddingStore;
use histopatch::tissue::TissueMask;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Direct O(N^2) bivariate Gaussian KDE at every point.
pub fn kde_naive(points: &[Point], h: f64) -> Vec<f64> {
    let n = points.len() as f64;
    points
        .iter()
        .map(|p| {
            let mut s = 0.0;
            for q in points {
                let dx = (p.x as f64 - q.x as f64) / h;
                let dy = (p.y as f64 - q.y as f64) / h;
                s += (-(dx * dx + dy * dy) / 2.0).exp() / (2.0 * std::f64::consts::PI);
            }
            s / (n * h * h)
        })
        .collect()
}

/// Upper-tail p-value of Pearson's chi-square statistic.
pub fn chi_square_pvalue(observed: &[u64], expected_p: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&o, &p) in observed.iter().zip(expected_p) {
        let e = p * n as f64;
        if e > 0.0 {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        } else {
            assert_eq!(o, 0, "draw from a zero-probability cell");
        }
    }
    ChiSquared::new((cells - 1) as f64).unwrap().sf(stat)
}

/// Kolmogorov-Smirnov p-value of samples against U(0, 1), asymptotic
/// distribution with Stephens' small-sample correction.
pub fn ks_uniform_pvalue(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        d = d.max((i as f64 + 1.0) / n - x).max(x - i as f64 / n);
    }
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

/// 8-connected components by BFS flood fill: (bounding box, pixel count).
pub fn flood_fill_components(m: &TissueMask) -> Vec<(Rect, usize)> {
    let (w, h) = (m.width as i64, m.height as i64);
    let mut seen = vec![false; m.bits.len()];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if m.bits[i] == 0 || seen[i] {
                continue;
            }
            seen[i] = true;
            let mut q = VecDeque::from([(x, y)]);
            let (mut x0, mut y0, mut x1, mut y1, mut count) = (x, y, x, y, 0usize);
            while let Some((cx, cy)) = q.pop_front() {
                count += 1;
                x0 = x0.min(cx);
                y0 = y0.min(cy);
                x1 = x1.max(cx);
                y1 = y1.max(cy);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (cx + dx, cy + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let j = (ny * w + nx) as usize;
                        if m.bits[j] != 0 && !seen[j] {
                            seen[j] = true;
                            q.push_back((nx, ny));
                        }
                    }
                }
            }
            out.push((
                Rect::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32),
                count,
            ));
        }
    }
    out
}

/// Between-class variance maximiser by exhaustive search; returns the first
/// best split `t` (classes `< =t` and `> t`).
pub fn otsu_brute(hist: &[u64; 256]) -> Option<usize> {
    let total: u64 = hist.iter().sum();
    let mut best: Option<(usize, f64)> = None;
    for t in 0..255 {
        let (mut w0, mut s0) = (0.0, 0.0);
        for (v, &c) in hist.iter().enumerate().take(t + 1) {
            w0 += c as f64;
            s0 += v as f64 * c as f64;
        }
        let (mut w1, mut s1) = (0.0, 0.0);
        for (v, &c) in hist.iter().enumerate().skip(t + 1) {
            w1 += c as f64;
            s1 += v as f64 * c as f64;
        }
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let var = w0 * w1 / (total as f64).powi(2) * (s0 / w0 - s1 / w1).powi(2);
        if best.is_none_or(|(_, b)| var > b) {
            best = Some((t, var));
        }
    }
    best.map(|(t, _)| t)
}

pub struct BruteVerdict {
    pub neighbors: Vec<usize>,
    pub top1: usize,
    pub mv3: Option<usize>,
    pub mv5: Option<usize>,
}

/// Majority label; ties resolved by whichever tied label appears first.
pub fn vote(labels: &[usize]) -> usize {
    let max_label = *labels.iter().max().unwrap();
    let mut counts = vec![0usize; max_label + 1];
    for &l in labels {
        counts[l] += 1;
    }
    let best = *counts.iter().max().unwrap();
    *labels.iter().find(|&&l| counts[l] == best).unwrap()
}

/// Full distance matrix, then a stable sort of every row.
pub fn brute_rank(
    n: usize,
    k: usize,
    dist: impl Fn(usize, usize) -> f64,
    eligible: impl Fn(usize, usize) -> bool,
    label: impl Fn(usize) -> usize,
) -> Vec<BruteVerdict> {
    (0..n)
        .map(|q| {
            let mut cand: Vec<(f64, usize)> = (0..n).filter(|&j| eligible(q, j)).map(|j| (dist(q, j), j)).collect();
            cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let neighbors: Vec<usize> = cand.iter().take(k).map(|c| c.1).collect();
            let labels: Vec<usize> = neighbors.iter().map(|&j| label(j)).collect();
            BruteVerdict {
                top1: labels[0],
                mv3: (k >= 3).then(|| vote(&labels[..3])),
                mv5: (k >= 5).then(|| vote(&labels[..5])),
                neighbors,
            }
        })
        .collect()
}

pub fn l2(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] as f64 - b[i] as f64).powi(2);
    }
    s.sqrt()
}

/// Median-of-minimum distance computed with an explicit sort.
pub fn median_of_min(q: &[Vec<f32>], t: &[Vec<f32>]) -> f64 {
    let mut mins: Vec<f64> = q
        .iter()
        .map(|a| t.iter().map(|b| l2(a, b)).fold(f64::MAX, f64::min))
        .collect();
    mins.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = mins.len();
    if n % 2 == 1 {
        mins[n / 2]
    } else {
        (mins[n / 2 - 1] + mins[n / 2]) / 2.0
    }
}

/// Slides as (label, patient, rows) in first-appearance order.
pub fn slides_of(store: &EmbeddingStore) -> Vec<(usize, Option<String>, Vec<Vec<f32>>)> {
    let mut ids: Vec<String> = Vec::new();
    let mut out: Vec<(usize, Option<String>, Vec<Vec<f32>>)> = Vec::new();
    for (i, m) in store.meta().iter().enumerate() {
        let k = match ids.iter().position(|s| *s == m.slide_id) {
            Some(k) => k,
            None => {
                ids.push(m.slide_id.clone());
                out.push((m.label, m.patient_id.clone(), Vec::new()));
                ids.len() - 1
            }
        };
        out[k].2.push(store.row(i).to_vec());
    }
    out
}

/// Macro-F1 from a full confusion matrix, precision and recall first.
pub fn confusion_macro_f1(preds: &[usize], truths: &[usize], classes: usize) -> f64 {
    let mut cm = vec![vec![0u64; classes]; classes];
    for (&p, &t) in preds.iter().zip(truths) {
        cm[t][p] += 1;
    }
    let mut f1s = Vec::new();
    for c in 0..classes {
        let tp = cm[c][c] as f64;
        let predicted: f64 = (0..classes).map(|t| cm[t][c] as f64).sum();
        let actual: f64 = cm[c].iter().map(|&v| v as f64).sum();
        if predicted == 0.0 && actual == 0.0 {
            continue;
        }
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        f1s.push(if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        });
    }
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

/// Perceptron with bias; returns true once an epoch makes no mistakes.
pub fn perceptron_separates(x: &[Vec<f64>], y: &[usize], epochs: usize) -> bool {
    let d = x[0].len();
    let mut w = vec![0.0; d + 1];
    for _ in 0..epochs {
        let mut mistakes = 0;
        for (xi, &yi) in x.iter().zip(y) {
            let s = if yi == 1 { 1.0 } else { -1.0 };
            let a: f64 = w[d] + xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if s * a <= 0.0 {
                mistakes += 1;
                for j in 0..d {
                    w[j] += s * xi[j];
                }
                w[d] += s;
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}
