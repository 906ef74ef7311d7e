use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CandidateSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `N^(-1/6)` times the mean of the per-axis sample standard deviations.
    Scott,
    Fixed(f64),
}

/// Gaussian kernel density over a candidate set, evaluated at every candidate.
///
/// `density[i] = 1/(N h^2) * sum_j K((x_i - x_j)/h)` with the bivariate
/// standard normal kernel `K(u) = exp(-|u|^2/2) / (2 pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    pub candidates: CandidateSet,
    pub rule: BandwidthRule,
    pub bandwidth: f64,
    /// Set when Scott's rule degenerated (e.g. all points identical) and `h = 1` was used.
    pub bandwidth_fallback: bool,
    pub density: Vec<f64>,
    pub probability: Vec<f64>,
}

pub fn scott_bandwidth(c: &CandidateSet) -> f64 {
    let n = c.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let (sx, sy) = c.points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x as f64, b + p.y as f64));
    let (mx, my) = (sx / nf, sy / nf);
    let (vx, vy) = c.points.iter().fold((0.0, 0.0), |(a, b), p| {
        let dx = p.x as f64 - mx;
        let dy = p.y as f64 - my;
        (a + dx * dx, b + dy * dy)
    });
    let sd = ((vx / (nf - 1.0)).sqrt() + (vy / (nf - 1.0)).sqrt()) / 2.0;
    nf.powf(-1.0 / 6.0) * sd
}

pub fn estimate_density(c: &CandidateSet, rule: BandwidthRule) -> Result<DensityModel> {
    if c.is_empty() {
        return Err(Error::NoCandidates("empty candidate set".into()));
    }
    let (bandwidth, fallback) = match rule {
        BandwidthRule::Fixed(h) if h > 0.0 && h.is_finite() => (h, false),
        BandwidthRule::Fixed(h) => return Err(Error::DegenerateBandwidth(h)),
        BandwidthRule::Scott => {
            let h = scott_bandwidth(c);
            if h > 0.0 && h.is_finite() {
                (h, false)
            } else {
                (1.0, true)
            }
        }
    };
    let density = kde_at_candidates(c, bandwidth);
    let total: f64 = density.iter().sum();
    let probability = density.iter().map(|f| f / total).collect();
    Ok(DensityModel {
        candidates: c.clone(),
        rule,
        bandwidth,
        bandwidth_fallback: fallback,
        density,
        probability,
    })
}

/// Evaluates the KDE at each candidate. Pairs further apart than the radius
/// where the kernel falls below `1e-16 / N` of its peak are skipped via a
/// uniform grid; the dropped mass is below 1e-16 relative to each point's own
/// term. Each kernel value is the product of two per-axis entries of a table
/// indexed by integer offset.
fn kde_at_candidates(c: &CandidateSet, h: f64) -> Vec<f64> {
    let n = c.len();
    let nf = n as f64;
    let inv_2h2 = 1.0 / (2.0 * h * h);
    let norm = 1.0 / (nf * h * h * 2.0 * std::f64::consts::PI);
    let cutoff = h * (2.0 * (nf * 1e16).ln()).sqrt();
    let cell = cutoff.max(1.0);
    let key = |x: u32, y: u32| ((x as f64 / cell).floor() as i64, (y as f64 / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in c.points.iter().enumerate() {
        grid.entry(key(p.x, p.y)).or_default().push(i);
    }
    let (min, max) = c.points.iter().fold((u32::MAX, 0u32), |(lo, hi), p| {
        (lo.min(p.x).min(p.y), hi.max(p.x).max(p.y))
    });
    let span = (max - min) as usize;
    let reach = (2.0 * cell).ceil().min(span as f64) as usize;
    let factor: Vec<f64> = (0..=reach).map(|d| (-((d * d) as f64) * inv_2h2).exp()).collect();
    c.points
        .par_iter()
        .map(|p| {
            let (kx, ky) = key(p.x, p.y);
            let mut acc = 0.0;
            for gy in ky - 1..=ky + 1 {
                for gx in kx - 1..=kx + 1 {
                    if let Some(members) = grid.get(&(gx, gy)) {
                        for &j in members {
                            let q = c.points[j];
                            acc += factor[p.x.abs_diff(q.x) as usize] * factor[p.y.abs_diff(q.y) as usize];
                        }
                    }
                }
            }
            acc * norm
        })
        .collect()
}
