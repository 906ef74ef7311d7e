use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DensityModel, PatchPlan, PlannedPatch};
use crate::error::{Error, Result};

/// Consecutive rejections allowed per requested patch before giving up.
pub const DEFAULT_REJECTION_FACTOR: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    WithoutReplacement,
    WithReplacement,
}

/// Fenwick tree over non-negative weights supporting removal and
/// prefix-sum search.
struct WeightTree {
    tree: Vec<f64>,
    weights: Vec<f64>,
    total: f64,
    alive: usize,
}

impl WeightTree {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &w) in weights.iter().enumerate() {
            tree[i + 1] += w;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                let v = tree[i + 1];
                tree[parent] += v;
            }
        }
        Self {
            tree,
            weights: weights.to_vec(),
            total: weights.iter().sum(),
            alive: weights.iter().filter(|&&w| w > 0.0).count(),
        }
    }

    fn remove(&mut self, i: usize) {
        let w = self.weights[i];
        if w == 0.0 {
            return;
        }
        self.weights[i] = 0.0;
        self.total -= w;
        self.alive -= 1;
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] -= w;
            k += k & k.wrapping_neg();
        }
    }

    /// Index of the item whose cumulative-weight interval contains `target`.
    fn find(&self, mut target: f64) -> Option<usize> {
        let n = self.weights.len();
        let mut pos = 0usize;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        // Rounding residue in the tree can land on an exhausted slot.
        let i = pos.min(n - 1);
        if self.weights[i] > 0.0 {
            return Some(i);
        }
        (i..n).chain((0..i).rev()).find(|&j| self.weights[j] > 0.0)
    }
}

/// Draws up to `n_s` candidates with probability proportional to the model's
/// density, rejecting any draw closer than `e_min` to an already accepted one.
pub fn sample_plan(d: &DensityModel, n_s: usize, e_min: f64, seed: u64) -> Result<PatchPlan> {
    sample_plan_with(d, n_s, e_min, seed, SamplingMode::WithoutReplacement, DEFAULT_REJECTION_FACTOR)
}

pub fn sample_plan_with(
    d: &DensityModel,
    n_s: usize,
    e_min: f64,
    seed: u64,
    mode: SamplingMode,
    rejection_factor: usize,
) -> Result<PatchPlan> {
    if n_s == 0 {
        return Err(Error::Invalid("n_s must be >= 1".into()));
    }
    if !(e_min >= 0.0) {
        return Err(Error::Invalid(format!("e_min must be >= 0, got {e_min}")));
    }
    let total: f64 = d.probability.iter().sum();
    if d.probability.is_empty() || !(total > 0.0) || !total.is_finite() {
        return Err(Error::EmptyDensity);
    }
    let pts = &d.candidates.points;
    let mut tree = WeightTree::new(&d.probability);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = rejection_factor.saturating_mul(n_s).max(1);
    let mut accepted: Vec<usize> = Vec::with_capacity(n_s);
    let mut rejections = 0usize;
    while accepted.len() < n_s && tree.alive > 0 {
        let u: f64 = rng.random::<f64>() * tree.total.max(0.0);
        let Some(i) = tree.find(u) else { break };
        if mode == SamplingMode::WithoutReplacement {
            tree.remove(i);
        }
        let ok = accepted.iter().all(|&j| pts[j].distance(&pts[i]) >= e_min);
        if ok {
            accepted.push(i);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections >= budget {
                break;
            }
        }
    }
    let patches = accepted
        .iter()
        .map(|&i| PlannedPatch {
            candidate: i,
            mask_xy: pts[i],
            f: d.density[i],
            p: d.probability[i],
            slide_rect: None,
        })
        .collect::<Vec<_>>();
    Ok(PatchPlan {
        slide_id: String::new(),
        short: patches.len() < n_s,
        patches,
        n_s,
        e_min,
        seed,
        mode,
        level: 0,
        bandwidth: d.bandwidth,
        patch_dims: (d.candidates.patch_w, d.candidates.patch_h),
    })
}
