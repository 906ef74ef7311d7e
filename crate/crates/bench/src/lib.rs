//! Synthetic inputs shared by the benchmarks.

use histopatch::fps::CandidateSet;
use histopatch::geometry::Point;
use histopatch::retrieval::{EmbeddingStore, RowMeta};
use histopatch::Raster;
use image::Rgb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stained discs on a glass background.
pub fn tissue_slide(w: u32, h: u32, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let discs: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let r = rng.random_range(0.08..0.2) * w.min(h) as f64;
            (rng.random_range(r..w as f64 - r), rng.random_range(r..h as f64 - r), r)
        })
        .collect();
    Raster::from_fn(w, h, |x, y| {
        let inside = discs.iter().any(|&(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r);
        if inside {
            Rgb([170, 90, 160])
        } else {
            Rgb([238, 236, 240])
        }
    })
}

pub fn noise_raster(side: u32, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Raster::from_fn(side, side, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
}

/// `n` distinct candidate points on a stride-2 lattice.
pub fn lattice_candidates(n: usize) -> CandidateSet {
    let side = (n as f64).sqrt().ceil() as u32;
    let points = (0..n as u32).map(|i| Point::new(2 * (i % side), 2 * (i / side))).collect();
    CandidateSet::from_points(points, 8, 8)
}

/// `slides * rows` random embeddings with two labels.
pub fn random_store(slides: usize, rows: usize, dim: usize, seed: u64) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = EmbeddingStore::new(dim, vec!["A".into(), "B".into()]);
    for sl in 0..slides {
        for r in 0..rows {
            let row: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let meta = RowMeta {
                slide_id: format!("s{sl}"),
                x: r as u32,
                y: 0,
                label: sl % 2,
                patient_id: None,
            };
            s.push(&row, meta).expect("valid row");
        }
    }
    s
}
