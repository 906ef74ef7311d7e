use histopatch::retrieval::{EmbeddingStore, RowMeta};
use histopatch::tissue::TissueMask;
use histopatch::Raster;
use image::Rgb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GLASS: [u8; 3] = [242, 240, 245];
pub const STAIN: [u8; 3] = [170, 80, 150];

#[derive(Debug, Clone, Copy)]
pub struct Disc {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Disc {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        let dx = x as f64 + 0.5 - self.cx;
        let dy = y as f64 + 0.5 - self.cy;
        dx * dx + dy * dy <= self.r * self.r
    }
}

/// Ground-truth tissue indicator for a set of discs.
pub fn disc_truth(w: u32, h: u32, discs: &[Disc]) -> TissueMask {
    TissueMask::from_fn(w, h, |x, y| discs.iter().any(|d| d.contains(x, y)))
}

/// H&E-like raster: stained discs on glass, with mild per-pixel noise that
/// never pushes a pixel across the glass/stain gap.
pub fn disc_slide(w: u32, h: u32, discs: &[Disc], seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Raster::from_fn(w, h, |x, y| {
        let base = if discs.iter().any(|d| d.contains(x, y)) { STAIN } else { GLASS };
        let j: i16 = rng.random_range(-6..=6);
        Rgb(base.map(|c| (c as i16 + j).clamp(0, 255) as u8))
    })
}

pub fn random_discs(w: u32, h: u32, count: usize, r: (f64, f64), seed: u64) -> Vec<Disc> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = rng.random_range(r.0..r.1);
            Disc {
                cx: rng.random_range(r..(w as f64 - r).max(r + 1.0)),
                cy: rng.random_range(r..(h as f64 - r).max(r + 1.0)),
                r,
            }
        })
        .collect()
}

/// Random binary mask: filled random rectangles and discs over noise.
pub fn random_mask(w: u32, h: u32, seed: u64, density: f64) -> TissueMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = vec![0u8; (w * h) as usize];
    for b in bits.iter_mut() {
        *b = rng.random_bool(density) as u8;
    }
    let shapes = rng.random_range(0..4);
    for _ in 0..shapes {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (x1, y1) = ((x0 + rng.random_range(1..=w)).min(w), (y0 + rng.random_range(1..=h)).min(h));
        let fill = rng.random_bool(0.7) as u8;
        for y in y0..y1 {
            for x in x0..x1 {
                bits[(y * w + x) as usize] = fill;
            }
        }
    }
    TissueMask { width: w, height: h, bits, threshold_used: 0 }
}

pub fn noise_raster(w: u32, h: u32, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Raster::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
}

/// Store with `slides` slides of `rows_per_slide` rows each; labels are per
/// slide, patients group consecutive pairs of slides when `patients` is set.
pub fn random_store(
    slides: usize,
    rows_per_slide: usize,
    dim: usize,
    classes: usize,
    patients: bool,
    seed: u64,
) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..classes).map(|c| format!("class{c}")).collect();
    let mut s = EmbeddingStore::new(dim, labels);
    for sl in 0..slides {
        let label = rng.random_range(0..classes);
        for r in 0..rows_per_slide {
            // Coarse grid values make exact distance ties likely.
            let row: Vec<f32> = (0..dim).map(|_| rng.random_range(-3i32..=3) as f32 * 0.5).collect();
            s.push(
                &row,
                RowMeta {
                    slide_id: format!("slide{sl:03}"),
                    x: r as u32,
                    y: 0,
                    label,
                    patient_id: patients.then(|| format!("p{}", sl / 2)),
                },
            )
            .unwrap();
        }
    }
    s
}

/// Two Gaussian blobs separated by a wide margin along the first axis.
pub fn separable_blobs(n_per_class: usize, dim: usize, seed: u64) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0f32, 1.0).unwrap();
    let mut s = EmbeddingStore::new(dim, vec!["A".into(), "B".into()]);
    for i in 0..2 * n_per_class {
        let label = i % 2;
        let mut row: Vec<f32> = (0..dim).map(|_| rng.sample(normal)).collect();
        row[0] = row[0].clamp(-2.0, 2.0) + if label == 0 { -8.0 } else { 8.0 };
        s.push(&row, RowMeta { slide_id: format!("s{i}"), x: 0, y: 0, label, patient_id: None }).unwrap();
    }
    s
}
