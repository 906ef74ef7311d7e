//! Rotation-agnostic multi-crop augmentation.
//!
//! Each crop is produced by: random-resized square crop → rotation → crop to
//! the largest axis-aligned square inside the rotated content → resize.
//! Quarter-turn rotations are lossless pixel permutations; arbitrary angles
//! are resampled and never show pixels from outside the source.
//!
//! Angles are counter-clockwise in degrees.

use image::imageops::{self, FilterType};
use image::Rgb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::Raster;

/// Smallest side a continuous rotation may produce.
pub const MIN_ROTATED_SIDE: u32 = 8;
/// Smallest source side accepted by [`make_crop_set`].
pub const MIN_SOURCE_SIDE: u32 = 64;
/// Source side at which global crops switch to continuous rotation.
pub const CONTINUOUS_GLOBAL_SIDE: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExactAngle {
    D90,
    D180,
    D270,
    D360,
}

impl ExactAngle {
    pub const ALL: [ExactAngle; 4] = [ExactAngle::D90, ExactAngle::D180, ExactAngle::D270, ExactAngle::D360];

    pub fn degrees(self) -> f64 {
        match self {
            ExactAngle::D90 => 90.0,
            ExactAngle::D180 => 180.0,
            ExactAngle::D270 => 270.0,
            ExactAngle::D360 => 360.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    #[default]
    Bilinear,
}

/// Lossless counter-clockwise quarter-turn rotation.
pub fn rotate_exact(img: &Raster, angle: ExactAngle) -> Raster {
    match angle {
        ExactAngle::D90 => imageops::rotate270(img),
        ExactAngle::D180 => imageops::rotate180(img),
        ExactAngle::D270 => imageops::rotate90(img),
        ExactAngle::D360 => img.clone(),
    }
}

/// Side of the largest axis-aligned square inside a `side`-square rotated by `theta_deg`.
pub fn inscribed_side(side: u32, theta_deg: f64) -> u32 {
    let t = theta_deg.rem_euclid(90.0).to_radians();
    let denom = t.sin().abs() + t.cos().abs();
    ((side as f64 / denom) + 1e-9).floor() as u32
}

/// Rotates a square raster about its centre and returns the inscribed square.
pub fn rotate_continuous(img: &Raster, theta_deg: f64, interp: Interpolation) -> Result<Raster> {
    rotate_continuous_with_fill(img, theta_deg, interp, Rgb([0, 0, 0]))
}

/// As [`rotate_continuous`], painting `fill` wherever a sample would fall
/// outside the source. With the inscribed-square output no sample falls
/// outside.
pub fn rotate_continuous_with_fill(img: &Raster, theta_deg: f64, interp: Interpolation, fill: Rgb<u8>) -> Result<Raster> {
    let (w, h) = img.dimensions();
    if w != h {
        return Err(Error::ShapeMismatch(format!("continuous rotation needs a square raster, got {w}x{h}")));
    }
    let side = inscribed_side(w, theta_deg);
    if side < MIN_ROTATED_SIDE {
        return Err(Error::DegenerateOutput(side));
    }
    let t = theta_deg.to_radians();
    let (sin, cos) = t.sin_cos();
    let c_in = w as f64 / 2.0;
    let c_out = side as f64 / 2.0;
    let mut out = Raster::new(side, side);
    for oy in 0..side {
        for ox in 0..side {
            let u = ox as f64 + 0.5 - c_out;
            let v = oy as f64 + 0.5 - c_out;
            // Inverse map of a counter-clockwise rotation in row-down coordinates.
            let sx = u * cos - v * sin + c_in;
            let sy = u * sin + v * cos + c_in;
            let px = if sx < 0.0 || sy < 0.0 || sx > w as f64 || sy > h as f64 {
                fill
            } else {
                match interp {
                    Interpolation::Nearest => {
                        let ix = (sx.floor() as u32).min(w - 1);
                        let iy = (sy.floor() as u32).min(h - 1);
                        *img.get_pixel(ix, iy)
                    }
                    Interpolation::Bilinear => bilinear(img, sx - 0.5, sy - 0.5),
                }
            };
            out.put_pixel(ox, oy, px);
        }
    }
    Ok(out)
}

fn bilinear(img: &Raster, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = img.dimensions();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as u32;
    let y0 = y.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p00 = img.get_pixel(x0, y0).0;
    let p10 = img.get_pixel(x1, y0).0;
    let p01 = img.get_pixel(x0, y1).0;
    let p11 = img.get_pixel(x1, y1).0;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropKind {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub kind: CropKind,
    /// Fraction of the source area covered by the first crop.
    pub scale: (f64, f64),
    pub output_size: u32,
}

impl CropSpec {
    pub fn global(output_size: u32) -> Self {
        Self {
            kind: CropKind::Global,
            scale: (0.4, 1.0),
            output_size,
        }
    }

    pub fn local(output_size: u32) -> Self {
        Self {
            kind: CropKind::Local,
            scale: (0.05, 0.4),
            output_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    Continuous,
    Discrete,
}

/// How global crops pick their rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalRotation {
    /// Continuous for 1024-px sources, discrete otherwise.
    #[default]
    Auto,
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSetConfig {
    pub n_local: usize,
    pub global: CropSpec,
    pub local: CropSpec,
    pub global_rotation: GlobalRotation,
    pub angles: Vec<ExactAngle>,
    pub interpolation: Interpolation,
}

impl Default for CropSetConfig {
    fn default() -> Self {
        Self {
            n_local: 8,
            global: CropSpec::global(224),
            local: CropSpec::local(96),
            global_rotation: GlobalRotation::Auto,
            angles: ExactAngle::ALL.to_vec(),
            interpolation: Interpolation::Bilinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropProvenance {
    pub kind: CropKind,
    pub rotation: RotationMode,
    pub theta: f64,
    /// Area of the first crop over the source area.
    pub scale: f64,
    pub crop_rect: Rect,
    /// Side after the post-rotation crop, before resizing.
    pub rotated_side: u32,
    pub output_size: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropSet {
    pub source_id: String,
    pub crops: Vec<Raster>,
    pub provenance: Vec<CropProvenance>,
}

impl CropSet {
    pub fn globals(&self) -> impl Iterator<Item = (&Raster, &CropProvenance)> {
        self.crops.iter().zip(&self.provenance).filter(|(_, p)| p.kind == CropKind::Global)
    }

    pub fn locals(&self) -> impl Iterator<Item = (&Raster, &CropProvenance)> {
        self.crops.iter().zip(&self.provenance).filter(|(_, p)| p.kind == CropKind::Local)
    }
}

fn crop_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 step over (seed, index).
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn make_crop(
    img: &Raster,
    spec: &CropSpec,
    rotation: RotationMode,
    angles: &[ExactAngle],
    interp: Interpolation,
    seed: u64,
) -> Result<(Raster, CropProvenance)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = img.dimensions();
    let area = w as f64 * h as f64;
    let (lo, hi) = spec.scale;
    let min_side = (lo * area).sqrt().ceil() as u32;
    let max_side = ((hi * area).sqrt().floor() as u32).min(w.min(h));
    if min_side > max_side || min_side == 0 {
        return Err(Error::ImageTooSmall { side: w.min(h), min: min_side });
    }
    let s: f64 = rng.random_range(lo..hi);
    let side = ((s * area).sqrt().round() as u32).clamp(min_side, max_side);
    let x = rng.random_range(0..=w - side);
    let y = rng.random_range(0..=h - side);
    let crop = imageops::crop_imm(img, x, y, side, side).to_image();
    let (rotated, theta) = match rotation {
        RotationMode::Discrete => {
            let a = angles[rng.random_range(0..angles.len())];
            (rotate_exact(&crop, a), a.degrees())
        }
        RotationMode::Continuous => {
            let theta: f64 = rng.random_range(0.0..360.0);
            (rotate_continuous(&crop, theta, interp)?, theta)
        }
    };
    let filter = match interp {
        Interpolation::Nearest => FilterType::Nearest,
        Interpolation::Bilinear => FilterType::Triangle,
    };
    let rotated_side = rotated.width();
    let out = if rotated_side == spec.output_size {
        rotated
    } else {
        imageops::resize(&rotated, spec.output_size, spec.output_size, filter)
    };
    Ok((
        out,
        CropProvenance {
            kind: spec.kind,
            rotation,
            theta,
            scale: (side as f64 * side as f64) / area,
            crop_rect: Rect::new(x, y, side, side),
            rotated_side,
            output_size: spec.output_size,
            seed,
        },
    ))
}

/// Two global crops followed by `n_local` local crops. Local crops always use
/// continuous rotation; global crops use continuous rotation for 1024-px
/// sources and discrete quarter turns otherwise, unless overridden.
pub fn make_crop_set(source_id: &str, img: &Raster, cfg: &CropSetConfig, seed: u64) -> Result<CropSet> {
    let side = img.width().min(img.height());
    if side < MIN_SOURCE_SIDE {
        return Err(Error::ImageTooSmall { side, min: MIN_SOURCE_SIDE });
    }
    if cfg.angles.is_empty() {
        return Err(Error::Invalid("discrete angle set is empty".into()));
    }
    let global_rotation = match cfg.global_rotation {
        GlobalRotation::Continuous => RotationMode::Continuous,
        GlobalRotation::Discrete => RotationMode::Discrete,
        GlobalRotation::Auto if img.width() == CONTINUOUS_GLOBAL_SIDE => RotationMode::Continuous,
        GlobalRotation::Auto => RotationMode::Discrete,
    };
    let mut crops = Vec::with_capacity(2 + cfg.n_local);
    let mut provenance = Vec::with_capacity(2 + cfg.n_local);
    for i in 0..2 + cfg.n_local {
        let (spec, mode) = if i < 2 {
            (&cfg.global, global_rotation)
        } else {
            (&cfg.local, RotationMode::Continuous)
        };
        let (c, p) = make_crop(img, spec, mode, &cfg.angles, cfg.interpolation, crop_seed(seed, i as u64))?;
        crops.push(c);
        provenance.push(p);
    }
    Ok(CropSet {
        source_id: source_id.to_string(),
        crops,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(side: u32, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(side, side, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
    }

    #[test]
    fn quarter_turn_is_counter_clockwise() {
        let img = Raster::from_raw(2, 2, vec![1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]).unwrap();
        let r = rotate_exact(&img, ExactAngle::D90);
        let vals: Vec<u8> = r.pixels().map(|p| p.0[0]).collect();
        // [[a,b],[c,d]] -> [[b,d],[a,c]]
        assert_eq!(vals, vec![2, 4, 1, 3]);
    }

    #[test]
    fn full_turn_and_half_turn_involution() {
        let img = noise(17, 1);
        assert_eq!(rotate_exact(&img, ExactAngle::D360), img);
        let twice = rotate_exact(&rotate_exact(&img, ExactAngle::D180), ExactAngle::D180);
        assert_eq!(twice, img);
    }

    #[test]
    fn rectangular_quarter_turn_swaps_dims() {
        let img = Raster::new(5, 3);
        assert_eq!(rotate_exact(&img, ExactAngle::D90).dimensions(), (3, 5));
    }

    #[test]
    fn zero_angle_is_identity() {
        let img = noise(32, 2);
        assert_eq!(rotate_continuous(&img, 0.0, Interpolation::Nearest).unwrap(), img);
        assert_eq!(rotate_continuous(&img, 0.0, Interpolation::Bilinear).unwrap(), img);
    }

    #[test]
    fn forty_five_degrees_side() {
        let img = noise(224, 3);
        assert_eq!(rotate_continuous(&img, 45.0, Interpolation::Bilinear).unwrap().width(), 158);
    }

    #[test]
    fn tiny_output_is_degenerate() {
        let img = noise(10, 4);
        assert!(matches!(rotate_continuous(&img, 45.0, Interpolation::Nearest), Err(Error::DegenerateOutput(7))));
    }

    #[test]
    fn small_source_rejected() {
        let img = noise(63, 5);
        assert!(matches!(
            make_crop_set("x", &img, &CropSetConfig::default(), 1),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn branch_on_source_size() {
        let cfg = CropSetConfig::default();
        let small = make_crop_set("s", &noise(512, 6), &cfg, 9).unwrap();
        assert_eq!(small.crops.len(), 10);
        assert!(small.globals().all(|(_, p)| p.rotation == RotationMode::Discrete && p.theta % 90.0 == 0.0));
        assert!(small.locals().all(|(_, p)| p.rotation == RotationMode::Continuous));
        let big = make_crop_set("b", &noise(1024, 7), &cfg, 9).unwrap();
        assert!(big.globals().all(|(_, p)| p.rotation == RotationMode::Continuous));
    }
}
