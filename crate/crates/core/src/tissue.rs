//! Tissue masking and contour extraction.
//!
//! Tissue is darker than the glass background: a pixel is tissue when its
//! rounded luma is strictly below the threshold. Contours are the outer
//! borders of 8-connected tissue components, traced with Suzuki–Abe border
//! following.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::Raster;

/// Minimum polygon area (mask pixels) for a contour to be kept.
pub const DEFAULT_MIN_CONTOUR_AREA: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    Otsu,
    Fixed(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TissueMask {
    pub width: u32,
    pub height: u32,
    /// Row-major, one byte per pixel, values in {0, 1}.
    pub bits: Vec<u8>,
    pub threshold_used: u8,
}

impl TissueMask {
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y) as u8);
            }
        }
        Self {
            width,
            height,
            bits,
            threshold_used: 0,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize] != 0
    }

    pub fn tissue_pixels(&self) -> u64 {
        self.bits.iter().map(|&b| b as u64).sum()
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    /// Writes the mask as a binary PBM (P4); tissue pixels are black.
    pub fn write_pbm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P4\n{} {}\n", self.width, self.height)?;
        let stride = self.width.div_ceil(8) as usize;
        let mut row = vec![0u8; stride];
        for y in 0..self.height {
            row.fill(0);
            for x in 0..self.width {
                if self.get(x, y) {
                    row[(x / 8) as usize] |= 0x80 >> (x % 8);
                }
            }
            w.write_all(&row)?;
        }
        Ok(())
    }
}

/// ITU-R BT.601 luma, rounded to the nearest integer.
#[inline]
pub fn luma(p: [u8; 3]) -> u8 {
    ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8
}

/// Otsu's threshold on a 256-bin histogram. Returns the value `t` such that
/// the dark class is `luma < t`; 0 when the histogram has a single occupied bin.
pub fn otsu_threshold(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0;
    }
    let total_f = total as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut best: Option<(usize, f64)> = None;
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total_f - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t, between));
        }
    }
    match best {
        Some((t, _)) => (t + 1).min(255) as u8,
        None => 0,
    }
}

pub fn make_mask(thumbnail: &Raster, method: ThresholdMethod) -> Result<TissueMask> {
    let (w, h) = thumbnail.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let lumas: Vec<u8> = thumbnail.pixels().map(|p| luma(p.0)).collect();
    let threshold = match method {
        ThresholdMethod::Fixed(t) => t,
        ThresholdMethod::Otsu => {
            let mut hist = [0u64; 256];
            for &l in &lumas {
                hist[l as usize] += 1;
            }
            otsu_threshold(&hist)
        }
    };
    Ok(TissueMask {
        width: w,
        height: h,
        bits: lumas.iter().map(|&l| (l < threshold) as u8).collect(),
        threshold_used: threshold,
    })
}

/// Fraction of tissue pixels inside `rect`.
pub fn tissue_ratio(m: &TissueMask, rect: Rect) -> Result<f64> {
    if rect.area() == 0 {
        return Err(Error::ZeroArea);
    }
    if rect.right() > m.width || rect.bottom() > m.height {
        return Err(Error::Invalid(format!("rect {:?} exceeds mask {}x{}", rect, m.width, m.height)));
    }
    let mut count = 0u64;
    for y in rect.y..rect.bottom() {
        let row = &m.bits[(y * m.width + rect.x) as usize..(y * m.width + rect.right()) as usize];
        count += row.iter().map(|&b| b as u64).sum::<u64>();
    }
    Ok(count as f64 / rect.area() as f64)
}

/// Summed-area table over a mask for O(1) rectangle counts.
pub struct MaskIntegral {
    width: usize,
    sums: Vec<u64>,
}

impl MaskIntegral {
    pub fn new(m: &TissueMask) -> Self {
        let w = m.width as usize + 1;
        let h = m.height as usize + 1;
        let mut sums = vec![0u64; w * h];
        for y in 1..h {
            let mut row = 0u64;
            for x in 1..w {
                row += m.bits[(y - 1) * m.width as usize + (x - 1)] as u64;
                sums[y * w + x] = sums[(y - 1) * w + x] + row;
            }
        }
        Self { width: w, sums }
    }

    pub fn count(&self, r: Rect) -> u64 {
        let (x0, y0) = (r.x as usize, r.y as usize);
        let (x1, y1) = (r.right() as usize, r.bottom() as usize);
        let w = self.width;
        self.sums[y1 * w + x1] + self.sums[y0 * w + x0] - self.sums[y0 * w + x1] - self.sums[y1 * w + x0]
    }

    pub fn ratio(&self, r: Rect) -> f64 {
        self.count(r) as f64 / r.area() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    /// Border pixels in tracing order.
    pub points: Vec<Point>,
    pub bbox: Rect,
}

impl Contour {
    fn from_points(points: Vec<Point>) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for p in &points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        Self {
            bbox: Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
            points,
        }
    }

    /// Shoelace area of the closed polygon through the border pixel centres.
    pub fn area(&self) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0i64;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            acc += a.x as i64 * b.y as i64 - b.x as i64 * a.y as i64;
        }
        (acc as f64 / 2.0).abs()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContourSet {
    pub contours: Vec<Contour>,
}

impl ContourSet {
    pub fn len(&self) -> usize {
        self.contours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contours.is_empty()
    }

    pub fn boxes(&self) -> impl Iterator<Item = Rect> + '_ {
        self.contours.iter().map(|c| c.bbox)
    }

    /// One JSON object per line: `{slide_id, contour_index, bbox, points}`.
    pub fn write_jsonl<W: Write>(&self, slide_id: &str, mut w: W) -> Result<()> {
        for (i, c) in self.contours.iter().enumerate() {
            let points: Vec<[u32; 2]> = c.points.iter().map(|p| [p.x, p.y]).collect();
            let line = serde_json::json!({
                "slide_id": slide_id,
                "contour_index": i,
                "bbox": c.bbox,
                "points": points,
            });
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

// Neighbour offsets (drow, dcol) in counter-clockwise order starting east.
const DIRS: [(isize, isize); 8] = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)];

fn dir_between(from: (usize, usize), to: (usize, usize)) -> usize {
    let d = (to.0 as isize - from.0 as isize, to.1 as isize - from.1 as isize);
    DIRS.iter().position(|&o| o == d).expect("pixels are 8-adjacent")
}

#[inline]
fn step(p: (usize, usize), d: usize) -> (usize, usize) {
    ((p.0 as isize + DIRS[d].0) as usize, (p.1 as isize + DIRS[d].1) as usize)
}

/// Outer borders of every 8-connected component, unfiltered, in raster-scan
/// order of their starting pixel.
pub fn trace_outer_borders(m: &TissueMask) -> Vec<Contour> {
    let w = m.width as usize + 2;
    let h = m.height as usize + 2;
    let mut f = vec![0i32; w * h];
    for y in 0..m.height as usize {
        for x in 0..m.width as usize {
            f[(y + 1) * w + x + 1] = m.bits[y * m.width as usize + x] as i32;
        }
    }
    let at = |f: &[i32], p: (usize, usize)| f[p.0 * w + p.1];
    let mut nbd = 1i32;
    let mut out = Vec::new();
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            let v = f[i * w + j];
            if v == 0 {
                continue;
            }
            let start;
            let outer;
            if v == 1 && f[i * w + j - 1] == 0 {
                outer = true;
                start = (i, j - 1);
            } else if v >= 1 && f[i * w + j + 1] == 0 {
                outer = false;
                start = (i, j + 1);
            } else {
                continue;
            }
            nbd += 1;
            let origin = (i, j);
            let mut points = vec![origin];

            // Clockwise search from `start` for the first non-zero neighbour.
            let d0 = dir_between(origin, start);
            let first = (0..8).map(|k| (d0 + 8 - k) % 8).map(|d| step(origin, d)).find(|&p| at(&f, p) != 0);
            match first {
                None => {
                    f[i * w + j] = -nbd;
                }
                Some(p1) => {
                    let mut prev = p1;
                    let mut cur = origin;
                    loop {
                        let dp = dir_between(cur, prev);
                        let mut east_zero = false;
                        let mut next = cur;
                        for k in 1..=8 {
                            let d = (dp + k) % 8;
                            let q = step(cur, d);
                            if at(&f, q) != 0 {
                                next = q;
                                break;
                            }
                            if d == 0 {
                                east_zero = true;
                            }
                        }
                        let idx = cur.0 * w + cur.1;
                        if east_zero {
                            f[idx] = -nbd;
                        } else if f[idx] == 1 {
                            f[idx] = nbd;
                        }
                        if next == origin && cur == p1 {
                            break;
                        }
                        prev = cur;
                        cur = next;
                        if outer {
                            points.push(cur);
                        }
                    }
                }
            }
            if outer {
                // Tracing ends by revisiting the origin; drop the duplicate.
                if points.len() > 1 && points.last() == Some(&origin) {
                    points.pop();
                }
                let pts = points.into_iter().map(|(r, c)| Point::new((c - 1) as u32, (r - 1) as u32)).collect();
                out.push(Contour::from_points(pts));
            }
        }
    }
    out
}

/// Outer tissue contours with fewer than 4 points or a polygon area below
/// `min_area` discarded.
pub fn find_contours_with(m: &TissueMask, min_area: f64) -> ContourSet {
    ContourSet {
        contours: trace_outer_borders(m)
            .into_iter()
            .filter(|c| c.points.len() >= 4 && c.area() >= min_area)
            .collect(),
    }
}

pub fn find_contours(m: &TissueMask) -> ContourSet {
    find_contours_with(m, DEFAULT_MIN_CONTOUR_AREA)
}
