use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::tissue::{ContourSet, MaskIntegral, TissueMask};

/// Potential patch locations (top-left corners, mask space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub points: Vec<Point>,
    /// Index into `boxes` of the bounding box each point came from.
    pub sources: Vec<usize>,
    pub boxes: Vec<Rect>,
    pub patch_w: u32,
    pub patch_h: u32,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Builds a set directly from points, e.g. for externally supplied coordinates.
    pub fn from_points(points: Vec<Point>, patch_w: u32, patch_h: u32) -> Self {
        let n = points.len();
        Self {
            points,
            sources: vec![0; n],
            boxes: Vec::new(),
            patch_w,
            patch_h,
        }
    }

    pub fn patch_rect(&self, i: usize) -> Rect {
        let p = self.points[i];
        Rect::new(p.x, p.y, self.patch_w, self.patch_h)
    }
}

/// Every stride-grid location `(x, y)` with `x in [R.x, R.x + R.w - r_w]` and
/// `y in [R.y, R.y + R.h - r_h]` over all contour boxes, keeping those whose
/// patch covers at least `coverage_min` tissue. Points are deduplicated and
/// returned in row-major order.
pub fn build_candidates(
    cs: &ContourSet,
    patch_dims: (u32, u32),
    stride: u32,
    mask: &TissueMask,
    coverage_min: f64,
) -> Result<CandidateSet> {
    let (rw, rh) = patch_dims;
    if rw == 0 || rh == 0 {
        return Err(Error::Invalid("patch dimensions must be positive".into()));
    }
    if stride == 0 {
        return Err(Error::Invalid("stride must be >= 1".into()));
    }
    let boxes: Vec<Rect> = cs.boxes().collect();
    let integral = (coverage_min > 0.0).then(|| MaskIntegral::new(mask));
    let mut found: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut fitting = 0usize;
    for (bi, b) in boxes.iter().enumerate() {
        if b.w < rw || b.h < rh {
            continue;
        }
        fitting += 1;
        let mut y = b.y;
        while y <= b.y + b.h - rh {
            let mut x = b.x;
            while x <= b.x + b.w - rw {
                let keep = match &integral {
                    None => true,
                    Some(ii) => {
                        let r = Rect::new(x, y, rw, rh);
                        r.right() <= mask.width && r.bottom() <= mask.height && ii.ratio(r) >= coverage_min
                    }
                };
                if keep {
                    found.entry((y, x)).or_insert(bi);
                }
                x += stride;
            }
            y += stride;
        }
    }
    if fitting == 0 {
        return Err(Error::NoCandidates(format!("no bounding box fits a {rw}x{rh} patch")));
    }
    if found.is_empty() {
        return Err(Error::NoCandidates(format!("no location reaches tissue coverage {coverage_min}")));
    }
    let (points, sources) = found.into_iter().map(|((y, x), s)| (Point::new(x, y), s)).unzip();
    Ok(CandidateSet {
        points,
        sources,
        boxes,
        patch_w: rw,
        patch_h: rh,
    })
}
