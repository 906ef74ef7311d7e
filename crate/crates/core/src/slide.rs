//! Slide access.
//!
//! A slide is either a plain raster (PNG or single-image TIFF), held in memory,
//! or a multi-level TIFF pyramid whose levels are read chunk by chunk on demand.
//! Every slide exposes exactly one thumbnail level; that level defines the mask
//! space in which tissue detection and patch selection operate.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::imageops;
use serde::{Deserialize, Serialize};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::TiffEncoder;
use tiff::tags::Tag;
use tiff::ColorType;

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::Raster;

pub const DEFAULT_THUMB_SIZE: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlideOptions {
    /// Target maximum dimension of the thumbnail level.
    pub thumb_size: u32,
}

impl Default for SlideOptions {
    fn default() -> Self {
        Self {
            thumb_size: DEFAULT_THUMB_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub downsample: f64,
    pub width: u32,
    pub height: u32,
}

impl Level {
    fn max_dim(&self) -> u32 {
        self.width.max(self.height)
    }
}

#[derive(Debug, Clone)]
enum LevelStore {
    Memory(Arc<Raster>),
    Tiff { ifd: usize },
}

/// An opened slide. Immutable; `read_region` may be called from many threads.
#[derive(Debug, Clone)]
pub struct SlideSource {
    pub slide_id: String,
    pub width: u32,
    pub height: u32,
    pub levels: Vec<Level>,
    pub thumbnail_level: usize,
    path: PathBuf,
    stores: Vec<LevelStore>,
}

/// Region request. `x`/`y` are level-0 (slide space) coordinates of the
/// top-left corner, `width`/`height` are in pixels of the requested level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionRequest {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub level: usize,
}

impl SlideSource {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn thumbnail_dims(&self) -> (u32, u32) {
        let l = &self.levels[self.thumbnail_level];
        (l.width, l.height)
    }

    /// The full thumbnail raster.
    pub fn thumbnail(&self) -> Result<Raster> {
        let (w, h) = self.thumbnail_dims();
        read_region(
            self,
            &RegionRequest {
                x: 0,
                y: 0,
                width: w,
                height: h,
                level: self.thumbnail_level,
            },
        )
    }

    /// Builds a slide from an in-memory raster (treated like a single-image file).
    pub fn from_raster(slide_id: impl Into<String>, raster: Raster, opts: &SlideOptions) -> Result<Self> {
        if raster.width() == 0 || raster.height() == 0 {
            return Err(Error::EmptyImage);
        }
        let full = Arc::new(raster);
        let mut slide = SlideSource {
            slide_id: slide_id.into(),
            width: full.width(),
            height: full.height(),
            levels: vec![Level {
                downsample: 1.0,
                width: full.width(),
                height: full.height(),
            }],
            thumbnail_level: 0,
            path: PathBuf::new(),
            stores: vec![LevelStore::Memory(full)],
        };
        slide.add_synthetic_thumbnail(0, opts.thumb_size)?;
        Ok(slide)
    }

    /// Appends a box-filtered thumbnail level derived from `base` if the base
    /// is larger than the target, otherwise uses `base` itself.
    fn add_synthetic_thumbnail(&mut self, base: usize, target: u32) -> Result<()> {
        let level = self.levels[base];
        let target = target.max(1);
        if level.max_dim() <= target {
            self.thumbnail_level = base;
            return Ok(());
        }
        let extra = level.max_dim() as f64 / target as f64;
        let tw = ((level.width as f64 / extra).round() as u32).max(1);
        let th = ((level.height as f64 / extra).round() as u32).max(1);
        let src = read_region(
            self,
            &RegionRequest {
                x: 0,
                y: 0,
                width: level.width,
                height: level.height,
                level: base,
            },
        )?;
        let thumb = imageops::thumbnail(&src, tw, th);
        self.levels.push(Level {
            downsample: level.downsample * extra,
            width: tw,
            height: th,
        });
        self.stores.push(LevelStore::Memory(Arc::new(thumb)));
        self.thumbnail_level = self.levels.len() - 1;
        Ok(())
    }
}

fn corrupt(path: &Path, reason: impl ToString) -> Error {
    Error::CorruptImage {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
        .unwrap_or(false)
}

pub fn is_supported_path(path: &Path) -> bool {
    has_extension(path, &["png", "tif", "tiff"])
}

/// Opens a PNG, single-image TIFF or multi-level TIFF.
pub fn open_slide(path: &Path, opts: &SlideOptions) -> Result<SlideSource> {
    let slide_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("slide")
        .to_string();
    let mut magic = [0u8; 8];
    let mut f = File::open(path)?;
    let n = read_up_to(&mut f, &mut magic)?;
    if n == 0 {
        return Err(corrupt(path, "empty file"));
    }
    let head = &magic[..n];
    if head.starts_with(b"\x89PNG") {
        let img = image::ImageReader::with_format(BufReader::new(File::open(path)?), image::ImageFormat::Png)
            .decode()
            .map_err(|e| corrupt(path, e))?;
        let mut s = SlideSource::from_raster(slide_id, img.to_rgb8(), opts)?;
        s.path = path.to_path_buf();
        return Ok(s);
    }
    if head.starts_with(b"II*\0") || head.starts_with(b"MM\0*") || head.starts_with(b"II+\0") || head.starts_with(b"MM\0+") {
        return open_tiff(path, slide_id, opts);
    }
    if is_supported_path(path) {
        Err(corrupt(path, "unrecognised file signature"))
    } else {
        Err(Error::UnsupportedFormat(path.display().to_string()))
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

fn supported_color(c: ColorType) -> bool {
    matches!(c, ColorType::RGB(8) | ColorType::RGBA(8) | ColorType::Gray(8))
}

fn open_tiff(path: &Path, slide_id: String, opts: &SlideOptions) -> Result<SlideSource> {
    let mut dec = Decoder::new(BufReader::new(File::open(path)?)).map_err(|e| corrupt(path, e))?;
    let mut found: Vec<(usize, u32, u32)> = Vec::new();
    let mut ifd = 0usize;
    loop {
        let (w, h) = dec.dimensions().map_err(|e| corrupt(path, e))?;
        let color = dec.colortype().map_err(|e| corrupt(path, e))?;
        if supported_color(color) && w > 0 && h > 0 {
            found.push((ifd, w, h));
        }
        if !dec.more_images() {
            break;
        }
        dec.next_image().map_err(|e| corrupt(path, e))?;
        ifd += 1;
    }
    if found.is_empty() {
        return Err(Error::UnsupportedFormat(format!(
            "{}: no 8-bit RGB/RGBA/gray image directory",
            path.display()
        )));
    }
    found.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let (_, w0, h0) = found[0];
    let mut levels = Vec::new();
    let mut stores = Vec::new();
    for &(ifd, w, h) in &found {
        let dx = w0 as f64 / w as f64;
        let dy = h0 as f64 / h as f64;
        // Associated images (label, macro) do not share the slide's aspect ratio.
        if ((dx - dy) / dx).abs() > 0.05 {
            continue;
        }
        if levels.iter().any(|l: &Level| l.width == w) {
            continue;
        }
        levels.push(Level {
            downsample: dx,
            width: w,
            height: h,
        });
        stores.push(LevelStore::Tiff { ifd });
    }
    let mut slide = SlideSource {
        slide_id,
        width: w0,
        height: h0,
        levels,
        thumbnail_level: 0,
        path: path.to_path_buf(),
        stores,
    };
    choose_thumbnail(&mut slide, opts.thumb_size)?;
    Ok(slide)
}

/// Pyramid rule: the level whose max dimension is nearest the target without
/// exceeding 4x the target. Single-level slides, or pyramids with no such
/// level, get a synthetic thumbnail derived from their smallest level.
fn choose_thumbnail(slide: &mut SlideSource, target: u32) -> Result<()> {
    let smallest = (0..slide.levels.len())
        .min_by_key(|&i| slide.levels[i].max_dim())
        .expect("at least one level");
    if slide.levels.len() > 1 {
        let limit = 4 * target as u64;
        let best = (0..slide.levels.len())
            .filter(|&i| slide.levels[i].max_dim() as u64 <= limit)
            .min_by_key(|&i| (slide.levels[i].max_dim() as i64 - target as i64).abs());
        if let Some(i) = best {
            slide.thumbnail_level = i;
            return Ok(());
        }
    }
    slide.add_synthetic_thumbnail(smallest, target)
}

/// Reads `width`x`height` RGB pixels from the requested level.
pub fn read_region(s: &SlideSource, r: &RegionRequest) -> Result<Raster> {
    let oob = || Error::OutOfBounds {
        x: r.x,
        y: r.y,
        width: r.width,
        height: r.height,
        level: r.level,
    };
    let level = s.levels.get(r.level).ok_or_else(oob)?;
    let lx = (r.x as f64 / level.downsample).floor() as u64;
    let ly = (r.y as f64 / level.downsample).floor() as u64;
    if r.width == 0
        || r.height == 0
        || lx + r.width as u64 > level.width as u64
        || ly + r.height as u64 > level.height as u64
    {
        return Err(oob());
    }
    let (lx, ly) = (lx as u32, ly as u32);
    match &s.stores[r.level] {
        LevelStore::Memory(img) => Ok(imageops::crop_imm(img.as_ref(), lx, ly, r.width, r.height).to_image()),
        LevelStore::Tiff { ifd } => read_tiff_region(&s.path, *ifd, Rect::new(lx, ly, r.width, r.height)),
    }
}

fn read_tiff_region(path: &Path, ifd: usize, rect: Rect) -> Result<Raster> {
    let mut dec = Decoder::new(BufReader::new(File::open(path)?)).map_err(|e| corrupt(path, e))?;
    dec.seek_to_image(ifd).map_err(|e| corrupt(path, e))?;
    let (img_w, _) = dec.dimensions().map_err(|e| corrupt(path, e))?;
    let channels = match dec.colortype().map_err(|e| corrupt(path, e))? {
        ColorType::RGB(8) => 3usize,
        ColorType::RGBA(8) => 4,
        ColorType::Gray(8) => 1,
        other => return Err(Error::UnsupportedFormat(format!("TIFF color type {other:?}"))),
    };
    let (cw, ch) = dec.chunk_dimensions();
    let across = img_w.div_ceil(cw);
    let mut out = Raster::new(rect.w, rect.h);
    for cy in rect.y / ch..=(rect.bottom() - 1) / ch {
        for cx in rect.x / cw..=(rect.right() - 1) / cw {
            let index = cy * across + cx;
            let (dw, dh) = dec.chunk_data_dimensions(index);
            let data = match dec.read_chunk(index).map_err(|e| corrupt(path, e))? {
                DecodingResult::U8(v) => v,
                _ => return Err(Error::UnsupportedFormat("non 8-bit TIFF samples".into())),
            };
            let ox = cx * cw;
            let oy = cy * ch;
            let x0 = rect.x.max(ox);
            let x1 = rect.right().min(ox + dw);
            let y0 = rect.y.max(oy);
            let y1 = rect.bottom().min(oy + dh);
            for y in y0..y1 {
                for x in x0..x1 {
                    let i = (((y - oy) * dw + (x - ox)) as usize) * channels;
                    let px = match channels {
                        1 => [data[i]; 3],
                        _ => [data[i], data[i + 1], data[i + 2]],
                    };
                    out.put_pixel(x - rect.x, y - rect.y, image::Rgb(px));
                }
            }
        }
    }
    Ok(out)
}

/// Scales a mask-space point to slide space using the per-axis ratio between
/// the full-resolution and thumbnail dimensions.
pub fn map_to_slide(p: Point, s: &SlideSource) -> Point {
    let (w, h) = s.thumbnail_dims();
    let sx = s.width as f64 / w as f64;
    let sy = s.height as f64 / h as f64;
    Point::new((p.x as f64 * sx).round() as u32, (p.y as f64 * sy).round() as u32)
}

/// File name used for extracted patches: `<slide_id>_<x>_<y>_<w>x<h>.png`.
pub fn patch_file_name(slide_id: &str, rect: Rect) -> String {
    format!("{}_{}_{}_{}x{}.png", slide_id, rect.x, rect.y, rect.w, rect.h)
}

/// Writes an uncompressed, tiled, multi-level RGB TIFF. `levels[0]` is the
/// full-resolution image; each following entry one reduced level.
pub fn write_tiled_pyramid(path: &Path, levels: &[Raster], tile: u32) -> Result<()> {
    if levels.is_empty() || tile == 0 || tile % 16 != 0 {
        return Err(Error::Invalid("pyramid needs >= 1 level and a tile size multiple of 16".into()));
    }
    let tiff_err = |e: tiff::TiffError| Error::Invalid(format!("tiff encode: {e}"));
    let file = BufWriter::new(File::create(path)?);
    let mut enc = TiffEncoder::new(file).map_err(tiff_err)?;
    for (i, img) in levels.iter().enumerate() {
        let (w, h) = img.dimensions();
        let across = w.div_ceil(tile);
        let down = h.div_ceil(tile);
        let mut dir = enc.image_directory().map_err(tiff_err)?;
        let mut offsets = Vec::with_capacity((across * down) as usize);
        let mut counts = Vec::with_capacity((across * down) as usize);
        let mut buf = vec![0u8; (tile * tile * 3) as usize];
        for ty in 0..down {
            for tx in 0..across {
                buf.fill(0);
                for y in 0..tile {
                    for x in 0..tile {
                        let (gx, gy) = (tx * tile + x, ty * tile + y);
                        if gx < w && gy < h {
                            let p = img.get_pixel(gx, gy).0;
                            let o = ((y * tile + x) * 3) as usize;
                            buf[o..o + 3].copy_from_slice(&p);
                        }
                    }
                }
                let off = dir.write_data(&buf[..]).map_err(tiff_err)?;
                offsets.push(u32::try_from(off).map_err(|_| Error::Invalid("pyramid exceeds 4 GiB".into()))?);
                counts.push(buf.len() as u32);
            }
        }
        dir.write_tag(Tag::NewSubfileType, if i == 0 { 0u32 } else { 1u32 }).map_err(tiff_err)?;
        dir.write_tag(Tag::ImageWidth, w).map_err(tiff_err)?;
        dir.write_tag(Tag::ImageLength, h).map_err(tiff_err)?;
        dir.write_tag(Tag::BitsPerSample, &[8u16, 8, 8][..]).map_err(tiff_err)?;
        dir.write_tag(Tag::Compression, 1u16).map_err(tiff_err)?;
        dir.write_tag(Tag::PhotometricInterpretation, 2u16).map_err(tiff_err)?;
        dir.write_tag(Tag::SamplesPerPixel, 3u16).map_err(tiff_err)?;
        dir.write_tag(Tag::PlanarConfiguration, 1u16).map_err(tiff_err)?;
        dir.write_tag(Tag::TileWidth, tile).map_err(tiff_err)?;
        dir.write_tag(Tag::TileLength, tile).map_err(tiff_err)?;
        dir.write_tag(Tag::TileOffsets, &offsets[..]).map_err(tiff_err)?;
        dir.write_tag(Tag::TileByteCounts, &counts[..]).map_err(tiff_err)?;
        dir.finish().map_err(tiff_err)?;
    }
    Ok(())
}
