#![allow(dead_code)]

#[path = "../../../core/tests/support/mod.rs"]
pub mod support;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use histopatch::slide::write_tiled_pyramid;
use histopatch::Raster;
use image::imageops::{self, FilterType};
use image::Rgb;
use support::fixtures::{disc_slide, random_discs};

pub const SLIDE_W: u32 = 1024;
pub const SLIDE_H: u32 = 768;
pub const SLIDES: usize = 6;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_histopatch")
}

/// Runs the binary with `root` as the working directory.
pub fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(root)
        .env("HISTOPATCH_THREADS", "2")
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn slide_raster(i: usize) -> Raster {
    let discs = random_discs(SLIDE_W, SLIDE_H, 3, (110.0, 190.0), 40 + i as u64);
    disc_slide(SLIDE_W, SLIDE_H, &discs, 40 + i as u64)
}

/// Six slides `s0..s5` (four PNG, two tiled TIFF pyramids) under
/// `root/slides`, plus `root/labels.csv` alternating labels A and B.
pub fn write_fixture(root: &Path) {
    let slides = root.join("slides");
    fs::create_dir_all(&slides).unwrap();
    let mut labels = String::from("slide_id,label,patient_id\n");
    for i in 0..SLIDES {
        let img = slide_raster(i);
        if i >= 4 {
            let levels: Vec<Raster> = [1u32, 2, 4]
                .iter()
                .map(|&f| imageops::resize(&img, SLIDE_W / f, SLIDE_H / f, FilterType::Triangle))
                .collect();
            write_tiled_pyramid(&slides.join(format!("s{i}.tiff")), &levels, 128).unwrap();
        } else {
            img.save(slides.join(format!("s{i}.png"))).unwrap();
        }
        let label = if i % 2 == 0 { "A" } else { "B" };
        labels.push_str(&format!("s{i},{label},p{i}\n"));
    }
    fs::write(root.join("labels.csv"), labels).unwrap();
}

pub fn write_blank(root: &Path) {
    Raster::from_pixel(SLIDE_W, SLIDE_H, Rgb([244, 244, 246]))
        .save(root.join("slides").join("blank.png"))
        .unwrap();
}

/// Model init, fps, extract, embed, both searches and the probe, all with
/// paths relative to `root`. Returns each step's output.
pub fn run_pipeline(root: &Path) -> Vec<(String, Output)> {
    let steps: [&[&str]; 7] = [
        &["init-weights", "--out", "model/model.json", "--seed", "7"],
        &["fps", "--input", "slides", "--out", "plans", "--n-patches", "4", "--patch-size", "128", "--seed", "7"],
        &["extract", "--input", "slides", "--plans", "plans", "--out", "patches"],
        &[
            "embed", "--weights", "model/model.json", "--plans", "plans", "--patches", "patches", "--labels",
            "labels.csv", "--out", "emb",
        ],
        &["search", "--store", "emb", "--level", "patch", "--k", "5", "--report", "search_patch.json"],
        &["search", "--store", "emb", "--level", "wsi", "--k", "3", "--report", "search_wsi.json"],
        &["probe", "--store", "emb", "--epochs", "100", "--report", "probe.json"],
    ];
    let mut outs = Vec::new();
    for args in steps {
        let out = run(root, args);
        let ok = out.status.success();
        outs.push((args[0].to_string(), out));
        if !ok {
            break;
        }
    }
    outs
}

/// Every file under `root`, relative path to bytes, with timing fields
/// removed from run reports.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let mut bytes = fs::read(&path).unwrap();
            if path.file_name().is_some_and(|n| n == "report.json") {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                strip_timings(&mut v);
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.insert(path.strip_prefix(root).unwrap().to_path_buf(), bytes);
        }
    }
    out
}

fn strip_timings(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            for key in ["seconds", "wall_seconds", "minutes_per_slide"] {
                map.remove(key);
            }
            map.values_mut().for_each(strip_timings);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}
